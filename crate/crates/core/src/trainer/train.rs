use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tracing::info;

use super::labels::{build_labels, label_length};
use super::loss::position_weights;
use super::metrics::{MetricsReport, SampleOutcome};
use crate::encoder::EncoderInput;
use crate::error::{Error, Result};
use crate::feature::{FeatureTerm, FeatureType};
use crate::geometry::{normalize_model, MeshModel};
use crate::model::{ModelConfig, SdmModel};
use crate::nn::{Adam, Graph, Mat};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub alpha: f64,
    pub seed: u64,
    /// Validation evaluations without improvement before stopping.
    pub patience: usize,
    /// Probability of conditioning on the generic family name instead of
    /// the specific type.
    pub family_prob: f64,
    pub grad_clip: f64,
    /// Stop as soon as validation exact-match reaches this rate.
    pub stop_at_em: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            epochs: 200,
            learning_rate: 1e-4,
            alpha: 5.0,
            seed: 0,
            patience: 10,
            family_prob: 0.2,
            grad_clip: 1.0,
            stop_at_em: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be at least 1".into()));
        }
        if self.alpha < 1.0 {
            return Err(Error::InvalidArgument("alpha must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PreparedFeature {
    pub feature_type: FeatureType,
    pub face_ids: BTreeSet<usize>,
}

/// A normalized, tokenized model with its resolved labels.
#[derive(Debug, Clone)]
pub struct PreparedModel {
    pub model_id: String,
    pub faces: usize,
    pub input: EncoderInput,
    pub features: Vec<PreparedFeature>,
}

impl PreparedModel {
    pub fn new(model: &MeshModel) -> Result<Self> {
        let (normalized, _) = normalize_model(model)?;
        let features = model
            .labels
            .iter()
            .map(|l| match FeatureTerm::parse(&l.feature_type)? {
                FeatureTerm::Specific(t) => Ok(PreparedFeature {
                    feature_type: t,
                    face_ids: l.face_ids.clone(),
                }),
                FeatureTerm::Family(_) => Err(Error::Validation(format!(
                    "label type {} must name a specific feature",
                    l.feature_type
                ))),
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            model_id: model.model_id.clone(),
            faces: model.face_count(),
            input: EncoderInput::from_model(&normalized)?,
            features,
        })
    }
}

pub fn prepare_models(models: &[MeshModel]) -> Result<Vec<PreparedModel>> {
    models.iter().map(PreparedModel::new).collect()
}

/// Splits `items` by `fractions`, stratified by `key` and deterministic in `seed`.
pub fn stratified_split<T>(items: Vec<T>, key: impl Fn(&T) -> String, fractions: &[f64], seed: u64) -> Vec<Vec<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut strata: BTreeMap<String, Vec<T>> = BTreeMap::new();
    for it in items {
        strata.entry(key(&it)).or_default().push(it);
    }
    let total: f64 = fractions.iter().sum();
    let mut out: Vec<Vec<T>> = fractions.iter().map(|_| Vec::new()).collect();
    for (_, mut group) in strata {
        group.shuffle(&mut rng);
        let n = group.len();
        let mut bounds = Vec::with_capacity(fractions.len());
        let mut acc = 0.0;
        for f in fractions {
            acc += f;
            bounds.push(((acc / total) * n as f64).round() as usize);
        }
        let mut start = 0;
        let mut drain = group.into_iter();
        for (k, &end) in bounds.iter().enumerate() {
            out[k].extend(drain.by_ref().take(end.saturating_sub(start)));
            start = end.max(start);
        }
    }
    out
}

/// Stratification key: the first labeled feature type.
pub fn primary_type(model: &MeshModel) -> String {
    model
        .labels
        .first()
        .map_or_else(String::new, |l| l.feature_type.clone())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_iou: f64,
    pub val_em: f64,
    pub seconds: f64,
}

pub struct TrainOutcome {
    pub model: SdmModel,
    /// Validation metrics of the returned (best) weights.
    pub report: MetricsReport,
    pub history: Vec<EpochLog>,
    pub best_epoch: usize,
}

fn max_feature_size(data: &[PreparedModel]) -> usize {
    data.iter()
        .flat_map(|m| m.features.iter().map(|f| f.face_ids.len()))
        .max()
        .unwrap_or(1)
}

/// Teacher-forced training with early stopping on validation IoU.
pub fn train(
    train_set: &[PreparedModel],
    val_set: &[PreparedModel],
    tc: &TrainConfig,
    mc: ModelConfig,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    tc.validate()?;
    if train_set.iter().all(|m| m.features.is_empty()) {
        return Err(Error::InvalidArgument("training set has no labeled features".into()));
    }
    let train_ids: BTreeSet<&str> = train_set.iter().map(|m| m.model_id.as_str()).collect();
    let same_set = std::ptr::eq(train_set, val_set);
    if !same_set && val_set.iter().any(|m| train_ids.contains(m.model_id.as_str())) {
        return Err(Error::InvalidArgument(
            "train and validation sets share model ids".into(),
        ));
    }
    let length = label_length(max_feature_size(train_set).max(max_feature_size(val_set)));

    let mut model = SdmModel::new(mc, tc.seed)?;
    let mut adam = Adam::new(&model.store, tc.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed ^ 0x5eed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let mut best: Option<(f64, usize, crate::nn::ParamStore, MetricsReport)> = None;
    let mut history = Vec::new();
    let mut since_best = 0;
    let mut loss_curve = Vec::new();
    let mut val_curve = Vec::new();

    for epoch in 1..=tc.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        let mut cursor = 0;
        while cursor < order.len() {
            let mut batch = Vec::new();
            let mut count = 0;
            while cursor < order.len() && count < tc.batch_size {
                let m = &train_set[order[cursor]];
                count += m.features.len();
                batch.push(m);
                cursor += 1;
            }
            if count == 0 {
                continue;
            }
            let loss = train_step(&mut model, &mut adam, &batch, tc, length, &mut rng)?;
            epoch_loss += loss;
            batches += 1;
        }
        let train_loss = epoch_loss / batches.max(1) as f64;
        loss_curve.push(train_loss);

        let report = evaluate(&model, val_set)?;
        val_curve.push(report.iou_mean);
        let log = EpochLog {
            epoch,
            train_loss,
            val_iou: report.iou_mean,
            val_em: report.em_rate,
            seconds: started.elapsed().as_secs_f64(),
        };
        info!(epoch, train_loss, val_iou = log.val_iou, val_em = log.val_em, "epoch");
        on_epoch(&log);
        history.push(log);

        let improved = best.as_ref().is_none_or(|(b, _, _, _)| report.iou_mean > *b + 1e-12);
        let reached = tc.stop_at_em.is_some_and(|t| report.em_rate >= t);
        if improved {
            best = Some((report.iou_mean, epoch, model.store.clone(), report));
            since_best = 0;
        } else {
            since_best += 1;
        }
        if reached || since_best >= tc.patience {
            break;
        }
    }

    let (_, best_epoch, store, mut report) = best.expect("at least one epoch ran");
    model.store = store;
    report.loss_curve = loss_curve;
    report.val_iou_curve = val_curve;
    Ok(TrainOutcome {
        model,
        report,
        history,
        best_epoch,
    })
}

fn train_step(
    model: &mut SdmModel,
    adam: &mut Adam,
    batch: &[&PreparedModel],
    tc: &TrainConfig,
    length: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    // Draw labels and conditions first so the tape borrows the store cleanly.
    let mut plans = Vec::new();
    let mut total_valid = 0;
    for m in batch {
        let mut feats = Vec::new();
        for f in &m.features {
            let labels = build_labels(&f.face_ids, m.faces, length, rng)?;
            total_valid += labels.valid_length;
            let term = match f.feature_type.family() {
                Some(fam) if rng.gen::<f64>() < tc.family_prob => FeatureTerm::Family(fam),
                _ => FeatureTerm::Specific(f.feature_type),
            };
            feats.push((labels, term));
        }
        plans.push(feats);
    }
    let dropout_rng = ChaCha8Rng::seed_from_u64(rng.gen());

    let grads = {
        let mut g = Graph::training(&model.store, dropout_rng);
        let mut terms = Vec::new();
        for (m, feats) in batch.iter().zip(&plans) {
            if feats.is_empty() {
                continue;
            }
            let ef = model.encoder.encode(&mut g, &m.input);
            let memory = model.generator.memory(&mut g, ef);
            for (labels, term) in feats {
                let es = model.text.embed(&mut g, *term);
                let fusion = model.generator.fuse(&mut g, es, memory);
                let probs = model
                    .generator
                    .teacher_forced(&mut g, memory, fusion, labels.sequence());
                let weights: Vec<f64> = position_weights(labels, labels.valid_length, tc.alpha)
                    .into_iter()
                    .map(|w| w / total_valid as f64)
                    .collect();
                terms.push(g.bce_one_hot(probs, labels.targets().to_vec(), weights));
            }
        }
        let mut loss = terms[0];
        for &t in &terms[1..] {
            loss = g.add(loss, t);
        }
        let value = g.scalar(loss);
        if !value.is_finite() {
            return Err(Error::Diverged(format!("training loss became {value}")));
        }
        let mut grads = g.backward(loss);
        if !grads.all_finite() {
            return Err(Error::Diverged("non-finite gradient".into()));
        }
        grads.clip(tc.grad_clip);
        (grads, value)
    };
    adam.update(&mut model.store, &grads.0);
    Ok(grads.1)
}

/// Generates every labeled feature from its lowest face id.
pub fn evaluate(model: &SdmModel, data: &[PreparedModel]) -> Result<MetricsReport> {
    Ok(MetricsReport::from_outcomes(&evaluate_outcomes(model, data)?))
}

pub fn evaluate_outcomes(model: &SdmModel, data: &[PreparedModel]) -> Result<Vec<SampleOutcome>> {
    let mut outcomes = Vec::new();
    for m in data {
        if m.features.is_empty() {
            continue;
        }
        let ef = {
            let mut g = Graph::new(&model.store);
            let v = model.encoder.encode(&mut g, &m.input);
            g.value(v).clone()
        };
        for f in &m.features {
            let es = Mat::row_vector(&model.text.lookup(&model.store, FeatureTerm::Specific(f.feature_type)));
            let seed = *f.face_ids.first().expect("non-empty feature");
            let r = model.generator.generate(&model.store, &es, &ef, seed)?;
            outcomes.push(SampleOutcome {
                model_id: m.model_id.clone(),
                feature_type: f.feature_type.name().to_string(),
                truth: f.face_ids.clone(),
                predicted: r.face_ids,
                raw_sequence: r.raw_sequence,
            });
        }
    }
    Ok(outcomes)
}
