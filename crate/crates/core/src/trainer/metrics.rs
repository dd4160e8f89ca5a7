use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::generator::EOS;

pub fn iou(predicted: &BTreeSet<usize>, truth: &BTreeSet<usize>) -> f64 {
    let union = predicted.union(truth).count();
    if union == 0 {
        return 1.0;
    }
    predicted.intersection(truth).count() as f64 / union as f64
}

pub fn exact_match(predicted: &BTreeSet<usize>, truth: &BTreeSet<usize>) -> bool {
    predicted == truth
}

/// One evaluated feature instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub model_id: String,
    pub feature_type: String,
    pub truth: BTreeSet<usize>,
    pub predicted: BTreeSet<usize>,
    pub raw_sequence: Vec<usize>,
}

impl SampleOutcome {
    pub fn iou(&self) -> f64 {
        iou(&self.predicted, &self.truth)
    }

    pub fn exact(&self) -> bool {
        exact_match(&self.predicted, &self.truth)
    }

    /// Emitted order equals the canonical order (seed, then ascending ids).
    pub fn ordered_match(&self) -> bool {
        let emitted: Vec<usize> = self.raw_sequence.iter().copied().filter(|&j| j != EOS).collect();
        let canonical: Vec<usize> = self.truth.iter().copied().collect();
        emitted == canonical
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TypeMetrics {
    pub samples: usize,
    pub iou_mean: f64,
    pub em_rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub samples: usize,
    pub iou_mean: f64,
    /// Set equality rate.
    pub em_rate: f64,
    pub ordered_match_rate: f64,
    /// Generated set has the right size (EOS placed correctly).
    pub length_match_rate: f64,
    pub per_type: BTreeMap<String, TypeMetrics>,
    #[serde(default)]
    pub loss_curve: Vec<f64>,
    #[serde(default)]
    pub val_iou_curve: Vec<f64>,
}

impl MetricsReport {
    pub fn from_outcomes(outcomes: &[SampleOutcome]) -> Self {
        let n = outcomes.len();
        let mean = |f: &dyn Fn(&SampleOutcome) -> f64| {
            if n == 0 {
                0.0
            } else {
                outcomes.iter().map(f).sum::<f64>() / n as f64
            }
        };
        let mut groups: BTreeMap<String, Vec<&SampleOutcome>> = BTreeMap::new();
        for o in outcomes {
            groups.entry(o.feature_type.clone()).or_default().push(o);
        }
        let per_type = groups
            .into_iter()
            .map(|(k, v)| {
                let c = v.len() as f64;
                let m = TypeMetrics {
                    samples: v.len(),
                    iou_mean: v.iter().map(|o| o.iou()).sum::<f64>() / c,
                    em_rate: v.iter().filter(|o| o.exact()).count() as f64 / c,
                };
                (k, m)
            })
            .collect();
        Self {
            samples: n,
            iou_mean: mean(&|o| o.iou()),
            em_rate: mean(&|o| o.exact() as u8 as f64),
            ordered_match_rate: mean(&|o| o.ordered_match() as u8 as f64),
            length_match_rate: mean(&|o| (o.predicted.len() == o.truth.len()) as u8 as f64),
            per_type,
            loss_curve: Vec::new(),
            val_iou_curve: Vec::new(),
        }
    }
}
