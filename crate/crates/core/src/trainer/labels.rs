use std::collections::BTreeSet;

use rand::seq::IteratorRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::EOS;

/// Fixed-length target `[SOS, y_1, ..., EOS, 0, ...]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSequence {
    pub tokens: Vec<usize>,
    /// Number of predicted positions: remaining members plus EOS.
    pub valid_length: usize,
}

impl LabelSequence {
    /// `[SOS, y_1, ..., EOS]` without padding.
    pub fn sequence(&self) -> &[usize] {
        &self.tokens[..=self.valid_length]
    }

    pub fn seed(&self) -> usize {
        self.tokens[0]
    }

    /// Predicted targets, one per valid position.
    pub fn targets(&self) -> &[usize] {
        &self.tokens[1..=self.valid_length]
    }
}

/// Label length for a dataset whose largest feature has `max_feature_size` faces.
pub fn label_length(max_feature_size: usize) -> usize {
    max_feature_size + 2
}

/// Training labels: SOS drawn uniformly from the feature.
pub fn build_labels(
    face_ids: &BTreeSet<usize>,
    n_faces: usize,
    length: usize,
    rng: &mut impl Rng,
) -> Result<LabelSequence> {
    let sos = *face_ids
        .iter()
        .choose(rng)
        .ok_or_else(|| Error::InvalidArgument("feature has no faces".into()))?;
    labels_with_seed(face_ids, sos, n_faces, length)
}

/// Evaluation labels: SOS is the lowest face id.
pub fn eval_labels(face_ids: &BTreeSet<usize>, n_faces: usize, length: usize) -> Result<LabelSequence> {
    let sos = *face_ids
        .first()
        .ok_or_else(|| Error::InvalidArgument("feature has no faces".into()))?;
    labels_with_seed(face_ids, sos, n_faces, length)
}

pub fn labels_with_seed(
    face_ids: &BTreeSet<usize>,
    sos: usize,
    n_faces: usize,
    length: usize,
) -> Result<LabelSequence> {
    if face_ids.is_empty() {
        return Err(Error::InvalidArgument("feature has no faces".into()));
    }
    if !face_ids.contains(&sos) {
        return Err(Error::InvalidArgument(format!(
            "SOS {sos} is not a member of the feature"
        )));
    }
    if let Some(&bad) = face_ids.iter().find(|&&id| id == 0 || id > n_faces) {
        return Err(Error::InvalidArgument(format!("face id {bad} outside 1..={n_faces}")));
    }
    if face_ids.len() + 1 > length {
        return Err(Error::InvalidArgument(format!(
            "feature of {} faces does not fit label length {length}",
            face_ids.len()
        )));
    }
    let mut tokens = Vec::with_capacity(length);
    tokens.push(sos);
    tokens.extend(face_ids.iter().copied().filter(|&id| id != sos));
    tokens.push(EOS);
    let valid_length = tokens.len() - 1;
    tokens.resize(length, 0);
    Ok(LabelSequence { tokens, valid_length })
}
