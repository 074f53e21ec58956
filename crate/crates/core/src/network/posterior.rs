use super::{NetworkError, Real};

/// Floor applied to probabilities inside the log of the loss.
pub const PROB_FLOOR: f64 = 1e-12;

/// Softmax output over the consonant inventory.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorVector {
    probs: Vec<f64>,
}

impl PosteriorVector {
    /// Max-subtracted softmax, computed in f64. Entries are kept strictly
    /// positive even when the logits saturate.
    pub fn from_logits<T: Real>(logits: &[T]) -> Self {
        let z: Vec<f64> = logits.iter().map(|v| v.to_f64_lossy()).collect();
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let probs = exps
            .into_iter()
            .map(|e| (e / total).max(f64::MIN_POSITIVE))
            .collect();
        PosteriorVector { probs }
    }

    /// Wrap an existing probability vector (entries must be positive and sum to 1).
    pub fn from_probs(probs: Vec<f64>) -> Result<Self, NetworkError> {
        let total: f64 = probs.iter().sum();
        if probs.is_empty() || probs.iter().any(|p| !(*p > 0.0)) || (total - 1.0).abs() > 1e-6 {
            return Err(NetworkError::ShapeMismatch(
                "posterior must be a non-empty positive vector summing to 1".into(),
            ));
        }
        Ok(PosteriorVector { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.probs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Index of the largest entry; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

pub fn one_hot(label: usize, classes: usize) -> Vec<f64> {
    let mut y = vec![0.0; classes];
    y[label] = 1.0;
    y
}

/// Categorical cross-entropy summed over the batch.
pub fn batch_loss(posteriors: &[PosteriorVector], labels: &[usize]) -> Result<f64, NetworkError> {
    if posteriors.len() != labels.len() {
        return Err(NetworkError::ShapeMismatch(format!(
            "{} posteriors for {} labels",
            posteriors.len(),
            labels.len()
        )));
    }
    let mut loss = 0.0;
    for (p, &y) in posteriors.iter().zip(labels) {
        let prob = *p.probs().get(y).ok_or(NetworkError::InvalidClass {
            index: y,
            classes: p.len(),
        })?;
        loss -= prob.max(PROB_FLOOR).ln();
    }
    Ok(loss)
}

/// Gradient of the summed loss w.r.t. the logits: `p - y` per sample.
pub(crate) fn logit_gradient<T: Real>(posteriors: &[PosteriorVector], labels: &[usize]) -> Vec<T> {
    let mut out = Vec::with_capacity(posteriors.iter().map(PosteriorVector::len).sum());
    for (p, &y) in posteriors.iter().zip(labels) {
        for (j, &pj) in p.probs().iter().enumerate() {
            let g = if j == y { pj - 1.0 } else { pj };
            out.push(T::from_f64_lossy(g));
        }
    }
    out
}
