use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{pearson, AnalyticsError, CorrelationResult};
use crate::corpus::PhoneInventory;
use crate::oam::SpeakerReport;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    /// Stop when the best candidate improves the criterion by less than this.
    pub min_improvement: f64,
    pub max_features: usize,
    /// Added to the diagonal of the normal equations.
    pub ridge: f64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            min_improvement: 1e-3,
            max_features: 10,
            ridge: 1e-6,
        }
    }
}

impl SelectionConfig {
    fn validate(&self) -> Result<(), AnalyticsError> {
        if !(self.min_improvement >= 0.0) || !(self.ridge >= 0.0) || self.max_features == 0 {
            return Err(AnalyticsError::InvalidConfig(
                "threshold and ridge must be non-negative, feature cap positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SelectionStep {
    pub feature: usize,
    /// Inner leave-one-out Pearson r after adding `feature`.
    pub criterion: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub selected: Vec<usize>,
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub trace: Vec<SelectionStep>,
    /// Training-row column means used to fill missing cells.
    pub column_means: Vec<f64>,
    /// True when the final design matrix was rank deficient (the ridge term
    /// keeps the solve defined).
    pub rank_deficient: bool,
}

impl LinearModel {
    pub fn predict(&self, row: &[Option<f64>]) -> f64 {
        self.selected
            .iter()
            .zip(&self.weights)
            .map(|(&f, w)| w * row[f].unwrap_or(self.column_means[f]))
            .sum::<f64>()
            + self.intercept
    }
}

/// Speakers-by-consonants matrix of consonant-level means (missing cells are
/// `None`), with the speaker ids in report order.
pub fn consonant_matrix(
    reports: &[SpeakerReport],
    inventory: &PhoneInventory,
) -> (Vec<String>, Vec<Vec<Option<f64>>>) {
    let ids = reports.iter().map(|r| r.speaker_id.clone()).collect();
    let rows = reports
        .iter()
        .map(|r| {
            inventory
                .consonants()
                .iter()
                .map(|c| r.consonants.get(c).map(|s| s.mean))
                .collect()
        })
        .collect();
    (ids, rows)
}

fn column_means(features: &[Vec<Option<f64>>], n_cols: usize) -> Vec<f64> {
    (0..n_cols)
        .map(|j| {
            let present: Vec<f64> = features.iter().filter_map(|r| r[j]).collect();
            if present.is_empty() {
                0.0
            } else {
                present.iter().sum::<f64>() / present.len() as f64
            }
        })
        .collect()
}

/// Ridge-damped least squares with an intercept. Returns
/// `(intercept, weights, rank_deficient)`.
fn solve_ols(
    x: &[Vec<f64>],
    rows: &[usize],
    cols: &[usize],
    y: &[f64],
    ridge: f64,
) -> (f64, Vec<f64>, bool) {
    let p = cols.len() + 1;
    let design = DMatrix::from_fn(rows.len(), p, |i, j| {
        if j == 0 {
            1.0
        } else {
            x[rows[i]][cols[j - 1]]
        }
    });
    let target = DVector::from_iterator(rows.len(), rows.iter().map(|&i| y[i]));
    let mut normal = design.transpose() * &design;
    let rhs = design.transpose() * target;
    let sv = normal.singular_values();
    let max_sv = sv.max();
    let rank_deficient = sv.min() <= max_sv * 1e-12 || rows.len() < p;
    for d in 0..p {
        normal[(d, d)] += ridge;
    }
    let beta = match normal.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => normal.lu().solve(&rhs).unwrap_or_else(|| DVector::zeros(p)),
    };
    (
        beta[0],
        beta.iter().skip(1).copied().collect(),
        rank_deficient,
    )
}

/// Leave-one-out Pearson r of predictions from `cols` over `rows`.
fn inner_loo_r(x: &[Vec<f64>], rows: &[usize], cols: &[usize], y: &[f64], ridge: f64) -> f64 {
    let predictions: Vec<f64> = rows
        .iter()
        .map(|&held| {
            let train: Vec<usize> = rows.iter().copied().filter(|&r| r != held).collect();
            let (b0, w, _) = solve_ols(x, &train, cols, y, ridge);
            b0 + cols
                .iter()
                .zip(&w)
                .map(|(&c, wi)| wi * x[held][c])
                .sum::<f64>()
        })
        .collect();
    let truth: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
    pearson(&predictions, &truth).map_or(f64::NEG_INFINITY, |c| c.r)
}

/// Greedy forward selection on the inner leave-one-out Pearson r, then a
/// ridge-damped least-squares fit on the selected features.
pub fn fit_forward_linear(
    features: &[Vec<Option<f64>>],
    ratings: &[f64],
    config: &SelectionConfig,
) -> Result<LinearModel, AnalyticsError> {
    config.validate()?;
    if features.len() != ratings.len() {
        return Err(AnalyticsError::LengthMismatch(
            features.len(),
            ratings.len(),
        ));
    }
    let n = features.len();
    if n < 4 {
        return Err(AnalyticsError::TooFewSamples { needed: 4, got: n });
    }
    let n_cols = features[0].len();
    if let Some(bad) = features.iter().find(|r| r.len() != n_cols) {
        return Err(AnalyticsError::LengthMismatch(bad.len(), n_cols));
    }
    if ratings.iter().any(|v| !v.is_finite())
        || features.iter().flatten().flatten().any(|v| !v.is_finite())
    {
        return Err(AnalyticsError::NonFinite);
    }
    let means = column_means(features, n_cols);
    let x: Vec<Vec<f64>> = features
        .iter()
        .map(|r| r.iter().zip(&means).map(|(v, m)| v.unwrap_or(*m)).collect())
        .collect();
    let rows: Vec<usize> = (0..n).collect();

    let mut selected: Vec<usize> = Vec::new();
    let mut trace = Vec::new();
    // An intercept-only model carries no correlation with the ratings.
    let mut best = 0.0;
    while selected.len() < config.max_features.min(n_cols) {
        let mut step: Option<SelectionStep> = None;
        for f in (0..n_cols).filter(|f| !selected.contains(f)) {
            let mut cols = selected.clone();
            cols.push(f);
            let criterion = inner_loo_r(&x, &rows, &cols, ratings, config.ridge);
            if step.is_none_or(|s| criterion > s.criterion) {
                step = Some(SelectionStep {
                    feature: f,
                    criterion,
                });
            }
        }
        match step {
            Some(s) if s.criterion - best >= config.min_improvement => {
                best = s.criterion;
                selected.push(s.feature);
                trace.push(s);
            }
            _ => break,
        }
    }
    let (intercept, weights, rank_deficient) =
        solve_ols(&x, &rows, &selected, ratings, config.ridge);
    Ok(LinearModel {
        selected,
        weights,
        intercept,
        trace,
        column_means: means,
        rank_deficient,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LosoResult {
    /// Held-out prediction for every row, in input order.
    pub predictions: Vec<f64>,
    /// Features selected in each fold.
    pub selected: Vec<Vec<usize>>,
    pub correlation: CorrelationResult,
}

/// Leave-one-speaker-out: each row is predicted by a model fitted (selection
/// included) on all other rows.
pub fn loso_evaluate(
    features: &[Vec<Option<f64>>],
    ratings: &[f64],
    config: &SelectionConfig,
) -> Result<LosoResult, AnalyticsError> {
    if features.len() != ratings.len() {
        return Err(AnalyticsError::LengthMismatch(
            features.len(),
            ratings.len(),
        ));
    }
    let n = features.len();
    if n < 5 {
        return Err(AnalyticsError::TooFewSamples { needed: 5, got: n });
    }
    let folds: Vec<Result<(f64, Vec<usize>), AnalyticsError>> = (0..n)
        .into_par_iter()
        .map(|held| {
            let train_x: Vec<Vec<Option<f64>>> = (0..n)
                .filter(|&i| i != held)
                .map(|i| features[i].clone())
                .collect();
            let train_y: Vec<f64> = (0..n).filter(|&i| i != held).map(|i| ratings[i]).collect();
            let model = fit_forward_linear(&train_x, &train_y, config)?;
            Ok((model.predict(&features[held]), model.selected))
        })
        .collect();
    let mut predictions = Vec::with_capacity(n);
    let mut selected = Vec::with_capacity(n);
    for fold in folds {
        let (p, s) = fold?;
        predictions.push(p);
        selected.push(s);
    }
    let correlation = pearson(&predictions, ratings)?;
    Ok(LosoResult {
        predictions,
        selected,
        correlation,
    })
}
