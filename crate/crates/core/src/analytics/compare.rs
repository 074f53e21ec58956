use std::collections::BTreeMap;

use serde::Serialize;

use super::{cov, paired_ttest, AnalyticsError, TTestResult};
use crate::oam::OamScore;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaCell {
    pub speaker_id: String,
    pub consonant: String,
    pub gamma: f64,
    pub instances: usize,
}

/// Coefficient of variation of every (speaker, consonant) cell, sorted by
/// speaker then consonant.
pub fn gamma_table(scores: &[OamScore]) -> Result<Vec<GammaCell>, AnalyticsError> {
    let mut cells: BTreeMap<(&str, &str), Vec<f64>> = BTreeMap::new();
    for s in scores {
        cells
            .entry((s.speaker_id.as_str(), s.consonant.as_str()))
            .or_default()
            .push(s.value);
    }
    cells
        .into_iter()
        .map(|((speaker, consonant), values)| {
            Ok(GammaCell {
                speaker_id: speaker.to_string(),
                consonant: consonant.to_string(),
                gamma: cov(&values)?,
                instances: values.len(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchedCell {
    pub speaker_id: String,
    pub consonant: String,
    pub gamma_a: f64,
    pub gamma_b: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovComparison {
    pub cells: Vec<MatchedCell>,
    /// Paired test of `gamma_a - gamma_b` over the matched cells.
    pub ttest: TTestResult,
}

/// Match the gamma cells of two score tables and test the paired difference.
pub fn cov_compare(a: &[OamScore], b: &[OamScore]) -> Result<CovComparison, AnalyticsError> {
    let table_b: BTreeMap<(String, String), f64> = gamma_table(b)?
        .into_iter()
        .map(|c| ((c.speaker_id, c.consonant), c.gamma))
        .collect();
    let cells: Vec<MatchedCell> = gamma_table(a)?
        .into_iter()
        .filter_map(|c| {
            let gamma_b = *table_b.get(&(c.speaker_id.clone(), c.consonant.clone()))?;
            Some(MatchedCell {
                speaker_id: c.speaker_id,
                consonant: c.consonant,
                gamma_a: c.gamma,
                gamma_b,
            })
        })
        .collect();
    if cells.is_empty() {
        return Err(AnalyticsError::NoOverlap);
    }
    let ga: Vec<f64> = cells.iter().map(|c| c.gamma_a).collect();
    let gb: Vec<f64> = cells.iter().map(|c| c.gamma_b).collect();
    let ttest = paired_ttest(&ga, &gb)?;
    Ok(CovComparison { cells, ttest })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(speaker: &str, consonant: &str, value: f64) -> OamScore {
        OamScore {
            utterance_id: "u".into(),
            speaker_id: speaker.into(),
            consonant: consonant.into(),
            onset_s: 0.0,
            value,
            predicted: consonant.into(),
        }
    }

    fn table() -> Vec<OamScore> {
        vec![
            s("a", "P", 0.4),
            s("a", "P", 0.6),
            s("a", "T", 0.5),
            s("a", "T", 0.7),
            s("b", "P", 0.3),
            s("b", "P", 0.5),
            s("b", "P", 0.55),
        ]
    }

    #[test]
    fn identical_tables_give_zero_t() {
        let c = cov_compare(&table(), &table()).unwrap();
        assert_eq!(c.cells.len(), 3);
        assert_eq!(c.ttest.t, 0.0);
    }

    #[test]
    fn doubled_spread_doubles_gamma() {
        let a = table();
        let mut means: BTreeMap<(String, String), (f64, usize)> = BTreeMap::new();
        for x in &a {
            let e = means
                .entry((x.speaker_id.clone(), x.consonant.clone()))
                .or_default();
            e.0 += x.value;
            e.1 += 1;
        }
        let b: Vec<OamScore> = a
            .iter()
            .map(|x| {
                let (sum, n) = means[&(x.speaker_id.clone(), x.consonant.clone())];
                let mu = sum / n as f64;
                s(&x.speaker_id, &x.consonant, mu + 2.0 * (x.value - mu))
            })
            .collect();
        let c = cov_compare(&a, &b).unwrap();
        for cell in &c.cells {
            assert!((cell.gamma_b - 2.0 * cell.gamma_a).abs() < 1e-12);
        }
    }

    #[test]
    fn disjoint_tables() {
        let b = vec![s("z", "K", 0.5)];
        assert_eq!(cov_compare(&table(), &b), Err(AnalyticsError::NoOverlap));
    }
}
