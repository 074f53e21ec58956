use serde::Serialize;
use statrs::function::beta::beta_reg;

use super::AnalyticsError;

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Standard deviation with the `1/N` normaliser.
pub fn population_sd(values: &[f64]) -> f64 {
    let m = mean(values);
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64).sqrt()
}

/// Coefficient of variation `sigma / |mu|` with the population sd.
pub fn cov(values: &[f64]) -> Result<f64, AnalyticsError> {
    if values.is_empty() {
        return Err(AnalyticsError::TooFewSamples { needed: 1, got: 0 });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(AnalyticsError::NonFinite);
    }
    let m = mean(values);
    if m == 0.0 {
        return Err(AnalyticsError::ZeroMean);
    }
    Ok(population_sd(values) / m.abs())
}

/// Two-sided p-value of a Student t statistic.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    beta_reg(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationResult {
    pub r: f64,
    pub n: usize,
    pub t_stat: f64,
    pub p_value: f64,
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<CorrelationResult, AnalyticsError> {
    if x.len() != y.len() {
        return Err(AnalyticsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 3 {
        return Err(AnalyticsError::TooFewSamples { needed: 3, got: n });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(AnalyticsError::NonFinite);
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(AnalyticsError::ConstantInput);
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let t_stat = if r.abs() == 1.0 {
        r * f64::INFINITY
    } else {
        r * (df / (1.0 - r * r)).sqrt()
    };
    Ok(CorrelationResult {
        r,
        n,
        t_stat,
        p_value: t_two_sided_p(t_stat, df),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TTestResult {
    pub t: f64,
    pub df: usize,
    pub p: f64,
}

/// Paired t-test on `a - b` with the sample (`n - 1`) standard deviation.
/// All-zero differences give `t = 0, p = 1`.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<TTestResult, AnalyticsError> {
    if a.len() != b.len() {
        return Err(AnalyticsError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Err(AnalyticsError::TooFewSamples { needed: 2, got: n });
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(AnalyticsError::NonFinite);
    }
    let df = n - 1;
    if d.iter().all(|&v| v == 0.0) {
        return Ok(TTestResult { t: 0.0, df, p: 1.0 });
    }
    let m = mean(&d);
    let var = d.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / df as f64;
    if var == 0.0 {
        return Err(AnalyticsError::DegenerateInput);
    }
    let t = m / (var.sqrt() / (n as f64).sqrt());
    Ok(TTestResult {
        t,
        df,
        p: t_two_sided_p(t, df as f64),
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn cov_examples() {
        assert_eq!(cov(&[0.5, 0.5]).unwrap(), 0.0);
        assert!((cov(&[0.2, 0.4]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(cov(&[1.0, -1.0]), Err(AnalyticsError::ZeroMean));
        assert!(matches!(
            cov(&[]),
            Err(AnalyticsError::TooFewSamples { .. })
        ));
    }

    #[test]
    fn pearson_perfect() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let r = pearson(&x, &y).unwrap();
        assert!((r.r - 1.0).abs() < 1e-12);
        assert_eq!(r.p_value, 0.0);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &neg).unwrap().r + 1.0).abs() < 1e-12);
        assert_eq!(pearson(&x, &[1.0; 10]), Err(AnalyticsError::ConstantInput));
        assert!(matches!(
            pearson(&x[..2], &y[..2]),
            Err(AnalyticsError::TooFewSamples { .. })
        ));
    }

    #[test]
    fn p_value_known_point() {
        // t = 2.228 at 10 df is the two-sided 5% critical value.
        assert!((t_two_sided_p(2.228138851986274, 10.0) - 0.05).abs() < 1e-9);
        assert_eq!(t_two_sided_p(0.0, 5.0), 1.0);
    }

    #[test]
    fn ttest_examples() {
        let a = [1.0, 2.0, 3.5];
        assert_eq!(
            paired_ttest(&a, &a).unwrap(),
            TTestResult {
                t: 0.0,
                df: 2,
                p: 1.0
            }
        );
        let b = [0.0, 1.0, 2.5];
        assert_eq!(paired_ttest(&a, &b), Err(AnalyticsError::DegenerateInput));
        let c = [0.5, 2.5, 2.0];
        let fwd = paired_ttest(&a, &c).unwrap();
        let rev = paired_ttest(&c, &a).unwrap();
        assert_eq!(fwd.t, -rev.t);
        assert_eq!(fwd.p, rev.p);
    }

    proptest! {
        #[test]
        fn cov_scale_invariant(values in prop::collection::vec(0.01f64..1.0, 1..30), g in 0.01f64..100.0) {
            let scaled: Vec<f64> = values.iter().map(|v| v * g).collect();
            prop_assert!((cov(&values).unwrap() - cov(&scaled).unwrap()).abs() <= 1e-12);
        }

        #[test]
        fn pearson_affine_and_negation(
            pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..40),
            a in 0.1f64..5.0,
            b in -5.0f64..5.0,
        ) {
            let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            if let Ok(base) = pearson(&x, &y) {
                let xt: Vec<f64> = x.iter().map(|v| a * v + b).collect();
                let neg: Vec<f64> = y.iter().map(|v| -v).collect();
                prop_assert!((pearson(&xt, &y).unwrap().r - base.r).abs() < 1e-9);
                prop_assert!((pearson(&x, &neg).unwrap().r + base.r).abs() < 1e-12);
                prop_assert!((-1.0..=1.0).contains(&base.r));
            }
        }
    }
}
