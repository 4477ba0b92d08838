//! Predictive summaries and credal intervals from stochastic forward passes.
//!
//! A [`PredictiveSampleSet`] holds the M softmax vectors produced for one
//! instance with dropout left active. From it we derive the predictive
//! mean and entropy ([`predictive_summary`]) and per-class lower/upper
//! probability bounds via empirical quantiles ([`credal_intervals`]).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for "each sample row sums to 1". Softmax vectors rounded to
/// f32 must pass; genuinely unnormalized rows must fail.
pub const ROW_SUM_TOLERANCE: f64 = 1e-4;

/// Logarithm base used for entropy values and entropy thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum LogBase {
    #[default]
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "e")]
    E,
    #[serde(rename = "10")]
    Ten,
}

impl LogBase {
    pub fn log(self, x: f64) -> f64 {
        match self {
            LogBase::Two => x.log2(),
            LogBase::E => x.ln(),
            LogBase::Ten => x.log10(),
        }
    }

    /// Entropy of the uniform distribution over `num_classes`, the upper
    /// bound for any prediction entropy in this base.
    pub fn max_entropy(self, num_classes: usize) -> f64 {
        self.log(num_classes as f64)
    }
}

impl std::str::FromStr for LogBase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "2" => Ok(LogBase::Two),
            "e" => Ok(LogBase::E),
            "10" => Ok(LogBase::Ten),
            other => Err(Error::InvalidConfig(format!(
                "unknown log base {other:?} (expected one of \"2\", \"e\", \"10\")"
            ))),
        }
    }
}

impl std::fmt::Display for LogBase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            LogBase::Two => "2",
            LogBase::E => "e",
            LogBase::Ten => "10",
        };
        f.write_str(s)
    }
}

/// M stochastic softmax outputs for one instance: a row-major M×C matrix,
/// one probability vector per pass.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveSampleSet {
    num_passes: usize,
    num_classes: usize,
    values: Vec<f32>,
}

impl PredictiveSampleSet {
    /// Wraps an M×C row-major buffer. Shape errors are rejected here;
    /// row stochasticity is checked separately by
    /// [`validate_stochastic`](Self::validate_stochastic) so loaders can
    /// attribute violations to an instance index.
    pub fn new(num_passes: usize, num_classes: usize, values: Vec<f32>) -> Result<Self> {
        if num_passes == 0 || num_classes == 0 {
            return Err(Error::InvalidConfig(format!(
                "sample set needs at least one pass and one class, got {num_passes}x{num_classes}"
            )));
        }
        if values.len() != num_passes * num_classes {
            return Err(Error::LengthMismatch(format!(
                "sample buffer holds {} values, expected {}x{}={}",
                values.len(),
                num_passes,
                num_classes,
                num_passes * num_classes
            )));
        }
        Ok(Self {
            num_passes,
            num_classes,
            values,
        })
    }

    pub fn num_passes(&self) -> usize {
        self.num_passes
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// The probability vector from one pass.
    pub fn pass(&self, m: usize) -> &[f32] {
        &self.values[m * self.num_classes..(m + 1) * self.num_classes]
    }

    /// Checks every row sums to 1 within [`ROW_SUM_TOLERANCE`] with all
    /// components in [0, 1]. `instance` is only used to label the error.
    pub fn validate_stochastic(&self, instance: usize) -> Result<()> {
        for m in 0..self.num_passes {
            let row = self.pass(m);
            let mut sum = 0.0f64;
            for &p in row {
                if !(0.0..=1.0).contains(&(p as f64)) || !p.is_finite() {
                    return Err(Error::NonStochasticRow {
                        instance,
                        pass: m,
                        sum: p as f64,
                        tolerance: ROW_SUM_TOLERANCE,
                    });
                }
                sum += p as f64;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::NonStochasticRow {
                    instance,
                    pass: m,
                    sum,
                    tolerance: ROW_SUM_TOLERANCE,
                });
            }
        }
        Ok(())
    }
}

/// Predictive mean, entropy of the mean, and the argmax class.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveSummary {
    /// Per-class arithmetic mean over the M passes.
    pub mean: Vec<f64>,
    /// Shannon entropy of `mean` in the configured base, with 0·log 0 = 0.
    pub entropy: f64,
    /// Smallest class index attaining the maximal mean.
    pub predicted_class: usize,
}

/// Averages the passes and evaluates the prediction entropy.
pub fn predictive_summary(samples: &PredictiveSampleSet, base: LogBase) -> PredictiveSummary {
    let c = samples.num_classes();
    let m = samples.num_passes();
    let mut mean = vec![0.0f64; c];
    for pass in 0..m {
        for (acc, &p) in mean.iter_mut().zip(samples.pass(pass)) {
            *acc += p as f64;
        }
    }
    for acc in &mut mean {
        *acc /= m as f64;
    }
    let entropy = entropy_of(&mean, base);
    let predicted_class = argmax_first(&mean);
    PredictiveSummary {
        mean,
        entropy,
        predicted_class,
    }
}

/// Shannon entropy of a probability vector with the 0·log 0 = 0 convention.
pub fn entropy_of(probs: &[f64], base: LogBase) -> f64 {
    let mut h = 0.0f64;
    for &p in probs {
        if p > 0.0 {
            h -= p * base.log(p);
        }
    }
    // -0.0 can survive the accumulation for degenerate inputs.
    if h == 0.0 {
        0.0
    } else {
        h
    }
}

/// Smallest index attaining the maximum.
pub(crate) fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Per-class lower/upper probability bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CredalIntervalVector {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Set when the lower bounds summed above 1 and were rescaled so the
    /// downstream ignorance mass is exactly zero.
    pub lower_sum_clamped: bool,
}

/// Empirical per-class quantile bounds over the M passes.
///
/// Quantiles interpolate order statistics linearly: at position
/// h = (M−1)·q the value is x[⌊h⌋] + (h−⌊h⌋)·(x[⌊h⌋+1] − x[⌊h⌋]).
/// If the lower bounds sum above 1 they are uniformly rescaled to sum
/// to 1 and the diagnostic flag is set.
pub fn credal_intervals(
    samples: &PredictiveSampleSet,
    q_lo: f64,
    q_hi: f64,
) -> Result<CredalIntervalVector> {
    if !(0.0..=1.0).contains(&q_lo) || !(0.0..=1.0).contains(&q_hi) || q_lo >= q_hi {
        return Err(Error::QuantileRange { q_lo, q_hi });
    }
    let c = samples.num_classes();
    let m = samples.num_passes();
    let mut lower = vec![0.0f64; c];
    let mut upper = vec![0.0f64; c];
    let mut column = vec![0.0f64; m];
    for class in 0..c {
        for pass in 0..m {
            column[pass] = samples.pass(pass)[class] as f64;
        }
        column.sort_by(f64::total_cmp);
        lower[class] = quantile_sorted(&column, q_lo);
        upper[class] = quantile_sorted(&column, q_hi);
    }
    let lower_sum: f64 = lower.iter().sum();
    let lower_sum_clamped = lower_sum > 1.0;
    if lower_sum_clamped {
        for v in &mut lower {
            *v /= lower_sum;
        }
    }
    Ok(CredalIntervalVector {
        lower,
        upper,
        lower_sum_clamped,
    })
}

/// Linear interpolation of order statistics over an ascending slice.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(rows: &[&[f32]]) -> PredictiveSampleSet {
        let classes = rows[0].len();
        let values: Vec<f32> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        PredictiveSampleSet::new(rows.len(), classes, values).unwrap()
    }

    #[test]
    fn summary_of_symmetric_binary_passes() {
        let s = set(&[&[0.5, 0.5], &[0.5, 0.5]]);
        let summary = predictive_summary(&s, LogBase::Two);
        assert_eq!(summary.mean, vec![0.5, 0.5]);
        assert_eq!(summary.entropy, 1.0);
        assert_eq!(summary.predicted_class, 0);
    }

    #[test]
    fn summary_of_degenerate_passes() {
        let s = set(&[&[1.0, 0.0], &[1.0, 0.0], &[1.0, 0.0]]);
        let summary = predictive_summary(&s, LogBase::Two);
        assert_eq!(summary.entropy, 0.0);
        assert_eq!(summary.predicted_class, 0);
    }

    #[test]
    fn uniform_four_class_entropy_is_two_bits() {
        let s = set(&[&[0.25, 0.25, 0.25, 0.25]]);
        let summary = predictive_summary(&s, LogBase::Two);
        assert!((summary.entropy - 2.0).abs() < 1e-12);
    }

    #[test]
    fn entropy_respects_base() {
        let p = [0.5, 0.5];
        assert!((entropy_of(&p, LogBase::Two) - 1.0).abs() < 1e-15);
        assert!((entropy_of(&p, LogBase::E) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((entropy_of(&p, LogBase::Ten) - 2.0f64.log10()).abs() < 1e-15);
    }

    #[test]
    fn argmax_tie_takes_smallest_index() {
        let s = set(&[&[0.4, 0.4, 0.2]]);
        assert_eq!(predictive_summary(&s, LogBase::Two).predicted_class, 0);
    }

    #[test]
    fn quantiles_of_decile_grid() {
        // Ten equally spaced values: h = 9q lands between order statistics.
        let rows: Vec<Vec<f32>> = (0..10).map(|i| vec![i as f32 / 10.0, 0.5]).collect();
        let refs: Vec<&[f32]> = rows.iter().map(|r| r.as_slice()).collect();
        let s = set(&refs);
        let iv = credal_intervals(&s, 0.1, 0.9).unwrap();
        assert!((iv.lower[0] - 0.09).abs() < 1e-12);
        assert!((iv.upper[0] - 0.81).abs() < 1e-12);
    }

    #[test]
    fn constant_samples_collapse_the_interval() {
        let s = set(&[&[0.3, 0.7], &[0.3, 0.7], &[0.3, 0.7]]);
        let iv = credal_intervals(&s, 0.1, 0.9).unwrap();
        assert_eq!(iv.lower, iv.upper);
        assert!((iv.lower[0] as f64 - 0.3f32 as f64).abs() < 1e-12);
    }

    #[test]
    fn two_pass_interpolation() {
        let s = set(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let iv = credal_intervals(&s, 0.1, 0.9).unwrap();
        assert!((iv.lower[0] - 0.1).abs() < 1e-12);
        assert!((iv.lower[1] - 0.1).abs() < 1e-12);
        assert!((iv.upper[0] - 0.9).abs() < 1e-12);
        assert!((iv.upper[1] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn degenerate_quantile_range_is_rejected() {
        let s = set(&[&[0.5, 0.5]]);
        assert!(matches!(
            credal_intervals(&s, 0.9, 0.1),
            Err(Error::QuantileRange { .. })
        ));
        assert!(matches!(
            credal_intervals(&s, 0.5, 0.5),
            Err(Error::QuantileRange { .. })
        ));
    }

    #[test]
    fn lower_sum_above_one_is_rescaled() {
        // Valid rows each sum to 1, so a clamp only happens when skewed
        // columns push the per-class quantiles above 1 in total.
        let s = set(&[&[0.7, 0.3], &[0.3, 0.7]]);
        // q_lo = 0.9 keeps large lower bounds: per class sorted [0.3, 0.7],
        // h = 0.9 -> 0.3 + 0.9*0.4 = 0.66; sum = 1.32 > 1.
        let iv = credal_intervals(&s, 0.9, 0.95).unwrap();
        assert!(iv.lower_sum_clamped);
        let sum: f64 = iv.lower.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn row_validation_flags_bad_sum_and_range() {
        let s = set(&[&[0.6, 0.6]]);
        match s.validate_stochastic(7) {
            Err(Error::NonStochasticRow { instance, pass, .. }) => {
                assert_eq!((instance, pass), (7, 0));
            }
            other => panic!("expected NonStochasticRow, got {other:?}"),
        }
        let s = set(&[&[1.2, -0.2]]);
        assert!(s.validate_stochastic(0).is_err());
    }

    #[test]
    fn log_base_parses_and_displays() {
        assert_eq!("2".parse::<LogBase>().unwrap(), LogBase::Two);
        assert_eq!("e".parse::<LogBase>().unwrap(), LogBase::E);
        assert_eq!("10".parse::<LogBase>().unwrap(), LogBase::Ten);
        assert!("16".parse::<LogBase>().is_err());
        assert_eq!(LogBase::Ten.to_string(), "10");
    }
}
