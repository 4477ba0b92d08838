//! Dempster-Shafer mass functions over class singletons plus the frame Ω,
//! and their iterative combination.
//!
//! Masses here have a fixed focal structure: the C class singletons and
//! the whole frame. Dempster's rule preserves that structure (singleton
//! intersections are empty or the singleton itself; Ω intersects
//! everything), so combination stays in closed form. Near-total conflict
//! falls back to a uniform mass over the C+1 focal sets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::uncertainty::CredalIntervalVector;

/// Combination steps whose denominator falls at or below this value are
/// treated as total conflict and replaced by the uniform fallback.
pub const CONFLICT_FALLBACK_THRESHOLD: f64 = 1e-10;

/// Tolerance for mass normalization checks.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// A basic belief assignment whose focal sets are the C class singletons
/// and the frame Ω.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassFunction {
    singleton: Vec<f64>,
    ignorance: f64,
}

impl MassFunction {
    /// Validates non-negativity and unit total mass (within
    /// [`MASS_TOLERANCE`]).
    pub fn new(singleton: Vec<f64>, ignorance: f64) -> Result<Self> {
        if singleton.is_empty() {
            return Err(Error::InvalidConfig(
                "mass function needs at least one class".into(),
            ));
        }
        if ignorance < 0.0 || singleton.iter().any(|&m| m < 0.0 || !m.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "mass function has negative or non-finite entries: {singleton:?}, ignorance {ignorance}"
            )));
        }
        let total: f64 = singleton.iter().sum::<f64>() + ignorance;
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidConfig(format!(
                "mass function sums to {total}, expected 1 within {MASS_TOLERANCE}"
            )));
        }
        Ok(Self {
            singleton,
            ignorance,
        })
    }

    /// Total ignorance: all mass on Ω. The identity of Dempster's rule.
    pub fn vacuous(num_classes: usize) -> Self {
        Self {
            singleton: vec![0.0; num_classes],
            ignorance: 1.0,
        }
    }

    /// The conflict fallback: 1/(C+1) on every focal set.
    pub fn uniform_fallback(num_classes: usize) -> Self {
        let share = 1.0 / (num_classes as f64 + 1.0);
        Self {
            singleton: vec![share; num_classes],
            ignorance: share,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.singleton.len()
    }

    pub fn singleton_masses(&self) -> &[f64] {
        &self.singleton
    }

    pub fn singleton(&self, class: usize) -> f64 {
        self.singleton[class]
    }

    pub fn ignorance(&self) -> f64 {
        self.ignorance
    }

    /// Smallest class index with maximal singleton mass, ignoring Ω.
    pub fn singleton_argmax(&self) -> usize {
        crate::uncertainty::argmax_first(&self.singleton)
    }

    /// The focal set with maximal mass. At equal mass any singleton beats
    /// Ω, and smaller class indices beat larger ones.
    pub fn argmax_focal(&self) -> FocalElement {
        let best = self.singleton_argmax();
        if self.ignorance > self.singleton[best] {
            FocalElement::Omega
        } else {
            FocalElement::Class(best)
        }
    }

    /// Per-class plausibility m({c}) + m(Ω): the mass not refuting the
    /// class. Reported for audit only.
    pub fn plausibilities(&self) -> Vec<f64> {
        self.singleton.iter().map(|&m| m + self.ignorance).collect()
    }
}

/// A focal set of the singleton+Ω structure: one class, or the frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FocalElement {
    Class(usize),
    Omega,
}

impl Serialize for FocalElement {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            FocalElement::Class(c) => serializer.serialize_u64(*c as u64),
            FocalElement::Omega => serializer.serialize_str("omega"),
        }
    }
}

impl<'de> Deserialize<'de> for FocalElement {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as DeError;
        let value = serde_json::Value::deserialize(deserializer).map_err(DeError::custom)?;
        match value {
            serde_json::Value::Number(n) => n
                .as_u64()
                .map(|c| FocalElement::Class(c as usize))
                .ok_or_else(|| DeError::custom("focal class index must be a non-negative integer")),
            serde_json::Value::String(s) if s == "omega" => Ok(FocalElement::Omega),
            other => Err(DeError::custom(format!(
                "expected class index or \"omega\", got {other}"
            ))),
        }
    }
}

impl std::fmt::Display for FocalElement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FocalElement::Class(c) => write!(f, "{c}"),
            FocalElement::Omega => f.write_str("omega"),
        }
    }
}

/// Maps credal intervals to a mass function: each class receives its
/// lower bound, the remainder goes to Ω.
pub fn mass_from_credal(intervals: &CredalIntervalVector) -> Result<MassFunction> {
    let sum: f64 = intervals.lower.iter().sum();
    let mut ignorance = 1.0 - sum;
    if ignorance < 0.0 {
        // The interval clamp guarantees sum <= 1 up to rounding; anything
        // beyond tolerance means it was bypassed.
        if ignorance < -MASS_TOLERANCE {
            return Err(Error::NegativeIgnorance(ignorance));
        }
        ignorance = 0.0;
    }
    MassFunction::new(intervals.lower.clone(), ignorance)
}

/// Dempster's combination for two singleton+Ω masses.
///
/// Returns the combined mass and the denominator D = 1 − conflict, where
/// the conflict is the total product mass on disjoint singleton pairs.
/// When D falls at or below [`CONFLICT_FALLBACK_THRESHOLD`] the uniform
/// fallback is returned instead, with D still reported.
pub fn combine(a: &MassFunction, b: &MassFunction) -> Result<(MassFunction, f64)> {
    let c = a.num_classes();
    if b.num_classes() != c {
        return Err(Error::LengthMismatch(format!(
            "cannot combine masses over {c} and {} classes",
            b.num_classes()
        )));
    }
    // D = 1 - sum_{i != l} a_i * b_l, accumulated without the i == l terms.
    let b_total: f64 = b.singleton.iter().sum();
    let mut conflict = 0.0f64;
    for i in 0..c {
        conflict += a.singleton[i] * (b_total - b.singleton[i]);
    }
    let denominator = 1.0 - conflict;
    if denominator <= CONFLICT_FALLBACK_THRESHOLD {
        return Ok((MassFunction::uniform_fallback(c), denominator));
    }
    let mut singleton = vec![0.0f64; c];
    for j in 0..c {
        let n = a.singleton[j] * b.singleton[j]
            + a.singleton[j] * b.ignorance
            + a.ignorance * b.singleton[j];
        singleton[j] = n / denominator;
    }
    let ignorance = a.ignorance * b.ignorance / denominator;
    Ok((
        MassFunction {
            singleton,
            ignorance,
        },
        denominator,
    ))
}

/// The result of folding a list of masses with Dempster's rule.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionOutcome {
    pub fused: MassFunction,
    /// Denominator D of each combination step, in fold order.
    pub conflict_trace: Vec<f64>,
    /// True iff some recorded D fell at or below the fallback threshold.
    pub fallback_triggered: bool,
}

/// Left fold of [`combine`] in list order. Callers pass masses in
/// ascending retrieval distance so the fold order is canonical.
pub fn fuse_all(masses: &[MassFunction]) -> Result<FusionOutcome> {
    let Some((first, rest)) = masses.split_first() else {
        return Err(Error::EmptyEvidenceList);
    };
    let mut fused = first.clone();
    let mut conflict_trace = Vec::with_capacity(rest.len());
    let mut fallback_triggered = false;
    for m in rest {
        let (next, denominator) = combine(&fused, m)?;
        fallback_triggered |= denominator <= CONFLICT_FALLBACK_THRESHOLD;
        conflict_trace.push(denominator);
        fused = next;
    }
    Ok(FusionOutcome {
        fused,
        conflict_trace,
        fallback_triggered,
    })
}
