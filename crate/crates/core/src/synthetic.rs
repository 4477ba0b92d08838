//! Seeded generator of desk-scale datasets.
//!
//! Embeddings are drawn from C isotropic Gaussian clusters whose centers
//! sit `cluster_separation` within-cluster standard deviations from the
//! origin; each instance's stochastic passes are softmaxes of the
//! negative distances to all centers, jittered per pass by zero-mean
//! logit noise scaled by `dropout_noise`. Ambiguous instances (between
//! clusters) therefore get wider per-class sample spread, mimicking
//! dropout variability without a trained network.
//!
//! # Portable random stream
//!
//! Datasets must hash identically across platforms and implementations,
//! so the generator fixes the full random contract instead of relying on
//! a platform default:
//!
//! - Stream: ChaCha with 8 rounds (`ChaCha8Rng`), keyed by the 64-bit
//!   seed's little-endian bytes repeated four times to fill the 32-byte
//!   key, starting at stream position 0, consumed as `next_u64` words.
//! - Uniform in [0, 1): the top 53 bits of one `next_u64`, i.e.
//!   `(word >> 11) * 2^-53`.
//! - Standard normal: one Box-Muller evaluation per draw,
//!   `sqrt(-2 ln(1 - u1)) * cos(2π u2)`, consuming exactly two uniforms
//!   (the sine twin is discarded).
//!
//! Draw order: all C·d center components; then per class, per instance:
//! d embedding components, one uniform for the mislabel decision (plus
//! one more when it fires), then M·C logit perturbations.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::InstanceRecord;
use crate::error::{Error, Result};
use crate::uncertainty::PredictiveSampleSet;

/// Generator configuration. Every field except `seed` has a default, so
/// config files may specify only what they vary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    #[serde(default = "defaults::num_classes")]
    pub num_classes: usize,
    #[serde(default = "defaults::embedding_dim")]
    pub embedding_dim: usize,
    #[serde(default = "defaults::num_passes")]
    pub num_passes: usize,
    #[serde(default = "defaults::instances_per_class")]
    pub instances_per_class: usize,
    /// Fraction of each class assigned to the evidence split.
    #[serde(default = "defaults::evidence_fraction")]
    pub evidence_fraction: f64,
    /// Center spacing in units of the within-cluster standard deviation.
    #[serde(default = "defaults::cluster_separation")]
    pub cluster_separation: f64,
    /// Scale of the per-pass logit jitter.
    #[serde(default = "defaults::dropout_noise")]
    pub dropout_noise: f64,
    /// Probability that an instance's label is flipped to another class.
    #[serde(default = "defaults::mislabel_rate")]
    pub mislabel_rate: f64,
}

mod defaults {
    pub fn num_classes() -> usize {
        10
    }
    pub fn embedding_dim() -> usize {
        16
    }
    pub fn num_passes() -> usize {
        30
    }
    pub fn instances_per_class() -> usize {
        400
    }
    pub fn evidence_fraction() -> f64 {
        0.5
    }
    pub fn cluster_separation() -> f64 {
        3.0
    }
    pub fn dropout_noise() -> f64 {
        1.0
    }
    pub fn mislabel_rate() -> f64 {
        0.02
    }
}

impl SynthConfig {
    /// The desk-scale reference configuration: 10 classes, 16 dimensions,
    /// 30 passes, 2000 evidence + 2000 test instances, moderate overlap.
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            num_classes: defaults::num_classes(),
            embedding_dim: defaults::embedding_dim(),
            num_passes: defaults::num_passes(),
            instances_per_class: defaults::instances_per_class(),
            evidence_fraction: defaults::evidence_fraction(),
            cluster_separation: defaults::cluster_separation(),
            dropout_noise: defaults::dropout_noise(),
            mislabel_rate: defaults::mislabel_rate(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::InvalidConfig(format!(
                "num_classes must be >= 2, got {}",
                self.num_classes
            )));
        }
        if self.embedding_dim < 1 {
            return Err(Error::InvalidConfig("embedding_dim must be >= 1".into()));
        }
        if self.num_passes < 2 {
            return Err(Error::InvalidConfig(format!(
                "num_passes must be >= 2, got {}",
                self.num_passes
            )));
        }
        if self.instances_per_class < 2 {
            return Err(Error::InvalidConfig(
                "instances_per_class must be >= 2 so both splits are non-empty".into(),
            ));
        }
        let n_evidence = self.evidence_per_class();
        if n_evidence == 0 || n_evidence >= self.instances_per_class {
            return Err(Error::InvalidConfig(format!(
                "evidence_fraction {} leaves an empty split",
                self.evidence_fraction
            )));
        }
        if self.cluster_separation < 0.0 || !self.cluster_separation.is_finite() {
            return Err(Error::InvalidConfig("cluster_separation must be >= 0".into()));
        }
        if self.dropout_noise < 0.0 || !self.dropout_noise.is_finite() {
            return Err(Error::InvalidConfig("dropout_noise must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.mislabel_rate) {
            return Err(Error::InvalidConfig(format!(
                "mislabel_rate must be in [0, 1), got {}",
                self.mislabel_rate
            )));
        }
        Ok(())
    }

    fn evidence_per_class(&self) -> usize {
        (self.instances_per_class as f64 * self.evidence_fraction).round() as usize
    }
}

/// The fixed random stream described in the module docs.
pub struct PortableRng {
    rng: ChaCha8Rng,
}

impl PortableRng {
    pub fn new(seed: u64) -> Self {
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&seed.to_le_bytes());
        }
        Self {
            rng: ChaCha8Rng::from_seed(key),
        }
    }

    /// Uniform in [0, 1) from the top 53 bits of one stream word.
    pub fn unit_open(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via one Box-Muller cosine evaluation.
    pub fn standard_normal(&mut self) -> f64 {
        let u1 = self.unit_open();
        let u2 = self.unit_open();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

/// Generates the evidence and test splits. Identical configurations
/// produce byte-identical records.
pub fn generate(cfg: &SynthConfig) -> Result<(Vec<InstanceRecord>, Vec<InstanceRecord>)> {
    cfg.validate()?;
    let c = cfg.num_classes;
    let d = cfg.embedding_dim;
    let m = cfg.num_passes;
    let mut rng = PortableRng::new(cfg.seed);

    // Cluster centers: random unit directions scaled to the separation.
    let mut centers = vec![vec![0.0f64; d]; c];
    for center in &mut centers {
        for component in center.iter_mut() {
            *component = rng.standard_normal();
        }
        let norm = center.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for component in center.iter_mut() {
                *component = *component / norm * cfg.cluster_separation;
            }
        }
    }

    let n_evidence = cfg.evidence_per_class();
    let mut evidence = Vec::with_capacity(c * n_evidence);
    let mut test = Vec::with_capacity(c * (cfg.instances_per_class - n_evidence));
    let mut logits = vec![0.0f64; c];
    let mut row = vec![0.0f64; c];
    for class in 0..c {
        for position in 0..cfg.instances_per_class {
            // Embedding around the class center, serialized precision.
            let embedding: Vec<f32> = centers[class]
                .iter()
                .map(|&center| (center + rng.standard_normal()) as f32)
                .collect();

            let mut label = class as u32;
            if rng.unit_open() < cfg.mislabel_rate {
                let pick = (rng.unit_open() * (c - 1) as f64).floor() as usize;
                label = if pick < class { pick as u32 } else { (pick + 1) as u32 };
            }

            // Base logits from the embedding as stored, so the samples
            // correlate with exactly what a consumer reads back.
            for (j, center) in centers.iter().enumerate() {
                let dist_sq: f64 = embedding
                    .iter()
                    .zip(center)
                    .map(|(&e, &v)| (e as f64 - v) * (e as f64 - v))
                    .sum();
                logits[j] = -dist_sq.sqrt();
            }

            let mut values = Vec::with_capacity(m * c);
            for _ in 0..m {
                let mut max = f64::NEG_INFINITY;
                for (noisy, &base) in row.iter_mut().zip(&logits) {
                    *noisy = base + cfg.dropout_noise * rng.standard_normal();
                    max = max.max(*noisy);
                }
                let mut total = 0.0f64;
                for noisy in row.iter_mut() {
                    *noisy = (*noisy - max).exp();
                    total += *noisy;
                }
                for &noisy in row.iter() {
                    values.push((noisy / total) as f32);
                }
            }
            let samples = PredictiveSampleSet::new(m, c, values)?;

            let (split, split_len) = if position < n_evidence {
                let len = evidence.len();
                (&mut evidence, len)
            } else {
                let len = test.len();
                (&mut test, len)
            };
            split.push(InstanceRecord {
                instance_id: split_len as u64,
                embedding,
                samples,
                true_label: label,
            });
        }
    }
    Ok((evidence, test))
}
