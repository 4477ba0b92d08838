//! Evidence-conditioned certainty tagging for classifier predictions.
//!
//! Instead of flagging a prediction as uncertain whenever its prediction
//! entropy crosses a single global cutoff, this crate retrieves the most
//! similar exemplars from a held-out evidence set, fuses their
//! Dempster-Shafer mass functions, and tags the prediction `Certain` only
//! when the instance and its evidential neighborhood agree on the same
//! class with sufficient belief on both sides. Every decision carries the
//! retrieved evidence, so tags are auditable.
//!
//! The pipeline, end to end:
//!
//! 1. [`dataset`] — binary tensor layout, manifests, split loading.
//! 2. [`uncertainty`] — per-instance predictive mean, entropy, and
//!    credal intervals from the stochastic forward passes.
//! 3. [`fusion`] — mass functions over class singletons plus the frame
//!    `Ω`, Dempster's combination rule, and the conflict fallback.
//! 4. [`retrieval`] — exact top-k cosine search over the evidence set.
//! 5. [`decision`] — the evidential acceptance rule and the
//!    entropy-threshold baseline.
//! 6. [`metrics`] — TC/FC/TU/FU outcome counts, UAcc/UTPR/UFPR/UG-Mean,
//!    ECE, and the Brier score.
//! 7. [`sweep`] — (k, τ) and entropy-threshold grids with conservation
//!    checks and best-row selection.
//! 8. [`synthetic`] — a seeded, portable generator of desk-scale
//!    datasets so the whole pipeline runs without a trained model.

pub mod dataset;
pub mod decision;
pub mod error;
pub mod fusion;
pub mod metrics;
pub mod retrieval;
pub mod sweep;
pub mod synthetic;
pub mod uncertainty;

pub use error::{Error, Result};
