//! Detection of persistent bilateral trading relationships ("significant ties")
//! in temporal transaction networks.
//!
//! The pipeline is organized around daily snapshots of a trading network that
//! are aggregated into windows of `tau` business days:
//!
//! 1. [`ingest`] parses raw transactions, builds daily snapshots and windowed
//!    pair counts `m_ij` (number of days a pair traded within a window).
//! 2. [`fitness`] fits a per-bank activity (fitness) null model by maximum
//!    likelihood: under the null, a pair trades on a given day with
//!    probability `u = a_i * a_j`, independently across days.
//! 3. [`sigtest`] tests each pair count against its null distribution
//!    (binomial, or a Poisson approximation for time-varying activity) and
//!    each bank's partner count against a Poisson-approximated law, with
//!    Le Cam error bounds.
//! 4. [`synth`] generates core-periphery networks with planted relationship
//!    pairs for calibration and power studies.
//! 5. [`analysis`] provides post-hoc analytics: duration spells and hazard
//!    fits, triangle censuses, baseline measures, detrended rate comparisons.
//!
//! Numeric kernels ([`dist`], [`solver`]) are generic over the scalar type via
//! [`num::Scalar`]; the pipeline itself runs on [`Real`].

pub mod analysis;
pub mod dist;
pub mod error;
pub mod fitness;
pub mod ingest;
pub mod io;
pub mod linalg;
pub mod num;
pub mod sigtest;
pub mod solver;
pub mod synth;

pub use error::{Error, Result};

/// Scalar type used by the concrete pipeline.
pub type Real = f64;

/// Bank identifier as it appears in the raw data (e.g. `IT0002`).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct BankId(pub String);

impl std::fmt::Display for BankId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for BankId {
    fn from(s: &str) -> Self {
        BankId(s.to_owned())
    }
}

impl BankId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}
