//! Duration spells of tie classifications and power-law hazard fits.
//!
//! A spell is a maximal run of consecutive windows in which a pair keeps
//! the same verdict. Windows in which the pair did not trade break any run.
//! Power-law durations imply a decreasing hazard: fitting `P(d) ~ d^-gamma`
//! gives the termination probability `lambda(d) = gamma / d`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::WindowMode;
use crate::num::Scalar;
use crate::{BankId, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieKind {
    Significant,
    NonSignificant,
}

impl std::fmt::Display for TieKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TieKind::Significant => "significant",
            TieKind::NonSignificant => "non-significant",
        })
    }
}

/// One maximal run of same-kind classifications for a pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationSpell {
    pub bank_a: BankId,
    pub bank_b: BankId,
    pub kind: TieKind,
    pub start_window: usize,
    /// Number of consecutive windows.
    pub length: usize,
    /// Touches the first or last observed window; the true duration may
    /// extend beyond the data.
    pub censored: bool,
}

/// Tie verdicts of one window, keyed by bank-id pair.
#[derive(Debug, Clone)]
pub struct ClassifiedWindow {
    pub index: usize,
    pub ties: Vec<(BankId, BankId, bool)>,
}

/// Decomposes per-window classifications into maximal spells.
///
/// Windows must come from fixed (disjoint, contiguous) aggregation; rolling
/// windows overlap, which makes "consecutive" ill-defined, and are rejected.
pub fn duration_spells(
    windows: &[ClassifiedWindow],
    mode: WindowMode,
) -> Result<Vec<DurationSpell>> {
    if mode == WindowMode::Rolling {
        return Err(Error::NonContiguousWindows);
    }
    if windows.is_empty() {
        return Ok(Vec::new());
    }
    for pair in windows.windows(2) {
        if pair[1].index != pair[0].index + 1 {
            return Err(Error::NonContiguousWindows);
        }
    }
    let first = windows[0].index;
    let last = windows[windows.len() - 1].index;

    // per-pair classification timeline
    let mut timeline: BTreeMap<(BankId, BankId), Vec<(usize, bool)>> = BTreeMap::new();
    for w in windows {
        for (a, b, sig) in &w.ties {
            let key = if a <= b {
                (a.clone(), b.clone())
            } else {
                (b.clone(), a.clone())
            };
            timeline.entry(key).or_default().push((w.index, *sig));
        }
    }

    let mut spells = Vec::new();
    for ((a, b), mut obs) in timeline {
        obs.sort_by_key(|&(w, _)| w);
        let mut run: Option<(usize, usize, bool)> = None; // start, end, kind
        for (w, sig) in obs {
            run = match run {
                Some((start, end, kind)) if w == end + 1 && sig == kind => {
                    Some((start, w, kind))
                }
                Some((start, end, kind)) => {
                    spells.push(make_spell(&a, &b, start, end, kind, first, last));
                    Some((w, w, sig))
                }
                None => Some((w, w, sig)),
            };
        }
        if let Some((start, end, kind)) = run {
            spells.push(make_spell(&a, &b, start, end, kind, first, last));
        }
    }
    Ok(spells)
}

fn make_spell(
    a: &BankId,
    b: &BankId,
    start: usize,
    end: usize,
    kind: bool,
    first: usize,
    last: usize,
) -> DurationSpell {
    DurationSpell {
        bank_a: a.clone(),
        bank_b: b.clone(),
        kind: if kind {
            TieKind::Significant
        } else {
            TieKind::NonSignificant
        },
        start_window: start,
        length: end - start + 1,
        censored: start == first || end == last,
    }
}

/// Discrete power-law fit by the continuous-approximation maximum-likelihood
/// estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub exponent: Real,
    pub std_error: Real,
    pub n: usize,
    pub d_min: u32,
}

impl PowerLawFit {
    /// Hazard rate implied by the fitted tail: `lambda(d) = gamma / d`.
    pub fn hazard(&self, d: Real) -> Real {
        self.exponent / d
    }
}

/// Fits the tail exponent of durations at or above `d_min`:
/// `gamma = 1 + n / sum ln(d_i / (d_min - 1/2))`, with standard error
/// `(gamma - 1) / sqrt(n)`.
pub fn powerlaw_exponent(durations: &[u32], d_min: u32) -> Result<PowerLawFit> {
    powerlaw_exponent_generic::<Real>(durations, d_min).map(|(exponent, std_error, n)| {
        PowerLawFit {
            exponent,
            std_error,
            n,
            d_min,
        }
    })
}

pub(crate) fn powerlaw_exponent_generic<T: Scalar>(
    durations: &[u32],
    d_min: u32,
) -> Result<(T, T, usize)> {
    if d_min < 1 {
        return Err(Error::InvalidArgument("d_min must be at least 1".into()));
    }
    let tail: Vec<u32> = durations.iter().copied().filter(|&d| d >= d_min).collect();
    if tail.len() < 2 {
        return Err(Error::TooFewDurations);
    }
    if tail.iter().all(|&d| d == tail[0]) {
        return Err(Error::DegenerateDurations);
    }
    let shift = T::from_u32(d_min).unwrap() - T::from_f64(0.5).unwrap();
    let log_sum: T = tail
        .iter()
        .map(|&d| (T::from_u32(d).unwrap() / shift).ln())
        .sum();
    let n = T::from_count(tail.len());
    let exponent = T::one() + n / log_sum;
    let std_error = (exponent - T::one()) / n.sqrt();
    Ok((exponent, std_error, tail.len()))
}

/// Scans candidate `d_min` values and keeps the fit whose tail matches the
/// data best in Kolmogorov-Smirnov distance.
pub fn scan_d_min(durations: &[u32]) -> Result<(PowerLawFit, Real)> {
    let mut candidates: Vec<u32> = durations.to_vec();
    candidates.sort_unstable();
    candidates.dedup();
    let mut best: Option<(PowerLawFit, Real)> = None;
    for &d_min in &candidates {
        let fit = match powerlaw_exponent(durations, d_min) {
            Ok(f) => f,
            Err(_) => continue,
        };
        let mut tail: Vec<u32> = durations
            .iter()
            .copied()
            .filter(|&d| d >= d_min)
            .collect();
        tail.sort_unstable();
        let n = tail.len() as Real;
        let shift = d_min as Real - 0.5;
        let mut ks: Real = 0.0;
        for (rank, &d) in tail.iter().enumerate() {
            // model CCDF of the continuous approximation at d + 1/2
            let model = ((d as Real + 0.5) / shift).powf(-(fit.exponent - 1.0));
            let empirical = 1.0 - (rank + 1) as Real / n;
            ks = ks.max((model - empirical).abs());
        }
        if best.as_ref().map_or(true, |&(_, b)| ks < b) {
            best = Some((fit, ks));
        }
    }
    best.ok_or(Error::TooFewDurations)
}
