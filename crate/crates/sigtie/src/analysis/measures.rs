//! Baseline relationship measures and their agreement with significant ties.
//!
//! `RL` is the log trade count `ln(1 + m_ij)`; `LPI` is the share of a
//! bank's window volume traded with one partner (volumes are undirected, so
//! the measure is computed from both endpoints and a pair scores the larger
//! share). The Jaccard index compares the top-scored pairs, cut at the size
//! of the significant set, with the significant set itself.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::WindowedCounts;
use crate::Real;

/// Score of one unordered pair under a baseline measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureScore {
    pub pair: (u32, u32),
    pub score: Real,
}

/// Log trade-count measure for every realized pair.
pub fn rl_scores(window: &WindowedCounts) -> Vec<MeasureScore> {
    window
        .pairs
        .iter()
        .map(|(&pair, counts)| MeasureScore {
            pair,
            score: (1.0 + counts.days as Real).ln(),
        })
        .collect()
}

/// Volume-concentration measure for every realized pair.
///
/// Returns the scores and the banks with zero window volume, whose pairs
/// cannot be scored and are reported instead of silently skipped.
pub fn lpi_scores(window: &WindowedCounts) -> (Vec<MeasureScore>, Vec<u32>) {
    let mut bank_volume: BTreeMap<u32, Real> = BTreeMap::new();
    for (&(i, j), counts) in &window.pairs {
        *bank_volume.entry(i).or_insert(0.0) += counts.volume;
        *bank_volume.entry(j).or_insert(0.0) += counts.volume;
    }
    let flagged: Vec<u32> = bank_volume
        .iter()
        .filter(|(_, &v)| v <= 0.0)
        .map(|(&b, _)| b)
        .collect();
    let scores = window
        .pairs
        .iter()
        .filter_map(|(&(i, j), counts)| {
            let vi = bank_volume[&i];
            let vj = bank_volume[&j];
            if vi <= 0.0 || vj <= 0.0 {
                return None;
            }
            Some(MeasureScore {
                pair: (i, j),
                score: (counts.volume / vi).max(counts.volume / vj),
            })
        })
        .collect();
    (scores, flagged)
}

/// Jaccard index between the top-scored pairs and the significant set.
///
/// The candidate set keeps exactly `|significant|` pairs; ties at the cutoff
/// are broken by descending trade-day count, then by the lexicographic
/// bank-id pair.
pub fn jaccard_vs_truth(
    scores: &[MeasureScore],
    significant: &BTreeSet<(u32, u32)>,
    window: &WindowedCounts,
) -> Result<Real> {
    if significant.is_empty() {
        return Err(Error::EmptySignificantSet);
    }
    let mut ranked: Vec<&MeasureScore> = scores.iter().collect();
    ranked.sort_by(|x, y| {
        y.score
            .partial_cmp(&x.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| window.m(y.pair.0, y.pair.1).cmp(&window.m(x.pair.0, x.pair.1)))
            .then_with(|| {
                let name = |p: (u32, u32)| {
                    (
                        &window.banks[p.0 as usize],
                        &window.banks[p.1 as usize],
                    )
                };
                name(x.pair).cmp(&name(y.pair))
            })
    });
    let top: BTreeSet<(u32, u32)> = ranked
        .iter()
        .take(significant.len())
        .map(|s| s.pair)
        .collect();
    let intersection = top.intersection(significant).count() as Real;
    let union = top.union(significant).count() as Real;
    Ok(intersection / union)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fitness::test_support::window;
    use crate::ingest::PairCounts;

    #[test]
    fn rl_is_log_count() {
        let w = window(3, 10, false, &[(0, 1, 9, 0, 0), (1, 2, 1, 0, 0)]);
        let scores = rl_scores(&w);
        let s01 = scores.iter().find(|s| s.pair == (0, 1)).unwrap();
        assert!((s01.score - 10.0f64.ln()).abs() < 1e-12);
        assert!((s01.score - 2.302585092994046).abs() < 1e-12);
        // monotone in m
        let s12 = scores.iter().find(|s| s.pair == (1, 2)).unwrap();
        assert!(s01.score > s12.score);
    }

    #[test]
    fn lpi_single_partner_is_one() {
        let w = window(2, 10, false, &[(0, 1, 5, 0, 0)]);
        let (scores, flagged) = lpi_scores(&w);
        assert!(flagged.is_empty());
        assert_eq!(scores.len(), 1);
        assert!((scores[0].score - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lpi_shares_sum_to_one_per_bank() {
        let mut w = window(
            4,
            10,
            false,
            &[(0, 1, 5, 0, 0), (0, 2, 2, 0, 0), (0, 3, 1, 0, 0), (1, 2, 4, 0, 0)],
        );
        // distinct volumes
        for (k, counts) in w.pairs.values_mut().enumerate() {
            counts.volume = 10.0 * (k + 1) as Real;
        }
        let (scores, _) = lpi_scores(&w);
        // recompute bank 0's shares directly
        let vol0: Real = w
            .pairs
            .iter()
            .filter(|(&(i, j), _)| i == 0 || j == 0)
            .map(|(_, c)| c.volume)
            .sum();
        let share_sum: Real = w
            .pairs
            .iter()
            .filter(|(&(i, j), _)| i == 0 || j == 0)
            .map(|(_, c)| c.volume / vol0)
            .sum();
        assert!((share_sum - 1.0).abs() < 1e-12);
        assert_eq!(scores.len(), 4);
    }

    #[test]
    fn lpi_flags_zero_volume_banks() {
        let mut w = window(2, 10, false, &[(0, 1, 5, 0, 0)]);
        w.pairs.get_mut(&(0, 1)).unwrap().volume = 0.0;
        let (scores, flagged) = lpi_scores(&w);
        assert!(scores.is_empty());
        assert_eq!(flagged, vec![0, 1]);
    }

    #[test]
    fn jaccard_perfect_and_disjoint() {
        let w = window(4, 10, false, &[(0, 1, 9, 0, 0), (0, 2, 5, 0, 0), (1, 2, 1, 0, 0)]);
        let scores = rl_scores(&w);
        let sig: BTreeSet<_> = [(0u32, 1u32), (0, 2)].into_iter().collect();
        assert!((jaccard_vs_truth(&scores, &sig, &w).unwrap() - 1.0).abs() < 1e-12);
        let disjoint: BTreeSet<_> = [(1u32, 2u32)].into_iter().collect();
        assert_eq!(jaccard_vs_truth(&scores, &disjoint, &w).unwrap(), 0.0);
    }

    #[test]
    fn jaccard_requires_nonempty_truth() {
        let w = window(2, 10, false, &[(0, 1, 5, 0, 0)]);
        let scores = rl_scores(&w);
        assert!(matches!(
            jaccard_vs_truth(&scores, &BTreeSet::new(), &w),
            Err(Error::EmptySignificantSet)
        ));
    }

    #[test]
    fn cutoff_ties_break_deterministically() {
        // all scores equal; m decides, then the lexicographic pair id
        let mut w = window(4, 10, false, &[(0, 1, 3, 0, 0), (0, 2, 5, 0, 0), (2, 3, 5, 0, 0)]);
        for counts in w.pairs.values_mut() {
            counts.volume = 7.0;
        }
        let scores: Vec<MeasureScore> = w
            .pairs
            .keys()
            .map(|&pair| MeasureScore { pair, score: 1.0 })
            .collect();
        let sig: BTreeSet<_> = [(0u32, 2u32)].into_iter().collect();
        // top-1 must be (0,2): m = 5 ties with (2,3), lexicographic wins
        let j = jaccard_vs_truth(&scores, &sig, &w).unwrap();
        assert!((j - 1.0).abs() < 1e-12);
    }

    #[test]
    fn window_pair_counts_survive_volume_rewrites() {
        let mut w = window(2, 10, false, &[(0, 1, 5, 0, 0)]);
        w.pairs.insert(
            (0, 1),
            PairCounts {
                days: 5,
                days_low_to_high: 0,
                days_high_to_low: 0,
                trades: 8,
                volume: 123.0,
            },
        );
        let (scores, _) = lpi_scores(&w);
        assert!((scores[0].score - 1.0).abs() < 1e-12);
    }
}
