//! Nationality composition of ties and dependent banks.
//!
//! Pairs are grouped by the country prefixes of their bank ids into
//! domestic-domestic, domestic-foreign and foreign-foreign, relative to a
//! configurable home country. Ids without a valid prefix count as foreign
//! and are reported as flagged.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::ingest::{country_code, WindowedCounts};
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NationalityShares {
    pub domestic_domestic: Real,
    pub domestic_foreign: Real,
    pub foreign_foreign: Real,
    pub n_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NationalityBreakdown {
    pub home: String,
    /// Shares among all realized ties.
    pub all_ties: NationalityShares,
    /// Shares among significant ties, when any exist.
    pub significant_ties: Option<NationalityShares>,
    /// Share of home-country banks among all active banks.
    pub home_bank_share: Real,
    /// Share of home-country banks among dependent banks, when any exist.
    pub dependent_home_share: Option<Real>,
    /// Bank ids without a parseable country prefix (treated as foreign).
    pub flagged_unknown: usize,
}

fn shares(
    pairs: impl Iterator<Item = (u32, u32)>,
    domestic: &[bool],
) -> NationalityShares {
    let mut counts = [0usize; 3];
    let mut total = 0usize;
    for (i, j) in pairs {
        let d = domestic[i as usize] as usize + domestic[j as usize] as usize;
        counts[d] += 1;
        total += 1;
    }
    let frac = |c: usize| {
        if total > 0 {
            c as Real / total as Real
        } else {
            0.0
        }
    };
    NationalityShares {
        domestic_domestic: frac(counts[2]),
        domestic_foreign: frac(counts[1]),
        foreign_foreign: frac(counts[0]),
        n_pairs: total,
    }
}

/// Splits a window's ties and banks by nationality.
pub fn nationality_groups(
    window: &WindowedCounts,
    significant: &BTreeSet<(u32, u32)>,
    dependent_banks: &BTreeSet<u32>,
    home: &str,
) -> NationalityBreakdown {
    let home = home.to_ascii_uppercase();
    let mut flagged_unknown = 0usize;
    let domestic: Vec<bool> = window
        .banks
        .iter()
        .map(|bank| match country_code(bank) {
            Some(code) => code == home,
            None => {
                flagged_unknown += 1;
                false
            }
        })
        .collect();

    let all_ties = shares(window.pairs.keys().copied(), &domestic);
    let significant_ties = if significant.is_empty() {
        None
    } else {
        Some(shares(significant.iter().copied(), &domestic))
    };
    let n_banks = window.n_banks();
    let n_home = domestic.iter().filter(|&&d| d).count();
    let dependent_home_share = if dependent_banks.is_empty() {
        None
    } else {
        Some(
            dependent_banks
                .iter()
                .filter(|&&b| domestic[b as usize])
                .count() as Real
                / dependent_banks.len() as Real,
        )
    };

    NationalityBreakdown {
        home,
        all_ties,
        significant_ties,
        home_bank_share: if n_banks > 0 {
            n_home as Real / n_banks as Real
        } else {
            0.0
        },
        dependent_home_share,
        flagged_unknown,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::PairCounts;
    use crate::ingest::WindowedCounts;
    use crate::BankId;
    use std::collections::BTreeMap;

    fn window_named(names: &[&str], pairs: &[(u32, u32)]) -> WindowedCounts {
        WindowedCounts {
            index: 0,
            dates: vec![chrono::NaiveDate::from_ymd_opt(2001, 1, 1).unwrap()],
            banks: names.iter().map(|&n| BankId::from(n)).collect(),
            pairs: pairs
                .iter()
                .map(|&p| {
                    (
                        p,
                        PairCounts {
                            days: 1,
                            ..Default::default()
                        },
                    )
                })
                .collect::<BTreeMap<_, _>>(),
            directed: false,
        }
    }

    #[test]
    fn all_domestic_yields_unit_share() {
        let w = window_named(&["IT0001", "IT0002", "IT0003"], &[(0, 1), (1, 2)]);
        let out = nationality_groups(&w, &BTreeSet::new(), &BTreeSet::new(), "IT");
        assert!((out.all_ties.domestic_domestic - 1.0).abs() < 1e-12);
        assert_eq!(out.all_ties.n_pairs, 2);
        assert!(out.significant_ties.is_none());
        assert!((out.home_bank_share - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cross_border_significant_share() {
        let w = window_named(&["IT0001", "DE0001", "IT0002"], &[(0, 1), (0, 2)]);
        let sig: BTreeSet<_> = [(0u32, 1u32), (0, 2)].into_iter().collect();
        let out = nationality_groups(&w, &sig, &BTreeSet::new(), "IT");
        let s = out.significant_ties.unwrap();
        assert!((s.domestic_foreign - 0.5).abs() < 1e-12);
        assert!((s.domestic_domestic - 0.5).abs() < 1e-12);
    }

    #[test]
    fn unknown_codes_count_as_foreign_and_flagged() {
        let w = window_named(&["IT0001", "0X42"], &[(0, 1)]);
        let out = nationality_groups(&w, &BTreeSet::new(), &BTreeSet::new(), "IT");
        assert_eq!(out.flagged_unknown, 1);
        assert!((out.all_ties.domestic_foreign - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dependent_share_counts_home_banks() {
        let w = window_named(&["IT0001", "DE0001", "IT0002"], &[(0, 1), (1, 2)]);
        let dep: BTreeSet<u32> = [0u32, 1].into_iter().collect();
        let out = nationality_groups(&w, &BTreeSet::new(), &dep, "it");
        assert!((out.dependent_home_share.unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn labels_independent_of_significance_track_overall_shares() {
        // random-ish labels assigned independently of which ties are
        // significant: the significant-tie shares match the overall shares
        let mut names = Vec::new();
        for i in 0..40 {
            names.push(if i % 2 == 0 {
                format!("IT{i:04}")
            } else {
                format!("DE{i:04}")
            });
        }
        let name_refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
        let mut pairs = Vec::new();
        for i in 0..40u32 {
            for j in (i + 1)..40u32 {
                pairs.push((i, j));
            }
        }
        let w = window_named(&name_refs, &pairs);
        // significance by pair parity: independent of the labels by design
        let sig: BTreeSet<_> = pairs
            .iter()
            .enumerate()
            .filter(|(k, _)| k % 3 == 0)
            .map(|(_, &p)| p)
            .collect();
        let out = nationality_groups(&w, &sig, &BTreeSet::new(), "IT");
        let s = out.significant_ties.unwrap();
        assert!((s.domestic_domestic - out.all_ties.domestic_domestic).abs() < 0.05);
        assert!((s.foreign_foreign - out.all_ties.foreign_foreign).abs() < 0.05);
    }
}
