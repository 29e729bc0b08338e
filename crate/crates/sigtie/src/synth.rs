//! Synthetic core-periphery networks with planted relationship pairs.
//!
//! Each day, core banks connect pairwise with probability `p_cc` and
//! core-periphery pairs with `p_cp`; periphery pairs never connect. A
//! fraction `f_rel` of the pairs that trade at least once during the
//! evaluation window (the final `window_days` days) is planted as
//! relationship pairs. A relationship pair that has no base edge on day `t`
//! receives an extra edge with probability `1 - b0 / (b1 + b2 * D(t-1))`,
//! where `D` counts consecutive trading days and resets after a day without
//! a trade. The hazard runs over the whole simulation span, so streaks are
//! in steady state by the time the evaluation window is reached; burn-in
//! days are discarded from the output.
//!
//! With `b2 = 0` and `b0 = b1` no extra edge is ever added and pair counts
//! are exactly binomial; this is the null configuration used for
//! calibration.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitness::{estimate_undirected, EstimateOptions};
use crate::ingest::{window_counts, DailySnapshot, DayEdge, Network, WindowMode};
use crate::sigtest::{edge_test_constant, Correction};
use crate::{BankId, Real};

/// Parameters of the generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_banks: usize,
    /// Fraction of banks designated as core.
    pub core_fraction: f64,
    /// Daily probability of a core-core base edge.
    pub p_core_core: f64,
    /// Daily probability of a core-periphery base edge.
    pub p_core_periphery: f64,
    /// Fraction of window-trading pairs planted as relationship pairs.
    pub relationship_fraction: f64,
    pub hazard_b0: f64,
    pub hazard_b1: f64,
    pub hazard_b2: f64,
    /// Days simulated before the evaluation window and discarded.
    pub burn_in_days: usize,
    /// Length of the evaluation window (tau).
    pub window_days: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        // Baseline core-periphery market; hazard disabled (pure null).
        SyntheticConfig {
            n_banks: 100,
            core_fraction: 0.5,
            p_core_core: 0.06,
            p_core_periphery: 0.03,
            relationship_fraction: 0.2,
            hazard_b0: 1.0,
            hazard_b1: 1.0,
            hazard_b2: 0.0,
            burn_in_days: 2990,
            window_days: 10,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_banks < 2 {
            return fail(format!("n_banks = {} must be at least 2", self.n_banks));
        }
        if !(0.0..=1.0).contains(&self.core_fraction) {
            return fail(format!("core_fraction = {} outside [0, 1]", self.core_fraction));
        }
        for (name, p) in [
            ("p_core_core", self.p_core_core),
            ("p_core_periphery", self.p_core_periphery),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return fail(format!("{name} = {p} outside [0, 1]"));
            }
        }
        if !(0.0..=1.0).contains(&self.relationship_fraction) {
            return fail(format!(
                "relationship_fraction = {} outside [0, 1]",
                self.relationship_fraction
            ));
        }
        if self.hazard_b0 < 0.0 || self.hazard_b1 < 0.0 || self.hazard_b2 < 0.0 {
            return fail("hazard parameters must be non-negative".into());
        }
        if self.hazard_b1 <= 0.0 {
            return fail("hazard_b1 must be positive".into());
        }
        if self.hazard_b0 > self.hazard_b1 {
            return fail(format!(
                "hazard_b0 = {} must not exceed hazard_b1 = {} (no-trade probability above one)",
                self.hazard_b0, self.hazard_b1
            ));
        }
        if self.window_days == 0 {
            return fail("window_days must be at least 1".into());
        }
        Ok(())
    }

    fn n_core(&self) -> usize {
        (self.core_fraction * self.n_banks as f64).round() as usize
    }
}

/// SplitMix64 step, used to derive independent stream and replication seeds.
pub fn subseed(seed: u64, stream: u64) -> u64 {
    let mut z = seed.wrapping_add(stream.wrapping_mul(0x9E3779B97F4A7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Generator output: the evaluation-window snapshots plus ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticNetwork {
    pub network: Network,
    /// Planted relationship pairs as global bank indices, `i < j`.
    pub planted: BTreeSet<(u32, u32)>,
    pub n_core: usize,
}

impl SyntheticNetwork {
    pub fn planted_ids(&self) -> Vec<(BankId, BankId)> {
        self.planted
            .iter()
            .map(|&(i, j)| {
                (
                    self.network.banks[i as usize].clone(),
                    self.network.banks[j as usize].clone(),
                )
            })
            .collect()
    }
}

/// Emits the sorted hit positions of a Bernoulli(p) scan over `len` slots.
fn sample_hits(rng: &mut ChaCha8Rng, p: f64, len: u64, out: &mut Vec<u64>) {
    out.clear();
    if p <= 0.0 || len == 0 {
        return;
    }
    if p >= 1.0 {
        out.extend(0..len);
        return;
    }
    let gaps = Geometric::new(p).expect("p validated");
    let mut pos = gaps.sample(rng);
    while pos < len {
        out.push(pos);
        pos += 1 + gaps.sample(rng);
    }
}

/// Decodes upper-triangle positions (row-major, i < j) over `n` items.
fn decode_triangle(mut hits: impl Iterator<Item = u64>, n: u64, out: &mut Vec<(u32, u32)>) {
    if n < 2 {
        return;
    }
    let mut row = 0u64;
    let mut row_start = 0u64;
    let mut row_len = n - 1;
    for k in hits.by_ref() {
        while k >= row_start + row_len {
            row_start += row_len;
            row += 1;
            row_len = n - 1 - row;
        }
        let j = row + 1 + (k - row_start);
        out.push((row as u32, j as u32));
    }
}

/// Runs the generator. Deterministic: identical configs give bit-identical
/// snapshot sequences.
pub fn generate(config: &SyntheticConfig) -> Result<SyntheticNetwork> {
    config.validate()?;
    let n = config.n_banks;
    let n_core = config.n_core();
    let n_per = n - n_core;
    let total_days = config.burn_in_days + config.window_days;
    let cc_slots = (n_core as u64) * (n_core as u64).saturating_sub(1) / 2;
    let cp_slots = (n_core as u64) * (n_per as u64);

    // Independent streams so the base draw does not shift when the hazard
    // configuration changes.
    let mut base_rng = ChaCha8Rng::seed_from_u64(subseed(config.seed, 0));
    let mut select_rng = ChaCha8Rng::seed_from_u64(subseed(config.seed, 1));
    let mut hazard_rng = ChaCha8Rng::seed_from_u64(subseed(config.seed, 2));

    // Base edges for every day.
    let mut base_days: Vec<Vec<(u32, u32)>> = Vec::with_capacity(total_days);
    let mut hits = Vec::new();
    for _ in 0..total_days {
        let mut edges: Vec<(u32, u32)> = Vec::new();
        sample_hits(&mut base_rng, config.p_core_core, cc_slots, &mut hits);
        decode_triangle(hits.iter().copied(), n_core as u64, &mut edges);
        sample_hits(&mut base_rng, config.p_core_periphery, cp_slots, &mut hits);
        for &k in &hits {
            let i = (k / n_per as u64) as u32;
            let j = n_core as u32 + (k % n_per as u64) as u32;
            edges.push((i, j));
        }
        edges.sort_unstable();
        base_days.push(edges);
    }

    // Relationship pairs: a fraction of the pairs with at least one base
    // trade inside the evaluation window, drawn without replacement.
    let mut eligible: BTreeSet<(u32, u32)> = BTreeSet::new();
    for day in &base_days[config.burn_in_days..] {
        eligible.extend(day.iter().copied());
    }
    let eligible: Vec<(u32, u32)> = eligible.into_iter().collect();
    let n_planted = (config.relationship_fraction * eligible.len() as f64).round() as usize;
    let mut pool: Vec<usize> = (0..eligible.len()).collect();
    let mut planted: BTreeSet<(u32, u32)> = BTreeSet::new();
    for k in 0..n_planted {
        let pick = select_rng.random_range(k..pool.len());
        pool.swap(k, pick);
        planted.insert(eligible[pool[k]]);
    }

    // Replay with the duration-dependent hazard on planted pairs.
    let epoch = NaiveDate::from_ymd_opt(2000, 1, 3).unwrap();
    let mut streak: BTreeMap<(u32, u32), u32> = planted.iter().map(|&p| (p, 0)).collect();
    let mut days: Vec<DailySnapshot> = Vec::with_capacity(config.window_days);
    for (t, base) in base_days.iter().enumerate() {
        let mut today: BTreeSet<(u32, u32)> = base.iter().copied().collect();
        for (&pair, d) in streak.iter_mut() {
            if !today.contains(&pair) {
                let p_norel = config.hazard_b0 / (config.hazard_b1 + config.hazard_b2 * *d as f64);
                if p_norel < 1.0 && hazard_rng.random::<f64>() < 1.0 - p_norel {
                    today.insert(pair);
                }
            }
            *d = if today.contains(&pair) { *d + 1 } else { 0 };
        }
        if t >= config.burn_in_days {
            let edges = today
                .into_iter()
                .map(|pair| {
                    (
                        pair,
                        DayEdge {
                            trades: 1,
                            volume: 1.0,
                            rate_volume: 0.0,
                            low_to_high: true,
                            high_to_low: false,
                        },
                    )
                })
                .collect();
            days.push(DailySnapshot {
                date: epoch + chrono::Days::new(t as u64),
                edges,
            });
        }
    }

    let banks = (0..n).map(|i| BankId(format!("SB{i:04}"))).collect();
    Ok(SyntheticNetwork {
        network: Network { banks, days },
        planted,
        n_core,
    })
}

/// Outcome of one generate-estimate-test replication.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicationOutcome {
    pub replication: usize,
    pub correction: Correction,
    pub n_tested: usize,
    pub n_significant: usize,
    pub detected_fraction: Real,
    pub precision: Real,
    pub recall: Real,
    pub f1: Real,
    pub converged: bool,
}

/// Aggregate over replications for one correction regime.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PowerSummary {
    pub correction: Correction,
    pub replications: usize,
    pub mean_detected_fraction: Real,
    pub sd_detected_fraction: Real,
    pub q05_detected_fraction: Real,
    pub median_detected_fraction: Real,
    pub q95_detected_fraction: Real,
    pub mean_precision: Real,
    pub mean_recall: Real,
    pub mean_f1: Real,
}

/// Power report for one generator configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PowerPoint {
    pub config: SyntheticConfig,
    pub level_c: Real,
    pub summaries: Vec<PowerSummary>,
}

/// Runs one replication of the generate-estimate-test pipeline and scores
/// the edge-test verdicts against the planted ground truth.
pub fn run_replication(
    base: &SyntheticConfig,
    replication: usize,
    level_c: Real,
    corrections: &[Correction],
) -> Result<Vec<ReplicationOutcome>> {
    let mut config = base.clone();
    config.seed = subseed(base.seed, 1 + replication as u64);
    let synthetic = generate(&config)?;
    let windows = window_counts(
        &synthetic.network,
        config.window_days,
        WindowMode::Fixed,
        false,
    )?;
    let window = &windows[0];
    let estimate = estimate_undirected(window, &EstimateOptions::default())?;

    // planted pairs in window-local indices
    let local: HashMap<&BankId, u32> = window
        .banks
        .iter()
        .enumerate()
        .map(|(i, b)| (b, i as u32))
        .collect();
    let planted_local: BTreeSet<(u32, u32)> = synthetic
        .planted
        .iter()
        .filter_map(|&(gi, gj)| {
            let a = *local.get(&synthetic.network.banks[gi as usize])?;
            let b = *local.get(&synthetic.network.banks[gj as usize])?;
            Some(if a < b { (a, b) } else { (b, a) })
        })
        .collect();

    let mut outcomes = Vec::with_capacity(corrections.len());
    for &correction in corrections {
        let ties = edge_test_constant(window, &estimate, level_c, correction)?;
        let n_tested = ties.len();
        let detected: BTreeSet<(u32, u32)> = ties
            .iter()
            .filter(|t| t.significant)
            .map(|t| t.pair)
            .collect();
        let n_significant = detected.len();
        let true_positives = detected.intersection(&planted_local).count();
        let precision = if n_significant > 0 {
            true_positives as Real / n_significant as Real
        } else {
            1.0
        };
        let recall = if planted_local.is_empty() {
            0.0
        } else {
            true_positives as Real / planted_local.len() as Real
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        outcomes.push(ReplicationOutcome {
            replication,
            correction,
            n_tested,
            n_significant,
            detected_fraction: if n_tested > 0 {
                n_significant as Real / n_tested as Real
            } else {
                0.0
            },
            precision,
            recall,
            f1,
            converged: estimate.converged,
        });
    }
    Ok(outcomes)
}

fn quantile(sorted: &[Real], q: Real) -> Real {
    if sorted.is_empty() {
        return Real::NAN;
    }
    let idx = (q * (sorted.len() - 1) as Real).round() as usize;
    sorted[idx]
}

fn summarize(
    correction: Correction,
    outcomes: &[ReplicationOutcome],
) -> PowerSummary {
    let rows: Vec<&ReplicationOutcome> = outcomes
        .iter()
        .filter(|o| o.correction == correction)
        .collect();
    let n = rows.len();
    let mean = |f: fn(&ReplicationOutcome) -> Real| -> Real {
        rows.iter().map(|o| f(o)).sum::<Real>() / n.max(1) as Real
    };
    let mean_frac = mean(|o| o.detected_fraction);
    let var = rows
        .iter()
        .map(|o| (o.detected_fraction - mean_frac).powi(2))
        .sum::<Real>()
        / (n.saturating_sub(1).max(1)) as Real;
    let mut fractions: Vec<Real> = rows.iter().map(|o| o.detected_fraction).collect();
    fractions.sort_by(|a, b| a.partial_cmp(b).unwrap());
    PowerSummary {
        correction,
        replications: n,
        mean_detected_fraction: mean_frac,
        sd_detected_fraction: var.sqrt(),
        q05_detected_fraction: quantile(&fractions, 0.05),
        median_detected_fraction: quantile(&fractions, 0.5),
        q95_detected_fraction: quantile(&fractions, 0.95),
        mean_precision: mean(|o| o.precision),
        mean_recall: mean(|o| o.recall),
        mean_f1: mean(|o| o.f1),
    }
}

/// Monte Carlo power study over a grid of generator configurations.
///
/// Replication `r` of a grid point reuses the point's seed through
/// [`subseed`], so grids are reproducible and replications can run in
/// parallel; aggregation order is fixed by replication index.
pub fn power_experiment(
    grid: &[SyntheticConfig],
    replications: usize,
    level_c: Real,
    corrections: &[Correction],
) -> Result<Vec<PowerPoint>> {
    if replications == 0 {
        return Err(Error::InvalidArgument("replications must be positive".into()));
    }
    grid.iter().try_for_each(|c| c.validate())?;
    let mut points = Vec::with_capacity(grid.len());
    for config in grid {
        let all: Result<Vec<Vec<ReplicationOutcome>>> = (0..replications)
            .into_par_iter()
            .map(|r| run_replication(config, r, level_c, corrections))
            .collect();
        let outcomes: Vec<ReplicationOutcome> = all?.into_iter().flatten().collect();
        points.push(PowerPoint {
            config: config.clone(),
            level_c,
            summaries: corrections
                .iter()
                .map(|&c| summarize(c, &outcomes))
                .collect(),
        });
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> SyntheticConfig {
        SyntheticConfig {
            n_banks: 30,
            burn_in_days: 40,
            window_days: 10,
            seed: 7,
            ..SyntheticConfig::default()
        }
    }

    #[test]
    fn validation_catches_bad_parameters() {
        let mut c = small_config();
        c.hazard_b0 = 2.0; // above b1
        assert!(matches!(c.validate(), Err(Error::InvalidConfig(_))));
        let mut c = small_config();
        c.p_core_core = 1.5;
        assert!(c.validate().is_err());
        let mut c = small_config();
        c.core_fraction = -0.1;
        assert!(c.validate().is_err());
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let config = small_config();
        let a = generate(&config).unwrap();
        let b = generate(&config).unwrap();
        assert_eq!(a.planted, b.planted);
        assert_eq!(a.network.days.len(), b.network.days.len());
        for (da, db) in a.network.days.iter().zip(&b.network.days) {
            assert_eq!(da, db);
        }
        let mut other = config;
        other.seed = 8;
        let c = generate(&other).unwrap();
        assert!(a.network.days != c.network.days || a.planted != c.planted);
    }

    #[test]
    fn periphery_pairs_never_trade() {
        let mut config = small_config();
        config.hazard_b2 = 5.0;
        let out = generate(&config).unwrap();
        let n_core = out.n_core as u32;
        for day in &out.network.days {
            for &(i, j) in day.edges.keys() {
                assert!(i < n_core || j < n_core, "periphery pair ({i},{j}) traded");
            }
        }
        // planting respects the same support
        for &(i, j) in &out.planted {
            assert!(i < n_core || j < n_core);
        }
    }

    #[test]
    fn null_configuration_plants_by_rounded_fraction() {
        let config = small_config(); // b2 = 0: output equals the base draw
        let out = generate(&config).unwrap();
        let mut trading: BTreeSet<(u32, u32)> = BTreeSet::new();
        for day in &out.network.days {
            trading.extend(day.edges.keys().copied());
        }
        let expect = (0.2 * trading.len() as f64).round() as usize;
        assert_eq!(out.planted.len(), expect);
        assert!(out.planted.iter().all(|p| trading.contains(p)));
    }

    #[test]
    fn null_pair_counts_are_binomial() {
        // Chi-square goodness of fit of core-core counts against
        // Binomial(10, p_cc), bins {0, 1, >=2}, 1% critical value.
        let config = SyntheticConfig {
            n_banks: 60,
            burn_in_days: 5,
            window_days: 10,
            seed: 20260809,
            ..SyntheticConfig::default()
        };
        let out = generate(&config).unwrap();
        let n_core = out.n_core as u32;
        let mut counts: BTreeMap<(u32, u32), u32> = BTreeMap::new();
        for day in &out.network.days {
            for &(i, j) in day.edges.keys() {
                if j < n_core {
                    *counts.entry((i, j)).or_insert(0) += 1;
                }
            }
        }
        let n_pairs = (n_core as usize) * (n_core as usize - 1) / 2;
        let mut observed = [0.0f64; 3];
        observed[0] = (n_pairs - counts.len()) as f64;
        for &m in counts.values() {
            observed[(m as usize).min(2)] += 1.0;
        }
        let p = config.p_core_core;
        let p0 = (1.0 - p).powi(10);
        let p1 = 10.0 * p * (1.0 - p).powi(9);
        let probs = [p0, p1, 1.0 - p0 - p1];
        let mut chi2 = 0.0;
        for (o, pr) in observed.iter().zip(probs) {
            let e = pr * n_pairs as f64;
            chi2 += (o - e).powi(2) / e;
        }
        // dof = 2, 1% critical value
        assert!(chi2 < 9.2103, "chi2 = {chi2}, observed {observed:?}");
    }

    #[test]
    fn streaks_never_break_under_extreme_hazard() {
        // With b2 huge, a planted pair that starts trading keeps trading;
        // its window trading days must form one run ending at the last day.
        let config = SyntheticConfig {
            n_banks: 30,
            burn_in_days: 60,
            window_days: 10,
            hazard_b2: 1e12,
            seed: 3,
            ..SyntheticConfig::default()
        };
        let out = generate(&config).unwrap();
        for &pair in &out.planted {
            let pattern: Vec<bool> = out
                .network
                .days
                .iter()
                .map(|d| d.edges.contains_key(&pair))
                .collect();
            let first = pattern.iter().position(|&b| b);
            if let Some(start) = first {
                assert!(
                    pattern[start..].iter().all(|&b| b),
                    "pair {pair:?} broke its streak: {pattern:?}"
                );
            }
        }
    }

    #[test]
    fn subseeds_differ_across_replications() {
        let s: BTreeSet<u64> = (0..100).map(|r| subseed(42, r)).collect();
        assert_eq!(s.len(), 100);
    }

    #[test]
    fn replication_scores_against_truth() {
        let config = SyntheticConfig {
            n_banks: 40,
            burn_in_days: 100,
            window_days: 10,
            hazard_b2: 5.0,
            seed: 11,
            ..SyntheticConfig::default()
        };
        let outcomes = run_replication(&config, 0, 99.0, &[Correction::None]).unwrap();
        let o = &outcomes[0];
        assert!(o.converged);
        assert!(o.n_tested > 0);
        assert!(o.recall > 0.3, "recall {}", o.recall);
        assert!(o.precision > 0.3, "precision {}", o.precision);
    }
}
