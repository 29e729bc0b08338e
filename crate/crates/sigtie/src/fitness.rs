//! Maximum-likelihood estimation of bank activity levels.
//!
//! Under the null model a pair trades on a given day with probability
//! `u = a_i * a_j` (or `a_i_out * a_j_in` for directed edges), independently
//! across days. Given windowed trade-day counts, the estimator solves the
//! first-order conditions
//!
//! ```text
//! sum_j (m_ij - tau * a_i a_j) / (1 - a_i a_j) = 0     for every bank i
//! ```
//!
//! starting from the configuration-model initialization
//! `a_i = (sum_j m_ij / tau) / sqrt(2 sum_{i<j} m_ij / tau)`. Pairs whose
//! estimated matching probability reaches one are reported in
//! `clipped_pairs` and treated as `u = 1` by every consumer.
//!
//! Four variants exist: constant or per-day activities, undirected or
//! directed edges. Per-day estimation solves one system per day with
//! `tau = 1`, restricted to the banks active on that day.

use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};
use crate::ingest::{Network, WindowedCounts};
use crate::solver::{solve_foc, FocOptions, FocPair, FocProblem, FocSolution};
use crate::{BankId, Real};

/// Which null model an estimate parameterizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    UndirectedConstant,
    UndirectedDaily,
    DirectedConstant,
    DirectedDaily,
}

impl Variant {
    pub fn directed(self) -> bool {
        matches!(self, Variant::DirectedConstant | Variant::DirectedDaily)
    }

    pub fn daily(self) -> bool {
        matches!(self, Variant::UndirectedDaily | Variant::DirectedDaily)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::UndirectedConstant => "undirected",
            Variant::UndirectedDaily => "undirected-daily",
            Variant::DirectedConstant => "directed",
            Variant::DirectedDaily => "directed-daily",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "undirected" => Ok(Variant::UndirectedConstant),
            "undirected-daily" => Ok(Variant::UndirectedDaily),
            "directed" => Ok(Variant::DirectedConstant),
            "directed-daily" => Ok(Variant::DirectedDaily),
            other => Err(Error::InvalidArgument(format!(
                "unknown variant {other:?}; expected undirected, directed, \
                 undirected-daily or directed-daily"
            ))),
        }
    }
}

/// A pair whose matching probability was capped at one.
///
/// Indices are window-local; for directed variants the pair is ordered
/// lender to borrower, otherwise `i < j`. `day` is set by the daily
/// variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ClippedPair {
    pub i: u32,
    pub j: u32,
    pub day: Option<u32>,
}

/// Per-bank activity values for one window.
#[derive(Debug, Clone)]
pub enum ActivityValues {
    UndirectedConstant(Vec<Real>),
    DirectedConstant { out: Vec<Real>, inn: Vec<Real> },
    /// `[day][bank]`; inactive banks carry zero.
    UndirectedDaily(Vec<Vec<Real>>),
    DirectedDaily { out: Vec<Vec<Real>>, inn: Vec<Vec<Real>> },
}

/// Solver knobs; the FOC residual is cheap so the default tolerance is tight.
#[derive(Debug, Clone, Copy)]
pub struct EstimateOptions {
    pub tol: Real,
    pub max_iter: usize,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            tol: 1e-10,
            max_iter: 200,
        }
    }
}

/// Maximum-likelihood activity estimate for one window.
#[derive(Debug, Clone)]
pub struct ActivityEstimate {
    pub window_index: usize,
    pub variant: Variant,
    pub banks: Vec<BankId>,
    pub values: ActivityValues,
    /// `max_i |H_i|` at the solution, over all solved systems.
    pub residual_norm: Real,
    pub iterations: usize,
    pub converged: bool,
    pub clipped_pairs: Vec<ClippedPair>,
    clipped_set: HashSet<(u32, u32, u32)>,
}

const CONSTANT_DAY: u32 = u32::MAX;

impl ActivityEstimate {
    fn new(
        window_index: usize,
        variant: Variant,
        banks: Vec<BankId>,
        values: ActivityValues,
        residual_norm: Real,
        iterations: usize,
        converged: bool,
        clipped_pairs: Vec<ClippedPair>,
    ) -> Self {
        let clipped_set = clipped_pairs
            .iter()
            .map(|c| (c.i, c.j, c.day.unwrap_or(CONSTANT_DAY)))
            .collect();
        ActivityEstimate {
            window_index,
            variant,
            banks,
            values,
            residual_norm,
            iterations,
            converged,
            clipped_pairs,
            clipped_set,
        }
    }

    /// Rebuilds an estimate from its serialized parts.
    pub fn from_parts(
        window_index: usize,
        variant: Variant,
        banks: Vec<BankId>,
        values: ActivityValues,
        residual_norm: Real,
        iterations: usize,
        converged: bool,
        clipped_pairs: Vec<ClippedPair>,
    ) -> Self {
        Self::new(
            window_index,
            variant,
            banks,
            values,
            residual_norm,
            iterations,
            converged,
            clipped_pairs,
        )
    }

    pub fn n_banks(&self) -> usize {
        self.banks.len()
    }

    /// Number of days covered by a daily estimate, zero otherwise.
    pub fn n_days(&self) -> usize {
        match &self.values {
            ActivityValues::UndirectedDaily(a) => a.len(),
            ActivityValues::DirectedDaily { out, .. } => out.len(),
            _ => 0,
        }
    }

    fn is_clipped(&self, i: u32, j: u32, day: u32) -> bool {
        self.clipped_set.contains(&(i, j, day))
    }

    /// Daily matching probability of an unordered pair (constant variant).
    pub fn pair_prob(&self, i: u32, j: u32) -> Real {
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        if self.is_clipped(lo, hi, CONSTANT_DAY) {
            return 1.0;
        }
        match &self.values {
            ActivityValues::UndirectedConstant(a) => {
                (a[lo as usize] * a[hi as usize]).min(1.0)
            }
            _ => panic!("pair_prob on non undirected-constant estimate"),
        }
    }

    /// Daily matching probability of an ordered pair (directed constant).
    pub fn directed_pair_prob(&self, from: u32, to: u32) -> Real {
        if self.is_clipped(from, to, CONSTANT_DAY) {
            return 1.0;
        }
        match &self.values {
            ActivityValues::DirectedConstant { out, inn } => {
                (out[from as usize] * inn[to as usize]).min(1.0)
            }
            _ => panic!("directed_pair_prob on non directed-constant estimate"),
        }
    }

    /// Matching probability of an unordered pair on day `t` (daily variant).
    pub fn pair_prob_on_day(&self, i: u32, j: u32, t: u32) -> Real {
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        if self.is_clipped(lo, hi, t) {
            return 1.0;
        }
        match &self.values {
            ActivityValues::UndirectedDaily(a) => {
                (a[t as usize][lo as usize] * a[t as usize][hi as usize]).min(1.0)
            }
            _ => panic!("pair_prob_on_day on non undirected-daily estimate"),
        }
    }

    /// Matching probability of an ordered pair on day `t` (directed daily).
    pub fn directed_pair_prob_on_day(&self, from: u32, to: u32, t: u32) -> Real {
        if self.is_clipped(from, to, t) {
            return 1.0;
        }
        match &self.values {
            ActivityValues::DirectedDaily { out, inn } => {
                (out[t as usize][from as usize] * inn[t as usize][to as usize]).min(1.0)
            }
            _ => panic!("directed_pair_prob_on_day on non directed-daily estimate"),
        }
    }

    /// Null probability that the unordered pair trades at least once in the
    /// window: `1 - (1-u)^tau`, or `1 - prod_t (1 - u_t)` for daily models.
    pub fn edge_prob(&self, i: u32, j: u32, tau: usize) -> Real {
        match &self.values {
            ActivityValues::UndirectedConstant(_) => {
                1.0 - (1.0 - self.pair_prob(i, j)).powi(tau as i32)
            }
            ActivityValues::UndirectedDaily(days) => {
                let mut survive = 1.0;
                for t in 0..days.len() {
                    survive *= 1.0 - self.pair_prob_on_day(i, j, t as u32);
                }
                1.0 - survive
            }
            _ => panic!("edge_prob on directed estimate"),
        }
    }

    /// Directed analogue of [`Self::edge_prob`] for an ordered pair.
    pub fn directed_edge_prob(&self, from: u32, to: u32, tau: usize) -> Real {
        match &self.values {
            ActivityValues::DirectedConstant { .. } => {
                1.0 - (1.0 - self.directed_pair_prob(from, to)).powi(tau as i32)
            }
            ActivityValues::DirectedDaily { out, .. } => {
                let mut survive = 1.0;
                for t in 0..out.len() {
                    survive *= 1.0 - self.directed_pair_prob_on_day(from, to, t as u32);
                }
                1.0 - survive
            }
            _ => panic!("directed_edge_prob on undirected estimate"),
        }
    }
}

fn clip_from_solution(
    solution: &FocSolution<Real>,
    pairs: &[FocPair],
    to_pair: impl Fn(&FocPair) -> (u32, u32),
    day: Option<u32>,
) -> Vec<ClippedPair> {
    solution
        .saturated_pairs
        .iter()
        .map(|&idx| {
            let (i, j) = to_pair(&pairs[idx]);
            ClippedPair { i, j, day }
        })
        .collect()
}

/// Fits constant undirected activities to one window.
pub fn estimate_undirected(
    window: &WindowedCounts,
    options: &EstimateOptions,
) -> Result<ActivityEstimate> {
    let n = window.n_banks();
    if n < 2 {
        return Err(Error::TooFewBanks(n));
    }
    let tau = window.tau() as u32;
    let m = window.dense_m();

    let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            pairs.push(FocPair {
                a: i as u32,
                b: j as u32,
                m: m[i * n + j],
            });
        }
    }
    let problem = FocProblem {
        n_vars: n,
        tau,
        pairs,
    };

    // Configuration-model start: daily mean degree over the square root of
    // twice the daily mean edge total.
    let tau_f = tau as Real;
    let degrees: Vec<Real> = (0..n)
        .map(|i| (0..n).map(|j| m[i * n + j]).sum::<u32>() as Real / tau_f)
        .collect();
    let total_edges: Real = degrees.iter().sum::<Real>() / 2.0;
    let denom = (2.0 * total_edges).sqrt().max(1e-12);
    let init: Vec<Real> = degrees.iter().map(|d| (d / denom).max(1e-9)).collect();

    let foc = FocOptions {
        tol: options.tol,
        max_iter: options.max_iter,
    };
    let solution = solve_foc(&problem, &init, &foc);
    let clipped = clip_from_solution(&solution, &problem.pairs, |p| (p.a, p.b), None);

    Ok(ActivityEstimate::new(
        window.index,
        Variant::UndirectedConstant,
        window.banks.clone(),
        ActivityValues::UndirectedConstant(solution.values),
        solution.residual_norm,
        solution.iterations,
        solution.converged,
        clipped,
    ))
}

/// Fits constant directed activities (`2N` equations) to one window.
///
/// Banks without any lending (or borrowing) day in the window get their
/// out-activity (or in-activity) pinned to zero and drop out of the
/// corresponding system. The remaining scale freedom
/// `(a_out, a_in) -> (c a_out, a_in / c)` is fixed by normalizing
/// `sum a_out = sum a_in`; every observable is invariant to this choice.
pub fn estimate_directed(
    window: &WindowedCounts,
    options: &EstimateOptions,
) -> Result<ActivityEstimate> {
    let n = window.n_banks();
    if n < 2 {
        return Err(Error::TooFewBanks(n));
    }
    if !window.directed {
        return Err(Error::MissingDirectedCounts(window.index));
    }
    let tau = window.tau() as u32;
    let m = window.dense_directed_m();

    // Variables 0..n are out-activities, n..2n are in-activities.
    let mut pairs = Vec::with_capacity(n * (n - 1));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                pairs.push(FocPair {
                    a: i as u32,
                    b: (n + j) as u32,
                    m: m[i * n + j],
                });
            }
        }
    }
    let problem = FocProblem {
        n_vars: 2 * n,
        tau,
        pairs,
    };

    let tau_f = tau as Real;
    let out_deg: Vec<Real> = (0..n)
        .map(|i| (0..n).map(|j| m[i * n + j]).sum::<u32>() as Real / tau_f)
        .collect();
    let in_deg: Vec<Real> = (0..n)
        .map(|j| (0..n).map(|i| m[i * n + j]).sum::<u32>() as Real / tau_f)
        .collect();
    let total: Real = out_deg.iter().sum();
    let denom = total.sqrt().max(1e-12);
    let mut init: Vec<Real> = Vec::with_capacity(2 * n);
    init.extend(out_deg.iter().map(|d| (d / denom).max(1e-9)));
    init.extend(in_deg.iter().map(|d| (d / denom).max(1e-9)));

    let foc = FocOptions {
        tol: options.tol,
        max_iter: options.max_iter,
    };
    let solution = solve_foc(&problem, &init, &foc);
    let clipped = clip_from_solution(
        &solution,
        &problem.pairs,
        |p| (p.a, p.b - n as u32),
        None,
    );

    let mut out: Vec<Real> = solution.values[..n].to_vec();
    let mut inn: Vec<Real> = solution.values[n..].to_vec();
    let sum_out: Real = out.iter().sum();
    let sum_in: Real = inn.iter().sum();
    if sum_out > 0.0 && sum_in > 0.0 {
        let c = (sum_in / sum_out).sqrt();
        for v in &mut out {
            *v *= c;
        }
        for v in &mut inn {
            *v /= c;
        }
    }

    Ok(ActivityEstimate::new(
        window.index,
        Variant::DirectedConstant,
        window.banks.clone(),
        ActivityValues::DirectedConstant { out, inn },
        solution.residual_norm,
        solution.iterations,
        solution.converged,
        clipped,
    ))
}

/// Fits one activity vector per day of the window (`tau = 1` systems).
///
/// Banks without trades on day `t` get `a_i(t) = 0` and leave that day's
/// system; indices stay aligned with the window bank list. A day with
/// fewer than two active banks contributes `u = 0` for every pair.
pub fn estimate_daily(
    network: &Network,
    window: &WindowedCounts,
    directed: bool,
    options: &EstimateOptions,
) -> Result<ActivityEstimate> {
    let n = window.n_banks();
    if n < 2 {
        return Err(Error::TooFewBanks(n));
    }
    if directed && !window.directed {
        return Err(Error::MissingDirectedCounts(window.index));
    }
    let bank_index = network.bank_index();
    let mut global_to_local: HashMap<u32, u32> = HashMap::new();
    for (local, bank) in window.banks.iter().enumerate() {
        let global = *bank_index
            .get(bank)
            .ok_or(Error::BankSetMismatch)?;
        global_to_local.insert(global, local as u32);
    }

    let foc = FocOptions {
        tol: options.tol,
        max_iter: options.max_iter,
    };
    let mut residual_norm: Real = 0.0;
    let mut iterations = 0usize;
    let mut converged = true;
    let mut clipped_pairs = Vec::new();
    let mut daily_a: Vec<Vec<Real>> = Vec::with_capacity(window.dates.len());
    let mut daily_out: Vec<Vec<Real>> = Vec::with_capacity(window.dates.len());
    let mut daily_in: Vec<Vec<Real>> = Vec::with_capacity(window.dates.len());

    for (t, date) in window.dates.iter().enumerate() {
        let snapshot = network.day_by_date(*date).ok_or_else(|| {
            Error::InvalidArgument(format!("window date {date} missing from snapshots"))
        })?;
        // Today's edges among the window's banks, in local indices.
        let mut edges: Vec<(u32, u32, bool, bool)> = Vec::new();
        let mut active: Vec<bool> = vec![false; n];
        for (&(gi, gj), edge) in &snapshot.edges {
            if let (Some(&li), Some(&lj)) =
                (global_to_local.get(&gi), global_to_local.get(&gj))
            {
                edges.push((li, lj, edge.low_to_high, edge.high_to_low));
                active[li as usize] = true;
                active[lj as usize] = true;
            }
        }
        let day_banks: Vec<u32> = (0..n as u32).filter(|&b| active[b as usize]).collect();

        if day_banks.len() < 2 {
            if directed {
                daily_out.push(vec![0.0; n]);
                daily_in.push(vec![0.0; n]);
            } else {
                daily_a.push(vec![0.0; n]);
            }
            continue;
        }

        let local_of: HashMap<u32, u32> = day_banks
            .iter()
            .enumerate()
            .map(|(k, &b)| (b, k as u32))
            .collect();
        let nd = day_banks.len();

        if directed {
            let mut m = vec![0u32; nd * nd];
            for &(li, lj, fwd, rev) in &edges {
                let (a, b) = (local_of[&li] as usize, local_of[&lj] as usize);
                if fwd {
                    m[a * nd + b] = 1;
                }
                if rev {
                    m[b * nd + a] = 1;
                }
            }
            let mut pairs = Vec::with_capacity(nd * (nd - 1));
            for i in 0..nd {
                for j in 0..nd {
                    if i != j {
                        pairs.push(FocPair {
                            a: i as u32,
                            b: (nd + j) as u32,
                            m: m[i * nd + j],
                        });
                    }
                }
            }
            let problem = FocProblem {
                n_vars: 2 * nd,
                tau: 1,
                pairs,
            };
            let total: Real = m.iter().map(|&v| v as Real).sum();
            let denom = total.sqrt().max(1e-12);
            let mut init = Vec::with_capacity(2 * nd);
            for i in 0..nd {
                let d: Real = (0..nd).map(|j| m[i * nd + j] as Real).sum();
                init.push((d / denom).max(1e-9));
            }
            for j in 0..nd {
                let d: Real = (0..nd).map(|i| m[i * nd + j] as Real).sum();
                init.push((d / denom).max(1e-9));
            }
            let solution = solve_foc(&problem, &init, &foc);
            let mut out = vec![0.0; n];
            let mut inn = vec![0.0; n];
            for (k, &b) in day_banks.iter().enumerate() {
                out[b as usize] = solution.values[k];
                inn[b as usize] = solution.values[nd + k];
            }
            clipped_pairs.extend(clip_from_solution(
                &solution,
                &problem.pairs,
                |p| {
                    (
                        day_banks[p.a as usize],
                        day_banks[(p.b as usize) - nd],
                    )
                },
                Some(t as u32),
            ));
            residual_norm = residual_norm.max(solution.residual_norm);
            iterations = iterations.max(solution.iterations);
            converged &= solution.converged;
            daily_out.push(out);
            daily_in.push(inn);
        } else {
            let mut m = vec![0u32; nd * nd];
            for &(li, lj, _, _) in &edges {
                let (a, b) = (local_of[&li] as usize, local_of[&lj] as usize);
                m[a * nd + b] = 1;
                m[b * nd + a] = 1;
            }
            let mut pairs = Vec::with_capacity(nd * (nd - 1) / 2);
            for i in 0..nd {
                for j in (i + 1)..nd {
                    pairs.push(FocPair {
                        a: i as u32,
                        b: j as u32,
                        m: m[i * nd + j],
                    });
                }
            }
            let problem = FocProblem {
                n_vars: nd,
                tau: 1,
                pairs,
            };
            let degrees: Vec<Real> = (0..nd)
                .map(|i| (0..nd).map(|j| m[i * nd + j] as Real).sum())
                .collect();
            let total: Real = degrees.iter().sum();
            let denom = total.sqrt().max(1e-12);
            let init: Vec<Real> = degrees.iter().map(|d| (d / denom).max(1e-9)).collect();
            let solution = solve_foc(&problem, &init, &foc);
            let mut a = vec![0.0; n];
            for (k, &b) in day_banks.iter().enumerate() {
                a[b as usize] = solution.values[k];
            }
            clipped_pairs.extend(clip_from_solution(
                &solution,
                &problem.pairs,
                |p| {
                    let gi = day_banks[p.a as usize];
                    let gj = day_banks[p.b as usize];
                    if gi < gj {
                        (gi, gj)
                    } else {
                        (gj, gi)
                    }
                },
                Some(t as u32),
            ));
            residual_norm = residual_norm.max(solution.residual_norm);
            iterations = iterations.max(solution.iterations);
            converged &= solution.converged;
            daily_a.push(a);
        }
    }

    let (variant, values) = if directed {
        (
            Variant::DirectedDaily,
            ActivityValues::DirectedDaily {
                out: daily_out,
                inn: daily_in,
            },
        )
    } else {
        (
            Variant::UndirectedDaily,
            ActivityValues::UndirectedDaily(daily_a),
        )
    };
    Ok(ActivityEstimate::new(
        window.index,
        variant,
        window.banks.clone(),
        values,
        residual_norm,
        iterations,
        converged,
        clipped_pairs,
    ))
}

/// Dispatches on the variant.
pub fn estimate(
    network: &Network,
    window: &WindowedCounts,
    variant: Variant,
    options: &EstimateOptions,
) -> Result<ActivityEstimate> {
    match variant {
        Variant::UndirectedConstant => estimate_undirected(window, options),
        Variant::DirectedConstant => estimate_directed(window, options),
        Variant::UndirectedDaily => estimate_daily(network, window, false, options),
        Variant::DirectedDaily => estimate_daily(network, window, true, options),
    }
}

/// Expected number of trades in the window under the null (`M*`).
pub fn expected_edges(estimate: &ActivityEstimate, tau: usize) -> Real {
    let n = estimate.n_banks() as u32;
    match &estimate.values {
        ActivityValues::UndirectedConstant(_) => {
            let mut acc = 0.0;
            for i in 0..n {
                for j in (i + 1)..n {
                    acc += estimate.pair_prob(i, j);
                }
            }
            tau as Real * acc
        }
        ActivityValues::UndirectedDaily(days) => {
            let mut acc = 0.0;
            for t in 0..days.len() as u32 {
                for i in 0..n {
                    for j in (i + 1)..n {
                        acc += estimate.pair_prob_on_day(i, j, t);
                    }
                }
            }
            acc
        }
        ActivityValues::DirectedConstant { .. } => {
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        acc += estimate.directed_pair_prob(i, j);
                    }
                }
            }
            tau as Real * acc
        }
        ActivityValues::DirectedDaily { out, .. } => {
            let mut acc = 0.0;
            for t in 0..out.len() as u32 {
                for i in 0..n {
                    for j in 0..n {
                        if i != j {
                            acc += estimate.directed_pair_prob_on_day(i, j, t);
                        }
                    }
                }
            }
            acc
        }
    }
}

/// Expected mean aggregate degree under the null (`K*`):
/// `(1/N) sum_{i != j} [1 - (1 - u_ij)^tau]`.
pub fn expected_mean_degree(estimate: &ActivityEstimate, tau: usize) -> Real {
    let n = estimate.n_banks() as u32;
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            acc += if estimate.variant.directed() {
                estimate.directed_edge_prob(i, j, tau)
            } else {
                estimate.edge_prob(i, j, tau)
            };
        }
    }
    acc / n as Real
}

/// Empirical mean aggregate degree of a window: `(1/N) sum_ij A_ij`.
pub fn empirical_mean_degree(window: &WindowedCounts) -> Real {
    2.0 * window.pairs.len() as Real / window.n_banks() as Real
}

/// Empirical trade total of a window: `M = sum_{i<j} m_ij`.
pub fn empirical_edges(window: &WindowedCounts) -> Real {
    window.pairs.values().map(|p| p.days as Real).sum()
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use crate::ingest::PairCounts;
    use chrono::NaiveDate;
    use std::collections::BTreeMap;

    /// Builds a window from `(i, j, m, m_fwd, m_rev)` entries.
    pub fn window(
        n: usize,
        tau: usize,
        directed: bool,
        entries: &[(u32, u32, u32, u32, u32)],
    ) -> WindowedCounts {
        let banks = (0..n).map(|i| BankId(format!("B{i:03}"))).collect();
        let dates = (0..tau)
            .map(|t| {
                NaiveDate::from_ymd_opt(2001, 1, 1).unwrap() + chrono::Days::new(t as u64)
            })
            .collect();
        let mut pairs = BTreeMap::new();
        for &(i, j, m, fwd, rev) in entries {
            assert!(i < j && m >= 1);
            pairs.insert(
                (i, j),
                PairCounts {
                    days: m,
                    days_low_to_high: fwd,
                    days_high_to_low: rev,
                    trades: m,
                    volume: m as Real,
                },
            );
        }
        WindowedCounts {
            index: 0,
            dates,
            banks,
            pairs,
            directed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::window;
    use super::*;

    #[test]
    fn two_banks_recover_the_product() {
        let w = window(2, 10, false, &[(0, 1, 5, 0, 0)]);
        let est = estimate_undirected(&w, &EstimateOptions::default()).unwrap();
        assert!(est.converged);
        let u = est.pair_prob(0, 1);
        assert!((u - 0.5).abs() < 1e-9, "u = {u}");
        assert!(est.clipped_pairs.is_empty());
    }

    #[test]
    fn symmetric_complete_window() {
        let entries: Vec<_> = (0..4u32)
            .flat_map(|i| ((i + 1)..4).map(move |j| (i, j, 5, 0, 0)))
            .collect();
        let w = window(4, 10, false, &entries);
        let est = estimate_undirected(&w, &EstimateOptions::default()).unwrap();
        assert!(est.converged);
        if let ActivityValues::UndirectedConstant(a) = &est.values {
            for v in a {
                assert!((v - 0.5f64.sqrt()).abs() < 1e-8);
            }
        } else {
            panic!("wrong variant");
        }
    }

    #[test]
    fn rejects_single_bank() {
        let w = window(1, 10, false, &[]);
        assert!(matches!(
            estimate_undirected(&w, &EstimateOptions::default()),
            Err(Error::TooFewBanks(1))
        ));
    }

    #[test]
    fn directed_zero_count_pins() {
        // 0 lends to 1 on four days, never borrows back.
        let w = window(2, 10, true, &[(0, 1, 4, 4, 0)]);
        let est = estimate_directed(&w, &EstimateOptions::default()).unwrap();
        assert!(est.converged);
        let u = est.directed_pair_prob(0, 1);
        assert!((u - 0.4).abs() < 1e-8, "u = {u}");
        assert_eq!(est.directed_pair_prob(1, 0), 0.0);
        if let ActivityValues::DirectedConstant { out, inn } = &est.values {
            assert_eq!(out[1], 0.0);
            assert_eq!(inn[0], 0.0);
            // gauge: sum out equals sum in
            let so: Real = out.iter().sum();
            let si: Real = inn.iter().sum();
            assert!((so - si).abs() < 1e-9);
        } else {
            panic!("wrong variant");
        }
    }

    #[test]
    fn symmetric_directed_counts_give_equal_in_out() {
        let entries: Vec<_> = (0..4u32)
            .flat_map(|i| ((i + 1)..4).map(move |j| (i, j, 5, 5, 5)))
            .collect();
        let w = window(4, 10, true, &entries);
        let est = estimate_directed(&w, &EstimateOptions::default()).unwrap();
        assert!(est.converged);
        if let ActivityValues::DirectedConstant { out, inn } = &est.values {
            for (o, i) in out.iter().zip(inn) {
                assert!((o - i).abs() < 1e-7, "out {o} vs in {i}");
            }
        } else {
            panic!("wrong variant");
        }
    }

    #[test]
    fn directed_rescaling_leaves_probabilities_fixed() {
        let w = window(3, 10, true, &[(0, 1, 4, 3, 2), (1, 2, 6, 5, 3), (0, 2, 2, 1, 1)]);
        let est = estimate_directed(&w, &EstimateOptions::default()).unwrap();
        let (out, inn) = match &est.values {
            ActivityValues::DirectedConstant { out, inn } => (out.clone(), inn.clone()),
            _ => panic!(),
        };
        let c = 3.7;
        let rescaled = ActivityEstimate::from_parts(
            est.window_index,
            est.variant,
            est.banks.clone(),
            ActivityValues::DirectedConstant {
                out: out.iter().map(|v| v * c).collect(),
                inn: inn.iter().map(|v| v / c).collect(),
            },
            est.residual_norm,
            est.iterations,
            est.converged,
            est.clipped_pairs.clone(),
        );
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    let a = est.directed_pair_prob(i, j);
                    let b = rescaled.directed_pair_prob(i, j);
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
        let tau = 10;
        assert!((expected_edges(&est, tau) - expected_edges(&rescaled, tau)).abs() < 1e-9);
        assert!(
            (expected_mean_degree(&est, tau) - expected_mean_degree(&rescaled, tau)).abs() < 1e-9
        );
    }

    #[test]
    fn expected_statistics_match_closed_forms() {
        // Single pair with u = 0.5 at tau = 10: M* = 5.
        let w = window(2, 10, false, &[(0, 1, 5, 0, 0)]);
        let est = estimate_undirected(&w, &EstimateOptions::default()).unwrap();
        assert!((expected_edges(&est, 10) - 5.0).abs() < 1e-8);

        // K* with u = 0.1, tau = 10, N = 2 is 1 - 0.9^10 on both ends.
        let manual = ActivityEstimate::from_parts(
            0,
            Variant::UndirectedConstant,
            vec![BankId::from("A"), BankId::from("B")],
            ActivityValues::UndirectedConstant(vec![0.25, 0.4]),
            0.0,
            0,
            true,
            vec![],
        );
        let k = expected_mean_degree(&manual, 10);
        let expect = 1.0 - (1.0 - 0.1f64).powi(10);
        assert!((k - expect).abs() < 1e-12, "K* = {k}");
    }

    #[test]
    fn symmetric_four_banks_mstar() {
        // u = 0.5 on all six pairs at tau = 10: M* = 30.
        let manual = ActivityEstimate::from_parts(
            0,
            Variant::UndirectedConstant,
            (0..4).map(|i| BankId(format!("B{i}"))).collect(),
            ActivityValues::UndirectedConstant(vec![0.5f64.sqrt(); 4]),
            0.0,
            0,
            true,
            vec![],
        );
        assert!((expected_edges(&manual, 10) - 30.0).abs() < 1e-9);
    }

    #[test]
    fn clipped_pair_probability_is_one() {
        let manual = ActivityEstimate::from_parts(
            0,
            Variant::UndirectedConstant,
            vec![BankId::from("A"), BankId::from("B")],
            ActivityValues::UndirectedConstant(vec![0.1, 0.1]),
            0.0,
            0,
            true,
            vec![ClippedPair { i: 0, j: 1, day: None }],
        );
        assert_eq!(manual.pair_prob(0, 1), 1.0);
        assert_eq!(manual.edge_prob(0, 1, 10), 1.0);
    }

    #[test]
    fn permutation_equivariance() {
        let entries = [
            (0u32, 1u32, 4u32, 0u32, 0u32),
            (0, 2, 2, 0, 0),
            (1, 2, 6, 0, 0),
            (1, 3, 1, 0, 0),
            (2, 3, 3, 0, 0),
        ];
        let w = window(4, 10, false, &entries);
        let est = estimate_undirected(&w, &EstimateOptions::default()).unwrap();

        // permutation (0 1 2 3) -> (2 0 3 1)
        let perm = [2u32, 0, 3, 1];
        let permuted: Vec<_> = entries
            .iter()
            .map(|&(i, j, m, _, _)| {
                let (pi, pj) = (perm[i as usize], perm[j as usize]);
                if pi < pj {
                    (pi, pj, m, 0, 0)
                } else {
                    (pj, pi, m, 0, 0)
                }
            })
            .collect();
        let wp = window(4, 10, false, &permuted);
        let estp = estimate_undirected(&wp, &EstimateOptions::default()).unwrap();

        let a = match &est.values {
            ActivityValues::UndirectedConstant(a) => a.clone(),
            _ => panic!(),
        };
        let ap = match &estp.values {
            ActivityValues::UndirectedConstant(a) => a.clone(),
            _ => panic!(),
        };
        for i in 0..4 {
            assert!(
                (a[i] - ap[perm[i] as usize]).abs() < 1e-8,
                "bank {i}: {} vs {}",
                a[i],
                ap[perm[i] as usize]
            );
        }
    }
}
