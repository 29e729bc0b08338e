//! Significance tests for tie counts and partner counts.
//!
//! The edge test asks whether a pair's trade-day count `m_ij` is too large
//! for random matching at the estimated activity levels: under a constant
//! activity model the count is Binomial(tau, u); under per-day activities it
//! is Poisson-binomial and approximated by a Poisson law with the matching
//! mean, with a Le Cam bound on the approximation error attached to every
//! verdict.
//!
//! The node test asks whether a bank's number of unique partners is too
//! small: the partner count is Poisson-binomial over the per-pair window
//! probabilities `p_ij = 1 - (1 - u)^tau` and is approximated by
//! Poisson(lambda_i) with `lambda_i = sum_j p_ij`.
//!
//! Percentile conventions are discrete: the threshold is the smallest
//! integer whose CDF reaches the level, significance requires strictly
//! exceeding it, and the node test flags dependence when the CDF at the
//! observed count is at or below `c'/100`.

use serde::{Deserialize, Serialize};

use crate::dist::{
    binomial_threshold, binomial_upper_tail, lecam_bound, poisson_cdf, poisson_threshold,
    poisson_upper_tail,
};
use crate::error::{Error, Result};
use crate::fitness::{ActivityEstimate, Variant};
use crate::ingest::WindowedCounts;
use crate::Real;

/// Multiple-testing regime for a window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Correction {
    None,
    /// Per-test level divided by the number of tests actually run in the
    /// window (pairs with `m_ij >= 1`, or testable banks).
    Bonferroni,
}

impl std::fmt::Display for Correction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Correction::None => "none",
            Correction::Bonferroni => "bonferroni",
        })
    }
}

/// Why a test could not be carried out normally.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestFlag {
    Ok,
    /// The pair's matching probability was clipped at one; any count up to
    /// tau is explainable by chance, so the pair is never significant.
    ClippedProbability,
    /// The null assigns probability zero to the observed outcome.
    ModelViolation,
    /// The null mean is zero and the observation matches it.
    Untestable,
}

/// Edge-test verdict for one pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TieTestResult {
    /// Window-local bank indices; ordered lender to borrower in directed
    /// variants, `i < j` otherwise.
    pub pair: (u32, u32),
    pub m: u32,
    /// Null probability of a count at least as large as `m`.
    pub p_value: Real,
    /// Smallest count whose null CDF reaches the test level.
    pub threshold: u32,
    pub significant: bool,
    pub variant: Variant,
    pub correction: Correction,
    pub flag: TestFlag,
    /// Le Cam bound on the Poisson approximation error (daily variants).
    pub lecam_bound: Option<Real>,
}

/// Node-test verdict for one bank.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeTestResult {
    pub bank: u32,
    /// Number of unique partners in the window (aggregate degree).
    pub degree: u32,
    /// Poisson mean of the null partner-count law.
    pub lambda: Real,
    /// Null CDF at the observed degree.
    pub p_value: Real,
    /// Smallest degree whose null CDF reaches `c'/100`.
    pub threshold: u32,
    pub dependent: bool,
    pub lecam_bound: Real,
    pub direction: Direction,
    pub flag: TestFlag,
}

/// Which partner set a node test looks at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Undirected,
    /// Dependence on creditors: partners that lend to the bank.
    Borrowing,
    /// Dependence on borrowers: partners the bank lends to.
    Lending,
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Direction::Undirected => "undirected",
            Direction::Borrowing => "borrowing",
            Direction::Lending => "lending",
        })
    }
}

fn check_level(c: Real) -> Result<()> {
    if !(c > 50.0 && c < 100.0) {
        return Err(Error::InvalidArgument(format!(
            "edge test level c = {c} must lie in (50, 100)"
        )));
    }
    Ok(())
}

/// Pairs subject to the edge test: undirected pairs with `m >= 1`, or
/// ordered pairs with a directed count in directed variants.
fn tested_pairs(window: &WindowedCounts, directed: bool) -> Vec<((u32, u32), u32)> {
    let mut out = Vec::new();
    for (&(i, j), counts) in &window.pairs {
        if directed {
            if counts.days_low_to_high >= 1 {
                out.push(((i, j), counts.days_low_to_high));
            }
            if counts.days_high_to_low >= 1 {
                out.push(((j, i), counts.days_high_to_low));
            }
        } else if counts.days >= 1 {
            out.push(((i, j), counts.days));
        }
    }
    out
}

/// Edge-based test under a constant-activity estimate.
///
/// Every realized pair is tested against Binomial(tau, u); a pair is
/// significant when its count strictly exceeds the c-th percentile of that
/// law. Bonferroni divides the per-test level `1 - c/100` by the number of
/// realized pairs in the window.
pub fn edge_test_constant(
    window: &WindowedCounts,
    estimate: &ActivityEstimate,
    c: Real,
    correction: Correction,
) -> Result<Vec<TieTestResult>> {
    check_level(c)?;
    let directed = match estimate.variant {
        Variant::UndirectedConstant => false,
        Variant::DirectedConstant => true,
        other => {
            return Err(Error::VariantMismatch {
                expected: "a constant-activity estimate",
                found: other.name(),
            })
        }
    };
    if estimate.banks != window.banks {
        return Err(Error::BankSetMismatch);
    }
    let tau = window.tau() as u32;
    let tests = tested_pairs(window, directed);
    let alpha = per_test_alpha(c, correction, tests.len());
    let level = 1.0 - alpha;

    Ok(tests
        .into_iter()
        .map(|((a, b), m)| {
            let u = if directed {
                estimate.directed_pair_prob(a, b)
            } else {
                estimate.pair_prob(a, b)
            };
            if u >= 1.0 {
                // Degenerate null: the count is tau almost surely.
                return TieTestResult {
                    pair: (a, b),
                    m,
                    p_value: 1.0,
                    threshold: tau,
                    significant: false,
                    variant: estimate.variant,
                    correction,
                    flag: TestFlag::ClippedProbability,
                    lecam_bound: None,
                };
            }
            let threshold = binomial_threshold(tau, u, level);
            TieTestResult {
                pair: (a, b),
                m,
                p_value: binomial_upper_tail(tau, u, m),
                threshold,
                significant: m > threshold,
                variant: estimate.variant,
                correction,
                flag: TestFlag::Ok,
                lecam_bound: None,
            }
        })
        .collect())
}

/// Edge-based test under per-day activities.
///
/// The count of a pair is Poisson-binomial across days; it is tested
/// against Poisson(lambda) with `lambda = sum_t u_t`, and the Le Cam bound
/// `2 (1 - e^-lambda) / lambda * sum_t u_t^2` is attached.
pub fn edge_test_daily(
    window: &WindowedCounts,
    estimate: &ActivityEstimate,
    c: Real,
    correction: Correction,
) -> Result<Vec<TieTestResult>> {
    check_level(c)?;
    let directed = match estimate.variant {
        Variant::UndirectedDaily => false,
        Variant::DirectedDaily => true,
        other => {
            return Err(Error::VariantMismatch {
                expected: "a per-day estimate",
                found: other.name(),
            })
        }
    };
    if estimate.banks != window.banks {
        return Err(Error::BankSetMismatch);
    }
    let days = estimate.n_days() as u32;
    let tests = tested_pairs(window, directed);
    let alpha = per_test_alpha(c, correction, tests.len());
    let level = 1.0 - alpha;

    Ok(tests
        .into_iter()
        .map(|((a, b), m)| {
            let mut lambda = 0.0;
            let mut sum_sq = 0.0;
            for t in 0..days {
                let u = if directed {
                    estimate.directed_pair_prob_on_day(a, b, t)
                } else {
                    estimate.pair_prob_on_day(a, b, t)
                };
                lambda += u;
                sum_sq += u * u;
            }
            let bound = lecam_bound(lambda, sum_sq);
            if lambda <= 0.0 {
                // The pair traded but the null forbids it outright.
                return TieTestResult {
                    pair: (a, b),
                    m,
                    p_value: 0.0,
                    threshold: 0,
                    significant: true,
                    variant: estimate.variant,
                    correction,
                    flag: TestFlag::ModelViolation,
                    lecam_bound: Some(bound),
                };
            }
            let threshold = poisson_threshold(lambda, level);
            TieTestResult {
                pair: (a, b),
                m,
                p_value: poisson_upper_tail(lambda, m),
                threshold,
                significant: m > threshold,
                variant: estimate.variant,
                correction,
                flag: TestFlag::Ok,
                lecam_bound: Some(bound),
            }
        })
        .collect())
}

/// Runs the edge test matching the estimate's variant.
pub fn edge_test(
    window: &WindowedCounts,
    estimate: &ActivityEstimate,
    c: Real,
    correction: Correction,
) -> Result<Vec<TieTestResult>> {
    if estimate.variant.daily() {
        edge_test_daily(window, estimate, c, correction)
    } else {
        edge_test_constant(window, estimate, c, correction)
    }
}

fn per_test_alpha(c: Real, correction: Correction, n_tests: usize) -> Real {
    let alpha = 1.0 - c / 100.0;
    match correction {
        Correction::None => alpha,
        Correction::Bonferroni => alpha / n_tests.max(1) as Real,
    }
}

/// Node-based test for relationship dependence.
///
/// A bank is dependent when its partner count falls at or below the
/// `c'`-th percentile of its null Poisson law. In directed variants the
/// partner set is creditors (`Borrowing`) or borrowers (`Lending`).
pub fn node_test(
    window: &WindowedCounts,
    estimate: &ActivityEstimate,
    c_prime: Real,
    direction: Direction,
) -> Result<Vec<NodeTestResult>> {
    if !(c_prime > 0.0 && c_prime < 50.0) {
        return Err(Error::InvalidArgument(format!(
            "node test level c' = {c_prime} must lie in (0, 50)"
        )));
    }
    match (estimate.variant.directed(), direction) {
        (false, Direction::Undirected) | (true, Direction::Borrowing | Direction::Lending) => {}
        (directed, dir) => {
            return Err(Error::InvalidArgument(format!(
                "direction {dir} incompatible with a {} estimate",
                if directed { "directed" } else { "undirected" }
            )))
        }
    }
    if estimate.banks != window.banks {
        return Err(Error::BankSetMismatch);
    }
    let n = window.n_banks() as u32;
    let tau = window.tau();
    let level = c_prime / 100.0;

    let mut results = Vec::with_capacity(n as usize);
    for bank in 0..n {
        let mut lambda = 0.0;
        let mut sum_sq = 0.0;
        for other in 0..n {
            if other == bank {
                continue;
            }
            let p = match direction {
                Direction::Undirected => estimate.edge_prob(bank, other, tau),
                // Creditors lend to `bank`: ordered pair other -> bank.
                Direction::Borrowing => estimate.directed_edge_prob(other, bank, tau),
                Direction::Lending => estimate.directed_edge_prob(bank, other, tau),
            };
            lambda += p;
            sum_sq += p * p;
        }
        let degree = match direction {
            Direction::Undirected => window.degree(bank),
            Direction::Borrowing => (0..n)
                .filter(|&other| other != bank && window.directed_m(other, bank) >= 1)
                .count() as u32,
            Direction::Lending => (0..n)
                .filter(|&other| other != bank && window.directed_m(bank, other) >= 1)
                .count() as u32,
        };
        let bound = lecam_bound(lambda, sum_sq);
        if lambda <= 0.0 {
            results.push(NodeTestResult {
                bank,
                degree,
                lambda,
                p_value: 1.0,
                threshold: 0,
                dependent: false,
                lecam_bound: bound,
                direction,
                flag: TestFlag::Untestable,
            });
            continue;
        }
        let p_value = poisson_cdf(lambda, degree);
        results.push(NodeTestResult {
            bank,
            degree,
            lambda,
            p_value,
            threshold: poisson_threshold(lambda, level),
            dependent: p_value <= level,
            lecam_bound: bound,
            direction,
            flag: TestFlag::Ok,
        });
    }
    Ok(results)
}

/// Per-window summary of both tests under one correction regime.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindowClassification {
    pub window_index: usize,
    pub variant: Variant,
    pub correction: Correction,
    pub n_banks: usize,
    pub n_tested_pairs: usize,
    pub n_significant: usize,
    /// Significant ties over realized (tested) ties.
    pub significant_fraction: Real,
    pub n_dependent: usize,
    /// Dependent banks over active banks.
    pub dependent_fraction: Real,
}

/// Bundles the edge and node tests of one window into summary fractions.
///
/// Under Bonferroni the node test runs at `c' / n_banks`, mirroring the
/// per-test division applied to the edge level.
pub fn classify_window(
    window: &WindowedCounts,
    estimate: &ActivityEstimate,
    c: Real,
    c_prime: Real,
    correction: Correction,
) -> Result<WindowClassification> {
    let ties = edge_test(window, estimate, c, correction)?;
    let n_banks = window.n_banks();
    let node_level = match correction {
        Correction::None => c_prime,
        Correction::Bonferroni => c_prime / n_banks.max(1) as Real,
    };
    let direction = if estimate.variant.directed() {
        Direction::Borrowing
    } else {
        Direction::Undirected
    };
    let nodes = node_test(window, estimate, node_level, direction)?;

    let n_tested_pairs = ties.len();
    let n_significant = ties.iter().filter(|t| t.significant).count();
    let n_dependent = nodes.iter().filter(|r| r.dependent).count();
    Ok(WindowClassification {
        window_index: window.index,
        variant: estimate.variant,
        correction,
        n_banks,
        n_tested_pairs,
        n_significant,
        significant_fraction: if n_tested_pairs > 0 {
            n_significant as Real / n_tested_pairs as Real
        } else {
            0.0
        },
        n_dependent,
        dependent_fraction: if n_banks > 0 {
            n_dependent as Real / n_banks as Real
        } else {
            0.0
        },
    })
}
