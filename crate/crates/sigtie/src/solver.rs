//! Newton solver for the activity first-order conditions.
//!
//! Estimation reduces to a system of equations over positive variables
//! `x_1..x_n` coupled through pair products: for every variable `v`,
//!
//! ```text
//! H_v(x) = sum over pairs (v, w) of (m - tau * x_v * x_w) / (1 - x_v * x_w) = 0
//! ```
//!
//! The undirected problem puts one variable per bank and one pair per bank
//! pair; the directed problem puts two variables per bank (out and in) and
//! one pair per ordered bank pair. Both are instances of [`FocProblem`].
//!
//! `H` is the gradient of the log-likelihood with respect to `log x`, under
//! which the likelihood is concave, so a damped Newton iteration with a
//! Levenberg fallback and an ascent line search is globally convergent
//! whenever an interior stationary point exists. Boundary cases (pairs whose
//! matching probability is pushed to one) are detected and frozen at `u = 1`,
//! mirroring how such estimates are treated downstream.

use crate::linalg::solve_in_place;
use crate::num::Scalar;

/// Probabilities of non-saturated pairs are capped here inside the
/// likelihood so log terms stay finite.
pub const PROB_CAP: f64 = 1.0 - 1e-12;

/// A pair whose product sits above this at the solution is reported as
/// saturated and treated as `u = 1`.
const SATURATION_TRIGGER: f64 = 1.0 - 1e-9;

#[derive(Debug, Clone, Copy)]
pub struct FocPair {
    pub a: u32,
    pub b: u32,
    /// Trade-day count in `0..=tau`.
    pub m: u32,
}

/// A first-order-condition system over pair products.
#[derive(Debug, Clone)]
pub struct FocProblem {
    pub n_vars: usize,
    pub tau: u32,
    pub pairs: Vec<FocPair>,
}

#[derive(Debug, Clone)]
pub struct FocOptions<T> {
    /// Convergence threshold on `max_v |H_v|`.
    pub tol: T,
    pub max_iter: usize,
}

impl<T: Scalar> Default for FocOptions<T> {
    fn default() -> Self {
        FocOptions {
            tol: T::from_f64(1e-10).unwrap(),
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FocSolution<T> {
    /// Per-variable values; boundary variables carry their resolved value.
    pub values: Vec<T>,
    /// Indices into `problem.pairs` fixed at matching probability one.
    pub saturated_pairs: Vec<usize>,
    /// `max_v |H_v|` over the interior system at exit.
    pub residual_norm: T,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Copy, PartialEq)]
enum PairState {
    Active,
    /// Fixed at u = 1; the pair imposes no equation.
    Saturated,
    /// An endpoint resolved to zero; the pair term vanishes identically.
    Removed,
}

struct Workspace<T> {
    values: Vec<T>,
    var_active: Vec<bool>,
    pair_state: Vec<PairState>,
    /// pair indices touching each variable
    incident: Vec<Vec<usize>>,
}

impl<T: Scalar> Workspace<T> {
    fn product(&self, pair: &FocPair) -> T {
        self.values[pair.a as usize] * self.values[pair.b as usize]
    }
}

fn pair_term<T: Scalar>(m: u32, tau: u32, u: T) -> T {
    if m == tau {
        // (tau - tau*u) / (1 - u) is exactly tau for every u != 1.
        return T::from_u32(tau).unwrap();
    }
    let cap = T::from_f64(PROB_CAP).unwrap();
    let u = u.min(cap);
    (T::from_u32(m).unwrap() - T::from_u32(tau).unwrap() * u) / (T::one() - u)
}

fn pair_weight<T: Scalar>(m: u32, tau: u32, u: T) -> T {
    if m == tau {
        return T::zero();
    }
    let cap = T::from_f64(PROB_CAP).unwrap();
    let u = u.min(cap);
    let denom = T::one() - u;
    u * (T::from_u32(m).unwrap() - T::from_u32(tau).unwrap()) / (denom * denom)
}

fn pair_log_likelihood<T: Scalar>(m: u32, tau: u32, u: T) -> T {
    let cap = T::from_f64(PROB_CAP).unwrap();
    let floor = T::from_f64(1e-290).unwrap();
    if m == tau {
        return T::from_u32(m).unwrap() * u.max(floor).ln();
    }
    let u = u.min(cap).max(floor);
    T::from_u32(m).unwrap() * u.ln()
        + T::from_u32(tau - m).unwrap() * (T::one() - u).ln()
}

/// Solves `H(x) = 0` starting from `init` (one positive value per variable).
pub fn solve_foc<T: Scalar>(
    problem: &FocProblem,
    init: &[T],
    options: &FocOptions<T>,
) -> FocSolution<T> {
    assert_eq!(init.len(), problem.n_vars);
    let mut ws = Workspace {
        values: init.to_vec(),
        var_active: vec![true; problem.n_vars],
        pair_state: vec![PairState::Active; problem.pairs.len()],
        incident: vec![Vec::new(); problem.n_vars],
    };
    for (idx, pair) in problem.pairs.iter().enumerate() {
        ws.incident[pair.a as usize].push(idx);
        ws.incident[pair.b as usize].push(idx);
    }
    resolve_boundary(problem, &mut ws);

    let mut iterations = 0usize;
    let mut stalls = 0usize;
    let mut converged = false;

    while iterations < options.max_iter {
        let vars: Vec<usize> = (0..problem.n_vars).filter(|&v| ws.var_active[v]).collect();
        if vars.is_empty() {
            converged = true;
            break;
        }
        let residual = residual_inf(problem, &ws, &vars);
        if residual < options.tol {
            converged = true;
            break;
        }
        iterations += 1;

        if newton_step(problem, &mut ws, &vars) || gauss_seidel_sweep(problem, &mut ws, &vars) {
            // A boundary pair whose product crossed one has no interior
            // optimum; freeze it before it drags the iteration along.
            if saturate_crossed_pairs(problem, &mut ws) {
                resolve_boundary(problem, &mut ws);
            }
            stalls = 0;
            continue;
        }

        // No improving step: either a boundary pair wants u = 1, or we are
        // genuinely stuck.
        if saturate_worst_pair(problem, &mut ws) {
            resolve_boundary(problem, &mut ws);
            stalls = 0;
            continue;
        }
        stalls += 1;
        if stalls >= 3 {
            break;
        }
    }

    // Pairs that ended at or beyond the cap are reported as saturated.
    for (idx, pair) in problem.pairs.iter().enumerate() {
        if ws.pair_state[idx] == PairState::Active
            && pair.m == problem.tau
            && ws.product(pair) >= T::from_f64(SATURATION_TRIGGER).unwrap()
        {
            ws.pair_state[idx] = PairState::Saturated;
        }
    }

    let vars: Vec<usize> = (0..problem.n_vars).filter(|&v| ws.var_active[v]).collect();
    let residual_norm = residual_inf(problem, &ws, &vars);
    let converged = converged || residual_norm < options.tol;
    FocSolution {
        values: ws.values,
        saturated_pairs: ws
            .pair_state
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == PairState::Saturated)
            .map(|(i, _)| i)
            .collect(),
        residual_norm,
        iterations,
        converged,
    }
}

/// Resolves variables whose equations have no interior solution.
///
/// A variable whose active pairs all carry `m = tau` is pushed to the
/// boundary by the likelihood no matter what the rest of the system does;
/// it is fixed at one and its pairs at `u = 1`. A variable whose active
/// pairs all carry `m = 0` belongs at zero exactly. Removals cascade.
fn resolve_boundary<T: Scalar>(problem: &FocProblem, ws: &mut Workspace<T>) {
    loop {
        let mut changed = false;
        for v in 0..problem.n_vars {
            if !ws.var_active[v] {
                continue;
            }
            let active: Vec<usize> = ws.incident[v]
                .iter()
                .copied()
                .filter(|&p| ws.pair_state[p] == PairState::Active)
                .collect();
            if active.is_empty() {
                let touched_saturated = ws.incident[v]
                    .iter()
                    .any(|&p| ws.pair_state[p] == PairState::Saturated);
                ws.values[v] = if touched_saturated { T::one() } else { T::zero() };
                ws.var_active[v] = false;
                changed = true;
            } else if active.iter().all(|&p| problem.pairs[p].m == problem.tau) {
                ws.values[v] = T::one();
                for p in active {
                    ws.pair_state[p] = PairState::Saturated;
                }
                ws.var_active[v] = false;
                changed = true;
            } else if active.iter().all(|&p| problem.pairs[p].m == 0) {
                ws.values[v] = T::zero();
                for p in active {
                    ws.pair_state[p] = PairState::Removed;
                }
                ws.var_active[v] = false;
                changed = true;
            }
        }
        if !changed {
            return;
        }
    }
}

fn residual<T: Scalar>(problem: &FocProblem, ws: &Workspace<T>, out: &mut [T]) {
    for h in out.iter_mut() {
        *h = T::zero();
    }
    for (idx, pair) in problem.pairs.iter().enumerate() {
        if ws.pair_state[idx] != PairState::Active {
            continue;
        }
        let term = pair_term(pair.m, problem.tau, ws.product(pair));
        out[pair.a as usize] = out[pair.a as usize] + term;
        out[pair.b as usize] = out[pair.b as usize] + term;
    }
}

fn residual_inf<T: Scalar>(problem: &FocProblem, ws: &Workspace<T>, vars: &[usize]) -> T {
    let mut h = vec![T::zero(); problem.n_vars];
    residual(problem, ws, &mut h);
    vars.iter()
        .fold(T::zero(), |acc, &v| acc.max(h[v].abs()))
}

fn log_likelihood<T: Scalar>(problem: &FocProblem, ws: &Workspace<T>) -> T {
    let mut acc = T::zero();
    for (idx, pair) in problem.pairs.iter().enumerate() {
        if ws.pair_state[idx] != PairState::Active {
            continue;
        }
        acc = acc + pair_log_likelihood(pair.m, problem.tau, ws.product(pair));
    }
    acc
}

/// One damped Newton step in log-space, with Levenberg fallback.
/// Returns whether an improving step was taken.
fn newton_step<T: Scalar>(problem: &FocProblem, ws: &mut Workspace<T>, vars: &[usize]) -> bool {
    let n = vars.len();
    let mut local = vec![usize::MAX; problem.n_vars];
    for (k, &v) in vars.iter().enumerate() {
        local[v] = k;
    }

    let mut h_full = vec![T::zero(); problem.n_vars];
    residual(problem, ws, &mut h_full);
    let h: Vec<T> = vars.iter().map(|&v| h_full[v]).collect();
    let h_norm = h.iter().fold(T::zero(), |acc, x| acc.max(x.abs()));

    // Hessian of the log-likelihood in log-coordinates.
    let mut jac = vec![T::zero(); n * n];
    let mut scale = T::zero();
    for (idx, pair) in problem.pairs.iter().enumerate() {
        if ws.pair_state[idx] != PairState::Active {
            continue;
        }
        let w = pair_weight(pair.m, problem.tau, ws.product(pair));
        let (la, lb) = (local[pair.a as usize], local[pair.b as usize]);
        jac[la * n + la] = jac[la * n + la] + w;
        jac[lb * n + lb] = jac[lb * n + lb] + w;
        jac[la * n + lb] = jac[la * n + lb] + w;
        jac[lb * n + la] = jac[lb * n + la] + w;
        scale = scale.max(w.abs());
    }
    scale = scale.max(T::one());

    let l_old = log_likelihood(problem, ws);
    let mut damping = T::zero();
    for _attempt in 0..8 {
        let mut a = jac.clone();
        if damping > T::zero() {
            for k in 0..n {
                a[k * n + k] = a[k * n + k] - damping;
            }
        }
        let mut step: Vec<T> = h.iter().map(|&x| -x).collect();
        if solve_in_place(&mut a, &mut step, n) {
            // `step` solves J d = -H; ascent along d in log-space.
            let directional: T = h.iter().zip(&step).map(|(&g, &d)| g * d).sum();
            if directional > T::zero() {
                let mut alpha = T::one();
                for _ in 0..40 {
                    let saved = ws.values.clone();
                    for (k, &v) in vars.iter().enumerate() {
                        let bounded = step[k]
                            .max(T::from_f64(-40.0).unwrap())
                            .min(T::from_f64(40.0).unwrap());
                        ws.values[v] = ws.values[v] * (alpha * bounded).exp();
                    }
                    let l_new = log_likelihood(problem, ws);
                    let armijo =
                        l_old + T::from_f64(1e-4).unwrap() * alpha * directional;
                    if l_new >= armijo {
                        return true;
                    }
                    // Keep steps that still shrink the residual; this covers
                    // flat directions where the likelihood barely moves.
                    let r_new = residual_inf(problem, ws, vars);
                    if r_new < h_norm * T::from_f64(0.999).unwrap() {
                        return true;
                    }
                    ws.values = saved;
                    alpha = alpha * T::from_f64(0.5).unwrap();
                }
            }
        }
        damping = if damping.is_zero() {
            scale * T::from_f64(1e-8).unwrap()
        } else {
            damping * T::from_f64(100.0).unwrap()
        };
    }
    false
}

/// Fixed-point sweep `x_v <- sum_m / (tau * sum_partner)`, the configuration
/// update, used when the Newton system is too ill-conditioned to help.
/// Returns whether the residual improved.
fn gauss_seidel_sweep<T: Scalar>(
    problem: &FocProblem,
    ws: &mut Workspace<T>,
    vars: &[usize],
) -> bool {
    let before = residual_inf(problem, ws, vars);
    let saved = ws.values.clone();
    let tau = T::from_u32(problem.tau).unwrap();
    for &v in vars {
        let mut num = T::zero();
        let mut den = T::zero();
        for &p in &ws.incident[v] {
            if ws.pair_state[p] != PairState::Active {
                continue;
            }
            let pair = &problem.pairs[p];
            let other = if pair.a as usize == v { pair.b } else { pair.a };
            num = num + T::from_u32(pair.m).unwrap();
            den = den + ws.values[other as usize];
        }
        den = den * tau;
        if den > T::from_f64(1e-300).unwrap() && num > T::zero() {
            ws.values[v] = (num / den)
                .max(T::from_f64(1e-9).unwrap())
                .min(T::from_f64(1e9).unwrap());
        }
    }
    let after = residual_inf(problem, ws, vars);
    if after < before * T::from_f64(0.9999).unwrap() {
        true
    } else {
        ws.values = saved;
        false
    }
}

/// Freezes every full-count pair whose product reached one.
fn saturate_crossed_pairs<T: Scalar>(problem: &FocProblem, ws: &mut Workspace<T>) -> bool {
    let mut any = false;
    for (idx, pair) in problem.pairs.iter().enumerate() {
        if ws.pair_state[idx] == PairState::Active
            && pair.m == problem.tau
            && ws.product(pair) >= T::one()
        {
            ws.pair_state[idx] = PairState::Saturated;
            any = true;
        }
    }
    any
}

/// Freezes the boundary pair with the largest product at `u = 1`.
fn saturate_worst_pair<T: Scalar>(problem: &FocProblem, ws: &mut Workspace<T>) -> bool {
    let trigger = T::from_f64(SATURATION_TRIGGER).unwrap();
    let mut worst: Option<(usize, T)> = None;
    for (idx, pair) in problem.pairs.iter().enumerate() {
        if ws.pair_state[idx] != PairState::Active || pair.m != problem.tau {
            continue;
        }
        let u = ws.product(pair);
        if u >= trigger && worst.map_or(true, |(_, best)| u > best) {
            worst = Some((idx, u));
        }
    }
    if let Some((idx, _)) = worst {
        ws.pair_state[idx] = PairState::Saturated;
        true
    } else {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn undirected_problem(n: usize, tau: u32, m: &[u32]) -> FocProblem {
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                pairs.push(FocPair {
                    a: i as u32,
                    b: j as u32,
                    m: m[i * n + j],
                });
            }
        }
        FocProblem {
            n_vars: n,
            tau,
            pairs,
        }
    }

    #[test]
    fn single_pair_recovers_product() {
        // One pair, m = 5, tau = 10: any solution must satisfy x1*x2 = 0.5.
        let problem = undirected_problem(2, 10, &[0, 5, 5, 0]);
        let sol = solve_foc(&problem, &[0.5f64, 0.5], &FocOptions::default());
        assert!(sol.converged, "residual {}", sol.residual_norm);
        assert!((sol.values[0] * sol.values[1] - 0.5).abs() < 1e-10);
        assert!(sol.saturated_pairs.is_empty());
    }

    #[test]
    fn symmetric_complete_graph() {
        // N=4 complete with m=5, tau=10: a_i = sqrt(0.5) by symmetry.
        let mut m = vec![5u32; 16];
        for i in 0..4 {
            m[i * 4 + i] = 0;
        }
        let problem = undirected_problem(4, 10, &m);
        let init = vec![0.4f64; 4];
        let sol = solve_foc(&problem, &init, &FocOptions::default());
        assert!(sol.converged);
        for v in &sol.values {
            assert!((v - 0.5f64.sqrt()).abs() < 1e-8, "{v}");
        }
    }

    #[test]
    fn saturated_single_edge_day() {
        // tau = 1 with a single edge: boundary case, u -> 1.
        let problem = undirected_problem(2, 1, &[0, 1, 1, 0]);
        let sol = solve_foc(&problem, &[0.7f64, 0.7], &FocOptions::default());
        assert!(sol.converged);
        assert_eq!(sol.saturated_pairs, vec![0]);
        assert!((sol.values[0] - 1.0).abs() < 1e-12);
        assert!((sol.values[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn star_day_resolves_boundary() {
        // Edges (0,1), (0,2) on a single day; pair (1,2) never trades.
        // The hub saturates both edges; leaf 1 keeps the untraded pair and
        // resolves to zero, leaf 2 is left with saturated pairs only.
        let problem = undirected_problem(3, 1, &[0, 1, 1, 1, 0, 0, 1, 0, 0]);
        let sol = solve_foc(&problem, &[0.5f64; 3], &FocOptions::default());
        assert!(sol.converged);
        assert_eq!(sol.saturated_pairs.len(), 2);
        assert!((sol.values[0] - 1.0).abs() < 1e-12);
        assert_eq!(sol.values[1], 0.0);
        assert_eq!(sol.values[2], 1.0);
        // untraded pair keeps probability zero
        assert_eq!(sol.values[1] * sol.values[2], 0.0);
    }

    #[test]
    fn mixed_boundary_and_interior() {
        // m = [[-,2,1],[2,-,0],[1,0,-]] at tau=2: pair (0,1) saturates,
        // bank 1 then has only an m=0 pair and resolves to zero, and the
        // remaining pair settles at u = 1/2.
        let problem = undirected_problem(3, 2, &[0, 2, 1, 2, 0, 0, 1, 0, 0]);
        let sol = solve_foc(&problem, &[0.6f64; 3], &FocOptions::default());
        assert!(sol.converged, "residual {}", sol.residual_norm);
        assert_eq!(sol.saturated_pairs, vec![0]);
        assert!((sol.values[0] * sol.values[2] - 0.5).abs() < 1e-9);
        assert_eq!(sol.values[1], 0.0);
    }

    #[test]
    fn interior_solution_matches_foc() {
        // Random-ish counts; verify H(a*) ~ 0 component-wise.
        let n = 8;
        let tau = 10;
        let mut m = vec![0u32; n * n];
        let mut state = 1u64;
        for i in 0..n {
            for j in (i + 1)..n {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let v = ((state >> 33) % 6) as u32; // 0..=5
                m[i * n + j] = v;
                m[j * n + i] = v;
            }
        }
        let problem = undirected_problem(n, tau, &m);
        let deg: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| m[i * n + j]).sum::<u32>() as f64 / tau as f64)
            .collect();
        let total: f64 = deg.iter().sum();
        let init: Vec<f64> = deg.iter().map(|d| d / total.sqrt()).collect();
        let sol = solve_foc(&problem, &init, &FocOptions::default());
        assert!(sol.converged);
        assert!(sol.residual_norm < 1e-10);
        for pair in &problem.pairs {
            let u = sol.values[pair.a as usize] * sol.values[pair.b as usize];
            assert!(u < 1.0);
        }
    }

    #[test]
    fn directed_shape_with_pinned_rows() {
        // Directed N=2: m(0->1)=4, m(1->0)=0 at tau=10. Variables are
        // (out0, out1, in0, in1); out1 and in0 resolve to zero and the
        // traded pair satisfies out0*in1 = 0.4.
        let problem = FocProblem {
            n_vars: 4,
            tau: 10,
            pairs: vec![
                FocPair { a: 0, b: 3, m: 4 },
                FocPair { a: 1, b: 2, m: 0 },
            ],
        };
        let sol = solve_foc(&problem, &[0.5f64; 4], &FocOptions::default());
        assert!(sol.converged);
        assert!((sol.values[0] * sol.values[3] - 0.4).abs() < 1e-9);
        assert_eq!(sol.values[1], 0.0);
        assert_eq!(sol.values[2], 0.0);
    }

    #[test]
    fn generic_over_f32() {
        let problem = undirected_problem(2, 10, &[0, 5, 5, 0]);
        let sol = solve_foc(
            &problem,
            &[0.5f32, 0.5],
            &FocOptions {
                tol: 1e-5,
                max_iter: 100,
            },
        );
        assert!(sol.converged);
        assert!((sol.values[0] * sol.values[1] - 0.5).abs() < 1e-4);
    }
}
