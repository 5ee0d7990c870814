//! Smooth equilibria under taste heterogeneity: minimize the convex
//! social-welfare price functional
//! `W(p) = sum_x n_x G_x(alpha_x. + p) + sum_y m_y H_y(gamma_.y - p)`.
//!
//! The gradient of `W` at `p` is exactly the excess supply per quality,
//! so the minimizer clears the market in conditional-choice terms. With
//! logit shocks the objective is smooth and strictly convex (full
//! support), the minimizer is unique, and a damped Newton iteration with
//! the analytic softmax-covariance Hessian converges quadratically. With
//! empirical shocks the objective is piecewise linear and the solver
//! falls back to averaged subgradient steps; the minimizing price may
//! then be an interval, and any minimizer is reported.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::choice::{
    conjugate_value, emax, emax_gradient, ChoiceError, ChoiceProbabilities, Heterogeneity,
    SystematicUtilities,
};
use crate::market::{Allocation, MarketSpec, PriceVector, Table};
use crate::math;

/// Options for the price-equilibrium solver.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Convergence threshold on the max-norm of excess supply.
    pub tol: f64,
    pub max_iter: usize,
    /// Starting prices; zero when absent.
    pub initial_prices: Option<Vec<f64>>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 200, initial_prices: None }
    }
}

/// A solved smooth equilibrium.
#[derive(Debug, Clone)]
pub struct SmoothEquilibrium {
    pub prices: PriceVector,
    pub allocation: Allocation,
    pub shares: ChoiceProbabilities,
    /// Minimized social welfare `W`.
    pub welfare: f64,
    /// `max_z |supply_z - demand_z|` at the returned prices.
    pub clearing_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Failures of the smooth-equilibrium layer.
#[derive(Debug)]
pub enum EquilibriumError {
    /// A quality no producer can supply (or no consumer can buy) has no
    /// finite price: the objective has no minimizer in that coordinate.
    DeadQuality { quality: usize, supply_side: bool },
    /// Iteration budget exhausted; carries the partial state.
    MaxIterations(Box<SmoothEquilibrium>),
    Choice(ChoiceError),
    Infeasible(crate::market::MarketError),
}

impl fmt::Display for EquilibriumError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EquilibriumError::DeadQuality { quality, supply_side } => {
                let side = if *supply_side { "producer" } else { "consumer" };
                write!(f, "quality {quality} has no {side} type with finite surplus and positive mass")
            }
            EquilibriumError::MaxIterations(eq) => write!(
                f,
                "no convergence after {} iterations (clearing residual {:e})",
                eq.iterations, eq.clearing_residual
            ),
            EquilibriumError::Choice(e) => write!(f, "{e}"),
            EquilibriumError::Infeasible(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for EquilibriumError {}

impl From<ChoiceError> for EquilibriumError {
    fn from(e: ChoiceError) -> Self {
        EquilibriumError::Choice(e)
    }
}

/// Objective, conditional shares and excess supply at prices `p`.
#[derive(Clone)]
struct Evaluation {
    objective: f64,
    supply: Table,
    demand: Table,
    excess: Vec<f64>,
}

fn evaluate(spec: &MarketSpec, het: &Heterogeneity, p: &[f64]) -> Evaluation {
    let sys = SystematicUtilities::from_prices(spec, p);
    let (xs, ys, zs) = (spec.producer_count(), spec.consumer_count(), spec.quality_count());
    let mut objective = 0.0;
    let mut supply = Table::zeros(xs, zs + 1);
    let mut demand = Table::zeros(ys, zs + 1);
    let mut excess = vec![0.0; zs];
    for x in 0..xs {
        let row = sys.u.row(x);
        objective += spec.n[x] * emax(row, het.producer_shocks(x));
        let probs = emax_gradient(row, het.producer_shocks(x));
        for (opt, &pr) in probs.iter().enumerate() {
            supply.set(x, opt, pr);
        }
        for z in 0..zs {
            excess[z] += spec.n[x] * probs[z + 1];
        }
    }
    for y in 0..ys {
        let col = sys.v.col(y);
        objective += spec.m[y] * emax(&col, het.consumer_shocks(y));
        let probs = emax_gradient(&col, het.consumer_shocks(y));
        for (opt, &pr) in probs.iter().enumerate() {
            demand.set(y, opt, pr);
        }
        for z in 0..zs {
            excess[z] -= spec.m[y] * probs[z + 1];
        }
    }
    Evaluation { objective, supply, demand, excess }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, &x| acc.max(math::abs(x)))
}

/// Solves for the equilibrium price vector.
///
/// Requires every quality to be reachable from both sides: some producer
/// type with positive mass and finite surplus, and likewise a consumer
/// type. Qualities failing this are rejected with [`EquilibriumError::DeadQuality`].
pub fn solve_price_equilibrium(
    spec: &MarketSpec,
    het: &Heterogeneity,
    opts: &SolveOptions,
) -> Result<SmoothEquilibrium, EquilibriumError> {
    het.validate(spec)?;
    let zs = spec.quality_count();
    for z in 0..zs {
        let supply_ok = (0..spec.producer_count())
            .any(|x| spec.n[x] > 0.0 && spec.alpha.get(x, z) > f64::NEG_INFINITY);
        if !supply_ok {
            return Err(EquilibriumError::DeadQuality { quality: z, supply_side: true });
        }
        let demand_ok = (0..spec.consumer_count())
            .any(|y| spec.m[y] > 0.0 && spec.gamma.get(z, y) > f64::NEG_INFINITY);
        if !demand_ok {
            return Err(EquilibriumError::DeadQuality { quality: z, supply_side: false });
        }
    }

    let mut p = opts.initial_prices.clone().unwrap_or_else(|| vec![0.0; zs]);
    if het.is_logit() {
        newton_minimize(spec, het, &mut p, opts)
    } else {
        subgradient_minimize(spec, het, &mut p, opts)
    }
}

/// Damped Newton with backtracking line search on the objective.
fn newton_minimize(
    spec: &MarketSpec,
    het: &Heterogeneity,
    p: &mut Vec<f64>,
    opts: &SolveOptions,
) -> Result<SmoothEquilibrium, EquilibriumError> {
    let zs = spec.quality_count();
    let mut eval = evaluate(spec, het, p);
    let mut iterations = 0;
    loop {
        let residual = max_abs(&eval.excess);
        if residual <= opts.tol {
            return Ok(assemble(spec, p, &eval, iterations, true));
        }
        if iterations >= opts.max_iter {
            return Err(EquilibriumError::MaxIterations(Box::new(assemble(
                spec, p, &eval, iterations, false,
            ))));
        }
        iterations += 1;

        // Hessian: mass-weighted softmax covariances from both sides.
        let mut hess = vec![0.0; zs * zs];
        let mut add_cov = |mass: f64, probs: &[f64]| {
            for a in 0..zs {
                let pa = probs[a + 1];
                for b in 0..zs {
                    let pb = probs[b + 1];
                    let cov = if a == b { pa * (1.0 - pa) } else { -pa * pb };
                    hess[a * zs + b] += mass * cov;
                }
            }
        };
        for x in 0..spec.producer_count() {
            add_cov(spec.n[x], eval.supply.row(x));
        }
        for y in 0..spec.consumer_count() {
            add_cov(spec.m[y], eval.demand.row(y));
        }

        let neg_grad: Vec<f64> = eval.excess.iter().map(|&g| -g).collect();
        let direction = cholesky_solve(&mut hess, zs, &neg_grad)
            .unwrap_or_else(|| neg_grad.clone());

        // Backtracking (Armijo) line search.
        let descent: f64 =
            eval.excess.iter().zip(direction.iter()).map(|(g, d)| g * d).sum();
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> =
                p.iter().zip(direction.iter()).map(|(pz, d)| pz + step * d).collect();
            let trial_eval = evaluate(spec, het, &trial);
            if trial_eval.objective <= eval.objective + 1e-4 * step * descent {
                accepted = Some((trial, trial_eval));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((trial, trial_eval)) => {
                *p = trial;
                eval = trial_eval;
            }
            None => {
                // Objective is flat to machine precision along the
                // direction; no further progress is possible.
                return Err(EquilibriumError::MaxIterations(Box::new(assemble(
                    spec, p, &eval, iterations, false,
                ))));
            }
        }
    }
}

/// Averaged subgradient descent for piecewise-linear (empirical)
/// objectives. Returns the best iterate found; an exact zero of the
/// excess supply is generally unattainable at kinks, so non-convergence
/// carries the best point as partial state.
fn subgradient_minimize(
    spec: &MarketSpec,
    het: &Heterogeneity,
    p: &mut Vec<f64>,
    opts: &SolveOptions,
) -> Result<SmoothEquilibrium, EquilibriumError> {
    let zs = spec.quality_count();
    // Subgradients scale with total mass; steps should move prices O(1).
    let mass_scale = 1.0 + spec.n.iter().chain(spec.m.iter()).sum::<f64>();
    let mut best: Option<(Evaluation, Vec<f64>)> = None;
    let mut avg = vec![0.0; zs];
    let mut steps = 0usize;
    let mut iterations = 0usize;
    for k in 0..opts.max_iter {
        let eval = evaluate(spec, het, p);
        iterations = k + 1;
        let better = best.as_ref().map_or(true, |(b, _)| eval.objective < b.objective);
        let residual = max_abs(&eval.excess);
        if better {
            best = Some((eval.clone(), p.clone()));
        }
        if residual <= opts.tol {
            best = Some((eval, p.clone()));
            break;
        }
        let step = 1.0 / (mass_scale * math::sqrt(k as f64 + 1.0));
        for z in 0..zs {
            p[z] -= step * eval.excess[z];
            avg[z] += p[z];
        }
        steps += 1;
    }
    let (mut best_eval, mut best_p) = best.expect("max_iter >= 1");
    if steps > 0 && max_abs(&best_eval.excess) > opts.tol {
        for a in avg.iter_mut() {
            *a /= steps as f64;
        }
        let avg_eval = evaluate(spec, het, &avg);
        if avg_eval.objective < best_eval.objective {
            best_eval = avg_eval;
            best_p = avg;
        }
    }
    let converged = max_abs(&best_eval.excess) <= opts.tol;
    let eq = assemble(spec, &best_p, &best_eval, iterations, converged);
    if converged {
        Ok(eq)
    } else {
        Err(EquilibriumError::MaxIterations(Box::new(eq)))
    }
}

fn assemble(
    spec: &MarketSpec,
    p: &[f64],
    eval: &Evaluation,
    iterations: usize,
    converged: bool,
) -> SmoothEquilibrium {
    let (xs, ys, zs) = (spec.producer_count(), spec.consumer_count(), spec.quality_count());
    let mut allocation = Allocation::zeros(spec);
    for x in 0..xs {
        for z in 0..zs {
            allocation.mu_xz.set(x, z, spec.n[x] * eval.supply.get(x, z + 1));
        }
    }
    for y in 0..ys {
        for z in 0..zs {
            allocation.mu_zy.set(z, y, spec.m[y] * eval.demand.get(y, z + 1));
        }
    }
    SmoothEquilibrium {
        prices: PriceVector(p.to_vec()),
        allocation,
        shares: ChoiceProbabilities { supply: eval.supply.clone(), demand: eval.demand.clone() },
        welfare: eval.objective,
        clearing_residual: max_abs(&eval.excess),
        iterations,
        converged,
    }
}

/// In-place Cholesky solve of a symmetric positive-definite system.
/// Returns `None` when a pivot is not strictly positive.
fn cholesky_solve(a: &mut [f64], dim: usize, rhs: &[f64]) -> Option<Vec<f64>> {
    for k in 0..dim {
        let mut pivot = a[k * dim + k];
        for j in 0..k {
            pivot -= a[k * dim + j] * a[k * dim + j];
        }
        if !(pivot > 0.0) {
            return None;
        }
        let pivot = math::sqrt(pivot);
        a[k * dim + k] = pivot;
        for i in k + 1..dim {
            let mut v = a[i * dim + k];
            for j in 0..k {
                v -= a[i * dim + j] * a[k * dim + j];
            }
            a[i * dim + k] = v / pivot;
        }
    }
    // Forward then back substitution.
    let mut y = rhs.to_vec();
    for i in 0..dim {
        for j in 0..i {
            y[i] -= a[i * dim + j] * y[j];
        }
        y[i] /= a[i * dim + i];
    }
    for i in (0..dim).rev() {
        for j in i + 1..dim {
            y[i] -= a[j * dim + i] * y[j];
        }
        y[i] /= a[i * dim + i];
    }
    Some(y)
}

/// The generalized entropy `E(mu) = sum_x n_x G*_x(mu_.|x) + sum_y m_y
/// H*_y(mu_.|y)` evaluated through the conjugates.
pub fn generalized_entropy(
    spec: &MarketSpec,
    het: &Heterogeneity,
    mu: &Allocation,
) -> Result<f64, ChoiceError> {
    let mut total = 0.0;
    for x in 0..spec.producer_count() {
        let n_x = spec.n[x];
        if n_x == 0.0 {
            continue;
        }
        let shares = conditional_shares(mu.mu_xz.row(x), mu.producer_opt_out(spec, x), n_x);
        total += n_x * conjugate_value(&shares, het.producer_shocks(x))?;
    }
    for y in 0..spec.consumer_count() {
        let m_y = spec.m[y];
        if m_y == 0.0 {
            continue;
        }
        let col = mu.mu_zy.col(y);
        let shares = conditional_shares(&col, mu.consumer_opt_out(spec, y), m_y);
        total += m_y * conjugate_value(&shares, het.consumer_shocks(y))?;
    }
    Ok(total)
}

fn conditional_shares(masses: &[f64], opt_out: f64, total: f64) -> Vec<f64> {
    let mut shares = Vec::with_capacity(masses.len() + 1);
    shares.push((opt_out / total).max(0.0));
    shares.extend(masses.iter().map(|&m| (m / total).max(0.0)));
    shares
}

/// Closed-form logit entropy
/// `sum_xz mu_xz log(mu_xz/n_x) + sum_x mu_x0 log(mu_x0/n_x)
///  + sum_zy mu_zy log(mu_zy/m_y) + sum_y mu_0y log(mu_0y/m_y)`,
/// with `0 log 0 = 0`. Equals [`generalized_entropy`] under logit
/// shocks; the acceptance suite reconciles the two numerically.
pub fn logit_entropy_closed_form(spec: &MarketSpec, mu: &Allocation) -> f64 {
    let mut total = 0.0;
    for x in 0..spec.producer_count() {
        let n_x = spec.n[x];
        if n_x == 0.0 {
            continue;
        }
        for z in 0..spec.quality_count() {
            let mass = mu.mu_xz.get(x, z);
            if mass > 0.0 {
                total += mass * math::ln(mass / n_x);
            }
        }
        let out = mu.producer_opt_out(spec, x);
        if out > 0.0 {
            total += out * math::ln(out / n_x);
        }
    }
    for y in 0..spec.consumer_count() {
        let m_y = spec.m[y];
        if m_y == 0.0 {
            continue;
        }
        for z in 0..spec.quality_count() {
            let mass = mu.mu_zy.get(z, y);
            if mass > 0.0 {
                total += mass * math::ln(mass / m_y);
            }
        }
        let out = mu.consumer_opt_out(spec, y);
        if out > 0.0 {
            total += out * math::ln(out / m_y);
        }
    }
    total
}

/// Social welfare in primal (allocation) form:
/// `sum mu_xz alpha_xz + sum mu_zy gamma_zy - E(mu)` for a feasible
/// allocation. At the equilibrium allocation this equals the minimized
/// price functional.
pub fn social_welfare_primal(
    spec: &MarketSpec,
    het: &Heterogeneity,
    mu: &Allocation,
) -> Result<f64, EquilibriumError> {
    mu.check_feasible(spec, 1e-6).map_err(EquilibriumError::Infeasible)?;
    let mut surplus = 0.0;
    for x in 0..spec.producer_count() {
        for z in 0..spec.quality_count() {
            let mass = mu.mu_xz.get(x, z);
            if mass > 0.0 {
                surplus += mass * spec.alpha.get(x, z);
            }
        }
    }
    for z in 0..spec.quality_count() {
        for y in 0..spec.consumer_count() {
            let mass = mu.mu_zy.get(z, y);
            if mass > 0.0 {
                surplus += mass * spec.gamma.get(z, y);
            }
        }
    }
    Ok(surplus - generalized_entropy(spec, het, mu)?)
}
