//! Discrete-choice layer: expected-indirect-utility (emax) functions,
//! their gradients (choice probabilities) and Legendre-Fenchel
//! conjugates.
//!
//! An agent facing systematic utilities `U_1..U_Z` plus an outside
//! option of utility 0 draws a shock per option and picks the maximum.
//! The emax function `G(U) = E[max(max_z U_z + eps_z, eps_0)]` is convex;
//! its gradient is the vector of choice probabilities, and the gradient
//! of its convex conjugate `G*` inverts probabilities back to utilities,
//! which is what identification runs on. Shocks are either iid standard
//! Gumbel (closed forms: log-sum-exp, softmax, log-odds) or an empirical
//! draw matrix (sample means, argmax frequencies, subgradient ascent).

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::market::{MarketSpec, Table};
use crate::math;

/// Shock model for every observable type on both sides of the market.
#[derive(Debug, Clone, PartialEq)]
pub enum Heterogeneity {
    /// iid standard Gumbel shocks (location 0, scale 1). The scale is a
    /// normalization, not a parameter: surpluses are identified only
    /// relative to it.
    Logit,
    Empirical(EmpiricalDraws),
}

/// Per-type draw matrices of shocks, plus the seed that generated them.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDraws {
    /// One matrix per producer type; rows are simulated agents, columns
    /// are the |Z|+1 options with column 0 the outside option.
    pub producer: Vec<DrawMatrix>,
    /// One matrix per consumer type.
    pub consumer: Vec<DrawMatrix>,
    pub seed: u64,
}

/// A draw matrix: `rows` agents by `|Z|+1` options.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DrawMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, ChoiceError> {
        if data.len() != rows * cols || rows == 0 || cols < 2 {
            return Err(ChoiceError::BadDrawMatrix { rows, cols });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(ChoiceError::BadDrawMatrix { rows, cols });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Number of options, outside option included.
    pub fn options(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Shock model of one observable type.
#[derive(Debug, Clone, Copy)]
pub enum ShockModel<'a> {
    Logit,
    Empirical(&'a DrawMatrix),
}

impl Heterogeneity {
    /// Checks matrix shapes against the market dimensions.
    pub fn validate(&self, spec: &MarketSpec) -> Result<(), ChoiceError> {
        if let Heterogeneity::Empirical(d) = self {
            if d.producer.len() != spec.producer_count() || d.consumer.len() != spec.consumer_count()
            {
                return Err(ChoiceError::BadDrawMatrix {
                    rows: d.producer.len(),
                    cols: d.consumer.len(),
                });
            }
            for m in d.producer.iter().chain(d.consumer.iter()) {
                if m.options() != spec.quality_count() + 1 {
                    return Err(ChoiceError::BadDrawMatrix { rows: m.rows(), cols: m.options() });
                }
            }
        }
        Ok(())
    }

    pub fn producer_shocks(&self, x: usize) -> ShockModel<'_> {
        match self {
            Heterogeneity::Logit => ShockModel::Logit,
            Heterogeneity::Empirical(d) => ShockModel::Empirical(&d.producer[x]),
        }
    }

    pub fn consumer_shocks(&self, y: usize) -> ShockModel<'_> {
        match self {
            Heterogeneity::Logit => ShockModel::Logit,
            Heterogeneity::Empirical(d) => ShockModel::Empirical(&d.consumer[y]),
        }
    }

    pub fn is_logit(&self) -> bool {
        matches!(self, Heterogeneity::Logit)
    }
}

/// Systematic payoff parts `U_xz = alpha_xz + p_z` and
/// `V_zy = gamma_zy - p_z` (`-inf` where the surplus is forbidden).
#[derive(Debug, Clone, PartialEq)]
pub struct SystematicUtilities {
    /// |X| x |Z|.
    pub u: Table,
    /// |Z| x |Y|.
    pub v: Table,
}

impl SystematicUtilities {
    pub fn from_prices(spec: &MarketSpec, prices: &[f64]) -> Self {
        let u = Table::from_fn(spec.producer_count(), spec.quality_count(), |x, z| {
            let a = spec.alpha.get(x, z);
            if a == f64::NEG_INFINITY {
                a
            } else {
                a + prices[z]
            }
        });
        let v = Table::from_fn(spec.quality_count(), spec.consumer_count(), |z, y| {
            let g = spec.gamma.get(z, y);
            if g == f64::NEG_INFINITY {
                g
            } else {
                g - prices[z]
            }
        });
        Self { u, v }
    }
}

/// Conditional choice probabilities, row-stochastic with the outside
/// option in column 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceProbabilities {
    /// |X| x (|Z|+1): supply shares per producer type.
    pub supply: Table,
    /// |Y| x (|Z|+1): demand shares per consumer type.
    pub demand: Table,
}

/// Errors of the discrete-choice layer.
#[derive(Debug, Clone, PartialEq)]
pub enum ChoiceError {
    /// Shares are negative or do not sum to one.
    NotAProbability { sum: f64 },
    /// A share is zero where the conjugate gradient needs an interior
    /// point; identification is undefined there (full support fails).
    BoundarySupport { option: usize },
    BadDrawMatrix { rows: usize, cols: usize },
}

impl fmt::Display for ChoiceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChoiceError::NotAProbability { sum } => {
                write!(f, "share vector is not a probability (sum {sum})")
            }
            ChoiceError::BoundarySupport { option } => {
                write!(f, "share of option {option} is zero; interior shares are required")
            }
            ChoiceError::BadDrawMatrix { rows, cols } => {
                write!(f, "invalid draw matrix ({rows} x {cols}); need >= 1 row, |Z|+1 finite columns")
            }
        }
    }
}

impl core::error::Error for ChoiceError {}

/// Expected maximum payoff `E[max(max_z(U_z + eps_z), eps_0)]`.
///
/// `-inf` entries mark unavailable options. Logit shocks give the
/// overflow-safe log-sum-exp with the implicit zero outside option;
/// empirical shocks give the sample mean of row maxima.
pub fn emax(u: &[f64], shocks: ShockModel<'_>) -> f64 {
    match shocks {
        ShockModel::Logit => math::log1p_sum_exp(u),
        ShockModel::Empirical(draws) => {
            debug_assert_eq!(draws.options(), u.len() + 1);
            let mut total = 0.0;
            for r in 0..draws.rows() {
                let row = draws.row(r);
                let mut best = row[0];
                for (z, &uz) in u.iter().enumerate() {
                    if uz > f64::NEG_INFINITY && uz + row[z + 1] > best {
                        best = uz + row[z + 1];
                    }
                }
                total += best;
            }
            total / draws.rows() as f64
        }
    }
}

/// Gradient of [`emax`]: choice probability per option, outside option
/// first. Rows sum to one; empirical ties are split uniformly.
pub fn emax_gradient(u: &[f64], shocks: ShockModel<'_>) -> Vec<f64> {
    match shocks {
        ShockModel::Logit => math::softmax_with_outside(u),
        ShockModel::Empirical(draws) => {
            debug_assert_eq!(draws.options(), u.len() + 1);
            let mut probs = vec![0.0; u.len() + 1];
            for r in 0..draws.rows() {
                let row = draws.row(r);
                let mut best = row[0];
                for (z, &uz) in u.iter().enumerate() {
                    if uz > f64::NEG_INFINITY && uz + row[z + 1] > best {
                        best = uz + row[z + 1];
                    }
                }
                let mut ties = 0usize;
                let tied = |payoff: f64| payoff == best;
                if tied(row[0]) {
                    ties += 1;
                }
                for (z, &uz) in u.iter().enumerate() {
                    if uz > f64::NEG_INFINITY && tied(uz + row[z + 1]) {
                        ties += 1;
                    }
                }
                let w = 1.0 / ties as f64;
                if tied(row[0]) {
                    probs[0] += w;
                }
                for (z, &uz) in u.iter().enumerate() {
                    if uz > f64::NEG_INFINITY && tied(uz + row[z + 1]) {
                        probs[z + 1] += w;
                    }
                }
            }
            let inv = 1.0 / draws.rows() as f64;
            probs.iter_mut().for_each(|p| *p *= inv);
            probs
        }
    }
}

fn check_shares(shares: &[f64]) -> Result<(), ChoiceError> {
    if shares.is_empty() {
        return Err(ChoiceError::NotAProbability { sum: 0.0 });
    }
    let mut sum = 0.0;
    for &s in shares {
        if !(s >= 0.0) {
            return Err(ChoiceError::NotAProbability { sum: s });
        }
        sum += s;
    }
    if math::abs(sum - 1.0) > 1e-9 {
        return Err(ChoiceError::NotAProbability { sum });
    }
    Ok(())
}

/// Value of the convex conjugate `G*(mu) = sup_U (sum_z mu_z U_z - G(U))`
/// at a probability vector over the |Z|+1 options (outside option
/// first). Boundary shares are fine for the value: `0 log 0 = 0` in the
/// logit closed form. The empirical value is computed by subgradient
/// ascent and may slightly undershoot the supremum.
pub fn conjugate_value(shares: &[f64], shocks: ShockModel<'_>) -> Result<f64, ChoiceError> {
    check_shares(shares)?;
    match shocks {
        ShockModel::Logit => Ok(shares.iter().map(|&s| math::xlogx(s)).sum()),
        ShockModel::Empirical(draws) => Ok(empirical_conjugate(shares, draws).0),
    }
}

/// Value and gradient of the conjugate at an interior probability
/// vector. The gradient is the systematic utility vector that makes the
/// shares optimal: in the logit case exactly `U_z = log(mu_z / mu_0)`;
/// in the empirical case the best `U` found by subgradient ascent (the
/// Fenchel-gap minimizer over the iterates).
pub fn conjugate(shares: &[f64], shocks: ShockModel<'_>) -> Result<(f64, Vec<f64>), ChoiceError> {
    check_shares(shares)?;
    if let Some(z) = shares.iter().position(|&s| s == 0.0) {
        return Err(ChoiceError::BoundarySupport { option: z });
    }
    match shocks {
        ShockModel::Logit => {
            let value: f64 = shares.iter().map(|&s| math::xlogx(s)).sum();
            let mu0 = shares[0];
            let grad = shares[1..].iter().map(|&s| math::ln(s / mu0)).collect();
            Ok((value, grad))
        }
        ShockModel::Empirical(draws) => Ok(empirical_conjugate(shares, draws)),
    }
}

/// Subgradient ascent with decaying steps on the concave, piecewise
/// linear problem `max_U sum mu_z U_z - emax(U)`. Keeps the best iterate
/// and also tries the running average, which smooths the kinks.
fn empirical_conjugate(shares: &[f64], draws: &DrawMatrix) -> (f64, Vec<f64>) {
    const ITERS: usize = 4000;
    let z_count = shares.len() - 1;
    let mut u = vec![0.0; z_count];
    let mut avg = vec![0.0; z_count];
    let mut best_val = f64::NEG_INFINITY;
    let mut best_u = u.clone();
    let scale = 1.0
        + draws
            .data
            .iter()
            .fold(0.0_f64, |acc, &v| acc.max(math::abs(v)));
    let objective = |u: &[f64]| -> f64 {
        shares[1..].iter().zip(u.iter()).map(|(s, uz)| s * uz).sum::<f64>() - emax(u, ShockModel::Empirical(draws))
    };
    for k in 0..ITERS {
        let val = objective(&u);
        if val > best_val {
            best_val = val;
            best_u.copy_from_slice(&u);
        }
        let probs = emax_gradient(&u, ShockModel::Empirical(draws));
        let step = scale / math::sqrt(k as f64 + 1.0);
        for z in 0..z_count {
            u[z] += step * (shares[z + 1] - probs[z + 1]);
            avg[z] += u[z];
        }
    }
    for a in avg.iter_mut() {
        *a /= ITERS as f64;
    }
    let avg_val = objective(&avg);
    if avg_val > best_val {
        best_val = avg_val;
        best_u = avg;
    }
    (best_val, best_u)
}
