//! Identification: recovers systematic surpluses and primitives from
//! observed conditional shares and hedonic prices.
//!
//! The conjugate gradient inverts choice probabilities back to
//! systematic utilities: `U_xz = dG*_x/dmu_{z|x}` and
//! `V_zy = dH*_y/dmu_{z|y}`; subtracting and adding the observed prices
//! then yields `alpha_hat = U_hat - p` and `gamma_hat = V_hat + p`. In
//! the logit case this is plain log-odds: `alpha_xz =
//! log(mu_xz/mu_x0) - p_z`, `gamma_zy = log(mu_zy/mu_0y) + p_z`. Every
//! share must be strictly interior; a zero share means full support
//! fails and the formulas are undefined.

use alloc::vec::Vec;
use core::fmt;

use crate::choice::{
    conjugate, emax_gradient, ChoiceError, ChoiceProbabilities, Heterogeneity, SystematicUtilities,
};
use crate::market::{PriceVector, Table};
use crate::math;

/// What the analyst observes: conditional allocation shares (outside
/// option included), type masses, prices and the shock model.
#[derive(Debug, Clone)]
pub struct ObservedMarket {
    pub shares: ChoiceProbabilities,
    pub n: Vec<f64>,
    pub m: Vec<f64>,
    pub prices: PriceVector,
    pub heterogeneity: Heterogeneity,
}

/// Recovered primitives.
#[derive(Debug, Clone)]
pub struct IdentifiedPrimitives {
    /// `u_hat - p`, row-wise: |X| x |Z|.
    pub alpha_hat: Table,
    /// `v_hat + p`: |Z| x |Y|.
    pub gamma_hat: Table,
    pub systematic: SystematicUtilities,
    /// Largest gap between the shares implied by the recovered
    /// utilities and the observed shares. Zero up to float noise for
    /// logit; positive for empirical shocks when the observed shares are
    /// not exactly attainable (the Fenchel-gap minimizer is returned).
    pub share_residual: f64,
}

/// How to compute the conjugate gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IdentificationPath {
    /// Logit closed form when available, generic otherwise.
    #[default]
    Auto,
    /// Always run the conjugate maximization.
    Generic,
}

#[derive(Debug)]
pub enum IdentifyError {
    Choice(ChoiceError),
    /// Prices must be finite for primitive recovery.
    NonFinitePrice { quality: usize },
    Shape { what: &'static str },
}

impl fmt::Display for IdentifyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IdentifyError::Choice(e) => write!(f, "{e}"),
            IdentifyError::NonFinitePrice { quality } => {
                write!(f, "price of quality {quality} is not finite")
            }
            IdentifyError::Shape { what } => write!(f, "inconsistent dimensions in {what}"),
        }
    }
}

impl core::error::Error for IdentifyError {}

impl From<ChoiceError> for IdentifyError {
    fn from(e: ChoiceError) -> Self {
        IdentifyError::Choice(e)
    }
}

impl From<IdentifyError> for ChoiceError {
    fn from(e: IdentifyError) -> Self {
        match e {
            IdentifyError::Choice(c) => c,
            _ => ChoiceError::NotAProbability { sum: f64::NAN },
        }
    }
}

fn check_shapes(obs: &ObservedMarket) -> Result<(usize, usize, usize), IdentifyError> {
    let xs = obs.shares.supply.rows();
    let ys = obs.shares.demand.rows();
    let options = obs.shares.supply.cols();
    if options < 2 || obs.shares.demand.cols() != options {
        return Err(IdentifyError::Shape { what: "share tables" });
    }
    let zs = options - 1;
    if obs.prices.len() != zs {
        return Err(IdentifyError::Shape { what: "prices" });
    }
    if obs.n.len() != xs || obs.m.len() != ys {
        return Err(IdentifyError::Shape { what: "masses" });
    }
    Ok((xs, ys, zs))
}

/// Recovers the systematic utilities `U`, `V` from interior shares.
pub fn identify_systematic(
    obs: &ObservedMarket,
    path: IdentificationPath,
) -> Result<(SystematicUtilities, f64), IdentifyError> {
    let (xs, ys, zs) = check_shapes(obs)?;
    let mut u = Table::zeros(xs, zs);
    let mut v = Table::zeros(zs, ys);
    let mut residual = 0.0_f64;

    for x in 0..xs {
        let shares = obs.shares.supply.row(x);
        let (grad, shocks) = match (&obs.heterogeneity, path) {
            (Heterogeneity::Logit, IdentificationPath::Auto) => {
                (logit_log_odds(shares)?, None)
            }
            (het, _) => {
                let shocks = het.producer_shocks(x);
                let (_, grad) = conjugate(shares, shocks)?;
                (grad, Some(shocks))
            }
        };
        for z in 0..zs {
            u.set(x, z, grad[z]);
        }
        if let Some(shocks) = shocks {
            let implied = emax_gradient(&grad, shocks);
            for (opt, &s) in implied.iter().enumerate() {
                residual = residual.max(math::abs(s - shares[opt]));
            }
        }
    }
    for y in 0..ys {
        let shares = obs.shares.demand.row(y);
        let (grad, shocks) = match (&obs.heterogeneity, path) {
            (Heterogeneity::Logit, IdentificationPath::Auto) => {
                (logit_log_odds(shares)?, None)
            }
            (het, _) => {
                let shocks = het.consumer_shocks(y);
                let (_, grad) = conjugate(shares, shocks)?;
                (grad, Some(shocks))
            }
        };
        for z in 0..zs {
            v.set(z, y, grad[z]);
        }
        if let Some(shocks) = shocks {
            let implied = emax_gradient(&grad, shocks);
            for (opt, &s) in implied.iter().enumerate() {
                residual = residual.max(math::abs(s - shares[opt]));
            }
        }
    }
    Ok((SystematicUtilities { u, v }, residual))
}

fn logit_log_odds(shares: &[f64]) -> Result<Vec<f64>, ChoiceError> {
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
    if let Some(z) = shares.iter().position(|&s| s == 0.0) {
        return Err(ChoiceError::BoundarySupport { option: z });
    }
    let mu0 = shares[0];
    Ok(shares[1..].iter().map(|&s| math::ln(s / mu0)).collect())
}

/// Recovers `alpha` and `gamma` from shares and prices.
pub fn identify_primitives_with(
    obs: &ObservedMarket,
    path: IdentificationPath,
) -> Result<IdentifiedPrimitives, IdentifyError> {
    let (_, _, zs) = check_shapes(obs)?;
    for (z, &p) in obs.prices.as_slice().iter().enumerate() {
        if !p.is_finite() {
            return Err(IdentifyError::NonFinitePrice { quality: z });
        }
    }
    let (systematic, share_residual) = identify_systematic(obs, path)?;
    let p = obs.prices.as_slice();
    let alpha_hat = Table::from_fn(systematic.u.rows(), zs, |x, z| systematic.u.get(x, z) - p[z]);
    let gamma_hat =
        Table::from_fn(zs, systematic.v.cols(), |z, y| systematic.v.get(z, y) + p[z]);
    Ok(IdentifiedPrimitives { alpha_hat, gamma_hat, systematic, share_residual })
}

/// [`identify_primitives_with`] on the default (fast-when-logit) path.
pub fn identify_primitives(obs: &ObservedMarket) -> Result<IdentifiedPrimitives, IdentifyError> {
    identify_primitives_with(obs, IdentificationPath::Auto)
}
