//! Finite synthetic populations: reproducible shock draws, individual
//! choice simulation and the solve → observe → identify round trip.
//!
//! Shocks come from a counter-based generator keyed by
//! `(seed, side, type, agent, option)`, so populations are bit-exact
//! reproducible and independent of generation order.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::choice::{emax_gradient, ChoiceError, DrawMatrix, Heterogeneity, SystematicUtilities};
use crate::identify::{identify_primitives, ObservedMarket};
use crate::market::{MarketSpec, PriceVector, Table};
use crate::math;
use crate::smooth::{solve_price_equilibrium, EquilibriumError, SmoothEquilibrium, SolveOptions};

/// Name of the keyed generator; recorded in every population so a
/// report can state how it was produced.
pub const GENERATOR_ID: &str = "splitmix-counter-v1";

const PRODUCER_SIDE: u64 = 0;
const CONSUMER_SIDE: u64 = 1;

#[inline]
fn splitmix(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a `(seed, side, type, agent, option)` key into 64 uniform bits.
/// Pure function of the key: evaluation order never matters.
#[inline]
pub fn mix_key(seed: u64, side: u64, ty: u64, agent: u64, option: u64) -> u64 {
    let mut h = splitmix(seed);
    h = splitmix(h ^ side);
    h = splitmix(h ^ ty);
    h = splitmix(h ^ agent);
    h = splitmix(h ^ option);
    h
}

/// Maps 64 bits to the open interval (0, 1).
#[inline]
pub fn uniform_open(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0) // 2^-53
}

/// Standard Gumbel deviate by inverse CDF, `-log(-log(u))`.
#[inline]
pub fn standard_gumbel(bits: u64) -> f64 {
    -math::ln(-math::ln(uniform_open(bits)))
}

/// A drawn population: one shock matrix per observable type and side,
/// each `agents_per_type x (|Z|+1)` with the outside option in column 0.
#[derive(Debug, Clone)]
pub struct Population {
    pub producer_shocks: Vec<DrawMatrix>,
    pub consumer_shocks: Vec<DrawMatrix>,
    pub agents_per_type: usize,
    pub seed: u64,
    pub generator_id: &'static str,
}

/// Per-type choice counts and shares from a simulated market day.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalShares {
    /// |X| x (|Z|+1) counts, outside option first.
    pub supply_counts: Vec<Vec<u64>>,
    /// |Y| x (|Z|+1) counts.
    pub demand_counts: Vec<Vec<u64>>,
    /// Counts divided by agents per type.
    pub supply_shares: Table,
    pub demand_shares: Table,
    pub agents_per_type: usize,
}

/// Draws shocks for every agent.
///
/// Logit heterogeneity yields iid standard Gumbel deviates through the
/// keyed generator; empirical heterogeneity resamples rows of the
/// provided draw matrices (row index keyed per agent).
pub fn draw_population(
    spec: &MarketSpec,
    het: &Heterogeneity,
    agents_per_type: usize,
    seed: u64,
) -> Population {
    let options = spec.quality_count() + 1;
    let side = |side_tag: u64, ty: usize, source: Option<&DrawMatrix>| -> DrawMatrix {
        let mut data = Vec::with_capacity(agents_per_type * options);
        for agent in 0..agents_per_type {
            match source {
                None => {
                    for option in 0..options {
                        let bits =
                            mix_key(seed, side_tag, ty as u64, agent as u64, option as u64);
                        data.push(standard_gumbel(bits));
                    }
                }
                Some(matrix) => {
                    let bits = mix_key(seed, side_tag, ty as u64, agent as u64, 0);
                    let row = (bits % matrix.rows() as u64) as usize;
                    data.extend_from_slice(matrix.row(row));
                }
            }
        }
        DrawMatrix::new(agents_per_type, options, data).expect("population shape is consistent")
    };
    let producer_shocks = (0..spec.producer_count())
        .map(|x| {
            let source = match het {
                Heterogeneity::Logit => None,
                Heterogeneity::Empirical(d) => Some(&d.producer[x]),
            };
            side(PRODUCER_SIDE, x, source)
        })
        .collect();
    let consumer_shocks = (0..spec.consumer_count())
        .map(|y| {
            let source = match het {
                Heterogeneity::Logit => None,
                Heterogeneity::Empirical(d) => Some(&d.consumer[y]),
            };
            side(CONSUMER_SIDE, y, source)
        })
        .collect();
    Population {
        producer_shocks,
        consumer_shocks,
        agents_per_type,
        seed,
        generator_id: GENERATOR_ID,
    }
}

/// Every agent picks the payoff-maximal option at the given prices;
/// ties break toward the lowest option index (0 = opt out).
pub fn simulate_choices(pop: &Population, spec: &MarketSpec, prices: &PriceVector) -> EmpiricalShares {
    let sys = SystematicUtilities::from_prices(spec, prices.as_slice());
    let options = spec.quality_count() + 1;
    let n = pop.agents_per_type;

    let tally = |shocks: &DrawMatrix, systematic: &[f64]| -> Vec<u64> {
        let mut counts = vec![0u64; options];
        for agent in 0..shocks.rows() {
            let row = shocks.row(agent);
            let mut best_opt = 0usize;
            let mut best = row[0];
            for (z, &u) in systematic.iter().enumerate() {
                if u == f64::NEG_INFINITY {
                    continue;
                }
                let payoff = u + row[z + 1];
                if payoff > best {
                    best = payoff;
                    best_opt = z + 1;
                }
            }
            counts[best_opt] += 1;
        }
        counts
    };

    let supply_counts: Vec<Vec<u64>> = (0..spec.producer_count())
        .map(|x| tally(&pop.producer_shocks[x], sys.u.row(x)))
        .collect();
    let demand_counts: Vec<Vec<u64>> = (0..spec.consumer_count())
        .map(|y| tally(&pop.consumer_shocks[y], &sys.v.col(y)))
        .collect();

    let to_shares = |counts: &[Vec<u64>]| {
        Table::from_fn(counts.len(), options, |r, c| counts[r][c] as f64 / n as f64)
    };
    EmpiricalShares {
        supply_shares: to_shares(&supply_counts),
        demand_shares: to_shares(&demand_counts),
        supply_counts,
        demand_counts,
        agents_per_type: n,
    }
}

/// Result of a simulate-and-reestimate run.
#[derive(Debug, Clone)]
pub struct RoundTripReport {
    /// Max-norm error of the recovered producer surpluses.
    pub alpha_err: f64,
    /// Max-norm error of the recovered consumer surpluses.
    pub gamma_err: f64,
    /// Largest gap between empirical and theoretical conditional shares.
    pub share_gap: f64,
    /// Clearing residual of the theoretical equilibrium used for prices.
    pub clearing_residual: f64,
    pub agents_per_type: usize,
    pub seed: u64,
    pub prices: Vec<f64>,
}

/// Round-trip failures.
#[derive(Debug)]
pub enum RoundTripError {
    Equilibrium(EquilibriumError),
    /// A sampled cell had zero count, so log-odds identification is
    /// undefined; draw a larger population.
    BoundarySupport { agent: crate::market::AgentType, option: usize, agents_per_type: usize },
}

impl fmt::Display for RoundTripError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RoundTripError::Equilibrium(e) => write!(f, "{e}"),
            RoundTripError::BoundarySupport { agent, option, agents_per_type } => write!(
                f,
                "{agent} sampled zero agents on option {option} with {agents_per_type} agents per type; \
                 increase the population size"
            ),
        }
    }
}

impl core::error::Error for RoundTripError {}

impl From<EquilibriumError> for RoundTripError {
    fn from(e: EquilibriumError) -> Self {
        RoundTripError::Equilibrium(e)
    }
}

/// Solves the logit equilibrium, simulates individual choices at its
/// prices, identifies the surpluses from the empirical shares and the
/// true prices, and reports the errors. The population-limit prices are
/// used for simulation; a finite population generically cannot clear
/// exactly.
pub fn round_trip(
    spec: &MarketSpec,
    het: &Heterogeneity,
    agents_per_type: usize,
    seed: u64,
) -> Result<RoundTripReport, RoundTripError> {
    let eq = solve_price_equilibrium(spec, het, &SolveOptions::default())?;
    round_trip_at(spec, het, &eq, agents_per_type, seed)
}

/// Round trip against an already-solved equilibrium (for sweeps over
/// seeds and population sizes).
pub fn round_trip_at(
    spec: &MarketSpec,
    het: &Heterogeneity,
    eq: &SmoothEquilibrium,
    agents_per_type: usize,
    seed: u64,
) -> Result<RoundTripReport, RoundTripError> {
    let pop = draw_population(spec, het, agents_per_type, seed);
    let emp = simulate_choices(&pop, spec, &eq.prices);

    for (x, counts) in emp.supply_counts.iter().enumerate() {
        if let Some(option) = counts.iter().position(|&c| c == 0) {
            return Err(RoundTripError::BoundarySupport {
                agent: crate::market::AgentType::Producer(x),
                option,
                agents_per_type,
            });
        }
    }
    for (y, counts) in emp.demand_counts.iter().enumerate() {
        if let Some(option) = counts.iter().position(|&c| c == 0) {
            return Err(RoundTripError::BoundarySupport {
                agent: crate::market::AgentType::Consumer(y),
                option,
                agents_per_type,
            });
        }
    }

    let obs = ObservedMarket {
        shares: crate::choice::ChoiceProbabilities {
            supply: emp.supply_shares.clone(),
            demand: emp.demand_shares.clone(),
        },
        n: spec.n.clone(),
        m: spec.m.clone(),
        prices: eq.prices.clone(),
        heterogeneity: het.clone(),
    };
    let identified = identify_primitives(&obs)
        .map_err(|e| RoundTripError::Equilibrium(EquilibriumError::Choice(ChoiceError::from(e))))?;

    let mut alpha_err = 0.0_f64;
    for x in 0..spec.producer_count() {
        for z in 0..spec.quality_count() {
            let truth = spec.alpha.get(x, z);
            if truth > f64::NEG_INFINITY {
                alpha_err = alpha_err.max(math::abs(identified.alpha_hat.get(x, z) - truth));
            }
        }
    }
    let mut gamma_err = 0.0_f64;
    for z in 0..spec.quality_count() {
        for y in 0..spec.consumer_count() {
            let truth = spec.gamma.get(z, y);
            if truth > f64::NEG_INFINITY {
                gamma_err = gamma_err.max(math::abs(identified.gamma_hat.get(z, y) - truth));
            }
        }
    }

    // Theoretical vs empirical conditional shares.
    let sys = SystematicUtilities::from_prices(spec, eq.prices.as_slice());
    let mut share_gap = 0.0_f64;
    for x in 0..spec.producer_count() {
        let theory = emax_gradient(sys.u.row(x), het.producer_shocks(x));
        for (opt, &t) in theory.iter().enumerate() {
            share_gap = share_gap.max(math::abs(emp.supply_shares.get(x, opt) - t));
        }
    }
    for y in 0..spec.consumer_count() {
        let theory = emax_gradient(&sys.v.col(y), het.consumer_shocks(y));
        for (opt, &t) in theory.iter().enumerate() {
            share_gap = share_gap.max(math::abs(emp.demand_shares.get(y, opt) - t));
        }
    }

    Ok(RoundTripReport {
        alpha_err,
        gamma_err,
        share_gap,
        clearing_residual: eq.clearing_residual,
        agents_per_type,
        seed,
        prices: eq.prices.as_slice().to_vec(),
    })
}

/// Identification error with exact theoretical shares (the infinite
/// population limit): bypasses simulation entirely.
pub fn round_trip_exact(
    spec: &MarketSpec,
    het: &Heterogeneity,
) -> Result<(f64, f64), EquilibriumError> {
    let eq = solve_price_equilibrium(spec, het, &SolveOptions::default())?;
    let obs = ObservedMarket {
        shares: eq.shares.clone(),
        n: spec.n.clone(),
        m: spec.m.clone(),
        prices: eq.prices.clone(),
        heterogeneity: het.clone(),
    };
    let identified =
        identify_primitives(&obs).map_err(|e| EquilibriumError::Choice(ChoiceError::from(e)))?;
    let mut alpha_err = 0.0_f64;
    let mut gamma_err = 0.0_f64;
    for x in 0..spec.producer_count() {
        for z in 0..spec.quality_count() {
            if spec.alpha.get(x, z) > f64::NEG_INFINITY {
                alpha_err =
                    alpha_err.max(math::abs(identified.alpha_hat.get(x, z) - spec.alpha.get(x, z)));
            }
        }
    }
    for z in 0..spec.quality_count() {
        for y in 0..spec.consumer_count() {
            if spec.gamma.get(z, y) > f64::NEG_INFINITY {
                gamma_err =
                    gamma_err.max(math::abs(identified.gamma_hat.get(z, y) - spec.gamma.get(z, y)));
            }
        }
    }
    Ok((alpha_err, gamma_err))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::example_market;

    #[test]
    fn populations_are_reproducible() {
        let spec = example_market();
        let a = draw_population(&spec, &Heterogeneity::Logit, 50, 7);
        let b = draw_population(&spec, &Heterogeneity::Logit, 50, 7);
        assert_eq!(a.producer_shocks, b.producer_shocks);
        assert_eq!(a.consumer_shocks, b.consumer_shocks);
        let c = draw_population(&spec, &Heterogeneity::Logit, 50, 8);
        assert_ne!(a.producer_shocks, c.producer_shocks);
    }

    #[test]
    fn gumbel_moments() {
        // Mean of a standard Gumbel is the Euler-Mascheroni constant,
        // sd is pi/sqrt(6); check the sample mean within 4 standard errors.
        const EULER_MASCHERONI: f64 = 0.577_215_664_901_532_9;
        let n = 1_000_000u64;
        let mut sum = 0.0;
        for i in 0..n {
            sum += standard_gumbel(mix_key(123, 0, 0, i, 0));
        }
        let mean = sum / n as f64;
        let se = core::f64::consts::PI / math::sqrt(6.0) / math::sqrt(n as f64);
        assert!(
            math::abs(mean - EULER_MASCHERONI) < 4.0 * se,
            "mean {mean}, expected {EULER_MASCHERONI} +- {}",
            4.0 * se
        );
    }

    #[test]
    fn empirical_single_row_population_is_constant() {
        let spec = example_market();
        let row = vec![0.25, -0.5, 1.0, 0.0];
        let one_row = DrawMatrix::new(1, 4, row.clone()).unwrap();
        let het = Heterogeneity::Empirical(crate::choice::EmpiricalDraws {
            producer: vec![one_row.clone(); 4],
            consumer: vec![one_row; 3],
            seed: 1,
        });
        let pop = draw_population(&spec, &het, 10, 99);
        for m in pop.producer_shocks.iter().chain(pop.consumer_shocks.iter()) {
            for r in 0..m.rows() {
                assert_eq!(m.row(r), row.as_slice());
            }
        }
    }

    #[test]
    fn forbidden_everywhere_means_everyone_opts_out() {
        let mut spec = example_market();
        for z in 0..3 {
            spec.alpha.set(0, z, f64::NEG_INFINITY);
        }
        let pop = draw_population(&spec, &Heterogeneity::Logit, 100, 5);
        let emp = simulate_choices(&pop, &spec, &PriceVector(vec![0.0; 3]));
        assert_eq!(emp.supply_counts[0][0], 100);
    }

    #[test]
    fn argmax_choice_with_zero_shocks() {
        let spec = MarketSpec {
            producer_types: vec![alloc::string::String::from("x")],
            consumer_types: vec![alloc::string::String::from("y")],
            qualities: vec![alloc::string::String::from("z1"), alloc::string::String::from("z2")],
            n: vec![1.0],
            m: vec![1.0],
            alpha: Table::new(1, 2, vec![1.0, 2.0]).unwrap(),
            gamma: Table::new(2, 1, vec![1.0, 1.0]).unwrap(),
            free_disposal: false,
        };
        let zero = DrawMatrix::new(1, 3, vec![0.0; 3]).unwrap();
        let pop = Population {
            producer_shocks: vec![zero.clone()],
            consumer_shocks: vec![zero],
            agents_per_type: 1,
            seed: 0,
            generator_id: GENERATOR_ID,
        };
        let emp = simulate_choices(&pop, &spec, &PriceVector(vec![0.0, 0.0]));
        // Producer picks z2 (payoff 2); consumer ties and takes the
        // lowest index, z1.
        assert_eq!(emp.supply_counts[0], vec![0, 0, 1]);
        assert_eq!(emp.demand_counts[0], vec![0, 1, 0]);
    }

    #[test]
    fn empirical_shares_approach_theory() {
        let spec = example_market();
        let het = Heterogeneity::Logit;
        let eq = solve_price_equilibrium(&spec, &het, &SolveOptions::default()).unwrap();
        let n = 100_000usize;
        let report = round_trip_at(&spec, &het, &eq, n, 42).unwrap();
        // Binomial 4-sigma bound with the worst-case variance 1/4.
        assert!(report.share_gap <= 4.0 * math::sqrt(0.25 / n as f64) * 2.0);
        assert!(report.alpha_err < 0.5);
    }

    #[test]
    fn exact_shares_identify_exactly() {
        let spec = example_market();
        let (alpha_err, gamma_err) = round_trip_exact(&spec, &Heterogeneity::Logit).unwrap();
        assert!(alpha_err < 1e-8, "{alpha_err}");
        assert!(gamma_err < 1e-8, "{gamma_err}");
    }

    #[test]
    fn tiny_population_hits_boundary() {
        let spec = example_market();
        let result = round_trip(&spec, &Heterogeneity::Logit, 3, 0);
        assert!(matches!(result, Err(RoundTripError::BoundarySupport { .. })));
    }

    #[test]
    fn reports_are_deterministic() {
        // Mild surpluses keep all shares comfortably interior at small N.
        let spec = MarketSpec {
            producer_types: vec![alloc::string::String::from("a"), alloc::string::String::from("b")],
            consumer_types: vec![alloc::string::String::from("c"), alloc::string::String::from("d")],
            qualities: vec![alloc::string::String::from("q"), alloc::string::String::from("r")],
            n: vec![1.0, 1.0],
            m: vec![1.0, 1.0],
            alpha: Table::new(2, 2, vec![0.5, 1.0, 1.0, 0.5]).unwrap(),
            gamma: Table::new(2, 2, vec![0.5, 1.0, 1.0, 0.5]).unwrap(),
            free_disposal: false,
        };
        let a = round_trip(&spec, &Heterogeneity::Logit, 2000, 11).unwrap();
        let b = round_trip(&spec, &Heterogeneity::Logit, 2000, 11).unwrap();
        assert_eq!(a.alpha_err, b.alpha_err);
        assert_eq!(a.gamma_err, b.gamma_err);
        assert_eq!(a.share_gap, b.share_gap);
    }
}
