//! Market data model: types, validation, indirect surplus, welfare and
//! the equilibrium verifier.
//!
//! Producers of observable type `x` supply one unit of some quality `z`
//! for payoff `alpha[x][z] + p[z]`; consumers of type `y` buy one unit
//! for payoff `gamma[z][y] - p[z]`. Either side may opt out for payoff
//! zero. Surplus entries of `-inf` mark infeasible pairs and are skipped
//! by every maximum scan; they never carry mass.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::math;

/// Default absolute tolerance for feasibility and rationality checks on
/// solver output. Exact (integer) inputs satisfy the checks with zero
/// slack; floating-point pipelines need this much room.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Dense row-major table of extended reals (`-inf` allowed, `+inf` not).
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Table {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, MarketError> {
        if data.len() != rows * cols {
            return Err(MarketError::DimensionMismatch {
                what: "table data length",
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Column extracted as an owned vector (storage is row-major).
    pub fn col(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.cols)
    }
}

/// A finite hedonic market: type sets, masses and surplus tables.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketSpec {
    /// Producer type labels, unique, in order (the set X).
    pub producer_types: Vec<String>,
    /// Consumer type labels (the set Y).
    pub consumer_types: Vec<String>,
    /// Quality labels (the set Z).
    pub qualities: Vec<String>,
    /// Mass of producers per type, nonnegative.
    pub n: Vec<f64>,
    /// Mass of consumers per type, nonnegative.
    pub m: Vec<f64>,
    /// Producer surplus `alpha[x][z]`, |X| x |Z|, `-inf` = infeasible.
    pub alpha: Table,
    /// Consumer surplus `gamma[z][y]`, |Z| x |Y|.
    pub gamma: Table,
    /// When set, market clearing relaxes to supply >= demand.
    pub free_disposal: bool,
}

/// Non-fatal findings from validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValidationWarning {
    /// Every surplus entry for this agent type is `-inf`; it can only opt out.
    AllInfeasible(AgentType),
}

impl MarketSpec {
    pub fn producer_count(&self) -> usize {
        self.producer_types.len()
    }

    pub fn consumer_count(&self) -> usize {
        self.consumer_types.len()
    }

    pub fn quality_count(&self) -> usize {
        self.qualities.len()
    }

    /// All masses are integers (drives the integrality guarantee of the
    /// flow solver).
    pub fn has_integral_masses(&self) -> bool {
        self.n.iter().chain(self.m.iter()).all(|&v| math::is_integer(v))
    }

    /// All finite surplus entries are integers.
    pub fn has_integral_surpluses(&self) -> bool {
        self.alpha
            .data()
            .iter()
            .chain(self.gamma.data().iter())
            .all(|&v| v == f64::NEG_INFINITY || math::is_integer(v))
    }

    /// Checks every structural invariant. Returns warnings for agent
    /// types that cannot participate at all.
    pub fn validate(&self) -> Result<Vec<ValidationWarning>, MarketError> {
        let (x, y, z) = (self.producer_count(), self.consumer_count(), self.quality_count());
        if x == 0 || y == 0 || z == 0 {
            return Err(MarketError::EmptyTypeSet);
        }
        check_unique(&self.producer_types)?;
        check_unique(&self.consumer_types)?;
        check_unique(&self.qualities)?;
        if self.n.len() != x {
            return Err(MarketError::DimensionMismatch { what: "n", expected: x, got: self.n.len() });
        }
        if self.m.len() != y {
            return Err(MarketError::DimensionMismatch { what: "m", expected: y, got: self.m.len() });
        }
        if self.alpha.rows() != x || self.alpha.cols() != z {
            return Err(MarketError::DimensionMismatch {
                what: "alpha",
                expected: x * z,
                got: self.alpha.rows() * self.alpha.cols(),
            });
        }
        if self.gamma.rows() != z || self.gamma.cols() != y {
            return Err(MarketError::DimensionMismatch {
                what: "gamma",
                expected: z * y,
                got: self.gamma.rows() * self.gamma.cols(),
            });
        }
        for (i, &v) in self.n.iter().enumerate() {
            if !(v >= 0.0) {
                return Err(MarketError::NegativeMass { agent: AgentType::Producer(i), mass: v });
            }
        }
        for (i, &v) in self.m.iter().enumerate() {
            if !(v >= 0.0) {
                return Err(MarketError::NegativeMass { agent: AgentType::Consumer(i), mass: v });
            }
        }
        for &v in self.alpha.data() {
            if v.is_nan() || v == f64::INFINITY {
                return Err(MarketError::InvalidEntry { table: "alpha" });
            }
        }
        for &v in self.gamma.data() {
            if v.is_nan() || v == f64::INFINITY {
                return Err(MarketError::InvalidEntry { table: "gamma" });
            }
        }
        let mut warnings = Vec::new();
        for xi in 0..x {
            if self.alpha.row(xi).iter().all(|&v| v == f64::NEG_INFINITY) {
                warnings.push(ValidationWarning::AllInfeasible(AgentType::Producer(xi)));
            }
        }
        for yi in 0..y {
            if (0..z).all(|zi| self.gamma.get(zi, yi) == f64::NEG_INFINITY) {
                warnings.push(ValidationWarning::AllInfeasible(AgentType::Consumer(yi)));
            }
        }
        Ok(warnings)
    }
}

fn check_unique(labels: &[String]) -> Result<(), MarketError> {
    for i in 0..labels.len() {
        for j in i + 1..labels.len() {
            if labels[i] == labels[j] {
                return Err(MarketError::DuplicateLabel(labels[i].clone()));
            }
        }
    }
    Ok(())
}

/// Type-level supply and demand masses.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    /// `mu_xz[x][z]`: mass of type-x producers supplying quality z.
    pub mu_xz: Table,
    /// `mu_zy[z][y]`: mass of type-y consumers demanding quality z.
    pub mu_zy: Table,
}

impl Allocation {
    pub fn zeros(spec: &MarketSpec) -> Self {
        Self {
            mu_xz: Table::zeros(spec.producer_count(), spec.quality_count()),
            mu_zy: Table::zeros(spec.quality_count(), spec.consumer_count()),
        }
    }

    /// Mass of quality `z` supplied across producer types.
    pub fn supply(&self, z: usize) -> f64 {
        (0..self.mu_xz.rows()).map(|x| self.mu_xz.get(x, z)).sum()
    }

    /// Mass of quality `z` demanded across consumer types.
    pub fn demand(&self, z: usize) -> f64 {
        self.mu_zy.row(z).iter().sum()
    }

    /// Participating mass of producer type `x`.
    pub fn producer_participation(&self, x: usize) -> f64 {
        self.mu_xz.row(x).iter().sum()
    }

    /// Participating mass of consumer type `y`.
    pub fn consumer_participation(&self, y: usize) -> f64 {
        (0..self.mu_zy.rows()).map(|z| self.mu_zy.get(z, y)).sum()
    }

    /// Opt-out mass `mu_x0 = n_x - sum_z mu_xz`.
    pub fn producer_opt_out(&self, spec: &MarketSpec, x: usize) -> f64 {
        spec.n[x] - self.producer_participation(x)
    }

    /// Opt-out mass `mu_0y = m_y - sum_z mu_zy`.
    pub fn consumer_opt_out(&self, spec: &MarketSpec, y: usize) -> f64 {
        spec.m[y] - self.consumer_participation(y)
    }

    /// Every entry is a mathematical integer.
    pub fn is_integral(&self) -> bool {
        self.mu_xz
            .data()
            .iter()
            .chain(self.mu_zy.data().iter())
            .all(|&v| math::is_integer(v))
    }

    /// People counting and market clearing, within `tol`.
    pub fn check_feasible(&self, spec: &MarketSpec, tol: f64) -> Result<(), MarketError> {
        for x in 0..spec.producer_count() {
            for z in 0..spec.quality_count() {
                if self.mu_xz.get(x, z) < -tol {
                    return Err(MarketError::ConstraintViolation {
                        what: "negative supply mass",
                        residual: -self.mu_xz.get(x, z),
                    });
                }
            }
            let excess = self.producer_participation(x) - spec.n[x];
            if excess > tol {
                return Err(MarketError::ConstraintViolation {
                    what: "producer people counting",
                    residual: excess,
                });
            }
        }
        for y in 0..spec.consumer_count() {
            for z in 0..spec.quality_count() {
                if self.mu_zy.get(z, y) < -tol {
                    return Err(MarketError::ConstraintViolation {
                        what: "negative demand mass",
                        residual: -self.mu_zy.get(z, y),
                    });
                }
            }
            let excess = self.consumer_participation(y) - spec.m[y];
            if excess > tol {
                return Err(MarketError::ConstraintViolation {
                    what: "consumer people counting",
                    residual: excess,
                });
            }
        }
        for z in 0..spec.quality_count() {
            let gap = self.supply(z) - self.demand(z);
            let bad = if spec.free_disposal { gap < -tol } else { math::abs(gap) > tol };
            if bad {
                return Err(MarketError::ConstraintViolation {
                    what: "market clearing",
                    residual: math::abs(gap),
                });
            }
        }
        Ok(())
    }
}

/// Hedonic price per quality.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceVector(pub Vec<f64>);

impl PriceVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Indirect utilities `u_x = max_z(alpha_xz + p_z, 0)` and
/// `v_y = max_z(gamma_zy - p_z, 0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IndirectUtilities {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

/// Interval of prices supporting a given optimal dual pair.
/// Entries may be `-inf` (quality demanded by nobody) or `+inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// One side of the market plus the type index within it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentType {
    Producer(usize),
    Consumer(usize),
}

impl fmt::Display for AgentType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AgentType::Producer(i) => write!(f, "producer {i}"),
            AgentType::Consumer(i) => write!(f, "consumer {i}"),
        }
    }
}

/// A choice that is beaten by another option at the given prices.
///
/// `chosen`/`better` of `None` mean the outside option.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalityViolation {
    pub agent: AgentType,
    pub chosen: Option<usize>,
    pub better: Option<usize>,
    /// How much payoff the agent forgoes (always > tolerance).
    pub slack: f64,
}

/// Outcome of checking Definition-1 equilibrium conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub people_counting_ok: bool,
    pub market_clearing_ok: bool,
    pub rationality_violations: Vec<RationalityViolation>,
    /// Largest constraint or rationality residual found (0 when clean).
    pub max_residual: f64,
}

impl VerificationReport {
    pub fn all_clear(&self) -> bool {
        self.people_counting_ok && self.market_clearing_ok && self.rationality_violations.is_empty()
    }
}

/// Errors from market construction and evaluation.
#[derive(Debug, Clone, PartialEq)]
pub enum MarketError {
    DimensionMismatch { what: &'static str, expected: usize, got: usize },
    NegativeMass { agent: AgentType, mass: f64 },
    DuplicateLabel(String),
    EmptyTypeSet,
    /// `+inf` or NaN in a surplus table.
    InvalidEntry { table: &'static str },
    /// Positive mass on a forbidden (`-inf`) cell.
    InfeasibleMass { agent: AgentType, quality: usize },
    ConstraintViolation { what: &'static str, residual: f64 },
}

impl fmt::Display for MarketError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MarketError::DimensionMismatch { what, expected, got } => {
                write!(f, "dimension mismatch in {what}: expected {expected} entries, got {got}")
            }
            MarketError::NegativeMass { agent, mass } => {
                write!(f, "negative mass {mass} for {agent}")
            }
            MarketError::DuplicateLabel(l) => write!(f, "duplicate label {l:?}"),
            MarketError::EmptyTypeSet => write!(f, "producer, consumer and quality sets must be nonempty"),
            MarketError::InvalidEntry { table } => {
                write!(f, "{table} contains +inf or NaN; only finite values and -inf are allowed")
            }
            MarketError::InfeasibleMass { agent, quality } => {
                write!(f, "{agent} has positive mass on forbidden quality {quality}")
            }
            MarketError::ConstraintViolation { what, residual } => {
                write!(f, "allocation violates {what} by {residual:e}")
            }
        }
    }
}

impl core::error::Error for MarketError {}

/// Indirect producer-consumer surplus `Phi_xy = max_z(alpha_xz + gamma_zy)`
/// together with the qualities attaining the maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct IndirectSurplus {
    /// |X| x |Y|; `-inf` when no quality is feasible for the pair.
    pub phi: Table,
    /// `argmax[x * |Y| + y]`: all maximizing qualities, empty when `-inf`.
    pub argmax: Vec<Vec<usize>>,
}

impl IndirectSurplus {
    pub fn argmax_for(&self, x: usize, y: usize) -> &[usize] {
        &self.argmax[x * self.phi.cols() + y]
    }
}

/// Computes the indirect surplus matrix of a validated spec.
pub fn indirect_surplus_matrix(spec: &MarketSpec) -> IndirectSurplus {
    let (xs, ys, zs) = (spec.producer_count(), spec.consumer_count(), spec.quality_count());
    let mut phi = Table::zeros(xs, ys);
    let mut argmax = Vec::with_capacity(xs * ys);
    for x in 0..xs {
        for y in 0..ys {
            let mut best = f64::NEG_INFINITY;
            let mut ties: Vec<usize> = Vec::new();
            for z in 0..zs {
                let a = spec.alpha.get(x, z);
                let g = spec.gamma.get(z, y);
                if a == f64::NEG_INFINITY || g == f64::NEG_INFINITY {
                    continue;
                }
                let s = a + g;
                if s > best {
                    best = s;
                    ties.clear();
                    ties.push(z);
                } else if s == best {
                    ties.push(z);
                }
            }
            phi.set(x, y, best);
            argmax.push(ties);
        }
    }
    IndirectSurplus { phi, argmax }
}

/// Total surplus `sum mu_xz alpha_xz + sum mu_zy gamma_zy` of a feasible
/// allocation.
pub fn welfare(spec: &MarketSpec, mu: &Allocation) -> Result<f64, MarketError> {
    mu.check_feasible(spec, DEFAULT_TOL)?;
    let mut total = 0.0;
    for x in 0..spec.producer_count() {
        for z in 0..spec.quality_count() {
            let mass = mu.mu_xz.get(x, z);
            if mass == 0.0 {
                continue;
            }
            let a = spec.alpha.get(x, z);
            if a == f64::NEG_INFINITY {
                return Err(MarketError::InfeasibleMass { agent: AgentType::Producer(x), quality: z });
            }
            total += mass * a;
        }
    }
    for z in 0..spec.quality_count() {
        for y in 0..spec.consumer_count() {
            let mass = mu.mu_zy.get(z, y);
            if mass == 0.0 {
                continue;
            }
            let g = spec.gamma.get(z, y);
            if g == f64::NEG_INFINITY {
                return Err(MarketError::InfeasibleMass { agent: AgentType::Consumer(y), quality: z });
            }
            total += mass * g;
        }
    }
    Ok(total)
}

/// Checks the three equilibrium conditions (people counting, market
/// clearing, rationality including opt-out) at tolerance `tol`.
/// Violations are reported, never thrown.
pub fn verify_equilibrium(
    spec: &MarketSpec,
    prices: &PriceVector,
    mu: &Allocation,
    tol: f64,
) -> VerificationReport {
    let p = prices.as_slice();
    let mut max_residual = 0.0_f64;
    let mut track = |r: f64| {
        if r > max_residual {
            max_residual = r;
        }
    };

    let mut people_counting_ok = true;
    for x in 0..spec.producer_count() {
        let excess = mu.producer_participation(x) - spec.n[x];
        if excess > tol {
            people_counting_ok = false;
            track(excess);
        }
    }
    for y in 0..spec.consumer_count() {
        let excess = mu.consumer_participation(y) - spec.m[y];
        if excess > tol {
            people_counting_ok = false;
            track(excess);
        }
    }

    let mut market_clearing_ok = true;
    for z in 0..spec.quality_count() {
        let gap = mu.supply(z) - mu.demand(z);
        let bad = if spec.free_disposal { gap < -tol } else { math::abs(gap) > tol };
        if bad {
            market_clearing_ok = false;
            track(math::abs(gap));
        }
    }

    let mut violations = Vec::new();
    // Producer side: payoff of choosing z is alpha_xz + p_z; opting out pays 0.
    for x in 0..spec.producer_count() {
        let payoff = |z: usize| {
            let a = spec.alpha.get(x, z);
            if a == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                a + p[z]
            }
        };
        let mut best_z = None;
        let mut best = 0.0_f64; // outside option
        for z in 0..spec.quality_count() {
            if payoff(z) > best {
                best = payoff(z);
                best_z = Some(z);
            }
        }
        for z in 0..spec.quality_count() {
            if mu.mu_xz.get(x, z) > tol {
                let slack = best - payoff(z);
                if slack > tol {
                    violations.push(RationalityViolation {
                        agent: AgentType::Producer(x),
                        chosen: Some(z),
                        better: best_z,
                        slack,
                    });
                    track(slack);
                }
            }
        }
        if mu.producer_opt_out(spec, x) > tol && best > tol {
            violations.push(RationalityViolation {
                agent: AgentType::Producer(x),
                chosen: None,
                better: best_z,
                slack: best,
            });
            track(best);
        }
    }
    // Consumer side: payoff of z is gamma_zy - p_z.
    for y in 0..spec.consumer_count() {
        let payoff = |z: usize| {
            let g = spec.gamma.get(z, y);
            if g == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                g - p[z]
            }
        };
        let mut best_z = None;
        let mut best = 0.0_f64;
        for z in 0..spec.quality_count() {
            if payoff(z) > best {
                best = payoff(z);
                best_z = Some(z);
            }
        }
        for z in 0..spec.quality_count() {
            if mu.mu_zy.get(z, y) > tol {
                let slack = best - payoff(z);
                if slack > tol {
                    violations.push(RationalityViolation {
                        agent: AgentType::Consumer(y),
                        chosen: Some(z),
                        better: best_z,
                        slack,
                    });
                    track(slack);
                }
            }
        }
        if mu.consumer_opt_out(spec, y) > tol && best > tol {
            violations.push(RationalityViolation {
                agent: AgentType::Consumer(y),
                chosen: None,
                better: best_z,
                slack: best,
            });
            track(best);
        }
    }

    VerificationReport {
        people_counting_ok,
        market_clearing_ok,
        rationality_violations: violations,
        max_residual,
    }
}

/// The built-in example market: four producer types and three consumer
/// types of unit mass each, three qualities, endogenous participation,
/// no free disposal. Its exact equilibrium welfare is 31 and the
/// supporting prices span `[-7,-4] x [-5,-2] x [-4,-4]`.
pub fn example_market() -> MarketSpec {
    use alloc::string::ToString;
    MarketSpec {
        producer_types: ["x1", "x2", "x3", "x4"].iter().map(|s| s.to_string()).collect(),
        consumer_types: ["y1", "y2", "y3"].iter().map(|s| s.to_string()).collect(),
        qualities: ["z1", "z2", "z3"].iter().map(|s| s.to_string()).collect(),
        n: vec![1.0; 4],
        m: vec![1.0; 3],
        alpha: Table::new(4, 3, vec![2., 5., 3., 2., 1., 4., 1., 5., 8., 4., 2., 4.])
            .expect("static shape"),
        gamma: Table::new(3, 3, vec![0., 2., 1., 2., 4., 2., 4., 2., 6.]).expect("static shape"),
        free_disposal: false,
    }
}

/// Supporting price interval for a dual pair `(u, v)`:
/// `lower_z = max_y(gamma_zy - v_y)`, `upper_z = min_x(u_x - alpha_xz)`,
/// skipping `-inf` surpluses. A quality demanded (supplied) by nobody
/// gets `-inf` (`+inf`) on the corresponding side.
pub fn price_bounds(spec: &MarketSpec, uv: &IndirectUtilities) -> PriceBounds {
    let zs = spec.quality_count();
    let mut lower = vec![f64::NEG_INFINITY; zs];
    let mut upper = vec![f64::INFINITY; zs];
    for z in 0..zs {
        for y in 0..spec.consumer_count() {
            let g = spec.gamma.get(z, y);
            if g > f64::NEG_INFINITY {
                let cand = g - uv.v[y];
                if cand > lower[z] {
                    lower[z] = cand;
                }
            }
        }
        for x in 0..spec.producer_count() {
            let a = spec.alpha.get(x, z);
            if a > f64::NEG_INFINITY {
                let cand = uv.u[x] - a;
                if cand < upper[z] {
                    upper[z] = cand;
                }
            }
        }
    }
    PriceBounds { lower, upper }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn worked_example() -> MarketSpec {
        example_market()
    }

    fn single(alpha: f64, gamma: f64) -> MarketSpec {
        MarketSpec {
            producer_types: vec!["x".to_string()],
            consumer_types: vec!["y".to_string()],
            qualities: vec!["z".to_string()],
            n: vec![1.0],
            m: vec![1.0],
            alpha: Table::new(1, 1, vec![alpha]).unwrap(),
            gamma: Table::new(1, 1, vec![gamma]).unwrap(),
            free_disposal: false,
        }
    }

    #[test]
    fn worked_example_validates() {
        assert!(worked_example().validate().unwrap().is_empty());
    }

    #[test]
    fn negative_mass_rejected() {
        let mut spec = worked_example();
        spec.n[0] = -1.0;
        assert!(matches!(
            spec.validate(),
            Err(MarketError::NegativeMass { agent: AgentType::Producer(0), .. })
        ));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut spec = worked_example();
        spec.alpha = Table::new(3, 3, vec![0.0; 9]).unwrap();
        assert!(matches!(spec.validate(), Err(MarketError::DimensionMismatch { what: "alpha", .. })));
    }

    #[test]
    fn plus_inf_rejected() {
        let mut spec = worked_example();
        spec.gamma.set(0, 0, f64::INFINITY);
        assert!(matches!(spec.validate(), Err(MarketError::InvalidEntry { table: "gamma" })));
    }

    #[test]
    fn all_infeasible_row_is_a_warning() {
        let mut spec = worked_example();
        for z in 0..3 {
            spec.alpha.set(1, z, f64::NEG_INFINITY);
        }
        let warnings = spec.validate().unwrap();
        assert_eq!(warnings, vec![ValidationWarning::AllInfeasible(AgentType::Producer(1))]);
    }

    #[test]
    fn indirect_surplus_worked_example_row() {
        let spec = worked_example();
        let phi = indirect_surplus_matrix(&spec);
        assert_eq!(phi.phi.row(0), &[7.0, 9.0, 9.0]);
        // x1 with y2: z2 gives 5 + 4 = 9, uniquely.
        assert_eq!(phi.argmax_for(0, 1), &[1]);
    }

    #[test]
    fn indirect_surplus_zero_tables() {
        let mut spec = worked_example();
        spec.alpha = Table::zeros(4, 3);
        spec.gamma = Table::zeros(3, 3);
        let phi = indirect_surplus_matrix(&spec);
        assert!(phi.phi.data().iter().all(|&v| v == 0.0));
        assert!(phi.argmax.iter().all(|a| a == &[0, 1, 2]));
    }

    #[test]
    fn indirect_surplus_infeasible_producer() {
        let mut spec = worked_example();
        for z in 0..3 {
            spec.alpha.set(0, z, f64::NEG_INFINITY);
        }
        let phi = indirect_surplus_matrix(&spec);
        assert!(phi.phi.row(0).iter().all(|&v| v == f64::NEG_INFINITY));
        assert!(phi.argmax_for(0, 0).is_empty());
    }

    #[test]
    fn indirect_surplus_is_monotone_in_alpha() {
        let spec = worked_example();
        let base = indirect_surplus_matrix(&spec);
        let mut bumped = spec.clone();
        bumped.alpha.set(2, 1, bumped.alpha.get(2, 1) + 3.0);
        let after = indirect_surplus_matrix(&bumped);
        for x in 0..4 {
            for y in 0..3 {
                assert!(after.phi.get(x, y) >= base.phi.get(x, y));
            }
        }
    }

    /// The optimal allocation of the worked example: x1 -> z2 matched
    /// with y2, x2 and x3 -> z3 matched with y1 and y3.
    fn worked_example_allocation() -> Allocation {
        let mut mu = Allocation::zeros(&worked_example());
        mu.mu_xz.set(0, 1, 1.0);
        mu.mu_xz.set(1, 2, 1.0);
        mu.mu_xz.set(2, 2, 1.0);
        mu.mu_zy.set(1, 1, 1.0);
        mu.mu_zy.set(2, 0, 1.0);
        mu.mu_zy.set(2, 2, 1.0);
        mu
    }

    #[test]
    fn welfare_of_worked_example_optimum() {
        let spec = worked_example();
        assert_eq!(welfare(&spec, &worked_example_allocation()).unwrap(), 31.0);
    }

    #[test]
    fn welfare_of_empty_allocation() {
        let spec = worked_example();
        assert_eq!(welfare(&spec, &Allocation::zeros(&spec)).unwrap(), 0.0);
    }

    #[test]
    fn welfare_rejects_mass_on_forbidden_cell() {
        let mut spec = single(f64::NEG_INFINITY, 0.0);
        spec.free_disposal = false;
        let mut mu = Allocation::zeros(&spec);
        mu.mu_xz.set(0, 0, 1.0);
        mu.mu_zy.set(0, 0, 1.0);
        assert!(matches!(
            welfare(&spec, &mu),
            Err(MarketError::InfeasibleMass { agent: AgentType::Producer(0), quality: 0 })
        ));
    }

    #[test]
    fn welfare_rejects_unbalanced_allocation() {
        let spec = worked_example();
        let mut mu = Allocation::zeros(&spec);
        mu.mu_xz.set(0, 0, 1.0); // supplied but never demanded
        assert!(matches!(welfare(&spec, &mu), Err(MarketError::ConstraintViolation { .. })));
    }

    #[test]
    fn verify_accepts_supported_prices() {
        let spec = worked_example();
        let report = verify_equilibrium(
            &spec,
            &PriceVector(vec![-4.0, -2.0, -4.0]),
            &worked_example_allocation(),
            1e-9,
        );
        assert!(report.all_clear(), "{report:?}");
        assert_eq!(report.max_residual, 0.0);
    }

    #[test]
    fn verify_rejects_zero_prices() {
        let spec = worked_example();
        let report = verify_equilibrium(
            &spec,
            &PriceVector(vec![0.0, 0.0, 0.0]),
            &worked_example_allocation(),
            1e-9,
        );
        // At p = 0 every idle producer would rather participate.
        assert!(!report.all_clear());
        assert!(!report.rationality_violations.is_empty());
    }

    #[test]
    fn verify_accepts_opt_out_when_prices_balanced() {
        // Only p = 0 makes both participation candidates nonpositive.
        let spec = single(0.0, 0.0);
        let report =
            verify_equilibrium(&spec, &PriceVector(vec![0.0]), &Allocation::zeros(&spec), 1e-9);
        assert!(report.all_clear());
    }

    #[test]
    fn verify_low_price_faults_only_the_consumer_side() {
        // At p = -10 producing pays -10 < 0, so producer opt-out is
        // rational; buying pays +10, so consumer opt-out is not.
        let spec = single(0.0, 0.0);
        let report =
            verify_equilibrium(&spec, &PriceVector(vec![-10.0]), &Allocation::zeros(&spec), 1e-9);
        assert!(!report.all_clear());
        assert!(report
            .rationality_violations
            .iter()
            .all(|v| matches!(v.agent, AgentType::Consumer(_))));
    }

    #[test]
    fn verify_flags_consumer_opt_out_violation() {
        let spec = single(0.0, 5.0);
        // Price 1: consumer payoff 4 > 0, yet everyone opts out.
        let report =
            verify_equilibrium(&spec, &PriceVector(vec![1.0]), &Allocation::zeros(&spec), 1e-9);
        assert!(!report.all_clear());
        assert!(report
            .rationality_violations
            .iter()
            .any(|v| v.agent == AgentType::Consumer(0) && v.chosen.is_none()));
    }

    #[test]
    fn price_bounds_of_worked_example() {
        let spec = worked_example();
        // Loosest supporting interval: lower ends from v_max, upper from u_max.
        let uv = IndirectUtilities { u: vec![3.0, 0.0, 4.0, 0.0], v: vec![8.0, 9.0, 10.0] };
        let b = price_bounds(&spec, &uv);
        assert_eq!(b.lower, vec![-7.0, -5.0, -4.0]);
        assert_eq!(b.upper, vec![-4.0, -2.0, -4.0]);
    }

    #[test]
    fn price_bounds_degenerate_single() {
        let spec = single(0.0, 0.0);
        let uv = IndirectUtilities { u: vec![0.0], v: vec![0.0] };
        let b = price_bounds(&spec, &uv);
        assert_eq!(b.lower, vec![0.0]);
        assert_eq!(b.upper, vec![0.0]);
    }

    #[test]
    fn price_bounds_unconsumed_quality() {
        let mut spec = single(0.0, f64::NEG_INFINITY);
        spec.free_disposal = true;
        let uv = IndirectUtilities { u: vec![0.0], v: vec![0.0] };
        let b = price_bounds(&spec, &uv);
        assert_eq!(b.lower, vec![f64::NEG_INFINITY]);
        assert_eq!(b.upper, vec![0.0]);
    }
}
