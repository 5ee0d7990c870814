//! Maximum-surplus network flow over the producer → quality → consumer
//! graph: exact equilibrium allocations, prices and indirect utilities.
//!
//! The market is encoded as a tripartite network whose arcs carry the
//! finite surplus entries. Producers are source nodes with mass `-n_x`,
//! qualities are intermediate nodes, consumers are targets with mass
//! `m_y`; participation is endogenous, so the balance-of-mass equations
//! are inequalities on sources and targets. Solving the flow problem and
//! its dual yields the equilibrium: `u_x = -U_x`, `p_z = -U_z`,
//! `v_y = U_y`.
//!
//! When all inputs are integers every quantity below is computed by
//! exact integer arithmetic in doubles, so equality assertions hold with
//! zero tolerance.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::market::{Allocation, IndirectUtilities, MarketSpec, PriceVector, DEFAULT_TOL};
use crate::math;

/// Role of a node in the tripartite network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRole {
    /// Producer node, mass `-n_x`.
    Source,
    /// Quality node, mass 0.
    Intermediate,
    /// Consumer node, mass `m_y`.
    Target,
}

/// A directed arc with its finite surplus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arc {
    pub from: usize,
    pub to: usize,
    pub surplus: f64,
}

/// The producer → quality → consumer network of a market.
///
/// Nodes are indexed `0..|X|` (producers), `|X|..|X|+|Z|` (qualities),
/// then consumers. Arcs exist exactly for the finite surplus cells and
/// are ordered producer-major, then quality-major.
#[derive(Debug, Clone)]
pub struct FlowNetwork {
    x_count: usize,
    z_count: usize,
    y_count: usize,
    pub arcs: Vec<Arc>,
    /// Mass leaving the network at each node: `-n_x`, `0`, `m_y`.
    pub node_mass: Vec<f64>,
    pub free_disposal: bool,
}

impl FlowNetwork {
    pub fn node_count(&self) -> usize {
        self.x_count + self.z_count + self.y_count
    }

    pub fn producer_count(&self) -> usize {
        self.x_count
    }

    pub fn quality_count(&self) -> usize {
        self.z_count
    }

    pub fn consumer_count(&self) -> usize {
        self.y_count
    }

    pub fn producer_node(&self, x: usize) -> usize {
        x
    }

    pub fn quality_node(&self, z: usize) -> usize {
        self.x_count + z
    }

    pub fn consumer_node(&self, y: usize) -> usize {
        self.x_count + self.z_count + y
    }

    pub fn role(&self, node: usize) -> NodeRole {
        if node < self.x_count {
            NodeRole::Source
        } else if node < self.x_count + self.z_count {
            NodeRole::Intermediate
        } else {
            NodeRole::Target
        }
    }
}

/// Nonnegative mass per arc, aligned with [`FlowNetwork::arcs`].
#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    pub on_arc: Vec<f64>,
}

impl Flow {
    /// Checks the balance-of-mass inequalities, which are exactly people
    /// counting and market clearing: with `r_w = (N - div mu)_w`,
    /// sources have `r = participation - n_x <= 0`, intermediates
    /// `r = demand - supply = 0` (`<= 0` under free disposal) and
    /// targets `r = m_y - participation >= 0`.
    pub fn check_balance(&self, net: &FlowNetwork, tol: f64) -> bool {
        if self.on_arc.iter().any(|&f| f < -tol) {
            return false;
        }
        let div = divergence(net, self);
        (0..net.node_count()).all(|w| {
            let r = net.node_mass[w] - div[w];
            match net.role(w) {
                NodeRole::Source => r <= tol,
                NodeRole::Intermediate => {
                    if net.free_disposal {
                        r <= tol
                    } else {
                        math::abs(r) <= tol
                    }
                }
                NodeRole::Target => r >= -tol,
            }
        })
    }
}

/// Node potential `U` with the sign convention `U_x = -u_x`,
/// `U_z = -p_z`, `U_y = v_y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    pub values: Vec<f64>,
}

impl Potential {
    pub fn producer_utilities(&self, net: &FlowNetwork) -> Vec<f64> {
        (0..net.x_count).map(|x| -self.values[net.producer_node(x)]).collect()
    }

    pub fn prices(&self, net: &FlowNetwork) -> Vec<f64> {
        (0..net.z_count).map(|z| -self.values[net.quality_node(z)]).collect()
    }

    pub fn consumer_utilities(&self, net: &FlowNetwork) -> Vec<f64> {
        (0..net.y_count).map(|y| self.values[net.consumer_node(y)]).collect()
    }

    /// Dual objective `sum_w U_w N_w`.
    pub fn dual_value(&self, net: &FlowNetwork) -> f64 {
        self.values.iter().zip(net.node_mass.iter()).map(|(u, n)| u * n).sum()
    }
}

/// Solver failures. `Unbounded` and `DualInconsistency` indicate bugs,
/// not bad inputs; the oracle errors guard its enumeration budget.
#[derive(Debug, Clone, PartialEq)]
pub enum FlowError {
    Unbounded,
    DualInconsistency { primal: f64, dual: f64 },
    TooLarge { states: u64 },
    NonIntegralMasses,
}

impl fmt::Display for FlowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FlowError::Unbounded => write!(f, "max-surplus flow is unbounded (internal error)"),
            FlowError::DualInconsistency { primal, dual } => {
                write!(f, "primal {primal} and dual {dual} disagree beyond tolerance (internal error)")
            }
            FlowError::TooLarge { states } => {
                write!(f, "assignment enumeration needs {states} states, over the 10^6 guard")
            }
            FlowError::NonIntegralMasses => {
                write!(f, "assignment enumeration requires integral masses")
            }
        }
    }
}

impl core::error::Error for FlowError {}

/// Builds the network of a validated spec: one arc per finite surplus
/// cell, node masses `(-n, 0, m)`.
pub fn build_network(spec: &MarketSpec) -> FlowNetwork {
    let (xs, zs, ys) = (spec.producer_count(), spec.quality_count(), spec.consumer_count());
    let mut arcs = Vec::new();
    for x in 0..xs {
        for z in 0..zs {
            let a = spec.alpha.get(x, z);
            if a > f64::NEG_INFINITY {
                arcs.push(Arc { from: x, to: xs + z, surplus: a });
            }
        }
    }
    for z in 0..zs {
        for y in 0..ys {
            let g = spec.gamma.get(z, y);
            if g > f64::NEG_INFINITY {
                arcs.push(Arc { from: xs + z, to: xs + zs + y, surplus: g });
            }
        }
    }
    let mut node_mass = Vec::with_capacity(xs + zs + ys);
    node_mass.extend(spec.n.iter().map(|&n| -n));
    node_mass.extend(core::iter::repeat(0.0).take(zs));
    node_mass.extend(spec.m.iter().copied());
    FlowNetwork { x_count: xs, z_count: zs, y_count: ys, arcs, node_mass, free_disposal: spec.free_disposal }
}

/// Arc-wise potential differences `(grad U)_{ww'} = U_{w'} - U_w`.
pub fn gradient(net: &FlowNetwork, potential: &Potential) -> Vec<f64> {
    net.arcs.iter().map(|a| potential.values[a.to] - potential.values[a.from]).collect()
}

/// Net outflow per node `(div mu)_w = sum_in mu - sum_out mu`
/// (the adjoint of [`gradient`]).
pub fn divergence(net: &FlowNetwork, flow: &Flow) -> Vec<f64> {
    let mut div = vec![0.0; net.node_count()];
    for (arc, &f) in net.arcs.iter().zip(flow.on_arc.iter()) {
        div[arc.to] += f;
        div[arc.from] -= f;
    }
    div
}

// ---------------------------------------------------------------------
// Successive shortest augmenting paths
// ---------------------------------------------------------------------

#[derive(Debug, Clone)]
struct Edge {
    to: usize,
    cap: f64,
    flow: f64,
    cost: f64,
    rev: usize,
    arc_id: Option<usize>,
}

struct Residual {
    adj: Vec<Vec<Edge>>,
}

impl Residual {
    fn new(nodes: usize) -> Self {
        Self { adj: (0..nodes).map(|_| Vec::new()).collect() }
    }

    fn add(&mut self, from: usize, to: usize, cap: f64, cost: f64, arc_id: Option<usize>) {
        let rev_from = self.adj[to].len();
        let rev_to = self.adj[from].len();
        self.adj[from].push(Edge { to, cap, flow: 0.0, cost, rev: rev_from, arc_id });
        self.adj[to].push(Edge { to: from, cap: 0.0, flow: 0.0, cost: -cost, rev: rev_to, arc_id: None });
    }
}

/// Result of a max-surplus flow solve.
#[derive(Debug, Clone)]
pub struct FlowSolution {
    pub flow: Flow,
    pub potential: Potential,
    pub welfare: f64,
    /// Number of augmenting paths used.
    pub augmentations: usize,
}

/// Solves the maximum-surplus flow problem.
///
/// Augments along the maximum-surplus residual source → target path
/// (Dijkstra on negated surpluses with node potentials) while that path
/// has strictly positive surplus; participation is free, so the search
/// simply stops when no profitable path remains. The returned potential
/// is an optimal dual solution recovered from complementary slackness
/// (see [`dual_extremes`]); primal and dual values agree to 1e-9 and
/// exactly on integer inputs.
pub fn solve_max_surplus_flow(net: &FlowNetwork) -> Result<FlowSolution, FlowError> {
    let n_market = net.node_count();
    let s = n_market;
    let t = n_market + 1;
    let total_supply: f64 = (0..net.x_count).map(|x| -net.node_mass[x]).sum();
    let big = total_supply.max(1.0);

    let mut g = Residual::new(n_market + 2);
    for x in 0..net.x_count {
        let n_x = -net.node_mass[net.producer_node(x)];
        if n_x > 0.0 {
            g.add(s, net.producer_node(x), n_x, 0.0, None);
        }
    }
    for (id, arc) in net.arcs.iter().enumerate() {
        g.add(arc.from, arc.to, big, -arc.surplus, Some(id));
    }
    for y in 0..net.y_count {
        let m_y = net.node_mass[net.consumer_node(y)];
        if m_y > 0.0 {
            g.add(net.consumer_node(y), t, m_y, 0.0, None);
        }
    }
    if net.free_disposal {
        for z in 0..net.z_count {
            g.add(net.quality_node(z), t, big, 0.0, None);
        }
    }

    // Initial potentials by relaxation in topological order s, X, Z, Y, t.
    const UNREACHED: f64 = f64::INFINITY;
    let nodes = n_market + 2;
    let mut pi = vec![UNREACHED; nodes];
    pi[s] = 0.0;
    let order: Vec<usize> = core::iter::once(s).chain(0..n_market).collect();
    for &u in &order {
        if pi[u] == UNREACHED {
            continue;
        }
        for e in &g.adj[u] {
            if e.cap > e.flow && pi[u] + e.cost < pi[e.to] {
                pi[e.to] = pi[u] + e.cost;
            }
        }
    }

    let mut dist = vec![UNREACHED; nodes];
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; nodes];
    let mut augmentations = 0usize;
    let guard = 4 * (net.arcs.len() + nodes) + 64;

    loop {
        if augmentations > guard {
            return Err(FlowError::Unbounded);
        }
        // Dijkstra over reduced costs.
        dist.iter_mut().for_each(|d| *d = UNREACHED);
        parent.iter_mut().for_each(|p| *p = None);
        dist[s] = 0.0;
        let mut visited = vec![false; nodes];
        loop {
            let mut u = usize::MAX;
            let mut best = UNREACHED;
            for w in 0..nodes {
                if !visited[w] && dist[w] < best {
                    best = dist[w];
                    u = w;
                }
            }
            if u == usize::MAX {
                break;
            }
            visited[u] = true;
            for (ei, e) in g.adj[u].iter().enumerate() {
                if e.cap <= e.flow || pi[e.to] == UNREACHED {
                    continue;
                }
                let rc = e.cost + pi[u] - pi[e.to];
                let nd = dist[u] + rc;
                if nd < dist[e.to] {
                    dist[e.to] = nd;
                    parent[e.to] = Some((u, ei));
                }
            }
        }
        if dist[t] == UNREACHED {
            break;
        }
        // True path cost; stop when no path yields positive surplus.
        let path_cost = dist[t] + pi[t];
        if path_cost >= 0.0 {
            break;
        }
        // Bottleneck capacity.
        let mut delta = UNREACHED;
        let mut w = t;
        while let Some((u, ei)) = parent[w] {
            let e = &g.adj[u][ei];
            delta = delta.min(e.cap - e.flow);
            w = u;
        }
        let mut w = t;
        while let Some((u, ei)) = parent[w] {
            let (to, rev) = {
                let e = &mut g.adj[u][ei];
                e.flow += delta;
                if e.flow > e.cap {
                    e.flow = e.cap;
                }
                (e.to, e.rev)
            };
            g.adj[to][rev].flow -= delta;
            w = u;
        }
        for w in 0..nodes {
            if dist[w] != UNREACHED && pi[w] != UNREACHED {
                pi[w] += dist[w];
            }
        }
        augmentations += 1;
    }

    let mut on_arc = vec![0.0; net.arcs.len()];
    for edges in &g.adj {
        for e in edges {
            if let Some(id) = e.arc_id {
                on_arc[id] = e.flow.max(0.0);
            }
        }
    }
    let flow = Flow { on_arc };
    let welfare: f64 =
        net.arcs.iter().zip(flow.on_arc.iter()).map(|(a, &f)| a.surplus * f).sum();

    let extremes = dual_extremes(net, &flow);
    let potential = extremes.upper_corner_potential(net);
    let dual = potential.dual_value(net);
    if math::abs(dual - welfare) > DEFAULT_TOL * (1.0 + math::abs(welfare)) {
        return Err(FlowError::DualInconsistency { primal: welfare, dual });
    }

    Ok(FlowSolution { flow, potential, welfare, augmentations })
}

// ---------------------------------------------------------------------
// Optimal dual set and its extreme corners
// ---------------------------------------------------------------------

/// Componentwise extreme optimal dual solutions.
///
/// The optimal duals form a lattice; `u_min` is attained jointly with
/// `v_max` (consumer-best corner) and `u_max` with `v_min`. The example
/// market yields `u_min = (0,0,4,0)`, `v_max = (8,9,10)`,
/// `u_max = (3,0,4,0)`, `v_min = (8,6,10)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualExtremes {
    pub u_min: Vec<f64>,
    pub u_max: Vec<f64>,
    pub v_min: Vec<f64>,
    pub v_max: Vec<f64>,
    /// Price at the consumer-best corner (pairs with `u_min`, `v_max`).
    pub p_at_v_max: Vec<f64>,
    /// Price at the producer-best corner (pairs with `u_max`, `v_min`).
    pub p_at_u_max: Vec<f64>,
}

/// Difference-constraint edge `U_b <= U_a + w`.
struct Constraint {
    a: usize,
    b: usize,
    w: f64,
}

/// Computes both extreme corners of the optimal dual polytope.
///
/// Dual optimality is dual feasibility plus complementary slackness with
/// any one optimal flow: arcs carrying mass are tight, idle agents have
/// zero indirect utility. All these are difference constraints on the
/// potential (anchored by the zero outside option), so the componentwise
/// maximum of `U` is the shortest-path distance from the anchor in the
/// constraint graph and the minimum is minus the distance back. This is
/// exact integer arithmetic on integer inputs.
pub fn dual_extremes(net: &FlowNetwork, flow: &Flow) -> DualExtremes {
    let slack_tol = DEFAULT_TOL;
    let nodes = net.node_count() + 1; // + anchor r
    let r = net.node_count();
    let div = divergence(net, flow);

    let mut cons: Vec<Constraint> = Vec::new();
    for (arc, &f) in net.arcs.iter().zip(flow.on_arc.iter()) {
        // U_to - U_from >= surplus, i.e. U_from <= U_to - surplus.
        cons.push(Constraint { a: arc.to, b: arc.from, w: -arc.surplus });
        if f > slack_tol {
            cons.push(Constraint { a: arc.from, b: arc.to, w: arc.surplus });
        }
    }
    for x in 0..net.x_count {
        let node = net.producer_node(x);
        cons.push(Constraint { a: r, b: node, w: 0.0 }); // U_x <= 0
        let participating = -div[node];
        let n_x = -net.node_mass[node];
        if participating < n_x - slack_tol {
            cons.push(Constraint { a: node, b: r, w: 0.0 }); // idle => u_x = 0
        }
    }
    for y in 0..net.y_count {
        let node = net.consumer_node(y);
        cons.push(Constraint { a: node, b: r, w: 0.0 }); // U_y >= 0
        let participating = div[node];
        let m_y = net.node_mass[node];
        if participating < m_y - slack_tol {
            cons.push(Constraint { a: r, b: node, w: 0.0 }); // idle => v_y = 0
        }
    }
    if net.free_disposal {
        for z in 0..net.z_count {
            let node = net.quality_node(z);
            cons.push(Constraint { a: r, b: node, w: 0.0 }); // p_z >= 0
            let disposed = div[node]; // supply - demand
            if disposed > slack_tol {
                cons.push(Constraint { a: node, b: r, w: 0.0 }); // disposal => p_z = 0
            }
        }
    }

    // Shortest distances from r give the componentwise-max potential,
    // shortest distances to r (reversed edges) give minus the min.
    let upper = bellman_ford(nodes, r, cons.iter().map(|c| (c.a, c.b, c.w)));
    let lower = bellman_ford(nodes, r, cons.iter().map(|c| (c.b, c.a, c.w)));

    let u_min = (0..net.x_count).map(|x| -upper[net.producer_node(x)]).collect();
    let v_max = (0..net.y_count).map(|y| upper[net.consumer_node(y)]).collect();
    let u_max = (0..net.x_count).map(|x| lower[net.producer_node(x)]).collect();
    let v_min = (0..net.y_count).map(|y| -lower[net.consumer_node(y)]).collect();
    let p_at_v_max = (0..net.z_count).map(|z| -upper[net.quality_node(z)]).collect();
    let p_at_u_max = (0..net.z_count).map(|z| lower[net.quality_node(z)]).collect();

    let mut ext = DualExtremes { u_min, u_max, v_min, v_max, p_at_v_max, p_at_u_max };
    clamp_corner(net, &mut ext.p_at_v_max, &mut ext.u_min, &mut ext.v_max, f64::NEG_INFINITY);
    clamp_corner(net, &mut ext.p_at_u_max, &mut ext.u_max, &mut ext.v_min, f64::INFINITY);
    ext
}

/// Bellman-Ford shortest distances from `source` over edges
/// `(from, to, weight)`; unreachable nodes stay at `+inf`.
fn bellman_ford(
    nodes: usize,
    source: usize,
    edges: impl Iterator<Item = (usize, usize, f64)> + Clone,
) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; nodes];
    dist[source] = 0.0;
    for _ in 0..nodes {
        let mut changed = false;
        for (a, b, w) in edges.clone() {
            if dist[a] < f64::INFINITY && dist[a] + w < dist[b] {
                dist[b] = dist[a] + w;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    dist
}

/// Replaces unbounded coordinates of a dual corner by their envelope
/// values at the corner's own prices. Only zero-mass agent types and
/// qualities with no feasible counterpart can be unbounded.
fn clamp_corner(net: &FlowNetwork, p: &mut [f64], u: &mut [f64], v: &mut [f64], un_p: f64) {
    for z in 0..net.z_count {
        if p[z] == un_p || p[z].is_nan() {
            // Any price below every u_x - alpha_xz supports this quality;
            // take the highest one (0 if the quality has no arcs at all).
            let mut best = f64::INFINITY;
            for arc in &net.arcs {
                if arc.to == net.quality_node(z) {
                    let x = arc.from;
                    let ux = if u[x].is_finite() { u[x] } else { 0.0 };
                    best = best.min(ux - arc.surplus);
                }
            }
            p[z] = if best.is_finite() { best } else { 0.0 };
        }
    }
    for x in 0..net.x_count {
        if !u[x].is_finite() {
            u[x] = envelope_u(net, p, x);
        }
    }
    for y in 0..net.y_count {
        if !v[y].is_finite() {
            v[y] = envelope_v(net, p, y);
        }
    }
}

fn envelope_u(net: &FlowNetwork, p: &[f64], x: usize) -> f64 {
    let mut best = 0.0_f64;
    for arc in &net.arcs {
        if arc.from == net.producer_node(x) {
            let z = arc.to - net.x_count;
            best = best.max(arc.surplus + p[z]);
        }
    }
    best
}

fn envelope_v(net: &FlowNetwork, p: &[f64], y: usize) -> f64 {
    let mut best = 0.0_f64;
    for arc in &net.arcs {
        if arc.to == net.consumer_node(y) {
            let z = arc.from - net.x_count;
            best = best.max(arc.surplus - p[z]);
        }
    }
    best
}

impl DualExtremes {
    /// The consumer-best corner `(u_min, p, v_max)` as a potential.
    fn upper_corner_potential(&self, net: &FlowNetwork) -> Potential {
        let mut values = Vec::with_capacity(net.node_count());
        values.extend(self.u_min.iter().map(|&u| -u));
        values.extend(self.p_at_v_max.iter().map(|&p| -p));
        values.extend(self.v_max.iter().copied());
        Potential { values }
    }
}

/// Equilibrium bundle extracted from a flow solution.
#[derive(Debug, Clone)]
pub struct EquilibriumOutcome {
    pub prices: PriceVector,
    pub allocation: Allocation,
    pub utilities: IndirectUtilities,
    pub welfare: f64,
    /// Every allocation entry is an integer.
    pub integral: bool,
    pub augmentations: usize,
}

/// Maps a solved flow back to market coordinates. The returned
/// utilities satisfy the envelope identities
/// `u_x = max_z(alpha_xz + p_z, 0)` and `v_y = max_z(gamma_zy - p_z, 0)`
/// exactly, and `verify_equilibrium` passes at 1e-9.
pub fn extract_equilibrium(
    net: &FlowNetwork,
    spec: &MarketSpec,
    sol: &FlowSolution,
) -> Result<EquilibriumOutcome, FlowError> {
    let p = sol.potential.prices(net);
    let mut u = sol.potential.producer_utilities(net);
    let mut v = sol.potential.consumer_utilities(net);
    // Zero-mass types carry an arbitrary feasible dual value; pin them
    // to the envelope so the identities hold for every coordinate.
    for x in 0..net.x_count {
        u[x] = envelope_u(net, &p, x);
    }
    for y in 0..net.y_count {
        v[y] = envelope_v(net, &p, y);
    }

    let mut allocation = Allocation::zeros(spec);
    let xs = net.x_count;
    for (arc, &f) in net.arcs.iter().zip(sol.flow.on_arc.iter()) {
        if arc.from < xs {
            allocation.mu_xz.set(arc.from, arc.to - xs, f);
        } else {
            allocation.mu_zy.set(arc.from - xs, arc.to - xs - net.z_count, f);
        }
    }

    let dual: f64 = u.iter().zip(spec.n.iter()).map(|(a, b)| a * b).sum::<f64>()
        + v.iter().zip(spec.m.iter()).map(|(a, b)| a * b).sum::<f64>();
    if math::abs(dual - sol.welfare) > DEFAULT_TOL * (1.0 + math::abs(sol.welfare)) {
        return Err(FlowError::DualInconsistency { primal: sol.welfare, dual });
    }

    let integral = allocation.is_integral();
    Ok(EquilibriumOutcome {
        prices: PriceVector(p),
        allocation,
        utilities: IndirectUtilities { u, v },
        welfare: sol.welfare,
        integral,
        augmentations: sol.augmentations,
    })
}

/// Convenience wrapper: build, solve and extract in one call.
pub fn solve_market(spec: &MarketSpec) -> Result<(EquilibriumOutcome, DualExtremes), FlowError> {
    let net = build_network(spec);
    let sol = solve_max_surplus_flow(&net)?;
    let extremes = dual_extremes(&net, &sol.flow);
    let outcome = extract_equilibrium(&net, spec, &sol)?;
    Ok((outcome, extremes))
}

// ---------------------------------------------------------------------
// Independent assignment oracle
// ---------------------------------------------------------------------

/// Brute-force welfare oracle: maximizes the sum of indirect surpluses
/// `Phi_xy` over all partial matchings of individual producers to
/// individual consumers. Requires integral masses and a state space of
/// at most 10^6; completely independent of the flow machinery.
pub fn assignment_oracle(spec: &MarketSpec) -> Result<f64, FlowError> {
    if !spec.has_integral_masses() {
        return Err(FlowError::NonIntegralMasses);
    }
    let phi = crate::market::indirect_surplus_matrix(spec).phi;
    let caps: Vec<u64> = spec.n.iter().map(|&v| v as u64).collect();
    let consumers: Vec<usize> = spec
        .m
        .iter()
        .enumerate()
        .flat_map(|(y, &m_y)| core::iter::repeat(y).take(m_y as u64 as usize))
        .collect();

    let mut radix = 1u64;
    for &c in &caps {
        radix = radix.saturating_mul(c + 1);
    }
    let states = radix.saturating_mul(consumers.len() as u64 + 1);
    if states > 1_000_000 {
        return Err(FlowError::TooLarge { states });
    }

    // Value function over (next consumer, remaining producer capacities),
    // capacities packed in mixed radix.
    let radix = radix as usize;
    let mut next = vec![0.0f64; radix];
    let mut cur = vec![0.0f64; radix];
    let strides: Vec<usize> = {
        let mut s = Vec::with_capacity(caps.len());
        let mut acc = 1usize;
        for &c in &caps {
            s.push(acc);
            acc *= (c + 1) as usize;
        }
        s
    };
    for i in (0..consumers.len()).rev() {
        let y = consumers[i];
        for code in 0..radix {
            // Opt out, or match with any producer type with capacity left.
            let mut best = next[code];
            for (x, (&c, &stride)) in caps.iter().zip(strides.iter()).enumerate() {
                let remaining = (code / stride) % (c as usize + 1);
                if remaining > 0 && phi.get(x, y) > f64::NEG_INFINITY {
                    let v = phi.get(x, y) + next[code - stride];
                    if v > best {
                        best = v;
                    }
                }
            }
            cur[code] = best;
        }
        core::mem::swap(&mut next, &mut cur);
    }
    let full = radix - 1;
    Ok(next[full])
}
