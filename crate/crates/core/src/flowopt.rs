//! Integral min-cost flow on time-expanded networks.
//!
//! The planning model minimizes total shortage: demand consumed at
//! (port, event-day) buckets, shortage covered from a slack node at cost
//! `big_m`, and every port<->vessel transfer charged a unit movement cost
//! that tie-breaks equal-shortage optima toward less repositioning
//! (`big_m` must dominate the total possible movement cost; the builder
//! checks this).
//!
//! Port events are split into an in-node (receives carried stock and
//! supplies, pays the demand bucket) and an out-node (vessel transfers,
//! carry-over), so empties discharged at an event can never serve demand
//! that was processed before the event.
//!
//! The solver is a successive-shortest-path method with node potentials:
//! a label-correcting pass initializes potentials (and rejects negative
//! cycles), then nonnegative-reduced-cost Dijkstra augments until all
//! supply is routed. The node-arc incidence structure is totally
//! unimodular, so these integral optima are also LP optima.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::World;
use crate::ordergen::SndForecast;
use crate::scenario::VesselId;

const INF: i64 = i64::MAX / 4;

/// Directed arc with integral capacity and cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowArc {
    pub tail: u32,
    pub head: u32,
    pub cap: i64,
    pub cost: i64,
}

/// A b-flow instance: conservation at node `v` reads
/// `outflow(v) - inflow(v) = imbalance[v]` (positive = supply).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowNetwork {
    pub num_nodes: usize,
    pub arcs: Vec<FlowArc>,
    pub imbalance: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSolution {
    /// Flow per arc, parallel to `FlowNetwork::arcs`.
    pub flows: Vec<i64>,
    /// Total cost `sum(flow * cost)`.
    pub cost: i64,
    /// Certifying potentials: every residual arc has nonnegative reduced
    /// cost under them.
    pub potentials: Vec<i64>,
}

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("malformed network: {0}")]
    Malformed(String),
    #[error("imbalances do not sum to zero")]
    Unbalanced,
    #[error("negative-cost cycle in input")]
    NegativeCycle,
    #[error("no feasible flow routes all supply")]
    Infeasible,
    #[error("big_m {big_m} does not dominate the movement cost bound {bound}")]
    BigMTooSmall { big_m: i64, bound: i64 },
    #[error("forecast/timetable mismatch: {0}")]
    WindowMismatch(String),
}

struct Residual {
    to: Vec<u32>,
    res: Vec<i64>,
    cost: Vec<i64>,
    adj: Vec<Vec<u32>>,
}

impl Residual {
    fn new(nodes: usize) -> Self {
        Residual { to: Vec::new(), res: Vec::new(), cost: Vec::new(), adj: vec![Vec::new(); nodes] }
    }

    fn push(&mut self, u: u32, v: u32, cap: i64, cost: i64) {
        let id = self.to.len() as u32;
        self.to.push(v);
        self.res.push(cap);
        self.cost.push(cost);
        self.adj[u as usize].push(id);
        self.to.push(u);
        self.res.push(0);
        self.cost.push(-cost);
        self.adj[v as usize].push(id + 1);
    }
}

/// Label-correcting pass over the residual graph starting from uniform zero
/// labels (virtual root). Produces potentials valid on every residual arc,
/// or detects a negative cycle.
fn spfa_potentials(r: &Residual, nodes: usize) -> Result<Vec<i64>, FlowError> {
    let mut pi = vec![0i64; nodes];
    let mut queued = vec![true; nodes];
    let mut relaxations = vec![0u32; nodes];
    let mut queue: std::collections::VecDeque<u32> = (0..nodes as u32).collect();
    while let Some(u) = queue.pop_front() {
        queued[u as usize] = false;
        for &e in &r.adj[u as usize] {
            if r.res[e as usize] <= 0 {
                continue;
            }
            let v = r.to[e as usize];
            let cand = pi[u as usize] + r.cost[e as usize];
            if cand < pi[v as usize] {
                pi[v as usize] = cand;
                relaxations[v as usize] += 1;
                if relaxations[v as usize] > nodes as u32 {
                    return Err(FlowError::NegativeCycle);
                }
                if !queued[v as usize] {
                    queued[v as usize] = true;
                    queue.push_back(v);
                }
            }
        }
    }
    Ok(pi)
}

/// Solves the instance exactly; all flows are integral.
pub fn solve_min_cost_flow(net: &FlowNetwork) -> Result<FlowSolution, FlowError> {
    let n = net.num_nodes;
    if net.imbalance.len() != n {
        return Err(FlowError::Malformed("imbalance length != node count".into()));
    }
    for (i, a) in net.arcs.iter().enumerate() {
        if a.tail as usize >= n || a.head as usize >= n {
            return Err(FlowError::Malformed(format!("arc {i} references a missing node")));
        }
        if a.cap < 0 {
            return Err(FlowError::Malformed(format!("arc {i} has negative capacity")));
        }
    }
    if net.imbalance.iter().sum::<i64>() != 0 {
        return Err(FlowError::Unbalanced);
    }

    let total = n + 2;
    let (source, sink) = (n as u32, n as u32 + 1);
    let mut r = Residual::new(total);
    for a in &net.arcs {
        r.push(a.tail, a.head, a.cap, a.cost);
    }
    let mut total_supply = 0i64;
    for (i, &b) in net.imbalance.iter().enumerate() {
        if b > 0 {
            r.push(source, i as u32, b, 0);
            total_supply += b;
        } else if b < 0 {
            r.push(i as u32, sink, -b, 0);
        }
    }

    let mut pi = spfa_potentials(&r, total)?;

    let mut dist = vec![INF; total];
    let mut parent: Vec<u32> = vec![u32::MAX; total];
    let mut pushed = 0i64;
    loop {
        dist.fill(INF);
        parent.fill(u32::MAX);
        dist[source as usize] = 0;
        let mut heap: BinaryHeap<Reverse<(i64, u32)>> = BinaryHeap::new();
        heap.push(Reverse((0, source)));
        while let Some(Reverse((d, u))) = heap.pop() {
            if d > dist[u as usize] {
                continue;
            }
            for &e in &r.adj[u as usize] {
                if r.res[e as usize] <= 0 {
                    continue;
                }
                let v = r.to[e as usize];
                let rc = r.cost[e as usize] + pi[u as usize] - pi[v as usize];
                debug_assert!(rc >= 0, "negative reduced cost {rc}");
                let cand = d + rc;
                if cand < dist[v as usize] {
                    dist[v as usize] = cand;
                    parent[v as usize] = e;
                    heap.push(Reverse((cand, v)));
                }
            }
        }
        if dist[sink as usize] >= INF {
            break;
        }
        let mut delta = INF;
        let mut v = sink;
        while v != source {
            let e = parent[v as usize];
            delta = delta.min(r.res[e as usize]);
            v = r.to[(e ^ 1) as usize];
        }
        let mut v = sink;
        while v != source {
            let e = parent[v as usize];
            r.res[e as usize] -= delta;
            r.res[(e ^ 1) as usize] += delta;
            v = r.to[(e ^ 1) as usize];
        }
        pushed += delta;
        for v in 0..total {
            if dist[v] < INF {
                pi[v] += dist[v];
            }
        }
    }
    if pushed < total_supply {
        return Err(FlowError::Infeasible);
    }

    let flows: Vec<i64> = (0..net.arcs.len()).map(|e| r.res[2 * e + 1]).collect();
    let cost = flows
        .iter()
        .zip(&net.arcs)
        .map(|(&f, a)| f * a.cost)
        .sum();
    let potentials = spfa_potentials(&r, total)?[..n].to_vec();
    Ok(FlowSolution { flows, cost, potentials })
}

/// Complementary-slackness certificate with the solution's potentials:
/// every arc with residual capacity has nonnegative reduced cost and every
/// arc carrying flow has nonpositive reduced cost.
pub fn verify_optimality(net: &FlowNetwork, sol: &FlowSolution) -> Result<(), String> {
    for (i, (a, &f)) in net.arcs.iter().zip(&sol.flows).enumerate() {
        if f < 0 || f > a.cap {
            return Err(format!("arc {i}: flow {f} outside [0, {}]", a.cap));
        }
        let rc = a.cost + sol.potentials[a.tail as usize] - sol.potentials[a.head as usize];
        if f < a.cap && rc < 0 {
            return Err(format!("arc {i}: residual with negative reduced cost {rc}"));
        }
        if f > 0 && rc > 0 {
            return Err(format!("arc {i}: flow with positive reduced cost {rc}"));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Time-expanded construction
// ---------------------------------------------------------------------------

/// Default shortage cost; the builder verifies dominance over the total
/// movement cost bound.
pub const DEFAULT_BIG_M: i64 = 1_000_000;

/// Inputs of the time-expanded construction over `[window.0, window.1)`.
pub struct BuildInputs<'a> {
    pub world: &'a World,
    pub window: (u32, u32),
    pub forecast: &'a SndForecast,
    pub initial_port_stock: &'a [i64],
    pub initial_vessel_empties: &'a [i64],
    pub big_m: i64,
    /// Per-port safety thresholds for the inventory-control variant:
    /// demand buckets are enlarged by `F_s` (charged once stock dips below
    /// the safety level) and the safety amount is refunded post-event.
    pub safety: Option<&'a [i64]>,
}

/// Built instance plus the indices needed to read a plan back out.
#[derive(Debug)]
pub struct TimeExpandedNet {
    pub net: FlowNetwork,
    labels: Vec<String>,
    /// (vessel, day, load arc, unload arc) per vessel event.
    transfers: Vec<(VesselId, u32, usize, usize)>,
    shortage_arcs: Vec<usize>,
}

/// Per-(vessel, event day) signed loading plan extracted from a solved
/// instance; `objective` is the total unserved demand.
#[derive(Debug, Clone, PartialEq)]
pub struct RepositionPlan {
    pub x: std::collections::BTreeMap<(VesselId, u32), i64>,
    pub objective: i64,
}

pub fn build_time_expanded(inputs: &BuildInputs) -> Result<TimeExpandedNet, FlowError> {
    let world = inputs.world;
    let (start, end) = inputs.window;
    if start >= end {
        return Err(FlowError::WindowMismatch(format!("empty window [{start}, {end})")));
    }
    if inputs.initial_port_stock.len() != world.num_ports()
        || inputs.initial_vessel_empties.len() != world.num_vessels()
    {
        return Err(FlowError::WindowMismatch("initial state sizes do not match the scenario".into()));
    }

    // Distinct event days per port / vessel inside the window.
    let mut port_days: Vec<Vec<u32>> = Vec::with_capacity(world.num_ports());
    for p in 0..world.num_ports() {
        let mut days: Vec<u32> = world.timetable.port_events[p]
            .iter()
            .map(|&(d, _)| d)
            .filter(|&d| d >= start && d < end)
            .collect();
        days.dedup();
        port_days.push(days);
    }
    let mut vessel_days: Vec<Vec<u32>> = Vec::with_capacity(world.num_vessels());
    for v in 0..world.num_vessels() {
        vessel_days.push(
            world.timetable.vessel_events[v]
                .iter()
                .map(|&(d, _)| d)
                .filter(|&d| d >= start && d < end)
                .collect(),
        );
    }

    // Node numbering: per port, (in, out) per event day then one end node;
    // per vessel, one node per event day; slack last.
    let mut labels: Vec<String> = Vec::new();
    let mut port_in: Vec<Vec<u32>> = Vec::with_capacity(world.num_ports());
    let mut port_out: Vec<Vec<u32>> = Vec::with_capacity(world.num_ports());
    let mut port_end: Vec<u32> = Vec::with_capacity(world.num_ports());
    for p in 0..world.num_ports() {
        let code = &world.config.ports[p].code;
        let mut ins = Vec::new();
        let mut outs = Vec::new();
        for &d in &port_days[p] {
            ins.push(labels.len() as u32);
            labels.push(format!("{code}@{d}/in"));
            outs.push(labels.len() as u32);
            labels.push(format!("{code}@{d}/out"));
        }
        port_in.push(ins);
        port_out.push(outs);
        port_end.push(labels.len() as u32);
        labels.push(format!("{code}@end"));
    }
    let mut vessel_nodes: Vec<Vec<u32>> = Vec::with_capacity(world.num_vessels());
    for v in 0..world.num_vessels() {
        let id = &world.config.vessels[v].id;
        let mut nodes = Vec::new();
        for &d in &vessel_days[v] {
            nodes.push(labels.len() as u32);
            labels.push(format!("{id}@{d}"));
        }
        vessel_nodes.push(nodes);
    }
    let slack = labels.len() as u32;
    labels.push("slack".into());
    let num_nodes = labels.len();

    // Injection bound stands in for infinite capacity.
    let injected: i64 = inputs.initial_port_stock.iter().sum::<i64>()
        + inputs.initial_vessel_empties.iter().sum::<i64>()
        + inputs
            .forecast
            .supply
            .iter()
            .filter(|&(&(_, d), _)| d >= start && d < end)
            .map(|(_, &s)| s)
            .sum::<i64>();
    let demand_total: i64 = inputs
        .forecast
        .demand
        .iter()
        .filter(|&(&(_, d), _)| d >= start && d < end)
        .map(|(_, &x)| x)
        .sum::<i64>();
    let safety_total: i64 = match inputs.safety {
        Some(f) => {
            let events: i64 = port_days.iter().enumerate().map(|(p, d)| d.len() as i64 * f[p].max(0)).sum();
            events
        }
        None => 0,
    };
    let inf_cap = injected + demand_total + safety_total + 1;

    // Dominance: one unit of shortage must never be traded for movement
    // savings; the movement bound is the sum of transfer-arc capacities.
    let movement_bound: i64 = (0..world.num_vessels())
        .map(|v| 2 * vessel_days[v].len() as i64 * world.config.vessels[v].capacity)
        .sum();
    if inputs.big_m <= movement_bound {
        return Err(FlowError::BigMTooSmall { big_m: inputs.big_m, bound: movement_bound });
    }

    let mut arcs: Vec<FlowArc> = Vec::new();
    let mut imbalance = vec![0i64; num_nodes];
    let mut shortage_arcs = Vec::new();

    // Demand/supply buckets: entries land at the first event day >= their
    // day, or at the port's end node.
    let bucket_of = |p: usize, day: u32| -> (bool, usize) {
        let days = &port_days[p];
        let pos = days.partition_point(|&d| d < day);
        if pos < days.len() {
            (false, pos)
        } else {
            (true, 0)
        }
    };

    for p in 0..world.num_ports() {
        // in -> out and carry chain.
        for k in 0..port_days[p].len() {
            arcs.push(FlowArc { tail: port_in[p][k], head: port_out[p][k], cap: inf_cap, cost: 0 });
            let next = if k + 1 < port_days[p].len() { port_in[p][k + 1] } else { port_end[p] };
            arcs.push(FlowArc { tail: port_out[p][k], head: next, cap: inf_cap, cost: 0 });
        }
        arcs.push(FlowArc { tail: port_end[p], head: slack, cap: inf_cap, cost: 0 });
        // Initial stock enters at the first node.
        let first = port_in[p].first().copied().unwrap_or(port_end[p]);
        imbalance[first as usize] += inputs.initial_port_stock[p];
    }

    // Bucketed demand (+ safety enlargement at event buckets).
    let mut bucket_demand: Vec<Vec<i64>> = (0..world.num_ports())
        .map(|p| vec![0i64; port_days[p].len()])
        .collect();
    let mut end_demand = vec![0i64; world.num_ports()];
    for (&(port, day), &d) in &inputs.forecast.demand {
        if day < start || day >= end {
            continue;
        }
        let p = port.idx();
        match bucket_of(p, day) {
            (false, k) => bucket_demand[p][k] += d,
            (true, _) => end_demand[p] += d,
        }
    }
    for p in 0..world.num_ports() {
        let f_s = inputs.safety.map(|f| f[p].max(0)).unwrap_or(0);
        for k in 0..port_days[p].len() {
            let d = bucket_demand[p][k] + f_s;
            if d > 0 {
                imbalance[port_in[p][k] as usize] -= d;
                imbalance[port_out[p][k] as usize] += f_s;
                shortage_arcs.push(arcs.len());
                arcs.push(FlowArc { tail: slack, head: port_in[p][k], cap: d, cost: inputs.big_m });
            }
        }
        if end_demand[p] > 0 {
            imbalance[port_end[p] as usize] -= end_demand[p];
            shortage_arcs.push(arcs.len());
            arcs.push(FlowArc { tail: slack, head: port_end[p], cap: end_demand[p], cost: inputs.big_m });
        }
    }
    for (&(port, day), &s) in &inputs.forecast.supply {
        if day < start || day >= end {
            continue;
        }
        let p = port.idx();
        match bucket_of(p, day) {
            (false, k) => imbalance[port_in[p][k] as usize] += s,
            (true, _) => imbalance[port_end[p] as usize] += s,
        }
    }

    // Vessels: carry arcs capped by the free space left after the traced
    // laden occupancy, disposal at the last node, transfers at each event.
    let mut transfers = Vec::new();
    for v in 0..world.num_vessels() {
        let days = &vessel_days[v];
        if days.is_empty() {
            continue;
        }
        let cap = world.config.vessels[v].capacity;
        imbalance[vessel_nodes[v][0] as usize] += inputs.initial_vessel_empties[v];
        for k in 0..days.len() {
            let vid = VesselId(v as u16);
            let laden = inputs
                .forecast
                .laden_after_event
                .get(&(vid, days[k]))
                .copied()
                .unwrap_or(0);
            if k + 1 < days.len() {
                arcs.push(FlowArc {
                    tail: vessel_nodes[v][k],
                    head: vessel_nodes[v][k + 1],
                    cap: (cap - laden).max(0),
                    cost: 0,
                });
            }
            // Transfer arcs at the port the vessel calls that day.
            let port = world.timetable.vessel_events[v]
                .iter()
                .find(|&&(d, _)| d == days[k])
                .map(|&(_, p)| p)
                .ok_or_else(|| FlowError::WindowMismatch("vessel event without port".into()))?;
            let pk = port_days[port.idx()]
                .binary_search(&days[k])
                .map_err(|_| FlowError::WindowMismatch("vessel event day missing at port".into()))?;
            let out = port_out[port.idx()][pk];
            let load_arc = arcs.len();
            arcs.push(FlowArc { tail: out, head: vessel_nodes[v][k], cap, cost: 1 });
            let unload_arc = arcs.len();
            arcs.push(FlowArc { tail: vessel_nodes[v][k], head: out, cap, cost: 1 });
            transfers.push((vid, days[k], load_arc, unload_arc));
        }
        arcs.push(FlowArc {
            tail: vessel_nodes[v][days.len() - 1],
            head: slack,
            cap: inf_cap,
            cost: 0,
        });
    }

    // Slack absorbs the residual imbalance.
    let others: i64 = imbalance.iter().sum();
    imbalance[slack as usize] = -others;

    Ok(TimeExpandedNet {
        net: FlowNetwork { num_nodes, arcs, imbalance },
        labels,
        transfers,
        shortage_arcs,
    })
}

impl TimeExpandedNet {
    /// Plain-text node/arc listing for external cross-checks.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("nodes {}\narcs {}\n", self.net.num_nodes, self.net.arcs.len()));
        for (i, label) in self.labels.iter().enumerate() {
            out.push_str(&format!("node {i} {label} {}\n", self.net.imbalance[i]));
        }
        for (i, a) in self.net.arcs.iter().enumerate() {
            out.push_str(&format!("arc {i} {} {} {} {}\n", a.tail, a.head, a.cap, a.cost));
        }
        out
    }

    /// Total unserved demand under `sol`.
    pub fn shortage_of(&self, sol: &FlowSolution) -> i64 {
        self.shortage_arcs.iter().map(|&i| sol.flows[i]).sum()
    }

    /// Reads the signed per-vessel-event loading plan out of a solution.
    pub fn extract_plan(&self, sol: &FlowSolution) -> RepositionPlan {
        let mut x = std::collections::BTreeMap::new();
        for &(v, day, load, unload) in &self.transfers {
            let value = sol.flows[load] - sol.flows[unload];
            x.insert((v, day), value);
        }
        RepositionPlan { x, objective: self.shortage_of(sol) }
    }
}

/// Builds the full-state forecast and solves one window; used by the LP
/// baselines.
pub fn solve_window(inputs: &BuildInputs) -> Result<(TimeExpandedNet, FlowSolution), FlowError> {
    let te = build_time_expanded(inputs)?;
    let sol = solve_min_cost_flow(&te.net)?;
    Ok((te, sol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ordergen::Order;
    use crate::scenario::PortId;
    use std::sync::Arc;

    fn arc(t: u32, h: u32, cap: i64, cost: i64) -> FlowArc {
        FlowArc { tail: t, head: h, cap, cost }
    }

    #[test]
    fn single_arc_routes_all_supply() {
        let net = FlowNetwork {
            num_nodes: 2,
            arcs: vec![arc(0, 1, 5, 1)],
            imbalance: vec![5, -5],
        };
        let sol = solve_min_cost_flow(&net).unwrap();
        assert_eq!(sol.flows, vec![5]);
        assert_eq!(sol.cost, 5);
        verify_optimality(&net, &sol).unwrap();
    }

    #[test]
    fn diamond_prefers_cheap_path_until_saturated() {
        // 0 -> {1 cheap cap 3, 2 pricey cap 10} -> 3, supply 7.
        let net = FlowNetwork {
            num_nodes: 4,
            arcs: vec![
                arc(0, 1, 3, 1),
                arc(1, 3, 3, 1),
                arc(0, 2, 10, 4),
                arc(2, 3, 10, 4),
            ],
            imbalance: vec![7, 0, 0, -7],
        };
        let sol = solve_min_cost_flow(&net).unwrap();
        assert_eq!(sol.flows, vec![3, 3, 4, 4]);
        assert_eq!(sol.cost, 3 * 2 + 4 * 8);
        verify_optimality(&net, &sol).unwrap();
    }

    #[test]
    fn negative_cost_cycle_is_rejected() {
        let net = FlowNetwork {
            num_nodes: 2,
            arcs: vec![arc(0, 1, 5, -3), arc(1, 0, 5, 1)],
            imbalance: vec![0, 0],
        };
        assert!(matches!(solve_min_cost_flow(&net), Err(FlowError::NegativeCycle)));
    }

    #[test]
    fn infeasible_supply_is_reported() {
        let net = FlowNetwork {
            num_nodes: 2,
            arcs: vec![arc(0, 1, 2, 1)],
            imbalance: vec![5, -5],
        };
        assert!(matches!(solve_min_cost_flow(&net), Err(FlowError::Infeasible)));
    }

    #[test]
    fn unbalanced_instances_are_rejected() {
        let net = FlowNetwork { num_nodes: 2, arcs: vec![], imbalance: vec![1, 0] };
        assert!(matches!(solve_min_cost_flow(&net), Err(FlowError::Unbalanced)));
    }

    fn tiny_world() -> Arc<World> {
        let text = "\
[general]
total_containers 10
episode_days 12
t_ret 1
vessel_capacity 6
[ports]
AAA Alpha 10 BBB:1.0
BBB Beta 0 AAA:0.2
[routes]
T1 6 1 AAA:0 BBB:3
";
        Arc::new(World::new(crate::scenario::parse_scenario(text).unwrap()).unwrap())
    }

    #[test]
    fn empty_forecast_has_zero_objective() {
        let world = tiny_world();
        let fc = SndForecast::default();
        let te = build_time_expanded(&BuildInputs {
            world: &world,
            window: (0, 12),
            forecast: &fc,
            initial_port_stock: &[0, 0],
            initial_vessel_empties: &[0],
            big_m: DEFAULT_BIG_M,
            safety: None,
        })
        .unwrap();
        let sol = solve_min_cost_flow(&te.net).unwrap();
        assert_eq!(te.shortage_of(&sol), 0);
        assert_eq!(sol.cost, 0);
        assert!(te.extract_plan(&sol).x.values().all(|&x| x == 0));
    }

    #[test]
    fn forced_shortage_costs_big_m_each() {
        let world = tiny_world();
        let mut fc = SndForecast::default();
        fc.demand.insert((PortId(0), 1), 5);
        let te = build_time_expanded(&BuildInputs {
            world: &world,
            window: (0, 12),
            forecast: &fc,
            initial_port_stock: &[3, 0],
            initial_vessel_empties: &[0],
            big_m: DEFAULT_BIG_M,
            safety: None,
        })
        .unwrap();
        let sol = solve_min_cost_flow(&te.net).unwrap();
        assert_eq!(te.shortage_of(&sol), 2);
        assert_eq!(sol.cost, 2 * DEFAULT_BIG_M);
        verify_optimality(&te.net, &sol).unwrap();
    }

    #[test]
    fn node_and_arc_counts_match_closed_form() {
        let world = Arc::new(World::builtin());
        let model = crate::ordergen::DemandModel::from_scenario(&world.config, 1);
        let orders: Vec<Order> = crate::ordergen::generate_orders(&model, 60, 3);
        let fc = crate::ordergen::snd_profile(&orders, &world.config, &world.timetable, 1).unwrap();
        let stocks = world.config.effective_initial_empties();
        let te = build_time_expanded(&BuildInputs {
            world: &world,
            window: (0, 60),
            forecast: &fc,
            initial_port_stock: &stocks,
            initial_vessel_empties: &vec![0; world.num_vessels()],
            big_m: DEFAULT_BIG_M,
            safety: None,
        })
        .unwrap();

        // Closed-form counts from the timetable.
        let mut port_event_days = 0usize;
        for p in 0..world.num_ports() {
            let mut days: Vec<u32> = world.timetable.port_events[p]
                .iter()
                .map(|&(d, _)| d)
                .filter(|&d| d < 60)
                .collect();
            days.dedup();
            port_event_days += days.len();
        }
        let vessel_events: usize = (0..world.num_vessels())
            .map(|v| world.timetable.vessel_events[v].iter().filter(|&&(d, _)| d < 60).count())
            .sum();
        let vessels_with_events = (0..world.num_vessels())
            .filter(|&v| world.timetable.vessel_events[v].iter().any(|&(d, _)| d < 60))
            .count();
        let expected_nodes = 2 * port_event_days + world.num_ports() + vessel_events + 1;
        assert_eq!(te.net.num_nodes, expected_nodes);

        let shortage_count = te.shortage_arcs.len();
        let expected_arcs = 2 * port_event_days            // in->out + carry
            + world.num_ports()                            // end disposal
            + (vessel_events - vessels_with_events)        // vessel carries
            + vessels_with_events                          // vessel disposal
            + 2 * vessel_events                            // transfers
            + shortage_count;
        assert_eq!(te.net.arcs.len(), expected_arcs);
    }

    #[test]
    fn doubling_big_m_leaves_shortage_flows_unchanged() {
        let world = tiny_world();
        let mut fc = SndForecast::default();
        fc.demand.insert((PortId(1), 4), 4);
        fc.demand.insert((PortId(0), 2), 3);
        fc.supply.insert((PortId(1), 5), 2);
        let build = |big_m: i64| {
            let te = build_time_expanded(&BuildInputs {
                world: &world,
                window: (0, 12),
                forecast: &fc,
                initial_port_stock: &[6, 0],
                initial_vessel_empties: &[0],
                big_m,
                safety: None,
            })
            .unwrap();
            let sol = solve_min_cost_flow(&te.net).unwrap();
            let shortages: Vec<i64> = te.shortage_arcs.iter().map(|&i| sol.flows[i]).collect();
            (te.shortage_of(&sol), shortages)
        };
        let (obj1, flows1) = build(DEFAULT_BIG_M);
        let (obj2, flows2) = build(2 * DEFAULT_BIG_M);
        assert_eq!(obj1, obj2);
        assert_eq!(flows1, flows2);
    }

    #[test]
    fn big_m_dominance_is_enforced() {
        let world = tiny_world();
        let fc = SndForecast::default();
        let err = build_time_expanded(&BuildInputs {
            world: &world,
            window: (0, 12),
            forecast: &fc,
            initial_port_stock: &[0, 0],
            initial_vessel_empties: &[0],
            big_m: 3,
            safety: None,
        })
        .unwrap_err();
        assert!(matches!(err, FlowError::BigMTooSmall { .. }));
    }

    #[test]
    fn dump_lists_every_node_and_arc() {
        let world = tiny_world();
        let fc = SndForecast::default();
        let te = build_time_expanded(&BuildInputs {
            world: &world,
            window: (0, 12),
            forecast: &fc,
            initial_port_stock: &[0, 0],
            initial_vessel_empties: &[0],
            big_m: DEFAULT_BIG_M,
            safety: None,
        })
        .unwrap();
        let dump = te.dump();
        assert_eq!(dump.lines().filter(|l| l.starts_with("node ")).count(), te.net.num_nodes);
        assert_eq!(dump.lines().filter(|l| l.starts_with("arc ")).count(), te.net.arcs.len());
    }
}
