//! Flat observation vectors for the three awareness levels.
//!
//! Every vector is assembled from three reusable slices:
//!
//! * port slice `s_P`: `[stock/norm, mean historical stock/norm,
//!   cumulative shortage/norm, one-hot port id]`
//! * vessel slice `s_V`: `[empties/cap, free/cap, ladens/cap,
//!   one-hot route id]`
//! * route slice `s_R`: `[mean port stock/norm, mean cumulative
//!   shortage/norm]` over the route's distinct ports
//!
//! Levels nest: self = `[s_P(here), s_V(this)]`; territorial appends the
//! next `n` ports on the vessel's route, the next `m` vessels due at this
//! port and the own-route `s_R`; diplomatic appends the mean `s_R` over
//! crossing routes and, at transfer terminals, the mean `s_R` over all
//! routes through the port (zeros elsewhere). Cross-route aggregates are
//! read `staleness_k` days in the past (clamped at day 0); everything else
//! is live.

use serde::{Deserialize, Serialize};

use crate::engine::{Snapshot, World};
use crate::scalar::{from_count, real, Real};
use crate::scenario::{PortId, RouteId, VesselId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AwarenessLevel {
    SelfAware,
    Territorial,
    Diplomatic,
}

impl AwarenessLevel {
    pub fn name(&self) -> &'static str {
        match self {
            AwarenessLevel::SelfAware => "self",
            AwarenessLevel::Territorial => "territorial",
            AwarenessLevel::Diplomatic => "diplomatic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "self" => Some(AwarenessLevel::SelfAware),
            "territorial" => Some(AwarenessLevel::Territorial),
            "diplomatic" => Some(AwarenessLevel::Diplomatic),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    pub level: AwarenessLevel,
    /// Successor terminals included at territorial level and above.
    pub n: usize,
    /// Future vessels included at territorial level and above.
    pub m: usize,
    /// Days of delay applied to cross-route aggregates.
    pub staleness_k: u32,
    /// Normalization constant; defaults to the scenario's container total.
    pub norm: f64,
}

impl FeatureConfig {
    pub fn new(level: AwarenessLevel, world: &World) -> Self {
        FeatureConfig {
            level,
            n: 1,
            m: 1,
            staleness_k: 0,
            norm: world.config.total_containers as f64,
        }
    }
}

/// Fixed-length real observation; the layout is a pure function of
/// `(level, n, m, scenario sizes)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector<R: Real> {
    pub values: Vec<R>,
}

/// Named layout schema: (name, start, len) per block.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub blocks: Vec<(String, usize, usize)>,
    pub len: usize,
}

impl Layout {
    pub fn describe(&self) -> String {
        let mut out = format!("len {}\n", self.len);
        for (name, start, len) in &self.blocks {
            out.push_str(&format!("{start:>5} {len:>4} {name}\n"));
        }
        out
    }
}

fn port_slice_len(world: &World) -> usize {
    3 + world.num_ports()
}

fn vessel_slice_len(world: &World) -> usize {
    3 + world.num_routes()
}

/// Layout of the observation for this config.
pub fn layout(world: &World, cfg: &FeatureConfig) -> Layout {
    let sp = port_slice_len(world);
    let sv = vessel_slice_len(world);
    let mut blocks = Vec::new();
    let mut at = 0;
    let mut push = |blocks: &mut Vec<(String, usize, usize)>, name: String, len: usize| {
        blocks.push((name, at, len));
        at += len;
    };
    push(&mut blocks, "here_port".into(), sp);
    push(&mut blocks, "here_vessel".into(), sv);
    if cfg.level != AwarenessLevel::SelfAware {
        for i in 0..cfg.n {
            push(&mut blocks, format!("next_port_{}", i + 1), sp);
        }
        for i in 0..cfg.m {
            push(&mut blocks, format!("future_vessel_{}", i + 1), sv);
        }
        push(&mut blocks, "own_route".into(), 2);
    }
    if cfg.level == AwarenessLevel::Diplomatic {
        push(&mut blocks, "crossing_mean".into(), 2);
        push(&mut blocks, "transfer_mean".into(), 2);
    }
    Layout { len: at, blocks }
}

/// FNV-1a hash of the layout schema; checkpoints refuse to run against a
/// different layout.
pub fn layout_hash(world: &World, cfg: &FeatureConfig) -> u64 {
    let l = layout(world, cfg);
    let mut schema = format!(
        "v1|ports={}|routes={}|level={}|n={}|m={}",
        world.num_ports(),
        world.num_routes(),
        cfg.level.name(),
        cfg.n,
        cfg.m
    );
    for (name, start, len) in &l.blocks {
        schema.push_str(&format!("|{name}:{start}:{len}"));
    }
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in schema.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Port slice `s_P` at the snapshot instant.
pub fn port_features<R: Real>(world: &World, snap: &Snapshot, port: PortId, norm: f64, out: &mut Vec<R>) {
    let day = snap.day();
    let norm: R = real(norm);
    let stock = snap.state.port_stock[port.idx()];
    out.push(from_count::<R>(stock) / norm);
    let (sum, count) = snap.state.history.stock_sum_before(port, day);
    let mean: R = if count == 0 {
        from_count(snap.state.history.initial_stock[port.idx()])
    } else {
        from_count::<R>(sum) / from_count::<R>(count as i64)
    };
    out.push(mean / norm);
    let cum = cum_shortage_before(snap, port, day);
    out.push(from_count::<R>(cum) / norm);
    for i in 0..world.num_ports() {
        out.push(if i == port.idx() { R::one() } else { R::zero() });
    }
}

/// Vessel slice `s_V` at the snapshot instant.
pub fn vessel_features<R: Real>(world: &World, snap: &Snapshot, vessel: VesselId, out: &mut Vec<R>) {
    let cap: R = from_count(world.config.vessels[vessel.idx()].capacity);
    let empties = snap.state.vessel_empties[vessel.idx()];
    let ladens: i64 = snap.state.vessel_ladens[vessel.idx()].iter().map(|&(_, n)| n).sum();
    let free = world.config.vessels[vessel.idx()].capacity - empties - ladens;
    out.push(from_count::<R>(empties) / cap);
    out.push(from_count::<R>(free) / cap);
    out.push(from_count::<R>(ladens) / cap);
    let route = world.vessel_route(vessel);
    for i in 0..world.num_routes() {
        out.push(if i == route.idx() { R::one() } else { R::zero() });
    }
}

/// Cumulative shortage strictly before `day` (the current day's ledger is
/// excluded from features, matching the historical-information reading).
fn cum_shortage_before(snap: &Snapshot, port: PortId, day: u32) -> i64 {
    if day == 0 {
        0
    } else {
        snap.state.history.cum_shortage_through(port, day - 1)
    }
}

/// Stock and cumulative shortage of `port` as seen at `view_day`
/// (`view_day == snap.day()` means live).
fn port_view(snap: &Snapshot, port: PortId, view_day: u32) -> (i64, i64) {
    let day = snap.day();
    if view_day >= day {
        (snap.state.port_stock[port.idx()], cum_shortage_before(snap, port, day))
    } else {
        (
            snap.state.history.stock_eod(port, view_day),
            cum_shortage_before(snap, port, view_day),
        )
    }
}

/// Route slice `s_R` as seen at `view_day`.
pub fn route_aggregate<R: Real>(world: &World, snap: &Snapshot, route: RouteId, view_day: u32, out: &mut Vec<R>) {
    let ports = &world.topology.route_ports[route.idx()];
    let norm: R = real(world.config.total_containers as f64);
    let mut stock_sum = 0i64;
    let mut shortage_sum = 0i64;
    for &p in ports {
        let (s, l) = port_view(snap, p, view_day);
        stock_sum += s;
        shortage_sum += l;
    }
    let count = from_count::<R>(ports.len() as i64);
    out.push(from_count::<R>(stock_sum) / count / norm);
    out.push(from_count::<R>(shortage_sum) / count / norm);
}

fn route_aggregate_mean<R: Real>(
    world: &World,
    snap: &Snapshot,
    routes: &[RouteId],
    view_day: u32,
    out: &mut Vec<R>,
) {
    if routes.is_empty() {
        out.push(R::zero());
        out.push(R::zero());
        return;
    }
    let mut phi = R::zero();
    let mut psi = R::zero();
    let mut tmp = Vec::with_capacity(2);
    for &r in routes {
        tmp.clear();
        route_aggregate(world, snap, r, view_day, &mut tmp);
        phi += tmp[0];
        psi += tmp[1];
    }
    let n = from_count::<R>(routes.len() as i64);
    out.push(phi / n);
    out.push(psi / n);
}

/// Builds the observation for the snapshot's pending event.
pub fn build_state<R: Real>(world: &World, snap: &Snapshot, cfg: &FeatureConfig) -> StateVector<R> {
    let event = snap.event.expect("build_state needs an event snapshot");
    let day = snap.day();
    let lay = layout(world, cfg);
    let mut out: Vec<R> = Vec::with_capacity(lay.len);
    let sp = port_slice_len(world);
    let sv = vessel_slice_len(world);

    port_features(world, snap, event.port, cfg.norm, &mut out);
    vessel_features(world, snap, event.vessel, &mut out);

    if cfg.level != AwarenessLevel::SelfAware {
        let vev = &world.timetable.vessel_events[event.vessel.idx()];
        for i in 0..cfg.n {
            let k = event.event_index as usize + 1 + i;
            if k < vev.len() {
                port_features(world, snap, vev[k].1, cfg.norm, &mut out);
            } else {
                out.extend(std::iter::repeat(R::zero()).take(sp));
            }
        }
        let pos = world
            .timetable
            .port_event_position(event.port, event.day, event.vessel)
            .expect("event must exist in the timetable");
        let pev = &world.timetable.port_events[event.port.idx()];
        for i in 0..cfg.m {
            let k = pos + 1 + i;
            if k < pev.len() {
                vessel_features(world, snap, pev[k].1, &mut out);
            } else {
                out.extend(std::iter::repeat(R::zero()).take(sv));
            }
        }
        let own = world.vessel_route(event.vessel);
        route_aggregate(world, snap, own, day, &mut out);
    }

    if cfg.level == AwarenessLevel::Diplomatic {
        let own = world.vessel_route(event.vessel);
        let view_day = day.saturating_sub(cfg.staleness_k);
        let crossing = &world.topology.crossing_routes[own.idx()];
        route_aggregate_mean(world, snap, crossing, view_day, &mut out);
        if world.topology.is_transfer(event.port) {
            let through = &world.topology.routes_through[event.port.idx()];
            route_aggregate_mean(world, snap, through, view_day, &mut out);
        } else {
            out.push(R::zero());
            out.push(R::zero());
        }
    }

    debug_assert_eq!(out.len(), lay.len);
    StateVector { values: out }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{Env, Step};
    use crate::ordergen::Order;
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn first_event_snapshot(env: &mut Env) -> Snapshot {
        match env.advance_until_event().unwrap() {
            Step::Event(_) => env.snapshot(),
            Step::End => panic!("no events"),
        }
    }

    #[test]
    fn vector_lengths_follow_the_layout_arithmetic() {
        let world = World::builtin();
        let sp = 3 + 17;
        let sv = 3 + 4;
        for (level, expected) in [
            (AwarenessLevel::SelfAware, sp + sv),
            (AwarenessLevel::Territorial, sp + sv + sp + sv + 2),
            (AwarenessLevel::Diplomatic, sp + sv + sp + sv + 2 + 4),
        ] {
            let cfg = FeatureConfig::new(level, &world);
            let lay = layout(&world, &cfg);
            assert_eq!(lay.len, expected);
            let mut env = Env::new(Arc::new(world.clone()), Arc::new(Vec::new()));
            let snap = first_event_snapshot(&mut env);
            let state: StateVector<f64> = build_state(&world, &snap, &cfg);
            assert_eq!(state.values.len(), expected);
        }
    }

    #[test]
    fn day_zero_port_slice_is_a_single_sample_mean() {
        let world = Arc::new(World::builtin());
        let mut env = Env::new(world.clone(), Arc::new(Vec::new()));
        let snap = first_event_snapshot(&mut env);
        let port = snap.event.unwrap().port;
        let stock = snap.state.port_stock[port.idx()];
        let mut out: Vec<f64> = Vec::new();
        port_features(&world, &snap, port, 3000.0, &mut out);
        assert_relative_eq!(out[0], stock as f64 / 3000.0);
        assert_relative_eq!(out[1], stock as f64 / 3000.0); // no history yet
        assert_eq!(out[2], 0.0);
        let onehot: f64 = out[3..].iter().sum();
        assert_eq!(onehot, 1.0);
        assert_eq!(out[3 + port.idx()], 1.0);
    }

    #[test]
    fn historical_mean_is_arithmetic() {
        let world = Arc::new(World::builtin());
        let mut env = Env::new(world.clone(), Arc::new(Vec::new()));
        // Fabricate three recorded days: stocks 10, 20, 30 at port 0.
        let env_state = &mut env.state;
        let hist = Arc::make_mut(&mut env_state.history);
        let mut stocks = env_state.port_stock.clone();
        for s in [10, 20, 30] {
            stocks[0] = s;
            hist.record_eod_stock(&stocks);
        }
        env_state.day = 3;
        let snap = Snapshot {
            event: Some(world.timetable.by_day[0][0]),
            state: env_state.clone(),
        };
        let mut out: Vec<f64> = Vec::new();
        port_features(&world, &snap, PortId(0), 3000.0, &mut out);
        assert_relative_eq!(out[1], 20.0 / 3000.0);
    }

    #[test]
    fn vessel_slice_fractions() {
        let world = Arc::new(World::builtin());
        let mut env = Env::new(world.clone(), Arc::new(Vec::new()));
        let snap0 = first_event_snapshot(&mut env);
        let v = snap0.event.unwrap().vessel;
        let mut out: Vec<f64> = Vec::new();
        vessel_features(&world, &snap0, v, &mut out);
        assert_eq!(&out[..3], &[0.0, 1.0, 0.0]);

        let other = world.topology.route_ports[world.vessel_route(v).idx()]
            .iter()
            .copied()
            .find(|&q| q != snap0.event.unwrap().port)
            .unwrap();
        env.state.vessel_empties[v.idx()] = 30;
        env.state.vessel_ladens[v.idx()] = vec![(other, 120)];
        let snap = env.snapshot();
        let mut out: Vec<f64> = Vec::new();
        vessel_features(&world, &snap, v, &mut out);
        assert_relative_eq!(out[0], 0.15);
        assert_relative_eq!(out[1], 0.25);
        assert_relative_eq!(out[2], 0.60);
        let route = world.vessel_route(v);
        assert_eq!(out[3 + route.idx()], 1.0);
    }

    #[test]
    fn route_aggregate_means_over_distinct_ports() {
        let world = Arc::new(World::builtin());
        let mut env = Env::new(world.clone(), Arc::new(Vec::new()));
        let r3 = world.config.route_index("R3").unwrap();
        let ports = world.topology.route_ports[r3.idx()].clone();
        assert_eq!(ports.len(), 4); // KOY TKY LAS OAK
        for &p in &ports {
            env.state.port_stock[p.idx()] = 0;
        }
        env.state.port_stock[ports[0].idx()] = 100;
        env.state.port_stock[ports[1].idx()] = 300;
        let snap = first_event_snapshot(&mut env);
        let mut out: Vec<f64> = Vec::new();
        route_aggregate(&world, &snap, r3, snap.day(), &mut out);
        assert_relative_eq!(out[0], 400.0 / 4.0 / 3000.0);
        assert_eq!(out[1], 0.0);
    }

    #[test]
    fn zero_staleness_equals_live_aggregates() {
        let world = Arc::new(World::builtin());
        let model = crate::ordergen::DemandModel::from_scenario(&world.config, 1);
        let orders: Vec<Order> = crate::ordergen::generate_orders(&model, 60, 5);
        let mut env = Env::new(world.clone(), Arc::new(orders));
        let cfg0 = FeatureConfig {
            staleness_k: 0,
            ..FeatureConfig::new(AwarenessLevel::Diplomatic, &world)
        };
        // Walk a few dozen events with a fixed mild action.
        for _ in 0..40 {
            match env.advance_until_event().unwrap() {
                Step::Event(e) => {
                    let snap = env.snapshot();
                    let s: StateVector<f64> = build_state(&world, &snap, &cfg0);
                    // Rebuild live blocks by hand: delayed view at k=0 must
                    // be the live view.
                    let own = world.vessel_route(e.vessel);
                    let mut live: Vec<f64> = Vec::new();
                    route_aggregate_mean(
                        &world,
                        &snap,
                        &world.topology.crossing_routes[own.idx()],
                        snap.day(),
                        &mut live,
                    );
                    let lay = layout(&world, &cfg0);
                    let (_, start, _) =
                        lay.blocks.iter().find(|(n, _, _)| n == "crossing_mean").unwrap().clone();
                    assert_eq!(&s.values[start..start + 2], &live[..]);
                    env.execute_action(e, 0.3).unwrap();
                }
                Step::End => break,
            }
        }
    }

    #[test]
    fn staleness_reads_only_old_history() {
        // Two runs diverge after day `t - k`; delayed blocks at day t match.
        let world = Arc::new(World::builtin());
        let model = crate::ordergen::DemandModel::from_scenario(&world.config, 2);
        let orders: Vec<Order> = crate::ordergen::generate_orders(&model, 60, 9);
        let orders = Arc::new(orders);
        let k = 10u32;
        // Pin the exact event day so both runs diverge strictly after the
        // delayed view day t - k (end-of-day t-k records still agree).
        let target_day = (30..60)
            .find(|&d| !world.timetable.by_day[d as usize].is_empty())
            .unwrap();
        let run = |late_action: f64| -> Vec<f64> {
            let mut env = Env::new(world.clone(), orders.clone());
            let cfg = FeatureConfig {
                staleness_k: k,
                ..FeatureConfig::new(AwarenessLevel::Diplomatic, &world)
            };
            loop {
                match env.advance_until_event().unwrap() {
                    Step::Event(e) => {
                        if e.day >= target_day {
                            let snap = env.snapshot();
                            let s: StateVector<f64> = build_state(&world, &snap, &cfg);
                            let lay = layout(&world, &cfg);
                            let (_, start, _) = lay
                                .blocks
                                .iter()
                                .find(|(n, _, _)| n == "crossing_mean")
                                .unwrap()
                                .clone();
                            return s.values[start..start + 4].to_vec();
                        }
                        let a = if e.day > target_day - k { late_action } else { 0.4 };
                        env.execute_action(e, a).unwrap();
                    }
                    Step::End => panic!("ran out of events"),
                }
            }
        };
        assert_eq!(run(-0.9), run(0.9));
    }

    #[test]
    fn entries_are_finite_and_bounded() {
        let world = Arc::new(World::builtin());
        let model = crate::ordergen::DemandModel::from_scenario(&world.config, 3);
        let orders: Vec<Order> = crate::ordergen::generate_orders(&model, 120, 11);
        let total_ordered: i64 = orders.iter().map(|o| o.quantity).sum();
        let mut env = Env::new(world.clone(), Arc::new(orders));
        let cfg = FeatureConfig::new(AwarenessLevel::Diplomatic, &world);
        let bound = 1.0 + (total_ordered + world.config.effective_total()) as f64 / cfg.norm;
        loop {
            match env.advance_until_event().unwrap() {
                Step::Event(e) => {
                    let snap = env.snapshot();
                    let s: StateVector<f64> = build_state(&world, &snap, &cfg);
                    for &x in &s.values {
                        assert!(x.is_finite());
                        assert!(x >= -1.0 && x <= bound, "entry {x} out of [-1, {bound}]");
                    }
                    env.execute_action(e, if e.day % 2 == 0 { 0.8 } else { -0.8 }).unwrap();
                }
                Step::End => break,
            }
        }
    }

    #[test]
    fn padding_covers_exhausted_horizons() {
        // A single-vessel scenario near the horizon end has no future
        // arrivals; those blocks must be zero.
        let text = "\
[general]
total_containers 50
episode_days 12
[ports]
AAA Alpha 30 BBB:0.5
BBB Beta 20 AAA:0.5
[routes]
T1 10 1 AAA:0 BBB:4
";
        let cfg = crate::scenario::parse_scenario(text).unwrap();
        let world = Arc::new(World::new(cfg).unwrap());
        let mut env = Env::new(world.clone(), Arc::new(Vec::new()));
        let fcfg = FeatureConfig {
            n: 3,
            m: 2,
            ..FeatureConfig::new(AwarenessLevel::Territorial, &world)
        };
        let mut last: Option<StateVector<f64>> = None;
        loop {
            match env.advance_until_event().unwrap() {
                Step::Event(e) => {
                    let snap = env.snapshot();
                    last = Some(build_state(&world, &snap, &fcfg));
                    env.execute_action(e, 0.0).unwrap();
                }
                Step::End => break,
            }
        }
        let s = last.unwrap();
        let lay = layout(&world, &fcfg);
        // Last future-vessel block of the final event must be zeros.
        let (_, start, len) = lay.blocks.iter().find(|(n, _, _)| n == "future_vessel_2").unwrap().clone();
        assert!(s.values[start..start + len].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn layout_hash_separates_levels_but_not_staleness() {
        let world = World::builtin();
        let d0 = FeatureConfig::new(AwarenessLevel::Diplomatic, &world);
        let d5 = FeatureConfig { staleness_k: 5, ..d0.clone() };
        let t = FeatureConfig::new(AwarenessLevel::Territorial, &world);
        assert_eq!(layout_hash(&world, &d0), layout_hash(&world, &d5));
        assert_ne!(layout_hash(&world, &d0), layout_hash(&world, &t));
    }
}
