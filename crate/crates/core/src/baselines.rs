//! The non-learned policy ladder: no-reposition, threshold inventory
//! control, rolling-horizon planning on the time-expanded network (plain
//! and inventory-control flavored), and the offline full-knowledge bound.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::engine::{action_for_move, run_episode_with, ArrivalEvent, Env, World};
use crate::flowopt::{build_time_expanded, solve_min_cost_flow, BuildInputs, FlowError, DEFAULT_BIG_M};
use crate::ordergen::{generate_orders, trace_laden, DemandModel, Order, SndForecast};
use crate::scenario::{PortId, VesselId};

/// Per-port safety and excess stock thresholds, `0 <= F_s <= F_e`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTable {
    pub safety: Vec<i64>,
    pub excess: Vec<i64>,
}

impl ThresholdTable {
    pub fn zeros(num_ports: usize) -> Self {
        ThresholdTable { safety: vec![0; num_ports], excess: vec![0; num_ports] }
    }
}

/// The constant-zero policy; ladens still move through stages 1 and 3.
pub fn policy_no_reposition(_env: &Env, _event: ArrivalEvent) -> f64 {
    0.0
}

/// Threshold policy: steer the port stock back into `[F_s, F_e]` by loading
/// the surplus above the excess threshold or discharging the deficit below
/// the safety threshold, bounded by what the 4-stage call can actually
/// move, expressed as the fractional action the engine expects.
pub fn policy_inventory_control(env: &Env, event: ArrivalEvent, table: &ThresholdTable) -> f64 {
    let p = event.port.idx();
    let stock = env.state.port_stock[p];
    let bases = env.action_bases(event);
    let x = if stock > table.excess[p] {
        (stock - table.excess[p]).min(bases.load).min(stock)
    } else if stock < table.safety[p] {
        -((table.safety[p] - stock).min(bases.discharge))
    } else {
        0
    };
    action_for_move(x, bases)
}

/// Nearest-rank percentile of a sorted sample set.
fn percentile(sorted: &[i64], p: u8) -> i64 {
    if sorted.is_empty() {
        return 0;
    }
    let rank = ((p as usize * sorted.len()).div_ceil(100)).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Per-port samples of net demand accumulated over the port's typical
/// inter-arrival gap, pooled across the given traces.
pub fn net_demand_windows(world: &World, traces: &[Vec<Order>]) -> Vec<Vec<i64>> {
    let horizon = world.config.episode_days as usize;
    let mut samples: Vec<Vec<i64>> = vec![Vec::new(); world.num_ports()];
    for p in 0..world.num_ports() {
        let events = &world.timetable.port_events[p];
        let gap = if events.len() < 2 {
            horizon
        } else {
            let span = events.last().unwrap().0 - events[0].0;
            ((span as f64 / (events.len() - 1) as f64).ceil() as usize).max(1)
        };
        for trace in traces {
            let mut net = vec![0i64; horizon];
            for o in trace {
                if (o.day as usize) < horizon && o.origin.idx() == p {
                    net[o.day as usize] += o.quantity;
                }
            }
            // Supplies estimated by the fulfill-everything trace.
            let fc = snd_for_port(world, trace, PortId(p as u16));
            for (&(_, day), &s) in &fc.supply {
                if (day as usize) < horizon {
                    net[day as usize] -= s;
                }
            }
            if horizon >= gap {
                let mut acc: i64 = net[..gap].iter().sum();
                samples[p].push(acc.max(0));
                for t in 1..=(horizon - gap) {
                    acc += net[t + gap - 1] - net[t - 1];
                    samples[p].push(acc.max(0));
                }
            }
        }
        samples[p].sort_unstable();
    }
    samples
}

fn snd_for_port(world: &World, trace: &[Order], port: PortId) -> SndForecast {
    let mut fc = SndForecast::default();
    for o in trace {
        if o.dest == port {
            let _ = trace_laden(
                &mut fc,
                &world.config,
                &world.timetable,
                o.origin,
                o.dest,
                o.quantity,
                o.day,
                world.config.t_ret,
            );
        }
    }
    fc
}

/// Thresholds at fixed percentiles of the pooled window samples.
pub fn thresholds_from_stats(samples: &[Vec<i64>], p: u8, q: u8) -> ThresholdTable {
    let safety: Vec<i64> = samples.iter().map(|s| percentile(s, p).max(0)).collect();
    let excess: Vec<i64> = samples
        .iter()
        .zip(&safety)
        .map(|(s, &f_s)| percentile(s, q).max(f_s))
        .collect();
    ThresholdTable { safety, excess }
}

/// Grid-searched threshold fit: percentile pairs are scored by the mean
/// simulated fulfillment over the fit traces; ties keep the smaller
/// thresholds (the grid is scanned in ascending order and only strictly
/// better scores replace the incumbent).
pub fn fit_thresholds(
    world: &Arc<World>,
    model: &DemandModel,
    fit_seeds: &[u64],
) -> Result<(ThresholdTable, (u8, u8)), crate::engine::EngineError> {
    let traces: Vec<Vec<Order>> = fit_seeds
        .iter()
        .map(|&s| generate_orders(model, world.config.episode_days, s))
        .collect();
    let samples = net_demand_windows(world, &traces);
    let grid: [u8; 5] = [50, 75, 90, 95, 100];
    let mut best: Option<(f64, (u8, u8), ThresholdTable)> = None;
    for &p in &grid {
        for &q in &grid {
            if p > q {
                continue;
            }
            let table = thresholds_from_stats(&samples, p, q);
            let mut ratio_sum = 0.0;
            for trace in &traces {
                let orders = Arc::new(trace.clone());
                let counters = run_episode_with(
                    world,
                    &orders,
                    |env, event| policy_inventory_control(env, event, &table),
                    None,
                )?;
                ratio_sum += counters.fulfillment_ratio();
            }
            let score = ratio_sum / traces.len().max(1) as f64;
            if best.as_ref().map(|(s, _, _)| score > *s).unwrap_or(true) {
                best = Some((score, (p, q), table));
            }
        }
    }
    let (_, pq, table) = best.expect("non-empty grid");
    Ok((table, pq))
}

/// Rolling-horizon planner settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RollingConfig {
    /// Planning horizon H in days.
    pub horizon_days: u32,
    /// Days of each plan that are executed before re-solving (W <= H).
    pub window_days: u32,
    pub big_m: i64,
}

impl Default for RollingConfig {
    fn default() -> Self {
        RollingConfig { horizon_days: 100, window_days: 7, big_m: DEFAULT_BIG_M }
    }
}

/// Online planning policy: every `window_days`, rebuild the time-expanded
/// network from the live simulator state plus exact future orders over the
/// horizon, solve it, and answer events from the cached plan. With
/// `thresholds`, demand buckets are enlarged by the safety stock
/// (inventory-control flavor).
#[derive(Debug, Clone)]
pub struct OnlineLpPolicy {
    pub rolling: RollingConfig,
    pub thresholds: Option<ThresholdTable>,
    plan: BTreeMap<(VesselId, u32), i64>,
    next_resolve: Option<u32>,
    /// Network dumps collected for debugging, one per re-solve.
    pub dump: Option<Vec<String>>,
}

impl OnlineLpPolicy {
    pub fn new(rolling: RollingConfig, thresholds: Option<ThresholdTable>) -> Self {
        OnlineLpPolicy { rolling, thresholds, plan: BTreeMap::new(), next_resolve: None, dump: None }
    }

    pub fn act(&mut self, env: &Env, event: ArrivalEvent) -> Result<f64, FlowError> {
        let stale = !self.plan.contains_key(&(event.vessel, event.day));
        if self.next_resolve.map(|d| event.day >= d).unwrap_or(true) || stale {
            self.resolve(env, event.day)?;
        }
        let x = self.plan.get(&(event.vessel, event.day)).copied().unwrap_or(0);
        Ok(action_for_move(x, env.action_bases(event)))
    }

    fn resolve(&mut self, env: &Env, day: u32) -> Result<(), FlowError> {
        let world = env.world();
        let end = (day + self.rolling.horizon_days).min(world.config.episode_days);
        let fc = forecast_from_state(env, day, end);
        let te = build_time_expanded(&BuildInputs {
            world,
            window: (day, end),
            forecast: &fc,
            initial_port_stock: &env.state.port_stock,
            initial_vessel_empties: &env.state.vessel_empties,
            big_m: self.rolling.big_m,
            safety: self.thresholds.as_ref().map(|t| t.safety.as_slice()),
        })?;
        let sol = solve_min_cost_flow(&te.net)?;
        if let Some(dumps) = self.dump.as_mut() {
            dumps.push(te.dump());
        }
        self.plan = te.extract_plan(&sol).x;
        self.next_resolve = Some(day + self.rolling.window_days);
        Ok(())
    }
}

/// Forecast over `[start, end)` assembled from the live state: future
/// orders (strictly after `start`; the current day's demand is already
/// settled), yard ladens awaiting a vessel, ladens aboard, and pending
/// empty returns.
pub fn forecast_from_state(env: &Env, start: u32, end: u32) -> SndForecast {
    let world = env.world();
    let config = &world.config;
    let t_ret = config.t_ret;
    let mut fc = SndForecast::default();

    for o in env.orders().iter() {
        if o.day > start && o.day < end {
            *fc.demand.entry((o.origin, o.day)).or_insert(0) += o.quantity;
            let _ = trace_laden(&mut fc, config, &world.timetable, o.origin, o.dest, o.quantity, o.day, t_ret);
        }
    }
    for (p, yard) in env.state.laden_yard.iter().enumerate() {
        for g in yard {
            let _ = trace_laden(
                &mut fc,
                config,
                &world.timetable,
                PortId(p as u16),
                g.dest,
                g.count,
                start,
                t_ret,
            );
        }
    }
    // Ladens aboard: occupancy until their discharge event, then a return.
    for (vi, groups) in env.state.vessel_ladens.iter().enumerate() {
        let vessel = VesselId(vi as u16);
        let events = &world.timetable.vessel_events[vi];
        for &(dest, count) in groups {
            let from = events.partition_point(|&(d, _)| d < start);
            let discharge = events[from..]
                .iter()
                .find(|&&(_, p)| p == dest)
                .map(|&(d, _)| d);
            let last = discharge.unwrap_or(u32::MAX);
            for &(d, _) in events {
                if d >= start && d < last {
                    *fc.laden_after_event.entry((vessel, d)).or_insert(0) += count;
                }
            }
            if let Some(d) = discharge {
                *fc.supply.entry((dest, d + t_ret)).or_insert(0) += count;
            }
        }
    }
    for &(due, port, count) in &env.state.pending_returns {
        *fc.supply.entry((port, due)).or_insert(0) += count;
    }
    fc
}

#[derive(Debug, Clone, PartialEq)]
pub struct OfflineBound {
    pub ratio: f64,
    pub shortage: i64,
    pub total_ordered: i64,
    /// Plain-text instance listing (debug interface).
    pub dump: String,
}

/// Full-knowledge planning bound: solves the whole-horizon network from the
/// reset state and returns the fulfillment ratio implied by the objective,
/// without any simulation.
pub fn offline_optimal(world: &Arc<World>, orders: &[Order], big_m: i64) -> Result<OfflineBound, FlowError> {
    let fc = crate::ordergen::snd_profile(orders, &world.config, &world.timetable, world.config.t_ret)
        .map_err(|e| FlowError::WindowMismatch(e.to_string()))?;
    let stocks = world.config.effective_initial_empties();
    let te = build_time_expanded(&BuildInputs {
        world,
        window: (0, world.config.episode_days),
        forecast: &fc,
        initial_port_stock: &stocks,
        initial_vessel_empties: &vec![0; world.num_vessels()],
        big_m,
        safety: None,
    })?;
    let sol = solve_min_cost_flow(&te.net)?;
    let shortage = te.shortage_of(&sol);
    let total: i64 = orders
        .iter()
        .filter(|o| o.day < world.config.episode_days)
        .map(|o| o.quantity)
        .sum();
    let ratio = if total == 0 { 1.0 } else { (total - shortage) as f64 / total as f64 };
    Ok(OfflineBound { ratio, shortage, total_ordered: total, dump: te.dump() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Step;
    use crate::scenario::parse_scenario;

    fn tiny_two_port() -> Arc<World> {
        let text = "\
[general]
total_containers 12
episode_days 10
t_ret 1
vessel_capacity 8
quantity_dispersion 0.0
[ports]
AAA Alpha 12 BBB:1.0
BBB Beta 0 AAA:0.5
[routes]
T1 6 1 AAA:0 BBB:3
";
        Arc::new(World::new(parse_scenario(text).unwrap()).unwrap())
    }

    #[test]
    fn no_reposition_is_constant_zero_but_ladens_flow() {
        let world = tiny_two_port();
        let orders = Arc::new(vec![Order {
            day: 0,
            origin: world.config.port_index("AAA").unwrap(),
            dest: world.config.port_index("BBB").unwrap(),
            quantity: 4,
        }]);
        let counters = run_episode_with(&world, &orders, policy_no_reposition, None).unwrap();
        assert_eq!(counters.imported_empty.iter().sum::<i64>(), 0);
        assert_eq!(counters.exported_empty.iter().sum::<i64>(), 0);
        assert!(counters.exported_laden.iter().sum::<i64>() > 0);
        assert!(counters.imported_laden.iter().sum::<i64>() > 0);
    }

    #[test]
    fn no_reposition_is_a_fixed_point() {
        let world = Arc::new(World::builtin());
        let model = DemandModel::from_scenario(&world.config, 4);
        let orders = Arc::new(generate_orders(&model, 400, 21));
        let mut log_a = String::new();
        let mut log_b = String::new();
        let a = run_episode_with(&world, &orders, policy_no_reposition, Some(&mut log_a)).unwrap();
        let b = run_episode_with(&world, &orders, policy_no_reposition, Some(&mut log_b)).unwrap();
        assert_eq!(a, b);
        assert_eq!(log_a, log_b);
    }

    #[test]
    fn ic_loads_surplus_above_excess() {
        let world = tiny_two_port();
        let mut env = Env::new(world.clone(), Arc::new(Vec::new()));
        let Step::Event(event) = env.advance_until_event().unwrap() else { panic!() };
        env.state.port_stock[event.port.idx()] = 50;
        let mut table = ThresholdTable::zeros(2);
        table.excess[event.port.idx()] = 30;
        // Surplus is 20 but the empty vessel only has 8 slots.
        let a = policy_inventory_control(&env, event, &table);
        let out = env.execute_action(event, a).unwrap();
        assert_eq!(out.loaded_empty, 8);
    }

    #[test]
    fn ic_discharges_toward_safety() {
        // Stock 5, F_s = 15, 8 empties aboard: discharge min(10, 8) = 8.
        let world = tiny_two_port();
        let mut env = Env::new(world.clone(), Arc::new(Vec::new()));
        let Step::Event(event) = env.advance_until_event().unwrap() else { panic!() };
        env.state.port_stock[event.port.idx()] = 5;
        env.state.vessel_empties[event.vessel.idx()] = 8;
        let mut table = ThresholdTable::zeros(2);
        table.safety[event.port.idx()] = 15;
        table.excess[event.port.idx()] = 20;
        let a = policy_inventory_control(&env, event, &table);
        let out = env.execute_action(event, a).unwrap();
        assert_eq!(out.discharged_empty, 8);
    }

    #[test]
    fn ic_holds_inside_the_band() {
        let world = tiny_two_port();
        let mut env = Env::new(world.clone(), Arc::new(Vec::new()));
        let Step::Event(event) = env.advance_until_event().unwrap() else { panic!() };
        env.state.port_stock[event.port.idx()] = 18;
        let mut table = ThresholdTable::zeros(2);
        table.safety[event.port.idx()] = 15;
        table.excess[event.port.idx()] = 20;
        assert_eq!(policy_inventory_control(&env, event, &table), 0.0);
    }

    #[test]
    fn percentile_is_nearest_rank() {
        let s = vec![1, 2, 3, 4, 5, 6, 7, 8, 9, 10];
        assert_eq!(percentile(&s, 50), 5);
        assert_eq!(percentile(&s, 100), 10);
        assert_eq!(percentile(&s, 1), 1);
    }

    #[test]
    fn zero_demand_port_fits_zero_thresholds() {
        let world = tiny_two_port();
        let traces = vec![vec![Order {
            day: 0,
            origin: world.config.port_index("AAA").unwrap(),
            dest: world.config.port_index("BBB").unwrap(),
            quantity: 2,
        }]];
        let samples = net_demand_windows(&world, &traces);
        let table = thresholds_from_stats(&samples, 95, 100);
        let bbb = world.config.port_index("BBB").unwrap();
        assert_eq!(table.safety[bbb.idx()], 0);
        assert_eq!(table.excess[bbb.idx()], 0);
    }

    #[test]
    fn constant_demand_full_percentile_hits_gap_total() {
        // 10/day demand, 7-day gap, p = 100 -> F_s = 70.
        let text = "\
[general]
total_containers 9999
episode_days 50
quantity_dispersion 0.0
[ports]
AAA Alpha 9999 BBB:10.0
BBB Beta 0 AAA:0.1
[routes]
T1 7 1 AAA:0 BBB:3
";
        let world = Arc::new(World::new(parse_scenario(text).unwrap()).unwrap());
        let aaa = world.config.port_index("AAA").unwrap();
        let bbb = world.config.port_index("BBB").unwrap();
        let trace: Vec<Order> = (0..50)
            .map(|d| Order { day: d, origin: aaa, dest: bbb, quantity: 10 })
            .collect();
        let samples = net_demand_windows(&world, &[trace]);
        let table = thresholds_from_stats(&samples, 100, 100);
        assert_eq!(table.safety[aaa.idx()], 70);
    }

    #[test]
    fn online_lp_with_zero_future_orders_plans_nothing() {
        let world = tiny_two_port();
        let orders = Arc::new(Vec::new());
        let mut policy = OnlineLpPolicy::new(RollingConfig::default(), None);
        let counters = run_episode_with(
            &world,
            &orders,
            |env, event| policy.act(env, event).unwrap(),
            None,
        )
        .unwrap();
        assert_eq!(counters.imported_empty.iter().sum::<i64>(), 0);
        assert_eq!(counters.exported_empty.iter().sum::<i64>(), 0);
    }

    #[test]
    fn offline_bound_conventions() {
        let world = tiny_two_port();
        // Zero orders: ratio 1 by convention.
        let bound = offline_optimal(&world, &[], DEFAULT_BIG_M).unwrap();
        assert_eq!(bound.ratio, 1.0);

        // A single order no stock anywhere can serve: ratio 0.
        let text = "\
[general]
total_containers 0
episode_days 10
vessel_capacity 8
[ports]
AAA Alpha 0 BBB:1.0
BBB Beta 0
[routes]
T1 6 1 AAA:0 BBB:3
";
        let world = Arc::new(World::new(parse_scenario(text).unwrap()).unwrap());
        let orders = vec![Order {
            day: 2,
            origin: world.config.port_index("AAA").unwrap(),
            dest: world.config.port_index("BBB").unwrap(),
            quantity: 5,
        }];
        let bound = offline_optimal(&world, &orders, DEFAULT_BIG_M).unwrap();
        assert_eq!(bound.ratio, 0.0);
        assert_eq!(bound.shortage, 5);
    }

    #[test]
    fn online_equals_offline_when_window_covers_the_episode() {
        // Tiny deterministic world with unit orders and one vessel; the
        // rolling policy with H = W = episode must realize exactly the
        // offline objective.
        let world = tiny_two_port();
        let aaa = world.config.port_index("AAA").unwrap();
        let bbb = world.config.port_index("BBB").unwrap();
        let mut orders = Vec::new();
        for d in 1..9 {
            orders.push(Order { day: d, origin: bbb, dest: aaa, quantity: 1 });
        }
        let orders = Arc::new(orders);
        let bound = offline_optimal(&world, &orders, DEFAULT_BIG_M).unwrap();
        let rolling = RollingConfig { horizon_days: 10, window_days: 10, big_m: DEFAULT_BIG_M };
        let mut policy = OnlineLpPolicy::new(rolling, None);
        let counters = run_episode_with(
            &world,
            &orders,
            |env, event| policy.act(env, event).unwrap(),
            None,
        )
        .unwrap();
        assert_eq!(counters.total_failed(), bound.shortage);
    }
}
