//! Deterministic event-driven simulator.
//!
//! Days advance one at a time. Within a day the fixed order of operations is:
//!
//! 1. snapshot yesterday's stock into the shared draw-down counter;
//! 2. process the day's orders in trace order — an order either moves its
//!    full quantity from stock to the laden yard or fails whole and is added
//!    to the shortage ledger;
//! 3. credit empty returns due today (they become usable tomorrow, because
//!    demand only ever reads yesterday's stock);
//! 4. fire the day's vessel arrivals one by one, sequenced by
//!    (port code, vessel id). Each arrival is handed to the caller, which
//!    must answer with an action in [-1, 1] before the next event fires.
//!
//! Executing an action follows the 4-stage port call: discharge arriving
//! ladens, discharge `round(-a * C_V)` empties when `a < 0`, load route-bound
//! yard ladens FIFO by received day (laden transport has priority and may
//! split groups), then load `round(a * min(free, stock))` empties when
//! `a > 0`. `round` is nearest-integer, ties away from zero.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::scenario::ArrivalEvent;
use crate::ordergen::Order;
use crate::scenario::{
    derive_timetable, PortId, RouteId, ScenarioConfig, ScenarioError, Timetable, Topology, VesselId,
};

/// Immutable world shared by environments, features and planners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub config: ScenarioConfig,
    pub topology: Topology,
    pub timetable: Timetable,
}

impl World {
    pub fn new(config: ScenarioConfig) -> Result<Self, ScenarioError> {
        config.validate()?;
        let topology = Topology::new(&config);
        let timetable = derive_timetable(&config);
        Ok(World { config, topology, timetable })
    }

    pub fn builtin() -> Self {
        World::new(crate::scenario::builtin_scenario()).expect("built-in scenario is valid")
    }

    pub fn num_ports(&self) -> usize {
        self.config.ports.len()
    }

    pub fn num_routes(&self) -> usize {
        self.config.routes.len()
    }

    pub fn num_vessels(&self) -> usize {
        self.config.vessels.len()
    }

    pub fn vessel_route(&self, v: VesselId) -> RouteId {
        self.config.vessels[v.idx()].route
    }
}

/// Append-only per-port daily records with prefix sums, shared between the
/// live state and snapshots via `Arc` copy-on-write.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub initial_stock: Vec<i64>,
    /// End-of-day stock, one entry per completed day.
    stock: Vec<Vec<i64>>,
    stock_prefix: Vec<Vec<i64>>,
    /// Shortage recorded while the day's orders were processed.
    shortage: Vec<Vec<i64>>,
    shortage_prefix: Vec<Vec<i64>>,
}

impl History {
    pub(crate) fn new(initial_stock: Vec<i64>) -> Self {
        let n = initial_stock.len();
        History {
            initial_stock,
            stock: vec![Vec::new(); n],
            stock_prefix: vec![Vec::new(); n],
            shortage: vec![Vec::new(); n],
            shortage_prefix: vec![Vec::new(); n],
        }
    }

    pub(crate) fn record_eod_stock(&mut self, stocks: &[i64]) {
        for (p, &s) in stocks.iter().enumerate() {
            let last = *self.stock_prefix[p].last().unwrap_or(&0);
            self.stock[p].push(s);
            self.stock_prefix[p].push(last + s);
        }
    }

    pub(crate) fn record_shortage(&mut self, port: usize, day: u32, amount: i64) {
        debug_assert_eq!(self.shortage[port].len(), day as usize + 1);
        let n = self.shortage[port].len();
        self.shortage[port][n - 1] += amount;
        self.shortage_prefix[port][n - 1] += amount;
    }

    pub(crate) fn open_shortage_day(&mut self, day: u32) {
        for p in 0..self.shortage.len() {
            debug_assert_eq!(self.shortage[p].len(), day as usize);
            let last = *self.shortage_prefix[p].last().unwrap_or(&0);
            self.shortage[p].push(0);
            self.shortage_prefix[p].push(last);
        }
    }

    /// Completed days with a recorded end-of-day stock.
    pub fn days_recorded(&self) -> u32 {
        self.stock.first().map(|v| v.len() as u32).unwrap_or(0)
    }

    /// End-of-day stock of `day`; `day` must be recorded.
    pub fn stock_eod(&self, port: PortId, day: u32) -> i64 {
        self.stock[port.idx()][day as usize]
    }

    /// Sum and count of end-of-day stocks for days `< before_day`.
    pub fn stock_sum_before(&self, port: PortId, before_day: u32) -> (i64, u32) {
        let n = (before_day as usize).min(self.stock[port.idx()].len());
        if n == 0 {
            return (0, 0);
        }
        (self.stock_prefix[port.idx()][n - 1], n as u32)
    }

    /// Cumulative shortage over days `0..=through_day`, clamped to what has
    /// been recorded so far.
    pub fn cum_shortage_through(&self, port: PortId, through_day: u32) -> i64 {
        let rec = &self.shortage_prefix[port.idx()];
        let n = (through_day as usize + 1).min(rec.len());
        if n == 0 {
            0
        } else {
            rec[n - 1]
        }
    }

    /// Shortage over the window `(after_day, through_day]`.
    pub fn shortage_window(&self, port: PortId, after_day: u32, through_day: u32) -> i64 {
        if through_day <= after_day {
            return 0;
        }
        self.cum_shortage_through(port, through_day) - self.cum_shortage_through(port, after_day)
    }

    /// Shortage recorded on exactly `day` (0 when not yet recorded).
    pub fn shortage_on(&self, port: PortId, day: u32) -> i64 {
        self.shortage[port.idx()].get(day as usize).copied().unwrap_or(0)
    }
}

/// One laden group waiting in a port yard.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct YardGroup {
    pub received_day: u32,
    pub dest: PortId,
    pub count: i64,
}

/// Full mutable simulator state. All quantities are integral, so serialized
/// states compare bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub day: u32,
    pub done: bool,
    /// Live empties in stock per port.
    pub port_stock: Vec<i64>,
    /// Shared remaining-stock counter seeded from yesterday's stock; today's
    /// orders draw it down.
    pub yesterday_stock: Vec<i64>,
    /// Empties on their way back to stock: (due day, port, count).
    pub pending_returns: Vec<(u32, PortId, i64)>,
    /// FIFO laden yard per port.
    pub laden_yard: Vec<Vec<YardGroup>>,
    /// Empties aboard each vessel.
    pub vessel_empties: Vec<i64>,
    /// Ladens aboard each vessel, aggregated by destination (sorted).
    pub vessel_ladens: Vec<Vec<(PortId, i64)>>,
    /// Index of each vessel's next unexecuted timetable event.
    pub vessel_next_event: Vec<u32>,
    /// Per-port daily stock and shortage records.
    pub history: Arc<History>,
    /// Cursor into the order trace.
    pub order_cursor: u32,
    /// Remaining arrivals of the current day.
    today_events: Vec<ArrivalEvent>,
    today_cursor: usize,
    awaiting_action: bool,
}

/// What an executed action did, by stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionOutcome {
    pub discharged_laden: i64,
    pub discharged_empty: i64,
    pub loaded_laden: i64,
    pub loaded_empty: i64,
}

/// Container census by location; the components always sum to the effective
/// total (ladens are empties in disguise).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Census {
    pub in_ports: i64,
    pub on_vessels_empty: i64,
    pub on_vessels_laden: i64,
    pub in_yards: i64,
    pub in_returns: i64,
}

impl Census {
    pub fn total(&self) -> i64 {
        self.in_ports + self.on_vessels_empty + self.on_vessels_laden + self.in_yards + self.in_returns
    }
}

/// Immutable full-environment view captured when an event fires (or at
/// episode end, with `event == None`); the sole input to features and
/// delayed rewards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub event: Option<ArrivalEvent>,
    pub state: EnvState,
}

impl Snapshot {
    pub fn day(&self) -> u32 {
        self.state.day
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Event(ArrivalEvent),
    End,
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("the pending event must be executed before advancing")]
    PendingEvent,
    #[error("no event is awaiting an action")]
    NoPendingEvent,
    #[error("action targets a stale event")]
    StaleEvent,
    #[error("action {0} outside [-1, 1]")]
    ActionOutOfRange(f64),
}

/// The simulator: one episode over a fixed order trace.
#[derive(Debug, Clone)]
pub struct Env {
    world: Arc<World>,
    orders: Arc<Vec<Order>>,
    /// Order indices grouped by day, preserving trace order.
    day_index: Arc<Vec<Vec<u32>>>,
    pub state: EnvState,
}

impl Env {
    /// Builds and resets an environment on `orders`. Orders outside the
    /// episode horizon are ignored.
    pub fn new(world: Arc<World>, orders: Arc<Vec<Order>>) -> Self {
        let days = world.config.episode_days as usize;
        let mut day_index = vec![Vec::new(); days];
        for (i, o) in orders.iter().enumerate() {
            if (o.day as usize) < days {
                day_index[o.day as usize].push(i as u32);
            }
        }
        let state = Self::initial_state(&world);
        let mut env = Env { world, orders, day_index: Arc::new(day_index), state };
        env.begin_day();
        env
    }

    fn initial_state(world: &World) -> EnvState {
        let initial = world.config.effective_initial_empties();
        EnvState {
            day: 0,
            done: false,
            port_stock: initial.clone(),
            yesterday_stock: initial.clone(),
            pending_returns: Vec::new(),
            laden_yard: vec![Vec::new(); world.num_ports()],
            vessel_empties: vec![0; world.num_vessels()],
            vessel_ladens: vec![Vec::new(); world.num_vessels()],
            vessel_next_event: vec![0; world.num_vessels()],
            history: Arc::new(History::new(initial)),
            order_cursor: 0,
            today_events: Vec::new(),
            today_cursor: 0,
            awaiting_action: false,
        }
    }

    /// Day 0, scaled initial stocks, empty vessels, cleared ledgers.
    pub fn reset(&mut self) {
        self.state = Self::initial_state(&self.world);
        self.begin_day();
    }

    pub fn world(&self) -> &Arc<World> {
        &self.world
    }

    pub fn orders(&self) -> &Arc<Vec<Order>> {
        &self.orders
    }

    /// Morning of `state.day`: order processing, returns, event queue.
    fn begin_day(&mut self) {
        let day = self.state.day;
        let history = Arc::make_mut(&mut self.state.history);
        history.open_shortage_day(day);
        self.state.yesterday_stock.copy_from_slice(&self.state.port_stock);

        for &oi in &self.day_index[day as usize] {
            let order = self.orders[oi as usize];
            self.state.order_cursor = oi + 1;
            let u = order.origin.idx();
            if order.quantity > self.state.yesterday_stock[u] {
                // Whole order fails; stock is untouched.
                Arc::make_mut(&mut self.state.history).record_shortage(u, day, order.quantity);
            } else {
                self.state.yesterday_stock[u] -= order.quantity;
                self.state.port_stock[u] -= order.quantity;
                self.state.laden_yard[u].push(YardGroup {
                    received_day: day,
                    dest: order.dest,
                    count: order.quantity,
                });
            }
        }

        // Returns due today enter stock now; demand cannot see them until
        // tomorrow because it reads yesterday_stock.
        let mut kept = Vec::with_capacity(self.state.pending_returns.len());
        for &(due, port, count) in &self.state.pending_returns {
            if due <= day {
                self.state.port_stock[port.idx()] += count;
            } else {
                kept.push((due, port, count));
            }
        }
        self.state.pending_returns = kept;

        self.state.today_events = self.world.timetable.by_day[day as usize].clone();
        self.state.today_cursor = 0;
    }

    /// Runs whole days until the next arrival or the end of the episode.
    pub fn advance_until_event(&mut self) -> Result<Step, EngineError> {
        if self.state.awaiting_action {
            return Err(EngineError::PendingEvent);
        }
        if self.state.done {
            return Ok(Step::End);
        }
        loop {
            if self.state.today_cursor < self.state.today_events.len() {
                let event = self.state.today_events[self.state.today_cursor];
                self.state.awaiting_action = true;
                return Ok(Step::Event(event));
            }
            let history = Arc::make_mut(&mut self.state.history);
            history.record_eod_stock(&self.state.port_stock);
            self.state.day += 1;
            if self.state.day >= self.world.config.episode_days {
                self.state.done = true;
                return Ok(Step::End);
            }
            self.begin_day();
        }
    }

    /// The event currently awaiting an action, if any.
    pub fn pending_event(&self) -> Option<ArrivalEvent> {
        self.state
            .awaiting_action
            .then(|| self.state.today_events[self.state.today_cursor])
    }

    /// Applies the 4-stage port call for the pending event.
    pub fn execute_action(&mut self, event: ArrivalEvent, a: f64) -> Result<ActionOutcome, EngineError> {
        if !self.state.awaiting_action {
            return Err(EngineError::NoPendingEvent);
        }
        if self.state.today_events[self.state.today_cursor] != event {
            return Err(EngineError::StaleEvent);
        }
        if !a.is_finite() || !(-1.0..=1.0).contains(&a) {
            return Err(EngineError::ActionOutOfRange(a));
        }

        let p = event.port;
        let v = event.vessel;
        let cap = self.world.config.vessels[v.idx()].capacity;
        let day = self.state.day;
        let t_ret = self.world.config.t_ret;
        let mut outcome = ActionOutcome::default();

        // Stage 1: discharge all ladens destined here.
        let ladens = &mut self.state.vessel_ladens[v.idx()];
        if let Some(pos) = ladens.iter().position(|&(d, _)| d == p) {
            let (_, n) = ladens.remove(pos);
            outcome.discharged_laden = n;
            if t_ret == 0 {
                self.state.port_stock[p.idx()] += n;
            } else {
                self.state.pending_returns.push((day + t_ret, p, n));
            }
        }

        // Stage 2: discharge empties.
        if a < 0.0 {
            let empties = self.state.vessel_empties[v.idx()];
            let d = ((-a) * empties as f64).round() as i64;
            let d = d.clamp(0, empties);
            outcome.discharged_empty = d;
            self.state.vessel_empties[v.idx()] -= d;
            self.state.port_stock[p.idx()] += d;
        }

        // Stage 3: load route-bound yard ladens, FIFO by received day,
        // splitting groups when space runs short.
        let route = self.world.vessel_route(v);
        let route_ports = &self.world.topology.route_ports[route.idx()];
        let ladens_total: i64 = self.state.vessel_ladens[v.idx()].iter().map(|&(_, n)| n).sum();
        let mut free = cap - self.state.vessel_empties[v.idx()] - ladens_total;
        debug_assert!(free >= 0);
        let yard = &mut self.state.laden_yard[p.idx()];
        for group in yard.iter_mut() {
            if free == 0 {
                break;
            }
            if group.dest == p || !route_ports.contains(&group.dest) {
                continue;
            }
            let take = group.count.min(free);
            group.count -= take;
            free -= take;
            outcome.loaded_laden += take;
            merge_laden(&mut self.state.vessel_ladens[v.idx()], group.dest, take);
        }
        yard.retain(|g| g.count > 0);

        // Stage 4: load empties.
        if a > 0.0 {
            let ladens_total: i64 = self.state.vessel_ladens[v.idx()].iter().map(|&(_, n)| n).sum();
            let free = cap - self.state.vessel_empties[v.idx()] - ladens_total;
            let basis = free.min(self.state.port_stock[p.idx()]);
            let l = (a * basis as f64).round() as i64;
            let l = l.clamp(0, basis);
            outcome.loaded_empty = l;
            self.state.vessel_empties[v.idx()] += l;
            self.state.port_stock[p.idx()] -= l;
        }

        debug_assert!({
            let lt: i64 = self.state.vessel_ladens[v.idx()].iter().map(|&(_, n)| n).sum();
            self.state.vessel_empties[v.idx()] >= 0
                && lt >= 0
                && self.state.vessel_empties[v.idx()] + lt <= cap
        });

        self.state.vessel_next_event[v.idx()] = event.event_index + 1;
        self.state.today_cursor += 1;
        self.state.awaiting_action = false;
        Ok(outcome)
    }

    /// Captures the pending event's snapshot (must be called while an event
    /// awaits its action).
    pub fn snapshot(&self) -> Snapshot {
        Snapshot { event: self.pending_event(), state: self.state.clone() }
    }

    /// End-of-episode view for terminal delayed rewards.
    pub fn final_snapshot(&self) -> Snapshot {
        Snapshot { event: None, state: self.state.clone() }
    }

    /// Stage bases a policy needs to hit an exact integral move:
    /// `discharge` is the stage-2 basis (empties aboard), `load` the stage-4
    /// basis assuming `a >= 0` (free slots after laden exchange, capped by
    /// port stock).
    pub fn action_bases(&self, event: ArrivalEvent) -> ActionBases {
        let v = event.vessel;
        let p = event.port;
        let cap = self.world.config.vessels[v.idx()].capacity;
        let empties = self.state.vessel_empties[v.idx()];
        let ladens_aboard: i64 = self.state.vessel_ladens[v.idx()].iter().map(|&(_, n)| n).sum();
        let to_here: i64 = self
            .state
            .vessel_ladens[v.idx()]
            .iter()
            .filter(|&&(d, _)| d == p)
            .map(|&(_, n)| n)
            .sum();
        let after1 = ladens_aboard - to_here;
        let route = self.world.vessel_route(v);
        let route_ports = &self.world.topology.route_ports[route.idx()];
        let eligible: i64 = self
            .state
            .laden_yard[p.idx()]
            .iter()
            .filter(|g| g.dest != p && route_ports.contains(&g.dest))
            .map(|g| g.count)
            .sum();
        let free_after1 = cap - empties - after1;
        let stage3 = eligible.min(free_after1.max(0));
        let free_after3 = free_after1 - stage3;
        ActionBases {
            discharge: empties,
            load: free_after3.max(0).min(self.state.port_stock[p.idx()]),
        }
    }

    /// Where every container currently is.
    pub fn container_census(&self) -> Census {
        let s = &self.state;
        Census {
            in_ports: s.port_stock.iter().sum(),
            on_vessels_empty: s.vessel_empties.iter().sum(),
            on_vessels_laden: s
                .vessel_ladens
                .iter()
                .map(|v| v.iter().map(|&(_, n)| n).sum::<i64>())
                .sum(),
            in_yards: s
                .laden_yard
                .iter()
                .map(|y| y.iter().map(|g| g.count).sum::<i64>())
                .sum(),
            in_returns: s.pending_returns.iter().map(|&(_, _, n)| n).sum(),
        }
    }

    /// Total shortage recorded so far.
    pub fn total_shortage(&self) -> i64 {
        (0..self.world.num_ports())
            .map(|p| self.state.history.cum_shortage_through(PortId(p as u16), self.state.day))
            .sum()
    }
}

/// Per-port and aggregate tallies of one simulated episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeCounters {
    /// Containers ordered at each origin within the horizon.
    pub ordered: Vec<i64>,
    /// Containers that failed (shortage ledger) per port.
    pub failed: Vec<i64>,
    pub imported_laden: Vec<i64>,
    pub imported_empty: Vec<i64>,
    pub exported_laden: Vec<i64>,
    pub exported_empty: Vec<i64>,
}

impl EpisodeCounters {
    pub fn total_ordered(&self) -> i64 {
        self.ordered.iter().sum()
    }

    pub fn total_failed(&self) -> i64 {
        self.failed.iter().sum()
    }

    /// Fulfilled containers over ordered containers; 1 by convention when
    /// nothing was ordered.
    pub fn fulfillment_ratio(&self) -> f64 {
        let ordered = self.total_ordered();
        if ordered == 0 {
            1.0
        } else {
            (ordered - self.total_failed()) as f64 / ordered as f64
        }
    }
}

/// Drives one full episode, asking `act` for every arrival event.
/// `log` receives one line per event: day, vessel, port, action, the four
/// outcome counts, then post-event port stock and vessel empties/ladens.
pub fn run_episode_with<F>(
    world: &Arc<World>,
    orders: &Arc<Vec<Order>>,
    mut act: F,
    mut log: Option<&mut String>,
) -> Result<EpisodeCounters, EngineError>
where
    F: FnMut(&Env, ArrivalEvent) -> f64,
{
    let mut env = Env::new(world.clone(), orders.clone());
    let n = world.num_ports();
    let mut counters = EpisodeCounters {
        ordered: vec![0; n],
        failed: vec![0; n],
        imported_laden: vec![0; n],
        imported_empty: vec![0; n],
        exported_laden: vec![0; n],
        exported_empty: vec![0; n],
    };
    for o in orders.iter() {
        if o.day < world.config.episode_days {
            counters.ordered[o.origin.idx()] += o.quantity;
        }
    }
    loop {
        match env.advance_until_event()? {
            Step::Event(event) => {
                let a = act(&env, event);
                let out = env.execute_action(event, a)?;
                let p = event.port.idx();
                counters.imported_laden[p] += out.discharged_laden;
                counters.imported_empty[p] += out.discharged_empty;
                counters.exported_laden[p] += out.loaded_laden;
                counters.exported_empty[p] += out.loaded_empty;
                if let Some(log) = log.as_deref_mut() {
                    let v = event.vessel;
                    let ladens: i64 =
                        env.state.vessel_ladens[v.idx()].iter().map(|&(_, c)| c).sum();
                    log.push_str(&format!(
                        "{} {} {} {:.6} {} {} {} {} {} {} {}\n",
                        event.day,
                        world.config.vessel_code(v),
                        world.config.port_code(event.port),
                        a,
                        out.discharged_laden,
                        out.discharged_empty,
                        out.loaded_laden,
                        out.loaded_empty,
                        env.state.port_stock[p],
                        env.state.vessel_empties[v.idx()],
                        ladens,
                    ));
                }
            }
            Step::End => break,
        }
    }
    for p in 0..n {
        counters.failed[p] = env
            .state
            .history
            .cum_shortage_through(PortId(p as u16), world.config.episode_days);
    }
    Ok(counters)
}

/// Bases for converting integral plans into fractional actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionBases {
    pub discharge: i64,
    pub load: i64,
}

/// Fractional action that makes the engine's rounding reproduce the integral
/// move `x` exactly when feasible, saturating at the bounds otherwise.
pub fn action_for_move(x: i64, bases: ActionBases) -> f64 {
    if x > 0 {
        if bases.load <= 0 {
            1.0
        } else {
            (x as f64 / bases.load as f64).clamp(0.0, 1.0)
        }
    } else if x < 0 {
        if bases.discharge <= 0 {
            -1.0
        } else {
            (-(-x as f64) / bases.discharge as f64).clamp(-1.0, 1.0)
        }
    } else {
        0.0
    }
}

fn merge_laden(ladens: &mut Vec<(PortId, i64)>, dest: PortId, count: i64) {
    match ladens.binary_search_by_key(&dest, |&(d, _)| d) {
        Ok(i) => ladens[i].1 += count,
        Err(i) => ladens.insert(i, (dest, count)),
    }
}
