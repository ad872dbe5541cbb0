//! Static network topology: ports, cyclic routes with transit-day schedules,
//! vessels, and the deterministic event timetable derived from them.
//!
//! Scenario file grammar (UTF-8, line oriented, `#` starts a comment,
//! fields separated by whitespace):
//!
//! ```text
//! [general]
//! total_containers 3000
//! episode_days 400
//! t_ret 1
//! container_scale 1.0
//! vessel_capacity 200
//! quantity_dispersion 3.0
//!
//! [ports]
//! # code region initial_empty [dest:rate ...]
//! SKZ Shekou 152 TKY:2.4 KOY:2.2
//!
//! [routes]
//! # id cycle_days vessel_count stop:offset [stop:offset ...]
//! R4 19 3 TKY:0 KOY:2 KHH:5
//!
//! [vessels]            # optional; omitted vessels are generated per route
//! # id route_id capacity start_offset_days
//! R4-01 R4 200 0
//! ```
//!
//! When a route has no explicit `[vessels]` lines, `vessel_count` vessels are
//! generated with capacity `vessel_capacity` and start offsets
//! `floor(i * cycle_days / vessel_count)`, spacing them uniformly along the
//! cycle.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index of a port in [`ScenarioConfig::ports`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PortId(pub u16);

/// Index of a route in [`ScenarioConfig::routes`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RouteId(pub u16);

/// Index of a vessel in [`ScenarioConfig::vessels`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VesselId(pub u16);

impl PortId {
    #[inline]
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}
impl RouteId {
    #[inline]
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}
impl VesselId {
    #[inline]
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

/// A terminal that stores empty containers and originates orders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortSpec {
    pub code: String,
    pub region: String,
    /// Empties in stock at day 0, before `container_scale` is applied.
    pub initial_empty: i64,
    /// Mean order-containers per day originating here, keyed by destination.
    pub demand_rate: Vec<(PortId, f64)>,
}

/// A cyclic service loop. `stops` holds (port, cumulative transit day from
/// the first stop); the first offset is 0 and the last is < `cycle_days`.
/// A port may appear more than once per cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteSpec {
    pub id: String,
    pub stops: Vec<(PortId, u32)>,
    pub cycle_days: u32,
    pub vessel_count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VesselSpec {
    pub id: String,
    pub route: RouteId,
    /// Total slots shared by laden and empty containers.
    pub capacity: i64,
    /// Phase along the route cycle at day 0; arrivals happen at
    /// `start_offset_days + stop_offset + k * cycle_days`.
    pub start_offset_days: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub ports: Vec<PortSpec>,
    pub routes: Vec<RouteSpec>,
    pub vessels: Vec<VesselSpec>,
    pub total_containers: i64,
    pub episode_days: u32,
    /// Days between a laden discharge and the empties returning to stock.
    pub t_ret: u32,
    /// Multiplier on every port's `initial_empty` (0.8 / 1.0 / 1.5 runs).
    pub container_scale: f64,
    /// Mean extra containers per order beyond the first (geometric law).
    pub quantity_dispersion: f64,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("line {line}: syntax error: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

impl ScenarioConfig {
    pub fn port_index(&self, code: &str) -> Option<PortId> {
        self.ports
            .iter()
            .position(|p| p.code == code)
            .map(|i| PortId(i as u16))
    }

    pub fn route_index(&self, id: &str) -> Option<RouteId> {
        self.routes
            .iter()
            .position(|r| r.id == id)
            .map(|i| RouteId(i as u16))
    }

    pub fn port_code(&self, p: PortId) -> &str {
        &self.ports[p.idx()].code
    }

    pub fn vessel_code(&self, v: VesselId) -> &str {
        &self.vessels[v.idx()].id
    }

    /// Effective total after applying `container_scale`.
    pub fn effective_total(&self) -> i64 {
        (self.total_containers as f64 * self.container_scale).round() as i64
    }

    /// Per-port initial stocks scaled by `container_scale`, apportioned by
    /// largest remainder so the sum equals [`Self::effective_total`].
    pub fn effective_initial_empties(&self) -> Vec<i64> {
        let targets: Vec<f64> = self
            .ports
            .iter()
            .map(|p| p.initial_empty as f64 * self.container_scale)
            .collect();
        largest_remainder(&targets, self.effective_total())
    }

    /// Returns a fully validated copy or the first violated invariant.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let mut codes = BTreeSet::new();
        for p in &self.ports {
            if !codes.insert(p.code.clone()) {
                return Err(ScenarioError::Invalid(format!("duplicate port code {}", p.code)));
            }
            if p.initial_empty < 0 {
                return Err(ScenarioError::Invalid(format!(
                    "port {}: negative initial_empty",
                    p.code
                )));
            }
            for &(dest, rate) in &p.demand_rate {
                if dest.idx() >= self.ports.len() {
                    return Err(ScenarioError::Invalid(format!(
                        "port {}: unknown demand destination",
                        p.code
                    )));
                }
                if rate < 0.0 {
                    return Err(ScenarioError::Invalid(format!(
                        "port {}: negative demand rate",
                        p.code
                    )));
                }
            }
        }
        let mut route_ids = BTreeSet::new();
        for r in &self.routes {
            if !route_ids.insert(r.id.clone()) {
                return Err(ScenarioError::Invalid(format!("duplicate route id {}", r.id)));
            }
            if r.stops.is_empty() {
                return Err(ScenarioError::Invalid(format!("route {}: no stops", r.id)));
            }
            if r.stops[0].1 != 0 {
                return Err(ScenarioError::Invalid(format!(
                    "route {}: first stop must have offset 0",
                    r.id
                )));
            }
            for w in r.stops.windows(2) {
                if w[1].1 <= w[0].1 {
                    return Err(ScenarioError::Invalid(format!(
                        "route {}: non-increasing transit day ({} then {})",
                        r.id, w[0].1, w[1].1
                    )));
                }
            }
            let last = r.stops.last().unwrap().1;
            if last >= r.cycle_days {
                return Err(ScenarioError::Invalid(format!(
                    "route {}: last stop offset {} must be < cycle_days {}",
                    r.id, last, r.cycle_days
                )));
            }
            for &(p, _) in &r.stops {
                if p.idx() >= self.ports.len() {
                    return Err(ScenarioError::Invalid(format!("route {}: unknown port", r.id)));
                }
            }
        }
        // Demand destinations must share a route with the origin.
        let topo = Topology::new(self);
        for (i, p) in self.ports.iter().enumerate() {
            let origin = PortId(i as u16);
            for &(dest, rate) in &p.demand_rate {
                if dest == origin {
                    return Err(ScenarioError::Invalid(format!(
                        "port {}: demand destination equals the origin",
                        p.code
                    )));
                }
                if rate > 0.0 && !topo.share_route(origin, dest) {
                    return Err(ScenarioError::Invalid(format!(
                        "port {}: demand destination {} shares no route",
                        p.code,
                        self.port_code(dest)
                    )));
                }
            }
        }
        let mut vessel_ids = BTreeSet::new();
        let mut per_route = vec![0u32; self.routes.len()];
        for v in &self.vessels {
            if !vessel_ids.insert(v.id.clone()) {
                return Err(ScenarioError::Invalid(format!("duplicate vessel id {}", v.id)));
            }
            if v.route.idx() >= self.routes.len() {
                return Err(ScenarioError::Invalid(format!("vessel {}: unknown route", v.id)));
            }
            if v.capacity <= 0 {
                return Err(ScenarioError::Invalid(format!(
                    "vessel {}: capacity must be > 0",
                    v.id
                )));
            }
            let cycle = self.routes[v.route.idx()].cycle_days;
            if v.start_offset_days >= cycle {
                return Err(ScenarioError::Invalid(format!(
                    "vessel {}: start offset {} not below cycle {}",
                    v.id, v.start_offset_days, cycle
                )));
            }
            per_route[v.route.idx()] += 1;
        }
        for (r, spec) in self.routes.iter().enumerate() {
            if per_route[r] != spec.vessel_count {
                return Err(ScenarioError::Invalid(format!(
                    "route {}: vessel_count {} but {} vessels defined",
                    spec.id, spec.vessel_count, per_route[r]
                )));
            }
        }
        let sum: i64 = self.ports.iter().map(|p| p.initial_empty).sum();
        if sum != self.total_containers {
            return Err(ScenarioError::Invalid(format!(
                "container-sum mismatch: ports hold {} but total_containers is {}",
                sum, self.total_containers
            )));
        }
        if self.episode_days == 0 {
            return Err(ScenarioError::Invalid("episode_days must be >= 1".into()));
        }
        if self.container_scale <= 0.0 {
            return Err(ScenarioError::Invalid("container_scale must be > 0".into()));
        }
        if self.quantity_dispersion < 0.0 {
            return Err(ScenarioError::Invalid("quantity_dispersion must be >= 0".into()));
        }
        Ok(())
    }
}

/// Largest-remainder apportionment of `total` over fractional targets.
/// Ties go to the lower index.
fn largest_remainder(targets: &[f64], total: i64) -> Vec<i64> {
    let mut out: Vec<i64> = targets.iter().map(|t| t.floor() as i64).collect();
    let floored: i64 = out.iter().sum();
    let mut rema: Vec<(usize, f64)> = targets
        .iter()
        .enumerate()
        .map(|(i, t)| (i, t - t.floor()))
        .collect();
    rema.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut left = total - floored;
    for (i, _) in rema {
        if left <= 0 {
            break;
        }
        out[i] += 1;
        left -= 1;
    }
    // A strongly down-scaled total can undershoot the floors; trim from the
    // largest entries to keep the sum exact.
    let mut idx = 0;
    while left < 0 {
        let max = out
            .iter()
            .enumerate()
            .max_by_key(|(_, &v)| v)
            .map(|(i, _)| i)
            .unwrap_or(idx);
        if out[max] > 0 {
            out[max] -= 1;
            left += 1;
        }
        idx = (idx + 1) % targets.len().max(1);
    }
    out
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    None,
    General,
    Ports,
    Routes,
    Vessels,
}

struct RawRoute {
    id: String,
    cycle: u32,
    count: u32,
    stops: Vec<(String, u32)>,
    line: usize,
}

struct RawVessel {
    id: String,
    route: String,
    capacity: i64,
    offset: u32,
}

/// Parses and fully validates a scenario file.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    let mut section = Section::None;
    let mut general: HashMap<String, String> = HashMap::new();
    let mut ports: Vec<(String, String, i64, Vec<(String, f64)>)> = Vec::new();
    let mut routes: Vec<RawRoute> = Vec::new();
    let mut vessels: Vec<RawVessel> = Vec::new();

    let syntax = |line: usize, msg: &str| ScenarioError::Syntax { line, msg: msg.into() };

    for (ln, raw) in text.lines().enumerate() {
        let line_no = ln + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            section = match name {
                "general" => Section::General,
                "ports" => Section::Ports,
                "routes" => Section::Routes,
                "vessels" => Section::Vessels,
                other => return Err(syntax(line_no, &format!("unknown section [{other}]"))),
            };
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match section {
            Section::None => return Err(syntax(line_no, "data before any section header")),
            Section::General => {
                if fields.len() != 2 {
                    return Err(syntax(line_no, "expected: key value"));
                }
                general.insert(fields[0].to_string(), fields[1].to_string());
            }
            Section::Ports => {
                if fields.len() < 3 {
                    return Err(syntax(line_no, "expected: code region initial_empty [dest:rate ...]"));
                }
                let initial: i64 = fields[2]
                    .parse()
                    .map_err(|_| syntax(line_no, "initial_empty must be an integer"))?;
                let mut rates = Vec::new();
                for f in &fields[3..] {
                    let (dest, rate) = f
                        .split_once(':')
                        .ok_or_else(|| syntax(line_no, "demand entries are dest:rate"))?;
                    let rate: f64 = rate
                        .parse()
                        .map_err(|_| syntax(line_no, "demand rate must be a number"))?;
                    rates.push((dest.to_string(), rate));
                }
                ports.push((fields[0].to_string(), fields[1].to_string(), initial, rates));
            }
            Section::Routes => {
                if fields.len() < 4 {
                    return Err(syntax(line_no, "expected: id cycle_days vessel_count stop:offset ..."));
                }
                let cycle: u32 = fields[1]
                    .parse()
                    .map_err(|_| syntax(line_no, "cycle_days must be an integer"))?;
                let count: u32 = fields[2]
                    .parse()
                    .map_err(|_| syntax(line_no, "vessel_count must be an integer"))?;
                let mut stops = Vec::new();
                for f in &fields[3..] {
                    let (code, off) = f
                        .split_once(':')
                        .ok_or_else(|| syntax(line_no, "stops are code:offset"))?;
                    let off: u32 = off
                        .parse()
                        .map_err(|_| syntax(line_no, "stop offset must be an integer"))?;
                    stops.push((code.to_string(), off));
                }
                routes.push(RawRoute { id: fields[0].to_string(), cycle, count, stops, line: line_no });
            }
            Section::Vessels => {
                if fields.len() != 4 {
                    return Err(syntax(line_no, "expected: id route_id capacity start_offset"));
                }
                vessels.push(RawVessel {
                    id: fields[0].to_string(),
                    route: fields[1].to_string(),
                    capacity: fields[2]
                        .parse()
                        .map_err(|_| syntax(line_no, "capacity must be an integer"))?,
                    offset: fields[3]
                        .parse()
                        .map_err(|_| syntax(line_no, "start_offset must be an integer"))?,
                });
            }
        }
    }

    let get_general = |key: &str, default: Option<&str>| -> Result<String, ScenarioError> {
        match (general.get(key), default) {
            (Some(v), _) => Ok(v.clone()),
            (None, Some(d)) => Ok(d.to_string()),
            (None, None) => Err(ScenarioError::Invalid(format!("[general] missing key {key}"))),
        }
    };
    let total_containers: i64 = get_general("total_containers", None)?
        .parse()
        .map_err(|_| ScenarioError::Invalid("total_containers must be an integer".into()))?;
    let episode_days: u32 = get_general("episode_days", None)?
        .parse()
        .map_err(|_| ScenarioError::Invalid("episode_days must be an integer".into()))?;
    let t_ret: u32 = get_general("t_ret", Some("1"))?
        .parse()
        .map_err(|_| ScenarioError::Invalid("t_ret must be an integer".into()))?;
    let container_scale: f64 = get_general("container_scale", Some("1.0"))?
        .parse()
        .map_err(|_| ScenarioError::Invalid("container_scale must be a number".into()))?;
    let vessel_capacity: i64 = get_general("vessel_capacity", Some("200"))?
        .parse()
        .map_err(|_| ScenarioError::Invalid("vessel_capacity must be an integer".into()))?;
    let quantity_dispersion: f64 = get_general("quantity_dispersion", Some("3.0"))?
        .parse()
        .map_err(|_| ScenarioError::Invalid("quantity_dispersion must be a number".into()))?;

    let port_specs: Vec<PortSpec> = ports
        .iter()
        .map(|(code, region, initial, _)| PortSpec {
            code: code.clone(),
            region: region.replace('_', " "),
            initial_empty: *initial,
            demand_rate: Vec::new(),
        })
        .collect();
    let mut config = ScenarioConfig {
        ports: port_specs,
        routes: Vec::new(),
        vessels: Vec::new(),
        total_containers,
        episode_days,
        t_ret,
        container_scale,
        quantity_dispersion,
    };

    for (i, (_, _, _, rates)) in ports.iter().enumerate() {
        let mut resolved = Vec::new();
        for (dest, rate) in rates {
            let id = config
                .port_index(dest)
                .ok_or_else(|| ScenarioError::Invalid(format!("unknown port {dest} in demand of {}", config.ports[i].code)))?;
            resolved.push((id, *rate));
        }
        resolved.sort_by_key(|&(d, _)| d);
        config.ports[i].demand_rate = resolved;
    }

    for r in &routes {
        let mut stops = Vec::new();
        for (code, off) in &r.stops {
            let id = config.port_index(code).ok_or_else(|| ScenarioError::Syntax {
                line: r.line,
                msg: format!("unknown port {code} on route {}", r.id),
            })?;
            stops.push((id, *off));
        }
        config.routes.push(RouteSpec {
            id: r.id.clone(),
            stops,
            cycle_days: r.cycle,
            vessel_count: r.count,
        });
    }

    // Explicit vessels first, then generated ones for routes with none.
    let mut explicit_routes: BTreeSet<String> = BTreeSet::new();
    for v in &vessels {
        explicit_routes.insert(v.route.clone());
    }
    for v in &vessels {
        let route = config
            .route_index(&v.route)
            .ok_or_else(|| ScenarioError::Invalid(format!("vessel {}: unknown route {}", v.id, v.route)))?;
        config.vessels.push(VesselSpec {
            id: v.id.clone(),
            route,
            capacity: v.capacity,
            start_offset_days: v.offset,
        });
    }
    for (ri, r) in config.routes.clone().iter().enumerate() {
        if explicit_routes.contains(&r.id) {
            continue;
        }
        for i in 0..r.vessel_count {
            config.vessels.push(VesselSpec {
                id: format!("{}-{:02}", r.id, i + 1),
                route: RouteId(ri as u16),
                capacity: vessel_capacity,
                start_offset_days: ((i as u64 * r.cycle_days as u64) / r.vessel_count as u64) as u32,
            });
        }
    }
    config.vessels.sort_by(|a, b| a.id.cmp(&b.id));

    config.validate()?;
    Ok(config)
}

/// The network shipped with the lab: 4 routes, 17 ports, 31 vessels,
/// 3000 containers over a 400-day episode.
pub fn builtin_scenario() -> ScenarioConfig {
    parse_scenario(BUILTIN_SCENARIO).expect("built-in scenario must parse")
}

/// Raw text of the built-in scenario (also checked in under `scenarios/`).
pub const BUILTIN_SCENARIO: &str = include_str!("../scenarios/builtin.ecr");

// ---------------------------------------------------------------------------
// Timetable
// ---------------------------------------------------------------------------

/// One scheduled vessel arrival; also the trigger event agents act on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrivalEvent {
    pub day: u32,
    pub port: PortId,
    pub vessel: VesselId,
    /// Per-vessel arrival counter (index into `vessel_events`).
    pub event_index: u32,
}

/// Deterministic event calendar derived from routes and vessel offsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timetable {
    /// Per vessel: (day, port), sorted by day.
    pub vessel_events: Vec<Vec<(u32, PortId)>>,
    /// Per port: (day, vessel), sorted by (day, vessel code).
    pub port_events: Vec<Vec<(u32, VesselId)>>,
    /// Per day: events sorted by (port code, vessel code).
    pub by_day: Vec<Vec<ArrivalEvent>>,
}

impl Timetable {
    /// Latest event day at `port` strictly before `day`.
    pub fn prev_port_event_day(&self, port: PortId, day: u32) -> Option<u32> {
        let ev = &self.port_events[port.idx()];
        let pos = ev.partition_point(|&(d, _)| d < day);
        (pos > 0).then(|| ev[pos - 1].0)
    }

    /// Latest event day of `vessel` strictly before `day`.
    pub fn prev_vessel_event_day(&self, vessel: VesselId, day: u32) -> Option<u32> {
        let ev = &self.vessel_events[vessel.idx()];
        let pos = ev.partition_point(|&(d, _)| d < day);
        (pos > 0).then(|| ev[pos - 1].0)
    }

    /// Position of an event in its port's event list.
    pub fn port_event_position(&self, port: PortId, day: u32, vessel: VesselId) -> Option<usize> {
        let ev = &self.port_events[port.idx()];
        let mut pos = ev.partition_point(|&(d, _)| d < day);
        while pos < ev.len() && ev[pos].0 == day {
            if ev[pos].1 == vessel {
                return Some(pos);
            }
            pos += 1;
        }
        None
    }

    pub fn total_events(&self) -> usize {
        self.vessel_events.iter().map(|v| v.len()).sum()
    }
}

/// Expands routes and vessel offsets into the full event calendar,
/// truncated at `episode_days`.
pub fn derive_timetable(config: &ScenarioConfig) -> Timetable {
    let mut vessel_events: Vec<Vec<(u32, PortId)>> = vec![Vec::new(); config.vessels.len()];
    for (vi, v) in config.vessels.iter().enumerate() {
        let route = &config.routes[v.route.idx()];
        let mut k = 0u32;
        'outer: loop {
            let base = v.start_offset_days as u64 + k as u64 * route.cycle_days as u64;
            if base >= config.episode_days as u64 {
                break;
            }
            for &(port, off) in &route.stops {
                let day = base + off as u64;
                if day >= config.episode_days as u64 {
                    if off == 0 {
                        break 'outer;
                    }
                    continue;
                }
                vessel_events[vi].push((day as u32, port));
            }
            k += 1;
        }
        vessel_events[vi].sort_by_key(|&(d, _)| d);
    }

    let mut port_events: Vec<Vec<(u32, VesselId)>> = vec![Vec::new(); config.ports.len()];
    let mut by_day: Vec<Vec<ArrivalEvent>> = vec![Vec::new(); config.episode_days as usize];
    for (vi, events) in vessel_events.iter().enumerate() {
        for (k, &(day, port)) in events.iter().enumerate() {
            port_events[port.idx()].push((day, VesselId(vi as u16)));
            by_day[day as usize].push(ArrivalEvent {
                day,
                port,
                vessel: VesselId(vi as u16),
                event_index: k as u32,
            });
        }
    }
    for (pi, ev) in port_events.iter_mut().enumerate() {
        let _ = pi;
        ev.sort_by(|a, b| (a.0, &config.vessels[a.1.idx()].id).cmp(&(b.0, &config.vessels[b.1.idx()].id)));
    }
    for day in by_day.iter_mut() {
        day.sort_by(|a, b| {
            (&config.ports[a.port.idx()].code, &config.vessels[a.vessel.idx()].id)
                .cmp(&(&config.ports[b.port.idx()].code, &config.vessels[b.vessel.idx()].id))
        });
    }
    Timetable { vessel_events, port_events, by_day }
}

// ---------------------------------------------------------------------------
// Topology
// ---------------------------------------------------------------------------

/// Derived route/port relations used by features and rewards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    /// Distinct ports per route.
    pub route_ports: Vec<Vec<PortId>>,
    /// Routes passing through each port (`Rt_i`).
    pub routes_through: Vec<Vec<RouteId>>,
    /// Routes sharing at least one port with the key route, excluding it
    /// (`Cr_q`).
    pub crossing_routes: Vec<Vec<RouteId>>,
    /// Ports on more than one route.
    pub transfer_port: Vec<bool>,
}

impl Topology {
    pub fn new(config: &ScenarioConfig) -> Self {
        let mut route_ports: Vec<Vec<PortId>> = Vec::with_capacity(config.routes.len());
        for r in &config.routes {
            let set: BTreeSet<PortId> = r.stops.iter().map(|&(p, _)| p).collect();
            route_ports.push(set.into_iter().collect());
        }
        let mut routes_through: Vec<Vec<RouteId>> = vec![Vec::new(); config.ports.len()];
        for (ri, ports) in route_ports.iter().enumerate() {
            for &p in ports {
                routes_through[p.idx()].push(RouteId(ri as u16));
            }
        }
        let mut crossing_routes: Vec<Vec<RouteId>> = vec![Vec::new(); config.routes.len()];
        for a in 0..config.routes.len() {
            for b in 0..config.routes.len() {
                if a == b {
                    continue;
                }
                let sb: BTreeSet<PortId> = route_ports[b].iter().copied().collect();
                if route_ports[a].iter().any(|p| sb.contains(p)) {
                    crossing_routes[a].push(RouteId(b as u16));
                }
            }
        }
        let transfer_port = routes_through.iter().map(|r| r.len() > 1).collect();
        Topology { route_ports, routes_through, crossing_routes, transfer_port }
    }

    pub fn share_route(&self, a: PortId, b: PortId) -> bool {
        self.routes_through[a.idx()]
            .iter()
            .any(|r| self.route_ports[r.idx()].contains(&b))
    }

    pub fn is_transfer(&self, p: PortId) -> bool {
        self.transfer_port[p.idx()]
    }
}
