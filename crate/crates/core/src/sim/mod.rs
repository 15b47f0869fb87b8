//! Time-stepped microscopic simulation of the lane-drop road.
//!
//! One tick runs: controller update, lane changes, speed update, position
//! update, zipper merges, exits, insertion. Vehicles are processed
//! downstream first.

mod lanes;
mod trajectory;

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{next_speed, required_gap, safe_speed, DriverParams};
use crate::metrics::VehicleRecord;
use crate::network::RoadNetwork;
use crate::policy::{
    measure_restricted_lane_speed, record_speed_sample, update_threshold, ControllerLogRow, ControllerState,
    PolicyKind, PolicySpec,
};
use crate::vehicle::VehicleClass;

use lanes::{ahead_of, LaneIndex};
pub use trajectory::{trajectory_rows, TrajectoryRow, TrajectoryWriter};

/// Who may enter the restricted lane.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccessRule {
    /// The configured policy decides; HDV violators ignore Plus thresholds.
    #[default]
    Policy,
    /// Buses and vehicles holding an access token.
    Token,
}

/// Where a new vehicle enters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryLane {
    /// The lane usable furthest downstream, then the one with the most room.
    #[default]
    Best,
    /// The lane with the most room.
    Free,
}

/// Lane-changing and merging behavior.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BehaviorParams {
    /// Distance before a lane end at which changing out becomes mandatory, m.
    pub lookahead: f64,
    /// Speed advantage needed for a discretionary change, m/s.
    pub hysteresis: f64,
    /// Range ahead used to judge a lane's speed, m.
    pub speed_window: f64,
    /// Length of the zipper zone before a lane drop, m.
    pub merge_zone: f64,
    /// Whether vehicles in the zipper zone make room for the merging lane.
    pub zipper: bool,
    /// Distance kept from a lane end when stopping, m.
    pub stop_margin: f64,
    pub entry_lane: EntryLane,
    /// Simulated seconds allowed after the last arrival before giving up.
    pub drain_limit: f64,
}

impl Default for BehaviorParams {
    fn default() -> Self {
        BehaviorParams {
            lookahead: 200.0,
            hysteresis: 2.0,
            speed_window: 100.0,
            merge_zone: 100.0,
            zipper: true,
            stop_margin: 0.5,
            entry_lane: EntryLane::Best,
            drain_limit: 86_400.0,
        }
    }
}

impl BehaviorParams {
    pub fn validate(&self) -> Result<()> {
        let non_negative = [
            ("lookahead", self.lookahead),
            ("hysteresis", self.hysteresis),
            ("speed_window", self.speed_window),
            ("merge_zone", self.merge_zone),
            ("stop_margin", self.stop_margin),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::validation(format!("behavior {name} must be a non-negative number")));
            }
        }
        if !(self.drain_limit > 0.0) {
            return Err(Error::validation("behavior drain_limit must be positive"));
        }
        Ok(())
    }
}

/// Everything that stays fixed during a run.
#[derive(Clone, Debug)]
pub struct SimContext {
    pub network: RoadNetwork,
    pub policy: PolicySpec,
    pub access: AccessRule,
    pub car: DriverParams<f64>,
    pub bus: DriverParams<f64>,
    pub behavior: BehaviorParams,
    /// Tick length, s.
    pub dt: f64,
}

impl SimContext {
    pub fn new(network: RoadNetwork, policy: PolicySpec) -> Self {
        SimContext {
            network,
            policy,
            access: AccessRule::Policy,
            car: DriverParams::car(),
            bus: DriverParams::bus(),
            behavior: BehaviorParams::default(),
            dt: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.policy.validate(self.network.speed_limit)?;
        self.car.validate()?;
        self.bus.validate()?;
        self.behavior.validate()?;
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::validation("dt must be positive"));
        }
        if self.policy.kind.is_dynamic() && self.network.restricted_zone().is_none() {
            return Err(Error::NoRestrictedLane);
        }
        Ok(())
    }

    pub fn params(&self, class: VehicleClass) -> &DriverParams<f64> {
        match class {
            VehicleClass::Bus => &self.bus,
            _ => &self.car,
        }
    }

    pub fn free_flow_time(&self) -> f64 {
        self.network.total_length / self.network.speed_limit
    }

    /// Whether the rule currently lets `v` into the restricted lane.
    pub fn admits(&self, controller: &ControllerState<f64>, v: &VehicleTraits) -> bool {
        match self.access {
            AccessRule::Policy => {
                self.policy.permits(controller, v.class, v.passengers)
                    || (v.violator && v.class == VehicleClass::Hdv && matches!(self.policy.kind, PolicyKind::Plus(_)))
            }
            AccessRule::Token => v.class == VehicleClass::Bus || v.token,
        }
    }
}

/// Fixed per-vehicle attributes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VehicleTraits {
    pub id: u64,
    pub class: VehicleClass,
    pub passengers: u32,
    pub depart_wanted: f64,
    /// Access token for token-based studies.
    pub token: bool,
    /// HDV that ignores occupancy rules.
    pub violator: bool,
}

impl VehicleTraits {
    pub fn new(id: u64, class: VehicleClass, passengers: u32, depart_wanted: f64) -> Self {
        VehicleTraits {
            id,
            class,
            passengers,
            depart_wanted,
            token: false,
            violator: false,
        }
    }
}

/// A vehicle on the road.
#[derive(Clone, Debug, PartialEq)]
pub struct VehicleState {
    pub id: u64,
    pub traits: VehicleTraits,
    /// Absolute lane index.
    pub lane: usize,
    /// Front bumper position, m.
    pub position: f64,
    pub speed: f64,
    pub depart_actual: f64,
    /// Entered the restricted lane while admitted; kept until leaving it.
    pub pass: bool,
    length: f64,
}

/// A place where vehicles in one lane have to move over to a neighbor: a lane
/// drop, or the start of the restricted lane for vehicles not admitted.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MergePoint {
    pub position: f64,
    pub merging: usize,
    pub target: usize,
    /// Applies only to vehicles without access to the restricted lane.
    pub restricted: bool,
}

/// Merge points of `network`, upstream first.
pub fn merge_points(network: &RoadNetwork) -> Vec<MergePoint> {
    let mut out: Vec<MergePoint> = network
        .drops()
        .iter()
        .map(|d| MergePoint {
            position: d.position,
            merging: d.zipper.0,
            target: d.zipper.1,
            restricted: false,
        })
        .collect();
    if let Some(z) = network.restricted_zone() {
        let inward = if z.lane == 0 || !network.lane_exists(z.lane - 1, z.start) {
            z.lane + 1
        } else {
            z.lane - 1
        };
        if network.lane_exists(inward, z.start) {
            out.push(MergePoint {
                position: z.start,
                merging: z.lane,
                target: inward,
                restricted: true,
            });
        }
    }
    out.sort_by(|a, b| a.position.total_cmp(&b.position));
    out
}

/// Hook called after every tick.
pub trait TickObserver {
    fn observe(&mut self, world: &WorldState, ctx: &SimContext) -> Result<()>;
}

/// Mutable simulation state.
#[derive(Clone, Debug)]
pub struct WorldState {
    clock: f64,
    tick: u64,
    vehicles: Vec<VehicleState>,
    upcoming: VecDeque<VehicleTraits>,
    queue: VecDeque<VehicleTraits>,
    rng: ChaCha8Rng,
    controller: ControllerState<f64>,
    controller_log: Vec<ControllerLogRow>,
    completed: Vec<VehicleRecord<f64>>,
    generated: u64,
    exited: u64,
    last_arrival: f64,
    index: LaneIndex,
    order: Vec<usize>,
    admitted: Vec<bool>,
    new_speed: Vec<f64>,
    old_position: Vec<f64>,
    points: Vec<MergePoint>,
}

/// Result of one insertion attempt.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InsertOutcome {
    Inserted { id: u64, lane: usize, position: f64 },
    Blocked,
    Empty,
}

impl WorldState {
    /// A world starting at `start` with `arrivals` sorted by wanted departure.
    pub fn new(ctx: &SimContext, mut arrivals: Vec<VehicleTraits>, start: f64, rng: ChaCha8Rng) -> Self {
        arrivals.sort_by(|a, b| a.depart_wanted.total_cmp(&b.depart_wanted).then(a.id.cmp(&b.id)));
        let last_arrival = arrivals.last().map_or(start, |a| a.depart_wanted);
        WorldState {
            clock: start,
            tick: 0,
            vehicles: Vec::new(),
            upcoming: arrivals.into(),
            queue: VecDeque::new(),
            rng,
            controller: ControllerState::new(ctx.policy.initial_threshold, start),
            controller_log: Vec::new(),
            completed: Vec::new(),
            generated: 0,
            exited: 0,
            last_arrival,
            index: LaneIndex::default(),
            order: Vec::new(),
            admitted: Vec::new(),
            new_speed: Vec::new(),
            old_position: Vec::new(),
            points: Vec::new(),
        }
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn vehicles(&self) -> &[VehicleState] {
        &self.vehicles
    }

    pub fn queued(&self) -> usize {
        self.queue.len()
    }

    /// Vehicles whose wanted departure has passed.
    pub fn generated(&self) -> u64 {
        self.generated
    }

    pub fn exited(&self) -> u64 {
        self.exited
    }

    pub fn controller(&self) -> &ControllerState<f64> {
        &self.controller
    }

    pub fn controller_log(&self) -> &[ControllerLogRow] {
        &self.controller_log
    }

    pub fn completed(&self) -> &[VehicleRecord<f64>] {
        &self.completed
    }

    pub fn into_results(self) -> (Vec<VehicleRecord<f64>>, Vec<ControllerLogRow>) {
        (self.completed, self.controller_log)
    }

    /// No vehicle left to release, queue or drive.
    pub fn is_drained(&self) -> bool {
        self.upcoming.is_empty() && self.queue.is_empty() && self.vehicles.is_empty()
    }

    /// Puts a vehicle directly on the road, for fixtures.
    pub fn place_vehicle(&mut self, ctx: &SimContext, traits: VehicleTraits, lane: usize, position: f64, speed: f64) {
        self.generated += 1;
        let pass = ctx
            .network
            .restricted_zone()
            .is_some_and(|z| z.contains(lane, position) && ctx.admits(&self.controller, &traits));
        self.vehicles.push(VehicleState {
            id: traits.id,
            traits,
            lane,
            position,
            speed,
            depart_actual: self.clock,
            pass,
            length: ctx.params(traits.class).vehicle_length,
        });
    }

    fn refresh(&mut self, ctx: &SimContext) {
        self.index.rebuild(&self.vehicles, ctx.network.width());
        self.order.clear();
        self.order.extend(0..self.vehicles.len());
        let vs = &self.vehicles;
        self.order.sort_by(|&a, &b| ahead_of(&vs[a], &vs[b]));
        self.admitted.clear();
        self.admitted
            .extend(self.vehicles.iter().map(|v| ctx.admits(&self.controller, &v.traits)));
    }

    /// Advances the world by one tick.
    pub fn step(&mut self, ctx: &SimContext) -> Result<()> {
        if ctx.access == AccessRule::Policy && ctx.policy.kind.is_dynamic() {
            if let Some(row) = update_threshold(&mut self.controller, &ctx.policy, self.clock) {
                self.controller_log.push(row);
            }
            let speed = measure_restricted_lane_speed(self, &ctx.network)?;
            record_speed_sample(&mut self.controller, speed);
        }
        self.refresh(ctx);
        self.points.clear();
        self.points.extend(merge_points(&ctx.network));
        self.lane_change_phase(ctx);
        self.speed_phase(ctx);
        self.position_phase(ctx);
        self.index.rebuild(&self.vehicles, ctx.network.width());
        for k in 0..self.points.len() {
            let point = self.points[k];
            merge_arbitration(self, ctx, &point);
        }
        self.exit_phase(ctx);
        self.clock += ctx.dt;
        self.tick += 1;
        while self.upcoming.front().is_some_and(|a| a.depart_wanted <= self.clock) {
            let a = self.upcoming.pop_front().expect("front checked");
            self.queue.push_back(a);
            self.generated += 1;
        }
        while let InsertOutcome::Inserted { .. } = try_insert(self, ctx) {}
        Ok(())
    }

    fn lane_change_phase(&mut self, ctx: &SimContext) {
        for k in 0..self.order.len() {
            let i = self.order[k];
            if let Some(target) = lane_change_decision(self, ctx, i) {
                if gaps_ok(self, ctx, i, target) {
                    self.move_lane(ctx, i, target);
                }
            }
        }
    }

    fn move_lane(&mut self, ctx: &SimContext, i: usize, target: usize) {
        let from = self.vehicles[i].lane;
        self.index.remove(from, i);
        let zone = ctx.network.restricted_zone();
        let v = &mut self.vehicles[i];
        v.lane = target;
        v.pass = zone.is_some_and(|z| z.contains(target, v.position) && self.admitted[i]);
        self.index.insert(target, i, &self.vehicles);
    }

    fn speed_phase(&mut self, ctx: &SimContext) {
        let net = &ctx.network;
        let limit = net.speed_limit;
        let dt = ctx.dt;
        let b = &ctx.behavior;
        self.new_speed.clear();
        self.new_speed.resize(self.vehicles.len(), 0.0);
        for k in 0..self.order.len() {
            let i = self.order[k];
            let v = &self.vehicles[i];
            let p = ctx.params(v.traits.class);
            let mut safe = limit;
            let mut max_pos = f64::INFINITY;
            let (leader, _) = self.index.neighbors(v.lane, v.position, &self.vehicles, Some(i));
            if let Some(j) = leader {
                let l = &self.vehicles[j];
                let gap = l.position - l.length - v.position - p.min_gap;
                safe = safe.min(safe_speed(gap, l.speed, v.speed, p));
                max_pos = l.position + self.new_speed[j] * dt - l.length;
            }
            let end = net.usable_end(v.lane, v.position, v.pass || self.admitted[i]);
            if end.is_finite() {
                let gap = end - b.stop_margin - v.position;
                safe = safe.min(safe_speed(gap, 0.0, v.speed, p));
                max_pos = max_pos.min(end - 0.5 * b.stop_margin);
            }
            if b.zipper {
                if let Some(j) = self.zipper_leader(ctx, i) {
                    let l = &self.vehicles[j];
                    let gap = l.position - l.length - v.position - p.min_gap;
                    safe = safe.min(safe_speed(gap, l.speed, v.speed, p));
                }
            }
            let dawdle: f64 = self.rng.random();
            let mut s = next_speed(v.speed, safe, limit, dt, dawdle, p);
            if max_pos.is_finite() {
                s = s.min(((max_pos - v.position) / dt).max(0.0));
            }
            self.new_speed[i] = s.clamp(0.0, limit);
        }
    }

    /// Vehicle `i` treats as an extra leader in a zipper zone: for a merging
    /// vehicle, the nearest vehicle ahead in the target lane; in the target
    /// lane, the frontmost merging vehicle if there is still room to fall in
    /// behind it.
    fn zipper_leader(&self, ctx: &SimContext, i: usize) -> Option<usize> {
        let v = &self.vehicles[i];
        for point in &self.points {
            let zone_start = point.position - ctx.behavior.merge_zone;
            if !(zone_start <= v.position && v.position < point.position) {
                continue;
            }
            if v.lane == point.merging && self.must_merge(point, i) {
                return self.index.neighbors(point.target, v.position, &self.vehicles, Some(i)).0;
            }
            if v.lane == point.target {
                let head = self
                    .index
                    .lane(point.merging)
                    .iter()
                    .copied()
                    .find(|&j| self.vehicles[j].position < point.position && self.must_merge(point, j));
                let Some(head) = head else { continue };
                let h = &self.vehicles[head];
                let room = h.position - h.length - v.position - ctx.params(v.traits.class).min_gap;
                if h.position >= zone_start && room >= 0.0 {
                    return Some(head);
                }
            }
        }
        None
    }

    fn must_merge(&self, point: &MergePoint, i: usize) -> bool {
        !point.restricted || !(self.vehicles[i].pass || self.admitted[i])
    }

    fn position_phase(&mut self, ctx: &SimContext) {
        let zone = ctx.network.restricted_zone();
        self.old_position.clear();
        for (i, v) in self.vehicles.iter_mut().enumerate() {
            self.old_position.push(v.position);
            v.speed = self.new_speed[i];
            v.position += v.speed * ctx.dt;
            if let Some(z) = zone {
                if v.lane == z.lane && self.old_position[i] < z.start && v.position >= z.start {
                    v.pass = self.admitted[i];
                }
            }
        }
    }

    fn exit_phase(&mut self, ctx: &SimContext) {
        let total = ctx.network.total_length;
        let exit_lanes = ctx.network.exit_lanes();
        let free = ctx.free_flow_time();
        let t0 = self.clock;
        let dt = ctx.dt;
        let mut k = 0;
        let old = &self.old_position;
        let completed = &mut self.completed;
        let mut exited = 0;
        self.vehicles.retain(|v| {
            let prev = old[k];
            k += 1;
            if v.position < total || !exit_lanes.contains(&v.lane) {
                return true;
            }
            let frac = ((total - prev) / (v.position - prev)).clamp(0.0, 1.0);
            let exit = (t0 + frac * dt).max(v.depart_actual + free);
            completed.push(VehicleRecord {
                id: v.id,
                class: v.traits.class,
                passengers: v.traits.passengers,
                depart_wanted: v.traits.depart_wanted,
                depart_actual: Some(v.depart_actual),
                exit_time: Some(exit),
                free_flow_time: free,
            });
            exited += 1;
            false
        });
        self.exited += exited;
    }
}

/// Lane vehicle `i` wants to move to this tick, if any.
///
/// A change is mandatory within the lookahead distance of the point where
/// the current lane stops being usable. Otherwise an adjacent lane that stays
/// usable up to the final merge is taken when its speed ahead beats the
/// current lane by the hysteresis margin.
pub fn lane_change_decision(world: &WorldState, ctx: &SimContext, i: usize) -> Option<usize> {
    let net = &ctx.network;
    let b = &ctx.behavior;
    let v = &world.vehicles[i];
    let admitted = world.admitted.get(i).copied().unwrap_or(false);
    let zone = net.restricted_zone();
    let pos = v.position;
    let candidates = [v.lane.checked_add(1), v.lane.checked_sub(1)];
    let allowed = |lane: usize| {
        net.lane_exists(lane, pos) && !(zone.is_some_and(|z| z.contains(lane, pos)) && !admitted)
    };
    let end = net.usable_end(v.lane, pos, v.pass || admitted);
    if end - pos < b.lookahead {
        let mut best: Option<(usize, f64)> = None;
        for lane in candidates.into_iter().flatten().filter(|&l| allowed(l)) {
            let e = net.usable_end(lane, pos, admitted);
            if e > end && best.is_none_or(|(_, be)| e > be) {
                best = Some((lane, e));
            }
        }
        return best.map(|(l, _)| l);
    }
    let limit = net.speed_limit;
    let here = world
        .index
        .mean_speed_ahead(v.lane, pos, b.speed_window, &world.vehicles)
        .unwrap_or(limit);
    let mut best: Option<(usize, f64)> = None;
    for lane in candidates.into_iter().flatten().filter(|&l| allowed(l)) {
        let reach = net.usable_end(lane, pos, admitted);
        if reach - pos < b.lookahead || reach < net.merge_position {
            continue;
        }
        let s = world
            .index
            .mean_speed_ahead(lane, pos, b.speed_window, &world.vehicles)
            .unwrap_or(limit);
        if s >= here + b.hysteresis && best.is_none_or(|(_, bs)| s > bs) {
            best = Some((lane, s));
        }
    }
    best.map(|(l, _)| l)
}

/// Front and rear net gaps in `target` are both at least the minimum gap.
fn gaps_ok(world: &WorldState, ctx: &SimContext, i: usize, target: usize) -> bool {
    let v = &world.vehicles[i];
    let (leader, follower) = world.index.neighbors(target, v.position, &world.vehicles, Some(i));
    if let Some(j) = leader {
        let l = &world.vehicles[j];
        if l.position - l.length - v.position < ctx.params(v.traits.class).min_gap {
            return false;
        }
    }
    if let Some(j) = follower {
        let f = &world.vehicles[j];
        if v.position - v.length - f.position < ctx.params(f.traits.class).min_gap {
            return false;
        }
    }
    true
}

/// Moves vehicles that must leave the merging lane of `point` into the
/// target lane, front first, wherever both gaps are acceptable.
pub fn merge_arbitration(world: &mut WorldState, ctx: &SimContext, point: &MergePoint) {
    let zone_start = point.position - ctx.behavior.merge_zone;
    let candidates: Vec<usize> = world
        .index
        .lane(point.merging)
        .iter()
        .copied()
        .filter(|&j| {
            let p = world.vehicles[j].position;
            zone_start <= p && p < point.position && world.must_merge(point, j)
        })
        .collect();
    let zone = ctx.network.restricted_zone();
    for i in candidates {
        let pos = world.vehicles[i].position;
        if !ctx.network.lane_exists(point.target, pos) {
            continue;
        }
        if zone.is_some_and(|z| z.contains(point.target, pos)) && !world.admitted[i] {
            continue;
        }
        if gaps_ok(world, ctx, i, point.target) {
            world.move_lane(ctx, i, point.target);
        }
    }
}

/// Tries to put the head of the entry queue on the road.
///
/// The vehicle enters at the speed limit, as far downstream as it could have
/// travelled since it became due, and never closer to the last vehicle of its
/// lane than the safe following gap.
pub fn try_insert(world: &mut WorldState, ctx: &SimContext) -> InsertOutcome {
    let Some(&head) = world.queue.front() else {
        return InsertOutcome::Empty;
    };
    let net = &ctx.network;
    let v_ins = net.speed_limit;
    let params = ctx.params(head.class);
    let t = world.clock;
    let earliest = head.depart_wanted.max(t - ctx.dt);
    let reach = (t - earliest) * v_ins;
    let admitted = ctx.admits(&world.controller, &head);
    let zone = net.restricted_zone();
    let mut options: Vec<(usize, f64, f64)> = Vec::new();
    for lane in net.lane_range(0) {
        if zone.is_some_and(|z| z.contains(lane, 0.0)) && !admitted {
            continue;
        }
        let last = world
            .vehicles
            .iter()
            .filter(|v| v.lane == lane)
            .min_by(|a, b| a.position.total_cmp(&b.position));
        let room = match last {
            Some(l) => l.position - l.length - params.min_gap - required_gap(l.speed, v_ins, params),
            None => f64::INFINITY,
        };
        if room >= 0.0 {
            options.push((lane, room, net.usable_end(lane, 0.0, admitted)));
        }
    }
    let pick = match ctx.behavior.entry_lane {
        EntryLane::Best => options
            .iter()
            .max_by(|a, b| a.2.total_cmp(&b.2).then(a.1.total_cmp(&b.1)).then(a.0.cmp(&b.0))),
        EntryLane::Free => options
            .iter()
            .max_by(|a, b| a.1.total_cmp(&b.1).then(a.2.total_cmp(&b.2)).then(a.0.cmp(&b.0))),
    };
    let Some(&(lane, room, _)) = pick else {
        return InsertOutcome::Blocked;
    };
    let position = reach.min(room);
    world.queue.pop_front();
    let pass = zone.is_some_and(|z| z.contains(lane, position) && admitted);
    world.vehicles.push(VehicleState {
        id: head.id,
        traits: head,
        lane,
        position,
        speed: v_ins,
        depart_actual: (t - position / v_ins).max(head.depart_wanted),
        pass,
        length: params.vehicle_length,
    });
    InsertOutcome::Inserted {
        id: head.id,
        lane,
        position,
    }
}

/// Steps until every vehicle has left, notifying observers after each tick.
pub fn run(ctx: &SimContext, world: &mut WorldState, observers: &mut [&mut dyn TickObserver]) -> Result<()> {
    let limit = world.last_arrival + ctx.behavior.drain_limit;
    while !world.is_drained() {
        if world.clock > limit {
            return Err(Error::Stalled {
                limit_s: ctx.behavior.drain_limit,
            });
        }
        world.step(ctx)?;
        for o in observers.iter_mut() {
            o.observe(world, ctx)?;
        }
    }
    Ok(())
}
