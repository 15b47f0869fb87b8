//! Post-hoc safety and legality checks over trajectory rows.
//!
//! The auditor sees only what a trajectory log contains plus the vehicle
//! traits and the controller log, and re-derives permissions on its own.

use std::collections::{HashMap, HashSet};
use std::io::Read;

use crate::error::Result;
use crate::network::RoadNetwork;
use crate::policy::{ControllerLogRow, ControllerState, PolicyKind, PolicySpec};
use crate::sim::{AccessRule, SimContext, TickObserver, TrajectoryRow, VehicleTraits, WorldState};
use crate::vehicle::VehicleClass;

const EPS: f64 = 1e-9;
const MAX_MESSAGES: usize = 20;

/// Violation counts over a whole run.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AuditReport {
    pub ticks: u64,
    pub rows: u64,
    /// Vehicles overlapping the one ahead in the same lane.
    pub gap_violations: u64,
    pub speed_violations: u64,
    /// Entries into the restricted lane by vehicles not permitted at that tick.
    pub legality_violations: u64,
    pub conservation_violations: u64,
    pub messages: Vec<String>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.gap_violations == 0
            && self.speed_violations == 0
            && self.legality_violations == 0
            && self.conservation_violations == 0
    }

    fn note(&mut self, msg: String) {
        if self.messages.len() < MAX_MESSAGES {
            self.messages.push(msg);
        }
    }
}

/// Queue and exit counters of the world after a tick.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TickCounts {
    pub generated: u64,
    pub queued: u64,
    pub exited: u64,
}

pub struct Auditor {
    network: RoadNetwork,
    policy: PolicySpec,
    access: AccessRule,
    car_length: f64,
    bus_length: f64,
    start: f64,
    dt: f64,
    traits: HashMap<u64, VehicleTraits>,
    timeline: Vec<(f64, u8)>,
    in_zone: HashSet<u64>,
    present: HashSet<u64>,
    gone: HashSet<u64>,
    report: AuditReport,
}

impl Auditor {
    pub fn new(ctx: &SimContext, traits: &[VehicleTraits], start: f64) -> Self {
        Auditor {
            network: ctx.network.clone(),
            policy: ctx.policy,
            access: ctx.access,
            car_length: ctx.car.vehicle_length,
            bus_length: ctx.bus.vehicle_length,
            start,
            dt: ctx.dt,
            traits: traits.iter().map(|t| (t.id, *t)).collect(),
            timeline: Vec::new(),
            in_zone: HashSet::new(),
            present: HashSet::new(),
            gone: HashSet::new(),
            report: AuditReport::default(),
        }
    }

    /// Appends controller log rows; each row's threshold holds from its
    /// interval end onward.
    pub fn extend_controller_log(&mut self, rows: &[ControllerLogRow]) {
        self.timeline
            .extend(rows.iter().map(|r| (r.interval_end_s, r.threshold_after)));
    }

    fn threshold_at(&self, t: f64) -> u8 {
        let k = self.timeline.partition_point(|&(end, _)| end <= t + EPS);
        if k == 0 {
            self.policy.initial_threshold
        } else {
            self.timeline[k - 1].1
        }
    }

    fn permitted(&self, t: &VehicleTraits, tick: u64) -> bool {
        match self.access {
            AccessRule::Token => t.class == VehicleClass::Bus || t.token,
            AccessRule::Policy => {
                let decided_at = self.start + (tick.saturating_sub(1)) as f64 * self.dt;
                let state = ControllerState::new(self.threshold_at(decided_at), 0.0);
                self.policy.permits(&state, t.class, t.passengers)
                    || (t.violator && t.class == VehicleClass::Hdv && matches!(self.policy.kind, PolicyKind::Plus(_)))
            }
        }
    }

    fn length(&self, id: u64) -> f64 {
        match self.traits.get(&id).map(|t| t.class) {
            Some(VehicleClass::Bus) => self.bus_length,
            _ => self.car_length,
        }
    }

    /// Checks the rows of one tick. `counts` enables the queue balance check.
    pub fn check_tick(&mut self, tick: u64, rows: &[TrajectoryRow], counts: Option<TickCounts>) {
        self.report.ticks += 1;
        self.report.rows += rows.len() as u64;
        let limit = self.network.speed_limit;
        let zone = self.network.restricted_zone();
        let mut lanes: HashMap<usize, Vec<(f64, u64)>> = HashMap::new();
        let mut now = HashSet::with_capacity(rows.len());
        let mut in_zone = HashSet::new();

        for r in rows {
            if !now.insert(r.vehicle_id) || self.gone.contains(&r.vehicle_id) || !self.traits.contains_key(&r.vehicle_id) {
                self.report.conservation_violations += 1;
                self.report.note(format!("tick {tick}: vehicle {} duplicated or resurrected", r.vehicle_id));
            }
            if !(r.speed.is_finite() && r.speed >= -EPS && r.speed <= limit + EPS) {
                self.report.speed_violations += 1;
                self.report.note(format!("tick {tick}: vehicle {} speed {}", r.vehicle_id, r.speed));
            }
            let Some(seg) = self.network.segment_index_at(r.position) else {
                self.report.conservation_violations += 1;
                self.report.note(format!("tick {tick}: vehicle {} off the road at {}", r.vehicle_id, r.position));
                continue;
            };
            let lane = self.network.absolute_lane(seg, r.lane);
            lanes.entry(lane).or_default().push((r.position, r.vehicle_id));
            if zone.is_some_and(|z| z.contains(lane, r.position)) {
                in_zone.insert(r.vehicle_id);
                if !self.in_zone.contains(&r.vehicle_id) {
                    let ok = self.traits.get(&r.vehicle_id).is_some_and(|t| self.permitted(t, tick));
                    if !ok {
                        self.report.legality_violations += 1;
                        self.report.note(format!("tick {tick}: vehicle {} entered the restricted lane", r.vehicle_id));
                    }
                }
            }
        }

        for (lane, mut list) in lanes {
            list.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            for w in list.windows(2) {
                let ((lead_pos, lead), (pos, id)) = (w[0], w[1]);
                if lead_pos - self.length(lead) - pos < -EPS {
                    self.report.gap_violations += 1;
                    self.report.note(format!("tick {tick}: vehicle {id} overlaps {lead} in lane {lane}"));
                }
            }
        }

        for id in self.present.difference(&now) {
            self.gone.insert(*id);
        }
        if let Some(c) = counts {
            if c.generated != c.queued + rows.len() as u64 + c.exited || c.exited != self.gone.len() as u64 {
                self.report.conservation_violations += 1;
                self.report.note(format!(
                    "tick {tick}: generated {} != queued {} + on road {} + exited {}",
                    c.generated,
                    c.queued,
                    rows.len(),
                    c.exited
                ));
            }
        }
        self.present = now;
        self.in_zone = in_zone;
    }

    pub fn finish(self) -> AuditReport {
        self.report
    }
}

impl TickObserver for Auditor {
    fn observe(&mut self, world: &WorldState, ctx: &SimContext) -> Result<()> {
        let log = world.controller_log();
        if log.len() > self.timeline.len() {
            let from = self.timeline.len();
            self.extend_controller_log(&log[from..]);
        }
        let rows = crate::sim::trajectory_rows(world, &ctx.network);
        let counts = TickCounts {
            generated: world.generated(),
            queued: world.queued() as u64,
            exited: world.exited(),
        };
        self.check_tick(world.tick(), &rows, Some(counts));
        Ok(())
    }
}

/// Audits a trajectory CSV as written by [`crate::sim::TrajectoryWriter`].
///
/// Ticks without any vehicle are absent from a log, so vehicles are only
/// checked for never reappearing, not for the queue balance.
pub fn audit_trajectory_csv<R: Read>(
    reader: R,
    ctx: &SimContext,
    traits: &[VehicleTraits],
    start: f64,
    controller_log: &[ControllerLogRow],
) -> Result<AuditReport> {
    let mut auditor = Auditor::new(ctx, traits, start);
    auditor.extend_controller_log(controller_log);
    let mut rdr = csv::Reader::from_reader(reader);
    let mut batch: Vec<TrajectoryRow> = Vec::new();
    let mut last_tick = None;
    for row in rdr.deserialize::<TrajectoryRow>() {
        let row = row?;
        if last_tick.is_some_and(|t| t != row.tick) {
            auditor.check_tick(last_tick.unwrap_or(0), &batch, None);
            batch.clear();
        }
        last_tick = Some(row.tick);
        batch.push(row);
    }
    if let Some(t) = last_tick {
        auditor.check_tick(t, &batch, None);
    }
    Ok(auditor.finish())
}
