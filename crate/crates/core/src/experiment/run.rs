use std::collections::BTreeMap;

use rand::Rng;

use super::ScenarioConfig;
use crate::demand::{sample_arrivals, ArrivalEvent, DemandRng};
use crate::error::Result;
use crate::metrics::{apd, group_time_loss, TimeLossGroup, VehicleRecord};
use crate::policy::ControllerLogRow;
use crate::rng::{replicate_seed, substream, Stream};
use crate::sim::{run, SimContext, TickObserver, VehicleTraits, WorldState};
use crate::vehicle::VehicleClass;

/// Vehicle counts at the end of a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunCounts {
    pub generated: u64,
    pub exited: u64,
    pub queued_at_end: u64,
}

/// Outcome of one replicate.
#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub replicate: u32,
    pub seed: u64,
    /// Completed vehicles in id order.
    pub records: Vec<VehicleRecord<f64>>,
    pub apd: f64,
    pub per_class_time_loss: BTreeMap<TimeLossGroup, f64>,
    pub counts: RunCounts,
    pub controller_log: Vec<ControllerLogRow>,
}

/// The arrival stream of replicate `replicate`; independent of the policy.
pub fn arrivals(cfg: &ScenarioConfig, replicate: u32) -> Result<Vec<ArrivalEvent>> {
    let seed = replicate_seed(cfg.seed, replicate);
    let profile = cfg.profile()?;
    let mut rng = DemandRng::for_cell(seed, cfg.class_mode, cfg.cav_proportion.unwrap_or(profile.class_dist.p_cav));
    Ok(sample_arrivals(&profile, &mut rng))
}

/// Arrivals tagged with access tokens and compliance, one draw each per vehicle.
pub fn vehicle_traits(cfg: &ScenarioConfig, replicate: u32) -> Result<Vec<VehicleTraits>> {
    let seed = replicate_seed(cfg.seed, replicate);
    let mut access = substream(seed, Stream::Access);
    let mut compliance = substream(seed, Stream::Compliance);
    let fraction = cfg.access_fraction.unwrap_or(0.0);
    Ok(arrivals(cfg, replicate)?
        .into_iter()
        .enumerate()
        .map(|(id, a)| {
            let mut t = VehicleTraits::new(id as u64, a.class, a.passengers, a.depart_wanted);
            t.token = access.random::<f64>() < fraction;
            t.violator = a.class == VehicleClass::Hdv && compliance.random::<f64>() < cfg.hdv_violation_rate;
            t
        })
        .collect())
}

/// Builds the initial world of a replicate.
pub fn initial_world(cfg: &ScenarioConfig, ctx: &SimContext, replicate: u32) -> Result<WorldState> {
    let seed = replicate_seed(cfg.seed, replicate);
    let start = cfg.profile()?.start();
    Ok(WorldState::new(
        ctx,
        vehicle_traits(cfg, replicate)?,
        start,
        substream(seed, Stream::Imperfection),
    ))
}

pub fn run_scenario(cfg: &ScenarioConfig, replicate: u32) -> Result<RunResult> {
    run_scenario_observed(cfg, replicate, &mut [])
}

/// Runs one replicate to completion, notifying `observers` after each tick.
pub fn run_scenario_observed(
    cfg: &ScenarioConfig,
    replicate: u32,
    observers: &mut [&mut dyn TickObserver],
) -> Result<RunResult> {
    let ctx = cfg.context()?;
    ctx.validate()?;
    let mut world = initial_world(cfg, &ctx, replicate)?;
    run(&ctx, &mut world, observers)?;
    let counts = RunCounts {
        generated: world.generated(),
        exited: world.exited(),
        queued_at_end: world.queued() as u64,
    };
    let (mut records, controller_log) = world.into_results();
    records.sort_by_key(|r| r.id);
    let (apd, per_class_time_loss) = if records.is_empty() {
        (0.0, BTreeMap::new())
    } else {
        (apd(&records)?, group_time_loss(&records)?)
    };
    Ok(RunResult {
        replicate,
        seed: replicate_seed(cfg.seed, replicate),
        records,
        apd,
        per_class_time_loss,
        counts,
        controller_log,
    })
}
