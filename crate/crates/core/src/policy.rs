//! Restricted-lane access rules and the speed-feedback threshold controller.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::RoadNetwork;
use crate::num::Scalar;
use crate::sim::WorldState;
use crate::vehicle::VehicleClass;

pub const MIN_THRESHOLD: u8 = 1;
pub const MAX_THRESHOLD: u8 = 5;

/// Which vehicles may use the restricted lane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PolicyKind {
    /// Buses only.
    Dbl,
    /// Any vehicle carrying at least `i` passengers.
    Plus(u8),
    /// Buses, and CAVs carrying at least `i` passengers.
    CavStaticPlus(u8),
    /// Buses, and CAVs at or above a threshold driven by restricted-lane speed.
    CavDynamic { v_param: f64 },
}

impl PolicyKind {
    pub fn is_dynamic(&self) -> bool {
        matches!(self, PolicyKind::CavDynamic { .. })
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyKind::Dbl => f.write_str("DBL"),
            PolicyKind::Plus(i) => write!(f, "Plus_{i}"),
            PolicyKind::CavStaticPlus(i) => write!(f, "CAVStaticPlus_{i}"),
            PolicyKind::CavDynamic { v_param } => write!(f, "CAVDynamic_{v_param}"),
        }
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown policy {s:?}; expected DBL, Plus_i, CAVStaticPlus_i or CAVDynamic_v"));
        let threshold = |raw: &str| -> Result<u8> {
            let i: u8 = raw.parse().map_err(|_| bad())?;
            if (MIN_THRESHOLD..=MAX_THRESHOLD).contains(&i) {
                Ok(i)
            } else {
                Err(Error::Config(format!("policy {s}: threshold must be in 1..=5")))
            }
        };
        if s == "DBL" {
            Ok(PolicyKind::Dbl)
        } else if let Some(rest) = s.strip_prefix("CAVStaticPlus_") {
            Ok(PolicyKind::CavStaticPlus(threshold(rest)?))
        } else if let Some(rest) = s.strip_prefix("Plus_") {
            Ok(PolicyKind::Plus(threshold(rest)?))
        } else if let Some(rest) = s.strip_prefix("CAVDynamic_") {
            let v: f64 = rest.parse().map_err(|_| bad())?;
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("policy {s}: speed parameter must be positive")));
            }
            Ok(PolicyKind::CavDynamic { v_param: v })
        } else {
            Err(bad())
        }
    }
}

impl Serialize for PolicyKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PolicyKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A policy plus its controller settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    /// Seconds between threshold adjustments.
    #[serde(default = "default_control_interval")]
    pub control_interval: f64,
    /// Threshold at scenario start.
    #[serde(default = "default_initial_threshold")]
    pub initial_threshold: u8,
}

fn default_control_interval() -> f64 {
    60.0
}

fn default_initial_threshold() -> u8 {
    MIN_THRESHOLD
}

impl PolicySpec {
    pub fn new(kind: PolicyKind) -> Self {
        PolicySpec {
            kind,
            control_interval: default_control_interval(),
            initial_threshold: default_initial_threshold(),
        }
    }

    pub fn validate(&self, speed_limit: f64) -> Result<()> {
        match self.kind {
            PolicyKind::Plus(i) | PolicyKind::CavStaticPlus(i) if !(MIN_THRESHOLD..=MAX_THRESHOLD).contains(&i) => {
                return Err(Error::validation("policy threshold must be in 1..=5"))
            }
            PolicyKind::CavDynamic { v_param } if !(v_param > 0.0 && v_param <= speed_limit) => {
                return Err(Error::validation(format!(
                    "CAVDynamic speed parameter {v_param} must lie in (0, {speed_limit}]"
                )))
            }
            _ => {}
        }
        if !(self.control_interval > 0.0) {
            return Err(Error::validation("control interval must be positive"));
        }
        if !(MIN_THRESHOLD..=MAX_THRESHOLD).contains(&self.initial_threshold) {
            return Err(Error::validation("initial threshold must be in 1..=5"));
        }
        Ok(())
    }

    /// Whether a vehicle may use the restricted lane right now.
    pub fn permits<T: Scalar>(&self, state: &ControllerState<T>, class: VehicleClass, passengers: u32) -> bool {
        if class == VehicleClass::Bus {
            return true;
        }
        match self.kind {
            PolicyKind::Dbl => false,
            PolicyKind::Plus(i) => passengers >= u32::from(i),
            PolicyKind::CavStaticPlus(i) => class == VehicleClass::Cav && passengers >= u32::from(i),
            PolicyKind::CavDynamic { .. } => class == VehicleClass::Cav && passengers >= u32::from(state.threshold),
        }
    }

    /// The DBL, Plus, CAVStaticPlus and CAVDynamic_22..25 families.
    pub fn all_policies() -> Vec<PolicyKind> {
        let mut v = Self::baseline_policies();
        v.extend(Self::cav_policies());
        v
    }

    /// Policies that do not depend on CAV capabilities.
    pub fn baseline_policies() -> Vec<PolicyKind> {
        let mut v = vec![PolicyKind::Dbl];
        v.extend((1..=5).map(PolicyKind::Plus));
        v
    }

    /// The nine CAV policies of the proportion sweep.
    pub fn cav_policies() -> Vec<PolicyKind> {
        let mut v: Vec<PolicyKind> = (1..=5).map(PolicyKind::CavStaticPlus).collect();
        v.extend([22.0, 23.0, 24.0, 25.0].map(|v_param| PolicyKind::CavDynamic { v_param }));
        v
    }
}

/// Parses `all`, `cav`, `baseline` or a comma-separated list of policy names.
pub fn parse_policy_set(s: &str) -> Result<Vec<PolicyKind>> {
    match s.trim() {
        "all" => Ok(PolicySpec::all_policies()),
        "cav" => Ok(PolicySpec::cav_policies()),
        "baseline" => Ok(PolicySpec::baseline_policies()),
        list => list
            .split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(str::parse)
            .collect(),
    }
}

/// Mutable state of the threshold controller.
#[derive(Clone, Debug, PartialEq)]
pub struct ControllerState<T> {
    pub threshold: u8,
    pub last_update: T,
    pub speed_sum: T,
    pub samples: u32,
}

impl<T: Scalar> ControllerState<T> {
    pub fn new(initial_threshold: u8, start: T) -> Self {
        ControllerState {
            threshold: initial_threshold.clamp(MIN_THRESHOLD, MAX_THRESHOLD),
            last_update: start,
            speed_sum: T::zero(),
            samples: 0,
        }
    }

    pub fn interval_mean(&self) -> Option<T> {
        (self.samples > 0).then(|| self.speed_sum / T::from_u32(self.samples).expect("u32 fits"))
    }
}

/// One row of the controller log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllerLogRow {
    pub interval_end_s: f64,
    pub interval_mean_speed: f64,
    pub threshold_before: u8,
    pub threshold_after: u8,
}

pub fn record_speed_sample<T: Scalar>(state: &mut ControllerState<T>, mean_speed: T) {
    state.speed_sum = state.speed_sum + mean_speed;
    state.samples += 1;
}

/// Applies one control step if an interval has elapsed.
///
/// Below the speed parameter the threshold rises by one (admitting fewer
/// CAVs), above it falls by one; a tie holds. Returns the log row when an
/// update happened.
pub fn update_threshold<T: Scalar>(
    state: &mut ControllerState<T>,
    policy: &PolicySpec,
    now: T,
) -> Option<ControllerLogRow> {
    let PolicyKind::CavDynamic { v_param } = policy.kind else {
        return None;
    };
    if now - state.last_update < T::lit(policy.control_interval) {
        return None;
    }
    let before = state.threshold;
    let mean = state.interval_mean();
    if let Some(m) = mean {
        let v = T::lit(v_param);
        if m < v {
            state.threshold = (state.threshold + 1).min(MAX_THRESHOLD);
        } else if m > v {
            state.threshold = state.threshold.saturating_sub(1).max(MIN_THRESHOLD);
        }
    }
    state.speed_sum = T::zero();
    state.samples = 0;
    state.last_update = now;
    Some(ControllerLogRow {
        interval_end_s: now.to_f64().unwrap_or(f64::NAN),
        interval_mean_speed: mean.and_then(|m| m.to_f64()).unwrap_or(f64::NAN),
        threshold_before: before,
        threshold_after: state.threshold,
    })
}

/// Mean speed of vehicles on the restricted lane inside the restricted
/// segment; the speed limit when the lane is empty.
pub fn measure_restricted_lane_speed(world: &WorldState, network: &RoadNetwork) -> Result<f64> {
    let zone = network.restricted_zone().ok_or(Error::NoRestrictedLane)?;
    let (sum, n) = world
        .vehicles()
        .iter()
        .filter(|v| zone.contains(v.lane, v.position))
        .fold((0.0, 0u32), |(s, n), v| (s + v.speed, n + 1));
    Ok(if n == 0 { network.speed_limit } else { sum / f64::from(n) })
}
