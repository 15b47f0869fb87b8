//! Krauss-style safe-speed car following.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Scalar;

/// Per-vehicle-type driving parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriverParams<T> {
    /// m/s²
    pub max_accel: T,
    /// m/s², positive magnitude
    pub max_decel: T,
    /// s
    pub reaction_time: T,
    /// m
    pub min_gap: T,
    /// Driver imperfection in [0, 1].
    pub imperfection: T,
    /// m
    pub vehicle_length: T,
}

impl<T: Scalar> DriverParams<T> {
    pub fn car() -> Self {
        DriverParams {
            max_accel: T::lit(2.6),
            max_decel: T::lit(4.5),
            reaction_time: T::one(),
            min_gap: T::lit(2.5),
            imperfection: T::lit(0.5),
            vehicle_length: T::lit(5.0),
        }
    }

    pub fn bus() -> Self {
        DriverParams {
            vehicle_length: T::lit(12.0),
            ..Self::car()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("max_accel", self.max_accel),
            ("max_decel", self.max_decel),
            ("reaction_time", self.reaction_time),
            ("min_gap", self.min_gap),
            ("vehicle_length", self.vehicle_length),
        ];
        for (name, v) in positive {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::validation(format!("driver {name} must be positive")));
            }
        }
        if !(self.imperfection >= T::zero() && self.imperfection <= T::one()) {
            return Err(Error::validation("driver imperfection must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// The vehicle a follower reacts to.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Leader<T> {
    /// Net gap beyond the follower's minimum gap, in meters.
    pub gap: T,
    pub speed: T,
}

/// Largest speed that lets the follower stop behind a leader braking at
/// `max_decel`, given the follower's reaction time.
///
/// `gap` is the distance available beyond the minimum gap; the result is
/// floored at zero.
pub fn safe_speed<T: Scalar>(gap: T, leader_speed: T, follower_speed: T, params: &DriverParams<T>) -> T {
    let tau = params.reaction_time;
    let gap = gap.max(T::zero());
    let two = T::lit(2.0);
    let denom = tau + (leader_speed + follower_speed) / (two * params.max_decel);
    (leader_speed + (gap - leader_speed * tau) / denom).max(T::zero())
}

/// Safe speed against an optional leader; free road yields the speed limit.
pub fn following_speed<T: Scalar>(
    leader: Option<Leader<T>>,
    follower_speed: T,
    speed_limit: T,
    params: &DriverParams<T>,
) -> T {
    match leader {
        Some(l) => safe_speed(l.gap, l.speed, follower_speed, params),
        None => speed_limit,
    }
}

/// Minimum gap beyond `min_gap` for which `safe_speed(gap, leader_speed,
/// speed, ..) >= speed`.
pub fn required_gap<T: Scalar>(leader_speed: T, speed: T, params: &DriverParams<T>) -> T {
    let tau = params.reaction_time;
    let denom = tau + (leader_speed + speed) / (T::lit(2.0) * params.max_decel);
    (leader_speed * tau + (speed - leader_speed) * denom).max(T::zero())
}

/// Speed for the next tick: bounded by the speed limit, the acceleration
/// capability and `safe`, then reduced by up to `imperfection * max_accel *
/// dt` scaled by `dawdle` in [0, 1).
///
/// A vehicle cruising unconstrained at the speed limit does not dawdle.
pub fn next_speed<T: Scalar>(
    speed: T,
    safe: T,
    speed_limit: T,
    dt: T,
    dawdle: T,
    params: &DriverParams<T>,
) -> T {
    let desired = speed_limit.min(speed + params.max_accel * dt).min(safe);
    let v = if desired < speed_limit {
        desired - params.imperfection * params.max_accel * dt * dawdle
    } else {
        desired
    };
    v.max(T::zero())
}
