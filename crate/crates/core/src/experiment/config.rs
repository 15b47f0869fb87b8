use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::demand::{load_profile, scale_profile, ClassMode, DemandProfile, Exact};
use crate::error::{Error, Result};
use crate::kinematics::DriverParams;
use crate::network::{build_lane_drop_network_with, RoadNetwork, SegmentSpec, Side};
use crate::policy::PolicySpec;
use crate::sim::{AccessRule, BehaviorParams, SimContext};

/// Road geometry as written in a scenario file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub segments: Vec<SegmentSpec>,
    #[serde(default = "default_speed_limit")]
    pub speed_limit: f64,
    /// Side losing lanes at drops not implied by the restricted lane.
    #[serde(default = "default_drop_side")]
    pub drop_side: Side,
}

fn default_speed_limit() -> f64 {
    25.0
}

fn default_drop_side() -> Side {
    Side::Right
}

impl NetworkConfig {
    pub fn lane_drop() -> Self {
        NetworkConfig {
            segments: vec![SegmentSpec::new(500.0, 2, None), SegmentSpec::new(500.0, 2, Some(0))],
            speed_limit: default_speed_limit(),
            drop_side: default_drop_side(),
        }
    }

    pub fn build(&self) -> Result<RoadNetwork> {
        build_lane_drop_network_with(&self.segments, self.speed_limit, self.drop_side)
    }
}

/// Demand source: a profile file or an inline profile, divided by `scale`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandConfig {
    /// Profile file, relative to the scenario file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<PathBuf>,
    /// Inline profile; takes precedence over `profile`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inline: Option<DemandProfile>,
    #[serde(default = "unit_scale")]
    pub scale: Exact,
}

fn unit_scale() -> Exact {
    Exact::from_integer(1)
}

impl DemandConfig {
    pub fn inline(profile: DemandProfile) -> Self {
        DemandConfig {
            profile: None,
            inline: Some(profile),
            scale: unit_scale(),
        }
    }
}

/// Partial override of driver parameters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriverOverride {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_accel: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_decel: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reaction_time: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_gap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub imperfection: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vehicle_length: Option<f64>,
}

impl DriverOverride {
    pub fn apply(&self, base: DriverParams<f64>) -> DriverParams<f64> {
        DriverParams {
            max_accel: self.max_accel.unwrap_or(base.max_accel),
            max_decel: self.max_decel.unwrap_or(base.max_decel),
            reaction_time: self.reaction_time.unwrap_or(base.reaction_time),
            min_gap: self.min_gap.unwrap_or(base.min_gap),
            imperfection: self.imperfection.unwrap_or(base.imperfection),
            vehicle_length: self.vehicle_length.unwrap_or(base.vehicle_length),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriverConfig {
    #[serde(default)]
    pub car: DriverOverride,
    #[serde(default)]
    pub bus: DriverOverride,
}

/// One scenario: road, demand, policy and run settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_replications")]
    pub replications: u32,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Probability that an arriving car is a CAV; keeps the profile's split when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cav_proportion: Option<f64>,
    #[serde(default)]
    pub class_mode: ClassMode,
    /// Admit a random fraction of all vehicles instead of applying the policy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub access_fraction: Option<f64>,
    /// Share of HDVs that ignore occupancy rules.
    #[serde(default)]
    pub hdv_violation_rate: f64,
    pub network: NetworkConfig,
    pub demand: DemandConfig,
    pub policy: PolicySpec,
    #[serde(default)]
    pub driver: DriverConfig,
    #[serde(default)]
    pub behavior: BehaviorParams,
}

fn default_replications() -> u32 {
    10
}

fn default_dt() -> f64 {
    1.0
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ScenarioConfig {
    /// A lane-drop scenario with default settings.
    pub fn new(demand: DemandProfile, policy: PolicySpec) -> Self {
        ScenarioConfig {
            seed: 0,
            replications: default_replications(),
            dt: default_dt(),
            out_dir: default_out_dir(),
            cav_proportion: None,
            class_mode: ClassMode::default(),
            access_fraction: None,
            hdv_violation_rate: 0.0,
            network: NetworkConfig::lane_drop(),
            demand: DemandConfig::inline(demand),
            policy,
            driver: DriverConfig::default(),
            behavior: BehaviorParams::default(),
        }
    }

    /// Parses a scenario from TOML; a profile path is read relative to `base_dir`
    /// and inlined.
    pub fn parse(text: &str, origin: &Path, base_dir: &Path) -> Result<Self> {
        let mut cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        if cfg.demand.inline.is_none() {
            let rel = cfg
                .demand
                .profile
                .clone()
                .ok_or_else(|| Error::Config("demand needs either `profile` or `inline`".into()))?;
            cfg.demand.inline = Some(load_profile(base_dir.join(rel))?);
        }
        Ok(cfg)
    }

    /// Reads, resolves and validates a scenario file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let cfg = Self::parse(&text, path, base)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }

    fn base_profile(&self) -> Result<&DemandProfile> {
        self.demand
            .inline
            .as_ref()
            .ok_or_else(|| Error::Config("demand profile not resolved".into()))
    }

    /// The scaled profile with the configured CAV proportion applied.
    pub fn profile(&self) -> Result<DemandProfile> {
        let mut p = scale_profile(self.base_profile()?, self.demand.scale)?;
        if let Some(c) = self.cav_proportion {
            p.class_dist = p.class_dist.with_cav_proportion(c);
        }
        Ok(p)
    }

    pub fn network(&self) -> Result<RoadNetwork> {
        self.network.build()
    }

    pub fn context(&self) -> Result<SimContext> {
        let mut ctx = SimContext::new(self.network()?, self.policy);
        ctx.car = self.driver.car.apply(ctx.car);
        ctx.bus = self.driver.bus.apply(ctx.bus);
        ctx.behavior = self.behavior;
        ctx.dt = self.dt;
        if self.access_fraction.is_some() {
            ctx.access = AccessRule::Token;
        }
        Ok(ctx)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seed > i64::MAX as u64 {
            return Err(Error::validation("seed must be below 2^63"));
        }
        if self.replications == 0 {
            return Err(Error::validation("replications must be at least 1"));
        }
        let unit = |name: &str, v: Option<f64>| match v {
            Some(x) if !(0.0..=1.0).contains(&x) => {
                Err(Error::validation(format!("{name} = {x} must lie in [0, 1]")))
            }
            _ => Ok(()),
        };
        unit("cav_proportion", self.cav_proportion)?;
        unit("access_fraction", self.access_fraction)?;
        unit("hdv_violation_rate", Some(self.hdv_violation_rate))?;
        self.base_profile()?.validate()?;
        self.profile()?.validate()?;
        let ctx = self.context()?;
        ctx.validate()?;
        if self.access_fraction.is_some() && ctx.network.restricted_zone().is_none() {
            return Err(Error::NoRestrictedLane);
        }
        Ok(())
    }
}
