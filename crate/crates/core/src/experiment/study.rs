use super::output::fmt_value;
use super::sweep::{execute, RunOptions, RunSummary, Task};
use super::ScenarioConfig;
use crate::error::{Error, Result};
use crate::metrics::{mean, std_dev};
use crate::sim::{SimContext, TickObserver, WorldState};

/// Width of the road bins of the speed profile.
pub const SPEED_BIN_M: f64 = 100.0;

/// Time-mean speed of vehicles per road bin, accumulated tick by tick.
#[derive(Clone, Debug, PartialEq)]
pub struct SpeedProfile {
    pub bin_width: f64,
    pub sums: Vec<f64>,
    pub counts: Vec<u64>,
}

impl SpeedProfile {
    pub fn new(total_length: f64, bin_width: f64) -> Self {
        let n = (total_length / bin_width).ceil().max(1.0) as usize;
        SpeedProfile {
            bin_width,
            sums: vec![0.0; n],
            counts: vec![0; n],
        }
    }

    pub fn merge(&mut self, other: &SpeedProfile) {
        for (i, (s, c)) in other.sums.iter().zip(&other.counts).enumerate() {
            self.sums[i] += s;
            self.counts[i] += c;
        }
    }

    /// Mean speed per bin; `None` for bins never occupied.
    pub fn means(&self) -> Vec<Option<f64>> {
        self.sums
            .iter()
            .zip(&self.counts)
            .map(|(s, &c)| (c > 0).then(|| s / c as f64))
            .collect()
    }
}

impl TickObserver for SpeedProfile {
    fn observe(&mut self, world: &WorldState, _: &SimContext) -> Result<()> {
        for v in world.vehicles() {
            let k = ((v.position / self.bin_width) as usize).min(self.sums.len() - 1);
            self.sums[k] += v.speed;
            self.counts[k] += 1;
        }
        Ok(())
    }
}

/// Replicates at one access fraction.
#[derive(Clone, Debug, PartialEq)]
pub struct FractionRow {
    pub fraction: f64,
    pub runs: Vec<RunSummary>,
    /// Pooled over replicates.
    pub speed: SpeedProfile,
}

impl FractionRow {
    pub fn vds(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.mean_vd).collect()
    }

    pub fn vd_mean(&self) -> f64 {
        mean(&self.vds())
    }

    pub fn vd_std(&self) -> f64 {
        std_dev(&self.vds())
    }

    pub fn apd_mean(&self) -> f64 {
        mean(&self.runs.iter().map(|r| r.apd).collect::<Vec<_>>())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FractionStudy {
    pub base: ScenarioConfig,
    pub rows: Vec<FractionRow>,
}

impl FractionStudy {
    pub fn fractions(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.fraction).collect()
    }

    /// Fraction with the lowest mean vehicle delay.
    pub fn best_fraction(&self) -> Option<f64> {
        self.rows
            .iter()
            .min_by(|a, b| a.vd_mean().total_cmp(&b.vd_mean()))
            .map(|r| r.fraction)
    }
}

/// Admits a random fraction `f` of all vehicles, whatever their class, for
/// each `f` in `fractions`.
pub fn run_access_fraction_study(base: &ScenarioConfig, fractions: &[f64], opts: &RunOptions) -> Result<FractionStudy> {
    base.validate()?;
    if let Some(f) = fractions.iter().find(|f| !(0.0..=1.0).contains(*f)) {
        return Err(Error::validation(format!("access fraction {f} must lie in [0, 1]")));
    }
    let length = base.network()?.total_length;
    let mut tasks = Vec::new();
    for &f in fractions {
        let mut cfg = base.clone();
        cfg.access_fraction = Some(f);
        cfg.validate()?;
        for rep in 0..cfg.replications {
            tasks.push(Task {
                cfg: cfg.clone(),
                replicate: rep,
                dir: ("access".to_string(), fmt_value(f)),
            });
        }
    }
    let mut done = execute(&tasks, opts, |_| Ok(SpeedProfile::new(length, SPEED_BIN_M)))?.into_iter();
    let mut rows = Vec::new();
    for &f in fractions {
        let mut speed = SpeedProfile::new(length, SPEED_BIN_M);
        let mut runs = Vec::new();
        for _ in 0..base.replications {
            let (summary, profile) = done.next().expect("one result per task");
            speed.merge(&profile);
            runs.push(summary);
        }
        rows.push(FractionRow {
            fraction: f,
            runs,
            speed,
        });
    }
    Ok(FractionStudy {
        base: base.clone(),
        rows,
    })
}
