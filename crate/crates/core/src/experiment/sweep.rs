use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use num_rational::Ratio;
use num_traits::Zero;
use rayon::prelude::*;

use super::output::{fmt_value, write_controller_csv, write_records_csv};
use super::{initial_world, ScenarioConfig};
use crate::demand::Exact;
use crate::error::{Error, Result};
use crate::metrics::{apd, group_of, mean, std_dev, time_loss, vehicle_delay, TimeLossGroup};
use crate::policy::PolicySpec;
use crate::rng::replicate_seed;
use crate::sim::{run, TickObserver, TrajectoryWriter};

use super::RunCounts;

/// Execution settings shared by sweeps and studies.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunOptions {
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    /// Where per-run files go as runs complete; nothing is written when absent.
    pub out_dir: Option<PathBuf>,
    pub trajectory_log: bool,
}

/// A policy × CAV-proportion grid over one base scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub base: ScenarioConfig,
    pub policies: Vec<PolicySpec>,
    pub proportions: Vec<f64>,
}

impl SweepSpec {
    pub fn new(base: ScenarioConfig, policies: Vec<PolicySpec>, proportions: Vec<f64>) -> Self {
        SweepSpec {
            base,
            policies,
            proportions,
        }
    }

    /// The one-cell sweep of the base scenario itself.
    pub fn single(base: ScenarioConfig) -> Result<Self> {
        let proportion = match base.cav_proportion {
            Some(p) => p,
            None => {
                let d = base.profile()?.class_dist;
                if d.p_cav + d.p_hdv > 0.0 {
                    d.p_cav / (d.p_cav + d.p_hdv)
                } else {
                    0.0
                }
            }
        };
        Ok(SweepSpec::new(base.clone(), vec![base.policy], vec![proportion]))
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if let Some(p) = self.proportions.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::validation(format!("CAV proportion {p} must lie in [0, 1]")));
        }
        let limit = self.base.network.speed_limit;
        for p in &self.policies {
            p.validate(limit)?;
        }
        Ok(())
    }

    pub fn cell_config(&self, policy: PolicySpec, proportion: f64) -> ScenarioConfig {
        let mut cfg = self.base.clone();
        cfg.policy = policy;
        cfg.cav_proportion = Some(proportion);
        cfg
    }

    pub fn is_empty(&self) -> bool {
        self.policies.is_empty() || self.proportions.is_empty()
    }
}

/// Parses `start:end:step` (inclusive, exact decimal steps) or a
/// comma-separated list of values.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::Config(format!("bad value list {spec:?}; expected a:b:step or a,b,c"));
    let num = |s: &str| Exact::parse(s).ok_or_else(bad);
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        [a, b, step] => {
            let (a, b, step) = (num(a)?.0, num(b)?.0, num(step)?.0);
            if step <= Ratio::zero() || b < a {
                return Err(bad());
            }
            let n = ((b - a) / step).floor().to_integer();
            Ok((0..=n).map(|k| Exact(a + step * k).to_f64()).collect())
        }
        [list] => list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| num(s).map(Exact::to_f64))
            .collect(),
        _ => Err(bad()),
    }
}

/// Aggregates of one replicate, all recomputable from its vehicle records.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub replicate: u32,
    pub seed: u64,
    pub apd: f64,
    /// Unweighted mean vehicle delay.
    pub mean_vd: f64,
    pub counts: RunCounts,
    /// Time-loss sum and vehicle count per group.
    pub groups: BTreeMap<TimeLossGroup, (f64, u64)>,
}

/// Replicates of one (policy, proportion) cell.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepCell {
    pub policy: PolicySpec,
    pub proportion: f64,
    pub runs: Vec<RunSummary>,
}

impl SweepCell {
    pub fn apds(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.apd).collect()
    }

    pub fn apd_mean(&self) -> f64 {
        mean(&self.apds())
    }

    pub fn apd_std(&self) -> f64 {
        std_dev(&self.apds())
    }

    /// Mean time loss per group, pooled over all replicates' vehicles.
    pub fn time_loss(&self) -> BTreeMap<TimeLossGroup, (f64, u64)> {
        pool_groups(&self.runs)
    }
}

pub(crate) fn pool_groups(runs: &[RunSummary]) -> BTreeMap<TimeLossGroup, (f64, u64)> {
    let mut pooled: BTreeMap<TimeLossGroup, (f64, u64)> = BTreeMap::new();
    for r in runs {
        for (g, (sum, n)) in &r.groups {
            let e = pooled.entry(*g).or_default();
            e.0 += sum;
            e.1 += n;
        }
    }
    pooled.into_iter().map(|(g, (sum, n))| (g, (sum / n as f64, n))).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResults {
    pub spec: SweepSpec,
    /// Cells in policy-major order.
    pub cells: Vec<SweepCell>,
}

impl SweepResults {
    pub fn cell(&self, policy: &str, proportion: f64) -> Option<&SweepCell> {
        self.cells
            .iter()
            .find(|c| c.policy.kind.to_string() == policy && c.proportion == proportion)
    }
}

/// One replicate to execute and where its files go.
pub(crate) struct Task {
    pub cfg: ScenarioConfig,
    pub replicate: u32,
    /// Directory components below `runs/`, `controller/` and `trajectories/`.
    pub dir: (String, String),
}

/// Observer that records nothing.
pub(crate) struct Idle;

impl TickObserver for Idle {
    fn observe(&mut self, _: &crate::sim::WorldState, _: &crate::sim::SimContext) -> Result<()> {
        Ok(())
    }
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {jobs} worker threads: {e}")))
}

/// Runs every task, writing per-run files as each completes. Results come
/// back in task order whatever the completion order.
pub(crate) fn execute<O, F>(tasks: &[Task], opts: &RunOptions, make: F) -> Result<Vec<(RunSummary, O)>>
where
    O: TickObserver + Send,
    F: Fn(&Task) -> Result<O> + Sync,
{
    let pool = thread_pool(opts.jobs)?;
    let out: Vec<Result<(RunSummary, O)>> =
        pool.install(|| tasks.par_iter().map(|t| execute_one(t, opts, make(t)?)).collect());
    out.into_iter().collect()
}

fn execute_one<O: TickObserver>(task: &Task, opts: &RunOptions, mut observer: O) -> Result<(RunSummary, O)> {
    let cfg = &task.cfg;
    let ctx = cfg.context()?;
    let mut world = initial_world(cfg, &ctx, task.replicate)?;
    let rel = |root: &str| -> Option<PathBuf> {
        opts.out_dir.as_ref().map(|d| {
            d.join(root)
                .join(&task.dir.0)
                .join(&task.dir.1)
                .join(format!("{}.csv", task.replicate))
        })
    };

    let mut trajectory = match (opts.trajectory_log, rel("trajectories")) {
        (true, Some(path)) => Some(TrajectoryWriter::new(create(&path)?)),
        _ => None,
    };
    {
        let mut observers: Vec<&mut dyn TickObserver> = vec![&mut observer];
        if let Some(t) = trajectory.as_mut() {
            observers.push(t);
        }
        run(&ctx, &mut world, &mut observers)?;
    }
    if let Some(t) = trajectory {
        t.finish()?;
    }

    let counts = RunCounts {
        generated: world.generated(),
        exited: world.exited(),
        queued_at_end: world.queued() as u64,
    };
    let (mut records, log) = world.into_results();
    records.sort_by_key(|r| r.id);
    if let Some(path) = rel("runs") {
        write_records_csv(&path, &records)?;
    }
    if let (Some(path), false) = (rel("controller"), log.is_empty()) {
        write_controller_csv(&path, &log)?;
    }

    let mut groups: BTreeMap<TimeLossGroup, (f64, u64)> = BTreeMap::new();
    let mut vd_sum = 0.0;
    for r in &records {
        let e = groups.entry(group_of(r)).or_default();
        e.0 += time_loss(r)?;
        e.1 += 1;
        vd_sum += vehicle_delay(r)?;
    }
    let (apd, mean_vd) = if records.is_empty() {
        (0.0, 0.0)
    } else {
        (apd(&records)?, vd_sum / records.len() as f64)
    };
    let summary = RunSummary {
        replicate: task.replicate,
        seed: replicate_seed(cfg.seed, task.replicate),
        apd,
        mean_vd,
        counts,
        groups,
    };
    Ok((summary, observer))
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

/// Runs all replicates of every cell; cells may execute in any order.
pub fn run_sweep(spec: &SweepSpec, opts: &RunOptions) -> Result<SweepResults> {
    spec.validate()?;
    let mut tasks = Vec::new();
    for &policy in &spec.policies {
        for &p in &spec.proportions {
            let cfg = spec.cell_config(policy, p);
            for rep in 0..cfg.replications {
                tasks.push(Task {
                    cfg: cfg.clone(),
                    replicate: rep,
                    dir: (policy.kind.to_string(), fmt_value(p)),
                });
            }
        }
    }
    let mut done = execute(&tasks, opts, |_| Ok(Idle))?.into_iter().map(|(s, _)| s);
    let mut cells = Vec::new();
    for &policy in &spec.policies {
        for &p in &spec.proportions {
            let runs = (0..spec.base.replications).map(|_| done.next().expect("one summary per task")).collect();
            cells.push(SweepCell {
                policy,
                proportion: p,
                runs,
            });
        }
    }
    Ok(SweepResults {
        spec: spec.clone(),
        cells,
    })
}
