use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mergelane::experiment::{
    parse_grid, rerun, rerun_dir, run_access_fraction_study, run_sweep, write_study_results, write_sweep_results,
    FractionStudy, Manifest, Rerun, RunOptions, ScenarioConfig, StudyKind, SweepResults, SweepSpec,
};
use mergelane::policy::{parse_policy_set, PolicyKind, PolicySpec};
use mergelane::Error;

const POLICY_HELP: &str = "Policies:
  DBL               restricted lane for buses only
  Plus_i            vehicles carrying at least i passengers (i = 1..5)
  CAVStaticPlus_i   CAVs carrying at least i passengers (i = 1..5)
  CAVDynamic_v      CAVs above a passenger threshold that rises while the
                    restricted lane is slower than v m/s (e.g. CAVDynamic_24)";

#[derive(Parser)]
#[command(name = "mergelane", version, about = "Lane-drop traffic simulator for restricted-lane access policies")]
#[command(after_help = POLICY_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one policy at one CAV proportion.
    #[command(after_help = POLICY_HELP)]
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Policy name, e.g. CAVDynamic_24.
        #[arg(long)]
        policy: Option<PolicyKind>,
        /// Share of cars that are CAVs.
        #[arg(long)]
        proportion: Option<f64>,
    },
    /// Run a policy × CAV-proportion grid.
    #[command(after_help = POLICY_HELP)]
    Sweep {
        #[command(flatten)]
        common: Common,
        /// all, cav, baseline, or a comma-separated list of policy names.
        #[arg(long, default_value = "cav")]
        policies: String,
        /// start:end:step or a comma-separated list.
        #[arg(long, default_value = "0.1:1.0:0.1")]
        proportions: String,
    },
    /// Admit a random fraction of all vehicles to the restricted lane.
    AccessStudy {
        #[command(flatten)]
        common: Common,
        /// start:end:step or a comma-separated list.
        #[arg(long, default_value = "0.1:1.0:0.1")]
        fractions: String,
    },
    /// Check a scenario file without running it.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
    /// Repeat the runs recorded in a manifest.
    Rerun {
        #[arg(long)]
        manifest: PathBuf,
        /// Defaults to a `rerun` directory next to the manifest.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replications: Option<u32>,
    /// Time step in seconds.
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long, env = "MERGELANE_OUT")]
    out_dir: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Write per-tick vehicle positions for every run.
    #[arg(long)]
    trajectory_log: bool,
}

impl Common {
    fn load(&self) -> Result<ScenarioConfig, Error> {
        let mut cfg = ScenarioConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(r) = self.replications {
            cfg.replications = r;
        }
        if let Some(dt) = self.dt {
            cfg.dt = dt;
        }
        if let Some(d) = &self.out_dir {
            cfg.out_dir = d.clone();
        }
        Ok(cfg)
    }

    fn options(&self, cfg: &ScenarioConfig) -> RunOptions {
        RunOptions {
            jobs: self.jobs,
            out_dir: Some(cfg.out_dir.clone()),
            trajectory_log: self.trajectory_log,
        }
    }
}

fn with_kind(base: PolicySpec, kind: PolicyKind) -> PolicySpec {
    PolicySpec { kind, ..base }
}

fn print_sweep(results: &SweepResults) {
    for c in &results.cells {
        println!(
            "{} p={} APD {:.2} ± {:.2} s over {} runs",
            c.policy.kind,
            mergelane::experiment::fmt_value(c.proportion),
            c.apd_mean(),
            c.apd_std(),
            c.runs.len()
        );
    }
}

fn print_study(study: &FractionStudy) {
    for r in &study.rows {
        println!(
            "f={} VD {:.2} ± {:.2} s, APD {:.2} s over {} runs",
            mergelane::experiment::fmt_value(r.fraction),
            r.vd_mean(),
            r.vd_std(),
            r.apd_mean(),
            r.runs.len()
        );
    }
}

fn sweep(spec: SweepSpec, kind: StudyKind, opts: &RunOptions, out: &Path) -> Result<(), Error> {
    spec.validate()?;
    let results = run_sweep(&spec, opts)?;
    write_sweep_results(&results, out, kind, opts.trajectory_log)?;
    print_sweep(&results);
    println!("results in {}", out.display());
    Ok(())
}

fn dispatch(command: Command) -> Result<(), Error> {
    match command {
        Command::Simulate {
            common,
            policy,
            proportion,
        } => {
            let mut cfg = common.load()?;
            if let Some(kind) = policy {
                cfg.policy = with_kind(cfg.policy, kind);
            }
            if proportion.is_some() {
                cfg.cav_proportion = proportion;
            }
            cfg.validate()?;
            let opts = common.options(&cfg);
            let out = cfg.out_dir.clone();
            sweep(SweepSpec::single(cfg)?, StudyKind::Simulate, &opts, &out)
        }
        Command::Sweep {
            common,
            policies,
            proportions,
        } => {
            let cfg = common.load()?;
            let kinds = parse_policy_set(&policies)?;
            let spec = SweepSpec::new(
                cfg.clone(),
                kinds.into_iter().map(|k| with_kind(cfg.policy, k)).collect(),
                parse_grid(&proportions)?,
            );
            sweep(spec, StudyKind::Sweep, &common.options(&cfg), &cfg.out_dir)
        }
        Command::AccessStudy { common, fractions } => {
            let cfg = common.load()?;
            let fractions = parse_grid(&fractions)?;
            let opts = common.options(&cfg);
            let study = run_access_fraction_study(&cfg, &fractions, &opts)?;
            write_study_results(&study, &cfg.out_dir, opts.trajectory_log)?;
            print_study(&study);
            println!("results in {}", cfg.out_dir.display());
            Ok(())
        }
        Command::ValidateConfig { config } => {
            let cfg = ScenarioConfig::load(&config)?;
            let p = cfg.profile()?;
            println!(
                "{}: ok ({} intervals, {:.0} expected vehicles, policy {})",
                config.display(),
                p.intervals.len(),
                p.expected_count(),
                cfg.policy.kind
            );
            Ok(())
        }
        Command::Rerun {
            manifest,
            out_dir,
            jobs,
        } => {
            let m = Manifest::load(&manifest)?;
            let out = out_dir.unwrap_or_else(|| rerun_dir(&manifest));
            let opts = RunOptions {
                jobs,
                out_dir: Some(out.clone()),
                trajectory_log: m.trajectory_log,
            };
            match rerun(&m, &opts)? {
                Rerun::Sweep(r) => print_sweep(&r),
                Rerun::Study(s) => print_study(&s),
            }
            println!("results in {}", out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_user_error() { 1 } else { 2 })
        }
    }
}
