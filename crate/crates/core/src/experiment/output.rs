//! Result files and the manifest that reproduces them.
//!
//! Layout below the output directory:
//!
//! ```text
//! manifest.toml
//! summary.csv                       one row per replicate
//! sweep_table.csv, sweep_std.csv    mean / std APD, policy × proportion
//! time_loss.csv                     pooled time loss per vehicle group
//! fraction_table.csv                access-fraction study
//! runs/<policy>/<proportion>/<rep>.csv
//! controller/<policy>/<proportion>/<rep>.csv
//! trajectories/<policy>/<proportion>/<rep>.csv
//! plots/*.csv
//! ```

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::study::{run_access_fraction_study, FractionStudy};
use super::sweep::{create, run_sweep, RunOptions, RunSummary, SweepResults, SweepSpec};
use super::ScenarioConfig;
use crate::demand::ClassMode;
use crate::error::{Error, Result};
use crate::metrics::{depart_delay, time_loss, vehicle_delay, VehicleRecord};
use crate::policy::{ControllerLogRow, PolicySpec};
use crate::rng::replicate_seed;
use crate::vehicle::VehicleClass;

pub const MANIFEST: &str = "manifest.toml";

/// Shortest decimal form of a grid value, with float noise below 1e-9 removed.
pub fn fmt_value(x: f64) -> String {
    let r = (x * 1e9).round() / 1e9;
    format!("{r}")
}

/// Per-vehicle CSV row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordRow {
    pub id: u64,
    pub class: VehicleClass,
    pub passengers: u32,
    pub depart_wanted_s: f64,
    pub depart_actual_s: f64,
    pub exit_s: f64,
    pub d_t_s: f64,
    pub time_loss_s: f64,
    pub depart_delay_s: f64,
    pub vd_s: f64,
}

impl RecordRow {
    pub fn from_record(r: &VehicleRecord<f64>) -> Result<Self> {
        Ok(RecordRow {
            id: r.id,
            class: r.class,
            passengers: r.passengers,
            depart_wanted_s: r.depart_wanted,
            depart_actual_s: r.depart_actual.ok_or(Error::IncompleteRecord {
                id: r.id,
                missing: "depart_actual",
            })?,
            exit_s: r.exit_time.ok_or(Error::IncompleteRecord {
                id: r.id,
                missing: "exit_time",
            })?,
            d_t_s: r.free_flow_time,
            time_loss_s: time_loss(r)?,
            depart_delay_s: depart_delay(r)?,
            vd_s: vehicle_delay(r)?,
        })
    }

    pub fn to_record(&self) -> VehicleRecord<f64> {
        VehicleRecord {
            id: self.id,
            class: self.class,
            passengers: self.passengers,
            depart_wanted: self.depart_wanted_s,
            depart_actual: Some(self.depart_actual_s),
            exit_time: Some(self.exit_s),
            free_flow_time: self.d_t_s,
        }
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::io::BufWriter<std::fs::File>>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

fn flush<W: Write>(mut w: csv::Writer<W>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_records_csv(path: &Path, records: &[VehicleRecord<f64>]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for r in records {
        w.serialize(RecordRow::from_record(r)?)?;
    }
    flush(w, path)
}

pub fn read_records_csv(path: &Path) -> Result<Vec<VehicleRecord<f64>>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    csv::Reader::from_reader(file)
        .deserialize::<RecordRow>()
        .map(|row| Ok(row?.to_record()))
        .collect()
}

pub fn write_controller_csv(path: &Path, log: &[ControllerLogRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for row in log {
        w.serialize(row)?;
    }
    flush(w, path)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyKind {
    Simulate,
    Sweep,
    AccessStudy,
}

/// Everything needed to repeat a set of runs exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub kind: StudyKind,
    /// SHA-256 of the canonical TOML form of `config`.
    pub config_hash: String,
    pub class_mode: ClassMode,
    pub master_seed: u64,
    pub replications: u32,
    /// Seed of each replicate, hexadecimal.
    pub replicate_seeds: Vec<String>,
    #[serde(default)]
    pub proportions: Vec<f64>,
    #[serde(default)]
    pub fractions: Vec<f64>,
    #[serde(default)]
    pub trajectory_log: bool,
    #[serde(default)]
    pub policies: Vec<PolicySpec>,
    pub config: ScenarioConfig,
}

pub fn config_hash(cfg: &ScenarioConfig) -> String {
    Sha256::digest(cfg.to_toml().as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl Manifest {
    fn base(kind: StudyKind, cfg: &ScenarioConfig, trajectory_log: bool) -> Self {
        Manifest {
            tool: "mergelane".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            kind,
            config_hash: config_hash(cfg),
            class_mode: cfg.class_mode,
            master_seed: cfg.seed,
            replications: cfg.replications,
            replicate_seeds: (0..cfg.replications)
                .map(|r| format!("{:#018x}", replicate_seed(cfg.seed, r)))
                .collect(),
            proportions: Vec::new(),
            fractions: Vec::new(),
            trajectory_log,
            policies: Vec::new(),
            config: cfg.clone(),
        }
    }

    pub fn for_sweep(spec: &SweepSpec, kind: StudyKind, trajectory_log: bool) -> Self {
        Manifest {
            proportions: spec.proportions.clone(),
            policies: spec.policies.clone(),
            ..Self::base(kind, &spec.base, trajectory_log)
        }
    }

    pub fn for_study(base: &ScenarioConfig, fractions: &[f64], trajectory_log: bool) -> Self {
        Manifest {
            fractions: fractions.to_vec(),
            ..Self::base(StudyKind::AccessStudy, base, trajectory_log)
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::Config(format!("manifest: {e}")))?;
        let mut f = create(path)?;
        f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))?;
        f.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a manifest and checks its config against the recorded hash.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Manifest = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let actual = config_hash(&m.config);
        if actual != m.config_hash {
            return Err(Error::validation(format!(
                "manifest config hash {} does not match its config ({actual})",
                m.config_hash
            )));
        }
        Ok(m)
    }

    pub fn sweep_spec(&self) -> SweepSpec {
        SweepSpec::new(self.config.clone(), self.policies.clone(), self.proportions.clone())
    }
}

fn summary_header(first: &str) -> Vec<String> {
    [
        first,
        "replicate",
        "seed",
        "apd_s",
        "mean_vd_s",
        "generated",
        "exited",
        "queued_at_end",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

fn summary_fields(r: &RunSummary) -> Vec<String> {
    vec![
        r.replicate.to_string(),
        format!("{:#018x}", r.seed),
        r.apd.to_string(),
        r.mean_vd.to_string(),
        r.counts.generated.to_string(),
        r.counts.exited.to_string(),
        r.counts.queued_at_end.to_string(),
    ]
}

/// Writes the manifest and, when there are results, every aggregate file.
pub fn write_sweep_results(results: &SweepResults, out_dir: &Path, kind: StudyKind, trajectory_log: bool) -> Result<()> {
    Manifest::for_sweep(&results.spec, kind, trajectory_log).save(&out_dir.join(MANIFEST))?;
    if results.cells.is_empty() {
        return Ok(());
    }
    let spec = &results.spec;

    let path = out_dir.join("summary.csv");
    let mut w = csv_writer(&path)?;
    let mut header = vec!["policy".to_string()];
    header.extend(summary_header("proportion"));
    w.write_record(&header)?;
    for c in &results.cells {
        for r in &c.runs {
            let mut row = vec![c.policy.kind.to_string(), fmt_value(c.proportion)];
            row.extend(summary_fields(r));
            w.write_record(&row)?;
        }
    }
    flush(w, &path)?;

    for (name, stat) in [("sweep_table.csv", true), ("sweep_std.csv", false)] {
        let path = out_dir.join(name);
        let mut w = csv_writer(&path)?;
        let mut header = vec!["policy".to_string()];
        header.extend(spec.proportions.iter().map(|&p| fmt_value(p)));
        w.write_record(&header)?;
        for (k, policy) in spec.policies.iter().enumerate() {
            let mut row = vec![policy.kind.to_string()];
            for c in &results.cells[k * spec.proportions.len()..(k + 1) * spec.proportions.len()] {
                row.push(if stat { c.apd_mean() } else { c.apd_std() }.to_string());
            }
            w.write_record(&row)?;
        }
        flush(w, &path)?;
    }

    let path = out_dir.join("time_loss.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["policy", "proportion", "group", "vehicles", "mean_time_loss_s"])?;
    for c in &results.cells {
        for (g, (m, n)) in c.time_loss() {
            w.write_record([
                c.policy.kind.to_string(),
                fmt_value(c.proportion),
                g.to_string(),
                n.to_string(),
                m.to_string(),
            ])?;
        }
    }
    flush(w, &path)?;

    let path = out_dir.join("plots").join("apd_vs_proportion.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["policy", "proportion", "apd_mean_s", "apd_std_s"])?;
    for c in &results.cells {
        w.write_record([
            c.policy.kind.to_string(),
            fmt_value(c.proportion),
            c.apd_mean().to_string(),
            c.apd_std().to_string(),
        ])?;
    }
    flush(w, &path)
}

pub fn write_study_results(study: &FractionStudy, out_dir: &Path, trajectory_log: bool) -> Result<()> {
    Manifest::for_study(&study.base, &study.fractions(), trajectory_log).save(&out_dir.join(MANIFEST))?;
    if study.rows.is_empty() {
        return Ok(());
    }

    let path = out_dir.join("summary.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(summary_header("fraction"))?;
    for row in &study.rows {
        for r in &row.runs {
            let mut fields = vec![fmt_value(row.fraction)];
            fields.extend(summary_fields(r));
            w.write_record(&fields)?;
        }
    }
    flush(w, &path)?;

    for path in [out_dir.join("fraction_table.csv"), out_dir.join("plots").join("vd_vs_fraction.csv")] {
        let mut w = csv_writer(&path)?;
        w.write_record(["fraction", "vd_mean_s", "vd_std_s", "apd_mean_s"])?;
        for row in &study.rows {
            w.write_record([
                fmt_value(row.fraction),
                row.vd_mean().to_string(),
                row.vd_std().to_string(),
                row.apd_mean().to_string(),
            ])?;
        }
        flush(w, &path)?;
    }

    let path = out_dir.join("plots").join("speed_vs_position.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["fraction", "bin_start_m", "bin_end_m", "mean_speed_mps"])?;
    for row in &study.rows {
        let width = row.speed.bin_width;
        for (k, m) in row.speed.means().into_iter().enumerate() {
            w.write_record([
                fmt_value(row.fraction),
                (k as f64 * width).to_string(),
                ((k + 1) as f64 * width).to_string(),
                m.map_or(String::new(), |v| v.to_string()),
            ])?;
        }
    }
    flush(w, &path)
}

/// Outcome of repeating a manifest.
#[derive(Clone, Debug, PartialEq)]
pub enum Rerun {
    Sweep(SweepResults),
    Study(FractionStudy),
}

/// Repeats the runs recorded in a manifest, writing into `opts.out_dir`.
pub fn rerun(manifest: &Manifest, opts: &RunOptions) -> Result<Rerun> {
    let opts = RunOptions {
        trajectory_log: manifest.trajectory_log,
        ..opts.clone()
    };
    let out = opts.out_dir.clone();
    match manifest.kind {
        StudyKind::Simulate | StudyKind::Sweep => {
            let results = run_sweep(&manifest.sweep_spec(), &opts)?;
            if let Some(dir) = out {
                write_sweep_results(&results, &dir, manifest.kind, manifest.trajectory_log)?;
            }
            Ok(Rerun::Sweep(results))
        }
        StudyKind::AccessStudy => {
            let study = run_access_fraction_study(&manifest.config, &manifest.fractions, &opts)?;
            if let Some(dir) = out {
                write_study_results(&study, &dir, manifest.trajectory_log)?;
            }
            Ok(Rerun::Study(study))
        }
    }
}

/// Default directory for a rerun of the manifest at `path`.
pub fn rerun_dir(path: &Path) -> PathBuf {
    path.parent().unwrap_or(Path::new(".")).join("rerun")
}
