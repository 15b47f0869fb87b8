use std::path::{Path, PathBuf};

use mergelane::audit::audit_trajectory_csv;
use mergelane::demand::DemandProfile;
use mergelane::experiment::{
    arrivals, fmt_value, read_records_csv, rerun, run_access_fraction_study, run_scenario, run_sweep, vehicle_traits,
    write_study_results, write_sweep_results, Manifest, RunOptions, ScenarioConfig, StudyKind, SweepSpec, MANIFEST,
};
use mergelane::metrics::{apd, mean};
use mergelane::policy::{PolicyKind, PolicySpec};

fn small(kind: PolicyKind) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::new(DemandProfile::constant(2400, 600.0), PolicySpec::new(kind));
    cfg.seed = 5;
    cfg.replications = 3;
    cfg
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(files(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

#[test]
fn degenerate_sweep_is_mean_of_runs() {
    let cfg = small(PolicyKind::Dbl);
    let spec = SweepSpec::new(cfg.clone(), vec![cfg.policy], vec![0.0]);
    let res = run_sweep(&spec, &RunOptions::default()).unwrap();
    assert_eq!(res.cells.len(), 1);
    let mut direct = cfg.clone();
    direct.cav_proportion = Some(0.0);
    let apds: Vec<f64> = (0..3).map(|r| run_scenario(&direct, r).unwrap().apd).collect();
    assert_eq!(res.cells[0].apd_mean(), mean(&apds));
}

#[test]
fn cell_means_recompute_from_written_records() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(PolicyKind::CavDynamic { v_param: 24.0 });
    let spec = SweepSpec::new(cfg.clone(), vec![cfg.policy, PolicySpec::new(PolicyKind::Dbl)], vec![0.2, 0.6]);
    let opts = RunOptions {
        out_dir: Some(dir.path().to_path_buf()),
        ..Default::default()
    };
    let res = run_sweep(&spec, &opts).unwrap();
    write_sweep_results(&res, dir.path(), StudyKind::Sweep, false).unwrap();
    for c in &res.cells {
        let apds: Vec<f64> = (0..3)
            .map(|r| {
                let path = dir
                    .path()
                    .join("runs")
                    .join(c.policy.kind.to_string())
                    .join(fmt_value(c.proportion))
                    .join(format!("{r}.csv"));
                apd(&read_records_csv(&path).unwrap()).unwrap()
            })
            .collect();
        assert_eq!(mean(&apds), c.apd_mean());
    }
    let table = std::fs::read_to_string(dir.path().join("sweep_table.csv")).unwrap();
    assert_eq!(table.lines().next(), Some("policy,0.2,0.6"));
    assert_eq!(table.lines().count(), 3);
    assert!(dir.path().join("controller/CAVDynamic_24/0.2/0.csv").exists());
    assert!(!dir.path().join("controller/DBL").exists());
}

#[test]
fn manifest_rerun_reproduces_tables() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let cfg = small(PolicyKind::CavStaticPlus(2));
    let spec = SweepSpec::new(cfg.clone(), vec![cfg.policy], vec![0.3, 0.9]);
    let opts = RunOptions {
        out_dir: Some(first.clone()),
        ..Default::default()
    };
    let res = run_sweep(&spec, &opts).unwrap();
    write_sweep_results(&res, &first, StudyKind::Sweep, false).unwrap();

    let manifest = Manifest::load(&first.join(MANIFEST)).unwrap();
    assert_eq!(manifest.replicate_seeds.len(), 3);
    let second = dir.path().join("second");
    rerun(
        &manifest,
        &RunOptions {
            jobs: 2,
            out_dir: Some(second.clone()),
            trajectory_log: false,
        },
    )
    .unwrap();
    for name in ["sweep_table.csv", "sweep_std.csv", "summary.csv", "time_loss.csv", MANIFEST] {
        assert_eq!(
            std::fs::read(first.join(name)).unwrap(),
            std::fs::read(second.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn tampered_manifest_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(PolicyKind::Dbl);
    let m = Manifest::for_sweep(&SweepSpec::new(cfg.clone(), vec![cfg.policy], vec![0.1]), StudyKind::Sweep, false);
    let path = dir.path().join(MANIFEST);
    m.save(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap().replace("replications = 3", "replications = 4");
    std::fs::write(&path, text).unwrap();
    assert!(Manifest::load(&path).is_err());
}

#[test]
fn empty_sweep_writes_only_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(PolicyKind::Dbl);
    let spec = SweepSpec::new(cfg, vec![], vec![0.1]);
    let res = run_sweep(&spec, &RunOptions::default()).unwrap();
    assert!(res.cells.is_empty());
    write_sweep_results(&res, dir.path(), StudyKind::Sweep, false).unwrap();
    assert_eq!(files(dir.path()), vec![dir.path().join(MANIFEST)]);
}

#[test]
fn execution_order_does_not_change_results() {
    let cfg = small(PolicyKind::CavDynamic { v_param: 23.0 });
    let kinds = [PolicyKind::Dbl, PolicyKind::Plus(2), cfg.policy.kind];
    let forward = SweepSpec::new(cfg.clone(), kinds.iter().map(|&k| PolicySpec::new(k)).collect(), vec![0.1, 0.5]);
    let backward = SweepSpec::new(cfg, kinds.iter().rev().map(|&k| PolicySpec::new(k)).collect(), vec![0.5, 0.1]);
    let a = run_sweep(&forward, &RunOptions { jobs: 1, ..Default::default() }).unwrap();
    let b = run_sweep(&backward, &RunOptions { jobs: 3, ..Default::default() }).unwrap();
    for c in &a.cells {
        let other = b.cell(&c.policy.kind.to_string(), c.proportion).unwrap();
        assert_eq!(c.runs, other.runs);
    }
}

#[test]
fn replicates_get_distinct_seeds() {
    let mut cfg = small(PolicyKind::Dbl);
    cfg.replications = 10;
    let res = run_sweep(&SweepSpec::new(cfg.clone(), vec![cfg.policy], vec![0.1]), &RunOptions::default()).unwrap();
    let mut seeds: Vec<u64> = res.cells[0].runs.iter().map(|r| r.seed).collect();
    assert_eq!(seeds.len(), 10);
    seeds.sort();
    seeds.dedup();
    assert_eq!(seeds.len(), 10);
}

#[test]
fn policies_share_arrivals_but_not_trajectories() {
    let dbl = small(PolicyKind::Dbl);
    let mut dynamic = small(PolicyKind::CavDynamic { v_param: 24.0 });
    dynamic.cav_proportion = Some(0.5);
    let mut dbl_half = dbl.clone();
    dbl_half.cav_proportion = Some(0.5);
    assert_eq!(arrivals(&dbl_half, 1).unwrap(), arrivals(&dynamic, 1).unwrap());
    let a = run_scenario(&dbl_half, 1).unwrap();
    let b = run_scenario(&dynamic, 1).unwrap();
    assert_ne!(a.records, b.records);
}

#[test]
fn proportions_relabel_the_same_arrival_times() {
    let mut low = small(PolicyKind::Dbl);
    low.cav_proportion = Some(0.2);
    let mut high = low.clone();
    high.cav_proportion = Some(0.6);
    let (a, b) = (arrivals(&low, 0).unwrap(), arrivals(&high, 0).unwrap());
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.depart_wanted, y.depart_wanted);
        assert_eq!(x.passengers, y.passengers);
        if x.class == mergelane::vehicle::VehicleClass::Cav {
            assert_eq!(y.class, x.class);
        }
    }
}

#[test]
fn zero_access_fraction_equals_bus_only_lane() {
    let mut token = small(PolicyKind::Dbl);
    token.access_fraction = Some(0.0);
    let dbl = small(PolicyKind::Dbl);
    assert_eq!(run_scenario(&token, 0).unwrap().records, run_scenario(&dbl, 0).unwrap().records);
}

#[test]
fn access_study_writes_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(PolicyKind::Dbl);
    cfg.replications = 2;
    let opts = RunOptions {
        out_dir: Some(dir.path().to_path_buf()),
        ..Default::default()
    };
    let study = run_access_fraction_study(&cfg, &[0.2, 1.0], &opts).unwrap();
    write_study_results(&study, dir.path(), false).unwrap();
    let vd = std::fs::read_to_string(dir.path().join("plots/vd_vs_fraction.csv")).unwrap();
    assert_eq!(vd.lines().count(), 3);
    let speed = std::fs::read_to_string(dir.path().join("plots/speed_vs_position.csv")).unwrap();
    assert_eq!(speed.lines().count(), 1 + 2 * 10);
    assert!(dir.path().join("runs/access/0.2/1.csv").exists());
    let manifest = Manifest::load(&dir.path().join(MANIFEST)).unwrap();
    assert_eq!(manifest.fractions, vec![0.2, 1.0]);
}

#[test]
fn invalid_grids_are_rejected() {
    let cfg = small(PolicyKind::Dbl);
    assert!(run_sweep(&SweepSpec::new(cfg.clone(), vec![cfg.policy], vec![1.5]), &RunOptions::default()).is_err());
    assert!(run_access_fraction_study(&cfg, &[-0.1], &RunOptions::default()).is_err());
}

#[test]
fn written_trajectory_passes_audit() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(PolicyKind::CavDynamic { v_param: 24.0 });
    cfg.replications = 1;
    cfg.cav_proportion = Some(0.4);
    let opts = RunOptions {
        out_dir: Some(dir.path().to_path_buf()),
        trajectory_log: true,
        ..Default::default()
    };
    run_sweep(&SweepSpec::new(cfg.clone(), vec![cfg.policy], vec![0.4]), &opts).unwrap();
    let traj = std::fs::File::open(dir.path().join("trajectories/CAVDynamic_24/0.4/0.csv")).unwrap();
    let ctx = cfg.context().unwrap();
    let result = run_scenario(&cfg, 0).unwrap();
    let report = audit_trajectory_csv(
        traj,
        &ctx,
        &vehicle_traits(&cfg, 0).unwrap(),
        cfg.profile().unwrap().start(),
        &result.controller_log,
    )
    .unwrap();
    assert!(report.rows > 0);
    assert!(report.is_clean(), "{:?}", report.messages);
}

#[test]
fn config_round_trips_through_toml() {
    let cfg = small(PolicyKind::Plus(3));
    let text = cfg.to_toml();
    let back = ScenarioConfig::parse(&text, Path::new("inline"), Path::new(".")).unwrap();
    assert_eq!(back, cfg);
}

#[test]
fn shipped_configs_validate() {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["daily3.cfg", "constant_3000.cfg", "case_study.cfg"] {
        ScenarioConfig::load(root.join(name)).unwrap();
    }
    let err = ScenarioConfig::load(root.join("broken.cfg")).unwrap_err();
    assert!(err.to_string().contains("class probabilities"));
}
