//! Acceptance suite: one line per criterion, exit status non-zero when a
//! criterion outside `KNOWN_FAILURES` fails.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use mergelane::audit::Auditor;
use mergelane::demand::{DemandProfile, Exact};
use mergelane::experiment::{
    arrivals, initial_world, run_access_fraction_study, run_scenario, run_sweep, vehicle_traits, write_records_csv,
    RunOptions, ScenarioConfig, SweepCell, SweepSpec,
};
use mergelane::metrics::{apd, depart_delay, time_loss, vehicle_delay, TimeLossGroup, VehicleRecord};
use mergelane::network::default_network;
use mergelane::policy::{record_speed_sample, update_threshold, ControllerState, PolicyKind, PolicySpec};
use mergelane::sim::{run, SimContext, VehicleTraits, WorldState};
use mergelane::vehicle::VehicleClass;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria that fail with the current model; see the README.
const KNOWN_FAILURES: &[u32] = &[9];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn repo(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn daily3() -> ScenarioConfig {
    ScenarioConfig::load(repo("configs/daily3.cfg")).expect("shipped Daily_3 config loads")
}

fn constant3000() -> ScenarioConfig {
    ScenarioConfig::load(repo("configs/constant_3000.cfg")).expect("shipped Constant_3000 config loads")
}

fn policy(name: &str) -> PolicySpec {
    PolicySpec::new(name.parse().expect("policy name"))
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

// Criterion 1: weighted mean against a per-passenger expansion.
fn metric_oracle() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let records: Vec<VehicleRecord<f64>> = (0..1000)
        .map(|id| {
            let wanted = rng.random_range(0.0..50_000.0);
            let actual = wanted + rng.random_range(0.0..300.0);
            let free = 40.0;
            VehicleRecord {
                id,
                class: [VehicleClass::Hdv, VehicleClass::Cav, VehicleClass::Bus][rng.random_range(0..3)],
                passengers: rng.random_range(1..=60),
                depart_wanted: wanted,
                depart_actual: Some(actual),
                exit_time: Some(actual + free + rng.random_range(0.0..900.0)),
                free_flow_time: free,
            }
        })
        .collect();
    let mut per_passenger = Vec::new();
    for r in &records {
        let delay = (r.exit_time.unwrap() - r.depart_actual.unwrap() - r.free_flow_time)
            + (r.depart_actual.unwrap() - r.depart_wanted);
        per_passenger.extend(std::iter::repeat_n(delay, r.passengers as usize));
    }
    let brute = per_passenger.iter().sum::<f64>() / per_passenger.len() as f64;
    let got = apd(&records).unwrap();
    let identities = records.iter().all(|r| {
        let tl = time_loss(r).unwrap();
        let dd = depart_delay(r).unwrap();
        tl == r.exit_time.unwrap() - r.depart_actual.unwrap() - r.free_flow_time
            && dd == r.depart_actual.unwrap() - r.depart_wanted
            && vehicle_delay(r).unwrap() == tl + dd
    });
    let err = rel_err(got, brute);
    let elapsed = t0.elapsed();
    outcome(
        err <= 1e-9 && identities && elapsed < Duration::from_secs(1),
        format!("rel err {err:.2e}, identities {identities}, {elapsed:.2?}"),
    )
}

// Criterion 2: scripted interval means around 22 m/s.
fn controller_trajectory() -> Outcome {
    let spec = policy("CAVDynamic_22");
    let speeds = [23.0, 20.0, 21.0, 19.0, 18.0, 10.0, 22.0, 24.0, 25.0, 30.0];
    // below 22 raises, above lowers, equal holds; clamped to 1..=5
    let expected: [u8; 10] = [1, 2, 3, 4, 5, 5, 5, 4, 3, 2];
    let mut st = ControllerState::<f64>::new(1, 0.0);
    let mut got = Vec::new();
    let mut bounded = true;
    let mut t = 0.0;
    for &v in &speeds {
        for _ in 0..60 {
            record_speed_sample(&mut st, v);
            t += 1.0;
        }
        let row = update_threshold(&mut st, &spec, t).expect("interval elapsed");
        bounded &= (i16::from(row.threshold_after) - i16::from(row.threshold_before)).abs() <= 1;
        got.push(st.threshold);
    }
    outcome(
        got == expected && bounded,
        format!("trajectory {got:?}, expected {expected:?}"),
    )
}

// Criterion 3: repeat runs and cross-policy arrival streams.
fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = daily3();
    cfg.policy = policy("CAVDynamic_24");
    let a = run_scenario(&cfg, 0).unwrap();
    let b = run_scenario(&cfg, 0).unwrap();
    write_records_csv(&dir.path().join("a.csv"), &a.records).unwrap();
    write_records_csv(&dir.path().join("b.csv"), &b.records).unwrap();
    let same_csv = std::fs::read(dir.path().join("a.csv")).unwrap() == std::fs::read(dir.path().join("b.csv")).unwrap();

    let mut same_arrivals = true;
    for rep in 0..3 {
        let mut bytes = Vec::new();
        for name in ["DBL", "Plus_2", "CAVStaticPlus_3", "CAVDynamic_24"] {
            let mut c = daily3();
            c.policy = policy(name);
            let mut w = csv::Writer::from_writer(Vec::new());
            for e in arrivals(&c, rep).unwrap() {
                w.serialize(e).unwrap();
            }
            bytes.push(w.into_inner().unwrap());
        }
        same_arrivals &= bytes.windows(2).all(|p| p[0] == p[1]);
    }
    outcome(
        same_csv && same_arrivals,
        format!("repeat run CSV identical {same_csv}, arrivals identical across policies {same_arrivals}"),
    )
}

// Criterion 4: Constant_3000 counts and gaps.
fn arrival_statistics() -> Outcome {
    let t0 = Instant::now();
    let mut cfg = constant3000();
    cfg.replications = 100;
    let counts: Vec<f64> = (0..100).map(|r| arrivals(&cfg, r).unwrap().len() as f64).collect();
    let mean_count = counts.iter().sum::<f64>() / counts.len() as f64;
    let half = 3.0 * 3000f64.sqrt();
    let count_ok = (3000.0 - half..=3000.0 + half).contains(&mean_count);

    // same rate over ten hours
    let mut long = cfg.clone();
    long.demand = mergelane::experiment::DemandConfig::inline(DemandProfile::constant(3000, 36_000.0));
    let events = arrivals(&long, 0).unwrap();
    let gaps: Vec<f64> = events.windows(2).map(|w| w[1].depart_wanted - w[0].depart_wanted).collect();
    let mean_gap = gaps.iter().sum::<f64>() / gaps.len() as f64;
    let gap_ok = (mean_gap - 1.2).abs() <= 0.03 * 1.2;
    let elapsed = t0.elapsed();
    outcome(
        count_ok && gap_ok && elapsed < Duration::from_secs(10),
        format!(
            "mean count {mean_count:.1}, mean gap {mean_gap:.4} s over {} arrivals, {elapsed:.2?}",
            events.len()
        ),
    )
}

// Criterion 5: audited Daily_3 run under every policy.
fn safety_invariants() -> Outcome {
    let mut failures = Vec::new();
    let mut rows = 0;
    for kind in PolicySpec::all_policies() {
        let mut cfg = daily3();
        cfg.policy = PolicySpec::new(kind);
        cfg.cav_proportion = Some(0.3);
        cfg.hdv_violation_rate = 0.05;
        let ctx = cfg.context().unwrap();
        let traits = vehicle_traits(&cfg, 0).unwrap();
        let mut world = initial_world(&cfg, &ctx, 0).unwrap();
        let mut auditor = Auditor::new(&ctx, &traits, cfg.profile().unwrap().start());
        run(&ctx, &mut world, &mut [&mut auditor]).unwrap();
        let report = auditor.finish();
        rows += report.rows;
        if !report.is_clean() {
            failures.push(format!("{kind}: {:?}", report.messages.first()));
        }
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!("15 policies, {rows} vehicle-ticks, no violations")
        } else {
            failures.join("; ")
        },
    )
}

// Criterion 6: one vehicle on the empty road.
fn free_flow() -> Outcome {
    let ctx = SimContext::new(default_network(), PolicySpec::new(PolicyKind::Dbl));
    let traits = vec![VehicleTraits::new(0, VehicleClass::Hdv, 1, 0.0)];
    let mut world = WorldState::new(&ctx, traits, 0.0, ChaCha8Rng::seed_from_u64(1));
    run(&ctx, &mut world, &mut []).unwrap();
    let r = &world.completed()[0];
    let da = r.travel_time().unwrap();
    let tl = time_loss(r).unwrap();
    outcome(
        (da - 40.0).abs() <= ctx.dt && tl.abs() <= ctx.dt,
        format!("D_a {da:.3} s, timeLoss {tl:.3} s"),
    )
}

// Criterion 7: access-fraction study.
fn access_fraction_trend() -> Outcome {
    let t0 = Instant::now();
    let fractions: Vec<f64> = (1..=10).map(|k| Exact(num_rational::Ratio::new(k, 10)).to_f64()).collect();
    let study = run_access_fraction_study(&constant3000(), &fractions, &RunOptions::default()).unwrap();
    let best = study.best_fraction().unwrap();
    let row = |f: f64| study.rows.iter().find(|r| r.fraction == f).unwrap();
    let (r2, r10) = (row(0.2), row(1.0));
    let separated = r2.vd_mean() + r2.vd_std() < r10.vd_mean() - r10.vd_std();
    let elapsed = t0.elapsed();
    let curve: Vec<String> = study.rows.iter().map(|r| format!("{:.0}", r.vd_mean())).collect();
    outcome(
        best <= 0.3 + 1e-12 && separated && elapsed < Duration::from_secs(300),
        format!(
            "min at f={best}, VD(0.2) {:.1}±{:.1} vs VD(1.0) {:.1}±{:.1}, curve [{}], {elapsed:.1?}",
            r2.vd_mean(),
            r2.vd_std(),
            r10.vd_mean(),
            r10.vd_std(),
            curve.join(", ")
        ),
    )
}

fn cell<'a>(cells: &'a [SweepCell], name: &str, p: f64) -> &'a SweepCell {
    cells
        .iter()
        .find(|c| c.policy.kind.to_string() == name && c.proportion == p)
        .unwrap_or_else(|| panic!("cell {name} {p}"))
}

// Criterion 8: APD ordering against DBL.
fn table_ordering(cav: &[SweepCell], dbl: &[SweepCell]) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for p in [0.1, 0.2] {
        let base = cell(dbl, "DBL", p).apd_mean();
        parts.push(format!("DBL@{p} {base:.1}"));
        for name in ["CAVDynamic_22", "CAVDynamic_23", "CAVDynamic_24", "CAVDynamic_25"] {
            let m = cell(cav, name, p).apd_mean();
            ok &= m < base;
            parts.push(format!("{name}@{p} {m:.1}"));
        }
    }
    let base = cell(dbl, "DBL", 1.0).apd_mean();
    let s3 = cell(cav, "CAVStaticPlus_3", 1.0).apd_mean();
    ok &= s3 < base;
    parts.push(format!("CAVStaticPlus_3@1 {s3:.1} vs DBL@1 {base:.1}"));
    outcome(ok, parts.join(", "))
}

fn cav_time_loss(groups: &BTreeMap<TimeLossGroup, (f64, u64)>) -> (f64, Vec<f64>) {
    let (mut sum, mut n) = (0.0, 0u64);
    let mut by_pax = vec![f64::NAN; 5];
    for (g, &(m, k)) in groups {
        if let TimeLossGroup::Cav { passengers } = g {
            sum += m * k as f64;
            n += k;
            if (1..=5).contains(passengers) {
                by_pax[*passengers as usize - 1] = m;
            }
        }
    }
    (sum / n as f64, by_pax)
}

// Criterion 9: incentives under CAVDynamic_24.
fn incentive_trend(cav: &[SweepCell]) -> Outcome {
    let low = cell(cav, "CAVDynamic_24", 0.1).time_loss();
    let (cav_tl, _) = cav_time_loss(&low);
    let hdv_tl = low[&TimeLossGroup::Hdv].0;
    let mut ok = cav_tl < hdv_tl;
    let mut parts = vec![format!("@0.1 CAV {cav_tl:.2} vs HDV {hdv_tl:.2}")];
    for k in 3..=10 {
        let p = Exact(num_rational::Ratio::new(k, 10)).to_f64();
        let (_, by_pax) = cav_time_loss(&cell(cav, "CAVDynamic_24", p).time_loss());
        let monotone = by_pax.windows(2).all(|w| w[1] <= w[0]);
        ok &= monotone;
        let shown: Vec<String> = by_pax.iter().map(|v| format!("{v:.2}")).collect();
        parts.push(format!("@{p} [{}]{}", shown.join(" "), if monotone { "" } else { " not monotone" }));
    }
    outcome(ok, parts.join(", "))
}

// Criterion 10: frozen controller and full access.
fn policy_equivalences() -> Outcome {
    let mut cfg = daily3();
    cfg.cav_proportion = Some(0.5);
    let fixture: Vec<VehicleTraits> = vehicle_traits(&cfg, 0).unwrap().into_iter().take(10_000).collect();
    let mut decisions_equal = fixture.len() == 10_000;
    for i in 1..=5u8 {
        let frozen = ControllerState::<f64>::new(i, 0.0);
        let dynamic = policy("CAVDynamic_24");
        let fixed = PolicySpec::new(PolicyKind::CavStaticPlus(i));
        decisions_equal &= fixture
            .iter()
            .all(|v| dynamic.permits(&frozen, v.class, v.passengers) == fixed.permits(&frozen, v.class, v.passengers));
    }

    let mut full = constant3000();
    full.access_fraction = Some(1.0);
    let open = constant3000();
    let mut ctx = open.context().unwrap();
    ctx.network = ctx.network.without_restriction();
    let a = run_scenario(&full, 0).unwrap();
    let mut world = initial_world(&open, &ctx, 0).unwrap();
    run(&ctx, &mut world, &mut []).unwrap();
    let (mut open_records, _) = world.into_results();
    open_records.sort_by_key(|r| r.id);
    let runs_equal = a.records == open_records;
    outcome(
        decisions_equal && runs_equal,
        format!(
            "frozen-threshold decisions equal {decisions_equal} ({} vehicles), f=1 vs unrestricted records equal {runs_equal} ({} vehicles)",
            fixture.len(),
            a.records.len()
        ),
    )
}

fn main() {
    let mut results: BTreeMap<u32, Outcome> = BTreeMap::new();
    let step = |results: &mut BTreeMap<u32, Outcome>, n: u32, f: &dyn Fn() -> Outcome| {
        let t0 = Instant::now();
        let o = f();
        eprintln!("  criterion {n} evaluated in {:.1?}", t0.elapsed());
        results.insert(n, o);
    };
    step(&mut results, 1, &metric_oracle);
    step(&mut results, 2, &controller_trajectory);
    step(&mut results, 3, &determinism);
    step(&mut results, 4, &arrival_statistics);
    step(&mut results, 5, &safety_invariants);
    step(&mut results, 6, &free_flow);
    step(&mut results, 7, &access_fraction_trend);

    // Criterion 11 runs the 9-policy sweep that criteria 8 and 9 read.
    let t0 = Instant::now();
    let single = {
        let t = Instant::now();
        run_scenario(&daily3(), 0).unwrap();
        t.elapsed()
    };
    let proportions: Vec<f64> = (1..=10).map(|k| Exact(num_rational::Ratio::new(k, 10)).to_f64()).collect();
    let base = daily3();
    let cav_spec = SweepSpec::new(
        base.clone(),
        PolicySpec::cav_policies().into_iter().map(PolicySpec::new).collect(),
        proportions,
    );
    let t = Instant::now();
    let cav = run_sweep(&cav_spec, &RunOptions::default()).unwrap();
    let sweep_time = t.elapsed();
    let dbl_spec = SweepSpec::new(base, vec![policy("DBL")], vec![0.1, 0.2, 1.0]);
    let dbl = run_sweep(&dbl_spec, &RunOptions::default()).unwrap();
    let vehicles = cav.cells[0].runs[0].counts.generated;
    results.insert(
        11,
        outcome(
            single < Duration::from_secs(60) && sweep_time < Duration::from_secs(1800),
            format!(
                "one replication ({vehicles} vehicles) {single:.2?}, 9x10x10 sweep {sweep_time:.1?} on {} threads",
                rayon::current_num_threads()
            ),
        ),
    );
    eprintln!("  criteria 8, 9 and 11 runs took {:.1?}", t0.elapsed());
    results.insert(8, table_ordering(&cav.cells, &dbl.cells));
    results.insert(9, incentive_trend(&cav.cells));
    step(&mut results, 10, &policy_equivalences);

    let mut unexpected = 0;
    for (n, o) in &results {
        let status = match (o.pass, KNOWN_FAILURES.contains(n)) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => {
                unexpected += 1;
                "FAIL"
            }
        };
        println!("criterion {n:>2}: {status:<12} {}", o.detail);
    }
    if unexpected > 0 {
        std::process::exit(1);
    }
}
