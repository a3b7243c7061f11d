//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if
//! any criterion fails. Runs without the libtest harness so the lines are
//! always printed, in order.

use std::cell::Cell;
use std::f64::consts::PI;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, RngAlgorithm, TestRng, TestRunner};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Exp, Gamma, Normal};

use v2x_calib::calibration::{
    evolve, history_to_csv, parse_history_csv, EvaluationRecord, GaConfig, Gene, GeneValue, Genome,
    Objective, SearchSpace, PENALTY_RMSE,
};
use v2x_calib::config::RunConfig;
use v2x_calib::dataio::{
    export_heatmap_csv, export_log_csv, export_pdr_csv, export_trace_csv, generate_synthetic,
    parse_heatmap_csv, parse_log_csv, parse_pdr_csv, parse_trace_csv, synthetic_trace, EnuPoint,
    ProjectedTrace, SyntheticDataset, SyntheticSpec, TimeFormat, Waypoint,
};
use v2x_calib::propagation::{
    free_space_rx_power, lognormal_rx_power, nakagami_power_sample, slow_fading_mean_power,
    DataRate, FadingParams, RadioParams, DEFAULT_SNR_THRESHOLDS_DB,
};
use v2x_calib::simulator::{heatmap, pdr_curve, run_scenario, DirectionFilter, ScenarioConfig};

/// Shuttle passes in the recovery / oracle dataset. A single 2 km pass
/// gives about 60 sends per 20 m bin; 200 passes give about 12 000, which
/// puts the sampling-noise floor of the RMSE near 0.6 pp.
const ORACLE_PASSES: u32 = 200;

type Check = Result<String, String>;

fn ensure(cond: bool, detail: String) -> Check {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn oracle_spec() -> SyntheticSpec {
    SyntheticSpec::drive_by().with_passes(ORACLE_PASSES)
}

fn oracle_dataset() -> SyntheticDataset {
    generate_synthetic(&oracle_spec(), &ScenarioConfig::default()).expect("oracle dataset")
}

fn cli(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_v2x-calib"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    } else {
        Err(format!(
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn runner_with(config: PropConfig) -> TestRunner {
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

// 1 ------------------------------------------------------------------------

fn free_space_value() -> Check {
    let oracle = 10.0 * (20.0 * (299_792_458.0_f64 / 5.9e9).powi(2) / (4.0 * PI).powi(2)).log10();
    let got = free_space_rx_power(
        &RadioParams::table_default(),
        &FadingParams::table_default(),
    )
    .map_err(|e| e.to_string())?;
    ensure(
        (got + 34.85).abs() <= 0.05 && (got - oracle).abs() <= 1e-9,
        format!("P_r(1 m) = {got:.4} dBm, oracle {oracle:.4} dBm, target -34.85 +/- 0.05"),
    )
}

// 2 ------------------------------------------------------------------------

fn nakagami_moments() -> Check {
    let n = 1_000_000;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let xs: Vec<f64> = (0..n)
        .map(|_| nakagami_power_sample(4.0, 2.0, &mut rng).unwrap())
        .collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;

    let mut ys: Vec<f64> = (0..n)
        .map(|_| nakagami_power_sample(4.0, 1.0, &mut rng).unwrap())
        .collect();
    ys.sort_by(f64::total_cmp);
    let exp = Exp::new(1.0 / 4.0).unwrap();
    let ks = ys
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let f = exp.cdf(y);
            (f - i as f64 / n as f64).max((i + 1) as f64 / n as f64 - f)
        })
        .fold(0.0, f64::max);
    ensure(
        (mean - 4.0).abs() <= 0.04 && (var - 8.0).abs() <= 0.24 && ks < 0.002,
        format!("m=2: mean {mean:.4} (4 +/- 1%), var {var:.4} (8 +/- 3%); m=1 KS vs exponential {ks:.5} (< 0.002)"),
    )
}

// 3 ------------------------------------------------------------------------

fn lognormal_residuals() -> Check {
    let radio = RadioParams::table_calibrated();
    let fading = FadingParams::table_calibrated();
    let d = 150.0;
    let mean_db = slow_fading_mean_power(&radio, &fading, d).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 1_000_000;
    let r: Vec<f64> = (0..n)
        .map(|_| lognormal_rx_power(&radio, &fading, d, &mut rng).unwrap() - mean_db)
        .collect();
    let m = r.iter().sum::<f64>() / n as f64;
    let sd = (r.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    ensure(
        (sd / 6.03 - 1.0).abs() <= 0.02 && m.abs() < 0.02,
        format!("residual std {sd:.4} dB (6.03 +/- 2%), mean {m:.4} dB (|.| < 0.02)"),
    )
}

// 4 ------------------------------------------------------------------------

/// Reference distance at which free-space "gain" is about +1 dB: genomes
/// with system loss below that margin amplify the signal.
const CONTRIVED_D0: f64 = 0.0036;

fn contrived_margin_db() -> f64 {
    20.0 * (299_792_458.0 / 5.9e9 / (4.0 * PI * CONTRIVED_D0)).log10()
}

fn penalty_semantics() -> Check {
    let trace = ProjectedTrace::from_positions([
        (0.0, EnuPoint::new(10.0, 0.0, 0.0)),
        (10.0, EnuPoint::new(150.0, 0.0, 0.0)),
    ]);
    let scenario = ScenarioConfig::default();
    let radio = RadioParams::table_default();
    let fading = FadingParams {
        reference_distance_m: CONTRIVED_D0,
        ..FadingParams::table_default()
    };
    let (r, f) = Genome::table_calibrated().to_params(&radio, &FadingParams::table_default());
    let observed = pdr_curve(&run_scenario(&trace, &scenario, &r, &f).unwrap(), 20.0).unwrap();
    let objective = Objective::with_templates(
        &observed,
        &trace,
        &scenario,
        &radio,
        &fading,
        DirectionFilter::Both,
    )
    .unwrap();
    let margin = contrived_margin_db();

    let space = SearchSpace::table();
    let mut runner = runner_with(PropConfig {
        cases: 256,
        failure_persistence: None,
        ..PropConfig::default()
    });
    let (penalized, feasible) = (Cell::new(0), Cell::new(0));
    runner
        .run(&any::<u64>(), |seed| {
            let g = space.random_genome(&mut ChaCha8Rng::seed_from_u64(seed));
            let v = objective.evaluate(&g).unwrap();
            if g.system_loss_db < margin {
                penalized.set(penalized.get() + 1);
                prop_assert_eq!(v, PENALTY_RMSE);
            } else {
                feasible.set(feasible.get() + 1);
                prop_assert!(v < PENALTY_RMSE);
            }
            Ok(())
        })
        .map_err(|e| format!("objective: {e}"))?;

    let config = GaConfig {
        population_size: 12,
        generations: 8,
        master_seed: 4,
        ..GaConfig::default()
    };
    let result = evolve(&config, &objective, &space, 0).map_err(|e| e.to_string())?;
    let by_gen: Vec<&[EvaluationRecord]> = result.history.chunks(config.population_size).collect();
    for w in by_gen.windows(2) {
        let feasible_prev = w[0].iter().filter(|r| r.rmse < PENALTY_RMSE).count();
        let elites = &w[1][..config.elite_count];
        if feasible_prev >= config.elite_count && elites.iter().any(|r| r.rmse >= PENALTY_RMSE) {
            return Err("a penalized genome survived as elite over feasible ones".into());
        }
    }
    ensure(
        result.best_rmse < PENALTY_RMSE && result.best_genome.system_loss_db >= margin,
        format!(
            "{} penalized genomes scored exactly 1000.0, {} feasible scored below; GA best {:.3} is feasible",
            penalized.get(),
            feasible.get(),
            result.best_rmse
        ),
    )
}

// 5 ------------------------------------------------------------------------

fn summary_value(text: &str, key: &str) -> Result<f64, String> {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .find(|(k, _)| k.trim() == key)
        .and_then(|(_, v)| v.trim().parse().ok())
        .ok_or_else(|| format!("`{key}` missing from summary"))
}

fn parameter_recovery() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec = tmp.path().join("spec.txt");
    fs::write(&spec, format!("passes = {ORACLE_PASSES}\n")).unwrap();
    let data = tmp.path().join("data");
    cli(&["synth", "--config", p(&spec), "--out", p(&data)])?;
    let out = tmp.path().join("cal");
    cli(&[
        "calibrate",
        "--observed",
        p(&data.join("pdr.csv")),
        "--trace",
        p(&data.join("trace.csv")),
        "--out",
        p(&out),
        "--population",
        "24",
        "--generations",
        "40",
        "--seed",
        "42",
    ])?;
    let summary = fs::read_to_string(out.join("best.txt")).map_err(|e| e.to_string())?;
    let rmse = summary_value(&summary, "best_rmse")?;
    let evals = summary_value(&summary, "evaluations")?;
    let alpha = summary_value(&summary, "alpha")?;
    let sigma = summary_value(&summary, "sigma")?;
    let checks = [
        (evals == 960.0, format!("evaluations {evals}")),
        (rmse <= 1.0, format!("best_rmse {rmse:.3} (<= 1.0)")),
        (
            (alpha - 1.51).abs() <= 0.25,
            format!("alpha {alpha:.3} (1.51 +/- 0.25)"),
        ),
        (
            (sigma - 6.03).abs() <= 1.5,
            format!("sigma {sigma:.3} (6.03 +/- 1.5)"),
        ),
    ];
    let detail = checks
        .iter()
        .map(|(ok, s)| format!("{s} {}", if *ok { "ok" } else { "MISS" }))
        .collect::<Vec<_>>()
        .join(", ");
    ensure(checks.iter().all(|(ok, _)| *ok), detail)
}

// 6 ------------------------------------------------------------------------

fn improvement_ordering(ds: &SyntheticDataset) -> Check {
    let scenario = ScenarioConfig::default();
    let objective =
        Objective::new(&ds.curve, &ds.projected, &scenario).map_err(|e| e.to_string())?;
    let default = Genome::table_default();
    let mut raised = default;
    raised
        .set(Gene::NoiseFloor, GeneValue::Real(-90.0))
        .unwrap();
    let calibrated = Genome::table_calibrated();
    let [a, b, c] = [default, raised, calibrated].map(|g| objective.evaluate(&g).unwrap());
    ensure(
        a > b && b > c,
        format!("default {a:.3} > noise -90 dBm {b:.3} > calibrated {c:.3}"),
    )
}

// 7 ------------------------------------------------------------------------

/// Expected delivery probability at distance `d` for the calibrated
/// parameters, by quadrature over the shadowing term of the Gamma upper
/// tail of the fast-fading power.
struct PdrOracle {
    mean_at_1m: f64,
    alpha: f64,
    sigma: f64,
    threshold: f64,
    gamma: Gamma,
    normal: Normal,
}

impl PdrOracle {
    fn calibrated() -> Self {
        let lambda = 299_792_458.0 / 5.9e9;
        let mean_at_1m = 10.0
            * (30.16 * lambda * lambda / ((4.0 * PI).powi(2) * 10f64.powf(0.13 / 10.0))).log10();
        let snr = DEFAULT_SNR_THRESHOLDS_DB.get(DataRate::Mbps18);
        PdrOracle {
            mean_at_1m,
            alpha: 1.51,
            sigma: 6.03,
            threshold: (-114.0f64).max(-90.0 + snr),
            gamma: Gamma::new(2.0, 2.0).unwrap(),
            normal: Normal::new(0.0, 1.0).unwrap(),
        }
    }

    fn probability(&self, d: f64) -> f64 {
        use statrs::distribution::Continuous;
        let mean = self.mean_at_1m - 10.0 * self.alpha * d.max(1.0).log10();
        // Simpson's rule over z in [-8, 8].
        let n = 640;
        let h = 16.0 / n as f64;
        let mut acc = 0.0;
        for i in 0..=n {
            let z = -8.0 + i as f64 * h;
            let need = 10f64.powf((self.threshold - mean - self.sigma * z) / 10.0);
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += w * self.normal.pdf(z) * self.gamma.sf(need);
        }
        acc * h / 3.0
    }
}

fn oracle_agreement(ds: &SyntheticDataset) -> Check {
    let oracle = PdrOracle::calibrated();
    let step = 0.25;
    let max_d = ds
        .log
        .records
        .iter()
        .map(|r| r.distance)
        .fold(0.0, f64::max);
    let grid: Vec<f64> = (0..=(max_d / step).ceil() as usize + 1)
        .map(|k| oracle.probability(k as f64 * step))
        .collect();
    let at = |d: f64| {
        let x = d / step;
        let k = x.floor() as usize;
        grid[k] + (grid[k + 1] - grid[k]) * (x - k as f64)
    };
    let width = ds.curve.bin_width;
    let mut expected = vec![0.0; ds.curve.bins.len()];
    for r in &ds.log.records {
        expected[(r.distance / width).floor() as usize] += at(r.distance);
    }
    let (mut checked, mut worst, mut worst_bin) = (0, 0.0f64, 0.0);
    for (b, e) in ds.curve.bins.iter().zip(&expected) {
        if b.sent < 200 {
            continue;
        }
        checked += 1;
        let diff = (b.pdr().unwrap() - 100.0 * e / b.sent as f64).abs();
        if diff > worst {
            worst = diff;
            worst_bin = b.bin_start;
        }
    }
    ensure(
        checked > 0 && worst <= 3.0,
        format!("{checked} bins with >= 200 sends; worst deviation {worst:.3} pp at {worst_bin} m (<= 3)"),
    )
}

// 8 ------------------------------------------------------------------------

fn same_files(a: &Path, b: &Path, names: &[&str]) -> Result<(), String> {
    for n in names {
        let (x, y) = (fs::read(a.join(n)), fs::read(b.join(n)));
        match (x, y) {
            (Ok(x), Ok(y)) if x == y => {}
            _ => {
                return Err(format!(
                    "{n} differs between {} and {}",
                    a.display(),
                    b.display()
                ))
            }
        }
    }
    Ok(())
}

fn determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = |s: &str| tmp.path().join(s);
    let synth_files = ["trace.csv", "log.csv", "pdr.csv", "planted.txt"];
    cli(&["synth", "--out", p(&d("s1")), "--jobs", "1"])?;
    cli(&["synth", "--out", p(&d("s2")), "--jobs", "8"])?;
    cli(&["synth", "--out", p(&d("s3")), "--jobs", "1"])?;
    same_files(&d("s1"), &d("s2"), &synth_files)?;
    same_files(&d("s1"), &d("s3"), &synth_files)?;

    let trace = d("s1").join("trace.csv");
    let sim_files = ["log.csv", "pdr.csv", "heatmap.csv", "config.txt"];
    for (name, jobs) in [("m1", "1"), ("m2", "8"), ("m3", "1")] {
        cli(&[
            "simulate",
            "--trace",
            p(&trace),
            "--out",
            p(&d(name)),
            "--preset",
            "calibrated",
            "--seed",
            "7",
            "--jobs",
            jobs,
        ])?;
    }
    same_files(&d("m1"), &d("m2"), &sim_files)?;
    same_files(&d("m1"), &d("m3"), &sim_files)?;

    let observed = d("s1").join("pdr.csv");
    let cal_files = ["history.csv", "best.txt", "config.txt"];
    for (name, jobs) in [("c1", "1"), ("c2", "8"), ("c3", "1")] {
        cli(&[
            "calibrate",
            "--observed",
            p(&observed),
            "--trace",
            p(&trace),
            "--out",
            p(&d(name)),
            "--population",
            "12",
            "--generations",
            "5",
            "--seed",
            "42",
            "--jobs",
            jobs,
        ])?;
    }
    same_files(&d("c1"), &d("c2"), &cal_files)?;
    same_files(&d("c1"), &d("c3"), &cal_files)?;
    Ok(
        "synth, simulate and calibrate outputs byte-identical across reruns and --jobs 1 / 8"
            .into(),
    )
}

// 9 ------------------------------------------------------------------------

fn round_trips() -> Check {
    let cases = PropConfig {
        cases: 48,
        failure_persistence: None,
        ..PropConfig::default()
    };

    // Trace, delivery log, PDR curve and heatmap from random short routes.
    let route = (
        proptest::collection::vec((-800.0f64..800.0, -800.0f64..800.0, 1.0f64..30.0), 2..5),
        any::<u64>(),
        1.0f64..60.0,
    );
    runner_with(cases.clone())
        .run(&route, |(wps, seed, width)| {
            let spec = SyntheticSpec {
                waypoints: wps
                    .into_iter()
                    .map(|(x, y, s)| Waypoint::new(x, y, s))
                    .collect(),
                duration_s: 20.0,
                seed,
                ..SyntheticSpec::drive_by()
            };
            let trace = match synthetic_trace(&spec) {
                Ok(t) => t,
                Err(_) => return Ok(()), // degenerate route
            };
            let doc = export_trace_csv(&trace);
            let back = parse_trace_csv(&doc, spec.rsu, TimeFormat::Iso8601).unwrap();
            prop_assert_eq!(&back, &trace);

            let scenario = ScenarioConfig {
                bin_width_m: width,
                heatmap_cell_m: width,
                ..ScenarioConfig::default()
            };
            let ds = generate_synthetic(&spec, &scenario).unwrap();
            let doc = export_log_csv(&ds.log);
            let log = parse_log_csv(&doc).unwrap();
            prop_assert_eq!(export_log_csv(&log), doc);
            for (a, b) in ds.log.records.iter().zip(&log.records) {
                prop_assert_eq!(
                    (a.direction, a.delivered, a.reason),
                    (b.direction, b.delivered, b.reason)
                );
                prop_assert!((a.rx_power_dbm - b.rx_power_dbm).abs() <= 5e-7);
            }

            let curve = pdr_curve(&ds.log, width).unwrap();
            let doc = export_pdr_csv(&curve);
            let back = parse_pdr_csv(&doc, Some(width)).unwrap();
            prop_assert_eq!(export_pdr_csv(&back), doc);
            let counts = |c: &v2x_calib::simulator::PdrCurve| {
                c.bins
                    .iter()
                    .map(|b| (b.index, b.sent, b.delivered))
                    .collect::<Vec<_>>()
            };
            prop_assert_eq!(counts(&back), counts(&curve));

            let grid = heatmap(&ds.log, width).unwrap();
            let doc = export_heatmap_csv(&grid);
            let back = parse_heatmap_csv(&doc, Some(width)).unwrap();
            prop_assert_eq!(export_heatmap_csv(&back), doc);
            let cells = |g: &v2x_calib::simulator::HeatmapGrid| {
                g.non_empty()
                    .map(|c| (c.ix, c.iy, c.sent, c.delivered))
                    .collect::<Vec<_>>()
            };
            prop_assert_eq!(cells(&back), cells(&grid));
            Ok(())
        })
        .map_err(|e| format!("trace/log/pdr/heatmap: {e}"))?;

    // GA history.
    runner_with(cases.clone())
        .run(&(any::<u64>(), 0usize..30), |(seed, n)| {
            let space = SearchSpace::table();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let history: Vec<EvaluationRecord> = (0..n)
                .map(|i| EvaluationRecord {
                    generation: i / 6,
                    individual: i % 6,
                    genome: space.random_genome(&mut rng),
                    rmse: format!("{:.9}", (seed % 100_000) as f64 / 997.0)
                        .parse()
                        .unwrap(),
                })
                .collect();
            let doc = history_to_csv(&history);
            prop_assert_eq!(&parse_history_csv(&doc).unwrap(), &history);
            Ok(())
        })
        .map_err(|e| format!("history: {e}"))?;

    // Configuration echo.
    let keys = (
        20.0f64..40.0,
        1.0f64..3.0,
        1.0f64..10.0,
        any::<u64>(),
        1.0f64..100.0,
        0usize..4,
    );
    runner_with(cases)
        .run(&keys, |(tx, alpha, sigma, seed, width, rate)| {
            let doc = format!(
                "preset = calibrated\ntx_power = {tx}\nalpha = {alpha}\nsigma = {sigma}\nmaster_seed = {seed}\nbin_width = {width}\ndata_rate = {}\nfreeze = noise_floor, alpha\n",
                DataRate::ALL[rate].mbps()
            );
            let cfg = RunConfig::from_document("cfg", &doc).unwrap();
            let echo = cfg.to_config_string();
            let back = RunConfig::from_document("echo", &echo).unwrap();
            prop_assert_eq!(&back, &cfg);
            prop_assert_eq!(back.to_config_string(), echo);
            Ok(())
        })
        .map_err(|e| format!("config echo: {e}"))?;
    Ok("trace, log, pdr, heatmap, history and config echo round-trip losslessly".into())
}

// --------------------------------------------------------------------------

fn main() -> ExitCode {
    let t = Instant::now();
    let dataset = oracle_dataset();
    println!(
        "oracle dataset: {ORACLE_PASSES} passes, {} packets, built in {:.1?}",
        dataset.log.len(),
        t.elapsed()
    );
    let criteria: Vec<(&str, Box<dyn FnOnce() -> Check + '_>)> = vec![
        ("free-space reference power", Box::new(free_space_value)),
        ("nakagami moments", Box::new(nakagami_moments)),
        ("lognormal residuals", Box::new(lognormal_residuals)),
        ("penalty semantics", Box::new(penalty_semantics)),
        ("parameter recovery", Box::new(parameter_recovery)),
        (
            "improvement ordering",
            Box::new(|| improvement_ordering(&dataset)),
        ),
        ("oracle agreement", Box::new(|| oracle_agreement(&dataset))),
        ("determinism", Box::new(determinism)),
        ("round trips", Box::new(round_trips)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.into_iter().enumerate() {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            Err(format!(
                "panicked: {:?}",
                e.downcast_ref::<String>()
                    .map(String::as_str)
                    .or(e.downcast_ref::<&str>().copied())
            ))
        });
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!(
            "criterion {} [{tag}] {name}: {detail} ({:.1?})",
            i + 1,
            t.elapsed()
        );
    }
    println!("acceptance: {} passed, {failed} failed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
