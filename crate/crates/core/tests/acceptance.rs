//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::{angular_spread_direct, delay_spread_pairwise, k_factor_direct, mw, random_record};
use ids_chan::extract::{
    angular_spread, fit_ab, fit_path_loss, k_factor, rms_delay_spread, summarize, AngleKind, KfMode,
};
use ids_chan::genchan::{draw_many, draw_realization, realizations_dataset, DEFAULT_TAPS};
use ids_chan::linksim::{ber_bpsk_with, ber_sweep, BerConfig, ChannelSource};
use ids_chan::stats::{db_to_linear, q_function};
use ids_chan::tracer::{build_scenario, fspl_db, trace_scenario, SceneConfig};
use ids_chan::{
    ChannelParamSet, Condition, LinkBudget, ScenarioDataset, ScenarioPreset, SPEED_OF_LIGHT,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within_budget(o: Outcome, elapsed: Duration, budget: Option<Duration>) -> Outcome {
    match budget {
        Some(b) if elapsed > b => outcome(
            false,
            format!("{}; runtime {:.2?} exceeds {:.0?}", o.detail, elapsed, b),
        ),
        _ => o,
    }
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    a == b || (a - b).abs() <= rel * a.abs().max(b.abs()) || (a - b).abs() < 1e-12
}

fn trace(preset: ScenarioPreset, cfg: &SceneConfig) -> ScenarioDataset {
    let scene = build_scenario(preset, cfg).unwrap();
    trace_scenario(&scene, &LinkBudget::default()).unwrap()
}

fn friis_intercept() -> Outcome {
    let cfg = SceneConfig {
        blockers: Some(vec![]),
        max_reflections: Some(0),
        ..Default::default()
    };
    let ds = trace(ScenarioPreset::Bl, &cfg);
    let fit = match fit_path_loss(&ds, Condition::Los) {
        Ok(f) => f,
        Err(e) => return outcome(false, format!("fit failed: {e}")),
    };
    let reference = fspl_db(1.0, SPEED_OF_LIGHT / 28e9);
    let pass = (fit.b - 2.0).abs() <= 0.05 && (fit.a_db - 61.4).abs() <= 0.2;
    outcome(
        pass,
        format!(
            "A = {:.4} dB (target 61.4 +- 0.2, FSPL(1 m) = {reference:.4}), B = {:.6} (target 2 +- 0.05), n = {}",
            fit.a_db, fit.b, fit.n_points
        ),
    )
}

fn statistics_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut failures = 0;
    let mut checks = 0;
    for i in 0..1000u32 {
        let r = random_record(&mut rng, i);
        let p: Vec<f64> = r.paths.iter().map(|c| mw(c.power_dbm)).collect();
        let t: Vec<f64> = r.paths.iter().map(|c| c.delay_ns).collect();
        let mut pairs = vec![(rms_delay_spread(&r).unwrap(), delay_spread_pairwise(&p, &t))];
        for k in AngleKind::ALL {
            let a: Vec<f64> = r.paths.iter().map(|c| k.angle_deg(c)).collect();
            pairs.push((
                angular_spread(&r, k).unwrap(),
                angular_spread_direct(&p, &a),
            ));
        }
        match (k_factor(&r), k_factor_direct(&r.paths)) {
            (Some(a), Some(b)) => pairs.push((a, b)),
            (None, None) => {}
            _ => failures += 1,
        }
        for (got, want) in pairs {
            checks += 1;
            if got.is_finite() && want.is_finite() && got.abs().max(want.abs()) > 1e-9 {
                worst = worst.max((got - want).abs() / got.abs().max(want.abs()));
            }
            if !close(got, want, 1e-9) {
                failures += 1;
            }
        }
    }
    outcome(failures == 0, format!("{checks} comparisons, {failures} mismatches, worst relative deviation {worst:.2e} (values above 1e-9)"))
}

fn fit_recovery() -> Outcome {
    let (a, b, sigma) = (58.49, 1.45, 5.58);
    let mut passes = 0;
    let mut worst = (0.0f64, 0.0f64, 0.0f64);
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let noise = Normal::new(0.0, sigma).unwrap();
        let log_d = rand_distr::Uniform::new(0.0f64, 15f64.log10()).unwrap();
        let pts: Vec<(f64, f64)> = (0..2400)
            .map(|_| {
                let d = 10f64.powf(log_d.sample(&mut rng));
                (d, a + 10.0 * b * d.log10() + noise.sample(&mut rng))
            })
            .collect();
        let fit = fit_ab(&pts, Condition::Los).unwrap();
        let (ea, eb, es) = (
            (fit.a_db - a).abs(),
            (fit.b - b).abs(),
            ((fit.sigma_sf_db - sigma) / sigma).abs(),
        );
        worst = (worst.0.max(ea), worst.1.max(eb), worst.2.max(es));
        if ea <= 1.0 && eb <= 0.1 && es <= 0.15 {
            passes += 1;
        }
    }
    outcome(
        passes >= 19,
        format!(
            "{passes}/20 seeds recovered; worst |dA| = {:.3} dB, |dB| = {:.4}, |dsigma|/sigma = {:.3}",
            worst.0, worst.1, worst.2
        ),
    )
}

fn generator_round_trip() -> Outcome {
    let bl = ChannelParamSet::bl();
    let reals = draw_many(&bl, Condition::Los, DEFAULT_TAPS, 2400, 4).unwrap();
    let ds = realizations_dataset(&bl, Condition::Los, &reals);
    let s = summarize(&ds, &ds.link_budget, KfMode::DirectPath).unwrap();
    let los = s.params.los.unwrap();
    let preset = bl.los.as_ref().unwrap();
    let ds_err = (los.ds_ns.mean - preset.ds_ns.mean).abs() / preset.ds_ns.mean;
    let kf = los.kf_db.map_or(f64::NAN, |k| k.mean);
    let kf_err = (kf - preset.kf_db.unwrap().mean).abs();

    let mut violations = 0;
    for seed in 0..10_000u64 {
        for cond in [Condition::Los, Condition::Nlos] {
            let r = draw_realization(&bl, cond, DEFAULT_TAPS, seed).unwrap();
            let p = r.powers();
            let sum: f64 = p.iter().sum();
            let mut ok = (sum - 1.0).abs() <= 1e-12
                && r.taps[0].delay_ns == 0.0
                && r.taps.iter().all(|t| t.delay_ns >= 0.0)
                && (r.rms_delay_spread_ns() - r.target_ds_ns).abs() <= 1e-9 * r.target_ds_ns;
            if let Some(k) = r.kf_db {
                let ratio = p[0] / p[1..].iter().sum::<f64>();
                ok &= ((ratio - db_to_linear(k)) / ratio).abs() <= 1e-9;
            }
            if !ok {
                violations += 1;
            }
        }
    }
    outcome(
        ds_err <= 0.10 && kf_err <= 1.0 && violations == 0,
        format!(
            "mu_DS {:.3} ns vs {:.2} ({:.1}%), mu_KF {:.3} dB vs {:.2} (|d| {:.3} dB), {violations} invariant violations in 2x10^4 draws",
            los.ds_ns.mean,
            preset.ds_ns.mean,
            100.0 * ds_err,
            kf,
            preset.kf_db.unwrap().mean,
            kf_err
        ),
    )
}

fn ber_oracles() -> Outcome {
    let cfg = BerConfig::default();
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, e) in [0.0, 4.0, 8.0, 10.0].into_iter().enumerate() {
        let p = ber_bpsk_with(ChannelSource::Awgn, e, 10_000_000, 50 + i as u64, &cfg).unwrap();
        let want = q_function((2.0 * db_to_linear(e)).sqrt());
        let ok = (p.ber - want).abs() <= 3.0 * p.ci95;
        pass &= ok;
        parts.push(format!(
            "AWGN {e} dB: {:.4e} vs {want:.4e} ({:.2} ci)",
            p.ber,
            (p.ber - want).abs() / p.ci95
        ));
    }
    let bl = ChannelParamSet::bl();
    for (i, g_db) in [0.0, 10.0].into_iter().enumerate() {
        let src = ChannelSource::Fading {
            params: &bl,
            condition: Condition::Nlos,
        };
        let p = ber_bpsk_with(src, g_db, 10_000_000, 60 + i as u64, &cfg).unwrap();
        let g = db_to_linear(g_db);
        let want = 0.5 * (1.0 - (g / (1.0 + g)).sqrt());
        let rel = (p.ber - want).abs() / want;
        pass &= rel <= 0.05;
        parts.push(format!(
            "Rayleigh {g_db} dB: {:.4e} vs {want:.4e} ({:.2}%)",
            p.ber,
            100.0 * rel
        ));
    }
    outcome(pass, parts.join("; "))
}

fn directional_gap() -> Outcome {
    let sets = [ChannelParamSet::bl(), ChannelParamSet::gpp_ino()];
    let grid: Vec<f64> = (0..=30).map(f64::from).collect();
    let sweep = ber_sweep(
        &sets,
        Condition::Los,
        &grid,
        2_000_000,
        6,
        &BerConfig::default(),
    )
    .unwrap();
    let (bl, gpp) = (&sweep.curves[0], &sweep.curves[1]);
    let mut not_above = Vec::new();
    for (a, b) in bl.points.iter().zip(&gpp.points) {
        if a.ebn0_db >= 5.0 && a.ber - a.ci95 <= b.ber + b.ci95 {
            not_above.push(a.ebn0_db);
        }
    }
    let gap = sweep.gap_db(0, 1, 1e-3);
    let gap_ok = gap.is_some_and(|g| (5.0..=15.0).contains(&g));
    outcome(
        not_above.is_empty() && gap_ok,
        format!(
            "measured Eb/N0 gap at BER 1e-3 = {}; BL above 3GPP-InO beyond CIs at every grid point >= 5 dB: {}",
            gap.map_or("n/a".into(), |g| format!("{g:.2} dB")),
            if not_above.is_empty() { "yes".to_string() } else { format!("no, overlap at {not_above:?} dB") }
        ),
    )
}

fn run_cli(threads: Option<usize>, args: &[&str]) -> Result<(), String> {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ids-chan"));
    c.env_remove("IDS_CHAN_SEED");
    if let Some(t) = threads {
        c.args(["--threads", &t.to_string()]);
    }
    let out = c.args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr).trim()
        ))
    }
}

fn pipeline(dir: &Path, threads: Option<usize>) -> Result<Vec<(String, Vec<u8>)>, String> {
    let p = |n: &str| dir.join(n).to_str().unwrap().to_string();
    run_cli(threads, &["trace", "--preset", "BL", "--out", &p("bl.csv")])?;
    run_cli(
        threads,
        &["extract", "--in", &p("bl.csv"), "--out", &p("bl")],
    )?;
    run_cli(
        threads,
        &["rssi", "--in", &p("bl.csv"), "--out", &p("bl.rssi.csv")],
    )?;
    run_cli(
        threads,
        &[
            "gen",
            "--preset",
            "RecV",
            "--cond",
            "LOS",
            "--n",
            "2400",
            "--out",
            &p("gen.csv"),
        ],
    )?;
    run_cli(
        threads,
        &[
            "ber",
            "--presets",
            "BL,3GPP-InO",
            "--cond",
            "LOS",
            "--ebn0",
            "0:2:30",
            "--bits",
            "200000",
            "--out",
            &p("ber.csv"),
        ],
    )?;
    run_cli(threads, &["presets", "--out", &p("presets.csv")])?;
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .map_err(|e| e.to_string())?
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    Ok(files)
}

fn cli_determinism() -> Outcome {
    let runs = [None, Some(1), Some(4), None];
    let mut outputs = Vec::new();
    for t in runs {
        let dir = tempfile::tempdir().unwrap();
        match pipeline(dir.path(), t) {
            Ok(f) => outputs.push(f),
            Err(e) => return outcome(false, e),
        }
    }
    let names: Vec<&str> = outputs[0].iter().map(|(n, _)| n.as_str()).collect();
    let differing: Vec<&str> = (1..outputs.len())
        .flat_map(|i| {
            outputs[0]
                .iter()
                .zip(&outputs[i])
                .filter(|(a, b)| a != b)
                .map(|(a, _)| a.0.as_str())
        })
        .collect();
    outcome(
        differing.is_empty() && outputs.iter().all(|o| o.len() == names.len()),
        format!(
            "{} output files x 4 runs (default, 1, 4, default threads); differing: {:?}",
            names.len(),
            differing
        ),
    )
}

fn classification_ratios() -> Outcome {
    let bl = trace(ScenarioPreset::Bl, &SceneConfig::default());
    let emv = trace(ScenarioPreset::EmV, &SceneConfig::default());
    let r = |d: &ScenarioDataset| d.count(Condition::Los) as f64 / d.records.len() as f64;
    outcome(
        r(&emv) >= r(&bl),
        format!(
            "LOS ratio EmV {:.4} vs BL {:.4} over {} receivers",
            r(&emv),
            r(&bl),
            bl.records.len()
        ),
    )
}

/// Name, check, runtime limit in seconds.
type Criterion = (&'static str, fn() -> Outcome, Option<u64>);

fn main() {
    let criteria: [Criterion; 8] = [
        ("1 Friis/intercept", friis_intercept, Some(10)),
        ("2 statistics oracles", statistics_oracles, Some(5)),
        ("3 fit recovery", fit_recovery, None),
        ("4 generator round-trip", generator_round_trip, Some(30)),
        ("5 BER oracles", ber_oracles, Some(60)),
        ("6 BL vs 3GPP-InO BER", directional_gap, None),
        ("7 CLI determinism", cli_determinism, None),
        ("8 classification ratios", classification_ratios, None),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    let mut ran = 0;
    for (name, f, budget) in criteria {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let o = f();
        let elapsed = start.elapsed();
        let o = within_budget(o, elapsed, budget.map(Duration::from_secs));
        println!(
            "[{}] {name}: {} ({:.2?})",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            elapsed
        );
        if !o.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("acceptance: {failed} criterion/criteria failed");
        std::process::exit(1);
    }
    println!("acceptance: {ran} of {ran} criteria passed");
}
