//! Acceptance suite. Runs without the libtest harness so that every
//! criterion prints its PASS/FAIL line even when an earlier one fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use citeq_core::solver::{fit_single_quantile, pinball_loss, DesignMatrix};
use citeq_core::tail::{c_p_proxy, covariate_adjusted_sample, default_k_range, hill_estimate, pareto_quantile, select_threshold, DescendingSample, TailEstimate};
use citeq_core::{
    calibration_curve, default_zenga_grid, fit_grid, fit_normalized, generate_synthetic, grouped_calibration_error,
    normalize_dataset, compute_constants, select_k0, upper_half_convex, zenga_curve, K0Objective, ModelSpec,
    PublicationRecord, ScaledRecord, SyntheticSpec, Variant, CONVEXITY_TOL,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit: Duration, detail: String) -> Outcome {
    check(elapsed < limit, format!("{detail}; {:.2}s (limit {}s)", elapsed.as_secs_f64(), limit.as_secs()))
}

fn cohort(seed: u64, n: usize) -> Vec<PublicationRecord> {
    generate_synthetic(&SyntheticSpec { n, seed, ..Default::default() }).unwrap()
}

fn pareto(alpha: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (1.0 - rng.random::<f64>()).powf(-1.0 / alpha)).collect()
}

fn det3(m: [[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Minimum loss over all hyperplanes through three observations, by Cramer's rule.
fn enumeration_oracle(x: &[[f64; 3]], y: &[f64], p: f64) -> f64 {
    let n = y.len();
    let mut best = f64::INFINITY;
    for a in 0..n {
        for b in a + 1..n {
            for c in b + 1..n {
                let m = [x[a], x[b], x[c]];
                let d = det3(m);
                if d.abs() < 1e-9 {
                    continue;
                }
                let rhs = [y[a], y[b], y[c]];
                let coef: Vec<f64> = (0..3)
                    .map(|j| {
                        let mut mj = m;
                        for r in 0..3 {
                            mj[r][j] = rhs[r];
                        }
                        det3(mj) / d
                    })
                    .collect();
                let res: Vec<f64> = (0..n).map(|i| y[i] - (0..3).map(|j| x[i][j] * coef[j]).sum::<f64>()).collect();
                best = best.min(pinball_loss(p, &res).unwrap());
            }
        }
    }
    best
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut solved, mut worst) = (0, 0.0f64);
    while solved < 200 {
        let n = rng.random_range(4..=12);
        let ties = rng.random_bool(0.5);
        let mut x = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            if ties {
                x.push([1.0, rng.random_range(-4..4) as f64, rng.random_range(-3..3) as f64]);
                y.push(rng.random_range(0..4) as f64);
            } else {
                x.push([1.0, rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]);
                y.push(rng.random_range(-5.0..5.0));
            }
        }
        let p = rng.random_range(0.05..0.95);
        let column = |j: usize| x.iter().map(|r: &[f64; 3]| r[j]).collect::<Vec<_>>();
        let design = DesignMatrix::from_columns(
            vec![("intercept".into(), column(0)), ("x1".into(), column(1)), ("x2".into(), column(2))],
            y.clone(),
        )
        .unwrap();
        if design.check_rank().is_err() {
            continue;
        }
        let s = fit_single_quantile(&design, p).map_err(|e| format!("instance {solved}: {e}"))?;
        let gap = (s.loss - enumeration_oracle(&x, &y, p)).abs();
        worst = worst.max(gap);
        if gap > 1e-8 {
            return Err(format!("instance {solved}: loss gap {gap:.3e}"));
        }
        if !s.signs.satisfies_optimality(p) {
            return Err(format!("instance {solved}: sign condition fails {:?} at p={p}", s.signs));
        }
        solved += 1;
    }
    within(start.elapsed(), Duration::from_secs(10), format!("200 instances, max loss gap {worst:.2e}, sign condition on all"))
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let data = cohort(42, 50_000);
    let model = fit_grid(&data, &ModelSpec::new(Variant::Full, 0.5).unwrap()).map_err(|e| e.to_string())?;
    let n = data.len() as f64;
    let tol = model.diagnostics.max_zero_residuals() as f64 / n + 0.005;
    let report = calibration_curve(&model, &data, "training").unwrap();
    let err = report.max_abs_error();
    check(err <= tol, format!("max |f-p| {err:.2e} <= {tol:.2e} over {} grid points", report.points.len()))
        .and_then(|d| within(start.elapsed(), Duration::from_secs(120), d))
}

fn criterion_3() -> Outcome {
    let data = cohort(42, 50_000);
    let model = fit_grid(&data, &ModelSpec::new(Variant::Full, 0.5).unwrap()).map_err(|e| e.to_string())?;
    let (mut db, mut dg) = (0.0f64, 0.0f64);
    for c in model.coefficients.iter().filter(|c| c.p <= 0.9 + 1e-12) {
        db = db.max((c.beta - 0.7).abs());
        dg = dg.max((c.gamma - 0.6).abs());
    }
    check(db <= 0.05 && dg <= 0.05, format!("max |beta-0.7| {db:.4}, max |gamma-0.6| {dg:.4} for p <= 0.9"))
}

fn criterion_4() -> Outcome {
    let data = cohort(42, 50_000);
    let spec = ModelSpec::new(Variant::Full, 0.5).unwrap();
    let sel = select_k0(&data, &spec, &[0.3, 0.5, 1.0], K0Objective::default()).map_err(|e| e.to_string())?;
    let objectives: Vec<String> = sel.objectives.iter().map(|(k, v)| format!("{k}: {v:.4e}")).collect();
    check(sel.best_k0 == 0.5, format!("selected k0 {} ({})", sel.best_k0, objectives.join(", ")))
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let s = DescendingSample::new(pareto(1.5, 100_000, 1500)).unwrap();
    let alpha = 1.0 / hill_estimate(&s, 1000).map_err(|e| e.to_string())?;
    check((1.35..=1.65).contains(&alpha), format!("alpha {alpha:.4} in [1.35, 1.65]"))
        .and_then(|d| within(start.elapsed(), Duration::from_secs(5), d))
}

fn criterion_6() -> Outcome {
    let mut details = Vec::new();
    for (alpha, seed) in [(1.5, 61), (2.0, 62), (3.0, 63)] {
        let s = DescendingSample::new(pareto(alpha, 100_000, seed)).unwrap();
        let (lo, hi) = default_k_range(s.len());
        let est = select_threshold(&s, lo, hi).map_err(|e| e.to_string())?;
        let exact = 0.01f64.powf(-1.0 / alpha);
        let predicted = pareto_quantile(&est, 0.99).map_err(|e| e.to_string())?;
        let rel = (predicted - exact).abs() / exact;
        if rel > 0.15 {
            return Err(format!("alpha {alpha}: q(0.99) {predicted:.4} vs {exact:.4}"));
        }
        for k in [est.k, 100, 5000] {
            let at = TailEstimate::at_k(&s, k).unwrap();
            if pareto_quantile(&at, at.p_star).unwrap() != s.as_slice()[k] {
                return Err(format!("alpha {alpha}: q(p*) differs from the threshold at k={k}"));
            }
        }
        details.push(format!("alpha {alpha}: rel err {rel:.3}"));
    }
    Ok(format!("{}; q(p*) equals the threshold exactly", details.join(", ")))
}

fn criterion_7() -> Outcome {
    let data = cohort(42, 50_000);
    let model = fit_grid(&data, &ModelSpec::new(Variant::Full, 0.5).unwrap()).map_err(|e| e.to_string())?;
    let p_star = 0.95;
    let adjusted = covariate_adjusted_sample(&model, &data, p_star).map_err(|e| e.to_string())?;
    let s = DescendingSample::new(adjusted).unwrap();
    let est = TailEstimate::at_k(&s, s.len() / 20).map_err(|e| e.to_string())?;
    let c_star = model.coefficients_at(p_star).unwrap().c;
    let mut worst: f64 = 0.0;
    for c in model.coefficients.iter().filter(|c| c.p >= p_star - 1e-12) {
        let proxy = c_p_proxy(c_star, p_star, est.alpha, c.p).map_err(|e| e.to_string())?;
        worst = worst.max((c.c - proxy).abs());
    }
    check(worst <= 0.1, format!("alpha {:.3} at p* {p_star}, max |C_p - proxy| {worst:.4} on [0.95, 0.99]", est.alpha))
}

fn criterion_8() -> Outcome {
    let grid = default_zenga_grid();
    let constant = zenga_curve(&[7.0; 500], &grid).map_err(|e| e.to_string())?;
    if constant.iter().any(|&(_, z)| z != 0.0) {
        return Err("constant sample has a nonzero Z value".into());
    }
    let mut worst: f64 = 0.0;
    for (alpha, seed) in [(1.5, 81), (2.0, 82), (3.0, 83)] {
        let sample = pareto(alpha, 100_000, seed);
        let z = zenga_curve(&sample, &grid).map_err(|e| e.to_string())?;
        if !upper_half_convex(&z, CONVEXITY_TOL) {
            return Err(format!("Pareto({alpha}) curve fails the convexity test"));
        }
        for scale in [1e-3, 3.7, 1e4] {
            let scaled: Vec<f64> = sample.iter().map(|v| v * scale).collect();
            let zs = zenga_curve(&scaled, &grid).unwrap();
            for ((_, a), (_, b)) in z.iter().zip(&zs) {
                worst = worst.max((a - b).abs() / a.abs().max(f64::MIN_POSITIVE));
            }
        }
    }
    check(worst <= 1e-12, format!("constant curve identically 0, Pareto curves convex, max relative scale change {worst:.1e}"))
}

fn criterion_9() -> Outcome {
    let a = cohort(42, 50_000);
    let b: Vec<ScaledRecord> = a
        .iter()
        .map(|r| ScaledRecord {
            id: r.id.clone(),
            impact_factor: r.impact_factor,
            c1: r.c1 as f64 * 1.5,
            c_future: r.c_future as f64 * 1.5,
        })
        .collect();
    let spec = ModelSpec::new(Variant::Full, 0.5).unwrap();
    let raw = fit_grid(&a, &spec).map_err(|e| e.to_string())?;
    let f_raw = calibration_curve(&raw, &b, "B").unwrap().at(0.5).unwrap();

    let normalized = fit_normalized(&a, &spec, "A", true).map_err(|e| e.to_string())?;
    let target = compute_constants(&b, "B").unwrap();
    let b_norm = normalize_dataset(&b, &target);
    let report = calibration_curve(&normalized, &b_norm, "B").unwrap();
    let tol = normalized.diagnostics.max_zero_residuals() as f64 / b.len() as f64 + 0.005;
    let err = report.max_abs_error();
    check(
        f_raw <= 0.46 && err <= tol,
        format!("un-normalized f(0.5) {f_raw:.4} <= 0.46; normalized max |f-p| {err:.2e} <= {tol:.2e}"),
    )
}

fn criterion_10() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for seed in 1..=5u64 {
        let data = cohort(seed, 50_000);
        let (train, test): (Vec<_>, Vec<_>) = data.into_iter().enumerate().partition(|(i, _)| i % 2 == 0);
        let train: Vec<PublicationRecord> = train.into_iter().map(|(_, r)| r).collect();
        let test: Vec<PublicationRecord> = test.into_iter().map(|(_, r)| r).collect();
        let mut scores = Vec::new();
        for variant in [Variant::Full, Variant::IfOnly, Variant::C1Only] {
            let m = fit_grid(&train, &ModelSpec::new(variant, 0.5).unwrap()).map_err(|e| e.to_string())?;
            let grouped = grouped_calibration_error(&m, &test, 50).unwrap();
            let pooled = calibration_curve(&m, &test, "held-out").unwrap().sum_sq_error;
            scores.push((variant.name(), grouped, pooled));
        }
        ok &= scores[0].1 < scores[1].1 && scores[0].1 < scores[2].1;
        let cells: Vec<String> = scores.iter().map(|(n, g, p)| format!("{n} {g:.3e} (pooled {p:.2e})")).collect();
        lines.push(format!("seed {seed}: {}", cells.join(", ")));
    }
    check(ok, format!("held-out per-cell error, full smallest on all seeds; {}", lines.join("; ")))
}

fn run_cli(dir: &Path, threads: &str, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_citeq"))
        .args(args)
        .current_dir(dir)
        .env("RAYON_NUM_THREADS", threads)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("citeq {} failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)));
    }
    Ok(())
}

fn pipeline(threads: &str) -> Result<Vec<(String, String)>, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let steps: [&[&str]; 9] = [
        &["synth", "--n", "20000", "--seed", "7", "--out", "a.csv"],
        &["synth", "--n", "20000", "--seed", "8", "--scale-factor", "1.5", "--cohort-year", "2000", "--out", "b.csv"],
        &["fit", "--data", "a.csv", "--out", "model.json"],
        &["predict", "--model", "model.json", "--data", "b.csv", "--out", "pred.csv"],
        &["evaluate", "--model", "model.json", "--data", "b.csv", "--out-dir", "eval"],
        &["tail", "--data", "a.csv", "--out-dir", "tail", "--pstar-auto"],
        &["zenga", "--data", "a.csv", "--out", "zenga.csv"],
        &["fit", "--data", "a.csv", "--out", "norm.json", "--normalize", "--select-k0", "0.3,0.5,1.0"],
        &["transfer", "--model", "norm.json", "--data", "b.csv", "--out", "transfer.csv"],
    ];
    for step in steps {
        run_cli(d, threads, step)?;
    }
    let mut files = Vec::new();
    let mut stack = vec![d.to_path_buf()];
    while let Some(p) = stack.pop() {
        for entry in std::fs::read_dir(&p).map_err(|e| e.to_string())? {
            let path = entry.map_err(|e| e.to_string())?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
                let name = path.strip_prefix(d).unwrap().display().to_string();
                files.push((name, Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect::<String>()));
            }
        }
    }
    files.sort();
    Ok(files)
}

fn criterion_11() -> Outcome {
    let serial = pipeline("1")?;
    let parallel = pipeline("4")?;
    let again = pipeline("4")?;
    if serial != parallel || parallel != again {
        let differing: Vec<&str> = serial
            .iter()
            .zip(&parallel)
            .filter(|(a, b)| a != b)
            .map(|(a, _)| a.0.as_str())
            .collect();
        return Err(format!("artifacts differ: {differing:?}"));
    }
    check(serial.len() >= 10, format!("{} artifacts identical across 1-thread and two 4-thread runs", serial.len()))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("quantile regression optimality", criterion_1),
        ("training calibration", criterion_2),
        ("coefficient recovery", criterion_3),
        ("k0 selection", criterion_4),
        ("Hill estimator", criterion_5),
        ("Pareto quantile extrapolation", criterion_6),
        ("tail intercept proxy", criterion_7),
        ("Zenga diagnostics", criterion_8),
        ("cohort drift and normalization", criterion_9),
        ("model variant ordering", criterion_10),
        ("determinism", criterion_11),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = format!("criterion_{}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| id.contains(f.as_str()) || name.contains(f.as_str())) {
            continue;
        }
        match run() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} criteria failed");
        std::process::exit(1);
    }
}
