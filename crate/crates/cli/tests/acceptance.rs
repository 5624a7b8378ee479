//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits non-zero if any criterion fails.

use rayon::prelude::*;
use std::process::ExitCode;
use std::time::Instant;
use vrclt_cli::config::ExperimentKind;
use vrclt_cli::experiments::analyze_clt;
use vrclt_cli::RunOptions;
use vrclt_core::inference::gaussian_replicate_coverage;
use vrclt_core::numerics::{f_cdf, f_quantile, random_spd_with_spectrum};
use vrclt_core::solvers::{default_hyperparameters, run};
use vrclt_core::theory::{limit_covariance_for, limit_covariance_geometric};
use vrclt_core::{
    AlgorithmKind, BatchSchedule, Matrix, QuadraticGaussianProblem, RngStream, SolverConfig, StochasticProblem, Trajectory,
};

const X_STAR: [f64; 5] = [1.0, -0.5, 0.25, 2.0, -1.0];

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

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn quadratic(eigenvalues: &[f64], x_star: &[f64], noise: Matrix, seed: u64) -> QuadraticGaussianProblem {
    let mut rng = RngStream::new(seed, 0);
    QuadraticGaussianProblem::random_basis(eigenvalues, x_star.to_vec(), noise, &mut rng).unwrap()
}

fn kappa10() -> QuadraticGaussianProblem {
    quadratic(&linspace(1.0, 10.0, 5), &X_STAR, Matrix::identity(5), 11)
}

fn ensemble(cfg: &SolverConfig, p: &QuadraticGaussianProblem, paths: u64, seed: u64) -> Vec<Trajectory> {
    (0..paths)
        .into_par_iter()
        .map(|i| run(cfg, p, &mut RngStream::new(seed, i)).unwrap())
        .collect()
}

/// Per-step mean of `f(trajectory)[k]`.
fn mean_curve(trajs: &[Trajectory], f: impl Fn(&Trajectory) -> Vec<f64>) -> Vec<f64> {
    let curves: Vec<Vec<f64>> = trajs.iter().map(f).collect();
    let n = curves.len() as f64;
    (0..curves[0].len()).map(|k| curves.iter().map(|c| c[k]).sum::<f64>() / n).collect()
}

fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn geometric_rate() -> Outcome {
    let p = kappa10();
    let cfg = SolverConfig::defaults(AlgorithmKind::VrSgd, &p, vec![0.0; 5], 30).unwrap();
    let rho = default_hyperparameters(AlgorithmKind::VrSgd, p.eta(), p.lip()).unwrap().rho;
    let trajs = ensemble(&cfg, &p, 100, 101);
    let err = mean_curve(&trajs, |t| t.err_sq.iter().map(|e| e.sqrt()).collect());
    let ks: Vec<f64> = (10..=30).map(|k| k as f64).collect();
    let logs: Vec<f64> = (10..=30).map(|k| err[k].ln()).collect();
    let slope = ls_slope(&ks, &logs);
    let target = 0.5 * rho.ln();
    let rel = (slope / target - 1.0).abs();
    outcome(rel < 0.15, format!("slope {slope:.5} vs ½ln ρ₁ = {target:.5} (rel {rel:.3})"))
}

/// First `k` at which the mean error falls to `tol · ‖x₀ − x*‖`.
fn iterations_to(kind: AlgorithmKind, p: &QuadraticGaussianProblem, tol: f64) -> Option<usize> {
    let rho = default_hyperparameters(kind, p.eta(), p.lip()).unwrap().rho;
    let steps = (2.0 * (1.0 / tol).ln() / (-0.5 * rho.ln())).ceil() as u64;
    let cfg = SolverConfig::defaults(kind, p, vec![0.0; 5], steps).unwrap();
    let trajs = ensemble(&cfg, p, 100, 202);
    let err = mean_curve(&trajs, |t| t.err_sq.iter().map(|e| e.sqrt()).collect());
    err.iter().position(|&e| e <= tol * err[0])
}

fn acceleration() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for kappa in [16.0f64, 100.0] {
        let p = quadratic(&linspace(1.0, kappa, 5), &X_STAR, Matrix::identity(5), 12);
        let sgd = iterations_to(AlgorithmKind::VrSgd, &p, 1e-3);
        let acc = iterations_to(AlgorithmKind::VrAccelerated, &p, 1e-3);
        match (sgd, acc) {
            (Some(s), Some(a)) => {
                let ratio = s as f64 / a as f64;
                let rel = ratio / kappa.sqrt();
                pass &= (0.5..=2.0).contains(&rel);
                parts.push(format!("κ={kappa}: {s}/{a} = {ratio:.2} vs √κ = {}", kappa.sqrt()));
            }
            _ => {
                pass = false;
                parts.push(format!("κ={kappa}: tolerance not reached"));
            }
        }
    }
    outcome(pass, parts.join("; "))
}

fn polynomial_rate() -> Outcome {
    let p = kappa10();
    let mut pass = true;
    let mut parts = Vec::new();
    for kind in AlgorithmKind::VARIANCE_REDUCED {
        let cfg = SolverConfig::defaults(kind, &p, vec![0.0; 5], 200)
            .unwrap()
            .with_schedule(BatchSchedule::polynomial(2.0).unwrap());
        let trajs = ensemble(&cfg, &p, 100, 303);
        let mse = mean_curve(&trajs, |t| t.err_sq.clone());
        let x: Vec<f64> = (20..=200).map(|k| (k as f64).ln()).collect();
        let y: Vec<f64> = (20..=200).map(|k| mse[k].ln()).collect();
        let slope = ls_slope(&x, &y);
        let rel = (slope / -2.0 - 1.0).abs();
        pass &= rel < 0.15;
        parts.push(format!("{kind} {slope:.3}"));
    }
    outcome(pass, format!("slopes vs -2: {}", parts.join(", ")))
}

/// Largest `(mean(D) − allowance)/SE(D)` over `k ≤ 20`, with
/// `D = s_{k+1} − c·s_k` per path.
fn recursion_excess(seq: &[Vec<f64>], c: f64, allowance: impl Fn(usize) -> f64) -> (f64, usize) {
    let mut worst = (f64::NEG_INFINITY, 0);
    for k in 0..=20 {
        let d: Vec<f64> = seq.iter().map(|s| s[k + 1] - c * s[k]).collect();
        let (m, se) = mean_se(&d);
        let z = (m - allowance(k)) / se.max(f64::MIN_POSITIVE);
        if z > worst.0 {
            worst = (z, k);
        }
    }
    worst
}

fn recursions() -> Outcome {
    let p = kappa10();
    let nu_sq = p.noise_cov().trace();
    let sgd = SolverConfig::defaults(AlgorithmKind::VrSgd, &p, vec![0.0; 5], 22).unwrap();
    let (eta, lip) = (p.eta(), p.lip());
    let q = 1.0 - 2.0 * sgd.alpha * eta * lip / (eta + lip);
    let trajs = ensemble(&sgd, &p, 10_000, 404);
    let sizes = trajs[0].batch_sizes.clone();
    let seqs: Vec<Vec<f64>> = trajs.iter().map(|t| t.err_sq.clone()).collect();
    let a = sgd.alpha;
    let (z1, k1) = recursion_excess(&seqs, q, |k| a * a * nu_sq / sizes[k] as f64);

    let hb = SolverConfig::defaults(AlgorithmKind::VrHeavyBall, &p, vec![0.0; 5], 22).unwrap();
    let trajs = ensemble(&hb, &p, 10_000, 405);
    let sizes = trajs[0].batch_sizes.clone();
    // ‖(x_k − x*, x_{k−1} − x*)‖² with x_{−1} = x₀
    let seqs: Vec<Vec<f64>> = trajs
        .iter()
        .map(|t| (0..t.err_sq.len()).map(|k| t.err_sq[k] + t.err_sq[k.saturating_sub(1)]).collect())
        .collect();
    let a = hb.alpha;
    let (z3, k3) = recursion_excess(&seqs, hb.beta, |k| a * a * nu_sq / sizes[k] as f64);
    outcome(
        z1 <= 4.0 && z3 <= 4.0,
        format!("max excess in SE units: VR-SGD {z1:.2} (k={k1}), heavy-ball stacked {z3:.2} (k={k3})"),
    )
}

fn limit_covariances() -> Outcome {
    let mut worst_lyap: f64 = 0.0;
    let mut worst_diff: f64 = 0.0;
    let mut worst_rel: f64 = 0.0;
    for inst in 0..20u64 {
        let mut rng = RngStream::new(505, inst);
        let m = 2 + (inst % 3) as usize;
        let spectrum: Vec<f64> = (0..m).map(|_| 1.0 + 9.0 * rng.uniform()).collect();
        let noise: Vec<f64> = (0..m).map(|_| 0.1 + rng.uniform()).collect();
        let h = random_spd_with_spectrum(&spectrum, &mut rng).unwrap().symmetrized();
        let s0 = random_spd_with_spectrum(&noise, &mut rng).unwrap().symmetrized();
        let kind = AlgorithmKind::VARIANCE_REDUCED[(inst % 3) as usize];
        let (eta, lip) = spectrum.iter().fold((f64::MAX, 0.0f64), |(lo, hi), &l| (lo.min(l), hi.max(l)));
        let hp = default_hyperparameters(kind, eta, lip).unwrap();
        let geo = BatchSchedule::geometric(hp.rho).unwrap();
        let (lc, _) = limit_covariance_for(kind, &geo, hp.alpha, hp.beta, &h, &s0, 1e-15).unwrap();
        worst_lyap = worst_lyap.max(lc.residual);

        let poly = BatchSchedule::polynomial(1.0 + (inst % 2) as f64).unwrap();
        let (pc, cm) = limit_covariance_for(kind, &poly, hp.alpha, hp.beta, &h, &s0, 1e-7).unwrap();
        worst_diff = worst_diff.max(pc.residual);
        let g = if kind == AlgorithmKind::VrSgd {
            Matrix::identity(m)
        } else {
            Matrix::upper_injection(m)
        };
        let lyap = limit_covariance_geometric(&cm.matrix, &g, &s0, 1e-15).unwrap();
        let rel = pc.sigma.sub(&lyap.sigma).unwrap().frobenius_norm() / lyap.sigma.frobenius_norm();
        worst_rel = worst_rel.max(rel);
    }
    outcome(
        worst_lyap < 1e-10 && worst_diff < 1e-6 && worst_rel < 1e-5,
        format!("20 instances: Lyapunov residual {worst_lyap:.2e}, k vs 2k {worst_diff:.2e}, vs Lyapunov {worst_rel:.2e}"),
    )
}

fn clt_instance() -> QuadraticGaussianProblem {
    let s0 = Matrix::from_rows(&[vec![1.0, 0.3], vec![0.3, 0.5]]).unwrap();
    quadratic(&[1.0, 10.0], &[1.0, -1.0], s0, 13)
}

fn empirical_clt() -> Outcome {
    let p = clt_instance();
    let mut pass = true;
    let mut parts = Vec::new();
    for kind in AlgorithmKind::VARIANCE_REDUCED {
        let cfg = SolverConfig::defaults(kind, &p, vec![0.0; 2], 50).unwrap();
        let trajs = ensemble(&cfg, &p, 2000, 606);
        let (a, _, _) = analyze_clt(&p, &cfg, &trajs, 1e-12).unwrap();
        let r = &a.report;
        let skew = r.skewness.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        let kurt = r.excess_kurtosis.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        let ks = r.ks.iter().fold(0.0f64, |m, &s| m.max(s));
        pass &= r.looks_normal();
        parts.push(format!(
            "{kind}: cov {:.3} skew {skew:.3} kurt {kurt:.3} ks {ks:.4}/{:.4}",
            r.covariance_distance, r.ks_critical
        ));
    }
    outcome(pass, parts.join("; "))
}

fn delta_method() -> Outcome {
    let p = clt_instance();
    let cfg = SolverConfig::defaults(AlgorithmKind::VrSgd, &p, vec![0.0; 2], 50).unwrap();
    let trajs = ensemble(&cfg, &p, 2000, 707);
    let (a, _, _) = analyze_clt(&p, &cfg, &trajs, 1e-12).unwrap();
    let gap = a.report.gap.unwrap();
    let z = (gap.mean - gap.theory).abs() / gap.std_err;
    outcome(
        z <= 4.0 && a.gradient_covariance_distance < 0.3,
        format!(
            "gap mean {:.4} vs ½tr(HΣ₁) {:.4} ({z:.2} SE); gradient covariance distance {:.3}",
            gap.mean, gap.theory, a.gradient_covariance_distance
        ),
    )
}

fn region_law() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    let reps = 10_000;
    let se = (0.95f64 * 0.05 / reps as f64).sqrt();
    for (i, (m, n)) in [(1usize, 5usize), (2, 6), (5, 10)].into_iter().enumerate() {
        let mut rng = RngStream::new(808, i as u64);
        let spectrum: Vec<f64> = (0..m).map(|j| 0.5 + j as f64).collect();
        let sigma = random_spd_with_spectrum(&spectrum, &mut rng).unwrap().symmetrized();
        let mean: Vec<f64> = (0..m).map(|j| j as f64 - 1.0).collect();
        let c = gaussian_replicate_coverage(&mean, &sigma, n, 0.05, reps, 809 + i as u64).unwrap();
        pass &= (c.coverage - 0.95).abs() <= 2.0 * se;
        parts.push(format!("(m={m}, n={n}) {:.4}", c.coverage));
    }
    outcome(pass, format!("{} vs 0.95 ± {:.4}", parts.join(", "), 2.0 * se))
}

fn options(sets: &[&str], out_dir: &std::path::Path, workers: usize) -> RunOptions {
    RunOptions {
        config: None,
        sets: sets.iter().map(|s| s.to_string()).collect(),
        out_dir: out_dir.to_path_buf(),
        seed: Some(2024),
        workers,
    }
}

fn table_one() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let sets = [
        r#"problem={"kind": "linear-regression", "r_u_eigenvalues": [0.5, 1.0, 2.0, 3.5, 5.0], "basis_seed": 11, "sigma_nu": 1.0, "x_star": [1.0, -0.5, 0.25, 2.0, -1.0]}"#,
        "coverage.n=[6, 8, 10, 15]",
        "coverage.n_max=[1000]",
        "coverage.meta_reps=1000",
        "coverage.delta=0.05",
    ];
    let report = vrclt_cli::run(ExperimentKind::Coverage, &options(&sets, dir.path(), 0)).unwrap();
    let json = &report.files.iter().find(|f| f.name == "coverage.json").unwrap().contents;
    let records: Vec<serde_json::Value> = serde_json::from_str(json).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for kind in AlgorithmKind::VARIANCE_REDUCED {
        let cov: Vec<(u64, f64, f64)> = records
            .iter()
            .filter(|r| r["algorithm"] == kind.name())
            .map(|r| {
                let c = r["coverage"].as_f64().unwrap();
                let reps = r["meta_reps"].as_f64().unwrap();
                (r["n"].as_u64().unwrap(), c, (c * (1.0 - c) / reps).sqrt())
            })
            .collect();
        let at = |n| cov.iter().find(|c| c.0 == n).map(|c| c.1).unwrap();
        pass &= (0.89..=0.99).contains(&at(10)) && (0.93..=1.0).contains(&at(15));
        let monotone = cov.windows(2).all(|w| w[1].1 >= w[0].1 - 2.0 * (w[0].2.powi(2) + w[1].2.powi(2)).sqrt());
        pass &= monotone && cov.len() == 4;
        let cells: Vec<String> = cov.iter().map(|c| format!("{:.3}", c.1)).collect();
        parts.push(format!("{kind} [{}]", cells.join(" ")));
    }
    outcome(pass, format!("n=6,8,10,15: {}", parts.join("; ")))
}

fn special_functions() -> Outcome {
    let mut worst: f64 = 0.0;
    for d1 in 1..=20u32 {
        for d2 in 1..=20u32 {
            for p in [0.01, 0.05, 0.5, 0.95] {
                worst = worst.max((f_cdf(d1, d2, f_quantile(d1, d2, p)) - p).abs());
            }
        }
    }
    let n: usize = 10_000_000;
    let chunks = 100;
    let mut draws: Vec<f64> = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = RngStream::new(1010, c as u64);
            (0..n / chunks)
                .map(|_| (rng.chi_square(5.0) / 5.0) / (rng.chi_square(10.0) / 10.0))
                .collect::<Vec<_>>()
        })
        .collect();
    draws.sort_unstable_by(f64::total_cmp);
    let half = 2.5758 * (n as f64 * 0.95 * 0.05).sqrt();
    let lo = draws[(0.95 * n as f64 - half).floor() as usize];
    let hi = draws[(0.95 * n as f64 + half).ceil() as usize];
    let q = f_quantile(5, 10, 0.95);
    outcome(
        worst <= 1e-9 && (lo..=hi).contains(&q),
        format!("round trip max error {worst:.2e}; f_quantile(5,10,0.95) = {q:.5} in [{lo:.5}, {hi:.5}]"),
    )
}

fn determinism() -> Outcome {
    let csv = |workers| {
        let dir = tempfile::tempdir().unwrap();
        vrclt_cli::run(ExperimentKind::Coverage, &options(&[], dir.path(), workers)).unwrap();
        std::fs::read(dir.path().join("coverage.csv")).unwrap()
    };
    let a = csv(8);
    let b = csv(8);
    let c = csv(1);
    outcome(a == b && a == c, format!("{} bytes; repeat equal {}, 1 vs 8 workers equal {}", a.len(), a == b, a == c))
}

fn main() -> ExitCode {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 11] = [
        ("geometric rate", geometric_rate),
        ("acceleration constant", acceleration),
        ("polynomial rate", polynomial_rate),
        ("one-step recursions", recursions),
        ("limiting covariance", limit_covariances),
        ("empirical CLT", empirical_clt),
        ("delta method", delta_method),
        ("finite-n region law", region_law),
        ("coverage table", table_one),
        ("special functions", special_functions),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = check();
        let status = if o.pass { "PASS" } else { "FAIL" };
        failed += usize::from(!o.pass);
        println!("[{status}] {:>2} {name}: {} ({:.1}s)", i + 1, o.detail, start.elapsed().as_secs_f64());
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
