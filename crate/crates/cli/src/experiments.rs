//! The four experiment families.

use rayon::prelude::*;
use serde::Serialize;
use vrclt_core::inference::{
    clt_diagnostics, coverage_experiment, mean_cov, rescaled_errors, steps_for, CltReport, CoverageSettings,
    GapDiagnostic, ReplicationEnsemble, Scaling, Termination,
};
use vrclt_core::numerics::{norm_sq, RngStream};
use vrclt_core::problems::nu_sq_surrogate;
use vrclt_core::solvers::{run, Trajectory};
use vrclt_core::theory::{delta_method_covariances, limit_covariance_for, mse_upper_bound, BoundInputs};
use vrclt_core::{AlgorithmKind, Matrix, ScheduleKind, SolverConfig, StochasticProblem};

use crate::config::{ExperimentKind, Prepared};
use crate::output::{freedman_diaconis, json_file, num, opt_num, Cell, Csv, OutputFile, Summary};
use crate::CliError;

pub struct Report {
    pub files: Vec<OutputFile>,
    pub summary: Summary,
}

/// Stream id `cell << 40 | meta << 16 | rep`.
pub fn stream_id(cell: usize, meta: usize, rep: usize) -> u64 {
    ((cell as u64) << 40) | ((meta as u64) << 16) | rep as u64
}

pub fn run_experiment(p: &Prepared) -> Result<Report, CliError> {
    match p.experiment {
        ExperimentKind::Rates => rates(p),
        ExperimentKind::Clt => clt(p),
        ExperimentKind::Coverage => coverage(p),
        ExperimentKind::Compare => compare(p),
    }
}

fn numerical(context: String) -> impl FnOnce(vrclt_core::Error) -> CliError {
    move |source| CliError::Numerical { context, source }
}

fn trajectories(p: &Prepared, cell: usize, cfg: &SolverConfig) -> Result<Vec<Trajectory>, CliError> {
    (0..p.config.trajectories)
        .into_par_iter()
        .map(|t| {
            let mut rng = RngStream::new(p.seed, stream_id(cell, 0, t));
            run(cfg, &p.problem, &mut rng).map_err(numerical(format!("{}, trajectory {t}", cfg.kind)))
        })
        .collect()
}

struct ErrorCurve {
    mean_err: Vec<f64>,
    mse: Vec<f64>,
}

fn error_curve(trajs: &[Trajectory]) -> ErrorCurve {
    let len = trajs[0].err_sq.len();
    let n = trajs.len() as f64;
    let mut mean_err = vec![0.0; len];
    let mut mse = vec![0.0; len];
    for t in trajs {
        for (k, &e) in t.err_sq.iter().enumerate() {
            mean_err[k] += e.sqrt();
            mse[k] += e;
        }
    }
    mean_err.iter_mut().for_each(|v| *v /= n);
    mse.iter_mut().for_each(|v| *v /= n);
    ErrorCurve { mean_err, mse }
}

fn cumulative_before(t: &Trajectory, k: usize) -> u64 {
    if k == 0 {
        0
    } else {
        t.cumulative_calls[k - 1]
    }
}

fn batch_at(cfg: &SolverConfig, k: u64) -> Option<u64> {
    match &cfg.schedule {
        Some(s) if cfg.kind != AlgorithmKind::BaselineSgd => s.batch_size(k).ok(),
        _ => Some(1),
    }
}

fn rates(p: &Prepared) -> Result<Report, CliError> {
    let prob = &p.problem;
    let x0 = &p.solvers[0].x0;
    let nu_sq = nu_sq_surrogate(prob, x0).max(nu_sq_surrogate(prob, prob.x_star()));
    let e0_sq = norm_sq(&vrclt_core::numerics::sub(x0, prob.x_star()));
    let mut files = Vec::new();
    let mut summary = Summary::new(
        "rates",
        p.seed,
        &["algorithm", "steps", "cum_oracle", "mse", "theory_bound"],
    );
    for (cell, cfg) in p.solvers.iter().enumerate() {
        let trajs = trajectories(p, cell, cfg)?;
        let curve = error_curve(&trajs);
        let bound = |k: u64| -> Option<f64> {
            let sched = cfg.schedule.as_ref()?;
            if cfg.kind == AlgorithmKind::BaselineSgd {
                return None;
            }
            let inputs = BoundInputs {
                eta: prob.eta(),
                lip: prob.lip(),
                alpha: cfg.alpha,
                nu_sq,
                e0_sq,
            };
            mse_upper_bound(cfg.kind, sched, k, &inputs).ok()
        };
        let mut csv = Csv::new(&["k", "N_k", "cum_oracle", "mean_err", "mse", "theory_bound"]);
        for k in 0..=cfg.steps as usize {
            csv.push_row([
                k.to_string(),
                batch_at(cfg, k as u64).map(|n| n.to_string()).unwrap_or_default(),
                cumulative_before(&trajs[0], k).to_string(),
                num(curve.mean_err[k]),
                num(curve.mse[k]),
                opt_num(bound(k as u64)),
            ]);
        }
        files.push(csv.finish(format!("rates_{}.csv", cfg.kind)));
        let last = cfg.steps as usize;
        summary.push(vec![
            cfg.kind.name().into(),
            cfg.steps.into(),
            trajs[0].oracle_calls().into(),
            curve.mse[last].into(),
            bound(cfg.steps).into(),
        ]);
    }
    Ok(Report { files, summary })
}

#[derive(Debug, Serialize)]
struct CltOutput {
    algorithm: AlgorithmKind,
    k: u64,
    schedule: ScheduleKind,
    alpha: f64,
    beta: f64,
    trajectories: usize,
    sigma: Vec<Vec<f64>>,
    sigma_marginal: Vec<Vec<f64>>,
    residual: f64,
    terms_used: u64,
    construction: vrclt_core::theory::Construction,
    companion: vrclt_core::theory::CompanionLabel,
    norm_bound: f64,
    norm_measured: f64,
    norm_measure: vrclt_core::theory::BoundMeasure,
    diagnostics: CltReport,
    stacked_covariance_distance: Option<f64>,
    gradient_covariance_theory: Vec<Vec<f64>>,
    gradient_covariance_distance: f64,
    looks_normal: bool,
}

/// Rescaled errors, gaps and gradients of one algorithm compared against
/// the limiting covariance.
pub struct CltAnalysis {
    pub samples: Vec<Vec<f64>>,
    pub report: CltReport,
    pub sigma: Matrix,
    pub sigma_marginal: Matrix,
    pub stacked_covariance_distance: Option<f64>,
    pub gradient_covariance_distance: f64,
    pub gradient_covariance_theory: Matrix,
}

fn rel_distance(a: &Matrix, b: &Matrix) -> f64 {
    a.sub(b).expect("same shape").frobenius_norm() / b.frobenius_norm().max(f64::MIN_POSITIVE)
}

pub fn scaling_of(cfg: &SolverConfig) -> Option<Scaling> {
    match cfg.schedule.as_ref()?.kind {
        ScheduleKind::Geometric { rho } => Some(Scaling::Geometric { rho, alpha: cfg.alpha }),
        ScheduleKind::Polynomial { v } => Some(Scaling::Polynomial { v, alpha: cfg.alpha }),
    }
}

/// Compares terminal iterates of `trajs` with the theoretical limit.
pub fn analyze_clt<P: StochasticProblem + ?Sized>(
    prob: &P,
    cfg: &SolverConfig,
    trajs: &[Trajectory],
    sigma_tol: f64,
) -> Result<(CltAnalysis, vrclt_core::LimitCovariance, vrclt_core::CompanionMatrix), vrclt_core::Error> {
    let m = prob.dim();
    let sched = cfg
        .schedule
        .as_ref()
        .ok_or_else(|| vrclt_core::Error::InvalidParameter("no batch schedule".into()))?;
    let scaling = scaling_of(cfg).expect("schedule present");
    let primary: Vec<Vec<f64>> = trajs.iter().map(|t| t.primary_terminal().to_vec()).collect();
    let mut ens = ReplicationEnsemble::new(cfg.steps, primary.clone())?.with_scaling(scaling);
    if cfg.kind.has_momentum() {
        let prev: Vec<Vec<f64>> = trajs.iter().map(|t| t.stacked_terminal()[m..].to_vec()).collect();
        ens = ens.with_previous(prev)?;
    }
    let samples = rescaled_errors(&ens, prob.x_star())?;
    let h = prob.hessian_at_opt();
    let (lc, cm) = limit_covariance_for(cfg.kind, sched, cfg.alpha, cfg.beta, h, &prob.noise_cov_at_opt(), sigma_tol)?;
    let sigma_marginal = lc.marginal(m);
    let marginal_samples: Vec<Vec<f64>> = samples.iter().map(|s| s[..m].to_vec()).collect();
    let c = scaling.factor(cfg.steps);
    let f_star = prob.f_star();
    let gaps: Vec<f64> = primary.iter().map(|x| c * c * (prob.f_value(x) - f_star)).collect();
    let (grad_theory, gap_theory) = delta_method_covariances(h, &sigma_marginal)?;
    let grads: Vec<Vec<f64>> = primary
        .iter()
        .map(|x| prob.exact_gradient(x).into_iter().map(|g| c * g).collect())
        .collect();
    let (_, grad_cov) = mean_cov(&grads);
    let report =
        clt_diagnostics(&marginal_samples, &sigma_marginal)?.with_gap(GapDiagnostic::from_values(&gaps, gap_theory));
    let stacked_covariance_distance = cfg.kind.has_momentum().then(|| {
        let (_, s) = mean_cov(&samples);
        rel_distance(&s, &lc.sigma)
    });
    Ok((
        CltAnalysis {
            samples,
            report,
            sigma: lc.sigma.clone(),
            sigma_marginal,
            stacked_covariance_distance,
            gradient_covariance_distance: rel_distance(&grad_cov, &grad_theory),
            gradient_covariance_theory: grad_theory,
        },
        lc,
        cm,
    ))
}

fn clt(p: &Prepared) -> Result<Report, CliError> {
    let m = p.problem.dim();
    let mut files = Vec::new();
    let mut summary = Summary::new(
        "clt",
        p.seed,
        &["algorithm", "k", "cov_dist", "max|skew|", "max|kurt|", "max_ks", "ks_crit", "gap_mean", "gap_theory"],
    );
    for (cell, cfg) in p.solvers.iter().enumerate() {
        let trajs = trajectories(p, cell, cfg)?;
        let (a, lc, cm) = analyze_clt(&p.problem, cfg, &trajs, p.config.clt.sigma_tol)
            .map_err(numerical(format!("{}, limiting covariance at k = {}", cfg.kind, cfg.steps)))?;
        let dim = a.samples[0].len();
        let mut header = vec!["rep".to_string()];
        header.extend((1..=dim).map(|j| format!("e{j}")));
        let mut csv = Csv::new(&header);
        for (i, s) in a.samples.iter().enumerate() {
            csv.push_row(std::iter::once(i.to_string()).chain(s.iter().map(|&v| num(v))));
        }
        files.push(csv.finish(format!("clt_{}_samples.csv", cfg.kind)));

        let mut hist = Csv::new(&["coordinate", "bin_lo", "bin_hi", "count", "density"]);
        for j in 0..m {
            let col: Vec<f64> = a.samples.iter().map(|s| s[j]).collect();
            let h = freedman_diaconis(&col);
            let n = col.len() as f64;
            for (b, &count) in h.counts.iter().enumerate() {
                let (lo, hi) = (h.edges[b], h.edges[b + 1]);
                hist.push_row([
                    (j + 1).to_string(),
                    num(lo),
                    num(hi),
                    count.to_string(),
                    num(count as f64 / (n * (hi - lo))),
                ]);
            }
        }
        files.push(hist.finish(format!("clt_{}_hist.csv", cfg.kind)));

        let norm_measured = cm
            .measured()
            .map_err(numerical(format!("{}, companion matrix", cfg.kind)))?;
        let looks_normal = a.report.looks_normal();
        let out = CltOutput {
            algorithm: cfg.kind,
            k: cfg.steps,
            schedule: cfg.schedule.as_ref().expect("validated").kind,
            alpha: cfg.alpha,
            beta: cfg.beta,
            trajectories: trajs.len(),
            sigma: a.sigma.to_rows(),
            sigma_marginal: a.sigma_marginal.to_rows(),
            residual: lc.residual,
            terms_used: lc.terms_used,
            construction: lc.construction,
            companion: cm.label,
            norm_bound: cm.norm_bound,
            norm_measured,
            norm_measure: cm.measure,
            diagnostics: a.report.clone(),
            stacked_covariance_distance: a.stacked_covariance_distance,
            gradient_covariance_theory: a.gradient_covariance_theory.to_rows(),
            gradient_covariance_distance: a.gradient_covariance_distance,
            looks_normal,
        };
        files.push(json_file(format!("clt_{}.json", cfg.kind), &out));
        let r = &a.report;
        let max_abs = |v: &[f64]| v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
        let gap = r.gap.as_ref().expect("gap attached");
        summary.push(vec![
            cfg.kind.name().into(),
            cfg.steps.into(),
            r.covariance_distance.into(),
            max_abs(&r.skewness).into(),
            max_abs(&r.excess_kurtosis).into(),
            max_abs(&r.ks).into(),
            r.ks_critical.into(),
            gap.mean.into(),
            gap.theory.into(),
        ]);
    }
    Ok(Report { files, summary })
}

#[derive(Debug, Clone, Serialize)]
pub struct CoverageRecord {
    pub algorithm: AlgorithmKind,
    pub n: usize,
    #[serde(rename = "N_max")]
    pub n_max: u64,
    pub delta: f64,
    pub coverage: f64,
    pub half_width: f64,
    pub meta_reps: usize,
    pub seed: u64,
    pub steps: u64,
    pub oracle_calls: u64,
    pub mean_volume: f64,
}

fn coverage(p: &Prepared) -> Result<Report, CliError> {
    let spec = &p.config.coverage;
    let mut budgets = spec.n_max.clone();
    budgets.sort_unstable();
    budgets.dedup();
    let mut ns = spec.n.clone();
    ns.sort_unstable();
    ns.dedup();

    let mut records = Vec::new();
    let mut cell = 0usize;
    for &n_max in &budgets {
        for &n in &ns {
            for cfg in &p.solvers {
                cell += 1;
                let settings = CoverageSettings {
                    n,
                    termination: Termination::Budget { n_max },
                    delta: spec.delta,
                    meta_reps: spec.meta_reps,
                    seed: p.seed,
                    stream_base: stream_id(cell, 0, 0),
                    target: spec.target,
                };
                let r = coverage_experiment(&p.problem, cfg, &settings)
                    .map_err(numerical(format!("{}, coverage cell n = {n}, N_max = {n_max}", cfg.kind)))?;
                let mean_volume = r.volumes.iter().sum::<f64>() / r.volumes.len() as f64;
                records.push(CoverageRecord {
                    algorithm: cfg.kind,
                    n,
                    n_max,
                    delta: spec.delta,
                    coverage: r.coverage,
                    half_width: r.half_width,
                    meta_reps: r.meta_reps,
                    seed: p.seed,
                    steps: r.steps,
                    oracle_calls: r.oracle_calls_per_replication,
                    mean_volume,
                });
            }
        }
    }

    let mut header = vec!["N_max".to_string(), "n".to_string()];
    let mut summary_header = vec!["N_max", "n"];
    for cfg in &p.solvers {
        header.push(format!("{}_coverage", cfg.kind));
        header.push(format!("{}_half_width", cfg.kind));
        summary_header.push(cfg.kind.name());
        summary_header.push("+/-");
    }
    let mut csv = Csv::new(&header);
    let mut summary = Summary::new("coverage", p.seed, &summary_header);
    for row in records.chunks(p.solvers.len()) {
        let mut fields = vec![row[0].n_max.to_string(), row[0].n.to_string()];
        let mut cells: Vec<Cell> = vec![row[0].n_max.into(), row[0].n.into()];
        for r in row {
            fields.push(num(r.coverage));
            fields.push(num(r.half_width));
            cells.push(r.coverage.into());
            cells.push(r.half_width.into());
        }
        csv.push_row(fields);
        summary.push(cells);
    }
    Ok(Report {
        files: vec![csv.finish("coverage.csv"), json_file("coverage.json", &records)],
        summary,
    })
}

/// Step indices recorded for a run of `steps` steps: all of them up to 100,
/// then a geometric grid with ratio `2^{1/4}`.
fn record_steps(steps: u64) -> Vec<u64> {
    let mut out: Vec<u64> = (0..=steps.min(100)).collect();
    let mut x = 100.0_f64;
    while (x as u64) < steps {
        x *= 2f64.powf(0.25);
        let k = (x.round() as u64).min(steps);
        if out.last() != Some(&k) {
            out.push(k);
        }
    }
    out
}

fn compare(p: &Prepared) -> Result<Report, CliError> {
    let n_max = p.config.compare.n_max;
    let mut csv = Csv::new(&["algorithm", "k", "cum_oracle", "mean_err", "mse"]);
    let mut summary = Summary::new("compare", p.seed, &["algorithm", "steps", "cum_oracle", "mse"]);
    for (cell, base) in p.solvers.iter().enumerate() {
        let mut cfg = base.clone();
        cfg.steps = steps_for(&cfg, Termination::Budget { n_max })
            .map_err(numerical(format!("{}, budget {n_max}", cfg.kind)))?;
        let trajs = trajectories(p, cell, &cfg)?;
        let curve = error_curve(&trajs);
        for k in record_steps(cfg.steps) {
            let k = k as usize;
            csv.push_row([
                cfg.kind.to_string(),
                k.to_string(),
                cumulative_before(&trajs[0], k).to_string(),
                num(curve.mean_err[k]),
                num(curve.mse[k]),
            ]);
        }
        summary.push(vec![
            cfg.kind.name().into(),
            cfg.steps.into(),
            trajs[0].oracle_calls().into(),
            curve.mse[cfg.steps as usize].into(),
        ]);
    }
    Ok(Report {
        files: vec![csv.finish("compare.csv")],
        summary,
    })
}
