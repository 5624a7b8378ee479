use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;
use vrclt_core::inference::{mean_cov, ConfidenceRegion};
use vrclt_core::numerics::{f_quantile, random_spd_with_spectrum};
use vrclt_core::solvers::run;
use vrclt_core::theory::limit_covariance_for;
use vrclt_core::{AlgorithmKind, QuadraticGaussianProblem, RngStream, SolverConfig};

fn problem() -> QuadraticGaussianProblem {
    let mut rng = RngStream::new(1, 0);
    let h = random_spd_with_spectrum(&[1.0, 2.5, 4.0, 7.0, 10.0], &mut rng).unwrap().symmetrized();
    let s = random_spd_with_spectrum(&[0.5, 1.0, 1.0, 1.5, 2.0], &mut rng).unwrap().symmetrized();
    QuadraticGaussianProblem::new(h, vec![1.0, -0.5, 0.25, 2.0, -1.0], s).unwrap()
}

fn solvers(c: &mut Criterion) {
    let p = problem();
    let mut g = c.benchmark_group("run_30_steps");
    for kind in AlgorithmKind::VARIANCE_REDUCED {
        let cfg = SolverConfig::defaults(kind, &p, vec![0.0; 5], 30).unwrap();
        let mut seed = 0;
        g.bench_function(kind.to_string(), |b| {
            b.iter(|| {
                seed += 1;
                black_box(run(&cfg, &p, &mut RngStream::new(7, seed)).unwrap())
            })
        });
    }
    g.finish();
}

fn limit_covariance(c: &mut Criterion) {
    let p = problem();
    let mut g = c.benchmark_group("limit_covariance");
    for kind in AlgorithmKind::VARIANCE_REDUCED {
        let cfg = SolverConfig::defaults(kind, &p, vec![0.0; 5], 30).unwrap();
        let sched = cfg.schedule.unwrap();
        g.bench_function(kind.to_string(), |b| {
            b.iter(|| {
                limit_covariance_for(kind, &sched, cfg.alpha, cfg.beta, p.hessian(), p.noise_cov(), 1e-12).unwrap()
            })
        });
    }
    g.finish();
}

fn inference(c: &mut Criterion) {
    c.bench_function("f_quantile_5_10", |b| b.iter(|| f_quantile(black_box(5), black_box(10), 0.95)));
    let mut rng = RngStream::new(2, 0);
    let samples: Vec<Vec<f64>> = (0..15).map(|_| (0..5).map(|_| rng.standard_normal()).collect()).collect();
    c.bench_function("mean_cov_15x5", |b| b.iter(|| mean_cov(black_box(&samples))));
    let region = ConfidenceRegion::from_samples(&samples, 0.05).unwrap();
    let x = vec![0.1; 5];
    c.bench_function("region_contains", |b| b.iter(|| region.contains(black_box(&x))));
}

criterion_group!(benches, solvers, limit_covariance, inference);
criterion_main!(benches);
