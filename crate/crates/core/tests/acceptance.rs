//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any
//! failure.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use rsdr::dcov::{alpha_distance_matrix, double_center, sample_dcor_sq, sample_dcov_sq, Dataset};
use rsdr::estimator::{fit, AlphaSpec, FitConfig};
use rsdr::io::{load_csv, write_dataset_csv, ResponseSelector};
use rsdr::linalg::select_entries;
use rsdr::outlier::{detect, loo_dcor_scores, roc, OutlierConfig, Reducer};
use rsdr::sim::{
    generate, generate_ar1_outlier_data, replicate, Method, Model, ModelSpec, PredictorDist,
};
use rsdr::stiefel::{
    euclidean_gradient, project_stiefel, OptimizerConfig, UpdateRule, FEASIBILITY_TOL,
};

/// Name, time limit and check of one criterion.
type Criterion = (&'static str, Duration, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn sq_dist(u: &DMatrix<f64>, k: usize, l: usize) -> f64 {
    (u.row(k) - u.row(l)).norm_squared()
}

/// `S₁ + S₂ − 2S₃` from raw α-distances by explicit loops.
fn vstat_oracle(u: &DMatrix<f64>, v: &DMatrix<f64>, alpha: f64) -> f64 {
    let n = u.nrows();
    let a = |k: usize, l: usize| sq_dist(u, k, l).powf(alpha / 2.0);
    let b = |k: usize, l: usize| sq_dist(v, k, l).powf(alpha / 2.0);
    let nf = n as f64;
    let (mut s1, mut sa, mut sb, mut s3) = (0.0, 0.0, 0.0, 0.0);
    for k in 0..n {
        for l in 0..n {
            s1 += a(k, l) * b(k, l);
            sa += a(k, l);
            sb += b(k, l);
            for m in 0..n {
                s3 += a(k, l) * b(k, m);
            }
        }
    }
    s1 / (nf * nf) + (sa / (nf * nf)) * (sb / (nf * nf)) - 2.0 * s3 / (nf * nf * nf)
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let alphas = [0.3, 0.5, 1.0, 1.5];
    let mut worst: f64 = 0.0;
    for i in 0..50 {
        let n = rng.random_range(2..=50);
        let p = rng.random_range(1..=5);
        let q = rng.random_range(1..=5);
        let u = gaussian(&mut rng, n, p);
        let v = gaussian(&mut rng, n, q).map(|x| x * x + 0.3 * x);
        let alpha = alphas[i % 4];
        let fast = sample_dcov_sq(&u, &v, alpha).unwrap();
        let slow = vstat_oracle(&u, &v, alpha);
        worst = worst.max((fast - slow).abs() / slow.abs().max(f64::MIN_POSITIVE));
    }
    Outcome {
        pass: worst <= 1e-10,
        detail: format!("max relative error {worst:.2e} over 50 instances"),
    }
}

/// `F_η` straight from the definition, for any `p × d` matrix.
fn objective_oracle(
    c: &DMatrix<f64>,
    z: &DMatrix<f64>,
    b: &DMatrix<f64>,
    alpha: f64,
    eta: f64,
) -> f64 {
    let n = z.nrows();
    let proj = z * c;
    let mut total = 0.0;
    for k in 0..n {
        for l in 0..n {
            total += (sq_dist(&proj, k, l) + eta).powf(alpha / 2.0) * b[(k, l)];
        }
    }
    total / (n * n) as f64
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let eta = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let n = rng.random_range(5..=30);
        let p = rng.random_range(2..=6);
        let d = rng.random_range(1..=3.min(p));
        let alpha = rng.random_range(0.2..1.8);
        let z = gaussian(&mut rng, n, p);
        let y = DVector::from_fn(n, |i, _| {
            z[(i, 0)].sin() + 0.3 * rng.sample::<f64, _>(StandardNormal)
        });
        let b = double_center(&alpha_distance_matrix(&y, alpha).unwrap());
        let c = project_stiefel(&gaussian(&mut rng, p, d)).unwrap();
        let g = euclidean_gradient(&c, &z, &b, alpha, eta).unwrap();
        let h = 1e-6;
        let fd = DMatrix::from_fn(p, d, |i, j| {
            let mut plus = c.matrix().clone();
            let mut minus = c.matrix().clone();
            plus[(i, j)] += h;
            minus[(i, j)] -= h;
            (objective_oracle(&plus, &z, b.values(), alpha, eta)
                - objective_oracle(&minus, &z, b.values(), alpha, eta))
                / (2.0 * h)
        });
        worst = worst.max((&g - &fd).norm() / g.norm());
    }
    Outcome {
        pass: worst <= 1e-5,
        detail: format!("max relative error {worst:.2e} over 20 instances"),
    }
}

fn criterion_3() -> Outcome {
    let mut fits = 0;
    let mut worst_feas: f64 = 0.0;
    let mut non_monotone = 0;
    let mut seed = 300;
    let mut record = |r: &rsdr::estimator::FitResult| {
        fits += 1;
        worst_feas = worst_feas.max(r.trace.max_feasibility_error);
        if !r.trace.is_monotone(1e-12) {
            non_monotone += 1;
        }
    };
    for model in [Model::A, Model::B, Model::C] {
        for contaminated in [false, true] {
            for alpha in [0.3, 0.5, 1.0, 1.5] {
                for update in [UpdateRule::Riemannian, UpdateRule::Euclidean] {
                    seed += 1;
                    let g = generate(&ModelSpec {
                        contaminated,
                        seed,
                        ..ModelSpec::new(model, PredictorDist::Gaussian, 100, 6)
                    })
                    .unwrap();
                    let config = FitConfig {
                        optimizer: OptimizerConfig {
                            update,
                            ..OptimizerConfig::default()
                        },
                        ..FitConfig::default()
                    };
                    record(&fit(&g.data, model.dim(), &AlphaSpec::Fixed(alpha), &config).unwrap());
                }
            }
        }
    }
    // High-dimensional fits with a ridge, as used by the outlier reducer.
    for s in 0..3 {
        let (data, _) = generate_ar1_outlier_data(100, 200, 10, 900 + s).unwrap();
        let config = FitConfig {
            ridge: Some(0.1),
            ..FitConfig::default()
        };
        record(&fit(&data, 3, &AlphaSpec::Fixed(0.5), &config).unwrap());
    }
    Outcome {
        pass: worst_feas <= FEASIBILITY_TOL && non_monotone == 0,
        detail: format!(
            "{fits} fits, worst feasibility {worst_feas:.2e}, {non_monotone} non-monotone traces"
        ),
    }
}

fn mean_angle(model: Model, n: usize, p: usize, contaminated: bool, alphas: &[f64]) -> Vec<f64> {
    let spec = ModelSpec {
        contaminated,
        seed: 1000,
        ..ModelSpec::new(model, PredictorDist::Gaussian, n, p)
    };
    let methods: Vec<Method> = alphas.iter().map(|&a| Method::rsdr(a)).collect();
    let report = replicate(&spec, &methods, 30).unwrap();
    report.methods.iter().map(|m| m.angle.mean).collect()
}

fn criterion_4() -> Outcome {
    let a = mean_angle(Model::A, 100, 6, false, &[1.0])[0];
    let c = mean_angle(Model::C, 100, 6, false, &[1.0])[0];
    Outcome {
        pass: (0.17..=0.40).contains(&a) && (0.10..=0.35).contains(&c),
        detail: format!(
            "A(1) mean angle {a:.4} in [0.17, 0.40]; C(1) mean angle {c:.4} in [0.10, 0.35]"
        ),
    }
}

fn criterion_5() -> Outcome {
    let m = mean_angle(Model::A, 100, 6, true, &[1.0, 0.5]);
    let (one, half) = (m[0], m[1]);
    Outcome {
        pass: one - half >= 0.05,
        detail: format!(
            "contaminated A(1): alpha=1 {one:.4}, alpha=0.5 {half:.4}, gap {:.4}",
            one - half
        ),
    }
}

fn criterion_6() -> Outcome {
    let small = mean_angle(Model::A, 100, 6, false, &[1.0])[0];
    let large = mean_angle(Model::A, 500, 20, false, &[1.0])[0];
    Outcome {
        pass: large <= small,
        detail: format!("(500,20) {large:.4} <= (100,6) {small:.4}"),
    }
}

fn criterion_7() -> Outcome {
    let mut rsdr3 = Vec::new();
    let mut rsdr2 = Vec::new();
    let mut pca3 = Vec::new();
    for seed in 0..10u64 {
        let (data, labels) = generate_ar1_outlier_data(100, 200, 10, seed).unwrap();
        let auc = |reducer, d| {
            let config = OutlierConfig {
                gamma: 0.05,
                n_boot: 100,
                reducer,
                d,
                alpha: 0.5,
                ridge: None,
            };
            let out = detect(&data, &config, seed).unwrap();
            roc(&out.scores, &labels).unwrap().auc
        };
        rsdr3.push(auc(Reducer::Rsdr, 3));
        rsdr2.push(auc(Reducer::Rsdr, 2));
        pca3.push(auc(Reducer::Pca, 3));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let d3_wins = rsdr3.iter().zip(&rsdr2).filter(|(a, b)| a >= b).count();
    Outcome {
        pass: mean(&rsdr3) > mean(&pca3) && d3_wins > 5,
        detail: format!(
            "mean AUC rSDR(d=3) {:.4} vs PCA(d=3) {:.4}; d=3 >= d=2 in {d3_wins}/10 seeds",
            mean(&rsdr3),
            mean(&pca3)
        ),
    }
}

fn naive_loo(xr: &DMatrix<f64>, y: &DVector<f64>) -> Vec<f64> {
    let n = xr.nrows();
    (0..n)
        .map(|i| {
            let keep: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            let y_del = select_entries(y, &keep);
            let m = xr.ncols();
            (0..m)
                .map(|k| {
                    let col = xr.column(k).into_owned();
                    let col_del = select_entries(&col, &keep);
                    let full = sample_dcor_sq(&col, y, 1.0).unwrap().sqrt();
                    let del = sample_dcor_sq(&col_del, &y_del, 1.0).unwrap().sqrt();
                    (full - del).powi(2)
                })
                .sum::<f64>()
                / m as f64
        })
        .collect()
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let n = rng.random_range(3..=60);
        let m = rng.random_range(1..=5);
        let x = gaussian(&mut rng, n, m);
        let y = DVector::from_fn(n, |i, _| {
            x[(i, 0)].abs() + 0.5 * rng.sample::<f64, _>(StandardNormal)
        });
        let fast = loo_dcor_scores(&x, &y).unwrap();
        let slow = naive_loo(&x, &y);
        for (a, b) in fast.iter().zip(&slow) {
            worst = worst.max((a - b).abs());
        }
    }
    Outcome {
        pass: worst <= 1e-10,
        detail: format!("max absolute deviation {worst:.2e} over 10 datasets"),
    }
}

fn run_simulate(dir: &Path, tag: &str, threads: &str) -> Vec<u8> {
    let out = dir.join(format!("{tag}.json"));
    let status = Command::new(env!("CARGO_BIN_EXE_rsdr"))
        .args([
            "simulate",
            "--model",
            "A",
            "--dist",
            "gaussian",
            "--n",
            "100",
            "--p",
            "6",
            "--reps",
            "5",
            "--seed",
            "7",
            "--threads",
            threads,
            "--output",
        ])
        .arg(&out)
        .status()
        .expect("binary runs");
    assert!(status.success());
    std::fs::read(out).unwrap()
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let a = run_simulate(dir.path(), "a", "1");
    let b = run_simulate(dir.path(), "b", "1");
    let c = run_simulate(dir.path(), "c", "4");
    let identical = a == b && b == c;

    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let x = DMatrix::from_fn(40, 4, |_, j| {
        rng.sample::<f64, _>(StandardNormal) * 10f64.powi(j as i32 * 4 - 6)
    });
    let y = DVector::from_fn(40, |_, _| rng.random::<f64>() / 3.0);
    let data = Dataset::new(x, y).unwrap();
    let path = dir.path().join("round.csv");
    write_dataset_csv(&path, &data, None, "y").unwrap();
    let back = load_csv(&path, &ResponseSelector::Last, false)
        .unwrap()
        .dataset;
    let round_trip = back.x() == data.x() && back.y() == data.y();
    Outcome {
        pass: identical && round_trip,
        detail: format!(
            "simulate byte-identical across runs and 1/4 threads: {identical}; CSV round-trip exact: {round_trip}"
        ),
    }
}

fn main() {
    let criteria: [Criterion; 9] = [
        (
            "V-statistic equivalence",
            Duration::from_secs(10),
            criterion_1,
        ),
        ("gradient correctness", Duration::from_secs(30), criterion_2),
        (
            "optimizer invariants",
            Duration::from_secs(600),
            criterion_3,
        ),
        (
            "desk-scale angles A(1) and C(1)",
            Duration::from_secs(180),
            criterion_4,
        ),
        (
            "robustness ordering under contamination",
            Duration::from_secs(300),
            criterion_5,
        ),
        ("consistency trend", Duration::from_secs(600), criterion_6),
        (
            "outlier detection dominance",
            Duration::from_secs(600),
            criterion_7,
        ),
        ("leave-one-out oracle", Duration::from_secs(60), criterion_8),
        (
            "CLI determinism and round-trip",
            Duration::from_secs(600),
            criterion_9,
        ),
    ];
    let mut failed = 0;
    for (i, (name, limit, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let pass = outcome.pass && elapsed <= *limit;
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {} [{}] {}: {} ({:.1}s, limit {}s)",
            i + 1,
            name,
            if pass { "PASS" } else { "FAIL" },
            outcome.detail,
            elapsed.as_secs_f64(),
            limit.as_secs()
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
