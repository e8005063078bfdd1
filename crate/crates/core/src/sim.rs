//! Synthetic single- and multiple-index models, contamination, the principal
//! angle metric and a seeded replication runner.

use std::fmt;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Bernoulli, Distribution, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dcov::Dataset;
use crate::error::{Error, Result};
use crate::estimator::{fit, AlphaSpec, FitConfig};
use crate::linalg::{orthonormal_basis, thin_svd};
use crate::seed::{self, Stream};

/// Probability that a sample's response is contaminated.
pub const CONTAMINATION_RATE: f64 = 0.1;
/// Multiplier of `1ᵀX` in the contamination term.
pub const CONTAMINATION_SCALE: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Model {
    /// `Y = (β₁ᵀX)² + β₂ᵀX + 0.1ε`
    A,
    /// `Y = sign(2β₁ᵀX + ε₁) · log|2β₂ᵀX + 4 + ε₂|`
    B,
    /// `Y = exp(β₃ᵀX) ε`
    C,
}

impl Model {
    pub fn dim(self) -> usize {
        match self {
            Model::A | Model::B => 2,
            Model::C => 1,
        }
    }
}

impl std::str::FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Model::A),
            "B" => Ok(Model::B),
            "C" => Ok(Model::C),
            other => Err(Error::Parameter(format!("unknown model '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictorDist {
    /// `N(0, I)`, labelled (1).
    Gaussian,
    /// `U[−2, 2]^p`, labelled (2).
    Uniform,
}

impl PredictorDist {
    fn label(self) -> u8 {
        match self {
            PredictorDist::Gaussian => 1,
            PredictorDist::Uniform => 2,
        }
    }
}

impl std::str::FromStr for PredictorDist {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" | "normal" | "1" => Ok(PredictorDist::Gaussian),
            "uniform" | "2" => Ok(PredictorDist::Uniform),
            other => Err(Error::Parameter(format!(
                "unknown predictor distribution '{other}'"
            ))),
        }
    }
}

/// How a contaminated response is altered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Contamination {
    /// `Y_i ← Y_i + 50·1ᵀX_i`
    #[default]
    Additive,
    /// `Y_i ← 50·1ᵀX_i`
    Replace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub model: Model,
    pub dist: PredictorDist,
    pub n: usize,
    pub p: usize,
    pub contaminated: bool,
    #[serde(default)]
    pub contamination: Contamination,
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(model: Model, dist: PredictorDist, n: usize, p: usize) -> Self {
        Self {
            model,
            dist,
            n,
            p,
            contaminated: false,
            contamination: Contamination::Additive,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 3 {
            return Err(Error::Parameter(format!(
                "models need p >= 3, got {}",
                self.p
            )));
        }
        if self.n < 2 {
            return Err(Error::Parameter(format!("need n >= 2, got {}", self.n)));
        }
        Ok(())
    }

    /// Table-style label such as `A(1)`.
    pub fn label(&self) -> String {
        format!("{:?}({})", self.model, self.dist.label())
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} n={} p={}{}",
            self.label(),
            self.n,
            self.p,
            if self.contaminated {
                " contaminated"
            } else {
                ""
            }
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrueSubspace {
    /// `p × d` true directions `β_i = R_dᵀ β̃_i`.
    pub beta: DMatrix<f64>,
    /// The random rotation `R_d ∈ SO(p)`.
    pub rotation: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub data: Dataset,
    pub truth: TrueSubspace,
    /// Which responses were contaminated.
    pub contaminated: Vec<bool>,
}

/// Haar-distributed rotation: QR of a Gaussian matrix with the signs of
/// `diag(R)` folded into `Q`, then one column flipped if `det = −1`.
pub fn random_rotation<R: Rng + ?Sized>(p: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..p {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    if q.determinant() < 0.0 {
        q.column_mut(0).neg_mut();
    }
    q
}

fn canonical_directions(model: Model, p: usize) -> DMatrix<f64> {
    match model {
        Model::A | Model::B => {
            let mut b = DMatrix::zeros(p, 2);
            b[(0, 0)] = 1.0;
            b[(1, 1)] = 1.0;
            b
        }
        Model::C => {
            let mut b = DMatrix::zeros(p, 1);
            b[(0, 0)] = 1.0;
            b[(1, 0)] = 0.5;
            b[(2, 0)] = 1.0;
            b
        }
    }
}

/// Draws one dataset from the model. Fully determined by `spec`.
pub fn generate(spec: &ModelSpec) -> Result<Generated> {
    spec.validate()?;
    let (n, p) = (spec.n, spec.p);
    let rotation = random_rotation(p, &mut seed::rng(spec.seed, Stream::Rotation, 0));
    let beta = rotation.transpose() * canonical_directions(spec.model, p);

    let mut rng = seed::rng(spec.seed, Stream::Data, 0);
    let x = match spec.dist {
        PredictorDist::Gaussian => DMatrix::from_fn(n, p, |_, _| rng.sample(StandardNormal)),
        PredictorDist::Uniform => {
            let u = Uniform::new_inclusive(-2.0, 2.0).expect("valid bounds");
            DMatrix::from_fn(n, p, |_, _| u.sample(&mut rng))
        }
    };
    let index = &x * &beta;
    let mut y = DVector::zeros(n);
    for i in 0..n {
        y[i] = match spec.model {
            Model::A => {
                let e: f64 = rng.sample(StandardNormal);
                index[(i, 0)].powi(2) + index[(i, 1)] + 0.1 * e
            }
            Model::B => {
                let e1: f64 = rng.sample(StandardNormal);
                let e2: f64 = rng.sample(StandardNormal);
                let s = 2.0 * index[(i, 0)] + e1;
                let sign = if s > 0.0 {
                    1.0
                } else if s < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                sign * (2.0 * index[(i, 1)] + 4.0 + e2).abs().ln()
            }
            Model::C => {
                let e: f64 = rng.sample(StandardNormal);
                index[(i, 0)].exp() * e
            }
        };
    }

    let mut contaminated = vec![false; n];
    if spec.contaminated {
        let coin = Bernoulli::new(CONTAMINATION_RATE).expect("valid probability");
        let mut crng = seed::rng(spec.seed, Stream::Outliers, 0);
        for i in 0..n {
            if coin.sample(&mut crng) {
                contaminated[i] = true;
                let shift = CONTAMINATION_SCALE * x.row(i).sum();
                y[i] = match spec.contamination {
                    Contamination::Additive => y[i] + shift,
                    Contamination::Replace => shift,
                };
            }
        }
    }

    Ok(Generated {
        data: Dataset::new(x, y)?,
        truth: TrueSubspace { beta, rotation },
        contaminated,
    })
}

/// Largest principal angle (radians) between the column spans of `b1` and
/// `b2`, i.e. `arccos` of the smallest singular value of `Q₁ᵀQ₂`.
pub fn principal_angle(b1: &DMatrix<f64>, b2: &DMatrix<f64>) -> Result<f64> {
    if b1.nrows() != b2.nrows() {
        return Err(Error::Input(format!(
            "bases live in different spaces: {} vs {} rows",
            b1.nrows(),
            b2.nrows()
        )));
    }
    let q1 = orthonormal_basis(b1)?;
    let q2 = orthonormal_basis(b2)?;
    let cross = q1.transpose() * q2;
    let svd = thin_svd(&cross)?;
    let smin = svd.singular_values[svd.singular_values.len() - 1].clamp(0.0, 1.0);
    Ok(smin.acos())
}

/// Simulated design with AR(1) predictor correlation `0.5^{|j−k|}` and a set
/// of planted response outliers.
pub fn generate_ar1_outlier_data(
    n: usize,
    p: usize,
    n_outliers: usize,
    seed: u64,
) -> Result<(Dataset, Vec<bool>)> {
    if p < 10 {
        return Err(Error::Parameter(format!("need p >= 10, got {p}")));
    }
    if n_outliers >= n {
        return Err(Error::Parameter(format!(
            "need fewer outliers ({n_outliers}) than samples ({n})"
        )));
    }
    let sigma = DMatrix::from_fn(p, p, |j, k| 0.5f64.powi((j as i32 - k as i32).abs()));
    let chol = sigma
        .cholesky()
        .ok_or_else(|| Error::Numerical("AR(1) covariance is not positive definite".into()))?;
    let lower = chol.l();
    let mut rng = seed::rng(seed, Stream::Data, 0);
    let g = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let x = g * lower.transpose();
    let eps = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));

    let mut flags = vec![false; n];
    let mut orng = seed::rng(seed, Stream::Outliers, 0);
    for i in rand::seq::index::sample(&mut orng, n, n_outliers) {
        flags[i] = true;
    }
    let y = DVector::from_fn(n, |i, _| {
        let row = x.row(i);
        let mean = if flags[i] {
            row.columns(5, p - 5).sum()
        } else {
            row.columns(0, 5).sum()
        };
        mean + eps[i]
    });
    Ok((Dataset::new(x, y)?, flags))
}

/// One estimator configuration evaluated by [`replicate`].
#[derive(Debug, Clone)]
pub struct Method {
    pub label: String,
    pub alpha: AlphaSpec,
    pub config: FitConfig,
}

impl Method {
    pub fn rsdr(alpha: f64) -> Self {
        Self {
            label: format!("rSDR(alpha={alpha})"),
            alpha: AlphaSpec::Fixed(alpha),
            config: FitConfig::default(),
        }
    }
}

/// JSON has no NaN; it is written as `null` and read back as NaN.
fn nan_from_null<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    #[serde(deserialize_with = "nan_from_null")]
    pub mean: f64,
    #[serde(deserialize_with = "nan_from_null")]
    pub sd: f64,
}

impl MeanSd {
    pub fn unmeasured() -> Self {
        Self::of(&[])
    }

    /// Mean and `n − 1` standard deviation; sd is 0 for a single value and
    /// both are NaN for none.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                sd: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, sd }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub angle: MeanSd,
    /// Wall-clock seconds; not serialized so reports stay reproducible.
    #[serde(skip, default = "MeanSd::unmeasured")]
    pub time_s: MeanSd,
    /// Replications that produced an estimate.
    pub completed: usize,
    pub failed: usize,
    /// Angle per replication, `None` where the method failed.
    pub angles: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationReport {
    pub model: String,
    pub n: usize,
    pub p: usize,
    pub contaminated: bool,
    pub reps: usize,
    pub seed_base: u64,
    pub methods: Vec<MethodSummary>,
}

/// Runs every method on `reps` datasets generated with seeds
/// `spec_base.seed + 1 ..= spec_base.seed + reps`.
pub fn replicate(
    spec_base: &ModelSpec,
    methods: &[Method],
    reps: usize,
) -> Result<ReplicationReport> {
    if reps == 0 {
        return Err(Error::Parameter("reps must be at least 1".into()));
    }
    spec_base.validate()?;
    let d = spec_base.model.dim();
    let cells: Vec<Vec<Option<(f64, f64)>>> = (1..=reps as u64)
        .into_par_iter()
        .map(|r| {
            let spec = ModelSpec {
                seed: spec_base.seed.wrapping_add(r),
                ..spec_base.clone()
            };
            let generated = generate(&spec)?;
            Ok(methods
                .iter()
                .map(|m| {
                    let start = Instant::now();
                    let outcome = fit(&generated.data, d, &m.alpha, &m.config)
                        .and_then(|f| principal_angle(&f.beta_hat, &generated.truth.beta));
                    let secs = start.elapsed().as_secs_f64();
                    match outcome {
                        Ok(angle) => Some((angle, secs)),
                        Err(e) => {
                            log::warn!("{} on replication {r} failed: {e}", m.label);
                            None
                        }
                    }
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let summaries = methods
        .iter()
        .enumerate()
        .map(|(j, m)| {
            let column: Vec<Option<(f64, f64)>> = cells.iter().map(|row| row[j]).collect();
            let ok: Vec<(f64, f64)> = column.iter().flatten().copied().collect();
            let angles_ok: Vec<f64> = ok.iter().map(|c| c.0).collect();
            let times_ok: Vec<f64> = ok.iter().map(|c| c.1).collect();
            MethodSummary {
                method: m.label.clone(),
                angle: MeanSd::of(&angles_ok),
                time_s: MeanSd::of(&times_ok),
                completed: ok.len(),
                failed: reps - ok.len(),
                angles: column.iter().map(|c| c.map(|v| v.0)).collect(),
            }
        })
        .collect();

    Ok(ReplicationReport {
        model: spec_base.label(),
        n: spec_base.n,
        p: spec_base.p,
        contaminated: spec_base.contaminated,
        reps,
        seed_base: spec_base.seed,
        methods: summaries,
    })
}
