//! Gaussian-process regression from descriptor vectors to log solubility.
//!
//! Isotropic RBF kernel with a noise term on z-scored features and centered
//! targets. Hyperparameters maximize the log marginal likelihood through a
//! multi-start Nelder–Mead search over log-parameters; everything is
//! deterministic given the seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SurrogateError {
    #[error("non-finite value in training input")]
    NonFiniteInput,
    #[error("kernel matrix factorization failed even with jitter up to 1e-4")]
    FactorizationFailure,
    #[error("need at least 2 training points, got {0}")]
    TooFewPoints(usize),
    #[error("feature dimension mismatch: model expects {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("model file error: {0}")]
    Format(#[from] serde_json::Error),
    #[error("unsupported model file version {0}")]
    UnsupportedVersion(u32),
}

/// Per-feature z-scoring parameters fitted on the training set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// Features with zero variance keep std = 1 and are flagged here.
    pub constant: Vec<bool>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Standardizer {
        let dim = rows.first().map_or(0, Vec::len);
        let n = rows.len() as f64;
        let mut means = vec![0.0; dim];
        for row in rows {
            for (m, v) in means.iter_mut().zip(row) {
                *m += v / n;
            }
        }
        let mut vars = vec![0.0; dim];
        for row in rows {
            for ((var, v), m) in vars.iter_mut().zip(row).zip(&means) {
                *var += (v - m) * (v - m) / n;
            }
        }
        let mut stds = Vec::with_capacity(dim);
        let mut constant = Vec::with_capacity(dim);
        for var in vars {
            let std = var.sqrt();
            if std > 0.0 {
                stds.push(std);
                constant.push(false);
            } else {
                stds.push(1.0);
                constant.push(true);
            }
        }
        Standardizer {
            means,
            stds,
            constant,
        }
    }

    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.means)
            .zip(&self.stds)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

/// Kernel hyperparameters, stored as natural logs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub log_signal_variance: f64,
    pub log_lengthscale: f64,
    pub log_noise_variance: f64,
}

impl Hyperparameters {
    pub fn signal_variance(&self) -> f64 {
        self.log_signal_variance.exp()
    }
    pub fn lengthscale(&self) -> f64 {
        self.log_lengthscale.exp()
    }
    pub fn noise_variance(&self) -> f64 {
        self.log_noise_variance.exp()
    }
}

/// Log-space search bounds: lengthscale in [1e-2, 1e3], signal variance in
/// [1e-4, 1e3], noise variance in [1e-8, 1e1].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Bounds {
    pub lengthscale: (f64, f64),
    pub signal_variance: (f64, f64),
    pub noise_variance: (f64, f64),
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            lengthscale: (1e-2, 1e3),
            signal_variance: (1e-4, 1e3),
            noise_variance: (1e-8, 1e1),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainOptions {
    pub restarts: usize,
    pub seed: u64,
    pub bounds: Bounds,
    /// Pin the noise variance instead of optimizing it.
    pub fixed_noise_variance: Option<f64>,
    pub max_iterations: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            restarts: 8,
            seed: 0,
            bounds: Bounds::default(),
            fixed_noise_variance: None,
            max_iterations: 300,
        }
    }
}

/// Where a prediction came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionSource {
    Gp,
    Llm,
    LlmRefined,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Prediction {
    pub mean: f64,
    pub std: f64,
    pub source: PredictionSource,
}

/// A trained GP: factorization and weights ready for prediction.
#[derive(Debug, Clone)]
pub struct GpModel {
    hyper: Hyperparameters,
    x_train: Vec<Vec<f64>>, // standardized
    y_centered: Vec<f64>,
    target_mean: f64,
    standardizer: Standardizer,
    chol: Lower,
    alpha: Vec<f64>,
}

/// One optimizer restart: the starting point's LML and the optimum found.
#[derive(Debug, Clone, Serialize)]
pub struct RestartReport {
    pub initial_lml: f64,
    pub optimized_lml: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: GpModel,
    pub final_lml: f64,
    pub restarts: Vec<RestartReport>,
}

// ---------------------------------------------------------------------------
// Dense lower-triangular Cholesky with jitter escalation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct Lower {
    n: usize,
    data: Vec<f64>, // row-major lower triangle, full n*n storage
}

impl Lower {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    fn log_det_sqrt(&self) -> f64 {
        (0..self.n).map(|i| self.at(i, i).ln()).sum()
    }

    /// Solve L x = b.
    fn solve_forward(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        for i in 0..self.n {
            let mut sum = x[i];
            for j in 0..i {
                sum -= self.at(i, j) * x[j];
            }
            x[i] = sum / self.at(i, i);
        }
        x
    }

    /// Solve Lᵀ x = b.
    fn solve_backward(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        for i in (0..self.n).rev() {
            let mut sum = x[i];
            for j in (i + 1)..self.n {
                sum -= self.at(j, i) * x[j];
            }
            x[i] = sum / self.at(i, i);
        }
        x
    }
}

/// Factor a symmetric matrix, escalating diagonal jitter from 1e-10 to
/// 1e-4 when the plain factorization is not positive definite.
fn cholesky_with_jitter(matrix: &[f64], n: usize) -> Result<Lower, SurrogateError> {
    let jitters = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4];
    for &jitter in &jitters {
        if let Some(l) = try_cholesky(matrix, n, jitter) {
            return Ok(l);
        }
    }
    Err(SurrogateError::FactorizationFailure)
}

fn try_cholesky(matrix: &[f64], n: usize, jitter: f64) -> Option<Lower> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = matrix[i * n + j];
            if i == j {
                sum += jitter;
            }
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Some(Lower { n, data: l })
}

// ---------------------------------------------------------------------------
// Kernel and marginal likelihood
// ---------------------------------------------------------------------------

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn rbf(hyper: &Hyperparameters, a: &[f64], b: &[f64]) -> f64 {
    let ell2 = hyper.lengthscale() * hyper.lengthscale();
    hyper.signal_variance() * (-squared_distance(a, b) / (2.0 * ell2)).exp()
}

fn kernel_matrix(hyper: &Hyperparameters, x: &[Vec<f64>]) -> Vec<f64> {
    let n = x.len();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let v = rbf(hyper, &x[i], &x[j]);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
        k[i * n + i] += hyper.noise_variance();
    }
    k
}

/// Log marginal likelihood of centered targets under the kernel:
/// −½ yᵀα − Σ log Lᵢᵢ − (n/2) log 2π.
pub fn log_marginal_likelihood(
    hyper: &Hyperparameters,
    x_standardized: &[Vec<f64>],
    y_centered: &[f64],
) -> Result<f64, SurrogateError> {
    if x_standardized
        .iter()
        .flatten()
        .chain(y_centered.iter())
        .any(|v| !v.is_finite())
    {
        return Err(SurrogateError::NonFiniteInput);
    }
    let n = x_standardized.len();
    let k = kernel_matrix(hyper, x_standardized);
    let chol = cholesky_with_jitter(&k, n)?;
    let alpha = chol.solve_backward(&chol.solve_forward(y_centered));
    let fit: f64 = y_centered.iter().zip(&alpha).map(|(y, a)| y * a).sum();
    Ok(-0.5 * fit - chol.log_det_sqrt() - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln())
}

// ---------------------------------------------------------------------------
// Nelder–Mead over log-parameters
// ---------------------------------------------------------------------------

/// Minimize `f` starting at `start`, clamping every evaluation into
/// `[lo, hi]` per coordinate. Deterministic; returns the best point seen.
fn nelder_mead<F>(
    start: &[f64],
    lo: &[f64],
    hi: &[f64],
    max_iterations: usize,
    mut f: F,
) -> (Vec<f64>, f64)
where
    F: FnMut(&[f64]) -> f64,
{
    let dim = start.len();
    let clamp = |p: &[f64]| -> Vec<f64> {
        p.iter()
            .zip(lo)
            .zip(hi)
            .map(|((v, l), h)| v.clamp(*l, *h))
            .collect()
    };

    let mut simplex: Vec<Vec<f64>> = vec![clamp(start)];
    for i in 0..dim {
        let mut p = start.to_vec();
        p[i] += 0.5;
        simplex.push(clamp(&p));
    }
    let mut scores: Vec<f64> = simplex.iter().map(|p| f(p)).collect();

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    for _ in 0..max_iterations {
        let mut order: Vec<usize> = (0..simplex.len()).collect();
        order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
        let best = order[0];
        let worst = order[dim];
        let second_worst = order[dim - 1];

        if (scores[worst] - scores[best]).abs() < 1e-12 {
            break;
        }

        let mut centroid = vec![0.0; dim];
        for &i in order.iter().take(dim) {
            for d in 0..dim {
                centroid[d] += simplex[i][d] / dim as f64;
            }
        }

        let reflect: Vec<f64> = clamp(
            &centroid
                .iter()
                .zip(&simplex[worst])
                .map(|(c, w)| c + alpha * (c - w))
                .collect::<Vec<_>>(),
        );
        let reflect_score = f(&reflect);

        if reflect_score < scores[best] {
            let expand: Vec<f64> = clamp(
                &centroid
                    .iter()
                    .zip(&reflect)
                    .map(|(c, r)| c + gamma * (r - c))
                    .collect::<Vec<_>>(),
            );
            let expand_score = f(&expand);
            if expand_score < reflect_score {
                simplex[worst] = expand;
                scores[worst] = expand_score;
            } else {
                simplex[worst] = reflect;
                scores[worst] = reflect_score;
            }
        } else if reflect_score < scores[second_worst] {
            simplex[worst] = reflect;
            scores[worst] = reflect_score;
        } else {
            let contract: Vec<f64> = clamp(
                &centroid
                    .iter()
                    .zip(&simplex[worst])
                    .map(|(c, w)| c + rho * (w - c))
                    .collect::<Vec<_>>(),
            );
            let contract_score = f(&contract);
            if contract_score < scores[worst] {
                simplex[worst] = contract;
                scores[worst] = contract_score;
            } else {
                let best_point = simplex[best].clone();
                for i in 0..simplex.len() {
                    if i == best {
                        continue;
                    }
                    let shrunk: Vec<f64> = best_point
                        .iter()
                        .zip(&simplex[i])
                        .map(|(b, p)| b + sigma * (p - b))
                        .collect();
                    simplex[i] = clamp(&shrunk);
                    scores[i] = f(&simplex[i]);
                }
            }
        }
    }

    let mut best = 0;
    for i in 1..simplex.len() {
        if scores[i] < scores[best] {
            best = i;
        }
    }
    (simplex[best].clone(), scores[best])
}

// ---------------------------------------------------------------------------
// Training and prediction
// ---------------------------------------------------------------------------

/// Train the GP: z-score features, center targets, and maximize the LML
/// with a multi-start Nelder–Mead over log-hyperparameters.
pub fn train_gp(
    x: &[Vec<f64>],
    y: &[f64],
    options: &TrainOptions,
) -> Result<TrainOutcome, SurrogateError> {
    if x.len() < 2 {
        return Err(SurrogateError::TooFewPoints(x.len()));
    }
    if x.iter().flatten().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(SurrogateError::NonFiniteInput);
    }

    let standardizer = Standardizer::fit(x);
    let x_std: Vec<Vec<f64>> = x.iter().map(|row| standardizer.transform(row)).collect();
    let target_mean = y.iter().sum::<f64>() / y.len() as f64;
    let y_centered: Vec<f64> = y.iter().map(|v| v - target_mean).collect();
    let y_var = y_centered.iter().map(|v| v * v).sum::<f64>() / y.len() as f64;

    let bounds = options.bounds;
    let fixed_log_noise = options.fixed_noise_variance.map(f64::ln);

    // Search space: [log σf², log ℓ] plus log σn² when the noise is free.
    let dim = if fixed_log_noise.is_some() { 2 } else { 3 };
    let lo: Vec<f64> = {
        let mut v = vec![bounds.signal_variance.0.ln(), bounds.lengthscale.0.ln()];
        if fixed_log_noise.is_none() {
            v.push(bounds.noise_variance.0.ln());
        }
        v
    };
    let hi: Vec<f64> = {
        let mut v = vec![bounds.signal_variance.1.ln(), bounds.lengthscale.1.ln()];
        if fixed_log_noise.is_none() {
            v.push(bounds.noise_variance.1.ln());
        }
        v
    };

    let to_hyper = |p: &[f64]| Hyperparameters {
        log_signal_variance: p[0],
        log_lengthscale: p[1],
        log_noise_variance: fixed_log_noise.unwrap_or_else(|| p[2]),
    };

    let objective = |p: &[f64]| -> f64 {
        match log_marginal_likelihood(&to_hyper(p), &x_std, &y_centered) {
            Ok(lml) if lml.is_finite() => -lml,
            _ => f64::INFINITY,
        }
    };

    // First start: variance-scaled defaults; the rest sampled in-bounds.
    let mut starts: Vec<Vec<f64>> = Vec::with_capacity(options.restarts.max(1));
    let default_start = {
        let mut s = vec![y_var.max(1e-3).ln(), (3.0f64).ln()];
        if fixed_log_noise.is_none() {
            s.push((y_var.max(1e-3) * 0.05).max(1e-6).ln());
        }
        s
    };
    starts.push(
        default_start
            .iter()
            .zip(&lo)
            .zip(&hi)
            .map(|((v, l), h)| v.clamp(*l, *h))
            .collect(),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    while starts.len() < options.restarts.max(1) {
        let p: Vec<f64> = (0..dim).map(|d| rng.gen_range(lo[d]..=hi[d])).collect();
        starts.push(p);
    }

    let mut restarts = Vec::with_capacity(starts.len());
    let mut best: Option<(Vec<f64>, f64)> = None;
    for start in &starts {
        let initial_lml = -objective(start);
        let (point, score) = nelder_mead(start, &lo, &hi, options.max_iterations, objective);
        let optimized_lml = -score;
        restarts.push(RestartReport {
            initial_lml,
            optimized_lml,
        });
        let better = match &best {
            Some((_, s)) => score < *s,
            None => true,
        };
        if better {
            best = Some((point, score));
        }
    }
    let (best_point, best_score) = best.expect("at least one restart");
    if !best_score.is_finite() {
        return Err(SurrogateError::FactorizationFailure);
    }
    let hyper = to_hyper(&best_point);

    let n = x_std.len();
    let k = kernel_matrix(&hyper, &x_std);
    let chol = cholesky_with_jitter(&k, n)?;
    let alpha = chol.solve_backward(&chol.solve_forward(&y_centered));

    Ok(TrainOutcome {
        model: GpModel {
            hyper,
            x_train: x_std,
            y_centered,
            target_mean,
            standardizer,
            chol,
            alpha,
        },
        final_lml: -best_score,
        restarts,
    })
}

impl GpModel {
    pub fn hyperparameters(&self) -> &Hyperparameters {
        &self.hyper
    }

    pub fn target_mean(&self) -> f64 {
        self.target_mean
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    pub fn training_size(&self) -> usize {
        self.x_train.len()
    }

    /// Max relative residual of (K+σn²I)α − y over training targets.
    pub fn training_residual(&self) -> f64 {
        let n = self.x_train.len();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let mut reproduced = self.hyper.noise_variance() * self.alpha[i];
            for j in 0..n {
                reproduced += rbf(&self.hyper, &self.x_train[i], &self.x_train[j]) * self.alpha[j];
            }
            let scale = self.y_centered[i].abs().max(1.0);
            worst = worst.max((reproduced - self.y_centered[i]).abs() / scale);
        }
        worst
    }

    /// Posterior mean and standard deviation at a raw descriptor vector.
    pub fn predict(&self, features: &[f64]) -> Result<Prediction, SurrogateError> {
        if features.len() != self.standardizer.means.len() {
            return Err(SurrogateError::DimensionMismatch {
                expected: self.standardizer.means.len(),
                got: features.len(),
            });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(SurrogateError::NonFiniteInput);
        }
        let x = self.standardizer.transform(features);
        let k_star: Vec<f64> = self
            .x_train
            .iter()
            .map(|t| rbf(&self.hyper, &x, t))
            .collect();
        let mean: f64 = k_star
            .iter()
            .zip(&self.alpha)
            .map(|(k, a)| k * a)
            .sum::<f64>()
            + self.target_mean;
        let v = self.chol.solve_forward(&k_star);
        let variance =
            (self.hyper.signal_variance() - v.iter().map(|x| x * x).sum::<f64>()).max(0.0);
        Ok(Prediction {
            mean,
            std: variance.sqrt(),
            source: PredictionSource::Gp,
        })
    }

    pub fn lml(&self) -> Result<f64, SurrogateError> {
        log_marginal_likelihood(&self.hyper, &self.x_train, &self.y_centered)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), SurrogateError> {
        let file = GpModelFile {
            version: GP_MODEL_VERSION,
            hyperparameters: self.hyper,
            standardizer: self.standardizer.clone(),
            x_train_standardized: self.x_train.clone(),
            y_centered: self.y_centered.clone(),
            target_mean: self.target_mean,
        };
        let json = serde_json::to_string_pretty(&file)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    /// Load a serialized model; the factorization is recomputed.
    pub fn load(path: &std::path::Path) -> Result<GpModel, SurrogateError> {
        let text = std::fs::read_to_string(path)?;
        let file: GpModelFile = serde_json::from_str(&text)?;
        if file.version != GP_MODEL_VERSION {
            return Err(SurrogateError::UnsupportedVersion(file.version));
        }
        let n = file.x_train_standardized.len();
        let k = kernel_matrix(&file.hyperparameters, &file.x_train_standardized);
        let chol = cholesky_with_jitter(&k, n)?;
        let alpha = chol.solve_backward(&chol.solve_forward(&file.y_centered));
        Ok(GpModel {
            hyper: file.hyperparameters,
            x_train: file.x_train_standardized,
            y_centered: file.y_centered,
            target_mean: file.target_mean,
            standardizer: file.standardizer,
            chol,
            alpha,
        })
    }
}

const GP_MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct GpModelFile {
    version: u32,
    hyperparameters: Hyperparameters,
    standardizer: Standardizer,
    x_train_standardized: Vec<Vec<f64>>,
    y_centered: Vec<f64>,
    target_mean: f64,
}
