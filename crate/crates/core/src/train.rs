//! Training for the dispatch network and the two benchmark predictors.
//!
//! [`train_neural_rld`] minimizes the exact two-stage cost
//! `l(u, d) = alpha^T u + Q(u, d)` by projected SGD, using
//! `grad_u l = alpha + mu_bal` from the recourse duals. [`train_imitation`]
//! regresses on hindsight-optimal dispatches, and the conditional Gaussian
//! predictor feeds the predict-then-optimize baseline.

use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::datagen::Dataset;
use crate::error::{Result, RldError};
use crate::grid::NetworkCase;
use crate::neural::{forward, init_params, layer_widths, vjp, MlpParams};
use crate::recourse::{DispatchOptions, RecourseModel};

/// Scenario count used by the two-step baseline.
pub const DEFAULT_SCENARIOS: usize = 30;

/// Offset that separates the shuffling stream from the initialization stream.
const SHUFFLE_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub w_max: f64,
    /// Hidden layer widths; the output layer always has one unit per bus.
    pub hidden: Vec<usize>,
    #[serde(default = "default_true")]
    pub shuffle: bool,
    /// Cosine decay of the learning rate over epochs.
    #[serde(default)]
    pub cosine_decay: bool,
}

fn default_true() -> bool {
    true
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 64,
            epochs: 100,
            seed: 0,
            w_max: 1.0,
            hidden: vec![5, 5, 5],
            shuffle: true,
            cosine_decay: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, n_samples: usize) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(RldError::InvalidArgument(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.w_max.is_finite() && self.w_max > 0.0) {
            return Err(RldError::InvalidArgument(format!("w_max must be positive, got {}", self.w_max)));
        }
        if self.batch_size == 0 || self.batch_size > n_samples {
            return Err(RldError::InvalidArgument(format!(
                "batch size {} must be in [1, {n_samples}]",
                self.batch_size
            )));
        }
        if self.hidden.contains(&0) {
            return Err(RldError::InvalidArgument("hidden widths must be positive".into()));
        }
        Ok(())
    }

    fn rate_at(&self, epoch: usize) -> f64 {
        if self.cosine_decay && self.epochs > 0 {
            let t = epoch as f64 / self.epochs as f64;
            0.5 * self.learning_rate * (1.0 + (std::f64::consts::PI * t).cos())
        } else {
            self.learning_rate
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    /// Mean loss over the samples of each epoch, measured before each update.
    pub epoch_losses: Vec<f64>,
    pub epoch_seconds: Vec<f64>,
    pub final_max_row_norm: f64,
}

/// State after one parameter update, passed to training observers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub epoch: usize,
    pub step: usize,
    pub batch_loss: f64,
    pub max_row_norm: f64,
}

/// Loss and its gradient with respect to the network output.
type SampleLoss<'a> = dyn FnMut(usize, &[f64]) -> Result<(f64, Vec<f64>)> + 'a;

impl RecourseModel {
    /// `alpha^T u + Q(u, d)` and its gradient `alpha + mu_bal`.
    pub fn rld_loss(&self, u: &[f64], d: &[f64]) -> Result<(f64, Vec<f64>)> {
        let sol = self.solve(u, d)?;
        let alpha = &self.case.alpha;
        let loss = alpha.iter().zip(u).map(|(a, u)| a * u).sum::<f64>() + sol.q;
        let grad = alpha.iter().zip(&sol.mu_bal).map(|(a, m)| a + m).collect();
        Ok((loss, grad))
    }
}

pub fn rld_loss(case: &NetworkCase, u: &[f64], d: &[f64]) -> Result<(f64, Vec<f64>)> {
    RecourseModel::new(case).rld_loss(u, d)
}

fn check_trainset(case: &NetworkCase, trainset: &Dataset, config: &TrainConfig) -> Result<()> {
    if trainset.is_empty() {
        return Err(RldError::InvalidArgument("training set is empty".into()));
    }
    if trainset.n_bus() != case.n_bus {
        return Err(RldError::Dimension(format!(
            "dataset has {} buses, case has {}",
            trainset.n_bus(),
            case.n_bus
        )));
    }
    config.validate(trainset.len())
}

fn initial_params(case: &NetworkCase, trainset: &Dataset, config: &TrainConfig) -> Result<MlpParams> {
    let sizes = layer_widths(trainset.n_features(), &config.hidden, case.n_bus);
    init_params(&sizes, config.w_max, config.seed)
}

/// Projected minibatch SGD shared by both network trainers.
fn projected_sgd(
    mut params: MlpParams,
    features: &[Vec<f64>],
    config: &TrainConfig,
    sample_loss: &mut SampleLoss<'_>,
    observer: &mut dyn FnMut(&StepInfo),
) -> Result<(MlpParams, TrainReport)> {
    if let Some(x) = features.first() {
        if x.len() != params.input_dim() {
            return Err(RldError::Dimension(format!(
                "features have width {}, network expects {}",
                x.len(),
                params.input_dim()
            )));
        }
    }
    let m = features.len();
    let mut order: Vec<usize> = (0..m).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ SHUFFLE_STREAM);
    let mut report = TrainReport::default();
    let mut step = 0;
    for epoch in 0..config.epochs {
        let start = Instant::now();
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        let rate = config.rate_at(epoch);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut acc: Vec<DMatrix<f64>> = params
                .weights
                .iter()
                .map(|w| DMatrix::zeros(w.nrows(), w.ncols()))
                .collect();
            let mut batch_loss = 0.0;
            for &idx in batch {
                let (u, trace) = forward(&params, &features[idx])?;
                let (loss, upstream) = sample_loss(idx, &u)?;
                if !loss.is_finite() || upstream.iter().any(|g| !g.is_finite()) {
                    return Err(RldError::TrainingAborted(format!(
                        "non-finite loss {loss} at epoch {}, step {step}, sample {idx}",
                        epoch + 1
                    )));
                }
                batch_loss += loss;
                for (a, g) in acc.iter_mut().zip(vjp(&params, &trace, &upstream)?) {
                    *a += g;
                }
            }
            let scale = rate / batch.len() as f64;
            for (w, g) in params.weights.iter_mut().zip(&acc) {
                *w -= g * scale;
            }
            params.project_rows_mut();
            epoch_loss += batch_loss;
            observer(&StepInfo {
                epoch,
                step,
                batch_loss: batch_loss / batch.len() as f64,
                max_row_norm: params.max_row_norm(),
            });
            step += 1;
        }
        report.epoch_losses.push(epoch_loss / m as f64);
        report.epoch_seconds.push(start.elapsed().as_secs_f64());
    }
    report.final_max_row_norm = params.max_row_norm();
    Ok((params, report))
}

pub fn train_neural_rld(case: &NetworkCase, trainset: &Dataset, config: &TrainConfig) -> Result<(MlpParams, TrainReport)> {
    train_neural_rld_observed(case, trainset, config, &mut |_| {})
}

/// [`train_neural_rld`] with a callback after every parameter update.
pub fn train_neural_rld_observed(
    case: &NetworkCase,
    trainset: &Dataset,
    config: &TrainConfig,
    observer: &mut dyn FnMut(&StepInfo),
) -> Result<(MlpParams, TrainReport)> {
    check_trainset(case, trainset, config)?;
    let params = initial_params(case, trainset, config)?;
    let model = RecourseModel::new(case);
    let mut loss = |idx: usize, u: &[f64]| model.rld_loss(u, &trainset.demands[idx]);
    projected_sgd(params, &trainset.features, config, &mut loss, observer)
}

/// Hindsight-optimal dispatch for every sample, used as regression labels.
pub fn hindsight_labels(case: &NetworkCase, dataset: &Dataset) -> Result<Vec<Vec<f64>>> {
    let model = RecourseModel::new(case);
    dataset
        .demands
        .iter()
        .map(|d| Ok(model.hindsight(d, DispatchOptions::default())?.u_star))
        .collect()
}

/// Regression of the network output on hindsight dispatches with loss
/// `||h(x) - u*||^2 / N_B`; the report carries the MSE curve.
pub fn train_imitation(case: &NetworkCase, trainset: &Dataset, config: &TrainConfig) -> Result<(MlpParams, TrainReport)> {
    check_trainset(case, trainset, config)?;
    let labels = hindsight_labels(case, trainset)?;
    train_imitation_with_labels(case, trainset, &labels, config)
}

pub fn train_imitation_with_labels(
    case: &NetworkCase,
    trainset: &Dataset,
    labels: &[Vec<f64>],
    config: &TrainConfig,
) -> Result<(MlpParams, TrainReport)> {
    check_trainset(case, trainset, config)?;
    if labels.len() != trainset.len() {
        return Err(RldError::Dimension(format!(
            "{} labels for {} samples",
            labels.len(),
            trainset.len()
        )));
    }
    let params = initial_params(case, trainset, config)?;
    let n = case.n_bus as f64;
    let mut loss = |idx: usize, u: &[f64]| {
        let diff: Vec<f64> = u.iter().zip(&labels[idx]).map(|(a, b)| a - b).collect();
        let mse = diff.iter().map(|e| e * e).sum::<f64>() / n;
        let grad = diff.iter().map(|e| 2.0 * e / n).collect();
        Ok((mse, grad))
    };
    projected_sgd(params, &trainset.features, config, &mut loss, &mut |_| {})
}

/// Rescales a loss curve to `[0, 1]` via `(l - min) / (max - min)`.
/// A flat curve maps to zeros.
pub fn standardize(curve: &[f64]) -> Vec<f64> {
    let lo = curve.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = curve.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    curve
        .iter()
        .map(|v| if span > 0.0 { (v - lo) / span } else { 0.0 })
        .collect()
}

/// `d | x ~ N(A x + b, Sigma)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPredictor {
    /// `N_B x p` slope.
    pub slope: DMatrix<f64>,
    pub intercept: DVector<f64>,
    /// Symmetric PSD residual covariance.
    pub residual_cov: DMatrix<f64>,
    /// Square-root factor with `L L^T = residual_cov`.
    factor: DMatrix<f64>,
    /// Set when the least-squares design was rank deficient and a ridge term
    /// was added.
    pub regularized: bool,
}

impl GaussianPredictor {
    pub fn mean(&self, x: &[f64]) -> Vec<f64> {
        let m = &self.slope * DVector::from_column_slice(x) + &self.intercept;
        m.as_slice().to_vec()
    }

    /// `n` draws from the conditional distribution at `x`.
    pub fn sample(&self, x: &[f64], n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mean = DVector::from_vec(self.mean(x));
        let dim = mean.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let z = DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
                (&mean + &self.factor * z).as_slice().to_vec()
            })
            .collect()
    }

    pub fn from_parts(slope: DMatrix<f64>, intercept: DVector<f64>, residual_cov: DMatrix<f64>) -> Result<Self> {
        let n = intercept.len();
        if slope.nrows() != n || residual_cov.shape() != (n, n) {
            return Err(RldError::Dimension("predictor blocks do not agree".into()));
        }
        let (residual_cov, factor) = psd_clip(residual_cov);
        Ok(GaussianPredictor {
            slope,
            intercept,
            residual_cov,
            factor,
            regularized: false,
        })
    }
}

/// Eigenvalues above this (relative to the largest) count as nonnegative.
const PSD_TOL: f64 = 1e-10;

/// Returns a symmetric PSD covariance and a square-root factor for it. A
/// matrix that is already symmetric with eigenvalues above `-PSD_TOL` is
/// kept as is, so clipping a clipped matrix changes nothing; otherwise
/// negative eigenvalues are set to zero.
fn psd_clip(cov: DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let symmetric = cov == cov.transpose();
    let sym = if symmetric { cov.clone() } else { (&cov + cov.transpose()) * 0.5 };
    let eig = SymmetricEigen::new(sym);
    let scale = eig.eigenvalues.amax().max(1.0);
    let vals = eig.eigenvalues.map(|v| v.max(0.0));
    let v = &eig.eigenvectors;
    let factor = v * DMatrix::from_diagonal(&vals.map(f64::sqrt));
    if symmetric && eig.eigenvalues.iter().all(|l| *l >= -PSD_TOL * scale) {
        return (cov, factor);
    }
    let clipped = v * DMatrix::from_diagonal(&vals) * v.transpose();
    let clipped = (&clipped + clipped.transpose()) * 0.5;
    (clipped, factor)
}

/// Least-squares affine fit of demand on features, with the residual
/// covariance (divided by `M`) as the conditional spread.
pub fn fit_conditional_gaussian(trainset: &Dataset) -> Result<GaussianPredictor> {
    let m = trainset.len();
    let p = trainset.n_features();
    let n = trainset.n_bus();
    if m < p + 1 {
        return Err(RldError::InvalidArgument(format!(
            "affine fit needs at least {} samples, got {m}",
            p + 1
        )));
    }
    let design = DMatrix::from_fn(m, p + 1, |r, c| if c < p { trainset.features[r][c] } else { 1.0 });
    let target = DMatrix::from_fn(m, n, |r, c| trainset.demands[r][c]);
    let gram = design.transpose() * &design;
    let rhs = design.transpose() * &target;

    // Relative pivot threshold below which the design is treated as singular.
    let scale = gram.diagonal().max().max(1.0);
    let mut regularized = false;
    let coef = match gram.clone().cholesky() {
        Some(ch) if ch.l().diagonal().iter().all(|v| v * v > 1e-12 * scale) => ch.solve(&rhs),
        _ => {
            regularized = true;
            let ridge = &gram + DMatrix::identity(p + 1, p + 1) * (1e-8 * scale);
            ridge
                .cholesky()
                .ok_or_else(|| RldError::NumericalBreakdown("ridge-regularized normal equations".into()))?
                .solve(&rhs)
        }
    };
    let residual = &target - &design * &coef;
    let cov = residual.transpose() * &residual / m as f64;
    let slope = coef.rows(0, p).transpose();
    let intercept = coef.row(p).transpose();
    let mut g = GaussianPredictor::from_parts(slope, intercept, psd_clip(cov).0)?;
    g.regularized = regularized;
    Ok(g)
}

#[derive(Serialize, Deserialize)]
struct PredictorFile {
    format: String,
    version: u32,
    n_bus: usize,
    n_features: usize,
    /// Row-major `n_bus x n_features`.
    slope: Vec<f64>,
    intercept: Vec<f64>,
    /// Row-major `n_bus x n_bus`.
    residual_cov: Vec<f64>,
    regularized: bool,
}

const PREDICTOR_FORMAT: &str = "nrld-gaussian";

pub fn save_predictor(predictor: &GaussianPredictor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (n, p) = predictor.slope.shape();
    let file = PredictorFile {
        format: PREDICTOR_FORMAT.into(),
        version: 1,
        n_bus: n,
        n_features: p,
        slope: predictor.slope.transpose().as_slice().to_vec(),
        intercept: predictor.intercept.as_slice().to_vec(),
        residual_cov: predictor.residual_cov.transpose().as_slice().to_vec(),
        regularized: predictor.regularized,
    };
    let text = serde_json::to_string_pretty(&file).expect("predictor serialization cannot fail");
    std::fs::write(path, text).map_err(|e| RldError::io(path, e))
}

pub fn load_predictor(path: impl AsRef<Path>) -> Result<GaussianPredictor> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| RldError::io(path, e))?;
    let f: PredictorFile =
        serde_json::from_str(&text).map_err(|e| RldError::Parse(format!("{}: {e}", path.display())))?;
    if f.format != PREDICTOR_FORMAT || f.version != 1 {
        return Err(RldError::Version(format!("unsupported predictor file {} v{}", f.format, f.version)));
    }
    let (n, p) = (f.n_bus, f.n_features);
    if f.slope.len() != n * p || f.intercept.len() != n || f.residual_cov.len() != n * n {
        return Err(RldError::Version(format!(
            "predictor arrays do not match the declared {n}x{p} shape"
        )));
    }
    let mut g = GaussianPredictor::from_parts(
        DMatrix::from_row_slice(n, p, &f.slope),
        DVector::from_vec(f.intercept),
        DMatrix::from_row_slice(n, n, &f.residual_cov),
    )?;
    g.regularized = f.regularized;
    Ok(g)
}

/// Predict-then-optimize: sample scenarios at `x` and solve the SAA dispatch.
pub fn two_step_decide(
    model: &RecourseModel,
    predictor: &GaussianPredictor,
    x: &[f64],
    n_scenarios: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if n_scenarios == 0 {
        return Err(RldError::InvalidArgument("at least one scenario is required".into()));
    }
    let scenarios = predictor.sample(x, n_scenarios, seed);
    model.saa(&scenarios, DispatchOptions::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Line;

    fn one_bus() -> NetworkCase {
        NetworkCase {
            name: "one".into(),
            base_mva: 1.0,
            n_bus: 1,
            reference_bus: 0,
            lines: vec![],
            alpha: vec![1.0],
            beta: vec![10.0],
            allow_cost_violation: false,
        }
    }

    fn two_bus() -> NetworkCase {
        NetworkCase {
            name: "two".into(),
            base_mva: 1.0,
            n_bus: 2,
            reference_bus: 0,
            lines: vec![Line {
                from: 0,
                to: 1,
                susceptance: 1.0,
                capacity_mw: 0.5,
            }],
            alpha: vec![1.0, 2.0],
            beta: vec![10.0, 10.0],
            allow_cost_violation: false,
        }
    }

    #[test]
    fn loss_regimes() {
        let c = one_bus();
        assert_eq!(rld_loss(&c, &[2.0], &[1.0]).unwrap(), (2.0, vec![1.0]));
        let (l, g) = rld_loss(&c, &[0.0], &[1.0]).unwrap();
        assert!((l - 10.0).abs() < 1e-9 && (g[0] + 9.0).abs() < 1e-9);
        let (l, g) = rld_loss(&two_bus(), &[0.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((l - 7.0).abs() < 1e-9);
        assert!((g[0] + 9.0).abs() < 1e-9 && (g[1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn standardize_range() {
        assert_eq!(standardize(&[3.0, 1.0, 2.0]), vec![1.0, 0.0, 0.5]);
        assert_eq!(standardize(&[2.0, 2.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn psd_clip_removes_negative_eigenvalues() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let (c, f) = psd_clip(m.clone());
        let eig = SymmetricEigen::new(c.clone()).eigenvalues;
        assert!(eig.iter().all(|v| *v > -1e-12));
        assert!((&f * f.transpose() - c).norm() < 1e-12);
    }

    #[test]
    fn cosine_schedule_ends_near_zero() {
        let cfg = TrainConfig {
            cosine_decay: true,
            epochs: 10,
            ..Default::default()
        };
        assert_eq!(cfg.rate_at(0), cfg.learning_rate);
        assert!(cfg.rate_at(9) < 0.05 * cfg.learning_rate);
    }
}
