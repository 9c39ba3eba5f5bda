//! Normalized suboptimality, the PAC excess-cost bound, and an empirical
//! Lipschitz estimate for the recourse solution map.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::datagen::{gen_dataset, split, Dataset};
use crate::error::{Result, RldError};
use crate::grid::NetworkCase;
use crate::recourse::{DispatchOptions, RecourseModel};
use crate::train::{train_neural_rld, TrainConfig};

/// Hindsight objectives at or below this are treated as zero denominators.
const MIN_DENOMINATOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    /// Test-set index of each evaluated sample.
    pub index: Vec<usize>,
    pub suboptimality: Vec<f64>,
    pub decision_cost: Vec<f64>,
    pub hindsight_cost: Vec<f64>,
    /// Samples skipped because their hindsight objective was not positive.
    pub excluded: usize,
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
}

impl EvalReport {
    pub fn len(&self) -> usize {
        self.suboptimality.len()
    }

    pub fn is_empty(&self) -> bool {
        self.suboptimality.is_empty()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| RldError::Parse(e.to_string()))?;
        let err = |e: csv::Error| RldError::Parse(format!("writing {}: {e}", path.display()));
        w.write_record(["sample", "decision_cost", "hindsight_cost", "suboptimality"])
            .map_err(err)?;
        for k in 0..self.len() {
            w.write_record([
                self.index[k].to_string(),
                self.decision_cost[k].to_string(),
                self.hindsight_cost[k].to_string(),
                self.suboptimality[k].to_string(),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| RldError::io(path, e))
    }

    pub fn summary(&self) -> String {
        format!(
            "samples {}  excluded {}  mean {:.6}  median {:.6}  p95 {:.6}",
            self.len(),
            self.excluded,
            self.mean,
            self.median,
            self.p95
        )
    }
}

/// Linear-interpolation quantile of unsorted data; NaN when empty.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

fn decision_cost(model: &RecourseModel, u: &[f64], d: &[f64]) -> Result<f64> {
    Ok(model.rld_loss(u, d)?.0)
}

/// `(l(u_hat, d) - l*) / l*` with `l*` the hindsight optimum.
pub fn suboptimality(case: &NetworkCase, u_hat: &[f64], d: &[f64]) -> Result<f64> {
    suboptimality_with(&RecourseModel::new(case), u_hat, d)
}

pub fn suboptimality_with(model: &RecourseModel, u_hat: &[f64], d: &[f64]) -> Result<f64> {
    let best = model.hindsight(d, DispatchOptions::default())?.objective;
    if best <= MIN_DENOMINATOR {
        return Err(RldError::Domain(format!(
            "hindsight objective {best} is not positive; suboptimality undefined"
        )));
    }
    Ok((decision_cost(model, u_hat, d)? - best) / best)
}

/// Applies `decide` to every test feature vector and scores the decisions.
pub fn evaluate_policy(
    case: &NetworkCase,
    decide: &mut dyn FnMut(&[f64]) -> Result<Vec<f64>>,
    testset: &Dataset,
) -> Result<EvalReport> {
    let decisions = testset
        .features
        .iter()
        .map(|x| decide(x))
        .collect::<Result<Vec<_>>>()?;
    evaluate_decisions(case, &decisions, testset)
}

/// Scores precomputed decisions, one per test sample.
pub fn evaluate_decisions(case: &NetworkCase, decisions: &[Vec<f64>], testset: &Dataset) -> Result<EvalReport> {
    let hindsight = hindsight_objectives(case, testset)?;
    evaluate_against(case, decisions, testset, &hindsight)
}

pub fn hindsight_objectives(case: &NetworkCase, testset: &Dataset) -> Result<Vec<f64>> {
    let model = RecourseModel::new(case);
    testset
        .demands
        .iter()
        .map(|d| Ok(model.hindsight(d, DispatchOptions::default())?.objective))
        .collect()
}

/// Scores decisions against cached hindsight objectives, so several
/// policies can share one set of hindsight solves.
pub fn evaluate_against(
    case: &NetworkCase,
    decisions: &[Vec<f64>],
    testset: &Dataset,
    hindsight: &[f64],
) -> Result<EvalReport> {
    if testset.is_empty() {
        return Err(RldError::InvalidArgument("test set is empty".into()));
    }
    if decisions.len() != testset.len() || hindsight.len() != testset.len() {
        return Err(RldError::Dimension(format!(
            "{} decisions and {} hindsight values for {} samples",
            decisions.len(),
            hindsight.len(),
            testset.len()
        )));
    }
    let model = RecourseModel::new(case);
    let mut rep = EvalReport::default();
    for (k, (u, d)) in decisions.iter().zip(&testset.demands).enumerate() {
        let best = hindsight[k];
        if best <= MIN_DENOMINATOR {
            rep.excluded += 1;
            continue;
        }
        let cost = decision_cost(&model, u, d)?;
        rep.index.push(k);
        rep.decision_cost.push(cost);
        rep.hindsight_cost.push(best);
        rep.suboptimality.push((cost - best) / best);
    }
    if !rep.is_empty() {
        rep.mean = rep.suboptimality.iter().sum::<f64>() / rep.len() as f64;
        rep.median = median(&rep.suboptimality);
        rep.p95 = quantile(&rep.suboptimality, 0.95);
    }
    Ok(rep)
}

/// Lipschitz constant of the loss: `||alpha||_2 + sqrt(N_B) C_g ||beta||_2`.
pub fn c_ell(case: &NetworkCase, c_g: f64) -> Result<f64> {
    if !(c_g.is_finite() && c_g > 0.0) {
        return Err(RldError::Domain(format!("C_g must be positive, got {c_g}")));
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(norm(&case.alpha) + (case.n_bus as f64).sqrt() * c_g * norm(&case.beta))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    pub w_max: f64,
    /// Number of weight matrices.
    pub k_layers: usize,
    pub c_ell: f64,
    pub x_max: f64,
    /// Training sample count.
    pub m: usize,
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundResult {
    pub bound: f64,
    /// `4 (2 W)^(K - 1/2) C_l X / sqrt(M)`.
    pub complexity_term: f64,
    /// `sqrt(2 ln(2 / delta)) / sqrt(M)`.
    pub confidence_term: f64,
    pub inputs: BoundInputs,
}

/// Excess-cost bound holding with probability `1 - delta`:
/// `(4 (2 W)^(K - 1/2) C_l X + sqrt(2 ln(2 / delta))) / sqrt(M)`.
pub fn pac_bound(inputs: BoundInputs) -> Result<BoundResult> {
    let BoundInputs {
        w_max,
        k_layers,
        c_ell,
        x_max,
        m,
        delta,
    } = inputs;
    for (name, v) in [("w_max", w_max), ("c_ell", c_ell), ("x_max", x_max)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(RldError::Domain(format!("{name} must be positive, got {v}")));
        }
    }
    if k_layers == 0 || m == 0 {
        return Err(RldError::Domain(format!(
            "layer count and sample count must be positive (K = {k_layers}, M = {m})"
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(RldError::Domain(format!("delta must lie in (0, 1), got {delta}")));
    }
    let sqrt_m = (m as f64).sqrt();
    let complexity_term = 4.0 * (2.0 * w_max).powf(k_layers as f64 - 0.5) * c_ell * x_max / sqrt_m;
    let confidence_term = (2.0 * (2.0 / delta).ln()).sqrt() / sqrt_m;
    Ok(BoundResult {
        bound: complexity_term + confidence_term,
        complexity_term,
        confidence_term,
        inputs,
    })
}

/// Which feature-norm bound to plug into the PAC bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeatureNorm {
    /// Largest sample norm `max_m ||x_m||_2`.
    #[default]
    Max,
    /// Root mean square norm `sqrt(mean ||x_m||^2)`.
    Rms,
}

pub fn feature_norm_bound(dataset: &Dataset, kind: FeatureNorm) -> f64 {
    match kind {
        FeatureNorm::Max => dataset.max_feature_norm(),
        FeatureNorm::Rms => dataset.rms_feature_norm(),
    }
}

/// Empirical lower bound on the Lipschitz constant of `u -> g*(u, d)`:
/// the largest observed `||g1 - g2||_inf / ||u1 - u2||_2` over random
/// triples. Draws are sequential, so a longer run extends a shorter one
/// with the same seed and the estimate never decreases with `n_pairs`.
pub fn estimate_lipschitz(case: &NetworkCase, n_pairs: usize, radius: f64, seed: u64) -> Result<f64> {
    if n_pairs == 0 {
        return Err(RldError::InvalidArgument("n_pairs must be at least 1".into()));
    }
    if !(radius.is_finite() && radius > 0.0) {
        return Err(RldError::InvalidArgument(format!("radius must be positive, got {radius}")));
    }
    let model = RecourseModel::new(case);
    let n = case.n_bus;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: f64 = 0.0;
    for _ in 0..n_pairs {
        let d: Vec<f64> = (0..n).map(|_| radius * rng.random::<f64>()).collect();
        let u1: Vec<f64> = d.iter().map(|di| di + radius * (2.0 * rng.random::<f64>() - 1.0)).collect();
        let u2: Vec<f64> = u1
            .iter()
            .map(|ui| ui + 0.1 * radius * (2.0 * rng.random::<f64>() - 1.0))
            .collect();
        let du = u1.iter().zip(&u2).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        if du == 0.0 {
            continue;
        }
        let g1 = model.solve(&u1, &d)?.g;
        let g2 = model.solve(&u2, &d)?.g;
        let dg = g1.iter().zip(&g2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        best = best.max(dg / du);
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub m: usize,
    pub seed: u64,
    pub mean_suboptimality: f64,
    pub median_suboptimality: f64,
}

/// Settings for [`excess_cost_curve`] beyond the training configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSettings {
    pub n_seeds: usize,
    pub n_test: usize,
    pub noise_scale: f64,
}

/// Trains on growing sample sizes and records test suboptimality.
///
/// For seed index `k` the run seed is `config.seed + k`; one dataset of
/// `max(sizes) + n_test` rows is drawn per seed, the test rows are the tail,
/// and each size trains on a prefix of the training rows.
pub fn excess_cost_curve(
    case: &NetworkCase,
    omega: &DMatrix<f64>,
    sizes: &[usize],
    config: &TrainConfig,
    settings: &CurveSettings,
) -> Result<Vec<CurveRow>> {
    if sizes.is_empty() || sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(RldError::InvalidArgument(format!("sizes must be strictly ascending: {sizes:?}")));
    }
    if settings.n_seeds == 0 || settings.n_test == 0 {
        return Err(RldError::InvalidArgument("n_seeds and n_test must be positive".into()));
    }
    let largest = *sizes.last().unwrap();
    let mut rows = Vec::new();
    for k in 0..settings.n_seeds {
        let seed = config.seed + k as u64;
        let full = gen_dataset(case, omega, largest + settings.n_test, settings.noise_scale, seed)?;
        let (train_all, test) = split(&full, largest)?;
        let hindsight = hindsight_objectives(case, &test)?;
        for &m in sizes {
            let train = if m < largest { split(&train_all, m)?.0 } else { train_all.clone() };
            let cfg = TrainConfig {
                seed,
                batch_size: config.batch_size.min(m),
                ..config.clone()
            };
            let (params, _) = train_neural_rld(case, &train, &cfg)?;
            let decisions = test
                .features
                .iter()
                .map(|x| params.predict(x))
                .collect::<Result<Vec<_>>>()?;
            let rep = evaluate_against(case, &decisions, &test, &hindsight)?;
            rows.push(CurveRow {
                m,
                seed,
                mean_suboptimality: rep.mean,
                median_suboptimality: rep.median,
            });
        }
    }
    Ok(rows)
}

pub fn write_curve_csv(rows: &[CurveRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::fs::File::create(path).map_err(|e| RldError::io(path, e))?;
    let mut text = String::from("m,seed,mean_suboptimality,median_suboptimality\n");
    for r in rows {
        text.push_str(&format!(
            "{},{},{},{}\n",
            r.m, r.seed, r.mean_suboptimality, r.median_suboptimality
        ));
    }
    f.write_all(text.as_bytes()).map_err(|e| RldError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

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

    #[test]
    fn one_bus_suboptimality() {
        let c = one_bus();
        assert!((suboptimality(&c, &[0.0], &[1.0]).unwrap() - 9.0).abs() < 1e-9);
        assert!(suboptimality(&c, &[1.0], &[1.0]).unwrap().abs() < 1e-9);
        assert!(matches!(suboptimality(&c, &[1.0], &[0.0]), Err(RldError::Domain(_))));
    }

    #[test]
    fn worked_bound() {
        let r = pac_bound(BoundInputs {
            w_max: 1.0,
            k_layers: 3,
            c_ell: 10.0,
            x_max: 1.0,
            m: 4000,
            delta: 0.05,
        })
        .unwrap();
        assert!((r.bound - 3.6207).abs() < 1e-4, "{}", r.bound);
    }

    #[test]
    fn delta_domain() {
        let base = BoundInputs {
            w_max: 1.0,
            k_layers: 3,
            c_ell: 10.0,
            x_max: 1.0,
            m: 4000,
            delta: 1.0,
        };
        assert!(pac_bound(base).is_err());
        assert!(pac_bound(BoundInputs { delta: 0.0, ..base }).is_err());
        assert!(pac_bound(BoundInputs { w_max: -1.0, delta: 0.1, ..base }).is_err());
    }

    #[test]
    fn quantiles() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(quantile(&[0.0, 10.0], 0.95), 9.5);
    }

    #[test]
    fn c_ell_one_bus() {
        assert_eq!(c_ell(&one_bus(), 1.0).unwrap(), 11.0);
    }

    #[test]
    fn lipschitz_one_bus_is_one() {
        let est = estimate_lipschitz(&one_bus(), 20, 1.0, 3).unwrap();
        assert!((est - 1.0).abs() < 1e-6, "{est}");
    }
}
