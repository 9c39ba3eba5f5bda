//! Synthetic day-ahead features and net demands.
//!
//! Features are i.i.d. `U[0, 1]^p`; demands follow
//! `d = Omega (x * (1 + sigma * w))` with `w ~ N(0, I_p)` and elementwise `*`.
//! Demands are never clamped, so large noise can produce negative net demand.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, RldError};
use crate::grid::NetworkCase;

pub const DEFAULT_NOISE_SCALE: f64 = 0.15;
const META_FORMAT: &str = "nrld-dataset";
const META_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// One feature row per sample, each of length `p`.
    pub features: Vec<Vec<f64>>,
    /// One net-demand row per sample, each of length `n_bus`.
    pub demands: Vec<Vec<f64>>,
    /// `n_bus x p` generating matrix.
    pub omega: DMatrix<f64>,
    pub noise_scale: f64,
    pub seed: u64,
    pub case_name: String,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.omega.ncols()
    }

    pub fn n_bus(&self) -> usize {
        self.omega.nrows()
    }

    /// Largest sample feature norm `max_m ||x_m||_2`.
    pub fn max_feature_norm(&self) -> f64 {
        self.features
            .iter()
            .map(|x| x.iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// `sqrt(mean_m ||x_m||_2^2)`.
    pub fn rms_feature_norm(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let s: f64 = self
            .features
            .iter()
            .map(|x| x.iter().map(|v| v * v).sum::<f64>())
            .sum();
        (s / self.len() as f64).sqrt()
    }

    fn subset(&self, range: std::ops::Range<usize>) -> Dataset {
        Dataset {
            features: self.features[range.clone()].to_vec(),
            demands: self.demands[range].to_vec(),
            omega: self.omega.clone(),
            noise_scale: self.noise_scale,
            seed: self.seed,
            case_name: self.case_name.clone(),
        }
    }
}

/// Nonnegative uniform `Omega`, rescaled so that the expected total demand
/// at `x = 0.5 * 1` equals `target_load_mw`.
pub fn make_omega(case: &NetworkCase, p: usize, seed: u64, target_load_mw: f64) -> Result<DMatrix<f64>> {
    if p == 0 {
        return Err(RldError::InvalidArgument("feature dimension must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = case.n_bus;
    let mut omega = DMatrix::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            omega[(i, j)] = rng.random::<f64>();
        }
    }
    let total = 0.5 * omega.sum();
    if total > 0.0 {
        omega *= target_load_mw / total;
    }
    Ok(omega)
}

pub fn gen_dataset(
    case: &NetworkCase,
    omega: &DMatrix<f64>,
    m: usize,
    noise_scale: f64,
    seed: u64,
) -> Result<Dataset> {
    if m == 0 {
        return Err(RldError::InvalidArgument("dataset needs at least one sample".into()));
    }
    if !(noise_scale >= 0.0 && noise_scale.is_finite()) {
        return Err(RldError::InvalidArgument(format!(
            "noise scale must be nonnegative, got {noise_scale}"
        )));
    }
    if omega.nrows() != case.n_bus {
        return Err(RldError::Dimension(format!(
            "Omega has {} rows, case has {} buses",
            omega.nrows(),
            case.n_bus
        )));
    }
    let (n, p) = omega.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(m);
    let mut demands = Vec::with_capacity(m);
    let mut scaled = vec![0.0; p];
    for _ in 0..m {
        let x: Vec<f64> = (0..p).map(|_| rng.random::<f64>()).collect();
        for j in 0..p {
            let w: f64 = StandardNormal.sample(&mut rng);
            scaled[j] = x[j] * (1.0 + noise_scale * w);
        }
        let d: Vec<f64> = (0..n)
            .map(|i| (0..p).map(|j| omega[(i, j)] * scaled[j]).sum())
            .collect();
        features.push(x);
        demands.push(d);
    }
    Ok(Dataset {
        features,
        demands,
        omega: omega.clone(),
        noise_scale,
        seed,
        case_name: case.name.clone(),
    })
}

/// First `n_train` rows to the training set, the rest to the test set.
pub fn split(dataset: &Dataset, n_train: usize) -> Result<(Dataset, Dataset)> {
    if n_train == 0 || n_train >= dataset.len() {
        return Err(RldError::InvalidArgument(format!(
            "n_train must be in (0, {}), got {n_train}",
            dataset.len()
        )));
    }
    Ok((
        dataset.subset(0..n_train),
        dataset.subset(n_train..dataset.len()),
    ))
}

#[derive(Serialize, Deserialize)]
struct Meta {
    format: String,
    version: u32,
    case_name: String,
    rows: usize,
    n_features: usize,
    n_bus: usize,
    noise_scale: f64,
    seed: u64,
    /// Row-major `n_bus x n_features`.
    omega: Vec<f64>,
}

/// Sidecar metadata path: `data.csv` -> `data.meta.json`.
pub fn meta_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (n, p) = dataset.omega.shape();
    let mut w = csv::Writer::from_path(path).map_err(|e| RldError::Parse(e.to_string()))?;
    let header: Vec<String> = (1..=p)
        .map(|j| format!("x_{j}"))
        .chain((1..=n).map(|i| format!("d_{i}")))
        .collect();
    let csv_err = |e: csv::Error| RldError::Parse(format!("writing {}: {e}", path.display()));
    w.write_record(&header).map_err(csv_err)?;
    for (x, d) in dataset.features.iter().zip(&dataset.demands) {
        let rec: Vec<String> = x.iter().chain(d).map(|v| v.to_string()).collect();
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| RldError::io(path, e))?;

    let meta = Meta {
        format: META_FORMAT.into(),
        version: META_VERSION,
        case_name: dataset.case_name.clone(),
        rows: dataset.len(),
        n_features: p,
        n_bus: n,
        noise_scale: dataset.noise_scale,
        seed: dataset.seed,
        omega: dataset.omega.transpose().as_slice().to_vec(),
    };
    let mpath = meta_path(path);
    let text = serde_json::to_string_pretty(&meta).expect("metadata serialization cannot fail");
    std::fs::write(&mpath, text).map_err(|e| RldError::io(&mpath, e))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let mpath = meta_path(path);
    let text = std::fs::read_to_string(&mpath).map_err(|e| RldError::io(&mpath, e))?;
    let meta: Meta = serde_json::from_str(&text)
        .map_err(|e| RldError::Parse(format!("{}: {e}", mpath.display())))?;
    if meta.format != META_FORMAT || meta.version != META_VERSION {
        return Err(RldError::Version(format!(
            "unsupported dataset metadata {} v{}",
            meta.format, meta.version
        )));
    }
    if meta.rows == 0 {
        return Err(RldError::InvalidArgument(format!(
            "{}: dataset declares zero rows",
            mpath.display()
        )));
    }
    let (p, n) = (meta.n_features, meta.n_bus);
    if meta.omega.len() != n * p {
        return Err(RldError::Parse(format!(
            "Omega has {} entries, expected {n}x{p}",
            meta.omega.len()
        )));
    }

    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| RldError::Parse(format!("{}: {e}", path.display())))?;
    let header = rdr
        .headers()
        .map_err(|e| RldError::Parse(format!("{}: header: {e}", path.display())))?;
    if header.len() != p + n {
        return Err(RldError::Parse(format!(
            "header has {} columns, metadata implies {}",
            header.len(),
            p + n
        )));
    }
    let mut features = Vec::with_capacity(meta.rows);
    let mut demands = Vec::with_capacity(meta.rows);
    for (idx, rec) in rdr.records().enumerate() {
        let row = idx + 1;
        let rec = rec.map_err(|e| RldError::Parse(format!("row {row}: {e}")))?;
        if rec.len() != p + n {
            return Err(RldError::Parse(format!(
                "row {row}: expected {} fields, found {}",
                p + n,
                rec.len()
            )));
        }
        let vals = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| RldError::Parse(format!("row {row}: {e}")))?;
        features.push(vals[..p].to_vec());
        demands.push(vals[p..].to_vec());
    }
    if features.len() != meta.rows {
        return Err(RldError::Parse(format!(
            "row {}: file truncated, metadata declares {} rows",
            features.len() + 1,
            meta.rows
        )));
    }
    Ok(Dataset {
        features,
        demands,
        omega: DMatrix::from_row_slice(n, p, &meta.omega),
        noise_scale: meta.noise_scale,
        seed: meta.seed,
        case_name: meta.case_name,
    })
}
