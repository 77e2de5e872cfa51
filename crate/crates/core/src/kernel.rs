//! Kernel multi-view embeddings and the random Fourier feature approximation.
//!
//! The kernel path substitutes the centered Gram matrix `K̄_v` for `X_v` in
//! the linear block assembly and solves for Representer coefficients `A_v`,
//! so that latent features are `Y_v = A_vᵀ K̄_v`. The feature map itself is
//! never materialized.

use log::warn;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{invalid, Result};
use crate::linalg::{solve_gep, Matrix, Vector};
use crate::linear::{assemble_views, fit_linear, offsets_of, LinearModel, Method, MethodSpec};

/// Default number of random features per view.
pub const DEFAULT_RFF_FEATURES: usize = 1024;

/// Pair budget for the bandwidth heuristic.
const SIGMA_MAX_PAIRS: usize = 2000;
const SIGMA_SEED: u64 = 0x05ee_d0f5_167a;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelFunction {
    /// `exp(-‖x - y‖² / (2σ²))`
    Rbf { sigma: f64 },
    /// `xᵀy`
    Linear,
}

impl KernelFunction {
    pub fn rbf(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return invalid(format!("RBF bandwidth must be positive, got {sigma}"));
        }
        Ok(KernelFunction::Rbf { sigma })
    }

    pub fn sigma(&self) -> Option<f64> {
        match self {
            KernelFunction::Rbf { sigma } => Some(*sigma),
            KernelFunction::Linear => None,
        }
    }
}

/// `K[i, j] = κ(x_i, y_j)` for the columns of `x` and `y`.
pub fn gram(x: &Matrix, y: &Matrix, k: &KernelFunction) -> Result<Matrix> {
    if x.nrows() != y.nrows() {
        return invalid(format!(
            "kernel inputs have {} and {} features",
            x.nrows(),
            y.nrows()
        ));
    }
    let dot = x.transpose() * y;
    match *k {
        KernelFunction::Linear => Ok(dot),
        KernelFunction::Rbf { sigma } => {
            if !(sigma > 0.0) {
                return invalid("RBF bandwidth must be positive");
            }
            let sx: Vec<f64> = x.column_iter().map(|c| c.norm_squared()).collect();
            let sy: Vec<f64> = y.column_iter().map(|c| c.norm_squared()).collect();
            let scale = 1.0 / (2.0 * sigma * sigma);
            Ok(Matrix::from_fn(x.ncols(), y.ncols(), |i, j| {
                let d2 = (sx[i] + sy[j] - 2.0 * dot[(i, j)]).max(0.0);
                (-d2 * scale).exp()
            }))
        }
    }
}

/// `K̄ = K - (1/N)1K - (1/N)K1 + (1/N²)1K1`.
pub fn center_gram(k: &Matrix) -> Result<Matrix> {
    if !k.is_square() || k.nrows() == 0 {
        return invalid(format!("Gram matrix must be square, got {}x{}", k.nrows(), k.ncols()));
    }
    let stats = GramStats::of(k);
    let col_means: Vec<f64> = k.column_iter().map(|c| c.mean()).collect();
    Ok(stats.center(k, &col_means))
}

/// Training Gram statistics reused to center out-of-sample kernels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct GramStats {
    #[serde(with = "crate::serial::vector")]
    row_means: Vector,
    grand_mean: f64,
}

impl GramStats {
    fn of(k: &Matrix) -> Self {
        let row_means = Vector::from_iterator(k.nrows(), k.row_iter().map(|r| r.mean()));
        let grand_mean = row_means.mean();
        GramStats {
            row_means,
            grand_mean,
        }
    }

    /// Centers an N × M cross Gram given the column means of that block.
    fn center(&self, k: &Matrix, col_means: &[f64]) -> Matrix {
        Matrix::from_fn(k.nrows(), k.ncols(), |i, j| {
            k[(i, j)] - self.row_means[i] - col_means[j] + self.grand_mean
        })
    }
}

/// Training state of one view in a kernel model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelView {
    #[serde(with = "crate::serial::matrix")]
    pub train: Matrix,
    #[serde(with = "crate::serial::matrix")]
    pub coefficients: Matrix,
    stats: GramStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelModel {
    pub spec: MethodSpec,
    pub kernel: KernelFunction,
    pub views: Vec<KernelView>,
    pub eigenvalues: Vec<f64>,
    pub rho: f64,
}

impl KernelModel {
    pub fn num_views(&self) -> usize {
        self.views.len()
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn project_view(&self, v: usize, x: &Matrix) -> Result<Matrix> {
        let view = self
            .views
            .get(v)
            .ok_or_else(|| crate::Error::InvalidInput(format!("no view {v} in kernel model")))?;
        if x.nrows() != view.train.nrows() {
            return invalid(format!(
                "view {v} expects {} features, got {}",
                view.train.nrows(),
                x.nrows()
            ));
        }
        let cross = gram(&view.train, x, &self.kernel)?;
        let col_means: Vec<f64> = cross.column_iter().map(|c| c.mean()).collect();
        let centered = view.stats.center(&cross, &col_means);
        Ok(view.coefficients.transpose() * centered)
    }
}

/// Fits a kernel embedding with the same block structure as the linear
/// methods, using `K̄_v` in place of `X_v`.
///
/// For `MvPls` the metric is `blockdiag(K̄_v)`, the image of the constraint
/// `Σ W_vᵀW_v = I` under `W_v = Φ̄_v A_v`.
pub fn fit_kernel(data: &Dataset, spec: &MethodSpec, k: &KernelFunction) -> Result<KernelModel> {
    if spec.method.is_supervised() && data.labels().is_none() {
        return invalid(format!("method `{}` requires class labels", spec.method));
    }
    if spec.pca.is_some() {
        warn!("PCA preprocessing is ignored by the kernel path");
    }
    let n = data.num_samples();
    if spec.d == 0 || spec.d > n * data.num_views() {
        return invalid(format!("latent dimension {} is out of range", spec.d));
    }
    let mut centered = Vec::with_capacity(data.num_views());
    let mut stats = Vec::with_capacity(data.num_views());
    for x in data.views() {
        let kv = gram(x, x, k)?;
        stats.push(GramStats::of(&kv));
        centered.push(center_gram(&kv)?);
    }
    let mut pair = assemble_views(&centered, data.labels(), spec.method)?;
    if spec.method == Method::MvPls {
        pair.q.fill(0.0);
        for (v, kb) in centered.iter().enumerate() {
            let o = pair.offsets[v];
            pair.q.view_mut((o, o), (n, n)).copy_from(&((kb + kb.transpose()) * 0.5));
        }
    }
    let solution = solve_gep(&pair.p, &pair.q, spec.d, spec.delta)?
        .with_offsets(offsets_of(&vec![n; data.num_views()]))?;
    let views = data
        .views()
        .iter()
        .zip(stats)
        .enumerate()
        .map(|(v, (x, s))| KernelView {
            train: x.clone(),
            coefficients: solution.view_block(v),
            stats: s,
        })
        .collect();
    Ok(KernelModel {
        spec: spec.clone(),
        kernel: *k,
        views,
        rho: solution.rho,
        eigenvalues: solution.eigenvalues,
    })
}

/// `Y_v = A_vᵀ K̄_v(X_train, X_new)` with training centering statistics.
pub fn project_kernel(model: &KernelModel, data: &Dataset) -> Result<Vec<Matrix>> {
    if data.num_views() != model.num_views() {
        return invalid(format!(
            "model has {} views, data has {}",
            model.num_views(),
            data.num_views()
        ));
    }
    (0..model.num_views())
        .map(|v| model.project_view(v, data.view(v)))
        .collect()
}

fn mean_pairwise_distance(x: &Matrix, rng: &mut ChaCha8Rng) -> f64 {
    let n = x.ncols();
    let all_pairs = n * (n - 1) / 2;
    let dist = |i: usize, j: usize| (x.column(i) - x.column(j)).norm();
    if all_pairs <= SIGMA_MAX_PAIRS {
        let mut sum = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                sum += dist(i, j);
            }
        }
        sum / all_pairs as f64
    } else {
        let mut sum = 0.0;
        for _ in 0..SIGMA_MAX_PAIRS {
            let pick = index::sample(rng, n, 2);
            sum += dist(pick.index(0), pick.index(1));
        }
        sum / SIGMA_MAX_PAIRS as f64
    }
}

/// RBF bandwidth from the mean pairwise sample distance of each view,
/// averaged over views. Falls back to 1 when all samples coincide.
pub fn sigma_heuristic(data: &Dataset) -> Result<f64> {
    if data.num_samples() < 2 {
        return invalid("bandwidth heuristic needs at least two samples");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(SIGMA_SEED);
    let total: f64 = data
        .views()
        .iter()
        .map(|x| mean_pairwise_distance(x, &mut rng))
        .sum();
    let sigma = total / data.num_views() as f64;
    if sigma > 0.0 && sigma.is_finite() {
        Ok(sigma)
    } else {
        warn!("all samples coincide; using RBF bandwidth 1");
        Ok(1.0)
    }
}

/// Random Fourier feature map approximating an RBF kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RffMap {
    pub sigma: f64,
    pub seed: u64,
    #[serde(with = "crate::serial::matrix")]
    pub frequencies: Matrix,
    pub phases: Vec<f64>,
}

impl RffMap {
    /// Draws `num_features` frequencies from `N(0, σ⁻² I)` and phases from
    /// `U[0, 2π)`.
    pub fn new(input_dim: usize, num_features: usize, sigma: f64, seed: u64) -> Result<Self> {
        if num_features == 0 || input_dim == 0 {
            return invalid("random feature map needs positive input and feature counts");
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return invalid(format!("RBF bandwidth must be positive, got {sigma}"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut frequencies = Matrix::zeros(num_features, input_dim);
        for r in 0..num_features {
            for c in 0..input_dim {
                let z: f64 = rng.sample(StandardNormal);
                frequencies[(r, c)] = z / sigma;
            }
        }
        let phases = (0..num_features)
            .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
            .collect();
        Ok(RffMap {
            sigma,
            seed,
            frequencies,
            phases,
        })
    }

    pub fn num_features(&self) -> usize {
        self.frequencies.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.frequencies.ncols()
    }
}

/// `z(x) = √(2/Dr) cos(Ωx + b)` for every column of `x`.
pub fn rff_transform(map: &RffMap, x: &Matrix) -> Result<Matrix> {
    if x.nrows() != map.input_dim() {
        return invalid(format!(
            "feature map expects {} inputs, got {}",
            map.input_dim(),
            x.nrows()
        ));
    }
    let scale = (2.0 / map.num_features() as f64).sqrt();
    let mut z = &map.frequencies * x;
    for (r, mut row) in z.row_iter_mut().enumerate() {
        let b = map.phases[r];
        row.apply(|v| *v = scale * (*v + b).cos());
    }
    Ok(z)
}

/// Seed for view `v` derived from a base seed.
pub(crate) fn view_seed(seed: u64, v: usize) -> u64 {
    seed ^ (v as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Linear embedding over per-view random Fourier features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RffModel {
    pub maps: Vec<RffMap>,
    pub linear: LinearModel,
}

impl RffModel {
    pub fn project_view(&self, v: usize, x: &Matrix) -> Result<Matrix> {
        let map = self
            .maps
            .get(v)
            .ok_or_else(|| crate::Error::InvalidInput(format!("no view {v} in model")))?;
        self.linear.project_view(v, &rff_transform(map, x)?)
    }
}

fn rff_dataset(maps: &[RffMap], data: &Dataset) -> Result<Dataset> {
    if maps.len() != data.num_views() {
        return invalid(format!("{} feature maps for {} views", maps.len(), data.num_views()));
    }
    let views = maps
        .iter()
        .zip(data.views())
        .map(|(m, x)| rff_transform(m, x))
        .collect::<Result<Vec<_>>>()?;
    Dataset::with_names(
        views,
        data.labels().map(<[usize]>::to_vec),
        data.view_names().to_vec(),
    )
}

/// Maps every view through its own seeded RFF map and fits a linear model.
pub fn fit_rff(
    data: &Dataset,
    spec: &MethodSpec,
    sigma: f64,
    num_features: usize,
    seed: u64,
) -> Result<RffModel> {
    let maps = data
        .dims()
        .iter()
        .enumerate()
        .map(|(v, &dim)| RffMap::new(dim, num_features, sigma, view_seed(seed, v)))
        .collect::<Result<Vec<_>>>()?;
    let features = rff_dataset(&maps, data)?;
    let linear = fit_linear(&features, spec)?;
    Ok(RffModel { maps, linear })
}

pub fn project_rff(model: &RffModel, data: &Dataset) -> Result<Vec<Matrix>> {
    let features = rff_dataset(&model.maps, data)?;
    crate::linear::project(&model.linear, &features)
}
