//! Linear multi-view embeddings.
//!
//! Every method fills the block matrices `P` (inter-view) and `Q` (intra-view)
//! of the trace-ratio objective `Tr(WᵀPW) / Tr(WᵀQW)` and hands them to
//! [`solve_gep`]. The latent features of view `v` are `Y_v = W_vᵀ X_v`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::graphs::{
    class_indicators, laplacian_between_modular, laplacian_between_standard, laplacian_mvda,
    laplacian_within, MvdaPart,
};
use crate::linalg::{
    pca_fit, regularize, row_means, solve_gep, subtract_mean, EigenSolution, Matrix, PcaModel,
    Vector, DEFAULT_DELTA,
};

/// Latent dimension used for linear projections unless configured.
pub const DEFAULT_DIM: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Multi-view CCA: cross-covariances against per-view covariances.
    MvCca,
    /// Multi-view PLS: cross-covariances with an identity metric.
    MvPls,
    /// Standard multi-view LDA extension with the two-case between-class Laplacian.
    SlMvDa,
    /// Multi-view modular discriminant analysis.
    MvMda,
    /// The MvDA baseline with dense between/within scatters.
    MvDa,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::MvCca,
        Method::MvPls,
        Method::SlMvDa,
        Method::MvMda,
        Method::MvDa,
    ];

    pub fn is_supervised(self) -> bool {
        matches!(self, Method::SlMvDa | Method::MvMda | Method::MvDa)
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::MvCca => "mvcca",
            Method::MvPls => "mvpls",
            Method::SlMvDa => "slmvda",
            Method::MvMda => "mvmda",
            Method::MvDa => "mvda",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidInput(format!("unknown linear method `{s}`")))
    }
}

/// Per-view PCA applied before embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcaSetting {
    /// Keep `min(D_v, N - 1)` components per view.
    Auto,
    /// Explicit component count per view.
    Fixed(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub method: Method,
    pub d: usize,
    pub delta: f64,
    pub pca: Option<PcaSetting>,
}

impl MethodSpec {
    pub fn new(method: Method) -> Self {
        MethodSpec {
            method,
            d: DEFAULT_DIM,
            delta: DEFAULT_DELTA,
            pca: None,
        }
    }

    pub fn with_dim(mut self, d: usize) -> Self {
        self.d = d;
        self
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_pca(mut self, pca: PcaSetting) -> Self {
        self.pca = Some(pca);
        self
    }
}

/// The `P`/`Q` pair of one method on one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphPair {
    pub method: Method,
    pub p: Matrix,
    pub q: Matrix,
    pub offsets: Vec<usize>,
}

impl GraphPair {
    pub fn block_p(&self, i: usize, j: usize) -> Matrix {
        block(&self.p, &self.offsets, i, j)
    }

    pub fn block_q(&self, i: usize, j: usize) -> Matrix {
        block(&self.q, &self.offsets, i, j)
    }
}

fn block(m: &Matrix, offsets: &[usize], i: usize, j: usize) -> Matrix {
    let (r0, r1) = (offsets[i], offsets[i + 1]);
    let (c0, c1) = (offsets[j], offsets[j + 1]);
    m.view((r0, c0), (r1 - r0, c1 - c0)).into_owned()
}

pub(crate) fn offsets_of(dims: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(dims.len() + 1);
    out.push(0);
    for d in dims {
        out.push(out.last().copied().unwrap_or(0) + d);
    }
    out
}

fn put_block(m: &mut Matrix, offsets: &[usize], i: usize, j: usize, b: &Matrix) {
    m.view_mut((offsets[i], offsets[j]), b.shape()).copy_from(b);
}

/// Assembles `P` and `Q` for feature matrices that are used as given, apart
/// from per-view mean removal.
///
/// This is the shared entry point for linear data, centered Gram matrices and
/// network outputs.
pub fn assemble_views(views: &[Matrix], labels: Option<&[usize]>, method: Method) -> Result<GraphPair> {
    let v_count = views.len();
    if v_count == 0 {
        return invalid("no views to assemble");
    }
    let n = views[0].ncols();
    if views.iter().any(|x| x.ncols() != n) {
        return invalid("views have different sample counts");
    }
    if n == 0 {
        return invalid("views have no samples");
    }
    let centered: Vec<Matrix> = views.iter().map(|x| subtract_mean(x, &row_means(x))).collect();
    let dims: Vec<usize> = views.iter().map(|x| x.nrows()).collect();
    let offsets = offsets_of(&dims);
    let total = *offsets.last().unwrap_or(&0);
    let mut p = Matrix::zeros(total, total);
    let mut q = Matrix::zeros(total, total);

    let inv_n = 1.0 / n as f64;
    let ind = if method.is_supervised() {
        let labels = labels.ok_or_else(|| {
            Error::InvalidInput(format!("method `{method}` requires class labels"))
        })?;
        if labels.len() != n {
            return invalid(format!("{} labels for {n} samples", labels.len()));
        }
        Some(class_indicators(labels)?)
    } else {
        None
    };

    match method {
        Method::MvCca | Method::MvPls => {
            // X L Xᵀ with L = I - eeᵀ/N equals X̄ X̄ᵀ.
            for i in 0..v_count {
                for j in 0..v_count {
                    if i == j {
                        continue;
                    }
                    let b = &centered[i] * centered[j].transpose() * inv_n;
                    put_block(&mut p, &offsets, i, j, &b);
                }
            }
            if method == Method::MvCca {
                for i in 0..v_count {
                    let b = &centered[i] * centered[i].transpose() * inv_n;
                    put_block(&mut q, &offsets, i, i, &b);
                }
            } else {
                q.fill_with_identity();
            }
        }
        Method::SlMvDa => {
            let ind = ind.as_ref().expect("supervised");
            let l_diag = laplacian_between_standard(ind, v_count.max(2), true)?;
            let l_off = laplacian_between_standard(ind, v_count.max(2), false)?;
            let l_w = laplacian_within(ind);
            for i in 0..v_count {
                let xd = &centered[i] * &l_diag;
                let xo = &centered[i] * &l_off;
                for j in 0..v_count {
                    let b = if i == j {
                        &xd * centered[j].transpose()
                    } else {
                        &xo * centered[j].transpose()
                    };
                    put_block(&mut p, &offsets, i, j, &b);
                }
                let b = &centered[i] * &l_w * centered[i].transpose();
                put_block(&mut q, &offsets, i, i, &b);
            }
        }
        Method::MvMda => {
            let ind = ind.as_ref().expect("supervised");
            let l_b = laplacian_between_modular(ind)?;
            let l_w = laplacian_within(ind);
            for i in 0..v_count {
                let xb = &centered[i] * &l_b;
                for j in 0..v_count {
                    put_block(&mut p, &offsets, i, j, &(&xb * centered[j].transpose()));
                }
                let b = &centered[i] * &l_w * centered[i].transpose();
                put_block(&mut q, &offsets, i, i, &b);
            }
        }
        Method::MvDa => {
            let ind = ind.as_ref().expect("supervised");
            let l_b = laplacian_mvda(ind, MvdaPart::Between);
            let l_w = laplacian_mvda(ind, MvdaPart::Within);
            for i in 0..v_count {
                let xb = &centered[i] * &l_b;
                let xw = &centered[i] * &l_w;
                for j in 0..v_count {
                    put_block(&mut p, &offsets, i, j, &(&xb * centered[j].transpose()));
                    put_block(&mut q, &offsets, i, j, &(&xw * centered[j].transpose()));
                }
            }
        }
    }
    // Remove rounding asymmetry from the block products.
    let p = (&p + p.transpose()) * 0.5;
    let q = (&q + q.transpose()) * 0.5;
    Ok(GraphPair {
        method,
        p,
        q,
        offsets,
    })
}

/// Builds `P` and `Q` for `spec.method` on the raw views of `data`.
pub fn assemble_blocks(data: &Dataset, spec: &MethodSpec) -> Result<GraphPair> {
    assemble_views(data.views(), data.labels(), spec.method)
}

/// Per-view input transform fitted at training time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ViewTransform {
    Center {
        #[serde(with = "crate::serial::vector")]
        mean: Vector,
    },
    Pca(PcaModel),
}

impl ViewTransform {
    fn fit(x: &Matrix, pca_dim: Option<usize>) -> Result<Self> {
        Ok(match pca_dim {
            None => ViewTransform::Center { mean: row_means(x) },
            Some(k) => ViewTransform::Pca(pca_fit(x, k)?),
        })
    }

    pub fn input_dim(&self) -> usize {
        match self {
            ViewTransform::Center { mean } => mean.len(),
            ViewTransform::Pca(p) => p.input_dim(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            ViewTransform::Center { mean } => mean.len(),
            ViewTransform::Pca(p) => p.output_dim(),
        }
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        if x.nrows() != self.input_dim() {
            return invalid(format!(
                "expected {} features, got {}",
                self.input_dim(),
                x.nrows()
            ));
        }
        match self {
            ViewTransform::Center { mean } => Ok(subtract_mean(x, mean)),
            ViewTransform::Pca(p) => p.transform(x),
        }
    }
}

/// A fitted linear embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub spec: MethodSpec,
    pub solution: EigenSolution,
    pub transforms: Vec<ViewTransform>,
}

impl LinearModel {
    pub fn num_views(&self) -> usize {
        self.transforms.len()
    }

    /// `W_v`, sized (post-transform dim) × d.
    pub fn projection(&self, v: usize) -> Matrix {
        self.solution.view_block(v)
    }

    pub fn input_dims(&self) -> Vec<usize> {
        self.transforms.iter().map(ViewTransform::input_dim).collect()
    }

    /// Latent features of a single view.
    pub fn project_view(&self, v: usize, x: &Matrix) -> Result<Matrix> {
        if v >= self.num_views() {
            return invalid(format!("model has {} views, asked for view {v}", self.num_views()));
        }
        let z = self.transforms[v].apply(x)?;
        Ok(self.projection(v).transpose() * z)
    }

    fn preprocess(&self, data: &Dataset) -> Result<Vec<Matrix>> {
        if data.num_views() != self.num_views() {
            return invalid(format!(
                "model has {} views, data has {}",
                self.num_views(),
                data.num_views()
            ));
        }
        self.transforms
            .iter()
            .zip(data.views())
            .map(|(t, x)| t.apply(x))
            .collect()
    }
}

fn pca_dims(setting: &PcaSetting, data: &Dataset) -> Result<Vec<usize>> {
    let n = data.num_samples();
    match setting {
        PcaSetting::Auto => Ok(data
            .dims()
            .iter()
            .map(|&d| d.min(n.saturating_sub(1)).max(1))
            .collect()),
        PcaSetting::Fixed(k) => {
            if k.len() != data.num_views() {
                return invalid(format!(
                    "{} PCA sizes given for {} views",
                    k.len(),
                    data.num_views()
                ));
            }
            Ok(k.clone())
        }
    }
}

/// Fits a linear embedding: optional PCA, block assembly, GEP solve.
pub fn fit_linear(data: &Dataset, spec: &MethodSpec) -> Result<LinearModel> {
    if spec.method.is_supervised() && data.labels().is_none() {
        return invalid(format!("method `{}` requires class labels", spec.method));
    }
    let ks: Vec<Option<usize>> = match &spec.pca {
        None => vec![None; data.num_views()],
        Some(s) => pca_dims(s, data)?.into_iter().map(Some).collect(),
    };
    let transforms = data
        .views()
        .iter()
        .zip(&ks)
        .map(|(x, k)| ViewTransform::fit(x, *k))
        .collect::<Result<Vec<_>>>()?;
    let total: usize = transforms.iter().map(ViewTransform::output_dim).sum();
    if spec.d == 0 || spec.d > total {
        return invalid(format!(
            "latent dimension {} outside 1..={total} (sum of view dimensions)",
            spec.d
        ));
    }
    let views = data
        .views()
        .iter()
        .zip(&transforms)
        .map(|(x, t)| t.apply(x))
        .collect::<Result<Vec<_>>>()?;
    let pair = assemble_views(&views, data.labels(), spec.method)?;
    let solution = solve_gep(&pair.p, &pair.q, spec.d, spec.delta)?.with_offsets(pair.offsets)?;
    Ok(LinearModel {
        spec: spec.clone(),
        solution,
        transforms,
    })
}

/// `Y_v = W_vᵀ T_v(X_v)` for every view, where `T_v` is the training-time
/// centering or PCA.
pub fn project(model: &LinearModel, data: &Dataset) -> Result<Vec<Matrix>> {
    (0..model.num_views())
        .map(|v| model.project_view(v, data.view(v)))
        .collect()
}

/// Generalized trace ratio `Tr((WᵀQ̃W)⁻¹ WᵀPW)` of the model on `data`.
///
/// At the training optimum `WᵀQ̃W = I`, so this is the sum of the top
/// eigenvalues, i.e. `rho`.
pub fn objective_value(model: &LinearModel, data: &Dataset) -> Result<f64> {
    let views = model.preprocess(data)?;
    let pair = assemble_views(&views, data.labels(), model.spec.method)?;
    trace_ratio(&model.solution.w, &pair.p, &regularize(&pair.q, model.spec.delta))
}

pub(crate) fn trace_ratio(w: &Matrix, p: &Matrix, q_reg: &Matrix) -> Result<f64> {
    let num = w.transpose() * p * w;
    let den = w.transpose() * q_reg * w;
    let chol = den
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidInput("projected metric is singular".into()))?;
    Ok(chol.solve(&num).trace())
}
