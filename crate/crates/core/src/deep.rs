//! Neural multi-view embeddings.
//!
//! Each view is mapped by its own MLP to `H_v`; a shared linear layer then
//! projects `Y_v = W_vᵀ H_v`. Training alternates two steps per minibatch:
//! `W` is re-solved from the minibatch eigenproblem (which enforces the
//! unit-variance constraint), then the networks take an SGD ascent step on
//! the trace objective with `W` held fixed.

use std::fmt;
use std::str::FromStr;

use log::{debug, warn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::graphs::{class_indicators, laplacian_between_modular, laplacian_total};
use crate::linalg::{row_means, solve_gep, subtract_mean, EigenSolution, Matrix, Vector};
use crate::linear::{assemble_views, Method};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// out × in
    #[serde(with = "crate::serial::matrix")]
    pub weight: Matrix,
    #[serde(with = "crate::serial::vector")]
    pub bias: Vector,
}

/// Fully connected network; hidden layers use `activation`, the output layer
/// is linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
    pub activation: Activation,
}

/// Activations kept from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input of each layer (the first is the network input).
    pub inputs: Vec<Matrix>,
    /// Pre-activation output of each layer.
    pub pre_activations: Vec<Matrix>,
}

/// Parameter gradients, one entry per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradient {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vector>,
}

impl Mlp {
    /// Gaussian weights with standard deviation `√(2/fan_in)`, zero biases.
    pub fn new(widths: &[usize], activation: Activation, rng: &mut impl Rng) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return invalid(format!("network widths {widths:?} need >= 2 positive entries"));
        }
        let layers = widths
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let std = (2.0 / fan_in as f64).sqrt();
                let weight = Matrix::from_fn(fan_out, fan_in, |_, _| {
                    let z: f64 = rng.sample(StandardNormal);
                    z * std
                });
                Layer {
                    weight,
                    bias: Vector::zeros(fan_out),
                }
            })
            .collect();
        Ok(Mlp { layers, activation })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weight.nrows()
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim()];
        w.extend(self.layers.iter().map(|l| l.weight.nrows()));
        w
    }

    fn apply_step(&mut self, grad: &MlpGradient, lr: f64) {
        for (layer, (gw, gb)) in self.layers.iter_mut().zip(grad.weights.iter().zip(&grad.biases)) {
            layer.weight += gw * lr;
            layer.bias += gb * lr;
        }
    }
}

/// Forward pass over the columns of `x`.
pub fn mlp_forward(net: &Mlp, x: &Matrix) -> Result<(Matrix, ForwardCache)> {
    if x.nrows() != net.input_dim() {
        return invalid(format!(
            "network expects {} inputs, got {}",
            net.input_dim(),
            x.nrows()
        ));
    }
    let last = net.layers.len() - 1;
    let mut inputs = Vec::with_capacity(net.layers.len());
    let mut pre = Vec::with_capacity(net.layers.len());
    let mut a = x.clone();
    for (k, layer) in net.layers.iter().enumerate() {
        let mut z = &layer.weight * &a;
        for mut col in z.column_iter_mut() {
            col += &layer.bias;
        }
        let next = if k == last {
            z.clone()
        } else {
            z.map(|v| net.activation.apply(v))
        };
        inputs.push(std::mem::replace(&mut a, next));
        pre.push(z);
    }
    Ok((
        a,
        ForwardCache {
            inputs,
            pre_activations: pre,
        },
    ))
}

/// Backpropagates `∂J/∂H` to parameter gradients.
pub fn mlp_backward(net: &Mlp, cache: &ForwardCache, grad_out: &Matrix) -> Result<MlpGradient> {
    let last = net.layers.len() - 1;
    if grad_out.shape() != cache.pre_activations[last].shape() {
        return invalid("output gradient shape does not match the forward pass");
    }
    let mut weights = vec![Matrix::zeros(0, 0); net.layers.len()];
    let mut biases = vec![Vector::zeros(0); net.layers.len()];
    let mut delta = grad_out.clone();
    for k in (0..net.layers.len()).rev() {
        if k != last {
            let z = &cache.pre_activations[k];
            delta.zip_apply(z, |g, zv| *g *= net.activation.derivative(zv));
        }
        weights[k] = &delta * cache.inputs[k].transpose();
        biases[k] = Vector::from_iterator(delta.nrows(), delta.row_iter().map(|r| r.sum()));
        if k > 0 {
            delta = net.layers[k].weight.transpose() * &delta;
        }
    }
    Ok(MlpGradient { weights, biases })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeepMethod {
    DmvCca,
    DmvPls,
    DmvMda,
}

impl DeepMethod {
    pub const ALL: [DeepMethod; 3] = [DeepMethod::DmvCca, DeepMethod::DmvPls, DeepMethod::DmvMda];

    /// Linear method solved on the network outputs.
    pub fn linear(self) -> Method {
        match self {
            DeepMethod::DmvCca => Method::MvCca,
            DeepMethod::DmvPls => Method::MvPls,
            DeepMethod::DmvMda => Method::MvMda,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DeepMethod::DmvCca => "dmvcca",
            DeepMethod::DmvPls => "dmvpls",
            DeepMethod::DmvMda => "dmvmda",
        }
    }

    /// Whether the objective includes `i = j` view pairs.
    fn includes_self_pairs(self) -> bool {
        self == DeepMethod::DmvMda
    }
}

impl fmt::Display for DeepMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DeepMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DeepMethod::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidInput(format!("unknown deep method `{s}`")))
    }
}

fn check_embed_inputs(ws: &[Matrix], hs: &[Matrix], l: &Matrix) -> Result<()> {
    if ws.len() != hs.len() || ws.is_empty() {
        return invalid("one projection per view output is required");
    }
    let n = hs[0].ncols();
    let d = ws[0].ncols();
    if !l.is_square() || l.nrows() != n {
        return invalid(format!("Laplacian must be {n}x{n}"));
    }
    for (w, h) in ws.iter().zip(hs) {
        if h.ncols() != n || w.nrows() != h.nrows() || w.ncols() != d {
            return invalid("projection and output dimensions do not chain");
        }
    }
    Ok(())
}

/// Pairwise trace objective `Σ_{i<j} Tr(W_iᵀH_i L H_jᵀW_j)`, plus
/// `½ Σ_i Tr(W_iᵀH_i L H_iᵀW_i)` for DMvMDA.
///
/// This is half the ordered-pair sum, which makes [`embed_grad`] its exact
/// gradient.
pub fn embedding_objective(ws: &[Matrix], hs: &[Matrix], l: &Matrix, method: DeepMethod) -> Result<f64> {
    check_embed_inputs(ws, hs, l)?;
    let ys: Vec<Matrix> = ws.iter().zip(hs).map(|(w, h)| w.transpose() * h).collect();
    let mut total = 0.0;
    for i in 0..ys.len() {
        let yl = &ys[i] * l;
        for (j, yj) in ys.iter().enumerate() {
            if i == j && !method.includes_self_pairs() {
                continue;
            }
            total += yl.dot(yj);
        }
    }
    Ok(0.5 * total)
}

/// `∂J/∂H_i = Σ_j W_i W_jᵀ H_j L`, over `j ≠ i` for DMvCCA/DMvPLS and over
/// all `j` for DMvMDA, with `W` held fixed.
pub fn embed_grad(ws: &[Matrix], hs: &[Matrix], l: &Matrix, method: DeepMethod) -> Result<Vec<Matrix>> {
    check_embed_inputs(ws, hs, l)?;
    let ys: Vec<Matrix> = ws.iter().zip(hs).map(|(w, h)| w.transpose() * h).collect();
    let mut sum = Matrix::zeros(ys[0].nrows(), ys[0].ncols());
    for y in &ys {
        sum += y;
    }
    Ok(ws
        .iter()
        .zip(&ys)
        .map(|(w, y)| {
            let partners = if method.includes_self_pairs() {
                sum.clone()
            } else {
                &sum - y
            };
            w * partners * l
        })
        .collect())
}

/// Minibatch Laplacian driving the numerator of `method`.
pub fn method_laplacian(method: DeepMethod, labels: Option<&[usize]>, n: usize) -> Result<Matrix> {
    match method {
        DeepMethod::DmvCca | DeepMethod::DmvPls => Ok(laplacian_total(n)? / n as f64),
        DeepMethod::DmvMda => {
            let labels = labels.ok_or_else(|| Error::InvalidInput("dmvmda requires labels".into()))?;
            laplacian_between_modular(&class_indicators(labels)?)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub d: usize,
    pub delta: f64,
    /// Hidden layer widths.
    pub hidden: Vec<usize>,
    /// Width of the network output `H_v`.
    pub output_dim: usize,
    pub activation: Activation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 200,
            learning_rate: 1e-3,
            seed: 0,
            d: 10,
            delta: crate::linalg::DEFAULT_DELTA,
            hidden: vec![64],
            output_dim: 32,
            activation: Activation::Relu,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return invalid("epochs must be at least 1");
        }
        if self.batch_size < 2 {
            return invalid("batch size must be at least 2");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return invalid("learning rate must be finite and non-negative");
        }
        if self.d == 0 {
            return invalid("latent dimension must be positive");
        }
        if self.output_dim == 0 || self.hidden.contains(&0) {
            return invalid("layer widths must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepModel {
    pub method: DeepMethod,
    pub config: TrainConfig,
    pub nets: Vec<Mlp>,
    /// `W_v`, output-width × d.
    #[serde(with = "crate::serial::matrices")]
    pub projections: Vec<Matrix>,
    /// Training means of the network outputs.
    #[serde(with = "crate::serial::vectors")]
    pub output_means: Vec<Vector>,
    pub eigenvalues: Vec<f64>,
    /// Full-batch objective after each epoch.
    pub log: Vec<f64>,
}

impl DeepModel {
    pub fn num_views(&self) -> usize {
        self.nets.len()
    }

    pub fn project_view(&self, v: usize, x: &Matrix) -> Result<Matrix> {
        let net = self
            .nets
            .get(v)
            .ok_or_else(|| Error::InvalidInput(format!("no view {v} in deep model")))?;
        let (h, _) = mlp_forward(net, x)?;
        Ok(self.projections[v].transpose() * subtract_mean(&h, &self.output_means[v]))
    }
}

/// Solves the method's eigenproblem on network outputs.
pub fn solve_projection(
    method: DeepMethod,
    hs: &[Matrix],
    labels: Option<&[usize]>,
    d: usize,
    delta: f64,
) -> Result<EigenSolution> {
    let pair = assemble_views(hs, labels, method.linear())?;
    // The PLS metric is already the identity.
    let delta = if method == DeepMethod::DmvPls { 0.0 } else { delta };
    solve_gep(&pair.p, &pair.q, d, delta)?.with_offsets(pair.offsets)
}

fn forward_all(nets: &[Mlp], views: &[Matrix]) -> Result<Vec<(Matrix, ForwardCache)>> {
    nets.iter().zip(views).map(|(n, x)| mlp_forward(n, x)).collect()
}

fn split_blocks(sol: &EigenSolution) -> Vec<Matrix> {
    (0..sol.num_views()).map(|v| sol.view_block(v)).collect()
}

fn batch_usable(method: DeepMethod, labels: Option<&[usize]>) -> bool {
    match (method, labels) {
        (DeepMethod::DmvMda, Some(l)) => l.iter().any(|&x| x != l[0]),
        _ => true,
    }
}

/// Relabels a subset's labels onto `1..=C'` for the classes present.
fn compact_labels(labels: &[usize]) -> Vec<usize> {
    let mut present: Vec<usize> = labels.to_vec();
    present.sort_unstable();
    present.dedup();
    labels
        .iter()
        .map(|l| present.binary_search(l).map(|i| i + 1).unwrap_or(0))
        .collect()
}

/// Trains per-view networks and the shared linear layer.
pub fn fit_deep(data: &Dataset, method: DeepMethod, cfg: &TrainConfig) -> Result<DeepModel> {
    cfg.validate()?;
    if method == DeepMethod::DmvMda && data.labels().is_none() {
        return invalid("dmvmda requires class labels");
    }
    let total_out = cfg.output_dim * data.num_views();
    if cfg.d > total_out {
        return invalid(format!(
            "latent dimension {} exceeds stacked output width {total_out}",
            cfg.d
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut nets = data
        .dims()
        .iter()
        .map(|&dim| {
            let mut widths = vec![dim];
            widths.extend(&cfg.hidden);
            widths.push(cfg.output_dim);
            Mlp::new(&widths, cfg.activation, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;

    let n = data.num_samples();
    let labels = data.labels();
    let mut order: Vec<usize> = (0..n).collect();
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut used = 0usize;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            batches += 1;
            let batch_labels = labels.map(|l| compact_labels(&chunk.iter().map(|&i| l[i]).collect::<Vec<_>>()));
            if !batch_usable(method, batch_labels.as_deref()) {
                warn!("epoch {epoch}: skipping minibatch with a single class");
                continue;
            }
            let xs: Vec<Matrix> = data
                .views()
                .iter()
                .map(|x| x.select_columns(chunk.iter()))
                .collect();
            let passes = forward_all(&nets, &xs)?;
            let hs: Vec<Matrix> = passes.iter().map(|(h, _)| h.clone()).collect();
            let sol = match solve_projection(method, &hs, batch_labels.as_deref(), cfg.d, cfg.delta) {
                Ok(s) => s,
                Err(e) => {
                    warn!("epoch {epoch}: skipping degenerate minibatch ({e})");
                    continue;
                }
            };
            let ws = split_blocks(&sol);
            let l = method_laplacian(method, batch_labels.as_deref(), chunk.len())?;
            let grads = embed_grad(&ws, &hs, &l, method)?;
            for ((net, (_, cache)), g) in nets.iter_mut().zip(&passes).zip(&grads) {
                let pg = mlp_backward(net, cache, g)?;
                net.apply_step(&pg, cfg.learning_rate);
            }
            used += 1;
        }
        if used == 0 && batches > 0 {
            return Err(Error::TrainingFailed(format!(
                "every minibatch of epoch {epoch} was degenerate"
            )));
        }
        let hs: Vec<Matrix> = forward_all(&nets, data.views())?
            .into_iter()
            .map(|(h, _)| h)
            .collect();
        let rho = solve_projection(method, &hs, labels, cfg.d, cfg.delta)
            .map_err(|e| Error::TrainingFailed(format!("full-batch solve after epoch {epoch}: {e}")))?
            .rho;
        debug!("epoch {epoch}: objective {rho}");
        log.push(rho);
    }

    let hs: Vec<Matrix> = forward_all(&nets, data.views())?
        .into_iter()
        .map(|(h, _)| h)
        .collect();
    let sol = solve_projection(method, &hs, labels, cfg.d, cfg.delta)?;
    Ok(DeepModel {
        method,
        config: cfg.clone(),
        projections: split_blocks(&sol),
        output_means: hs.iter().map(row_means).collect(),
        eigenvalues: sol.eigenvalues,
        nets,
        log,
    })
}

/// `Y_v = W_vᵀ h(X_v; B_v)` for every view.
pub fn project_deep(model: &DeepModel, data: &Dataset) -> Result<Vec<Matrix>> {
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

/// Result of comparing [`embed_grad`] against central finite differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub method: DeepMethod,
    pub views: usize,
    pub samples: usize,
    /// `‖g_analytic - g_fd‖_F / ‖g_fd‖_F` over all views.
    pub relative_error: f64,
}

/// Finite-difference check of the embedding gradient on a random instance.
///
/// `perturb` is added to every analytic gradient entry; it exists so that
/// callers can confirm that the check fails when it should.
pub fn gradient_check(
    method: DeepMethod,
    views: usize,
    samples: usize,
    seed: u64,
    perturb: f64,
) -> Result<GradCheck> {
    const STEP: f64 = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = 2;
    let widths: Vec<usize> = (0..views).map(|v| 3 + v % 2).collect();
    let mut normal = |r: usize, c: usize| -> Matrix {
        Matrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
    };
    let hs: Vec<Matrix> = widths.iter().map(|&w| normal(w, samples)).collect();
    let ws: Vec<Matrix> = widths.iter().map(|&w| normal(w, d)).collect();
    let labels: Vec<usize> = (0..samples).map(|i| i % 2 + 1).collect();
    let l = method_laplacian(method, Some(&labels), samples)?;

    let analytic = embed_grad(&ws, &hs, &l, method)?;
    let mut diff2 = 0.0;
    let mut norm2 = 0.0;
    for v in 0..views {
        for idx in 0..hs[v].len() {
            let mut plus = hs.clone();
            plus[v][idx] += STEP;
            let mut minus = hs.clone();
            minus[v][idx] -= STEP;
            let fd = (embedding_objective(&ws, &plus, &l, method)?
                - embedding_objective(&ws, &minus, &l, method)?)
                / (2.0 * STEP);
            let a = analytic[v][idx] + perturb;
            diff2 += (a - fd) * (a - fd);
            norm2 += fd * fd;
        }
    }
    Ok(GradCheck {
        method,
        views,
        samples,
        relative_error: diff2.sqrt() / norm2.sqrt().max(f64::MIN_POSITIVE),
    })
}
