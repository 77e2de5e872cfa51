//! Fit, probe and evaluate: the steps shared by `fit`, `eval` and `sweep-d`.

use std::str::FromStr;

use log::info;
use mvembed::data::{Dataset, Model};
use mvembed::deep::{fit_deep, Activation, DeepMethod, TrainConfig};
use mvembed::eval::{
    fit_matcher, match_scores, nearest_class_mean_accuracy, probability_scores, retrieval_from_scores,
    Matcher, MatcherConfig, RetrievalResult, Similarity,
};
use mvembed::kernel::{fit_kernel, fit_rff, sigma_heuristic, KernelFunction, DEFAULT_RFF_FEATURES};
use mvembed::linalg::{Matrix, DEFAULT_DELTA};
use mvembed::linear::{fit_linear, Method, MethodSpec, PcaSetting, DEFAULT_DIM};
use serde::{Deserialize, Serialize};

use crate::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Linear,
    Kernel,
    Rff,
    Deep,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Linear => "linear",
            Variant::Kernel => "kernel",
            Variant::Rff => "rff",
            Variant::Deep => "deep",
        }
    }
}

impl FromStr for Variant {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Variant::Linear),
            "kernel" => Ok(Variant::Kernel),
            "rff" => Ok(Variant::Rff),
            "deep" => Ok(Variant::Deep),
            _ => Err(CliError::Usage(format!("unknown variant `{s}`"))),
        }
    }
}

/// Any method name accepted on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodName {
    Shallow(Method),
    Deep(DeepMethod),
}

impl MethodName {
    pub fn name(self) -> &'static str {
        match self {
            MethodName::Shallow(m) => m.name(),
            MethodName::Deep(m) => m.name(),
        }
    }

    fn is_supervised(self) -> bool {
        match self {
            MethodName::Shallow(m) => m.is_supervised(),
            MethodName::Deep(m) => m.linear().is_supervised(),
        }
    }
}

impl FromStr for MethodName {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        if let Ok(m) = s.parse::<Method>() {
            return Ok(MethodName::Shallow(m));
        }
        s.parse::<DeepMethod>()
            .map(MethodName::Deep)
            .map_err(|_| CliError::Usage(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelChoice {
    Rbf,
    Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub method: MethodName,
    pub variant: Variant,
    /// `None` picks the family default.
    pub d: Option<usize>,
    pub delta: f64,
    pub kernel: KernelChoice,
    /// `None` uses the bandwidth heuristic.
    pub sigma: Option<f64>,
    pub rff_features: usize,
    pub pca: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub seed: u64,
}

impl FitOptions {
    pub fn new(method: MethodName, variant: Variant) -> Self {
        let deep = TrainConfig::default();
        FitOptions {
            method,
            variant,
            d: None,
            delta: DEFAULT_DELTA,
            kernel: KernelChoice::Rbf,
            sigma: None,
            rff_features: DEFAULT_RFF_FEATURES,
            pca: false,
            epochs: deep.epochs,
            batch_size: deep.batch_size,
            learning_rate: deep.learning_rate,
            hidden: deep.hidden,
            output_dim: deep.output_dim,
            seed: 0,
        }
    }

    pub fn latent_dim(&self) -> usize {
        match self.variant {
            Variant::Deep => self.d.unwrap_or(TrainConfig::default().d),
            _ => self.d.unwrap_or(DEFAULT_DIM),
        }
    }

    fn check(&self, data: &Dataset) -> Result<()> {
        match (self.variant, self.method) {
            (Variant::Deep, MethodName::Shallow(m)) => {
                return Err(CliError::Usage(format!(
                    "the deep variant supports dmvcca, dmvpls and dmvmda, not `{m}`"
                )))
            }
            (v, MethodName::Deep(m)) if v != Variant::Deep => {
                return Err(CliError::Usage(format!("`{m}` needs --variant deep")))
            }
            _ => {}
        }
        if self.method.is_supervised() && data.labels().is_none() {
            return Err(CliError::Usage(format!(
                "method `{}` is supervised but the dataset has no labels",
                self.method.name()
            )));
        }
        if self.sigma.is_some_and(|s| !(s > 0.0 && s.is_finite())) {
            return Err(CliError::Usage("--sigma must be positive".into()));
        }
        Ok(())
    }

    fn spec(&self, method: Method) -> MethodSpec {
        let spec = MethodSpec::new(method).with_dim(self.latent_dim()).with_delta(self.delta);
        if self.pca {
            spec.with_pca(PcaSetting::Auto)
        } else {
            spec
        }
    }

    fn sigma_for(&self, data: &Dataset) -> Result<f64> {
        let sigma = match self.sigma {
            Some(s) => s,
            None => sigma_heuristic(data)?,
        };
        info!("RBF bandwidth {sigma}");
        Ok(sigma)
    }
}

pub fn fit_model(data: &Dataset, opts: &FitOptions) -> Result<Model> {
    opts.check(data)?;
    let model = match (opts.variant, opts.method) {
        (Variant::Linear, MethodName::Shallow(m)) => Model::Linear(fit_linear(data, &opts.spec(m))?),
        (Variant::Kernel, MethodName::Shallow(m)) => {
            let k = match opts.kernel {
                KernelChoice::Linear => KernelFunction::Linear,
                KernelChoice::Rbf => KernelFunction::rbf(opts.sigma_for(data)?)?,
            };
            Model::Kernel(fit_kernel(data, &opts.spec(m), &k)?)
        }
        (Variant::Rff, MethodName::Shallow(m)) => Model::Rff(fit_rff(
            data,
            &opts.spec(m),
            opts.sigma_for(data)?,
            opts.rff_features,
            opts.seed,
        )?),
        (Variant::Deep, MethodName::Deep(m)) => {
            let cfg = TrainConfig {
                epochs: opts.epochs,
                batch_size: opts.batch_size,
                learning_rate: opts.learning_rate,
                seed: opts.seed,
                d: opts.latent_dim(),
                delta: opts.delta,
                hidden: opts.hidden.clone(),
                output_dim: opts.output_dim,
                activation: Activation::Relu,
            };
            Model::Deep(fit_deep(data, m, &cfg)?)
        }
        _ => unreachable!("checked above"),
    };
    Ok(model)
}

/// What evaluation needs from the training data: a class-probability matcher
/// over the common space and the per-class latent means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub matcher: Matcher,
    /// d × C.
    #[serde(with = "matrix_rows")]
    pub class_means: Matrix,
}

mod matrix_rows {
    use mvembed::linalg::Matrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Matrix, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        (m.nrows(), m.ncols(), rows).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix, D::Error> {
        let (r, c, rows) = <(usize, usize, Vec<Vec<f64>>)>::deserialize(d)?;
        if rows.len() != r || rows.iter().any(|row| row.len() != c) {
            return Err(serde::de::Error::custom("matrix shape does not match its rows"));
        }
        Ok(Matrix::from_fn(r, c, |i, j| rows[i][j]))
    }
}

/// Stacks the latents of all views side by side, with labels repeated.
fn pooled(latents: &[Matrix], labels: &[usize]) -> (Matrix, Vec<usize>) {
    let n = labels.len();
    let d = latents[0].nrows();
    let mut all = Matrix::zeros(d, n * latents.len());
    for (v, y) in latents.iter().enumerate() {
        all.columns_mut(v * n, n).copy_from(y);
    }
    let labels = latents.iter().flat_map(|_| labels.iter().copied()).collect();
    (all, labels)
}

/// Trains the probe on the training latents; `None` for unlabeled data.
pub fn build_probe(model: &Model, train: &Dataset) -> Result<Option<Probe>> {
    let Some(labels) = train.labels() else {
        return Ok(None);
    };
    let latents = model.project(train)?;
    let (all, all_labels) = pooled(&latents, labels);
    let matcher = fit_matcher(&all, &all_labels, &MatcherConfig::default())?;
    let c = all_labels.iter().copied().max().unwrap_or(0);
    let mut class_means = Matrix::zeros(all.nrows(), c);
    let mut counts = vec![0usize; c];
    for (i, &l) in all_labels.iter().enumerate() {
        let mut col = class_means.column_mut(l - 1);
        col += all.column(i);
        counts[l - 1] += 1;
    }
    for (k, &n) in counts.iter().enumerate() {
        if n > 0 {
            let mut col = class_means.column_mut(k);
            col /= n as f64;
        }
    }
    Ok(Some(Probe { matcher, class_means }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// One entry per ordered pair of distinct views.
    pub retrieval: Vec<RetrievalResult>,
    /// Each view's queries against a gallery described by the mean latent of
    /// all other views, gallery name `rest`.
    pub fused: Vec<RetrievalResult>,
    /// Nearest-class-mean accuracy per view, when a probe exists.
    pub accuracy: Vec<(String, f64)>,
    /// Nearest-class-mean accuracy of the mean latent over all views.
    pub fused_accuracy: Option<f64>,
}

impl Evaluation {
    pub fn direction(r: &RetrievalResult) -> String {
        format!("{}->{}", r.query, r.gallery)
    }

    /// Mean MAP over all directions.
    pub fn mean_map(&self) -> f64 {
        self.retrieval.iter().map(|r| r.map).sum::<f64>() / self.retrieval.len() as f64
    }
}

fn mean_of(latents: &[&Matrix]) -> Matrix {
    let mut sum = Matrix::zeros(latents[0].nrows(), latents[0].ncols());
    for y in latents {
        sum += *y;
    }
    sum / latents.len() as f64
}

/// Cross-modal retrieval between every ordered pair of views and against the
/// fused remaining views, plus recognition accuracy.
///
/// With a probe, items are compared through class probabilities; without
/// one, through the cosine of their latent features.
pub fn evaluate(model: &Model, probe: Option<&Probe>, data: &Dataset) -> Result<Evaluation> {
    let labels = data
        .labels()
        .ok_or_else(|| CliError::Usage("evaluation needs a labeled dataset".into()))?;
    if model.num_views() != data.num_views() {
        return Err(CliError::Usage(format!(
            "model has {} views but the dataset has {}",
            model.num_views(),
            data.num_views()
        )));
    }
    let latents = model.project(data)?;
    let names = data.view_names();
    let scores = |q: &Matrix, g: &Matrix| -> Result<Matrix> {
        Ok(match probe {
            Some(p) => match_scores(&p.matcher, q, g)?,
            None => probability_scores(q, g, Similarity::Cosine)?,
        })
    };
    let mut retrieval = Vec::new();
    let mut fused = Vec::new();
    for (i, qi) in latents.iter().enumerate() {
        for (j, gj) in latents.iter().enumerate() {
            if i != j {
                retrieval.push(retrieval_from_scores(&scores(qi, gj)?, labels, labels, &names[i], &names[j])?);
            }
        }
        let others: Vec<&Matrix> = latents.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, y)| y).collect();
        fused.push(retrieval_from_scores(&scores(qi, &mean_of(&others))?, labels, labels, &names[i], "rest")?);
    }
    let mut accuracy = Vec::new();
    let mut fused_accuracy = None;
    if let Some(p) = probe {
        let mean_labels: Vec<usize> = (1..=p.class_means.ncols()).collect();
        for (v, y) in latents.iter().enumerate() {
            let acc = nearest_class_mean_accuracy(&p.class_means, &mean_labels, y, labels)?;
            accuracy.push((names[v].clone(), acc));
        }
        let all: Vec<&Matrix> = latents.iter().collect();
        fused_accuracy = Some(nearest_class_mean_accuracy(&p.class_means, &mean_labels, &mean_of(&all), labels)?);
    }
    Ok(Evaluation {
        retrieval,
        fused,
        accuracy,
        fused_accuracy,
    })
}

/// Splits when a fraction is given, otherwise uses the data for both roles.
pub fn train_and_test(data: &Dataset, train_fraction: Option<f64>, seed: u64) -> Result<(Dataset, Dataset)> {
    match train_fraction {
        Some(f) => Ok(mvembed::data::split(data, f, seed)?),
        None => Ok((data.clone(), data.clone())),
    }
}
