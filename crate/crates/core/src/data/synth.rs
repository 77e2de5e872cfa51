//! Shared-latent multi-view generator with recorded ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{invalid, Result};
use crate::linalg::Matrix;

/// Elementwise nonlinearity applied to each view after mixing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Squash {
    /// `tanh(gain · a)`
    Tanh { gain: f64 },
    /// `sin(gain · a)`
    Sine { gain: f64 },
}

impl Squash {
    fn apply(self, a: f64) -> f64 {
        match self {
            Squash::Tanh { gain } => (gain * a).tanh(),
            Squash::Sine { gain } => (gain * a).sin(),
        }
    }

    fn gain(self) -> f64 {
        match self {
            Squash::Tanh { gain } | Squash::Sine { gain } => gain,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    /// Features per view; its length is the view count.
    pub dims: Vec<usize>,
    /// Latent dimension.
    pub k: usize,
    /// Standard deviation of the additive observation noise.
    pub noise: f64,
    /// Class count; 0 leaves the data unlabeled.
    pub classes: usize,
    /// Standard deviation of the class mean offsets in latent space.
    pub separation: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub squash: Option<Squash>,
}

impl SynthSpec {
    pub fn new(n: usize, dims: Vec<usize>, k: usize) -> Self {
        SynthSpec {
            n,
            dims,
            k,
            noise: 0.1,
            classes: 0,
            separation: 3.0,
            seed: 0,
            squash: None,
        }
    }

    pub fn num_views(&self) -> usize {
        self.dims.len()
    }

    fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return invalid("synthetic data needs at least two samples");
        }
        if self.dims.len() < 2 || self.dims.contains(&0) {
            return invalid("synthetic data needs at least two views of positive dimension");
        }
        if self.k == 0 {
            return invalid("latent dimension must be positive");
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return invalid("noise must be finite and non-negative");
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return invalid("class separation must be finite and non-negative");
        }
        if self.classes == 1 || self.classes > self.n {
            return invalid(format!("cannot draw {} classes over {} samples", self.classes, self.n));
        }
        if let Some(s) = self.squash {
            if !(s.gain() > 0.0 && s.gain().is_finite()) {
                return invalid("squash gain must be positive");
            }
        }
        Ok(())
    }
}

/// Everything the generator drew.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: SynthSpec,
    /// `A_v`, D_v × k.
    #[serde(with = "crate::serial::matrices")]
    pub mixing: Vec<Matrix>,
    /// k × C, empty when unlabeled.
    #[serde(with = "crate::serial::matrix")]
    pub class_means: Matrix,
    /// k × N.
    #[serde(with = "crate::serial::matrix")]
    pub latents: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub dataset: Dataset,
    pub truth: GroundTruth,
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    // Column-major fill order keeps the stream layout fixed.
    Matrix::from_fn(rows, cols, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

/// Draws `x_v = A_v z + ε` (optionally squashed) for every view.
pub fn synth_generate(spec: &SynthSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (n, k, c) = (spec.n, spec.k, spec.classes);
    let mixing: Vec<Matrix> = spec
        .dims
        .iter()
        .map(|&d| gaussian(&mut rng, d, k, 1.0 / (k as f64).sqrt()))
        .collect();
    let class_means = gaussian(&mut rng, k, c, spec.separation);
    let labels: Option<Vec<usize>> = (c > 0).then(|| (0..n).map(|i| i % c + 1).collect());
    let mut latents = gaussian(&mut rng, k, n, 1.0);
    if let Some(l) = &labels {
        for (i, &label) in l.iter().enumerate() {
            let mut col = latents.column_mut(i);
            col += class_means.column(label - 1);
        }
    }
    let views = mixing
        .iter()
        .map(|a| {
            let mut x = a * &latents;
            if let Some(s) = spec.squash {
                x.apply(|v| *v = s.apply(*v));
            }
            x + gaussian(&mut rng, a.nrows(), n, spec.noise)
        })
        .collect();
    let dataset = Dataset::new(views, labels)?;
    Ok(SynthOutput {
        dataset,
        truth: GroundTruth {
            spec: spec.clone(),
            mixing,
            class_means,
            latents,
        },
    })
}
