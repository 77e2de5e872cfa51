//! Datasets, splitting, synthetic generation and file formats.

mod io;
mod model_io;
mod synth;

pub use io::{load_dataset, write_csv_matrix, write_labels, Manifest, ViewEntry, MANIFEST_VERSION};
pub use model_io::{load_model, save_model, Model, ModelDocument, MODEL_VERSION};
pub use synth::{synth_generate, GroundTruth, Squash, SynthOutput, SynthSpec};

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::linalg::Matrix;

/// `V` views of the same `N` samples, each stored features × samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    views: Vec<Matrix>,
    labels: Option<Vec<usize>>,
    view_names: Vec<String>,
    /// Original label value for each contiguous label `1..=C`.
    label_values: Option<Vec<i64>>,
}

impl Dataset {
    /// Builds a dataset; labels, when given, must already be in `1..=C`.
    pub fn new(views: Vec<Matrix>, labels: Option<Vec<usize>>) -> Result<Self> {
        let names = (0..views.len()).map(|v| format!("view{v}")).collect();
        Self::with_names(views, labels, names)
    }

    pub fn with_names(
        views: Vec<Matrix>,
        labels: Option<Vec<usize>>,
        view_names: Vec<String>,
    ) -> Result<Self> {
        if views.len() < 2 {
            return invalid(format!("a dataset needs at least two views, got {}", views.len()));
        }
        if view_names.len() != views.len() {
            return invalid("one name per view is required");
        }
        let n = views[0].ncols();
        for (v, x) in views.iter().enumerate().skip(1) {
            if x.ncols() != n {
                return Err(Error::SampleMismatch {
                    first: view_names[0].clone(),
                    first_n: n,
                    second: view_names[v].clone(),
                    second_n: x.ncols(),
                });
            }
        }
        for (v, x) in views.iter().enumerate() {
            if x.nrows() == 0 {
                return invalid(format!("view `{}` has no features", view_names[v]));
            }
            if x.iter().any(|e| !e.is_finite()) {
                return invalid(format!("view `{}` contains non-finite values", view_names[v]));
            }
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return invalid(format!("{} labels for {n} samples", l.len()));
            }
            if l.contains(&0) {
                return invalid("labels must be 1-based");
            }
        }
        Ok(Dataset {
            views,
            labels,
            view_names,
            label_values: None,
        })
    }

    pub(crate) fn with_label_values(mut self, values: Vec<i64>) -> Self {
        self.label_values = Some(values);
        self
    }

    pub fn views(&self) -> &[Matrix] {
        &self.views
    }

    pub fn view(&self, v: usize) -> &Matrix {
        &self.views[v]
    }

    pub fn num_views(&self) -> usize {
        self.views.len()
    }

    pub fn num_samples(&self) -> usize {
        self.views[0].ncols()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.views.iter().map(|x| x.nrows()).collect()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn view_names(&self) -> &[String] {
        &self.view_names
    }

    /// Original label values, when labels were remapped at load time.
    pub fn label_values(&self) -> Option<&[i64]> {
        self.label_values.as_deref()
    }

    /// Samples at `indices`, in that order, across all views.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let n = self.num_samples();
        if let Some(bad) = indices.iter().find(|&&i| i >= n) {
            return invalid(format!("sample index {bad} out of range for {n} samples"));
        }
        let views = self
            .views
            .iter()
            .map(|x| x.select_columns(indices.iter()))
            .collect();
        let labels = self
            .labels
            .as_ref()
            .map(|l| indices.iter().map(|&i| l[i]).collect());
        Ok(Dataset {
            views,
            labels,
            view_names: self.view_names.clone(),
            label_values: self.label_values.clone(),
        })
    }

    /// Keeps only the listed views.
    pub fn select_views(&self, which: &[usize]) -> Result<Dataset> {
        if which.len() < 2 || which.iter().any(|&v| v >= self.num_views()) {
            return invalid("view selection out of range");
        }
        Ok(Dataset {
            views: which.iter().map(|&v| self.views[v].clone()).collect(),
            labels: self.labels.clone(),
            view_names: which.iter().map(|&v| self.view_names[v].clone()).collect(),
            label_values: self.label_values.clone(),
        })
    }

    pub fn without_labels(&self) -> Dataset {
        Dataset {
            labels: None,
            label_values: None,
            ..self.clone()
        }
    }
}

/// Index sets produced by [`split_indices`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Seeded train/validation partition, stratified by class when labels exist.
pub fn split_indices(data: &Dataset, train_fraction: f64, seed: u64) -> Result<SplitIndices> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return invalid(format!("train fraction must lie in (0, 1), got {train_fraction}"));
    }
    let n = data.num_samples();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut in_train = vec![false; n];
    match data.labels() {
        None => {
            let k = (train_fraction * n as f64).round() as usize;
            for &i in order.iter().take(k) {
                in_train[i] = true;
            }
        }
        Some(labels) => {
            let classes = labels.iter().copied().max().unwrap_or(0);
            for c in 1..=classes {
                let members: Vec<usize> = order.iter().copied().filter(|&i| labels[i] == c).collect();
                if members.is_empty() {
                    continue;
                }
                let mut k = (train_fraction * members.len() as f64).round() as usize;
                if members.len() == 1 {
                    warn!("class {c} has a single sample; keeping it in the training split");
                    k = 1;
                }
                for &i in members.iter().take(k) {
                    in_train[i] = true;
                }
            }
        }
    }
    let (train, validation) = order.iter().partition(|&&i| in_train[i]);
    Ok(SplitIndices { train, validation })
}

/// Splits into `(train, validation)` datasets.
pub fn split(data: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let idx = split_indices(data, train_fraction, seed)?;
    Ok((data.subset(&idx.train)?, data.subset(&idx.validation)?))
}
