//! Class indicators and the graph Laplacians that define every scatter.
//!
//! Each builder returns a dense `N × N` matrix `L` such that a view's scatter
//! is `X L Xᵀ`. Labels are 1-based and must cover `1..=C` without gaps.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{is_symmetric, Matrix, Vector, SYMMETRY_TOL};

/// Class membership of `N` samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassIndicators {
    labels: Vec<usize>,
    counts: Vec<usize>,
}

impl ClassIndicators {
    pub fn num_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    /// 1-based labels.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Samples per class, indexed by `label - 1`.
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// Binary indicator `e_c` for class `c` (1-based).
    pub fn vector(&self, class: usize) -> Vector {
        Vector::from_iterator(
            self.labels.len(),
            self.labels.iter().map(|&l| if l == class { 1.0 } else { 0.0 }),
        )
    }

    /// Count of the class of sample `i`.
    fn count_of(&self, i: usize) -> f64 {
        self.counts[self.labels[i] - 1] as f64
    }

    fn same_class(&self, a: usize, b: usize) -> bool {
        self.labels[a] == self.labels[b]
    }

    fn require_two_classes(&self, what: &str) -> Result<()> {
        if self.num_classes() < 2 {
            return invalid(format!("{what} needs at least two classes"));
        }
        Ok(())
    }
}

/// Builds indicators from labels in `1..=C`.
pub fn class_indicators(labels: &[usize]) -> Result<ClassIndicators> {
    if labels.is_empty() {
        return invalid("label list is empty");
    }
    if labels.contains(&0) {
        return invalid("labels are 1-based; found 0");
    }
    let classes = *labels.iter().max().unwrap_or(&0);
    let mut counts = vec![0usize; classes];
    for &l in labels {
        counts[l - 1] += 1;
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return invalid(format!("class {} has no members", empty + 1));
    }
    Ok(ClassIndicators {
        labels: labels.to_vec(),
        counts,
    })
}

fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Matrix {
    Matrix::from_fn(n, n, f)
}

/// Centering Laplacian `I - (1/N) e eᵀ`.
pub fn laplacian_total(n: usize) -> Result<Matrix> {
    if n == 0 {
        return invalid("laplacian_total needs at least one sample");
    }
    let inv = 1.0 / n as f64;
    Ok(from_fn(n, |a, b| if a == b { 1.0 - inv } else { -inv }))
}

/// Within-class Laplacian `L_W = I - Σ_c (1/N_c) e_c e_cᵀ`.
pub fn laplacian_within(ind: &ClassIndicators) -> Matrix {
    from_fn(ind.num_samples(), |a, b| {
        let delta = if a == b { 1.0 } else { 0.0 };
        let member = if ind.same_class(a, b) {
            1.0 / ind.count_of(a)
        } else {
            0.0
        };
        delta - member
    })
}

/// Between-class Laplacian of the standard multi-view LDA extension.
///
/// The diagonal view block (`i = j`) is
/// `2 Σ_{p≠q} (V/N_p² e_p e_pᵀ - 1/(N_p N_q) e_p e_qᵀ)` and the off-diagonal
/// block is `-2 Σ_{p≠q} 1/(N_p N_q) e_p e_qᵀ`.
pub fn laplacian_between_standard(
    ind: &ClassIndicators,
    views: usize,
    diagonal_block: bool,
) -> Result<Matrix> {
    if views < 2 {
        return invalid(format!("between-class Laplacian needs V >= 2, got {views}"));
    }
    ind.require_two_classes("between-class Laplacian")?;
    let v = views as f64;
    let others = (ind.num_classes() - 1) as f64;
    Ok(from_fn(ind.num_samples(), |a, b| {
        let (na, nb) = (ind.count_of(a), ind.count_of(b));
        if ind.same_class(a, b) {
            if diagonal_block {
                2.0 * v * others / (na * na)
            } else {
                0.0
            }
        } else {
            -2.0 / (na * nb)
        }
    }))
}

/// Modular between-class Laplacian
/// `L'_B = 2 Σ_p Σ_q (1/N_p² e_p e_pᵀ - 1/(N_p N_q) e_p e_qᵀ)`.
///
/// The double sum runs over all class pairs; the `p = q` terms cancel.
pub fn laplacian_between_modular(ind: &ClassIndicators) -> Result<Matrix> {
    ind.require_two_classes("modular between-class Laplacian")?;
    let c = ind.num_classes() as f64;
    Ok(from_fn(ind.num_samples(), |a, b| {
        let (na, nb) = (ind.count_of(a), ind.count_of(b));
        let own = if ind.same_class(a, b) { c / (na * na) } else { 0.0 };
        2.0 * (own - 1.0 / (na * nb))
    }))
}

/// Which scatter of the MvDA baseline to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MvdaPart {
    Between,
    Within,
}

/// Kernel of the MvDA scatters: between is `Σ_c e_c e_cᵀ/N_c - e eᵀ/N`,
/// within is `I - Σ_c e_c e_cᵀ/N_c`.
pub fn laplacian_mvda(ind: &ClassIndicators, part: MvdaPart) -> Matrix {
    match part {
        MvdaPart::Within => laplacian_within(ind),
        MvdaPart::Between => {
            let inv_n = 1.0 / ind.num_samples() as f64;
            from_fn(ind.num_samples(), |a, b| {
                let member = if ind.same_class(a, b) {
                    1.0 / ind.count_of(a)
                } else {
                    0.0
                };
                member - inv_n
            })
        }
    }
}

/// Symmetric non-negative similarity graph with its degree vector.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightGraph {
    weights: Matrix,
    degrees: Vector,
}

impl WeightGraph {
    pub fn new(weights: Matrix) -> Result<Self> {
        if !is_symmetric(&weights, SYMMETRY_TOL) {
            return invalid("weight matrix must be square and symmetric");
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return invalid("weight matrix must have finite non-negative entries");
        }
        let degrees = Vector::from_iterator(weights.nrows(), weights.row_iter().map(|r| r.sum()));
        Ok(WeightGraph { weights, degrees })
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn degrees(&self) -> &Vector {
        &self.degrees
    }
}

/// Graph Laplacian `D - S`.
pub fn laplacian_from_weights(g: &WeightGraph) -> Matrix {
    Matrix::from_diagonal(&g.degrees) - &g.weights
}

/// Tag for each Laplacian builder.
#[derive(Debug, Clone, PartialEq)]
pub enum LaplacianKind {
    Total,
    Within,
    BetweenStandard { views: usize, diagonal_block: bool },
    BetweenModular,
    MvdaBetween,
    MvdaWithin,
    FromWeights(WeightGraph),
}

impl LaplacianKind {
    pub fn build(&self, ind: &ClassIndicators) -> Result<Matrix> {
        match self {
            LaplacianKind::Total => laplacian_total(ind.num_samples()),
            LaplacianKind::Within => Ok(laplacian_within(ind)),
            LaplacianKind::BetweenStandard {
                views,
                diagonal_block,
            } => laplacian_between_standard(ind, *views, *diagonal_block),
            LaplacianKind::BetweenModular => laplacian_between_modular(ind),
            LaplacianKind::MvdaBetween => Ok(laplacian_mvda(ind, MvdaPart::Between)),
            LaplacianKind::MvdaWithin => Ok(laplacian_mvda(ind, MvdaPart::Within)),
            LaplacianKind::FromWeights(g) => {
                if g.weights.nrows() != ind.num_samples() {
                    return invalid("weight graph size does not match sample count");
                }
                Ok(laplacian_from_weights(g))
            }
        }
    }
}
