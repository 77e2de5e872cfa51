//! Cross-modal retrieval and recognition metrics.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{Matrix, Vector};

pub const DEFAULT_MATCHER_ITERS: usize = 500;
pub const DEFAULT_MATCHER_LR: f64 = 0.1;
pub const DEFAULT_MATCHER_L2: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatcherConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub l2: f64,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        MatcherConfig {
            iterations: DEFAULT_MATCHER_ITERS,
            learning_rate: DEFAULT_MATCHER_LR,
            l2: DEFAULT_MATCHER_L2,
        }
    }
}

/// Multinomial logistic regression over standardized latent features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matcher {
    /// (d + 1) × C, last row is the bias.
    #[serde(with = "crate::serial::matrix")]
    pub weights: Matrix,
    #[serde(with = "crate::serial::vector")]
    pub feature_mean: Vector,
    #[serde(with = "crate::serial::vector")]
    pub feature_scale: Vector,
    pub config: MatcherConfig,
    /// Cross-entropy (with penalty) before the first and after every iteration.
    pub loss_history: Vec<f64>,
}

impl Matcher {
    pub fn num_classes(&self) -> usize {
        self.weights.ncols()
    }

    pub fn input_dim(&self) -> usize {
        self.weights.nrows() - 1
    }

    /// Class probabilities, C × N.
    pub fn probabilities(&self, latent: &Matrix) -> Result<Matrix> {
        if latent.nrows() != self.input_dim() {
            return invalid(format!(
                "matcher expects {}-dimensional latents, got {}",
                self.input_dim(),
                latent.nrows()
            ));
        }
        let z = augment(&standardize(latent, &self.feature_mean, &self.feature_scale));
        Ok(softmax_columns(&(self.weights.transpose() * z)))
    }
}

fn standardize(x: &Matrix, mean: &Vector, scale: &Vector) -> Matrix {
    Matrix::from_fn(x.nrows(), x.ncols(), |r, c| (x[(r, c)] - mean[r]) / scale[r])
}

/// Appends a row of ones.
fn augment(x: &Matrix) -> Matrix {
    let mut z = x.clone().insert_row(x.nrows(), 1.0);
    z.row_mut(x.nrows()).fill(1.0);
    z
}

fn softmax_columns(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for mut col in out.column_iter_mut() {
        let m = col.max();
        col.apply(|v| *v = (*v - m).exp());
        let s = col.sum();
        col /= s;
    }
    out
}

fn penalized_loss(w: &Matrix, z: &Matrix, onehot: &Matrix, l2: f64) -> (f64, Matrix) {
    let n = z.ncols() as f64;
    let probs = softmax_columns(&(w.transpose() * z));
    let ce: f64 = probs
        .iter()
        .zip(onehot.iter())
        .filter(|(_, &t)| t > 0.0)
        .map(|(&p, _)| -p.max(f64::MIN_POSITIVE).ln())
        .sum::<f64>()
        / n;
    let d = w.nrows() - 1;
    let reg = 0.5 * l2 * w.rows(0, d).norm_squared();
    (ce + reg, probs)
}

/// Fits the matcher by full-batch gradient descent on cross-entropy.
///
/// A step that would raise the loss is retried at half the step size, so the
/// recorded loss never increases.
pub fn fit_matcher(latent: &Matrix, labels: &[usize], cfg: &MatcherConfig) -> Result<Matcher> {
    let n = latent.ncols();
    if labels.len() != n {
        return invalid(format!("{} labels for {n} latent samples", labels.len()));
    }
    if labels.contains(&0) {
        return invalid("labels must be 1-based");
    }
    let c = labels.iter().copied().max().unwrap_or(0);
    let distinct = {
        let mut l = labels.to_vec();
        l.sort_unstable();
        l.dedup();
        l.len()
    };
    if distinct < 2 {
        return invalid("the matcher needs at least two classes");
    }
    if n < c {
        return invalid(format!("{n} samples cannot cover {c} classes"));
    }
    if !(cfg.learning_rate > 0.0 && cfg.learning_rate.is_finite()) || cfg.l2 < 0.0 {
        return invalid("matcher learning rate must be positive and l2 non-negative");
    }

    let feature_mean = crate::linalg::row_means(latent);
    let feature_scale = Vector::from_iterator(
        latent.nrows(),
        latent.row_iter().enumerate().map(|(r, row)| {
            let var = row.iter().map(|v| (v - feature_mean[r]).powi(2)).sum::<f64>() / n as f64;
            if var > 1e-24 {
                var.sqrt()
            } else {
                1.0
            }
        }),
    );
    let z = augment(&standardize(latent, &feature_mean, &feature_scale));
    let mut onehot = Matrix::zeros(c, n);
    for (i, &l) in labels.iter().enumerate() {
        onehot[(l - 1, i)] = 1.0;
    }

    let d = latent.nrows();
    let mut w = Matrix::zeros(d + 1, c);
    let (mut loss, mut probs) = penalized_loss(&w, &z, &onehot, cfg.l2);
    let mut history = vec![loss];
    let mut lr = cfg.learning_rate;
    for _ in 0..cfg.iterations {
        let mut grad = &z * (&probs - &onehot).transpose() / n as f64;
        let penalty = w.rows(0, d) * cfg.l2;
        grad.rows_mut(0, d).zip_apply(&penalty, |g, p| *g += p);
        let mut accepted = false;
        for _ in 0..30 {
            let candidate = &w - &grad * lr;
            let (cand_loss, cand_probs) = penalized_loss(&candidate, &z, &onehot, cfg.l2);
            if cand_loss <= loss {
                w = candidate;
                loss = cand_loss;
                probs = cand_probs;
                accepted = true;
                break;
            }
            lr *= 0.5;
        }
        history.push(loss);
        if !accepted {
            break;
        }
    }
    Ok(Matcher {
        weights: w,
        feature_mean,
        feature_scale,
        config: *cfg,
        loss_history: history,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Similarity {
    #[default]
    Cosine,
    Dot,
}

/// Similarity between the columns of two probability matrices, queries × gallery.
pub fn probability_scores(query: &Matrix, gallery: &Matrix, sim: Similarity) -> Result<Matrix> {
    if query.nrows() != gallery.nrows() {
        return invalid("query and gallery probabilities have different class counts");
    }
    let dots = query.transpose() * gallery;
    Ok(match sim {
        Similarity::Dot => dots,
        Similarity::Cosine => {
            let qn: Vec<f64> = query.column_iter().map(|c| c.norm()).collect();
            let gn: Vec<f64> = gallery.column_iter().map(|c| c.norm()).collect();
            Matrix::from_fn(dots.nrows(), dots.ncols(), |i, j| {
                let denom = qn[i] * gn[j];
                if denom > 0.0 {
                    dots[(i, j)] / denom
                } else {
                    0.0
                }
            })
        }
    })
}

/// Cosine similarity of class-probability vectors, queries × gallery.
pub fn match_scores(m: &Matcher, query: &Matrix, gallery: &Matrix) -> Result<Matrix> {
    probability_scores(&m.probabilities(query)?, &m.probabilities(gallery)?, Similarity::Cosine)
}

/// Mean over relevant ranks `k` of the precision at `k`.
pub fn average_precision(relevance: &[bool]) -> Result<f64> {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, &rel) in relevance.iter().enumerate() {
        if rel {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    if hits == 0 {
        return Err(Error::UndefinedAp);
    }
    Ok(sum / hits as f64)
}

/// Interpolated precision at recall 0.0, 0.1, …, 1.0.
pub fn pr_curve_11pt(relevance: &[bool]) -> Result<[f64; 11]> {
    let total = relevance.iter().filter(|&&r| r).count();
    if total == 0 {
        return Err(Error::UndefinedAp);
    }
    let mut points = Vec::with_capacity(relevance.len());
    let mut hits = 0usize;
    for (k, &rel) in relevance.iter().enumerate() {
        if rel {
            hits += 1;
        }
        points.push((hits as f64 / total as f64, hits as f64 / (k + 1) as f64));
    }
    let mut curve = [0.0; 11];
    for (i, slot) in curve.iter_mut().enumerate() {
        let level = i as f64 / 10.0;
        *slot = points
            .iter()
            .filter(|(r, _)| *r >= level - 1e-12)
            .map(|&(_, p)| p)
            .fold(0.0, f64::max);
    }
    Ok(curve)
}

/// Gallery indices by descending score; equal scores keep index order.
pub fn rank(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal));
    order
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub query: String,
    pub gallery: String,
    pub ap: Vec<f64>,
    pub map: f64,
    pub curve: Vec<f64>,
}

/// Ranks the gallery for every query row of `scores`; relevance is label equality.
pub fn retrieval_from_scores(
    scores: &Matrix,
    query_labels: &[usize],
    gallery_labels: &[usize],
    query: &str,
    gallery: &str,
) -> Result<RetrievalResult> {
    if scores.nrows() != query_labels.len() || scores.ncols() != gallery_labels.len() {
        return invalid("score matrix does not match label counts");
    }
    if scores.nrows() == 0 {
        return invalid("no queries");
    }
    let mut ap = Vec::with_capacity(scores.nrows());
    let mut curve = [0.0; 11];
    for (q, &ql) in query_labels.iter().enumerate() {
        let row: Vec<f64> = scores.row(q).iter().copied().collect();
        let relevance: Vec<bool> = rank(&row).into_iter().map(|g| gallery_labels[g] == ql).collect();
        ap.push(average_precision(&relevance)?);
        for (acc, p) in curve.iter_mut().zip(pr_curve_11pt(&relevance)?) {
            *acc += p;
        }
    }
    let nq = ap.len() as f64;
    Ok(RetrievalResult {
        query: query.to_string(),
        gallery: gallery.to_string(),
        map: ap.iter().sum::<f64>() / nq,
        curve: curve.iter().map(|c| c / nq).collect(),
        ap,
    })
}

/// Every query latent retrieves from the full gallery of the other modality.
pub fn run_cross_modal(
    matcher: &Matcher,
    query_latent: &Matrix,
    gallery_latent: &Matrix,
    labels: &[usize],
    query: &str,
    gallery: &str,
) -> Result<RetrievalResult> {
    let scores = match_scores(matcher, query_latent, gallery_latent)?;
    retrieval_from_scores(&scores, labels, labels, query, gallery)
}

/// Accuracy of assigning each test column to the nearest training class mean.
///
/// Ties go to the lower class index.
pub fn nearest_class_mean_accuracy(
    train: &Matrix,
    train_labels: &[usize],
    test: &Matrix,
    test_labels: &[usize],
) -> Result<f64> {
    if train.nrows() != test.nrows() {
        return invalid("train and test latents differ in dimension");
    }
    if train_labels.len() != train.ncols() || test_labels.len() != test.ncols() {
        return invalid("label counts do not match latent columns");
    }
    if test.ncols() == 0 {
        return invalid("empty test set");
    }
    let c = train_labels.iter().copied().max().unwrap_or(0);
    if c == 0 || train_labels.contains(&0) {
        return invalid("training labels must be 1-based and non-empty");
    }
    let mut means = Matrix::zeros(train.nrows(), c);
    let mut counts = vec![0usize; c];
    for (i, &l) in train_labels.iter().enumerate() {
        let mut col = means.column_mut(l - 1);
        col += train.column(i);
        counts[l - 1] += 1;
    }
    for (k, &n) in counts.iter().enumerate() {
        if n == 0 {
            return invalid(format!("class {} has no training samples", k + 1));
        }
        let mut col = means.column_mut(k);
        col /= n as f64;
    }
    let correct = test
        .column_iter()
        .zip(test_labels)
        .filter(|(x, &l)| {
            let mut best = (f64::INFINITY, 0);
            for k in 0..c {
                let dist = (x - means.column(k)).norm_squared();
                if dist < best.0 {
                    best = (dist, k + 1);
                }
            }
            best.1 == l
        })
        .count();
    Ok(correct as f64 / test.ncols() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ap_hand_values() {
        let ap = average_precision(&[true, false, true]).unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        assert_eq!(average_precision(&[true, true, true]).unwrap(), 1.0);
        assert!((average_precision(&[false, false, true]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(matches!(average_precision(&[false, false]), Err(Error::UndefinedAp)));
    }

    #[test]
    fn curve_hand_values() {
        assert_eq!(pr_curve_11pt(&[true, true]).unwrap(), [1.0; 11]);
        let c = pr_curve_11pt(&[false, true]).unwrap();
        assert_eq!(c[0], 0.5);
        assert!(pr_curve_11pt(&[]).is_err());
    }

    #[test]
    fn separable_data_is_learned() {
        let x = Matrix::from_row_slice(1, 6, &[-3.0, -2.0, -1.0, 1.0, 2.0, 3.0]);
        let labels = [1, 1, 1, 2, 2, 2];
        let m = fit_matcher(&x, &labels, &MatcherConfig::default()).unwrap();
        let p = m.probabilities(&x).unwrap();
        for (i, &l) in labels.iter().enumerate() {
            let pred = if p[(0, i)] > p[(1, i)] { 1 } else { 2 };
            assert_eq!(pred, l);
        }
        assert!(m.loss_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn zero_iterations_give_uniform_probabilities() {
        let x = Matrix::from_row_slice(2, 4, &[1.0, 2.0, 3.0, 4.0, 0.0, 1.0, 0.0, 1.0]);
        let cfg = MatcherConfig { iterations: 0, ..MatcherConfig::default() };
        let m = fit_matcher(&x, &[1, 2, 3, 1], &cfg).unwrap();
        let p = m.probabilities(&x).unwrap();
        assert!(p.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn single_class_is_rejected() {
        let x = Matrix::from_element(1, 3, 1.0);
        assert!(fit_matcher(&x, &[1, 1, 1], &MatcherConfig::default()).is_err());
    }

    #[test]
    fn cosine_scores() {
        let a = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let s = probability_scores(&a, &a, Similarity::Cosine).unwrap();
        assert_eq!(s, Matrix::identity(2, 2));
        let b = Matrix::from_row_slice(2, 3, &[0.3, 0.5, 0.2, 0.7, 0.5, 0.8]);
        let s = probability_scores(&a, &b, Similarity::Cosine).unwrap();
        assert_eq!(s.shape(), (2, 3));
    }

    #[test]
    fn perfect_matching_map_is_one() {
        let probs = Matrix::from_row_slice(2, 4, &[0.9, 0.8, 0.1, 0.2, 0.1, 0.2, 0.9, 0.8]);
        let s = probability_scores(&probs, &probs, Similarity::Cosine).unwrap();
        let r = retrieval_from_scores(&s, &[1, 1, 2, 2], &[1, 1, 2, 2], "a", "b").unwrap();
        assert_eq!(r.map, 1.0);
        assert_eq!(r.curve, vec![1.0; 11]);
    }

    #[test]
    fn ties_rank_by_index() {
        assert_eq!(rank(&[0.5, 0.9, 0.5, 0.9]), vec![1, 3, 0, 2]);
    }

    #[test]
    fn nearest_mean_ties_go_low() {
        let train = Matrix::from_row_slice(1, 2, &[-1.0, 1.0]);
        let test = Matrix::from_row_slice(1, 1, &[0.0]);
        assert_eq!(nearest_class_mean_accuracy(&train, &[1, 2], &test, &[1]).unwrap(), 1.0);
        assert_eq!(nearest_class_mean_accuracy(&train, &[1, 2], &test, &[2]).unwrap(), 0.0);
        assert_eq!(nearest_class_mean_accuracy(&train, &[1, 2], &train, &[1, 2]).unwrap(), 1.0);
        assert!(nearest_class_mean_accuracy(&train, &[1, 3], &test, &[1]).is_err());
    }
}
