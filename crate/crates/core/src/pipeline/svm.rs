//! Linear L2-SVM (squared hinge, one-vs-rest) trained with a deterministic
//! batch gradient method.
//!
//! Columns with variance below the cutoff are dropped; the remainder are
//! normalized to zero mean and unit variance before training. The objective
//! per class is `(1/C) |w|^2 + mean_i max(0, 1 - y_i (w.x_i + b))^2`, solved
//! jointly for all classes with a Lipschitz step and a halving safeguard, so
//! the objective never increases between iterations.

use ndarray::{Array1, Array2, Axis};

use super::PipelineError;

/// Trained one-vs-rest linear model with its column preprocessing.
#[derive(Debug, Clone)]
pub struct LinearModel {
    /// Weights over retained columns, shape (kept_features, classes).
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    /// Per-retained-column normalization statistics.
    pub mean: Array1<f64>,
    pub stddev: Array1<f64>,
    /// `mask[j]` is true iff original column `j` was retained.
    pub mask: Vec<bool>,
    pub n_classes: usize,
    /// Objective value after each iteration (non-increasing).
    pub objective_trace: Vec<f64>,
}

impl LinearModel {
    /// Project raw features onto the retained, normalized columns.
    fn preprocess(&self, features: &Array2<f64>) -> Array2<f64> {
        let kept: Vec<usize> = self
            .mask
            .iter()
            .enumerate()
            .filter_map(|(j, &m)| if m { Some(j) } else { None })
            .collect();
        let mut out = Array2::<f64>::zeros((features.nrows(), kept.len()));
        for (col, &j) in kept.iter().enumerate() {
            for i in 0..features.nrows() {
                out[(i, col)] = (features[(i, j)] - self.mean[col]) / self.stddev[col];
            }
        }
        out
    }

    /// Predicted class per row.
    pub fn predict(&self, features: &Array2<f64>) -> Vec<usize> {
        let x = self.preprocess(features);
        let scores = x.dot(&self.weights) + &self.bias;
        scores
            .rows()
            .into_iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .map(|(i, _)| i)
                    .unwrap_or(0)
            })
            .collect()
    }

    /// Fraction of rows whose prediction differs from the label.
    pub fn error_rate(&self, features: &Array2<f64>, labels: &[usize]) -> f64 {
        let pred = self.predict(features);
        let wrong = pred.iter().zip(labels).filter(|(p, l)| p != l).count();
        wrong as f64 / labels.len().max(1) as f64
    }
}

const GRAD_TOL: f64 = 1e-5;
const MAX_ITERS: usize = 500;

/// Train a one-vs-rest squared-hinge linear SVM.
pub fn train_linear_svm(
    features: &Array2<f64>,
    labels: &[usize],
    c_reg: f64,
    var_cutoff: f64,
) -> Result<LinearModel, PipelineError> {
    let (n, _) = features.dim();
    if n != labels.len() {
        return Err(PipelineError::Shape(format!(
            "{n} rows but {} labels",
            labels.len()
        )));
    }
    if !(c_reg > 0.0) {
        return Err(PipelineError::Param(format!("C must be > 0, got {c_reg}")));
    }
    if !(var_cutoff >= 0.0) {
        return Err(PipelineError::Param(format!("variance cutoff must be >= 0, got {var_cutoff}")));
    }
    let n_classes = labels.iter().max().map(|m| m + 1).unwrap_or(0);
    if n_classes < 2 {
        return Err(PipelineError::Degenerate("training requires at least 2 classes".into()));
    }

    // column selection and normalization
    let mean_all = features.mean_axis(Axis(0)).expect("n >= 1");
    let var_all: Array1<f64> = features
        .axis_iter(Axis(1))
        .zip(&mean_all)
        .map(|(col, &m)| col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64)
        .collect();
    let mask: Vec<bool> = var_all.iter().map(|&v| v >= var_cutoff && v > 0.0).collect();
    let kept: Vec<usize> = mask
        .iter()
        .enumerate()
        .filter_map(|(j, &m)| if m { Some(j) } else { None })
        .collect();
    if kept.is_empty() {
        return Err(PipelineError::Degenerate(
            "variance cutoff dropped every feature column".into(),
        ));
    }
    let mut x = Array2::<f64>::zeros((n, kept.len()));
    let mut mean = Array1::<f64>::zeros(kept.len());
    let mut stddev = Array1::<f64>::zeros(kept.len());
    for (col, &j) in kept.iter().enumerate() {
        mean[col] = mean_all[j];
        stddev[col] = var_all[j].sqrt();
        for i in 0..n {
            x[(i, col)] = (features[(i, j)] - mean[col]) / stddev[col];
        }
    }

    // one-vs-rest targets in {-1, +1}
    let mut y = Array2::<f64>::from_elem((n, n_classes), -1.0);
    for (i, &l) in labels.iter().enumerate() {
        y[(i, l)] = 1.0;
    }

    let dk = kept.len();
    let mut w = Array2::<f64>::zeros((dk, n_classes));
    let mut b = Array1::<f64>::zeros(n_classes);

    let objective = |w: &Array2<f64>, b: &Array1<f64>| -> f64 {
        let margins = x.dot(w) + b;
        let mut hinge = 0.0;
        for ((i, c), &m) in margins.indexed_iter() {
            let h = (1.0 - y[(i, c)] * m).max(0.0);
            hinge += h * h;
        }
        hinge / n as f64 + w.iter().map(|v| v * v).sum::<f64>() / c_reg
    };

    // Lipschitz bound via power iteration on [X 1]^T [X 1]
    let sigma = {
        let mut v = Array1::<f64>::from_elem(dk + 1, 1.0 / ((dk + 1) as f64).sqrt());
        let mut sigma = 1.0;
        for _ in 0..20 {
            let xv = x.dot(&v.slice(ndarray::s![..dk])) + v[dk];
            let mut next = x.t().dot(&xv).to_vec();
            next.push(xv.sum());
            let next = Array1::from_vec(next);
            sigma = next.dot(&next).sqrt().max(1e-12);
            v = next / sigma;
        }
        sigma
    };
    let lipschitz = 2.0 * sigma / n as f64 + 2.0 / c_reg;
    let mut step = 1.0 / lipschitz;

    let mut trace = vec![objective(&w, &b)];
    for _ in 0..MAX_ITERS {
        let margins = x.dot(&w) + &b;
        let mut grad_m = Array2::<f64>::zeros((n, n_classes));
        for ((i, c), &m) in margins.indexed_iter() {
            let h = (1.0 - y[(i, c)] * m).max(0.0);
            grad_m[(i, c)] = -2.0 * y[(i, c)] * h / n as f64;
        }
        let grad_w = x.t().dot(&grad_m) + &(w.mapv(|v| v * 2.0 / c_reg));
        let grad_b = grad_m.sum_axis(Axis(0));
        let grad_norm = (grad_w.iter().map(|v| v * v).sum::<f64>()
            + grad_b.iter().map(|v| v * v).sum::<f64>())
        .sqrt();
        if grad_norm <= GRAD_TOL {
            break;
        }
        // halving safeguard keeps the objective non-increasing
        let current = *trace.last().expect("seeded");
        let mut accepted = false;
        for _ in 0..40 {
            let w_try = &w - &(grad_w.mapv(|v| v * step));
            let b_try = &b - &(grad_b.mapv(|v| v * step));
            let f_try = objective(&w_try, &b_try);
            if f_try <= current {
                w = w_try;
                b = b_try;
                trace.push(f_try);
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    Ok(LinearModel {
        weights: w,
        bias: b,
        mean,
        stddev,
        mask,
        n_classes,
        objective_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn separable_two_class_reaches_perfect_training_accuracy() {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..20 {
            let t = i as f64 / 19.0;
            rows.push([t, 5.0 + t]);
            labels.push(0usize);
            rows.push([t + 0.5, -5.0 - t]);
            labels.push(1usize);
        }
        let features = Array2::from_shape_fn((rows.len(), 2), |(i, j)| rows[i][j]);
        let model = train_linear_svm(&features, &labels, 1.0, 0.0).unwrap();
        assert_eq!(model.error_rate(&features, &labels), 0.0);
    }

    #[test]
    fn constant_column_dropped_by_cutoff() {
        let mut features = Array2::<f64>::zeros((8, 3));
        for i in 0..8 {
            features[(i, 0)] = 7.0; // constant
            features[(i, 1)] = i as f64;
            features[(i, 2)] = if i % 2 == 0 { 1.0 } else { -1.0 };
        }
        let labels: Vec<usize> = (0..8).map(|i| i % 2).collect();
        let model = train_linear_svm(&features, &labels, 1.0, 1e-6).unwrap();
        assert_eq!(model.mask, vec![false, true, true]);
        assert_eq!(model.weights.nrows(), 2);
    }

    #[test]
    fn gaussian_blobs_three_classes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let centers = [[0.0, 0.0], [5.0, 0.0], [0.0, 5.0]];
        let mut train = Vec::new();
        let mut train_labels = Vec::new();
        let mut held = Vec::new();
        let mut held_labels = Vec::new();
        for (c, center) in centers.iter().enumerate() {
            for i in 0..150 {
                let p = [
                    center[0] + <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng),
                    center[1] + <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng),
                ];
                if i < 100 {
                    train.push(p);
                    train_labels.push(c);
                } else {
                    held.push(p);
                    held_labels.push(c);
                }
            }
        }
        let train_x = Array2::from_shape_fn((train.len(), 2), |(i, j)| train[i][j]);
        let held_x = Array2::from_shape_fn((held.len(), 2), |(i, j)| held[i][j]);
        let model = train_linear_svm(&train_x, &train_labels, 1.0, 0.0).unwrap();
        let acc = 1.0 - model.error_rate(&held_x, &held_labels);
        assert!(acc >= 0.95, "held-out accuracy {acc}");
    }

    #[test]
    fn objective_is_monotone_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let features = Array2::from_shape_fn((60, 5), |_| {
            <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
        });
        let labels: Vec<usize> = (0..60).map(|i| i % 3).collect();
        let model = train_linear_svm(&features, &labels, 10.0, 0.0).unwrap();
        assert!(model
            .objective_trace
            .windows(2)
            .all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn degenerate_inputs_rejected() {
        let features = Array2::<f64>::zeros((4, 2));
        assert!(matches!(
            train_linear_svm(&features, &[0, 0, 0, 0], 1.0, 0.0),
            Err(PipelineError::Degenerate(_))
        ));
        // every column constant -> all dropped
        let labels = vec![0, 1, 0, 1];
        assert!(matches!(
            train_linear_svm(&features, &labels, 1.0, 0.5),
            Err(PipelineError::Degenerate(_))
        ));
    }
}
