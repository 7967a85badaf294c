//! ZCA whitening of flattened image patches.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};

use super::PipelineError;

/// Mean vector plus the symmetric whitening matrix
/// `E diag(1/sqrt(lambda + bandpass)) E^T` of the patch covariance.
#[derive(Debug, Clone)]
pub struct ZcaTransform {
    pub mean: Array1<f64>,
    pub whiten: Array2<f64>,
}

impl ZcaTransform {
    /// Whiten one flattened patch.
    pub fn apply(&self, patch: &Array1<f64>) -> Array1<f64> {
        let centered = patch - &self.mean;
        self.whiten.dot(&centered)
    }
}

/// Fit a whitening transform to flattened patches (one per row).
///
/// With `bandpass = 0` the whitened patches have covariance approaching the
/// identity; a positive `bandpass` damps the small-eigenvalue directions.
pub fn zca_fit(patches: &Array2<f64>, bandpass: f64) -> Result<ZcaTransform, PipelineError> {
    let (n, d) = patches.dim();
    if n < 2 || d < 1 {
        return Err(PipelineError::Param(format!(
            "zca requires >= 2 patches of dimension >= 1, got {n}x{d}"
        )));
    }
    if !(bandpass >= 0.0) {
        return Err(PipelineError::Param(format!("zca bandpass must be >= 0, got {bandpass}")));
    }
    let mean = patches.mean_axis(ndarray::Axis(0)).expect("n >= 2");
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for row in patches.rows() {
        let centered = DVector::from_iterator(d, row.iter().zip(&mean).map(|(v, m)| v - m));
        cov.syger(1.0 / (n as f64 - 1.0), &centered, &centered, 1.0);
    }
    cov.fill_upper_triangle_with_lower_triangle();

    let max_abs = cov.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    if max_abs < 1e-12 {
        return Err(PipelineError::RankDeficient(
            "patch covariance is zero (all patches identical)".into(),
        ));
    }
    let eig = cov.symmetric_eigen();
    let max_eig = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v));
    let mut scales = DVector::<f64>::zeros(d);
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        let damped = lambda.max(0.0) + bandpass;
        if damped <= 1e-10 * max_eig.max(1.0) {
            return Err(PipelineError::RankDeficient(format!(
                "patch covariance is rank deficient (eigenvalue {lambda:.3e}); \
                 supply more varied patches or a positive bandpass"
            )));
        }
        scales[i] = 1.0 / damped.sqrt();
    }
    // W = E diag(scales) E^T, symmetric by construction
    let e = &eig.eigenvectors;
    let w = e * DMatrix::from_diagonal(&scales) * e.transpose();
    let whiten = Array2::from_shape_fn((d, d), |(i, j)| 0.5 * (w[(i, j)] + w[(j, i)]));
    Ok(ZcaTransform { mean, whiten })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_patches(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, d), |_| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn identity_covariance_gives_near_identity_whitening() {
        let patches = gaussian_patches(20_000, 6, 0);
        let zca = zca_fit(&patches, 0.0).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (zca.whiten[(i, j)] - target).abs() < 0.05,
                    "W[{i},{j}] = {}",
                    zca.whiten[(i, j)]
                );
            }
        }
    }

    #[test]
    fn whitening_matrix_is_symmetric() {
        let patches = gaussian_patches(300, 8, 1).mapv(|v| v * 3.0 + 1.0);
        let zca = zca_fit(&patches, 0.1).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                assert!((zca.whiten[(i, j)] - zca.whiten[(j, i)]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn whitened_covariance_near_identity() {
        // correlated patches; whitened sample covariance should be close to I
        let raw = gaussian_patches(500, 12, 2);
        let mixed = {
            let mixer = gaussian_patches(12, 12, 3).mapv(|v| v * 0.4)
                + Array2::from_shape_fn((12, 12), |(i, j)| if i == j { 1.0 } else { 0.0 });
            raw.dot(&mixer)
        };
        let zca = zca_fit(&mixed, 0.0).unwrap();
        let n = mixed.nrows();
        let mut whitened = Array2::<f64>::zeros((n, 12));
        for (i, row) in mixed.rows().into_iter().enumerate() {
            whitened.row_mut(i).assign(&zca.apply(&row.to_owned()));
        }
        let mean = whitened.mean_axis(ndarray::Axis(0)).unwrap();
        let centered = &whitened - &mean;
        let cov = centered.t().dot(&centered) / (n as f64 - 1.0);
        for i in 0..12 {
            for j in 0..12 {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (cov[(i, j)] - target).abs() < 0.15,
                    "cov[{i},{j}] = {}",
                    cov[(i, j)]
                );
            }
        }
    }

    #[test]
    fn identical_patches_are_rank_deficient() {
        let patches = Array2::from_elem((10, 4), 0.7);
        match zca_fit(&patches, 0.0) {
            Err(PipelineError::RankDeficient(msg)) => {
                assert!(msg.contains("identical") || msg.contains("rank"));
            }
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }
}
