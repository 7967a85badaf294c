//! Filter bank generation: random uniform filters, random projections of ZCA
//! components, and ZCA-whitened image patches.

use ndarray::{Array1, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::zca::zca_fit;
use super::{FeatureMap, PipelineError};

/// How a bank's filters are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterStrategy {
    /// Uniform entries, centered and normalized per filter.
    RandomUniform,
    /// Random unit projections in ZCA-whitened space.
    ZcaProjection,
    /// Randomly chosen data patches, whitened.
    ZcaPatches,
}

/// A bank of `K` filters of shape `(S_f, S_f, C)` plus generation metadata.
#[derive(Debug, Clone)]
pub struct FilterBank {
    filters: Vec<Array3<f64>>,
    pub strategy: FilterStrategy,
    pub seed: u64,
}

impl FilterBank {
    /// Wrap pre-built filters; they must be non-empty, same-shaped, finite.
    pub fn from_filters(filters: Vec<Array3<f64>>) -> Result<Self, PipelineError> {
        if filters.is_empty() {
            return Err(PipelineError::Param("filter bank must hold at least one filter".into()));
        }
        let dim = filters[0].dim();
        for f in &filters {
            if f.dim() != dim {
                return Err(PipelineError::Shape("filters differ in shape".into()));
            }
            if f.iter().any(|v| !v.is_finite()) {
                return Err(PipelineError::Param("filter entries must be finite".into()));
            }
        }
        Ok(FilterBank { filters, strategy: FilterStrategy::RandomUniform, seed: 0 })
    }

    pub fn filters(&self) -> &[Array3<f64>] {
        &self.filters
    }

    pub fn len(&self) -> usize {
        self.filters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }

    pub fn filter_size(&self) -> usize {
        self.filters[0].dim().0
    }

    pub fn channels(&self) -> usize {
        self.filters[0].dim().2
    }
}

/// Random patches of size `s x s x C` drawn from a set of maps, flattened in
/// (row, col, channel) order to match the operator layout.
pub fn sample_patches(
    maps: &[FeatureMap],
    s: usize,
    count: usize,
    seed: u64,
) -> Result<Array2<f64>, PipelineError> {
    if maps.is_empty() {
        return Err(PipelineError::MissingData("no maps to draw patches from".into()));
    }
    let (h, w, c) = maps[0].dim();
    if s > h || s > w {
        return Err(PipelineError::Shape(format!("patch size {s} exceeds map {h}x{w}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plen = s * s * c;
    let mut out = Array2::<f64>::zeros((count, plen));
    for row in 0..count {
        let m = &maps[rng.random_range(0..maps.len())];
        let i = rng.random_range(0..=h - s);
        let j = rng.random_range(0..=w - s);
        let mut idx = 0;
        for di in 0..s {
            for dj in 0..s {
                for ch in 0..c {
                    out[(row, idx)] = m[(i + di, j + dj, ch)];
                    idx += 1;
                }
            }
        }
    }
    Ok(out)
}

fn unflatten(v: &Array1<f64>, s: usize, c: usize) -> Array3<f64> {
    Array3::from_shape_fn((s, s, c), |(di, dj, ch)| v[(di * s + dj) * c + ch])
}

/// Generate a filter bank.
///
/// `data` holds flattened training patches of dimension `s_f * s_f * channels`
/// (one per row); it is required for both ZCA strategies and ignored by
/// `RandomUniform`. The `bandpass` parameter only affects the ZCA strategies.
pub fn generate_filters(
    strategy: FilterStrategy,
    k: usize,
    s_f: usize,
    channels: usize,
    seed: u64,
    data: Option<&Array2<f64>>,
    bandpass: f64,
) -> Result<FilterBank, PipelineError> {
    if k < 1 {
        return Err(PipelineError::Param("filter count must be >= 1".into()));
    }
    if s_f < 2 {
        return Err(PipelineError::Param(format!("filter size must be >= 2, got {s_f}")));
    }
    let plen = s_f * s_f * channels;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let filters = match strategy {
        FilterStrategy::RandomUniform => (0..k)
            .map(|_| {
                let mut v = Array1::<f64>::from_shape_fn(plen, |_| rng.random_range(0.0..1.0));
                let mean = v.mean().expect("plen >= 4");
                v -= mean;
                let norm = v.dot(&v).sqrt();
                if norm > 0.0 {
                    v /= norm;
                }
                unflatten(&v, s_f, channels)
            })
            .collect(),
        FilterStrategy::ZcaProjection => {
            let data = require_data(data, plen)?;
            let zca = zca_fit(data, bandpass)?;
            (0..k)
                .map(|_| {
                    let mut r = Array1::<f64>::from_shape_fn(plen, |_| StandardNormal.sample(&mut rng));
                    let norm = r.dot(&r).sqrt();
                    if norm > 0.0 {
                        r /= norm;
                    }
                    let f = zca.whiten.dot(&r);
                    unflatten(&f, s_f, channels)
                })
                .collect()
        }
        FilterStrategy::ZcaPatches => {
            let data = require_data(data, plen)?;
            let zca = zca_fit(data, bandpass)?;
            (0..k)
                .map(|_| {
                    let row = rng.random_range(0..data.nrows());
                    let patch = data.row(row).to_owned();
                    unflatten(&zca.apply(&patch), s_f, channels)
                })
                .collect()
        }
    };
    Ok(FilterBank { filters, strategy, seed })
}

fn require_data(data: Option<&Array2<f64>>, plen: usize) -> Result<&Array2<f64>, PipelineError> {
    let data = data.ok_or_else(|| {
        PipelineError::MissingData("ZCA filter strategies require training patches".into())
    })?;
    if data.ncols() != plen {
        return Err(PipelineError::Shape(format!(
            "patch dimension {} does not match filter size (expected {plen})",
            data.ncols()
        )));
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_uniform_filters_are_centered_and_unit_norm() {
        let bank = generate_filters(FilterStrategy::RandomUniform, 16, 3, 1, 0, None, 0.0).unwrap();
        assert_eq!(bank.len(), 16);
        for f in bank.filters() {
            let mean: f64 = f.iter().sum::<f64>() / f.len() as f64;
            let norm: f64 = f.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(mean.abs() < 1e-9);
            assert!((norm - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn same_seed_same_bank() {
        for strategy in [FilterStrategy::RandomUniform, FilterStrategy::ZcaProjection, FilterStrategy::ZcaPatches] {
            let data = {
                use rand::SeedableRng;
                let mut rng = ChaCha8Rng::seed_from_u64(9);
                Array2::from_shape_fn((200, 4), |_| rng.random_range(-1.0..1.0))
            };
            let a = generate_filters(strategy, 8, 2, 1, 42, Some(&data), 0.01).unwrap();
            let b = generate_filters(strategy, 8, 2, 1, 42, Some(&data), 0.01).unwrap();
            for (fa, fb) in a.filters().iter().zip(b.filters()) {
                assert_eq!(fa, fb);
            }
        }
    }

    #[test]
    fn zca_strategies_require_data() {
        for strategy in [FilterStrategy::ZcaProjection, FilterStrategy::ZcaPatches] {
            let err = generate_filters(strategy, 4, 2, 1, 0, None, 0.0).unwrap_err();
            assert!(matches!(err, PipelineError::MissingData(_)));
        }
    }

    #[test]
    fn zca_patches_on_white_data_recover_centered_patches() {
        // identity-covariance data with bandpass 0: whitening ~ identity, so
        // filters are approximately the centered raw patches
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 40_000;
        let data = Array2::from_shape_fn((n, 4), |_| StandardNormal.sample(&mut rng));
        let mean = data.mean_axis(ndarray::Axis(0)).unwrap();
        let bank = generate_filters(FilterStrategy::ZcaPatches, 6, 2, 1, 11, Some(&data), 0.0).unwrap();
        // replay the picks: same rng consumption order as generate_filters
        let mut replay = ChaCha8Rng::seed_from_u64(11);
        for f in bank.filters() {
            let row = replay.random_range(0..n);
            let raw = data.row(row);
            for (idx, v) in f.iter().enumerate() {
                let expected = raw[idx] - mean[idx];
                assert!((v - expected).abs() < 0.1, "filter {v} vs raw {expected}");
            }
        }
    }
}
