//! The four feature-extraction operators: filter-bank normalized
//! cross-correlation, p-norm spatial pooling, divisive normalization, and
//! paired half-rectified histograms.
//!
//! All operators are valid-region correlations: no padding, no filter flip,
//! patches anchored at their top-left corner.

use ndarray::{Array2, Array3};

use super::filters::FilterBank;
use super::{FeatureMap, PipelineError};

/// fbncc parameters: low-variance cutoff `beta`, hard/soft cutoff flag `rho`,
/// and mean-subtraction flag `epsilon`.
#[derive(Debug, Clone, Copy)]
pub struct FbnccParams {
    pub beta: f64,
    pub rho: bool,
    pub epsilon: bool,
}

impl FbnccParams {
    pub fn new(beta: f64, rho: bool, epsilon: bool) -> Result<Self, PipelineError> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(PipelineError::Param(format!("fbncc beta must be finite and > 0, got {beta}")));
        }
        Ok(FbnccParams { beta, rho, epsilon })
    }
}

/// lpool parameters: patch size, stride, and norm order.
#[derive(Debug, Clone, Copy)]
pub struct LpoolParams {
    pub size: usize,
    pub stride: usize,
    pub p: f64,
}

impl LpoolParams {
    pub fn new(size: usize, stride: usize, p: f64) -> Result<Self, PipelineError> {
        if size < 2 {
            return Err(PipelineError::Param(format!("lpool size must be >= 2, got {size}")));
        }
        if !(stride == 1 || stride == 2) {
            return Err(PipelineError::Param(format!("lpool stride must be 1 or 2, got {stride}")));
        }
        if !(p > 0.0) || !p.is_finite() {
            return Err(PipelineError::Param(format!("lpool p must be finite and > 0, got {p}")));
        }
        Ok(LpoolParams { size, stride, p })
    }
}

/// lnorm parameters: norm threshold and neighborhood side length.
#[derive(Debug, Clone, Copy)]
pub struct LnormParams {
    pub tau: f64,
    pub neighborhood: usize,
}

impl LnormParams {
    pub fn new(tau: f64, neighborhood: usize) -> Result<Self, PipelineError> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(PipelineError::Param(format!("lnorm tau must be finite and > 0, got {tau}")));
        }
        if neighborhood < 2 {
            return Err(PipelineError::Param(format!(
                "lnorm neighborhood must be >= 2, got {neighborhood}"
            )));
        }
        Ok(LnormParams { tau, neighborhood })
    }
}

/// How dihist lays its pooling regions over the map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DihistPooling {
    /// `grid x grid` cells partitioning the map.
    Grid(usize),
    /// A `side x side` window slid with stride `subsample`.
    Box { subsample: usize, side: usize },
}

/// dihist parameters: rectification threshold and pooling layout.
#[derive(Debug, Clone, Copy)]
pub struct DihistParams {
    pub alpha: f64,
    pub pooling: DihistPooling,
}

impl DihistParams {
    pub fn new(alpha: f64, pooling: DihistPooling) -> Result<Self, PipelineError> {
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(PipelineError::Param(format!("dihist alpha must be >= 0, got {alpha}")));
        }
        match pooling {
            DihistPooling::Grid(g) if !(g == 2 || g == 3) => {
                return Err(PipelineError::Param(format!("dihist grid must be 2 or 3, got {g}")))
            }
            DihistPooling::Box { subsample, side } => {
                if !(1..=3).contains(&subsample) {
                    return Err(PipelineError::Param(format!(
                        "dihist subsample must be in 1..=3, got {subsample}"
                    )));
                }
                if !(2..=8).contains(&side) {
                    return Err(PipelineError::Param(format!(
                        "dihist side must be in 2..=8, got {side}"
                    )));
                }
            }
            _ => {}
        }
        Ok(DihistParams { alpha, pooling })
    }
}

/// Filter-bank normalized cross-correlation.
///
/// Each patch is optionally mean-shifted, then the correlation with each
/// filter is divided by a soft or hard low-variance cutoff of the patch norm:
///
/// ```text
/// y_ijk = (f_k . u_ij) / sqrt(rho * max(|u_ij|^2, beta) + (1-rho)(|u_ij|^2 + beta))
/// ```
///
/// Output shape is (H - S + 1, W - S + 1, K).
pub fn fbncc(x: &FeatureMap, bank: &FilterBank, params: &FbnccParams) -> Result<FeatureMap, PipelineError> {
    let (h, w, c) = x.dim();
    let s = bank.filter_size();
    let k = bank.len();
    if bank.channels() != c {
        return Err(PipelineError::Shape(format!(
            "fbncc: filter channels {} do not match input channels {c}",
            bank.channels()
        )));
    }
    if s > h || s > w {
        return Err(PipelineError::Shape(format!(
            "fbncc: filter size {s} exceeds input {h}x{w}"
        )));
    }
    let (oh, ow) = (h - s + 1, w - s + 1);
    let plen = s * s * c;
    let n = oh * ow;

    // im2col with mean shift, tracking the patch norm for the denominator
    let mut patches = Array2::<f64>::zeros((n, plen));
    let mut denom = vec![0.0f64; n];
    let eps = if params.epsilon { 1.0 } else { 0.0 };
    for i in 0..oh {
        for j in 0..ow {
            let row = i * ow + j;
            let mut idx = 0usize;
            let mut sum = 0.0;
            for di in 0..s {
                for dj in 0..s {
                    for ch in 0..c {
                        let v = x[(i + di, j + dj, ch)];
                        patches[(row, idx)] = v;
                        sum += v;
                        idx += 1;
                    }
                }
            }
            let mean = sum / plen as f64;
            let mut norm_sq = 0.0;
            for idx in 0..plen {
                let u = patches[(row, idx)] - eps * mean;
                patches[(row, idx)] = u;
                norm_sq += u * u;
            }
            let d = if params.rho {
                norm_sq.max(params.beta)
            } else {
                norm_sq + params.beta
            };
            denom[row] = d.sqrt();
        }
    }

    let mut filters = Array2::<f64>::zeros((plen, k));
    for (fi, f) in bank.filters().iter().enumerate() {
        let mut idx = 0usize;
        for di in 0..s {
            for dj in 0..s {
                for ch in 0..c {
                    filters[(idx, fi)] = f[(di, dj, ch)];
                    idx += 1;
                }
            }
        }
    }

    let mut y = patches.dot(&filters);
    for (row, &d) in denom.iter().enumerate() {
        for fi in 0..k {
            // d can only vanish at beta = 0; define the output as 0 there
            y[(row, fi)] = if d > 0.0 { y[(row, fi)] / d } else { 0.0 };
        }
    }
    Ok(y.into_shape_with_order((oh, ow, k)).expect("consistent reshape"))
}

/// Strided spatial p-norm pooling over single-channel patches.
pub fn lpool(x: &FeatureMap, params: &LpoolParams) -> Result<FeatureMap, PipelineError> {
    let (h, w, c) = x.dim();
    let (sp, stride, p) = (params.size, params.stride, params.p);
    if sp > h || sp > w {
        return Err(PipelineError::Shape(format!(
            "lpool: patch size {sp} exceeds input {h}x{w}"
        )));
    }
    let oh = (h - sp) / stride + 1;
    let ow = (w - sp) / stride + 1;
    let mut y = Array3::<f64>::zeros((oh, ow, c));
    for i in 0..oh {
        for j in 0..ow {
            for k in 0..c {
                let mut acc = 0.0;
                for di in 0..sp {
                    for dj in 0..sp {
                        acc += x[(i * stride + di, j * stride + dj, k)].abs().powf(p);
                    }
                }
                y[(i, j, k)] = acc.powf(1.0 / p);
            }
        }
    }
    Ok(y)
}

/// Divisive normalization: divide by the all-channel neighborhood norm where
/// it exceeds `tau`, pass through otherwise. Output is cropped to the valid
/// region; values are taken at each patch's anchor.
pub fn lnorm(x: &FeatureMap, params: &LnormParams) -> Result<FeatureMap, PipelineError> {
    let (h, w, c) = x.dim();
    let n = params.neighborhood;
    if n > h || n > w {
        return Err(PipelineError::Shape(format!(
            "lnorm: neighborhood {n} exceeds input {h}x{w}"
        )));
    }
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut y = Array3::<f64>::zeros((oh, ow, c));
    for i in 0..oh {
        for j in 0..ow {
            let mut norm_sq = 0.0;
            for di in 0..n {
                for dj in 0..n {
                    for ch in 0..c {
                        let v = x[(i + di, j + dj, ch)];
                        norm_sq += v * v;
                    }
                }
            }
            let norm = norm_sq.sqrt();
            for ch in 0..c {
                let v = x[(i, j, ch)];
                y[(i, j, ch)] = if norm > params.tau { v / norm } else { v };
            }
        }
    }
    Ok(y)
}

/// A region's (row0, row1, col0, col1) bounds, half-open.
pub(crate) type Region = (usize, usize, usize, usize);

/// Region layout for a dihist pooling mode over an `h x w` map: the output
/// spatial dims and the region bounds in row-major order.
pub(crate) fn dihist_regions(
    h: usize,
    w: usize,
    pooling: DihistPooling,
) -> Result<(usize, usize, Vec<Region>), PipelineError> {
    match pooling {
        DihistPooling::Grid(g) => {
            if g > h || g > w {
                return Err(PipelineError::Shape(format!(
                    "dihist: {g}x{g} grid does not fit a {h}x{w} map"
                )));
            }
            let mut regions = Vec::with_capacity(g * g);
            for gi in 0..g {
                for gj in 0..g {
                    regions.push((gi * h / g, (gi + 1) * h / g, gj * w / g, (gj + 1) * w / g));
                }
            }
            Ok((g, g, regions))
        }
        DihistPooling::Box { subsample, side } => {
            if side > h || side > w {
                return Err(PipelineError::Shape(format!(
                    "dihist: {side}x{side} box does not fit a {h}x{w} map"
                )));
            }
            let oh = (h - side) / subsample + 1;
            let ow = (w - side) / subsample + 1;
            let mut regions = Vec::with_capacity(oh * ow);
            for i in 0..oh {
                for j in 0..ow {
                    let r0 = i * subsample;
                    let c0 = j * subsample;
                    regions.push((r0, r0 + side, c0, c0 + side));
                }
            }
            Ok((oh, ow, regions))
        }
    }
}

/// Paired half-rectified region sums. For each region and input channel `k`
/// the output holds `sum(max(v - alpha, 0))` in channel `2k` and
/// `sum(max(-v - alpha, 0))` in channel `2k + 1`.
pub fn dihist(x: &FeatureMap, params: &DihistParams) -> Result<FeatureMap, PipelineError> {
    let (h, w, c) = x.dim();
    let (oh, ow, regions) = dihist_regions(h, w, params.pooling)?;
    let alpha = params.alpha;
    let mut y = Array3::<f64>::zeros((oh, ow, 2 * c));
    for (ri, &(r0, r1, c0, c1)) in regions.iter().enumerate() {
        let (i, j) = (ri / ow, ri % ow);
        for ch in 0..c {
            let mut pos = 0.0;
            let mut neg = 0.0;
            for r in r0..r1 {
                for cc in c0..c1 {
                    let v = x[(r, cc, ch)];
                    pos += (v - alpha).max(0.0);
                    neg += (-v - alpha).max(0.0);
                }
            }
            y[(i, j, 2 * ch)] = pos;
            y[(i, j, 2 * ch + 1)] = neg;
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::filters::FilterBank;
    use ndarray::arr3;

    fn ones(h: usize, w: usize, c: usize) -> FeatureMap {
        Array3::from_elem((h, w, c), 1.0)
    }

    #[test]
    fn fbncc_mean_subtraction_zeroes_constant_patch() {
        let x = ones(2, 2, 1);
        let bank = FilterBank::from_filters(vec![ones(2, 2, 1)]).unwrap();
        for rho in [false, true] {
            let params = FbnccParams::new(0.5, rho, true).unwrap();
            let y = fbncc(&x, &bank, &params).unwrap();
            assert_eq!(y.dim(), (1, 1, 1));
            assert!(y[(0, 0, 0)].abs() < 1e-12);
        }
    }

    #[test]
    fn fbncc_hard_cutoff_with_large_beta_is_scaled_correlation() {
        let x = arr3(&[
            [[0.1], [0.2], [0.3]],
            [[-0.1], [0.0], [0.2]],
            [[0.3], [-0.2], [0.1]],
        ]);
        let f = arr3(&[[[1.0], [0.5]], [[-0.5], [0.25]]]);
        let bank = FilterBank::from_filters(vec![f.clone()]).unwrap();
        let beta = 100.0; // >= every patch norm
        let params = FbnccParams::new(beta, true, false).unwrap();
        let y = fbncc(&x, &bank, &params).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let mut corr = 0.0;
                for di in 0..2 {
                    for dj in 0..2 {
                        corr += x[(i + di, j + dj, 0)] * f[(di, dj, 0)];
                    }
                }
                assert!((y[(i, j, 0)] - corr / beta.sqrt()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fbncc_shape_errors() {
        let x = ones(2, 2, 1);
        let big = FilterBank::from_filters(vec![ones(3, 3, 1)]).unwrap();
        assert!(fbncc(&x, &big, &FbnccParams::new(1.0, false, false).unwrap()).is_err());
        let wrong_c = FilterBank::from_filters(vec![ones(2, 2, 3)]).unwrap();
        assert!(fbncc(&x, &wrong_c, &FbnccParams::new(1.0, false, false).unwrap()).is_err());
        assert!(FbnccParams::new(0.0, false, false).is_err());
    }

    #[test]
    fn lpool_patch_of_ones_l2() {
        let y = lpool(&ones(2, 2, 1), &LpoolParams::new(2, 1, 2.0).unwrap()).unwrap();
        assert_eq!(y.dim(), (1, 1, 1));
        assert!((y[(0, 0, 0)] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn lpool_l1_of_quarters() {
        let x = Array3::from_elem((2, 2, 1), 0.25);
        let y = lpool(&x, &LpoolParams::new(2, 1, 1.0).unwrap()).unwrap();
        assert!((y[(0, 0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lpool_stride_output_dims() {
        let y = lpool(&ones(6, 6, 3), &LpoolParams::new(3, 2, 1.7).unwrap()).unwrap();
        assert_eq!(y.dim(), (2, 2, 3));
        assert!(lpool(&ones(2, 2, 1), &LpoolParams::new(3, 1, 2.0).unwrap()).is_err());
    }

    #[test]
    fn lnorm_large_tau_is_identity_on_valid_region() {
        let x = arr3(&[[[1.0], [2.0]], [[3.0], [4.0]]]);
        let y = lnorm(&x, &LnormParams::new(1e6, 2).unwrap()).unwrap();
        assert_eq!(y.dim(), (1, 1, 1));
        assert_eq!(y[(0, 0, 0)], x[(0, 0, 0)]);
    }

    #[test]
    fn lnorm_halves_values_when_norm_is_two() {
        // single 2x2x1 patch with norm 2
        let x = ones(2, 2, 1);
        let y = lnorm(&x, &LnormParams::new(1.0, 2).unwrap()).unwrap();
        assert!((y[(0, 0, 0)] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn dihist_nonnegative_input_zero_alpha() {
        let x = arr3(&[[[1.0], [2.0]], [[0.5], [0.0]]]);
        let params = DihistParams::new(0.0, DihistPooling::Grid(2)).unwrap();
        let y = dihist(&x, &params).unwrap();
        assert_eq!(y.dim(), (2, 2, 2));
        // negative half-channels all zero, positive halves equal region sums
        assert_eq!(y[(0, 0, 0)], 1.0);
        assert_eq!(y[(0, 1, 0)], 2.0);
        assert_eq!(y[(1, 0, 0)], 0.5);
        assert_eq!(y[(1, 1, 0)], 0.0);
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(y[(i, j, 1)], 0.0);
            }
        }
    }

    #[test]
    fn dihist_hand_sum() {
        // region values {1, -1, 2, 0}, alpha = 0 -> (3, 1)
        let x = arr3(&[[[1.0], [-1.0]], [[2.0], [0.0]]]);
        let params = DihistParams::new(0.0, DihistPooling::Box { subsample: 1, side: 2 }).unwrap();
        let y = dihist(&x, &params).unwrap();
        assert_eq!(y.dim(), (1, 1, 2));
        assert_eq!(y[(0, 0, 0)], 3.0);
        assert_eq!(y[(0, 0, 1)], 1.0);
    }

    #[test]
    fn dihist_rejects_bad_params() {
        assert!(DihistParams::new(-0.1, DihistPooling::Grid(2)).is_err());
        let x = ones(2, 2, 1);
        let too_big = DihistParams::new(0.0, DihistPooling::Box { subsample: 1, side: 4 }).unwrap();
        assert!(dihist(&x, &too_big).is_err());
    }
}
