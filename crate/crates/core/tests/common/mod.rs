//! Naive nested-loop reference implementations of the feature-extraction
//! operators, written independently of the library's vectorized versions.

use hypersearch::pipeline::{DihistPooling, FbnccParams, FeatureMap, LnormParams, LpoolParams};
use ndarray::Array3;
use rand::Rng;

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

pub fn random_map<R: Rng>(rng: &mut R, h: usize, w: usize, c: usize) -> FeatureMap {
    Array3::from_shape_fn((h, w, c), |_| rng.random_range(-1.0..1.0))
}

pub fn naive_fbncc(x: &FeatureMap, filters: &[Array3<f64>], params: &FbnccParams) -> FeatureMap {
    let (h, w, c) = x.dim();
    let s = filters[0].dim().0;
    let k = filters.len();
    let (oh, ow) = (h - s + 1, w - s + 1);
    let mut y = Array3::<f64>::zeros((oh, ow, k));
    for i in 0..oh {
        for j in 0..ow {
            let mut sum = 0.0;
            for di in 0..s {
                for dj in 0..s {
                    for ch in 0..c {
                        sum += x[(i + di, j + dj, ch)];
                    }
                }
            }
            let mean = if params.epsilon { sum / (s * s * c) as f64 } else { 0.0 };
            let mut norm_sq = 0.0;
            for di in 0..s {
                for dj in 0..s {
                    for ch in 0..c {
                        let u = x[(i + di, j + dj, ch)] - mean;
                        norm_sq += u * u;
                    }
                }
            }
            let denom = if params.rho {
                norm_sq.max(params.beta).sqrt()
            } else {
                (norm_sq + params.beta).sqrt()
            };
            for (fi, f) in filters.iter().enumerate() {
                let mut dot = 0.0;
                for di in 0..s {
                    for dj in 0..s {
                        for ch in 0..c {
                            dot += (x[(i + di, j + dj, ch)] - mean) * f[(di, dj, ch)];
                        }
                    }
                }
                y[(i, j, fi)] = if denom > 0.0 { dot / denom } else { 0.0 };
            }
        }
    }
    y
}

pub fn naive_lpool(x: &FeatureMap, params: &LpoolParams) -> FeatureMap {
    let (h, w, c) = x.dim();
    let oh = (h - params.size) / params.stride + 1;
    let ow = (w - params.size) / params.stride + 1;
    let mut y = Array3::<f64>::zeros((oh, ow, c));
    for i in 0..oh {
        for j in 0..ow {
            for ch in 0..c {
                let mut acc = 0.0;
                for di in 0..params.size {
                    for dj in 0..params.size {
                        acc += x[(i * params.stride + di, j * params.stride + dj, ch)]
                            .abs()
                            .powf(params.p);
                    }
                }
                y[(i, j, ch)] = acc.powf(1.0 / params.p);
            }
        }
    }
    y
}

pub fn naive_lnorm(x: &FeatureMap, params: &LnormParams) -> FeatureMap {
    let (h, w, c) = x.dim();
    let n = params.neighborhood;
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
                y[(i, j, ch)] =
                    if norm > params.tau { x[(i, j, ch)] / norm } else { x[(i, j, ch)] };
            }
        }
    }
    y
}

pub fn naive_dihist(x: &FeatureMap, alpha: f64, pooling: DihistPooling) -> FeatureMap {
    let (h, w, c) = x.dim();
    let (oh, ow) = match pooling {
        DihistPooling::Grid(g) => (g, g),
        DihistPooling::Box { subsample, side } => {
            ((h - side) / subsample + 1, (w - side) / subsample + 1)
        }
    };
    let mut y = Array3::<f64>::zeros((oh, ow, 2 * c));
    for i in 0..oh {
        for j in 0..ow {
            let (r0, r1, c0, c1) = match pooling {
                DihistPooling::Grid(g) => {
                    (i * h / g, (i + 1) * h / g, j * w / g, (j + 1) * w / g)
                }
                DihistPooling::Box { subsample, side } => {
                    (i * subsample, i * subsample + side, j * subsample, j * subsample + side)
                }
            };
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
    }
    y
}
