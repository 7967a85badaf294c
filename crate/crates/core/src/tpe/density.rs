//! Weighted one-dimensional mixture densities used by the TPE optimizer.
//!
//! A [`ParzenDensity`] places one Gaussian component at each observed value
//! plus one component derived from the prior, with adaptive bandwidths taken
//! from neighbor gaps. On bounded supports every component is truncated and
//! renormalized, so the mixture always integrates to one.

use rand::Rng;
use rand_distr::{Distribution, Normal as NormalSampler};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DensityError {
    #[error("values and weights differ in length ({values} vs {weights})")]
    LengthMismatch { values: usize, weights: usize },
    #[error("value {value} outside support [{lo}, {hi}]")]
    OutsideSupport { value: f64, lo: f64, hi: f64 },
    #[error("weights must be positive, got {0}")]
    NonPositiveWeight(f64),
}

/// Shape of the prior a density is tied to, already mapped into the space the
/// density is fitted in (log-normal priors are fitted in log space).
#[derive(Debug, Clone, Copy)]
pub enum PriorShape {
    /// Unbounded Gaussian prior.
    Normal { mean: f64, stddev: f64 },
    /// Bounded uniform prior; the prior component is a wide Gaussian at the
    /// midpoint, truncated to the support.
    Uniform { lo: f64, hi: f64 },
}

impl PriorShape {
    fn center(&self) -> f64 {
        match self {
            PriorShape::Normal { mean, .. } => *mean,
            PriorShape::Uniform { lo, hi } => 0.5 * (lo + hi),
        }
    }

    /// The prior's own scale: stddev, or the support width.
    fn scale(&self) -> f64 {
        match self {
            PriorShape::Normal { stddev, .. } => *stddev,
            PriorShape::Uniform { lo, hi } => hi - lo,
        }
    }

    fn support(&self) -> Option<(f64, f64)> {
        match self {
            PriorShape::Normal { .. } => None,
            PriorShape::Uniform { lo, hi } => Some((*lo, *hi)),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Component {
    center: f64,
    width: f64,
    weight: f64,
    /// Probability mass of the untruncated Gaussian inside the support.
    mass: f64,
}

/// Weighted mixture of (possibly truncated) Gaussians: one component per
/// observation plus one from the prior.
#[derive(Debug, Clone)]
pub struct ParzenDensity {
    components: Vec<Component>,
    support: Option<(f64, f64)>,
}

impl ParzenDensity {
    /// Fit a density to weighted observations under the given prior.
    ///
    /// With no observations the density is the prior component alone.
    pub fn fit(values: &[f64], weights: &[f64], prior: PriorShape) -> Result<Self, DensityError> {
        if values.len() != weights.len() {
            return Err(DensityError::LengthMismatch {
                values: values.len(),
                weights: weights.len(),
            });
        }
        let support = prior.support();
        for &v in values {
            if let Some((lo, hi)) = support {
                if v < lo || v > hi {
                    return Err(DensityError::OutsideSupport { value: v, lo, hi });
                }
            }
        }
        for &w in weights {
            if !(w > 0.0) {
                return Err(DensityError::NonPositiveWeight(w));
            }
        }

        let scale = prior.scale();
        let (min_width, max_width) = (scale / 100.0, scale);

        // Bandwidths: the larger gap to a neighbor among the sorted centers
        // (prior center included), clipped to the prior's scale.
        let mut sorted: Vec<f64> = values.to_vec();
        sorted.push(prior.center());
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let width_at = |x: f64| -> f64 {
            let i = sorted.partition_point(|&c| c < x);
            let left = if i > 0 { x - sorted[i - 1] } else { f64::INFINITY };
            // skip over x itself (and exact duplicates) to the next distinct center
            let mut j = i;
            while j < sorted.len() && sorted[j] <= x {
                j += 1;
            }
            let right = if j < sorted.len() { sorted[j] - x } else { f64::INFINITY };
            let gap = match (left.is_finite(), right.is_finite()) {
                (true, true) => left.max(right),
                (true, false) => left,
                (false, true) => right,
                (false, false) => scale,
            };
            gap.clamp(min_width, max_width)
        };

        let mut components = Vec::with_capacity(values.len() + 1);
        for (&v, &w) in values.iter().zip(weights) {
            components.push(Component { center: v, width: width_at(v), weight: w, mass: 1.0 });
        }
        // prior component at the prior's own scale, weighted like one observation
        components.push(Component { center: prior.center(), width: scale, weight: 1.0, mass: 1.0 });

        let total: f64 = components.iter().map(|c| c.weight).sum();
        for c in &mut components {
            c.weight /= total;
            if let Some((lo, hi)) = support {
                let n = Normal::new(c.center, c.width).expect("positive width");
                c.mass = (n.cdf(hi) - n.cdf(lo)).max(f64::MIN_POSITIVE);
            }
        }
        Ok(ParzenDensity { components, support })
    }

    pub fn support(&self) -> Option<(f64, f64)> {
        self.support
    }

    /// Mixture density at `x`. Zero outside the support.
    pub fn pdf(&self, x: f64) -> f64 {
        if let Some((lo, hi)) = self.support {
            if x < lo || x > hi {
                return 0.0;
            }
        }
        self.components
            .iter()
            .map(|c| {
                let z = (x - c.center) / c.width;
                let phi = (-0.5 * z * z).exp() / (c.width * (2.0 * std::f64::consts::PI).sqrt());
                c.weight * phi / c.mass
            })
            .sum()
    }

    /// Draw one value: pick a component by weight, then sample it truncated
    /// to the support.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random_range(0.0..1.0);
        let mut acc = 0.0;
        let mut chosen = *self.components.last().expect("at least the prior component");
        for c in &self.components {
            acc += c.weight;
            if u <= acc {
                chosen = *c;
                break;
            }
        }
        let sampler = NormalSampler::new(chosen.center, chosen.width).expect("positive width");
        match self.support {
            None => sampler.sample(rng),
            Some((lo, hi)) => {
                for _ in 0..200 {
                    let v = sampler.sample(rng);
                    if v >= lo && v <= hi {
                        return v;
                    }
                }
                // pathological truncation; fall back to the support midpoint
                0.5 * (lo + hi)
            }
        }
    }
}

/// Discrete analog of [`ParzenDensity`] for choice and randint nodes:
/// probabilities proportional to one pseudo-count per option plus the
/// weighted observation counts, so every option stays reachable.
#[derive(Debug, Clone)]
pub struct CategoricalDensity {
    probs: Vec<f64>,
}

impl CategoricalDensity {
    pub fn fit(indices: &[usize], weights: &[f64], n_options: usize) -> Result<Self, DensityError> {
        if indices.len() != weights.len() {
            return Err(DensityError::LengthMismatch {
                values: indices.len(),
                weights: weights.len(),
            });
        }
        let mut counts = vec![1.0; n_options];
        for (&i, &w) in indices.iter().zip(weights) {
            if !(w > 0.0) {
                return Err(DensityError::NonPositiveWeight(w));
            }
            if i >= n_options {
                return Err(DensityError::OutsideSupport {
                    value: i as f64,
                    lo: 0.0,
                    hi: (n_options - 1) as f64,
                });
            }
            counts[i] += w;
        }
        let total: f64 = counts.iter().sum();
        Ok(CategoricalDensity {
            probs: counts.into_iter().map(|c| c / total).collect(),
        })
    }

    pub fn prob(&self, index: usize) -> f64 {
        self.probs[index]
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random_range(0.0..1.0);
        let mut acc = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p;
            if u <= acc {
                return i;
            }
        }
        self.probs.len() - 1
    }
}
