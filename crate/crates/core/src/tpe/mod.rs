//! Hyperparameter optimization algorithms: random search and a
//! Tree-of-Parzen-Estimators (TPE) optimizer.
//!
//! TPE walks the expression graph root-down. For each active stochastic node
//! it restricts the history to trials where that hyperparameter was active,
//! down-weights old trials, splits the best trials from the rest, fits a
//! density l(x) to the best values and g(x) to the remainder, then suggests
//! the candidate drawn from l that maximizes l(x)/g(x). Choice selections made
//! at a parent determine which children are visited, so inactive parameters
//! never contribute to either density.

mod density;

pub use density::{CategoricalDensity, DensityError, ParzenDensity, PriorShape};

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::space::{sample_prior, Assignment, ExprGraph, NodeId, NodeKind, SpaceError, Value};
use crate::trialdb::{Trial, TrialStatus};

/// Tuning knobs shared by the optimizers.
#[derive(Debug, Clone)]
pub struct HpoaConfig {
    /// Suggestions are pure prior draws until this many ok trials exist.
    pub n_startup: usize,
    /// The newest `ramp_flat` trials get full weight; older ones ramp
    /// linearly from 0 to 1.
    pub ramp_flat: usize,
    /// Candidates drawn from l(x) per hyperparameter.
    pub n_candidates: usize,
    pub seed: u64,
}

impl Default for HpoaConfig {
    fn default() -> Self {
        HpoaConfig { n_startup: 50, ramp_flat: 25, n_candidates: 24, seed: 0 }
    }
}

impl HpoaConfig {
    pub fn with_seed(seed: u64) -> Self {
        HpoaConfig { seed, ..Default::default() }
    }
}

/// Random search: a fresh draw from the prior, ignoring the history.
pub fn suggest_random(
    graph: &ExprGraph,
    _snapshot: &[Trial],
    seed: u64,
) -> Result<Assignment, SpaceError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_prior(graph, &mut rng)
}

/// Size of the "best" set: max(1, ceil(sqrt(T) / 4)).
pub fn n_best(t: usize) -> usize {
    (((t as f64).sqrt() / 4.0).ceil() as usize).max(1)
}

/// Recency weights for `t` trials ordered oldest to newest.
///
/// The newest `ramp_flat` trials get weight 1.0; the `t - ramp_flat` older
/// trials get (i+1)/(t - ramp_flat), which meets 1.0 at the junction.
pub fn trial_weights(t: usize, ramp_flat: usize) -> Vec<f64> {
    if t <= ramp_flat {
        return vec![1.0; t];
    }
    let ramp_len = t - ramp_flat;
    let mut w = Vec::with_capacity(t);
    for i in 0..ramp_len {
        w.push((i + 1) as f64 / ramp_len as f64);
    }
    w.extend(std::iter::repeat_n(1.0, ramp_flat));
    w
}

/// Partition ok trials into the `n_best` lowest-loss trials and the rest.
/// Ties break toward the earlier `born_order`; both halves come back in
/// `born_order` order.
pub fn split_best_rest(trials: &[&Trial]) -> Result<(Vec<usize>, Vec<usize>), SpaceError> {
    if trials.is_empty() {
        return Err(SpaceError::Evaluation {
            context: "split_best_rest".into(),
            message: "empty trial list".into(),
        });
    }
    let mut order: Vec<usize> = (0..trials.len()).collect();
    order.sort_by(|&a, &b| {
        trials[a]
            .loss
            .partial_cmp(&trials[b].loss)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(trials[a].born_order.cmp(&trials[b].born_order))
    });
    let k = n_best(trials.len());
    let mut best: Vec<usize> = order[..k].to_vec();
    let mut rest: Vec<usize> = order[k..].to_vec();
    best.sort_unstable();
    rest.sort_unstable();
    Ok((best, rest))
}

/// TPE suggestion. Falls back to [`suggest_random`] during startup and to
/// per-label prior sampling wherever the restricted history is empty.
pub fn tpe_suggest(
    graph: &ExprGraph,
    snapshot: &[Trial],
    config: &HpoaConfig,
) -> Result<Assignment, SpaceError> {
    let mut ok_trials: Vec<&Trial> = snapshot
        .iter()
        .filter(|t| t.status == TrialStatus::Ok)
        .collect();
    ok_trials.sort_by_key(|t| t.born_order);
    if ok_trials.len() < config.n_startup {
        return suggest_random(graph, snapshot, config.seed);
    }
    let mut suggester = Suggester {
        graph,
        ok_trials,
        config,
        rng: ChaCha8Rng::seed_from_u64(config.seed),
    };
    let mut values = BTreeMap::new();
    let mut resolved = BTreeMap::new();
    let mut memo = BTreeMap::new();
    for (name, id) in graph.roots() {
        let v = suggester.eval(*id, &mut values, &mut memo)?;
        resolved.insert(name.clone(), v);
    }
    Ok(Assignment { values, resolved })
}

struct Suggester<'a> {
    graph: &'a ExprGraph,
    ok_trials: Vec<&'a Trial>,
    config: &'a HpoaConfig,
    rng: ChaCha8Rng,
}

impl Suggester<'_> {
    fn eval(
        &mut self,
        id: NodeId,
        values: &mut BTreeMap<String, Value>,
        memo: &mut BTreeMap<NodeId, f64>,
    ) -> Result<f64, SpaceError> {
        if let Some(v) = memo.get(&id) {
            return Ok(*v);
        }
        let node = self.graph.node(id).clone();
        let resolved = match &node.kind {
            NodeKind::Constant(v) => *v,
            NodeKind::Normal { mean, stddev } => {
                let label = node.label.as_ref().expect("labeled");
                let v = self.draw_real(
                    label,
                    PriorShape::Normal { mean: *mean, stddev: *stddev },
                    false,
                );
                values.insert(label.clone(), Value::Real(v));
                v
            }
            NodeKind::Lognormal { log_mean, log_stddev } => {
                let label = node.label.as_ref().expect("labeled");
                // fitted in log space, exponentiated on the way out
                let v = self
                    .draw_real(
                        label,
                        PriorShape::Normal { mean: *log_mean, stddev: *log_stddev },
                        true,
                    )
                    .exp();
                values.insert(label.clone(), Value::Real(v));
                v
            }
            NodeKind::Uniform { lo, hi } => {
                let label = node.label.as_ref().expect("labeled");
                let v = self.draw_real(label, PriorShape::Uniform { lo: *lo, hi: *hi }, false);
                values.insert(label.clone(), Value::Real(v));
                v
            }
            NodeKind::Randint { lo, hi } => {
                let label = node.label.as_ref().expect("labeled");
                let n_options = (hi - lo + 1) as usize;
                let idx = self.draw_index(label, n_options, |v| match v {
                    Value::Int(i) => Some((i - lo) as usize),
                    _ => None,
                });
                let v = lo + idx as i64;
                values.insert(label.clone(), Value::Int(v));
                v as f64
            }
            NodeKind::Choice(options) => {
                let label = node.label.as_ref().expect("labeled");
                let idx = self.draw_index(label, options.len(), |v| match v {
                    Value::Index(i) => Some(i),
                    _ => None,
                });
                values.insert(label.clone(), Value::Index(idx));
                self.eval(options[idx], values, memo)?
            }
            NodeKind::Func { op, arg } => {
                let inner = self.eval(*arg, values, memo)?;
                crate::space::sample::apply_func(
                    *op,
                    inner,
                    node.label.as_deref().unwrap_or("func"),
                )?
            }
            NodeKind::Ref(target) => self.eval(*target, values, memo)?,
        };
        memo.insert(id, resolved);
        Ok(resolved)
    }

    /// History of (value, loss) pairs for one label, in born_order.
    fn history(&self, label: &str) -> Vec<(&Value, f64)> {
        self.ok_trials
            .iter()
            .filter_map(|t| {
                t.assignment
                    .get(label)
                    .map(|v| (v, t.loss.expect("ok trials carry a loss")))
            })
            .collect()
    }

    /// Indices of the best trials among `t` restricted observations.
    fn split(&self, label: &str) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
        let restricted: Vec<&Trial> = self
            .ok_trials
            .iter()
            .filter(|t| t.assignment.contains_key(label))
            .copied()
            .collect();
        let weights = trial_weights(restricted.len(), self.config.ramp_flat);
        let (best, rest) = split_best_rest(&restricted).expect("non-empty by caller");
        (best, rest, weights)
    }

    fn draw_real(&mut self, label: &str, prior: PriorShape, log_space: bool) -> f64 {
        let history = self.history(label);
        let transform = |v: &Value| -> Option<f64> {
            let raw = match v {
                Value::Real(x) => *x,
                _ => return None,
            };
            if log_space {
                if raw > 0.0 {
                    Some(raw.ln())
                } else {
                    None
                }
            } else {
                Some(raw)
            }
        };
        let obs: Vec<f64> = history.iter().filter_map(|(v, _)| transform(v)).collect();
        if obs.is_empty() {
            return self.prior_draw(prior);
        }
        let (best_idx, rest_idx, weights) = self.split(label);
        let pick = |idx: &[usize]| -> (Vec<f64>, Vec<f64>) {
            let mut vs = Vec::with_capacity(idx.len());
            let mut ws = Vec::with_capacity(idx.len());
            for &i in idx {
                if let Some(v) = transform(history[i].0) {
                    vs.push(v);
                    ws.push(weights[i]);
                }
            }
            (vs, ws)
        };
        let (best_v, best_w) = pick(&best_idx);
        let (rest_v, rest_w) = pick(&rest_idx);
        let good = match ParzenDensity::fit(&best_v, &best_w, prior) {
            Ok(d) => d,
            Err(_) => return self.prior_draw(prior),
        };
        let bad = match ParzenDensity::fit(&rest_v, &rest_w, prior) {
            Ok(d) => d,
            Err(_) => return self.prior_draw(prior),
        };
        let mut best_x = f64::NAN;
        let mut best_score = f64::NEG_INFINITY;
        for _ in 0..self.config.n_candidates {
            let x = good.sample(&mut self.rng);
            let score = good.pdf(x).ln() - bad.pdf(x).ln();
            if score > best_score || best_x.is_nan() {
                best_score = score;
                best_x = x;
            }
        }
        if best_x.is_nan() {
            self.prior_draw(prior)
        } else {
            best_x
        }
    }

    fn draw_index(
        &mut self,
        label: &str,
        n_options: usize,
        to_index: impl Fn(Value) -> Option<usize>,
    ) -> usize {
        let history = self.history(label);
        let obs: Vec<usize> = history
            .iter()
            .filter_map(|(v, _)| to_index(**v))
            .collect();
        if obs.is_empty() {
            return self.rng.random_range(0..n_options);
        }
        let (best_idx, rest_idx, weights) = self.split(label);
        let pick = |idx: &[usize]| -> (Vec<usize>, Vec<f64>) {
            let mut vs = Vec::with_capacity(idx.len());
            let mut ws = Vec::with_capacity(idx.len());
            for &i in idx {
                if let Some(v) = to_index(*history[i].0) {
                    vs.push(v);
                    ws.push(weights[i]);
                }
            }
            (vs, ws)
        };
        let (best_v, best_w) = pick(&best_idx);
        let (rest_v, rest_w) = pick(&rest_idx);
        let good = CategoricalDensity::fit(&best_v, &best_w, n_options);
        let bad = CategoricalDensity::fit(&rest_v, &rest_w, n_options);
        let (good, bad) = match (good, bad) {
            (Ok(g), Ok(b)) => (g, b),
            _ => return self.rng.random_range(0..n_options),
        };
        let mut best = 0usize;
        let mut best_score = f64::NEG_INFINITY;
        for _ in 0..self.config.n_candidates {
            let i = good.sample(&mut self.rng);
            let score = good.prob(i).ln() - bad.prob(i).ln();
            if score > best_score {
                best_score = score;
                best = i;
            }
        }
        best
    }

    fn prior_draw(&mut self, prior: PriorShape) -> f64 {
        match prior {
            PriorShape::Normal { mean, stddev } => {
                Normal::new(mean, stddev).expect("positive stddev").sample(&mut self.rng)
            }
            PriorShape::Uniform { lo, hi } => self.rng.random_range(lo..hi),
        }
    }
}

#[cfg(test)]
mod tests;
