//! Drawing configurations from the prior.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{Assignment, ExprGraph, FuncOp, NodeId, NodeKind, SpaceError, Value};

/// Sample one configuration from the prior.
///
/// Roots are evaluated in definition order. Stochastic nodes on active paths
/// draw from their declared distributions; nodes inside unselected choice
/// options draw nothing and leave no entry in the assignment. A referenced
/// root shares its single sample with every referencing site.
pub fn sample_prior<R: Rng + ?Sized>(
    graph: &ExprGraph,
    rng: &mut R,
) -> Result<Assignment, SpaceError> {
    let mut values = BTreeMap::new();
    let mut resolved = BTreeMap::new();
    let mut memo: BTreeMap<NodeId, f64> = BTreeMap::new();
    for (name, id) in graph.roots() {
        let v = eval_node(graph, *id, rng, &mut values, &mut memo)?;
        resolved.insert(name.clone(), v);
    }
    Ok(Assignment { values, resolved })
}

fn eval_node<R: Rng + ?Sized>(
    graph: &ExprGraph,
    id: NodeId,
    rng: &mut R,
    values: &mut BTreeMap<String, Value>,
    memo: &mut BTreeMap<NodeId, f64>,
) -> Result<f64, SpaceError> {
    if let Some(v) = memo.get(&id) {
        return Ok(*v);
    }
    let node = graph.node(id);
    let label = node.label.clone();
    let resolved = match &node.kind {
        NodeKind::Constant(v) => *v,
        NodeKind::Normal { mean, stddev } => {
            let v = Normal::new(*mean, *stddev).expect("validated stddev").sample(rng);
            values.insert(label.expect("stochastic node has a label"), Value::Real(v));
            v
        }
        NodeKind::Lognormal { log_mean, log_stddev } => {
            let v = Normal::new(*log_mean, *log_stddev)
                .expect("validated stddev")
                .sample(rng)
                .exp();
            values.insert(label.expect("stochastic node has a label"), Value::Real(v));
            v
        }
        NodeKind::Uniform { lo, hi } => {
            let v = rng.random_range(*lo..*hi);
            values.insert(label.expect("stochastic node has a label"), Value::Real(v));
            v
        }
        NodeKind::Randint { lo, hi } => {
            let v = rng.random_range(*lo..=*hi);
            values.insert(label.expect("stochastic node has a label"), Value::Int(v));
            v as f64
        }
        NodeKind::Choice(options) => {
            let idx = rng.random_range(0..options.len());
            values.insert(label.expect("stochastic node has a label"), Value::Index(idx));
            eval_node(graph, options[idx], rng, values, memo)?
        }
        NodeKind::Func { op, arg } => {
            let inner = eval_node(graph, *arg, rng, values, memo)?;
            apply_func(*op, inner, graph.node(id).label.as_deref().unwrap_or("func"))?
        }
        NodeKind::Ref(target) => eval_node(graph, *target, rng, values, memo)?,
    };
    memo.insert(id, resolved);
    Ok(resolved)
}

pub(crate) fn apply_func(op: FuncOp, value: f64, context: &str) -> Result<f64, SpaceError> {
    match op {
        FuncOp::Log => {
            if value <= 0.0 {
                Err(SpaceError::Evaluation {
                    context: context.to_string(),
                    message: format!("log of non-positive value {value}"),
                })
            } else {
                Ok(value.ln())
            }
        }
        FuncOp::Exp => Ok(value.exp()),
        FuncOp::Neg => Ok(-value),
    }
}
