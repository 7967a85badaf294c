//! Search-space definition: a DAG of stochastic and deterministic expression
//! nodes, parsed from a small text language.
//!
//! A space is a sequence of named assignments. Each assignment's right-hand
//! side is an expression over stochastic primitives (`normal`, `lognormal`,
//! `uniform`, `randint`, `choice`), deterministic functions (`log`, `exp`,
//! `neg`), numeric constants, and references to earlier assignments.
//! `choice` nodes make parameters conditional: nodes inside an unselected
//! option are inactive and draw no sample.

mod parse;
pub(crate) mod sample;

pub use parse::{parse_space, ParsePosition};
pub use sample::sample_prior;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index of a node inside an [`ExprGraph`] arena.
pub type NodeId = usize;

/// Deterministic unary functions available in the language.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FuncOp {
    Log,
    Exp,
    Neg,
}

impl FuncOp {
    pub fn name(self) -> &'static str {
        match self {
            FuncOp::Log => "log",
            FuncOp::Exp => "exp",
            FuncOp::Neg => "neg",
        }
    }
}

/// One node of the expression graph.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    Constant(f64),
    Normal { mean: f64, stddev: f64 },
    Lognormal { log_mean: f64, log_stddev: f64 },
    Uniform { lo: f64, hi: f64 },
    Randint { lo: i64, hi: i64 },
    Choice(Vec<NodeId>),
    Func { op: FuncOp, arg: NodeId },
    /// Reference to an earlier root assignment; shares that root's sample.
    Ref(NodeId),
}

impl NodeKind {
    /// Stochastic nodes carry a hyperparameter label; constants, functions
    /// and references do not.
    pub fn is_stochastic(&self) -> bool {
        matches!(
            self,
            NodeKind::Normal { .. }
                | NodeKind::Lognormal { .. }
                | NodeKind::Uniform { .. }
                | NodeKind::Randint { .. }
                | NodeKind::Choice(_)
        )
    }

    fn dist_name(&self) -> &'static str {
        match self {
            NodeKind::Normal { .. } => "normal",
            NodeKind::Lognormal { .. } => "lognormal",
            NodeKind::Uniform { .. } => "uniform",
            NodeKind::Randint { .. } => "randint",
            NodeKind::Choice(_) => "choice",
            _ => "",
        }
    }
}

/// An expression node together with its label, if stochastic.
#[derive(Debug, Clone, PartialEq)]
pub struct ExprNode {
    pub kind: NodeKind,
    pub label: Option<String>,
}

/// A sampled value for one hyperparameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Value {
    /// Draw from a continuous distribution.
    Real(f64),
    /// Draw from `randint`.
    Int(i64),
    /// Selected option index of a `choice`.
    Index(usize),
}

impl Value {
    pub fn as_f64(self) -> f64 {
        match self {
            Value::Real(v) => v,
            Value::Int(v) => v as f64,
            Value::Index(v) => v as f64,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Real(v) => write!(f, "{v}"),
            Value::Int(v) => write!(f, "{v}"),
            Value::Index(v) => write!(f, "{v}"),
        }
    }
}

/// One sampled configuration: the per-label draws plus the resolved value of
/// every root assignment.
///
/// The key set of `values` is exactly the set of labels active under this
/// configuration's own choice selections.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Assignment {
    pub values: BTreeMap<String, Value>,
    pub resolved: BTreeMap<String, f64>,
}

impl Assignment {
    /// Option index chosen at a given choice label, if that label is active.
    pub fn choice_index(&self, label: &str) -> Option<usize> {
        match self.values.get(label) {
            Some(Value::Index(i)) => Some(*i),
            _ => None,
        }
    }
}

/// Errors raised while building or evaluating a graph.
#[derive(Debug, Error)]
pub enum SpaceError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("undefined reference `{0}`")]
    UndefinedReference(String),
    #[error("duplicate root name `{0}`")]
    DuplicateRoot(String),
    #[error("bound violation in `{context}`: {message}")]
    BoundViolation { context: String, message: String },
    #[error("evaluation error at `{context}`: {message}")]
    Evaluation { context: String, message: String },
    #[error("missing choice value for label `{0}`")]
    MissingChoiceValue(String),
}

/// A validation finding; `validate_graph` returns these instead of failing.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    /// Label or root name closest to the offending node.
    pub context: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.context, self.message)
    }
}

/// The validated search space: an arena of nodes plus ordered, named roots.
///
/// Immutable after construction; safe to share across worker threads.
#[derive(Debug, Clone, PartialEq)]
pub struct ExprGraph {
    nodes: Vec<ExprNode>,
    roots: Vec<(String, NodeId)>,
}

impl ExprGraph {
    /// Build a graph from raw parts, assigning labels. Fails on duplicate
    /// roots; structural invariants are reported by [`ExprGraph::validate`].
    pub fn from_parts(
        nodes: Vec<NodeKind>,
        roots: Vec<(String, NodeId)>,
    ) -> Result<Self, SpaceError> {
        let nodes = nodes
            .into_iter()
            .map(|kind| ExprNode { kind, label: None })
            .collect();
        let mut graph = ExprGraph { nodes, roots };
        graph.check_unique_roots()?;
        graph.assign_labels();
        Ok(graph)
    }

    fn check_unique_roots(&self) -> Result<(), SpaceError> {
        let mut seen = BTreeSet::new();
        for (name, _) in &self.roots {
            if !seen.insert(name.clone()) {
                return Err(SpaceError::DuplicateRoot(name.clone()));
            }
        }
        Ok(())
    }

    /// Deterministic labeling: the root's name, then the option index at each
    /// enclosing `choice`, then the distribution name — except that a
    /// stochastic node sitting directly at a root takes the root name alone.
    /// `log(...)`/`exp(...)`/`neg(...)` wrappers contribute nothing, so the
    /// uniform inside `b = choice(0, log(uniform(2,10)), a)` is labeled
    /// `b.1.uniform`.
    fn assign_labels(&mut self) {
        let roots = self.roots.clone();
        for (name, id) in roots {
            self.label_subtree(id, &name, true);
        }
    }

    fn label_subtree(&mut self, id: NodeId, path: &str, at_root: bool) {
        let kind = self.nodes[id].kind.clone();
        if kind.is_stochastic() {
            let label = if at_root {
                path.to_string()
            } else {
                format!("{path}.{}", kind.dist_name())
            };
            self.nodes[id].label = Some(label);
        }
        match kind {
            NodeKind::Choice(options) => {
                let prefix = path.to_string();
                for (i, opt) in options.iter().enumerate() {
                    // forward edges only; backward edges are reported by validate()
                    if *opt < id {
                        self.label_subtree(*opt, &format!("{prefix}.{i}"), false);
                    }
                }
            }
            // transparent: the function adds no path component
            NodeKind::Func { arg, .. } if arg < id => {
                self.label_subtree(arg, path, false);
            }
            _ => {}
        }
    }

    pub fn node(&self, id: NodeId) -> &ExprNode {
        &self.nodes[id]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Ordered root assignments (name, node).
    pub fn roots(&self) -> &[(String, NodeId)] {
        &self.roots
    }

    pub fn root(&self, name: &str) -> Option<NodeId> {
        self.roots
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, id)| *id)
    }

    /// The node carrying a given label, if any.
    pub fn node_by_label(&self, label: &str) -> Option<(NodeId, &ExprNode)> {
        self.nodes
            .iter()
            .enumerate()
            .find(|(_, n)| n.label.as_deref() == Some(label))
    }

    /// All stochastic labels in the graph, in node order.
    pub fn all_labels(&self) -> Vec<String> {
        self.nodes
            .iter()
            .filter_map(|n| n.label.clone())
            .collect()
    }

    /// Structural diagnostics. Empty iff every type invariant holds.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let diag = |ctx: &str, msg: String| Diagnostic {
            context: ctx.to_string(),
            message: msg,
        };
        for (id, node) in self.nodes.iter().enumerate() {
            let ctx = node
                .label
                .clone()
                .unwrap_or_else(|| format!("node#{id}"));
            let check_edge = |target: NodeId, out: &mut Vec<Diagnostic>| {
                if target >= id {
                    out.push(diag(&ctx, "cycle: node references itself or a later node".into()));
                }
            };
            match &node.kind {
                NodeKind::Normal { stddev, .. } | NodeKind::Lognormal { log_stddev: stddev, .. } => {
                    if !(*stddev > 0.0) {
                        out.push(diag(&ctx, format!("stddev must be > 0, got {stddev}")));
                    }
                }
                NodeKind::Uniform { lo, hi } => {
                    if !(lo < hi) {
                        out.push(diag(&ctx, format!("uniform requires lo < hi, got [{lo}, {hi}]")));
                    }
                }
                NodeKind::Randint { lo, hi } => {
                    if lo > hi {
                        out.push(diag(&ctx, format!("randint requires lo <= hi, got [{lo}, {hi}]")));
                    }
                }
                NodeKind::Choice(options) => {
                    if options.is_empty() {
                        out.push(diag(&ctx, "choice requires at least one option".into()));
                    }
                    for opt in options {
                        check_edge(*opt, &mut out);
                    }
                }
                NodeKind::Func { arg, .. } => check_edge(*arg, &mut out),
                NodeKind::Ref(target) => check_edge(*target, &mut out),
                NodeKind::Constant(_) => {}
            }
        }
        // label uniqueness
        let mut seen = BTreeMap::new();
        for node in &self.nodes {
            if let Some(label) = &node.label {
                *seen.entry(label.clone()).or_insert(0usize) += 1;
            }
        }
        for (label, count) in seen {
            if count > 1 {
                out.push(Diagnostic {
                    context: label.clone(),
                    message: format!("label appears on {count} nodes"),
                });
            }
        }
        // reachability from roots
        let mut reached = vec![false; self.nodes.len()];
        for (_, id) in &self.roots {
            self.mark_reachable(*id, &mut reached);
        }
        for (id, r) in reached.iter().enumerate() {
            if !r {
                out.push(Diagnostic {
                    context: format!("node#{id}"),
                    message: "node is unreachable from every root".into(),
                });
            }
        }
        out
    }

    fn mark_reachable(&self, id: NodeId, reached: &mut [bool]) {
        if reached[id] {
            return;
        }
        reached[id] = true;
        match &self.nodes[id].kind {
            NodeKind::Choice(options) => {
                for opt in options {
                    self.mark_reachable(*opt, reached);
                }
            }
            NodeKind::Func { arg, .. } => self.mark_reachable(*arg, reached),
            NodeKind::Ref(target) => self.mark_reachable(*target, reached),
            _ => {}
        }
    }

    /// The stochastic labels reachable from the roots when every choice node
    /// is collapsed to the option selected in `choice_values`.
    ///
    /// Fails if a reachable choice node has no entry in `choice_values`.
    pub fn active_labels(
        &self,
        choice_values: &BTreeMap<String, usize>,
    ) -> Result<BTreeSet<String>, SpaceError> {
        let mut active = BTreeSet::new();
        let mut visited = vec![false; self.nodes.len()];
        for (_, id) in &self.roots {
            self.collect_active(*id, choice_values, &mut active, &mut visited)?;
        }
        Ok(active)
    }

    fn collect_active(
        &self,
        id: NodeId,
        choice_values: &BTreeMap<String, usize>,
        active: &mut BTreeSet<String>,
        visited: &mut [bool],
    ) -> Result<(), SpaceError> {
        if visited[id] {
            return Ok(());
        }
        visited[id] = true;
        let node = &self.nodes[id];
        if let Some(label) = &node.label {
            active.insert(label.clone());
        }
        match &node.kind {
            NodeKind::Choice(options) => {
                let label = node.label.as_ref().expect("choice nodes are labeled");
                let idx = *choice_values
                    .get(label)
                    .ok_or_else(|| SpaceError::MissingChoiceValue(label.clone()))?;
                let opt = *options.get(idx).ok_or_else(|| SpaceError::Evaluation {
                    context: label.clone(),
                    message: format!("choice index {idx} out of range ({} options)", options.len()),
                })?;
                self.collect_active(opt, choice_values, active, visited)?;
            }
            NodeKind::Func { arg, .. } => {
                self.collect_active(*arg, choice_values, active, visited)?;
            }
            NodeKind::Ref(target) => {
                self.collect_active(*target, choice_values, active, visited)?;
            }
            _ => {}
        }
        Ok(())
    }

    /// Render the graph back to source text. The output reparses to a
    /// structurally identical graph.
    pub fn print(&self) -> String {
        let mut out = String::new();
        for (name, id) in &self.roots {
            out.push_str(name);
            out.push_str(" = ");
            self.print_node(*id, &mut out);
            out.push('\n');
        }
        out
    }

    fn print_node(&self, id: NodeId, out: &mut String) {
        match &self.nodes[id].kind {
            NodeKind::Constant(v) => out.push_str(&format!("{v}")),
            NodeKind::Normal { mean, stddev } => out.push_str(&format!("normal({mean}, {stddev})")),
            NodeKind::Lognormal { log_mean, log_stddev } => {
                out.push_str(&format!("lognormal({log_mean}, {log_stddev})"))
            }
            NodeKind::Uniform { lo, hi } => out.push_str(&format!("uniform({lo}, {hi})")),
            NodeKind::Randint { lo, hi } => out.push_str(&format!("randint({lo}, {hi})")),
            NodeKind::Choice(options) => {
                out.push_str("choice(");
                for (i, opt) in options.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    self.print_node(*opt, out);
                }
                out.push(')');
            }
            NodeKind::Func { op, arg } => {
                out.push_str(op.name());
                out.push('(');
                self.print_node(*arg, out);
                out.push(')');
            }
            NodeKind::Ref(target) => {
                let name = self
                    .roots
                    .iter()
                    .find(|(_, id)| id == target)
                    .map(|(n, _)| n.as_str())
                    .unwrap_or("?");
                out.push_str(name);
            }
        }
    }

    /// Check that an assignment's key set matches its own active scope.
    pub fn is_scope_sound(&self, assignment: &Assignment) -> bool {
        let choices: BTreeMap<String, usize> = assignment
            .values
            .iter()
            .filter_map(|(label, v)| match v {
                Value::Index(i) => Some((label.clone(), *i)),
                _ => None,
            })
            .collect();
        match self.active_labels(&choices) {
            Ok(active) => {
                let keys: BTreeSet<String> = assignment.values.keys().cloned().collect();
                keys == active
            }
            Err(_) => false,
        }
    }
}
