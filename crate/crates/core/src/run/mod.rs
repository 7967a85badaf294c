//! Experiment plumbing: the loss registry, shipped search-space files, the
//! multi-worker suggest-evaluate loop, and convergence reports.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, OnceLock};

use thiserror::Error;

use crate::pipeline::{
    self, cifar, BankSpec, ClassifierParams, DihistParams, DihistPooling, FbnccParams,
    FilterStrategy, InterLayer, LpoolParams, OuterLayer, OuterPooling, PipelineConfig,
};
use crate::space::{parse_space, Assignment, ExprGraph, SpaceError, Value};
use crate::tpe::{suggest_random, tpe_suggest, HpoaConfig};
use crate::trialdb::{best_of, StoreError, Trial, TrialStatus, TrialStore};

/// Environment variable naming the dataset root directory.
pub const DATA_ENV: &str = "HYPERSEARCH_DATA";

/// Search-space files shipped with the crate.
pub const VISION_DESK_SPACE: &str = include_str!("../../spaces/vision-desk.space");
pub const VISION_FULL_SPACE: &str = include_str!("../../spaces/vision-full.space");

/// Fixed split seed for the desk-scale CIFAR-10 subset, so every run sees the
/// same stratified images.
const DESK_SPLIT_SEED: u64 = 0xC1FA;
const DESK_TRAIN_PER_CLASS: usize = 200;
const DESK_VAL_PER_CLASS: usize = 100;
/// Bank-size ceiling keeping desk trials in the seconds-to-minutes range.
const DESK_MAX_FILTERS: usize = 64;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("unknown loss `{0}`")]
    UnknownLoss(String),
    #[error("invalid experiment config: {0}")]
    Config(String),
}

type LossFn = dyn Fn(&Assignment, u64) -> Result<f64, String> + Send + Sync;

/// A named loss function paired with its search-space definition.
#[derive(Clone)]
pub struct LossSpec {
    pub name: String,
    pub space_text: String,
    func: Arc<LossFn>,
}

impl std::fmt::Debug for LossSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LossSpec").field("name", &self.name).finish()
    }
}

impl LossSpec {
    pub fn new(
        name: impl Into<String>,
        space_text: impl Into<String>,
        func: impl Fn(&Assignment, u64) -> Result<f64, String> + Send + Sync + 'static,
    ) -> Self {
        LossSpec { name: name.into(), space_text: space_text.into(), func: Arc::new(func) }
    }

    pub fn space(&self) -> Result<ExprGraph, SpaceError> {
        parse_space(&self.space_text)
    }

    /// Evaluate the loss; `seed` varies per trial and feeds any stochastic
    /// parts of the evaluation (filter generation, in particular).
    pub fn evaluate(&self, assignment: &Assignment, seed: u64) -> Result<f64, String> {
        (self.func)(assignment, seed)
    }
}

fn real(a: &Assignment, label: &str) -> Result<f64, String> {
    a.resolved
        .get(label)
        .copied()
        .or_else(|| a.values.get(label).map(|v| v.as_f64()))
        .ok_or_else(|| format!("label `{label}` missing from assignment"))
}

fn index(a: &Assignment, label: &str) -> Result<usize, String> {
    match a.values.get(label) {
        Some(Value::Index(i)) => Ok(*i),
        other => Err(format!("label `{label}` is not a choice index: {other:?}")),
    }
}

fn int(a: &Assignment, label: &str) -> Result<i64, String> {
    match a.values.get(label) {
        Some(Value::Int(i)) => Ok(*i),
        other => Err(format!("label `{label}` is not an integer: {other:?}")),
    }
}

fn strategy_from(i: usize) -> Result<FilterStrategy, String> {
    match i {
        0 => Ok(FilterStrategy::RandomUniform),
        1 => Ok(FilterStrategy::ZcaProjection),
        2 => Ok(FilterStrategy::ZcaPatches),
        _ => Err(format!("strategy index {i} out of range")),
    }
}

/// Derived seed for one filter bank within a trial.
fn stage_seed(trial_seed: u64, stage: u64) -> u64 {
    mix(trial_seed, 0xBA4E ^ stage)
}

/// Build the pipeline configuration named by a desk-space assignment.
pub fn desk_pipeline_config(a: &Assignment, seed: u64) -> Result<PipelineConfig, String> {
    let err = |e: pipeline::PipelineError| e.to_string();
    let mut inter_layers = Vec::new();
    if index(a, "inter")? == 1 {
        inter_layers.push(InterLayer {
            bank: BankSpec {
                strategy: strategy_from(index(a, "inter_strategy")?)?,
                size: int(a, "inter_size")? as usize,
                seed: stage_seed(seed, 1),
                bandpass: real(a, "inter_bandpass")?,
            },
            k: int(a, "inter_k")? as usize,
            fbncc: FbnccParams::new(real(a, "inter_beta")?, false, true).map_err(err)?,
            lpool: LpoolParams::new(
                int(a, "inter_pool_size")? as usize,
                int(a, "inter_pool_stride")? as usize,
                real(a, "inter_pool_p")?,
            )
            .map_err(err)?,
        });
    }
    let pooling = match index(a, "pooling")? {
        0 => OuterPooling::LpoolLnorm {
            lpool: LpoolParams::new(
                int(a, "pool_size")? as usize,
                int(a, "pool_stride")? as usize,
                real(a, "pool_p")?,
            )
            .map_err(err)?,
            tau: real(a, "tau")?,
        },
        1 => OuterPooling::Dihist(
            DihistParams::new(real(a, "alpha")?, DihistPooling::Grid(int(a, "grid")? as usize))
                .map_err(err)?,
        ),
        _ => OuterPooling::Dihist(
            DihistParams::new(
                real(a, "alpha")?,
                DihistPooling::Box {
                    subsample: int(a, "box_sub")? as usize,
                    side: int(a, "box_side")? as usize,
                },
            )
            .map_err(err)?,
        ),
    };
    Ok(PipelineConfig {
        inter_layers,
        outer: OuterLayer {
            bank: BankSpec {
                strategy: strategy_from(index(a, "outer_strategy")?)?,
                size: int(a, "outer_size")? as usize,
                seed: stage_seed(seed, 2),
                bandpass: real(a, "outer_bandpass")?,
            },
            fbncc: FbnccParams::new(
                real(a, "outer_beta")?,
                index(a, "outer_rho")? == 1,
                index(a, "outer_eps")? == 1,
            )
            .map_err(err)?,
            pooling,
            max_filters: Some(DESK_MAX_FILTERS),
        },
        classifier: ClassifierParams {
            c_reg: real(a, "c_reg")?,
            var_cutoff: real(a, "var_cutoff")?,
        },
    })
}

/// Cached desk-scale CIFAR-10 split: 200 train / 100 validation per class.
fn desk_dataset() -> &'static Result<(cifar::LabeledImages, cifar::LabeledImages), String> {
    static DATA: OnceLock<Result<(cifar::LabeledImages, cifar::LabeledImages), String>> =
        OnceLock::new();
    DATA.get_or_init(|| {
        let root = std::env::var(DATA_ENV)
            .map_err(|_| format!("set {DATA_ENV} to the CIFAR-10 dataset root"))?;
        let all = cifar::read_training_batches(&root).map_err(|e| e.to_string())?;
        let per_class = DESK_TRAIN_PER_CLASS + DESK_VAL_PER_CLASS;
        let subset =
            cifar::stratified_subset(&all, per_class, DESK_SPLIT_SEED).map_err(|e| e.to_string())?;
        let mut train = cifar::LabeledImages::default();
        let mut val = cifar::LabeledImages::default();
        let mut seen = [0usize; cifar::N_CLASSES];
        for (img, &label) in subset.images.iter().zip(&subset.labels) {
            if seen[label] < DESK_TRAIN_PER_CLASS {
                train.images.push(img.clone());
                train.labels.push(label);
            } else {
                val.images.push(img.clone());
                val.labels.push(label);
            }
            seen[label] += 1;
        }
        Ok((train, val))
    })
}

/// The losses every binary knows about.
pub fn builtin_losses() -> Vec<LossSpec> {
    vec![
        LossSpec::new("quad1d", "x = uniform(-5, 5)\n", |a, _| {
            let x = real(a, "x")?;
            Ok((x - 3.0) * (x - 3.0))
        }),
        LossSpec::new(
            "branch2",
            "branch = choice(uniform(-5, 5), uniform(-5, 5))\n",
            |a, _| match a.choice_index("branch") {
                Some(0) => {
                    let u0 = real(a, "branch.0.uniform")?;
                    Ok((u0 - 3.0) * (u0 - 3.0) + 1.0)
                }
                Some(1) => {
                    let u1 = real(a, "branch.1.uniform")?;
                    Ok((u1 + 2.0) * (u1 + 2.0))
                }
                other => Err(format!("branch index {other:?} out of range")),
            },
        ),
        LossSpec::new("cifar10-desk", VISION_DESK_SPACE, |a, seed| {
            let config = desk_pipeline_config(a, seed)?;
            let (train, val) = match desk_dataset() {
                Ok(pair) => pair,
                Err(e) => return Err(e.clone()),
            };
            pipeline::evaluate_pipeline_loss(&config, train, val).map_err(|e| e.to_string())
        }),
    ]
}

pub fn find_loss(name: &str) -> Result<LossSpec, RunError> {
    builtin_losses()
        .into_iter()
        .find(|l| l.name == name)
        .ok_or_else(|| RunError::UnknownLoss(name.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Random,
    Tpe,
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "random" => Ok(Algorithm::Random),
            "tpe" => Ok(Algorithm::Tpe),
            other => Err(format!("unknown algorithm `{other}` (expected random or tpe)")),
        }
    }
}

/// One experiment: a space, a loss, an algorithm, and a budget.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub space: ExprGraph,
    pub loss: LossSpec,
    pub algorithm: Algorithm,
    pub max_trials: u64,
    pub workers: usize,
    pub seed: u64,
    /// Trial store location; `None` keeps the run in memory.
    pub store_path: Option<PathBuf>,
}

/// Stable per-trial seed so concurrency and resumption do not perturb
/// individual trial reproducibility.
pub fn trial_seed(experiment_seed: u64, born_order: u64) -> u64 {
    mix(experiment_seed, born_order)
}

fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Run the suggest-evaluate loop until the store holds `max_trials` trials.
///
/// Rerunning against an existing store resumes: prior trials count toward the
/// budget and seed the optimizer's history.
pub fn run_experiment(config: &ExperimentConfig) -> Result<TrialStore, RunError> {
    if config.max_trials < 1 {
        return Err(RunError::Config("max_trials must be >= 1".into()));
    }
    if config.workers < 1 {
        return Err(RunError::Config("workers must be >= 1".into()));
    }
    let store = match &config.store_path {
        Some(path) => TrialStore::open(path)?,
        None => TrialStore::in_memory(),
    };
    let issued = AtomicU64::new(store.len() as u64);
    let failure: std::sync::Mutex<Option<RunError>> = std::sync::Mutex::new(None);

    std::thread::scope(|scope| {
        for _ in 0..config.workers {
            scope.spawn(|| loop {
                if issued.fetch_add(1, Ordering::SeqCst) >= config.max_trials {
                    issued.fetch_sub(1, Ordering::SeqCst);
                    return;
                }
                if let Err(e) = run_one_trial(config, &store) {
                    *failure.lock().expect("poisoned") = Some(e);
                    return;
                }
            });
        }
    });

    match failure.into_inner().expect("poisoned") {
        Some(e) => Err(e),
        None => Ok(store),
    }
}

fn run_one_trial(config: &ExperimentConfig, store: &TrialStore) -> Result<(), RunError> {
    let reservation = store.reserve();
    let seed = trial_seed(config.seed, reservation.born_order);
    let snapshot = store.snapshot();
    let assignment = match config.algorithm {
        Algorithm::Random => suggest_random(&config.space, &snapshot, seed)?,
        Algorithm::Tpe => tpe_suggest(&config.space, &snapshot, &HpoaConfig::with_seed(seed))?,
    };
    let mut annotations = BTreeMap::new();
    for (name, value) in &assignment.resolved {
        annotations.insert(format!("resolved.{name}"), format!("{value}"));
    }
    let (status, loss) = match config.loss.evaluate(&assignment, seed) {
        Ok(loss) => (TrialStatus::Ok, Some(loss)),
        Err(message) => {
            annotations.insert("error".into(), message);
            (TrialStatus::Fail, None)
        }
    };
    store.append_trial(Trial {
        trial_id: reservation.trial_id,
        born_order: reservation.born_order,
        status,
        seed,
        loss,
        assignment: assignment.values,
        annotations,
    })?;
    Ok(())
}

/// Convergence table: one `(T, best-so-far)` row per trial in born order,
/// then the best trial's full assignment. Comma-separated text.
pub fn report(trials: &[Trial]) -> String {
    let mut sorted: Vec<&Trial> = trials.iter().collect();
    sorted.sort_by_key(|t| t.born_order);
    let mut out = String::from("T,best_loss\n");
    let mut best = f64::INFINITY;
    for (i, t) in sorted.iter().enumerate() {
        if let (TrialStatus::Ok, Some(l)) = (t.status, t.loss) {
            best = best.min(l);
        }
        if best.is_finite() {
            out.push_str(&format!("{},{}\n", i + 1, best));
        } else {
            out.push_str(&format!("{},\n", i + 1));
        }
    }
    if let Some(winner) = best_of(trials) {
        out.push('\n');
        out.push_str(&format!(
            "best_trial,{},loss,{}\n",
            winner.trial_id,
            winner.loss.expect("ok trial has loss")
        ));
        out.push_str("label,value\n");
        for (label, value) in &winner.assignment {
            out.push_str(&format!("{label},{value}\n"));
        }
    }
    out
}
