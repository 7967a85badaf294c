//! Feed-forward image classification model family used as the flagship loss
//! function: 0-2 inter-layers of filtering and pooling, an outer layer with
//! one of three pooling options, and a linear SVM read-out.

pub mod cifar;
pub mod filters;
pub mod ops;
pub mod svm;
pub mod zca;

pub use filters::{generate_filters, sample_patches, FilterBank, FilterStrategy};
pub use ops::{
    dihist, fbncc, lnorm, lpool, DihistParams, DihistPooling, FbnccParams, LnormParams, LpoolParams,
};
pub use svm::{train_linear_svm, LinearModel};
pub use zca::{zca_fit, ZcaTransform};

use ndarray::{Array2, Array3};
use thiserror::Error;

/// Rank-3 feature map: (rows, columns, channels).
pub type FeatureMap = Array3<f64>;

/// Total output features may approach but not exceed this cap; the outer
/// filter count is derived from it.
pub const FEATURE_CAP: usize = 16_000;

/// Patches drawn from the training maps when fitting ZCA-based filter banks.
const ZCA_SAMPLE_PATCHES: usize = 2_000;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("rank deficiency: {0}")]
    RankDeficient(String),
    #[error("missing data: {0}")]
    MissingData(String),
    #[error("degenerate problem: {0}")]
    Degenerate(String),
}

/// How to generate one filter bank (the count is separate: fixed for
/// inter-layers, derived from [`FEATURE_CAP`] for the outer layer).
#[derive(Debug, Clone, Copy)]
pub struct BankSpec {
    pub strategy: FilterStrategy,
    pub size: usize,
    pub seed: u64,
    /// Eigenvalue damping for the ZCA strategies; ignored otherwise.
    pub bandpass: f64,
}

/// One inter-layer: fbncc with `k` filters followed by lpool.
#[derive(Debug, Clone)]
pub struct InterLayer {
    pub bank: BankSpec,
    pub k: usize,
    pub fbncc: FbnccParams,
    pub lpool: LpoolParams,
}

/// The outer layer's pooling alternative.
#[derive(Debug, Clone, Copy)]
pub enum OuterPooling {
    /// lpool followed by lnorm; the lnorm neighborhood defaults to the
    /// pooling size.
    LpoolLnorm { lpool: LpoolParams, tau: f64 },
    Dihist(DihistParams),
}

/// The outer layer: fbncc (filter count derived from the feature cap) plus
/// one pooling option.
#[derive(Debug, Clone)]
pub struct OuterLayer {
    pub bank: BankSpec,
    pub fbncc: FbnccParams,
    pub pooling: OuterPooling,
    /// Optional ceiling on the derived filter count, for budgeted runs.
    pub max_filters: Option<usize>,
}

#[derive(Debug, Clone, Copy)]
pub struct ClassifierParams {
    pub c_reg: f64,
    pub var_cutoff: f64,
}

/// Full pipeline configuration: 0-2 inter-layers, an outer layer, and the
/// classifier.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub inter_layers: Vec<InterLayer>,
    pub outer: OuterLayer,
    pub classifier: ClassifierParams,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.inter_layers.len() > 2 {
            return Err(PipelineError::Param(format!(
                "at most 2 inter-layers, got {}",
                self.inter_layers.len()
            )));
        }
        if !(self.classifier.c_reg > 0.0) {
            return Err(PipelineError::Param("classifier C must be > 0".into()));
        }
        if !(self.classifier.var_cutoff >= 0.0) {
            return Err(PipelineError::Param("variance cutoff must be >= 0".into()));
        }
        Ok(())
    }
}

/// Spatial output cells per outer filter, and the channel multiplier (2 for
/// the dihist halves, 1 for lpool+lnorm).
fn outer_cells_per_filter(
    input: (usize, usize),
    outer: &OuterLayer,
) -> Result<usize, PipelineError> {
    let (h, w) = input;
    let s = outer.bank.size;
    if s > h || s > w {
        return Err(PipelineError::Shape(format!(
            "outer filter size {s} exceeds {h}x{w} input"
        )));
    }
    let (fh, fw) = (h - s + 1, w - s + 1);
    match outer.pooling {
        OuterPooling::LpoolLnorm { lpool, .. } => {
            if lpool.size > fh || lpool.size > fw {
                return Err(PipelineError::Shape(format!(
                    "outer lpool size {} exceeds {fh}x{fw} map",
                    lpool.size
                )));
            }
            let ph = (fh - lpool.size) / lpool.stride + 1;
            let pw = (fw - lpool.size) / lpool.stride + 1;
            let nb = lpool.size; // lnorm neighborhood follows the pooling size
            if nb > ph || nb > pw {
                return Err(PipelineError::Shape(format!(
                    "lnorm neighborhood {nb} exceeds {ph}x{pw} pooled map"
                )));
            }
            Ok((ph - nb + 1) * (pw - nb + 1))
        }
        OuterPooling::Dihist(params) => {
            let (oh, ow, _) = ops::dihist_regions(fh, fw, params.pooling)?;
            Ok(oh * ow * 2)
        }
    }
}

/// Largest filter count whose total feature width stays within the cap.
///
/// Errors when a single filter already exceeds the cap.
pub fn outer_filter_count(
    input: (usize, usize),
    outer: &OuterLayer,
) -> Result<usize, PipelineError> {
    let per_filter = outer_cells_per_filter(input, outer)?;
    if per_filter > FEATURE_CAP {
        return Err(PipelineError::Shape(format!(
            "a single outer filter yields {per_filter} features, above the cap {FEATURE_CAP}"
        )));
    }
    Ok(FEATURE_CAP / per_filter)
}

/// A fitted extractor: the generated banks, reusable on new image sets.
#[derive(Debug, Clone)]
pub struct Extractor {
    config: PipelineConfig,
    inter_banks: Vec<FilterBank>,
    outer_bank: FilterBank,
}

impl Extractor {
    /// Generate all filter banks, drawing ZCA patches from `images` at each
    /// stage's input resolution.
    pub fn fit(images: &[FeatureMap], config: PipelineConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        if images.is_empty() {
            return Err(PipelineError::MissingData("no training images".into()));
        }
        let mut maps: Vec<FeatureMap> = images.to_vec();
        let mut inter_banks = Vec::new();
        for layer in &config.inter_layers {
            let bank = build_bank(&maps, &layer.bank, layer.k)?;
            for m in maps.iter_mut() {
                let f = fbncc(m, &bank, &layer.fbncc)?;
                *m = lpool(&f, &layer.lpool)?;
            }
            inter_banks.push(bank);
        }
        let (h, w, _) = maps[0].dim();
        let mut k = outer_filter_count((h, w), &config.outer)?;
        if let Some(cap) = config.outer.max_filters {
            k = k.min(cap.max(1));
        }
        let outer_bank = build_bank(&maps, &config.outer.bank, k)?;
        Ok(Extractor { config, inter_banks, outer_bank })
    }

    /// One flattened feature row per image.
    pub fn transform(&self, images: &[FeatureMap]) -> Result<Array2<f64>, PipelineError> {
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(images.len());
        let mut width = 0usize;
        for image in images {
            let mut map = image.clone();
            for (layer, bank) in self.config.inter_layers.iter().zip(&self.inter_banks) {
                let f = fbncc(&map, bank, &layer.fbncc)?;
                map = lpool(&f, &layer.lpool)?;
            }
            let f = fbncc(&map, &self.outer_bank, &self.config.outer.fbncc)?;
            let pooled = match self.config.outer.pooling {
                OuterPooling::LpoolLnorm { lpool: lp, tau } => {
                    let p = lpool(&f, &lp)?;
                    let ln = LnormParams::new(tau, lp.size)?;
                    lnorm(&p, &ln)?
                }
                OuterPooling::Dihist(params) => dihist(&f, &params)?,
            };
            let row: Vec<f64> = pooled.iter().copied().collect();
            if width == 0 {
                width = row.len();
            } else if width != row.len() {
                return Err(PipelineError::Shape("images differ in dimensions".into()));
            }
            rows.push(row);
        }
        debug_assert!(width <= FEATURE_CAP);
        let mut out = Array2::<f64>::zeros((rows.len(), width));
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        Ok(out)
    }

    pub fn feature_width(&self, input: (usize, usize, usize)) -> Result<usize, PipelineError> {
        let probe = Array3::zeros(input);
        Ok(self.transform(std::slice::from_ref(&probe))?.ncols())
    }
}

fn build_bank(maps: &[FeatureMap], spec: &BankSpec, k: usize) -> Result<FilterBank, PipelineError> {
    let channels = maps[0].dim().2;
    let data = match spec.strategy {
        FilterStrategy::RandomUniform => None,
        _ => Some(sample_patches(maps, spec.size, ZCA_SAMPLE_PATCHES, spec.seed ^ 0x5ca1ab1e)?),
    };
    generate_filters(
        spec.strategy,
        k,
        spec.size,
        channels,
        spec.seed,
        data.as_ref(),
        spec.bandpass,
    )
}

/// Run the full pipeline as a loss function: fit on the training set, train
/// the classifier, return the validation error rate in [0, 1].
pub fn evaluate_pipeline_loss(
    config: &PipelineConfig,
    train: &cifar::LabeledImages,
    validation: &cifar::LabeledImages,
) -> Result<f64, PipelineError> {
    let extractor = Extractor::fit(&train.images, config.clone())?;
    let train_x = extractor.transform(&train.images)?;
    let model = train_linear_svm(
        &train_x,
        &train.labels,
        config.classifier.c_reg,
        config.classifier.var_cutoff,
    )?;
    let val_x = extractor.transform(&validation.images)?;
    Ok(model.error_rate(&val_x, &validation.labels))
}
