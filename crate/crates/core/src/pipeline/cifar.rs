//! CIFAR-10 binary batch ingestion and stratified subsetting.
//!
//! Batch files hold 10000 records of 3073 bytes: one label byte (0-9)
//! followed by 3072 pixel bytes as three 1024-byte channel planes (red,
//! green, blue), each row-major 32x32.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use ndarray::Array3;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{FeatureMap, PipelineError};

pub const IMAGE_SIDE: usize = 32;
pub const N_CLASSES: usize = 10;
const RECORD_BYTES: usize = 1 + 3 * IMAGE_SIDE * IMAGE_SIDE;

/// Images as (32, 32, 3) maps scaled to [0, 1], with their labels.
#[derive(Debug, Clone, Default)]
pub struct LabeledImages {
    pub images: Vec<FeatureMap>,
    pub labels: Vec<usize>,
}

impl LabeledImages {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// Read one binary batch file.
pub fn read_batch(path: impl AsRef<Path>) -> Result<LabeledImages, PipelineError> {
    let mut bytes = Vec::new();
    File::open(path.as_ref())
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| {
            PipelineError::MissingData(format!("cannot read {}: {e}", path.as_ref().display()))
        })?;
    if bytes.is_empty() || bytes.len() % RECORD_BYTES != 0 {
        return Err(PipelineError::MissingData(format!(
            "{}: size {} is not a multiple of {RECORD_BYTES}",
            path.as_ref().display(),
            bytes.len()
        )));
    }
    let mut out = LabeledImages::default();
    for record in bytes.chunks_exact(RECORD_BYTES) {
        let label = record[0] as usize;
        if label >= N_CLASSES {
            return Err(PipelineError::MissingData(format!(
                "label byte {label} out of range"
            )));
        }
        let pixels = &record[1..];
        let img = Array3::from_shape_fn((IMAGE_SIDE, IMAGE_SIDE, 3), |(r, c, ch)| {
            pixels[ch * IMAGE_SIDE * IMAGE_SIDE + r * IMAGE_SIDE + c] as f64 / 255.0
        });
        out.images.push(img);
        out.labels.push(label);
    }
    Ok(out)
}

/// Read every `data_batch_*.bin` under a dataset root (searching the root
/// itself and the conventional `cifar-10-batches-bin` subdirectory).
pub fn read_training_batches(root: impl AsRef<Path>) -> Result<LabeledImages, PipelineError> {
    let root = root.as_ref();
    let dirs = [root.to_path_buf(), root.join("cifar-10-batches-bin")];
    let mut all = LabeledImages::default();
    for dir in &dirs {
        for i in 1..=5 {
            let path = dir.join(format!("data_batch_{i}.bin"));
            if path.exists() {
                let batch = read_batch(&path)?;
                all.images.extend(batch.images);
                all.labels.extend(batch.labels);
            }
        }
        if !all.is_empty() {
            return Ok(all);
        }
    }
    Err(PipelineError::MissingData(format!(
        "no data_batch_*.bin files under {}",
        root.display()
    )))
}

/// Draw a stratified subset: `per_class` examples of every class, in a
/// deterministic order given the seed.
pub fn stratified_subset(
    data: &LabeledImages,
    per_class: usize,
    seed: u64,
) -> Result<LabeledImages, PipelineError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); N_CLASSES];
    for (i, &l) in data.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut picked = Vec::with_capacity(per_class * N_CLASSES);
    for (class, members) in by_class.iter_mut().enumerate() {
        if members.len() < per_class {
            return Err(PipelineError::MissingData(format!(
                "class {class} has only {} examples, need {per_class}",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        picked.extend(members[..per_class].iter().copied());
    }
    picked.sort_unstable();
    Ok(LabeledImages {
        images: picked.iter().map(|&i| data.images[i].clone()).collect(),
        labels: picked.iter().map(|&i| data.labels[i]).collect(),
    })
}

/// Standard luma gray-scale conversion of an RGB map.
pub fn to_grayscale(image: &FeatureMap) -> FeatureMap {
    let (h, w, _) = image.dim();
    Array3::from_shape_fn((h, w, 1), |(r, c, _)| {
        0.299 * image[(r, c, 0)] + 0.587 * image[(r, c, 1)] + 0.114 * image[(r, c, 2)]
    })
}
