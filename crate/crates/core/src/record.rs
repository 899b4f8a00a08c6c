//! Run records: a JSON file per run holding the full configuration, every
//! selection event, per-final lineage, and the winning image.
//!
//! Records are written so that a run can be audited (who survived which
//! event and with what weights) and replayed bit for bit. Worker count is
//! deliberately absent: identical runs must produce identical bytes no
//! matter how they were parallelized.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{SearchConfig, Strategy};
use crate::costmodel::ModelDims;
use crate::error::{Error, Result};
use crate::generator::{PromptSpec, ToyGeneratorParams};
use crate::schedule::{BatchSchedule, ScaleSchedule};
use crate::tensor::Image;

pub const RECORD_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// Survivors picked for embedding diversity.
    Cluster,
    /// Survivors drawn from potential weights, with replacement.
    Resample,
    /// Plain descent: lowest slots continue, no scoring involved.
    Truncate,
}

/// One batch-narrowing (or resampling) step during a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionEvent {
    pub scale: usize,
    pub kind: EventKind,
    pub batch_before: usize,
    pub batch_after: usize,
    /// Reward per incoming candidate, as seen by the selector.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub raw_scores: Option<Vec<f64>>,
    /// Log-potential per incoming candidate.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub potentials: Option<Vec<f64>>,
    /// Normalized resampling weights.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub weights: Option<Vec<f64>>,
    /// Cluster index per incoming candidate.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub assignments: Option<Vec<usize>>,
    /// For each outgoing slot, the incoming slot it continues.
    pub selected: Vec<usize>,
}

/// Everything about one run. `final_image` belongs to `selected_slot`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub version: u32,
    pub strategy: Strategy,
    /// The seed every stream of this run was derived from.
    pub master_seed: u64,
    pub schedule: ScaleSchedule,
    pub batch: BatchSchedule,
    pub search: SearchConfig,
    pub generator: ToyGeneratorParams,
    /// Reward noise std per scale; None means noiseless scoring.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reward_noise: Option<Vec<f64>>,
    pub prompt: PromptSpec,
    pub dims: ModelDims,
    pub events: Vec<SelectionEvent>,
    /// Slot occupied at each scale, per final candidate. This is the replay
    /// key: slot and scale determine every RNG stream the candidate used.
    pub slot_histories: Vec<Vec<usize>>,
    /// Ancestor slot per selection event, per final candidate.
    pub lineages: Vec<Vec<usize>>,
    /// Reward of each final candidate as used for selection.
    pub final_rewards: Vec<f64>,
    /// Which final candidate was reported.
    pub selected_slot: usize,
    /// Noiseless reward of the reported image.
    pub outcome_reward: f64,
    /// Reward-model invocations over the whole run.
    pub reward_evals: u64,
    /// Total generator flops under the cost model.
    pub total_flops: u64,
    /// Reported image, rows concatenated.
    pub final_image: Vec<f64>,
    pub image_shape: (usize, usize),
}

pub fn image_to_rows(image: &Image) -> (Vec<f64>, (usize, usize)) {
    (image.iter().copied().collect(), image.dim())
}

pub fn rows_to_image(rows: &[f64], shape: (usize, usize)) -> Result<Image> {
    if rows.len() != shape.0 * shape.1 {
        return Err(Error::shape(format!(
            "{} values cannot fill a {}x{} image",
            rows.len(),
            shape.0,
            shape.1
        )));
    }
    Image::from_shape_vec(shape, rows.to_vec())
        .map_err(|e| Error::shape(format!("image from rows: {e}")))
}

impl RunRecord {
    pub fn final_image(&self) -> Result<Image> {
        rows_to_image(&self.final_image, self.image_shape)
    }

    /// Pretty JSON plus a trailing newline. The byte-level shape is part of
    /// the determinism contract, so tests compare these buffers directly.
    pub fn to_json_bytes(&self) -> Result<Vec<u8>> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn from_json_bytes(bytes: &[u8]) -> Result<Self> {
        let record: RunRecord = serde_json::from_slice(bytes)?;
        if record.version != RECORD_VERSION {
            return Err(Error::parse(format!(
                "record version {} (this build reads {RECORD_VERSION})",
                record.version
            )));
        }
        Ok(record)
    }

    /// Write via a temp file in the same directory plus rename, so readers
    /// never observe a half-written record.
    pub fn write_atomic(&self, path: &Path) -> Result<()> {
        let bytes = self.to_json_bytes()?;
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
        let tmp = match dir {
            Some(d) => d.join(format!(
                ".{}.tmp{}",
                path.file_name().and_then(|n| n.to_str()).unwrap_or("record"),
                std::process::id()
            )),
            None => std::path::PathBuf::from(format!(".record.tmp{}", std::process::id())),
        };
        std::fs::write(&tmp, &bytes)?;
        std::fs::rename(&tmp, path).map_err(|e| {
            let _ = std::fs::remove_file(&tmp);
            Error::Io(e)
        })?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_json_bytes(&bytes)
    }
}
