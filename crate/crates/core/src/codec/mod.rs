//! Frame and sequence coding on top of the pyramid, model and range coder.
//!
//! Symbol schedule per frame: levels `1..D` ascending; inside a level the
//! even-group `s0`, even `s1`, odd `s0`, odd `s1` passes, each over children
//! in Morton order. Level 0 (the single root cell) travels raw in the header.

mod frame;
#[cfg(feature = "encoder")]
mod synthetic;
#[cfg(feature = "encoder")]
mod train;

use sha2::{Digest, Sha256};

pub use frame::{decode_frame, decode_sequence, teacher_forced_bits, DecodedFrame, LevelInputs};
#[cfg(feature = "encoder")]
pub use frame::{encode_frame, encode_sequence, EncodedFrame};
#[cfg(feature = "encoder")]
pub use synthetic::{make_synthetic_sequence, SyntheticKind, SyntheticSpec};
#[cfg(feature = "encoder")]
pub use train::{build_training_set, evaluate, train, TrainConfig, TrainReport, TrainingPair};

use crate::error::Error;
use crate::geom::NeighborhoodSize;
use crate::model::{ModelConfig, ModelParams};
use crate::pyramid::FramePyramid;

/// Hash written into every bitstream: the upper 32 bits identify the model
/// configuration, the lower 32 bits the parameter values.
pub fn stream_hash(params: &ModelParams) -> u64 {
    (params.config().hash32() as u64) << 32 | (params.digest() & 0xffff_ffff)
}

/// Names the configuration field that explains a hash mismatch, when a
/// single-field change of `ours` reproduces the stream's config half.
pub fn diagnose_mismatch(ours: &ModelConfig, found: u64) -> Option<String> {
    let want = (found >> 32) as u32;
    if ours.hash32() == want {
        return Some("parameters".into());
    }
    let sizes = [NeighborhoodSize::Face7, NeighborhoodSize::Cube27, NeighborhoodSize::Cube125];
    let mut candidates: Vec<(&str, ModelConfig)> = Vec::new();
    for w in [4, 8, 16, 24, 32, 48, 64, 96, 128, 256] {
        candidates.push(("width", ModelConfig { width: w, ..*ours }));
    }
    for s in sizes {
        candidates.push(("vd", ModelConfig { vd: s, ..*ours }));
        candidates.push(("vfine", ModelConfig { vfine: s, ..*ours }));
    }
    candidates.push(("coarse", ModelConfig { coarse: !ours.coarse, ..*ours }));
    candidates.push(("fine", ModelConfig { fine: !ours.fine, ..*ours }));
    candidates.push(("sibling", ModelConfig { sibling: !ours.sibling, ..*ours }));
    candidates.push((
        "share_embedding",
        ModelConfig {
            share_embedding: !ours.share_embedding,
            ..*ours
        },
    ));
    candidates
        .into_iter()
        .find(|(_, c)| c != ours && c.hash32() == want)
        .map(|(name, _)| name.to_string())
}

pub(crate) fn check_hash(params: &ModelParams, found: u64) -> Result<(), Error> {
    let expected = stream_hash(params);
    if expected != found {
        return Err(Error::HashMismatch {
            expected,
            found,
            field: diagnose_mismatch(params.config(), found),
        });
    }
    Ok(())
}

/// Reconstructed previous frame, or nothing before the first frame.
#[derive(Debug, Clone, Default)]
pub struct FrameState {
    pyramid: Option<FramePyramid>,
}

impl FrameState {
    pub fn empty() -> Self {
        Self { pyramid: None }
    }

    pub fn from_pyramid(p: FramePyramid) -> Self {
        Self { pyramid: Some(p) }
    }

    pub fn pyramid(&self) -> Option<&FramePyramid> {
        self.pyramid.as_ref()
    }

    pub fn is_empty(&self) -> bool {
        self.pyramid.is_none()
    }

    /// Digest over every level's keys and codes.
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        if let Some(p) = &self.pyramid {
            h.update([p.depth()]);
            for l in p.levels() {
                h.update((l.len() as u64).to_le_bytes());
                for k in l.keys() {
                    h.update(k.to_le_bytes());
                }
                h.update(l.codes());
            }
        }
        h.finalize().into()
    }
}

/// Bit accounting for one frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FrameStats {
    pub frame_index: u32,
    /// Input count before deduplication (voxel count when unknown).
    pub points: usize,
    pub voxels: usize,
    /// Occupancy codes coded by the model (levels `1..D`).
    pub codes: usize,
    pub payload_bits: u64,
    pub header_bits: u64,
    /// Model cross-entropy under the unquantized distributions.
    pub model_bits: f64,
}

impl FrameStats {
    pub fn bpp(&self) -> f64 {
        self.payload_bits as f64 / self.points.max(1) as f64
    }

    pub fn bpp_with_header(&self) -> f64 {
        (self.payload_bits + self.header_bits) as f64 / self.points.max(1) as f64
    }

    pub fn bits_per_code(&self) -> f64 {
        self.payload_bits as f64 / self.codes.max(1) as f64
    }
}

#[cfg(test)]
mod tests;
