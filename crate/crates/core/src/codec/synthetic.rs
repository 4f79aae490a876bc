//! Deterministic voxelized test sequences.
//!
//! Each sequence starts from a one-voxel-thick sphere or box shell (chosen by
//! the seed) centered in a `2^depth` grid. A hash of the object-space
//! position keeps a `density` fraction of the shell voxels, so the same
//! surface patch is kept or dropped consistently as the object moves.
//!
//! * `Static`: every frame equals frame 0.
//! * `Translate`: frame `t` is frame `t-1` shifted by `(1, 0, 0)`, with voxels
//!   leaving the grid dropped.
//! * `Jitter`: each frame displaces about a fifth of the base voxels by one
//!   step along a random axis.
//! * `Morph`: the shell grows by about 3% of its size per frame.
//! * `Random`: every frame is an independent shape; consecutive frames are
//!   unrelated.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{SortedVoxelSet, Voxel, MAX_DEPTH};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyntheticKind {
    Static,
    Translate,
    Jitter,
    Morph,
    Random,
}

impl std::str::FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "static" => Self::Static,
            "translate" => Self::Translate,
            "jitter" => Self::Jitter,
            "morph" => Self::Morph,
            "random" => Self::Random,
            _ => return Err(Error::Config(format!("unknown synthetic kind `{s}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub n_frames: usize,
    /// Fraction of shell voxels kept, in `(0, 1]`.
    pub density: f64,
    pub seed: u64,
    pub depth: u8,
}

#[derive(Debug, Clone, Copy)]
struct Shape {
    sphere: bool,
    center: [f64; 3],
    /// Radius for spheres, half extents for boxes.
    size: [f64; 3],
    mask_seed: u64,
}

impl Shape {
    fn random(rng: &mut ChaCha8Rng, n: f64) -> Self {
        let sphere = rng.gen_bool(0.5);
        let center = [0; 3].map(|_: i32| n / 2.0 + rng.gen_range(-0.05..0.05) * n);
        let size = if sphere {
            [rng.gen_range(0.25..0.35) * n; 3]
        } else {
            [0; 3].map(|_: i32| rng.gen_range(0.18..0.32) * n)
        };
        Self {
            sphere,
            center,
            size,
            mask_seed: rng.gen(),
        }
    }

    fn scaled(self, s: f64) -> Self {
        Self {
            size: self.size.map(|v| v * s),
            ..self
        }
    }

    /// Signed distance-like value in voxels; the shell is `|d| <= 0.5`.
    fn distance(&self, p: [f64; 3]) -> f64 {
        let q = [0, 1, 2].map(|k| p[k] - self.center[k]);
        if self.sphere {
            (q[0] * q[0] + q[1] * q[1] + q[2] * q[2]).sqrt() - self.size[0]
        } else {
            (0..3).map(|k| q[k].abs() - self.size[k]).fold(f64::NEG_INFINITY, f64::max)
        }
    }

    /// Kept-or-not decision from the voxel position relative to the shape,
    /// normalized so it survives translation and scaling.
    fn keep(&self, p: [f64; 3], density: f64) -> bool {
        if density >= 1.0 {
            return true;
        }
        let rel = [0, 1, 2].map(|k| ((p[k] - self.center[k]) / self.size[k] * 24.0).round() as i64);
        let mut h = self.mask_seed ^ 0x9e37_79b9_7f4a_7c15;
        for r in rel {
            h = splitmix(h ^ r as u64);
        }
        (h >> 11) as f64 / (1u64 << 53) as f64 <= density
    }

    fn voxels(&self, n: i32, density: f64) -> Vec<Voxel> {
        let ext = self.size.iter().fold(0.0f64, |a, &b| a.max(b)) * 1.8 + 2.0;
        let lo = |k: usize| ((self.center[k] - ext).floor() as i32).max(0);
        let hi = |k: usize| ((self.center[k] + ext).ceil() as i32).min(n - 1);
        let mut out = Vec::new();
        for z in lo(2)..=hi(2) {
            for y in lo(1)..=hi(1) {
                for x in lo(0)..=hi(0) {
                    let p = [x as f64 + 0.5, y as f64 + 0.5, z as f64 + 0.5];
                    if self.distance(p).abs() <= 0.5 && self.keep(p, density) {
                        out.push(Voxel::new(x, y, z));
                    }
                }
            }
        }
        out
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl SyntheticSpec {
    pub fn new(kind: SyntheticKind, n_frames: usize, depth: u8, seed: u64) -> Self {
        Self {
            kind,
            n_frames,
            density: 1.0,
            seed,
            depth,
        }
    }
}

/// Generates the frames of `spec` (never empty frames; a frame that would be
/// empty keeps one voxel at the origin).
pub fn make_synthetic_sequence(spec: &SyntheticSpec) -> Result<Vec<SortedVoxelSet>> {
    if spec.depth < 2 || spec.depth > MAX_DEPTH.min(12) {
        return Err(Error::Config(format!(
            "synthetic depth {} outside 2..=12",
            spec.depth
        )));
    }
    if !(spec.density > 0.0 && spec.density <= 1.0) {
        return Err(Error::Config(format!("density {} outside (0, 1]", spec.density)));
    }
    let n = 1i32 << spec.depth;
    let nf = n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let base = Shape::random(&mut rng, nf);
    let base_voxels = base.voxels(n, spec.density);
    let mut frames: Vec<Vec<Voxel>> = Vec::with_capacity(spec.n_frames);
    for t in 0..spec.n_frames {
        let v = match spec.kind {
            SyntheticKind::Static => base_voxels.clone(),
            SyntheticKind::Translate => match frames.last() {
                None => base_voxels.clone(),
                Some(prev) => prev
                    .iter()
                    .map(|v| Voxel::new(v.x + 1, v.y, v.z))
                    .filter(|v| v.x < n)
                    .collect(),
            },
            SyntheticKind::Jitter => {
                let mut fr = ChaCha8Rng::seed_from_u64(splitmix(spec.seed ^ (t as u64 + 1)));
                base_voxels
                    .iter()
                    .map(|&v| {
                        if t > 0 && fr.gen_bool(0.2) {
                            let axis = fr.gen_range(0..3);
                            let step = if fr.gen_bool(0.5) { 1 } else { -1 };
                            let mut c = [v.x, v.y, v.z];
                            c[axis] = (c[axis] + step).clamp(0, n - 1);
                            Voxel::new(c[0], c[1], c[2])
                        } else {
                            v
                        }
                    })
                    .collect()
            }
            SyntheticKind::Morph => base.scaled(1.0 + 0.03 * t as f64).voxels(n, spec.density),
            SyntheticKind::Random => {
                if t == 0 {
                    base_voxels.clone()
                } else {
                    Shape::random(&mut rng, nf).voxels(n, spec.density)
                }
            }
        };
        frames.push(if v.is_empty() { vec![Voxel::new(0, 0, 0)] } else { v });
    }
    frames
        .iter()
        .map(|f| SortedVoxelSet::build(f, None, spec.depth))
        .collect()
}
