//! Dyadic occupancy hierarchy.
//!
//! `downscale` derives parent coordinates and 8-bit child occupancy codes
//! from child coordinates; `upscale` regenerates child coordinates from
//! parents and their codes. Both are pure bit operations on Morton keys.

use crate::error::{Error, Result};
use crate::geom::{SortedVoxelSet, MAX_DEPTH};

/// One level of the hierarchy: sorted coordinates with per-voxel occupancy
/// codes (bit `i` set iff child `i` exists, `i = b_x + 2 b_y + 4 b_z`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseLevel {
    set: SortedVoxelSet,
}

impl SparseLevel {
    /// Validates that every code is non-zero.
    pub fn new(set: SortedVoxelSet) -> Result<Self> {
        match set.payload() {
            None => Err(Error::CorruptLevel("level without occupancy codes".into())),
            Some(p) => {
                if let Some(i) = p.iter().position(|&c| c == 0) {
                    return Err(Error::CorruptLevel(format!(
                        "voxel {i} at level {} has code 0",
                        set.depth()
                    )));
                }
                Ok(Self { set })
            }
        }
    }

    pub fn from_parts(level: u8, keys: Vec<u64>, codes: Vec<u8>) -> Result<Self> {
        Self::new(SortedVoxelSet::from_sorted_keys(keys, Some(codes), level)?)
    }

    #[inline]
    pub fn level(&self) -> u8 {
        self.set.depth()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.set.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.set.is_empty()
    }

    #[inline]
    pub fn keys(&self) -> &[u64] {
        self.set.keys()
    }

    #[inline]
    pub fn codes(&self) -> &[u8] {
        self.set.payload().expect("SparseLevel always carries codes")
    }

    /// Coordinates with codes as payload.
    #[inline]
    pub fn coords(&self) -> &SortedVoxelSet {
        &self.set
    }

    /// Number of voxels at the next level.
    pub fn child_count(&self) -> usize {
        self.codes().iter().map(|c| c.count_ones() as usize).sum()
    }
}

/// FOG: parent coordinates and occupancy codes from child coordinates.
pub fn downscale(children: &SortedVoxelSet) -> Result<SparseLevel> {
    if children.is_empty() {
        return Err(Error::EmptyLevel("cannot downscale an empty level".into()));
    }
    if children.depth() == 0 {
        return Err(Error::DepthMismatch("level 0 has no parent".into()));
    }
    let mut keys = Vec::with_capacity(children.len() / 2 + 1);
    let mut codes: Vec<u8> = Vec::with_capacity(children.len() / 2 + 1);
    for &k in children.keys() {
        let p = k >> 3;
        let bit = 1u8 << (k & 7);
        if keys.last() == Some(&p) {
            *codes.last_mut().unwrap() |= bit;
        } else {
            keys.push(p);
            codes.push(bit);
        }
    }
    SparseLevel::from_parts(children.depth() - 1, keys, codes)
}

/// FCG: child coordinates from parent coordinates and codes, Morton sorted.
pub fn upscale(parent: &SparseLevel) -> Result<SortedVoxelSet> {
    let depth = parent.level() + 1;
    if depth > MAX_DEPTH {
        return Err(Error::DepthMismatch(format!("cannot upscale past depth {MAX_DEPTH}")));
    }
    let mut keys = Vec::with_capacity(parent.child_count());
    for (&p, &c) in parent.keys().iter().zip(parent.codes()) {
        if c == 0 {
            return Err(Error::CorruptLevel(format!("parent {p:#x} has code 0")));
        }
        for i in 0..8u64 {
            if c >> i & 1 == 1 {
                keys.push(p << 3 | i);
            }
        }
    }
    SortedVoxelSet::from_sorted_keys(keys, None, depth)
}

/// The full hierarchy `levels[0..D]` of one frame plus its leaves at `D`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FramePyramid {
    levels: Vec<SparseLevel>,
    leaves: SortedVoxelSet,
}

impl FramePyramid {
    /// Assembles a pyramid after checking that each level upscales to the next.
    pub fn from_levels(levels: Vec<SparseLevel>) -> Result<Self> {
        let leaves = reconstruct_pyramid(&levels)?;
        Ok(Self { levels, leaves })
    }

    pub fn depth(&self) -> u8 {
        self.levels.len() as u8
    }

    pub fn levels(&self) -> &[SparseLevel] {
        &self.levels
    }

    pub fn level(&self, d: usize) -> &SparseLevel {
        &self.levels[d]
    }

    pub fn leaves(&self) -> &SortedVoxelSet {
        &self.leaves
    }

    /// Voxel coordinates of level `d` for `d` in `0..=D`.
    pub fn coords(&self, d: usize) -> &SortedVoxelSet {
        if d == self.levels.len() {
            &self.leaves
        } else {
            self.levels[d].coords()
        }
    }
}

/// Repeated downscale from leaf level `depth` down to level 0.
#[cfg(feature = "encoder")]
pub fn build_pyramid(leaves: &SortedVoxelSet, depth: u8) -> Result<FramePyramid> {
    if depth == 0 || depth > MAX_DEPTH {
        return Err(Error::DepthMismatch(format!(
            "depth must be in 1..={MAX_DEPTH}, got {depth}"
        )));
    }
    if leaves.is_empty() {
        return Err(Error::EmptyLevel("frame has no voxels".into()));
    }
    let leaves = if leaves.depth() == depth {
        leaves.without_payload()
    } else {
        // Re-validate against the requested budget.
        let bound = 1i64 << depth;
        if let Some(v) = leaves
            .voxels()
            .find(|v| [v.x, v.y, v.z].iter().any(|&c| c as i64 >= bound))
        {
            return Err(Error::DepthMismatch(format!(
                "voxel ({}, {}, {}) does not fit depth {depth}",
                v.x, v.y, v.z
            )));
        }
        SortedVoxelSet::from_sorted_keys(leaves.keys().to_vec(), None, depth)?
    };
    let mut levels = Vec::with_capacity(depth as usize);
    let mut cur = downscale(&leaves)?;
    loop {
        let next = if cur.level() > 0 {
            Some(downscale(&cur.coords().without_payload())?)
        } else {
            None
        };
        levels.push(cur);
        match next {
            Some(n) => cur = n,
            None => break,
        }
    }
    levels.reverse();
    Ok(FramePyramid { levels, leaves })
}

/// Upscale chain from level 0; checks each level against the next.
pub fn reconstruct_pyramid(levels: &[SparseLevel]) -> Result<SortedVoxelSet> {
    let first = levels
        .first()
        .ok_or_else(|| Error::CorruptPyramid("no levels".into()))?;
    if first.level() != 0 || first.is_empty() {
        return Err(Error::CorruptPyramid(
            "pyramid must start at a non-empty level 0".into(),
        ));
    }
    for (d, w) in levels.windows(2).enumerate() {
        if w[1].level() as usize != d + 1 {
            return Err(Error::CorruptPyramid(format!(
                "level {} found at position {}",
                w[1].level(),
                d + 1
            )));
        }
        let up = upscale(&w[0])?;
        if up.keys() != w[1].keys() {
            return Err(Error::CorruptPyramid(format!(
                "upscale of level {d} does not match level {}",
                d + 1
            )));
        }
    }
    upscale(levels.last().unwrap())
}
