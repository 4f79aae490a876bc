//! Integer voxel geometry: Morton keys, sorted voxel sets, neighborhood
//! offsets and batched existence/code lookups.
//!
//! Morton keys interleave coordinate bits with `x` in the least significant
//! position of each triplet, so the index of a child inside its parent is
//! `b_x + 2*b_y + 4*b_z`, i.e. the low three bits of the child's key.

use crate::error::{Error, Result};

/// Deepest supported level: 21 bits per axis fill a 63-bit Morton key.
pub const MAX_DEPTH: u8 = 21;

/// A voxel position at some pyramid level.
///
/// Components are signed so that neighborhood queries may step outside the
/// grid; stored voxels are always in `0..2^depth`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Voxel {
    pub x: i32,
    pub y: i32,
    pub z: i32,
}

impl Voxel {
    pub const fn new(x: i32, y: i32, z: i32) -> Self {
        Self { x, y, z }
    }

    #[inline]
    pub fn offset(self, d: Offset) -> Self {
        Self::new(self.x + d.dx, self.y + d.dy, self.z + d.dz)
    }

    /// Chebyshev (L∞) distance.
    pub fn chebyshev(self, other: Voxel) -> i32 {
        (self.x - other.x)
            .abs()
            .max((self.y - other.y).abs())
            .max((self.z - other.z).abs())
    }

    #[inline]
    fn in_budget(self, depth: u8) -> bool {
        let lim = 1i64 << depth;
        [self.x, self.y, self.z]
            .iter()
            .all(|&c| c >= 0 && (c as i64) < lim)
    }
}

impl From<[i32; 3]> for Voxel {
    fn from(v: [i32; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }
}

/// Integer displacement used by neighborhood windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Offset {
    pub dx: i32,
    pub dy: i32,
    pub dz: i32,
}

/// Interleaved coordinate bits of a voxel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct MortonKey(pub u64);

impl MortonKey {
    /// Index (0..8) of this voxel inside its parent.
    #[inline]
    pub fn child_index(self) -> u8 {
        (self.0 & 7) as u8
    }

    #[inline]
    pub fn parent(self) -> MortonKey {
        MortonKey(self.0 >> 3)
    }
}

#[inline]
fn spread3(v: u64) -> u64 {
    let mut x = v & 0x1f_ffff;
    x = (x | (x << 32)) & 0x001f_0000_0000_ffff;
    x = (x | (x << 16)) & 0x001f_0000_ff00_00ff;
    x = (x | (x << 8)) & 0x100f_00f0_0f00_f00f;
    x = (x | (x << 4)) & 0x10c3_0c30_c30c_30c3;
    x = (x | (x << 2)) & 0x1249_2492_4924_9249;
    x
}

#[inline]
fn compact3(v: u64) -> u64 {
    let mut x = v & 0x1249_2492_4924_9249;
    x = (x | (x >> 2)) & 0x10c3_0c30_c30c_30c3;
    x = (x | (x >> 4)) & 0x100f_00f0_0f00_f00f;
    x = (x | (x >> 8)) & 0x001f_0000_ff00_00ff;
    x = (x | (x >> 16)) & 0x001f_0000_0000_ffff;
    x = (x | (x >> 32)) & 0x1f_ffff;
    x
}

/// Interleave without range checks. Caller guarantees `0 <= c < 2^21`.
#[inline]
pub(crate) fn morton_encode_unchecked(v: Voxel) -> MortonKey {
    MortonKey(spread3(v.x as u64) | (spread3(v.y as u64) << 1) | (spread3(v.z as u64) << 2))
}

#[inline]
pub(crate) fn morton_decode_unchecked(k: MortonKey) -> Voxel {
    Voxel::new(
        compact3(k.0) as i32,
        compact3(k.0 >> 1) as i32,
        compact3(k.0 >> 2) as i32,
    )
}

fn check_depth(depth: u8) -> Result<()> {
    if depth > MAX_DEPTH {
        return Err(Error::OutOfRange(format!(
            "depth {depth} exceeds the {MAX_DEPTH}-bit Morton budget"
        )));
    }
    Ok(())
}

pub fn morton_encode(v: Voxel, depth: u8) -> Result<MortonKey> {
    check_depth(depth)?;
    if !v.in_budget(depth) {
        return Err(Error::OutOfRange(format!(
            "voxel ({}, {}, {}) outside 0..2^{depth}",
            v.x, v.y, v.z
        )));
    }
    Ok(morton_encode_unchecked(v))
}

pub fn morton_decode(k: MortonKey, depth: u8) -> Result<Voxel> {
    check_depth(depth)?;
    if 3 * depth as u32 != 64 && k.0 >> (3 * depth as u32) != 0 {
        return Err(Error::OutOfRange(format!(
            "key {:#x} wider than {} bits",
            k.0,
            3 * depth as u32
        )));
    }
    Ok(morton_decode_unchecked(k))
}

/// Voxels sorted by Morton key with an optional aligned 8-bit payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SortedVoxelSet {
    depth: u8,
    keys: Vec<u64>,
    payload: Option<Vec<u8>>,
}

/// Result of a single lookup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Hit {
    pub found: bool,
    pub code: u8,
}

impl SortedVoxelSet {
    pub fn empty(depth: u8) -> Self {
        Self {
            depth,
            keys: Vec::new(),
            payload: None,
        }
    }

    /// Builds a set from arbitrary (possibly duplicated) voxels.
    pub fn build(voxels: &[Voxel], payload: Option<&[u8]>, depth: u8) -> Result<Self> {
        check_depth(depth)?;
        if let Some(p) = payload {
            if p.len() != voxels.len() {
                return Err(Error::Shape(format!(
                    "payload length {} != voxel count {}",
                    p.len(),
                    voxels.len()
                )));
            }
        }
        let mut pairs = Vec::with_capacity(voxels.len());
        for (i, &v) in voxels.iter().enumerate() {
            let k = morton_encode(v, depth)?;
            pairs.push((k.0, payload.map_or(0, |p| p[i])));
        }
        pairs.sort_unstable();
        let mut keys = Vec::with_capacity(pairs.len());
        let mut codes = Vec::with_capacity(pairs.len());
        for (k, c) in pairs {
            if keys.last() == Some(&k) {
                if payload.is_some() && *codes.last().unwrap() != c {
                    let v = morton_decode_unchecked(MortonKey(k));
                    return Err(Error::InconsistentPayload(format!(
                        "voxel ({}, {}, {}) carries codes {} and {}",
                        v.x,
                        v.y,
                        v.z,
                        codes.last().unwrap(),
                        c
                    )));
                }
                continue;
            }
            keys.push(k);
            codes.push(c);
        }
        Ok(Self {
            depth,
            keys,
            payload: payload.map(|_| codes),
        })
    }

    /// Wraps already strictly increasing keys.
    pub fn from_sorted_keys(keys: Vec<u64>, payload: Option<Vec<u8>>, depth: u8) -> Result<Self> {
        check_depth(depth)?;
        if let Some(p) = &payload {
            if p.len() != keys.len() {
                return Err(Error::Shape(format!(
                    "payload length {} != key count {}",
                    p.len(),
                    keys.len()
                )));
            }
        }
        if keys.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::OutOfRange("keys are not strictly increasing".into()));
        }
        if depth < MAX_DEPTH {
            if let Some(&last) = keys.last() {
                if last >> (3 * depth as u32) != 0 {
                    return Err(Error::OutOfRange(format!(
                        "key {last:#x} outside depth {depth}"
                    )));
                }
            }
        }
        Ok(Self {
            depth,
            keys,
            payload,
        })
    }

    #[inline]
    pub fn depth(&self) -> u8 {
        self.depth
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    #[inline]
    pub fn keys(&self) -> &[u64] {
        &self.keys
    }

    #[inline]
    pub fn payload(&self) -> Option<&[u8]> {
        self.payload.as_deref()
    }

    pub fn voxel(&self, i: usize) -> Voxel {
        morton_decode_unchecked(MortonKey(self.keys[i]))
    }

    pub fn voxels(&self) -> impl Iterator<Item = Voxel> + '_ {
        self.keys
            .iter()
            .map(|&k| morton_decode_unchecked(MortonKey(k)))
    }

    /// Same keys, payload dropped.
    pub fn without_payload(&self) -> Self {
        Self {
            depth: self.depth,
            keys: self.keys.clone(),
            payload: None,
        }
    }

    pub fn with_payload(self, payload: Vec<u8>) -> Result<Self> {
        Self::from_sorted_keys(self.keys, Some(payload), self.depth)
    }

    pub fn contains(&self, v: Voxel) -> bool {
        self.position(v).is_some()
    }

    /// Row index of `v`, if present.
    pub fn position(&self, v: Voxel) -> Option<usize> {
        if !v.in_budget(self.depth) {
            return None;
        }
        self.keys.binary_search(&morton_encode_unchecked(v).0).ok()
    }

    pub fn lookup(&self, v: Voxel) -> Hit {
        match self.position(v) {
            Some(i) => Hit {
                found: true,
                code: self.payload.as_ref().map_or(0, |p| p[i]),
            },
            None => Hit::default(),
        }
    }

    /// Batched lookup. Out-of-range and negative queries resolve to not-found.
    pub fn lookup_batch(&self, queries: &[Voxel]) -> Vec<Hit> {
        let mut cursor = Cursor::default();
        queries
            .iter()
            .map(|&q| self.lookup_with(&mut cursor, q))
            .collect()
    }

    /// Lookup that gallops from the previous hit position. Spatially coherent
    /// query streams (e.g. one window offset over Morton-ordered centers)
    /// resolve in a handful of comparisons.
    #[inline]
    pub fn lookup_with(&self, cursor: &mut Cursor, q: Voxel) -> Hit {
        match self.position_with(cursor, q) {
            Some(i) => Hit {
                found: true,
                code: self.payload.as_ref().map_or(0, |p| p[i]),
            },
            None => Hit::default(),
        }
    }

    #[inline]
    pub fn position_with(&self, cursor: &mut Cursor, q: Voxel) -> Option<usize> {
        if self.keys.is_empty() || !q.in_budget(self.depth) {
            return None;
        }
        let key = morton_encode_unchecked(q).0;
        let keys = &self.keys;
        let n = keys.len();
        let start = cursor.0.min(n - 1);
        // Exponential search from `start` toward `key`, then binary search.
        let (lo, hi) = if keys[start] <= key {
            let mut step = 1usize;
            let mut lo = start;
            let mut hi = start + 1;
            while hi < n && keys[hi] <= key {
                lo = hi;
                hi = (hi + step).min(n);
                step <<= 1;
            }
            (lo, hi.min(n))
        } else {
            let mut step = 1usize;
            let mut hi = start;
            let mut lo = start.saturating_sub(1);
            while lo > 0 && keys[lo] > key {
                hi = lo;
                lo = lo.saturating_sub(step);
                step <<= 1;
            }
            (lo, hi + 1)
        };
        match keys[lo..hi].binary_search(&key) {
            Ok(i) => {
                cursor.0 = lo + i;
                Some(lo + i)
            }
            Err(i) => {
                cursor.0 = (lo + i).min(n - 1);
                None
            }
        }
    }
}

/// Search position carried between consecutive lookups.
#[derive(Debug, Clone, Copy, Default)]
pub struct Cursor(usize);

/// Window sizes supported for neighborhood context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum NeighborhoodSize {
    /// Center plus the 6 face-adjacent offsets.
    Face7,
    /// 3×3×3 cube.
    Cube27,
    /// 5×5×5 cube.
    Cube125,
}

impl NeighborhoodSize {
    pub fn volume(self) -> usize {
        match self {
            Self::Face7 => 7,
            Self::Cube27 => 27,
            Self::Cube125 => 125,
        }
    }

    pub fn from_volume(v: usize) -> Result<Self> {
        match v {
            7 => Ok(Self::Face7),
            27 => Ok(Self::Cube27),
            125 => Ok(Self::Cube125),
            _ => Err(Error::Config(format!(
                "neighborhood size must be 7, 27 or 125, got {v}"
            ))),
        }
    }
}

/// Ordered list of window offsets.
///
/// Order is lexicographic over `(dz, dy, dx)` ascending; it fixes the channel
/// order of every model input built from a window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborhoodSpec {
    size: NeighborhoodSize,
    offsets: Vec<Offset>,
}

impl NeighborhoodSpec {
    pub fn new(size: NeighborhoodSize) -> Self {
        let r = match size {
            NeighborhoodSize::Face7 | NeighborhoodSize::Cube27 => 1,
            NeighborhoodSize::Cube125 => 2,
        };
        let mut offsets = Vec::with_capacity(size.volume());
        for dz in -r..=r {
            for dy in -r..=r {
                for dx in -r..=r {
                    let face = (dx != 0) as i32 + (dy != 0) as i32 + (dz != 0) as i32 <= 1;
                    if size != NeighborhoodSize::Face7 || face {
                        offsets.push(Offset { dx, dy, dz });
                    }
                }
            }
        }
        debug_assert_eq!(offsets.len(), size.volume());
        Self { size, offsets }
    }

    pub fn size(&self) -> NeighborhoodSize {
        self.size
    }

    pub fn volume(&self) -> usize {
        self.offsets.len()
    }

    pub fn offsets(&self) -> &[Offset] {
        &self.offsets
    }

    pub fn expand(&self, center: Voxel) -> Vec<Voxel> {
        self.offsets.iter().map(|&d| center.offset(d)).collect()
    }
}

/// Window around `center` in the spec's fixed order.
pub fn expand_neighborhood(center: Voxel, spec: &NeighborhoodSpec) -> Vec<Voxel> {
    spec.expand(center)
}
