//! Per-frame bitstream container. Layout in `docs/FORMAT.md`.

use crate::error::{Error, Result};
use crate::geom::{Voxel, MAX_DEPTH};

pub const CONTAINER_MAGIC: [u8; 4] = *b"HINT";
pub const CONTAINER_VERSION: u8 = 1;

/// Raw root level: coordinates and occupancy codes of level 0.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RootBlock {
    pub coords: Vec<Voxel>,
    pub codes: Vec<u8>,
}

/// Root coordinates are written at the bit width of level 0, i.e. as zero
/// bytes; the field is kept so the block is self-describing.
const ROOT_LEVEL: u8 = 0;

fn coord_bytes(level: u8) -> usize {
    (level as usize).div_ceil(8)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameHeader {
    pub config_hash: u64,
    pub depth: u8,
    pub frame_index: u32,
    pub root: RootBlock,
    /// Voxel counts of levels `1..=depth`.
    pub level_counts: Vec<u32>,
}

impl FrameHeader {
    /// Serialized size in bytes, excluding the payload.
    pub fn encoded_len(&self) -> usize {
        4 + 1 + 8 + 1 + 4 + 4 + self.root.codes.len() * (1 + 3 * coord_bytes(ROOT_LEVEL)) + 4 * self.level_counts.len() + 4
    }
}

pub fn write_container(h: &FrameHeader, payload: &[u8]) -> Result<Vec<u8>> {
    if h.depth == 0 || h.depth > MAX_DEPTH {
        return Err(Error::DepthMismatch(format!("depth {} outside 1..={MAX_DEPTH}", h.depth)));
    }
    if h.level_counts.len() != h.depth as usize {
        return Err(Error::Shape(format!(
            "{} level counts for depth {}",
            h.level_counts.len(),
            h.depth
        )));
    }
    if h.root.coords.len() != h.root.codes.len() {
        return Err(Error::Shape("root coordinates and codes differ in length".into()));
    }
    let cb = coord_bytes(ROOT_LEVEL);
    let mut out = Vec::with_capacity(h.encoded_len() + payload.len());
    out.extend_from_slice(&CONTAINER_MAGIC);
    out.push(CONTAINER_VERSION);
    out.extend_from_slice(&h.config_hash.to_le_bytes());
    out.push(h.depth);
    out.extend_from_slice(&h.frame_index.to_le_bytes());
    out.extend_from_slice(&(h.root.codes.len() as u32).to_le_bytes());
    for v in &h.root.coords {
        for c in [v.x, v.y, v.z] {
            if c < 0 || (c as i64) >= 1i64 << ROOT_LEVEL {
                return Err(Error::OutOfRange(format!("root coordinate {c}")));
            }
            out.extend_from_slice(&(c as u32).to_le_bytes()[..cb]);
        }
    }
    out.extend_from_slice(&h.root.codes);
    for &n in &h.level_counts {
        out.extend_from_slice(&n.to_le_bytes());
    }
    out.extend_from_slice(&u32::try_from(payload.len()).map_err(|_| Error::OutOfRange("payload too large".into()))?.to_le_bytes());
    out.extend_from_slice(payload);
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::CorruptStream(format!(
                "truncated {what} at byte {} ({} bytes left, {n} needed)",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

/// Parses one container; the whole buffer must be consumed.
pub fn read_container(bytes: &[u8]) -> Result<(FrameHeader, &[u8])> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4, "magic")?.try_into().unwrap();
    if magic != CONTAINER_MAGIC {
        return Err(Error::BadMagic {
            expected: CONTAINER_MAGIC,
            found: magic,
        });
    }
    let version = r.u8("version")?;
    if version != CONTAINER_VERSION {
        return Err(Error::UnsupportedVersion(version as u32));
    }
    let config_hash = r.u64("config hash")?;
    let depth = r.u8("depth")?;
    if depth == 0 || depth > MAX_DEPTH {
        return Err(Error::CorruptStream(format!("depth {depth} outside 1..={MAX_DEPTH}")));
    }
    let frame_index = r.u32("frame index")?;
    let n_root = r.u32("root count")? as usize;
    let cb = coord_bytes(ROOT_LEVEL);
    // Level 0 has at most one cell.
    if n_root > 1usize << (3 * ROOT_LEVEL as usize) {
        return Err(Error::CorruptStream(format!("{n_root} root voxels")));
    }
    let mut coords = Vec::with_capacity(n_root);
    for _ in 0..n_root {
        let mut c = [0i32; 3];
        for ci in c.iter_mut() {
            let mut b = [0u8; 4];
            b[..cb].copy_from_slice(r.take(cb, "root coordinate")?);
            *ci = u32::from_le_bytes(b) as i32;
        }
        coords.push(Voxel::new(c[0], c[1], c[2]));
    }
    let codes = r.take(n_root, "root codes")?.to_vec();
    let mut level_counts = Vec::with_capacity(depth as usize);
    for _ in 0..depth {
        level_counts.push(r.u32("level count")?);
    }
    let len = r.u32("payload length")? as usize;
    let payload = r.take(len, "payload")?;
    if r.pos != bytes.len() {
        return Err(Error::CorruptStream(format!(
            "{} trailing bytes after the payload",
            bytes.len() - r.pos
        )));
    }
    Ok((
        FrameHeader {
            config_hash,
            depth,
            frame_index,
            root: RootBlock { coords, codes },
            level_counts,
        },
        payload,
    ))
}
