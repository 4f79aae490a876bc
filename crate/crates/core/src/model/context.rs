//! Integer-only context gathering for one coded level.
//!
//! Everything here depends on the already decoded parent level of the
//! current frame and on the previous frame's reconstruction, never on the
//! codes being coded, so the decoder can rebuild it before reading a symbol.

use std::rc::Rc;

use super::{is_even_child, relative_position, ModelConfig};
use crate::error::{Error, Result};
use crate::geom::{Cursor, NeighborhoodSize, NeighborhoodSpec, SortedVoxelSet};
use crate::nn::{SparseRows, Tensor2D};
use crate::pyramid::SparseLevel;

/// Geometry and lookup results needed to evaluate the model on the children
/// of `parent`.
#[derive(Debug, Clone)]
pub struct LevelContext {
    pub(crate) parent_level: u8,
    pub(crate) n_parents: usize,
    pub(crate) n_children: usize,
    /// Parent occupancy codes as embedding ids.
    pub(crate) parent_codes: Vec<u32>,
    /// Mean over present face-adjacent parents (zero row when isolated).
    pub(crate) parent_neighbors: Rc<SparseRows>,
    /// `[z_t | z_{t-1}]` existence map per parent, `n_parents × 2V`.
    pub(crate) existence: Option<Tensor2D<f32>>,
    /// Child row → parent row.
    pub(crate) child_parent: Vec<u32>,
    pub(crate) broadcast: Rc<SparseRows>,
    /// Child → weighted previous-frame codes (`n_children × 256`).
    pub(crate) fine_bag: Option<Rc<SparseRows>>,
    pub(crate) child_index: Vec<u8>,
    pub(crate) even_rows: Vec<u32>,
    pub(crate) odd_rows: Vec<u32>,
    /// Odd child → mean over even siblings (indices into `even_rows`).
    pub(crate) sibling_mean: Rc<SparseRows>,
    /// `π(i)` of each even child, `n_even × 3`.
    pub(crate) even_positions: Tensor2D<f32>,
}

impl LevelContext {
    /// `children` must be `upscale(parent)`. `prev_parent` / `prev_children`
    /// are the previous frame's coordinates at the parent level and its
    /// coded level at the child level; `None` means an empty previous frame.
    pub fn build(
        parent: &SparseLevel,
        children: &SortedVoxelSet,
        prev_parent: Option<&SortedVoxelSet>,
        prev_children: Option<&SparseLevel>,
        cfg: &ModelConfig,
    ) -> Result<Self> {
        if children.depth() != parent.level() + 1 {
            return Err(Error::DepthMismatch(format!(
                "children at level {} for parents at level {}",
                children.depth(),
                parent.level()
            )));
        }
        if let Some(p) = prev_parent {
            if p.depth() != parent.level() {
                return Err(Error::DepthMismatch(format!(
                    "previous frame level {} paired with level {}",
                    p.depth(),
                    parent.level()
                )));
            }
        }
        if let Some(p) = prev_children {
            if p.level() != children.depth() {
                return Err(Error::DepthMismatch(format!(
                    "previous frame level {} paired with level {}",
                    p.level(),
                    children.depth()
                )));
            }
        }
        let n_parents = parent.len();
        let n_children = children.len();
        let parent_set = parent.coords();

        let parent_codes: Vec<u32> = parent.codes().iter().map(|&c| c as u32).collect();

        // Face neighbors inside the current parent level.
        let face = NeighborhoodSpec::new(NeighborhoodSize::Face7);
        let face_offsets: Vec<_> = face
            .offsets()
            .iter()
            .copied()
            .filter(|o| (o.dx, o.dy, o.dz) != (0, 0, 0))
            .collect();
        let mut cursors = vec![Cursor::default(); face_offsets.len()];
        let mut nb = SparseRows::builder(n_parents);
        let mut found = Vec::with_capacity(6);
        for i in 0..n_parents {
            let c = parent_set.voxel(i);
            found.clear();
            for (o, cur) in face_offsets.iter().zip(cursors.iter_mut()) {
                if let Some(j) = parent_set.position_with(cur, c.offset(*o)) {
                    found.push(j as u32);
                }
            }
            let w = if found.is_empty() { 0.0 } else { 1.0 / found.len() as f64 };
            for &j in &found {
                nb.push(j, w);
            }
            nb.finish_row();
        }
        let parent_neighbors = Rc::new(nb.build());

        let existence = if cfg.coarse {
            let spec = NeighborhoodSpec::new(cfg.vd);
            let v = spec.volume();
            let mut m = Tensor2D::zeros(n_parents, 2 * v);
            let mut cur_t = vec![Cursor::default(); v];
            let mut cur_p = vec![Cursor::default(); v];
            for i in 0..n_parents {
                let c = parent_set.voxel(i);
                let row = m.row_mut(i);
                for (k, o) in spec.offsets().iter().enumerate() {
                    let q = c.offset(*o);
                    if parent_set.position_with(&mut cur_t[k], q).is_some() {
                        row[k] = 1.0;
                    }
                    if let Some(prev) = prev_parent {
                        if prev.position_with(&mut cur_p[k], q).is_some() {
                            row[v + k] = 1.0;
                        }
                    }
                }
            }
            Some(m)
        } else {
            None
        };

        // Child → parent alignment; children of a parent are contiguous.
        let mut child_parent = Vec::with_capacity(n_children);
        let mut child_index = Vec::with_capacity(n_children);
        {
            let pk = parent.keys();
            let mut p = 0usize;
            for &k in children.keys() {
                while p < pk.len() && pk[p] < k >> 3 {
                    p += 1;
                }
                if p == pk.len() || pk[p] != k >> 3 {
                    return Err(Error::CorruptPyramid(format!(
                        "child {k:#x} has no parent in level {}",
                        parent.level()
                    )));
                }
                child_parent.push(p as u32);
                child_index.push((k & 7) as u8);
            }
        }
        let broadcast = Rc::new(SparseRows::selection(n_parents, &child_parent)?);

        let fine_bag = if cfg.fine {
            let spec = NeighborhoodSpec::new(cfg.vfine);
            let v = spec.volume();
            let w = 1.0 / v as f64;
            let mut bag = SparseRows::builder(256);
            let mut cursors = vec![Cursor::default(); v];
            let mut counts = [0u16; 256];
            let mut touched: Vec<u8> = Vec::with_capacity(v);
            for i in 0..n_children {
                let c = children.voxel(i);
                touched.clear();
                for (o, cur) in spec.offsets().iter().zip(cursors.iter_mut()) {
                    let code = match prev_children {
                        Some(prev) => prev.coords().lookup_with(cur, c.offset(*o)).code,
                        None => 0,
                    };
                    if counts[code as usize] == 0 {
                        touched.push(code);
                    }
                    counts[code as usize] += 1;
                }
                // Column order within a row is fixed by ascending code.
                touched.sort_unstable();
                for &code in &touched {
                    bag.push(code as u32, counts[code as usize] as f64 * w);
                    counts[code as usize] = 0;
                }
                bag.finish_row();
            }
            Some(Rc::new(bag.build()))
        } else {
            None
        };

        let mut even_rows = Vec::new();
        let mut odd_rows = Vec::new();
        for (r, &i) in child_index.iter().enumerate() {
            if is_even_child(i) {
                even_rows.push(r as u32);
            } else {
                odd_rows.push(r as u32);
            }
        }

        let mut even_positions = Tensor2D::zeros(even_rows.len(), 3);
        for (e, &r) in even_rows.iter().enumerate() {
            even_positions
                .row_mut(e)
                .copy_from_slice(&relative_position(child_index[r as usize]));
        }

        // Even siblings per parent, as positions in `even_rows`.
        let mut first_even = vec![0u32; n_parents + 1];
        for &r in &even_rows {
            first_even[child_parent[r as usize] as usize + 1] += 1;
        }
        for p in 0..n_parents {
            first_even[p + 1] += first_even[p];
        }
        let mut sib = SparseRows::builder(even_rows.len());
        for &r in &odd_rows {
            let p = child_parent[r as usize] as usize;
            let (a, b) = (first_even[p], first_even[p + 1]);
            if b > a {
                let w = 1.0 / (b - a) as f64;
                for e in a..b {
                    sib.push(e, w);
                }
            }
            sib.finish_row();
        }

        Ok(Self {
            parent_level: parent.level(),
            n_parents,
            n_children,
            parent_codes,
            parent_neighbors,
            existence,
            child_parent,
            broadcast,
            fine_bag,
            child_index,
            even_rows,
            odd_rows,
            sibling_mean: Rc::new(sib.build()),
            even_positions,
        })
    }

    pub fn parent_level(&self) -> u8 {
        self.parent_level
    }

    pub fn n_parents(&self) -> usize {
        self.n_parents
    }

    pub fn n_children(&self) -> usize {
        self.n_children
    }

    pub fn even_rows(&self) -> &[u32] {
        &self.even_rows
    }

    pub fn odd_rows(&self) -> &[u32] {
        &self.odd_rows
    }

    pub fn child_parent(&self) -> &[u32] {
        &self.child_parent
    }

    pub fn child_index(&self) -> &[u8] {
        &self.child_index
    }

    pub fn existence(&self) -> Option<&Tensor2D<f32>> {
        self.existence.as_ref()
    }

    /// Previous-frame code histogram per child as `(code, weight)` pairs.
    pub fn fine_bag_row(&self, child: usize) -> Vec<(u8, f64)> {
        self.fine_bag
            .as_ref()
            .map(|b| b.row(child).map(|(c, w)| (c as u8, w)).collect())
            .unwrap_or_default()
    }

    /// Splits per-child codes into (even, odd) lists in row order.
    pub fn split_codes(&self, codes: &[u8]) -> (Vec<u8>, Vec<u8>) {
        let even = self.even_rows.iter().map(|&r| codes[r as usize]).collect();
        let odd = self.odd_rows.iter().map(|&r| codes[r as usize]).collect();
        (even, odd)
    }

    /// Inverse of [`split_codes`](Self::split_codes).
    pub fn merge_codes(&self, even: &[u8], odd: &[u8]) -> Vec<u8> {
        let mut codes = vec![0u8; self.n_children];
        for (&r, &c) in self.even_rows.iter().zip(even) {
            codes[r as usize] = c;
        }
        for (&r, &c) in self.odd_rows.iter().zip(odd) {
            codes[r as usize] = c;
        }
        codes
    }
}
