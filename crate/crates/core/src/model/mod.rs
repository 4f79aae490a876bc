//! Entropy model: predicts 16-way distributions for the low (`s0`) and high
//! (`s1`) nibbles of every occupancy code of a level.
//!
//! Per child voxel at level `d+1` the feature is
//!
//! ```text
//! F_s      = spatial prior on parents (code embedding + 2 face-neighbor residual blocks)
//! T_d      = MLP(existence map [z_t | z_{t-1}] over a V_d window at level d)
//! F_d      = broadcast_to_children(F_s + T_d)
//! T_{d+1}  = W_t · mean over a V_{d+1} window of E_fine(previous-frame code, 0 if absent)
//! F_{d+1}  = F_d + T_{d+1}
//! ```
//!
//! Children are split by the parity of `b_x + b_y + b_z`. Even children use
//! `F_{d+1}` directly; odd children add the masked mean of
//! `W_s [E_sib(code), π(i)]` over their parent's even children. `s0` comes
//! from head `h0`, `s1` from head `h1` applied to the feature plus an
//! embedding of `s0`. All fusion is element-wise addition.

mod context;

use std::rc::Rc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use context::LevelContext;

use crate::error::{Error, Result};
use crate::geom::NeighborhoodSize;
use crate::nn::{init_rng, softmax_into, Checkpoint, Graph, ParamId, ParamStore, Tensor2D, Var};

/// Bumped whenever the forward computation changes.
pub const ARCH_VERSION: u32 = 1;
/// Hidden width of the coarse MLP and of both heads.
pub const HIDDEN: usize = 64;
/// Symbols per head (4-bit nibbles).
pub const NUM_SYMBOLS: usize = 16;

/// Even-parity child indices, coded first.
pub const EVEN_GROUP: [u8; 4] = [0, 3, 5, 6];
/// Odd-parity child indices, coded after their even siblings.
pub const ODD_GROUP: [u8; 4] = [1, 2, 4, 7];

#[inline]
pub fn is_even_child(i: u8) -> bool {
    i.count_ones().is_multiple_of(2)
}

/// `(b_x, b_y, b_z)` of child `i` inside its parent.
#[inline]
pub fn relative_position(i: u8) -> [f32; 3] {
    [(i & 1) as f32, ((i >> 1) & 1) as f32, ((i >> 2) & 1) as f32]
}

/// `code = s1 * 16 + s0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SymbolSplit {
    pub s0: u8,
    pub s1: u8,
}

impl SymbolSplit {
    #[inline]
    pub fn of(code: u8) -> Self {
        Self {
            s0: code & 0x0f,
            s1: code >> 4,
        }
    }

    #[inline]
    pub fn code(self) -> u8 {
        self.s1 << 4 | self.s0
    }
}

/// Everything that changes the model's shapes or forward computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Feature width `C`.
    pub width: usize,
    /// Window of the parent-level existence map.
    pub vd: NeighborhoodSize,
    /// Window of the child-level previous-frame lookup.
    pub vfine: NeighborhoodSize,
    pub coarse: bool,
    pub fine: bool,
    pub sibling: bool,
    /// Use one 256-entry table for the fine-temporal and sibling paths.
    pub share_embedding: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            width: 32,
            vd: NeighborhoodSize::Cube27,
            vfine: NeighborhoodSize::Cube125,
            coarse: true,
            fine: true,
            sibling: true,
            share_embedding: false,
        }
    }
}

impl ModelConfig {
    /// Temporal paths and sibling context disabled.
    pub fn spatial_only() -> Self {
        Self {
            coarse: false,
            fine: false,
            sibling: false,
            ..Self::default()
        }
    }

    /// Canonical byte encoding used for hashing.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(&ARCH_VERSION.to_le_bytes());
        b.extend_from_slice(&(self.width as u32).to_le_bytes());
        b.extend_from_slice(&(self.vd.volume() as u32).to_le_bytes());
        b.extend_from_slice(&(self.vfine.volume() as u32).to_le_bytes());
        b.push(self.coarse as u8);
        b.push(self.fine as u8);
        b.push(self.sibling as u8);
        b.push(self.share_embedding as u8);
        b
    }

    /// 32-bit digest of [`canonical_bytes`](Self::canonical_bytes).
    pub fn hash32(&self) -> u32 {
        let d = Sha256::digest(self.canonical_bytes());
        u32::from_le_bytes(d[..4].try_into().unwrap())
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.width > 4096 {
            return Err(Error::Config(format!("feature width {} out of range", self.width)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Mlp2 {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct ResBlock {
    w: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct ParamIds {
    spatial_embed: ParamId,
    spatial_blocks: [ResBlock; 2],
    coarse: Mlp2,
    fine_embed: ParamId,
    fine_proj: ParamId,
    sibling_embed: ParamId,
    sibling_proj: ParamId,
    s0_embed: ParamId,
    head0: Mlp2,
    head1: Mlp2,
}

/// Learnable tensors of the entropy model plus the configuration they were
/// built for.
#[derive(Clone)]
pub struct ModelParams {
    config: ModelConfig,
    store: ParamStore<f32>,
    ids: ParamIds,
}

/// Init options beyond the seed.
#[derive(Debug, Clone, Copy, Default)]
pub struct InitOptions {
    /// Zero the last layer of both heads so every prediction is uniform.
    pub zero_head_outputs: bool,
}

impl ModelParams {
    /// Uniform(±1/√fan_in) weights, zero biases; embeddings use fan_in 1.
    pub fn init(config: ModelConfig, seed: u64, opts: InitOptions) -> Result<Self> {
        config.validate()?;
        let c = config.width;
        let v2 = 2 * config.vd.volume();
        let mut rng = init_rng(seed);
        let mut s = ParamStore::new();
        let zeros = |r, c| Tensor2D::zeros(r, c);

        let spatial_embed = s.add_uniform("spatial.embed", 256, c, 1, &mut rng)?;
        let mut blocks = Vec::new();
        for k in 0..2 {
            let w = s.add_uniform(&format!("spatial.block{k}.w"), c, c, c, &mut rng)?;
            let b = s.add(&format!("spatial.block{k}.b"), zeros(1, c))?;
            blocks.push(ResBlock { w, b });
        }
        let mut mlp = |s: &mut ParamStore<f32>, name: &str, n_in: usize, n_out: usize, zero_out: bool| -> Result<Mlp2> {
            let w1 = s.add_uniform(&format!("{name}.l1.w"), HIDDEN, n_in, n_in, &mut rng)?;
            let b1 = s.add(&format!("{name}.l1.b"), zeros(1, HIDDEN))?;
            let w2 = if zero_out {
                s.add(&format!("{name}.l2.w"), zeros(n_out, HIDDEN))?
            } else {
                s.add_uniform(&format!("{name}.l2.w"), n_out, HIDDEN, HIDDEN, &mut rng)?
            };
            let b2 = s.add(&format!("{name}.l2.b"), zeros(1, n_out))?;
            Ok(Mlp2 { w1, b1, w2, b2 })
        };
        let coarse = mlp(&mut s, "coarse", v2, c, false)?;
        let head0 = mlp(&mut s, "head0", c, NUM_SYMBOLS, opts.zero_head_outputs)?;
        let head1 = mlp(&mut s, "head1", c, NUM_SYMBOLS, opts.zero_head_outputs)?;
        let fine_embed = s.add_uniform("fine.embed", 256, c, 1, &mut rng)?;
        let fine_proj = s.add_uniform("fine.proj.w", c, c, c, &mut rng)?;
        let sibling_embed = s.add_uniform("sibling.embed", 256, c, 1, &mut rng)?;
        let sibling_proj = s.add_uniform("sibling.proj.w", c, c + 3, c + 3, &mut rng)?;
        let s0_embed = s.add_uniform("s0.embed", NUM_SYMBOLS, c, 1, &mut rng)?;

        Ok(Self {
            config,
            store: s,
            ids: ParamIds {
                spatial_embed,
                spatial_blocks: [blocks[0], blocks[1]],
                coarse,
                fine_embed,
                fine_proj,
                sibling_embed,
                sibling_proj,
                s0_embed,
                head0,
                head1,
            },
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Same weights under different ablation switches. Shape-changing fields
    /// (`width`, `vd`) must match.
    pub fn with_config(&self, config: ModelConfig) -> Result<Self> {
        if config.width != self.config.width || config.vd != self.config.vd {
            return Err(Error::Config(format!(
                "parameters were built for width {} / V_d {}, requested width {} / V_d {}",
                self.config.width,
                self.config.vd.volume(),
                config.width,
                config.vd.volume()
            )));
        }
        let mut p = self.clone();
        p.config = config;
        Ok(p)
    }

    pub fn store(&self) -> &ParamStore<f32> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore<f32> {
        &mut self.store
    }

    /// 64-bit digest of every tensor's name, shape and bits.
    pub fn digest(&self) -> u64 {
        let mut h = Sha256::new();
        for id in self.store.ids() {
            let t = self.store.value(id);
            h.update(self.store.name(id).as_bytes());
            h.update((t.rows() as u32).to_le_bytes());
            h.update((t.cols() as u32).to_le_bytes());
            for v in t.data() {
                h.update(v.to_le_bytes());
            }
        }
        u64::from_le_bytes(h.finalize()[..8].try_into().unwrap())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let json = serde_json::to_string(&self.config).expect("config serializes");
        Checkpoint::from_store(&self.store, self.config.hash32() as u64, json)
    }

    /// Rebuilds parameters from a checkpoint, including its configuration.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let config: ModelConfig = serde_json::from_str(&ck.config_json)
            .map_err(|e| Error::parse("checkpoint config", e.to_string()))?;
        if config.hash32() as u64 != ck.config_hash {
            return Err(Error::HashMismatch {
                expected: config.hash32() as u64,
                found: ck.config_hash,
                field: None,
            });
        }
        let mut p = Self::init(config, 0, InitOptions::default())?;
        ck.apply_to(&mut p.store)?;
        Ok(p)
    }

    fn mlp(&self, g: &mut Graph, m: Mlp2, x: Var) -> Result<Var> {
        let (w1, b1) = (g.param(&self.store, m.w1), g.param(&self.store, m.b1));
        let h = g.linear(x, w1, Some(b1))?;
        let h = g.relu(h);
        let (w2, b2) = (g.param(&self.store, m.w2), g.param(&self.store, m.b2));
        g.linear(h, w2, Some(b2))
    }

    /// `F_s` on parent voxels.
    pub fn spatial_prior(&self, g: &mut Graph, ctx: &LevelContext) -> Result<Var> {
        let table = g.param(&self.store, self.ids.spatial_embed);
        let mut h = g.embedding(table, &ctx.parent_codes)?;
        for blk in &self.ids.spatial_blocks {
            let nb = g.aggregate(h, Rc::clone(&ctx.parent_neighbors))?;
            let agg = g.add(h, nb)?;
            let (w, b) = (g.param(&self.store, blk.w), g.param(&self.store, blk.b));
            let u = g.linear(agg, w, Some(b))?;
            let u = g.relu(u);
            h = g.add(h, u)?;
        }
        Ok(h)
    }

    /// `T_d` on parent voxels.
    pub fn coarse_temporal(&self, g: &mut Graph, ctx: &LevelContext) -> Result<Var> {
        let m = ctx
            .existence
            .as_ref()
            .ok_or_else(|| Error::Config("context built without the coarse path".into()))?;
        let expected = 2 * self.config.vd.volume();
        if m.cols() != expected {
            return Err(Error::Config(format!(
                "existence map has {} channels, model expects {expected}",
                m.cols()
            )));
        }
        let x = g.input(m.clone());
        self.mlp(g, self.ids.coarse, x)
    }

    /// `F_d = broadcast(F_s + T_d)` on child voxels.
    pub fn fuse_and_broadcast(&self, g: &mut Graph, ctx: &LevelContext, f_s: Var, t_d: Option<Var>) -> Result<Var> {
        let fused = match t_d {
            Some(t) => g.add(f_s, t)?,
            None => f_s,
        };
        g.aggregate(fused, Rc::clone(&ctx.broadcast))
    }

    /// `T_{d+1}` on child voxels.
    pub fn fine_temporal(&self, g: &mut Graph, ctx: &LevelContext) -> Result<Var> {
        let bag = ctx
            .fine_bag
            .as_ref()
            .ok_or_else(|| Error::Config("context built without the fine path".into()))?;
        let table = g.param(&self.store, self.ids.fine_embed);
        let mean = g.aggregate(table, Rc::clone(bag))?;
        let w = g.param(&self.store, self.ids.fine_proj);
        g.linear(mean, w, None)
    }

    /// `F_{d+1}` on every child voxel, honoring the ablation switches.
    pub fn child_features(&self, g: &mut Graph, ctx: &LevelContext) -> Result<Var> {
        let f_s = self.spatial_prior(g, ctx)?;
        let t_d = if self.config.coarse {
            Some(self.coarse_temporal(g, ctx)?)
        } else {
            None
        };
        let f_d = self.fuse_and_broadcast(g, ctx, f_s, t_d)?;
        if self.config.fine {
            let t = self.fine_temporal(g, ctx)?;
            g.add(f_d, t)
        } else {
            Ok(f_d)
        }
    }

    /// Features of the even group (rows of `F_{d+1}`).
    pub fn even_features(&self, g: &mut Graph, ctx: &LevelContext, f: Var) -> Result<Var> {
        g.select_rows(f, &ctx.even_rows)
    }

    /// `F(G_e)` broadcast to every odd child.
    pub fn sibling_context(&self, g: &mut Graph, ctx: &LevelContext, even_codes: &[u8]) -> Result<Var> {
        if even_codes.len() != ctx.even_rows.len() {
            return Err(Error::Shape(format!(
                "{} even codes for {} even children",
                even_codes.len(),
                ctx.even_rows.len()
            )));
        }
        let table_id = if self.config.share_embedding {
            self.ids.fine_embed
        } else {
            self.ids.sibling_embed
        };
        let table = g.param(&self.store, table_id);
        let ids: Vec<u32> = even_codes.iter().map(|&c| c as u32).collect();
        let e = g.embedding(table, &ids)?;
        let pos = g.input(ctx.even_positions.clone());
        let x = g.concat(e, pos)?;
        let w = g.param(&self.store, self.ids.sibling_proj);
        let desc = g.linear(x, w, None)?;
        g.aggregate(desc, Rc::clone(&ctx.sibling_mean))
    }

    /// Features of the odd group: `F̃_{d+1}` when sibling context is on.
    pub fn odd_features(&self, g: &mut Graph, ctx: &LevelContext, f: Var, even_codes: &[u8]) -> Result<Var> {
        let base = g.select_rows(f, &ctx.odd_rows)?;
        if self.config.sibling {
            let s = self.sibling_context(g, ctx, even_codes)?;
            g.add(base, s)
        } else {
            Ok(base)
        }
    }

    /// Logits of `s0`.
    pub fn head_s0(&self, g: &mut Graph, feats: Var) -> Result<Var> {
        self.mlp(g, self.ids.head0, feats)
    }

    /// Logits of `s1` given the already known `s0`.
    pub fn head_s1(&self, g: &mut Graph, feats: Var, s0: &[u8]) -> Result<Var> {
        if let Some(&bad) = s0.iter().find(|&&s| s as usize >= NUM_SYMBOLS) {
            return Err(Error::Index(format!("s0 value {bad} out of range")));
        }
        let table = g.param(&self.store, self.ids.s0_embed);
        let ids: Vec<u32> = s0.iter().map(|&s| s as u32).collect();
        let e = g.embedding(table, &ids)?;
        let x = g.add(feats, e)?;
        self.mlp(g, self.ids.head1, x)
    }

    /// Teacher-forced bits for one level: all four passes against the true
    /// child codes. Returns the summed bits node (1×1) and per-pass logits.
    pub fn level_bits(&self, g: &mut Graph, ctx: &LevelContext, codes: &[u8]) -> Result<LevelLogits> {
        if codes.len() != ctx.n_children {
            return Err(Error::Shape(format!(
                "{} codes for {} children",
                codes.len(),
                ctx.n_children
            )));
        }
        let (even, odd) = ctx.split_codes(codes);
        let s0 = |v: &[u8]| v.iter().map(|&c| SymbolSplit::of(c).s0).collect::<Vec<_>>();
        let s1 = |v: &[u8]| v.iter().map(|&c| SymbolSplit::of(c).s1).collect::<Vec<_>>();
        let (e0, e1, o0, o1) = (s0(&even), s1(&even), s0(&odd), s1(&odd));

        let f = self.child_features(g, ctx)?;
        let fe = self.even_features(g, ctx, f)?;
        let even_s0 = self.head_s0(g, fe)?;
        let even_s1 = self.head_s1(g, fe, &e0)?;
        let fo = self.odd_features(g, ctx, f, &even)?;
        let odd_s0 = self.head_s0(g, fo)?;
        let odd_s1 = self.head_s1(g, fo, &o0)?;

        let mut total: Option<Var> = None;
        for (logits, t) in [(even_s0, &e0), (even_s1, &e1), (odd_s0, &o0), (odd_s1, &o1)] {
            if t.is_empty() {
                continue;
            }
            let ce = g.softmax_cross_entropy(logits, t)?;
            let bits = g.scale(ce, t.len() as f64);
            total = Some(match total {
                Some(acc) => g.add(acc, bits)?,
                None => bits,
            });
        }
        let bits = match total {
            Some(b) => b,
            None => g.input(Tensor2D::zeros(1, 1)),
        };
        Ok(LevelLogits {
            bits,
            even_s0,
            even_s1,
            odd_s0,
            odd_s1,
        })
    }
}

/// Output of [`ModelParams::level_bits`].
#[derive(Debug, Clone, Copy)]
pub struct LevelLogits {
    pub bits: Var,
    pub even_s0: Var,
    pub even_s1: Var,
    pub odd_s0: Var,
    pub odd_s1: Var,
}

/// Per-row 16-way distributions from one head invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityTable {
    rows: Vec<[f64; NUM_SYMBOLS]>,
}

impl ProbabilityTable {
    pub fn from_logits(logits: &Tensor2D<f32>) -> Result<Self> {
        if logits.cols() != NUM_SYMBOLS {
            return Err(Error::Shape(format!("{} logit columns", logits.cols())));
        }
        let rows = (0..logits.rows())
            .map(|r| {
                let mut p = [0.0; NUM_SYMBOLS];
                softmax_into(logits.row(r), &mut p);
                p
            })
            .collect();
        Ok(Self { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, r: usize) -> &[f64; NUM_SYMBOLS] {
        &self.rows[r]
    }

    pub fn rows(&self) -> &[[f64; NUM_SYMBOLS]] {
        &self.rows
    }
}

#[cfg(test)]
mod tests;
