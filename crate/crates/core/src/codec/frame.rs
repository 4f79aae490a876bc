use crate::coder::{quantize_probs, read_container, RangeDecoder};
#[cfg(feature = "encoder")]
use crate::coder::{write_container, FrameHeader, RangeEncoder, RootBlock};
use crate::error::{Error, Result};
use crate::geom::{SortedVoxelSet, Voxel};
use crate::model::{LevelContext, ModelConfig, ModelParams, SymbolSplit, NUM_SYMBOLS};
use crate::nn::{softmax_into, Graph, Tensor2D};
#[cfg(feature = "encoder")]
use crate::nn::LN_2;
#[cfg(feature = "encoder")]
use crate::pyramid::build_pyramid;
use crate::pyramid::{upscale, FramePyramid, SparseLevel};

use super::{check_hash, FrameState};
#[cfg(feature = "encoder")]
use super::{stream_hash, FrameStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Pass {
    EvenS0,
    EvenS1,
    OddS0,
    OddS1,
}

impl Pass {
    #[cfg(feature = "encoder")]
    fn nibble(self, code: u8) -> u8 {
        let s = SymbolSplit::of(code);
        match self {
            Pass::EvenS0 | Pass::OddS0 => s.s0,
            Pass::EvenS1 | Pass::OddS1 => s.s1,
        }
    }
}

/// One pass worth of symbols: the child rows it covers and their logits.
#[cfg_attr(not(feature = "encoder"), allow(dead_code))]
pub(crate) struct PassRequest<'a> {
    pub level: usize,
    pub pass: Pass,
    pub rows: &'a [u32],
    pub logits: &'a Tensor2D<f32>,
}

/// Evaluates the four passes of one level. `io` turns each pass's logits
/// into the symbols actually coded, so later passes are conditioned on them.
fn run_level(
    params: &ModelParams,
    ctx: &LevelContext,
    level: usize,
    io: &mut dyn FnMut(PassRequest<'_>) -> Result<Vec<u8>>,
) -> Result<Vec<u8>> {
    let mut g = Graph::new();
    let f = params.child_features(&mut g, ctx)?;
    let fe = params.even_features(&mut g, ctx, f)?;
    let l = params.head_s0(&mut g, fe)?;
    let e0 = io(PassRequest {
        level,
        pass: Pass::EvenS0,
        rows: ctx.even_rows(),
        logits: g.value(l),
    })?;
    let l = params.head_s1(&mut g, fe, &e0)?;
    let e1 = io(PassRequest {
        level,
        pass: Pass::EvenS1,
        rows: ctx.even_rows(),
        logits: g.value(l),
    })?;
    let even: Vec<u8> = e0.iter().zip(&e1).map(|(&s0, &s1)| SymbolSplit { s0, s1 }.code()).collect();
    let fo = params.odd_features(&mut g, ctx, f, &even)?;
    let l = params.head_s0(&mut g, fo)?;
    let o0 = io(PassRequest {
        level,
        pass: Pass::OddS0,
        rows: ctx.odd_rows(),
        logits: g.value(l),
    })?;
    let l = params.head_s1(&mut g, fo, &o0)?;
    let o1 = io(PassRequest {
        level,
        pass: Pass::OddS1,
        rows: ctx.odd_rows(),
        logits: g.value(l),
    })?;
    let odd: Vec<u8> = o0.iter().zip(&o1).map(|(&s0, &s1)| SymbolSplit { s0, s1 }.code()).collect();
    Ok(ctx.merge_codes(&even, &odd))
}

fn prev_pyramid(prev: &FrameState, depth: u8) -> Result<Option<&FramePyramid>> {
    match prev.pyramid() {
        Some(p) if p.depth() != depth => Err(Error::DepthMismatch(format!(
            "previous frame has depth {}, current frame {depth}",
            p.depth()
        ))),
        p => Ok(p),
    }
}

fn level_context(
    parent: &SparseLevel,
    children: &SortedVoxelSet,
    prev: Option<&FramePyramid>,
    d: usize,
    cfg: &ModelConfig,
) -> Result<LevelContext> {
    LevelContext::build(
        parent,
        children,
        prev.map(|p| p.coords(d - 1)),
        prev.map(|p| p.level(d)),
        cfg,
    )
}

/// Context and true codes of one coded level, for teacher-forced use.
#[derive(Debug, Clone)]
pub struct LevelInputs {
    pub ctx: LevelContext,
    pub codes: Vec<u8>,
}

impl LevelInputs {
    /// All coded levels of `cur` against the previous frame `prev`.
    pub fn for_frame(cur: &FramePyramid, prev: &FrameState, cfg: &ModelConfig) -> Result<Vec<Self>> {
        let prev = prev_pyramid(prev, cur.depth())?;
        (1..cur.depth() as usize)
            .map(|d| {
                let ctx = level_context(cur.level(d - 1), cur.coords(d), prev, d, cfg)?;
                Ok(Self {
                    ctx,
                    codes: cur.level(d).codes().to_vec(),
                })
            })
            .collect()
    }
}

/// Teacher-forced code length of `cur` in bits, summed over levels.
pub fn teacher_forced_bits(cur: &FramePyramid, prev: &FrameState, params: &ModelParams) -> Result<f64> {
    let mut total = 0.0;
    for li in LevelInputs::for_frame(cur, prev, params.config())? {
        let mut g = Graph::new();
        let out = params.level_bits(&mut g, &li.ctx, &li.codes)?;
        total += g.value(out.bits).get(0, 0) as f64;
    }
    Ok(total)
}

/// Shared level loop of encoder and decoder. `counts` are the expected
/// voxel counts of levels `1..=D`.
fn code_levels(
    root: SparseLevel,
    depth: u8,
    prev: &FrameState,
    params: &ModelParams,
    counts: &[u32],
    io: &mut dyn FnMut(PassRequest<'_>) -> Result<Vec<u8>>,
) -> Result<FramePyramid> {
    let prev = prev_pyramid(prev, depth)?;
    let mut levels = vec![root];
    for d in 1..=depth as usize {
        let children = upscale(levels.last().unwrap())?;
        if children.len() as u64 != counts[d - 1] as u64 {
            return Err(Error::CorruptStream(format!(
                "level {d} has {} voxels, header declares {}",
                children.len(),
                counts[d - 1]
            )));
        }
        if d == depth as usize {
            break;
        }
        let ctx = level_context(levels.last().unwrap(), &children, prev, d, params.config())?;
        let codes = run_level(params, &ctx, d, io)?;
        if codes.contains(&0) {
            return Err(Error::CorruptStream(format!("empty occupancy code decoded at level {d}")));
        }
        levels.push(SparseLevel::from_parts(d as u8, children.keys().to_vec(), codes)?);
    }
    FramePyramid::from_levels(levels)
}

fn cdf_of(row: &[f32], probs: &mut [f64; NUM_SYMBOLS]) -> Result<crate::coder::QuantizedCdf> {
    softmax_into(row, probs);
    quantize_probs(probs)
}

/// Output of [`encode_frame`].
#[cfg(feature = "encoder")]
#[derive(Debug, Clone)]
pub struct EncodedFrame {
    pub bytes: Vec<u8>,
    /// Reconstruction to pass as the next frame's context.
    pub state: FrameState,
    pub stats: FrameStats,
}

/// Codes one frame of leaves at depth `depth` against `prev`.
#[cfg(feature = "encoder")]
pub fn encode_frame(
    leaves: &SortedVoxelSet,
    prev: &FrameState,
    params: &ModelParams,
    depth: u8,
    frame_index: u32,
) -> Result<EncodedFrame> {
    let pyr = build_pyramid(leaves, depth)?;
    let counts: Vec<u32> = (1..=depth as usize).map(|d| pyr.coords(d).len() as u32).collect();
    let root = pyr.level(0).clone();
    let mut enc = RangeEncoder::new();
    let mut model_bits = 0.0;
    let mut probs = [0.0; NUM_SYMBOLS];
    let mut io = |req: PassRequest<'_>| -> Result<Vec<u8>> {
        let codes = pyr.level(req.level).codes();
        let mut out = Vec::with_capacity(req.rows.len());
        for (i, &r) in req.rows.iter().enumerate() {
            let s = req.pass.nibble(codes[r as usize]);
            let cdf = cdf_of(req.logits.row(i), &mut probs)?;
            model_bits -= probs[s as usize].ln() / LN_2;
            enc.encode(s as usize, &cdf);
            out.push(s);
        }
        Ok(out)
    };
    let recon = code_levels(root.clone(), depth, prev, params, &counts, &mut io)?;
    let payload = enc.finish();
    let header = FrameHeader {
        config_hash: stream_hash(params),
        depth,
        frame_index,
        root: RootBlock {
            coords: vec![Voxel::new(0, 0, 0)],
            codes: root.codes().to_vec(),
        },
        level_counts: counts,
    };
    let bytes = write_container(&header, &payload)?;
    let stats = FrameStats {
        frame_index,
        points: leaves.len(),
        voxels: pyr.leaves().len(),
        codes: (1..depth as usize).map(|d| pyr.level(d).len()).sum(),
        payload_bits: payload.len() as u64 * 8,
        header_bits: (bytes.len() - payload.len()) as u64 * 8,
        model_bits,
    };
    Ok(EncodedFrame {
        bytes,
        state: FrameState::from_pyramid(recon),
        stats,
    })
}

/// Output of [`decode_frame`].
#[derive(Debug, Clone)]
pub struct DecodedFrame {
    pub leaves: SortedVoxelSet,
    pub state: FrameState,
    pub frame_index: u32,
    pub depth: u8,
}

/// Decodes one container against the previously decoded frame.
pub fn decode_frame(bytes: &[u8], prev: &FrameState, params: &ModelParams) -> Result<DecodedFrame> {
    let (h, payload) = read_container(bytes)?;
    check_hash(params, h.config_hash)?;
    if h.root.coords != [Voxel::new(0, 0, 0)] {
        return Err(Error::CorruptStream("root block must hold exactly the origin cell".into()));
    }
    let root = SparseLevel::from_parts(0, vec![0], h.root.codes.clone())
        .map_err(|e| Error::CorruptStream(format!("root block: {e}")))?;
    let mut dec = RangeDecoder::new(payload)?;
    let mut probs = [0.0; NUM_SYMBOLS];
    let mut io = |req: PassRequest<'_>| -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(req.rows.len());
        for i in 0..req.rows.len() {
            let cdf = cdf_of(req.logits.row(i), &mut probs)?;
            out.push(dec.decode(&cdf)? as u8);
        }
        Ok(out)
    };
    let pyr = code_levels(root, h.depth, prev, params, &h.level_counts, &mut io)?;
    dec.finish()?;
    Ok(DecodedFrame {
        leaves: pyr.leaves().clone(),
        state: FrameState::from_pyramid(pyr),
        frame_index: h.frame_index,
        depth: h.depth,
    })
}

/// Codes frames in order, each against the reconstruction of the one before.
#[cfg(feature = "encoder")]
pub fn encode_sequence(frames: &[SortedVoxelSet], params: &ModelParams, depth: u8) -> Result<Vec<EncodedFrame>> {
    if frames.is_empty() {
        return Err(Error::Config("sequence has no frames".into()));
    }
    let mut state = FrameState::empty();
    let mut out = Vec::with_capacity(frames.len());
    for (t, f) in frames.iter().enumerate() {
        let e = encode_frame(f, &state, params, depth, t as u32).map_err(|e| e.in_frame(t))?;
        state = e.state.clone();
        out.push(e);
    }
    Ok(out)
}

/// Inverse of [`encode_sequence`].
pub fn decode_sequence<B: AsRef<[u8]>>(streams: &[B], params: &ModelParams) -> Result<Vec<DecodedFrame>> {
    let mut state = FrameState::empty();
    let mut out = Vec::with_capacity(streams.len());
    for (t, s) in streams.iter().enumerate() {
        let d = decode_frame(s.as_ref(), &state, params).map_err(|e| e.in_frame(t))?;
        state = d.state.clone();
        out.push(d);
    }
    Ok(out)
}
