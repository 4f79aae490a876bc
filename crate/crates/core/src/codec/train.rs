//! Teacher-forced training: every context comes from ground-truth frames and
//! true even-group codes; no coder runs in the loop. One optimizer step
//! consumes one (previous, current) frame pair, minimizing bits per
//! occupancy code summed over levels.

use std::path::PathBuf;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::frame::LevelInputs;
use super::FrameState;
use crate::error::{Error, Result};
use crate::geom::SortedVoxelSet;
use crate::model::{ModelConfig, ModelParams};
use crate::nn::{AdamConfig, Graph, Var};
use crate::pyramid::build_pyramid;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Stop after this many optimizer steps even mid-epoch.
    pub max_steps: Option<usize>,
    pub adam: AdamConfig,
    /// Seeds the pair order.
    pub seed: u64,
    /// One checkpoint per epoch is written here when set.
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1,
            max_steps: None,
            adam: AdamConfig::default(),
            seed: 0,
            checkpoint_dir: None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    /// Loss in bits per occupancy code after each step.
    pub losses: Vec<f64>,
    pub epoch_means: Vec<f64>,
    pub checkpoints: Vec<PathBuf>,
}

/// Precomputed contexts of one frame pair.
#[derive(Debug, Clone)]
pub struct TrainingPair {
    pub levels: Vec<LevelInputs>,
    pub n_codes: usize,
}

/// Every consecutive pair of every sequence, plus each first frame against
/// an empty previous frame.
pub fn build_training_set(sequences: &[Vec<SortedVoxelSet>], depth: u8, cfg: &ModelConfig) -> Result<Vec<TrainingPair>> {
    let mut out = Vec::new();
    for seq in sequences {
        let mut prev = FrameState::empty();
        for f in seq {
            let cur = build_pyramid(f, depth)?;
            let levels = LevelInputs::for_frame(&cur, &prev, cfg)?;
            let n_codes = levels.iter().map(|l| l.codes.len()).sum();
            if n_codes > 0 {
                out.push(TrainingPair { levels, n_codes });
            }
            prev = FrameState::from_pyramid(cur);
        }
    }
    Ok(out)
}

/// Mean bits per code of one pair, as a 1×1 node.
fn pair_loss(g: &mut Graph, params: &ModelParams, pair: &TrainingPair) -> Result<Var> {
    let mut total: Option<Var> = None;
    for li in &pair.levels {
        let out = params.level_bits(g, &li.ctx, &li.codes)?;
        total = Some(match total {
            Some(t) => g.add(t, out.bits)?,
            None => out.bits,
        });
    }
    let total = total.ok_or_else(|| Error::Config("frame pair without coded levels".into()))?;
    Ok(g.scale(total, 1.0 / pair.n_codes as f64))
}

/// Mean bits per code over `pairs` without updating anything.
pub fn evaluate(params: &ModelParams, pairs: &[TrainingPair]) -> Result<f64> {
    let mut bits = 0.0;
    let mut codes = 0usize;
    for p in pairs {
        let mut g = Graph::new();
        let l = pair_loss(&mut g, params, p)?;
        bits += g.value(l).get(0, 0) as f64 * p.n_codes as f64;
        codes += p.n_codes;
    }
    Ok(bits / codes.max(1) as f64)
}

pub fn train(params: &mut ModelParams, pairs: &[TrainingPair], cfg: &TrainConfig) -> Result<TrainReport> {
    if pairs.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    if let Some(dir) = &cfg.checkpoint_dir {
        std::fs::create_dir_all(dir)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut report = TrainReport::default();
    let mut step = 0usize;
    for epoch in 0..cfg.epochs {
        if cfg.max_steps.is_some_and(|m| step >= m) {
            break;
        }
        order.shuffle(&mut rng);
        let first = report.losses.len();
        for &i in &order {
            if cfg.max_steps.is_some_and(|m| step >= m) {
                break;
            }
            let mut g = Graph::new();
            let loss = pair_loss(&mut g, params, &pairs[i])?;
            let value = g.value(loss).get(0, 0) as f64;
            if !value.is_finite() {
                return Err(Error::Divergence { step, loss: value });
            }
            let grads = g.backward(loss)?;
            g.accumulate_param_grads(&grads, params.store_mut())?;
            params.store_mut().adam_step(&cfg.adam)?;
            report.losses.push(value);
            step += 1;
            if step.is_multiple_of(100) {
                debug!("step {step}: {value:.4} bits/code");
            }
        }
        let slice = &report.losses[first..];
        let mean = slice.iter().sum::<f64>() / slice.len().max(1) as f64;
        report.epoch_means.push(mean);
        info!("epoch {epoch}: mean loss {mean:.4} bits/code over {} steps", slice.len());
        if let Some(dir) = &cfg.checkpoint_dir {
            let path = dir.join(format!("epoch_{epoch:04}.hntc"));
            params.to_checkpoint().save(&path)?;
            report.checkpoints.push(path);
        }
    }
    Ok(report)
}
