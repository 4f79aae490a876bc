use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tensor::{Scalar, Tensor2D};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// Adam hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone)]
struct Slot<T: Scalar> {
    name: String,
    value: Tensor2D<T>,
    grad: Tensor2D<T>,
    m: Tensor2D<T>,
    v: Tensor2D<T>,
}

/// Named learnable tensors with gradients and Adam moments.
#[derive(Clone)]
pub struct ParamStore<T: Scalar = f32> {
    slots: Vec<Slot<T>>,
    step: u64,
    grads_ready: bool,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            slots: Vec::new(),
            step: 0,
            grads_ready: false,
        }
    }

    pub fn add(&mut self, name: &str, value: Tensor2D<T>) -> Result<ParamId> {
        if self.find(name).is_some() {
            return Err(Error::Config(format!("duplicate parameter name `{name}`")));
        }
        let (r, c) = value.shape();
        self.slots.push(Slot {
            name: name.to_string(),
            value,
            grad: Tensor2D::zeros(r, c),
            m: Tensor2D::zeros(r, c),
            v: Tensor2D::zeros(r, c),
        });
        Ok(ParamId(self.slots.len() - 1))
    }

    /// Uniform(−1/√fan_in, 1/√fan_in) init for an `out×fan_in` tensor.
    pub fn add_uniform(&mut self, name: &str, rows: usize, cols: usize, fan_in: usize, rng: &mut ChaCha8Rng) -> Result<ParamId> {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| T::lift(rng.gen_range(-bound..bound)))
            .collect();
        self.add(name, Tensor2D::from_vec(rows, cols, data)?)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.slots.iter().position(|s| s.name == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.slots.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.slots[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Tensor2D<T> {
        &self.slots[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor2D<T> {
        &mut self.slots[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor2D<T> {
        &self.slots[id.0].grad
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.slots.iter().map(|s| s.value.data().len()).sum()
    }

    pub(crate) fn accumulate_grad(&mut self, id: ParamId, g: &Tensor2D<T>) -> Result<()> {
        let slot = &mut self.slots[id.0];
        if slot.grad.shape() != g.shape() {
            return Err(Error::Shape(format!(
                "gradient {:?} for parameter `{}` of shape {:?}",
                g.shape(),
                slot.name,
                slot.value.shape()
            )));
        }
        slot.grad.add_assign(g);
        Ok(())
    }

    pub(crate) fn mark_grads_ready(&mut self) {
        self.grads_ready = true;
    }

    pub fn zero_grads(&mut self) {
        for s in &mut self.slots {
            s.grad.data_mut().iter_mut().for_each(|g| *g = T::zero());
        }
        self.grads_ready = false;
    }

    /// One Adam update from the accumulated gradients, which are then cleared.
    pub fn adam_step(&mut self, cfg: &AdamConfig) -> Result<()> {
        if !self.grads_ready {
            return Err(Error::State("adam step without populated gradients".into()));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        let (b1, b2) = (T::lift(cfg.beta1), T::lift(cfg.beta2));
        let (ob1, ob2) = (T::lift(1.0 - cfg.beta1), T::lift(1.0 - cfg.beta2));
        let step_size = T::lift(cfg.lr / bc1);
        let inv_bc2 = T::lift(1.0 / bc2);
        let eps = T::lift(cfg.eps);
        for s in &mut self.slots {
            let n = s.value.data().len();
            let (val, grad, m, v) = (
                s.value.data_mut(),
                s.grad.data(),
                s.m.data_mut(),
                s.v.data_mut(),
            );
            for i in 0..n {
                let g = grad[i];
                m[i] = b1 * m[i] + ob1 * g;
                v[i] = b2 * v[i] + ob2 * g * g;
                let denom = (v[i] * inv_bc2).sqrt() + eps;
                val[i] = val[i] - step_size * m[i] / denom;
            }
        }
        self.zero_grads();
        Ok(())
    }
}

/// Deterministic RNG for parameter init.
pub fn init_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
