//! AdamW with decoupled weight decay.
//!
//! Moment buffers live in [`AdamW`], keyed positionally: `step` is called
//! with the same parameter list, in the same order, every iteration. A
//! non-finite gradient rejects the whole step and names the offending
//! parameter, leaving parameters and moments untouched.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::fmath;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OptimError {
    /// A gradient contained NaN or infinity; carries the parameter name.
    NonFiniteGradient { param: String },
    /// Parameter/gradient lengths changed between steps.
    LengthMismatch { param: String, expected: usize, got: usize },
}

impl core::fmt::Display for OptimError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            OptimError::NonFiniteGradient { param } => {
                write!(f, "non-finite gradient for parameter '{param}'")
            }
            OptimError::LengthMismatch { param, expected, got } => {
                write!(f, "parameter '{param}' changed length: {expected} -> {got}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for OptimError {}

struct Slot {
    m: Vec<f64>,
    v: Vec<f64>,
}

pub struct AdamW {
    pub config: AdamWConfig,
    slots: Vec<Slot>,
    t: u64,
}

impl AdamW {
    pub fn new(config: AdamWConfig) -> Self {
        AdamW {
            config,
            slots: Vec::new(),
            t: 0,
        }
    }

    /// Completed step count.
    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Apply one update. `params` pairs a stable name with the mutable
    /// parameter slice; `grads` holds the matching gradients. All gradients
    /// are validated before anything is written, so a rejected step has no
    /// side effects.
    pub fn step(
        &mut self,
        params: &mut [(&str, &mut [f64])],
        grads: &[&[f64]],
    ) -> Result<(), OptimError> {
        debug_assert_eq!(params.len(), grads.len());
        if self.slots.is_empty() {
            for (_, p) in params.iter() {
                self.slots.push(Slot {
                    m: vec![0.0; p.len()],
                    v: vec![0.0; p.len()],
                });
            }
        }
        for (i, (name, p)) in params.iter().enumerate() {
            if grads[i].len() != p.len() || self.slots[i].m.len() != p.len() {
                return Err(OptimError::LengthMismatch {
                    param: String::from(*name),
                    expected: self.slots[i].m.len(),
                    got: grads[i].len(),
                });
            }
            if grads[i].iter().any(|g| !g.is_finite()) {
                return Err(OptimError::NonFiniteGradient {
                    param: String::from(*name),
                });
            }
        }

        self.t += 1;
        let c = &self.config;
        let bc1 = 1.0 - fmath::powf(c.beta1, self.t as f64);
        let bc2 = 1.0 - fmath::powf(c.beta2, self.t as f64);
        for (i, (_, p)) in params.iter_mut().enumerate() {
            let slot = &mut self.slots[i];
            let g = grads[i];
            for j in 0..p.len() {
                slot.m[j] = c.beta1 * slot.m[j] + (1.0 - c.beta1) * g[j];
                slot.v[j] = c.beta2 * slot.v[j] + (1.0 - c.beta2) * g[j] * g[j];
                let m_hat = slot.m[j] / bc1;
                let v_hat = slot.v[j] / bc2;
                p[j] -= c.lr * (m_hat / (fmath::sqrt(v_hat) + c.eps) + c.weight_decay * p[j]);
            }
        }
        Ok(())
    }
}
