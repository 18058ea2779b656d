use std::sync::Arc;

use parking_lot::Mutex;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::tensor::{Scalar, Tensor};

/// Named parameter tensors in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    pub names: Vec<String>,
    pub tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> Default for Params<T> {
    fn default() -> Self {
        Params {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }
}

impl<T: Scalar> Params<T> {
    pub fn push(&mut self, name: impl Into<String>, t: Tensor<T>) -> usize {
        self.names.push(name.into());
        self.tensors.push(t);
        self.tensors.len() - 1
    }

    /// Glorot-uniform tensor: U(-b, b) with b = sqrt(6 / (fan_in + fan_out)).
    pub fn push_glorot(&mut self, name: impl Into<String>, rows: usize, cols: usize, rng: &mut impl Rng) -> usize {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols).map(|_| T::of(rng.gen_range(-bound..bound))).collect();
        self.push(name, Tensor::new(rows, cols, data))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.tensors.iter().map(Tensor::shape).collect()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn cast<U: Scalar>(&self) -> Params<U> {
        Params {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimConfig {
    pub lr: f64,
    pub rho: f64,
    pub eps: f64,
    /// Global gradient-norm clip; non-positive disables clipping.
    pub clip: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            lr: 1e-3,
            rho: 0.99,
            eps: 1e-8,
            clip: 40.0,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum OptimError {
    #[error("non-finite gradient in `{0}`; step rejected")]
    NonFinite(String),
    #[error("gradient shape {found:?} does not match parameter `{name}` {expected:?}")]
    Shape {
        name: String,
        expected: (usize, usize),
        found: (usize, usize),
    },
}

/// Parameters plus RMSProp state.
#[derive(Debug, Clone)]
pub struct ParamStore {
    pub params: Params<f32>,
    pub config: OptimConfig,
    pub(super) sq: Vec<Tensor<f32>>,
    steps: u64,
}

impl ParamStore {
    pub fn new(params: Params<f32>, config: OptimConfig) -> Self {
        let sq = params.tensors.iter().map(|t| Tensor::zeros(t.rows, t.cols)).collect();
        ParamStore {
            params,
            config,
            sq,
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Clip by global norm, then `s <- rho s + (1 - rho) g^2`,
    /// `theta <- theta - lr g / (sqrt(s) + eps)`. Returns the pre-clip norm.
    pub fn rmsprop_step<T: Scalar>(&mut self, grads: &[Tensor<T>]) -> Result<f64, OptimError> {
        for (i, g) in grads.iter().enumerate() {
            let p = &self.params.tensors[i];
            if g.shape() != p.shape() {
                return Err(OptimError::Shape {
                    name: self.params.names[i].clone(),
                    expected: p.shape(),
                    found: g.shape(),
                });
            }
            if !g.all_finite() {
                return Err(OptimError::NonFinite(self.params.names[i].clone()));
            }
        }
        let norm = grads.iter().map(Tensor::sq_norm).sum::<f64>().sqrt();
        let c = &self.config;
        let factor = if c.clip > 0.0 && norm > c.clip { c.clip / norm } else { 1.0 };
        for (i, g) in grads.iter().enumerate() {
            let p = &mut self.params.tensors[i];
            let s = &mut self.sq[i];
            for ((theta, sj), gj) in p.data.iter_mut().zip(s.data.iter_mut()).zip(&g.data) {
                let gj = gj.as_f64() * factor;
                let snew = c.rho * f64::from(*sj) + (1.0 - c.rho) * gj * gj;
                *sj = snew as f32;
                *theta = (f64::from(*theta) - c.lr * gj / (snew.sqrt() + c.eps)) as f32;
            }
        }
        self.steps += 1;
        Ok(norm)
    }
}

/// A [`ParamStore`] shared between training workers. Readers copy a
/// consistent snapshot; each update runs entirely under the lock.
#[derive(Debug, Clone)]
pub struct SharedParamStore(Arc<Mutex<ParamStore>>);

impl SharedParamStore {
    pub fn new(store: ParamStore) -> Self {
        SharedParamStore(Arc::new(Mutex::new(store)))
    }

    pub fn snapshot(&self) -> Params<f32> {
        self.0.lock().params.clone()
    }

    pub fn apply<T: Scalar>(&self, grads: &[Tensor<T>]) -> Result<f64, OptimError> {
        self.0.lock().rmsprop_step(grads)
    }

    pub fn with<R>(&self, f: impl FnOnce(&ParamStore) -> R) -> R {
        f(&self.0.lock())
    }

    pub fn into_inner(self) -> ParamStore {
        match Arc::try_unwrap(self.0) {
            Ok(m) => m.into_inner(),
            Err(arc) => arc.lock().clone(),
        }
    }
}
