//! Differentiable scoring functions h(x; w): a linear model and a small MLP
//! with tanh hidden activations, with forward evaluation and reverse-mode
//! gradient accumulation into a flat buffer.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Architecture descriptor. `Mlp { hidden }` stacks affine layers with tanh
/// activations on the hidden layers and a final affine layer to a scalar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Arch {
    Linear,
    Mlp { hidden: Vec<usize> },
}

impl Arch {
    /// Layer widths including input and scalar output.
    fn widths(&self, d_feat: usize) -> Vec<usize> {
        match self {
            Arch::Linear => vec![d_feat, 1],
            Arch::Mlp { hidden } => {
                let mut w = Vec::with_capacity(hidden.len() + 2);
                w.push(d_feat);
                w.extend_from_slice(hidden);
                w.push(1);
                w
            }
        }
    }

    /// Total parameter count. The linear model is a pure dot product (no
    /// bias: a shared offset never changes ranks); MLP layers carry biases.
    pub fn param_count(&self, d_feat: usize) -> usize {
        match self {
            Arch::Linear => d_feat,
            Arch::Mlp { .. } => {
                let w = self.widths(d_feat);
                w.windows(2).map(|p| (p[0] + 1) * p[1]).sum()
            }
        }
    }
}

/// Flat additive accumulator for weight gradients, one slot per parameter.
#[derive(Debug, Clone)]
pub struct GradBuffer {
    pub grad: Vec<f64>,
}

impl GradBuffer {
    pub fn new(len: usize) -> Self {
        GradBuffer {
            grad: vec![0.0; len],
        }
    }

    pub fn reset(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn l2_norm(&self) -> f64 {
        self.grad.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// Scorer parameters plus the architecture needed to interpret them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerState {
    arch: Arch,
    d_feat: usize,
    params: Vec<f64>,
}

impl ScorerState {
    pub fn zeros(arch: Arch, d_feat: usize) -> Self {
        let n = arch.param_count(d_feat);
        ScorerState {
            arch,
            d_feat,
            params: vec![0.0; n],
        }
    }

    /// Deterministic initialization: each layer drawn uniform(-a, a) with
    /// a = sqrt(6 / (fan_in + fan_out)).
    pub fn init(arch: Arch, d_feat: usize, seed: u64) -> Self {
        let mut state = ScorerState::zeros(arch, d_feat);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let widths = state.arch.widths(d_feat);
        let mut offset = 0;
        for pair in widths.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let span = state.layer_len(fan_in, fan_out);
            for p in &mut state.params[offset..offset + span] {
                *p = rng.gen_range(-a..a);
            }
            offset += span;
        }
        state
    }

    fn layer_len(&self, fan_in: usize, fan_out: usize) -> usize {
        match self.arch {
            Arch::Linear => fan_in * fan_out,
            Arch::Mlp { .. } => (fan_in + 1) * fan_out,
        }
    }

    /// Re-draws the final affine layer (MLP only; a no-op for the linear
    /// model, whose single layer is the whole model).
    pub fn reinit_final_layer(&mut self, seed: u64) {
        if let Arch::Mlp { .. } = self.arch {
            let widths = self.arch.widths(self.d_feat);
            let fan_in = widths[widths.len() - 2];
            let span = fan_in + 1;
            let start = self.params.len() - span;
            let a = (6.0 / (fan_in + 1) as f64).sqrt();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for p in &mut self.params[start..] {
                *p = rng.gen_range(-a..a);
            }
        }
    }

    pub fn arch(&self) -> &Arch {
        &self.arch
    }

    pub fn d_feat(&self) -> usize {
        self.d_feat
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn check_width(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d_feat {
            return Err(Error::Dimension {
                expected: self.d_feat,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Forward pass h(x; w).
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        self.check_width(x)?;
        match &self.arch {
            Arch::Linear => Ok(x.iter().zip(&self.params).map(|(a, b)| a * b).sum()),
            Arch::Mlp { .. } => Ok(self.mlp_forward(x).0),
        }
    }

    /// Runs the MLP, returning the output and every hidden activation (the
    /// post-tanh values, needed by the backward pass).
    fn mlp_forward(&self, x: &[f64]) -> (f64, Vec<Vec<f64>>) {
        let widths = self.arch.widths(self.d_feat);
        let n_layers = widths.len() - 1;
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(n_layers - 1);
        let mut z: Vec<f64> = x.to_vec();
        let mut offset = 0;
        for (l, pair) in widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let w = &self.params[offset..offset + fan_in * fan_out];
            let b = &self.params[offset + fan_in * fan_out..offset + (fan_in + 1) * fan_out];
            let mut a = vec![0.0; fan_out];
            for o in 0..fan_out {
                let row = &w[o * fan_in..(o + 1) * fan_in];
                a[o] = b[o] + row.iter().zip(&z).map(|(wi, zi)| wi * zi).sum::<f64>();
            }
            offset += (fan_in + 1) * fan_out;
            if l + 1 < n_layers {
                for v in &mut a {
                    *v = v.tanh();
                }
                activations.push(a.clone());
                z = a;
            } else {
                return (a[0], activations);
            }
        }
        unreachable!("mlp has at least one layer");
    }

    /// Accumulates `buffer += coefficient * grad_w h(x; w)` by reverse-mode
    /// differentiation. A zero coefficient leaves the buffer untouched.
    pub fn accumulate_score_grad(
        &self,
        x: &[f64],
        coefficient: f64,
        buffer: &mut GradBuffer,
    ) -> Result<()> {
        self.check_width(x)?;
        if buffer.grad.len() != self.params.len() {
            return Err(Error::Dimension {
                expected: self.params.len(),
                got: buffer.grad.len(),
            });
        }
        if coefficient == 0.0 {
            return Ok(());
        }
        match &self.arch {
            Arch::Linear => {
                for (g, xi) in buffer.grad.iter_mut().zip(x) {
                    *g += coefficient * xi;
                }
                Ok(())
            }
            Arch::Mlp { .. } => {
                self.mlp_backward(x, coefficient, buffer);
                Ok(())
            }
        }
    }

    fn mlp_backward(&self, x: &[f64], coefficient: f64, buffer: &mut GradBuffer) {
        let widths = self.arch.widths(self.d_feat);
        let n_layers = widths.len() - 1;
        let (_, activations) = self.mlp_forward(x);

        // Byte offsets of each layer's parameter block.
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for pair in widths.windows(2) {
            offsets.push(off);
            off += (pair[0] + 1) * pair[1];
        }

        // delta holds d h / d a_l for the layer being processed, starting at
        // the linear output where it is exactly 1.
        let mut delta = vec![1.0];
        for l in (0..n_layers).rev() {
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            let input: &[f64] = if l == 0 { x } else { &activations[l - 1] };
            let base = offsets[l];
            for (o, d_out) in delta.iter().enumerate() {
                let d = coefficient * d_out;
                let wrow = base + o * fan_in;
                for (i, xi) in input.iter().enumerate() {
                    buffer.grad[wrow + i] += d * xi;
                }
                buffer.grad[base + fan_in * fan_out + o] += d;
            }
            if l > 0 {
                // Propagate through W_l^T and the tanh derivative 1 - z^2.
                let z = &activations[l - 1];
                let mut prev = vec![0.0; fan_in];
                for (i, p) in prev.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (o, d) in delta.iter().enumerate() {
                        acc += self.params[base + o * fan_in + i] * d;
                    }
                    *p = acc * (1.0 - z[i] * z[i]);
                }
                delta = prev;
            }
        }
    }
}
