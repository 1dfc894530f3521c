//! A small causal next-token model with hand-written backpropagation.
//!
//! Each position sees the previous `window` tokens (left-padded with a
//! dedicated PAD embedding), concatenates their embeddings, and applies one
//! tanh hidden layer followed by a linear readout over the vocabulary.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::objective::{kl_position, kl_position_grad};
use super::DistillError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub vocab_size: usize,
    pub window: usize,
    pub embed_dim: usize,
    pub hidden: usize,
}

impl Architecture {
    pub fn new(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            window: 8,
            embed_dim: 16,
            hidden: 64,
        }
    }

    pub fn layout(&self) -> Layout {
        let (v, w, d, h) = (self.vocab_size, self.window, self.embed_dim, self.hidden);
        let embed = 0;
        let w1 = embed + (v + 1) * d;
        let b1 = w1 + h * w * d;
        let w2 = b1 + h;
        let b2 = w2 + v * h;
        Layout {
            embed,
            w1,
            b1,
            w2,
            b2,
            len: b2 + v,
        }
    }

    pub fn param_count(&self) -> usize {
        self.layout().len
    }
}

/// Offsets of each parameter block in the flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub embed: usize,
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentModel {
    pub arch: Architecture,
    pub theta: Vec<f64>,
}

/// Activations kept for the backward pass at one position.
struct Trace {
    window: Vec<usize>,
    x: Vec<f64>,
    h: Vec<f64>,
    logits: Vec<f64>,
}

impl StudentModel {
    /// Uniform Glorot-style initialization; biases start at zero.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self, DistillError> {
        if arch.vocab_size == 0 || arch.window == 0 || arch.embed_dim == 0 || arch.hidden == 0 {
            return Err(DistillError::Config(format!("degenerate architecture {arch:?}")));
        }
        let l = arch.layout();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut theta = vec![0.0; l.len];
        let mut fill = |range: std::ops::Range<usize>, bound: f64| {
            for t in &mut theta[range] {
                *t = rng.gen_range(-bound..bound);
            }
        };
        let fan_in = (arch.window * arch.embed_dim) as f64;
        fill(l.embed..l.w1, 0.5);
        fill(l.w1..l.b1, (6.0 / (fan_in + arch.hidden as f64)).sqrt());
        fill(l.w2..l.b2, (6.0 / (arch.hidden + arch.vocab_size) as f64).sqrt());
        Ok(Self { arch, theta })
    }

    pub fn from_parts(arch: Architecture, theta: Vec<f64>) -> Result<Self, DistillError> {
        if theta.len() != arch.param_count() {
            return Err(DistillError::Input(format!(
                "{} parameters for an architecture expecting {}",
                theta.len(),
                arch.param_count()
            )));
        }
        Ok(Self { arch, theta })
    }

    fn pad(&self) -> usize {
        self.arch.vocab_size
    }

    /// The `window` tokens preceding `pos` in `seq`, PAD-filled on the left.
    fn window_at(&self, seq: &[usize], pos: usize) -> Vec<usize> {
        let w = self.arch.window;
        (0..w)
            .map(|j| (pos + j).checked_sub(w).map_or(self.pad(), |i| seq[i]))
            .collect()
    }

    fn forward_window(&self, window: Vec<usize>) -> Trace {
        let Architecture {
            vocab_size: v,
            embed_dim: d,
            hidden: hn,
            ..
        } = self.arch;
        let l = self.arch.layout();
        let t = &self.theta;
        let mut x = Vec::with_capacity(window.len() * d);
        for &tok in &window {
            x.extend_from_slice(&t[l.embed + tok * d..l.embed + (tok + 1) * d]);
        }
        let n = x.len();
        let h: Vec<f64> = (0..hn)
            .map(|i| {
                let row = &t[l.w1 + i * n..l.w1 + (i + 1) * n];
                let a: f64 = row.iter().zip(&x).map(|(w, x)| w * x).sum::<f64>() + t[l.b1 + i];
                a.tanh()
            })
            .collect();
        let logits = (0..v)
            .map(|k| {
                let row = &t[l.w2 + k * hn..l.w2 + (k + 1) * hn];
                row.iter().zip(&h).map(|(w, h)| w * h).sum::<f64>() + t[l.b2 + k]
            })
            .collect();
        Trace { window, x, h, logits }
    }

    /// Adds the parameter gradient for one position given `dz`, the
    /// gradient with respect to that position's logits.
    fn backward(&self, trace: &Trace, dz: &[f64], grad: &mut [f64]) {
        let Architecture {
            embed_dim: d,
            hidden: hn,
            ..
        } = self.arch;
        let l = self.arch.layout();
        let t = &self.theta;
        let n = trace.x.len();
        let mut dh = vec![0.0; hn];
        for (k, &g) in dz.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad[l.b2 + k] += g;
            let base = l.w2 + k * hn;
            for i in 0..hn {
                grad[base + i] += g * trace.h[i];
                dh[i] += g * t[base + i];
            }
        }
        let mut dx = vec![0.0; n];
        for i in 0..hn {
            let da = dh[i] * (1.0 - trace.h[i] * trace.h[i]);
            if da == 0.0 {
                continue;
            }
            grad[l.b1 + i] += da;
            let base = l.w1 + i * n;
            for j in 0..n {
                grad[base + j] += da * trace.x[j];
                dx[j] += da * t[base + j];
            }
        }
        for (slot, &tok) in trace.window.iter().enumerate() {
            let e = l.embed + tok * d;
            for c in 0..d {
                grad[e + c] += dx[slot * d + c];
            }
        }
    }

    /// Logits over the vocabulary at every position of `seq`, each
    /// conditioned on the tokens before it.
    pub fn sequence_logits(&self, seq: &[usize]) -> Vec<Vec<f64>> {
        (0..seq.len())
            .map(|p| self.forward_window(self.window_at(seq, p)).logits)
            .collect()
    }

    /// Logits predicting each response token from `input` and the response
    /// prefix before it.
    pub fn response_logits(&self, input: &[usize], response: &[usize]) -> Vec<Vec<f64>> {
        let seq: Vec<usize> = input.iter().chain(response).copied().collect();
        (input.len()..seq.len())
            .map(|p| self.forward_window(self.window_at(&seq, p)).logits)
            .collect()
    }

    /// Mean truncated KL over the response positions of one example, adding
    /// `scale` times its gradient into `grad`.
    pub fn kl_and_grad(
        &self,
        input: &[usize],
        response: &[usize],
        targets: &[Vec<(usize, f64)>],
        scale: f64,
        grad: &mut [f64],
    ) -> f64 {
        let seq: Vec<usize> = input.iter().chain(response).copied().collect();
        let positions = targets.len().max(1) as f64;
        let mut loss = 0.0;
        for (r, target) in targets.iter().enumerate() {
            let trace = self.forward_window(self.window_at(&seq, input.len() + r));
            loss += kl_position(target, &trace.logits);
            let dz: Vec<f64> = kl_position_grad(target, &trace.logits)
                .into_iter()
                .map(|g| g * scale / positions)
                .collect();
            self.backward(&trace, &dz, grad);
        }
        loss / positions
    }

    /// Greedy continuation of `input`, stopping after `stop` or `max_len` tokens.
    pub fn greedy(&self, input: &[usize], max_len: usize, stop: Option<usize>) -> Vec<usize> {
        let mut seq = input.to_vec();
        let mut out = Vec::new();
        while out.len() < max_len {
            let logits = self.forward_window(self.window_at(&seq, seq.len())).logits;
            let next = argmax(&logits);
            seq.push(next);
            out.push(next);
            if Some(next) == stop {
                break;
            }
        }
        out
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
