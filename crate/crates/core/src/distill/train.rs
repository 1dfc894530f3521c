//! AdamW training on the truncated KL objective.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::DistillExample;
use super::model::StudentModel;
use super::DistillError;
use crate::backend::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    /// Hold the peak rate after warmup.
    Constant,
    /// Decay linearly from the peak to zero over the remaining steps.
    #[default]
    LinearDecay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Examples whose gradients are averaged into one optimizer step.
    pub effective_batch: usize,
    /// Applied to the teacher's retained scores only.
    pub temperature: f64,
    pub top_k: usize,
    pub warmup_steps: usize,
    pub max_seq_len: usize,
    pub epochs: usize,
    pub schedule: Schedule,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-5,
            effective_batch: 64,
            temperature: 1.0,
            top_k: 100,
            warmup_steps: 50,
            max_seq_len: 16_384,
            epochs: 2,
            schedule: Schedule::LinearDecay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), DistillError> {
        let bad = |m: &str| Err(DistillError::Config(m.to_string()));
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be finite and non-negative");
        }
        if self.effective_batch == 0 || self.top_k == 0 || self.max_seq_len == 0 || self.epochs == 0 {
            return bad("effective_batch, top_k, max_seq_len and epochs must be at least 1");
        }
        if !(self.temperature > 0.0) {
            return bad("temperature must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return bad("betas must lie in [0, 1) and eps must be positive");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay must be non-negative");
        }
        Ok(())
    }

    /// Learning rate at optimizer step `step` (1-based) of `total`.
    pub fn lr_at(&self, step: usize, total: usize) -> f64 {
        if step <= self.warmup_steps {
            return self.learning_rate * step as f64 / self.warmup_steps as f64;
        }
        match self.schedule {
            Schedule::Constant => self.learning_rate,
            Schedule::LinearDecay => {
                let rest = total.saturating_sub(self.warmup_steps).max(1) as f64;
                let left = (total + 1).saturating_sub(step) as f64;
                self.learning_rate * (left / rest).clamp(0.0, 1.0)
            }
        }
    }
}

/// Mean loss and mean gradient over a batch.
pub fn grad_kl(model: &StudentModel, batch: &[DistillExample], tau: f64) -> Result<(f64, Vec<f64>), DistillError> {
    let mut grad = vec![0.0; model.theta.len()];
    if batch.is_empty() {
        return Ok((0.0, grad));
    }
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for ex in batch {
        loss += example_loss_grad(model, ex, tau, scale, &mut grad)?;
    }
    Ok((loss * scale, grad))
}

fn example_loss_grad(
    model: &StudentModel,
    ex: &DistillExample,
    tau: f64,
    scale: f64,
    grad: &mut [f64],
) -> Result<f64, DistillError> {
    if ex.targets.len() != ex.response.len() {
        return Err(DistillError::Input(format!(
            "example {}: {} targets for {} response tokens",
            ex.example_id,
            ex.targets.len(),
            ex.response.len()
        )));
    }
    let soft = ex.soft_targets(tau)?;
    Ok(model.kl_and_grad(&ex.student_input, &ex.response, &soft, scale, grad))
}

/// Mean per-example loss without gradients.
pub fn mean_kl(model: &StudentModel, examples: &[DistillExample], tau: f64) -> Result<f64, DistillError> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for ex in examples {
        let soft = ex.soft_targets(tau)?;
        let logits = model.response_logits(&ex.student_input, &ex.response);
        total += super::objective::kl_loss(&soft, &logits)?;
    }
    Ok(total / examples.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub model: StudentModel,
    /// Mean batch loss before each optimizer step.
    pub loss_history: Vec<f64>,
}

struct AdamW {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl AdamW {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, theta: &mut [f64], grad: &[f64], lr: f64, c: &TrainConfig) {
        self.t += 1;
        let bc1 = 1.0 - c.beta1.powi(self.t);
        let bc2 = 1.0 - c.beta2.powi(self.t);
        for i in 0..theta.len() {
            let g = grad[i];
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * g;
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * g * g;
            let update = (self.m[i] / bc1) / ((self.v[i] / bc2).sqrt() + c.eps);
            theta[i] -= lr * (update + c.weight_decay * theta[i]);
        }
    }
}

/// Minimizes the mean truncated KL from `init`. Examples are reshuffled
/// every epoch from the config seed; a partial final batch still steps.
pub fn train(examples: &[DistillExample], config: &TrainConfig, init: StudentModel) -> Result<TrainOutcome, DistillError> {
    config.validate()?;
    if examples.is_empty() {
        return Err(DistillError::Input("empty training set".into()));
    }
    let mut model = init;
    let n = examples.len();
    let steps_per_epoch = n.div_ceil(config.effective_batch);
    let total = steps_per_epoch * config.epochs;
    let mut opt = AdamW::new(model.theta.len());
    let mut history = Vec::with_capacity(total);
    let mut order: Vec<usize> = (0..n).collect();
    let mut grad = vec![0.0; model.theta.len()];
    for epoch in 0..config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[epoch as u64]));
        order.sort_unstable();
        order.shuffle(&mut rng);
        for batch in order.chunks(config.effective_batch) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            let mut loss = 0.0;
            for &i in batch {
                loss += example_loss_grad(&model, &examples[i], config.temperature, scale, &mut grad)?;
            }
            loss *= scale;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(DistillError::Diverged {
                    step: history.len(),
                    last: Box::new(model),
                });
            }
            history.push(loss);
            let lr = config.lr_at(history.len(), total);
            opt.step(&mut model.theta, &grad, lr, config);
        }
        log::debug!("epoch {epoch}: last batch loss {:.6}", history.last().copied().unwrap_or(0.0));
    }
    Ok(TrainOutcome {
        model,
        loss_history: history,
    })
}
