use serde::{Deserialize, Serialize};

use super::{clip, FusionError, FusionInput, PolicyParams, WeightVector};

const VALUE_COEF: f64 = 0.5;
/// Advantages are standardised only for batches at least this large.
const NORMALIZE_MIN_BATCH: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpoConfig {
    pub epsilon: f64,
    pub learning_rate: f64,
    pub epochs_per_batch: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.2,
            learning_rate: 3e-3,
            epochs_per_batch: 4,
            batch_size: 64,
            seed: 0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), FusionError> {
        let bad = |m: &str| Err(FusionError::InvalidConfig(m.to_string()));
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad("epsilon must lie in (0, 1)");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.epochs_per_batch == 0 || self.batch_size == 0 {
            return bad("epochs_per_batch and batch_size must be at least 1");
        }
        Ok(())
    }
}

/// One contextual-bandit step: a single email and the weights drawn for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub input: FusionInput,
    pub sampled_w: WeightVector,
    pub log_prob_old: f64,
    pub reward: f64,
    pub advantage: f64,
}

/// `min(r * adv, clip(r, 1 - eps, 1 + eps) * adv)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, epsilon: f64) -> f64 {
    (ratio * advantage).min(clip(ratio, epsilon) * advantage)
}

/// Sets `advantage = reward - V(x)`, standardised to zero mean and unit
/// variance when the batch has at least 8 episodes.
pub fn compute_advantages(params: &PolicyParams, episodes: &mut [Episode]) -> Result<(), FusionError> {
    for ep in episodes.iter_mut() {
        ep.advantage = ep.reward - params.value(&ep.input.policy_input())?;
    }
    if episodes.len() >= NORMALIZE_MIN_BATCH {
        let n = episodes.len() as f64;
        let mean = episodes.iter().map(|e| e.advantage).sum::<f64>() / n;
        let var = episodes.iter().map(|e| (e.advantage - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        for ep in episodes.iter_mut() {
            ep.advantage = if std > 1e-12 {
                (ep.advantage - mean) / std
            } else {
                ep.advantage - mean
            };
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub objective: f64,
    pub mean_ratio: f64,
    pub clip_fraction: f64,
}

/// The PPO objective
/// `mean(min(r A, clip(r) A)) - 0.5 * mean((V(x) - reward)^2)` at `params`
/// and its exact gradient.
pub fn objective_and_gradient(
    params: &PolicyParams,
    episodes: &[Episode],
    epsilon: f64,
) -> Result<(EpochStats, Vec<f64>), FusionError> {
    if episodes.is_empty() {
        return Err(FusionError::EmptyCorpus);
    }
    let n = episodes.len() as f64;
    let mut grad = vec![0.0; params.theta().len()];
    let mut surrogate = 0.0;
    let mut value_loss = 0.0;
    let mut ratio_sum = 0.0;
    let mut clipped = 0usize;

    for ep in episodes {
        let x = ep.input.policy_input();
        let lp = params.log_prob(&x, &ep.sampled_w)?;
        let r = (lp - ep.log_prob_old).exp();
        let a = ep.advantage;
        surrogate += clipped_surrogate(r, a, epsilon);
        ratio_sum += r;
        if (r - 1.0).abs() > epsilon {
            clipped += 1;
        }
        // Gradient flows only through the unclipped branch when it is the minimum.
        if r * a <= clip(r, epsilon) * a {
            params.accumulate_log_prob_grad(&x, &ep.sampled_w, r * a / n, &mut grad)?;
        }
        let v = params.value(&x)?;
        let err = v - ep.reward;
        value_loss += err * err;
        params.accumulate_value_grad(&x, -2.0 * VALUE_COEF * err / n, &mut grad)?;
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(FusionError::NonFiniteGradient(format!("component {i}")));
    }
    Ok((
        EpochStats {
            objective: surrogate / n - VALUE_COEF * value_loss / n,
            mean_ratio: ratio_sum / n,
            clip_fraction: clipped as f64 / n,
        },
        grad,
    ))
}

/// Adam in ascent form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn ascend(&mut self, theta: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..theta.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            theta[i] += lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }
}

/// Per-update summary. The top-level numbers average the per-epoch values,
/// each measured before that epoch's step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateDiagnostics {
    pub objective: f64,
    pub mean_ratio: f64,
    pub clip_fraction: f64,
    pub epochs: Vec<EpochStats>,
}

/// Owns the parameters and optimiser state between updates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpoTrainer {
    pub params: PolicyParams,
    pub adam: Adam,
    pub cfg: PpoConfig,
}

impl PpoTrainer {
    pub fn new(params: PolicyParams, cfg: PpoConfig) -> Result<Self, FusionError> {
        cfg.validate()?;
        Ok(Self {
            adam: Adam::new(params.theta().len()),
            params,
            cfg,
        })
    }

    /// `epochs_per_batch` full-batch ascent steps on the PPO objective. The
    /// parameters are left untouched when a gradient turns non-finite.
    pub fn update(&mut self, episodes: &[Episode]) -> Result<UpdateDiagnostics, FusionError> {
        let mut params = self.params.clone();
        let mut adam = self.adam.clone();
        let mut epochs = Vec::with_capacity(self.cfg.epochs_per_batch);
        for _ in 0..self.cfg.epochs_per_batch {
            let (stats, grad) = objective_and_gradient(&params, episodes, self.cfg.epsilon)?;
            adam.ascend(params.theta_mut(), &grad, self.cfg.learning_rate);
            if !params.is_finite() {
                return Err(FusionError::NonFiniteGradient("parameters left the finite range".into()));
            }
            epochs.push(stats);
        }
        self.params = params;
        self.adam = adam;
        let k = epochs.len() as f64;
        Ok(UpdateDiagnostics {
            objective: epochs.iter().map(|e| e.objective).sum::<f64>() / k,
            mean_ratio: epochs.iter().map(|e| e.mean_ratio).sum::<f64>() / k,
            clip_fraction: epochs.iter().map(|e| e.clip_fraction).sum::<f64>() / k,
            epochs,
        })
    }
}

/// One update from a fresh optimiser state.
pub fn ppo_update(
    params: &PolicyParams,
    episodes: &[Episode],
    cfg: &PpoConfig,
) -> Result<(PolicyParams, UpdateDiagnostics), FusionError> {
    let mut trainer = PpoTrainer::new(params.clone(), *cfg)?;
    let diag = trainer.update(episodes)?;
    Ok((trainer.params, diag))
}
