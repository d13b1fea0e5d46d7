use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use super::{FusionError, WeightVector, INPUT_DIM, N_AGENTS};

/// Added to `exp(logit)` so every concentration stays strictly positive.
pub const CONCENTRATION_FLOOR: f64 = 1e-3;
/// Smallest weight a sampled coordinate may take; keeps `ln w` finite.
const WEIGHT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyShape {
    pub input: usize,
    pub hidden: usize,
    pub actions: usize,
}

impl Default for PolicyShape {
    fn default() -> Self {
        Self {
            input: INPUT_DIM,
            hidden: 16,
            actions: N_AGENTS,
        }
    }
}

impl PolicyShape {
    /// Named blocks of the flat parameter vector: `(name, rows, cols)`.
    pub fn layers(&self) -> [(&'static str, usize, usize); 8] {
        let (i, h, a) = (self.input, self.hidden, self.actions);
        [
            ("policy.w1", h, i),
            ("policy.b1", h, 1),
            ("policy.w2", a, h),
            ("policy.b2", a, 1),
            ("value.w1", h, i),
            ("value.b1", h, 1),
            ("value.w2", 1, h),
            ("value.b2", 1, 1),
        ]
    }

    pub fn len(&self) -> usize {
        self.layers().iter().map(|(_, r, c)| r * c).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn offsets(&self) -> Offsets {
        let mut acc = 0;
        let mut next = |n: usize| {
            let o = acc;
            acc += n;
            o
        };
        let (i, h, a) = (self.input, self.hidden, self.actions);
        Offsets {
            pw1: next(h * i),
            pb1: next(h),
            pw2: next(a * h),
            pb2: next(a),
            vw1: next(h * i),
            vb1: next(h),
            vw2: next(h),
            vb2: next(1),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Offsets {
    pw1: usize,
    pb1: usize,
    pw2: usize,
    pb2: usize,
    vw1: usize,
    vb1: usize,
    vw2: usize,
    vb2: usize,
}

/// Policy and value networks, both `input -> tanh(hidden) -> out`, stored
/// as one flat row-major vector in the order of [`PolicyShape::layers`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    shape: PolicyShape,
    theta: Vec<f64>,
}

struct PolicyForward {
    hidden: Vec<f64>,
    alpha: [f64; N_AGENTS],
}

impl PolicyParams {
    /// Uniform fan-in initialisation. The output layers start scaled down
    /// so the initial concentrations sit near 1 (a flat Dirichlet).
    pub fn init(shape: PolicyShape, seed: u64) -> Result<Self, FusionError> {
        Self::check_shape(&shape)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut theta = Vec::with_capacity(shape.len());
        for (name, rows, cols) in shape.layers() {
            let is_bias = name.contains(".b");
            let scale = if is_bias {
                0.0
            } else if name.ends_with("w2") {
                0.1 / (cols as f64).sqrt()
            } else {
                1.0 / (cols as f64).sqrt()
            };
            for _ in 0..rows * cols {
                theta.push(if scale == 0.0 {
                    0.0
                } else {
                    rng.random_range(-scale..scale)
                });
            }
        }
        Ok(Self { shape, theta })
    }

    pub fn from_flat(shape: PolicyShape, theta: Vec<f64>) -> Result<Self, FusionError> {
        Self::check_shape(&shape)?;
        if theta.len() != shape.len() {
            return Err(FusionError::DimensionMismatch {
                expected: shape.len(),
                got: theta.len(),
            });
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(FusionError::NonFiniteActivation);
        }
        Ok(Self { shape, theta })
    }

    fn check_shape(shape: &PolicyShape) -> Result<(), FusionError> {
        if shape.input != INPUT_DIM || shape.actions != N_AGENTS || shape.hidden == 0 {
            return Err(FusionError::InvalidConfig(format!(
                "policy shape must be {INPUT_DIM} -> hidden -> {N_AGENTS}, got {shape:?}"
            )));
        }
        Ok(())
    }

    pub fn shape(&self) -> PolicyShape {
        self.shape
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().all(|t| t.is_finite())
    }

    fn hidden_layer(&self, w: usize, b: usize, x: &[f64]) -> Vec<f64> {
        let (n_in, n_h) = (self.shape.input, self.shape.hidden);
        (0..n_h)
            .map(|j| {
                let row = &self.theta[w + j * n_in..w + (j + 1) * n_in];
                let pre: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.theta[b + j];
                pre.tanh()
            })
            .collect()
    }

    fn forward(&self, x: &[f64]) -> Result<PolicyForward, FusionError> {
        if x.len() != self.shape.input {
            return Err(FusionError::DimensionMismatch {
                expected: self.shape.input,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(FusionError::NonFiniteActivation);
        }
        let o = self.shape.offsets();
        let hidden = self.hidden_layer(o.pw1, o.pb1, x);
        let n_h = self.shape.hidden;
        let mut alpha = [0.0; N_AGENTS];
        for (k, a) in alpha.iter_mut().enumerate() {
            let row = &self.theta[o.pw2 + k * n_h..o.pw2 + (k + 1) * n_h];
            let z: f64 = row.iter().zip(&hidden).map(|(a, b)| a * b).sum::<f64>() + self.theta[o.pb2 + k];
            *a = z.exp() + CONCENTRATION_FLOOR;
        }
        if alpha.iter().any(|a| !a.is_finite()) {
            return Err(FusionError::NonFiniteActivation);
        }
        Ok(PolicyForward { hidden, alpha })
    }

    /// Dirichlet concentrations for policy input `x`.
    pub fn concentrations(&self, x: &[f64]) -> Result<[f64; N_AGENTS], FusionError> {
        self.forward(x).map(|f| f.alpha)
    }

    pub fn value(&self, x: &[f64]) -> Result<f64, FusionError> {
        self.forward(x)?;
        let o = self.shape.offsets();
        let g = self.hidden_layer(o.vw1, o.vb1, x);
        let v = self.theta[o.vw2..o.vw2 + self.shape.hidden]
            .iter()
            .zip(&g)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            + self.theta[o.vb2];
        v.is_finite().then_some(v).ok_or(FusionError::NonFiniteActivation)
    }

    /// Draws `w ~ Dir(alpha(x))` and returns it with its exact log-density.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        x: &[f64],
        rng: &mut R,
    ) -> Result<(WeightVector, f64), FusionError> {
        let alpha = self.concentrations(x)?;
        let mut g = [0.0; N_AGENTS];
        for (gi, &a) in g.iter_mut().zip(&alpha) {
            let dist = Gamma::new(a, 1.0).map_err(|_| FusionError::NonFiniteActivation)?;
            *gi = dist.sample(rng);
        }
        let sum: f64 = g.iter().sum();
        let raw = if sum > 0.0 && sum.is_finite() {
            g.map(|v| (v / sum).max(WEIGHT_FLOOR))
        } else {
            [1.0; N_AGENTS]
        };
        let w = WeightVector::normalized(raw)?;
        let lp = dirichlet_log_density(&alpha, w.as_array());
        if !lp.is_finite() {
            return Err(FusionError::NonFiniteActivation);
        }
        Ok((w, lp))
    }

    pub fn log_prob(&self, x: &[f64], w: &WeightVector) -> Result<f64, FusionError> {
        let alpha = self.concentrations(x)?;
        Ok(dirichlet_log_density(&alpha, w.as_array()))
    }

    /// Mean of the Dirichlet, used at inference time.
    pub fn mean_weights(&self, x: &[f64]) -> Result<WeightVector, FusionError> {
        Ok(dirichlet_mean(&self.concentrations(x)?))
    }

    /// Adds `scale * d log pi(w | x) / d theta` into `grad`; returns the
    /// log-density.
    pub(crate) fn accumulate_log_prob_grad(
        &self,
        x: &[f64],
        w: &WeightVector,
        scale: f64,
        grad: &mut [f64],
    ) -> Result<f64, FusionError> {
        let f = self.forward(x)?;
        let w = w.as_array();
        let total: f64 = f.alpha.iter().sum();
        let psi_total = digamma(total);
        let o = self.shape.offsets();
        let (n_in, n_h) = (self.shape.input, self.shape.hidden);

        let mut dz = [0.0; N_AGENTS];
        for k in 0..N_AGENTS {
            let dlp_dalpha = psi_total - digamma(f.alpha[k]) + w[k].ln();
            dz[k] = scale * dlp_dalpha * (f.alpha[k] - CONCENTRATION_FLOOR);
        }
        let mut dh = vec![0.0; n_h];
        for k in 0..N_AGENTS {
            for j in 0..n_h {
                grad[o.pw2 + k * n_h + j] += dz[k] * f.hidden[j];
                dh[j] += dz[k] * self.theta[o.pw2 + k * n_h + j];
            }
            grad[o.pb2 + k] += dz[k];
        }
        for j in 0..n_h {
            let dpre = dh[j] * (1.0 - f.hidden[j] * f.hidden[j]);
            for i in 0..n_in {
                grad[o.pw1 + j * n_in + i] += dpre * x[i];
            }
            grad[o.pb1 + j] += dpre;
        }
        Ok(dirichlet_log_density(&f.alpha, w))
    }

    /// Adds `scale * d V(x) / d theta` into `grad`; returns `V(x)`.
    pub(crate) fn accumulate_value_grad(
        &self,
        x: &[f64],
        scale: f64,
        grad: &mut [f64],
    ) -> Result<f64, FusionError> {
        let v = self.value(x)?;
        let o = self.shape.offsets();
        let (n_in, n_h) = (self.shape.input, self.shape.hidden);
        let g = self.hidden_layer(o.vw1, o.vb1, x);
        for j in 0..n_h {
            grad[o.vw2 + j] += scale * g[j];
            let dpre = scale * self.theta[o.vw2 + j] * (1.0 - g[j] * g[j]);
            for i in 0..n_in {
                grad[o.vw1 + j * n_in + i] += dpre * x[i];
            }
            grad[o.vb1 + j] += dpre;
        }
        grad[o.vb2] += scale;
        Ok(v)
    }
}

/// `ln Gamma(sum a) - sum ln Gamma(a_i) + sum (a_i - 1) ln w_i`.
pub fn dirichlet_log_density(alpha: &[f64], w: &[f64]) -> f64 {
    let total: f64 = alpha.iter().sum();
    ln_gamma(total)
        + alpha
            .iter()
            .zip(w)
            .map(|(&a, &wi)| (a - 1.0) * wi.ln() - ln_gamma(a))
            .sum::<f64>()
}

pub fn dirichlet_mean(alpha: &[f64; N_AGENTS]) -> WeightVector {
    let total: f64 = alpha.iter().sum();
    let mut w = alpha.map(|a| a / total);
    // Push the rounding residue into the largest coordinate.
    let residue = 1.0 - w.iter().sum::<f64>();
    let k = (0..N_AGENTS)
        .max_by(|&a, &b| w[a].total_cmp(&w[b]))
        .unwrap_or(0);
    w[k] += residue;
    WeightVector::new(w).expect("normalised concentrations lie on the simplex")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(seed: u64) -> PolicyParams {
        PolicyParams::init(PolicyShape::default(), seed).unwrap()
    }

    fn input(seed: u64) -> [f64; INPUT_DIM] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        std::array::from_fn(|_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn flat_dirichlet_density_is_ln_two() {
        for w in [[0.2, 0.3, 0.5], [1.0 / 3.0; 3], [0.9, 0.05, 0.05]] {
            assert!((dirichlet_log_density(&[1.0, 1.0, 1.0], &w) - 2f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_mean_is_uniform() {
        let w = dirichlet_mean(&[2.0, 2.0, 2.0]);
        for x in w.as_array() {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn samples_are_on_simplex_and_reproducible() {
        let p = params(1);
        let x = input(2);
        let mut r1 = ChaCha8Rng::seed_from_u64(9);
        let mut r2 = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let (w1, lp1) = p.sample(&x, &mut r1).unwrap();
            let (w2, lp2) = p.sample(&x, &mut r2).unwrap();
            assert_eq!(w1, w2);
            assert_eq!(lp1, lp2);
            assert!(w1.is_on_simplex());
            assert!(w1.as_array().iter().all(|v| *v > 0.0));
        }
    }

    #[test]
    fn recomputed_log_prob_matches() {
        let p = params(3);
        let x = input(4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let (w, lp) = p.sample(&x, &mut rng).unwrap();
            assert!((p.log_prob(&x, &w).unwrap() - lp).abs() <= 1e-9);
        }
    }

    #[test]
    fn initial_policy_is_near_flat() {
        let alpha = params(7).concentrations(&input(8)).unwrap();
        for a in alpha {
            assert!((0.5..2.0).contains(&a), "{a}");
        }
    }

    #[test]
    fn tiny_concentrations_stay_finite() {
        let mut p = params(1);
        let o = p.shape().offsets();
        for k in 0..N_AGENTS {
            p.theta_mut()[o.pb2 + k] = -30.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let (w, lp) = p.sample(&input(1), &mut rng).unwrap();
            assert!(w.is_on_simplex() && lp.is_finite());
        }
    }

    #[test]
    fn log_prob_gradient_matches_finite_differences() {
        let p = params(11);
        let x = input(12);
        let w = WeightVector::new([0.2, 0.5, 0.3]).unwrap();
        let mut grad = vec![0.0; p.theta().len()];
        p.accumulate_log_prob_grad(&x, &w, 1.0, &mut grad).unwrap();
        let h = 1e-6;
        for i in (0..grad.len()).step_by(7) {
            let mut plus = p.clone();
            plus.theta_mut()[i] += h;
            let mut minus = p.clone();
            minus.theta_mut()[i] -= h;
            let fd = (plus.log_prob(&x, &w).unwrap() - minus.log_prob(&x, &w).unwrap()) / (2.0 * h);
            assert!((fd - grad[i]).abs() <= 1e-6 * (1.0 + fd.abs()), "param {i}: {fd} vs {}", grad[i]);
        }
    }
}
