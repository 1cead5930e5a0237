use serde::{Deserialize, Serialize};

use super::tape::Mat;

pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled: parameters shrink by `lr * weight_decay` each step.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: ADAM_EPS,
            weight_decay: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Mat>,
    pub v: Vec<Mat>,
    pub step: u64,
}

impl AdamState {
    pub fn new(shapes: &[(usize, usize)]) -> Self {
        AdamState {
            m: shapes.iter().map(|&s| Mat::zeros(s)).collect(),
            v: shapes.iter().map(|&s| Mat::zeros(s)).collect(),
            step: 0,
        }
    }
}

/// Global L2 norm of a gradient list.
pub fn global_norm(grads: &[Mat]) -> f64 {
    grads
        .iter()
        .map(|g| g.iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}

/// Rescales `grads` to global norm `max_norm` when it is larger; returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut [Mat], max_norm: f64) -> f64 {
    let n = global_norm(grads);
    if n > max_norm {
        let c = max_norm / n;
        grads.iter_mut().for_each(|g| *g *= c);
    }
    n
}

/// One bias-corrected Adam update with decoupled weight decay.
pub fn adam_step(state: &mut AdamState, cfg: &AdamConfig, lr: f64, params: &mut [&mut Mat], grads: &[Mat]) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.m.len());
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let decay = 1.0 - lr * cfg.weight_decay;
    for (k, p) in params.iter_mut().enumerate() {
        let (m, v, g) = (&mut state.m[k], &mut state.v[k], &grads[k]);
        assert_eq!(p.dim(), g.dim());
        ndarray::Zip::from(&mut **p)
            .and(m)
            .and(v)
            .and(g)
            .for_each(|p, m, v, &g| {
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                let mh = *m / bc1;
                let vh = *v / bc2;
                *p = *p * decay - lr * mh / (vh.sqrt() + cfg.eps);
            });
    }
}

/// Cosine annealing with warm restarts every `period` epochs (`epoch` may be fractional).
pub fn lr_schedule(epoch: f64, base_lr: f64, period: f64) -> f64 {
    let t = epoch.rem_euclid(period);
    0.5 * base_lr * (1.0 + (std::f64::consts::PI * t / period).cos())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn first_step_moves_by_lr() {
        let cfg = AdamConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut p = array![[0.0]];
        let mut st = AdamState::new(&[(1, 1)]);
        adam_step(&mut st, &cfg, 1e-4, &mut [&mut p], &[array![[1.0]]]);
        assert!((p[[0, 0]] + 1e-4).abs() < 1e-12);
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let cfg = AdamConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut p = array![[0.5, -2.0]];
        let before = p.clone();
        let mut st = AdamState::new(&[(1, 2)]);
        for _ in 0..3 {
            adam_step(&mut st, &cfg, 1e-3, &mut [&mut p], &[Mat::zeros((1, 2))]);
        }
        assert_eq!(p, before);
    }

    #[test]
    fn decay_shrinks_before_update() {
        let cfg = AdamConfig::default();
        let mut p = array![[2.0]];
        let mut st = AdamState::new(&[(1, 1)]);
        adam_step(&mut st, &cfg, 0.1, &mut [&mut p], &[Mat::zeros((1, 1))]);
        assert!((p[[0, 0]] - 2.0 * (1.0 - 0.1 * 1e-5)).abs() < 1e-15);
    }

    #[test]
    fn clipping() {
        let mut g = vec![array![[6.0, 8.0]]];
        assert_eq!(clip_global_norm(&mut g, 5.0), 10.0);
        assert!((global_norm(&g) - 5.0).abs() < 1e-12);
        let mut small = vec![array![[3.0], [4.0]]];
        clip_global_norm(&mut small, 5.0);
        assert_eq!(small[0], array![[3.0], [4.0]]);
    }

    #[test]
    fn schedule() {
        assert!((lr_schedule(0.0, 1e-4, 15.0) - 1e-4).abs() < 1e-18);
        assert!((lr_schedule(7.5, 1e-4, 15.0) - 5e-5).abs() < 1e-15);
        assert!((lr_schedule(15.0, 1e-4, 15.0) - 1e-4).abs() < 1e-18);
        assert!(lr_schedule(14.999, 1e-4, 15.0) < 1e-9);
    }
}
