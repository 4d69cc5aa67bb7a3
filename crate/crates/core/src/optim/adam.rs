use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment estimates for one parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One bias-corrected Adam update over parameters split across slices.
    ///
    /// `params` and `grads` are walked in lockstep; their concatenated lengths
    /// must equal the state length.
    pub fn step(&mut self, config: &AdamConfig, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        let congruent = params.len() == grads.len()
            && params.iter().zip(grads).all(|(p, g)| p.len() == g.len())
            && params.iter().map(|p| p.len()).sum::<usize>() == self.m.len();
        if !congruent {
            return Err(Error::Shape(
                "parameters, gradients and Adam state are not congruent".into(),
            ));
        }
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - config.beta1.powi(t);
        let c2 = 1.0 - config.beta2.powi(t);
        let mut offset = 0;
        for (p, g) in params.iter_mut().zip(grads) {
            let m = &mut self.m[offset..offset + p.len()];
            let v = &mut self.v[offset..offset + p.len()];
            for (((theta, &gi), mi), vi) in p.iter_mut().zip(g.iter()).zip(m).zip(v) {
                *mi = config.beta1 * *mi + (1.0 - config.beta1) * gi;
                *vi = config.beta2 * *vi + (1.0 - config.beta2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *theta -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
            }
            offset += p.len();
        }
        Ok(())
    }
}

/// Single-slice convenience wrapper around [`AdamState::step`].
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, config: &AdamConfig) -> Result<()> {
    state.step(config, &mut [params], &[grads])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_first_step_is_a_no_op() {
        let mut p = vec![0.5, -2.0];
        let mut s = AdamState::new(2);
        adam_step(&mut p, &[0.0, 0.0], &mut s, &AdamConfig::default()).unwrap();
        assert_eq!(p, vec![0.5, -2.0]);
        assert_eq!(s.steps(), 1);
    }

    #[test]
    fn first_step_is_learning_rate_sized() {
        let cfg = AdamConfig {
            learning_rate: 0.1,
            ..AdamConfig::default()
        };
        let mut p = vec![0.0];
        let mut s = AdamState::new(1);
        adam_step(&mut p, &[1.0], &mut s, &cfg).unwrap();
        assert!((p[0] + 0.1).abs() < 1e-8, "{}", p[0]);
    }

    /// Scalar Adam written out independently.
    fn reference_adam(theta0: f64, lr: f64, steps: usize, grad: impl Fn(f64) -> f64) -> f64 {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        let (mut m, mut v, mut th) = (0.0, 0.0, theta0);
        for t in 1..=steps {
            let g = grad(th);
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            th -= lr * (m / (1.0 - b1.powi(t as i32))) / ((v / (1.0 - b2.powi(t as i32))).sqrt() + eps);
        }
        th
    }

    #[test]
    fn quadratic_descends_like_reference() {
        let cfg = AdamConfig {
            learning_rate: 0.01,
            ..AdamConfig::default()
        };
        let mut p = vec![1.0];
        let mut s = AdamState::new(1);
        let mut prev = 1.0f64;
        for _ in 0..100 {
            let g = [2.0 * p[0]];
            adam_step(&mut p, &g, &mut s, &cfg).unwrap();
            assert!(p[0].abs() < prev);
            prev = p[0].abs();
        }
        let expect = reference_adam(1.0, 0.01, 100, |t| 2.0 * t);
        assert_eq!(p[0], expect);
        assert!(p[0].abs() < 0.5);
    }

    #[test]
    fn split_slices_equal_one_slice() {
        let cfg = AdamConfig::default();
        let grads = [0.3, -0.7, 1.1, 0.05];
        let mut flat = vec![1.0, 2.0, 3.0, 4.0];
        let mut s1 = AdamState::new(4);
        adam_step(&mut flat, &grads, &mut s1, &cfg).unwrap();
        let (mut a, mut b) = (vec![1.0, 2.0], vec![3.0, 4.0]);
        let mut s2 = AdamState::new(4);
        s2.step(&cfg, &mut [&mut a, &mut b], &[&grads[..2], &grads[2..]])
            .unwrap();
        assert_eq!([a, b].concat(), flat);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut s = AdamState::new(3);
        let mut p = vec![0.0; 2];
        assert!(matches!(
            adam_step(&mut p, &[0.0, 0.0], &mut s, &AdamConfig::default()),
            Err(Error::Shape(_))
        ));
        let mut s = AdamState::new(2);
        assert!(adam_step(&mut p, &[0.0], &mut s, &AdamConfig::default()).is_err());
    }
}
