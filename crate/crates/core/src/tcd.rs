//! Per-frame latent states and the temporal descriptor recurrence.
//!
//! `z_1 = s_1`, `z_i = (1 − ω) z_{i−1} + ω s_i` for `i > 1`, with a single
//! trainable scalar `ω` shared by all frames of a model.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How descriptors are derived from states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DescriptorMode {
    /// The exponential recurrence over previous frames.
    #[default]
    Temporal,
    /// `z_i = s_i`; `ω` is unused. Used for ablations.
    Independent,
}

/// Learnable latent states for one sequence plus the temporal weight.
#[derive(Debug, Clone, PartialEq)]
pub struct StateBank {
    pub states: Vec<Vec<f64>>,
    pub omega: f64,
    dim: usize,
}

/// The descriptors `z_1..z_T` of one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct TcdSequence {
    pub descriptors: Vec<Vec<f64>>,
}

/// Adjoints of [`compute_tcds`].
#[derive(Debug, Clone, PartialEq)]
pub struct StateGradient {
    pub states: Vec<Vec<f64>>,
    pub omega: f64,
}

impl StateGradient {
    pub fn zeros(frames: usize, dim: usize) -> Self {
        StateGradient {
            states: vec![vec![0.0; dim]; frames],
            omega: 0.0,
        }
    }
}

/// Draws every state component i.i.d. from N(0, 1).
pub fn init_state_bank(frames: usize, dim: usize, omega_init: f64, seed: u64) -> Result<StateBank> {
    if frames < 2 {
        return Err(Error::SequenceTooShort { frames });
    }
    if dim == 0 {
        return Err(Error::Config("latent dimension must be positive".into()));
    }
    if !omega_init.is_finite() {
        return Err(Error::Config("temporal weight must be finite".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let states = (0..frames)
        .map(|_| (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    Ok(StateBank {
        states,
        omega: omega_init,
        dim,
    })
}

impl StateBank {
    pub fn new(states: Vec<Vec<f64>>, omega: f64) -> Result<Self> {
        if states.len() < 2 {
            return Err(Error::SequenceTooShort { frames: states.len() });
        }
        let dim = states[0].len();
        if dim == 0 || states.iter().any(|s| s.len() != dim) {
            return Err(Error::Shape("all states must share one positive dimension".into()));
        }
        if !omega.is_finite() || states.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidCoordinate("non-finite latent state".into()));
        }
        Ok(StateBank { states, omega, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frames(&self) -> usize {
        self.states.len()
    }

    /// All state values, frame-major.
    pub fn states_flat(&self) -> Vec<f64> {
        self.states.concat()
    }

    pub fn set_states_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.frames() * self.dim {
            return Err(Error::Shape(format!(
                "expected {} state values, got {}",
                self.frames() * self.dim,
                flat.len()
            )));
        }
        for (s, chunk) in self.states.iter_mut().zip(flat.chunks_exact(self.dim)) {
            s.copy_from_slice(chunk);
        }
        Ok(())
    }

    pub fn state_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.states.iter_mut().map(Vec::as_mut_slice).collect()
    }
}

/// Runs the recurrence forward.
pub fn compute_tcds(bank: &StateBank) -> TcdSequence {
    let w = bank.omega;
    let mut descriptors: Vec<Vec<f64>> = Vec::with_capacity(bank.frames());
    for (i, s) in bank.states.iter().enumerate() {
        let z = if i == 0 {
            s.clone()
        } else {
            let prev = &descriptors[i - 1];
            prev.iter().zip(s).map(|(zp, si)| (1.0 - w) * zp + w * si).collect()
        };
        descriptors.push(z);
    }
    TcdSequence { descriptors }
}

/// Descriptors under the chosen mode.
pub fn compute_descriptors(bank: &StateBank, mode: DescriptorMode) -> TcdSequence {
    match mode {
        DescriptorMode::Temporal => compute_tcds(bank),
        DescriptorMode::Independent => TcdSequence {
            descriptors: bank.states.clone(),
        },
    }
}

/// Reverse pass of [`compute_tcds`]: maps `dL/dZ` to `dL/dS` and `dL/dω`.
pub fn backprop_tcds(bank: &StateBank, d_z: &[Vec<f64>]) -> Result<StateGradient> {
    check_adjoint_shape(bank, d_z)?;
    let w = bank.omega;
    let t = bank.frames();
    let tcds = compute_tcds(bank);
    let mut states = vec![Vec::new(); t];
    let mut omega = 0.0;
    // g holds the accumulated adjoint of z_i.
    let mut g = vec![0.0; bank.dim];
    for i in (0..t).rev() {
        for (gk, dk) in g.iter_mut().zip(&d_z[i]) {
            *gk += dk;
        }
        if i == 0 {
            states[0] = g.clone();
        } else {
            states[i] = g.iter().map(|gk| w * gk).collect();
            let prev = &tcds.descriptors[i - 1];
            omega += g
                .iter()
                .zip(&bank.states[i])
                .zip(prev)
                .map(|((gk, sk), zk)| gk * (sk - zk))
                .sum::<f64>();
            g.iter_mut().for_each(|gk| *gk *= 1.0 - w);
        }
    }
    Ok(StateGradient { states, omega })
}

/// Reverse pass under the chosen mode.
pub fn backprop_descriptors(bank: &StateBank, d_z: &[Vec<f64>], mode: DescriptorMode) -> Result<StateGradient> {
    match mode {
        DescriptorMode::Temporal => backprop_tcds(bank, d_z),
        DescriptorMode::Independent => {
            check_adjoint_shape(bank, d_z)?;
            Ok(StateGradient {
                states: d_z.to_vec(),
                omega: 0.0,
            })
        }
    }
}

fn check_adjoint_shape(bank: &StateBank, d_z: &[Vec<f64>]) -> Result<()> {
    if d_z.len() != bank.frames() || d_z.iter().any(|d| d.len() != bank.dim) {
        return Err(Error::Shape(format!(
            "descriptor adjoint must be {} vectors of length {}",
            bank.frames(),
            bank.dim
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn linear_functional(bank: &StateBank, c: &[Vec<f64>]) -> f64 {
        compute_tcds(bank)
            .descriptors
            .iter()
            .zip(c)
            .map(|(z, ci)| z.iter().zip(ci).map(|(a, b)| a * b).sum::<f64>())
            .sum()
    }

    #[test]
    fn init_shapes_and_determinism() {
        let bank = init_state_bank(4, 128, 0.5, 3).unwrap();
        assert_eq!(bank.frames(), 4);
        assert!(bank.states.iter().all(|s| s.len() == 128));
        assert_eq!(bank, init_state_bank(4, 128, 0.5, 3).unwrap());
        assert_ne!(bank, init_state_bank(4, 128, 0.5, 4).unwrap());
        assert!(matches!(
            init_state_bank(1, 8, 0.5, 0),
            Err(Error::SequenceTooShort { frames: 1 })
        ));
    }

    #[test]
    fn init_sample_mean_is_near_zero() {
        let (t, d) = (10, 1000);
        let bank = init_state_bank(t, d, 0.5, 17).unwrap();
        let mean = bank.states_flat().iter().sum::<f64>() / (t * d) as f64;
        assert!(mean.abs() < 3.0 / ((t * d) as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn recurrence_identities() {
        let mut bank = init_state_bank(5, 3, 0.37, 1).unwrap();
        let z = compute_tcds(&bank);
        assert_eq!(z.descriptors[0], bank.states[0]);
        for i in 1..5 {
            for k in 0..3 {
                let expect = (1.0 - 0.37) * z.descriptors[i - 1][k] + 0.37 * bank.states[i][k];
                assert_eq!(z.descriptors[i][k], expect);
            }
        }
        bank.omega = 0.0;
        assert!(compute_tcds(&bank).descriptors.iter().all(|z| *z == bank.states[0]));
        bank.omega = 1.0;
        assert_eq!(compute_tcds(&bank).descriptors, bank.states);
    }

    #[test]
    fn zero_adjoint_gives_zero_gradient() {
        let bank = init_state_bank(4, 3, 0.5, 2).unwrap();
        let g = backprop_tcds(&bank, &vec![vec![0.0; 3]; 4]).unwrap();
        assert_eq!(g, StateGradient::zeros(4, 3));
    }

    #[test]
    fn two_frame_hand_derivative() {
        let (a, b, w) = (0.7, -1.3, 0.25);
        let bank = StateBank::new(vec![vec![a], vec![b]], w).unwrap();
        let g = backprop_tcds(&bank, &[vec![0.0], vec![1.0]]).unwrap();
        assert_eq!(g.states, vec![vec![1.0 - w], vec![w]]);
        assert_eq!(g.omega, b - a);
    }

    #[test]
    fn adjoint_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut bank = init_state_bank(5, 3, 0.0, 6).unwrap();
        bank.omega = rng.random_range(0.1..0.9);
        let c: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let g = backprop_tcds(&bank, &c).unwrap();
        let h = 1e-6;
        for i in 0..5 {
            for k in 0..3 {
                let mut p = bank.clone();
                p.states[i][k] += h;
                let mut m = bank.clone();
                m.states[i][k] -= h;
                let fd = (linear_functional(&p, &c) - linear_functional(&m, &c)) / (2.0 * h);
                let rel = (fd - g.states[i][k]).abs() / g.states[i][k].abs().max(1e-12);
                assert!(rel < 1e-7, "s[{i}][{k}] {fd} vs {}", g.states[i][k]);
            }
        }
        let mut p = bank.clone();
        p.omega += h;
        let mut m = bank.clone();
        m.omega -= h;
        let fd = (linear_functional(&p, &c) - linear_functional(&m, &c)) / (2.0 * h);
        assert!((fd - g.omega).abs() / g.omega.abs() < 1e-7);
    }

    #[test]
    fn independent_mode_passes_states_through() {
        let bank = init_state_bank(3, 2, 0.5, 0).unwrap();
        assert_eq!(
            compute_descriptors(&bank, DescriptorMode::Independent).descriptors,
            bank.states
        );
        let dz = vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]];
        let g = backprop_descriptors(&bank, &dz, DescriptorMode::Independent).unwrap();
        assert_eq!(g.states, dz);
        assert_eq!(g.omega, 0.0);
    }

    #[test]
    fn adjoint_shape_is_checked() {
        let bank = init_state_bank(3, 2, 0.5, 0).unwrap();
        assert!(matches!(
            backprop_tcds(&bank, &vec![vec![0.0; 2]; 2]),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            backprop_tcds(&bank, &vec![vec![0.0; 3]; 3]),
            Err(Error::Shape(_))
        ));
    }

    proptest! {
        #[test]
        fn recurrence_is_linear_in_states(
            alpha in -3.0f64..3.0,
            omega in -1.0f64..2.0,
            seed in 0u64..1000,
        ) {
            let bank = init_state_bank(4, 3, omega, seed).unwrap();
            let mut scaled = bank.clone();
            scaled.states.iter_mut().flatten().for_each(|v| *v *= alpha);
            let z = compute_tcds(&bank);
            let zs = compute_tcds(&scaled);
            for (a, b) in z.descriptors.iter().flatten().zip(zs.descriptors.iter().flatten()) {
                prop_assert!((alpha * a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }

        #[test]
        fn convex_weights_keep_descriptors_bounded(
            omega in 0.0f64..=1.0,
            c in 0.1f64..5.0,
            seed in 0u64..1000,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let states: Vec<Vec<f64>> = (0..6).map(|_| (0..4).map(|_| rng.random_range(-c..=c)).collect()).collect();
            let bank = StateBank::new(states, omega).unwrap();
            for z in compute_tcds(&bank).descriptors.iter().flatten() {
                prop_assert!(z.abs() <= c * (1.0 + 1e-12));
            }
        }
    }
}
