use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::loss::{sequence_loss_prepared, PreparedSequence};
use crate::error::{Error, Result};
use crate::flow::{FlowDecoder, PAPER_HIDDEN};
use crate::geometry::PointCloud;
use crate::tcd::{init_state_bank, DescriptorMode, StateBank};

/// Training hyperparameters. Defaults follow the published setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Sequences per step; clamped to the dataset size.
    pub batch_size: usize,
    pub iterations: usize,
    pub latent_dim: usize,
    pub points_per_frame: usize,
    /// Frames per training window.
    pub window: usize,
    pub seed: u64,
    pub omega_init: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Decoder hidden widths.
    pub hidden: Vec<usize>,
    pub mode: DescriptorMode,
    /// Visit sequences in a seeded random order instead of dataset order.
    pub shuffle: bool,
    /// Write a checkpoint every this many iterations (0: only at the end).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 32,
            iterations: 1000,
            latent_dim: 128,
            points_per_frame: 2000,
            window: 4,
            seed: 0,
            omega_init: 0.5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            hidden: PAPER_HIDDEN.to_vec(),
            mode: DescriptorMode::Temporal,
            shuffle: false,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [("learning_rate", self.learning_rate), ("epsilon", self.epsilon)];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {v}")));
            }
        }
        let counts = [
            ("batch_size", self.batch_size),
            ("iterations", self.iterations),
            ("latent_dim", self.latent_dim),
            ("points_per_frame", self.points_per_frame),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.window < 2 {
            return Err(Error::Config("window must hold at least 2 frames".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        if !self.omega_init.is_finite() {
            return Err(Error::Config("omega_init must be finite".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

/// Decoder, temporal weight and the per-sequence states after training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub decoder: FlowDecoder,
    pub omega: f64,
    pub mode: DescriptorMode,
    pub banks: Vec<StateBank>,
    pub config: TrainConfig,
    /// Completed training iterations, carried across resumes.
    pub iterations_done: u64,
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationLog {
    /// 1-based, continuing across resumes.
    pub iteration: u64,
    /// Mean over the batch of the summed pairwise Chamfer loss, before the update.
    pub loss: f64,
    /// Temporal weight after the update.
    pub omega: f64,
}

/// Mixes a stream id into a seed (splitmix64 finaliser).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stateful joint optimiser over decoder parameters, states and `ω`.
#[derive(Debug, Clone)]
pub struct Trainer {
    config: TrainConfig,
    sequences: Vec<PreparedSequence>,
    decoder: FlowDecoder,
    omega: f64,
    banks: Vec<StateBank>,
    decoder_adam: AdamState,
    omega_adam: AdamState,
    bank_adam: Vec<AdamState>,
    order: Vec<usize>,
    batch: usize,
    iteration: u64,
}

impl Trainer {
    pub fn new(dataset: Vec<Vec<PointCloud>>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let decoder = FlowDecoder::new(config.latent_dim, &config.hidden, config.seed)?;
        let banks = dataset
            .iter()
            .enumerate()
            .map(|(j, frames)| {
                init_state_bank(
                    frames.len(),
                    config.latent_dim,
                    config.omega_init,
                    derive_seed(config.seed, j as u64 + 1),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let omega = config.omega_init;
        Self::assemble(dataset, config, decoder, omega, banks, 0)
    }

    /// Continues from a trained model; iteration numbering carries over.
    ///
    /// Adam moments are not persisted and restart from zero.
    pub fn resume(dataset: Vec<Vec<PointCloud>>, config: TrainConfig, model: TrainedModel) -> Result<Self> {
        config.validate()?;
        if model.decoder.dim() != config.latent_dim || model.decoder.hidden() != config.hidden {
            return Err(Error::ConfigMismatch(format!(
                "checkpoint decoder (dim {}, hidden {:?}) does not match config (dim {}, hidden {:?})",
                model.decoder.dim(),
                model.decoder.hidden(),
                config.latent_dim,
                config.hidden
            )));
        }
        if model.banks.len() != dataset.len() || model.banks.iter().zip(&dataset).any(|(b, s)| b.frames() != s.len()) {
            return Err(Error::ConfigMismatch(
                "checkpoint state banks do not match the dataset's sequences".into(),
            ));
        }
        Self::assemble(
            dataset,
            config,
            model.decoder,
            model.omega,
            model.banks,
            model.iterations_done,
        )
    }

    fn assemble(
        dataset: Vec<Vec<PointCloud>>,
        config: TrainConfig,
        decoder: FlowDecoder,
        omega: f64,
        banks: Vec<StateBank>,
        iteration: u64,
    ) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let sequences = dataset
            .into_iter()
            .map(PreparedSequence::new)
            .collect::<Result<Vec<_>>>()?;
        let n = sequences.len();
        let batch = config.batch_size.min(n);
        if batch < config.batch_size {
            log::warn!(
                "batch size {} exceeds dataset size {n}; clamped to {n}",
                config.batch_size
            );
        }
        let mut order: Vec<usize> = (0..n).collect();
        if config.shuffle {
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 0)));
        }
        Ok(Trainer {
            decoder_adam: AdamState::new(decoder.net().num_params()),
            omega_adam: AdamState::new(1),
            bank_adam: banks.iter().map(|b| AdamState::new(b.frames() * b.dim())).collect(),
            config,
            sequences,
            decoder,
            omega,
            banks,
            order,
            batch,
            iteration,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn batch_size(&self) -> usize {
        self.batch
    }

    pub fn decoder(&self) -> &FlowDecoder {
        &self.decoder
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn banks(&self) -> &[StateBank] {
        &self.banks
    }

    pub fn banks_mut(&mut self) -> &mut [StateBank] {
        &mut self.banks
    }

    /// Sequence indices drawn at the next step.
    pub fn next_batch(&self) -> Vec<usize> {
        let n = self.order.len();
        let start = (self.iteration as usize % n) * self.batch;
        (0..self.batch).map(|j| self.order[(start + j) % n]).collect()
    }

    /// One Adam step on a round-robin batch of sequences.
    pub fn step(&mut self) -> Result<IterationLog> {
        let batch = self.next_batch();
        let scale = 1.0 / batch.len() as f64;
        let mode = self.config.mode;
        let mut decoder_grad = self.decoder.net().zero_gradients();
        let mut omega_grad = 0.0;
        let mut loss = 0.0;
        let mut state_grads = Vec::with_capacity(batch.len());

        for &j in &batch {
            let bank = &mut self.banks[j];
            bank.omega = self.omega;
            let sl = sequence_loss_prepared(&self.decoder, bank, &self.sequences[j], mode, true)?;
            loss += sl.loss;
            decoder_grad.add_assign(sl.decoder.as_ref().expect("decoder gradients requested"))?;
            omega_grad += sl.states.omega;
            state_grads.push(sl.states.states);
        }
        loss *= scale;
        decoder_grad.scale(scale);
        omega_grad *= scale;

        let adam = self.config.adam();
        {
            let grads = decoder_grad.slices();
            let mut params = self.decoder.net_mut().param_slices_mut();
            self.decoder_adam.step(&adam, &mut params, &grads)?;
        }
        if mode == DescriptorMode::Temporal {
            let mut w = [self.omega];
            self.omega_adam.step(&adam, &mut [&mut w], &[&[omega_grad]])?;
            self.omega = w[0];
        }
        for (&j, grads) in batch.iter().zip(state_grads) {
            let scaled: Vec<Vec<f64>> = grads
                .into_iter()
                .map(|g| g.into_iter().map(|v| v * scale).collect())
                .collect();
            let grad_slices: Vec<&[f64]> = scaled.iter().map(Vec::as_slice).collect();
            let bank = &mut self.banks[j];
            let mut params = bank.state_slices_mut();
            self.bank_adam[j].step(&adam, &mut params, &grad_slices)?;
        }
        for b in &mut self.banks {
            b.omega = self.omega;
        }
        if !self.omega.is_finite() || !loss.is_finite() {
            return Err(Error::Config(format!(
                "training diverged at iteration {} (loss {loss}, omega {})",
                self.iteration + 1,
                self.omega
            )));
        }

        self.iteration += 1;
        Ok(IterationLog {
            iteration: self.iteration,
            loss,
            omega: self.omega,
        })
    }

    pub fn model(&self) -> TrainedModel {
        TrainedModel {
            decoder: self.decoder.clone(),
            omega: self.omega,
            mode: self.config.mode,
            banks: self.banks.clone(),
            config: self.config.clone(),
            iterations_done: self.iteration,
        }
    }

    pub fn into_model(self) -> TrainedModel {
        TrainedModel {
            decoder: self.decoder,
            omega: self.omega,
            mode: self.config.mode,
            banks: self.banks,
            config: self.config,
            iterations_done: self.iteration,
        }
    }
}

/// Runs `config.iterations` steps from a fresh initialisation.
pub fn train(dataset: &[Vec<PointCloud>], config: &TrainConfig) -> Result<(TrainedModel, Vec<IterationLog>)> {
    let mut trainer = Trainer::new(dataset.to_vec(), config.clone())?;
    let mut log = Vec::with_capacity(config.iterations);
    for _ in 0..config.iterations {
        log.push(trainer.step()?);
    }
    Ok((trainer.into_model(), log))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            batch_size: 2,
            iterations: 5,
            latent_dim: 3,
            points_per_frame: 16,
            hidden: vec![8],
            ..TrainConfig::default()
        }
    }

    fn line(n: usize, offset: f64) -> PointCloud {
        PointCloud::new((0..n).map(|k| [k as f64 * 0.1 + offset, 0.0, 0.0]).collect(), 0).unwrap()
    }

    #[test]
    fn defaults_echo_published_values() {
        let c = TrainConfig::default();
        assert_eq!(c.learning_rate, 1e-3);
        assert_eq!(c.batch_size, 32);
        assert_eq!(c.iterations, 1000);
        assert_eq!(c.latent_dim, 128);
        assert_eq!(c.points_per_frame, 2000);
        assert_eq!(c.hidden, vec![256, 512, 1024, 2048, 512, 128]);
        assert_eq!((c.beta1, c.beta2, c.epsilon), (0.9, 0.999, 1e-8));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let data = vec![vec![line(4, 0.0), line(4, 0.1)]];
        let cfg = TrainConfig {
            iterations: 0,
            ..tiny_config()
        };
        assert!(matches!(train(&data, &cfg), Err(Error::Config(_))));
        assert!(matches!(train(&[], &tiny_config()), Err(Error::EmptyDataset)));
        assert!(matches!(
            train(&[vec![line(4, 0.0)]], &tiny_config()),
            Err(Error::SequenceTooShort { .. })
        ));
    }

    #[test]
    fn training_is_deterministic() {
        let data = vec![
            vec![line(6, 0.0), line(6, 0.05), line(6, 0.1)],
            vec![line(6, 0.2), line(6, 0.1), line(6, 0.0)],
        ];
        let (a, la) = train(&data, &tiny_config()).unwrap();
        let (b, lb) = train(&data, &tiny_config()).unwrap();
        assert_eq!(a, b);
        assert_eq!(la, lb);
        assert_eq!(la.len(), 5);
        assert_eq!(la[4].iteration, 5);
    }

    #[test]
    fn identical_sequences_with_identical_states_get_identical_updates() {
        let seq = vec![line(5, 0.0), line(5, 0.07), line(5, 0.14)];
        let mut trainer = Trainer::new(vec![seq.clone(), seq], tiny_config()).unwrap();
        let first = trainer.banks()[0].clone();
        trainer.banks_mut()[1] = first.clone();
        trainer.step().unwrap();
        let (b0, b1) = (&trainer.banks()[0], &trainer.banks()[1]);
        assert_eq!(b0, b1);
        assert_ne!(b0.states, first.states);
    }

    #[test]
    fn batch_is_clamped_and_round_robin() {
        let data: Vec<_> = (0..3)
            .map(|j| vec![line(4, j as f64), line(4, j as f64 + 0.1)])
            .collect();
        let mut trainer = Trainer::new(
            data,
            TrainConfig {
                batch_size: 2,
                ..tiny_config()
            },
        )
        .unwrap();
        assert_eq!(trainer.next_batch(), vec![0, 1]);
        trainer.step().unwrap();
        assert_eq!(trainer.next_batch(), vec![2, 0]);
        trainer.step().unwrap();
        assert_eq!(trainer.next_batch(), vec![1, 2]);

        let data: Vec<_> = (0..2)
            .map(|j| vec![line(4, j as f64), line(4, j as f64 + 0.1)])
            .collect();
        let trainer = Trainer::new(data, tiny_config()).unwrap();
        assert_eq!(trainer.batch_size(), 2);
        let data: Vec<_> = (0..1)
            .map(|j| vec![line(4, j as f64), line(4, j as f64 + 0.1)])
            .collect();
        let trainer = Trainer::new(data, tiny_config()).unwrap();
        assert_eq!(trainer.batch_size(), 1);
    }

    #[test]
    fn independent_mode_leaves_omega_alone() {
        let data = vec![vec![line(6, 0.0), line(6, 0.05), line(6, 0.1)]];
        let cfg = TrainConfig {
            mode: DescriptorMode::Independent,
            ..tiny_config()
        };
        let (model, _) = train(&data, &cfg).unwrap();
        assert_eq!(model.omega, 0.5);
        assert_eq!(model.mode, DescriptorMode::Independent);
    }

    #[test]
    fn resume_continues_numbering() {
        let data = vec![vec![line(6, 0.0), line(6, 0.05), line(6, 0.1)]];
        let (model, _) = train(&data, &tiny_config()).unwrap();
        let mut t = Trainer::resume(data.clone(), tiny_config(), model.clone()).unwrap();
        assert_eq!(t.step().unwrap().iteration, 6);
        let other = TrainConfig {
            latent_dim: 4,
            ..tiny_config()
        };
        assert!(matches!(
            Trainer::resume(data, other, model),
            Err(Error::ConfigMismatch(_))
        ));
    }
}
