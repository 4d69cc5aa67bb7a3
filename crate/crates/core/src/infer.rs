//! Test-time use of a trained model.
//!
//! Fresh latent states are fit against a frozen decoder and frozen `ω`,
//! optimising the states through the descriptor recurrence. The fitted
//! descriptors then drive the decoder to displace each frame toward the next,
//! and correspondences are read off by nearest-neighbour matching.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::apply_flow;
use crate::geometry::{chamfer_with_index, extract_correspondence_with_index, CorrespondenceMap, PointCloud};
use crate::optim::{sequence_loss_prepared, AdamConfig, AdamState, PreparedSequence, TrainedModel};
use crate::tcd::{compute_descriptors, init_state_bank, StateBank};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Also predict the frame after the last three when tracking.
    pub forecast: bool,
    /// When set, must equal the model's latent dimension.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub latent_dim: Option<usize>,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            iterations: 1000,
            learning_rate: 1e-3,
            seed: 0,
            forecast: false,
            latent_dim: None,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// States fit by [`fit_latents`] and the loss trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentFit {
    pub bank: StateBank,
    /// Loss before the first update.
    pub initial_loss: f64,
    /// Loss after the last update.
    pub final_loss: f64,
    /// Loss before each update.
    pub history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingResult {
    /// `M_i` displaced toward `M_{i+1}`, one per consecutive pair.
    pub transformed: Vec<PointCloud>,
    pub maps: Vec<CorrespondenceMap>,
    /// `chamfer(transformed_i, M_{i+1})`.
    pub chamfer: Vec<f64>,
    pub bank: StateBank,
}

/// Fits fresh states to `frames` with the decoder and `ω` frozen.
pub fn fit_latents(model: &TrainedModel, frames: &[PointCloud], config: &InferenceConfig) -> Result<LatentFit> {
    config.validate()?;
    if let Some(dim) = config.latent_dim {
        if dim != model.decoder.dim() {
            return Err(Error::ConfigMismatch(format!(
                "config latent_dim {dim} but the checkpoint decoder uses {}",
                model.decoder.dim()
            )));
        }
    }
    if frames.len() < 2 {
        return Err(Error::SequenceTooShort { frames: frames.len() });
    }
    let seq = PreparedSequence::new(frames.to_vec())?;
    let mut bank = init_state_bank(frames.len(), model.decoder.dim(), model.omega, config.seed)?;
    let adam = AdamConfig {
        learning_rate: config.learning_rate,
        ..model.config.adam()
    };
    let mut state = AdamState::new(frames.len() * bank.dim());
    let mut history = Vec::with_capacity(config.iterations);
    for _ in 0..config.iterations {
        let sl = sequence_loss_prepared(&model.decoder, &bank, &seq, model.mode, false)?;
        history.push(sl.loss);
        let grads: Vec<&[f64]> = sl.states.states.iter().map(Vec::as_slice).collect();
        state.step(&adam, &mut bank.state_slices_mut(), &grads)?;
    }
    let final_loss = sequence_loss_prepared(&model.decoder, &bank, &seq, model.mode, false)?.loss;
    Ok(LatentFit {
        bank,
        initial_loss: history[0],
        final_loss,
        history,
    })
}

/// Tracks with an already fitted (or trained) state bank.
pub fn track_with_bank(model: &TrainedModel, bank: &StateBank, frames: &[PointCloud]) -> Result<TrackingResult> {
    if frames.len() < 2 {
        return Err(Error::SequenceTooShort { frames: frames.len() });
    }
    if bank.frames() != frames.len() || bank.dim() != model.decoder.dim() {
        return Err(Error::Shape(format!(
            "state bank ({} frames, dim {}) does not fit {} frames with decoder dim {}",
            bank.frames(),
            bank.dim(),
            frames.len(),
            model.decoder.dim()
        )));
    }
    let seq = PreparedSequence::new(frames.to_vec())?;
    let tcds = compute_descriptors(bank, model.mode);
    let mut transformed = Vec::with_capacity(frames.len() - 1);
    let mut maps = Vec::with_capacity(frames.len() - 1);
    let mut chamfer = Vec::with_capacity(frames.len() - 1);
    for i in 0..frames.len() - 1 {
        let (field, _) = model.decoder.predict(&frames[i], &tcds.descriptors[i])?;
        let moved = apply_flow(&frames[i], &field)?;
        let target = &frames[i + 1];
        let mut map = extract_correspondence_with_index(&moved, target, seq.target_index(i));
        map.source_frame = frames[i].frame_index();
        chamfer.push(chamfer_with_index(&moved, target, seq.target_index(i)).value);
        maps.push(map);
        transformed.push(moved);
    }
    Ok(TrackingResult {
        transformed,
        maps,
        chamfer,
        bank: bank.clone(),
    })
}

/// Fits latents, then displaces every frame toward the next and matches.
pub fn track(model: &TrainedModel, frames: &[PointCloud], config: &InferenceConfig) -> Result<TrackingResult> {
    let fit = fit_latents(model, frames, config)?;
    track_with_bank(model, &fit.bank, frames)
}

/// Predicts the frame after three observed frames.
///
/// States are fit on the two observed transitions. The last observed state
/// has no outgoing transition to fit, so it is set to the previous
/// descriptor, which makes the recurrence carry that descriptor forward
/// unchanged. The unseen frame's state copies the last one. The prediction
/// is the last observed frame displaced by the decoder under its own
/// descriptor.
pub fn forecast(model: &TrainedModel, observed: &[PointCloud], config: &InferenceConfig) -> Result<PointCloud> {
    if observed.len() != 3 {
        return Err(Error::Protocol(format!(
            "forecasting needs exactly 3 observed frames, got {}",
            observed.len()
        )));
    }
    let fit = fit_latents(model, observed, config)?;
    let fitted = compute_descriptors(&fit.bank, model.mode);
    let mut states = fit.bank.states;
    states[2] = fitted.descriptors[1].clone();
    states.push(states[2].clone());
    let extended = StateBank::new(states, model.omega)?;
    let tcds = compute_descriptors(&extended, model.mode);
    let last = &observed[2];
    let (field, _) = model.decoder.predict(last, &tcds.descriptors[2])?;
    apply_flow(last, &field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffnet::{DenseLayer, Mlp};
    use crate::flow::FlowDecoder;
    use crate::optim::TrainConfig;
    use crate::tcd::DescriptorMode;

    fn model_with(decoder: FlowDecoder) -> TrainedModel {
        let config = TrainConfig {
            latent_dim: decoder.dim(),
            hidden: decoder.hidden(),
            ..TrainConfig::default()
        };
        TrainedModel {
            decoder,
            omega: 0.5,
            mode: DescriptorMode::Temporal,
            banks: vec![],
            config,
            iterations_done: 0,
        }
    }

    fn zero_model(dim: usize) -> TrainedModel {
        let net = Mlp::from_layers(vec![DenseLayer::zeros(3 + dim, 4), DenseLayer::zeros(4, 3)]).unwrap();
        model_with(FlowDecoder::from_net(net, dim).unwrap())
    }

    fn cloud(seed: u64, n: usize) -> PointCloud {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        PointCloud::new(
            (0..n)
                .map(|_| {
                    [
                        rng.random_range(-0.5..0.5),
                        rng.random_range(-0.5..0.5),
                        rng.random_range(-0.5..0.5),
                    ]
                })
                .collect(),
            0,
        )
        .unwrap()
    }

    fn quick() -> InferenceConfig {
        InferenceConfig {
            iterations: 20,
            learning_rate: 1e-2,
            ..InferenceConfig::default()
        }
    }

    #[test]
    fn decoder_and_omega_stay_frozen() {
        let model = model_with(FlowDecoder::new(3, &[8], 1).unwrap());
        let before = model.clone();
        let frames = vec![cloud(1, 12), cloud(2, 12), cloud(3, 12)];
        let fit = fit_latents(&model, &frames, &quick()).unwrap();
        assert_eq!(model.decoder.net().params_flat(), before.decoder.net().params_flat());
        assert_eq!(model.omega.to_bits(), before.omega.to_bits());
        assert_eq!(fit.history.len(), 20);
        assert!(fit.final_loss < fit.initial_loss);
    }

    #[test]
    fn fitting_is_deterministic() {
        let model = model_with(FlowDecoder::new(3, &[8], 1).unwrap());
        let frames = vec![cloud(4, 10), cloud(5, 10)];
        let a = fit_latents(&model, &frames, &quick()).unwrap();
        let b = fit_latents(&model, &frames, &quick()).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            track(&model, &frames, &quick()).unwrap(),
            track(&model, &frames, &quick()).unwrap()
        );
    }

    #[test]
    fn too_few_frames() {
        let model = zero_model(2);
        assert!(matches!(
            fit_latents(&model, &[cloud(0, 4)], &quick()),
            Err(Error::SequenceTooShort { frames: 1 })
        ));
        let bad = InferenceConfig {
            iterations: 0,
            ..quick()
        };
        assert!(matches!(
            fit_latents(&model, &[cloud(0, 4), cloud(1, 4)], &bad),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn two_frames_give_one_pair() {
        let model = zero_model(2);
        let frames = vec![cloud(7, 9), cloud(8, 11).with_frame_index(1)];
        let r = track(&model, &frames, &quick()).unwrap();
        assert_eq!(r.transformed.len(), 1);
        assert_eq!(r.maps.len(), 1);
        assert_eq!(r.maps[0].len(), 9);
        assert!(r.maps[0].validate(11).is_ok());
        assert_eq!((r.maps[0].source_frame, r.maps[0].target_frame), (0, 1));
    }

    #[test]
    fn zero_flow_identical_frames_give_identity_maps() {
        let model = zero_model(2);
        let c = cloud(3, 30);
        let frames = vec![c.clone(), c.clone(), c];
        let r = track(&model, &frames, &quick()).unwrap();
        for m in &r.maps {
            assert_eq!(m.matches, (0..30).collect::<Vec<_>>());
        }
        assert!(r.chamfer.iter().all(|c| *c == 0.0));
    }

    #[test]
    fn zero_decoder_forecast_is_last_frame() {
        let model = zero_model(2);
        let frames = vec![cloud(1, 8), cloud(2, 8), cloud(3, 8)];
        let f = forecast(&model, &frames, &quick()).unwrap();
        assert_eq!(f.points(), frames[2].points());
        assert!(matches!(
            forecast(&model, &frames[..2], &quick()),
            Err(Error::Protocol(_))
        ));
    }

    #[test]
    fn forecast_carries_the_last_fitted_descriptor() {
        let model = model_with(FlowDecoder::new(3, &[8], 11).unwrap());
        let frames: Vec<PointCloud> = (0..3).map(|i| cloud(30 + i as u64, 12).with_frame_index(i)).collect();
        let cfg = quick();
        let predicted = forecast(&model, &frames, &cfg).unwrap();
        let fit = fit_latents(&model, &frames, &cfg).unwrap();
        let z = compute_descriptors(&fit.bank, model.mode).descriptors;
        let (field, _) = model.decoder.predict(&frames[2], &z[1]).unwrap();
        let want = apply_flow(&frames[2], &field).unwrap();
        for (a, b) in predicted.points().iter().zip(want.points()) {
            assert!(crate::geometry::distance(a, b) < 1e-12);
        }
    }

    #[test]
    fn latent_size_must_match_checkpoint() {
        let model = zero_model(4);
        let frames: Vec<PointCloud> = (0..2).map(|i| cloud(i, 5).with_frame_index(i as usize)).collect();
        let cfg = InferenceConfig {
            latent_dim: Some(5),
            ..quick()
        };
        assert!(matches!(
            fit_latents(&model, &frames, &cfg),
            Err(Error::ConfigMismatch(_))
        ));
        let ok = InferenceConfig {
            latent_dim: Some(4),
            ..quick()
        };
        fit_latents(&model, &frames, &ok).unwrap();
    }
}
