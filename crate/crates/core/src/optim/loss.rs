use crate::diffnet::GradientBuffer;
use crate::error::{Error, Result};
use crate::flow::{apply_flow, FlowDecoder};
use crate::geometry::{build_index, chamfer_with_index, NeighborIndex, PointCloud};
use crate::tcd::{backprop_descriptors, compute_descriptors, DescriptorMode, StateBank, StateGradient};

/// A sequence of frames with nearest-neighbour indexes prebuilt for every
/// frame that serves as a Chamfer target.
#[derive(Debug, Clone)]
pub struct PreparedSequence {
    frames: Vec<PointCloud>,
    // indexes[i] is built over frames[i + 1].
    indexes: Vec<NeighborIndex>,
}

impl PreparedSequence {
    pub fn new(frames: Vec<PointCloud>) -> Result<Self> {
        if frames.len() < 2 {
            return Err(Error::SequenceTooShort { frames: frames.len() });
        }
        let indexes = frames[1..].iter().map(build_index).collect();
        Ok(PreparedSequence { frames, indexes })
    }

    pub fn frames(&self) -> &[PointCloud] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Index over frame `i + 1`, the target of pair `i`.
    pub fn target_index(&self, pair: usize) -> &NeighborIndex {
        &self.indexes[pair]
    }
}

/// Summed pairwise Chamfer loss of one sequence and its gradients.
#[derive(Debug, Clone)]
pub struct SequenceLoss {
    pub loss: f64,
    /// Chamfer value of each consecutive pair.
    pub pair_losses: Vec<f64>,
    /// Decoder gradients; `None` when they were not requested.
    pub decoder: Option<GradientBuffer>,
    /// Gradients w.r.t. every state and the temporal weight.
    pub states: StateGradient,
    /// Nearest-neighbour assignments of each pair, forward then backward.
    pub assignments: Vec<(Vec<usize>, Vec<usize>)>,
}

/// `Σ_i chamfer(M_i + D(M_i, z_i), M_{i+1})` with gradients for the decoder,
/// every state and `ω`.
pub fn sequence_loss(
    decoder: &FlowDecoder,
    bank: &StateBank,
    frames: &[PointCloud],
    mode: DescriptorMode,
) -> Result<SequenceLoss> {
    let prepared = PreparedSequence::new(frames.to_vec())?;
    sequence_loss_prepared(decoder, bank, &prepared, mode, true)
}

pub fn sequence_loss_prepared(
    decoder: &FlowDecoder,
    bank: &StateBank,
    seq: &PreparedSequence,
    mode: DescriptorMode,
    decoder_grads: bool,
) -> Result<SequenceLoss> {
    let t = seq.len();
    if bank.frames() != t {
        return Err(Error::Shape(format!(
            "state bank has {} frames, sequence has {t}",
            bank.frames()
        )));
    }
    if bank.dim() != decoder.dim() {
        return Err(Error::ConfigMismatch(format!(
            "state dimension {} does not match decoder dimension {}",
            bank.dim(),
            decoder.dim()
        )));
    }
    let tcds = compute_descriptors(bank, mode);
    let mut d_z = vec![vec![0.0; bank.dim()]; t];
    let mut grads = decoder_grads.then(|| decoder.net().zero_gradients());
    let mut pair_losses = Vec::with_capacity(t - 1);
    let mut assignments = Vec::with_capacity(t - 1);
    let mut loss = 0.0;

    for (i, dz) in d_z.iter_mut().enumerate().take(t - 1) {
        let source = &seq.frames[i];
        let target = &seq.frames[i + 1];
        let (field, cache) = decoder.predict(source, &tcds.descriptors[i])?;
        let moved = apply_flow(source, &field)?;
        let eval = chamfer_with_index(&moved, target, seq.target_index(i));
        loss += eval.value;
        pair_losses.push(eval.value);
        // moved = source + displacement, so d/d(displacement) = d/d(moved).
        let g = decoder.backward(&cache, &eval.gradient, decoder_grads)?;
        if let (Some(acc), Some(pg)) = (grads.as_mut(), g.params.as_ref()) {
            acc.add_assign(pg)?;
        }
        *dz = g.d_z;
        assignments.push((eval.forward_match, eval.backward_match));
    }

    let states = backprop_descriptors(bank, &d_z, mode)?;
    Ok(SequenceLoss {
        loss,
        pair_losses,
        decoder: grads,
        states,
        assignments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffnet::{DenseLayer, Mlp};
    use crate::tcd::init_state_bank;

    fn zero_decoder(dim: usize) -> FlowDecoder {
        let net = Mlp::from_layers(vec![DenseLayer::zeros(3 + dim, 4), DenseLayer::zeros(4, 3)]).unwrap();
        FlowDecoder::from_net(net, dim).unwrap()
    }

    #[test]
    fn static_frames_with_zero_flow_have_zero_loss() {
        let cloud = PointCloud::new(vec![[0.1, 0.2, 0.3], [-0.2, 0.0, 0.4], [0.3, -0.3, 0.0]], 0).unwrap();
        let frames = vec![cloud.clone(), cloud.clone(), cloud];
        let bank = init_state_bank(3, 2, 0.5, 1).unwrap();
        let sl = sequence_loss(&zero_decoder(2), &bank, &frames, DescriptorMode::Temporal).unwrap();
        assert_eq!(sl.loss, 0.0);
        assert!(sl.decoder.unwrap().is_zero());
        assert!(sl.states.states.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn single_point_pair_loss() {
        let frames = vec![
            PointCloud::new(vec![[0.0; 3]], 0).unwrap(),
            PointCloud::new(vec![[1.0, 0.0, 0.0]], 1).unwrap(),
        ];
        let bank = init_state_bank(2, 3, 0.5, 0).unwrap();
        let sl = sequence_loss(&zero_decoder(3), &bank, &frames, DescriptorMode::Temporal).unwrap();
        assert_eq!(sl.loss, 2.0);
        assert_eq!(sl.pair_losses, vec![2.0]);
    }

    #[test]
    fn bank_must_match_sequence() {
        let c = PointCloud::new(vec![[0.0; 3]], 0).unwrap();
        let frames = vec![c.clone(), c.clone(), c];
        let bank = init_state_bank(2, 3, 0.5, 0).unwrap();
        assert!(matches!(
            sequence_loss(&zero_decoder(3), &bank, &frames, DescriptorMode::Temporal),
            Err(Error::Shape(_))
        ));
        let bank = init_state_bank(3, 4, 0.5, 0).unwrap();
        assert!(matches!(
            sequence_loss(&zero_decoder(3), &bank, &frames, DescriptorMode::Temporal),
            Err(Error::ConfigMismatch(_))
        ));
        assert!(matches!(
            PreparedSequence::new(frames[..1].to_vec()),
            Err(Error::SequenceTooShort { frames: 1 })
        ));
    }
}
