use crate::error::{Error, Result};

/// Affine map `y = W x + b` with `W` stored row-major as `fan_out × fan_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    fan_in: usize,
    fan_out: usize,
    pub(crate) weights: Vec<f64>,
    pub(crate) bias: Vec<f64>,
}

impl DenseLayer {
    pub fn new(fan_in: usize, fan_out: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if fan_in == 0 || fan_out == 0 {
            return Err(Error::Shape("layer widths must be positive".into()));
        }
        if weights.len() != fan_in * fan_out || bias.len() != fan_out {
            return Err(Error::Shape(format!(
                "layer {fan_in}->{fan_out} expects {} weights and {fan_out} biases, got {} and {}",
                fan_in * fan_out,
                weights.len(),
                bias.len()
            )));
        }
        if !weights.iter().chain(&bias).all(|v| v.is_finite()) {
            return Err(Error::InvalidCoordinate("non-finite layer parameter".into()));
        }
        Ok(DenseLayer {
            fan_in,
            fan_out,
            weights,
            bias,
        })
    }

    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        DenseLayer {
            fan_in,
            fan_out,
            weights: vec![0.0; fan_in * fan_out],
            bias: vec![0.0; fan_out],
        }
    }

    pub fn fan_in(&self) -> usize {
        self.fan_in
    }

    pub fn fan_out(&self) -> usize {
        self.fan_out
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// Row `o` of the weight matrix.
    #[inline]
    pub fn row(&self, o: usize) -> &[f64] {
        &self.weights[o * self.fan_in..(o + 1) * self.fan_in]
    }

    pub fn num_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Parameter gradients, shape-congruent with an [`super::Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBuffer {
    pub layers: Vec<LayerGradient>,
}

impl GradientBuffer {
    pub fn zeros_like(layers: &[DenseLayer]) -> Self {
        GradientBuffer {
            layers: layers
                .iter()
                .map(|l| LayerGradient {
                    weights: vec![0.0; l.weights.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn is_congruent(&self, other: &GradientBuffer) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weights.len() == b.weights.len() && a.bias.len() == b.bias.len())
    }

    pub fn add_assign(&mut self, other: &GradientBuffer) -> Result<()> {
        if !self.is_congruent(other) {
            return Err(Error::Shape("gradient buffers are not congruent".into()));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            super::axpy(1.0, &b.weights, &mut a.weights);
            super::axpy(1.0, &b.bias, &mut a.bias);
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|v| *v *= factor);
        }
    }

    /// Gradient slices in parameter order: per layer, weights then bias.
    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.slices().concat()
    }

    pub fn is_zero(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| *v == 0.0))
    }
}
