use std::sync::atomic::{AtomicU64, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::layer::{DenseLayer, GradientBuffer};
use super::{axpy, dot};
use crate::error::{Error, Result};

static NEXT_STAMP: AtomicU64 = AtomicU64::new(1);

fn fresh_stamp() -> u64 {
    NEXT_STAMP.fetch_add(1, Ordering::Relaxed)
}

/// Multilayer perceptron: rectifier on hidden layers, identity on the output.
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<DenseLayer>,
    // Changes whenever parameters are mutated; forward caches record it.
    stamp: u64,
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

/// Activations recorded by [`Mlp::forward_batch`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    stamp: u64,
    batch: usize,
    // activations[l] holds the batch input of layer l; the last entry is the
    // network output.
    activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn output(&self) -> &[f64] {
        self.activations.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// He-initialised network with the given layer widths (input first).
///
/// The first width must be `3 + latent_dim` and the last must be 3.
pub fn init_mlp(layer_sizes: &[usize], latent_dim: usize, seed: u64) -> Result<Mlp> {
    if layer_sizes.len() < 2 {
        return Err(Error::ConfigMismatch(format!(
            "need at least input and output widths, got {layer_sizes:?}"
        )));
    }
    if layer_sizes[0] != 3 + latent_dim || *layer_sizes.last().unwrap() != 3 {
        return Err(Error::ConfigMismatch(format!(
            "layer widths {layer_sizes:?} do not map R^{} to R^3",
            3 + latent_dim
        )));
    }
    Mlp::he_init(layer_sizes, seed)
}

impl Mlp {
    /// Weights ~ N(0, 2/fan_in), zero biases, fully determined by `seed`.
    pub fn he_init(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::Shape(format!("invalid layer widths {layer_sizes:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = layer_sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
                let weights = (0..fan_in * fan_out).map(|_| normal.sample(&mut rng)).collect();
                DenseLayer::new(fan_in, fan_out, weights, vec![0.0; fan_out])
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Mlp {
            layers,
            stamp: fresh_stamp(),
        })
    }

    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("network needs at least one layer".into()));
        }
        for (l, w) in layers.windows(2).enumerate() {
            if w[0].fan_out() != w[1].fan_in() {
                return Err(Error::Shape(format!(
                    "layer {l} outputs {} values but layer {} expects {}",
                    w[0].fan_out(),
                    l + 1,
                    w[1].fan_in()
                )));
            }
        }
        Ok(Mlp {
            layers,
            stamp: fresh_stamp(),
        })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().unwrap().fan_out()
    }

    /// Widths from input to output.
    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_width())
            .chain(self.layers.iter().map(DenseLayer::fan_out))
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(DenseLayer::num_params).sum()
    }

    /// Mutable parameter slices in the same order as [`GradientBuffer::slices`].
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.stamp = fresh_stamp();
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                flat.len()
            )));
        }
        let mut rest = flat;
        for slice in self.param_slices_mut() {
            let (head, tail) = rest.split_at(slice.len());
            slice.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    pub fn zero_gradients(&self) -> GradientBuffer {
        GradientBuffer::zeros_like(&self.layers)
    }

    /// Evaluates a single input.
    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        let cache = self.forward_batch(input, 1)?;
        Ok((cache.output().to_vec(), cache))
    }

    /// Evaluates `batch` inputs stored contiguously (`batch × input_width`).
    pub fn forward_batch(&self, inputs: &[f64], batch: usize) -> Result<ForwardCache> {
        let width = self.input_width();
        if inputs.len() != batch * width {
            return Err(Error::Shape(format!(
                "expected {batch} inputs of width {width} ({} values), got {}",
                batch * width,
                inputs.len()
            )));
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(inputs.to_vec());
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let input = &activations[l];
            let mut out = vec![0.0; batch * layer.fan_out()];
            for (x, y) in input
                .chunks_exact(layer.fan_in())
                .zip(out.chunks_exact_mut(layer.fan_out()))
            {
                for (o, yo) in y.iter_mut().enumerate() {
                    let v = dot(layer.row(o), x) + layer.bias[o];
                    *yo = if l < last { v.max(0.0) } else { v };
                }
            }
            activations.push(out);
        }
        Ok(ForwardCache {
            stamp: self.stamp,
            batch,
            activations,
        })
    }

    /// Reverse pass for a single input; returns `(d_input, parameter gradients)`.
    pub fn backward(&self, cache: &ForwardCache, d_output: &[f64]) -> Result<(Vec<f64>, GradientBuffer)> {
        let mut grads = self.zero_gradients();
        let d_input = self.backward_batch(cache, d_output, Some(&mut grads))?;
        Ok((d_input, grads))
    }

    /// Reverse pass over a cached batch.
    ///
    /// Returns `d_input` (`batch × input_width`). When `grads` is given,
    /// parameter gradients are accumulated into it in input order.
    pub fn backward_batch(
        &self,
        cache: &ForwardCache,
        d_output: &[f64],
        mut grads: Option<&mut GradientBuffer>,
    ) -> Result<Vec<f64>> {
        self.check_cache(cache)?;
        let out_w = self.output_width();
        if d_output.len() != cache.batch * out_w {
            return Err(Error::Shape(format!(
                "expected {} output gradients, got {}",
                cache.batch * out_w,
                d_output.len()
            )));
        }
        if let Some(g) = grads.as_deref() {
            if !g.is_congruent(&self.zero_gradients()) {
                return Err(Error::Shape("gradient buffer does not match network".into()));
            }
        }
        let in_w = self.input_width();
        let last = self.layers.len() - 1;
        let max_w = self.sizes().into_iter().max().unwrap_or(0);
        let mut d_input = vec![0.0; cache.batch * in_w];
        let mut delta = Vec::with_capacity(max_w);
        let mut delta_in = Vec::with_capacity(max_w);

        for p in 0..cache.batch {
            delta.clear();
            delta.extend_from_slice(&d_output[p * out_w..(p + 1) * out_w]);
            for l in (0..self.layers.len()).rev() {
                let layer = &self.layers[l];
                let (fi, fo) = (layer.fan_in(), layer.fan_out());
                if l < last {
                    // Rectifier derivative, taken as 0 at exactly 0.
                    let out = &cache.activations[l + 1][p * fo..(p + 1) * fo];
                    for (d, &a) in delta.iter_mut().zip(out) {
                        if a <= 0.0 {
                            *d = 0.0;
                        }
                    }
                }
                let x = &cache.activations[l][p * fi..(p + 1) * fi];
                if let Some(g) = grads.as_deref_mut() {
                    let lg = &mut g.layers[l];
                    for (o, &d) in delta.iter().enumerate() {
                        if d != 0.0 {
                            axpy(d, x, &mut lg.weights[o * fi..(o + 1) * fi]);
                            lg.bias[o] += d;
                        }
                    }
                }
                delta_in.clear();
                delta_in.resize(fi, 0.0);
                for (o, &d) in delta.iter().enumerate() {
                    if d != 0.0 {
                        axpy(d, layer.row(o), &mut delta_in);
                    }
                }
                std::mem::swap(&mut delta, &mut delta_in);
            }
            d_input[p * in_w..(p + 1) * in_w].copy_from_slice(&delta);
        }
        Ok(d_input)
    }

    fn check_cache(&self, cache: &ForwardCache) -> Result<()> {
        if cache.stamp != self.stamp {
            return Err(Error::Cache(
                "forward cache was produced by different or since-modified parameters".into(),
            ));
        }
        let sizes = self.sizes();
        let congruent = cache.activations.len() == sizes.len()
            && cache
                .activations
                .iter()
                .zip(&sizes)
                .all(|(a, &w)| a.len() == cache.batch * w);
        if !congruent {
            return Err(Error::Cache("forward cache shape does not match network".into()));
        }
        Ok(())
    }
}
