//! Displacement decoder: each point, concatenated with its frame's
//! descriptor, is mapped to a displacement toward the next frame.

use crate::diffnet::{init_mlp, ForwardCache, GradientBuffer, Mlp};
use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud};

/// Hidden widths of the full-size decoder.
pub const PAPER_HIDDEN: [usize; 6] = [256, 512, 1024, 2048, 512, 128];

/// MLP from `R^{3+dim}` to `R^3`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowDecoder {
    net: Mlp,
    dim: usize,
}

/// Per-point displacements aligned index-for-index with a source cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub displacements: Vec<Point3>,
}

/// Forward state kept by [`FlowDecoder::predict`] for the backward pass.
#[derive(Debug, Clone)]
pub struct FlowCache {
    forward: ForwardCache,
    points: usize,
}

/// Gradients returned by [`FlowDecoder::backward`].
#[derive(Debug, Clone)]
pub struct FlowGradient {
    /// Decoder parameter gradients, when requested.
    pub params: Option<GradientBuffer>,
    /// Sum over points of the descriptor slice of each input gradient.
    pub d_z: Vec<f64>,
    pub d_points: Vec<Point3>,
}

impl FlowDecoder {
    /// He-initialised decoder with the given hidden widths.
    pub fn new(dim: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        let sizes: Vec<usize> = std::iter::once(3 + dim)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(3))
            .collect();
        Ok(FlowDecoder {
            net: init_mlp(&sizes, dim, seed)?,
            dim,
        })
    }

    pub fn from_net(net: Mlp, dim: usize) -> Result<Self> {
        if net.input_width() != 3 + dim || net.output_width() != 3 {
            return Err(Error::ConfigMismatch(format!(
                "network maps R^{} to R^{}, decoder needs R^{} to R^3",
                net.input_width(),
                net.output_width(),
                3 + dim
            )));
        }
        Ok(FlowDecoder { net, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    /// Hidden widths, excluding input and output.
    pub fn hidden(&self) -> Vec<usize> {
        let sizes = self.net.sizes();
        sizes[1..sizes.len() - 1].to_vec()
    }

    fn inputs(&self, cloud: &PointCloud, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.dim {
            return Err(Error::Shape(format!(
                "descriptor has length {}, decoder expects {}",
                z.len(),
                self.dim
            )));
        }
        let width = 3 + self.dim;
        let mut inputs = Vec::with_capacity(cloud.len() * width);
        for p in cloud.points() {
            inputs.extend_from_slice(p);
            inputs.extend_from_slice(z);
        }
        Ok(inputs)
    }

    /// Displacement of every point of `cloud`, all conditioned on the same `z`.
    pub fn predict(&self, cloud: &PointCloud, z: &[f64]) -> Result<(FlowField, FlowCache)> {
        let inputs = self.inputs(cloud, z)?;
        let forward = self.net.forward_batch(&inputs, cloud.len())?;
        let displacements = forward.output().chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        Ok((
            FlowField { displacements },
            FlowCache {
                forward,
                points: cloud.len(),
            },
        ))
    }

    /// Reverse pass of [`FlowDecoder::predict`].
    pub fn backward(&self, cache: &FlowCache, d_displacements: &[Point3], param_grads: bool) -> Result<FlowGradient> {
        if d_displacements.len() != cache.points {
            return Err(Error::Shape(format!(
                "{} displacement gradients for a cloud of {} points",
                d_displacements.len(),
                cache.points
            )));
        }
        let d_out = d_displacements.concat();
        let mut params = param_grads.then(|| self.net.zero_gradients());
        let d_in = self.net.backward_batch(&cache.forward, &d_out, params.as_mut())?;
        let width = 3 + self.dim;
        let mut d_z = vec![0.0; self.dim];
        let mut d_points = Vec::with_capacity(cache.points);
        for row in d_in.chunks_exact(width) {
            d_points.push([row[0], row[1], row[2]]);
            for (acc, v) in d_z.iter_mut().zip(&row[3..]) {
                *acc += v;
            }
        }
        Ok(FlowGradient { params, d_z, d_points })
    }
}

pub fn predict_flow(decoder: &FlowDecoder, cloud: &PointCloud, z: &[f64]) -> Result<(FlowField, FlowCache)> {
    decoder.predict(cloud, z)
}

pub fn flow_backward(decoder: &FlowDecoder, cache: &FlowCache, d_displacements: &[Point3]) -> Result<FlowGradient> {
    decoder.backward(cache, d_displacements, true)
}

/// `M_i + D(M_i)`, preserving point order.
pub fn apply_flow(cloud: &PointCloud, field: &FlowField) -> Result<PointCloud> {
    if field.displacements.len() != cloud.len() {
        return Err(Error::Shape(format!(
            "flow field has {} displacements for a cloud of {} points",
            field.displacements.len(),
            cloud.len()
        )));
    }
    let points = cloud
        .points()
        .iter()
        .zip(&field.displacements)
        .map(|(p, d)| [p[0] + d[0], p[1] + d[1], p[2] + d[2]])
        .collect();
    PointCloud::new(points, cloud.frame_index() + 1)
}
