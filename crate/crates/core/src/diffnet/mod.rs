//! A small dense feed-forward network with an exact reverse-mode pass.
//!
//! Hidden layers use a rectifier, the output layer is linear. All arithmetic
//! is `f64`. Batches are processed point by point through the same kernels as
//! single inputs, so a batch of `B` inputs gives bit-identical results to `B`
//! separate calls (including the accumulated parameter gradients, which are
//! summed in input order).

mod layer;
mod network;

pub use layer::{DenseLayer, GradientBuffer, LayerGradient};
pub use network::{init_mlp, ForwardCache, Mlp};

/// Dot product with four fixed accumulation lanes.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ta, tb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ta.iter().zip(tb) {
        tail += x * y;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + tail
}

/// `y += alpha * x`
#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
