//! Binary checkpoint (`.ckpt`) and latent (`.latents`) files.
//!
//! Checkpoint layout, all little-endian:
//!
//! ```text
//! "DTNT" version:u8=1
//! D_z:u32 layer_count:u32
//! per layer: fan_in:u32 fan_out:u32 weights:f64[fan_out*fan_in] (row-major) bias:f64[fan_out]
//! omega:f64
//! bank_count:u32, per bank: T:u32 states:f64[T*D_z]
//! iterations_done:u64 mode:u8 (0 temporal, 1 independent)
//! ```
//!
//! Latent files hold one state bank: `T:u32 D_z:u32 states:f64[T*D_z] omega:f64`.

use std::fs;
use std::path::Path;

use super::train::{TrainConfig, TrainedModel};
use crate::diffnet::{DenseLayer, Mlp};
use crate::error::{Error, Result};
use crate::flow::FlowDecoder;
use crate::tcd::{DescriptorMode, StateBank};

const MAGIC: &[u8; 4] = b"DTNT";
const VERSION: u8 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, vs: &[f64]) {
        for v in vs {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Shape(format!("truncated file: need {n} bytes at offset {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Shape("length overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(self.f64s(1)?[0])
    }
    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Shape(format!(
                "{} trailing bytes after payload",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub fn write_checkpoint(model: &TrainedModel) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u8(VERSION);
    w.u32(model.decoder.dim());
    let layers = model.decoder.net().layers();
    w.u32(layers.len());
    for l in layers {
        w.u32(l.fan_in());
        w.u32(l.fan_out());
        w.f64s(l.weights());
        w.f64s(l.bias());
    }
    w.0.extend_from_slice(&model.omega.to_le_bytes());
    w.u32(model.banks.len());
    for b in &model.banks {
        w.u32(b.frames());
        w.f64s(&b.states_flat());
    }
    w.u64(model.iterations_done);
    w.u8(match model.mode {
        DescriptorMode::Temporal => 0,
        DescriptorMode::Independent => 1,
    });
    w.0
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<TrainedModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Shape("not a checkpoint: bad magic bytes".into()));
    }
    let version = r.u8()?;
    if version != VERSION {
        return Err(Error::Shape(format!("unsupported checkpoint version {version}")));
    }
    let dim = r.u32()?;
    let count = r.u32()?;
    let mut layers = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let fan_in = r.u32()?;
        let fan_out = r.u32()?;
        let weights = r.f64s(fan_in.saturating_mul(fan_out))?;
        let bias = r.f64s(fan_out)?;
        layers.push(DenseLayer::new(fan_in, fan_out, weights, bias)?);
    }
    let decoder = FlowDecoder::from_net(Mlp::from_layers(layers)?, dim)?;
    let omega = r.f64()?;
    let bank_count = r.u32()?;
    let mut banks = Vec::with_capacity(bank_count.min(1 << 16));
    for _ in 0..bank_count {
        let t = r.u32()?;
        let flat = r.f64s(t.saturating_mul(dim))?;
        banks.push(StateBank::new(
            flat.chunks_exact(dim).map(<[f64]>::to_vec).collect(),
            omega,
        )?);
    }
    let iterations_done = r.u64()?;
    let mode = match r.u8()? {
        0 => DescriptorMode::Temporal,
        1 => DescriptorMode::Independent,
        m => return Err(Error::Shape(format!("unknown descriptor mode {m}"))),
    };
    r.finish()?;
    if !omega.is_finite() {
        return Err(Error::InvalidCoordinate("non-finite temporal weight".into()));
    }
    let config = TrainConfig {
        latent_dim: dim,
        hidden: decoder.hidden(),
        mode,
        ..TrainConfig::default()
    };
    Ok(TrainedModel {
        decoder,
        omega,
        mode,
        banks,
        config,
        iterations_done,
    })
}

pub fn write_latents(bank: &StateBank) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.u32(bank.frames());
    w.u32(bank.dim());
    w.f64s(&bank.states_flat());
    w.f64s(&[bank.omega]);
    w.0
}

pub fn read_latents(bytes: &[u8]) -> Result<StateBank> {
    let mut r = Reader { bytes, pos: 0 };
    let t = r.u32()?;
    let dim = r.u32()?;
    if dim == 0 {
        return Err(Error::Shape("latent dimension is zero".into()));
    }
    let flat = r.f64s(t.saturating_mul(dim))?;
    let omega = r.f64()?;
    r.finish()?;
    StateBank::new(flat.chunks_exact(dim).map(<[f64]>::to_vec).collect(), omega)
}

pub fn save_checkpoint(path: &Path, model: &TrainedModel) -> Result<()> {
    fs::write(path, write_checkpoint(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<TrainedModel> {
    read_checkpoint(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

pub fn save_latents(path: &Path, bank: &StateBank) -> Result<()> {
    fs::write(path, write_latents(bank)).map_err(|e| Error::io(path, e))
}

pub fn load_latents(path: &Path) -> Result<StateBank> {
    read_latents(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tcd::init_state_bank;

    fn model() -> TrainedModel {
        let config = TrainConfig {
            latent_dim: 2,
            hidden: vec![5, 4],
            ..TrainConfig::default()
        };
        TrainedModel {
            decoder: FlowDecoder::new(2, &[5, 4], 3).unwrap(),
            omega: 0.125,
            mode: DescriptorMode::Temporal,
            banks: vec![
                init_state_bank(3, 2, 0.125, 1).unwrap(),
                init_state_bank(4, 2, 0.125, 2).unwrap(),
            ],
            config,
            iterations_done: 17,
        }
    }

    #[test]
    fn header_layout() {
        let bytes = write_checkpoint(&model());
        assert_eq!(&bytes[..4], b"DTNT");
        assert_eq!(bytes[4], 1);
        assert_eq!(u32::from_le_bytes(bytes[5..9].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[9..13].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[13..17].try_into().unwrap()), 5);
        assert_eq!(u32::from_le_bytes(bytes[17..21].try_into().unwrap()), 5);
        let params = 5 * 5 + 5 + 5 * 4 + 4 + 4 * 3 + 3;
        let expected = 5 + 8 + 3 * 8 + params * 8 + 8 + 4 + (4 + 6 * 8) + (4 + 8 * 8) + 8 + 1;
        assert_eq!(bytes.len(), expected);
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = model();
        let back = read_checkpoint(&write_checkpoint(&m)).unwrap();
        assert_eq!(back.decoder, m.decoder);
        assert_eq!(back.omega, m.omega);
        assert_eq!(back.banks, m.banks);
        assert_eq!(back.iterations_done, 17);
        assert_eq!(back.config.latent_dim, 2);
        assert_eq!(back.config.hidden, vec![5, 4]);
    }

    #[test]
    fn corrupt_checkpoints_are_rejected() {
        let mut bytes = write_checkpoint(&model());
        assert!(read_checkpoint(&bytes[..bytes.len() - 3]).is_err());
        bytes.push(0);
        assert!(read_checkpoint(&bytes).is_err());
        let mut bad = write_checkpoint(&model());
        bad[0] = b'X';
        assert!(read_checkpoint(&bad).is_err());
        let mut bad = write_checkpoint(&model());
        bad[4] = 2;
        assert!(read_checkpoint(&bad).is_err());
    }

    #[test]
    fn latents_round_trip() {
        let b = init_state_bank(4, 3, 0.3, 9).unwrap();
        let bytes = write_latents(&b);
        assert_eq!(bytes.len(), 8 + 12 * 8 + 8);
        assert_eq!(read_latents(&bytes).unwrap(), b);
        assert!(read_latents(&bytes[..10]).is_err());
    }
}
