//! `MACSPDM1` model checkpoints.
//!
//! ```text
//! magic          8 bytes  "MACSPDM1"
//! rdm_dim        u32
//! label_len      u32
//! n_hidden       u32, then n_hidden × u32 widths
//! beta_min       f64
//! beta_max       f64
//! steps          u32
//! mean, std      2 × (d² - 1) × f64
//! n_losses       u64, then n_losses × f64
//! parameters     per layer: weights (column-major, out × in) then biases, f64
//! checksum       u64      first 8 bytes of SHA-256 over everything above
//! ```

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::diffusion::{Schedule, Standardization, TrainedModel, TIME_FEATURES};
use super::mirror::coord_count;
use super::network::{Layer, ScoreNetwork};
use crate::error::{Error, Result};
use crate::persist::{read_file, Decoder, Encoder};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MACSPDM1";

/// Largest accepted layer width, guarding allocation on corrupt headers.
const MAX_WIDTH: usize = 1 << 16;

pub fn checkpoint_bytes(model: &TrainedModel) -> Vec<u8> {
    let mut e = Encoder::new(CHECKPOINT_MAGIC);
    e.u32(model.rdm_dim as u32);
    e.u32(model.label_len as u32);
    let hidden = model.network.hidden_widths();
    e.u32(hidden.len() as u32);
    hidden.iter().for_each(|&h| e.u32(h as u32));
    e.f64(model.schedule.beta_min);
    e.f64(model.schedule.beta_max);
    e.u32(model.steps as u32);
    e.f64s(&model.standardization.mean);
    e.f64s(&model.standardization.std);
    e.u64(model.loss_trace.len() as u64);
    e.f64s(&model.loss_trace);
    e.f64s(&model.network.params());
    e.finish()
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<TrainedModel> {
    let mut d = Decoder::open(bytes, CHECKPOINT_MAGIC)?;
    let rdm_dim = d.u32()? as usize;
    let label_len = d.u32()? as usize;
    if !(2..=4).contains(&rdm_dim) {
        return Err(Error::Malformed(format!("unsupported RDM dimension {rdm_dim}")));
    }
    let n_hidden = d.u32()? as usize;
    let hidden = (0..n_hidden).map(|_| d.u32().map(|w| w as usize)).collect::<Result<Vec<_>>>()?;
    if hidden.iter().any(|&w| w == 0 || w > MAX_WIDTH) || label_len > MAX_WIDTH {
        return Err(Error::Malformed("implausible layer widths".into()));
    }
    let schedule = Schedule { beta_min: d.f64()?, beta_max: d.f64()? };
    let steps = d.u32()? as usize;
    let dc = coord_count(rdm_dim);
    let standardization = Standardization { mean: d.f64s(dc)?, std: d.f64s(dc)? };
    let n_losses = d.u64()? as usize;
    if n_losses > d.remaining() / 8 {
        return Err(Error::Malformed("loss trace longer than file".into()));
    }
    let loss_trace = d.f64s(n_losses)?;
    let widths: Vec<usize> =
        std::iter::once(dc + TIME_FEATURES + label_len).chain(hidden).chain(std::iter::once(dc)).collect();
    let mut layers = Vec::with_capacity(widths.len() - 1);
    for w in widths.windows(2) {
        let weight = DMatrix::from_vec(w[1], w[0], d.f64s(w[0] * w[1])?);
        let bias = DVector::from_vec(d.f64s(w[1])?);
        layers.push(Layer { weight, bias });
    }
    d.finish()?;
    Ok(TrainedModel { network: ScoreNetwork::from_layers(layers)?, standardization, rdm_dim, label_len, schedule, steps, loss_trace })
}

pub fn save_checkpoint(model: &TrainedModel, path: &Path) -> Result<()> {
    std::fs::write(path, checkpoint_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<TrainedModel> {
    checkpoint_from_bytes(&read_file(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genmodel::diffusion::Architecture;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model() -> TrainedModel {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut network = ScoreNetwork::new(3 + TIME_FEATURES + 5, &Architecture { hidden: vec![6, 4] }.hidden, 3, &mut rng).unwrap();
        let p: Vec<f64> = (0..network.param_count()).map(|i| i as f64 * 0.01 - 0.3).collect();
        network.set_params(&p).unwrap();
        TrainedModel {
            network,
            standardization: Standardization { mean: vec![0.1, -0.2, 0.3], std: vec![1.0, 2.0, 0.5] },
            rdm_dim: 2,
            label_len: 5,
            schedule: Schedule { beta_min: 0.1, beta_max: 10.0 },
            steps: 500,
            loss_trace: vec![3.0, 1.5],
        }
    }

    #[test]
    fn round_trip() {
        let m = model();
        assert_eq!(checkpoint_from_bytes(&checkpoint_bytes(&m)).unwrap(), m);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        save_checkpoint(&m, &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), m);
        assert_eq!(&std::fs::read(&path).unwrap()[..8], CHECKPOINT_MAGIC);
    }

    #[test]
    fn rejects_damage() {
        let bytes = checkpoint_bytes(&model());
        assert!(matches!(checkpoint_from_bytes(&bytes[..bytes.len() - 1]), Err(Error::Checksum)));
        let mut other = bytes.clone();
        other[7] = b'2';
        assert!(matches!(checkpoint_from_bytes(&other), Err(Error::VersionMismatch { .. })));
        assert!(matches!(checkpoint_from_bytes(b"MACRDM01"), Err(Error::Malformed(_))));
        assert!(matches!(load_checkpoint(Path::new("/nonexistent/m.bin")), Err(Error::Io { .. })));
    }
}
