//! Checkpoint of the learnable illumination state (network plus every
//! per-view gamma range and field), magic `GSI3ILL1`.

use std::path::Path;

use super::{ConvWeights, GammaParams, IlluminationField, ViewIllum, FEATURE_SIZE};
use crate::error::Result;
use crate::record::{RecordReader, RecordWriter};

pub const MAGIC: &[u8; 8] = b"GSI3ILL1";
pub const VERSION: u32 = 1;

/// Shared refinement network and per-view illumination parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct IllumState {
    pub net: ConvWeights,
    pub views: Vec<ViewIllum>,
}

impl IllumState {
    pub fn new(n_views: usize, seed: u64) -> Self {
        Self {
            net: ConvWeights::init(seed),
            views: vec![ViewIllum::default(); n_views],
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = RecordWriter::new(MAGIC, VERSION);
        w.u32(self.views.len() as u32);
        for layer in [&self.net.layer1, &self.net.layer2] {
            w.f64s(&layer.weight);
            w.f64s(&layer.bias);
        }
        for v in &self.views {
            w.f64s(&v.gamma.values());
            w.f64s(&v.field.values);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = RecordReader::new(bytes, MAGIC, VERSION)?;
        let n_views = r.u32()? as usize;
        let mut net = ConvWeights::zeros();
        for layer in [&mut net.layer1, &mut net.layer2] {
            r.f64s(&mut layer.weight)?;
            r.f64s(&mut layer.bias)?;
        }
        let mut views = Vec::with_capacity(n_views);
        for _ in 0..n_views {
            let mut g = [0.0; 4];
            r.f64s(&mut g)?;
            let mut field = IlluminationField::filled(0.0);
            debug_assert_eq!(field.values.len(), FEATURE_SIZE * FEATURE_SIZE);
            r.f64s(&mut field.values)?;
            let mut gamma = GammaParams::default();
            gamma.set_values(g);
            views.push(ViewIllum { gamma, field });
        }
        r.finish()?;
        Ok(Self { net, views })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
