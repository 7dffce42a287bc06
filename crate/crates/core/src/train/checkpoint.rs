//! Trained operators on disk.
//!
//! Layout (little endian): `NOPCK1`, descriptor length `u32`, descriptor as
//! UTF-8 JSON `{architecture, training}`, parameter count `u64`, parameters
//! as `f64`.

use super::dataset::{write_atomic, Reader};
use crate::error::{Error, Result};
use crate::operators::OperatorSpec;
use crate::tensor::ParamVector;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const CHECKPOINT_MAGIC: &[u8; 6] = b"NOPCK1";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub name: String,
    pub seed: u64,
    /// Run that produced the parameters.
    pub run: usize,
    /// Steps done in that run up to the kept checkpoint.
    pub steps: usize,
    /// Steps done over all runs.
    pub total_steps: usize,
    pub best_validation: f64,
    /// Seconds, or 0 when timing is disabled.
    pub training_time: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub spec: OperatorSpec,
    pub params: ParamVector,
    pub meta: TrainingMeta,
}

#[derive(Serialize, Deserialize)]
struct Descriptor {
    architecture: OperatorSpec,
    training: TrainingMeta,
}

impl Checkpoint {
    pub fn new(spec: OperatorSpec, params: ParamVector, meta: TrainingMeta) -> Result<Self> {
        spec.validate()?;
        params.check_len(spec.param_count())?;
        Ok(Checkpoint { spec, params, meta })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.params.check_len(self.spec.param_count())?;
        let desc = Descriptor { architecture: self.spec.clone(), training: self.meta.clone() };
        let text = serde_json::to_vec(&desc).map_err(|e| Error::Format(e.to_string()))?;
        let len = u32::try_from(text.len()).map_err(|_| Error::Format("descriptor too long".into()))?;
        let mut out = Vec::with_capacity(6 + 4 + text.len() + 8 + 8 * self.params.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(&text);
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for v in &self.params.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(6)? != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a checkpoint file (bad magic)".into()));
        }
        let len = r.u32()? as usize;
        let desc: Descriptor = serde_json::from_slice(r.take(len)?).map_err(|e| Error::Format(e.to_string()))?;
        let n = usize::try_from(r.u64()?).map_err(|_| Error::Format("parameter count overflow".into()))?;
        let values = r.f64s(n)?;
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after parameters".into()));
        }
        Checkpoint::new(desc.architecture, ParamVector { values }, desc.training).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Checkpoint::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::Activation;
    use crate::grid::GridFunction;
    use crate::operators::FnoOperator;
    use crate::rng::RngState;

    #[test]
    fn round_trip_preserves_evaluation() {
        let spec = OperatorSpec::Fno(FnoOperator::new(vec![16], 4, 2, 4, Activation::Gelu, true).unwrap());
        let params = spec.init(&mut RngState::new(3));
        let ck = Checkpoint::new(spec, params, TrainingMeta { name: "FNO".into(), best_validation: 0.125, ..Default::default() }).unwrap();
        let bytes = ck.to_bytes().unwrap();
        assert_eq!(&bytes[..6], b"NOPCK1");
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        let f = GridFunction::from_vec(vec![1.0], vec![16], (0..16).map(|i| (i as f64).sin()).collect()).unwrap();
        let a = ck.spec.apply(&ck.params.values, &f).unwrap();
        let b = back.spec.apply(&back.params.values, &f).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn length_mismatch_rejected() {
        let spec = OperatorSpec::Fno(FnoOperator::new(vec![8], 2, 1, 2, Activation::Gelu, true).unwrap());
        assert!(Checkpoint::new(spec.clone(), ParamVector::zeros(3), TrainingMeta::default()).is_err());
        let ck = Checkpoint::new(spec.clone(), ParamVector::zeros(spec.param_count()), TrainingMeta::default()).unwrap();
        let mut bytes = ck.to_bytes().unwrap();
        bytes.truncate(bytes.len() - 8);
        assert!(Checkpoint::from_bytes(&bytes).is_err());
    }
}
