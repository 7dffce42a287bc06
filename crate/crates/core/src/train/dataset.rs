//! Input/target pairs for operator learning and their binary file format.
//!
//! Layout (little endian): `NOPDS1`, version `u32`, dims `u32`, extents
//! `u32 × dims`, count `u32`, inputs `f64 × count·P`, targets `f64 × count·P`,
//! metadata length `u32` followed by the metadata as UTF-8 JSON.

use crate::error::{invalid, shape, Error, Result};
use crate::grid::GridFunction;
use crate::rng::RngState;
use crate::solvers::grf::{grf_sample, GrfSpec};
use crate::solvers::{solve_operator, SemilinearPde, SolverConfig};
use crate::tensor::Tensor;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const DATASET_MAGIC: &[u8; 6] = b"NOPDS1";
pub const DATASET_VERSION: u32 = 1;
const MAX_RETRIES: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleFailure {
    pub sample: usize,
    pub attempt: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub pde: SemilinearPde,
    pub grf: GrfSpec,
    pub solver: SolverConfig,
    pub seed: u64,
    #[serde(default)]
    pub failures: Vec<SampleFailure>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub lengths: Vec<f64>,
    pub extents: Vec<usize>,
    pub generation: Option<Generation>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<GridFunction>,
    pub targets: Vec<GridFunction>,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn new(inputs: Vec<GridFunction>, targets: Vec<GridFunction>, lengths: Vec<f64>, extents: Vec<usize>) -> Result<Self> {
        let d = Dataset { inputs, targets, meta: DatasetMeta { lengths, extents, generation: None } };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs.len() != self.targets.len() {
            return shape(format!("{} inputs but {} targets", self.inputs.len(), self.targets.len()));
        }
        if self.meta.extents.is_empty() || self.meta.extents.len() != self.meta.lengths.len() {
            return shape("dataset extents and lengths disagree");
        }
        for g in self.inputs.iter().chain(&self.targets) {
            if g.extents() != self.meta.extents.as_slice() || g.lengths != self.meta.lengths {
                return shape(format!("sample grid {:?} differs from dataset grid {:?}", g.extents(), self.meta.extents));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn points(&self) -> usize {
        self.meta.extents.iter().product()
    }

    /// Inputs and targets of the selected samples, each flattened to `[k·P]`.
    pub fn batch(&self, idx: &[usize]) -> (Tensor, Tensor) {
        let p = self.points();
        let mut x = Vec::with_capacity(idx.len() * p);
        let mut y = Vec::with_capacity(idx.len() * p);
        for &i in idx {
            x.extend_from_slice(self.inputs[i].data());
            y.extend_from_slice(self.targets[i].data());
        }
        (Tensor::from_vec(x), Tensor::from_vec(y))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let p = self.points();
        let meta = serde_json::to_vec(&self.meta).map_err(|e| Error::Format(e.to_string()))?;
        let mut out = Vec::with_capacity(32 + 16 * p * self.len() + meta.len());
        out.extend_from_slice(DATASET_MAGIC);
        out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
        put_u32(&mut out, self.meta.extents.len())?;
        for &e in &self.meta.extents {
            put_u32(&mut out, e)?;
        }
        put_u32(&mut out, self.len())?;
        for g in self.inputs.iter().chain(&self.targets) {
            for v in g.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        put_u32(&mut out, meta.len())?;
        out.extend_from_slice(&meta);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(6)? != DATASET_MAGIC {
            return Err(Error::Format("not a dataset file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != DATASET_VERSION {
            return Err(Error::Format(format!("unsupported dataset version {version}")));
        }
        let dims = r.u32()? as usize;
        if dims == 0 || dims > 8 {
            return Err(Error::Format(format!("implausible dimension {dims}")));
        }
        let extents: Vec<usize> = (0..dims).map(|_| r.u32().map(|e| e as usize)).collect::<Result<_>>()?;
        let count = r.u32()? as usize;
        let p: usize = extents.iter().product();
        let raw_in = r.f64s(count * p)?;
        let raw_out = r.f64s(count * p)?;
        let mlen = r.u32()? as usize;
        let meta: DatasetMeta = serde_json::from_slice(r.take(mlen)?).map_err(|e| Error::Format(e.to_string()))?;
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after dataset metadata".into()));
        }
        if meta.extents != extents {
            return Err(Error::Format("metadata extents disagree with header".into()));
        }
        let grids = |raw: Vec<f64>| -> Result<Vec<GridFunction>> {
            raw.chunks(p.max(1))
                .take(count)
                .map(|c| GridFunction::from_vec(meta.lengths.clone(), extents.clone(), c.to_vec()))
                .collect()
        };
        let d = Dataset { inputs: grids(raw_in)?, targets: grids(raw_out)?, meta: meta.clone() };
        d.validate()?;
        Ok(d)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Dataset::from_bytes(&std::fs::read(path)?)
    }
}

/// Inputs drawn from the GRF prior on the fine solver grid, targets from
/// the reference solver there; both restricted to `model_n` points per axis.
/// Sample `i` uses its own child stream of `seed`, so the result does not
/// depend on scheduling. A failed solve draws a fresh input from the same
/// stream, at most three times.
pub fn dataset_generate(pde: &SemilinearPde, grf: &GrfSpec, solver: &SolverConfig, model_n: usize, count: usize, seed: u64) -> Result<Dataset> {
    pde.validate()?;
    grf.validate()?;
    solver.validate()?;
    if model_n == 0 || solver.n % model_n != 0 {
        return invalid(format!("model grid {model_n} must divide solver grid {}", solver.n));
    }
    let d = pde.dims();
    let fine = vec![solver.n; d];
    let coarse = vec![model_n; d];
    let base = RngState::new(seed);
    let results: Vec<Result<(GridFunction, GridFunction, Vec<SampleFailure>)>> = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = base.split(i as u64);
            let mut failures = Vec::new();
            for attempt in 0..=MAX_RETRIES {
                let g = grf_sample(grf, &pde.lengths, &fine, &mut rng)?;
                match solve_operator(pde, &g, solver) {
                    Ok(u) => return Ok((g.restrict(&coarse)?, u.restrict(&coarse)?, failures)),
                    Err(e) => failures.push(SampleFailure { sample: i, attempt, message: e.to_string() }),
                }
            }
            Err(Error::Numerical(format!("sample {i}: solver failed {} times: {}", MAX_RETRIES + 1, failures.last().unwrap().message)))
        })
        .collect();
    let mut inputs = Vec::with_capacity(count);
    let mut targets = Vec::with_capacity(count);
    let mut failures = Vec::new();
    for r in results {
        let (x, y, f) = r?;
        inputs.push(x);
        targets.push(y);
        failures.extend(f);
    }
    let gen = Generation { pde: pde.clone(), grf: *grf, solver: *solver, seed, failures };
    Ok(Dataset { inputs, targets, meta: DatasetMeta { lengths: pde.lengths.clone(), extents: coarse, generation: Some(gen) } })
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

pub(crate) struct Reader<'a> {
    pub buf: &'a [u8],
    pub pos: usize,
}

impl<'a> Reader<'a> {
    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(e) => {
                let s = &self.buf[self.pos..e];
                self.pos = e;
                Ok(s)
            }
            None => Err(Error::Format(format!("file truncated at byte {}", self.pos))),
        }
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Format("length overflow".into()))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

/// Write through a sibling temporary file and rename, so readers never see
/// a partial file.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::Method;

    fn small(count: usize, seed: u64) -> Dataset {
        let cfg = SolverConfig::new(Method::Spectral, 32, 20).unwrap();
        dataset_generate(&SemilinearPde::burgers(), &GrfSpec::burgers(), &cfg, 16, count, seed).unwrap()
    }

    #[test]
    fn empty_dataset() {
        let d = small(0, 1);
        assert!(d.is_empty());
        let back = Dataset::from_bytes(&d.to_bytes().unwrap()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let a = small(5, 7).to_bytes().unwrap();
        let b = small(5, 7).to_bytes().unwrap();
        assert_eq!(a, b);
        assert_ne!(a, small(5, 8).to_bytes().unwrap());
    }

    #[test]
    fn round_trip() {
        let d = small(3, 2);
        assert_eq!(d.inputs[0].extents(), &[16]);
        let bytes = d.to_bytes().unwrap();
        assert_eq!(&bytes[..6], b"NOPDS1");
        assert_eq!(Dataset::from_bytes(&bytes).unwrap(), d);
        assert!(Dataset::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Dataset::from_bytes(&bad).is_err());
    }

    #[test]
    fn zero_source_gives_zero_targets() {
        let pde = SemilinearPde::reaction_diffusion();
        let cfg = SolverConfig::new(Method::Fdm, 32, 20).unwrap();
        let zero = GridFunction::zeros(&pde.lengths, &[32]);
        let u = solve_operator(&pde, &zero, &cfg).unwrap();
        assert!(u.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn grid_must_divide() {
        let cfg = SolverConfig::new(Method::Spectral, 32, 20).unwrap();
        assert!(dataset_generate(&SemilinearPde::burgers(), &GrfSpec::burgers(), &cfg, 12, 1, 0).is_err());
    }
}
