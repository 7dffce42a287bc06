//! Test-set comparison of trained operators and classical baselines, and the
//! results CSV.

use super::checkpoint::Checkpoint;
use super::dataset::Dataset;
use crate::error::{invalid, shape, Error, Result};
use crate::grid::{seminorm_sq_diff, GridFunction};
use crate::solvers::{solve_operator, SemilinearPde, SolverConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::Instant;

pub const CSV_HEADER: &str = "Method;L2_error;nr_params;training_time;test_time;done_trainsteps";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    #[serde(rename = "Method")]
    pub method: String,
    #[serde(rename = "L2_error")]
    pub l2_error: f64,
    pub nr_params: usize,
    /// Training or other precomputation, in seconds.
    pub training_time: f64,
    /// Mean seconds for one pass over the test inputs.
    pub test_time: f64,
    pub done_trainsteps: usize,
}

/// Something that maps test inputs to approximate solutions.
#[derive(Clone, Debug)]
pub enum Approximator {
    Model(Checkpoint),
    /// `𝒮̃(g) = g`.
    Identity,
    /// A classical solver run at the test resolution.
    Solver { name: String, pde: SemilinearPde, config: SolverConfig },
    /// Precomputed outputs, one per test sample in order.
    Table { name: String, outputs: Vec<GridFunction> },
}

impl Approximator {
    pub fn name(&self) -> String {
        match self {
            Approximator::Model(c) => c.meta.name.clone(),
            Approximator::Identity => "Identity".into(),
            Approximator::Solver { name, .. } | Approximator::Table { name, .. } => name.clone(),
        }
    }

    fn nr_params(&self) -> usize {
        match self {
            Approximator::Model(c) => c.params.len(),
            _ => 0,
        }
    }

    pub fn predict(&self, inputs: &[GridFunction]) -> Result<Vec<GridFunction>> {
        match self {
            Approximator::Model(c) => {
                let chunks: Vec<&[GridFunction]> = inputs.chunks(64).collect();
                let parts: Vec<Result<Vec<GridFunction>>> = chunks
                    .par_iter()
                    .map(|chunk| {
                        let x: Vec<f64> = chunk.iter().flat_map(|g| g.data().iter().copied()).collect();
                        let y = c.spec.apply_batch(&c.params.values, &crate::tensor::Tensor::from_vec(x))?;
                        let p = c.spec.points();
                        chunk
                            .iter()
                            .zip(y.data().chunks(p))
                            .map(|(g, v)| GridFunction::from_vec(g.lengths.clone(), g.extents().to_vec(), v.to_vec()))
                            .collect()
                    })
                    .collect();
                let mut out = Vec::with_capacity(inputs.len());
                for p in parts {
                    out.extend(p?);
                }
                Ok(out)
            }
            Approximator::Identity => Ok(inputs.to_vec()),
            Approximator::Solver { pde, config, .. } => inputs.par_iter().map(|g| solve_operator(pde, g, config)).collect(),
            Approximator::Table { outputs, .. } => {
                if outputs.len() != inputs.len() {
                    return shape(format!("table holds {} outputs for {} inputs", outputs.len(), inputs.len()));
                }
                Ok(outputs.clone())
            }
        }
    }
}

/// `(1/K Σ_k ‖a_k − b_k‖²)^{1/2}`.
pub fn mean_l2_error(a: &[GridFunction], b: &[GridFunction]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return invalid(format!("error between {} and {} samples", a.len(), b.len()));
    }
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += seminorm_sq_diff(x, y)?;
    }
    Ok((acc / a.len() as f64).sqrt())
}

/// One row per method. With `timing` the test set is evaluated `repeats`
/// times and the mean wall time reported; otherwise once with time 0.
pub fn evaluate(methods: &[Approximator], test: &Dataset, repeats: usize, timing: bool) -> Result<Vec<ResultRow>> {
    test.validate()?;
    if test.is_empty() {
        return invalid("test set is empty");
    }
    let mut rows = Vec::with_capacity(methods.len());
    for m in methods {
        if let Approximator::Model(c) = m {
            if c.spec.extents() != test.meta.extents.as_slice() {
                return shape(format!("{} runs on {:?}, test grid is {:?}", m.name(), c.spec.extents(), test.meta.extents));
            }
        }
        let reps = if timing { repeats.max(1) } else { 1 };
        let start = Instant::now();
        let mut out = m.predict(&test.inputs)?;
        for _ in 1..reps {
            out = m.predict(&test.inputs)?;
        }
        let test_time = if timing { start.elapsed().as_secs_f64() / reps as f64 } else { 0.0 };
        let (training_time, steps) = match m {
            Approximator::Model(c) => (c.meta.training_time, c.meta.total_steps),
            _ => (0.0, 0),
        };
        rows.push(ResultRow {
            method: m.name(),
            l2_error: mean_l2_error(&out, &test.targets)?,
            nr_params: m.nr_params(),
            training_time,
            test_time,
            done_trainsteps: steps,
        });
    }
    Ok(rows)
}

pub fn rows_to_csv(rows: &[ResultRow]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().delimiter(b';').has_headers(false).from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
    }
    let body = String::from_utf8(w.into_inner().map_err(|e| Error::Format(e.to_string()))?).map_err(|e| Error::Format(e.to_string()))?;
    Ok(format!("{CSV_HEADER}\n{body}"))
}

/// Parses a results table, insisting on the exact header.
pub fn rows_from_csv(text: &str) -> Result<Vec<ResultRow>> {
    let first = text.lines().next().unwrap_or("");
    if first.trim_end_matches('\r') != CSV_HEADER {
        return Err(Error::Format(format!("results header must be {CSV_HEADER:?}, got {first:?}")));
    }
    let mut r = csv::ReaderBuilder::new().delimiter(b';').from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        let row: ResultRow = rec.map_err(|e| Error::Format(e.to_string()))?;
        if !(row.l2_error >= 0.0) {
            return Err(Error::Format(format!("negative or missing error for {}", row.method)));
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<()> {
    super::dataset::write_atomic(path, rows_to_csv(rows)?.as_bytes())
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    rows_from_csv(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::Activation;
    use crate::operators::{FnoOperator, OperatorSpec};
    use crate::rng::RngState;
    use crate::train::checkpoint::TrainingMeta;
    use proptest::prelude::*;

    fn data() -> Dataset {
        let g = |k: f64| GridFunction::from_vec(vec![1.0], vec![8], (0..8).map(|i| (k * i as f64).sin()).collect()).unwrap();
        Dataset::new(vec![g(1.0), g(2.0)], vec![g(1.5), g(0.5)], vec![1.0], vec![8]).unwrap()
    }

    #[test]
    fn exact_table_has_zero_error() {
        let d = data();
        let rows = evaluate(&[Approximator::Table { name: "exact".into(), outputs: d.targets.clone() }], &d, 10, false).unwrap();
        assert_eq!(rows[0].l2_error, 0.0);
        assert_eq!(rows[0].test_time, 0.0);
    }

    #[test]
    fn identical_checkpoints_identical_errors() {
        let spec = OperatorSpec::Fno(FnoOperator::new(vec![8], 3, 1, 2, Activation::Gelu, true).unwrap());
        let p = spec.init(&mut RngState::new(1));
        let ck = Checkpoint::new(spec, p, TrainingMeta { name: "FNO".into(), ..Default::default() }).unwrap();
        let d = data();
        let rows = evaluate(&[Approximator::Model(ck.clone()), Approximator::Model(ck), Approximator::Identity], &d, 1, false).unwrap();
        assert_eq!(rows[0].l2_error, rows[1].l2_error);
        assert!(rows[2].l2_error > 0.0);
    }

    #[test]
    fn header_is_exact() {
        let text = rows_to_csv(&[]).unwrap();
        assert_eq!(text, format!("{CSV_HEADER}\n"));
        assert!(rows_from_csv(&text).unwrap().is_empty());
        assert!(rows_from_csv("Method,L2_error\n").is_err());
    }

    proptest! {
        #[test]
        fn csv_round_trip(rows in proptest::collection::vec(
            ("[A-Za-z][A-Za-z0-9 _-]{0,12}", 0.0f64..1e6, 0usize..1_000_000, 0.0f64..1e4, 0.0f64..1e2, 0usize..100_000),
            0..6,
        )) {
            let rows: Vec<ResultRow> = rows
                .into_iter()
                .map(|(m, e, n, tr, te, s)| ResultRow { method: m, l2_error: e, nr_params: n, training_time: tr, test_time: te, done_trainsteps: s })
                .collect();
            let text = rows_to_csv(&rows).unwrap();
            prop_assert_eq!(rows_from_csv(&text).unwrap(), rows);
        }
    }
}
