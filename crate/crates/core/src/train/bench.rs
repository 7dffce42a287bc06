//! The gen-data → train → eval pipeline behind the `bench` subcommand, with
//! its TOML configuration.

use super::checkpoint::Checkpoint;
use super::dataset::{dataset_generate, write_atomic, Dataset};
use super::plot::{sample_svg, scatter_svg};
use super::results::{evaluate, write_results, Approximator, ResultRow};
use super::trainer::{train, LogEntry, TrainConfig};
use crate::activation::Activation;
use crate::ann::MlpArchitecture;
use crate::error::{invalid, Error, Result};
use crate::experiments::{BsdeConfig, KolmogorovConfig, PinnConfig};
use crate::operators::{DeepOnetOperator, EncDecOperator, FcnnOperator, FnoOperator, IknoOperator, OperatorSpec, PcnnOperator};
use crate::rng::RngState;
use crate::solvers::grf::GrfSpec;
use crate::solvers::{Method, SemilinearPde, SolverConfig};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PdeKind {
    Burgers,
    AllenCahn,
    ReactionDiffusion,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub pde: PdeKind,
    pub dim: usize,
    /// Defaults to the prior that belongs to `pde`.
    pub grf: Option<GrfSpec>,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        ProblemConfig { pde: PdeKind::Burgers, dim: 1, grf: None }
    }
}

impl ProblemConfig {
    pub fn pde(&self) -> Result<SemilinearPde> {
        match (self.pde, self.dim) {
            (PdeKind::Burgers, 1) => Ok(SemilinearPde::burgers()),
            (PdeKind::ReactionDiffusion, 1) => Ok(SemilinearPde::reaction_diffusion()),
            (PdeKind::AllenCahn, d @ 1..=3) => Ok(SemilinearPde::allen_cahn(d)),
            (k, d) => Err(Error::Config(format!("{k:?} is not available in dimension {d}"))),
        }
    }

    pub fn grf(&self) -> GrfSpec {
        self.grf.unwrap_or(match self.pde {
            PdeKind::Burgers => GrfSpec::burgers(),
            PdeKind::AllenCahn => GrfSpec::allen_cahn(),
            PdeKind::ReactionDiffusion => GrfSpec::reaction_diffusion(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    /// Model grid points per axis.
    pub n: usize,
    /// Reference solver; its grid must be a multiple of `n`.
    pub solver: SolverConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            train: 4096,
            validation: 512,
            test: 512,
            n: 64,
            solver: SolverConfig { method: Method::Spectral, n: 128, steps: 1000, dealias: true },
        }
    }
}

/// A classical solver run on the model grid as a comparison method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    pub method: Method,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub repeats: usize,
    /// Measure wall-clock times; off writes zeros so outputs are reproducible.
    pub timing: bool,
    pub identity: bool,
    pub baselines: Vec<BaselineConfig>,
    /// Test samples drawn as example plots.
    pub sample_plots: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            repeats: 10,
            timing: false,
            identity: true,
            baselines: vec![
                BaselineConfig { method: Method::Fdm, steps: 100 },
                BaselineConfig { method: Method::Fem, steps: 100 },
                BaselineConfig { method: Method::Spectral, steps: 100 },
            ],
            sample_plots: 1,
        }
    }
}

fn gelu() -> Activation {
    Activation::Gelu
}

fn yes() -> bool {
    true
}

/// Architecture in terms of the grid-independent hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ArchConfig {
    Fcnn { hidden: Vec<usize> },
    Pcnn { channels: Vec<usize>, half_width: usize },
    EncDec { channels: Vec<usize>, kernel: usize },
    Fno { width: usize, layers: usize, modes: usize, #[serde(default = "yes")] real: bool },
    DeepOnet { branch: Vec<usize>, trunk: Vec<usize>, latent: usize },
    Ikno { width: usize, layers: usize, radius: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    pub arch: ArchConfig,
    #[serde(default = "gelu")]
    pub activation: Activation,
    /// Overrides the shared learning rate.
    #[serde(default)]
    pub lr: Option<f64>,
}

impl ModelConfig {
    pub fn new(name: &str, arch: ArchConfig) -> Self {
        ModelConfig { name: name.into(), arch, activation: Activation::Gelu, lr: None }
    }

    pub fn build(&self, extents: &[usize]) -> Result<OperatorSpec> {
        let e = extents.to_vec();
        let d = extents.len();
        let a = self.activation;
        let mlp = |w: Vec<usize>| MlpArchitecture::new(w, a);
        Ok(match &self.arch {
            ArchConfig::Fcnn { hidden } => OperatorSpec::Fcnn(FcnnOperator::new(e, hidden.clone(), a)?),
            ArchConfig::Pcnn { channels, half_width } => {
                let mut ch = vec![1];
                ch.extend_from_slice(channels);
                ch.push(1);
                let hw = vec![vec![*half_width; d]; ch.len() - 1];
                OperatorSpec::Pcnn(PcnnOperator::new(e, ch, hw, a)?)
            }
            ArchConfig::EncDec { channels, kernel } => {
                let mut ch = vec![1];
                ch.extend_from_slice(channels);
                let k = vec![vec![*kernel; d]; ch.len() - 1];
                OperatorSpec::EncDec(EncDecOperator::new(e, ch, k, a)?)
            }
            ArchConfig::Fno { width, layers, modes, real } => OperatorSpec::Fno(FnoOperator::new(e, *width, *layers, *modes, a, *real)?),
            ArchConfig::DeepOnet { branch, trunk, latent } => {
                let p: usize = extents.iter().product();
                let mut b = vec![p];
                b.extend_from_slice(branch);
                b.push(*latent);
                let mut t = vec![d];
                t.extend_from_slice(trunk);
                t.push(*latent);
                OperatorSpec::DeepOnet(DeepOnetOperator::new(e, mlp(b)?, mlp(t)?)?)
            }
            ArchConfig::Ikno { width, layers, radius } => OperatorSpec::Ikno(IknoOperator::new(e, *width, *layers, *radius, a)?),
        })
    }
}

/// The five architecture families at desk scale.
pub fn default_models() -> Vec<ModelConfig> {
    vec![
        ModelConfig::new("ANN", ArchConfig::Fcnn { hidden: vec![128, 128] }),
        ModelConfig::new("Periodic CNN", ArchConfig::Pcnn { channels: vec![16, 16, 16], half_width: 8 }),
        ModelConfig::new("Enc.-Dec. CNN", ArchConfig::EncDec { channels: vec![16, 32, 64, 64, 64, 64], kernel: 2 }),
        ModelConfig::new("FNO", ArchConfig::Fno { width: 16, layers: 3, modes: 12, real: true }),
        ModelConfig::new("DeepONet", ArchConfig::DeepOnet { branch: vec![128, 128, 128], trunk: vec![64, 64, 64], latent: 64 }),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub seed: u64,
    pub problem: ProblemConfig,
    pub data: DataConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub models: Vec<ModelConfig>,
    pub kolmogorov: KolmogorovConfig,
    pub pinn: PinnConfig,
    pub bsde: BsdeConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            seed: 0,
            problem: ProblemConfig::default(),
            data: DataConfig::default(),
            train: TrainConfig { lr: 3e-3, ..TrainConfig::default() },
            eval: EvalConfig::default(),
            models: default_models(),
            kolmogorov: KolmogorovConfig::default(),
            pinn: PinnConfig::default(),
            bsde: BsdeConfig::default(),
        }
    }
}

impl BenchConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut c: BenchConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.set_seed(c.seed);
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        BenchConfig::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |r: Result<()>| r.map_err(|e| Error::Config(e.to_string()));
        self.problem.pde()?;
        cfg(self.problem.grf().validate())?;
        cfg(self.data.solver.validate())?;
        if self.data.n == 0 || self.data.solver.n % self.data.n != 0 {
            return Err(Error::Config(format!("model grid {} must divide solver grid {}", self.data.n, self.data.solver.n)));
        }
        cfg(self.train.validate())?;
        let ext = self.extents();
        let mut names = std::collections::BTreeSet::new();
        for m in &self.models {
            if !names.insert(file_stem(&m.name)) {
                return Err(Error::Config(format!("duplicate model name {:?}", m.name)));
            }
            cfg(m.build(&ext).map(|_| ()))?;
        }
        Ok(())
    }

    /// One seed drives every section.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.train.seed = seed;
        self.kolmogorov.seed = seed;
        self.pinn.seed = seed;
        self.bsde.seed = seed;
    }

    pub fn extents(&self) -> Vec<usize> {
        vec![self.data.n; self.problem.dim]
    }

    fn train_config(&self, m: &ModelConfig) -> TrainConfig {
        TrainConfig { lr: m.lr.unwrap_or(self.train.lr), ..self.train.clone() }
    }
}

/// File-system layout of a bench directory.
#[derive(Clone, Debug)]
pub struct BenchPaths {
    pub root: PathBuf,
}

impl BenchPaths {
    pub fn new(root: &Path) -> Self {
        BenchPaths { root: root.to_path_buf() }
    }

    pub fn dataset(&self, split: &str) -> PathBuf {
        self.root.join("data").join(format!("{split}.nopds"))
    }

    pub fn checkpoint(&self, name: &str) -> PathBuf {
        self.root.join("checkpoints").join(format!("{}.nopck", file_stem(name)))
    }

    pub fn log(&self, name: &str) -> PathBuf {
        self.root.join("logs").join(format!("{}.csv", file_stem(name)))
    }

    pub fn results(&self) -> PathBuf {
        self.root.join("results.csv")
    }

    pub fn plot(&self, name: &str) -> PathBuf {
        self.root.join("plots").join(format!("{}.svg", file_stem(name)))
    }
}

/// Lowercase ASCII with runs of other characters collapsed to `_`.
pub fn file_stem(name: &str) -> String {
    let mut s = String::new();
    for c in name.chars() {
        if c.is_ascii_alphanumeric() {
            s.push(c.to_ascii_lowercase());
        } else if !s.ends_with('_') {
            s.push('_');
        }
    }
    let t = s.trim_matches('_');
    if t.is_empty() {
        "model".into()
    } else {
        t.into()
    }
}

pub const SPLITS: [&str; 3] = ["train", "validation", "test"];

/// Training, validation and test sets from independent seeds derived from
/// `cfg.seed`.
pub fn generate_data(cfg: &BenchConfig) -> Result<[Dataset; 3]> {
    let pde = cfg.problem.pde()?;
    let grf = cfg.problem.grf();
    let counts = [cfg.data.train, cfg.data.validation, cfg.data.test];
    let root = RngState::new(cfg.seed);
    let mut out = Vec::with_capacity(3);
    for (k, &count) in counts.iter().enumerate() {
        let seed = root.split(k as u64).next_u64();
        out.push(dataset_generate(&pde, &grf, &cfg.data.solver, cfg.data.n, count, seed)?);
    }
    Ok(out.try_into().unwrap())
}

pub fn save_data(paths: &BenchPaths, data: &[Dataset; 3]) -> Result<()> {
    for (split, d) in SPLITS.iter().zip(data) {
        d.save(&paths.dataset(split))?;
    }
    Ok(())
}

pub fn load_data(paths: &BenchPaths) -> Result<[Dataset; 3]> {
    let v = SPLITS.iter().map(|s| Dataset::load(&paths.dataset(s))).collect::<Result<Vec<_>>>()?;
    Ok(v.try_into().unwrap())
}

pub fn log_csv(log: &[LogEntry]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().delimiter(b';').from_writer(Vec::new());
    for e in log {
        w.serialize(e).map_err(|e| Error::Format(e.to_string()))?;
    }
    String::from_utf8(w.into_inner().map_err(|e| Error::Format(e.to_string()))?).map_err(|e| Error::Format(e.to_string()))
}

/// Trains every configured model and writes checkpoints and logs.
pub fn train_models(cfg: &BenchConfig, paths: &BenchPaths, train_set: &Dataset, val: &Dataset, progress: &dyn Fn(&str)) -> Result<Vec<Checkpoint>> {
    let ext = cfg.extents();
    let mut out = Vec::with_capacity(cfg.models.len());
    for m in &cfg.models {
        let spec = m.build(&ext)?;
        progress(&format!("training {} ({} parameters)", m.name, spec.param_count()));
        let res = train(&m.name, &spec, train_set, val, &cfg.train_config(m))?;
        res.checkpoint.save(&paths.checkpoint(&m.name))?;
        write_atomic(&paths.log(&m.name), log_csv(&res.log)?.as_bytes())?;
        progress(&format!("{}: best validation error {:.4e} after {} steps", m.name, res.checkpoint.meta.best_validation, res.checkpoint.meta.total_steps));
        out.push(res.checkpoint);
    }
    Ok(out)
}

pub fn load_checkpoints(cfg: &BenchConfig, paths: &BenchPaths) -> Result<Vec<Checkpoint>> {
    cfg.models.iter().map(|m| Checkpoint::load(&paths.checkpoint(&m.name))).collect()
}

/// Trained models followed by the configured baselines.
pub fn methods(cfg: &BenchConfig, checkpoints: Vec<Checkpoint>) -> Result<Vec<Approximator>> {
    let pde = cfg.problem.pde()?;
    let mut m: Vec<Approximator> = checkpoints.into_iter().map(Approximator::Model).collect();
    for b in &cfg.eval.baselines {
        let config = SolverConfig::new(b.method, cfg.data.n, b.steps)?;
        let name = format!("{} (N={}, M={})", method_label(b.method), cfg.data.n, b.steps);
        m.push(Approximator::Solver { name, pde: pde.clone(), config });
    }
    if cfg.eval.identity {
        m.push(Approximator::Identity);
    }
    Ok(m)
}

fn method_label(m: Method) -> &'static str {
    match m {
        Method::Spectral => "Spectral",
        Method::Fdm => "FDM",
        Method::Fem => "FEM",
    }
}

/// Results table, scatter plot and example sample plots.
pub fn evaluate_and_report(cfg: &BenchConfig, paths: &BenchPaths, checkpoints: Vec<Checkpoint>, test: &Dataset) -> Result<Vec<ResultRow>> {
    let methods = methods(cfg, checkpoints)?;
    let rows = evaluate(&methods, test, cfg.eval.repeats, cfg.eval.timing)?;
    write_results(&paths.results(), &rows)?;
    write_atomic(&paths.plot("error_scatter"), scatter_svg(&rows).as_bytes())?;
    if cfg.problem.dim <= 2 && !test.is_empty() {
        let mut rng = RngState::new(cfg.seed).split(3);
        for s in 0..cfg.eval.sample_plots {
            let i = rng.next_index(test.len());
            for m in &methods {
                let out = m.predict(std::slice::from_ref(&test.inputs[i]))?.remove(0);
                let title = format!("{}, test sample {i}", m.name());
                let svg = sample_svg(&title, &test.inputs[i], &test.targets[i], &out)?;
                write_atomic(&paths.plot(&format!("{}_sample_{s}", m.name())), svg.as_bytes())?;
            }
        }
    }
    Ok(rows)
}

/// Everything: data, training, evaluation, figures.
pub fn run_bench(cfg: &BenchConfig, out: &Path, progress: &dyn Fn(&str)) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    if cfg.data.train == 0 || cfg.data.validation == 0 || cfg.data.test == 0 {
        return invalid("bench needs nonempty training, validation and test sets");
    }
    let paths = BenchPaths::new(out);
    progress("generating data");
    let data = generate_data(cfg)?;
    save_data(&paths, &data)?;
    let [tr, val, test] = data;
    let cks = train_models(cfg, &paths, &tr, &val, progress)?;
    progress("evaluating");
    evaluate_and_report(cfg, &paths, cks, &test)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips_through_toml() {
        let c = BenchConfig::default();
        c.validate().unwrap();
        let text = toml::to_string(&c).unwrap();
        assert_eq!(BenchConfig::from_toml(&text).unwrap(), c);
    }

    #[test]
    fn partial_config_fills_defaults() {
        let c = BenchConfig::from_toml(
            r#"
            seed = 4
            [problem]
            pde = "reaction-diffusion"
            [data]
            train = 8
            n = 32
            [[models]]
            name = "FNO"
            arch = { kind = "fno", width = 4, layers = 1, modes = 4 }
            "#,
        )
        .unwrap();
        assert_eq!(c.seed, 4);
        assert_eq!(c.data.validation, 512);
        assert_eq!(c.models.len(), 1);
        assert!(matches!(c.models[0].arch, ArchConfig::Fno { real: true, .. }));
    }

    #[test]
    fn config_errors() {
        assert!(matches!(BenchConfig::from_toml("sed = 1"), Err(Error::Config(_))));
        assert!(matches!(BenchConfig::from_toml("[data]\nn = 48"), Err(Error::Config(_))));
        assert!(matches!(BenchConfig::from_toml("[problem]\npde = \"burgers\"\ndim = 2"), Err(Error::Config(_))));
        let dup = "[[models]]\nname = \"a\"\narch = { kind = \"fcnn\", hidden = [4] }\n[[models]]\nname = \"A\"\narch = { kind = \"fcnn\", hidden = [4] }";
        assert!(matches!(BenchConfig::from_toml(dup), Err(Error::Config(_))));
    }

    #[test]
    fn stems() {
        assert_eq!(file_stem("Enc.-Dec. CNN"), "enc_dec_cnn");
        assert_eq!(file_stem("FNO"), "fno");
        assert_eq!(file_stem("??"), "model");
    }

    #[test]
    fn default_models_build() {
        for m in default_models() {
            m.build(&[64]).unwrap();
        }
    }
}
