use clap::{Args, Parser, Subcommand};
use neuropde::error::{Error, Result};
use neuropde::experiments::{run_bsde, run_kolmogorov, run_pinn_laplace, FitReport};
use neuropde::grid::GridFunction;
use neuropde::rng::RngState;
use neuropde::solvers::grf::grf_sample;
use neuropde::solvers::{solve_operator, Method, SolverConfig};
use neuropde::train::bench::{
    evaluate_and_report, generate_data, load_checkpoints, load_data, methods, save_data, train_models, BenchPaths,
};
use neuropde::train::plot::{sample_svg, scatter_svg};
use neuropde::train::{read_results, rows_to_csv, run_bench, BenchConfig};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "neuropde", version, about = "Operator learning and neural PDE solvers")]
struct Cli {
    /// TOML configuration; built-in desk-scale defaults otherwise.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed of every section.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads for data generation and evaluation.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate training, validation and test sets.
    GenData,
    /// Train the configured models on generated data.
    Train,
    /// Evaluate checkpoints and baselines on the test set.
    Eval,
    /// gen-data, train and eval in one go.
    Bench,
    /// Solve one PDE instance with a random initial value or source.
    Solve(SolveArgs),
    /// Physics-informed network for the Laplace equation on the unit square.
    Pinn(StepsArg),
    /// Deep Kolmogorov regression for the heat equation.
    Kolmogorov(StepsArg),
    /// Deep BSDE for the backward heat equation.
    Bsde(StepsArg),
    /// Redraw figures from a results table.
    Plot(PlotArgs),
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    method: Option<Method>,
    /// Grid points per axis.
    #[arg(long)]
    n: Option<usize>,
    /// Time steps.
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Args)]
struct StepsArg {
    /// Training steps.
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Args)]
struct PlotArgs {
    /// Results table; `<out>/results.csv` by default.
    #[arg(long)]
    results: Option<PathBuf>,
    /// Also draw this many test samples for every checkpoint.
    #[arg(long, default_value_t = 0)]
    samples: usize,
}

fn progress(msg: &str) {
    eprintln!("[neuropde] {msg}");
}

fn load_config(cli: &Cli) -> Result<BenchConfig> {
    let mut cfg = match &cli.config {
        Some(p) => BenchConfig::load(p)?,
        None => BenchConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.set_seed(s);
    }
    Ok(cfg)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn fit_summary(name: &str, r: &FitReport, path: &Path) -> Result<()> {
    write_json(path, r)?;
    println!("{name}: L2 error {:.4e}, relative L2 error {:.4e}, final loss {:.4e}", r.l2_error, r.relative_l2_error, r.final_loss);
    Ok(())
}

fn solve_cmd(cfg: &BenchConfig, args: &SolveArgs, out: &Path) -> Result<()> {
    let pde = cfg.problem.pde()?;
    let s = &cfg.data.solver;
    let solver = SolverConfig {
        method: args.method.unwrap_or(s.method),
        n: args.n.unwrap_or(s.n),
        steps: args.steps.unwrap_or(s.steps),
        dealias: s.dealias,
    };
    solver.validate().map_err(|e| Error::Config(e.to_string()))?;
    let ext = vec![solver.n; pde.dims()];
    let input = grf_sample(&cfg.problem.grf(), &pde.lengths, &ext, &mut RngState::new(cfg.seed))?;
    let u = solve_operator(&pde, &input, &solver)?;
    std::fs::create_dir_all(out)?;
    let mut text = String::from("index;input;solution\n");
    for i in 0..u.len() {
        text.push_str(&format!("{i};{};{}\n", input.data()[i], u.data()[i]));
    }
    std::fs::write(out.join("solution.csv"), text)?;
    if pde.dims() <= 2 {
        let svg = sample_svg(&format!("{} solver, N={}, M={}", solver.method, solver.n, solver.steps), &input, &u, &u)?;
        std::fs::write(out.join("solution.svg"), svg)?;
    }
    let norm = |g: &GridFunction| neuropde::grid::discrete_l2_seminorm(g);
    println!("solved with {}: |input| = {:.6e}, |u(T)| = {:.6e}", solver.method, norm(&input), norm(&u));
    Ok(())
}

fn plot_cmd(cfg: &BenchConfig, args: &PlotArgs, out: &Path) -> Result<()> {
    let paths = BenchPaths::new(out);
    let results = args.results.clone().unwrap_or_else(|| paths.results());
    let rows = read_results(&results)?;
    let p = paths.plot("error_scatter");
    std::fs::create_dir_all(p.parent().unwrap())?;
    std::fs::write(&p, scatter_svg(&rows))?;
    if args.samples > 0 {
        let [_, _, test] = load_data(&paths)?;
        let ms = methods(cfg, load_checkpoints(cfg, &paths)?)?;
        let mut rng = RngState::new(cfg.seed).split(3);
        for s in 0..args.samples {
            let i = rng.next_index(test.len());
            for m in &ms {
                let y = m.predict(std::slice::from_ref(&test.inputs[i]))?.remove(0);
                let svg = sample_svg(&format!("{}, test sample {i}", m.name()), &test.inputs[i], &test.targets[i], &y)?;
                std::fs::write(paths.plot(&format!("{}_sample_{s}", m.name())), svg)?;
            }
        }
    }
    println!("wrote {}", p.display());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let mut cfg = load_config(cli)?;
    let out = cli.out.as_path();
    let paths = BenchPaths::new(out);
    match &cli.cmd {
        Cmd::GenData => {
            cfg.validate()?;
            save_data(&paths, &generate_data(&cfg)?)?;
            println!("wrote datasets to {}", out.join("data").display());
        }
        Cmd::Train => {
            cfg.validate()?;
            let [tr, val, _] = load_data(&paths)?;
            train_models(&cfg, &paths, &tr, &val, &progress)?;
        }
        Cmd::Eval => {
            cfg.validate()?;
            let [_, _, test] = load_data(&paths)?;
            let rows = evaluate_and_report(&cfg, &paths, load_checkpoints(&cfg, &paths)?, &test)?;
            print!("{}", rows_to_csv(&rows)?);
        }
        Cmd::Bench => {
            let rows = run_bench(&cfg, out, &progress)?;
            print!("{}", rows_to_csv(&rows)?);
        }
        Cmd::Solve(a) => solve_cmd(&cfg, a, out)?,
        Cmd::Pinn(a) => {
            cfg.pinn.steps = a.steps.unwrap_or(cfg.pinn.steps);
            fit_summary("pinn", &run_pinn_laplace(&cfg.pinn)?, &out.join("pinn.json"))?;
        }
        Cmd::Kolmogorov(a) => {
            cfg.kolmogorov.steps = a.steps.unwrap_or(cfg.kolmogorov.steps);
            fit_summary("kolmogorov", &run_kolmogorov(&cfg.kolmogorov)?, &out.join("kolmogorov.json"))?;
        }
        Cmd::Bsde(a) => {
            cfg.bsde.steps = a.steps.unwrap_or(cfg.bsde.steps);
            fit_summary("bsde", &run_bsde(&cfg.bsde)?, &out.join("bsde.json"))?;
        }
        Cmd::Plot(a) => plot_cmd(&cfg, a, out)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Numerical(_) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}
