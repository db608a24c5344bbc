//! End-to-end pipeline driver: ingest -> build -> solve (vqe or vqec) ->
//! isqr -> baseline / frontier -> report. Each subcommand reads prior
//! artifacts from the run directory, writes its own, and appends a manifest
//! record. All randomness derives from the single `--seed`.

mod config;
mod manifest;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use config::ProblemConfig;
use manifest::{FileRecord, ManifestEntry};
use qdpo_core::analytics::{
    efficient_frontier, financial_scores, normalize_strategy, pct_below_offset, random_baseline,
    simulated_annealing, FinancialReport, EXHAUSTIVE_CAP,
};
use qdpo_core::engine::{vqe_solve, vqec_solve, ChainMode, DeConfig, RunHistory};
use qdpo_core::isqr::{isqr_run, IsqrConfig};
use qdpo_core::market::MarketTensors;
use qdpo_core::model::{
    bits_to_string, build_qubo, build_single_time_qubo, encode_weights, qubo_to_ising, DpoProblem,
    QuadraticForm,
};
use qdpo_core::sim::{build_ansatz, AnsatzScheme, SampleSet};
use qdpo_core::util::derive_seed;

#[derive(Parser)]
#[command(
    name = "qdpo",
    version,
    about = "Dynamic portfolio optimization via QUBO/Ising, simulated variational solves, and configuration recovery"
)]
struct Cli {
    /// Problem configuration file.
    #[arg(long, global = true, default_value = "problem.json")]
    config: PathBuf,
    /// Run directory; every artifact lands here.
    #[arg(long, global = true, default_value = "run")]
    out: PathBuf,
    /// Master seed; each random stage derives its own stream from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (QDPO_THREADS as fallback; default all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct SolveArgs {
    /// Differential-evolution population size.
    #[arg(long, default_value_t = 28)]
    population: usize,
    /// Generations before the first convergence check.
    #[arg(long, default_value_t = 20)]
    generations: usize,
    /// Relative mean-cost change that counts as converged.
    #[arg(long, default_value_t = 0.025)]
    conv_tol: f64,
    /// Measurement shots drawn from the final state.
    #[arg(long, default_value_t = 4096)]
    shots: u64,
    /// Per-bit readout flip probability.
    #[arg(long, default_value_t = 0.0)]
    noise_p: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum, Default)]
enum ChainArg {
    #[default]
    Normalized,
    Raw,
}

impl From<ChainArg> for ChainMode {
    fn from(value: ChainArg) -> Self {
        match value {
            ChainArg::Normalized => ChainMode::Normalized,
            ChainArg::Raw => ChainMode::Raw,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Ingest prices and write the derived market tensors.
    Ingest,
    /// Build the problem instance and its QUBO/Ising forms.
    Build,
    /// Full-horizon variational solve.
    SolveVqe {
        #[command(flatten)]
        solve: SolveArgs,
    },
    /// Time-chained variational solve, one rebalance step at a time.
    SolveVqec {
        #[command(flatten)]
        solve: SolveArgs,
        /// What flows into the next step's transaction term.
        #[arg(long, value_enum, default_value_t)]
        chain: ChainArg,
    },
    /// Configuration-recovery post-processing of a sample set.
    Isqr {
        /// Sample CSV to correct (default: samples.csv in the run directory).
        #[arg(long)]
        samples: Option<PathBuf>,
        /// Objective form to evaluate against (default: qubo.json).
        #[arg(long)]
        qubo: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        batches: usize,
        #[arg(long = "theta-f", default_value_t = 0.2)]
        theta_f: f64,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long, default_value_t = 20)]
        max_iterations: usize,
        #[arg(long, default_value_t = 0.025)]
        conv_tol: f64,
    },
    /// Uniform-random cost baseline and its offset.
    Baseline {
        #[arg(long, default_value_t = 1_000_000)]
        draws: u64,
    },
    /// Ideal efficient frontier for each time step.
    Frontier {
        #[arg(long, default_value_t = 33)]
        points: usize,
    },
    /// Aggregate minimum costs, offset fractions, and financial scores.
    Report {
        /// Annealing budget for the classical stand-in row.
        #[arg(long, default_value_t = 10_000)]
        sweeps: u64,
        /// Baseline draws when baseline.json is absent.
        #[arg(long, default_value_t = 1_000_000)]
        draws: u64,
    },
}

struct Run {
    config_path: PathBuf,
    config: ProblemConfig,
    out: PathBuf,
    seed: u64,
    files: Vec<FileRecord>,
}

impl Run {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.out.join(name);
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.files.push(FileRecord {
            path: name.to_string(),
            sha256: manifest::sha256_hex(bytes),
        });
        Ok(())
    }

    fn read(&self, name: &str, produced_by: &str) -> Result<String> {
        let path = self.out.join(name);
        std::fs::read_to_string(&path).with_context(|| {
            format!(
                "reading {} (run `qdpo {produced_by}` into this directory first)",
                path.display()
            )
        })
    }

    fn tensors(&self) -> Result<MarketTensors> {
        let text = self.read("tensors.json", "ingest")?;
        serde_json::from_str(&text).context("parsing tensors.json")
    }

    fn problem(&self) -> Result<DpoProblem> {
        let text = self.read("problem.json", "build")?;
        serde_json::from_str(&text).context("parsing problem.json")
    }

    fn qubo(&self, path: Option<&Path>) -> Result<QuadraticForm> {
        let text = match path {
            Some(p) => {
                std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?
            }
            None => self.read("qubo.json", "build")?,
        };
        Ok(QuadraticForm::from_json(&text)?)
    }

    fn samples(&self, path: Option<&Path>, default_name: &str) -> Result<SampleSet> {
        let resolved = match path {
            Some(p) => p.to_path_buf(),
            None => self.out.join(default_name),
        };
        let file = std::fs::File::open(&resolved)
            .with_context(|| format!("reading {}", resolved.display()))?;
        Ok(SampleSet::read_csv(std::io::BufReader::new(file))?)
    }
}

fn history_csv(history: &RunHistory) -> Vec<u8> {
    let mut buf = Vec::new();
    history.write_csv(&mut buf).expect("in-memory write");
    buf
}

fn theta_json(history: &RunHistory) -> Vec<u8> {
    let value = serde_json::json!({
        "theta": history.best_params,
        "best_cost": history.best_cost,
        "converged": history.converged,
        "generations_used": history.generations_used,
        "final_delta_mean": history.final_delta_mean,
    });
    serde_json::to_string_pretty(&value)
        .expect("serializable")
        .into_bytes()
}

fn samples_csv(samples: &SampleSet) -> Vec<u8> {
    let mut buf = Vec::new();
    samples.write_csv(&mut buf).expect("in-memory write");
    buf
}

fn de_config(solve: &SolveArgs, seed: u64) -> DeConfig {
    let defaults = DeConfig::default();
    DeConfig {
        population: solve.population,
        base_generations: solve.generations,
        hard_cap: solve.generations + defaults.extension,
        conv_tol: solve.conv_tol,
        seed,
        ..defaults
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct BaselineSummary {
    draws: u64,
    offset: f64,
    min_cost: f64,
    pct_below_offset: f64,
}

#[derive(Debug, Serialize)]
struct ReportRow {
    solver: String,
    min_cost: f64,
    pct_below_offset: Option<f64>,
}

#[derive(Debug, Serialize)]
struct FinancialBlock {
    solver: String,
    source_bits: String,
    report: Option<FinancialReport>,
    error: Option<String>,
}

fn cmd_ingest(run: &mut Run) -> Result<()> {
    let tensors = run.config.load_tensors(&run.config_path)?;
    let text = serde_json::to_string_pretty(&tensors)?;
    run.write("tensors.json", text.as_bytes())?;
    Ok(())
}

fn cmd_build(run: &mut Run) -> Result<()> {
    let tensors = run.tensors()?;
    let problem = run.config.problem_from_tensors(tensors)?;
    run.write(
        "problem.json",
        serde_json::to_string_pretty(&problem)?.as_bytes(),
    )?;
    let qubo = build_qubo(&problem)?;
    run.write("qubo.json", qubo.to_json().as_bytes())?;
    let ising = qubo_to_ising(&qubo);
    run.write("ising.json", ising.to_json().as_bytes())?;
    Ok(())
}

fn cmd_solve_vqe(run: &mut Run, solve: &SolveArgs) -> Result<()> {
    let problem = run.problem()?;
    let spec = build_ansatz(problem.dims(), AnsatzScheme::Vqe)?;
    let de = de_config(solve, derive_seed(run.seed, "vqe-de"));
    let (samples, history) = vqe_solve(&problem, &spec, &de, solve.shots, solve.noise_p)?;
    run.write("ansatz.json", spec.to_json().as_bytes())?;
    run.write("history.csv", &history_csv(&history))?;
    run.write("theta.json", &theta_json(&history))?;
    run.write("samples.csv", &samples_csv(&samples))?;
    Ok(())
}

fn cmd_solve_vqec(run: &mut Run, solve: &SolveArgs, chain: ChainMode) -> Result<()> {
    let problem = run.problem()?;
    let de = de_config(solve, derive_seed(run.seed, "vqec-de"));
    let outcome = vqec_solve(&problem, &de, solve.shots, solve.noise_p, chain)?;

    run.write(
        "strategy.json",
        serde_json::to_string_pretty(&outcome.strategy)?.as_bytes(),
    )?;
    let mut prev: Vec<f64> = problem.omega0.clone();
    for t in 0..problem.n_t() {
        let objective = build_single_time_qubo(&problem, t, &prev)?;
        run.write(
            &format!("objective_t{t}.json"),
            objective.to_json().as_bytes(),
        )?;
        run.write(
            &format!("history_t{t}.csv"),
            &history_csv(&outcome.histories[t]),
        )?;
        run.write(
            &format!("theta_t{t}.json"),
            &theta_json(&outcome.histories[t]),
        )?;
        run.write(
            &format!("samples_t{t}.csv"),
            &samples_csv(&outcome.per_step_samples[t]),
        )?;
        prev = outcome.strategy.weights.row(t).to_vec();
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_isqr(
    run: &mut Run,
    samples_path: Option<&Path>,
    qubo_path: Option<&Path>,
    batches: usize,
    theta_f: f64,
    delta: f64,
    max_iterations: usize,
    conv_tol: f64,
) -> Result<()> {
    let problem = run.problem()?;
    let qubo = run.qubo(qubo_path)?;
    let samples = run.samples(samples_path, "samples.csv")?;
    let cfg = IsqrConfig {
        n_batches: batches,
        batch_size: None,
        filling_threshold: theta_f,
        leak_slope: delta,
        max_iterations,
        conv_tol,
        seed: derive_seed(run.seed, "isqr"),
    };
    let (corrected, trace) = isqr_run(&samples, &qubo, &cfg, &problem)?;
    run.write("corrected.csv", &samples_csv(&corrected))?;
    let mut buf = String::from("iteration,min_cost,mean_cost\n");
    for row in &trace {
        buf.push_str(&format!(
            "{},{},{}\n",
            row.iteration, row.min_cost, row.mean_cost
        ));
    }
    run.write("trace.csv", buf.as_bytes())?;
    Ok(())
}

fn cmd_baseline(run: &mut Run, draws: u64) -> Result<()> {
    let qubo = run.qubo(None)?;
    let dist = random_baseline(&qubo, draws, derive_seed(run.seed, "baseline"));
    let summary = BaselineSummary {
        draws,
        offset: dist.offset,
        min_cost: dist.min_cost,
        pct_below_offset: dist.pct_below_offset,
    };
    run.write(
        "baseline.json",
        serde_json::to_string_pretty(&summary)?.as_bytes(),
    )?;
    // cost,count rows over the exact evaluated costs.
    let mut buf = String::from("cost,count\n");
    let mut iter = dist.costs.iter();
    if let Some(&first) = iter.next() {
        let mut current = first;
        let mut count = 1u64;
        for &cost in iter {
            if cost == current {
                count += 1;
            } else {
                buf.push_str(&format!("{current},{count}\n"));
                current = cost;
                count = 1;
            }
        }
        buf.push_str(&format!("{current},{count}\n"));
    }
    run.write("baseline.csv", buf.as_bytes())?;
    Ok(())
}

fn cmd_frontier(run: &mut Run, points: usize) -> Result<()> {
    let problem = run.problem()?;
    for t in 0..problem.n_t() {
        let mu: Vec<f64> = problem.tensors.mu.row(t).to_vec();
        let frontier = efficient_frontier(
            &mu,
            &problem.tensors.sigma[t],
            &problem.m,
            &problem.b,
            points,
        )?;
        let mut buf = String::from("volatility,return\n");
        for point in &frontier {
            buf.push_str(&format!(
                "{},{}\n",
                point.volatility, point.expected_return
            ));
        }
        run.write(&format!("frontier_t{t}.csv"), buf.as_bytes())?;
    }
    Ok(())
}

fn financial_block(solver: &str, bits: &[u8], problem: &DpoProblem, rfr: f64) -> FinancialBlock {
    let outcome = encode_weights(bits, problem)
        .map_err(anyhow::Error::from)
        .and_then(|raw| Ok(normalize_strategy(&raw, problem)?))
        .and_then(|normalized| Ok(financial_scores(&normalized, problem, rfr)?));
    match outcome {
        Ok(report) => FinancialBlock {
            solver: solver.to_string(),
            source_bits: bits_to_string(bits),
            report: Some(report),
            error: None,
        },
        Err(err) => FinancialBlock {
            solver: solver.to_string(),
            source_bits: bits_to_string(bits),
            report: None,
            error: Some(format!("{err:#}")),
        },
    }
}

fn cmd_report(run: &mut Run, sweeps: u64, draws: u64) -> Result<()> {
    let problem = run.problem()?;
    let qubo = run.qubo(None)?;
    let samples = run.samples(None, "samples.csv")?;
    let corrected = if run.out.join("corrected.csv").exists() {
        Some(run.samples(None, "corrected.csv")?)
    } else {
        None
    };

    let baseline = if run.out.join("baseline.json").exists() {
        serde_json::from_str::<BaselineSummary>(&run.read("baseline.json", "baseline")?)
            .context("parsing baseline.json")?
    } else {
        let dist = random_baseline(&qubo, draws, derive_seed(run.seed, "baseline"));
        BaselineSummary {
            draws,
            offset: dist.offset,
            min_cost: dist.min_cost,
            pct_below_offset: dist.pct_below_offset,
        }
    };

    let mut rows = Vec::new();
    let mut financial = Vec::new();

    let (raw_best, raw_min) = samples.min_cost(&qubo).context("samples.csv is empty")?;
    rows.push(ReportRow {
        solver: "raw".into(),
        min_cost: raw_min,
        pct_below_offset: Some(pct_below_offset(&samples, &qubo, baseline.offset)?),
    });
    financial.push(financial_block("raw", &raw_best, &problem, run.config.rfr));

    if let Some(corrected) = &corrected {
        let (best, min) = corrected.min_cost(&qubo).context("corrected.csv is empty")?;
        rows.push(ReportRow {
            solver: "isqr".into(),
            min_cost: min,
            pct_below_offset: Some(pct_below_offset(corrected, &qubo, baseline.offset)?),
        });
        financial.push(financial_block("isqr", &best, &problem, run.config.rfr));
    }

    rows.push(ReportRow {
        solver: "random".into(),
        min_cost: baseline.min_cost,
        pct_below_offset: Some(baseline.pct_below_offset),
    });

    let (sa_bits, sa_cost) = simulated_annealing(&qubo, sweeps, derive_seed(run.seed, "report-sa"))?;
    rows.push(ReportRow {
        solver: "sa".into(),
        min_cost: sa_cost,
        pct_below_offset: None,
    });
    financial.push(financial_block("sa", &sa_bits, &problem, run.config.rfr));

    if qubo.n_vars <= EXHAUSTIVE_CAP {
        let (bits, cost) = qdpo_core::analytics::exhaustive_solve(&qubo)?;
        rows.push(ReportRow {
            solver: "exhaustive".into(),
            min_cost: cost,
            pct_below_offset: None,
        });
        financial.push(financial_block(
            "exhaustive",
            &bits,
            &problem,
            run.config.rfr,
        ));
    }

    let value = serde_json::json!({
        "offset": baseline.offset,
        "rows": rows,
        "financial": financial,
    });
    run.write(
        "report.json",
        serde_json::to_string_pretty(&value)?.as_bytes(),
    )?;

    let mut csv = String::from("solver,min_cost,pct_below_offset\n");
    for row in &rows {
        let pct = row
            .pct_below_offset
            .map(|p| p.to_string())
            .unwrap_or_default();
        csv.push_str(&format!("{},{},{}\n", row.solver, row.min_cost, pct));
    }
    run.write("report.csv", csv.as_bytes())?;
    Ok(())
}

fn init_threads(requested: Option<usize>) {
    let from_env = std::env::var("QDPO_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok());
    if let Some(threads) = requested.or(from_env) {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
}

fn subcommand_name(command: &Command) -> &'static str {
    match command {
        Command::Ingest => "ingest",
        Command::Build => "build",
        Command::SolveVqe { .. } => "solve-vqe",
        Command::SolveVqec { .. } => "solve-vqec",
        Command::Isqr { .. } => "isqr",
        Command::Baseline { .. } => "baseline",
        Command::Frontier { .. } => "frontier",
        Command::Report { .. } => "report",
    }
}

fn run(cli: Cli) -> Result<()> {
    let started_at = chrono::Utc::now().to_rfc3339();
    std::fs::create_dir_all(&cli.out)
        .with_context(|| format!("creating run directory {}", cli.out.display()))?;
    let config = ProblemConfig::load(&cli.config)?;
    if config.assets.is_empty() {
        bail!("config lists no assets");
    }
    let mut run = Run {
        config_path: cli.config.clone(),
        config,
        out: cli.out.clone(),
        seed: cli.seed,
        files: Vec::new(),
    };

    match &cli.command {
        Command::Ingest => cmd_ingest(&mut run)?,
        Command::Build => cmd_build(&mut run)?,
        Command::SolveVqe { solve } => cmd_solve_vqe(&mut run, solve)?,
        Command::SolveVqec { solve, chain } => cmd_solve_vqec(&mut run, solve, (*chain).into())?,
        Command::Isqr {
            samples,
            qubo,
            batches,
            theta_f,
            delta,
            max_iterations,
            conv_tol,
        } => cmd_isqr(
            &mut run,
            samples.as_deref(),
            qubo.as_deref(),
            *batches,
            *theta_f,
            *delta,
            *max_iterations,
            *conv_tol,
        )?,
        Command::Baseline { draws } => cmd_baseline(&mut run, *draws)?,
        Command::Frontier { points } => cmd_frontier(&mut run, *points)?,
        Command::Report { sweeps, draws } => cmd_report(&mut run, *sweeps, *draws)?,
    }

    manifest::append(
        &cli.out,
        ManifestEntry {
            subcommand: subcommand_name(&cli.command).to_string(),
            config: cli.config.display().to_string(),
            seed: cli.seed,
            out_dir: cli.out.display().to_string(),
            started_at,
            finished_at: chrono::Utc::now().to_rfc3339(),
            files: run.files,
        },
    )?;
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    init_threads(cli.threads);
    if let Err(err) = run(cli) {
        let payload = serde_json::json!({
            "error": { "message": format!("{err:#}") }
        });
        eprintln!("{payload}");
        std::process::exit(1);
    }
}
