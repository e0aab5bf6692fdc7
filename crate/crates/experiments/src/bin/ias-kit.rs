//! Command-line front end: run the studies, summarize their output, estimate
//! ancestors from a data file, or inspect a graph.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ias_core::oracle::{enumerate_with, oracle_markov_boundary, EnumerationOptions};
use ias_core::stats::ResidualTest;
use ias_core::{
    ias_search, oracle_s_icp, sample_dag, Correction, Dag, Dataset, DecisionConfig, Density, EnvMode, Error,
    GraphSamplerConfig, Seed, VarSet,
};
use ias_experiments::config::ConfigError;
use ias_experiments::runners::{run_finite_sample, run_max_mi, run_oracle_highdim, run_oracle_lowdim};
use ias_experiments::summarize::summarize;
use ias_experiments::{CsvSink, ExperimentConfig, ExperimentKind, Resolved, RunStats};
use serde::Serialize;

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser)]
#[command(name = "ias-kit", version, about = "Invariant ancestry search toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// S_ICP against S_AS on small random graphs.
    OracleLowdim(StudyArgs),
    /// |S_AS^m| against |S_ICP^MB| on large sparse graphs.
    OracleHighdim(StudyArgs),
    /// IAS and ICP on data simulated from random linear SCMs.
    FiniteSample(StudyArgs),
    /// Largest number of minimally invariant sets over random graphs.
    MaxMi(StudyArgs),
    /// Finite-sample ablations: alpha0 sweep, weak interventions, correction factor.
    Ablate {
        #[command(flatten)]
        study: StudyArgs,
        /// Which ablation; defaults to the one named in the config.
        #[arg(long, value_enum)]
        kind: Option<Ablation>,
    },
    /// Per-cell means, medians and 95% intervals of a results file.
    Summarize {
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Grouping columns, comma separated.
        #[arg(long, value_delimiter = ',')]
        by: Option<Vec<String>>,
    },
    /// Estimate ancestors of Y from a CSV with columns E,X1..Xd,Y.
    Run {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 1e-6)]
        alpha0: f64,
        #[arg(long)]
        alpha1: Option<f64>,
        /// auto, full_2d, heuristic_3pow, restricted, or a number.
        #[arg(long, default_value = "auto", value_parser = parse_correction)]
        correction: Correction,
        #[arg(long)]
        m: Option<usize>,
    },
    /// Print a random graph in edge-list format.
    SampleGraph {
        #[arg(long)]
        d: usize,
        /// sparse, dense, or an edge probability.
        #[arg(long, default_value = "sparse", value_parser = parse_density)]
        density: Density,
        #[arg(long, default_value_t = 1)]
        n_interventions: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Mode::Exogenous)]
        mode: Mode,
    },
    /// Minimally invariant sets, S_AS, S_ICP and the Markov boundary of a graph.
    Oracle {
        /// Edge-list file.
        graph: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Exogenous)]
        mode: Mode,
        #[arg(long)]
        max_size: Option<usize>,
        /// Invariance queries allowed.
        #[arg(long, default_value_t = 10_000_000)]
        budget: u64,
        /// Observed predictors, comma separated; all by default.
        #[arg(long, value_delimiter = ',')]
        observed: Option<Vec<usize>>,
    },
}

#[derive(Args)]
struct StudyArgs {
    /// TOML or JSON config; experiment defaults apply without one.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Results CSV; overrides the config's output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; all cores by default.
    #[arg(long)]
    jobs: Option<usize>,
    /// Keep finished cells of an interrupted run.
    #[arg(long)]
    resume: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Ablation {
    Alpha0Sweep,
    WeakInterventions,
    CorrectionAblation,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Exogenous,
    Nonexogenous,
}

impl From<Mode> for EnvMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Exogenous => EnvMode::Exogenous,
            Mode::Nonexogenous => EnvMode::Nonexogenous,
        }
    }
}

fn parse_density(s: &str) -> Result<Density, String> {
    match s {
        "sparse" => Ok(Density::Sparse),
        "dense" => Ok(Density::Dense),
        _ => s
            .parse()
            .map(Density::Explicit)
            .map_err(|_| format!("expected sparse, dense or a probability, got {s}")),
    }
}

fn parse_correction(s: &str) -> Result<Correction, String> {
    match s {
        "auto" => Ok(Correction::Auto),
        "full_2d" => Ok(Correction::Full2d),
        "heuristic_3pow" => Ok(Correction::Heuristic3Pow),
        "restricted" => Ok(Correction::Restricted),
        _ => s.parse().map(Correction::Explicit).map_err(|_| format!("unknown correction {s}")),
    }
}

/// An error tagged with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let error = e.into();
        let code = if error.downcast_ref::<ConfigError>().is_some() {
            EXIT_CONFIG
        } else {
            EXIT_FAILURE
        };
        Failure { code, error }
    }
}

fn config_error(msg: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        error: ConfigError::Invalid(msg.into()).into(),
    }
}

fn study(args: &StudyArgs, kind: Option<ExperimentKind>) -> Result<u8, Failure> {
    let mut file = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if args.seed.is_some() {
        file.seed = args.seed;
    }
    if args.out.is_some() {
        file.output = args.out.clone();
    }
    let cfg = file.resolve(kind)?;
    let out = cfg
        .output
        .clone()
        .ok_or_else(|| config_error("no output path; pass --out or set output in the config"))?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = args.jobs {
        if j == 0 {
            return Err(config_error("--jobs must be at least 1"));
        }
        pool = pool.num_threads(j);
    }
    let pool = pool.build()?;
    let fingerprint = serde_json::to_string(&Resolved { output: None, ..cfg.clone() })?;
    let mut sink = CsvSink::create(&out, args.resume, &fingerprint)?;
    if args.resume {
        log::info!("resuming with {} finished cells", sink.completed());
    }
    let stats: RunStats = pool.install(|| match cfg.experiment {
        ExperimentKind::OracleLowdim => run_oracle_lowdim(&cfg, &mut sink),
        ExperimentKind::OracleHighdim => run_oracle_highdim(&cfg, &mut sink),
        ExperimentKind::MaxMi => run_max_mi(&cfg, &mut sink),
        _ => run_finite_sample(&cfg, &mut sink),
    })?;
    eprintln!(
        "{}: {} rows in {} cells ({} reused) written to {}",
        cfg.experiment.name(),
        stats.rows,
        stats.cells,
        stats.skipped_cells,
        out.display()
    );
    if !stats.violations.is_empty() {
        for v in &stats.violations {
            log::error!("{v}");
        }
        return Err(Failure {
            code: EXIT_FAILURE,
            error: anyhow!("{} rows failed validation", stats.violations.len()),
        });
    }
    Ok(if stats.partial { EXIT_PARTIAL } else { 0 })
}

fn writer(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("cannot create {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    })
}

#[derive(Serialize)]
struct OracleOutput {
    minimally_invariant: Vec<VarSet>,
    s_as: VarSet,
    s_icp: Option<VarSet>,
    markov_boundary: VarSet,
    ancestors: VarSet,
    budget_exceeded: bool,
}

fn oracle(graph: &Path, mode: Mode, max_size: Option<usize>, budget: u64, observed: Option<Vec<usize>>) -> Result<u8> {
    let text = std::fs::read_to_string(graph).with_context(|| format!("cannot read {}", graph.display()))?;
    let dag = Dag::parse_edge_list(&text, mode.into())?;
    let observed: Option<VarSet> = observed.map(|o| o.into_iter().collect());
    if let Some(o) = &observed {
        dag.check_varset(o)?;
    }
    let opts = EnumerationOptions::new()
        .max_size(max_size)
        .budget(Some(budget))
        .observed(observed.clone());
    let (sets, budget_exceeded) = match enumerate_with(&dag, &opts) {
        Ok(f) => (f.sets, false),
        Err(Error::BudgetExceeded { found, .. }) => (found, true),
        Err(e) => return Err(e.into()),
    };
    let out = OracleOutput {
        s_as: sets.iter().fold(VarSet::new(), |a, s| a.union(s)),
        minimally_invariant: sets,
        s_icp: match observed {
            None => Some(oracle_s_icp(&dag)?),
            Some(_) => None,
        },
        markov_boundary: oracle_markov_boundary(&dag),
        ancestors: dag.response_ancestors(),
        budget_exceeded,
    };
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(if budget_exceeded { EXIT_PARTIAL } else { 0 })
}

fn dispatch(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::OracleLowdim(a) => study(&a, Some(ExperimentKind::OracleLowdim)),
        Command::OracleHighdim(a) => study(&a, Some(ExperimentKind::OracleHighdim)),
        Command::FiniteSample(a) => study(&a, Some(ExperimentKind::FiniteSample)),
        Command::MaxMi(a) => study(&a, Some(ExperimentKind::MaxMi)),
        Command::Ablate { study: a, kind } => {
            let kind = kind.map(|k| match k {
                Ablation::Alpha0Sweep => ExperimentKind::Alpha0Sweep,
                Ablation::WeakInterventions => ExperimentKind::WeakInterventions,
                Ablation::CorrectionAblation => ExperimentKind::CorrectionAblation,
            });
            if a.config.is_none() && kind.is_none() {
                return Err(config_error("ablate needs --kind or a config naming the ablation"));
            }
            if let Some(k) = kind {
                if !k.is_finite_sample() {
                    return Err(config_error("not an ablation"));
                }
            }
            study(&a, kind)
        }
        Command::Summarize { input, out, by } => {
            let file = File::open(&input).with_context(|| format!("cannot open {}", input.display()))?;
            let rows = summarize(file, writer(out.as_deref())?, by.as_deref())?;
            log::info!("{rows} summary rows");
            Ok(0)
        }
        Command::Run {
            data,
            alpha,
            alpha0,
            alpha1,
            correction,
            m,
        } => {
            let file = File::open(&data).with_context(|| format!("cannot open {}", data.display()))?;
            let dataset = Dataset::read_csv(file)?;
            let config = DecisionConfig {
                alpha,
                alpha0,
                alpha1,
                correction,
                m,
            };
            if let Err(e) = config.validate(dataset.d()) {
                return Err(config_error(e.to_string()));
            }
            let report = ias_search(&ResidualTest::new(&dataset), &config)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(0)
        }
        Command::SampleGraph {
            d,
            density,
            n_interventions,
            seed,
            mode,
        } => {
            let config = GraphSamplerConfig {
                seed,
                mode: mode.into(),
                ..GraphSamplerConfig::new(d, density, n_interventions)
            };
            if let Err(e) = config.validate() {
                return Err(config_error(e.to_string()));
            }
            let dag = sample_dag(&config, &mut Seed(seed).rng())?;
            print!("{}", dag.to_edge_list());
            Ok(0)
        }
        Command::Oracle {
            graph,
            mode,
            max_size,
            budget,
            observed,
        } => Ok(oracle(&graph, mode, max_size, budget, observed)?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
