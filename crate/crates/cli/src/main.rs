//! `dicelab` — batch front end for the tabular convex-duality laboratory.
//!
//! Three subcommands cover the experiment loop, with long-form flags only:
//!
//! | command | role |
//! |---------|------|
//! | `gen` | generate a seeded random MDP (and optionally a logged dataset) as JSON |
//! | `run` | run one method against one instance, emit a result JSON |
//! | `compare` | sweep methods × seeds, emit a plot-ready CSV |
//!
//! The top-level `--emit-catalog <PATH>` flag writes the generated method
//! catalog (markdown) and exits.
//!
//! Exit codes are part of the contract, for scriptable sweeps:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success — including runs that report `converged: false` |
//! | 2 | invalid arguments, spec, or input files |
//! | 3 | dataset fails to cover the requested target policy |
//! | 4 | a required chain is not ergodic |
//! | 1 | internal error (singular system, non-finite objective, …) |
//!
//! Every failure also writes one machine-readable JSON line to stderr:
//! `{"error": "<class>", "detail": "<message>", ...}`. All outputs are
//! deterministic in the seeds: rerunning an invocation reproduces its files
//! byte for byte.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dicelab_core::dataset::{mdp_fingerprint, DatasetMode, OfflineDataset};
use dicelab_core::io::{ConfigEchoJson, DatasetJson, MdpJson, RunResultJson, SolverConfigJson};
use dicelab_core::mdp::{
    blend_with_uniform, random_mdp, random_policy, validate_mdp, Policy, TabularMdp,
};
use dicelab_core::oracles::REG_OPT_MAX_DIM;
use dicelab_core::registry::{emit_catalog, run_method, Method, RunRecord};
use dicelab_core::solver::SolverConfig;
use dicelab_core::{Error, Result};

/// Above this many state-action pairs the oracle columns are reported as
/// absent ("NA" in CSV) instead of computed, to keep sweeps cheap.
const ORACLE_DIM_CUTOFF: usize = 4096;

// ------------------------------------------------------------------- args

#[derive(Parser)]
#[command(
    name = "dicelab",
    about = "Tabular MDP laboratory: generate instances, run estimators, compare against oracles",
    version
)]
struct Cli {
    /// Write the generated method catalog (markdown) to PATH and exit.
    #[arg(long, value_name = "PATH")]
    emit_catalog: Option<PathBuf>,

    #[command(subcommand)]
    command: Option<Commands>,
}

#[derive(Subcommand)]
enum Commands {
    /// Generate a seeded random MDP (and optionally a dataset) as JSON.
    Gen(GenArgs),
    /// Run one method on one instance and emit a result JSON.
    Run(RunArgs),
    /// Sweep methods × seeds and emit a CSV of oracle comparisons.
    Compare(CompareArgs),
}

/// Policy specifications accepted wherever a policy is requested:
/// `uniform`, `seeded:<seed>`, or `seeded:<seed>:blend:<w>` (a seeded random
/// policy blended `w` of the way toward uniform, `w` in [0, 1]).
const POLICY_SPEC_HELP: &str = "\"uniform\", \"seeded:<seed>\", or \"seeded:<seed>:blend:<w>\"";

#[derive(Args)]
struct GenArgs {
    /// Number of states (>= 1).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    states: u64,
    /// Number of actions (>= 1).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    actions: u64,
    /// Discount factor in [0, 1]; 1 selects the average-reward regime.
    #[arg(long)]
    gamma: f64,
    /// Generator seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path for the MDP JSON.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// Also write a dataset JSON to this path.
    #[arg(long, value_name = "PATH")]
    dataset: Option<PathBuf>,
    /// Behavior policy spec for the dataset.
    #[arg(long, default_value = "uniform", help = POLICY_SPEC_HELP)]
    behavior: String,
    /// Dataset mode: "exact" (population weights) or "sampled".
    #[arg(long, default_value = "exact")]
    mode: String,
    /// Number of logged transitions (required for --mode sampled).
    #[arg(long)]
    samples: Option<usize>,
    /// Sampling seed for --mode sampled.
    #[arg(long, default_value_t = 0)]
    data_seed: u64,
}

#[derive(Args)]
struct InstanceArgs {
    /// Load the MDP from a JSON file (conflicts with --states/--actions/--gamma).
    #[arg(long, value_name = "PATH")]
    mdp: Option<PathBuf>,
    /// Number of states for a generated MDP.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    states: Option<u64>,
    /// Number of actions for a generated MDP.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    actions: Option<u64>,
    /// Discount factor in [0, 1] for a generated MDP.
    #[arg(long)]
    gamma: Option<f64>,
    /// Generator seed for a generated MDP.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Load the dataset from a JSON file instead of deriving it.
    #[arg(long, value_name = "PATH")]
    dataset: Option<PathBuf>,
    /// Behavior policy spec for a derived dataset.
    #[arg(long, default_value = "uniform", help = POLICY_SPEC_HELP)]
    behavior: String,
    /// Dataset mode for a derived dataset: "exact" or "sampled".
    #[arg(long, default_value = "exact")]
    mode: String,
    /// Number of logged transitions (required for --mode sampled).
    #[arg(long)]
    samples: Option<usize>,
    /// Sampling seed for --mode sampled.
    #[arg(long, default_value_t = 0)]
    data_seed: u64,
}

#[derive(Args)]
struct SolverArgs {
    /// Step size of the descent block.
    #[arg(long, default_value_t = 0.1)]
    step_min: f64,
    /// Step size of the ascent block.
    #[arg(long, default_value_t = 0.1)]
    step_max: f64,
    /// Iteration budget.
    #[arg(long, default_value_t = 200_000)]
    iters: usize,
    /// Convergence threshold on the gradient sup norm.
    #[arg(long, default_value_t = 1e-8)]
    grad_tol: f64,
    /// Step-size schedule: "none" or "inverse-sqrt".
    #[arg(long, default_value = "none")]
    decay: String,
    /// Uniform iterate averaging for saddle problems.
    #[arg(long, action = clap::ArgAction::Set, default_value_t = true)]
    averaging: bool,
    /// Seed recorded in the solver config (iterations are deterministic).
    #[arg(long, default_value_t = 0)]
    solver_seed: u64,
}

impl SolverArgs {
    fn to_config(&self) -> Result<SolverConfig> {
        Ok(SolverConfig {
            step_size_min: self.step_min,
            step_size_max: self.step_max,
            max_iters: self.iters,
            grad_tol: self.grad_tol,
            step_decay: self.decay.parse()?,
            seed: self.solver_seed,
            averaging: self.averaging,
        })
    }
}

#[derive(Args)]
struct RunArgs {
    /// Method string, e.g. "dualdice:square:closed" or "undisc-reps".
    #[arg(long)]
    method: String,
    #[command(flatten)]
    instance: InstanceArgs,
    /// Target policy spec (evaluation methods only).
    #[arg(long, default_value = "uniform", help = POLICY_SPEC_HELP)]
    target: String,
    #[command(flatten)]
    solver: SolverArgs,
    /// Output path for the result JSON (stdout when omitted).
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Comma-separated method strings.
    #[arg(long, value_name = "M1,M2,…")]
    methods: String,
    /// Seed range: "<count>", "<a>..<b>" (half-open), or "<a>..=<b>".
    #[arg(long)]
    seeds: String,
    /// Number of states of each generated instance.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    states: u64,
    /// Number of actions of each generated instance.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    actions: u64,
    /// Discount factor in [0, 1] of each generated instance.
    #[arg(long)]
    gamma: f64,
    /// Behavior policy spec (the dataset is derived per seed).
    #[arg(long, default_value = "uniform", help = POLICY_SPEC_HELP)]
    behavior: String,
    /// Dataset mode: "exact" or "sampled".
    #[arg(long, default_value = "exact")]
    mode: String,
    /// Number of logged transitions (required for --mode sampled).
    #[arg(long)]
    samples: Option<usize>,
    /// Target policy spec (evaluation methods only).
    #[arg(long, default_value = "uniform", help = POLICY_SPEC_HELP)]
    target: String,
    #[command(flatten)]
    solver: SolverArgs,
    /// Output path for the CSV (stdout when omitted).
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

// ------------------------------------------------------- experiment config

/// Where a run's MDP comes from.
enum MdpSource {
    File(PathBuf),
    Generated { n_states: usize, n_actions: usize, discount: f64, seed: u64 },
}

/// Where a run's dataset comes from.
enum DatasetSource {
    File(PathBuf),
    FromBehavior { spec: String, mode: DatasetMode, n_samples: Option<usize>, seed: u64 },
}

/// A fully resolved run request: model source, data source, target, method
/// string, and solver settings. The method string must parse against the
/// registered method grammar ([`ExperimentConfig::validate`]).
struct ExperimentConfig {
    mdp_source: MdpSource,
    dataset_source: DatasetSource,
    target_spec: String,
    method: String,
    solver: SolverConfig,
    out: Option<PathBuf>,
}

impl ExperimentConfig {
    fn from_args(args: &RunArgs) -> Result<Self> {
        Ok(ExperimentConfig {
            mdp_source: mdp_source_from(&args.instance)?,
            dataset_source: dataset_source_from(&args.instance)?,
            target_spec: args.target.clone(),
            method: args.method.clone(),
            solver: args.solver.to_config()?,
            out: args.out.clone(),
        })
    }

    /// Checks the method string against the registered grammar.
    fn validate(&self) -> Result<Method> {
        Method::parse(&self.method)
    }

    /// Loads or generates the MDP; the seed is the instance seed when
    /// generated, `None` for files (the dataset seed stands in).
    fn load_mdp(&self) -> Result<(TabularMdp<f64>, Option<u64>)> {
        match &self.mdp_source {
            MdpSource::File(path) => Ok((read_mdp(path)?, None)),
            MdpSource::Generated { n_states, n_actions, discount, seed } => {
                Ok((build_mdp(*n_states, *n_actions, *discount, *seed)?, Some(*seed)))
            }
        }
    }

    fn load_dataset(&self, mdp: &TabularMdp<f64>) -> Result<OfflineDataset<f64>> {
        match &self.dataset_source {
            DatasetSource::File(path) => read_dataset(path, mdp),
            DatasetSource::FromBehavior { spec, mode, n_samples, seed } => {
                let behavior = parse_policy_spec(spec, mdp.n_states, mdp.n_actions)?;
                OfflineDataset::from_behavior(mdp, &behavior, *mode, *n_samples, *seed)
            }
        }
    }

    /// The behavior description echoed into the result JSON.
    fn behavior_echo(&self) -> String {
        match &self.dataset_source {
            DatasetSource::File(path) => format!("file:{}", path.display()),
            DatasetSource::FromBehavior { spec, .. } => spec.clone(),
        }
    }
}

fn mdp_source_from(args: &InstanceArgs) -> Result<MdpSource> {
    let generator = [args.states.is_some(), args.actions.is_some(), args.gamma.is_some()];
    match (&args.mdp, generator.iter().any(|v| *v)) {
        (Some(_), true) => Err(Error::DomainError(
            "--mdp conflicts with --states/--actions/--gamma".to_string(),
        )),
        (Some(path), false) => Ok(MdpSource::File(path.clone())),
        (None, _) => match (args.states, args.actions, args.gamma) {
            (Some(s), Some(a), Some(g)) => Ok(MdpSource::Generated {
                n_states: s as usize,
                n_actions: a as usize,
                discount: g,
                seed: args.seed,
            }),
            _ => Err(Error::DomainError(
                "an MDP source is required: --mdp PATH, or all of --states/--actions/--gamma"
                    .to_string(),
            )),
        },
    }
}

fn dataset_source_from(args: &InstanceArgs) -> Result<DatasetSource> {
    match &args.dataset {
        Some(path) => Ok(DatasetSource::File(path.clone())),
        None => Ok(DatasetSource::FromBehavior {
            spec: args.behavior.clone(),
            mode: parse_mode(&args.mode, args.samples)?,
            n_samples: args.samples,
            seed: args.data_seed,
        }),
    }
}

// ------------------------------------------------------------ shared bits

fn parse_policy_spec(spec: &str, n_states: usize, n_actions: usize) -> Result<Policy<f64>> {
    if spec == "uniform" {
        return Ok(Policy::uniform(n_states, n_actions));
    }
    if let Some(rest) = spec.strip_prefix("seeded:") {
        let (seed_part, blend_part) = match rest.split_once(":blend:") {
            Some((s, w)) => (s, Some(w)),
            None => (rest, None),
        };
        let seed: u64 = seed_part.parse().map_err(|_| bad_policy_spec(spec))?;
        let policy = random_policy(n_states, n_actions, seed);
        return match blend_part {
            None => Ok(policy),
            Some(w) => {
                let weight: f64 = w.parse().map_err(|_| bad_policy_spec(spec))?;
                if !(0.0..=1.0).contains(&weight) {
                    return Err(bad_policy_spec(spec));
                }
                Ok(blend_with_uniform(&policy, weight))
            }
        };
    }
    Err(bad_policy_spec(spec))
}

fn bad_policy_spec(spec: &str) -> Error {
    Error::DomainError(format!("invalid policy spec {spec:?} (expected {POLICY_SPEC_HELP})"))
}

fn parse_mode(mode: &str, samples: Option<usize>) -> Result<DatasetMode> {
    match mode {
        "exact" => Ok(DatasetMode::Exact),
        "sampled" => {
            if samples.is_none() {
                return Err(Error::DomainError(
                    "--mode sampled requires --samples".to_string(),
                ));
            }
            Ok(DatasetMode::Sampled)
        }
        other => Err(Error::DomainError(format!(
            "invalid dataset mode {other:?} (expected \"exact\" or \"sampled\")"
        ))),
    }
}

/// Builds a seeded random MDP, rejecting out-of-range discounts before
/// construction (the generator itself asserts nothing about γ).
fn build_mdp(n_states: usize, n_actions: usize, discount: f64, seed: u64) -> Result<TabularMdp<f64>> {
    if !(0.0..=1.0).contains(&discount) {
        return Err(Error::DomainError(format!(
            "discount must lie in [0, 1], got {discount}"
        )));
    }
    let mdp = random_mdp(n_states, n_actions, discount, seed);
    validate_mdp(&mdp)?;
    Ok(mdp)
}

fn read_mdp(path: &PathBuf) -> Result<TabularMdp<f64>> {
    let text = std::fs::read_to_string(path)?;
    let json: MdpJson = serde_json::from_str(&text)?;
    json.to_mdp()
}

fn read_dataset(path: &PathBuf, mdp: &TabularMdp<f64>) -> Result<OfflineDataset<f64>> {
    let text = std::fs::read_to_string(path)?;
    let json: DatasetJson = serde_json::from_str(&text)?;
    json.to_dataset(mdp)
}

fn write_pretty<T: serde::Serialize>(out: &Option<PathBuf>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

/// Whether oracle columns are computable for this method at this size: the
/// evaluation methods need only linear solves (cheap up to the cutoff), but
/// optimizers and density solvers are scored against the projected-gradient
/// regularized optimum, which is budgeted much tighter.
fn oracle_feasible(method: &Method, n_sa: usize) -> bool {
    if n_sa > ORACLE_DIM_CUTOFF {
        return false;
    }
    method.needs_target() || n_sa <= REG_OPT_MAX_DIM
}

// ------------------------------------------------------------ exit plumbing

/// Maps an error to its exit code and machine-readable class.
fn exit_class(err: &Error) -> (u8, &'static str) {
    match err {
        Error::CoverageError(_) => (3, "coverage"),
        Error::NotErgodic { .. } => (4, "not-ergodic"),
        Error::InvalidMdp(_)
        | Error::InvalidPolicy(_)
        | Error::UnknownMethod(_)
        | Error::DomainError(_)
        | Error::UndiscountedUnsupported
        | Error::ClosedFormUnsupported { .. }
        | Error::UnsupportedConstrainedGenerator { .. }
        | Error::MissingPolicy
        | Error::ShapeMismatch { .. }
        | Error::Io(_)
        | Error::Json(_) => (2, "invalid-spec"),
        _ => (1, "internal"),
    }
}

fn fail(err: &Error) -> ExitCode {
    let (code, class) = exit_class(err);
    eprintln!("{}", serde_json::json!({ "error": class, "detail": err.to_string() }));
    ExitCode::from(code)
}

// ----------------------------------------------------------------- commands

fn cmd_gen(args: &GenArgs) -> Result<()> {
    let mdp = build_mdp(args.states as usize, args.actions as usize, args.gamma, args.seed)?;
    write_pretty(&Some(args.out.clone()), &MdpJson::from_mdp(&mdp))?;
    if let Some(dataset_path) = &args.dataset {
        let behavior = parse_policy_spec(&args.behavior, mdp.n_states, mdp.n_actions)?;
        let mode = parse_mode(&args.mode, args.samples)?;
        let dataset =
            OfflineDataset::from_behavior(&mdp, &behavior, mode, args.samples, args.data_seed)?;
        write_pretty(&Some(dataset_path.clone()), &DatasetJson::from_dataset(&dataset))?;
    }
    Ok(())
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let config = ExperimentConfig::from_args(args)?;
    let method = config.validate()?;
    let (mdp, mdp_seed) = config.load_mdp()?;
    let dataset = config.load_dataset(&mdp)?;
    let target = parse_policy_spec(&config.target_spec, mdp.n_states, mdp.n_actions)?;
    let with_oracle = oracle_feasible(&method, mdp.n_sa());
    let record: RunRecord<f64> =
        run_method(&mdp, &dataset, Some(&target), &method, &config.solver, with_oracle)?;
    let seed = mdp_seed.unwrap_or(dataset.seed);
    let echo = ConfigEchoJson {
        mdp: mdp_fingerprint(&mdp),
        method: record.method.clone(),
        behavior: config.behavior_echo(),
        target: method.needs_target().then(|| config.target_spec.clone()),
        dataset_mode: dataset.mode.to_string(),
        solver: SolverConfigJson::from(&config.solver),
    };
    let result = RunResultJson {
        method: record.method,
        value_estimate: record.value_estimate,
        oracle_value: record.oracle_value,
        abs_error: record.abs_error,
        zeta_max_error: record.zeta_max_error,
        converged: record.converged,
        iters: record.iters,
        zeta_table: record.zeta_table,
        q_table: record.q_table,
        v_table: record.v_table,
        config: echo,
        seed,
    };
    write_pretty(&config.out, &result)
}

/// One CSV cell outcome; `None` columns print as "NA".
struct CompareRow {
    seed: u64,
    method: String,
    value_estimate: Option<f64>,
    oracle_value: Option<f64>,
    abs_error: Option<f64>,
    zeta_max_error: Option<f64>,
    iters: usize,
    converged: bool,
}

impl CompareRow {
    fn failed(seed: u64, method: String) -> Self {
        CompareRow {
            seed,
            method,
            value_estimate: None,
            oracle_value: None,
            abs_error: None,
            zeta_max_error: None,
            iters: 0,
            converged: false,
        }
    }

    fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
        format!(
            "{},{},{},{},{},{},{},{}",
            self.seed,
            self.method,
            opt(self.value_estimate),
            opt(self.oracle_value),
            opt(self.abs_error),
            opt(self.zeta_max_error),
            self.iters,
            self.converged
        )
    }
}

fn parse_methods(list: &str) -> Result<Vec<Method>> {
    let names: Vec<&str> = list.split(',').filter(|s| !s.is_empty()).collect();
    if names.is_empty() {
        return Err(Error::DomainError("--methods needs at least one method".to_string()));
    }
    names.iter().map(|name| Method::parse(name)).collect()
}

fn parse_seed_range(spec: &str) -> Result<Vec<u64>> {
    let number = |s: &str| -> Result<u64> {
        s.parse().map_err(|_| {
            Error::DomainError(format!(
                "invalid seed range {spec:?} (expected \"<count>\", \"<a>..<b>\", or \"<a>..=<b>\")"
            ))
        })
    };
    let seeds: Vec<u64> = if let Some((a, b)) = spec.split_once("..=") {
        (number(a)?..=number(b)?).collect()
    } else if let Some((a, b)) = spec.split_once("..") {
        (number(a)?..number(b)?).collect()
    } else {
        (0..number(spec)?).collect()
    };
    if seeds.is_empty() {
        return Err(Error::DomainError(format!("seed range {spec:?} is empty")));
    }
    Ok(seeds)
}

/// A cell failure becomes an "NA" row plus one stderr JSON line; the sweep
/// itself keeps going.
fn report_cell_error(seed: u64, method: &str, err: &Error) {
    let (_, class) = exit_class(err);
    eprintln!(
        "{}",
        serde_json::json!({
            "error": class,
            "detail": err.to_string(),
            "seed": seed,
            "method": method,
        })
    );
}

fn cmd_compare(args: &CompareArgs) -> Result<()> {
    let methods = parse_methods(&args.methods)?;
    let seeds = parse_seed_range(&args.seeds)?;
    let solver = args.solver.to_config()?;
    let mode = parse_mode(&args.mode, args.samples)?;

    let mut rows: Vec<CompareRow> = Vec::with_capacity(seeds.len() * methods.len());
    for &seed in &seeds {
        let mdp = build_mdp(args.states as usize, args.actions as usize, args.gamma, seed)?;
        let target = parse_policy_spec(&args.target, mdp.n_states, mdp.n_actions)?;
        let dataset = parse_policy_spec(&args.behavior, mdp.n_states, mdp.n_actions)
            .and_then(|behavior| {
                OfflineDataset::from_behavior(&mdp, &behavior, mode, args.samples, seed)
            });
        let dataset = match dataset {
            Ok(ds) => ds,
            Err(err) => {
                // The whole seed is unusable; emit one NA row per method.
                for method in &methods {
                    report_cell_error(seed, &method.canonical(), &err);
                    rows.push(CompareRow::failed(seed, method.canonical()));
                }
                continue;
            }
        };
        for method in &methods {
            let with_oracle = oracle_feasible(method, mdp.n_sa());
            match run_method(&mdp, &dataset, Some(&target), method, &solver, with_oracle) {
                Ok(record) => rows.push(CompareRow {
                    seed,
                    method: record.method,
                    value_estimate: Some(record.value_estimate),
                    oracle_value: record.oracle_value,
                    abs_error: record.abs_error,
                    zeta_max_error: record.zeta_max_error,
                    iters: record.iters,
                    converged: record.converged,
                }),
                Err(err) => {
                    report_cell_error(seed, &method.canonical(), &err);
                    rows.push(CompareRow::failed(seed, method.canonical()));
                }
            }
        }
    }

    rows.sort_by(|a, b| a.seed.cmp(&b.seed).then_with(|| a.method.cmp(&b.method)));
    let mut csv =
        String::from("seed,method,value_estimate,oracle_value,abs_error,zeta_max_error,iters,converged\n");
    for row in &rows {
        csv.push_str(&row.to_csv());
        csv.push('\n');
    }
    match &args.out {
        Some(path) => std::fs::write(path, csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_catalog(path: &PathBuf) -> Result<()> {
    std::fs::write(path, emit_catalog()?)?;
    Ok(())
}

// --------------------------------------------------------------------- main

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            if matches!(
                err.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) {
                // help/version go to stdout with exit 0, as usual
                err.exit();
            }
            eprintln!(
                "{}",
                serde_json::json!({ "error": "invalid-spec", "detail": err.to_string() })
            );
            return ExitCode::from(2);
        }
    };

    let outcome = match (&cli.emit_catalog, &cli.command) {
        (Some(_), Some(_)) => Err(Error::DomainError(
            "--emit-catalog cannot be combined with a subcommand".to_string(),
        )),
        (Some(path), None) => cmd_catalog(path),
        (None, Some(Commands::Gen(args))) => cmd_gen(args),
        (None, Some(Commands::Run(args))) => cmd_run(args),
        (None, Some(Commands::Compare(args))) => cmd_compare(args),
        (None, None) => Err(Error::DomainError(
            "a subcommand (gen | run | compare) or --emit-catalog is required".to_string(),
        )),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => fail(&err),
    }
}
