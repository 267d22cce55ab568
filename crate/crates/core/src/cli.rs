//! Command-line front end. Every command reads an optional TOML run config,
//! writes its artifacts under `--out` and returns exit code 0 on success,
//! 1 on usage errors and 2 on runtime failures.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::dagspec::{parse_dag, write_dag};
use crate::envs::{BitVectorEnv, HypergridEnv, SimpleDagEnv, TreeBuildEnv, WordsEnv, WordsMode};
use crate::exact::{
    backward_maxent, backward_uniform, count_paths, flow_entropy, forward_from_backward,
    log_partition, marginals, max_entropy_bound, target_entropy, BackwardPolicy, ExactError,
    ExactTables, ForwardPolicy,
};
use crate::learner::{
    evaluate_model, run_training, MetricsRow, PolicyModel, TrainConfig, TrainError,
};
use crate::mdp::{enumerate, validate, EnumeratedMdp, MdpError, DEFAULT_MAX_STATES};
use crate::metrics::{EvalReport, KlDirection, MetricsError};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("render-grid needs a 2-dimensional hypergrid, got {0}")]
    DimensionUnsupported(String),
    #[error("invalid model file: {0}")]
    Model(String),
    #[error("invalid MDP: {0}")]
    Invalid(String),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Exact(#[from] ExactError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Train(TrainError::InvalidConfig(_)) => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "maxent-gfn",
    version,
    about = "Exact and learned maximum-entropy GFlowNets"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run config; built-in defaults when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Sampling threads; results do not depend on the count.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Enumerate the environment and write it as a DAG spec.
    Enumerate,
    /// Solve the exact tables and entropies.
    Exact,
    /// Train a tabular model and write the metric series and parameters.
    Train,
    /// Evaluate a saved model exactly.
    Eval {
        /// Model JSON; defaults to `<out>/model.json`.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Render a field of a 2-D hypergrid as a PGM image and a CSV matrix.
    RenderGrid {
        #[arg(long, value_enum, default_value = "marginal")]
        field: GridField,
        /// Exact GFN to render when no model is given.
        #[arg(long, value_enum, default_value = "maxent")]
        backward: ExactBackward,
        /// Render the marginals of a saved model instead of an exact GFN.
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GridField {
    /// Terminal marginal per cell.
    Marginal,
    /// Marginal of the non-terminal lattice states.
    Flow,
    /// Unnormalized target per cell.
    Target,
    /// Log trajectory count of the lattice states.
    L,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExactBackward {
    Maxent,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridReward {
    #[default]
    Standard,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// One of simple-dag, hypergrid, words, tree, bitvec, dag-file.
    pub name: String,
    pub dims: usize,
    pub side: usize,
    pub reward: GridReward,
    pub alphabet: usize,
    pub length: usize,
    /// `right` or `either-side`.
    pub mode: String,
    pub labels: u8,
    pub max_nodes: usize,
    pub distinct_labels: bool,
    /// Target of the terminal state of simple-dag.
    pub target: f64,
    pub path: Option<PathBuf>,
    pub max_states: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            name: "hypergrid".into(),
            dims: 2,
            side: 8,
            reward: GridReward::Standard,
            alphabet: 2,
            length: 5,
            mode: "either-side".into(),
            labels: 4,
            max_nodes: 4,
            distinct_labels: true,
            target: 1.0,
            path: None,
            max_states: DEFAULT_MAX_STATES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Mode thresholds on the unnormalized target.
    pub thresholds: Vec<f64>,
    /// Direction printed as `kl` by `eval`; both are always reported.
    pub kl_direction: KlDirection,
    pub metrics_file: String,
    pub model_file: String,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            thresholds: vec![0.5, 2.0],
            kl_direction: KlDirection::Forward,
            metrics_file: "metrics.csv".into(),
            model_file: "model.json".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub env: EnvConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("bad config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        Self::from_toml(&read(path)?)
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Enumerates the configured environment.
pub fn build_mdp(env: &EnvConfig) -> Result<EnumeratedMdp, CliError> {
    let budget = env.max_states;
    let mdp = match env.name.as_str() {
        "simple-dag" => enumerate(&SimpleDagEnv::new(env.target), budget)?,
        "hypergrid" => {
            if env.dims == 0 || !(2..=256).contains(&env.side) {
                return Err(CliError::Usage(
                    "hypergrid needs dims >= 1 and 2 <= side <= 256".into(),
                ));
            }
            let mdp = enumerate(&HypergridEnv::new(env.dims, env.side), budget)?;
            match env.reward {
                GridReward::Standard => mdp,
                GridReward::Uniform => mdp.with_log_targets(vec![0.0; mdp.num_states()]),
            }
        }
        "words" => {
            let mode = match env.mode.as_str() {
                "right" => WordsMode::AppendRight,
                "either-side" => WordsMode::AppendEitherSide,
                other => return Err(CliError::Usage(format!("unknown words mode `{other}`"))),
            };
            if !(1..=255).contains(&env.alphabet) || env.length == 0 {
                return Err(CliError::Usage(
                    "words needs 1 <= alphabet <= 255 and length >= 1".into(),
                ));
            }
            enumerate(&WordsEnv::new(env.alphabet, env.length, mode), budget)?
        }
        "tree" => {
            if env.labels == 0
                || env.max_nodes == 0
                || (env.distinct_labels && env.max_nodes > env.labels as usize)
            {
                return Err(CliError::Usage(
                    "tree needs labels >= 1, max_nodes >= 1 and, with distinct labels, max_nodes <= labels".into(),
                ));
            }
            enumerate(
                &TreeBuildEnv::new(env.labels, env.max_nodes, env.distinct_labels),
                budget,
            )?
        }
        "bitvec" => enumerate(&BitVectorEnv::new(env.length), budget)?,
        "dag-file" => {
            let path = env
                .path
                .as_ref()
                .ok_or_else(|| CliError::Usage("dag-file env needs `path`".into()))?;
            parse_dag(&read(path)?)?
        }
        other => return Err(CliError::Usage(format!("unknown env `{other}`"))),
    };
    if let Some(v) = validate(&mdp).violation {
        return Err(CliError::Invalid(format!("{v:?}")));
    }
    Ok(mdp)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactReport {
    pub states: usize,
    pub edges: usize,
    pub terminals: usize,
    pub log_z: f64,
    pub log_z_from_value: f64,
    pub entropy_maxent: f64,
    pub entropy_uniform: f64,
    pub max_entropy_bound: f64,
    pub target_entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct PolicyTables {
    forward_maxent: ForwardPolicy,
    forward_uniform: ForwardPolicy,
    backward_maxent: BackwardPolicy,
    backward_uniform: BackwardPolicy,
}

/// Exact GFN policy induced by the chosen backward policy.
pub fn exact_policy(
    mdp: &EnumeratedMdp,
    backward: ExactBackward,
) -> Result<ForwardPolicy, ExactError> {
    let q = match backward {
        ExactBackward::Maxent => backward_maxent(mdp, &count_paths(mdp)),
        ExactBackward::Uniform => backward_uniform(mdp),
    };
    Ok(forward_from_backward(mdp, &q)?.1)
}

pub fn exact_report(mdp: &EnumeratedMdp) -> Result<ExactReport, ExactError> {
    let l = count_paths(mdp);
    let (log_z, log_z_from_value) = log_partition(mdp, &l)?;
    let entropy_of = |p: &ForwardPolicy| -> Result<f64, ExactError> {
        Ok(flow_entropy(mdp, p, &marginals(mdp, p)?))
    };
    Ok(ExactReport {
        states: mdp.num_states(),
        edges: mdp.num_edges(),
        terminals: mdp.num_terminals(),
        log_z,
        log_z_from_value,
        entropy_maxent: entropy_of(&exact_policy(mdp, ExactBackward::Maxent)?)?,
        entropy_uniform: entropy_of(&exact_policy(mdp, ExactBackward::Uniform)?)?,
        max_entropy_bound: max_entropy_bound(mdp, &l),
        target_entropy: target_entropy(mdp),
    })
}

/// `P5` image with min-max normalized values; non-finite entries map to 0.
pub fn pgm(rows: usize, cols: usize, values: &[f64]) -> Vec<u8> {
    assert_eq!(values.len(), rows * cols);
    let finite = values.iter().copied().filter(|v| v.is_finite());
    let lo = finite.clone().fold(f64::INFINITY, f64::min);
    let hi = finite.fold(f64::NEG_INFINITY, f64::max);
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    out.extend(values.iter().map(|&v| {
        if !v.is_finite() || hi <= lo {
            0
        } else {
            (255.0 * (v - lo) / (hi - lo)).round() as u8
        }
    }));
    out
}

/// `side x side` matrix of a field over a 2-D hypergrid (row = first
/// coordinate) together with the values used for the image.
pub fn grid_field(
    mdp: &EnumeratedMdp,
    env: &EnvConfig,
    field: GridField,
    policy: &ForwardPolicy,
) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    if env.name != "hypergrid" || env.dims != 2 {
        let what = if env.name == "hypergrid" {
            format!("{} dimensions", env.dims)
        } else {
            format!("env `{}`", env.name)
        };
        return Err(CliError::DimensionUnsupported(what));
    }
    let grid = HypergridEnv::new(2, env.side);
    let h = env.side;
    let mu = match field {
        GridField::Marginal | GridField::Flow => marginals(mdp, policy)?,
        _ => Vec::new(),
    };
    let l = count_paths(mdp);
    let mut raw = vec![0.0; h * h];
    let mut image = vec![0.0; h * h];
    for s in mdp.state_ids() {
        let st = grid.decode(mdp.encoding(s));
        let at = st.coords[0] * h + st.coords[1];
        let value = match (field, st.done) {
            (GridField::Marginal, true) => mu[s.0],
            (GridField::Flow, false) => mu[s.0],
            (GridField::Target, true) => mdp.log_target(s).exp(),
            (GridField::L, false) => l[s.0],
            _ => continue,
        };
        raw[at] = value;
        image[at] = if field == GridField::L {
            value
        } else {
            value.ln()
        };
    }
    Ok((raw, image))
}

fn matrix_csv(cols: usize, values: &[f64]) -> String {
    let mut out = String::new();
    for row in values.chunks(cols) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{}", line.join(","));
    }
    out
}

// a closed stdout is not an error worth a panic
fn say(text: impl std::fmt::Display) {
    use std::io::Write as _;
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn load_model(mdp: &EnumeratedMdp, path: &Path) -> Result<PolicyModel, CliError> {
    PolicyModel::from_json(mdp, &read(path)?).map_err(CliError::Model)
}

/// Runs a parsed command.
pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.train.seed = cfg.seed;
    cfg.train.threads = cli.threads.unwrap_or(1);
    let out = &cli.out;
    let mdp = build_mdp(&cfg.env)?;
    match &cli.command {
        Command::Enumerate => {
            write(&out.join("mdp.dag"), write_dag(&mdp))?;
            say(format!("states {}", mdp.num_states()));
            say(format!("edges {}", mdp.num_edges()));
            say(format!("terminals {}", mdp.num_terminals()));
        }
        Command::Exact => {
            let tables = ExactTables::solve(&mdp)?;
            write(&out.join("exact.json"), tables.to_json())?;
            let l = &tables.l;
            let policies = PolicyTables {
                forward_maxent: exact_policy(&mdp, ExactBackward::Maxent)?,
                forward_uniform: exact_policy(&mdp, ExactBackward::Uniform)?,
                backward_maxent: backward_maxent(&mdp, l),
                backward_uniform: backward_uniform(&mdp),
            };
            write(
                &out.join("policies.json"),
                serde_json::to_string_pretty(&policies).expect("policies serialize"),
            )?;
            let report =
                serde_json::to_string_pretty(&exact_report(&mdp)?).expect("report serializes");
            write(&out.join("report.json"), &report)?;
            say(&report);
        }
        Command::Train => {
            let outcome = run_training(&mdp, &cfg.train)?;
            write(
                &out.join(&cfg.eval.metrics_file),
                MetricsRow::to_csv(&outcome.metrics),
            )?;
            write(&out.join(&cfg.eval.model_file), outcome.model.to_json())?;
            if let Some(last) = outcome.metrics.last() {
                say(MetricsRow::HEADER);
                say(last.csv_line());
            }
        }
        Command::Eval { model } => {
            let path = model
                .clone()
                .unwrap_or_else(|| out.join(&cfg.eval.model_file));
            let model = load_model(&mdp, &path)?;
            let report: EvalReport = evaluate_model(
                &mdp,
                &model,
                cfg.train.reward_exponent,
                &cfg.eval.thresholds,
            )?;
            write(&out.join("eval.json"), report.to_json())?;
            let kl = match cfg.eval.kl_direction {
                KlDirection::Forward => report.kl_forward,
                KlDirection::Reverse => report.kl_reverse,
            };
            say(format!("kl {kl}"));
            say(report.to_json());
        }
        Command::RenderGrid {
            field,
            backward,
            model,
        } => {
            let policy = match model {
                Some(p) => load_model(&mdp, p)?.forward_policy(),
                None => exact_policy(&mdp, *backward)?,
            };
            let (raw, image) = grid_field(&mdp, &cfg.env, *field, &policy)?;
            let h = cfg.env.side;
            let stem = match field {
                GridField::Marginal => "marginal",
                GridField::Flow => "flow",
                GridField::Target => "target",
                GridField::L => "l",
            };
            write(&out.join(format!("grid_{stem}.pgm")), pgm(h, h, &image))?;
            write(&out.join(format!("grid_{stem}.csv")), matrix_csv(h, &raw))?;
        }
    }
    Ok(())
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
