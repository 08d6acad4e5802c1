//! `vrgl` subcommands. Each one is thin orchestration over `vrgl-core` and
//! `vrgl-bridge`; outputs land under `--out` with fixed file names.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

mod bench;
mod export;
mod intent;
pub mod presets;
mod record;
mod replay;
mod serve;
pub mod protocol;
mod train;

pub use serve::{Server, ServeOptions};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unreadable or invalid input files. Exit code 2.
    Usage(String),
    /// Everything else. Exit code 1.
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

pub(crate) fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub(crate) fn read_input(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    serde_json::from_str(&read_input(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))
}

/// Write `name` under the output directory, creating it if needed.
pub(crate) fn write_output(out: &Path, name: &str, contents: &str) -> CliResult<PathBuf> {
    fs::create_dir_all(out)?;
    let path = out.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

pub(crate) fn to_json_pretty<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("output serializes");
    s.push('\n');
    s
}

#[derive(Debug, Parser)]
#[command(name = "vrgl", version, about = "Indoor-scene simulator, topic bridge and learning pipelines")]
pub struct Cli {
    /// Output directory for every file a subcommand writes.
    #[arg(long, global = true, env = "VRGL_OUT", default_value = ".")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the broker, the simulator loop and the snapshot publisher.
    Serve(ServeArgs),
    /// Record a session from a running server into <out>/<session>.jsonl.
    Record(RecordArgs),
    /// Train an RL agent; writes train_<algo>.csv and checkpoint_<algo>.json.
    TrainRl(TrainRlArgs),
    /// Learn a reward from demonstrations; writes reward_<algo>.json and diagnostics_<algo>.json.
    TrainIrl(TrainIrlArgs),
    /// Goal posteriors along a recorded trajectory; writes posterior_<algo>.jsonl.
    PredictIntent(PredictArgs),
    /// Loopback throughput and integrity benchmark; writes bench.json.
    BenchBridge(BenchArgs),
    /// Re-simulate a session log and compare odometry; writes replay.json.
    Replay(ReplayArgs),
    /// Export plotting and pipeline data.
    Export(ExportArgs),
}

#[derive(Debug, clap::Args)]
pub struct ServeArgs {
    #[arg(long, env = "VRGL_SCENE")]
    pub scene: PathBuf,
    #[arg(long, env = "VRGL_BIND", default_value = "127.0.0.1")]
    pub bind: std::net::IpAddr,
    /// TCP bridge port; 0 picks a free port.
    #[arg(long, env = "VRGL_TCP", default_value_t = vrgl_bridge::DEFAULT_TCP_PORT)]
    pub tcp: u16,
    /// WebSocket and static HTTP port; 0 picks a free port.
    #[arg(long, env = "VRGL_WS", default_value_t = vrgl_bridge::DEFAULT_WS_PORT)]
    pub ws: u16,
    /// Snapshot publish rate.
    #[arg(long, env = "VRGL_HZ", default_value_t = 20, value_parser = clap::value_parser!(u32).range(1..=60))]
    pub hz: u32,
    /// Directory served over HTTP on the WebSocket port.
    #[arg(long = "static", env = "VRGL_STATIC")]
    pub static_dir: Option<PathBuf>,
    /// Agents that answer social signals (e.g. `robot`).
    #[arg(long = "social", env = "VRGL_SOCIAL", value_delimiter = ',')]
    pub social: Vec<String>,
    /// Publish live goal posteriors for this agent.
    #[arg(long, env = "VRGL_PREDICT_AGENT")]
    pub predict_agent: Option<String>,
    #[arg(long, env = "VRGL_PREDICT_ALGO", default_value = "line")]
    pub predict_algo: Algo,
    /// Goal entity ids for live prediction; the coffee-task subgoals when empty.
    #[arg(long, env = "VRGL_GOALS", value_delimiter = ',')]
    pub goals: Vec<String>,
    /// Stop after this many seconds instead of waiting for Ctrl-C.
    #[arg(long, env = "VRGL_DURATION")]
    pub duration: Option<f64>,
}

#[derive(Debug, clap::Args)]
pub struct RecordArgs {
    #[arg(long, env = "VRGL_SESSION")]
    pub session: String,
    #[arg(long, env = "VRGL_SUBJECT")]
    pub subject: String,
    #[arg(long, env = "VRGL_CONNECT", default_value = "127.0.0.1:9763")]
    pub connect: SocketAddr,
    /// Stop after this many seconds instead of waiting for Ctrl-C.
    #[arg(long, env = "VRGL_DURATION")]
    pub duration: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RlAlgo {
    Q,
    Dqn,
    Dueling,
    Ac,
    Ddpg,
}

impl RlAlgo {
    pub fn name(self) -> &'static str {
        match self {
            RlAlgo::Q => "q",
            RlAlgo::Dqn => "dqn",
            RlAlgo::Dueling => "dueling",
            RlAlgo::Ac => "ac",
            RlAlgo::Ddpg => "ddpg",
        }
    }
}

#[derive(Debug, clap::Args)]
pub struct TrainRlArgs {
    #[arg(long, env = "VRGL_ALGO")]
    pub algo: RlAlgo,
    /// Environment config JSON; the built-in maze (or corridor for ddpg) when absent.
    #[arg(long, env = "VRGL_ENV")]
    pub env: Option<PathBuf>,
    #[arg(long, env = "VRGL_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Training config JSON; missing fields take the algorithm's preset.
    #[arg(long, env = "VRGL_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, env = "VRGL_EPISODES")]
    pub episodes: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IrlAlgo {
    Maxent,
    Bayesian,
}

#[derive(Debug, clap::Args)]
pub struct TrainIrlArgs {
    #[arg(long, env = "VRGL_ALGO")]
    pub algo: IrlAlgo,
    /// Grid MDP JSON, as written by `export --what mdp`.
    #[arg(long, env = "VRGL_MDP")]
    pub mdp: PathBuf,
    /// Demonstrations JSONL, one `{"traj":[[s,a],...]}` per line.
    #[arg(long, env = "VRGL_DEMOS")]
    pub demos: PathBuf,
    #[arg(long, env = "VRGL_CONFIG")]
    pub config: Option<PathBuf>,
    /// Overrides the Bayesian chain seed.
    #[arg(long, env = "VRGL_SEED")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Algo {
    Line,
    Perp,
    Grammar,
}

impl Algo {
    pub fn predictor(self) -> vrgl_core::intent::Predictor {
        use vrgl_core::intent::Predictor;
        match self {
            Algo::Line => Predictor::Line,
            Algo::Perp => Predictor::Perp,
            Algo::Grammar => Predictor::Grammar,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Algo::Line => "line",
            Algo::Perp => "perp",
            Algo::Grammar => "grammar",
        }
    }
}

#[derive(Debug, clap::Args)]
pub struct PredictArgs {
    #[arg(long, env = "VRGL_ALGO")]
    pub algo: Algo,
    #[arg(long, env = "VRGL_SESSION")]
    pub session: PathBuf,
    /// Scene document the session was recorded in.
    #[arg(long, env = "VRGL_SCENE")]
    pub scene: PathBuf,
    /// Agent to track; the first agent with odometry when absent.
    #[arg(long, env = "VRGL_AGENT")]
    pub agent: Option<String>,
    /// Goal entity ids; the grammar's subgoals when absent.
    #[arg(long, env = "VRGL_GOALS", value_delimiter = ',')]
    pub goals: Vec<String>,
    /// Task grammar JSON; the coffee task when absent.
    #[arg(long, env = "VRGL_GRAMMAR")]
    pub grammar: Option<PathBuf>,
    /// Planning grid cell size, metres.
    #[arg(long, env = "VRGL_RESOLUTION", default_value_t = 0.5)]
    pub resolution: f64,
    #[arg(long, env = "VRGL_BETA")]
    pub beta: Option<f64>,
    #[arg(long, env = "VRGL_LAMBDA")]
    pub lambda: Option<f64>,
    #[arg(long, env = "VRGL_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, clap::Args)]
pub struct BenchArgs {
    #[arg(long, env = "VRGL_SIZE", default_value_t = 524_288)]
    pub size: usize,
    #[arg(long, env = "VRGL_COUNT", default_value_t = 1000)]
    pub count: u64,
    /// Existing broker; an in-process one on a free port when absent.
    #[arg(long, env = "VRGL_CONNECT")]
    pub connect: Option<SocketAddr>,
    #[arg(long, env = "VRGL_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, clap::Args)]
pub struct ReplayArgs {
    #[arg(long, env = "VRGL_SESSION")]
    pub session: PathBuf,
    #[arg(long, env = "VRGL_SCENE")]
    pub scene: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExportWhat {
    /// `footprints_<agent>.csv` from one session.
    Footprints,
    /// `heatmap_<object>.json`: per-session grasp maps and their average.
    Heatmap,
    /// `curves.csv`: training reports merged with an `algo` column.
    Curves,
    /// `mdp.json`: grid MDP of an environment config.
    Mdp,
    /// `mdp.json` and `demos.jsonl`: session footprints mapped onto the MDP.
    Demos,
}

#[derive(Debug, clap::Args)]
pub struct ExportArgs {
    #[arg(long, env = "VRGL_WHAT")]
    pub what: ExportWhat,
    /// Session logs (footprints, heatmap, demos).
    #[arg(long = "session", env = "VRGL_SESSION", value_delimiter = ',')]
    pub sessions: Vec<PathBuf>,
    /// Training CSVs (curves).
    #[arg(long = "report", env = "VRGL_REPORT", value_delimiter = ',')]
    pub reports: Vec<PathBuf>,
    #[arg(long, env = "VRGL_AGENT")]
    pub agent: Option<String>,
    /// Grasped object for heat maps.
    #[arg(long, env = "VRGL_OBJECT")]
    pub object: Option<String>,
    /// Environment config (mdp, demos).
    #[arg(long, env = "VRGL_ENV")]
    pub env: Option<PathBuf>,
    /// Grid cell size for maze MDPs, metres; 1 when absent.
    #[arg(long, env = "VRGL_RESOLUTION")]
    pub resolution: Option<f64>,
    #[arg(long, env = "VRGL_FEATURES", default_value = "onehot")]
    pub features: Features,
    #[arg(long, env = "VRGL_GAMMA", default_value_t = 0.95)]
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Features {
    Onehot,
    Handcrafted,
}

pub fn run(cli: Cli) -> CliResult {
    let out = cli.out;
    match cli.command {
        Command::Serve(a) => serve::run(&a),
        Command::Record(a) => record::run(&a, &out),
        Command::TrainRl(a) => train::run_rl(&a, &out),
        Command::TrainIrl(a) => train::run_irl(&a, &out),
        Command::PredictIntent(a) => intent::run(&a, &out),
        Command::BenchBridge(a) => bench::run(&a, &out),
        Command::Replay(a) => replay::run(&a, &out),
        Command::Export(a) => export::run(&a, &out),
    }
}
