//! Command-line surface. Every flag has an `ITENET_*` environment
//! counterpart and (except the globals) a key in the `--config` file.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "itenet", version, about = "Plug-and-play transducer network: gateway, nodes, simulator and benchmarks")]
pub struct Cli {
    /// JSON file of flag values; explicit flags win over it.
    #[arg(long, global = true, env = "ITENET_CONFIG", value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Machine-readable output on stdout.
    #[arg(long, global = true, env = "ITENET_JSON")]
    pub json: bool,

    /// error, warn, info, debug or trace.
    #[arg(long, global = true, env = "ITENET_LOG", default_value = "warn")]
    pub log_level: String,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run or administer the gateway.
    #[command(subcommand)]
    Gateway(GatewayCommand),
    /// Run or reset an emulated node.
    #[command(subcommand)]
    Node(NodeCommand),
    /// Discrete-event simulation of many nodes.
    #[command(subcommand)]
    Sim(SimCommand),
    /// Timing benchmarks.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Fit a GEV distribution to one sample per line.
    FitGev(FitGevArgs),
}

#[derive(Debug, Subcommand)]
pub enum GatewayCommand {
    /// Serve the REST API and the node endpoints until interrupted.
    Serve(ServeArgs),
    /// Add an API user to the store.
    UserAdd(UserAddArgs),
    /// Admit an identifier under whitelist mode.
    WhitelistAdd(WhitelistAddArgs),
}

#[derive(Debug, Subcommand)]
pub enum NodeCommand {
    /// Boot a node against a running gateway.
    Spawn(SpawnArgs),
    /// Factory-reset a node's NVM image.
    Reset(ResetArgs),
}

#[derive(Debug, Subcommand)]
pub enum SimCommand {
    /// Onboard a population of nodes in virtual time.
    Run(SimRunArgs),
}

#[derive(Debug, Subcommand)]
pub enum BenchCommand {
    /// Power-on to Listen timing per state.
    Pnp(PnpArgs),
    /// Paced GET /id round trips against a listening node.
    Response(ResponseArgs),
}

#[derive(Debug, Default, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ServeArgs {
    /// TCP port [default: 5050]
    #[arg(long, env = "ITENET_PORT")]
    pub port: Option<u16>,
    /// Listen address [default: 0.0.0.0]
    #[arg(long, env = "ITENET_BIND")]
    pub bind: Option<String>,
    /// automatic, dynamic_request or whitelist [default: the stored mode]
    #[arg(long, env = "ITENET_MODE")]
    pub mode: Option<String>,
    /// State directory [default: ./itenet-state]
    #[arg(long, env = "ITENET_STORE")]
    pub store: Option<PathBuf>,
    /// Extra ITE documents laid out as <type>/<version>.json
    #[arg(long, env = "ITENET_ITE_DIR")]
    pub ite_dir: Option<PathBuf>,
    /// Base URL of a remote ITE repository
    #[arg(long, env = "ITENET_ITE_REMOTE")]
    pub ite_remote: Option<String>,
    /// SSID handed to configured nodes [default: itn-home]
    #[arg(long, env = "ITENET_NETWORK_SSID")]
    pub network_ssid: Option<String>,
    /// Password handed to configured nodes [default: itn-home-password]
    #[arg(long, env = "ITENET_NETWORK_PASSWORD")]
    pub network_password: Option<String>,
    /// Gateway address handed to configured nodes [default: 127.0.0.1]
    #[arg(long, env = "ITENET_NETWORK_GATEWAY")]
    pub network_gateway: Option<String>,
    /// Timeout for proxied and polling requests to nodes [default: 5000]
    #[arg(long, env = "ITENET_NODE_TIMEOUT_MS")]
    pub node_timeout_ms: Option<u64>,
    /// Seconds between liveness probes [default: 60]
    #[arg(long, env = "ITENET_LIVENESS_S")]
    pub liveness_s: Option<u64>,
}

#[derive(Debug, Default, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct UserAddArgs {
    #[arg(long, env = "ITENET_STORE")]
    pub store: Option<PathBuf>,
    #[arg(long, env = "ITENET_USER")]
    pub user: Option<String>,
    #[arg(long, env = "ITENET_USER_PASSWORD")]
    pub user_password: Option<String>,
}

#[derive(Debug, Default, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct WhitelistAddArgs {
    #[arg(long, env = "ITENET_STORE")]
    pub store: Option<PathBuf>,
    /// Identifier as type.serial.version
    #[arg(long, env = "ITENET_NODE_ID")]
    pub node_id: Option<String>,
}

#[derive(Debug, Default, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct NodeIdentity {
    #[arg(long = "type", env = "ITENET_TYPE")]
    #[serde(rename = "type")]
    pub node_type: Option<u32>,
    #[arg(long, env = "ITENET_SERIAL")]
    pub serial: Option<u32>,
    #[arg(long, env = "ITENET_VERSION")]
    pub version: Option<u8>,
    /// NVM image file [default: node-<type>.<serial>.<version>.nvm]
    #[arg(long, env = "ITENET_NVM")]
    pub nvm: Option<PathBuf>,
}

#[derive(Debug, Default, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SpawnArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub identity: NodeIdentity,
    /// Start from a factory-fresh image even if one exists
    #[arg(long, env = "ITENET_FRESH")]
    #[serde(default)]
    pub fresh: bool,
    /// ITE document to describe the node [default: the bundled one]
    #[arg(long, env = "ITENET_ITE")]
    pub ite: Option<PathBuf>,
    /// Factory configuration gateway as ip:port [default: 127.0.0.1:5050]
    #[arg(long, env = "ITENET_GATEWAY")]
    pub gateway: Option<String>,
    /// Port of the node's own server; 0 picks a free one [default: 0]
    #[arg(long, env = "ITENET_LISTEN_PORT")]
    pub listen_port: Option<u16>,
    /// Address of the node's own server [default: 127.0.0.1]
    #[arg(long, env = "ITENET_BIND_IP")]
    pub bind_ip: Option<String>,
    /// Network emulation: A-D, zero, or a scenario JSON file [default: zero]
    #[arg(long, env = "ITENET_SCENARIO")]
    pub scenario: Option<String>,
    /// Skip boot and restart delays
    #[arg(long, env = "ITENET_INSTANT")]
    #[serde(default)]
    pub instant: bool,
    #[arg(long, env = "ITENET_SEED")]
    pub seed: Option<u64>,
    /// Exit once the node is listening instead of serving until interrupted
    #[arg(long, env = "ITENET_UNTIL_LISTEN")]
    #[serde(default)]
    pub until_listen: bool,
    /// Give up when the node is not listening by then [default: 120]
    #[arg(long, env = "ITENET_TIMEOUT_S")]
    pub timeout_s: Option<u64>,
}

#[derive(Debug, Default, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ResetArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub identity: NodeIdentity,
}

/// Scenario selection shared by the simulator and the benchmarks.
#[derive(Debug, Default, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ScenarioArgs {
    /// A-D, zero, or a scenario JSON file [default: A]
    #[arg(long, env = "ITENET_SCENARIO")]
    pub scenario: Option<String>,
    /// Replace the access point with a preset: linksys-like, smc-like or zero
    #[arg(long, env = "ITENET_AP")]
    pub ap: Option<String>,
    /// Offered load on the access point, 1.0 being saturation
    #[arg(long, env = "ITENET_LOAD")]
    pub load: Option<f64>,
    /// Per-exchange loss probability
    #[arg(long, env = "ITENET_LOSS")]
    pub loss: Option<f64>,
    #[arg(long, env = "ITENET_SEED")]
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SimRunArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub scenario: ScenarioArgs,
    /// Number of nodes [default: 10]
    #[arg(long, env = "ITENET_NODES")]
    pub nodes: Option<usize>,
    /// automatic, dynamic_request or whitelist [default: automatic]
    #[arg(long, env = "ITENET_MODE")]
    pub mode: Option<String>,
    /// Virtual-time horizon [default: 600]
    #[arg(long, env = "ITENET_HORIZON_S")]
    pub horizon_s: Option<u64>,
    /// Write the event trace as JSON lines
    #[arg(long, env = "ITENET_TRACE")]
    pub trace: Option<PathBuf>,
    /// Write per-node state visits as CSV
    #[arg(long, env = "ITENET_CSV")]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Default, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct PnpArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub scenario: ScenarioArgs,
    /// [default: 20]
    #[arg(long, env = "ITENET_RUNS")]
    pub runs: Option<usize>,
    /// virtual or loopback [default: virtual]
    #[arg(long = "mode", env = "ITENET_PNP_MODE")]
    #[serde(rename = "mode")]
    pub pnp_mode: Option<String>,
    /// Skip boot and restart delays
    #[arg(long, env = "ITENET_INSTANT")]
    #[serde(default)]
    pub instant: bool,
}

#[derive(Debug, Default, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ResponseArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub scenario: ScenarioArgs,
    /// [default: 1000]
    #[arg(long, env = "ITENET_REQUESTS")]
    pub requests: Option<usize>,
    /// Pause after each reply [default: 25]
    #[arg(long, env = "ITENET_GAP_MS")]
    pub gap_ms: Option<f64>,
    /// [default: 1000]
    #[arg(long, env = "ITENET_TIMEOUT_MS")]
    pub timeout_ms: Option<f64>,
    /// Histogram with this many bins [default: Freedman-Diaconis]
    #[arg(long, env = "ITENET_BINS", conflicts_with = "bin_width_ms")]
    pub bins: Option<usize>,
    /// Histogram with bins this wide
    #[arg(long, env = "ITENET_BIN_WIDTH_MS")]
    pub bin_width_ms: Option<f64>,
    /// Write every sample as TSV
    #[arg(long, env = "ITENET_SAMPLES")]
    pub samples: Option<PathBuf>,
}

#[derive(Debug, Default, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct FitGevArgs {
    /// One value per line; `-` reads stdin
    #[arg(long, env = "ITENET_INPUT")]
    pub input: Option<PathBuf>,
    /// Optimizer iteration budget [default: 5000]
    #[arg(long, env = "ITENET_MAX_ITERATIONS")]
    pub max_iterations: Option<usize>,
}
