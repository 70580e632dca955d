mod args;
mod bench;
mod gateway;
mod node;
mod overlay;

use std::io::Write;
use std::path::Path;
use std::process::ExitCode;
use std::str::FromStr;

use clap::error::ErrorKind;
use clap::Parser;
use itenet::netsim::{ApModel, ScenarioConfig};
use serde::Serialize;
use serde_json::{Map, Value};

use args::{BenchCommand, Cli, Command, GatewayCommand, NodeCommand, ScenarioArgs, SimCommand};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags or configuration; nothing was changed.
    #[error("{0}")]
    Usage(String),
    /// The command started and then failed.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

pub fn usage(msg: impl std::fmt::Display) -> CliError {
    CliError::Usage(msg.to_string())
}

pub fn runtime(msg: impl std::fmt::Display) -> CliError {
    CliError::Runtime(msg.to_string())
}

/// Where results go: pretty JSON or a human summary, both on stdout.
pub struct Output {
    pub json: bool,
}

impl Output {
    pub fn emit<T: Serialize>(&self, value: &T, human: impl FnOnce() -> String) {
        let text = if self.json {
            serde_json::to_string_pretty(value).expect("reports serialize") + "\n"
        } else {
            human()
        };
        // a closed pipe (`| head`) is not worth a panic
        let mut stdout = std::io::stdout().lock();
        let _ = stdout.write_all(text.as_bytes()).and_then(|()| stdout.flush());
    }
}

/// A preset label, `zero`, or a path to a scenario document.
pub fn scenario_by_name(name: &str) -> Result<ScenarioConfig, CliError> {
    if name.eq_ignore_ascii_case("zero") {
        return Ok(ScenarioConfig::zero_delay());
    }
    if let Ok(s) = ScenarioConfig::builtin(name) {
        return Ok(s);
    }
    let path = Path::new(name);
    if !path.is_file() {
        return Err(usage(format!("unknown scenario `{name}`: expected A-D, zero or a JSON file")));
    }
    let bytes = std::fs::read(path).map_err(|e| runtime(format!("{name}: {e}")))?;
    ScenarioConfig::from_json(&bytes).map_err(|e| usage(format!("{name}: {e}")))
}

impl ScenarioArgs {
    pub fn resolve(&self) -> Result<ScenarioConfig, CliError> {
        let mut s = scenario_by_name(self.scenario.as_deref().unwrap_or("A"))?;
        if let Some(name) = &self.ap {
            let ap = ApModel::preset(name).ok_or_else(|| usage(format!("unknown access point preset `{name}`")))?;
            s = s.with_ap(ap);
        }
        if let Some(load) = self.load {
            s = s.with_load(load);
        }
        if let Some(loss) = self.loss {
            s = s.with_loss(loss);
        }
        s.validate().map_err(usage)?;
        Ok(s)
    }
}

/// Blocks until SIGINT (or SIGTERM on unix).
pub fn wait_for_signal() -> Result<(), CliError> {
    let rt = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .map_err(runtime)?;
    rt.block_on(async {
        #[cfg(unix)]
        {
            let mut term = tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate())?;
            tokio::select! {
                r = tokio::signal::ctrl_c() => r,
                _ = term.recv() => Ok(()),
            }
        }
        #[cfg(not(unix))]
        tokio::signal::ctrl_c().await
    })
    .map_err(runtime)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file: Option<Map<String, Value>> = cli.config.as_deref().map(overlay::load).transpose().map_err(usage)?;
    let file = file.as_ref();
    let out = Output { json: cli.json };
    macro_rules! merged {
        ($args:expr, $path:literal) => {
            overlay::apply($args, file, $path).map_err(usage)?
        };
    }
    match cli.command {
        Command::Gateway(GatewayCommand::Serve(a)) => gateway::serve(merged!(a, "gateway serve"), &out),
        Command::Gateway(GatewayCommand::UserAdd(a)) => gateway::user_add(merged!(a, "gateway user-add"), &out),
        Command::Gateway(GatewayCommand::WhitelistAdd(a)) => {
            gateway::whitelist_add(merged!(a, "gateway whitelist-add"), &out)
        }
        Command::Node(NodeCommand::Spawn(a)) => node::spawn(merged!(a, "node spawn"), &out),
        Command::Node(NodeCommand::Reset(a)) => node::reset(merged!(a, "node reset"), &out),
        Command::Sim(SimCommand::Run(a)) => bench::sim_run(merged!(a, "sim run"), &out),
        Command::Bench(BenchCommand::Pnp(a)) => bench::pnp(merged!(a, "bench pnp"), &out),
        Command::Bench(BenchCommand::Response(a)) => bench::response(merged!(a, "bench response"), &out),
        Command::FitGev(a) => bench::fit_gev(merged!(a, "fit-gev"), &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let level = match tracing::Level::from_str(&cli.log_level) {
        Ok(level) => level,
        Err(_) => {
            eprintln!("error: unknown log level `{}`", cli.log_level);
            return ExitCode::from(1);
        }
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_max_level(level)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
