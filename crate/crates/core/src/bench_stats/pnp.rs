//! Onboarding timing: fresh nodes from power-on to `Listen`.

use std::net::{Ipv4Addr, SocketAddr};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::summary::{mean, sample_variance, Estimate};
use super::BenchError;
use crate::gateway::server::{self, ServerOptions};
use crate::gateway::{Gateway, GatewayConfig};
use crate::fixtures;
use crate::netsim::realtime::{RealtimeNode, RealtimeOptions};
use crate::netsim::{default_identity, Fabric, ScenarioConfig, Simulation, DEFAULT_HORIZON};
use crate::node_fsm::{NodeRuntime, NodeSettings, NodeState, NodeTiming};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PnpMode {
    /// Simulated time; runs take milliseconds.
    Virtual,
    /// A real gateway and node on 127.0.0.1, timed by the wall clock.
    Loopback,
}

#[derive(Debug, Clone)]
pub struct PnpOptions {
    pub runs: usize,
    pub seed: u64,
    pub mode: PnpMode,
    pub timing: NodeTiming,
    /// Give-up time for one loopback run.
    pub run_timeout: Duration,
}

impl Default for PnpOptions {
    fn default() -> Self {
        Self {
            runs: 20,
            seed: 0,
            mode: PnpMode::Virtual,
            timing: NodeTiming::default(),
            run_timeout: Duration::from_secs(120),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateTiming {
    pub state: String,
    #[serde(flatten)]
    pub estimate: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub version: u32,
    pub scenario: String,
    pub ap: String,
    pub mode: PnpMode,
    pub seed: u64,
    pub runs: usize,
    pub completed: usize,
    /// Runs that never reached `Listen`; excluded from every mean.
    pub failed: usize,
    pub states: Vec<StateTiming>,
    /// RequestConfig, WaitResponseA, RequestRegister and WaitResponseB.
    pub protocol: Option<Estimate>,
    pub total: Option<Estimate>,
    pub total_variance_ms2: Option<f64>,
    pub total_min_ms: Option<f64>,
    pub total_max_ms: Option<f64>,
    pub totals_ms: Vec<f64>,
    pub protocol_ms: Vec<f64>,
}

/// Per-state milliseconds of one completed run, in `NodeState::ALL` order.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTiming {
    pub states: Vec<(NodeState, f64)>,
    pub total_ms: f64,
}

impl RunTiming {
    pub fn from_runtime(runtime: &NodeRuntime) -> Option<Self> {
        let total = runtime.time_to_listen()?;
        let durations = runtime.state_durations();
        let states = NodeState::ALL
            .iter()
            .map(|s| {
                let d = durations
                    .iter()
                    .find(|(st, _)| st == s)
                    .map_or(Duration::ZERO, |(_, d)| *d);
                (*s, d.as_secs_f64() * 1000.0)
            })
            .collect();
        Some(Self {
            states,
            total_ms: total.as_secs_f64() * 1000.0,
        })
    }

    pub fn protocol_ms(&self) -> f64 {
        self.states
            .iter()
            .filter(|(s, _)| NodeState::PROTOCOL.contains(s))
            .map(|(_, ms)| ms)
            .sum()
    }
}

pub fn run_pnp_benchmark(scenario: &ScenarioConfig, options: &PnpOptions) -> Result<TimingSummary, BenchError> {
    scenario.validate()?;
    let runs: Vec<Option<RunTiming>> = match options.mode {
        PnpMode::Virtual => (0..options.runs)
            .map(|r| virtual_run(scenario, options, r))
            .collect::<Result<_, _>>()?,
        PnpMode::Loopback => loopback_runs(scenario, options)?,
    };
    Ok(summarize(scenario, options, &runs))
}

fn virtual_run(scenario: &ScenarioConfig, options: &PnpOptions, run: usize) -> Result<Option<RunTiming>, BenchError> {
    let mut sim = Simulation::new(scenario.clone(), options.seed.wrapping_add(run as u64))?;
    sim.set_timing(options.timing.clone());
    sim.add_node(default_identity(0))?;
    sim.run(DEFAULT_HORIZON);
    Ok(RunTiming::from_runtime(sim.node(0)))
}

fn loopback_runs(scenario: &ScenarioConfig, options: &PnpOptions) -> Result<Vec<Option<RunTiming>>, BenchError> {
    let mut config = GatewayConfig::default();
    config.network.gateway = Ipv4Addr::LOCALHOST;
    let handle = server::spawn(
        Gateway::ephemeral(config),
        SocketAddr::from((Ipv4Addr::LOCALHOST, 0)),
        ServerOptions::default(),
    )?;
    let port = handle.addr().port();
    let mut out = Vec::with_capacity(options.runs);
    for run in 0..options.runs {
        let id = default_identity(run);
        let ite = fixtures::builtin_ite(id.node_type(), id.version()).expect("bundled identity");
        let mut settings = NodeSettings {
            timing: options.timing.clone(),
            listen_port: 0,
            seed: run as u64,
            ..NodeSettings::default()
        };
        settings.factory.config_gateway = Ipv4Addr::LOCALHOST;
        settings.factory.gateway_port = port;
        let runtime = NodeRuntime::fresh(id, ite, settings).map_err(crate::netsim::SimError::from)?;
        let fabric = Fabric::new(scenario.clone(), options.seed.wrapping_add(run as u64));
        let mut node = RealtimeNode::start(runtime, fabric, RealtimeOptions::default())?;
        let timing = node
            .wait_listen(options.run_timeout)
            .and_then(|_| RunTiming::from_runtime(&node.runtime()));
        let _ = node.stop();
        out.push(timing);
    }
    handle.stop()?;
    Ok(out)
}

fn summarize(scenario: &ScenarioConfig, options: &PnpOptions, runs: &[Option<RunTiming>]) -> TimingSummary {
    let done: Vec<&RunTiming> = runs.iter().flatten().collect();
    let states = NodeState::ALL
        .iter()
        .enumerate()
        .filter_map(|(i, s)| {
            let xs: Vec<f64> = done.iter().map(|r| r.states[i].1).collect();
            Estimate::of(&xs).map(|estimate| StateTiming {
                state: s.name().to_owned(),
                estimate,
            })
        })
        .collect();
    let totals: Vec<f64> = done.iter().map(|r| r.total_ms).collect();
    let protocol: Vec<f64> = done.iter().map(|r| r.protocol_ms()).collect();
    TimingSummary {
        version: super::REPORT_VERSION,
        scenario: scenario.label.clone(),
        ap: scenario.ap.name.clone(),
        mode: options.mode,
        seed: options.seed,
        runs: runs.len(),
        completed: done.len(),
        failed: runs.len() - done.len(),
        states,
        protocol: Estimate::of(&protocol),
        total: Estimate::of(&totals),
        total_variance_ms2: sample_variance(&totals),
        total_min_ms: mean(&totals).map(|_| totals.iter().copied().fold(f64::INFINITY, f64::min)),
        total_max_ms: mean(&totals).map(|_| totals.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
        totals_ms: totals,
        protocol_ms: protocol,
    }
}
