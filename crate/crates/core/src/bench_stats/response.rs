//! Paced `GET /id` round trips against one listening node.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::gev::{fit_gev, GevParams};
use super::summary::{histogram, mean, Binning, Histogram};
use super::BenchError;
use crate::http::HttpRequest;
use crate::netsim::{default_identity, Fabric, ScenarioConfig, Simulation, Traffic, DEFAULT_HORIZON};
use crate::node_fsm::NodeState;

/// Keeps the benchmark's draws independent of the onboarding run.
const BENCH_STREAM: u64 = 0x5851_f42d_4c95_7f2d;

#[derive(Debug, Clone)]
pub struct ResponseOptions {
    pub requests: usize,
    /// Pause between a reply (or give-up) and the next request.
    pub gap: Duration,
    pub seed: u64,
    /// A request without a reply by then is a failure.
    pub timeout: Duration,
    pub binning: Binning,
}

impl Default for ResponseOptions {
    fn default() -> Self {
        Self {
            requests: 1000,
            gap: Duration::from_millis(25),
            seed: 0,
            timeout: Duration::from_millis(1000),
            binning: Binning::FreedmanDiaconis,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RttSample {
    pub idx: usize,
    pub start_ms: f64,
    /// Failed requests record the timeout.
    pub rtt_ms: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseBenchReport {
    pub version: u32,
    pub scenario: String,
    pub ap: String,
    pub load: f64,
    pub loss_probability: f64,
    pub seed: u64,
    pub gap_ms: f64,
    pub timeout_ms: f64,
    pub sample_count: usize,
    pub success_count: usize,
    pub failure_count: usize,
    pub failure_ratio: f64,
    /// Over successful requests only.
    pub min_ms: Option<f64>,
    pub max_ms: Option<f64>,
    pub mean_ms: Option<f64>,
    /// Over every request, failures counted at the timeout.
    pub mean_with_failures_ms: Option<f64>,
    pub histogram: Option<Histogram>,
    pub gev: Option<GevParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gev_error: Option<String>,
    pub traffic: Traffic,
}

#[derive(Debug, Clone)]
pub struct ResponseRun {
    pub report: ResponseBenchReport,
    pub samples: Vec<RttSample>,
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1000.0
}

/// Onboards one node in virtual time, then issues `options.requests`
/// requests, each starting `options.gap` after the previous one finished.
pub fn run_response_benchmark(scenario: &ScenarioConfig, options: &ResponseOptions) -> Result<ResponseRun, BenchError> {
    let mut sim = Simulation::new(scenario.clone(), options.seed)?;
    let id = default_identity(0);
    let node = sim.add_node(id)?;
    sim.run(DEFAULT_HORIZON);
    if sim.node(node).state() != NodeState::Listen {
        return Err(BenchError::NodeAbsent);
    }
    let mut fabric = Fabric::new(scenario.clone(), options.seed ^ BENCH_STREAM);
    let request = HttpRequest::get("/id");
    let request_bytes = request.to_bytes("192.168.1.123").len();
    let expected = id.to_string();
    let processing = scenario.node_processing;

    let mut t = sim.now();
    let mut samples = Vec::with_capacity(options.requests);
    for idx in 0..options.requests {
        let draw = fabric.exchange(&processing);
        let (elapsed, ok) = if draw.lost {
            fabric.account_exchange(request_bytes, None);
            (options.timeout, false)
        } else {
            let response = sim.node_mut(node).serve_request(&request);
            fabric.account_exchange(request_bytes, Some(response.to_bytes().len()));
            let well_formed = response.status == 200
                && response
                    .json_body()
                    .is_some_and(|v| v.get("NodeID").and_then(|n| n.as_str()) == Some(expected.as_str()));
            let rtt = draw.round_trip();
            if well_formed && rtt <= options.timeout {
                (rtt, true)
            } else {
                (options.timeout, false)
            }
        };
        samples.push(RttSample {
            idx,
            start_ms: ms(t),
            rtt_ms: ms(elapsed),
            ok,
        });
        t += elapsed + options.gap;
    }
    let report = build_report(scenario, options, &samples, fabric.traffic());
    Ok(ResponseRun { report, samples })
}

fn build_report(
    scenario: &ScenarioConfig,
    options: &ResponseOptions,
    samples: &[RttSample],
    traffic: Traffic,
) -> ResponseBenchReport {
    let ok: Vec<f64> = samples.iter().filter(|s| s.ok).map(|s| s.rtt_ms).collect();
    let all: Vec<f64> = samples.iter().map(|s| s.rtt_ms).collect();
    let failures = samples.len() - ok.len();
    let (gev, gev_error) = match fit_gev(&ok) {
        Ok(p) => (Some(p), None),
        Err(e) => (None, Some(e.to_string())),
    };
    ResponseBenchReport {
        version: super::REPORT_VERSION,
        scenario: scenario.label.clone(),
        ap: scenario.ap.name.clone(),
        load: scenario.ap.load,
        loss_probability: scenario.loss_probability,
        seed: options.seed,
        gap_ms: ms(options.gap),
        timeout_ms: ms(options.timeout),
        sample_count: samples.len(),
        success_count: ok.len(),
        failure_count: failures,
        failure_ratio: if samples.is_empty() {
            0.0
        } else {
            failures as f64 / samples.len() as f64
        },
        min_ms: mean(&ok).map(|_| ok.iter().copied().fold(f64::INFINITY, f64::min)),
        max_ms: mean(&ok).map(|_| ok.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
        mean_ms: mean(&ok),
        mean_with_failures_ms: mean(&all),
        histogram: histogram(&ok, options.binning).ok(),
        gev,
        gev_error,
        traffic,
    }
}
