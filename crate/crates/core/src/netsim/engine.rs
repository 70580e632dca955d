//! Discrete-event simulation of nodes onboarding through one gateway.
//!
//! Single-threaded: events are ordered by `(time, insertion sequence)`, so a
//! scenario and a seed fix the whole trace. The gateway is a single-server
//! queue; requests wait while it is busy.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::net::Ipv4Addr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::clock::{Clock, VirtualClock};
use super::fabric::{ConnectOutcome, Fabric, Traffic};
use super::scenario::{ScenarioConfig, ScenarioError};
use crate::fixtures;
use crate::gateway::{AdmissionMode, Gateway, GatewayConfig};
use crate::http::{HttpRequest, HttpResponse, Method};
use crate::ite_model::NodeIdentifier;
use crate::node_fsm::{ApRole, NodeAction, NodeError, NodeEvent, NodeMessage, NodeRuntime, NodeSettings, NodeState, NodeTiming};

/// One line of the JSONL trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub t_ms: f64,
    pub actor: String,
    pub event: String,
    pub detail: Value,
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("no bundled ITE for node {0}")]
    NoIte(NodeIdentifier),
    #[error(transparent)]
    Node(#[from] NodeError),
}

#[derive(Debug)]
enum Ev {
    Node {
        node: usize,
        event: NodeEvent,
        /// Set on events that race a timeout; only the first one counts.
        token: Option<u64>,
    },
    Transmit {
        node: usize,
        message: NodeMessage,
        timeout: Duration,
    },
    GatewayArrival {
        node: usize,
        message: NodeMessage,
        token: u64,
        processing: Duration,
        response_leg: Duration,
    },
}

struct Scheduled {
    at: Duration,
    seq: u64,
    ev: Ev,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    // BinaryHeap is a max-heap; invert for earliest-first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.at, other.seq).cmp(&(self.at, self.seq))
    }
}

struct SimNode {
    runtime: NodeRuntime,
    config_ip: Ipv4Addr,
    operational_ip: Ipv4Addr,
    awaiting: Option<u64>,
}

impl SimNode {
    fn actor(&self) -> String {
        format!("node:{}", self.runtime.identifier())
    }
}

/// The identity given to the `i`-th simulated node: bundled ITE types in
/// turn, serials counting up per type.
pub fn default_identity(i: usize) -> NodeIdentifier {
    let ites = fixtures::ITE_DOCUMENTS;
    let (t, v, _) = ites[i % ites.len()];
    let serial = (i / ites.len()) as u32 + 1;
    NodeIdentifier::new(t, serial, v).expect("bundled ITE keys are in range")
}

fn config_ip(i: usize) -> Ipv4Addr {
    let h = i + 2;
    Ipv4Addr::new(192, 168, 4 + (h / 254) as u8, (h % 254) as u8 + 1)
}

fn operational_ip(i: usize) -> Ipv4Addr {
    let h = i + 2;
    Ipv4Addr::new(10, 1, (h / 254) as u8, (h % 254) as u8 + 1)
}

fn ms(t: Duration) -> f64 {
    (t.as_secs_f64() * 1e6).round() / 1e3
}

pub struct Simulation {
    clock: VirtualClock,
    fabric: Fabric,
    gateway: Gateway,
    gateway_busy_until: Duration,
    nodes: Vec<SimNode>,
    queue: BinaryHeap<Scheduled>,
    seq: u64,
    next_token: u64,
    trace: Vec<TraceEvent>,
    timing: NodeTiming,
}

impl Simulation {
    pub fn new(scenario: ScenarioConfig, seed: u64) -> Result<Self, SimError> {
        scenario.validate()?;
        Ok(Self {
            clock: VirtualClock::new(),
            fabric: Fabric::new(scenario, seed),
            gateway: Gateway::ephemeral(GatewayConfig::default()),
            gateway_busy_until: Duration::ZERO,
            nodes: Vec::new(),
            queue: BinaryHeap::new(),
            seq: 0,
            next_token: 0,
            trace: Vec::new(),
            timing: NodeTiming::default(),
        })
    }

    /// Timing for nodes added from now on.
    pub fn set_timing(&mut self, timing: NodeTiming) {
        self.timing = timing;
    }

    pub fn set_admission(&mut self, mode: AdmissionMode) {
        self.gateway.set_mode(mode);
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    pub fn gateway_mut(&mut self) -> &mut Gateway {
        &mut self.gateway
    }

    pub fn now(&self) -> Duration {
        self.clock.now()
    }

    /// Adds a factory-fresh node powered on at the current time.
    pub fn add_node(&mut self, id: NodeIdentifier) -> Result<usize, SimError> {
        let ite = fixtures::builtin_ite(id.node_type(), id.version()).ok_or(SimError::NoIte(id))?;
        let index = self.nodes.len();
        let settings = NodeSettings {
            timing: self.timing.clone(),
            seed: index as u64,
            ..NodeSettings::default()
        };
        let runtime = NodeRuntime::fresh(id, ite, settings)?;
        self.nodes.push(SimNode {
            runtime,
            config_ip: config_ip(index),
            operational_ip: operational_ip(index),
            awaiting: None,
        });
        self.schedule(
            self.clock.now(),
            Ev::Node {
                node: index,
                event: NodeEvent::PoweredOn,
                token: None,
            },
        );
        Ok(index)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &NodeRuntime> {
        self.nodes.iter().map(|n| &n.runtime)
    }

    pub fn node(&self, index: usize) -> &NodeRuntime {
        &self.nodes[index].runtime
    }

    /// A node's own server, answering as it would over the operational AP.
    pub fn node_mut(&mut self, index: usize) -> &mut NodeRuntime {
        &mut self.nodes[index].runtime
    }

    pub fn fabric_mut(&mut self) -> &mut Fabric {
        &mut self.fabric
    }

    pub fn traffic(&self) -> Traffic {
        self.fabric.traffic()
    }

    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }

    fn schedule(&mut self, at: Duration, ev: Ev) {
        self.seq += 1;
        self.queue.push(Scheduled { at, seq: self.seq, ev });
    }

    fn log(&mut self, actor: String, event: &str, detail: Value) {
        self.trace.push(TraceEvent {
            t_ms: ms(self.clock.now()),
            actor,
            event: event.to_owned(),
            detail,
        });
    }

    /// Processes events until the queue drains or the next event lies past
    /// `horizon`. Returns the time reached.
    pub fn run(&mut self, horizon: Duration) -> Duration {
        while let Some(next) = self.queue.peek() {
            if next.at > horizon {
                break;
            }
            let Scheduled { at, ev, .. } = self.queue.pop().expect("peeked");
            self.clock.advance_to(at);
            self.dispatch(ev);
        }
        self.clock.now()
    }

    fn dispatch(&mut self, ev: Ev) {
        match ev {
            Ev::Node { node, event, token } => {
                if let Some(token) = token {
                    if self.nodes[node].awaiting != Some(token) {
                        return;
                    }
                    self.nodes[node].awaiting = None;
                }
                self.deliver(node, event);
            }
            Ev::Transmit {
                node,
                message,
                timeout,
            } => self.transmit(node, message, timeout),
            Ev::GatewayArrival {
                node,
                message,
                token,
                processing,
                response_leg,
            } => self.gateway_arrival(node, message, token, processing, response_leg),
        }
    }

    fn deliver(&mut self, node: usize, event: NodeEvent) {
        let now = self.clock.now();
        let before = self.nodes[node].runtime.state();
        let name = event.name();
        match self.nodes[node].runtime.step(event, now) {
            Ok(actions) => {
                let after = self.nodes[node].runtime.state();
                if after != before || name == "powered-on" {
                    let actor = self.nodes[node].actor();
                    self.log(actor, "state", json!({"from": before.name(), "to": after.name(), "cause": name}));
                }
                for action in actions {
                    self.perform(node, action);
                }
            }
            Err(e) => {
                let actor = self.nodes[node].actor();
                self.log(actor, "fsm-error", json!({"error": e.to_string()}));
            }
        }
    }

    fn perform(&mut self, node: usize, action: NodeAction) {
        let now = self.clock.now();
        let actor = self.nodes[node].actor();
        match action {
            NodeAction::Initialize { duration } => self.schedule(
                now + duration,
                Ev::Node {
                    node,
                    event: NodeEvent::InitComplete,
                    token: None,
                },
            ),
            NodeAction::ConnectAp { role, ssid, timeout } => {
                let configuration = role == ApRole::Configuration;
                let (at, event, detail) = match self.fabric.connect(configuration) {
                    ConnectOutcome::Connected(elapsed) if elapsed <= timeout => {
                        (now + elapsed, NodeEvent::ApConnected, json!({"ssid": ssid, "elapsed_ms": ms(elapsed)}))
                    }
                    ConnectOutcome::Connected(elapsed) => (
                        now + timeout,
                        NodeEvent::Timeout,
                        json!({"ssid": ssid, "elapsed_ms": ms(elapsed), "timed_out": true}),
                    ),
                    ConnectOutcome::Lost => (now + timeout, NodeEvent::Timeout, json!({"ssid": ssid, "lost": true})),
                };
                self.log(actor, "connect", detail);
                self.schedule(at, Ev::Node { node, event, token: None });
            }
            NodeAction::StartServer { startup } => self.schedule(
                now + startup,
                Ev::Node {
                    node,
                    event: NodeEvent::ServerStarted,
                    token: None,
                },
            ),
            NodeAction::StopServer => self.log(actor, "server-stopped", Value::Null),
            NodeAction::SendRequest {
                message,
                delay,
                timeout,
                ..
            } => {
                let at = now + delay;
                self.schedule(
                    at,
                    Ev::Node {
                        node,
                        event: NodeEvent::RequestSent,
                        token: None,
                    },
                );
                self.schedule(
                    at,
                    Ev::Transmit {
                        node,
                        message,
                        timeout,
                    },
                );
            }
            NodeAction::PersistNvm => {
                let status = self.nodes[node].runtime.nvm_status();
                self.log(actor, "nvm-written", json!({"status": status as u8}));
            }
            NodeAction::Ready => {
                let port = self.nodes[node].runtime.listen_port();
                self.log(actor, "listening", json!({"port": port}));
            }
        }
    }

    fn transmit(&mut self, node: usize, message: NodeMessage, timeout: Duration) {
        let now = self.clock.now();
        self.next_token += 1;
        let token = self.next_token;
        self.nodes[node].awaiting = Some(token);
        self.schedule(
            now + timeout,
            Ev::Node {
                node,
                event: NodeEvent::Timeout,
                token: Some(token),
            },
        );
        let processing = self.fabric.scenario().gateway_processing;
        let draw = self.fabric.exchange(&processing);
        let actor = self.nodes[node].actor();
        if draw.lost {
            let request = request_bytes(&message);
            self.fabric.account_exchange(request, None);
            self.log(actor, "dropped", json!({"path": message.path()}));
            return;
        }
        self.log(actor, "sent", json!({"path": message.path()}));
        self.schedule(
            now + draw.request_leg,
            Ev::GatewayArrival {
                node,
                message,
                token,
                processing: draw.processing,
                response_leg: draw.response_leg,
            },
        );
    }

    fn gateway_arrival(
        &mut self,
        node: usize,
        message: NodeMessage,
        token: u64,
        processing: Duration,
        response_leg: Duration,
    ) {
        let now = self.clock.now();
        let start = now.max(self.gateway_busy_until);
        let done = start + processing;
        self.gateway_busy_until = done;
        let src = match message {
            NodeMessage::Configure { .. } => self.nodes[node].config_ip,
            NodeMessage::Register { .. } => self.nodes[node].operational_ip,
        };
        let body = message.to_json();
        let response = self
            .gateway
            .handle_node_request(message.path(), &body, src, start.as_millis() as u64);
        self.fabric
            .account_exchange(request_bytes(&message), Some(response.to_bytes().len()));
        self.log(
            "gateway".into(),
            "request",
            json!({
                "from": self.nodes[node].runtime.identifier().to_string(),
                "path": message.path(),
                "status": response.status,
                "queued_ms": ms(start - now),
            }),
        );
        self.schedule(
            done + response_leg,
            Ev::Node {
                node,
                event: NodeEvent::ResponseReceived(response.body),
                token: Some(token),
            },
        );
    }

    pub fn into_report(self) -> SimReport {
        SimReport {
            end: self.clock.now(),
            traffic: self.fabric.traffic(),
            trace: self.trace,
            nodes: self.nodes.into_iter().map(|n| n.runtime).collect(),
            gateway: self.gateway,
        }
    }
}

fn request_bytes(message: &NodeMessage) -> usize {
    HttpRequest::new(Method::Post, message.path())
        .with_body(message.to_json())
        .to_bytes("192.168.1.1")
        .len()
}

/// Bytes on the wire for one `GET /id` exchange, frame overhead included.
pub fn id_exchange_bytes(node_id: NodeIdentifier) -> u64 {
    let request = HttpRequest::get("/id").to_bytes("192.168.1.123").len();
    let response = HttpResponse::json(200, &json!({"NodeID": node_id.to_string()}))
        .to_bytes()
        .len();
    let mut f = Fabric::new(ScenarioConfig::zero_delay(), 0);
    f.account_exchange(request, Some(response));
    f.traffic().bytes
}

/// Everything a finished run leaves behind.
pub struct SimReport {
    pub end: Duration,
    pub traffic: Traffic,
    pub trace: Vec<TraceEvent>,
    pub nodes: Vec<NodeRuntime>,
    pub gateway: Gateway,
}

impl SimReport {
    pub fn trace_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.trace {
            out.push_str(&serde_json::to_string(e).expect("trace events serialize"));
            out.push('\n');
        }
        out
    }

    /// Per-node state visits as one CSV; the run id is the node identifier.
    pub fn node_csv(&self) -> String {
        let mut out = String::from("run_id,state,entry_ms,exit_ms\n");
        for node in &self.nodes {
            out.push_str(&node.dump_csv(&node.identifier().to_string()));
        }
        out
    }

    pub fn all_listening(&self) -> bool {
        self.nodes.iter().all(|n| n.state() == NodeState::Listen)
    }
}

/// Default cut-off for a run: long enough for many retries and restarts.
pub const DEFAULT_HORIZON: Duration = Duration::from_secs(600);

/// Boots `node_count` fresh nodes at time zero under automatic admission and
/// runs until the network is quiet.
pub fn run_scenario(scenario: &ScenarioConfig, node_count: usize, seed: u64) -> Result<SimReport, SimError> {
    let mut sim = Simulation::new(scenario.clone(), seed)?;
    for i in 0..node_count {
        sim.add_node(default_identity(i))?;
    }
    sim.run(DEFAULT_HORIZON);
    Ok(sim.into_report())
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::netsim::scenario::ApModel;

    #[test]
    fn identities_are_distinct_and_known() {
        let ids: BTreeSet<_> = (0..200).map(default_identity).collect();
        assert_eq!(ids.len(), 200);
        for id in &ids {
            assert!(fixtures::builtin_ite(id.node_type(), id.version()).is_some());
        }
        let ips: BTreeSet<_> = (0..600).map(operational_ip).collect();
        assert_eq!(ips.len(), 600);
        let ips: BTreeSet<_> = (0..600).map(config_ip).collect();
        assert_eq!(ips.len(), 600);
    }

    #[test]
    fn single_node_reaches_listen() {
        let report = run_scenario(&ScenarioConfig::builtin("A").unwrap(), 1, 7).unwrap();
        assert!(report.all_listening());
        let node = &report.nodes[0];
        let total = node.time_to_listen().unwrap();
        assert!(total > Duration::from_secs(7) && total < Duration::from_secs(13), "{total:?}");
        assert_eq!(report.gateway.records().len(), 1);
        assert_eq!(report.gateway.records()[0].ip, operational_ip(0));
        let states: Vec<_> = node.state_durations().into_iter().map(|(s, _)| s).collect();
        assert_eq!(states, NodeState::ALL.to_vec());
    }

    #[test]
    fn same_seed_same_trace() {
        let s = ScenarioConfig::builtin("A").unwrap();
        let a = run_scenario(&s, 1, 7).unwrap();
        let b = run_scenario(&s, 1, 7).unwrap();
        assert_eq!(a.trace_jsonl(), b.trace_jsonl());
        assert_eq!(a.node_csv(), b.node_csv());
        let c = run_scenario(&s, 1, 8).unwrap();
        assert_ne!(a.trace_jsonl(), c.trace_jsonl());
    }

    #[test]
    fn fifty_nodes_boot_together() {
        let report = run_scenario(&ScenarioConfig::builtin("B").unwrap(), 50, 1).unwrap();
        assert!(report.all_listening());
        let records = report.gateway.records();
        assert_eq!(records.len(), 50);
        let ids: BTreeSet<_> = records.iter().map(|r| r.identifier).collect();
        let internal: BTreeSet<_> = records.iter().map(|r| r.internal_id).collect();
        assert_eq!((ids.len(), internal.len()), (50, 50));
        let t = report.traffic;
        assert_eq!(t.sent, t.delivered + t.dropped);
        assert_eq!(t.sent, 100);
    }

    #[test]
    fn gateway_queue_serializes_simultaneous_requests() {
        let mut s = ScenarioConfig::zero_delay();
        s.gateway_processing = crate::netsim::DelayDist::constant(20.0);
        let report = run_scenario(&s, 5, 0).unwrap();
        let queued: Vec<f64> = report
            .trace
            .iter()
            .filter(|e| e.event == "request" && e.detail["path"] == "/configure")
            .map(|e| e.detail["queued_ms"].as_f64().unwrap())
            .collect();
        assert_eq!(queued, vec![0.0, 20.0, 40.0, 60.0, 80.0]);
    }

    #[test]
    fn total_loss_never_listens() {
        let s = ScenarioConfig::builtin("A").unwrap().with_loss(1.0);
        let mut sim = Simulation::new(s, 1).unwrap();
        sim.add_node(default_identity(0)).unwrap();
        sim.run(Duration::from_secs(120));
        let report = sim.into_report();
        assert!(!report.all_listening());
        let node = &report.nodes[0];
        assert!(node.phase_restarts() > 0);
        assert!(report
            .trace
            .iter()
            .filter(|e| e.event == "connect")
            .all(|e| e.detail["lost"] == true));
    }

    #[test]
    fn exchange_loss_is_retried() {
        let mut s = ScenarioConfig::builtin("A").unwrap();
        s.loss_probability = 0.3;
        for seed in 0..20 {
            let report = run_scenario(&s, 1, seed).unwrap();
            let t = report.traffic;
            assert_eq!(t.sent, t.delivered + t.dropped);
            if report.all_listening() {
                assert!(t.delivered >= 2);
            }
        }
    }

    #[test]
    fn separate_configuration_ap() {
        let mut s = ScenarioConfig::zero_delay();
        let mut setup = ApModel::zero_delay();
        setup.auth_assoc_delay = crate::netsim::DelayDist::constant(1000.0);
        s.config_ap = Some(setup);
        let report = run_scenario(&s, 1, 0).unwrap();
        let durations = report.nodes[0].state_durations();
        let get = |st| durations.iter().find(|(s, _)| *s == st).unwrap().1;
        assert_eq!(get(NodeState::ConnectApA), Duration::from_secs(1));
        assert_eq!(get(NodeState::ConnectApB), Duration::ZERO);
    }

    #[test]
    fn id_exchange_accounting_is_near_a_kilobyte() {
        let bytes = id_exchange_bytes(NodeIdentifier::new(7, 1, 1).unwrap());
        assert!((500..=1000).contains(&bytes), "{bytes}");
    }

    #[test]
    fn trace_lines_are_json() {
        let report = run_scenario(&ScenarioConfig::builtin("A").unwrap(), 2, 3).unwrap();
        for line in report.trace_jsonl().lines() {
            let e: TraceEvent = serde_json::from_str(line).unwrap();
            assert!(e.t_ms >= 0.0);
        }
        assert_eq!(report.node_csv().lines().count(), 1 + 2 * 11);
    }
}
