//! Node state machine: self-configuration (phase A), restart, self-registration
//! (phase B) and the steady `Listen` state serving transducer requests.
//!
//! The runtime does no I/O. Drivers feed it [`NodeEvent`]s stamped with the
//! current time and carry out the [`NodeAction`]s it returns. The virtual
//! network (`netsim`) and the loopback runner are the two drivers.

mod messages;

use std::fmt;
use std::net::{Ipv4Addr, SocketAddrV4};
use std::time::Duration;

use serde_json::{json, Map, Value};

pub use messages::{ConfigResponse, MessageError, NodeMessage, RegisterAck};

use crate::http::{HttpRequest, HttpResponse, Method};
use crate::ite_model::{
    decode_nvm, encode_nvm, ChannelKind, IteDescriptor, NetworkConfig, NodeIdentifier, NvmError,
    NvmImage, NvmStatus,
};
use crate::transducer_sim::{reading_to_json, ChannelBank};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeState {
    InitA,
    ConnectApA,
    ServeA,
    RequestConfig,
    WaitResponseA,
    InitB,
    ConnectApB,
    ServeB,
    RequestRegister,
    WaitResponseB,
    Listen,
}

impl NodeState {
    pub const ALL: [NodeState; 11] = [
        NodeState::InitA,
        NodeState::ConnectApA,
        NodeState::ServeA,
        NodeState::RequestConfig,
        NodeState::WaitResponseA,
        NodeState::InitB,
        NodeState::ConnectApB,
        NodeState::ServeB,
        NodeState::RequestRegister,
        NodeState::WaitResponseB,
        NodeState::Listen,
    ];

    /// States whose time is spent in the configuration/registration exchanges.
    pub const PROTOCOL: [NodeState; 4] = [
        NodeState::RequestConfig,
        NodeState::WaitResponseA,
        NodeState::RequestRegister,
        NodeState::WaitResponseB,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NodeState::InitA => "InitA",
            NodeState::ConnectApA => "ConnectApA",
            NodeState::ServeA => "ServeA",
            NodeState::RequestConfig => "RequestConfig",
            NodeState::WaitResponseA => "WaitResponseA",
            NodeState::InitB => "InitB",
            NodeState::ConnectApB => "ConnectApB",
            NodeState::ServeB => "ServeB",
            NodeState::RequestRegister => "RequestRegister",
            NodeState::WaitResponseB => "WaitResponseB",
            NodeState::Listen => "Listen",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }

    /// Phase A is self-configuration, B is self-registration (`Listen` counts as B).
    pub fn is_phase_a(self) -> bool {
        matches!(
            self,
            NodeState::InitA
                | NodeState::ConnectApA
                | NodeState::ServeA
                | NodeState::RequestConfig
                | NodeState::WaitResponseA
        )
    }
}

impl fmt::Display for NodeState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeEvent {
    PoweredOn,
    InitComplete,
    ApConnected,
    ServerStarted,
    RequestSent,
    ResponseReceived(Vec<u8>),
    Timeout,
}

impl NodeEvent {
    pub fn name(&self) -> &'static str {
        match self {
            NodeEvent::PoweredOn => "powered-on",
            NodeEvent::InitComplete => "init-complete",
            NodeEvent::ApConnected => "ap-connected",
            NodeEvent::ServerStarted => "server-started",
            NodeEvent::RequestSent => "request-sent",
            NodeEvent::ResponseReceived(_) => "response-received",
            NodeEvent::Timeout => "timeout",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApRole {
    /// The access point used only for self-configuration.
    Configuration,
    /// The home network handed out by the gateway.
    Operational,
}

/// Work a driver must perform; each ends with exactly one event fed back.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeAction {
    /// Load defaults (boot or restart); answer with `InitComplete` after `duration`.
    Initialize { duration: Duration },
    /// Join an AP; answer with `ApConnected`, or `Timeout` after `timeout`.
    ConnectAp {
        role: ApRole,
        ssid: String,
        timeout: Duration,
    },
    /// Bring up the TCP server; answer with `ServerStarted` after `startup`.
    StartServer { startup: Duration },
    /// Tear the TCP server down (restart). No event follows.
    StopServer,
    /// Wait `delay`, transmit `message` to `to` (`RequestSent`), then deliver
    /// `ResponseReceived` or `Timeout` once `timeout` passes without a reply.
    SendRequest {
        to: SocketAddrV4,
        message: NodeMessage,
        delay: Duration,
        timeout: Duration,
    },
    /// NVM was rewritten; drivers holding a file copy should persist it.
    PersistNvm,
    /// The node is registered and listening.
    Ready,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FsmError {
    NotPowered,
    AlreadyPowered,
    UnexpectedEvent { state: NodeState, event: &'static str },
}

impl fmt::Display for FsmError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FsmError::NotPowered => f.write_str("node is not powered on"),
            FsmError::AlreadyPowered => f.write_str("node is already powered on"),
            FsmError::UnexpectedEvent { state, event } => {
                write!(f, "event `{event}` is not expected in state {state}")
            }
        }
    }
}

impl std::error::Error for FsmError {}

#[derive(Debug, thiserror::Error)]
pub enum NodeError {
    #[error("ITE {ite:?} does not describe node {node}")]
    IteMismatch { node: NodeIdentifier, ite: (u32, u8) },
    #[error(transparent)]
    Nvm(#[from] NvmError),
}

/// Per-state durations and the retry policy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeTiming {
    pub boot: Duration,
    /// Init duration after the post-configuration restart.
    pub restart: Duration,
    pub server_startup: Duration,
    /// Bound on request/response states.
    pub state_timeout: Duration,
    /// Bound on joining an access point.
    pub connect_timeout: Duration,
    pub max_retries: u32,
    pub retry_backoff: Duration,
}

impl Default for NodeTiming {
    fn default() -> Self {
        Self {
            boot: Duration::from_millis(250),
            restart: Duration::from_millis(250),
            server_startup: Duration::from_millis(50),
            state_timeout: Duration::from_secs(5),
            connect_timeout: Duration::from_secs(15),
            max_retries: 3,
            retry_backoff: Duration::from_millis(500),
        }
    }
}

impl NodeTiming {
    /// No artificial delays; used for loopback runs.
    pub fn instant() -> Self {
        Self {
            boot: Duration::ZERO,
            restart: Duration::ZERO,
            server_startup: Duration::ZERO,
            ..Self::default()
        }
    }
}

/// Values burnt into the node at the factory: how to reach the configuration AP.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactoryDefaults {
    pub config_ap_ssid: String,
    pub config_ap_password: String,
    pub config_gateway: Ipv4Addr,
    pub gateway_port: u16,
}

impl Default for FactoryDefaults {
    fn default() -> Self {
        Self {
            config_ap_ssid: "itn-setup".into(),
            config_ap_password: "itn-setup".into(),
            config_gateway: Ipv4Addr::new(192, 168, 4, 1),
            gateway_port: 5050,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeSettings {
    pub factory: FactoryDefaults,
    pub timing: NodeTiming,
    pub listen_port: u16,
    /// Seed for the emulated sensors.
    pub seed: u64,
}

impl Default for NodeSettings {
    fn default() -> Self {
        Self {
            factory: FactoryDefaults::default(),
            timing: NodeTiming::default(),
            listen_port: 80,
            seed: 0,
        }
    }
}

/// One stay in a state. `exit` is `None` while the node is still there.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateVisit {
    pub state: NodeState,
    pub entry: Duration,
    pub exit: Option<Duration>,
}

impl StateVisit {
    pub fn duration(&self) -> Duration {
        self.exit.map_or(Duration::ZERO, |exit| exit - self.entry)
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1000.0
}

/// A running node.
#[derive(Debug, Clone)]
pub struct NodeRuntime {
    identifier: NodeIdentifier,
    nvm: NvmImage,
    ite: IteDescriptor,
    channels: ChannelBank,
    sensor_ticks: Vec<u64>,
    settings: NodeSettings,
    state: NodeState,
    powered: bool,
    server_up: bool,
    retries: u32,
    total_retries: u32,
    phase_restarts: u32,
    visits: Vec<StateVisit>,
    status_history: Vec<NvmStatus>,
}

impl NodeRuntime {
    /// Boots from an existing NVM image; identity comes from the image.
    pub fn from_nvm(
        nvm: NvmImage,
        ite: IteDescriptor,
        settings: NodeSettings,
    ) -> Result<Self, NodeError> {
        let (identifier, status, _) = decode_nvm(&nvm)?;
        if ite.key() != identifier.ite_key() {
            return Err(NodeError::IteMismatch {
                node: identifier,
                ite: ite.key(),
            });
        }
        let channels = ChannelBank::bind(&ite, settings.seed);
        let sensor_ticks = vec![0; channels.sensors.len()];
        Ok(Self {
            identifier,
            nvm,
            ite,
            channels,
            sensor_ticks,
            settings,
            state: initial_state(status),
            powered: false,
            server_up: false,
            retries: 0,
            total_retries: 0,
            phase_restarts: 0,
            visits: Vec::new(),
            status_history: vec![status],
        })
    }

    /// A factory-fresh node: unconfigured NVM holding only its identity.
    pub fn fresh(
        identifier: NodeIdentifier,
        ite: IteDescriptor,
        settings: NodeSettings,
    ) -> Result<Self, NodeError> {
        let nvm = encode_nvm(&identifier, NvmStatus::Unconfigured, None)?;
        Self::from_nvm(nvm, ite, settings)
    }

    pub fn identifier(&self) -> NodeIdentifier {
        self.identifier
    }

    pub fn state(&self) -> NodeState {
        self.state
    }

    pub fn is_powered(&self) -> bool {
        self.powered
    }

    pub fn nvm(&self) -> &NvmImage {
        &self.nvm
    }

    pub fn ite(&self) -> &IteDescriptor {
        &self.ite
    }

    pub fn channels(&self) -> &ChannelBank {
        &self.channels
    }

    pub fn settings(&self) -> &NodeSettings {
        &self.settings
    }

    pub fn listen_port(&self) -> u16 {
        self.settings.listen_port
    }

    /// The port is only known once a real socket is bound.
    pub fn set_listen_port(&mut self, port: u16) {
        self.settings.listen_port = port;
    }

    pub fn total_retries(&self) -> u32 {
        self.total_retries
    }

    pub fn phase_restarts(&self) -> u32 {
        self.phase_restarts
    }

    pub fn visits(&self) -> &[StateVisit] {
        &self.visits
    }

    /// NVM status after power-on and after every write, in order.
    pub fn status_history(&self) -> &[NvmStatus] {
        &self.status_history
    }

    pub fn nvm_status(&self) -> NvmStatus {
        self.nvm.status().unwrap_or(NvmStatus::Unconfigured)
    }

    /// Network config currently stored in NVM.
    pub fn network(&self) -> Option<NetworkConfig> {
        decode_nvm(&self.nvm).ok().and_then(|(_, _, net)| net)
    }

    /// Zeroes the status flag and network config. Only valid while powered off.
    pub fn factory_reset(&mut self) -> Result<(), FsmError> {
        if self.powered {
            return Err(FsmError::AlreadyPowered);
        }
        self.nvm.factory_reset();
        self.state = NodeState::InitA;
        self.status_history.push(NvmStatus::Unconfigured);
        Ok(())
    }

    /// Time summed per state, in first-visit order; one entry per visited state.
    pub fn state_durations(&self) -> Vec<(NodeState, Duration)> {
        let mut out: Vec<(NodeState, Duration)> = Vec::new();
        for visit in &self.visits {
            match out.iter_mut().find(|(s, _)| *s == visit.state) {
                Some((_, total)) => *total += visit.duration(),
                None => out.push((visit.state, visit.duration())),
            }
        }
        out
    }

    /// Time from power-on to entering `Listen`, when reached.
    pub fn time_to_listen(&self) -> Option<Duration> {
        let first = self.visits.first()?;
        let listen = self.visits.iter().find(|v| v.state == NodeState::Listen)?;
        Some(listen.entry - first.entry)
    }

    /// Instrumentation dump: `run_id,state,entry_ms,exit_ms` per visit.
    pub fn dump_csv(&self, run_id: &str) -> String {
        let mut out = String::new();
        for v in &self.visits {
            let exit = v.exit.map(|e| format!("{:.3}", ms(e))).unwrap_or_default();
            out.push_str(&format!(
                "{run_id},{},{:.3},{exit}\n",
                v.state,
                ms(v.entry)
            ));
        }
        out
    }

    fn enter(&mut self, state: NodeState, now: Duration) {
        if let Some(open) = self.visits.last_mut() {
            if open.exit.is_none() {
                open.exit = Some(now);
            }
        }
        self.state = state;
        self.visits.push(StateVisit {
            state,
            entry: now,
            exit: None,
        });
    }

    fn gateway_addr(&self) -> SocketAddrV4 {
        let ip = if self.state.is_phase_a() {
            self.settings.factory.config_gateway
        } else {
            self.network()
                .map_or(self.settings.factory.config_gateway, |n| n.gateway)
        };
        SocketAddrV4::new(ip, self.settings.factory.gateway_port)
    }

    fn connect_action(&self) -> NodeAction {
        let (role, ssid) = if self.state.is_phase_a() {
            (
                ApRole::Configuration,
                self.settings.factory.config_ap_ssid.clone(),
            )
        } else {
            (
                ApRole::Operational,
                self.network().map(|n| n.ssid).unwrap_or_default(),
            )
        };
        NodeAction::ConnectAp {
            role,
            ssid,
            timeout: self.settings.timing.connect_timeout,
        }
    }

    /// The configuration request; meaningful in `RequestConfig`.
    pub fn build_config_request(&self) -> NodeMessage {
        NodeMessage::Configure {
            node_id: self.identifier,
        }
    }

    /// The registration request; meaningful in `RequestRegister`.
    pub fn build_register_request(&self) -> NodeMessage {
        NodeMessage::Register {
            node_id: self.identifier,
            port: self.settings.listen_port,
        }
    }

    fn send_action(&self, delay: Duration) -> NodeAction {
        let message = if self.state == NodeState::RequestConfig {
            self.build_config_request()
        } else {
            self.build_register_request()
        };
        NodeAction::SendRequest {
            to: self.gateway_addr(),
            message,
            delay,
            timeout: self.settings.timing.state_timeout,
        }
    }

    fn restart_phase(&mut self, now: Duration) -> Vec<NodeAction> {
        let init = if self.state.is_phase_a() {
            NodeState::InitA
        } else {
            NodeState::InitB
        };
        self.retries = 0;
        self.phase_restarts += 1;
        let mut actions = Vec::new();
        if self.server_up {
            self.server_up = false;
            actions.push(NodeAction::StopServer);
        }
        self.enter(init, now);
        actions.push(NodeAction::Initialize {
            duration: self.settings.timing.boot,
        });
        actions
    }

    /// Retries the current exchange or connection, restarting the phase once
    /// the retry budget is spent.
    fn on_failure(&mut self, now: Duration) -> Vec<NodeAction> {
        if self.retries >= self.settings.timing.max_retries {
            return self.restart_phase(now);
        }
        self.retries += 1;
        self.total_retries += 1;
        match self.state {
            NodeState::ConnectApA | NodeState::ConnectApB => {
                self.enter(self.state, now);
                vec![self.connect_action()]
            }
            NodeState::WaitResponseA | NodeState::RequestConfig => {
                self.enter(NodeState::RequestConfig, now);
                vec![self.send_action(self.settings.timing.retry_backoff)]
            }
            _ => {
                self.enter(NodeState::RequestRegister, now);
                vec![self.send_action(self.settings.timing.retry_backoff)]
            }
        }
    }

    fn accept_config(&mut self, body: &[u8], now: Duration) -> Option<Vec<NodeAction>> {
        let response: ConfigResponse = serde_json::from_slice(body).ok()?;
        let mut nvm = self.nvm.clone();
        nvm.set_network(&response.network()).ok()?;
        nvm.set_status(NvmStatus::Configured);
        self.nvm = nvm;
        self.status_history.push(NvmStatus::Configured);
        self.retries = 0;
        self.server_up = false;
        self.channels = ChannelBank::bind(&self.ite, self.settings.seed);
        self.sensor_ticks = vec![0; self.channels.sensors.len()];
        self.enter(NodeState::InitB, now);
        Some(vec![
            NodeAction::PersistNvm,
            NodeAction::StopServer,
            NodeAction::Initialize {
                duration: self.settings.timing.restart,
            },
        ])
    }

    fn accept_ack(&mut self, body: &[u8], now: Duration) -> Option<Vec<NodeAction>> {
        let ack: RegisterAck = serde_json::from_slice(body).ok()?;
        if ack.registered != 1 {
            return None;
        }
        self.retries = 0;
        self.enter(NodeState::Listen, now);
        Some(vec![NodeAction::Ready])
    }

    /// Advances the state machine by one event.
    pub fn step(&mut self, event: NodeEvent, now: Duration) -> Result<Vec<NodeAction>, FsmError> {
        use NodeState::*;
        if !self.powered {
            return match event {
                NodeEvent::PoweredOn => {
                    self.powered = true;
                    self.state = initial_state(self.nvm_status());
                    self.enter(self.state, now);
                    Ok(vec![NodeAction::Initialize {
                        duration: self.settings.timing.boot,
                    }])
                }
                _ => Err(FsmError::NotPowered),
            };
        }
        let unexpected = |state, event: &NodeEvent| FsmError::UnexpectedEvent {
            state,
            event: event.name(),
        };
        let actions = match (self.state, &event) {
            (_, NodeEvent::PoweredOn) => return Err(FsmError::AlreadyPowered),
            (InitA | InitB, NodeEvent::InitComplete) => {
                let next = if self.state == InitA { ConnectApA } else { ConnectApB };
                self.enter(next, now);
                vec![self.connect_action()]
            }
            (ConnectApA | ConnectApB, NodeEvent::ApConnected) => {
                let next = if self.state == ConnectApA { ServeA } else { ServeB };
                self.enter(next, now);
                vec![NodeAction::StartServer {
                    startup: self.settings.timing.server_startup,
                }]
            }
            (ConnectApA | ConnectApB, NodeEvent::Timeout) => self.on_failure(now),
            (ServeA | ServeB, NodeEvent::ServerStarted) => {
                self.server_up = true;
                let next = if self.state == ServeA {
                    RequestConfig
                } else {
                    RequestRegister
                };
                self.enter(next, now);
                vec![self.send_action(Duration::ZERO)]
            }
            (RequestConfig, NodeEvent::RequestSent) => {
                self.enter(WaitResponseA, now);
                Vec::new()
            }
            (RequestRegister, NodeEvent::RequestSent) => {
                self.enter(WaitResponseB, now);
                Vec::new()
            }
            (RequestConfig | RequestRegister | WaitResponseA | WaitResponseB, NodeEvent::Timeout) => {
                self.on_failure(now)
            }
            (WaitResponseA, NodeEvent::ResponseReceived(body)) => {
                match self.accept_config(body, now) {
                    Some(actions) => actions,
                    None => self.on_failure(now),
                }
            }
            (WaitResponseB, NodeEvent::ResponseReceived(body)) => {
                match self.accept_ack(body, now) {
                    Some(actions) => actions,
                    None => self.on_failure(now),
                }
            }
            (state, event) => return Err(unexpected(state, event)),
        };
        Ok(actions)
    }

    /// Answers an HTTP request addressed to the node's own server.
    pub fn serve_request(&mut self, request: &HttpRequest) -> HttpResponse {
        if !self.powered || !self.server_up {
            return HttpResponse::empty(503);
        }
        let path = request.path.split('?').next().unwrap_or("");
        if path == "/id" {
            if request.method != Method::Get {
                return HttpResponse::empty(405);
            }
            return HttpResponse::json(200, &json!({ "NodeID": self.identifier.to_string() }));
        }
        let Some((kind, index)) = parse_channel_path(path) else {
            return HttpResponse::empty(404);
        };
        let count = match kind {
            ChannelKind::Sensor => self.channels.sensors.len(),
            ChannelKind::Actuator => self.channels.actuators.len(),
        };
        if index >= count {
            return HttpResponse::empty(404);
        }
        if self.state != NodeState::Listen {
            return HttpResponse::empty(503);
        }
        match (kind, request.method) {
            (ChannelKind::Sensor, Method::Get) => {
                let tick = self.sensor_ticks[index];
                self.sensor_ticks[index] += 1;
                let sensor = &mut self.channels.sensors[index];
                let reading = sensor.sample(tick);
                let field = sensor.field();
                let mut body = Map::new();
                body.insert(field.name.clone(), reading_to_json(field, &reading));
                HttpResponse::json(200, &Value::Object(body))
            }
            (ChannelKind::Actuator, Method::Get) => {
                let actuator = &self.channels.actuators[index];
                let field = actuator.field();
                let mut body = Map::new();
                body.insert(
                    field.name.clone(),
                    reading_to_json(field, actuator.current()),
                );
                HttpResponse::json(200, &Value::Object(body))
            }
            (ChannelKind::Actuator, Method::Put) => {
                let response_name = self.ite.actuators[index].response_format.name.clone();
                let actuator = &mut self.channels.actuators[index];
                let request_name = actuator.field().name.clone();
                let accepted = match serde_json::from_slice::<Value>(&request.body) {
                    Ok(Value::Object(map)) if map.len() == 1 => map
                        .get(&request_name)
                        .is_some_and(|v| actuator.apply_json(v)),
                    _ => false,
                };
                let mut body = Map::new();
                body.insert(response_name, json!(u8::from(accepted)));
                HttpResponse::json(200, &Value::Object(body))
            }
            _ => HttpResponse::empty(405),
        }
    }
}

fn initial_state(status: NvmStatus) -> NodeState {
    match status {
        NvmStatus::Unconfigured => NodeState::InitA,
        NvmStatus::Configured => NodeState::InitB,
    }
}

/// `/sensors/3` → `(Sensor, 3)`.
pub fn parse_channel_path(path: &str) -> Option<(ChannelKind, usize)> {
    let mut parts = path.strip_prefix('/')?.split('/');
    let kind = match parts.next()? {
        "sensors" => ChannelKind::Sensor,
        "actuators" => ChannelKind::Actuator,
        _ => return None,
    };
    let index_text = parts.next()?;
    if parts.next().is_some() || index_text.is_empty() || !index_text.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Some((kind, index_text.parse().ok()?))
}
