//! The home automation gateway.
//!
//! [`Gateway`] holds all state and answers requests without doing I/O of its
//! own: time comes in as a millisecond stamp, and node access goes through a
//! [`NodeLink`]. [`server`] puts it behind a real HTTP listener; the virtual
//! network drives it directly.

mod auth;
mod repository;
mod samples;
pub mod server;
mod store;

use std::collections::BTreeMap;
use std::net::{Ipv4Addr, SocketAddrV4};
use std::time::Duration;

use serde_json::json;

pub use auth::{authenticate, basic_header, parse_basic};
pub use repository::{IteRepository, RepositoryError};
pub use samples::{LogLine, SampleLog, SampleLogEntry, SAMPLES_FILE};
pub use store::{
    AdmissionMode, AdmissionPolicy, PendingRequest, RegistrationRecord, RequestKind, Store,
    StoreError, StoreState, User, STORE_FILE, STORE_VERSION,
};

use crate::http::{self, HttpRequest, HttpResponse, Method};
use crate::ite_model::{
    serialize_detail, serialize_list, ChannelKind, IteDescriptor, IteSummary, NetworkConfig, NodeIdentifier,
    TransducerDetail, TransducerSummary,
};
use crate::node_fsm::{parse_channel_path, ConfigResponse, NodeMessage};
use crate::transducer_sim::reading_from_json;

/// A node could not be reached.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("node unreachable: {0}")]
pub struct LinkError(pub String);

/// How the gateway talks to node servers.
pub trait NodeLink {
    fn exchange(
        &mut self,
        target: SocketAddrV4,
        request: &HttpRequest,
    ) -> Result<HttpResponse, LinkError>;
}

/// Plain TCP with a per-exchange timeout.
#[derive(Debug, Clone, Copy)]
pub struct TcpLink {
    pub timeout: Duration,
}

impl Default for TcpLink {
    fn default() -> Self {
        Self {
            timeout: Duration::from_secs(5),
        }
    }
}

impl NodeLink for TcpLink {
    fn exchange(
        &mut self,
        target: SocketAddrV4,
        request: &HttpRequest,
    ) -> Result<HttpResponse, LinkError> {
        http::exchange(target.into(), request, self.timeout).map_err(|e| LinkError(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GatewayConfig {
    /// Operational network handed to configured nodes.
    pub network: NetworkConfig,
    /// Interval between reachability probes of registered nodes.
    pub liveness_probe: Duration,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            network: NetworkConfig {
                ssid: "itn-home".into(),
                password: "itn-home-password".into(),
                gateway: Ipv4Addr::new(192, 168, 1, 1),
            },
            liveness_probe: Duration::from_secs(60),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConfigReply {
    Config(ConfigResponse),
    Pending(u64),
    Rejected,
    UnknownType,
}

impl ConfigReply {
    pub fn to_http(&self) -> HttpResponse {
        match self {
            ConfigReply::Config(c) => HttpResponse {
                status: 200,
                body: serde_json::to_vec(c).expect("config serializes"),
            },
            ConfigReply::Pending(rid) => HttpResponse::json(202, &json!({ "Pending": rid })),
            ConfigReply::Rejected => HttpResponse::json(403, &json!({ "Error": "Rejected" })),
            ConfigReply::UnknownType => HttpResponse::json(404, &json!({ "Error": "UnknownType" })),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RegisterReply {
    Registered { internal_id: u64 },
    NoIte,
    Pending(u64),
    Rejected,
}

impl RegisterReply {
    pub fn to_http(&self) -> HttpResponse {
        match self {
            RegisterReply::Registered { .. } => HttpResponse::json(200, &json!({ "Registered": 1 })),
            RegisterReply::NoIte => HttpResponse::json(200, &json!({ "Registered": 0 })),
            RegisterReply::Pending(rid) => HttpResponse::json(202, &json!({ "Pending": rid })),
            RegisterReply::Rejected => HttpResponse::json(403, &json!({ "Error": "Rejected" })),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Approve,
    Reject,
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("no pending request {0}")]
    UnknownRequest(u64),
    #[error("no transducer with id {0}")]
    UnknownTransducer(u64),
    #[error("transducer {id} has no channel {uri}")]
    UnknownChannel { id: u64, uri: String },
    #[error("user `{0}` already exists")]
    DuplicateUser(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// What the caller must do to finish a routed request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Routed {
    Reply(HttpResponse),
    /// Forward `request` to a node and relay the answer through [`Gateway::finish_proxy`].
    Proxy {
        target: SocketAddrV4,
        request: HttpRequest,
    },
    /// Long poll on the pending queue: wait up to `wait` for a request newer
    /// than `since`, then answer with [`Gateway::pending_response`].
    AwaitPending { since: u64, wait: Duration },
}

/// One scheduled sensor read.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PollTarget {
    pub internal_id: u64,
    pub sensor: usize,
    pub uri: String,
    pub target: SocketAddrV4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeHealth {
    pub reachable: bool,
    pub checked_at: u64,
    pub next_probe: u64,
}

pub struct Gateway {
    config: GatewayConfig,
    store: Store,
    repo: IteRepository,
    samples: SampleLog,
    schedule: BTreeMap<(u64, usize), u64>,
    health: BTreeMap<u64, NodeHealth>,
    pending_seq: u64,
}

fn sample_interval_ms(refresh_rate: u32) -> u64 {
    3_600_000 / u64::from(refresh_rate.max(1))
}

fn error_reply(status: u16, error: &str) -> HttpResponse {
    HttpResponse::json(status, &json!({ "Error": error }))
}

impl Gateway {
    pub fn new(config: GatewayConfig, store: Store, repo: IteRepository, samples: SampleLog) -> Self {
        let mut gw = Self {
            config,
            store,
            repo,
            samples,
            schedule: BTreeMap::new(),
            health: BTreeMap::new(),
            pending_seq: 0,
        };
        if gw.store.state.policy.mode == AdmissionMode::Automatic {
            gw.store.state.policy.pending.clear();
        }
        gw
    }

    /// In-memory gateway over the bundled ITEs.
    pub fn ephemeral(config: GatewayConfig) -> Self {
        Self::new(config, Store::in_memory(), IteRepository::builtin(), SampleLog::in_memory())
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn state(&self) -> &StoreState {
        &self.store.state
    }

    pub fn repository(&self) -> &IteRepository {
        &self.repo
    }

    pub fn repository_mut(&mut self) -> &mut IteRepository {
        &mut self.repo
    }

    pub fn sample_log(&self) -> &SampleLog {
        &self.samples
    }

    /// Bumped on every enqueue; long-poll waiters compare against it.
    pub fn pending_seq(&self) -> u64 {
        self.pending_seq
    }

    fn persist(&self) {
        if let Err(e) = self.store.save() {
            tracing::warn!("gateway store not saved: {e}");
        }
    }

    pub fn save(&self) -> Result<(), StoreError> {
        self.store.save()
    }

    pub fn mode(&self) -> AdmissionMode {
        self.store.state.policy.mode
    }

    /// Switching to automatic drops any pending requests.
    pub fn set_mode(&mut self, mode: AdmissionMode) {
        let policy = &mut self.store.state.policy;
        policy.mode = mode;
        if mode == AdmissionMode::Automatic {
            policy.pending.clear();
        }
        self.persist();
    }

    pub fn whitelist_add(&mut self, id: NodeIdentifier) {
        self.store.state.policy.known_ids.insert(id);
        self.persist();
    }

    pub fn add_user(&mut self, name: &str, password: &str) -> Result<(), GatewayError> {
        if self.store.state.users.iter().any(|u| u.name == name) {
            return Err(GatewayError::DuplicateUser(name.to_owned()));
        }
        self.store.state.users.push(User::new(name, password));
        self.store.save()?;
        Ok(())
    }

    pub fn authenticate(&self, header: Option<&str>) -> Option<&str> {
        authenticate(&self.store.state.users, header)
    }

    /// Makes the next registration receive at least `next` as its internal id.
    pub fn seed_next_id(&mut self, next: u64) {
        let state = &mut self.store.state;
        state.next_id = state.next_id.max(next);
        self.persist();
    }

    /// Starts sampling and liveness probing for a record, counting from `now`.
    fn track(&mut self, internal_id: u64, ite: &IteDescriptor, now: u64) {
        self.schedule.retain(|(i, _), _| *i != internal_id);
        for (index, channel) in ite.sensors.iter().enumerate() {
            if let Some(rate) = channel.refresh_rate {
                self.schedule
                    .insert((internal_id, index), now + sample_interval_ms(rate));
            }
        }
        self.health.insert(
            internal_id,
            NodeHealth {
                reachable: true,
                checked_at: now,
                next_probe: now + self.config.liveness_probe.as_millis() as u64,
            },
        );
    }

    /// Re-arms polling for records loaded from the store.
    pub fn resume(&mut self, now: u64) {
        let records: Vec<(u64, (u32, u8))> = self
            .store
            .state
            .records
            .iter()
            .map(|r| (r.internal_id, r.ite))
            .collect();
        for (internal_id, key) in records {
            if let Some(ite) = self.repo.lookup(key) {
                self.track(internal_id, &ite, now);
            }
        }
    }

    fn admit(&mut self, id: NodeIdentifier, kind: RequestKind, ip: Ipv4Addr, now: u64) -> Result<(), Option<u64>> {
        let policy = &mut self.store.state.policy;
        let granted = match policy.mode {
            AdmissionMode::Automatic => true,
            AdmissionMode::Whitelist => policy.known_ids.contains(&id),
            AdmissionMode::DynamicRequest => false,
        };
        if granted || policy.approved.contains(&id) {
            return Ok(());
        }
        if policy.rejected.remove(&id) {
            self.persist();
            return Err(None);
        }
        if let Some(p) = policy.pending.iter().find(|p| p.node_id == id && p.kind == kind) {
            return Err(Some(p.rid));
        }
        let rid = self.store.state.next_rid;
        self.store.state.next_rid += 1;
        self.store.state.policy.pending.push(PendingRequest {
            rid,
            node_id: id,
            kind,
            ip,
            requested_at: now,
        });
        self.pending_seq += 1;
        tracing::info!(%id, rid, ?kind, "admission pending");
        self.persist();
        Err(Some(rid))
    }

    pub fn handle_config_request(&mut self, id: NodeIdentifier, src: Ipv4Addr, now: u64) -> ConfigReply {
        if self.repo.lookup(id.ite_key()).is_none() {
            return ConfigReply::UnknownType;
        }
        match self.admit(id, RequestKind::Configure, src, now) {
            Ok(()) => ConfigReply::Config(ConfigResponse::from(&self.config.network)),
            Err(Some(rid)) => ConfigReply::Pending(rid),
            Err(None) => ConfigReply::Rejected,
        }
    }

    pub fn handle_register_request(
        &mut self,
        id: NodeIdentifier,
        port: u16,
        src: Ipv4Addr,
        now: u64,
    ) -> RegisterReply {
        let Some(ite) = self.repo.lookup(id.ite_key()) else {
            return RegisterReply::NoIte;
        };
        match self.admit(id, RequestKind::Register, src, now) {
            Ok(()) => {}
            Err(Some(rid)) => return RegisterReply::Pending(rid),
            Err(None) => return RegisterReply::Rejected,
        }
        let state = &mut self.store.state;
        let internal_id = match state
            .records
            .iter_mut()
            .find(|r| r.identifier.record_key() == id.record_key())
        {
            Some(record) => {
                record.identifier = id;
                record.ip = src;
                record.port = port;
                record.registered_at = now;
                record.ite = ite.key();
                record.internal_id
            }
            None => {
                let internal_id = state.next_id;
                state.next_id += 1;
                state.records.push(RegistrationRecord {
                    internal_id,
                    identifier: id,
                    ip: src,
                    port,
                    registered_at: now,
                    ite: ite.key(),
                });
                internal_id
            }
        };
        self.track(internal_id, &ite, now);
        tracing::info!(%id, internal_id, %src, port, "registered");
        self.persist();
        RegisterReply::Registered { internal_id }
    }

    /// `POST /configure` and `POST /register` from nodes.
    pub fn handle_node_request(&mut self, path: &str, body: &[u8], src: Ipv4Addr, now: u64) -> HttpResponse {
        let message = match NodeMessage::parse(body) {
            Ok(m) => m,
            Err(e) => {
                return HttpResponse::json(400, &json!({ "Error": "MalformedRequest", "Detail": e.to_string() }))
            }
        };
        match (path, message) {
            ("/configure", NodeMessage::Configure { node_id }) => {
                self.handle_config_request(node_id, src, now).to_http()
            }
            ("/register", NodeMessage::Register { node_id, port }) => {
                self.handle_register_request(node_id, port, src, now).to_http()
            }
            _ => error_reply(400, "RequestKindMismatch"),
        }
    }

    pub fn pending(&self) -> &[PendingRequest] {
        &self.store.state.policy.pending
    }

    pub fn confirm_pending(&mut self, rid: u64, decision: Decision, user: &str) -> Result<PendingRequest, GatewayError> {
        let policy = &mut self.store.state.policy;
        let index = policy
            .pending
            .iter()
            .position(|p| p.rid == rid)
            .ok_or(GatewayError::UnknownRequest(rid))?;
        let request = policy.pending.remove(index);
        match decision {
            Decision::Approve => {
                policy.approved.insert(request.node_id);
                policy.rejected.remove(&request.node_id);
                policy.pending.retain(|p| p.node_id != request.node_id);
            }
            Decision::Reject => {
                policy.approved.remove(&request.node_id);
                policy.rejected.insert(request.node_id);
                policy.pending.retain(|p| p.node_id != request.node_id);
            }
        }
        tracing::info!(rid, user, ?decision, node = %request.node_id, "admission decided");
        self.persist();
        Ok(request)
    }

    pub fn records(&self) -> &[RegistrationRecord] {
        &self.store.state.records
    }

    pub fn record(&self, internal_id: u64) -> Option<&RegistrationRecord> {
        self.store.state.records.iter().find(|r| r.internal_id == internal_id)
    }

    pub fn api_list(&self) -> Vec<TransducerSummary> {
        let mut list: Vec<TransducerSummary> = self
            .store
            .state
            .records
            .iter()
            .map(|r| TransducerSummary {
                id: r.internal_id,
                sn: r.identifier.serial(),
                ite: IteSummary {
                    name: self.repo.get(r.ite).map(|i| i.name.clone()).unwrap_or_default(),
                    node_type: r.identifier.node_type(),
                },
            })
            .collect();
        list.sort_by_key(|s| s.id);
        list
    }

    pub fn api_detail(&self, internal_id: u64) -> Option<TransducerDetail> {
        let record = self.record(internal_id)?;
        Some(TransducerDetail {
            id: record.internal_id,
            sn: record.identifier.serial(),
            ip: record.ip,
            ite: self.repo.get(record.ite)?.clone(),
        })
    }

    /// Node address and node-side path for a channel of a registered transducer.
    pub fn resolve_channel(&self, internal_id: u64, kind: ChannelKind, index: usize) -> Result<(SocketAddrV4, String), GatewayError> {
        let record = self.record(internal_id).ok_or(GatewayError::UnknownTransducer(internal_id))?;
        let uri = format!("/{}/{index}", kind.path_segment());
        let ite = self.repo.get(record.ite).ok_or(GatewayError::UnknownTransducer(internal_id))?;
        if ite.channel(&uri).is_none() {
            return Err(GatewayError::UnknownChannel { id: internal_id, uri });
        }
        Ok((SocketAddrV4::new(record.ip, record.port), uri))
    }

    /// Proxies a channel request synchronously.
    pub fn api_channel(
        &mut self,
        internal_id: u64,
        kind: ChannelKind,
        index: usize,
        method: Method,
        body: &[u8],
        link: &mut dyn NodeLink,
    ) -> HttpResponse {
        let (target, uri) = match self.resolve_channel(internal_id, kind, index) {
            Ok(t) => t,
            Err(_) => return HttpResponse::empty(404),
        };
        let request = HttpRequest::new(method, uri).with_body(body.to_vec());
        Self::finish_proxy(link.exchange(target, &request))
    }

    pub fn finish_proxy(result: Result<HttpResponse, LinkError>) -> HttpResponse {
        match result {
            Ok(response) => response,
            Err(_) => error_reply(502, "NodeUnreachable"),
        }
    }

    pub fn api_samples(&self, internal_id: u64, index: usize) -> Result<Vec<SampleLogEntry>, GatewayError> {
        self.resolve_channel(internal_id, ChannelKind::Sensor, index)?;
        Ok(self.samples.samples_for(internal_id, &format!("/sensors/{index}")))
    }

    /// Pending requests with `rid > since`.
    pub fn pending_response(&self, since: u64) -> HttpResponse {
        let newer: Vec<&PendingRequest> = self.pending().iter().filter(|p| p.rid > since).collect();
        HttpResponse {
            status: 200,
            body: serde_json::to_vec(&newer).expect("pending serializes"),
        }
    }

    /// Sensor reads due at `now`. Each due channel is read once; missed
    /// intervals are skipped rather than back-filled.
    pub fn poll_due(&mut self, now: u64) -> Vec<PollTarget> {
        let mut due = Vec::new();
        let keys: Vec<(u64, usize)> = self
            .schedule
            .iter()
            .filter(|(_, at)| **at <= now)
            .map(|(k, _)| *k)
            .collect();
        for (internal_id, sensor) in keys {
            let Some(record) = self.record(internal_id).cloned() else {
                self.schedule.remove(&(internal_id, sensor));
                continue;
            };
            let rate = self
                .repo
                .get(record.ite)
                .and_then(|ite| ite.sensors.get(sensor))
                .and_then(|c| c.refresh_rate);
            let Some(rate) = rate else {
                self.schedule.remove(&(internal_id, sensor));
                continue;
            };
            let interval = sample_interval_ms(rate);
            let next = self.schedule.get_mut(&(internal_id, sensor)).expect("key present");
            while *next <= now {
                *next += interval;
            }
            due.push(PollTarget {
                internal_id,
                sensor,
                uri: format!("/sensors/{sensor}"),
                target: SocketAddrV4::new(record.ip, record.port),
            });
        }
        due
    }

    /// Logs the outcome of a scheduled read: a sample when the node answered
    /// with an admissible value, a gap otherwise.
    pub fn record_poll(&mut self, target: &PollTarget, result: Result<HttpResponse, LinkError>, now: u64) -> bool {
        let field = self
            .record(target.internal_id)
            .and_then(|r| self.repo.get(r.ite))
            .and_then(|ite| ite.sensors.get(target.sensor))
            .map(|c| c.response_format.clone());
        let value = match (field, result) {
            (Some(field), Ok(response)) if response.status == 200 => response
                .json_body()
                .and_then(|v| v.get(&field.name).cloned())
                .filter(|v| {
                    reading_from_json(&field, v).is_some_and(|r| match r.as_number() {
                        Some(n) => field.admits(n),
                        None => true,
                    })
                }),
            _ => None,
        };
        let line = match value {
            Some(value) => LogLine::Sample(SampleLogEntry {
                internal_id: target.internal_id,
                uri: target.uri.clone(),
                value,
                timestamp: now,
            }),
            None => LogLine::Gap {
                internal_id: target.internal_id,
                uri: target.uri.clone(),
                timestamp: now,
            },
        };
        let sampled = matches!(line, LogLine::Sample(_));
        if let Err(e) = self.samples.append(line) {
            tracing::warn!("sample log not written: {e}");
        }
        sampled
    }

    /// Reads every due sensor through `link`; returns how many samples were logged.
    pub fn poll_and_log(&mut self, now: u64, link: &mut dyn NodeLink) -> usize {
        let mut logged = 0;
        for target in self.poll_due(now) {
            let request = HttpRequest::get(target.uri.clone());
            let result = link.exchange(target.target, &request);
            if self.record_poll(&target, result, now) {
                logged += 1;
            }
        }
        logged
    }

    /// Earliest time at which [`Gateway::poll_due`] has work.
    pub fn next_poll_at(&self) -> Option<u64> {
        self.schedule.values().min().copied()
    }

    /// Registered nodes whose reachability probe is due.
    pub fn liveness_due(&self, now: u64) -> Vec<(u64, SocketAddrV4)> {
        self.health
            .iter()
            .filter(|(_, h)| h.next_probe <= now)
            .filter_map(|(id, _)| {
                self.record(*id)
                    .map(|r| (*id, SocketAddrV4::new(r.ip, r.port)))
            })
            .collect()
    }

    pub fn record_liveness(&mut self, internal_id: u64, reachable: bool, now: u64) {
        if !reachable {
            tracing::warn!(internal_id, "node unreachable");
        }
        let period = self.config.liveness_probe.as_millis() as u64;
        self.health.insert(
            internal_id,
            NodeHealth {
                reachable,
                checked_at: now,
                next_probe: now + period,
            },
        );
    }

    /// Probes due nodes with `GET /id`.
    pub fn probe_liveness(&mut self, now: u64, link: &mut dyn NodeLink) {
        for (internal_id, target) in self.liveness_due(now) {
            let reachable = link
                .exchange(target, &HttpRequest::get("/id"))
                .is_ok_and(|r| r.status == 200);
            self.record_liveness(internal_id, reachable, now);
        }
    }

    pub fn health(&self, internal_id: u64) -> Option<NodeHealth> {
        self.health.get(&internal_id).copied()
    }

    /// Routes any request that reached the gateway's HTTP port.
    pub fn route(&mut self, req: &HttpRequest, src: Ipv4Addr, now: u64) -> Routed {
        let (path, query) = match req.path.split_once('?') {
            Some((p, q)) => (p, q),
            None => (req.path.as_str(), ""),
        };
        if path == "/configure" || path == "/register" {
            if req.method != Method::Post {
                return Routed::Reply(HttpResponse::empty(405));
            }
            return Routed::Reply(self.handle_node_request(path, &req.body, src, now));
        }
        let Some(user) = self.authenticate(req.header("authorization")).map(str::to_owned) else {
            return Routed::Reply(error_reply(401, "Unauthorized"));
        };
        let segments: Vec<&str> = path.trim_start_matches('/').split('/').collect();
        let not_found = || Routed::Reply(HttpResponse::empty(404));
        let method_not_allowed = || Routed::Reply(HttpResponse::empty(405));
        match segments.as_slice() {
            ["transducers"] => match req.method {
                Method::Get => Routed::Reply(HttpResponse {
                    status: 200,
                    body: serialize_list(&self.api_list()),
                }),
                _ => method_not_allowed(),
            },
            ["transducers", id] => {
                let Ok(id) = id.parse::<u64>() else { return not_found() };
                if req.method != Method::Get {
                    return method_not_allowed();
                }
                match self.api_detail(id) {
                    Some(detail) => Routed::Reply(HttpResponse {
                        status: 200,
                        body: serialize_detail(&detail),
                    }),
                    None => not_found(),
                }
            }
            ["transducers", id, kind, index] => {
                let Ok(id) = id.parse::<u64>() else { return not_found() };
                let Some((kind, index)) = parse_channel_path(&format!("/{kind}/{index}")) else {
                    return not_found();
                };
                let allowed = match kind {
                    ChannelKind::Sensor => req.method == Method::Get,
                    ChannelKind::Actuator => matches!(req.method, Method::Get | Method::Put),
                };
                let (target, uri) = match self.resolve_channel(id, kind, index) {
                    Ok(t) => t,
                    Err(_) => return not_found(),
                };
                if !allowed {
                    return method_not_allowed();
                }
                let mut request = HttpRequest::new(req.method, uri).with_body(req.body.clone());
                if !req.body.is_empty() {
                    request = request.with_header("Content-Type", "application/json");
                }
                Routed::Proxy { target, request }
            }
            ["transducers", id, "sensors", index, "samples"] => {
                let (Ok(id), Ok(index)) = (id.parse::<u64>(), index.parse::<usize>()) else {
                    return not_found();
                };
                if req.method != Method::Get {
                    return method_not_allowed();
                }
                match self.api_samples(id, index) {
                    Ok(entries) => {
                        let body: Vec<_> = entries
                            .iter()
                            .map(|e| json!({ "timestamp": e.timestamp, "value": e.value }))
                            .collect();
                        Routed::Reply(HttpResponse::json(200, &json!(body)))
                    }
                    Err(_) => not_found(),
                }
            }
            ["pending"] => {
                if req.method != Method::Get {
                    return method_not_allowed();
                }
                let mut since = 0;
                let mut wait_ms = 0;
                for (key, value) in url::form_urlencoded::parse(query.as_bytes()) {
                    match key.as_ref() {
                        "since" => since = value.parse().unwrap_or(0),
                        "wait_ms" => wait_ms = value.parse().unwrap_or(0),
                        _ => {}
                    }
                }
                let has_newer = self.pending().iter().any(|p| p.rid > since);
                if has_newer || wait_ms == 0 {
                    Routed::Reply(self.pending_response(since))
                } else {
                    Routed::AwaitPending {
                        since,
                        wait: Duration::from_millis(wait_ms.min(60_000)),
                    }
                }
            }
            ["pending", rid, action] => {
                if req.method != Method::Post {
                    return method_not_allowed();
                }
                let Ok(rid) = rid.parse::<u64>() else { return not_found() };
                let decision = match *action {
                    "approve" => Decision::Approve,
                    "reject" => Decision::Reject,
                    _ => return not_found(),
                };
                match self.confirm_pending(rid, decision, &user) {
                    Ok(request) => Routed::Reply(HttpResponse::json(
                        200,
                        &json!({
                            "rid": rid,
                            "NodeID": request.node_id,
                            "decision": if decision == Decision::Approve { "approved" } else { "rejected" },
                        }),
                    )),
                    Err(_) => not_found(),
                }
            }
            _ => not_found(),
        }
    }

    /// Routes and completes a request in one go, proxying through `link`.
    /// Long polls answer immediately.
    pub fn handle(&mut self, req: &HttpRequest, src: Ipv4Addr, now: u64, link: &mut dyn NodeLink) -> HttpResponse {
        match self.route(req, src, now) {
            Routed::Reply(r) => r,
            Routed::Proxy { target, request } => Self::finish_proxy(link.exchange(target, &request)),
            Routed::AwaitPending { since, .. } => self.pending_response(since),
        }
    }
}

#[cfg(test)]
mod tests;
