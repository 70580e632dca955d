//! Generators and rigs shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::net::{Ipv4Addr, SocketAddr};
use std::time::Duration;

use itenet::fixtures;
use itenet::gateway::server::{self, ServerHandle, ServerOptions};
use itenet::gateway::{basic_header, ConfigReply, Decision, Gateway, GatewayConfig, RegisterReply};
use itenet::http::{self, HttpRequest, HttpResponse, Method};
use itenet::ite_model::{
    ChannelDescriptor, DataType, Decimal3, FieldDescriptor, IteDescriptor, NetworkConfig, NodeIdentifier,
    NvmStatus, MAX_NODE_TYPE,
};
use itenet::netsim::realtime::{RealtimeNode, RealtimeOptions};
use itenet::netsim::{Fabric, ScenarioConfig};
use itenet::node_fsm::{NodeRuntime, NodeSettings, NodeTiming};
use rand::seq::IndexedRandom;
use rand::Rng;

pub const DATA_LIST: &str = include_str!("../data/transducer_list.json");
pub const DATA_DETAIL: &str = include_str!("../data/transducer_detail.json");

/// Drops whitespace outside string literals.
pub fn minify_json(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let (mut in_string, mut escaped) = (false, false);
    for c in text.chars() {
        if in_string {
            out.push(c);
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            }
        } else if c == '"' {
            in_string = true;
            out.push(c);
        } else if !c.is_whitespace() {
            out.push(c);
        }
    }
    out
}

fn random_text<R: Rng>(rng: &mut R, max_bytes: usize, allow_empty: bool) -> String {
    const EXTRA: [char; 6] = ['é', 'ß', '温', '°', '%', '"'];
    let target = rng.random_range(if allow_empty { 0 } else { 1 }..=max_bytes);
    let mut s = String::new();
    while s.len() < target {
        let c = if rng.random_bool(0.9) {
            rng.random_range(0x20u8..0x7f) as char
        } else {
            *EXTRA.choose(rng).expect("non-empty")
        };
        if s.len() + c.len_utf8() > max_bytes {
            break;
        }
        s.push(c);
    }
    if s.is_empty() && !allow_empty {
        s.push('x');
    }
    s
}

pub fn random_identifier<R: Rng>(rng: &mut R) -> NodeIdentifier {
    let node_type = if rng.random_bool(0.2) {
        *[0, MAX_NODE_TYPE].choose(rng).expect("non-empty")
    } else {
        rng.random_range(0..=MAX_NODE_TYPE)
    };
    let serial = if rng.random_bool(0.2) { u32::MAX } else { rng.random() };
    NodeIdentifier::new(node_type, serial, rng.random()).expect("type within 24 bits")
}

pub fn random_network<R: Rng>(rng: &mut R) -> NetworkConfig {
    NetworkConfig {
        ssid: random_text(rng, 41, false),
        password: random_text(rng, 64, true),
        gateway: Ipv4Addr::from(rng.random::<u32>()),
    }
}

/// Identity, status and (for configured nodes) network settings.
pub fn random_nvm_content<R: Rng>(rng: &mut R) -> (NodeIdentifier, NvmStatus, Option<NetworkConfig>) {
    let id = random_identifier(rng);
    if rng.random_bool(0.5) {
        (id, NvmStatus::Configured, Some(random_network(rng)))
    } else {
        (id, NvmStatus::Unconfigured, None)
    }
}

fn random_decimal<R: Rng>(rng: &mut R, integral: bool, lo: i64, hi: i64) -> Decimal3 {
    let v = rng.random_range(lo..=hi);
    if integral {
        Decimal3::from_int(v)
    } else {
        Decimal3::from_thousandths(v * 1000 + rng.random_range(0..1000))
    }
}

pub fn random_field<R: Rng>(rng: &mut R) -> FieldDescriptor {
    let data_type = *DataType::ALL.choose(rng).expect("non-empty");
    let name = random_text(rng, 24, false);
    let units = random_text(rng, 32, true);
    if data_type == DataType::Boolean {
        return FieldDescriptor::boolean(name, units);
    }
    let integral = matches!(data_type, DataType::Int | DataType::UnsignedInt);
    let floor = if data_type == DataType::UnsignedInt { 0 } else { -100_000 };
    let a = random_decimal(rng, integral, floor, 100_000);
    let b = random_decimal(rng, integral, floor, 100_000);
    let (min, max) = if a <= b { (a, b) } else { (b, a) };
    let resolution = random_decimal(rng, integral, 0, 10);
    FieldDescriptor::new(name, units, data_type, min, max, resolution)
}

pub fn random_ite<R: Rng>(rng: &mut R) -> IteDescriptor {
    let channel_rate = |rng: &mut R, c: ChannelDescriptor| {
        if rng.random_bool(0.3) {
            c.with_refresh_rate(rng.random_range(1..=3600))
        } else {
            c
        }
    };
    let sensors = (0..rng.random_range(0..4))
        .map(|i| {
            let c = ChannelDescriptor::sensor(random_text(rng, 30, false), i, random_field(rng));
            channel_rate(rng, c)
        })
        .collect();
    let actuators = (0..rng.random_range(0..4))
        .map(|i| {
            let c = ChannelDescriptor::actuator(
                random_text(rng, 30, false),
                i,
                random_field(rng),
                FieldDescriptor::boolean("ActuatorSet", "-"),
            );
            channel_rate(rng, c)
        })
        .collect();
    IteDescriptor {
        name: random_text(rng, 40, false),
        node_type: rng.random_range(0..=MAX_NODE_TYPE),
        version: rng.random(),
        sensors,
        actuators,
    }
}

/// Outcome of one randomized admission sequence.
#[derive(Debug, Default)]
pub struct AdmissionCheck {
    pub unlisted_records: Vec<NodeIdentifier>,
    pub id_changes: Vec<(NodeIdentifier, u64, u64)>,
    pub registrations: usize,
}

/// Random configure/register/approve/reject traffic against a whitelist
/// gateway. Records for identifiers neither listed nor approved are
/// violations, as are internal ids that change on re-registration.
pub fn admission_sequence<R: Rng>(rng: &mut R, steps: usize) -> AdmissionCheck {
    let pool: Vec<NodeIdentifier> = fixtures::ITE_DOCUMENTS
        .iter()
        .flat_map(|(t, v, _)| (1..=3).map(move |sn| NodeIdentifier::new(*t, sn, *v).expect("valid")))
        .collect();
    let mut gw = Gateway::ephemeral(GatewayConfig::default());
    gw.set_mode(itenet::gateway::AdmissionMode::Whitelist);
    let listed: BTreeSet<NodeIdentifier> = pool.iter().copied().filter(|_| rng.random_bool(0.4)).collect();
    for id in &listed {
        gw.whitelist_add(*id);
    }
    let mut approved = BTreeSet::new();
    let mut first_id: BTreeMap<(u32, u32), u64> = BTreeMap::new();
    let mut check = AdmissionCheck::default();
    for now in 0..steps as u64 {
        let id = *pool.choose(rng).expect("non-empty");
        let ip = Ipv4Addr::new(10, 1, 0, rng.random_range(2..250));
        match rng.random_range(0..4) {
            0 => {
                let reply = gw.handle_config_request(id, ip, now);
                assert!(!matches!(reply, ConfigReply::UnknownType));
            }
            1 => {
                if let RegisterReply::Registered { internal_id } = gw.handle_register_request(id, 80, ip, now) {
                    check.registrations += 1;
                    let first = *first_id.entry(id.record_key()).or_insert(internal_id);
                    if first != internal_id {
                        check.id_changes.push((id, first, internal_id));
                    }
                }
            }
            op => {
                if let Some(p) = gw.pending().choose(rng).cloned() {
                    let decision = if op == 2 { Decision::Approve } else { Decision::Reject };
                    if decision == Decision::Approve {
                        approved.insert(p.node_id);
                    }
                    gw.confirm_pending(p.rid, decision, "admin").expect("rid is pending");
                }
            }
        }
        for r in gw.records() {
            if !listed.contains(&r.identifier) && !approved.contains(&r.identifier) {
                check.unlisted_records.push(r.identifier);
            }
        }
    }
    check
}

/// A live gateway with one light-regulator node registered under id 8.
pub struct LiveRig {
    pub node: RealtimeNode,
    pub gateway: ServerHandle,
    pub auth: String,
}

impl LiveRig {
    pub fn start() -> Self {
        let mut config = GatewayConfig::default();
        config.network.gateway = Ipv4Addr::LOCALHOST;
        let mut gw = Gateway::ephemeral(config);
        gw.seed_next_id(8);
        gw.add_user("admin", "admin-pass").expect("fresh user");
        let gateway = server::spawn(gw, SocketAddr::from((Ipv4Addr::LOCALHOST, 0)), ServerOptions::default())
            .expect("gateway binds");
        let id = NodeIdentifier::new(6, 1, 1).expect("valid");
        let ite = fixtures::builtin_ite(6, 1).expect("bundled");
        let mut settings = NodeSettings {
            timing: NodeTiming::instant(),
            listen_port: 0,
            ..NodeSettings::default()
        };
        settings.factory.config_gateway = Ipv4Addr::LOCALHOST;
        settings.factory.gateway_port = gateway.addr().port();
        let runtime = NodeRuntime::fresh(id, ite, settings).expect("identity matches ITE");
        let mut node = RealtimeNode::start(runtime, Fabric::new(ScenarioConfig::zero_delay(), 0), RealtimeOptions::default())
            .expect("node starts");
        node.wait_listen(Duration::from_secs(20)).expect("node reaches Listen");
        Self {
            node,
            gateway,
            auth: basic_header("admin", "admin-pass"),
        }
    }

    pub fn request(&self, method: Method, path: &str, body: Option<&str>) -> HttpResponse {
        let mut req = HttpRequest::new(method, path).with_header("Authorization", self.auth.clone());
        if let Some(body) = body {
            req = req
                .with_header("Content-Type", "application/json")
                .with_body(body.as_bytes().to_vec());
        }
        http::exchange(self.gateway.addr(), &req, Duration::from_secs(5)).expect("gateway answers")
    }
}
