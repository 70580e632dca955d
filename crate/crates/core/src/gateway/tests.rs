use std::collections::HashMap;

use proptest::prelude::*;
use serde_json::Value;

use super::*;
use crate::fixtures::builtin_ite;
use crate::ite_model::{
    encode_nvm, ChannelDescriptor, DataType, Decimal3, FieldDescriptor, NvmStatus,
};
use crate::node_fsm::{NodeEvent, NodeRuntime, NodeSettings};

fn id(s: &str) -> NodeIdentifier {
    s.parse().unwrap()
}

fn ip(last: u8) -> Ipv4Addr {
    Ipv4Addr::new(192, 168, 1, last)
}

fn gateway() -> Gateway {
    let mut gw = Gateway::ephemeral(GatewayConfig::default());
    gw.add_user("admin", "pw").unwrap();
    gw
}

fn authed(req: HttpRequest) -> HttpRequest {
    req.with_header("Authorization", basic_header("admin", "pw"))
}

/// A node already in `Listen`, reached by feeding canned gateway answers.
fn listening_node(node: NodeIdentifier, ite: IteDescriptor, port: u16) -> NodeRuntime {
    let net = GatewayConfig::default().network;
    let nvm = encode_nvm(&node, NvmStatus::Configured, Some(&net)).unwrap();
    let settings = NodeSettings {
        listen_port: port,
        ..NodeSettings::default()
    };
    let mut rt = NodeRuntime::from_nvm(nvm, ite, settings).unwrap();
    let t = Duration::ZERO;
    for event in [
        NodeEvent::PoweredOn,
        NodeEvent::InitComplete,
        NodeEvent::ApConnected,
        NodeEvent::ServerStarted,
        NodeEvent::RequestSent,
        NodeEvent::ResponseReceived(br#"{"Registered":1}"#.to_vec()),
    ] {
        rt.step(event, t).unwrap();
    }
    rt
}

#[derive(Default)]
struct FakeLink {
    nodes: HashMap<SocketAddrV4, NodeRuntime>,
    down: bool,
    calls: usize,
}

impl NodeLink for FakeLink {
    fn exchange(&mut self, target: SocketAddrV4, request: &HttpRequest) -> Result<HttpResponse, LinkError> {
        self.calls += 1;
        if self.down {
            return Err(LinkError("down".into()));
        }
        self.nodes
            .get_mut(&target)
            .map(|n| n.serve_request(request))
            .ok_or_else(|| LinkError("no route".into()))
    }
}

fn body(r: &HttpResponse) -> Value {
    serde_json::from_slice(&r.body).unwrap()
}

#[test]
fn automatic_config_request() {
    let mut gw = gateway();
    let reply = gw.handle_config_request(id("6.1.1"), ip(50), 0);
    let net = GatewayConfig::default().network;
    assert_eq!(reply, ConfigReply::Config(ConfigResponse::from(&net)));
    let http = reply.to_http();
    assert_eq!(http.status, 200);
    assert_eq!(
        http.body,
        br#"{"SSID":"itn-home","Password":"itn-home-password","GatewayIP":"192.168.1.1"}"#
    );
    assert!(gw.pending().is_empty());
}

#[test]
fn unknown_type_is_rejected() {
    let mut gw = gateway();
    let reply = gw.handle_config_request(id("99.1.1"), ip(50), 0);
    assert_eq!(reply, ConfigReply::UnknownType);
    assert_eq!(body(&reply.to_http()), serde_json::json!({"Error": "UnknownType"}));
}

#[test]
fn malformed_node_messages_are_400() {
    let mut gw = gateway();
    let r = gw.handle_node_request("/configure", br#"{"NodeID":"6.1","Request":"Configure"}"#, ip(5), 0);
    assert_eq!(r.status, 400);
    let r = gw.handle_node_request("/register", br#"{"NodeID":"6.1.1","Request":"Configure"}"#, ip(5), 0);
    assert_eq!(r.status, 400);
}

#[test]
fn whitelist_known_id_passes_straight_through() {
    let mut gw = gateway();
    gw.set_mode(AdmissionMode::Whitelist);
    gw.whitelist_add(id("6.1.1"));
    assert!(matches!(
        gw.handle_config_request(id("6.1.1"), ip(50), 0),
        ConfigReply::Config(_)
    ));
    assert!(gw.pending().is_empty());
}

#[test]
fn pending_approve_then_config_on_retry() {
    let mut gw = gateway();
    gw.set_mode(AdmissionMode::Whitelist);
    let first = gw.handle_config_request(id("6.1.1"), ip(50), 10);
    let ConfigReply::Pending(rid) = first else { panic!("{first:?}") };
    assert_eq!(first.to_http().status, 202);
    assert_eq!(gw.handle_config_request(id("6.1.1"), ip(50), 20), ConfigReply::Pending(rid));
    assert_eq!(gw.pending().len(), 1);
    assert_eq!(gw.pending_seq(), 1);

    gw.confirm_pending(rid, Decision::Approve, "admin").unwrap();
    assert!(gw.pending().is_empty());
    assert!(matches!(
        gw.handle_config_request(id("6.1.1"), ip(50), 30),
        ConfigReply::Config(_)
    ));
    assert!(matches!(
        gw.handle_register_request(id("6.1.1"), 80, ip(51), 40),
        RegisterReply::Registered { .. }
    ));
    assert!(matches!(
        gw.confirm_pending(rid, Decision::Approve, "admin"),
        Err(GatewayError::UnknownRequest(_))
    ));
}

#[test]
fn rejection_is_delivered_once() {
    let mut gw = gateway();
    gw.set_mode(AdmissionMode::DynamicRequest);
    let ConfigReply::Pending(rid) = gw.handle_config_request(id("6.1.1"), ip(50), 0) else {
        panic!()
    };
    gw.confirm_pending(rid, Decision::Reject, "admin").unwrap();
    assert_eq!(gw.handle_config_request(id("6.1.1"), ip(50), 1), ConfigReply::Rejected);
    assert_eq!(ConfigReply::Rejected.to_http().status, 403);
    let again = gw.handle_config_request(id("6.1.1"), ip(50), 2);
    assert!(matches!(again, ConfigReply::Pending(r) if r != rid));
    assert!(gw.records().is_empty());
}

#[test]
fn registration_records_and_reregistration() {
    let mut gw = gateway();
    let RegisterReply::Registered { internal_id } =
        gw.handle_register_request(id("6.1.1"), 80, Ipv4Addr::new(192, 168, 1, 144), 1000)
    else {
        panic!()
    };
    let rec = gw.record(internal_id).unwrap().clone();
    assert_eq!(rec.ip, Ipv4Addr::new(192, 168, 1, 144));
    assert_eq!(rec.registered_at, 1000);
    assert_eq!(rec.ite, (6, 1));

    let again = gw.handle_register_request(id("6.1.1"), 8080, ip(77), 2000);
    assert_eq!(again, RegisterReply::Registered { internal_id });
    let rec = gw.record(internal_id).unwrap();
    assert_eq!((rec.ip, rec.port, rec.registered_at), (ip(77), 8080, 2000));
    assert_eq!(gw.records().len(), 1);
    assert_eq!(again.to_http().body, br#"{"Registered":1}"#);
}

#[test]
fn register_without_ite() {
    let mut gw = Gateway::new(
        GatewayConfig::default(),
        Store::in_memory(),
        IteRepository::empty(),
        SampleLog::in_memory(),
    );
    let reply = gw.handle_register_request(id("6.1.1"), 80, ip(3), 0);
    assert_eq!(reply, RegisterReply::NoIte);
    assert_eq!(reply.to_http().body, br#"{"Registered":0}"#);
}

#[test]
fn list_and_detail_documents() {
    let mut gw = gateway();
    assert_eq!(gw.api_list(), vec![]);
    for (seed, node, last) in [(8, "6.1.1", 144), (11, "2.1.1", 145), (12, "7.1.1", 146), (13, "10.1.1", 147), (24, "2.2.1", 148)] {
        gw.seed_next_id(seed);
        gw.handle_register_request(id(node), 80, ip(last), 0);
    }
    let list = gw.api_list();
    let ids: Vec<u64> = list.iter().map(|s| s.id).collect();
    assert_eq!(ids, [8, 11, 12, 13, 24]);
    assert_eq!(list[4].sn, 2);
    assert_eq!(list[4].ite.name, "Temperature and humidity DHT-22");

    let detail = gw.api_detail(8).unwrap();
    assert_eq!(detail.ip, Ipv4Addr::new(192, 168, 1, 144));
    assert_eq!(&detail.ite, gw.repository().get((6, 1)).unwrap());
    assert!(gw.api_detail(999).is_none());
    for item in &list {
        assert!(gw.api_detail(item.id).is_some());
    }
}

#[test]
fn routes_require_auth_except_node_endpoints() {
    let mut gw = gateway();
    let mut link = FakeLink::default();
    for path in ["/transducers", "/transducers/1", "/pending", "/transducers/1/actuators/0"] {
        let r = gw.handle(&HttpRequest::get(path), ip(9), 0, &mut link);
        assert_eq!(r.status, 401, "{path}");
    }
    let bad = HttpRequest::get("/transducers").with_header("Authorization", basic_header("admin", "nope"));
    assert_eq!(gw.handle(&bad, ip(9), 0, &mut link).status, 401);
    let approve = HttpRequest::new(Method::Post, "/pending/1/approve");
    assert_eq!(gw.handle(&approve, ip(9), 0, &mut link).status, 401);

    let cfg = HttpRequest::new(Method::Post, "/configure")
        .with_body(br#"{"NodeID":"6.1.1","Request":"Configure"}"#.to_vec());
    assert_eq!(gw.handle(&cfg, ip(9), 0, &mut link).status, 200);
    let ok = gw.handle(&authed(HttpRequest::get("/transducers")), ip(9), 0, &mut link);
    assert_eq!((ok.status, ok.body.as_slice()), (200, b"[]".as_slice()));
    let wrong = gw.handle(&authed(HttpRequest::new(Method::Put, "/transducers")), ip(9), 0, &mut link);
    assert_eq!(wrong.status, 405);
    let missing = gw.handle(&authed(HttpRequest::get("/nowhere")), ip(9), 0, &mut link);
    assert_eq!(missing.status, 404);
}

#[test]
fn channel_proxy_exchange() {
    let mut gw = gateway();
    let node_ip = Ipv4Addr::new(192, 168, 1, 144);
    gw.seed_next_id(8);
    gw.handle_register_request(id("6.1.1"), 80, node_ip, 0);
    let mut link = FakeLink::default();
    link.nodes.insert(
        SocketAddrV4::new(node_ip, 80),
        listening_node(id("6.1.1"), builtin_ite(6, 1).unwrap(), 80),
    );
    let put = |v: &str| {
        authed(HttpRequest::new(Method::Put, "/transducers/8/actuators/0").with_body(v.as_bytes().to_vec()))
    };
    let get = authed(HttpRequest::get("/transducers/8/actuators/0"));

    assert_eq!(gw.handle(&put(r#"{"ActuatorValue": 50}"#), ip(2), 0, &mut link).body, br#"{"ActuatorSet":1}"#);
    assert_eq!(gw.handle(&get, ip(2), 0, &mut link).body, br#"{"ActuatorValue":50}"#);
    assert_eq!(gw.handle(&put(r#"{"ActuatorValue": 20}"#), ip(2), 0, &mut link).body, br#"{"ActuatorSet":1}"#);
    assert_eq!(gw.handle(&put(r#"{"ActuatorValue": 200}"#), ip(2), 0, &mut link).body, br#"{"ActuatorSet":0}"#);
    assert_eq!(gw.handle(&get, ip(2), 0, &mut link).body, br#"{"ActuatorValue":20}"#);

    let unknown_channel = authed(HttpRequest::get("/transducers/8/actuators/1"));
    assert_eq!(gw.handle(&unknown_channel, ip(2), 0, &mut link).status, 404);
    let unknown_node = authed(HttpRequest::get("/transducers/9/actuators/0"));
    assert_eq!(gw.handle(&unknown_node, ip(2), 0, &mut link).status, 404);

    link.down = true;
    let r = gw.handle(&get, ip(2), 0, &mut link);
    assert_eq!(r.status, 502);
    assert_eq!(r.body, br#"{"Error":"NodeUnreachable"}"#);
}

#[test]
fn pending_endpoint_and_decisions() {
    let mut gw = gateway();
    gw.set_mode(AdmissionMode::DynamicRequest);
    let mut link = FakeLink::default();
    let list = gw.handle(&authed(HttpRequest::get("/pending")), ip(1), 0, &mut link);
    assert_eq!(list.body, b"[]");
    assert_eq!(
        gw.route(&authed(HttpRequest::get("/pending?wait_ms=100")), ip(1), 0),
        Routed::AwaitPending { since: 0, wait: Duration::from_millis(100) }
    );

    gw.handle_config_request(id("6.1.1"), ip(60), 5);
    let r = gw.handle(&authed(HttpRequest::get("/pending?wait_ms=100")), ip(1), 0, &mut link);
    let v = body(&r);
    assert_eq!(v[0]["rid"], 1);
    assert_eq!(v[0]["NodeID"], "6.1.1");
    assert_eq!(v[0]["Request"], "Configure");
    let newer = gw.handle(&authed(HttpRequest::get("/pending?since=1")), ip(1), 0, &mut link);
    assert_eq!(newer.body, b"[]");

    let approve = authed(HttpRequest::new(Method::Post, "/pending/1/approve"));
    let r = gw.handle(&approve, ip(1), 0, &mut link);
    assert_eq!(r.status, 200);
    assert_eq!(body(&r)["decision"], "approved");
    assert_eq!(gw.handle(&approve, ip(1), 0, &mut link).status, 404);
    let bogus = authed(HttpRequest::new(Method::Post, "/pending/1/maybe"));
    assert_eq!(gw.handle(&bogus, ip(1), 0, &mut link).status, 404);
}

#[test]
fn stored_notifications_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    {
        let mut gw = Gateway::new(
            GatewayConfig::default(),
            Store::open(dir.path()).unwrap(),
            IteRepository::builtin(),
            SampleLog::open(dir.path()).unwrap(),
        );
        gw.set_mode(AdmissionMode::Whitelist);
        gw.handle_config_request(id("6.1.1"), ip(60), 5);
    }
    let gw = Gateway::new(
        GatewayConfig::default(),
        Store::open(dir.path()).unwrap(),
        IteRepository::builtin(),
        SampleLog::open(dir.path()).unwrap(),
    );
    assert_eq!(gw.pending().len(), 1);
    assert_eq!(gw.pending()[0].node_id, id("6.1.1"));
}

fn thermometer(rate: Option<u32>) -> IteDescriptor {
    let field = FieldDescriptor::new(
        "Temperature",
        "Celsius",
        DataType::Float,
        "-40".parse::<Decimal3>().unwrap(),
        "80".parse::<Decimal3>().unwrap(),
        "0.1".parse::<Decimal3>().unwrap(),
    );
    let mut channel = ChannelDescriptor::sensor("Thermometer", 0, field);
    channel.refresh_rate = rate;
    IteDescriptor {
        name: "Thermometer".into(),
        node_type: 40,
        version: 1,
        sensors: vec![channel],
        actuators: vec![],
    }
}

fn polling_setup(rate: Option<u32>) -> (Gateway, FakeLink, u64) {
    let ite = thermometer(rate);
    let mut gw = gateway();
    gw.repository_mut().insert(ite.clone()).unwrap();
    let RegisterReply::Registered { internal_id } = gw.handle_register_request(id("40.1.1"), 80, ip(40), 0)
    else {
        panic!()
    };
    let mut link = FakeLink::default();
    link.nodes.insert(SocketAddrV4::new(ip(40), 80), listening_node(id("40.1.1"), ite, 80));
    (gw, link, internal_id)
}

#[test]
fn poll_and_log_one_virtual_hour() {
    let (mut gw, mut link, iid) = polling_setup(Some(60));
    assert_eq!(gw.next_poll_at(), Some(60_000));
    let mut logged = 0;
    for second in 0..=3600u64 {
        logged += gw.poll_and_log(second * 1000, &mut link);
    }
    assert!((59..=61).contains(&logged), "{logged}");
    let entries = gw.api_samples(iid, 0).unwrap();
    assert_eq!(entries.len(), logged);
    let field = &thermometer(None).sensors[0].response_format;
    for e in &entries {
        let reading = reading_from_json(field, &e.value).unwrap();
        assert!(field.admits(reading.as_number().unwrap()));
    }
}

#[test]
fn poll_with_node_down_half_the_window() {
    let (mut gw, mut link, iid) = polling_setup(Some(60));
    let mut logged = 0;
    for second in 0..=3600u64 {
        link.down = second >= 1800;
        logged += gw.poll_and_log(second * 1000, &mut link);
    }
    assert!((29..=31).contains(&logged), "{logged}");
    assert_eq!(logged + gw.sample_log().gap_count(iid, "/sensors/0"), 60);
}

#[test]
fn poll_without_refresh_rate_logs_nothing() {
    let (mut gw, mut link, _) = polling_setup(None);
    for second in 0..=3600u64 {
        gw.poll_and_log(second * 1000, &mut link);
    }
    assert!(gw.sample_log().lines().is_empty());
    assert_eq!(link.calls, 0);
}

#[test]
fn samples_endpoint() {
    let (mut gw, mut link, iid) = polling_setup(Some(60));
    gw.poll_and_log(60_000, &mut link);
    let r = gw.handle(&authed(HttpRequest::get(format!("/transducers/{iid}/sensors/0/samples"))), ip(1), 0, &mut link);
    let v = body(&r);
    assert_eq!(v.as_array().unwrap().len(), 1);
    assert_eq!(v[0]["timestamp"], 60_000);
    let r = gw.handle(&authed(HttpRequest::get(format!("/transducers/{iid}/sensors/1/samples"))), ip(1), 0, &mut link);
    assert_eq!(r.status, 404);
}

#[test]
fn liveness_probe_marks_unreachable() {
    let (mut gw, mut link, iid) = polling_setup(None);
    gw.probe_liveness(59_999, &mut link);
    assert_eq!(gw.health(iid).unwrap().checked_at, 0);
    link.down = true;
    gw.probe_liveness(60_000, &mut link);
    let h = gw.health(iid).unwrap();
    assert!(!h.reachable);
    assert_eq!(h.next_probe, 120_000);
}

#[derive(Debug, Clone)]
enum Op {
    Config(usize),
    Register(usize),
    Approve(usize),
    Reject(usize),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (0usize..6).prop_map(Op::Config),
        (0usize..6).prop_map(Op::Register),
        (0usize..4).prop_map(Op::Approve),
        (0usize..4).prop_map(Op::Reject),
    ]
}

const POOL: [&str; 6] = ["6.1.1", "6.2.1", "2.1.1", "7.1.1", "4.1.1", "10.3.1"];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn whitelist_never_admits_unlisted_without_approval(ops in proptest::collection::vec(op(), 1..60)) {
        let mut gw = gateway();
        gw.set_mode(AdmissionMode::Whitelist);
        gw.whitelist_add(id(POOL[0]));
        gw.whitelist_add(id(POOL[3]));
        // every identifier a user ever approved
        let mut approved = std::collections::BTreeSet::new();
        for (t, op) in ops.into_iter().enumerate() {
            let now = t as u64;
            match op {
                Op::Config(i) => { gw.handle_config_request(id(POOL[i]), ip(i as u8 + 10), now); }
                Op::Register(i) => { gw.handle_register_request(id(POOL[i]), 80, ip(i as u8 + 10), now); }
                Op::Approve(k) | Op::Reject(k) => {
                    let approve = matches!(op, Op::Approve(_));
                    if let Some(p) = gw.pending().get(k).cloned() {
                        let decision = if approve { Decision::Approve } else { Decision::Reject };
                        gw.confirm_pending(p.rid, decision, "admin").unwrap();
                        if approve { approved.insert(p.node_id); }
                    }
                }
            }
            for r in gw.records() {
                let listed = r.identifier == id(POOL[0]) || r.identifier == id(POOL[3]);
                prop_assert!(listed || approved.contains(&r.identifier));
            }
        }
        for r in gw.records() {
            let listed = r.identifier == id(POOL[0]) || r.identifier == id(POOL[3]);
            prop_assert!(listed || approved.contains(&r.identifier), "{} admitted without approval", r.identifier);
        }
    }

    #[test]
    fn reregistration_keeps_internal_id(seq in proptest::collection::vec((0usize..6, 1u8..250, 1u16..9000), 1..40)) {
        let mut gw = gateway();
        let mut first: HashMap<(u32, u32), u64> = HashMap::new();
        for (t, (i, last, port)) in seq.into_iter().enumerate() {
            let node = id(POOL[i]);
            let reply = gw.handle_register_request(node, port, ip(last), t as u64);
            let RegisterReply::Registered { internal_id } = reply else {
                prop_assert!(false, "unexpected {:?}", reply);
                unreachable!()
            };
            let expected = *first.entry(node.record_key()).or_insert(internal_id);
            prop_assert_eq!(internal_id, expected);
            let rec = gw.record(internal_id).unwrap();
            prop_assert_eq!((rec.ip, rec.port, rec.registered_at), (ip(last), port, t as u64));
        }
        prop_assert_eq!(gw.records().len(), first.len());
        let ids: std::collections::BTreeSet<u64> = first.values().copied().collect();
        prop_assert_eq!(ids.len(), first.len());
    }
}
