use std::net::{Ipv4Addr, SocketAddrV4};
use std::path::PathBuf;
use std::time::Duration;

use itenet::fixtures;
use itenet::ite_model::{decode_nvm, encode_nvm, parse_ite, IteDescriptor, NodeIdentifier, NvmImage, NvmStatus};
use itenet::netsim::realtime::{RealtimeNode, RealtimeOptions};
use itenet::netsim::Fabric;
use itenet::node_fsm::{NodeRuntime, NodeSettings, NodeTiming};
use serde_json::json;

use crate::args::{NodeIdentity, ResetArgs, SpawnArgs};
use crate::{runtime, scenario_by_name, usage, wait_for_signal, CliError, Output};

impl NodeIdentity {
    /// `Some` only when all three parts were given.
    fn identifier(&self) -> Result<Option<NodeIdentifier>, CliError> {
        match (self.node_type, self.serial, self.version) {
            (Some(t), Some(s), Some(v)) => NodeIdentifier::new(t, s, v).map(Some).map_err(usage),
            (None, None, None) => Ok(None),
            _ => Err(usage("--type, --serial and --version go together")),
        }
    }

    fn nvm_path(&self, id: Option<NodeIdentifier>) -> Result<PathBuf, CliError> {
        match (&self.nvm, id) {
            (Some(path), _) => Ok(path.clone()),
            (None, Some(id)) => Ok(PathBuf::from(format!("node-{id}.nvm"))),
            (None, None) => Err(usage("give --nvm or --type/--serial/--version")),
        }
    }
}

fn load_ite(path: Option<&PathBuf>, id: NodeIdentifier) -> Result<IteDescriptor, CliError> {
    match path {
        Some(path) => {
            let bytes = std::fs::read(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
            parse_ite(&bytes).map_err(|e| usage(format!("{}: {e}", path.display())))
        }
        None => fixtures::builtin_ite(id.node_type(), id.version())
            .ok_or_else(|| usage(format!("no bundled ITE for type {} version {}; pass --ite", id.node_type(), id.version()))),
    }
}

pub fn spawn(a: SpawnArgs, out: &Output) -> Result<(), CliError> {
    let given = a.identity.identifier()?;
    let path = a.identity.nvm_path(given)?;
    let gateway: SocketAddrV4 = a
        .gateway
        .as_deref()
        .unwrap_or("127.0.0.1:5050")
        .parse()
        .map_err(|_| usage("--gateway must be ip:port"))?;
    let bind_ip: Ipv4Addr = match &a.bind_ip {
        Some(ip) => ip.parse().map_err(|_| usage(format!("`{ip}` is not an IPv4 address")))?,
        None => Ipv4Addr::LOCALHOST,
    };
    let scenario = scenario_by_name(a.scenario.as_deref().unwrap_or("zero"))?;

    let existing = if a.fresh || !path.exists() {
        None
    } else {
        let image = NvmImage::load(&path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
        let (stored, _, _) = decode_nvm(&image).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
        if given.is_some_and(|id| id != stored) {
            return Err(usage(format!("{} holds {stored}; pass --fresh to replace it", path.display())));
        }
        Some((image, stored))
    };
    let id = match (&existing, given) {
        (Some((_, stored)), _) => *stored,
        (None, Some(id)) => id,
        (None, None) => return Err(usage("--type, --serial and --version are required for a fresh node")),
    };
    let ite = load_ite(a.ite.as_ref(), id)?;
    if ite.key() != id.ite_key() {
        return Err(usage(format!("ITE describes type {} version {}, not node {id}", ite.node_type, ite.version)));
    }

    let mut settings = NodeSettings {
        timing: if a.instant { NodeTiming::instant() } else { NodeTiming::default() },
        listen_port: a.listen_port.unwrap_or(0),
        seed: a.seed.unwrap_or(0),
        ..NodeSettings::default()
    };
    settings.factory.config_gateway = *gateway.ip();
    settings.factory.gateway_port = gateway.port();
    let node = match existing {
        Some((image, _)) => NodeRuntime::from_nvm(image, ite, settings),
        None => {
            let image = encode_nvm(&id, NvmStatus::Unconfigured, None).map_err(runtime)?;
            image.save(&path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
            NodeRuntime::fresh(id, ite, settings)
        }
    }
    .map_err(usage)?;
    let options = RealtimeOptions {
        bind_ip,
        nvm_path: Some(path.clone()),
    };
    let mut node = RealtimeNode::start(node, Fabric::new(scenario, a.seed.unwrap_or(0)), options).map_err(runtime)?;
    let timeout = Duration::from_secs(a.timeout_s.unwrap_or(120));
    let Some(elapsed) = node.wait_listen(timeout) else {
        let state = node.runtime().state();
        let _ = node.stop();
        return Err(runtime(format!("node {id} not listening after {}s (stuck in {})", timeout.as_secs(), state.name())));
    };
    let addr = node.server_addr().map(|a| a.to_string());
    let ms = elapsed.as_secs_f64() * 1000.0;
    out.emit(
        &json!({ "node_id": id.to_string(), "listening": addr, "time_to_listen_ms": ms, "nvm": path }),
        || format!("node {id} listening on {} after {ms:.1} ms\n", addr.as_deref().unwrap_or("?")),
    );
    if !a.until_listen {
        wait_for_signal()?;
    }
    node.stop().map_err(runtime)
}

pub fn reset(a: ResetArgs, out: &Output) -> Result<(), CliError> {
    let given = a.identity.identifier()?;
    let path = a.identity.nvm_path(given)?;
    let mut image = NvmImage::load(&path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    let (id, _, _) = decode_nvm(&image).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    image.factory_reset();
    image.save(&path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    out.emit(&json!({ "node_id": id.to_string(), "nvm": path, "status": "unconfigured" }), || {
        format!("reset {id} in {}\n", path.display())
    });
    Ok(())
}
