use std::net::{Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::time::Duration;

use itenet::gateway::server::{self, ServerOptions};
use itenet::gateway::{
    AdmissionMode, Gateway, GatewayConfig, IteRepository, SampleLog, Store,
};
use itenet::ite_model::{NetworkConfig, NodeIdentifier, PASSWORD_MAX, SSID_MAX};
use serde_json::json;

use crate::args::{ServeArgs, UserAddArgs, WhitelistAddArgs};
use crate::{runtime, usage, wait_for_signal, CliError, Output};

fn store_dir(store: Option<PathBuf>) -> PathBuf {
    store.unwrap_or_else(|| PathBuf::from("itenet-state"))
}

fn network(a: &ServeArgs) -> Result<NetworkConfig, CliError> {
    let defaults = GatewayConfig::default().network;
    let ssid = a.network_ssid.clone().unwrap_or(defaults.ssid);
    let password = a.network_password.clone().unwrap_or(defaults.password);
    if ssid.is_empty() || ssid.len() > SSID_MAX {
        return Err(usage(format!("network SSID must be 1 to {SSID_MAX} bytes")));
    }
    if password.len() > PASSWORD_MAX {
        return Err(usage(format!("network password must be at most {PASSWORD_MAX} bytes")));
    }
    let gateway = match &a.network_gateway {
        Some(ip) => ip.parse().map_err(|_| usage(format!("`{ip}` is not an IPv4 address")))?,
        None => Ipv4Addr::LOCALHOST,
    };
    Ok(NetworkConfig { ssid, password, gateway })
}

pub fn serve(a: ServeArgs, out: &Output) -> Result<(), CliError> {
    let mode: Option<AdmissionMode> = a.mode.as_deref().map(str::parse).transpose().map_err(usage)?;
    let bind: Ipv4Addr = match &a.bind {
        Some(ip) => ip.parse().map_err(|_| usage(format!("`{ip}` is not an IPv4 address")))?,
        None => Ipv4Addr::UNSPECIFIED,
    };
    let config = GatewayConfig {
        network: network(&a)?,
        liveness_probe: Duration::from_secs(a.liveness_s.unwrap_or(60)),
    };
    if config.liveness_probe.is_zero() {
        return Err(usage("liveness interval must be positive"));
    }
    let mut repo = IteRepository::builtin();
    if let Some(base) = &a.ite_remote {
        repo.set_remote(base).map_err(usage)?;
    }
    if let Some(dir) = &a.ite_dir {
        repo.load_dir(dir).map_err(runtime)?;
    }

    let dir = store_dir(a.store);
    let store = Store::open(&dir).map_err(runtime)?;
    let samples = SampleLog::open(&dir).map_err(runtime)?;
    let mut gw = Gateway::new(config, store, repo, samples);
    if let Some(mode) = mode {
        gw.set_mode(mode);
    }
    let mode = gw.mode();
    let options = ServerOptions {
        node_timeout: Duration::from_millis(a.node_timeout_ms.unwrap_or(5000)),
        ..ServerOptions::default()
    };
    let handle = server::spawn(gw, SocketAddr::from((bind, a.port.unwrap_or(5050))), options).map_err(runtime)?;
    let addr = handle.addr();
    out.emit(
        &json!({ "listening": addr.to_string(), "mode": mode, "store": dir }),
        || format!("gateway listening on {addr} ({mode:?} admission, state in {})\n", dir.display()),
    );
    wait_for_signal()?;
    handle.stop().map_err(runtime)
}

fn open_admin(dir: &std::path::Path) -> Result<Gateway, CliError> {
    let store = Store::open(dir).map_err(runtime)?;
    Ok(Gateway::new(GatewayConfig::default(), store, IteRepository::empty(), SampleLog::in_memory()))
}

pub fn user_add(a: UserAddArgs, out: &Output) -> Result<(), CliError> {
    let user = a.user.ok_or_else(|| usage("--user is required"))?;
    let password = a.user_password.ok_or_else(|| usage("--user-password is required"))?;
    if user.is_empty() || user.contains(':') {
        return Err(usage("user names must be non-empty and free of `:`"));
    }
    let dir = store_dir(a.store);
    let mut gw = open_admin(&dir)?;
    gw.add_user(&user, &password).map_err(runtime)?;
    out.emit(&json!({ "user": user, "store": dir }), || format!("added user {user}\n"));
    Ok(())
}

pub fn whitelist_add(a: WhitelistAddArgs, out: &Output) -> Result<(), CliError> {
    let text = a.node_id.ok_or_else(|| usage("--node-id is required"))?;
    let id: NodeIdentifier = text.parse().map_err(usage)?;
    let dir = store_dir(a.store);
    let mut gw = open_admin(&dir)?;
    gw.whitelist_add(id);
    gw.save().map_err(runtime)?;
    let mode = gw.mode();
    out.emit(&json!({ "whitelisted": id.to_string(), "mode": mode }), || {
        let mut s = format!("whitelisted {id}\n");
        if mode != AdmissionMode::Whitelist {
            s.push_str(&format!("note: the gateway is in {mode:?} mode\n"));
        }
        s
    });
    Ok(())
}
