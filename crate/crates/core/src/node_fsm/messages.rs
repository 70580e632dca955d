use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::ite_model::{NetworkConfig, NodeIdentifier};

/// Body of a node's `POST /configure` or `POST /register`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeMessage {
    Configure { node_id: NodeIdentifier },
    Register { node_id: NodeIdentifier, port: u16 },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MessageWire {
    #[serde(rename = "NodeID")]
    node_id: String,
    #[serde(rename = "Request")]
    request: String,
    #[serde(rename = "Port", default, skip_serializing_if = "Option::is_none")]
    port: Option<u16>,
}

#[derive(Debug, thiserror::Error)]
pub enum MessageError {
    #[error("message is not a JSON request envelope: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("bad NodeID: {0}")]
    NodeId(#[from] crate::ite_model::NodeIdError),
    #[error("unknown request kind `{0}`")]
    UnknownRequest(String),
    #[error("register requests need a Port")]
    MissingPort,
}

impl NodeMessage {
    pub fn node_id(&self) -> NodeIdentifier {
        match self {
            NodeMessage::Configure { node_id } | NodeMessage::Register { node_id, .. } => *node_id,
        }
    }

    pub fn path(&self) -> &'static str {
        match self {
            NodeMessage::Configure { .. } => "/configure",
            NodeMessage::Register { .. } => "/register",
        }
    }

    pub fn to_json(&self) -> Vec<u8> {
        let wire = match self {
            NodeMessage::Configure { node_id } => MessageWire {
                node_id: node_id.to_string(),
                request: "Configure".into(),
                port: None,
            },
            NodeMessage::Register { node_id, port } => MessageWire {
                node_id: node_id.to_string(),
                request: "Register".into(),
                port: Some(*port),
            },
        };
        serde_json::to_vec(&wire).expect("message serialization is infallible")
    }

    pub fn parse(bytes: &[u8]) -> Result<Self, MessageError> {
        let wire: MessageWire = serde_json::from_slice(bytes)?;
        let node_id: NodeIdentifier = wire.node_id.parse()?;
        match wire.request.as_str() {
            "Configure" => Ok(NodeMessage::Configure { node_id }),
            "Register" => Ok(NodeMessage::Register {
                node_id,
                port: wire.port.ok_or(MessageError::MissingPort)?,
            }),
            other => Err(MessageError::UnknownRequest(other.to_owned())),
        }
    }
}

/// Gateway answer to a granted configuration request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigResponse {
    #[serde(rename = "SSID")]
    pub ssid: String,
    #[serde(rename = "Password")]
    pub password: String,
    #[serde(rename = "GatewayIP")]
    pub gateway_ip: Ipv4Addr,
}

impl ConfigResponse {
    pub fn network(&self) -> NetworkConfig {
        NetworkConfig {
            ssid: self.ssid.clone(),
            password: self.password.clone(),
            gateway: self.gateway_ip,
        }
    }
}

impl From<&NetworkConfig> for ConfigResponse {
    fn from(net: &NetworkConfig) -> Self {
        Self {
            ssid: net.ssid.clone(),
            password: net.password.clone(),
            gateway_ip: net.gateway,
        }
    }
}

/// `{"Registered": 0|1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegisterAck {
    #[serde(rename = "Registered")]
    pub registered: u8,
}
