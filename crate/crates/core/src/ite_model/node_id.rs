use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Largest valid node type (24-bit field).
pub const MAX_NODE_TYPE: u32 = (1 << 24) - 1;

/// The `(type, serial, version)` triple naming a transducer node.
///
/// Rendered as `"type.serial.version"` with base-10 components, e.g. `7.1.1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeIdentifier {
    node_type: u32,
    serial: u32,
    version: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NodeIdError {
    #[error("node type {0} exceeds the 24-bit range")]
    TypeOutOfRange(u64),
    #[error("component `{component}` out of range: {value}")]
    ComponentOutOfRange { component: &'static str, value: String },
    #[error("expected three dot-separated components, got {0}")]
    WrongArity(usize),
    #[error("component `{0}` is not a base-10 unsigned integer")]
    NotANumber(String),
}

impl NodeIdentifier {
    pub fn new(node_type: u32, serial: u32, version: u8) -> Result<Self, NodeIdError> {
        if node_type > MAX_NODE_TYPE {
            return Err(NodeIdError::TypeOutOfRange(node_type.into()));
        }
        Ok(Self {
            node_type,
            serial,
            version,
        })
    }

    pub fn node_type(&self) -> u32 {
        self.node_type
    }

    pub fn serial(&self) -> u32 {
        self.serial
    }

    pub fn version(&self) -> u8 {
        self.version
    }

    /// Key used to look up the node's ITE in a repository.
    pub fn ite_key(&self) -> (u32, u8) {
        (self.node_type, self.version)
    }

    /// Key under which the gateway keeps one registration record.
    pub fn record_key(&self) -> (u32, u32) {
        (self.node_type, self.serial)
    }
}

impl fmt::Display for NodeIdentifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}.{}", self.node_type, self.serial, self.version)
    }
}

fn parse_component(text: &str) -> Result<u64, NodeIdError> {
    if text.is_empty() || !text.bytes().all(|b| b.is_ascii_digit()) {
        return Err(NodeIdError::NotANumber(text.to_owned()));
    }
    // Anything longer than 20 digits cannot fit any component anyway.
    text.parse::<u64>()
        .map_err(|_| NodeIdError::ComponentOutOfRange {
            component: "value",
            value: text.to_owned(),
        })
}

impl FromStr for NodeIdentifier {
    type Err = NodeIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split('.').collect();
        if parts.len() != 3 {
            return Err(NodeIdError::WrongArity(parts.len()));
        }
        let node_type = parse_component(parts[0])?;
        let serial = parse_component(parts[1])?;
        let version = parse_component(parts[2])?;
        if node_type > u64::from(MAX_NODE_TYPE) {
            return Err(NodeIdError::TypeOutOfRange(node_type));
        }
        let serial = u32::try_from(serial).map_err(|_| NodeIdError::ComponentOutOfRange {
            component: "serial",
            value: parts[1].to_owned(),
        })?;
        let version = u8::try_from(version).map_err(|_| NodeIdError::ComponentOutOfRange {
            component: "version",
            value: parts[2].to_owned(),
        })?;
        Self::new(node_type as u32, serial, version)
    }
}

/// Renders an identifier in dotted form.
pub fn render_node_id(id: &NodeIdentifier) -> String {
    id.to_string()
}

/// Parses a dotted `type.serial.version` identifier.
pub fn parse_node_id(text: &str) -> Result<NodeIdentifier, NodeIdError> {
    text.parse()
}

impl Serialize for NodeIdentifier {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NodeIdentifier {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}
