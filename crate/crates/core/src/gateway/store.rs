//! The gateway's durable state: one JSON document rewritten atomically.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ite_model::NodeIdentifier;

pub const STORE_VERSION: u32 = 1;
pub const STORE_FILE: &str = "gateway.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdmissionMode {
    Automatic,
    DynamicRequest,
    Whitelist,
}

impl std::str::FromStr for AdmissionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "automatic" => Ok(Self::Automatic),
            "dynamic_request" | "dynamic" => Ok(Self::DynamicRequest),
            "whitelist" => Ok(Self::Whitelist),
            other => Err(format!("unknown admission mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RequestKind {
    Configure,
    Register,
}

/// A node request waiting for a human decision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingRequest {
    pub rid: u64,
    #[serde(rename = "NodeID")]
    pub node_id: NodeIdentifier,
    #[serde(rename = "Request")]
    pub kind: RequestKind,
    pub ip: Ipv4Addr,
    pub requested_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdmissionPolicy {
    pub mode: AdmissionMode,
    pub known_ids: BTreeSet<NodeIdentifier>,
    pub pending: Vec<PendingRequest>,
    /// Identifiers a user approved; admitted for both request kinds from then on.
    pub approved: BTreeSet<NodeIdentifier>,
    /// Identifiers whose rejection is still to be delivered on the next retry.
    pub rejected: BTreeSet<NodeIdentifier>,
}

impl Default for AdmissionPolicy {
    fn default() -> Self {
        Self {
            mode: AdmissionMode::Automatic,
            known_ids: BTreeSet::new(),
            pending: Vec::new(),
            approved: BTreeSet::new(),
            rejected: BTreeSet::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistrationRecord {
    pub internal_id: u64,
    pub identifier: NodeIdentifier,
    pub ip: Ipv4Addr,
    pub port: u16,
    /// Milliseconds on the gateway clock.
    pub registered_at: u64,
    /// `(type, version)` of the ITE in the repository.
    pub ite: (u32, u8),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct User {
    pub name: String,
    /// Hex-encoded random salt.
    pub salt: String,
    /// Hex-encoded SHA-256 of salt bytes followed by the password.
    pub password_hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreState {
    pub version: u32,
    pub next_id: u64,
    pub next_rid: u64,
    pub records: Vec<RegistrationRecord>,
    pub users: Vec<User>,
    pub policy: AdmissionPolicy,
}

impl Default for StoreState {
    fn default() -> Self {
        Self {
            version: STORE_VERSION,
            next_id: 1,
            next_rid: 1,
            records: Vec::new(),
            users: Vec::new(),
            policy: AdmissionPolicy::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("store I/O on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("store file {path} is not valid: {source}")]
    Corrupt {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("store file version {found} is not supported (expected {STORE_VERSION})")]
    Version { found: u32 },
}

/// State plus where it lives. In-memory stores never touch the disk.
#[derive(Debug, Clone)]
pub struct Store {
    dir: Option<PathBuf>,
    pub state: StoreState,
}

impl Store {
    pub fn in_memory() -> Self {
        Self {
            dir: None,
            state: StoreState::default(),
        }
    }

    /// Opens `<dir>/gateway.json`, starting empty when it does not exist yet.
    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        fs::create_dir_all(dir).map_err(|source| StoreError::Io {
            path: dir.to_owned(),
            source,
        })?;
        let path = dir.join(STORE_FILE);
        let state = match fs::read(&path) {
            Ok(bytes) => {
                let state: StoreState = serde_json::from_slice(&bytes)
                    .map_err(|source| StoreError::Corrupt { path: path.clone(), source })?;
                if state.version != STORE_VERSION {
                    return Err(StoreError::Version {
                        found: state.version,
                    });
                }
                state
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => StoreState::default(),
            Err(source) => return Err(StoreError::Io { path, source }),
        };
        Ok(Self {
            dir: Some(dir.to_owned()),
            state,
        })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    /// Writes to a temporary file in the same directory, then renames it over the store.
    pub fn save(&self) -> Result<(), StoreError> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        let path = dir.join(STORE_FILE);
        let tmp = dir.join(format!(".{STORE_FILE}.tmp"));
        let io = |source| StoreError::Io {
            path: tmp.clone(),
            source,
        };
        let bytes = serde_json::to_vec_pretty(&self.state).expect("store state serializes");
        let mut file = fs::File::create(&tmp).map_err(io)?;
        file.write_all(&bytes).map_err(io)?;
        file.sync_all().map_err(io)?;
        drop(file);
        fs::rename(&tmp, &path).map_err(|source| StoreError::Io { path, source })
    }
}
