//! Where the gateway looks up ITEs: bundled documents, a local directory laid
//! out as `<type>/<version>.json`, and optionally a remote HTTP repository
//! answering `GET {base}/ites/{type}/{version}`. Local entries shadow remote ones.

use std::collections::BTreeMap;
use std::fs;
use std::net::{SocketAddr, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::time::Duration;

use crate::fixtures;
use crate::http::{self, HttpRequest};
use crate::ite_model::{parse_ite, IteDescriptor, IteError};

#[derive(Debug, thiserror::Error)]
pub enum RepositoryError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Invalid { path: PathBuf, source: IteError },
    #[error("{path} holds ITE {found:?}, but its location says {expected:?}")]
    Misplaced {
        path: PathBuf,
        expected: (u32, u8),
        found: (u32, u8),
    },
    #[error("duplicate ITE {0:?}")]
    Duplicate((u32, u8)),
    #[error("bad remote repository URL `{0}`")]
    BadUrl(String),
}

#[derive(Debug, Clone)]
struct Remote {
    addr: SocketAddr,
    host: String,
    prefix: String,
}

#[derive(Debug, Clone, Default)]
pub struct IteRepository {
    local: BTreeMap<(u32, u8), IteDescriptor>,
    remote: Option<Remote>,
    remote_cache: BTreeMap<(u32, u8), IteDescriptor>,
    remote_timeout: Duration,
}

impl IteRepository {
    pub fn empty() -> Self {
        Self {
            remote_timeout: Duration::from_secs(2),
            ..Self::default()
        }
    }

    /// The ITEs shipped with the crate.
    pub fn builtin() -> Self {
        let mut repo = Self::empty();
        for ite in fixtures::builtin_ites() {
            repo.local.insert(ite.key(), ite);
        }
        repo
    }

    /// Loads every `<type>/<version>.json` under `dir`; later entries replace bundled ones.
    pub fn load_dir(&mut self, dir: &Path) -> Result<usize, RepositoryError> {
        let io = |path: &Path| {
            let path = path.to_owned();
            move |source| RepositoryError::Io { path, source }
        };
        let mut loaded = BTreeMap::new();
        for type_entry in fs::read_dir(dir).map_err(io(dir))? {
            let type_entry = type_entry.map_err(io(dir))?;
            let Some(node_type) = type_entry.file_name().to_str().and_then(|s| s.parse::<u32>().ok())
            else {
                continue;
            };
            let type_dir = type_entry.path();
            if !type_dir.is_dir() {
                continue;
            }
            for file in fs::read_dir(&type_dir).map_err(io(&type_dir))? {
                let path = file.map_err(io(&type_dir))?.path();
                let Some(version) = path
                    .file_name()
                    .and_then(|n| n.to_str())
                    .and_then(|n| n.strip_suffix(".json"))
                    .and_then(|v| v.parse::<u8>().ok())
                else {
                    continue;
                };
                let bytes = fs::read(&path).map_err(io(&path))?;
                let ite = parse_ite(&bytes).map_err(|source| RepositoryError::Invalid {
                    path: path.clone(),
                    source,
                })?;
                if ite.key() != (node_type, version) {
                    return Err(RepositoryError::Misplaced {
                        path,
                        expected: (node_type, version),
                        found: ite.key(),
                    });
                }
                loaded.insert(ite.key(), ite);
            }
        }
        let count = loaded.len();
        self.local.extend(loaded);
        Ok(count)
    }

    pub fn insert(&mut self, ite: IteDescriptor) -> Result<(), RepositoryError> {
        if self.local.contains_key(&ite.key()) {
            return Err(RepositoryError::Duplicate(ite.key()));
        }
        self.local.insert(ite.key(), ite);
        Ok(())
    }

    /// Enables remote lookups below `base`, e.g. `http://10.0.0.5:8000/repo`.
    pub fn set_remote(&mut self, base: &str) -> Result<(), RepositoryError> {
        let bad = || RepositoryError::BadUrl(base.to_owned());
        let url = url::Url::parse(base).map_err(|_| bad())?;
        if url.scheme() != "http" {
            return Err(bad());
        }
        let host = url.host_str().ok_or_else(bad)?.to_owned();
        let port = url.port_or_known_default().ok_or_else(bad)?;
        let addr = (host.as_str(), port)
            .to_socket_addrs()
            .map_err(|_| bad())?
            .next()
            .ok_or_else(bad)?;
        self.remote = Some(Remote {
            addr,
            host,
            prefix: url.path().trim_end_matches('/').to_owned(),
        });
        Ok(())
    }

    pub fn local_len(&self) -> usize {
        self.local.len()
    }

    pub fn local_keys(&self) -> impl Iterator<Item = (u32, u8)> + '_ {
        self.local.keys().copied()
    }

    /// Cached lookup only; never touches the network.
    pub fn get(&self, key: (u32, u8)) -> Option<&IteDescriptor> {
        self.local.get(&key).or_else(|| self.remote_cache.get(&key))
    }

    /// Local hit, else remote fetch (cached on success).
    pub fn lookup(&mut self, key: (u32, u8)) -> Option<IteDescriptor> {
        if let Some(ite) = self.get(key) {
            return Some(ite.clone());
        }
        let remote = self.remote.as_ref()?;
        let path = format!("{}/ites/{}/{}", remote.prefix, key.0, key.1);
        let request = HttpRequest::get(path).with_header("Host", remote.host.clone());
        let response = http::exchange(remote.addr, &request, self.remote_timeout).ok()?;
        if response.status != 200 {
            return None;
        }
        let ite = parse_ite(&response.body).ok()?;
        if ite.key() != key {
            return None;
        }
        self.remote_cache.insert(key, ite.clone());
        Some(ite)
    }
}
