//! Non-volatile memory image of a node.
//!
//! Two pages. The identity page (9 bytes):
//!
//! | bytes | field                         |
//! |-------|-------------------------------|
//! | 0-2   | node type, big-endian         |
//! | 3-6   | serial, big-endian            |
//! | 7     | version                       |
//! | 8     | status (0 unconfigured, 1 configured) |
//!
//! The network-config page (125 bytes):
//!
//! | bytes   | field                          |
//! |---------|--------------------------------|
//! | 0-40    | SSID, zero padded              |
//! | 41-104  | password, zero padded          |
//! | 105-108 | gateway IPv4, network order    |
//! | 109-124 | reserved for IPv6, zero filled |
//!
//! On disk the image is the identity page followed by the config page (134 bytes).

use std::fs;
use std::io;
use std::net::Ipv4Addr;
use std::path::Path;

use super::node_id::NodeIdentifier;

pub const IDENTITY_LEN: usize = 9;
pub const CONFIG_LEN: usize = 125;
pub const IMAGE_LEN: usize = IDENTITY_LEN + CONFIG_LEN;
pub const SSID_MAX: usize = 41;
pub const PASSWORD_MAX: usize = 64;

const SSID_RANGE: std::ops::Range<usize> = 0..41;
const PASSWORD_RANGE: std::ops::Range<usize> = 41..105;
const GATEWAY_RANGE: std::ops::Range<usize> = 105..109;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NvmStatus {
    Unconfigured = 0,
    Configured = 1,
}

impl TryFrom<u8> for NvmStatus {
    type Error = NvmError;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        match value {
            0 => Ok(NvmStatus::Unconfigured),
            1 => Ok(NvmStatus::Configured),
            other => Err(NvmError::BadStatus(other)),
        }
    }
}

/// Operational network credentials handed out by the gateway.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkConfig {
    pub ssid: String,
    pub password: String,
    pub gateway: Ipv4Addr,
}

#[derive(Debug, thiserror::Error)]
pub enum NvmError {
    #[error("status byte {0} is neither 0 (unconfigured) nor 1 (configured)")]
    BadStatus(u8),
    #[error("SSID is {0} bytes, at most {SSID_MAX} fit")]
    SsidTooLong(usize),
    #[error("password is {0} bytes, at most {PASSWORD_MAX} fit")]
    PasswordTooLong(usize),
    #[error("SSID must be non-empty")]
    EmptySsid,
    #[error("{0} must not contain NUL bytes")]
    EmbeddedNul(&'static str),
    #[error("{0} is not valid UTF-8")]
    NotUtf8(&'static str),
    #[error("image must be {IMAGE_LEN} bytes, got {0}")]
    WrongLength(usize),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NvmImage {
    pub identity: [u8; IDENTITY_LEN],
    pub config: [u8; CONFIG_LEN],
}

impl Default for NvmImage {
    fn default() -> Self {
        Self {
            identity: [0; IDENTITY_LEN],
            config: [0; CONFIG_LEN],
        }
    }
}

fn check_text(text: &str, max: usize, what: &'static str) -> Result<(), NvmError> {
    if text.as_bytes().contains(&0) {
        return Err(NvmError::EmbeddedNul(what));
    }
    if text.len() > max {
        return Err(match what {
            "SSID" => NvmError::SsidTooLong(text.len()),
            _ => NvmError::PasswordTooLong(text.len()),
        });
    }
    Ok(())
}

fn read_text(bytes: &[u8], what: &'static str) -> Result<String, NvmError> {
    let end = bytes.iter().rposition(|&b| b != 0).map_or(0, |i| i + 1);
    String::from_utf8(bytes[..end].to_vec()).map_err(|_| NvmError::NotUtf8(what))
}

/// Packs identity, status and optional network config into an image.
pub fn encode_nvm(
    id: &NodeIdentifier,
    status: NvmStatus,
    net: Option<&NetworkConfig>,
) -> Result<NvmImage, NvmError> {
    let mut image = NvmImage::default();
    image.identity[0..3].copy_from_slice(&id.node_type().to_be_bytes()[1..4]);
    image.identity[3..7].copy_from_slice(&id.serial().to_be_bytes());
    image.identity[7] = id.version();
    image.identity[8] = status as u8;
    if let Some(net) = net {
        image.set_network(net)?;
    }
    Ok(image)
}

/// Inverse of [`encode_nvm`]. An all-zero config page decodes as "no network config".
pub fn decode_nvm(
    image: &NvmImage,
) -> Result<(NodeIdentifier, NvmStatus, Option<NetworkConfig>), NvmError> {
    let id = &image.identity;
    let node_type = u32::from_be_bytes([0, id[0], id[1], id[2]]);
    let serial = u32::from_be_bytes([id[3], id[4], id[5], id[6]]);
    let identifier =
        NodeIdentifier::new(node_type, serial, id[7]).expect("24-bit type always fits");
    let status = NvmStatus::try_from(id[8])?;
    let net = if image.config.iter().all(|&b| b == 0) {
        None
    } else {
        let cfg = &image.config;
        let gw: [u8; 4] = cfg[GATEWAY_RANGE].try_into().expect("4-byte range");
        Some(NetworkConfig {
            ssid: read_text(&cfg[SSID_RANGE], "SSID")?,
            password: read_text(&cfg[PASSWORD_RANGE], "password")?,
            gateway: Ipv4Addr::from(gw),
        })
    };
    Ok((identifier, status, net))
}

impl NvmImage {
    pub fn status(&self) -> Result<NvmStatus, NvmError> {
        NvmStatus::try_from(self.identity[8])
    }

    pub fn set_status(&mut self, status: NvmStatus) {
        self.identity[8] = status as u8;
    }

    pub fn set_network(&mut self, net: &NetworkConfig) -> Result<(), NvmError> {
        check_text(&net.ssid, SSID_MAX, "SSID")?;
        check_text(&net.password, PASSWORD_MAX, "password")?;
        if net.ssid.is_empty() {
            return Err(NvmError::EmptySsid);
        }
        self.config = [0; CONFIG_LEN];
        self.config[..net.ssid.len()].copy_from_slice(net.ssid.as_bytes());
        let pw = PASSWORD_RANGE.start;
        self.config[pw..pw + net.password.len()].copy_from_slice(net.password.as_bytes());
        self.config[GATEWAY_RANGE].copy_from_slice(&net.gateway.octets());
        Ok(())
    }

    /// Zeroes the status flag and the config page; identity is kept.
    pub fn factory_reset(&mut self) {
        self.identity[8] = 0;
        self.config = [0; CONFIG_LEN];
    }

    pub fn to_bytes(&self) -> [u8; IMAGE_LEN] {
        let mut out = [0; IMAGE_LEN];
        out[..IDENTITY_LEN].copy_from_slice(&self.identity);
        out[IDENTITY_LEN..].copy_from_slice(&self.config);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NvmError> {
        if bytes.len() != IMAGE_LEN {
            return Err(NvmError::WrongLength(bytes.len()));
        }
        let mut image = NvmImage::default();
        image.identity.copy_from_slice(&bytes[..IDENTITY_LEN]);
        image.config.copy_from_slice(&bytes[IDENTITY_LEN..]);
        Ok(image)
    }

    pub fn load(path: &Path) -> Result<Self, NvmError> {
        Self::from_bytes(&fs::read(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), NvmError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }
}
