//! Gateway API documents: the transducer list and the per-node detail view.

use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use super::descriptor::{IteDescriptor, IteError};

/// The `ite` object of a list entry: name and type only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IteSummary {
    pub name: String,
    #[serde(rename = "type")]
    pub node_type: u32,
}

/// One entry of `GET /transducers`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransducerSummary {
    pub id: u64,
    pub sn: u32,
    pub ite: IteSummary,
}

/// Response of `GET /transducers/{id}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransducerDetail {
    pub id: u64,
    pub sn: u32,
    pub ip: Ipv4Addr,
    pub ite: IteDescriptor,
}

pub fn parse_list(document: &[u8]) -> Result<Vec<TransducerSummary>, IteError> {
    Ok(serde_json::from_slice(document)?)
}

pub fn serialize_list(list: &[TransducerSummary]) -> Vec<u8> {
    serde_json::to_vec(list).expect("list serialization is infallible")
}

pub fn parse_detail(document: &[u8]) -> Result<TransducerDetail, IteError> {
    Ok(serde_json::from_slice(document)?)
}

pub fn serialize_detail(detail: &TransducerDetail) -> Vec<u8> {
    serde_json::to_vec(detail).expect("detail serialization is infallible")
}
