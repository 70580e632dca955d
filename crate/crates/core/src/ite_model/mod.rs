//! Node identifiers, ITE descriptors and their wire formats.
//!
//! Two codecs live here: the canonical JSON form of an ITE (and of the
//! gateway's list/detail documents built around it), and the binary image a
//! node keeps in non-volatile memory.

mod decimal;
mod descriptor;
mod documents;
mod node_id;
mod nvm;

pub use decimal::{Decimal3, DecimalError};
pub use descriptor::{
    parse_ite, serialize_ite, ChannelDescriptor, ChannelKind, DataType, FieldDescriptor,
    IteDescriptor, IteError,
};
pub use documents::{
    parse_detail, parse_list, serialize_detail, serialize_list, IteSummary, TransducerDetail,
    TransducerSummary,
};
pub use node_id::{parse_node_id, render_node_id, NodeIdError, NodeIdentifier, MAX_NODE_TYPE};
pub use nvm::{
    decode_nvm, encode_nvm, NetworkConfig, NvmError, NvmImage, NvmStatus, CONFIG_LEN,
    IDENTITY_LEN, IMAGE_LEN, PASSWORD_MAX, SSID_MAX,
};
