use std::fmt;

use serde::{Deserialize, Serialize};

use super::decimal::Decimal3;
use super::node_id::MAX_NODE_TYPE;

#[derive(Debug, thiserror::Error)]
pub enum IteError {
    #[error("malformed ITE document: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error("{field}: data_type `{value}` is not one of Unsigned Int, Int, Float, Boolean, String")]
    UnknownDataType { field: String, value: String },
}

impl IteError {
    fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        IteError::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Path of the offending field, when the error is tied to one.
    pub fn field(&self) -> Option<&str> {
        match self {
            IteError::Syntax(_) => None,
            IteError::Invalid { field, .. } | IteError::UnknownDataType { field, .. } => {
                Some(field)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DataType {
    UnsignedInt,
    Int,
    Float,
    Boolean,
    String,
}

impl DataType {
    pub const ALL: [DataType; 5] = [
        DataType::UnsignedInt,
        DataType::Int,
        DataType::Float,
        DataType::Boolean,
        DataType::String,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DataType::UnsignedInt => "Unsigned Int",
            DataType::Int => "Int",
            DataType::Float => "Float",
            DataType::Boolean => "Boolean",
            DataType::String => "String",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == name)
    }

    pub fn is_numeric(self) -> bool {
        !matches!(self, DataType::String)
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Message field of a channel: the request (`json_req`) or response (`json_res`) format.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldDescriptor {
    pub name: String,
    pub units: String,
    pub data_type: DataType,
    pub min_value: Decimal3,
    pub max_value: Decimal3,
    pub resolution: Decimal3,
}

impl FieldDescriptor {
    pub fn new(
        name: impl Into<String>,
        units: impl Into<String>,
        data_type: DataType,
        min_value: Decimal3,
        max_value: Decimal3,
        resolution: Decimal3,
    ) -> Self {
        Self {
            name: name.into(),
            units: units.into(),
            data_type,
            min_value,
            max_value,
            resolution,
        }
    }

    /// Boolean status field (`0..1`, resolution 0), as used for `ActuatorSet`.
    pub fn boolean(name: impl Into<String>, units: impl Into<String>) -> Self {
        Self::new(
            name,
            units,
            DataType::Boolean,
            Decimal3::ZERO,
            Decimal3::ONE,
            Decimal3::ZERO,
        )
    }

    /// True when `value` lies in `[min, max]` and on the resolution grid.
    pub fn admits(&self, value: Decimal3) -> bool {
        if value < self.min_value || value > self.max_value {
            return false;
        }
        match self.data_type {
            DataType::Boolean => value == Decimal3::ZERO || value == Decimal3::ONE,
            DataType::UnsignedInt | DataType::Int if !value.is_integral() => false,
            _ => self.is_aligned(value),
        }
    }

    /// `value = min + n * resolution` for some integer `n`; any value when resolution is 0.
    pub fn is_aligned(&self, value: Decimal3) -> bool {
        let res = self.resolution.thousandths();
        res == 0 || (value.thousandths() - self.min_value.thousandths()) % res == 0
    }

    /// Largest grid point not above `max_value`.
    pub fn top_of_grid(&self) -> Decimal3 {
        let res = self.resolution.thousandths();
        if res == 0 {
            return self.max_value;
        }
        let span = self.max_value.thousandths() - self.min_value.thousandths();
        Decimal3::from_thousandths(self.min_value.thousandths() + span / res * res)
    }

    fn validate(&self, path: &str) -> Result<(), IteError> {
        if self.name.is_empty() {
            return Err(IteError::invalid(format!("{path}.name"), "must not be empty"));
        }
        if self.min_value > self.max_value {
            return Err(IteError::invalid(
                format!("{path}.max_value"),
                format!(
                    "min_value {} exceeds max_value {}",
                    self.min_value, self.max_value
                ),
            ));
        }
        if self.resolution < Decimal3::ZERO {
            return Err(IteError::invalid(
                format!("{path}.resolution"),
                "must be non-negative",
            ));
        }
        match self.data_type {
            DataType::Boolean => {
                if self.min_value != Decimal3::ZERO || self.max_value != Decimal3::ONE {
                    return Err(IteError::invalid(
                        format!("{path}.min_value"),
                        "Boolean fields must span 0..1",
                    ));
                }
            }
            DataType::UnsignedInt | DataType::Int => {
                for (key, value) in [
                    ("min_value", self.min_value),
                    ("max_value", self.max_value),
                    ("resolution", self.resolution),
                ] {
                    if !value.is_integral() {
                        return Err(IteError::invalid(
                            format!("{path}.{key}"),
                            format!("{} fields need integral bounds", self.data_type),
                        ));
                    }
                }
                if self.data_type == DataType::UnsignedInt && self.min_value < Decimal3::ZERO {
                    return Err(IteError::invalid(
                        format!("{path}.min_value"),
                        "Unsigned Int fields cannot be negative",
                    ));
                }
            }
            DataType::Float | DataType::String => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChannelKind {
    Sensor,
    Actuator,
}

impl ChannelKind {
    pub fn path_segment(self) -> &'static str {
        match self {
            ChannelKind::Sensor => "sensors",
            ChannelKind::Actuator => "actuators",
        }
    }
}

/// One transducer channel of a node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelDescriptor {
    pub name: String,
    pub kind: ChannelKind,
    /// Body accepted by `PUT`; present for actuators only.
    pub request_format: Option<FieldDescriptor>,
    pub response_format: FieldDescriptor,
    pub uri: String,
    /// Samples per hour the gateway should log; `None` disables polling.
    pub refresh_rate: Option<u32>,
}

impl ChannelDescriptor {
    pub fn sensor(name: impl Into<String>, index: usize, response: FieldDescriptor) -> Self {
        Self {
            name: name.into(),
            kind: ChannelKind::Sensor,
            request_format: None,
            response_format: response,
            uri: format!("/sensors/{index}"),
            refresh_rate: None,
        }
    }

    pub fn actuator(
        name: impl Into<String>,
        index: usize,
        request: FieldDescriptor,
        response: FieldDescriptor,
    ) -> Self {
        Self {
            name: name.into(),
            kind: ChannelKind::Actuator,
            request_format: Some(request),
            response_format: response,
            uri: format!("/actuators/{index}"),
            refresh_rate: None,
        }
    }

    pub fn with_refresh_rate(mut self, samples_per_hour: u32) -> Self {
        self.refresh_rate = Some(samples_per_hour);
        self
    }

    /// The field whose value a `GET` returns: the request field for
    /// actuators, the response field for sensors.
    pub fn value_field(&self) -> &FieldDescriptor {
        self.request_format.as_ref().unwrap_or(&self.response_format)
    }

    fn validate(&self, path: &str, index: usize) -> Result<(), IteError> {
        if self.name.is_empty() {
            return Err(IteError::invalid(format!("{path}.name"), "must not be empty"));
        }
        match (self.kind, &self.request_format) {
            (ChannelKind::Actuator, None) => {
                return Err(IteError::invalid(
                    format!("{path}.json_req"),
                    "actuators need a request format",
                ))
            }
            (ChannelKind::Sensor, Some(_)) => {
                return Err(IteError::invalid(
                    format!("{path}.json_req"),
                    "sensors take no request body",
                ))
            }
            (_, Some(req)) => req.validate(&format!("{path}.json_req"))?,
            _ => {}
        }
        self.response_format.validate(&format!("{path}.json_res"))?;
        let expected = format!("/{}/{index}", self.kind.path_segment());
        if self.uri != expected {
            return Err(IteError::invalid(
                format!("{path}.uri"),
                format!("expected `{expected}`, found `{}`", self.uri),
            ));
        }
        if self.refresh_rate == Some(0) {
            return Err(IteError::invalid(
                format!("{path}.refresh_rate"),
                "must be positive when present",
            ));
        }
        Ok(())
    }
}

/// Node-level electronic datasheet: identity plus every sensor and actuator channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IteDescriptor {
    pub name: String,
    pub node_type: u32,
    pub version: u8,
    pub sensors: Vec<ChannelDescriptor>,
    pub actuators: Vec<ChannelDescriptor>,
}

impl IteDescriptor {
    pub fn validate(&self) -> Result<(), IteError> {
        if self.name.is_empty() {
            return Err(IteError::invalid("name", "must not be empty"));
        }
        if self.node_type > MAX_NODE_TYPE {
            return Err(IteError::invalid("type", "exceeds the 24-bit range"));
        }
        for (list, kind, channels) in [
            ("sensors", ChannelKind::Sensor, &self.sensors),
            ("actuators", ChannelKind::Actuator, &self.actuators),
        ] {
            for (i, channel) in channels.iter().enumerate() {
                let path = format!("{list}[{i}]");
                if channel.kind != kind {
                    return Err(IteError::invalid(path, "channel listed under the wrong kind"));
                }
                channel.validate(&path, i)?;
            }
        }
        Ok(())
    }

    pub fn key(&self) -> (u32, u8) {
        (self.node_type, self.version)
    }

    /// Looks up a channel by its uri (`/sensors/0`, `/actuators/1`, ...).
    pub fn channel(&self, uri: &str) -> Option<&ChannelDescriptor> {
        self.sensors
            .iter()
            .chain(self.actuators.iter())
            .find(|c| c.uri == uri)
    }

    pub fn channels(&self) -> impl Iterator<Item = &ChannelDescriptor> {
        self.sensors.iter().chain(self.actuators.iter())
    }
}

// Wire structs fix the key order of the canonical document.

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FieldWire {
    name: String,
    units: String,
    data_type: String,
    min_value: Decimal3,
    max_value: Decimal3,
    resolution: Decimal3,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelWire {
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    json_req: Option<FieldWire>,
    json_res: FieldWire,
    uri: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    refresh_rate: Option<u32>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct IteWire {
    name: String,
    #[serde(rename = "type")]
    node_type: u32,
    version: u8,
    sensors: Vec<ChannelWire>,
    actuators: Vec<ChannelWire>,
}

impl FieldWire {
    fn into_field(self, path: &str) -> Result<FieldDescriptor, IteError> {
        let data_type =
            DataType::from_name(&self.data_type).ok_or_else(|| IteError::UnknownDataType {
                field: format!("{path}.data_type"),
                value: self.data_type.clone(),
            })?;
        Ok(FieldDescriptor {
            name: self.name,
            units: self.units,
            data_type,
            min_value: self.min_value,
            max_value: self.max_value,
            resolution: self.resolution,
        })
    }

    fn from_field(field: &FieldDescriptor) -> Self {
        FieldWire {
            name: field.name.clone(),
            units: field.units.clone(),
            data_type: field.data_type.as_str().to_owned(),
            min_value: field.min_value,
            max_value: field.max_value,
            resolution: field.resolution,
        }
    }
}

impl ChannelWire {
    fn into_channel(self, kind: ChannelKind, path: &str) -> Result<ChannelDescriptor, IteError> {
        let request_format = self
            .json_req
            .map(|f| f.into_field(&format!("{path}.json_req")))
            .transpose()?;
        Ok(ChannelDescriptor {
            name: self.name,
            kind,
            request_format,
            response_format: self.json_res.into_field(&format!("{path}.json_res"))?,
            uri: self.uri,
            refresh_rate: self.refresh_rate,
        })
    }

    fn from_channel(channel: &ChannelDescriptor) -> Self {
        ChannelWire {
            name: channel.name.clone(),
            json_req: channel.request_format.as_ref().map(FieldWire::from_field),
            json_res: FieldWire::from_field(&channel.response_format),
            uri: channel.uri.clone(),
            refresh_rate: channel.refresh_rate,
        }
    }
}

impl IteWire {
    pub(crate) fn into_descriptor(self) -> Result<IteDescriptor, IteError> {
        let convert = |list: Vec<ChannelWire>, kind: ChannelKind, name: &str| {
            list.into_iter()
                .enumerate()
                .map(|(i, c)| c.into_channel(kind, &format!("{name}[{i}]")))
                .collect::<Result<Vec<_>, _>>()
        };
        let ite = IteDescriptor {
            name: self.name,
            node_type: self.node_type,
            version: self.version,
            sensors: convert(self.sensors, ChannelKind::Sensor, "sensors")?,
            actuators: convert(self.actuators, ChannelKind::Actuator, "actuators")?,
        };
        ite.validate()?;
        Ok(ite)
    }

    pub(crate) fn from_descriptor(ite: &IteDescriptor) -> Self {
        IteWire {
            name: ite.name.clone(),
            node_type: ite.node_type,
            version: ite.version,
            sensors: ite.sensors.iter().map(ChannelWire::from_channel).collect(),
            actuators: ite.actuators.iter().map(ChannelWire::from_channel).collect(),
        }
    }
}

impl Serialize for IteDescriptor {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        IteWire::from_descriptor(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for IteDescriptor {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        IteWire::deserialize(deserializer)?
            .into_descriptor()
            .map_err(serde::de::Error::custom)
    }
}

/// Parses and validates an ITE JSON document.
pub fn parse_ite(document: &[u8]) -> Result<IteDescriptor, IteError> {
    let wire: IteWire = serde_json::from_slice(document)?;
    wire.into_descriptor()
}

/// Canonical compact JSON for a valid descriptor.
pub fn serialize_ite(ite: &IteDescriptor) -> Vec<u8> {
    serde_json::to_vec(&IteWire::from_descriptor(ite)).expect("ITE serialization is infallible")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_descriptor_is_valid() {
        let doc = br#"{"name":"X","type":0,"version":0,"sensors":[],"actuators":[]}"#;
        let ite = parse_ite(doc).unwrap();
        assert!(ite.sensors.is_empty() && ite.actuators.is_empty());
        assert_eq!(serialize_ite(&ite), doc.to_vec());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let doc = br#"{"name":"X","type":0,"version":0,"sensors":[],"actuators":[],"room":"kitchen"}"#;
        assert!(matches!(parse_ite(doc), Err(IteError::Syntax(_))));
    }

    #[test]
    fn unknown_data_type_names_the_field() {
        let doc = br#"{"name":"X","type":1,"version":1,"sensors":[{"name":"s",
            "json_res":{"name":"v","units":"-","data_type":"Double","min_value":"0.000",
            "max_value":"1.000","resolution":"0.000"},"uri":"/sensors/0"}],"actuators":[]}"#;
        let err = parse_ite(doc).unwrap_err();
        assert!(matches!(err, IteError::UnknownDataType { .. }));
        assert_eq!(err.field(), Some("sensors[0].json_res.data_type"));
    }

    #[test]
    fn sensor_with_request_format_rejected() {
        let field = r#"{"name":"v","units":"-","data_type":"Float","min_value":"0.000","max_value":"1.000","resolution":"0.100"}"#;
        let doc = format!(
            r#"{{"name":"X","type":1,"version":1,"sensors":[{{"name":"s","json_req":{field},"json_res":{field},"uri":"/sensors/0"}}],"actuators":[]}}"#
        );
        let err = parse_ite(doc.as_bytes()).unwrap_err();
        assert_eq!(err.field(), Some("sensors[0].json_req"));
    }

    #[test]
    fn uri_must_match_position() {
        let field = r#"{"name":"v","units":"-","data_type":"Float","min_value":"0.000","max_value":"1.000","resolution":"0.100"}"#;
        let doc = format!(
            r#"{{"name":"X","type":1,"version":1,"sensors":[{{"name":"s","json_res":{field},"uri":"/sensors/1"}}],"actuators":[]}}"#
        );
        let err = parse_ite(doc.as_bytes()).unwrap_err();
        assert_eq!(err.field(), Some("sensors[0].uri"));
    }

    #[test]
    fn boolean_bounds_enforced() {
        let mut f = FieldDescriptor::boolean("b", "-");
        assert!(f.validate("f").is_ok());
        f.max_value = Decimal3::from_int(2);
        assert!(f.validate("f").is_err());
    }

    #[test]
    fn integer_fields_need_integral_bounds() {
        let f = FieldDescriptor::new(
            "v",
            "-",
            DataType::Int,
            Decimal3::ZERO,
            Decimal3::from_int(10),
            Decimal3::from_thousandths(500),
        );
        assert_eq!(
            f.validate("f").unwrap_err().field(),
            Some("f.resolution")
        );
    }

    #[test]
    fn admits_checks_range_and_grid() {
        let f = FieldDescriptor::new(
            "ActuatorValue",
            "%",
            DataType::UnsignedInt,
            Decimal3::ZERO,
            Decimal3::from_int(100),
            Decimal3::ONE,
        );
        assert!(f.admits(Decimal3::from_int(20)));
        assert!(f.admits(Decimal3::from_int(100)));
        assert!(!f.admits(Decimal3::from_int(150)));
        assert!(!f.admits(Decimal3::from_thousandths(20_500)));
        let b = FieldDescriptor::boolean("b", "-");
        assert!(b.admits(Decimal3::ONE));
        assert!(!b.admits(Decimal3::from_thousandths(500)));
    }

    #[test]
    fn top_of_grid_handles_unaligned_max() {
        let f = FieldDescriptor::new(
            "v",
            "-",
            DataType::Float,
            Decimal3::ZERO,
            Decimal3::from_thousandths(1_050),
            Decimal3::from_thousandths(100),
        );
        assert_eq!(f.top_of_grid(), Decimal3::from_thousandths(1_000));
    }
}
