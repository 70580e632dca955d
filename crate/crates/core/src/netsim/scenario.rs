//! Access-point models and scenario presets.

use serde::{Deserialize, Serialize};

use super::dist::{DelayDist, DistError};
use crate::fixtures;

fn default_overload_k() -> f64 {
    10.0
}

/// A virtual access point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApModel {
    pub name: String,
    pub auth_assoc_delay: DelayDist,
    pub dhcp_delay: DelayDist,
    pub per_packet_latency: DelayDist,
    /// Offered load; 1.0 is saturation.
    #[serde(default)]
    pub load: f64,
    #[serde(default = "default_overload_k")]
    pub overload_k: f64,
}

impl ApModel {
    /// High variance, lower mean.
    pub fn linksys_like() -> Self {
        Self {
            name: "linksys-like".into(),
            auth_assoc_delay: DelayDist::Uniform {
                mean_ms: 4342.0,
                spread_ms: 900.0,
            },
            dhcp_delay: DelayDist::Uniform {
                mean_ms: 500.0,
                spread_ms: 100.0,
            },
            per_packet_latency: DelayDist::Uniform {
                mean_ms: 29.0,
                spread_ms: 4.0,
            },
            load: 0.0,
            overload_k: 10.0,
        }
    }

    /// Low variance, higher mean.
    pub fn smc_like() -> Self {
        Self {
            name: "smc-like".into(),
            auth_assoc_delay: DelayDist::Normal {
                mean_ms: 5366.0,
                sd_ms: 355.0,
            },
            dhcp_delay: DelayDist::Normal {
                mean_ms: 500.0,
                sd_ms: 50.0,
            },
            ..Self::linksys_like()
        }
    }

    /// Joins and forwards instantly.
    pub fn zero_delay() -> Self {
        Self {
            name: "zero-delay".into(),
            auth_assoc_delay: DelayDist::ZERO,
            dhcp_delay: DelayDist::ZERO,
            per_packet_latency: DelayDist::ZERO,
            load: 0.0,
            overload_k: 10.0,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "linksys-like" | "linksys" => Some(Self::linksys_like()),
            "smc-like" | "smc" => Some(Self::smc_like()),
            "zero-delay" | "zero" => Some(Self::zero_delay()),
            _ => None,
        }
    }

    /// Latency multiplier for the current load.
    pub fn overload_multiplier(&self) -> f64 {
        overload_multiplier(self.load, self.overload_k)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        for d in [&self.auth_assoc_delay, &self.dhcp_delay, &self.per_packet_latency] {
            d.validate()?;
        }
        if !(self.load >= 0.0 && self.load.is_finite()) {
            return Err(ScenarioError::Invalid(format!("load {} must be nonnegative", self.load)));
        }
        if !(self.overload_k >= 0.0 && self.overload_k.is_finite()) {
            return Err(ScenarioError::Invalid(format!("overload_k {} must be nonnegative", self.overload_k)));
        }
        Ok(())
    }
}

/// 1 up to saturation, then growing linearly with slope `k`.
pub fn overload_multiplier(load: f64, k: f64) -> f64 {
    if load <= 1.0 {
        1.0
    } else {
        1.0 + k * (load - 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScenarioError {
    #[error("unknown scenario `{0}`")]
    Unknown(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error("scenario document: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub label: String,
    #[serde(default)]
    pub description: String,
    /// The operational access point.
    pub ap: ApModel,
    /// The configuration access point; the operational one when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_ap: Option<ApModel>,
    #[serde(default)]
    pub loss_probability: f64,
    pub gateway_processing: DelayDist,
    pub node_processing: DelayDist,
}

impl ScenarioConfig {
    /// One of the bundled presets `A` to `D`.
    pub fn builtin(label: &str) -> Result<Self, ScenarioError> {
        let doc = fixtures::scenario_document(label)
            .ok_or_else(|| ScenarioError::Unknown(label.to_owned()))?;
        Self::from_json(doc.as_bytes())
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, ScenarioError> {
        let scenario: Self =
            serde_json::from_slice(bytes).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    /// Zero-delay APs, no loss, no processing time.
    pub fn zero_delay() -> Self {
        Self {
            label: "zero".into(),
            description: "Instant access points and links.".into(),
            ap: ApModel::zero_delay(),
            config_ap: None,
            loss_probability: 0.0,
            gateway_processing: DelayDist::ZERO,
            node_processing: DelayDist::ZERO,
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.ap.validate()?;
        if let Some(ap) = &self.config_ap {
            ap.validate()?;
        }
        if !(0.0..=1.0).contains(&self.loss_probability) {
            return Err(ScenarioError::Invalid(format!(
                "loss_probability {} is outside [0, 1]",
                self.loss_probability
            )));
        }
        self.gateway_processing.validate()?;
        self.node_processing.validate()?;
        Ok(())
    }

    /// Swaps in another AP's association behavior. Link latency and load
    /// stay with the scenario, since they describe the location.
    pub fn with_ap(mut self, ap: ApModel) -> Self {
        let keep = (self.ap.per_packet_latency, self.ap.load, self.ap.overload_k);
        self.ap = ApModel {
            per_packet_latency: keep.0,
            load: keep.1,
            overload_k: keep.2,
            ..ap
        };
        self
    }

    pub fn with_load(mut self, load: f64) -> Self {
        self.ap.load = load;
        self
    }

    pub fn with_loss(mut self, p: f64) -> Self {
        self.loss_probability = p;
        self
    }

    pub fn connect_ap(&self, configuration: bool) -> &ApModel {
        match (&self.config_ap, configuration) {
            (Some(ap), true) => ap,
            _ => &self.ap,
        }
    }
}
