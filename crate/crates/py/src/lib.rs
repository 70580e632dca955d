//! The `itenet` Python module.
//!
//! Reports cross the boundary as JSON and come out as plain dicts, so the
//! Python side sees exactly the documents the CLI prints with `--json`.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

pub mod ops {
    //! Python-free halves of the bindings.

    use std::net::Ipv4Addr;
    use std::time::Duration;

    use itenet::bench_stats::{
        fit_gev, run_pnp_benchmark, run_response_benchmark, GevParams, PnpOptions, ResponseOptions,
    };
    use itenet::ite_model::{self, NetworkConfig, NodeIdentifier, NvmImage, NvmStatus};
    use itenet::netsim::{run_scenario, ApModel, ScenarioConfig};
    use serde_json::{json, Value};

    /// Input the caller got wrong, as opposed to a failed run.
    #[derive(Debug, PartialEq)]
    pub enum OpError {
        Invalid(String),
        Failed(String),
    }

    fn invalid(e: impl std::fmt::Display) -> OpError {
        OpError::Invalid(e.to_string())
    }

    pub fn scenario(label: &str, ap: Option<&str>, load: Option<f64>, loss: Option<f64>) -> Result<ScenarioConfig, OpError> {
        let mut s = if label.eq_ignore_ascii_case("zero") {
            ScenarioConfig::zero_delay()
        } else if label.trim_start().starts_with('{') {
            ScenarioConfig::from_json(label.as_bytes()).map_err(invalid)?
        } else {
            ScenarioConfig::builtin(label).map_err(invalid)?
        };
        if let Some(name) = ap {
            s = s.with_ap(ApModel::preset(name).ok_or_else(|| invalid(format!("unknown access point preset `{name}`")))?);
        }
        if let Some(load) = load {
            s = s.with_load(load);
        }
        if let Some(loss) = loss {
            s = s.with_loss(loss);
        }
        s.validate().map_err(invalid)?;
        Ok(s)
    }

    pub fn encode_nvm(node_id: &str, network: Option<(&str, &str, &str)>) -> Result<Vec<u8>, OpError> {
        let id: NodeIdentifier = node_id.parse().map_err(invalid)?;
        let net = match network {
            Some((ssid, password, gateway)) => Some(NetworkConfig {
                ssid: ssid.to_owned(),
                password: password.to_owned(),
                gateway: gateway.parse::<Ipv4Addr>().map_err(|_| invalid(format!("`{gateway}` is not an IPv4 address")))?,
            }),
            None => None,
        };
        let status = if net.is_some() { NvmStatus::Configured } else { NvmStatus::Unconfigured };
        let image = ite_model::encode_nvm(&id, status, net.as_ref()).map_err(invalid)?;
        Ok(image.to_bytes().to_vec())
    }

    pub fn decode_nvm(bytes: &[u8]) -> Result<Value, OpError> {
        let image = NvmImage::from_bytes(bytes).map_err(invalid)?;
        let (id, status, net) = ite_model::decode_nvm(&image).map_err(invalid)?;
        Ok(json!({
            "node_id": id.to_string(),
            "configured": status == NvmStatus::Configured,
            "network": net.map(|n| json!({
                "ssid": n.ssid,
                "password": n.password,
                "gateway": n.gateway.to_string(),
            })),
        }))
    }

    /// Validates an ITE document and returns its canonical compact form.
    pub fn canonical_ite(document: &str) -> Result<String, OpError> {
        let ite = ite_model::parse_ite(document.as_bytes()).map_err(invalid)?;
        Ok(String::from_utf8(ite_model::serialize_ite(&ite)).expect("serializer emits UTF-8"))
    }

    pub fn fit(samples: &[f64]) -> Result<Value, OpError> {
        let p = fit_gev(samples).map_err(|e| OpError::Failed(e.to_string()))?;
        Ok(json!({ "mu": p.mu, "sigma": p.sigma, "k": p.k }))
    }

    pub fn quantile(p: f64, mu: f64, sigma: f64, k: f64) -> Result<f64, OpError> {
        GevParams::new(mu, sigma, k).and_then(|g| g.quantile(p)).map_err(invalid)
    }

    pub fn pnp(scenario: &ScenarioConfig, runs: usize, seed: u64) -> Result<Value, OpError> {
        if runs == 0 {
            return Err(invalid("runs must be at least 1"));
        }
        let options = PnpOptions {
            runs,
            seed,
            ..PnpOptions::default()
        };
        let summary = run_pnp_benchmark(scenario, &options).map_err(|e| OpError::Failed(e.to_string()))?;
        Ok(serde_json::to_value(summary).expect("summary serializes"))
    }

    pub fn response(
        scenario: &ScenarioConfig,
        requests: usize,
        gap_ms: f64,
        timeout_ms: f64,
        seed: u64,
    ) -> Result<Value, OpError> {
        let ms = |v: f64, what: &str| {
            if v.is_finite() && v >= 0.0 {
                Ok(Duration::from_secs_f64(v / 1000.0))
            } else {
                Err(invalid(format!("{what} must be a non-negative number of milliseconds")))
            }
        };
        let options = ResponseOptions {
            requests,
            gap: ms(gap_ms, "gap_ms")?,
            timeout: ms(timeout_ms, "timeout_ms")?,
            seed,
            ..ResponseOptions::default()
        };
        let run = run_response_benchmark(scenario, &options).map_err(|e| OpError::Failed(e.to_string()))?;
        let mut report = serde_json::to_value(&run.report).expect("report serializes");
        report["rtt_ms"] = run.samples.iter().map(|s| s.rtt_ms).collect();
        Ok(report)
    }

    pub fn simulate(scenario: &ScenarioConfig, nodes: usize, seed: u64) -> Result<Value, OpError> {
        let report = run_scenario(scenario, nodes, seed).map_err(|e| OpError::Failed(e.to_string()))?;
        let ttl: Vec<Option<f64>> = report
            .nodes
            .iter()
            .map(|n| n.time_to_listen().map(|d| d.as_secs_f64() * 1000.0))
            .collect();
        Ok(json!({
            "all_listening": report.all_listening(),
            "end_ms": report.end.as_secs_f64() * 1000.0,
            "traffic": report.traffic,
            "time_to_listen_ms": ttl,
            "node_csv": report.node_csv(),
        }))
    }

}

use ops::OpError;

impl From<OpError> for PyErr {
    fn from(e: OpError) -> Self {
        match e {
            OpError::Invalid(m) => PyValueError::new_err(m),
            OpError::Failed(m) => PyRuntimeError::new_err(m),
        }
    }
}

fn to_py(py: Python<'_>, value: &serde_json::Value) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).expect("values serialize");
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// Packs a node identity, and network settings when `ssid` is given, into an NVM image.
#[pyfunction]
#[pyo3(signature = (node_id, ssid=None, password="", gateway="0.0.0.0"))]
fn encode_nvm<'py>(
    py: Python<'py>,
    node_id: &str,
    ssid: Option<&str>,
    password: &str,
    gateway: &str,
) -> PyResult<Bound<'py, PyBytes>> {
    let bytes = ops::encode_nvm(node_id, ssid.map(|s| (s, password, gateway)))?;
    Ok(PyBytes::new(py, &bytes))
}

#[pyfunction]
fn decode_nvm(py: Python<'_>, image: &[u8]) -> PyResult<Py<PyAny>> {
    to_py(py, &ops::decode_nvm(image)?)
}

#[pyfunction]
fn canonical_ite(document: &str) -> PyResult<String> {
    Ok(ops::canonical_ite(document)?)
}

/// Maximum-likelihood GEV fit; returns `{"mu", "sigma", "k"}`.
#[pyfunction]
fn fit_gev(py: Python<'_>, samples: Vec<f64>) -> PyResult<Py<PyAny>> {
    to_py(py, &ops::fit(&samples)?)
}

#[pyfunction]
fn gev_quantile(p: f64, mu: f64, sigma: f64, k: f64) -> PyResult<f64> {
    Ok(ops::quantile(p, mu, sigma, k)?)
}

/// `scenario` is a preset label, `"zero"`, or a scenario JSON document.
#[pyfunction]
#[pyo3(signature = (scenario="A", runs=20, seed=0, ap=None, load=None, loss=None))]
fn bench_pnp(
    py: Python<'_>,
    scenario: &str,
    runs: usize,
    seed: u64,
    ap: Option<&str>,
    load: Option<f64>,
    loss: Option<f64>,
) -> PyResult<Py<PyAny>> {
    let s = ops::scenario(scenario, ap, load, loss)?;
    let report = py.detach(|| ops::pnp(&s, runs, seed))?;
    to_py(py, &report)
}

#[pyfunction]
#[pyo3(signature = (scenario="A", requests=1000, gap_ms=25.0, timeout_ms=1000.0, seed=0, ap=None, load=None, loss=None))]
#[allow(clippy::too_many_arguments)]
fn bench_response(
    py: Python<'_>,
    scenario: &str,
    requests: usize,
    gap_ms: f64,
    timeout_ms: f64,
    seed: u64,
    ap: Option<&str>,
    load: Option<f64>,
    loss: Option<f64>,
) -> PyResult<Py<PyAny>> {
    let s = ops::scenario(scenario, ap, load, loss)?;
    let report = py.detach(|| ops::response(&s, requests, gap_ms, timeout_ms, seed))?;
    to_py(py, &report)
}

#[pyfunction]
#[pyo3(signature = (scenario="A", nodes=10, seed=0, ap=None, load=None, loss=None))]
fn simulate(
    py: Python<'_>,
    scenario: &str,
    nodes: usize,
    seed: u64,
    ap: Option<&str>,
    load: Option<f64>,
    loss: Option<f64>,
) -> PyResult<Py<PyAny>> {
    let s = ops::scenario(scenario, ap, load, loss)?;
    let report = py.detach(|| ops::simulate(&s, nodes, seed))?;
    to_py(py, &report)
}

#[pymodule]
#[pyo3(name = "itenet")]
fn itenet_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(encode_nvm, m)?)?;
    m.add_function(wrap_pyfunction!(decode_nvm, m)?)?;
    m.add_function(wrap_pyfunction!(canonical_ite, m)?)?;
    m.add_function(wrap_pyfunction!(fit_gev, m)?)?;
    m.add_function(wrap_pyfunction!(gev_quantile, m)?)?;
    m.add_function(wrap_pyfunction!(bench_pnp, m)?)?;
    m.add_function(wrap_pyfunction!(bench_response, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
