//! Benchmark drivers and the statistics behind them.

mod gev;
mod pnp;
mod response;
mod summary;

pub use gev::{
    fit_gev, fit_gev_with, gev_pdf, gev_quantile, pwm_estimate, FitOptions, GevError, GevParams, MIN_FIT_SAMPLES,
};
pub use pnp::{run_pnp_benchmark, PnpMode, PnpOptions, RunTiming, StateTiming, TimingSummary};
pub use response::{run_response_benchmark, ResponseBenchReport, ResponseOptions, ResponseRun, RttSample};
pub use summary::{
    confidence_interval, histogram, mean, sample_variance, Binning, Estimate, Histogram, StatsError,
};

use crate::netsim::{ScenarioError, SimError};

/// Schema version of the JSON reports.
pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("no node reached Listen")]
    NodeAbsent,
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `sample_idx, rtt_ms, ok` rows with a header line.
pub fn samples_tsv(samples: &[RttSample]) -> String {
    let mut out = String::from("sample_idx\trtt_ms\tok\n");
    for s in samples {
        out.push_str(&format!("{}\t{:.3}\t{}\n", s.idx, s.rtt_ms, u8::from(s.ok)));
    }
    out
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("line {line}: `{text}` is not a number")]
pub struct SampleParseError {
    pub line: usize,
    pub text: String,
}

/// One value per line; blank lines and `#` comments are skipped.
pub fn parse_samples(text: &str) -> Result<Vec<f64>, SampleParseError> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .map(|(line, l)| {
            l.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| SampleParseError {
                    line,
                    text: l.to_owned(),
                })
        })
        .collect()
}
