use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;
use std::time::Duration;

use itenet::bench_stats::{
    fit_gev_with, parse_samples, run_pnp_benchmark, run_response_benchmark, samples_tsv, Binning, Estimate,
    FitOptions, PnpMode, PnpOptions, ResponseOptions,
};
use itenet::gateway::AdmissionMode;
use itenet::netsim::{default_identity, Simulation, Traffic};
use itenet::node_fsm::NodeTiming;
use serde::Serialize;

use crate::args::{FitGevArgs, PnpArgs, ResponseArgs, SimRunArgs};
use crate::{runtime, usage, CliError, Output};

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct NodeOutcome {
    node_id: String,
    state: &'static str,
    time_to_listen_ms: Option<f64>,
    retries: u32,
}

#[derive(Serialize)]
struct SimSummary {
    version: u32,
    scenario: String,
    ap: String,
    seed: u64,
    nodes: usize,
    listening: usize,
    end_ms: f64,
    traffic: Traffic,
    outcomes: Vec<NodeOutcome>,
}

pub fn sim_run(a: SimRunArgs, out: &Output) -> Result<(), CliError> {
    let scenario = a.scenario.resolve()?;
    let seed = a.scenario.seed.unwrap_or(0);
    let count = a.nodes.unwrap_or(10);
    let mode: AdmissionMode = a.mode.as_deref().unwrap_or("automatic").parse().map_err(usage)?;
    let horizon = Duration::from_secs(a.horizon_s.unwrap_or(600));

    let mut sim = Simulation::new(scenario.clone(), seed).map_err(usage)?;
    sim.set_admission(mode);
    for i in 0..count {
        sim.add_node(default_identity(i)).map_err(runtime)?;
    }
    sim.run(horizon);
    let report = sim.into_report();
    if let Some(path) = &a.trace {
        write_file(path, &report.trace_jsonl())?;
    }
    if let Some(path) = &a.csv {
        write_file(path, &report.node_csv())?;
    }
    let outcomes: Vec<NodeOutcome> = report
        .nodes
        .iter()
        .map(|n| NodeOutcome {
            node_id: n.identifier().to_string(),
            state: n.state().name(),
            time_to_listen_ms: n.time_to_listen().map(|d| d.as_secs_f64() * 1000.0),
            retries: n.total_retries(),
        })
        .collect();
    let summary = SimSummary {
        version: itenet::bench_stats::REPORT_VERSION,
        scenario: scenario.label.clone(),
        ap: scenario.ap.name.clone(),
        seed,
        nodes: count,
        listening: outcomes.iter().filter(|o| o.time_to_listen_ms.is_some()).count(),
        end_ms: report.end.as_secs_f64() * 1000.0,
        traffic: report.traffic,
        outcomes,
    };
    out.emit(&summary, || {
        let mut s = format!(
            "scenario {} ({}), seed {}: {}/{} nodes listening, simulation ended at {:.1} s\n",
            summary.scenario,
            summary.ap,
            seed,
            summary.listening,
            count,
            summary.end_ms / 1000.0
        );
        let t = summary.traffic;
        let _ = writeln!(s, "exchanges {} sent, {} dropped, {} bytes", t.sent, t.dropped, t.bytes);
        for o in &summary.outcomes {
            match o.time_to_listen_ms {
                Some(ms) => _ = writeln!(s, "  {:<14} {:>10.1} ms  retries {}", o.node_id, ms, o.retries),
                None => _ = writeln!(s, "  {:<14} stuck in {}", o.node_id, o.state),
            }
        }
        s
    });
    Ok(())
}

fn estimate_cell(e: &Estimate) -> String {
    match e.ci95_ms {
        Some((lo, hi)) => format!("{:>10.1}  [{lo:.1}, {hi:.1}]", e.mean_ms),
        None => format!("{:>10.1}", e.mean_ms),
    }
}

pub fn pnp(a: PnpArgs, out: &Output) -> Result<(), CliError> {
    let scenario = a.scenario.resolve()?;
    let mode = match a.pnp_mode.as_deref().unwrap_or("virtual") {
        "virtual" => PnpMode::Virtual,
        "loopback" => PnpMode::Loopback,
        other => return Err(usage(format!("unknown benchmark mode `{other}`: expected virtual or loopback"))),
    };
    let runs = a.runs.unwrap_or(20);
    if runs == 0 {
        return Err(usage("--runs must be at least 1"));
    }
    let options = PnpOptions {
        runs,
        seed: a.scenario.seed.unwrap_or(0),
        mode,
        timing: if a.instant { NodeTiming::instant() } else { NodeTiming::default() },
        ..PnpOptions::default()
    };
    let summary = run_pnp_benchmark(&scenario, &options).map_err(runtime)?;
    out.emit(&summary, || {
        let mut s = format!(
            "scenario {} ({}), {} of {} runs completed\n",
            summary.scenario, summary.ap, summary.completed, summary.runs
        );
        for st in &summary.states {
            let _ = writeln!(s, "  {:<16} {} ms", st.state, estimate_cell(&st.estimate));
        }
        if let Some(p) = &summary.protocol {
            let _ = writeln!(s, "  {:<16} {} ms", "protocol", estimate_cell(p));
        }
        if let Some(t) = &summary.total {
            let _ = writeln!(s, "  {:<16} {} ms", "total", estimate_cell(t));
        }
        if let (Some(v), Some(max)) = (summary.total_variance_ms2, summary.total_max_ms) {
            let _ = writeln!(s, "  variance {:.4} s², slowest {:.3} s", v / 1e6, max / 1000.0);
        }
        s
    });
    Ok(())
}

pub fn response(a: ResponseArgs, out: &Output) -> Result<(), CliError> {
    let scenario = a.scenario.resolve()?;
    let requests = a.requests.unwrap_or(1000);
    if requests == 0 {
        return Err(usage("--requests must be at least 1"));
    }
    let positive_ms = |v: f64, what: &str| {
        if v.is_finite() && v >= 0.0 {
            Ok(Duration::from_secs_f64(v / 1000.0))
        } else {
            Err(usage(format!("{what} must be a non-negative number of milliseconds")))
        }
    };
    let gap = positive_ms(a.gap_ms.unwrap_or(25.0), "--gap-ms")?;
    let timeout = positive_ms(a.timeout_ms.unwrap_or(1000.0), "--timeout-ms")?;
    let binning = match (a.bins, a.bin_width_ms) {
        (Some(_), Some(_)) => return Err(usage("--bins and --bin-width-ms are exclusive")),
        (Some(0), None) => return Err(usage("--bins must be at least 1")),
        (Some(bins), None) => Binning::Count { bins },
        (None, Some(w)) if !(w > 0.0 && w.is_finite()) => return Err(usage("--bin-width-ms must be positive")),
        (None, Some(width)) => Binning::Width { width },
        (None, None) => Binning::FreedmanDiaconis,
    };
    let options = ResponseOptions {
        requests,
        gap,
        seed: a.scenario.seed.unwrap_or(0),
        timeout,
        binning,
    };
    let run = run_response_benchmark(&scenario, &options).map_err(runtime)?;
    if let Some(path) = &a.samples {
        write_file(path, &samples_tsv(&run.samples))?;
    }
    let r = &run.report;
    out.emit(r, || {
        let mut s = format!(
            "scenario {} ({}, load {}, loss {}): {} requests, {} failed\n",
            r.scenario, r.ap, r.load, r.loss_probability, r.sample_count, r.failure_count
        );
        if let (Some(min), Some(mean), Some(max)) = (r.min_ms, r.mean_ms, r.max_ms) {
            let _ = writeln!(s, "  rtt min {min:.3} / mean {mean:.3} / max {max:.3} ms");
        }
        match (&r.gev, &r.gev_error) {
            (Some(g), _) => _ = writeln!(s, "  GEV mu {:.3} sigma {:.3} k {:.4}", g.mu, g.sigma, g.k),
            (None, Some(e)) => _ = writeln!(s, "  GEV fit failed: {e}"),
            (None, None) => {}
        }
        s
    });
    Ok(())
}

pub fn fit_gev(a: FitGevArgs, out: &Output) -> Result<(), CliError> {
    let input = a.input.ok_or_else(|| usage("--input is required"))?;
    let max_iterations = a.max_iterations.unwrap_or(FitOptions::default().max_iterations);
    if max_iterations == 0 {
        return Err(usage("--max-iterations must be at least 1"));
    }
    let text = if input.as_os_str() == "-" {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s).map_err(runtime)?;
        s
    } else {
        std::fs::read_to_string(&input).map_err(|e| runtime(format!("{}: {e}", input.display())))?
    };
    let samples = parse_samples(&text).map_err(runtime)?;
    let options = FitOptions {
        max_iterations,
        ..FitOptions::default()
    };
    let params = fit_gev_with(&samples, options).map_err(runtime)?;
    out.emit(&params, || {
        format!("mu {} sigma {} k {} ({} samples)\n", params.mu, params.sigma, params.k, samples.len())
    });
    Ok(())
}
