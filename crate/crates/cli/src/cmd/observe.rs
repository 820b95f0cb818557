use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::PathBuf;

use clap::Args;
use serde::Serialize;
use wpc::metrics::{mpki_from_counters, LocalityAnalyzer, MetricKind, MetricObservation};
use wpc::sim::{MachineConfig, SimReport, Simulator};
use wpc::trace::read_counters;
use wpc::Level;

use super::{report_name, stream_trace, MachineArgs, TraceMeta};
use crate::error::{CliError, CliResult};
use crate::output::{cell, CsvOut, Ctx, Provenance};

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Binary or JSON-lines trace.
    #[arg(required_unless_present = "import", conflicts_with = "import")]
    trace: Option<PathBuf>,
    /// Store observations from a JSON-lines file instead of measuring a trace.
    #[arg(long)]
    import: Option<PathBuf>,
    /// Metrics to keep (inst-rd, data-rd, branch-entropy).
    #[arg(long, value_delimiter = ',', default_value = "inst-rd,data-rd,branch-entropy")]
    metrics: Vec<MetricKind>,
    /// Workload name to store under; defaults to the trace's own.
    #[arg(long)]
    workload: Option<String>,
    /// Level to store under; defaults to the trace's own.
    #[arg(long)]
    level: Option<Level>,
}

#[derive(Serialize)]
struct AnalyzeReport {
    provenance: Provenance,
    #[serde(skip_serializing_if = "Option::is_none")]
    trace: Option<TraceMeta>,
    observations: Vec<MetricObservation>,
}

fn observation_rows(w: &mut CsvOut, obs: &[MetricObservation]) -> CliResult<()> {
    w.write_record(["workload", "level", "metric", "value", "defined", "samples", "config"])?;
    for o in obs {
        w.write_record([
            o.workload_name.clone(),
            o.level.to_string(),
            o.metric.to_string(),
            cell(o.value),
            o.is_defined().to_string(),
            o.sample_count.to_string(),
            o.config_label.clone(),
        ])?;
    }
    Ok(())
}

fn no_data(obs: &[MetricObservation]) -> CliResult<()> {
    if !obs.is_empty() && obs.iter().all(|o| !o.is_defined()) {
        return Err(CliError::Missing(
            "no metric is defined for this input (no reuse, no branches or no instructions); \
             undefined observations were stored"
                .into(),
        ));
    }
    Ok(())
}

pub fn analyze(ctx: &Ctx, args: AnalyzeArgs) -> CliResult<()> {
    if let Some(m) = args.metrics.iter().find(|m| m.is_mpki()) {
        return Err(CliError::Param(format!("{m} comes from `simulate`, not `analyze`")));
    }
    let store = ctx.store()?;
    let (meta, observations) = match (&args.trace, &args.import) {
        (_, Some(path)) => (None, import(path)?),
        (Some(path), None) => {
            let mut analyzer = LocalityAnalyzer::default();
            let meta = stream_trace(path, |e| analyzer.push(e))?;
            let workload = args.workload.clone().unwrap_or_else(|| meta.workload.clone());
            let level = args.level.unwrap_or(meta.level);
            let obs = analyzer
                .finish(&workload, level)
                .into_iter()
                .filter(|o| args.metrics.contains(&o.metric))
                .collect();
            (Some(meta), obs)
        }
        (None, None) => unreachable!("clap requires a trace or --import"),
    };
    store.put_all(&observations)?;
    let report = AnalyzeReport {
        provenance: ctx.provenance(serde_json::json!({
            "trace": args.trace,
            "import": args.import,
            "metrics": args.metrics,
        })),
        trace: meta,
        observations,
    };
    ctx.emit(&report, |w| observation_rows(w, &report.observations))?;
    no_data(&report.observations)
}

fn import(path: &PathBuf) -> CliResult<Vec<MetricObservation>> {
    let f = File::open(path).map_err(|e| CliError::Io(format!("cannot open {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let o =
            serde_json::from_str(&line).map_err(|e| CliError::Io(format!("{} line {}: {e}", path.display(), i + 1)))?;
        out.push(o);
    }
    Ok(out)
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Binary or JSON-lines trace.
    #[arg(required_unless_present = "counters", conflicts_with = "counters")]
    trace: Option<PathBuf>,
    /// Ingest hardware counters (CSV) instead of simulating.
    #[arg(long)]
    counters: Option<PathBuf>,
    #[command(flatten)]
    machine: MachineArgs,
    /// Workload name to store under; defaults to the trace's own.
    #[arg(long)]
    workload: Option<String>,
}

#[derive(Serialize)]
struct SimulateReport {
    provenance: Provenance,
    #[serde(skip_serializing_if = "Option::is_none")]
    trace: Option<TraceMeta>,
    #[serde(skip_serializing_if = "Option::is_none")]
    machine: Option<MachineConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    result: Option<SimReport>,
    observations: Vec<MetricObservation>,
}

pub fn simulate(ctx: &Ctx, args: SimulateArgs) -> CliResult<()> {
    let store = ctx.store()?;
    let report = if let Some(path) = &args.counters {
        let f = File::open(path).map_err(|e| CliError::Io(format!("cannot open {}: {e}", path.display())))?;
        let observations: Vec<MetricObservation> = read_counters(f)?.iter().flat_map(mpki_from_counters).collect();
        SimulateReport {
            provenance: ctx.provenance(serde_json::json!({ "counters": path })),
            trace: None,
            machine: None,
            result: None,
            observations,
        }
    } else {
        let path = args.trace.as_ref().expect("clap requires a trace or --counters");
        let machine = args.machine.machine()?;
        let mut sim = Simulator::new(&machine)?;
        let meta = stream_trace(path, |e| sim.step(e))?;
        let workload = args.workload.clone().unwrap_or_else(|| meta.workload.clone());
        let result = sim.result();
        let sim_report = result.to_report(&workload, &machine.label);
        store.put_report(&report_name(&["simulate", &workload, &machine.label]), &sim_report)?;
        SimulateReport {
            provenance: ctx.provenance(serde_json::json!({ "trace": path, "machine": machine })),
            observations: result.observations(&workload, &machine.label).to_vec(),
            trace: Some(meta),
            machine: Some(machine),
            result: Some(sim_report),
        }
    };
    store.put_all(&report.observations)?;
    ctx.emit(&report, |w| observation_rows(w, &report.observations))?;
    no_data(&report.observations)
}
