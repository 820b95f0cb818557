use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use clap::Args;
use serde::Serialize;
use wpc::metrics::MetricObservation;
use wpc::refgen::{
    calibrate as run_calibration, reference_template, Calibration, CalibrationError, GeneratorConfig, WorkloadKind,
};
use wpc::sim::knee::{KneeError, MIN_SWEEP_POINTS};
use wpc::sim::sweep::{family_of, knee_of, reference_sweep, write_sweep_csv, SweepSpec, DEFAULT_TOUCHES_PER_ELEMENT};
use wpc::sim::{Knee, DEFAULT_THETA};

use super::{report_name, MachineArgs};
use crate::error::{CliError, CliResult};
use crate::output::{Ctx, Provenance};

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Workload kind: inst, data or branch.
    #[arg(long)]
    kind: WorkloadKind,
    /// Ascending X values, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    xs: Vec<u64>,
    #[command(flatten)]
    machine: MachineArgs,
    /// Iterations per point are max(--iters, touches * X).
    #[arg(long, default_value_t = DEFAULT_TOUCHES_PER_ELEMENT)]
    touches: u64,
    #[arg(long, default_value_t = 10_000)]
    iters: u64,
    /// Knee threshold as a multiple of the sweep's MPKI floor.
    #[arg(long, default_value_t = DEFAULT_THETA)]
    theta: f64,
    /// Use the calibrated reference harness.
    #[arg(long)]
    reference: bool,
    /// Also write the sweep CSV here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Serialize)]
struct PointRow {
    x: u64,
    iterations: u64,
    locality: MetricObservation,
    instructions: u64,
    l1i_mpki: f64,
    l1d_mpki: f64,
    branch_mpki: f64,
}

#[derive(Serialize)]
struct SweepReport {
    provenance: Provenance,
    config: String,
    points: Vec<PointRow>,
    knee: Option<Knee>,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<String>,
}

pub fn sweep(ctx: &Ctx, args: SweepArgs) -> CliResult<()> {
    if args.xs.len() < MIN_SWEEP_POINTS {
        return Err(KneeError::TooFewPoints(args.xs.len()).into());
    }
    if args.xs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(KneeError::NotAscending.into());
    }
    if !(args.theta.is_finite() && args.theta > 1.0) {
        return Err(CliError::Param(format!("--theta must exceed 1, got {}", args.theta)));
    }
    let machine = args.machine.machine()?;
    let template = if args.reference {
        reference_template(args.kind, args.iters, ctx.seed)
    } else {
        GeneratorConfig::new(args.kind, 1, args.iters, ctx.seed)
    };
    let spec = SweepSpec {
        touches_per_element: args.touches,
        ..SweepSpec::new(template, args.xs.clone(), machine.clone())
    };
    let points = reference_sweep(&spec, ctx.exec)?;

    let store = ctx.store()?;
    let mut obs = Vec::with_capacity(points.len() * 4);
    for p in &points {
        obs.push(p.locality.clone());
        obs.extend(p.sim.observations(&p.locality.workload_name, &machine.label));
    }
    store.put_all(&obs)?;

    let family = family_of(args.kind);
    let (knee, note) = match knee_of(&points, family, args.theta) {
        Ok(k) => (Some(k), None),
        Err(e @ KneeError::NoKnee { .. }) => (None, Some(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    if let Some(path) = &args.csv {
        let f = File::create(path).map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))?;
        write_sweep_csv(&points, &machine.label, BufWriter::new(f))?;
    }
    let report = SweepReport {
        provenance: ctx.provenance(&spec),
        config: machine.label.clone(),
        points: points
            .iter()
            .map(|p| PointRow {
                x: p.x,
                iterations: p.iterations,
                locality: p.locality.clone(),
                instructions: p.sim.instructions,
                l1i_mpki: p.sim.l1i_mpki(),
                l1d_mpki: p.sim.l1d_mpki(),
                branch_mpki: p.sim.branch_mpki(),
            })
            .collect(),
        knee,
        note,
    };
    store.put_report(
        &report_name(&["sweep", args.kind.short_name(), &machine.label]),
        &report,
    )?;
    match ctx.format {
        crate::output::Format::Csv => write_sweep_csv(&points, &machine.label, std::io::stdout().lock())?,
        crate::output::Format::Json => ctx.emit(&report, |_| Ok(()))?,
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Workload kind: inst, data or branch.
    #[arg(long)]
    kind: WorkloadKind,
    /// Strictly ascending candidate X values.
    #[arg(long, value_delimiter = ',', required = true)]
    candidates: Vec<u64>,
    #[arg(long, default_value_t = 50_000)]
    iters: u64,
    /// Seeds per candidate (seed, seed + 1, ...).
    #[arg(long, default_value_t = 3)]
    reps: u32,
    /// Calibrate the minimal generator instead of the reference harness.
    #[arg(long)]
    plain: bool,
}

#[derive(Serialize)]
struct CalibrateReport {
    provenance: Provenance,
    template: GeneratorConfig,
    calibration: Calibration,
}

pub fn calibrate(ctx: &Ctx, args: CalibrateArgs) -> CliResult<()> {
    let template = if args.plain {
        GeneratorConfig::new(args.kind, 1, args.iters, ctx.seed)
    } else {
        reference_template(args.kind, args.iters, ctx.seed)
    };
    let (calibration, failure) = match run_calibration(&template, &args.candidates, args.reps, ctx.exec) {
        Ok(c) => (c, None),
        Err(CalibrationError::Failed(c)) => {
            let msg = CalibrationError::Failed(c.clone()).to_string();
            (c, Some(CliError::Missing(msg)))
        }
        Err(e) => return Err(e.into()),
    };
    let report = CalibrateReport {
        provenance: ctx.provenance(serde_json::json!({
            "candidates": args.candidates,
            "repetitions": args.reps,
        })),
        template,
        calibration,
    };
    ctx.store()?
        .put_report(&report_name(&["calibrate", args.kind.short_name()]), &report)?;
    ctx.emit(&report, |w| {
        w.write_record(["x", "predicted", "mean_relative_error", "qualifies", "chosen"])?;
        for row in &report.calibration.table {
            w.write_record([
                row.x.to_string(),
                row.predicted.to_string(),
                row.mean_relative_error.to_string(),
                row.qualifies.to_string(),
                (report.calibration.chosen_x == Some(row.x)).to_string(),
            ])?;
        }
        Ok(())
    })?;
    failure.map_or(Ok(()), Err)
}
