use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::Args;
use serde::Serialize;
use wpc::refgen::{
    expected_measurement, footprint_bytes, generate, reference_template, theoretical_prediction, GeneratorConfig,
    WorkloadKind,
};
use wpc::trace::jsonl::write_trace_jsonl;
use wpc::trace::write_trace_stream;
use wpc::Level;
use wpc::Trace;

use crate::error::{CliError, CliResult};
use crate::output::{Ctx, Provenance};

#[derive(Debug, Args)]
pub struct GenRefArgs {
    /// Workload kind: inst, data or branch.
    #[arg(long)]
    kind: WorkloadKind,
    #[arg(long)]
    x: u64,
    #[arg(long, default_value_t = 1_000_000)]
    iters: u64,
    /// Start from the calibrated reference harness instead of the minimal one.
    #[arg(long)]
    reference: bool,
    #[arg(long)]
    b: Option<u32>,
    #[arg(long)]
    h: Option<u32>,
    #[arg(long)]
    m: Option<u64>,
    #[arg(long)]
    element_stride: Option<u64>,
    #[arg(long)]
    function_stride: Option<u64>,
    #[arg(long)]
    harness_loads: Option<u32>,
    /// Level label written into the trace (IR or ISA).
    #[arg(long, default_value = "IR")]
    level: Level,
    /// Output trace path; the sidecar goes to `<path>.json`.
    #[arg(short, long)]
    output: PathBuf,
    /// Write the JSON-lines format instead of binary.
    #[arg(long)]
    jsonl: bool,
}

impl GenRefArgs {
    pub fn config(&self, seed: u64) -> GeneratorConfig {
        let mut cfg = if self.reference {
            reference_template(self.kind, self.iters, seed)
        } else {
            GeneratorConfig::new(self.kind, self.x, self.iters, seed)
        };
        cfg.x = self.x;
        cfg.level = self.level;
        if let Some(v) = self.b {
            cfg.b = v;
        }
        if let Some(v) = self.h {
            cfg.h = v;
        }
        if let Some(v) = self.m {
            cfg.m = v;
        }
        if let Some(v) = self.element_stride {
            cfg.element_stride = v;
        }
        if let Some(v) = self.function_stride {
            cfg.function_stride = v;
        }
        if let Some(v) = self.harness_loads {
            cfg.harness_loads = v;
        }
        cfg
    }
}

#[derive(Serialize)]
struct Sidecar {
    provenance: Provenance,
    trace: String,
    workload: String,
    events: u64,
    config: GeneratorConfig,
    theoretical_prediction: f64,
    /// Prediction including the harness's own contribution.
    expected_measurement: f64,
    footprint_bytes: u64,
}

pub fn run(ctx: &Ctx, args: GenRefArgs) -> CliResult<()> {
    let cfg = args.config(ctx.seed);
    cfg.validate()?;
    let mut header = Trace::new(cfg.level, cfg.workload_name());
    header.seed = Some(cfg.seed);
    let count = cfg.iterations * cfg.events_per_iteration() as u64;

    let file = File::create(&args.output)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", args.output.display())))?;
    let mut w = BufWriter::new(file);
    if args.jsonl {
        // the text format is for inspection; materializing is fine
        write_trace_jsonl(&generate(&cfg)?, &mut w)?;
    } else {
        write_trace_stream(&header, count, cfg.events()?, &mut w)?;
    }
    w.flush()?;

    let sidecar = Sidecar {
        provenance: ctx.provenance(&cfg),
        trace: args.output.display().to_string(),
        workload: header.workload_name.clone(),
        events: count,
        theoretical_prediction: theoretical_prediction(&cfg)?,
        expected_measurement: expected_measurement(&cfg)?,
        footprint_bytes: footprint_bytes(&cfg),
        config: cfg,
    };
    let mut side_path = args.output.clone().into_os_string();
    side_path.push(".json");
    let mut bytes = serde_json::to_vec_pretty(&sidecar)?;
    bytes.push(b'\n');
    std::fs::write(&side_path, bytes)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", PathBuf::from(&side_path).display())))?;

    ctx.emit(&sidecar, |w| {
        w.write_record([
            "trace",
            "workload",
            "kind",
            "x",
            "iterations",
            "events",
            "theoretical_prediction",
        ])?;
        w.write_record([
            sidecar.trace.clone(),
            sidecar.workload.clone(),
            sidecar.config.workload_kind.short_name().to_string(),
            sidecar.config.x.to_string(),
            sidecar.config.iterations.to_string(),
            sidecar.events.to_string(),
            sidecar.theoretical_prediction.to_string(),
        ])?;
        Ok(())
    })
}
