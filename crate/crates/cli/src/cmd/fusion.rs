use std::collections::BTreeSet;
use std::path::PathBuf;

use clap::Args;
use serde::Serialize;
use wpc::fusion::{
    breakdown_by_tags, breakdown_differential, impact_factors, kernel_noise_share, noise_split,
    normalized_mpki_breakdown, pearson, round_sig, BreakdownMethod, BreakdownNode, FusionError, ImpactVector,
    MetricVector, MpkiRow, NoiseShare,
};
use wpc::metrics::{LocalityFamily, MetricKind, MetricObservation, DEFAULT_CONFIG};
use wpc::store::{ProfileStore, StoreError, StoreKey};
use wpc::Level;

use super::{load_trace, report_name};
use crate::error::{CliError, CliResult};
use crate::output::{Ctx, Provenance};

#[derive(Debug, Clone, Args)]
pub struct FuseArgs {
    /// Target workload name in the store.
    #[arg(long)]
    workload: String,
    /// Reference workload name in the store.
    #[arg(long)]
    reference: String,
    /// Locality family: inst, data or branch.
    #[arg(long)]
    family: LocalityFamily,
    /// Levels to fuse, at least two.
    #[arg(long, value_delimiter = ',', default_value = "IR,ISA,UARCH")]
    levels: Vec<Level>,
    /// Config label of the target's UARCH observation.
    #[arg(long, default_value = DEFAULT_CONFIG)]
    config: String,
    /// Config label of the reference's UARCH observation; defaults to --config.
    #[arg(long)]
    reference_config: Option<String>,
}

/// Config label under which a level's observation is stored: trace-level
/// metrics do not depend on the machine.
fn config_for(level: Level, uarch_config: &str) -> &str {
    if level == Level::UARCH {
        uarch_config
    } else {
        DEFAULT_CONFIG
    }
}

fn key(workload: &str, family: LocalityFamily, level: Level, uarch_config: &str) -> StoreKey {
    StoreKey::new(
        workload,
        level,
        family.metric_at(level),
        config_for(level, uarch_config),
    )
}

#[derive(Serialize)]
struct FuseRow {
    level: Level,
    metric: MetricKind,
    observed: f64,
    reference: f64,
    relative: f64,
    impact: f64,
}

#[derive(Serialize)]
struct FuseReport {
    provenance: Provenance,
    workload: String,
    reference: String,
    family: LocalityFamily,
    levels: Vec<FuseRow>,
}

fn fuse_from_store(store: &ProfileStore, args: &FuseArgs) -> CliResult<(MetricVector, ImpactVector)> {
    if args.levels.len() < 2 {
        return Err(FusionError::TooFewLevels(args.levels.len()).into());
    }
    let ref_config = args.reference_config.as_deref().unwrap_or(&args.config);
    let mut observed = Vec::new();
    let mut reference = Vec::new();
    for &level in &args.levels {
        observed.push(store.get(&key(&args.workload, args.family, level, &args.config))?);
        reference.push(store.get(&key(&args.reference, args.family, level, ref_config))?);
    }
    let v = MetricVector::from_observations(&observed, &reference)?;
    let iv = impact_factors(&v)?;
    Ok((v, iv))
}

fn fuse_rows(v: &MetricVector, iv: &ImpactVector, family: LocalityFamily) -> Vec<FuseRow> {
    v.entries()
        .iter()
        .zip(&iv.entries)
        .map(|(e, i)| FuseRow {
            level: e.level,
            metric: family.metric_at(e.level),
            observed: e.observed,
            reference: e.reference,
            relative: i.relative,
            impact: i.impact,
        })
        .collect()
}

pub fn fuse(ctx: &Ctx, args: FuseArgs) -> CliResult<()> {
    let store = ctx.store()?;
    let (v, iv) = fuse_from_store(&store, &args)?;
    let report = FuseReport {
        provenance: ctx.provenance(serde_json::json!({
            "levels": args.levels,
            "config": args.config,
            "reference_config": args.reference_config,
        })),
        workload: args.workload.clone(),
        reference: args.reference.clone(),
        family: args.family,
        levels: fuse_rows(&v, &iv, args.family),
    };
    store.put_report(
        &report_name(&["fuse", &args.workload, args.family.short_name()]),
        &report,
    )?;

    eprintln!(
        "{:<6} {:>14} {:>14} {:>10} {:>8}",
        "level", "observed", "reference", "relative", "impact"
    );
    for r in &report.levels {
        eprintln!(
            "{:<6} {:>14} {:>14} {:>10.2} {:>8.2}",
            r.level.as_str(),
            r.observed,
            r.reference,
            r.relative,
            r.impact
        );
    }
    ctx.emit(&report, |w| {
        w.write_record(["level", "metric", "observed", "reference", "relative", "impact"])?;
        for r in &report.levels {
            w.write_record([
                r.level.to_string(),
                r.metric.to_string(),
                r.observed.to_string(),
                r.reference.to_string(),
                r.relative.to_string(),
                r.impact.to_string(),
            ])?;
        }
        Ok(())
    })
}

#[derive(Debug, Args)]
pub struct BreakdownArgs {
    #[command(flatten)]
    fuse: FuseArgs,
    /// Trace whose component tags split one level's impact.
    #[arg(long)]
    tags_trace: Option<PathBuf>,
    #[arg(long, default_value = "IR")]
    tags_level: Level,
    /// Store workload of the run with one component removed.
    #[arg(long)]
    ablated: Option<String>,
    #[arg(long, default_value = "ISA")]
    ablated_level: Level,
    /// Name of the removed component.
    #[arg(long, default_value = "component")]
    component: String,
    /// Name of what remains of the level after the removed component.
    #[arg(long, default_value = "rest")]
    residual: String,
    /// Trace whose kernel-mode events are charged as OS noise.
    #[arg(long)]
    noise_trace: Option<PathBuf>,
    #[arg(long, default_value = "UARCH")]
    noise_level: Level,
    #[arg(long, default_value = "OS noise")]
    noise_name: String,
    #[arg(long, default_value = "microarchitecture")]
    uarch_name: String,
    /// Also scale every leaf by this MPKI.
    #[arg(long)]
    mpki: Option<f64>,
}

#[derive(Serialize)]
struct BreakdownReport {
    provenance: Provenance,
    workload: String,
    family: LocalityFamily,
    tree: BreakdownNode,
    #[serde(skip_serializing_if = "Option::is_none")]
    kernel_noise: Option<NoiseShare>,
    #[serde(skip_serializing_if = "Option::is_none")]
    normalized_mpki: Option<Vec<MpkiRow>>,
    warnings: Vec<String>,
}

fn level_node(tree: &mut BreakdownNode, level: Level) -> CliResult<&mut BreakdownNode> {
    let name = wpc::fusion::level_category(level);
    let node = tree
        .children
        .iter_mut()
        .find(|c| c.name == name)
        .ok_or_else(|| CliError::Param(format!("{level} is not among the fused levels")))?;
    if !node.children.is_empty() {
        return Err(CliError::Param(format!("{level} is split twice")));
    }
    Ok(node)
}

/// Leaves as `(path, node)`, with paths joined by `/`.
fn leaf_paths<'a>(node: &'a BreakdownNode, prefix: &str, out: &mut Vec<(String, &'a BreakdownNode)>) {
    let path = if prefix.is_empty() {
        node.name.clone()
    } else {
        format!("{prefix}/{}", node.name)
    };
    if node.children.is_empty() {
        out.push((path, node));
    } else {
        for c in &node.children {
            leaf_paths(c, &path, out);
        }
    }
}

pub fn breakdown(ctx: &Ctx, args: BreakdownArgs) -> CliResult<()> {
    let store = ctx.store()?;
    let (_, iv) = fuse_from_store(&store, &args.fuse)?;
    let family = args.fuse.family;
    let trace_metric = family.metric_at(Level::IR);
    let mut tree = iv.to_tree(&args.fuse.workload);
    let mut warnings = Vec::new();

    if let Some(path) = &args.tags_trace {
        let trace = load_trace(path)?;
        let node = level_node(&mut tree, args.tags_level)?;
        node.children = breakdown_by_tags(&trace, trace_metric, node.impact)?;
    }

    if let Some(ablated) = &args.ablated {
        let level = args.ablated_level;
        let config = config_for(level, &args.fuse.config);
        let full = store.get(&StoreKey::new(
            &args.fuse.workload,
            level,
            family.metric_at(level),
            config,
        ))?;
        let cut: MetricObservation = store.get(&StoreKey::new(ablated, level, family.metric_at(level), config))?;
        let node = level_node(&mut tree, level)?;
        let split = breakdown_differential(&full, &cut, node.impact, &args.component, &args.residual)?;
        if split.clamped {
            warnings.push(format!(
                "removing {} made {} worse at {level}; its share was clamped to 0",
                args.component,
                family.metric_at(level)
            ));
        }
        node.children = vec![split.component, split.residual];
    }

    let mut kernel_noise = None;
    if let Some(path) = &args.noise_trace {
        let trace = load_trace(path)?;
        let share = kernel_noise_share(&trace, trace_metric)?;
        let node = level_node(&mut tree, args.noise_level)?;
        node.children = noise_split(node.impact, share, &args.noise_name, &args.uarch_name).to_vec();
        kernel_noise = Some(share);
    }

    let mut leaf_refs = Vec::new();
    leaf_paths(&tree, "", &mut leaf_refs);
    let leaves: Vec<(String, f64, Option<BreakdownMethod>)> =
        leaf_refs.into_iter().map(|(p, n)| (p, n.impact, n.method)).collect();
    let normalized_mpki = match args.mpki {
        Some(m) => {
            let comps: Vec<(String, f64)> = leaves.iter().map(|(p, v, _)| (p.clone(), *v)).collect();
            Some(normalized_mpki_breakdown(&comps, m)?)
        }
        None => None,
    };

    let report = BreakdownReport {
        provenance: ctx.provenance(serde_json::json!({
            "reference": args.fuse.reference,
            "levels": args.fuse.levels,
            "config": args.fuse.config,
            "tags_trace": args.tags_trace,
            "ablated": args.ablated,
            "noise_trace": args.noise_trace,
            "mpki": args.mpki,
        })),
        workload: args.fuse.workload.clone(),
        family,
        kernel_noise,
        normalized_mpki,
        warnings,
        tree,
    };
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    store.put_report(
        &report_name(&["breakdown", &args.fuse.workload, family.short_name()]),
        &report,
    )?;
    ctx.emit(&report, |w| {
        w.write_record(["path", "impact", "method", "normalized_mpki", "normalized_mpki_2sig"])?;
        for (i, (path, impact, method)) in leaves.iter().enumerate() {
            let m = report.normalized_mpki.as_ref().map(|rows| rows[i].normalized_mpki);
            w.write_record([
                path.clone(),
                impact.to_string(),
                method.map(|m| format!("{m:?}")).unwrap_or_default(),
                m.map(|v| v.to_string()).unwrap_or_default(),
                m.map(|v| round_sig(v, 2).to_string()).unwrap_or_default(),
            ])?;
        }
        Ok(())
    })
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    /// Locality family: inst, data or branch.
    #[arg(long)]
    family: LocalityFamily,
    #[arg(long, default_value = "IR")]
    x_level: Level,
    #[arg(long, default_value = "UARCH")]
    y_level: Level,
    /// Workloads to pair up; defaults to every workload stored at both levels.
    #[arg(long, value_delimiter = ',')]
    workloads: Vec<String>,
    /// Config label for UARCH observations.
    #[arg(long, default_value = DEFAULT_CONFIG)]
    config: String,
}

#[derive(Serialize)]
struct Pair {
    workload: String,
    x: f64,
    y: f64,
}

#[derive(Serialize)]
struct CorrelateReport {
    provenance: Provenance,
    family: LocalityFamily,
    x: (Level, MetricKind),
    y: (Level, MetricKind),
    pairs: Vec<Pair>,
    r: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<String>,
}

pub fn correlate(ctx: &Ctx, args: CorrelateArgs) -> CliResult<()> {
    if args.x_level == args.y_level {
        return Err(CliError::Param("--x-level and --y-level must differ".into()));
    }
    let store = ctx.store()?;
    let xk = |w: &str| key(w, args.family, args.x_level, &args.config);
    let yk = |w: &str| key(w, args.family, args.y_level, &args.config);
    let explicit = !args.workloads.is_empty();
    let names: Vec<String> = if explicit {
        args.workloads.clone()
    } else {
        let index = store.list()?;
        let present: BTreeSet<&StoreKey> = index.iter().map(|e| &e.key).collect();
        let all: BTreeSet<&str> = index.iter().map(|e| e.key.workload.as_str()).collect();
        all.into_iter()
            .filter(|w| present.contains(&xk(w)) && present.contains(&yk(w)))
            .map(str::to_string)
            .collect()
    };

    let mut pairs = Vec::new();
    for w in &names {
        let fetch = |k: StoreKey| -> CliResult<Option<f64>> {
            match store.get(&k) {
                Ok(o) if o.value.is_some() => Ok(o.value),
                Ok(_) if explicit => Err(CliError::Missing(format!("observation {k} is undefined"))),
                Ok(_) => Ok(None),
                Err(e @ StoreError::Missing(_)) if explicit => Err(e.into()),
                Err(StoreError::Missing(_)) => Ok(None),
                Err(e) => Err(e.into()),
            }
        };
        if let (Some(x), Some(y)) = (fetch(xk(w))?, fetch(yk(w))?) {
            pairs.push(Pair {
                workload: w.clone(),
                x,
                y,
            });
        }
    }
    let xs: Vec<f64> = pairs.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.y).collect();
    let (r, note) = match pearson(&xs, &ys) {
        Ok(r) => (Some(r), None),
        Err(e @ FusionError::UndefinedCorrelation(_)) => (None, Some(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    let report = CorrelateReport {
        provenance: ctx.provenance(serde_json::json!({ "workloads": names, "config": args.config })),
        family: args.family,
        x: (args.x_level, args.family.metric_at(args.x_level)),
        y: (args.y_level, args.family.metric_at(args.y_level)),
        pairs,
        r,
        note,
    };
    if let Some(n) = &report.note {
        eprintln!("note: {n}");
    }
    store.put_report(
        &report_name(&[
            "correlate",
            args.family.short_name(),
            args.x_level.as_str(),
            args.y_level.as_str(),
        ]),
        &report,
    )?;
    ctx.emit(&report, |w| {
        w.write_record(["workload", "x", "y"])?;
        for p in &report.pairs {
            w.write_record([p.workload.clone(), p.x.to_string(), p.y.to_string()])?;
        }
        Ok(())
    })
}
