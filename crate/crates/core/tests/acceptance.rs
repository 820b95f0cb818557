//! Acceptance suite. Prints one PASS/FAIL line per criterion, with the
//! supporting measurements indented beneath it, and exits nonzero if any
//! criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use wpc::fusion::{
    breakdown_by_tags, breakdown_differential, impact_factors, normalized_mpki_breakdown, pearson, round_sig,
    MetricVector,
};
use wpc::metrics::{LocalityFamily, MetricKind, MetricObservation, ReuseCounter};
use wpc::refgen::{self, calibrate, expected_measurement, reference_template, GeneratorConfig, WorkloadKind};
use wpc::rng::SplitMix64;
use wpc::sim::sweep::{knee_of, reference_sweep, SweepPoint, SweepSpec};
use wpc::sim::{simulate, simulate_machine, CacheConfig, MachineConfig, PredictorConfig, DEFAULT_THETA};
use wpc::trace::{read_trace, write_trace, TraceError};
use wpc::{Exec, Level, Trace, TraceEvent};

// Pinned tolerances.
const FUSION_RELATIVE_TOL: f64 = 0.005;
const FUSION_IMPACT_TOL: f64 = 0.01;
const REFERENCE_REL_ERR: f64 = 0.02;
const REFERENCE_ITERS: u64 = 1_000_000;
const REFERENCE_SEEDS: [u64; 3] = [1, 2, 3];
const GEOMETRIC_TVD: f64 = 0.03;
const GEOMETRIC_ITERS: u64 = 10_000;
const INSTR_CORRELATION_MIN: f64 = 0.7;
const DATA_CORRELATION_MIN: f64 = 0.5;
const PEARSON_IDENTITY_TOL: f64 = 1e-12;
const IMPACT_SUM_TOL: f64 = 1e-12;
const TREE_CONSERVATION_TOL: f64 = 1e-9;
const RANDOM_VECTORS: usize = 1000;
const ROUNDTRIP_EVENTS: usize = 100_000;
const CALIBRATION_ITERS: u64 = 50_000;

const INSTR_SWEEP: [u64; 5] = [250, 500, 1000, 2000, 4000];
const DATA_SWEEP: [u64; 7] = [500, 1000, 2000, 4000, 8000, 16000, 32000];

struct Report {
    lines: Vec<String>,
}

impl Report {
    fn note(&mut self, s: impl Into<String>) {
        self.lines.push(s.into());
    }

    fn check(&mut self, ok: bool, s: impl Into<String>) -> bool {
        let s = s.into();
        self.lines.push(format!("{} {s}", if ok { "ok " } else { "BAD" }));
        ok
    }
}

type Criterion = fn(&mut Report) -> bool;

fn close_rel(got: f64, want: f64, tol: f64) -> bool {
    (got - want).abs() / want.abs() <= tol
}

fn c1_fusion(r: &mut Report) -> bool {
    let v = MetricVector::three_level([49086.0, 8824.0, 16.9], [2040.0, 2421.0, 0.43]).unwrap();
    let iv = impact_factors(&v).unwrap();
    let mut ok = true;
    for ((e, want_r), want_i) in iv.entries.iter().zip([24.06, 3.64, 39.30]).zip([0.359, 0.054, 0.586]) {
        ok &= r.check(
            close_rel(e.relative, want_r, FUSION_RELATIVE_TOL) && (e.impact - want_i).abs() <= FUSION_IMPACT_TOL,
            format!(
                "{}: R = {:.3} (want {want_r} +-0.5%), I = {:.4} (want {want_i} +-0.01)",
                e.level, e.relative, e.impact
            ),
        );
    }
    ok
}

fn seed_mean(cfg: &GeneratorConfig) -> f64 {
    let cfgs: Vec<GeneratorConfig> = REFERENCE_SEEDS
        .iter()
        .map(|&seed| GeneratorConfig { seed, ..cfg.clone() })
        .collect();
    let vals = Exec::Parallel.map(&cfgs, |c| refgen::measure(c).unwrap().expect("defined"));
    vals.iter().sum::<f64>() / vals.len() as f64
}

fn c2_reference_accuracy(r: &mut Report) -> bool {
    let cases: [(WorkloadKind, [u64; 3]); 3] = [
        (WorkloadKind::InstructionLocality, [400, 1000, 4000]),
        (WorkloadKind::DataLocality, [800, 4000, 100_000]),
        (WorkloadKind::BranchLocality, [60, 250, 500]),
    ];
    let mut ok = true;
    for (kind, xs) in cases {
        for x in xs {
            let cfg = GeneratorConfig::new(kind, x, REFERENCE_ITERS, 0);
            let want = expected_measurement(&cfg).unwrap();
            let got = seed_mean(&cfg);
            let err = (got - want).abs() / want;
            ok &= r.check(
                err < REFERENCE_REL_ERR,
                format!(
                    "{} x={x}: measured {got:.4}, expected {want:.4}, error {:.3}%",
                    kind.short_name(),
                    err * 100.0
                ),
            );
        }
    }
    ok
}

/// P(gap = k) by enumerating every sequence of k draws from `x` values and
/// counting those where value 0 first reappears at draw k.
fn brute_force_gap_pmf(x: u64, k: u32) -> f64 {
    let total = x.pow(k);
    let mut hits = 0u64;
    for mut code in 0..total {
        let mut first = 0;
        for pos in 1..=k {
            if code % x == 0 {
                first = pos;
                break;
            }
            code /= x;
        }
        if first == k {
            hits += 1;
        }
    }
    hits as f64 / total as f64
}

fn c3_geometric_law(r: &mut Report) -> bool {
    let mut ok = true;
    for x in [2u64, 4, 8] {
        // bins 1..=k_max plus one tail bin
        let k_max = 12 * x as usize;
        let brute_k = match x {
            2 => 12,
            4 => 7,
            _ => 5,
        };
        let closed = |k: usize| (1.0 / x as f64) * ((x - 1) as f64 / x as f64).powi(k as i32 - 1);
        let worst = (1..=brute_k)
            .map(|k| (brute_force_gap_pmf(x, k) - closed(k as usize)).abs())
            .fold(0.0, f64::max);
        ok &= r.check(
            worst < 1e-12,
            format!("x={x}: closed form matches enumeration for k<={brute_k}"),
        );

        let cfg = GeneratorConfig::data(x, GEOMETRIC_ITERS, 11);
        let mut rd = ReuseCounter::default();
        let mut hist = vec![0u64; k_max + 2];
        let mut n = 0u64;
        for e in cfg.events().unwrap() {
            if let Some(g) = e.data_addr().and_then(|a| rd.observe(a)) {
                hist[(g as usize).min(k_max + 1)] += 1;
                n += 1;
            }
        }
        let tail = ((x - 1) as f64 / x as f64).powi(k_max as i32);
        let mut tvd = (hist[k_max + 1] as f64 / n as f64 - tail).abs();
        for (k, &count) in hist.iter().enumerate().take(k_max + 1).skip(1) {
            tvd += (count as f64 / n as f64 - closed(k)).abs();
        }
        tvd *= 0.5;
        ok &= r.check(
            tvd < GEOMETRIC_TVD,
            format!("x={x}: TVD {tvd:.4} over {n} gaps (limit {GEOMETRIC_TVD})"),
        );
    }
    ok
}

fn sweep(kind: WorkloadKind, xs: &[u64], machine: MachineConfig) -> Vec<SweepPoint> {
    let spec = SweepSpec::new(GeneratorConfig::new(kind, 1, 1, 0), xs.to_vec(), machine);
    reference_sweep(&spec, Exec::Parallel).unwrap()
}

fn knee_check(
    r: &mut Report,
    label: &str,
    points: &[SweepPoint],
    family: LocalityFamily,
    xs: &[u64],
    want: u64,
) -> bool {
    let series: Vec<String> = wpc::sim::sweep::mpki_series(points, family)
        .iter()
        .map(|(x, m)| format!("{x}:{m:.3}"))
        .collect();
    r.note(format!("    {label} MPKI {}", series.join(" ")));
    match knee_of(points, family, DEFAULT_THETA) {
        Ok(k) => {
            let i = xs.iter().position(|&x| x == k.x).unwrap() as i64;
            let j = xs.iter().position(|&x| x == want).unwrap() as i64;
            r.check(
                (i - j).abs() <= 1,
                format!("{label}: knee {} (want {want} +- one step)", k.x),
            )
        }
        Err(e) => r.check(false, format!("{label}: {e}")),
    }
}

fn c4_knees(r: &mut Report) -> bool {
    let gold = MachineConfig::gold5120t_like();
    let kp = MachineConfig::kunpeng920_like();
    let inst = sweep(WorkloadKind::InstructionLocality, &INSTR_SWEEP, gold.clone());
    let data32 = sweep(WorkloadKind::DataLocality, &DATA_SWEEP, gold);
    let data64 = sweep(WorkloadKind::DataLocality, &DATA_SWEEP, kp);
    let mut ok = knee_check(
        r,
        "instruction, 32KB L1I",
        &inst,
        LocalityFamily::Instruction,
        &INSTR_SWEEP,
        1000,
    );
    ok &= knee_check(r, "data, 32KB L1D", &data32, LocalityFamily::Data, &DATA_SWEEP, 4000);
    ok &= knee_check(r, "data, 64KB L1D", &data64, LocalityFamily::Data, &DATA_SWEEP, 8000);
    ok
}

fn correlation(points: &[SweepPoint], family: LocalityFamily) -> f64 {
    let rd: Vec<f64> = points.iter().map(|p| p.locality.value.unwrap()).collect();
    let mpki: Vec<f64> = wpc::sim::sweep::mpki_series(points, family)
        .iter()
        .map(|p| p.1)
        .collect();
    pearson(&rd, &mpki).unwrap()
}

fn c5_correlation(r: &mut Report) -> bool {
    let gold = MachineConfig::gold5120t_like();
    // below and through the knee: up to one step past it
    let inst_xs = &INSTR_SWEEP[..4];
    let inst = sweep(WorkloadKind::InstructionLocality, inst_xs, gold.clone());
    let data = sweep(WorkloadKind::DataLocality, &DATA_SWEEP, gold);
    let ri = correlation(&inst, LocalityFamily::Instruction);
    let rd = correlation(&data, LocalityFamily::Data);
    let mut ok = r.check(
        ri > INSTR_CORRELATION_MIN,
        format!("instruction RD vs L1I MPKI over x={inst_xs:?}: r = {ri:.4} (> {INSTR_CORRELATION_MIN})"),
    );
    ok &= r.check(
        rd > DATA_CORRELATION_MIN,
        format!("data RD vs L1D MPKI over x={DATA_SWEEP:?}: r = {rd:.4} (> {DATA_CORRELATION_MIN})"),
    );

    let xs = [3.0, 1.0, 4.0, 1.5, 9.0, 2.6];
    let neg: Vec<f64> = xs.iter().map(|v| 7.0 - 2.0 * v).collect();
    let same = pearson(&xs, &xs).unwrap();
    let flipped = pearson(&xs, &neg).unwrap();
    ok &= r.check(
        (same - 1.0).abs() <= PEARSON_IDENTITY_TOL && (flipped + 1.0).abs() <= PEARSON_IDENTITY_TOL,
        format!("identities: r(x,x) = {same}, r(x,7-2x) = {flipped}"),
    );
    ok
}

fn uniform(rng: &mut SplitMix64, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

fn random_tagged_trace(rng: &mut SplitMix64, len: usize) -> Trace {
    let mut t = Trace::new(Level::IR, "random");
    let tags: Vec<u16> = ["framework", "runtime", "library"]
        .iter()
        .map(|n| t.intern_tag(n))
        .collect();
    let span = 1 + rng.below(40);
    for _ in 0..len {
        let tag = if rng.below(4) == 0 {
            0
        } else {
            tags[rng.below(3) as usize]
        };
        t.push(TraceEvent::compute(4 * rng.below(span)).with_tag(tag));
    }
    t
}

fn c6_fusion_invariants(r: &mut Report) -> bool {
    let mut rng = SplitMix64::new(2024);
    let (mut sum_err, mut scale_err, mut order_bad) = (0.0f64, 0.0f64, 0usize);
    for _ in 0..RANDOM_VECTORS {
        let mut x = [0.0; 3];
        let mut s = [0.0; 3];
        for i in 0..3 {
            x[i] = uniform(&mut rng, 0.0, 1e6);
            s[i] = uniform(&mut rng, 1e-3, 1e6);
        }
        let iv = impact_factors(&MetricVector::three_level(x, s).unwrap()).unwrap();
        sum_err = sum_err.max((iv.entries.iter().map(|e| e.impact).sum::<f64>() - 1.0).abs());

        let level = rng.below(3) as usize;
        let c = uniform(&mut rng, 1e-3, 1e3);
        let (mut x2, mut s2) = (x, s);
        x2[level] *= c;
        s2[level] *= c;
        let scaled = impact_factors(&MetricVector::three_level(x2, s2).unwrap()).unwrap();
        for (a, b) in iv.entries.iter().zip(&scaled.entries) {
            scale_err = scale_err.max((a.impact - b.impact).abs());
        }
        for a in &iv.entries {
            for b in &iv.entries {
                if (a.relative > b.relative) != (a.impact > b.impact) {
                    order_bad += 1;
                }
            }
        }
    }
    let mut ok = r.check(
        sum_err <= IMPACT_SUM_TOL,
        format!("{RANDOM_VECTORS} vectors: max |sum I - 1| = {sum_err:e}"),
    );
    ok &= r.check(
        scale_err <= 1e-9,
        format!("per-level scale invariance: max drift {scale_err:e}"),
    );
    ok &= r.check(order_bad == 0, format!("ordering violations: {order_bad}"));

    // random trees: levels from a random vector, one level split by tags,
    // another split differentially
    let mut worst = 0.0f64;
    let mut trees = 0;
    for _ in 0..200 {
        let v = MetricVector::three_level(
            [
                uniform(&mut rng, 1.0, 1e4),
                uniform(&mut rng, 1.0, 1e4),
                uniform(&mut rng, 0.1, 50.0),
            ],
            [2040.0, 2421.0, 0.43],
        )
        .unwrap();
        let mut tree = impact_factors(&v).unwrap().to_tree("bottleneck");
        let len = 50 + rng.below(500) as usize;
        let t = random_tagged_trace(&mut rng, len);
        let ir = tree.children[0].impact;
        if let Ok(kids) = breakdown_by_tags(&t, MetricKind::InstrReuseDist, ir) {
            tree.children[0].children = kids;
        }
        let isa = tree.children[1].impact;
        let full = MetricObservation::new(
            "w",
            Level::ISA,
            MetricKind::InstrReuseDist,
            Some(uniform(&mut rng, 1.0, 100.0)),
            1,
        );
        let ablated = MetricObservation {
            value: Some(uniform(&mut rng, 0.0, 120.0)),
            ..full.clone()
        };
        let split = breakdown_differential(&full, &ablated, isa, "component", "rest").unwrap();
        tree.children[1].children = vec![split.component, split.residual];
        worst = worst.max(tree.conservation_error());
        trees += 1;
    }
    ok &= r.check(
        worst <= TREE_CONSERVATION_TOL,
        format!("{trees} random breakdown trees: max conservation error {worst:e}"),
    );

    let mut mpki_err = 0.0f64;
    for _ in 0..200 {
        let n = 1 + rng.below(6) as usize;
        let w: Vec<f64> = (0..n).map(|_| uniform(&mut rng, 0.0, 1.0)).collect();
        let total: f64 = w.iter().sum();
        let comps: Vec<(String, f64)> = w
            .iter()
            .enumerate()
            .map(|(i, v)| (format!("c{i}"), v / total))
            .collect();
        let mpki = uniform(&mut rng, 0.0, 100.0);
        let rows = normalized_mpki_breakdown(&comps, mpki).unwrap();
        mpki_err = mpki_err.max((rows.iter().map(|r| r.normalized_mpki).sum::<f64>() - mpki).abs());
    }
    ok &= r.check(
        mpki_err <= 1e-9,
        format!("normalized MPKI rows sum to input: max error {mpki_err:e}"),
    );

    let a = normalized_mpki_breakdown(&[("MapReduce".into(), 0.14)], 16.9).unwrap()[0].normalized_mpki;
    let b = normalized_mpki_breakdown(&[("MapReduce".into(), 0.18)], 6.5).unwrap()[0].normalized_mpki;
    ok &= r.check(
        (a - 2.366).abs() < 1e-12 && round_sig(a, 2) == 2.4,
        format!("16.9 x 0.14 = {a:.3}, reported {}", round_sig(a, 2)),
    );
    ok &= r.check(
        (b - 1.17).abs() < 1e-12 && round_sig(b, 2) == 1.2,
        format!("6.5 x 0.18 = {b:.2}, reported {}", round_sig(b, 2)),
    );
    ok
}

fn c7_simulator(r: &mut Report) -> bool {
    let pred = PredictorConfig::default();
    let mut t = Trace::new(Level::ISA, "one-line");
    t.events = vec![TraceEvent::compute(0x40_0000); 10_000];
    let res = simulate_machine(&t, &MachineConfig::gold5120t_like()).unwrap();
    let mut ok = r.check(
        res.l1i_misses == 1,
        format!("single-line trace: {} L1I misses", res.l1i_misses),
    );

    // 8 KiB, 64 B lines, 4-way: 32 sets, so lines 2 KiB apart share set 0
    let l1d = CacheConfig::new(8192, 64, 4);
    let l1i = CacheConfig::kib(32, 8);
    let stride = l1d.sets() * 64;
    let cyclic = |lines: u64| {
        let mut t = Trace::new(Level::ISA, "cyclic");
        for _ in 0..100 {
            for l in 0..lines {
                t.push(TraceEvent::load(0x40_0000, 0x1000_0000 + l * stride));
            }
        }
        simulate(&t, &l1i, &l1d, &pred).unwrap()
    };
    let fit = cyclic(4);
    let thrash = cyclic(5);
    ok &= r.check(
        fit.l1d_misses == 4,
        format!(
            "4 lines in a 4-way set: {} misses of {}",
            fit.l1d_misses, fit.l1d_accesses
        ),
    );
    ok &= r.check(
        thrash.l1d_misses == thrash.l1d_accesses,
        format!(
            "5 lines in a 4-way set: {} misses of {}",
            thrash.l1d_misses, thrash.l1d_accesses
        ),
    );

    let mut seq = Trace::new(Level::ISA, "stream");
    for l in 0..50_000u64 {
        seq.push(TraceEvent::load(0x40_0000, 0x1000_0000 + 64 * l));
    }
    let off = simulate(&seq, &l1i, &l1d, &pred).unwrap();
    let on = simulate(&seq, &l1i, &l1d.with_prefetch(true), &pred).unwrap();
    ok &= r.check(
        on.l1d_misses < off.l1d_misses,
        format!(
            "sequential stream: {} misses with prefetch, {} without",
            on.l1d_misses, off.l1d_misses
        ),
    );

    let gold = MachineConfig::gold5120t_like();
    let mut last = -1.0;
    let mut mono = true;
    let mut shown = Vec::new();
    for x in [0u64, 100, 250, 500] {
        let cfg = GeneratorConfig::branch(x, 200_000, 5);
        let res = simulate_machine(&refgen::generate(&cfg).unwrap(), &gold).unwrap();
        let m = res.branch_mpki();
        mono &= m >= last;
        last = m;
        shown.push(format!("{x}:{m:.2}"));
    }
    ok &= r.check(mono, format!("branch MPKI by x: {}", shown.join(" ")));
    ok
}

fn encode(t: &Trace) -> Vec<u8> {
    let mut buf = Vec::new();
    write_trace(t, &mut buf).unwrap();
    buf
}

fn c8_determinism(r: &mut Report) -> bool {
    let mut ok = true;
    for kind in [
        WorkloadKind::InstructionLocality,
        WorkloadKind::DataLocality,
        WorkloadKind::BranchLocality,
    ] {
        let cfg = GeneratorConfig::new(kind, 250, 20_000, 99);
        let a = encode(&refgen::generate(&cfg).unwrap());
        let b = encode(&refgen::generate(&cfg).unwrap());
        let other = encode(&refgen::generate(&GeneratorConfig { seed: 100, ..cfg }).unwrap());
        ok &= r.check(
            a == b && a != other,
            format!("{}: identical bytes for identical seeds", kind.short_name()),
        );
    }

    let mut rng = SplitMix64::new(7);
    let mut t = Trace::new(Level::ISA, "corpus");
    let tags: Vec<u16> = ["a", "b", "c"].iter().map(|n| t.intern_tag(n)).collect();
    t.seed = Some(7);
    for _ in 0..ROUNDTRIP_EVENTS {
        let pc = rng.next_u64();
        let e = match rng.below(4) {
            0 => TraceEvent::compute(pc),
            1 => TraceEvent::load(pc, rng.next_u64()),
            2 => TraceEvent::store(pc, rng.next_u64()),
            _ => TraceEvent::branch(pc, rng.next_u64(), rng.below(2) == 1),
        };
        t.push(e.with_tag(tags[rng.below(3) as usize]).in_kernel(rng.below(10) == 0));
    }
    let bytes = encode(&t);
    let back = read_trace(bytes.as_slice()).unwrap();
    ok &= r.check(
        back == t,
        format!("{ROUNDTRIP_EVENTS}-event round trip ({} bytes)", bytes.len()),
    );

    let cut = &bytes[..bytes.len() - 7];
    let err = read_trace(cut).unwrap_err();
    ok &= r.check(
        matches!(err, TraceError::Truncated { index } if index == ROUNDTRIP_EVENTS as u64 - 1),
        format!("truncated file: {err}"),
    );
    ok
}

fn c9_calibration(r: &mut Report) -> bool {
    let grids: [(WorkloadKind, &[u64], u64); 3] = [
        (WorkloadKind::InstructionLocality, &[50, 100, 200, 400, 800, 1600], 400),
        (WorkloadKind::DataLocality, &[100, 200, 400, 800, 1600, 3200], 800),
        (WorkloadKind::BranchLocality, &[10, 20, 30, 60, 120, 250], 60),
    ];
    let mut ok = true;
    for (kind, grid, want) in grids {
        let template = reference_template(kind, CALIBRATION_ITERS, 1);
        match calibrate(&template, grid, 3, Exec::Parallel) {
            Ok(c) => {
                let errs: Vec<String> = c
                    .table
                    .iter()
                    .map(|row| format!("{}:{:.2}%", row.x, row.mean_relative_error * 100.0))
                    .collect();
                r.note(format!("    {} errors {}", kind.short_name(), errs.join(" ")));
                let chosen = c.chosen_x.unwrap();
                let first = c.table.iter().position(|row| row.qualifies).unwrap();
                let complete = c.table.len() == grid.len() && c.table.iter().all(|row| row.measured.len() == 3);
                let smallest = grid[first] == chosen && c.table[..first].iter().all(|row| !row.qualifies);
                let i = grid.iter().position(|&x| x == chosen).unwrap() as i64;
                let j = grid.iter().position(|&x| x == want).unwrap() as i64;
                ok &= r.check(
                    complete && smallest && (i - j).abs() <= 1,
                    format!("{}: chose {chosen} (want {want} +- one step)", kind.short_name()),
                );
            }
            Err(e) => ok &= r.check(false, format!("{}: {e}", kind.short_name())),
        }
    }
    ok
}

fn main() -> ExitCode {
    let criteria: [(&str, Criterion); 9] = [
        ("C1 impact factors of the worked example", c1_fusion),
        ("C2 reference workload accuracy", c2_reference_accuracy),
        ("C3 geometric gap law", c3_geometric_law),
        ("C4 working-set knees", c4_knees),
        ("C5 cross-level correlation", c5_correlation),
        ("C6 fusion invariants", c6_fusion_invariants),
        ("C7 simulator oracles", c7_simulator),
        ("C8 determinism and trace format", c8_determinism),
        ("C9 calibration", c9_calibration),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let mut report = Report { lines: Vec::new() };
        let ok = run(&mut report);
        println!(
            "{} {name} ({:.1}s)",
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
        for l in report.lines {
            println!("    {l}");
        }
        failed += usize::from(!ok);
    }
    println!("acceptance: {} passed, {failed} failed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
