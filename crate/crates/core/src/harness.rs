//! Experiment harness: the `(a_bit, pr, g)` parameter sweep, schedule
//! export/import, recurrence-area candidate generation and SVG plotting.

use crate::pomdp::JointMove;
use crate::scenario::Scenario;
use crate::synth::{self, SolverKind, Strategy, StrategyMeta};
use crate::verify::{self, Classification, OmegaSpec, VerificationReport};
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("strategy file: {0}")]
    BadStrategyFile(String),
    #[error("sweep csv: {0}")]
    BadSweepCsv(String),
    #[error(transparent)]
    Synth(#[from] synth::SynthError),
}

/// One sweep coordinate: penalty weight, uniform per-room contamination
/// probability and grid resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub a_bit: u64,
    pub pr_uniform: f64,
    pub g: u32,
}

/// Outcome of one sweep point. `seconds` is wall-clock synthesis time and is
/// the only field that varies between repeated runs.
#[derive(Debug, Clone)]
pub struct SweepRecord {
    pub point: SweepPoint,
    pub classification: Classification,
    pub energy: f64,
    pub seconds: f64,
    pub schedule_hash: String,
    /// Failure description for points that could not be synthesised or
    /// verified; such points are classified incorrect.
    pub error: Option<String>,
}

/// Derives the scenario variant of one sweep point: `a_bit` replaced and
/// every room's `pr` set to the uniform value.
pub fn scenario_at_point(sc: &Scenario, point: &SweepPoint) -> Scenario {
    let mut out = sc.clone();
    out.a_bit = point.a_bit;
    for room in &mut out.rooms {
        room.pr = point.pr_uniform;
    }
    out
}

/// Default recurrence-area candidates: the product lattice of per-robot
/// charge fractions {0, 1/4, 1/2, 3/4, 1} of `max_charge` and per-room
/// counter fractions {0, 1/4, 1/2, 3/4} of `threshold`, rounded down.
/// Candidates are ordered lexicographically, most demanding first on the
/// charge axis.
pub fn default_omega_lattice(sc: &Scenario) -> Vec<OmegaSpec> {
    let charge_fracs: [(u32, u32); 5] = [(1, 1), (3, 4), (1, 2), (1, 4), (0, 1)];
    let counter_fracs: [(u32, u32); 4] = [(0, 1), (1, 4), (1, 2), (3, 4)];

    let mut charge_axes: Vec<Vec<u32>> = vec![Vec::new()];
    for robot in &sc.robots {
        let mut next = Vec::new();
        for prefix in &charge_axes {
            for &(num, den) in &charge_fracs {
                let mut v = prefix.clone();
                v.push(robot.max_charge * num / den);
                next.push(v);
            }
        }
        charge_axes = next;
    }
    charge_axes.dedup();

    let mut counter_axes: Vec<Vec<u32>> = vec![Vec::new()];
    for room in &sc.rooms {
        let mut next = Vec::new();
        for prefix in &counter_axes {
            for &(num, den) in &counter_fracs {
                let mut v = prefix.clone();
                v.push(room.threshold * num / den);
                next.push(v);
            }
        }
        counter_axes = next;
    }
    counter_axes.dedup();

    let mut out = Vec::with_capacity(charge_axes.len() * counter_axes.len());
    for charge in &charge_axes {
        for contamination in &counter_axes {
            out.push(OmegaSpec {
                charge: charge.clone(),
                contamination: contamination.clone(),
                starts: None,
            });
        }
    }
    out
}

/// Best verdict of a strategy over a candidate set, with the certifying
/// area. Candidates whose worst state cannot even replay the schedule are
/// skipped. Returns `None` when every candidate fails to replay.
pub fn best_verification(
    sc: &Scenario,
    strategy: &Strategy,
    candidates: &[OmegaSpec],
) -> Option<(OmegaSpec, VerificationReport)> {
    let mut best: Option<(OmegaSpec, VerificationReport)> = None;
    for omega in candidates {
        match verify::check_recurrence(sc, strategy, omega) {
            Err(_) => continue,
            Ok(report) => {
                let better = match &best {
                    None => true,
                    Some((_, cur)) => report.classification > cur.classification,
                };
                if better {
                    let done = report.classification == Classification::Recurrent;
                    best = Some((omega.clone(), report));
                    if done {
                        break;
                    }
                }
            }
        }
    }
    best
}

fn run_point(sc: &Scenario, point: &SweepPoint, omegas: &[OmegaSpec]) -> SweepRecord {
    let failed = |msg: String, seconds: f64| SweepRecord {
        point: *point,
        classification: Classification::Incorrect,
        energy: 0.0,
        seconds,
        schedule_hash: String::new(),
        error: Some(msg),
    };

    let m = sc.n_rooms() as f64;
    if point.pr_uniform < 0.0 || m * point.pr_uniform > 1.0 + 1e-12 {
        return failed(
            format!("cumulative probability {} exceeds 1", m * point.pr_uniform),
            0.0,
        );
    }
    let variant = scenario_at_point(sc, point);
    let started = Instant::now();
    let result = match synth::grid_synthesize(&variant, point.g) {
        Ok(r) => r,
        Err(e) => return failed(e.to_string(), started.elapsed().as_secs_f64()),
    };
    let seconds = started.elapsed().as_secs_f64();
    let energy = match synth::evaluate_schedule(&variant, &result.strategy.moves) {
        Ok(eval) => eval.energy,
        Err(e) => return failed(e.to_string(), seconds),
    };
    let classification = best_verification(&variant, &result.strategy, omegas)
        .map(|(_, report)| report.classification)
        .unwrap_or(Classification::Incorrect);
    SweepRecord {
        point: *point,
        classification,
        energy,
        seconds,
        schedule_hash: schedule_hash(&variant, &result.strategy),
        error: None,
    }
}

/// Runs every sweep point, in parallel over `workers` threads. Records come
/// back in point order and all fields except `seconds` are deterministic;
/// per-point failures are recorded, never aborting the sweep.
pub fn run_sweep(
    sc: &Scenario,
    points: &[SweepPoint],
    omegas: &[OmegaSpec],
    workers: usize,
) -> Vec<SweepRecord> {
    if workers <= 1 {
        return points.iter().map(|p| run_point(sc, p, omegas)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("worker pool");
    pool.install(|| {
        points
            .par_iter()
            .map(|p| run_point(sc, p, omegas))
            .collect()
    })
}

/// The standard sweep grid: `a_bit` over a log-spaced list, ten uniform
/// per-room probabilities and grid resolutions 1..4, 400 points in total.
pub fn standard_sweep_points() -> Vec<SweepPoint> {
    let a_bits = [1u64, 3, 6, 10, 17, 32, 100, 316, 1000, 3162];
    let prs: Vec<f64> = (1..=10).map(|i| 0.02 * i as f64).collect();
    let gs = [1u32, 2, 3, 4];
    let mut points = Vec::with_capacity(a_bits.len() * prs.len() * gs.len());
    for &g in &gs {
        for &pr in &prs {
            for &a_bit in &a_bits {
                points.push(SweepPoint {
                    a_bit,
                    pr_uniform: pr,
                    g,
                });
            }
        }
    }
    points
}

/// Minimum energy among recurrent records per grid resolution, and whether
/// it is non-increasing in `g`. The sweep summary prints this as a checked
/// assertion.
pub fn recurrent_energy_by_g(records: &[SweepRecord]) -> (Vec<(u32, Option<f64>)>, bool) {
    let mut gs: Vec<u32> = records.iter().map(|r| r.point.g).collect();
    gs.sort_unstable();
    gs.dedup();
    let per_g: Vec<(u32, Option<f64>)> = gs
        .iter()
        .map(|&g| {
            let min = records
                .iter()
                .filter(|r| r.point.g == g && r.classification == Classification::Recurrent)
                .map(|r| r.energy)
                .fold(None, |acc: Option<f64>, e| {
                    Some(acc.map_or(e, |a| a.min(e)))
                });
            (g, min)
        })
        .collect();
    let mut monotone = true;
    let mut prev: Option<f64> = None;
    for (_, min) in &per_g {
        match (prev, min) {
            (Some(p), Some(cur)) => {
                if *cur > p + 1e-9 {
                    monotone = false;
                }
                prev = Some(*cur);
            }
            (Some(_), None) => monotone = false,
            (None, Some(cur)) => prev = Some(*cur),
            (None, None) => {}
        }
    }
    (per_g, monotone)
}

fn schedule_rows(sc: &Scenario, strategy: &Strategy) -> String {
    let k = sc.n_robots();
    let mut out = String::from("t");
    for i in 0..k {
        let _ = write!(out, ",robot_{i}");
    }
    out.push('\n');
    for (t, action) in strategy.moves.iter().enumerate() {
        let _ = write!(out, "{t}");
        match action {
            JointMove::Fin => {
                for _ in 0..k {
                    out.push_str(",fin");
                }
            }
            JointMove::To(targets) => {
                for &p in targets {
                    out.push(',');
                    out.push_str(&sc.places[p].name);
                }
            }
        }
        out.push('\n');
    }
    out
}

/// Canonical strategy file: a metadata block in `# key=value` comment lines
/// followed by a CSV with one row per step and the target place names as
/// cells (`fin` rows after a failure).
pub fn export_schedule(sc: &Scenario, strategy: &Strategy) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# scenario_hash={}", strategy.meta.scenario_hash);
    let _ = writeln!(out, "# solver={}", strategy.meta.solver);
    if let Some(g) = strategy.meta.g {
        let _ = writeln!(out, "# g={g}");
    }
    if let Some(value) = strategy.meta.value {
        let _ = writeln!(out, "# value={value}");
    }
    out.push_str(&schedule_rows(sc, strategy));
    out
}

/// Stable identifier of a schedule: SHA-256 prefix of its row text.
pub fn schedule_hash(sc: &Scenario, strategy: &Strategy) -> String {
    let digest = Sha256::digest(schedule_rows(sc, strategy).as_bytes());
    hex::encode(&digest[..8])
}

/// Parses a strategy file against its scenario, mapping place names back to
/// ids. Round-trips [`export_schedule`].
pub fn import_schedule(sc: &Scenario, text: &str) -> Result<Strategy, HarnessError> {
    let bad = |msg: String| HarnessError::BadStrategyFile(msg);
    let mut scenario_hash = String::new();
    let mut solver = SolverKind::Grid;
    let mut g = None;
    let mut value = None;
    let mut rows = Vec::new();
    let mut saw_header = false;

    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            let meta = meta.trim();
            if let Some((key, val)) = meta.split_once('=') {
                match key.trim() {
                    "scenario_hash" => scenario_hash = val.trim().to_string(),
                    "solver" => {
                        solver = match val.trim() {
                            "exact" => SolverKind::Exact,
                            "grid" => SolverKind::Grid,
                            other => return Err(bad(format!("unknown solver {other:?}"))),
                        }
                    }
                    "g" => g = Some(val.trim().parse().map_err(|e| bad(format!("bad g: {e}")))?),
                    "value" => {
                        value = Some(
                            val.trim()
                                .parse()
                                .map_err(|e| bad(format!("bad value: {e}")))?,
                        )
                    }
                    _ => return Err(bad(format!("unknown metadata key in {line:?}"))),
                }
            }
            continue;
        }
        if !saw_header {
            let expected = {
                let mut h = String::from("t");
                for i in 0..sc.n_robots() {
                    let _ = write!(h, ",robot_{i}");
                }
                h
            };
            if line != expected {
                return Err(bad(format!("bad header {line:?}, expected {expected:?}")));
            }
            saw_header = true;
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != sc.n_robots() + 1 {
            return Err(bad(format!("row {line:?} has {} cells", cells.len())));
        }
        let t: usize = cells[0]
            .parse()
            .map_err(|e| bad(format!("bad step index in {line:?}: {e}")))?;
        if t != rows.len() {
            return Err(bad(format!(
                "row {line:?} out of order, expected t={}",
                rows.len()
            )));
        }
        let names = &cells[1..];
        let action = if names.iter().all(|&n| n == "fin") {
            JointMove::Fin
        } else if names.contains(&"fin") {
            return Err(bad(format!("row {line:?} mixes fin with places")));
        } else {
            let targets = names
                .iter()
                .map(|&n| {
                    sc.place_by_name(n)
                        .ok_or_else(|| bad(format!("unknown place {n:?}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            JointMove::To(targets)
        };
        rows.push(action);
    }
    if !saw_header {
        return Err(bad("missing header row".into()));
    }
    Ok(Strategy {
        moves: rows,
        meta: StrategyMeta {
            scenario_hash,
            solver,
            g,
            value,
        },
    })
}

/// Sweep records as CSV:
/// `a_bit,pr_cumulative,g,classification,energy,seconds,schedule_hash`.
pub fn sweep_to_csv(sc: &Scenario, records: &[SweepRecord]) -> String {
    let m = sc.n_rooms() as f64;
    let mut out =
        String::from("a_bit,pr_cumulative,g,classification,energy,seconds,schedule_hash\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:.3},{}",
            r.point.a_bit,
            format_float(r.point.pr_uniform * m),
            r.point.g,
            r.classification,
            format_float(r.energy),
            r.seconds,
            r.schedule_hash
        );
    }
    out
}

/// Row form used by [`emit_plot`], parsed back from the sweep CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotRecord {
    pub a_bit: u64,
    pub pr_cumulative: f64,
    pub g: u32,
    pub classification: Classification,
}

impl From<(&Scenario, &SweepRecord)> for PlotRecord {
    fn from((sc, r): (&Scenario, &SweepRecord)) -> Self {
        PlotRecord {
            a_bit: r.point.a_bit,
            pr_cumulative: r.point.pr_uniform * sc.n_rooms() as f64,
            g: r.point.g,
            classification: r.classification,
        }
    }
}

pub fn parse_sweep_csv(text: &str) -> Result<Vec<PlotRecord>, HarnessError> {
    let bad = |msg: String| HarnessError::BadSweepCsv(msg);
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.starts_with("a_bit,pr_cumulative,g,classification") => {}
        other => return Err(bad(format!("bad header {other:?}"))),
    }
    let mut out = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() < 4 {
            return Err(bad(format!("short row {line:?}")));
        }
        out.push(PlotRecord {
            a_bit: cells[0]
                .parse()
                .map_err(|e| bad(format!("{line:?}: {e}")))?,
            pr_cumulative: cells[1]
                .parse()
                .map_err(|e| bad(format!("{line:?}: {e}")))?,
            g: cells[2]
                .parse()
                .map_err(|e| bad(format!("{line:?}: {e}")))?,
            classification: cells[3]
                .parse()
                .map_err(|e| bad(format!("{line:?}: {e}")))?,
        });
    }
    Ok(out)
}

fn format_float(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{v:.1}")
    } else {
        format!("{v}")
    }
}

fn classification_color(c: Classification) -> &'static str {
    match c {
        Classification::Incorrect => "#d62728",
        Classification::CorrectNonRecurrent => "#1f77b4",
        Classification::Recurrent => "#2ca02c",
    }
}

/// Scatter plot of sweep outcomes: one panel per grid resolution,
/// `a_bit` on a log x-axis, cumulative probability on the y-axis, one
/// colour per classification. Byte-deterministic for fixed input.
pub fn emit_plot(records: &[PlotRecord]) -> String {
    const PANEL_W: f64 = 280.0;
    const PANEL_H: f64 = 240.0;
    const ML: f64 = 52.0;
    const MR: f64 = 16.0;
    const MT: f64 = 30.0;
    const MB: f64 = 42.0;

    let mut gs: Vec<u32> = records.iter().map(|r| r.g).collect();
    gs.sort_unstable();
    gs.dedup();
    if gs.is_empty() {
        gs.push(1);
    }

    let min_a = records.iter().map(|r| r.a_bit).min().unwrap_or(1).max(1);
    let max_a = records.iter().map(|r| r.a_bit).max().unwrap_or(10);
    let (lo_x, hi_x) = ((min_a as f64).log10() - 0.2, (max_a as f64).log10() + 0.2);
    let max_y = records
        .iter()
        .map(|r| r.pr_cumulative)
        .fold(0.0f64, f64::max)
        .max(0.1);
    let (lo_y, hi_y) = (0.0, max_y * 1.1);

    let total_w = gs.len() as f64 * PANEL_W;
    let total_h = PANEL_H + 20.0;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total_w}" height="{total_h}" viewBox="0 0 {total_w} {total_h}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);

    for (panel, &g) in gs.iter().enumerate() {
        let x0 = panel as f64 * PANEL_W + ML;
        let x1 = panel as f64 * PANEL_W + PANEL_W - MR;
        let y0 = MT;
        let y1 = PANEL_H - MB;
        let sx = |a: f64| x0 + (a.log10() - lo_x) / (hi_x - lo_x) * (x1 - x0);
        let sy = |p: f64| y1 - (p - lo_y) / (hi_y - lo_y) * (y1 - y0);

        let _ = writeln!(
            svg,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black" stroke-width="1"/>"#,
            x0,
            y0,
            x1 - x0,
            y1 - y0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="13" text-anchor="middle">g={g}</text>"#,
            (x0 + x1) / 2.0,
            y0 - 10.0
        );

        // Decade ticks on the log x-axis.
        let mut decade = 1u64;
        while (decade as f64) <= max_a as f64 * 1.01 {
            if decade >= min_a || decade as f64 >= 10f64.powf(lo_x) {
                let x = sx(decade as f64);
                if x >= x0 - 1.0 && x <= x1 + 1.0 {
                    let _ = writeln!(
                        svg,
                        r#"<line x1="{x:.2}" y1="{y1:.2}" x2="{x:.2}" y2="{:.2}" stroke="black" stroke-width="1"/>"#,
                        y1 + 4.0
                    );
                    let _ = writeln!(
                        svg,
                        r#"<text x="{x:.2}" y="{:.2}" font-family="sans-serif" font-size="10" text-anchor="middle">{decade}</text>"#,
                        y1 + 16.0
                    );
                }
            }
            decade = decade.saturating_mul(10);
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="middle">a_bit (log)</text>"#,
            (x0 + x1) / 2.0,
            y1 + 32.0
        );

        // Four evenly spaced y ticks.
        for i in 0..=4 {
            let p = lo_y + (hi_y - lo_y) * i as f64 / 4.0;
            let y = sy(p);
            let _ = writeln!(
                svg,
                r#"<line x1="{:.2}" y1="{y:.2}" x2="{x0:.2}" y2="{y:.2}" stroke="black" stroke-width="1"/>"#,
                x0 - 4.0
            );
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="10" text-anchor="end">{:.2}</text>"#,
                x0 - 7.0,
                y + 3.0,
                p
            );
        }

        for r in records.iter().filter(|r| r.g == g) {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{}"/>"#,
                sx(r.a_bit.max(1) as f64),
                sy(r.pr_cumulative),
                classification_color(r.classification)
            );
        }
    }
    let _ = writeln!(svg, "</svg>");
    svg
}
