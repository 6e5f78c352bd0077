use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use cleansynth::harness::{self, SweepPoint};
use cleansynth::pomdp;
use cleansynth::synth::{self, SolverLimits};
use cleansynth::verify::{self, Classification, OmegaSpec};
use cleansynth::Scenario;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

/// Writes bulk output to stdout, treating a closed pipe (`... | head`) as a
/// normal early exit.
fn emit(text: &str) -> Result<()> {
    match std::io::stdout().write_all(text.as_bytes()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => std::process::exit(0),
        other => Ok(other?),
    }
}

/// Synthesis and verification of recurrent cleaning schedules for robot
/// collectives.
#[derive(Parser)]
#[command(name = "cleansynth", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario file against every instance invariant.
    Validate { scenario: PathBuf },
    /// Build the explicit model and report its size.
    Build {
        scenario: PathBuf,
        /// Print the explicit model (states, rewards, transitions).
        #[arg(long)]
        dump: bool,
        /// Cap on explored states.
        #[arg(long, default_value_t = pomdp::DEFAULT_STATE_CAP)]
        max_states: usize,
    },
    /// Synthesise a schedule and print it as CSV on stdout.
    Synth {
        scenario: PathBuf,
        #[command(flatten)]
        solver: SolverArg,
        /// Cap on solver states.
        #[arg(long)]
        max_states: Option<usize>,
    },
    /// Verify a strategy file; without --omega the default candidate
    /// lattice is searched for the best verdict.
    Verify {
        scenario: PathBuf,
        strategy: PathBuf,
        /// JSON file with {"charge": [..], "contamination": [..]}.
        #[arg(long)]
        omega: Option<PathBuf>,
        /// Print the machine-readable report instead of the table.
        #[arg(long)]
        csv: bool,
    },
    /// Synthesise, verify and classify across a parameter grid; CSV on
    /// stdout.
    Sweep {
        scenario: PathBuf,
        /// Penalty weights (per-room contamination flag).
        #[arg(long = "a-bit", value_delimiter = ',', required = true)]
        a_bit: Vec<u64>,
        /// Uniform per-room contamination probabilities.
        #[arg(long = "pr", value_delimiter = ',', required = true)]
        pr: Vec<f64>,
        /// Grid resolutions.
        #[arg(long = "g", value_delimiter = ',', required = true)]
        g: Vec<u32>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Re-emit a strategy file in canonical form.
    Export { strategy: PathBuf },
    /// Render a sweep CSV as an SVG scatter plot on stdout.
    Plot { sweep: PathBuf },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct SolverArg {
    /// Exact backward induction over reachable belief marginals.
    #[arg(long)]
    exact: bool,
    /// Fixed-grid approximation with the given resolution.
    #[arg(long)]
    grid: Option<u32>,
}

fn load_scenario(path: &PathBuf) -> Result<Scenario> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading scenario {}", path.display()))?;
    Scenario::parse(&text).with_context(|| format!("parsing scenario {}", path.display()))
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { scenario } => {
            let text = fs::read_to_string(&scenario)
                .with_context(|| format!("reading scenario {}", scenario.display()))?;
            let sc = Scenario::parse_unvalidated(&text)
                .with_context(|| format!("parsing scenario {}", scenario.display()))?;
            let report = sc.validate();
            if report.is_empty() {
                println!(
                    "ok: {} places ({} rooms, {} chargers), {} robots, T={}",
                    sc.n_places(),
                    sc.n_rooms(),
                    sc.n_chargers(),
                    sc.n_robots(),
                    sc.horizon_t
                );
                Ok(ExitCode::SUCCESS)
            } else {
                print!("{report}");
                Ok(ExitCode::FAILURE)
            }
        }
        Command::Build {
            scenario,
            dump,
            max_states,
        } => {
            let sc = load_scenario(&scenario)?;
            let model = pomdp::build_pomdp_capped(&sc, max_states)?;
            eprintln!(
                "model: {} states, {} choices, {} transitions",
                model.n_states(),
                model.n_choices(),
                model.n_transitions()
            );
            if dump {
                emit(&model.dump())?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Synth {
            scenario,
            solver,
            max_states,
        } => {
            let sc = load_scenario(&scenario)?;
            let limits = max_states
                .map(|max_states| SolverLimits { max_states })
                .unwrap_or_default();
            let started = std::time::Instant::now();
            let result = if solver.exact {
                synth::exact_synthesize_with(&sc, limits)?
            } else {
                let g = solver.grid.expect("clap enforces the solver group");
                synth::grid_synthesize_with(&sc, g, limits)?
            };
            eprintln!(
                "value {} gap {} in {:.3}s",
                result.value,
                result.bound_gap,
                started.elapsed().as_secs_f64()
            );
            emit(&harness::export_schedule(&sc, &result.strategy))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify {
            scenario,
            strategy,
            omega,
            csv,
        } => {
            let sc = load_scenario(&scenario)?;
            let text = fs::read_to_string(&strategy)
                .with_context(|| format!("reading strategy {}", strategy.display()))?;
            let strategy = harness::import_schedule(&sc, &text)?;
            let (omega, report) = match omega {
                Some(path) => {
                    let text = fs::read_to_string(&path)
                        .with_context(|| format!("reading omega {}", path.display()))?;
                    let omega: OmegaSpec =
                        serde_json::from_str(&text).context("parsing omega file")?;
                    let report = verify::check_recurrence(&sc, &strategy, &omega)?;
                    (omega, report)
                }
                None => {
                    let candidates = harness::default_omega_lattice(&sc);
                    match harness::best_verification(&sc, &strategy, &candidates) {
                        Some(found) => found,
                        None => bail!("no candidate area can replay this schedule"),
                    }
                }
            };
            eprintln!(
                "omega: charge {:?}, contamination {:?}",
                omega.charge, omega.contamination
            );
            if csv {
                emit(&report.to_csv())?;
            } else {
                emit(&format!("{report}\n"))?;
            }
            if report.classification == Classification::Recurrent {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(2))
            }
        }
        Command::Sweep {
            scenario,
            a_bit,
            pr,
            g,
            workers,
        } => {
            let sc = load_scenario(&scenario)?;
            let mut points = Vec::new();
            for &g in &g {
                for &pr in &pr {
                    for &a_bit in &a_bit {
                        points.push(SweepPoint {
                            a_bit,
                            pr_uniform: pr,
                            g,
                        });
                    }
                }
            }
            let omegas = harness::default_omega_lattice(&sc);
            let records = harness::run_sweep(&sc, &points, &omegas, workers.max(1));
            for r in records.iter().filter(|r| r.error.is_some()) {
                eprintln!(
                    "point (a_bit={}, pr={}, g={}) failed: {}",
                    r.point.a_bit,
                    r.point.pr_uniform,
                    r.point.g,
                    r.error.as_deref().unwrap_or("")
                );
            }
            let (per_g, monotone) = harness::recurrent_energy_by_g(&records);
            for (g, min) in per_g {
                match min {
                    Some(e) => eprintln!("g={g}: min recurrent energy {e}"),
                    None => eprintln!("g={g}: no recurrent strategy"),
                }
            }
            eprintln!(
                "min recurrent energy non-increasing in g: {}",
                if monotone { "yes" } else { "NO" }
            );
            emit(&harness::sweep_to_csv(&sc, &records))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Export { strategy } => {
            let text = fs::read_to_string(&strategy)
                .with_context(|| format!("reading strategy {}", strategy.display()))?;
            emit(&canonicalize_strategy_text(&text)?)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Plot { sweep } => {
            let text = fs::read_to_string(&sweep)
                .with_context(|| format!("reading sweep csv {}", sweep.display()))?;
            let records = harness::parse_sweep_csv(&text)?;
            if records.is_empty() {
                bail!("sweep csv has no records");
            }
            emit(&harness::emit_plot(&records))?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

/// Scenario-free canonicalisation of a strategy file: metadata lines first,
/// then the header and rows exactly as parsed.
fn canonicalize_strategy_text(text: &str) -> Result<String> {
    let mut meta = Vec::new();
    let mut rows = Vec::new();
    let mut header = None;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            meta.push(line.to_string());
        } else if header.is_none() {
            if !line.starts_with("t,") {
                bail!("bad header {line:?}");
            }
            header = Some(line.to_string());
        } else {
            rows.push(line.to_string());
        }
    }
    let header = header.context("missing header row")?;
    let columns = header.split(',').count();
    let mut out = String::new();
    for m in &meta {
        out.push_str(m);
        out.push('\n');
    }
    out.push_str(&header);
    out.push('\n');
    for (i, row) in rows.iter().enumerate() {
        if row.split(',').count() != columns {
            bail!("row {row:?} does not match the header");
        }
        let t: usize = row
            .split(',')
            .next()
            .unwrap()
            .parse()
            .with_context(|| format!("bad step index in {row:?}"))?;
        if t != i {
            bail!("row {row:?} out of order, expected t={i}");
        }
        out.push_str(row);
        out.push('\n');
    }
    Ok(out)
}
