use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use carrier_core::continuation::{
    arclength_continue, component_index, deflated_sweep_observed, distinct_events, BifurcationEvent, EventKind,
    SweepResult,
};
use carrier_core::enumerator::{build_profile, enumerate, max_spikes, LayerSign};
use carrier_core::io::{records_from_sweep, write_diagram, Database, RunConfig, SolutionRecord};
use carrier_core::model::{Grid, State};
use carrier_core::moore::locate;
use carrier_core::predictor::{fold_asymptotic, predict_fold, predict_pitchfork};
use carrier_core::{CarrierError, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;

#[derive(Parser)]
#[command(
    name = "carrier",
    version,
    about = "Solutions and bifurcations of eps^2 y'' + 2(1 - x^2) y + y^2 = 1, y(-1) = y(1) = 0"
)]
struct Cli {
    /// TOML run configuration; defaults apply to anything left out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Deflated continuation in eps^2, appended to the database as a new run.
    Sweep {
        #[arg(long)]
        db: Option<PathBuf>,
        /// Where to write the detected bifurcation events.
        #[arg(long)]
        events: Option<PathBuf>,
        #[arg(long)]
        eps_sq_start: Option<f64>,
        #[arg(long)]
        eps_sq_end: Option<f64>,
    },
    /// Pseudo-arclength continuation from a stored solution.
    Branch {
        #[arg(long)]
        db: Option<PathBuf>,
        /// Qualified branch id, e.g. `r0:5`.
        #[arg(long)]
        record: String,
        /// Use the stored profile nearest this eps^2 (default: the last one).
        #[arg(long)]
        eps_sq: Option<f64>,
        #[arg(long, value_enum, default_value_t = Direction::Down)]
        direction: Direction,
        #[arg(long)]
        out: PathBuf,
    },
    /// Refines the events of a sweep with the augmented system.
    Locate {
        #[arg(long)]
        events: Option<PathBuf>,
        #[arg(long, value_enum)]
        kind: Option<Kind>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Bifurcation points predicted by the asymptotic construction.
    Predict {
        #[arg(long, value_enum)]
        kind: Kind,
        /// Index or inclusive range such as `1..4`.
        #[arg(long)]
        n: String,
    },
    /// Counts the asymptotic solutions at one eps.
    Enumerate {
        #[arg(long)]
        eps: f64,
        /// Print every solution as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Writes `x,y` samples of a stored or asymptotic solution.
    Profile {
        #[arg(long)]
        db: Option<PathBuf>,
        #[arg(long, conflicts_with_all = ["eps", "index"])]
        record: Option<String>,
        #[arg(long)]
        eps_sq: Option<f64>,
        /// Asymptotic solution at this eps, chosen by `--index` in the `enumerate` listing.
        #[arg(long, requires = "index")]
        eps: Option<f64>,
        #[arg(long)]
        index: Option<usize>,
        #[arg(long, default_value_t = 2001)]
        nodes: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Writes the database as CSV with one row per record and functional.
    Diagram {
        #[arg(long)]
        db: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Direction {
    Up,
    Down,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Kind {
    Fold,
    Pitchfork,
}

impl From<Kind> for EventKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Fold => EventKind::Fold,
            Kind::Pitchfork => EventKind::Pitchfork,
        }
    }
}

/// `println!` that reports a closed stdout as an error instead of panicking.
macro_rules! out {
    ($($arg:tt)*) => {
        writeln!(std::io::stdout().lock(), $($arg)*)?
    };
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CarrierError::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CarrierError::Config(_) | CarrierError::InvalidArgument(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let db_path = |db: Option<PathBuf>| db.unwrap_or_else(|| config.output.database.clone());
    match cli.command {
        Command::Sweep { db, events, eps_sq_start, eps_sq_end } => {
            let mut sweep = config.sweep.clone();
            sweep.eps_sq_start = eps_sq_start.unwrap_or(sweep.eps_sq_start);
            sweep.eps_sq_end = eps_sq_end.unwrap_or(sweep.eps_sq_end);
            sweep.validate()?;
            let result = deflated_sweep_observed(&sweep, |s| {
                if s.step % 500 == 0 {
                    info!("eps^2 = {:.5}: {} solutions", s.eps_sq, s.solutions.len());
                }
            })?;
            let database = Database::new(db_path(db));
            let run = database.append_run(&records_from_sweep(&result))?;
            let events_path = events.unwrap_or_else(|| config.output.events.clone());
            fs::write(&events_path, serde_json::to_string(&result.events)?)?;
            report_sweep(&result, &run)?;
        }
        Command::Branch { db, record, eps_sq, direction, out } => {
            let state = stored_state(&Database::new(db_path(db)), &record, eps_sq)?;
            let d = match direction {
                Direction::Up => 1.0,
                Direction::Down => -1.0,
            };
            let branch = arclength_continue(&state, d, &config.sweep.arclength)?;
            fs::write(&out, serde_json::to_string(&branch)?)?;
            out!("{} points written to {}", branch.points.len(), out.display());
        }
        Command::Locate { events, kind, out } => {
            let path = events.unwrap_or_else(|| config.output.events.clone());
            let text = fs::read_to_string(&path)
                .map_err(|e| CarrierError::Config(format!("cannot read events {}: {e}", path.display())))?;
            let events: Vec<BifurcationEvent> = serde_json::from_str(&text)?;
            let kinds: Vec<EventKind> = match kind {
                Some(k) => vec![k.into()],
                None => vec![EventKind::Pitchfork, EventKind::Fold],
            };
            let mut table = String::from("kind,n,eps_sweep,eps,error_estimate,eps_asymptotic,relative_error\n");
            let mut failed = 0;
            for k in kinds {
                for (i, e) in distinct_events(&events, k).into_iter().enumerate() {
                    let n = component_index(k, i);
                    let asym = match k {
                        EventKind::Pitchfork => predict_pitchfork(n)?.eps_asym,
                        EventKind::Fold => fold_asymptotic(n)?,
                    };
                    match locate(e, &config.moore) {
                        Ok(l) => table.push_str(&format!(
                            "{k},{n},{},{},{},{asym},{}\n",
                            e.eps_estimate,
                            l.eps,
                            l.error_estimate,
                            (asym - l.eps).abs() / l.eps
                        )),
                        Err(err) => {
                            eprintln!("{k} {n} near eps = {}: {err}", e.eps_estimate);
                            failed += 1;
                        }
                    }
                }
            }
            emit(out.as_deref(), &table)?;
            if failed > 0 {
                return Err(CarrierError::NoConvergence(format!("{failed} events could not be located")));
            }
        }
        Command::Predict { kind, n } => {
            let (lo, hi) = parse_range(&n)?;
            out!("kind,n,eps_exact,eps_asymptotic,k");
            for n in lo..=hi {
                let p = match kind {
                    Kind::Pitchfork => predict_pitchfork(n)?,
                    Kind::Fold => match predict_fold(n) {
                        Ok(p) => p,
                        Err(CarrierError::NoConvergence(_)) => carrier_core::predictor::PredictedBifurcation {
                            kind: EventKind::Fold,
                            n,
                            eps_exact: None,
                            eps_asym: fold_asymptotic(n)?,
                            k_at_bif: f64::NAN,
                        },
                        Err(e) => return Err(e),
                    },
                };
                let exact = p.eps_exact.map(|e| e.to_string()).unwrap_or_default();
                let k = if p.k_at_bif.is_finite() { p.k_at_bif.to_string() } else { String::new() };
                out!("{},{n},{exact},{},{k}", p.kind, p.eps_asym);
            }
        }
        Command::Enumerate { eps, json } => {
            let census = enumerate(eps)?;
            if json {
                out!("{}", serde_json::to_string_pretty(&census)?);
            } else {
                for (i, s) in census.all().enumerate() {
                    let layers = match s.boundary_layers {
                        Some((l, r)) => format!(" layers {}{}", sign_char(l), sign_char(r)),
                        None => String::new(),
                    };
                    let flag = if s.hand_off { " (near boundary)" } else { "" };
                    out!("{i:3} {:<24} n = {:3} k = {:.6}{layers}{flag}", s.family.to_string(), s.n, s.k);
                }
                out!("eps = {eps}: maximum spike count {}", max_spikes(eps));
                out!(
                    "symmetric {}, non-symmetric {}, turning-point {}, total {} ({} clear of the boundary layers)",
                    census.symmetric.len(),
                    census.nonsymmetric.len(),
                    census.turning_point.len(),
                    census.total(),
                    census.confident_total()
                );
            }
        }
        Command::Profile { db, record, eps_sq, eps, index, nodes, out } => {
            let (grid, values) = match (record, eps, index) {
                (Some(r), _, _) => {
                    let s = stored_state(&Database::new(db_path(db)), &r, eps_sq)?;
                    (s.grid, s.values)
                }
                (None, Some(eps), Some(i)) => {
                    let census = enumerate(eps)?;
                    let sol = census.all().nth(i).ok_or_else(|| {
                        CarrierError::InvalidArgument(format!("index {i} beyond the {} solutions", census.total()))
                    })?;
                    let grid = Grid::new(nodes)?;
                    (grid, build_profile(sol, eps, grid)?.y)
                }
                _ => return Err(CarrierError::InvalidArgument("give --record, or --eps with --index".into())),
            };
            let mut text = String::from("x,y\n");
            for (i, y) in values.iter().enumerate() {
                text.push_str(&format!("{},{y}\n", grid.x(i)));
            }
            emit(out.as_deref(), &text)?;
        }
        Command::Diagram { db, out } => {
            let records = Database::new(db_path(db)).read()?;
            let mut buf = Vec::new();
            write_diagram(&records, &mut buf)?;
            emit(out.as_deref(), &String::from_utf8_lossy(&buf))?;
        }
    }
    Ok(())
}

fn report_sweep(result: &SweepResult, run: &str) -> Result<()> {
    if let (Some(first), Some(last)) = (result.counts.first(), result.counts.last()) {
        out!("run {run}: {} solutions at eps^2 = {}, {} at eps^2 = {}", first.1, first.0, last.1, last.0);
    }
    for k in [EventKind::Pitchfork, EventKind::Fold] {
        for (i, e) in distinct_events(&result.events, k).into_iter().enumerate() {
            out!("{k} {} near eps = {:.6}", component_index(k, i), e.eps_estimate);
        }
    }
    Ok(())
}

/// The stored profile of a branch nearest `eps_sq`, or its last one.
fn stored_state(db: &Database, branch: &str, eps_sq: Option<f64>) -> Result<State> {
    let records: Vec<SolutionRecord> =
        db.read()?.into_iter().filter(|r| r.qualified_branch() == branch && r.profile.is_some()).collect();
    let chosen = match eps_sq {
        Some(e) => records.iter().min_by(|a, b| (a.eps_sq - e).abs().total_cmp(&(b.eps_sq - e).abs())),
        None => records.last(),
    }
    .ok_or_else(|| CarrierError::InvalidArgument(format!("no stored profile for branch {branch}")))?;
    let values = chosen.profile.clone().unwrap_or_default();
    State::new(chosen.eps_sq, Grid::new(values.len())?, values)
}

fn parse_range(s: &str) -> Result<(u32, u32)> {
    let bad = || CarrierError::InvalidArgument(format!("expected an index or a range like 1..4, got {s:?}"));
    let (lo, hi) = match s.split_once("..") {
        Some((a, b)) => {
            (a.trim().parse().map_err(|_| bad())?, b.trim_start_matches('=').trim().parse().map_err(|_| bad())?)
        }
        None => {
            let n = s.trim().parse().map_err(|_| bad())?;
            (n, n)
        }
    };
    if lo > hi {
        return Err(bad());
    }
    Ok((lo, hi))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn sign_char(s: LayerSign) -> char {
    match s {
        LayerSign::Plus => '+',
        LayerSign::Minus => '-',
    }
}
