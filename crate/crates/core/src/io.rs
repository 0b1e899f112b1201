//! Solution database, run configuration and diagram export.
//!
//! The database is a line-delimited JSON journal. Each run starts with a
//! header line carrying the run id and creation time; the records that follow
//! belong to it. Full profiles live in a sidecar directory as text files named
//! by the SHA-256 of their contents.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::continuation::{SweepConfig, SweepResult};
use crate::enumerator::{AsymptoticSolution, Family};
use crate::error::{CarrierError, Result};
use crate::model::{Functionals, Grid, State, Symmetry};
use crate::moore::MooreOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Numeric,
    Asymptotic,
}

impl std::fmt::Display for Source {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Source::Numeric => "numeric",
            Source::Asymptotic => "asymptotic",
        })
    }
}

/// One stored solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionRecord {
    /// Run the record belongs to; taken from the preceding header line.
    #[serde(skip)]
    pub run: String,
    pub eps_sq: f64,
    pub source: Source,
    pub branch_id: usize,
    pub component: Option<u32>,
    #[serde(rename = "M")]
    pub maxima: usize,
    pub symmetry: Symmetry,
    pub family: Option<Family>,
    pub functionals: Functionals,
    /// Hash of the sidecar profile file, filled in when the record is written.
    pub profile_hash: Option<String>,
    /// Nodal values on the uniform grid over `[-1, 1]`.
    #[serde(skip)]
    pub profile: Option<Vec<f64>>,
}

impl SolutionRecord {
    /// A numerical solution; the component is its number of interior maxima.
    pub fn from_state(state: &State, branch_id: usize, keep_profile: bool) -> Self {
        let maxima = state.interior_maxima();
        Self {
            run: String::new(),
            eps_sq: state.eps_sq,
            source: Source::Numeric,
            branch_id,
            component: u32::try_from(maxima).ok(),
            maxima,
            symmetry: state.symmetry(),
            family: None,
            functionals: state.functionals(),
            profile_hash: None,
            profile: keep_profile.then(|| state.values.clone()),
        }
    }

    /// An asymptotic solution sampled on `values` (from the enumerator's profile builder).
    pub fn from_asymptotic(sol: &AsymptoticSolution, eps: f64, index: usize, values: Vec<f64>) -> Result<Self> {
        let grid = Grid::new(values.len())?;
        let state = State::new(eps * eps, grid, values)?;
        let maxima = state.interior_maxima();
        Ok(Self {
            run: String::new(),
            eps_sq: eps * eps,
            source: Source::Asymptotic,
            branch_id: index,
            component: u32::try_from(sol.n).ok(),
            maxima,
            symmetry: if sol.family.is_symmetric() { Symmetry::Symmetric } else { Symmetry::Asymmetric },
            family: Some(sol.family),
            functionals: state.functionals(),
            profile_hash: None,
            profile: Some(state.values),
        })
    }

    /// Branch id qualified by the run, so ids from different runs stay distinct.
    pub fn qualified_branch(&self) -> String {
        format!("{}:{}", self.run, self.branch_id)
    }

    /// Checks the stored functionals against the profile, when there is one.
    pub fn validate(&self) -> Result<()> {
        let Some(p) = &self.profile else { return Ok(()) };
        let state = State::new(self.eps_sq, Grid::new(p.len())?, p.clone())?;
        let f = state.functionals();
        for (name, (a, b)) in Functionals::NAMES.iter().zip(f.values().iter().zip(self.functionals.values())) {
            if (a - b).abs() > 1e-12 * a.abs().max(1.0) {
                return Err(CarrierError::Validation(format!(
                    "record {}: stored {name} = {b} but the profile gives {a}",
                    self.qualified_branch()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunHeader {
    pub run: String,
    /// Seconds since the Unix epoch.
    pub created: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Line {
    Run(RunHeader),
    Record(SolutionRecord),
}

/// Append-only solution journal with a profile sidecar directory.
#[derive(Debug, Clone)]
pub struct Database {
    path: PathBuf,
}

impl Database {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn profile_dir(&self) -> PathBuf {
        let mut name = self.path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".profiles");
        self.path.with_file_name(name)
    }

    /// Appends a run header followed by `records`, returning the new run id.
    pub fn append_run(&self, records: &[SolutionRecord]) -> Result<String> {
        let created =
            std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        self.append_run_at(records, created)
    }

    /// As [`Database::append_run`] with a fixed creation time.
    pub fn append_run_at(&self, records: &[SolutionRecord], created: u64) -> Result<String> {
        if let Some(dir) = self.path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let mut file = OpenOptions::new().create(true).read(true).append(true).open(&self.path)?;
        let runs = self.drop_partial_tail(&mut file)?;
        let run = format!("r{runs}");
        let mut out = BufWriter::new(file);
        write_line(&mut out, &Line::Run(RunHeader { run: run.clone(), created }))?;
        for r in records {
            let mut stored = r.clone();
            if let Some(p) = &r.profile {
                stored.profile_hash = Some(self.write_profile(p)?);
            }
            write_line(&mut out, &Line::Record(stored))?;
        }
        out.flush()?;
        Ok(run)
    }

    /// Cuts an unterminated last line left by an interrupted writer and counts run headers.
    fn drop_partial_tail(&self, file: &mut File) -> Result<usize> {
        let mut text = String::new();
        file.seek(SeekFrom::Start(0))?;
        file.read_to_string(&mut text)?;
        if !text.is_empty() && !text.ends_with('\n') {
            let keep = text.rfind('\n').map_or(0, |i| i + 1);
            warn!("{}: dropping unterminated last line before appending", self.path.display());
            file.set_len(keep as u64)?;
            text.truncate(keep);
        }
        Ok(text.lines().filter(|l| l.contains("\"kind\":\"run\"")).count())
    }

    fn write_profile(&self, values: &[f64]) -> Result<String> {
        let text = profile_text(values);
        let hash = hex::encode(Sha256::digest(text.as_bytes()));
        let dir = self.profile_dir();
        fs::create_dir_all(&dir)?;
        let path = dir.join(format!("{hash}.txt"));
        if !path.exists() {
            fs::write(&path, text)?;
        }
        Ok(hash)
    }

    fn read_profile(&self, hash: &str) -> Result<Vec<f64>> {
        let text = fs::read_to_string(self.profile_dir().join(format!("{hash}.txt")))?;
        if hex::encode(Sha256::digest(text.as_bytes())) != hash {
            return Err(CarrierError::Validation(format!("profile {hash} does not match its hash")));
        }
        text.lines()
            .map(|l| l.trim().parse::<f64>().map_err(|e| CarrierError::Validation(format!("profile {hash}: {e}"))))
            .collect()
    }

    /// All records in file order, with profiles loaded and functionals checked.
    /// A missing file reads as empty.
    pub fn read(&self) -> Result<Vec<SolutionRecord>> {
        let text = match fs::read_to_string(&self.path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        let complete = text.ends_with('\n');
        let lines: Vec<&str> = text.lines().collect();
        let mut out = Vec::new();
        let mut run: Option<String> = None;
        for (i, raw) in lines.iter().enumerate() {
            if raw.trim().is_empty() {
                continue;
            }
            let line = match serde_json::from_str::<Line>(raw) {
                Ok(l) => l,
                Err(e) if i + 1 == lines.len() && !complete => {
                    warn!("{}: ignoring partial last line {}: {e}", self.path.display(), i + 1);
                    break;
                }
                Err(e) => return Err(CarrierError::CorruptLine { line: i + 1, message: e.to_string() }),
            };
            match line {
                Line::Run(h) => run = Some(h.run),
                Line::Record(mut r) => {
                    r.run = run.clone().ok_or_else(|| CarrierError::CorruptLine {
                        line: i + 1,
                        message: "record before any run header".into(),
                    })?;
                    if let Some(h) = &r.profile_hash {
                        r.profile = Some(self.read_profile(h)?);
                    }
                    r.validate()?;
                    out.push(r);
                }
            }
        }
        Ok(out)
    }
}

fn write_line(out: &mut impl Write, line: &Line) -> Result<()> {
    serde_json::to_writer(&mut *out, line)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// One value per line with 17 significant digits.
pub fn profile_text(values: &[f64]) -> String {
    let mut s = String::with_capacity(values.len() * 24);
    for v in values {
        s.push_str(&format!("{v:.16e}\n"));
    }
    s
}

/// Every point of every branch; profiles where the sweep kept the full state.
pub fn records_from_sweep(result: &SweepResult) -> Vec<SolutionRecord> {
    let mut out = Vec::new();
    for b in &result.branches {
        for p in &b.points {
            let maxima = p.maxima;
            out.push(SolutionRecord {
                run: String::new(),
                eps_sq: p.eps_sq,
                source: Source::Numeric,
                branch_id: b.id,
                component: u32::try_from(maxima).ok(),
                maxima,
                symmetry: p.symmetry,
                family: None,
                functionals: p.functionals,
                profile_hash: None,
                profile: p.state.as_ref().map(|s| s.values.clone()),
            });
        }
    }
    out
}

pub const DIAGRAM_HEADER: &str = "eps_sq,functional_name,value,branch_id,component,M,symmetry,source";

/// One CSV row per record and functional.
pub fn write_diagram(records: &[SolutionRecord], out: &mut impl Write) -> Result<()> {
    writeln!(out, "{DIAGRAM_HEADER}")?;
    for r in records {
        let component = r.component.map(|c| c.to_string()).unwrap_or_default();
        for (name, value) in Functionals::NAMES.iter().zip(r.functionals.values()) {
            writeln!(
                out,
                "{},{name},{value},{},{component},{},{},{}",
                r.eps_sq,
                r.qualified_branch(),
                r.maxima,
                r.symmetry,
                r.source
            )?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub database: PathBuf,
    /// Bifurcation events found by a sweep, as JSON.
    pub events: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { database: PathBuf::from("carrier.jsonl"), events: PathBuf::from("events.json") }
    }
}

/// Every tunable parameter, read from TOML. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub sweep: SweepConfig,
    pub moore: MooreOptions,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| CarrierError::Config(e.to_string()))?;
        c.sweep.validate()?;
        if c.moore.grids.iter().any(|&n| Grid::new(n).is_err()) {
            return Err(CarrierError::Config(format!("invalid locator grids {:?}", c.moore.grids)));
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CarrierError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CarrierError::Config(e.to_string()))
    }
}
