//! Line-delimited JSON persistence for candidates and paths.
//!
//! Both file kinds start with a header record carrying a schema tag and the
//! configuration digest; every subsequent line is one record. Files are
//! append-friendly and re-readable by the pipeline.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{FphandError, Result};
use crate::model::DesignParams;
use crate::planner::PathRecord;
use crate::sampler::CandidateRecord;

pub const CANDIDATES_SCHEMA: &str = "fphand.candidates.v1";
pub const PATHS_SCHEMA: &str = "fphand.paths.v1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidatesHeader {
    pub schema: String,
    pub config_digest: String,
    pub seed_design: DesignParams,
    pub active_dims: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathsHeader {
    pub schema: String,
    pub config_digest: String,
}

/// Write header + candidates; states stored in canonical (wrapped) form.
pub fn write_candidates(
    path: &Path,
    header: &CandidatesHeader,
    candidates: &[CandidateRecord],
) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(serde_json::to_string(header)?.as_bytes());
    out.push(b'\n');
    for c in candidates {
        let mut c = c.clone();
        for s in c.states.iter_mut() {
            s.state = s.state.wrapped();
        }
        out.extend_from_slice(serde_json::to_string(&c)?.as_bytes());
        out.push(b'\n');
    }
    atomic_write(path, &out)
}

/// Read a candidates file; corrupt body lines are returned separately so the
/// caller can warn and record them.
pub fn read_candidates(path: &Path) -> Result<(CandidatesHeader, Vec<CandidateRecord>, Vec<usize>)> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut lines = reader.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| FphandError::Config(format!("{}: empty candidates file", path.display())))??;
    let header: CandidatesHeader = serde_json::from_str(&header_line)
        .map_err(|e| FphandError::Config(format!("{}: bad header: {e}", path.display())))?;
    if header.schema != CANDIDATES_SCHEMA {
        return Err(FphandError::Config(format!(
            "{}: schema {} (expected {CANDIDATES_SCHEMA})",
            path.display(),
            header.schema
        )));
    }
    let mut records = Vec::new();
    let mut corrupt = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<CandidateRecord>(&line) {
            Ok(r) => records.push(r),
            Err(_) => corrupt.push(i + 2), // 1-based file line
        }
    }
    Ok((header, records, corrupt))
}

pub fn write_paths(path: &Path, header: &PathsHeader, paths: &[PathRecord]) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(serde_json::to_string(header)?.as_bytes());
    out.push(b'\n');
    for p in paths {
        out.extend_from_slice(serde_json::to_string(p)?.as_bytes());
        out.push(b'\n');
    }
    atomic_write(path, &out)
}

pub fn read_paths(path: &Path) -> Result<(PathsHeader, Vec<PathRecord>, Vec<usize>)> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut lines = reader.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| FphandError::Config(format!("{}: empty paths file", path.display())))??;
    let header: PathsHeader = serde_json::from_str(&header_line)
        .map_err(|e| FphandError::Config(format!("{}: bad header: {e}", path.display())))?;
    if header.schema != PATHS_SCHEMA {
        return Err(FphandError::Config(format!(
            "{}: schema {} (expected {PATHS_SCHEMA})",
            path.display(),
            header.schema
        )));
    }
    let mut records = Vec::new();
    let mut corrupt = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<PathRecord>(&line) {
            Ok(r) => records.push(r),
            Err(_) => corrupt.push(i + 2),
        }
    }
    Ok((header, records, corrupt))
}

/// Run bookkeeping written alongside outputs (not part of the byte-stable
/// dataset contract: it records wall time).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_digest: String,
    pub command: String,
    pub counts: std::collections::BTreeMap<String, usize>,
    pub wall_seconds: f64,
    #[serde(default)]
    pub notes: Vec<String>,
    #[serde(default)]
    pub efficiency: Vec<crate::sampler::EfficiencyPoint>,
}

pub fn write_manifest(path: &Path, manifest: &RunManifest) -> Result<()> {
    atomic_write(path, serde_json::to_string_pretty(manifest)?.as_bytes())
}

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn manifest_path(out: &Path) -> std::path::PathBuf {
    let mut name = out.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}
