//! Provenance headers and per-stage hash manifests.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{CliError, ErrorKind, Result};

pub const MANIFEST: &str = "manifest.txt";
const MANIFEST_HEADER: &str = "path,sha256";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub config_hash: String,
    /// Master seed, or several joined by `+` for cross-run outputs.
    pub seed: String,
}

impl Provenance {
    pub fn new(config_hash: impl Into<String>, seed: impl ToString) -> Self {
        Provenance {
            config_hash: config_hash.into(),
            seed: seed.to_string(),
        }
    }

    pub fn line(&self) -> String {
        format!("config_hash={} seed={}", self.config_hash, self.seed)
    }

    /// `# config_hash=.. seed=..` with trailing newline.
    pub fn header(&self) -> String {
        format!("# {}\n", self.line())
    }

    /// Parses a header line, with or without the leading `# `.
    pub fn parse(line: &str) -> Option<Self> {
        let line = line.trim().trim_start_matches('#').trim();
        let mut parts = line.split_whitespace();
        let hash = parts.next()?.strip_prefix("config_hash=")?;
        let seed = parts.next()?.strip_prefix("seed=")?;
        if parts.next().is_some() || hash.is_empty() {
            return None;
        }
        Some(Provenance::new(hash, seed))
    }

    /// Provenance recorded in the first line of `path`.
    pub fn of_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        text.lines()
            .next()
            .and_then(Provenance::parse)
            .ok_or_else(|| {
                CliError::new(
                    ErrorKind::Integrity,
                    format!("{}: no provenance header", path.display()),
                )
            })
    }
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

/// Writes `body` below the provenance header.
pub fn write_with_header(path: &Path, prov: &Provenance, body: &str) -> Result<()> {
    let mut text = prov.header();
    text.push_str(body);
    write_file(path, text)
}

pub fn hash_file(path: &Path) -> Result<String> {
    let mut file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf).map_err(|e| CliError::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

fn collect(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.is_dir() {
            collect(root, &path, out)?;
        } else {
            let rel = path
                .strip_prefix(root)
                .expect("walk stays under root")
                .to_path_buf();
            if rel != Path::new(MANIFEST) {
                out.push(rel);
            }
        }
    }
    Ok(())
}

/// Files under `dir` relative to it, `/`-separated and sorted.
pub fn stage_files(dir: &Path) -> Result<Vec<String>> {
    let mut files = Vec::new();
    collect(dir, dir, &mut files)?;
    let mut names: Vec<String> = files
        .iter()
        .map(|p| {
            p.components()
                .map(|c| c.as_os_str().to_string_lossy())
                .collect::<Vec<_>>()
                .join("/")
        })
        .collect();
    names.sort();
    Ok(names)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStatus {
    /// Nothing usable on disk; the stage must run.
    Pending,
    /// Sealed and verified; rerunning is a no-op.
    Complete,
}

fn integrity(dir: &Path, message: impl std::fmt::Display) -> CliError {
    CliError::new(
        ErrorKind::Integrity,
        format!(
            "{}: {message}; remove the stage directory to recompute it",
            dir.display()
        ),
    )
}

/// Verifies a sealed stage against its manifest.
pub fn verify_stage(dir: &Path, prov: &Provenance) -> Result<()> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let mut lines = text.lines();
    let recorded = lines
        .next()
        .and_then(Provenance::parse)
        .ok_or_else(|| integrity(dir, "manifest lacks provenance"))?;
    if &recorded != prov {
        return Err(CliError::new(
            ErrorKind::Config,
            format!(
                "{} was produced with {}, current run is {}",
                dir.display(),
                recorded.line(),
                prov.line()
            ),
        ));
    }
    if lines.next() != Some(MANIFEST_HEADER) {
        return Err(integrity(dir, "malformed manifest"));
    }
    let mut listed = Vec::new();
    for line in lines {
        let (file, hash) = line
            .rsplit_once(',')
            .ok_or_else(|| integrity(dir, "malformed manifest row"))?;
        let actual = hash_file(&dir.join(file)).map_err(|e| integrity(dir, e))?;
        if actual != hash {
            return Err(integrity(
                dir,
                format!("{file} changed since the stage completed"),
            ));
        }
        listed.push(file.to_string());
    }
    if stage_files(dir)? != listed {
        return Err(integrity(dir, "file set differs from the manifest"));
    }
    Ok(())
}

/// Decides whether a stage must run. A sealed stage is verified; an
/// unsealed leftover from an interrupted run is discarded.
pub fn begin_stage(dir: &Path, prov: &Provenance) -> Result<StageStatus> {
    if dir.join(MANIFEST).exists() {
        verify_stage(dir, prov)?;
        return Ok(StageStatus::Complete);
    }
    if dir.exists() {
        log::warn!("discarding incomplete stage output in {}", dir.display());
        fs::remove_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    Ok(StageStatus::Pending)
}

/// Records the hash of every file in the stage.
pub fn seal_stage(dir: &Path, prov: &Provenance) -> Result<()> {
    let mut text = prov.header();
    text.push_str(MANIFEST_HEADER);
    text.push('\n');
    for file in stage_files(dir)? {
        let hash = hash_file(&dir.join(&file))?;
        text.push_str(&format!("{file},{hash}\n"));
    }
    write_file(&dir.join(MANIFEST), text)
}

/// Fails unless `dir` holds a sealed stage that verifies.
pub fn require_stage(dir: &Path, prov: &Provenance, name: &str) -> Result<()> {
    if !dir.join(MANIFEST).exists() {
        return Err(CliError::new(
            ErrorKind::Missing,
            format!(
                "{} has no completed {name} stage; run `{name}` first",
                dir.display()
            ),
        ));
    }
    verify_stage(dir, prov)
}
