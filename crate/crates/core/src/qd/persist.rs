use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use super::archive::{Archive, CellIndexer, Elite};
use crate::descriptors::{parse_descriptor_row, write_descriptor_row};
use crate::env::EnvironmentSpec;
use crate::genome::{Genome, GenomeError};

pub const INDEX_FILE: &str = "archive.csv";
const DESCRIPTOR_FILE: &str = "descriptors.csv";
const GENOME_DIR: &str = "genomes";
const DESCRIPTOR_HEADER: &str = "cell_key,dim,values";
const HEADER: &str = "cell_key,performance,max_speed_cm_s,robots,arena_area_m2,obstacles,rab_range_cm,proximity_range_cm,eval_id,genome_file";

#[derive(Debug, Error)]
pub enum PersistError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("{file}: line {line}: {message}")]
    Format {
        file: String,
        line: usize,
        message: String,
    },
    #[error("genome {file}: {source}")]
    Genome { file: String, source: GenomeError },
}

fn genome_file(key: usize) -> String {
    format!("{GENOME_DIR}/cell_{key:04}.txt")
}

/// Writes the index, per-elite genome files and descriptors into `dir`.
/// `comments` become leading `#` lines of the index and descriptor files.
pub fn write_archive(
    dir: &Path,
    archive: &Archive,
    comments: &[String],
) -> Result<(), PersistError> {
    fs::create_dir_all(dir.join(GENOME_DIR))?;
    let mut index = BufWriter::new(fs::File::create(dir.join(INDEX_FILE))?);
    let mut desc = BufWriter::new(fs::File::create(dir.join(DESCRIPTOR_FILE))?);
    for c in comments {
        writeln!(index, "# {c}")?;
        writeln!(desc, "# {c}")?;
    }
    writeln!(index, "{HEADER}")?;
    writeln!(desc, "{DESCRIPTOR_HEADER}")?;
    for (key, e) in archive.iter() {
        let env = &e.environment;
        let file = genome_file(key);
        writeln!(
            index,
            "{key},{},{},{},{},{},{},{},{},{file}",
            e.performance,
            env.max_speed_cm_s,
            env.robots,
            env.arena_area_m2,
            env.obstacles,
            env.rab_range_cm,
            env.proximity_range_cm,
            e.eval_id
        )?;
        let mut text = String::new();
        for c in comments {
            text.push_str("# ");
            text.push_str(c);
            text.push('\n');
        }
        text.push_str(&e.genome.to_text());
        fs::write(dir.join(&file), text)?;
        write_descriptor_row(&mut desc, &key.to_string(), &e.descriptor)?;
    }
    index.flush()?;
    desc.flush()?;
    Ok(())
}

fn bad(file: &str, line: usize, message: impl Into<String>) -> PersistError {
    PersistError::Format {
        file: file.to_string(),
        line,
        message: message.into(),
    }
}

/// Reads an archive written by [`write_archive`].
pub fn read_archive(dir: &Path, indexer: CellIndexer) -> Result<Archive, PersistError> {
    let mut archive = Archive::new(indexer);
    let descriptors = read_descriptors(dir)?;
    let text = fs::read_to_string(dir.join(INDEX_FILE))?;
    let mut saw_header = false;
    for (n, line) in text.lines().enumerate() {
        let n = n + 1;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if !saw_header {
            if line != HEADER {
                return Err(bad(INDEX_FILE, n, "unexpected header"));
            }
            saw_header = true;
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 10 {
            return Err(bad(
                INDEX_FILE,
                n,
                format!("expected 10 fields, got {}", f.len()),
            ));
        }
        let num = |i: usize| {
            f[i].parse::<f64>()
                .map_err(|e| bad(INDEX_FILE, n, format!("field {}: {e}", i + 1)))
        };
        let int = |i: usize| {
            f[i].parse::<u64>()
                .map_err(|e| bad(INDEX_FILE, n, format!("field {}: {e}", i + 1)))
        };
        let key = int(0)? as usize;
        let environment = EnvironmentSpec {
            max_speed_cm_s: num(2)?,
            robots: int(3)? as usize,
            arena_area_m2: num(4)?,
            obstacles: int(5)? as usize,
            rab_range_cm: num(6)?,
            proximity_range_cm: num(7)?,
        };
        let gtext = fs::read_to_string(dir.join(f[9]))?;
        let genome = Genome::from_text(&gtext).map_err(|source| PersistError::Genome {
            file: f[9].to_string(),
            source,
        })?;
        let elite = Elite {
            genome,
            performance: num(1)?,
            descriptor: descriptors.get(&key).cloned().unwrap_or_default(),
            environment,
            eval_id: int(8)?,
        };
        archive.try_insert_at(key, elite);
    }
    Ok(archive)
}

fn read_descriptors(
    dir: &Path,
) -> Result<std::collections::HashMap<usize, Vec<f64>>, PersistError> {
    let path = dir.join(DESCRIPTOR_FILE);
    let mut out = std::collections::HashMap::new();
    if !path.exists() {
        return Ok(out);
    }
    for (n, line) in fs::read_to_string(path)?.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() || line == DESCRIPTOR_HEADER {
            continue;
        }
        let (key, values) = parse_descriptor_row(line)
            .ok_or_else(|| bad(DESCRIPTOR_FILE, n + 1, "malformed row"))?;
        let key = key
            .parse()
            .map_err(|_| bad(DESCRIPTOR_FILE, n + 1, "bad key"))?;
        out.insert(key, values);
    }
    Ok(out)
}
