//! Run-directory layout, locking and file helpers shared by the commands.

use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use fmrc_core::dynamics::{Trajectory, TransitionPairSet};
use fmrc_core::format::{self, FileMetadata};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;

pub const LOCK_FILE: &str = ".fmrc.lock";

/// Resolved configuration plus the run directory every command works in.
#[derive(Debug, Clone)]
pub struct Context {
    pub cfg: RunConfig,
}

impl Context {
    pub fn root(&self) -> &Path {
        &self.cfg.output_dir
    }

    pub fn pairs_path(&self) -> PathBuf {
        self.root().join("pairs.fmrc")
    }

    pub fn trajectory_dir(&self) -> PathBuf {
        self.root().join("trajectories")
    }

    pub fn models_dir(&self, tag: &str) -> PathBuf {
        self.root().join("models").join(tag)
    }

    /// Write `resolved_config.<command>.json` into `dir`.
    pub fn write_snapshot(&self, dir: &Path, command: &str) -> Result<(), CliError> {
        write_text(
            &dir.join(format!("resolved_config.{command}.json")),
            &self.cfg.to_snapshot(),
        )
    }
}

/// Exclusive lock on a run directory, released on drop.
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        let path = root.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(CliError::Usage(format!(
                    "{} is locked by another fmrc process (remove {} if it is stale)",
                    root.display(),
                    path.display()
                )))
            }
            Err(e) => Err(CliError::io(&path, e)),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    if let Some(p) = path.parent() {
        if !p.as_os_str().is_empty() {
            fs::create_dir_all(p).map_err(|e| CliError::io(p, e))?;
        }
    }
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    ensure_parent(path)?;
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::io(path, e))?;
    s.push('\n');
    write_text(path, &s)
}

/// Buffered writer; `f` fills it and the file is flushed afterwards.
pub fn write_with<F>(path: &Path, f: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<(), CliError>,
{
    ensure_parent(path)?;
    let mut w = BufWriter::new(File::create(path).map_err(|e| CliError::io(path, e))?);
    f(&mut w)?;
    w.flush().map_err(|e| CliError::io(path, e))
}

/// CSV writer: header line, then one line per row, LF endings.
pub fn write_csv<I>(path: &Path, header: &str, rows: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = String>,
{
    write_with(path, |w| {
        writeln!(w, "{header}").map_err(|e| CliError::io(path, e))?;
        for r in rows {
            writeln!(w, "{r}").map_err(|e| CliError::io(path, e))?;
        }
        Ok(())
    })
}

/// Shortest round-trip decimal representation.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    if !path.exists() {
        return Err(CliError::Input(format!(
            "missing input file {}",
            path.display()
        )));
    }
    Ok(BufReader::new(
        File::open(path).map_err(|e| CliError::io(path, e))?,
    ))
}

pub fn read_pairs(path: &Path) -> Result<(TransitionPairSet, FileMetadata), CliError> {
    format::read_pairs(&mut open(path)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory, CliError> {
    format::read_trajectory(&mut open(path)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn trajectory_file(dir: &Path, kind: &str, index: usize) -> PathBuf {
    dir.join(format!("{kind}_{index:03}.fmrc"))
}

/// All `<kind>_NNN.fmrc` files in `dir`, in index order.
pub fn read_trajectories(dir: &Path, kind: &str) -> Result<Vec<Trajectory>, CliError> {
    let mut out = Vec::new();
    loop {
        let p = trajectory_file(dir, kind, out.len());
        if !p.exists() {
            break;
        }
        out.push(read_trajectory(&p)?);
    }
    if out.is_empty() {
        return Err(CliError::Input(format!(
            "no {kind} trajectories in {} (run `fmrc simulate` first)",
            dir.display()
        )));
    }
    Ok(out)
}
