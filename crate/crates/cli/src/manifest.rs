//! Run directories: lock, data files and the manifest that lists them.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::pipeline::{self, describe, CheckOutcome, Criterion, Status};
use crate::{io_err, load_config, CliError, EXIT_CHECK_FAILED, EXIT_NO_CONVERGENCE, EXIT_PASS};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const LOCK_FILE: &str = "fraclab.lock";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub name: String,
    pub config: String,
    pub config_sha256: String,
    pub versions: BTreeMap<String, String>,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub threads: usize,
    pub exit_code: i32,
    pub files: Vec<FileEntry>,
    pub checks: Vec<Criterion>,
}

impl RunManifest {
    pub fn read(dir: &Path) -> Result<Self, String> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != Status::Fail)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Exclusive ownership of a run directory for the lifetime of the value.
struct RunLock(PathBuf);

impl RunLock {
    fn acquire(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id()).map_err(io_err(&path))?;
                Ok(RunLock(path))
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::Locked(dir.to_path_buf())),
            Err(e) => Err(CliError::Io { path, source: e }),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

struct Writer<'a> {
    dir: &'a Path,
    files: Vec<FileEntry>,
}

impl Writer<'_> {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(io_err(&path))?;
        self.files.push(FileEntry { path: name.to_string(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64 });
        Ok(())
    }

    fn outcome(&mut self, o: &CheckOutcome) -> Result<(), CliError> {
        for (name, bytes) in &o.files {
            self.write(name, bytes)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub dir: PathBuf,
    pub manifest: RunManifest,
}

/// Executes a config: solve, checks, data files and manifest.
pub fn run(config: &Path, out: Option<&Path>, threads: usize) -> Result<RunResult, CliError> {
    let started = unix_now();
    let (cfg, text) = load_config(config)?;
    let dir = match (out, &cfg.output.dir) {
        (Some(d), _) => d.to_path_buf(),
        (None, Some(d)) => d.clone(),
        (None, None) => PathBuf::from("runs").join(&cfg.name),
    };
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let _lock = RunLock::acquire(&dir)?;
    let mut writer = Writer { dir: &dir, files: vec![] };
    writer.write("config.cfg", text.as_bytes())?;

    eprintln!("[{}] solving on {}", cfg.name, dir.display());
    let solved = pipeline::solve(&cfg);
    let solve = pipeline::solve_outcome(&cfg, &solved);
    writer.outcome(&solve)?;
    for c in &solve.criteria {
        eprintln!("  {}", describe(c));
    }
    let mut criteria = solve.criteria.clone();
    let converged = matches!(&solved, Ok((_, r)) if r.converged);
    let exit_code = match solved {
        Ok((v, _)) if converged => {
            let outcomes = pipeline::run_checks(&cfg, &v, threads, |o| {
                for c in &o.criteria {
                    eprintln!("  {}", describe(c));
                }
            });
            for o in &outcomes {
                writer.outcome(o)?;
                criteria.extend(o.criteria.iter().cloned());
            }
            if criteria.iter().any(|c| c.status == Status::Fail) {
                EXIT_CHECK_FAILED
            } else {
                EXIT_PASS
            }
        }
        _ => EXIT_NO_CONVERGENCE,
    };

    let mut versions = BTreeMap::new();
    versions.insert("fraclab-core".to_string(), fraclab_core::VERSION.to_string());
    versions.insert("fraclab-cli".to_string(), env!("CARGO_PKG_VERSION").to_string());
    let manifest = RunManifest {
        name: cfg.name.clone(),
        config: config.display().to_string(),
        config_sha256: sha256_hex(text.as_bytes()),
        versions,
        started_unix: started,
        finished_unix: unix_now(),
        threads,
        exit_code,
        files: writer.files,
        checks: criteria,
    };
    let path = dir.join(MANIFEST_FILE);
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    fs::write(&path, json).map_err(io_err(&path))?;
    Ok(RunResult { dir, manifest })
}
