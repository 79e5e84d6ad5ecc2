//! Content-addressed, append-only store of per-instance tile solutions.
//!
//! Each record is one NDJSON line keyed by a SHA-256 over the canonical JSON
//! of every model input. Reopening a store resumes an interrupted run; a
//! torn final line is ignored.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::area::HardwareConfig;
use crate::error::Result;
use crate::tiles::{TileSearchBounds, TileSolution};
use crate::time_model::{MachineConstants, TileConfig, TimeModel};
use crate::workload::{ProblemSize, StencilKernel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreRecord {
    pub key: String,
    pub hw: HardwareConfig,
    pub kernel: String,
    pub size: ProblemSize,
    pub tile: Option<TileConfig>,
    pub k: Option<u32>,
    pub time_s: Option<f64>,
}

impl StoreRecord {
    pub fn solution(&self) -> TileSolution {
        match (self.tile, self.time_s) {
            (Some(tile), Some(time)) => TileSolution::found(tile, time),
            _ => TileSolution::infeasible(),
        }
    }
}

#[derive(Serialize)]
struct KeyInputs<'a> {
    model: String,
    kernel: &'a StencilKernel,
    size: &'a ProblemSize,
    hw: &'a HardwareConfig,
    machine: &'a MachineConstants,
    bounds: &'a TileSearchBounds,
}

/// Store key of one tile optimization.
pub fn instance_key(
    model: &dyn TimeModel,
    kern: &StencilKernel,
    size: &ProblemSize,
    hw: &HardwareConfig,
    mc: &MachineConstants,
    bounds: &TileSearchBounds,
) -> String {
    let inputs = KeyInputs { model: model.id(), kernel: kern, size, hw, machine: mc, bounds };
    // Plain structs with fixed field order serialize deterministically.
    let canonical = serde_json::to_vec(&inputs).expect("key inputs serialize");
    hex::encode(Sha256::digest(&canonical))
}

#[derive(Debug, Default)]
pub struct ResultsStore {
    entries: RwLock<HashMap<String, TileSolution>>,
    writer: Option<Mutex<BufWriter<File>>>,
    path: Option<PathBuf>,
    solves: AtomicU64,
}

impl ResultsStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (creating if needed) an NDJSON store and loads its records.
    pub fn open(path: &Path) -> Result<Self> {
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            for line in reader.lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<StoreRecord>(&line) {
                    Ok(rec) => {
                        entries.insert(rec.key.clone(), rec.solution());
                    }
                    // Interrupted append; the instance will be solved again.
                    Err(_) => continue,
                }
            }
        }
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        let mut file = OpenOptions::new().create(true).append(true).read(true).open(path)?;
        ensure_trailing_newline(&mut file, path)?;
        Ok(ResultsStore {
            entries: RwLock::new(entries),
            writer: Some(Mutex::new(BufWriter::new(file))),
            path: Some(path.to_path_buf()),
            solves: AtomicU64::new(0),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, key: &str) -> Option<TileSolution> {
        self.entries.read().expect("store lock").get(key).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("store lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert(&self, record: StoreRecord) -> Result<()> {
        let solution = record.solution();
        {
            let mut entries = self.entries.write().expect("store lock");
            if entries.contains_key(&record.key) {
                return Ok(());
            }
            entries.insert(record.key.clone(), solution);
        }
        if let Some(writer) = &self.writer {
            let mut line = serde_json::to_vec(&record)?;
            line.push(b'\n');
            let mut w = writer.lock().expect("store writer lock");
            w.write_all(&line)?;
        }
        Ok(())
    }

    pub fn flush(&self) -> Result<()> {
        if let Some(writer) = &self.writer {
            writer.lock().expect("store writer lock").flush()?;
        }
        Ok(())
    }

    pub fn record_solve(&self) {
        self.solves.fetch_add(1, Ordering::Relaxed);
    }

    /// Tile optimizations performed through this handle since it was opened.
    pub fn solve_count(&self) -> u64 {
        self.solves.load(Ordering::Relaxed)
    }
}

impl Drop for ResultsStore {
    fn drop(&mut self) {
        let _ = self.flush();
    }
}

fn ensure_trailing_newline(file: &mut File, path: &Path) -> Result<()> {
    use std::io::{Read, Seek, SeekFrom};
    let len = std::fs::metadata(path)?.len();
    if len == 0 {
        return Ok(());
    }
    file.seek(SeekFrom::Start(len - 1))?;
    let mut last = [0u8; 1];
    file.read_exact(&mut last)?;
    if last[0] != b'\n' {
        file.write_all(b"\n")?;
    }
    Ok(())
}
