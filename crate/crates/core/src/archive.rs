//! On-disk record of a run: a JSON manifest, one JSON line per accepted
//! point, one coefficient file per point and a checkpoint to resume from.
//!
//! Floats are written with shortest round-trip formatting, so a resumed run
//! reads back bit-identical states.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::continuation::{BranchRecord, ContinuationConfig};
use crate::error::{ChoreoError, Result};
use crate::model::ModelParams;
use crate::pipeline::{state_key, BranchSink, Checkpoint};
use crate::stability::MonodromyResult;
use crate::state::StateVector;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const BRANCH_FILE: &str = "branch.jsonl";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const EIGHT_FILE: &str = "eight.coeffs";
pub const STABILITY_FILE: &str = "stability.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    EightReached,
    Failed { stage: String, message: String },
}

/// The converged eight as recorded in the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EightSummary {
    pub omega: f64,
    pub p: Option<i64>,
    pub q: Option<i64>,
    pub residual: f64,
    pub newton_iterations: usize,
    /// Steps of the switched branch that bracket the target frequency.
    pub bracket: (usize, usize),
    pub amplitude: f64,
    pub spectral_tail: f64,
    pub file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub n: usize,
    pub k: usize,
    pub m: usize,
    pub config: ContinuationConfig,
    pub status: RunStatus,
    pub branch_file: String,
    pub checkpoint_file: String,
    pub eight: Option<EightSummary>,
    pub stability_file: Option<String>,
    pub plots: Vec<String>,
    /// Step of the first point on the switched branch.
    pub switch_step: Option<usize>,
    pub notes: Vec<String>,
    pub tool_version: String,
    pub wall_clock_seconds: f64,
}

impl RunManifest {
    pub fn new(params: &ModelParams, config: &ContinuationConfig) -> Self {
        Self {
            n: params.n,
            k: params.k,
            m: params.m,
            config: config.clone(),
            status: RunStatus::Running,
            branch_file: BRANCH_FILE.into(),
            checkpoint_file: CHECKPOINT_FILE.into(),
            eight: None,
            stability_file: None,
            plots: Vec::new(),
            switch_step: None,
            notes: Vec::new(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            wall_clock_seconds: 0.0,
        }
    }

    pub fn params(&self) -> Result<ModelParams> {
        ModelParams::new(self.n, self.k, self.m)
    }
}

/// Morse indices along the branch and the full multiplier data at the eight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub settings: crate::stability::MonodromySettings,
    pub stride: usize,
    /// `(step, index)`; `None` where the computation failed.
    pub profile: Vec<(usize, Option<usize>)>,
    pub eight: Option<MonodromyResult>,
}

/// Writes `value` to `path` through a temporary file and a rename, so a
/// crash never leaves a half-written file behind.
pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        serde_json::to_writer_pretty(&mut w, value)?;
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| ChoreoError::Archive(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

/// A run directory.
#[derive(Clone, Debug)]
pub struct Archive {
    pub dir: PathBuf,
}

impl Archive {
    /// Creates `dir` with a fresh manifest and an empty branch file.
    pub fn create(dir: &Path, manifest: &RunManifest) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let archive = Self { dir: dir.to_path_buf() };
        File::create(archive.path(BRANCH_FILE))?;
        let stale = archive.path(CHECKPOINT_FILE);
        if stale.exists() {
            fs::remove_file(stale)?;
        }
        archive.write_manifest(manifest)?;
        Ok(archive)
    }

    /// Opens an existing run directory.
    pub fn open(dir: &Path) -> Result<Self> {
        let archive = Self { dir: dir.to_path_buf() };
        if !archive.path(MANIFEST_FILE).is_file() {
            return Err(ChoreoError::Archive(format!("no {MANIFEST_FILE} in {}", dir.display())));
        }
        Ok(archive)
    }

    /// Opens the run whose manifest is at `manifest`.
    pub fn from_manifest_path(manifest: &Path) -> Result<Self> {
        let dir = manifest.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        Self::open(dir)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn manifest(&self) -> Result<RunManifest> {
        read_json(&self.path(MANIFEST_FILE))
    }

    pub fn write_manifest(&self, manifest: &RunManifest) -> Result<()> {
        write_json_atomic(&self.path(MANIFEST_FILE), manifest)
    }

    pub fn records(&self) -> Result<Vec<BranchRecord>> {
        let path = self.path(BRANCH_FILE);
        if !path.exists() {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        for (i, line) in BufReader::new(File::open(&path)?).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            out.push(
                serde_json::from_str(&line)
                    .map_err(|e| ChoreoError::Archive(format!("{BRANCH_FILE} line {}: {e}", i + 1)))?,
            );
        }
        Ok(out)
    }

    pub fn write_records(&self, records: &[BranchRecord]) -> Result<()> {
        let tmp = self.path("branch.tmp");
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            for r in records {
                serde_json::to_writer(&mut w, r)?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
        }
        fs::rename(tmp, self.path(BRANCH_FILE))?;
        Ok(())
    }

    pub fn append_record(&self, record: &BranchRecord) -> Result<()> {
        let mut file = OpenOptions::new().append(true).create(true).open(self.path(BRANCH_FILE))?;
        let mut line = serde_json::to_vec(record)?;
        line.push(b'\n');
        file.write_all(&line)?;
        Ok(())
    }

    pub fn write_state(&self, step: usize, state: &StateVector) -> Result<()> {
        write_json_atomic(&self.path(&state_key(step)), state)
    }

    pub fn state(&self, step: usize) -> Result<StateVector> {
        let path = self.path(&state_key(step));
        if !path.exists() {
            return Err(ChoreoError::Archive(format!("no orbit stored for step {step}")));
        }
        read_json(&path)
    }

    pub fn write_eight(&self, state: &StateVector) -> Result<()> {
        write_json_atomic(&self.path(EIGHT_FILE), state)
    }

    pub fn eight(&self) -> Result<StateVector> {
        let path = self.path(EIGHT_FILE);
        if !path.exists() {
            return Err(ChoreoError::Archive("the run has not reached the eight".into()));
        }
        read_json(&path)
    }

    pub fn checkpoint(&self) -> Result<Checkpoint> {
        read_json(&self.path(CHECKPOINT_FILE))
    }

    pub fn stability(&self) -> Result<Option<StabilityReport>> {
        let path = self.path(STABILITY_FILE);
        if path.exists() {
            Ok(Some(read_json(&path)?))
        } else {
            Ok(None)
        }
    }

    pub fn write_stability(&self, report: &StabilityReport) -> Result<()> {
        write_json_atomic(&self.path(STABILITY_FILE), report)
    }

    /// Drops records past the checkpoint, which a crash between writes can
    /// leave behind, and returns the checkpoint.
    pub fn prepare_resume(&self) -> Result<Checkpoint> {
        let cp = self.checkpoint()?;
        let records: Vec<BranchRecord> = self.records()?.into_iter().filter(|r| r.step <= cp.step).collect();
        if records.last().map(|r| r.step) != Some(cp.step) {
            return Err(ChoreoError::Archive(format!("checkpoint step {} has no matching record", cp.step)));
        }
        self.write_records(&records)?;
        Ok(cp)
    }
}

/// Sink that archives every accepted point as it is produced.
pub struct ArchiveSink<'a> {
    pub archive: &'a Archive,
    pub notes: Vec<String>,
    pub switch_step: Option<usize>,
    /// Echo notes to stderr.
    pub verbose: bool,
}

impl<'a> ArchiveSink<'a> {
    pub fn new(archive: &'a Archive) -> Self {
        Self { archive, notes: Vec::new(), switch_step: None, verbose: false }
    }
}

impl BranchSink for ArchiveSink<'_> {
    fn accept(&mut self, record: &BranchRecord, state: &StateVector, checkpoint: &Checkpoint) -> Result<()> {
        // State first, record second, checkpoint last: a record is only
        // visible once its orbit is on disk.
        self.archive.write_state(record.step, state)?;
        self.archive.append_record(record)?;
        write_json_atomic(&self.archive.path(CHECKPOINT_FILE), checkpoint)?;
        if record.segment > 0 && self.switch_step.is_none() {
            self.switch_step = Some(record.step);
        }
        Ok(())
    }

    fn note(&mut self, message: &str) {
        if self.verbose {
            eprintln!("{message}");
        }
        self.notes.push(message.to_string());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::polygon_state;

    fn tempdir(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("choreo-archive-{tag}-{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        dir
    }

    fn record(step: usize) -> BranchRecord {
        BranchRecord {
            step,
            segment: 0,
            omega: 0.1 + step as f64 / 3.0,
            arclength: step as f64 * 1e-3,
            amplitude: (step as f64).sqrt() / 7.0,
            det_sign: -1,
            condition: if step == 1 { Some(1.2345678901234567e4) } else { None },
            residual: 1e-13,
            newton_iterations: 3,
            step_size: 1e-3 / 3.0,
            morse_index: None,
            state_ref: state_key(step),
        }
    }

    #[test]
    fn files_round_trip() {
        let dir = tempdir("roundtrip");
        let params = ModelParams::new(3, 2, 6).unwrap();
        let manifest = RunManifest::new(&params, &ContinuationConfig::default());
        let archive = Archive::create(&dir, &manifest).unwrap();
        assert_eq!(archive.manifest().unwrap(), manifest);
        assert!(archive.records().unwrap().is_empty());

        let mut state = polygon_state(&params);
        state.omega = 1.0 / 3.0;
        state.alpha[1] = std::f64::consts::PI * 1e-17;
        let records: Vec<_> = (0..3).map(record).collect();
        for r in &records {
            archive.append_record(r).unwrap();
            archive.write_state(r.step, &state).unwrap();
        }
        assert_eq!(archive.records().unwrap(), records);
        assert_eq!(archive.state(2).unwrap(), state);
        assert!(archive.state(9).is_err());
        assert!(archive.eight().is_err());
        fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn resume_trims_records_past_the_checkpoint() {
        let dir = tempdir("trim");
        let params = ModelParams::new(3, 2, 4).unwrap();
        let archive = Archive::create(&dir, &RunManifest::new(&params, &ContinuationConfig::default())).unwrap();
        let mut sink = ArchiveSink::new(&archive);
        let state = polygon_state(&params);
        let x = state.to_real(&params).unwrap();
        for step in 0..3 {
            let cp = Checkpoint {
                step,
                segment: 0,
                arclength: 0.0,
                ds_next: 1e-3,
                x: x.clone(),
                tangent: x.clone(),
                det_sign: 1,
                branch_point: None,
                side: None,
                switches: 0,
            };
            sink.accept(&record(step), &state, &cp).unwrap();
        }
        // a record whose checkpoint never made it to disk
        archive.append_record(&record(3)).unwrap();
        let cp = archive.prepare_resume().unwrap();
        assert_eq!(cp.step, 2);
        assert_eq!(archive.records().unwrap().len(), 3);
        fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn missing_manifest_is_an_error() {
        let dir = tempdir("missing");
        fs::create_dir_all(&dir).unwrap();
        assert!(Archive::open(&dir).is_err());
        assert!(Archive::from_manifest_path(&dir.join(MANIFEST_FILE)).is_err());
        fs::remove_dir_all(dir).unwrap();
    }
}
