//! A complete run written to an archive directory.

use std::path::Path;
use std::time::Instant;

use crate::archive::{Archive, ArchiveSink, EightSummary, RunManifest, RunStatus, StabilityReport, EIGHT_FILE, STABILITY_FILE};
use crate::augmented::set_reference;
use crate::continuation::{residual_norm, ContinuationConfig};
use crate::error::{ChoreoError, Result};
use crate::model::{classify_frequency, ModelParams, DEFAULT_QMAX};
use crate::pipeline::{run_polygon_to_eight, PipelineResult};
use crate::stability::{monodromy, morse_profile, MonodromySettings};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "CHOREO_THREADS";

/// Worker threads: `CHOREO_THREADS` when set to a positive integer, else
/// the available parallelism.
pub fn thread_budget() -> usize {
    let available = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    match std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        Some(n) if n > 0 => n,
        _ => available,
    }
}

/// Applies the thread budget to the dense linear algebra as well.
pub fn configure_threads(threads: usize) {
    let par = if threads <= 1 { faer::Par::Seq } else { faer::Par::rayon(threads) };
    faer::set_global_parallelism(par);
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub with_stability: bool,
    /// Every `stride`-th record gets a Morse index; the eight always does.
    pub stability_stride: usize,
    pub stability: MonodromySettings,
    pub threads: usize,
    pub verbose: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            with_stability: false,
            stability_stride: 10,
            stability: MonodromySettings::default(),
            threads: 1,
            verbose: false,
        }
    }
}

pub struct RunOutcome {
    pub manifest: RunManifest,
    pub result: PipelineResult,
    pub stability: Option<StabilityReport>,
}

fn stage_name(e: &ChoreoError) -> String {
    match e {
        ChoreoError::Stage { stage, .. } => stage.clone(),
        _ => "run".into(),
    }
}

/// Runs the pipeline into `dir`, or resumes the run recorded there when
/// `resume` is set. The manifest records failures with the failing stage.
pub fn run_archived(
    dir: &Path,
    params: &ModelParams,
    config: &ContinuationConfig,
    resume: bool,
    options: &RunOptions,
) -> Result<RunOutcome> {
    let started = Instant::now();
    let (archive, mut manifest, checkpoint) = if resume {
        let archive = Archive::open(dir)?;
        let manifest = archive.manifest()?;
        if manifest.status == RunStatus::EightReached {
            return Err(ChoreoError::Archive("the run already reached the eight; nothing to resume".into()));
        }
        if (manifest.n, manifest.k, manifest.m) != (params.n, params.k, params.m) {
            return Err(ChoreoError::Archive("parameters differ from the archived run".into()));
        }
        let cp = archive.prepare_resume()?;
        let mut manifest = manifest;
        manifest.config = config.clone();
        (archive, manifest, Some(cp))
    } else {
        let manifest = RunManifest::new(params, config);
        (Archive::create(dir, &manifest)?, manifest, None)
    };
    let previous_seconds = manifest.wall_clock_seconds;
    let mut sink = ArchiveSink::new(&archive);
    sink.verbose = options.verbose;
    sink.switch_step = manifest.switch_step;
    let outcome = run_polygon_to_eight(params, config, &mut sink, checkpoint);
    manifest.notes.append(&mut sink.notes);
    manifest.switch_step = sink.switch_step;
    manifest.status = RunStatus::Running;
    let finish = |manifest: &mut RunManifest| manifest.wall_clock_seconds = previous_seconds + started.elapsed().as_secs_f64();
    let result = match outcome {
        Ok(r) => r,
        Err(e) => {
            manifest.status = RunStatus::Failed { stage: stage_name(&e), message: e.to_string() };
            finish(&mut manifest);
            archive.write_manifest(&manifest)?;
            return Err(e);
        }
    };

    let x = result.eight.to_real(params)?;
    let residual = residual_norm(&x, &set_reference(&result.eight)?, params)?;
    let class = classify_frequency(result.eight.omega, params, DEFAULT_QMAX);
    archive.write_eight(&result.eight)?;
    manifest.eight = Some(EightSummary {
        omega: result.eight.omega,
        p: class.map(|c| c.p),
        q: class.map(|c| c.q),
        residual,
        newton_iterations: result.eight_report.iterations,
        bracket: result.bracket,
        amplitude: config.amplitude_measure.evaluate(&result.eight),
        spectral_tail: result.eight.spectral_tail_ratio(),
        file: EIGHT_FILE.into(),
    });
    manifest.status = RunStatus::EightReached;
    finish(&mut manifest);
    archive.write_manifest(&manifest)?;

    let stability = if options.with_stability {
        let report = stability_for_archive(&archive, options.stability_stride, &options.stability, options.threads)?;
        manifest.stability_file = Some(STABILITY_FILE.into());
        finish(&mut manifest);
        archive.write_manifest(&manifest)?;
        Some(report)
    } else {
        None
    };
    Ok(RunOutcome { manifest, result, stability })
}

/// Morse indices of every `stride`-th archived record (and the last one),
/// plus the multipliers at the eight when the run reached it. Fills the
/// `morse_index` fields of the branch file and writes the stability file.
pub fn stability_for_archive(
    archive: &Archive,
    stride: usize,
    settings: &MonodromySettings,
    threads: usize,
) -> Result<StabilityReport> {
    let manifest = archive.manifest()?;
    let params = manifest.params()?;
    let mut records = archive.records()?;
    let stride = stride.max(1);
    let last = records.len().saturating_sub(1);
    let mut orbits = Vec::new();
    for (i, r) in records.iter().enumerate() {
        // the polygon itself is an equilibrium, the profile starts off it
        if r.step == 0 || !(i % stride == 0 || i == last || i == 1) {
            continue;
        }
        let s = archive.state(r.step)?;
        orbits.push((r.step, s.u, s.omega));
    }
    let profile = morse_profile(&orbits, &params, settings, threads);
    for (step, index) in &profile {
        if let Some(r) = records.iter_mut().find(|r| r.step == *step) {
            r.morse_index = *index;
        }
    }
    archive.write_records(&records)?;
    let eight = match archive.eight() {
        Ok(e) => Some(monodromy(&e.u, e.omega, &params, settings)?),
        Err(_) => None,
    };
    let report = StabilityReport { settings: *settings, stride, profile, eight };
    archive.write_stability(&report)?;
    Ok(report)
}
