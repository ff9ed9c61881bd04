//! `choreo`: batch runs from the polygon to the figure eight, with export,
//! plotting and stability reports.

mod export;
mod plot;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use choreo_core::archive::{Archive, RunStatus};
use choreo_core::continuation::ContinuationConfig;
use choreo_core::model::ModelParams;
use choreo_core::run::{configure_threads, run_archived, stability_for_archive, thread_budget, RunOptions};
use choreo_core::stability::{inertial_samples, monodromy, rotating_samples, MonodromySettings};

use export::{Format, Frame, Selector};

#[derive(Parser)]
#[command(name = "choreo", version, about = "Continuation of n-body choreographies from the regular polygon to the figure eight")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Follow the vertical family off the polygon, switch branches and
    /// stop at the figure eight.
    Run(RunArgs),
    /// Write one archived orbit as CSV samples or Fourier coefficients.
    Export(ExportArgs),
    /// Render the bifurcation diagram and orbit pictures of an archive.
    Plot(PlotArgs),
    /// Floquet multipliers and Morse indices for an archive.
    Stability(StabilityArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Number of bodies (odd, at least 3).
    #[arg(long)]
    n: Option<usize>,
    /// Branch index of the vertical family.
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Fourier truncation order.
    #[arg(long)]
    m: Option<usize>,
    /// Initial pseudo-arclength step.
    #[arg(long)]
    ds: Option<f64>,
    #[arg(long)]
    max_steps: Option<usize>,
    /// Compute Morse indices along the branch and multipliers at the eight.
    #[arg(long)]
    with_stability: bool,
    /// Records between Morse index evaluations.
    #[arg(long, default_value_t = 10)]
    stride: usize,
    /// Render the diagram and the eight when done.
    #[arg(long)]
    plot: bool,
    /// Archive directory (default: run-n<N>-m<M>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Continue the run recorded by this manifest (`--max-steps` may be
    /// raised; everything else comes from the manifest).
    #[arg(long, value_name = "MANIFEST", conflicts_with_all = ["n", "m", "ds", "out"])]
    resume: Option<PathBuf>,
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Args)]
struct ExportArgs {
    /// Archive directory.
    archive: PathBuf,
    /// Step number or `eight`.
    #[arg(long, default_value = "eight")]
    step: Selector,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long, value_enum, default_value_t = Frame::Rotating)]
    frame: Frame,
    #[arg(long, default_value_t = 1024)]
    samples: usize,
    /// Output file (default: inside the archive).
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// Archive directory.
    archive: PathBuf,
    /// Orbits to draw besides the diagram (step numbers or `eight`).
    #[arg(long, value_delimiter = ',')]
    steps: Vec<Selector>,
    #[arg(long, default_value_t = 512)]
    samples: usize,
}

#[derive(Args)]
struct StabilityArgs {
    /// Archive directory.
    archive: PathBuf,
    /// Only this orbit (step number or `eight`); otherwise the whole profile.
    #[arg(long)]
    step: Option<Selector>,
    #[arg(long, default_value_t = 10)]
    stride: usize,
    #[arg(long, default_value_t = 1e-10)]
    rtol: f64,
    #[arg(long, default_value_t = 1e-12)]
    atol: f64,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let threads = thread_budget();
    configure_threads(threads);
    match cli.command {
        Command::Run(args) => cmd_run(args, threads),
        Command::Export(args) => cmd_export(args),
        Command::Plot(args) => cmd_plot(args),
        Command::Stability(args) => cmd_stability(args, threads),
    }
}

fn cmd_run(args: RunArgs, threads: usize) -> Result<()> {
    let (dir, params, config, resume) = match &args.resume {
        Some(manifest_path) => {
            let archive = Archive::from_manifest_path(manifest_path)?;
            let manifest = archive.manifest()?;
            let mut config = manifest.config.clone();
            if let Some(steps) = args.max_steps {
                config.max_steps = steps;
            }
            (archive.dir.clone(), manifest.params()?, config, true)
        }
        None => {
            let (Some(n), Some(m)) = (args.n, args.m) else {
                bail!("--n and --m are required unless --resume is given");
            };
            let params = ModelParams::new(n, args.k, m).context("invalid parameters")?;
            if m < 8 {
                bail!("invalid parameters: truncation order m = {m} is below 8");
            }
            let mut config = ContinuationConfig::default();
            if let Some(ds) = args.ds {
                config.ds = ds;
            }
            if let Some(steps) = args.max_steps {
                config.max_steps = steps;
            }
            config.validate().context("invalid parameters")?;
            let dir = args.out.clone().unwrap_or_else(|| PathBuf::from(format!("run-n{n}-m{m}")));
            (dir, params, config, false)
        }
    };
    let options = RunOptions {
        with_stability: args.with_stability,
        stability_stride: args.stride,
        stability: MonodromySettings::default(),
        threads,
        verbose: !args.quiet,
    };
    let outcome = match run_archived(&dir, &params, &config, resume, &options) {
        Ok(o) => o,
        Err(e) => {
            let stage = match Archive::open(&dir).and_then(|a| a.manifest()) {
                Ok(m) => match m.status {
                    RunStatus::Failed { stage, .. } => stage,
                    _ => "run".into(),
                },
                Err(_) => "run".into(),
            };
            return Err(anyhow::Error::new(e).context(format!("stage `{stage}` failed ({})", dir.display())));
        }
    };
    let manifest = &outcome.manifest;
    let eight = manifest.eight.as_ref().expect("a finished run has an eight");
    if !args.quiet {
        println!("archive     {}", dir.display());
        println!("records     {}", outcome.result.bracket.1 + 1);
        println!("switch step {}", manifest.switch_step.map_or("-".into(), |s| s.to_string()));
        let class = match (eight.p, eight.q) {
            (Some(p), Some(q)) => format!("({p},{q})"),
            _ => "unclassified".into(),
        };
        println!("eight       ω = {:.12}  class {class}  residual {:.2e}", eight.omega, eight.residual);
        if let Some(report) = &outcome.stability {
            if let Some(m) = &report.eight {
                println!("stability   morse index {}  max||λ|-1| {:.2e}", m.morse_index, m.max_modulus_defect);
            }
        }
        println!("wall clock  {:.1} s", manifest.wall_clock_seconds);
    }
    if args.plot {
        let written = render_plots(&dir, &[Selector::Eight], 512)?;
        let archive = Archive::open(&dir)?;
        let mut manifest = archive.manifest()?;
        manifest.plots = written.iter().map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned()).collect();
        archive.write_manifest(&manifest)?;
    }
    Ok(())
}

fn cmd_export(args: ExportArgs) -> Result<()> {
    let archive = Archive::open(&args.archive)?;
    let params = archive.manifest()?.params()?;
    let state = export::load(&archive, &args.step)?;
    if args.samples == 0 {
        bail!("--samples must be positive");
    }
    let default_name = match args.format {
        Format::Csv => format!("orbit_{}_{}.csv", args.step, if args.frame == Frame::Rotating { "rotating" } else { "inertial" }),
        Format::Coeffs => format!("orbit_{}_coeffs.csv", args.step),
    };
    let path = args.output.unwrap_or_else(|| args.archive.join(default_name));
    let file = fs::File::create(&path).with_context(|| format!("cannot write {}", path.display()))?;
    match args.format {
        Format::Csv => export::write_samples(file, &state, &params, args.frame, args.samples)?,
        Format::Coeffs => export::write_coeffs(file, &state)?,
    }
    println!("{}", path.display());
    Ok(())
}

fn cmd_plot(args: PlotArgs) -> Result<()> {
    if !args.archive.is_dir() {
        bail!("{} is not a directory", args.archive.display());
    }
    let steps = if args.steps.is_empty() { vec![Selector::Eight] } else { args.steps };
    for p in render_plots(&args.archive, &steps, args.samples)? {
        println!("{}", p.display());
    }
    Ok(())
}

/// Writes `diagram.svg` and one picture per selected orbit that exists.
/// A directory without a readable archive still gets empty axes.
fn render_plots(dir: &Path, steps: &[Selector], samples: usize) -> Result<Vec<PathBuf>> {
    let archive = Archive::open(dir).ok();
    let manifest = archive.as_ref().and_then(|a| a.manifest().ok());
    let records = archive.as_ref().and_then(|a| a.records().ok()).unwrap_or_default();
    let title = match &manifest {
        Some(m) => format!("n = {}, k = {}, m = {}", m.n, m.k, m.m),
        None => "empty archive".into(),
    };
    let eight = manifest.as_ref().and_then(|m| m.eight.clone());
    let mut written = Vec::new();
    let path = dir.join("diagram.svg");
    fs::write(&path, plot::diagram(&records, eight.as_ref(), &title))?;
    written.push(path);
    let (Some(archive), Some(manifest)) = (archive, manifest) else {
        return Ok(written);
    };
    let params = manifest.params()?;
    for which in steps {
        let Ok(state) = export::load(&archive, which) else {
            eprintln!("no orbit for {which}; skipped");
            continue;
        };
        let curves = if *which == Selector::Eight {
            let window = export::time_window(&state, &params, Frame::Inertial);
            inertial_samples(&state.u, state.omega, &params, window, samples)
        } else {
            rotating_samples(&state.u, &params, samples)
        };
        let frame = if *which == Selector::Eight { "inertial" } else { "rotating" };
        let title = format!("{title}, orbit {which} ({frame} frame), ω = {:.6}", state.omega);
        let path = dir.join(format!("orbit_{which}.svg"));
        fs::write(&path, plot::orbit(&curves, &title))?;
        written.push(path);
    }
    Ok(written)
}

fn cmd_stability(args: StabilityArgs, threads: usize) -> Result<()> {
    let archive = Archive::open(&args.archive)?;
    let params = archive.manifest()?.params()?;
    let settings = MonodromySettings { rtol: args.rtol, atol: args.atol, ..Default::default() };
    match &args.step {
        Some(which) => {
            let state = export::load(&archive, which)?;
            let r = monodromy(&state.u, state.omega, &params, &settings)
                .with_context(|| format!("monodromy of orbit {which}"))?;
            println!("orbit {which}: ω = {:.12}, period {:.12}", state.omega, r.period);
            println!("morse index {}", r.morse_index);
            println!("|det M - 1| {:.3e}  max||λ|-1| {:.3e}  closure {:.3e}  energy drift {:.3e}", r.symplectic_defect, r.max_modulus_defect, r.closure_defect, r.energy_drift);
            for l in &r.multipliers {
                println!("  {:+.12e} {:+.12e}i  |λ| = {:.12}", l.re, l.im, l.norm());
            }
        }
        None => {
            let report = stability_for_archive(&archive, args.stride, &settings, threads)?;
            for (step, index) in &report.profile {
                println!("{step:>6} {}", index.map_or("failed".to_string(), |i| i.to_string()));
            }
            if let Some(e) = &report.eight {
                println!(" eight {}  (max||λ|-1| {:.3e})", e.morse_index, e.max_modulus_defect);
            }
            let mut manifest = archive.manifest()?;
            manifest.stability_file = Some(choreo_core::archive::STABILITY_FILE.into());
            archive.write_manifest(&manifest)?;
        }
    }
    Ok(())
}
