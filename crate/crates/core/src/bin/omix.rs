//! `omix` command-line tool.
//!
//! Exit codes: 0 success, 2 usage or format problems, 3 numeric failure or
//! aborted estimation.

use std::alloc::{GlobalAlloc, Layout, System};
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};

use clap::{Args, Parser, Subcommand};
use omix::bench::bench_fit;
use omix::datagen::{make_cohort, sample_mixture, AnomalySpec};
use omix::error::{Error, Result};
use omix::fvs1;
use omix::mixture::{Dataset, Family, MixtureModel};
use omix::model_io;
use omix::online::{EmConfig, LearningRateSchedule, StepOutcome};
use omix::scoring::{
    aggregate_subject, calibrate_threshold, classify_subjects, gmean, label, score_dataset, CalibrationSource,
    CutoffStrategy, Threshold,
};
use omix::selection::{fit_k_range, slope_heuristic, Fitter, SelectionConfig};
use omix::source::{open_source, read_all, PrefetchSource};

/// Counts live heap bytes so `fit --bench` can report a peak.
struct TrackingAlloc;

static LIVE: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);

unsafe impl GlobalAlloc for TrackingAlloc {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = unsafe { System.alloc(layout) };
        if !p.is_null() {
            let now = LIVE.fetch_add(layout.size(), Ordering::Relaxed) + layout.size();
            PEAK.fetch_max(now, Ordering::Relaxed);
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        unsafe { System.dealloc(ptr, layout) };
        LIVE.fetch_sub(layout.size(), Ordering::Relaxed);
    }
}

#[global_allocator]
static GLOBAL: TrackingAlloc = TrackingAlloc;

#[derive(Parser)]
#[command(name = "omix", version, about = "Streaming mixture models for anomaly detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a mixture in one pass over an FVS1 or CSV file.
    Fit(FitArgs),
    /// Score samples against a model and label the abnormal ones.
    Score(ScoreArgs),
    /// Compute the decision threshold for a false-positive rate.
    Calibrate(CalibrateArgs),
    /// Draw samples from a model into an FVS1 file.
    Simulate(SimulateArgs),
    /// Generate a synthetic cohort of subjects with injected anomalies.
    Cohort(CohortArgs),
    /// Choose the number of components with the slope heuristic.
    SelectK(SelectArgs),
    /// Per-subject abnormal fractions and subject classification.
    Report(ReportArgs),
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    family: Family,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 256)]
    batch: usize,
    #[arg(long, default_value_t = 4096)]
    buffer: usize,
    #[arg(long, default_value_t = 0.6)]
    rho: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Write a JSON cost report to this path.
    #[arg(long)]
    bench: Option<PathBuf>,
    /// Write "step gamma batch_ll" lines here instead of stderr.
    #[arg(long)]
    progress: Option<PathBuf>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct ThresholdArgs {
    /// Fixed threshold; `inf` labels everything abnormal.
    #[arg(long, conflicts_with = "calibrate")]
    tau: Option<f64>,
    /// `alpha,PATH`: calibrate on held-out normal data.
    #[arg(long)]
    calibrate: Option<String>,
}

impl ThresholdArgs {
    fn resolve(&self, model: &MixtureModel) -> Result<f64> {
        match (&self.tau, &self.calibrate) {
            (Some(t), None) if !t.is_nan() => Ok(*t),
            (None, Some(spec)) => {
                let (alpha, path) = spec
                    .split_once(',')
                    .ok_or_else(|| Error::Usage("--calibrate expects alpha,PATH".into()))?;
                let alpha: f64 = alpha
                    .trim()
                    .parse()
                    .map_err(|_| Error::Usage(format!("bad alpha '{alpha}'")))?;
                let data = load_data(Path::new(path.trim()))?;
                check_dim(model, &data)?;
                Ok(calibrate_threshold(model, alpha, CalibrationSource::Data(&data))?.tau)
            }
            _ => Err(Error::Usage("give exactly one of --tau or --calibrate".into())),
        }
    }
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    threshold: ThresholdArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    alpha: f64,
    /// Held-out normal samples; without it the model is simulated.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 50_000)]
    simulate: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write the generating component of each row, one per line.
    #[arg(long)]
    labels: Option<PathBuf>,
}

#[derive(Args)]
struct CohortArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    per_group: usize,
    #[arg(long)]
    voxels: usize,
    /// Comma-separated anomaly amplitude per group; 0 is a control group.
    #[arg(long, value_delimiter = ',')]
    amplitudes: Vec<f64>,
    #[arg(long, default_value_t = 0.1)]
    fraction: f64,
    /// Comma-separated shift vector (one entry per feature).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    shift: Vec<f64>,
    /// Comma-separated zero-based feature indices the shift applies to.
    #[arg(long, value_delimiter = ',')]
    dims: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    family: Family,
    #[arg(long, default_value_t = 1)]
    k_min: usize,
    #[arg(long)]
    k_max: usize,
    #[arg(long, default_value_t = 3)]
    restarts: usize,
    #[arg(long, default_value_t = 0.5)]
    fit_fraction: f64,
    /// Use the online fitter instead of batch EM for each K.
    #[arg(long)]
    online: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the K / penalty / log-likelihood curve here.
    #[arg(long)]
    curve: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    model: PathBuf,
    /// Tab-separated: subject_id, group, data path, truth path. Group 0 is
    /// the control group.
    #[arg(long)]
    manifest: PathBuf,
    #[command(flatten)]
    threshold: ThresholdArgs,
    /// Fixed subject cutoff on the abnormal fraction instead of the g-mean sweep.
    #[arg(long)]
    cutoff: Option<f64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let res = match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Score(a) => cmd_score(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Cohort(a) => cmd_cohort(a),
        Command::SelectK(a) => cmd_select_k(a),
        Command::Report(a) => cmd_report(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("omix: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_data(path: &Path) -> Result<Dataset> {
    let data = read_all(&mut open_source(path)?)?;
    if data.is_empty() {
        return Err(Error::Data(format!("{} holds no samples", path.display())));
    }
    Ok(data)
}

fn check_dim(model: &MixtureModel, data: &Dataset) -> Result<()> {
    if model.dim() != data.dim() {
        return Err(Error::Usage(format!("model has M = {}, data has M = {}", model.dim(), data.dim())));
    }
    Ok(())
}

fn cmd_fit(a: FitArgs) -> Result<()> {
    let config = EmConfig {
        batch_size: a.batch,
        buffer_size: a.buffer,
        schedule: LearningRateSchedule::new(a.rho, 1.0)?,
        seed: a.seed,
        ..EmConfig::new(a.family, a.k)
    };
    config.validate()?;
    let source = PrefetchSource::spawn(open_source(&a.input)?, a.batch.max(1), 2)?;
    let mut log: Box<dyn Write> = match (&a.progress, a.quiet) {
        (Some(p), _) => Box::new(BufWriter::new(File::create(p)?)),
        (None, true) => Box::new(io::sink()),
        (None, false) => Box::new(BufWriter::new(io::stderr().lock())),
    };
    let mut log_err = None;
    let progress = |o: &StepOutcome| {
        if log_err.is_none() {
            if let Err(e) = writeln!(log, "{}", o.progress_line()) {
                log_err = Some(e);
            }
        }
    };
    PEAK.store(LIVE.load(Ordering::Relaxed), Ordering::Relaxed);
    let (report, mut bench) = bench_fit(source, &config, progress)?;
    if let Some(e) = log_err {
        return Err(e.into());
    }
    log.flush()?;
    model_io::save(&report.model, &a.out)?;
    if let Some(path) = a.bench {
        bench.peak_tracked_alloc_bytes = Some(PEAK.load(Ordering::Relaxed) as u64);
        let json = serde_json::to_string_pretty(&bench).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(path, json + "\n")?;
    }
    Ok(())
}

fn cmd_score(a: ScoreArgs) -> Result<()> {
    let model = model_io::load(&a.model)?;
    let data = load_data(&a.input)?;
    check_dim(&model, &data)?;
    let tau = a.threshold.resolve(&model)?;
    let scores = score_dataset(&model, &data)?;
    let labels = label(&scores, tau);
    let mut out = BufWriter::new(File::create(&a.out)?);
    writeln!(out, "# index score label (tau {tau:?})")?;
    for (i, (s, l)) in scores.iter().zip(&labels).enumerate() {
        writeln!(out, "{i} {s:?} {}", u8::from(*l))?;
    }
    out.flush()?;
    Ok(())
}

fn print_threshold(t: &Threshold) -> Result<()> {
    let mut out = io::stdout().lock();
    writeln!(out, "tau {:?}", t.tau)?;
    writeln!(out, "alpha {:?}", t.alpha)?;
    writeln!(out, "mode {}", t.mode)?;
    writeln!(out, "n {}", t.n_used)?;
    Ok(())
}

fn cmd_calibrate(a: CalibrateArgs) -> Result<()> {
    let model = model_io::load(&a.model)?;
    let t = match a.data {
        Some(p) => {
            let data = load_data(&p)?;
            check_dim(&model, &data)?;
            calibrate_threshold(&model, a.alpha, CalibrationSource::Data(&data))?
        }
        None => calibrate_threshold(&model, a.alpha, CalibrationSource::Simulate { n: a.simulate, seed: a.seed })?,
    };
    print_threshold(&t)
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    if a.n == 0 {
        return Err(Error::Usage("--n must be at least 1".into()));
    }
    let model = model_io::load(&a.model)?;
    let (data, comps) = sample_mixture(&model, a.n, a.seed)?;
    fvs1::write_dataset_file(&a.out, &data)?;
    if let Some(p) = a.labels {
        let mut out = BufWriter::new(File::create(p)?);
        for c in comps {
            writeln!(out, "{c}")?;
        }
        out.flush()?;
    }
    Ok(())
}

fn write_mask(path: &Path, mask: &[bool]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for &m in mask {
        writeln!(out, "{}", u8::from(m))?;
    }
    out.flush()?;
    Ok(())
}

fn read_mask(path: &Path) -> Result<Vec<bool>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, l)| match l {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(Error::Format(format!("{} line {}: expected 0 or 1", path.display(), i + 1))),
        })
        .collect()
}

fn cmd_cohort(a: CohortArgs) -> Result<()> {
    let model = model_io::load(&a.model)?;
    let template = AnomalySpec { fraction: a.fraction, shift: a.shift, dims: a.dims, amplitude: 1.0 };
    let cohort = make_cohort(&model, a.per_group, a.voxels, &a.amplitudes, &template, a.seed)?;
    fs::create_dir_all(&a.out_dir)?;
    let mut manifest = BufWriter::new(File::create(a.out_dir.join("manifest.tsv"))?);
    writeln!(manifest, "# subject_id\tgroup\tdata\ttruth")?;
    for s in &cohort {
        let data = format!("{}.fvs1", s.id);
        let truth = format!("{}.truth", s.id);
        fvs1::write_dataset_file(a.out_dir.join(&data), &s.data)?;
        write_mask(&a.out_dir.join(&truth), &s.truth)?;
        writeln!(manifest, "{}\t{}\t{data}\t{truth}", s.id, s.group)?;
    }
    manifest.flush()?;
    Ok(())
}

fn cmd_select_k(a: SelectArgs) -> Result<()> {
    if a.k_min == 0 || a.k_max < a.k_min {
        return Err(Error::Usage("need 1 <= --k-min <= --k-max".into()));
    }
    let data = load_data(&a.input)?;
    let cfg = SelectionConfig {
        restarts: a.restarts,
        seed: a.seed,
        fitter: if a.online { Fitter::Online } else { Fitter::Batch },
        ..SelectionConfig::new(a.family)
    };
    let ks: Vec<usize> = (a.k_min..=a.k_max).collect();
    let curve = fit_k_range(&data, &ks, &cfg)?;
    if let Some(p) = &a.curve {
        fs::write(p, curve.to_text())?;
    }
    let r = slope_heuristic(&curve, a.fit_fraction)?;
    let mut out = io::stdout().lock();
    write!(out, "{}", curve.to_text())?;
    writeln!(out, "kappa {:?}", r.kappa)?;
    writeln!(out, "k_star {}", r.k_star)?;
    Ok(())
}

struct ManifestRow {
    id: String,
    group: usize,
    data: PathBuf,
    truth: Option<PathBuf>,
}

fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let base = path.parent().unwrap_or(Path::new("."));
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = t.split('\t').collect();
        if f.len() < 3 || f.len() > 4 {
            return Err(Error::Format(format!("manifest line {}: expected 3 or 4 tab-separated fields", i + 1)));
        }
        let group = f[1]
            .parse()
            .map_err(|_| Error::Format(format!("manifest line {}: bad group '{}'", i + 1, f[1])))?;
        rows.push(ManifestRow {
            id: f[0].to_string(),
            group,
            data: base.join(f[2]),
            truth: f.get(3).filter(|s| !s.is_empty()).map(|s| base.join(s)),
        });
    }
    if rows.is_empty() {
        return Err(Error::Format("manifest lists no subjects".into()));
    }
    Ok(rows)
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    let model = model_io::load(&a.model)?;
    let tau = a.threshold.resolve(&model)?;
    let rows = read_manifest(&a.manifest)?;
    let mut out = io::stdout().lock();
    writeln!(out, "# subject_id group n_voxels n_abnormal fraction voxel_gmean")?;
    let mut summaries = Vec::with_capacity(rows.len());
    for r in &rows {
        let data = load_data(&r.data)?;
        check_dim(&model, &data)?;
        let labels = label(&score_dataset(&model, &data)?, tau);
        let mut s = aggregate_subject(&labels, &r.id)?;
        s.group_label = Some(r.group.to_string());
        let voxel_g = match &r.truth {
            Some(p) => {
                let truth = read_mask(p)?;
                if truth.len() != labels.len() {
                    return Err(Error::Format(format!("{}: truth length does not match the data", p.display())));
                }
                match gmean(&labels, &truth) {
                    Ok(g) => format!("{g:?}"),
                    Err(Error::UndefinedMetric(_)) => "NA".into(),
                    Err(e) => return Err(e),
                }
            }
            None => "NA".into(),
        };
        writeln!(out, "{} {} {} {} {:?} {voxel_g}", s.subject_id, r.group, s.n_voxels, s.n_abnormal, s.fraction)?;
        summaries.push(s);
    }
    let truth: Vec<bool> = rows.iter().map(|r| r.group != 0).collect();
    let strategy = a.cutoff.map_or(CutoffStrategy::MaximizeGmean, CutoffStrategy::Fixed);
    let c = classify_subjects(&summaries, &truth, strategy)?;
    writeln!(out, "cutoff {:?}", c.cutoff)?;
    writeln!(out, "gmean {:?}", c.gmean)?;
    Ok(())
}
