//! Online EM by stochastic approximation on the sufficient statistics.
//!
//! Each mini-batch moves the statistic towards the batch mean of `s̄`,
//! `s⁽ⁱ⁾ = γ_i · mean(s̄(y; θ⁽ⁱ⁻¹⁾)) + (1 − γ_i) s⁽ⁱ⁻¹⁾`, and the parameters
//! are re-maximized, `θ⁽ⁱ⁾ = θ̄(s⁽ⁱ⁾)`. Retained state is the model, a few
//! statistic records and a sample buffer of fixed size.

use crate::batch::{em_iteration, expected_stats, initial_model, mstep_with_reseed};
use crate::error::{usage, Error, Result};
use crate::estep::{accumulate, EStepWorkspace};
use crate::mixture::{Dataset, Family, MixtureModel};
use crate::mstep::{thetabar, MStepReport, MstOptions};
use crate::source::SampleSource;
use crate::stats::SufficientStats;

/// `γ_i = scale · i^(−ρ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningRateSchedule {
    rho: f64,
    scale: f64,
}

impl Default for LearningRateSchedule {
    fn default() -> Self {
        Self { rho: 0.6, scale: 1.0 }
    }
}

impl LearningRateSchedule {
    /// `rho` must lie in (0.5, 1] and `scale` in (0, 1].
    pub fn new(rho: f64, scale: f64) -> Result<Self> {
        if !(rho > 0.5 && rho <= 1.0) {
            return usage(format!("rho must be in (0.5, 1], got {rho}"));
        }
        if !(scale > 0.0 && scale <= 1.0) {
            return usage(format!("learning-rate scale must be in (0, 1], got {scale}"));
        }
        Ok(Self { rho, scale })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Step size for the `i`-th mini-batch, counting from 1.
    pub fn gamma(&self, i: u64) -> Result<f64> {
        if i == 0 {
            return usage("learning-rate steps are numbered from 1");
        }
        Ok((self.scale * (i as f64).powf(-self.rho)).min(1.0))
    }
}

pub fn gamma_schedule(i: u64, schedule: &LearningRateSchedule) -> Result<f64> {
    schedule.gamma(i)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmConfig {
    pub family: Family,
    pub k: usize,
    pub batch_size: usize,
    /// Samples held for initialization (n₀).
    pub buffer_size: usize,
    pub schedule: LearningRateSchedule,
    pub seed: u64,
    /// Batch EM iterations run on the initialization buffer.
    pub init_iterations: usize,
    /// Per-step limit on the relative change of each ν (MST only).
    pub nu_max_ratio: Option<f64>,
    /// Hold ν fixed at this value (MST only).
    pub fixed_nu: Option<f64>,
    /// Average the statistics over this final fraction of steps and return
    /// θ̄ of the average. Needs a source with a known length.
    pub polyak_fraction: Option<f64>,
    /// Abort after this many consecutive failed M-steps.
    pub max_consecutive_failures: usize,
}

impl EmConfig {
    pub fn new(family: Family, k: usize) -> Self {
        Self {
            family,
            k,
            batch_size: 256,
            buffer_size: 4096,
            schedule: LearningRateSchedule::default(),
            seed: 0,
            init_iterations: 5,
            nu_max_ratio: Some(4.0),
            fixed_nu: None,
            polyak_fraction: None,
            max_consecutive_failures: 50,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return usage("K must be at least 1");
        }
        if self.batch_size == 0 {
            return usage("batch size must be at least 1");
        }
        if self.buffer_size < 10 * self.k {
            return usage(format!("buffer of {} samples is too small for K = {}", self.buffer_size, self.k));
        }
        if let Some(r) = self.nu_max_ratio {
            if !(r > 1.0) {
                return usage("nu_max_ratio must exceed 1");
            }
        }
        if let Some(v) = self.fixed_nu {
            if !(v > 0.0) || !v.is_finite() {
                return usage("fixed ν must be positive and finite");
            }
        }
        if let Some(f) = self.polyak_fraction {
            if !(f > 0.0 && f <= 1.0) {
                return usage("averaging fraction must be in (0, 1]");
            }
        }
        Ok(())
    }

    pub fn mst_options(&self) -> MstOptions {
        MstOptions { nu_max_ratio: self.nu_max_ratio, fixed_nu: self.fixed_nu }
    }
}

#[derive(Debug, Clone)]
struct Averager {
    from_step: u64,
    sum: SufficientStats,
    count: u64,
}

/// Estimator state: current statistics, parameters and step counter.
#[derive(Debug, Clone)]
pub struct EmState {
    model: MixtureModel,
    stats: SufficientStats,
    step: u64,
    schedule: LearningRateSchedule,
    opts: MstOptions,
    max_failures: usize,
    batch: SufficientStats,
    candidate: SufficientStats,
    ws: EStepWorkspace,
    consecutive_failures: usize,
    skipped: u64,
    reseeds: u64,
    last_failure: Option<String>,
    averager: Option<Averager>,
}

/// What happened in one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub step: u64,
    pub gamma: f64,
    /// Mean log-likelihood of the batch under the parameters before the step.
    pub batch_loglik: f64,
    pub batch_rows: usize,
    /// False when the M-step failed and θ was kept.
    pub applied: bool,
    pub reseeded: Vec<usize>,
    pub mstep: Option<MStepReport>,
    pub failure: Option<String>,
}

impl StepOutcome {
    /// `step gamma batch_ll`.
    pub fn progress_line(&self) -> String {
        format!("{} {:?} {:?}", self.step, self.gamma, self.batch_loglik)
    }
}

impl EmState {
    /// State from explicit parameters and statistics.
    pub fn from_parts(
        model: MixtureModel,
        stats: SufficientStats,
        schedule: LearningRateSchedule,
        opts: MstOptions,
    ) -> Result<Self> {
        if stats.family() != model.family() || stats.k() != model.k() || stats.dim() != model.dim() {
            return usage("statistics do not match the model layout");
        }
        let (k, d) = (model.k(), model.dim());
        Ok(Self {
            batch: stats.clone(),
            candidate: stats.clone(),
            ws: EStepWorkspace::new(k, d),
            model,
            stats,
            step: 0,
            schedule,
            opts,
            max_failures: 50,
            consecutive_failures: 0,
            skipped: 0,
            reseeds: 0,
            last_failure: None,
            averager: None,
        })
    }

    pub fn model(&self) -> &MixtureModel {
        &self.model
    }

    pub fn stats(&self) -> &SufficientStats {
        &self.stats
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn schedule(&self) -> &LearningRateSchedule {
        &self.schedule
    }

    pub fn skipped_updates(&self) -> u64 {
        self.skipped
    }

    pub fn reseeds(&self) -> u64 {
        self.reseeds
    }

    pub fn last_failure(&self) -> Option<&str> {
        self.last_failure.as_deref()
    }

    /// Starts averaging the statistics after `step` (exclusive).
    pub fn average_after(&mut self, step: u64) {
        let mut sum = self.stats.clone();
        sum.fill(0.0);
        self.averager = Some(Averager { from_step: step, sum, count: 0 });
    }

    /// θ̄ of the averaged statistics, or the current model if averaging never
    /// started.
    pub fn averaged_model(&self) -> Result<MixtureModel> {
        match &self.averager {
            Some(a) if a.count > 0 => {
                let mut mean = a.sum.clone();
                mean.scale(1.0 / a.count as f64);
                let opts = MstOptions { nu_max_ratio: None, ..self.opts };
                Ok(thetabar(&mean, &self.model, &opts)?.0)
            }
            _ => Ok(self.model.clone()),
        }
    }

    /// Bytes retained by the state, from buffer capacities.
    pub fn byte_size(&self) -> usize {
        std::mem::size_of::<Self>()
            + self.model.byte_size()
            + self.stats.byte_size()
            + self.batch.byte_size()
            + self.candidate.byte_size()
            + self.ws.byte_size()
            + self.averager.as_ref().map_or(0, |a| a.sum.byte_size())
    }

    /// Absorbs one mini-batch of row-major samples.
    pub fn step(&mut self, batch: &[f64]) -> Result<StepOutcome> {
        let d = self.model.dim();
        if batch.is_empty() || !batch.len().is_multiple_of(d) {
            return usage(format!("batch length {} is not a positive multiple of {d}", batch.len()));
        }
        if let Some(i) = batch.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite value in batch row {}", i / d)));
        }
        let i = self.step + 1;
        let gamma = self.schedule.gamma(i)?;
        let rows = batch.len() / d;
        let w = 1.0 / rows as f64;
        self.batch.fill(0.0);
        let mut ll = 0.0;
        let mut lowest = (f64::INFINITY, 0);
        for (r, y) in batch.chunks_exact(d).enumerate() {
            let a = accumulate(&self.model, y, w, &mut self.batch, &mut self.ws);
            ll += a.log_density;
            if a.log_density < lowest.0 {
                lowest = (a.log_density, r);
            }
        }
        self.candidate.as_mut_slice().copy_from_slice(self.stats.as_slice());
        self.candidate.blend_towards(&self.batch, gamma)?;
        let center = &batch[lowest.1 * d..(lowest.1 + 1) * d];
        let result = mstep_with_reseed(&mut self.candidate, &self.model, &self.opts, center);
        std::mem::swap(&mut self.stats, &mut self.candidate);
        self.step = i;
        let mut outcome = StepOutcome {
            step: i,
            gamma,
            batch_loglik: ll / rows as f64,
            batch_rows: rows,
            applied: false,
            reseeded: Vec::new(),
            mstep: None,
            failure: None,
        };
        match result {
            Ok((model, report, reseeded)) => {
                self.model = model;
                self.reseeds += reseeded.len() as u64;
                self.consecutive_failures = 0;
                outcome.applied = true;
                outcome.reseeded = reseeded;
                outcome.mstep = report;
            }
            Err(e @ Error::Usage(_)) => return Err(e),
            Err(e) => {
                self.skipped += 1;
                self.consecutive_failures += 1;
                let msg = e.to_string();
                self.last_failure = Some(msg.clone());
                outcome.failure = Some(msg);
                if self.consecutive_failures >= self.max_failures {
                    return Err(Error::Aborted(format!(
                        "{} consecutive M-step failures, last: {e}",
                        self.consecutive_failures
                    )));
                }
            }
        }
        if let Some(a) = &mut self.averager {
            if i > a.from_step {
                a.sum.add_assign(&self.stats)?;
                a.count += 1;
            }
        }
        Ok(outcome)
    }
}

/// Initial state from a buffer of samples: seeded starting model, a few batch
/// EM iterations, and `s⁽⁰⁾` = mean of `s̄` over the buffer.
pub fn init_state(buffer: &Dataset, config: &EmConfig) -> Result<EmState> {
    config.validate()?;
    if buffer.len() < 10 * config.k {
        return Err(Error::Init(format!(
            "{} buffered samples cannot initialize K = {} (need {})",
            buffer.len(),
            config.k,
            10 * config.k
        )));
    }
    let mut model = initial_model(buffer, config.family, config.k, config.seed)?;
    let init_opts = MstOptions { nu_max_ratio: None, fixed_nu: config.fixed_nu };
    for _ in 0..config.init_iterations {
        model = em_iteration(&model, buffer, &init_opts)?.0;
    }
    let stats = expected_stats(&model, buffer)?.stats;
    let mut state = EmState::from_parts(model, stats, config.schedule, config.mst_options())?;
    state.max_failures = config.max_consecutive_failures;
    Ok(state)
}

/// Result of a streaming fit.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub model: MixtureModel,
    pub steps: u64,
    pub samples_seen: u64,
    pub skipped_updates: u64,
    pub reseeds: u64,
    /// Bytes of estimator state plus the sample buffer, from capacities.
    pub retained_state_bytes: usize,
    /// Most samples held in memory at once.
    pub max_buffered_samples: usize,
    pub final_gamma: f64,
    pub averaged: bool,
}

/// Fits a mixture in one pass over `source`.
///
/// The first `buffer_size` samples initialize the state and are then absorbed
/// as ordinary mini-batches; the rest of the stream follows in batches of
/// `batch_size` (the last one may be shorter). One buffer of
/// `max(buffer_size, batch_size)` rows is reused throughout. `progress` sees
/// every step.
pub fn fit_stream(
    source: &mut dyn SampleSource,
    config: &EmConfig,
    mut progress: impl FnMut(&StepOutcome),
) -> Result<FitReport> {
    config.validate()?;
    let d = source.dim();
    let n0 = config.buffer_size;
    let b = config.batch_size;
    let mut buf: Vec<f64> = Vec::with_capacity(n0.max(b) * d);
    while buf.len() < n0 * d {
        let want = n0 - buf.len() / d;
        if source.read_rows(&mut buf, want)? == 0 {
            break;
        }
    }
    let seen0 = buf.len() / d;
    if seen0 < n0 {
        return Err(Error::Init(format!("stream ended after {seen0} samples; the buffer needs {n0}")));
    }
    let mut max_buffered = seen0;
    let buffer = Dataset::new(d, buf)?;
    let mut state = init_state(&buffer, config)?;
    let mut buf = buffer.into_values();

    let averaging = match config.polyak_fraction {
        Some(f) => {
            let total = source
                .len_hint()
                .ok_or_else(|| Error::Usage("averaging needs a stream of known length".into()))?;
            let steps = total.div_ceil(b as u64).max(1);
            let tail = ((steps as f64) * f).ceil() as u64;
            state.average_after(steps.saturating_sub(tail));
            true
        }
        None => false,
    };

    let mut samples = seen0 as u64;
    let mut gamma = f64::NAN;
    for chunk in buf.chunks(b * d) {
        let out = state.step(chunk)?;
        gamma = out.gamma;
        progress(&out);
    }
    loop {
        buf.clear();
        let got = source.read_rows(&mut buf, b)?;
        if got == 0 {
            break;
        }
        max_buffered = max_buffered.max(got);
        samples += got as u64;
        let out = state.step(&buf)?;
        gamma = out.gamma;
        progress(&out);
    }
    let model = if averaging { state.averaged_model()? } else { state.model.clone() };
    Ok(FitReport {
        model,
        steps: state.step,
        samples_seen: samples,
        skipped_updates: state.skipped,
        reseeds: state.reseeds,
        retained_state_bytes: state.byte_size() + buf.capacity() * std::mem::size_of::<f64>(),
        max_buffered_samples: max_buffered,
        final_gamma: gamma,
        averaged: averaging,
    })
}
