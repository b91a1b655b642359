//! Proximity scores, threshold calibration and subject-level decisions.
//!
//! For an MST reference model the proximity of `y` is
//! `r(y) = max_m Σ_k t_k(y) E[W_km | y]`: the posterior mean of each axis'
//! scale variable, marginalized over components and maximized over axes.
//! Observations that no axis explains well have small weights everywhere.
//! For Gaussian models `r(y) = max_k 1 / (1 + δ_k(y))` with `δ_k` the squared
//! Mahalanobis distance to component `k`. Both scores lie in `(0, ∞)` and low
//! values are abnormal.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::datagen::sample_mixture;
use crate::error::{usage, Error, Result};
use crate::mixture::{normalize_log_weights, Components, Dataset, Family, MixtureModel};

pub fn proximity_mst(y: &[f64], model: &MixtureModel) -> Result<f64> {
    if model.family() != Family::Mst {
        return usage("proximity_mst needs an MST model");
    }
    model.validate_input(y)?;
    let mut ws = ScoreWorkspace::new(model);
    Ok(proximity_with(y, model, &mut ws))
}

pub fn proximity_gaussian(y: &[f64], model: &MixtureModel) -> Result<f64> {
    if model.family() != Family::Gaussian {
        return usage("proximity_gaussian needs a Gaussian model");
    }
    model.validate_input(y)?;
    let mut ws = ScoreWorkspace::new(model);
    Ok(proximity_with(y, model, &mut ws))
}

/// Proximity for either family.
pub fn proximity(y: &[f64], model: &MixtureModel) -> Result<f64> {
    model.validate_input(y)?;
    let mut ws = ScoreWorkspace::new(model);
    Ok(proximity_with(y, model, &mut ws))
}

struct ScoreWorkspace {
    joint: Vec<f64>,
    scratch: Vec<f64>,
    u: Vec<f64>,
    w: Vec<f64>,
}

impl ScoreWorkspace {
    fn new(model: &MixtureModel) -> Self {
        let (k, d) = (model.k(), model.dim());
        Self { joint: vec![0.0; k], scratch: vec![0.0; d], u: vec![0.0; k * d], w: vec![0.0; d] }
    }
}

fn proximity_with(y: &[f64], model: &MixtureModel, ws: &mut ScoreWorkspace) -> f64 {
    let d = model.dim();
    match model.components() {
        Components::Gaussian(cs) => cs
            .iter()
            .map(|c| 1.0 / (1.0 + c.mahalanobis_sq_with(y, &mut ws.scratch)))
            .fold(0.0, f64::max),
        Components::Mst(cs) => {
            let lw = model.log_weights();
            for (k, c) in cs.iter().enumerate() {
                c.project_into(y, &mut ws.scratch);
                let mut acc = lw[k];
                for m in 0..d {
                    let nu = c.nu()[m];
                    let z = ws.scratch[m] * ws.scratch[m] / (nu * c.a()[m]);
                    acc += c.log_norm()[m] - 0.5 * (nu + 1.0) * z.ln_1p();
                    ws.u[k * d + m] = (nu + 1.0) / (nu * (1.0 + z));
                }
                ws.joint[k] = acc;
            }
            normalize_log_weights(&mut ws.joint);
            ws.w.iter_mut().for_each(|v| *v = 0.0);
            for k in 0..cs.len() {
                for m in 0..d {
                    ws.w[m] += ws.joint[k] * ws.u[k * d + m];
                }
            }
            ws.w.iter().copied().fold(0.0, f64::max)
        }
    }
}

/// Proximity of every row, in row order.
pub fn score_dataset(model: &MixtureModel, data: &Dataset) -> Result<Vec<f64>> {
    if data.dim() != model.dim() {
        return usage(format!("data has {} features, model has {}", data.dim(), model.dim()));
    }
    let d = data.dim();
    let chunks: Vec<Vec<f64>> = data
        .as_slice()
        .par_chunks(4096 * d)
        .map(|rows| {
            let mut ws = ScoreWorkspace::new(model);
            rows.chunks_exact(d).map(|y| proximity_with(y, model, &mut ws)).collect()
        })
        .collect();
    Ok(chunks.concat())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalibrationMode {
    Empirical,
    Simulated,
}

impl fmt::Display for CalibrationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Empirical => "empirical",
            Self::Simulated => "simulated",
        })
    }
}

impl FromStr for CalibrationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "empirical" => Ok(Self::Empirical),
            "simulated" => Ok(Self::Simulated),
            other => usage(format!("unknown calibration mode '{other}'")),
        }
    }
}

/// Decision threshold: `P(r(Y) < τ) ≈ α` under the reference model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold {
    pub tau: f64,
    pub alpha: f64,
    pub mode: CalibrationMode,
    pub n_used: usize,
}

/// Where calibration scores come from.
#[derive(Debug, Clone, Copy)]
pub enum CalibrationSource<'a> {
    /// Held-out normal samples.
    Data(&'a Dataset),
    /// `n` samples drawn from the model itself.
    Simulate { n: usize, seed: u64 },
}

/// Smallest sample size accepted for level `alpha`.
pub fn min_calibration_samples(alpha: f64) -> usize {
    (10.0 / alpha).ceil() as usize
}

/// Lower order-statistic α-quantile: the value at zero-based rank
/// `⌊α (n − 1)⌋` of the sorted scores.
pub fn lower_quantile(scores: &[f64], alpha: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Calibration("no scores".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Calibration(format!("alpha must be in (0, 1), got {alpha}")));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Calibration("NaN score".into()));
    }
    let rank = (alpha * (scores.len() - 1) as f64).floor() as usize;
    let mut v = scores.to_vec();
    let (_, x, _) = v.select_nth_unstable_by(rank, f64::total_cmp);
    Ok(*x)
}

pub fn calibrate_threshold(model: &MixtureModel, alpha: f64, source: CalibrationSource<'_>) -> Result<Threshold> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Calibration(format!("alpha must be in (0, 1), got {alpha}")));
    }
    let (scores, mode) = match source {
        CalibrationSource::Data(data) => (score_dataset(model, data)?, CalibrationMode::Empirical),
        CalibrationSource::Simulate { n, seed } => {
            check_count(n, alpha)?;
            let (data, _) = sample_mixture(model, n, seed)?;
            (score_dataset(model, &data)?, CalibrationMode::Simulated)
        }
    };
    check_count(scores.len(), alpha)?;
    let tau = lower_quantile(&scores, alpha)?;
    Ok(Threshold { tau, alpha, mode, n_used: scores.len() })
}

fn check_count(n: usize, alpha: f64) -> Result<()> {
    let need = min_calibration_samples(alpha);
    if n < need {
        return Err(Error::Calibration(format!("{n} samples are too few for alpha = {alpha} (need {need})")));
    }
    Ok(())
}

/// `true` marks abnormal: `score < tau`.
pub fn label(scores: &[f64], tau: f64) -> Vec<bool> {
    scores.iter().map(|&s| s < tau).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectSummary {
    pub subject_id: String,
    pub n_voxels: usize,
    pub n_abnormal: usize,
    pub fraction: f64,
    pub group_label: Option<String>,
}

pub fn aggregate_subject(labels: &[bool], subject_id: &str) -> Result<SubjectSummary> {
    if labels.is_empty() {
        return usage(format!("subject '{subject_id}' has no voxels"));
    }
    let n_abnormal = labels.iter().filter(|&&b| b).count();
    Ok(SubjectSummary {
        subject_id: subject_id.to_string(),
        n_voxels: labels.len(),
        n_abnormal,
        fraction: n_abnormal as f64 / labels.len() as f64,
        group_label: None,
    })
}

/// Geometric mean of sensitivity and specificity; `true` is the positive
/// class.
pub fn gmean(pred: &[bool], truth: &[bool]) -> Result<f64> {
    if pred.len() != truth.len() {
        return usage("prediction and truth lengths differ");
    }
    let pos = truth.iter().filter(|&&t| t).count();
    let neg = truth.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric("g-mean needs both classes in the truth".into()));
    }
    let tp = pred.iter().zip(truth).filter(|(&p, &t)| p && t).count();
    let tn = pred.iter().zip(truth).filter(|(&p, &t)| !p && !t).count();
    Ok((tp as f64 / pos as f64 * (tn as f64 / neg as f64)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CutoffStrategy {
    /// Sweep midpoints between sorted distinct fractions; ties go to the
    /// lowest cutoff.
    MaximizeGmean,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    /// `true` = predicted patient (`fraction > cutoff`).
    pub labels: Vec<bool>,
    pub cutoff: f64,
    pub gmean: f64,
}

/// Labels subjects as patients when their abnormal fraction exceeds a cutoff.
/// `truth[i]` is true for patients.
pub fn classify_subjects(
    summaries: &[SubjectSummary],
    truth: &[bool],
    strategy: CutoffStrategy,
) -> Result<Classification> {
    if summaries.len() != truth.len() {
        return usage("one truth label per subject is required");
    }
    let pos = truth.iter().filter(|&&t| t).count();
    if pos < 2 || truth.len() - pos < 2 {
        return usage("need at least two subjects in each class");
    }
    let predict = |c: f64| summaries.iter().map(|s| s.fraction > c).collect::<Vec<_>>();
    match strategy {
        CutoffStrategy::Fixed(c) => {
            let labels = predict(c);
            let g = gmean(&labels, truth)?;
            Ok(Classification { labels, cutoff: c, gmean: g })
        }
        CutoffStrategy::MaximizeGmean => {
            let mut fr: Vec<f64> = summaries.iter().map(|s| s.fraction).collect();
            fr.sort_by(f64::total_cmp);
            fr.dedup();
            if fr.len() == 1 {
                // No midpoint: fall back to the trivial all-normal rule.
                let labels = predict(fr[0]);
                let g = gmean(&labels, truth)?;
                return Ok(Classification { labels, cutoff: fr[0], gmean: g });
            }
            let mut best: Option<Classification> = None;
            for w in fr.windows(2) {
                let c = 0.5 * (w[0] + w[1]);
                let labels = predict(c);
                let g = gmean(&labels, truth)?;
                if best.as_ref().is_none_or(|b| g > b.gmean) {
                    best = Some(Classification { labels, cutoff: c, gmean: g });
                }
            }
            Ok(best.expect("at least one midpoint"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::{GaussianComponent, MstComponent};

    #[test]
    fn mst_proximity_at_the_mode() {
        let c = MstComponent::new(vec![1.0, 2.0], vec![1.0, 0.0, 0.0, 1.0], vec![1.0, 3.0], vec![4.0, 1.5])
            .unwrap();
        let m = MixtureModel::mst(vec![1.0], vec![c]).unwrap();
        let r = proximity_mst(&[1.0, 2.0], &m).unwrap();
        assert!((r - 2.5 / 1.5).abs() < 1e-15);
    }

    #[test]
    fn gaussian_proximity_plug_in() {
        let g = GaussianComponent::new(vec![0.0, 0.0], vec![4.0, 0.0, 0.0, 1.0]).unwrap();
        let m = MixtureModel::gaussian(vec![1.0], vec![g]).unwrap();
        assert_eq!(proximity_gaussian(&[0.0, 0.0], &m).unwrap(), 1.0);
        assert!((proximity_gaussian(&[2.0, 0.0], &m).unwrap() - 0.5).abs() < 1e-15);
        assert!(proximity_mst(&[0.0, 0.0], &m).is_err());
    }

    #[test]
    fn quantile_order_statistic() {
        let scores: Vec<f64> = (1..=1000).map(|i| i as f64 / 1000.0).collect();
        assert_eq!(lower_quantile(&scores, 0.02).unwrap(), 0.020);
        assert_eq!(lower_quantile(&[3.0, 1.0, 2.0], 0.5).unwrap(), 2.0);
    }

    #[test]
    fn strict_labels() {
        assert_eq!(label(&[0.1, 0.2, 0.3], 0.2), vec![true, false, false]);
        assert!(label(&[5.0, 1e9], f64::INFINITY).iter().all(|&b| b));
    }

    #[test]
    fn calibration_needs_enough_samples() {
        let g = GaussianComponent::new(vec![0.0], vec![1.0]).unwrap();
        let m = MixtureModel::gaussian(vec![1.0], vec![g]).unwrap();
        let err = calibrate_threshold(&m, 0.02, CalibrationSource::Simulate { n: 499, seed: 0 });
        assert!(matches!(err, Err(Error::Calibration(_))));
        let t = calibrate_threshold(&m, 0.02, CalibrationSource::Simulate { n: 500, seed: 0 }).unwrap();
        assert_eq!(t.n_used, 500);
        assert_eq!(t.mode, CalibrationMode::Simulated);
    }

    #[test]
    fn aggregate_fractions() {
        assert_eq!(aggregate_subject(&[false; 10], "a").unwrap().fraction, 0.0);
        assert_eq!(aggregate_subject(&[true; 10], "a").unwrap().fraction, 1.0);
        let mut l = vec![false; 12];
        l[..3].iter_mut().for_each(|b| *b = true);
        assert_eq!(aggregate_subject(&l, "a").unwrap().fraction, 0.25);
        assert!(aggregate_subject(&[], "a").is_err());
    }

    #[test]
    fn gmean_cases() {
        let t = [true, true, false, false];
        assert_eq!(gmean(&t, &t).unwrap(), 1.0);
        assert_eq!(gmean(&[true; 4], &t).unwrap(), 0.0);
        assert!(matches!(gmean(&[true; 2], &[true; 2]), Err(Error::UndefinedMetric(_))));
        // sensitivity 4/5, specificity 9/20
        let mut truth = vec![true; 5];
        truth.extend(vec![false; 20]);
        let mut pred = vec![true, true, true, true, false];
        pred.extend((0..20).map(|i| i >= 9));
        assert!((gmean(&pred, &truth).unwrap() - 0.6).abs() < 1e-15);
    }

    fn summaries(fr: &[f64]) -> Vec<SubjectSummary> {
        fr.iter()
            .enumerate()
            .map(|(i, &f)| SubjectSummary {
                subject_id: format!("s{i}"),
                n_voxels: 100,
                n_abnormal: (f * 100.0) as usize,
                fraction: f,
                group_label: None,
            })
            .collect()
    }

    #[test]
    fn separated_subjects_use_lowest_gap_midpoint() {
        let s = summaries(&[0.01, 0.02, 0.10, 0.12]);
        let c = classify_subjects(&s, &[false, false, true, true], CutoffStrategy::MaximizeGmean).unwrap();
        assert_eq!(c.gmean, 1.0);
        assert!((c.cutoff - 0.06).abs() < 1e-15);
    }

    #[test]
    fn identical_fractions_fall_back_to_trivial_rule() {
        let s = summaries(&[0.05; 4]);
        let c = classify_subjects(&s, &[false, false, true, true], CutoffStrategy::MaximizeGmean).unwrap();
        assert_eq!(c.gmean, 0.0);
        assert!(c.labels.iter().all(|&b| !b));
    }
}
