//! Choosing the number of components with the slope heuristic.
//!
//! For each K the best log-likelihood over a few restarts is recorded
//! together with the free-parameter count. On the large-K part of the curve
//! the total log-likelihood grows roughly linearly in the parameter count;
//! the slope κ̂ of that tail (fitted by repeated-median regression) calibrates
//! the penalty, and K̂ maximizes `n·ll(K) − 2κ̂·pen(K)`.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::batch::{batch_em_seeded, heldout_loglik, BatchConfig};
use crate::datagen::subject_seed;
use crate::error::{usage, Error, Result};
use crate::mixture::{param_count, Dataset, Family};
use crate::online::{fit_stream, EmConfig};
use crate::source::MemorySource;

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionCurve {
    pub ks: Vec<usize>,
    pub penalties: Vec<f64>,
    /// Best mean log-likelihood per K.
    pub max_logliks: Vec<f64>,
    /// Sample count the mean log-likelihoods were computed on.
    pub n: usize,
}

impl SelectionCurve {
    pub fn new(ks: Vec<usize>, penalties: Vec<f64>, max_logliks: Vec<f64>, n: usize) -> Result<Self> {
        if ks.is_empty() || ks.len() != penalties.len() || ks.len() != max_logliks.len() {
            return usage("curve arrays must be non-empty and aligned");
        }
        if ks.windows(2).any(|w| w[0] >= w[1]) {
            return usage("K values must be strictly increasing");
        }
        Ok(Self { ks, penalties, max_logliks, n })
    }

    /// `K penalty loglik` per line, preceded by a `# n` line.
    pub fn to_text(&self) -> String {
        let mut s = format!("# n {}\n# K penalty loglik\n", self.n);
        for i in 0..self.ks.len() {
            let _ = writeln!(s, "{} {:?} {:?}", self.ks[i], self.penalties[i], self.max_logliks[i]);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |line: usize| Error::Format(format!("curve line {line}: expected 'K penalty loglik'"));
        let mut n = 0;
        let (mut ks, mut pens, mut lls) = (Vec::new(), Vec::new(), Vec::new());
        for (i, line) in text.lines().enumerate() {
            let t = line.trim();
            if let Some(rest) = t.strip_prefix("# n ") {
                n = rest.trim().parse().map_err(|_| bad(i + 1))?;
                continue;
            }
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = t.split_whitespace().collect();
            if f.len() != 3 {
                return Err(bad(i + 1));
            }
            ks.push(f[0].parse().map_err(|_| bad(i + 1))?);
            pens.push(f[1].parse().map_err(|_| bad(i + 1))?);
            lls.push(f[2].parse().map_err(|_| bad(i + 1))?);
        }
        if n == 0 {
            return Err(Error::Format("curve file lacks a '# n' line".into()));
        }
        Self::new(ks, pens, lls, n).map_err(|e| Error::Format(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fitter {
    Batch,
    Online,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionConfig {
    pub family: Family,
    pub restarts: usize,
    pub seed: u64,
    pub fitter: Fitter,
    pub batch: BatchConfig,
    /// Template for online fits; `k` and `seed` are overwritten per run.
    pub online: EmConfig,
}

impl SelectionConfig {
    pub fn new(family: Family) -> Self {
        Self {
            family,
            restarts: 3,
            seed: 0,
            fitter: Fitter::Batch,
            batch: BatchConfig::default(),
            online: EmConfig::new(family, 1),
        }
    }
}

/// Fits every K with several seeds and keeps the best mean log-likelihood of
/// the fitting data. Restarts that fail are dropped; a K fails only if all
/// its restarts do.
pub fn fit_k_range(data: &Dataset, ks: &[usize], cfg: &SelectionConfig) -> Result<SelectionCurve> {
    if ks.is_empty() {
        return usage("empty K range");
    }
    if cfg.restarts == 0 {
        return usage("need at least one restart");
    }
    let mut sorted = ks.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted[0] == 0 {
        return usage("K must be at least 1");
    }
    let jobs: Vec<(usize, usize)> =
        sorted.iter().flat_map(|&k| (0..cfg.restarts).map(move |r| (k, r))).collect();
    let results: Vec<Result<f64>> = jobs
        .par_iter()
        .map(|&(k, r)| {
            let seed = subject_seed(cfg.seed, (k * cfg.restarts + r) as u64);
            fit_once(data, k, seed, cfg)
        })
        .collect();
    let mut best = Vec::with_capacity(sorted.len());
    for (i, &k) in sorted.iter().enumerate() {
        let runs = &results[i * cfg.restarts..(i + 1) * cfg.restarts];
        let ok = runs.iter().filter_map(|r| r.as_ref().ok()).copied().fold(f64::NEG_INFINITY, f64::max);
        if ok == f64::NEG_INFINITY {
            let err = runs.iter().find_map(|r| r.as_ref().err()).unwrap();
            return Err(Error::Selection(format!("every restart failed for K = {k}: {err}")));
        }
        best.push(ok);
    }
    let penalties = sorted.iter().map(|&k| param_count(cfg.family, k, data.dim()) as f64).collect();
    SelectionCurve::new(sorted, penalties, best, data.len())
}

fn fit_once(data: &Dataset, k: usize, seed: u64, cfg: &SelectionConfig) -> Result<f64> {
    let model = match cfg.fitter {
        Fitter::Batch => batch_em_seeded(data, cfg.family, k, seed, &cfg.batch)?.model,
        Fitter::Online => {
            let online = EmConfig { family: cfg.family, k, seed, ..cfg.online.clone() };
            fit_stream(&mut MemorySource::new(data), &online, |_| {})?.model
        }
    };
    heldout_loglik(&model, data)
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Siegel's repeated-median slope: `med_i med_{j≠i} (y_j − y_i)/(x_j − x_i)`.
/// Pairs with equal `x` are skipped.
pub fn repeated_median_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Selection("need at least two aligned points".into()));
    }
    let mut outer = Vec::with_capacity(x.len());
    let mut inner = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        inner.clear();
        for j in 0..x.len() {
            if j != i && x[j] != x[i] {
                inner.push((y[j] - y[i]) / (x[j] - x[i]));
            }
        }
        if !inner.is_empty() {
            outer.push(median(&mut inner));
        }
    }
    if outer.is_empty() {
        return Err(Error::Selection("all points share one abscissa".into()));
    }
    Ok(median(&mut outer))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeResult {
    pub kappa: f64,
    pub k_star: usize,
    /// Points used for the slope fit.
    pub tail_points: usize,
}

/// Slope heuristic on the largest-K `fit_fraction` of the curve (at least 4
/// points). Ties in the criterion go to the smallest K.
pub fn slope_heuristic(curve: &SelectionCurve, fit_fraction: f64) -> Result<SlopeResult> {
    if !(fit_fraction > 0.0 && fit_fraction <= 1.0) {
        return Err(Error::Selection(format!("fit fraction must be in (0, 1], got {fit_fraction}")));
    }
    let n_points = curve.ks.len();
    let tail = ((fit_fraction * n_points as f64).ceil() as usize).min(n_points);
    if tail < 4 {
        return Err(Error::Selection(format!(
            "slope fit needs at least 4 points, the upper {fit_fraction} of the curve has {tail}"
        )));
    }
    let n = curve.n as f64;
    let total: Vec<f64> = curve.max_logliks.iter().map(|l| l * n).collect();
    let start = n_points - tail;
    let kappa = repeated_median_slope(&curve.penalties[start..], &total[start..])?;
    let mut best = (f64::NEG_INFINITY, 0);
    for i in 0..n_points {
        let crit = total[i] - 2.0 * kappa * curve.penalties[i];
        if crit > best.0 {
            best = (crit, i);
        }
    }
    Ok(SlopeResult { kappa, k_star: curve.ks[best.1], tail_points: tail })
}
