//! Full-dataset EM. It shares the E-step accumulation and the M-step with the
//! online estimator, so the two differ only in how statistics are averaged.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{usage, Error, Result};
use crate::estep::{accumulate, EStepWorkspace};
use crate::linalg;
use crate::mixture::{Dataset, Family, GaussianComponent, MixtureModel, MstComponent};
use crate::mstep::{reseed_component, thetabar, MStepReport, MstOptions};
use crate::stats::SufficientStats;

/// Rows per parallel work item. Fixed so the reduction order, and therefore
/// the result, does not depend on the thread count.
const CHUNK_ROWS: usize = 2048;

/// Starting degrees of freedom for MST components.
pub const INITIAL_NU: f64 = 20.0;

/// Fraction of the total mass (divided by K) handed to a reseeded component.
pub(crate) const RESEED_MASS: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchConfig {
    pub max_iters: usize,
    pub tol: f64,
    pub mst: MstOptions,
}

impl Default for BatchConfig {
    fn default() -> Self {
        Self { max_iters: 200, tol: 1e-8, mst: MstOptions::default() }
    }
}

#[derive(Debug, Clone)]
pub struct BatchFit {
    pub model: MixtureModel,
    /// Mean log-likelihood of the data under each iterate, starting with the
    /// initial model.
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub reseeds: usize,
}

/// Expected statistics averaged over a dataset, plus the data's mean
/// log-likelihood and the row with the lowest density.
#[derive(Debug, Clone)]
pub struct ExpectedStats {
    pub stats: SufficientStats,
    pub mean_loglik: f64,
    pub lowest_density_row: usize,
    pub degenerate_rows: usize,
}

struct Partial {
    stats: SufficientStats,
    ll: f64,
    lowest: (f64, usize),
    degenerate: usize,
}

pub fn expected_stats(model: &MixtureModel, data: &Dataset) -> Result<ExpectedStats> {
    check_data(model, data)?;
    let dim = model.dim();
    let n = data.len();
    let partials: Vec<Partial> = data
        .as_slice()
        .par_chunks(CHUNK_ROWS * dim)
        .enumerate()
        .map(|(c, rows)| {
            let mut stats = SufficientStats::zeros(model.family(), model.k(), dim);
            let mut ws = EStepWorkspace::new(model.k(), dim);
            let mut ll = 0.0;
            let mut lowest = (f64::INFINITY, c * CHUNK_ROWS);
            let mut degenerate = 0;
            for (i, y) in rows.chunks_exact(dim).enumerate() {
                let a = accumulate(model, y, 1.0, &mut stats, &mut ws);
                ll += a.log_density;
                degenerate += a.degenerate as usize;
                if a.log_density < lowest.0 {
                    lowest = (a.log_density, c * CHUNK_ROWS + i);
                }
            }
            Partial { stats, ll, lowest, degenerate }
        })
        .collect();
    let mut iter = partials.into_iter();
    let mut acc = iter.next().expect("non-empty data");
    for p in iter {
        acc.stats.add_assign(&p.stats)?;
        acc.ll += p.ll;
        acc.degenerate += p.degenerate;
        if p.lowest.0 < acc.lowest.0 {
            acc.lowest = p.lowest;
        }
    }
    acc.stats.scale(1.0 / n as f64);
    Ok(ExpectedStats {
        stats: acc.stats,
        mean_loglik: acc.ll / n as f64,
        lowest_density_row: acc.lowest.1,
        degenerate_rows: acc.degenerate,
    })
}

/// Mean mixture log-density over `data`.
pub fn heldout_loglik(model: &MixtureModel, data: &Dataset) -> Result<f64> {
    check_data(model, data)?;
    let dim = model.dim();
    let sums: Vec<f64> = data
        .as_slice()
        .par_chunks(CHUNK_ROWS * dim)
        .map(|rows| {
            let mut joint = vec![0.0; model.k()];
            let mut scratch = vec![0.0; dim];
            rows.chunks_exact(dim).map(|y| model.logpdf_with(y, &mut joint, &mut scratch)).sum()
        })
        .collect();
    Ok(sums.iter().sum::<f64>() / data.len() as f64)
}

fn check_data(model: &MixtureModel, data: &Dataset) -> Result<()> {
    if data.is_empty() {
        return usage("no data");
    }
    if data.dim() != model.dim() {
        return usage(format!("data has {} features, model has {}", data.dim(), model.dim()));
    }
    Ok(())
}

/// M-step that recovers from starved components by reseeding them at
/// `center` (see [`reseed_component`]). Returns the model, the MST report and
/// the reseeded component indices. `stats` is modified by reseeding.
pub(crate) fn mstep_with_reseed(
    stats: &mut SufficientStats,
    prev: &MixtureModel,
    opts: &MstOptions,
    center: &[f64],
) -> Result<(MixtureModel, Option<MStepReport>, Vec<usize>)> {
    let mass = RESEED_MASS / stats.k() as f64;
    let mut reseeded = Vec::new();
    loop {
        match thetabar(stats, prev, opts) {
            Ok((model, report)) => return Ok((model, report, reseeded)),
            Err(Error::Starved { component, mass: m }) => {
                if reseeded.contains(&component) || reseeded.len() >= stats.k() {
                    return Err(Error::Starved { component, mass: m });
                }
                reseed_component(stats, prev, component, center, mass)?;
                reseeded.push(component);
            }
            Err(e) => return Err(e),
        }
    }
}

/// One EM iteration over the whole dataset. Returns the new model, the mean
/// log-likelihood under `model` and the number of reseeded components.
pub fn em_iteration(
    model: &MixtureModel,
    data: &Dataset,
    opts: &MstOptions,
) -> Result<(MixtureModel, f64, usize)> {
    let mut e = expected_stats(model, data)?;
    let center = data.row(e.lowest_density_row).to_vec();
    let (next, _, reseeded) = mstep_with_reseed(&mut e.stats, model, opts, &center)?;
    Ok((next, e.mean_loglik, reseeded.len()))
}

/// Runs EM from `init` until `|Δll| < tol·|ll|` or `max_iters` iterations.
pub fn batch_em(data: &Dataset, init: MixtureModel, cfg: &BatchConfig) -> Result<BatchFit> {
    if data.len() < 10 * init.k() {
        return usage(format!("need at least {} samples for K = {}", 10 * init.k(), init.k()));
    }
    let mut model = init;
    let mut trace: Vec<f64> = Vec::new();
    let mut reseeds = 0;
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..cfg.max_iters {
        let (next, ll, r) = em_iteration(&model, data, &cfg.mst)?;
        reseeds += r;
        if let Some(&prev) = trace.last() {
            if r == 0 && (ll - prev).abs() < cfg.tol * ll.abs() {
                trace.push(ll);
                converged = true;
                break;
            }
        }
        trace.push(ll);
        model = next;
        iterations += 1;
    }
    if !converged {
        trace.push(heldout_loglik(&model, data)?);
    }
    Ok(BatchFit { model, loglik_trace: trace, iterations, converged, reseeds })
}

/// [`initial_model`] followed by [`batch_em`].
pub fn batch_em_seeded(
    data: &Dataset,
    family: Family,
    k: usize,
    seed: u64,
    cfg: &BatchConfig,
) -> Result<BatchFit> {
    let init = initial_model(data, family, k, seed)?;
    batch_em(data, init, cfg)
}

/// Starting model from a data sample: k-means++ seeded means (greedy variant,
/// `2 + ⌊ln K⌋` candidates per draw), uniform weights, and the sample
/// covariance as every component's spread. MST components take the
/// covariance eigenbasis as D, its eigenvalues as A, and ν = 20 on all axes.
pub fn initial_model(data: &Dataset, family: Family, k: usize, seed: u64) -> Result<MixtureModel> {
    if k == 0 {
        return usage("K must be at least 1");
    }
    if data.len() < 10 * k {
        return Err(Error::Init(format!(
            "{} samples are not enough to initialize K = {k} (need {})",
            data.len(),
            10 * k
        )));
    }
    let dim = data.dim();
    let cov = data.covariance();
    let (values, vectors) = linalg::sym_eigen(&cov, dim);
    if !(values[dim - 1] > 1e-12 * values[0]) {
        return Err(Error::Init("degenerate sample: (near) zero variance along some direction".into()));
    }
    let centers = kmeans_pp(data, k, seed)?;
    let weights = vec![1.0 / k as f64; k];
    match family {
        Family::Gaussian => {
            let comps = centers
                .into_iter()
                .map(|mu| GaussianComponent::new(mu, cov.clone()))
                .collect::<Result<Vec<_>>>()?;
            MixtureModel::gaussian(weights, comps)
        }
        Family::Mst => {
            let comps = centers
                .into_iter()
                .map(|mu| MstComponent::from_axes(mu, vectors.clone(), values.clone(), vec![INITIAL_NU; dim]))
                .collect::<Result<Vec<_>>>()?;
            MixtureModel::mst(weights, comps)
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Greedy k-means++ seeding.
pub fn kmeans_pp(data: &Dataset, k: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let n = data.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = rng.random_range(0..n);
    let mut centers = vec![data.row(first).to_vec()];
    let mut d2: Vec<f64> = data.rows().map(|y| sq_dist(y, &centers[0])).collect();
    let trials = 2 + (k as f64).ln().floor() as usize;
    let mut cand_d2 = vec![0.0; n];
    let mut best_d2 = vec![0.0; n];
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Init(format!("fewer than {k} distinct samples")));
        }
        let mut best: Option<(f64, usize)> = None;
        for _ in 0..trials {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, v) in d2.iter().enumerate() {
                acc += v;
                if acc > target && *v > 0.0 {
                    pick = i;
                    break;
                }
            }
            let c = data.row(pick);
            let mut potential = 0.0;
            for (i, y) in data.rows().enumerate() {
                cand_d2[i] = d2[i].min(sq_dist(y, c));
                potential += cand_d2[i];
            }
            if best.is_none_or(|(p, _)| potential < p) {
                best = Some((potential, pick));
                std::mem::swap(&mut best_d2, &mut cand_d2);
            }
        }
        let (_, pick) = best.expect("at least one trial");
        centers.push(data.row(pick).to_vec());
        std::mem::swap(&mut d2, &mut best_d2);
    }
    Ok(centers)
}

/// Index of the most responsible component for every row.
pub fn hard_assignments(model: &MixtureModel, data: &Dataset) -> Result<Vec<usize>> {
    check_data(model, data)?;
    data.rows()
        .map(|y| {
            let r = model.responsibilities(y)?;
            Ok(r.weights
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (k, &w)| if w > best.1 { (k, w) } else { best })
                .0)
        })
        .collect()
}
