//! Synthetic data: exact samplers for both families, anomaly injection and
//! multi-subject cohorts.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;

use crate::error::{usage, Error, Result};
use crate::mixture::{Components, Dataset, MixtureModel};

enum Draw {
    // lower Cholesky factor per component
    Gaussian(Vec<Vec<f64>>),
    // per component: per-axis Gamma(ν/2, rate ν/2) and sqrt(A)
    Mst(Vec<(Vec<Gamma<f64>>, Vec<f64>)>),
}

/// Draws independent observations from a mixture.
///
/// Gaussian rows are `μ_k + L_k z`. MST rows use the scale-mixture
/// representation: per axis `w_m ~ Gamma(shape ν_m/2, rate ν_m/2)` (mean 1)
/// and `y = μ_k + D diag(√(A_m / w_m)) z`.
pub struct Sampler<'a> {
    model: &'a MixtureModel,
    cumulative: Vec<f64>,
    draw: Draw,
}

impl<'a> Sampler<'a> {
    pub fn new(model: &'a MixtureModel) -> Result<Self> {
        let mut acc = 0.0;
        let cumulative = model
            .weights()
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        let draw = match model.components() {
            Components::Gaussian(cs) => Draw::Gaussian(cs.iter().map(|c| c.chol().to_vec()).collect()),
            Components::Mst(cs) => Draw::Mst(
                cs.iter()
                    .map(|c| {
                        let gammas = c.nu().iter().map(|&nu| scale_distribution(nu)).collect::<Result<Vec<_>>>()?;
                        Ok((gammas, c.a().iter().map(|a| a.sqrt()).collect()))
                    })
                    .collect::<Result<Vec<_>>>()?,
            ),
        };
        Ok(Self { model, cumulative, draw })
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    /// Writes one observation into `out` and returns its component.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) -> usize {
        let d = self.model.dim();
        let u: f64 = rng.random();
        let k = self
            .cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.cumulative.len() - 1);
        match (&self.draw, self.model.components()) {
            (Draw::Gaussian(chols), Components::Gaussian(cs)) => {
                let l = &chols[k];
                let mu = cs[k].mu();
                out.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
                // in place: row i of L only reads entries j <= i, still untouched
                for i in (0..d).rev() {
                    let lz: f64 = (0..=i).map(|j| l[i * d + j] * out[j]).sum();
                    out[i] = mu[i] + lz;
                }
            }
            (Draw::Mst(params), Components::Mst(cs)) => {
                let (gammas, sqrt_a) = &params[k];
                let c = &cs[k];
                out.copy_from_slice(c.mu());
                for m in 0..d {
                    let w = gammas[m].sample(rng);
                    let z: f64 = rng.sample(StandardNormal);
                    let coef = sqrt_a[m] / w.sqrt() * z;
                    for (o, a) in out.iter_mut().zip(c.axis(m)) {
                        *o += coef * a;
                    }
                }
            }
            _ => unreachable!("sampler built for this model"),
        }
        k
    }
}

/// Distribution of one MST scale variable: `Gamma(shape ν/2, rate ν/2)`,
/// which has mean 1.
pub fn scale_distribution(nu: f64) -> Result<Gamma<f64>> {
    Gamma::new(0.5 * nu, 2.0 / nu).map_err(|e| Error::Numeric(format!("gamma sampler for ν = {nu}: {e}")))
}

/// `n` observations and their component labels. Deterministic given `seed`.
pub fn sample_mixture(model: &MixtureModel, n: usize, seed: u64) -> Result<(Dataset, Vec<usize>)> {
    let sampler = Sampler::new(model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = model.dim();
    let mut values = vec![0.0; n * d];
    let labels = values.chunks_exact_mut(d).map(|row| sampler.sample_into(&mut rng, row)).collect();
    Ok((Dataset::new(d, values)?, labels))
}

/// Additive anomalies: a fraction of rows get `amplitude · shift[m]` added on
/// each listed dimension `m` (zero-based).
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalySpec {
    pub fraction: f64,
    pub shift: Vec<f64>,
    pub dims: Vec<usize>,
    pub amplitude: f64,
}

impl AnomalySpec {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return usage(format!("anomaly fraction must be in (0, 1], got {}", self.fraction));
        }
        if self.shift.len() != dim {
            return usage(format!("shift has {} entries for {dim} features", self.shift.len()));
        }
        if self.dims.is_empty() || self.dims.iter().any(|&m| m >= dim) {
            return usage("anomaly dims must be a non-empty set of feature indices");
        }
        if !(self.amplitude >= 0.0) || !self.amplitude.is_finite() {
            return usage("amplitude must be finite and non-negative");
        }
        if self.shift.iter().any(|v| !v.is_finite()) {
            return usage("shift must be finite");
        }
        Ok(())
    }
}

/// Shifts `round(fraction · n)` uniformly chosen rows and returns the mask of
/// affected rows. The mask is set even when the amplitude is zero.
pub fn inject_anomalies(data: &mut Dataset, spec: &AnomalySpec, seed: u64) -> Result<Vec<bool>> {
    spec.validate(data.dim())?;
    let n = data.len();
    let count = ((spec.fraction * n as f64).round() as usize).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mask = vec![false; n];
    for i in index::sample(&mut rng, n, count) {
        mask[i] = true;
        let row = data.row_mut(i);
        for &m in &spec.dims {
            row[m] += spec.amplitude * spec.shift[m];
        }
    }
    Ok(mask)
}

/// One synthetic subject.
#[derive(Debug, Clone)]
pub struct Subject {
    pub id: String,
    pub group: usize,
    pub amplitude: f64,
    pub data: Dataset,
    pub truth: Vec<bool>,
}

/// Stream seed for subject `index` derived from a cohort seed (SplitMix64
/// finalizer over the pair).
pub fn subject_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Builds `amplitudes.len()` groups of `per_group` subjects. Each subject's
/// voxels are drawn from `model`; group `g` then receives anomalies following
/// `template` with its amplitude replaced by `amplitudes[g]`. Amplitude 0
/// marks a control group; its truth mask is all false.
pub fn make_cohort(
    model: &MixtureModel,
    per_group: usize,
    voxels: usize,
    amplitudes: &[f64],
    template: &AnomalySpec,
    seed: u64,
) -> Result<Vec<Subject>> {
    if per_group == 0 || voxels == 0 || amplitudes.is_empty() {
        return usage("a cohort needs at least one group, subject and voxel");
    }
    template.validate(model.dim())?;
    let jobs: Vec<(usize, usize)> =
        (0..amplitudes.len()).flat_map(|g| (0..per_group).map(move |s| (g, s))).collect();
    jobs.par_iter()
        .enumerate()
        .map(|(idx, &(g, s))| {
            let stream = subject_seed(seed, idx as u64);
            let (mut data, _) = sample_mixture(model, voxels, stream)?;
            let spec = AnomalySpec { amplitude: amplitudes[g], ..template.clone() };
            let truth = inject_anomalies(&mut data, &spec, stream ^ 0xA5A5_A5A5)?;
            let truth = if amplitudes[g] == 0.0 { vec![false; truth.len()] } else { truth };
            Ok(Subject { id: format!("g{g}-s{s:03}"), group: g, amplitude: amplitudes[g], data, truth })
        })
        .collect()
}
