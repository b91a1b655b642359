//! Helpers shared by the integration tests: random models, independent
//! quadrature oracles and finite-difference utilities.
#![allow(dead_code)]

use omix::mixture::{Dataset, GaussianComponent, MixtureModel, MstComponent};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Haar-ish random orthogonal matrix via Gram–Schmidt on Gaussian columns,
/// stored with column m at `[m*d..(m+1)*d]`.
pub fn random_orthogonal(r: &mut impl Rng, d: usize) -> Vec<f64> {
    loop {
        let mut q: Vec<f64> = (0..d * d).map(|_| normal(r)).collect();
        let mut ok = true;
        for j in 0..d {
            for i in 0..j {
                let dot: f64 = (0..d).map(|t| q[i * d + t] * q[j * d + t]).sum();
                for t in 0..d {
                    q[j * d + t] -= dot * q[i * d + t];
                }
            }
            let n: f64 = (0..d).map(|t| q[j * d + t].powi(2)).sum::<f64>().sqrt();
            if n < 1e-6 {
                ok = false;
                break;
            }
            (0..d).for_each(|t| q[j * d + t] /= n);
        }
        if ok {
            return q;
        }
    }
}

pub fn normal(r: &mut impl Rng) -> f64 {
    r.sample(rand_distr::StandardNormal)
}

/// Random SPD matrix `Q diag(λ) Qᵀ` with eigenvalues in `[lo, hi]`.
pub fn random_spd(r: &mut impl Rng, d: usize, lo: f64, hi: f64) -> Vec<f64> {
    let q = random_orthogonal(r, d);
    let lam: Vec<f64> = (0..d).map(|_| r.random_range(lo..hi)).collect();
    let mut s = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            s[i * d + j] = (0..d).map(|m| q[m * d + i] * lam[m] * q[m * d + j]).sum();
        }
    }
    s
}

fn random_weights(r: &mut impl Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| r.random_range(0.5..1.5)).collect();
    let t: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|x| x / t).collect();
    let head: f64 = w[..k - 1].iter().sum();
    w[k - 1] = 1.0 - head;
    w
}

/// Means placed on a jittered grid `sep` apart.
fn spread_means(r: &mut impl Rng, k: usize, d: usize, sep: f64) -> Vec<Vec<f64>> {
    let mut means: Vec<Vec<f64>> = Vec::new();
    while means.len() < k {
        let cand: Vec<f64> = (0..d).map(|_| r.random_range(-sep * k as f64..sep * k as f64)).collect();
        let far = means.iter().all(|m| {
            m.iter().zip(&cand).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() >= sep
        });
        if far {
            means.push(cand);
        }
    }
    means
}

pub fn random_gaussian_model(r: &mut impl Rng, k: usize, d: usize, sep: f64) -> MixtureModel {
    let means = spread_means(r, k, d, sep);
    let comps = means
        .into_iter()
        .map(|mu| GaussianComponent::new(mu, random_spd(r, d, 0.3, 1.5)).unwrap())
        .collect();
    MixtureModel::gaussian(random_weights(r, k), comps).unwrap()
}

pub fn random_mst_model(r: &mut impl Rng, k: usize, d: usize, sep: f64, nu: (f64, f64)) -> MixtureModel {
    let means = spread_means(r, k, d, sep);
    let comps = means
        .into_iter()
        .map(|mu| {
            let axes = random_orthogonal(r, d);
            let a = (0..d).map(|_| r.random_range(0.3..1.5)).collect();
            let v = (0..d).map(|_| r.random_range(nu.0..nu.1)).collect();
            MstComponent::from_axes(mu, axes, a, v).unwrap()
        })
        .collect();
    MixtureModel::mst(random_weights(r, k), comps).unwrap()
}

/// Trapezoid rule on a uniform grid.
pub fn trapezoid(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let h = (hi - lo) / n as f64;
    let mut s = 0.5 * (f(lo) + f(hi));
    for i in 1..n {
        s += f(lo + i as f64 * h);
    }
    s * h
}

/// Gauss–Legendre nodes and weights on [-1, 1] by Newton on P_n.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        loop {
            let (mut p0, mut p1) = (1.0, z);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * z * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                let dp = {
                    let (mut p0, mut p1) = (1.0, z);
                    for j in 2..=n {
                        let p2 = ((2 * j - 1) as f64 * z * p1 - (j - 1) as f64 * p0) / j as f64;
                        p0 = p1;
                        p1 = p2;
                    }
                    n as f64 * (z * p1 - p0) / (z * z - 1.0)
                };
                x[i] = z;
                w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
                break;
            }
        }
    }
    (x, w)
}

/// `∫_{-∞}^{∞} f` via `x = c + s·tan(θ)` and composite Gauss–Legendre on
/// `(−π/2, π/2)` split into `panels` pieces.
pub fn integrate_real_line(f: impl Fn(f64) -> f64, c: f64, s: f64, panels: usize) -> f64 {
    integrate_to(f, c, s, panels, f64::INFINITY)
}

/// `∫_{-∞}^{x}` with the same substitution.
pub fn integrate_to(f: impl Fn(f64) -> f64, c: f64, s: f64, panels: usize, x: f64) -> f64 {
    let (nodes, weights) = gauss_legendre(20);
    let hi = if x.is_finite() { ((x - c) / s).atan() } else { std::f64::consts::FRAC_PI_2 };
    let lo = -std::f64::consts::FRAC_PI_2;
    let h = (hi - lo) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let a = lo + p as f64 * h;
        for (z, w) in nodes.iter().zip(&weights) {
            let t = a + 0.5 * h * (z + 1.0);
            let ct = t.cos();
            let jac = s / (ct * ct);
            let v = f(c + s * t.tan()) * jac;
            if v.is_finite() {
                total += 0.5 * h * w * v;
            }
        }
    }
    total
}

/// Mean `s̄` of a synthetic sample under `model`: random but valid statistics.
pub fn random_valid_stats(
    truth: &MixtureModel,
    under: &MixtureModel,
    n: usize,
    seed: u64,
) -> omix::SufficientStats {
    let (data, _) = omix::datagen::sample_mixture(truth, n, seed).unwrap();
    omix::batch::expected_stats(under, &data).unwrap().stats
}

pub fn dataset(dim: usize, rows: &[f64]) -> Dataset {
    Dataset::new(dim, rows.to_vec()).unwrap()
}
