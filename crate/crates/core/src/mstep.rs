//! Maximization of `Q(s; θ) = sᵀφ(θ) − ψ(θ)` over θ for a fixed statistic `s`.
//!
//! Component statistics are divided by their mass `s0_k` first, so `s3_m` and
//! `s4_m` act as posterior means of `W_m` and `log W_m`. For one MST
//! component the normalized objective is, up to θ-free terms,
//!
//! ```text
//! q(θ) = Σ_m [ −d_mᵀ S_m d_m / (2 A_m) − ½ log A_m
//!              − s3_m ν_m/2 + s4_m (1 + ν_m)/2 − log Γ(ν_m/2) + (ν_m/2) log(ν_m/2) ]
//! S_m  = S2_m − s1_m μᵀ − μ s1_mᵀ + s3_m μ μᵀ
//! ```
//!
//! Setting partial derivatives to zero gives `d_mᵀμ = d_mᵀ s1_m / s3_m`,
//! `A_m = d_mᵀ S_m d_m`, and for ν the scalar equation solved by
//! [`solve_nu`]. The basis is optimized over the orthogonal group by Givens
//! sweeps. ν is decoupled from the other parameters.

use std::f64::consts::FRAC_PI_4;

use crate::error::{usage, Error, Result};
use crate::linalg;
use crate::mixture::{Family, GaussianComponent, MixtureModel, MstComponent};
use crate::special::{digamma_unchecked, ln_gamma, trigamma_unchecked};
use crate::stats::SufficientStats;

/// Components with less mass than this are considered starved.
pub const STARVATION_MASS: f64 = 1e-8;
pub const NU_MIN: f64 = 0.05;
pub const NU_MAX: f64 = 1e4;
pub const A_FLOOR: f64 = 1e-10;
/// Relative ridge added to Gaussian covariances (times the average variance).
pub const COVARIANCE_RIDGE: f64 = 1e-6;

const MAX_SWEEPS: usize = 200;
const SWEEP_TOL: f64 = 1e-12;
const MAX_GIVENS_SWEEPS: usize = 10;
const GIVENS_TOL: f64 = 1e-12;
const FLAT_TOL: f64 = 1e-14;

/// Diagnostics of one MST M-step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MStepReport {
    pub q_before: f64,
    pub q_after: f64,
    /// Coordinate sweeps summed over components.
    pub inner_iterations: usize,
    /// `g(ν̂)` per component and axis, component-major.
    pub nu_residuals: Vec<f64>,
    /// False if some component hit the sweep budget before `|ΔQ|` settled.
    pub converged: bool,
    /// Axes whose ν was clamped to a bound or by damping.
    pub nu_clamped: usize,
    /// Axes whose scale A was non-positive before flooring.
    pub a_floored: usize,
}

/// Extra controls for the MST M-step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MstOptions {
    /// Limit ν to within this factor of the previous value.
    pub nu_max_ratio: Option<f64>,
    /// Hold every ν at this value instead of estimating it.
    pub fixed_nu: Option<f64>,
}

/// One axis' statistics divided by the component mass.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisMoments {
    pub s1: Vec<f64>,
    pub s2: Vec<f64>,
    pub s3: f64,
    pub s4: f64,
}

/// A component's MST statistics divided by its mass `s0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentMoments {
    pub dim: usize,
    pub axes: Vec<AxisMoments>,
}

impl ComponentMoments {
    pub fn from_stats(stats: &SufficientStats, k: usize) -> Result<Self> {
        if stats.family() != Family::Mst {
            return usage("MST moments need MST statistics");
        }
        let s0 = stats.s0(k);
        if !(s0 > STARVATION_MASS) {
            return Err(Error::Starved { component: k, mass: s0 });
        }
        let dim = stats.dim();
        let axes = (0..dim)
            .map(|m| {
                let v = stats.mst(k, m);
                AxisMoments {
                    s1: v.s1.iter().map(|x| x / s0).collect(),
                    s2: v.s2.iter().map(|x| x / s0).collect(),
                    s3: v.s3 / s0,
                    s4: v.s4 / s0,
                }
            })
            .collect();
        Ok(Self { dim, axes })
    }

    /// `S_m = S2_m − s1_m μᵀ − μ s1_mᵀ + s3_m μμᵀ`, symmetrized.
    pub fn scatter(&self, m: usize, mu: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let ax = &self.axes[m];
        let mut s = ax.s2.clone();
        for i in 0..d {
            for j in 0..d {
                s[i * d + j] += -ax.s1[i] * mu[j] - mu[i] * ax.s1[j] + ax.s3 * mu[i] * mu[j];
            }
        }
        linalg::symmetrize(&mut s, d);
        s
    }
}

/// `μ = Σ_m d_m (d_mᵀ s1_m) / s3_m` for a fixed basis.
pub fn update_mu(moments: &ComponentMoments, axes: &[f64]) -> Result<Vec<f64>> {
    let d = moments.dim;
    let mut mu = vec![0.0; d];
    for (m, ax) in moments.axes.iter().enumerate() {
        if !(ax.s3 > 0.0) {
            return Err(Error::Numeric(format!("starved axis {m}: s3 = {}", ax.s3)));
        }
        let dir = &axes[m * d..(m + 1) * d];
        let coef = linalg::dot(dir, &ax.s1) / ax.s3;
        for (x, di) in mu.iter_mut().zip(dir) {
            *x += coef * di;
        }
    }
    Ok(mu)
}

/// `A_m = d_mᵀS2_m d_m − 2(d_mᵀs1_m)(d_mᵀμ) + s3_m (d_mᵀμ)²`, floored at
/// [`A_FLOOR`]. Also returns how many axes needed the floor because the raw
/// value was not positive.
pub fn update_a(moments: &ComponentMoments, axes: &[f64], mu: &[f64]) -> (Vec<f64>, usize) {
    let d = moments.dim;
    let mut nonpositive = 0;
    let a = moments
        .axes
        .iter()
        .enumerate()
        .map(|(m, ax)| {
            let dir = &axes[m * d..(m + 1) * d];
            let dm = linalg::dot(dir, mu);
            let raw = linalg::quad_form(&ax.s2, d, dir) - 2.0 * linalg::dot(dir, &ax.s1) * dm
                + ax.s3 * dm * dm;
            if !(raw > 0.0) {
                nonpositive += 1;
            }
            raw.max(A_FLOOR)
        })
        .collect();
    (a, nonpositive)
}

/// Result of a basis update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisUpdate {
    pub objective_before: f64,
    pub objective_after: f64,
    pub sweeps: usize,
}

/// `Σ_m d_mᵀ S_m d_m / A_m`, the basis-dependent part of `−2q`.
pub fn basis_objective(scatters: &[Vec<f64>], a: &[f64], axes: &[f64]) -> f64 {
    axis_sum(scatters, axes, &|m, quad| quad / a[m])
}

/// `Σ_m log(d_mᵀ S_m d_m)`: the basis objective after substituting the
/// optimal scale `A_m = d_mᵀ S_m d_m` for every axis.
pub fn profiled_basis_objective(scatters: &[Vec<f64>], axes: &[f64]) -> f64 {
    axis_sum(scatters, axes, &profiled_cost)
}

fn profiled_cost(_m: usize, quad: f64) -> f64 {
    quad.max(A_FLOOR).ln()
}

fn axis_sum(scatters: &[Vec<f64>], axes: &[f64], cost: &dyn Fn(usize, f64) -> f64) -> f64 {
    let d = scatters.len();
    (0..d)
        .map(|m| cost(m, linalg::quad_form(&scatters[m], d, &axes[m * d..(m + 1) * d])))
        .sum()
}

/// Minimizes [`basis_objective`] over orthogonal bases by cyclic Givens
/// sweeps. For every axis pair the rotation angle comes from a golden-section
/// search on `[−π/4, π/4]` (endpoints included as candidates); a rotation is
/// only applied if it lowers the objective by more than a flat-tolerance.
pub fn update_basis(moments: &ComponentMoments, mu: &[f64], a: &[f64], axes: &mut [f64]) -> BasisUpdate {
    let scatters: Vec<Vec<f64>> = (0..moments.dim).map(|m| moments.scatter(m, mu)).collect();
    rotate_basis(&scatters, a, axes)
}

/// [`update_basis`] on precomputed scatter matrices.
pub fn rotate_basis(scatters: &[Vec<f64>], a: &[f64], axes: &mut [f64]) -> BasisUpdate {
    givens_sweeps(scatters, axes, &|m, quad| quad / a[m])
}

/// Same sweeps on [`profiled_basis_objective`], so each pair rotation also
/// moves the two scales to their optimum. Used inside the MST M-step, where
/// rotating against frozen scales converges slowly.
pub fn rotate_basis_profiled(scatters: &[Vec<f64>], axes: &mut [f64]) -> BasisUpdate {
    givens_sweeps(scatters, axes, &profiled_cost)
}

fn givens_sweeps(scatters: &[Vec<f64>], axes: &mut [f64], cost: &dyn Fn(usize, f64) -> f64) -> BasisUpdate {
    let d = scatters.len();
    let before = axis_sum(scatters, axes, cost);
    let mut obj = before;
    let mut sweeps = 0;
    if d < 2 {
        return BasisUpdate { objective_before: before, objective_after: before, sweeps };
    }
    for _ in 0..MAX_GIVENS_SWEEPS {
        sweeps += 1;
        let start = obj;
        for p in 0..d {
            for q in p + 1..d {
                rotate_pair(scatters, axes, cost, p, q);
            }
        }
        obj = axis_sum(scatters, axes, cost);
        if start - obj <= GIVENS_TOL * start.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    if linalg::orthogonality_error(axes, d) > 1e-12 {
        // Rotations preserve orthogonality exactly in exact arithmetic; this
        // only removes accumulated rounding.
        let _ = linalg::orthonormalize(axes, d);
        obj = axis_sum(scatters, axes, cost);
    }
    BasisUpdate { objective_before: before, objective_after: obj, sweeps }
}

fn rotate_pair(scatters: &[Vec<f64>], axes: &mut [f64], cost: &dyn Fn(usize, f64) -> f64, p: usize, q: usize) {
    let d = scatters.len();
    let (dp, dq) = (&axes[p * d..(p + 1) * d], &axes[q * d..(q + 1) * d]);
    let sp = &scatters[p];
    let sq = &scatters[q];
    // 2x2 projections of S_p and S_q onto span(d_p, d_q)
    let (pa, pb, pc) = (
        linalg::quad_form(sp, d, dp),
        linalg::bilinear(sp, d, dp, dq),
        linalg::quad_form(sp, d, dq),
    );
    let (qa, qb, qc) = (
        linalg::quad_form(sq, d, dp),
        linalg::bilinear(sq, d, dp, dq),
        linalg::quad_form(sq, d, dq),
    );
    let f = |theta: f64| {
        let (s, c) = theta.sin_cos();
        cost(p, c * c * pa + 2.0 * c * s * pb + s * s * pc) + cost(q, s * s * qa - 2.0 * c * s * qb + c * c * qc)
    };
    let f0 = f(0.0);
    let (mut best, mut f_best) = golden_section_min(&f, -FRAC_PI_4, FRAC_PI_4);
    for edge in [-FRAC_PI_4, FRAC_PI_4] {
        let fe = f(edge);
        if fe < f_best {
            best = edge;
            f_best = fe;
        }
    }
    if f0 - f_best <= FLAT_TOL * f0.abs().max(f64::MIN_POSITIVE) {
        return;
    }
    let (s, c) = best.sin_cos();
    for i in 0..d {
        let xp = axes[p * d + i];
        let xq = axes[q * d + i];
        axes[p * d + i] = c * xp + s * xq;
        axes[q * d + i] = -s * xp + c * xq;
    }
}

fn golden_section_min(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..200 {
        if hi - lo < 1e-12 {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Stationarity equation for ν given normalized `s3`, `s4`:
/// `g(ν) = log(ν/2) + 1 − ψ(ν/2) + s4 − s3`. Strictly decreasing in ν.
pub fn nu_equation(nu: f64, s3: f64, s4: f64) -> f64 {
    let h = 0.5 * nu;
    h.ln() - digamma_unchecked(h) + 1.0 + (s4 - s3)
}

fn nu_equation_derivative(nu: f64) -> f64 {
    1.0 / nu - 0.5 * trigamma_unchecked(0.5 * nu)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NuBound {
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NuSolution {
    pub nu: f64,
    /// `g(ν)` at the returned value.
    pub residual: f64,
    pub clamped: Option<NuBound>,
}

/// Root of [`nu_equation`] on `[NU_MIN, NU_MAX]` by Newton steps safeguarded
/// with bisection (in log ν) on a bracketing interval. If `g` keeps one sign
/// over the interval the nearest bound is returned and flagged.
pub fn solve_nu(s3: f64, s4: f64) -> Result<NuSolution> {
    if !(s3 > 0.0) || !s3.is_finite() || !s4.is_finite() {
        return Err(Error::Numeric(format!("invalid ν statistics s3 = {s3}, s4 = {s4}")));
    }
    let g = |nu: f64| nu_equation(nu, s3, s4);
    let g_hi = g(NU_MAX);
    if g_hi >= 0.0 {
        return Ok(NuSolution { nu: NU_MAX, residual: g_hi, clamped: Some(NuBound::Upper) });
    }
    let g_lo = g(NU_MIN);
    if g_lo <= 0.0 {
        return Ok(NuSolution { nu: NU_MIN, residual: g_lo, clamped: Some(NuBound::Lower) });
    }
    let (mut lo, mut hi) = (NU_MIN, NU_MAX);
    // log(x) − ψ(x) ≈ 1/(2x) for large x, so g ≈ 1/ν + 1 + s4 − s3.
    let gap = -(1.0 + s4 - s3);
    let mut nu = if gap > 0.0 { (1.0 / gap).clamp(NU_MIN * 2.0, NU_MAX * 0.5) } else { NU_MAX * 0.5 };
    let mut gv = g(nu);
    for _ in 0..200 {
        if gv == 0.0 {
            break;
        }
        if gv > 0.0 {
            lo = nu;
        } else {
            hi = nu;
        }
        let newton = nu - gv / nu_equation_derivative(nu);
        let next = if newton > lo && newton < hi && newton.is_finite() {
            newton
        } else {
            (lo * hi).sqrt()
        };
        let step = (next - nu).abs();
        nu = next;
        gv = g(nu);
        if step <= 1e-15 * nu || hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(NuSolution { nu, residual: gv, clamped: None })
}

/// Gaussian M-step: `π_k = s0_k / Σ s0`, `μ_k = s1_k / s0_k`,
/// `Σ_k = S2_k/s0_k − μ_k μ_kᵀ + λ I` with `λ` a small multiple of the
/// average variance. No inverse is formed; the Cholesky factor is refreshed
/// by component construction.
pub fn thetabar_gaussian(stats: &SufficientStats) -> Result<MixtureModel> {
    if stats.family() != Family::Gaussian {
        return usage("thetabar_gaussian needs Gaussian statistics");
    }
    let d = stats.dim();
    let total = stats.total_mass();
    let mut weights = Vec::with_capacity(stats.k());
    let mut comps = Vec::with_capacity(stats.k());
    for k in 0..stats.k() {
        let v = stats.gaussian(k);
        if !(v.s0 > STARVATION_MASS) {
            return Err(Error::Starved { component: k, mass: v.s0 });
        }
        let mu: Vec<f64> = v.s1.iter().map(|x| x / v.s0).collect();
        let mut sigma: Vec<f64> = v.s2.iter().map(|x| x / v.s0).collect();
        let second_moment = (0..d).map(|i| sigma[i * d + i]).sum::<f64>() / d as f64;
        for i in 0..d {
            for j in 0..d {
                sigma[i * d + j] -= mu[i] * mu[j];
            }
        }
        linalg::symmetrize(&mut sigma, d);
        let ridge = COVARIANCE_RIDGE * ridge_scale(&sigma, d, second_moment);
        for i in 0..d {
            sigma[i * d + i] += ridge;
        }
        weights.push(v.s0 / total);
        comps.push(GaussianComponent::new(mu, sigma)?);
    }
    MixtureModel::gaussian(weights, comps)
}

/// Average variance, falling back to the average second moment (then 1) when
/// the component collapsed to a point.
fn ridge_scale(cov: &[f64], d: usize, second_moment: f64) -> f64 {
    let avg_var = (0..d).map(|i| cov[i * d + i]).sum::<f64>() / d as f64;
    if avg_var > 1e-12 * second_moment && avg_var > 0.0 {
        avg_var
    } else if second_moment > 0.0 {
        second_moment
    } else {
        1.0
    }
}

/// MST M-step by cyclic coordinate ascent (ν, then μ → (D, A)), warm-started
/// at `prev`, until `|ΔQ| < 1e-12 |Q|` or 200 sweeps.
pub fn thetabar_mst(
    stats: &SufficientStats,
    prev: &MixtureModel,
    opts: &MstOptions,
) -> Result<(MixtureModel, MStepReport)> {
    if stats.family() != Family::Mst {
        return usage("thetabar_mst needs MST statistics");
    }
    let prev_comps = match prev.mst_components() {
        Some(c) if c.len() == stats.k() && prev.dim() == stats.dim() => c,
        _ => return usage("warm start does not match the statistics layout"),
    };
    let d = stats.dim();
    let total = stats.total_mass();
    let mut report = MStepReport { converged: true, ..Default::default() };
    let mut weights = Vec::with_capacity(stats.k());
    let mut comps = Vec::with_capacity(stats.k());
    for (k, pc) in prev_comps.iter().enumerate() {
        let moments = ComponentMoments::from_stats(stats, k)?;
        let s0 = stats.s0(k);
        let pi = s0 / total;
        let log_pi = pi.ln();
        report.q_before += s0 * (prev.log_weights()[k] + q_component(&moments, pc.mu(), pc.axes(), pc.a(), pc.nu()));

        let mut nu = Vec::with_capacity(d);
        for (m, ax) in moments.axes.iter().enumerate() {
            let value = match opts.fixed_nu {
                Some(v) => v,
                None => {
                    let sol = solve_nu(ax.s3, ax.s4)?;
                    let mut v = sol.nu;
                    if sol.clamped.is_some() {
                        report.nu_clamped += 1;
                    }
                    if let Some(r) = opts.nu_max_ratio {
                        let old = pc.nu()[m];
                        let damped = v.clamp(old / r, old * r).clamp(NU_MIN, NU_MAX);
                        if damped != v {
                            report.nu_clamped += 1;
                            v = damped;
                        }
                    }
                    v
                }
            };
            report.nu_residuals.push(nu_equation(value, ax.s3, ax.s4));
            nu.push(value);
        }

        let mut axes = pc.axes().to_vec();
        let mut mu;
        let mut a;
        let mut q_prev = f64::NAN;
        let mut settled = false;
        for _ in 0..MAX_SWEEPS {
            report.inner_iterations += 1;
            mu = update_mu(&moments, &axes)?;
            let scatters: Vec<Vec<f64>> = (0..d).map(|m| moments.scatter(m, &mu)).collect();
            rotate_basis_profiled(&scatters, &mut axes);
            a = update_a(&moments, &axes, &mu).0;
            let q = q_component(&moments, &mu, &axes, &a, &nu);
            if (q - q_prev).abs() < SWEEP_TOL * q.abs() {
                settled = true;
                break;
            }
            q_prev = q;
        }
        if !settled {
            report.converged = false;
        }
        if linalg::orthogonality_error(&axes, d) > 1e-12 {
            linalg::orthonormalize(&mut axes, d)?;
        }
        mu = update_mu(&moments, &axes)?;
        let (a_final, nonpositive) = update_a(&moments, &axes, &mu);
        a = a_final;
        report.a_floored += nonpositive;
        report.q_after += s0 * (log_pi + q_component(&moments, &mu, &axes, &a, &nu));
        weights.push(pi);
        comps.push(MstComponent::from_axes(mu, axes, a, nu)?);
    }
    Ok((MixtureModel::mst(weights, comps)?, report))
}

/// Dispatches to the family's M-step.
pub fn thetabar(
    stats: &SufficientStats,
    prev: &MixtureModel,
    opts: &MstOptions,
) -> Result<(MixtureModel, Option<MStepReport>)> {
    match stats.family() {
        Family::Gaussian => Ok((thetabar_gaussian(stats)?, None)),
        Family::Mst => thetabar_mst(stats, prev, opts).map(|(m, r)| (m, Some(r))),
    }
}

/// Normalized per-component MST objective (see module docs).
pub fn q_component(moments: &ComponentMoments, mu: &[f64], axes: &[f64], a: &[f64], nu: &[f64]) -> f64 {
    let d = moments.dim;
    let mut q = 0.0;
    for (m, ax) in moments.axes.iter().enumerate() {
        let dir = &axes[m * d..(m + 1) * d];
        let dm = linalg::dot(dir, mu);
        let quad = linalg::quad_form(&ax.s2, d, dir) - 2.0 * linalg::dot(dir, &ax.s1) * dm
            + ax.s3 * dm * dm;
        let h = 0.5 * nu[m];
        q += -quad / (2.0 * a[m]) - 0.5 * a[m].ln() - ax.s3 * h + ax.s4 * (0.5 + h) - ln_gamma(h)
            + h * h.ln();
    }
    q
}

/// `Q(s; θ)` for an MST mixture, up to θ-free terms.
pub fn q_mst(stats: &SufficientStats, model: &MixtureModel) -> Result<f64> {
    let comps = model
        .mst_components()
        .ok_or_else(|| Error::Usage("q_mst needs an MST model".into()))?;
    let mut q = 0.0;
    for (k, c) in comps.iter().enumerate() {
        let s0 = stats.s0(k);
        if s0 == 0.0 {
            continue;
        }
        let moments = ComponentMoments::from_stats(stats, k)?;
        q += s0 * (model.weights()[k].ln() + q_component(&moments, c.mu(), c.axes(), c.a(), c.nu()));
    }
    Ok(q)
}

/// `Q(s; θ)` for a Gaussian mixture:
/// `Σ_k s0_k log π_k − ½ s0_k log|Σ_k| − ½ tr(Σ_k⁻¹ S_k) − ½ s0_k M log 2π`
/// with `S_k = S2_k − s1_k μ_kᵀ − μ_k s1_kᵀ + s0_k μ_k μ_kᵀ`, evaluated with
/// triangular solves.
pub fn q_gaussian(stats: &SufficientStats, model: &MixtureModel) -> Result<f64> {
    let comps = model
        .gaussian_components()
        .ok_or_else(|| Error::Usage("q_gaussian needs a Gaussian model".into()))?;
    let d = stats.dim();
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    let mut q = 0.0;
    let mut col = vec![0.0; d];
    for (k, c) in comps.iter().enumerate() {
        let v = stats.gaussian(k);
        let mu = c.mu();
        let mut trace = 0.0;
        for j in 0..d {
            for i in 0..d {
                col[i] = v.s2[i * d + j] - v.s1[i] * mu[j] - mu[i] * v.s1[j] + v.s0 * mu[i] * mu[j];
            }
            linalg::forward_solve_in_place(c.chol(), d, &mut col);
            linalg::backward_solve_transpose_in_place(c.chol(), d, &mut col);
            trace += col[j];
        }
        let half_log_det = linalg::half_log_det(c.chol(), d);
        q += v.s0 * model.weights()[k].ln() - v.s0 * half_log_det - 0.5 * trace
            - 0.5 * v.s0 * d as f64 * ln_2pi;
    }
    Ok(q)
}

/// Replaces component `k`'s statistics with those of a copy of the component
/// recentred at `center`, carrying `mass` of the total; the other components
/// are scaled to share the rest so the total mass is unchanged.
///
/// The injected record is the expectation of the complete-data statistic when
/// data come from that component, so `θ̄` maps it back to the component.
pub fn reseed_component(
    stats: &mut SufficientStats,
    model: &MixtureModel,
    k: usize,
    center: &[f64],
    mass: f64,
) -> Result<()> {
    let total = stats.total_mass();
    let others = total - stats.s0(k);
    let keep = if others > 0.0 { (1.0 - mass) * total / others } else { 1.0 - mass };
    for j in 0..stats.k() {
        if j != k {
            stats.component_mut(j).iter_mut().for_each(|v| *v *= keep);
        }
    }
    let fresh = component_expected_stats(model, k, Some(center), mass * total)?;
    stats.component_mut(k).copy_from_slice(fresh.component(0));
    Ok(())
}

/// Expected complete-data statistics (mass `mass`) of data drawn from
/// component `k` of `model`, optionally with its mean moved to `center`.
/// Gaussian reseeds use the weight-averaged covariance of all components.
pub fn component_expected_stats(
    model: &MixtureModel,
    k: usize,
    center: Option<&[f64]>,
    mass: f64,
) -> Result<SufficientStats> {
    let d = model.dim();
    let mut out = SufficientStats::zeros(model.family(), 1, d);
    match model.family() {
        Family::Gaussian => {
            let comps = model.gaussian_components().unwrap();
            let (mu, sigma) = match center {
                Some(c) => {
                    let mut pooled = vec![0.0; d * d];
                    for (w, comp) in model.weights().iter().zip(comps) {
                        pooled.iter_mut().zip(comp.sigma()).for_each(|(p, s)| *p += w * s);
                    }
                    (c.to_vec(), pooled)
                }
                None => (comps[k].mu().to_vec(), comps[k].sigma().to_vec()),
            };
            let rec = out.component_mut(0);
            rec[0] = mass;
            for i in 0..d {
                rec[1 + i] = mass * mu[i];
                for j in 0..d {
                    rec[1 + d + i * d + j] = mass * (sigma[i * d + j] + mu[i] * mu[j]);
                }
            }
        }
        Family::Mst => {
            let comp = &model.mst_components().unwrap()[k];
            let mu = center.unwrap_or(comp.mu()).to_vec();
            let scale = comp.scale_matrix();
            let rec = out.component_mut(0);
            rec[0] = mass;
            for m in 0..d {
                let (o1, o2, o3, o4) = SufficientStats::mst_offsets(d, m);
                let h = 0.5 * comp.nu()[m];
                for i in 0..d {
                    rec[o1 + i] = mass * mu[i];
                    for j in 0..d {
                        rec[o2 + i * d + j] = mass * (scale[i * d + j] + mu[i] * mu[j]);
                    }
                }
                rec[o3] = mass;
                rec[o4] = mass * (digamma_unchecked(h) - h.ln());
            }
        }
    }
    Ok(out)
}
