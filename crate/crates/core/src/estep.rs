//! Conditional expectations of the complete-data statistics given an
//! observation, `s̄(y; θ)`, for both mixture families.

use crate::error::{usage, Error, Result};
use crate::mixture::{
    check_vector, normalize_log_weights, Components, Family, MixtureModel, MstComponent,
};
use crate::special::digamma_unchecked;
use crate::stats::SufficientStats;

/// Posterior means `u_m = E[W_m | y]` and `ũ_m = E[log W_m | y]` for one MST
/// component.
///
/// The posterior of `W_m` is `Gamma(α_m, β_m)` with `α_m = (ν_m + 1)/2` and
/// `β_m = ν_m/2 + (d_mᵀ(y − μ))² / (2 A_m)`, so `u_m = α_m / β_m` and
/// `ũ_m = ψ(α_m) − log β_m`.
pub fn mst_weight_expectations(y: &[f64], c: &MstComponent) -> Result<(Vec<f64>, Vec<f64>)> {
    check_vector(y, c.dim())?;
    let m = c.dim();
    let mut proj = vec![0.0; m];
    c.project_into(y, &mut proj);
    let mut u = Vec::with_capacity(m);
    let mut u_log = Vec::with_capacity(m);
    for (i, p) in proj.iter().enumerate() {
        let nu = c.nu()[i];
        let alpha = 0.5 * (nu + 1.0);
        let beta = 0.5 * nu + p * p / (2.0 * c.a()[i]);
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::Numeric(format!("posterior rate β = {beta} on axis {i}")));
        }
        u.push(alpha / beta);
        u_log.push(digamma_unchecked(alpha) - beta.ln());
    }
    Ok((u, u_log))
}

/// Reusable buffers for streaming E-step accumulation.
#[derive(Debug, Clone)]
pub struct EStepWorkspace {
    joint: Vec<f64>,
    scratch: Vec<f64>,
    // per (k, m): squared rotated coordinate over ν A, then log1p of it
    z: Vec<f64>,
    l1p: Vec<f64>,
    outer: Vec<f64>,
}

impl EStepWorkspace {
    pub fn new(k: usize, dim: usize) -> Self {
        Self {
            joint: vec![0.0; k],
            scratch: vec![0.0; dim],
            z: vec![0.0; k * dim],
            l1p: vec![0.0; k * dim],
            outer: vec![0.0; dim * dim],
        }
    }

    pub(crate) fn byte_size(&self) -> usize {
        std::mem::size_of::<Self>()
            + 8 * (self.joint.capacity()
                + self.scratch.capacity()
                + self.z.capacity()
                + self.l1p.capacity()
                + self.outer.capacity())
    }

    /// Responsibilities from the most recent accumulation.
    pub fn last_responsibilities(&self) -> &[f64] {
        &self.joint
    }
}

/// Outcome of absorbing one observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Absorbed {
    pub log_density: f64,
    pub degenerate: bool,
}

/// Adds `weight · s̄(y; θ)` to `stats`. `y` must already be validated.
pub fn accumulate(
    model: &MixtureModel,
    y: &[f64],
    weight: f64,
    stats: &mut SufficientStats,
    ws: &mut EStepWorkspace,
) -> Absorbed {
    let dim = model.dim();
    let k_count = model.k();
    match model.components() {
        Components::Gaussian(_) => {
            model.log_joint_into(y, &mut ws.joint, &mut ws.scratch);
            let (log_density, degenerate) = normalize_log_weights(&mut ws.joint);
            outer_into(y, &mut ws.outer);
            for k in 0..k_count {
                let t = weight * ws.joint[k];
                let c = stats.component_mut(k);
                c[0] += t;
                for (s, yi) in c[1..1 + dim].iter_mut().zip(y) {
                    *s += t * yi;
                }
                for (s, o) in c[1 + dim..].iter_mut().zip(&ws.outer) {
                    *s += t * o;
                }
            }
            Absorbed { log_density, degenerate }
        }
        Components::Mst(cs) => {
            let lw = model.log_weights();
            for (k, c) in cs.iter().enumerate() {
                c.project_into(y, &mut ws.scratch);
                let mut acc = lw[k];
                for m in 0..dim {
                    let z = ws.scratch[m] * ws.scratch[m] / (c.nu()[m] * c.a()[m]);
                    let l = z.ln_1p();
                    ws.z[k * dim + m] = z;
                    ws.l1p[k * dim + m] = l;
                    acc += c.log_norm()[m] - 0.5 * (c.nu()[m] + 1.0) * l;
                }
                ws.joint[k] = acc;
            }
            let (log_density, degenerate) = normalize_log_weights(&mut ws.joint);
            outer_into(y, &mut ws.outer);
            for (k, c) in cs.iter().enumerate() {
                let t = weight * ws.joint[k];
                let rec = stats.component_mut(k);
                rec[0] += t;
                for m in 0..dim {
                    let nu = c.nu()[m];
                    let z = ws.z[k * dim + m];
                    // β = ν/2 (1 + z)
                    let beta = 0.5 * nu * (1.0 + z);
                    let u = 0.5 * (nu + 1.0) / beta;
                    let u_log = c.digamma_alpha()[m] - c.log_half_nu()[m] - ws.l1p[k * dim + m];
                    let tu = t * u;
                    let (o1, o2, o3, o4) = SufficientStats::mst_offsets(dim, m);
                    for (s, yi) in rec[o1..o1 + dim].iter_mut().zip(y) {
                        *s += tu * yi;
                    }
                    for (s, o) in rec[o2..o2 + dim * dim].iter_mut().zip(&ws.outer) {
                        *s += tu * o;
                    }
                    rec[o3] += tu;
                    rec[o4] += t * u_log;
                }
            }
            Absorbed { log_density, degenerate }
        }
    }
}

#[inline]
fn outer_into(y: &[f64], out: &mut [f64]) {
    let d = y.len();
    for i in 0..d {
        for j in i..d {
            let v = y[i] * y[j];
            out[i * d + j] = v;
            out[j * d + i] = v;
        }
    }
}

/// `s̄(y; θ)` for a single observation.
pub fn sbar(y: &[f64], model: &MixtureModel) -> Result<(SufficientStats, Absorbed)> {
    model.validate_input(y)?;
    let mut stats = SufficientStats::zeros(model.family(), model.k(), model.dim());
    let mut ws = EStepWorkspace::new(model.k(), model.dim());
    let absorbed = accumulate(model, y, 1.0, &mut stats, &mut ws);
    Ok((stats, absorbed))
}

/// `s̄(y; θ)` for an MST mixture: per component `s0 = t`, `s1_m = t u_m y`,
/// `S2_m = t u_m y yᵀ`, `s3_m = t u_m`, `s4_m = t ũ_m`.
pub fn sbar_mst(y: &[f64], model: &MixtureModel) -> Result<SufficientStats> {
    if model.family() != Family::Mst {
        return usage("sbar_mst needs an MST mixture");
    }
    Ok(sbar(y, model)?.0)
}

/// `s̄(y; θ)` for a Gaussian mixture: `s0 = t`, `s1 = t y`, `S2 = t y yᵀ`.
pub fn sbar_gaussian(y: &[f64], model: &MixtureModel) -> Result<SufficientStats> {
    if model.family() != Family::Gaussian {
        return usage("sbar_gaussian needs a Gaussian mixture");
    }
    Ok(sbar(y, model)?.0)
}

/// Mean of `s̄` over a block of rows, in row order.
pub fn mean_sbar(
    model: &MixtureModel,
    rows: &[f64],
    stats: &mut SufficientStats,
    ws: &mut EStepWorkspace,
) -> (f64, usize, usize) {
    let dim = model.dim();
    let n = rows.len() / dim;
    stats.fill(0.0);
    let w = 1.0 / n as f64;
    let mut ll = 0.0;
    let mut degenerate = 0;
    for y in rows.chunks_exact(dim) {
        let a = accumulate(model, y, w, stats, ws);
        ll += a.log_density;
        degenerate += a.degenerate as usize;
    }
    (ll / n as f64, n, degenerate)
}
