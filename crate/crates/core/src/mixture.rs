//! Mixture containers and density evaluation for Gaussian and multiple scale
//! t (MST) mixtures.
//!
//! An MST component with parameters (μ, D, A, ν) is a Gaussian scale mixture
//! in which every axis `d_m` of the orthogonal basis `D` carries its own gamma
//! weight `W_m ~ Gamma(ν_m/2, ν_m/2)`. Given the weights the covariance is
//! `D diag(A_m / W_m) Dᵀ`, so in the rotated coordinates `u = Dᵀ(y − μ)` the
//! coordinates are conditionally independent normals with variance `A_m/W_m`,
//! and the weights are independent a priori. Integrating each `W_m` out
//! separately gives the product of univariate Student-t densities
//!
//! ```text
//! f(y) = Π_m St(u_m; 0, A_m, ν_m)
//! ```
//!
//! (the Jacobian of the orthogonal change of variables is 1). That product is
//! what [`MstComponent::logpdf`] evaluates.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{usage, Error, Result};
use crate::linalg;
use crate::special::{digamma_unchecked, ln_gamma};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Row-major block of feature vectors sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    values: Vec<f64>,
}

impl Dataset {
    pub fn new(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return usage("feature dimension must be at least 1");
        }
        if !values.len().is_multiple_of(dim) {
            return usage(format!(
                "{} values do not split into rows of dimension {dim}",
                values.len()
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite feature in row {} (column {})",
                i / dim,
                i % dim
            )));
        }
        Ok(Self { dim, values })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = match rows.first() {
            Some(r) => r.as_ref().len(),
            None => return usage("cannot infer dimension of an empty row set"),
        };
        let mut values = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return usage(format!("row of length {} in dimension-{dim} data", r.len()));
            }
            values.extend_from_slice(r);
        }
        Self::new(dim, values)
    }

    pub fn empty(dim: usize) -> Self {
        Self { dim, values: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn push(&mut self, row: &[f64]) -> Result<()> {
        check_vector(row, self.dim)?;
        self.values.extend_from_slice(row);
        Ok(())
    }

    /// Rows `[start, end)` as a new dataset.
    pub fn slice(&self, start: usize, end: usize) -> Dataset {
        Dataset {
            dim: self.dim,
            values: self.values[start * self.dim..end * self.dim].to_vec(),
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        for row in self.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        let n = self.len().max(1) as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }

    /// Maximum-likelihood (1/n) covariance, row-major.
    pub fn covariance(&self) -> Vec<f64> {
        let d = self.dim;
        let mean = self.mean();
        let mut cov = vec![0.0; d * d];
        for row in self.rows() {
            for i in 0..d {
                let di = row[i] - mean[i];
                for j in 0..d {
                    cov[i * d + j] += di * (row[j] - mean[j]);
                }
            }
        }
        let n = self.len().max(1) as f64;
        cov.iter_mut().for_each(|c| *c /= n);
        cov
    }
}

pub(crate) fn check_vector(y: &[f64], dim: usize) -> Result<()> {
    if y.len() != dim {
        return usage(format!("feature vector has length {}, model dimension is {dim}", y.len()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite feature value".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Gaussian,
    Mst,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Gaussian => f.write_str("gaussian"),
            Family::Mst => f.write_str("mst"),
        }
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "gmm" => Ok(Family::Gaussian),
            "mst" | "student" => Ok(Family::Mst),
            other => usage(format!("unknown family '{other}' (expected gaussian or mst)")),
        }
    }
}

/// Full-covariance Gaussian component with a cached Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent {
    mu: Vec<f64>,
    sigma: Vec<f64>,
    chol: Vec<f64>,
    half_log_det: f64,
}

impl GaussianComponent {
    /// Builds a component; `sigma` is row-major and must be symmetric to
    /// 1e-12 relative and positive definite.
    pub fn new(mu: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        let m = mu.len();
        if m == 0 || sigma.len() != m * m {
            return usage(format!("sigma must be {m}x{m}"));
        }
        if mu.iter().chain(&sigma).any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite Gaussian parameter".into()));
        }
        if linalg::relative_asymmetry(&sigma, m) > 1e-12 {
            return Err(Error::Format("sigma is not symmetric".into()));
        }
        let chol = linalg::cholesky(&sigma, m)?;
        let half_log_det = linalg::half_log_det(&chol, m);
        Ok(Self { mu, sigma, chol, half_log_det })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    /// Lower Cholesky factor of sigma, row-major.
    pub fn chol(&self) -> &[f64] {
        &self.chol
    }

    /// Squared Mahalanobis distance of `y` to the component.
    pub fn mahalanobis_sq(&self, y: &[f64]) -> Result<f64> {
        check_vector(y, self.dim())?;
        let mut scratch = vec![0.0; self.dim()];
        Ok(self.mahalanobis_sq_with(y, &mut scratch))
    }

    #[inline]
    pub(crate) fn mahalanobis_sq_with(&self, y: &[f64], scratch: &mut [f64]) -> f64 {
        for ((s, yi), mi) in scratch.iter_mut().zip(y).zip(&self.mu) {
            *s = yi - mi;
        }
        linalg::mahalanobis_sq_in_place(&self.chol, self.mu.len(), scratch)
    }

    pub fn logpdf(&self, y: &[f64]) -> Result<f64> {
        check_vector(y, self.dim())?;
        let mut scratch = vec![0.0; self.dim()];
        Ok(self.logpdf_with(y, &mut scratch))
    }

    #[inline]
    pub(crate) fn logpdf_with(&self, y: &[f64], scratch: &mut [f64]) -> f64 {
        let m = self.mu.len() as f64;
        -0.5 * m * LN_2PI - self.half_log_det - 0.5 * self.mahalanobis_sq_with(y, scratch)
    }
}

/// Multiple scale t component: mean, orthogonal basis, per-axis scales and
/// per-axis degrees of freedom.
#[derive(Debug, Clone, PartialEq)]
pub struct MstComponent {
    mu: Vec<f64>,
    // axis m occupies basis[m*M..(m+1)*M]
    basis: Vec<f64>,
    a: Vec<f64>,
    nu: Vec<f64>,
    // per-axis log normalizer of the univariate t density
    log_norm: Vec<f64>,
    // ψ((ν_m + 1)/2)
    digamma_alpha: Vec<f64>,
    // ln(ν_m / 2)
    log_half_nu: Vec<f64>,
}

impl MstComponent {
    /// Builds a component from a row-major `D` whose columns are the axes.
    pub fn new(mu: Vec<f64>, d: Vec<f64>, a: Vec<f64>, nu: Vec<f64>) -> Result<Self> {
        let m = mu.len();
        if d.len() != m * m {
            return usage(format!("D must be {m}x{m}"));
        }
        let mut basis = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                basis[j * m + i] = d[i * m + j];
            }
        }
        Self::from_axes(mu, basis, a, nu)
    }

    /// Builds a component from axes stored contiguously (`axes[m]` = column m of D).
    pub fn from_axes(mu: Vec<f64>, axes: Vec<f64>, a: Vec<f64>, nu: Vec<f64>) -> Result<Self> {
        let m = mu.len();
        if m == 0 || axes.len() != m * m || a.len() != m || nu.len() != m {
            return usage(format!("inconsistent MST parameter shapes for dimension {m}"));
        }
        if mu.iter().chain(&axes).chain(&a).chain(&nu).any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite MST parameter".into()));
        }
        if let Some(v) = a.iter().find(|v| !(**v > 0.0)) {
            return Err(Error::Format(format!("MST scale A must be positive, got {v}")));
        }
        if let Some(v) = nu.iter().find(|v| !(**v > 0.0)) {
            return Err(Error::Format(format!("MST degrees of freedom must be positive, got {v}")));
        }
        let err = linalg::orthogonality_error(&axes, m);
        if err > 1e-10 {
            return Err(Error::Format(format!("D is not orthogonal (|DᵀD − I| = {err:e})")));
        }
        let log_norm = a
            .iter()
            .zip(&nu)
            .map(|(&am, &nm)| {
                ln_gamma(0.5 * (nm + 1.0)) - ln_gamma(0.5 * nm) - 0.5 * (nm * PI * am).ln()
            })
            .collect();
        let digamma_alpha = nu.iter().map(|&nm| digamma_unchecked(0.5 * (nm + 1.0))).collect();
        let log_half_nu = nu.iter().map(|&nm| (0.5 * nm).ln()).collect();
        Ok(Self { mu, basis: axes, a, nu, log_norm, digamma_alpha, log_half_nu })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    /// Axis `m` of the basis (column `m` of D).
    pub fn axis(&self, m: usize) -> &[f64] {
        let d = self.dim();
        &self.basis[m * d..(m + 1) * d]
    }

    /// All axes, contiguous.
    pub fn axes(&self) -> &[f64] {
        &self.basis
    }

    /// D in row-major layout.
    pub fn d_row_major(&self) -> Vec<f64> {
        let m = self.dim();
        let mut d = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                d[i * m + j] = self.basis[j * m + i];
            }
        }
        d
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn nu(&self) -> &[f64] {
        &self.nu
    }

    /// `D diag(A) Dᵀ`, row-major.
    pub fn scale_matrix(&self) -> Vec<f64> {
        let m = self.dim();
        let mut s = vec![0.0; m * m];
        for k in 0..m {
            let d = self.axis(k);
            for i in 0..m {
                for j in 0..m {
                    s[i * m + j] += self.a[k] * d[i] * d[j];
                }
            }
        }
        s
    }

    pub(crate) fn log_norm(&self) -> &[f64] {
        &self.log_norm
    }

    pub(crate) fn digamma_alpha(&self) -> &[f64] {
        &self.digamma_alpha
    }

    pub(crate) fn log_half_nu(&self) -> &[f64] {
        &self.log_half_nu
    }

    /// Rotated coordinates `u = Dᵀ(y − μ)`, written into `out`.
    #[inline]
    pub fn project_into(&self, y: &[f64], out: &mut [f64]) {
        let m = self.dim();
        for (k, o) in out.iter_mut().enumerate().take(m) {
            let axis = &self.basis[k * m..(k + 1) * m];
            *o = axis.iter().zip(y).zip(&self.mu).map(|((d, yi), mi)| d * (yi - mi)).sum();
        }
    }

    pub fn logpdf(&self, y: &[f64]) -> Result<f64> {
        check_vector(y, self.dim())?;
        let mut scratch = vec![0.0; self.dim()];
        Ok(self.logpdf_with(y, &mut scratch))
    }

    #[inline]
    pub(crate) fn logpdf_with(&self, y: &[f64], scratch: &mut [f64]) -> f64 {
        self.project_into(y, scratch);
        let mut acc = 0.0;
        for m in 0..self.dim() {
            let z = scratch[m] * scratch[m] / (self.nu[m] * self.a[m]);
            acc += self.log_norm[m] - 0.5 * (self.nu[m] + 1.0) * z.ln_1p();
        }
        acc
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Components {
    Gaussian(Vec<GaussianComponent>),
    Mst(Vec<MstComponent>),
}

impl Components {
    pub fn len(&self) -> usize {
        match self {
            Components::Gaussian(c) => c.len(),
            Components::Mst(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Posterior component weights for one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    pub weights: Vec<f64>,
    /// Mixture log-density at the observation.
    pub log_density: f64,
    /// Set when every component log-density was non-finite and the weights
    /// fell back to uniform.
    pub degenerate: bool,
}

/// A finite mixture `Σ_k π_k f(y; θ_k)` of one component family.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel {
    dim: usize,
    weights: Vec<f64>,
    log_weights: Vec<f64>,
    components: Components,
}

impl MixtureModel {
    pub fn new(weights: Vec<f64>, components: Components) -> Result<Self> {
        let k = components.len();
        if k == 0 {
            return usage("a mixture needs at least one component");
        }
        if weights.len() != k {
            return usage(format!("{} weights for {k} components", weights.len()));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Format("weights not on simplex (negative or non-finite)".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Format(format!("weights not on simplex (sum = {total})")));
        }
        let dims: Vec<usize> = match &components {
            Components::Gaussian(c) => c.iter().map(GaussianComponent::dim).collect(),
            Components::Mst(c) => c.iter().map(MstComponent::dim).collect(),
        };
        let dim = dims[0];
        if dims.iter().any(|&d| d != dim) {
            return usage("components disagree on the feature dimension");
        }
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(Self { dim, weights, log_weights, components })
    }

    pub fn gaussian(weights: Vec<f64>, components: Vec<GaussianComponent>) -> Result<Self> {
        Self::new(weights, Components::Gaussian(components))
    }

    pub fn mst(weights: Vec<f64>, components: Vec<MstComponent>) -> Result<Self> {
        Self::new(weights, Components::Mst(components))
    }

    pub fn family(&self) -> Family {
        match self.components {
            Components::Gaussian(_) => Family::Gaussian,
            Components::Mst(_) => Family::Mst,
        }
    }

    /// Number of components.
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub(crate) fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn components(&self) -> &Components {
        &self.components
    }

    pub fn gaussian_components(&self) -> Option<&[GaussianComponent]> {
        match &self.components {
            Components::Gaussian(c) => Some(c),
            Components::Mst(_) => None,
        }
    }

    pub fn mst_components(&self) -> Option<&[MstComponent]> {
        match &self.components {
            Components::Mst(c) => Some(c),
            Components::Gaussian(_) => None,
        }
    }

    /// Free-parameter count used as the model-selection penalty.
    ///
    /// Gaussian: `K (1 + M + M(M+1)/2)`. MST: `K (1 + 3M + M(M−1))`, counting
    /// the basis as `M(M−1)`.
    pub fn param_count(&self) -> usize {
        param_count(self.family(), self.k(), self.dim)
    }

    /// `log π_k + log f(y; θ_k)` for every component, into `out`.
    #[inline]
    /// Heap and inline bytes held by the model.
    pub(crate) fn byte_size(&self) -> usize {
        let f = std::mem::size_of::<f64>();
        let comps = match &self.components {
            Components::Gaussian(cs) => cs
                .iter()
                .map(|c| {
                    std::mem::size_of::<GaussianComponent>()
                        + f * (c.mu.capacity() + c.sigma.capacity() + c.chol.capacity())
                })
                .sum::<usize>(),
            Components::Mst(cs) => cs
                .iter()
                .map(|c| {
                    std::mem::size_of::<MstComponent>()
                        + f * (c.mu.capacity()
                            + c.basis.capacity()
                            + c.a.capacity()
                            + c.nu.capacity()
                            + c.log_norm.capacity()
                            + c.digamma_alpha.capacity()
                            + c.log_half_nu.capacity())
                })
                .sum(),
        };
        std::mem::size_of::<Self>() + f * (self.weights.capacity() + self.log_weights.capacity()) + comps
    }

    pub(crate) fn log_joint_into(&self, y: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        match &self.components {
            Components::Gaussian(cs) => {
                for ((o, c), lw) in out.iter_mut().zip(cs).zip(&self.log_weights) {
                    *o = lw + c.logpdf_with(y, scratch);
                }
            }
            Components::Mst(cs) => {
                for ((o, c), lw) in out.iter_mut().zip(cs).zip(&self.log_weights) {
                    *o = lw + c.logpdf_with(y, scratch);
                }
            }
        }
    }

    /// Log of the mixture density, stabilized by a max shift.
    pub fn logpdf(&self, y: &[f64]) -> Result<f64> {
        check_vector(y, self.dim)?;
        let mut joint = vec![0.0; self.k()];
        let mut scratch = vec![0.0; self.dim];
        Ok(self.logpdf_with(y, &mut joint, &mut scratch))
    }

    #[inline]
    pub(crate) fn logpdf_with(&self, y: &[f64], joint: &mut [f64], scratch: &mut [f64]) -> f64 {
        self.log_joint_into(y, joint, scratch);
        log_sum_exp(joint)
    }

    pub fn responsibilities(&self, y: &[f64]) -> Result<Responsibilities> {
        check_vector(y, self.dim)?;
        let mut weights = vec![0.0; self.k()];
        let mut scratch = vec![0.0; self.dim];
        self.log_joint_into(y, &mut weights, &mut scratch);
        let (log_density, degenerate) = normalize_log_weights(&mut weights);
        Ok(Responsibilities { weights, log_density, degenerate })
    }

    pub fn validate_input(&self, y: &[f64]) -> Result<()> {
        check_vector(y, self.dim)
    }
}

pub fn param_count(family: Family, k: usize, m: usize) -> usize {
    let per = match family {
        Family::Gaussian => 1 + m + m * (m + 1) / 2,
        Family::Mst => 1 + 3 * m + m * (m - 1),
    };
    k * per
}

#[inline]
pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Turns log joint weights into responsibilities in place. Returns the
/// log-normalizer and whether the uniform fallback was used.
#[inline]
pub(crate) fn normalize_log_weights(v: &mut [f64]) -> (f64, bool) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        let u = 1.0 / v.len() as f64;
        v.iter_mut().for_each(|x| *x = u);
        return (max, true);
    }
    let mut total = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    v.iter_mut().for_each(|x| *x /= total);
    (max + total.ln(), false)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn std_gauss(m: usize) -> GaussianComponent {
        let mut sigma = vec![0.0; m * m];
        (0..m).for_each(|i| sigma[i * m + i] = 1.0);
        GaussianComponent::new(vec![0.0; m], sigma).unwrap()
    }

    fn identity(m: usize) -> Vec<f64> {
        let mut d = vec![0.0; m * m];
        (0..m).for_each(|i| d[i * m + i] = 1.0);
        d
    }

    #[test]
    fn gaussian_logpdf_closed_forms() {
        let g1 = std_gauss(1);
        assert!((g1.logpdf(&[0.0]).unwrap() + 0.918_938_533_204_672_7).abs() < 1e-12);
        let g2 = std_gauss(2);
        assert!((g2.logpdf(&[1.0, 1.0]).unwrap() + 2.837_877_066_409_345).abs() < 1e-12);
    }

    #[test]
    fn gaussian_logpdf_errors() {
        let g = std_gauss(2);
        assert!(matches!(g.logpdf(&[1.0]), Err(Error::Usage(_))));
        assert!(matches!(g.logpdf(&[1.0, f64::NAN]), Err(Error::Data(_))));
    }

    #[test]
    fn cauchy_special_case() {
        let c = MstComponent::new(vec![0.0], vec![1.0], vec![1.0], vec![1.0]).unwrap();
        assert!((c.logpdf(&[0.0]).unwrap() - (1.0 / PI).ln()).abs() < 1e-12);
    }

    #[test]
    fn mst_axis_aligned_is_sum_of_univariate_t() {
        let c = MstComponent::new(vec![0.0, 0.0], identity(2), vec![1.0, 1.0], vec![3.0, 5.0])
            .unwrap();
        // Univariate t closed form written out independently.
        let t = |x: f64, nu: f64| {
            ln_gamma((nu + 1.0) / 2.0)
                - ln_gamma(nu / 2.0)
                - 0.5 * (nu * PI).ln()
                - (nu + 1.0) / 2.0 * (1.0 + x * x / nu).ln()
        };
        let expected = t(0.5, 3.0) + t(-0.2, 5.0);
        assert!((c.logpdf(&[0.5, -0.2]).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn mst_rejects_bad_parameters() {
        let bad_d = vec![1.0, 0.1, 0.0, 1.0];
        assert!(MstComponent::new(vec![0.0; 2], bad_d, vec![1.0; 2], vec![1.0; 2]).is_err());
        assert!(MstComponent::new(vec![0.0], vec![1.0], vec![0.0], vec![1.0]).is_err());
        assert!(MstComponent::new(vec![0.0], vec![1.0], vec![1.0], vec![-1.0]).is_err());
    }

    #[test]
    fn single_component_mixture_equals_component() {
        let g = std_gauss(2);
        let y = [0.3, -0.7];
        let model = MixtureModel::gaussian(vec![1.0], vec![g.clone()]).unwrap();
        assert_eq!(model.logpdf(&y).unwrap(), g.logpdf(&y).unwrap());
        assert_eq!(model.responsibilities(&y).unwrap().weights, vec![1.0]);
    }

    #[test]
    fn duplicate_components() {
        let g = std_gauss(2);
        let y = [0.3, -0.7];
        let model = MixtureModel::gaussian(vec![0.5, 0.5], vec![g.clone(), g.clone()]).unwrap();
        assert!((model.logpdf(&y).unwrap() - g.logpdf(&y).unwrap()).abs() < 1e-14);
        let model = MixtureModel::gaussian(vec![0.3, 0.7], vec![g.clone(), g]).unwrap();
        let r = model.responsibilities(&y).unwrap();
        assert!((r.weights[0] - 0.3).abs() < 1e-15 && (r.weights[1] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn weights_must_sum_to_one() {
        let err = MixtureModel::gaussian(vec![0.9], vec![std_gauss(1)]).unwrap_err();
        assert!(err.to_string().contains("weights not on simplex"));
    }

    #[test]
    fn responsibilities_fall_back_to_uniform() {
        let mut v = vec![f64::NEG_INFINITY; 3];
        let (lse, degenerate) = normalize_log_weights(&mut v);
        assert!(degenerate && lse == f64::NEG_INFINITY);
        assert!(v.iter().all(|x| (*x - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn far_observations_do_not_underflow() {
        let a = GaussianComponent::new(vec![0.0], vec![1.0]).unwrap();
        let b = GaussianComponent::new(vec![10.0], vec![1.0]).unwrap();
        let model = MixtureModel::gaussian(vec![0.5, 0.5], vec![a, b]).unwrap();
        let r = model.responsibilities(&[1e3]).unwrap();
        assert!(!r.degenerate);
        assert!(r.log_density.is_finite());
        assert!((r.weights[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn param_counts() {
        assert_eq!(param_count(Family::Gaussian, 14, 3), 140);
        assert_eq!(param_count(Family::Mst, 8, 3), 128);
        assert_eq!(param_count(Family::Gaussian, 1, 1), 3);
    }

    #[test]
    fn dataset_validation() {
        assert!(Dataset::new(0, vec![]).is_err());
        assert!(Dataset::new(2, vec![1.0, 2.0, 3.0]).is_err());
        assert!(matches!(Dataset::new(1, vec![f64::INFINITY]), Err(Error::Data(_))));
        let d = Dataset::from_rows(&[vec![1.0, 2.0], vec![3.0, 6.0]]).unwrap();
        assert_eq!(d.mean(), vec![2.0, 4.0]);
        assert_eq!(d.covariance(), vec![1.0, 2.0, 2.0, 4.0]);
    }
}
