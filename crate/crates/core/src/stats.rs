//! Streamed sufficient statistics of the complete-data exponential family.
//!
//! Per component `k` the record starts with the responsibility mass `s0_k`.
//! Gaussian components follow with `s1_k = Σ t y` and `S2_k = Σ t y yᵀ`. MST
//! components carry one block per basis axis `m`:
//! `s1_km = Σ t u_m y`, `S2_km = Σ t u_m y yᵀ`, `s3_km = Σ t u_m` and
//! `s4_km = Σ t ũ_m`, where `u_m`, `ũ_m` are the posterior means of `W_m`
//! and `log W_m`. Everything lives in one flat buffer so the stochastic
//! approximation update is a single fused loop.

use crate::error::{usage, Result};
use crate::mixture::Family;

#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    family: Family,
    k: usize,
    dim: usize,
    data: Vec<f64>,
}

/// Borrowed view of one Gaussian component's statistics.
#[derive(Debug, Clone, Copy)]
pub struct GaussianStats<'a> {
    pub s0: f64,
    pub s1: &'a [f64],
    pub s2: &'a [f64],
}

/// Borrowed view of one MST component's statistics along axis `m`.
#[derive(Debug, Clone, Copy)]
pub struct MstAxisStats<'a> {
    pub s1: &'a [f64],
    pub s2: &'a [f64],
    pub s3: f64,
    pub s4: f64,
}

impl SufficientStats {
    pub fn zeros(family: Family, k: usize, dim: usize) -> Self {
        let stride = Self::stride_for(family, dim);
        Self { family, k, dim, data: vec![0.0; k * stride] }
    }

    fn stride_for(family: Family, dim: usize) -> usize {
        match family {
            Family::Gaussian => 1 + dim + dim * dim,
            Family::Mst => 1 + dim * Self::axis_stride_for(dim),
        }
    }

    fn axis_stride_for(dim: usize) -> usize {
        dim + dim * dim + 2
    }

    #[inline]
    fn stride(&self) -> usize {
        Self::stride_for(self.family, self.dim)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn component(&self, k: usize) -> &[f64] {
        let s = self.stride();
        &self.data[k * s..(k + 1) * s]
    }

    pub fn component_mut(&mut self, k: usize) -> &mut [f64] {
        let s = self.stride();
        &mut self.data[k * s..(k + 1) * s]
    }

    pub fn s0(&self, k: usize) -> f64 {
        self.data[k * self.stride()]
    }

    pub fn total_mass(&self) -> f64 {
        (0..self.k).map(|k| self.s0(k)).sum()
    }

    pub fn gaussian(&self, k: usize) -> GaussianStats<'_> {
        debug_assert_eq!(self.family, Family::Gaussian);
        let d = self.dim;
        let c = self.component(k);
        GaussianStats { s0: c[0], s1: &c[1..1 + d], s2: &c[1 + d..1 + d + d * d] }
    }

    pub fn mst(&self, k: usize, m: usize) -> MstAxisStats<'_> {
        debug_assert_eq!(self.family, Family::Mst);
        let d = self.dim;
        let base = 1 + m * Self::axis_stride_for(d);
        let c = self.component(k);
        MstAxisStats {
            s1: &c[base..base + d],
            s2: &c[base + d..base + d + d * d],
            s3: c[base + d + d * d],
            s4: c[base + d + d * d + 1],
        }
    }

    /// Offsets of `(s1, S2, s3, s4)` for axis `m` within a component record.
    #[inline]
    pub(crate) fn mst_offsets(dim: usize, m: usize) -> (usize, usize, usize, usize) {
        let base = 1 + m * Self::axis_stride_for(dim);
        (base, base + dim, base + dim + dim * dim, base + dim + dim * dim + 1)
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn scale(&mut self, c: f64) {
        self.data.iter_mut().for_each(|x| *x *= c);
    }

    pub fn add_assign(&mut self, other: &SufficientStats) -> Result<()> {
        self.check_layout(other)?;
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
        Ok(())
    }

    /// `self ← γ·target + (1 − γ)·self`.
    pub fn blend_towards(&mut self, target: &SufficientStats, gamma: f64) -> Result<()> {
        self.check_layout(target)?;
        let keep = 1.0 - gamma;
        self.data
            .iter_mut()
            .zip(&target.data)
            .for_each(|(a, b)| *a = gamma * b + keep * *a);
        Ok(())
    }

    fn check_layout(&self, other: &SufficientStats) -> Result<()> {
        if self.family != other.family || self.k != other.k || self.dim != other.dim {
            return usage("sufficient statistics have different layouts");
        }
        Ok(())
    }

    /// Largest absolute asymmetry over all second-moment blocks.
    pub fn max_asymmetry(&self) -> f64 {
        let d = self.dim;
        let mut worst = 0.0f64;
        let blocks: Vec<(usize, usize)> = (0..self.k)
            .flat_map(|k| {
                let start = k * self.stride();
                match self.family {
                    Family::Gaussian => vec![(k, start + 1 + d)],
                    Family::Mst => (0..d)
                        .map(|m| (k, start + Self::mst_offsets(d, m).1))
                        .collect(),
                }
            })
            .collect();
        for (_, off) in blocks {
            let s2 = &self.data[off..off + d * d];
            for i in 0..d {
                for j in i + 1..d {
                    worst = worst.max((s2[i * d + j] - s2[j * d + i]).abs());
                }
            }
        }
        worst
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn byte_size(&self) -> usize {
        std::mem::size_of::<Self>() + self.data.capacity() * std::mem::size_of::<f64>()
    }
}
