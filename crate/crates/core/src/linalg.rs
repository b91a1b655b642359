//! Small dense helpers on row-major `f64` slices.
//!
//! Feature dimensions are tiny (M is 3 in the imaging use case), so hot paths
//! use plain loops over flat storage rather than a matrix library. nalgebra is
//! only used off the hot path (eigendecomposition at initialization).

use crate::error::{Error, Result};

/// Lower Cholesky factor of a symmetric positive definite `m × m` matrix.
pub fn cholesky(a: &[f64], m: usize) -> Result<Vec<f64>> {
    debug_assert_eq!(a.len(), m * m);
    let mut l = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..=i {
            let mut sum = a[i * m + j];
            for k in 0..j {
                sum -= l[i * m + k] * l[j * m + k];
            }
            if i == j {
                if !(sum > 0.0) || !sum.is_finite() {
                    return Err(Error::Numeric(format!(
                        "matrix not positive definite (pivot {i} = {sum:e})"
                    )));
                }
                l[i * m + i] = sum.sqrt();
            } else {
                l[i * m + j] = sum / l[j * m + j];
            }
        }
    }
    Ok(l)
}

/// Solves `L x = b` in place for lower-triangular `L`.
#[inline]
pub fn forward_solve_in_place(l: &[f64], m: usize, x: &mut [f64]) {
    for i in 0..m {
        let mut sum = x[i];
        for k in 0..i {
            sum -= l[i * m + k] * x[k];
        }
        x[i] = sum / l[i * m + i];
    }
}

/// Solves `Lᵀ x = b` in place for lower-triangular `L`.
#[inline]
pub fn backward_solve_transpose_in_place(l: &[f64], m: usize, x: &mut [f64]) {
    for i in (0..m).rev() {
        let mut sum = x[i];
        for k in i + 1..m {
            sum -= l[k * m + i] * x[k];
        }
        x[i] = sum / l[i * m + i];
    }
}

/// `(x)ᵀ Σ⁻¹ (x)` through the Cholesky factor; `x` is overwritten.
#[inline]
pub fn mahalanobis_sq_in_place(l: &[f64], m: usize, x: &mut [f64]) -> f64 {
    forward_solve_in_place(l, m, x);
    x.iter().map(|v| v * v).sum()
}

/// Sum of the log-diagonal of a triangular factor, i.e. `½ log|Σ|`.
pub fn half_log_det(l: &[f64], m: usize) -> f64 {
    (0..m).map(|i| l[i * m + i].ln()).sum()
}

pub fn symmetrize(a: &mut [f64], m: usize) {
    for i in 0..m {
        for j in i + 1..m {
            let v = 0.5 * (a[i * m + j] + a[j * m + i]);
            a[i * m + j] = v;
            a[j * m + i] = v;
        }
    }
}

/// Largest `|a_ij − a_ji|` relative to the largest entry.
pub fn relative_asymmetry(a: &[f64], m: usize) -> f64 {
    let scale = a.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut worst = 0.0f64;
    for i in 0..m {
        for j in i + 1..m {
            worst = worst.max((a[i * m + j] - a[j * m + i]).abs());
        }
    }
    worst / scale
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `vᵀ A v` for row-major `A`.
#[inline]
pub fn quad_form(a: &[f64], m: usize, v: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..m {
        let row = &a[i * m..(i + 1) * m];
        acc += v[i] * dot(row, v);
    }
    acc
}

/// `uᵀ A v` for row-major `A`.
#[inline]
pub fn bilinear(a: &[f64], m: usize, u: &[f64], v: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..m {
        let row = &a[i * m..(i + 1) * m];
        acc += u[i] * dot(row, v);
    }
    acc
}

/// Symmetric eigendecomposition. Eigenvalues are returned in descending order;
/// eigenvector `j` occupies `vectors[j*m..(j+1)*m]`.
pub fn sym_eigen(a: &[f64], m: usize) -> (Vec<f64>, Vec<f64>) {
    let mat = nalgebra::DMatrix::from_row_slice(m, m, a);
    let eig = nalgebra::SymmetricEigen::new(mat);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = Vec::with_capacity(m * m);
    for &i in &order {
        vectors.extend(eig.eigenvectors.column(i).iter().copied());
    }
    (values, vectors)
}

/// Re-orthonormalizes `m` vectors of length `m` stored contiguously, by
/// modified Gram–Schmidt in index order. Directions and signs are preserved.
pub fn orthonormalize(columns: &mut [f64], m: usize) -> Result<()> {
    for j in 0..m {
        for i in 0..j {
            let (head, tail) = columns.split_at_mut(j * m);
            let qi = &head[i * m..(i + 1) * m];
            let vj = &mut tail[..m];
            let r = dot(qi, vj);
            for (v, q) in vj.iter_mut().zip(qi) {
                *v -= r * q;
            }
        }
        let vj = &mut columns[j * m..(j + 1) * m];
        let norm = dot(vj, vj).sqrt();
        if !(norm > 1e-300) {
            return Err(Error::Numeric("basis collapsed during re-orthonormalization".into()));
        }
        vj.iter_mut().for_each(|v| *v /= norm);
    }
    Ok(())
}

/// `max |QᵀQ − I|` for vectors stored contiguously.
pub fn orthogonality_error(columns: &[f64], m: usize) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m {
        for j in 0..m {
            let g = dot(&columns[i * m..(i + 1) * m], &columns[j * m..(j + 1) * m]);
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g - target).abs());
        }
    }
    worst
}
