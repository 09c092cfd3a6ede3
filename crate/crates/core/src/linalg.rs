//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{HamError, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub fn sym(a: &Mat) -> Mat {
    (a + a.transpose()) * 0.5
}

pub fn antisym(a: &Mat) -> Mat {
    (a - a.transpose()) * 0.5
}

/// Largest absolute entry.
pub fn max_abs(a: &Mat) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

pub fn asymmetry(a: &Mat) -> f64 {
    max_abs(&(a - a.transpose()))
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky_lower(g: &Mat) -> Option<Mat> {
    nalgebra::Cholesky::new(sym(g)).map(|c| c.l())
}

pub fn inverse(a: &Mat) -> Result<Mat> {
    a.clone()
        .try_inverse()
        .ok_or_else(|| HamError::IllConditioned { what: "matrix inverse".into(), cond: f64::INFINITY })
}

/// Thin singular value decomposition `A = U diag(s) Vᵀ`, `s` descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Mat,
    pub s: Vec<f64>,
    pub v: Mat,
}

/// One-sided Jacobi SVD.
///
/// `nalgebra`'s bidiagonal SVD returns wrong singular values on some exactly
/// rank-deficient inputs (orthogonal projectors among them).
pub fn svd(a: &Mat) -> Svd {
    if a.nrows() < a.ncols() {
        let t = svd(&a.transpose());
        return Svd { u: t.v, s: t.s, v: t.u };
    }
    let (m, n) = a.shape();
    let mut w = a.clone();
    let mut v = Mat::identity(n, n);
    for _sweep in 0..60 {
        let mut rotated = false;
        for i in 0..n {
            for j in (i + 1)..n {
                let alpha = w.column(i).norm_squared();
                let beta = w.column(j).norm_squared();
                let gamma = w.column(i).dot(&w.column(j));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for (mat, rows) in [(&mut w, m), (&mut v, n)] {
                    for r in 0..rows {
                        let (x, y) = (mat[(r, i)], mat[(r, j)]);
                        mat[(r, i)] = c * x - s * y;
                        mat[(r, j)] = s * x + c * y;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let sv: Vec<f64> = (0..n).map(|j| w.column(j).norm()).collect();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| sv[j].partial_cmp(&sv[i]).unwrap());
    let smax = sv.iter().fold(0.0_f64, |a, b| a.max(*b));
    let mut u = Mat::zeros(m, n);
    let mut filled = Vec::with_capacity(n);
    for (c, &k) in idx.iter().enumerate() {
        if sv[k] > f64::EPSILON * smax.max(f64::MIN_POSITIVE) * (m as f64) {
            u.set_column(c, &(w.column(k) / sv[k]));
            filled.push(c);
        }
    }
    // complete U on the numerical null space
    let mut e = 0;
    for c in 0..n {
        if filled.contains(&c) {
            continue;
        }
        while e < m {
            let mut x = Vector::zeros(m);
            x[e] = 1.0;
            e += 1;
            for _ in 0..2 {
                for &f in &filled {
                    let proj = u.column(f).dot(&x);
                    x -= u.column(f) * proj;
                }
            }
            let nx = x.norm();
            if nx > 1e-8 {
                u.set_column(c, &(x / nx));
                filled.push(c);
                break;
            }
        }
    }
    let s = idx.iter().map(|&k| sv[k]).collect();
    let v = Mat::from_fn(n, n, |r, c| v[(r, idx[c])]);
    Svd { u, s, v }
}

pub fn singular_values(a: &Mat) -> Vec<f64> {
    svd(a).s
}

/// Ratio of extreme singular values; infinite for rank-deficient input.
pub fn condition_number(a: &Mat) -> f64 {
    let s = singular_values(a);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

/// Eigenvalues in ascending order with matching eigenvector columns.
pub fn sym_eigen(a: &Mat) -> (Vec<f64>, Mat) {
    let n = a.nrows();
    if n == 0 {
        return (Vec::new(), Mat::zeros(0, 0));
    }
    let e = SymmetricEigen::new(sym(a));
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| e.eigenvalues[i].partial_cmp(&e.eigenvalues[j]).unwrap());
    let vals = idx.iter().map(|&i| e.eigenvalues[i]).collect();
    let vecs = Mat::from_fn(n, n, |r, c| e.eigenvectors[(r, idx[c])]);
    (vals, vecs)
}

pub fn min_eig(a: &Mat) -> f64 {
    sym_eigen(a).0.first().copied().unwrap_or(0.0)
}

pub fn max_eig(a: &Mat) -> f64 {
    sym_eigen(a).0.last().copied().unwrap_or(0.0)
}

/// Orthonormal basis (Euclidean) of the column span, via thin SVD.
pub fn orthonormal_columns(a: &Mat, rank_tol: f64) -> Mat {
    if a.ncols() == 0 {
        return Mat::zeros(a.nrows(), 0);
    }
    let d = svd(a);
    let smax = d.s.first().copied().unwrap_or(0.0);
    let keep = d.s.iter().take_while(|&&v| v > rank_tol * smax.max(1e-300)).count();
    d.u.columns(0, keep).into_owned()
}

/// Principal angles (ascending) between two column spans.
///
/// Cosines and sines are paired, `θ = atan2(sin, cos)`, so small angles keep
/// full relative accuracy.
pub fn principal_angles(a: &Mat, b: &Mat) -> Vec<f64> {
    let qa = orthonormal_columns(a, 1e-12);
    let qb = orthonormal_columns(b, 1e-12);
    if qa.ncols() == 0 || qb.ncols() == 0 {
        return Vec::new();
    }
    let (big, small) = if qa.ncols() >= qb.ncols() { (qa, qb) } else { (qb, qa) };
    let overlap = big.transpose() * &small;
    let cosines = singular_values(&overlap);
    let mut sines = singular_values(&(&small - &big * &overlap));
    sines.reverse();
    cosines.iter().zip(&sines).map(|(c, s)| s.atan2(*c)).collect()
}

/// Largest principal angle; zero means equal spans.
pub fn subspace_distance(a: &Mat, b: &Mat) -> f64 {
    principal_angles(a, b).into_iter().fold(0.0, f64::max)
}

/// Orthogonal factor of the polar decomposition.
pub fn polar_orthogonal(q: &Mat) -> Mat {
    let d = svd(q);
    d.u * d.v.transpose()
}

/// Deviation from orthogonality, `max |QᵀQ − I|`.
pub fn orthogonality_defect(q: &Mat) -> f64 {
    max_abs(&(q.transpose() * q - Mat::identity(q.ncols(), q.ncols())))
}

/// Column-major flattening helpers for matrix-valued ODE states.
pub fn mat_from_slice(rows: usize, cols: usize, s: &[f64]) -> Mat {
    Mat::from_column_slice(rows, cols, s)
}

pub fn write_mat(m: &Mat, out: &mut [f64]) {
    out.copy_from_slice(m.as_slice());
}

/// Fourth-order central difference weights on `t ± h, t ± 2h`.
pub const CD4: [(f64, f64); 4] = [(-2.0, 1.0 / 12.0), (-1.0, -8.0 / 12.0), (1.0, 8.0 / 12.0), (2.0, -1.0 / 12.0)];

/// Fourth-order central first derivative of a matrix-valued function.
pub fn cd4_mat<F>(mut f: F, t: f64, h: f64) -> Result<Mat>
where
    F: FnMut(f64) -> Result<Mat>,
{
    let mut acc: Option<Mat> = None;
    for (o, w) in CD4 {
        let v = f(t + o * h)? * (w / h);
        acc = Some(match acc {
            None => v,
            Some(a) => a + v,
        });
    }
    Ok(acc.unwrap())
}

/// Fourth-order central second derivative of a matrix-valued function.
pub fn cd4_second_mat<F>(mut f: F, t: f64, h: f64) -> Result<Mat>
where
    F: FnMut(f64) -> Result<Mat>,
{
    let w = [(-2.0, -1.0 / 12.0), (-1.0, 16.0 / 12.0), (0.0, -30.0 / 12.0), (1.0, 16.0 / 12.0), (2.0, -1.0 / 12.0)];
    let mut acc: Option<Mat> = None;
    for (o, c) in w {
        let v = f(t + o * h)? * (c / (h * h));
        acc = Some(match acc {
            None => v,
            Some(a) => a + v,
        });
    }
    Ok(acc.unwrap())
}

/// Step for central differences in a spatial coordinate of magnitude `x`.
pub fn fd_step(x: f64) -> f64 {
    f64::EPSILON.cbrt() * x.abs().max(1.0)
}

/// Compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct Kahan {
    sum: f64,
    c: f64,
}

impl Kahan {
    pub fn add(&mut self, x: f64) {
        let y = x - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

pub fn kahan_sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut k = Kahan::default();
    for x in it {
        k.add(x);
    }
    k.value()
}
