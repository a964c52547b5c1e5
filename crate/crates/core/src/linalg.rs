//! Small dense helpers shared by the model, structure and equivalence code.
//!
//! Everything works on `DMatrix<f64>`. Positive definiteness is decided by a
//! Cholesky factorization whose pivots must exceed `PIVOT_TOL` times the
//! largest diagonal entry; general solves go through partially pivoted LU
//! with the same relative singularity threshold against the max-abs entry.

use nalgebra::{DMatrix, DVector, LU};

use crate::error::{ModelError, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative pivot tolerance for symmetric and general factorizations.
pub const PIVOT_TOL: f64 = 1e-12;

pub fn max_abs(a: &Mat) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// `‖a − b‖_F / ‖a‖_F`, falling back to the absolute gap when `a` is zero.
pub fn rel_frobenius(a: &Mat, b: &Mat) -> f64 {
    let diff = (a - b).norm();
    let scale = a.norm();
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// Largest entry of `a − a'` relative to the largest entry of `a`.
pub fn asymmetry(a: &Mat) -> f64 {
    let scale = max_abs(a);
    if scale == 0.0 {
        return 0.0;
    }
    max_abs(&(a - a.transpose())) / scale
}

pub fn symmetrize(a: &Mat) -> Mat {
    (a + a.transpose()) * 0.5
}

/// Lower Cholesky factor of a symmetric matrix, or `None` if any pivot falls
/// below the relative tolerance. Only the lower triangle is read.
pub fn cholesky(a: &Mat) -> Option<Mat> {
    let n = a.nrows();
    if n != a.ncols() {
        return None;
    }
    let max_diag = (0..n).fold(0.0_f64, |m, i| m.max(a[(i, i)].abs()));
    let floor = PIVOT_TOL * max_diag;
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for p in 0..j {
            d -= l[(j, p)] * l[(j, p)];
        }
        if d.is_nan() || d <= floor || d <= 0.0 {
            return None;
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for p in 0..j {
                s -= l[(i, p)] * l[(j, p)];
            }
            l[(i, j)] = s / d;
        }
    }
    Some(l)
}

pub fn is_positive_definite(a: &Mat) -> bool {
    cholesky(a).is_some()
}

/// Solve `L L' X = B` given the lower factor.
pub fn cholesky_solve(l: &Mat, b: &Mat) -> Mat {
    let y = l
        .solve_lower_triangular(b)
        .expect("cholesky factor has a nonzero diagonal");
    l.transpose()
        .solve_upper_triangular(&y)
        .expect("cholesky factor has a nonzero diagonal")
}

/// Inverse of a symmetric positive definite matrix, symmetrized.
pub fn spd_inverse(a: &Mat) -> Option<Mat> {
    let l = cholesky(a)?;
    let inv = cholesky_solve(&l, &Mat::identity(a.nrows(), a.nrows()));
    Some(symmetrize(&inv))
}

/// Partially pivoted LU that refuses numerically singular input.
#[derive(Clone, Debug)]
pub struct Solver {
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl Solver {
    pub fn new(a: &Mat, what: &str) -> Result<Self> {
        let scale = max_abs(a);
        let lu = a.clone().lu();
        let u = lu.u();
        let min_pivot = u.diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        if scale == 0.0 || min_pivot <= PIVOT_TOL * scale {
            return Err(ModelError::Singular(what.to_string()));
        }
        Ok(Self { lu })
    }

    pub fn solve(&self, b: &Vector) -> Vector {
        self.lu.solve(b).expect("factorization checked nonsingular")
    }

    pub fn solve_mat(&self, b: &Mat) -> Mat {
        self.lu.solve(b).expect("factorization checked nonsingular")
    }
}
