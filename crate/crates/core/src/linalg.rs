//! Dense symmetric factorizations over `faer`.

use faer::linalg::solvers::Solve;
use faer::linalg::triangular_solve::solve_lower_triangular_in_place;
use faer::{Mat, MatRef, Par, Side};

use crate::error::{Error, Result};

/// First diagonal jitter tried, relative to the variance scale.
pub const JITTER_START: f64 = 1e-10;
/// Largest diagonal jitter before giving up.
pub const JITTER_MAX: f64 = 1e-6;

/// Lower Cholesky factor `A + jitter * I = L L^T`.
pub struct Cholesky {
    llt: faer::linalg::solvers::Llt<f64>,
    jitter: f64,
}

impl Cholesky {
    /// Factorizes `a` as given; fails if it is not numerically positive definite.
    pub fn new(a: MatRef<'_, f64>) -> Result<Self> {
        check_square(a)?;
        let llt = a
            .llt(Side::Lower)
            .map_err(|e| Error::numeric(format!("cholesky failed: {e:?}")))?;
        Ok(Self { llt, jitter: 0.0 })
    }

    /// Factorizes `a`, adding diagonal jitter `scale * 1e-10`, escalated by
    /// factors of ten up to `scale * 1e-6`, if the plain factorization fails.
    pub fn with_jitter(a: MatRef<'_, f64>, scale: f64) -> Result<Self> {
        if let Ok(c) = Self::new(a) {
            return Ok(c);
        }
        let mut rel = JITTER_START;
        let mut work = a.to_owned();
        let mut added = 0.0;
        while rel <= JITTER_MAX * (1.0 + 1e-9) {
            let jitter = rel * scale;
            for i in 0..work.nrows() {
                work[(i, i)] += jitter - added;
            }
            added = jitter;
            if let Ok(llt) = work.llt(Side::Lower) {
                return Ok(Self { llt, jitter });
            }
            rel *= 10.0;
        }
        Err(Error::numeric(format!(
            "matrix not positive definite even with diagonal jitter {:e}",
            JITTER_MAX * scale
        )))
    }

    pub fn dim(&self) -> usize {
        self.llt.L().nrows()
    }

    /// Diagonal jitter that was added, zero if none.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn l(&self) -> MatRef<'_, f64> {
        self.llt.L()
    }

    pub fn log_det(&self) -> f64 {
        let l = self.llt.L();
        2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
    }

    /// `A^{-1} B`
    pub fn solve(&self, b: MatRef<'_, f64>) -> Mat<f64> {
        self.llt.solve(b)
    }

    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let rhs = col_mat(b);
        let x = self.llt.solve(&rhs);
        x.col(0).iter().copied().collect()
    }

    /// `L^{-1} b`; `|L^{-1} b|^2` is the quadratic form `b^T A^{-1} b`.
    pub fn half_solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let mut rhs = col_mat(b);
        solve_lower_triangular_in_place(self.llt.L(), rhs.as_mut(), Par::Seq);
        rhs.col(0).iter().copied().collect()
    }

    /// `L Z`
    pub fn lower_mul(&self, z: MatRef<'_, f64>) -> Mat<f64> {
        self.llt.L() * z
    }
}

/// Eigendecomposition `A = U diag(values) U^T` of a symmetric matrix,
/// eigenvalues in nondecreasing order.
pub struct SymmetricEigen {
    pub vectors: Mat<f64>,
    pub values: Vec<f64>,
}

impl SymmetricEigen {
    pub fn new(a: MatRef<'_, f64>) -> Result<Self> {
        check_square(a)?;
        let evd = a
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::numeric(format!("eigendecomposition failed: {e:?}")))?;
        let values = evd.S().column_vector().iter().copied().collect();
        Ok(Self {
            vectors: evd.U().to_owned(),
            values,
        })
    }
}

fn check_square(a: MatRef<'_, f64>) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::domain(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(())
}

/// Column matrix from a slice.
pub fn col_mat(v: &[f64]) -> Mat<f64> {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

/// Matrix-vector product `A v`.
pub fn mat_vec(a: MatRef<'_, f64>, v: &[f64]) -> Vec<f64> {
    let out = a * col_mat(v);
    out.col(0).iter().copied().collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Smallest over largest singular value; zero for an empty matrix.
pub fn inverse_condition(a: MatRef<'_, f64>) -> Result<f64> {
    let sv = a
        .singular_values()
        .map_err(|e| Error::numeric(format!("svd failed: {e:?}")))?;
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if max == 0.0 || sv.is_empty() {
        return Ok(0.0);
    }
    Ok(min / max)
}
