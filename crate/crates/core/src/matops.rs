//! Dense symmetric linear algebra.
//!
//! Everything here goes through one eigendecomposition: `e^{-Bt}`, the
//! integrated propagator `I_t(B) = (1 - e^{-Bt}) B^{-1}` and the extremal
//! eigenvalues all share the same spectrum, so the identity
//! `I_t(B) B = 1 - e^{-Bt}` holds to round-off even when `B` is singular.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Below this value of `|a t|` the scalar propagator switches to its Taylor series.
pub const IT_TAYLOR_SWITCH: f64 = 1e-6;

/// Relative jitter ladder (multiplied by `trace / dim`) tried by [`chol_jitter`].
pub const JITTER_LADDER: [f64; 4] = [0.0, 1e-12, 1e-10, 1e-8];

/// A finite, square, symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Validates `m` and replaces it by `(m + m^T) / 2`.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::InvalidMatrix(format!(
                "not square: {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.nrows() == 0 {
            return Err(Error::InvalidMatrix("empty matrix".into()));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMatrix("non-finite entry".into()));
        }
        let sym = (&m + m.transpose()) * 0.5;
        Ok(SymMatrix(sym))
    }

    pub fn identity(dim: usize) -> Self {
        SymMatrix(DMatrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Self {
        SymMatrix(DMatrix::zeros(dim, dim))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn frobenius(&self) -> f64 {
        self.0.norm()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }
}

/// Spectral decomposition `B = U diag(λ) U^T` with eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct EigDecomp {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl EigDecomp {
    /// `U diag(f(λ)) U^T`.
    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> SymMatrix {
        let u = &self.eigenvectors;
        let mut scaled = u.clone();
        for (j, &lam) in self.eigenvalues.iter().enumerate() {
            let s = f(lam);
            scaled.column_mut(j).scale_mut(s);
        }
        let m = scaled * u.transpose();
        SymMatrix((&m + m.transpose()) * 0.5)
    }

    pub fn reconstruct(&self) -> SymMatrix {
        self.map(|l| l)
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues[self.eigenvalues.len() - 1]
    }

    pub fn expm_neg(&self, t: f64) -> Result<SymMatrix> {
        check_time(t)?;
        if t == 0.0 {
            return Ok(SymMatrix::identity(self.eigenvalues.len()));
        }
        Ok(self.map(|a| (-a * t).exp()))
    }

    pub fn i_t(&self, t: f64) -> Result<SymMatrix> {
        check_time(t)?;
        Ok(self.map(|a| i_t_scalar(a, t)))
    }
}

fn check_time(t: f64) -> Result<()> {
    if t.is_finite() && t >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidTime(t))
    }
}

/// `I_t(a) = ∫_0^t e^{-as} ds`.
pub fn i_t_scalar(a: f64, t: f64) -> f64 {
    let at = a * t;
    if at.abs() < IT_TAYLOR_SWITCH {
        t - a * t * t / 2.0 + a * a * t * t * t / 6.0
    } else {
        -(-at).exp_m1() / a
    }
}

pub fn sym_eig(b: &SymMatrix) -> Result<EigDecomp> {
    let eig = SymmetricEigen::new(b.0.clone());
    let n = b.dim();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    if eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidMatrix("eigensolver produced non-finite values".into()));
    }
    Ok(EigDecomp {
        eigenvalues,
        eigenvectors,
    })
}

/// `e^{-Bt}`.
pub fn expm_neg(b: &SymMatrix, t: f64) -> Result<SymMatrix> {
    check_time(t)?;
    sym_eig(b)?.expm_neg(t)
}

/// `I_t(B)`, the spectral extension of `(1 - e^{-Bt}) B^{-1}`.
pub fn i_t(b: &SymMatrix, t: f64) -> Result<SymMatrix> {
    check_time(t)?;
    sym_eig(b)?.i_t(t)
}

pub fn min_eig(b: &SymMatrix) -> Result<f64> {
    Ok(sym_eig(b)?.min())
}

/// Lower Cholesky factor of `B + jitter * 1`.
#[derive(Debug, Clone)]
pub struct JitteredCholesky {
    pub factor: DMatrix<f64>,
    pub jitter: f64,
}

/// Cholesky factorization escalating the diagonal jitter through [`JITTER_LADDER`].
pub fn chol_jitter(b: &SymMatrix) -> Result<JitteredCholesky> {
    let n = b.dim();
    let norm = b.frobenius();
    if norm == 0.0 {
        return Ok(JitteredCholesky {
            factor: DMatrix::zeros(n, n),
            jitter: 0.0,
        });
    }
    let lam = min_eig(b)?;
    if lam < -1e-8 * norm {
        return Err(Error::NotPsd { min_eig: lam });
    }
    let scale = b.trace() / n as f64;
    for rel in JITTER_LADDER {
        let eps = rel * scale;
        let mut m = b.0.clone();
        for i in 0..n {
            m[(i, i)] += eps;
        }
        if let Some(ch) = m.cholesky() {
            let factor = ch.l();
            if factor.iter().all(|v| v.is_finite()) {
                return Ok(JitteredCholesky { factor, jitter: eps });
            }
        }
    }
    Err(Error::NotPsd { min_eig: lam })
}
