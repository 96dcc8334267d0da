//! Small dense complex-matrix helpers shared by the gate, transpiler and
//! IQAE modules.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

/// Tolerance used when validating unitarity of user-supplied matrices.
pub const UNITARY_TOL: f64 = 1e-10;

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// `e^{i phase}`.
#[inline]
pub fn cis(phase: f64) -> C64 {
    C64::from_polar(1.0, phase)
}

/// Largest entry of `|U†U − I|`.
pub fn unitarity_deviation(m: &CMatrix) -> f64 {
    let prod = m.adjoint() * m;
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((prod[(i, j)] - C64::new(target, 0.0)).norm());
        }
    }
    worst
}

/// A square matrix that passed a unitarity check at construction.
///
/// Application sites take `&Unitary` so the check never runs in inner loops.
#[derive(Debug, Clone, PartialEq)]
pub struct Unitary(CMatrix);

impl Unitary {
    pub fn new(m: CMatrix) -> Result<Self> {
        Self::with_tolerance(m, UNITARY_TOL)
    }

    pub fn with_tolerance(m: CMatrix, tol: f64) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Shape {
                rows: m.nrows(),
                cols: m.ncols(),
                expected: m.nrows(),
            });
        }
        let deviation = unitarity_deviation(&m);
        if !(deviation <= tol) {
            return Err(Error::NotUnitary { deviation });
        }
        Ok(Unitary(m))
    }

    /// Wraps a matrix built from closed-form unitary expressions.
    pub(crate) fn trusted(m: CMatrix) -> Self {
        debug_assert!(unitarity_deviation(&m) < 1e-9);
        Unitary(m)
    }

    pub fn identity(dim: usize) -> Self {
        Unitary(CMatrix::identity(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    /// `self · other` (apply `other` first).
    pub fn compose(&self, other: &Unitary) -> Unitary {
        Unitary(&self.0 * &other.0)
    }

    pub fn adjoint(&self) -> Unitary {
        Unitary(self.0.adjoint())
    }
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Frobenius distance between `a` and `b` after removing the optimal global
/// phase, i.e. `min_φ ‖a − e^{iφ} b‖_F`.
pub fn phase_invariant_distance(a: &CMatrix, b: &CMatrix) -> f64 {
    let overlap = (b.adjoint() * a).trace();
    let phase = if overlap.norm() > 0.0 {
        overlap / overlap.norm()
    } else {
        C64::new(1.0, 0.0)
    };
    (a - b * phase).norm()
}

/// Matrix exponential `exp(−i·t·H)` for Hermitian `H`, via eigendecomposition.
pub fn expm_hermitian(h: &CMatrix, t: f64) -> CMatrix {
    let eig = nalgebra::SymmetricEigen::new(h.clone());
    let n = h.nrows();
    let mut diag = CMatrix::zeros(n, n);
    for k in 0..n {
        diag[(k, k)] = cis(-t * eig.eigenvalues[k]);
    }
    &eig.eigenvectors * diag * eig.eigenvectors.adjoint()
}
