//! Synthesis of an arbitrary 4×4 unitary from native single-ququart gates.
//!
//! Real rotations only couple `|0⟩` with another level, so every Givens step
//! pivots through level 0. Columns are cleared in the fixed order 3, 2, 1:
//!
//! * column 3: fold rows 1 and 2 into row 0, then row 0 into row 3;
//! * column 2: fold row 1 into row 0, then row 0 into row 2;
//! * column 1: fold row 0 into row 1.
//!
//! What is left is diagonal and becomes virtual phases.

use crate::error::{Error, Result};
use crate::gates::{r_phi_matrix, GateTiming, NativeOp};
use crate::matrix::{CMatrix, Unitary, C64};

const NEGLIGIBLE: f64 = 1e-14;

/// Which entry of the `(row 0, row j)` pair a rotation should clear.
#[derive(Clone, Copy)]
enum Clear {
    Zero,
    Other,
}

/// Native `R_φ^{0j}(θ)` angles that zero one entry of `(x0, xj)`.
fn givens_angles(x0: C64, xj: C64, clear: Clear) -> Option<(f64, f64)> {
    let (a, b) = (x0.norm(), xj.norm());
    let (alpha, beta) = (x0.arg(), xj.arg());
    match clear {
        Clear::Other if b > NEGLIGIBLE => {
            let theta = 2.0 * b.atan2(a);
            let phi = if a > NEGLIGIBLE { beta - alpha - std::f64::consts::FRAC_PI_2 } else { beta - std::f64::consts::FRAC_PI_2 };
            Some((theta, phi))
        }
        Clear::Zero if a > NEGLIGIBLE => {
            let theta = 2.0 * a.atan2(b);
            let phi = if b > NEGLIGIBLE { beta - alpha + std::f64::consts::FRAC_PI_2 } else { -alpha + std::f64::consts::FRAC_PI_2 };
            Some((theta, phi))
        }
        _ => None,
    }
}

/// Native ops (partial rotations and virtual phases on `ion`) whose product
/// equals `u` up to a global phase. Emits at most six rotations and three
/// phases.
pub fn synthesize_ququart_unitary(u: &CMatrix, ion: usize, timing: &GateTiming) -> Result<Vec<NativeOp>> {
    let u = Unitary::new(u.clone())?;
    if u.dim() != 4 {
        return Err(Error::Shape {
            rows: u.dim(),
            cols: u.dim(),
            expected: 4,
        });
    }
    let mut work = u.into_matrix();
    // (level, column, which entry to clear)
    let plan = [
        (1, 3, Clear::Other),
        (2, 3, Clear::Other),
        (3, 3, Clear::Zero),
        (1, 2, Clear::Other),
        (2, 2, Clear::Zero),
        (1, 1, Clear::Zero),
    ];
    let mut applied: Vec<(usize, f64, f64)> = Vec::new();
    for (level, col, clear) in plan {
        if let Some((theta, phi)) = givens_angles(work[(0, col)], work[(level, col)], clear) {
            let g = r_phi_matrix(level, theta, phi)?;
            work = g.matrix() * work;
            applied.push((level, theta, phi));
        }
    }
    // `work` is now diagonal: G_k … G_1 U = D, so U = G_1† … G_k† D.
    let mut ops = Vec::new();
    let reference = work[(0, 0)];
    for level in 1..4 {
        let rel = (work[(level, level)] / reference).arg();
        if rel.abs() > NEGLIGIBLE {
            ops.push(NativeOp::phase(ion, level, rel));
        }
    }
    for &(level, theta, phi) in applied.iter().rev() {
        ops.push(NativeOp::rotation(ion, level, -theta, phi, timing));
    }
    Ok(ops)
}
