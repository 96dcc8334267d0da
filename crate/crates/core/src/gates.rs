//! Native gate set of the ququart processor.
//!
//! * `R_φ^{0j}(θ) = exp(−i σ_φ^{0j} θ/2)` with `σ_φ = cos φ σ_x + sin φ σ_y` on
//!   the `{|0⟩, |j⟩}` pair and `σ_y^{0j} = −i|0⟩⟨j| + i|j⟩⟨0|`.
//! * `R_z^j(θ) = exp(iθ |j⟩⟨j|)`, a virtual gate realised by shifting the
//!   phase of later pulses.
//! * `XX(χ) = exp(−i χ/2 (σ_x^{01}⊗I + I⊗σ_x^{01})²)`, the Mølmer–Sørensen
//!   gate on the `|0⟩↔|1⟩` transition of two ions, including the phases it
//!   leaves on levels 2 and 3.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::matrix::{cis, CMatrix, Unitary, C64};
use crate::state::{QuditRegister, QUQUART};

/// Pulse timing used to attach durations to native ops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateTiming {
    /// Duration of a `θ = π` partial rotation, seconds. Scales linearly in |θ|.
    pub pi_pulse: f64,
    /// Duration of one MS gate, seconds.
    pub ms: f64,
}

impl Default for GateTiming {
    fn default() -> Self {
        GateTiming {
            pi_pulse: 20e-6,
            ms: 800e-6,
        }
    }
}

impl GateTiming {
    pub fn rotation(&self, theta: f64) -> f64 {
        self.pi_pulse * theta.abs() / PI
    }
}

/// One native instruction.
///
/// `foreign_beam` marks a drive delivered by the addressing beam of the
/// *other* ion group (needed when entangling two ions of the same group).
#[derive(Debug, Clone, PartialEq)]
pub enum NativeOp {
    PartialRotation {
        ion: usize,
        level: usize,
        theta: f64,
        phi: f64,
        duration: f64,
        foreign_beam: bool,
    },
    VirtualPhase {
        ion: usize,
        level: usize,
        theta: f64,
    },
    Ms {
        ion_a: usize,
        ion_b: usize,
        chi: f64,
        /// Drive phase seen by each ion; both zero for the textbook gate.
        phi_a: f64,
        phi_b: f64,
        duration: f64,
        /// Ion `b` driven by the other group's beam.
        foreign_beam_b: bool,
    },
}

impl NativeOp {
    pub fn rotation(ion: usize, level: usize, theta: f64, phi: f64, timing: &GateTiming) -> Self {
        NativeOp::PartialRotation {
            ion,
            level,
            theta,
            phi,
            duration: timing.rotation(theta),
            foreign_beam: false,
        }
    }

    pub fn phase(ion: usize, level: usize, theta: f64) -> Self {
        NativeOp::VirtualPhase { ion, level, theta }
    }

    pub fn ms(ion_a: usize, ion_b: usize, chi: f64, timing: &GateTiming) -> Self {
        NativeOp::Ms {
            ion_a,
            ion_b,
            chi,
            phi_a: 0.0,
            phi_b: 0.0,
            duration: timing.ms,
            foreign_beam_b: false,
        }
    }

    pub fn duration(&self) -> f64 {
        match self {
            NativeOp::PartialRotation { duration, .. } | NativeOp::Ms { duration, .. } => *duration,
            NativeOp::VirtualPhase { .. } => 0.0,
        }
    }

    pub fn ions(&self) -> Vec<usize> {
        match self {
            NativeOp::PartialRotation { ion, .. } | NativeOp::VirtualPhase { ion, .. } => vec![*ion],
            NativeOp::Ms { ion_a, ion_b, .. } => vec![*ion_a, *ion_b],
        }
    }

    pub fn is_real(&self) -> bool {
        !matches!(self, NativeOp::VirtualPhase { .. })
    }

    /// Checks level and index constraints against a register of `n` ions.
    pub fn validate(&self, n: usize) -> Result<()> {
        for ion in self.ions() {
            if ion >= n {
                return Err(Error::IonIndex { index: ion, n });
            }
        }
        match self {
            NativeOp::PartialRotation { level, theta, phi, .. } => {
                check_rotation_level(*level)?;
                finite(&[*theta, *phi])
            }
            NativeOp::VirtualPhase { level, theta, .. } => {
                check_phase_level(*level)?;
                finite(&[*theta])
            }
            NativeOp::Ms {
                ion_a,
                ion_b,
                chi,
                phi_a,
                phi_b,
                ..
            } => {
                if ion_a == ion_b {
                    return Err(Error::EqualIndices(*ion_a));
                }
                finite(&[*chi, *phi_a, *phi_b])
            }
        }
    }

    /// The op's matrix: 4×4 for single-ion ops, 16×16 (ion_a high digit) for MS.
    pub fn unitary(&self) -> Result<Unitary> {
        match self {
            NativeOp::PartialRotation { level, theta, phi, .. } => r_phi_matrix(*level, *theta, *phi),
            NativeOp::VirtualPhase { level, theta, .. } => rz_matrix(*level, *theta),
            NativeOp::Ms { chi, phi_a, phi_b, .. } => Ok(ms_matrix_phased(*chi, *phi_a, *phi_b)),
        }
    }
}

fn finite(values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidParameter("angles must be finite".into()))
    }
}

fn check_rotation_level(level: usize) -> Result<()> {
    if (1..QUQUART).contains(&level) {
        Ok(())
    } else {
        Err(Error::Level {
            level,
            context: "partial rotations couple level 0 to a level in 1..=3",
        })
    }
}

fn check_phase_level(level: usize) -> Result<()> {
    if level < QUQUART {
        Ok(())
    } else {
        Err(Error::Level {
            level,
            context: "virtual phases act on a level in 0..=3",
        })
    }
}

/// `R_φ^{0j}(θ)` as a 4×4 matrix.
pub fn r_phi_matrix(level: usize, theta: f64, phi: f64) -> Result<Unitary> {
    check_rotation_level(level)?;
    let mut m = CMatrix::identity(QUQUART, QUQUART);
    let (s, co) = (theta / 2.0).sin_cos();
    let minus_i = C64::new(0.0, -1.0);
    m[(0, 0)] = C64::new(co, 0.0);
    m[(level, level)] = C64::new(co, 0.0);
    m[(0, level)] = minus_i * cis(-phi) * s;
    m[(level, 0)] = minus_i * cis(phi) * s;
    Ok(Unitary::trusted(m))
}

/// `R_z^j(θ) = diag(…, e^{iθ} at j, …)`.
pub fn rz_matrix(level: usize, theta: f64) -> Result<Unitary> {
    check_phase_level(level)?;
    let mut m = CMatrix::identity(QUQUART, QUQUART);
    m[(level, level)] = cis(theta);
    Ok(Unitary::trusted(m))
}

/// `XX(χ)` on two ququarts.
pub fn ms_matrix(chi: f64) -> Unitary {
    ms_matrix_phased(chi, 0.0, 0.0)
}

/// `exp(−i χ/2 (σ_{φa}^{01}⊗I + I⊗σ_{φb}^{01})²)`.
///
/// Closed form: on the `{0,1}⊗{0,1}` sector the square equals
/// `2 + 2 σ_{φa}⊗σ_{φb}`; with exactly one ion in the qubit pair it is the
/// identity; with neither it vanishes.
pub fn ms_matrix_phased(chi: f64, phi_a: f64, phi_b: f64) -> Unitary {
    let d = QUQUART;
    let mut m = CMatrix::zeros(d * d, d * d);
    let in_pair = |level: usize| level < 2;
    // σ_φ matrix element <r|σ_φ|c> on the {0,1} pair.
    let sigma = |phi: f64, r: usize, c: usize| -> C64 {
        match (r, c) {
            (0, 1) => cis(-phi),
            (1, 0) => cis(phi),
            _ => C64::new(0.0, 0.0),
        }
    };
    let (s, co) = chi.sin_cos();
    let global = cis(-chi);
    for a in 0..d {
        for b in 0..d {
            let col = a * d + b;
            match (in_pair(a), in_pair(b)) {
                (true, true) => {
                    for ra in 0..2 {
                        for rb in 0..2 {
                            let row = ra * d + rb;
                            let diag = if ra == a && rb == b { co } else { 0.0 };
                            let xx = sigma(phi_a, ra, a) * sigma(phi_b, rb, b);
                            m[(row, col)] = global * (C64::new(diag, 0.0) - C64::new(0.0, s) * xx);
                        }
                    }
                }
                (true, false) | (false, true) => m[(col, col)] = cis(-chi / 2.0),
                (false, false) => m[(col, col)] = C64::new(1.0, 0.0),
            }
        }
    }
    Unitary::trusted(m)
}

/// Virtual phases that, appended after `XX(χ)` on `(ion_a, ion_b)`, give every
/// sector with an ion in `{2,3}` the same phase `e^{−iχ}` as the qubit sector.
pub fn spectator_phase_compensation(ion_a: usize, ion_b: usize, chi: f64) -> Vec<NativeOp> {
    if chi == 0.0 {
        return Vec::new();
    }
    let mut ops = Vec::with_capacity(4);
    for ion in [ion_a, ion_b] {
        for level in [2, 3] {
            ops.push(NativeOp::phase(ion, level, -chi / 2.0));
        }
    }
    ops
}

/// Applies one native op to the register.
pub fn apply_native(reg: &mut QuditRegister, op: &NativeOp) -> Result<()> {
    op.validate(reg.n())?;
    match op {
        NativeOp::VirtualPhase { ion, level, theta } => {
            let mut phases = vec![C64::new(1.0, 0.0); reg.d()];
            phases[*level] = cis(*theta);
            reg.apply_diagonal(*ion, &phases);
            Ok(())
        }
        NativeOp::PartialRotation { ion, .. } => reg.apply_single(*ion, &op.unitary()?),
        NativeOp::Ms { ion_a, ion_b, .. } => reg.apply_pair(*ion_a, *ion_b, &op.unitary()?),
    }
}

/// Applies a sequence of native ops.
pub fn apply_all(reg: &mut QuditRegister, ops: &[NativeOp]) -> Result<()> {
    ops.iter().try_for_each(|op| apply_native(reg, op))
}

/// Removes every virtual phase by advancing the drive phase of later pulses
/// on the same ion; the accumulated frame is emitted as trailing virtual
/// phases so the rewritten sequence is the same operator.
///
/// A frame `f` (phase per level) carried past `R_φ^{0k}` turns it into
/// `R_{φ + f_0 − f_k}^{0k}`; past the MS gate each ion's drive phase becomes
/// `φ + f_0 − f_1`.
pub fn to_phase_frame(ops: &[NativeOp], n: usize) -> Vec<NativeOp> {
    let mut frame = vec![[0.0_f64; QUQUART]; n];
    let mut out = Vec::with_capacity(ops.len());
    for op in ops {
        match op {
            NativeOp::VirtualPhase { ion, level, theta } => frame[*ion][*level] += theta,
            NativeOp::PartialRotation {
                ion,
                level,
                theta,
                phi,
                duration,
                foreign_beam,
            } => out.push(NativeOp::PartialRotation {
                ion: *ion,
                level: *level,
                theta: *theta,
                phi: phi + frame[*ion][0] - frame[*ion][*level],
                duration: *duration,
                foreign_beam: *foreign_beam,
            }),
            NativeOp::Ms {
                ion_a,
                ion_b,
                chi,
                phi_a,
                phi_b,
                duration,
                foreign_beam_b,
            } => out.push(NativeOp::Ms {
                ion_a: *ion_a,
                ion_b: *ion_b,
                chi: *chi,
                phi_a: phi_a + frame[*ion_a][0] - frame[*ion_a][1],
                phi_b: phi_b + frame[*ion_b][0] - frame[*ion_b][1],
                duration: *duration,
                foreign_beam_b: *foreign_beam_b,
            }),
        }
    }
    for (ion, levels) in frame.iter().enumerate() {
        for (level, &theta) in levels.iter().enumerate() {
            if theta != 0.0 {
                out.push(NativeOp::phase(ion, level, theta));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{c, expm_hermitian, kron, phase_invariant_distance, unitarity_deviation};
    use crate::state::BasisLabel;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4};

    /// `σ_φ^{0j}` as a Hermitian 4×4 matrix, built from σ_x and σ_y separately.
    fn sigma_phi(level: usize, phi: f64) -> CMatrix {
        let mut sx = CMatrix::zeros(4, 4);
        sx[(0, level)] = c(1.0, 0.0);
        sx[(level, 0)] = c(1.0, 0.0);
        let mut sy = CMatrix::zeros(4, 4);
        sy[(0, level)] = c(0.0, -1.0);
        sy[(level, 0)] = c(0.0, 1.0);
        sx * c(phi.cos(), 0.0) + sy * c(phi.sin(), 0.0)
    }

    fn ms_oracle(chi: f64) -> CMatrix {
        let sx = sigma_phi(1, 0.0);
        let id = CMatrix::identity(4, 4);
        let sum = kron(&sx, &id) + kron(&id, &sx);
        expm_hermitian(&(&sum * &sum), chi / 2.0)
    }

    fn apply_to_label(op: &NativeOp, digits: Vec<usize>) -> QuditRegister {
        let mut r = QuditRegister::from_label(&BasisLabel(digits), 4).unwrap();
        apply_native(&mut r, op).unwrap();
        r
    }

    #[test]
    fn r_phi_matches_matrix_exponential() {
        for level in 1..4 {
            for &(theta, phi) in &[(0.3, 0.0), (FRAC_PI_2, FRAC_PI_2), (2.9, -1.1), (-0.7, 4.0)] {
                let u = r_phi_matrix(level, theta, phi).unwrap();
                let oracle = expm_hermitian(&sigma_phi(level, phi), theta / 2.0);
                assert!((u.matrix() - oracle).norm() < 1e-12);
                assert!(unitarity_deviation(u.matrix()) < 1e-12);
            }
        }
    }

    #[test]
    fn r_phi_examples() {
        let op = NativeOp::rotation(0, 1, PI, 0.0, &GateTiming::default());
        let r = apply_to_label(&op, vec![0]);
        assert!((r.amplitudes()[1] - c(0.0, -1.0)).norm() < 1e-15);

        let u = r_phi_matrix(2, 0.0, 1.3).unwrap();
        assert!((u.matrix() - CMatrix::identity(4, 4)).norm() < 1e-15);

        let u = r_phi_matrix(3, FRAC_PI_2, FRAC_PI_2).unwrap();
        let out = u.matrix().column(0).into_owned();
        let oracle = expm_hermitian(&sigma_phi(3, FRAC_PI_2), FRAC_PI_4).column(0).into_owned();
        assert!((&out - &oracle).norm() < 1e-12);
        // σ_y convention: R_y(π/2)|0⟩ = (|0⟩ + |3⟩)/√2 … with the printed σ_y^{03}
        // the |3⟩ amplitude is +1/√2.
        assert!((out[0] - c(FRAC_1_SQRT_2, 0.0)).norm() < 1e-15);
        assert!((out[3] - c(FRAC_1_SQRT_2, 0.0)).norm() < 1e-15);

        assert!(matches!(r_phi_matrix(0, 1.0, 0.0), Err(Error::Level { .. })));
        assert!(matches!(r_phi_matrix(4, 1.0, 0.0), Err(Error::Level { .. })));
    }

    #[test]
    fn rz_examples() {
        let u = rz_matrix(1, PI).unwrap();
        let expected = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            c(1.0, 0.0),
            c(-1.0, 0.0),
            c(1.0, 0.0),
            c(1.0, 0.0),
        ]));
        assert!((u.matrix() - expected).norm() < 1e-15);
        let u = rz_matrix(0, 2.0 * PI).unwrap();
        assert!((u.matrix() - CMatrix::identity(4, 4)).norm() < 1e-15);
        let ab = rz_matrix(1, 0.4).unwrap().compose(&rz_matrix(1, 1.1).unwrap());
        assert!((ab.matrix() - rz_matrix(1, 1.5).unwrap().matrix()).norm() < 1e-15);
        assert!(rz_matrix(4, 1.0).is_err());
    }

    #[test]
    fn ms_matches_matrix_exponential() {
        for &chi in &[0.0, 0.1, FRAC_PI_4, 1.3, -2.2, PI] {
            let u = ms_matrix(chi);
            assert!((u.matrix() - ms_oracle(chi)).norm() < 1e-10);
            assert!(unitarity_deviation(u.matrix()) < 1e-12);
        }
    }

    #[test]
    fn ms_examples() {
        let op = NativeOp::ms(0, 1, FRAC_PI_4, &GateTiming::default());
        let r = apply_to_label(&op, vec![0, 0]);
        let g = cis(-FRAC_PI_4) * FRAC_1_SQRT_2;
        assert!((r.amplitudes()[0] - g).norm() < 1e-14);
        assert!((r.amplitudes()[5] - g * c(0.0, -1.0)).norm() < 1e-14);
        let p = r.populations();
        assert!((p[0] - 0.5).abs() < 1e-14 && (p[5] - 0.5).abs() < 1e-14);
        assert!(p[1].abs() < 1e-14 && p[4].abs() < 1e-14);

        let r = apply_to_label(&NativeOp::ms(0, 1, 0.77, &GateTiming::default()), vec![2, 2]);
        assert!((r.amplitudes()[10] - c(1.0, 0.0)).norm() < 1e-15);

        let r = apply_to_label(&op, vec![2, 0]);
        assert!((r.amplitudes()[8] - cis(-PI / 8.0)).norm() < 1e-14);
        let oracle = ms_oracle(FRAC_PI_4);
        assert!((oracle[(8, 8)] - cis(-PI / 8.0)).norm() < 1e-12);
    }

    #[test]
    fn ms_sector_phases() {
        for k in 0..20 {
            let chi = -3.0 + 0.31 * k as f64;
            let m = ms_matrix(chi).into_matrix();
            for a in 0..4 {
                for b in 0..4 {
                    let i = a * 4 + b;
                    match (a < 2, b < 2) {
                        (true, true) => {}
                        (false, false) => assert!((m[(i, i)] - c(1.0, 0.0)).norm() < 1e-12),
                        _ => assert!((m[(i, i)] - cis(-chi / 2.0)).norm() < 1e-12),
                    }
                }
            }
            // Qubit block equals e^{−iχ} exp(−iχ σx⊗σx).
            let sx = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
            let target = expm_hermitian(&kron(&sx, &sx), chi) * cis(-chi);
            for (r, &row) in [0usize, 1, 4, 5].iter().enumerate() {
                for (cidx, &col) in [0usize, 1, 4, 5].iter().enumerate() {
                    assert!((m[(row, col)] - target[(r, cidx)]).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn ms_is_block_diagonal_by_sector() {
        let m = ms_matrix(0.9).into_matrix();
        let sector = |i: usize| ((i / 4) < 2, (i % 4) < 2);
        for r in 0..16 {
            for col in 0..16 {
                if sector(r) != sector(col) {
                    assert_eq!(m[(r, col)], c(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn compensation() {
        assert!(spectator_phase_compensation(0, 1, 0.0).is_empty());
        for &chi in &[FRAC_PI_4, -0.6, 2.0] {
            let ops = spectator_phase_compensation(0, 1, chi);
            assert!(ops.iter().all(|op| op.duration() == 0.0));
            let mut composite = ms_matrix(chi).into_matrix();
            for op in &ops {
                let NativeOp::VirtualPhase { ion, .. } = op else { unreachable!() };
                let single = op.unitary().unwrap().into_matrix();
                let id = CMatrix::identity(4, 4);
                let lifted = if *ion == 0 { kron(&single, &id) } else { kron(&id, &single) };
                composite = lifted * composite;
            }
            for a in 0..4 {
                for b in 0..4 {
                    if a >= 2 || b >= 2 {
                        let i = a * 4 + b;
                        assert!((composite[(i, i)] - cis(-chi)).norm() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn apply_native_dispatch() {
        let r = apply_to_label(&NativeOp::phase(0, 1, 0.9), vec![0]);
        assert_eq!(r.amplitudes()[0], c(1.0, 0.0));
        let mut r = QuditRegister::new(1, 4).unwrap();
        assert!(apply_native(&mut r, &NativeOp::phase(1, 1, 0.1)).is_err());
        assert!(apply_native(&mut r, &NativeOp::phase(0, 4, 0.1)).is_err());
    }

    #[test]
    fn inverse_and_commutation() {
        for level in 1..4 {
            let a = r_phi_matrix(level, 0.8, 0.3).unwrap();
            let b = r_phi_matrix(level, -0.8, 0.3).unwrap();
            assert!((b.matrix() - a.adjoint().matrix()).norm() < 1e-14);
            for j in 1..4 {
                if j != level {
                    let z = rz_matrix(j, 1.7).unwrap();
                    let lhs = z.compose(&a);
                    let rhs = a.compose(&z);
                    assert!((lhs.matrix() - rhs.matrix()).norm() < 1e-14);
                }
            }
        }
    }

    fn arb_op(n: usize) -> impl Strategy<Value = NativeOp> {
        let t = GateTiming::default();
        prop_oneof![
            (0..n, 1usize..4, -4.0..4.0f64, -4.0..4.0f64)
                .prop_map(move |(ion, level, theta, phi)| NativeOp::rotation(ion, level, theta, phi, &t)),
            (0..n, 0usize..4, -4.0..4.0f64).prop_map(|(ion, level, theta)| NativeOp::phase(ion, level, theta)),
            (-2.0..2.0f64).prop_map(move |chi| NativeOp::ms(0, 1, chi, &t)),
        ]
    }

    proptest! {
        #[test]
        fn phase_frame_rewrite_is_equivalent(ops in proptest::collection::vec(arb_op(2), 0..20)) {
            let mut direct = QuditRegister::new(2, 4).unwrap();
            apply_all(&mut direct, &ops).unwrap();
            let rewritten = to_phase_frame(&ops, 2);
            let real_before = ops.iter().filter(|o| o.is_real()).count();
            let mut framed = QuditRegister::new(2, 4).unwrap();
            apply_all(&mut framed, &rewritten).unwrap();
            prop_assert_eq!(rewritten.iter().filter(|o| o.is_real()).count(), real_before);
            // Virtual phases only at the tail.
            let first_virtual = rewritten.iter().position(|o| !o.is_real()).unwrap_or(rewritten.len());
            prop_assert!(rewritten[first_virtual..].iter().all(|o| !o.is_real()));
            let overlap = direct.overlap(&framed).unwrap().norm();
            prop_assert!((overlap - 1.0).abs() < 1e-10);
        }

        #[test]
        fn native_matrices_are_unitary(level in 1usize..4, theta in -7.0..7.0f64, phi in -7.0..7.0f64, chi in -4.0..4.0f64) {
            prop_assert!(unitarity_deviation(r_phi_matrix(level, theta, phi).unwrap().matrix()) < 1e-12);
            prop_assert!(unitarity_deviation(rz_matrix(level, theta).unwrap().matrix()) < 1e-12);
            prop_assert!(unitarity_deviation(ms_matrix_phased(chi, theta, phi).matrix()) < 1e-12);
            let d = phase_invariant_distance(ms_matrix(chi).matrix(), &ms_oracle(chi));
            prop_assert!(d < 1e-10);
        }
    }
}
