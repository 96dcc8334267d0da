//! Lowering of qubit-level circuits to native ququart instructions.
//!
//! Two regimes are supported:
//!
//! * **qubit**: qubit `k` lives on levels `{0,1}` of ion `k`; single-qubit
//!   gates become one partial rotation plus virtual phases, `CX` uses one
//!   `XX(π/4)`.
//! * **ququart**: two qubits share one ion under the fixed encoding
//!   `|0⟩=|01⟩, |1⟩=|11⟩, |2⟩=|10⟩, |3⟩=|00⟩`; every segment of gates acting on
//!   an ion is fused and synthesised from Givens rotations.
//!
//! Segments separated by [`QubitOp::Barrier`] are lowered independently, so
//! gates are never merged across a barrier.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use crate::error::{Error, Result};
use crate::gates::{spectator_phase_compensation, GateTiming, NativeOp};
use crate::matrix::{c, cis, kron, CMatrix};
use crate::synth::synthesize_ququart_unitary;

/// A gate of the algorithm-level description.
#[derive(Debug, Clone, PartialEq)]
pub enum QubitOp {
    U3 {
        qubit: usize,
        theta: f64,
        phi: f64,
        lam: f64,
    },
    Cx {
        control: usize,
        target: usize,
    },
    /// `exp(−iχ X⊗X)` between two qubits.
    Xx {
        a: usize,
        b: usize,
        chi: f64,
    },
    Barrier,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct QubitCircuit {
    pub n_qubits: usize,
    pub ops: Vec<QubitOp>,
}

impl QubitCircuit {
    pub fn new(n_qubits: usize) -> Self {
        QubitCircuit {
            n_qubits,
            ops: Vec::new(),
        }
    }

    pub fn u3(&mut self, qubit: usize, theta: f64, phi: f64, lam: f64) -> &mut Self {
        self.ops.push(QubitOp::U3 { qubit, theta, phi, lam });
        self
    }

    pub fn h(&mut self, qubit: usize) -> &mut Self {
        self.u3(qubit, FRAC_PI_2, 0.0, PI)
    }

    pub fn x(&mut self, qubit: usize) -> &mut Self {
        self.u3(qubit, PI, 0.0, PI)
    }

    pub fn z(&mut self, qubit: usize) -> &mut Self {
        self.u3(qubit, 0.0, 0.0, PI)
    }

    pub fn ry(&mut self, qubit: usize, theta: f64) -> &mut Self {
        self.u3(qubit, theta, 0.0, 0.0)
    }

    pub fn cx(&mut self, control: usize, target: usize) -> &mut Self {
        self.ops.push(QubitOp::Cx { control, target });
        self
    }

    /// `CZ = (I⊗H) CX (I⊗H)`.
    pub fn cz(&mut self, a: usize, b: usize) -> &mut Self {
        self.h(b).cx(a, b).h(b)
    }

    pub fn barrier(&mut self) -> &mut Self {
        self.ops.push(QubitOp::Barrier);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_qubits;
        let check = |q: usize| {
            if q < n {
                Ok(())
            } else {
                Err(Error::IonIndex { index: q, n })
            }
        };
        for op in &self.ops {
            match *op {
                QubitOp::U3 { qubit, theta, phi, lam } => {
                    check(qubit)?;
                    if ![theta, phi, lam].iter().all(|v| v.is_finite()) {
                        return Err(Error::InvalidParameter("U3 angles must be finite".into()));
                    }
                }
                QubitOp::Cx { control: a, target: b } | QubitOp::Xx { a, b, .. } => {
                    check(a)?;
                    check(b)?;
                    if a == b {
                        return Err(Error::EqualIndices(a));
                    }
                }
                QubitOp::Barrier => {}
            }
        }
        Ok(())
    }
}

/// Addressing-beam group of an ion. Each ion is always driven by its own
/// group's beam; the two beams have a slowly drifting relative phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IonGroup {
    First,
    Second,
}

/// Alternating assignment: even ions in the first group, odd in the second.
pub fn alternating_groups(n: usize) -> Vec<IonGroup> {
    (0..n)
        .map(|i| if i % 2 == 0 { IonGroup::First } else { IonGroup::Second })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NativeCircuit {
    pub n_ions: usize,
    pub ops: Vec<NativeOp>,
    pub groups: Vec<IonGroup>,
}

impl NativeCircuit {
    pub fn new(n_ions: usize) -> Self {
        NativeCircuit {
            n_ions,
            ops: Vec::new(),
            groups: alternating_groups(n_ions),
        }
    }

    pub fn with_ops(n_ions: usize, ops: Vec<NativeOp>) -> Self {
        NativeCircuit {
            ops,
            ..NativeCircuit::new(n_ions)
        }
    }

    pub fn ms_count(&self) -> usize {
        self.ops.iter().filter(|op| matches!(op, NativeOp::Ms { .. })).count()
    }

    pub fn real_rotation_count(&self) -> usize {
        self.ops
            .iter()
            .filter(|op| matches!(op, NativeOp::PartialRotation { .. }))
            .count()
    }

    /// Total duration with one op per layer, seconds.
    pub fn duration(&self) -> f64 {
        self.ops.iter().map(NativeOp::duration).sum()
    }

    /// Index, level and group checks.
    ///
    /// A rotation may use the other group's beam only next to an MS gate that
    /// drives the same ion with that beam (the phase-insensitive wrap). Same-
    /// group pairs must drive their second ion with the other beam.
    pub fn validate(&self) -> Result<()> {
        if self.groups.len() != self.n_ions {
            return Err(Error::ShapeMismatch(format!(
                "{} group tags for {} ions",
                self.groups.len(),
                self.n_ions
            )));
        }
        for (index, op) in self.ops.iter().enumerate() {
            op.validate(self.n_ions)?;
            match op {
                NativeOp::Ms {
                    ion_a,
                    ion_b,
                    foreign_beam_b,
                    ..
                } => {
                    let same = self.groups[*ion_a] == self.groups[*ion_b];
                    if same != *foreign_beam_b {
                        return Err(Error::GroupViolation {
                            op_index: index,
                            reason: if same {
                                "same-group pair needs the other group's beam on its second ion".into()
                            } else {
                                "different-group pair must use each ion's own beam".into()
                            },
                        });
                    }
                }
                NativeOp::PartialRotation {
                    ion,
                    foreign_beam: true,
                    ..
                } => {
                    if !self.inside_wrap(index, *ion) {
                        return Err(Error::GroupViolation {
                            op_index: index,
                            reason: format!("ion {ion} driven by the other group's beam outside an entangling wrap"),
                        });
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn inside_wrap(&self, index: usize, ion: usize) -> bool {
        let is_wrap_ms = |op: &NativeOp| {
            matches!(op, NativeOp::Ms { ion_b, foreign_beam_b: true, .. } if *ion_b == ion)
        };
        let scan = |iter: &mut dyn Iterator<Item = &NativeOp>| {
            for op in iter {
                match op {
                    NativeOp::Ms { .. } => return is_wrap_ms(op),
                    _ => continue,
                }
            }
            false
        };
        scan(&mut self.ops[index + 1..].iter()) || scan(&mut self.ops[..index].iter().rev())
    }
}

/// Five native ops realising `U3(θ,φ,λ)` on the `{0,j}` pair:
/// `R_z(φ) R_x(−π/2) R_z(θ) R_x(π/2) R_z(λ)`, listed in time order.
///
/// The relative-phase rotation `R_z^{0j}(α) = diag(e^{−iα/2}, e^{iα/2})` equals
/// the virtual gate `R_z^j(α)` up to the global phase `e^{−iα/2}`.
pub fn u3_to_native(theta: f64, phi: f64, lam: f64, ion: usize, level: usize, timing: &GateTiming) -> Vec<NativeOp> {
    vec![
        NativeOp::phase(ion, level, lam),
        NativeOp::rotation(ion, level, FRAC_PI_2, 0.0, timing),
        NativeOp::phase(ion, level, theta),
        NativeOp::rotation(ion, level, -FRAC_PI_2, 0.0, timing),
        NativeOp::phase(ion, level, phi),
    ]
}

/// The `U3(θ,φ,λ)` matrix.
pub fn u3_matrix(theta: f64, phi: f64, lam: f64) -> CMatrix {
    let (s, co) = (theta / 2.0).sin_cos();
    CMatrix::from_row_slice(
        2,
        2,
        &[c(co, 0.0), -cis(lam) * s, cis(phi) * s, cis(phi + lam) * co],
    )
}

/// Euler angles with `u = e^{iγ} U3(θ,φ,λ)`.
pub fn u3_angles(u: &CMatrix) -> (f64, f64, f64) {
    let (a, b) = (u[(0, 0)], u[(1, 0)]);
    let theta = 2.0 * b.norm().atan2(a.norm());
    const EPS: f64 = 1e-12;
    if b.norm() < EPS {
        (0.0, 0.0, (u[(1, 1)] / a).arg())
    } else if a.norm() < EPS {
        (theta, 0.0, (-u[(0, 1)] / b).arg())
    } else {
        let gamma = a.arg();
        (theta, b.arg() - gamma, (-u[(0, 1)]).arg() - gamma)
    }
}

/// One-rotation lowering of an arbitrary 2×2 unitary on the `{0,j}` pair:
/// `u ≃ R_z^j(α+β) · R_{−β}^{0j}(θ)` from the decomposition
/// `u = e^{iγ} diag(1,e^{iα}) R_x(θ) diag(1,e^{iβ})`.
pub fn single_to_native(u: &CMatrix, ion: usize, level: usize, timing: &GateTiming) -> Vec<NativeOp> {
    const EPS: f64 = 1e-12;
    let (u00, u01, u10, u11) = (u[(0, 0)], u[(0, 1)], u[(1, 0)], u[(1, 1)]);
    let theta = 2.0 * u10.norm().atan2(u00.norm());
    let mut ops = Vec::with_capacity(2);
    if u10.norm() < EPS {
        let rel = (u11 / u00).arg();
        if rel.abs() > EPS {
            ops.push(NativeOp::phase(ion, level, rel));
        }
        return ops;
    }
    let gamma = if u00.norm() < EPS { u10.arg() + FRAC_PI_2 } else { u00.arg() };
    let alpha = u10.arg() - gamma + FRAC_PI_2;
    let beta = u01.arg() - gamma + FRAC_PI_2;
    ops.push(NativeOp::rotation(ion, level, theta, -beta, timing));
    let total = wrap_angle(alpha + beta);
    if total.abs() > EPS {
        ops.push(NativeOp::phase(ion, level, total));
    }
    ops
}

fn wrap_angle(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if (y + PI).abs() < 1e-15 {
        PI
    } else {
        y
    }
}

fn rx(theta: f64) -> CMatrix {
    let (s, co) = (theta / 2.0).sin_cos();
    CMatrix::from_row_slice(2, 2, &[c(co, 0.0), c(0.0, -s), c(0.0, -s), c(co, 0.0)])
}

fn ry(theta: f64) -> CMatrix {
    let (s, co) = (theta / 2.0).sin_cos();
    CMatrix::from_row_slice(2, 2, &[c(co, 0.0), c(-s, 0.0), c(s, 0.0), c(co, 0.0)])
}

/// Local corrections around `XX(π/4)` that make a CX:
/// `CX = (Ry(π/2)⊗I) · XX · (Rx(−π/2)⊗Rx(π/2)) · (Ry(−π/2)⊗I)` up to phase,
/// with the control as the first tensor factor.
struct CxLocals {
    control_pre: CMatrix,
    target_pre: CMatrix,
    control_post: CMatrix,
    target_post: CMatrix,
}

fn cx_locals() -> CxLocals {
    CxLocals {
        control_pre: rx(-FRAC_PI_2) * ry(-FRAC_PI_2),
        target_pre: rx(FRAC_PI_2),
        control_post: ry(FRAC_PI_2),
        target_post: CMatrix::identity(2, 2),
    }
}

/// Surrounds an MS op on a same-group pair with `R_y(±π/2)` rotations driven
/// by the same beams as the MS drive, turning `XX(χ)` into `ZZ(χ)`, which is
/// insensitive to the relative phase of the two beams. Pairs from different
/// groups get the bare op back.
pub fn zz_wrap_same_group(xx_op: &NativeOp, groups: &[IonGroup], timing: &GateTiming) -> Result<Vec<NativeOp>> {
    let NativeOp::Ms {
        ion_a,
        ion_b,
        chi,
        phi_a,
        phi_b,
        duration,
        ..
    } = *xx_op
    else {
        return Err(Error::InvalidParameter("zz wrapping needs an MS op".into()));
    };
    for ion in [ion_a, ion_b] {
        if ion >= groups.len() {
            return Err(Error::IonIndex {
                index: ion,
                n: groups.len(),
            });
        }
    }
    if groups[ion_a] != groups[ion_b] {
        return Ok(vec![xx_op.clone()]);
    }
    let rot = |ion: usize, theta: f64, phase: f64, foreign: bool| NativeOp::PartialRotation {
        ion,
        level: 1,
        theta,
        phi: FRAC_PI_2 + phase,
        duration: timing.rotation(theta),
        foreign_beam: foreign,
    };
    Ok(vec![
        rot(ion_a, FRAC_PI_2, phi_a, false),
        rot(ion_b, FRAC_PI_2, phi_b, true),
        NativeOp::Ms {
            ion_a,
            ion_b,
            chi,
            phi_a,
            phi_b,
            duration,
            foreign_beam_b: true,
        },
        rot(ion_a, -FRAC_PI_2, phi_a, false),
        rot(ion_b, -FRAC_PI_2, phi_b, true),
    ])
}

/// Native ops for `CX(control, target)` in the qubit regime: one `XX(π/4)`
/// with its spectator compensation and local rotations (same-group pairs are
/// ZZ-wrapped).
pub fn cx_to_native(control: usize, target: usize, groups: &[IonGroup], timing: &GateTiming) -> Result<Vec<NativeOp>> {
    if control == target {
        return Err(Error::EqualIndices(control));
    }
    let mut lowering = QubitLowering::new(groups.len().max(control.max(target) + 1), groups.to_vec(), *timing);
    lowering.cx(control, target)?;
    lowering.flush_all();
    Ok(lowering.ops)
}

/// Accumulates pending single-qubit unitaries per ion and emits native ops.
struct QubitLowering {
    pending: Vec<CMatrix>,
    groups: Vec<IonGroup>,
    timing: GateTiming,
    ops: Vec<NativeOp>,
}

impl QubitLowering {
    fn new(n: usize, groups: Vec<IonGroup>, timing: GateTiming) -> Self {
        QubitLowering {
            pending: vec![CMatrix::identity(2, 2); n],
            groups,
            timing,
            ops: Vec::new(),
        }
    }

    fn local(&mut self, qubit: usize, u: &CMatrix) {
        self.pending[qubit] = u * &self.pending[qubit];
    }

    fn flush(&mut self, qubit: usize) {
        let u = std::mem::replace(&mut self.pending[qubit], CMatrix::identity(2, 2));
        let lowered = single_to_native(&u, qubit, 1, &self.timing);
        self.ops.extend(lowered);
    }

    fn flush_all(&mut self) {
        for q in 0..self.pending.len() {
            self.flush(q);
        }
    }

    /// Emits `XX(χ)` on `(a, b)`. For same-group pairs the wrapped block is
    /// `ZZ(χ)`; conjugating it by `R_y(π/2)` locals, fused into the
    /// neighbouring single-qubit gates, restores `XX(χ)`.
    fn xx(&mut self, a: usize, b: usize, chi: f64) -> Result<()> {
        let same = self.groups[a] == self.groups[b];
        if same {
            self.local(a, &ry(-FRAC_PI_2));
            self.local(b, &ry(-FRAC_PI_2));
        }
        self.flush(a);
        self.flush(b);
        let ms = NativeOp::ms(a, b, chi, &self.timing);
        let block = zz_wrap_same_group(&ms, &self.groups, &self.timing)?;
        self.ops.extend(block);
        self.ops.extend(spectator_phase_compensation(a, b, chi));
        if same {
            self.local(a, &ry(FRAC_PI_2));
            self.local(b, &ry(FRAC_PI_2));
        }
        Ok(())
    }

    fn cx(&mut self, control: usize, target: usize) -> Result<()> {
        let l = cx_locals();
        self.local(control, &l.control_pre);
        self.local(target, &l.target_pre);
        self.xx(control, target, FRAC_PI_4)?;
        self.local(control, &l.control_post);
        self.local(target, &l.target_post);
        Ok(())
    }
}

/// How qubits are mapped onto ions.
#[derive(Debug, Clone, PartialEq)]
pub enum Regime {
    /// Qubit `k` on levels `{0,1}` of ion `k`.
    Qubit,
    /// Ion `i` holds qubits `pairing[i] = (high, low)`.
    Ququart { pairing: Vec<(usize, usize)> },
}

impl Regime {
    /// Ququart regime pairing consecutive qubits `(0,1), (2,3), …`.
    pub fn ququart_consecutive(n_qubits: usize) -> Self {
        Regime::Ququart {
            pairing: (0..n_qubits / 2).map(|i| (2 * i, 2 * i + 1)).collect(),
        }
    }

    pub fn n_ions(&self, n_qubits: usize) -> usize {
        match self {
            Regime::Qubit => n_qubits,
            Regime::Ququart { pairing } => pairing.len(),
        }
    }

    /// Qubit bits (index = qubit) from per-ion measured levels.
    pub fn decode(&self, levels: &[usize], n_qubits: usize) -> Vec<u8> {
        match self {
            Regime::Qubit => levels.iter().map(|&l| u8::from(l != 0)).collect(),
            Regime::Ququart { pairing } => {
                let mut bits = vec![0u8; n_qubits];
                for (ion, &(hi, lo)) in pairing.iter().enumerate() {
                    let (bh, bl) = decode_ququart_level(levels[ion]);
                    bits[hi] = bh;
                    bits[lo] = bl;
                }
                bits
            }
        }
    }
}

/// Level holding the qubit pair `(high, low)`: `01→0, 11→1, 10→2, 00→3`.
pub fn encode_pair_to_ququart(high: u8, low: u8) -> Result<usize> {
    match (high, low) {
        (0, 1) => Ok(0),
        (1, 1) => Ok(1),
        (1, 0) => Ok(2),
        (0, 0) => Ok(3),
        _ => Err(Error::InvalidParameter(format!("qubit label must be binary, got {high}{low}"))),
    }
}

/// Inverse of [`encode_pair_to_ququart`]. Levels above 3 decode as level 3.
pub fn decode_ququart_level(level: usize) -> (u8, u8) {
    match level {
        0 => (0, 1),
        1 => (1, 1),
        2 => (1, 0),
        _ => (0, 0),
    }
}

/// Options for [`transpile`].
#[derive(Debug, Clone)]
pub struct TranspileOptions {
    pub timing: GateTiming,
    /// Group tag per ion; alternating when `None`.
    pub groups: Option<Vec<IonGroup>>,
}

impl Default for TranspileOptions {
    fn default() -> Self {
        TranspileOptions {
            timing: GateTiming::default(),
            groups: None,
        }
    }
}

/// Lowers a qubit circuit to native ops in the chosen regime.
pub fn transpile(circuit: &QubitCircuit, regime: &Regime, options: &TranspileOptions) -> Result<NativeCircuit> {
    circuit.validate()?;
    let n_ions = match regime {
        Regime::Qubit => circuit.n_qubits,
        Regime::Ququart { pairing } => {
            check_pairing(circuit.n_qubits, pairing)?;
            pairing.len()
        }
    };
    let groups = options.groups.clone().unwrap_or_else(|| alternating_groups(n_ions));
    if groups.len() != n_ions {
        return Err(Error::ShapeMismatch(format!("{} group tags for {n_ions} ions", groups.len())));
    }
    let ops = match regime {
        Regime::Qubit => transpile_qubit(circuit, &groups, &options.timing)?,
        Regime::Ququart { pairing } => transpile_ququart(circuit, pairing, &options.timing)?,
    };
    let native = NativeCircuit { n_ions, ops, groups };
    native.validate()?;
    Ok(native)
}

fn check_pairing(n_qubits: usize, pairing: &[(usize, usize)]) -> Result<()> {
    if n_qubits % 2 != 0 {
        return Err(Error::InvalidParameter(format!(
            "ququart regime needs an even number of qubits, got {n_qubits}"
        )));
    }
    let mut seen = vec![false; n_qubits];
    for &(hi, lo) in pairing {
        for q in [hi, lo] {
            if q >= n_qubits || seen[q] {
                return Err(Error::InvalidParameter(format!("invalid pairing {pairing:?}")));
            }
            seen[q] = true;
        }
    }
    if pairing.len() * 2 != n_qubits {
        return Err(Error::InvalidParameter(format!("pairing {pairing:?} does not cover {n_qubits} qubits")));
    }
    Ok(())
}

fn transpile_qubit(circuit: &QubitCircuit, groups: &[IonGroup], timing: &GateTiming) -> Result<Vec<NativeOp>> {
    let mut lowering = QubitLowering::new(circuit.n_qubits, groups.to_vec(), *timing);
    for op in &circuit.ops {
        match *op {
            QubitOp::U3 { qubit, theta, phi, lam } => lowering.local(qubit, &u3_matrix(theta, phi, lam)),
            QubitOp::Cx { control, target } => lowering.cx(control, target)?,
            QubitOp::Xx { a, b, chi } => lowering.xx(a, b, chi)?,
            QubitOp::Barrier => lowering.flush_all(),
        }
    }
    lowering.flush_all();
    Ok(lowering.ops)
}

/// Pair-basis index `2·high + low` → ququart level.
fn pair_to_level_matrix() -> CMatrix {
    let mut p = CMatrix::zeros(4, 4);
    for index in 0..4u8 {
        let level = encode_pair_to_ququart(index >> 1, index & 1).expect("binary");
        p[(level, index as usize)] = c(1.0, 0.0);
    }
    p
}

fn transpile_ququart(circuit: &QubitCircuit, pairing: &[(usize, usize)], timing: &GateTiming) -> Result<Vec<NativeOp>> {
    let mut home = vec![(0usize, false); circuit.n_qubits];
    for (ion, &(hi, lo)) in pairing.iter().enumerate() {
        home[hi] = (ion, true);
        home[lo] = (ion, false);
    }
    let id2 = CMatrix::identity(2, 2);
    let x = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
    // Ions start in level 0 = |01⟩; an initial X on the low qubit brings the
    // logical register to |00⟩.
    let mut pending: Vec<CMatrix> = vec![kron(&id2, &x); pairing.len()];
    let p = pair_to_level_matrix();
    let mut ops = Vec::new();
    let flush = |pending: &mut Vec<CMatrix>, ops: &mut Vec<NativeOp>| -> Result<()> {
        for (ion, u) in pending.iter_mut().enumerate() {
            let level_basis = &p * &*u * p.transpose();
            ops.extend(synthesize_ququart_unitary(&level_basis, ion, timing)?);
            *u = CMatrix::identity(4, 4);
        }
        Ok(())
    };
    for op in &circuit.ops {
        match *op {
            QubitOp::U3 { qubit, theta, phi, lam } => {
                let (ion, high) = home[qubit];
                let g = u3_matrix(theta, phi, lam);
                let lifted = if high { kron(&g, &id2) } else { kron(&id2, &g) };
                pending[ion] = lifted * &pending[ion];
            }
            QubitOp::Cx { control: a, target: b } | QubitOp::Xx { a, b, .. } => {
                let (ion_a, high_a) = home[a];
                let (ion_b, _) = home[b];
                if ion_a != ion_b {
                    return Err(Error::Unsupported(
                        "two-qubit gates between qubits stored in different ions".into(),
                    ));
                }
                let g = match *op {
                    QubitOp::Cx { .. } => {
                        // CX with the high qubit as control, or its mirror.
                        let mut m = CMatrix::zeros(4, 4);
                        for index in 0..4usize {
                            let (h, l) = (index >> 1, index & 1);
                            let out = if high_a { (h << 1) | (l ^ h) } else { ((h ^ l) << 1) | l };
                            m[(out, index)] = c(1.0, 0.0);
                        }
                        m
                    }
                    QubitOp::Xx { chi, .. } => {
                        let xx = kron(&x, &x);
                        crate::matrix::expm_hermitian(&xx, chi)
                    }
                    _ => unreachable!(),
                };
                pending[ion_a] = g * &pending[ion_a];
            }
            QubitOp::Barrier => flush(&mut pending, &mut ops)?,
        }
    }
    flush(&mut pending, &mut ops)?;
    Ok(ops)
}
