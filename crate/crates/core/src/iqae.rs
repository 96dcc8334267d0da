//! Iterative quantum-assisted eigensolver: a Krylov basis of Pauli words
//! applied to an initial state, overlap matrices measured on the emulator
//! and a classical generalized eigenvalue solve.

use std::collections::{BTreeMap, HashSet};

use nalgebra::SymmetricEigen;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gates::{apply_native, GateTiming, NativeOp};
use crate::matrix::{c, CMatrix, Unitary, C64};
use crate::noise::{run_shots, NoiseParams};
use crate::pauli::{pauli_mul, Pauli, PauliString, PauliSum};
use crate::state::QuditRegister;
use crate::transpile::{u3_to_native, NativeCircuit, Regime};

pub const DEFAULT_EPS_CUT: f64 = 1e-10;

/// Where the Krylov vectors start.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    /// Computational basis state, one bit per qubit.
    Basis(Vec<u8>),
    /// State prepared by a native circuit, one ion per qubit on levels
    /// `{0, 1}`.
    Prepared(NativeCircuit),
}

impl InitialState {
    fn n_qubits(&self) -> usize {
        match self {
            InitialState::Basis(bits) => bits.len(),
            InitialState::Prepared(circuit) => circuit.n_ions,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrylovBasis {
    pub initial: InitialState,
    pub order: usize,
    /// Unique phase-free words, identity first.
    pub strings: Vec<PauliString>,
    /// Multiplying by any Hamiltonian word yields nothing new.
    pub closed: bool,
}

impl KrylovBasis {
    pub fn len(&self) -> usize {
        self.strings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strings.is_empty()
    }
}

/// Breadth-first products `U_{i_k} … U_{i_1}` up to order `k_order`, phases
/// stripped, first occurrence kept. Stops early once a level adds nothing.
pub fn krylov_basis(h: &PauliSum, initial: InitialState, k_order: usize) -> Result<KrylovBasis> {
    if initial.n_qubits() != h.n_qubits {
        return Err(Error::PauliLength(h.n_qubits, initial.n_qubits()));
    }
    let mut strings = vec![PauliString::identity(h.n_qubits)];
    let mut seen: HashSet<PauliString> = strings.iter().cloned().collect();
    let mut frontier = strings.clone();
    let mut closed = false;
    let mut level = 0;
    loop {
        let mut next = Vec::new();
        for w in &frontier {
            for (_, u) in &h.terms {
                let product = pauli_mul(u, w)?.stripped();
                if seen.insert(product.clone()) {
                    next.push(product);
                }
            }
        }
        if next.is_empty() {
            closed = true;
            break;
        }
        if level == k_order {
            break;
        }
        strings.extend(next.iter().cloned());
        frontier = next;
        level += 1;
    }
    Ok(KrylovBasis {
        initial,
        order: k_order,
        strings,
        closed,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Backend {
    Exact,
    /// Shot estimates on the emulator; `noise: None` is ideal.
    Sampled {
        shots: usize,
        seed: u64,
        noise: Option<NoiseParams>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverlapMatrices {
    /// `D_nm = Σ_i β_i ⟨φ_n|U_i|φ_m⟩`
    pub d: CMatrix,
    /// `E_nm = ⟨φ_n|φ_m⟩`
    pub e: CMatrix,
    /// Standard error of every distinct word expectation that was sampled,
    /// keyed by word; empty for the exact backend.
    pub word_stderr: BTreeMap<String, f64>,
}

fn pauli_on_ququart(p: Pauli) -> Unitary {
    let mut m = CMatrix::identity(4, 4);
    let block = p.matrix();
    for r in 0..2 {
        for col in 0..2 {
            m[(r, col)] = block[(r, col)];
        }
    }
    Unitary::new(m).expect("Pauli block is unitary")
}

fn prepared_register(circuit: &NativeCircuit) -> Result<QuditRegister> {
    circuit.validate()?;
    let mut reg = QuditRegister::new(circuit.n_ions, 4)?;
    for op in &circuit.ops {
        apply_native(&mut reg, op)?;
    }
    Ok(reg)
}

/// `⟨ψ|W|ψ⟩` for a phase-free word on a simulated register.
fn state_expectation(reg: &QuditRegister, word: &PauliString) -> Result<C64> {
    let mut moved = reg.clone();
    for (q, &p) in word.letters.iter().enumerate() {
        if p != Pauli::I {
            moved.apply_single(q, &pauli_on_ququart(p))?;
        }
    }
    reg.overlap(&moved)
}

/// Circuit preparing `|bits⟩` with `π` rotations on level 1.
fn basis_prep(bits: &[u8], timing: &GateTiming) -> NativeCircuit {
    let ops = bits
        .iter()
        .enumerate()
        .filter(|(_, &b)| b == 1)
        .map(|(q, _)| NativeOp::rotation(q, 1, std::f64::consts::PI, 0.0, timing))
        .collect();
    NativeCircuit::with_ops(bits.len(), ops)
}

/// Shot estimate of a phase-free word and its standard error. Basis initial
/// states use the diagonal reduction: words with `X` or `Y` letters vanish
/// identically and only `Z` parities are measured. Prepared states rotate
/// each non-trivial letter into the computational basis before readout.
fn sampled_expectation(
    initial: &InitialState,
    word: &PauliString,
    shots: usize,
    seed: u64,
    noise: Option<&NoiseParams>,
) -> Result<(f64, f64)> {
    let timing = noise.map(|p| p.timing()).unwrap_or_default();
    let circuit = match initial {
        InitialState::Basis(bits) => {
            if !word.is_diagonal() {
                return Ok((0.0, 0.0));
            }
            basis_prep(bits, &timing)
        }
        InitialState::Prepared(prep) => {
            let mut circuit = prep.clone();
            for (q, &p) in word.letters.iter().enumerate() {
                let change = match p {
                    Pauli::X => u3_to_native(std::f64::consts::FRAC_PI_2, 0.0, std::f64::consts::PI, q, 1, &timing),
                    Pauli::Y => u3_to_native(std::f64::consts::FRAC_PI_2, 0.0, std::f64::consts::FRAC_PI_2, q, 1, &timing),
                    _ => Vec::new(),
                };
                circuit.ops.extend(change);
            }
            circuit
        }
    };
    if word.letters.iter().all(|&p| p == Pauli::I) {
        return Ok((1.0, 0.0));
    }
    let outcomes = run_shots(&circuit, noise, shots, seed)?;
    let n = word.len();
    let sum: f64 = outcomes
        .iter()
        .map(|o| {
            let bits = Regime::Qubit.decode(o.digits(), n);
            let odd = word.letters.iter().zip(&bits).filter(|(p, &b)| **p != Pauli::I && b == 1).count() % 2;
            if odd == 0 {
                1.0
            } else {
                -1.0
            }
        })
        .sum();
    let mean = sum / shots as f64;
    Ok((mean, ((1.0 - mean * mean).max(0.0) / shots as f64).sqrt()))
}

/// Fills `D` and `E`. Every entry is reduced with [`pauli_mul`] to
/// `phase · ⟨init|W|init⟩` for one word `W`; each distinct `W` is evaluated
/// once.
pub fn overlaps(h: &PauliSum, basis: &KrylovBasis, backend: &Backend) -> Result<OverlapMatrices> {
    let l = basis.len();
    // (row, col, term or None for E) -> reduced string
    let mut reductions: Vec<(usize, usize, Option<usize>, PauliString)> = Vec::new();
    for (n, pn) in basis.strings.iter().enumerate() {
        for (m, pm) in basis.strings.iter().enumerate() {
            reductions.push((n, m, None, pauli_mul(pn, pm)?));
            for (i, (_, u)) in h.terms.iter().enumerate() {
                reductions.push((n, m, Some(i), pauli_mul(&pauli_mul(pn, u)?, pm)?));
            }
        }
    }
    let mut words: Vec<PauliString> = reductions.iter().map(|r| r.3.stripped()).collect();
    words.sort();
    words.dedup();

    let prepared = match &basis.initial {
        InitialState::Prepared(circuit) if *backend == Backend::Exact => Some(prepared_register(circuit)?),
        _ => None,
    };
    let values: Vec<(C64, f64)> = words
        .par_iter()
        .enumerate()
        .map(|(index, word)| match backend {
            Backend::Exact => match (&basis.initial, &prepared) {
                (InitialState::Basis(bits), _) => Ok((word.basis_expectation(bits), 0.0)),
                (_, Some(reg)) => Ok((state_expectation(reg, word)?, 0.0)),
                _ => unreachable!("prepared register built for exact backend"),
            },
            Backend::Sampled { shots, seed, noise } => {
                let word_seed = seed.wrapping_add((index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                let (mean, se) = sampled_expectation(&basis.initial, word, *shots, word_seed, noise.as_ref())?;
                Ok((c(mean, 0.0), se))
            }
        })
        .collect::<Result<_>>()?;
    let lookup: BTreeMap<&PauliString, (C64, f64)> = words.iter().zip(values.iter().cloned()).collect();

    let mut d = CMatrix::zeros(l, l);
    let mut e = CMatrix::zeros(l, l);
    for (n, m, term, reduced) in &reductions {
        let value = reduced.phase_factor() * lookup[&reduced.stripped()].0;
        match term {
            None => e[(*n, *m)] = value,
            Some(i) => d[(*n, *m)] += h.terms[*i].0 * value,
        }
    }
    let word_stderr = match backend {
        Backend::Exact => BTreeMap::new(),
        Backend::Sampled { .. } => words
            .iter()
            .zip(&values)
            .filter(|(w, _)| w.letters.iter().any(|&p| p != Pauli::I))
            .map(|(w, v)| (w.word(), v.1))
            .collect(),
    };
    Ok(OverlapMatrices { d, e, word_stderr })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenEigSolution {
    pub lambda_min: f64,
    /// Normalised so that `α†Eα = 1`.
    pub alpha: Vec<C64>,
    /// Eigenvalues of `E`, descending.
    pub e_spectrum: Vec<f64>,
    /// Directions kept above the cutoff.
    pub kept: usize,
}

/// Minimises `α†Dα` subject to `α†Eα = 1` on the eigenspace of `E` above
/// `eps_cut · λ_max(E)`. Both matrices are Hermitised first.
pub fn solve_gen_eig(m: &OverlapMatrices, eps_cut: f64) -> Result<GenEigSolution> {
    let l = m.e.nrows();
    if l == 0 || m.d.shape() != m.e.shape() || m.e.ncols() != l {
        return Err(Error::InvalidParameter("overlap matrices must be square, equal and non-empty".into()));
    }
    let half = c(0.5, 0.0);
    let e = (&m.e + m.e.adjoint()) * half;
    let d = (&m.d + m.d.adjoint()) * half;
    let eig = SymmetricEigen::new(e);
    let mut e_spectrum: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
    e_spectrum.sort_by(|a, b| b.total_cmp(a));
    let max = e_spectrum[0];
    if !(max > 0.0) {
        return Err(Error::EmptySubspace);
    }
    let keep: Vec<usize> = (0..l).filter(|&i| eig.eigenvalues[i] > eps_cut * max).collect();
    // S = V_kept Λ^{-1/2}; the reduced problem is ordinary.
    let s = CMatrix::from_fn(l, keep.len(), |r, k| {
        let i = keep[k];
        eig.eigenvectors[(r, i)] / eig.eigenvalues[i].sqrt()
    });
    let reduced = s.adjoint() * &d * &s;
    let reduced = (&reduced + reduced.adjoint()) * half;
    let red = SymmetricEigen::new(reduced);
    let (k_min, lambda_min) = red
        .eigenvalues
        .iter()
        .cloned()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or(Error::EmptySubspace)?;
    let alpha = &s * red.eigenvectors.column(k_min);
    Ok(GenEigSolution {
        lambda_min,
        alpha: alpha.iter().cloned().collect(),
        e_spectrum,
        kept: keep.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IqaeResult {
    pub energy: f64,
    pub basis: KrylovBasis,
    pub solution: GenEigSolution,
}

pub fn iqae_ground_energy(h: &PauliSum, initial: InitialState, k_order: usize, backend: &Backend) -> Result<IqaeResult> {
    let basis = krylov_basis(h, initial, k_order)?;
    let m = overlaps(h, &basis, backend)?;
    let solution = solve_gen_eig(&m, DEFAULT_EPS_CUT)?;
    Ok(IqaeResult {
        energy: solution.lambda_min,
        basis,
        solution,
    })
}
