//! Benchmarks and small algorithms run end to end on the emulator:
//! single-transition randomized benchmarking, the Bell-state parity
//! benchmark, Bernstein–Vazirani and two-qubit Grover search.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gates::{apply_native, GateTiming, NativeOp};
use crate::matrix::{c, phase_invariant_distance, CMatrix};
use crate::noise::{apply_decoherence, exact_distribution, measure, run_shots, shot_rng, NoiseParams, Trajectory};
use crate::state::{BasisLabel, QuditRegister, QUQUART};
use crate::transpile::{transpile, u3_angles, u3_to_native, NativeCircuit, QubitCircuit, Regime, TranspileOptions};

/// How a protocol turns circuits into probabilities.
#[derive(Debug, Clone, PartialEq)]
pub enum Sampling {
    /// State-vector probabilities; gates must be noiseless, an explicit
    /// confusion matrix is still applied analytically.
    Exact { noise: Option<NoiseParams> },
    /// Per-shot trajectories.
    Shots {
        shots: usize,
        seed: u64,
        noise: Option<NoiseParams>,
    },
}

impl Sampling {
    pub fn exact() -> Self {
        Sampling::Exact { noise: None }
    }

    pub fn noise(&self) -> Option<&NoiseParams> {
        match self {
            Sampling::Exact { noise } | Sampling::Shots { noise, .. } => noise.as_ref(),
        }
    }

    fn timing(&self) -> GateTiming {
        self.noise().map(NoiseParams::timing).unwrap_or_default()
    }

    /// Same settings with the seed advanced by `offset`.
    fn offset(&self, offset: u64) -> Self {
        match self.clone() {
            Sampling::Shots { shots, seed, noise } => Sampling::Shots {
                shots,
                seed: seed.wrapping_add(offset.wrapping_mul(0x9E37_79B9_7F4A_7C15)),
                noise,
            },
            exact => exact,
        }
    }
}

fn gate_noise_free(params: &NoiseParams) -> bool {
    params.t1.is_infinite() && params.t2_01.is_infinite() && params.t2_mag.is_infinite() && params.crosstalk_ratio == 0.0
}

/// Probability (or shot frequency) of each detected label.
pub fn detection_distribution(circuit: &NativeCircuit, sampling: &Sampling) -> Result<Vec<(BasisLabel, f64)>> {
    match sampling {
        Sampling::Exact { noise } => {
            let ideal = exact_distribution(circuit)?;
            let Some(params) = noise else { return Ok(ideal) };
            if !gate_noise_free(params) {
                return Err(Error::InvalidParameter(
                    "exact evaluation needs noiseless gates; use shot sampling".into(),
                ));
            }
            let Some(m) = params.spam_confusion else { return Ok(ideal) };
            crate::noise::validate_confusion(&m)?;
            let n = circuit.n_ions;
            let mut out = vec![0.0; QUQUART.pow(n as u32)];
            for (label, p) in ideal {
                for (index, slot) in out.iter_mut().enumerate() {
                    let detected = BasisLabel::from_index(index, n, QUQUART);
                    let w: f64 = label.digits().iter().zip(detected.digits()).map(|(&t, &d)| m[t][d]).product();
                    *slot += p * w;
                }
            }
            Ok(out
                .into_iter()
                .enumerate()
                .filter(|(_, p)| *p > 0.0)
                .map(|(i, p)| (BasisLabel::from_index(i, n, QUQUART), p))
                .collect())
        }
        Sampling::Shots { shots, seed, noise } => {
            let outcomes = run_shots(circuit, noise.as_ref(), *shots, *seed)?;
            let h = crate::noise::histogram(&outcomes);
            Ok(h.into_iter().map(|(l, k)| (l, k as f64 / *shots as f64)).collect())
        }
    }
}

/// Probability of decoded qubit strings satisfying `accept`.
fn qubit_success(
    circuit: &NativeCircuit,
    regime: &Regime,
    n_qubits: usize,
    sampling: &Sampling,
    accept: impl Fn(&[u8]) -> bool,
) -> Result<f64> {
    Ok(detection_distribution(circuit, sampling)?
        .into_iter()
        .filter(|(label, _)| accept(&regime.decode(label.digits(), n_qubits)))
        .map(|(_, p)| p)
        .sum())
}

// ---------------------------------------------------------------- Cliffords

/// The 24 single-qubit Cliffords as 2×2 matrices (defined up to phase),
/// generated from `H` and `S`; index 0 is the identity.
pub struct CliffordGroup {
    elements: Vec<CMatrix>,
    table: Vec<Vec<usize>>,
}

impl CliffordGroup {
    pub fn new() -> Self {
        let h = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0)])
            / c(2f64.sqrt(), 0.0);
        let s = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 1.0)]);
        let mut elements = vec![CMatrix::identity(2, 2)];
        let mut frontier = 0;
        while frontier < elements.len() {
            for g in [&h, &s] {
                let next = g * &elements[frontier];
                if Self::find(&elements, &next).is_none() {
                    elements.push(next);
                }
            }
            frontier += 1;
        }
        assert_eq!(elements.len(), 24, "single-qubit Clifford group has 24 elements");
        let table = (0..24)
            .map(|a| {
                (0..24)
                    .map(|b| Self::find(&elements, &(&elements[a] * &elements[b])).expect("closed group"))
                    .collect()
            })
            .collect();
        CliffordGroup { elements, table }
    }

    fn find(elements: &[CMatrix], m: &CMatrix) -> Option<usize> {
        elements.iter().position(|e| phase_invariant_distance(e, m) < 1e-9)
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn matrix(&self, index: usize) -> &CMatrix {
        &self.elements[index]
    }

    /// Index of `C_a · C_b`.
    pub fn compose(&self, a: usize, b: usize) -> usize {
        self.table[a][b]
    }

    pub fn inverse(&self, a: usize) -> usize {
        (0..self.len()).find(|&b| self.table[b][a] == 0).expect("group inverse")
    }

    /// `u3_to_native` lowering of element `index` on the `{0,level}` pair.
    pub fn native(&self, index: usize, ion: usize, level: usize, timing: &GateTiming) -> Vec<NativeOp> {
        let (theta, phi, lam) = u3_angles(&self.elements[index]);
        u3_to_native(theta, phi, lam, ion, level, timing)
    }
}

impl Default for CliffordGroup {
    fn default() -> Self {
        Self::new()
    }
}

// ---------------------------------------------------------------- fitting

#[derive(Debug, Clone, PartialEq)]
pub struct ExpFit {
    pub a: f64,
    pub b: f64,
    pub p: f64,
    /// Standard errors of `(A, B, p)`.
    pub stderr: [f64; 3],
    /// Set when `B ≈ 0`, leaving `p` unidentifiable (reported as 1).
    pub degenerate: bool,
}

/// Which bound of `0 ≤ A`, `0 ≤ B`, `A + B ≤ 1` a fitted point sits on.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Active {
    None,
    ZeroA,
    ZeroB,
    Unit,
}

fn rss_at(ls: &[f64], ys: &[f64], ws: &[f64], a: f64, b: f64, p: f64) -> f64 {
    ls.iter()
        .zip(ys)
        .zip(ws)
        .map(|((&l, &y), &w)| w * (y - a - b * p.powf(l)).powi(2))
        .sum()
}

/// Best `(A, B)` for fixed `p` under the survival bounds, with the residual.
fn bounded_ab(ls: &[f64], ys: &[f64], ws: &[f64], p: f64) -> (f64, f64, f64, Active) {
    let (mut s11, mut s1x, mut sxx, mut s1y, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for ((&l, &y), &w) in ls.iter().zip(ys).zip(ws) {
        let x = p.powf(l);
        s11 += w;
        s1x += w * x;
        sxx += w * x * x;
        s1y += w * y;
        sxy += w * x * y;
    }
    const SLACK: f64 = 1e-12;
    let det = s11 * sxx - s1x * s1x;
    if det > 1e-12 * s11 * sxx {
        let a = (sxx * s1y - s1x * sxy) / det;
        let b = (s11 * sxy - s1x * s1y) / det;
        if a >= -SLACK && b >= -SLACK && a + b <= 1.0 + SLACK {
            return (a, b, rss_at(ls, ys, ws, a, b, p), Active::None);
        }
    }
    let clamp = |v: f64| v.clamp(0.0, 1.0);
    // Edges of the feasible triangle, each a one-parameter least squares.
    let mut candidates = vec![(clamp(s1y / s11), 0.0, Active::ZeroB)];
    if sxx > 0.0 {
        candidates.push((0.0, clamp(sxy / sxx), Active::ZeroA));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for ((&l, &y), &w) in ls.iter().zip(ys).zip(ws) {
        let x = p.powf(l) - 1.0;
        num += w * x * (y - 1.0);
        den += w * x * x;
    }
    if den > 0.0 {
        let b = clamp(num / den);
        candidates.push((1.0 - b, b, Active::Unit));
    }
    candidates
        .into_iter()
        .map(|(a, b, act)| (a, b, rss_at(ls, ys, ws, a, b, p), act))
        .min_by(|x, y| x.2.total_cmp(&y.2))
        .expect("at least one edge")
}

/// Weighted least squares of `A + B p^l` with `p ∈ (0, 1]` and the survival
/// bounds `A, B ≥ 0`, `A + B ≤ 1`.
///
/// `p` is located by a grid and golden-section search over the residual
/// with `(A, B)` solved at each `p`; an interior optimum is then polished by
/// Gauss–Newton. Standard errors come from the Jacobian in the parameters
/// not pinned by a bound, scaled by the reduced chi-square.
pub fn fit_exponential(lengths: &[f64], survivals: &[f64], weights: &[f64]) -> Result<ExpFit> {
    let m = lengths.len();
    if survivals.len() != m || weights.len() != m {
        return Err(Error::ShapeMismatch("lengths, survivals and weights differ in length".into()));
    }
    let mut distinct = lengths.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::Fit(format!("need at least 3 distinct lengths, got {}", distinct.len())));
    }
    if lengths.iter().chain(survivals).chain(weights).any(|v| !v.is_finite()) || weights.iter().any(|&w| w <= 0.0) {
        return Err(Error::Fit("non-finite data or non-positive weight".into()));
    }
    let (ls, ys, ws) = (lengths, survivals, weights);
    let objective = |p: f64| bounded_ab(ls, ys, ws, p).2;

    // Linear in p, then logarithmic in 1 − p close to 1.
    let mut grid: Vec<f64> = (1..1000).map(|k| k as f64 / 1000.0).collect();
    grid.extend((0..=180).map(|k| 1.0 - 10f64.powf(-3.0 - k as f64 / 20.0)));
    grid.push(1.0);
    grid.sort_by(f64::total_cmp);
    let values: Vec<f64> = grid.iter().map(|&p| objective(p)).collect();
    let best = (0..grid.len()).min_by(|&i, &j| values[i].total_cmp(&values[j])).expect("grid");
    let (mut lo, mut hi) = (grid[best.saturating_sub(1)], grid[(best + 1).min(grid.len() - 1)]);
    let golden = 0.5 * (5f64.sqrt() - 1.0);
    while hi - lo > 1e-15 {
        let x1 = hi - golden * (hi - lo);
        let x2 = lo + golden * (hi - lo);
        if objective(x1) <= objective(x2) {
            hi = x2;
        } else {
            lo = x1;
        }
    }
    let mut p = if objective(1.0) <= objective(0.5 * (lo + hi)) { 1.0 } else { 0.5 * (lo + hi) };
    let (mut a, mut b, _, active) = bounded_ab(ls, ys, ws, p);

    let spread = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - ys.iter().cloned().fold(f64::INFINITY, f64::min);
    if b.abs() <= 1e-9 || b.abs() < 1e-6 * spread || p == 1.0 {
        let wsum: f64 = ws.iter().sum();
        let mean = ys.iter().zip(ws).map(|(y, w)| y * w).sum::<f64>() / wsum;
        let rss = rss_at(ls, ys, ws, mean, 0.0, 1.0);
        let dof = (m as f64 - 1.0).max(1.0);
        return Ok(ExpFit {
            a: mean,
            b: 0.0,
            p: 1.0,
            stderr: [(rss / dof / wsum).sqrt(), f64::NAN, f64::NAN],
            degenerate: true,
        });
    }

    let jacobian = |b: f64, p: f64| {
        DMatrix::from_fn(m, 3, |i, k| match k {
            0 => 1.0,
            1 => p.powf(ls[i]),
            _ => b * ls[i] * p.powf(ls[i] - 1.0),
        })
    };
    let weighted_normal = |j: &DMatrix<f64>| {
        let jw = DMatrix::from_fn(j.nrows(), j.ncols(), |i, k| j[(i, k)] * ws[i]);
        (j.transpose() * &jw, jw)
    };
    if active == Active::None {
        for _ in 0..50 {
            let j = jacobian(b, p);
            let r = DVector::from_fn(m, |i, _| ys[i] - a - b * p.powf(ls[i]));
            let (normal, jw) = weighted_normal(&j);
            let Some(step) = normal.lu().solve(&(jw.transpose() * &r)) else { break };
            let (a_new, b_new, p_new) = (a + step[0], b + step[1], p + step[2]);
            let feasible = p_new > 0.0 && p_new <= 1.0 && a_new >= 0.0 && b_new >= 0.0 && a_new + b_new <= 1.0 + 1e-12;
            if !feasible || rss_at(ls, ys, ws, a_new, b_new, p_new) > rss_at(ls, ys, ws, a, b, p) * (1.0 + 1e-12) + 1e-300 {
                break;
            }
            let done = step.iter().all(|s| s.abs() < 1e-15);
            (a, b, p) = (a_new, b_new, p_new);
            if done {
                break;
            }
        }
    }

    // Reduce the Jacobian to the free directions of the active bound.
    let full = jacobian(b, p);
    let (reduced, to_full): (DMatrix<f64>, Box<dyn Fn(&DMatrix<f64>) -> [f64; 3]>) = match active {
        Active::None => (full.clone(), Box::new(|cov| [cov[(0, 0)], cov[(1, 1)], cov[(2, 2)]])),
        Active::ZeroA => (
            full.columns(1, 2).into_owned(),
            Box::new(|cov| [0.0, cov[(0, 0)], cov[(1, 1)]]),
        ),
        Active::Unit => (
            DMatrix::from_fn(m, 2, |i, k| if k == 0 { full[(i, 1)] - full[(i, 0)] } else { full[(i, 2)] }),
            Box::new(|cov| [cov[(0, 0)], cov[(0, 0)], cov[(1, 1)]]),
        ),
        Active::ZeroB => unreachable!("B = 0 is reported as degenerate"),
    };
    let rss = rss_at(ls, ys, ws, a, b, p);
    let dof = (m as f64 - reduced.ncols() as f64).max(1.0);
    let (normal, _) = weighted_normal(&reduced);
    let cov = normal.try_inverse().ok_or_else(|| Error::Fit("singular normal matrix".into()))?;
    let variances = to_full(&cov);
    let s2 = rss / dof;
    let stderr = variances.map(|v| (v * s2).sqrt());
    if !(p > 0.0 && p <= 1.0) || !a.is_finite() || !b.is_finite() {
        return Err(Error::Fit(format!("fit left the admissible region (p = {p})")));
    }
    Ok(ExpFit {
        a,
        b,
        p,
        stderr,
        degenerate: false,
    })
}

// ---------------------------------------------------------------- RB

/// Error model applied during randomized benchmarking.
#[derive(Debug, Clone, PartialEq)]
pub enum RbNoise {
    None,
    /// Calibrated channels on every native op and staged readout.
    Calibrated(NoiseParams),
    /// After every Clifford a uniformly random Pauli on `{0,j}` with total
    /// probability `3ε/4`: a depolarizing channel of strength `ε`.
    Depolarizing { epsilon: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RbConfig {
    pub ion: usize,
    pub level: usize,
    pub lengths: Vec<usize>,
    pub samples: usize,
    pub shots: usize,
    pub seed: u64,
    pub noise: RbNoise,
}

impl RbConfig {
    /// Lengths 2, 4, …, 100 with 10 random sequences of 300 shots each.
    pub fn standard(level: usize, noise: RbNoise, seed: u64) -> Self {
        RbConfig {
            ion: 0,
            level,
            lengths: (1..=50).map(|k| 2 * k).collect(),
            samples: 10,
            shots: 300,
            seed,
            noise,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RbResult {
    pub lengths: Vec<usize>,
    pub survival: Vec<f64>,
    pub survival_stderr: Vec<f64>,
    pub fit: Option<ExpFit>,
    /// `p + (1 − p)/2`, absent when the fit failed.
    pub fidelity: Option<f64>,
    pub fidelity_stderr: Option<f64>,
    pub fit_error: Option<String>,
}

fn pauli_ops(which: usize, level: usize, timing: &GateTiming) -> Vec<NativeOp> {
    match which {
        0 => vec![NativeOp::rotation(0, level, PI, 0.0, timing)],
        1 => vec![NativeOp::rotation(0, level, PI, FRAC_PI_2, timing)],
        _ => vec![NativeOp::phase(0, level, PI)],
    }
}

/// Survival fraction of one Clifford sequence.
fn rb_sequence_survival(sequence: &[Vec<NativeOp>], config: &RbConfig, seed: u64) -> Result<f64> {
    let timing = match &config.noise {
        RbNoise::Calibrated(p) => p.timing(),
        _ => GateTiming::default(),
    };
    let survived = (0..config.shots as u64)
        .into_par_iter()
        .map(|shot| -> Result<bool> {
            let mut rng = shot_rng(seed, shot);
            let reg = QuditRegister::new(1, QUQUART)?;
            let mut traj = match &config.noise {
                RbNoise::Calibrated(params) => Trajectory::new(reg, params, &mut rng),
                _ => Trajectory {
                    reg,
                    magnetic_detuning: 0.0,
                },
            };
            for clifford in sequence {
                for op in clifford {
                    apply_native(&mut traj.reg, op)?;
                    if let RbNoise::Calibrated(params) = &config.noise {
                        apply_decoherence(&mut traj, op.duration(), params, &mut rng);
                    }
                }
                if let RbNoise::Depolarizing { epsilon } = config.noise {
                    if rng.random::<f64>() < 0.75 * epsilon {
                        for op in pauli_ops(rng.random_range(0..3), config.level, &timing) {
                            apply_native(&mut traj.reg, &op)?;
                        }
                    }
                }
            }
            let outcome = match &config.noise {
                RbNoise::Calibrated(params) => measure(&mut traj.reg, params, &mut rng)?,
                _ => BasisLabel(vec![traj.reg.sample_index(&mut rng)]),
            };
            Ok(outcome.digits()[0] == 0)
        })
        .collect::<Result<Vec<bool>>>()?;
    Ok(survived.iter().filter(|&&s| s).count() as f64 / config.shots as f64)
}

/// Single-transition randomized benchmarking on the `{0,level}` pair.
///
/// Every sequence is `l` uniformly random Cliffords followed by the
/// inverting Clifford, each lowered with [`u3_to_native`] and never merged.
pub fn rb_run(config: &RbConfig) -> Result<RbResult> {
    if config.lengths.is_empty() {
        return Err(Error::InvalidParameter("RB needs at least one length".into()));
    }
    if config.samples == 0 || config.shots == 0 {
        return Err(Error::InvalidParameter("RB needs positive samples and shots".into()));
    }
    if !(1..QUQUART).contains(&config.level) {
        return Err(Error::Level {
            level: config.level,
            context: "RB transition",
        });
    }
    if let RbNoise::Depolarizing { epsilon } = config.noise {
        if !(0.0..=4.0 / 3.0).contains(&epsilon) {
            return Err(Error::InvalidParameter(format!("depolarizing strength {epsilon} out of range")));
        }
    }
    if let RbNoise::Calibrated(p) = &config.noise {
        p.validate()?;
    }
    let group = CliffordGroup::new();
    let timing = match &config.noise {
        RbNoise::Calibrated(p) => p.timing(),
        _ => GateTiming::default(),
    };
    let mut survival = Vec::with_capacity(config.lengths.len());
    let mut survival_stderr = Vec::with_capacity(config.lengths.len());
    for (li, &length) in config.lengths.iter().enumerate() {
        let mut per_sample = Vec::with_capacity(config.samples);
        for sample in 0..config.samples {
            let key = config.seed ^ ((li as u64) << 32 | sample as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            let mut rng = shot_rng(key, u64::MAX);
            let mut net = 0;
            let mut sequence = Vec::with_capacity(length + 1);
            for _ in 0..length {
                let g = rng.random_range(0..group.len());
                net = group.compose(g, net);
                sequence.push(group.native(g, 0, config.level, &timing));
            }
            sequence.push(group.native(group.inverse(net), 0, config.level, &timing));
            per_sample.push(rb_sequence_survival(&sequence, config, key)?);
        }
        let k = per_sample.len() as f64;
        let mean = per_sample.iter().sum::<f64>() / k;
        let var = if per_sample.len() > 1 {
            per_sample.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (k - 1.0)
        } else {
            0.0
        };
        survival.push(mean);
        survival_stderr.push((var / k).sqrt());
    }
    let ls: Vec<f64> = config.lengths.iter().map(|&l| l as f64).collect();
    // Binomial floor keeps weights finite when all samples agree.
    let floor = 1.0 / (config.shots * config.samples) as f64;
    let weights: Vec<f64> = survival_stderr
        .iter()
        .map(|se| 1.0 / (se * se).max(floor * floor))
        .collect();
    let (fit, fit_error) = match fit_exponential(&ls, &survival, &weights) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let fidelity = fit.as_ref().map(|f| f.p + (1.0 - f.p) / 2.0);
    let fidelity_stderr = fit.as_ref().map(|f| if f.degenerate { 0.0 } else { f.stderr[2] / 2.0 });
    Ok(RbResult {
        lengths: config.lengths.clone(),
        survival,
        survival_stderr,
        fit,
        fidelity,
        fidelity_stderr,
        fit_error,
    })
}

// ---------------------------------------------------------------- parity

#[derive(Debug, Clone, PartialEq)]
pub struct ParityResult {
    /// `P(00) + P(11)` after the entangling gate alone.
    pub a: f64,
    /// Amplitude of the frequency-2 parity oscillation.
    pub b: f64,
    pub fidelity: f64,
    pub phis: Vec<f64>,
    pub parity: Vec<f64>,
    /// Fitted `(cos 2φ, sin 2φ, offset)` coefficients.
    pub coefficients: [f64; 3],
}

/// `N` analysis phases evenly covering `[0, 2π)`.
pub fn phi_grid(points: usize) -> Vec<f64> {
    (0..points).map(|k| 2.0 * PI * k as f64 / points as f64).collect()
}

/// The `R_φ^{01}(θ)` rotation as a `U3`.
fn rphi_as_u3(circuit: &mut QubitCircuit, qubit: usize, theta: f64, phi: f64) {
    circuit.u3(qubit, theta, phi - FRAC_PI_2, FRAC_PI_2 - phi);
}

fn parity_of(dist: &[(BasisLabel, f64)], regime: &Regime) -> f64 {
    dist.iter()
        .map(|(label, p)| {
            let bits = regime.decode(label.digits(), 2);
            if bits[0] == bits[1] {
                *p
            } else {
                -*p
            }
        })
        .sum()
}

/// Bell-state fidelity `F = A/2 + B/2` for an `XX(χ)` gate between ions
/// `a` and `b` (simulated as adjacent ions keeping their group tags).
pub fn parity_benchmark(ions: (usize, usize), chi: f64, phis: &[f64], sampling: &Sampling) -> Result<ParityResult> {
    if phis.len() < 8 {
        return Err(Error::InvalidParameter(format!("need at least 8 analysis phases, got {}", phis.len())));
    }
    if ions.0 == ions.1 {
        return Err(Error::EqualIndices(ions.0));
    }
    let groups = {
        let full = crate::transpile::alternating_groups(ions.0.max(ions.1) + 1);
        vec![full[ions.0], full[ions.1]]
    };
    let options = TranspileOptions {
        timing: sampling.timing(),
        groups: Some(groups),
    };
    let regime = Regime::Qubit;
    let mut bell = QubitCircuit::new(2);
    bell.ops.push(crate::transpile::QubitOp::Xx { a: 0, b: 1, chi });
    let native = transpile(&bell, &regime, &options)?;
    let dist = detection_distribution(&native, sampling)?;
    let a = dist
        .iter()
        .filter(|(l, _)| {
            let bits = regime.decode(l.digits(), 2);
            bits[0] == bits[1]
        })
        .map(|(_, p)| p)
        .sum::<f64>();

    let mut parity = Vec::with_capacity(phis.len());
    for (k, &phi) in phis.iter().enumerate() {
        let mut circuit = bell.clone();
        circuit.barrier();
        rphi_as_u3(&mut circuit, 0, FRAC_PI_2, phi);
        rphi_as_u3(&mut circuit, 1, FRAC_PI_2, phi);
        let native = transpile(&circuit, &regime, &options)?;
        parity.push(parity_of(&detection_distribution(&native, &sampling.offset(k as u64 + 1))?, &regime));
    }
    let shots = match sampling {
        Sampling::Shots { shots, .. } => Some(*shots as f64),
        Sampling::Exact { .. } => None,
    };
    // Binomial variance of a ±1 average: (1 − P²)/N.
    let weights: Vec<f64> = parity
        .iter()
        .map(|p| match shots {
            Some(n) => n / (1.0 - p * p).max(1.0 / n),
            None => 1.0,
        })
        .collect();
    let design = DMatrix::from_fn(phis.len(), 3, |i, k| match k {
        0 => (2.0 * phis[i]).cos(),
        1 => (2.0 * phis[i]).sin(),
        _ => 1.0,
    });
    let wd = DMatrix::from_fn(phis.len(), 3, |i, k| design[(i, k)] * weights[i]);
    let normal = design.transpose() * &wd;
    let rhs = wd.transpose() * DVector::from_column_slice(&parity);
    let coef = normal
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Fit("parity phases do not determine a frequency-2 sinusoid".into()))?;
    let b = coef[0].hypot(coef[1]);
    Ok(ParityResult {
        a,
        b,
        fidelity: a / 2.0 + b / 2.0,
        phis: phis.to_vec(),
        parity,
        coefficients: [coef[0], coef[1], coef[2]],
    })
}

// ---------------------------------------------------------------- BV and Grover

/// Which hardware encoding an algorithm runs in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlgoRegime {
    Qubit,
    Ququart,
}

impl AlgoRegime {
    fn regime(self, n_qubits: usize) -> Regime {
        match self {
            AlgoRegime::Qubit => Regime::Qubit,
            AlgoRegime::Ququart => Regime::ququart_consecutive(n_qubits),
        }
    }
}

/// Bernstein–Vazirani with `secret.len()` data qubits and one ancilla (last).
/// Preparation, oracle and decoding are separated by barriers so the
/// oracle is never merged with its neighbours.
pub fn bv_circuit(secret: &[u8]) -> Result<QubitCircuit> {
    if secret.is_empty() || secret.iter().any(|&b| b > 1) {
        return Err(Error::InvalidParameter("secret must be a non-empty bit string".into()));
    }
    let n = secret.len();
    let ancilla = n;
    let mut c = QubitCircuit::new(n + 1);
    c.x(ancilla);
    for q in 0..=n {
        c.h(q);
    }
    c.barrier();
    for (q, &bit) in secret.iter().enumerate() {
        if bit == 1 {
            c.cx(q, ancilla);
        }
    }
    c.barrier();
    for q in 0..=n {
        c.h(q);
    }
    Ok(c)
}

/// Probability that the data register reads out the secret.
pub fn bv_run(secret: &[u8], regime: AlgoRegime, sampling: &Sampling) -> Result<f64> {
    let circuit = bv_circuit(secret)?;
    let regime = regime.regime(circuit.n_qubits);
    let options = TranspileOptions {
        timing: sampling.timing(),
        groups: None,
    };
    let native = transpile(&circuit, &regime, &options)?;
    qubit_success(&native, &regime, circuit.n_qubits, sampling, |bits| &bits[..secret.len()] == secret)
}

/// One Grover iteration on two qubits marking `secret ∈ 0..4`
/// (high bit = qubit 0). Oracle and diffusion each contain one CZ.
pub fn grover_circuit(secret: u8) -> Result<QubitCircuit> {
    if secret > 3 {
        return Err(Error::InvalidParameter(format!("Grover secret must be in 0..4, got {secret}")));
    }
    let bits = [(secret >> 1) & 1, secret & 1];
    let mut c = QubitCircuit::new(2);
    c.h(0).h(1).barrier();
    for (q, &b) in bits.iter().enumerate() {
        if b == 0 {
            c.x(q);
        }
    }
    c.cz(0, 1);
    for (q, &b) in bits.iter().enumerate() {
        if b == 0 {
            c.x(q);
        }
    }
    c.barrier();
    c.h(0).h(1).x(0).x(1).cz(0, 1).x(0).x(1).h(0).h(1);
    Ok(c)
}

/// Transpiled Grover circuit in the qubit regime.
pub fn grover_native(secret: u8, timing: &GateTiming) -> Result<NativeCircuit> {
    let options = TranspileOptions {
        timing: *timing,
        groups: None,
    };
    transpile(&grover_circuit(secret)?, &Regime::Qubit, &options)
}

/// Probability of reading the marked item after one iteration.
pub fn grover_run(secret: u8, sampling: &Sampling) -> Result<f64> {
    let native = grover_native(secret, &sampling.timing())?;
    let bits = [(secret >> 1) & 1, secret & 1];
    qubit_success(&native, &Regime::Qubit, 2, sampling, |b| b == bits)
}

/// Shot-sampled success with its binomial standard error.
pub fn with_stderr(p: f64, shots: usize) -> (f64, f64) {
    (p, (p * (1.0 - p) / shots as f64).sqrt())
}
