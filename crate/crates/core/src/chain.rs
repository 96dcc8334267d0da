//! Linear ion-chain mechanics and amplitude-segmented MS pulses.
//!
//! Lengths are in units of `ℓ = (q²/(4πε₀ m ω_z²))^{1/3}` and frequencies in
//! units of `ω_z` inside the numerics; the public types carry SI values.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
pub const VACUUM_PERMITTIVITY: f64 = 8.854_187_812_8e-12;
pub const ATOMIC_MASS: f64 = 1.660_539_066_60e-27;
pub const HBAR: f64 = 1.054_571_817e-34;
pub const YB171_MASS: f64 = 170.936_325_8 * ATOMIC_MASS;
/// Wavelength of the quadrupole transition driving the gates, m.
pub const GATE_WAVELENGTH: f64 = 435.5e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct IonChain {
    pub n_ions: usize,
    /// Angular secular frequencies, rad/s.
    pub omega_x: f64,
    pub omega_y: f64,
    pub omega_z: f64,
    /// kg
    pub mass: f64,
    /// C
    pub charge: f64,
}

impl IonChain {
    /// `¹⁷¹Yb⁺` chain with secular frequencies given in Hz.
    pub fn ytterbium(n_ions: usize, fx: f64, fy: f64, fz: f64) -> Result<Self> {
        let chain = IonChain {
            n_ions,
            omega_x: 2.0 * PI * fx,
            omega_y: 2.0 * PI * fy,
            omega_z: 2.0 * PI * fz,
            mass: YB171_MASS,
            charge: ELEMENTARY_CHARGE,
        };
        chain.validate()?;
        Ok(chain)
    }

    /// Eight ions at `{3.7, 3.8, 0.116}` MHz.
    pub fn processor_default() -> Self {
        Self::ytterbium(8, 3.7e6, 3.8e6, 0.116e6).expect("stable default trap")
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_ions == 0 {
            return Err(Error::InvalidParameter("a chain needs at least one ion".into()));
        }
        let all = [self.omega_x, self.omega_y, self.omega_z, self.mass, self.charge];
        if all.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::InvalidParameter("trap frequencies, mass and charge must be positive".into()));
        }
        if self.omega_z >= self.omega_x || self.omega_z >= self.omega_y {
            return Err(Error::InvalidParameter(
                "axial frequency must be below both radial frequencies for a linear chain".into(),
            ));
        }
        Ok(())
    }

    /// Length unit `ℓ`, m.
    pub fn length_scale(&self) -> f64 {
        (self.charge * self.charge / (4.0 * PI * VACUUM_PERMITTIVITY * self.mass * self.omega_z * self.omega_z)).cbrt()
    }

    /// Equilibrium positions in metres.
    pub fn positions(&self) -> Result<Vec<f64>> {
        let l = self.length_scale();
        Ok(equilibrium_positions(self.n_ions)?.into_iter().map(|u| u * l).collect())
    }

    /// Smallest neighbour distance, m.
    pub fn min_spacing(&self) -> Result<f64> {
        let x = self.positions()?;
        Ok(x.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min))
    }

    /// `η_k = k·√(ħ/(2mω_k))` for the gate wavelength, beam along the axis.
    pub fn lamb_dicke(&self, omega: f64) -> f64 {
        2.0 * PI / GATE_WAVELENGTH * (HBAR / (2.0 * self.mass * omega)).sqrt()
    }
}

/// Trap description as read from a file: frequencies in Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    pub n_ions: usize,
    pub fx_hz: f64,
    pub fy_hz: f64,
    pub fz_hz: f64,
    #[serde(default = "default_mass_number")]
    pub mass_number: f64,
    #[serde(default = "default_charge_number")]
    pub charge_number: f64,
}

fn default_mass_number() -> f64 {
    YB171_MASS / ATOMIC_MASS
}

fn default_charge_number() -> f64 {
    1.0
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            n_ions: 8,
            fx_hz: 3.7e6,
            fy_hz: 3.8e6,
            fz_hz: 0.116e6,
            mass_number: default_mass_number(),
            charge_number: 1.0,
        }
    }
}

impl ChainConfig {
    pub fn chain(&self) -> Result<IonChain> {
        let chain = IonChain {
            n_ions: self.n_ions,
            omega_x: 2.0 * PI * self.fx_hz,
            omega_y: 2.0 * PI * self.fy_hz,
            omega_z: 2.0 * PI * self.fz_hz,
            mass: self.mass_number * ATOMIC_MASS,
            charge: self.charge_number * ELEMENTARY_CHARGE,
        };
        chain.validate()?;
        Ok(chain)
    }
}

fn coulomb_force(u: &[f64]) -> Vec<f64> {
    (0..u.len())
        .map(|m| {
            let coulomb: f64 = (0..u.len())
                .filter(|&n| n != m)
                .map(|n| {
                    let d = u[m] - u[n];
                    d.signum() / (d * d)
                })
                .sum();
            u[m] - coulomb
        })
        .collect()
}

/// Axial stiffness matrix in units of `m ω_z²`.
fn axial_hessian(u: &[f64]) -> DMatrix<f64> {
    let n = u.len();
    DMatrix::from_fn(n, n, |m, k| {
        if m == k {
            1.0 + 2.0 * (0..n).filter(|&j| j != m).map(|j| 1.0 / (u[m] - u[j]).abs().powi(3)).sum::<f64>()
        } else {
            -2.0 / (u[m] - u[k]).abs().powi(3)
        }
    })
}

/// Radial stiffness matrix in units of `m ω_z²` for trap ratio `ω_r/ω_z`.
fn radial_hessian(u: &[f64], ratio: f64) -> DMatrix<f64> {
    let n = u.len();
    DMatrix::from_fn(n, n, |m, k| {
        if m == k {
            ratio * ratio - (0..n).filter(|&j| j != m).map(|j| 1.0 / (u[m] - u[j]).abs().powi(3)).sum::<f64>()
        } else {
            1.0 / (u[m] - u[k]).abs().powi(3)
        }
    })
}

/// Dimensionless equilibrium positions from Newton iteration on the force
/// balance `u_m = Σ_{n≠m} sign(u_m−u_n)/(u_m−u_n)²`, sorted and centred.
pub fn equilibrium_positions(n_ions: usize) -> Result<Vec<f64>> {
    if n_ions == 0 {
        return Err(Error::InvalidParameter("a chain needs at least one ion".into()));
    }
    // Spacing estimate from the known scaling of the central gap.
    let gap = 2.018 / (n_ions as f64).powf(0.559);
    let mut u: Vec<f64> = (0..n_ions).map(|m| (m as f64 - (n_ions as f64 - 1.0) / 2.0) * gap).collect();
    let norm = |f: &[f64]| f.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let max_iter = 200;
    for _ in 0..max_iter {
        let f = coulomb_force(&u);
        if norm(&f) < 1e-13 {
            break;
        }
        let step = axial_hessian(&u)
            .lu()
            .solve(&nalgebra::DVector::from_vec(f.clone()))
            .ok_or(Error::NoConvergence {
                iterations: 0,
                residual: norm(&f),
            })?;
        let mut scale = 1.0;
        loop {
            let trial: Vec<f64> = u.iter().zip(step.iter()).map(|(x, s)| x - scale * s).collect();
            let ordered = trial.windows(2).all(|w| w[1] > w[0]);
            if ordered && norm(&coulomb_force(&trial)) < norm(&f) {
                u = trial;
                break;
            }
            scale *= 0.5;
            if scale < 1e-12 {
                return Err(Error::NoConvergence {
                    iterations: max_iter,
                    residual: norm(&f),
                });
            }
        }
    }
    let residual = norm(&coulomb_force(&u));
    if residual > 1e-12 {
        return Err(Error::NoConvergence {
            iterations: max_iter,
            residual,
        });
    }
    // Symmetrise away rounding: the exact solution is odd under reversal.
    let sym: Vec<f64> = (0..n_ions).map(|m| 0.5 * (u[m] - u[n_ions - 1 - m])).collect();
    Ok(sym)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeStructure {
    pub axis: Axis,
    /// rad/s; descending for radial axes, ascending for the axial one, so the
    /// centre-of-mass mode is always first.
    pub frequencies: Vec<f64>,
    /// Column `k` holds mode `k`; entry `(i, k)` is the participation `b_ik`.
    pub eigenvectors: DMatrix<f64>,
}

/// Normal modes of the chain along `axis`.
pub fn normal_modes(chain: &IonChain, axis: Axis) -> Result<ModeStructure> {
    chain.validate()?;
    let u = equilibrium_positions(chain.n_ions)?;
    let hessian = match axis {
        Axis::Z => axial_hessian(&u),
        Axis::X => radial_hessian(&u, chain.omega_x / chain.omega_z),
        Axis::Y => radial_hessian(&u, chain.omega_y / chain.omega_z),
    };
    let eig = SymmetricEigen::new(hessian);
    let mut order: Vec<usize> = (0..chain.n_ions).collect();
    match axis {
        Axis::Z => order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b])),
        _ => order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a])),
    }
    let mut frequencies = Vec::with_capacity(chain.n_ions);
    let mut vectors = DMatrix::zeros(chain.n_ions, chain.n_ions);
    for (k, &src) in order.iter().enumerate() {
        let lambda = eig.eigenvalues[src];
        if lambda <= 0.0 {
            return Err(Error::Unstable { mode: k, value: lambda });
        }
        frequencies.push(chain.omega_z * lambda.sqrt());
        let mut v = eig.eigenvectors.column(src).into_owned();
        // Deterministic sign: the largest component is positive; ties go to
        // the lowest ion index.
        let pivot = (0..v.len())
            .max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()).then(b.cmp(&a)))
            .expect("non-empty");
        if v[pivot] < 0.0 {
            v = -v;
        }
        vectors.set_column(k, &v);
    }
    Ok(ModeStructure {
        axis,
        frequencies,
        eigenvectors: vectors,
    })
}

// ---------------------------------------------------------------- pulses

#[derive(Debug, Clone, PartialEq)]
pub struct PulseShape {
    pub n_segments: usize,
    /// Rabi frequency of each equal-length segment, rad/s.
    pub segment_amplitudes: Vec<f64>,
    pub total_duration: f64,
    /// Beat-note detuning of the bichromatic drive, rad/s.
    pub mu: f64,
    pub ions: (usize, usize),
    pub target_chi: f64,
    pub achieved_chi: f64,
    /// `|α_k(τ)| / max_t |α_k(t)|` per radial-x mode from the solver.
    pub closure_residuals: Vec<f64>,
    /// True when the second ion's drive phase was shifted by `π` to reach the
    /// sign of `target_chi`.
    pub second_ion_phase_flipped: bool,
}

/// Options of [`solve_pulse_shape`].
#[derive(Debug, Clone, PartialEq)]
pub struct PulseOptions {
    /// `None` selects `2N + 1` for an `N`-ion chain.
    pub n_segments: Option<usize>,
    /// Largest allowed segment Rabi frequency, rad/s.
    pub power_cap: f64,
}

impl Default for PulseOptions {
    fn default() -> Self {
        PulseOptions {
            n_segments: None,
            power_cap: 2.0 * PI * 500e3,
        }
    }
}

/// Beat-note detuning 2π·10 kHz above the highest radial-x mode.
pub fn default_mu(modes: &ModeStructure) -> f64 {
    modes.frequencies.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 2.0 * PI * 10e3
}

/// `∫_{t0}^{t1} e^{iδt} dt`.
fn phase_integral(delta: f64, t0: f64, t1: f64) -> Complex64 {
    if delta.abs() * (t1 - t0) < 1e-8 {
        let mid = 0.5 * (t0 + t1);
        return Complex64::from_polar(t1 - t0, delta * mid);
    }
    (Complex64::from_polar(1.0, delta * t1) - Complex64::from_polar(1.0, delta * t0)) / Complex64::new(0.0, delta)
}

/// Unit vector spanning the amplitudes that close every detuning's
/// phase-space loop, from the SVD of the `2K × S` real constraint matrix
/// padded to square. Fails unless the null space is exactly one-dimensional.
pub fn closure_null_vector(detunings: &[f64], duration: f64, n_segments: usize) -> Result<Vec<f64>> {
    if n_segments == 0 || duration <= 0.0 {
        return Err(Error::InvalidParameter("segments and duration must be positive".into()));
    }
    let rows = 2 * detunings.len();
    let size = rows.max(n_segments);
    let dt = duration / n_segments as f64;
    let mut a = DMatrix::<f64>::zeros(size, n_segments.max(size));
    for (k, &delta) in detunings.iter().enumerate() {
        for s in 0..n_segments {
            // Scale by δ so rows are comparable across modes.
            let integral = phase_integral(delta, s as f64 * dt, (s + 1) as f64 * dt) / dt;
            a[(2 * k, s)] = integral.re;
            a[(2 * k + 1, s)] = integral.im;
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let threshold = 1e-10 * sigma_max.max(f64::MIN_POSITIVE);
    // Only directions inside the true unknown space count.
    let null: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] <= threshold)
        .filter(|&i| (n_segments..v_t.ncols()).all(|c| v_t[(i, c)].abs() < 1e-12))
        .collect();
    if null.len() != 1 {
        return Err(Error::Degenerate(null.len()));
    }
    let row = v_t.row(null[0]);
    let mut v: Vec<f64> = (0..n_segments).map(|s| row[s]).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let sign = if v.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
    for x in &mut v {
        *x *= sign / norm;
    }
    Ok(v)
}

/// Geometric phase of a piecewise-constant drive, closed form per segment pair:
/// `χ = −2 Σ_k η_ak η_bk ∫₀^τ dt₂ ∫₀^{t₂} dt₁ Ω(t₂)Ω(t₁) sin(δ_k(t₂−t₁))`.
pub fn segmented_chi(amplitudes: &[f64], duration: f64, detunings: &[f64], couplings: &[f64]) -> f64 {
    let s = amplitudes.len();
    let dt = duration / s as f64;
    let mut chi = 0.0;
    for (&delta, &g) in detunings.iter().zip(couplings) {
        if g == 0.0 {
            continue;
        }
        let integrals: Vec<Complex64> = (0..s).map(|p| phase_integral(delta, p as f64 * dt, (p + 1) as f64 * dt)).collect();
        let diagonal = if (delta * dt).abs() < 1e-4 {
            let x = delta * dt;
            // dt/δ − sin(δdt)/δ² expanded for small δdt.
            dt * dt * (x / 6.0 - x.powi(3) / 120.0)
        } else {
            dt / delta - (delta * dt).sin() / (delta * delta)
        };
        let mut mode = 0.0;
        for p in 0..s {
            mode += amplitudes[p] * amplitudes[p] * diagonal;
            for q in 0..p {
                mode += amplitudes[p] * amplitudes[q] * (integrals[p] * integrals[q].conj()).im;
            }
        }
        chi += -2.0 * g * mode;
    }
    chi
}

/// Mode detunings `μ − ω_k` and pair couplings `η_ak η_bk` for the radial-x
/// modes, with frequencies optionally shifted by `offset`.
fn mode_terms(chain: &IonChain, modes: &ModeStructure, ions: (usize, usize), mu: f64, offset: f64) -> (Vec<f64>, Vec<f64>) {
    let detunings = modes.frequencies.iter().map(|w| mu - (w + offset)).collect();
    let couplings = modes
        .frequencies
        .iter()
        .enumerate()
        .map(|(k, &w)| {
            let eta = chain.lamb_dicke(w + offset);
            eta * eta * modes.eigenvectors[(ions.0, k)] * modes.eigenvectors[(ions.1, k)]
        })
        .collect();
    (detunings, couplings)
}

fn closure_profile(amplitudes: &[f64], duration: f64, delta: f64) -> (Complex64, f64) {
    let dt = duration / amplitudes.len() as f64;
    let mut alpha = Complex64::new(0.0, 0.0);
    let mut peak = 0.0f64;
    // The peak is sampled inside segments too, so a single loop still has one.
    const SAMPLES: usize = 64;
    for (s, &omega) in amplitudes.iter().enumerate() {
        let start = s as f64 * dt;
        for k in 1..=SAMPLES {
            let t = start + dt * k as f64 / SAMPLES as f64;
            peak = peak.max((alpha + omega * phase_integral(delta, start, t)).norm());
        }
        alpha += omega * phase_integral(delta, start, start + dt);
    }
    (alpha, peak)
}

/// Segment amplitudes for an MS gate between `ions` whose radial-x
/// trajectories all close at `total_duration` and whose geometric phase is
/// `target_chi`.
pub fn solve_pulse_shape(
    chain: &IonChain,
    ions: (usize, usize),
    total_duration: f64,
    mu: f64,
    target_chi: f64,
    options: &PulseOptions,
) -> Result<PulseShape> {
    chain.validate()?;
    for i in [ions.0, ions.1] {
        if i >= chain.n_ions {
            return Err(Error::IonIndex { index: i, n: chain.n_ions });
        }
    }
    if ions.0 == ions.1 {
        return Err(Error::EqualIndices(ions.0));
    }
    if !(total_duration > 0.0) || !mu.is_finite() || !target_chi.is_finite() {
        return Err(Error::InvalidParameter("duration must be positive, detuning and χ finite".into()));
    }
    let modes = normal_modes(chain, Axis::X)?;
    let n_segments = options.n_segments.unwrap_or(2 * chain.n_ions + 1);
    let (detunings, couplings) = mode_terms(chain, &modes, ions, mu, 0.0);
    let unit = closure_null_vector(&detunings, total_duration, n_segments)?;
    let (amplitudes, flipped, achieved) = if target_chi == 0.0 {
        (vec![0.0; n_segments], false, 0.0)
    } else {
        let chi_unit = segmented_chi(&unit, total_duration, &detunings, &couplings);
        if chi_unit == 0.0 || !chi_unit.is_finite() {
            return Err(Error::Degenerate(0));
        }
        let flipped = chi_unit.signum() != target_chi.signum();
        let scale = (target_chi.abs() / chi_unit.abs()).sqrt();
        let amps: Vec<f64> = unit.iter().map(|v| v * scale).collect();
        let achieved = segmented_chi(&amps, total_duration, &detunings, &couplings) * if flipped { -1.0 } else { 1.0 };
        (amps, flipped, achieved)
    };
    let peak = amplitudes.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    if peak > options.power_cap {
        return Err(Error::Power {
            required: peak,
            cap: options.power_cap,
        });
    }
    let closure_residuals = detunings
        .iter()
        .map(|&d| {
            let (end, peak) = closure_profile(&amplitudes, total_duration, d);
            if peak == 0.0 {
                0.0
            } else {
                end.norm() / peak
            }
        })
        .collect();
    Ok(PulseShape {
        n_segments,
        segment_amplitudes: amplitudes,
        total_duration,
        mu,
        ions,
        target_chi,
        achieved_chi: achieved,
        closure_residuals,
        second_ion_phase_flipped: flipped,
    })
}

// ---------------------------------------------------------------- verification

const GL5_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GL5_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189,
    0.478_628_670_499_366,
    0.568_888_888_888_889,
    0.478_628_670_499_366,
    0.236_926_885_056_189,
];

fn gauss_legendre(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    GL5_NODES.iter().zip(GL5_WEIGHTS).map(|(x, w)| w * f(mid + half * x)).sum::<f64>() * half
}

/// Panels per segment of the verifier; five nodes each.
pub const VERIFY_PANELS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryReport {
    /// Per radial-x mode: `|α_k(τ)| / max_t |α_k(t)|`.
    pub residuals: Vec<f64>,
    /// Per mode: `|α_k(τ)|` in units of `rad/s · s`.
    pub end_displacements: Vec<f64>,
    pub achieved_chi: f64,
    /// `dχ/dδω` at zero secular-frequency offset, rad per rad/s.
    pub chi_slope: f64,
    pub robustness: Vec<RobustnessPoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessPoint {
    /// Common shift of every radial mode, rad/s.
    pub offset: f64,
    pub achieved_chi: f64,
    /// `Σ_k (η_ak² + η_bk²)|α_k(τ)|²`: residual spin-motion entanglement.
    pub residual_displacement: f64,
    pub max_relative_residual: f64,
}

/// Fine quadrature of the trajectories of a piecewise-constant drive.
struct Quadrature<'a> {
    amplitudes: &'a [f64],
    duration: f64,
}

impl Quadrature<'_> {
    fn omega(&self, t: f64) -> f64 {
        let s = self.amplitudes.len();
        let index = ((t / self.duration) * s as f64).floor() as usize;
        self.amplitudes[index.min(s - 1)]
    }

    fn panels(&self) -> Vec<(f64, f64)> {
        let s = self.amplitudes.len();
        let dt = self.duration / s as f64;
        let h = dt / VERIFY_PANELS as f64;
        (0..s)
            .flat_map(|seg| (0..VERIFY_PANELS).map(move |p| (seg as f64 * dt + p as f64 * h, seg as f64 * dt + (p + 1) as f64 * h)))
            .collect()
    }

    /// `α(τ)` and `max_t |α(t)|` sampled at panel ends.
    fn alpha(&self, delta: f64) -> (Complex64, f64) {
        let mut alpha = Complex64::new(0.0, 0.0);
        let mut peak = 0.0f64;
        for (a, b) in self.panels() {
            let re = gauss_legendre(a, b, |t| self.omega(t) * (delta * t).cos());
            let im = gauss_legendre(a, b, |t| self.omega(t) * (delta * t).sin());
            alpha += Complex64::new(re, im);
            peak = peak.max(alpha.norm());
        }
        (alpha, peak)
    }

    /// `∫₀^τ dt₂ ∫₀^{t₂} dt₁ Ω(t₂)Ω(t₁) sin(δ(t₂−t₁))` with an inner Gauss
    /// rule on `[panel start, t₂]` nested in the outer one.
    fn double_integral(&self, delta: f64) -> f64 {
        let (mut c_acc, mut s_acc) = (0.0, 0.0);
        let mut total = 0.0;
        for (a, b) in self.panels() {
            total += gauss_legendre(a, b, |t2| {
                let c = c_acc + gauss_legendre(a, t2, |t1| self.omega(t1) * (delta * t1).cos());
                let s = s_acc + gauss_legendre(a, t2, |t1| self.omega(t1) * (delta * t1).sin());
                self.omega(t2) * ((delta * t2).sin() * c - (delta * t2).cos() * s)
            });
            c_acc += gauss_legendre(a, b, |t| self.omega(t) * (delta * t).cos());
            s_acc += gauss_legendre(a, b, |t| self.omega(t) * (delta * t).sin());
        }
        total
    }
}

/// Independent check of a pulse by fine quadrature, plus its response to a
/// common drift of the radial secular frequencies over `offsets`.
pub fn verify_trajectories(shape: &PulseShape, chain: &IonChain, offsets: &[f64]) -> Result<TrajectoryReport> {
    let modes = normal_modes(chain, Axis::X)?;
    let ions = shape.ions;
    let quad = Quadrature {
        amplitudes: &shape.segment_amplitudes,
        duration: shape.total_duration,
    };
    let sign = if shape.second_ion_phase_flipped { -1.0 } else { 1.0 };
    let evaluate = |offset: f64| {
        let (detunings, couplings) = mode_terms(chain, &modes, ions, shape.mu, offset);
        let mut chi = 0.0;
        let mut residuals = Vec::with_capacity(detunings.len());
        let mut ends = Vec::with_capacity(detunings.len());
        let mut displacement = 0.0;
        for (k, (&d, &g)) in detunings.iter().zip(&couplings).enumerate() {
            let (end, peak) = quad.alpha(d);
            residuals.push(if peak == 0.0 { 0.0 } else { end.norm() / peak });
            ends.push(end.norm());
            let w = modes.frequencies[k] + offset;
            let eta = chain.lamb_dicke(w);
            let (ba, bb) = (modes.eigenvectors[(ions.0, k)], modes.eigenvectors[(ions.1, k)]);
            displacement += eta * eta * (ba * ba + bb * bb) * end.norm_sqr();
            if g != 0.0 {
                chi += -2.0 * g * quad.double_integral(d);
            }
        }
        (chi * sign, residuals, ends, displacement)
    };
    let (achieved_chi, residuals, end_displacements, _) = evaluate(0.0);
    let h = 2.0 * PI * 1.0;
    let chi_slope = (evaluate(h).0 - evaluate(-h).0) / (2.0 * h);
    let robustness = offsets
        .iter()
        .map(|&offset| {
            let (chi, residuals, _, displacement) = evaluate(offset);
            RobustnessPoint {
                offset,
                achieved_chi: chi,
                residual_displacement: displacement,
                max_relative_residual: residuals.iter().cloned().fold(0.0, f64::max),
            }
        })
        .collect();
    Ok(TrajectoryReport {
        residuals,
        end_displacements,
        achieved_chi,
        chi_slope,
        robustness,
    })
}

/// Offsets from `−2π·2 kHz` to `+2π·2 kHz` in `points` steps.
pub fn robustness_offsets(points: usize) -> Vec<f64> {
    let span = 2.0 * PI * 2e3;
    if points < 2 {
        return vec![0.0];
    }
    (0..points).map(|k| -span + 2.0 * span * k as f64 / (points - 1) as f64).collect()
}

/// Constant-amplitude comparison pulse: detuned one loop from the
/// centre-of-mass mode (`μ = ω_COM + 2π/τ`) so that mode closes, amplitude
/// chosen for the same `χ`.
pub fn square_pulse(chain: &IonChain, ions: (usize, usize), total_duration: f64, target_chi: f64) -> Result<PulseShape> {
    let modes = normal_modes(chain, Axis::X)?;
    let mu = modes.frequencies[0] + 2.0 * PI / total_duration;
    let (detunings, couplings) = mode_terms(chain, &modes, ions, mu, 0.0);
    let unit = [1.0];
    let chi_unit = segmented_chi(&unit, total_duration, &detunings, &couplings);
    if chi_unit == 0.0 {
        return Err(Error::Degenerate(0));
    }
    let flipped = chi_unit.signum() != target_chi.signum() && target_chi != 0.0;
    let amp = (target_chi.abs() / chi_unit.abs()).sqrt();
    let residuals = detunings
        .iter()
        .map(|&d| {
            let (end, peak) = closure_profile(&[amp], total_duration, d);
            if peak == 0.0 {
                0.0
            } else {
                end.norm() / peak
            }
        })
        .collect();
    Ok(PulseShape {
        n_segments: 1,
        segment_amplitudes: vec![amp],
        total_duration,
        mu,
        ions,
        target_chi,
        achieved_chi: segmented_chi(&[amp], total_duration, &detunings, &couplings) * if flipped { -1.0 } else { 1.0 },
        closure_residuals: residuals,
        second_ion_phase_flipped: flipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn small_chains_analytic() {
        assert_eq!(equilibrium_positions(1).unwrap(), vec![0.0]);
        let two = equilibrium_positions(2).unwrap();
        let x = 0.25f64.cbrt();
        assert!((two[0] + x).abs() < 1e-12 && (two[1] - x).abs() < 1e-12);
        let three = equilibrium_positions(3).unwrap();
        let x = 1.25f64.cbrt();
        assert!((three[0] + x).abs() < 1e-12 && three[1].abs() < 1e-12 && (three[2] - x).abs() < 1e-12);
        assert!(equilibrium_positions(0).is_err());
    }

    /// Potential `Σ u²/2 + Σ_{m<n} 1/|u_m − u_n|` minimised by plain gradient
    /// descent, independent of the Newton solver.
    fn brute_force_positions(n: usize) -> Vec<f64> {
        let mut u: Vec<f64> = (0..n).map(|m| m as f64 - (n as f64 - 1.0) / 2.0).collect();
        for _ in 0..200_000 {
            let g = coulomb_force(&u);
            for (x, gx) in u.iter_mut().zip(&g) {
                *x -= 0.01 * gx;
            }
        }
        u
    }

    #[test]
    fn positions_match_potential_minimum() {
        for n in [4, 5, 8] {
            let newton = equilibrium_positions(n).unwrap();
            let brute = brute_force_positions(n);
            for (a, b) in newton.iter().zip(&brute) {
                assert!((a - b).abs() < 1e-8, "n={n}");
            }
            assert!(coulomb_force(&newton).iter().all(|f| f.abs() < 1e-12));
            for m in 0..n {
                assert!((newton[m] + newton[n - 1 - m]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn eight_ion_spacing() {
        let chain = IonChain::processor_default();
        let gap = chain.min_spacing().unwrap();
        assert!((gap - 7.3e-6).abs() / 7.3e-6 < 0.05, "gap {gap}");
    }

    #[test]
    fn two_ion_modes() {
        let chain = IonChain::ytterbium(2, 3.7e6, 3.8e6, 0.116e6).unwrap();
        let z = normal_modes(&chain, Axis::Z).unwrap();
        assert!((z.frequencies[0] - chain.omega_z).abs() / chain.omega_z < 1e-12);
        assert!((z.frequencies[1] / z.frequencies[0] - 3f64.sqrt()).abs() < 1e-9);
        let x = normal_modes(&chain, Axis::X).unwrap();
        assert!((x.frequencies[0] - chain.omega_x).abs() / chain.omega_x < 1e-12);
        let rocking = (chain.omega_x.powi(2) - chain.omega_z.powi(2)).sqrt();
        assert!((x.frequencies[1] - rocking).abs() / rocking < 1e-12);
    }

    /// Finite-difference Hessian of the dimensionless potential.
    fn numeric_axial_hessian(u: &[f64]) -> DMatrix<f64> {
        let n = u.len();
        let h = 1e-5;
        DMatrix::from_fn(n, n, |i, j| {
            let mut up = u.to_vec();
            let mut down = u.to_vec();
            up[j] += h;
            down[j] -= h;
            (coulomb_force(&up)[i] - coulomb_force(&down)[i]) / (2.0 * h)
        })
    }

    #[test]
    fn modes_are_orthonormal_and_match_numeric_hessian() {
        let chain = IonChain::processor_default();
        for axis in [Axis::X, Axis::Y, Axis::Z] {
            let m = normal_modes(&chain, axis).unwrap();
            let gram = m.eigenvectors.transpose() * &m.eigenvectors;
            assert!((gram - DMatrix::identity(8, 8)).abs().max() < 1e-10);
            // Non-COM modes carry no net displacement.
            for k in 1..8 {
                assert!(m.eigenvectors.column(k).sum().abs() < 1e-10);
            }
            let com = if axis == Axis::Z { chain.omega_z } else if axis == Axis::X { chain.omega_x } else { chain.omega_y };
            assert!((m.frequencies[0] - com).abs() / com < 1e-12);
        }
        let u = equilibrium_positions(8).unwrap();
        let numeric = numeric_axial_hessian(&u);
        assert!((numeric - axial_hessian(&u)).abs().max() < 1e-6);
    }

    #[test]
    fn zigzag_instability() {
        let chain = IonChain::ytterbium(8, 0.3e6, 0.3e6, 0.116e6).unwrap();
        assert!(matches!(normal_modes(&chain, Axis::X), Err(Error::Unstable { .. })));
    }

    #[test]
    fn single_mode_three_segments() {
        let delta = 2.0 * PI * 25e3;
        let tau = 200e-6;
        let v = closure_null_vector(&[delta], tau, 3).unwrap();
        let (end, peak) = closure_profile(&v, tau, delta);
        assert!(end.norm() < 1e-10 * peak);
        let q = Quadrature { amplitudes: &v, duration: tau };
        let (end, peak) = q.alpha(delta);
        assert!(end.norm() < 1e-10 * peak);
    }

    #[test]
    fn degenerate_null_space() {
        // Two constraints on two segments leave no solution; five segments
        // against one mode leave three.
        assert!(matches!(closure_null_vector(&[1e5], 1e-4, 2), Err(Error::Degenerate(0))));
        assert!(matches!(closure_null_vector(&[1e5], 1e-4, 5), Err(Error::Degenerate(3))));
    }

    #[test]
    fn segmented_chi_matches_quadrature() {
        let amps = [1.0e5, -2.0e5, 0.5e5, 3.0e5];
        let tau = 100e-6;
        for delta in [2.0 * PI * 3e3, 2.0 * PI * 40e3, -2.0 * PI * 17e3] {
            let closed = segmented_chi(&amps, tau, &[delta], &[1.0]);
            let q = Quadrature { amplitudes: &amps, duration: tau };
            let numeric = -2.0 * q.double_integral(delta);
            assert!((closed - numeric).abs() < 1e-9 * closed.abs().max(1.0), "{closed} vs {numeric}");
        }
    }

    #[test]
    fn eight_ion_pulse() {
        let chain = IonChain::processor_default();
        let modes = normal_modes(&chain, Axis::X).unwrap();
        let shape = solve_pulse_shape(&chain, (0, 1), 800e-6, default_mu(&modes), FRAC_PI_4, &PulseOptions::default()).unwrap();
        assert_eq!(shape.n_segments, 17);
        assert!(shape.closure_residuals.iter().all(|&r| r < 1e-8));
        assert!((shape.achieved_chi - FRAC_PI_4).abs() < 1e-9);
        let report = verify_trajectories(&shape, &chain, &[0.0]).unwrap();
        assert_eq!(report.residuals.len(), 8);
        for (solver, verifier) in shape.closure_residuals.iter().zip(&report.residuals) {
            assert!(*verifier < 1e-8, "verifier residual {verifier}");
            assert!(*verifier <= 10.0 * solver.max(1e-12));
        }
        assert!((report.achieved_chi - FRAC_PI_4).abs() < 1e-6);
        assert!(report.chi_slope.is_finite());
    }

    #[test]
    fn scaling_laws_and_zero_target() {
        let chain = IonChain::ytterbium(3, 3.7e6, 3.8e6, 0.116e6).unwrap();
        let modes = normal_modes(&chain, Axis::X).unwrap();
        let mu = default_mu(&modes);
        let shape = solve_pulse_shape(&chain, (0, 2), 400e-6, mu, 0.3, &PulseOptions::default()).unwrap();
        let doubled = PulseShape {
            segment_amplitudes: shape.segment_amplitudes.iter().map(|a| 2.0 * a).collect(),
            ..shape.clone()
        };
        let r1 = verify_trajectories(&shape, &chain, &[]).unwrap();
        let r2 = verify_trajectories(&doubled, &chain, &[]).unwrap();
        assert!((r2.achieved_chi / r1.achieved_chi - 4.0).abs() < 1e-9);
        for (a, b) in r1.end_displacements.iter().zip(&r2.end_displacements) {
            assert!((b - 2.0 * a).abs() <= 1e-9 * b.abs().max(1e-12));
        }
        let zero = solve_pulse_shape(&chain, (0, 2), 400e-6, mu, 0.0, &PulseOptions::default()).unwrap();
        assert!(zero.segment_amplitudes.iter().all(|&a| a == 0.0));
        let r0 = verify_trajectories(&zero, &chain, &[]).unwrap();
        assert_eq!(r0.achieved_chi, 0.0);
        assert!(r0.residuals.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn negative_target_flips_second_ion() {
        let chain = IonChain::ytterbium(2, 3.7e6, 3.8e6, 0.116e6).unwrap();
        let modes = normal_modes(&chain, Axis::X).unwrap();
        let mu = default_mu(&modes);
        let pos = solve_pulse_shape(&chain, (0, 1), 300e-6, mu, 0.5, &PulseOptions::default()).unwrap();
        let neg = solve_pulse_shape(&chain, (0, 1), 300e-6, mu, -0.5, &PulseOptions::default()).unwrap();
        assert_ne!(pos.second_ion_phase_flipped, neg.second_ion_phase_flipped);
        assert!((neg.achieved_chi + 0.5).abs() < 1e-9);
        let r = verify_trajectories(&neg, &chain, &[]).unwrap();
        assert!((r.achieved_chi + 0.5).abs() < 1e-6);
    }

    #[test]
    fn power_cap_and_bad_inputs() {
        let chain = IonChain::processor_default();
        let modes = normal_modes(&chain, Axis::X).unwrap();
        let tiny = PulseOptions {
            power_cap: 1.0,
            ..PulseOptions::default()
        };
        assert!(matches!(
            solve_pulse_shape(&chain, (0, 1), 800e-6, default_mu(&modes), FRAC_PI_4, &tiny),
            Err(Error::Power { .. })
        ));
        assert!(solve_pulse_shape(&chain, (0, 0), 800e-6, 1e7, FRAC_PI_4, &PulseOptions::default()).is_err());
        assert!(solve_pulse_shape(&chain, (0, 9), 800e-6, 1e7, FRAC_PI_4, &PulseOptions::default()).is_err());
        assert!(IonChain::ytterbium(3, 0.1e6, 3.8e6, 0.116e6).is_err());
    }

    #[test]
    fn square_pulse_closes_com_only() {
        let chain = IonChain::processor_default();
        let sq = square_pulse(&chain, (0, 1), 800e-6, FRAC_PI_4).unwrap();
        assert!(sq.closure_residuals[0] < 1e-9);
        assert!(sq.closure_residuals[1..].iter().any(|&r| r > 1e-3));
        assert!((sq.achieved_chi - FRAC_PI_4).abs() < 1e-9);
    }
}
