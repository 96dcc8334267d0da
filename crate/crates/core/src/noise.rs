//! Calibrated noise: trajectory unravelling of decay and dephasing, addressing
//! cross-talk, three-stage shelving readout and SPAM confusion.
//!
//! Decay takes every upper level straight to `|0⟩`. Dephasing combines white
//! laser phase noise with a shot-to-shot static magnetic detuning of the
//! field-sensitive levels; together with decay, the `|0⟩⟨k|` coherence reaches
//! `1/e` at the configured `T2` of that transition.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gates::{apply_native, r_phi_matrix, GateTiming, NativeOp};
use crate::matrix::{c, cis};
use crate::state::{BasisLabel, Histogram, QuditRegister, QUQUART};
use crate::transpile::NativeCircuit;

/// Row = prepared level, column = detected level.
pub type Confusion = [[f64; 4]; 4];

/// Per-ion detected levels of one shot.
pub type ShotOutcome = BasisLabel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseParams {
    /// Lifetime of levels 1–3, s.
    pub t1: f64,
    /// Coherence time of the `0↔1` transition, s.
    pub t2_01: f64,
    /// Coherence time of the magnetically sensitive `0↔2`, `0↔3` transitions, s.
    pub t2_mag: f64,
    /// Rabi frequency on each neighbour relative to the addressed ion.
    pub crosstalk_ratio: f64,
    /// Duration of a `π` rotation, s.
    pub pi_pulse_duration: f64,
    pub ms_duration: f64,
    pub readout_stage_duration: f64,
    /// Explicit readout confusion. When set, readout is ideal projection
    /// followed by resampling with this matrix instead of staged shelving.
    pub spam_confusion: Option<Confusion>,
}

pub fn default_noise_params() -> NoiseParams {
    NoiseParams {
        t1: 53e-3,
        t2_01: 16e-3,
        t2_mag: 1e-3,
        crosstalk_ratio: 0.04,
        pi_pulse_duration: 20e-6,
        ms_duration: 800e-6,
        readout_stage_duration: 1e-3,
        spam_confusion: None,
    }
}

impl Default for NoiseParams {
    fn default() -> Self {
        default_noise_params()
    }
}

impl NoiseParams {
    /// Infinite lifetimes and coherence, no cross-talk, perfect readout.
    pub fn noiseless() -> Self {
        NoiseParams {
            t1: f64::INFINITY,
            t2_01: f64::INFINITY,
            t2_mag: f64::INFINITY,
            crosstalk_ratio: 0.0,
            ..default_noise_params()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let times = [
            ("t1", self.t1),
            ("t2_01", self.t2_01),
            ("t2_mag", self.t2_mag),
            ("pi_pulse_duration", self.pi_pulse_duration),
            ("ms_duration", self.ms_duration),
            ("readout_stage_duration", self.readout_stage_duration),
        ];
        for (name, t) in times {
            if t.is_nan() || t <= 0.0 {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {t}")));
            }
        }
        if !(0.0..1.0).contains(&self.crosstalk_ratio) {
            return Err(Error::InvalidParameter(format!(
                "crosstalk_ratio must lie in [0, 1), got {}",
                self.crosstalk_ratio
            )));
        }
        if let Some(m) = &self.spam_confusion {
            validate_confusion(m)?;
        }
        Ok(())
    }

    pub fn timing(&self) -> GateTiming {
        GateTiming {
            pi_pulse: self.pi_pulse_duration,
            ms: self.ms_duration,
        }
    }

    /// True when every channel reduces to the identity.
    pub fn is_noiseless(&self) -> bool {
        self.t1.is_infinite()
            && self.t2_01.is_infinite()
            && self.t2_mag.is_infinite()
            && self.crosstalk_ratio == 0.0
            && self.spam_confusion.as_ref().is_none_or(is_identity)
    }

    /// Explicit confusion if configured, otherwise the staged-decay model.
    pub fn confusion(&self) -> Confusion {
        self.spam_confusion.unwrap_or_else(|| spam_from_decay(self))
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let params: NoiseParams = toml::from_str(text).map_err(|e| {
            let (line, column) = e
                .span()
                .map(|s| line_column(text, s.start))
                .unwrap_or((0, 0));
            Error::Parse {
                path: String::new(),
                line,
                column,
                message: e.message().to_string(),
            }
        })?;
        params.validate()?;
        Ok(params)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("noise parameters serialise")
    }

    /// White phase-noise rate on top of the decay contribution, chosen so
    /// the `0↔1` coherence falls to `1/e` at `t2_01`.
    pub fn laser_dephasing_rate(&self) -> f64 {
        (1.0 / self.t2_01 - 0.5 / self.t1).max(0.0)
    }

    /// Spread of the static detuning of levels 2 and 3, rad/s, chosen so the
    /// `0↔2` and `0↔3` coherences fall to `1/e` at `t2_mag`.
    pub fn magnetic_detuning_sigma(&self) -> f64 {
        if !self.t2_mag.is_finite() || self.t2_mag >= self.t2_01 {
            return 0.0;
        }
        (2.0 * (1.0 - self.t2_mag / self.t2_01)).sqrt() / self.t2_mag
    }
}

pub(crate) fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

fn is_identity(m: &Confusion) -> bool {
    (0..4).all(|r| (0..4).all(|col| m[r][col] == if r == col { 1.0 } else { 0.0 }))
}

pub fn validate_confusion(m: &Confusion) -> Result<()> {
    for (r, row) in m.iter().enumerate() {
        if row.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::NotStochastic(format!("row {r} has an entry outside [0, 1]")));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::NotStochastic(format!("row {r} sums to {sum}")));
        }
    }
    Ok(())
}

fn stride(reg: &QuditRegister, ion: usize) -> usize {
    reg.d().pow((reg.n() - 1 - ion) as u32)
}

fn digit(index: usize, stride: usize, d: usize) -> usize {
    (index / stride) % d
}

/// Exact Kraus unravelling of decay `k → 0` on one ion over `duration`.
fn amplitude_damping<R: Rng + ?Sized>(reg: &mut QuditRegister, ion: usize, duration: f64, t1: f64, rng: &mut R) {
    if !t1.is_finite() || duration <= 0.0 {
        return;
    }
    let keep = (-duration / (2.0 * t1)).exp();
    let pops = reg.ion_populations(ion).expect("ion index checked by caller");
    let excited: f64 = pops[1..].iter().sum();
    let jump = (1.0 - keep * keep) * excited;
    let (d, s) = (reg.d(), stride(reg, ion));
    let amps = reg.amplitudes_mut();
    if rng.random::<f64>() < jump {
        let mut pick = rng.random::<f64>() * excited;
        let mut from = d - 1;
        for (level, &p) in pops.iter().enumerate().skip(1) {
            if pick < p {
                from = level;
                break;
            }
            pick -= p;
        }
        for index in 0..amps.len() {
            if digit(index, s, d) == 0 {
                amps[index] = amps[index + from * s];
            } else {
                amps[index] = c(0.0, 0.0);
            }
        }
    } else {
        for (index, a) in amps.iter_mut().enumerate() {
            if digit(index, s, d) != 0 {
                *a *= keep;
            }
        }
    }
    reg.renormalize();
}

/// One noisy realisation: the register plus the magnetic-field offset drawn
/// for this shot.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub reg: QuditRegister,
    /// Static detuning of levels 2 (`+`) and 3 (`−`), rad/s.
    pub magnetic_detuning: f64,
}

impl Trajectory {
    pub fn new<R: Rng + ?Sized>(reg: QuditRegister, params: &NoiseParams, rng: &mut R) -> Self {
        let z: f64 = StandardNormal.sample(rng);
        Trajectory {
            reg,
            magnetic_detuning: z * params.magnetic_detuning_sigma(),
        }
    }
}

/// Decay and dephasing of every ion for `duration` seconds.
///
/// Laser phase noise is white and shared by all upper levels of an ion.
/// Levels 2 and 3 also pick up the trajectory's static Zeeman detuning with
/// opposite signs, giving Gaussian (inhomogeneous) decay of their coherence.
pub fn apply_decoherence<R: Rng + ?Sized>(traj: &mut Trajectory, duration: f64, params: &NoiseParams, rng: &mut R) {
    if duration <= 0.0 {
        return;
    }
    let reg = &mut traj.reg;
    let laser = params.laser_dephasing_rate();
    let zeeman = traj.magnetic_detuning * duration;
    for ion in 0..reg.n() {
        amplitude_damping(reg, ion, duration, params.t1, rng);
        let common = if laser > 0.0 {
            let z: f64 = StandardNormal.sample(rng);
            z * (2.0 * laser * duration).sqrt()
        } else {
            0.0
        };
        if common != 0.0 || zeeman != 0.0 {
            let phases = [c(1.0, 0.0), cis(common), cis(common + zeeman), cis(common - zeeman)];
            reg.apply_diagonal(ion, &phases[..reg.d()]);
        }
    }
}

/// The op followed by weaker copies on the nearest neighbours of each
/// addressed ion. Only partial rotations spill over; MS drives and virtual
/// phases come back unchanged.
pub fn inject_crosstalk(op: &NativeOp, n_ions: usize, ratio: f64) -> Vec<NativeOp> {
    let mut ops = vec![op.clone()];
    if ratio == 0.0 {
        return ops;
    }
    if let NativeOp::PartialRotation {
        ion,
        level,
        theta,
        phi,
        foreign_beam,
        ..
    } = *op
    {
        let neighbours = [ion.checked_sub(1), Some(ion + 1).filter(|&j| j < n_ions)];
        for spectator in neighbours.into_iter().flatten() {
            ops.push(NativeOp::PartialRotation {
                ion: spectator,
                level,
                theta: theta * ratio,
                phi,
                duration: 0.0,
                foreign_beam,
            });
        }
    }
    ops
}

/// Projects `ion` onto `|0⟩` (bright) or its complement; returns brightness.
fn detect_bright<R: Rng + ?Sized>(reg: &mut QuditRegister, ion: usize, rng: &mut R) -> bool {
    let p0 = reg.ion_populations(ion).expect("ion index in range")[0];
    let bright = rng.random::<f64>() < p0;
    let (d, s) = (reg.d(), stride(reg, ion));
    for (index, a) in reg.amplitudes_mut().iter_mut().enumerate() {
        if (digit(index, s, d) == 0) != bright {
            *a = c(0.0, 0.0);
        }
    }
    reg.renormalize();
    bright
}

/// Three detection stages. An ion first seen bright in stage `s` reads
/// `s − 1`; dark in all stages reads 3. Before stages 2 and 3 the still-dark
/// ions receive `R_x^{01}(π)` and `R_x^{02}(π)`; transfer pulses are ideal.
pub fn shelving_readout<R: Rng + ?Sized>(reg: &mut QuditRegister, params: &NoiseParams, rng: &mut R) -> ShotOutcome {
    let n = reg.n();
    let mut labels = vec![reg.d() - 1; n];
    let mut done = vec![false; n];
    for stage in 0..3 {
        if stage > 0 {
            let transfer = r_phi_matrix(stage, std::f64::consts::PI, 0.0).expect("level 1 or 2");
            for ion in (0..n).filter(|&i| !done[i]) {
                reg.apply_single(ion, &transfer).expect("ion index in range");
            }
        }
        for ion in (0..n).filter(|&i| !done[i]) {
            amplitude_damping(reg, ion, params.readout_stage_duration, params.t1, rng);
        }
        for ion in 0..n {
            if !done[ion] && detect_bright(reg, ion, rng) {
                labels[ion] = stage;
                done[ion] = true;
            }
        }
    }
    BasisLabel(labels)
}

/// Confusion matrix implied by staged readout with decay during each stage.
pub fn spam_from_decay(params: &NoiseParams) -> Confusion {
    let q = (-params.readout_stage_duration / params.t1).exp();
    [
        [1.0, 0.0, 0.0, 0.0],
        [1.0 - q, q, 0.0, 0.0],
        [1.0 - q, q * (1.0 - q), q * q, 0.0],
        [1.0 - q, q * (1.0 - q), q * q * (1.0 - q), q * q * q],
    ]
}

/// Independently resamples each ion's level from its confusion row.
pub fn apply_confusion<R: Rng + ?Sized>(outcome: &ShotOutcome, confusion: &Confusion, rng: &mut R) -> Result<ShotOutcome> {
    validate_confusion(confusion)?;
    let levels = outcome
        .digits()
        .iter()
        .map(|&level| {
            let row = &confusion[level.min(3)];
            let mut u = rng.random::<f64>();
            for (detected, &p) in row.iter().enumerate() {
                if u < p {
                    return detected;
                }
                u -= p;
            }
            row.iter().rposition(|&p| p > 0.0).unwrap_or(level)
        })
        .collect();
    Ok(BasisLabel(levels))
}

/// Rng of one shot: the master seed selects the key, the shot index the
/// stream, so results do not depend on scheduling.
pub fn shot_rng(seed: u64, shot: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(shot);
    rng
}

/// One noisy trajectory of `circuit` from the all-zero state.
pub fn run_trajectory<R: Rng + ?Sized>(circuit: &NativeCircuit, params: &NoiseParams, rng: &mut R) -> Result<Trajectory> {
    let mut traj = Trajectory::new(QuditRegister::new(circuit.n_ions, QUQUART)?, params, rng);
    for op in &circuit.ops {
        for applied in inject_crosstalk(op, circuit.n_ions, params.crosstalk_ratio) {
            apply_native(&mut traj.reg, &applied)?;
        }
        apply_decoherence(&mut traj, op.duration(), params, rng);
    }
    Ok(traj)
}

/// Measures a prepared register with the configured readout model.
pub fn measure<R: Rng + ?Sized>(reg: &mut QuditRegister, params: &NoiseParams, rng: &mut R) -> Result<ShotOutcome> {
    match &params.spam_confusion {
        Some(m) => {
            let index = reg.sample_index(rng);
            apply_confusion(&BasisLabel::from_index(index, reg.n(), reg.d()), m, rng)
        }
        None => Ok(shelving_readout(reg, params, rng)),
    }
}

/// Per-shot outcomes of `circuit`. With `None` or noiseless parameters the
/// state is evolved once and sampled exactly.
pub fn run_shots(circuit: &NativeCircuit, noise: Option<&NoiseParams>, shots: usize, seed: u64) -> Result<Vec<ShotOutcome>> {
    if shots == 0 {
        return Err(Error::InvalidParameter("shots must be positive".into()));
    }
    circuit.validate()?;
    match noise {
        Some(params) if !params.is_noiseless() => {
            params.validate()?;
            (0..shots as u64)
                .into_par_iter()
                .map(|shot| {
                    let mut rng = shot_rng(seed, shot);
                    let mut traj = run_trajectory(circuit, params, &mut rng)?;
                    measure(&mut traj.reg, params, &mut rng)
                })
                .collect()
        }
        _ => {
            let mut reg = QuditRegister::new(circuit.n_ions, QUQUART)?;
            for op in &circuit.ops {
                apply_native(&mut reg, op)?;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok((0..shots)
                .map(|_| BasisLabel::from_index(reg.sample_index(&mut rng), reg.n(), reg.d()))
                .collect())
        }
    }
}

pub fn histogram(outcomes: &[ShotOutcome]) -> Histogram {
    let mut h = Histogram::new();
    for o in outcomes {
        *h.entry(o.clone()).or_insert(0) += 1;
    }
    h
}

/// Exact detection probabilities of an ideal noiseless run, keyed by label.
pub fn exact_distribution(circuit: &NativeCircuit) -> Result<Vec<(BasisLabel, f64)>> {
    let mut reg = QuditRegister::new(circuit.n_ions, QUQUART)?;
    for op in &circuit.ops {
        apply_native(&mut reg, op)?;
    }
    Ok(reg
        .populations()
        .into_iter()
        .enumerate()
        .filter(|(_, p)| *p > 0.0)
        .map(|(i, p)| (BasisLabel::from_index(i, reg.n(), reg.d()), p))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::C64;
    use std::f64::consts::{FRAC_1_SQRT_2, LN_2, PI};

    fn register(amps: &[(usize, C64)], n: usize) -> QuditRegister {
        let mut v = vec![c(0.0, 0.0); 4usize.pow(n as u32)];
        for &(i, a) in amps {
            v[i] = a;
        }
        QuditRegister::from_amplitudes(n, 4, v).unwrap()
    }

    fn fresh(reg: QuditRegister, params: &NoiseParams) -> Trajectory {
        Trajectory::new(reg, params, &mut shot_rng(u64::MAX, 0))
    }

    #[test]
    fn defaults() {
        let p = default_noise_params();
        assert_eq!(p.t1, 53e-3);
        assert_eq!(p.ms_duration, 800e-6);
        assert_eq!(p.crosstalk_ratio, 0.04);
        assert!(p.validate().is_ok());
        assert!(!p.is_noiseless());
        assert!(NoiseParams::noiseless().is_noiseless());
    }

    #[test]
    fn toml_roundtrip_and_errors() {
        let p = default_noise_params();
        assert_eq!(NoiseParams::from_toml_str(&p.to_toml_string()).unwrap(), p);
        let partial = NoiseParams::from_toml_str("t1 = 0.1\n").unwrap();
        assert_eq!(partial.t1, 0.1);
        assert_eq!(partial.t2_01, 16e-3);
        let inf = NoiseParams::from_toml_str("t1 = inf\nt2_01 = inf\nt2_mag = inf\ncrosstalk_ratio = 0.0\n").unwrap();
        assert!(inf.is_noiseless());
        assert!(matches!(
            NoiseParams::from_toml_str("t1 = 0.1\nbogus = 1\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(NoiseParams::from_toml_str("t1 = -1.0").is_err());
        assert!(NoiseParams::from_toml_str("crosstalk_ratio = 1.5").is_err());
        let bad = "spam_confusion = [[0.5,0.0,0.0,0.0],[0,1,0,0],[0,0,1,0],[0,0,0,1]]";
        assert!(matches!(NoiseParams::from_toml_str(bad), Err(Error::NotStochastic(_))));
    }

    #[test]
    fn zero_duration_is_identity() {
        let reg = register(&[(0, c(FRAC_1_SQRT_2, 0.0)), (1, c(0.0, FRAC_1_SQRT_2))], 1);
        let params = default_noise_params();
        let mut traj = Trajectory::new(reg.clone(), &params, &mut shot_rng(1, 1));
        apply_decoherence(&mut traj, 0.0, &params, &mut shot_rng(1, 0));
        assert_eq!(traj.reg, reg);
    }

    #[test]
    fn decay_half_life() {
        let params = default_noise_params();
        let trials = 10_000;
        let survived = (0..trials)
            .filter(|&s| {
                let mut traj = fresh(register(&[(1, c(1.0, 0.0))], 1), &params);
                apply_decoherence(&mut traj, params.t1 * LN_2, &params, &mut shot_rng(3, s));
                traj.reg.populations()[1] > 0.5
            })
            .count();
        let p = survived as f64 / trials as f64;
        assert!((p - 0.5).abs() < 0.02, "P(1) = {p}");
    }

    #[test]
    fn decay_of_each_level_is_exponential() {
        let params = default_noise_params();
        let t = 20e-3;
        let trials = 10_000u64;
        for level in 1..4 {
            let kept = (0..trials)
                .filter(|&s| {
                    let mut traj = fresh(register(&[(level, c(1.0, 0.0))], 1), &params);
                    apply_decoherence(&mut traj, t, &params, &mut shot_rng(9, s));
                    traj.reg.populations()[level] > 0.5
                })
                .count() as f64
                / trials as f64;
            let expect = (-t / params.t1).exp();
            let sigma = (expect * (1.0 - expect) / trials as f64).sqrt();
            assert!((kept - expect).abs() < 3.0 * sigma + 1e-3, "level {level}: {kept} vs {expect}");
        }
    }

    fn mean_coherence(level: usize, t: f64, params: &NoiseParams, trials: u64) -> (f64, f64) {
        let samples: Vec<C64> = (0..trials)
            .map(|s| {
                let mut rng = shot_rng(17, s);
                let reg = register(&[(0, c(FRAC_1_SQRT_2, 0.0)), (level, c(FRAC_1_SQRT_2, 0.0))], 1);
                let mut traj = Trajectory::new(reg, params, &mut rng);
                apply_decoherence(&mut traj, t, params, &mut rng);
                let a = traj.reg.amplitudes();
                a[0] * a[level].conj()
            })
            .collect();
        let mean = samples.iter().sum::<C64>() / trials as f64;
        let var = samples.iter().map(|z| (z - mean).norm_sqr()).sum::<f64>() / (trials - 1) as f64;
        (mean.norm(), (var / trials as f64).sqrt())
    }

    #[test]
    fn coherence_decays_with_t2() {
        let params = default_noise_params();
        let (m, se) = mean_coherence(1, params.t2_01, &params, 10_000);
        let target = (-1.0f64).exp() / 2.0;
        assert!((m - target).abs() < 3.0 * se + 1e-3, "{m} vs {target} (se {se})");
        for level in [2, 3] {
            let (m, se) = mean_coherence(level, params.t2_mag, &params, 10_000);
            assert!((m - target).abs() < 3.0 * se + 1e-3, "level {level}: {m} vs {target}");
        }
    }

    #[test]
    fn standard_error_halves_with_four_times_trajectories() {
        // log-log slope of standard error vs trajectory count ≈ −1/2.
        let params = default_noise_params();
        let counts = [100u64, 400, 1600];
        let errors: Vec<f64> = counts
            .iter()
            .map(|&n| {
                let batches = 200;
                let estimates: Vec<f64> = (0..batches)
                    .map(|b| {
                        (0..n)
                            .filter(|&s| {
                                let mut traj = fresh(register(&[(1, c(1.0, 0.0))], 1), &params);
                                apply_decoherence(&mut traj, params.t1 * LN_2, &params, &mut shot_rng(100 + b, s));
                                traj.reg.populations()[1] > 0.5
                            })
                            .count() as f64
                            / n as f64
                    })
                    .collect();
                let mean = estimates.iter().sum::<f64>() / batches as f64;
                (estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (batches - 1) as f64).sqrt()
            })
            .collect();
        let xs: Vec<f64> = counts.iter().map(|&n| (n as f64).ln()).collect();
        let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
        let (mx, my) = (xs.iter().sum::<f64>() / 3.0, ys.iter().sum::<f64>() / 3.0);
        let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
            / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
        assert!((slope + 0.5).abs() < 0.15, "slope {slope}");
    }

    #[test]
    fn crosstalk_neighbours() {
        let timing = GateTiming::default();
        let op = NativeOp::rotation(3, 1, PI, 0.2, &timing);
        assert_eq!(inject_crosstalk(&op, 8, 0.0), vec![op.clone()]);
        let ops = inject_crosstalk(&op, 8, 0.04);
        assert_eq!(ops.len(), 3);
        for (spectator, expected_ion) in ops[1..].iter().zip([2, 4]) {
            let NativeOp::PartialRotation { ion, theta, phi, level, .. } = *spectator else { panic!() };
            assert_eq!(ion, expected_ion);
            assert!((theta - 0.04 * PI).abs() < 1e-15);
            assert_eq!((phi, level), (0.2, 1));
        }
        let edge = inject_crosstalk(&NativeOp::rotation(0, 2, 1.0, 0.0, &timing), 8, 0.04);
        assert_eq!(edge.len(), 2);
        assert!(matches!(edge[1], NativeOp::PartialRotation { ion: 1, .. }));
        let ms = NativeOp::ms(0, 1, 0.3, &timing);
        assert_eq!(inject_crosstalk(&ms, 8, 0.04), vec![ms]);
    }

    #[test]
    fn readout_ideal_levels() {
        let params = NoiseParams::noiseless();
        for level in 0..4 {
            let mut reg = QuditRegister::from_label(&BasisLabel(vec![level, 3 - level]), 4).unwrap();
            let out = shelving_readout(&mut reg, &params, &mut shot_rng(0, 0));
            assert_eq!(out, BasisLabel(vec![level, 3 - level]));
        }
    }

    #[test]
    fn readout_decay_of_level_one() {
        let params = default_noise_params();
        let shots = 10_000u64;
        let zeros = (0..shots)
            .filter(|&s| {
                let mut reg = QuditRegister::from_label(&BasisLabel(vec![1]), 4).unwrap();
                shelving_readout(&mut reg, &params, &mut shot_rng(21, s)).digits()[0] == 0
            })
            .count() as f64
            / shots as f64;
        let expect = 1.0 - (-1.0f64 / 53.0).exp();
        assert!((zeros - expect).abs() < 0.005, "{zeros} vs {expect}");
    }

    #[test]
    fn readout_matches_analytic_confusion() {
        let params = NoiseParams {
            t1: 5e-3,
            ..default_noise_params()
        };
        let m = spam_from_decay(&params);
        let shots = 20_000u64;
        for level in 0..4 {
            let mut counts = [0usize; 4];
            for s in 0..shots {
                let mut reg = QuditRegister::from_label(&BasisLabel(vec![level]), 4).unwrap();
                counts[shelving_readout(&mut reg, &params, &mut shot_rng(level as u64, s)).digits()[0]] += 1;
            }
            for (detected, &k) in counts.iter().enumerate() {
                let p = m[level][detected];
                let f = k as f64 / shots as f64;
                let sigma = (p * (1.0 - p) / shots as f64).sqrt();
                assert!((f - p).abs() <= 5.0 * sigma + 1e-4, "row {level} col {detected}: {f} vs {p}");
            }
        }
    }

    #[test]
    fn spam_model_structure() {
        let ideal = spam_from_decay(&NoiseParams::noiseless());
        for r in 0..4 {
            for col in 0..4 {
                assert_eq!(ideal[r][col], if r == col { 1.0 } else { 0.0 });
            }
        }
        let m = spam_from_decay(&default_noise_params());
        validate_confusion(&m).unwrap();
        assert_eq!((m[1][2], m[1][3]), (0.0, 0.0));
        let mean = (0..4).map(|i| m[i][i]).sum::<f64>() / 4.0;
        assert!((mean - 0.96).abs() <= 0.02, "mean diagonal {mean}");
    }

    #[test]
    fn confusion_resampling() {
        let id = spam_from_decay(&NoiseParams::noiseless());
        let o = BasisLabel(vec![0, 1, 2, 3]);
        assert_eq!(apply_confusion(&o, &id, &mut shot_rng(0, 0)).unwrap(), o);
        let mut m = id;
        m[0] = [0.0, 1.0, 0.0, 0.0];
        for s in 0..50 {
            assert_eq!(apply_confusion(&BasisLabel(vec![0]), &m, &mut shot_rng(1, s)).unwrap(), BasisLabel(vec![1]));
        }
        let uniform = [[0.25; 4]; 4];
        let shots = 10_000u64;
        let mut counts = [0usize; 4];
        for s in 0..shots {
            counts[apply_confusion(&BasisLabel(vec![2]), &uniform, &mut shot_rng(2, s)).unwrap().digits()[0]] += 1;
        }
        let sigma = (0.25 * 0.75 * shots as f64).sqrt();
        assert!(counts.iter().all(|&k| (k as f64 - 2500.0).abs() < 5.0 * sigma));
        let mut bad = id;
        bad[1][1] = 0.9;
        assert!(matches!(apply_confusion(&o, &bad, &mut shot_rng(0, 0)), Err(Error::NotStochastic(_))));
    }

    #[test]
    fn noiseless_parameters_reduce_to_exact_sampling() {
        let timing = GateTiming::default();
        let circuit = NativeCircuit::with_ops(
            2,
            vec![
                NativeOp::rotation(0, 1, 1.1, 0.3, &timing),
                NativeOp::ms(0, 1, 0.7, &timing),
                NativeOp::rotation(1, 2, 0.4, 0.0, &timing),
            ],
        );
        let a = run_shots(&circuit, None, 500, 42).unwrap();
        let b = run_shots(&circuit, Some(&NoiseParams::noiseless()), 500, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noisy_runs_are_deterministic_and_thread_independent() {
        let timing = GateTiming::default();
        let circuit = NativeCircuit::with_ops(
            2,
            vec![NativeOp::rotation(0, 1, PI / 2.0, 0.0, &timing), NativeOp::ms(0, 1, 0.785, &timing)],
        );
        let params = default_noise_params();
        let a = run_shots(&circuit, Some(&params), 300, 7).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| run_shots(&circuit, Some(&params), 300, 7).unwrap());
        assert_eq!(a, b);
        assert_ne!(a, run_shots(&circuit, Some(&params), 300, 8).unwrap());
    }

    #[test]
    fn explicit_confusion_path() {
        let params = NoiseParams {
            spam_confusion: Some([[0.0, 1.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]]),
            ..NoiseParams::noiseless()
        };
        let circuit = NativeCircuit::new(1);
        let out = run_shots(&circuit, Some(&params), 10, 1).unwrap();
        assert!(out.iter().all(|o| o.digits() == [1]));
    }
}
