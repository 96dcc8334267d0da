use std::f64::consts::PI;

use ququart::bench::{
    bv_run, grover_run, parity_benchmark, phi_grid, rb_run, with_stderr, AlgoRegime, RbConfig, RbNoise, Sampling,
};
use ququart::chain::{
    default_mu, normal_modes, robustness_offsets, solve_pulse_shape, square_pulse, verify_trajectories, Axis, ChainConfig,
    IonChain, PulseOptions,
};
use ququart::formats::{parse_angle, parse_chain_config, parse_circuit, read_file, Circuit};
use ququart::iqae::{iqae_ground_energy, krylov_basis, overlaps, solve_gen_eig, Backend, InitialState};
use ququart::noise::{histogram, run_shots, NoiseParams};
use ququart::pauli::{parse_bits, parse_hamiltonian};
use ququart::transpile::{transpile, Regime, TranspileOptions};
use ququart::{Error, Result};

use crate::report::Report;
use crate::{AlgoCommand, BackendArg, BenchCommand, ChainCommand, Cli, Command, IqaeCommand, RegimeArg, TrapArgs};

pub const CALIBRATION_ENV: &str = "QUQUART_CALIBRATION";

struct Context {
    seed: u64,
    shots: Option<usize>,
    noise_source: String,
    noise: Option<NoiseParams>,
}

impl Context {
    fn shots(&self, default: usize) -> Result<usize> {
        let shots = self.shots.unwrap_or(default);
        if shots == 0 {
            return Err(Error::InvalidParameter("--shots must be positive".into()));
        }
        Ok(shots)
    }

    fn header(&self, report: &mut Report, command: &str, shots: Option<usize>) {
        report.set("command", command).set("seed", self.seed);
        match shots {
            Some(s) => report.set("shots", s),
            None => report.set("shots", "unused"),
        };
        report.noise(&self.noise_source, self.noise.as_ref());
    }
}

fn resolve_noise(flag: Option<&str>) -> Result<(String, Option<NoiseParams>)> {
    let env = std::env::var(CALIBRATION_ENV).ok().filter(|s| !s.is_empty());
    let choice = flag.map(str::to_string).or(env).unwrap_or_else(|| "default".into());
    match choice.as_str() {
        "off" => Ok(("off".into(), None)),
        "default" => Ok(("default".into(), Some(NoiseParams::default()))),
        path => {
            let text = read_file(path)?;
            let params = NoiseParams::from_toml_str(&text).map_err(|e| match e {
                Error::Parse { line, column, message, .. } => Error::Parse {
                    path: path.to_string(),
                    line,
                    column,
                    message,
                },
                other => other,
            })?;
            Ok((path.to_string(), Some(params)))
        }
    }
}

fn regime_name(r: RegimeArg) -> &'static str {
    match r {
        RegimeArg::Qubit => "qubit",
        RegimeArg::Ququart => "ququart",
    }
}

fn parse_pair(s: &str, what: &str) -> Result<(usize, usize)> {
    let parsed = s
        .split_once(',')
        .and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)));
    parsed.ok_or_else(|| Error::InvalidParameter(format!("{what} must be 'a,b', got '{s}'")))
}

fn angle(s: &str, what: &str) -> Result<f64> {
    parse_angle(s).ok_or_else(|| Error::InvalidParameter(format!("{what} must be a finite angle, got '{s}'")))
}

fn label(digits: &[usize]) -> String {
    digits.iter().map(|d| d.to_string()).collect()
}

fn bits_string(bits: &[u8]) -> String {
    bits.iter().map(|b| b.to_string()).collect()
}

fn emit(cli: &Cli, report: &Report, summary: &str) -> Result<()> {
    match &cli.out {
        Some(path) => {
            std::fs::write(path, report.render()).map_err(|e| Error::Io {
                path: path.clone(),
                message: e.to_string(),
            })?;
            println!("{summary}");
            println!("report = {path}");
        }
        None => print!("{}", report.render()),
    }
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<()> {
    let (noise_source, noise) = resolve_noise(cli.noise.as_deref())?;
    let ctx = Context {
        seed: cli.seed,
        shots: cli.shots,
        noise_source,
        noise,
    };
    let mut report = Report::new();
    let summary = match &cli.command {
        Command::Run(args) => run(&ctx, args, &mut report)?,
        Command::Bench(BenchCommand::Rb(args)) => bench_rb(&ctx, args, &mut report)?,
        Command::Bench(BenchCommand::Parity(args)) => bench_parity(&ctx, args, &mut report)?,
        Command::Algo(AlgoCommand::Bv(args)) => algo_bv(&ctx, args, &mut report)?,
        Command::Algo(AlgoCommand::Grover(args)) => algo_grover(&ctx, args, &mut report)?,
        Command::Chain(ChainCommand::Modes(args)) => chain_modes(&ctx, args, &mut report)?,
        Command::Chain(ChainCommand::PulseShape(args)) => chain_pulse(&ctx, args, &mut report)?,
        Command::Iqae(IqaeCommand::Solve(args)) => iqae_solve(&ctx, args, &mut report)?,
    };
    emit(cli, &report, &summary)
}

fn run(ctx: &Context, args: &crate::RunArgs, report: &mut Report) -> Result<String> {
    let shots = ctx.shots(1024)?;
    ctx.header(report, "run", Some(shots));
    let timing = ctx.noise.as_ref().map(NoiseParams::timing).unwrap_or_default();
    let text = read_file(&args.circuit)?;
    let circuit = parse_circuit(&text, &args.circuit, &timing)?;
    report.set("circuit", &args.circuit);
    let (native, qubits) = match circuit {
        Circuit::Native(c) => {
            report.set("circuit.kind", "native");
            (c, None)
        }
        Circuit::Qubit(c) => {
            let regime = match args.regime {
                RegimeArg::Qubit => Regime::Qubit,
                RegimeArg::Ququart => Regime::ququart_consecutive(c.n_qubits),
            };
            report.set("circuit.kind", "qubit").set("regime", regime_name(args.regime));
            let options = TranspileOptions { timing, groups: None };
            let native = transpile(&c, &regime, &options)?;
            (native, Some((regime, c.n_qubits)))
        }
    };
    report
        .set("ions", native.n_ions)
        .set("native_ops", native.ops.len())
        .set("ms_gates", native.ms_count())
        .set("duration_s", native.duration());
    let outcomes = run_shots(&native, ctx.noise.as_ref(), shots, ctx.seed)?;
    let hist = histogram(&outcomes);
    for (l, count) in &hist {
        report.set(format!("count.{}", label(l.digits())), count);
    }
    let mut top = String::new();
    if let Some((regime, n)) = qubits {
        let mut bits = std::collections::BTreeMap::new();
        for (l, count) in &hist {
            *bits.entry(bits_string(&regime.decode(l.digits(), n))).or_insert(0usize) += count;
        }
        for (b, count) in &bits {
            report.set(format!("bits.{b}"), count);
        }
        if let Some((b, c)) = bits.iter().max_by_key(|(_, c)| **c) {
            top = format!("most frequent bits {b} ({c}/{shots})");
        }
    } else if let Some((l, c)) = hist.iter().max_by_key(|(_, c)| **c) {
        top = format!("most frequent levels {} ({c}/{shots})", label(l.digits()));
    }
    Ok(top)
}

fn sampling(ctx: &Context, exact: bool, default_shots: usize, report: &mut Report, command: &str) -> Result<Sampling> {
    if exact {
        ctx.header(report, command, None);
        report.set("sampling", "exact");
        Ok(Sampling::Exact { noise: ctx.noise.clone() })
    } else {
        let shots = ctx.shots(default_shots)?;
        ctx.header(report, command, Some(shots));
        report.set("sampling", "shots");
        Ok(Sampling::Shots {
            shots,
            seed: ctx.seed,
            noise: ctx.noise.clone(),
        })
    }
}

fn bench_rb(ctx: &Context, args: &crate::RbArgs, report: &mut Report) -> Result<String> {
    let shots = ctx.shots(300)?;
    ctx.header(report, "bench rb", Some(shots));
    if args.step == 0 || args.max_length < args.step {
        return Err(Error::InvalidParameter("need 0 < --step <= --max-length".into()));
    }
    let noise = match (args.epsilon, &ctx.noise) {
        (Some(e), _) => {
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::InvalidParameter(format!("--epsilon must lie in [0, 1], got {e}")));
            }
            report.set("rb.noise", "depolarizing").set("rb.epsilon", e);
            RbNoise::Depolarizing { epsilon: e }
        }
        (None, Some(p)) => {
            report.set("rb.noise", "calibrated");
            RbNoise::Calibrated(p.clone())
        }
        (None, None) => {
            report.set("rb.noise", "none");
            RbNoise::None
        }
    };
    let config = RbConfig {
        ion: 0,
        level: args.level,
        lengths: (1..=args.max_length / args.step).map(|k| k * args.step).collect(),
        samples: args.samples,
        shots,
        seed: ctx.seed,
        noise,
    };
    let result = rb_run(&config)?;
    report
        .set("rb.level", config.level)
        .set("rb.samples", config.samples)
        .list("rb.lengths", &result.lengths)
        .list("rb.survival", &result.survival)
        .list("rb.survival_stderr", &result.survival_stderr);
    let summary = match (&result.fit, result.fidelity) {
        (Some(fit), Some(f)) => {
            let se = result.fidelity_stderr.unwrap_or(f64::NAN);
            report
                .set("fit.a", fit.a)
                .set("fit.b", fit.b)
                .set("fit.p", fit.p)
                .list("fit.stderr_abp", &fit.stderr)
                .set("fit.degenerate", fit.degenerate)
                .set("fidelity", f)
                .set("fidelity_stderr", se);
            format!("fidelity = {f:.5} ± {se:.5}")
        }
        _ => {
            let why = result.fit_error.clone().unwrap_or_else(|| "fit failed".into());
            report.set("fit.error", &why);
            format!("fit failed: {why}")
        }
    };
    Ok(summary)
}

fn bench_parity(ctx: &Context, args: &crate::ParityArgs, report: &mut Report) -> Result<String> {
    let sampling = sampling(ctx, args.exact, 4096, report, "bench parity")?;
    let ions = parse_pair(&args.ions, "--ions")?;
    let chi = angle(&args.chi, "--chi")?;
    let phis = phi_grid(args.points);
    let r = parity_benchmark(ions, chi, &phis, &sampling)?;
    report
        .set("parity.ions", format!("{},{}", ions.0, ions.1))
        .set("parity.chi", chi)
        .list("parity.phi", &r.phis)
        .list("parity.value", &r.parity)
        .list("parity.fit_cos_sin_offset", &r.coefficients)
        .set("population_a", r.a)
        .set("contrast_b", r.b)
        .set("fidelity", r.fidelity);
    Ok(format!("A = {:.4}, B = {:.4}, F = {:.4}", r.a, r.b, r.fidelity))
}

fn algo_bv(ctx: &Context, args: &crate::BvArgs, report: &mut Report) -> Result<String> {
    let sampling = sampling(ctx, args.exact, 10_000, report, "algo bv")?;
    let secrets: Vec<Vec<u8>> = if args.secret == "all" {
        vec![vec![0], vec![1]]
    } else {
        vec![parse_bits(&args.secret).ok_or_else(|| Error::InvalidParameter(format!("--secret must be a bit string, got '{}'", args.secret)))?]
    };
    let regime = match args.regime {
        RegimeArg::Qubit => AlgoRegime::Qubit,
        RegimeArg::Ququart => AlgoRegime::Ququart,
    };
    report.set("regime", regime_name(args.regime));
    let mut total = 0.0;
    for (k, s) in secrets.iter().enumerate() {
        let per = match &sampling {
            Sampling::Shots { shots, seed, noise } => Sampling::Shots {
                shots: *shots,
                seed: seed.wrapping_add(k as u64),
                noise: noise.clone(),
            },
            exact => exact.clone(),
        };
        let p = bv_run(s, regime, &per)?;
        report.set(format!("success.{}", bits_string(s)), p);
        total += p;
    }
    let mean = total / secrets.len() as f64;
    report.set("success.mean", mean);
    if let Sampling::Shots { shots, .. } = sampling {
        let (_, se) = with_stderr(mean, shots * secrets.len());
        report.set("success.mean_stderr", se);
    }
    Ok(format!("mean success = {mean:.4}"))
}

fn algo_grover(ctx: &Context, args: &crate::GroverArgs, report: &mut Report) -> Result<String> {
    let sampling = sampling(ctx, args.exact, 10_000, report, "algo grover")?;
    let secrets: Vec<u8> = if args.secret == "all" {
        (0..4).collect()
    } else {
        vec![args
            .secret
            .parse::<u8>()
            .ok()
            .filter(|s| *s < 4)
            .ok_or_else(|| Error::InvalidParameter(format!("--secret must be 0..3 or all, got '{}'", args.secret)))?]
    };
    let mut total = 0.0;
    for &s in &secrets {
        let per = match &sampling {
            Sampling::Shots { shots, seed, noise } => Sampling::Shots {
                shots: *shots,
                seed: seed.wrapping_add(u64::from(s)),
                noise: noise.clone(),
            },
            exact => exact.clone(),
        };
        let p = grover_run(s, &per)?;
        report.set(format!("success.{s:02b}"), p);
        total += p;
    }
    let mean = total / secrets.len() as f64;
    report.set("success.mean", mean);
    if let Sampling::Shots { shots, .. } = sampling {
        let (_, se) = with_stderr(mean, shots * secrets.len());
        report.set("success.mean_stderr", se);
    }
    Ok(format!("mean success = {mean:.4}"))
}

fn trap(args: &TrapArgs, report: &mut Report) -> Result<IonChain> {
    let mut config = match &args.config {
        Some(path) => parse_chain_config(&read_file(path)?, path)?,
        None => ChainConfig::default(),
    };
    if let Some(n) = args.n_ions {
        config.n_ions = n;
    }
    if let Some(f) = args.fx {
        config.fx_hz = f;
    }
    if let Some(f) = args.fy {
        config.fy_hz = f;
    }
    if let Some(f) = args.fz {
        config.fz_hz = f;
    }
    report
        .set("trap.config", args.config.as_deref().unwrap_or("default"))
        .set("trap.n_ions", config.n_ions)
        .set("trap.fx_hz", config.fx_hz)
        .set("trap.fy_hz", config.fy_hz)
        .set("trap.fz_hz", config.fz_hz)
        .set("trap.mass_number", config.mass_number)
        .set("trap.charge_number", config.charge_number);
    config.chain()
}

fn khz(omega: f64) -> f64 {
    omega / (2.0 * PI) / 1e3
}

fn chain_modes(ctx: &Context, args: &TrapArgs, report: &mut Report) -> Result<String> {
    ctx.header(report, "chain modes", None);
    let chain = trap(args, report)?;
    let positions: Vec<f64> = chain.positions()?.iter().map(|x| x * 1e6).collect();
    report.list("positions_um", &positions);
    let gap = if chain.n_ions > 1 { chain.min_spacing()? * 1e6 } else { f64::NAN };
    report.set("min_spacing_um", gap);
    let mut summary = String::new();
    for (axis, name) in [(Axis::X, "x"), (Axis::Y, "y"), (Axis::Z, "z")] {
        let modes = normal_modes(&chain, axis)?;
        let f: Vec<f64> = modes.frequencies.iter().map(|&w| khz(w)).collect();
        report.list(format!("modes.{name}.frequency_khz"), &f);
        for k in 0..chain.n_ions {
            let v: Vec<f64> = modes.eigenvectors.column(k).iter().cloned().collect();
            report.list(format!("modes.{name}.vector{k}"), &v);
        }
        if axis == Axis::X {
            let eta: Vec<f64> = modes.frequencies.iter().map(|&w| chain.lamb_dicke(w)).collect();
            report.list("modes.x.lamb_dicke", &eta);
        }
        if axis == Axis::Z {
            summary = format!("axial modes (kHz): {}", f.iter().map(|v| format!("{v:.2}")).collect::<Vec<_>>().join(", "));
        }
    }
    Ok(summary)
}

fn chain_pulse(ctx: &Context, args: &crate::PulseArgs, report: &mut Report) -> Result<String> {
    ctx.header(report, "chain pulse-shape", None);
    let chain = trap(&args.trap, report)?;
    let ions = parse_pair(&args.ions, "--ions")?;
    let chi = angle(&args.chi, "--chi")?;
    let modes = normal_modes(&chain, Axis::X)?;
    let tau = args.duration_us * 1e-6;
    let mu = default_mu(&modes) - 2.0 * PI * 10e3 + 2.0 * PI * args.detuning_khz * 1e3;
    let options = PulseOptions {
        n_segments: args.segments,
        power_cap: 2.0 * PI * args.power_cap_khz * 1e3,
    };
    report
        .set("pulse.ions", format!("{},{}", ions.0, ions.1))
        .set("pulse.target_chi", chi)
        .set("pulse.duration_us", args.duration_us)
        .set("pulse.detuning_khz", args.detuning_khz)
        .set("pulse.mu_khz", khz(mu))
        .set("pulse.power_cap_khz", args.power_cap_khz);
    let shape = solve_pulse_shape(&chain, ions, tau, mu, chi, &options)?;
    let offsets = robustness_offsets(args.robustness_points);
    let verify = verify_trajectories(&shape, &chain, &offsets)?;
    let amps: Vec<f64> = shape.segment_amplitudes.iter().map(|&a| khz(a)).collect();
    report
        .set("pulse.segments", shape.n_segments)
        .list("pulse.amplitude_khz", &amps)
        .set("pulse.second_ion_phase_flipped", shape.second_ion_phase_flipped)
        .list("pulse.solver_residuals", &shape.closure_residuals)
        .list("pulse.verified_residuals", &verify.residuals)
        .set("pulse.solver_chi", shape.achieved_chi)
        .set("pulse.verified_chi", verify.achieved_chi)
        .set("pulse.chi_slope_per_hz", verify.chi_slope * 2.0 * PI);
    let square = square_pulse(&chain, ions, tau, chi)?;
    let square_verify = verify_trajectories(&square, &chain, &offsets)?;
    report
        .set("square.amplitude_khz", khz(square.segment_amplitudes[0]))
        .set("square.mu_khz", khz(square.mu))
        .set("square.chi_slope_per_hz", square_verify.chi_slope * 2.0 * PI);
    let offset_hz: Vec<f64> = offsets.iter().map(|o| o / (2.0 * PI)).collect();
    report.list("robustness.offset_hz", &offset_hz);
    for (name, v) in [("shaped", &verify), ("square", &square_verify)] {
        let chis: Vec<f64> = v.robustness.iter().map(|p| p.achieved_chi).collect();
        let disp: Vec<f64> = v.robustness.iter().map(|p| p.residual_displacement).collect();
        report
            .list(format!("robustness.{name}.chi"), &chis)
            .list(format!("robustness.{name}.residual_displacement"), &disp);
    }
    let worst = verify.residuals.iter().cloned().fold(0.0, f64::max);
    Ok(format!(
        "{} segments, verified chi = {:.9}, worst residual = {worst:.2e}",
        shape.n_segments, verify.achieved_chi
    ))
}

fn iqae_solve(ctx: &Context, args: &crate::IqaeArgs, report: &mut Report) -> Result<String> {
    let shots = match args.backend {
        BackendArg::Exact => None,
        BackendArg::Sampled => Some(ctx.shots(10_000)?),
    };
    ctx.header(report, "iqae solve", shots);
    let file = parse_hamiltonian(&read_file(&args.hamiltonian)?, &args.hamiltonian)?;
    let h = file.hamiltonian;
    if !h.is_hermitian(1e-12) {
        return Err(Error::InvalidParameter("Hamiltonian coefficients must be real".into()));
    }
    let bits = match &args.init {
        Some(s) => parse_bits(s).ok_or_else(|| Error::InvalidParameter(format!("--init must be a bit string, got '{s}'")))?,
        None => file.initial.unwrap_or_else(|| vec![0; h.n_qubits]),
    };
    if bits.len() != h.n_qubits {
        return Err(Error::InvalidParameter(format!(
            "initial state has {} bits, Hamiltonian has {} qubits",
            bits.len(),
            h.n_qubits
        )));
    }
    let backend = match shots {
        None => Backend::Exact,
        Some(shots) => Backend::Sampled {
            shots,
            seed: ctx.seed,
            noise: ctx.noise.clone(),
        },
    };
    report
        .set("hamiltonian", &args.hamiltonian)
        .set("qubits", h.n_qubits)
        .set("terms", h.terms.len())
        .set("init", bits_string(&bits))
        .set("k", args.k)
        .set("backend", if shots.is_some() { "sampled" } else { "exact" })
        .set("eps_cut", args.eps_cut);
    let result = if args.eps_cut == ququart::iqae::DEFAULT_EPS_CUT {
        iqae_ground_energy(&h, InitialState::Basis(bits.clone()), args.k, &backend)?
    } else {
        let basis = krylov_basis(&h, InitialState::Basis(bits.clone()), args.k)?;
        let m = overlaps(&h, &basis, &backend)?;
        let solution = solve_gen_eig(&m, args.eps_cut)?;
        ququart::iqae::IqaeResult {
            energy: solution.lambda_min,
            basis,
            solution,
        }
    };
    let words: Vec<String> = result.basis.strings.iter().map(|s| s.word()).collect();
    report
        .set("basis.size", result.basis.len())
        .list("basis.words", &words)
        .set("basis.closed", result.basis.closed)
        .list("e_spectrum", &result.solution.e_spectrum)
        .set("e_kept", result.solution.kept)
        .set("energy", result.energy);
    if h.n_qubits <= 12 {
        report.set("exact_ground_energy", h.exact_ground_energy());
    }
    Ok(format!("energy = {:.10} (L = {}, closed = {})", result.energy, result.basis.len(), result.basis.closed))
}
