//! Qubit circuits lowered in either regime must reproduce the output
//! distribution of a plain 2ⁿ state-vector simulation.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ququart::bench::{detection_distribution, Sampling};
use ququart::formats::{parse_circuit, Circuit};
use ququart::gates::GateTiming;
use ququart::matrix::{c, CMatrix, C64};
use ququart::transpile::{transpile, u3_matrix, QubitCircuit, QubitOp, Regime, TranspileOptions};

fn apply_1q(psi: &mut [C64], n: usize, q: usize, u: &CMatrix) {
    let stride = 1 << (n - 1 - q);
    for i in 0..psi.len() {
        if i & stride == 0 {
            let (a, b) = (psi[i], psi[i | stride]);
            psi[i] = u[(0, 0)] * a + u[(0, 1)] * b;
            psi[i | stride] = u[(1, 0)] * a + u[(1, 1)] * b;
        }
    }
}

/// Reference simulator, qubit 0 most significant.
fn reference(circuit: &QubitCircuit) -> Vec<f64> {
    let n = circuit.n_qubits;
    let mut psi = vec![c(0.0, 0.0); 1 << n];
    psi[0] = c(1.0, 0.0);
    let bit = |q: usize| 1usize << (n - 1 - q);
    for op in &circuit.ops {
        match *op {
            QubitOp::U3 { qubit, theta, phi, lam } => apply_1q(&mut psi, n, qubit, &u3_matrix(theta, phi, lam)),
            QubitOp::Cx { control, target } => {
                for i in 0..psi.len() {
                    if i & bit(control) != 0 && i & bit(target) == 0 {
                        psi.swap(i, i | bit(target));
                    }
                }
            }
            QubitOp::Xx { a, b, chi } => {
                let flip = bit(a) | bit(b);
                let mut out = psi.clone();
                for (i, slot) in out.iter_mut().enumerate() {
                    *slot = psi[i] * chi.cos() + psi[i ^ flip] * c(0.0, -chi.sin());
                }
                psi = out;
            }
            QubitOp::Barrier => {}
        }
    }
    psi.iter().map(|a| a.norm_sqr()).collect()
}

fn lowered(circuit: &QubitCircuit, regime: &Regime) -> Vec<f64> {
    let native = transpile(circuit, regime, &TranspileOptions::default()).unwrap();
    let n = circuit.n_qubits;
    let mut probs = vec![0.0; 1 << n];
    for (label, p) in detection_distribution(&native, &Sampling::exact()).unwrap() {
        let bits = regime.decode(label.digits(), n);
        let index = bits.iter().fold(0usize, |acc, &b| 2 * acc + b as usize);
        probs[index] += p;
    }
    probs
}

/// With `paired`, two-qubit gates stay inside the pairs `(0,1), (2,3), …`.
fn random_circuit(rng: &mut ChaCha8Rng, n: usize, depth: usize, paired: bool) -> QubitCircuit {
    let partner = |rng: &mut ChaCha8Rng, a: usize| if paired { a ^ 1 } else { (a + rng.random_range(1..n)) % n };
    let mut circuit = QubitCircuit::new(n);
    for _ in 0..depth {
        match rng.random_range(0..3) {
            0 => {
                let q = rng.random_range(0..n);
                circuit.u3(q, rng.random_range(0.0..3.1), rng.random_range(-3.1..3.1), rng.random_range(-3.1..3.1));
            }
            1 => {
                let a = rng.random_range(0..n);
                let b = partner(rng, a);
                circuit.cx(a, b);
            }
            _ => {
                let a = rng.random_range(0..n);
                let b = partner(rng, a);
                circuit.ops.push(QubitOp::Xx { a, b, chi: rng.random_range(-1.5..1.5) });
            }
        }
    }
    circuit
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn both_regimes_match_reference_simulation() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for k in 0..30 {
        let circuit = random_circuit(&mut rng, 4, 12, k % 2 == 0);
        let expected = reference(&circuit);
        let qubit = lowered(&circuit, &Regime::Qubit);
        assert!(max_gap(&expected, &qubit) < 1e-9, "qubit regime {:?}", circuit.ops);
        if k % 2 == 0 {
            let ququart = lowered(&circuit, &Regime::ququart_consecutive(4));
            assert!(max_gap(&expected, &ququart) < 1e-9, "ququart regime {:?}", circuit.ops);
        }
    }
}

#[test]
fn ququart_regime_rejects_gates_across_ions() {
    let mut circuit = QubitCircuit::new(4);
    circuit.cx(1, 2);
    let err = transpile(&circuit, &Regime::ququart_consecutive(4), &TranspileOptions::default()).unwrap_err();
    assert_eq!(err.category(), "unsupported");
}

#[test]
fn parsed_file_runs_end_to_end() {
    let text = "qubits 2\nh q=0\ncx control=0 target=1\n";
    let Circuit::Qubit(circuit) = parse_circuit(text, "bell", &GateTiming::default()).unwrap() else {
        panic!("expected a qubit circuit");
    };
    let probs = lowered(&circuit, &Regime::ququart_consecutive(2));
    assert!((probs[0] - 0.5).abs() < 1e-12 && (probs[3] - 0.5).abs() < 1e-12);

    let shots = Sampling::Shots {
        shots: 2000,
        seed: 4,
        noise: None,
    };
    let native = transpile(&circuit, &Regime::Qubit, &TranspileOptions::default()).unwrap();
    let mut tally: BTreeMap<Vec<u8>, f64> = BTreeMap::new();
    for (label, p) in detection_distribution(&native, &shots).unwrap() {
        *tally.entry(Regime::Qubit.decode(label.digits(), 2)).or_default() += p;
    }
    assert_eq!(tally.keys().cloned().collect::<Vec<_>>(), vec![vec![0, 0], vec![1, 1]]);
    assert!((tally[&vec![0, 0]] - 0.5).abs() < 0.05);
}
