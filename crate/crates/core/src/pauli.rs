//! Pauli strings with a unit phase, weighted sums of them, and the
//! Hamiltonian text format.

use std::fmt;

use crate::error::{Error, Result};
use crate::matrix::{c, kron, CMatrix, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn from_char(ch: char) -> Option<Self> {
        match ch.to_ascii_uppercase() {
            'I' => Some(Pauli::I),
            'X' => Some(Pauli::X),
            'Y' => Some(Pauli::Y),
            'Z' => Some(Pauli::Z),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }

    pub fn matrix(self) -> CMatrix {
        let (o, l, i) = (c(0.0, 0.0), c(1.0, 0.0), c(0.0, 1.0));
        let entries = match self {
            Pauli::I => [l, o, o, l],
            Pauli::X => [o, l, l, o],
            Pauli::Y => [o, -i, i, o],
            Pauli::Z => [l, o, o, -l],
        };
        CMatrix::from_row_slice(2, 2, &entries)
    }

    /// `a·b = i^k · letter`.
    fn mul(a: Pauli, b: Pauli) -> (u8, Pauli) {
        use Pauli::*;
        match (a, b) {
            (I, p) | (p, I) => (0, p),
            (p, q) if p == q => (0, I),
            (X, Y) => (1, Z),
            (Y, Z) => (1, X),
            (Z, X) => (1, Y),
            (Y, X) => (3, Z),
            (Z, Y) => (3, X),
            (X, Z) => (3, Y),
            _ => unreachable!("all pairs covered"),
        }
    }
}

/// `i^phase · ⊗ letters`, qubit 0 first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PauliString {
    /// Power of `i`, in `0..4`.
    pub phase: u8,
    pub letters: Vec<Pauli>,
}

impl PauliString {
    pub fn new(letters: Vec<Pauli>) -> Self {
        PauliString { phase: 0, letters }
    }

    pub fn identity(n: usize) -> Self {
        Self::new(vec![Pauli::I; n])
    }

    pub fn parse(word: &str) -> Option<Self> {
        word.chars().map(Pauli::from_char).collect::<Option<Vec<_>>>().map(Self::new)
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn phase_factor(&self) -> C64 {
        match self.phase % 4 {
            0 => c(1.0, 0.0),
            1 => c(0.0, 1.0),
            2 => c(-1.0, 0.0),
            _ => c(0.0, -1.0),
        }
    }

    /// The same word with phase `+1`.
    pub fn stripped(&self) -> Self {
        Self::new(self.letters.clone())
    }

    pub fn word(&self) -> String {
        self.letters.iter().map(|p| p.as_char()).collect()
    }

    /// True when the word has only `I` and `Z` letters.
    pub fn is_diagonal(&self) -> bool {
        self.letters.iter().all(|p| matches!(p, Pauli::I | Pauli::Z))
    }

    /// `⟨x|P|x⟩` for a computational basis state given as bits.
    pub fn basis_expectation(&self, bits: &[u8]) -> C64 {
        if !self.is_diagonal() {
            return c(0.0, 0.0);
        }
        let flips = self
            .letters
            .iter()
            .zip(bits)
            .filter(|(p, &b)| **p == Pauli::Z && b == 1)
            .count();
        self.phase_factor() * if flips % 2 == 0 { 1.0 } else { -1.0 }
    }

    /// Dense `2^n × 2^n` matrix, qubit 0 most significant.
    pub fn to_dense(&self) -> CMatrix {
        let m = self
            .letters
            .iter()
            .fold(CMatrix::identity(1, 1), |acc, p| kron(&acc, &p.matrix()));
        m * self.phase_factor()
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = ["", "i·", "-", "-i·"][usize::from(self.phase % 4)];
        write!(f, "{prefix}{}", self.word())
    }
}

/// Letterwise product with the accumulated unit phase.
pub fn pauli_mul(p: &PauliString, q: &PauliString) -> Result<PauliString> {
    if p.len() != q.len() {
        return Err(Error::PauliLength(p.len(), q.len()));
    }
    let mut phase = p.phase + q.phase;
    let letters = p
        .letters
        .iter()
        .zip(&q.letters)
        .map(|(&a, &b)| {
            let (k, r) = Pauli::mul(a, b);
            phase += k;
            r
        })
        .collect();
    Ok(PauliString { phase: phase % 4, letters })
}

/// `Σ β_i U_i` with distinct phase-free words.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliSum {
    pub n_qubits: usize,
    pub terms: Vec<(C64, PauliString)>,
}

impl PauliSum {
    /// Folds phases into coefficients, merges repeated words keeping first
    /// appearance order and drops zero coefficients.
    pub fn new(n_qubits: usize, terms: Vec<(C64, PauliString)>) -> Result<Self> {
        let mut merged: Vec<(C64, PauliString)> = Vec::new();
        for (beta, word) in terms {
            if word.len() != n_qubits {
                return Err(Error::PauliLength(n_qubits, word.len()));
            }
            let beta = beta * word.phase_factor();
            let word = word.stripped();
            match merged.iter_mut().find(|(_, w)| *w == word) {
                Some((b, _)) => *b += beta,
                None => merged.push((beta, word)),
            }
        }
        merged.retain(|(b, _)| b.norm() > 0.0);
        Ok(PauliSum { n_qubits, terms: merged })
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.terms.iter().all(|(b, _)| b.im.abs() <= tol)
    }

    pub fn to_dense(&self) -> CMatrix {
        let dim = 1usize << self.n_qubits;
        self.terms
            .iter()
            .fold(CMatrix::zeros(dim, dim), |acc, (b, w)| acc + w.to_dense() * *b)
    }

    /// Smallest eigenvalue of the dense Hermitian part.
    pub fn exact_ground_energy(&self) -> f64 {
        let h = self.to_dense();
        let herm = (&h + h.adjoint()) * c(0.5, 0.0);
        herm.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Hamiltonian file contents.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianFile {
    pub hamiltonian: PauliSum,
    /// Bits from an optional `init <bits>` line.
    pub initial: Option<Vec<u8>>,
}

fn parse_error(path: &str, line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        line,
        column,
        message: message.into(),
    }
}

/// Parses `1.5`, `-2e-3`, `0.5i`, `1-2i`, `(0.3+0.1i)`.
pub fn parse_complex(token: &str) -> Option<C64> {
    let t = token.trim().trim_start_matches('(').trim_end_matches(')');
    if t.is_empty() {
        return None;
    }
    if let Some(body) = t.strip_suffix(['i', 'j']) {
        // Split at the last sign that is not an exponent sign or the leading one.
        let bytes = body.as_bytes();
        let split = (1..bytes.len())
            .rev()
            .find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
        let (re, im) = match split {
            Some(k) => (body[..k].parse::<f64>().ok()?, &body[k..]),
            None => (0.0, body),
        };
        let im = match im {
            "" | "+" => 1.0,
            "-" => -1.0,
            s => s.parse::<f64>().ok()?,
        };
        return (re.is_finite() && im.is_finite()).then(|| c(re, im));
    }
    t.parse::<f64>().ok().filter(|v| v.is_finite()).map(|v| c(v, 0.0))
}

/// Bits of a label such as `01`.
pub fn parse_bits(s: &str) -> Option<Vec<u8>> {
    s.chars()
        .map(|ch| match ch {
            '0' => Some(0),
            '1' => Some(1),
            _ => None,
        })
        .collect()
}

/// One `<coefficient> <word>` per line; `#` starts a comment; an optional
/// `init <bits>` line names the initial state.
pub fn parse_hamiltonian(text: &str, path: &str) -> Result<HamiltonianFile> {
    let mut terms = Vec::new();
    let mut n_qubits: Option<usize> = None;
    let mut initial = None;
    for (index, raw) in text.lines().enumerate() {
        let line_no = index + 1;
        let content = raw.split('#').next().unwrap_or("");
        let mut tokens = Vec::new();
        let mut rest = content;
        let mut offset = 0;
        while let Some(start) = rest.find(|ch: char| !ch.is_whitespace()) {
            let end = rest[start..].find(char::is_whitespace).map_or(rest.len(), |e| start + e);
            tokens.push((offset + start + 1, &rest[start..end]));
            offset += end;
            rest = &rest[end..];
        }
        match tokens.as_slice() {
            [] => continue,
            [(_, "init"), (col, bits)] => {
                let b = parse_bits(bits).ok_or_else(|| parse_error(path, line_no, *col, format!("initial state '{bits}' must be a bit string")))?;
                initial = Some(b);
            }
            [(ccol, coef), (wcol, word)] => {
                let beta = parse_complex(coef).ok_or_else(|| parse_error(path, line_no, *ccol, format!("bad coefficient '{coef}'")))?;
                let p = PauliString::parse(word).ok_or_else(|| parse_error(path, line_no, *wcol, format!("bad Pauli word '{word}' (letters IXYZ)")))?;
                if p.is_empty() {
                    return Err(parse_error(path, line_no, *wcol, "empty Pauli word"));
                }
                match n_qubits {
                    None => n_qubits = Some(p.len()),
                    Some(n) if n != p.len() => {
                        return Err(parse_error(path, line_no, *wcol, format!("word has {} letters, earlier terms have {n}", p.len())));
                    }
                    _ => {}
                }
                terms.push((beta, p));
            }
            [(col, _), ..] => {
                return Err(parse_error(path, line_no, *col, "expected '<coefficient> <pauli word>' or 'init <bits>'"));
            }
        }
    }
    let n = n_qubits.ok_or_else(|| parse_error(path, 1, 1, "no Hamiltonian terms"))?;
    if let Some(bits) = &initial {
        if bits.len() != n {
            return Err(parse_error(path, 1, 1, format!("initial state has {} bits, Hamiltonian has {n} qubits", bits.len())));
        }
    }
    Ok(HamiltonianFile {
        hamiltonian: PauliSum::new(n, terms)?,
        initial,
    })
}
