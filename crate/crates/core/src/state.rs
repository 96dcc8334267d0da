//! Dense state vector of an `n`-ion register with `d` levels per ion.
//!
//! Basis ordering: ion 0 is the most significant digit of the basis index, so
//! the label `(l_0, l_1, …, l_{n-1})` sits at index `Σ l_k · d^{n-1-k}`. For
//! two-ion matrices the first ion (`ion_a`) is the high digit of the `d²`
//! block.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::{Unitary, C64};

/// Levels per ion used throughout this crate.
pub const QUQUART: usize = 4;

/// Default upper bound on the number of stored amplitudes (2^24, 256 MiB).
pub const DEFAULT_AMPLITUDE_BUDGET: usize = 1 << 24;

/// Per-ion level digits of one computational basis state.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BasisLabel(pub Vec<usize>);

impl BasisLabel {
    pub fn from_index(mut index: usize, n: usize, d: usize) -> Self {
        let mut digits = vec![0; n];
        for k in (0..n).rev() {
            digits[k] = index % d;
            index /= d;
        }
        BasisLabel(digits)
    }

    pub fn index(&self, d: usize) -> usize {
        self.0.iter().fold(0, |acc, &digit| acc * d + digit)
    }

    pub fn digits(&self) -> &[usize] {
        &self.0
    }

    /// Checks `len == n` and every digit `< d`.
    pub fn validate(&self, n: usize, d: usize) -> Result<()> {
        if self.0.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "label has {} digits, register has {n} ions",
                self.0.len()
            )));
        }
        if let Some(&bad) = self.0.iter().find(|&&digit| digit >= d) {
            return Err(Error::Level {
                level: bad,
                context: "basis label digit",
            });
        }
        Ok(())
    }
}

impl fmt::Display for BasisLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for digit in &self.0 {
            write!(f, "{digit}")?;
        }
        Ok(())
    }
}

/// Counts keyed by measured label, ordered for deterministic output.
pub type Histogram = BTreeMap<BasisLabel, usize>;

#[derive(Debug, Clone, PartialEq)]
pub struct QuditRegister {
    n: usize,
    d: usize,
    amplitudes: Vec<C64>,
}

impl QuditRegister {
    /// All ions in level 0.
    pub fn new(n: usize, d: usize) -> Result<Self> {
        Self::with_budget(n, d, DEFAULT_AMPLITUDE_BUDGET)
    }

    pub fn with_budget(n: usize, d: usize, budget: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("register needs at least one ion".into()));
        }
        if d < 2 {
            return Err(Error::InvalidParameter(format!("need at least 2 levels, got {d}")));
        }
        let amplitudes = (d as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
        if amplitudes > budget as u128 {
            return Err(Error::Capacity {
                n,
                d,
                amplitudes,
                budget,
            });
        }
        let mut amps = vec![C64::new(0.0, 0.0); amplitudes as usize];
        amps[0] = C64::new(1.0, 0.0);
        Ok(QuditRegister {
            n,
            d,
            amplitudes: amps,
        })
    }

    /// Register prepared in a computational basis state.
    pub fn from_label(label: &BasisLabel, d: usize) -> Result<Self> {
        let mut reg = Self::new(label.0.len(), d)?;
        label.validate(reg.n, d)?;
        reg.amplitudes[0] = C64::new(0.0, 0.0);
        reg.amplitudes[label.index(d)] = C64::new(1.0, 0.0);
        Ok(reg)
    }

    /// Register from raw amplitudes; the vector is normalised.
    pub fn from_amplitudes(n: usize, d: usize, amplitudes: Vec<C64>) -> Result<Self> {
        let expected = d.pow(n as u32);
        if amplitudes.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "expected {expected} amplitudes, got {}",
                amplitudes.len()
            )));
        }
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::InvalidParameter("zero state vector".into()));
        }
        Ok(QuditRegister {
            n,
            d,
            amplitudes: amplitudes.into_iter().map(|a| a / norm).collect(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub(crate) fn renormalize(&mut self) {
        let norm = self.norm();
        for a in &mut self.amplitudes {
            *a /= norm;
        }
    }

    fn check_ion(&self, ion: usize) -> Result<()> {
        if ion >= self.n {
            Err(Error::IonIndex { index: ion, n: self.n })
        } else {
            Ok(())
        }
    }

    fn stride(&self, ion: usize) -> usize {
        self.d.pow((self.n - 1 - ion) as u32)
    }

    /// Applies `u` (d×d) to one ion.
    pub fn apply_single(&mut self, ion: usize, u: &Unitary) -> Result<()> {
        self.check_ion(ion)?;
        let d = self.d;
        if u.dim() != d {
            return Err(Error::Shape {
                rows: u.dim(),
                cols: u.dim(),
                expected: d,
            });
        }
        let m = u.matrix();
        let stride = self.stride(ion);
        let block = stride * d;
        let mut buf = vec![C64::new(0.0, 0.0); d];
        for outer in (0..self.amplitudes.len()).step_by(block) {
            for inner in 0..stride {
                let base = outer + inner;
                for (k, slot) in buf.iter_mut().enumerate() {
                    *slot = self.amplitudes[base + k * stride];
                }
                for r in 0..d {
                    let mut acc = C64::new(0.0, 0.0);
                    for (k, value) in buf.iter().enumerate() {
                        acc += m[(r, k)] * value;
                    }
                    self.amplitudes[base + r * stride] = acc;
                }
            }
        }
        Ok(())
    }

    /// Applies `u` (d²×d²) to the ordered pair `(ion_a, ion_b)`; `ion_a` is
    /// the high digit of the two-ion block.
    pub fn apply_pair(&mut self, ion_a: usize, ion_b: usize, u: &Unitary) -> Result<()> {
        self.check_ion(ion_a)?;
        self.check_ion(ion_b)?;
        if ion_a == ion_b {
            return Err(Error::EqualIndices(ion_a));
        }
        let d = self.d;
        if u.dim() != d * d {
            return Err(Error::Shape {
                rows: u.dim(),
                cols: u.dim(),
                expected: d * d,
            });
        }
        let m = u.matrix();
        let sa = self.stride(ion_a);
        let sb = self.stride(ion_b);
        let dd = d * d;
        let mut buf = vec![C64::new(0.0, 0.0); dd];
        let mut offsets = vec![0usize; dd];
        for la in 0..d {
            for lb in 0..d {
                offsets[la * d + lb] = la * sa + lb * sb;
            }
        }
        for base in 0..self.amplitudes.len() {
            let digit_a = (base / sa) % d;
            let digit_b = (base / sb) % d;
            if digit_a != 0 || digit_b != 0 {
                continue;
            }
            for (slot, off) in buf.iter_mut().zip(&offsets) {
                *slot = self.amplitudes[base + off];
            }
            for r in 0..dd {
                let mut acc = C64::new(0.0, 0.0);
                for (k, value) in buf.iter().enumerate() {
                    acc += m[(r, k)] * value;
                }
                self.amplitudes[base + offsets[r]] = acc;
            }
        }
        Ok(())
    }

    /// Applies a diagonal phase `phases[level]` to one ion.
    pub(crate) fn apply_diagonal(&mut self, ion: usize, phases: &[C64]) {
        let stride = self.stride(ion);
        let d = self.d;
        for (index, amp) in self.amplitudes.iter_mut().enumerate() {
            *amp *= phases[(index / stride) % d];
        }
    }

    /// Probability of each basis state.
    pub fn populations(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Marginal level populations of one ion.
    pub fn ion_populations(&self, ion: usize) -> Result<Vec<f64>> {
        self.check_ion(ion)?;
        let stride = self.stride(ion);
        let mut out = vec![0.0; self.d];
        for (index, amp) in self.amplitudes.iter().enumerate() {
            out[(index / stride) % self.d] += amp.norm_sqr();
        }
        Ok(out)
    }

    /// Draws `shots` labels from the populations with a seeded generator.
    pub fn sample(&self, shots: usize, seed: u64) -> Result<Histogram> {
        if shots == 0 {
            return Err(Error::InvalidParameter("shots must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut hist = Histogram::new();
        for _ in 0..shots {
            let index = self.sample_index(&mut rng);
            *hist
                .entry(BasisLabel::from_index(index, self.n, self.d))
                .or_insert(0) += 1;
        }
        Ok(hist)
    }

    /// One basis-state index drawn from the populations.
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let total: f64 = self.amplitudes.iter().map(|a| a.norm_sqr()).sum();
        let target = u * total;
        let mut acc = 0.0;
        let mut last_nonzero = 0;
        for (index, amp) in self.amplitudes.iter().enumerate() {
            let p = amp.norm_sqr();
            if p > 0.0 {
                last_nonzero = index;
            }
            acc += p;
            if target < acc {
                return index;
            }
        }
        last_nonzero
    }

    /// `⟨self|other⟩`.
    pub fn overlap(&self, other: &QuditRegister) -> Result<C64> {
        if self.n != other.n || self.d != other.d {
            return Err(Error::ShapeMismatch(format!(
                "({}, {}) vs ({}, {})",
                self.n, self.d, other.n, other.d
            )));
        }
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{c, kron, CMatrix};
    use proptest::prelude::{prop_assert, proptest, ProptestConfig};
    use rand::Rng;

    fn random_unitary(dim: usize, seed: u64) -> Unitary {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = CMatrix::zeros(dim, dim);
        for v in m.iter_mut() {
            *v = c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
        }
        let q = m.qr().q();
        Unitary::new(q).unwrap()
    }

    fn random_state(n: usize, seed: u64) -> QuditRegister {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let amps = (0..4usize.pow(n as u32))
            .map(|_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        QuditRegister::from_amplitudes(n, 4, amps).unwrap()
    }

    /// Full d^n × d^n operator for `u` acting on `ion`, built by Kronecker products.
    fn dense_single(n: usize, ion: usize, u: &CMatrix) -> CMatrix {
        let mut full = CMatrix::identity(1, 1);
        for k in 0..n {
            let factor = if k == ion { u.clone() } else { CMatrix::identity(4, 4) };
            full = kron(&full, &factor);
        }
        full
    }

    /// Dense two-ion operator by explicit index mapping.
    fn dense_pair(n: usize, a: usize, b: usize, u: &CMatrix) -> CMatrix {
        let dim = 4usize.pow(n as u32);
        let mut full = CMatrix::zeros(dim, dim);
        for col in 0..dim {
            let lc = BasisLabel::from_index(col, n, 4);
            for row in 0..dim {
                let lr = BasisLabel::from_index(row, n, 4);
                let others_equal =
                    (0..n).filter(|&k| k != a && k != b).all(|k| lr.0[k] == lc.0[k]);
                if others_equal {
                    full[(row, col)] = u[(lr.0[a] * 4 + lr.0[b], lc.0[a] * 4 + lc.0[b])];
                }
            }
        }
        full
    }

    fn as_vector(reg: &QuditRegister) -> nalgebra::DVector<C64> {
        nalgebra::DVector::from_column_slice(reg.amplitudes())
    }

    #[test]
    fn new_register_is_all_zero() {
        let r = QuditRegister::new(1, 4).unwrap();
        assert_eq!(r.amplitudes(), &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let r = QuditRegister::new(2, 4).unwrap();
        assert_eq!(r.amplitudes().len(), 16);
        assert_eq!(r.amplitudes()[0], c(1.0, 0.0));
        let r = QuditRegister::new(8, 4).unwrap();
        assert_eq!(r.amplitudes().len(), 65536);
        assert!((r.norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn capacity_error() {
        assert!(matches!(
            QuditRegister::with_budget(9, 4, 65536),
            Err(Error::Capacity { .. })
        ));
        assert!(matches!(QuditRegister::new(40, 4), Err(Error::Capacity { .. })));
        assert!(QuditRegister::new(0, 4).is_err());
        assert!(QuditRegister::new(2, 1).is_err());
    }

    #[test]
    fn identity_and_permutation() {
        let mut r = random_state(2, 3);
        let before = r.clone();
        r.apply_single(1, &Unitary::identity(4)).unwrap();
        assert_eq!(r, before);

        let mut swap01 = CMatrix::identity(4, 4);
        swap01[(0, 0)] = c(0.0, 0.0);
        swap01[(1, 1)] = c(0.0, 0.0);
        swap01[(0, 1)] = c(1.0, 0.0);
        swap01[(1, 0)] = c(1.0, 0.0);
        let mut r = QuditRegister::new(1, 4).unwrap();
        r.apply_single(0, &Unitary::new(swap01).unwrap()).unwrap();
        assert_eq!(r.populations(), vec![0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn pair_swap_exchanges_digits() {
        let mut swap = CMatrix::zeros(16, 16);
        for a in 0..4 {
            for b in 0..4 {
                swap[(b * 4 + a, a * 4 + b)] = c(1.0, 0.0);
            }
        }
        let swap = Unitary::new(swap).unwrap();
        let mut r = QuditRegister::from_label(&BasisLabel(vec![0, 1, 3]), 4).unwrap();
        r.apply_pair(0, 1, &swap).unwrap();
        let expected = BasisLabel(vec![1, 0, 3]).index(4);
        assert!((r.populations()[expected] - 1.0).abs() < 1e-15);

        let before = r.clone();
        r.apply_pair(2, 0, &Unitary::identity(16)).unwrap();
        assert_eq!(r, before);
    }

    #[test]
    fn index_errors() {
        let mut r = QuditRegister::new(2, 4).unwrap();
        let u = Unitary::identity(4);
        assert!(matches!(r.apply_single(2, &u), Err(Error::IonIndex { .. })));
        let u2 = Unitary::identity(16);
        assert!(matches!(r.apply_pair(1, 1, &u2), Err(Error::EqualIndices(1))));
        assert!(matches!(r.apply_pair(0, 5, &u2), Err(Error::IonIndex { .. })));
        assert!(matches!(r.apply_single(0, &u2), Err(Error::Shape { .. })));
    }

    #[test]
    fn single_matches_dense_oracle() {
        for n in 1..=3 {
            for ion in 0..n {
                let u = random_unitary(4, 100 + (n * 10 + ion) as u64);
                let mut r = random_state(n, 7 + ion as u64);
                let expected = dense_single(n, ion, u.matrix()) * as_vector(&r);
                r.apply_single(ion, &u).unwrap();
                assert!((as_vector(&r) - expected).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn pair_matches_dense_oracle() {
        let n = 3;
        for (a, b) in [(0, 1), (1, 0), (0, 2), (2, 0), (1, 2), (2, 1)] {
            let u = random_unitary(16, (a * 3 + b) as u64);
            let mut r = random_state(n, 11);
            let expected = dense_pair(n, a, b, u.matrix()) * as_vector(&r);
            r.apply_pair(a, b, &u).unwrap();
            assert!((as_vector(&r) - expected).norm() < 1e-10, "pair ({a},{b})");
        }
    }

    #[test]
    fn populations_and_overlap() {
        let r = QuditRegister::new(2, 4).unwrap();
        assert_eq!(r.populations()[0], 1.0);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let plus = QuditRegister::from_amplitudes(
            1,
            4,
            vec![c(s, 0.0), c(s, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
        )
        .unwrap();
        let p = plus.populations();
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
        assert!((plus.overlap(&plus).unwrap() - c(1.0, 0.0)).norm() < 1e-15);
        let a = QuditRegister::from_label(&BasisLabel(vec![0, 1]), 4).unwrap();
        let b = QuditRegister::from_label(&BasisLabel(vec![1, 0]), 4).unwrap();
        assert_eq!(a.overlap(&b).unwrap(), c(0.0, 0.0));
        assert!(a.overlap(&plus).is_err());
    }

    #[test]
    fn sampling() {
        let r = QuditRegister::new(3, 4).unwrap();
        let h = r.sample(100, 1).unwrap();
        assert_eq!(h.len(), 1);
        assert_eq!(h[&BasisLabel(vec![0, 0, 0])], 100);
        assert!(r.sample(0, 1).is_err());

        let s = std::f64::consts::FRAC_1_SQRT_2;
        let plus = QuditRegister::from_amplitudes(
            1,
            4,
            vec![c(s, 0.0), c(s, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
        )
        .unwrap();
        let shots = 10_000;
        let h = plus.sample(shots, 42).unwrap();
        let sigma = (shots as f64 * 0.25).sqrt();
        for level in 0..2 {
            let count = h[&BasisLabel(vec![level])] as f64;
            assert!((count - 5000.0).abs() < 5.0 * sigma);
        }
        assert_eq!(h, plus.sample(shots, 42).unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn norm_is_preserved(seeds in proptest::collection::vec(0u64..1000, 1..12)) {
            let mut r = QuditRegister::new(3, 4).unwrap();
            for (step, seed) in seeds.iter().enumerate() {
                if seed % 2 == 0 {
                    r.apply_single((*seed as usize) % 3, &random_unitary(4, *seed)).unwrap();
                } else {
                    let a = (*seed as usize) % 3;
                    r.apply_pair(a, (a + 1) % 3, &random_unitary(16, *seed)).unwrap();
                }
                prop_assert!((r.norm() - 1.0).abs() < 1e-10 * (step + 1) as f64);
            }
        }

        #[test]
        fn disjoint_single_ion_ops_commute(s1 in 0u64..500, s2 in 500u64..1000, k in 0usize..3, dm in 1usize..3) {
            let m = (k + dm) % 3;
            let u = random_unitary(4, s1);
            let v = random_unitary(4, s2);
            let start = random_state(3, s1 ^ s2);
            let mut a = start.clone();
            a.apply_single(k, &u).unwrap();
            a.apply_single(m, &v).unwrap();
            let mut b = start;
            b.apply_single(m, &v).unwrap();
            b.apply_single(k, &u).unwrap();
            for (x, y) in a.amplitudes().iter().zip(b.amplitudes()) {
                prop_assert!((x - y).norm() < 1e-12);
            }
        }
    }
}
