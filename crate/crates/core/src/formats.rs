//! Text formats: circuit files, trap files and file reading.
//!
//! A circuit file has one instruction per line, `#` comments, and an
//! optional `ions N` (native) or `qubits N` (qubit-level) header:
//!
//! ```text
//! ions 2
//! rphi ion=0 j=1 theta=pi/2 phi=0
//! rz ion=1 j=3 theta=0.4
//! ms ions=0,1 chi=pi/4
//! ```
//!
//! Qubit-level instructions are `u3 q= theta= phi= lam=`, `h q=`, `x q=`,
//! `z q=`, `ry q= theta=`, `cx control= target=`, `cz q=a,b`,
//! `xx q=a,b chi=` and `barrier`. Angles accept `pi` forms such as `-3pi/4`.

use std::collections::BTreeMap;

use crate::chain::ChainConfig;
use crate::error::{Error, Result};
use crate::gates::{GateTiming, NativeOp};
use crate::noise::line_column;
use crate::transpile::{NativeCircuit, QubitCircuit, QubitOp};

#[derive(Debug, Clone, PartialEq)]
pub enum Circuit {
    Native(NativeCircuit),
    Qubit(QubitCircuit),
}

pub fn read_file(path: &str) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_string(),
        message: e.to_string(),
    })
}

fn at(path: &str, line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        line,
        column,
        message: message.into(),
    }
}

/// `1.5`, `pi`, `-pi/2`, `3pi/4`, `3*pi/4`, `2.5e-1`.
pub fn parse_angle(s: &str) -> Option<f64> {
    if let Ok(v) = s.parse::<f64>() {
        return v.is_finite().then_some(v);
    }
    let (sign, body) = match s.strip_prefix('-') {
        Some(rest) => (-1.0, rest),
        None => (1.0, s),
    };
    let (num, den) = match body.split_once('/') {
        Some((n, d)) => (n, d.parse::<f64>().ok().filter(|d| *d != 0.0)?),
        None => (body, 1.0),
    };
    let coefficient = num.strip_suffix("pi")?.trim_end_matches('*');
    let k = if coefficient.is_empty() { 1.0 } else { coefficient.parse::<f64>().ok()? };
    let v = sign * k * std::f64::consts::PI / den;
    v.is_finite().then_some(v)
}

struct Line<'a> {
    path: &'a str,
    number: usize,
    name: &'a str,
    /// key -> (value, column of the value)
    args: BTreeMap<&'a str, (&'a str, usize)>,
    end_column: usize,
}

impl<'a> Line<'a> {
    fn err(&self, column: usize, message: impl Into<String>) -> Error {
        at(self.path, self.number, column, message)
    }

    fn raw(&self, key: &str) -> Result<(&'a str, usize)> {
        self.args
            .get(key)
            .copied()
            .ok_or_else(|| self.err(self.end_column, format!("'{}' needs '{key}='", self.name)))
    }

    fn index(&self, key: &str) -> Result<usize> {
        let (v, col) = self.raw(key)?;
        v.parse().map_err(|_| self.err(col, format!("'{key}' must be a non-negative integer, got '{v}'")))
    }

    fn pair(&self, key: &str) -> Result<(usize, usize, usize)> {
        let (v, col) = self.raw(key)?;
        let parsed = v
            .split_once(',')
            .and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)));
        let (a, b) = parsed.ok_or_else(|| self.err(col, format!("'{key}' must be two indices 'a,b', got '{v}'")))?;
        if a == b {
            return Err(self.err(col, format!("two-ion operation needs distinct indices, got {a} twice")));
        }
        Ok((a, b, col))
    }

    fn angle(&self, key: &str) -> Result<f64> {
        let (v, col) = self.raw(key)?;
        parse_angle(v).ok_or_else(|| self.err(col, format!("'{key}' must be a finite angle, got '{v}'")))
    }

    fn angle_or(&self, key: &str, default: f64) -> Result<f64> {
        if self.args.contains_key(key) {
            self.angle(key)
        } else {
            Ok(default)
        }
    }

    fn only(&self, allowed: &[&str]) -> Result<()> {
        match self.args.iter().find(|(k, _)| !allowed.contains(k)) {
            Some((k, (_, col))) => Err(self.err(col.saturating_sub(k.len() + 1), format!("unknown argument '{k}' for '{}'", self.name))),
            None => Ok(()),
        }
    }
}

enum Parsed {
    Native(NativeOp, Vec<(usize, usize)>),
    Qubit(QubitOp, Vec<(usize, usize)>),
    Barrier,
}

/// Parses a circuit file; `timing` sets the durations of native pulses.
pub fn parse_circuit(text: &str, path: &str, timing: &GateTiming) -> Result<Circuit> {
    #[derive(PartialEq, Clone, Copy)]
    enum Kind {
        Native,
        Qubit,
    }
    let mut declared: Option<(Kind, usize)> = None;
    let mut kind: Option<(Kind, usize, usize)> = None;
    let mut native = Vec::new();
    let mut qubit = Vec::new();
    // (line, column, index) of every index used, for range checks.
    let mut indices: Vec<(usize, usize, usize)> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let number = i + 1;
        let content = raw.split('#').next().unwrap_or("");
        let mut tokens: Vec<(usize, &str)> = Vec::new();
        let mut offset = 0;
        let mut rest = content;
        while let Some(start) = rest.find(|c: char| !c.is_whitespace()) {
            let end = rest[start..].find(char::is_whitespace).map_or(rest.len(), |e| start + e);
            tokens.push((offset + start + 1, &rest[start..end]));
            offset += end;
            rest = &rest[end..];
        }
        let Some(&(name_col, name)) = tokens.first() else { continue };
        let name_lower = name.to_ascii_lowercase();
        if name_lower == "ions" || name_lower == "qubits" {
            let this = if name_lower == "ions" { Kind::Native } else { Kind::Qubit };
            if declared.is_some() || kind.is_some() {
                return Err(at(path, number, name_col, "the size header must come first and only once"));
            }
            let (col, v) = tokens.get(1).copied().ok_or_else(|| at(path, number, content.len() + 1, format!("'{name}' needs a count")))?;
            if tokens.len() > 2 {
                return Err(at(path, number, tokens[2].0, "unexpected token after the count"));
            }
            let n: usize = v.parse().map_err(|_| at(path, number, col, format!("count must be a non-negative integer, got '{v}'")))?;
            declared = Some((this, n));
            continue;
        }
        let mut args = BTreeMap::new();
        for &(col, tok) in &tokens[1..] {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| at(path, number, col, format!("expected key=value, got '{tok}'")))?;
            if args.insert(k, (v, col + k.len() + 1)).is_some() {
                return Err(at(path, number, col, format!("argument '{k}' repeated")));
            }
        }
        let line = Line {
            path,
            number,
            name: name_lower.as_str(),
            args,
            end_column: content.trim_end().len() + 1,
        };
        let parsed = match line.name {
            "rphi" => {
                line.only(&["ion", "j", "theta", "phi"])?;
                let (ion, col) = (line.index("ion")?, line.raw("ion")?.1);
                let (level, lcol) = (line.index("j")?, line.raw("j")?.1);
                if !(1..=3).contains(&level) {
                    return Err(line.err(lcol, format!("rotations couple level 0 to j in 1..=3, got {level}")));
                }
                let op = NativeOp::rotation(ion, level, line.angle("theta")?, line.angle_or("phi", 0.0)?, timing);
                Parsed::Native(op, vec![(ion, col)])
            }
            "rz" => {
                line.only(&["ion", "j", "theta"])?;
                let (ion, col) = (line.index("ion")?, line.raw("ion")?.1);
                let (level, lcol) = (line.index("j")?, line.raw("j")?.1);
                if !(1..=3).contains(&level) {
                    return Err(line.err(lcol, format!("phase gates act on level 1..=3, got {level}")));
                }
                Parsed::Native(NativeOp::phase(ion, level, line.angle("theta")?), vec![(ion, col)])
            }
            "ms" => {
                line.only(&["ions", "chi"])?;
                let (a, b, col) = line.pair("ions")?;
                Parsed::Native(NativeOp::ms(a, b, line.angle("chi")?, timing), vec![(a, col), (b, col)])
            }
            "u3" => {
                line.only(&["q", "theta", "phi", "lam"])?;
                let (q, col) = (line.index("q")?, line.raw("q")?.1);
                let op = QubitOp::U3 {
                    qubit: q,
                    theta: line.angle("theta")?,
                    phi: line.angle_or("phi", 0.0)?,
                    lam: line.angle_or("lam", 0.0)?,
                };
                Parsed::Qubit(op, vec![(q, col)])
            }
            "h" | "x" | "z" | "ry" => {
                let allowed: &[&str] = if line.name == "ry" { &["q", "theta"] } else { &["q"] };
                line.only(allowed)?;
                let (q, col) = (line.index("q")?, line.raw("q")?.1);
                let mut c = QubitCircuit::new(q + 1);
                match line.name {
                    "h" => c.h(q),
                    "x" => c.x(q),
                    "z" => c.z(q),
                    _ => c.ry(q, line.angle("theta")?),
                };
                Parsed::Qubit(c.ops.remove(0), vec![(q, col)])
            }
            "cx" => {
                line.only(&["control", "target"])?;
                let (a, acol) = (line.index("control")?, line.raw("control")?.1);
                let (b, bcol) = (line.index("target")?, line.raw("target")?.1);
                if a == b {
                    return Err(line.err(bcol, format!("two-qubit operation needs distinct indices, got {a} twice")));
                }
                Parsed::Qubit(QubitOp::Cx { control: a, target: b }, vec![(a, acol), (b, bcol)])
            }
            "cz" => {
                line.only(&["q"])?;
                let (a, b, col) = line.pair("q")?;
                let mut c = QubitCircuit::new(a.max(b) + 1);
                c.cz(a, b);
                for op in c.ops {
                    qubit.push(op);
                }
                indices.push((number, col, a));
                indices.push((number, col, b));
                match kind {
                    Some((Kind::Native, l, _)) => return Err(line.err(name_col, format!("qubit instruction after native instruction on line {l}"))),
                    None => kind = Some((Kind::Qubit, number, name_col)),
                    _ => {}
                }
                continue;
            }
            "xx" => {
                line.only(&["q", "chi"])?;
                let (a, b, col) = line.pair("q")?;
                Parsed::Qubit(QubitOp::Xx { a, b, chi: line.angle("chi")? }, vec![(a, col), (b, col)])
            }
            "barrier" => {
                line.only(&[])?;
                Parsed::Barrier
            }
            other => return Err(at(path, number, name_col, format!("unknown instruction '{other}'"))),
        };
        let this = match &parsed {
            Parsed::Native(..) => Some(Kind::Native),
            Parsed::Qubit(..) => Some(Kind::Qubit),
            Parsed::Barrier => None,
        };
        if let Some(this) = this {
            match kind {
                Some((k, l, _)) if k != this => {
                    return Err(at(path, number, name_col, format!("cannot mix native and qubit-level instructions (see line {l})")));
                }
                None => kind = Some((this, number, name_col)),
                _ => {}
            }
        }
        match parsed {
            Parsed::Native(op, used) => {
                native.push(op);
                indices.extend(used.into_iter().map(|(idx, col)| (number, col, idx)));
            }
            Parsed::Qubit(op, used) => {
                qubit.push(op);
                indices.extend(used.into_iter().map(|(idx, col)| (number, col, idx)));
            }
            Parsed::Barrier => qubit.push(QubitOp::Barrier),
        }
    }

    let body_kind = kind.map(|k| k.0);
    let (k, n) = match (declared, body_kind) {
        (Some((d, _)), Some(b)) if d != b => {
            let (_, l, c) = kind.expect("set");
            let what = if d == Kind::Native { "native" } else { "qubit" };
            return Err(at(path, l, c, format!("header declares a {what} circuit")));
        }
        (Some((d, n)), _) => (d, n),
        (None, b) => (
            b.unwrap_or(Kind::Native),
            indices.iter().map(|&(_, _, i)| i + 1).max().unwrap_or(0),
        ),
    };
    if let Some(&(l, c, i)) = indices.iter().find(|&&(_, _, i)| i >= n) {
        return Err(at(path, l, c, format!("index {i} out of range for {n} {}", if k == Kind::Native { "ions" } else { "qubits" })));
    }
    match k {
        Kind::Native => {
            let circuit = NativeCircuit::with_ops(n, native);
            circuit.validate()?;
            Ok(Circuit::Native(circuit))
        }
        Kind::Qubit => {
            let circuit = QubitCircuit { n_qubits: n, ops: qubit };
            circuit.validate()?;
            Ok(Circuit::Qubit(circuit))
        }
    }
}

/// Trap file in TOML (`n_ions`, `fx_hz`, `fy_hz`, `fz_hz`, optional
/// `mass_number`, `charge_number`).
pub fn parse_chain_config(text: &str, path: &str) -> Result<ChainConfig> {
    let config: ChainConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map(|s| line_column(text, s.start)).unwrap_or((0, 0));
        at(path, line, column, e.message())
    })?;
    config.chain()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn parse(text: &str) -> Result<Circuit> {
        parse_circuit(text, "c.txt", &GateTiming::default())
    }

    #[test]
    fn angles() {
        assert_eq!(parse_angle("1.5"), Some(1.5));
        assert_eq!(parse_angle("pi"), Some(PI));
        assert_eq!(parse_angle("-pi/2"), Some(-PI / 2.0));
        assert_eq!(parse_angle("3pi/4"), Some(3.0 * PI / 4.0));
        assert_eq!(parse_angle("3*pi/4"), Some(3.0 * PI / 4.0));
        assert_eq!(parse_angle("pi/0"), None);
        assert_eq!(parse_angle("inf"), None);
        assert_eq!(parse_angle("x"), None);
    }

    #[test]
    fn single_rotation() {
        let c = parse("rphi ion=0 j=1 theta=3.14159 phi=0\n").unwrap();
        let Circuit::Native(c) = c else { panic!("native") };
        assert_eq!(c.n_ions, 1);
        assert_eq!(c.ops, vec![NativeOp::rotation(0, 1, 3.14159, 0.0, &GateTiming::default())]);
    }

    #[test]
    fn empty_file() {
        assert_eq!(parse("").unwrap(), Circuit::Native(NativeCircuit::new(0)));
        assert_eq!(parse("# nothing\n\n").unwrap(), Circuit::Native(NativeCircuit::new(0)));
    }

    #[test]
    fn equal_ms_indices() {
        let err = parse("ions 2\n\nms ions=0,0 chi=0.785\n").unwrap_err();
        let Error::Parse { line, column, message, .. } = err else { panic!("{err:?}") };
        assert_eq!((line, column), (3, 9));
        assert!(message.contains("distinct"));
    }

    #[test]
    fn errors_carry_locations() {
        let cases = [
            ("ions 2\nfoo ion=0\n", 2, 1),
            ("ions 2\nrz ion=5 j=1 theta=0\n", 2, 8),
            ("rphi ion=0 j=4 theta=1\n", 1, 14),
            ("rphi ion=0 j=1 theta=abc\n", 1, 22),
            ("rphi ion=0 j=1\n", 1, 15),
            ("rphi ion=0 j=1 theta=1 bogus=2\n", 1, 24),
            ("h q=0\nrz ion=0 j=1 theta=0\n", 2, 1),
            ("qubits 2\nms ions=0,1 chi=1\n", 2, 1),
            ("h q=0\nqubits 2\n", 2, 1),
            ("rphi ion=0 j=1 theta\n", 1, 16),
        ];
        for (text, line, column) in cases {
            match parse(text) {
                Err(Error::Parse { line: l, column: c, .. }) => assert_eq!((l, c), (line, column), "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn qubit_circuit() {
        let text = "qubits 3\nx q=2\nh q=0\nbarrier\ncx control=0 target=2\ncz q=1,2\nxx q=0,1 chi=pi/4\nu3 q=1 theta=pi/2 lam=pi\n";
        let Circuit::Qubit(c) = parse(text).unwrap() else { panic!("qubit") };
        let mut expected = QubitCircuit::new(3);
        expected.x(2).h(0).barrier().cx(0, 2).cz(1, 2);
        expected.ops.push(QubitOp::Xx { a: 0, b: 1, chi: PI / 4.0 });
        expected.u3(1, PI / 2.0, 0.0, PI);
        assert_eq!(c, expected);
    }

    #[test]
    fn inferred_size() {
        let Circuit::Native(c) = parse("ms ions=0,3 chi=0.2\n").unwrap() else { panic!() };
        assert_eq!(c.n_ions, 4);
    }

    #[test]
    fn chain_file() {
        let c = parse_chain_config("n_ions = 2\nfx_hz = 3.7e6\nfy_hz = 3.8e6\nfz_hz = 116e3\n", "t.toml").unwrap();
        assert_eq!(c.n_ions, 2);
        assert!((c.mass_number - 170.936).abs() < 1e-3);
        let err = parse_chain_config("n_ions = 2\nfx_hz = 3.7e6\nfy_hz = 3.8e6\nfz_hz = 116e3\nbogus = 1\n", "t.toml").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 5, .. }), "{err:?}");
        assert!(parse_chain_config("n_ions = 2\nfx_hz = 1e4\nfy_hz = 3.8e6\nfz_hz = 116e3\n", "t").is_err());
    }
}
