//! Line-oriented `key = value` reports.

use std::fmt::Display;

use ququart::noise::NoiseParams;

#[derive(Debug, Default, Clone, PartialEq)]
pub struct Report {
    lines: Vec<(String, String)>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Display) -> &mut Self {
        self.lines.push((key.into(), value.to_string()));
        self
    }

    pub fn list<T: Display>(&mut self, key: impl Into<String>, values: &[T]) -> &mut Self {
        let joined = values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
        self.set(key, joined)
    }

    #[cfg(test)]
    pub fn get(&self, key: &str) -> Option<&str> {
        self.lines.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.lines {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    /// Every calibration field, or `noise = off`.
    pub fn noise(&mut self, source: &str, params: Option<&NoiseParams>) -> &mut Self {
        self.set("noise", source);
        let Some(p) = params else { return self };
        self.set("noise.t1_s", p.t1)
            .set("noise.t2_01_s", p.t2_01)
            .set("noise.t2_mag_s", p.t2_mag)
            .set("noise.crosstalk_ratio", p.crosstalk_ratio)
            .set("noise.pi_pulse_duration_s", p.pi_pulse_duration)
            .set("noise.ms_duration_s", p.ms_duration)
            .set("noise.readout_stage_duration_s", p.readout_stage_duration);
        match &p.spam_confusion {
            Some(m) => {
                self.set("noise.readout", "confusion");
                for (i, row) in m.iter().enumerate() {
                    self.list(format!("noise.spam_confusion.row{i}"), row);
                }
            }
            None => {
                self.set("noise.readout", "staged_shelving");
            }
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_in_order() {
        let mut r = Report::new();
        r.set("b", 1).set("a", 0.5).list("xs", &[1, 2, 3]);
        assert_eq!(r.render(), "b = 1\na = 0.5\nxs = 1,2,3\n");
        assert_eq!(r.get("a"), Some("0.5"));
    }

    #[test]
    fn noise_block() {
        let mut r = Report::new();
        r.noise("off", None);
        assert_eq!(r.render(), "noise = off\n");
        let mut r = Report::new();
        r.noise("default", Some(&NoiseParams::default()));
        assert_eq!(r.get("noise.t1_s"), Some("0.053"));
        assert_eq!(r.get("noise.readout"), Some("staged_shelving"));
    }
}
