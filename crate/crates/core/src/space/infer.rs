//! Heuristic inference of a space from live, writable options.
//!
//! Each option's current value is taken as its default. `0`/`1` defaults become
//! booleans. Other numeric defaults are scaled up and down by powers of ten and
//! written back through the probe; the widest run of accepted writes in each
//! direction bounds the inferred range. Non-numeric options are reported and
//! left out of the space.

use log::warn;

use super::{ConfigSpace, Domain, ParameterDef, Stage, Value};

/// Number of ×10 (and ÷10) steps tried in each direction.
pub const PROBE_DECADES: u32 = 3;

/// Read/write access to the options being inferred.
pub trait Probe {
    /// Current value of an option, as text.
    fn read(&mut self, option: &str) -> Result<String, String>;

    /// Attempt to set an option. `false` on a rejected write or a crashed target.
    fn write(&mut self, option: &str, value: &str) -> bool;
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferredSpace {
    pub space: ConfigSpace,
    /// Options whose default is not a number, with that default.
    pub non_numeric: Vec<(String, String)>,
    /// Options that could not be read, with the reason.
    pub skipped: Vec<(String, String)>,
}

enum Parsed {
    Int(i64),
    Float(f64),
    Other,
}

fn parse_default(text: &str) -> Parsed {
    let t = text.trim();
    if let Ok(i) = t.parse::<i64>() {
        return Parsed::Int(i);
    }
    match t.parse::<f64>() {
        Ok(f) if f.is_finite() => Parsed::Float(f),
        _ => Parsed::Other,
    }
}

fn probe_int<P: Probe + ?Sized>(probe: &mut P, option: &str, default: i64) -> (i64, i64) {
    let (mut lo, mut hi) = (default, default);
    let mut last = default;
    for j in 1..=PROBE_DECADES {
        let Some(v) = 10i64.checked_pow(j).and_then(|f| default.checked_mul(f)) else {
            break;
        };
        if v == last || !probe.write(option, &v.to_string()) {
            break;
        }
        lo = lo.min(v);
        hi = hi.max(v);
        last = v;
    }
    last = default;
    for j in 1..=PROBE_DECADES {
        let v = default / 10i64.pow(j);
        if v == last || !probe.write(option, &v.to_string()) {
            break;
        }
        lo = lo.min(v);
        hi = hi.max(v);
        last = v;
    }
    (lo, hi)
}

fn probe_float<P: Probe + ?Sized>(probe: &mut P, option: &str, default: f64) -> (f64, f64) {
    let (mut lo, mut hi) = (default, default);
    for scale in [10f64, 0.1] {
        for j in 1..=PROBE_DECADES {
            let v = default * scale.powi(j as i32);
            if !v.is_finite() || v == default || !probe.write(option, &v.to_string()) {
                break;
            }
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    (lo, hi)
}

/// Infer a run-stage space from `options` through `probe`.
///
/// The returned space always satisfies the parameter invariants: the default
/// lies inside every inferred range, whatever the probe answers.
pub fn infer_space<P: Probe + ?Sized>(probe: &mut P, options: &[String]) -> InferredSpace {
    let mut params = Vec::new();
    let mut non_numeric = Vec::new();
    let mut skipped = Vec::new();
    for option in options {
        if params.iter().any(|p: &ParameterDef| &p.name == option) {
            continue;
        }
        let text = match probe.read(option) {
            Ok(t) => t,
            Err(e) => {
                warn!("skipping unreadable option `{option}`: {e}");
                skipped.push((option.clone(), e));
                continue;
            }
        };
        let param = match parse_default(&text) {
            Parsed::Int(d @ (0 | 1)) => {
                ParameterDef::new(option.clone(), Domain::Boolean, Stage::Run, Value::Bool(d == 1), None)
            }
            Parsed::Int(d) => {
                let (lo, hi) = probe_int(probe, option, d);
                probe.write(option, &d.to_string());
                ParameterDef::new(option.clone(), Domain::Integer { lo, hi }, Stage::Run, Value::Int(d), None)
            }
            Parsed::Float(d) => {
                let (lo, hi) = probe_float(probe, option, d);
                probe.write(option, &d.to_string());
                ParameterDef::new(
                    option.clone(),
                    Domain::Continuous { lo, hi },
                    Stage::Run,
                    Value::Float(d),
                    None,
                )
            }
            Parsed::Other => {
                non_numeric.push((option.clone(), text.trim().to_string()));
                continue;
            }
        };
        match param {
            Ok(p) => params.push(p),
            Err(e) => {
                warn!("skipping option `{option}`: {e}");
                skipped.push((option.clone(), e.to_string()));
            }
        }
    }
    let space = ConfigSpace::new(params, None).expect("option names are deduplicated");
    InferredSpace {
        space,
        non_numeric,
        skipped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::{BTreeMap, BTreeSet};

    /// Scripted probe: fixed defaults, and a set of accepted (option, value) writes.
    #[derive(Default)]
    struct Scripted {
        defaults: BTreeMap<String, String>,
        accept: BTreeSet<(String, String)>,
        writes: Vec<(String, String)>,
    }

    impl Probe for Scripted {
        fn read(&mut self, option: &str) -> Result<String, String> {
            self.defaults
                .get(option)
                .cloned()
                .ok_or_else(|| "no such option".to_string())
        }

        fn write(&mut self, option: &str, value: &str) -> bool {
            self.writes.push((option.into(), value.into()));
            self.accept.contains(&(option.to_string(), value.to_string()))
                || self.defaults.get(option).map(String::as_str) == Some(value)
        }
    }

    fn opts(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn zero_or_one_defaults_are_boolean() {
        let mut p = Scripted::default();
        p.defaults.insert("a".into(), "1\n".into());
        p.defaults.insert("b".into(), "0".into());
        let out = infer_space(&mut p, &opts(&["a", "b"]));
        assert_eq!(out.space.params()[0].domain, Domain::Boolean);
        assert_eq!(out.space.params()[0].default, Value::Bool(true));
        assert_eq!(out.space.params()[1].default, Value::Bool(false));
        assert!(p.writes.is_empty());
    }

    #[test]
    fn integer_range_follows_the_probe_schedule() {
        let mut p = Scripted::default();
        p.defaults.insert("q".into(), "128".into());
        for v in ["1280", "12800", "128000", "12"] {
            p.accept.insert(("q".into(), v.into()));
        }
        let out = infer_space(&mut p, &opts(&["q"]));
        let q = &out.space.params()[0];
        assert_eq!(q.domain, Domain::Integer { lo: 12, hi: 128_000 });
        assert_eq!(q.default, Value::Int(128));
        // ÷100 rejected, so ÷1000 is never tried; default restored last.
        assert!(!p.writes.contains(&("q".into(), "0".into())));
        assert_eq!(p.writes.last(), Some(&("q".into(), "128".into())));
    }

    #[test]
    fn strings_are_reported_not_explored() {
        let mut p = Scripted::default();
        p.defaults.insert("qdisc".into(), "pfifo".into());
        p.defaults.insert("tcp_rmem".into(), "4096 131072 6291456".into());
        let out = infer_space(&mut p, &opts(&["qdisc", "tcp_rmem", "missing"]));
        assert!(out.space.is_empty());
        assert_eq!(out.non_numeric[0], ("qdisc".into(), "pfifo".into()));
        assert_eq!(out.non_numeric.len(), 2);
        assert_eq!(out.skipped.len(), 1);
    }

    #[test]
    fn rejected_probes_leave_a_point_range() {
        let mut p = Scripted::default();
        p.defaults.insert("x".into(), "-7".into());
        p.defaults.insert("y".into(), "2.5".into());
        let out = infer_space(&mut p, &opts(&["x", "y"]));
        assert_eq!(out.space.params()[0].domain, Domain::Integer { lo: -7, hi: -7 });
        assert_eq!(out.space.params()[1].domain, Domain::Continuous { lo: 2.5, hi: 2.5 });
    }
}
