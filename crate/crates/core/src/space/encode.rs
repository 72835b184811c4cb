use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ConfigSpace, Configuration, Domain, SpaceError, Value};

/// Integer ranges spanning at least this many decades are encoded in log10 space.
const LOG_DECADES: f64 = 4.0;

/// How one parameter maps onto its feature slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureEncoding {
    /// `(t - mean) / std` where `t` is the value, or `log10(value + 1)` when `log10` is set.
    Numeric { mean: f64, std: f64, log10: bool },
    OneHot { choices: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSlice {
    pub name: String,
    pub offset: usize,
    pub encoding: FeatureEncoding,
}

impl FeatureSlice {
    pub fn width(&self) -> usize {
        match &self.encoding {
            FeatureEncoding::Numeric { .. } => 1,
            FeatureEncoding::OneHot { choices } => choices.len(),
        }
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.width()
    }
}

/// Deterministic feature layout of a space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    slices: Vec<FeatureSlice>,
    width: usize,
}

/// A configuration as a fixed-length numeric vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedVector {
    pub features: Vec<f64>,
}

/// Moments of the uniform distribution over `[lo, hi]`.
fn uniform_moments(lo: f64, hi: f64) -> (f64, f64) {
    ((lo + hi) / 2.0, (hi - lo) / 12f64.sqrt())
}

fn spans_decades(lo: i64, hi: i64) -> bool {
    lo >= 0 && (hi as f64).log10() - (lo.max(1) as f64).log10() >= LOG_DECADES
}

impl Layout {
    pub fn of(space: &ConfigSpace) -> Self {
        let mut offset = 0;
        let mut slices = Vec::with_capacity(space.len());
        for p in space.params() {
            let encoding = match &p.domain {
                Domain::Boolean => {
                    let (mean, std) = uniform_moments(0.0, 1.0);
                    FeatureEncoding::Numeric {
                        mean,
                        std,
                        log10: false,
                    }
                }
                Domain::Integer { lo, hi } => {
                    let log10 = spans_decades(*lo, *hi);
                    let (mean, std) = if log10 {
                        uniform_moments(((*lo as f64) + 1.0).log10(), ((*hi as f64) + 1.0).log10())
                    } else {
                        uniform_moments(*lo as f64, *hi as f64)
                    };
                    FeatureEncoding::Numeric { mean, std, log10 }
                }
                Domain::Continuous { lo, hi } => {
                    let (mean, std) = uniform_moments(*lo, *hi);
                    FeatureEncoding::Numeric {
                        mean,
                        std,
                        log10: false,
                    }
                }
                Domain::Categorical { choices } | Domain::Text { choices } => {
                    FeatureEncoding::OneHot {
                        choices: choices.clone(),
                    }
                }
            };
            let slice = FeatureSlice {
                name: p.name.clone(),
                offset,
                encoding,
            };
            offset += slice.width();
            slices.push(slice);
        }
        Self {
            slices,
            width: offset,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn slices(&self) -> &[FeatureSlice] {
        &self.slices
    }

    pub fn slice(&self, name: &str) -> Option<&FeatureSlice> {
        self.slices.iter().find(|s| s.name == name)
    }

    /// Hash of parameter names, kinds, ranges and choices.
    pub fn fingerprint(&self, space: &ConfigSpace) -> String {
        let mut h = Sha256::new();
        for p in space.params() {
            h.update(p.name.as_bytes());
            h.update([0]);
            let desc = match &p.domain {
                Domain::Boolean => "boolean".to_string(),
                Domain::Integer { lo, hi } => format!("integer[{lo},{hi}]"),
                Domain::Continuous { lo, hi } => format!("continuous[{lo:e},{hi:e}]"),
                Domain::Categorical { choices } => format!("categorical{choices:?}"),
                Domain::Text { choices } => format!("string{choices:?}"),
            };
            h.update(desc.as_bytes());
            h.update([0]);
        }
        h.update(self.width.to_le_bytes());
        hex::encode(&h.finalize()[..16])
    }

    pub fn encode(
        &self,
        space: &ConfigSpace,
        config: &Configuration,
    ) -> Result<EncodedVector, SpaceError> {
        let mut features = vec![0.0; self.width];
        self.encode_into(space, config, &mut features)?;
        Ok(EncodedVector { features })
    }

    /// Encode into a caller-provided buffer of length [`Layout::width`].
    pub fn encode_into(
        &self,
        space: &ConfigSpace,
        config: &Configuration,
        out: &mut [f64],
    ) -> Result<(), SpaceError> {
        debug_assert_eq!(out.len(), self.width);
        for (p, slice) in space.params().iter().zip(&self.slices) {
            let v = config
                .get(&p.name)
                .ok_or_else(|| SpaceError::MissingValue(p.name.clone()))?;
            let canonical = p.domain.coerce(v).map_err(|reason| SpaceError::InvalidValue {
                name: p.name.clone(),
                value: v.to_string(),
                reason,
            })?;
            match &slice.encoding {
                FeatureEncoding::Numeric { mean, std, log10 } => {
                    let raw = canonical.as_f64().unwrap_or(0.0);
                    let t = if *log10 { (raw + 1.0).log10() } else { raw };
                    out[slice.offset] = if *std > 0.0 { (t - mean) / std } else { 0.0 };
                }
                FeatureEncoding::OneHot { choices } => {
                    let block = &mut out[slice.range()];
                    block.iter_mut().for_each(|x| *x = 0.0);
                    if let Value::Text(s) = &canonical {
                        if let Some(i) = choices.iter().position(|c| c == s) {
                            block[i] = 1.0;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Map a feature vector back to the nearest valid configuration.
    pub fn decode(&self, space: &ConfigSpace, features: &[f64]) -> Configuration {
        space
            .params()
            .iter()
            .zip(&self.slices)
            .map(|(p, slice)| {
                let block = &features[slice.range()];
                let v = match (&slice.encoding, &p.domain) {
                    (FeatureEncoding::Numeric { mean, std, log10 }, domain) => {
                        let t = block[0] * std + mean;
                        let raw = if *log10 { 10f64.powf(t) - 1.0 } else { t };
                        match domain {
                            Domain::Boolean => Value::Bool(raw > 0.5),
                            Domain::Integer { lo, hi } => {
                                Value::Int((raw.round() as i64).clamp(*lo, *hi))
                            }
                            Domain::Continuous { lo, hi } => Value::Float(raw.clamp(*lo, *hi)),
                            _ => p.default.clone(),
                        }
                    }
                    (FeatureEncoding::OneHot { choices }, _) => {
                        let best = block
                            .iter()
                            .enumerate()
                            .fold((0, f64::NEG_INFINITY), |acc, (i, x)| {
                                if *x > acc.1 {
                                    (i, *x)
                                } else {
                                    acc
                                }
                            })
                            .0;
                        Value::Text(choices[best].clone())
                    }
                };
                (p.name.clone(), v)
            })
            .collect()
    }
}
