//! Versioned text documents holding network weights.
//!
//! Layout: `{"format": "crashtune-nn", "version": 1, "layers": [...]}` with one
//! entry per layer carrying its shape and a flat, row-major value array.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{Dense, Layer, Network, NnError, Rbf};
use crate::{scalar, Scalar};

pub const NN_FORMAT: &str = "crashtune-nn";
pub const NN_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum LayerDoc {
    Dense {
        inputs: usize,
        outputs: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    },
    Relu,
    Dropout {
        rate: f64,
    },
    Rbf {
        centroids: usize,
        dim: usize,
        gamma: f64,
        values: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkDoc {
    pub format: String,
    pub version: u32,
    pub layers: Vec<LayerDoc>,
}

fn to_f64<T: Scalar>(xs: impl IntoIterator<Item = T>) -> Vec<f64> {
    xs.into_iter().map(|x| x.to_f64().unwrap_or(f64::NAN)).collect()
}

fn from_f64<T: Scalar>(xs: &[f64]) -> Vec<T> {
    xs.iter().map(|x| scalar(*x)).collect()
}

impl LayerDoc {
    pub fn from_layer<T: Scalar>(layer: &Layer<T>) -> Self {
        match layer {
            Layer::Dense(d) => LayerDoc::Dense {
                inputs: d.inputs(),
                outputs: d.outputs(),
                weights: to_f64(d.weights.iter().copied()),
                bias: to_f64(d.bias.iter().copied()),
            },
            Layer::Relu => LayerDoc::Relu,
            Layer::Dropout { rate } => LayerDoc::Dropout {
                rate: rate.to_f64().unwrap_or(0.0),
            },
            Layer::Rbf(r) => LayerDoc::Rbf {
                centroids: r.len(),
                dim: r.dim(),
                gamma: r.gamma.to_f64().unwrap_or(f64::NAN),
                values: to_f64(r.centroids.iter().copied()),
            },
        }
    }

    pub fn to_layer<T: Scalar>(&self) -> Result<Layer<T>, NnError> {
        Ok(match self {
            LayerDoc::Dense {
                inputs,
                outputs,
                weights,
                bias,
            } => {
                let w = Array2::from_shape_vec((*outputs, *inputs), from_f64(weights))
                    .map_err(|e| NnError::Format(format!("dense weights: {e}")))?;
                if bias.len() != *outputs {
                    return Err(NnError::Format(format!(
                        "dense bias has {} values, expected {outputs}",
                        bias.len()
                    )));
                }
                Layer::Dense(Dense::new(w, Array1::from(from_f64::<T>(bias)))?)
            }
            LayerDoc::Relu => Layer::Relu,
            LayerDoc::Dropout { rate } => Layer::Dropout { rate: scalar(*rate) },
            LayerDoc::Rbf {
                centroids,
                dim,
                gamma,
                values,
            } => {
                let c = Array2::from_shape_vec((*centroids, *dim), from_f64(values))
                    .map_err(|e| NnError::Format(format!("rbf centroids: {e}")))?;
                Layer::Rbf(Rbf::new(c, scalar(*gamma))?)
            }
        })
    }

    fn describe(&self) -> String {
        match self {
            LayerDoc::Dense { inputs, outputs, .. } => format!("dense {inputs}→{outputs}"),
            LayerDoc::Relu => "relu".into(),
            LayerDoc::Dropout { rate } => format!("dropout({rate})"),
            LayerDoc::Rbf { centroids, dim, .. } => format!("rbf {centroids}×{dim}"),
        }
    }
}

impl NetworkDoc {
    pub fn check_header(&self) -> Result<(), NnError> {
        if self.format != NN_FORMAT {
            return Err(NnError::Format(format!(
                "unknown format `{}`, expected `{NN_FORMAT}`",
                self.format
            )));
        }
        if self.version != NN_VERSION {
            return Err(NnError::Format(format!(
                "unsupported version {}, expected {NN_VERSION}",
                self.version
            )));
        }
        Ok(())
    }
}

impl<T: Scalar> Network<T> {
    pub fn to_doc(&self) -> NetworkDoc {
        NetworkDoc {
            format: NN_FORMAT.into(),
            version: NN_VERSION,
            layers: self.layers.iter().map(LayerDoc::from_layer).collect(),
        }
    }

    pub fn from_doc(doc: &NetworkDoc) -> Result<Self, NnError> {
        doc.check_header()?;
        let layers = doc
            .layers
            .iter()
            .map(LayerDoc::to_layer)
            .collect::<Result<Vec<_>, _>>()?;
        Network::new(layers)
    }

    /// Serialize all layers and weights.
    pub fn save_weights(&self) -> String {
        serde_json::to_string(&self.to_doc()).expect("weights serialize")
    }

    /// Build a network from a weight document.
    pub fn load_weights(text: &str) -> Result<Self, NnError> {
        let doc: NetworkDoc =
            serde_json::from_str(text).map_err(|e| NnError::Format(e.to_string()))?;
        Self::from_doc(&doc)
    }

    /// Replace this network's weights, requiring an identical architecture.
    pub fn load_weights_into(&mut self, text: &str) -> Result<(), NnError> {
        let loaded = Self::load_weights(text)?;
        if loaded.layers.len() != self.layers.len() {
            return Err(NnError::Format(format!(
                "document has {} layers, network has {}",
                loaded.layers.len(),
                self.layers.len()
            )));
        }
        for (i, (a, b)) in self.layers.iter().zip(&loaded.layers).enumerate() {
            let (da, db) = (LayerDoc::from_layer(a), LayerDoc::from_layer(b));
            let same = match (&da, &db) {
                (
                    LayerDoc::Dense { inputs: i1, outputs: o1, .. },
                    LayerDoc::Dense { inputs: i2, outputs: o2, .. },
                ) => i1 == i2 && o1 == o2,
                (LayerDoc::Rbf { centroids: c1, dim: d1, .. }, LayerDoc::Rbf { centroids: c2, dim: d2, .. }) => {
                    c1 == c2 && d1 == d2
                }
                (LayerDoc::Relu, LayerDoc::Relu) => true,
                (LayerDoc::Dropout { .. }, LayerDoc::Dropout { .. }) => true,
                _ => false,
            };
            if !same {
                return Err(NnError::Format(format!(
                    "layer {i}: document has {}, network has {}",
                    db.describe(),
                    da.describe()
                )));
            }
        }
        self.layers = loaded.layers;
        Ok(())
    }
}
