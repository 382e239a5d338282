//! Per-neuron Gaussian weight posteriors organized into layers, plus the
//! versioned JSON model format.
//!
//! The bias of every neuron is stored at index 0 of its weight vector and the
//! layer input is augmented with a leading constant 1.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::error::{KbnnError, Result};
use crate::gaussian::is_psd;
use crate::scalar::Scalar;

pub const MODEL_FORMAT: &str = "kbnn-model-v1";

/// Gaussian posterior `N(mean, covariance)` over one neuron's weights.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuronPosterior<T: Scalar> {
    pub mean: DVector<T>,
    pub covariance: DMatrix<T>,
}

impl<T: Scalar> NeuronPosterior<T> {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerState<T: Scalar> {
    pub neurons: Vec<NeuronPosterior<T>>,
    pub activation: Activation<T>,
    pub fan_in: usize,
}

impl<T: Scalar> LayerState<T> {
    pub fn width(&self) -> usize {
        self.neurons.len()
    }
}

/// Per-column affine statistics used to z-score inputs and targets.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnStats<T> {
    pub mean: Vec<T>,
    pub std: Vec<T>,
}

impl<T: Scalar> ColumnStats<T> {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![T::zero(); dim],
            std: vec![T::one(); dim],
        }
    }

    /// Column means and population standard deviations; constant columns get
    /// a unit scale.
    pub fn fit(rows: &[Vec<T>]) -> Self {
        let dim = rows.first().map_or(0, Vec::len);
        let n = T::from_usize(rows.len().max(1)).unwrap();
        let mut mean = vec![T::zero(); dim];
        for row in rows {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += *v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![T::zero(); dim];
        for row in rows {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (*v - *m) * (*v - *m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > T::zero() {
                    sd
                } else {
                    T::one()
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn standardize(&self, row: &[T]) -> Vec<T> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (*v - *m) / *s)
            .collect()
    }

    pub fn destandardize(&self, row: &[T]) -> Vec<T> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| *v * *s + *m)
            .collect()
    }
}

/// Affine maps between the raw data scale and the scale the network is
/// trained on. Targets are left untouched when `targets` is `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer<T> {
    pub features: ColumnStats<T>,
    pub targets: Option<ColumnStats<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState<T: Scalar> {
    pub layers: Vec<LayerState<T>>,
    pub input_dim: usize,
    pub output_dim: usize,
    pub standardizer: Option<Standardizer<T>>,
}

/// Prior used when initializing a network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorSpec<T> {
    /// Diagonal prior weight variance σ0².
    pub weight_variance: T,
}

impl<T: Scalar> Default for PriorSpec<T> {
    fn default() -> Self {
        Self {
            weight_variance: T::one(),
        }
    }
}

/// Builds a network with means drawn from `N(0, 1/(fan_in+1))` and
/// covariances `σ0²·I`.
pub fn init_network<T: Scalar>(
    arch: &[usize],
    activations: &[Activation<T>],
    prior: &PriorSpec<T>,
    seed: u64,
) -> Result<NetworkState<T>> {
    if arch.len() < 2 {
        return Err(KbnnError::Config(format!(
            "architecture needs at least input and output sizes, got {arch:?}"
        )));
    }
    if activations.len() != arch.len() - 1 {
        return Err(KbnnError::Config(format!(
            "{} layers need {} activations, got {}",
            arch.len() - 1,
            arch.len() - 1,
            activations.len()
        )));
    }
    if arch.iter().any(|&n| n == 0) {
        return Err(KbnnError::Config(format!("layer sizes must be positive: {arch:?}")));
    }
    if !(prior.weight_variance > T::zero()) {
        return Err(KbnnError::Config("prior weight variance must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = arch
        .windows(2)
        .zip(activations)
        .map(|(pair, act)| {
            let (fan_in, width) = (pair[0], pair[1]);
            let dim = fan_in + 1;
            let normal = Normal::new(0.0, (1.0 / dim as f64).sqrt()).unwrap();
            let neurons = (0..width)
                .map(|_| NeuronPosterior {
                    mean: DVector::from_fn(dim, |_, _| T::lit(normal.sample(&mut rng))),
                    covariance: DMatrix::identity(dim, dim) * prior.weight_variance,
                })
                .collect();
            LayerState {
                neurons,
                activation: *act,
                fan_in,
            }
        })
        .collect();
    Ok(NetworkState {
        layers,
        input_dim: arch[0],
        output_dim: *arch.last().unwrap(),
        standardizer: None,
    })
}

impl<T: Scalar> NetworkState<T> {
    pub fn arch(&self) -> Vec<usize> {
        std::iter::once(self.input_dim)
            .chain(self.layers.iter().map(LayerState::width))
            .collect()
    }

    pub fn activations(&self) -> Vec<Activation<T>> {
        self.layers.iter().map(|l| l.activation).collect()
    }

    pub fn with_standardizer(mut self, standardizer: Option<Standardizer<T>>) -> Self {
        self.standardizer = standardizer;
        self
    }

    /// Number of stored scalars: all weight means plus all covariance entries.
    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.width() * ((l.fan_in + 1) + (l.fan_in + 1).pow(2)))
            .sum()
    }

    /// True when every weight covariance is symmetric PSD with a
    /// non-negative diagonal.
    pub fn posteriors_psd(&self) -> bool {
        self.layers.iter().flat_map(|l| &l.neurons).all(|n| {
            let c = &n.covariance;
            (0..c.nrows()).all(|i| c[(i, i)] >= T::zero()) && is_psd(c)
        })
    }

    /// Checks the structural invariants linking consecutive layers.
    pub fn validate(&self) -> Result<()> {
        let mut expected_fan_in = self.input_dim;
        for (l, layer) in self.layers.iter().enumerate() {
            if layer.fan_in != expected_fan_in {
                return Err(KbnnError::Dimension {
                    context: "layer fan-in",
                    expected: expected_fan_in,
                    actual: layer.fan_in,
                });
            }
            if layer.neurons.is_empty() {
                return Err(KbnnError::Config(format!("layer {l} has no neurons")));
            }
            for n in &layer.neurons {
                if n.mean.len() != layer.fan_in + 1
                    || n.covariance.nrows() != layer.fan_in + 1
                    || n.covariance.ncols() != layer.fan_in + 1
                {
                    return Err(KbnnError::Dimension {
                        context: "neuron weight length",
                        expected: layer.fan_in + 1,
                        actual: n.mean.len(),
                    });
                }
            }
            expected_fan_in = layer.width();
        }
        if expected_fan_in != self.output_dim {
            return Err(KbnnError::Dimension {
                context: "output dimension",
                expected: self.output_dim,
                actual: expected_fan_in,
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = ModelDocument::from_state(self);
        serde_json::to_string_pretty(&doc).map_err(|e| KbnnError::Contract(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(text).map_err(|e| KbnnError::ModelLoad {
            field: "document".into(),
            reason: e.to_string(),
        })?;
        doc.into_state()
    }
}

pub fn save_model<T: Scalar>(net: &NetworkState<T>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, net.to_json()?)?;
    Ok(())
}

pub fn load_model<T: Scalar>(path: impl AsRef<Path>) -> Result<NetworkState<T>> {
    NetworkState::from_json(&fs::read_to_string(path)?)
}

#[derive(Debug, Serialize, Deserialize)]
struct StatsDocument {
    mean: Vec<f64>,
    std: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct StandardizerDocument {
    features: StatsDocument,
    targets: Option<StatsDocument>,
}

#[derive(Debug, Serialize, Deserialize)]
struct NeuronDocument {
    mean: Vec<f64>,
    /// Row-major `(fan_in+1)²` entries.
    covariance: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerDocument {
    neurons: Vec<NeuronDocument>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelDocument {
    version: String,
    arch: Vec<usize>,
    activations: Vec<String>,
    standardizer: Option<StandardizerDocument>,
    layers: Vec<LayerDocument>,
}

fn to_f64s<T: Scalar>(v: impl IntoIterator<Item = T>) -> Vec<f64> {
    v.into_iter().map(Scalar::as_f64).collect()
}

fn load_err(field: impl Into<String>, reason: impl Into<String>) -> KbnnError {
    KbnnError::ModelLoad {
        field: field.into(),
        reason: reason.into(),
    }
}

impl ModelDocument {
    fn from_state<T: Scalar>(net: &NetworkState<T>) -> Self {
        let stats = |s: &ColumnStats<T>| StatsDocument {
            mean: to_f64s(s.mean.iter().copied()),
            std: to_f64s(s.std.iter().copied()),
        };
        ModelDocument {
            version: MODEL_FORMAT.to_string(),
            arch: net.arch(),
            activations: net.layers.iter().map(|l| l.activation.to_string()).collect(),
            standardizer: net.standardizer.as_ref().map(|s| StandardizerDocument {
                features: stats(&s.features),
                targets: s.targets.as_ref().map(stats),
            }),
            layers: net
                .layers
                .iter()
                .map(|l| LayerDocument {
                    neurons: l
                        .neurons
                        .iter()
                        .map(|n| NeuronDocument {
                            mean: to_f64s(n.mean.iter().copied()),
                            covariance: to_f64s(n.covariance.transpose().iter().copied()),
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    fn into_state<T: Scalar>(self) -> Result<NetworkState<T>> {
        if self.version != MODEL_FORMAT {
            return Err(load_err(
                "version",
                format!("expected `{MODEL_FORMAT}`, found `{}`", self.version),
            ));
        }
        if self.arch.len() < 2 || self.arch.iter().any(|&n| n == 0) {
            return Err(load_err("arch", format!("invalid architecture {:?}", self.arch)));
        }
        let n_layers = self.arch.len() - 1;
        if self.activations.len() != n_layers {
            return Err(load_err(
                "activations",
                format!("expected {n_layers} entries, found {}", self.activations.len()),
            ));
        }
        if self.layers.len() != n_layers {
            return Err(load_err(
                "layers",
                format!("expected {n_layers} entries, found {}", self.layers.len()),
            ));
        }
        let scalar = |field: &str, v: f64| -> Result<T> {
            if v.is_finite() {
                Ok(T::lit(v))
            } else {
                Err(load_err(field, "non-finite value"))
            }
        };
        let mut layers = Vec::with_capacity(n_layers);
        for (l, (layer_doc, act)) in self.layers.into_iter().zip(&self.activations).enumerate() {
            let activation: Activation<T> = act
                .parse()
                .map_err(|e: KbnnError| load_err(format!("activations[{l}]"), e.to_string()))?;
            let (fan_in, width) = (self.arch[l], self.arch[l + 1]);
            let dim = fan_in + 1;
            if layer_doc.neurons.len() != width {
                return Err(load_err(
                    format!("layers[{l}].neurons"),
                    format!("expected {width} neurons, found {}", layer_doc.neurons.len()),
                ));
            }
            let mut neurons = Vec::with_capacity(width);
            for (n, nd) in layer_doc.neurons.into_iter().enumerate() {
                let field = format!("layers[{l}].neurons[{n}]");
                if nd.mean.len() != dim {
                    return Err(load_err(
                        format!("{field}.mean"),
                        format!("expected length {dim}, found {}", nd.mean.len()),
                    ));
                }
                if nd.covariance.len() != dim * dim {
                    return Err(load_err(
                        format!("{field}.covariance"),
                        format!("expected {} entries, found {}", dim * dim, nd.covariance.len()),
                    ));
                }
                let mean = nd
                    .mean
                    .iter()
                    .map(|&v| scalar(&format!("{field}.mean"), v))
                    .collect::<Result<Vec<T>>>()?;
                let cov = nd
                    .covariance
                    .iter()
                    .map(|&v| scalar(&format!("{field}.covariance"), v))
                    .collect::<Result<Vec<T>>>()?;
                let covariance = DMatrix::from_row_slice(dim, dim, &cov);
                for i in 0..dim {
                    if covariance[(i, i)] < T::zero() {
                        return Err(load_err(
                            format!("{field}.covariance"),
                            format!("negative variance {} on diagonal entry {i}", covariance[(i, i)]),
                        ));
                    }
                }
                neurons.push(NeuronPosterior {
                    mean: DVector::from_vec(mean),
                    covariance,
                });
            }
            layers.push(LayerState {
                neurons,
                activation,
                fan_in,
            });
        }
        let stats = |field: &str, s: StatsDocument, dim: usize| -> Result<ColumnStats<T>> {
            if s.mean.len() != dim || s.std.len() != dim {
                return Err(load_err(field, format!("expected {dim} columns")));
            }
            if s.std.iter().any(|&v| !(v > 0.0)) {
                return Err(load_err(field, "standard deviations must be positive"));
            }
            Ok(ColumnStats {
                mean: s.mean.iter().map(|&v| scalar(field, v)).collect::<Result<_>>()?,
                std: s.std.iter().map(|&v| scalar(field, v)).collect::<Result<_>>()?,
            })
        };
        let input_dim = self.arch[0];
        let output_dim = *self.arch.last().unwrap();
        let standardizer = match self.standardizer {
            None => None,
            Some(sd) => Some(Standardizer {
                features: stats("standardizer.features", sd.features, input_dim)?,
                targets: sd
                    .targets
                    .map(|t| stats("standardizer.targets", t, output_dim))
                    .transpose()?,
            }),
        };
        let net = NetworkState {
            layers,
            input_dim,
            output_dim,
            standardizer,
        };
        net.validate().map_err(|e| load_err("arch", e.to_string()))?;
        Ok(net)
    }
}
