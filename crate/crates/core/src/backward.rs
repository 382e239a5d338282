//! Backward pass: per-layer Rauch-Tung-Striebel smoothing of the forward
//! moments. Each layer runs two smoothing steps, first the pre-activations
//! against the updated layer output, then the weights and layer input jointly
//! against the updated pre-activations. At the output layer the observed
//! target replaces the smoothed message, turning the first step into a
//! (nonlinear) Kalman filter update.
//!
//! Neurons are independent, so `C_a` is diagonal and the upper block of the
//! cross-covariance `C_wza` is block diagonal. The weight-weight block of the
//! joint update therefore splits into one rank-one update per neuron and the
//! full joint matrix is never formed.

use nalgebra::{DMatrix, DVector};

use crate::error::{KbnnError, Result};
use crate::forward::{ForwardCache, LayerForwardRecord};
use crate::gaussian::{clamp_psd, floor_diagonal, is_psd, variance_floor};
use crate::network::{LayerState, NetworkState, NeuronPosterior};
use crate::scalar::Scalar;

/// Smoothed moments `(μ_z⁺, C_z⁺)` of a layer output, handed to the layer
/// below. The bias coordinate is not included.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedLayerMessage<T: Scalar> {
    pub mean: DVector<T>,
    pub covariance: DMatrix<T>,
}

impl<T: Scalar> SmoothedLayerMessage<T> {
    /// Message for an observed target: mean `y`, zero covariance.
    pub fn observed(y: &[T]) -> Self {
        Self {
            mean: DVector::from_row_slice(y),
            covariance: DMatrix::zeros(y.len(), y.len()),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Smoothing step on the pre-activations of one layer.
///
/// Because the predicted output covariance is diagonal, the gain of neuron
/// `n` has a single non-zero entry `cov_az[n] / var_z_out[n]`; the quadratic
/// form is still taken against the full (possibly dense) message covariance.
pub fn smooth_activations<T: Scalar>(
    rec: &LayerForwardRecord<T>,
    msg: &SmoothedLayerMessage<T>,
) -> Result<(DVector<T>, DVector<T>)> {
    smooth_activations_with_noise(rec, msg, T::zero())
}

/// As [`smooth_activations`], with `noise` added to the predicted output
/// variance. For the output layer this is the Kalman update for
/// `y = f(a) + v`, `v ~ N(0, noise)`.
pub fn smooth_activations_with_noise<T: Scalar>(
    rec: &LayerForwardRecord<T>,
    msg: &SmoothedLayerMessage<T>,
    noise: T,
) -> Result<(DVector<T>, DVector<T>)> {
    let m = rec.width();
    if msg.dim() != m || msg.covariance.nrows() != m || msg.covariance.ncols() != m {
        return Err(KbnnError::Dimension {
            context: "smoothed layer message",
            expected: m,
            actual: msg.dim(),
        });
    }
    let mut mu_plus = rec.mu_a.clone();
    let mut var_plus = rec.var_a.clone();
    for n in 0..m {
        let predicted_var = rec.var_z_out[n] + noise;
        let gain = rec.cov_az[n] / predicted_var;
        mu_plus[n] += gain * (msg.mean[n] - rec.mu_z_out[n]);
        // kₙᵀ (C⁺ − C⁻) kₙ with kₙ = gain·eₙ
        var_plus[n] += gain * gain * (msg.covariance[(n, n)] - predicted_var);
        if var_plus[n] < T::zero() {
            var_plus[n] = T::zero();
        }
    }
    Ok((mu_plus, var_plus))
}

/// Cross-covariance between the stacked `(w_1, …, w_M, z)` and `a`:
/// a block-diagonal upper part with columns `C_wⁿ μ_z` and a dense lower part
/// with columns `C_z μ_wⁿ`.
pub fn build_cwza<T: Scalar>(layer: &LayerState<T>, rec: &LayerForwardRecord<T>) -> Result<DMatrix<T>> {
    let dim = layer.fan_in + 1;
    let m = layer.width();
    check_record(layer, rec)?;
    let mut out = DMatrix::zeros(m * dim + dim, m);
    for (n, neuron) in layer.neurons.iter().enumerate() {
        let g = &neuron.covariance * &rec.mu_z_in;
        out.view_mut((n * dim, n), (dim, 1)).copy_from(&g);
        let h = rec.var_z_in.component_mul(&neuron.mean);
        out.view_mut((m * dim, n), (dim, 1)).copy_from(&h);
    }
    Ok(out)
}

fn check_record<T: Scalar>(layer: &LayerState<T>, rec: &LayerForwardRecord<T>) -> Result<()> {
    if rec.width() != layer.width() {
        return Err(KbnnError::Dimension {
            context: "forward record width",
            expected: layer.width(),
            actual: rec.width(),
        });
    }
    if rec.mu_z_in.len() != layer.fan_in + 1 {
        return Err(KbnnError::Dimension {
            context: "forward record input",
            expected: layer.fan_in + 1,
            actual: rec.mu_z_in.len(),
        });
    }
    Ok(())
}

/// Joint smoothing step for the weights and the layer input.
///
/// Returns the updated neuron posteriors and the message `(μ_z⁺, C_z⁺)` for
/// the layer below, with the bias coordinate stripped.
pub fn smooth_weights_and_inputs<T: Scalar>(
    layer: &LayerState<T>,
    rec: &LayerForwardRecord<T>,
    mu_a_plus: &DVector<T>,
    var_a_plus: &DVector<T>,
) -> Result<(Vec<NeuronPosterior<T>>, SmoothedLayerMessage<T>)> {
    check_record(layer, rec)?;
    let m = layer.width();
    if mu_a_plus.len() != m || var_a_plus.len() != m {
        return Err(KbnnError::Dimension {
            context: "smoothed pre-activations",
            expected: m,
            actual: mu_a_plus.len(),
        });
    }
    let dim = layer.fan_in + 1;
    let floor = variance_floor::<T>();
    let input_is_random = rec.var_z_in.iter().any(|v| *v != T::zero());

    let mut mu_z = rec.mu_z_in.clone();
    let mut c_z = DMatrix::from_diagonal(&rec.var_z_in);
    let mut neurons = Vec::with_capacity(m);
    for (n, neuron) in layer.neurons.iter().enumerate() {
        let inv_var = T::one() / rec.var_a[n].max(floor);
        let mean_step = (mu_a_plus[n] - rec.mu_a[n]) * inv_var;
        let cov_step = (var_a_plus[n] - rec.var_a[n]) * inv_var * inv_var;

        // column n of L = C_wza C_a⁻¹, weight part
        let g = &neuron.covariance * &rec.mu_z_in;
        let mean = &neuron.mean + &g * mean_step;
        let mut covariance = neuron.covariance.clone();
        covariance.ger(cov_step, &g, &g, T::one());
        floor_diagonal(&mut covariance);
        if !is_psd(&covariance) {
            covariance = clamp_psd(&covariance);
        }
        neurons.push(NeuronPosterior { mean, covariance });

        if input_is_random {
            let h = rec.var_z_in.component_mul(&neuron.mean);
            mu_z.axpy(mean_step, &h, T::one());
            c_z.ger(cov_step, &h, &h, T::one());
        }
    }
    let msg = SmoothedLayerMessage {
        mean: mu_z.rows(1, dim - 1).into_owned(),
        covariance: c_z.view((1, 1), (dim - 1, dim - 1)).into_owned(),
    };
    Ok((neurons, msg))
}

/// One full backward pass with noise-free observation `y` (raw target scale).
pub fn backward<T: Scalar>(net: &NetworkState<T>, cache: &ForwardCache<T>, y: &[T]) -> Result<NetworkState<T>> {
    backward_with_noise(net, cache, y, T::zero())
}

/// Backward pass with observation noise variance `noise` (on the network's
/// standardized target scale). The input state is left untouched; on error
/// no partial update escapes.
pub fn backward_with_noise<T: Scalar>(
    net: &NetworkState<T>,
    cache: &ForwardCache<T>,
    y: &[T],
    noise: T,
) -> Result<NetworkState<T>> {
    if y.len() != net.output_dim {
        return Err(KbnnError::Dimension {
            context: "target",
            expected: net.output_dim,
            actual: y.len(),
        });
    }
    if cache.layers.len() != net.layers.len() {
        return Err(KbnnError::Dimension {
            context: "forward cache layers",
            expected: net.layers.len(),
            actual: cache.layers.len(),
        });
    }
    if !(noise >= T::zero()) {
        return Err(KbnnError::Config("observation noise must be non-negative".into()));
    }
    let y_model = match net.standardizer.as_ref().and_then(|s| s.targets.as_ref()) {
        Some(t) => t.standardize(y),
        None => y.to_vec(),
    };
    let mut updated = net.clone();
    let mut msg = SmoothedLayerMessage::observed(&y_model);
    for l in (0..net.layers.len()).rev() {
        let layer = &net.layers[l];
        let rec = &cache.layers[l];
        let annotate = |e: KbnnError| match e {
            KbnnError::Numeric { .. } => e,
            other => KbnnError::Numeric {
                layer: l,
                detail: other.to_string(),
            },
        };
        let layer_noise = if l + 1 == net.layers.len() { noise } else { T::zero() };
        let (mu_a_plus, var_a_plus) = smooth_activations_with_noise(rec, &msg, layer_noise).map_err(annotate)?;
        let (neurons, next) = smooth_weights_and_inputs(layer, rec, &mu_a_plus, &var_a_plus).map_err(annotate)?;
        let finite = neurons
            .iter()
            .all(|n| n.mean.iter().chain(n.covariance.iter()).all(|v| v.is_finite()))
            && next.mean.iter().chain(next.covariance.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(KbnnError::Numeric {
                layer: l,
                detail: "non-finite posterior after smoothing".into(),
            });
        }
        updated.layers[l].neurons = neurons;
        msg = next;
    }
    Ok(updated)
}
