//! Forward pass: layer-wise propagation of pre-activation and activation
//! moments, yielding the predictive distribution and the per-layer records
//! the backward pass smooths against.

use nalgebra::DVector;

use crate::activation::propagate;
use crate::error::{KbnnError, Result};
use crate::gaussian::{variance_floor, ScalarGaussian};
use crate::network::{LayerState, NetworkState};
use crate::scalar::Scalar;

/// Predicted moments of one layer for one input.
///
/// `var_a` and `var_z_out` are floored so they can serve as gain
/// denominators; the input covariance is diagonal and stored as a vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerForwardRecord<T: Scalar> {
    pub mu_a: DVector<T>,
    pub var_a: DVector<T>,
    /// Layer input mean with the leading bias coordinate 1.
    pub mu_z_in: DVector<T>,
    /// Diagonal of the layer input covariance; entry 0 is always 0.
    pub var_z_in: DVector<T>,
    pub cov_az: DVector<T>,
    pub mu_z_out: DVector<T>,
    pub var_z_out: DVector<T>,
    /// Output variance as returned by the activation kernel, before flooring.
    pub raw_var_z_out: DVector<T>,
    /// Pre-activation variance before flooring.
    pub raw_var_a: DVector<T>,
}

impl<T: Scalar> LayerForwardRecord<T> {
    pub fn width(&self) -> usize {
        self.mu_a.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache<T: Scalar> {
    pub layers: Vec<LayerForwardRecord<T>>,
}

/// Predictive distribution of the network output (diagonal across outputs).
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<T> {
    pub mean: Vec<T>,
    pub variance: Vec<T>,
    /// Moments of the last layer before its activation.
    pub pre_activation_mean: Vec<T>,
    pub pre_activation_variance: Vec<T>,
}

/// Prepends the bias coordinate: mean 1 with zero variance.
pub fn augment<T: Scalar>(mean: &[T], var: &[T]) -> (DVector<T>, DVector<T>) {
    let mu = DVector::from_iterator(mean.len() + 1, std::iter::once(T::one()).chain(mean.iter().copied()));
    let v = DVector::from_iterator(var.len() + 1, std::iter::once(T::zero()).chain(var.iter().copied()));
    (mu, v)
}

/// Propagates `N(in_mean, diag(in_var))` through one layer.
///
/// With `deterministic_input` the input covariance is ignored and the
/// pre-activation variance is the exact Kalman prediction `xᵀ C_w x`.
pub fn layer_forward<T: Scalar>(
    layer: &LayerState<T>,
    in_mean: &DVector<T>,
    in_var: &DVector<T>,
    deterministic_input: bool,
) -> Result<LayerForwardRecord<T>> {
    let dim = layer.fan_in + 1;
    if in_mean.len() != dim || in_var.len() != dim {
        return Err(KbnnError::Dimension {
            context: "layer input",
            expected: dim,
            actual: in_mean.len().min(in_var.len()),
        });
    }
    if in_mean[0] != T::one() || in_var[0] != T::zero() {
        return Err(KbnnError::Contract("layer input must carry the bias coordinate (1, 0) at index 0".into()));
    }
    let width = layer.width();
    let floor = variance_floor::<T>();
    let mut rec = LayerForwardRecord {
        mu_a: DVector::zeros(width),
        var_a: DVector::zeros(width),
        mu_z_in: in_mean.clone(),
        var_z_in: if deterministic_input { DVector::zeros(dim) } else { in_var.clone() },
        cov_az: DVector::zeros(width),
        mu_z_out: DVector::zeros(width),
        var_z_out: DVector::zeros(width),
        raw_var_z_out: DVector::zeros(width),
        raw_var_a: DVector::zeros(width),
    };
    for (n, neuron) in layer.neurons.iter().enumerate() {
        let mu_w = &neuron.mean;
        let c_w = &neuron.covariance;
        let mu_a = mu_w.dot(in_mean);
        // μ_zᵀ C_w μ_z
        let mut var_a = c_w.quadform_sym(in_mean);
        if !deterministic_input {
            // μ_wᵀ C_z μ_w + Tr(C_w C_z) for diagonal C_z
            for i in 1..dim {
                var_a += in_var[i] * (mu_w[i] * mu_w[i] + c_w[(i, i)]);
            }
        }
        let var_a = var_a.max(T::zero());
        let moments = propagate(&layer.activation, ScalarGaussian::new(mu_a, var_a))?;
        rec.mu_a[n] = mu_a;
        rec.raw_var_a[n] = var_a;
        rec.var_a[n] = var_a.max(floor);
        rec.cov_az[n] = moments.cov_az;
        rec.mu_z_out[n] = moments.mean_z;
        rec.raw_var_z_out[n] = moments.var_z;
        rec.var_z_out[n] = moments.var_z.max(floor);
    }
    Ok(rec)
}

trait QuadForm<T> {
    fn quadform_sym(&self, x: &DVector<T>) -> T;
}

impl<T: Scalar> QuadForm<T> for nalgebra::DMatrix<T> {
    fn quadform_sym(&self, x: &DVector<T>) -> T {
        let n = x.len();
        let mut acc = T::zero();
        for j in 0..n {
            let mut col = T::zero();
            for i in 0..n {
                col += self[(i, j)] * x[i];
            }
            acc += col * x[j];
        }
        acc
    }
}

/// Forward pass on the network's internal (standardized) scale.
pub fn forward_standardized<T: Scalar>(net: &NetworkState<T>, x: &[T]) -> Result<(Prediction<T>, ForwardCache<T>)> {
    if x.len() != net.input_dim {
        return Err(KbnnError::Dimension {
            context: "network input",
            expected: net.input_dim,
            actual: x.len(),
        });
    }
    let zeros = vec![T::zero(); x.len()];
    let (mut mean, mut var) = augment(x, &zeros);
    let mut records = Vec::with_capacity(net.layers.len());
    for (l, layer) in net.layers.iter().enumerate() {
        let rec = layer_forward(layer, &mean, &var, l == 0).map_err(|e| match e {
            KbnnError::Contract(detail) => KbnnError::Numeric { layer: l, detail },
            other => other,
        })?;
        let (m, v) = augment(rec.mu_z_out.as_slice(), rec.raw_var_z_out.as_slice());
        mean = m;
        var = v;
        records.push(rec);
    }
    let last = records.last().expect("network has at least one layer");
    let prediction = Prediction {
        mean: last.mu_z_out.iter().copied().collect(),
        variance: last.raw_var_z_out.iter().copied().collect(),
        pre_activation_mean: last.mu_a.iter().copied().collect(),
        pre_activation_variance: last.raw_var_a.iter().copied().collect(),
    };
    Ok((prediction, ForwardCache { layers: records }))
}

/// Predictive distribution for a raw-scale input. The network's standardizer
/// (when present) is applied to `x` and the output is mapped back to the raw
/// target scale.
pub fn forward<T: Scalar>(net: &NetworkState<T>, x: &[T]) -> Result<(Prediction<T>, ForwardCache<T>)> {
    let z = standardize_input(net, x)?;
    let (pred, cache) = forward_standardized(net, &z)?;
    Ok((destandardize_prediction(net, pred), cache))
}

pub fn predict<T: Scalar>(net: &NetworkState<T>, x: &[T]) -> Result<Prediction<T>> {
    forward(net, x).map(|(p, _)| p)
}

pub(crate) fn standardize_input<T: Scalar>(net: &NetworkState<T>, x: &[T]) -> Result<Vec<T>> {
    if x.len() != net.input_dim {
        return Err(KbnnError::Dimension {
            context: "network input",
            expected: net.input_dim,
            actual: x.len(),
        });
    }
    Ok(match &net.standardizer {
        Some(s) => s.features.standardize(x),
        None => x.to_vec(),
    })
}

fn destandardize_prediction<T: Scalar>(net: &NetworkState<T>, mut p: Prediction<T>) -> Prediction<T> {
    if let Some(t) = net.standardizer.as_ref().and_then(|s| s.targets.as_ref()) {
        p.mean = t.destandardize(&p.mean);
        p.pre_activation_mean = t.destandardize(&p.pre_activation_mean);
        for (v, s) in p.variance.iter_mut().zip(&t.std) {
            *v *= *s * *s;
        }
        for (v, s) in p.pre_activation_variance.iter_mut().zip(&t.std) {
            *v *= *s * *s;
        }
    }
    p
}
