//! Evaluation metrics on the original target scale.

use serde::{Deserialize, Serialize};

use crate::error::{KbnnError, Result};
use crate::forward::predict;
use crate::gaussian::variance_floor;
use crate::network::NetworkState;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub rmse: f64,
    /// Average Gaussian negative log-likelihood in nats.
    pub nll: f64,
    pub accuracy: Option<f64>,
    pub n: usize,
    /// Set when some predictive variance had to be raised to the floor.
    pub variance_floored: bool,
}

/// Result of [`avg_nll`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nll<T> {
    pub value: T,
    pub floored: bool,
}

fn check_lengths(context: &'static str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(KbnnError::Dimension { context, expected: a, actual: b });
    }
    if a == 0 {
        return Err(KbnnError::Contract(format!("{context}: empty input")));
    }
    Ok(())
}

pub fn rmse<T: Scalar>(preds: &[T], targets: &[T]) -> Result<T> {
    check_lengths("rmse targets", preds.len(), targets.len())?;
    let sum = preds
        .iter()
        .zip(targets)
        .fold(T::zero(), |acc, (p, t)| acc + (*p - *t) * (*p - *t));
    Ok((sum / T::lit(preds.len() as f64)).sqrt())
}

/// `(1/2N) Σ [(y − μ)²/σ² + log σ²] + ½ log 2π`. Variances below the floor
/// are raised to it and the result is flagged.
pub fn avg_nll<T: Scalar>(means: &[T], vars: &[T], targets: &[T]) -> Result<Nll<T>> {
    check_lengths("nll variances", means.len(), vars.len())?;
    check_lengths("nll targets", means.len(), targets.len())?;
    let floor = variance_floor::<T>();
    let mut floored = false;
    let mut sum = T::zero();
    for ((m, v), y) in means.iter().zip(vars).zip(targets) {
        let mut v = *v;
        if !(v >= floor) {
            v = floor;
            floored = true;
        }
        let r = *y - *m;
        sum += r * r / v + v.ln();
    }
    let n = T::lit(means.len() as f64);
    let half = T::lit(0.5);
    Ok(Nll {
        value: half * sum / n + half * T::two_pi().ln(),
        floored,
    })
}

/// Fraction of predictions on the right side of `threshold`; a mean exactly
/// at the threshold counts as class 1.
pub fn accuracy<T: Scalar>(means: &[T], labels: &[T], threshold: T) -> Result<T> {
    check_lengths("accuracy labels", means.len(), labels.len())?;
    let half = T::lit(0.5);
    let hits = means
        .iter()
        .zip(labels)
        .filter(|(m, l)| (**m >= threshold) == (**l >= half))
        .count();
    Ok(T::lit(hits as f64) / T::lit(means.len() as f64))
}

/// Evaluate a single-output network on raw-scale rows. Accuracy is reported
/// when `classification` is set.
pub fn evaluate<T: Scalar>(
    net: &NetworkState<T>,
    xs: &[Vec<T>],
    ys: &[Vec<T>],
    classification: bool,
) -> Result<EvalResult> {
    check_lengths("evaluation targets", xs.len(), ys.len())?;
    let mut means = Vec::with_capacity(xs.len() * net.output_dim);
    let mut vars = Vec::with_capacity(means.capacity());
    let mut targets = Vec::with_capacity(means.capacity());
    for (x, y) in xs.iter().zip(ys) {
        if y.len() != net.output_dim {
            return Err(KbnnError::Dimension {
                context: "evaluation target",
                expected: net.output_dim,
                actual: y.len(),
            });
        }
        let p = predict(net, x)?;
        means.extend(p.mean);
        vars.extend(p.variance);
        targets.extend_from_slice(y);
    }
    let nll = avg_nll(&means, &vars, &targets)?;
    let accuracy = if classification {
        Some(accuracy(&means, &targets, T::lit(0.5))?.as_f64())
    } else {
        None
    };
    Ok(EvalResult {
        rmse: rmse(&means, &targets)?.as_f64(),
        nll: nll.value.as_f64(),
        accuracy,
        n: xs.len(),
        variance_floored: nll.floored,
    })
}
