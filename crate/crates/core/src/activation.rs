//! Closed-form Gaussian moment propagation through scalar activations.
//!
//! For `a ~ N(μ, σ²)` each kernel returns `E[f(a)]`, `Var[f(a)]` and
//! `Cov(a, f(a))`. Piece-wise linear, probit and Heaviside moments are exact.
//! The logistic sigmoid is replaced by its probit surrogate `φ(λa)` with
//! `λ = sqrt(π/8)`, whose moments are again exact; `tanh` is transported from
//! the sigmoid through `tanh(a) = 2·s(2a) − 1`.

use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use crate::error::{KbnnError, Result};
use crate::gaussian::ScalarGaussian;
use crate::scalar::{normal_cdf, normal_pdf, Scalar};

/// Scalar activation function attached to a layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation<T> {
    Linear,
    /// `f(a) = max(α·a, β·a)` with `0 ≤ α ≤ 1`, `β ≥ 0`, `α ≤ β`.
    PiecewiseLinear { alpha: T, beta: T },
    /// Logistic sigmoid, evaluated through the probit surrogate `φ(λa)`.
    Sigmoid,
    Tanh,
    /// Standard normal CDF.
    Probit,
    /// Unit step, `f(a) = 1` for `a ≥ 0`.
    Heaviside,
}

/// Moments of `z = f(a)` under a Gaussian pre-activation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivationMoments<T> {
    pub mean_z: T,
    pub var_z: T,
    /// `Cov(a, f(a))`, the numerator of the activation smoothing gain.
    pub cov_az: T,
}

impl<T: Scalar> Activation<T> {
    pub fn relu() -> Self {
        Activation::PiecewiseLinear {
            alpha: T::zero(),
            beta: T::one(),
        }
    }

    pub fn piecewise_linear(alpha: T, beta: T) -> Result<Self> {
        if !(alpha >= T::zero() && alpha <= T::one() && beta >= T::zero() && alpha <= beta) {
            return Err(KbnnError::Config(format!(
                "piece-wise linear activation needs 0 <= alpha <= 1, beta >= 0, alpha <= beta (got alpha={alpha}, beta={beta})"
            )));
        }
        Ok(Activation::PiecewiseLinear { alpha, beta })
    }

    /// Pointwise evaluation. Sigmoid and tanh use the same surrogate as the
    /// moment kernels so that a point mass maps to `f(μ)` exactly.
    pub fn eval(&self, a: T) -> T {
        match *self {
            Activation::Linear => a,
            Activation::PiecewiseLinear { alpha, beta } => (alpha * a).max(beta * a),
            Activation::Sigmoid => normal_cdf(lambda::<T>() * a),
            Activation::Tanh => T::lit(2.0) * normal_cdf(lambda::<T>() * T::lit(2.0) * a) - T::one(),
            Activation::Probit => normal_cdf(a),
            Activation::Heaviside => {
                if a >= T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }

    /// True for activations whose output lies in `[0, 1]`.
    pub fn is_bounded_unit(&self) -> bool {
        matches!(self, Activation::Sigmoid | Activation::Probit | Activation::Heaviside)
    }

    pub fn convert<U: Scalar>(&self) -> Activation<U> {
        match *self {
            Activation::Linear => Activation::Linear,
            Activation::PiecewiseLinear { alpha, beta } => Activation::PiecewiseLinear {
                alpha: U::lit(alpha.as_f64()),
                beta: U::lit(beta.as_f64()),
            },
            Activation::Sigmoid => Activation::Sigmoid,
            Activation::Tanh => Activation::Tanh,
            Activation::Probit => Activation::Probit,
            Activation::Heaviside => Activation::Heaviside,
        }
    }
}

impl<T: Scalar> fmt::Display for Activation<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Activation::Linear => f.write_str("linear"),
            Activation::PiecewiseLinear { alpha, beta } if alpha == T::zero() && beta == T::one() => {
                f.write_str("relu")
            }
            Activation::PiecewiseLinear { alpha, beta } => {
                write!(f, "pwl:{}:{}", alpha.as_f64(), beta.as_f64())
            }
            Activation::Sigmoid => f.write_str("sigmoid"),
            Activation::Tanh => f.write_str("tanh"),
            Activation::Probit => f.write_str("probit"),
            Activation::Heaviside => f.write_str("heaviside"),
        }
    }
}

impl<T: Scalar> FromStr for Activation<T> {
    type Err = KbnnError;

    /// Accepts `linear`, `relu`, `leaky:<alpha>`, `pwl:<alpha>:<beta>`,
    /// `sigmoid`, `tanh`, `probit` and `heaviside`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let parse = |v: &str| {
            v.parse::<f64>()
                .map(T::lit)
                .map_err(|_| KbnnError::Config(format!("bad activation parameter `{v}` in `{s}`")))
        };
        match s.as_str() {
            "linear" | "identity" => Ok(Activation::Linear),
            "relu" => Ok(Activation::relu()),
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            "probit" => Ok(Activation::Probit),
            "heaviside" | "step" => Ok(Activation::Heaviside),
            other => {
                let parts: Vec<&str> = other.split(':').collect();
                match parts.as_slice() {
                    ["leaky", a] => Activation::piecewise_linear(parse(a)?, T::one()),
                    ["pwl", a, b] => Activation::piecewise_linear(parse(a)?, parse(b)?),
                    _ => Err(KbnnError::Config(format!("unknown activation `{s}`"))),
                }
            }
        }
    }
}

/// `λ = sqrt(π/8)`, the probit scale matching the logistic slope at 0.
#[inline]
pub fn lambda<T: Scalar>() -> T {
    T::frac_pi_8().sqrt()
}

/// Moments of `f(a)` for `a ~ N(input.mean, input.variance)`.
pub fn propagate<T: Scalar>(act: &Activation<T>, input: ScalarGaussian<T>) -> Result<ActivationMoments<T>> {
    let (mu, var) = (input.mean, input.variance);
    if !(var >= T::zero()) || !mu.is_finite() || !var.is_finite() {
        return Err(KbnnError::Contract(format!(
            "activation input must have finite mean and non-negative variance (mean={mu}, variance={var})"
        )));
    }
    let moments = match *act {
        Activation::Linear => ActivationMoments {
            mean_z: mu,
            var_z: var,
            cov_az: var,
        },
        Activation::PiecewiseLinear { alpha, beta } => piecewise_linear_moments(alpha, beta, mu, var),
        Activation::Sigmoid => sigmoid_moments(mu, var),
        Activation::Tanh => tanh_moments(mu, var),
        Activation::Probit => probit_moments(mu, var),
        Activation::Heaviside => heaviside_moments(mu, var),
    };
    Ok(moments)
}

/// Moments of `tanh(a)` obtained from the sigmoid kernel applied to `2a`.
pub fn tanh_from_sigmoid<T: Scalar>(input: ScalarGaussian<T>) -> Result<ActivationMoments<T>> {
    propagate(&Activation::Tanh, input)
}

fn piecewise_linear_moments<T: Scalar>(alpha: T, beta: T, mu: T, var: T) -> ActivationMoments<T> {
    if var == T::zero() {
        return ActivationMoments {
            mean_z: (alpha * mu).max(beta * mu),
            var_z: T::zero(),
            cov_az: T::zero(),
        };
    }
    if alpha == beta {
        return ActivationMoments {
            mean_z: alpha * mu,
            var_z: alpha * alpha * var,
            cov_az: alpha * var,
        };
    }
    let sigma = var.sqrt();
    let r = mu / sigma;
    let cdf = normal_cdf(r);
    // σ²·N(0 | μ, σ²)
    let p_a = sigma * normal_pdf(r);
    let gamma = mu * mu + var;
    let slope_gap = beta - alpha;
    // E[a·1{a>0}] and E[a²·1{a>0}]
    let first_pos = mu * cdf + p_a;
    let second_pos = gamma * cdf + mu * p_a;

    let mean_z = alpha * mu + slope_gap * first_pos;
    let second = alpha * alpha * gamma + (beta * beta - alpha * alpha) * second_pos;
    let cross = alpha * gamma + slope_gap * second_pos;
    ActivationMoments {
        mean_z,
        var_z: (second - mean_z * mean_z).max(T::zero()),
        cov_az: cross - mu * mean_z,
    }
}

fn probit_moments<T: Scalar>(mu: T, var: T) -> ActivationMoments<T> {
    let s = (T::one() + var).sqrt();
    let h = mu / s;
    ActivationMoments {
        mean_z: normal_cdf(h),
        var_z: probit_variance(h, var),
        cov_az: var / s * normal_pdf(h),
    }
}

/// `Var[φ(a)]` for `a ~ N(μ, σ²)`, written as a difference of Owen's T
/// functions, `2·[T(h, 1) − T(h, c)]` with `h = μ/sqrt(1+σ²)` and
/// `c = 1/sqrt(1+2σ²)`, which is a cancellation-free integral over `[c, 1]`.
fn probit_variance<T: Scalar>(h: T, var: T) -> T {
    if var == T::zero() {
        return T::zero();
    }
    let lower = T::one() / (T::one() + T::lit(2.0) * var).sqrt();
    let width = T::one() - lower;
    if width <= T::zero() {
        return T::zero();
    }
    let half_h2 = h * h * T::lit(0.5);
    let integrand = |x: T| {
        let q = T::one() + x * x;
        (-half_h2 * q).exp() / q
    };
    // the integrand narrows like exp(−h²x²/2); split into panels for large |h|
    let panels = ((width * h.abs()).as_f64() / 2.0).ceil().clamp(1.0, 32.0) as usize;
    let step = width / T::from_usize(panels).unwrap();
    let mut total = T::zero();
    for p in 0..panels {
        let a = lower + step * T::from_usize(p).unwrap();
        total += gauss_legendre(a, a + step, &integrand);
    }
    (total / T::pi()).max(T::zero())
}

fn sigmoid_moments<T: Scalar>(mu: T, var: T) -> ActivationMoments<T> {
    let lam = lambda::<T>();
    let inner = probit_moments(lam * mu, lam * lam * var);
    ActivationMoments {
        mean_z: inner.mean_z,
        var_z: inner.var_z,
        cov_az: inner.cov_az / lam,
    }
}

fn tanh_moments<T: Scalar>(mu: T, var: T) -> ActivationMoments<T> {
    let two = T::lit(2.0);
    let s = sigmoid_moments(two * mu, T::lit(4.0) * var);
    // Cov(a, 2·s(2a) − 1) = Cov(2a, s(2a))
    ActivationMoments {
        mean_z: two * s.mean_z - T::one(),
        var_z: T::lit(4.0) * s.var_z,
        cov_az: s.cov_az,
    }
}

fn heaviside_moments<T: Scalar>(mu: T, var: T) -> ActivationMoments<T> {
    if var == T::zero() {
        return ActivationMoments {
            mean_z: Activation::Heaviside.eval(mu),
            var_z: T::zero(),
            cov_az: T::zero(),
        };
    }
    let sigma = var.sqrt();
    let r = mu / sigma;
    let mean_z = normal_cdf(r);
    ActivationMoments {
        mean_z,
        var_z: mean_z * normal_cdf(-r),
        // Cov(a, 1{a>0}) = σ²·N(0 | μ, σ²)
        cov_az: sigma * normal_pdf(r),
    }
}

const LEGENDRE_ORDER: usize = 16;

static LEGENDRE_RULE: LazyLock<(Vec<f64>, Vec<f64>)> = LazyLock::new(|| legendre_rule(LEGENDRE_ORDER));

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].
fn legendre_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn gauss_legendre<T: Scalar>(a: T, b: T, f: &impl Fn(T) -> T) -> T {
    let (nodes, weights) = &*LEGENDRE_RULE;
    let half = (b - a) * T::lit(0.5);
    let mid = (a + b) * T::lit(0.5);
    nodes
        .iter()
        .zip(weights)
        .fold(T::zero(), |acc, (&x, &w)| acc + T::lit(w) * f(mid + half * T::lit(x)))
        * half
}
