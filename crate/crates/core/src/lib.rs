//! Kalman Bayesian neural networks: multilayer perceptrons with Gaussian
//! weights trained online by closed-form moment propagation and smoothing,
//! without gradients.
//!
//! ```
//! use kbnn::datasets::{gen_moons, split};
//! use kbnn::forward::predict;
//! use kbnn::trainer::{train, TrainConfig};
//! use kbnn::{init_network, Activation, PriorSpec};
//!
//! # fn main() -> kbnn::Result<()> {
//! let data = gen_moons::<f64>(1500, 0.1, 7)?;
//! let s = split(&data, 0.9, 7, true)?;
//! let net = init_network(
//!     &[2, 10, 10, 1],
//!     &[Activation::relu(), Activation::relu(), Activation::Sigmoid],
//!     &PriorSpec { weight_variance: 1.0 },
//!     7,
//! )?
//! .with_standardizer(Some(s.standardizer()));
//! let (net, report) = train(&net, &s.train, &TrainConfig::default(), Some(&s.test), |_| {})?;
//! let p = predict(&net, &[0.5, 0.25])?;
//! assert_eq!(report.instances, 1350);
//! assert!(p.variance[0] <= 0.25);
//! # Ok(())
//! # }
//! ```

pub mod activation;
pub mod backward;
pub mod datasets;
pub mod error;
pub mod forward;
pub mod gaussian;
pub mod metrics;
pub mod network;
pub mod scalar;
pub mod trainer;

pub use activation::Activation;
pub use error::{KbnnError, Result};
pub use network::{init_network, load_model, save_model, NetworkState, PriorSpec};
pub use scalar::Scalar;

pub type Network = NetworkState<f64>;
pub type Network32 = NetworkState<f32>;
