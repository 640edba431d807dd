//! Spiking neural networks with per-timestep ternary weights.
//!
//! A synaptic layer keeps a real-valued stimulus `I`. At every timestep a
//! calcium-like state integrates the normalized stimulus, decays, and is
//! drained by the weights it produced the step before; thresholding it yields
//! the ternary weights used at that step. Training backpropagates through
//! this recurrence with a smooth surrogate for the threshold.
//!
//! ```
//! use tawq::quant::{tawq_forward, QuantConfig};
//!
//! let cfg = QuantConfig::default();
//! let state = tawq_forward(&[0.3, -0.6, 0.05], &cfg).unwrap();
//! assert_eq!(state.w_q[0], vec![0, -1, 0]);
//! ```

pub mod analysis;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod layers;
pub mod quant;
pub mod runtime;
pub mod train;

pub use checkpoint::Checkpoint;
pub use config::RunConfig;
pub use error::{Location, Result, TawqError};
pub use layers::{network_forward, Activation, ForwardOptions, LayerSpec, Network};
pub use quant::{tawq_forward, QuantConfig, QuantizerState};
pub use runtime::InferenceModel;
pub use train::{train, TrainConfig};
