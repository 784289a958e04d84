//! Streaming estimation of many quantiles of many series by smoothed stochastic
//! gradient descent with Polyak-Ruppert averaging.
//!
//! Estimated quantile curves never cross, memory is constant in the stream
//! length, and the averaged estimates support simultaneous tests and uniform
//! confidence bands over series and quantile levels through a simulated
//! Gaussian (Brownian-bridge) reference law.
//!
//! ```
//! use quantstream::{QuantileGrid, QuantileState, ScheduleConfig};
//!
//! let mut state = QuantileState::univariate(QuantileGrid::deciles(), ScheduleConfig::default()).unwrap();
//! for k in 0..1000 {
//!     let x = ((k * 7919) % 1000) as f64 / 1000.0;
//!     state.update(&[x]).unwrap();
//! }
//! let row = &state.averaged()[0];
//! assert!(row.windows(2).all(|w| w[0] <= w[1]));
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod conditional;
pub mod density;
pub mod dist;
pub mod error;
pub mod experiments;
pub mod inference;
pub mod oracle;
pub mod quadrature;
pub mod reservoir;
pub mod rng;
pub mod score;
pub mod sgd_quantile;

pub use conditional::{ConditionalConfig, ConditionalState};
pub use dist::Law;
pub use error::{Error, Result};
pub use inference::{BridgeSpec, InferenceReport, SparsityEstimate, SparsityMode};
pub use score::ScheduleConfig;
pub use sgd_quantile::{EstimateMode, QuantileGrid, QuantileState, Snapshot};
