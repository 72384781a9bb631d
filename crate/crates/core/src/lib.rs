//! Soft-failure evolution toolkit for optical lightpaths.
//!
//! Simulates gradual EDFA gain degradation on a lightpath, maps it to BER
//! through a physical-layer model, forecasts the BER evolution multiple
//! steps ahead with an encoder-decoder LSTM trained from scratch, and
//! compares repair-trigger policies (fixed gain-reduction margins against
//! forecast-based triggering) on lead time and QoT margin.

pub mod aging;
pub mod dataset;
pub mod error;
pub mod forecaster;
pub mod physics;
pub mod policy;
pub mod special;

pub use error::{Error, Result};
