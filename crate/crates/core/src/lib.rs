//! Structure-adaptive energy-based models for binary time series.
//!
//! Static [`rbm::Rbm`]s trained with contrastive divergence, hidden-unit
//! generation and annihilation driven by gradient variance ([`adapt`]),
//! forgetting penalties, automatic layer growth for deep belief networks
//! ([`dbn`]), and the recurrent variants [`rnn::RnnRbm`] and
//! [`rnn_dbn::RnnDbn`]. Small models have exact enumeration routines used as
//! oracles throughout the test suite.

pub mod adapt;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod dbn;
pub mod error;
pub mod harness;
pub mod log;
pub mod metrics;
pub mod numerics;
pub mod rbm;
pub mod rnn;
pub mod rnn_dbn;
pub mod train;

pub use error::{Error, Result};
