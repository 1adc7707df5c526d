//! Gaussian broadcast channel with state masking: closed-form region
//! evaluation, the dirty-paper construction behind it, the enhanced-channel
//! machinery used for the converse, a frontier optimizer and a Monte-Carlo
//! cross-check.

pub mod acceptance;
pub mod coding;
pub mod error;
pub mod extremal;
pub mod instances;
pub mod matcore;
pub mod mcval;
pub mod model;
pub mod optimize;
pub mod quadrature;
pub mod region;

pub use error::{Error, Result};
pub use matcore::{BlockCov, SymMat};
pub use model::{ChannelSpec, RegionPoint, Strategy, User};
