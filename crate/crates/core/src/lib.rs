//! Group-wise narrow beam design, antenna grouping optimization and sparse
//! angular-domain channel estimation for partially connected hybrid
//! beamforming arrays.

pub mod array;
pub mod beam;
pub mod eda;
pub mod error;
pub mod estimator;
pub mod metrics;

pub use error::{Error, Result};
