pub mod allocation;
pub mod broker;
pub mod error;
pub mod io;
pub mod losses;
pub mod money;
pub mod pricing;
pub mod rational;
pub mod training;
pub mod types;
pub mod valuation;

pub use error::{DealerError, Result};
pub use money::Money;
pub use rational::ExactRational;
