pub mod channel;
pub mod error;
pub mod experiment;
pub mod greedy;
pub mod hermitian;
pub mod rates;
pub mod robust;
pub mod selection;
pub mod selftest;
pub mod solvers;

pub use error::{Error, Result};
