pub mod aligned;
pub mod cli;
pub mod error;
pub mod grid;
pub mod kernels;
pub mod perf;
pub mod sweeps;
pub mod sync;
pub mod topo;

pub use error::{Error, Result};
