//! Command-line front end for `slidebo`: the benchmark runner and the
//! HTTP session service.

pub mod bench;
pub mod server;
pub mod wire;

pub use bench::{run_bench, BenchArgs};
pub use server::{router, serve, AppState, ServerConfig};
