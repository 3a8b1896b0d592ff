//! Criterion benchmarks for the simulator kernels; see `benches/kernels.rs`.
//!
//! Run with `cargo bench -p spdc-bench`.
