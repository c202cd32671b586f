//! Benchmark-only crate; the criterion harness lives in `benches/kernels.rs`.
