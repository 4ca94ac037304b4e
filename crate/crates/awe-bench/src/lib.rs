//! Benchmark-only crate; see `benches/analysis.rs`.
