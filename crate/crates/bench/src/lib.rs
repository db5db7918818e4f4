//! Benchmarks for the audit engine live in `benches/`.
