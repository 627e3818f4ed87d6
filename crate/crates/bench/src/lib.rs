//! Criterion benchmarks for `ats-core` live in `benches/`.
