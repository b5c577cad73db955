//! Criterion benchmarks for qaval live under `benches/`.
