//! Criterion benchmarks for the market simulator live in `benches/`.
