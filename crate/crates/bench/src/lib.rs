//! Criterion benchmarks for the hot paths of `pcc-core`; see `benches/`.
