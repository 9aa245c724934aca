//! Criterion benchmarks for the hot paths of `slidebo-core`; see `benches/`.
