//! Criterion benchmarks for the `clm-core` kernels; see `benches/`.
