//! Criterion benchmarks for the nlkpp kernels and solvers; see `benches/`.
