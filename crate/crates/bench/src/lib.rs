//! Criterion benchmarks for texbuild-core live in `benches/`.
