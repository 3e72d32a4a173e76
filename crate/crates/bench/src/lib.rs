//! Criterion benchmarks for the hand layer, renderer, preprocessing and
//! fitting. Run with `cargo bench -p handforge-bench`.
