//! Criterion benchmarks for the labeling pipeline; see `benches/pipeline.rs`.
