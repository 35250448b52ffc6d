//! Criterion benchmarks for the generator stages live in `benches/`.
