//! Criterion benchmarks for `dbc-core`; see `benches/`.
