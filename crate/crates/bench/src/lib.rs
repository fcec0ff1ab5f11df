//! Criterion benchmarks for `rendezvous-core`; see `benches/`.
