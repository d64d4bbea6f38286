//! Criterion benchmarks for `cmps-core`; see `benches/cmps.rs`.
