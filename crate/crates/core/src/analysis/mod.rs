//! Cost accounting and the scaling benchmark.

pub mod bench;
pub mod cost;

pub use bench::{parse_csv, run_bench, to_csv, BenchOptions, BenchRecord, BenchVariant, Outcome, Precision, CSV_HEADER};
pub use cost::{count_costs, count_costs_at, count_costs_samples, Breakdown, CostReport};
