//! Evolutionary online planning with diversity-aware fitness.
//!
//! The library models a smart-factory routing problem on a grid: a worker
//! starts at a fixed corner and must visit one station per task, and the
//! station layout can change abruptly mid-run. A generational evolutionary
//! engine plans routes against the current layout while an optional
//! similarity penalty keeps the population diverse, which buys resilience
//! when the layout changes. An exhaustive oracle classifies such changes,
//! and the experiment harness aggregates paired runs into the statistics
//! and charts the CLI exposes.

pub mod chart;
pub mod cli;
pub mod diversity;
pub mod domain;
pub mod evolution;
pub mod experiments;
pub mod oracle;

pub use diversity::{diversity, normalized_similarity, DiversityMode};
pub use domain::{apply_change, generate_layout, l1_distance, waycost, Coord, FactoryLayout};
pub use evolution::{
    run, run_seeded, EngineConfig, GenerationStats, Individual, RunRecord, Scenario,
};
pub use experiments::{run_batch, BatchSpec, Variant};
pub use oracle::{affected_fraction, enumerate_optimum, is_unexpected, plan_table};
