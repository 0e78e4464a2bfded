//! Scenario builders, selection baselines, metrics, and report emission.

pub mod report;
pub mod runner;
pub mod scenario;
pub mod theory;

pub use report::{config_hash, ExperimentReport, Method, MetricPoint, MetricSeries};
pub use runner::{labels_to_reach, run_pool_method, uncertainty_baseline, PoolRunConfig, PoolTask};
pub use scenario::{run_scenario, InterferenceScenarioReport, ScenarioOutcome, ScenarioSpec};
pub use theory::{verify_propositions, TheoryConfig, TheoryReport};
