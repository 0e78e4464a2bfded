//! Scenario builders and runners: synthetic Gaussian tasks reproducing the
//! experiment shapes at desk scale, with every draw seeded.

use serde::{Deserialize, Serialize};

use crate::concept::{
    sample_mixture, ConceptDataset, ConceptSpec, Example, GaussianMixture, Membership,
    Provenance,
};
use crate::engine::{self, LoopConfig, SessionEval, SessionState};
use crate::error::{Error, Result};
use crate::experiment::report::{
    config_hash, ExperimentReport, Method, MetricPoint, MetricSeries,
};
use crate::experiment::runner::{random_baseline, run_pool_method, PoolRunConfig, PoolTask};
use crate::experiment::theory::{verify_propositions, TheoryConfig, TheoryReport};
use crate::generator::Generator;
use crate::interference::{
    broken_fixed_counts, check_interference, ConceptRegistry, InterferenceConfig,
    InterferenceReport,
};
use crate::labeler::{GroundTruth, Labeler, OracleLabeler};
use crate::model::{self, ModelKind, TrainConfig};
use crate::util::{derive_seed, write_atomic};

fn default_seeds() -> Vec<u64> {
    (0..10).collect()
}
fn default_methods() -> Vec<Method> {
    vec![Method::Disagreement, Method::Random, Method::Uncertainty]
}

/// Planted-hard-subregion pool task: most of the concept matches the base
/// rule, a minority cluster contradicts it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolSelectionSpec {
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "d_rounds8")]
    pub rounds: usize,
    #[serde(default = "d_batch10")]
    pub batch: usize,
    #[serde(default = "d_pool400")]
    pub pool_size: usize,
    #[serde(default = "d_base300")]
    pub base_size: usize,
    #[serde(default = "d_seed10")]
    pub seed_size: usize,
    #[serde(default = "d_eval2000")]
    pub eval_size: usize,
}
fn d_rounds8() -> usize {
    8
}
fn d_batch10() -> usize {
    10
}
fn d_pool400() -> usize {
    400
}
fn d_base300() -> usize {
    300
}
fn d_seed10() -> usize {
    10
}
fn d_eval2000() -> usize {
    2000
}

impl Default for PoolSelectionSpec {
    fn default() -> Self {
        PoolSelectionSpec {
            seeds: default_seeds(),
            methods: default_methods(),
            rounds: d_rounds8(),
            batch: d_batch10(),
            pool_size: d_pool400(),
            base_size: d_base300(),
            seed_size: d_seed10(),
            eval_size: d_eval2000(),
        }
    }
}

/// Two-sub-mode concept whose seed data covers only one label per sub-mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasedSeedSpec {
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "d_rounds5")]
    pub rounds: usize,
    #[serde(default = "d_batch10")]
    pub batch: usize,
    #[serde(default = "d_seed10")]
    pub seed_size: usize,
    #[serde(default = "d_pool600")]
    pub pool_size: usize,
    #[serde(default = "d_base200")]
    pub base_size: usize,
    #[serde(default = "d_eval2000")]
    pub eval_size: usize,
}
fn d_rounds5() -> usize {
    5
}
fn d_pool600() -> usize {
    600
}
fn d_base200() -> usize {
    200
}

impl Default for BiasedSeedSpec {
    fn default() -> Self {
        BiasedSeedSpec {
            seeds: default_seeds(),
            rounds: d_rounds5(),
            batch: d_batch10(),
            seed_size: d_seed10(),
            pool_size: d_pool600(),
            base_size: d_base200(),
            eval_size: d_eval2000(),
        }
    }
}

/// Elliptical base pair plus a spherical concept pair; the interference toy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gaussians2dSpec {
    #[serde(default = "d_seeds_one")]
    pub seeds: Vec<u64>,
    #[serde(default = "d_base1200")]
    pub base_size: usize,
    #[serde(default = "d_concept60")]
    pub concept_size: usize,
    #[serde(default = "d_pool400")]
    pub concept_pool: usize,
    #[serde(default = "d_eval200")]
    pub base_eval_size: usize,
    #[serde(default = "d_eval2000")]
    pub accuracy_eval_size: usize,
}
fn d_seeds_one() -> Vec<u64> {
    vec![1]
}
fn d_base1200() -> usize {
    1200
}
fn d_concept60() -> usize {
    60
}
fn d_eval200() -> usize {
    200
}

impl Default for Gaussians2dSpec {
    fn default() -> Self {
        Gaussians2dSpec {
            seeds: d_seeds_one(),
            base_size: d_base1200(),
            concept_size: d_concept60(),
            concept_pool: d_pool400(),
            base_eval_size: d_eval200(),
            accuracy_eval_size: d_eval2000(),
        }
    }
}

/// Several concepts learned simultaneously against one global model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiConceptSpec {
    #[serde(default = "d_seeds_five")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "d_concepts3")]
    pub concepts: usize,
    #[serde(default = "d_rounds6")]
    pub rounds: usize,
    #[serde(default = "d_batch10")]
    pub batch: usize,
    #[serde(default = "d_pool300")]
    pub pool_size: usize,
    #[serde(default = "d_base300")]
    pub base_size: usize,
    #[serde(default = "d_eval1500")]
    pub eval_size: usize,
}
fn d_seeds_five() -> Vec<u64> {
    (0..5).collect()
}
fn d_concepts3() -> usize {
    3
}
fn d_rounds6() -> usize {
    6
}
fn d_pool300() -> usize {
    300
}
fn d_eval1500() -> usize {
    1500
}

impl Default for MultiConceptSpec {
    fn default() -> Self {
        MultiConceptSpec {
            seeds: d_seeds_five(),
            methods: default_methods(),
            concepts: d_concepts3(),
            rounds: d_rounds6(),
            batch: d_batch10(),
            pool_size: d_pool300(),
            base_size: d_base300(),
            eval_size: d_eval1500(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioSpec {
    PoolSelection(PoolSelectionSpec),
    BiasedSeed(BiasedSeedSpec),
    Gaussians2d(Gaussians2dSpec),
    MultiConcept(MultiConceptSpec),
    TheoryVerify(TheoryConfig),
}

impl ScenarioSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ScenarioSpec::PoolSelection(_) => "pool_selection",
            ScenarioSpec::BiasedSeed(_) => "biased_seed",
            ScenarioSpec::Gaussians2d(_) => "gaussians2d",
            ScenarioSpec::MultiConcept(_) => "multi_concept",
            ScenarioSpec::TheoryVerify(_) => "theory_verify",
        }
    }
}

/// Accuracy bookkeeping around one interference resolution run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InterferenceScenarioReport {
    pub schema_version: u32,
    pub scenario: String,
    pub engine_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub first_run: InterferenceReport,
    pub second_run: InterferenceReport,
    pub base_eval_size: usize,
    pub broken_on_base_eval: usize,
    pub fixed_on_base_eval: usize,
    pub base_accuracy_before: f64,
    pub base_accuracy_after: f64,
    pub concept_accuracy_before: f64,
    pub concept_accuracy_after: f64,
    pub notes: Vec<String>,
}

/// What a scenario produces.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum ScenarioOutcome {
    Metrics(ExperimentReport),
    Theory(TheoryReport),
    Interference(Vec<InterferenceScenarioReport>),
}

impl ScenarioOutcome {
    /// Persist the outcome: a JSON report plus scenario-appropriate CSVs.
    /// Returns the written paths.
    pub fn write(&self, dir: &std::path::Path, stem: &str) -> Result<Vec<std::path::PathBuf>> {
        match self {
            ScenarioOutcome::Metrics(report) => report.emit(dir, stem),
            ScenarioOutcome::Theory(report) => {
                let path = dir.join(format!("{stem}.json"));
                write_atomic(&path, &serde_json::to_vec_pretty(report)?)?;
                Ok(vec![path])
            }
            ScenarioOutcome::Interference(reports) => {
                let mut written = Vec::new();
                let path = dir.join(format!("{stem}.json"));
                write_atomic(&path, &serde_json::to_vec_pretty(reports)?)?;
                written.push(path);
                for r in reports {
                    let csv_path = dir.join(format!("{stem}_s{}_broken_fixed.csv", r.seed));
                    write_atomic(&csv_path, r.first_run.to_csv().as_bytes())?;
                    written.push(csv_path);
                }
                Ok(written)
            }
        }
    }
}

/// Dispatch a scenario spec to its runner.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<ScenarioOutcome> {
    match spec {
        ScenarioSpec::PoolSelection(s) => run_pool_selection(s).map(ScenarioOutcome::Metrics),
        ScenarioSpec::BiasedSeed(s) => run_biased_seed(s).map(ScenarioOutcome::Metrics),
        ScenarioSpec::Gaussians2d(s) => run_gaussians2d(s).map(ScenarioOutcome::Interference),
        ScenarioSpec::MultiConcept(s) => run_multi_concept(s).map(ScenarioOutcome::Metrics),
        ScenarioSpec::TheoryVerify(s) => verify_propositions(s).map(ScenarioOutcome::Theory),
    }
}

fn lift_examples(examples: &mut [Example], lift: &dyn Fn(&[f64]) -> Vec<f64>) {
    for e in examples.iter_mut() {
        e.features = lift(&e.features);
    }
}

fn strip_labels(examples: &mut [Example]) {
    for e in examples.iter_mut() {
        e.label = None;
        e.provenance = Provenance::Pool;
    }
}

/// Sample, lift, and label by the oracle; optionally keep only points whose
/// oracle label matches their generating component (used where a scenario
/// needs label-pure sub-modes).
fn sample_task_points(
    mixture: &GaussianMixture,
    n: usize,
    seed: u64,
    concept_id: usize,
    prefix: &str,
    lift: &dyn Fn(&[f64]) -> Vec<f64>,
    truth: &GroundTruth,
    consistent_only: bool,
) -> Result<Vec<Example>> {
    let mut kept: Vec<Example> = Vec::with_capacity(n);
    let mut attempt = 0u64;
    while kept.len() < n {
        let batch_n = (n - kept.len()).max(8);
        let mut batch = sample_mixture(
            mixture,
            batch_n,
            derive_seed(seed, prefix, attempt),
            concept_id,
            &format!("{prefix}{attempt}"),
        )?;
        lift_examples(&mut batch, lift);
        for mut e in batch {
            let component_label = e.label.expect("sampled examples carry class labels");
            let true_label = truth.label(&e.features)?;
            if consistent_only && (true_label - component_label).abs() > 1e-9 {
                continue;
            }
            e.label = Some(true_label);
            e.id = format!("{prefix}-{}", kept.len());
            kept.push(e);
            if kept.len() == n {
                break;
            }
        }
        attempt += 1;
        if attempt > 200 {
            return Err(Error::InvalidConfig(format!(
                "could not draw {n} consistent samples for {prefix}"
            )));
        }
    }
    Ok(kept)
}

// ---------------------------------------------------------------------------
// pool_selection: planted hard subregion
// ---------------------------------------------------------------------------

fn pool_lift(raw: &[f64]) -> Vec<f64> {
    vec![raw[0], raw[1], raw[0] * raw[1]]
}

/// The concept truth in lifted coordinates: sign(6.5 x + x y).
fn pool_truth() -> GroundTruth {
    GroundTruth::LinearClass {
        weights: vec![6.5, 0.0, 1.0],
        bias: 0.0,
    }
}

pub struct BuiltPoolTask {
    pub task: PoolTask,
    pub oracle_achievable: f64,
}

/// Base blobs follow sign(x); the concept adds a minority cluster where the
/// base rule is wrong ("hard" region), reachable only through the xy term.
pub fn build_pool_selection_task(spec: &PoolSelectionSpec, seed: u64) -> Result<BuiltPoolTask> {
    let truth = pool_truth();
    let base_mixture = GaussianMixture::isotropic(&[
        (vec![4.0, 0.0], 0.7, 1.0, 0.5),
        (vec![-4.0, 0.0], 0.7, -1.0, 0.5),
    ])?;
    let concept_mixture = GaussianMixture::isotropic(&[
        (vec![2.0, -5.0], 0.6, 1.0, 0.4),
        (vec![-2.0, -5.0], 0.6, -1.0, 0.4),
        (vec![-2.0, -8.0], 0.6, 1.0, 0.2),
    ])?;

    let base = ConceptDataset::from_examples(
        0,
        sample_task_points(
            &base_mixture,
            spec.base_size,
            derive_seed(seed, "ps-base", 0),
            0,
            "b",
            &pool_lift,
            &truth,
            false,
        )?,
    )?;
    let mut pool = sample_task_points(
        &concept_mixture,
        spec.pool_size,
        derive_seed(seed, "ps-pool", 0),
        1,
        "p",
        &pool_lift,
        &truth,
        false,
    )?;
    let seed_examples: Vec<Example> = {
        let mut s = sample_task_points(
            &concept_mixture,
            spec.seed_size,
            derive_seed(seed, "ps-seed", 0),
            1,
            "s",
            &pool_lift,
            &truth,
            false,
        )?;
        for e in s.iter_mut() {
            e.provenance = Provenance::Seed;
        }
        s
    };
    let concept_eval = ConceptDataset::from_examples(
        1,
        sample_task_points(
            &concept_mixture,
            spec.eval_size,
            derive_seed(seed, "ps-eval", 0),
            1,
            "ev",
            &pool_lift,
            &truth,
            false,
        )?,
    )?;
    let base_eval = ConceptDataset::from_examples(
        0,
        sample_task_points(
            &base_mixture,
            spec.eval_size / 2,
            derive_seed(seed, "ps-beval", 0),
            0,
            "bev",
            &pool_lift,
            &truth,
            false,
        )?,
    )?;

    // Oracle-achievable accuracy: train on the fully labeled pool.
    let train = TrainConfig::default();
    let full_pool_ds = ConceptDataset::from_examples(1, pool.clone())?;
    let oracle_model =
        model::train_on_union(&[&base, &full_pool_ds], &train, ModelKind::RidgeLogistic)?;
    let oracle_achievable = model::accuracy(&oracle_model, &concept_eval, 0.5)?;

    strip_labels(&mut pool);
    Ok(BuiltPoolTask {
        task: PoolTask {
            concept_id: 1,
            base,
            pool,
            oracle: truth,
            seed_examples,
            concept_eval,
            base_eval,
        },
        oracle_achievable,
    })
}

fn run_pool_selection(spec: &PoolSelectionSpec) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new("pool_selection", config_hash(spec));
    report.notes.push(
        "hard-subregion task: base rule sign(x), minority cluster flipped via the xy feature"
            .into(),
    );
    for &seed in &spec.seeds {
        let built = build_pool_selection_task(spec, seed)?;
        report
            .extras
            .insert(format!("oracle_achievable_seed_{seed}"), built.oracle_achievable);
        for &method in &spec.methods {
            let cfg = PoolRunConfig {
                rounds: spec.rounds,
                batch: spec.batch,
                seed,
                ..PoolRunConfig::default()
            };
            let series = run_pool_method(&built.task, method, &cfg)?;
            report.series.push(series);
        }
    }
    report.finalize();
    Ok(report)
}

// ---------------------------------------------------------------------------
// biased_seed: two sub-modes, seed labels one-sided per mode
// ---------------------------------------------------------------------------

fn biased_lift(raw: &[f64]) -> Vec<f64> {
    vec![raw[0], raw[1], raw[0].powi(3) / 30.0]
}

/// Concept truth: sign(y). Base truth: sign(x), solvable jointly with the
/// concept through the cubic feature.
fn biased_concept_truth() -> GroundTruth {
    GroundTruth::LinearClass {
        weights: vec![0.0, 1.0, 0.0],
        bias: 0.0,
    }
}

fn biased_base_truth() -> GroundTruth {
    GroundTruth::LinearClass {
        weights: vec![1.0, 0.0, 0.0],
        bias: 0.0,
    }
}

struct BiasedSeedTask {
    base: ConceptDataset,
    seed_examples: Vec<Example>,
    full_pool: Vec<Example>,
    biased_pool: Vec<Example>,
    concept_eval: ConceptDataset,
    base_eval: ConceptDataset,
}

fn build_biased_seed_task(spec: &BiasedSeedSpec, seed: u64) -> Result<BiasedSeedTask> {
    let concept_truth = biased_concept_truth();
    let base_truth = biased_base_truth();
    // Sub-mode A sits at x = +3, sub-mode B at x = -3; each splits by sign(y).
    let full_mixture = GaussianMixture::isotropic(&[
        (vec![3.0, 0.9], 0.5, 1.0, 0.25),
        (vec![3.0, -0.9], 0.5, -1.0, 0.25),
        (vec![-3.0, 0.9], 0.5, 1.0, 0.25),
        (vec![-3.0, -0.9], 0.5, -1.0, 0.25),
    ])?;
    // The biased view: only (A, positive) and (B, negative).
    let biased_mixture = GaussianMixture::isotropic(&[
        (vec![3.0, 0.9], 0.5, 1.0, 0.5),
        (vec![-3.0, -0.9], 0.5, -1.0, 0.5),
    ])?;
    let base_mixture = GaussianMixture::diagonal(&[
        (vec![6.0, 0.0], vec![1.0, 0.25], 1.0, 0.5),
        (vec![-6.0, 0.0], vec![1.0, 0.25], -1.0, 0.5),
    ])?;

    let base = ConceptDataset::from_examples(
        0,
        sample_task_points(
            &base_mixture,
            spec.base_size,
            derive_seed(seed, "bs-base", 0),
            0,
            "b",
            &biased_lift,
            &base_truth,
            false,
        )?,
    )?;
    let mut seed_examples = sample_task_points(
        &biased_mixture,
        spec.seed_size,
        derive_seed(seed, "bs-seed", 0),
        1,
        "s",
        &biased_lift,
        &concept_truth,
        true,
    )?;
    for e in seed_examples.iter_mut() {
        e.provenance = Provenance::Seed;
    }
    let mut full_pool = sample_task_points(
        &full_mixture,
        spec.pool_size,
        derive_seed(seed, "bs-pool", 0),
        1,
        "p",
        &biased_lift,
        &concept_truth,
        true,
    )?;
    strip_labels(&mut full_pool);
    // The naive pool keeps its oracle labels: naive collection just trains
    // on more draws from the biased distribution.
    let biased_pool = sample_task_points(
        &biased_mixture,
        spec.pool_size,
        derive_seed(seed, "bs-biased", 0),
        1,
        "n",
        &biased_lift,
        &concept_truth,
        true,
    )?;
    let concept_eval = ConceptDataset::from_examples(
        1,
        sample_task_points(
            &full_mixture,
            spec.eval_size,
            derive_seed(seed, "bs-eval", 0),
            1,
            "ev",
            &biased_lift,
            &concept_truth,
            true,
        )?,
    )?;
    let base_eval = ConceptDataset::from_examples(
        0,
        sample_task_points(
            &base_mixture,
            spec.eval_size / 2,
            derive_seed(seed, "bs-beval", 0),
            0,
            "bev",
            &biased_lift,
            &base_truth,
            false,
        )?,
    )?;
    Ok(BiasedSeedTask {
        base,
        seed_examples,
        full_pool,
        biased_pool,
        concept_eval,
        base_eval,
    })
}

fn run_biased_seed(spec: &BiasedSeedSpec) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new("biased_seed", config_hash(spec));
    report.notes.push(
        "disagreement series runs the full teaching loop on an unbiased pool generator; \
         random series is naive collection from the biased seed distribution"
            .into(),
    );
    for &seed in &spec.seeds {
        let task = build_biased_seed_task(spec, seed)?;
        let eval = SessionEval {
            concept_eval: task.concept_eval.clone(),
            base_eval: Some(task.base_eval.clone()),
            threshold: 0.5,
        };

        // Teaching-loop run over the unbiased pool.
        let config = LoopConfig {
            iterations: 1,
            batch_size: spec.batch,
            prompt_size: 3,
            max_rounds: spec.rounds,
            convergence_sample: Some(3 * spec.batch),
            candidates_per_iteration: Some(3 * spec.batch),
            seed: derive_seed(seed, "bs-loop", 0),
            model_kind: ModelKind::RidgeLogistic,
            ..LoopConfig::default()
        };
        let concept_seed_ds = ConceptDataset::from_examples(1, task.seed_examples.clone())?;
        let mut state =
            SessionState::init(concept_seed_ds, vec![task.base.clone()], &config)?;
        let mut generator = Generator::pool(task.full_pool.clone(), true)?;
        let mut labeler = OracleLabeler {
            truth: biased_concept_truth(),
            membership: Membership::Always,
        };
        let outcome = engine::operationalize(
            &mut state,
            &mut generator,
            &mut labeler,
            &config,
            Some(&eval),
        )?;
        let mut points = Vec::new();
        let mut spent = 0usize;
        for r in &outcome.history {
            spent += r.labels_added;
            if let (Some(c), Some(b)) = (r.concept_accuracy, r.base_accuracy) {
                points.push(MetricPoint {
                    labels_spent: spent,
                    concept_accuracy: c,
                    base_accuracy: b,
                });
            }
        }
        report.series.push(MetricSeries {
            method: Method::Disagreement,
            seed,
            concept_id: 1,
            points,
        });
        report.extras.insert(
            format!("loop_labels_spent_seed_{seed}"),
            outcome.labels_spent as f64,
        );

        // Naive collection: equal budget drawn from the biased pool.
        let mut naive_ds = ConceptDataset::from_examples(1, task.seed_examples.clone())?;
        let mut pool = task.biased_pool.clone();
        let mut naive_points = Vec::new();
        let budget = outcome.labels_spent.max(1);
        let per_round = spec.batch;
        let mut drawn = 0usize;
        let mut round = 0u64;
        while drawn < budget {
            let take = per_round.min(budget - drawn);
            let picked = random_baseline(&pool, take, derive_seed(seed, "bs-naive", round));
            for p in &picked {
                pool.retain(|e| e.id != p.id);
                naive_ds.push(p.clone())?;
            }
            drawn += picked.len();
            round += 1;
            let global = model::train_on_union(
                &[&task.base, &naive_ds],
                &config.train,
                ModelKind::RidgeLogistic,
            )?;
            naive_points.push(MetricPoint {
                labels_spent: drawn,
                concept_accuracy: model::accuracy(&global, &task.concept_eval, 0.5)?,
                base_accuracy: model::accuracy(&global, &task.base_eval, 0.5)?,
            });
            if picked.is_empty() {
                break;
            }
        }
        report.series.push(MetricSeries {
            method: Method::Random,
            seed,
            concept_id: 1,
            points: naive_points,
        });
    }
    report.finalize();
    Ok(report)
}

// ---------------------------------------------------------------------------
// gaussians2d: elliptical base, spherical concept, interference resolution
// ---------------------------------------------------------------------------

fn gauss2d_lift(raw: &[f64]) -> Vec<f64> {
    vec![raw[0], raw[1], raw[1].powi(3) / 9.0]
}

fn gauss2d_base_mixture() -> GaussianMixture {
    GaussianMixture::diagonal(&[
        (vec![2.0, 0.0], vec![4.0, 0.25], 1.0, 0.5),
        (vec![-2.0, 0.0], vec![4.0, 0.25], -1.0, 0.5),
    ])
    .expect("static mixture")
}

fn gauss2d_concept_mixture() -> GaussianMixture {
    GaussianMixture::isotropic(&[
        (vec![0.0, -3.0], 1.0, 1.0, 0.5),
        (vec![0.0, 3.0], 1.0, -1.0, 0.5),
    ])
    .expect("static mixture")
}

fn sample_component_labeled(
    mixture: &GaussianMixture,
    n: usize,
    seed: u64,
    concept_id: usize,
    prefix: &str,
) -> Result<Vec<Example>> {
    let mut examples = sample_mixture(mixture, n, seed, concept_id, prefix)?;
    lift_examples(&mut examples, &gauss2d_lift);
    Ok(examples)
}

fn run_gaussians2d(spec: &Gaussians2dSpec) -> Result<Vec<InterferenceScenarioReport>> {
    spec.seeds.iter().map(|&s| run_gaussians2d_seed(spec, s)).collect()
}

fn run_gaussians2d_seed(spec: &Gaussians2dSpec, seed: u64) -> Result<InterferenceScenarioReport> {
    let train = TrainConfig {
        epochs: 600,
        l2_penalty: 1e-4,
        ..TrainConfig::default()
    };
    let base_mixture = gauss2d_base_mixture();
    let concept_mixture = gauss2d_concept_mixture();

    let base = ConceptDataset::from_examples(
        0,
        sample_component_labeled(
            &base_mixture,
            spec.base_size,
            derive_seed(seed, "g2-base", 0),
            0,
            "b",
        )?,
    )?;
    let concept_data = ConceptDataset::from_examples(
        1,
        sample_component_labeled(
            &concept_mixture,
            spec.concept_size,
            derive_seed(seed, "g2-concept", 0),
            1,
            "c",
        )?,
    )?;
    let mut concept_pool = sample_component_labeled(
        &concept_mixture,
        spec.concept_pool,
        derive_seed(seed, "g2-pool", 0),
        1,
        "p",
    )?;
    for e in concept_pool.iter_mut() {
        e.label = None;
        e.provenance = Provenance::Pool;
    }
    let base_eval = ConceptDataset::from_examples(
        0,
        sample_component_labeled(
            &base_mixture,
            spec.base_eval_size,
            derive_seed(seed, "g2-beval", 0),
            0,
            "bev",
        )?,
    )?;
    let base_acc_eval = ConceptDataset::from_examples(
        0,
        sample_component_labeled(
            &base_mixture,
            spec.accuracy_eval_size,
            derive_seed(seed, "g2-bacc", 0),
            0,
            "ba",
        )?,
    )?;
    let concept_acc_eval = ConceptDataset::from_examples(
        1,
        sample_component_labeled(
            &concept_mixture,
            spec.accuracy_eval_size,
            derive_seed(seed, "g2-cacc", 0),
            1,
            "ca",
        )?,
    )?;

    let mut registry = ConceptRegistry::new(base, &train, ModelKind::RidgeLogistic)?;
    let base_model_before = registry.base_model.clone();
    let base_accuracy_before = model::accuracy(&registry.global, &base_acc_eval, 0.5)?;
    let concept_accuracy_before = model::accuracy(&registry.global, &concept_acc_eval, 0.5)?;

    let concept_spec = ConceptSpec {
        concept_id: 1,
        name: "spherical pair".into(),
        membership: Membership::Always,
        distribution: concept_mixture.clone(),
    };
    registry.register_concept(concept_spec, concept_data, true, &train)?;

    let mut generators = std::collections::BTreeMap::new();
    generators.insert(1, Generator::pool(concept_pool, false)?);
    let mut labelers: std::collections::BTreeMap<usize, Box<dyn Labeler>> =
        std::collections::BTreeMap::new();
    // The base model answers for the base distribution; the concept keeps
    // its component oracle.
    labelers.insert(
        0,
        Box::new(OracleLabeler {
            truth: GroundTruth::Model {
                model: base_model_before.clone(),
                threshold: 0.5,
            },
            membership: Membership::Always,
        }),
    );
    labelers.insert(
        1,
        Box::new(OracleLabeler {
            truth: GroundTruth::NearestComponent {
                mixture: concept_mixture.clone(),
            },
            membership: Membership::Always,
        }),
    );

    let intf_config = InterferenceConfig {
        seed: derive_seed(seed, "g2-intf", 0),
        train: train.clone(),
        ..InterferenceConfig::default()
    };
    let first_run = check_interference(&mut registry, 1, &mut generators, &mut labelers, &intf_config)?;
    let second_run =
        check_interference(&mut registry, 1, &mut generators, &mut labelers, &intf_config)?;

    let (broken, fixed) =
        broken_fixed_counts(&base_model_before, &registry.global, &base_eval, 0.5)?;
    let base_accuracy_after = model::accuracy(&registry.global, &base_acc_eval, 0.5)?;
    let concept_accuracy_after = model::accuracy(&registry.global, &concept_acc_eval, 0.5)?;

    Ok(InterferenceScenarioReport {
        schema_version: 1,
        scenario: "gaussians2d".into(),
        engine_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: config_hash(spec),
        seed,
        first_run,
        second_run,
        base_eval_size: spec.base_eval_size,
        broken_on_base_eval: broken,
        fixed_on_base_eval: fixed,
        base_accuracy_before,
        base_accuracy_after,
        concept_accuracy_before,
        concept_accuracy_after,
        notes: vec![
            "base model acts as the labeler for base-region disagreements".into(),
            "concept registered as converged: its session is out of frame here".into(),
        ],
    })
}

// ---------------------------------------------------------------------------
// multi_concept: several pools against one global model
// ---------------------------------------------------------------------------

fn multi_truth() -> GroundTruth {
    GroundTruth::LinearClass {
        weights: vec![-0.3, 1.0],
        bias: 0.0,
    }
}

fn multi_concept_mixture(center_x: f64) -> Result<GaussianMixture> {
    let boundary = 0.3 * center_x;
    GaussianMixture::isotropic(&[
        (vec![center_x, boundary + 2.0], 0.8, 1.0, 0.5),
        (vec![center_x, boundary - 2.0], 0.8, -1.0, 0.5),
    ])
}

fn identity_lift(raw: &[f64]) -> Vec<f64> {
    raw.to_vec()
}

fn run_multi_concept(spec: &MultiConceptSpec) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new("multi_concept", config_hash(spec));
    report
        .notes
        .push("shared boundary sign(y - 0.3x); concepts live at distinct x offsets".into());
    let truth = multi_truth();
    let centers: Vec<f64> = (0..spec.concepts)
        .map(|j| -7.0 + 7.0 * j as f64)
        .collect();

    for &seed in &spec.seeds {
        let base_mixture = GaussianMixture::isotropic(&[
            (vec![0.0, 2.0], 0.8, 1.0, 0.5),
            (vec![0.0, -2.0], 0.8, -1.0, 0.5),
        ])?;
        let base = ConceptDataset::from_examples(
            0,
            sample_task_points(
                &base_mixture,
                spec.base_size,
                derive_seed(seed, "mc-base", 0),
                0,
                "b",
                &identity_lift,
                &truth,
                false,
            )?,
        )?;
        let base_eval = ConceptDataset::from_examples(
            0,
            sample_task_points(
                &base_mixture,
                spec.eval_size / 2,
                derive_seed(seed, "mc-beval", 0),
                0,
                "bev",
                &identity_lift,
                &truth,
                false,
            )?,
        )?;
        let mut tasks = Vec::new();
        for (j, &cx) in centers.iter().enumerate() {
            let concept_id = j + 1;
            let mixture = multi_concept_mixture(cx)?;
            let mut pool = sample_task_points(
                &mixture,
                spec.pool_size,
                derive_seed(seed, "mc-pool", concept_id as u64),
                concept_id,
                &format!("p{concept_id}"),
                &identity_lift,
                &truth,
                false,
            )?;
            strip_labels(&mut pool);
            let mut seeds_examples = sample_task_points(
                &mixture,
                10,
                derive_seed(seed, "mc-seed", concept_id as u64),
                concept_id,
                &format!("s{concept_id}"),
                &identity_lift,
                &truth,
                false,
            )?;
            for e in seeds_examples.iter_mut() {
                e.provenance = Provenance::Seed;
            }
            let eval = ConceptDataset::from_examples(
                concept_id,
                sample_task_points(
                    &mixture,
                    spec.eval_size,
                    derive_seed(seed, "mc-eval", concept_id as u64),
                    concept_id,
                    &format!("ev{concept_id}"),
                    &identity_lift,
                    &truth,
                    false,
                )?,
            )?;
            tasks.push(PoolTask {
                concept_id,
                base: base.clone(),
                pool,
                oracle: truth.clone(),
                seed_examples: seeds_examples,
                concept_eval: eval,
                base_eval: base_eval.clone(),
            });
        }
        for &method in &spec.methods {
            let cfg = PoolRunConfig {
                rounds: spec.rounds,
                batch: spec.batch,
                seed,
                ..PoolRunConfig::default()
            };
            let series = run_simultaneous_pools(&tasks, method, &cfg)?;
            report.series.extend(series);
        }
    }
    report.finalize();
    Ok(report)
}

/// Round-robin variant of the pool runner: every concept selects a batch
/// each round, then one shared global model is refit on everything.
pub fn run_simultaneous_pools(
    tasks: &[PoolTask],
    method: Method,
    cfg: &PoolRunConfig,
) -> Result<Vec<MetricSeries>> {
    use crate::engine::{default_epsilon, select_batch};
    use crate::experiment::runner::uncertainty_baseline;

    let mut concept_data: Vec<ConceptDataset> = Vec::new();
    let mut remaining: Vec<Vec<Example>> = Vec::new();
    for t in tasks {
        let mut ds = ConceptDataset::new(t.concept_id);
        for e in &t.seed_examples {
            ds.push(e.clone())?;
        }
        remaining.push(t.pool.iter().filter(|e| !ds.contains_id(&e.id)).cloned().collect());
        concept_data.push(ds);
    }
    let base = &tasks[0].base;
    let mut locals: Vec<crate::model::Model> = concept_data
        .iter()
        .map(|d| model::train(d, &cfg.train, cfg.kind))
        .collect::<Result<_>>()?;
    fn union_with_base<'a>(
        base: &'a ConceptDataset,
        concepts: &'a [ConceptDataset],
    ) -> Vec<&'a ConceptDataset> {
        let mut v = vec![base];
        v.extend(concepts.iter());
        v
    }
    let mut global = model::train_on_union(&union_with_base(base, &concept_data), &cfg.train, cfg.kind)?;
    let eps_agree = default_epsilon(cfg.kind);
    let mut labels_per_concept = vec![0usize; tasks.len()];
    let mut series: Vec<MetricSeries> = tasks
        .iter()
        .map(|t| MetricSeries {
            method,
            seed: cfg.seed,
            concept_id: t.concept_id,
            points: Vec::new(),
        })
        .collect();
    for (i, t) in tasks.iter().enumerate() {
        series[i].points.push(MetricPoint {
            labels_spent: 0,
            concept_accuracy: model::accuracy(&global, &t.concept_eval, cfg.threshold)?,
            base_accuracy: model::accuracy(&global, &t.base_eval, cfg.threshold)?,
        });
    }

    for round in 0..cfg.rounds {
        for (i, t) in tasks.iter().enumerate() {
            if remaining[i].is_empty() {
                continue;
            }
            let round_seed = derive_seed(
                cfg.seed,
                method.name(),
                (round as u64) << 8 | t.concept_id as u64,
            );
            let batch = if round == 0 {
                random_baseline(&remaining[i], cfg.batch, round_seed)
            } else {
                match method {
                    Method::Random => random_baseline(&remaining[i], cfg.batch, round_seed),
                    Method::Uncertainty => {
                        uncertainty_baseline(&global, &remaining[i], cfg.batch)?
                    }
                    Method::Disagreement => {
                        let agreement_prob = (cfg.agreement_prob_initial
                            * cfg.agreement_decay.powi(round as i32))
                        .clamp(0.0, 1.0);
                        select_batch(
                            &remaining[i],
                            &locals[i],
                            &global,
                            cfg.batch,
                            agreement_prob,
                            eps_agree,
                            round_seed,
                        )?
                        .examples
                    }
                }
            };
            for picked in batch {
                let label = t.oracle.label(&picked.features)?;
                remaining[i].retain(|e| e.id != picked.id);
                concept_data[i]
                    .push(picked.with_label(label).with_provenance(Provenance::Pool))?;
                labels_per_concept[i] += 1;
            }
        }
        for (i, d) in concept_data.iter().enumerate() {
            locals[i] = model::train(d, &cfg.train, cfg.kind)?;
        }
        global = model::train_on_union(&union_with_base(base, &concept_data), &cfg.train, cfg.kind)?;
        for (i, t) in tasks.iter().enumerate() {
            series[i].points.push(MetricPoint {
                labels_spent: labels_per_concept[i],
                concept_accuracy: model::accuracy(&global, &t.concept_eval, cfg.threshold)?,
                base_accuracy: model::accuracy(&global, &t.base_eval, cfg.threshold)?,
            });
        }
    }
    Ok(series)
}
