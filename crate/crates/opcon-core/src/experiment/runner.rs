//! Pool-based selection runs: the engine's disagreement selection against
//! random and uncertainty-sampling baselines, with accuracy snapshots after
//! every model update.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::concept::{ConceptDataset, Example, Provenance};
use crate::engine::{select_batch, default_epsilon};
use crate::error::{Error, Result};
use crate::experiment::report::{Method, MetricPoint, MetricSeries};
use crate::labeler::GroundTruth;
use crate::model::{self, Model, ModelKind, TrainConfig};
use crate::util::{derive_seed, seeded_rng};

/// One pool-selection task: labeled base data, an unlabeled concept pool, a
/// labeling oracle, and held-out evaluation sets.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PoolTask {
    pub concept_id: usize,
    pub base: ConceptDataset,
    pub pool: Vec<Example>,
    pub oracle: GroundTruth,
    pub seed_examples: Vec<Example>,
    pub concept_eval: ConceptDataset,
    pub base_eval: ConceptDataset,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolRunConfig {
    pub rounds: usize,
    pub batch: usize,
    pub kind: ModelKind,
    pub train: TrainConfig,
    pub agreement_prob_initial: f64,
    pub agreement_decay: f64,
    /// Classification threshold for accuracy snapshots.
    pub threshold: f64,
    pub seed: u64,
}

impl Default for PoolRunConfig {
    fn default() -> Self {
        PoolRunConfig {
            rounds: 8,
            batch: 10,
            kind: ModelKind::RidgeLogistic,
            train: TrainConfig::default(),
            agreement_prob_initial: 0.3,
            agreement_decay: 0.7,
            threshold: 0.5,
            seed: 0,
        }
    }
}

/// The `b` pool points with the lowest top-class confidence, i.e. the
/// smallest |p - 0.5| margin, tie-broken by id. Errors for regression
/// models, where confidence is undefined.
pub fn uncertainty_baseline(model: &Model, pool: &[Example], b: usize) -> Result<Vec<Example>> {
    if model.kind != ModelKind::RidgeLogistic {
        return Err(Error::UncertaintyNeedsClassifier);
    }
    let mut scored: Vec<(f64, &Example)> = Vec::with_capacity(pool.len());
    for e in pool {
        let p = model::predict(model, &e.features)?;
        scored.push(((p - 0.5).abs(), e));
    }
    scored.sort_by(|(ma, ea), (mb, eb)| {
        ma.partial_cmp(mb)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| ea.id.cmp(&eb.id))
    });
    Ok(scored
        .into_iter()
        .take(b.min(pool.len()))
        .map(|(_, e)| e.clone())
        .collect())
}

/// Uniform draw of `b` distinct pool points.
pub fn random_baseline(pool: &[Example], b: usize, seed: u64) -> Vec<Example> {
    let mut rng = seeded_rng(seed);
    let mut indices: Vec<usize> = (0..pool.len()).collect();
    let take = b.min(pool.len());
    let mut out = Vec::with_capacity(take);
    for _ in 0..take {
        let pos = rng.gen_range(0..indices.len());
        out.push(pool[indices.remove(pos)].clone());
    }
    out
}

/// Run one selection method over the task for the configured rounds,
/// retraining local and global models after every batch and snapshotting
/// held-out accuracy. The first batch is uniform for every method so the
/// comparison starts from identical footing.
pub fn run_pool_method(task: &PoolTask, method: Method, cfg: &PoolRunConfig) -> Result<MetricSeries> {
    let mut concept = ConceptDataset::new(task.concept_id);
    for e in &task.seed_examples {
        concept.push(e.clone())?;
    }
    let mut local = model::train(&concept, &cfg.train, cfg.kind)?;
    let mut global = model::train_on_union(&[&task.base, &concept], &cfg.train, cfg.kind)?;

    let mut remaining: Vec<Example> = task
        .pool
        .iter()
        .filter(|e| !concept.contains_id(&e.id))
        .cloned()
        .collect();
    let eps_agree = default_epsilon(cfg.kind);
    let mut labels_spent = 0usize;
    let mut points = vec![snapshot(&global, task, cfg, labels_spent)?];

    for round in 0..cfg.rounds {
        if remaining.is_empty() {
            break;
        }
        let round_seed = derive_seed(cfg.seed, method.name(), round as u64);
        let batch = if round == 0 {
            random_baseline(&remaining, cfg.batch, round_seed)
        } else {
            match method {
                Method::Random => random_baseline(&remaining, cfg.batch, round_seed),
                Method::Uncertainty => uncertainty_baseline(&global, &remaining, cfg.batch)?,
                Method::Disagreement => {
                    let agreement_prob = (cfg.agreement_prob_initial
                        * cfg.agreement_decay.powi(round as i32))
                    .clamp(0.0, 1.0);
                    select_batch(
                        &remaining,
                        &local,
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
            let label = task.oracle.label(&picked.features)?;
            remaining.retain(|e| e.id != picked.id);
            concept.push(
                picked
                    .with_label(label)
                    .with_provenance(Provenance::Pool),
            )?;
            labels_spent += 1;
        }
        local = model::train(&concept, &cfg.train, cfg.kind)?;
        global = model::train_on_union(&[&task.base, &concept], &cfg.train, cfg.kind)?;
        points.push(snapshot(&global, task, cfg, labels_spent)?);
    }

    Ok(MetricSeries {
        method,
        seed: cfg.seed,
        concept_id: task.concept_id,
        points,
    })
}

fn snapshot(
    global: &Model,
    task: &PoolTask,
    cfg: &PoolRunConfig,
    labels_spent: usize,
) -> Result<MetricPoint> {
    Ok(MetricPoint {
        labels_spent,
        concept_accuracy: model::accuracy(global, &task.concept_eval, cfg.threshold)?,
        base_accuracy: model::accuracy(global, &task.base_eval, cfg.threshold)?,
    })
}

/// Labels needed to first reach `target` concept accuracy, if the series
/// ever does.
pub fn labels_to_reach(series: &MetricSeries, target: f64) -> Option<usize> {
    series
        .points
        .iter()
        .find(|p| p.concept_accuracy >= target)
        .map(|p| p.labels_spent)
}
