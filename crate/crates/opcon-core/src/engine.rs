//! The concept-teaching loop: disagreement scoring, mixed
//! agreement/disagreement batch selection, generation and labeling rounds,
//! model updates, and convergence detection.
//!
//! One round runs `L` generation-labeling iterations, then refits the local
//! model on the concept data and the global model on everything. Rounds
//! repeat while the concept dataset keeps growing; convergence is declared
//! when a fresh generated sample shows no disagreement above tolerance.

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::concept::{ConceptDataset, Example};
use crate::error::{Error, Result};
use crate::generator::{build_prompt, Generator};
use crate::labeler::{Labeler, LabelerSpec, LabelResponse};
use crate::model::{self, Model, ModelKind, TrainConfig};
use crate::util::seeded_rng;

/// Score tolerance defaults: probability-scale for classifiers, raw-score
/// scale for the exact linear kind.
pub fn default_epsilon(kind: ModelKind) -> f64 {
    match kind {
        ModelKind::RidgeLogistic => 0.05,
        ModelKind::MinNormLinear => 1e-6,
    }
}

fn default_iterations() -> usize {
    3
}
fn default_batch_size() -> usize {
    10
}
fn default_prompt_size() -> usize {
    3
}
fn default_agreement_prob_initial() -> f64 {
    0.3
}
fn default_agreement_decay() -> f64 {
    0.7
}
fn default_max_rounds() -> usize {
    20
}
fn default_model_kind() -> ModelKind {
    ModelKind::RidgeLogistic
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopConfig {
    /// Generation-labeling iterations per round (L).
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    /// Labeler queries per iteration (b).
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    /// Prompt size (m), clamped to the current dataset size.
    #[serde(default = "default_prompt_size")]
    pub prompt_size: usize,
    #[serde(default = "default_agreement_prob_initial")]
    pub agreement_prob_initial: f64,
    #[serde(default = "default_agreement_decay")]
    pub agreement_decay: f64,
    #[serde(default = "default_max_rounds")]
    pub max_rounds: usize,
    /// Fresh-sample size for the convergence test; defaults to b*L.
    #[serde(default)]
    pub convergence_sample: Option<usize>,
    /// Candidates generated per iteration; defaults to 2*b.
    #[serde(default)]
    pub candidates_per_iteration: Option<usize>,
    /// Agreement-pool cutoff; defaults by model kind.
    #[serde(default)]
    pub epsilon_agree: Option<f64>,
    /// Convergence cutoff; defaults by model kind.
    #[serde(default)]
    pub epsilon_converge: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_model_kind")]
    pub model_kind: ModelKind,
    #[serde(default)]
    pub train: TrainConfig,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            iterations: default_iterations(),
            batch_size: default_batch_size(),
            prompt_size: default_prompt_size(),
            agreement_prob_initial: default_agreement_prob_initial(),
            agreement_decay: default_agreement_decay(),
            max_rounds: default_max_rounds(),
            convergence_sample: None,
            candidates_per_iteration: None,
            epsilon_agree: None,
            epsilon_converge: None,
            seed: 0,
            model_kind: default_model_kind(),
            train: TrainConfig::default(),
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.batch_size == 0 || self.prompt_size == 0 {
            return Err(Error::InvalidConfig(
                "iterations, batch_size and prompt_size must be positive".into(),
            ));
        }
        if self.max_rounds == 0 {
            return Err(Error::InvalidConfig("max_rounds must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.agreement_prob_initial) {
            return Err(Error::InvalidConfig(
                "agreement_prob_initial must lie in [0, 1]".into(),
            ));
        }
        if !(self.agreement_decay > 0.0 && self.agreement_decay <= 1.0) {
            return Err(Error::InvalidConfig(
                "agreement_decay must lie in (0, 1]".into(),
            ));
        }
        Ok(())
    }

    pub fn epsilon_agree_for(&self, kind: ModelKind) -> f64 {
        self.epsilon_agree.unwrap_or_else(|| default_epsilon(kind))
    }

    pub fn epsilon_converge_for(&self, kind: ModelKind) -> f64 {
        self.epsilon_converge
            .unwrap_or_else(|| default_epsilon(kind))
    }

    pub fn convergence_sample_size(&self) -> usize {
        self.convergence_sample
            .unwrap_or(self.iterations * self.batch_size)
    }

    pub fn candidates_per_iteration(&self) -> usize {
        self.candidates_per_iteration.unwrap_or(2 * self.batch_size)
    }

    fn agreement_prob_at(&self, round: usize) -> f64 {
        (self.agreement_prob_initial * self.agreement_decay.powi(round as i32)).clamp(0.0, 1.0)
    }
}

/// |global(x) - local(x)| on raw scores (linear) or class probabilities
/// (classifier).
pub fn disagreement_score(local: &Model, global: &Model, x: &[f64]) -> Result<f64> {
    Ok((model::predict(global, x)? - model::predict(local, x)?).abs())
}

/// True iff no sample point shows disagreement at or above `epsilon`.
pub fn has_converged(
    local: &Model,
    global: &Model,
    sample: &[Example],
    epsilon: f64,
) -> Result<bool> {
    if sample.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut max = 0.0_f64;
    for e in sample {
        max = max.max(disagreement_score(local, global, &e.features)?);
    }
    Ok(max < epsilon)
}

#[derive(Clone, Debug)]
pub struct SelectedBatch {
    pub examples: Vec<Example>,
    /// Set when fewer candidates than requested were available.
    pub shortfall: bool,
}

/// Pick `b` candidates without replacement. Each slot samples the agreement
/// pool (scores below `epsilon_agree`, uniform) with probability
/// `agreement_prob` and otherwise draws proportionally to the disagreement
/// score; an empty pool falls back to the other one. Candidates are ranked
/// in stable id order so equal seeds give identical batches.
pub fn select_batch(
    candidates: &[Example],
    local: &Model,
    global: &Model,
    b: usize,
    agreement_prob: f64,
    epsilon_agree: f64,
    seed: u64,
) -> Result<SelectedBatch> {
    if candidates.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(0.0..=1.0).contains(&agreement_prob) {
        return Err(Error::InvalidConfig(
            "agreement_prob must lie in [0, 1]".into(),
        ));
    }
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &z| candidates[a].id.cmp(&candidates[z].id));

    if b >= candidates.len() {
        return Ok(SelectedBatch {
            examples: order.iter().map(|&i| candidates[i].clone()).collect(),
            shortfall: b > candidates.len(),
        });
    }

    let mut scores = Vec::with_capacity(candidates.len());
    for e in candidates {
        scores.push(disagreement_score(local, global, &e.features)?);
    }
    let mut agree: Vec<usize> = order
        .iter()
        .cloned()
        .filter(|&i| scores[i] < epsilon_agree)
        .collect();
    let mut disagree: Vec<usize> = order
        .iter()
        .cloned()
        .filter(|&i| scores[i] >= epsilon_agree)
        .collect();

    let mut rng = seeded_rng(seed);
    let mut picked = Vec::with_capacity(b);
    for _ in 0..b {
        let from_agreement = rng.gen::<f64>() < agreement_prob;
        let idx = if from_agreement {
            draw_uniform(&mut agree, &mut rng)
                .or_else(|| draw_proportional(&mut disagree, &scores, &mut rng))
        } else {
            draw_proportional(&mut disagree, &scores, &mut rng)
                .or_else(|| draw_uniform(&mut agree, &mut rng))
        };
        match idx {
            Some(i) => picked.push(candidates[i].clone()),
            None => break,
        }
    }
    Ok(SelectedBatch {
        examples: picked,
        shortfall: false,
    })
}

fn draw_uniform(pool: &mut Vec<usize>, rng: &mut ChaCha8Rng) -> Option<usize> {
    if pool.is_empty() {
        return None;
    }
    let pos = rng.gen_range(0..pool.len());
    Some(pool.remove(pos))
}

fn draw_proportional(pool: &mut Vec<usize>, scores: &[f64], rng: &mut ChaCha8Rng) -> Option<usize> {
    if pool.is_empty() {
        return None;
    }
    let total: f64 = pool.iter().map(|&i| scores[i]).sum();
    if total <= 0.0 {
        return draw_uniform_any(pool, rng);
    }
    let mut u = rng.gen::<f64>() * total;
    let mut pos = pool.len() - 1;
    for (p, &i) in pool.iter().enumerate() {
        u -= scores[i];
        if u < 0.0 {
            pos = p;
            break;
        }
    }
    Some(pool.remove(pos))
}

fn draw_uniform_any(pool: &mut Vec<usize>, rng: &mut ChaCha8Rng) -> Option<usize> {
    if pool.is_empty() {
        None
    } else {
        let pos = rng.gen_range(0..pool.len());
        Some(pool.remove(pos))
    }
}

/// Per-round audit entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub agreement_prob: f64,
    pub generated: usize,
    pub disagreements_generated: usize,
    pub labels_added: usize,
    pub rejections: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub concept_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base_accuracy: Option<f64>,
}

/// Held-out evaluation sets for accuracy snapshots in the round history.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SessionEval {
    pub concept_eval: ConceptDataset,
    pub base_eval: Option<ConceptDataset>,
    /// Probability cut for classifiers, absolute tolerance for regression.
    pub threshold: f64,
}

/// Everything a session needs to continue: datasets, models, loop position,
/// and the RNG stream.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SessionState {
    pub concept: ConceptDataset,
    pub priors: Vec<ConceptDataset>,
    pub local: Model,
    pub global: Model,
    pub round: usize,
    pub iteration: usize,
    pub agreement_prob: f64,
    pub labels_spent: usize,
    pub rejections: usize,
    pub history: Vec<RoundRecord>,
    pub rng: ChaCha8Rng,
}

impl SessionState {
    /// Train the initial local model on the seed concept data and the global
    /// model on the prior datasets (base plus earlier concepts).
    pub fn init(
        concept: ConceptDataset,
        priors: Vec<ConceptDataset>,
        config: &LoopConfig,
    ) -> Result<Self> {
        config.validate()?;
        if concept.labeled_count() == 0 {
            return Err(Error::EmptyDataset);
        }
        let local = model::train(&concept, &config.train, config.model_kind)?;
        let prior_refs: Vec<&ConceptDataset> = priors.iter().collect();
        if prior_refs.iter().all(|d| d.is_empty()) {
            return Err(Error::EmptyDataset);
        }
        let global = model::train_on_union(&prior_refs, &config.train, config.model_kind)?;
        Ok(SessionState {
            concept,
            priors,
            local,
            global,
            round: 0,
            iteration: 0,
            agreement_prob: config.agreement_prob_at(0),
            labels_spent: 0,
            rejections: 0,
            history: Vec::new(),
            rng: seeded_rng(config.seed),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeReason {
    Converged,
    MaxRounds,
    NoProgress,
    GeneratorExhausted,
}

/// Audit record of a finished session.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SessionOutcome {
    pub converged: bool,
    pub reason: OutcomeReason,
    pub rounds_run: usize,
    pub labels_spent: usize,
    pub rejections: usize,
    pub history: Vec<RoundRecord>,
    pub final_dataset: ConceptDataset,
}

enum ConvergenceProbe {
    Converged,
    NotConverged,
    Exhausted,
}

fn convergence_probe(
    state: &mut SessionState,
    gen: &mut Generator,
    config: &LoopConfig,
    eps_converge: f64,
) -> Result<ConvergenceProbe> {
    let mut want = config.convergence_sample_size();
    if let Some(remaining) = gen.remaining() {
        want = want.min(remaining);
        if want == 0 {
            return Ok(ConvergenceProbe::Exhausted);
        }
    }
    let scores = prompt_scores(state)?;
    let m = config.prompt_size.min(state.concept.len());
    let prompt_seed = state.rng.gen::<u64>();
    let gen_seed = state.rng.gen::<u64>();
    let prompt = build_prompt(&state.concept, &scores, m, prompt_seed)?;
    let local = state.local.clone();
    let global = state.global.clone();
    let scorer = move |f: &[f64]| disagreement_score(&local, &global, f).unwrap_or(0.0);
    let sample = gen.generate_peek(&prompt, want, gen_seed, Some(&scorer))?;
    if has_converged(&state.local, &state.global, &sample, eps_converge)? {
        Ok(ConvergenceProbe::Converged)
    } else {
        Ok(ConvergenceProbe::NotConverged)
    }
}

fn prompt_scores(state: &SessionState) -> Result<Vec<f64>> {
    state
        .concept
        .examples
        .iter()
        .map(|e| disagreement_score(&state.local, &state.global, &e.features))
        .collect()
}

fn refit_models(state: &mut SessionState, config: &LoopConfig) -> Result<()> {
    state.local = if config.train.warm_start {
        model::finetune(&state.local, &state.concept, &config.train)?
    } else {
        model::train(&state.concept, &config.train, config.model_kind)?
    };
    let mut refs: Vec<&Example> = Vec::new();
    for p in &state.priors {
        refs.extend(p.examples.iter());
    }
    refs.extend(state.concept.examples.iter());
    state.global = if config.train.warm_start {
        model::finetune_on_examples(&state.global, &refs, &config.train)?
    } else {
        model::train_on_examples(&refs, &config.train, config.model_kind)?
    };
    Ok(())
}

fn snapshot_accuracy(state: &SessionState, eval: Option<&SessionEval>) -> (Option<f64>, Option<f64>) {
    match eval {
        None => (None, None),
        Some(ev) => {
            let concept_acc = model::accuracy(&state.global, &ev.concept_eval, ev.threshold).ok();
            let base_acc = ev
                .base_eval
                .as_ref()
                .and_then(|b| model::accuracy(&state.global, b, ev.threshold).ok());
            (concept_acc, base_acc)
        }
    }
}

/// Run the teaching loop until convergence, exhaustion, or the round budget.
///
/// The state is mutated in place so a caller can checkpoint it when the
/// labeler stream closes mid-session ([`Error::LabelerClosed`] or
/// [`Error::ScriptExhausted`] propagate with the state intact).
pub fn operationalize(
    state: &mut SessionState,
    gen: &mut Generator,
    labeler: &mut dyn Labeler,
    config: &LoopConfig,
    eval: Option<&SessionEval>,
) -> Result<SessionOutcome> {
    config.validate()?;
    let kind = config.model_kind;
    let eps_agree = config.epsilon_agree_for(kind);
    let eps_converge = config.epsilon_converge_for(kind);

    let reason = 'session: loop {
        match convergence_probe(state, gen, config, eps_converge)? {
            ConvergenceProbe::Converged => break 'session OutcomeReason::Converged,
            ConvergenceProbe::Exhausted => break 'session OutcomeReason::GeneratorExhausted,
            ConvergenceProbe::NotConverged => {}
        }
        if state.round >= config.max_rounds {
            break 'session OutcomeReason::MaxRounds;
        }

        let labels_before = state.labels_spent;
        let rejects_before = state.rejections;
        let mut generated = 0usize;
        let mut disagreements_generated = 0usize;
        let mut exhausted = false;

        while state.iteration < config.iterations {
            let mut count = config.candidates_per_iteration();
            if let Some(remaining) = gen.remaining() {
                count = count.min(remaining);
                if count == 0 {
                    exhausted = true;
                    break;
                }
            }
            let scores = prompt_scores(state)?;
            let m = config.prompt_size.min(state.concept.len());
            let prompt_seed = state.rng.gen::<u64>();
            let gen_seed = state.rng.gen::<u64>();
            let batch_seed = state.rng.gen::<u64>();
            let prompt = build_prompt(&state.concept, &scores, m, prompt_seed)?;
            let local = state.local.clone();
            let global = state.global.clone();
            let scorer =
                move |f: &[f64]| disagreement_score(&local, &global, f).unwrap_or(0.0);
            let candidates = gen.generate(&prompt, count, gen_seed, Some(&scorer))?;
            generated += candidates.len();
            for c in &candidates {
                if disagreement_score(&state.local, &state.global, &c.features)? >= eps_converge {
                    disagreements_generated += 1;
                }
            }
            let batch = select_batch(
                &candidates,
                &state.local,
                &state.global,
                config.batch_size,
                state.agreement_prob,
                eps_agree,
                batch_seed,
            )?;
            for example in batch.examples {
                if state.concept.contains_id(&example.id) {
                    // Non-consuming pools can re-offer items already taken.
                    continue;
                }
                match labeler.query(&example)? {
                    LabelResponse::Reject => state.rejections += 1,
                    LabelResponse::Label { value } => {
                        state.concept.push(example.with_label(value))?;
                        state.labels_spent += 1;
                    }
                }
            }
            state.iteration += 1;
        }
        state.iteration = 0;

        refit_models(state, config)?;
        state.concept.mark_round(state.round);
        let (concept_accuracy, base_accuracy) = snapshot_accuracy(state, eval);
        state.history.push(RoundRecord {
            round: state.round,
            agreement_prob: state.agreement_prob,
            generated,
            disagreements_generated,
            labels_added: state.labels_spent - labels_before,
            rejections: state.rejections - rejects_before,
            concept_accuracy,
            base_accuracy,
        });
        state.round += 1;
        state.agreement_prob = config.agreement_prob_at(state.round);

        if exhausted {
            break 'session OutcomeReason::GeneratorExhausted;
        }
        if state.labels_spent == labels_before {
            // The dataset did not grow this round; take a final verdict.
            break 'session match convergence_probe(state, gen, config, eps_converge)? {
                ConvergenceProbe::Converged => OutcomeReason::Converged,
                _ => OutcomeReason::NoProgress,
            };
        }
    };

    Ok(SessionOutcome {
        converged: reason == OutcomeReason::Converged,
        reason,
        rounds_run: state.round,
        labels_spent: state.labels_spent,
        rejections: state.rejections,
        history: state.history.clone(),
        final_dataset: state.concept.clone(),
    })
}

/// On-disk session snapshot; everything but the labeler streams.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SessionCheckpoint {
    pub schema_version: u32,
    pub state: SessionState,
    pub generator: Generator,
    pub config: LoopConfig,
    pub labeler: LabelerSpec,
}

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

pub fn save_checkpoint(checkpoint: &SessionCheckpoint, path: &Path) -> Result<()> {
    let bytes = serde_json::to_vec_pretty(checkpoint)?;
    crate::util::write_atomic(path, &bytes)
}

pub fn load_checkpoint(path: &Path) -> Result<SessionCheckpoint> {
    let bytes = std::fs::read(path)?;
    let checkpoint: SessionCheckpoint = serde_json::from_slice(&bytes).map_err(|e| {
        Error::InvalidConfig(format!("checkpoint schema error in {}: {e}", path.display()))
    })?;
    if checkpoint.schema_version != CHECKPOINT_SCHEMA_VERSION {
        return Err(Error::InvalidConfig(format!(
            "checkpoint schema version {} unsupported (expected {})",
            checkpoint.schema_version, CHECKPOINT_SCHEMA_VERSION
        )));
    }
    Ok(checkpoint)
}
