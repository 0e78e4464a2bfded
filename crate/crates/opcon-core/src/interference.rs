//! Regression-testing a newly taught concept against every prior concept and
//! the base data: find newfound disagreement regions, resolve them with as
//! few labels as possible, and account for what the new concept broke or
//! fixed.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::concept::{ConceptDataset, ConceptSpec, Example, Provenance};
use crate::engine::{default_epsilon, disagreement_score};
use crate::error::{Error, Result};
use crate::generator::{build_prompt, Generator};
use crate::labeler::{Labeler, LabelResponse};
use crate::model::{self, Model, ModelKind, TrainConfig};
use crate::util::derive_seed;

/// One registered concept: its spec, its dataset, and a local model trained
/// on exactly that dataset (hash-linked at training time).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RegisteredConcept {
    pub spec: ConceptSpec,
    pub dataset: ConceptDataset,
    pub local: Model,
    pub dataset_hash: String,
    pub converged: bool,
}

/// The collection a multi-user session accumulates: base data and model,
/// concepts in registration order, and the current global model.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConceptRegistry {
    pub base: ConceptDataset,
    pub base_model: Model,
    pub concepts: Vec<RegisteredConcept>,
    pub global: Model,
    pub model_kind: ModelKind,
}

impl ConceptRegistry {
    /// Train the base model on the base dataset; the global model starts as
    /// a copy of it.
    pub fn new(base: ConceptDataset, train: &TrainConfig, kind: ModelKind) -> Result<Self> {
        let base_model = model::train(&base, train, kind)?;
        Ok(ConceptRegistry {
            base,
            global: base_model.clone(),
            base_model,
            concepts: Vec::new(),
            model_kind: kind,
        })
    }

    /// Register a concept dataset: trains its local model (hash linkage by
    /// construction) and refits the global model on the full union.
    pub fn register_concept(
        &mut self,
        spec: ConceptSpec,
        dataset: ConceptDataset,
        converged: bool,
        train: &TrainConfig,
    ) -> Result<()> {
        if self.concepts.iter().any(|c| c.spec.concept_id == spec.concept_id) {
            return Err(Error::DuplicateId {
                id: format!("concept {}", spec.concept_id),
            });
        }
        let local = model::train(&dataset, train, self.model_kind)?;
        let dataset_hash = dataset.content_hash();
        self.concepts.push(RegisteredConcept {
            spec,
            dataset,
            local,
            dataset_hash,
            converged,
        });
        self.refit_global(train)
    }

    /// Retrain the global model on base plus every concept dataset.
    pub fn refit_global(&mut self, train: &TrainConfig) -> Result<()> {
        let mut datasets: Vec<&ConceptDataset> = vec![&self.base];
        datasets.extend(self.concepts.iter().map(|c| &c.dataset));
        self.global = model::train_on_union(&datasets, train, self.model_kind)?;
        Ok(())
    }

    fn concept_index(&self, concept_id: usize) -> Result<usize> {
        self.concepts
            .iter()
            .position(|c| c.spec.concept_id == concept_id)
            .ok_or(Error::UnknownConcept(concept_id))
    }
}

fn default_max_passes() -> usize {
    5
}
fn default_base_budget() -> usize {
    200
}
fn default_check_sample() -> usize {
    40
}
fn default_prompt_size() -> usize {
    3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterferenceConfig {
    /// Disagreement tolerance; defaults by model kind.
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default = "default_max_passes")]
    pub max_passes: usize,
    /// How many highest-disagreement base points stand in for D_0.
    #[serde(default = "default_base_budget")]
    pub base_budget: usize,
    /// Generated sample size per prior-concept recheck.
    #[serde(default = "default_check_sample")]
    pub check_sample: usize,
    #[serde(default = "default_prompt_size")]
    pub prompt_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub train: TrainConfig,
    /// Classification threshold (or regression tolerance) for broken/fixed
    /// accounting; defaults by model kind.
    #[serde(default)]
    pub threshold: Option<f64>,
    /// Resolve one disagreement per pass instead of batching. Defaults to
    /// true for the min-norm kind, where one constraint per refit keeps the
    /// resolution count within the linear-theory bound.
    #[serde(default)]
    pub single_query_per_pass: Option<bool>,
}

impl Default for InterferenceConfig {
    fn default() -> Self {
        InterferenceConfig {
            epsilon: None,
            max_passes: default_max_passes(),
            base_budget: default_base_budget(),
            check_sample: default_check_sample(),
            prompt_size: default_prompt_size(),
            seed: 0,
            train: TrainConfig::default(),
            threshold: None,
            single_query_per_pass: None,
        }
    }
}

impl InterferenceConfig {
    fn epsilon_for(&self, kind: ModelKind) -> f64 {
        self.epsilon.unwrap_or_else(|| default_epsilon(kind))
    }

    fn threshold_for(&self, kind: ModelKind) -> f64 {
        self.threshold.unwrap_or(match kind {
            ModelKind::RidgeLogistic => 0.5,
            ModelKind::MinNormLinear => 1e-6,
        })
    }

    fn single_query_for(&self, kind: ModelKind) -> bool {
        self.single_query_per_pass
            .unwrap_or(kind == ModelKind::MinNormLinear)
    }
}

/// Per-concept accounting of one interference run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConceptCheckReport {
    pub concept_id: usize,
    pub newfound_disagreements: usize,
    pub labels_queried: usize,
    pub resolved: bool,
    pub broken: usize,
    pub fixed: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InterferenceReport {
    pub schema_version: u32,
    pub new_concept_id: usize,
    pub passes_run: usize,
    pub resolved_all: bool,
    pub base_subsample_size: usize,
    /// Base (concept 0) first, then prior concepts in registration order.
    pub per_concept: Vec<ConceptCheckReport>,
    pub total_newfound: usize,
    pub total_labels: usize,
    /// The global model is refit once per pass, not after every recheck.
    pub refit_once_per_pass: bool,
}

impl InterferenceReport {
    /// Two-row CSV: broken / fixed counts per checked concept.
    pub fn to_csv(&self) -> String {
        let mut header = String::from("metric");
        for c in &self.per_concept {
            header.push_str(&format!(",concept_{}", c.concept_id));
        }
        let mut broken = String::from("broken_by_new_concept");
        let mut fixed = String::from("fixed_by_new_concept");
        for c in &self.per_concept {
            broken.push_str(&format!(",{}", c.broken));
            fixed.push_str(&format!(",{}", c.fixed));
        }
        format!("{header}\n{broken}\n{fixed}\n")
    }
}

/// The `budget` examples of D_0 with the largest base/global disagreement,
/// stable-sorted by (score descending, id ascending).
pub fn subsample_base(
    base: &ConceptDataset,
    base_model: &Model,
    global_model: &Model,
    budget: usize,
) -> Result<ConceptDataset> {
    if base.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if budget == 0 {
        return Err(Error::InvalidConfig("budget must be at least 1".into()));
    }
    let mut scored: Vec<(f64, &Example)> = Vec::with_capacity(base.len());
    for e in &base.examples {
        scored.push((disagreement_score(base_model, global_model, &e.features)?, e));
    }
    scored.sort_by(|(sa, ea), (sb, eb)| {
        sb.partial_cmp(sa)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| ea.id.cmp(&eb.id))
    });
    let take = budget.min(scored.len());
    let mut out = ConceptDataset::new(base.concept_id);
    for (_, e) in scored.into_iter().take(take) {
        out.push((*e).clone())?;
    }
    Ok(out)
}

/// broken = examples the old model got right and the new one gets wrong;
/// fixed = the reverse. Correctness follows the models-module threshold rule.
pub fn broken_fixed_counts(
    model_old: &Model,
    model_new: &Model,
    eval: &ConceptDataset,
    threshold: f64,
) -> Result<(usize, usize)> {
    let mut broken = 0usize;
    let mut fixed = 0usize;
    for e in &eval.examples {
        let label = e.label.ok_or_else(|| Error::UnlabeledExample {
            id: e.id.clone(),
        })?;
        let old_ok = model::example_correct(model_old, &e.features, label, threshold)?;
        let new_ok = model::example_correct(model_new, &e.features, label, threshold)?;
        match (old_ok, new_ok) {
            (true, false) => broken += 1,
            (false, true) => fixed += 1,
            _ => {}
        }
    }
    Ok((broken, fixed))
}

struct CheckTally {
    newfound: usize,
    labels: usize,
}

/// Recheck the base and every concept registered before `new_concept_id`
/// against the current global model, querying labels only where newfound
/// disagreement appears, until a full pass is clean or the pass budget runs
/// out. The global model is refit once per pass; local models are refit as
/// their datasets grow.
pub fn check_interference(
    registry: &mut ConceptRegistry,
    new_concept_id: usize,
    generators: &mut BTreeMap<usize, Generator>,
    labelers: &mut BTreeMap<usize, Box<dyn Labeler>>,
    config: &InterferenceConfig,
) -> Result<InterferenceReport> {
    let new_index = registry.concept_index(new_concept_id)?;
    if !registry.concepts[new_index].converged {
        return Err(Error::NotConverged {
            concept_id: new_concept_id,
        });
    }
    let kind = registry.model_kind;
    let eps = config.epsilon_for(kind);
    let threshold = config.threshold_for(kind);
    let single_query = config.single_query_for(kind);
    let global_before = registry.global.clone();

    // Evaluation snapshots taken before any resolution: the base subsample
    // under the incoming global model, and each prior dataset as-is.
    let base_eval = subsample_base(
        &registry.base,
        &registry.base_model,
        &registry.global,
        config.base_budget,
    )?;
    let base_subsample_size = base_eval.len();
    let prior_indices: Vec<usize> = (0..new_index).collect();
    let concept_evals: BTreeMap<usize, ConceptDataset> = prior_indices
        .iter()
        .map(|&j| {
            let c = &registry.concepts[j];
            (c.spec.concept_id, c.dataset.clone())
        })
        .collect();

    let mut tallies: BTreeMap<usize, CheckTally> = BTreeMap::new();
    tallies.insert(0, CheckTally { newfound: 0, labels: 0 });
    for &j in &prior_indices {
        tallies.insert(
            registry.concepts[j].spec.concept_id,
            CheckTally { newfound: 0, labels: 0 },
        );
    }

    let mut passes_run = 0usize;
    let mut resolved_all = false;
    let mut append_counter = 0u64;

    'passes: for pass in 0..config.max_passes {
        passes_run = pass + 1;
        let mut pass_newfound = 0usize;
        let mut pass_appended = false;

        // Base first: the base model acts as the user for P_0.
        let sub = subsample_base(
            &registry.base,
            &registry.base_model,
            &registry.global,
            config.base_budget,
        )?;
        for e in &sub.examples {
            let score = disagreement_score(&registry.base_model, &registry.global, &e.features)?;
            if score <= eps {
                continue;
            }
            let tally = tallies.get_mut(&0).expect("base tally present");
            tally.newfound += 1;
            pass_newfound += 1;
            let labeler = labelers
                .get_mut(&0)
                .ok_or(Error::UnknownConcept(0))?;
            let probe = Example::new(
                format!("intf0-{append_counter}"),
                e.features.clone(),
                0,
            )
            .with_provenance(Provenance::Interference);
            append_counter += 1;
            match labeler.query(&probe)? {
                LabelResponse::Reject => {}
                LabelResponse::Label { value } => {
                    registry.base.push(probe.with_label(value))?;
                    tally.labels += 1;
                    pass_appended = true;
                }
            }
            if single_query && pass_appended {
                registry.refit_global(&config.train)?;
                continue 'passes;
            }
        }

        // Prior concepts in registration order.
        for &j in &prior_indices {
            let concept_id = registry.concepts[j].spec.concept_id;
            let local = registry.concepts[j].local.clone();
            let global = registry.global.clone();
            let dataset = &registry.concepts[j].dataset;
            let scores: Vec<f64> = dataset
                .examples
                .iter()
                .map(|e| disagreement_score(&local, &global, &e.features))
                .collect::<Result<_>>()?;
            let m = config.prompt_size.min(dataset.len());
            let prompt_seed = derive_seed(config.seed, "intf-prompt", (pass as u64) << 16 | j as u64);
            let gen_seed = derive_seed(config.seed, "intf-gen", (pass as u64) << 16 | j as u64);
            let prompt = build_prompt(dataset, &scores, m, prompt_seed)?;
            let generator = generators
                .get_mut(&concept_id)
                .ok_or(Error::UnknownConcept(concept_id))?;
            let mut want = config.check_sample;
            if let Some(remaining) = generator.remaining() {
                want = want.min(remaining);
            }
            if want == 0 {
                continue;
            }
            let scorer = {
                let local = local.clone();
                let global = global.clone();
                move |f: &[f64]| disagreement_score(&local, &global, f).unwrap_or(0.0)
            };
            let candidates = generator.generate(&prompt, want, gen_seed, Some(&scorer))?;
            let mut appended_here = false;
            for candidate in candidates {
                if registry.concepts[j].dataset.contains_id(&candidate.id) {
                    continue;
                }
                let score = disagreement_score(&local, &global, &candidate.features)?;
                if score <= eps {
                    continue;
                }
                let tally = tallies.get_mut(&concept_id).expect("tally present");
                tally.newfound += 1;
                pass_newfound += 1;
                let labeler = labelers
                    .get_mut(&concept_id)
                    .ok_or(Error::UnknownConcept(concept_id))?;
                match labeler.query(&candidate)? {
                    LabelResponse::Reject => {}
                    LabelResponse::Label { value } => {
                        let labeled = candidate
                            .with_label(value)
                            .with_provenance(Provenance::Interference);
                        registry.concepts[j].dataset.push(labeled)?;
                        tally.labels += 1;
                        appended_here = true;
                        pass_appended = true;
                    }
                }
                if single_query && appended_here {
                    break;
                }
            }
            if appended_here {
                let c = &mut registry.concepts[j];
                c.local = model::train(&c.dataset, &config.train, kind)?;
                c.dataset_hash = c.dataset.content_hash();
            }
            if single_query && pass_appended {
                registry.refit_global(&config.train)?;
                continue 'passes;
            }
        }

        if pass_newfound == 0 {
            resolved_all = true;
            break;
        }
        if pass_appended {
            registry.refit_global(&config.train)?;
        }
    }

    // Post-run verification per concept: no residual disagreement above eps.
    let mut per_concept = Vec::new();
    {
        let final_sub = subsample_base(
            &registry.base,
            &registry.base_model,
            &registry.global,
            config.base_budget,
        )?;
        let mut worst = 0.0_f64;
        for e in &final_sub.examples {
            worst = worst.max(disagreement_score(
                &registry.base_model,
                &registry.global,
                &e.features,
            )?);
        }
        let tally = &tallies[&0];
        let (broken, fixed) =
            broken_fixed_counts(&global_before, &registry.global, &base_eval, threshold)?;
        per_concept.push(ConceptCheckReport {
            concept_id: 0,
            newfound_disagreements: tally.newfound,
            labels_queried: tally.labels,
            resolved: worst <= eps,
            broken,
            fixed,
        });
    }
    for &j in &prior_indices {
        let concept_id = registry.concepts[j].spec.concept_id;
        let local = &registry.concepts[j].local;
        let dataset = &registry.concepts[j].dataset;
        // Residual check on a fresh generated sample (peek: no consumption).
        let scores: Vec<f64> = dataset
            .examples
            .iter()
            .map(|e| disagreement_score(local, &registry.global, &e.features))
            .collect::<Result<_>>()?;
        let m = config.prompt_size.min(dataset.len());
        let prompt = build_prompt(
            dataset,
            &scores,
            m,
            derive_seed(config.seed, "intf-verify-prompt", j as u64),
        )?;
        let generator = generators
            .get_mut(&concept_id)
            .ok_or(Error::UnknownConcept(concept_id))?;
        let mut want = config.check_sample;
        if let Some(remaining) = generator.remaining() {
            want = want.min(remaining);
        }
        let resolved = if want == 0 {
            true
        } else {
            let sample = generator.generate_peek(
                &prompt,
                want,
                derive_seed(config.seed, "intf-verify", j as u64),
                None,
            )?;
            let mut worst = 0.0_f64;
            for e in &sample {
                worst = worst.max(disagreement_score(local, &registry.global, &e.features)?);
            }
            worst <= eps
        };
        let tally = &tallies[&concept_id];
        let (broken, fixed) = broken_fixed_counts(
            &global_before,
            &registry.global,
            &concept_evals[&concept_id],
            threshold,
        )?;
        per_concept.push(ConceptCheckReport {
            concept_id,
            newfound_disagreements: tally.newfound,
            labels_queried: tally.labels,
            resolved,
            broken,
            fixed,
        });
    }

    let total_newfound = per_concept.iter().map(|c| c.newfound_disagreements).sum();
    let total_labels = per_concept.iter().map(|c| c.labels_queried).sum();
    Ok(InterferenceReport {
        schema_version: 1,
        new_concept_id,
        passes_run,
        resolved_all,
        base_subsample_size,
        per_concept,
        total_newfound,
        total_labels,
        refit_once_per_pass: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::concept::{GaussianMixture, Membership};
    use crate::labeler::{GroundTruth, OracleLabeler};
    use crate::subspace::{Subspace, DEFAULT_TOL};

    fn linear_train() -> TrainConfig {
        TrainConfig::default()
    }

    fn spec_stub(concept_id: usize, name: &str) -> ConceptSpec {
        ConceptSpec {
            concept_id,
            name: name.into(),
            membership: Membership::Always,
            distribution: GaussianMixture::isotropic(&[(vec![0.0; 4], 1.0, 1.0, 1.0)]).unwrap(),
        }
    }

    fn labeled(id: &str, features: Vec<f64>, label: f64, concept_id: usize) -> Example {
        Example::new(id, features, concept_id).with_label(label)
    }

    #[test]
    fn subsample_orders_by_score_then_id() {
        // hand-built scores via 1-d linear models: score = |x|
        let old = Model::from_weights(ModelKind::MinNormLinear, vec![0.0], 0.0);
        let new = Model::from_weights(ModelKind::MinNormLinear, vec![1.0], 0.0);
        let mut base = ConceptDataset::new(0);
        for (id, x) in [("a", 0.9), ("b", 0.5), ("c", 0.5), ("d", 0.1), ("e", 0.0)] {
            base.push(labeled(id, vec![x], 0.0, 0)).unwrap();
        }
        let sub = subsample_base(&base, &old, &new, 2).unwrap();
        let ids: Vec<&str> = sub.examples.iter().map(|e| e.id.as_str()).collect();
        assert_eq!(ids, vec!["a", "b"]);
        // identical models: every score is zero, stable id order
        let sub = subsample_base(&base, &old, &old, 3).unwrap();
        let ids: Vec<&str> = sub.examples.iter().map(|e| e.id.as_str()).collect();
        assert_eq!(ids, vec!["a", "b", "c"]);
        // budget covering everything returns the whole base
        let sub = subsample_base(&base, &old, &new, 100).unwrap();
        assert_eq!(sub.len(), base.len());
    }

    #[test]
    fn broken_fixed_trivial_cases() {
        let m = Model::from_weights(ModelKind::RidgeLogistic, vec![1.0], 0.0);
        let mut eval = ConceptDataset::new(0);
        eval.push(labeled("a", vec![1.0], 1.0, 0)).unwrap();
        eval.push(labeled("b", vec![-1.0], -1.0, 0)).unwrap();
        assert_eq!(broken_fixed_counts(&m, &m, &eval, 0.5).unwrap(), (0, 0));

        // flipping the sign breaks one correct and fixes one incorrect
        let mut eval = ConceptDataset::new(0);
        eval.push(labeled("a", vec![1.0], 1.0, 0)).unwrap(); // old right
        eval.push(labeled("b", vec![1.0], -1.0, 0)).unwrap(); // old wrong
        let flipped = Model::from_weights(ModelKind::RidgeLogistic, vec![-1.0], 0.0);
        assert_eq!(broken_fixed_counts(&m, &flipped, &eval, 0.5).unwrap(), (1, 1));
    }

    /// Registry with two linear concepts sharing the e4 shortcut plus an
    /// orthogonal base; used by several tests.
    fn shortcut_registry() -> ConceptRegistry {
        let mut base = ConceptDataset::new(0);
        base.push(labeled("b0", vec![0.0, 0.0, 1.0, 0.0], 0.0, 0))
            .unwrap();
        let mut registry =
            ConceptRegistry::new(base, &linear_train(), ModelKind::MinNormLinear).unwrap();
        let mut d1 = ConceptDataset::new(1);
        d1.push(labeled("c1-0", vec![1.0, 0.0, 0.0, 1.0], 1.0, 1))
            .unwrap();
        registry
            .register_concept(spec_stub(1, "first"), d1, true, &linear_train())
            .unwrap();
        let mut d2 = ConceptDataset::new(2);
        d2.push(labeled("c2-0", vec![0.0, 1.0, 0.0, 1.0], 1.0, 2))
            .unwrap();
        registry
            .register_concept(spec_stub(2, "second"), d2, true, &linear_train())
            .unwrap();
        registry
    }

    fn pool_for(concept_id: usize, points: &[(&str, Vec<f64>)]) -> Generator {
        let items: Vec<Example> = points
            .iter()
            .map(|(id, f)| Example::new(format!("{concept_id}-{id}"), f.clone(), concept_id))
            .collect();
        Generator::pool(items, false).unwrap()
    }

    fn oracle_for(theta: Vec<f64>, space: Subspace) -> Box<dyn Labeler> {
        Box::new(OracleLabeler {
            truth: GroundTruth::LinearRegression { theta },
            membership: Membership::InSubspace {
                subspace: space,
                tol: 1e-6,
            },
        })
    }

    #[test]
    fn orthogonal_concepts_cause_no_interference() {
        // two concepts on disjoint axes, base on a third: min-norm models
        // never disagree on each other's spans
        let mut base = ConceptDataset::new(0);
        base.push(labeled("b0", vec![0.0, 0.0, 1.0], 2.0, 0)).unwrap();
        let mut registry =
            ConceptRegistry::new(base, &linear_train(), ModelKind::MinNormLinear).unwrap();
        let mut d1 = ConceptDataset::new(1);
        d1.push(labeled("c1", vec![1.0, 0.0, 0.0], 1.0, 1)).unwrap();
        registry
            .register_concept(spec_stub(1, "x"), d1, true, &linear_train())
            .unwrap();
        let mut d2 = ConceptDataset::new(2);
        d2.push(labeled("c2", vec![0.0, 1.0, 0.0], 3.0, 2)).unwrap();
        registry
            .register_concept(spec_stub(2, "y"), d2, true, &linear_train())
            .unwrap();

        let e1 = Subspace::orthonormalize(3, &[vec![1.0, 0.0, 0.0]], DEFAULT_TOL).unwrap();
        let mut generators = BTreeMap::new();
        generators.insert(1, pool_for(1, &[("p0", vec![1.0, 0.0, 0.0]), ("p1", vec![2.0, 0.0, 0.0])]));
        let mut labelers: BTreeMap<usize, Box<dyn Labeler>> = BTreeMap::new();
        labelers.insert(0, oracle_for(vec![1.0, 3.0, 2.0], Subspace::full(3)));
        labelers.insert(1, oracle_for(vec![1.0, 3.0, 2.0], e1));

        let report = check_interference(
            &mut registry,
            2,
            &mut generators,
            &mut labelers,
            &InterferenceConfig::default(),
        )
        .unwrap();
        assert!(report.resolved_all);
        assert_eq!(report.total_newfound, 0);
        assert_eq!(report.total_labels, 0);
        assert_eq!(report.passes_run, 1);
    }

    #[test]
    fn shared_shortcut_is_attributed_to_both_prior_concepts() {
        // Concepts 1 and 2 lean on the e4 direction; concept 3 pins e4 to
        // zero, so rechecking must surface newfound disagreement in both.
        let mut registry = shortcut_registry();
        let mut d3 = ConceptDataset::new(3);
        d3.push(labeled("c3-0", vec![0.0, 0.0, 0.0, 1.0], 0.0, 3))
            .unwrap();
        registry
            .register_concept(spec_stub(3, "breaker"), d3, true, &linear_train())
            .unwrap();

        let theta_star = vec![1.0, 1.0, 0.0, 0.0];
        let s1 = Subspace::orthonormalize(
            4,
            &[vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 0.0, 0.0, 1.0]],
            DEFAULT_TOL,
        )
        .unwrap();
        let s2 = Subspace::orthonormalize(
            4,
            &[vec![0.0, 1.0, 0.0, 0.0], vec![0.0, 0.0, 0.0, 1.0]],
            DEFAULT_TOL,
        )
        .unwrap();
        let mut generators = BTreeMap::new();
        generators.insert(
            1,
            pool_for(
                1,
                &[
                    ("e1", vec![1.0, 0.0, 0.0, 0.0]),
                    ("e4", vec![0.0, 0.0, 0.0, 1.0]),
                    ("mix", vec![1.0, 0.0, 0.0, 1.0]),
                ],
            ),
        );
        generators.insert(
            2,
            pool_for(
                2,
                &[
                    ("e2", vec![0.0, 1.0, 0.0, 0.0]),
                    ("e4", vec![0.0, 0.0, 0.0, 1.0]),
                    ("mix", vec![0.0, 1.0, 0.0, 1.0]),
                ],
            ),
        );
        let mut labelers: BTreeMap<usize, Box<dyn Labeler>> = BTreeMap::new();
        labelers.insert(0, oracle_for(theta_star.clone(), Subspace::full(4)));
        labelers.insert(1, oracle_for(theta_star.clone(), s1));
        labelers.insert(2, oracle_for(theta_star.clone(), s2));

        let config = InterferenceConfig {
            max_passes: 32,
            ..InterferenceConfig::default()
        };
        let report =
            check_interference(&mut registry, 3, &mut generators, &mut labelers, &config).unwrap();
        assert!(report.resolved_all, "report: {report:?}");
        let by_id: BTreeMap<usize, &ConceptCheckReport> = report
            .per_concept
            .iter()
            .map(|c| (c.concept_id, c))
            .collect();
        assert!(by_id[&1].newfound_disagreements > 0, "{report:?}");
        assert!(by_id[&2].newfound_disagreements > 0, "{report:?}");
        assert_eq!(by_id[&0].newfound_disagreements, 0);
        assert!(by_id[&1].resolved && by_id[&2].resolved);

        // cross-module check: one-at-a-time resolution stays within the
        // linear-theory interference bound
        let c1_spec = crate::minnorm::LinearConceptSpec::new(
            Subspace::orthonormalize(
                4,
                &[vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 0.0, 0.0, 1.0]],
                DEFAULT_TOL,
            )
            .unwrap(),
            vec![(vec![1.0, 0.0, 0.0, 1.0], 1.0)],
        )
        .unwrap();
        let c2_spec = crate::minnorm::LinearConceptSpec::new(
            Subspace::orthonormalize(
                4,
                &[vec![0.0, 1.0, 0.0, 0.0], vec![0.0, 0.0, 0.0, 1.0]],
                DEFAULT_TOL,
            )
            .unwrap(),
            vec![(vec![0.0, 1.0, 0.0, 1.0], 1.0)],
        )
        .unwrap();
        let base_observed =
            Subspace::orthonormalize(4, &[vec![0.0, 0.0, 1.0, 0.0]], DEFAULT_TOL).unwrap();
        let bound =
            crate::minnorm::prop2_bound(&[c1_spec, c2_spec], &base_observed).unwrap();
        assert!(
            report.total_labels <= bound,
            "labels {} exceed bound {bound}",
            report.total_labels
        );
    }

    #[test]
    fn second_run_finds_nothing_and_touches_nothing() {
        let mut registry = shortcut_registry();
        let mut d3 = ConceptDataset::new(3);
        d3.push(labeled("c3-0", vec![0.0, 0.0, 0.0, 1.0], 0.0, 3))
            .unwrap();
        registry
            .register_concept(spec_stub(3, "breaker"), d3, true, &linear_train())
            .unwrap();
        let theta_star = vec![1.0, 1.0, 0.0, 0.0];
        let s1 = Subspace::orthonormalize(
            4,
            &[vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 0.0, 0.0, 1.0]],
            DEFAULT_TOL,
        )
        .unwrap();
        let s2 = Subspace::orthonormalize(
            4,
            &[vec![0.0, 1.0, 0.0, 0.0], vec![0.0, 0.0, 0.0, 1.0]],
            DEFAULT_TOL,
        )
        .unwrap();
        let mut generators = BTreeMap::new();
        generators.insert(1, pool_for(1, &[("e1", vec![1.0, 0.0, 0.0, 0.0]), ("e4", vec![0.0, 0.0, 0.0, 1.0])]));
        generators.insert(2, pool_for(2, &[("e2", vec![0.0, 1.0, 0.0, 0.0]), ("e4", vec![0.0, 0.0, 0.0, 1.0])]));
        let mut labelers: BTreeMap<usize, Box<dyn Labeler>> = BTreeMap::new();
        labelers.insert(0, oracle_for(theta_star.clone(), Subspace::full(4)));
        labelers.insert(1, oracle_for(theta_star.clone(), s1));
        labelers.insert(2, oracle_for(theta_star.clone(), s2));
        let config = InterferenceConfig {
            max_passes: 32,
            ..InterferenceConfig::default()
        };
        let first =
            check_interference(&mut registry, 3, &mut generators, &mut labelers, &config).unwrap();
        assert!(first.resolved_all);
        let hashes: Vec<String> = registry
            .concepts
            .iter()
            .map(|c| c.dataset.content_hash())
            .collect();
        let second =
            check_interference(&mut registry, 3, &mut generators, &mut labelers, &config).unwrap();
        assert_eq!(second.total_newfound, 0);
        assert_eq!(second.passes_run, 1);
        let hashes_after: Vec<String> = registry
            .concepts
            .iter()
            .map(|c| c.dataset.content_hash())
            .collect();
        assert_eq!(hashes, hashes_after);
    }

    #[test]
    fn appends_never_rewrite_existing_examples() {
        let mut registry = shortcut_registry();
        let before: Vec<Example> = registry.concepts[0].dataset.examples.clone();
        let mut d3 = ConceptDataset::new(3);
        d3.push(labeled("c3-0", vec![0.0, 0.0, 0.0, 1.0], 0.0, 3))
            .unwrap();
        registry
            .register_concept(spec_stub(3, "breaker"), d3, true, &linear_train())
            .unwrap();
        let theta_star = vec![1.0, 1.0, 0.0, 0.0];
        let s1 = Subspace::orthonormalize(
            4,
            &[vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 0.0, 0.0, 1.0]],
            DEFAULT_TOL,
        )
        .unwrap();
        let s2 = Subspace::orthonormalize(
            4,
            &[vec![0.0, 1.0, 0.0, 0.0], vec![0.0, 0.0, 0.0, 1.0]],
            DEFAULT_TOL,
        )
        .unwrap();
        let mut generators = BTreeMap::new();
        generators.insert(1, pool_for(1, &[("e4", vec![0.0, 0.0, 0.0, 1.0])]));
        generators.insert(2, pool_for(2, &[("e4", vec![0.0, 0.0, 0.0, 1.0])]));
        let mut labelers: BTreeMap<usize, Box<dyn Labeler>> = BTreeMap::new();
        labelers.insert(0, oracle_for(theta_star.clone(), Subspace::full(4)));
        labelers.insert(1, oracle_for(theta_star.clone(), s1));
        labelers.insert(2, oracle_for(theta_star.clone(), s2));
        let config = InterferenceConfig {
            max_passes: 32,
            ..InterferenceConfig::default()
        };
        check_interference(&mut registry, 3, &mut generators, &mut labelers, &config).unwrap();
        // original prefix untouched; only appends happened
        assert_eq!(&registry.concepts[0].dataset.examples[..before.len()], &before[..]);
        assert!(registry.concepts[0].dataset.len() >= before.len());
    }

    #[test]
    fn unconverged_new_concept_is_rejected() {
        let mut registry = shortcut_registry();
        let mut d3 = ConceptDataset::new(3);
        d3.push(labeled("c3-0", vec![0.0, 0.0, 0.0, 1.0], 0.0, 3))
            .unwrap();
        registry
            .register_concept(spec_stub(3, "breaker"), d3, false, &linear_train())
            .unwrap();
        let mut generators = BTreeMap::new();
        let mut labelers: BTreeMap<usize, Box<dyn Labeler>> = BTreeMap::new();
        let err = check_interference(
            &mut registry,
            3,
            &mut generators,
            &mut labelers,
            &InterferenceConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::NotConverged { concept_id: 3 }));
    }

    #[test]
    fn csv_layout_is_two_rows() {
        let report = InterferenceReport {
            schema_version: 1,
            new_concept_id: 2,
            passes_run: 1,
            resolved_all: true,
            base_subsample_size: 10,
            per_concept: vec![
                ConceptCheckReport {
                    concept_id: 0,
                    newfound_disagreements: 0,
                    labels_queried: 0,
                    resolved: true,
                    broken: 0,
                    fixed: 1,
                },
                ConceptCheckReport {
                    concept_id: 1,
                    newfound_disagreements: 2,
                    labels_queried: 2,
                    resolved: true,
                    broken: 1,
                    fixed: 3,
                },
            ],
            total_newfound: 2,
            total_labels: 2,
            refit_once_per_pass: true,
        };
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "metric,concept_0,concept_1");
        assert_eq!(lines[1], "broken_by_new_concept,0,1");
        assert_eq!(lines[2], "fixed_by_new_concept,1,3");
    }
}
