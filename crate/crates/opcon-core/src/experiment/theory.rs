//! Randomized verification of the two disagreement bounds: simulated
//! teaching runs must never use more queries than the closed-form
//! dimensions allow.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::minnorm::{
    self, max_disagreement_direction, prop1_bound, simulate_linear_teaching,
    simulate_sequential_teaching, LinearConceptSpec, PROP2_S_MINUS_I_INCLUDES_BASE,
};
use crate::subspace::{dot, norm, sub, Subspace, DEFAULT_TOL};
use crate::util::seeded_rng;

fn default_prop1_instances() -> usize {
    100
}
fn default_prop2_instances() -> usize {
    50
}
fn default_max_dim() -> usize {
    12
}
fn default_max_concepts() -> usize {
    4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoryConfig {
    #[serde(default = "default_prop1_instances")]
    pub prop1_instances: usize,
    #[serde(default = "default_prop2_instances")]
    pub prop2_instances: usize,
    #[serde(default = "default_max_dim")]
    pub max_dim: usize,
    #[serde(default = "default_max_concepts")]
    pub max_concepts: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        TheoryConfig {
            prop1_instances: default_prop1_instances(),
            prop2_instances: default_prop2_instances(),
            max_dim: default_max_dim(),
            max_concepts: default_max_concepts(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TheoryReport {
    pub schema_version: u32,
    pub prop1_instances: usize,
    pub prop1_violations: usize,
    pub prop1_total_queries: usize,
    pub prop1_total_bound: usize,
    /// Instances whose bound was zero and indeed ran without queries.
    pub prop1_zero_bound_instances: usize,
    pub prop2_instances: usize,
    pub prop2_violations: usize,
    pub prop2_total_interference_queries: usize,
    pub prop2_total_bound: usize,
    /// Interpretation flag: the sum-of-other-subspaces term includes the
    /// base span.
    pub s_minus_i_includes_base: bool,
}

impl TheoryReport {
    pub fn violations(&self) -> usize {
        self.prop1_violations + self.prop2_violations
    }
}

fn gaussian_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// A random subspace of roughly the requested dimension.
fn random_subspace(rng: &mut ChaCha8Rng, dim: usize, target: usize) -> Subspace {
    let vectors: Vec<Vec<f64>> = (0..target).map(|_| gaussian_vector(rng, dim)).collect();
    Subspace::orthonormalize(dim, &vectors, DEFAULT_TOL).expect("gaussian span")
}

/// Random points inside a subspace.
fn points_in(rng: &mut ChaCha8Rng, space: &Subspace, count: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| {
            let mut x = vec![0.0; space.ambient_dim()];
            for b in space.basis() {
                let coef: f64 = rng.sample(StandardNormal);
                for (xi, bi) in x.iter_mut().zip(b.iter()) {
                    *xi += coef * bi;
                }
            }
            x
        })
        .collect()
}

struct Prop1Instance {
    concept: LinearConceptSpec,
    base_x: Vec<Vec<f64>>,
    base_y: Vec<f64>,
    base_observed: Subspace,
    theta_star: Vec<f64>,
}

fn random_prop1_instance(rng: &mut ChaCha8Rng, max_dim: usize) -> Result<Prop1Instance> {
    let dim = rng.gen_range(3..=max_dim);
    let concept_dim = rng.gen_range(1..dim);
    let space = random_subspace(rng, dim, concept_dim);
    let n_obs = rng.gen_range(0..=space.dim());
    let xs = points_in(rng, &space, n_obs);
    let observed_span = Subspace::orthonormalize(dim, &xs, DEFAULT_TOL)?;
    let unobserved = space.complement_within(&observed_span)?;
    // theta_star satisfying the hypothesis: no unobserved component.
    let raw = gaussian_vector(rng, dim);
    let theta_star = sub(&raw, &unobserved.project(&raw)?);
    let observed: Vec<(Vec<f64>, f64)> = xs
        .into_iter()
        .map(|x| {
            let y = dot(&theta_star, &x);
            (x, y)
        })
        .collect();
    let concept = LinearConceptSpec::new(space, observed)?;
    let base_n = rng.gen_range(1..dim);
    let base_x: Vec<Vec<f64>> = (0..base_n).map(|_| gaussian_vector(rng, dim)).collect();
    let base_y: Vec<f64> = base_x.iter().map(|x| dot(&theta_star, x)).collect();
    let base_observed = Subspace::orthonormalize(dim, &base_x, DEFAULT_TOL)?;
    Ok(Prop1Instance {
        concept,
        base_x,
        base_y,
        base_observed,
        theta_star,
    })
}

struct Prop2Instance {
    concepts: Vec<LinearConceptSpec>,
    base_x: Vec<Vec<f64>>,
    base_y: Vec<f64>,
    theta_star: Vec<f64>,
}

fn random_prop2_instance(
    rng: &mut ChaCha8Rng,
    max_dim: usize,
    max_concepts: usize,
) -> Result<Prop2Instance> {
    let dim = rng.gen_range(4..=max_dim);
    let k = rng.gen_range(1..=max_concepts);
    // Build spaces and observed spans first; theta_star must be orthogonal
    // to every unobserved subspace, i.e. to their joint span.
    let mut spaces = Vec::new();
    let mut observed_xs = Vec::new();
    let mut joint_uno = Subspace::zero(dim);
    for _ in 0..k {
        let concept_dim = rng.gen_range(1..dim.min(5));
        let space = random_subspace(rng, dim, concept_dim);
        let n_obs = rng.gen_range(0..=space.dim());
        let xs = points_in(rng, &space, n_obs);
        let observed_span = Subspace::orthonormalize(dim, &xs, DEFAULT_TOL)?;
        let unobserved = space.complement_within(&observed_span)?;
        joint_uno = joint_uno.sum(&unobserved)?;
        spaces.push(space);
        observed_xs.push(xs);
    }
    let raw = gaussian_vector(rng, dim);
    let theta_star = sub(&raw, &joint_uno.project(&raw)?);
    let mut concepts = Vec::new();
    for (space, xs) in spaces.into_iter().zip(observed_xs) {
        let observed: Vec<(Vec<f64>, f64)> = xs
            .into_iter()
            .map(|x| {
                let y = dot(&theta_star, &x);
                (x, y)
            })
            .collect();
        concepts.push(LinearConceptSpec::new(space, observed)?);
    }
    let base_n = rng.gen_range(1..dim);
    let base_x: Vec<Vec<f64>> = (0..base_n).map(|_| gaussian_vector(rng, dim)).collect();
    let base_y: Vec<f64> = base_x.iter().map(|x| dot(&theta_star, x)).collect();
    Ok(Prop2Instance {
        concepts,
        base_x,
        base_y,
        theta_star,
    })
}

/// Run the randomized compliance sweep for both bounds.
pub fn verify_propositions(config: &TheoryConfig) -> Result<TheoryReport> {
    let mut rng = seeded_rng(config.seed);
    let mut prop1_violations = 0usize;
    let mut prop1_total_queries = 0usize;
    let mut prop1_total_bound = 0usize;
    let mut prop1_zero_bound_instances = 0usize;

    for _ in 0..config.prop1_instances {
        let instance = random_prop1_instance(&mut rng, config.max_dim)?;
        let bound = prop1_bound(&instance.concept, &instance.base_observed)?;
        let mut oracle = |space: &Subspace, local: &[f64], global: &[f64]| {
            max_disagreement_direction(space, local, global)
        };
        let trace = simulate_linear_teaching(
            &instance.concept,
            &instance.base_x,
            &instance.base_y,
            &instance.theta_star,
            &mut oracle,
        )?;
        prop1_total_queries += trace.query_count;
        prop1_total_bound += bound;
        if bound == 0 {
            prop1_zero_bound_instances += 1;
        }
        if trace.query_count > bound {
            prop1_violations += 1;
        }
        // Agreement on the concept space after teaching.
        let gap = norm(
            &instance
                .concept
                .concept_space
                .project(&sub(&trace.final_local, &trace.final_global))?,
        );
        if gap > minnorm::TEACHING_EPS {
            prop1_violations += 1;
        }
    }

    let mut prop2_violations = 0usize;
    let mut prop2_total_interference_queries = 0usize;
    let mut prop2_total_bound = 0usize;
    for _ in 0..config.prop2_instances {
        let instance = random_prop2_instance(&mut rng, config.max_dim, config.max_concepts)?;
        let outcome = simulate_sequential_teaching(
            &instance.concepts,
            &instance.base_x,
            &instance.base_y,
            &instance.theta_star,
        )?;
        prop2_total_interference_queries += outcome.interference_queries;
        prop2_total_bound += outcome.bound;
        if outcome.interference_queries > outcome.bound {
            prop2_violations += 1;
        }
    }

    Ok(TheoryReport {
        schema_version: 1,
        prop1_instances: config.prop1_instances,
        prop1_violations,
        prop1_total_queries,
        prop1_total_bound,
        prop1_zero_bound_instances,
        prop2_instances: config.prop2_instances,
        prop2_violations,
        prop2_total_interference_queries,
        prop2_total_bound,
        s_minus_i_includes_base: PROP2_S_MINUS_I_INCLUDES_BASE,
    })
}
