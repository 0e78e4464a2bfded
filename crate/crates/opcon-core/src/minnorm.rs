//! Min-norm interpolation and the disagreement bounds for noiseless
//! overparametrized linear regression, plus teaching-loop simulations that
//! verify the bounds empirically.
//!
//! A concept lives on a subspace `S`; training examples span the observed
//! part `S_obv`, the rest of `S` is unobserved (`S_uno`), and the ambient
//! complement of `S` is invariant (`S_inv`). Local and global predictors are
//! min-L2-norm interpolants of their respective training sets, and they can
//! only disagree on concept directions with an unobserved component.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::subspace::{dot, norm, sub, Subspace, DEFAULT_TOL, RANK_TOL_REL};

/// Maximum absolute local/global prediction gap tolerated on the concept
/// space before the teaching loop declares agreement.
pub const TEACHING_EPS: f64 = 1e-8;

/// A concept subspace together with its observed data and the derived
/// observed / unobserved / invariant decomposition.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LinearConceptSpec {
    pub concept_space: Subspace,
    pub observed: Vec<(Vec<f64>, f64)>,
    pub derived_observed: Subspace,
    pub derived_unobserved: Subspace,
    pub derived_invariant: Subspace,
}

impl LinearConceptSpec {
    /// Build the decomposition from a concept space and observed (x, y)
    /// pairs. Every observed x must lie in the concept space to 1e-9.
    pub fn new(concept_space: Subspace, observed: Vec<(Vec<f64>, f64)>) -> Result<Self> {
        let dim = concept_space.ambient_dim();
        for (x, _) in &observed {
            if x.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: x.len(),
                });
            }
            let residual = concept_space.residual_norm(x)?;
            if residual > 1e-9 * norm(x).max(1.0) {
                return Err(Error::NotContained { residual });
            }
        }
        let xs: Vec<Vec<f64>> = observed.iter().map(|(x, _)| x.clone()).collect();
        let derived_observed = Subspace::orthonormalize(dim, &xs, DEFAULT_TOL)?;
        let derived_unobserved = concept_space.complement_within(&derived_observed)?;
        let derived_invariant = concept_space.complement();
        Ok(LinearConceptSpec {
            concept_space,
            observed,
            derived_observed,
            derived_unobserved,
            derived_invariant,
        })
    }

    pub fn ambient_dim(&self) -> usize {
        self.concept_space.ambient_dim()
    }
}

/// Minimum-L2-norm solution of `X theta = y`.
///
/// The system must be consistent: rank([X|y]) has to equal rank(X) under the
/// shared relative tolerance, otherwise the least-squares residual is
/// reported. An empty system returns the zero vector.
pub fn min_norm_interpolant(dim: usize, rows: &[Vec<f64>], targets: &[f64]) -> Result<Vec<f64>> {
    if rows.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            expected: rows.len(),
            got: targets.len(),
        });
    }
    if rows.is_empty() {
        return Ok(vec![0.0; dim]);
    }
    for r in rows {
        if r.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: r.len(),
            });
        }
    }
    let n = rows.len();
    let x = DMatrix::from_fn(n, dim, |r, c| rows[r][c]);
    let svd = x.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd requested u");
    let v_t = svd.v_t.as_ref().expect("svd requested v_t");
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let threshold = RANK_TOL_REL * sigma_max;

    let mut theta = vec![0.0; dim];
    let mut rank_x = 0usize;
    for (i, &sigma) in svd.singular_values.iter().enumerate() {
        if sigma > threshold {
            rank_x += 1;
            let ui_y: f64 = (0..n).map(|r| u[(r, i)] * targets[r]).sum();
            let coef = ui_y / sigma;
            for c in 0..dim {
                theta[c] += coef * v_t[(i, c)];
            }
        }
    }

    // Consistency: rank of the augmented matrix must not exceed rank(X).
    let aug = DMatrix::from_fn(n, dim + 1, |r, c| if c < dim { rows[r][c] } else { targets[r] });
    let aug_svd = aug.svd(false, false);
    let aug_sigma_max = aug_svd
        .singular_values
        .iter()
        .cloned()
        .fold(0.0_f64, f64::max);
    let aug_threshold = RANK_TOL_REL * aug_sigma_max;
    let rank_aug = aug_svd
        .singular_values
        .iter()
        .filter(|&&s| s > aug_threshold)
        .count();
    if rank_aug > rank_x {
        let residual = residual_norm(rows, targets, &theta);
        return Err(Error::InconsistentSystem { residual });
    }
    Ok(theta)
}

fn residual_norm(rows: &[Vec<f64>], targets: &[f64], theta: &[f64]) -> f64 {
    rows.iter()
        .zip(targets.iter())
        .map(|(r, &t)| {
            let e = dot(r, theta) - t;
            e * e
        })
        .sum::<f64>()
        .sqrt()
}

/// Maximum number of local/global disagreements while teaching a single
/// concept against a fixed base span:
/// dim(proj_{S0obv}(S_uno ∩ (S_uno ∩ S0obv)^⊥)).
pub fn prop1_bound(concept: &LinearConceptSpec, base_observed: &Subspace) -> Result<usize> {
    let uno = &concept.derived_unobserved;
    let shared = uno.intersect(base_observed)?;
    let reduced = uno.complement_within(&shared)?;
    base_observed.projection_dim(&reduced)
}

/// Maximum number of interference-resolution additions across a set of
/// concepts: sum over i of
/// dim(proj_{S_-i}(S_i^uno ∩ (S_i^uno ∩ S_{0:k}^obv)^⊥)), where S_-i sums
/// every other concept's full space plus the base span.
///
/// Whether S_-i includes the base span is an interpretation choice; this
/// implementation includes it and reports carry that flag.
pub const PROP2_S_MINUS_I_INCLUDES_BASE: bool = true;

pub fn prop2_bound(concepts: &[LinearConceptSpec], base_observed: &Subspace) -> Result<usize> {
    let mut observed_all = base_observed.clone();
    for c in concepts {
        observed_all = observed_all.sum(&c.derived_observed)?;
    }
    let mut total = 0usize;
    for (i, c) in concepts.iter().enumerate() {
        let mut s_minus_i = base_observed.clone();
        for (j, other) in concepts.iter().enumerate() {
            if j != i {
                s_minus_i = s_minus_i.sum(&other.concept_space)?;
            }
        }
        let uno = &c.derived_unobserved;
        let shared = uno.intersect(&observed_all)?;
        let reduced = uno.complement_within(&shared)?;
        total += s_minus_i.projection_dim(&reduced)?;
    }
    Ok(total)
}

/// Which model a teaching query ended up correcting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdatedModel {
    Local,
    Global,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TeachingQuery {
    pub vector: Vec<f64>,
    pub label: f64,
    pub updated: UpdatedModel,
}

/// Audit record of a simulated teaching session.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TeachingTrace {
    pub queries: Vec<TeachingQuery>,
    pub final_local: Vec<f64>,
    pub final_global: Vec<f64>,
    pub query_count: usize,
}

/// A procedure that proposes a concept-space direction where the local and
/// global parameter vectors disagree, or `None` when it cannot find one.
pub type DirectionOracle<'a> = dyn FnMut(&Subspace, &[f64], &[f64]) -> Option<Vec<f64>> + 'a;

/// Default oracle: the unit vector of the concept space with the largest
/// absolute prediction gap, which is the normalized projection of the
/// parameter difference onto the concept space.
///
/// Querying this exact maximizer (rather than scanning a fixed basis) is
/// what keeps the query count within the disagreement bound: with
/// non-orthogonal unobserved overlaps, a basis vector can leave residual
/// disagreement behind that costs extra queries.
pub fn max_disagreement_direction(
    space: &Subspace,
    local: &[f64],
    global: &[f64],
) -> Option<Vec<f64>> {
    let diff = sub(local, global);
    let projected = space.project(&diff).ok()?;
    let gap = norm(&projected);
    if gap <= 1e-12 {
        return None;
    }
    let mut unit: Vec<f64> = projected.iter().map(|x| x / gap).collect();
    // Sign-canonical like subspace bases, so reported directions are stable.
    let mut lead = 0.0_f64;
    for &x in &unit {
        if x.abs() > lead.abs() {
            lead = x;
        }
    }
    if lead < 0.0 {
        for x in &mut unit {
            *x = -*x;
        }
    }
    Some(unit)
}

/// Run the disagreement-query loop for one concept against base data.
///
/// Both models are refit as min-norm interpolants after every labeled query;
/// labels come from `theta_star` exactly (noiseless oracle). Requires
/// Proposition 1's hypothesis proj_{S_uno}(theta_star) = 0 so that queries
/// only ever constrain the global model. Terminates when the models agree on
/// the whole concept space to [`TEACHING_EPS`].
pub fn simulate_linear_teaching(
    concept: &LinearConceptSpec,
    base_x: &[Vec<f64>],
    base_y: &[f64],
    theta_star: &[f64],
    oracle: &mut DirectionOracle,
) -> Result<TeachingTrace> {
    let dim = concept.ambient_dim();
    if theta_star.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: theta_star.len(),
        });
    }
    let hyp = norm(&concept.derived_unobserved.project(theta_star)?);
    if hyp > 1e-9 * norm(theta_star).max(1.0) {
        return Err(Error::InvalidConfig(format!(
            "theta_star has nonzero unobserved projection ({hyp:.3e}); the disagreement bound requires it to vanish"
        )));
    }
    // Base data must be consistent on its own.
    min_norm_interpolant(dim, base_x, base_y)?;

    let mut concept_x: Vec<Vec<f64>> = concept.observed.iter().map(|(x, _)| x.clone()).collect();
    let mut concept_y: Vec<f64> = concept.observed.iter().map(|(_, y)| *y).collect();
    let mut queries = Vec::new();

    loop {
        let local = min_norm_interpolant(dim, &concept_x, &concept_y)?;
        let global = {
            let mut rows = base_x.to_vec();
            rows.extend(concept_x.iter().cloned());
            let mut ys = base_y.to_vec();
            ys.extend(concept_y.iter().cloned());
            min_norm_interpolant(dim, &rows, &ys)?
        };
        let gap = norm(&concept.concept_space.project(&sub(&local, &global))?);
        if gap <= TEACHING_EPS {
            return Ok(TeachingTrace {
                query_count: queries.len(),
                queries,
                final_local: local,
                final_global: global,
            });
        }
        let u = match oracle(&concept.concept_space, &local, &global) {
            Some(u) => u,
            None => return Err(Error::SearchFailure { gap }),
        };
        if queries.len() > dim {
            // Every query adds an independent direction, so more queries than
            // ambient dimensions means the oracle is feeding dependent ones.
            return Err(Error::SearchFailure { gap });
        }
        let label = dot(theta_star, &u);
        let updated = if (label - dot(&local, &u)).abs() <= TEACHING_EPS {
            UpdatedModel::Global
        } else {
            UpdatedModel::Local
        };
        queries.push(TeachingQuery {
            vector: u.clone(),
            label,
            updated,
        });
        concept_x.push(u);
        concept_y.push(label);
    }
}

/// Outcome of sequentially teaching several concepts and resolving the
/// interference each new concept causes in the previously taught ones.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SequentialTeachingOutcome {
    pub teaching_queries: usize,
    pub interference_queries: usize,
    pub per_concept_teaching: Vec<usize>,
    pub per_concept_interference: Vec<usize>,
    pub bound: usize,
}

/// Teach `concepts` one after another against shared base data. After each
/// concept converges, previously taught concepts are rechecked and any
/// newfound disagreement is resolved with one labeled direction at a time;
/// those resolutions are counted separately from teaching queries and are the
/// quantity Proposition 2 bounds.
pub fn simulate_sequential_teaching(
    concepts: &[LinearConceptSpec],
    base_x: &[Vec<f64>],
    base_y: &[f64],
    theta_star: &[f64],
) -> Result<SequentialTeachingOutcome> {
    if concepts.is_empty() {
        return Ok(SequentialTeachingOutcome {
            teaching_queries: 0,
            interference_queries: 0,
            per_concept_teaching: Vec::new(),
            per_concept_interference: Vec::new(),
            bound: 0,
        });
    }
    let dim = concepts[0].ambient_dim();
    for c in concepts {
        let hyp = norm(&c.derived_unobserved.project(theta_star)?);
        if hyp > 1e-9 * norm(theta_star).max(1.0) {
            return Err(Error::InvalidConfig(format!(
                "theta_star has nonzero unobserved projection ({hyp:.3e}) for one of the concepts"
            )));
        }
    }
    let base_xs: Vec<Vec<f64>> = base_x.to_vec();
    let base_observed = Subspace::orthonormalize(dim, &base_xs, DEFAULT_TOL)?;
    let bound = prop2_bound(concepts, &base_observed)?;

    let mut data_x: Vec<Vec<Vec<f64>>> = concepts
        .iter()
        .map(|c| c.observed.iter().map(|(x, _)| x.clone()).collect())
        .collect();
    let mut data_y: Vec<Vec<f64>> = concepts
        .iter()
        .map(|c| c.observed.iter().map(|(_, y)| *y).collect())
        .collect();

    let fit_global = |data_x: &[Vec<Vec<f64>>], data_y: &[Vec<f64>]| -> Result<Vec<f64>> {
        let mut rows = base_x.to_vec();
        let mut ys = base_y.to_vec();
        for (xs, lys) in data_x.iter().zip(data_y.iter()) {
            rows.extend(xs.iter().cloned());
            ys.extend(lys.iter().cloned());
        }
        min_norm_interpolant(dim, &rows, &ys)
    };

    // Gap of concept j under the current data, with the direction to query.
    let concept_gap = |j: usize,
                       data_x: &[Vec<Vec<f64>>],
                       data_y: &[Vec<f64>],
                       global: &[f64]|
     -> Result<Option<Vec<f64>>> {
        let local = min_norm_interpolant(dim, &data_x[j], &data_y[j])?;
        let gap = norm(
            &concepts[j]
                .concept_space
                .project(&sub(&local, global))?,
        );
        if gap <= TEACHING_EPS {
            return Ok(None);
        }
        match max_disagreement_direction(&concepts[j].concept_space, &local, global) {
            Some(u) => Ok(Some(u)),
            None => Err(Error::SearchFailure { gap }),
        }
    };

    let mut per_teaching = vec![0usize; concepts.len()];
    let mut per_interference = vec![0usize; concepts.len()];
    let safety_cap = (concepts.len() + 1) * (dim + 1);
    let mut total = 0usize;

    for i in 0..concepts.len() {
        // Teach concept i to convergence.
        loop {
            let global = fit_global(&data_x, &data_y)?;
            match concept_gap(i, &data_x, &data_y, &global)? {
                None => break,
                Some(u) => {
                    let label = dot(theta_star, &u);
                    data_x[i].push(u);
                    data_y[i].push(label);
                    per_teaching[i] += 1;
                    total += 1;
                    if total > safety_cap {
                        return Err(Error::SearchFailure { gap: f64::NAN });
                    }
                }
            }
        }
        // Resolve interference on every concept taught so far.
        loop {
            let global = fit_global(&data_x, &data_y)?;
            let mut fixed_one = false;
            for j in 0..=i {
                if let Some(u) = concept_gap(j, &data_x, &data_y, &global)? {
                    let label = dot(theta_star, &u);
                    data_x[j].push(u);
                    data_y[j].push(label);
                    per_interference[j] += 1;
                    total += 1;
                    if total > safety_cap {
                        return Err(Error::SearchFailure { gap: f64::NAN });
                    }
                    fixed_one = true;
                    break;
                }
            }
            if !fixed_one {
                break;
            }
        }
    }

    Ok(SequentialTeachingOutcome {
        teaching_queries: per_teaching.iter().sum(),
        interference_queries: per_interference.iter().sum(),
        per_concept_teaching: per_teaching,
        per_concept_interference: per_interference,
        bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn running_example_concept() -> LinearConceptSpec {
        let space = Subspace::orthonormalize(
            3,
            &[vec![1.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
            DEFAULT_TOL,
        )
        .unwrap();
        LinearConceptSpec::new(space, vec![(vec![1.0, 1.0, 0.0], 2.0)]).unwrap()
    }

    #[test]
    fn min_norm_single_constraint() {
        let theta = min_norm_interpolant(3, &[vec![1.0, 1.0, 0.0]], &[2.0]).unwrap();
        assert_relative_eq!(theta[0], 1.0, epsilon = 1e-9);
        assert_relative_eq!(theta[1], 1.0, epsilon = 1e-9);
        assert_relative_eq!(theta[2], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn min_norm_two_constraints() {
        let theta =
            min_norm_interpolant(3, &[vec![1.0, 1.0, 0.0], vec![0.0, 1.0, 1.0]], &[2.0, 2.0])
                .unwrap();
        assert_relative_eq!(theta[0], 2.0 / 3.0, epsilon = 1e-9);
        assert_relative_eq!(theta[1], 4.0 / 3.0, epsilon = 1e-9);
        assert_relative_eq!(theta[2], 2.0 / 3.0, epsilon = 1e-9);
    }

    #[test]
    fn min_norm_three_constraints() {
        let theta = min_norm_interpolant(
            3,
            &[
                vec![1.0, 1.0, 0.0],
                vec![0.0, 1.0, 1.0],
                vec![0.0, 0.0, 1.0],
            ],
            &[2.0, 2.0, 0.0],
        )
        .unwrap();
        assert_relative_eq!(theta[0], 0.0, epsilon = 1e-9);
        assert_relative_eq!(theta[1], 2.0, epsilon = 1e-9);
        assert_relative_eq!(theta[2], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn min_norm_empty_system_is_zero() {
        assert_eq!(min_norm_interpolant(4, &[], &[]).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn min_norm_rejects_inconsistent_system() {
        let err = min_norm_interpolant(2, &[vec![1.0, 0.0], vec![1.0, 0.0]], &[1.0, 2.0])
            .unwrap_err();
        match err {
            Error::InconsistentSystem { residual } => assert!(residual > 0.1),
            other => panic!("expected inconsistency, got {other:?}"),
        }
    }

    #[test]
    fn min_norm_lies_in_row_space() {
        let rows = vec![vec![1.0, 2.0, 0.0, 1.0], vec![0.0, 1.0, 1.0, -1.0]];
        let theta = min_norm_interpolant(4, &rows, &[1.0, -2.0]).unwrap();
        let row_space = Subspace::orthonormalize(4, &rows, DEFAULT_TOL).unwrap();
        assert!(row_space.residual_norm(&theta).unwrap() <= 1e-9);
    }

    #[test]
    fn concept_decomposition_dims_add_up() {
        let c = running_example_concept();
        assert_eq!(c.derived_observed.dim(), 1);
        assert_eq!(c.derived_unobserved.dim(), 1);
        assert_eq!(c.derived_invariant.dim(), 1);
        assert_relative_eq!(c.derived_unobserved.basis()[0][2], 1.0, epsilon = 1e-9);
        // invariant direction is [1,-1,0]/sqrt 2 up to sign
        let inv = &c.derived_invariant.basis()[0];
        assert_relative_eq!(inv[0].abs(), 1.0 / 2.0_f64.sqrt(), epsilon = 1e-9);
        assert_relative_eq!(inv[2], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn concept_rejects_points_outside_space() {
        let space = Subspace::orthonormalize(3, &[vec![1.0, 1.0, 0.0]], DEFAULT_TOL).unwrap();
        let err = LinearConceptSpec::new(space, vec![(vec![1.0, 2.0, 0.0], 1.0)]).unwrap_err();
        assert!(matches!(err, Error::NotContained { .. }));
    }

    #[test]
    fn prop1_running_example_is_one() {
        let concept = running_example_concept();
        let base =
            Subspace::orthonormalize(3, &[vec![0.0, 1.0, 1.0]], DEFAULT_TOL).unwrap();
        assert_eq!(prop1_bound(&concept, &base).unwrap(), 1);
    }

    #[test]
    fn prop1_orthogonal_base_is_zero() {
        let concept = running_example_concept();
        // base span orthogonal to S_uno = e3
        let base =
            Subspace::orthonormalize(3, &[vec![1.0, -1.0, 0.0]], DEFAULT_TOL).unwrap();
        assert_eq!(prop1_bound(&concept, &base).unwrap(), 0);
    }

    #[test]
    fn prop1_unobserved_inside_base_is_zero() {
        let concept = running_example_concept();
        // S_uno = e3 contained in the base span
        let base = Subspace::orthonormalize(
            3,
            &[vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]],
            DEFAULT_TOL,
        )
        .unwrap();
        assert_eq!(prop1_bound(&concept, &base).unwrap(), 0);
    }

    #[test]
    fn prop2_single_concept_matches_prop1() {
        let concept = running_example_concept();
        let base =
            Subspace::orthonormalize(3, &[vec![0.0, 1.0, 1.0]], DEFAULT_TOL).unwrap();
        let p1 = prop1_bound(&concept, &base).unwrap();
        let p2 = prop2_bound(std::slice::from_ref(&concept), &base).unwrap();
        assert_eq!(p1, p2);
    }

    #[test]
    fn prop2_orthogonal_concepts_are_zero() {
        let c1 = LinearConceptSpec::new(
            Subspace::orthonormalize(4, &[vec![1.0, 0.0, 0.0, 0.0]], DEFAULT_TOL).unwrap(),
            vec![],
        )
        .unwrap();
        let c2 = LinearConceptSpec::new(
            Subspace::orthonormalize(4, &[vec![0.0, 1.0, 0.0, 0.0]], DEFAULT_TOL).unwrap(),
            vec![],
        )
        .unwrap();
        let base =
            Subspace::orthonormalize(4, &[vec![0.0, 0.0, 0.0, 1.0]], DEFAULT_TOL).unwrap();
        assert_eq!(prop2_bound(&[c1, c2], &base).unwrap(), 0);
    }

    #[test]
    fn prop2_shared_unobserved_direction_counts_twice() {
        // Two concepts in R^4 sharing the unobserved direction e3, each
        // having observed only its own axis; base observed e4.
        let c1 = LinearConceptSpec::new(
            Subspace::orthonormalize(
                4,
                &[vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 0.0]],
                DEFAULT_TOL,
            )
            .unwrap(),
            vec![(vec![1.0, 0.0, 0.0, 0.0], 1.0)],
        )
        .unwrap();
        let c2 = LinearConceptSpec::new(
            Subspace::orthonormalize(
                4,
                &[vec![0.0, 1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 0.0]],
                DEFAULT_TOL,
            )
            .unwrap(),
            vec![(vec![0.0, 1.0, 0.0, 0.0], 1.0)],
        )
        .unwrap();
        let base =
            Subspace::orthonormalize(4, &[vec![0.0, 0.0, 0.0, 1.0]], DEFAULT_TOL).unwrap();

        // Independent check by enumeration: for each concept, S_uno = e3,
        // nothing of it is observed anywhere, and e3 projects onto the other
        // concept's span with rank one. So each term is 1.
        assert_eq!(prop2_bound(&[c1, c2], &base).unwrap(), 2);
    }

    #[test]
    fn teaching_running_example_queries_e3_once() {
        let concept = running_example_concept();
        let theta_star = [0.0, 2.0, 0.0];
        let mut oracle = |space: &Subspace, local: &[f64], global: &[f64]| {
            max_disagreement_direction(space, local, global)
        };
        let trace = simulate_linear_teaching(
            &concept,
            &[vec![0.0, 1.0, 1.0]],
            &[2.0],
            &theta_star,
            &mut oracle,
        )
        .unwrap();
        assert_eq!(trace.query_count, 1);
        let q = &trace.queries[0];
        assert_relative_eq!(q.vector[0], 0.0, epsilon = 1e-9);
        assert_relative_eq!(q.vector[1], 0.0, epsilon = 1e-9);
        assert_relative_eq!(q.vector[2].abs(), 1.0, epsilon = 1e-9);
        assert_relative_eq!(q.label, 0.0, epsilon = 1e-12);
        assert_eq!(q.updated, UpdatedModel::Global);
        for (a, b) in trace.final_global.iter().zip([0.0, 2.0, 0.0].iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn teaching_with_spanning_data_needs_no_queries() {
        let space = Subspace::orthonormalize(
            3,
            &[vec![1.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
            DEFAULT_TOL,
        )
        .unwrap();
        let concept = LinearConceptSpec::new(
            space,
            vec![(vec![1.0, 1.0, 0.0], 2.0), (vec![0.0, 0.0, 1.0], 0.0)],
        )
        .unwrap();
        let mut oracle = |space: &Subspace, local: &[f64], global: &[f64]| {
            max_disagreement_direction(space, local, global)
        };
        let trace = simulate_linear_teaching(
            &concept,
            &[vec![0.0, 1.0, 1.0]],
            &[2.0],
            &[0.0, 2.0, 0.0],
            &mut oracle,
        )
        .unwrap();
        assert_eq!(trace.query_count, 0);
    }

    #[test]
    fn teaching_rejects_violated_hypothesis() {
        let concept = running_example_concept();
        // theta_star with a nonzero e3 (unobserved) component
        let err = simulate_linear_teaching(
            &concept,
            &[vec![0.0, 1.0, 1.0]],
            &[1.0],
            &[0.0, 1.0, 1.0],
            &mut |s: &Subspace, l: &[f64], g: &[f64]| max_disagreement_direction(s, l, g),
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
    }
}
