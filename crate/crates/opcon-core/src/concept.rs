//! Examples, concept datasets, synthetic concept distributions, and
//! membership predicates.
//!
//! Text is carried opaquely; all learning happens on the numeric feature
//! vectors. Dataset files are line-delimited JSON, one example per line.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::subspace::Subspace;
use crate::util::sha256_hex;

/// Where an example came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Seed,
    Generated,
    Pool,
    Interference,
}

/// One data point: a feature vector with optional opaque text, an optional
/// label (present once accepted and labeled), the owning concept id
/// (0 = base), and provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub features: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<f64>,
    pub concept_id: usize,
    pub provenance: Provenance,
}

impl Example {
    pub fn new(id: impl Into<String>, features: Vec<f64>, concept_id: usize) -> Self {
        Example {
            id: id.into(),
            features,
            text: None,
            label: None,
            concept_id,
            provenance: Provenance::Seed,
        }
    }

    pub fn with_label(mut self, label: f64) -> Self {
        self.label = Some(label);
        self
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }
}

/// Classification labels are positive iff strictly above 0.5, which covers
/// both the 0/1 and the -1/+1 encodings.
pub fn is_positive_label(label: f64) -> bool {
    label > 0.5
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundMarker {
    pub round: usize,
    pub len: usize,
}

/// An ordered, append-only collection of examples for one concept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConceptDataset {
    pub concept_id: usize,
    pub examples: Vec<Example>,
    #[serde(default)]
    pub round_markers: Vec<RoundMarker>,
}

impl ConceptDataset {
    pub fn new(concept_id: usize) -> Self {
        ConceptDataset {
            concept_id,
            examples: Vec::new(),
            round_markers: Vec::new(),
        }
    }

    pub fn from_examples(concept_id: usize, examples: Vec<Example>) -> Result<Self> {
        let mut ds = ConceptDataset::new(concept_id);
        for e in examples {
            ds.push(e)?;
        }
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn contains_id(&self, id: &str) -> bool {
        self.examples.iter().any(|e| e.id == id)
    }

    /// Append one example, enforcing unique ids and a constant feature
    /// dimension.
    pub fn push(&mut self, example: Example) -> Result<()> {
        if self.contains_id(&example.id) {
            return Err(Error::DuplicateId {
                id: example.id.clone(),
            });
        }
        if let Some(d) = self.feature_dim() {
            if example.features.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: example.features.len(),
                });
            }
        }
        self.examples.push(example);
        Ok(())
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.examples.first().map(|e| e.features.len())
    }

    pub fn labeled(&self) -> impl Iterator<Item = &Example> {
        self.examples.iter().filter(|e| e.label.is_some())
    }

    pub fn labeled_count(&self) -> usize {
        self.labeled().count()
    }

    /// Record the dataset length at the end of a round.
    pub fn mark_round(&mut self, round: usize) {
        self.round_markers.push(RoundMarker {
            round,
            len: self.examples.len(),
        });
    }

    /// SHA-256 over the serialized examples; used for append-only audits and
    /// model/dataset linkage.
    pub fn content_hash(&self) -> String {
        let mut bytes = Vec::new();
        for e in &self.examples {
            bytes.extend(serde_json::to_vec(e).expect("example serializes"));
            bytes.push(b'\n');
        }
        sha256_hex(&bytes)
    }
}

/// Write a dataset as line-delimited JSON, one example per line.
pub fn save_dataset(dataset: &ConceptDataset, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    for e in &dataset.examples {
        serde_json::to_writer(&mut out, e)?;
        out.push(b'\n');
    }
    crate::util::write_atomic(path, &out)
}

/// Read a dataset back. Malformed records and inconsistent feature
/// dimensions are reported with their line number; the concept id is taken
/// from the records, which must all agree.
pub fn load_dataset(path: &Path) -> Result<ConceptDataset> {
    let file = fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut examples: Vec<Example> = Vec::new();
    let mut ids = BTreeSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let example: Example = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if let Some(first) = examples.first() {
            if example.features.len() != first.features.len() {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!(
                        "feature dimension {} differs from {} on line 1",
                        example.features.len(),
                        first.features.len()
                    ),
                });
            }
            if example.concept_id != first.concept_id {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!(
                        "concept id {} differs from {} on line 1",
                        example.concept_id, first.concept_id
                    ),
                });
            }
        }
        if !ids.insert(example.id.clone()) {
            return Err(Error::Parse {
                line: line_no,
                message: format!("duplicate id {}", example.id),
            });
        }
        examples.push(example);
    }
    let concept_id = examples.first().map(|e| e.concept_id).unwrap_or(0);
    Ok(ConceptDataset {
        concept_id,
        examples,
        round_markers: Vec::new(),
    })
}

/// One Gaussian component of a synthetic concept distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub mean: Vec<f64>,
    /// Full covariance matrix, row-major.
    pub covariance: Vec<Vec<f64>>,
    pub class_label: f64,
    pub weight: f64,
}

/// A mixture of Gaussians with per-component class labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    pub components: Vec<MixtureComponent>,
}

impl GaussianMixture {
    /// Convenience constructor for isotropic components:
    /// (mean, sigma, class label, weight).
    pub fn isotropic(components: &[(Vec<f64>, f64, f64, f64)]) -> Result<Self> {
        let comps = components
            .iter()
            .map(|(mean, sigma, class, weight)| {
                let d = mean.len();
                let mut cov = vec![vec![0.0; d]; d];
                for (i, row) in cov.iter_mut().enumerate() {
                    row[i] = sigma * sigma;
                }
                MixtureComponent {
                    mean: mean.clone(),
                    covariance: cov,
                    class_label: *class,
                    weight: *weight,
                }
            })
            .collect();
        let m = GaussianMixture { components: comps };
        m.validate()?;
        Ok(m)
    }

    /// Components with diagonal covariance: (mean, per-axis variances,
    /// class label, weight).
    pub fn diagonal(components: &[(Vec<f64>, Vec<f64>, f64, f64)]) -> Result<Self> {
        let comps = components
            .iter()
            .map(|(mean, variances, class, weight)| {
                let d = mean.len();
                let mut cov = vec![vec![0.0; d]; d];
                for (i, row) in cov.iter_mut().enumerate() {
                    row[i] = variances[i];
                }
                MixtureComponent {
                    mean: mean.clone(),
                    covariance: cov,
                    class_label: *class,
                    weight: *weight,
                }
            })
            .collect();
        let m = GaussianMixture { components: comps };
        m.validate()?;
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.components.first().map(|c| c.mean.len()).unwrap_or(0)
    }

    /// Check weights sum to one and covariances factor (positive-definite).
    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.components.iter().map(|c| c.weight).sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::BadMixtureWeights { sum });
        }
        for c in &self.components {
            cholesky_factor(&c.covariance)?;
        }
        Ok(())
    }

    fn cholesky_factors(&self) -> Result<Vec<DMatrix<f64>>> {
        self.components
            .iter()
            .map(|c| cholesky_factor(&c.covariance))
            .collect()
    }

    /// Squared Mahalanobis distance of `x` to the nearest component, and the
    /// index of that component.
    pub fn nearest_component(&self, x: &[f64]) -> Result<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, c) in self.components.iter().enumerate() {
            let d = c.mean.len();
            if x.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: x.len(),
                });
            }
            let cov = DMatrix::from_fn(d, d, |r, col| c.covariance[r][col]);
            let chol = Cholesky::new(cov).ok_or(Error::NotPositiveDefinite)?;
            let diff = DVector::from_iterator(d, x.iter().zip(c.mean.iter()).map(|(a, b)| a - b));
            let solved = chol.solve(&diff);
            let sq = diff.dot(&solved);
            if best.map_or(true, |(_, b)| sq < b) {
                best = Some((i, sq));
            }
        }
        best.ok_or(Error::EmptyDataset)
    }
}

fn cholesky_factor(covariance: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let d = covariance.len();
    for row in covariance {
        if row.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: row.len(),
            });
        }
    }
    let m = DMatrix::from_fn(d, d, |r, c| covariance[r][c]);
    Cholesky::new(m)
        .map(|c| c.l())
        .ok_or(Error::NotPositiveDefinite)
}

/// Hard membership predicate: x is in the concept or it is not.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Membership {
    /// Accept everything (pool items are in-concept by construction).
    Always,
    /// Accept nothing; degenerate predicate used in tests.
    Never,
    /// |x[a] - x[b]| <= tol.
    CoordsEqual { a: usize, b: usize, tol: f64 },
    /// Distance from the subspace at most tol.
    InSubspace { subspace: Subspace, tol: f64 },
    /// Euclidean ball.
    Ball { center: Vec<f64>, radius: f64 },
    /// Squared Mahalanobis distance to the nearest mixture component at most
    /// `max_sq_mahalanobis`.
    NearMixture {
        mixture: GaussianMixture,
        max_sq_mahalanobis: f64,
    },
}

impl Membership {
    pub fn accepts(&self, x: &[f64]) -> bool {
        match self {
            Membership::Always => true,
            Membership::Never => false,
            Membership::CoordsEqual { a, b, tol } => {
                x.get(*a).zip(x.get(*b)).map_or(false, |(u, v)| (u - v).abs() <= *tol)
            }
            Membership::InSubspace { subspace, tol } => subspace.contains(x, *tol),
            Membership::Ball { center, radius } => {
                if center.len() != x.len() {
                    return false;
                }
                let sq: f64 = x
                    .iter()
                    .zip(center.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                sq.sqrt() <= *radius
            }
            Membership::NearMixture {
                mixture,
                max_sq_mahalanobis,
            } => mixture
                .nearest_component(x)
                .map_or(false, |(_, sq)| sq <= *max_sq_mahalanobis),
        }
    }
}

/// A concept: membership predicate plus a synthetic sampler.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConceptSpec {
    pub concept_id: usize,
    pub name: String,
    pub membership: Membership,
    pub distribution: GaussianMixture,
}

/// Draw `n` labeled examples from a mixture. Deterministic for a fixed
/// seed; labels come from the component class assignments.
pub fn sample_mixture(
    mixture: &GaussianMixture,
    n: usize,
    seed: u64,
    concept_id: usize,
    id_prefix: &str,
) -> Result<Vec<Example>> {
    mixture.validate()?;
    let factors = mixture.cholesky_factors()?;
    let mut rng = crate::util::seeded_rng(seed);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let component = {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut chosen = mixture.components.len() - 1;
            for (ci, c) in mixture.components.iter().enumerate() {
                acc += c.weight;
                if u < acc {
                    chosen = ci;
                    break;
                }
            }
            chosen
        };
        let comp = &mixture.components[component];
        let d = comp.mean.len();
        let z = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let x = &factors[component] * z;
        let features: Vec<f64> = comp
            .mean
            .iter()
            .zip(x.iter())
            .map(|(m, v)| m + v)
            .collect();
        out.push(
            Example::new(format!("{id_prefix}-{i}"), features, concept_id)
                .with_label(comp.class_label),
        );
    }
    Ok(out)
}

/// Draw `n` labeled examples from the concept's mixture. Deterministic for a
/// fixed seed; ids are `c{concept_id}-{seed:x}-{index}`.
pub fn sample_synthetic(spec: &ConceptSpec, n: usize, seed: u64) -> Result<Vec<Example>> {
    sample_mixture(
        &spec.distribution,
        n,
        seed,
        spec.concept_id,
        &format!("c{}-{:x}", spec.concept_id, seed),
    )
}
