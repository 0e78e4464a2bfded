//! Orthonormal-basis subspaces of R^d and the algebra the teaching bounds
//! are built from: projection, intersection, orthogonal complements, sums.
//!
//! All rank decisions treat singular values below `RANK_TOL_REL` times the
//! largest singular value as zero; exact subspaces do not survive floating
//! point, so every operation is tolerance-based.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative singular-value cutoff shared by every subspace computation.
pub const RANK_TOL_REL: f64 = 1e-8;

/// Default absolute cutoff used where callers do not supply one.
pub const DEFAULT_TOL: f64 = 1e-10;

/// A linear subspace of R^d represented by an orthonormal basis.
///
/// Invariants: every basis vector has unit norm, pairwise inner products
/// vanish (both to 1e-10), and `basis.len() <= ambient_dim`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Subspace {
    ambient_dim: usize,
    basis: Vec<Vec<f64>>,
}

impl Subspace {
    /// The zero subspace of R^d.
    pub fn zero(ambient_dim: usize) -> Self {
        Subspace {
            ambient_dim,
            basis: Vec::new(),
        }
    }

    /// All of R^d, with the standard basis.
    pub fn full(ambient_dim: usize) -> Self {
        let basis = (0..ambient_dim)
            .map(|i| {
                let mut e = vec![0.0; ambient_dim];
                e[i] = 1.0;
                e
            })
            .collect();
        Subspace { ambient_dim, basis }
    }

    /// Span of `vectors`, orthonormalized by SVD. Directions whose singular
    /// value falls at or below `max(tol, RANK_TOL_REL * sigma_max)` are
    /// dropped. Basis vectors are sign-canonicalized (largest-magnitude
    /// component positive) so equal spans produce identical bases.
    pub fn orthonormalize(ambient_dim: usize, vectors: &[Vec<f64>], tol: f64) -> Result<Self> {
        for v in vectors {
            if v.len() != ambient_dim {
                return Err(Error::DimensionMismatch {
                    expected: ambient_dim,
                    got: v.len(),
                });
            }
        }
        if vectors.is_empty() || ambient_dim == 0 {
            return Ok(Subspace::zero(ambient_dim));
        }
        let mat = DMatrix::from_fn(vectors.len(), ambient_dim, |r, c| vectors[r][c]);
        let svd = mat.svd(false, true);
        let v_t = svd.v_t.expect("svd requested v_t");
        let sigma_max = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
        let threshold = tol.max(RANK_TOL_REL * sigma_max);

        let mut kept: Vec<(f64, Vec<f64>)> = Vec::new();
        for (i, &sigma) in svd.singular_values.iter().enumerate() {
            if sigma > threshold {
                kept.push((sigma, v_t.row(i).iter().cloned().collect()));
            }
        }
        // Descending singular value keeps the basis order deterministic.
        kept.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite singular values"));
        let basis = kept
            .into_iter()
            .map(|(_, v)| canonicalize_sign(v))
            .collect();
        Ok(Subspace { ambient_dim, basis })
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    /// Number of basis vectors, i.e. the dimension of the subspace.
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    /// Orthogonal projection of `v` onto this subspace.
    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.ambient_dim {
            return Err(Error::DimensionMismatch {
                expected: self.ambient_dim,
                got: v.len(),
            });
        }
        let mut out = vec![0.0; self.ambient_dim];
        for b in &self.basis {
            let coef = dot(b, v);
            for (o, &bi) in out.iter_mut().zip(b.iter()) {
                *o += coef * bi;
            }
        }
        Ok(out)
    }

    /// Distance from `v` to the subspace, i.e. the residual norm after
    /// projection.
    pub fn residual_norm(&self, v: &[f64]) -> Result<f64> {
        let p = self.project(v)?;
        Ok(norm(&sub(v, &p)))
    }

    /// Whether `v` lies in the subspace within `tol` (scaled by the vector
    /// norm for large inputs).
    pub fn contains(&self, v: &[f64], tol: f64) -> bool {
        match self.residual_norm(v) {
            Ok(r) => r <= tol * norm(v).max(1.0),
            Err(_) => false,
        }
    }

    /// Whether every basis vector of `other` lies in this subspace.
    pub fn contains_subspace(&self, other: &Subspace, tol: f64) -> bool {
        other.basis.iter().all(|b| self.contains(b, tol))
    }

    /// Span of the union of both subspaces.
    pub fn sum(&self, other: &Subspace) -> Result<Subspace> {
        self.check_ambient(other)?;
        let mut vectors = self.basis.clone();
        vectors.extend(other.basis.iter().cloned());
        Subspace::orthonormalize(self.ambient_dim, &vectors, DEFAULT_TOL)
    }

    /// Orthogonal complement within the ambient space.
    pub fn complement(&self) -> Subspace {
        let residuals: Vec<Vec<f64>> = (0..self.ambient_dim)
            .map(|i| {
                let mut e = vec![0.0; self.ambient_dim];
                e[i] = 1.0;
                let p = self.project(&e).expect("standard basis has ambient dim");
                sub(&e, &p)
            })
            .collect();
        Subspace::orthonormalize(self.ambient_dim, &residuals, DEFAULT_TOL)
            .expect("residuals share the ambient dim")
    }

    /// Intersection of two subspaces: the largest subspace contained in both,
    /// computed as the complement of the sum of the complements.
    pub fn intersect(&self, other: &Subspace) -> Result<Subspace> {
        self.check_ambient(other)?;
        let joined = self.complement().sum(&other.complement())?;
        Ok(joined.complement())
    }

    /// Orthogonal complement of `inner` within `self`: the returned subspace
    /// is orthogonal to `inner` and together they span `self`.
    ///
    /// Errors with [`Error::NotContained`] when `inner` is not a subspace of
    /// `self` (residual above 1e-8).
    pub fn complement_within(&self, inner: &Subspace) -> Result<Subspace> {
        self.check_ambient(inner)?;
        let mut worst = 0.0_f64;
        for b in inner.basis() {
            worst = worst.max(self.residual_norm(b)?);
        }
        if worst > 1e-8 {
            return Err(Error::NotContained { residual: worst });
        }
        let residuals: Vec<Vec<f64>> = self
            .basis
            .iter()
            .map(|b| {
                let p = inner.project(b).expect("ambient dims checked");
                sub(b, &p)
            })
            .collect();
        Subspace::orthonormalize(self.ambient_dim, &residuals, DEFAULT_TOL)
    }

    /// dim(proj_self(other)): rank of the projections of `other`'s basis onto
    /// this subspace.
    pub fn projection_dim(&self, other: &Subspace) -> Result<usize> {
        self.check_ambient(other)?;
        let projected: Vec<Vec<f64>> = other
            .basis
            .iter()
            .map(|b| self.project(b))
            .collect::<Result<_>>()?;
        Ok(Subspace::orthonormalize(self.ambient_dim, &projected, DEFAULT_TOL)?.dim())
    }

    /// Interpret the basis as matrix columns (d x dim).
    pub fn basis_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.ambient_dim, self.dim(), |r, c| self.basis[c][r])
    }

    fn check_ambient(&self, other: &Subspace) -> Result<()> {
        if self.ambient_dim != other.ambient_dim {
            return Err(Error::DimensionMismatch {
                expected: self.ambient_dim,
                got: other.ambient_dim,
            });
        }
        Ok(())
    }
}

fn canonicalize_sign(mut v: Vec<f64>) -> Vec<f64> {
    let mut lead = 0.0_f64;
    for &x in &v {
        if x.abs() > lead.abs() {
            lead = x;
        }
    }
    if lead < 0.0 {
        for x in &mut v {
            *x = -*x;
        }
    }
    v
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b.iter()).map(|(x, y)| x - y).collect()
}
