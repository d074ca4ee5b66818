//! Convex polytopes in dimensions 1 to 4.
//!
//! Every [`Polytope`] carries both a vertex list and an irredundant halfspace
//! list, canonicalised at construction. Lower-dimensional sets (points,
//! segments, flat polygons) are supported: their halfspace form holds one
//! opposite pair of rows per missing dimension followed by the facets
//! relative to the affine hull.

mod enumerate;
mod json;
mod ops;

pub use enumerate::{enumerate_facets, enumerate_vertices, remove_redundant};
pub use json::PolytopeJson;
pub(crate) use ops::weights_for;
pub use ops::{
    affine_image, barycentric_coordinates, cap_facets, chebyshev_center, contains_point, contains_set, drop_facets,
    intersect, matrix_set_product, minkowski_sum, pontryagin_diff, support, volume, TEMPLATE_DIRECTIONS_2D,
};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Geometric tolerance relative to the coordinate scale.
pub const GEOM_TOL: f64 = 1e-9;
/// Default tolerance for membership and inclusion tests.
pub const INCLUSION_TOL: f64 = 1e-7;
pub const MAX_DIM: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolytopeError {
    #[error("polytope is unbounded")]
    Unbounded,
    #[error("polytope is empty")]
    Empty,
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("vertex set is not full-dimensional")]
    Degenerate,
    #[error("dimension {0} is not supported")]
    UnsupportedDimension(usize),
    #[error("point is not in the convex hull")]
    NotInHull,
    #[error("invalid polytope data: {0}")]
    Invalid(String),
}

/// Halfspace list `{x : normals x <= offsets}` with unit-norm rows.
#[derive(Debug, Clone, PartialEq)]
pub struct HPolytope {
    normals: DMatrix<f64>,
    offsets: DVector<f64>,
}

impl HPolytope {
    /// Rows are normalised; zero rows must have a nonnegative offset and are dropped.
    pub fn new(normals: DMatrix<f64>, offsets: DVector<f64>) -> Result<Self, PolytopeError> {
        if normals.nrows() != offsets.len() {
            return Err(PolytopeError::DimensionMismatch {
                expected: normals.nrows(),
                found: offsets.len(),
            });
        }
        let d = normals.ncols();
        if d == 0 || d > MAX_DIM {
            return Err(PolytopeError::UnsupportedDimension(d));
        }
        if normals.iter().chain(offsets.iter()).any(|x| !x.is_finite()) {
            return Err(PolytopeError::Invalid("non-finite halfspace data".into()));
        }
        let mut rows = Vec::new();
        let mut offs = Vec::new();
        let mut infeasible = false;
        for i in 0..normals.nrows() {
            let r = normals.row(i).transpose();
            let nr = r.norm();
            if nr <= 1e-14 {
                if offsets[i] < -1e-12 {
                    infeasible = true;
                }
                continue;
            }
            rows.push(r / nr);
            offs.push(offsets[i] / nr);
        }
        if infeasible {
            return Ok(HPolytope::infeasible(d));
        }
        Ok(HPolytope::from_rows(d, &rows, &offs))
    }

    pub(crate) fn from_rows(d: usize, rows: &[DVector<f64>], offs: &[f64]) -> Self {
        let mut normals = DMatrix::zeros(rows.len(), d);
        for (i, r) in rows.iter().enumerate() {
            normals.set_row(i, &r.transpose());
        }
        HPolytope {
            normals,
            offsets: DVector::from_row_slice(offs),
        }
    }

    /// `x_1 <= -1` and `-x_1 <= -1`.
    pub fn infeasible(d: usize) -> Self {
        let mut normals = DMatrix::zeros(2, d);
        normals[(0, 0)] = 1.0;
        normals[(1, 0)] = -1.0;
        HPolytope {
            normals,
            offsets: DVector::from_element(2, -1.0),
        }
    }

    pub fn dim(&self) -> usize {
        self.normals.ncols()
    }

    pub fn len(&self) -> usize {
        self.normals.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn normals(&self) -> &DMatrix<f64> {
        &self.normals
    }

    pub fn offsets(&self) -> &DVector<f64> {
        &self.offsets
    }

    pub fn normal(&self, k: usize) -> DVector<f64> {
        self.normals.row(k).transpose()
    }

    pub fn offset(&self, k: usize) -> f64 {
        self.offsets[k]
    }

    pub fn rows(&self) -> impl Iterator<Item = (DVector<f64>, f64)> + '_ {
        (0..self.len()).map(move |k| (self.normal(k), self.offsets[k]))
    }

    /// Stacks two halfspace lists.
    pub fn stack(&self, other: &HPolytope) -> HPolytope {
        let d = self.dim();
        let mut normals = DMatrix::zeros(self.len() + other.len(), d);
        let mut offsets = DVector::zeros(self.len() + other.len());
        for k in 0..self.len() {
            normals.set_row(k, &self.normals.row(k));
            offsets[k] = self.offsets[k];
        }
        for k in 0..other.len() {
            normals.set_row(self.len() + k, &other.normals.row(k));
            offsets[self.len() + k] = other.offsets[k];
        }
        HPolytope { normals, offsets }
    }

    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        let v = &self.normals * x - &self.offsets;
        v.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// A bounded convex polytope with both representations.
#[derive(Debug, Clone)]
pub struct Polytope {
    dim: usize,
    vertices: Vec<DVector<f64>>,
    h: HPolytope,
    affine_dim: Option<usize>,
}

impl PartialEq for Polytope {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.vertices.len() == other.vertices.len()
            && contains_set(self, other, 1e-9)
            && contains_set(other, self, 1e-9)
    }
}

impl Polytope {
    /// Convex hull of a finite point set.
    pub fn from_vertices(points: Vec<DVector<f64>>) -> Result<Self, PolytopeError> {
        let dim = points.first().map(|p| p.len()).ok_or(PolytopeError::Empty)?;
        Self::from_vertices_dim(points, dim)
    }

    pub fn from_vertices_dim(points: Vec<DVector<f64>>, dim: usize) -> Result<Self, PolytopeError> {
        if dim == 0 || dim > MAX_DIM {
            return Err(PolytopeError::UnsupportedDimension(dim));
        }
        for p in &points {
            if p.len() != dim {
                return Err(PolytopeError::DimensionMismatch {
                    expected: dim,
                    found: p.len(),
                });
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(PolytopeError::Invalid("non-finite vertex".into()));
            }
        }
        if points.is_empty() {
            return Ok(Self::empty(dim));
        }
        Ok(enumerate::canonical_from_points(&points, dim))
    }

    /// Intersection of halfspaces. Empty inputs give an empty polytope;
    /// unbounded inputs are an error.
    pub fn from_h(h: HPolytope) -> Result<Self, PolytopeError> {
        match enumerate::vertices_of(&h) {
            Ok(v) => Ok(enumerate::canonical_from_points(&v, h.dim())),
            Err(PolytopeError::Empty) => Ok(Self::empty(h.dim())),
            Err(e) => Err(e),
        }
    }

    pub fn from_halfspaces(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self, PolytopeError> {
        Self::from_h(HPolytope::new(a, b)?)
    }

    pub fn empty(dim: usize) -> Self {
        Polytope {
            dim,
            vertices: Vec::new(),
            h: HPolytope::infeasible(dim),
            affine_dim: None,
        }
    }

    pub fn point(x: DVector<f64>) -> Self {
        let dim = x.len();
        enumerate::canonical_from_points(&[x], dim)
    }

    /// Axis-aligned box `lower <= x <= upper`.
    pub fn from_box(lower: &DVector<f64>, upper: &DVector<f64>) -> Result<Self, PolytopeError> {
        let d = lower.len();
        if upper.len() != d {
            return Err(PolytopeError::DimensionMismatch {
                expected: d,
                found: upper.len(),
            });
        }
        let mut a = DMatrix::zeros(2 * d, d);
        let mut b = DVector::zeros(2 * d);
        for i in 0..d {
            a[(2 * i, i)] = 1.0;
            b[2 * i] = upper[i];
            a[(2 * i + 1, i)] = -1.0;
            b[2 * i + 1] = -lower[i];
        }
        Self::from_halfspaces(a, b)
    }

    /// `{x : |x_i| <= r}`.
    pub fn cube(dim: usize, r: f64) -> Result<Self, PolytopeError> {
        Self::from_box(&DVector::from_element(dim, -r), &DVector::from_element(dim, r))
    }

    pub(crate) fn from_parts(dim: usize, vertices: Vec<DVector<f64>>, h: HPolytope, affine_dim: Option<usize>) -> Self {
        Polytope {
            dim,
            vertices,
            h,
            affine_dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Dimension of the affine hull, `None` when empty.
    pub fn affine_dim(&self) -> Option<usize> {
        self.affine_dim
    }

    pub fn is_full_dim(&self) -> bool {
        self.affine_dim == Some(self.dim)
    }

    pub fn vertices(&self) -> &[DVector<f64>] {
        &self.vertices
    }

    pub fn hrep(&self) -> &HPolytope {
        &self.h
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_facets(&self) -> usize {
        if self.is_empty() {
            0
        } else {
            self.h.len()
        }
    }

    pub fn support(&self, d: &DVector<f64>) -> f64 {
        support(self, d)
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        contains_point(self, x, tol)
    }

    /// Coordinate scale used for relative tolerances.
    pub fn scale(&self) -> f64 {
        crate::linalg::point_scale(&self.vertices)
    }

    /// `s * P` for `s >= 0`.
    pub fn scaled(&self, s: f64) -> Polytope {
        assert!(
            s >= 0.0 && s.is_finite(),
            "scale factor must be a finite nonnegative number"
        );
        if self.is_empty() {
            return self.clone();
        }
        if s <= 1e-300 {
            return Polytope::point(DVector::zeros(self.dim));
        }
        Polytope {
            dim: self.dim,
            vertices: self.vertices.iter().map(|v| v * s).collect(),
            h: HPolytope {
                normals: self.h.normals.clone(),
                offsets: &self.h.offsets * s,
            },
            affine_dim: self.affine_dim,
        }
    }

    /// `P + c`.
    pub fn translated(&self, c: &DVector<f64>) -> Polytope {
        if self.is_empty() {
            return self.clone();
        }
        Polytope {
            dim: self.dim,
            vertices: self.vertices.iter().map(|v| v + c).collect(),
            h: HPolytope {
                offsets: &self.h.offsets + &self.h.normals * c,
                normals: self.h.normals.clone(),
            },
            affine_dim: self.affine_dim,
        }
    }

    /// Bounding box `(lower, upper)` from the vertices.
    pub fn bounding_box(&self) -> Option<(DVector<f64>, DVector<f64>)> {
        let first = self.vertices.first()?;
        let mut lo = first.clone();
        let mut hi = first.clone();
        for v in &self.vertices[1..] {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        Some((lo, hi))
    }
}
