//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub fn mat_inf_norm(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Largest absolute coordinate over a point cloud, at least 1.
pub fn point_scale(points: &[DVector<f64>]) -> f64 {
    points.iter().map(inf_norm).fold(1.0, f64::max)
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Affine hull of a point set: a base point, an orthonormal basis of the
/// direction space and an orthonormal basis of its complement.
#[derive(Clone, Debug)]
pub struct AffineHull {
    pub origin: DVector<f64>,
    pub basis: Vec<DVector<f64>>,
    pub complement: Vec<DVector<f64>>,
}

impl AffineHull {
    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    /// Coordinates of `x - origin` in the direction basis.
    pub fn coords(&self, x: &DVector<f64>) -> DVector<f64> {
        let dx = x - &self.origin;
        DVector::from_iterator(self.basis.len(), self.basis.iter().map(|b| b.dot(&dx)))
    }

    pub fn lift(&self, c: &DVector<f64>) -> DVector<f64> {
        let mut x = self.origin.clone();
        for (ci, b) in c.iter().zip(&self.basis) {
            x += b * *ci;
        }
        x
    }
}

/// Right singular pairs of `m`, padded with zero rows so every direction
/// of the column space gets a singular value. Sorted by decreasing value.
fn full_right_svd(m: &DMatrix<f64>) -> Vec<(f64, DVector<f64>)> {
    let n = m.ncols();
    let rows = m.nrows().max(n);
    let mut padded = DMatrix::zeros(rows, n);
    padded.rows_mut(0, m.nrows()).copy_from(m);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let mut out: Vec<(f64, DVector<f64>)> = (0..n)
        .map(|i| (svd.singular_values[i], vt.row(i).transpose()))
        .collect();
    out.sort_by(|a, b| b.0.total_cmp(&a.0));
    out
}

/// Affine hull with relative tolerance `tol` on the spread of the points.
pub fn affine_hull(points: &[DVector<f64>], dim: usize, tol: f64) -> AffineHull {
    assert!(!points.is_empty());
    let np = points.len() as f64;
    let mut mean = DVector::zeros(dim);
    for p in points {
        mean += p;
    }
    mean /= np;
    let mut diffs = DMatrix::zeros(points.len(), dim);
    for (i, p) in points.iter().enumerate() {
        diffs.set_row(i, &(p - &mean).transpose());
    }
    let scale = point_scale(points);
    let mut basis = Vec::new();
    let mut complement = Vec::new();
    for (sv, v) in full_right_svd(&diffs) {
        let v = canonical_sign(v);
        if sv > tol * scale {
            basis.push(v);
        } else {
            complement.push(v);
        }
    }
    // anchor at an actual input point so exact inputs stay exact
    AffineHull {
        origin: points[0].clone(),
        basis,
        complement,
    }
}

/// Flip a vector so that its first significant entry is positive.
pub fn canonical_sign(mut v: DVector<f64>) -> DVector<f64> {
    if let Some(x) = v.iter().find(|x| x.abs() > 1e-12) {
        if *x < 0.0 {
            v.neg_mut();
        }
    }
    v
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Orthonormal basis for the null space of `m` (rows are constraints).
pub fn null_space(m: &DMatrix<f64>, tol: f64) -> Vec<DVector<f64>> {
    let scale = mat_inf_norm(m).max(1.0);
    let mut out: Vec<DVector<f64>> = full_right_svd(m)
        .into_iter()
        .filter(|(sv, _)| *sv <= tol * scale)
        .map(|(_, v)| canonical_sign(v))
        .collect();
    out.reverse();
    out
}
