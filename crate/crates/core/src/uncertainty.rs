//! Parametric uncertainty: the set `Ψ_t` of plant matrices `[A B]` consistent
//! with measured data, and the projected normalised-gradient estimator.
//!
//! Set operations run in an affine chart spanned by the initial vertices, so
//! a polytope of chart dimension `r` (at most 4) stands for a flat set of
//! matrices in the much larger ambient space.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::polytope::{self, HPolytope, Polytope, PolytopeError, MAX_DIM};
use crate::solver::{solve_qp, Problem};

/// `ψ = [A B]`, an `n × (n+m)` matrix.
pub type ParamMatrix = DMatrix<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UncertaintyError {
    #[error("parameter set became empty: the data falsify the disturbance bound or the initial parameter set")]
    EmptyResult,
    #[error("parameter lies {0:e} away from the chart's affine hull")]
    ChartViolation(f64),
    #[error("chart dimension {0} exceeds the supported maximum")]
    UnsupportedChartDim(usize),
    #[error("invalid parameter data: {0}")]
    Invalid(String),
    #[error(transparent)]
    Geometry(#[from] PolytopeError),
}

/// Splits `ψ` into its `A` (first `n` columns) and `B` blocks.
pub fn split_blocks(psi: &ParamMatrix) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = psi.nrows();
    (
        psi.columns(0, n).into_owned(),
        psi.columns(n, psi.ncols() - n).into_owned(),
    )
}

pub fn join_blocks(a: &DMatrix<f64>, b: &DMatrix<f64>) -> ParamMatrix {
    let n = a.nrows();
    let mut psi = DMatrix::zeros(n, a.ncols() + b.ncols());
    psi.columns_mut(0, a.ncols()).copy_from(a);
    psi.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    psi
}

/// `g = [x; u]`.
pub fn regressor(x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    let mut g = DVector::zeros(x.len() + u.len());
    g.rows_mut(0, x.len()).copy_from(x);
    g.rows_mut(x.len(), u.len()).copy_from(u);
    g
}

/// `e = x_now - ψ̂ g`.
pub fn prediction_error(psi_hat: &ParamMatrix, x_now: &DVector<f64>, g: &DVector<f64>) -> DVector<f64> {
    x_now - psi_hat * g
}

/// Origin plus Frobenius-orthonormal directions.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineChart {
    origin: ParamMatrix,
    basis: Vec<ParamMatrix>,
}

fn frob(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.component_mul(b).sum()
}

/// Origin at the first vertex; Gram-Schmidt over the differences to the
/// others, dropping directions whose residual norm is below 1e-10.
pub fn build_chart(vertices: &[ParamMatrix]) -> Result<AffineChart, UncertaintyError> {
    let origin = vertices
        .first()
        .ok_or_else(|| UncertaintyError::Invalid("no parameter vertices".into()))?
        .clone();
    let mut basis: Vec<ParamMatrix> = Vec::new();
    for v in vertices {
        if v.shape() != origin.shape() {
            return Err(UncertaintyError::Invalid(format!(
                "vertex shape {:?} differs from {:?}",
                v.shape(),
                origin.shape()
            )));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(UncertaintyError::Invalid("non-finite vertex entry".into()));
        }
        let mut r = v - &origin;
        // two passes keep the basis orthonormal to working precision
        for _ in 0..2 {
            for b in &basis {
                let c = frob(&r, b);
                r -= b * c;
            }
        }
        let nr = r.norm();
        if nr >= 1e-10 {
            basis.push(r / nr);
        }
    }
    if basis.len() > MAX_DIM {
        return Err(UncertaintyError::UnsupportedChartDim(basis.len()));
    }
    Ok(AffineChart { origin, basis })
}

impl AffineChart {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn origin(&self) -> &ParamMatrix {
        &self.origin
    }

    pub fn basis(&self) -> &[ParamMatrix] {
        &self.basis
    }

    pub fn shape(&self) -> (usize, usize) {
        self.origin.shape()
    }

    pub fn coords(&self, psi: &ParamMatrix) -> DVector<f64> {
        let d = psi - &self.origin;
        DVector::from_iterator(self.dim(), self.basis.iter().map(|b| frob(&d, b)))
    }

    pub fn point(&self, c: &DVector<f64>) -> ParamMatrix {
        let mut p = self.origin.clone();
        for (ci, b) in c.iter().zip(&self.basis) {
            p += b * *ci;
        }
        p
    }

    /// Frobenius distance from `psi` to the chart's affine hull.
    pub fn residual(&self, psi: &ParamMatrix) -> f64 {
        (psi - self.point(&self.coords(psi))).norm()
    }
}

/// `Ψ_t`: a polytope in chart coordinates (`None` for a zero-dimensional chart).
#[derive(Debug, Clone)]
pub struct ParamSet {
    chart: AffineChart,
    poly: Option<Polytope>,
}

impl ParamSet {
    pub fn from_vertices(vertices: &[ParamMatrix]) -> Result<Self, UncertaintyError> {
        let chart = build_chart(vertices)?;
        Self::in_chart(chart, vertices)
    }

    /// Hull of `vertices` expressed in an existing chart.
    pub fn in_chart(chart: AffineChart, vertices: &[ParamMatrix]) -> Result<Self, UncertaintyError> {
        if chart.dim() == 0 {
            return Ok(ParamSet { chart, poly: None });
        }
        let mut pts = Vec::with_capacity(vertices.len());
        for v in vertices {
            let res = chart.residual(v);
            if res > 1e-8 {
                return Err(UncertaintyError::ChartViolation(res));
            }
            pts.push(chart.coords(v));
        }
        let poly = Polytope::from_vertices_dim(pts, chart.dim())?;
        Ok(ParamSet {
            chart,
            poly: Some(poly),
        })
    }

    pub fn chart(&self) -> &AffineChart {
        &self.chart
    }

    pub fn poly(&self) -> Option<&Polytope> {
        self.poly.as_ref()
    }

    pub fn vertex_count(&self) -> usize {
        self.poly.as_ref().map_or(1, |p| p.num_vertices())
    }

    pub fn vertex_coords(&self) -> Vec<DVector<f64>> {
        match &self.poly {
            Some(p) => p.vertices().to_vec(),
            None => vec![DVector::zeros(0)],
        }
    }

    pub fn vertices(&self) -> Vec<ParamMatrix> {
        self.vertex_coords().iter().map(|c| self.chart.point(c)).collect()
    }

    pub fn contains(&self, psi: &ParamMatrix, tol: f64) -> bool {
        if psi.shape() != self.chart.shape() || self.chart.residual(psi) > tol {
            return false;
        }
        match &self.poly {
            Some(p) => p.contains(&self.chart.coords(psi), tol),
            None => true,
        }
    }

    /// `other ⊆ self` up to `tol`, in chart coordinates.
    pub fn contains_set(&self, other: &ParamSet, tol: f64) -> bool {
        other.vertices().iter().all(|v| self.contains(v, tol))
    }

    /// Chart-coordinate volume (length for `r = 1`, zero for `r = 0`).
    pub fn volume(&self) -> f64 {
        self.poly.as_ref().map_or(0.0, polytope::volume)
    }

    pub fn to_json(&self) -> ParamSetJson {
        let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
            (0..m.nrows()).map(|i| m.row(i).iter().cloned().collect()).collect()
        };
        ParamSetJson {
            origin: rows(&self.chart.origin),
            basis: self.chart.basis.iter().map(rows).collect(),
            vertices: self
                .vertex_coords()
                .iter()
                .map(|c| c.iter().cloned().collect())
                .collect(),
        }
    }
}

/// Snapshot of a [`ParamSet`]: chart origin and basis row-major, vertices in chart coordinates.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ParamSetJson {
    pub origin: Vec<Vec<f64>>,
    pub basis: Vec<Vec<Vec<f64>>>,
    pub vertices: Vec<Vec<f64>>,
}

/// A halfspace `normal' c <= offset` in chart coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Halfspace {
    pub normal: DVector<f64>,
    pub offset: f64,
}

impl Halfspace {
    pub fn satisfied_by(&self, c: &DVector<f64>, tol: f64) -> bool {
        self.normal.dot(c) <= self.offset + tol
    }
}

/// The data constraint `x_now - ψ g ∈ D` with `g = [x_prev; u_prev]`, one
/// halfspace per facet of `D`.
pub fn nonfalsified_halfspaces(
    x_now: &DVector<f64>,
    x_prev: &DVector<f64>,
    u_prev: &DVector<f64>,
    d_set: &Polytope,
    chart: &AffineChart,
) -> Vec<Halfspace> {
    let g = regressor(x_prev, u_prev);
    let og = chart.origin() * &g;
    let eg: Vec<DVector<f64>> = chart.basis().iter().map(|e| e * &g).collect();
    d_set
        .hrep()
        .rows()
        .map(|(h, gd)| Halfspace {
            normal: DVector::from_iterator(eg.len(), eg.iter().map(|v| -h.dot(v))),
            offset: gd - h.dot(x_now) + h.dot(&og),
        })
        .collect()
}

/// `prev ∩ cuts`, capped to `l_max` vertices. When the cap applies, the
/// template outer approximation is intersected with `prev`; if that still
/// has too many vertices `prev` is kept.
pub fn refine_set(prev: &ParamSet, cuts: &[Halfspace], l_max: usize) -> Result<ParamSet, UncertaintyError> {
    let r = prev.chart.dim();
    let Some(poly) = &prev.poly else {
        if cuts.iter().all(|c| c.offset >= -1e-9 * (1.0 + c.offset.abs())) {
            return Ok(prev.clone());
        }
        return Err(UncertaintyError::EmptyResult);
    };
    if cuts.is_empty() {
        return Ok(prev.clone());
    }
    let mut a = DMatrix::zeros(cuts.len(), r);
    let mut b = DVector::zeros(cuts.len());
    for (i, c) in cuts.iter().enumerate() {
        if c.normal.len() != r {
            return Err(UncertaintyError::Invalid("cut dimension differs from chart".into()));
        }
        a.set_row(i, &c.normal.transpose());
        b[i] = c.offset;
    }
    let h = poly.hrep().stack(&HPolytope::new(a, b)?);
    let refined = Polytope::from_h(h)?;
    if refined.is_empty() {
        return Err(UncertaintyError::EmptyResult);
    }
    let refined = if refined.num_vertices() > l_max {
        let capped = polytope::cap_facets(&refined, l_max)?;
        let capped = polytope::intersect(&capped, poly)?;
        if capped.num_vertices() > l_max || capped.is_empty() {
            poly.clone()
        } else {
            capped
        }
    } else {
        refined
    };
    Ok(ParamSet {
        chart: prev.chart.clone(),
        poly: Some(refined),
    })
}

/// `ψ̄ = ψ̂ + κ (x_now - ψ̂ g) g' / (1 + g'g)`.
pub fn gradient_step(
    psi_hat_prev: &ParamMatrix,
    x_now: &DVector<f64>,
    g_prev: &DVector<f64>,
    kappa: f64,
) -> ParamMatrix {
    let e = prediction_error(psi_hat_prev, x_now, g_prev);
    psi_hat_prev + (e * g_prev.transpose()) * (kappa / (1.0 + g_prev.dot(g_prev)))
}

/// Frobenius-nearest point of `set` to `psi_bar`.
pub fn project_to_set(psi_bar: &ParamMatrix, set: &ParamSet) -> Result<ParamMatrix, UncertaintyError> {
    let chart = &set.chart;
    if psi_bar.shape() != chart.shape() {
        return Err(UncertaintyError::Invalid("estimate shape differs from chart".into()));
    }
    let Some(poly) = &set.poly else {
        return Ok(chart.origin().clone());
    };
    let c_bar = chart.coords(psi_bar);
    if chart.residual(psi_bar) <= 1e-9 && poly.contains(&c_bar, 1e-9) {
        return Ok(psi_bar.clone());
    }
    if poly.contains(&c_bar, 1e-12) {
        return Ok(chart.point(&c_bar));
    }
    let r = chart.dim();
    let h = poly.hrep();
    let prob =
        Problem::qp(DMatrix::identity(r, r) * 2.0, -&c_bar * 2.0).with_ineq(h.normals().clone(), h.offsets().clone());
    let out = solve_qp(&prob).map_err(|e| UncertaintyError::Invalid(e.to_string()))?;
    if !out.is_optimal() {
        return Err(UncertaintyError::Invalid(format!(
            "projection QP ended {:?}",
            out.status
        )));
    }
    Ok(chart.point(&out.x))
}

/// `conv(set ∪ {psi})`.
pub fn hull_with_point(set: &ParamSet, psi: &ParamMatrix) -> Result<ParamSet, UncertaintyError> {
    let res = set.chart.residual(psi);
    if res > 1e-8 {
        return Err(UncertaintyError::ChartViolation(res));
    }
    let Some(poly) = &set.poly else {
        return Ok(set.clone());
    };
    let c = set.chart.coords(psi);
    if poly.contains(&c, 1e-9) {
        return Ok(set.clone());
    }
    let mut pts = poly.vertices().to_vec();
    pts.push(c);
    Ok(ParamSet {
        chart: set.chart.clone(),
        poly: Some(Polytope::from_vertices_dim(pts, set.chart.dim())?),
    })
}

/// Matrix vertex lists of `Ψ_A`, `Ψ_B` and of the translated `Φ = Ψ - ψ̂`.
#[derive(Debug, Clone)]
pub struct ComponentVertices {
    pub psi_a: Vec<DMatrix<f64>>,
    pub psi_b: Vec<DMatrix<f64>>,
    pub phi_a: Vec<DMatrix<f64>>,
    pub phi_b: Vec<DMatrix<f64>>,
}

pub fn component_vertex_sets(set: &ParamSet, psi_hat: &ParamMatrix) -> ComponentVertices {
    let (ah, bh) = split_blocks(psi_hat);
    let mut out = ComponentVertices {
        psi_a: Vec::new(),
        psi_b: Vec::new(),
        phi_a: Vec::new(),
        phi_b: Vec::new(),
    };
    for v in set.vertices() {
        let (a, b) = split_blocks(&v);
        out.phi_a.push(&a - &ah);
        out.phi_b.push(&b - &bh);
        out.psi_a.push(a);
        out.psi_b.push(b);
    }
    out
}
