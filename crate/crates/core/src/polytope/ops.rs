use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::{HPolytope, Polytope, PolytopeError, GEOM_TOL};
use crate::linalg::{affine_hull, inf_norm};
use crate::solver::{solve_lp, solve_qp, Problem, SolveStatus};

/// Number of template directions used to cap planar sets.
pub const TEMPLATE_DIRECTIONS_2D: usize = 24;

fn check_dim(expected: usize, found: usize) -> Result<(), PolytopeError> {
    if expected != found {
        Err(PolytopeError::DimensionMismatch { expected, found })
    } else {
        Ok(())
    }
}

/// `h_P(d) = max_{x in P} d'x`; `-inf` for the empty set.
pub fn support(p: &Polytope, d: &DVector<f64>) -> f64 {
    p.vertices().iter().map(|v| v.dot(d)).fold(f64::NEG_INFINITY, f64::max)
}

pub fn contains_point(p: &Polytope, x: &DVector<f64>, tol: f64) -> bool {
    if p.is_empty() || x.len() != p.dim() {
        return false;
    }
    p.hrep().max_violation(x) <= tol
}

/// `inner ⊆ outer` up to `tol`, checked on the vertices of `inner`.
pub fn contains_set(outer: &Polytope, inner: &Polytope, tol: f64) -> bool {
    if inner.is_empty() {
        return true;
    }
    inner.vertices().iter().all(|v| contains_point(outer, v, tol))
}

pub fn minkowski_sum(p: &Polytope, q: &Polytope) -> Result<Polytope, PolytopeError> {
    check_dim(p.dim(), q.dim())?;
    if p.is_empty() || q.is_empty() {
        return Ok(Polytope::empty(p.dim()));
    }
    let mut pts = Vec::with_capacity(p.num_vertices() * q.num_vertices());
    for a in p.vertices() {
        for b in q.vertices() {
            pts.push(a + b);
        }
    }
    Polytope::from_vertices_dim(pts, p.dim())
}

/// `P ⊖ Q = {x : x + Q ⊆ P}`.
pub fn pontryagin_diff(p: &Polytope, q: &Polytope) -> Result<Polytope, PolytopeError> {
    check_dim(p.dim(), q.dim())?;
    if p.is_empty() {
        return Ok(Polytope::empty(p.dim()));
    }
    if q.is_empty() {
        return Err(PolytopeError::Empty);
    }
    let h = p.hrep();
    let offs: Vec<f64> = h.rows().map(|(n, g)| g - support(q, &n)).collect();
    let rows: Vec<DVector<f64>> = h.rows().map(|(n, _)| n).collect();
    Polytope::from_h(HPolytope::from_rows(p.dim(), &rows, &offs))
}

pub fn intersect(p: &Polytope, q: &Polytope) -> Result<Polytope, PolytopeError> {
    check_dim(p.dim(), q.dim())?;
    if p.is_empty() || q.is_empty() {
        return Ok(Polytope::empty(p.dim()));
    }
    Polytope::from_h(p.hrep().stack(q.hrep()))
}

/// `{M x + c : x in P}`.
pub fn affine_image(m: &DMatrix<f64>, p: &Polytope, c: Option<&DVector<f64>>) -> Result<Polytope, PolytopeError> {
    check_dim(m.ncols(), p.dim())?;
    if let Some(c) = c {
        check_dim(m.nrows(), c.len())?;
    }
    if p.is_empty() {
        return Ok(Polytope::empty(m.nrows()));
    }
    let pts = p
        .vertices()
        .iter()
        .map(|v| match c {
            Some(c) => m * v + c,
            None => m * v,
        })
        .collect();
    Polytope::from_vertices_dim(pts, m.nrows())
}

/// `conv{M_i x : i, x in P}`, the tightest convex outer bound of `{M x : M in conv(M_i), x in P}`.
pub fn matrix_set_product(mats: &[DMatrix<f64>], p: &Polytope) -> Result<Polytope, PolytopeError> {
    let first = mats.first().ok_or(PolytopeError::Empty)?;
    let rows = first.nrows();
    if p.is_empty() {
        return Ok(Polytope::empty(rows));
    }
    let mut pts = Vec::with_capacity(mats.len() * p.num_vertices());
    for m in mats {
        check_dim(rows, m.nrows())?;
        check_dim(m.ncols(), p.dim())?;
        for v in p.vertices() {
            pts.push(m * v);
        }
    }
    Polytope::from_vertices_dim(pts, rows)
}

/// Minimum-norm convex weights `lambda >= 0, sum = 1, V lambda = x` over
/// the vertices of `p`.
pub fn barycentric_coordinates(p: &Polytope, x: &DVector<f64>, tol: f64) -> Result<DVector<f64>, PolytopeError> {
    check_dim(p.dim(), x.len())?;
    if p.is_empty() {
        return Err(PolytopeError::Empty);
    }
    weights_for(p.vertices(), x, tol)
}

pub(crate) fn weights_for(verts: &[DVector<f64>], x: &DVector<f64>, tol: f64) -> Result<DVector<f64>, PolytopeError> {
    let d = x.len();
    let m = verts.len();
    let mut vmat = DMatrix::zeros(d, m);
    for (j, v) in verts.iter().enumerate() {
        vmat.set_column(j, v);
    }
    let mut aeq = DMatrix::zeros(d + 1, m);
    aeq.rows_mut(0, d).copy_from(&vmat);
    aeq.row_mut(d).fill(1.0);
    let mut beq = DVector::zeros(d + 1);
    beq.rows_mut(0, d).copy_from(x);
    beq[d] = 1.0;
    let lower = DVector::zeros(m);
    let upper = DVector::from_element(m, f64::INFINITY);
    let prob = Problem::qp(DMatrix::identity(m, m), DVector::zeros(m))
        .with_eq(aeq, beq)
        .with_bounds(lower.clone(), upper.clone());
    let out = solve_qp(&prob).map_err(|e| PolytopeError::Invalid(e.to_string()))?;
    let lam = if out.is_optimal() {
        out.x
    } else {
        // x may sit just outside the hull: take the nearest hull point
        let w = 1e6;
        let h = vmat.transpose() * &vmat * (2.0 * w) + DMatrix::identity(m, m) * 2e-9;
        let f = -(vmat.transpose() * x) * (2.0 * w);
        let prob = Problem::qp(h, f)
            .with_eq(DMatrix::from_element(1, m, 1.0), DVector::from_element(1, 1.0))
            .with_bounds(lower, upper);
        let out = solve_qp(&prob).map_err(|e| PolytopeError::Invalid(e.to_string()))?;
        if !out.is_optimal() {
            return Err(PolytopeError::NotInHull);
        }
        out.x
    };
    let lam = lam.map(|l| l.max(0.0));
    let lam = &lam / lam.sum();
    let scale = crate::linalg::point_scale(verts);
    if inf_norm(&(&vmat * &lam - x)) > tol * scale {
        return Err(PolytopeError::NotInHull);
    }
    Ok(lam)
}

/// Lebesgue measure in the ambient dimension (zero for flat sets).
pub fn volume(p: &Polytope) -> f64 {
    if !p.is_full_dim() {
        return 0.0;
    }
    volume_full(p.vertices(), p.dim())
}

fn volume_full(verts: &[DVector<f64>], d: usize) -> f64 {
    match d {
        1 => {
            let lo = verts.iter().map(|v| v[0]).fold(f64::INFINITY, f64::min);
            let hi = verts.iter().map(|v| v[0]).fold(f64::NEG_INFINITY, f64::max);
            hi - lo
        }
        2 => {
            // vertices are in counter-clockwise order
            let n = verts.len();
            let mut a = 0.0;
            for i in 0..n {
                let p = &verts[i];
                let q = &verts[(i + 1) % n];
                a += p[0] * q[1] - p[1] * q[0];
            }
            0.5 * a.abs()
        }
        _ => {
            // cone decomposition over facets from an interior point
            let p = match Polytope::from_vertices_dim(verts.to_vec(), d) {
                Ok(p) => p,
                Err(_) => return 0.0,
            };
            let mut c = DVector::zeros(d);
            for v in p.vertices() {
                c += v;
            }
            c /= p.num_vertices() as f64;
            let tol = GEOM_TOL * p.scale();
            let mut vol = 0.0;
            for (n, g) in p.hrep().rows() {
                let on: Vec<DVector<f64>> = p
                    .vertices()
                    .iter()
                    .filter(|v| (n.dot(v) - g).abs() <= 10.0 * tol)
                    .cloned()
                    .collect();
                if on.len() < d {
                    continue;
                }
                let aff = affine_hull(&on, d, GEOM_TOL);
                let local: Vec<DVector<f64>> = on.iter().map(|v| aff.coords(v).rows(0, d - 1).into_owned()).collect();
                let local = match Polytope::from_vertices_dim(local, d - 1) {
                    Ok(l) if l.is_full_dim() => l,
                    _ => continue,
                };
                let h = g - n.dot(&c);
                vol += h * volume_full(local.vertices(), d - 1) / d as f64;
            }
            vol
        }
    }
}

/// Center and radius of the largest inscribed ball.
pub fn chebyshev_center(p: &Polytope) -> Result<(DVector<f64>, f64), PolytopeError> {
    if p.is_empty() {
        return Err(PolytopeError::Empty);
    }
    if !p.is_full_dim() {
        let mut c = DVector::zeros(p.dim());
        for v in p.vertices() {
            c += v;
        }
        return Ok((c / p.num_vertices() as f64, 0.0));
    }
    let d = p.dim();
    let h = p.hrep();
    let mut a = DMatrix::zeros(h.len(), d + 1);
    for k in 0..h.len() {
        for j in 0..d {
            a[(k, j)] = h.normals()[(k, j)];
        }
        a[(k, d)] = 1.0;
    }
    let mut c = DVector::zeros(d + 1);
    c[d] = -1.0;
    let mut lower = DVector::from_element(d + 1, f64::NEG_INFINITY);
    lower[d] = 0.0;
    let upper = DVector::from_element(d + 1, f64::INFINITY);
    let prob = Problem::lp(c)
        .with_ineq(a, h.offsets().clone())
        .with_bounds(lower, upper);
    let out = solve_lp(&prob).map_err(|e| PolytopeError::Invalid(e.to_string()))?;
    match out.status {
        SolveStatus::Optimal => Ok((out.x.rows(0, d).into_owned(), out.x[d])),
        SolveStatus::Infeasible => Err(PolytopeError::Empty),
        _ => Err(PolytopeError::Invalid("Chebyshev LP failed".into())),
    }
}

/// Template directions: `count` equally spaced unit vectors in the plane;
/// in higher dimensions the normalised nonzero points of `{-1,0,1}^d`,
/// thinned to axis and diagonal directions when that exceeds `count`.
pub(crate) fn template_directions(d: usize, count: usize) -> Vec<DVector<f64>> {
    match d {
        1 => vec![DVector::from_element(1, 1.0), DVector::from_element(1, -1.0)],
        2 => (0..count.max(3))
            .map(|i| {
                let th = 2.0 * PI * i as f64 / count.max(3) as f64;
                DVector::from_vec(vec![th.cos(), th.sin()])
            })
            .collect(),
        _ => {
            let mut full = Vec::new();
            for code in 0..3usize.pow(d as u32) {
                let mut v = DVector::zeros(d);
                let mut c = code;
                for j in 0..d {
                    v[j] = (c % 3) as f64 - 1.0;
                    c /= 3;
                }
                if v.norm() > 0.0 {
                    full.push(v.normalize());
                }
            }
            if full.len() <= count {
                return full;
            }
            let thin: Vec<DVector<f64>> = full
                .iter()
                .filter(|v| {
                    let nz = v.iter().filter(|x| x.abs() > 0.0).count();
                    nz == 1 || nz == d
                })
                .cloned()
                .collect();
            if thin.len() <= count {
                return thin;
            }
            full.into_iter()
                .filter(|v| v.iter().filter(|x| x.abs() > 0.0).count() == 1)
                .collect()
        }
    }
}

/// Outer approximation with at most `max` facets via a direction template.
/// Sets already within the cap are returned unchanged.
pub fn cap_facets(p: &Polytope, max: usize) -> Result<Polytope, PolytopeError> {
    if p.is_empty() || p.num_facets() <= max && p.num_vertices() <= max.max(p.dim() + 1) {
        return Ok(p.clone());
    }
    let dirs = template_directions(p.dim(), max);
    let offs: Vec<f64> = dirs.iter().map(|t| support(p, t)).collect();
    Polytope::from_h(HPolytope::from_rows(p.dim(), &dirs, &offs))
}

/// Outer approximation of a full-dimensional `p` with at most `max` facets
/// and vertices, obtained by greedily dropping the facet whose removal adds the least
/// volume. Unlike [`cap_facets`] the result keeps `p`'s own normals.
pub fn drop_facets(p: &Polytope, max: usize) -> Result<Polytope, PolytopeError> {
    let small = |q: &Polytope| q.num_facets() <= max && q.num_vertices() <= max;
    if p.is_empty() || !p.is_full_dim() || small(p) {
        return Ok(p.clone());
    }
    let mut rows: Vec<(DVector<f64>, f64)> = p.hrep().rows().collect();
    let mut cur = p.clone();
    while !small(&cur) {
        if rows.len() <= p.dim() + 1 {
            return cap_facets(p, max);
        }
        let mut best: Option<(f64, Polytope)> = None;
        for k in 0..rows.len() {
            let (dirs, offs): (Vec<_>, Vec<_>) = rows
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != k)
                .map(|(_, (h, g))| (h.clone(), *g))
                .unzip();
            let Ok(q) = Polytope::from_h(HPolytope::from_rows(p.dim(), &dirs, &offs)) else {
                continue;
            };
            let v = volume(&q);
            if best.as_ref().is_none_or(|(bv, _)| v < *bv) {
                best = Some((v, q));
            }
        }
        let Some((_, q)) = best else {
            return cap_facets(p, max);
        };
        cur = q;
        // dropping one facet can make others redundant
        rows = cur.hrep().rows().collect();
    }
    Ok(cur)
}
