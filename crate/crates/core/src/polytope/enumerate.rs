use nalgebra::{DMatrix, DVector};

use super::{HPolytope, Polytope, PolytopeError, GEOM_TOL};
use crate::linalg::{affine_hull, inf_norm, null_space, point_scale};
use crate::solver::{solve_lp, Problem, SolveStatus};

/// Vertices of a bounded halfspace intersection, in lexicographic order.
pub fn enumerate_vertices(h: &HPolytope) -> Result<Vec<DVector<f64>>, PolytopeError> {
    let v = vertices_of(h)?;
    let mut out = canonical_from_points(&v, h.dim()).vertices().to_vec();
    out.sort_by(|a, b| a.as_slice().partial_cmp(b.as_slice()).expect("finite vertices"));
    Ok(out)
}

/// Irredundant facets of a full-dimensional vertex set.
pub fn enumerate_facets(vertices: &[DVector<f64>]) -> Result<HPolytope, PolytopeError> {
    let p = Polytope::from_vertices(vertices.to_vec())?;
    if !p.is_full_dim() {
        return Err(PolytopeError::Degenerate);
    }
    Ok(p.hrep().clone())
}

pub fn remove_redundant(h: &HPolytope) -> Result<HPolytope, PolytopeError> {
    let p = Polytope::from_h(h.clone())?;
    if p.is_empty() {
        return Err(PolytopeError::Empty);
    }
    Ok(p.hrep().clone())
}

fn box_bounds(h: &HPolytope) -> Result<f64, PolytopeError> {
    let d = h.dim();
    let mut scale: f64 = 1.0;
    for i in 0..d {
        for s in [-1.0, 1.0] {
            let mut c = DVector::zeros(d);
            c[i] = -s;
            let prob = Problem::lp(c).with_ineq(h.normals().clone(), h.offsets().clone());
            let out = solve_lp(&prob).map_err(|e| PolytopeError::Invalid(e.to_string()))?;
            match out.status {
                SolveStatus::Optimal => scale = scale.max(out.objective.abs()),
                SolveStatus::Infeasible => return Err(PolytopeError::Empty),
                SolveStatus::Unbounded => return Err(PolytopeError::Unbounded),
                SolveStatus::MaxIter => return Err(PolytopeError::Invalid("LP iteration limit".into())),
            }
        }
    }
    Ok(scale)
}

fn combinations(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    if k == 0 {
        f(&[]);
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Raw (possibly redundant) vertex candidates of a halfspace list.
pub(crate) fn vertices_of(h: &HPolytope) -> Result<Vec<DVector<f64>>, PolytopeError> {
    let d = h.dim();
    let scale = box_bounds(h)?;
    let tol = GEOM_TOL * scale;
    let mut out: Vec<DVector<f64>> = Vec::new();
    combinations(h.len(), d, |rows| {
        let mut a = DMatrix::zeros(d, d);
        let mut b = DVector::zeros(d);
        for (i, &r) in rows.iter().enumerate() {
            a.set_row(i, &h.normals().row(r));
            b[i] = h.offsets()[r];
        }
        let lu = a.clone().lu();
        if lu.determinant().abs() < 1e-12 {
            return;
        }
        if let Some(x) = lu.solve(&b) {
            if h.max_violation(&x) <= tol {
                out.push(x);
            }
        }
    });
    if out.is_empty() {
        // feasible by the LPs above, so only a numerically flat set lands here
        let c = chebyshev_point(h)?;
        out.push(c);
    }
    Ok(out)
}

fn chebyshev_point(h: &HPolytope) -> Result<DVector<f64>, PolytopeError> {
    let d = h.dim();
    let prob = Problem::lp(DVector::zeros(d)).with_ineq(h.normals().clone(), h.offsets().clone());
    let out = solve_lp(&prob).map_err(|e| PolytopeError::Invalid(e.to_string()))?;
    if out.status != SolveStatus::Optimal {
        return Err(PolytopeError::Empty);
    }
    Ok(out.x)
}

fn dedup(points: &[DVector<f64>], tol: f64) -> Vec<usize> {
    let mut keep: Vec<usize> = Vec::new();
    for (i, p) in points.iter().enumerate() {
        if !keep.iter().any(|&k| inf_norm(&(p - &points[k])) <= tol) {
            keep.push(i);
        }
    }
    keep
}

/// Extreme points and facets of a full-dimensional point set in R^k.
/// Returns indices into `pts` and unit-normal facets.
fn hull_full(pts: &[DVector<f64>], k: usize, tol: f64) -> (Vec<usize>, Vec<(DVector<f64>, f64)>) {
    match k {
        1 => {
            let (mut lo, mut hi) = (0, 0);
            for (i, p) in pts.iter().enumerate() {
                if p[0] < pts[lo][0] {
                    lo = i;
                }
                if p[0] > pts[hi][0] {
                    hi = i;
                }
            }
            let facets = vec![
                (DVector::from_element(1, -1.0), -pts[lo][0]),
                (DVector::from_element(1, 1.0), pts[hi][0]),
            ];
            (vec![lo, hi], facets)
        }
        2 => hull_2d(pts, tol),
        _ => hull_brute(pts, k, tol),
    }
}

fn cross(o: &DVector<f64>, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Andrew's monotone chain; counter-clockwise from the lexicographic minimum.
fn hull_2d(pts: &[DVector<f64>], tol: f64) -> (Vec<usize>, Vec<(DVector<f64>, f64)>) {
    let mut order: Vec<usize> = (0..pts.len()).collect();
    order.sort_by(|&i, &j| pts[i][0].total_cmp(&pts[j][0]).then(pts[i][1].total_cmp(&pts[j][1])));
    let turn_ok = |chain: &[usize], p: usize| {
        let o = &pts[chain[chain.len() - 2]];
        let a = &pts[chain[chain.len() - 1]];
        let b = &pts[p];
        let ob = (b - o).norm();
        cross(o, a, b) > tol * ob.max(tol)
    };
    let mut lower: Vec<usize> = Vec::new();
    for &p in &order {
        while lower.len() >= 2 && !turn_ok(&lower, p) {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<usize> = Vec::new();
    for &p in order.iter().rev() {
        while upper.len() >= 2 && !turn_ok(&upper, p) {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    let mut hull = lower;
    hull.extend(upper);
    let mut facets = Vec::with_capacity(hull.len());
    for i in 0..hull.len() {
        let a = &pts[hull[i]];
        let b = &pts[hull[(i + 1) % hull.len()]];
        let e = b - a;
        let n = DVector::from_vec(vec![e[1], -e[0]]) / e.norm();
        let off = n.dot(a);
        facets.push((n, off));
    }
    (hull, facets)
}

fn in_hull_of_others(pts: &[DVector<f64>], i: usize, cand: &[usize]) -> bool {
    let k = pts[i].len();
    let others: Vec<usize> = cand.iter().cloned().filter(|&j| j != i).collect();
    let m = others.len();
    if m == 0 {
        return false;
    }
    let mut aeq = DMatrix::zeros(k + 1, m);
    for (c, &j) in others.iter().enumerate() {
        for r in 0..k {
            aeq[(r, c)] = pts[j][r];
        }
        aeq[(k, c)] = 1.0;
    }
    let mut beq = DVector::zeros(k + 1);
    for r in 0..k {
        beq[r] = pts[i][r];
    }
    beq[k] = 1.0;
    let prob = Problem::lp(DVector::zeros(m))
        .with_eq(aeq, beq)
        .with_bounds(DVector::zeros(m), DVector::from_element(m, f64::INFINITY));
    matches!(solve_lp(&prob), Ok(o) if o.status == SolveStatus::Optimal)
}

fn hull_brute(pts: &[DVector<f64>], k: usize, tol: f64) -> (Vec<usize>, Vec<(DVector<f64>, f64)>) {
    let mut ext: Vec<usize> = (0..pts.len()).collect();
    let mut i = 0;
    while i < ext.len() {
        if in_hull_of_others(pts, ext[i], &ext) {
            ext.remove(i);
        } else {
            i += 1;
        }
    }
    let mut facets: Vec<(DVector<f64>, f64)> = Vec::new();
    combinations(ext.len(), k, |sub| {
        let base = &pts[ext[sub[0]]];
        let mut diffs = DMatrix::zeros(k - 1, k);
        for (r, &s) in sub[1..].iter().enumerate() {
            diffs.set_row(r, &(&pts[ext[s]] - base).transpose());
        }
        let ns = null_space(&diffs, 1e-10);
        if ns.len() != 1 {
            return;
        }
        let mut n = ns[0].clone();
        n /= n.norm();
        let mut off = n.dot(base);
        let vals: Vec<f64> = ext.iter().map(|&j| n.dot(&pts[j]) - off).collect();
        let above = vals.iter().any(|v| *v > tol);
        let below = vals.iter().any(|v| *v < -tol);
        if above && below {
            return;
        }
        if above {
            n.neg_mut();
            off = -off;
        }
        if !facets
            .iter()
            .any(|(m, o)| (m - &n).amax() <= 1e-9 && (o - off).abs() <= tol)
        {
            facets.push((n, off));
        }
    });
    ext.sort_by(|&a, &b| {
        for r in 0..k {
            let c = pts[a][r].total_cmp(&pts[b][r]);
            if c != std::cmp::Ordering::Equal {
                return c;
            }
        }
        std::cmp::Ordering::Equal
    });
    (ext, facets)
}

/// Canonical polytope (extreme vertices, irredundant halfspaces) of a nonempty point set.
pub(crate) fn canonical_from_points(points: &[DVector<f64>], dim: usize) -> Polytope {
    let scale = point_scale(points);
    let tol = GEOM_TOL * scale;
    let keep = dedup(points, tol);
    let pts: Vec<DVector<f64>> = keep.iter().map(|&i| points[i].clone()).collect();
    let aff = affine_hull(&pts, dim, GEOM_TOL);
    let k = aff.rank();

    if k == dim {
        let (idx, facets) = hull_full(&pts, dim, tol);
        if idx.len() > dim {
            let vertices = idx.iter().map(|&i| pts[i].clone()).collect();
            let rows: Vec<DVector<f64>> = facets.iter().map(|f| f.0.clone()).collect();
            let offs: Vec<f64> = facets.iter().map(|f| f.1).collect();
            return Polytope::from_parts(dim, vertices, HPolytope::from_rows(dim, &rows, &offs), Some(dim));
        }
    }
    // lower-dimensional: hull in affine coordinates, lifted back
    let k = k.min(dim - 1);
    let local: Vec<DVector<f64>> = pts.iter().map(|p| aff.coords(p)).collect();
    let mut basis = aff.basis.clone();
    let mut complement = aff.complement.clone();
    while basis.len() > k {
        complement.insert(0, basis.pop().expect("nonempty basis"));
    }
    let local: Vec<DVector<f64>> = local.iter().map(|c| c.rows(0, k).into_owned()).collect();
    let (idx, facets) = if k == 0 {
        (vec![0], Vec::new())
    } else {
        hull_full(&local, k, tol)
    };
    let vertices: Vec<DVector<f64>> = idx.iter().map(|&i| pts[i].clone()).collect();
    let mut rows = Vec::new();
    let mut offs = Vec::new();
    for c in &complement {
        let o = c.dot(&aff.origin);
        rows.push(c.clone());
        offs.push(o);
        rows.push(-c);
        offs.push(-o);
    }
    for (hn, g) in &facets {
        let mut n = DVector::zeros(dim);
        for (j, b) in basis.iter().enumerate() {
            n += b * hn[j];
        }
        let off = g + n.dot(&aff.origin);
        rows.push(n);
        offs.push(off);
    }
    let affine_dim = if vertices.len() == 1 { 0 } else { k };
    Polytope::from_parts(dim, vertices, HPolytope::from_rows(dim, &rows, &offs), Some(affine_dim))
}
