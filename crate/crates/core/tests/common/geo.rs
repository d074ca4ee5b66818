use adaptube::polytope::{HPolytope, Polytope};
use nalgebra::{DMatrix, DVector};

use super::v;

// Andrew's monotone chain; counter-clockwise, collinear points dropped.
pub fn hull_oracle(pts: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut p = pts.to_vec();
    p.sort_by(|a, b| a.partial_cmp(b).unwrap());
    p.dedup();
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for &q in &p {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], q) <= 1e-12 {
            lower.pop();
        }
        lower.push(q);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for &q in p.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], q) <= 1e-12 {
            upper.pop();
        }
        upper.push(q);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

pub fn shoelace(h: &[[f64; 2]]) -> f64 {
    let n = h.len();
    (0..n)
        .map(|i| h[i][0] * h[(i + 1) % n][1] - h[(i + 1) % n][0] * h[i][1])
        .sum::<f64>()
        .abs()
        / 2.0
}

pub fn from_points(pts: &[[f64; 2]]) -> Polytope {
    Polytope::from_vertices(pts.iter().map(|p| v(p)).collect()).unwrap()
}

// Intersect every facet pair, keep feasible points, deduplicate.
pub fn vertex_oracle(h: &HPolytope) -> Vec<DVector<f64>> {
    let mut out: Vec<DVector<f64>> = Vec::new();
    for i in 0..h.len() {
        for j in i + 1..h.len() {
            let a = DMatrix::from_rows(&[h.normal(i).transpose(), h.normal(j).transpose()]);
            let Some(inv) = a.try_inverse() else { continue };
            let x = inv * v(&[h.offset(i), h.offset(j)]);
            if h.max_violation(&x) <= 1e-9 && !out.iter().any(|y| (y - &x).amax() < 1e-7) {
                out.push(x);
            }
        }
    }
    out
}

pub fn directions(k: usize) -> Vec<DVector<f64>> {
    (0..k)
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / k as f64;
            v(&[a.cos(), a.sin()])
        })
        .collect()
}
