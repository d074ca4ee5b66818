mod common;

use adaptube::polytope::{
    affine_image, barycentric_coordinates, chebyshev_center, contains_point, contains_set, enumerate_facets,
    enumerate_vertices, intersect, matrix_set_product, minkowski_sum, pontryagin_diff, support, volume, HPolytope,
    Polytope, PolytopeError,
};
use adaptube::solver::{solve_lp, Problem};
use common::geo::{directions, from_points, hull_oracle, shoelace, vertex_oracle};
use common::{m, v};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn unit_box() -> Polytope {
    Polytope::cube(2, 1.0).unwrap()
}

fn boxed(lo: [f64; 2], hi: [f64; 2]) -> Polytope {
    Polytope::from_box(&v(&lo), &v(&hi)).unwrap()
}

fn same_set(a: &Polytope, b: &Polytope, tol: f64) -> bool {
    contains_set(a, b, tol) && contains_set(b, a, tol)
}

fn lp_support(p: &Polytope, d: &DVector<f64>) -> f64 {
    let h = p.hrep();
    let out = solve_lp(&Problem::lp(-d.clone()).with_ineq(h.normals().clone(), h.offsets().clone())).unwrap();
    assert!(out.is_optimal());
    -out.objective
}

fn grid(p: &Polytope, k: usize) -> Vec<DVector<f64>> {
    let (lo, hi) = p.bounding_box().unwrap();
    let mut out = Vec::with_capacity(k * k);
    for i in 0..k {
        for j in 0..k {
            let s = i as f64 / (k - 1) as f64;
            let t = j as f64 / (k - 1) as f64;
            out.push(v(&[lo[0] + s * (hi[0] - lo[0]), lo[1] + t * (hi[1] - lo[1])]));
        }
    }
    out
}

fn points() -> impl Strategy<Value = Vec<[f64; 2]>> {
    prop::collection::vec(prop::array::uniform2(-3.0..3.0f64), 6..20)
        .prop_filter("full-dimensional", |p| shoelace(&hull_oracle(p)) > 0.05)
}

// Bounded H-rep: sorted angles with gaps below pi and positive offsets.
fn hrep() -> impl Strategy<Value = HPolytope> {
    (
        prop::collection::vec(0.0..std::f64::consts::TAU, 8),
        prop::collection::vec(0.5..2.0f64, 8),
    )
        .prop_map(|(mut ang, off)| {
            ang.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let rows: Vec<_> = ang.iter().map(|a| v(&[a.cos(), a.sin()]).transpose()).collect();
            HPolytope::new(DMatrix::from_rows(&rows), DVector::from_vec(off)).unwrap()
        })
        .prop_filter("bounded", |h| {
            let mut a: Vec<f64> = (0..h.len()).map(|k| h.normal(k)[1].atan2(h.normal(k)[0])).collect();
            a.sort_by(|x, y| x.partial_cmp(y).unwrap());
            let gaps = a
                .windows(2)
                .map(|w| w[1] - w[0])
                .chain([a[0] + std::f64::consts::TAU - a[a.len() - 1]]);
            gaps.fold(0.0, f64::max) < std::f64::consts::PI - 0.1
        })
}

#[test]
fn box_vertices() {
    let h = unit_box().hrep().clone();
    let mut vs = enumerate_vertices(&h).unwrap();
    vs.sort_by(|a, b| a.as_slice().partial_cmp(b.as_slice()).unwrap());
    assert_eq!(
        vs,
        vec![v(&[-1.0, -1.0]), v(&[-1.0, 1.0]), v(&[1.0, -1.0]), v(&[1.0, 1.0])]
    );
}

#[test]
fn vertices_come_out_lexicographic() {
    let vs = enumerate_vertices(unit_box().hrep()).unwrap();
    assert!(vs.windows(2).all(|w| w[0].as_slice() <= w[1].as_slice()));
}

#[test]
fn half_plane_is_unbounded() {
    let h = HPolytope::new(m(1, 2, &[1.0, 0.0]), v(&[1.0])).unwrap();
    assert_eq!(enumerate_vertices(&h), Err(PolytopeError::Unbounded));
}

#[test]
fn infeasible_system_is_empty() {
    let h = HPolytope::new(m(2, 1, &[1.0, -1.0]), v(&[0.0, -1.0])).unwrap();
    assert_eq!(enumerate_vertices(&h), Err(PolytopeError::Empty));
}

#[test]
fn triangle_and_square_facets() {
    let tri = enumerate_facets(&[v(&[0.0, 0.0]), v(&[1.0, 0.0]), v(&[0.0, 1.0])]).unwrap();
    assert_eq!(tri.len(), 3);
    let sq = enumerate_facets(unit_box().vertices()).unwrap();
    assert_eq!(sq.len(), 4);
    for (h, g) in sq.rows() {
        assert!((h.norm() - 1.0).abs() < 1e-12);
        assert!((g - 1.0).abs() < 1e-12);
        assert!((h.amax() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn collinear_vertices_are_degenerate() {
    let pts = [v(&[0.0, 0.0]), v(&[1.0, 1.0]), v(&[2.0, 2.0])];
    assert_eq!(enumerate_facets(&pts), Err(PolytopeError::Degenerate));
}

#[test]
fn minkowski_examples() {
    let s = minkowski_sum(&unit_box(), &unit_box()).unwrap();
    assert!(same_set(&s, &Polytope::cube(2, 2.0).unwrap(), 1e-12));
    let tri = from_points(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
    assert!(same_set(
        &minkowski_sum(&tri, &Polytope::point(v(&[0.0, 0.0]))).unwrap(),
        &tri,
        1e-12
    ));
    assert!(matches!(
        minkowski_sum(&tri, &Polytope::cube(3, 1.0).unwrap()),
        Err(PolytopeError::DimensionMismatch { .. })
    ));
}

#[test]
fn pontryagin_examples() {
    let d = pontryagin_diff(&Polytope::cube(2, 2.0).unwrap(), &unit_box()).unwrap();
    assert!(same_set(&d, &unit_box(), 1e-12));
    let tri = from_points(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
    assert!(same_set(
        &pontryagin_diff(&tri, &Polytope::point(v(&[0.0, 0.0]))).unwrap(),
        &tri,
        1e-12
    ));
    assert!(pontryagin_diff(&unit_box(), &Polytope::cube(2, 2.0).unwrap())
        .unwrap()
        .is_empty());
}

#[test]
fn intersect_examples() {
    let i = intersect(&Polytope::cube(2, 2.0).unwrap(), &boxed([-1.0, -1.0], [3.0, 3.0])).unwrap();
    assert!(same_set(&i, &boxed([-1.0, -1.0], [2.0, 2.0]), 1e-12));
    assert!(same_set(
        &intersect(&unit_box(), &unit_box()).unwrap(),
        &unit_box(),
        1e-12
    ));
    assert!(intersect(&unit_box(), &boxed([2.0, 2.0], [3.0, 3.0]))
        .unwrap()
        .is_empty());
}

#[test]
fn support_examples() {
    assert_eq!(support(&unit_box(), &v(&[1.0, 1.0])), 2.0);
    let tri = from_points(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
    assert_eq!(support(&tri, &v(&[0.0, 0.0])), 0.0);
}

#[test]
fn affine_image_examples() {
    let p = from_points(&[[0.0, 0.0], [2.0, 0.5], [1.0, 2.0]]);
    assert!(same_set(
        &affine_image(&DMatrix::identity(2, 2), &p, None).unwrap(),
        &p,
        1e-12
    ));
    let a = v(&[0.3, -0.7]);
    let img = affine_image(&DMatrix::zeros(2, 2), &p, Some(&a)).unwrap();
    assert_eq!(img.vertices(), &[a]);
    let half = affine_image(&(DMatrix::identity(2, 2) * 0.5), &Polytope::cube(2, 2.0).unwrap(), None).unwrap();
    assert!(same_set(&half, &unit_box(), 1e-12));
    assert!(matches!(
        affine_image(&DMatrix::identity(3, 3), &p, None),
        Err(PolytopeError::DimensionMismatch { .. })
    ));
}

#[test]
fn matrix_set_product_examples() {
    let p = from_points(&[[0.0, 0.0], [2.0, 0.5], [1.0, 2.0]]);
    assert!(same_set(
        &matrix_set_product(&[DMatrix::identity(2, 2)], &p).unwrap(),
        &p,
        1e-12
    ));
    let z = matrix_set_product(&[DMatrix::zeros(2, 2)], &p).unwrap();
    assert_eq!(z.vertices(), &[v(&[0.0, 0.0])]);
    let mats = [DMatrix::identity(2, 2) * 0.5, DMatrix::identity(2, 2) * 1.5];
    let prod = matrix_set_product(&mats, &unit_box()).unwrap();
    // explicit pairwise products, then hull
    let pairs: Vec<[f64; 2]> = mats
        .iter()
        .flat_map(|mm| unit_box().vertices().iter().map(move |x| mm * x).collect::<Vec<_>>())
        .map(|x| [x[0], x[1]])
        .collect();
    assert!(same_set(&prod, &from_points(&hull_oracle(&pairs)), 1e-12));
    assert!(same_set(&prod, &Polytope::cube(2, 1.5).unwrap(), 1e-12));
}

#[test]
fn membership_examples() {
    let b = unit_box();
    assert!(contains_point(&b, &v(&[0.0, 0.0]), 0.0));
    assert!(!contains_point(&b, &v(&[2.0, 0.0]), 1e-9));
    assert!(contains_point(&b, &v(&[1.0, 0.0]), 1e-9));
    assert!(contains_set(&b, &b, 0.0));
    assert!(!contains_set(&b, &Polytope::cube(2, 2.0).unwrap(), 1e-9));
}

#[test]
fn barycentric_examples() {
    let tri = from_points(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
    let at = |x: &DVector<f64>| barycentric_coordinates(&tri, x, 1e-9).unwrap();
    for (k, vert) in tri.vertices().iter().enumerate() {
        let w = at(vert);
        for (j, wj) in w.iter().enumerate() {
            assert!((wj - if j == k { 1.0 } else { 0.0 }).abs() < 1e-9);
        }
    }
    let c = at(&v(&[1.0 / 3.0, 1.0 / 3.0]));
    assert!(c.iter().all(|w| (w - 1.0 / 3.0).abs() < 1e-9));
    assert_eq!(
        barycentric_coordinates(&tri, &v(&[1.0, 1.0]), 1e-7),
        Err(PolytopeError::NotInHull)
    );
    let pt = Polytope::point(v(&[0.4, 0.4]));
    let w = barycentric_coordinates(&pt, &v(&[0.4, 0.4]), 1e-9).unwrap();
    assert!((w.sum() - 1.0).abs() < 1e-12);
}

#[test]
fn volume_examples() {
    assert!((volume(&unit_box()) - 4.0).abs() < 1e-12);
    let tri = from_points(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
    assert!((volume(&tri) - 0.5).abs() < 1e-12);
    assert!((volume(&tri.scaled(2.0)) - 2.0).abs() < 1e-12);
    assert!((volume(&Polytope::cube(3, 1.0).unwrap()) - 8.0).abs() < 0.16);
}

#[test]
fn chebyshev_examples() {
    let (c, r) = chebyshev_center(&unit_box()).unwrap();
    assert!(c.amax() < 1e-9 && (r - 1.0).abs() < 1e-9);
    let seg = from_points(&[[0.0, 0.0], [1.0, 1.0]]);
    assert!(chebyshev_center(&seg).unwrap().1.abs() < 1e-9);
    let (c, r) = chebyshev_center(&boxed([0.0, 0.0], [2.0, 2.0])).unwrap();
    assert!((c - v(&[1.0, 1.0])).amax() < 1e-9 && (r - 1.0).abs() < 1e-9);
    assert_eq!(chebyshev_center(&Polytope::empty(2)), Err(PolytopeError::Empty));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn hrep_round_trip(h in hrep()) {
        let vs = enumerate_vertices(&h).unwrap();
        let oracle = vertex_oracle(&h);
        prop_assert_eq!(vs.len(), oracle.len());
        for x in &oracle {
            prop_assert!(vs.iter().any(|y| (y - x).amax() < 1e-7));
        }
        let back = enumerate_facets(&vs).unwrap();
        let p = Polytope::from_h(h.clone()).unwrap();
        let q = Polytope::from_h(back).unwrap();
        prop_assert!(same_set(&p, &q, 1e-8));
    }

    #[test]
    fn hull_matches_monotone_chain(pts in points()) {
        let p = from_points(&pts);
        let oracle = hull_oracle(&pts);
        prop_assert_eq!(p.num_vertices(), oracle.len());
        for o in &oracle {
            prop_assert!(p.vertices().iter().any(|x| (x - v(o)).amax() < 1e-9));
        }
        prop_assert_eq!(p.num_facets(), oracle.len());
        prop_assert!((volume(&p) - shoelace(&oracle)).abs() < 1e-9);
    }

    #[test]
    fn support_is_additive(a in points(), b in points()) {
        let (p, q) = (from_points(&a), from_points(&b));
        let s = minkowski_sum(&p, &q).unwrap();
        for d in directions(64) {
            prop_assert!((support(&s, &d) - support(&p, &d) - support(&q, &d)).abs() < 1e-9);
        }
        // vertex-pair enumeration
        let pairs: Vec<[f64; 2]> = a.iter().flat_map(|x| b.iter().map(move |y| [x[0] + y[0], x[1] + y[1]])).collect();
        prop_assert!(same_set(&s, &from_points(&hull_oracle(&pairs)), 1e-7));
    }

    #[test]
    fn support_agrees_with_lp(a in points(), ang in 0.0..std::f64::consts::TAU) {
        let p = from_points(&a);
        let d = v(&[ang.cos(), ang.sin()]) * 1.7;
        prop_assert!((support(&p, &d) - lp_support(&p, &d)).abs() < 1e-7);
    }

    #[test]
    fn pontryagin_then_sum_stays_inside(a in points(), b in points()) {
        let p = from_points(&a);
        let q = from_points(&b).scaled(0.3);
        let d = pontryagin_diff(&p, &q).unwrap();
        if !d.is_empty() {
            let back = minkowski_sum(&d, &q).unwrap();
            for x in grid(&back, 50) {
                if contains_point(&back, &x, 0.0) {
                    prop_assert!(contains_point(&p, &x, 1e-7));
                }
            }
        }
    }

    #[test]
    fn intersection_matches_grid(a in points(), b in points()) {
        let (p, q) = (from_points(&a), from_points(&b));
        let i = intersect(&p, &q).unwrap();
        for x in grid(&p, 40) {
            let both = p.hrep().max_violation(&x).max(q.hrep().max_violation(&x));
            if both.abs() > 1e-7 && !i.is_empty() {
                prop_assert_eq!(contains_point(&i, &x, 0.0), both < 0.0);
            } else if i.is_empty() {
                prop_assert!(both > -1e-7);
            }
        }
    }

    #[test]
    fn singleton_product_is_affine_image(pts in points(), e in prop::array::uniform4(-2.0..2.0f64)) {
        let p = from_points(&pts);
        let mm = m(2, 2, &e);
        let a = matrix_set_product(std::slice::from_ref(&mm), &p).unwrap();
        let b = affine_image(&mm, &p, None).unwrap();
        prop_assert!(same_set(&a, &b, 1e-9));
    }

    #[test]
    fn barycentric_reconstructs(pts in points(), w in prop::collection::vec(0.0..1.0f64, 20)) {
        let p = from_points(&pts);
        let k = p.num_vertices();
        let s: f64 = w[..k].iter().sum::<f64>().max(1e-9);
        let x = p.vertices().iter().zip(&w[..k]).fold(DVector::zeros(2), |acc, (vx, wi)| acc + vx * (wi / s));
        let tau = barycentric_coordinates(&p, &x, 1e-7).unwrap();
        prop_assert!((tau.sum() - 1.0).abs() < 1e-9);
        prop_assert!(tau.iter().all(|t| *t >= -1e-9 && *t <= 1.0 + 1e-9));
        let back = p.vertices().iter().zip(tau.iter()).fold(DVector::zeros(2), |acc, (vx, t)| acc + vx * *t);
        prop_assert!((back - x).amax() < 1e-7);
    }

    #[test]
    fn volume_is_monotone(pts in points(), s in 0.1..1.0f64, c in prop::array::uniform2(-0.2..0.2f64)) {
        let p = from_points(&pts);
        let (ctr, _) = chebyshev_center(&p).unwrap();
        let inner = p.translated(&-&ctr).scaled(s).translated(&ctr);
        prop_assert!(contains_set(&p, &inner, 1e-9));
        prop_assert!(volume(&inner) <= volume(&p) + 1e-9);
        let shifted = intersect(&p, &p.translated(&v(&c))).unwrap();
        if !shifted.is_empty() {
            prop_assert!(volume(&shifted) <= volume(&p) + 1e-9);
        }
    }

    #[test]
    fn shrunk_copy_is_contained(pts in points(), s in 0.0..0.95f64) {
        let p = from_points(&pts);
        let (ctr, _) = chebyshev_center(&p).unwrap();
        let inner = p.translated(&-&ctr).scaled(s).translated(&ctr);
        prop_assert!(contains_set(&p, &inner, 1e-9));
    }

    #[test]
    fn facets_are_supported(pts in points()) {
        let p = from_points(&pts);
        for (h, g) in p.hrep().rows() {
            prop_assert!((h.norm() - 1.0).abs() < 1e-12);
            let touching = p.vertices().iter().filter(|x| (h.dot(x) - g).abs() < 1e-9).count();
            prop_assert!(touching >= 2);
        }
        for x in p.vertices() {
            prop_assert!(p.hrep().max_violation(x) <= 1e-9);
        }
    }
}
