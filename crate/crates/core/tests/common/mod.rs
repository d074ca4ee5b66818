#![allow(dead_code)]

pub mod geo;

use std::path::PathBuf;

use adaptube::{ExperimentConfig, PlantConfig};
use nalgebra::{DMatrix, DVector};

pub fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

pub fn experiment(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&config_path(name)).expect("bundled config")
}

pub fn plant(name: &str) -> PlantConfig {
    experiment(name).plant().expect("valid plant")
}

pub fn paper() -> PlantConfig {
    plant("paper.json")
}

pub fn nominal() -> PlantConfig {
    plant("nominal.json")
}

pub fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_row_slice(x)
}

pub fn m(r: usize, c: usize, x: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(r, c, x)
}

/// Strictly convex QP `min 0.5 x'Hx + f'x, A x <= b` with a known feasible
/// point, drawn from `rng`.
pub struct RandomQp {
    pub h: DMatrix<f64>,
    pub f: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub feasible: DVector<f64>,
}

pub fn random_qp(rng: &mut impl rand::Rng, n: usize, m: usize) -> RandomQp {
    let l = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let h = &l * l.transpose() + DMatrix::identity(n, n) * 0.1;
    let f = DVector::from_fn(n, |_, _| rng.gen_range(-5.0..5.0));
    let a = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
    let feasible = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    let b = &a * &feasible + DVector::from_fn(m, |_, _| rng.gen_range(0.0..1.0));
    RandomQp { h, f, a, b, feasible }
}

/// Exhaustive active-set oracle: solve the equality-constrained KKT system
/// for every subset of inequality rows and keep the best point that is
/// primal feasible with nonnegative multipliers.
pub fn active_set_oracle(
    h: &DMatrix<f64>,
    f: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
) -> (DVector<f64>, f64) {
    let (n, m) = (h.nrows(), a.nrows());
    let mut best: Option<(DVector<f64>, f64)> = None;
    for mask in 0u32..(1 << m) {
        let rows: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        let k = rows.len();
        let mut kkt = DMatrix::zeros(n + k, n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(h);
        let mut rhs = DVector::zeros(n + k);
        rhs.rows_mut(0, n).copy_from(&(-f));
        for (j, &i) in rows.iter().enumerate() {
            for c in 0..n {
                kkt[(n + j, c)] = a[(i, c)];
                kkt[(c, n + j)] = a[(i, c)];
            }
            rhs[n + j] = b[i];
        }
        let Some(sol) = kkt.lu().solve(&rhs) else { continue };
        let x = sol.rows(0, n).into_owned();
        let lam = sol.rows(n, k);
        if lam.iter().any(|l| *l < -1e-9) || (a * &x - b).iter().any(|r| *r > 1e-9) {
            continue;
        }
        let obj = 0.5 * x.dot(&(h * &x)) + f.dot(&x);
        if best.as_ref().is_none_or(|(_, o)| obj < *o) {
            best = Some((x, obj));
        }
    }
    best.expect("feasible strictly convex QP has a KKT point")
}
