//! Disturbance sets, forward reach sets, the tube cross-section shape, the
//! terminal set and the gain acceptance test.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::polytope::{
    self, affine_image, cap_facets, chebyshev_center, contains_set, drop_facets, intersect, matrix_set_product,
    minkowski_sum, support, HPolytope, Polytope, PolytopeError,
};
use crate::solver::{min_eig_psd_check, GainPair};

/// Largest power tried when bounding the minimal RPI set.
pub const S_MAX: usize = 50;
pub const RHO_MAX: f64 = 0.5;
/// Iteration cap of the terminal-set recursion.
pub const K_MAX: usize = 200;
/// Half-width of the box added to a flat disturbance set before building the tube shape.
pub const FLAT_W_INFLATION: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthesisError {
    #[error("closed loop does not contract the disturbance set within {S_MAX} steps")]
    NoContraction,
    #[error("terminal set is empty or has no interior")]
    NotFullDim,
    #[error("terminal set recursion did not converge in {0} iterations")]
    NoConvergence(usize),
    #[error("capped tube shape is not robustly invariant after growth")]
    RpiFailure,
    #[error(transparent)]
    Geometry(#[from] PolytopeError),
}

/// Set-size caps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Caps {
    /// Tube-shape vertices.
    pub m_max: usize,
    /// Parameter-set vertices.
    pub l_max: usize,
    /// Facets of outer-bounding sets.
    pub f_max: usize,
}

impl Default for Caps {
    fn default() -> Self {
        Caps {
            m_max: 12,
            l_max: 16,
            f_max: 40,
        }
    }
}

/// `Φ_A X ⊕ Φ_B U ⊕ D`, capped to `f_max` facets.
pub fn lumped_disturbance_set(
    phi_a: &[DMatrix<f64>],
    phi_b: &[DMatrix<f64>],
    x_set: &Polytope,
    u_set: &Polytope,
    d_set: &Polytope,
    f_max: usize,
) -> Result<Polytope, SynthesisError> {
    let ab = minkowski_sum(&matrix_set_product(phi_a, x_set)?, &matrix_set_product(phi_b, u_set)?)?;
    Ok(cap_facets(&minkowski_sum(&ab, d_set)?, f_max)?)
}

/// `X_reach[0] = {x_t}`, `X_reach[i+1] = (Ψ_A X_reach[i] ⊕ Ψ_B U ⊕ D) ∩ X`.
#[allow(clippy::too_many_arguments)]
pub fn reach_sets(
    psi_a: &[DMatrix<f64>],
    psi_b: &[DMatrix<f64>],
    x_t: &DVector<f64>,
    x_set: &Polytope,
    u_set: &Polytope,
    d_set: &Polytope,
    horizon: usize,
    f_max: usize,
) -> Result<Vec<Polytope>, SynthesisError> {
    let bu_d = minkowski_sum(&matrix_set_product(psi_b, u_set)?, d_set)?;
    let mut out = vec![Polytope::point(x_t.clone())];
    while out.len() < horizon {
        let prev = out.last().expect("nonempty");
        let next = minkowski_sum(&matrix_set_product(psi_a, prev)?, &bu_d)?;
        let next = intersect(&cap_facets(&next, f_max)?, x_set)?;
        out.push(next);
    }
    Ok(out)
}

/// `W_step[i] = Φ_A X_reach[i] ⊕ Φ_B U ⊕ D`.
pub fn stepwise_disturbance_sets(
    phi_a: &[DMatrix<f64>],
    phi_b: &[DMatrix<f64>],
    x_reach: &[Polytope],
    u_set: &Polytope,
    d_set: &Polytope,
    f_max: usize,
) -> Result<Vec<Polytope>, SynthesisError> {
    let bu_d = minkowski_sum(&matrix_set_product(phi_b, u_set)?, d_set)?;
    x_reach
        .iter()
        .map(|xr| {
            let w = minkowski_sum(&matrix_set_product(phi_a, xr)?, &bu_d)?;
            Ok(cap_facets(&w, f_max)?)
        })
        .collect()
}

/// Lumped, per-step and reach sets used by one optimal control problem.
#[derive(Debug, Clone)]
pub struct DisturbanceSets {
    pub w_global: Polytope,
    pub w_step: Vec<Polytope>,
    pub x_reach: Vec<Polytope>,
}

/// Cross-section `S` of the homothetic tube.
#[derive(Debug, Clone)]
pub struct TubeShape {
    pub set: Polytope,
    /// Number of closed-loop powers summed.
    pub steps: usize,
    pub rho: f64,
    /// Number of 1% enlargements needed after capping.
    pub growth: usize,
}

impl TubeShape {
    pub fn m(&self) -> usize {
        self.set.num_vertices()
    }

    pub fn vertices(&self) -> &[DVector<f64>] {
        self.set.vertices()
    }
}

fn flat_safe(w: &Polytope) -> Result<Polytope, SynthesisError> {
    let radius = if w.is_full_dim() { chebyshev_center(w)?.1 } else { 0.0 };
    let contains_origin = w.contains(&DVector::zeros(w.dim()), -1e-12);
    if radius > 1e-9 && contains_origin {
        return Ok(w.clone());
    }
    let bx = Polytope::cube(w.dim(), FLAT_W_INFLATION)?;
    Ok(minkowski_sum(w, &bx)?)
}

/// `(1-ρ)^{-1} ⊕_{i<s} A_cl^i W` with the smallest `s` for which
/// `A_cl^s W ⊆ ρ W`, `ρ <= 1/2`, then capped to `m_max` vertices.
pub fn tube_shape(
    a_hat: &DMatrix<f64>,
    b_hat: &DMatrix<f64>,
    k: &DMatrix<f64>,
    w_global: &Polytope,
    m_max: usize,
) -> Result<TubeShape, SynthesisError> {
    let a_cl = a_hat + b_hat * k;
    let w = flat_safe(w_global)?;
    let facets: Vec<(DVector<f64>, f64)> = w.hrep().rows().collect();
    if facets.iter().any(|(_, g)| *g <= 0.0) {
        return Err(SynthesisError::NoContraction);
    }
    let n = a_cl.nrows();
    let mut power = DMatrix::identity(n, n);
    let mut found = None;
    for s in 1..=S_MAX {
        power = &a_cl * &power;
        let img = affine_image(&power, &w, None)?;
        let rho = facets.iter().map(|(h, g)| support(&img, h) / g).fold(0.0_f64, f64::max);
        if rho <= RHO_MAX {
            found = Some((s, rho));
            break;
        }
    }
    let (steps, rho) = found.ok_or(SynthesisError::NoContraction)?;
    let mut acc = w.clone();
    let mut power = DMatrix::identity(n, n);
    for _ in 1..steps {
        power = &a_cl * &power;
        acc = minkowski_sum(&acc, &affine_image(&power, &w, None)?)?;
    }
    let base = drop_facets(&acc.scaled(1.0 / (1.0 - rho)), m_max)?;
    for growth in 0..=10 {
        let s = base.scaled(1.0 + 0.01 * growth as f64);
        let img = minkowski_sum(&affine_image(&a_cl, &s, None)?, w_global)?;
        if contains_set(&s, &img, 1e-7) {
            return Ok(TubeShape {
                set: s,
                steps,
                rho,
                growth,
            });
        }
    }
    Err(SynthesisError::RpiFailure)
}

/// Maximal robust positively invariant set inside `X ∩ {Kx ∈ U}`.
#[derive(Debug, Clone)]
pub struct TerminalSet {
    pub set: Polytope,
    pub iterations: usize,
}

pub fn terminal_set(
    a_hat: &DMatrix<f64>,
    b_hat: &DMatrix<f64>,
    k: &DMatrix<f64>,
    x_set: &Polytope,
    u_set: &Polytope,
    w_global: &Polytope,
) -> Result<TerminalSet, SynthesisError> {
    let a_cl = a_hat + b_hat * k;
    let d = a_cl.nrows();
    let mut rows: Vec<DVector<f64>> = Vec::new();
    let mut offs: Vec<f64> = Vec::new();
    for (h, g) in x_set.hrep().rows() {
        rows.push(h);
        offs.push(g);
    }
    for (h, g) in u_set.hrep().rows() {
        rows.push(k.transpose() * h);
        offs.push(g);
    }
    let h0 = HPolytope::new(stack_rows(&rows, d), DVector::from_vec(offs))?;
    let mut omega = Polytope::from_h(h0)?;
    for it in 1..=K_MAX {
        if omega.is_empty() {
            return Err(SynthesisError::NotFullDim);
        }
        let mut rows: Vec<DVector<f64>> = Vec::new();
        let mut offs: Vec<f64> = Vec::new();
        for (h, g) in omega.hrep().rows() {
            rows.push(a_cl.transpose() * &h);
            offs.push(g - support(w_global, &h));
        }
        let pre = HPolytope::new(stack_rows(&rows, d), DVector::from_vec(offs))?;
        let next = Polytope::from_h(omega.hrep().stack(&pre))?;
        if next.is_empty() {
            return Err(SynthesisError::NotFullDim);
        }
        if contains_set(&next, &omega, 1e-8) {
            let (_, radius) = chebyshev_center(&next)?;
            if radius <= 1e-9 || !next.contains(&DVector::zeros(d), 0.0) {
                return Err(SynthesisError::NotFullDim);
            }
            return Ok(TerminalSet {
                set: next,
                iterations: it,
            });
        }
        omega = next;
    }
    Err(SynthesisError::NoConvergence(K_MAX))
}

fn stack_rows(rows: &[DVector<f64>], d: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows.len(), d);
    for (i, r) in rows.iter().enumerate() {
        m.set_row(i, &r.transpose());
    }
    m
}

/// Which acceptance condition failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RejectReason {
    /// Lyapunov decrease of the candidate pair.
    Decrease,
    /// Compatibility with the previous pair.
    Compatibility,
    /// No admissible terminal set.
    Terminal(String),
    /// No tube shape for the candidate closed loop.
    Shape(String),
    /// The Riccati iteration failed.
    Gain(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Verdict {
    Accept,
    Reject(RejectReason),
}

impl Verdict {
    pub fn accepted(&self) -> bool {
        matches!(self, Verdict::Accept)
    }
}

fn psd(m: &DMatrix<f64>) -> bool {
    let sym = crate::linalg::symmetrize(m);
    min_eig_psd_check(&sym, 1e-8).unwrap_or(false)
}

/// Accept iff the candidate Lyapunov inequality, the compatibility inequality
/// with the previous pair, and terminal-set existence all hold.
pub fn check_criterion(
    prev: &GainPair,
    cand: &GainPair,
    a_hat: &DMatrix<f64>,
    b_hat: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    terminal: Result<&TerminalSet, &SynthesisError>,
) -> Verdict {
    let a_cl = a_hat + b_hat * &cand.k;
    let decay = a_cl.transpose() * &cand.p * &a_cl;
    let cond_a = &cand.p - &decay - q - cand.k.transpose() * r * &cand.k;
    if !psd(&cond_a) {
        return Verdict::Reject(RejectReason::Decrease);
    }
    let cond_b = &prev.p - &decay - q - prev.k.transpose() * r * &prev.k;
    if !psd(&cond_b) {
        return Verdict::Reject(RejectReason::Compatibility);
    }
    match terminal {
        Ok(ts) => match chebyshev_center(&ts.set) {
            Ok((_, radius)) if radius > 1e-9 => Verdict::Accept,
            _ => Verdict::Reject(RejectReason::Terminal("no interior".into())),
        },
        Err(e) => Verdict::Reject(RejectReason::Terminal(e.to_string())),
    }
}

/// `max_k supp_{A_cl S}(h_k) + supp_W(h_k) - g_k`; `<= 0` iff `A_cl S ⊕ W ⊆ S`.
pub fn rpi_residual(a_cl: &DMatrix<f64>, s: &Polytope, w: &Polytope) -> f64 {
    s.hrep()
        .rows()
        .map(|(h, g)| support(s, &(a_cl.transpose() * &h)) + support(w, &h) - g)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Largest violation of `A_cl T ⊕ W ⊆ T`, `T ⊆ X` and `K T ⊆ U`.
pub fn terminal_residual(
    a_cl: &DMatrix<f64>,
    k: &DMatrix<f64>,
    t: &Polytope,
    x_set: &Polytope,
    u_set: &Polytope,
    w: &Polytope,
) -> f64 {
    let inside_x = x_set
        .hrep()
        .rows()
        .map(|(h, g)| support(t, &h) - g)
        .fold(f64::NEG_INFINITY, f64::max);
    let inside_u = u_set
        .hrep()
        .rows()
        .map(|(h, g)| support(t, &(k.transpose() * &h)) - g)
        .fold(f64::NEG_INFINITY, f64::max);
    rpi_residual(a_cl, t, w).max(inside_x).max(inside_u)
}

/// Volume helper re-exported for traces.
pub fn set_volume(p: &Polytope) -> f64 {
    polytope::volume(p)
}
