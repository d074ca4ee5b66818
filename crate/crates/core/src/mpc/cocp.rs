use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{MpcError, TubeDecision};
use crate::polytope::{support, Polytope};
use crate::solver::{solve_qp, GainPair, Problem, SolveStatus};
use crate::synthesis::{DisturbanceSets, TerminalSet, TubeShape};

/// Tightening applied to state and input rows so that solver round-off
/// never pushes a realised state or input across a box face.
pub const CONSTRAINT_MARGIN: f64 = 1e-8;

/// Everything the optimal control problem at one time step depends on.
#[derive(Debug, Clone)]
pub struct CocpData {
    pub a_hat: DMatrix<f64>,
    pub b_hat: DMatrix<f64>,
    pub gains: GainPair,
    pub shape: Arc<TubeShape>,
    pub terminal: Arc<TerminalSet>,
    pub dist: Arc<DisturbanceSets>,
    pub x_set: Arc<Polytope>,
    pub u_set: Arc<Polytope>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub horizon: usize,
    /// Also constrain sections `1..N-1` to the forward reach sets.
    pub reach_inclusion: bool,
}

/// Index map of the stacked decision vector `(alpha_1..N, beta_1..N, v)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CocpLayout {
    pub n: usize,
    pub m: usize,
    pub vertices: usize,
    pub horizon: usize,
}

impl CocpLayout {
    pub fn alpha(&self, i: usize) -> usize {
        debug_assert!(i >= 1 && i <= self.horizon);
        (i - 1) * self.n
    }

    pub fn beta(&self, i: usize) -> usize {
        debug_assert!(i >= 1 && i <= self.horizon);
        self.horizon * self.n + i - 1
    }

    pub fn v(&self, i: usize, j: usize) -> usize {
        self.horizon * (self.n + 1) + (i * self.vertices + j) * self.m
    }

    pub fn len(&self) -> usize {
        self.horizon * (self.n + 1) + self.horizon * self.vertices * self.m
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pack(&self, d: &TubeDecision) -> DVector<f64> {
        let mut y = DVector::zeros(self.len());
        for i in 1..=self.horizon {
            y.rows_mut(self.alpha(i), self.n).copy_from(&d.alpha[i]);
            y[self.beta(i)] = d.beta[i];
        }
        for i in 0..self.horizon {
            for j in 0..self.vertices {
                y.rows_mut(self.v(i, j), self.m).copy_from(&d.v[i][j]);
            }
        }
        y
    }

    pub fn unpack(&self, x_t: &DVector<f64>, y: &DVector<f64>) -> TubeDecision {
        let mut alpha = vec![x_t.clone()];
        let mut beta = vec![0.0];
        for i in 1..=self.horizon {
            alpha.push(y.rows(self.alpha(i), self.n).into_owned());
            beta.push(y[self.beta(i)]);
        }
        let v = (0..self.horizon)
            .map(|i| {
                (0..self.vertices)
                    .map(|j| y.rows(self.v(i, j), self.m).into_owned())
                    .collect()
            })
            .collect();
        TubeDecision { alpha, beta, v }
    }
}

struct Rows {
    a: Vec<(Vec<(usize, f64)>, f64)>,
}

impl Rows {
    fn push(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) {
        self.a.push((coeffs, rhs));
    }
}

fn check_dims(x_t: &DVector<f64>, d: &CocpData) -> Result<(), MpcError> {
    let n = d.a_hat.nrows();
    let m = d.b_hat.ncols();
    let bad = |what: &str| Err(MpcError::DimensionMismatch(what.to_string()));
    if x_t.len() != n || d.a_hat.ncols() != n || d.b_hat.nrows() != n {
        return bad("state dimension");
    }
    if d.q.shape() != (n, n) || d.r.shape() != (m, m) || d.gains.p.shape() != (n, n) {
        return bad("weights");
    }
    if d.u_set.dim() != m || d.x_set.dim() != n || d.shape.set.dim() != n {
        return bad("constraint sets");
    }
    if d.dist.w_step.len() != d.horizon || d.dist.x_reach.len() != d.horizon {
        return bad("per-step sets");
    }
    if d.horizon == 0 {
        return bad("horizon");
    }
    Ok(())
}

/// Constraint rows `coeffs · y <= rhs`, with state/input rows tightened by `margin`.
fn constraint_rows(x_t: &DVector<f64>, d: &CocpData, lay: &CocpLayout, margin: f64) -> Rows {
    let n = lay.n;
    let big_n = lay.horizon;
    let s = d.shape.vertices();
    let mut rows = Rows { a: Vec::new() };

    let containment = |rows: &mut Rows, set: &Polytope, i: usize| {
        for (h, g) in set.hrep().rows() {
            let mut c: Vec<(usize, f64)> = (0..n).map(|r| (lay.alpha(i) + r, h[r])).collect();
            c.push((lay.beta(i), support(&d.shape.set, &h)));
            rows.push(c, g - margin);
        }
    };
    // sections inside X (and the reach sets)
    for i in 1..big_n {
        containment(&mut rows, &d.x_set, i);
        if d.reach_inclusion {
            containment(&mut rows, &d.dist.x_reach[i], i);
        }
    }
    // terminal section
    containment(&mut rows, &d.terminal.set, big_n);
    // inputs
    for i in 0..big_n {
        for j in 0..lay.vertices {
            for (h, g) in d.u_set.hrep().rows() {
                let c = (0..lay.m).map(|r| (lay.v(i, j) + r, h[r])).collect();
                rows.push(c, g - margin);
            }
        }
    }
    // tube dynamics
    let facets: Vec<(DVector<f64>, f64)> = d.shape.set.hrep().rows().collect();
    for i in 0..big_n {
        let w = &d.dist.w_step[i];
        for (h, g) in &facets {
            let ah = d.a_hat.transpose() * h;
            let bh = d.b_hat.transpose() * h;
            let ws = support(w, h);
            for sj in s.iter().enumerate() {
                let (j, sv) = sj;
                let mut c: Vec<(usize, f64)> = Vec::new();
                let mut rhs = -ws;
                if i == 0 {
                    rhs -= ah.dot(x_t);
                } else {
                    for r in 0..n {
                        c.push((lay.alpha(i) + r, ah[r]));
                    }
                    c.push((lay.beta(i), ah.dot(sv)));
                }
                for r in 0..lay.m {
                    c.push((lay.v(i, j) + r, bh[r]));
                }
                for r in 0..n {
                    c.push((lay.alpha(i + 1) + r, -h[r]));
                }
                c.push((lay.beta(i + 1), -g));
                rows.push(c, rhs);
            }
        }
    }
    rows
}

/// Dense QP plus the constant `M ‖x_t‖²_Q` dropped from its objective.
pub fn build_cocp(x_t: &DVector<f64>, d: &CocpData) -> Result<(Problem, CocpLayout, f64), MpcError> {
    check_dims(x_t, d)?;
    let lay = CocpLayout {
        n: d.a_hat.nrows(),
        m: d.b_hat.ncols(),
        vertices: d.shape.m(),
        horizon: d.horizon,
    };
    let nv = lay.len();
    let big_m = lay.vertices as f64;
    let s = d.shape.vertices();
    let mut sum_s = DVector::zeros(lay.n);
    for sv in s {
        sum_s += sv;
    }

    let mut h = DMatrix::zeros(nv, nv);
    for i in 1..=lay.horizon {
        let w = if i == lay.horizon { &d.gains.p } else { &d.q };
        let a0 = lay.alpha(i);
        let b0 = lay.beta(i);
        let haa = w * (2.0 * big_m);
        h.view_mut((a0, a0), (lay.n, lay.n)).copy_from(&haa);
        let hab = w * &sum_s * 2.0;
        for r in 0..lay.n {
            h[(a0 + r, b0)] = hab[r];
            h[(b0, a0 + r)] = hab[r];
        }
        h[(b0, b0)] = 2.0 * s.iter().map(|sv| sv.dot(&(w * sv))).sum::<f64>();
    }
    for i in 0..lay.horizon {
        for j in 0..lay.vertices {
            let v0 = lay.v(i, j);
            h.view_mut((v0, v0), (lay.m, lay.m)).copy_from(&(&d.r * 2.0));
        }
    }

    let rows = constraint_rows(x_t, d, &lay, CONSTRAINT_MARGIN);
    let mut a = DMatrix::zeros(rows.a.len(), nv);
    let mut b = DVector::zeros(rows.a.len());
    for (k, (coeffs, rhs)) in rows.a.iter().enumerate() {
        for &(j, c) in coeffs {
            a[(k, j)] += c;
        }
        b[k] = *rhs;
    }
    let mut lower = DVector::from_element(nv, f64::NEG_INFINITY);
    for i in 1..=lay.horizon {
        lower[lay.beta(i)] = 0.0;
    }
    let upper = DVector::from_element(nv, f64::INFINITY);
    let constant = big_m * x_t.dot(&(&d.q * x_t));
    let prob = Problem::qp(h, DVector::zeros(nv))
        .with_ineq(a, b)
        .with_bounds(lower, upper);
    Ok((prob, lay, constant))
}

#[derive(Debug, Clone)]
pub struct CocpSolution {
    pub decision: TubeDecision,
    /// Optimal cost including the constant section-0 term.
    pub cost: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub kkt_residual: f64,
}

pub fn solve_cocp(x_t: &DVector<f64>, d: &CocpData) -> Result<CocpSolution, MpcError> {
    if !d.x_set.contains(x_t, 0.0) {
        return Err(MpcError::StateOutsideX);
    }
    let (prob, lay, constant) = build_cocp(x_t, d)?;
    let out = solve_qp(&prob)?;
    if !out.is_optimal() {
        return Err(MpcError::Infeasible(out.status));
    }
    Ok(CocpSolution {
        decision: lay.unpack(x_t, &out.x),
        cost: out.objective + constant,
        status: out.status,
        iterations: out.iterations,
        kkt_residual: out.kkt_residual,
    })
}

/// Largest violation of the unmargined constraints by `dec` at `x_t`.
pub fn cocp_residual(x_t: &DVector<f64>, d: &CocpData, dec: &TubeDecision) -> Result<f64, MpcError> {
    check_dims(x_t, d)?;
    let lay = CocpLayout {
        n: d.a_hat.nrows(),
        m: d.b_hat.ncols(),
        vertices: d.shape.m(),
        horizon: d.horizon,
    };
    if dec.alpha.len() != lay.horizon + 1 || dec.beta.len() != lay.horizon + 1 || dec.v.len() != lay.horizon {
        return Err(MpcError::DimensionMismatch("decision horizon".into()));
    }
    if dec.v.iter().any(|vi| vi.len() != lay.vertices) {
        return Err(MpcError::DimensionMismatch("decision vertex count".into()));
    }
    let y = lay.pack(dec);
    let mut res = (&dec.alpha[0] - x_t).amax().max(dec.beta[0].abs());
    for i in 1..=lay.horizon {
        res = res.max(-dec.beta[i]);
    }
    for (coeffs, rhs) in constraint_rows(x_t, d, &lay, 0.0).a {
        let lhs: f64 = coeffs.iter().map(|&(j, c)| c * y[j]).sum();
        res = res.max(lhs - rhs);
    }
    Ok(res)
}

/// Input at the singleton section 0: the mean of its input vertices, the
/// minimum-norm barycentric combination.
pub fn control_input(x_t: &DVector<f64>, tube: &TubeDecision, shape: &TubeShape) -> Result<DVector<f64>, MpcError> {
    section_input(0, x_t, tube, shape)
}

/// Re-evaluates the previous optimal tube at a state inside its section 1.
pub fn fast_path_input(
    x_next: &DVector<f64>,
    tube: &TubeDecision,
    shape: &TubeShape,
) -> Result<DVector<f64>, MpcError> {
    section_input(1, x_next, tube, shape)
}

fn section_input(i: usize, x: &DVector<f64>, tube: &TubeDecision, shape: &TubeShape) -> Result<DVector<f64>, MpcError> {
    let vs = &tube.v[i];
    let m = vs[0].len();
    let scale = crate::linalg::point_scale(shape.vertices());
    if tube.beta[i].abs() * scale <= 1e-12 {
        if (&tube.alpha[i] - x).amax() > 1e-7 * (1.0 + x.amax()) {
            return Err(MpcError::Geometry(crate::polytope::PolytopeError::NotInHull));
        }
        let mut u = DVector::zeros(m);
        for v in vs {
            u += v;
        }
        return Ok(u / vs.len() as f64);
    }
    let z = tube.section_vertices(i, shape.vertices());
    let lam = crate::polytope::weights_for(&z, x, 1e-7)?;
    let mut u = DVector::zeros(m);
    for (l, v) in lam.iter().zip(vs) {
        u += v * *l;
    }
    Ok(u)
}
