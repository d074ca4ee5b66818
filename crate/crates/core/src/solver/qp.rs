use nalgebra::{Cholesky, DMatrix, DVector};

use super::{Duals, Problem, SolveOutcome, SolveStatus, SolverError};
use crate::linalg::inf_norm;

const VIOLATION_TOL: f64 = 1e-10;
const PROX_MAX_OUTER: usize = 5_000;

#[derive(Clone, Copy)]
enum Origin {
    Eq(usize, f64),
    Ineq(usize, f64),
    Upper(usize),
    Lower(usize),
}

struct Constraints {
    normals: Vec<DVector<f64>>,
    rhs: Vec<f64>,
    origin: Vec<Origin>,
    n_eq: usize,
}

enum Prepared {
    Ok(Constraints),
    Infeasible,
}

/// Converts everything to unit-norm `n'x >= b` rows; equalities come first
/// and linearly dependent but consistent equalities are dropped.
fn prepare(p: &Problem) -> Prepared {
    let n = p.nvars();
    let mut c = Constraints {
        normals: Vec::new(),
        rhs: Vec::new(),
        origin: Vec::new(),
        n_eq: 0,
    };

    // Gram-Schmidt over equality rows, tracking the rhs combination
    let mut ortho: Vec<(DVector<f64>, f64)> = Vec::new();
    for i in 0..p.aeq.nrows() {
        let a = p.aeq.row(i).transpose();
        let an = a.norm();
        let mut r = a.clone();
        let mut rb = p.beq[i];
        for (q, qb) in &ortho {
            let proj = q.dot(&r);
            r -= q * proj;
            rb -= proj * qb;
        }
        let rn = r.norm();
        if rn <= 1e-10 * an.max(1e-300) {
            if rb.abs() > 1e-8 * (1.0 + p.beq[i].abs()) {
                return Prepared::Infeasible;
            }
            continue;
        }
        ortho.push((r / rn, rb / rn));
        c.normals.push(&a / an);
        c.rhs.push(p.beq[i] / an);
        c.origin.push(Origin::Eq(i, an));
    }
    c.n_eq = c.normals.len();

    for i in 0..p.a.nrows() {
        let a = p.a.row(i).transpose();
        let an = a.norm();
        if an <= 1e-300 {
            if p.b[i] < -1e-12 {
                return Prepared::Infeasible;
            }
            continue;
        }
        c.normals.push(-&a / an);
        c.rhs.push(-p.b[i] / an);
        c.origin.push(Origin::Ineq(i, an));
    }
    for j in 0..n {
        if p.upper[j].is_finite() {
            let mut e = DVector::zeros(n);
            e[j] = -1.0;
            c.normals.push(e);
            c.rhs.push(-p.upper[j]);
            c.origin.push(Origin::Upper(j));
        }
        if p.lower[j].is_finite() {
            let mut e = DVector::zeros(n);
            e[j] = 1.0;
            c.normals.push(e);
            c.rhs.push(p.lower[j]);
            c.origin.push(Origin::Lower(j));
        }
    }
    Prepared::Ok(c)
}

struct GiOutcome {
    status: SolveStatus,
    x: DVector<f64>,
    mult: Vec<f64>,
    iterations: usize,
}

fn rotation(a: f64, b: f64) -> Option<(f64, f64, f64)> {
    if b == 0.0 {
        return None;
    }
    let h = a.hypot(b);
    Some((a / h, b / h, h))
}

fn rotate_cols(j: &mut DMatrix<f64>, c0: usize, c1: usize, c: f64, s: f64) {
    for row in 0..j.nrows() {
        let a = j[(row, c0)];
        let b = j[(row, c1)];
        j[(row, c0)] = c * a + s * b;
        j[(row, c1)] = -s * a + c * b;
    }
}

/// Goldfarb-Idnani dual active-set method for `min 0.5 x'Hx + f'x` with
/// `H = L L'` subject to `n_i'x >= b_i` (the first `n_eq` held with equality).
fn goldfarb_idnani(l: &DMatrix<f64>, f: &DVector<f64>, c: &Constraints) -> GiOutcome {
    let n = f.len();
    let m = c.normals.len();
    let max_iter = 50 * (n + m) + 1000;

    let linv = l
        .clone()
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .expect("cholesky factor is nonsingular");
    let mut jm = linv.transpose();
    let mut x = -(&jm * (jm.transpose() * f));
    let mut r = DMatrix::<f64>::zeros(n, n);
    let mut active: Vec<usize> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    let mut is_active = vec![false; m];
    let mut eq_sign = vec![1.0; m];
    let mut iterations = 0;
    let mut eq_next = 0;

    let fail = |status, x: DVector<f64>, iterations| GiOutcome {
        status,
        x,
        mult: vec![0.0; m],
        iterations,
    };

    'outer: loop {
        let p = if eq_next < c.n_eq {
            eq_next += 1;
            eq_next - 1
        } else {
            let mut best: Option<(usize, f64)> = None;
            for i in c.n_eq..m {
                if is_active[i] {
                    continue;
                }
                let s = c.normals[i].dot(&x) - c.rhs[i];
                if s < -VIOLATION_TOL && best.is_none_or(|(_, bs)| s < bs) {
                    best = Some((i, s));
                }
            }
            match best {
                Some((i, _)) => i,
                None => break 'outer,
            }
        };
        let mut np = c.normals[p].clone();
        let mut bp = c.rhs[p];
        if p < c.n_eq && np.dot(&x) - bp > 0.0 {
            np.neg_mut();
            bp = -bp;
            eq_sign[p] = -1.0;
        }
        let mut u_plus = 0.0;
        loop {
            iterations += 1;
            if iterations > max_iter {
                return fail(SolveStatus::MaxIter, x, iterations);
            }
            let q = active.len();
            let mut d = jm.transpose() * &np;
            let mut z = DVector::zeros(n);
            for k in q..n {
                z += jm.column(k) * d[k];
            }
            let mut rv = vec![0.0; q];
            for k in (0..q).rev() {
                let mut acc = d[k];
                for i in k + 1..q {
                    acc -= r[(k, i)] * rv[i];
                }
                rv[k] = acc / r[(k, k)];
            }
            let mut t1 = f64::INFINITY;
            let mut kdrop = None;
            for k in 0..q {
                if active[k] >= c.n_eq && rv[k] > 1e-12 {
                    let t = u[k] / rv[k];
                    if t < t1 {
                        t1 = t;
                        kdrop = Some(k);
                    }
                }
            }
            let d2: f64 = (q..n).map(|k| d[k] * d[k]).sum();
            let dn: f64 = d.norm_squared();
            let s = np.dot(&x) - bp;
            let t2 = if d2 > 1e-20 * dn {
                (-s / z.dot(&np)).max(0.0)
            } else {
                f64::INFINITY
            };
            let t = t1.min(t2);
            if !t.is_finite() {
                return fail(SolveStatus::Infeasible, x, iterations);
            }
            if t2.is_finite() {
                x += &z * t;
            }
            for k in 0..q {
                u[k] -= t * rv[k];
            }
            u_plus += t;
            if t2 <= t1 {
                // full step: add p
                for i in (q + 1..n).rev() {
                    if let Some((cs, sn, h)) = rotation(d[i - 1], d[i]) {
                        d[i - 1] = h;
                        d[i] = 0.0;
                        rotate_cols(&mut jm, i - 1, i, cs, sn);
                    }
                }
                for i in 0..=q {
                    r[(i, q)] = d[i];
                }
                active.push(p);
                u.push(u_plus);
                is_active[p] = true;
                continue 'outer;
            }
            // partial step: drop kdrop and retry p
            let l = kdrop.expect("partial step has a blocking constraint");
            is_active[active[l]] = false;
            active.remove(l);
            u.remove(l);
            for col in l..q - 1 {
                for row in 0..q {
                    r[(row, col)] = r[(row, col + 1)];
                }
            }
            for row in 0..n {
                r[(row, q - 1)] = 0.0;
            }
            for col in l..q - 1 {
                if let Some((cs, sn, _)) = rotation(r[(col, col)], r[(col + 1, col)]) {
                    for k in col..q - 1 {
                        let a = r[(col, k)];
                        let b = r[(col + 1, k)];
                        r[(col, k)] = cs * a + sn * b;
                        r[(col + 1, k)] = -sn * a + cs * b;
                    }
                    rotate_cols(&mut jm, col, col + 1, cs, sn);
                }
            }
            for k in 0..n {
                r[(q - 1, k)] = 0.0;
            }
        }
    }

    let mut mult = vec![0.0; m];
    for (k, &i) in active.iter().enumerate() {
        mult[i] = u[k] * eq_sign[i];
    }
    GiOutcome {
        status: SolveStatus::Optimal,
        x,
        mult,
        iterations,
    }
}

fn to_duals(p: &Problem, c: &Constraints, mult: &[f64]) -> Duals {
    let n = p.nvars();
    let mut d = Duals {
        ineq: DVector::zeros(p.a.nrows()),
        eq: DVector::zeros(p.aeq.nrows()),
        lower: DVector::zeros(n),
        upper: DVector::zeros(n),
    };
    for (k, o) in c.origin.iter().enumerate() {
        let u = mult[k];
        match *o {
            Origin::Eq(i, an) => d.eq[i] = -u / an,
            Origin::Ineq(i, an) => d.ineq[i] = u / an,
            Origin::Upper(j) => d.upper[j] = u,
            Origin::Lower(j) => d.lower[j] = u,
        }
    }
    d
}

fn factor(h: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let ch = Cholesky::new(h.clone())?;
    let l = ch.l();
    let diag: Vec<f64> = (0..l.nrows()).map(|i| l[(i, i)]).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > 1e-7 * max) {
        return None;
    }
    Some(l)
}

/// Solves a convex QP. Strictly convex problems go straight to the dual
/// active-set method; semidefinite ones use a proximal-point outer loop whose
/// subproblems are strictly convex.
pub fn solve_qp(p: &Problem) -> Result<SolveOutcome, SolverError> {
    p.validate()?;
    let n = p.nvars();
    let h = match &p.h {
        Some(h) => crate::linalg::symmetrize(h),
        None => DMatrix::zeros(n, n),
    };
    let cons = match prepare(p) {
        Prepared::Ok(c) => c,
        Prepared::Infeasible => return Ok(SolveOutcome::failed(SolveStatus::Infeasible, n, 0)),
    };
    if n == 0 {
        let x = DVector::zeros(0);
        let feasible = cons.rhs.iter().all(|b| *b <= VIOLATION_TOL);
        let status = if feasible {
            SolveStatus::Optimal
        } else {
            SolveStatus::Infeasible
        };
        return Ok(SolveOutcome {
            status,
            objective: 0.0,
            x,
            duals: to_duals(p, &cons, &vec![0.0; cons.normals.len()]),
            kkt_residual: 0.0,
            iterations: 0,
        });
    }

    let (x, mult, iterations, status) = match factor(&h) {
        Some(l) => {
            let g = goldfarb_idnani(&l, &p.f, &cons);
            (g.x, g.mult, g.iterations, g.status)
        }
        None => proximal(&h, &p.f, &cons),
    };
    if status != SolveStatus::Optimal {
        return Ok(SolveOutcome::failed(status, n, iterations));
    }
    let duals = to_duals(p, &cons, &mult);
    let kkt = p.kkt_residual(&x, &duals);
    Ok(SolveOutcome {
        status,
        objective: p.objective(&x),
        x,
        duals,
        kkt_residual: kkt,
        iterations,
    })
}

fn proximal(h: &DMatrix<f64>, f: &DVector<f64>, c: &Constraints) -> (DVector<f64>, Vec<f64>, usize, SolveStatus) {
    let n = f.len();
    let hscale = crate::linalg::mat_inf_norm(h).max(1.0);
    let eps = 1e-3 * hscale;
    let hp = h + DMatrix::identity(n, n) * eps;
    let l = match Cholesky::new(hp) {
        Some(ch) => ch.l(),
        None => return (DVector::zeros(n), vec![], 0, SolveStatus::Infeasible),
    };
    let mut xk = DVector::zeros(n);
    let mut total = 0;
    for _ in 0..PROX_MAX_OUTER {
        let fk = f - &xk * eps;
        let g = goldfarb_idnani(&l, &fk, c);
        total += g.iterations;
        if g.status != SolveStatus::Optimal {
            return (g.x, g.mult, total, g.status);
        }
        let step = inf_norm(&(&g.x - &xk));
        let size = inf_norm(&g.x);
        if size > 1e12 {
            return (g.x, g.mult, total, SolveStatus::Unbounded);
        }
        xk = g.x;
        if step <= 1e-12 * (1.0 + size) {
            return (xk, g.mult, total, SolveStatus::Optimal);
        }
    }
    // a slowly drifting iterate with an unbounded objective
    let grad = h * &xk + f;
    if f.dot(&xk) + 0.5 * xk.dot(&(h * &xk)) < -1e9 || inf_norm(&xk) > 1e8 && inf_norm(&grad) > 0.0 {
        return (xk, vec![], total, SolveStatus::Unbounded);
    }
    (xk, vec![], total, SolveStatus::MaxIter)
}
