use nalgebra::{DMatrix, DVector};

use super::{Duals, Problem, SolveOutcome, SolveStatus, SolverError};

const MAX_ITER: usize = 10_000;
const PIVOT_TOL: f64 = 1e-9;
const RC_TOL: f64 = 1e-10;

#[derive(Clone, Copy, PartialEq)]
enum RowKind {
    Ineq(usize),
    Upper(usize),
    Lower(usize),
    Eq(usize),
}

struct Tableau {
    t: DMatrix<f64>,
    obj: DVector<f64>,
    basis: Vec<usize>,
    forbidden: Vec<bool>,
    iterations: usize,
}

enum Phase {
    Done,
    Unbounded,
    MaxIter,
}

impl Tableau {
    fn rhs_col(&self) -> usize {
        self.t.ncols() - 1
    }

    fn price(&mut self, cost: &[f64]) {
        let nc = self.t.ncols();
        let mut obj = DVector::zeros(nc);
        for j in 0..nc - 1 {
            obj[j] = cost[j];
        }
        for (r, &bj) in self.basis.iter().enumerate() {
            let cb = cost[bj];
            if cb != 0.0 {
                for j in 0..nc {
                    obj[j] -= cb * self.t[(r, j)];
                }
            }
        }
        self.obj = obj;
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let nc = self.t.ncols();
        let p = self.t[(r, j)];
        for k in 0..nc {
            self.t[(r, k)] /= p;
        }
        for i in 0..self.t.nrows() {
            if i == r {
                continue;
            }
            let f = self.t[(i, j)];
            if f != 0.0 {
                for k in 0..nc {
                    let v = self.t[(r, k)];
                    self.t[(i, k)] -= f * v;
                }
                self.t[(i, j)] = 0.0;
            }
        }
        let f = self.obj[j];
        if f != 0.0 {
            for k in 0..nc {
                self.obj[k] -= f * self.t[(r, k)];
            }
            self.obj[j] = 0.0;
        }
        self.basis[r] = j;
        self.iterations += 1;
    }

    /// Bland's rule simplex on the current objective row.
    fn run(&mut self) -> Phase {
        let rhs = self.rhs_col();
        loop {
            if self.iterations >= MAX_ITER {
                return Phase::MaxIter;
            }
            let entering = (0..rhs).find(|&j| !self.forbidden[j] && self.obj[j] < -RC_TOL);
            let Some(j) = entering else {
                return Phase::Done;
            };
            let mut best: Option<(usize, f64)> = None;
            for r in 0..self.t.nrows() {
                let a = self.t[(r, j)];
                if a > PIVOT_TOL {
                    let ratio = self.t[(r, rhs)].max(0.0) / a;
                    match best {
                        None => best = Some((r, ratio)),
                        Some((br, bratio)) => {
                            let tie = (ratio - bratio).abs() <= 1e-12 * (1.0 + bratio.abs());
                            if ratio < bratio && !tie || tie && self.basis[r] < self.basis[br] {
                                best = Some((r, ratio));
                            }
                        }
                    }
                }
            }
            match best {
                Some((r, _)) => self.pivot(r, j),
                None => return Phase::Unbounded,
            }
        }
    }
}

/// Dense two-phase tableau simplex with Bland's anti-cycling rule.
pub fn solve_lp(p: &Problem) -> Result<SolveOutcome, SolverError> {
    p.validate()?;
    let n = p.nvars();

    let mut rows: Vec<(RowKind, Vec<f64>, f64)> = Vec::new();
    for i in 0..p.a.nrows() {
        rows.push((RowKind::Ineq(i), p.a.row(i).iter().cloned().collect(), p.b[i]));
    }
    for j in 0..n {
        if p.upper[j].is_finite() {
            let mut a = vec![0.0; n];
            a[j] = 1.0;
            rows.push((RowKind::Upper(j), a, p.upper[j]));
        }
        if p.lower[j].is_finite() {
            let mut a = vec![0.0; n];
            a[j] = -1.0;
            rows.push((RowKind::Lower(j), a, -p.lower[j]));
        }
    }
    let n_slack = rows.len();
    for i in 0..p.aeq.nrows() {
        rows.push((RowKind::Eq(i), p.aeq.row(i).iter().cloned().collect(), p.beq[i]));
    }
    let m = rows.len();

    // columns: x+ (n), x- (n), slacks, artificials, rhs
    let slack0 = 2 * n;
    let art0 = slack0 + n_slack;
    let ncols = art0 + m + 1;
    let mut t = DMatrix::zeros(m, ncols);
    let mut sigma = vec![1.0; m];
    let mut basis = vec![0; m];
    let mut forbidden = vec![false; ncols - 1];
    let mut phase1_cost = vec![0.0; ncols - 1];
    for (r, (kind, a, b)) in rows.iter().enumerate() {
        let s = if *b < 0.0 { -1.0 } else { 1.0 };
        sigma[r] = s;
        for j in 0..n {
            t[(r, j)] = s * a[j];
            t[(r, n + j)] = -s * a[j];
        }
        if !matches!(kind, RowKind::Eq(_)) {
            t[(r, slack0 + r)] = s;
        }
        t[(r, art0 + r)] = 1.0;
        t[(r, ncols - 1)] = s * b;
        if !matches!(kind, RowKind::Eq(_)) && s > 0.0 {
            basis[r] = slack0 + r;
            forbidden[art0 + r] = true;
        } else {
            basis[r] = art0 + r;
            phase1_cost[art0 + r] = 1.0;
        }
    }
    let mut tab = Tableau {
        t,
        obj: DVector::zeros(ncols),
        basis,
        forbidden,
        iterations: 0,
    };

    // phase 1
    for j in art0..art0 + m {
        tab.forbidden[j] = true;
    }
    tab.price(&phase1_cost);
    if let Phase::MaxIter = tab.run() {
        return Ok(SolveOutcome::failed(SolveStatus::MaxIter, n, tab.iterations));
    }
    let bscale = 1.0 + rows.iter().fold(0.0_f64, |acc, r| acc.max(r.2.abs()));
    let infeas = -tab.obj[ncols - 1];
    if infeas > 1e-9 * bscale {
        return Ok(SolveOutcome::failed(SolveStatus::Infeasible, n, tab.iterations));
    }
    // drive zero-level artificials out of the basis where possible
    for r in 0..m {
        if tab.basis[r] >= art0 {
            if let Some(j) = (0..art0).find(|&j| tab.t[(r, j)].abs() > PIVOT_TOL) {
                tab.pivot(r, j);
            }
        }
    }

    // phase 2
    let mut cost = vec![0.0; ncols - 1];
    for j in 0..n {
        cost[j] = p.f[j];
        cost[n + j] = -p.f[j];
    }
    tab.price(&cost);
    match tab.run() {
        Phase::MaxIter => return Ok(SolveOutcome::failed(SolveStatus::MaxIter, n, tab.iterations)),
        Phase::Unbounded => return Ok(SolveOutcome::failed(SolveStatus::Unbounded, n, tab.iterations)),
        Phase::Done => {}
    }

    let mut xs = DVector::zeros(ncols - 1);
    for (r, &bj) in tab.basis.iter().enumerate() {
        xs[bj] = tab.t[(r, ncols - 1)].max(0.0);
    }
    let x = DVector::from_iterator(n, (0..n).map(|j| xs[j] - xs[n + j]));

    let mut duals = Duals {
        ineq: DVector::zeros(p.a.nrows()),
        eq: DVector::zeros(p.aeq.nrows()),
        lower: DVector::zeros(n),
        upper: DVector::zeros(n),
    };
    for (r, (kind, _, _)) in rows.iter().enumerate() {
        let y = -tab.obj[art0 + r];
        let mult = -sigma[r] * y;
        match *kind {
            RowKind::Ineq(i) => duals.ineq[i] = mult.max(0.0),
            RowKind::Upper(j) => duals.upper[j] = mult.max(0.0),
            RowKind::Lower(j) => duals.lower[j] = mult.max(0.0),
            RowKind::Eq(i) => duals.eq[i] = mult,
        }
    }
    let kkt = p.kkt_residual(&x, &duals);
    Ok(SolveOutcome {
        status: SolveStatus::Optimal,
        objective: p.objective(&x),
        x,
        duals,
        kkt_residual: kkt,
        iterations: tab.iterations,
    })
}
