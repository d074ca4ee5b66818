//! Closed-loop acceptance suite: one line per criterion, nonzero exit if any fails.

mod common;

use std::time::{Duration, Instant};

use adaptube::mpc::{section_residual, SynthesisEvent};
use adaptube::polytope::{intersect, minkowski_sum, pontryagin_diff, HPolytope, Polytope};
use adaptube::sim::{probe_tube, run_closed_loop, section_containment_gap, DisturbancePolicy, Termination};
use adaptube::solver::{solve_qp, Problem};
use adaptube::uncertainty::join_blocks;
use adaptube::{Mode, PlantConfig, RunTrace};
use common::geo::{hull_oracle, vertex_oracle};
use common::{active_set_oracle, random_qp, v};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;

const SEEDS: u64 = 20;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn seeded(seed: u64) -> PlantConfig {
    let mut p = common::paper();
    p.seed = seed;
    p
}

fn run(p: &PlantConfig, mode: Mode) -> RunTrace {
    match run_closed_loop(p, mode) {
        Ok(t) => t,
        Err(e) => {
            let mut t = RunTrace::empty(p, mode);
            t.termination = Termination::Failed {
                t: 0,
                reason: e.to_string(),
            };
            t
        }
    }
}

fn c1(paper: &[RunTrace], elapsed: Duration) -> Outcome {
    let mut bad = Vec::new();
    for tr in paper {
        if tr.steps() != 60 {
            bad.push(format!("{} ran {} steps", tr.mode, tr.steps()));
        }
        for (t, x) in tr.states.iter().enumerate() {
            if x.amax() > 20.0 {
                bad.push(format!("{} x_{t} = {x:?}", tr.mode));
            }
        }
        for r in &tr.records {
            if r.u.iter().any(|u| u.abs() > 10.0) {
                bad.push(format!("{} u_{} = {:?}", tr.mode, r.t, r.u));
            }
        }
        if !tr.violations.is_empty() {
            bad.push(format!("{} logged {} violations", tr.mode, tr.violations.len()));
        }
    }
    let fast = elapsed <= Duration::from_secs(300);
    if !fast {
        bad.push(format!("runtime {elapsed:?}"));
    }
    outcome(
        bad.is_empty(),
        if bad.is_empty() {
            format!("3 modes x 60 steps inside X and U, {:.1}s", elapsed.as_secs_f64())
        } else {
            bad.join("; ")
        },
    )
}

fn c2(runs: &[RunTrace]) -> Outcome {
    let mut bad = Vec::new();
    let mut backups = 0;
    for tr in runs {
        if tr.termination != Termination::Completed || tr.steps() != 60 {
            bad.push(format!("seed {}: {:?}", tr.seed, tr.termination));
        }
        let first = tr.records.iter().position(|r| r.solver.status == "Optimal");
        if let Some(k) = first {
            if let Some(r) = tr.records[k..].iter().find(|r| r.solver.status != "Optimal") {
                bad.push(format!("seed {} t={}: {}", tr.seed, r.t, r.solver.status));
            }
        } else {
            bad.push(format!("seed {}: never optimal", tr.seed));
        }
        backups += tr.records.iter().filter(|r| r.backup_flag).count();
    }
    outcome(
        bad.is_empty(),
        if bad.is_empty() {
            format!("{} seeds, every solve optimal, {backups} backup steps", runs.len())
        } else {
            bad.join("; ")
        },
    )
}

fn c3(runs: &[RunTrace]) -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    let mut at = (0, 0);
    for tr in runs {
        for t in 0..tr.details.len() {
            let d = &tr.details[t];
            let r = section_residual(&tr.states[t + 1], &d.tube.alpha[1], d.tube.beta[1], &d.data.shape.set);
            if r > worst {
                worst = r;
                at = (tr.seed, t);
            }
        }
    }
    outcome(
        worst <= 1e-7,
        format!("worst residual {worst:.3e} (seed {}, t={})", at.0, at.1),
    )
}

fn c4(runs: &[RunTrace]) -> Outcome {
    let p = common::paper();
    let truth = join_blocks(&p.a_true, &p.b_true);
    let mut bad = Vec::new();
    for tr in runs {
        for t in 0..tr.details.len() {
            let psi = &tr.details[t].psi_set;
            if !psi.contains(&truth, 1e-8) {
                bad.push(format!("seed {} t={t}: truth outside", tr.seed));
            }
            if t + 1 < tr.details.len() {
                let next = &tr.details[t + 1].psi_set;
                if !psi.contains_set(next, 1e-8) {
                    bad.push(format!("seed {} t={}: not nested", tr.seed, t + 1));
                }
            }
        }
        if tr.details.len() > 11 {
            let (v0, v11) = (tr.details[0].psi_set.volume(), tr.details[11].psi_set.volume());
            if v11 >= v0 {
                bad.push(format!("seed {}: volume {v0:.4e} -> {v11:.4e}", tr.seed));
            }
        } else {
            bad.push(format!("seed {}: too short", tr.seed));
        }
    }
    let seed0 = &runs[0];
    outcome(
        bad.is_empty(),
        if bad.is_empty() {
            format!(
                "nested with truth inside on {} seeds; seed 0 volume {:.4e} -> {:.4e} at t=11",
                runs.len(),
                seed0.details[0].psi_set.volume(),
                seed0.details[11].psi_set.volume()
            )
        } else {
            bad.join("; ")
        },
    )
}

fn c5a(adaptive: &RunTrace) -> Outcome {
    let p = common::paper();
    if adaptive.details.len() < 2 {
        return outcome(false, "adaptive run too short");
    }
    match probe_tube(&p, Mode::RobustFixed, &adaptive.states[..2]) {
        Ok((robust, shape)) => {
            let d = &adaptive.details[1];
            let gap = section_containment_gap(&d.tube, &d.data.shape.set, &robust, &shape);
            outcome(gap <= 1e-6, format!("t=1 containment gap {gap:.3e}"))
        }
        Err(e) => outcome(false, format!("robust probe failed: {e}")),
    }
}

fn c5b(adaptive: &RunTrace, robust: &RunTrace) -> Outcome {
    let (a, r) = (adaptive.total_cost(), robust.total_cost());
    outcome(
        a <= r && adaptive.steps() == 60 && robust.steps() == 60,
        format!("cumulative cost at t=60: adaptive {a:.4}, robust {r:.4}"),
    )
}

/// Largest violation of `x ∈ P` over P's facets.
fn outside(p: &Polytope, x: &DVector<f64>) -> f64 {
    p.hrep().max_violation(x)
}

fn rpi_by_vertices(a_cl: &DMatrix<f64>, s: &Polytope, w: &Polytope) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for x in s.vertices() {
        let ax = a_cl * x;
        for d in w.vertices() {
            worst = worst.max(outside(s, &(&ax + d)));
        }
    }
    worst
}

fn c6(runs: &[RunTrace]) -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    let mut events = 0;
    let mut bad = Vec::new();
    for tr in runs {
        let mut last_terminal: Option<f64> = None;
        let mut last_shape: Option<f64> = None;
        for (r, d) in tr.records.iter().zip(&tr.details) {
            if let Some(ev) = &r.event {
                events += 1;
                let data = &d.data;
                let a_cl = &data.a_hat + &data.b_hat * &data.gains.k;
                let w = &data.dist.w_global;
                let t = &data.terminal.set;
                let mut res = rpi_by_vertices(&a_cl, &data.shape.set, w).max(rpi_by_vertices(&a_cl, t, w));
                for x in t.vertices() {
                    res = res
                        .max(outside(&data.x_set, x))
                        .max(outside(&data.u_set, &(&data.gains.k * x)));
                }
                worst = worst.max(res);
                let vt = polytope_volume(t);
                let vs = polytope_volume(&data.shape.set);
                match ev {
                    SynthesisEvent::Initial => last_terminal = Some(vt),
                    SynthesisEvent::Accepted => {
                        if last_terminal.is_some_and(|v| vt < v * (1.0 - 1e-9)) {
                            bad.push(format!("seed {} t={}: terminal volume fell", tr.seed, r.t));
                        }
                        last_terminal = Some(vt);
                    }
                    SynthesisEvent::RefinementOnly if last_shape.is_some_and(|v| vs > v * (1.0 + 1e-9)) => {
                        bad.push(format!("seed {} t={}: shape volume grew", tr.seed, r.t));
                    }
                    _ => {}
                }
            }
            last_shape = Some(polytope_volume(&d.data.shape.set));
        }
    }
    if worst > 1e-7 {
        bad.push(format!("certificate residual {worst:.3e}"));
    }
    outcome(
        bad.is_empty(),
        if bad.is_empty() {
            format!("{events} synthesis events, worst residual {worst:.3e}")
        } else {
            bad.join("; ")
        },
    )
}

fn polytope_volume(p: &Polytope) -> f64 {
    adaptube::polytope::volume(p)
}

fn c7(runs: &[RunTrace]) -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    let mut missing = 0;
    for tr in runs {
        for r in tr.records.iter().skip(1) {
            match r.candidate_residual {
                Some(c) => worst = worst.max(c),
                None => missing += 1,
            }
        }
    }
    outcome(
        worst <= 1e-6 && missing == 0,
        format!("worst candidate residual {worst:.3e}, {missing} unaudited steps"),
    )
}

#[derive(Deserialize)]
struct NominalReference {
    threshold: f64,
}

fn c8() -> Outcome {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/nominal_reference.json");
    let rf: NominalReference = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    let tr = run(&common::nominal(), Mode::Adaptive);
    let inc = tr
        .records
        .windows(2)
        .map(|w| w[1].cost - w[0].cost)
        .fold(f64::NEG_INFINITY, f64::max);
    let norm = tr.final_state().norm();
    outcome(
        tr.steps() == 60 && inc <= 1e-6 && norm <= rf.threshold,
        format!(
            "largest J* increase {inc:.3e}, |x_60| = {norm:.3e} (threshold {:.3e})",
            rf.threshold
        ),
    )
}

fn c9() -> Outcome {
    let mut p = common::paper();
    p.policy = DisturbancePolicy::Zero;
    p.t_steps = 1000;
    let tr = run(&p, Mode::Adaptive);
    if tr.steps() != 1000 {
        return outcome(false, format!("run stopped: {:?}", tr.termination));
    }
    // |e|^2 (1 + g'g) with e the normalized prediction error
    let terms: Vec<f64> = (0..1000)
        .map(|t| {
            let g = tr.states[t].clone().insert_rows(2, 1, tr.records[t].u[0]);
            let raw = &tr.states[t + 1] - &tr.details[t].psi_hat * &g;
            raw.norm_squared() / (1.0 + g.norm_squared())
        })
        .collect();
    let total: f64 = terms.iter().sum();
    let tail: f64 = terms[900..].iter().sum();
    let share = if total > 0.0 { tail / total } else { 0.0 };
    outcome(
        share <= 0.01,
        format!("last-100 share {share:.3e} of total {total:.4e}"),
    )
}

fn random_polygon(rng: &mut ChaCha8Rng, scale: f64, center: [f64; 2]) -> Vec<[f64; 2]> {
    loop {
        let n = rng.gen_range(5..12);
        let pts: Vec<[f64; 2]> = (0..n)
            .map(|_| {
                [
                    center[0] + scale * rng.gen_range(-1.0..1.0),
                    center[1] + scale * rng.gen_range(-1.0..1.0),
                ]
            })
            .collect();
        let h = hull_oracle(&pts);
        if h.len() >= 3 && common::geo::shoelace(&h) > 0.05 * scale * scale {
            return h;
        }
    }
}

/// Half-planes of a counter-clockwise polygon, unit normals.
fn halfplanes(poly: &[[f64; 2]]) -> Vec<([f64; 2], f64)> {
    (0..poly.len())
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
            let (nx, ny) = (b[1] - a[1], a[0] - b[0]);
            let l = (nx * nx + ny * ny).sqrt();
            let n = [nx / l, ny / l];
            (n, n[0] * a[0] + n[1] * a[1])
        })
        .collect()
}

/// Polygon of a half-plane system by pairwise intersection; empty when infeasible.
fn polygon_of(planes: &[([f64; 2], f64)]) -> Vec<[f64; 2]> {
    let rows: Vec<_> = planes.iter().map(|(n, _)| v(n).transpose()).collect();
    let h = HPolytope::new(
        DMatrix::from_rows(&rows),
        DVector::from_iterator(planes.len(), planes.iter().map(|p| p.1)),
    )
    .unwrap();
    let pts: Vec<[f64; 2]> = vertex_oracle(&h).iter().map(|x| [x[0], x[1]]).collect();
    if pts.len() < 3 {
        return pts;
    }
    hull_oracle(&pts)
}

fn lib(poly: &[[f64; 2]]) -> Polytope {
    common::geo::from_points(poly)
}

/// Support-function and vertex distance between a library set and an oracle polygon.
fn disagreement(p: &Polytope, oracle: &[[f64; 2]]) -> f64 {
    if oracle.len() < 3 {
        return if p.is_empty() || polytope_volume(p) < 1e-12 {
            0.0
        } else {
            f64::INFINITY
        };
    }
    if p.is_empty() {
        return f64::INFINITY;
    }
    let mut worst: f64 = 0.0;
    for k in 0..720 {
        let a = std::f64::consts::TAU * k as f64 / 720.0;
        let d = [a.cos(), a.sin()];
        let so = oracle
            .iter()
            .map(|x| d[0] * x[0] + d[1] * x[1])
            .fold(f64::NEG_INFINITY, f64::max);
        worst = worst.max((p.support(&v(&d)) - so).abs());
    }
    let planes = halfplanes(oracle);
    for x in p.vertices() {
        for (n, b) in &planes {
            worst = worst.max(n[0] * x[0] + n[1] * x[1] - b);
        }
    }
    worst
}

fn c10() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = [0.0f64; 4];
    for _ in 0..100 {
        let p = random_polygon(&mut rng, 3.0, [0.0, 0.0]);
        let q = random_polygon(&mut rng, 0.6, [0.1, -0.1]);
        let (lp, lq) = (lib(&p), lib(&q));

        let sums: Vec<[f64; 2]> = p
            .iter()
            .flat_map(|a| q.iter().map(move |b| [a[0] + b[0], a[1] + b[1]]))
            .collect();
        worst[0] = worst[0].max(disagreement(&minkowski_sum(&lp, &lq).unwrap(), &hull_oracle(&sums)));

        let shifted: Vec<_> = q
            .iter()
            .flat_map(|s| {
                halfplanes(&p)
                    .into_iter()
                    .map(move |(n, b)| (n, b - n[0] * s[0] - n[1] * s[1]))
            })
            .collect();
        let diff = pontryagin_diff(&lp, &lq).unwrap_or_else(|_| Polytope::empty(2));
        worst[1] = worst[1].max(disagreement(&diff, &polygon_of(&shifted)));

        let c = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
        let r = random_polygon(&mut rng, 3.0, c);
        let both: Vec<_> = halfplanes(&p).into_iter().chain(halfplanes(&r)).collect();
        worst[2] = worst[2].max(disagreement(&intersect(&lp, &lib(&r)).unwrap(), &polygon_of(&both)));

        let cloud: Vec<[f64; 2]> = (0..15)
            .map(|_| [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)])
            .collect();
        let hull = Polytope::from_vertices(cloud.iter().map(|x| v(x)).collect()).unwrap();
        let back = Polytope::from_h(hull.hrep().clone()).unwrap();
        let oracle = hull_oracle(&cloud);
        worst[3] = worst[3]
            .max(disagreement(&hull, &oracle))
            .max(disagreement(&back, &oracle));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut qp_gap: f64 = 0.0;
    let mut not_optimal = 0;
    for _ in 0..200 {
        let q = random_qp(&mut rng, 10, 8);
        let out = solve_qp(&Problem::qp(q.h.clone(), q.f.clone()).with_ineq(q.a.clone(), q.b.clone())).unwrap();
        if !out.is_optimal() {
            not_optimal += 1;
        }
        let (_, obj) = active_set_oracle(&q.h, &q.f, &q.a, &q.b);
        qp_gap = qp_gap.max((out.objective - obj).abs());
    }
    let geo = worst.iter().cloned().fold(0.0, f64::max);
    outcome(
        geo <= 1e-7 && qp_gap <= 1e-8 && not_optimal == 0,
        format!(
            "minkowski {:.1e}, pontryagin {:.1e}, intersection {:.1e}, hull {:.1e}; QP gap {qp_gap:.1e}, {not_optimal} non-optimal",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

fn main() {
    let start = Instant::now();
    let paper: Vec<RunTrace> = Mode::ALL.par_iter().map(|&m| run(&common::paper(), m)).collect();
    let elapsed = start.elapsed();
    let find = |m: Mode| paper.iter().find(|t| t.mode == m).unwrap();
    let adaptive0 = find(Mode::Adaptive);

    let mut seeds: Vec<RunTrace> = (1..SEEDS)
        .into_par_iter()
        .map(|s| run(&seeded(s), Mode::Adaptive))
        .collect();
    seeds.insert(0, adaptive0.clone());

    let mut certified = seeds.clone();
    certified.extend(paper.iter().filter(|t| t.mode != Mode::Adaptive).cloned());

    let results = [
        ("1", c1(&paper, elapsed)),
        ("2", c2(&seeds)),
        ("3", c3(&seeds)),
        ("4", c4(&seeds)),
        ("5a", c5a(adaptive0)),
        ("5b", c5b(adaptive0, find(Mode::RobustFixed))),
        ("6", c6(&certified)),
        ("7", c7(&seeds)),
        ("8", c8()),
        ("9", c9()),
        ("10", c10()),
    ];
    let mut failed = 0;
    for (id, o) in &results {
        println!(
            "criterion {id:<3} {}  {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        if !o.pass {
            failed += 1;
        }
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
