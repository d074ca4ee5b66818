//! Closed-loop simulation of the true plant, traces and mode comparison.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mpc::{
    section_residual, Controller, ControllerSettings, Mode, MpcError, StepDetail, StepRecord, TubeDecision,
};
use crate::polytope::{Polytope, PolytopeJson};
use crate::synthesis::Caps;
use crate::uncertainty::{join_blocks, ParamMatrix, ParamSet, ParamSetJson};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisturbancePolicy {
    /// Uniform over the bounding box of `D`, rejected outside `D`.
    UniformInD,
    /// `D`'s vertices in their stored order.
    VertexCycle,
    Zero,
}

/// Everything a closed-loop run needs; built by [`crate::config`].
#[derive(Debug, Clone, PartialEq)]
pub struct PlantConfig {
    pub a_true: DMatrix<f64>,
    pub b_true: DMatrix<f64>,
    pub x_set: Polytope,
    pub u_set: Polytope,
    /// Disturbance bound known to the controller.
    pub d_set: Polytope,
    /// Set the plant samples from, `d_set` when absent.
    pub d_true: Option<Polytope>,
    pub psi_vertices: Vec<ParamMatrix>,
    pub psi_hat_0: ParamMatrix,
    pub horizon: usize,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub kappa: f64,
    pub x0: DVector<f64>,
    pub t_steps: usize,
    pub seed: u64,
    pub policy: DisturbancePolicy,
    pub caps: Caps,
    pub reach_inclusion: bool,
    pub fast_path: bool,
}

impl PlantConfig {
    pub fn truth(&self) -> ParamMatrix {
        join_blocks(&self.a_true, &self.b_true)
    }

    pub fn psi_set(&self) -> Result<ParamSet, SimError> {
        ParamSet::from_vertices(&self.psi_vertices).map_err(|e| SimError::Invalid(e.to_string()))
    }

    /// Checks the run invariants: truth in `Ψ_0`, `x_0 ∈ X`, `κ ∈ (0,2)`.
    pub fn validate(&self) -> Result<(), SimError> {
        let n = self.a_true.nrows();
        if self.x0.len() != n || self.x_set.dim() != n || self.d_set.dim() != n {
            return Err(SimError::Invalid("dimension mismatch".into()));
        }
        if !(self.kappa > 0.0 && self.kappa < 2.0) {
            return Err(SimError::Invalid(format!("kappa out of (0,2) (got {})", self.kappa)));
        }
        if !self.x_set.contains(&self.x0, 0.0) {
            return Err(SimError::Invalid("initial state lies outside X".into()));
        }
        if !self.psi_set()?.contains(&self.truth(), 1e-8) {
            return Err(SimError::Invalid(
                "true parameter lies outside the initial parameter set".into(),
            ));
        }
        Ok(())
    }

    pub fn settings(&self, audit: bool) -> ControllerSettings {
        ControllerSettings {
            x_set: self.x_set.clone(),
            u_set: self.u_set.clone(),
            d_set: self.d_set.clone(),
            q: self.q.clone(),
            r: self.r.clone(),
            horizon: self.horizon,
            kappa: self.kappa,
            caps: self.caps,
            reach_inclusion: self.reach_inclusion,
            fast_path: self.fast_path,
            audit,
        }
    }

    pub fn controller(&self, mode: Mode, audit: bool) -> Result<Controller, MpcError> {
        let psi = ParamSet::from_vertices(&self.psi_vertices)?;
        Controller::new(self.settings(audit), mode, psi, self.psi_hat_0.clone())
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid plant configuration: {0}")]
    Invalid(String),
    #[error("broken invariant at t={t}: {reason}")]
    BrokenInvariant {
        t: usize,
        reason: String,
        partial: Box<RunTrace>,
    },
    #[error("controller failed at t={t}: {source}")]
    Controller {
        t: usize,
        source: MpcError,
        partial: Box<RunTrace>,
    },
    #[error("traces do not share plant configuration and seed")]
    MismatchedConfig,
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Tolerances of the invariant checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub containment: f64,
    pub candidate: f64,
    pub nesting: f64,
    pub certificate: f64,
    pub cost_decrease: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            containment: 1e-7,
            candidate: 1e-6,
            nesting: 1e-8,
            certificate: 1e-7,
            cost_decrease: 1e-6,
        }
    }
}

/// Draws one disturbance. `step` drives the vertex cycle.
pub fn sample_disturbance(policy: DisturbancePolicy, d: &Polytope, rng: &mut ChaCha8Rng, step: usize) -> DVector<f64> {
    match policy {
        DisturbancePolicy::Zero => DVector::zeros(d.dim()),
        DisturbancePolicy::VertexCycle => {
            let v = d.vertices();
            v[step % v.len()].clone()
        }
        DisturbancePolicy::UniformInD => {
            let (lo, hi) = d.bounding_box().expect("bounded non-empty disturbance set");
            loop {
                let x = DVector::from_fn(d.dim(), |i, _| {
                    if hi[i] > lo[i] {
                        rng.gen_range(lo[i]..=hi[i])
                    } else {
                        lo[i]
                    }
                });
                if d.contains(&x, 0.0) {
                    return x;
                }
            }
        }
    }
}

/// `A x + B u + d`.
pub fn plant_step(
    x: &DVector<f64>,
    u: &DVector<f64>,
    d: &DVector<f64>,
    a_true: &DMatrix<f64>,
    b_true: &DMatrix<f64>,
) -> DVector<f64> {
    a_true * x + b_true * u + d
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Termination {
    Completed,
    InitiallyInfeasible,
    BrokenInvariant { t: usize, reason: String },
    Failed { t: usize, reason: String },
}

/// Hard-constraint violation found in a logged pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub t: usize,
    pub what: String,
}

/// Snapshot written to `sets/<t>.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SetSnapshot {
    pub t: usize,
    pub psi: ParamSetJson,
    pub shape: PolytopeJson,
    pub terminal: PolytopeJson,
    pub w_global: PolytopeJson,
    pub sections: Vec<PolytopeJson>,
}

#[derive(Debug, Clone)]
pub struct RunTrace {
    pub mode: Mode,
    pub seed: u64,
    pub records: Vec<StepRecord>,
    pub details: Vec<StepDetail>,
    /// `x_0 .. x_T`, one longer than `records` on a completed run.
    pub states: Vec<DVector<f64>>,
    pub disturbances: Vec<DVector<f64>>,
    pub x_norm: Vec<f64>,
    pub cumulative_cost: Vec<f64>,
    pub violations: Vec<Violation>,
    pub truth_outside: Vec<usize>,
    pub termination: Termination,
    pub plant: PlantConfig,
}

impl RunTrace {
    /// Trace holding only `x_0`.
    pub fn empty(plant: &PlantConfig, mode: Mode) -> Self {
        RunTrace {
            mode,
            seed: plant.seed,
            records: Vec::new(),
            details: Vec::new(),
            states: vec![plant.x0.clone()],
            disturbances: Vec::new(),
            x_norm: Vec::new(),
            cumulative_cost: Vec::new(),
            violations: Vec::new(),
            truth_outside: Vec::new(),
            termination: Termination::Completed,
            plant: plant.clone(),
        }
    }

    pub fn steps(&self) -> usize {
        self.records.len()
    }

    pub fn total_cost(&self) -> f64 {
        self.cumulative_cost.last().copied().unwrap_or(0.0)
    }

    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().expect("trace holds x_0")
    }

    /// Steps whose solve was optimal.
    pub fn feasible_steps(&self) -> usize {
        self.records.iter().filter(|r| r.solver.status == "Optimal").count()
    }

    pub fn snapshot(&self, t: usize) -> SetSnapshot {
        let d = &self.details[t];
        let shape = &d.data.shape.set;
        SetSnapshot {
            t,
            psi: d.psi_set.to_json(),
            shape: shape.into(),
            terminal: (&d.data.terminal.set).into(),
            w_global: (&d.data.dist.w_global).into(),
            sections: (0..=d.tube.horizon())
                .map(|i| (&d.tube.section(i, shape)).into())
                .collect(),
        }
    }

    /// Writes `trace.jsonl`, `metrics.csv` and `sets/<t>.json` under `dir`.
    pub fn export(&self, dir: &Path) -> Result<(), SimError> {
        fs::create_dir_all(dir.join("sets"))?;
        let mut w = BufWriter::new(fs::File::create(dir.join("trace.jsonl"))?);
        for r in &self.records {
            serde_json::to_writer(&mut w, r).map_err(io::Error::from)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;

        let m = self.plant.b_true.ncols();
        let mut csv = csv::Writer::from_path(dir.join("metrics.csv")).map_err(io::Error::from)?;
        let mut header = vec!["t".to_string(), "x_norm".to_string()];
        if m == 1 {
            header.push("u".into());
        } else {
            header.extend((1..=m).map(|j| format!("u_{j}")));
        }
        header.extend(
            [
                "stage_cost",
                "cumulative_cost",
                "volume_psi",
                "volume_shape",
                "volume_terminal",
                "backup_flag",
            ]
            .map(String::from),
        );
        csv.write_record(&header).map_err(io::Error::from)?;
        for (k, r) in self.records.iter().enumerate() {
            let mut row = vec![r.t.to_string(), self.x_norm[k].to_string()];
            row.extend(r.u.iter().map(|v| v.to_string()));
            row.extend([
                r.stage_cost.to_string(),
                self.cumulative_cost[k].to_string(),
                r.volumes.psi.to_string(),
                r.volumes.shape.to_string(),
                r.volumes.terminal.to_string(),
                r.backup_flag.to_string(),
            ]);
            csv.write_record(&row).map_err(io::Error::from)?;
        }
        csv.flush()?;

        for t in 0..self.details.len() {
            let f = fs::File::create(dir.join(format!("sets/{t}.json")))?;
            serde_json::to_writer(BufWriter::new(f), &self.snapshot(t)).map_err(io::Error::from)?;
        }
        Ok(())
    }
}

/// Runs `plant.t_steps` controller iterations against the true plant.
///
/// Hard-constraint violations of logged states and inputs are collected in
/// the trace, not raised. An infeasible first problem yields an empty trace
/// flagged [`Termination::InitiallyInfeasible`].
pub fn run_closed_loop(plant: &PlantConfig, mode: Mode) -> Result<RunTrace, SimError> {
    run_closed_loop_with(plant, mode, true)
}

/// As [`run_closed_loop`], optionally without the per-step candidate audit.
pub fn run_closed_loop_with(plant: &PlantConfig, mode: Mode, audit: bool) -> Result<RunTrace, SimError> {
    plant.validate()?;
    let mut trace = RunTrace::empty(plant, mode);
    let mut ctrl = match plant.controller(mode, audit) {
        Ok(c) => c,
        Err(e) => {
            trace.termination = Termination::Failed {
                t: 0,
                reason: e.to_string(),
            };
            return Err(SimError::Controller {
                t: 0,
                source: e,
                partial: Box::new(trace),
            });
        }
    };
    let truth = plant.truth();
    let d_plant = plant.d_true.as_ref().unwrap_or(&plant.d_set);
    let mut rng = ChaCha8Rng::seed_from_u64(plant.seed);
    let mut x = plant.x0.clone();
    let mut cum = 0.0;
    for t in 0..plant.t_steps {
        let out = match ctrl.step(&x) {
            Ok(o) => o,
            Err(MpcError::InitiallyInfeasible) => {
                trace.termination = Termination::InitiallyInfeasible;
                return Ok(trace);
            }
            Err(MpcError::BrokenInvariant { t, reason }) => {
                trace.termination = Termination::BrokenInvariant {
                    t,
                    reason: reason.clone(),
                };
                return Err(SimError::BrokenInvariant {
                    t,
                    reason,
                    partial: Box::new(trace),
                });
            }
            Err(e) => {
                trace.termination = Termination::Failed {
                    t,
                    reason: e.to_string(),
                };
                return Err(SimError::Controller {
                    t,
                    source: e,
                    partial: Box::new(trace),
                });
            }
        };
        if !plant.u_set.contains(&out.u, 0.0) {
            trace.violations.push(Violation {
                t,
                what: format!("u = {:?} outside U", out.u.as_slice()),
            });
        }
        if !ctrl.psi_set().contains(&truth, 1e-8) {
            trace.truth_outside.push(t);
        }
        let d = sample_disturbance(plant.policy, d_plant, &mut rng, t);
        let x_next = plant_step(&x, &out.u, &d, &plant.a_true, &plant.b_true);
        cum += out.record.stage_cost;
        trace.x_norm.push(x.norm());
        trace.cumulative_cost.push(cum);
        trace.disturbances.push(d);
        trace.records.push(out.record);
        trace.details.push(out.detail);
        if !plant.x_set.contains(&x_next, 0.0) {
            trace.violations.push(Violation {
                t: t + 1,
                what: format!("x = {:?} outside X", x_next.as_slice()),
            });
            trace.states.push(x_next);
            trace.termination = Termination::Failed {
                t: t + 1,
                reason: "state left X".into(),
            };
            return Ok(trace);
        }
        trace.states.push(x_next.clone());
        x = x_next;
    }
    Ok(trace)
}

/// Optimal tube that `mode`'s controller computes at `states[k]` after being
/// driven along `states[..k]`.
pub fn probe_tube(
    plant: &PlantConfig,
    mode: Mode,
    states: &[DVector<f64>],
) -> Result<(TubeDecision, Polytope), MpcError> {
    let mut ctrl = plant.controller(mode, false)?;
    let mut last = None;
    for x in states {
        let out = ctrl.step(x)?;
        last = Some((out.detail.tube, out.detail.data.shape.set.clone()));
    }
    last.ok_or_else(|| MpcError::DimensionMismatch("no probe states".into()))
}

/// Largest violation of `inner`'s sections lying in `outer`'s, over all
/// prediction steps; `<= tol` means every section is contained.
pub fn section_containment_gap(
    inner: &TubeDecision,
    inner_shape: &Polytope,
    outer: &TubeDecision,
    outer_shape: &Polytope,
) -> f64 {
    let n = inner.horizon().min(outer.horizon());
    let sv = inner_shape.vertices();
    (0..=n)
        .flat_map(|i| {
            inner
                .section_vertices(i, sv)
                .into_iter()
                .map(move |z| section_residual(&z, &outer.alpha[i], outer.beta[i], outer_shape))
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// One row of `comparison.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub t: usize,
    pub mode: Mode,
    pub stage_cost: f64,
    pub cumulative_cost: f64,
    pub delta_cumulative_cost: f64,
    pub x_norm: f64,
    pub volume_psi: f64,
    pub volume_shape: f64,
    pub volume_terminal: f64,
    pub backup_flag: bool,
    pub feasible: bool,
    /// Gap of this mode's tube against the reference mode's tube at `t`.
    pub containment_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: Mode,
    pub steps: usize,
    pub feasible_steps: usize,
    pub total_cost: f64,
    pub final_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub seed: u64,
    /// Mode of the first trace; deltas and gaps are taken against it.
    pub reference: Mode,
    pub rows: Vec<ComparisonRow>,
    pub summaries: Vec<ModeSummary>,
}

impl ComparisonReport {
    pub fn summary(&self, mode: Mode) -> Option<&ModeSummary> {
        self.summaries.iter().find(|s| s.mode == mode)
    }

    /// `"a ≤ b"` or `"a > b"` on total cost.
    pub fn cost_ordering(&self, a: Mode, b: Mode) -> Option<String> {
        let (sa, sb) = (self.summary(a)?, self.summary(b)?);
        let op = if sa.total_cost <= sb.total_cost { "≤" } else { ">" };
        Some(format!("{a} {op} {b}"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), SimError> {
        let mut w = csv::Writer::from_path(path).map_err(io::Error::from)?;
        for row in &self.rows {
            w.serialize(row).map_err(io::Error::from)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<10} {:>6} {:>9} {:>14} {:>12}\n",
            "mode", "steps", "feasible", "total cost", "final |x|"
        );
        for s in &self.summaries {
            out += &format!(
                "{:<10} {:>6} {:>9} {:>14.4} {:>12.4e}\n",
                s.mode.as_str(),
                s.steps,
                s.feasible_steps,
                s.total_cost,
                s.final_norm
            );
        }
        out
    }
}

/// Per-time cost, volume and containment series of traces sharing a plant
/// configuration and seed.
pub fn compare_runs(traces: &[RunTrace]) -> Result<ComparisonReport, SimError> {
    let first = traces.first().ok_or(SimError::MismatchedConfig)?;
    if traces.iter().any(|t| t.seed != first.seed || t.plant != first.plant) {
        return Err(SimError::MismatchedConfig);
    }
    let mut rows = Vec::new();
    for tr in traces {
        for (k, r) in tr.records.iter().enumerate() {
            let containment_gap = match (tr.details.get(k), first.details.get(k)) {
                (Some(a), Some(b)) => section_containment_gap(&a.tube, &a.data.shape.set, &b.tube, &b.data.shape.set),
                _ => f64::NAN,
            };
            let ref_cum = first.cumulative_cost.get(k).copied().unwrap_or(f64::NAN);
            rows.push(ComparisonRow {
                t: r.t,
                mode: tr.mode,
                stage_cost: r.stage_cost,
                cumulative_cost: tr.cumulative_cost[k],
                delta_cumulative_cost: tr.cumulative_cost[k] - ref_cum,
                x_norm: tr.x_norm[k],
                volume_psi: r.volumes.psi,
                volume_shape: r.volumes.shape,
                volume_terminal: r.volumes.terminal,
                backup_flag: r.backup_flag,
                feasible: r.solver.status == "Optimal",
                containment_gap,
            });
        }
    }
    let summaries = traces
        .iter()
        .map(|t| ModeSummary {
            mode: t.mode,
            steps: t.steps(),
            feasible_steps: t.feasible_steps(),
            total_cost: t.total_cost(),
            final_norm: t.final_state().norm(),
        })
        .collect();
    Ok(ComparisonReport {
        seed: first.seed,
        reference: first.mode,
        rows,
        summaries,
    })
}

/// Outcome of one invariant over a trace; `passed` is `None` when the
/// invariant does not apply to the configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantCheck {
    pub name: &'static str,
    pub passed: Option<bool>,
    pub detail: String,
}

impl InvariantCheck {
    fn new(name: &'static str, ok: bool, detail: String) -> Self {
        InvariantCheck {
            name,
            passed: Some(ok),
            detail,
        }
    }
}

/// Worst value of `f` over `items` with its position.
fn worst<T>(items: impl Iterator<Item = (usize, T)>, f: impl Fn(&T) -> Option<f64>) -> Option<(usize, f64)> {
    items
        .filter_map(|(t, x)| f(&x).map(|v| (t, v)))
        .fold(None, |acc, (t, v)| match acc {
            Some((_, w)) if w >= v => acc,
            _ => Some((t, v)),
        })
}

fn describe(w: Option<(usize, f64)>) -> String {
    match w {
        Some((t, v)) => format!("worst {v:.3e} at t={t}"),
        None => "no samples".into(),
    }
}

/// True when the run has no disturbance and a known parameter.
pub fn is_nominal(plant: &PlantConfig) -> bool {
    let point_at_origin = |d: &Polytope| d.num_vertices() == 1 && d.vertices()[0].amax() == 0.0;
    let known = plant.psi_set().map(|p| p.chart().dim() == 0).unwrap_or(false);
    point_at_origin(&plant.d_set) && plant.d_true.as_ref().is_none_or(point_at_origin) && known
}

/// Runs every closed-loop invariant over an audited trace.
pub fn check_invariants(trace: &RunTrace, tol: &Tolerances) -> Vec<InvariantCheck> {
    let mut out = Vec::new();
    let completed = trace.termination == Termination::Completed;
    out.push(InvariantCheck::new(
        "completion",
        completed && trace.steps() == trace.plant.t_steps,
        format!(
            "{:?} after {} of {} steps",
            trace.termination,
            trace.steps(),
            trace.plant.t_steps
        ),
    ));
    out.push(InvariantCheck::new(
        "constraints",
        trace.violations.is_empty(),
        match trace.violations.first() {
            Some(v) => format!("{} violations, first at t={}: {}", trace.violations.len(), v.t, v.what),
            None => "all states in X and inputs in U".into(),
        },
    ));
    let not_optimal: Vec<usize> = trace
        .records
        .iter()
        .filter(|r| r.solver.status != "Optimal")
        .map(|r| r.t)
        .collect();
    out.push(InvariantCheck::new(
        "feasibility",
        not_optimal.is_empty() && completed,
        if not_optimal.is_empty() {
            "every solve optimal".into()
        } else {
            format!("non-optimal steps {not_optimal:?}")
        },
    ));

    let nest = worst(trace.details.windows(2).enumerate(), |w| {
        let (prev, next) = (&w[0].psi_set, &w[1].psi_set);
        Some(
            next.vertices()
                .iter()
                .map(|v| {
                    if prev.contains(v, tol.nesting) {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                })
                .fold(0.0, f64::max),
        )
    });
    out.push(InvariantCheck::new(
        "nestedness",
        nest.is_none_or(|(_, v)| v == 0.0) && trace.truth_outside.is_empty(),
        if trace.truth_outside.is_empty() {
            format!("parameter sets nested, truth inside at every step ({})", describe(nest))
        } else {
            format!("truth outside at t={:?}", trace.truth_outside)
        },
    ));

    let mut cert = None::<(usize, f64)>;
    let mut term_growth = true;
    let mut shape_shrink = true;
    let mut last_terminal: Option<f64> = None;
    let mut last_shape: Option<f64> = None;
    for (k, (r, d)) in trace.records.iter().zip(&trace.details).enumerate() {
        let Some(ev) = &r.event else { continue };
        let data = &d.data;
        let a_cl = &data.a_hat + &data.b_hat * &data.gains.k;
        let w = &data.dist.w_global;
        let res = crate::synthesis::rpi_residual(&a_cl, &data.shape.set, w).max(crate::synthesis::terminal_residual(
            &a_cl,
            &data.gains.k,
            &data.terminal.set,
            &data.x_set,
            &data.u_set,
            w,
        ));
        if cert.is_none_or(|(_, v)| res > v) {
            cert = Some((k, res));
        }
        match ev {
            crate::mpc::SynthesisEvent::Accepted => {
                if last_terminal.is_some_and(|v| r.volumes.terminal < v * (1.0 - 1e-9)) {
                    term_growth = false;
                }
                last_terminal = Some(r.volumes.terminal);
            }
            crate::mpc::SynthesisEvent::RefinementOnly => {
                if last_shape.is_some_and(|v| r.volumes.shape > v * (1.0 + 1e-9)) {
                    shape_shrink = false;
                }
            }
            crate::mpc::SynthesisEvent::Initial => last_terminal = Some(r.volumes.terminal),
            _ => {}
        }
        last_shape = Some(r.volumes.shape);
    }
    out.push(InvariantCheck::new(
        "rpi_certificates",
        cert.is_none_or(|(_, v)| v <= tol.certificate) && term_growth && shape_shrink,
        format!(
            "{}; terminal volume nondecreasing on accept: {term_growth}; shape volume nonincreasing on refinement: {shape_shrink}",
            describe(cert)
        ),
    ));

    let cont = worst(trace.records.iter().enumerate(), |r| r.containment_residual);
    out.push(InvariantCheck::new(
        "one_step_containment",
        cont.is_none_or(|(_, v)| v <= tol.containment),
        describe(cont),
    ));
    let cand = worst(trace.records.iter().enumerate(), |r| r.candidate_residual);
    let audited = trace.records.iter().skip(1).all(|r| r.candidate_residual.is_some());
    out.push(InvariantCheck::new(
        "shifted_candidate",
        audited && cand.is_none_or(|(_, v)| v <= tol.candidate),
        if audited {
            describe(cand)
        } else {
            "trace was not audited".into()
        },
    ));

    if is_nominal(&trace.plant) {
        let inc = worst(trace.records.windows(2).enumerate(), |w| Some(w[1].cost - w[0].cost));
        out.push(InvariantCheck::new(
            "nominal_decrease",
            inc.is_none_or(|(_, v)| v <= tol.cost_decrease),
            format!("largest cost increase: {}", describe(inc)),
        ));
    } else {
        out.push(InvariantCheck {
            name: "nominal_decrease",
            passed: None,
            detail: "skipped: needs D = {0} and a singleton parameter set".into(),
        });
    }
    out
}
