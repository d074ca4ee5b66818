use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::candidate::shifted_candidate;
use super::cocp::{cocp_residual, control_input, solve_cocp, CocpData, CocpSolution};
use super::{stage_cost, MpcError, TubeDecision};
use crate::polytope::{contains_set, volume, Polytope};
use crate::solver::{synthesize_gain, GainPair};
use crate::synthesis::{
    check_criterion, lumped_disturbance_set, reach_sets, stepwise_disturbance_sets, terminal_set, tube_shape, Caps,
    DisturbanceSets, RejectReason, TerminalSet, TubeShape, Verdict,
};
use crate::uncertainty::{
    component_vertex_sets, gradient_step, hull_with_point, nonfalsified_halfspaces, project_to_set, refine_set,
    regressor, split_blocks, ParamMatrix, ParamSet,
};

/// Largest constraint residual at which a shifted tube counts as feasible.
pub const CANDIDATE_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// Set-membership refinement, estimator and gain re-synthesis.
    #[serde(rename = "adaptive")]
    Adaptive,
    /// Fixed `Ψ_0` and estimate, state-dependent disturbance sets.
    #[serde(rename = "reach")]
    NonAdaptiveReach,
    /// Fixed `Ψ_0` and estimate, `W_global` at every prediction step.
    #[serde(rename = "robust")]
    RobustFixed,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Adaptive, Mode::NonAdaptiveReach, Mode::RobustFixed];

    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Adaptive => "adaptive",
            Mode::NonAdaptiveReach => "reach",
            Mode::RobustFixed => "robust",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "adaptive" => Ok(Mode::Adaptive),
            "reach" => Ok(Mode::NonAdaptiveReach),
            "robust" => Ok(Mode::RobustFixed),
            other => Err(format!("unknown mode `{other}` (expected adaptive, reach or robust)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ControllerSettings {
    pub x_set: Polytope,
    pub u_set: Polytope,
    pub d_set: Polytope,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub horizon: usize,
    pub kappa: f64,
    pub caps: Caps,
    pub reach_inclusion: bool,
    /// Reuse the previous tube when both solves of a step fail.
    pub fast_path: bool,
    /// Evaluate the shifted candidate against the backup problem every step.
    pub audit: bool,
}

/// What happened to the gain/set configuration at one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthesisEvent {
    Initial,
    Accepted,
    /// Ψ shrank, estimate unchanged: terminal set recomputed, shape kept.
    RefinementOnly,
    Rejected(RejectReason),
    /// The problem was infeasible under the new configuration.
    InfeasibleBackup,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub status: String,
    pub iterations: usize,
    pub kkt_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Volumes {
    pub psi: f64,
    pub shape: f64,
    pub terminal: f64,
}

/// One line of `trace.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    #[serde(rename = "J*")]
    pub cost: f64,
    pub stage_cost: f64,
    pub backup_flag: bool,
    pub verdict: Option<Verdict>,
    pub event: Option<SynthesisEvent>,
    pub fast_path: bool,
    pub solver: SolverStats,
    pub psi_hat: Vec<Vec<f64>>,
    pub gain: Vec<Vec<f64>>,
    pub volumes: Volumes,
    /// `max_k h_k'(x_t - α*_1) - β*_1 g_k` against the previous tube's section 1.
    pub containment_residual: Option<f64>,
    /// Constraint residual of the shifted previous tube.
    pub candidate_residual: Option<f64>,
    pub sets: String,
}

/// In-memory companion of a record: the problem that was solved and its optimum.
#[derive(Debug, Clone)]
pub struct StepDetail {
    pub data: CocpData,
    pub tube: TubeDecision,
    pub psi_set: ParamSet,
    pub psi_hat: ParamMatrix,
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    pub u: DVector<f64>,
    pub record: StepRecord,
    pub detail: StepDetail,
}

#[derive(Debug, Clone)]
struct Config {
    psi_set: ParamSet,
    psi_hat: ParamMatrix,
    gains: GainPair,
    shape: Arc<TubeShape>,
    terminal: Arc<TerminalSet>,
    w_global: Polytope,
}

/// Receding-horizon controller; one instance per closed-loop run.
#[derive(Debug, Clone)]
pub struct Controller {
    settings: ControllerSettings,
    x_set: Arc<Polytope>,
    u_set: Arc<Polytope>,
    mode: Mode,
    t: usize,
    cfg: Config,
    prev_gains: GainPair,
    backup_flag: bool,
    last_input: Option<(DVector<f64>, DVector<f64>)>,
    last_tube: Option<TubeDecision>,
    last_data: Option<CocpData>,
}

fn mat_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().cloned().collect()).collect()
}

impl Controller {
    pub fn new(
        settings: ControllerSettings,
        mode: Mode,
        psi_set: ParamSet,
        psi_hat: ParamMatrix,
    ) -> Result<Self, MpcError> {
        let n = settings.x_set.dim();
        let m = settings.u_set.dim();
        if psi_hat.shape() != (n, n + m) || settings.d_set.dim() != n {
            return Err(MpcError::DimensionMismatch("estimate or disturbance set".into()));
        }
        if !psi_set.contains(&psi_hat, 1e-8) {
            return Err(MpcError::Setup(
                "initial estimate lies outside the parameter set".into(),
            ));
        }
        let (a, b) = split_blocks(&psi_hat);
        let gains = synthesize_gain(&a, &b, &settings.q, &settings.r).map_err(|e| MpcError::Setup(e.to_string()))?;
        let w_global = w_global_for(&settings, &psi_set, &psi_hat)?;
        let shape = tube_shape(&a, &b, &gains.k, &w_global, settings.caps.m_max)
            .map_err(|e| MpcError::Setup(format!("tube shape: {e}")))?;
        let terminal = terminal_set(&a, &b, &gains.k, &settings.x_set, &settings.u_set, &w_global)
            .map_err(|e| MpcError::Setup(format!("terminal set: {e}")))?;
        Ok(Controller {
            x_set: Arc::new(settings.x_set.clone()),
            u_set: Arc::new(settings.u_set.clone()),
            settings,
            mode,
            t: 0,
            prev_gains: gains.clone(),
            cfg: Config {
                psi_set,
                psi_hat,
                gains,
                shape: Arc::new(shape),
                terminal: Arc::new(terminal),
                w_global,
            },
            backup_flag: false,
            last_input: None,
            last_tube: None,
            last_data: None,
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn settings(&self) -> &ControllerSettings {
        &self.settings
    }

    pub fn psi_set(&self) -> &ParamSet {
        &self.cfg.psi_set
    }

    pub fn psi_hat(&self) -> &ParamMatrix {
        &self.cfg.psi_hat
    }

    pub fn gains(&self) -> &GainPair {
        &self.cfg.gains
    }

    pub fn prev_gains(&self) -> &GainPair {
        &self.prev_gains
    }

    pub fn shape(&self) -> &TubeShape {
        &self.cfg.shape
    }

    pub fn terminal(&self) -> &TerminalSet {
        &self.cfg.terminal
    }

    pub fn w_global(&self) -> &Polytope {
        &self.cfg.w_global
    }

    pub fn backup_flag(&self) -> bool {
        self.backup_flag
    }

    pub fn last_tube(&self) -> Option<&TubeDecision> {
        self.last_tube.as_ref()
    }

    /// Problem data for configuration `cfg` at state `x_t`.
    fn data_for(&self, cfg: &Config, x_t: &DVector<f64>) -> Result<CocpData, MpcError> {
        let s = &self.settings;
        let (a_hat, b_hat) = split_blocks(&cfg.psi_hat);
        let dist = match self.mode {
            Mode::RobustFixed => {
                let mut x_reach = vec![Polytope::point(x_t.clone())];
                x_reach.resize(s.horizon, s.x_set.clone());
                DisturbanceSets {
                    w_global: cfg.w_global.clone(),
                    w_step: vec![cfg.w_global.clone(); s.horizon],
                    x_reach,
                }
            }
            _ => {
                let comps = component_vertex_sets(&cfg.psi_set, &cfg.psi_hat);
                let x_reach = reach_sets(
                    &comps.psi_a,
                    &comps.psi_b,
                    x_t,
                    &s.x_set,
                    &s.u_set,
                    &s.d_set,
                    s.horizon,
                    s.caps.f_max,
                )?;
                let w_step =
                    stepwise_disturbance_sets(&comps.phi_a, &comps.phi_b, &x_reach, &s.u_set, &s.d_set, s.caps.f_max)?;
                DisturbanceSets {
                    w_global: cfg.w_global.clone(),
                    w_step,
                    x_reach,
                }
            }
        };
        Ok(CocpData {
            a_hat,
            b_hat,
            gains: cfg.gains.clone(),
            shape: cfg.shape.clone(),
            terminal: cfg.terminal.clone(),
            dist: Arc::new(dist),
            x_set: self.x_set.clone(),
            u_set: self.u_set.clone(),
            q: s.q.clone(),
            r: s.r.clone(),
            horizon: s.horizon,
            reach_inclusion: s.reach_inclusion,
        })
    }

    /// Previous estimate, gain and shape over `refined ∪ {ψ̂_{t-1}}`.
    fn backup_config(&self, refined: &ParamSet, x_t: &DVector<f64>) -> Result<Config, MpcError> {
        let old = &self.cfg;
        let psi_set = hull_with_point(refined, &old.psi_hat)?;
        let w_global = w_global_for(&self.settings, &psi_set, &old.psi_hat)?;
        let (a, b) = split_blocks(&old.psi_hat);
        let s = &self.settings;
        // the previous terminal set stays admissible for the smaller W
        let terminal = match terminal_set(&a, &b, &old.gains.k, &s.x_set, &s.u_set, &w_global) {
            Ok(ts) => Arc::new(ts),
            Err(_) => old.terminal.clone(),
        };
        let cfg = Config {
            psi_set,
            psi_hat: old.psi_hat.clone(),
            gains: old.gains.clone(),
            shape: old.shape.clone(),
            terminal,
            w_global,
        };
        self.with_refreshed_shape(cfg, x_t)
    }

    /// Replaces the shape of a configuration that keeps the current
    /// estimate and gain by one recomputed for its smaller `w_global`. The
    /// new shape is adopted only if it is nested in the old one and the
    /// shifted previous tube stays feasible with it.
    fn with_refreshed_shape(&self, cfg: Config, x_t: &DVector<f64>) -> Result<Config, MpcError> {
        let (a, b) = split_blocks(&cfg.psi_hat);
        let Ok(new) = tube_shape(&a, &b, &cfg.gains.k, &cfg.w_global, self.settings.caps.m_max) else {
            return Ok(cfg);
        };
        if !contains_set(&cfg.shape.set, &new.set, 1e-9) {
            return Ok(cfg);
        }
        let trial = Config {
            shape: Arc::new(new),
            ..cfg.clone()
        };
        if let (Some(prev), Some(prev_data)) = (&self.last_tube, &self.last_data) {
            let data = self.data_for(&trial, x_t)?;
            let certified = shifted_candidate(prev, prev_data, &data, x_t)
                .and_then(|c| cocp_residual(x_t, &data, &c))
                .is_ok_and(|r| r <= CANDIDATE_TOL);
            if !certified {
                return Ok(cfg);
            }
        }
        Ok(trial)
    }

    /// Refines Ψ, moves the estimate and decides on the new configuration.
    /// Returns the configuration, the event and whether backup engaged.
    fn adapt(&self, x_t: &DVector<f64>) -> Result<(Config, SynthesisEvent, Option<Verdict>, ParamSet), MpcError> {
        let s = &self.settings;
        let old = &self.cfg;
        let (x_prev, u_prev) = self.last_input.as_ref().expect("adapt after first step");
        let cuts = nonfalsified_halfspaces(x_t, x_prev, u_prev, &s.d_set, old.psi_set.chart());
        let refined = refine_set(&old.psi_set, &cuts, s.caps.l_max)?;
        let g_prev = regressor(x_prev, u_prev);
        let psi_bar = gradient_step(&old.psi_hat, x_t, &g_prev, s.kappa);
        let psi_new = project_to_set(&psi_bar, &refined)?;
        let unchanged = (&psi_new - &old.psi_hat).amax() <= 1e-12;
        let (a, b) = split_blocks(&psi_new);

        if unchanged {
            let w_global = w_global_for(s, &refined, &old.psi_hat)?;
            let terminal = terminal_set(&a, &b, &old.gains.k, &s.x_set, &s.u_set, &w_global);
            let verdict = check_criterion(&old.gains, &old.gains, &a, &b, &s.q, &s.r, terminal.as_ref());
            if let (Verdict::Accept, Ok(ts)) = (&verdict, terminal) {
                let cfg = Config {
                    psi_set: refined.clone(),
                    psi_hat: old.psi_hat.clone(),
                    gains: old.gains.clone(),
                    shape: old.shape.clone(),
                    terminal: Arc::new(ts),
                    w_global,
                };
                let cfg = self.with_refreshed_shape(cfg, x_t)?;
                return Ok((cfg, SynthesisEvent::RefinementOnly, Some(verdict), refined));
            }
            let reason = reject_reason(&verdict);
            return Ok((
                self.backup_config(&refined, x_t)?,
                SynthesisEvent::Rejected(reason),
                Some(verdict),
                refined,
            ));
        }

        let cand = match synthesize_gain(&a, &b, &s.q, &s.r) {
            Ok(g) => g,
            Err(e) => {
                let verdict = Verdict::Reject(RejectReason::Gain(e.to_string()));
                let reason = reject_reason(&verdict);
                return Ok((
                    self.backup_config(&refined, x_t)?,
                    SynthesisEvent::Rejected(reason),
                    Some(verdict),
                    refined,
                ));
            }
        };
        let w_global = w_global_for(s, &refined, &psi_new)?;
        let terminal = terminal_set(&a, &b, &cand.k, &s.x_set, &s.u_set, &w_global);
        let mut verdict = check_criterion(&old.gains, &cand, &a, &b, &s.q, &s.r, terminal.as_ref());
        if let (Verdict::Accept, Ok(ts)) = (&verdict, &terminal) {
            match tube_shape(&a, &b, &cand.k, &w_global, s.caps.m_max) {
                Ok(shape) => {
                    let cfg = Config {
                        psi_set: refined.clone(),
                        psi_hat: psi_new,
                        gains: cand,
                        shape: Arc::new(shape),
                        terminal: Arc::new(ts.clone()),
                        w_global,
                    };
                    return Ok((cfg, SynthesisEvent::Accepted, Some(verdict), refined));
                }
                Err(e) => verdict = Verdict::Reject(RejectReason::Shape(e.to_string())),
            }
        }
        let reason = reject_reason(&verdict);
        Ok((
            self.backup_config(&refined, x_t)?,
            SynthesisEvent::Rejected(reason),
            Some(verdict),
            refined,
        ))
    }

    /// One receding-horizon iteration at the measured state `x_t`.
    pub fn step(&mut self, x_t: &DVector<f64>) -> Result<StepOutput, MpcError> {
        let t = self.t;
        if x_t.len() != self.settings.x_set.dim() {
            return Err(MpcError::DimensionMismatch("measured state".into()));
        }
        if !self.settings.x_set.contains(x_t, 0.0) {
            return Err(MpcError::StateOutsideX);
        }

        let mut event = None;
        let mut verdict = None;
        let mut backup = false;
        // Ψ_t before the backup hull, for the candidate problem
        let mut refined = None;
        let mut cfg = self.cfg.clone();
        let adapt = t > 0 && self.mode == Mode::Adaptive && !self.backup_flag;
        if t == 0 {
            event = Some(SynthesisEvent::Initial);
        } else if adapt {
            let (c, e, v, r) = self.adapt(x_t)?;
            backup = matches!(e, SynthesisEvent::Rejected(_));
            cfg = c;
            event = Some(e);
            verdict = v;
            refined = Some(r);
        }

        let mut data = self.data_for(&cfg, x_t)?;
        let mut fast = false;
        let solved: Option<CocpSolution> = match solve_cocp(x_t, &data) {
            Ok(sol) => Some(sol),
            Err(MpcError::Infeasible(_)) if t == 0 => return Err(MpcError::InitiallyInfeasible),
            Err(MpcError::Infeasible(status)) => {
                let changed = adapt && !backup;
                let retry = if changed {
                    let bcfg = self.backup_config(refined.as_ref().expect("refined set on adaptive step"), x_t)?;
                    let bdata = self.data_for(&bcfg, x_t)?;
                    backup = true;
                    event = Some(SynthesisEvent::InfeasibleBackup);
                    cfg = bcfg;
                    data = bdata;
                    solve_cocp(x_t, &data).ok()
                } else {
                    None
                };
                match retry {
                    Some(sol) => Some(sol),
                    None if self.settings.fast_path && self.last_tube.is_some() => {
                        fast = true;
                        None
                    }
                    None => {
                        return Err(MpcError::BrokenInvariant {
                            t,
                            reason: format!("problem infeasible ({status:?}) under the backup configuration"),
                        })
                    }
                }
            }
            Err(e) => return Err(e),
        };

        let (tube, cost, stats) = match solved {
            Some(sol) => (
                sol.decision,
                sol.cost,
                SolverStats {
                    status: format!("{:?}", sol.status),
                    iterations: sol.iterations,
                    kkt_residual: sol.kkt_residual,
                },
            ),
            None => {
                let prev = self.last_tube.as_ref().expect("fast path needs a previous tube");
                let prev_data = self.last_data.as_ref().expect("fast path needs the previous problem");
                let cand = shifted_candidate(prev, prev_data, &data, x_t)?;
                (
                    cand,
                    f64::NAN,
                    SolverStats {
                        status: "FastPath".into(),
                        iterations: 0,
                        kkt_residual: f64::NAN,
                    },
                )
            }
        };
        let u = control_input(x_t, &tube, &data.shape)?;

        let containment_residual = self
            .last_tube
            .as_ref()
            .map(|prev| section_residual(x_t, &prev.alpha[1], prev.beta[1], &self.cfg.shape.set));

        let candidate_residual = if self.settings.audit && t > 0 {
            match (&self.last_tube, &self.last_data) {
                (Some(prev), Some(prev_data)) => {
                    // the configuration a backup at this step would use
                    let bdata = if !backup && event == Some(SynthesisEvent::Accepted) {
                        let bcfg = self.backup_config(refined.as_ref().expect("refined set on adaptive step"), x_t)?;
                        self.data_for(&bcfg, x_t)?
                    } else {
                        data.clone()
                    };
                    let res =
                        shifted_candidate(prev, prev_data, &bdata, x_t).and_then(|c| cocp_residual(x_t, &bdata, &c));
                    Some(res.unwrap_or(f64::INFINITY))
                }
                _ => None,
            }
        } else {
            None
        };

        if matches!(event, Some(SynthesisEvent::Accepted)) {
            self.prev_gains = self.cfg.gains.clone();
        }
        self.cfg = cfg;
        self.backup_flag = backup;
        self.last_input = Some((x_t.clone(), u.clone()));
        self.last_tube = Some(tube.clone());
        self.last_data = Some(data.clone());
        self.t += 1;

        let record = StepRecord {
            t,
            x: x_t.iter().cloned().collect(),
            u: u.iter().cloned().collect(),
            cost,
            stage_cost: stage_cost(x_t, &u, &self.settings.q, &self.settings.r),
            backup_flag: backup,
            verdict,
            event,
            fast_path: fast,
            solver: stats,
            psi_hat: mat_rows(&self.cfg.psi_hat),
            gain: mat_rows(&self.cfg.gains.k),
            volumes: Volumes {
                psi: self.cfg.psi_set.volume(),
                shape: volume(&self.cfg.shape.set),
                terminal: volume(&self.cfg.terminal.set),
            },
            containment_residual,
            candidate_residual,
            sets: format!("sets/{t}.json"),
        };
        Ok(StepOutput {
            u,
            record,
            detail: StepDetail {
                data,
                tube,
                psi_set: self.cfg.psi_set.clone(),
                psi_hat: self.cfg.psi_hat.clone(),
            },
        })
    }
}

fn reject_reason(v: &Verdict) -> RejectReason {
    match v {
        Verdict::Reject(r) => r.clone(),
        Verdict::Accept => RejectReason::Shape("accepted verdict without a configuration".into()),
    }
}

fn w_global_for(s: &ControllerSettings, psi_set: &ParamSet, psi_hat: &ParamMatrix) -> Result<Polytope, MpcError> {
    let comps = component_vertex_sets(psi_set, psi_hat);
    Ok(lumped_disturbance_set(
        &comps.phi_a,
        &comps.phi_b,
        &s.x_set,
        &s.u_set,
        &s.d_set,
        s.caps.f_max,
    )?)
}

/// `max_k h_k'(x - alpha) - beta g_k` over the facets of `shape`; `<= 0` iff
/// `x ∈ alpha ⊕ beta S`.
pub fn section_residual(x: &DVector<f64>, alpha: &DVector<f64>, beta: f64, shape: &Polytope) -> f64 {
    shape
        .hrep()
        .rows()
        .map(|(h, g)| h.dot(&(x - alpha)) - beta * g)
        .fold(f64::NEG_INFINITY, f64::max)
}
