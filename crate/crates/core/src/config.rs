//! Strict JSON experiment configuration.
//!
//! Unknown keys are rejected. Every validation error carries the line of the
//! offending key when it can be located in the source.

use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::mpc::Mode;
use crate::polytope::Polytope;
pub use crate::sim::Tolerances;
use crate::sim::{DisturbancePolicy, PlantConfig};
use crate::solver::min_eig_psd_check;
use crate::synthesis::Caps;
use crate::uncertainty::{join_blocks, ParamSet};

/// A set given in one of four forms. The dimension of `inf_ball` comes from
/// the key it is attached to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SetSpec {
    InfBall(f64),
    Box {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    Halfspaces {
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
    },
    Vertices(Vec<Vec<f64>>),
}

impl SetSpec {
    pub fn to_polytope(&self, dim: usize) -> Result<Polytope, String> {
        let p = match self {
            SetSpec::InfBall(r) => {
                if !(r.is_finite() && *r >= 0.0) {
                    return Err(format!("radius must be finite and nonnegative (got {r})"));
                }
                if *r == 0.0 {
                    Polytope::point(DVector::zeros(dim))
                } else {
                    Polytope::cube(dim, *r).map_err(|e| e.to_string())?
                }
            }
            SetSpec::Box { lower, upper } => {
                if lower.len() != dim || upper.len() != dim {
                    return Err(format!("box bounds must have length {dim}"));
                }
                Polytope::from_box(&DVector::from_column_slice(lower), &DVector::from_column_slice(upper))
                    .map_err(|e| e.to_string())?
            }
            SetSpec::Halfspaces { a, b } => {
                let m = matrix(a, a.len(), dim)?;
                if b.len() != a.len() {
                    return Err("`b` must have one entry per row of `A`".into());
                }
                Polytope::from_halfspaces(m, DVector::from_column_slice(b)).map_err(|e| e.to_string())?
            }
            SetSpec::Vertices(vs) => {
                if vs.iter().any(|v| v.len() != dim) {
                    return Err(format!("vertices must have length {dim}"));
                }
                Polytope::from_vertices_dim(vs.iter().map(|v| DVector::from_column_slice(v)).collect(), dim)
                    .map_err(|e| e.to_string())?
            }
        };
        if p.is_empty() {
            return Err("set is empty".into());
        }
        if p.bounding_box().is_none() {
            return Err("set is unbounded".into());
        }
        Ok(p)
    }
}

fn default_policy() -> DisturbancePolicy {
    DisturbancePolicy::UniformInD
}

fn default_modes() -> Vec<Mode> {
    Mode::ALL.to_vec()
}

fn default_steps() -> usize {
    60
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(rename = "A_true")]
    pub a_true: Vec<Vec<f64>>,
    #[serde(rename = "B_true")]
    pub b_true: Vec<Vec<f64>>,
    #[serde(rename = "X")]
    pub x_set: SetSpec,
    #[serde(rename = "U")]
    pub u_set: SetSpec,
    /// Disturbance bound the controller assumes.
    #[serde(rename = "D")]
    pub d_set: SetSpec,
    /// Set the plant draws from when it differs from `D`.
    #[serde(rename = "D_true", default, skip_serializing_if = "Option::is_none")]
    pub d_true: Option<SetSpec>,
    pub psi_vertices: Vec<Vec<Vec<f64>>>,
    /// Defaults to the vertex mean.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi_hat_0: Option<Vec<Vec<f64>>>,
    #[serde(rename = "N")]
    pub horizon: usize,
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    #[serde(rename = "R")]
    pub r: Vec<Vec<f64>>,
    pub kappa: f64,
    pub x_0: Vec<f64>,
    #[serde(rename = "T_steps", default = "default_steps")]
    pub t_steps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_policy")]
    pub disturbance_policy: DisturbancePolicy,
    #[serde(default = "default_modes")]
    pub modes: Vec<Mode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    #[serde(default)]
    pub caps: Caps,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default, skip_serializing_if = "is_false")]
    pub reach_inclusion: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    pub fast_path: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    Io(String),
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    Invalid {
        line: Option<usize>,
        key: String,
        message: String,
    },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io(m) => write!(f, "cannot read config: {m}"),
            ConfigError::Parse { line, column, message } => write!(f, "line {line}, column {column}: {message}"),
            ConfigError::Invalid {
                line: Some(line),
                key,
                message,
            } => write!(f, "line {line}: `{key}`: {message}"),
            ConfigError::Invalid {
                line: None,
                key,
                message,
            } => write!(f, "`{key}`: {message}"),
        }
    }
}

impl std::error::Error for ConfigError {}

/// 1-based line of the first `"key":` in `src`.
fn key_line(src: &str, key: &str) -> Option<usize> {
    let pat = format!("\"{key}\"");
    for (i, line) in src.lines().enumerate() {
        let mut rest = line;
        while let Some(pos) = rest.find(&pat) {
            let after = rest[pos + pat.len()..].trim_start();
            if after.starts_with(':') {
                return Some(i + 1);
            }
            rest = &rest[pos + pat.len()..];
        }
    }
    None
}

fn matrix(rows: &[Vec<f64>], r: usize, c: usize) -> Result<DMatrix<f64>, String> {
    if rows.len() != r || rows.iter().any(|row| row.len() != c) {
        return Err(format!("expected a {r}x{c} matrix"));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err("entries must be finite".into());
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let src = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&src)
    }

    /// Parses and validates.
    pub fn parse(src: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = serde_json::from_str(src).map_err(|e| ConfigError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        cfg.plant_with_source(Some(src))?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Validated plant for the configured seed.
    pub fn plant(&self) -> Result<PlantConfig, ConfigError> {
        self.plant_with_source(None)
    }

    fn plant_with_source(&self, src: Option<&str>) -> Result<PlantConfig, ConfigError> {
        let err = |key: &str, message: String| ConfigError::Invalid {
            line: src.and_then(|s| key_line(s, key)),
            key: key.to_string(),
            message,
        };
        let n = self.a_true.len();
        if n == 0 {
            return Err(err("A_true", "empty matrix".into()));
        }
        let a_true = matrix(&self.a_true, n, n).map_err(|m| err("A_true", m))?;
        let m = self.b_true.first().map_or(0, |r| r.len());
        if m == 0 {
            return Err(err("B_true", "empty matrix".into()));
        }
        let b_true = matrix(&self.b_true, n, m).map_err(|e| err("B_true", e))?;
        let x_set = self.x_set.to_polytope(n).map_err(|e| err("X", e))?;
        let u_set = self.u_set.to_polytope(m).map_err(|e| err("U", e))?;
        let d_set = self.d_set.to_polytope(n).map_err(|e| err("D", e))?;
        let d_true = match &self.d_true {
            Some(s) => Some(s.to_polytope(n).map_err(|e| err("D_true", e))?),
            None => None,
        };
        if self.psi_vertices.is_empty() {
            return Err(err("psi_vertices", "at least one vertex is required".into()));
        }
        let psi_vertices = self
            .psi_vertices
            .iter()
            .map(|v| matrix(v, n, n + m))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| err("psi_vertices", e))?;
        let psi_set = ParamSet::from_vertices(&psi_vertices).map_err(|e| err("psi_vertices", e.to_string()))?;
        let psi_hat_0 = match &self.psi_hat_0 {
            Some(p) => matrix(p, n, n + m).map_err(|e| err("psi_hat_0", e))?,
            None => psi_vertices.iter().fold(DMatrix::zeros(n, n + m), |acc, v| acc + v) / psi_vertices.len() as f64,
        };
        if !psi_set.contains(&psi_hat_0, 1e-8) {
            return Err(err(
                "psi_hat_0",
                "initial estimate lies outside the parameter set".into(),
            ));
        }
        if self.horizon == 0 {
            return Err(err("N", "horizon must be positive".into()));
        }
        let q = matrix(&self.q, n, n).map_err(|e| err("Q", e))?;
        if (&q - q.transpose()).amax() > 1e-12 || !min_eig_psd_check(&q, 1e-12).unwrap_or(false) {
            return Err(err("Q", "must be symmetric positive semidefinite".into()));
        }
        let r = matrix(&self.r, m, m).map_err(|e| err("R", e))?;
        if (&r - r.transpose()).amax() > 1e-12 || r.clone().cholesky().is_none() {
            return Err(err("R", "must be symmetric positive definite".into()));
        }
        if !(self.kappa > 0.0 && self.kappa < 2.0) {
            return Err(err("kappa", format!("kappa out of (0,2) (got {})", self.kappa)));
        }
        if self.x_0.len() != n || self.x_0.iter().any(|v| !v.is_finite()) {
            return Err(err("x_0", format!("expected {n} finite entries")));
        }
        let x0 = DVector::from_column_slice(&self.x_0);
        if !x_set.contains(&x0, 0.0) {
            return Err(err("x_0", "initial state lies outside X".into()));
        }
        if self.t_steps == 0 {
            return Err(err("T_steps", "must be positive".into()));
        }
        if self.modes.is_empty() {
            return Err(err("modes", "at least one mode is required".into()));
        }
        let c = self.caps;
        if c.m_max < n + 1 || c.l_max < 2 || c.f_max < n + 1 {
            return Err(err("caps", format!("caps too small for dimension {n}")));
        }
        let truth = join_blocks(&a_true, &b_true);
        if !psi_set.contains(&truth, 1e-8) {
            return Err(err("A_true", "[A_true B_true] lies outside the parameter set".into()));
        }
        Ok(PlantConfig {
            a_true,
            b_true,
            x_set,
            u_set,
            d_set,
            d_true,
            psi_vertices,
            psi_hat_0,
            horizon: self.horizon,
            q,
            r,
            kappa: self.kappa,
            x0,
            t_steps: self.t_steps,
            seed: self.seed,
            policy: self.disturbance_policy,
            caps: self.caps,
            reach_inclusion: self.reach_inclusion,
            fast_path: self.fast_path,
        })
    }
}
