//! `run | check | compare` front end.
//!
//! Exit codes: 0 success, 1 invalid config or failed check, 2 problem
//! infeasible at the initial state, 3 broken invariant.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::mpc::{Mode, MpcError};
use crate::sim::{
    check_invariants, compare_runs, probe_tube, run_closed_loop, section_containment_gap, PlantConfig, RunTrace,
    SimError, Termination,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_BROKEN: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "adaptube", version, about = "Adaptive tube MPC simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; defaults to the config's `output_dir`, then `out`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated seeds overriding the config's seed.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Single mode overriding the config's mode list.
    #[arg(long)]
    pub mode: Option<Mode>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every listed mode and export traces.
    Run(Common),
    /// Run the invariant suite.
    Check(Common),
    /// Run the listed modes side by side and export `comparison.csv`.
    Compare(Common),
}

struct Job {
    cfg: ExperimentConfig,
    modes: Vec<Mode>,
    seeds: Vec<u64>,
    out: PathBuf,
}

impl Job {
    fn load(c: &Common) -> Result<Self, String> {
        let cfg = ExperimentConfig::load(&c.config).map_err(|e| format!("{}: {e}", c.config.display()))?;
        let modes = match c.mode {
            Some(m) => vec![m],
            None => cfg.modes.clone(),
        };
        let seeds = c.seeds.clone().unwrap_or_else(|| vec![cfg.seed]);
        let out = c
            .out
            .clone()
            .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"));
        Ok(Job { cfg, modes, seeds, out })
    }

    fn plant(&self, seed: u64) -> PlantConfig {
        let mut p = self.cfg.plant().expect("validated on load");
        p.seed = seed;
        p
    }
}

/// Trace of a run, including the partial trace of a failed one.
fn run_one(plant: &PlantConfig, mode: Mode) -> (RunTrace, Option<String>) {
    match run_closed_loop(plant, mode) {
        Ok(t) => (t, None),
        Err(SimError::BrokenInvariant { partial, t, reason }) => {
            (*partial, Some(format!("broken invariant at t={t}: {reason}")))
        }
        Err(SimError::Controller { partial, t, source }) => {
            let hint = match &source {
                MpcError::Uncertainty(crate::uncertainty::UncertaintyError::EmptyResult) => {
                    " (EmptyResult: modeling assumptions falsified)"
                }
                _ => "",
            };
            (*partial, Some(format!("controller failed at t={t}: {source}{hint}")))
        }
        Err(e) => {
            let mut tr = RunTrace::empty(plant, mode);
            tr.termination = Termination::Failed {
                t: 0,
                reason: e.to_string(),
            };
            (tr, Some(e.to_string()))
        }
    }
}

fn exit_for(traces: &[&RunTrace]) -> i32 {
    let mut code = EXIT_OK;
    for t in traces {
        let c = match t.termination {
            Termination::Completed => EXIT_OK,
            Termination::InitiallyInfeasible => EXIT_INFEASIBLE,
            Termination::BrokenInvariant { .. } => EXIT_BROKEN,
            Termination::Failed { .. } => EXIT_INVALID,
        };
        code = match (code, c) {
            (EXIT_BROKEN, _) | (_, EXIT_BROKEN) => EXIT_BROKEN,
            (EXIT_INFEASIBLE, _) | (_, EXIT_INFEASIBLE) => EXIT_INFEASIBLE,
            (a, b) => a.max(b),
        };
    }
    code
}

fn summary_line(tr: &RunTrace, err: &Option<String>) -> String {
    let mut s = format!(
        "{:<8} seed={:<4} feasible {}/{} steps, final |x| = {:.4e}, total cost = {:.4}",
        tr.mode.as_str(),
        tr.seed,
        tr.feasible_steps(),
        tr.plant.t_steps,
        tr.final_state().norm(),
        tr.total_cost()
    );
    if tr.termination == Termination::InitiallyInfeasible {
        s += " [initially infeasible]";
    }
    if !tr.violations.is_empty() {
        s += &format!(" [{} constraint violations]", tr.violations.len());
    }
    if let Some(e) = err {
        s += &format!(" [{e}]");
    }
    s
}

fn run_dir(out: &Path, mode: Mode, seed: u64) -> PathBuf {
    out.join(mode.as_str()).join(format!("seed_{seed}"))
}

fn cmd_run(job: &Job) -> i32 {
    let runs: Vec<(Mode, u64)> = job
        .seeds
        .iter()
        .flat_map(|&s| job.modes.iter().map(move |&m| (m, s)))
        .collect();
    let results: Vec<(RunTrace, Option<String>, Option<String>)> = runs
        .par_iter()
        .map(|&(mode, seed)| {
            let (tr, err) = run_one(&job.plant(seed), mode);
            let io = tr.export(&run_dir(&job.out, mode, seed)).err().map(|e| e.to_string());
            (tr, err, io)
        })
        .collect();
    let mut code = exit_for(&results.iter().map(|r| &r.0).collect::<Vec<_>>());
    for (tr, err, io) in &results {
        println!("{}", summary_line(tr, err));
        if let Some(e) = io {
            eprintln!("cannot write trace: {e}");
            code = code.max(EXIT_INVALID);
        }
    }
    code
}

fn cmd_check(job: &Job) -> i32 {
    let runs: Vec<(Mode, u64)> = job
        .seeds
        .iter()
        .flat_map(|&s| job.modes.iter().map(move |&m| (m, s)))
        .collect();
    let results: Vec<(RunTrace, Option<String>)> = runs
        .par_iter()
        .map(|&(mode, seed)| run_one(&job.plant(seed), mode))
        .collect();
    let mut all = true;
    for (tr, err) in &results {
        println!("{}", summary_line(tr, err));
        for c in check_invariants(tr, &job.cfg.tolerances) {
            let tag = match c.passed {
                Some(true) => "PASS",
                Some(false) => {
                    all = false;
                    "FAIL"
                }
                None => "SKIP",
            };
            println!("  {tag} {:<22} {}", c.name, c.detail);
        }
    }
    let code = exit_for(&results.iter().map(|r| &r.0).collect::<Vec<_>>());
    if code != EXIT_OK {
        code
    } else if all {
        EXIT_OK
    } else {
        EXIT_INVALID
    }
}

fn cmd_compare(job: &Job) -> i32 {
    if job.modes.len() < 2 {
        eprintln!("compare needs at least two modes (got {})", job.modes.len());
        return EXIT_INVALID;
    }
    let mut code = EXIT_OK;
    for &seed in &job.seeds {
        let plant = job.plant(seed);
        let results: Vec<(RunTrace, Option<String>)> = job.modes.par_iter().map(|&m| run_one(&plant, m)).collect();
        for (tr, err) in &results {
            if err.is_some() {
                println!("{}", summary_line(tr, err));
            }
        }
        let traces: Vec<RunTrace> = results.iter().map(|r| r.0.clone()).collect();
        code = code.max(exit_for(&traces.iter().collect::<Vec<_>>()));
        let report = match compare_runs(&traces) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("{e}");
                return EXIT_INVALID;
            }
        };
        let dir = if job.seeds.len() > 1 {
            job.out.join(format!("seed_{seed}"))
        } else {
            job.out.clone()
        };
        if let Err(e) = std::fs::create_dir_all(&dir)
            .map_err(SimError::from)
            .and_then(|_| report.write_csv(&dir.join("comparison.csv")))
        {
            eprintln!("cannot write comparison: {e}");
            return EXIT_INVALID;
        }
        println!("seed {seed}");
        print!("{}", report.table());
        if let Some(o) = report.cost_ordering(Mode::Adaptive, Mode::RobustFixed) {
            println!("cost ordering: {o}");
        }
        let adaptive = traces.iter().find(|t| t.mode == Mode::Adaptive);
        if let (Some(a), true) = (adaptive, job.modes.contains(&Mode::RobustFixed)) {
            if a.states.len() > 2 {
                // robust problem solved at the adaptive run's state
                if let Ok((robust, shape)) = probe_tube(&plant, Mode::RobustFixed, &a.states[..2]) {
                    let d = &a.details[1];
                    let gap = section_containment_gap(&d.tube, &d.data.shape.set, &robust, &shape);
                    println!("t=1 adaptive tube inside robust tube: gap {gap:.3e}");
                }
            }
        }
    }
    code
}

/// Parses `args` and dispatches; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    let (common, f): (&Common, fn(&Job) -> i32) = match &cli.command {
        Command::Run(c) => (c, cmd_run),
        Command::Check(c) => (c, cmd_check),
        Command::Compare(c) => (c, cmd_compare),
    };
    match Job::load(common) {
        Ok(job) => f(&job),
        Err(e) => {
            eprintln!("{e}");
            EXIT_INVALID
        }
    }
}
