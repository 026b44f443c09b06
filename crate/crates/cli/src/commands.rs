//! Subcommand implementations. Each returns a report for the caller and
//! writes its files through [`OutputDir`].

use std::fmt;
use std::io;
use std::path::Path;

use serde::Serialize;

use lgh_core::check::{self, BatterySize, CheckReport};
use lgh_core::dynamics::{
    simulate_hybrid, write_trajectory_csv, HybridSimulation, PiecewiseConstant, SwitchEvent,
};
use lgh_core::eg::{lasalle_audit, optimize, write_history_csv, EGRun, LaSalleReport, StopReason};
use lgh_core::extremal::{BranchSummary, CostateLaw, ShootingSummary};
use lgh_core::hmp::{
    satellite_reference_gs, Calibration, HmpResiduals, ValueFunction, SATELLITE_REFERENCE_TS,
};
use lgh_core::lie::GroupElement;
use lgh_core::Error;

use crate::config::{group_field, Loaded};
use crate::output::{adjoint_plot, convergence_plot, state_plot, OutputDir};

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_NON_TRANSVERSAL: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_NO_CONVERGED_START: i32 = 4;
pub const EXIT_LINE_SEARCH: i32 = 5;

#[derive(Debug)]
pub struct CommandError {
    pub code: i32,
    pub message: String,
}

impl fmt::Display for CommandError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CommandError {}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NonTransversal { .. } => EXIT_NON_TRANSVERSAL,
        Error::InvalidConfig { .. }
        | Error::OffGroup { .. }
        | Error::NotSkew { .. }
        | Error::InvalidGroup(_)
        | Error::UnknownStrategy { .. }
        | Error::DimensionMismatch { .. } => EXIT_CONFIG,
        Error::NoConvergedStart { .. } => EXIT_NO_CONVERGED_START,
        Error::LineSearchFailed { .. } => EXIT_LINE_SEARCH,
        _ => EXIT_FAILURE,
    }
}

impl From<Error> for CommandError {
    fn from(e: Error) -> Self {
        Self {
            code: exit_code(&e),
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for CommandError {
    fn from(e: io::Error) -> Self {
        Self {
            code: EXIT_FAILURE,
            message: format!("i/o error: {e}"),
        }
    }
}

pub type CmdResult<T> = Result<T, CommandError>;

fn config_error(field: &str, reason: impl Into<String>) -> CommandError {
    Error::config(field, reason).into()
}

fn rows(g: &GroupElement) -> Vec<f64> {
    g.to_row_vec()
}

fn require_switch(loaded: &Loaded) -> CmdResult<(GroupElement, f64)> {
    loaded
        .switch
        .ok_or_else(|| config_error("problem.switch", "this command needs initial switching data"))
}

/// Reads `t,u1[,u2[,u3]]` rows; missing channels are zero.
pub fn read_controls(path: &Path) -> CmdResult<PiecewiseConstant> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| config_error("controls", format!("cannot read {}: {e}", path.display())))?;
    let header = reader
        .headers()
        .map_err(|e| config_error("controls", e.to_string()))?
        .clone();
    let names: Vec<&str> = header.iter().collect();
    let expected = ["t", "u1", "u2", "u3"];
    if names.len() < 2 || names.len() > 4 || names != expected[..names.len()] {
        return Err(config_error("controls", "header must be t,u1[,u2[,u3]]"));
    }
    let (mut times, mut values) = (Vec::new(), Vec::new());
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| config_error("controls", e.to_string()))?;
        let nums: Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        let nums = nums.map_err(|e| config_error("controls", format!("row {}: {e}", line + 2)))?;
        if nums.len() != names.len() {
            return Err(config_error("controls", format!("row {}: wrong column count", line + 2)));
        }
        let mut u = [0.0; 3];
        u[..nums.len() - 1].copy_from_slice(&nums[1..]);
        times.push(nums[0]);
        values.push(u);
    }
    Ok(PiecewiseConstant::new(times, values)?)
}

#[derive(Debug, Serialize)]
pub struct EventRecord {
    pub t: f64,
    pub g_pre: Vec<f64>,
    pub g_post: Vec<f64>,
    pub transversality: f64,
    pub level: f64,
}

impl From<&SwitchEvent> for EventRecord {
    fn from(e: &SwitchEvent) -> Self {
        Self {
            t: e.t,
            g_pre: rows(&e.g_pre),
            g_post: rows(&e.g_post),
            transversality: e.transversality,
            level: e.level,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SimulateReport {
    pub events: Vec<EventRecord>,
    pub final_state: Vec<f64>,
    pub max_orthogonality_defect: f64,
    /// Error that stopped the run, if any.
    pub error: Option<String>,
}

pub fn simulate(loaded: &Loaded, controls: &Path, out: &mut OutputDir) -> CmdResult<SimulateReport> {
    let control = read_controls(controls)?;
    let p = &loaded.problem;
    let sim = HybridSimulation {
        lie: &p.lie,
        stepper: loaded.solver.stepper.as_ref(),
        phases: [&p.phase1, &p.phase2],
        g0: p.g0,
        t0: p.t0,
        tf: p.tf,
        h: loaded.solver.h,
        surface: p.surface.as_ref(),
        jump: p.jump.as_ref(),
        switch_time: if p.surface.is_none() { loaded.switch.map(|s| s.1) } else { None },
    };
    match simulate_hybrid(&sim, &control) {
        Ok(traj) => {
            out.write_with("trajectory.csv", |w| write_trajectory_csv(w, &traj, p.surface.as_ref()))?;
            let report = SimulateReport {
                events: traj.events.iter().map(EventRecord::from).collect(),
                final_state: traj.final_state().map(rows).unwrap_or_default(),
                max_orthogonality_defect: traj.max_orthogonality_defect(),
                error: None,
            };
            out.write_json("events.json", &report)?;
            Ok(report)
        }
        Err(e) => {
            let report = SimulateReport {
                events: Vec::new(),
                final_state: Vec::new(),
                max_orthogonality_defect: f64::NAN,
                error: Some(e.to_string()),
            };
            out.write_json("events.json", &report)?;
            Err(e.into())
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ShootReport {
    pub phase: u8,
    pub window: [f64; 2],
    pub start: Vec<f64>,
    pub target: Vec<f64>,
    pub result: ShootingSummary,
    pub best_start: usize,
    pub branches: Vec<BranchSummary>,
    pub hamiltonian_drift: f64,
    pub max_orthogonality_defect: f64,
}

/// Reads a rotation given as a JSON array of nine row-major entries.
pub fn read_matrix(path: &Path, notes: &mut Vec<String>) -> CmdResult<GroupElement> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_error("target", format!("cannot read {}: {e}", path.display())))?;
    let entries: [f64; 9] =
        serde_json::from_str(&text).map_err(|e| config_error("target", format!("expected nine numbers: {e}")))?;
    Ok(group_field("target", &entries, notes)?)
}

/// Phase 1 runs `g0 → target` on `[t0, t_s]`; phase 2 runs
/// `jump(target) → gf` on `[t_s, tf]`.
pub fn shoot(loaded: &Loaded, phase: u8, target: &GroupElement, out: &mut OutputDir) -> CmdResult<ShootReport> {
    let p = &loaded.problem;
    let (_, t_s) = require_switch(loaded)?;
    let (spec, start, end, window) = match phase {
        1 => (&p.phase1, p.g0, *target, [p.t0, t_s]),
        2 => (
            &p.phase2,
            lgh_core::dynamics::apply_jump(p.jump.as_ref(), target)?,
            p.gf,
            [t_s, p.tf],
        ),
        _ => return Err(config_error("phase", "must be 1 or 2")),
    };
    let outcome = loaded.solver.multi_start_shoot(spec, &start, &end, window[0], window[1])?;
    let best = &outcome.best;
    out.write_with("extremal.csv", |w| best.trajectory.write_csv(w))?;
    let report = ShootReport {
        phase,
        window,
        start: rows(&start),
        target: rows(&end),
        result: best.summary(),
        best_start: outcome.best_start,
        branches: outcome.branches.clone(),
        hamiltonian_drift: best.trajectory.hamiltonian_drift(),
        max_orthogonality_defect: best.trajectory.max_orthogonality_defect(),
    };
    out.write_json("shoot.json", &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct SwitchPoint {
    pub g_s: Vec<f64>,
    pub t_s: f64,
    pub v: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FinalState {
    pub g_s: Vec<f64>,
    pub t_s: f64,
    pub v: f64,
    pub grad_body: [f64; 3],
    pub dv_dts: f64,
    pub stationarity: f64,
    pub ts_pinned: bool,
    pub hamiltonian_pre: f64,
    pub hamiltonian_post: f64,
    pub lambda_pre: [f64; 3],
    pub lambda_post: [f64; 3],
}

/// The value model evaluated at externally supplied switching data.
#[derive(Debug, Clone, Serialize)]
pub struct ReferenceComparison {
    pub g_s: Vec<f64>,
    /// Defect of the supplied matrix before projection onto the group.
    pub projection_defect: f64,
    pub t_s: f64,
    pub v: f64,
    pub grad_body: [f64; 3],
    pub dv_dts: f64,
    pub stationarity: f64,
    pub residuals: HmpResiduals,
    pub t_s_error: f64,
    pub max_entry_error: f64,
    pub t_s_tolerance: f64,
    pub entry_tolerance: f64,
    pub within_tolerance: bool,
    /// `v(final) - v(reference)`.
    pub value_difference: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimizeSummary {
    pub stop_reason: StopReason,
    pub iterations: usize,
    pub stop_test_reached: bool,
    pub beta: f64,
    pub costate_law: CostateLaw,
    pub initial: SwitchPoint,
    #[serde(rename = "final")]
    pub last: FinalState,
    pub residuals: HmpResiduals,
    pub calibration: Option<Calibration>,
    pub lasalle: LaSalleReport,
    pub max_orthogonality_defect: f64,
    pub reference: Option<ReferenceComparison>,
    pub notes: Vec<String>,
}

/// Published switching data to compare against, with entry and time
/// tolerances.
#[derive(Debug, Clone, Copy)]
pub struct Reference {
    pub g_s: nalgebra::Matrix3<f64>,
    pub t_s: f64,
    pub t_s_tolerance: f64,
    pub entry_tolerance: f64,
}

impl Reference {
    pub fn satellite() -> Self {
        Self {
            g_s: satellite_reference_gs(),
            t_s: SATELLITE_REFERENCE_TS,
            t_s_tolerance: 0.1,
            entry_tolerance: 0.05,
        }
    }
}

fn compare_reference(
    loaded: &Loaded,
    run: &EGRun,
    reference: &Reference,
) -> CmdResult<ReferenceComparison> {
    let p = &loaded.problem;
    let mut vf = ValueFunction::new(p, &loaded.solver);
    vf.mu_max = loaded.config.shooting.mu_max;
    if let Some(cal) = &run.calibration {
        vf.set_calibration(cal.clone());
    }
    let raw = GroupElement(reference.g_s);
    let g = GroupElement::polar_project(&reference.g_s);
    let vg = vf.value_and_gradient(&g, reference.t_s, None)?;
    let residuals = vf.hmp_residuals(&vg.evaluation);
    let last = &run.last.evaluation;
    let t_s_error = (last.t_s - reference.t_s).abs();
    let max_entry_error = (last.g_s.0 - reference.g_s).amax();
    Ok(ReferenceComparison {
        g_s: rows(&g),
        projection_defect: raw.orthogonality_defect(),
        t_s: reference.t_s,
        v: vg.v,
        grad_body: vg.grad_body.as_array(),
        dv_dts: vg.dv_dts,
        stationarity: p.lie.inner(&vg.grad_body, &vg.grad_body) + vg.dv_dts * vg.dv_dts,
        residuals,
        t_s_error,
        max_entry_error,
        t_s_tolerance: reference.t_s_tolerance,
        entry_tolerance: reference.entry_tolerance,
        within_tolerance: t_s_error <= reference.t_s_tolerance && max_entry_error <= reference.entry_tolerance,
        value_difference: run.last.v - vg.v,
    })
}

fn write_history(out: &mut OutputDir, history: &[lgh_core::eg::EGIterate]) -> io::Result<()> {
    out.write_with("history.csv", |w| write_history_csv(w, history))?;
    Ok(())
}

pub fn optimize_run(loaded: &Loaded, reference: Option<&Reference>, out: &mut OutputDir) -> CmdResult<OptimizeSummary> {
    let p = &loaded.problem;
    let cfg = &loaded.config;
    let (g_s0, t_s0) = require_switch(loaded)?;
    let run = match optimize(p, &loaded.solver, &g_s0, t_s0, &cfg.eg) {
        Ok(run) => run,
        Err(failure) => {
            write_history(out, &failure.history)?;
            return Err(failure.error.into());
        }
    };
    write_history(out, &run.history)?;

    let last = &run.last;
    let eval = &last.evaluation;
    out.write_with("extremal_phase1.csv", |w| eval.phase1.trajectory.write_csv(w))?;
    out.write_with("extremal_phase2.csv", |w| eval.phase2.trajectory.write_csv(w))?;
    if cfg.emit_plots {
        out.write_text("state_phase1.gp", &state_plot("extremal_phase1.csv", "Hybrid state trajectory, phase 1"))?;
        out.write_text("state_phase2.gp", &state_plot("extremal_phase2.csv", "Hybrid state trajectory, phase 2"))?;
        out.write_text("adjoint_phase1.gp", &adjoint_plot("extremal_phase1.csv", "Hybrid adjoint trajectory, phase 1"))?;
        out.write_text("adjoint_phase2.gp", &adjoint_plot("extremal_phase2.csv", "Hybrid adjoint trajectory, phase 2"))?;
        out.write_text("convergence.gp", &convergence_plot("history.csv"))?;
    }

    let mut vf = ValueFunction::new(p, &loaded.solver);
    vf.mu_max = cfg.shooting.mu_max;
    let residuals = vf.hmp_residuals(eval);
    let lasalle = lasalle_audit(&run.history, cfg.eg.beta);
    let max_orth = run
        .history
        .iter()
        .map(|it| it.g_s.orthogonality_defect())
        .chain([
            eval.phase1.trajectory.max_orthogonality_defect(),
            eval.phase2.trajectory.max_orthogonality_defect(),
        ])
        .fold(0.0, f64::max);
    let reference = reference.map(|r| compare_reference(loaded, &run, r)).transpose()?;

    let first = &run.history[0];
    let fin = run.history.last().expect("nonempty history");
    let mut notes = loaded.notes.clone();
    if !lasalle.stop_test_reached {
        notes.push(format!(
            "stop test not reached: final I(pg,pg) + dv_dts^2 = {:.3e} >= beta = {:.1e}",
            fin.stationarity, cfg.eg.beta
        ));
    }
    if let Some(r) = &reference {
        if !r.within_tolerance {
            notes.push(format!(
                "reference switching data not reproduced: |t_s - {}| = {:.4}, max entry error {:.4}; \
                 v(final) = {:.10}, v(reference) = {:.10}, reference stationarity {:.3e}, \
                 reference hamiltonian gap {:.3e}, final hamiltonian gap {:.3e}",
                r.t_s, r.t_s_error, r.max_entry_error, last.v, r.v, r.stationarity,
                r.residuals.hamiltonian_gap, residuals.hamiltonian_gap
            ));
        }
    }
    let summary = OptimizeSummary {
        stop_reason: run.stop,
        iterations: fin.k,
        stop_test_reached: lasalle.stop_test_reached,
        beta: cfg.eg.beta,
        costate_law: loaded.solver.law,
        initial: SwitchPoint {
            g_s: rows(&first.g_s),
            t_s: first.t_s,
            v: first.v,
        },
        last: FinalState {
            g_s: rows(&fin.g_s),
            t_s: fin.t_s,
            v: fin.v,
            grad_body: last.grad_body.as_array(),
            dv_dts: last.dv_dts,
            stationarity: fin.stationarity,
            ts_pinned: fin.ts_pinned,
            hamiltonian_pre: last.h_pre,
            hamiltonian_post: last.h_post,
            lambda_pre: last.lambda_pre.as_array(),
            lambda_post: last.lambda_post.as_array(),
        },
        residuals,
        calibration: run.calibration.clone(),
        lasalle,
        max_orthogonality_defect: max_orth,
        reference,
        notes,
    };
    out.write_json("summary.json", &summary)?;
    Ok(summary)
}

/// Runs the invariant battery. `flip_costate_sign` swaps the costate law,
/// which the battery must detect.
pub fn check_run(loaded: &Loaded, flip_costate_sign: bool, size: BatterySize, out: &mut OutputDir) -> CmdResult<CheckReport> {
    let mut solver = loaded.solver.clone();
    if flip_costate_sign {
        solver.law = match solver.law {
            CostateLaw::Coadjoint => CostateLaw::NegCoadjoint,
            CostateLaw::NegCoadjoint => CostateLaw::Coadjoint,
        };
    }
    let center = loaded.switch.map_or(loaded.problem.g0, |s| s.0);
    let report = check::run_battery(&loaded.problem, &solver, &center, size);
    out.write_json("check.json", &report)?;
    Ok(report)
}
