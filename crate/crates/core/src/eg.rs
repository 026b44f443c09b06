//! Exponential-gradient descent of the hybrid value function over the
//! switching state `g_s ∈ G` and switching time `t_s`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dynamics::{fmt_f64, surface_normal_body};
use crate::error::{Error, Result};
use crate::extremal::PhaseSolver;
use crate::hmp::{Calibration, Evaluation, HmpResiduals, HybridProblem, ValueFunction, ValueGradient};
use crate::lie::{AlgebraVector, GroupElement, LieGroupSpec};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EGConfig {
    /// Stop when `I(pg, pg) + dv_dts² < beta`.
    pub beta: f64,
    pub theta_init: f64,
    pub theta_shrink: f64,
    pub theta_grow: f64,
    pub max_iters: usize,
    /// Step length multiplier for the switching time.
    pub ts_step_scale: f64,
    /// Sufficient-decrease constant.
    pub armijo: f64,
    pub theta_min: f64,
}

impl Default for EGConfig {
    fn default() -> Self {
        Self {
            beta: 1e-6,
            theta_init: 0.5,
            theta_shrink: 0.5,
            theta_grow: 2.0,
            max_iters: 200,
            ts_step_scale: 1.0,
            armijo: 1e-4,
            theta_min: 1e-12,
        }
    }
}

impl EGConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("eg.beta", self.beta),
            ("eg.theta_init", self.theta_init),
            ("eg.ts_step_scale", self.ts_step_scale),
            ("eg.armijo", self.armijo),
            ("eg.theta_min", self.theta_min),
        ];
        for (field, x) in positive {
            if !(x > 0.0) || !x.is_finite() {
                return Err(Error::config(field, "must be positive and finite"));
            }
        }
        if !(self.theta_shrink > 0.0 && self.theta_shrink < 1.0) {
            return Err(Error::config("eg.theta_shrink", "must lie in (0, 1)"));
        }
        if !(self.theta_grow > 1.0) || !self.theta_grow.is_finite() {
            return Err(Error::config("eg.theta_grow", "must exceed 1"));
        }
        if self.armijo >= 1.0 {
            return Err(Error::config("eg.armijo", "must be below 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct EGIterate {
    pub k: usize,
    pub g_s: GroupElement,
    pub t_s: f64,
    pub v: f64,
    pub pg: AlgebraVector,
    pub dv_dts: f64,
    /// Step that produced this iterate (zero for the start).
    pub theta_used: f64,
    pub monotone: bool,
    /// `I(pg, pg) + dv_dts²`.
    pub stationarity: f64,
    /// `t_s` sits on its clamp with `dv_dts` pointing outward.
    pub ts_pinned: bool,
}

/// `(g·exp(−θ pg), −θ·scale·dv_dts)`.
pub fn eg_step(
    lie: &LieGroupSpec,
    g: &GroupElement,
    pg: &AlgebraVector,
    dv_dts: f64,
    theta: f64,
    ts_step_scale: f64,
) -> (GroupElement, f64) {
    (*g * lie.exp_alg(&(*pg * -theta)), -theta * ts_step_scale * dv_dts)
}

/// Descent direction on the switching state; tangent to the switching
/// surface when the problem has one.
pub fn descent_direction(problem: &HybridProblem, g_s: &GroupElement, grad: &AlgebraVector) -> AlgebraVector {
    let Some(surface) = &problem.surface else {
        return *grad;
    };
    match surface_normal_body(&problem.lie, surface, g_s) {
        Ok(nu) => {
            let lie = &problem.lie;
            *grad - nu * (lie.inner(grad, &nu) / lie.inner(&nu, &nu))
        }
        Err(_) => *grad,
    }
}

fn stationarity(lie: &LieGroupSpec, pg: &AlgebraVector, dv_dts: f64) -> f64 {
    lie.inner(pg, pg) + dv_dts * dv_dts
}

/// Relative change in `v` below which a trial step counts as no decrease.
pub const VALUE_NOISE: f64 = 1e3 * f64::EPSILON;

/// Backtracking search along the exponential curve. Returns the accepted
/// step and the evaluation at the new point.
pub fn line_search(
    vf: &ValueFunction<'_>,
    current: &ValueGradient,
    pg: &AlgebraVector,
    dts: f64,
    theta_prev: f64,
    config: &EGConfig,
    iteration: usize,
) -> Result<(f64, Evaluation)> {
    let p = vf.problem;
    let lie = &p.lie;
    let g = &current.evaluation.g_s;
    let t = current.evaluation.t_s;
    let decrease = stationarity(lie, pg, dts);
    if !(decrease > 0.0) {
        return Err(Error::config("line_search", "zero descent direction"));
    }
    let h = vf.solver.h;
    let (t_lo, t_hi) = (p.t0 + h, p.tf - h);
    let mut theta = (config.theta_grow * theta_prev).min(config.theta_init * 32.0);
    let warm = Some(current.evaluation.warm());
    while theta >= config.theta_min {
        let (g_try, dt) = eg_step(lie, g, pg, dts, theta, config.ts_step_scale);
        let t_try = (t + dt).clamp(t_lo, t_hi);
        let candidate = p.retract_to_surface(&g_try).and_then(|g| vf.evaluate(&g, t_try, warm));
        if let Ok(eval) = candidate {
            let floor = VALUE_NOISE * (1.0 + current.v.abs());
            if eval.v <= current.v - config.armijo * theta * decrease && current.v - eval.v > floor {
                return Ok((theta, eval));
            }
        }
        theta *= config.theta_shrink;
    }
    Err(Error::LineSearchFailed { iteration })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Stationary,
    /// Stationary in `g_s` with `t_s` held at its clamp.
    BoundaryStationary,
    MaxIters,
}

#[derive(Debug, Clone)]
pub struct EGRun {
    pub history: Vec<EGIterate>,
    pub stop: StopReason,
    pub last: ValueGradient,
    pub calibration: Option<Calibration>,
    pub residuals: HmpResiduals,
}

/// Solver failure with the iterations completed before it.
#[derive(Debug, Clone)]
pub struct EGFailure {
    pub error: Error,
    pub history: Vec<EGIterate>,
}

fn ts_pinned(problem: &HybridProblem, h: f64, t_s: f64, dv_dts: f64) -> bool {
    let (lo, hi) = (problem.t0 + h, problem.tf - h);
    (t_s >= hi - 1e-12 && dv_dts < 0.0) || (t_s <= lo + 1e-12 && dv_dts > 0.0)
}

fn record(
    problem: &HybridProblem,
    vg: &ValueGradient,
    pg: AlgebraVector,
    k: usize,
    theta: f64,
    prev: Option<f64>,
    pinned: bool,
) -> EGIterate {
    EGIterate {
        k,
        g_s: vg.evaluation.g_s,
        t_s: vg.evaluation.t_s,
        v: vg.v,
        pg,
        dv_dts: vg.dv_dts,
        theta_used: theta,
        monotone: prev.map_or(true, |p| vg.v <= p),
        stationarity: stationarity(&problem.lie, &pg, vg.dv_dts),
        ts_pinned: pinned,
    }
}

/// Runs the descent from `(g_s0, t_s0)` until the stationarity test or the
/// iteration limit.
pub fn optimize(
    problem: &HybridProblem,
    solver: &PhaseSolver,
    g_s0: &GroupElement,
    t_s0: f64,
    config: &EGConfig,
) -> std::result::Result<EGRun, Box<EGFailure>> {
    let mut history = Vec::new();
    let fail = |error: Error, history: &Vec<EGIterate>| {
        Box::new(EGFailure {
            error,
            history: history.clone(),
        })
    };
    if let Err(e) = config.validate() {
        return Err(fail(e, &history));
    }
    if !(problem.t0 < t_s0 && t_s0 < problem.tf) {
        return Err(fail(Error::config("t_s", "initial switching time outside (t0, tf)"), &history));
    }
    let mut vf = ValueFunction::new(problem, solver);
    let g_start = problem.retract_to_surface(g_s0).map_err(|e| fail(e, &history))?;
    let mut vg = vf
        .value_and_gradient(&g_start, t_s0, None)
        .map_err(|e| fail(e, &history))?;
    let mut theta_prev = config.theta_init / config.theta_grow;
    let mut theta_used = 0.0;
    let mut prev_v = None;
    loop {
        let k = history.len();
        let pg = descent_direction(problem, &vg.evaluation.g_s, &vg.grad_body);
        let pinned = ts_pinned(problem, solver.h, vg.evaluation.t_s, vg.dv_dts);
        let it = record(problem, &vg, pg, k, theta_used, prev_v, pinned);
        let stat = it.stationarity;
        history.push(it);
        let dts = if pinned { 0.0 } else { vg.dv_dts };
        let stop = if stat < config.beta {
            Some(StopReason::Stationary)
        } else if pinned && stationarity(&problem.lie, &pg, 0.0) < config.beta {
            Some(StopReason::BoundaryStationary)
        } else if k >= config.max_iters {
            Some(StopReason::MaxIters)
        } else {
            None
        };
        if let Some(stop) = stop {
            let residuals = vf.hmp_residuals(&vg.evaluation);
            return Ok(EGRun {
                history,
                stop,
                last: vg,
                calibration: vf.calibration().cloned(),
                residuals,
            });
        }
        let (theta, eval) = line_search(&vf, &vg, &pg, dts, theta_prev, config, k).map_err(|e| fail(e, &history))?;
        prev_v = Some(vg.v);
        vg = vf.gradient(eval).map_err(|e| fail(e, &history))?;
        theta_prev = theta;
        theta_used = theta;
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LaSalleReport {
    pub monotone: bool,
    pub within_sublevel: bool,
    pub stop_test_reached: bool,
    pub final_stationarity: f64,
    pub violations: Vec<String>,
}

impl LaSalleReport {
    pub fn clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks monotone decrease, the initial sublevel bound and the final
/// stationarity test.
pub fn lasalle_audit(history: &[EGIterate], beta: f64) -> LaSalleReport {
    let mut violations = Vec::new();
    let v0 = history.first().map_or(f64::NAN, |it| it.v);
    let mut monotone = true;
    let mut within = true;
    for w in history.windows(2) {
        if w[1].v > w[0].v {
            monotone = false;
            violations.push(format!("v increased at k = {}: {} -> {}", w[1].k, w[0].v, w[1].v));
        }
    }
    for it in history {
        if it.v > v0 + 1e-12 {
            within = false;
            violations.push(format!("k = {} leaves the initial sublevel set (v = {})", it.k, it.v));
        }
    }
    let final_stationarity = history.last().map_or(f64::NAN, |it| it.stationarity);
    LaSalleReport {
        monotone,
        within_sublevel: within,
        stop_test_reached: final_stationarity < beta,
        final_stationarity,
        violations,
    }
}

/// CSV with header `k,v,pg1,pg2,pg3,dv_dts,theta,ts`.
pub fn write_history_csv<W: Write>(mut w: W, history: &[EGIterate]) -> std::io::Result<()> {
    writeln!(w, "k,v,pg1,pg2,pg3,dv_dts,theta,ts")?;
    for it in history {
        let mut row = vec![it.k.to_string(), fmt_f64(it.v)];
        row.extend(it.pg.as_array().into_iter().map(fmt_f64));
        row.extend([it.dv_dts, it.theta_used, it.t_s].map(fmt_f64));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}
