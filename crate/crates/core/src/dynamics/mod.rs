//! Hybrid system model and forward simulation of left-invariant controlled
//! flows `ġ = g·(Σ_c u_c e_c + drift)`.

mod events;
mod variations;

use std::fmt::Debug;
use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::lie::{AlgebraVector, GroupElement, LieGroupSpec};
use crate::quadrature::simpson;
use crate::strategy::{JumpMap, PhaseStepper, QuadraticCost, RunningCost, TerminalCost};

pub use events::{
    apply_jump, detect_switch, surface_normal_body, transversality, GradMode, SwitchEvent,
    SwitchingSurface,
};
pub use variations::{needle_endpoint_derivative, propagate_pairing, PairingTransport};

/// Local error limit for the step-doubling check.
pub const STEP_ERROR_LIMIT: f64 = 1e-3;
/// Steps between step-doubling checks.
const CHECK_STRIDE: usize = 256;

/// One discrete state: which algebra directions carry controls, the drift,
/// and the running cost.
#[derive(Debug, Clone)]
pub struct PhaseSpec {
    pub id: String,
    /// Zero-based basis indices.
    pub active_channels: Vec<usize>,
    pub drift: AlgebraVector,
    pub running_cost: Arc<dyn RunningCost>,
    pub control_bounds: Option<Vec<(f64, f64)>>,
}

impl PhaseSpec {
    pub fn new(
        id: impl Into<String>,
        active_channels: Vec<usize>,
        running_cost: Arc<dyn RunningCost>,
    ) -> Result<Self> {
        if active_channels.is_empty() {
            return Err(Error::config("active_channels", "must be nonempty"));
        }
        let mut seen = [false; 3];
        for &c in &active_channels {
            if c >= 3 || seen[c] {
                return Err(Error::config(
                    "active_channels",
                    "channels must be distinct and within 1..=3",
                ));
            }
            seen[c] = true;
        }
        Ok(Self {
            id: id.into(),
            active_channels,
            drift: AlgebraVector::zeros(),
            running_cost,
            control_bounds: None,
        })
    }

    /// Phase with `½‖u‖²` running cost and no drift.
    pub fn quadratic(id: impl Into<String>, active_channels: Vec<usize>) -> Result<Self> {
        Self::new(id, active_channels, Arc::new(QuadraticCost::unit()))
    }

    pub fn with_drift(mut self, drift: AlgebraVector) -> Self {
        self.drift = drift;
        self
    }

    pub fn with_bounds(mut self, bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.len() != self.active_channels.len() {
            return Err(Error::DimensionMismatch {
                expected: self.active_channels.len(),
                got: bounds.len(),
            });
        }
        if bounds.iter().any(|(lo, hi)| !(lo <= hi)) {
            return Err(Error::config("control_bounds", "each interval needs lo <= hi"));
        }
        self.control_bounds = Some(bounds);
        Ok(self)
    }

    pub fn n_controls(&self) -> usize {
        self.active_channels.len()
    }

    pub fn bounds(&self) -> Option<&[(f64, f64)]> {
        self.control_bounds.as_deref()
    }

    /// `Σ_c u_c e_c` without drift.
    pub fn embed(&self, u: &[f64]) -> AlgebraVector {
        let mut v = AlgebraVector::zeros();
        for (&c, &x) in self.active_channels.iter().zip(u) {
            v[c] = x;
        }
        v
    }

    /// Body velocity `f(e, u)`.
    pub fn velocity(&self, u: &[f64]) -> AlgebraVector {
        self.embed(u) + self.drift
    }

    /// Active components of a full coordinate vector.
    pub fn restrict(&self, full: &[f64; 3]) -> Vec<f64> {
        self.active_channels.iter().map(|&c| full[c]).collect()
    }

    /// Running cost of a full coordinate control (inactive entries ignored).
    pub fn running_cost_full(&self, full: &[f64; 3]) -> f64 {
        self.running_cost.cost(&self.restrict(full))
    }
}

/// Time-varying control in full algebra coordinates; phases ignore the
/// entries of inactive channels.
pub trait ControlSignal: Send + Sync {
    fn value(&self, t: f64) -> [f64; 3];

    /// Left limit at `t`. Differs from `value` only at jumps.
    fn value_left(&self, t: f64) -> [f64; 3] {
        self.value(t)
    }

    /// Discontinuities strictly inside `(ta, tb)`.
    fn breakpoints(&self, _ta: f64, _tb: f64) -> Vec<f64> {
        Vec::new()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConstantControl(pub [f64; 3]);

impl ControlSignal for ConstantControl {
    fn value(&self, _: f64) -> [f64; 3] {
        self.0
    }
}

/// Row `k` holds on `[times[k], times[k+1])`; the last row holds onwards and
/// the first row also before `times[0]`.
#[derive(Debug, Clone)]
pub struct PiecewiseConstant {
    times: Vec<f64>,
    values: Vec<[f64; 3]>,
}

impl PiecewiseConstant {
    pub fn new(times: Vec<f64>, values: Vec<[f64; 3]>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::config("controls", "need matching, nonempty times and values"));
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::config("controls", "times must be strictly increasing"));
        }
        Ok(Self { times, values })
    }

    fn index(&self, t: f64) -> usize {
        self.times.partition_point(|&x| x <= t).saturating_sub(1)
    }
}

impl ControlSignal for PiecewiseConstant {
    fn value(&self, t: f64) -> [f64; 3] {
        self.values[self.index(t)]
    }

    fn value_left(&self, t: f64) -> [f64; 3] {
        let k = self.times.partition_point(|&x| x < t).saturating_sub(1);
        self.values[k]
    }

    fn breakpoints(&self, ta: f64, tb: f64) -> Vec<f64> {
        self.times
            .iter()
            .copied()
            .filter(|&t| t > ta && t < tb)
            .collect()
    }
}

pub struct FnControl<F>(pub F);

impl<F> ControlSignal for FnControl<F>
where
    F: Fn(f64) -> [f64; 3] + Send + Sync,
{
    fn value(&self, t: f64) -> [f64; 3] {
        (self.0)(t)
    }
}

/// Samples of one phase.
#[derive(Debug, Clone, Default)]
pub struct PhaseTrajectory {
    pub t: Vec<f64>,
    pub g: Vec<GroupElement>,
    /// Applied control in full algebra coordinates.
    pub u: Vec<[f64; 3]>,
}

impl PhaseTrajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn last_state(&self) -> Option<&GroupElement> {
        self.g.last()
    }

    pub fn max_orthogonality_defect(&self) -> f64 {
        self.g
            .iter()
            .map(GroupElement::orthogonality_defect)
            .fold(0.0, f64::max)
    }

    /// Keeps samples with `t < t_cut` and appends `(t_cut, g_cut)`.
    pub fn truncate_at(&mut self, t_cut: f64, g_cut: GroupElement, u_cut: [f64; 3]) {
        let keep = self.t.partition_point(|&t| t < t_cut);
        self.t.truncate(keep);
        self.g.truncate(keep);
        self.u.truncate(keep);
        self.t.push(t_cut);
        self.g.push(g_cut);
        self.u.push(u_cut);
    }
}

/// Exact flow of a constant body velocity: `g·exp(h X)`.
pub fn step_exact(lie: &LieGroupSpec, g: &GroupElement, x: &AlgebraVector, h: f64) -> GroupElement {
    *g * lie.exp_alg(&(*x * h))
}

fn stage_velocities(
    phase: &PhaseSpec,
    control: &dyn ControlSignal,
    t: f64,
    h: f64,
    end: f64,
) -> [AlgebraVector; 4] {
    let v = |u: [f64; 3]| phase.velocity(&phase.restrict(&u));
    let mid = v(control.value(t + 0.5 * h));
    [v(control.value(t)), mid, mid, v(control.value_left((t + h).min(end)))]
}

/// Integrates one phase on `[ta, tb]` with nominal step `h`, splitting the
/// window at control discontinuities so piecewise-constant inputs are
/// integrated exactly.
pub fn integrate_phase(
    lie: &LieGroupSpec,
    stepper: &dyn PhaseStepper,
    phase: &PhaseSpec,
    g0: &GroupElement,
    control: &dyn ControlSignal,
    ta: f64,
    tb: f64,
    h: f64,
) -> Result<PhaseTrajectory> {
    if !(tb > ta) || !(h > 0.0) || !h.is_finite() {
        return Err(Error::config("window", format!("need tb > ta and h > 0 (ta {ta}, tb {tb}, h {h})")));
    }
    let mut edges = vec![ta];
    edges.extend(control.breakpoints(ta, tb));
    edges.push(tb);

    let mut traj = PhaseTrajectory::default();
    traj.t.push(ta);
    traj.g.push(*g0);
    traj.u.push(control.value(ta));
    let mut g = *g0;
    let mut steps_taken = 0usize;
    for w in edges.windows(2) {
        let (a, b) = (w[0], w[1]);
        let n = (((b - a) / h) - 1e-9).ceil().max(1.0) as usize;
        let step = (b - a) / n as f64;
        for k in 0..n {
            let t = a + k as f64 * step;
            let stages = stage_velocities(phase, control, t, step, b);
            let next = stepper.step(lie, &g, &stages, step);
            if steps_taken % CHECK_STRIDE == 0 {
                let half = 0.5 * step;
                let s1 = stage_velocities(phase, control, t, half, b);
                let s2 = stage_velocities(phase, control, t + half, half, b);
                let fine = stepper.step(lie, &stepper.step(lie, &g, &s1, half), &s2, half);
                let estimate = (fine.0 - next.0).amax();
                if estimate > STEP_ERROR_LIMIT {
                    return Err(Error::StepTooLarge {
                        t,
                        estimate,
                        limit: STEP_ERROR_LIMIT,
                    });
                }
            }
            steps_taken += 1;
            g = next;
            let t_next = if k + 1 == n { b } else { a + (k + 1) as f64 * step };
            traj.t.push(t_next);
            traj.g.push(g);
            traj.u.push(if k + 1 == n {
                control.value_left(t_next)
            } else {
                control.value(t_next)
            });
        }
    }
    Ok(traj)
}

/// A simulated execution: one or two phases and the switch between them.
#[derive(Debug, Clone, Default)]
pub struct HybridTrajectory {
    pub phases: Vec<PhaseTrajectory>,
    pub events: Vec<SwitchEvent>,
}

impl HybridTrajectory {
    pub fn final_state(&self) -> Option<&GroupElement> {
        self.phases.last().and_then(PhaseTrajectory::last_state)
    }

    pub fn max_orthogonality_defect(&self) -> f64 {
        self.phases
            .iter()
            .map(PhaseTrajectory::max_orthogonality_defect)
            .fold(0.0, f64::max)
    }
}

/// Everything needed to run [`simulate_hybrid`].
pub struct HybridSimulation<'a> {
    pub lie: &'a LieGroupSpec,
    pub stepper: &'a dyn PhaseStepper,
    pub phases: [&'a PhaseSpec; 2],
    pub g0: GroupElement,
    pub t0: f64,
    pub tf: f64,
    pub h: f64,
    pub surface: Option<&'a SwitchingSurface>,
    pub jump: &'a dyn JumpMap,
    /// Controlled switch time used when there is no surface.
    pub switch_time: Option<f64>,
}

/// Integrates through at most one switch: autonomous on the surface when one
/// is given, otherwise at `switch_time` if set.
pub fn simulate_hybrid(sim: &HybridSimulation<'_>, control: &dyn ControlSignal) -> Result<HybridTrajectory> {
    let HybridSimulation {
        lie,
        stepper,
        phases,
        t0,
        tf,
        h,
        ..
    } = *sim;
    let mut out = HybridTrajectory::default();
    let (mut first, event) = match (sim.surface, sim.switch_time) {
        (Some(surface), _) => {
            let traj = integrate_phase(lie, stepper, phases[0], &sim.g0, control, t0, tf, h)?;
            let event = detect_switch(lie, &traj, surface)?;
            (traj, event)
        }
        (None, Some(ts)) if ts > t0 && ts < tf => {
            let traj = integrate_phase(lie, stepper, phases[0], &sim.g0, control, t0, ts, h)?;
            let g_pre = *traj.last_state().expect("nonempty");
            let event = SwitchEvent {
                t: ts,
                g_pre,
                g_post: g_pre,
                transversality: f64::NAN,
                level: f64::NAN,
            };
            (traj, Some(event))
        }
        (None, Some(ts)) => {
            return Err(Error::config("switch_time", format!("{ts} is outside (t0, tf)")));
        }
        (None, None) => (
            integrate_phase(lie, stepper, phases[0], &sim.g0, control, t0, tf, h)?,
            None,
        ),
    };
    match event {
        Some(mut ev) => {
            first.truncate_at(ev.t, ev.g_pre, control.value_left(ev.t));
            ev.g_post = apply_jump(sim.jump, &ev.g_pre)?;
            out.phases.push(first);
            if ev.t < tf {
                let second = integrate_phase(lie, stepper, phases[1], &ev.g_post, control, ev.t, tf, h)?;
                out.phases.push(second);
            }
            out.events.push(ev);
        }
        None => out.phases.push(first),
    }
    Ok(out)
}

/// `Σ_i ∫ l_i(u) dt + h(g(t_f))` with Simpson quadrature per phase.
pub fn hybrid_cost(
    lie: &LieGroupSpec,
    traj: &HybridTrajectory,
    phases: &[&PhaseSpec],
    terminal: &dyn TerminalCost,
) -> f64 {
    let running: f64 = traj
        .phases
        .iter()
        .zip(phases)
        .map(|(p, spec)| {
            let l: Vec<f64> = p.u.iter().map(|u| spec.running_cost_full(u)).collect();
            simpson(&p.t, &l)
        })
        .sum();
    let term = traj.final_state().map_or(0.0, |g| terminal.value(lie, g));
    running + term
}

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else {
        format!("{x:.16e}")
    }
}

/// CSV with header `t,g11..g33,u1,u2,u3,level`.
pub fn write_trajectory_csv<W: Write>(
    mut w: W,
    traj: &HybridTrajectory,
    level: Option<&SwitchingSurface>,
) -> std::io::Result<()> {
    writeln!(w, "t,g11,g12,g13,g21,g22,g23,g31,g32,g33,u1,u2,u3,level")?;
    for p in &traj.phases {
        for k in 0..p.len() {
            let mut row = vec![fmt_f64(p.t[k])];
            row.extend(p.g[k].to_row_vec().into_iter().map(fmt_f64));
            row.extend(p.u[k].iter().copied().map(fmt_f64));
            row.push(fmt_f64(level.map_or(f64::NAN, |s| s.level.level(&p.g[k]))));
            writeln!(w, "{}", row.join(","))?;
        }
    }
    Ok(())
}
