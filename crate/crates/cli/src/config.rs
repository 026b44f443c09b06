//! Run configuration: one JSON document describing the problem, integrator,
//! shooting and optimizer settings, and where outputs go.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use lgh_core::dynamics::{GradMode, PhaseSpec, SwitchingSurface};
use lgh_core::eg::EGConfig;
use lgh_core::extremal::{CostateLaw, PhaseSolver, ShootingControls};
use lgh_core::hmp::HybridProblem;
use lgh_core::lie::{AlgebraVector, GroupElement, LieGroupSpec, TOL_ORTH};
use lgh_core::strategy::Registries;
use lgh_core::{Error, Result};

/// Matrices farther than this from SO(3) are rejected on load.
pub const LOAD_TOL: f64 = 1e-6;

pub const OUTPUT_DIR_ENV: &str = "LGH_OUTPUT_DIR";

const SATELLITE_JSON: &str = include_str!("../configs/satellite.json");

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub shooting: ShootingConfig,
    #[serde(default)]
    pub eg: EGConfig,
    #[serde(default)]
    pub costate_law: CostateLaw,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub emit_plots: bool,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub t0: f64,
    pub tf: f64,
    /// Row-major.
    pub g0: [f64; 9],
    pub gf: [f64; 9],
    pub phase1: PhaseConfig,
    pub phase2: PhaseConfig,
    #[serde(default)]
    pub surface: Option<SurfaceConfig>,
    /// Strategy object with a `kind` field; identity when absent.
    #[serde(default)]
    pub jump: Option<Value>,
    #[serde(default)]
    pub terminal_cost: Option<Value>,
    /// Starting switching data for `optimize`.
    #[serde(default)]
    pub switch: Option<SwitchConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseConfig {
    pub id: String,
    /// 1-based basis indices.
    pub active_channels: Vec<usize>,
    #[serde(default)]
    pub drift: Option<[f64; 3]>,
    #[serde(default)]
    pub running_cost: Option<Value>,
    #[serde(default)]
    pub control_bounds: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceConfig {
    pub level: Value,
    #[serde(default)]
    pub tol_zero: Option<f64>,
    #[serde(default)]
    pub eps_trans: Option<f64>,
    #[serde(default)]
    pub directional_difference: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchConfig {
    pub g_s: [f64; 9],
    pub t_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub h: f64,
    /// Registered stepper name.
    pub stepper: String,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            h: 1e-3,
            stepper: "cf4".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShootingConfig {
    pub tol: f64,
    pub n_starts: usize,
    pub seed: u64,
    pub mu_max: f64,
    pub max_iters: usize,
    pub fd_step: f64,
    pub guess_range: f64,
}

impl Default for ShootingConfig {
    fn default() -> Self {
        let c = ShootingControls::default();
        Self {
            tol: c.tol,
            n_starts: c.n_starts,
            seed: c.seed,
            mu_max: 1e3,
            max_iters: c.max_iters,
            fd_step: c.fd_step,
            guess_range: c.guess_range,
        }
    }
}

impl ShootingConfig {
    pub fn controls(&self) -> ShootingControls {
        ShootingControls {
            tol: self.tol,
            max_iters: self.max_iters,
            fd_step: self.fd_step,
            n_starts: self.n_starts,
            seed: self.seed,
            guess_range: self.guess_range,
        }
    }
}

/// Validated configuration with its assembled problem.
pub struct Loaded {
    pub config: RunConfig,
    pub problem: HybridProblem,
    pub solver: PhaseSolver,
    /// Initial switching data, when the config provides it.
    pub switch: Option<(GroupElement, f64)>,
    /// Load-time notes such as polar projections.
    pub notes: Vec<String>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let field = schema_field(&e.path().to_string(), &e.inner().to_string());
            Error::config(field, e.inner().to_string())
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// The embedded attitude-manoeuvre configuration.
    pub fn satellite() -> Self {
        Self::from_json(SATELLITE_JSON).expect("embedded config parses")
    }

    /// `output_dir`, overridden by the environment when set.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => self.output_dir.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.problem;
        if !p.t0.is_finite() || !p.tf.is_finite() || !(p.t0 < p.tf) {
            return Err(Error::config("problem.t0", format!("need t0 < tf (got {}, {})", p.t0, p.tf)));
        }
        positive("integrator.h", self.integrator.h)?;
        if self.integrator.h >= p.tf - p.t0 {
            return Err(Error::config("integrator.h", "must be shorter than the horizon"));
        }
        let s = &self.shooting;
        positive("shooting.tol", s.tol)?;
        positive("shooting.mu_max", s.mu_max)?;
        positive("shooting.fd_step", s.fd_step)?;
        positive("shooting.guess_range", s.guess_range)?;
        if s.n_starts == 0 {
            return Err(Error::config("shooting.n_starts", "must be at least 1"));
        }
        if s.max_iters == 0 {
            return Err(Error::config("shooting.max_iters", "must be at least 1"));
        }
        self.eg.validate()?;
        if let Some(sw) = &p.switch {
            if !(p.t0 < sw.t_s && sw.t_s < p.tf) {
                return Err(Error::config("problem.switch.t_s", "must lie strictly inside (t0, tf)"));
            }
        }
        Ok(())
    }

    /// Validates and assembles the problem and solver.
    pub fn load(self) -> Result<Loaded> {
        self.validate()?;
        let reg = Registries::builtin();
        let lie = Arc::new(LieGroupSpec::so3());
        let mut notes = Vec::new();
        let p = &self.problem;

        let g0 = group_field("problem.g0", &p.g0, &mut notes)?;
        let gf = group_field("problem.gf", &p.gf, &mut notes)?;
        let phase1 = phase_field("problem.phase1", &p.phase1, &reg)?;
        let phase2 = phase_field("problem.phase2", &p.phase2, &reg)?;
        let mut problem = HybridProblem::new(lie.clone(), phase1, phase2, (p.t0, p.tf), g0, gf)?;
        if let Some(sc) = &p.surface {
            let level = reg.levels.build_tagged(&sc.level).map_err(|e| nest("problem.surface.level", e))?;
            let mut surface = SwitchingSurface::new(level);
            if let Some(t) = sc.tol_zero {
                positive("problem.surface.tol_zero", t)?;
                surface.tol_zero = t;
            }
            if let Some(t) = sc.eps_trans {
                positive("problem.surface.eps_trans", t)?;
                surface.eps_trans = t;
            }
            if sc.directional_difference {
                surface = surface.with_grad_mode(GradMode::DirectionalDifference);
            }
            problem = problem.with_surface(surface);
        }
        if let Some(j) = &p.jump {
            problem = problem.with_jump(reg.jumps.build_tagged(j).map_err(|e| nest("problem.jump", e))?);
        }
        if let Some(c) = &p.terminal_cost {
            problem = problem
                .with_terminal_cost(reg.terminal_costs.build_tagged(c).map_err(|e| nest("problem.terminal_cost", e))?);
        }
        let switch = match &p.switch {
            Some(sw) => Some((group_field("problem.switch.g_s", &sw.g_s, &mut notes)?, sw.t_s)),
            None => None,
        };

        let stepper = reg
            .steppers
            .build(&self.integrator.stepper, &Value::Null)
            .map_err(|e| nest("integrator.stepper", e))?;
        let solver = PhaseSolver::new(lie, self.integrator.h)
            .with_law(self.costate_law)
            .with_controls(self.shooting.controls())
            .with_stepper(stepper);
        Ok(Loaded {
            config: self,
            problem,
            solver,
            switch,
            notes,
        })
    }
}

fn positive(field: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be positive and finite (got {x})")))
    }
}

fn nest(prefix: &str, e: Error) -> Error {
    match e {
        Error::InvalidConfig { field, reason } => Error::config(format!("{prefix}.{field}"), reason),
        other => Error::config(prefix, other.to_string()),
    }
}

/// Accepts a rotation within [`LOAD_TOL`] of SO(3), projecting it when it is
/// not already on the group to working precision.
pub fn group_field(field: &str, rows: &[f64; 9], notes: &mut Vec<String>) -> Result<GroupElement> {
    let m = Matrix3::from_row_slice(rows);
    let raw = GroupElement(m);
    let (orth, det) = (raw.orthogonality_defect(), raw.det());
    if !m.iter().all(|x| x.is_finite()) || orth > LOAD_TOL || (det - 1.0).abs() > LOAD_TOL {
        return Err(Error::config(
            field,
            format!("not a rotation: orthogonality defect {orth:.3e}, det {det}"),
        ));
    }
    if orth <= TOL_ORTH && (det - 1.0).abs() <= TOL_ORTH {
        return Ok(raw);
    }
    let projected = GroupElement::polar_project(&m);
    notes.push(format!(
        "{field}: polar-projected onto SO(3) (orthogonality defect {orth:.3e} -> {:.3e})",
        projected.orthogonality_defect()
    ));
    Ok(projected)
}

fn phase_field(prefix: &str, pc: &PhaseConfig, reg: &Registries) -> Result<PhaseSpec> {
    let field = format!("{prefix}.active_channels");
    if pc.active_channels.iter().any(|&c| !(1..=3).contains(&c)) {
        return Err(Error::config(field, "channels are 1-based indices in 1..=3"));
    }
    let channels = pc.active_channels.iter().map(|c| c - 1).collect();
    let cost = match &pc.running_cost {
        Some(v) => reg.running_costs.build_tagged(v).map_err(|e| nest(&format!("{prefix}.running_cost"), e))?,
        None => reg.running_costs.build("quadratic_half_norm", &Value::Null)?,
    };
    let mut phase = PhaseSpec::new(pc.id.clone(), channels, cost).map_err(|e| nest(prefix, e))?;
    if let Some(d) = pc.drift {
        phase = phase.with_drift(AlgebraVector::new(d[0], d[1], d[2]));
    }
    if let Some(b) = &pc.control_bounds {
        phase = phase
            .with_bounds(b.iter().map(|[lo, hi]| (*lo, *hi)).collect())
            .map_err(|e| nest(&format!("{prefix}.control_bounds"), e))?;
    }
    Ok(phase)
}

/// Best-effort field path for a serde error.
fn schema_field(path: &str, msg: &str) -> String {
    let parent = if path == "." { "" } else { path };
    for marker in ["unknown field `", "missing field `"] {
        if let Some(name) = msg.split(marker).nth(1).and_then(|rest| rest.split('`').next()) {
            return if parent.is_empty() { name.to_string() } else { format!("{parent}.{name}") };
        }
    }
    if parent.is_empty() { "config".to_string() } else { parent.to_string() }
}
