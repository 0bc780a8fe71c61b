use std::fmt;
use std::str::FromStr;

use super::metrics::{overshoot_report, DeltaEstimate, OvershootReport};
use super::rk4::rk4_step;
use crate::control::{
    es_control, nominal_backstepping, nussbaum_control, LyapunovSpec, NussbaumState, SafetySwitch, SwitchMode,
};
use crate::model::{Reference, Scenario, SystemModel};
use crate::synth::{bound_report, error_coords, GainConfig};
use crate::{Error, Result};

/// States beyond this magnitude count as a blowup.
const STATE_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerKind {
    Es,
    Nussbaum,
    Nominal,
    SafetyFilter,
}

impl ControllerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ControllerKind::Es => "es",
            ControllerKind::Nussbaum => "nussbaum",
            ControllerKind::Nominal => "nominal",
            ControllerKind::SafetyFilter => "safety-filter",
        }
    }

    pub fn uses_dither(self) -> bool {
        matches!(self, ControllerKind::Es | ControllerKind::SafetyFilter)
    }
}

impl FromStr for ControllerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "es" => Ok(ControllerKind::Es),
            "nussbaum" => Ok(ControllerKind::Nussbaum),
            "nominal" => Ok(ControllerKind::Nominal),
            "safety-filter" => Ok(ControllerKind::SafetyFilter),
            other => Err(Error::UnknownController(other.to_string())),
        }
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Everything a closed-loop run needs besides the plant and the scenario.
#[derive(Debug, Clone)]
pub struct ControllerSetup {
    pub kind: ControllerKind,
    pub gains: GainConfig,
    /// Required by `es` and `safety-filter`.
    pub lyapunov: Option<LyapunovSpec>,
    /// Initial Nussbaum adaptation variable.
    pub theta0: f64,
    /// Target of the nominal law inside the safety filter.
    pub nominal_target: Reference,
    pub hysteresis: f64,
    pub delta: DeltaEstimate,
}

impl ControllerSetup {
    pub fn new(kind: ControllerKind, gains: GainConfig, lyapunov: Option<LyapunovSpec>) -> Self {
        Self {
            kind,
            gains,
            lyapunov,
            theta0: 0.0,
            nominal_target: Reference::Constant(0.0),
            hysteresis: 0.0,
            delta: DeltaEstimate::default(),
        }
    }
}

/// Sampled closed-loop signals, one row per integration step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub h: Vec<Vec<f64>>,
    pub u: Vec<f64>,
    pub yr: Vec<f64>,
    /// Safety margin `H = y_r - x_1`.
    pub margin: Vec<f64>,
    pub mode: Vec<&'static str>,
    /// Nussbaum adaptation variable, when that controller runs.
    pub theta: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    Completed,
    Blowup { t: f64, state: Vec<f64> },
    GainFloorViolated { t: f64, gain_sq: f64 },
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Termination::Completed => write!(f, "ok"),
            Termination::Blowup { t, .. } => write!(f, "blowup@t={t}"),
            Termination::GainFloorViolated { t, gain_sq } => write!(f, "gain-floor@t={t}(g^2={gain_sq})"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trajectory: Trajectory,
    pub report: OvershootReport,
    pub termination: Termination,
}

impl RunOutput {
    pub fn completed(&self) -> bool {
        self.termination == Termination::Completed
    }
}

struct Loop<'a> {
    sys: &'a SystemModel,
    setup: &'a ControllerSetup,
    reference: Reference,
    n: usize,
}

impl Loop<'_> {
    fn lyapunov(&self) -> &LyapunovSpec {
        self.setup.lyapunov.as_ref().expect("checked before the run")
    }

    fn es(&self, t: f64, x: &[f64]) -> Result<f64> {
        let yr = self.reference.stack(t, self.n);
        let h = error_coords(self.sys, x, &yr, &self.setup.gains)?;
        es_control(self.lyapunov(), &self.setup.gains, t, &h)
    }

    fn nominal(&self, t: f64, x: &[f64], target: Reference) -> Result<f64> {
        nominal_backstepping(self.sys, x, &target.stack(t, self.n), &self.setup.gains)
    }

    /// Input and extra-state derivative at `(t, z)`; `z = [x, theta?]`.
    fn control(&self, t: f64, z: &[f64], mode: SwitchMode) -> Result<(f64, Option<f64>)> {
        let x = &z[..self.n];
        match self.setup.kind {
            ControllerKind::Es => Ok((self.es(t, x)?, None)),
            ControllerKind::Nominal => Ok((self.nominal(t, x, self.reference)?, None)),
            ControllerKind::Nussbaum => {
                let yr = self.reference.stack(t, self.n);
                let (u, dtheta) = nussbaum_control(self.sys, x, &yr, &self.setup.gains, NussbaumState { theta: z[self.n] })?;
                Ok((u, Some(dtheta)))
            }
            ControllerKind::SafetyFilter => match mode {
                SwitchMode::Nominal => Ok((self.nominal(t, x, self.setup.nominal_target)?, None)),
                SwitchMode::Override => Ok((self.es(t, x)?, None)),
            },
        }
    }

    fn rhs(&self, t: f64, z: &[f64], mode: SwitchMode) -> Result<Vec<f64>> {
        let (u, dtheta) = self.control(t, z, mode)?;
        let mut dz = self.sys.eval_dynamics(&z[..self.n], u).map_err(|e| match e {
            Error::NumericalBlowup { state, .. } => Error::NumericalBlowup { t: Some(t), state },
            other => other,
        })?;
        dz.extend(dtheta);
        Ok(dz)
    }
}

/// Integrates the closed loop with fixed-step RK4, evaluating the controller
/// at every stage. Safety-filter mode is fixed over each step from the margin
/// at the step's start. A blowup or gain-floor violation ends the run early;
/// the samples collected so far are kept.
pub fn run_scenario(sys: &SystemModel, setup: &ControllerSetup, scenario: &Scenario) -> Result<RunOutput> {
    let n = sys.dim();
    let dither = setup.kind.uses_dither().then_some(setup.gains.omega);
    scenario.validate(n, dither)?;
    if setup.gains.c.len() != n {
        return Err(Error::Dimension { expected: n, got: setup.gains.c.len() });
    }
    if setup.kind.uses_dither() && setup.lyapunov.is_none() {
        return Err(Error::Precondition(format!("controller `{}` needs a Lyapunov spec", setup.kind)));
    }

    let lp = Loop {
        sys,
        setup,
        reference: scenario.reference,
        n,
    };
    let steps = scenario.steps();
    let dt = scenario.dt;
    let mut traj = Trajectory::default();
    let mut z = scenario.x0.clone();
    if setup.kind == ControllerKind::Nussbaum {
        z.push(setup.theta0);
    }
    let mut switch = SafetySwitch::with_hysteresis(setup.hysteresis);
    let mut termination = Termination::Completed;

    for k in 0..=steps {
        let t = k as f64 * dt;
        let x = &z[..n];
        if let Err(Error::GainFloorViolated { t, gain_sq, .. }) = sys.check_gain_floor(t, x) {
            termination = Termination::GainFloorViolated { t, gain_sq };
            break;
        }
        let yr = scenario.reference.derivative(0, t);
        let margin = yr - x[0];
        let mode = switch.update(t, margin);
        let sample = lp
            .control(t, &z, mode)
            .and_then(|(u, _)| Ok((u, error_coords(sys, x, &scenario.reference.stack(t, n), &setup.gains)?)));
        let (u, h) = match sample {
            Ok(v) if v.0.is_finite() && v.1.h.iter().all(|h| h.is_finite()) => v,
            _ => {
                termination = Termination::Blowup { t, state: z.clone() };
                break;
            }
        };
        traj.t.push(t);
        traj.x.push(x.to_vec());
        traj.h.push(h.h);
        traj.u.push(u);
        traj.yr.push(yr);
        traj.margin.push(margin);
        traj.mode.push(match setup.kind {
            ControllerKind::SafetyFilter => mode.as_str(),
            other => other.as_str(),
        });
        if setup.kind == ControllerKind::Nussbaum {
            traj.theta.push(z[n]);
        }
        if k == steps {
            break;
        }

        let mut rhs = |s: f64, y: &[f64]| lp.rhs(s, y, mode);
        match rk4_step(&mut rhs, t, &z, dt) {
            Ok(next) if next.iter().all(|v| v.abs() < STATE_LIMIT) => z = next,
            Ok(next) => {
                termination = Termination::Blowup { t: t + dt, state: next };
                break;
            }
            Err(Error::NumericalBlowup { t, state }) => {
                termination = Termination::Blowup { t: t.unwrap_or(f64::NAN), state };
                break;
            }
            Err(e) => return Err(e),
        }
    }

    let bounds = bound_report(&setup.gains).ok();
    let report = overshoot_report(&traj, &setup.gains, bounds.as_ref(), setup.delta);
    Ok(RunOutput {
        trajectory: traj,
        report,
        termination,
    })
}
