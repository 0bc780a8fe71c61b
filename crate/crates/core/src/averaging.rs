//! Lie-bracket averaged error dynamics and the full-versus-averaged
//! trajectory comparison.

use rayon::prelude::*;

use crate::control::{adaptive_simpson, LyapunovSpec};
use crate::model::{Reference, Scenario, SystemModel};
use crate::sim::rk4::rk4_step;
use crate::sim::runner::{run_scenario, ControllerKind, ControllerSetup, Termination};
use crate::synth::{error_coords, state_and_psi_from_errors, GainConfig};
use crate::{Error, Result};

/// Coefficient on the gradient term of the averaged last layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BracketGain {
    /// `lambda beta g^2 dV/dh_n`, as used throughout the stability analysis.
    #[default]
    Full,
    /// `lambda beta / 2`, what the generic bracket formula gives for a
    /// `(beta cos, -lambda V sin)` dither pair.
    Half,
}

impl BracketGain {
    pub fn factor(self) -> f64 {
        match self {
            BracketGain::Full => 1.0,
            BracketGain::Half => 0.5,
        }
    }
}

/// Averaged closed loop in error coordinates:
///
/// ```text
/// hbar_i' = -c_i hbar_i + hbar_{i+1}                      i < n
/// hbar_n' = Psi(xbar, Y_r) - lambda beta g(xbar)^2 eta2(|hbar|) hbar_n
/// ```
///
/// with `xbar` reconstructed from `hbar`.
#[derive(Debug, Clone)]
pub struct AveragedSystem<'a> {
    pub sys: &'a SystemModel,
    pub spec: &'a LyapunovSpec,
    pub gains: &'a GainConfig,
    pub reference: Reference,
    pub bracket: BracketGain,
}

impl AveragedSystem<'_> {
    pub fn rhs(&self, t: f64, hbar: &[f64]) -> Result<Vec<f64>> {
        let n = self.sys.dim();
        let yr = self.reference.stack(t, n);
        let (x, psi) = state_and_psi_from_errors(self.sys, hbar, &yr, &self.gains.c)?;
        let r = hbar.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mu = self.bracket.factor() * mu_n(self.sys, self.spec, self.gains, &x, r);
        let mut out: Vec<f64> = (0..n - 1)
            .map(|i| -self.gains.c[i] * hbar[i] + hbar[i + 1])
            .collect();
        out.push(psi - mu * hbar[n - 1]);
        Ok(out)
    }

    /// Fixed-step RK4 run; returns `hbar` at every step including `t = 0`.
    pub fn simulate(&self, h0: &[f64], t_end: f64, dt: f64) -> Result<Vec<Vec<f64>>> {
        let steps = (t_end / dt).round() as usize;
        let mut h = h0.to_vec();
        let mut out = Vec::with_capacity(steps + 1);
        out.push(h.clone());
        let mut rhs = |t: f64, y: &[f64]| self.rhs(t, y);
        for k in 0..steps {
            h = rk4_step(&mut rhs, k as f64 * dt, &h, dt)?;
            out.push(h.clone());
        }
        Ok(out)
    }
}

/// `mu_n = lambda beta g(x)^2 eta2(r)`, the damping on `hbar_n`.
pub fn mu_n(sys: &SystemModel, spec: &LyapunovSpec, gains: &GainConfig, x: &[f64], r: f64) -> f64 {
    let g = sys.gain(x);
    gains.lambda * gains.beta * g * g * spec.eta2_at(r)
}

/// `(1/T) int_0^T u_j(s) int_0^s u_i(tau) dtau ds` for `T`-periodic,
/// zero-mean dithers.
pub fn v_coefficient(u_i: &dyn Fn(f64) -> f64, u_j: &dyn Fn(f64) -> f64, period: f64) -> Result<f64> {
    const TOL: f64 = 1e-12;
    for u in [u_i, u_j] {
        let mean = adaptive_simpson(u, 0.0, period, TOL)? / period;
        if mean.abs() > 1e-9 {
            return Err(Error::NonZeroMeanDither(mean));
        }
    }
    let outer = |s: f64| match adaptive_simpson(u_i, 0.0, s, TOL) {
        Ok(inner) => u_j(s) * inner,
        Err(_) => f64::NAN,
    };
    let total = adaptive_simpson(&outer, 0.0, period, 1e-11)?;
    if !total.is_finite() {
        return Err(Error::Quadrature("inner integral failed".into()));
    }
    Ok(total / period)
}

/// Maximum distance between the dithered closed loop and its average, per frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationStudy {
    pub omegas: Vec<f64>,
    pub horizon: f64,
    /// `max_t |h(t) - hbar(t)|`; infinite when either run blew up.
    pub deviations: Vec<f64>,
    pub blowups: Vec<bool>,
}

impl DeviationStudy {
    pub fn deviation_for(&self, omega: f64) -> Option<f64> {
        self.omegas
            .iter()
            .position(|w| *w == omega)
            .map(|i| self.deviations[i])
            .filter(|d| d.is_finite())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("omega,max_deviation,blowup_flag\n");
        for ((w, d), b) in self.omegas.iter().zip(&self.deviations).zip(&self.blowups) {
            out.push_str(&format!(
                "{},{},{}\n",
                crate::sim::csv::fmt_f64(*w),
                crate::sim::csv::fmt_f64(*d),
                u8::from(*b)
            ));
        }
        out
    }
}

/// Steps per dither period required of the full simulation.
pub const STEPS_PER_PERIOD: f64 = 100.0;

/// For each `omega`, runs the extremum-seeking loop and the averaged system
/// from the same `h(0)` and records the largest deviation over the
/// scenario horizon. The averaged run uses `scenario.dt`; the full run
/// subdivides it so every dither period gets at least [`STEPS_PER_PERIOD`] steps.
pub fn deviation_study(
    sys: &SystemModel,
    spec: &LyapunovSpec,
    gains: &GainConfig,
    scenario: &Scenario,
    omegas: &[f64],
    bracket: BracketGain,
) -> Result<DeviationStudy> {
    scenario.validate(sys.dim(), None)?;
    let avg = AveragedSystem {
        sys,
        spec,
        gains,
        reference: scenario.reference,
        bracket,
    };
    let h0 = error_coords(sys, &scenario.x0, &scenario.reference.stack(0.0, sys.dim()), gains)?.h;
    let averaged = avg.simulate(&h0, scenario.t_end, scenario.dt);

    let points: Vec<(f64, bool)> = omegas
        .par_iter()
        .map(|&omega| -> Result<(f64, bool)> {
            let averaged = match &averaged {
                Ok(a) => a,
                Err(_) => return Ok((f64::INFINITY, true)),
            };
            let period = 2.0 * std::f64::consts::PI / omega;
            let sub = (scenario.dt / (period / STEPS_PER_PERIOD)).ceil().max(1.0) as usize;
            let fine = Scenario {
                dt: scenario.dt / sub as f64,
                ..scenario.clone()
            };
            let setup = ControllerSetup::new(
                ControllerKind::Es,
                GainConfig { omega, ..gains.clone() },
                Some(spec.clone()),
            );
            let run = run_scenario(sys, &setup, &fine)?;
            let blew = !matches!(run.termination, Termination::Completed);
            let mut dev: f64 = 0.0;
            for (k, hbar) in averaged.iter().enumerate() {
                let Some(h) = run.trajectory.h.get(k * sub) else { break };
                let d = h.iter().zip(hbar).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                dev = dev.max(d);
            }
            Ok((if blew { f64::INFINITY } else { dev }, blew))
        })
        .collect::<Result<_>>()?;

    Ok(DeviationStudy {
        omegas: omegas.to_vec(),
        horizon: scenario.t_end,
        deviations: points.iter().map(|p| p.0).collect(),
        blowups: points.iter().map(|p| p.1).collect(),
    })
}
