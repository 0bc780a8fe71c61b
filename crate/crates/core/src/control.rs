//! Control laws: the extremum-seeking nonovershooting law with its integral
//! Lyapunov function, a known-gain backstepping law, the Nussbaum comparator
//! and the switching safety filter.

use crate::model::{ReferenceStack, SystemModel};
use crate::synth::{errors_and_psi, ClassK, Coupling, ErrorState, GainConfig, PsiBound};
use crate::{Error, Result};

/// `V(h) = int_0^|h| r eta2(r) dr` with
/// `eta2(r) = c_n + kappa_n (eta1 + sigma1) + kappa_n (eta1 + sigma1)^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovSpec {
    pub psi_bound: PsiBound,
    pub c_n: f64,
    pub kappa_n: f64,
    // Coefficients of eta2 and V in powers of r, when eta1 is polynomial.
    eta2_poly: Option<Vec<f64>>,
    v_poly: Option<Vec<f64>>,
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_eval(p: &[f64], r: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, c| acc * r + c)
}

impl LyapunovSpec {
    pub fn new(psi_bound: PsiBound, c_n: f64, kappa_n: f64) -> Result<Self> {
        if !(c_n > 0.0 && kappa_n > 0.0) {
            return Err(Error::InvalidGains(format!(
                "Lyapunov design needs c_n > 0 and kappa_n > 0 (got {c_n}, {kappa_n})"
            )));
        }
        let (eta2_poly, v_poly) = match &psi_bound.eta1 {
            ClassK::Polynomial(coef) => {
                let mut p = vec![psi_bound.sigma1];
                p.extend_from_slice(coef);
                let p2 = poly_mul(&p, &p);
                let mut eta2 = vec![0.0; p2.len()];
                for (k, v) in eta2.iter_mut().enumerate() {
                    *v = kappa_n * (p.get(k).copied().unwrap_or(0.0) + p2[k]);
                }
                eta2[0] += c_n;
                // V = sum eta2_k r^(k+2) / (k+2)
                let mut v = vec![0.0, 0.0];
                v.extend(eta2.iter().enumerate().map(|(k, e)| e / (k as f64 + 2.0)));
                (Some(eta2), Some(v))
            }
            ClassK::Tabulated { .. } => (None, None),
        };
        Ok(Self {
            psi_bound,
            c_n,
            kappa_n,
            eta2_poly,
            v_poly,
        })
    }

    pub fn from_gains(psi_bound: PsiBound, gains: &GainConfig) -> Result<Self> {
        Self::new(psi_bound, gains.c_n(), gains.kappa_n)
    }

    /// True when `V` is integrated analytically.
    pub fn closed_form(&self) -> bool {
        self.v_poly.is_some()
    }

    pub fn eta2(&self, r: f64) -> Result<f64> {
        if r < 0.0 {
            return Err(Error::NegativeRadius(r));
        }
        Ok(self.eta2_at(r))
    }

    pub(crate) fn eta2_at(&self, r: f64) -> f64 {
        match &self.eta2_poly {
            Some(p) => poly_eval(p, r),
            None => {
                let e = self.psi_bound.eval(r);
                self.c_n + self.kappa_n * (e + e * e)
            }
        }
    }

    /// `V` as a function of `|h|`.
    pub fn v_radial(&self, r: f64) -> Result<f64> {
        if r < 0.0 {
            return Err(Error::NegativeRadius(r));
        }
        match &self.v_poly {
            Some(p) => Ok(poly_eval(p, r)),
            None => adaptive_simpson(&|s| s * self.eta2_at(s), 0.0, r, 1e-10),
        }
    }

    pub fn lyap_v(&self, h: &ErrorState) -> Result<f64> {
        self.v_radial(h.norm())
    }

    /// `dV/dh_n = eta2(|h|) h_n`.
    pub fn grad_v_hn(&self, h: &ErrorState) -> f64 {
        self.eta2_at(h.norm()) * h.h.last().copied().unwrap_or(0.0)
    }
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
    let m = 0.5 * (a + b);
    let fm = f(m);
    (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
}

/// Adaptive Simpson quadrature to absolute tolerance `tol`, raised to a
/// roundoff floor proportional to the interval length and the sampled
/// magnitude of `f`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Result<f64> {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if delta.abs() <= 15.0 * tol {
            return Ok(left + right + delta / 15.0);
        }
        if depth == 0 {
            return Err(Error::Quadrature(format!(
                "no convergence on [{a}, {b}], local error {:e}",
                delta.abs() / 15.0
            )));
        }
        Ok(recurse(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)?
            + recurse(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)?)
    }
    if a == b {
        return Ok(0.0);
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    // keep the tolerance above what roundoff lets the estimate reach
    let scale = [fa, fm, fb, f(0.75 * a + 0.25 * b), f(0.25 * a + 0.75 * b)]
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let tol = tol.max(64.0 * f64::EPSILON * (b - a).abs() * scale);
    recurse(f, a, fa, b, fb, m, fm, whole, tol, 48)
}

/// `u = sqrt(omega) [beta cos(omega t) - lambda sin(omega t) V(h)]`.
pub fn es_control(spec: &LyapunovSpec, gains: &GainConfig, t: f64, h: &ErrorState) -> Result<f64> {
    if !(gains.omega > 0.0) {
        return Err(Error::InvalidGains(format!("omega must be positive, got {}", gains.omega)));
    }
    let v = spec.lyap_v(h)?;
    let (s, c) = (gains.omega * t).sin_cos();
    Ok(gains.omega.sqrt() * (gains.beta * c - gains.lambda * s * v))
}

/// Textbook backstepping stabilizer for the last layer,
/// `-c_n z_n - z_{n-1} - Psi_std`, before division by the gain.
/// Returns it together with `z_n`.
fn standard_last_layer(sys: &SystemModel, x: &[f64], yr: &ReferenceStack, gains: &GainConfig) -> Result<(f64, f64)> {
    let n = sys.dim();
    if gains.c.len() != n {
        return Err(Error::Dimension { expected: n, got: gains.c.len() });
    }
    let (z, psi) = errors_and_psi(sys, x, yr, &gains.c, Coupling::Standard)?;
    let zn = z.h[n - 1];
    let coupling = if n >= 2 { z.h[n - 2] } else { 0.0 };
    Ok((-gains.c_n() * zn - coupling - psi, zn))
}

/// Known-gain backstepping law `u0 = (-c_n z_n - z_{n-1} - Psi_std) / g(x)`.
pub fn nominal_backstepping(sys: &SystemModel, x: &[f64], yr: &ReferenceStack, gains: &GainConfig) -> Result<f64> {
    let g = sys.gain(x);
    if g.abs() < 1e-9 {
        return Err(Error::SingularGain(g));
    }
    let (alpha, _) = standard_last_layer(sys, x, yr, gains)?;
    Ok(alpha / g)
}

/// Adaptation variable of the Nussbaum comparator.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NussbaumState {
    pub theta: f64,
}

/// `N(theta) = theta^2 cos(theta)`.
pub fn nussbaum_gain(theta: f64) -> f64 {
    theta * theta * theta.cos()
}

/// `u = N(theta) alpha_n`, `theta' = -alpha_n z_n`.
pub fn nussbaum_control(
    sys: &SystemModel,
    x: &[f64],
    yr: &ReferenceStack,
    gains: &GainConfig,
    state: NussbaumState,
) -> Result<(f64, f64)> {
    let (alpha, zn) = standard_last_layer(sys, x, yr, gains)?;
    Ok((nussbaum_gain(state.theta) * alpha, -alpha * zn))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwitchMode {
    Nominal,
    Override,
}

impl SwitchMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SwitchMode::Nominal => "nominal",
            SwitchMode::Override => "override",
        }
    }
}

/// Switching state of the safety filter. `hysteresis = 0` reproduces the
/// plain rule: nominal exactly when `H >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafetySwitch {
    pub mode: SwitchMode,
    pub last_switch_time: Option<f64>,
    pub hysteresis: f64,
}

impl Default for SafetySwitch {
    fn default() -> Self {
        Self {
            mode: SwitchMode::Nominal,
            last_switch_time: None,
            hysteresis: 0.0,
        }
    }
}

impl SafetySwitch {
    pub fn with_hysteresis(hysteresis: f64) -> Self {
        Self { hysteresis: hysteresis.max(0.0), ..Self::default() }
    }

    /// Updates the mode from the safety margin `H = y_r - x_1`.
    pub fn update(&mut self, t: f64, margin: f64) -> SwitchMode {
        let next = match self.mode {
            SwitchMode::Nominal if margin < -self.hysteresis => SwitchMode::Override,
            SwitchMode::Override if margin >= self.hysteresis => SwitchMode::Nominal,
            m => m,
        };
        if next != self.mode {
            self.mode = next;
            self.last_switch_time = Some(t);
        }
        next
    }
}

/// Passes `u0` inside the safe set `H >= 0`, overrides with `u_es` outside.
pub fn safety_filter(t: f64, margin: f64, u0: f64, u_es: f64, switch: &mut SafetySwitch) -> f64 {
    match switch.update(t, margin) {
        SwitchMode::Nominal => u0,
        SwitchMode::Override => u_es,
    }
}
