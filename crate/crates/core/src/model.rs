//! Plant class, reference generators and the worked example system.

use std::fmt;
use std::sync::Arc;

use crate::jet::{Jet, JetSpace};
use crate::{Error, Result};

/// Drift term `psi_i`, evaluated on the first `i` states only.
pub type DriftFn = Arc<dyn Fn(&[Jet]) -> Jet + Send + Sync>;
/// Input gain `g(x)`; its sign is never exposed to controllers that claim not to know it.
pub type GainFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Strict-feedback plant
///
/// ```text
/// x_i' = x_{i+1} + psi_i(x_1..x_i),   i < n
/// x_n' = g(x) u + psi_n(x_1..x_n)
/// ```
///
/// Strict-feedback structure is enforced by construction: `psi_i` is only
/// ever handed the slice `x[..i]`.
#[derive(Clone)]
pub struct SystemModel {
    name: String,
    psi: Vec<DriftFn>,
    gain: GainFn,
    xi1: f64,
    scalar: Arc<JetSpace>,
    synthesis: Arc<JetSpace>,
}

impl fmt::Debug for SystemModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemModel")
            .field("name", &self.name)
            .field("n", &self.psi.len())
            .field("xi1", &self.xi1)
            .finish()
    }
}

impl SystemModel {
    pub fn new(name: impl Into<String>, psi: Vec<DriftFn>, gain: GainFn, xi1: f64) -> Result<Self> {
        if psi.is_empty() {
            return Err(Error::Precondition("system dimension must be at least 1".into()));
        }
        if !(xi1 > 0.0 && xi1.is_finite()) {
            return Err(Error::Precondition(format!("xi1 must be positive, got {xi1}")));
        }
        let n = psi.len();
        Ok(Self {
            name: name.into(),
            psi,
            gain,
            xi1,
            scalar: JetSpace::new(n, 0),
            // x_1..x_n and y_r..y_r^(n-1); degree n-1 leaves alpha_{n-1} with exact gradients
            synthesis: JetSpace::new(2 * n, n - 1),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub(crate) fn synthesis_space(&self) -> &Arc<JetSpace> {
        &self.synthesis
    }

    pub fn dim(&self) -> usize {
        self.psi.len()
    }

    /// Known lower bound on `g(x)^2`.
    pub fn xi1(&self) -> f64 {
        self.xi1
    }

    /// `psi_{i+1}` (zero-based `i`) on jets; `x` may be longer than `i + 1`.
    pub fn psi_jet(&self, i: usize, x: &[Jet]) -> Jet {
        (self.psi[i])(&x[..=i])
    }

    /// `psi_{i+1}` (zero-based `i`) on plain floats.
    pub fn psi(&self, i: usize, x: &[f64]) -> f64 {
        let jets: Vec<Jet> = x[..=i]
            .iter()
            .enumerate()
            .map(|(k, &v)| Jet::variable(&self.scalar, k, v))
            .collect();
        (self.psi[i])(&jets).value()
    }

    pub fn gain(&self, x: &[f64]) -> f64 {
        (self.gain)(x)
    }

    /// Open-loop vector field.
    pub fn eval_dynamics(&self, x: &[f64], u: f64) -> Result<Vec<f64>> {
        let n = self.dim();
        if x.len() != n {
            return Err(Error::Dimension { expected: n, got: x.len() });
        }
        let mut dx: Vec<f64> = (0..n).map(|i| self.psi(i, x)).collect();
        for i in 0..n - 1 {
            dx[i] += x[i + 1];
        }
        dx[n - 1] += self.gain(x) * u;
        if dx.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalBlowup { t: None, state: x.to_vec() });
        }
        Ok(dx)
    }

    /// Runtime check of the gain floor `g(x)^2 >= xi1`.
    pub fn check_gain_floor(&self, t: f64, x: &[f64]) -> Result<()> {
        let g = self.gain(x);
        let gain_sq = g * g;
        // 1e-12 slack absorbs rounding in g at its exact minimum
        if gain_sq < self.xi1 - 1e-12 {
            return Err(Error::GainFloorViolated { t, gain_sq, xi1: self.xi1 });
        }
        Ok(())
    }
}

/// `x1' = x2, x2' = (0.2 sin x2 + 1.2) u + x1^2`.
pub fn example_system() -> SystemModel {
    let psi: Vec<DriftFn> = vec![
        Arc::new(|x: &[Jet]| Jet::constant(x[0].space(), 0.0)),
        Arc::new(|x: &[Jet]| x[0].powi(2)),
    ];
    let gain: GainFn = Arc::new(|x: &[f64]| 0.2 * x[1].sin() + 1.2);
    SystemModel::new("example", psi, gain, 1.0).expect("example system is well formed")
}

/// Pure integrator chain of length `n` with unit gain.
pub fn chain_integrator(n: usize) -> SystemModel {
    let psi: Vec<DriftFn> = (0..n)
        .map(|_| Arc::new(|x: &[Jet]| Jet::constant(x[0].space(), 0.0)) as DriftFn)
        .collect();
    SystemModel::new(format!("chain:{n}"), psi, Arc::new(|_: &[f64]| 1.0), 1.0)
        .expect("chain integrator is well formed")
}

/// Resolves `example` or `chain:<n>`.
pub fn system_by_id(id: &str) -> Result<SystemModel> {
    match id {
        "example" => Ok(example_system()),
        _ => match id.strip_prefix("chain:").map(str::parse::<usize>) {
            Some(Ok(n)) if n >= 1 => Ok(chain_integrator(n)),
            _ => Err(Error::UnknownSystem(id.to_string())),
        },
    }
}

/// Analytic reference generators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reference {
    /// `amplitude * sin(freq * t)`
    Sine { amplitude: f64, freq: f64 },
    Constant(f64),
}

impl Reference {
    /// `y_r = -sin(0.4 t)`.
    pub const SINE04: Reference = Reference::Sine { amplitude: -1.0, freq: 0.4 };

    pub fn parse(id: &str) -> Result<Self> {
        let id = id.trim();
        if id == "sine04" {
            return Ok(Self::SINE04);
        }
        if let Some(v) = id.strip_prefix("constant:") {
            return v
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|c| c.is_finite())
                .map(Reference::Constant)
                .ok_or_else(|| Error::UnknownReference(id.to_string()));
        }
        Err(Error::UnknownReference(id.to_string()))
    }

    /// `k`-th time derivative at `t`.
    pub fn derivative(&self, k: usize, t: f64) -> f64 {
        match *self {
            Reference::Constant(c) => {
                if k == 0 {
                    c
                } else {
                    0.0
                }
            }
            Reference::Sine { amplitude, freq } => {
                let (s, c) = (freq * t).sin_cos();
                let scale = amplitude * freq.powi(k as i32);
                scale * [s, c, -s, -c][k % 4]
            }
        }
    }

    /// `sup_t |y_r^(k)(t)|`.
    pub fn bound(&self, k: usize) -> f64 {
        match *self {
            Reference::Constant(c) => {
                if k == 0 {
                    c.abs()
                } else {
                    0.0
                }
            }
            Reference::Sine { amplitude, freq } => (amplitude * freq.powi(k as i32)).abs(),
        }
    }

    pub fn stack(&self, t: f64, n: usize) -> ReferenceStack {
        ReferenceStack {
            values: (0..=n).map(|k| self.derivative(k, t)).collect(),
        }
    }
}

impl fmt::Display for Reference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            r if r == Self::SINE04 => write!(f, "sine04"),
            Reference::Constant(c) => write!(f, "constant:{c}"),
            Reference::Sine { amplitude, freq } => write!(f, "sine(amplitude={amplitude},freq={freq})"),
        }
    }
}

/// `[y_r, y_r', ..., y_r^(n)]` at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceStack {
    pub values: Vec<f64>,
}

impl ReferenceStack {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Precondition("reference stack must be non-empty and finite".into()));
        }
        Ok(Self { values })
    }

    /// Order `n` of the highest derivative held.
    pub fn order(&self) -> usize {
        self.values.len() - 1
    }

    pub fn get(&self, k: usize) -> f64 {
        self.values[k]
    }
}

/// Looks up `name` and stacks its first `n` derivatives at `t`.
pub fn reference_stack(name: &str, t: f64, n: usize) -> Result<ReferenceStack> {
    Ok(Reference::parse(name)?.stack(t, n))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub x0: Vec<f64>,
    pub t_end: f64,
    pub dt: f64,
    pub reference: Reference,
}

impl Scenario {
    /// Initial condition `[-0.5, 0]`, `y_r = -sin(0.4 t)`, 50 s at 1 ms.
    pub fn example() -> Self {
        Self {
            x0: vec![-0.5, 0.0],
            t_end: 50.0,
            dt: 1e-3,
            reference: Reference::SINE04,
        }
    }

    /// Checks the time grid, and the dither resolution when `omega` is given.
    pub fn validate(&self, n: usize, omega: Option<f64>) -> Result<()> {
        if self.x0.len() != n {
            return Err(Error::Dimension { expected: n, got: self.x0.len() });
        }
        if !(self.dt > 0.0 && self.t_end > 0.0) {
            return Err(Error::Precondition(format!(
                "dt and t_end must be positive (dt={}, t_end={})",
                self.dt, self.t_end
            )));
        }
        if let Some(w) = omega {
            let limit = 2.0 * std::f64::consts::PI / w / 40.0;
            if self.dt > limit {
                return Err(Error::Precondition(format!(
                    "dt={} does not resolve the dither: need dt <= 2*pi/(40*omega) = {limit}",
                    self.dt
                )));
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}
