//! Backstepping synthesis: error coordinates, virtual controllers and their
//! exact partial derivatives, the lumped drift `Psi`, and gain selection.
//!
//! The recursion runs on [`Jet`]s over the variables
//! `(x_1, .., x_n, y_r, .., y_r^(n-1))`. Each level forms the Lie derivative
//! of the previous virtual controller along the drift, which consumes one
//! Taylor degree; starting at degree `n - 1` leaves `alpha_{n-1}` with exact
//! first partials and `Psi` with an exact value.

use std::collections::BTreeMap;
use std::fmt;

use crate::jet::Jet;
use crate::model::{Reference, ReferenceStack, SystemModel};
use crate::{Error, Result};

/// Design gains. Only `c[..n-1]` enter the virtual controllers; `c[n-1]`
/// is the last-layer gain used by the Lyapunov function and the nominal law.
#[derive(Debug, Clone, PartialEq)]
pub struct GainConfig {
    pub c: Vec<f64>,
    pub kappa_n: f64,
    pub lambda: f64,
    pub beta: f64,
    pub omega: f64,
}

impl GainConfig {
    /// `c = [2, 1.5]`, `kappa_n = 1.1`, `lambda = 4`, `beta = 0.8`, `omega = 60`.
    pub fn example() -> Self {
        Self {
            c: vec![2.0, 1.5],
            kappa_n: 1.1,
            lambda: 4.0,
            beta: 0.8,
            omega: 60.0,
        }
    }

    pub fn c_n(&self) -> f64 {
        *self.c.last().expect("at least one gain")
    }

    pub fn c_min(&self) -> f64 {
        self.c.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Flat `key=value` lines.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        for (i, c) in self.c.iter().enumerate() {
            out.push_str(&format!("c{}={}\n", i + 1, c));
        }
        out.push_str(&format!(
            "kappa_n={}\nlambda={}\nbeta={}\nomega={}\n",
            self.kappa_n, self.lambda, self.beta, self.omega
        ));
        out
    }

    /// Reads gains from parsed `key=value` pairs. `c1..cn` must be contiguous.
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        let num = |k: &str| -> Result<f64> {
            let raw = map.get(k).ok_or_else(|| Error::Config(format!("missing key `{k}`")))?;
            raw.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("`{k}` is not a number: `{raw}`")))
        };
        let mut c = Vec::new();
        while map.contains_key(&format!("c{}", c.len() + 1)) {
            c.push(num(&format!("c{}", c.len() + 1))?);
        }
        if c.is_empty() {
            return Err(Error::Config("missing key `c1`".into()));
        }
        let extra = map
            .keys()
            .filter_map(|k| k.strip_prefix('c').and_then(|i| i.parse::<usize>().ok()))
            .find(|&i| i > c.len());
        if let Some(i) = extra {
            return Err(Error::Config(format!("gain `c{i}` given but `c{}` missing", c.len() + 1)));
        }
        Ok(Self {
            c,
            kappa_n: num("kappa_n")?,
            lambda: num("lambda")?,
            beta: num("beta")?,
            omega: num("omega")?,
        })
    }

    /// Single-field rendering for CSV cells.
    pub fn compact(&self) -> String {
        self.to_kv().trim_end().replace('\n', ";")
    }
}

/// Whether `alpha_i` carries the `-h_{i-1}` cross term of textbook backstepping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coupling {
    /// The nonovershooting design: no `-h_{i-1}` term, so the error chain is
    /// `h_i' = -c_i h_i + h_{i+1}`.
    Omitted,
    /// Textbook backstepping.
    Standard,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorState {
    pub h: Vec<f64>,
}

impl ErrorState {
    pub fn norm(&self) -> f64 {
        self.h.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// One virtual controller `alpha_i` with its exact first partials.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualController {
    pub value: f64,
    /// `d alpha_i / d x_k`, `k = 1..=i`
    pub dx: Vec<f64>,
    /// `d alpha_i / d y_r^(k-1)`, `k = 1..=i`
    pub dyr: Vec<f64>,
}

enum Input<'a> {
    State(&'a [f64]),
    Errors(&'a [f64]),
}

struct Recursion {
    x: Vec<f64>,
    h: Vec<f64>,
    alphas: Vec<Jet>,
    /// Value of the Lie-derivative term inside `alpha_i` (zero for `alpha_1`).
    lie: Vec<f64>,
    /// Same term built from `alpha_{n-1}`; enters `Psi`.
    lie_last: f64,
}

fn check_inputs(sys: &SystemModel, yr: &ReferenceStack, c: &[f64], len: usize) -> Result<()> {
    let n = sys.dim();
    if len != n {
        return Err(Error::Dimension { expected: n, got: len });
    }
    if yr.values.len() != n + 1 {
        return Err(Error::Dimension { expected: n + 1, got: yr.values.len() });
    }
    if c.len() < n.saturating_sub(1) {
        return Err(Error::Dimension { expected: n, got: c.len() });
    }
    Ok(())
}

fn recurse(sys: &SystemModel, input: Input<'_>, yr: &ReferenceStack, c: &[f64], coupling: Coupling) -> Recursion {
    let n = sys.dim();
    let sp = sys.synthesis_space();
    let yv: Vec<Jet> = (0..n).map(|k| Jet::variable(sp, n + k, yr.values[k])).collect();

    let mut xj: Vec<Jet> = Vec::with_capacity(n);
    let mut hj: Vec<Jet> = Vec::with_capacity(n);
    let mut alphas: Vec<Jet> = Vec::with_capacity(n.saturating_sub(1));
    let mut lie = Vec::with_capacity(n.saturating_sub(1));
    let mut drift: Vec<Jet> = Vec::with_capacity(n);

    for i in 0..n {
        let alpha_prev = if i == 0 { 0.0 } else { alphas[i - 1].value() };
        let xi = match input {
            Input::State(x) => x[i],
            Input::Errors(h) => h[i] + alpha_prev + yr.values[i],
        };
        xj.push(Jet::variable(sp, i, xi));
        if i > 0 {
            // drift component of x_i: x_{i+1} + psi_i, now that x_{i+1} exists
            drift.push(&xj[i] + &sys.psi_jet(i - 1, &xj));
        }
        let h = if i == 0 {
            &xj[0] - &yv[0]
        } else {
            &(&xj[i] - &alphas[i - 1]) - &yv[i]
        };
        hj.push(h);

        if i + 1 < n {
            let l = if i == 0 {
                Jet::constant(sp, 0.0)
            } else {
                lie_derivative(&alphas[i - 1], i, n, &drift, &yv)
            };
            lie.push(l.value());
            let mut alpha = &(&l - &sys.psi_jet(i, &xj)) - &hj[i].scale(c[i]);
            if coupling == Coupling::Standard && i > 0 {
                alpha = &alpha - &hj[i - 1];
            }
            alphas.push(alpha);
        }
    }

    let lie_last = if n == 1 {
        0.0
    } else {
        lie_derivative(&alphas[n - 2], n - 1, n, &drift, &yv).value()
    };

    Recursion {
        x: xj.iter().map(Jet::value).collect(),
        h: hj.iter().map(Jet::value).collect(),
        alphas,
        lie,
        lie_last,
    }
}

/// `sum_{k<=m} d alpha/d x_k (x_{k+1} + psi_k) + d alpha/d y_r^(k-1) y_r^(k)`
/// for an `alpha` depending on the first `m` states.
fn lie_derivative(alpha: &Jet, m: usize, n: usize, drift: &[Jet], yv: &[Jet]) -> Jet {
    let mut acc = Jet::constant(alpha.space(), 0.0);
    for k in 0..m {
        acc = &acc + &(&alpha.derivative(k) * &drift[k]);
        acc = &acc + &(&alpha.derivative(n + k) * &yv[k + 1]);
    }
    acc
}

fn controllers_from(rec: &Recursion, n: usize) -> Vec<VirtualController> {
    rec.alphas
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let grad = a.gradient().expect("alpha_i keeps first-order information");
            VirtualController {
                value: a.value(),
                dx: grad[..=i].to_vec(),
                dyr: grad[n..=n + i].to_vec(),
            }
        })
        .collect()
}

/// `alpha_1 .. alpha_{n-1}` with exact partials. Empty for `n = 1`.
pub fn virtual_controllers(
    sys: &SystemModel,
    x: &[f64],
    yr: &ReferenceStack,
    gains: &GainConfig,
) -> Result<Vec<VirtualController>> {
    virtual_controllers_with(sys, x, yr, &gains.c, Coupling::Omitted)
}

pub fn virtual_controllers_with(
    sys: &SystemModel,
    x: &[f64],
    yr: &ReferenceStack,
    c: &[f64],
    coupling: Coupling,
) -> Result<Vec<VirtualController>> {
    check_inputs(sys, yr, c, x.len())?;
    Ok(controllers_from(&recurse(sys, Input::State(x), yr, c, coupling), sys.dim()))
}

/// `h_1 = x_1 - y_r`, `h_i = x_i - alpha_{i-1} - y_r^(i-1)`.
pub fn error_coords(sys: &SystemModel, x: &[f64], yr: &ReferenceStack, gains: &GainConfig) -> Result<ErrorState> {
    error_coords_with(sys, x, yr, &gains.c, Coupling::Omitted)
}

pub fn error_coords_with(
    sys: &SystemModel,
    x: &[f64],
    yr: &ReferenceStack,
    c: &[f64],
    coupling: Coupling,
) -> Result<ErrorState> {
    check_inputs(sys, yr, c, x.len())?;
    Ok(ErrorState {
        h: recurse(sys, Input::State(x), yr, c, coupling).h,
    })
}

/// Inverse of [`error_coords`], solved one state at a time.
pub fn state_from_errors(sys: &SystemModel, h: &ErrorState, yr: &ReferenceStack, gains: &GainConfig) -> Result<Vec<f64>> {
    check_inputs(sys, yr, &gains.c, h.h.len())?;
    Ok(recurse(sys, Input::Errors(&h.h), yr, &gains.c, Coupling::Omitted).x)
}

/// `Psi = psi_n - L alpha_{n-1} - y_r^(n)`, the part of `h_n'` not multiplied by `u`.
pub fn big_psi(sys: &SystemModel, x: &[f64], yr: &ReferenceStack, gains: &GainConfig) -> Result<f64> {
    big_psi_with(sys, x, yr, &gains.c, Coupling::Omitted)
}

pub fn big_psi_with(sys: &SystemModel, x: &[f64], yr: &ReferenceStack, c: &[f64], coupling: Coupling) -> Result<f64> {
    check_inputs(sys, yr, c, x.len())?;
    let rec = recurse(sys, Input::State(x), yr, c, coupling);
    Ok(psi_of(sys, &rec, yr))
}

fn psi_of(sys: &SystemModel, rec: &Recursion, yr: &ReferenceStack) -> f64 {
    let n = sys.dim();
    sys.psi(n - 1, &rec.x) - rec.lie_last - yr.values[n]
}

/// Error coordinates and `Psi` from one pass of the recursion.
pub fn errors_and_psi(sys: &SystemModel, x: &[f64], yr: &ReferenceStack, c: &[f64], coupling: Coupling) -> Result<(ErrorState, f64)> {
    check_inputs(sys, yr, c, x.len())?;
    let rec = recurse(sys, Input::State(x), yr, c, coupling);
    let psi = psi_of(sys, &rec, yr);
    Ok((ErrorState { h: rec.h }, psi))
}

/// Reconstructed state and `Psi` at that state, from error coordinates.
pub fn state_and_psi_from_errors(sys: &SystemModel, h: &[f64], yr: &ReferenceStack, c: &[f64]) -> Result<(Vec<f64>, f64)> {
    check_inputs(sys, yr, c, h.len())?;
    let rec = recurse(sys, Input::Errors(h), yr, c, Coupling::Omitted);
    let psi = psi_of(sys, &rec, yr);
    Ok((rec.x, psi))
}

/// A class-K-infinity function.
#[derive(Debug, Clone, PartialEq)]
pub enum ClassK {
    /// `sum_k coef[k] r^(k+1)`, nonnegative coefficients.
    Polynomial(Vec<f64>),
    /// Piecewise-linear through `(r[i], v[i])` from the origin, extended
    /// linearly with the last slope.
    Tabulated { r: Vec<f64>, v: Vec<f64> },
}

impl ClassK {
    pub fn polynomial(coef: Vec<f64>) -> Result<Self> {
        if coef.iter().any(|c| !(c.is_finite() && *c >= 0.0)) || !coef.iter().any(|c| *c > 0.0) {
            return Err(Error::Precondition(
                "class-K polynomial needs nonnegative coefficients, at least one positive".into(),
            ));
        }
        Ok(ClassK::Polynomial(coef))
    }

    pub fn tabulated(r: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        let ok = r.len() == v.len()
            && r.len() >= 2
            && r[0] == 0.0
            && v[0] == 0.0
            && r.windows(2).all(|w| w[1] > w[0])
            && v.windows(2).all(|w| w[1] > w[0])
            && r.iter().chain(&v).all(|x| x.is_finite());
        if !ok {
            return Err(Error::Precondition(
                "tabulated class-K function must start at (0,0) and be strictly increasing".into(),
            ));
        }
        Ok(ClassK::Tabulated { r, v })
    }

    pub fn eval(&self, r: f64) -> f64 {
        match self {
            ClassK::Polynomial(coef) => coef.iter().rev().fold(0.0, |acc, c| (acc + c) * r),
            ClassK::Tabulated { r: rs, v } => {
                let last = rs.len() - 1;
                let seg = rs.partition_point(|&x| x <= r).clamp(1, last);
                let (r0, r1, v0, v1) = (rs[seg - 1], rs[seg], v[seg - 1], v[seg]);
                v0 + (v1 - v0) / (r1 - r0) * (r - r0)
            }
        }
    }
}

/// `|Psi(x, Y_r)| <= eta1(|h|) + sigma1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiBound {
    pub eta1: ClassK,
    pub sigma1: f64,
}

impl PsiBound {
    pub fn new(eta1: ClassK, sigma1: f64) -> Result<Self> {
        if !(sigma1 >= 0.0 && sigma1.is_finite()) {
            return Err(Error::Precondition(format!("sigma1 must be nonnegative, got {sigma1}")));
        }
        Ok(Self { eta1, sigma1 })
    }

    pub fn eval(&self, r: f64) -> f64 {
        self.eta1.eval(r) + self.sigma1
    }
}

/// Bound for the example system, from expanding `Psi` in error coordinates:
///
/// ```text
/// Psi = h1^2 + 2 h1 y_r + y_r^2 + c1 h2 - c1^2 h1 - y_r''
/// ```
///
/// giving `eta1(r) = r^2 + (2 |y_r|max + c1 + c1^2) r` and
/// `sigma1 = |y_r|max^2 + |y_r''|max`.
pub fn default_psi_bound(sys: &SystemModel, gains: &GainConfig, reference: &Reference) -> Result<PsiBound> {
    if sys.name() != "example" {
        return Err(Error::Precondition(format!(
            "no default Psi bound for system `{}`; supply one",
            sys.name()
        )));
    }
    let c1 = gains.c[0];
    let ymax = reference.bound(0);
    PsiBound::new(
        ClassK::polynomial(vec![2.0 * ymax + c1 + c1 * c1, 1.0])?,
        ymax * ymax + reference.bound(2),
    )
}

/// Lower bounds on `c_1..c_{n-1}` that keep every `h_i(0)` negative when
/// `h_1(0) < 0`. Entry `i` uses the gains `c_1..c_{i-1}` from `gains`.
pub fn c_lower_bounds(sys: &SystemModel, x0: &[f64], yr0: &ReferenceStack, gains: &GainConfig) -> Result<Vec<f64>> {
    check_inputs(sys, yr0, &gains.c, x0.len())?;
    let n = sys.dim();
    let rec = recurse(sys, Input::State(x0), yr0, &gains.c, Coupling::Omitted);
    if rec.h[0] >= 0.0 {
        return Err(Error::Precondition(format!(
            "h_1(0) = {} is not negative; use the strictly decreasing gain chain instead",
            rec.h[0]
        )));
    }
    let mut out = Vec::with_capacity(n.saturating_sub(1));
    for i in 0..n.saturating_sub(1) {
        let hi = rec.h[i];
        if hi >= 0.0 {
            return Err(Error::Precondition(format!(
                "h_{}(0) = {hi} is not negative; raise c_{} above its lower bound",
                i + 1,
                i
            )));
        }
        let b = x0[i + 1] + sys.psi(i, x0) - yr0.values[i + 1] - rec.lie[i];
        out.push(-b / hi);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub enum GainMode {
    /// `c_i > 1` and `lambda beta >= 1/xi1`.
    Basic,
    /// Additionally `c_i > max(lower bound_i, 1)` at the given initial condition.
    SafeInit { x0: Vec<f64>, yr0: ReferenceStack },
    /// `c_1 > .. > c_n > 1` and `lambda beta >= 1/xi1`.
    Ordered,
}

impl fmt::Display for GainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GainMode::Basic => write!(f, "basic"),
            GainMode::SafeInit { .. } => write!(f, "safe-init"),
            GainMode::Ordered => write!(f, "ordered"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Greater,
    GreaterEq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub label: String,
    pub lhs: f64,
    pub relation: Relation,
    pub rhs: f64,
}

impl Condition {
    fn new(label: impl Into<String>, lhs: f64, relation: Relation, rhs: f64) -> Self {
        Self { label: label.into(), lhs, relation, rhs }
    }

    pub fn holds(&self) -> bool {
        match self.relation {
            Relation::Greater => self.lhs > self.rhs,
            Relation::GreaterEq => self.lhs >= self.rhs,
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.relation {
            Relation::Greater => ">",
            Relation::GreaterEq => ">=",
        };
        write!(f, "{}: {} {} {}", self.label, self.lhs, op, self.rhs)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub mode: String,
    pub conditions: Vec<Condition>,
    /// Problems that prevented a condition from being evaluated.
    pub errors: Vec<String>,
}

impl Verdict {
    pub fn is_valid(&self) -> bool {
        self.errors.is_empty() && self.conditions.iter().all(Condition::holds)
    }

    pub fn violations(&self) -> impl Iterator<Item = &Condition> {
        self.conditions.iter().filter(|c| !c.holds())
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_valid() {
            return write!(f, "{}: valid ({} conditions hold)", self.mode, self.conditions.len());
        }
        writeln!(f, "{}: invalid", self.mode)?;
        for c in self.violations() {
            writeln!(f, "  violated {c}")?;
        }
        for e in &self.errors {
            writeln!(f, "  error: {e}")?;
        }
        Ok(())
    }
}

pub fn check_gains(sys: &SystemModel, gains: &GainConfig, mode: &GainMode) -> Verdict {
    use Relation::*;
    let n = sys.dim();
    let mut conditions = Vec::new();
    let mut errors = Vec::new();

    if gains.c.len() != n {
        errors.push(format!("expected {n} gains c_i, got {}", gains.c.len()));
    }
    for (name, v) in [
        ("kappa_n", gains.kappa_n),
        ("lambda", gains.lambda),
        ("beta", gains.beta),
        ("omega", gains.omega),
    ] {
        conditions.push(Condition::new(format!("{name} > 0"), v, Greater, 0.0));
    }
    for (i, c) in gains.c.iter().enumerate() {
        conditions.push(Condition::new(format!("c{} > 1", i + 1), *c, Greater, 1.0));
    }
    conditions.push(Condition::new(
        "lambda*beta >= 1/xi1",
        gains.lambda * gains.beta,
        GreaterEq,
        1.0 / sys.xi1(),
    ));

    match mode {
        GainMode::Basic => {}
        GainMode::SafeInit { x0, yr0 } => {
            if errors.is_empty() {
                match c_lower_bounds(sys, x0, yr0, gains) {
                    Ok(lower) => {
                        for (i, lb) in lower.iter().enumerate() {
                            conditions.push(Condition::new(
                                format!("c{} > max(lower bound, 1)", i + 1),
                                gains.c[i],
                                Greater,
                                lb.max(1.0),
                            ));
                        }
                    }
                    Err(e) => errors.push(e.to_string()),
                }
            }
        }
        GainMode::Ordered => {
            for i in 1..gains.c.len() {
                conditions.push(Condition::new(
                    format!("c{} > c{}", i, i + 1),
                    gains.c[i - 1],
                    Greater,
                    gains.c[i],
                ));
            }
        }
    }

    Verdict {
        mode: mode.to_string(),
        conditions,
        errors,
    }
}

/// Frequency-independent parts of the residual and overshoot bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    /// `sqrt(1 / (kappa_n (c_m - 1)))`
    pub d1_core: f64,
    /// `1 / (kappa_n prod c_i)`
    pub d2_core: f64,
    /// Envelope coefficients `a_1 = 1`, `a_i = 1 / prod_{k<i} (c_k - c_i)`;
    /// only defined for a strictly decreasing gain chain.
    pub a: Option<Vec<f64>>,
    pub c_m: f64,
}

impl BoundReport {
    /// `d2_core + delta + sum_i a_i |h_i(0)| e^{-c_i t}`.
    pub fn envelope(&self, c: &[f64], h0: &[f64], delta: f64, t: f64) -> Option<f64> {
        let a = self.a.as_ref()?;
        Some(
            self.d2_core
                + delta
                + a.iter()
                    .zip(c)
                    .zip(h0)
                    .map(|((a, c), h)| a * h.abs() * (-c * t).exp())
                    .sum::<f64>(),
        )
    }
}

pub fn bound_report(gains: &GainConfig) -> Result<BoundReport> {
    let c_m = gains.c_min();
    if gains.c.is_empty() || !(c_m > 1.0) || !(gains.kappa_n > 0.0) {
        return Err(Error::InvalidGains(format!(
            "bounds need every c_i > 1 and kappa_n > 0 (c_m = {c_m}, kappa_n = {})",
            gains.kappa_n
        )));
    }
    let prod: f64 = gains.c.iter().product();
    let descending = gains.c.windows(2).all(|w| w[0] > w[1]);
    let a = descending.then(|| {
        (0..gains.c.len())
            .map(|i| 1.0 / gains.c[..i].iter().map(|ck| ck - gains.c[i]).product::<f64>())
            .collect()
    });
    Ok(BoundReport {
        d1_core: (1.0 / (gains.kappa_n * (c_m - 1.0))).sqrt(),
        d2_core: 1.0 / (gains.kappa_n * prod),
        a,
        c_m,
    })
}
