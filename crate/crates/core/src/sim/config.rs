//! Flat `key=value` run configuration.
//!
//! ```text
//! # example gains
//! c1=2
//! c2=1.5
//! kappa_n=1.1
//! lambda=4
//! beta=0.8
//! omega=60
//! x0=-0.5,0
//! reference=sine04
//! ```
//!
//! Blank lines and `#` comments are ignored. Gains not given fall back to the
//! example values; if any `c<i>` is given, the whole `c` chain comes from the file.

use std::collections::BTreeMap;
use std::path::Path;

use crate::control::LyapunovSpec;
use crate::model::{Reference, SystemModel};
use crate::synth::{default_psi_bound, ClassK, GainConfig, PsiBound};
use crate::{Error, Result};

const SCALAR_KEYS: &[&str] = &[
    "kappa_n",
    "lambda",
    "beta",
    "omega",
    "x0",
    "reference",
    "theta0",
    "delta_est",
    "eta1",
    "sigma1",
    "hysteresis",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub gains: GainConfig,
    pub x0: Option<Vec<f64>>,
    pub reference: Option<Reference>,
    pub theta0: Option<f64>,
    pub delta_est: Option<f64>,
    /// Coefficients of `r, r^2, ...` in the class-K part of the Psi bound.
    pub eta1: Option<Vec<f64>>,
    pub sigma1: Option<f64>,
    pub hysteresis: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            gains: GainConfig::example(),
            x0: None,
            reference: None,
            theta0: None,
            delta_est: None,
            eta1: None,
            sigma1: None,
            hysteresis: None,
        }
    }
}

fn is_gain_key(k: &str) -> bool {
    k.strip_prefix('c')
        .is_some_and(|i| !i.is_empty() && i.bytes().all(|b| b.is_ascii_digit()) && !i.starts_with('0'))
}

fn number(key: &str, raw: &str) -> Result<f64> {
    raw.trim()
        .parse::<f64>()
        .map_err(|_| Error::Config(format!("`{key}` is not a number: `{raw}`")))
}

fn list(key: &str, raw: &str) -> Result<Vec<f64>> {
    raw.split(',').map(|v| number(key, v)).collect()
}

pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got `{line}`", lineno + 1)))?;
        let k = k.trim().to_string();
        if !(is_gain_key(&k) || SCALAR_KEYS.contains(&k.as_str())) {
            return Err(Error::Config(format!("line {}: unknown key `{k}`", lineno + 1)));
        }
        if map.insert(k.clone(), v.trim().to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key `{k}`", lineno + 1)));
        }
    }
    Ok(map)
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let given = parse_pairs(text)?;
        let mut merged: BTreeMap<String, String> = BTreeMap::new();
        let base = GainConfig::example();
        if !given.keys().any(|k| is_gain_key(k)) {
            for (i, c) in base.c.iter().enumerate() {
                merged.insert(format!("c{}", i + 1), c.to_string());
            }
        }
        for (k, v) in [
            ("kappa_n", base.kappa_n),
            ("lambda", base.lambda),
            ("beta", base.beta),
            ("omega", base.omega),
        ] {
            merged.insert(k.to_string(), v.to_string());
        }
        merged.extend(given.clone());
        let opt = |k: &str| given.get(k).map(|v| number(k, v)).transpose();
        Ok(Self {
            gains: GainConfig::from_map(&merged)?,
            x0: given.get("x0").map(|v| list("x0", v)).transpose()?,
            reference: given.get("reference").map(|v| Reference::parse(v)).transpose()?,
            theta0: opt("theta0")?,
            delta_est: opt("delta_est")?,
            eta1: given.get("eta1").map(|v| list("eta1", v)).transpose()?,
            sigma1: opt("sigma1")?,
            hysteresis: opt("hysteresis")?,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Psi bound for this run: the default bound, with `eta1` / `sigma1`
    /// replaced where the config overrides them.
    pub fn psi_bound(&self, sys: &SystemModel, reference: &Reference) -> Result<PsiBound> {
        let (eta1, sigma1) = match (&self.eta1, self.sigma1) {
            (Some(e), Some(s)) => (ClassK::polynomial(e.clone())?, s),
            _ => {
                let d = default_psi_bound(sys, &self.gains, reference)?;
                let eta1 = match &self.eta1 {
                    Some(e) => ClassK::polynomial(e.clone())?,
                    None => d.eta1,
                };
                (eta1, self.sigma1.unwrap_or(d.sigma1))
            }
        };
        PsiBound::new(eta1, sigma1)
    }

    pub fn lyapunov(&self, sys: &SystemModel, reference: &Reference) -> Result<LyapunovSpec> {
        LyapunovSpec::from_gains(self.psi_bound(sys, reference)?, &self.gains)
    }
}
