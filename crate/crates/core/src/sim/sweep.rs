//! Parameter sweeps over gains, dither frequency and initial state.

use rayon::prelude::*;

use super::csv::{report_row, REPORT_HEADER};
use super::metrics::{DeltaEstimate, OvershootReport};
use super::runner::{run_scenario, ControllerKind, ControllerSetup, Termination};
use crate::control::LyapunovSpec;
use crate::model::{Scenario, SystemModel};
use crate::synth::{check_gains, default_psi_bound, GainConfig, GainMode, PsiBound, Verdict};
use crate::Result;

/// Axes of the cartesian grid. An empty axis yields an empty table.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub c: Vec<Vec<f64>>,
    pub kappa_n: Vec<f64>,
    pub omega: Vec<f64>,
    pub lambda: Vec<f64>,
    pub beta: Vec<f64>,
    pub x0: Vec<Vec<f64>>,
}

impl SweepGrid {
    /// Single-point grid at `gains` and `x0`; override axes from there.
    pub fn around(gains: &GainConfig, x0: &[f64]) -> Self {
        Self {
            c: vec![gains.c.clone()],
            kappa_n: vec![gains.kappa_n],
            omega: vec![gains.omega],
            lambda: vec![gains.lambda],
            beta: vec![gains.beta],
            x0: vec![x0.to_vec()],
        }
    }

    pub fn empty() -> Self {
        Self {
            c: vec![],
            kappa_n: vec![],
            omega: vec![],
            lambda: vec![],
            beta: vec![],
            x0: vec![],
        }
    }

    pub fn len(&self) -> usize {
        self.c.len() * self.kappa_n.len() * self.omega.len() * self.lambda.len() * self.beta.len() * self.x0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid points in row-major order, `x0` varying fastest.
    pub fn points(&self) -> Vec<(GainConfig, Vec<f64>)> {
        let mut out = Vec::with_capacity(self.len());
        for c in &self.c {
            for &kappa_n in &self.kappa_n {
                for &omega in &self.omega {
                    for &lambda in &self.lambda {
                        for &beta in &self.beta {
                            for x0 in &self.x0 {
                                let g = GainConfig {
                                    c: c.clone(),
                                    kappa_n,
                                    lambda,
                                    beta,
                                    omega,
                                };
                                out.push((g, x0.clone()));
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// Where each grid point's Psi bound comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundSource {
    /// The system's default bound, recomputed for each point's gains.
    Default,
    Fixed(PsiBound),
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub index: usize,
    pub gains: GainConfig,
    pub x0: Vec<f64>,
    pub verdict: Verdict,
    /// `None` for points that fail their gain check or whose setup errors.
    pub report: Option<OvershootReport>,
    pub status: String,
}

impl SweepRow {
    pub fn scenario_id(&self) -> String {
        let x0: Vec<String> = self.x0.iter().map(|v| v.to_string()).collect();
        format!("p{}[x0={}]", self.index, x0.join(";"))
    }

    pub fn csv(&self) -> String {
        report_row(&self.scenario_id(), &self.gains.compact(), self.report.as_ref(), &self.status)
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub kind: ControllerKind,
    pub mode: GainMode,
    pub bound: BoundSource,
    pub delta: DeltaEstimate,
}

fn point_mode(mode: &GainMode, scenario: &Scenario, x0: &[f64], n: usize) -> GainMode {
    match mode {
        GainMode::SafeInit { .. } => GainMode::SafeInit {
            x0: x0.to_vec(),
            yr0: scenario.reference.stack(0.0, n),
        },
        m => m.clone(),
    }
}

fn run_point(sys: &SystemModel, spec: &SweepSpec, scenario: &Scenario, gains: &GainConfig, x0: &[f64]) -> Result<(OvershootReport, Termination)> {
    let lyapunov = if spec.kind.uses_dither() {
        let bound = match &spec.bound {
            BoundSource::Default => default_psi_bound(sys, gains, &scenario.reference)?,
            BoundSource::Fixed(b) => b.clone(),
        };
        Some(LyapunovSpec::from_gains(bound, gains)?)
    } else {
        None
    };
    let mut setup = ControllerSetup::new(spec.kind, gains.clone(), lyapunov);
    setup.delta = spec.delta;
    // refine the step by an integer factor when this point's dither needs it
    let mut sc = Scenario {
        x0: x0.to_vec(),
        ..scenario.clone()
    };
    if spec.kind.uses_dither() {
        let max_dt = 2.0 * std::f64::consts::PI / (40.0 * gains.omega);
        sc.dt /= (sc.dt / max_dt).ceil().max(1.0);
    }
    let out = run_scenario(sys, &setup, &sc)?;
    Ok((out.report, out.termination))
}

/// Runs every grid point that passes its gain check. Points run in
/// parallel; rows come back in grid order. For dithered controllers the
/// base step is divided by the smallest integer that resolves each
/// point's dither frequency.
pub fn sweep(sys: &SystemModel, spec: &SweepSpec, scenario: &Scenario, grid: &SweepGrid) -> Vec<SweepRow> {
    let n = sys.dim();
    grid.points()
        .into_par_iter()
        .enumerate()
        .map(|(index, (gains, x0))| {
            let verdict = check_gains(sys, &gains, &point_mode(&spec.mode, scenario, &x0, n));
            let (report, status) = if !verdict.is_valid() {
                let why: Vec<String> = verdict.violations().map(|c| c.to_string()).collect();
                let why = if why.is_empty() { verdict.errors.join("; ") } else { why.join("; ") };
                (None, format!("invalid: {why}"))
            } else {
                match run_point(sys, spec, scenario, &gains, &x0) {
                    Ok((rep, term)) => (Some(rep), term.to_string()),
                    Err(e) => (None, format!("error: {e}")),
                }
            };
            SweepRow {
                index,
                gains,
                x0,
                verdict,
                report,
                status: status.replace(',', ";").replace('\n', " "),
            }
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv());
        out.push('\n');
    }
    out
}
