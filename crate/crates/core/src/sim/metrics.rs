use std::fmt;

use super::runner::Trajectory;
use crate::synth::{BoundReport, GainConfig};

/// Fraction of the horizon treated as the "ultimate" tail window.
pub const TAIL_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeltaSource {
    /// Measured by a deviation study at this dither frequency.
    Study { omega: f64 },
    Configured,
}

impl fmt::Display for DeltaSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeltaSource::Study { omega } => write!(f, "study(omega={omega})"),
            DeltaSource::Configured => write!(f, "configured"),
        }
    }
}

/// Estimate of the distance between the real and the averaged trajectories.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaEstimate {
    pub value: f64,
    pub source: DeltaSource,
}

impl Default for DeltaEstimate {
    fn default() -> Self {
        Self::configured(0.1)
    }
}

impl DeltaEstimate {
    pub fn configured(value: f64) -> Self {
        Self {
            value,
            source: DeltaSource::Configured,
        }
    }

    /// Picks the study entry for `omega`; falls back to `fallback` when the
    /// study has no finite value there.
    pub fn from_study(study: &crate::averaging::DeviationStudy, omega: f64, fallback: DeltaEstimate) -> Self {
        match study.deviation_for(omega) {
            Some(v) if v.is_finite() => Self {
                value: v,
                source: DeltaSource::Study { omega },
            },
            _ => fallback,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OvershootReport {
    /// `max_t (x_1 - y_r)`.
    pub max_h1: f64,
    pub t_at_max: f64,
    /// `max |x_1 - y_r|` over the final 20% of the sampled horizon.
    pub tail_abs_h1: f64,
    /// Largest excess of `h_1` over the decaying envelope, clipped at 0.
    /// `None` when the gain chain has no envelope.
    pub envelope_violation: Option<f64>,
    pub min_h: f64,
    pub max_abs_u: f64,
    pub delta: DeltaEstimate,
}

/// Overshoot metrics of a sampled run. `h_1` is taken as `x_1 - y_r`; the
/// envelope uses the trajectory's own initial error coordinates.
pub fn overshoot_report(
    traj: &Trajectory,
    gains: &GainConfig,
    bounds: Option<&BoundReport>,
    delta: DeltaEstimate,
) -> OvershootReport {
    let mut rep = OvershootReport {
        max_h1: f64::NAN,
        t_at_max: f64::NAN,
        tail_abs_h1: f64::NAN,
        envelope_violation: None,
        min_h: f64::NAN,
        max_abs_u: f64::NAN,
        delta,
    };
    let Some((&t0, &t_last)) = traj.t.first().zip(traj.t.last()) else {
        return rep;
    };
    let h1 = |k: usize| traj.x[k][0] - traj.yr[k];

    let mut max = f64::NEG_INFINITY;
    for k in 0..traj.len() {
        if h1(k) > max {
            max = h1(k);
            rep.t_at_max = traj.t[k];
        }
    }
    rep.max_h1 = max;

    let tail_start = t_last - TAIL_FRACTION * (t_last - t0);
    rep.tail_abs_h1 = (0..traj.len())
        .filter(|&k| traj.t[k] >= tail_start - 1e-12)
        .map(|k| h1(k).abs())
        .fold(0.0, f64::max);
    rep.min_h = traj.margin.iter().copied().fold(f64::INFINITY, f64::min);
    rep.max_abs_u = traj.u.iter().map(|u| u.abs()).fold(0.0, f64::max);

    rep.envelope_violation = bounds.and_then(|b| {
        let h0 = &traj.h[0];
        let mut worst = 0.0_f64;
        for k in 0..traj.len() {
            let env = b.envelope(&gains.c, h0, delta.value, traj.t[k] - t0)?;
            worst = worst.max(h1(k) - env);
        }
        Some(worst)
    });
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::bound_report;

    fn traj_from(t: &[f64], x1: &[f64], yr: &[f64], h0: Vec<f64>) -> Trajectory {
        let n = t.len();
        Trajectory {
            t: t.to_vec(),
            x: x1.iter().map(|v| vec![*v, 0.0]).collect(),
            h: std::iter::once(h0).chain((1..n).map(|_| vec![0.0, 0.0])).collect(),
            u: vec![0.0; n],
            yr: yr.to_vec(),
            margin: yr.iter().zip(x1).map(|(r, x)| r - x).collect(),
            mode: vec!["es"; n],
            theta: vec![],
        }
    }

    #[test]
    fn on_reference_has_no_overshoot() {
        let t: Vec<f64> = (0..=100).map(|k| k as f64 * 0.1).collect();
        let yr: Vec<f64> = t.iter().map(|t| t.sin()).collect();
        let tr = traj_from(&t, &yr, &yr, vec![0.0, 0.0]);
        let g = GainConfig::example();
        let rep = overshoot_report(&tr, &g, bound_report(&g).ok().as_ref(), DeltaEstimate::default());
        assert_eq!(rep.max_h1, 0.0);
        assert_eq!(rep.tail_abs_h1, 0.0);
        assert_eq!(rep.envelope_violation, Some(0.0));
        assert_eq!(rep.min_h, 0.0);
    }

    #[test]
    fn envelope_at_start_for_unsafe_init() {
        let g = GainConfig::example();
        let b = bound_report(&g).unwrap();
        let env0 = b.envelope(&g.c, &[0.2, 0.8], 0.0, 0.0).unwrap();
        assert!((env0 - 2.103030303).abs() < 1e-8, "{env0}");
        let env_inf = b.envelope(&g.c, &[0.2, 0.8], 0.1, 1e3).unwrap();
        assert!((env_inf - (0.303030303 + 0.1)).abs() < 1e-8);
    }

    #[test]
    fn metrics_pick_extremes() {
        let t = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let x1 = [0.0, 0.5, 0.2, -0.1, 0.05, -0.3];
        let yr = [0.0; 6];
        let tr = traj_from(&t, &x1, &yr, vec![0.0, 0.0]);
        let g = GainConfig::example();
        let rep = overshoot_report(&tr, &g, None, DeltaEstimate::default());
        assert_eq!(rep.max_h1, 0.5);
        assert_eq!(rep.t_at_max, 1.0);
        // tail window is [4, 5]
        assert_eq!(rep.tail_abs_h1, 0.3);
        assert_eq!(rep.min_h, -0.5);
        assert_eq!(rep.envelope_violation, None);
    }

    #[test]
    fn violation_is_excess_over_envelope() {
        let t = [0.0, 1.0];
        let tr = traj_from(&t, &[0.0, 1.0], &[0.0, 0.0], vec![0.0, 0.0]);
        let g = GainConfig::example();
        let b = bound_report(&g).unwrap();
        let rep = overshoot_report(&tr, &g, Some(&b), DeltaEstimate::configured(0.1));
        let expect = 1.0 - (b.d2_core + 0.1);
        assert!((rep.envelope_violation.unwrap() - expect).abs() < 1e-12);
    }
}
