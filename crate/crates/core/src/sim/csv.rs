//! CSV rendering. Floats are written with 17 significant digits.

use super::metrics::OvershootReport;
use super::runner::Trajectory;

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn trajectory_header(n: usize) -> String {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=n).map(|i| format!("x{i}")));
    cols.extend((1..=n).map(|i| format!("h{i}")));
    cols.extend(["u", "yr", "H", "mode"].map(String::from));
    cols.join(",")
}

pub fn trajectory_csv(traj: &Trajectory) -> String {
    let n = traj.x.first().map_or(0, Vec::len);
    let mut out = trajectory_header(n);
    out.push('\n');
    for k in 0..traj.len() {
        let mut row: Vec<String> = vec![fmt_f64(traj.t[k])];
        row.extend(traj.x[k].iter().map(|v| fmt_f64(*v)));
        row.extend(traj.h[k].iter().map(|v| fmt_f64(*v)));
        row.push(fmt_f64(traj.u[k]));
        row.push(fmt_f64(traj.yr[k]));
        row.push(fmt_f64(traj.margin[k]));
        row.push(traj.mode[k].to_string());
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub const REPORT_HEADER: &str = "scenario_id,gains,max_h1,t_at_max,tail_abs_h1,envelope_violation,min_H,status";

pub fn report_row(scenario_id: &str, gains: &str, report: Option<&OvershootReport>, status: &str) -> String {
    let metrics = match report {
        Some(r) => [
            r.max_h1,
            r.t_at_max,
            r.tail_abs_h1,
            r.envelope_violation.unwrap_or(f64::NAN),
            r.min_h,
        ]
        .map(fmt_f64)
        .join(","),
        None => ["NaN"; 5].join(","),
    };
    format!("{scenario_id},{gains},{metrics},{status}")
}
