use std::path::Path;
use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nonovershoot"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn run_writes_trajectory_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("traj.csv");
    let o = bin(&[
        "run",
        "--system",
        "chain:2",
        "--controller",
        "nominal",
        "--t-end",
        "1",
        "--dt",
        "0.01",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,x1,x2,h1,h2,u,yr,H,mode"));
    assert_eq!(lines.count(), 101);
    assert!(text.lines().nth(1).unwrap().ends_with(",nominal"));
}

#[test]
fn bad_inputs_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    assert!(!bin(&["run", "--controller", "pid", "--t-end", "1"]).status.success());
    assert!(!bin(&["run", "--system", "pendulum", "--t-end", "1"]).status.success());
    let cfg = write(dir.path(), "bad.cfg", "gamma=2\n");
    let o = bin(&["run", "--config", &cfg, "--t-end", "1"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown key"));
    // dt too coarse for the dither
    let o = bin(&["run", "--dt", "0.01", "--t-end", "1"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("dither"));
}

#[test]
fn check_reports_violations() {
    let dir = tempfile::tempdir().unwrap();
    let ok = bin(&["check", "--mode", "ordered"]);
    assert!(ok.status.success());
    assert!(String::from_utf8_lossy(&ok.stdout).contains("valid"));
    let cfg = write(dir.path(), "g.cfg", "lambda=1\nbeta=0.5\n");
    let bad = bin(&["check", "--config", &cfg]);
    assert!(!bad.status.success());
    let text = String::from_utf8_lossy(&bad.stdout).into_owned();
    assert!(text.contains("lambda*beta >= 1/xi1: 0.5 >= 1"), "{text}");
}

#[test]
fn sweep_emits_one_row_per_point() {
    let o = bin(&[
        "sweep",
        "--controller",
        "nominal",
        "--kappa-n",
        "1.1,3",
        "--x0",
        "-0.5,0;-0.2,0",
        "--t-end",
        "2",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8_lossy(&o.stdout).into_owned();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "scenario_id,gains,max_h1,t_at_max,tail_abs_h1,envelope_violation,min_H,status");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("p0[x0=-0.5;0],c1=2;c2=1.5;kappa_n=1.1;"));
    assert!(lines[2].starts_with("p1[x0=-0.2;0],"));
    assert!(lines[3].contains("kappa_n=3;"));
}

#[test]
fn repeated_runs_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "r.cfg", "eta1=1e-9\nsigma1=0.3\n");
    let mut outputs = Vec::new();
    for i in 0..2 {
        let out = dir.path().join(format!("{i}.csv"));
        let o = bin(&["run", "--config", &cfg, "--t-end", "2", "--out", out.to_str().unwrap()]);
        assert!(o.status.success());
        outputs.push(std::fs::read(out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn compare_safety_and_average_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "r.cfg", "eta1=1e-9\nsigma1=0.3\n");
    let traj = dir.path().join("traj");

    let o = bin(&["compare", "--config", &cfg, "--t-end", "2", "--traj-dir", traj.to_str().unwrap()]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout).into_owned();
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().nth(2).unwrap().starts_with("nussbaum,"));
    assert!(traj.join("es.csv").exists() && traj.join("nussbaum.csv").exists());

    let o = bin(&["safety", "--config", &cfg, "--t-end", "2", "--traj-dir", traj.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 3);
    let s0 = std::fs::read_to_string(traj.join("safety0.csv")).unwrap();
    assert!(s0.lines().skip(1).all(|l| l.ends_with(",nominal") || l.ends_with(",override")));

    let o = bin(&["average", "--config", &cfg, "--omegas", "60,240", "--horizon", "1"]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout).into_owned();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "omega,max_deviation,blowup_flag");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].ends_with(",0"));
}
