//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any criterion fails.

mod common;

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use common::{random_poly_system, richardson};
use nonovershoot::averaging::{deviation_study, v_coefficient, AveragedSystem, BracketGain, DeviationStudy};
use nonovershoot::control::LyapunovSpec;
use nonovershoot::model::{example_system, Reference, ReferenceStack, Scenario, SystemModel};
use nonovershoot::sim::csv::trajectory_csv;
use nonovershoot::sim::sweep::{sweep, BoundSource, SweepGrid, SweepSpec};
use nonovershoot::sim::{run_scenario, ControllerKind, ControllerSetup, DeltaEstimate, RunOutput};
use nonovershoot::synth::{
    c_lower_bounds, default_psi_bound, virtual_controllers, ErrorState, GainConfig, GainMode,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const D2_CORE: f64 = 0.30303;
const D1_BOUND: f64 = 1.3484;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

struct Ctx {
    sys: SystemModel,
    gains: GainConfig,
    spec: LyapunovSpec,
    study: DeviationStudy,
    delta: DeltaEstimate,
    es: RunOutput,
    es_seconds: f64,
}

fn es_setup(ctx_gains: &GainConfig, spec: &LyapunovSpec, delta: DeltaEstimate) -> ControllerSetup {
    let mut s = ControllerSetup::new(ControllerKind::Es, ctx_gains.clone(), Some(spec.clone()));
    s.delta = delta;
    s
}

fn status(run: &RunOutput) -> String {
    run.termination.to_string()
}

fn not_increasing(seq: &[f64], slack: f64) -> bool {
    seq.iter().all(|v| v.is_finite()) && seq.windows(2).all(|w| w[1] <= w[0] + slack * w[0].abs())
}

fn setup() -> Ctx {
    let sys = example_system();
    let gains = GainConfig::example();
    let bound = default_psi_bound(&sys, &gains, &Reference::SINE04).unwrap();
    let spec = LyapunovSpec::from_gains(bound, &gains).unwrap();
    let study_scenario = Scenario { t_end: 10.0, ..Scenario::example() };
    let study = deviation_study(&sys, &spec, &gains, &study_scenario, &[60.0, 240.0, 960.0], BracketGain::Full).unwrap();
    let delta = DeltaEstimate::from_study(&study, gains.omega, DeltaEstimate::configured(0.1));
    let started = Instant::now();
    let es = run_scenario(&sys, &es_setup(&gains, &spec, delta), &Scenario::example()).unwrap();
    let es_seconds = started.elapsed().as_secs_f64();
    Ctx { sys, gains, spec, study, delta, es, es_seconds }
}

fn criterion1(c: &Ctx) -> Outcome {
    let r = &c.es.report;
    outcome(
        c.es.completed() && r.max_h1 <= 0.45 && c.es_seconds < 10.0,
        format!("status={} max_h1={:.6} (<= 0.45) runtime={:.2}s (< 10)", status(&c.es), r.max_h1, c.es_seconds),
    )
}

fn criterion2(c: &Ctx) -> Outcome {
    let tr = &c.es.trajectory;
    let tail = (0..tr.len())
        .filter(|&k| tr.t[k] >= 40.0)
        .map(|k| (tr.x[k][0] - tr.yr[k]).abs())
        .fold(0.0, f64::max);
    let bound = D1_BOUND + c.delta.value;
    outcome(
        c.es.completed() && tail <= bound && tail <= 0.5,
        format!(
            "status={} tail_abs_h1[40,50]={:.6} (<= {:.4} and <= 0.5) delta={} ({})",
            status(&c.es),
            tail,
            bound,
            c.delta.value,
            c.delta.source
        ),
    )
}

fn criterion3(c: &Ctx) -> Outcome {
    let avg = AveragedSystem {
        sys: &c.sys,
        spec: &c.spec,
        gains: &c.gains,
        reference: Reference::SINE04,
        bracket: BracketGain::Full,
    };
    let dt = 1e-3;
    let traj = match avg.simulate(&[-0.5, -0.6], 50.0, dt) {
        Ok(t) => t,
        Err(e) => return outcome(false, format!("averaged run failed: {e}")),
    };
    let limsup = traj
        .iter()
        .enumerate()
        .filter(|(k, _)| *k as f64 * dt >= 40.0)
        .map(|(_, h)| h[0].hypot(h[1]))
        .fold(0.0, f64::max);
    let bound = (1.0 / (1.1 * 0.5f64)).sqrt() + 0.01;
    let level = 1.0 / (2.0 * c.gains.kappa_n * (c.gains.c_min() - 1.0));
    let mut checked = 0;
    let mut bad = 0;
    for (k, h) in traj.iter().enumerate() {
        let w = 0.5 * (h[0] * h[0] + h[1] * h[1]);
        if w > 1.01 * level {
            checked += 1;
            let f = avg.rhs(k as f64 * dt, h).unwrap();
            if h[0] * f[0] + h[1] * f[1] >= 0.0 {
                bad += 1;
            }
        }
    }
    outcome(
        limsup <= bound && bad == 0,
        format!("limsup|hbar|[40,50]={limsup:.6} (<= {bound:.4}); dW/dt>=0 at {bad} of {checked} samples above 1.01x level"),
    )
}

fn criterion4(c: &Ctx) -> Outcome {
    let d = &c.study.deviations;
    let pass = not_increasing(d, 0.05) && d[2] <= 0.5 * d[0];
    outcome(
        pass,
        format!(
            "deviations (omega 60/240/960) = {:.6}/{:.6}/{:.6}, blowups={:?}; need non-increasing within 5% and d960 <= 0.5 d60",
            d[0], d[1], d[2], c.study.blowups
        ),
    )
}

fn criterion5(c: &Ctx) -> Outcome {
    let sc = Scenario { x0: vec![0.2, 0.0], ..Scenario::example() };
    let run = run_scenario(&c.sys, &es_setup(&c.gains, &c.spec, c.delta), &sc).unwrap();
    let tr = &run.trajectory;
    let h0 = &tr.h[0];
    let h0_ok = (h0[0] - 0.2).abs() < 1e-12 && (h0[1] - 0.8).abs() < 1e-12;
    let mut worst = f64::NEG_INFINITY;
    for k in 0..tr.len() {
        let t = tr.t[k];
        let env = D2_CORE + c.delta.value + 0.2 * (-2.0 * t).exp() + 1.6 * (-1.5 * t).exp() + 0.1;
        worst = worst.max(tr.x[k][0] - tr.yr[k] - env);
    }
    outcome(
        run.completed() && h0_ok && worst <= 0.0,
        format!(
            "status={} h(0)=[{:.3},{:.3}] max(h1 - envelope)={:.6} (<= 0)",
            status(&run),
            h0[0],
            h0[1],
            worst
        ),
    )
}

fn criterion6(c: &Ctx) -> Outcome {
    let setup = ControllerSetup::new(ControllerKind::Nussbaum, c.gains.clone(), None);
    let nuss = run_scenario(&c.sys, &setup, &Scenario::example()).unwrap();
    let n = nuss.report.max_h1;
    let e = c.es.report.max_h1;
    outcome(
        nuss.completed() && c.es.completed() && n > 0.5 && n > 3.0 * e,
        format!(
            "nussbaum status={} max_h1={:.6} (> 0.5); es status={} max_h1={:.6} (nussbaum > 3x es)",
            status(&nuss),
            n,
            status(&c.es),
            e
        ),
    )
}

fn criterion7(c: &Ctx) -> Outcome {
    let mut setup = ControllerSetup::new(ControllerKind::SafetyFilter, c.gains.clone(), Some(c.spec.clone()));
    setup.delta = c.delta;
    let floor = -(D2_CORE + c.delta.value + 0.1);
    let mut pass = true;
    let mut parts = Vec::new();
    for x0 in [vec![-0.45, 0.0], vec![0.2, 0.0]] {
        let sc = Scenario { x0: x0.clone(), ..Scenario::example() };
        let run = run_scenario(&c.sys, &setup, &sc).unwrap();
        let tr = &run.trajectory;
        let mode_ok = (0..tr.len()).all(|k| (tr.mode[k] == "nominal") == (tr.margin[k] >= 0.0));
        let reg = (0..tr.len())
            .filter(|&k| tr.t[k] >= 30.0 && tr.mode[k] == "nominal")
            .map(|k| tr.x[k][0].abs())
            .fold(0.0, f64::max);
        let ok = run.completed() && run.report.min_h >= floor && mode_ok && reg <= 0.1;
        pass &= ok;
        parts.push(format!(
            "x0={x0:?}: status={} min_H={:.6} (>= {floor:.4}) mode_ok={mode_ok} max|x1| nominal t>=30 = {reg:.6} (<= 0.1)",
            status(&run),
            run.report.min_h
        ));
    }
    outcome(pass, parts.join("; "))
}

fn criterion8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst_alpha: f64 = 0.0;
    for n in 2..=4 {
        let sys = random_poly_system(&mut rng, n);
        let g = GainConfig {
            c: (0..n).map(|_| rng.gen_range(1.1..3.0)).collect(),
            ..GainConfig::example()
        };
        for _ in 0..100 {
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let yr = ReferenceStack::new((0..=n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            let vc = virtual_controllers(&sys, &x, &yr, &g).unwrap();
            for (i, a) in vc.iter().enumerate() {
                for k in 0..=i {
                    let fx = |s: f64| {
                        let mut z = x.clone();
                        z[k] = s;
                        virtual_controllers(&sys, &z, &yr, &g).unwrap()[i].value
                    };
                    let fy = |s: f64| {
                        let mut v = yr.values.clone();
                        v[k] = s;
                        virtual_controllers(&sys, &x, &ReferenceStack::new(v).unwrap(), &g).unwrap()[i].value
                    };
                    for (exact, fd) in [(a.dx[k], richardson(&fx, x[k], 1e-3)), (a.dyr[k], richardson(&fy, yr.values[k], 1e-3))] {
                        worst_alpha = worst_alpha.max((exact - fd).abs() / exact.abs().max(fd.abs()).max(1.0));
                    }
                }
            }
        }
    }

    let g = GainConfig::example();
    let spec = LyapunovSpec::from_gains(default_psi_bound(&example_system(), &g, &Reference::SINE04).unwrap(), &g).unwrap();
    let mut worst_grad: f64 = 0.0;
    for _ in 0..100 {
        let h: Vec<f64> = (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let exact = spec.grad_v_hn(&ErrorState { h: h.clone() });
        let fd = richardson(&|s| spec.lyap_v(&ErrorState { h: vec![h[0], s] }).unwrap(), h[1], 1e-4);
        worst_grad = worst_grad.max((exact - fd).abs() / exact.abs().max(fd.abs()).max(1.0));
    }

    let yr0 = Reference::SINE04.stack(0.0, 2);
    let lb = c_lower_bounds(&example_system(), &[-0.5, 0.0], &yr0, &g).unwrap()[0];
    let v = v_coefficient(&f64::cos, &f64::sin, 2.0 * PI).unwrap();
    outcome(
        worst_alpha <= 1e-6 && worst_grad <= 1e-5 && (lb - 0.8).abs() <= 1e-12 && (v - 0.5).abs() <= 1e-9,
        format!(
            "alpha partials rel err {worst_alpha:.2e} (<= 1e-6); grad V rel err {worst_grad:.2e} (<= 1e-5); lower c1 = {lb} (0.8 +- 1e-12); v(cos,sin) = {v} (0.5 +- 1e-9)"
        ),
    )
}

fn criterion9(c: &Ctx) -> Outcome {
    let spec = SweepSpec {
        kind: ControllerKind::Es,
        mode: GainMode::Basic,
        bound: BoundSource::Default,
        delta: c.delta,
    };
    let base = Scenario::example();
    let mut kgrid = SweepGrid::around(&c.gains, &base.x0);
    kgrid.kappa_n = vec![1.1, 3.0, 10.0];
    let mut wgrid = SweepGrid::around(&c.gains, &base.x0);
    wgrid.omega = vec![60.0, 240.0];
    let krows = sweep(&c.sys, &spec, &base, &kgrid);
    let wrows = sweep(&c.sys, &spec, &base, &wgrid);
    let done = |rows: &[nonovershoot::sim::sweep::SweepRow]| rows.iter().all(|r| r.status == "ok");
    let metric = |rows: &[nonovershoot::sim::sweep::SweepRow], f: fn(&nonovershoot::sim::OvershootReport) -> f64| {
        rows.iter().map(|r| r.report.as_ref().map_or(f64::NAN, f)).collect::<Vec<f64>>()
    };
    let kmax = metric(&krows, |r| r.max_h1);
    let ktail = metric(&krows, |r| r.tail_abs_h1);
    let wmax = metric(&wrows, |r| r.max_h1);
    let wtail = metric(&wrows, |r| r.tail_abs_h1);
    let pass = done(&krows)
        && done(&wrows)
        && not_increasing(&kmax, 0.1)
        && not_increasing(&ktail, 0.1)
        && not_increasing(&wmax, 0.1)
        && not_increasing(&wtail, 0.1);
    let st = |rows: &[nonovershoot::sim::sweep::SweepRow]| rows.iter().map(|r| r.status.clone()).collect::<Vec<_>>();
    outcome(
        pass,
        format!(
            "kappa 1.1/3/10: status={:?} max_h1={kmax:.4?} tail={ktail:.4?}; omega 60/240: status={:?} max_h1={wmax:.4?} tail={wtail:.4?}; need non-increasing within 10%",
            st(&krows),
            st(&wrows)
        ),
    )
}

fn criterion10(c: &Ctx) -> Outcome {
    let setup = es_setup(&c.gains, &c.spec, c.delta);
    let again = run_scenario(&c.sys, &setup, &Scenario::example()).unwrap();
    let identical = trajectory_csv(&again.trajectory) == trajectory_csv(&c.es.trajectory);
    let half = run_scenario(&c.sys, &setup, &Scenario { dt: 5e-4, ..Scenario::example() }).unwrap();
    let (a, b) = (c.es.report.max_h1, half.report.max_h1);
    let change = (a - b).abs() / a.abs();
    outcome(
        identical && c.es.completed() && half.completed() && change < 0.01,
        format!(
            "bit-identical={identical}; dt=1e-3 status={} max_h1={a:.6}; dt=5e-4 status={} max_h1={b:.6}; relative change {change:.2e} (< 1%)",
            status(&c.es),
            status(&half)
        ),
    )
}

fn main() -> ExitCode {
    let ctx = setup();
    let results: Vec<(u8, &str, Outcome)> = vec![
        (1, "example-scenario nonovershooting", criterion1(&ctx)),
        (2, "ultimate residual", criterion2(&ctx)),
        (3, "averaged-system ultimate bound", criterion3(&ctx)),
        (4, "averaging convergence in omega", criterion4(&ctx)),
        (5, "decreasing-gain envelope, unsafe init", criterion5(&ctx)),
        (6, "nussbaum contrast", criterion6(&ctx)),
        (7, "safety filter", criterion7(&ctx)),
        (8, "synthesis oracles", criterion8()),
        (9, "sweep monotonicity", criterion9(&ctx)),
        (10, "determinism and step halving", criterion10(&ctx)),
    ];
    let mut failed = 0;
    for (id, name, o) in &results {
        println!("criterion {id:>2} {}: {name} | {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
