use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use nonovershoot::averaging::{deviation_study, BracketGain};
use nonovershoot::model::{system_by_id, Scenario, SystemModel};
use nonovershoot::sim::config::RunConfig;
use nonovershoot::sim::csv::{report_row, trajectory_csv, REPORT_HEADER};
use nonovershoot::sim::sweep::{sweep, sweep_csv, BoundSource, SweepGrid, SweepSpec};
use nonovershoot::sim::{run_scenario, ControllerKind, ControllerSetup, DeltaEstimate, RunOutput};
use nonovershoot::synth::{check_gains, GainMode};
use nonovershoot::{Error, Result};

#[derive(Parser)]
#[command(name = "nonovershoot", version, about = "Nonovershooting extremum-seeking tracking simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// `example` or `chain:<n>`.
    #[arg(long, default_value = "example")]
    system: String,
    /// Flat key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 50.0)]
    t_end: f64,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Basic,
    SafeInit,
    Ordered,
}

#[derive(Clone, Copy, ValueEnum)]
enum BracketArg {
    Full,
    Half,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate one scenario and write its trajectory.
    Run {
        #[command(flatten)]
        common: Common,
        /// `es`, `nussbaum`, `nominal` or `safety-filter`.
        #[arg(long, default_value = "es")]
        controller: String,
        /// Also write the one-row report CSV here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Simulate a grid of gains and initial states; writes one report row per point.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "es")]
        controller: String,
        /// Gain chains, e.g. `2,1.5;3,2`.
        #[arg(long)]
        c: Option<String>,
        #[arg(long, value_delimiter = ',')]
        kappa_n: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        omega: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        lambda: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        beta: Vec<f64>,
        /// Initial states, e.g. `-0.5,0;0.2,0`.
        #[arg(long, allow_hyphen_values = true)]
        x0: Option<String>,
        #[arg(long, value_enum, default_value = "basic")]
        mode: ModeArg,
    },
    /// Extremum seeking against the Nussbaum controller on one scenario.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Directory for the two trajectory CSVs.
        #[arg(long)]
        traj_dir: Option<PathBuf>,
    },
    /// Safety-filter runs from several initial states.
    Safety {
        #[command(flatten)]
        common: Common,
        /// Initial states, e.g. `-0.45,0;0.2,0`.
        #[arg(long, default_value = "-0.45,0;0.2,0", allow_hyphen_values = true)]
        x0: String,
        #[arg(long)]
        traj_dir: Option<PathBuf>,
    },
    /// Distance between the dithered loop and its averaged system.
    Average {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "60,240,960")]
        omegas: Vec<f64>,
        #[arg(long, default_value_t = 10.0)]
        horizon: f64,
        #[arg(long, value_enum, default_value = "full")]
        bracket: BracketArg,
    },
    /// Check the gain conditions and print the verdict.
    Check {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "basic")]
        mode: ModeArg,
    },
}

struct Context {
    sys: SystemModel,
    cfg: RunConfig,
    scenario: Scenario,
}

impl Context {
    fn new(common: &Common) -> Result<Self> {
        let sys = system_by_id(&common.system)?;
        let cfg = match &common.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let n = sys.dim();
        let base = Scenario::example();
        let x0 = cfg
            .x0
            .clone()
            .unwrap_or_else(|| if n == base.x0.len() { base.x0.clone() } else { vec![0.0; n] });
        let scenario = Scenario {
            x0,
            t_end: common.t_end,
            dt: common.dt,
            reference: cfg.reference.unwrap_or(base.reference),
        };
        Ok(Self { sys, cfg, scenario })
    }

    fn delta(&self) -> DeltaEstimate {
        self.cfg.delta_est.map(DeltaEstimate::configured).unwrap_or_default()
    }

    fn setup(&self, kind: ControllerKind) -> Result<ControllerSetup> {
        let lyapunov = if kind.uses_dither() {
            Some(self.cfg.lyapunov(&self.sys, &self.scenario.reference)?)
        } else {
            None
        };
        let mut s = ControllerSetup::new(kind, self.cfg.gains.clone(), lyapunov);
        s.theta0 = self.cfg.theta0.unwrap_or(0.0);
        s.hysteresis = self.cfg.hysteresis.unwrap_or(0.0);
        s.delta = self.delta();
        Ok(s)
    }

    fn gain_mode(&self, mode: ModeArg, x0: &[f64]) -> GainMode {
        match mode {
            ModeArg::Basic => GainMode::Basic,
            ModeArg::Ordered => GainMode::Ordered,
            ModeArg::SafeInit => GainMode::SafeInit {
                x0: x0.to_vec(),
                yr0: self.scenario.reference.stack(0.0, self.sys.dim()),
            },
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn list(raw: &str) -> Result<Vec<f64>> {
    raw.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| Error::Config(format!("not a number: `{v}`"))))
        .collect()
}

fn lists(raw: &str) -> Result<Vec<Vec<f64>>> {
    raw.split(';').map(list).collect()
}

fn summary(id: &str, out: &RunOutput) {
    let r = &out.report;
    eprintln!(
        "{id}: {} max_h1={:.6} t_at_max={:.3} tail_abs_h1={:.6} min_H={:.6} max|u|={:.3} envelope_violation={} delta={} ({})",
        out.termination,
        r.max_h1,
        r.t_at_max,
        r.tail_abs_h1,
        r.min_h,
        r.max_abs_u,
        r.envelope_violation.map_or("n/a".to_string(), |v| format!("{v:.6}")),
        r.delta.value,
        r.delta.source,
    );
}

fn row(id: &str, setup: &ControllerSetup, out: &RunOutput) -> String {
    report_row(id, &setup.gains.compact(), Some(&out.report), &out.termination.to_string())
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Run {
            common,
            controller,
            report,
        } => {
            let ctx = Context::new(&common)?;
            let setup = ctx.setup(controller.parse()?)?;
            let out = run_scenario(&ctx.sys, &setup, &ctx.scenario)?;
            summary(&controller, &out);
            emit(common.out.as_deref(), &trajectory_csv(&out.trajectory))?;
            if let Some(p) = report {
                std::fs::write(p, format!("{REPORT_HEADER}\n{}\n", row(&controller, &setup, &out)))?;
            }
        }
        Cmd::Sweep {
            common,
            controller,
            c,
            kappa_n,
            omega,
            lambda,
            beta,
            x0,
            mode,
        } => {
            let ctx = Context::new(&common)?;
            let mut grid = SweepGrid::around(&ctx.cfg.gains, &ctx.scenario.x0);
            if let Some(c) = c {
                grid.c = lists(&c)?;
            }
            if let Some(x0) = x0 {
                grid.x0 = lists(&x0)?;
            }
            for (axis, vals) in [
                (&mut grid.kappa_n, kappa_n),
                (&mut grid.omega, omega),
                (&mut grid.lambda, lambda),
                (&mut grid.beta, beta),
            ] {
                if !vals.is_empty() {
                    *axis = vals;
                }
            }
            let bound = match (&ctx.cfg.eta1, ctx.cfg.sigma1) {
                (None, None) => BoundSource::Default,
                _ => BoundSource::Fixed(ctx.cfg.psi_bound(&ctx.sys, &ctx.scenario.reference)?),
            };
            let spec = SweepSpec {
                kind: controller.parse()?,
                mode: ctx.gain_mode(mode, &ctx.scenario.x0),
                bound,
                delta: ctx.delta(),
            };
            let rows = sweep(&ctx.sys, &spec, &ctx.scenario, &grid);
            eprintln!("{} grid points", rows.len());
            emit(common.out.as_deref(), &sweep_csv(&rows))?;
        }
        Cmd::Compare { common, traj_dir } => {
            let ctx = Context::new(&common)?;
            let mut csv = format!("{REPORT_HEADER}\n");
            for kind in [ControllerKind::Es, ControllerKind::Nussbaum] {
                let setup = ctx.setup(kind)?;
                let out = run_scenario(&ctx.sys, &setup, &ctx.scenario)?;
                summary(kind.as_str(), &out);
                csv.push_str(&row(kind.as_str(), &setup, &out));
                csv.push('\n');
                if let Some(dir) = &traj_dir {
                    std::fs::create_dir_all(dir)?;
                    std::fs::write(dir.join(format!("{kind}.csv")), trajectory_csv(&out.trajectory))?;
                }
            }
            emit(common.out.as_deref(), &csv)?;
        }
        Cmd::Safety { common, x0, traj_dir } => {
            let ctx = Context::new(&common)?;
            let setup = ctx.setup(ControllerKind::SafetyFilter)?;
            let mut csv = format!("{REPORT_HEADER}\n");
            for (i, x0) in lists(&x0)?.into_iter().enumerate() {
                let sc = Scenario { x0, ..ctx.scenario.clone() };
                let out = run_scenario(&ctx.sys, &setup, &sc)?;
                let id = format!("safety{i}");
                summary(&id, &out);
                csv.push_str(&row(&id, &setup, &out));
                csv.push('\n');
                if let Some(dir) = &traj_dir {
                    std::fs::create_dir_all(dir)?;
                    std::fs::write(dir.join(format!("{id}.csv")), trajectory_csv(&out.trajectory))?;
                }
            }
            emit(common.out.as_deref(), &csv)?;
        }
        Cmd::Average {
            common,
            omegas,
            horizon,
            bracket,
        } => {
            let ctx = Context::new(&common)?;
            let spec = ctx.cfg.lyapunov(&ctx.sys, &ctx.scenario.reference)?;
            let sc = Scenario {
                t_end: horizon,
                ..ctx.scenario.clone()
            };
            let bracket = match bracket {
                BracketArg::Full => BracketGain::Full,
                BracketArg::Half => BracketGain::Half,
            };
            let study = deviation_study(&ctx.sys, &spec, &ctx.cfg.gains, &sc, &omegas, bracket)?;
            emit(common.out.as_deref(), &study.to_csv())?;
        }
        Cmd::Check { common, mode } => {
            let ctx = Context::new(&common)?;
            let verdict = check_gains(&ctx.sys, &ctx.cfg.gains, &ctx.gain_mode(mode, &ctx.scenario.x0));
            emit(common.out.as_deref(), &format!("{verdict}\n"))?;
            if !verdict.is_valid() {
                return Err(Error::InvalidGains("gain conditions violated".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

