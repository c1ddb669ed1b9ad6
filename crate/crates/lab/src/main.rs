//! `rotorlab`: command-line front end. Exit codes: 0 success or PASS,
//! 1 failed check or runtime error, 2 usage or configuration error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rotor_core::averaging::average_p2;
use rotor_core::phasepoly::rat;
use rotor_core::State;
use rotor_lab::config::{ExperimentConfig, ModelConfig};
use rotor_lab::experiments::{self as ex, ControlJson};
use rotor_lab::json::EffectiveJson;
use rotor_lab::output::{density_rows, out_dir, write_csv, write_json};
use rotor_lab::LabError;

#[derive(Parser, Debug)]
#[command(name = "rotorlab", version, about = "Three-rotor chain laboratory")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Experiment configuration (JSON); defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overridden by $ROTORLAB_OUT).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; required by randomized commands.
    #[arg(long)]
    seed: Option<u64>,
    /// Cap on worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    /// Print the effective configuration and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Symbolic effective dynamics of the middle rotor.
    Average {
        #[command(flatten)]
        common: Common,
    },
    /// One trajectory, written as CSV.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Initial state "q1,q2,q3,p1,p2,p3".
        #[arg(long)]
        from: Option<String>,
        #[arg(long)]
        total_time: Option<f64>,
    },
    /// Gibbs marginals and zero fluxes at equal temperatures.
    EquilibriumCheck {
        #[command(flatten)]
        common: Common,
        /// Common temperature T1 = T3 (torques set to zero).
        #[arg(long = "T")]
        temp: Option<f64>,
        #[arg(long)]
        total_time: Option<f64>,
    },
    /// Conditional drift of p2 against -alpha / omega^3.
    DriftScan {
        #[command(flatten)]
        common: Common,
        /// Comma-separated starting momenta.
        #[arg(long)]
        omegas: Option<String>,
        #[arg(long)]
        paths: Option<u64>,
    },
    /// Sampled Lyapunov drift certificate.
    LyapunovScan {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long = "A")]
        a: Option<f64>,
        #[arg(long)]
        k: Option<u32>,
        #[arg(long = "R")]
        r: Option<f64>,
        #[arg(long = "M")]
        m: Option<f64>,
        /// Fix c4 and skip the search over (A, M).
        #[arg(long)]
        c4: Option<f64>,
        /// Number of scan points.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Plan, synthesize and verify a deterministic control.
    Control {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        from: Option<String>,
        #[arg(long)]
        to: Option<String>,
        #[arg(long)]
        eps: Option<f64>,
        /// Comma-separated bridging lengths.
        #[arg(long)]
        delta: Option<String>,
    },
    /// Momentum histograms, p2 modes and dwell times.
    Hist {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        total_time: Option<f64>,
    },
    /// Heat fluxes from both baths.
    Flux {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        total_time: Option<f64>,
    },
}

fn parse_list(s: &str, what: &str) -> Result<Vec<f64>, LabError> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| LabError::Usage(format!("{what}: cannot parse {t:?} as a number"))))
        .collect()
}

fn parse_state(s: &str, what: &str) -> Result<[f64; 6], LabError> {
    let v = parse_list(s, what)?;
    v.try_into().map_err(|v: Vec<f64>| LabError::Usage(format!("{what}: expected 6 numbers q1,q2,q3,p1,p2,p3, got {}", v.len())))
}

fn f64_to_rat(x: f64, what: &str) -> Result<rotor_core::Rational, LabError> {
    // Decimal inputs become exact rationals over a power of ten.
    let text = format!("{x}");
    let (int, frac) = text.split_once('.').unwrap_or((&text, ""));
    let den = 10i64.checked_pow(frac.len() as u32).ok_or_else(|| LabError::Usage(format!("{what}: too many digits")))?;
    let num: i64 = format!("{int}{frac}").parse().map_err(|_| LabError::Usage(format!("{what}: unsupported value {x}")))?;
    Ok(rat(num, den))
}

fn load(common: &Common) -> Result<ExperimentConfig, LabError> {
    match &common.config {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn setup_threads(common: &Common) -> Result<(), LabError> {
    if let Some(n) = common.jobs {
        if n == 0 {
            return Err(LabError::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| LabError::Usage(e.to_string()))?;
    }
    Ok(())
}

/// Print the config and stop, or settle the seed.
enum Prep {
    Printed,
    Run(Option<u64>),
}

fn prepare(common: &Common, cfg: &mut ExperimentConfig, randomized: bool) -> Result<Prep, LabError> {
    if randomized {
        if let Some(s) = common.seed {
            cfg.resolve_seed(Some(s))?;
        }
    }
    if common.print_config {
        println!("{}", cfg.to_json());
        return Ok(Prep::Printed);
    }
    if randomized {
        let seed = cfg.resolve_seed(common.seed)?;
        return Ok(Prep::Run(Some(seed)));
    }
    Ok(Prep::Run(None))
}

fn verdict(pass: bool, what: &str, dir: &Path) -> Result<(), LabError> {
    let line = format!("{} {what} (report in {})", if pass { "PASS" } else { "FAIL" }, dir.display());
    println!("{line}");
    if pass {
        Ok(())
    } else {
        Err(LabError::Fail(what.into()))
    }
}

fn run(cli: Cli) -> Result<(), LabError> {
    match cli.cmd {
        Cmd::Average { common } => {
            setup_threads(&common)?;
            let mut cfg = load(&common)?;
            let Prep::Run(_) = prepare(&common, &mut cfg, false)? else { return Ok(()) };
            let model = ex::build_model(&cfg)?;
            let eff = average_p2(&model).map_err(|e| LabError::Compute(e.to_string()))?;
            let dir = out_dir(common.out.as_deref());
            let path = write_json(&dir, "effective.json", &EffectiveJson::from(&eff))?;
            println!("alpha = {} ; drift p2^-3 coefficient = {} ; wrote {}", eff.alpha, eff.drift_coefficient_m3(), path.display());
            Ok(())
        }
        Cmd::Simulate { common, from, total_time } => {
            setup_threads(&common)?;
            let mut cfg = load(&common)?;
            if let Some(t) = total_time {
                cfg.integrator.total_time = t;
            }
            let x0 = from.as_deref().map(|s| parse_state(s, "--from")).transpose()?;
            let Prep::Run(seed) = prepare(&common, &mut cfg, true)? else { return Ok(()) };
            let path = ex::simulate_path(&cfg, seed.unwrap_or_default(), x0.map(|a| State::new([a[0], a[1], a[2]], [a[3], a[4], a[5]])))?;
            let rows: Vec<[f64; 7]> = path.iter().map(|(t, x)| [*t, x.q[0], x.q[1], x.q[2], x.p[0], x.p[1], x.p[2]]).collect();
            let dir = out_dir(common.out.as_deref());
            let p = write_csv(&dir, "trajectory.csv", &["t", "q1", "q2", "q3", "p1", "p2", "p3"], &rows)?;
            write_json(&dir, "config.json", &cfg)?;
            println!("wrote {} rows to {}", rows.len(), p.display());
            Ok(())
        }
        Cmd::EquilibriumCheck { common, temp, total_time } => {
            setup_threads(&common)?;
            let mut cfg = load(&common)?;
            if let Some(t) = temp {
                if !(t > 0.0) {
                    return Err(LabError::Usage("--T must be positive".into()));
                }
                let t = f64_to_rat(t, "--T")?;
                let mut p = cfg.model.to_params()?;
                p.temp = [t.clone(), t];
                p.tau = [rat(0, 1), rat(0, 1)];
                cfg.model = ModelConfig::from_params(&p);
            }
            if let Some(t) = total_time {
                cfg.equilibrium.total_time = t;
            }
            let Prep::Run(seed) = prepare(&common, &mut cfg, true)? else { return Ok(()) };
            let rep = ex::equilibrium_check(&cfg, seed.unwrap_or_default())?;
            let dir = out_dir(common.out.as_deref());
            write_json(&dir, "equilibrium.json", &rep)?;
            println!("KS p1 {:.4} p2 {:.4} p3 {:.4}; J1 {:.3e} +- {:.1e}; J3 {:.3e} +- {:.1e}", rep.ks[0], rep.ks[1], rep.ks[2], rep.flux[0], rep.flux_stderr[0], rep.flux[1], rep.flux_stderr[1]);
            verdict(rep.pass, "equilibrium-check", &dir)
        }
        Cmd::DriftScan { common, omegas, paths } => {
            setup_threads(&common)?;
            let mut cfg = load(&common)?;
            if let Some(o) = omegas {
                cfg.drift.omegas = parse_list(&o, "--omegas")?;
            }
            if let Some(n) = paths {
                cfg.drift.paths = n;
            }
            let Prep::Run(seed) = prepare(&common, &mut cfg, true)? else { return Ok(()) };
            let rep = ex::drift_scan(&cfg, seed.unwrap_or_default())?;
            let dir = out_dir(common.out.as_deref());
            write_json(&dir, "drift.json", &rep)?;
            let rows: Vec<[f64; 5]> = rep.points.iter().map(|p| [p.omega, p.slope, p.stderr, p.predicted, p.rel_error]).collect();
            write_csv(&dir, "drift.csv", &["omega", "slope", "stderr", "predicted", "rel_error"], &rows)?;
            for p in &rep.points {
                println!("omega {:>6}: slope {:.4e} +- {:.1e}, predicted {:.4e}", p.omega, p.slope, p.stderr, p.predicted);
            }
            println!("log-log exponent {:.3} +- {:.3}", rep.exponent, rep.exponent_stderr);
            verdict(rep.pass, "drift-scan", &dir)
        }
        Cmd::LyapunovScan { common, beta, a, k, r, m, c4, n } => {
            setup_threads(&common)?;
            let mut cfg = load(&common)?;
            let l = &mut cfg.lyapunov;
            if let Some(v) = beta {
                l.beta = v;
            }
            if let Some(v) = a {
                l.a = v;
                l.a_grid.clear();
            }
            if let Some(v) = k {
                l.k = v;
            }
            if let Some(v) = r {
                l.r = v;
                l.r_grid.clear();
            }
            if let Some(v) = m {
                l.m = v;
                l.m_grid.clear();
            }
            if c4.is_some() {
                l.c4 = c4;
            }
            if let Some(v) = n {
                l.samples = v;
            }
            let Prep::Run(seed) = prepare(&common, &mut cfg, true)? else { return Ok(()) };
            let (_, _, rep) = ex::lyapunov_scan(&cfg, seed.unwrap_or_default())?;
            let dir = out_dir(common.out.as_deref());
            write_json(&dir, "lyapunov.json", &rep)?;
            let c = &rep.constants;
            println!("beta {} A {} k {} R {} M {} c4 {:.3e}; c4_max on scan {:.3e}", c.beta, c.a, c.k, c.r, c.m, c.c4, rep.c4_max);
            verdict(rep.pass, "lyapunov-scan", &dir)
        }
        Cmd::Control { common, from, to, eps, delta } => {
            setup_threads(&common)?;
            let mut cfg = load(&common)?;
            if let Some(s) = from {
                cfg.control.from = parse_state(&s, "--from")?;
            }
            if let Some(s) = to {
                cfg.control.to = parse_state(&s, "--to")?;
            }
            if let Some(e) = eps {
                cfg.control.eps = e;
            }
            if let Some(d) = delta {
                cfg.control.deltas = parse_list(&d, "--delta")?;
            }
            let Prep::Run(_) = prepare(&common, &mut cfg, false)? else { return Ok(()) };
            let (rep, rows) = ex::control_run(&cfg)?;
            let dir = out_dir(common.out.as_deref());
            let json = ControlJson::new(&rep, cfg.control.eps);
            write_json(&dir, "plan.json", &json.plan)?;
            write_json(&dir, "control.json", &json)?;
            write_csv(&dir, "trajectory.csv", &["t", "q1", "q2", "q3", "p1", "p2", "p3", "q2_reduced", "p2_reduced"], &rows)?;
            for r in &rep.runs {
                println!("delta {:.4e}: final error {:.3e}, max |f| {:.3e}", r.delta, r.error, r.max_control);
            }
            verdict(rep.reached, "control", &dir)
        }
        Cmd::Hist { common, total_time } => {
            setup_threads(&common)?;
            let mut cfg = load(&common)?;
            if let Some(t) = total_time {
                cfg.hist.total_time = t;
            }
            let Prep::Run(seed) = prepare(&common, &mut cfg, true)? else { return Ok(()) };
            let model = ex::build_model(&cfg)?;
            let rep = ex::histograms(&model, &cfg.integrator, &cfg.hist, seed.unwrap_or_default())?;
            let dir = out_dir(common.out.as_deref());
            write_json(&dir, "hist.json", &rep)?;
            let h = &rep.histograms;
            write_csv(&dir, "density.csv", &["p", "p1", "p2", "p3"], &density_rows(&[&h[0], &h[1], &h[2]]))?;
            let modes: Vec<[f64; 2]> = rep.p2_modes.iter().map(|m| [m.location, m.height]).collect();
            write_csv(&dir, "modes.csv", &["location", "height"], &modes)?;
            for m in &rep.p2_modes {
                println!("p2 mode at {:.2} (density {:.4})", m.location, m.height);
            }
            Ok(())
        }
        Cmd::Flux { common, total_time } => {
            setup_threads(&common)?;
            let mut cfg = load(&common)?;
            if let Some(t) = total_time {
                cfg.flux.total_time = t;
            }
            let Prep::Run(seed) = prepare(&common, &mut cfg, true)? else { return Ok(()) };
            let rep = ex::flux(&cfg, seed.unwrap_or_default())?;
            let dir = out_dir(common.out.as_deref());
            write_json(&dir, "flux.json", &rep)?;
            println!("J1 {:.4e} +- {:.1e}; J3 {:.4e} +- {:.1e}", rep.flux[0], rep.flux_stderr[0], rep.flux[1], rep.flux_stderr[1]);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rotorlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
