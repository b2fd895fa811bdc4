//! Command-line driver: simulation, hover-orbit search, abdomen comparison,
//! control sensitivity, receding-horizon stabilization and self-checks.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};
use geoflap::config::RunConfig;
use geoflap::kinematics::N_DELTA;
use geoflap::optimization::{
    compare_abdomen, find_periodic_orbit, sensitivity_table, stabilize, AbdomenComparison, OrbitOptions, OrbitParameters, OrbitReport,
    Perturbation, StabilizeReport,
};
use geoflap::simulation::{save_csv, simulate, StepPlan};
use geoflap::validation;
use geoflap::Error;

#[derive(Parser, Debug)]
#[command(name = "geoflap", version, about = "Flapping-wing multibody dynamics, hover orbits and receding-horizon control")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Morphology TOML file (default: bundled vehicle).
    #[arg(long, global = true)]
    morphology: Option<PathBuf>,

    /// Run configuration TOML file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// RNG seed for the orbit search.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Dotted-path override, e.g. `--set orbit.phi_m=0.8`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true, action = ArgAction::Append)]
    set: Vec<String>,

    /// Number of flapping periods to simulate or stabilize.
    #[arg(long, global = true)]
    periods: Option<usize>,

    /// Integrator step (s); rounded so a period holds a whole number of
    /// output samples.
    #[arg(long, global = true)]
    h: Option<f64>,

    /// Hold the abdomen at its mean pitch.
    #[arg(long, global = true)]
    no_undulation: bool,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Simulate the configured motion and write the trajectory CSV.
    Simulate,
    /// Search for an energy-minimal periodic hover orbit.
    FindOrbit,
    /// Compare optimized hover with and without abdomen undulation.
    CompareAbdomen,
    /// Change of averaged aerodynamic force and moment per control parameter.
    Sensitivity,
    /// Receding-horizon stabilization from a perturbed state.
    Stabilize,
    /// Run the dynamics self-checks.
    Validate,
}

enum Failure {
    Usage(String),
    Validation(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_) | Error::Schema { .. } | Error::Parse { .. } => Failure::Usage(e.to_string()),
            Error::Validation(_) => Failure::Validation(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Validation(m)) => {
            eprintln!("validation failed: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

/// Steps per period for step size `h`, rounded up to a multiple of `unit`.
fn steps_for(period: f64, h: f64, unit: usize) -> CliResult<usize> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Failure::Usage(format!("--h must be positive, got {h}")));
    }
    let unit = unit.max(1);
    let n = (period / h).ceil() as usize;
    Ok(n.div_ceil(unit).max(1) * unit)
}

fn resolve(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(p) = &cli.morphology {
        cfg.morphology = Some(p.clone());
    }
    if let Some(s) = cli.seed {
        cfg.search.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if let Some(n) = cli.periods {
        if n == 0 {
            return Err(Failure::Usage("--periods must be at least 1".into()));
        }
        cfg.simulation.periods = n;
        cfg.stabilize.periods = n;
    }
    if cli.no_undulation {
        cfg.orbit = cfg.orbit.with_fixed_abdomen();
    }
    for s in &cli.set {
        cfg.apply_override(s)?;
    }
    if let Some(h) = cli.h {
        let period = cfg.orbit.period();
        match cli.command {
            Command::Simulate => cfg.simulation.steps_per_period = steps_for(period, h, cfg.simulation.samples_per_period)?,
            Command::FindOrbit | Command::CompareAbdomen => cfg.search.steps_per_period = steps_for(period, h, cfg.search.samples_per_period)?,
            Command::Stabilize => {
                let unit = lcm(cfg.mpc.samples_per_period, cfg.mpc.knots_per_period);
                cfg.mpc.steps_per_period = steps_for(period, h, unit)?;
            }
            Command::Sensitivity => cfg.sensitivity.steps_per_period = steps_for(period, h, 1)?,
            Command::Validate => log::warn!("--h is ignored by validate"),
        }
    }
    Ok(cfg)
}

fn lcm(a: usize, b: usize) -> usize {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 { a } else { gcd(b, a % b) }
    }
    if a == 0 || b == 0 { a.max(b) } else { a / gcd(a, b) * b }
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|e| Failure::from(Error::io(path, e)))
}

fn orbit_toml(p: &OrbitParameters) -> CliResult<String> {
    let mut t = toml::Table::new();
    t.insert("orbit".into(), toml::Value::try_from(p).map_err(|e| Failure::Runtime(e.to_string()))?);
    toml::to_string(&t).map_err(|e| Failure::Runtime(e.to_string()))
}

fn report_toml(r: &OrbitReport) -> CliResult<String> {
    toml::to_string(r).map_err(|e| Failure::Runtime(e.to_string()))
}

fn run(cli: &Cli) -> CliResult<()> {
    let cfg = resolve(cli)?;
    let model = cfg.model()?;
    let out = cfg.out.clone();
    std::fs::create_dir_all(&out).map_err(|e| Failure::from(Error::io(&out, e)))?;
    cfg.write_snapshot(&out)?;

    match cli.command {
        Command::Simulate => {
            let motion = cfg.orbit.motion();
            motion.validate()?;
            let sim = &cfg.simulation;
            let plan = StepPlan::per_period(motion.period(), sim.periods, sim.steps_per_period, sim.samples_per_period)?;
            let traj = simulate(&model, &motion, &cfg.orbit.initial_state(), 0.0, &plan)?;
            save_csv(out.join("trajectory.csv"), &traj.samples)?;
            let end = &traj.final_state;
            println!(
                "simulated {} period(s), {} samples; final x = [{:.6e}, {:.6e}, {:.6e}] m",
                sim.periods,
                traj.samples.len(),
                end.x.x,
                end.x.y,
                end.x.z
            );
        }
        Command::FindOrbit => {
            let report = find_periodic_orbit(&model, &[cfg.orbit], &cfg.search)?;
            write_file(&out.join("orbit.toml"), &orbit_toml(&report.best)?)?;
            write_file(&out.join("report.toml"), &report_toml(&report)?)?;
            let traj = geoflap::optimization::evaluate_orbit(&model, &report.best, &cfg.search)?.trajectory;
            save_csv(out.join("trajectory.csv"), &traj.samples)?;
            println!(
                "orbit J = {:.6e} (seed J = {}), |dx| = {:.3e} m, |dv| = {:.3e} m/s, |dR| = {:.3e} rad, |dOmega| = {:.3e} rad/s",
                report.j,
                report.seed_j.map_or("n/a".to_string(), |j| format!("{j:.6e}")),
                report.residual_x,
                report.residual_v,
                report.residual_r,
                report.residual_w
            );
        }
        Command::CompareAbdomen => {
            if cli.no_undulation {
                log::warn!("--no-undulation is ignored by compare-abdomen");
            }
            let mut seed = cfg.orbit;
            seed.undulation = true;
            let (und, fixed, cmp) = compare_abdomen(&model, &seed, &cfg.orbit, &cfg.search)?;
            write_file(&out.join("undulating.toml"), &orbit_toml(&und.best)?)?;
            write_file(&out.join("fixed.toml"), &orbit_toml(&fixed.best)?)?;
            write_file(&out.join("undulating_report.toml"), &report_toml(&und)?)?;
            write_file(&out.join("fixed_report.toml"), &report_toml(&fixed)?)?;
            write_file(&out.join("comparison.csv"), &comparison_csv(&cmp))?;
            let summary = format!(
                "J_undulating = {:.6e}\nJ_fixed = {:.6e}\nchange = {:+.2} %\nmax |P_R - P_L| = {:.3e} W\n",
                cmp.j[0], cmp.j[1], cmp.percent_change, cmp.max_power_asymmetry
            );
            write_file(&out.join("summary.txt"), &summary)?;
            print!("{summary}");
        }
        Command::Sensitivity => {
            let table = sensitivity_table(&model, &cfg.orbit, cfg.sensitivity.delta, cfg.sensitivity.steps_per_period)?;
            let text = table.to_text();
            write_file(&out.join("sensitivity.txt"), &text)?;
            print!("{text}");
        }
        Command::Stabilize => {
            let orbit = if cfg.stabilize.refine_orbit {
                let opts = OrbitOptions { restarts: 0, ..cfg.search.clone() };
                let report = find_periodic_orbit(&model, &[cfg.orbit], &opts)?;
                report.best
            } else {
                cfg.orbit
            };
            write_file(&out.join("orbit.toml"), &orbit_toml(&orbit)?)?;
            let on_orbit = orbit.initial_state();
            let ic = if cfg.stabilize.perturb { Perturbation::reference().apply(&on_orbit) } else { on_orbit };
            let report = stabilize(&model, &orbit, &ic, cfg.stabilize.periods, &cfg.mpc)?;
            save_csv(out.join("controlled.csv"), &report.controlled)?;
            save_csv(out.join("uncontrolled.csv"), &report.uncontrolled)?;
            write_file(&out.join("deltas.csv"), &deltas_csv(&report))?;
            let errors = errors_csv(&report);
            write_file(&out.join("errors.csv"), &errors)?;
            write_file(&out.join("horizons.txt"), &horizons_text(&report))?;
            print!("{errors}");
        }
        Command::Validate => {
            let results = validation::run_all(&model, cfg.search.seed)?;
            let mut text = String::from("check\tvalue\ttolerance\tresult\n");
            for r in &results {
                let _ = writeln!(text, "{}\t{:.3e}\t{:.1e}\t{}", r.name, r.value, r.tolerance, if r.passed { "pass" } else { "FAIL" });
            }
            write_file(&out.join("validation.txt"), &text)?;
            print!("{text}");
            let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
            if !failed.is_empty() {
                return Err(Failure::Validation(failed.join(", ")));
            }
        }
    }
    Ok(())
}

fn comparison_csv(cmp: &AbdomenComparison) -> String {
    let mut s = String::from(
        "phase,E_undulating,E_fixed,P_R_undulating,P_R_fixed,P_A_undulating,P_A_fixed,tau_R_undulating,tau_R_fixed,tau_A_undulating,tau_A_fixed\n",
    );
    for r in &cmp.rows {
        let v = [r.energy, r.power_r, r.power_a, r.torque_r, r.torque_a];
        let _ = write!(s, "{:e}", r.phase);
        for pair in v {
            let _ = write!(s, ",{:e},{:e}", pair[0], pair[1]);
        }
        s.push('\n');
    }
    s
}

fn deltas_csv(report: &StabilizeReport) -> String {
    let labels = ["dphi_ms", "dtheta_0s", "dphi_mk", "dphi_0s", "dtheta_0k", "dpsi_0k"];
    let mut s = format!("t,{}\n", labels.join(","));
    let a = &report.applied;
    for (k, knot) in a.knots.iter().enumerate() {
        let _ = write!(s, "{:e}", a.start + k as f64 * a.spacing);
        for v in knot.iter().take(N_DELTA) {
            let _ = write!(s, ",{v:e}");
        }
        s.push('\n');
    }
    s
}

fn errors_csv(report: &StabilizeReport) -> String {
    let mut s = String::from(
        "period,position,velocity,attitude,angular_velocity,weighted,position_uncontrolled,velocity_uncontrolled,attitude_uncontrolled,angular_velocity_uncontrolled,weighted_uncontrolled\n",
    );
    let (wc, wu) = (report.weighted_controlled(), report.weighted_uncontrolled());
    for (k, (c, u)) in report.controlled_errors.iter().zip(&report.uncontrolled_errors).enumerate() {
        let _ = writeln!(
            s,
            "{k},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            c.position, c.velocity, c.attitude, c.angular_velocity, wc[k], u.position, u.velocity, u.attitude, u.angular_velocity, wu[k]
        );
    }
    s
}

fn horizons_text(report: &StabilizeReport) -> String {
    let mut s = String::new();
    for h in &report.horizons {
        let _ = writeln!(
            s,
            "period {}: J(zero) = {:.6e}, J = {:.6e}, iterations = {}, max |delta| = {:.4e}{}",
            h.period,
            h.objective_zero,
            h.objective,
            h.iterations,
            h.schedule.max_abs(),
            if h.fallback { ", fallback to zero deltas" } else { "" }
        );
        for (k, knot) in h.schedule.knots.iter().enumerate() {
            let _ = writeln!(s, "  t = {:.6e}: {:?}", h.schedule.start + k as f64 * h.schedule.spacing, knot);
        }
    }
    s
}
