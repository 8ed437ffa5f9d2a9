use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use disptorus::diagnostics::{
    bs_rate_experiment, cauchy_rate_experiment, growth_experiment, identity_audit, loss_probe, low_mode_data,
    mollifier_norm_bound_holds, random_audit_fields, LossProbeOptions, RateReport, Verdict,
};
use disptorus::report::{fmt17, loglog_svg, ReportWriter, Series};
use disptorus::solver::{solve_ivp, SolverConfig};
use disptorus::spectral::{synthesize_sobolev_data, TorusField, TorusGrid};
use disptorus::system::{builtin_system, BuiltinParams, Dispersion, SystemSpec, Tail};
use disptorus::tensor::{check_conditions, family_n2, fit_family_n2, CoeffTensor, N2FamilyParams, DEFAULT_TOLERANCE};
use disptorus::{Error, Result};

const EXIT_INCONCLUSIVE: u8 = 2;
const EXIT_BLOW_UP: u8 = 3;
const EXIT_FAIL: u8 = 4;

#[derive(Parser)]
#[command(name = "disptorus", version, about = "Condition checks and numerical experiments for fourth-order dispersive systems on the circle")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate every coefficient condition and write the report.
    Check(Flags),
    /// Check the operator identities on seeded random fields.
    Audit(Flags),
    /// Integrate the (regularized) system and export snapshots.
    Simulate(Flags),
    /// Mollifier convergence rates on synthesized data.
    BsRates(Flags),
    /// Cauchy rates between regularized solutions.
    Cauchy(Flags),
    /// Growth of the gauged energy across regularization strengths.
    Growth(Flags),
    /// Loss-of-derivatives probe of the ∂ₓᵐF decomposition.
    LossProbe(Flags),
    /// Fit (or, without a system, sample) the two-component admissible family.
    FamilyN2(Flags),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Check(_) => "check",
            Command::Audit(_) => "audit",
            Command::Simulate(_) => "simulate",
            Command::BsRates(_) => "bs-rates",
            Command::Cauchy(_) => "cauchy",
            Command::Growth(_) => "growth",
            Command::LossProbe(_) => "loss-probe",
            Command::FamilyN2(_) => "family-n2",
        }
    }

    fn flags(&self) -> &Flags {
        match self {
            Command::Check(f)
            | Command::Audit(f)
            | Command::Simulate(f)
            | Command::BsRates(f)
            | Command::Cauchy(f)
            | Command::Growth(f)
            | Command::LossProbe(f)
            | Command::FamilyN2(f) => f,
        }
    }
}

#[derive(Args, Clone, Debug, Default)]
struct Flags {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Builtin system: "wzy" or "single".
    #[arg(long)]
    builtin: Option<String>,
    /// Tensor file (one-based ω records).
    #[arg(long)]
    tensor: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Regularity / derivative order.
    #[arg(long)]
    m: Option<usize>,
    /// Grid size.
    #[arg(long = "N")]
    grid_points: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    /// Horizon.
    #[arg(long = "T")]
    t_final: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    eps_ladder: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    nu_ladder: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
    /// Initial data as a field document (simulate, cauchy, growth).
    #[arg(long)]
    init: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write log-log SVG plots.
    #[arg(long)]
    svg: bool,
}

/// The merged configuration of one run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    builtin: Option<String>,
    tensor: Option<PathBuf>,
    n: Option<usize>,
    gamma: Option<f64>,
    alpha: Option<f64>,
    nu: Option<f64>,
    mu: Option<[f64; 6]>,
    /// Fourth-order coefficients for tensor systems: one number or one per component.
    dispersion: Option<Vec<f64>>,
    lambda: Option<Vec<f64>>,
    m: Option<usize>,
    #[serde(rename = "N")]
    grid_points: Option<usize>,
    dt: Option<f64>,
    #[serde(rename = "T")]
    t_final: Option<f64>,
    eps: Option<f64>,
    eps_ladder: Option<Vec<f64>>,
    nu_ladder: Option<Vec<f64>>,
    snapshot_stride: Option<usize>,
    error_control: Option<f64>,
    backward: Option<bool>,
    seed: Option<u64>,
    init: Option<PathBuf>,
    /// Amplitude of synthesized initial data.
    amplitude: Option<f64>,
    delta: Option<f64>,
    k_list: Option<Vec<i64>>,
    out: Option<PathBuf>,
    svg: Option<bool>,
}

impl RunConfig {
    fn load(flags: &Flags) -> Result<Self> {
        let mut cfg: RunConfig = match &flags.config {
            Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
            None => RunConfig::default(),
        };
        macro_rules! take {
            ($($field:ident),*) => {$(
                if flags.$field.is_some() {
                    cfg.$field = flags.$field.clone();
                }
            )*};
        }
        take!(builtin, tensor, n, gamma, alpha, m, grid_points, dt, t_final, eps, eps_ladder, nu_ladder, seed, init, out);
        if flags.svg {
            cfg.svg = Some(true);
        }
        if flags.builtin.is_some() {
            cfg.tensor = None;
        } else if flags.tensor.is_some() {
            cfg.builtin = None;
        }
        Ok(cfg)
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(1)
    }

    fn svg(&self) -> bool {
        self.svg.unwrap_or(false)
    }

    fn out_dir(&self, command: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(format!("disptorus-{command}")))
    }

    fn grid(&self, default: usize) -> Result<TorusGrid> {
        TorusGrid::new(self.grid_points.unwrap_or(default))
    }

    fn has_system(&self) -> bool {
        self.builtin.is_some() || self.tensor.is_some()
    }

    fn system(&self) -> Result<SystemSpec> {
        match (&self.builtin, &self.tensor) {
            (Some(_), Some(_)) => Err(Error::InvalidParameter("give either a builtin or a tensor file, not both".into())),
            (None, None) => Err(Error::InvalidParameter("no system: pass --builtin or --tensor".into())),
            (Some(name), None) => {
                let defaults = BuiltinParams::default();
                let params = BuiltinParams {
                    gamma: self.gamma.unwrap_or(defaults.gamma),
                    alpha: self.alpha.unwrap_or(defaults.alpha),
                    nu: self.nu.unwrap_or(defaults.nu),
                    mu: self.mu.unwrap_or(defaults.mu),
                };
                let n = self.n.unwrap_or(if name == "single" { 1 } else { 2 });
                builtin_system(name, n, &params)
            }
            (None, Some(path)) => {
                let omega = CoeffTensor::from_json(&std::fs::read_to_string(path)?)?;
                let n = omega.n();
                if let Some(k) = self.n {
                    if k != n {
                        return Err(Error::ShapeMismatch(format!("--n {k} but the tensor has n = {n}")));
                    }
                }
                let dispersion = match self.dispersion.as_deref() {
                    None => Dispersion::Scalar(1.0),
                    Some([a]) => Dispersion::Scalar(*a),
                    Some(d) => Dispersion::Diagonal(d.to_vec()),
                };
                let lambda = self.lambda.clone().unwrap_or_else(|| vec![0.0; n]);
                SystemSpec::new(dispersion, lambda, omega, Tail::default())
            }
        }
    }

    fn solver(&self, grid: TorusGrid, t_default: f64) -> SolverConfig {
        let d = SolverConfig::default();
        SolverConfig {
            grid_points: grid.len(),
            dt: self.dt.unwrap_or(d.dt),
            t_final: self.t_final.unwrap_or(t_default),
            eps: self.eps.unwrap_or(0.0),
            snapshot_stride: self.snapshot_stride.unwrap_or(d.snapshot_stride),
            error_control: self.error_control,
            backward: self.backward.unwrap_or(false),
            ..d
        }
    }

    /// `--init` if given, else synthesized data.
    fn initial_data(&self, n: usize, grid: TorusGrid, synth: impl FnOnce() -> Result<TorusField>) -> Result<TorusField> {
        match &self.init {
            Some(path) => {
                let q = TorusField::from_json(&std::fs::read_to_string(path)?)?;
                if q.n() != n {
                    return Err(Error::ShapeMismatch(format!("initial data has {} components, system {n}", q.n())));
                }
                Ok(if q.grid() == grid { q } else { q.resample(grid) })
            }
            None => synth(),
        }
    }
}

fn dyadic(from: i32, to: i32) -> Vec<f64> {
    (from..=to).map(|k| 2f64.powi(-k)).collect()
}

/// A run's result: its summary and exit code.
struct RunOutcome {
    summary: serde_json::Value,
    code: u8,
}

fn verdict_code(v: Verdict) -> u8 {
    match v {
        Verdict::Pass => 0,
        Verdict::Inconclusive => EXIT_INCONCLUSIVE,
        Verdict::Fail => EXIT_FAIL,
    }
}

fn rate_rows(reports: &[&RateReport]) -> Vec<Vec<String>> {
    reports.iter().flat_map(|r| r.csv_rows()).collect()
}

fn rate_svg(w: &mut ReportWriter, name: &str, title: &str, x_label: &str, reports: &[&RateReport]) -> Result<()> {
    let series: Vec<Series> = reports
        .iter()
        .map(|r| Series {
            label: &r.name,
            x: &r.ladder,
            y: &r.gaps,
        })
        .collect();
    w.write_text(name, &loglog_svg(title, x_label, "gap", &series))?;
    Ok(())
}

fn run_check(cfg: &RunConfig, w: &mut ReportWriter) -> Result<RunOutcome> {
    let spec = cfg.system()?;
    let report = check_conditions(spec.omega(), DEFAULT_TOLERANCE)?;
    w.write_json("conditions.json", &report)?;
    println!("{}", serde_json::to_string_pretty(&report.holds)?);
    Ok(RunOutcome {
        summary: json!({
            "n": spec.n(),
            "a_set": report.a_set(),
            "b_set": report.b_set(),
            "c_set": report.c_set(),
            "g_set": report.g_set(),
            "diagonal_set": report.diagonal_set(),
        }),
        code: 0,
    })
}

fn run_audit(cfg: &RunConfig, w: &mut ReportWriter) -> Result<RunOutcome> {
    let spec = cfg.system()?;
    let grid = cfg.grid(64)?;
    let (q, v, wf) = random_audit_fields(spec.n(), grid, 5, cfg.seed());
    let audit = identity_audit(&spec, &q, &v, &wf, cfg.m.unwrap_or(4))?;
    w.write_json("audit.json", &audit)?;
    let rows: Vec<Vec<String>> = audit
        .rows
        .iter()
        .map(|r| {
            vec![
                r.identity.clone(),
                r.level.map(|l| l.to_string()).unwrap_or_default(),
                fmt17(r.residual),
            ]
        })
        .collect();
    w.write_csv("audit.csv", &["identity", "level", "residual"], &rows)?;
    for r in &audit.rows {
        println!("{:<28} {:>2} {:.3e}", r.identity, r.level.map(|l| l.to_string()).unwrap_or_default(), r.residual);
    }
    let verdict = if audit.passed { Verdict::Pass } else { Verdict::Fail };
    Ok(RunOutcome {
        summary: json!({ "max_residual": audit.max_residual, "tolerance": audit.tolerance, "verdict": verdict }),
        code: verdict_code(verdict),
    })
}

fn run_simulate(cfg: &RunConfig, w: &mut ReportWriter) -> Result<RunOutcome> {
    let spec = cfg.system()?;
    let grid = cfg.grid(128)?;
    let m = cfg.m.unwrap_or(4);
    let q0 = cfg.initial_data(spec.n(), grid, || {
        Ok(synthesize_sobolev_data(spec.n(), grid, m + 1, cfg.delta.unwrap_or(0.1), cfg.seed())?
            .scale_real(cfg.amplitude.unwrap_or(0.1)))
    })?;
    let traj = solve_ivp(&spec, &q0, &cfg.solver(grid, 0.05))?;
    let written = traj.export(&w.dir().join("trajectory"), m)?;
    w.register(&written);
    let code = if traj.blow_up.is_some() { EXIT_BLOW_UP } else { 0 };
    if let Some(audit) = &traj.dt_audit {
        if !audit.passed {
            log::warn!("step-size audit failed: {:e}", audit.relative_discrepancy);
        }
    }
    Ok(RunOutcome {
        summary: json!({
            "dt": traj.dt,
            "steps": traj.steps,
            "refinements": traj.refinements,
            "snapshots": traj.states.len(),
            "final_time": traj.times.last(),
            "blow_up": traj.blow_up,
            "dt_audit": traj.dt_audit,
        }),
        code,
    })
}

fn run_bs_rates(cfg: &RunConfig, w: &mut ReportWriter) -> Result<RunOutcome> {
    let n = cfg.n.unwrap_or(1);
    let grid = cfg.grid(2048)?;
    let m = cfg.m.unwrap_or(4);
    let delta = cfg.delta.unwrap_or(0.1);
    let ladder = cfg.eps_ladder.clone().unwrap_or_else(|| dyadic(3, 8));
    let q0 = synthesize_sobolev_data(n, grid, m, delta, cfg.seed())?;
    let ells: Vec<usize> = (1..=m.min(3)).collect();
    let reports = bs_rate_experiment(&q0, m, &ells, &ladder, delta)?;
    let bound = mollifier_norm_bound_holds(&q0, m, &ladder)?;
    let refs: Vec<&RateReport> = reports.iter().collect();
    w.write_csv("rates.csv", &["series", "eps", "gap"], &rate_rows(&refs))?;
    w.write_json("rates.json", &reports)?;
    if cfg.svg() {
        rate_svg(w, "rates.svg", "mollifier gaps", "eps", &refs)?;
    }
    let mut verdict = reports.iter().fold(Verdict::Pass, |v, r| v.combine(r.verdict));
    if !bound {
        verdict = Verdict::Fail;
    }
    for r in &reports {
        println!("{}: slope {:.4} (R² {:.4}) window {:?} {:?}", r.name, r.slope, r.r_squared, r.window, r.verdict);
    }
    Ok(RunOutcome {
        summary: json!({ "m": m, "delta": delta, "norm_bound": bound, "slopes": reports.iter().map(|r| r.slope).collect::<Vec<_>>(), "verdict": verdict }),
        code: verdict_code(verdict),
    })
}

fn run_cauchy(cfg: &RunConfig, w: &mut ReportWriter) -> Result<RunOutcome> {
    let spec = cfg.system()?;
    let grid = cfg.grid(128)?;
    let m = cfg.m.unwrap_or(4);
    let ladder = cfg.nu_ladder.clone().unwrap_or_else(|| dyadic(2, 5));
    let q0 = cfg.initial_data(spec.n(), grid, || {
        Ok(synthesize_sobolev_data(spec.n(), grid, m + 1, cfg.delta.unwrap_or(0.1), cfg.seed())?
            .scale_real(cfg.amplitude.unwrap_or(0.1)))
    })?;
    let report = cauchy_rate_experiment(&spec, &q0, m, &ladder, &cfg.solver(grid, 0.05))?;
    w.write_json("cauchy.json", &report)?;
    let refs: Vec<&RateReport> = report.h1.iter().chain(report.hm.iter()).collect();
    w.write_csv("cauchy.csv", &["series", "nu", "gap"], &rate_rows(&refs))?;
    if cfg.svg() && !refs.is_empty() {
        rate_svg(w, "cauchy.svg", "Cauchy gaps", "nu", &refs)?;
    }
    for r in &refs {
        println!("{}: slope {:.4} (R² {:.4}) window {:?} {:?}", r.name, r.slope, r.r_squared, r.window, r.verdict);
    }
    let code = if report.blow_up.is_some() { EXIT_BLOW_UP } else { verdict_code(report.verdict()) };
    Ok(RunOutcome {
        summary: json!({
            "mu": report.mu,
            "dt": report.dt,
            "steps": report.steps,
            "h1_slope": report.h1.as_ref().map(|r| r.slope),
            "hm_slope": report.hm.as_ref().map(|r| r.slope),
            "blow_up": report.blow_up,
            "verdict": report.verdict(),
        }),
        code,
    })
}

fn run_growth(cfg: &RunConfig, w: &mut ReportWriter) -> Result<RunOutcome> {
    let spec = cfg.system()?;
    let grid = cfg.grid(64)?;
    let m = cfg.m.unwrap_or(4);
    let eps = cfg.eps_ladder.clone().unwrap_or_else(|| vec![0.3, 0.2, 0.1, 0.05]);
    let q0 = cfg.initial_data(spec.n(), grid, || Ok(low_mode_data(spec.n(), grid, cfg.amplitude.unwrap_or(0.1))))?;
    let mut solver = cfg.solver(grid, 0.1);
    if cfg.snapshot_stride.is_none() {
        solver.snapshot_stride = 5;
    }
    let summary = growth_experiment(&spec, &q0, m, &eps, &solver)?;
    w.write_json("growth.json", &summary)?;
    let mut rows = Vec::new();
    for r in &summary.reports {
        for (i, t) in r.times.iter().enumerate() {
            rows.push(vec![
                fmt17(r.eps),
                fmt17(*t),
                fmt17(r.em_values[i]),
                fmt17(r.hm_values[i]),
                fmt17(r.h1_values[i]),
                fmt17(r.equivalence_ratios[i]),
            ]);
        }
    }
    w.write_csv("growth.csv", &["eps", "time", "em", "hm", "h1", "ratio"], &rows)?;
    if cfg.svg() {
        let labels: Vec<String> = summary.reports.iter().map(|r| format!("eps = {}", r.eps)).collect();
        let series: Vec<Series> = summary
            .reports
            .iter()
            .zip(&labels)
            .map(|(r, l)| Series {
                label: l,
                x: &r.times,
                y: &r.em_values,
            })
            .collect();
        w.write_text("growth.svg", &loglog_svg("gauged energy", "t", "E_m", &series))?;
    }
    for r in &summary.reports {
        println!("eps {}: A_m {:.4}, sandwich constant {:.4}", r.eps, r.growth_rate, r.sandwich_constant);
    }
    println!("spread {:.4} {:?}", summary.spread, summary.verdict);
    let code = if summary.reports.iter().any(|r| r.blow_up.is_some()) {
        EXIT_BLOW_UP
    } else {
        verdict_code(summary.verdict)
    };
    Ok(RunOutcome {
        summary: json!({
            "rates": summary.reports.iter().map(|r| r.growth_rate).collect::<Vec<_>>(),
            "spread": summary.spread,
            "sandwich_constant": summary.max_sandwich_constant,
            "verdict": summary.verdict,
        }),
        code,
    })
}

fn run_loss_probe(cfg: &RunConfig, w: &mut ReportWriter) -> Result<RunOutcome> {
    let mut spec = cfg.system()?;
    if !spec.tail().is_empty() {
        log::info!("the probe measures the cubic nonlinearity; dropping the polynomial tail");
        spec = spec.with_tail(Tail::default());
    }
    let m = cfg.m.unwrap_or(4);
    let ks = cfg.k_list.clone().unwrap_or_else(|| vec![8, 16, 32, 64]);
    let options = LossProbeOptions {
        grid_points: cfg.grid_points.unwrap_or(512),
        seed: cfg.seed(),
        ..LossProbeOptions::default()
    };
    let report = loss_probe(&spec, m, &ks, &options)?;
    w.write_json("loss_probe.json", &report)?;
    let rows: Vec<Vec<String>> = report
        .k_list
        .iter()
        .enumerate()
        .map(|(i, k)| vec![fmt17(*k), fmt17(report.residual_norms[i]), fmt17(report.full_norms[i])])
        .collect();
    w.write_csv("loss_probe.csv", &["K", "residual", "full"], &rows)?;
    if cfg.svg() {
        let series = [
            Series {
                label: "residual",
                x: &report.k_list,
                y: &report.residual_norms,
            },
            Series {
                label: "full",
                x: &report.k_list,
                y: &report.full_norms,
            },
        ];
        w.write_text("loss_probe.svg", &loglog_svg("loss-of-derivatives probe", "K", "norm", &series))?;
    }
    let slope = |f: &Option<disptorus::diagnostics::LogLogFit>| f.map(|f| f.slope);
    println!(
        "residual exponent {:?} (≤ {}), full exponent {:?} (≥ {}) {:?}",
        slope(&report.residual_fit),
        report.residual_bound,
        slope(&report.full_fit),
        report.full_bound,
        report.verdict
    );
    Ok(RunOutcome {
        summary: json!({
            "residual_exponent": slope(&report.residual_fit),
            "full_exponent": slope(&report.full_fit),
            "verdict": report.verdict,
        }),
        code: verdict_code(report.verdict),
    })
}

fn run_family_n2(cfg: &RunConfig, w: &mut ReportWriter) -> Result<RunOutcome> {
    if cfg.has_system() {
        let spec = cfg.system()?;
        let (params, residual) = fit_family_n2(spec.omega())?;
        w.write_json("family.json", &json!({ "params": params, "residual": residual }))?;
        println!("fit residual {residual:e}");
        let verdict = if residual <= 1e-10 { Verdict::Pass } else { Verdict::Fail };
        return Ok(RunOutcome {
            summary: json!({ "mode": "fit", "residual": residual, "verdict": verdict }),
            code: verdict_code(verdict),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed());
    let params = N2FamilyParams::random(&mut rng);
    let omega = family_n2(&params);
    w.write_text("tensor.json", &omega.to_json()?)?;
    w.write_json("family.json", &json!({ "params": params }))?;
    let report = check_conditions(&omega, DEFAULT_TOLERANCE)?;
    Ok(RunOutcome {
        summary: json!({ "mode": "sample", "admissible": report.b_set() }),
        code: 0,
    })
}

fn run(command: &Command) -> Result<u8> {
    let cfg = RunConfig::load(command.flags())?;
    let name = command.name();
    let mut w = ReportWriter::new(&cfg.out_dir(name))?;
    w.write_json("config.json", &cfg)?;
    let outcome = match command {
        Command::Check(_) => run_check(&cfg, &mut w),
        Command::Audit(_) => run_audit(&cfg, &mut w),
        Command::Simulate(_) => run_simulate(&cfg, &mut w),
        Command::BsRates(_) => run_bs_rates(&cfg, &mut w),
        Command::Cauchy(_) => run_cauchy(&cfg, &mut w),
        Command::Growth(_) => run_growth(&cfg, &mut w),
        Command::LossProbe(_) => run_loss_probe(&cfg, &mut w),
        Command::FamilyN2(_) => run_family_n2(&cfg, &mut w),
    }?;
    let manifest = w.finish(name, &outcome.summary)?;
    log::info!("wrote {}", display(&manifest));
    Ok(outcome.code)
}

fn display(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
