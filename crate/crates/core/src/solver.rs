//! Integrating-factor (Lawson) RK4 for the system and its parabolic
//! regularization `∂ₜQ + ε⁵∂ₓ⁴Q − iM_a∂ₓ⁴Q − iM_λ∂ₓ²Q = F(Q)`.

use std::path::{Path, PathBuf};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::nonlinearity_f;
use crate::report::fmt17;
use crate::spectral::{wavenumber, TorusField, TorusGrid};
use crate::system::SystemSpec;

/// `‖Q‖_{H²}` growing past this multiple of its initial value counts as blow-up.
pub const BLOW_UP_FACTOR: f64 = 1e6;

/// Relative one-step discrepancy above which the post-run dt audit fails.
pub const DT_AUDIT_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Integrator {
    #[default]
    #[serde(rename = "lawson_rk4")]
    LawsonRk4,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Grid size `N`.
    #[serde(rename = "N")]
    pub grid_points: usize,
    /// Requested step; capped by the nonlinear step rule unless `cap_dt` is off.
    pub dt: f64,
    /// Horizon `T > 0`.
    #[serde(rename = "T")]
    pub t_final: f64,
    pub eps: f64,
    pub snapshot_stride: usize,
    pub integrator: Integrator,
    /// Step-doubling tolerance; `None` runs fixed steps.
    pub error_control: Option<f64>,
    /// Integrate towards `−T` (only without regularization).
    pub backward: bool,
    /// Apply `dt ≤ 0.5 / (K²(1 + ‖Q₀‖²_{H²}))`.
    pub cap_dt: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            grid_points: 128,
            dt: 1e-3,
            t_final: 0.05,
            eps: 0.0,
            snapshot_stride: 10,
            integrator: Integrator::LawsonRk4,
            error_control: None,
            backward: false,
            cap_dt: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        TorusGrid::new(self.grid_points)?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::InvalidParameter(format!("T = {} must be positive", self.t_final)));
        }
        if !(0.0..1.0).contains(&self.eps) {
            return Err(Error::InvalidParameter(format!("eps = {} must lie in [0, 1)", self.eps)));
        }
        if self.backward && self.eps > 0.0 {
            return Err(Error::InvalidParameter(
                "the regularized problem only runs forward in time".into(),
            ));
        }
        if self.snapshot_stride == 0 {
            return Err(Error::InvalidParameter("snapshot_stride must be positive".into()));
        }
        if let Some(tol) = self.error_control {
            if !(tol > 0.0) {
                return Err(Error::InvalidParameter("error_control tolerance must be positive".into()));
            }
        }
        Ok(())
    }
}

/// `−ε⁵k⁴ + i a_j k⁴ − i λ_j k²`.
pub fn linear_symbol(spec: &SystemSpec, eps: f64, k: i64, j: usize) -> C64 {
    let k2 = (k as f64).powi(2);
    let k4 = k2 * k2;
    C64::new(-eps.powi(5) * k4, spec.a(j) * k4 - spec.lambda()[j] * k2)
}

/// The nonlinear step rule `0.5 / (K²(1 + ‖Q₀‖²_{H²}))` with `K = N/2 − 1`.
pub fn step_cap(grid: TorusGrid, q0: &TorusField) -> f64 {
    let k = grid.k_max() as f64;
    0.5 / (k * k * (1.0 + q0.sobolev_norm(2).powi(2)))
}

/// Per-mode propagators `e^{symbol·h}` and `e^{symbol·h/2}`.
struct Propagator {
    full: Vec<Vec<C64>>,
    half: Vec<Vec<C64>>,
}

impl Propagator {
    fn new(spec: &SystemSpec, grid: TorusGrid, eps: f64, h: f64) -> Self {
        let len = grid.len();
        let build = |t: f64| {
            (0..spec.n())
                .map(|j| {
                    (0..len)
                        .map(|i| (linear_symbol(spec, eps, wavenumber(i, len), j) * t).exp())
                        .collect()
                })
                .collect()
        };
        Self {
            full: build(h),
            half: build(h / 2.0),
        }
    }
}

fn apply(e: &[Vec<C64>], f: &TorusField) -> TorusField {
    let coeffs = f
        .coeffs()
        .iter()
        .zip(e)
        .map(|(c, s)| c.iter().zip(s).map(|(a, b)| a * b).collect())
        .collect();
    TorusField::from_coeffs(f.grid(), coeffs).expect("propagator matches field shape")
}

fn lawson_step(spec: &SystemSpec, prop: &Propagator, u: &TorusField, h: f64) -> Result<TorusField> {
    let hc = C64::new(h, 0.0);
    let half = C64::new(h / 2.0, 0.0);
    let k1 = nonlinearity_f(spec, u)?;
    let k2 = nonlinearity_f(spec, &apply(&prop.half, &u.axpy(half, &k1)))?;
    let eu_half = apply(&prop.half, u);
    let k3 = nonlinearity_f(spec, &eu_half.axpy(half, &k2))?;
    let eu = apply(&prop.full, u);
    let k4 = nonlinearity_f(spec, &eu.axpy(hc, &apply(&prop.half, &k3)))?;
    let incr = apply(&prop.full, &k1)
        .add(&apply(&prop.half, &k2.add(&k3)).scale_real(2.0))
        .add(&k4);
    Ok(eu.axpy(C64::new(h / 6.0, 0.0), &incr))
}

/// One Lawson RK4 step of size `dt` (negative for backward steps).
pub fn step(state: &TorusField, spec: &SystemSpec, config: &SolverConfig, dt: f64) -> Result<TorusField> {
    if state.n() != spec.n() {
        return Err(Error::ShapeMismatch(format!(
            "state has {} components, system {}",
            state.n(),
            spec.n()
        )));
    }
    if dt < 0.0 && config.eps > 0.0 {
        return Err(Error::InvalidParameter("backward steps need eps = 0".into()));
    }
    let prop = Propagator::new(spec, state.grid(), config.eps, dt);
    let next = lawson_step(spec, &prop, state, dt)?;
    if !next.is_finite() {
        return Err(Error::BlowUp {
            time: dt,
            reason: "non-finite coefficients".into(),
        });
    }
    Ok(next)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlowUpFlag {
    pub time: f64,
    pub reason: String,
}

/// Comparison of the first step against two half steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DtAudit {
    pub relative_discrepancy: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<TorusField>,
    pub spec: SystemSpec,
    pub config: SolverConfig,
    /// Step actually taken (signed).
    pub dt: f64,
    pub steps: usize,
    /// Sub-steps added by step doubling.
    pub refinements: usize,
    pub blow_up: Option<BlowUpFlag>,
    pub dt_audit: Option<DtAudit>,
}

impl Trajectory {
    pub fn final_state(&self) -> &TorusField {
        self.states.last().expect("trajectories hold the initial state")
    }

    /// Writes one field document per snapshot and an index CSV with
    /// columns `time, h1, h4, hm, em`; returns the written paths.
    pub fn export(&self, dir: &Path, m: usize) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let index = dir.join("trajectory.csv");
        let mut w = csv::Writer::from_path(&index)?;
        w.write_record(["snapshot", "time", "h1", "h4", "hm", "em"])?;
        for (i, (t, q)) in self.times.iter().zip(&self.states).enumerate() {
            let name = format!("snapshot_{i:05}.json");
            let path = dir.join(&name);
            q.write_json(&path)?;
            written.push(path);
            let em = crate::diagnostics::energy_em(&self.spec, q, m)
                .map(fmt17)
                .unwrap_or_default();
            w.write_record([
                i.to_string(),
                fmt17(*t),
                fmt17(q.sobolev_norm(1)),
                fmt17(q.sobolev_norm(4)),
                fmt17(q.sobolev_norm(m.min(crate::spectral::MAX_DERIVATIVE))),
                em,
            ])?;
        }
        w.flush()?;
        written.push(index);
        Ok(written)
    }
}

fn controlled_step(
    spec: &SystemSpec,
    eps: f64,
    u: &TorusField,
    h: f64,
    tol: f64,
    depth: usize,
    refinements: &mut usize,
) -> Result<TorusField> {
    let grid = u.grid();
    let full = lawson_step(spec, &Propagator::new(spec, grid, eps, h), u, h)?;
    let half_prop = Propagator::new(spec, grid, eps, h / 2.0);
    let mid = lawson_step(spec, &half_prop, u, h / 2.0)?;
    let two = lawson_step(spec, &half_prop, &mid, h / 2.0)?;
    let scale = two.max_abs_coeff().max(f64::MIN_POSITIVE);
    let err = full.sub(&two).max_abs_coeff() / scale;
    if err <= tol || depth >= 12 || !err.is_finite() {
        return Ok(two);
    }
    *refinements += 1;
    let mid = controlled_step(spec, eps, u, h / 2.0, tol, depth + 1, refinements)?;
    controlled_step(spec, eps, &mid, h / 2.0, tol, depth + 1, refinements)
}

/// The step size `solve_ivp` uses for this data: the requested `dt`, capped
/// by [`step_cap`] of the unmollified data, shrunk to divide `T` evenly.
/// Linear systems are stepped exactly and skip the cap.
pub fn effective_dt(spec: &SystemSpec, q0: &TorusField, config: &SolverConfig) -> (f64, usize) {
    let mut dt = config.dt;
    let linear = spec.omega().is_zero() && spec.tail().is_empty();
    if config.cap_dt && !linear {
        dt = dt.min(step_cap(q0.grid(), q0));
    }
    let steps = (config.t_final / dt).ceil().max(1.0) as usize;
    (config.t_final / steps as f64, steps)
}

/// Integrates from `Q₀` (mollified with the same ε when `eps > 0`) to `±T`.
///
/// A blow-up ends the run early with the partial trajectory and a flag.
pub fn solve_ivp(spec: &SystemSpec, q0: &TorusField, config: &SolverConfig) -> Result<Trajectory> {
    config.validate()?;
    if q0.n() != spec.n() {
        return Err(Error::ShapeMismatch(format!(
            "data has {} components, system {}",
            q0.n(),
            spec.n()
        )));
    }
    if q0.grid().len() != config.grid_points {
        return Err(Error::ShapeMismatch(format!(
            "data on N = {}, config asks for N = {}",
            q0.grid().len(),
            config.grid_points
        )));
    }
    if !q0.is_finite() {
        return Err(Error::InvalidParameter("initial data is not finite".into()));
    }
    let (dt_abs, steps) = effective_dt(spec, q0, config);
    let dt = if config.backward { -dt_abs } else { dt_abs };
    let mut u = if config.eps > 0.0 {
        q0.mollify(config.eps)?
    } else {
        q0.clone()
    };
    let h2_initial = u.sobolev_norm(2);
    let prop = Propagator::new(spec, u.grid(), config.eps, dt);

    let mut times = vec![0.0];
    let mut states = vec![u.clone()];
    let mut blow_up = None;
    let mut refinements = 0;
    for n in 1..=steps {
        let next = match config.error_control {
            Some(tol) => controlled_step(spec, config.eps, &u, dt, tol, 0, &mut refinements),
            None => lawson_step(spec, &prop, &u, dt),
        }?;
        let t = n as f64 * dt;
        let h2 = next.sobolev_norm(2);
        let reason = if !next.is_finite() || !h2.is_finite() {
            Some("non-finite coefficients".to_string())
        } else if h2_initial > 0.0 && h2 > BLOW_UP_FACTOR * h2_initial {
            Some(format!("H² norm grew from {h2_initial:e} to {h2:e}"))
        } else {
            None
        };
        if let Some(reason) = reason {
            log::warn!("blow-up at t = {t}: {reason}");
            blow_up = Some(BlowUpFlag { time: t, reason });
            break;
        }
        u = next;
        if n % config.snapshot_stride == 0 || n == steps {
            times.push(t);
            states.push(u.clone());
        }
    }

    let dt_audit = if blow_up.is_none() {
        let first = &states[0];
        let one = lawson_step(spec, &prop, first, dt)?;
        let half_prop = Propagator::new(spec, first.grid(), config.eps, dt / 2.0);
        let two = lawson_step(spec, &half_prop, &lawson_step(spec, &half_prop, first, dt / 2.0)?, dt / 2.0)?;
        let scale = two.max_abs_coeff().max(f64::MIN_POSITIVE);
        let rel = one.sub(&two).max_abs_coeff() / scale;
        let passed = rel <= DT_AUDIT_TOLERANCE;
        if !passed {
            log::warn!("dt audit: one step and two half steps differ by {rel:e} (relative)");
        }
        Some(DtAudit {
            relative_discrepancy: rel,
            passed,
        })
    } else {
        None
    };

    Ok(Trajectory {
        times,
        states,
        spec: spec.clone(),
        config: config.clone(),
        dt,
        steps,
        refinements,
        blow_up,
        dt_audit,
    })
}

/// dt ladder of [`self_convergence_order`].
pub const CONVERGENCE_LADDER: [f64; 5] = [0.01, 0.005, 0.0025, 0.00125, 0.000625];

/// Order of the uncapped integrator on `Q₀` up to `T`: the log-log slope of
/// the error against a run with `dt/16` of the finest rung, over
/// [`CONVERGENCE_LADDER`]. Successive-halving ratios oscillate with the stiff
/// linear phases, so the fit over the whole ladder is used instead.
pub fn self_convergence_order(spec: &SystemSpec, q0: &TorusField, t_final: f64) -> f64 {
    let run = |dt: f64| {
        let cfg = SolverConfig {
            grid_points: q0.grid().len(),
            dt,
            t_final,
            cap_dt: false,
            snapshot_stride: usize::MAX,
            ..SolverConfig::default()
        };
        solve_ivp(spec, q0, &cfg).map(|t| t.final_state().clone())
    };
    let finest = CONVERGENCE_LADDER[CONVERGENCE_LADDER.len() - 1];
    let Ok(reference) = run(finest / 16.0) else {
        return f64::NAN;
    };
    let errors: Option<Vec<f64>> = CONVERGENCE_LADDER
        .iter()
        .map(|dt| run(*dt).ok().map(|u| u.sub(&reference).l2_norm()))
        .collect();
    errors
        .and_then(|e| crate::diagnostics::fit_loglog(&CONVERGENCE_LADDER, &e).ok())
        .map_or(f64::NAN, |f| f.slope)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{builtin_system, BuiltinParams, Dispersion, Tail};
    use crate::tensor::CoeffTensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn linear_spec(a: f64, lambda: f64) -> SystemSpec {
        SystemSpec::new(Dispersion::Scalar(a), vec![lambda], CoeffTensor::zeros(1), Tail::default()).unwrap()
    }

    #[test]
    fn symbol_values() {
        let s = linear_spec(1.0, 0.0);
        assert_eq!(linear_symbol(&s, 0.0, 1, 0), C64::new(0.0, 1.0));
        assert_eq!(linear_symbol(&linear_spec(1.0, 1.0), 0.0, 2, 0), C64::new(0.0, 12.0));
        assert_eq!(linear_symbol(&s, 0.5, 2, 0), C64::new(-0.5, 16.0));
    }

    #[test]
    fn linear_step_is_the_exact_propagator() {
        let g = TorusGrid::new(32).unwrap();
        let spec = linear_spec(0.7, -1.3);
        let cfg = SolverConfig::default();
        for k in [-5i64, 1, 3, 9] {
            let q = TorusField::plane_wave(1, g, 0, k, C64::new(1.0, 0.0));
            let dt = 0.37;
            let next = step(&q, &spec, &cfg, dt).unwrap();
            let k2 = (k * k) as f64;
            let expected = C64::new(0.0, (0.7 * k2 * k2 + 1.3 * k2) * dt).exp();
            assert!((next.coeff(0, k) - expected).norm() <= 1e-13);
        }
        let damped = SolverConfig {
            eps: 0.4,
            ..SolverConfig::default()
        };
        let q = TorusField::plane_wave(1, g, 0, 3, C64::new(1.0, 0.0));
        let next = step(&q, &spec, &damped, 0.2).unwrap();
        let expected = (-(0.4f64.powi(5)) * 81.0 * 0.2).exp();
        assert!((next.coeff(0, 3).norm() - expected).abs() <= 1e-14);
    }

    #[test]
    fn linear_flow_is_an_isometry() {
        let g = TorusGrid::new(64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q0 = TorusField::random_band_limited(1, g, 31, &mut rng);
        let cfg = SolverConfig {
            grid_points: 64,
            dt: 0.01,
            t_final: 1.0,
            ..SolverConfig::default()
        };
        let traj = solve_ivp(&linear_spec(1.0, 0.5), &q0, &cfg).unwrap();
        for m in 0..=8 {
            let (a, b) = (q0.sobolev_norm(m), traj.final_state().sobolev_norm(m));
            assert!((a - b).abs() <= 1e-12 * a);
        }
        assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
        assert!((traj.times.last().unwrap() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn damping_is_monotone() {
        let g = TorusGrid::new(64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q0 = TorusField::random_band_limited(1, g, 20, &mut rng);
        let cfg = SolverConfig {
            grid_points: 64,
            dt: 0.01,
            t_final: 0.5,
            eps: 0.3,
            snapshot_stride: 1,
            ..SolverConfig::default()
        };
        let traj = solve_ivp(&linear_spec(1.0, 0.0), &q0, &cfg).unwrap();
        for m in [0, 2, 4] {
            let norms: Vec<f64> = traj.states.iter().map(|s| s.sobolev_norm(m)).collect();
            assert!(norms.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-14)));
        }
    }

    #[test]
    fn backward_runs_need_eps_zero_and_invert_the_flow() {
        let g = TorusGrid::new(32).unwrap();
        let spec = builtin_system("wzy", 1, &BuiltinParams::default()).unwrap();
        let q0 = TorusField::plane_wave(1, g, 0, 1, C64::new(0.1, 0.0))
            .add(&TorusField::plane_wave(1, g, 0, -2, C64::new(0.05, 0.02)));
        let fwd = SolverConfig {
            grid_points: 32,
            dt: 1e-4,
            t_final: 0.01,
            ..SolverConfig::default()
        };
        let there = solve_ivp(&spec, &q0, &fwd).unwrap();
        let back = SolverConfig {
            backward: true,
            ..fwd.clone()
        };
        let again = solve_ivp(&spec, there.final_state(), &back).unwrap();
        assert!(again.final_state().sub(&q0).max_abs_coeff() <= 1e-9);
        let bad = SolverConfig {
            eps: 0.1,
            ..back
        };
        assert!(solve_ivp(&spec, &q0, &bad).is_err());
    }

    #[test]
    fn fourth_order_self_convergence() {
        let g = TorusGrid::new(32).unwrap();
        let spec = builtin_system("wzy", 1, &BuiltinParams::default()).unwrap();
        let q0 = TorusField::plane_wave(1, g, 0, 1, C64::new(0.1, 0.0))
            .add(&TorusField::plane_wave(1, g, 0, -1, C64::new(0.1 / 3.0, 0.1 / 1.5)))
            .add(&TorusField::plane_wave(1, g, 0, 2, C64::new(0.1 / 6.0, 0.0)));
        let order = self_convergence_order(&spec, &q0, 0.1);
        assert!(order >= 3.7, "order {order}");
    }

    #[test]
    fn blow_up_is_flagged() {
        // Strong anti-damping: an exponentially growing linear mode.
        let g = TorusGrid::new(16).unwrap();
        let omega = CoeffTensor::zeros(1);
        let spec = SystemSpec::new(Dispersion::Scalar(1.0), vec![0.0], omega, Tail {
            cubic: C64::new(50.0, 0.0),
            quintic: C64::new(0.0, 0.0),
        })
        .unwrap();
        let q0 = TorusField::constant(g, &[C64::new(1.0, 0.0)]);
        let cfg = SolverConfig {
            grid_points: 16,
            dt: 1e-3,
            t_final: 1.0,
            cap_dt: false,
            ..SolverConfig::default()
        };
        let traj = solve_ivp(&spec, &q0, &cfg).unwrap();
        let flag = traj.blow_up.expect("blow-up expected");
        assert!(flag.time < 1.0);
        assert!(traj.dt_audit.is_none());
    }

    #[test]
    fn step_doubling_runs_and_matches_fixed_steps() {
        let g = TorusGrid::new(32).unwrap();
        let spec = builtin_system("wzy", 1, &BuiltinParams::default()).unwrap();
        let q0 = TorusField::plane_wave(1, g, 0, 1, C64::new(0.2, 0.0));
        let base = SolverConfig {
            grid_points: 32,
            dt: 1e-3,
            t_final: 0.02,
            ..SolverConfig::default()
        };
        let fixed = solve_ivp(&spec, &q0, &base).unwrap();
        let ctl = solve_ivp(&spec, &q0, &SolverConfig {
            error_control: Some(1e-12),
            ..base
        })
        .unwrap();
        assert!(ctl.final_state().sub(fixed.final_state()).max_abs_coeff() <= 1e-9);
        assert!(fixed.dt_audit.as_ref().unwrap().passed);
    }

    #[test]
    fn config_validation() {
        let bad = [
            SolverConfig { dt: 0.0, ..SolverConfig::default() },
            SolverConfig { t_final: -1.0, ..SolverConfig::default() },
            SolverConfig { eps: 1.0, ..SolverConfig::default() },
            SolverConfig { grid_points: 100, ..SolverConfig::default() },
            SolverConfig { snapshot_stride: 0, ..SolverConfig::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err());
        }
    }
}
