//! Energies, operator-identity audits and the quantitative experiments:
//! mollifier rates, Cauchy rates between regularized solutions, growth of the
//! gauged energy, and the loss-of-derivatives probe.

use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{apply_lambda, apply_lambda_combo, apply_p, dxm_decomposition, gauge_term, gauge_v};
use crate::solver::{solve_ivp, BlowUpFlag, SolverConfig, Trajectory};
use crate::spectral::{TorusField, TorusGrid};
use crate::system::{GaugeWeights, SystemSpec};

/// Identity residuals at or below this pass the audit.
pub const AUDIT_TOLERANCE: f64 = 1e-10;
/// A residual above this counts as a detected violation.
pub const VIOLATION_THRESHOLD: f64 = 1e-3;
/// Minimum `R²` of a log-log fit for a pass/fail verdict.
pub const MIN_R_SQUARED: f64 = 0.98;
/// Largest admissible run constant of the energy sandwich.
pub const SANDWICH_CONSTANT_MAX: f64 = 4.0;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Rayon pool honouring `DISPTORUS_THREADS`.
pub fn thread_pool() -> rayon::ThreadPool {
    let threads = std::env::var("DISPTORUS_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool construction")
}

/// `E_m(Q) = (‖V‖²_{L²} + ‖Q‖²_{H^{m−1}})^{1/2}`.
pub fn energy_em(spec: &SystemSpec, q: &TorusField, m: usize) -> Result<f64> {
    if m < 4 {
        log::warn!("E_m with m = {m} < 4 is outside the regime the gauge was built for");
    }
    let v = gauge_v(spec, q, m)?;
    Ok((v.l2_norm().powi(2) + q.sobolev_norm(m - 1).powi(2)).sqrt())
}

/// `Re⟨W, M_a^{-1}Λ(Q_ref)W⟩` with the `m = 1` gauge.
pub fn e1_form(spec: &SystemSpec, w: &TorusField, qref: &TorusField) -> Result<f64> {
    let lw = gauge_term(spec, 1, qref, w)?;
    Ok(w.inner(&lw)?.re)
}

/// `½‖∂ₓW‖² + A‖W‖² − Re⟨W, M_a^{-1}Λ(Q_ref)W⟩`.
pub fn modified_energy_e1(spec: &SystemSpec, w: &TorusField, qref: &TorusField, a: f64) -> Result<f64> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::InvalidParameter(format!("A = {a} must be positive")));
    }
    Ok(0.5 * w.derivative(1).l2_norm().powi(2) + a * w.l2_norm().powi(2) - e1_form(spec, w, qref)?)
}

/// `A = 2 sup |Re⟨W, M_a^{-1}Λ(Q_ref)W⟩| / ‖W‖² + 1` over the given pairs.
pub fn auto_a(spec: &SystemSpec, pairs: &[(TorusField, TorusField)]) -> Result<f64> {
    let mut sup: f64 = 0.0;
    for (w, qref) in pairs {
        let n2 = w.l2_norm().powi(2);
        if n2 > 0.0 {
            sup = sup.max(e1_form(spec, w, qref)?.abs() / n2);
        }
    }
    Ok(2.0 * sup + 1.0)
}

/// One audited identity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub identity: String,
    pub level: Option<usize>,
    /// `‖lhs − rhs‖` over the sum of the norms of the terms involved.
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityAudit {
    pub rows: Vec<AuditRow>,
    pub max_residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl IdentityAudit {
    pub fn residual(&self, identity: &str, level: Option<usize>) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.identity == identity && r.level == level)
            .map(|r| r.residual)
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn field_residual(lhs: &TorusField, rhs: &TorusField, terms: &[&TorusField]) -> f64 {
    let scale: f64 = terms.iter().map(|t| t.l2_norm()).sum();
    ratio(lhs.sub(rhs).l2_norm(), scale)
}

/// `Σ_j a_j conj(b_j)` as a one-component field.
fn pointwise_dot(a: &TorusField, b: &TorusField) -> Result<TorusField> {
    let prod = a.product_dealiased(&b.conj())?;
    let mut total = vec![C64::new(0.0, 0.0); a.grid().len()];
    for c in prod.coeffs() {
        for (t, z) in total.iter_mut().zip(c) {
            *t += z;
        }
    }
    TorusField::from_coeffs(a.grid(), vec![total])
}

/// `[M_a, Λ(Q)] v` relative to the two products it compares.
pub fn lambda_commutator_residual(spec: &SystemSpec, q: &TorusField, v: &TorusField, m: usize) -> Result<f64> {
    let a: Vec<C64> = (0..spec.n()).map(|j| C64::new(spec.a(j), 0.0)).collect();
    let weights = GaugeWeights::default();
    let lhs = apply_lambda_combo(spec.s(), weights, m, q, v)?.scale_components(&a);
    let rhs = apply_lambda_combo(spec.s(), weights, m, q, &v.scale_components(&a))?;
    Ok(field_residual(&lhs, &rhs, &[&lhs, &rhs]))
}

/// Evaluates every structural identity of the operators on `(Q, v, w)`.
///
/// `m` selects the `Λ₃` used in the `[M_a, Λ]` row, which is only present for
/// non-scalar `M_a`.
pub fn identity_audit(spec: &SystemSpec, q: &TorusField, v: &TorusField, w: &TorusField, m: usize) -> Result<IdentityAudit> {
    let s = spec.s();
    let mut rows = Vec::new();
    let mut push = |identity: &str, level: Option<usize>, residual: f64| {
        rows.push(AuditRow {
            identity: identity.to_string(),
            level,
            residual,
        })
    };
    let (dv, iv) = (v.derivative(1), v.scale(I));
    for l in 1..=5 {
        let p = |k: usize, x: &TorusField| apply_p(s, k, l, q, x);

        let (p2v, p2w) = (p(2, v)?, p(2, w)?);
        let (a, b) = (p2v.inner(w)?.re, p2w.inner(v)?.re);
        let scale = p2v.l2_norm() * w.l2_norm() + p2w.l2_norm() * v.l2_norm();
        push("P2 skew-symmetry", Some(l), ratio((a + b).abs(), scale));

        let (p4v, p4w) = (p(4, v)?, p(4, w)?);
        let (a, b) = (p4v.inner(w)?.re, p4w.inner(v)?.re);
        let scale = p4v.l2_norm() * w.l2_norm() + p4w.l2_norm() * v.l2_norm();
        push("P4 symmetry", Some(l), ratio((a - b).abs(), scale));

        let (p5v, p5w) = (p(5, v)?, p(5, w)?);
        let (a, b) = (pointwise_dot(&p5v, w)?, pointwise_dot(&p5w, v)?);
        push("P5 pointwise symmetry", Some(l), field_residual(&a, &b, &[&a, &b]));

        let p1v = p(1, v)?;
        let lhs = p1v.derivative(1).sub(&p(1, &dv)?);
        let p3v = p(3, v)?;
        let rhs = p5v.sub(&p3v);
        push(
            "[d, P1] = -P3 + P5",
            Some(l),
            field_residual(&lhs, &rhs, &[&p1v.derivative(1), &p(1, &dv)?, &p3v, &p5v]),
        );

        let lhs = p2v.derivative(1).sub(&p(2, &dv)?);
        let rhs = p3v.scale_real(2.0);
        push(
            "[d, P2] = 2 P3",
            Some(l),
            field_residual(&lhs, &rhs, &[&p2v.derivative(1), &p(2, &dv)?, &rhs]),
        );
    }

    let lam = |k: usize, x: &TorusField| apply_lambda(s, k, m, q, x);
    let p1 = |k: usize, x: &TorusField| apply_p(s, k, 1, q, x);

    let (l1v, l1iv) = (lam(1, v)?, lam(1, &iv)?);
    let lhs = l1v.scale(I).sub(&l1iv);
    let (p11, p21) = (p1(1, v)?, p1(2, v)?);
    let rhs = p11.add(&p21.scale_real(0.5)).scale_real(-1.0);
    push("[i, L1] = -P1 - P2/2", Some(1), field_residual(&lhs, &rhs, &[&l1v, &l1iv, &p11, &p21]));

    let (dl1, l1d) = (l1v.derivative(1), lam(1, &dv)?);
    let lhs = dl1.sub(&l1d).scale(I);
    let (p31, p51) = (p1(3, v)?, p1(5, v)?);
    let rhs = p31.add(&p51).scale_real(-0.5);
    push("i[d, L1] = -(P3 + P5)/2", Some(1), field_residual(&lhs, &rhs, &[&dl1, &l1d, &p31, &p51]));

    let l2v = lam(2, v)?;
    let (dl2, l2d) = (l2v.derivative(1), lam(2, &dv)?);
    let lhs = dl2.sub(&l2d).scale(I);
    let rhs = p31.scale_real(-0.25);
    push("i[d, L2] = -P3/4", Some(1), field_residual(&lhs, &rhs, &[&dl2, &l2d, &rhs]));

    for k in [2, 3] {
        let (lv, liv) = (lam(k, v)?, lam(k, &iv)?);
        let lhs = lv.scale(I);
        push(
            &format!("[i, L{k}] = 0"),
            Some(1),
            field_residual(&lhs, &liv, &[&lhs, &liv]),
        );
    }

    if !spec.is_scalar_dispersion() {
        push("[M_a, L] = 0", None, lambda_commutator_residual(spec, q, v, m)?);
    }

    let max_residual = rows.iter().map(|r| r.residual).fold(0.0, f64::max);
    Ok(IdentityAudit {
        passed: max_residual <= AUDIT_TOLERANCE,
        rows,
        max_residual,
        tolerance: AUDIT_TOLERANCE,
    })
}

/// Seeded band-limited `(Q, v, w)` for the audit.
pub fn random_audit_fields(n: usize, grid: TorusGrid, band: i64, seed: u64) -> (TorusField, TorusField, TorusField) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = TorusField::random_band_limited(n, grid, band, &mut rng);
    let v = TorusField::random_band_limited(n, grid, band, &mut rng);
    let w = TorusField::random_band_limited(n, grid, band, &mut rng);
    (q, v, w)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    /// Fail dominates inconclusive, which dominates pass.
    pub fn combine(self, other: Verdict) -> Verdict {
        use Verdict::*;
        match (self, other) {
            (Fail, _) | (_, Fail) => Fail,
            (Inconclusive, _) | (_, Inconclusive) => Inconclusive,
            _ => Pass,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least-squares line through `(log x, log y)`.
pub fn fit_loglog(x: &[f64], y: &[f64]) -> Result<LogLogFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::DegenerateLadder(format!("{} ladder points against {} values", x.len(), y.len())));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::DegenerateLadder("log-log fit needs positive finite values".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateLadder("ladder has a single distinct value".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ly.iter().map(|b| (b - my).powi(2)).sum();
    let ss_res: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(LogLogFit {
        slope,
        intercept,
        r_squared,
    })
}

/// A fitted power law against a ladder with its acceptance window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub name: String,
    pub ladder: Vec<f64>,
    pub gaps: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub expected_slope: f64,
    pub window: [f64; 2],
    pub verdict: Verdict,
}

impl RateReport {
    pub fn from_fit(name: &str, ladder: Vec<f64>, gaps: Vec<f64>, expected_slope: f64, window: [f64; 2]) -> Result<Self> {
        let fit = fit_loglog(&ladder, &gaps)?;
        let verdict = if !(fit.r_squared >= MIN_R_SQUARED) {
            Verdict::Inconclusive
        } else if fit.slope >= window[0] && fit.slope <= window[1] {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        Ok(Self {
            name: name.to_string(),
            ladder,
            gaps,
            slope: fit.slope,
            intercept: fit.intercept,
            r_squared: fit.r_squared,
            expected_slope,
            window,
            verdict,
        })
    }

    pub fn csv_rows(&self) -> Vec<Vec<String>> {
        use crate::report::fmt17;
        self.ladder
            .iter()
            .zip(&self.gaps)
            .map(|(x, g)| vec![self.name.clone(), fmt17(*x), fmt17(*g)])
            .collect()
    }
}

fn check_decreasing_ladder(ladder: &[f64]) -> Result<()> {
    if ladder.len() < 2 {
        return Err(Error::DegenerateLadder("a ladder needs at least two values".into()));
    }
    if ladder.windows(2).any(|w| !(w[1] < w[0])) || ladder.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
        return Err(Error::DegenerateLadder(format!(
            "ladder {ladder:?} must be strictly decreasing inside (0, 1)"
        )));
    }
    Ok(())
}

/// Acceptance window of the mollifier rate of order `ℓ`.
pub fn bs_window(ell: usize) -> [f64; 2] {
    [ell as f64 - 0.2, ell as f64 + 0.5]
}

/// Rates of `‖Q₀ − Q₀^ε‖_{H^{m−ℓ}}` in `ε` for data of regularity `H^{m+δ}`.
pub fn bs_rate_experiment(q0m: &TorusField, m: usize, ells: &[usize], eps_ladder: &[f64], delta: f64) -> Result<Vec<RateReport>> {
    check_decreasing_ladder(eps_ladder)?;
    let mollified: Vec<TorusField> = eps_ladder.iter().map(|e| q0m.mollify(*e)).collect::<Result<_>>()?;
    ells.iter()
        .map(|&ell| {
            if ell > m {
                return Err(Error::InvalidParameter(format!("ell = {ell} exceeds m = {m}")));
            }
            let gaps: Vec<f64> = mollified.iter().map(|q| q0m.sub(q).sobolev_norm(m - ell)).collect();
            RateReport::from_fit(
                &format!("H^{} gap (ell = {ell})", m - ell),
                eps_ladder.to_vec(),
                gaps,
                ell as f64 + delta,
                bs_window(ell),
            )
        })
        .collect()
}

/// Whether `‖Q^ε‖_{H^m} ≤ ‖Q‖_{H^m}` at every ε of the ladder.
pub fn mollifier_norm_bound_holds(q: &TorusField, m: usize, eps_ladder: &[f64]) -> Result<bool> {
    let base = q.sobolev_norm(m);
    for e in eps_ladder {
        if q.mollify(*e)?.sobolev_norm(m) > base {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Expected slopes and windows of the Cauchy rates in the `H¹` and `Hᵐ` gaps.
pub fn cauchy_windows(m: usize) -> ([f64; 3], [f64; 3]) {
    let h1 = ((m as f64) - 1.0).min(4.0);
    let hm = ((m as f64) - 3.0).min(1.0);
    ([h1, h1 - 0.5, h1.max(4.0) + 0.5], [hm, hm - 0.4, hm + 0.8])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CauchyReport {
    pub m: usize,
    pub mu: f64,
    pub dt: f64,
    pub steps: usize,
    pub h1: Option<RateReport>,
    pub hm: Option<RateReport>,
    pub blow_up: Option<BlowUpFlag>,
}

impl CauchyReport {
    pub fn verdict(&self) -> Verdict {
        match (&self.h1, &self.hm) {
            (Some(a), Some(b)) => a.verdict.combine(b.verdict),
            _ => Verdict::Inconclusive,
        }
    }
}

fn run_all(spec: &SystemSpec, q0: &TorusField, base: &SolverConfig, eps: &[f64]) -> Result<Vec<Trajectory>> {
    let pool = thread_pool();
    pool.install(|| {
        eps.par_iter()
            .map(|e| {
                let cfg = SolverConfig {
                    eps: *e,
                    ..base.clone()
                };
                solve_ivp(spec, q0, &cfg)
            })
            .collect()
    })
}

/// Sup-in-time gaps `‖Q^μ − Q^ν‖_{H¹}` and `‖Q^μ − Q^ν‖_{Hᵐ}` for each ν, with `μ = ν_min/8`.
///
/// All runs share one step size (computed from the unmollified data) and a
/// unit snapshot stride, so their snapshots are taken at the same times.
pub fn cauchy_rate_experiment(
    spec: &SystemSpec,
    q0: &TorusField,
    m: usize,
    nu_ladder: &[f64],
    config: &SolverConfig,
) -> Result<CauchyReport> {
    check_decreasing_ladder(nu_ladder)?;
    if !(1..=crate::spectral::MAX_DERIVATIVE).contains(&m) {
        return Err(Error::InvalidParameter(format!("m = {m} outside 1..=8")));
    }
    let mu = nu_ladder[nu_ladder.len() - 1] / 8.0;
    let base = SolverConfig {
        snapshot_stride: 1,
        backward: false,
        ..config.clone()
    };
    let mut eps: Vec<f64> = nu_ladder.to_vec();
    eps.push(mu);
    let runs = run_all(spec, q0, &base, &eps)?;
    let reference = runs.last().expect("μ run present");
    let blow_up = runs.iter().find_map(|r| r.blow_up.clone());
    let (dt, steps) = (reference.dt, reference.steps);
    if blow_up.is_some() {
        return Ok(CauchyReport {
            m,
            mu,
            dt,
            steps,
            h1: None,
            hm: None,
            blow_up,
        });
    }
    let sup_gap = |run: &Trajectory, k: usize| {
        run.states
            .iter()
            .zip(&reference.states)
            .map(|(a, b)| a.sub(b).sobolev_norm(k))
            .fold(0.0, f64::max)
    };
    let h1_gaps: Vec<f64> = runs[..nu_ladder.len()].iter().map(|r| sup_gap(r, 1)).collect();
    let hm_gaps: Vec<f64> = runs[..nu_ladder.len()].iter().map(|r| sup_gap(r, m)).collect();
    let (w1, wm) = cauchy_windows(m);
    Ok(CauchyReport {
        m,
        mu,
        dt,
        steps,
        h1: Some(RateReport::from_fit("H^1 Cauchy gap", nu_ladder.to_vec(), h1_gaps, w1[0], [w1[1], w1[2]])?),
        hm: Some(RateReport::from_fit(
            &format!("H^{m} Cauchy gap"),
            nu_ladder.to_vec(),
            hm_gaps,
            wm[0],
            [wm[1], wm[2]],
        )?),
        blow_up: None,
    })
}

/// Small data on modes `|k| ≤ 1` with peak coefficient `amplitude`; the
/// mollifier leaves it unchanged for every `ε ≤ 1/2`.
pub fn low_mode_data(n: usize, grid: TorusGrid, amplitude: f64) -> TorusField {
    let mut q = TorusField::zeros(n, grid);
    for c in 0..n {
        let a = amplitude;
        q = q
            .add(&TorusField::plane_wave(n, grid, c, 1, C64::new(a, 0.0)))
            .add(&TorusField::plane_wave(n, grid, c, -1, C64::new(0.5 * a, 0.3 * a * (c as f64 + 1.0))))
            .add(&TorusField::plane_wave(n, grid, c, 0, C64::new(0.3 * a, 0.0)));
    }
    q
}

/// Energy history of one regularized run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub eps: f64,
    pub times: Vec<f64>,
    pub em_values: Vec<f64>,
    pub hm_values: Vec<f64>,
    pub h1_values: Vec<f64>,
    /// `E_m² / ‖Q‖²_{Hᵐ}`
    pub equivalence_ratios: Vec<f64>,
    /// `‖Q‖²_{Hᵐ} / E_m²`
    pub inverse_ratios: Vec<f64>,
    /// `max_t (log E_m(t)² − log E_m(0)²)/t`
    pub growth_rate: f64,
    /// Smallest `C` with both ratios below `C(1 + ‖Q‖²_{H¹})` at every snapshot.
    pub sandwich_constant: f64,
    pub blow_up: Option<BlowUpFlag>,
}

fn energy_report(traj: &Trajectory, m: usize) -> Result<EnergyReport> {
    let spec = &traj.spec;
    let mut em = Vec::new();
    let mut hm = Vec::new();
    let mut h1 = Vec::new();
    for q in &traj.states {
        em.push(energy_em(spec, q, m)?);
        hm.push(q.sobolev_norm(m));
        h1.push(q.sobolev_norm(1));
    }
    let equivalence_ratios: Vec<f64> = em.iter().zip(&hm).map(|(e, h)| (e / h).powi(2)).collect();
    let inverse_ratios: Vec<f64> = equivalence_ratios.iter().map(|r| 1.0 / r).collect();
    let sandwich_constant = equivalence_ratios
        .iter()
        .zip(&h1)
        .map(|(r, h)| r.max(1.0 / r) / (1.0 + h * h))
        .fold(0.0, f64::max);
    let e0 = em[0].powi(2).ln();
    let growth_rate = traj
        .times
        .iter()
        .zip(&em)
        .skip(1)
        .map(|(t, e)| (e.powi(2).ln() - e0) / t)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(EnergyReport {
        eps: traj.config.eps,
        times: traj.times.clone(),
        em_values: em,
        hm_values: hm,
        h1_values: h1,
        equivalence_ratios,
        inverse_ratios,
        growth_rate,
        sandwich_constant,
        blow_up: traj.blow_up.clone(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthSummary {
    pub m: usize,
    pub reports: Vec<EnergyReport>,
    /// `max A_m / min A_m` over ε (infinite when some rate is not positive).
    pub spread: f64,
    pub max_sandwich_constant: f64,
    pub verdict: Verdict,
}

/// Runs the regularized problem for every ε and fits the growth rate of `E_m²`.
pub fn growth_experiment(
    spec: &SystemSpec,
    q0: &TorusField,
    m: usize,
    eps_list: &[f64],
    config: &SolverConfig,
) -> Result<GrowthSummary> {
    if eps_list.is_empty() || eps_list.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
        return Err(Error::DegenerateLadder(format!("ε list {eps_list:?} must be nonempty inside (0, 1)")));
    }
    if m < 2 {
        return Err(Error::InvalidParameter("growth experiments need m ≥ 2".into()));
    }
    let runs = run_all(spec, q0, config, eps_list)?;
    let reports: Vec<EnergyReport> = runs.iter().map(|r| energy_report(r, m)).collect::<Result<_>>()?;
    let rates: Vec<f64> = reports.iter().map(|r| r.growth_rate).collect();
    let (lo, hi) = rates
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| (a.min(*r), b.max(*r)));
    let spread = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    let max_sandwich_constant = reports.iter().map(|r| r.sandwich_constant).fold(0.0, f64::max);
    let verdict = if reports.iter().any(|r| r.blow_up.is_some()) {
        Verdict::Fail
    } else if !spread.is_finite() {
        Verdict::Inconclusive
    } else if spread <= 2.0 && max_sandwich_constant <= SANDWICH_CONSTANT_MAX {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(GrowthSummary {
        m,
        reports,
        spread,
        max_sandwich_constant,
        verdict,
    })
}

/// Settings of the loss-of-derivatives probe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossProbeOptions {
    #[serde(rename = "N")]
    pub grid_points: usize,
    /// Amplitude of the injected mode.
    pub amplitude: f64,
    /// Modes of the smooth background.
    pub smooth_band: i64,
    /// Largest coefficient of the smooth background.
    pub smooth_scale: f64,
    pub seed: u64,
}

impl Default for LossProbeOptions {
    fn default() -> Self {
        Self {
            grid_points: 512,
            amplitude: 1e-6,
            smooth_band: 1,
            smooth_scale: 0.3,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossProbeReport {
    pub m: usize,
    pub k_list: Vec<f64>,
    /// Change of `‖residual‖_{L²}` caused by the injected mode.
    pub residual_norms: Vec<f64>,
    /// Change of `‖∂ₓᵐF‖_{L²}` caused by the injected mode.
    pub full_norms: Vec<f64>,
    /// Residual of the smooth background alone.
    pub baseline_residual: f64,
    pub residual_fit: Option<LogLogFit>,
    pub full_fit: Option<LogLogFit>,
    pub residual_bound: f64,
    pub full_bound: f64,
    pub verdict: Verdict,
}

/// Injects `A e^{iKx}` into a smooth background and measures how the
/// unstructured remainder of `∂ₓᵐF` and the full `∂ₓᵐF` respond as `K` grows.
pub fn loss_probe(spec: &SystemSpec, m: usize, k_list: &[i64], options: &LossProbeOptions) -> Result<LossProbeReport> {
    let grid = TorusGrid::new(options.grid_points)?;
    if k_list.len() < 2 || k_list.iter().any(|k| *k <= options.smooth_band || 3 * *k > grid.k_max()) {
        return Err(Error::DegenerateLadder(format!(
            "probe modes {k_list:?} must exceed the background band and satisfy 3K < N/2"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let raw = TorusField::random_band_limited(spec.n(), grid, options.smooth_band, &mut rng);
    let smooth = raw.scale_real(options.smooth_scale / raw.max_abs_coeff().max(f64::MIN_POSITIVE));
    let base = dxm_decomposition(spec, &smooth, m)?;
    let mut residual_norms = Vec::new();
    let mut full_norms = Vec::new();
    for &k in k_list {
        let mut bump = TorusField::zeros(spec.n(), grid);
        for c in 0..spec.n() {
            bump = bump.add(&TorusField::plane_wave(spec.n(), grid, c, k, C64::new(options.amplitude, 0.0)));
        }
        let d = dxm_decomposition(spec, &smooth.add(&bump), m)?;
        residual_norms.push(d.residual.sub(&base.residual).l2_norm());
        full_norms.push(d.full.sub(&base.full).l2_norm());
    }
    let ks: Vec<f64> = k_list.iter().map(|k| *k as f64).collect();
    let residual_fit = fit_loglog(&ks, &residual_norms).ok();
    let full_fit = fit_loglog(&ks, &full_norms).ok();
    let residual_bound = m as f64 + 0.3;
    let full_bound = m as f64 + 1.7;
    let verdict = match (residual_fit, full_fit) {
        (Some(r), Some(f)) if r.r_squared >= MIN_R_SQUARED && f.r_squared >= MIN_R_SQUARED => {
            if r.slope <= residual_bound && f.slope >= full_bound {
                Verdict::Pass
            } else {
                Verdict::Fail
            }
        }
        _ => Verdict::Inconclusive,
    };
    Ok(LossProbeReport {
        m,
        k_list: ks,
        residual_norms,
        full_norms,
        baseline_residual: base.residual.l2_norm(),
        residual_fit,
        full_fit,
        residual_bound,
        full_bound,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{builtin_system, BuiltinParams, Dispersion, Tail};
    use crate::tensor::{sample_admissible, CoeffTensor};
    use std::f64::consts::PI;

    fn all_i_spec() -> SystemSpec {
        SystemSpec::from_tensor(1.0, CoeffTensor::from_fn(1, |_, _, _, _, _| I)).unwrap()
    }

    fn wzy(n: usize) -> SystemSpec {
        builtin_system("wzy", n, &BuiltinParams::default()).unwrap()
    }

    #[test]
    fn energy_examples() {
        let g = TorusGrid::new(32).unwrap();
        let spec = all_i_spec();
        let c = TorusField::constant(g, &[C64::new(0.6, 0.8)]);
        assert!((energy_em(&spec, &c, 4).unwrap() - (2.0 * PI).sqrt()).abs() <= 1e-13);
        let e1 = TorusField::plane_wave(1, g, 0, 1, C64::new(1.0, 0.0));
        let expected = (8.0 * PI + 25.0 / 64.0 * 2.0 * PI).sqrt();
        assert!((energy_em(&spec, &e1, 4).unwrap() - expected).abs() <= 1e-13);
        assert_eq!(energy_em(&spec, &TorusField::zeros(1, g), 4).unwrap(), 0.0);
    }

    #[test]
    fn e1_examples() {
        let g = TorusGrid::new(32).unwrap();
        let spec = all_i_spec();
        let zero = TorusField::zeros(1, g);
        let e1 = TorusField::plane_wave(1, g, 0, 1, C64::new(1.0, 0.0));
        assert_eq!(modified_energy_e1(&spec, &zero, &e1, 1.0).unwrap(), 0.0);
        assert!((modified_energy_e1(&spec, &e1, &zero, 1.0).unwrap() - 3.0 * PI).abs() <= 1e-13);
        assert!(modified_energy_e1(&spec, &e1, &zero, 0.0).is_err());
    }

    #[test]
    fn e1_sandwich_with_auto_a() {
        let g = TorusGrid::new(64).unwrap();
        let spec = wzy(2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pairs: Vec<(TorusField, TorusField)> = (0..8)
            .map(|_| {
                (
                    TorusField::random_band_limited(2, g, 6, &mut rng),
                    TorusField::random_band_limited(2, g, 3, &mut rng).scale_real(0.5),
                )
            })
            .collect();
        let a = auto_a(&spec, &pairs).unwrap();
        for (w, qref) in &pairs {
            let e = modified_energy_e1(&spec, w, qref, a).unwrap();
            let h1 = w.sobolev_norm(1).powi(2);
            assert!(0.5 * h1 <= e && e <= 3.0 * a * h1);
        }
    }

    #[test]
    fn audit_passes_on_admissible_specs() {
        let g = TorusGrid::new(64).unwrap();
        for (n, seed) in [(1, 1), (2, 2), (3, 3)] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let spec = SystemSpec::from_tensor(1.0, sample_admissible(n, &mut rng)).unwrap();
            let (q, v, w) = random_audit_fields(n, g, 5, seed);
            let audit = identity_audit(&spec, &q, &v, &w, 4).unwrap();
            assert!(audit.passed, "n = {n}: {:#?}", audit.rows);
        }
        let (q, v, w) = random_audit_fields(2, g, 5, 7);
        assert!(identity_audit(&wzy(2), &q, &v, &w, 4).unwrap().passed);
    }

    #[test]
    fn audit_on_zero_q_is_exactly_zero() {
        let g = TorusGrid::new(32).unwrap();
        let (_, v, w) = random_audit_fields(2, g, 5, 1);
        let q = TorusField::zeros(2, g);
        let audit = identity_audit(&wzy(2), &q, &v, &w, 4).unwrap();
        assert_eq!(audit.max_residual, 0.0);
    }

    #[test]
    fn audit_detects_real_coefficients() {
        let g = TorusGrid::new(64).unwrap();
        let spec = SystemSpec::from_tensor(1.0, CoeffTensor::from_fn(1, |_, _, _, _, _| C64::new(1.0, 0.0))).unwrap();
        let (q, v, w) = random_audit_fields(1, g, 5, 3);
        let audit = identity_audit(&spec, &q, &v, &w, 4).unwrap();
        let skew = (1..=5)
            .map(|l| audit.residual("P2 skew-symmetry", Some(l)).unwrap())
            .fold(0.0, f64::max);
        assert!(skew > VIOLATION_THRESHOLD);
    }

    #[test]
    fn diagonal_commutator_row_appears_only_for_diagonal_dispersion() {
        let g = TorusGrid::new(32).unwrap();
        let (q, v, w) = random_audit_fields(2, g, 3, 4);
        let spec = wzy(2).with_tail(Tail::default());
        assert!(identity_audit(&spec, &q, &v, &w, 4).unwrap().residual("[M_a, L] = 0", None).is_none());
        let diag = spec.with_dispersion(Dispersion::Diagonal(vec![1.0, 2.0])).unwrap();
        assert!(identity_audit(&diag, &q, &v, &w, 4).unwrap().residual("[M_a, L] = 0", None).is_some());
    }

    #[test]
    fn loglog_fit_recovers_power_laws() {
        let x = [0.5, 0.25, 0.125, 0.0625];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(2.5)).collect();
        let f = fit_loglog(&x, &y).unwrap();
        assert!((f.slope - 2.5).abs() < 1e-12 && (f.r_squared - 1.0).abs() < 1e-12);
        assert!(fit_loglog(&x[..1], &y[..1]).is_err());
        assert!(fit_loglog(&[1.0, 1.0], &[1.0, 2.0]).is_err());
        assert!(fit_loglog(&[1.0, 2.0], &[0.0, 2.0]).is_err());
    }

    #[test]
    fn rate_reports_flag_noisy_fits_as_inconclusive() {
        let r = RateReport::from_fit("t", vec![0.5, 0.25, 0.125, 0.0625], vec![1.0, 0.1, 1.0, 0.1], 1.0, [0.0, 2.0]).unwrap();
        assert_eq!(r.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn band_limited_data_has_zero_mollifier_gap() {
        let g = TorusGrid::new(128).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = TorusField::random_band_limited(1, g, 4, &mut rng);
        for e in [0.1, 0.05, 0.01] {
            assert_eq!(q.sub(&q.mollify(e).unwrap()).max_abs_coeff(), 0.0);
        }
        assert!(bs_rate_experiment(&q, 4, &[1], &[0.1, 0.2], 0.1).is_err());
    }

    #[test]
    fn zero_tensor_probe_is_identically_zero() {
        let spec = SystemSpec::from_tensor(1.0, CoeffTensor::zeros(1)).unwrap();
        let opts = LossProbeOptions {
            grid_points: 256,
            ..LossProbeOptions::default()
        };
        let r = loss_probe(&spec, 2, &[8, 16], &opts).unwrap();
        assert!(r.residual_norms.iter().chain(&r.full_norms).all(|v| *v == 0.0));
        assert_eq!(r.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn growth_without_nonlinearity_is_flat() {
        let g = TorusGrid::new(32).unwrap();
        let spec = SystemSpec::from_tensor(1.0, CoeffTensor::zeros(1)).unwrap();
        let q0 = TorusField::plane_wave(1, g, 0, 1, C64::new(0.2, 0.0));
        let cfg = SolverConfig {
            grid_points: 32,
            dt: 1e-3,
            t_final: 0.05,
            ..SolverConfig::default()
        };
        // ε small enough that damping of k = 1 is below round-off.
        let s = growth_experiment(&spec, &q0, 4, &[1e-4], &cfg).unwrap();
        assert!(s.reports[0].growth_rate.abs() <= 1e-10);
    }
}
