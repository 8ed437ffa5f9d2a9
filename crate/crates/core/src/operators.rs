//! The nonlinearity, the structure operators `P_k^ℓ`, the gauge maps `Λ_k`
//! and the decompositions of `∂ₓF` and `∂ₓᵐF`.
//!
//! Every trilinear expression `Σ_{p,q,r} c^j_{pqr} a_p b_q c_r` is evaluated as
//! the dealiased product `(a_p b_q)` followed by a second dealiased product
//! with `Σ_r c^j_{pqr} c_r`, which is exact on band-limited inputs.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{pad_values, truncate_values, TorusField};
use crate::system::{GaugeWeights, SystemSpec};
use crate::tensor::{check_conditions, CoeffTensor, STensor, DEFAULT_TOLERANCE};

const I: C64 = C64 { re: 0.0, im: 1.0 };
const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Highest `m` accepted by [`dxm_decomposition`].
pub const MAX_DECOMPOSITION_ORDER: usize = 6;

fn check_pair(a: &TorusField, b: &TorusField) -> Result<()> {
    if a.grid() != b.grid() || a.n() != b.n() {
        return Err(Error::ShapeMismatch(format!(
            "fields of shape (n = {}, N = {}) and (n = {}, N = {})",
            a.n(),
            a.grid().len(),
            b.n(),
            b.grid().len()
        )));
    }
    Ok(())
}

fn check_spec(spec: &SystemSpec, q: &TorusField) -> Result<()> {
    if spec.n() != q.n() {
        return Err(Error::ShapeMismatch(format!(
            "system has {} components, field has {}",
            spec.n(),
            q.n()
        )));
    }
    Ok(())
}

/// `out_j = Σ_{p,q,r} coef(j,p,q,r) a_p b_q c_r`, dealiased pairwise.
pub fn trilinear(
    a: &TorusField,
    b: &TorusField,
    c: &TorusField,
    coef: impl Fn(usize, usize, usize, usize) -> C64,
) -> TorusField {
    let n = a.n();
    let len = a.grid().len();
    let pa: Vec<Vec<C64>> = a.coeffs().iter().map(|x| pad_values(x)).collect();
    let pb: Vec<Vec<C64>> = b.coeffs().iter().map(|x| pad_values(x)).collect();
    let pc: Vec<Vec<C64>> = c.coeffs().iter().map(|x| pad_values(x)).collect();
    let big = pa[0].len();

    let mut ab: Vec<Vec<Option<Vec<C64>>>> = vec![vec![None; n]; n];
    let mut out = Vec::with_capacity(n);
    for j in 0..n {
        let mut acc = vec![ZERO; big];
        let mut touched = false;
        for p in 0..n {
            for q in 0..n {
                let weights: Vec<C64> = (0..n).map(|r| coef(j, p, q, r)).collect();
                if weights.iter().all(|w| *w == ZERO) {
                    continue;
                }
                let prod = ab[p][q].get_or_insert_with(|| {
                    let raw: Vec<C64> = pa[p].iter().zip(&pb[q]).map(|(x, y)| x * y).collect();
                    pad_values(&truncate_values(&raw, len))
                });
                for (x, acc_x) in acc.iter_mut().enumerate() {
                    let mut cv = ZERO;
                    for (r, w) in weights.iter().enumerate() {
                        cv += w * pc[r][x];
                    }
                    *acc_x += prod[x] * cv;
                }
                touched = true;
            }
        }
        out.push(if touched {
            truncate_values(&acc, len)
        } else {
            vec![ZERO; len]
        });
    }
    TorusField::from_coeffs(a.grid(), out).expect("trilinear output has the input shape")
}

fn s_level(s: &STensor, level: usize) -> impl Fn(usize, usize, usize, usize) -> C64 + '_ {
    move |j, p, q, r| s.get(level, j, p, q, r)
}

/// The nonlinearity `F(Q)`, including the tail.
pub fn nonlinearity_f(spec: &SystemSpec, q: &TorusField) -> Result<TorusField> {
    check_spec(spec, q)?;
    let w = spec.omega();
    let qb = q.conj();
    let y = q.derivative(1);
    let yb = y.conj();
    let q2 = q.derivative(2);
    let q2b = q2.conj();
    let fam = |k: usize| move |j, p, qq, r| w.get(k, j, p, qq, r);
    let mut f = trilinear(&q2, &qb, q, fam(1))
        .add(&trilinear(&q2b, q, q, fam(2)))
        .add(&trilinear(&y, &yb, q, fam(3)))
        .add(&trilinear(&y, &y, &qb, fam(4)));
    let tail = spec.tail();
    if !tail.is_empty() {
        f = f.add(&tail_terms(tail.cubic, tail.quintic, q)?);
    }
    Ok(f)
}

fn tail_terms(cubic: C64, quintic: C64, q: &TorusField) -> Result<TorusField> {
    let n = q.n();
    let modsq = q.product_dealiased(&q.conj())?;
    let mut total = vec![ZERO; q.grid().len()];
    for c in modsq.coeffs() {
        for (t, z) in total.iter_mut().zip(c) {
            *t += z;
        }
    }
    let density = TorusField::from_coeffs(q.grid(), vec![total; n])?;
    let cubic_part = density.product_dealiased(q)?;
    let mut out = cubic_part.scale(cubic);
    if quintic != ZERO {
        let quartic = density.product_dealiased(&density)?;
        out = out.add(&quartic.product_dealiased(q)?.scale(quintic));
    }
    Ok(out)
}

/// `P_k^ℓ(Q) v` for `k, ℓ ∈ 1..=5`.
pub fn apply_p(s: &STensor, kind: usize, level: usize, q: &TorusField, v: &TorusField) -> Result<TorusField> {
    check_pair(q, v)?;
    if s.n() != q.n() {
        return Err(Error::ShapeMismatch(format!("S has n = {}, fields have n = {}", s.n(), q.n())));
    }
    if !(1..=5).contains(&kind) || !(1..=5).contains(&level) {
        return Err(Error::InvalidParameter(format!("P_{kind}^{level} is not defined")));
    }
    let c = s_level(s, level);
    let qb = q.conj();
    Ok(match kind {
        1 => {
            let vb = v.conj();
            trilinear(v, &qb, q, &c).add(&trilinear(q, &vb, q, &c)).scale(-I)
        }
        2 => trilinear(q, &qb, v, &c).scale(2.0 * I),
        3 => {
            let y = q.derivative(1);
            trilinear(&y, &qb, v, &c).add(&trilinear(q, &y.conj(), v, &c)).scale(I)
        }
        4 => {
            let y = q.derivative(1);
            trilinear(&y, &qb, v, &c).sub(&trilinear(q, &y.conj(), v, &c)).scale(I)
        }
        _ => {
            let y = q.derivative(1);
            trilinear(&y, &v.conj(), q, &c).scale(-2.0 * I)
        }
    })
}

/// Combined first-order operators carrying the `m`-dependent weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PCombo {
    /// `P₃³ − (m−1)P₃¹ + 2(m−1)P₃²`
    P3m,
    /// `P₅⁵ + (m−1)P₅¹`
    P5m,
}

pub fn apply_p_combo(s: &STensor, m: usize, which: PCombo, q: &TorusField, v: &TorusField) -> Result<TorusField> {
    if m == 0 {
        return Err(Error::InvalidParameter("combined operators need m ≥ 1".into()));
    }
    let mm = (m - 1) as f64;
    match which {
        PCombo::P3m => {
            let mut out = apply_p(s, 3, 3, q, v)?;
            if m > 1 {
                out = out
                    .sub(&apply_p(s, 3, 1, q, v)?.scale_real(mm))
                    .add(&apply_p(s, 3, 2, q, v)?.scale_real(2.0 * mm));
            }
            Ok(out)
        }
        PCombo::P5m => {
            let mut out = apply_p(s, 5, 5, q, v)?;
            if m > 1 {
                out = out.add(&apply_p(s, 5, 1, q, v)?.scale_real(mm));
            }
            Ok(out)
        }
    }
}

/// `Λ_k(Q) v` for `k ∈ 1..=3`; `m` enters only through `Λ₃`.
pub fn apply_lambda(s: &STensor, kind: usize, m: usize, q: &TorusField, v: &TorusField) -> Result<TorusField> {
    check_pair(q, v)?;
    if s.n() != q.n() {
        return Err(Error::ShapeMismatch(format!("S has n = {}, fields have n = {}", s.n(), q.n())));
    }
    let qb = q.conj();
    match kind {
        1 => {
            let c = s_level(s, 1);
            let vb = v.conj();
            Ok(trilinear(v, &qb, q, &c).sub(&trilinear(q, &vb, q, &c)).scale_real(-0.5))
        }
        2 => Ok(trilinear(q, &qb, v, s_level(s, 1)).scale_real(-0.25)),
        3 => {
            if m == 0 {
                return Err(Error::InvalidParameter("Λ₃ needs m ≥ 1".into()));
            }
            let mm = (m - 1) as f64;
            let c = |j, p, qq, r| {
                s.get(3, j, p, qq, r) - mm * (s.get(1, j, p, qq, r) - 2.0 * s.get(2, j, p, qq, r))
            };
            Ok(trilinear(q, &qb, v, c).scale_real(-0.25))
        }
        _ => Err(Error::InvalidParameter(format!("Λ_{kind} is not defined"))),
    }
}

/// `(e₁Λ₁ + e₂Λ₂ + e₃Λ₃)(Q) v`.
pub fn apply_lambda_combo(
    s: &STensor,
    weights: GaugeWeights,
    m: usize,
    q: &TorusField,
    v: &TorusField,
) -> Result<TorusField> {
    let mut out = TorusField::zeros(q.n(), q.grid());
    for (kind, e) in [(1, weights.e1), (2, weights.e2), (3, weights.e3)] {
        if e != 0.0 {
            out = out.add(&apply_lambda(s, kind, m, q, v)?.scale_real(e));
        }
    }
    Ok(out)
}

/// `M_a^{-1} Λ(Q) v` with the default weights.
pub fn gauge_term(spec: &SystemSpec, m: usize, q: &TorusField, v: &TorusField) -> Result<TorusField> {
    check_spec(spec, q)?;
    let lv = apply_lambda_combo(spec.s(), GaugeWeights::default(), m, q, v)?;
    let inv: Vec<C64> = (0..spec.n()).map(|j| C64::new(1.0 / spec.a(j), 0.0)).collect();
    Ok(lv.scale_components(&inv))
}

/// Refuses the gauge of a non-scalar `M_a` whose tensor fails (B7)–(B9).
pub fn ensure_gauge_admissible(spec: &SystemSpec) -> Result<()> {
    if spec.is_scalar_dispersion() {
        return Ok(());
    }
    let report = check_conditions(spec.omega(), DEFAULT_TOLERANCE)?;
    if report.diagonal_set() {
        return Ok(());
    }
    let failed: Vec<String> = report
        .failed()
        .into_iter()
        .filter(|c| crate::tensor::Condition::DIAGONAL_SET.contains(c))
        .map(|c| c.to_string())
        .collect();
    Err(Error::GaugeRefused(format!(
        "non-scalar M_a requires B7, B8 and B9; failing: {}",
        failed.join(", ")
    )))
}

/// `V = ∂ₓᵐQ + M_a^{-1} Λ(Q) ∂ₓ^{m−2} Q`.
pub fn gauge_v(spec: &SystemSpec, q: &TorusField, m: usize) -> Result<TorusField> {
    check_spec(spec, q)?;
    if m < 2 {
        return Err(Error::InvalidParameter(format!("the gauge field needs m ≥ 2, got {m}")));
    }
    ensure_gauge_admissible(spec)?;
    let lower = q.derivative(m - 2);
    Ok(q.derivative(m).add(&gauge_term(spec, m, q, &lower)?))
}

/// Parts of `∂ₓF` organized by the order of `Y = ∂ₓQ` they act on.
#[derive(Clone, Debug, PartialEq)]
pub struct DxFDecomposition {
    /// `P₁¹(Q)∂ₓ²Y`
    pub principal: TorusField,
    /// `∂ₓ(P₂²(Q)∂ₓY)`
    pub divergence: TorusField,
    /// `Σ_{k=3..5} P_k^k(Q)∂ₓY`
    pub first_order: TorusField,
    /// Terms without derivatives of `Y`.
    pub cubic_remainder: TorusField,
}

impl DxFDecomposition {
    pub fn total(&self) -> TorusField {
        self.principal
            .add(&self.divergence)
            .add(&self.first_order)
            .add(&self.cubic_remainder)
    }
}

fn require_empty_tail(spec: &SystemSpec) -> Result<()> {
    if !spec.tail().is_empty() {
        return Err(Error::Unsupported(
            "decompositions assume the displayed cubic nonlinearity without a tail".into(),
        ));
    }
    Ok(())
}

pub fn dxf_decomposition(spec: &SystemSpec, q: &TorusField) -> Result<DxFDecomposition> {
    check_spec(spec, q)?;
    require_empty_tail(spec)?;
    let s = spec.s();
    let y = q.derivative(1);
    let dy = y.derivative(1);
    let principal = apply_p(s, 1, 1, q, &y.derivative(2))?;
    let divergence = apply_p(s, 2, 2, q, &dy)?.derivative(1);
    let first_order = apply_p(s, 3, 3, q, &dy)?
        .add(&apply_p(s, 4, 4, q, &dy)?)
        .add(&apply_p(s, 5, 5, q, &dy)?);
    let cubic_remainder = cubic_remainder(spec.omega(), &y);
    Ok(DxFDecomposition {
        principal,
        divergence,
        first_order,
        cubic_remainder,
    })
}

/// `Σ ω³ Y_p Ȳ_q Y_r + Σ ω⁴ Y_p Y_q Ȳ_r`, the part of `∂ₓF` cubic in `Y`.
pub fn cubic_remainder(omega: &CoeffTensor, y: &TorusField) -> TorusField {
    let yb = y.conj();
    trilinear(y, &yb, y, |j, p, q, r| omega.get(3, j, p, q, r))
        .add(&trilinear(y, y, &yb, |j, p, q, r| omega.get(4, j, p, q, r)))
}

/// Parts of `∂ₓᵐF` acting on `U = ∂ₓᵐQ`, with the remainder obtained from
/// independent spectral differentiation of `F`.
#[derive(Clone, Debug, PartialEq)]
pub struct DxmDecomposition {
    pub m: usize,
    /// `P₁¹(Q)∂ₓ²U`
    pub principal: TorusField,
    /// `∂ₓ(P₂²(Q)∂ₓU)`
    pub divergence: TorusField,
    /// `(P_{3,m} + P₄⁴ + P_{5,m})(Q)∂ₓU`
    pub first_order: TorusField,
    /// `∂ₓᵐF` by spectral differentiation.
    pub full: TorusField,
    /// `full` minus the structured parts.
    pub residual: TorusField,
}

impl DxmDecomposition {
    pub fn structured(&self) -> TorusField {
        self.principal.add(&self.divergence).add(&self.first_order)
    }
}

pub fn dxm_decomposition(spec: &SystemSpec, q: &TorusField, m: usize) -> Result<DxmDecomposition> {
    check_spec(spec, q)?;
    require_empty_tail(spec)?;
    if !(1..=MAX_DECOMPOSITION_ORDER).contains(&m) {
        return Err(Error::InvalidParameter(format!(
            "decomposition order m = {m} outside 1..={MAX_DECOMPOSITION_ORDER}"
        )));
    }
    let s = spec.s();
    let u = q.derivative(m);
    let du = u.derivative(1);
    let principal = apply_p(s, 1, 1, q, &u.derivative(2))?;
    let divergence = apply_p(s, 2, 2, q, &du)?.derivative(1);
    let first_order = apply_p_combo(s, m, PCombo::P3m, q, &du)?
        .add(&apply_p(s, 4, 4, q, &du)?)
        .add(&apply_p_combo(s, m, PCombo::P5m, q, &du)?);
    let full = nonlinearity_f(spec, q)?.derivative(m);
    let residual = full.sub(&principal).sub(&divergence).sub(&first_order);
    Ok(DxmDecomposition {
        m,
        principal,
        divergence,
        first_order,
        full,
        residual,
    })
}
