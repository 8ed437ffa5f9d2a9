//! Fields on the uniform torus grid and their Fourier calculus.
//!
//! A field stores, per component, the coefficients `c_k` of
//! `f(x) = Σ_k c_k e^{ikx}` in FFT order (index `i` holds `k = i` for
//! `i ≤ N/2` and `k = i − N` above). The Nyquist mode `k = N/2` is kept in
//! storage but lies outside the resolved band: derivatives annihilate it and
//! products never produce it.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{Fft, FftDirection, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest derivative order supported by [`TorusField::derivative`] and
/// [`TorusField::sobolev_norm`].
pub const MAX_DERIVATIVE: usize = 8;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

type PlanCache = Mutex<HashMap<(usize, bool), Arc<dyn Fft<f64>>>>;

fn plan(len: usize, forward: bool) -> Arc<dyn Fft<f64>> {
    static CACHE: OnceLock<PlanCache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    guard
        .entry((len, forward))
        .or_insert_with(|| {
            let dir = if forward {
                FftDirection::Forward
            } else {
                FftDirection::Inverse
            };
            FftPlanner::new().plan_fft(len, dir)
        })
        .clone()
}

/// Grid values to canonical coefficients.
pub fn forward(values: &[C64]) -> Vec<C64> {
    let mut buf = values.to_vec();
    plan(buf.len(), true).process(&mut buf);
    let scale = 1.0 / buf.len() as f64;
    for z in &mut buf {
        *z *= scale;
    }
    buf
}

/// Canonical coefficients to grid values.
pub fn inverse(coeffs: &[C64]) -> Vec<C64> {
    let mut buf = coeffs.to_vec();
    plan(buf.len(), false).process(&mut buf);
    buf
}

/// Signed wavenumber stored at FFT index `i` of a length-`len` array.
#[inline]
pub fn wavenumber(i: usize, len: usize) -> i64 {
    if i <= len / 2 {
        i as i64
    } else {
        i as i64 - len as i64
    }
}

/// FFT index of wavenumber `k` in a length-`len` array.
#[inline]
fn slot(k: i64, len: usize) -> usize {
    k.rem_euclid(len as i64) as usize
}

/// Uniform grid `x_i = 2πi/N` on the torus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TorusGrid {
    n_points: usize,
}

impl TorusGrid {
    pub fn new(n_points: usize) -> Result<Self> {
        if n_points < 8 || !n_points.is_power_of_two() {
            return Err(Error::InvalidGrid(n_points));
        }
        Ok(Self { n_points })
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_points)
            .map(|i| 2.0 * PI * i as f64 / self.n_points as f64)
            .collect()
    }

    /// Wavenumbers in FFT order.
    pub fn wavenumbers(&self) -> Vec<i64> {
        (0..self.n_points).map(|i| wavenumber(i, self.n_points)).collect()
    }

    /// Largest resolved wavenumber, `N/2 − 1`.
    pub fn k_max(&self) -> i64 {
        self.n_points as i64 / 2 - 1
    }

    /// Length of the 3/2-rule padded grid.
    pub fn padded_len(&self) -> usize {
        3 * self.n_points / 2
    }

    #[inline]
    fn is_nyquist(&self, i: usize) -> bool {
        i == self.n_points / 2
    }
}

/// An `n`-component complex field on a [`TorusGrid`].
#[derive(Clone, Debug, PartialEq)]
pub struct TorusField {
    grid: TorusGrid,
    coeffs: Vec<Vec<C64>>,
}

impl TorusField {
    pub fn zeros(n: usize, grid: TorusGrid) -> Self {
        Self {
            grid,
            coeffs: vec![vec![ZERO; grid.len()]; n],
        }
    }

    pub fn from_coeffs(grid: TorusGrid, coeffs: Vec<Vec<C64>>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::ShapeMismatch("field needs at least one component".into()));
        }
        if let Some(c) = coeffs.iter().find(|c| c.len() != grid.len()) {
            return Err(Error::ShapeMismatch(format!(
                "component has {} coefficients on an N = {} grid",
                c.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, coeffs })
    }

    pub fn from_values(grid: TorusGrid, values: &[Vec<C64>]) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| v.len() != grid.len()) {
            return Err(Error::ShapeMismatch(format!(
                "component has {} samples on an N = {} grid",
                v.len(),
                grid.len()
            )));
        }
        Self::from_coeffs(grid, values.iter().map(|v| forward(v)).collect())
    }

    /// Samples `f(component, x)` on the grid.
    pub fn from_fn(n: usize, grid: TorusGrid, f: impl Fn(usize, f64) -> C64) -> Self {
        let x = grid.nodes();
        let values: Vec<Vec<C64>> = (0..n).map(|c| x.iter().map(|&x| f(c, x)).collect()).collect();
        Self::from_values(grid, &values).expect("sampled values have grid length")
    }

    /// `amplitude · e^{ikx}` in one component, zero elsewhere.
    pub fn plane_wave(n: usize, grid: TorusGrid, component: usize, k: i64, amplitude: C64) -> Self {
        let mut f = Self::zeros(n, grid);
        f.coeffs[component][slot(k, grid.len())] = amplitude;
        f
    }

    /// A constant field.
    pub fn constant(grid: TorusGrid, values: &[C64]) -> Self {
        let mut f = Self::zeros(values.len(), grid);
        for (c, v) in values.iter().enumerate() {
            f.coeffs[c][0] = *v;
        }
        f
    }

    /// Seeded random field with every coefficient of `|k| ≤ k_band` drawn
    /// uniformly from the unit square, all others zero.
    pub fn random_band_limited(n: usize, grid: TorusGrid, k_band: i64, rng: &mut impl Rng) -> Self {
        let mut f = Self::zeros(n, grid);
        let k_band = k_band.min(grid.k_max());
        for c in 0..n {
            for k in -k_band..=k_band {
                f.coeffs[c][slot(k, grid.len())] =
                    C64::new(rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0));
            }
        }
        f
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    /// Number of components.
    pub fn n(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[Vec<C64>] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Vec<C64>] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Vec<C64>> {
        self.coeffs
    }

    /// Coefficient of `e^{ikx}` in `component`.
    pub fn coeff(&self, component: usize, k: i64) -> C64 {
        if k.unsigned_abs() as usize > self.grid.len() / 2 {
            return ZERO;
        }
        self.coeffs[component][slot(k, self.grid.len())]
    }

    pub fn values(&self) -> Vec<Vec<C64>> {
        self.coeffs.iter().map(|c| inverse(c)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs
            .iter()
            .flatten()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max)
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid || self.n() != other.n() {
            return Err(Error::ShapeMismatch(format!(
                "(n = {}, N = {}) against (n = {}, N = {})",
                self.n(),
                self.grid.len(),
                other.n(),
                other.grid.len()
            )));
        }
        Ok(())
    }

    fn zip_with(&self, other: &Self, f: impl Fn(C64, C64) -> C64) -> Self {
        assert!(self.same_shape(other).is_ok(), "field shapes differ");
        Self {
            grid: self.grid,
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect())
                .collect(),
        }
    }

    fn map_coeffs(&self, f: impl Fn(usize, C64) -> C64) -> Self {
        Self {
            grid: self.grid,
            coeffs: self
                .coeffs
                .iter()
                .map(|c| c.iter().enumerate().map(|(i, z)| f(i, *z)).collect())
                .collect(),
        }
    }

    /// Panics on shape mismatch.
    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    /// Panics on shape mismatch.
    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, c: C64) -> Self {
        self.map_coeffs(|_, z| z * c)
    }

    pub fn scale_real(&self, c: f64) -> Self {
        self.map_coeffs(|_, z| z * c)
    }

    /// `self + c · other`. Panics on shape mismatch.
    pub fn axpy(&self, c: C64, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + c * b)
    }

    /// Multiplies component `j` by `d[j]`.
    pub fn scale_components(&self, d: &[C64]) -> Self {
        assert_eq!(d.len(), self.n(), "one factor per component");
        Self {
            grid: self.grid,
            coeffs: self
                .coeffs
                .iter()
                .zip(d)
                .map(|(c, s)| c.iter().map(|z| z * s).collect())
                .collect(),
        }
    }

    /// Pointwise complex conjugate.
    pub fn conj(&self) -> Self {
        let len = self.grid.len();
        Self {
            grid: self.grid,
            coeffs: self
                .coeffs
                .iter()
                .map(|c| (0..len).map(|i| c[(len - i) % len].conj()).collect())
                .collect(),
        }
    }

    /// `∂ₓ^order` through the multiplier `(ik)^order` on the resolved band.
    pub fn derivative(&self, order: usize) -> Self {
        assert!(order <= MAX_DERIVATIVE, "derivative order {order} exceeds {MAX_DERIVATIVE}");
        if order == 0 {
            return self.clone();
        }
        let len = self.grid.len();
        let mult: Vec<C64> = (0..len)
            .map(|i| {
                if self.grid.is_nyquist(i) {
                    ZERO
                } else {
                    C64::new(0.0, wavenumber(i, len) as f64).powu(order as u32)
                }
            })
            .collect();
        self.map_coeffs(|i, z| z * mult[i])
    }

    /// `Σ_j ∫ f_j conj(g_j) dx`.
    pub fn inner(&self, other: &Self) -> Result<C64> {
        self.same_shape(other)?;
        let mut acc = ZERO;
        for (a, b) in self.coeffs.iter().zip(&other.coeffs) {
            for (x, y) in a.iter().zip(b) {
                acc += x * y.conj();
            }
        }
        Ok(acc * (2.0 * PI))
    }

    pub fn l2_norm(&self) -> f64 {
        self.sobolev_norm(0)
    }

    /// `(Σ_{ℓ ≤ m} ‖∂ₓ^ℓ f‖²_{L²})^{1/2}`.
    pub fn sobolev_norm(&self, m: usize) -> f64 {
        assert!(m <= MAX_DERIVATIVE, "Sobolev index {m} exceeds {MAX_DERIVATIVE}");
        let len = self.grid.len();
        let weights: Vec<f64> = (0..len)
            .map(|i| {
                if self.grid.is_nyquist(i) {
                    1.0
                } else {
                    sobolev_weight(wavenumber(i, len), m)
                }
            })
            .collect();
        let mut acc = 0.0;
        for c in &self.coeffs {
            for (z, w) in c.iter().zip(&weights) {
                acc += z.norm_sqr() * w;
            }
        }
        (2.0 * PI * acc).sqrt()
    }

    /// Componentwise dealiased product `f_j g_j`.
    pub fn product_dealiased(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| {
                let pa = pad_values(a);
                let pb = pad_values(b);
                let prod: Vec<C64> = pa.iter().zip(&pb).map(|(x, y)| x * y).collect();
                truncate_values(&prod, self.grid.len())
            })
            .collect();
        Ok(Self { grid: self.grid, coeffs })
    }

    /// Multiplies coefficient `k` by `φ(εk)`.
    pub fn mollify(&self, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::InvalidParameter(format!("mollifier scale {eps} must lie in (0, 1)")));
        }
        Ok(self.mollify_unchecked(eps))
    }

    pub(crate) fn mollify_unchecked(&self, eps: f64) -> Self {
        let len = self.grid.len();
        let weights: Vec<f64> = (0..len)
            .map(|i| CutoffProfile.eval(eps * wavenumber(i, len) as f64))
            .collect();
        self.map_coeffs(|i, z| z * weights[i])
    }

    /// Spectral interpolation onto a grid of another size.
    pub fn resample(&self, grid: TorusGrid) -> Self {
        let (old, new) = (self.grid.len(), grid.len());
        let band = (old.min(new) / 2) as i64 - 1;
        let mut out = Self::zeros(self.n(), grid);
        for (dst, src) in out.coeffs.iter_mut().zip(&self.coeffs) {
            for k in -band..=band {
                dst[slot(k, new)] = src[slot(k, old)];
            }
        }
        out
    }

    /// Keeps only the modes with `|k| ≤ k_band`.
    pub fn band_limit(&self, k_band: i64) -> Self {
        let len = self.grid.len();
        self.map_coeffs(|i, z| {
            if wavenumber(i, len).abs() <= k_band && !self.grid.is_nyquist(i) {
                z
            } else {
                ZERO
            }
        })
    }

    /// Largest `|k|` carrying a coefficient above `tol`.
    pub fn support_radius(&self, tol: f64) -> i64 {
        let len = self.grid.len();
        self.coeffs
            .iter()
            .flat_map(|c| c.iter().enumerate())
            .filter(|(_, z)| z.norm() > tol)
            .map(|(i, _)| wavenumber(i, len).abs())
            .max()
            .unwrap_or(0)
    }

    pub fn to_document(&self) -> FieldDocument {
        let len = self.grid.len();
        let mut coefficients = Vec::new();
        for (c, coeffs) in self.coeffs.iter().enumerate() {
            let mut ks: Vec<(i64, C64)> = coeffs
                .iter()
                .enumerate()
                .map(|(i, z)| (wavenumber(i, len), *z))
                .collect();
            ks.sort_by_key(|(k, _)| *k);
            for (k, z) in ks {
                coefficients.push(CoefficientRecord {
                    component: c + 1,
                    k,
                    re: z.re,
                    im: z.im,
                });
            }
        }
        FieldDocument {
            n: self.n(),
            grid_points: len,
            coefficients,
        }
    }

    pub fn from_document(doc: &FieldDocument) -> Result<Self> {
        let grid = TorusGrid::new(doc.grid_points)?;
        if doc.n == 0 {
            return Err(Error::ShapeMismatch("field document with n = 0".into()));
        }
        let mut f = Self::zeros(doc.n, grid);
        let half = grid.len() as i64 / 2;
        for rec in &doc.coefficients {
            if rec.component == 0 || rec.component > doc.n {
                return Err(Error::ShapeMismatch(format!("component {} outside 1..={}", rec.component, doc.n)));
            }
            if rec.k <= -half || rec.k > half {
                return Err(Error::ShapeMismatch(format!("wavenumber {} outside the grid band", rec.k)));
            }
            f.coeffs[rec.component - 1][slot(rec.k, grid.len())] = C64::new(rec.re, rec.im);
        }
        Ok(f)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_document(&serde_json::from_str(text)?)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        file.write_all(self.to_json()?.as_bytes())?;
        Ok(())
    }
}

/// `Σ_{ℓ ≤ m} k^{2ℓ}`.
pub fn sobolev_weight(k: i64, m: usize) -> f64 {
    let k2 = (k as f64).powi(2);
    let mut term = 1.0;
    let mut acc = 0.0;
    for _ in 0..=m {
        acc += term;
        term *= k2;
    }
    acc
}

/// Coefficients on the 3/2-padded grid, returned as padded grid values.
/// The Nyquist coefficient is split evenly between `±N/2`.
pub fn pad_values(coeffs: &[C64]) -> Vec<C64> {
    let len = coeffs.len();
    let big = 3 * len / 2;
    let half = len / 2;
    let mut padded = vec![ZERO; big];
    for (i, z) in coeffs.iter().enumerate() {
        if i == half {
            padded[half] = 0.5 * z;
            padded[big - half] = 0.5 * z;
        } else {
            padded[slot(wavenumber(i, len), big)] = *z;
        }
    }
    inverse(&padded)
}

/// Padded grid values back to the resolved band of a length-`len` grid.
pub fn truncate_values(values: &[C64], len: usize) -> Vec<C64> {
    let big = values.len();
    let full = forward(values);
    let mut out = vec![ZERO; len];
    let band = len as i64 / 2 - 1;
    for k in -band..=band {
        out[slot(k, len)] = full[slot(k, big)];
    }
    out
}

/// The mollifier profile `φ`: identically 1 on `[−1/2, 1/2]`, identically 0
/// outside `[−2, 2]`, and a `C^∞` monotone transition built from
/// `h(s) = exp(−1/s)` in between.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CutoffProfile;

impl CutoffProfile {
    pub const PLATEAU: f64 = 0.5;
    pub const SUPPORT: f64 = 2.0;

    pub fn eval(&self, s: f64) -> f64 {
        let a = s.abs();
        if a <= Self::PLATEAU {
            return 1.0;
        }
        if a >= Self::SUPPORT {
            return 0.0;
        }
        let t = (a - Self::PLATEAU) / (Self::SUPPORT - Self::PLATEAU);
        let h = |u: f64| if u > 0.0 { (-1.0 / u).exp() } else { 0.0 };
        let (up, down) = (h(1.0 - t), h(t));
        up / (up + down)
    }
}

/// Field of exact `H^{m+δ}`-type regularity: coefficient magnitudes
/// `(1+|k|)^{−(m+1/2+δ)}` with seeded phases.
///
/// Phases are drawn in order of increasing `|k|`, so refining the grid keeps
/// every coarse coefficient unchanged. The Nyquist mode is left empty.
pub fn synthesize_sobolev_data(
    n: usize,
    grid: TorusGrid,
    m: usize,
    delta: f64,
    seed: u64,
) -> Result<TorusField> {
    if !(delta > 0.0 && delta <= 0.5) {
        return Err(Error::InvalidParameter(format!("delta = {delta} must lie in (0, 1/2]")));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("n must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let exponent = m as f64 + 0.5 + delta;
    let mut f = TorusField::zeros(n, grid);
    let len = grid.len();
    for kk in 0..=grid.k_max() {
        let mag = (1.0 + kk as f64).powf(-exponent);
        let signs: &[i64] = if kk == 0 { &[1] } else { &[1, -1] };
        for c in 0..n {
            for s in signs {
                let theta = rng.gen_range(0.0..2.0 * PI);
                f.coeffs[c][slot(s * kk, len)] = C64::from_polar(mag, theta);
            }
        }
    }
    Ok(f)
}

/// Serialized field: coefficient records with one-based components.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldDocument {
    pub n: usize,
    #[serde(rename = "N")]
    pub grid_points: usize,
    pub coefficients: Vec<CoefficientRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRecord {
    pub component: usize,
    pub k: i64,
    pub re: f64,
    pub im: f64,
}

/// One row of a mollifier norm table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormRow {
    pub epsilon: f64,
    pub ell: usize,
    pub norm: f64,
    pub ratio: f64,
}

/// Gap norms `‖f − mollify(f, ε)‖_{H^{m−ℓ}}` with their ratio to `ε^ℓ ‖f‖_{H^m}`.
pub fn mollifier_gap_table(f: &TorusField, m: usize, ells: &[usize], eps: &[f64]) -> Result<Vec<NormRow>> {
    let base = f.sobolev_norm(m);
    let mut rows = Vec::new();
    for &e in eps {
        let gap = f.sub(&f.mollify(e)?);
        for &ell in ells {
            if ell > m {
                return Err(Error::InvalidParameter(format!("ell = {ell} exceeds m = {m}")));
            }
            let norm = gap.sobolev_norm(m - ell);
            rows.push(NormRow {
                epsilon: e,
                ell,
                norm,
                ratio: norm / (e.powi(ell as i32) * base),
            });
        }
    }
    Ok(rows)
}

pub fn write_norm_table(path: &Path, rows: &[NormRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
