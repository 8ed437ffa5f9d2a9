//! Coefficient tensors of the cubic nonlinearity and their admissibility conditions.
//!
//! The nonlinearity of the system is built from four families of cubic terms,
//!
//! ```text
//! ω¹ ∂²Q_p  conj(Q_q)   Q_r        ω² conj(∂²Q_p) Q_q  Q_r
//! ω³ ∂Q_p   conj(∂Q_q)  Q_r        ω⁴ ∂Q_p   ∂Q_q  conj(Q_r)
//! ```
//!
//! with coefficients `ω^{k,j}_{p,q,r}`. Family labels `k` (1..=4) and S-levels
//! `ℓ` (1..=5) are one-based to match their usual names; the component indices
//! `j, p, q, r` are zero-based everywhere in the Rust API. The JSON document
//! format uses one-based indices throughout.
//!
//! Three equivalent condition sets are checked:
//!
//! * the B-set, direct (anti)symmetries of `ω`,
//! * the C-set, membership of index-permuted maps `f_k` in `iΓ`,
//! * the G-set, membership of the derived maps `S^ℓ` in `Γ`,
//!
//! where `Γ = Γ₁ ∩ Γ₂` with `Γ₁: f(p,q,r,j) = f(r,q,p,j)` and
//! `Γ₂: f(p,q,r,j) = conj f(j,r,q,p)`. Under (A1)–(A2) all three agree.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use num_complex::Complex64 as C64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used when none is given.
pub const DEFAULT_TOLERANCE: f64 = 1e-12;

/// At most this many violating tuples are kept per condition.
pub const MAX_REPORTED_VIOLATIONS: usize = 32;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// A complex map on `{0..n}⁴`, addressed as `(p, q, r, j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct IndexMap4 {
    n: usize,
    data: Vec<C64>,
}

impl IndexMap4 {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![C64::new(0.0, 0.0); n.pow(4)],
        }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize, usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(n.pow(4));
        for p in 0..n {
            for q in 0..n {
                for r in 0..n {
                    for j in 0..n {
                        data.push(f(p, q, r, j));
                    }
                }
            }
        }
        Self { n, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, p: usize, q: usize, r: usize, j: usize) -> usize {
        ((p * self.n + q) * self.n + r) * self.n + j
    }

    #[inline]
    pub fn get(&self, p: usize, q: usize, r: usize, j: usize) -> C64 {
        self.data[self.idx(p, q, r, j)]
    }

    pub fn set(&mut self, p: usize, q: usize, r: usize, j: usize, value: C64) {
        let i = self.idx(p, q, r, j);
        self.data[i] = value;
    }

    pub fn values(&self) -> &[C64] {
        &self.data
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn scaled(&self, c: C64) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|z| z * c).collect(),
        }
    }

    pub fn added(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n, "index maps of different size");
        Self {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    /// Entries with independent uniform real and imaginary parts in `[-1, 1]`.
    pub fn random(n: usize, rng: &mut impl Rng) -> Self {
        Self::from_fn(n, |_, _, _, _| {
            C64::new(rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0))
        })
    }

    /// Projection onto `Γ₁ ∩ Γ₂`.
    pub fn project_gamma(&self) -> Self {
        average_over(&gamma_group(), self)
    }

    /// Projection onto `Γ₁` alone.
    pub fn project_gamma1(&self) -> Self {
        average_over(&[Symmetry::IDENTITY, Symmetry::SWAP_PR], self)
    }

    /// Projection onto `Γ₂` alone.
    pub fn project_gamma2(&self) -> Self {
        average_over(&[Symmetry::IDENTITY, Symmetry::CONJ_REVERSE], self)
    }
}

/// A signed index permutation acting on maps: `(g·f)(x) = conj^c f(x∘perm)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
struct Symmetry {
    perm: [usize; 4],
    conj: bool,
}

impl Symmetry {
    const IDENTITY: Self = Self {
        perm: [0, 1, 2, 3],
        conj: false,
    };
    /// `f ↦ f(r, q, p, j)`
    const SWAP_PR: Self = Self {
        perm: [2, 1, 0, 3],
        conj: false,
    };
    /// `f ↦ conj f(j, r, q, p)`
    const CONJ_REVERSE: Self = Self {
        perm: [3, 2, 1, 0],
        conj: true,
    };

    /// The element acting as `self` followed by `next`.
    fn then(self, next: Self) -> Self {
        let mut perm = [0; 4];
        for (i, slot) in perm.iter_mut().enumerate() {
            *slot = self.perm[next.perm[i]];
        }
        Self {
            perm,
            conj: self.conj ^ next.conj,
        }
    }

    fn apply(&self, f: &IndexMap4) -> IndexMap4 {
        IndexMap4::from_fn(f.n, |p, q, r, j| {
            let x = [p, q, r, j];
            let v = f.get(x[self.perm[0]], x[self.perm[1]], x[self.perm[2]], x[self.perm[3]]);
            if self.conj {
                v.conj()
            } else {
                v
            }
        })
    }
}

/// The finite group generated by the two involutions defining `Γ`.
fn gamma_group() -> Vec<Symmetry> {
    let generators = [Symmetry::SWAP_PR, Symmetry::CONJ_REVERSE];
    let mut seen: HashSet<Symmetry> = HashSet::new();
    let mut elements = vec![Symmetry::IDENTITY];
    seen.insert(Symmetry::IDENTITY);
    let mut frontier = 0;
    while frontier < elements.len() {
        let g = elements[frontier];
        frontier += 1;
        for s in generators {
            let h = g.then(s);
            if seen.insert(h) {
                elements.push(h);
            }
        }
    }
    elements
}

fn average_over(group: &[Symmetry], f: &IndexMap4) -> IndexMap4 {
    let mut acc = IndexMap4::zeros(f.n);
    for g in group {
        acc = acc.added(&g.apply(f));
    }
    acc.scaled(C64::new(1.0 / group.len() as f64, 0.0))
}

/// The coefficients `ω^{k,j}_{p,q,r}` for `k ∈ 1..=4`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoeffTensor {
    n: usize,
    data: Vec<C64>,
}

impl CoeffTensor {
    pub fn zeros(n: usize) -> Self {
        assert!(n >= 1, "component count must be positive");
        Self {
            n,
            data: vec![C64::new(0.0, 0.0); 4 * n.pow(4)],
        }
    }

    /// Builds a tensor from `f(k, j, p, q, r)`.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize, usize, usize, usize) -> C64) -> Self {
        let mut t = Self::zeros(n);
        for k in 1..=4 {
            for j in 0..n {
                for p in 0..n {
                    for q in 0..n {
                        for r in 0..n {
                            t.set(k, j, p, q, r, f(k, j, p, q, r));
                        }
                    }
                }
            }
        }
        t
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, k: usize, j: usize, p: usize, q: usize, r: usize) -> usize {
        debug_assert!((1..=4).contains(&k));
        let n = self.n;
        (((((k - 1) * n + j) * n + p) * n + q) * n) + r
    }

    /// `ω^{k,j}_{p,q,r}`.
    #[inline]
    pub fn get(&self, k: usize, j: usize, p: usize, q: usize, r: usize) -> C64 {
        self.data[self.idx(k, j, p, q, r)]
    }

    pub fn set(&mut self, k: usize, j: usize, p: usize, q: usize, r: usize, value: C64) {
        let i = self.idx(k, j, p, q, r);
        self.data[i] = value;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|z| *z == C64::new(0.0, 0.0))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.n, other.n);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// The index-permuted maps `f_1..f_4` whose `iΓ`-membership is the C-set.
    pub fn c_maps(&self) -> [IndexMap4; 4] {
        let n = self.n;
        [
            IndexMap4::from_fn(n, |p, q, r, j| self.get(1, j, p, q, r)),
            IndexMap4::from_fn(n, |p, q, r, j| self.get(2, j, q, p, r)),
            IndexMap4::from_fn(n, |p, q, r, j| self.get(3, j, p, q, r)),
            IndexMap4::from_fn(n, |p, q, r, j| self.get(4, j, p, r, q)),
        ]
    }

    /// Inverse of [`CoeffTensor::c_maps`].
    pub fn from_c_maps(maps: &[IndexMap4; 4]) -> Self {
        let n = maps[0].n();
        Self::from_fn(n, |k, j, p, q, r| match k {
            1 => maps[0].get(p, q, r, j),
            2 => maps[1].get(q, p, r, j),
            3 => maps[2].get(p, q, r, j),
            _ => maps[3].get(p, r, q, j),
        })
    }

    pub fn to_document(&self) -> TensorDocument {
        let mut omega = Vec::new();
        for k in 1..=4 {
            for j in 0..self.n {
                for p in 0..self.n {
                    for q in 0..self.n {
                        for r in 0..self.n {
                            let z = self.get(k, j, p, q, r);
                            if z.re != 0.0 || z.im != 0.0 {
                                omega.push(OmegaRecord {
                                    k,
                                    j: j + 1,
                                    p: p + 1,
                                    q: q + 1,
                                    r: r + 1,
                                    re: z.re,
                                    im: z.im,
                                });
                            }
                        }
                    }
                }
            }
        }
        TensorDocument { n: self.n, omega }
    }

    pub fn from_document(doc: &TensorDocument) -> Result<Self> {
        if doc.n == 0 {
            return Err(Error::MalformedTensor("n must be positive".into()));
        }
        let n = doc.n;
        let mut t = Self::zeros(n);
        let mut filled = HashSet::new();
        for rec in &doc.omega {
            if !(1..=4).contains(&rec.k) {
                return Err(Error::MalformedTensor(format!("k = {} outside 1..=4", rec.k)));
            }
            for (name, v) in [("j", rec.j), ("p", rec.p), ("q", rec.q), ("r", rec.r)] {
                if v == 0 || v > n {
                    return Err(Error::MalformedTensor(format!("{name} = {v} outside 1..={n}")));
                }
            }
            if !rec.re.is_finite() || !rec.im.is_finite() {
                return Err(Error::MalformedTensor(format!(
                    "non-finite entry at k={} j={} p={} q={} r={}",
                    rec.k, rec.j, rec.p, rec.q, rec.r
                )));
            }
            let key = (rec.k, rec.j, rec.p, rec.q, rec.r);
            if !filled.insert(key) {
                return Err(Error::MalformedTensor(format!("duplicate entry {key:?}")));
            }
            t.set(rec.k, rec.j - 1, rec.p - 1, rec.q - 1, rec.r - 1, C64::new(rec.re, rec.im));
        }
        Ok(t)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: TensorDocument = serde_json::from_str(text)?;
        Self::from_document(&doc)
    }
}

/// On-disk tensor format; indices are one-based and absent entries are zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorDocument {
    pub n: usize,
    pub omega: Vec<OmegaRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OmegaRecord {
    pub k: usize,
    pub j: usize,
    pub p: usize,
    pub q: usize,
    pub r: usize,
    pub re: f64,
    pub im: f64,
}

/// The derived coefficients `S^{ℓ,j}_{p,q,r}` for `ℓ ∈ 1..=5`.
#[derive(Clone, Debug, PartialEq)]
pub struct STensor {
    n: usize,
    data: Vec<C64>,
}

impl STensor {
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, level: usize, j: usize, p: usize, q: usize, r: usize) -> usize {
        debug_assert!((1..=5).contains(&level));
        let n = self.n;
        (((((level - 1) * n + j) * n + p) * n + q) * n) + r
    }

    /// `S^{ℓ,j}_{p,q,r}`.
    #[inline]
    pub fn get(&self, level: usize, j: usize, p: usize, q: usize, r: usize) -> C64 {
        self.data[self.idx(level, j, p, q, r)]
    }

    /// `g_ℓ(p, q, r, j) = S^{ℓ,j}_{p,q,r}`, the map tested by (Gℓ).
    pub fn level_map(&self, level: usize) -> IndexMap4 {
        IndexMap4::from_fn(self.n, |p, q, r, j| self.get(level, j, p, q, r))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Computes the five S-levels from `ω`.
pub fn derive_s(omega: &CoeffTensor) -> STensor {
    let n = omega.n;
    let half_i = I * 0.5;
    let mut s = STensor {
        n,
        data: vec![C64::new(0.0, 0.0); 5 * n.pow(4)],
    };
    for j in 0..n {
        for p in 0..n {
            for q in 0..n {
                for r in 0..n {
                    let w = |k, a, b, c| omega.get(k, j, a, b, c);
                    let s1 = I * w(2, q, p, r);
                    let s2 = -half_i * (w(1, r, q, p) - w(2, q, r, p));
                    let s3 = -2.0 * s2
                        - half_i * (2.0 * w(1, r, q, p) + w(3, r, q, p) + w(4, r, p, q) + w(4, p, r, q));
                    let s4 = -half_i * (-w(3, r, q, p) + w(4, r, p, q) + w(4, p, r, q));
                    let s5 = half_i * (w(2, q, p, r) + w(2, q, r, p) + w(3, p, q, r));
                    for (level, v) in [(1, s1), (2, s2), (3, s3), (4, s4), (5, s5)] {
                        let i = s.idx(level, j, p, q, r);
                        s.data[i] = v;
                    }
                }
            }
        }
    }
    s
}

/// Names of every checked condition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Condition {
    A1,
    A2,
    B1,
    B2,
    B3,
    B4,
    B5,
    B6,
    B7,
    B8,
    B9,
    C1,
    C2,
    C3,
    C4,
    G1,
    G2,
    G3,
    G4,
    G5,
}

impl Condition {
    pub const ALL: [Condition; 20] = [
        Condition::A1,
        Condition::A2,
        Condition::B1,
        Condition::B2,
        Condition::B3,
        Condition::B4,
        Condition::B5,
        Condition::B6,
        Condition::B7,
        Condition::B8,
        Condition::B9,
        Condition::C1,
        Condition::C2,
        Condition::C3,
        Condition::C4,
        Condition::G1,
        Condition::G2,
        Condition::G3,
        Condition::G4,
        Condition::G5,
    ];
    pub const B_SET: [Condition; 6] = [
        Condition::B1,
        Condition::B2,
        Condition::B3,
        Condition::B4,
        Condition::B5,
        Condition::B6,
    ];
    pub const C_SET: [Condition; 4] = [Condition::C1, Condition::C2, Condition::C3, Condition::C4];
    pub const G_SET: [Condition; 5] = [
        Condition::G1,
        Condition::G2,
        Condition::G3,
        Condition::G4,
        Condition::G5,
    ];
    /// The extra conditions needed when `M_a` is not a multiple of the identity.
    pub const DIAGONAL_SET: [Condition; 3] = [Condition::B7, Condition::B8, Condition::B9];
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// One failing index tuple. `index` is one-based `(p, q, r, j)` for the
/// symmetry conditions and `(k, q, r, j)` for (B7)–(B9).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub condition: String,
    pub index: [usize; 4],
    pub lhs: C64,
    pub rhs: C64,
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    /// Relative tolerance as requested.
    pub tolerance: f64,
    /// Absolute tolerance actually applied (`tolerance · max|ω|`).
    pub absolute_tolerance: f64,
    pub holds: BTreeMap<Condition, bool>,
    pub violation_counts: BTreeMap<Condition, usize>,
    pub violations: Vec<Violation>,
}

impl ConditionReport {
    pub fn holds(&self, c: Condition) -> bool {
        self.holds.get(&c).copied().unwrap_or(false)
    }

    fn all(&self, set: &[Condition]) -> bool {
        set.iter().all(|c| self.holds(*c))
    }

    pub fn a_set(&self) -> bool {
        self.all(&[Condition::A1, Condition::A2])
    }

    pub fn b_set(&self) -> bool {
        self.all(&Condition::B_SET)
    }

    pub fn c_set(&self) -> bool {
        self.all(&Condition::C_SET)
    }

    pub fn g_set(&self) -> bool {
        self.all(&Condition::G_SET)
    }

    pub fn diagonal_set(&self) -> bool {
        self.all(&Condition::DIAGONAL_SET)
    }

    /// (A1)–(A2) together with (B1)–(B6).
    pub fn admissible(&self) -> bool {
        self.a_set() && self.b_set()
    }

    pub fn failed(&self) -> Vec<Condition> {
        Condition::ALL.iter().copied().filter(|c| !self.holds(*c)).collect()
    }
}

struct Checker {
    tol: f64,
    holds: BTreeMap<Condition, bool>,
    counts: BTreeMap<Condition, usize>,
    violations: Vec<Violation>,
}

impl Checker {
    fn new(tol: f64) -> Self {
        let mut holds = BTreeMap::new();
        let mut counts = BTreeMap::new();
        for c in Condition::ALL {
            holds.insert(c, true);
            counts.insert(c, 0);
        }
        Self {
            tol,
            holds,
            counts,
            violations: Vec::new(),
        }
    }

    fn compare(&mut self, c: Condition, index: [usize; 4], lhs: C64, rhs: C64) {
        let gap = (lhs - rhs).norm();
        if gap <= self.tol {
            return;
        }
        self.holds.insert(c, false);
        let count = self.counts.entry(c).or_insert(0);
        *count += 1;
        if *count <= MAX_REPORTED_VIOLATIONS {
            self.violations.push(Violation {
                condition: c.to_string(),
                index: index.map(|i| i + 1),
                lhs,
                rhs,
                gap,
            });
        }
    }

    /// Marks `c` false when `g` is outside `Γ`.
    fn gamma(&mut self, c: Condition, g: &IndexMap4) {
        let n = g.n();
        for p in 0..n {
            for q in 0..n {
                for r in 0..n {
                    for j in 0..n {
                        let v = g.get(p, q, r, j);
                        self.compare(c, [p, q, r, j], v, g.get(r, q, p, j));
                        self.compare(c, [p, q, r, j], v, g.get(j, r, q, p).conj());
                    }
                }
            }
        }
    }

    fn finish(self, tolerance: f64) -> ConditionReport {
        ConditionReport {
            tolerance,
            absolute_tolerance: self.tol,
            holds: self.holds,
            violation_counts: self.counts,
            violations: self.violations,
        }
    }
}

/// Evaluates (A1)–(A2), (B1)–(B9), (C1)–(C4) and (G1)–(G5).
///
/// `tol` is relative to the largest entry of `ω`.
pub fn check_conditions(omega: &CoeffTensor, tol: f64) -> Result<ConditionReport> {
    if !(tol >= 0.0 && tol.is_finite()) {
        return Err(Error::InvalidParameter(format!("tolerance {tol} must be a nonnegative real")));
    }
    if omega.data.len() != 4 * omega.n.pow(4) {
        return Err(Error::MalformedTensor("storage does not cover {1..4}×{1..n}⁴".into()));
    }
    if omega.data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::MalformedTensor("non-finite entry".into()));
    }
    let n = omega.n;
    let mut ck = Checker::new(tol * omega.max_abs());
    let w = |k, j, p, q, r| omega.get(k, j, p, q, r);

    for p in 0..n {
        for q in 0..n {
            for r in 0..n {
                for j in 0..n {
                    let at = [p, q, r, j];
                    ck.compare(Condition::A1, at, w(2, j, p, q, r), w(2, j, p, r, q));
                    ck.compare(Condition::A2, at, w(4, j, p, q, r), w(4, j, q, p, r));
                    ck.compare(Condition::B1, at, w(1, j, p, q, r), w(1, j, r, q, p));
                    ck.compare(Condition::B2, at, w(1, j, p, q, r), -w(1, p, j, r, q).conj());
                    ck.compare(Condition::B3, at, w(2, j, p, q, r), -w(2, q, r, j, p).conj());
                    ck.compare(Condition::B4, at, w(3, j, p, q, r), w(3, j, r, q, p));
                    ck.compare(Condition::B5, at, w(3, j, p, q, r), -w(3, p, j, r, q).conj());
                    ck.compare(Condition::B6, at, w(4, j, p, q, r), -w(4, p, j, r, q).conj());
                }
            }
        }
    }

    // (B7)–(B9): here `p` plays the role of the distinguished index k ≠ j.
    let zero = C64::new(0.0, 0.0);
    for p in 0..n {
        for q in 0..n {
            for r in 0..n {
                for j in (0..n).filter(|&j| j != p) {
                    let at = [p, q, r, j];
                    ck.compare(Condition::B7, at, w(1, j, p, q, r), zero);
                    ck.compare(Condition::B8, at, w(2, j, p, q, r), zero);
                    ck.compare(Condition::B9, at, w(3, j, p, q, r) + 2.0 * w(4, j, p, r, q), zero);
                }
            }
        }
    }

    for (c, f) in Condition::C_SET.into_iter().zip(omega.c_maps()) {
        ck.gamma(c, &f.scaled(-I));
    }
    let s = derive_s(omega);
    for (level, c) in Condition::G_SET.into_iter().enumerate() {
        ck.gamma(c, &s.level_map(level + 1));
    }

    Ok(ck.finish(tol))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaMembership {
    pub in_gamma1: bool,
    pub in_gamma2: bool,
    pub violations: Vec<Violation>,
}

impl GammaMembership {
    pub fn in_gamma(&self) -> bool {
        self.in_gamma1 && self.in_gamma2
    }
}

/// Tests `f ∈ Γ₁` and `f ∈ Γ₂` with `tol` relative to `max|f|`.
pub fn gamma_membership(f: &IndexMap4, tol: f64) -> GammaMembership {
    let n = f.n();
    let abs_tol = tol * f.max_abs();
    let mut in_gamma1 = true;
    let mut in_gamma2 = true;
    let mut violations = Vec::new();
    let (mut c1, mut c2) = (0usize, 0usize);
    for p in 0..n {
        for q in 0..n {
            for r in 0..n {
                for j in 0..n {
                    let v = f.get(p, q, r, j);
                    let index = [p + 1, q + 1, r + 1, j + 1];
                    let swapped = f.get(r, q, p, j);
                    let gap = (v - swapped).norm();
                    if gap > abs_tol {
                        in_gamma1 = false;
                        c1 += 1;
                        if c1 <= MAX_REPORTED_VIOLATIONS {
                            violations.push(Violation {
                                condition: "Gamma1".into(),
                                index,
                                lhs: v,
                                rhs: swapped,
                                gap,
                            });
                        }
                    }
                    let reflected = f.get(j, r, q, p).conj();
                    let gap = (v - reflected).norm();
                    if gap > abs_tol {
                        in_gamma2 = false;
                        c2 += 1;
                        if c2 <= MAX_REPORTED_VIOLATIONS {
                            violations.push(Violation {
                                condition: "Gamma2".into(),
                                index,
                                lhs: v,
                                rhs: reflected,
                                gap,
                            });
                        }
                    }
                }
            }
        }
    }
    GammaMembership {
        in_gamma1,
        in_gamma2,
        violations,
    }
}

/// Maps four raw index maps to a tensor satisfying (A1)–(A2) and (B1)–(B6).
///
/// Each raw map is rotated by `-i`, averaged over the order-8 group generated
/// by the two involutions defining `Γ`, rotated back, and read as `f_k`.
pub fn project_admissible(raw: &[IndexMap4; 4]) -> CoeffTensor {
    let group = gamma_group();
    let maps = [0, 1, 2, 3].map(|k| average_over(&group, &raw[k].scaled(-I)).scaled(I));
    CoeffTensor::from_c_maps(&maps)
}

pub fn sample_admissible(n: usize, rng: &mut impl Rng) -> CoeffTensor {
    let raw = [0, 1, 2, 3].map(|_| IndexMap4::random(n, rng));
    project_admissible(&raw)
}

/// Symmetrizes `ω²` in its last two indices and `ω⁴` in its first two, which
/// enforces (A1) and (A2) and touches nothing else.
pub fn enforce_a_symmetry(omega: &CoeffTensor) -> CoeffTensor {
    CoeffTensor::from_fn(omega.n, |k, j, p, q, r| match k {
        2 => 0.5 * (omega.get(2, j, p, q, r) + omega.get(2, j, p, r, q)),
        4 => 0.5 * (omega.get(4, j, p, q, r) + omega.get(4, j, q, p, r)),
        _ => omega.get(k, j, p, q, r),
    })
}

/// A random tensor satisfying (A1)–(A2) but generically none of the B-set.
pub fn sample_generic(n: usize, rng: &mut impl Rng) -> CoeffTensor {
    let raw = CoeffTensor::from_fn(n, |_, _, _, _, _| {
        C64::new(rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0))
    });
    enforce_a_symmetry(&raw)
}

/// Perturbs `omega` so that exactly one of (B1)–(B6) is broken while (A1)–(A2)
/// and the other B-conditions are kept.
///
/// `strength` is the size of the perturbation relative to `max(1, max|ω|)`.
/// Fails when the target cannot be broken at this `n` (for `n = 1`, (B1) and
/// (B4) are vacuous).
pub fn single_condition_mutant(
    omega: &CoeffTensor,
    target: Condition,
    strength: f64,
    rng: &mut impl Rng,
) -> Result<CoeffTensor> {
    let n = omega.n;
    let raw = IndexMap4::random(n, rng);
    // (map index, Γ-component kept intact)
    let (slot, delta) = match target {
        Condition::B1 => (0, raw.project_gamma2()),
        Condition::B2 => (0, raw.project_gamma1()),
        Condition::B3 => (1, raw.project_gamma1()),
        Condition::B4 => (2, raw.project_gamma2()),
        Condition::B5 => (2, raw.project_gamma1()),
        Condition::B6 => (3, raw.project_gamma1()),
        other => {
            return Err(Error::InvalidParameter(format!(
                "single-condition mutants exist only for B1..B6, not {other}"
            )))
        }
    };
    // Remove the part already inside Γ so the perturbation is pure violation.
    let delta = delta.added(&delta.project_gamma().scaled(C64::new(-1.0, 0.0)));
    let size = delta.max_abs();
    if size <= 1e-9 {
        return Err(Error::InvalidParameter(format!("{target} cannot be violated when n = {n}")));
    }
    let scale = strength * omega.max_abs().max(1.0) / size;
    let mut maps = omega.c_maps();
    maps[slot] = maps[slot].added(&delta.scaled(I * scale));
    Ok(CoeffTensor::from_c_maps(&maps))
}

/// A tensor satisfying (A1)–(A2), (B1)–(B6) and (B7)–(B9).
///
/// Alternates the orthogonal projection onto the admissible subspace with the
/// orthogonal projection onto the (B7)–(B9) subspace until the iterate stops
/// moving; both are real-linear subspaces so this converges to the projection
/// onto their intersection.
pub fn sample_diagonal_admissible(n: usize, rng: &mut impl Rng) -> CoeffTensor {
    let raw = [0, 1, 2, 3].map(|_| IndexMap4::random(n, rng));
    let mut omega = project_admissible(&raw);
    for _ in 0..10_000 {
        let next = project_admissible(&omega.c_maps());
        let next = project_diagonal(&next);
        let moved = next.max_abs_diff(&omega);
        omega = next;
        if moved <= 1e-15 * omega.max_abs().max(1e-300) {
            break;
        }
    }
    project_admissible(&omega.c_maps())
}

/// Orthogonal projection onto the subspace cut out by (B7)–(B9).
pub fn project_diagonal(omega: &CoeffTensor) -> CoeffTensor {
    let n = omega.n;
    let mut out = omega.clone();
    let zero = C64::new(0.0, 0.0);
    for j in 0..n {
        for k in (0..n).filter(|&k| k != j) {
            for q in 0..n {
                for r in 0..n {
                    out.set(1, j, k, q, r, zero);
                    out.set(2, j, k, q, r, zero);
                    // Nearest point on x + 2y = 0 for x = ω³_{kqr}, y = ω⁴_{krq}.
                    let x = omega.get(3, j, k, q, r);
                    let y = omega.get(4, j, k, r, q);
                    let t = (x + 2.0 * y) / 5.0;
                    out.set(3, j, k, q, r, x - t);
                    out.set(4, j, k, r, q, y - 2.0 * t);
                }
            }
        }
    }
    out
}

/// Verdicts of one sampled tensor in the equivalence audit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditCase {
    pub trial: usize,
    pub kind: String,
    pub a_set: bool,
    pub b_set: bool,
    pub c_set: bool,
    pub g_set: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceAudit {
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    pub tensors_checked: usize,
    pub admissible_count: usize,
    pub counterexamples: Vec<AuditCase>,
}

impl EquivalenceAudit {
    pub fn agree(&self) -> bool {
        self.counterexamples.is_empty()
    }
}

/// Samples admissible tensors, single-condition mutants and generic tensors
/// (all with (A1)–(A2) held) and checks that the B-, C- and G-set verdicts
/// coincide on every one.
pub fn equivalence_audit(n: usize, trials: usize, seed: u64) -> Result<EquivalenceAudit> {
    use rand::SeedableRng;
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("n must be positive".into()));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut checked = 0;
    let mut admissible_count = 0;
    let mut counterexamples = Vec::new();
    for trial in 0..trials {
        let base = sample_admissible(n, &mut rng);
        let mut cases = vec![("admissible".to_string(), base.clone())];
        for target in Condition::B_SET {
            if let Ok(m) = single_condition_mutant(&base, target, 0.5, &mut rng) {
                cases.push((format!("mutant-{target}"), m));
            }
        }
        cases.push(("generic".to_string(), sample_generic(n, &mut rng)));
        for (kind, omega) in cases {
            let report = check_conditions(&omega, DEFAULT_TOLERANCE)?;
            checked += 1;
            let case = AuditCase {
                trial,
                kind,
                a_set: report.a_set(),
                b_set: report.b_set(),
                c_set: report.c_set(),
                g_set: report.g_set(),
            };
            if case.b_set {
                admissible_count += 1;
            }
            let consistent = case.a_set && case.b_set == case.c_set && case.c_set == case.g_set;
            let expected = if case.kind == "admissible" { case.b_set } else { true };
            if !consistent || !expected {
                counterexamples.push(case);
            }
        }
    }
    Ok(EquivalenceAudit {
        n,
        trials,
        seed,
        tensors_checked: checked,
        admissible_count,
        counterexamples,
    })
}

/// Free constants of the general admissible two-component tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct N2FamilyParams {
    pub kappa: [f64; 4],
    pub tau: [f64; 4],
    pub sigma: [f64; 4],
    pub alpha: [C64; 4],
    pub beta: [C64; 4],
    pub gamma: [C64; 4],
}

impl N2FamilyParams {
    pub fn zero() -> Self {
        let z = C64::new(0.0, 0.0);
        Self {
            kappa: [0.0; 4],
            tau: [0.0; 4],
            sigma: [0.0; 4],
            alpha: [z; 4],
            beta: [z; 4],
            gamma: [z; 4],
        }
    }

    pub fn random(rng: &mut impl Rng) -> Self {
        let mut c = || C64::new(rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0));
        let alpha = [c(), c(), c(), c()];
        let beta = [c(), c(), c(), c()];
        let gamma = [c(), c(), c(), c()];
        let mut r = || rng.gen_range(-1.0..=1.0);
        Self {
            kappa: [r(), r(), r(), r()],
            tau: [r(), r(), r(), r()],
            sigma: [r(), r(), r(), r()],
            alpha,
            beta,
            gamma,
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut d: f64 = 0.0;
        for k in 0..4 {
            d = d
                .max((self.kappa[k] - other.kappa[k]).abs())
                .max((self.tau[k] - other.tau[k]).abs())
                .max((self.sigma[k] - other.sigma[k]).abs())
                .max((self.alpha[k] - other.alpha[k]).norm())
                .max((self.beta[k] - other.beta[k]).norm())
                .max((self.gamma[k] - other.gamma[k]).norm());
        }
        d
    }

    /// The 4×4 Hermitian pattern `T^k`, rows `(j, q)`, columns `(p, r)`.
    fn pattern(&self, k: usize) -> [[C64; 4]; 4] {
        let re = |x: f64| C64::new(x, 0.0);
        let (ka, ta, si) = (re(self.kappa[k]), re(self.tau[k]), re(self.sigma[k]));
        let (a, b, g) = (self.alpha[k], self.beta[k], self.gamma[k]);
        let m = [
            [ka, a.conj(), a.conj(), g.conj()],
            [a, ta, ta, b.conj()],
            [a, ta, ta, b.conj()],
            [g, b, b, si],
        ];
        m.map(|row| row.map(|z| -z))
    }
}

/// The two-component admissible tensor with the given constants.
pub fn family_n2(params: &N2FamilyParams) -> CoeffTensor {
    let maps: [IndexMap4; 4] = [0, 1, 2, 3].map(|k| {
        let t = params.pattern(k);
        // T = i f_k, so f_k = -i T.
        IndexMap4::from_fn(2, |p, q, r, j| -I * t[2 * j + q][2 * p + r])
    });
    CoeffTensor::from_c_maps(&maps)
}

/// Least-squares fit of [`N2FamilyParams`] to a two-component tensor, together
/// with the max-abs reconstruction error of the fitted family member.
pub fn fit_family_n2(omega: &CoeffTensor) -> Result<(N2FamilyParams, f64)> {
    if omega.n != 2 {
        return Err(Error::InvalidParameter(format!("family fit needs n = 2, got {}", omega.n)));
    }
    let maps = omega.c_maps();
    let mut params = N2FamilyParams::zero();
    for k in 0..4 {
        // T[row(j,q)][col(p,r)] = i f_k(p, q, r, j)
        let t = |row: usize, col: usize| I * maps[k].get(col / 2, row % 2, col % 2, row / 2);
        let avg = |zs: &[C64]| zs.iter().sum::<C64>() / zs.len() as f64;
        params.kappa[k] = -t(0, 0).re;
        params.sigma[k] = -t(3, 3).re;
        params.tau[k] = -avg(&[t(1, 1), t(1, 2), t(2, 1), t(2, 2)]).re;
        params.alpha[k] = -avg(&[t(1, 0), t(2, 0), t(0, 1).conj(), t(0, 2).conj()]);
        params.beta[k] = -avg(&[t(3, 1), t(3, 2), t(1, 3).conj(), t(2, 3).conj()]);
        params.gamma[k] = -avg(&[t(3, 0), t(0, 3).conj()]);
    }
    let err = family_n2(&params).max_abs_diff(omega);
    Ok((params, err))
}

/// `ω` of the multi-component fourth-order system with parameters `γ`
/// (the `M_a = (γ/2) I` system of optical-pulse propagation).
pub fn wzy_tensor(n: usize, gamma: f64) -> CoeffTensor {
    let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    CoeffTensor::from_fn(n, |k, j, p, q, r| {
        let v = match k {
            1 => 2.0 * gamma * (d(p, q) * d(r, j) + d(p, j) * d(r, q)),
            2 => 0.5 * gamma * (d(p, q) * d(r, j) + d(p, r) * d(q, j)),
            3 => gamma * (d(p, q) * d(r, j) + d(p, j) * d(r, q)),
            _ => 1.5 * gamma * (d(q, r) * d(p, j) + d(p, r) * d(q, j)),
        };
        C64::new(0.0, v)
    })
}

/// `ω` of the scalar fourth-order Schrödinger equation with real coefficients
/// `μ₃..μ₆` (the coefficients of `(∂ψ)²ψ̄`, `|∂ψ|²ψ`, `ψ² conj(∂²ψ)` and `|ψ|²∂²ψ`).
pub fn single_tensor(mu: &[f64; 6]) -> CoeffTensor {
    let mut t = CoeffTensor::zeros(1);
    t.set(1, 0, 0, 0, 0, C64::new(0.0, mu[5]));
    t.set(2, 0, 0, 0, 0, C64::new(0.0, mu[4]));
    t.set(3, 0, 0, 0, 0, C64::new(0.0, mu[3]));
    t.set(4, 0, 0, 0, 0, C64::new(0.0, mu[2]));
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn all_i() -> CoeffTensor {
        CoeffTensor::from_fn(1, |_, _, _, _, _| I)
    }

    #[test]
    fn gamma_group_has_order_eight() {
        assert_eq!(gamma_group().len(), 8);
    }

    #[test]
    fn derive_s_on_the_unit_imaginary_scalar_tensor() {
        let s = derive_s(&all_i());
        let expected = [-1.0, 0.0, 2.5, 0.5, -1.5];
        for (level, e) in expected.iter().enumerate() {
            let v = s.get(level + 1, 0, 0, 0, 0);
            assert!((v - C64::new(*e, 0.0)).norm() <= 1e-14, "S{} = {v}", level + 1);
        }
    }

    #[test]
    fn admissible_s_levels_satisfy_the_derived_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for n in 1..=3 {
            let s = derive_s(&sample_admissible(n, &mut rng));
            for level in 1..=5 {
                assert!(gamma_membership(&s.level_map(level), 1e-13).in_gamma());
                for x in 0..n.pow(4) {
                    let (j, p, q, r) = (x / n.pow(3), (x / n / n) % n, (x / n) % n, x % n);
                    let v = s.get(level, j, p, q, r);
                    assert!((v - s.get(level, r, q, p, j).conj()).norm() <= 1e-13);
                    assert!((v - s.get(level, q, p, j, r)).norm() <= 1e-13);
                }
            }
        }
    }

    #[test]
    fn projected_samples_all_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for n in 1..=3 {
            for _ in 0..1000 {
                let r = check_conditions(&sample_admissible(n, &mut rng), DEFAULT_TOLERANCE).unwrap();
                assert!(r.a_set() && r.b_set() && r.c_set() && r.g_set());
            }
        }
    }

    #[test]
    fn projection_is_real_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let a = [0, 1, 2, 3].map(|_| IndexMap4::random(2, &mut rng));
        let b = [0, 1, 2, 3].map(|_| IndexMap4::random(2, &mut rng));
        let combo = [0, 1, 2, 3].map(|k| a[k].scaled(C64::new(2.0, 0.0)).added(&b[k].scaled(C64::new(-3.0, 0.0))));
        let lhs = project_admissible(&combo);
        let pa = project_admissible(&a);
        let pb = project_admissible(&b);
        let rhs = CoeffTensor::from_fn(2, |k, j, p, q, r| 2.0 * pa.get(k, j, p, q, r) - 3.0 * pb.get(k, j, p, q, r));
        assert!(lhs.max_abs_diff(&rhs) <= 1e-14);
    }

    #[test]
    fn audit_agrees_on_small_runs() {
        for n in 1..=3 {
            let audit = equivalence_audit(n, 20, 7).unwrap();
            assert!(audit.agree(), "{:?}", audit.counterexamples);
        }
    }

    #[test]
    fn document_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let t = sample_admissible(2, &mut rng);
        let back = CoeffTensor::from_json(&t.to_json().unwrap()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn zero_tensor_satisfies_everything() {
        for n in 1..=3 {
            let r = check_conditions(&CoeffTensor::zeros(n), DEFAULT_TOLERANCE).unwrap();
            assert!(r.failed().is_empty());
            assert!(derive_s(&CoeffTensor::zeros(n)).max_abs() == 0.0);
        }
    }

    #[test]
    fn scalar_admissible_iff_purely_imaginary() {
        let r = check_conditions(&all_i(), DEFAULT_TOLERANCE).unwrap();
        assert!(r.failed().is_empty(), "{:?}", r.failed());

        let mut t = all_i();
        t.set(1, 0, 0, 0, 0, C64::new(1.0, 0.0));
        let r = check_conditions(&t, DEFAULT_TOLERANCE).unwrap();
        assert!(!r.b_set());
        assert!(!r.holds(Condition::B2));
        assert!(!r.c_set() && !r.g_set());
    }

    #[test]
    fn wzy_is_admissible() {
        for n in 1..=3 {
            for gamma in [1.0, 2.0] {
                let r = check_conditions(&wzy_tensor(n, gamma), DEFAULT_TOLERANCE).unwrap();
                assert!(r.a_set() && r.b_set() && r.c_set() && r.g_set(), "n={n}: {:?}", r.failed());
            }
        }
    }

    #[test]
    fn wzy_scalar_entries() {
        let t = wzy_tensor(1, 2.0);
        assert_eq!(t.get(1, 0, 0, 0, 0), C64::new(0.0, 8.0));
        assert_eq!(t.get(2, 0, 0, 0, 0), C64::new(0.0, 2.0));
        assert_eq!(t.get(3, 0, 0, 0, 0), C64::new(0.0, 4.0));
        assert_eq!(t.get(4, 0, 0, 0, 0), C64::new(0.0, 6.0));
    }

    #[test]
    fn constant_real_map_is_in_gamma() {
        let f = IndexMap4::from_fn(3, |_, _, _, _| C64::new(1.0, 0.0));
        let m = gamma_membership(&f, DEFAULT_TOLERANCE);
        assert!(m.in_gamma1 && m.in_gamma2);
    }

    #[test]
    fn constructed_gamma2_violation_is_located() {
        let mut f = IndexMap4::zeros(2);
        // (p,q,r,j) zero-based; Γ₁-consistent, but f(0,0,0,1) ≠ conj f(1,0,0,0).
        f.set(0, 0, 0, 1, I);
        f.set(1, 0, 0, 0, I);
        f.set(0, 0, 1, 0, I);
        let m = gamma_membership(&f, DEFAULT_TOLERANCE);
        assert!(m.in_gamma1);
        assert!(!m.in_gamma2);
        assert!(m
            .violations
            .iter()
            .any(|v| v.condition == "Gamma2" && v.index == [1, 1, 1, 2]));
    }

    #[test]
    fn projection_lands_in_gamma_and_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..=3 {
            let raw = [0, 1, 2, 3].map(|_| IndexMap4::random(n, &mut rng));
            let omega = project_admissible(&raw);
            for f in omega.c_maps() {
                assert!(gamma_membership(&f.scaled(-I), 1e-13).in_gamma());
            }
            let again = project_admissible(&omega.c_maps());
            assert!(again.max_abs_diff(&omega) <= 1e-15);
        }
    }

    #[test]
    fn projection_of_zero_is_zero() {
        let raw = [0, 1, 2, 3].map(|_| IndexMap4::zeros(2));
        assert!(project_admissible(&raw).is_zero());
    }

    #[test]
    fn mutants_break_only_their_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let base = sample_admissible(2, &mut rng);
        for target in Condition::B_SET {
            let m = single_condition_mutant(&base, target, 0.5, &mut rng).unwrap();
            let r = check_conditions(&m, DEFAULT_TOLERANCE).unwrap();
            assert!(r.a_set());
            let failed: Vec<_> = Condition::B_SET.iter().filter(|c| !r.holds(**c)).collect();
            assert_eq!(failed, vec![&target]);
            assert!(!r.c_set() && !r.g_set());
        }
    }

    #[test]
    fn scalar_mutants_of_vacuous_conditions_are_refused() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let base = sample_admissible(1, &mut rng);
        assert!(single_condition_mutant(&base, Condition::B1, 0.5, &mut rng).is_err());
        assert!(single_condition_mutant(&base, Condition::B4, 0.5, &mut rng).is_err());
        assert!(single_condition_mutant(&base, Condition::B2, 0.5, &mut rng).is_ok());
    }

    #[test]
    fn b3_only_violation_is_seen_by_all_three_sets() {
        // ω² = 1 on every index: (A1) holds, (B3) fails, nothing else is touched.
        let mut t = CoeffTensor::zeros(2);
        for j in 0..2 {
            for p in 0..2 {
                for q in 0..2 {
                    for r in 0..2 {
                        t.set(2, j, p, q, r, C64::new(1.0, 0.0));
                    }
                }
            }
        }
        let r = check_conditions(&t, DEFAULT_TOLERANCE).unwrap();
        assert!(r.holds(Condition::A1));
        assert!(!r.holds(Condition::B3));
        assert!(!r.b_set() && !r.c_set() && !r.g_set());
    }

    #[test]
    fn family_examples() {
        assert!(family_n2(&N2FamilyParams::zero()).is_zero());

        let mut p = N2FamilyParams::zero();
        p.kappa[0] = 1.0;
        let t = family_n2(&p);
        assert_eq!(t.get(1, 0, 0, 0, 0), I);
        let nonzero = (0..2)
            .flat_map(|j| (0..8).map(move |x| (j, x / 4, (x / 2) % 2, x % 2)))
            .filter(|&(j, p, q, r)| t.get(1, j, p, q, r) != C64::new(0.0, 0.0))
            .count();
        assert_eq!(nonzero, 1);
    }

    #[test]
    fn family_round_trip_and_admissibility() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let params = N2FamilyParams::random(&mut rng);
            let t = family_n2(&params);
            let r = check_conditions(&t, DEFAULT_TOLERANCE).unwrap();
            assert!(r.failed().iter().all(|c| Condition::DIAGONAL_SET.contains(c)));
            let (fitted, err) = fit_family_n2(&t).unwrap();
            assert!(fitted.max_abs_diff(&params) <= 1e-12);
            assert!(err <= 1e-12);
        }
    }

    #[test]
    fn every_admissible_pair_tensor_is_a_family_member() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let t = sample_admissible(2, &mut rng);
            let (_, err) = fit_family_n2(&t).unwrap();
            assert!(err <= 1e-12, "reconstruction error {err}");
        }
    }

    #[test]
    fn diagonal_sampler_satisfies_b7_to_b9() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in 2..=3 {
            let t = sample_diagonal_admissible(n, &mut rng);
            let r = check_conditions(&t, 1e-10).unwrap();
            assert!(r.failed().is_empty(), "n={n}: {:?}", r.failed());
            assert!(t.max_abs() > 0.1);
        }
    }

    #[test]
    fn malformed_documents_are_structural_errors() {
        let bad = r#"{"n":2,"omega":[{"k":5,"j":1,"p":1,"q":1,"r":1,"re":0,"im":1}]}"#;
        assert!(matches!(CoeffTensor::from_json(bad), Err(Error::MalformedTensor(_))));
        let bad = r#"{"n":2,"omega":[{"k":1,"j":3,"p":1,"q":1,"r":1,"re":0,"im":1}]}"#;
        assert!(matches!(CoeffTensor::from_json(bad), Err(Error::MalformedTensor(_))));
        let dup = r#"{"n":1,"omega":[{"k":1,"j":1,"p":1,"q":1,"r":1,"re":0,"im":1},
                                    {"k":1,"j":1,"p":1,"q":1,"r":1,"re":0,"im":2}]}"#;
        assert!(matches!(CoeffTensor::from_json(dup), Err(Error::MalformedTensor(_))));
    }

    #[test]
    fn violation_lists_are_capped() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let t = sample_generic(3, &mut rng);
        let r = check_conditions(&t, DEFAULT_TOLERANCE).unwrap();
        for c in Condition::ALL {
            let listed = r.violations.iter().filter(|v| v.condition == c.to_string()).count();
            assert!(listed <= MAX_REPORTED_VIOLATIONS);
            assert_eq!(listed, r.violation_counts[&c].min(MAX_REPORTED_VIOLATIONS));
        }
    }
}
