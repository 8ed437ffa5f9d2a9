//! Full system descriptions: dispersion, second-order coefficients, the cubic
//! tensor and an optional polynomial tail.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{check_conditions, derive_s, single_tensor, wzy_tensor, CoeffTensor, STensor, DEFAULT_TOLERANCE};

/// The fourth-order coefficient matrix `M_a`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Dispersion {
    /// `M_a = a·I`.
    Scalar(f64),
    /// `M_a = diag(a_1, …, a_n)`.
    Diagonal(Vec<f64>),
}

/// Optional tail `c₃ |Q|²Q + c₅ |Q|⁴Q`, with `|Q|² = Σ_p |Q_p|²`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Tail {
    pub cubic: C64,
    pub quintic: C64,
}

impl Tail {
    pub fn is_empty(&self) -> bool {
        self.cubic == C64::new(0.0, 0.0) && self.quintic == C64::new(0.0, 0.0)
    }
}

/// `∂ₜQ = iM_a∂ₓ⁴Q + iM_λ∂ₓ²Q + F(Q)` with `M_λ = diag(λ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemSpec {
    dispersion: Dispersion,
    lambda: Vec<f64>,
    omega: CoeffTensor,
    s: STensor,
    tail: Tail,
}

impl SystemSpec {
    pub fn new(dispersion: Dispersion, lambda: Vec<f64>, omega: CoeffTensor, tail: Tail) -> Result<Self> {
        let n = omega.n();
        if lambda.len() != n {
            return Err(Error::ShapeMismatch(format!("{} λ entries for n = {n}", lambda.len())));
        }
        if lambda.iter().any(|l| !l.is_finite()) {
            return Err(Error::InvalidParameter("λ entries must be finite".into()));
        }
        match &dispersion {
            Dispersion::Scalar(a) if *a == 0.0 || !a.is_finite() => {
                return Err(Error::InvalidParameter(format!("dispersion a = {a} must be nonzero and finite")))
            }
            Dispersion::Diagonal(d) if d.len() != n => {
                return Err(Error::ShapeMismatch(format!("{} dispersion entries for n = {n}", d.len())))
            }
            Dispersion::Diagonal(d) if d.iter().any(|a| *a == 0.0 || !a.is_finite()) => {
                return Err(Error::InvalidParameter("diagonal dispersion entries must be nonzero".into()))
            }
            _ => {}
        }
        let s = derive_s(&omega);
        Ok(Self {
            dispersion,
            lambda,
            omega,
            s,
            tail,
        })
    }

    /// Scalar dispersion `a`, zero λ, no tail.
    pub fn from_tensor(a: f64, omega: CoeffTensor) -> Result<Self> {
        let n = omega.n();
        Self::new(Dispersion::Scalar(a), vec![0.0; n], omega, Tail::default())
    }

    pub fn n(&self) -> usize {
        self.omega.n()
    }

    pub fn dispersion(&self) -> &Dispersion {
        &self.dispersion
    }

    /// Diagonal entry `a_j` of `M_a`.
    pub fn a(&self, j: usize) -> f64 {
        match &self.dispersion {
            Dispersion::Scalar(a) => *a,
            Dispersion::Diagonal(d) => d[j],
        }
    }

    pub fn is_scalar_dispersion(&self) -> bool {
        match &self.dispersion {
            Dispersion::Scalar(_) => true,
            Dispersion::Diagonal(d) => d.iter().all(|a| *a == d[0]),
        }
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn omega(&self) -> &CoeffTensor {
        &self.omega
    }

    pub fn s(&self) -> &STensor {
        &self.s
    }

    pub fn tail(&self) -> Tail {
        self.tail
    }

    /// Same linear part and tail with another tensor.
    pub fn with_omega(&self, omega: CoeffTensor) -> Result<Self> {
        Self::new(self.dispersion.clone(), self.lambda.clone(), omega, self.tail)
    }

    pub fn with_dispersion(&self, dispersion: Dispersion) -> Result<Self> {
        Self::new(dispersion, self.lambda.clone(), self.omega.clone(), self.tail)
    }

    pub fn with_tail(&self, tail: Tail) -> Self {
        Self { tail, ..self.clone() }
    }

    /// The same system with `F ≡ 0`.
    pub fn linear_part(&self) -> Self {
        Self {
            omega: CoeffTensor::zeros(self.n()),
            s: derive_s(&CoeffTensor::zeros(self.n())),
            tail: Tail::default(),
            ..self.clone()
        }
    }

    /// Whether the cached S-tensor still matches `ω`.
    pub fn s_consistent(&self) -> bool {
        derive_s(&self.omega) == self.s
    }

    /// Whether the gauge of a non-scalar `M_a` is available: always in scalar
    /// mode, otherwise only under (B7)–(B9).
    pub fn gauge_admissible(&self) -> Result<bool> {
        if self.is_scalar_dispersion() {
            return Ok(true);
        }
        Ok(check_conditions(&self.omega, DEFAULT_TOLERANCE)?.diagonal_set())
    }
}

/// Weights of `Λ = e₁Λ₁ + e₂Λ₂ + e₃Λ₃`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaugeWeights {
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
}

impl Default for GaugeWeights {
    fn default() -> Self {
        Self {
            e1: -1.0,
            e2: 1.0,
            e3: -1.0,
        }
    }
}

/// Parameters of the builtin systems; unused fields are ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuiltinParams {
    /// Fourth-order coefficient of the multi-component system.
    pub gamma: f64,
    /// Second-order and cubic coefficient of the multi-component system.
    pub alpha: f64,
    /// Fourth-order coefficient of the scalar equation.
    pub nu: f64,
    /// `μ₁..μ₆` of the scalar equation.
    pub mu: [f64; 6],
}

impl Default for BuiltinParams {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            alpha: 0.0,
            nu: 1.0,
            mu: [0.0; 6],
        }
    }
}

/// `"wzy"`: the multi-component pulse-propagation system with
/// `M_a = (γ/2)I`, `M_λ = (α/2)I` and tail `iα|Q|²Q + 3iγ|Q|⁴Q`.
///
/// `"single"`: the scalar equation
/// `(∂ₜ − iν∂ₓ⁴ − i∂ₓ²)ψ = iμ₁|ψ|²ψ + iμ₂|ψ|⁴ψ + iμ₃(∂ψ)²ψ̄ + iμ₄|∂ψ|²ψ + iμ₅ψ²conj(∂²ψ) + iμ₆|ψ|²∂²ψ`;
/// `n` must be 1.
pub fn builtin_system(name: &str, n: usize, params: &BuiltinParams) -> Result<SystemSpec> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be positive".into()));
    }
    match name {
        "wzy" => {
            if params.gamma == 0.0 || !params.gamma.is_finite() {
                return Err(Error::InvalidParameter("wzy needs a nonzero γ".into()));
            }
            SystemSpec::new(
                Dispersion::Scalar(params.gamma / 2.0),
                vec![params.alpha / 2.0; n],
                wzy_tensor(n, params.gamma),
                Tail {
                    cubic: C64::new(0.0, params.alpha),
                    quintic: C64::new(0.0, 3.0 * params.gamma),
                },
            )
        }
        "single" => {
            if n != 1 {
                return Err(Error::InvalidParameter(format!("the scalar equation has n = 1, not {n}")));
            }
            if params.nu == 0.0 {
                return Err(Error::InvalidParameter("the scalar equation needs ν ≠ 0".into()));
            }
            SystemSpec::new(
                Dispersion::Scalar(params.nu),
                vec![1.0],
                single_tensor(&params.mu),
                Tail {
                    cubic: C64::new(0.0, params.mu[0]),
                    quintic: C64::new(0.0, params.mu[1]),
                },
            )
        }
        other => Err(Error::UnknownSystem(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wzy_builtin() {
        let spec = builtin_system("wzy", 2, &BuiltinParams::default()).unwrap();
        assert_eq!(spec.a(0), 0.5);
        assert_eq!(spec.lambda(), &[0.0, 0.0]);
        let w = spec.omega();
        let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        for j in 0..2 {
            for p in 0..2 {
                for q in 0..2 {
                    for r in 0..2 {
                        let expected = 2.0 * (d(p, q) * d(r, j) + d(p, j) * d(r, q));
                        assert_eq!(w.get(1, j, p, q, r), C64::new(0.0, expected));
                    }
                }
            }
        }
        assert!(spec.s_consistent());
    }

    #[test]
    fn single_builtin_with_zero_mu_is_linear() {
        let spec = builtin_system("single", 1, &BuiltinParams::default()).unwrap();
        assert_eq!(spec.a(0), 1.0);
        assert!(spec.omega().is_zero());
        assert!(spec.tail().is_empty());
    }

    #[test]
    fn builtin_errors() {
        assert!(matches!(
            builtin_system("kdv", 1, &BuiltinParams::default()),
            Err(Error::UnknownSystem(_))
        ));
        let p = BuiltinParams {
            gamma: 0.0,
            ..BuiltinParams::default()
        };
        assert!(builtin_system("wzy", 1, &p).is_err());
        assert!(builtin_system("single", 2, &BuiltinParams::default()).is_err());
    }

    #[test]
    fn spec_validation() {
        let omega = CoeffTensor::zeros(2);
        assert!(SystemSpec::new(Dispersion::Scalar(0.0), vec![0.0; 2], omega.clone(), Tail::default()).is_err());
        assert!(SystemSpec::new(Dispersion::Diagonal(vec![1.0]), vec![0.0; 2], omega.clone(), Tail::default()).is_err());
        assert!(SystemSpec::new(Dispersion::Scalar(1.0), vec![0.0; 3], omega.clone(), Tail::default()).is_err());
        let spec = SystemSpec::new(Dispersion::Diagonal(vec![1.0, 2.0]), vec![0.0; 2], omega, Tail::default()).unwrap();
        assert!(!spec.is_scalar_dispersion());
        assert!(spec.gauge_admissible().unwrap());
    }
}
