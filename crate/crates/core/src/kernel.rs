//! Conserved mappings `Q(φ)`.
//!
//! Every kernel has the form `Q'(φ) = (1-φ²)^k S(φ) / B` with an even shaping
//! function `S` and the normalization `B = ∫₀¹ (1-s²)^k S(s) ds`, so that
//! `Q(±1) = ±1`. Unshaped kernels (`S ≡ 1`) are evaluated as exact
//! polynomials `Q(φ) = Q̄(φ) φ`; shaped kernels are tabulated on `[0, 1]` and
//! reflected to negative arguments.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quad::{self, HermiteTable1D, QuadError};

/// Tolerated overshoot of `|φ|` past 1 before evaluation fails.
pub const OVERSHOOT_TOL: f64 = 1e-6;
pub const DEFAULT_PHI_TOL: f64 = 1e-10;
pub const DEFAULT_ALPHA_QPRIME: f64 = 1e-6;
/// Table resolution for shaped kernels.
pub const DEFAULT_KERNEL_TABLE_NODES: usize = 512;

const SHAPE_PROBE_POINTS: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("invalid kernel parameters: {0}")]
    InvalidSpec(String),
    #[error("shaping function is negative at phi = {abscissa} (S = {value})")]
    NegativeShape { abscissa: f64, value: f64 },
    #[error("phi = {0} is outside [-1, 1] beyond the overshoot tolerance")]
    OutOfRange(f64),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

/// Kernel family and its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelFamily {
    /// `Q(φ) = φ`.
    Mass,
    /// `Q' ∝ (1-φ²)^k`.
    Polynomial { k: u32 },
    /// `S = exp(β₂φ²)`, or `exp(β₂φ²) - exp(β₂)` when endpoint-vanishing.
    #[serde(rename = "exp")]
    ExpShaped {
        k: u32,
        beta2: f64,
        #[serde(default)]
        endpoint_vanishing: bool,
    },
    /// `S = 1/(1+qφ²) - 1/(1+q)` with `k = 1`.
    #[serde(rename = "rational")]
    RationalEV { q: f64 },
    /// `S = (1+pφ⁴)/(1+qφ²) - (1+p)/(1+q)` with `k = 1`.
    #[serde(rename = "pade")]
    PadeEV { p: f64, q: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    #[serde(flatten)]
    pub family: KernelFamily,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub label: String,
}

/// Scalar parameter varied by the moment-balance tuner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreeParameter {
    Beta2,
    Q,
    P,
}

impl std::str::FromStr for FreeParameter {
    type Err = KernelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "beta2" => Ok(Self::Beta2),
            "q" => Ok(Self::Q),
            "p" => Ok(Self::P),
            other => Err(KernelError::InvalidSpec(format!("unknown free parameter {other:?}"))),
        }
    }
}

impl KernelSpec {
    /// Copy of this spec with one parameter replaced.
    pub fn with_parameter(&self, free: FreeParameter, value: f64) -> Result<Self, KernelError> {
        let mut out = self.clone();
        match (&mut out.family, free) {
            (KernelFamily::ExpShaped { beta2, .. }, FreeParameter::Beta2) => *beta2 = value,
            (KernelFamily::RationalEV { q }, FreeParameter::Q) => *q = value,
            (KernelFamily::PadeEV { q, .. }, FreeParameter::Q) => *q = value,
            (KernelFamily::PadeEV { p, .. }, FreeParameter::P) => *p = value,
            (family, free) => {
                return Err(KernelError::InvalidSpec(format!(
                    "{family:?} has no free parameter {free:?}"
                )))
            }
        }
        Ok(out)
    }

    pub fn new(family: KernelFamily, label: impl Into<String>) -> Self {
        Self {
            family,
            label: label.into(),
        }
    }

    pub fn mass() -> Self {
        Self::new(KernelFamily::Mass, "M")
    }

    pub fn nmn() -> Self {
        Self::new(KernelFamily::Polynomial { k: 1 }, "NMN")
    }

    pub fn zhou(k: u32) -> Self {
        Self::new(KernelFamily::Polynomial { k }, format!("Zhou k={k}"))
    }

    pub fn exp_k2(beta2: f64) -> Self {
        Self::new(
            KernelFamily::ExpShaped {
                k: 2,
                beta2,
                endpoint_vanishing: false,
            },
            "EXP k=2",
        )
    }

    pub fn exp_k1(beta2: f64) -> Self {
        Self::new(
            KernelFamily::ExpShaped {
                k: 1,
                beta2,
                endpoint_vanishing: true,
            },
            "EXP k=1",
        )
    }

    pub fn rational(q: f64) -> Self {
        Self::new(KernelFamily::RationalEV { q }, "Rational")
    }

    pub fn pade(p: f64, q: f64) -> Self {
        Self::new(KernelFamily::PadeEV { p, q }, "Pade")
    }

    /// Display label, falling back to a description of the family.
    pub fn display_label(&self) -> String {
        if !self.label.is_empty() {
            return self.label.clone();
        }
        match self.family {
            KernelFamily::Mass => "M".into(),
            KernelFamily::Polynomial { k: 0 } => "M".into(),
            KernelFamily::Polynomial { k: 1 } => "NMN".into(),
            KernelFamily::Polynomial { k } => format!("Zhou k={k}"),
            KernelFamily::ExpShaped { k, beta2, .. } => format!("EXP k={k} beta2={beta2}"),
            KernelFamily::RationalEV { q } => format!("Rational q={q}"),
            KernelFamily::PadeEV { p, q } => format!("Pade p={p} q={q}"),
        }
    }

    /// Checks the parameter constraints of each family.
    pub fn validate(&self) -> Result<(), KernelError> {
        let bad = |m: String| Err(KernelError::InvalidSpec(m));
        match self.family {
            KernelFamily::Mass | KernelFamily::Polynomial { .. } => Ok(()),
            KernelFamily::ExpShaped {
                k,
                beta2,
                endpoint_vanishing,
            } => {
                if !(beta2 < 0.0) || !beta2.is_finite() {
                    return bad(format!("beta2 must be negative, got {beta2}"));
                }
                if endpoint_vanishing && k != 1 {
                    return bad(format!("endpoint-vanishing exponential shaping needs k = 1, got {k}"));
                }
                if !endpoint_vanishing && k < 2 {
                    return bad(format!("exponential shaping needs k >= 2, got {k}"));
                }
                Ok(())
            }
            KernelFamily::RationalEV { q } => {
                if !(q > 0.0) || !q.is_finite() {
                    return bad(format!("q must be positive, got {q}"));
                }
                Ok(())
            }
            KernelFamily::PadeEV { p, q } => {
                if !(q > 0.0) || !q.is_finite() || !p.is_finite() {
                    return bad(format!("need finite p and q > 0, got p = {p}, q = {q}"));
                }
                let shape = Shape::from_family(&self.family);
                for j in 0..SHAPE_PROBE_POINTS {
                    let u = j as f64 / SHAPE_PROBE_POINTS as f64;
                    let s = shape.s(u);
                    if !(s > 0.0) {
                        return Err(KernelError::NegativeShape { abscissa: u, value: s });
                    }
                }
                Ok(())
            }
        }
    }

    /// Vanishing order of `Q'` at `φ = ±1`.
    pub fn degeneracy_order(&self) -> u32 {
        match self.family {
            KernelFamily::Mass => 0,
            KernelFamily::Polynomial { k } => k,
            KernelFamily::ExpShaped {
                k, endpoint_vanishing, ..
            } => k + endpoint_vanishing as u32,
            KernelFamily::RationalEV { .. } | KernelFamily::PadeEV { .. } => 2,
        }
    }

    /// True for the `k = 1` unshaped kernel, whose first profile correction
    /// vanishes identically.
    pub fn is_nmn(&self) -> bool {
        matches!(self.family, KernelFamily::Polynomial { k: 1 })
    }
}

/// Unnormalized density `(1-u²)^k S(u)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shape {
    k: i32,
    kind: ShapeKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum ShapeKind {
    Unit,
    Exp { beta2: f64, offset: f64 },
    Rational { q: f64, offset: f64 },
    Pade { p: f64, q: f64, offset: f64 },
}

impl Shape {
    pub fn from_family(family: &KernelFamily) -> Self {
        match *family {
            KernelFamily::Mass => Self {
                k: 0,
                kind: ShapeKind::Unit,
            },
            KernelFamily::Polynomial { k } => Self {
                k: k as i32,
                kind: ShapeKind::Unit,
            },
            KernelFamily::ExpShaped {
                k,
                beta2,
                endpoint_vanishing,
            } => Self {
                k: k as i32,
                kind: ShapeKind::Exp {
                    beta2,
                    offset: if endpoint_vanishing { beta2.exp() } else { 0.0 },
                },
            },
            KernelFamily::RationalEV { q } => Self {
                k: 1,
                kind: ShapeKind::Rational {
                    q,
                    offset: 1.0 / (1.0 + q),
                },
            },
            KernelFamily::PadeEV { p, q } => Self {
                k: 1,
                kind: ShapeKind::Pade {
                    p,
                    q,
                    offset: (1.0 + p) / (1.0 + q),
                },
            },
        }
    }

    /// Shaping function `S(u)`.
    #[inline]
    pub fn s(&self, u: f64) -> f64 {
        let u2 = u * u;
        match self.kind {
            ShapeKind::Unit => 1.0,
            ShapeKind::Exp { beta2, offset } => (beta2 * u2).exp() - offset,
            ShapeKind::Rational { q, offset } => 1.0 / (1.0 + q * u2) - offset,
            ShapeKind::Pade { p, q, offset } => (1.0 + p * u2 * u2) / (1.0 + q * u2) - offset,
        }
    }

    /// `(1-u²)^k S(u)`.
    #[inline]
    pub fn density(&self, u: f64) -> f64 {
        let g = (1.0 - u * u).max(0.0);
        g.powi(self.k) * self.s(u)
    }

    /// Same density written in the stretched coordinate with
    /// `1 - u² = one_minus_u2` passed separately, so that the factor stays
    /// accurate where `u` rounds to 1.
    #[inline]
    pub fn density_split(&self, u: f64, one_minus_u2: f64) -> f64 {
        let s = match self.kind {
            // S(u) for endpoint-vanishing shapes also loses digits near u = 1;
            // rewrite each as a multiple of (1 - u²).
            ShapeKind::Rational { q, .. } => q * one_minus_u2 / ((1.0 + q * u * u) * (1.0 + q)),
            ShapeKind::Pade { p, q, .. } => {
                let u2 = u * u;
                // (1+pu⁴)(1+q) - (1+p)(1+qu²)
                //   = (q - p) - q(1+p)u² + p(1+q)u⁴
                //   = (1-u²)·((q - p) - p(1+q)u²)
                one_minus_u2 * ((q - p) - p * (1.0 + q) * u2) / ((1.0 + q * u2) * (1.0 + q))
            }
            ShapeKind::Exp { beta2, offset } if offset != 0.0 => {
                // exp(β₂u²) - exp(β₂) = exp(β₂) (exp(-β₂(1-u²)) - 1)
                offset * (-beta2 * one_minus_u2).exp_m1()
            }
            _ => self.s(u),
        };
        one_minus_u2.max(0.0).powi(self.k) * s
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Representation {
    /// Coefficients of `Q̄(φ)` in powers of `φ²`, and of `1 - Q(1 - v)` in
    /// powers of `v`.
    Polynomial { qbar: Vec<f64>, tail: Vec<f64> },
    Table(HermiteTable1D),
}

/// Normalized, ready-to-evaluate conserved mapping.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTable {
    spec: KernelSpec,
    shape: Shape,
    normalization: f64,
    repr: Representation,
    degeneracy_order: u32,
    phi_tol: f64,
    alpha_qprime: f64,
}

impl KernelTable {
    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    /// The constant `B` of the normalized density.
    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    pub fn degeneracy_order(&self) -> u32 {
        self.degeneracy_order
    }

    pub fn phi_tol(&self) -> f64 {
        self.phi_tol
    }

    pub fn alpha_qprime(&self) -> f64 {
        self.alpha_qprime
    }

    pub fn is_tabulated(&self) -> bool {
        matches!(self.repr, Representation::Table(_))
    }

    pub fn with_alpha_qprime(mut self, alpha: f64) -> Self {
        self.alpha_qprime = alpha;
        self
    }

    pub fn with_phi_tol(mut self, tol: f64) -> Self {
        self.phi_tol = tol;
        self
    }

    fn check_range(phi: f64) -> Result<f64, KernelError> {
        if !phi.is_finite() || phi.abs() > 1.0 + OVERSHOOT_TOL {
            return Err(KernelError::OutOfRange(phi));
        }
        Ok(phi.clamp(-1.0, 1.0))
    }

    /// `Q(φ)`; fails when `|φ| > 1 + 1e-6`.
    pub fn eval_q(&self, phi: f64) -> Result<f64, KernelError> {
        Self::check_range(phi).map(|p| self.q(p))
    }

    /// `Q̄(φ) = Q(φ)/φ`, with `Q'(0)` below `phi_tol`.
    pub fn eval_qbar(&self, phi: f64) -> Result<f64, KernelError> {
        Self::check_range(phi).map(|p| self.qbar(p))
    }

    pub fn eval_qprime(&self, phi: f64) -> Result<f64, KernelError> {
        Self::check_range(phi).map(|p| self.q_prime(p))
    }

    /// `max(Q'(φ), α)`.
    pub fn eval_qprime_floored(&self, phi: f64) -> Result<f64, KernelError> {
        Self::check_range(phi).map(|p| self.q_prime_floored(p))
    }

    /// `Q(φ)` with `φ` clamped to `[-1, 1]`.
    #[inline]
    pub fn q(&self, phi: f64) -> f64 {
        let phi = phi.clamp(-1.0, 1.0);
        match &self.repr {
            Representation::Polynomial { qbar, tail } => {
                if phi.abs() <= 0.5 {
                    phi * horner_even(qbar, phi)
                } else {
                    let v = 1.0 - phi.abs();
                    let r = tail.iter().rev().fold(0.0, |acc, c| acc * v + c);
                    (1.0 - r).copysign(phi)
                }
            }
            Representation::Table(t) => t.eval_odd(phi),
        }
    }

    #[inline]
    pub fn qbar(&self, phi: f64) -> f64 {
        let phi = phi.clamp(-1.0, 1.0);
        match &self.repr {
            Representation::Polynomial { qbar, .. } => horner_even(qbar, phi),
            Representation::Table(t) => {
                if phi.abs() <= self.phi_tol {
                    self.q_prime(0.0)
                } else {
                    t.eval(phi.abs()) / phi.abs()
                }
            }
        }
    }

    /// Analytic `Q'(φ)` from the family formula.
    #[inline]
    pub fn q_prime(&self, phi: f64) -> f64 {
        let phi = phi.clamp(-1.0, 1.0);
        self.shape.density(phi) / self.normalization
    }

    #[inline]
    pub fn q_prime_floored(&self, phi: f64) -> f64 {
        self.q_prime(phi).max(self.alpha_qprime)
    }
}

#[inline]
fn horner_even(c: &[f64], phi: f64) -> f64 {
    let x = phi * phi;
    c.iter().rev().fold(0.0, |acc, ci| acc * x + ci)
}

/// `∫₀¹ (1-s²)^k ds = 2^{2k} (k!)² / (2k+1)!`.
pub fn polynomial_normalization(k: u32) -> f64 {
    // Product form avoids overflow: Π_{j=1..k} 2j/(2j+1).
    (1..=k).fold(1.0, |acc, j| acc * (2 * j) as f64 / (2 * j + 1) as f64)
}

/// Builds a kernel with the default shaped-kernel table resolution.
pub fn build_kernel(spec: &KernelSpec) -> Result<KernelTable, KernelError> {
    build_kernel_with_nodes(spec, DEFAULT_KERNEL_TABLE_NODES)
}

/// Builds a kernel; shaped families are tabulated on `node_count` nodes.
pub fn build_kernel_with_nodes(spec: &KernelSpec, node_count: usize) -> Result<KernelTable, KernelError> {
    spec.validate()?;
    let shape = Shape::from_family(&spec.family);
    let degeneracy_order = spec.degeneracy_order();
    let (normalization, repr) = match spec.family {
        KernelFamily::Mass | KernelFamily::Polynomial { .. } => {
            let k = degeneracy_order;
            let b = polynomial_normalization(k);
            // (1-φ²)^k = Σ_j C(k,j) (-1)^j φ^{2j}; integrate term by term.
            let mut binom = 1.0;
            let coeffs = (0..=k)
                .map(|j| {
                    if j > 0 {
                        binom *= (k - j + 1) as f64 / j as f64;
                    }
                    let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                    sign * binom / ((2 * j + 1) as f64 * b)
                })
                .collect();
            // (1-s²)^k = w^k (2-w)^k with w = 1-s; integrate over w ∈ [0, v].
            let mut tail = vec![0.0; 2 * k as usize + 2];
            let mut binom = 1.0;
            for j in 0..=k {
                if j > 0 {
                    binom *= (k - j + 1) as f64 / j as f64;
                }
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                let power = (k + j + 1) as usize;
                tail[power] = sign * binom * 2f64.powi((k - j) as i32) / (power as f64 * b);
            }
            (b, Representation::Polynomial { qbar: coeffs, tail })
        }
        _ => {
            if node_count < 4 {
                return Err(QuadError::TooFewNodes(node_count).into());
            }
            for j in 1..SHAPE_PROBE_POINTS {
                let u = j as f64 / SHAPE_PROBE_POINTS as f64;
                let s = shape.s(u);
                if !(s > 0.0) {
                    return Err(KernelError::NegativeShape { abscissa: u, value: s });
                }
            }
            let h = 1.0 / (node_count - 1) as f64;
            let rule = quad::gl16();
            let mut cumulative = Vec::with_capacity(node_count);
            cumulative.push(0.0);
            for j in 1..node_count {
                let a = (j - 1) as f64 * h;
                let b = if j == node_count - 1 { 1.0 } else { j as f64 * h };
                let piece = quad::integrate_fixed(|u| shape.density(u), rule, a, b)?;
                cumulative.push(cumulative[j - 1] + piece);
            }
            let b = cumulative[node_count - 1];
            let values: Vec<f64> = cumulative.iter().map(|v| v / b).collect();
            let derivatives = (0..node_count).map(|j| shape.density(j as f64 * h) / b).collect();
            let mut values = values;
            values[node_count - 1] = 1.0;
            (b, Representation::Table(HermiteTable1D::from_samples(values, derivatives)?))
        }
    };
    Ok(KernelTable {
        spec: spec.clone(),
        shape,
        normalization,
        repr,
        degeneracy_order,
        phi_tol: DEFAULT_PHI_TOL,
        alpha_qprime: DEFAULT_ALPHA_QPRIME,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::integrate_adaptive;
    use proptest::prelude::*;

    fn table1_kernels() -> Vec<KernelTable> {
        [
            KernelSpec::mass(),
            KernelSpec::nmn(),
            KernelSpec::zhou(2),
            KernelSpec::zhou(3),
            KernelSpec::zhou(8),
            KernelSpec::exp_k2(-6.95),
            KernelSpec::exp_k1(-8.12),
            KernelSpec::rational(20.9),
            KernelSpec::pade(-0.30, 23.4),
        ]
        .iter()
        .map(|s| build_kernel(s).unwrap())
        .collect()
    }

    #[test]
    fn polynomial_examples() {
        let k1 = build_kernel(&KernelSpec::nmn()).unwrap();
        assert!((k1.normalization() - 2.0 / 3.0).abs() < 1e-15);
        assert!((k1.q_prime(0.0) - 1.5).abs() < 1e-15);
        assert!((k1.eval_q(1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((k1.eval_q(0.5).unwrap() - 0.6875).abs() < 1e-15);
        assert!((k1.eval_qbar(0.0).unwrap() - 1.5).abs() < 1e-15);
        assert!((k1.eval_qbar(1e-12).unwrap() - 1.5).abs() < 1e-15);
        assert!((k1.eval_qprime_floored(1.0).unwrap() - 1e-6).abs() < 1e-20);
        assert!((k1.eval_qprime_floored(-1.0).unwrap() - 1e-6).abs() < 1e-20);
        assert!((k1.eval_qprime_floored(0.0).unwrap() - 1.5).abs() < 1e-15);

        let k2 = build_kernel(&KernelSpec::zhou(2)).unwrap();
        for phi in [0.0, 0.3, 0.7, 1.0] {
            let p2 = phi * phi;
            let expected = 15.0 / 8.0 - 1.25 * p2 + 0.375 * p2 * p2;
            assert!((k2.qbar(phi) - expected).abs() < 1e-14);
        }
        assert!((k2.eval_qbar(1.0).unwrap() - 1.0).abs() < 1e-14);

        let m = build_kernel(&KernelSpec::mass()).unwrap();
        assert_eq!(m.normalization(), 1.0);
        assert_eq!(m.q(0.37), 0.37);
        let p0 = build_kernel(&KernelSpec::new(KernelFamily::Polynomial { k: 0 }, "")).unwrap();
        for phi in [-0.9, 0.1, 0.5] {
            assert_eq!(p0.q(phi), m.q(phi));
            assert_eq!(p0.q_prime(phi), m.q_prime(phi));
        }
    }

    #[test]
    fn nmn_quadrature_oracle_at_half() {
        let k1 = build_kernel(&KernelSpec::nmn()).unwrap();
        let oracle = integrate_adaptive(|s| 1.5 * (1.0 - s * s), 0.0, 0.5, 1e-14, 1e-14).unwrap();
        assert!((k1.q(0.5) - oracle).abs() < 1e-14);
    }

    #[test]
    fn out_of_range_is_rejected() {
        let k = build_kernel(&KernelSpec::nmn()).unwrap();
        assert!(matches!(k.eval_q(1.01), Err(KernelError::OutOfRange(_))));
        assert!(matches!(k.eval_qbar(f64::NAN), Err(KernelError::OutOfRange(_))));
        assert_eq!(k.eval_q(1.0 + 5e-7).unwrap(), 1.0);
    }

    #[test]
    fn spec_validation() {
        let bad = [
            KernelSpec::new(
                KernelFamily::ExpShaped {
                    k: 2,
                    beta2: -3.0,
                    endpoint_vanishing: true,
                },
                "",
            ),
            KernelSpec::new(
                KernelFamily::ExpShaped {
                    k: 1,
                    beta2: -3.0,
                    endpoint_vanishing: false,
                },
                "",
            ),
            KernelSpec::exp_k2(1.0),
            KernelSpec::rational(-1.0),
            KernelSpec::pade(0.0, -2.0),
        ];
        for s in bad {
            assert!(build_kernel(&s).is_err(), "{s:?}");
        }
        // p large and positive makes S negative near the endpoint.
        let err = build_kernel(&KernelSpec::pade(30.0, 2.0)).unwrap_err();
        assert!(matches!(err, KernelError::NegativeShape { .. }), "{err:?}");
    }

    #[test]
    fn normalization_and_endpoints() {
        for k in table1_kernels() {
            assert!((k.q(1.0) - 1.0).abs() < 1e-10, "{}", k.spec().display_label());
            assert_eq!(k.q(0.0), 0.0);
            let total = integrate_adaptive(|u| k.q_prime(u), -1.0, 1.0, 1e-13, 1e-13).unwrap();
            assert!((total - 2.0).abs() < 1e-10, "{}", k.spec().display_label());
        }
    }

    #[test]
    fn monotone_on_probe_grid() {
        for k in table1_kernels() {
            let mut prev = f64::NEG_INFINITY;
            for j in 0..=10_000 {
                let phi = -1.0 + 2.0 * j as f64 / 10_000.0;
                let q = k.q(phi);
                assert!(q >= prev, "{} at {phi}", k.spec().display_label());
                prev = q;
                if phi.abs() < 1.0 {
                    assert!(k.q_prime(phi) > 0.0);
                }
            }
        }
    }

    #[test]
    fn finite_differences_match_derivative() {
        for k in table1_kernels() {
            let h = 1e-5;
            for j in 0..=198 {
                let phi = -0.99 + 0.01 * j as f64;
                let fd = (k.q(phi + h) - k.q(phi - h)) / (2.0 * h);
                assert!((fd - k.q_prime(phi)).abs() < 1e-6, "{} at {phi}", k.spec().display_label());
            }
        }
    }

    #[test]
    fn endpoint_vanishing_adds_one_power() {
        for spec in [
            KernelSpec::exp_k1(-8.12),
            KernelSpec::rational(20.9),
            KernelSpec::pade(-0.3, 23.4),
        ] {
            let k = build_kernel(&spec).unwrap();
            assert_eq!(k.degeneracy_order(), 2);
            let ratios: Vec<f64> = (2..=6)
                .map(|j| {
                    let phi = 1.0 - 10f64.powi(-j);
                    k.q_prime(phi) / (1.0 - phi * phi).powi(2)
                })
                .collect();
            let last = ratios[ratios.len() - 1];
            assert!(last > 0.0 && last.is_finite());
            assert!(((ratios[3] - last) / last).abs() < 1e-3, "{ratios:?}");
        }
    }

    #[test]
    fn qbar_continuous_across_switch() {
        for k in table1_kernels() {
            let tol = k.phi_tol();
            let inside = k.qbar(tol);
            let outside = k.qbar(tol * (1.0 + 1e-6));
            assert!((inside - outside).abs() < 1e-9, "{}", k.spec().display_label());
        }
    }

    #[test]
    fn floor_active_near_endpoint_for_exp_k1() {
        let k = build_kernel(&KernelSpec::exp_k1(-8.12)).unwrap();
        let b = k.normalization();
        let direct = (1.0 - 0.999f64.powi(2)) * ((-8.12 * 0.999f64.powi(2)).exp() - (-8.12f64).exp()) / b;
        assert!(direct < 1e-6);
        assert_eq!(k.eval_qprime_floored(0.999).unwrap(), 1e-6);
    }

    #[test]
    fn tabulated_q_matches_direct_quadrature() {
        let k = build_kernel(&KernelSpec::exp_k1(-8.12)).unwrap();
        let shape = *k.shape();
        let b = integrate_adaptive(|u| shape.density(u), 0.0, 1.0, 1e-15, 1e-15).unwrap();
        let mut worst: f64 = 0.0;
        for j in 0..10_000 {
            let u = (j as f64 + 0.5) / 10_000.0;
            let direct = integrate_adaptive(|s| shape.density(s), 0.0, u, 1e-15, 1e-15).unwrap() / b;
            worst = worst.max((k.q(u) - direct).abs());
        }
        assert!(worst < 1e-10, "max table error {worst}");
    }

    #[test]
    fn density_split_matches_density() {
        for spec in [
            KernelSpec::exp_k1(-8.12),
            KernelSpec::rational(20.9),
            KernelSpec::pade(-0.3, 23.4),
            KernelSpec::exp_k2(-6.95),
            KernelSpec::zhou(3),
        ] {
            let s = Shape::from_family(&spec.family);
            for u in [0.0, 0.2, 0.5, 0.9] {
                let a = s.density(u);
                let b = s.density_split(u, 1.0 - u * u);
                assert!((a - b).abs() < 1e-13 * a.abs().max(1.0), "{spec:?} {u}");
            }
        }
    }

    #[test]
    fn spec_serde_round_trip() {
        let spec = KernelSpec::pade(-0.3, 23.4);
        let text = toml::to_string(&spec).unwrap();
        assert!(text.contains("family = \"pade\""));
        let back: KernelSpec = toml::from_str(&text).unwrap();
        assert_eq!(back, spec);
    }

    proptest! {
        #[test]
        fn odd_symmetry_exact(phi in -1.0f64..1.0) {
            for k in [build_kernel(&KernelSpec::exp_k1(-8.12)).unwrap(), build_kernel(&KernelSpec::zhou(3)).unwrap()] {
                prop_assert_eq!(k.q(-phi), -k.q(phi));
            }
        }
    }
}
