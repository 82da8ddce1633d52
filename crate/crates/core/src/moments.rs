//! Inner-profile quantities and the moment hierarchy of a conserved mapping.
//!
//! All profile integrals are evaluated in the stretched coordinate `z`, where
//! `u = σ(z) = tanh(z/√2)`. Quantities that approach 1 near the interface
//! tails (`Q`, `Q₁`) are carried through their complements so that the
//! differences `Q - Q₁` and `1 - Q` keep their relative accuracy.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{self, FreeParameter, KernelError, KernelSpec, KernelTable, Shape};
use crate::quad::{self, QuadError};

pub const DEFAULT_Z_MAX: f64 = 20.0;
pub const DEFAULT_PROFILE_POINTS: usize = 2001;
pub const ROOT_RESIDUAL_TOL: f64 = 1e-6;
pub const ROOT_PARAM_TOL: f64 = 1e-8;

const TAIL_Z_MAX: f64 = 40.0;
const TAIL_PANELS: usize = 320;
const QUAD_ABS_TOL: f64 = 1e-14;
const QUAD_REL_TOL: f64 = 1e-12;
const ROOT_MAX_ITER: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MomentError {
    #[error("quadrature did not converge (best estimate {estimate:e}, error bound {error_bound:e})")]
    Quadrature { estimate: f64, error_bound: f64 },
    #[error("quadrature failed: {0}")]
    QuadratureFailure(QuadError),
    #[error("divergent dynamic moment: effective degeneracy order {0} < 2")]
    DivergentDynamicMoment(u32),
    #[error("invalid profile request: {0}")]
    InvalidProfile(String),
    #[error("no moment-balance root in bracket [{lo}, {hi}] (C1 = {c_lo:e}, {c_hi:e})")]
    NoRootInBracket { lo: f64, hi: f64, c_lo: f64, c_hi: f64 },
    #[error("root search did not reach |C1| < {tol:e} (best parameter {best}, C1 = {residual:e})")]
    RootNotConverged { best: f64, residual: f64, tol: f64 },
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

impl From<QuadError> for MomentError {
    fn from(e: QuadError) -> Self {
        match e {
            QuadError::MaxDepth { estimate, error_bound } => Self::Quadrature { estimate, error_bound },
            other => Self::QuadratureFailure(other),
        }
    }
}

/// `σ(z) = tanh(z/√2)`.
#[inline]
pub fn sigma(z: f64) -> f64 {
    (z / SQRT_2).tanh()
}

/// `1 - σ(z)² = sech²(z/√2)`, accurate in the tails.
#[inline]
pub fn one_minus_sigma2(z: f64) -> f64 {
    let c = (z / SQRT_2).cosh();
    1.0 / (c * c)
}

/// `σ'(z) = (1 - σ²)/√2`.
#[inline]
pub fn sigma_prime(z: f64) -> f64 {
    one_minus_sigma2(z) / SQRT_2
}

/// `Q₁(u) = (3u - u³)/2`.
#[inline]
pub fn q1(u: f64) -> f64 {
    1.5 * u - 0.5 * u * u * u
}

/// `1 - Q₁(σ(z))` for `z ≥ 0`, from `1 - Q₁ = (1-u)²(2+u)/2`.
#[inline]
fn q1_complement(z: f64) -> f64 {
    let one_minus_u = 2.0 / (1.0 + (SQRT_2 * z).exp());
    let u = sigma(z);
    0.5 * one_minus_u * one_minus_u * (2.0 + u)
}

/// Double-well potential `W(φ) = (φ² - 1)²/4` and its derivatives.
#[inline]
pub fn w(phi: f64) -> f64 {
    let a = phi * phi - 1.0;
    0.25 * a * a
}

#[inline]
pub fn w_prime(phi: f64) -> f64 {
    phi * phi * phi - phi
}

#[inline]
pub fn w_second(phi: f64) -> f64 {
    3.0 * phi * phi - 1.0
}

/// `Q(σ(z))` and `1 - Q(σ(z))` for `z ≥ 0`, from cumulative head and tail
/// sums of the density on fixed panels plus one partial panel.
struct ProfileTails {
    shape: Shape,
    norm: f64,
    head: Vec<f64>,
    tail: Vec<f64>,
}

impl ProfileTails {
    fn new(shape: Shape) -> Self {
        let h = TAIL_Z_MAX / TAIL_PANELS as f64;
        let mut pieces = Vec::with_capacity(TAIL_PANELS);
        for j in 0..TAIL_PANELS {
            pieces.push(Self::panel_raw(&shape, j as f64 * h, (j + 1) as f64 * h));
        }
        let mut head = vec![0.0; TAIL_PANELS + 1];
        for j in 0..TAIL_PANELS {
            head[j + 1] = head[j] + pieces[j];
        }
        let mut tail = vec![0.0; TAIL_PANELS + 1];
        for j in (0..TAIL_PANELS).rev() {
            tail[j] = tail[j + 1] + pieces[j];
        }
        let norm = head[TAIL_PANELS];
        Self { shape, norm, head, tail }
    }

    fn density_z(shape: &Shape, z: f64) -> f64 {
        let g = one_minus_sigma2(z);
        shape.density_split(sigma(z), g) * g / SQRT_2
    }

    fn panel_raw(shape: &Shape, a: f64, b: f64) -> f64 {
        let rule = quad::gl16();
        let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
        rule.nodes()
            .iter()
            .zip(rule.weights())
            .map(|(x, wt)| wt * Self::density_z(shape, c + r * x))
            .sum::<f64>()
            * r
    }

    fn index(z: f64) -> usize {
        let h = TAIL_Z_MAX / TAIL_PANELS as f64;
        ((z / h) as usize).min(TAIL_PANELS - 1)
    }

    /// `Q(σ(z))`, `z ≥ 0`.
    fn q(&self, z: f64) -> f64 {
        let h = TAIL_Z_MAX / TAIL_PANELS as f64;
        let j = Self::index(z);
        (self.head[j] + Self::panel_raw(&self.shape, j as f64 * h, z)) / self.norm
    }

    /// `1 - Q(σ(z))`, `z ≥ 0`.
    fn complement(&self, z: f64) -> f64 {
        let h = TAIL_Z_MAX / TAIL_PANELS as f64;
        let j = Self::index(z);
        if z >= TAIL_Z_MAX {
            return 0.0;
        }
        (self.tail[j + 1] + Self::panel_raw(&self.shape, z, (j + 1) as f64 * h)) / self.norm
    }

    /// `Q(σ(z)) - Q₁(σ(z))`, `z ≥ 0`.
    fn excess(&self, z: f64) -> f64 {
        if sigma(z) < 0.5 {
            self.q(z) - q1(sigma(z))
        } else {
            q1_complement(z) - self.complement(z)
        }
    }

    /// Integrand of the reduced first correction: `(Q - Q₁)/((1-σ²)²√2)`.
    fn phi1_integrand(&self, z: f64) -> f64 {
        let g = one_minus_sigma2(z);
        self.excess(z) / (g * g * SQRT_2)
    }
}

/// Inner profile with the reduced first correction on a symmetric grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerProfile {
    pub z_grid: Vec<f64>,
    pub sigma: Vec<f64>,
    pub phi1: Vec<f64>,
    pub sup_norm: f64,
}

impl InnerProfile {
    pub fn spacing(&self) -> f64 {
        self.z_grid[1] - self.z_grid[0]
    }
}

/// Moment summary of one kernel. `j1`, `c1` and `sup_phi1` are absent when
/// the dynamic moment diverges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub kernel_label: String,
    pub m1: f64,
    pub j1: Option<f64>,
    pub c1: Option<f64>,
    pub c0: f64,
    pub sup_phi1: Option<f64>,
    pub normalization: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticConstants {
    pub c_w: f64,
    pub c_m: f64,
    pub c_n: f64,
    pub c_sd: f64,
}

/// Closed form `Σ_{j=1..k} 1/j² - π²/6` of the geometric moment of the
/// unshaped degree-`k` kernel.
pub fn m1_polynomial_closed_form(k: u32) -> f64 {
    (1..=k).map(|j| 1.0 / (j as f64 * j as f64)).sum::<f64>() - PI * PI / 6.0
}

/// Geometric moment `-2 ∫₀¹ Q'(u) atanh²(u) du`, integrated in `t = atanh u`.
pub fn compute_m1(kernel: &KernelTable) -> Result<f64, MomentError> {
    let shape = *kernel.shape();
    let b = kernel.normalization();
    let f = |t: f64| {
        let c = t.cosh();
        let sech2 = 1.0 / (c * c);
        shape.density_split(t.tanh(), sech2) / b * t * t * sech2
    };
    let v = quad::integrate_adaptive(f, 0.0, TAIL_Z_MAX, QUAD_ABS_TOL, QUAD_REL_TOL)?;
    Ok(-2.0 * v)
}

fn check_dynamic_moment(kernel: &KernelTable) -> Result<(), MomentError> {
    let order = kernel.degeneracy_order();
    if order < 2 && !kernel.spec().is_nmn() {
        return Err(MomentError::DivergentDynamicMoment(order));
    }
    Ok(())
}

/// Dynamic moment `8/3 ∫₀¹ (Q - Q₁)(1 - Q)/(1-u²)³ du`.
pub fn compute_j1(kernel: &KernelTable) -> Result<f64, MomentError> {
    check_dynamic_moment(kernel)?;
    if kernel.spec().is_nmn() {
        return Ok(0.0);
    }
    let tails = ProfileTails::new(*kernel.shape());
    let f = |z: f64| {
        let g = one_minus_sigma2(z);
        tails.excess(z) * tails.complement(z) / (g * g)
    };
    let v = quad::integrate_adaptive(f, 0.0, DEFAULT_Z_MAX, QUAD_ABS_TOL, QUAD_REL_TOL)?;
    Ok(8.0 / 3.0 / SQRT_2 * v)
}

/// `∫ (½(1 + Q(σ)) - Θ(z)) dz`, summing the two half-lines separately.
pub fn compute_c0(kernel: &KernelTable) -> Result<f64, MomentError> {
    let left = quad::integrate_adaptive(
        |z| 0.5 * (1.0 + kernel.q(sigma(z))),
        -TAIL_Z_MAX,
        0.0,
        QUAD_ABS_TOL,
        QUAD_REL_TOL,
    )?;
    let right = quad::integrate_adaptive(
        |z| 0.5 * (1.0 + kernel.q(sigma(z))) - 1.0,
        0.0,
        TAIL_Z_MAX,
        QUAD_ABS_TOL,
        QUAD_REL_TOL,
    )?;
    Ok(left + right)
}

/// Reduced first correction `Φ₁(z) = 4/3 σ'(z) ∫₀^z (Q - Q₁)/((1-σ²)²√2) dζ`
/// on `n_points` uniform points of `[-z_max, z_max]`.
pub fn compute_phi1(kernel: &KernelTable, z_max: f64, n_points: usize) -> Result<InnerProfile, MomentError> {
    if !(z_max >= 10.0) {
        return Err(MomentError::InvalidProfile(format!("z_max must be at least 10, got {z_max}")));
    }
    if n_points < 3 || n_points % 2 == 0 {
        return Err(MomentError::InvalidProfile(format!(
            "need an odd number of at least 3 points, got {n_points}"
        )));
    }
    check_dynamic_moment(kernel)?;
    let half = n_points / 2;
    let h = z_max / half as f64;
    let z_grid: Vec<f64> = (0..n_points).map(|i| (i as f64 - half as f64) * h).collect();
    let sigma_vals: Vec<f64> = z_grid.iter().map(|&z| sigma(z)).collect();
    let mut positive = vec![0.0; half + 1];
    if !kernel.spec().is_nmn() {
        let tails = ProfileTails::new(*kernel.shape());
        let rule = quad::gl16();
        let mut acc = 0.0;
        for i in 1..=half {
            let a = (i - 1) as f64 * h;
            let piece = quad::integrate_fixed(|z| tails.phi1_integrand(z), rule, a, a + h)?;
            acc += piece;
            let z = i as f64 * h;
            positive[i] = 4.0 / 3.0 * sigma_prime(z) * acc;
        }
    }
    let phi1: Vec<f64> = (0..n_points).map(|i| positive[i.abs_diff(half)]).collect();
    let sup_norm = phi1.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(InnerProfile {
        z_grid,
        sigma: sigma_vals,
        phi1,
        sup_norm,
    })
}

/// Interior residual of `Φ₁'' - W''(σ)Φ₁ - (√2/3 Q'(σ) - σ')` with a
/// sixth-order seven-point second difference; returns the max magnitude.
pub fn phi1_ode_residual(kernel: &KernelTable, profile: &InnerProfile) -> f64 {
    const STENCIL: [f64; 7] = [
        1.0 / 90.0,
        -3.0 / 20.0,
        1.5,
        -49.0 / 18.0,
        1.5,
        -3.0 / 20.0,
        1.0 / 90.0,
    ];
    let h = profile.spacing();
    let phi = &profile.phi1;
    let mut worst: f64 = 0.0;
    for i in 3..phi.len().saturating_sub(3) {
        let d2 = STENCIL
            .iter()
            .enumerate()
            .map(|(j, c)| c * phi[i + j - 3])
            .sum::<f64>()
            / (h * h);
        let z = profile.z_grid[i];
        let s = profile.sigma[i];
        let source = SQRT_2 / 3.0 * kernel.q_prime(s) - sigma_prime(z);
        worst = worst.max((d2 - w_second(s) * phi[i] - source).abs());
    }
    worst
}

/// Profile constants for mobility `(1 - φ²)^ℓ`.
pub fn compute_constants(mobility_exponent: u32) -> Result<AsymptoticConstants, MomentError> {
    if mobility_exponent < 1 {
        return Err(MomentError::InvalidProfile("mobility exponent must be at least 1".into()));
    }
    let c_w = 2.0 * SQRT_2 / 3.0;
    let half = quad::integrate_adaptive(
        |z| one_minus_sigma2(z).powi(mobility_exponent as i32),
        0.0,
        TAIL_Z_MAX,
        QUAD_ABS_TOL,
        1e-14,
    )?;
    let c_m = 2.0 * half;
    let c_n = 2.0;
    Ok(AsymptoticConstants {
        c_w,
        c_m,
        c_n,
        c_sd: c_m * c_w / (c_n * c_n),
    })
}

/// Full moment report. Kernels whose dynamic moment diverges get `None`
/// for the dynamic quantities.
pub fn compute_report(kernel: &KernelTable) -> Result<MomentReport, MomentError> {
    let m1 = compute_m1(kernel)?;
    let c0 = compute_c0(kernel)?;
    let (j1, sup_phi1) = match compute_j1(kernel) {
        Ok(j1) => {
            let profile = compute_phi1(kernel, DEFAULT_Z_MAX, DEFAULT_PROFILE_POINTS)?;
            (Some(j1), Some(profile.sup_norm))
        }
        Err(MomentError::DivergentDynamicMoment(_)) => (None, None),
        Err(e) => return Err(e),
    };
    Ok(MomentReport {
        kernel_label: kernel.spec().display_label(),
        m1,
        j1,
        c1: j1.map(|j| m1 + j),
        c0,
        sup_phi1,
        normalization: kernel.normalization(),
    })
}

/// `C₁ = M₁ + J₁` for one spec.
pub fn combined_moment(spec: &KernelSpec) -> Result<f64, MomentError> {
    let k = kernel::build_kernel(spec)?;
    Ok(compute_m1(&k)? + compute_j1(&k)?)
}

/// Solves `C₁(θ) = 0` for the free parameter inside `bracket` with Brent's
/// method, returning the tuned spec and its report.
pub fn tune_kernel(
    template: &KernelSpec,
    free: FreeParameter,
    bracket: (f64, f64),
) -> Result<(KernelSpec, MomentReport), MomentError> {
    let eval = |theta: f64| -> Result<f64, MomentError> { combined_moment(&template.with_parameter(free, theta)?) };
    let theta = brent_root(eval, bracket.0, bracket.1, ROOT_PARAM_TOL, ROOT_RESIDUAL_TOL)?;
    let spec = template.with_parameter(free, theta)?;
    let report = compute_report(&kernel::build_kernel(&spec)?)?;
    Ok((spec, report))
}

/// Brent's bracketing root finder. Stops when the bracket is narrower than
/// `x_tol` and `|f| < f_tol`, or when `|f| < f_tol` at the current iterate
/// and the bracket has already shrunk below `x_tol`.
fn brent_root<F>(mut f: F, lo: f64, hi: f64, x_tol: f64, f_tol: f64) -> Result<f64, MomentError>
where
    F: FnMut(f64) -> Result<f64, MomentError>,
{
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a)?, f(b)?);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(MomentError::NoRootInBracket {
            lo,
            hi,
            c_lo: fa,
            c_hi: fb,
        });
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..ROOT_MAX_ITER {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * x_tol;
        let m = 0.5 * (c - b);
        if fb == 0.0 || (m.abs() <= tol && fb.abs() < f_tol) {
            return Ok(b);
        }
        if m.abs() <= tol {
            // Bracket collapsed without meeting the residual target.
            return Err(MomentError::RootNotConverged {
                best: b,
                residual: fb,
                tol: f_tol,
            });
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b)?;
    }
    Err(MomentError::RootNotConverged {
        best: b,
        residual: fb,
        tol: f_tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::build_kernel;
    use crate::quad::integrate_adaptive;

    fn k(spec: KernelSpec) -> KernelTable {
        build_kernel(&spec).unwrap()
    }

    #[test]
    fn profile_basics() {
        assert_eq!(sigma(0.0), 0.0);
        assert!((sigma(1.3) + sigma(-1.3)).abs() < 1e-16);
        for z in [0.0, 0.7, 3.0, 15.0] {
            let s = sigma(z);
            assert!((one_minus_sigma2(z) - (1.0 - s * s)).abs() < 1e-15);
            let u = sigma(z);
            let direct = 1.0 - q1(u);
            assert!((q1_complement(z) - direct).abs() < 1e-15);
        }
        // Deep in the tail the direct form has lost everything.
        assert!(q1_complement(30.0) > 0.0);
    }

    #[test]
    fn m1_closed_forms() {
        for kk in [1, 2, 3, 8] {
            let got = compute_m1(&k(KernelSpec::zhou(kk))).unwrap();
            let want = m1_polynomial_closed_form(kk);
            assert!((got - want).abs() < 1e-10, "k={kk}: {got} vs {want}");
        }
        assert!((m1_polynomial_closed_form(1) - (-0.644934)).abs() < 1e-6);
        assert!((m1_polynomial_closed_form(3) - (-0.283823)).abs() < 1e-6);
        assert!((m1_polynomial_closed_form(8) - (-0.117512)).abs() < 1e-6);
    }

    #[test]
    fn j1_examples() {
        assert_eq!(compute_j1(&k(KernelSpec::nmn())).unwrap(), 0.0);
        let j2 = compute_j1(&k(KernelSpec::zhou(2))).unwrap();
        assert!((j2 - 0.090).abs() < 5e-3, "{j2}");
        let j8 = compute_j1(&k(KernelSpec::zhou(8))).unwrap();
        assert!((j8 - 0.118).abs() < 5e-3, "{j8}");
        assert!(matches!(
            compute_j1(&k(KernelSpec::mass())),
            Err(MomentError::DivergentDynamicMoment(0))
        ));
    }

    #[test]
    fn j1_matches_direct_u_integral_for_zhou3() {
        // Oracle: the u-form evaluated with expanded polynomials, where the
        // (1-u)^... cancellation is done symbolically.
        // Q₃ - Q₁ and 1 - Q₃ both carry (1-u) factors; integrate on [0, 0.999]
        // where the direct form is still accurate and add the small tail.
        let kern = k(KernelSpec::zhou(3));
        let f = |u: f64| {
            let q = kern.q(u);
            8.0 / 3.0 * (q - q1(u)) * (1.0 - q) / (1.0 - u * u).powi(3)
        };
        let head = integrate_adaptive(f, 0.0, 0.99, 1e-14, 1e-12).unwrap();
        let full = compute_j1(&kern).unwrap();
        assert!(full > head && full - head < 1e-3, "{full} {head}");
    }

    #[test]
    fn c0_vanishes() {
        for spec in [
            KernelSpec::nmn(),
            KernelSpec::mass(),
            KernelSpec::pade(-0.30, 23.4),
            KernelSpec::exp_k1(-8.12),
        ] {
            let c0 = compute_c0(&k(spec.clone())).unwrap();
            assert!(c0.abs() < 1e-10, "{spec:?}: {c0}");
        }
    }

    #[test]
    fn phi1_nmn_is_zero_and_others_are_even() {
        let p = compute_phi1(&k(KernelSpec::nmn()), 20.0, 2001).unwrap();
        assert!(p.phi1.iter().all(|v| v.abs() < 1e-12));
        let p = compute_phi1(&k(KernelSpec::zhou(3)), 20.0, 2001).unwrap();
        assert_eq!(p.phi1[1000], 0.0);
        for i in 0..1000 {
            assert_eq!(p.phi1[i], p.phi1[2000 - i]);
        }
        assert!(p.phi1.iter().all(|v| v.abs() <= 10.0));
        assert!((p.sup_norm - 0.100).abs() < 5e-3);
    }

    #[test]
    fn phi1_rejects_bad_requests() {
        let kern = k(KernelSpec::zhou(2));
        assert!(compute_phi1(&kern, 5.0, 2001).is_err());
        assert!(compute_phi1(&kern, 20.0, 2000).is_err());
        assert!(matches!(
            compute_phi1(&k(KernelSpec::mass()), 20.0, 2001),
            Err(MomentError::DivergentDynamicMoment(_))
        ));
    }

    #[test]
    fn ode_residual_small() {
        for spec in [KernelSpec::zhou(2), KernelSpec::rational(20.9), KernelSpec::exp_k1(-8.12)] {
            let kern = k(spec);
            let p = compute_phi1(&kern, 20.0, 2001).unwrap();
            let r = phi1_ode_residual(&kern, &p);
            assert!(r < 1e-6, "{r}");
        }
    }

    #[test]
    fn constants() {
        let c2 = compute_constants(2).unwrap();
        assert!((c2.c_m - 4.0 * SQRT_2 / 3.0).abs() < 1e-12);
        assert!((c2.c_sd - 4.0 / 9.0).abs() < 1e-12);
        assert_eq!(c2.c_n, 2.0);
        // ∫ sech²(z/√2) dz = [√2 tanh(z/√2)] = 2√2.
        let c1 = compute_constants(1).unwrap();
        let oracle = SQRT_2 * sigma(TAIL_Z_MAX) - SQRT_2 * sigma(-TAIL_Z_MAX);
        assert!((c1.c_m - oracle).abs() < 1e-12);
        assert!(compute_constants(0).is_err());
    }

    #[test]
    fn brent_finds_simple_roots() {
        let r = brent_root(|x| Ok(x * x - 2.0), 0.0, 2.0, 1e-12, 1e-12).unwrap();
        assert!((r - SQRT_2).abs() < 1e-11);
        let r = brent_root(|x| Ok(x.cos() - x), 0.0, 1.0, 1e-12, 1e-12).unwrap();
        assert!((r.cos() - r).abs() < 1e-12);
        let err = brent_root(|x| Ok(x * x + 1.0), -1.0, 1.0, 1e-12, 1e-12).unwrap_err();
        assert!(matches!(err, MomentError::NoRootInBracket { .. }));
    }

    #[test]
    fn tune_rejects_bracket_without_sign_change() {
        let err = tune_kernel(&KernelSpec::rational(10.0), FreeParameter::Q, (40.0, 60.0)).unwrap_err();
        assert!(matches!(err, MomentError::NoRootInBracket { .. }), "{err:?}");
    }

    #[test]
    fn report_for_mass_has_no_dynamic_part() {
        let r = compute_report(&k(KernelSpec::mass())).unwrap();
        assert_eq!(r.j1, None);
        assert!((r.m1 - (-PI * PI / 6.0)).abs() < 1e-10);
    }
}
