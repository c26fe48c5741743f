//! Adaptive Gauss-Kronrod quadrature (7-15 pair) in one and two dimensions,
//! plus partition-function helpers for mixture targets.
//!
//! Two-dimensional integrals are tensorized: the outer integral adapts over
//! panels whose integrand is itself an adaptive inner integral at a tighter
//! tolerance. This is only used as a verification oracle, never inside the
//! samplers.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::target::GaussianMixtureTarget;

/// Kronrod abscissae for the 7-15 pair (positive half, plus the center).
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];

/// 15-point Kronrod weights matching `XGK`.
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];

/// 7-point Gauss weights on XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// Number of tail standard deviations kept inside the integration box.
/// Gaussian mass beyond 8σ is ~1e-15 of the total, comfortably below every
/// tolerance this oracle is asked for.
pub const TAIL_SIGMAS: f64 = 8.0;

const MAX_PANELS: usize = 200_000;

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.partial_cmp(&other.error).unwrap_or(Ordering::Equal)
    }
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Panel {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let dx = h * XGK[i];
        let fsum = f(c - dx) + f(c + dx);
        kron += WGK[i] * fsum;
        if i % 2 == 1 {
            gauss += WG[i / 2] * fsum;
        }
    }
    kron *= h;
    gauss *= h;
    Panel {
        a,
        b,
        value: kron,
        error: (kron - gauss).abs(),
    }
}

/// Globally adaptive 1-D integral of `f` over [a, b] to relative tolerance
/// `rel_tol`. `initial_panels` seeds the subdivision so narrow features are
/// not missed by a single coarse panel.
pub fn integrate_1d<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    initial_panels: usize,
) -> Result<f64> {
    if !(b > a) {
        return Err(Error::Argument(format!("bad interval [{a}, {b}]")));
    }
    let n0 = initial_panels.clamp(1, 1024);
    let mut heap = BinaryHeap::new();
    let mut total = 0.0;
    let mut err_total = 0.0;
    for k in 0..n0 {
        let pa = a + (b - a) * k as f64 / n0 as f64;
        let pb = a + (b - a) * (k + 1) as f64 / n0 as f64;
        let p = gk15(&f, pa, pb);
        total += p.value;
        err_total += p.error;
        heap.push(p);
    }
    let mut panels = n0;
    while err_total > rel_tol * total.abs().max(f64::MIN_POSITIVE) && panels < MAX_PANELS {
        let worst = heap.pop().expect("heap cannot be empty while error remains");
        let mid = 0.5 * (worst.a + worst.b);
        let left = gk15(&f, worst.a, mid);
        let right = gk15(&f, mid, worst.b);
        total += left.value + right.value - worst.value;
        err_total += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        panels += 1;
    }
    if !total.is_finite() {
        return Err(Error::Numeric("quadrature produced a non-finite value".into()));
    }
    if err_total > rel_tol * total.abs().max(f64::MIN_POSITIVE) {
        return Err(Error::Numeric(format!(
            "quadrature did not converge: {panels} panels, residual error {err_total:e}"
        )));
    }
    Ok(total)
}

/// Tensorized 2-D integral over [ax, bx] x [ay, by]. The inner integral runs
/// at a tolerance one decade tighter than the outer one.
pub fn integrate_2d<F: Fn(f64, f64) -> f64>(
    f: F,
    ax: f64,
    bx: f64,
    ay: f64,
    by: f64,
    rel_tol: f64,
    initial_panels: usize,
) -> Result<f64> {
    let inner_tol = rel_tol / 10.0;
    integrate_1d(
        |x| {
            integrate_1d(|y| f(x, y), ay, by, inner_tol, initial_panels)
                .expect("inner quadrature failed")
        },
        ax,
        bx,
        rel_tol,
        initial_panels,
    )
}

fn integration_half_width(target: &GaussianMixtureTarget, beta: f64) -> f64 {
    target.spread() + TAIL_SIGMAS * (target.gamma_max() / beta).sqrt()
}

fn initial_panels_for(target: &GaussianMixtureTarget, beta: f64) -> usize {
    // A few panels per component standard deviation.
    let half = integration_half_width(target, beta);
    let sigma = (target.gamma_min() / beta).sqrt();
    ((2.0 * half / sigma).ceil() as usize).clamp(8, 512)
}

fn integrate_target<F>(target: &GaussianMixtureTarget, beta: f64, f: F) -> Result<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let half = integration_half_width(target, beta);
    let panels = initial_panels_for(target, beta);
    match target.dim() {
        1 => integrate_1d(|x| f(&[x]), -half, half, 1e-10, panels),
        2 => integrate_2d(|x, y| f(&[x, y]), -half, half, -half, half, 1e-10, panels),
        d => Err(Error::Argument(format!(
            "quadrature supports dimensions 1 and 2, got {d}"
        ))),
    }
}

/// log Z_β with Z_β = ∫ exp(-β f(x)) dx.
///
/// f ≥ 0 for mixture potentials, so the raw integrand lives in (0, 1] and can
/// be integrated without shifting.
pub fn log_partition_function(target: &GaussianMixtureTarget, beta: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(Error::Argument(format!("beta must be positive, got {beta}")));
    }
    let z = integrate_target(target, beta, |x| {
        (-beta * target.potential_unchecked(x)).exp()
    })?;
    if !(z > 0.0) {
        return Err(Error::Numeric("partition function integrated to zero".into()));
    }
    Ok(z.ln())
}

/// log of the normalizer of the unnormalized tempered-component mixture
/// Σ_j w_j exp(-(β/2) q_j).
pub fn log_tilde_partition_function(target: &GaussianMixtureTarget, beta: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(Error::Argument(format!("beta must be positive, got {beta}")));
    }
    let z = integrate_target(target, beta, |x| {
        target.tilde_log_density_unchecked(beta, x).exp()
    })?;
    if !(z > 0.0) {
        return Err(Error::Numeric("tilde normalizer integrated to zero".into()));
    }
    Ok(z.ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn polynomial_is_exact() {
        let v = integrate_1d(|x| x * x * x - 2.0 * x + 1.0, -1.0, 3.0, 1e-12, 1).unwrap();
        // ∫ (x³ - 2x + 1) over [-1, 3] = 80/4 - 8 + 4 = 16
        assert!((v - 16.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_mass_is_one() {
        let sigma = 1.7_f64;
        let v = integrate_1d(
            |x| (-0.5 * x * x / (sigma * sigma)).exp() / (sigma * (2.0 * PI).sqrt()),
            -14.0,
            14.0,
            1e-11,
            16,
        )
        .unwrap();
        assert!((v - 1.0).abs() < 1e-10);
    }

    #[test]
    fn narrow_peak_needs_adaptivity() {
        // Width 1e-3 peak inside a unit interval seeded with a single panel.
        let s = 1e-3_f64;
        let v = integrate_1d(
            |x| (-0.5 * (x / s).powi(2)).exp(),
            -1.0,
            1.0,
            1e-9,
            1,
        )
        .unwrap();
        let exact = s * (2.0 * PI).sqrt();
        assert!((v - exact).abs() / exact < 1e-8);
    }

    #[test]
    fn two_dimensional_gaussian() {
        let v = integrate_2d(
            |x, y| (-0.5 * (x * x + y * y)).exp(),
            -10.0,
            10.0,
            -10.0,
            10.0,
            1e-9,
            8,
        )
        .unwrap();
        assert!((v - 2.0 * PI).abs() / (2.0 * PI) < 1e-8);
    }

    #[test]
    fn partition_function_single_gaussian_closed_form() {
        // Z_β = (2π/β)^{d/2} for a standard single-component target.
        let t = GaussianMixtureTarget::with_identity_covariance(vec![vec![0.0]], vec![1.0]).unwrap();
        for beta in [1.0, 0.5, 0.1] {
            let lz = log_partition_function(&t, beta).unwrap();
            let exact = 0.5 * (2.0 * PI / beta).ln();
            assert!((lz - exact).abs() < 1e-9, "beta={beta}: {lz} vs {exact}");
        }
        let t2 = GaussianMixtureTarget::with_identity_covariance(vec![vec![0.0, 0.0]], vec![1.0])
            .unwrap();
        let lz = log_partition_function(&t2, 0.25).unwrap();
        let exact = (2.0 * PI / 0.25).ln();
        assert!((lz - exact).abs() < 1e-8);
    }

    #[test]
    fn tilde_partition_is_weighted_gaussian_normalizers() {
        // Components are honest Gaussians, so the tilde normalizer has the
        // closed form Σ_j w_j (2π/β)^{d/2}.
        let t = GaussianMixtureTarget::with_identity_covariance(
            vec![vec![-2.0], vec![3.0]],
            vec![0.25, 0.75],
        )
        .unwrap();
        let beta = 0.4;
        let lz = log_tilde_partition_function(&t, beta).unwrap();
        let exact = (2.0 * PI / beta).sqrt().ln();
        assert!((lz - exact).abs() < 1e-9);
    }

    #[test]
    fn rejects_unsupported_dimension() {
        let t = GaussianMixtureTarget::with_identity_covariance(
            vec![vec![0.0, 0.0, 0.0]],
            vec![1.0],
        )
        .unwrap();
        assert!(log_partition_function(&t, 1.0).is_err());
    }
}
