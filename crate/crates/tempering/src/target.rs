//! Gaussian-mixture target: the potential f, tempered densities, and the
//! mixture-of-tempered-components ("tilde") densities.
//!
//! All evaluation happens in log domain. The potential is
//!
//!   f(x) = -log Σ_j w_j exp(-(x-μ_j)ᵀ Σ⁻¹ (x-μ_j) / 2),
//!
//! computed by log-sum-exp so exponents as small as -1e6 stay finite. The
//! shared covariance is factored once at construction and quadratic forms go
//! through the triangular factor; Σ is never inverted per evaluation.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::math::logsumexp;

/// Mixture of Gaussian components with a shared covariance matrix.
///
/// Immutable after construction; safe to share across worker threads.
#[derive(Debug, Clone)]
pub struct GaussianMixtureTarget {
    dim: usize,
    means: Vec<Vec<f64>>,
    weights: Vec<f64>,
    log_weights: Vec<f64>,
    covariance: DMatrix<f64>,
    /// Rows of L⁻¹ where Σ = LLᵀ, stored row-major; lets quadratic forms run
    /// without scratch allocation.
    inv_factor_rows: Vec<Vec<f64>>,
    /// Per-axis inverse variances when Σ is diagonal.
    diag_inv: Option<Vec<f64>>,
    gamma_min: f64,
    gamma_max: f64,
    spread: f64,
}

impl GaussianMixtureTarget {
    /// Build a mixture target; validates weights, dimensions and positive
    /// definiteness of the covariance.
    pub fn new(means: Vec<Vec<f64>>, covariance: DMatrix<f64>, weights: Vec<f64>) -> Result<Self> {
        let n = means.len();
        if n == 0 {
            return Err(Error::Argument("mixture needs at least one component".into()));
        }
        let dim = means[0].len();
        if dim == 0 {
            return Err(Error::Argument("dimension must be at least 1".into()));
        }
        if means.iter().any(|m| m.len() != dim) {
            return Err(Error::Argument("all means must share one dimension".into()));
        }
        if weights.len() != n {
            return Err(Error::Argument(format!(
                "got {} weights for {} components",
                weights.len(),
                n
            )));
        }
        if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::Argument("every mixture weight must be positive".into()));
        }
        let wsum: f64 = weights.iter().sum();
        if (wsum - 1.0).abs() > 1e-12 {
            return Err(Error::Argument(format!(
                "mixture weights must sum to 1 (got {wsum:.16})"
            )));
        }
        if covariance.nrows() != dim || covariance.ncols() != dim {
            return Err(Error::Argument("covariance shape does not match dimension".into()));
        }
        let asym = (&covariance - covariance.transpose()).abs().max();
        if asym > 1e-12 {
            return Err(Error::Argument("covariance must be symmetric".into()));
        }

        let chol = covariance
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Argument("covariance is not positive definite".into()))?;
        let lower = chol.l();
        // Invert the triangular factor by forward substitution on unit vectors.
        let mut inv_factor_rows = vec![vec![0.0; dim]; dim];
        for col in 0..dim {
            let mut y = vec![0.0; dim];
            for i in col..dim {
                let mut s = if i == col { 1.0 } else { 0.0 };
                for j in col..i {
                    s -= lower[(i, j)] * y[j];
                }
                y[i] = s / lower[(i, i)];
            }
            for i in 0..dim {
                inv_factor_rows[i][col] = y[i];
            }
        }

        let eigen = SymmetricEigen::new(covariance.clone());
        let gamma_min = eigen.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        let gamma_max = eigen.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !(gamma_min > 0.0) {
            return Err(Error::Argument(format!(
                "smallest covariance eigenvalue must be positive (got {gamma_min:e})"
            )));
        }

        let diag_inv = {
            let mut off = 0.0_f64;
            for i in 0..dim {
                for j in 0..dim {
                    if i != j {
                        off = off.max(covariance[(i, j)].abs());
                    }
                }
            }
            if off == 0.0 {
                Some((0..dim).map(|i| 1.0 / covariance[(i, i)]).collect())
            } else {
                None
            }
        };

        let max_mean_norm = means
            .iter()
            .map(|m| m.iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0_f64, f64::max);
        let spread = max_mean_norm.max(gamma_min.sqrt());

        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(Self {
            dim,
            means,
            weights,
            log_weights,
            covariance,
            inv_factor_rows,
            diag_inv,
            gamma_min,
            gamma_max,
            spread,
        })
    }

    /// Shared-covariance mixture with Σ = I.
    pub fn with_identity_covariance(means: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let dim = means.first().map(|m| m.len()).unwrap_or(0);
        Self::new(means, DMatrix::identity(dim, dim), weights)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_components(&self) -> usize {
        self.means.len()
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn w_min(&self) -> f64 {
        self.weights.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn gamma_min(&self) -> f64 {
        self.gamma_min
    }

    pub fn gamma_max(&self) -> f64 {
        self.gamma_max
    }

    /// Condition number κ = γ_max / γ_min of the covariance.
    pub fn kappa(&self) -> f64 {
        self.gamma_max / self.gamma_min
    }

    /// Spread parameter max{max_k ||μ_k||, sqrt(γ_min)}; bounds the pairwise
    /// mode separation from above by 2·spread.
    pub fn spread(&self) -> f64 {
        self.spread
    }

    /// (x - μ_j)ᵀ Σ⁻¹ (x - μ_j) through the triangular factor.
    #[inline]
    fn quad_form(&self, x: &[f64], j: usize) -> f64 {
        let mean = &self.means[j];
        if let Some(diag) = &self.diag_inv {
            let mut q = 0.0;
            for k in 0..self.dim {
                let d = x[k] - mean[k];
                q += d * d * diag[k];
            }
            return q;
        }
        // q = ||L⁻¹ (x-μ)||²; row i of L⁻¹ only touches coordinates 0..=i.
        let mut q = 0.0;
        for i in 0..self.dim {
            let row = &self.inv_factor_rows[i];
            let mut s = 0.0;
            for k in 0..=i {
                s += row[k] * (x[k] - mean[k]);
            }
            q += s * s;
        }
        q
    }

    /// (x - μ_j)ᵀ Σ⁻¹ (x - μ_j) for one component.
    pub fn component_quad_form(&self, x: &[f64], comp: usize) -> Result<f64> {
        self.check_dim(x)?;
        if comp >= self.means.len() {
            return Err(Error::Argument(format!(
                "component index {comp} out of range for {} components",
                self.means.len()
            )));
        }
        Ok(self.quad_form(x, comp))
    }

    #[inline]
    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Argument(format!(
                "point has dimension {}, target has {}",
                x.len(),
                self.dim
            )));
        }
        Ok(())
    }

    /// The potential f(x) = -log Σ_j w_j exp(-q_j(x)/2).
    #[inline]
    pub fn potential(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.potential_unchecked(x))
    }

    /// Potential without the dimension check; `x` must have length `dim()`.
    #[inline]
    pub fn potential_unchecked(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        if self.means.len() == 2 {
            // Two-component fast path; the scaling experiments live here.
            let a = self.log_weights[0] - 0.5 * self.quad_form(x, 0);
            let b = self.log_weights[1] - 0.5 * self.quad_form(x, 1);
            let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
            return -(hi + (lo - hi).exp().ln_1p());
        }
        let mut terms = Vec::with_capacity(self.means.len());
        for j in 0..self.means.len() {
            terms.push(self.log_weights[j] - 0.5 * self.quad_form(x, j));
        }
        -logsumexp(&terms)
    }

    /// Unnormalized log of the tempered-component mixture
    /// log Σ_j w_j exp(-(β/2) q_j(x)); each component is a Gaussian with
    /// covariance inflated to Σ/β.
    pub fn tilde_log_density_unnorm(&self, beta: f64, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        if !(beta > 0.0) || beta > 1.0 {
            return Err(Error::Argument(format!("beta must lie in (0, 1], got {beta}")));
        }
        Ok(self.tilde_log_density_unchecked(beta, x))
    }

    #[inline]
    pub(crate) fn tilde_log_density_unchecked(&self, beta: f64, x: &[f64]) -> f64 {
        let mut terms = Vec::with_capacity(self.means.len());
        for j in 0..self.means.len() {
            terms.push(self.log_weights[j] - 0.5 * beta * self.quad_form(x, j));
        }
        logsumexp(&terms)
    }
}

/// One inverse temperature applied to a mixture target: density ∝ exp(-β f).
#[derive(Debug, Clone, Copy)]
pub struct TemperedDensity<'a> {
    target: &'a GaussianMixtureTarget,
    beta: f64,
}

impl<'a> TemperedDensity<'a> {
    pub fn new(target: &'a GaussianMixtureTarget, beta: f64) -> Result<Self> {
        if !(beta > 0.0) || beta > 1.0 {
            return Err(Error::Argument(format!("beta must lie in (0, 1], got {beta}")));
        }
        Ok(Self { target, beta })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn target(&self) -> &'a GaussianMixtureTarget {
        self.target
    }

    /// Unnormalized log density -β f(x).
    #[inline]
    pub fn log_density_unnorm(&self, x: &[f64]) -> Result<f64> {
        Ok(-self.beta * self.target.potential(x)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad;
    use proptest::{prop_assert, prop_assume, proptest};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn single_standard(dim: usize) -> GaussianMixtureTarget {
        GaussianMixtureTarget::with_identity_covariance(vec![vec![0.0; dim]], vec![1.0]).unwrap()
    }

    /// The two-mode plane target used throughout the scaling study: means at
    /// ±(sep/(2√2))·(1,1), identity covariance, equal weights.
    fn two_mode_plane(sep: f64) -> GaussianMixtureTarget {
        let c = sep / (2.0 * std::f64::consts::SQRT_2);
        GaussianMixtureTarget::with_identity_covariance(
            vec![vec![-c, -c], vec![c, c]],
            vec![0.5, 0.5],
        )
        .unwrap()
    }

    #[test]
    fn potential_single_component_is_half_square_norm() {
        let t = single_standard(2);
        assert!((t.potential(&[3.0, 4.0]).unwrap() - 12.5).abs() < 1e-12);
    }

    #[test]
    fn potential_at_symmetry_point_of_two_mode_target() {
        // Both exponents coincide at the origin, so f(0) = ||μ||²/2 = sep²/8.
        let t = two_mode_plane(30.0);
        assert!((t.potential(&[0.0, 0.0]).unwrap() - 112.5).abs() < 1e-10);
    }

    #[test]
    fn coincident_means_degenerate_to_single_component() {
        let two = GaussianMixtureTarget::with_identity_covariance(
            vec![vec![1.0, -2.0], vec![1.0, -2.0]],
            vec![0.3, 0.7],
        )
        .unwrap();
        let one = GaussianMixtureTarget::with_identity_covariance(
            vec![vec![1.0, -2.0]],
            vec![1.0],
        )
        .unwrap();
        for x in [[0.0, 0.0], [2.5, 1.0], [-4.0, 3.0]] {
            let a = two.potential(&x).unwrap();
            let b = one.potential(&x).unwrap();
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn potential_is_stable_far_from_the_modes() {
        let t = single_standard(1);
        let x = [1000.0];
        let f = t.potential(&x).unwrap();
        let exact = 0.5 * 1000.0_f64 * 1000.0;
        assert!(f.is_finite());
        assert!((f - exact).abs() / exact <= 1e-12);

        // Two far-apart components: exact value by shifting out the dominant
        // exponent by hand.
        let t2 = GaussianMixtureTarget::with_identity_covariance(
            vec![vec![0.0], vec![5.0]],
            vec![0.5, 0.5],
        )
        .unwrap();
        let q0: f64 = 1000.0 * 1000.0;
        let q1: f64 = 995.0 * 995.0;
        let shifted = -(0.5_f64.ln() - 0.5 * q1 + (-0.5 * (q0 - q1)).exp().ln_1p());
        let f2 = t2.potential(&[1000.0]).unwrap();
        assert!((f2 - shifted).abs() / shifted <= 1e-12);
    }

    #[test]
    fn symmetric_target_has_exactly_even_potential() {
        let t = two_mode_plane(12.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let x = [rng.gen_range(-8.0..8.0), rng.gen_range(-8.0..8.0)];
            let neg = [-x[0], -x[1]];
            assert_eq!(t.potential(&x).unwrap(), t.potential(&neg).unwrap());
        }
    }

    #[test]
    fn tempered_density_examples() {
        let t = single_standard(2);
        let full = TemperedDensity::new(&t, 1.0).unwrap();
        let x = [1.3, -0.4];
        assert!((full.log_density_unnorm(&x).unwrap() + t.potential(&x).unwrap()).abs() < 1e-15);

        let t1 = single_standard(2);
        let half = TemperedDensity::new(&t1, 0.5).unwrap();
        assert!((half.log_density_unnorm(&[2.0, 0.0]).unwrap() - (-1.0)).abs() < 1e-14);
    }

    #[test]
    fn tilde_density_reduces_to_target_at_beta_one() {
        let t = two_mode_plane(6.0);
        for x in [[0.0, 0.0], [1.0, 2.0], [-3.0, 0.5]] {
            let tilde = t.tilde_log_density_unnorm(1.0, &x).unwrap();
            assert!((tilde + t.potential(&x).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn tilde_single_component_is_inflated_gaussian() {
        let t = single_standard(2);
        let beta = 0.25;
        let x = [2.0, -1.0];
        let expect = -0.5 * beta * (4.0 + 1.0);
        assert!((t.tilde_log_density_unnorm(beta, &x).unwrap() - expect).abs() < 1e-14);
    }

    #[test]
    fn density_sandwich_between_tempered_and_tilde() {
        // w_min · p̃_β ≤ p_β ≤ p̃_β / w_min pointwise, with both densities
        // normalized by quadrature.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let targets = vec![
            GaussianMixtureTarget::with_identity_covariance(
                vec![vec![-1.5], vec![2.0]],
                vec![0.3, 0.7],
            )
            .unwrap(),
            two_mode_plane(5.0),
        ];
        for target in &targets {
            let w_min_log = target.w_min().ln();
            for &beta in &[0.2, 0.5, 0.9, 1.0] {
                let log_z = quad::log_partition_function(target, beta).unwrap();
                let log_z_tilde = quad::log_tilde_partition_function(target, beta).unwrap();
                for _ in 0..250 {
                    let x: Vec<f64> = (0..target.dim())
                        .map(|_| rng.gen_range(-6.0..6.0))
                        .collect();
                    let log_p = -beta * target.potential(&x).unwrap() - log_z;
                    let log_pt = target.tilde_log_density_unnorm(beta, &x).unwrap() - log_z_tilde;
                    let slack_lo = log_p - (w_min_log + log_pt);
                    let slack_hi = (log_pt - w_min_log) - log_p;
                    assert!(slack_lo >= -1e-9, "lower sandwich violated: {slack_lo:e}");
                    assert!(slack_hi >= -1e-9, "upper sandwich violated: {slack_hi:e}");
                }
            }
        }
    }

    #[test]
    fn constructor_rejects_bad_input() {
        assert!(GaussianMixtureTarget::with_identity_covariance(vec![], vec![]).is_err());
        assert!(GaussianMixtureTarget::with_identity_covariance(
            vec![vec![0.0]],
            vec![0.5]
        )
        .is_err());
        assert!(GaussianMixtureTarget::with_identity_covariance(
            vec![vec![0.0], vec![1.0]],
            vec![1.2, -0.2]
        )
        .is_err());
        let bad_cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(GaussianMixtureTarget::new(vec![vec![0.0, 0.0]], bad_cov, vec![1.0]).is_err());
        let t = single_standard(2);
        assert!(t.potential(&[1.0]).is_err());
        assert!(TemperedDensity::new(&t, 0.0).is_err());
        assert!(TemperedDensity::new(&t, 1.5).is_err());
    }

    #[test]
    fn spread_and_eigen_summaries() {
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let t = GaussianMixtureTarget::new(vec![vec![3.0, 4.0]], cov, vec![1.0]).unwrap();
        assert!((t.spread() - 5.0).abs() < 1e-12);
        assert!(t.gamma_min() > 0.9 && t.gamma_min() < 1.0);
        assert!(t.gamma_max() > 2.0 && t.gamma_max() < 2.1);
        assert!((t.kappa() - t.gamma_max() / t.gamma_min()).abs() < 1e-12);

        // All means inside the unit ball: spread falls back to sqrt(γ_min).
        let small = GaussianMixtureTarget::with_identity_covariance(
            vec![vec![0.1, 0.0]],
            vec![1.0],
        )
        .unwrap();
        assert!((small.spread() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn general_covariance_quad_form_matches_direct_inverse() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.5, 0.4, 0.4, 0.8]);
        let t = GaussianMixtureTarget::new(vec![vec![0.5, -0.25]], cov.clone(), vec![1.0]).unwrap();
        let inv = cov.try_inverse().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let x = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            let v = nalgebra::DVector::from_row_slice(&[x[0] - 0.5, x[1] + 0.25]);
            let direct = (v.transpose() * &inv * &v)[(0, 0)];
            let f = t.potential(&x).unwrap();
            assert!((f - 0.5 * direct).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn smaller_beta_raises_tempered_log_density_when_f_positive(
            x0 in -30.0..30.0f64,
            beta_lo in 0.05..0.5f64,
            beta_hi in 0.55..1.0f64,
        ) {
            let t = single_standard(1);
            // f > 0 away from the mode.
            prop_assume!(x0.abs() > 0.5);
            let lo = TemperedDensity::new(&t, beta_lo).unwrap();
            let hi = TemperedDensity::new(&t, beta_hi).unwrap();
            let x = [x0];
            prop_assert!(lo.log_density_unnorm(&x).unwrap() > hi.log_density_unnorm(&x).unwrap());
        }
    }
}
