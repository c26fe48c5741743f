//! Dense linear-algebra routines for finite chains: stationary vectors,
//! Dirichlet/variance quadratic forms, and restricted spectral gaps via a
//! deflated symmetric generalized eigenproblem.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Check that `p` is row-stochastic within `tol`.
pub fn check_row_stochastic(p: &DMatrix<f64>, tol: f64) -> Result<()> {
    if p.nrows() != p.ncols() {
        return Err(Error::Argument("transition matrix must be square".into()));
    }
    for i in 0..p.nrows() {
        let mut sum = 0.0;
        for j in 0..p.ncols() {
            let v = p[(i, j)];
            if v < -1e-15 {
                return Err(Error::Argument(format!(
                    "negative transition probability at ({i}, {j}): {v:e}"
                )));
            }
            sum += v;
        }
        if (sum - 1.0).abs() > tol {
            return Err(Error::Argument(format!(
                "row {i} sums to {sum:.15}, not 1"
            )));
        }
    }
    Ok(())
}

/// Stationary vector of an irreducible row-stochastic matrix: solve
/// (Pᵀ - I)π = 0 with a normalization row, then polish by power iteration
/// until the residual ||πᵀP - πᵀ||_∞ drops below 1e-12.
pub fn stationary_vector(p: &DMatrix<f64>) -> Result<DVector<f64>> {
    check_row_stochastic(p, 1e-9)?;
    let n = p.nrows();
    let mut a = p.transpose() - DMatrix::<f64>::identity(n, n);
    for j in 0..n {
        a[(0, j)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[0] = 1.0;
    let lu = a.lu();
    let mut pi = lu
        .solve(&b)
        .ok_or_else(|| Error::Numeric("stationary linear system is singular".into()))?;

    for v in pi.iter_mut() {
        if *v < 0.0 {
            if *v < -1e-9 {
                return Err(Error::Numeric(format!(
                    "stationary solve produced a negative mass {v:e}"
                )));
            }
            *v = 0.0;
        }
    }
    let total: f64 = pi.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Numeric("stationary solve produced zero mass".into()));
    }
    pi /= total;

    let residual = |v: &DVector<f64>| -> f64 {
        let next = p.tr_mul(v);
        (&next - v).abs().max()
    };
    let mut iter = 0usize;
    while residual(&pi) > 1e-12 {
        pi = p.tr_mul(&pi);
        let total: f64 = pi.iter().sum();
        pi /= total;
        iter += 1;
        if iter > 200_000 {
            return Err(Error::Numeric(format!(
                "stationary refinement did not reach 1e-12 residual (at {:e})",
                residual(&pi)
            )));
        }
    }
    Ok(pi)
}

/// Restricted Dirichlet form (1/2) Σ_{mask×mask} (g(y)-g(x))² π(x) P(x,y).
pub fn dirichlet_form(
    p: &DMatrix<f64>,
    pi: &DVector<f64>,
    mask: &[bool],
    g: &[f64],
) -> f64 {
    let n = p.nrows();
    let mut acc = 0.0;
    for x in 0..n {
        if !mask[x] {
            continue;
        }
        for y in 0..n {
            if !mask[y] || x == y {
                continue;
            }
            let d = g[y] - g[x];
            acc += d * d * pi[x] * p[(x, y)];
        }
    }
    0.5 * acc
}

/// Restricted variance (1/2) Σ_{mask×mask} (g(y)-g(x))² π(x) π(y).
pub fn restricted_variance(pi: &DVector<f64>, mask: &[bool], g: &[f64]) -> f64 {
    // Expand the double sum: s·Σ g²π - (Σ gπ)² over masked coordinates.
    let mut s = 0.0;
    let mut m1 = 0.0;
    let mut m2 = 0.0;
    for (i, &keep) in mask.iter().enumerate() {
        if keep {
            s += pi[i];
            m1 += g[i] * pi[i];
            m2 += g[i] * g[i] * pi[i];
        }
    }
    s * m2 - m1 * m1
}

/// Orthonormal basis of the orthogonal complement of the unit vector `u`
/// (entrywise non-negative), via the Householder reflector mapping u to -e_1.
fn complement_basis(u: &DVector<f64>) -> DMatrix<f64> {
    let k = u.len();
    let mut v = u.clone();
    v[0] += 1.0;
    let vnorm2 = v.dot(&v);
    let mut h = DMatrix::<f64>::identity(k, k);
    for i in 0..k {
        for j in 0..k {
            h[(i, j)] -= 2.0 * v[i] * v[j] / vnorm2;
        }
    }
    h.columns(1, k - 1).into_owned()
}

/// Restricted spectral gap of `p` over the masked subset: the minimum of the
/// restricted Dirichlet form over the restricted variance, taken over
/// functions non-constant on the mask. Zero-mass states are dropped (the
/// quotient only sees functions up to stationary-null sets).
///
/// In the basis rescaled by sqrt(π) the variance form becomes s·I on the
/// complement of the sqrt(π) direction, so the gap is the smallest eigenvalue
/// of the deflated, rescaled Dirichlet form divided by the restricted mass s.
/// Entries are assembled from probability ratios rather than products, which
/// keeps the tails of very cold levels from underflowing.
pub fn restricted_spectral_gap(
    p: &DMatrix<f64>,
    pi: &DVector<f64>,
    mask: &[bool],
) -> Result<f64> {
    let n = p.nrows();
    if mask.len() != n {
        return Err(Error::Argument("mask length must match the state count".into()));
    }
    let idx: Vec<usize> = (0..n).filter(|&i| mask[i] && pi[i] > 0.0).collect();
    let k = idx.len();
    if k < 2 {
        return Err(Error::DegenerateRestriction(format!(
            "mask keeps {k} states with positive mass; need at least 2"
        )));
    }
    let mass: f64 = idx.iter().map(|&i| pi[i]).sum();
    let log_pi: Vec<f64> = idx.iter().map(|&i| pi[i].ln()).collect();

    // C = T L_A T with T = diag(1/sqrt(π)) and L_A the graph Laplacian of the
    // symmetrized flow S(x,y) = (π(x)P(x,y) + π(y)P(y,x))/2:
    //   C_ab = -(P_ab sqrt(π_a/π_b) + P_ba sqrt(π_b/π_a)) / 2   (a ≠ b)
    //   C_aa = Σ_{b≠a} (P_ab + P_ba π_b/π_a) / 2.
    let mut c = DMatrix::<f64>::zeros(k, k);
    for a in 0..k {
        let ia = idx[a];
        let mut diag = 0.0;
        for b in 0..k {
            if a == b {
                continue;
            }
            let ib = idx[b];
            let p_ab = p[(ia, ib)];
            let p_ba = p[(ib, ia)];
            if p_ab == 0.0 && p_ba == 0.0 {
                continue;
            }
            let half_log_ratio = 0.5 * (log_pi[a] - log_pi[b]);
            c[(a, b)] = -0.5 * (p_ab * half_log_ratio.exp() + p_ba * (-half_log_ratio).exp());
            diag += 0.5 * (p_ab + p_ba * (log_pi[b] - log_pi[a]).exp());
        }
        c[(a, a)] = diag;
    }
    let ct = c.transpose();
    c = (&c + ct) * 0.5;

    // Deflate the sqrt(π)/sqrt(s) direction; the variance form is s·I on its
    // complement.
    let u = DVector::from_iterator(k, log_pi.iter().map(|lp| (0.5 * (lp - mass.ln())).exp()));
    let q = complement_basis(&u);
    let reduced = q.transpose() * c * &q;
    let eigen = SymmetricEigen::new(reduced);
    let min = eigen
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    Ok((min / mass).max(0.0))
}

/// Full-space spectral gap of a reversible chain through an independent
/// route: 1 - λ₂ of the symmetrization D^{1/2} P D^{-1/2}.
pub fn spectral_gap_symmetrized(p: &DMatrix<f64>, pi: &DVector<f64>) -> Result<f64> {
    let n = p.nrows();
    if pi.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Argument(
            "symmetrized route needs strictly positive stationary mass".into(),
        ));
    }
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = (pi[i] / pi[j]).sqrt() * p[(i, j)];
        }
    }
    let mt = m.transpose();
    m = (&m + mt) * 0.5;
    let eigen = SymmetricEigen::new(m);
    let mut vals: Vec<f64> = eigen.eigenvalues.iter().cloned().collect();
    vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(1.0 - vals[1])
}

/// Distribution after `steps` applications of `p` to the row vector `start`,
/// using repeated squaring once direct iteration would be slower.
pub fn distribution_after(p: &DMatrix<f64>, start: &DVector<f64>, steps: u64) -> DVector<f64> {
    let n = p.nrows() as u64;
    // Vector iteration costs steps·n²; matrix powering costs ~2·log2(steps)·n³.
    if steps <= 64.max(2 * n * steps.max(1).ilog2().max(1) as u64 / n.max(1)) && steps <= 4096 {
        let mut v = start.clone();
        for _ in 0..steps {
            v = p.tr_mul(&v);
        }
        return v;
    }
    let mut result = start.clone();
    let mut base = p.clone();
    let mut k = steps;
    while k > 0 {
        if k & 1 == 1 {
            result = base.tr_mul(&result);
        }
        base = &base * &base;
        k >>= 1;
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn two_state(p01: f64, p10: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[1.0 - p01, p01, p10, 1.0 - p10])
    }

    /// Reversible chain built from a target stationary vector by a
    /// Metropolis rule on a random symmetric proposal.
    fn random_reversible(n: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let pi = DVector::from_iterator(n, raw.iter().map(|v| v / total));
        let mut q = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let v = rng.gen_range(0.0..1.0) / n as f64;
                q[(i, j)] = v;
                q[(j, i)] = v;
            }
        }
        let mut p = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            let mut out = 0.0;
            for j in 0..n {
                if i != j {
                    let a = (pi[j] / pi[i]).min(1.0);
                    p[(i, j)] = q[(i, j)] * a;
                    out += p[(i, j)];
                }
            }
            p[(i, i)] = 1.0 - out;
        }
        (p, pi)
    }

    #[test]
    fn stationary_vector_symmetric_two_state() {
        let p = two_state(0.25, 0.25);
        let pi = stationary_vector(&p).unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-14);
        assert!((pi[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn stationary_vector_doubly_stochastic_is_uniform() {
        let p = DMatrix::from_row_slice(
            3,
            3,
            &[0.2, 0.5, 0.3, 0.5, 0.3, 0.2, 0.3, 0.2, 0.5],
        );
        let pi = stationary_vector(&p).unwrap();
        for i in 0..3 {
            assert!((pi[i] - 1.0 / 3.0).abs() < 1e-13);
        }
    }

    #[test]
    fn stationary_vector_recovers_detailed_balance_target() {
        let (p, pi_true) = random_reversible(10, 42);
        let pi = stationary_vector(&p).unwrap();
        for i in 0..10 {
            assert!((pi[i] - pi_true[i]).abs() < 1e-10, "state {i}");
        }
    }

    #[test]
    fn stationary_vector_rejects_non_stochastic_input() {
        let p = DMatrix::from_row_slice(2, 2, &[0.8, 0.1, 0.5, 0.5]);
        assert!(stationary_vector(&p).is_err());
    }

    #[test]
    fn restricted_gap_two_state_full_mask() {
        // Gap of [[1-p, p], [q, 1-q]] is p + q.
        let p = two_state(0.25, 0.25);
        let pi = stationary_vector(&p).unwrap();
        let gap = restricted_spectral_gap(&p, &pi, &[true, true]).unwrap();
        assert!((gap - 0.5).abs() < 1e-12);

        let p = two_state(0.1, 0.3);
        let pi = stationary_vector(&p).unwrap();
        let gap = restricted_spectral_gap(&p, &pi, &[true, true]).unwrap();
        assert!((gap - 0.4).abs() < 1e-12);
    }

    #[test]
    fn identity_kernel_has_zero_gap() {
        let p = DMatrix::<f64>::identity(4, 4);
        let pi = DVector::from_element(4, 0.25);
        let gap = restricted_spectral_gap(&p, &pi, &[true; 4]).unwrap();
        assert!(gap.abs() < 1e-14);
    }

    #[test]
    fn restricted_gap_on_sub_mask_matches_direct_scan() {
        // Three-state path chain restricted to two adjacent states: the
        // deflated problem is one-dimensional, so a scan over g = (0, t)
        // (t ≠ 0) must agree with the eigensolve.
        let p = DMatrix::from_row_slice(
            3,
            3,
            &[0.7, 0.3, 0.0, 0.2, 0.5, 0.3, 0.0, 0.4, 0.6],
        );
        let pi = stationary_vector(&p).unwrap();
        let mask = [true, true, false];
        let gap = restricted_spectral_gap(&p, &pi, &mask).unwrap();

        let mut best = f64::INFINITY;
        for k in 1..=400 {
            let t = -2.0 + 4.0 * k as f64 / 400.0;
            if t.abs() < 1e-9 {
                continue;
            }
            let g = [0.0, t, 0.0];
            let e = dirichlet_form(&p, &pi, &mask, &g);
            let v = restricted_variance(&pi, &mask, &g);
            best = best.min(e / v);
        }
        assert!((gap - best).abs() < 1e-10, "gap {gap} vs scan {best}");
    }

    #[test]
    fn full_mask_gap_agrees_with_symmetrized_route() {
        let (p, _) = random_reversible(12, 7);
        let pi = stationary_vector(&p).unwrap();
        let mask = vec![true; 12];
        let a = restricted_spectral_gap(&p, &pi, &mask).unwrap();
        let b = spectral_gap_symmetrized(&p, &pi).unwrap();
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }

    #[test]
    fn degenerate_masks_error() {
        let p = two_state(0.2, 0.2);
        let pi = stationary_vector(&p).unwrap();
        assert!(matches!(
            restricted_spectral_gap(&p, &pi, &[true, false]),
            Err(Error::DegenerateRestriction(_))
        ));
    }

    #[test]
    fn distribution_after_matches_direct_iteration() {
        let (p, _) = random_reversible(8, 3);
        let start = {
            let mut v = DVector::zeros(8);
            v[2] = 1.0;
            v
        };
        let mut direct = start.clone();
        for _ in 0..137 {
            direct = p.tr_mul(&direct);
        }
        let fast = distribution_after(&p, &start, 137);
        assert!((&fast - &direct).abs().max() < 1e-13);

        let far = distribution_after(&p, &start, 1_000_000);
        let pi = stationary_vector(&p).unwrap();
        assert!((&far - &pi).abs().max() < 1e-10);
    }
}
