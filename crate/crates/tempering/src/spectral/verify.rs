//! Verification routines on discretized tempering chains: the Dirichlet-form
//! decomposition identity, the restricted-gap decomposition bound, canonical
//! path congestion, density sandwiches, and the lazy-chain mixing bound.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::spectral::eigen::{
    dirichlet_form, distribution_after, restricted_spectral_gap, restricted_variance,
};
use crate::spectral::{DiscreteChain, DiscreteSTChain, ProjectedChain, StarSTChain};

/// Outcome of checking the Dirichlet-form split
/// E(g,g) = (1-λ) Σ_i r_i E_i(g_i,g_i) + λ E^I(g,g) on random functions.
#[derive(Debug, Clone)]
pub struct DirichletReport {
    pub trials: usize,
    pub max_rel_err: f64,
}

fn dirichlet_rhs(st: &DiscreteSTChain, g: &[f64]) -> f64 {
    let grid_len = st.grid_len();
    let mut local_part = 0.0;
    for i in 0..st.levels {
        let gi = &g[i * grid_len..(i + 1) * grid_len];
        let pi_level = DVector::from_column_slice(&st.level_density[i]);
        local_part += st.level_weights[i]
            * dirichlet_form(&st.local_mixture[i], &pi_level, &st.mask, gi);
    }
    let mut interchange = 0.0;
    for i in 1..=st.levels {
        for di in [-1i64, 1] {
            let to = i as i64 + di;
            if to < 1 || to > st.levels as i64 {
                continue;
            }
            let to = to as usize;
            for a in 0..grid_len {
                if !st.mask[a] {
                    continue;
                }
                let d = g[(i - 1) * grid_len + a] - g[(to - 1) * grid_len + a];
                interchange += d
                    * d
                    * st.level_weights[i - 1]
                    * st.level_density[i - 1][a]
                    * st.level_acceptance(i, to, a);
            }
        }
    }
    (1.0 - st.lambda) * local_part + st.lambda * 0.25 * interchange
}

/// Evaluate both sides of the Dirichlet decomposition on random Gaussian
/// test functions and report the worst relative discrepancy.
pub fn verify_dirichlet_decomposition<R: Rng + ?Sized>(
    st: &DiscreteSTChain,
    trials: usize,
    rng: &mut R,
) -> DirichletReport {
    let n = st.levels * st.grid_len();
    let full_mask = st.full_mask();
    let mut max_rel = 0.0_f64;
    for _ in 0..trials {
        let g: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let lhs = dirichlet_form(&st.full, &st.stationary, &full_mask, &g);
        let rhs = dirichlet_rhs(st, &g);
        let scale = lhs.abs().max(rhs.abs());
        if scale > 0.0 {
            max_rel = max_rel.max((lhs - rhs).abs() / scale);
        }
    }
    DirichletReport {
        trials,
        max_rel_err: max_rel,
    }
}

/// Result of checking the restricted-gap decomposition bound on one chain.
#[derive(Debug, Clone)]
pub struct TheoremReport {
    /// Exact restricted spectral gap of the full chain.
    pub gap: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub theta: f64,
    pub phi: f64,
    pub c_m: f64,
    pub holds: bool,
    pub lazy: bool,
    /// Path-method lower bound on the local gaps, reported when η ≤ R².
    pub l2_bound: Option<f64>,
    pub l2_bound_ok: Option<bool>,
}

/// Check SpecGap_{[L]×X⁰}(M) ≥ 1/C_M with
/// C_M = max{3θC₃, θ C₁C₂ ((2+λ)C₃ + 1) / (φ(1-λ))}.
///
/// C₁ = 1: the min-splitting inequality behind it is exact for Metropolis
/// chains sharing one symmetric proposal, discrete or not. C₂ and C₃ come
/// from exact eigensolves of the local component chains and the projected
/// chain. A single-state projected chain contributes C₃ = 0 (its variance
/// vanishes identically).
pub fn verify_decomposition_theorem(
    st: &DiscreteSTChain,
    projected: &ProjectedChain,
) -> Result<TheoremReport> {
    let c1 = 1.0;
    let mut min_local_gap = f64::INFINITY;
    for i in 0..st.levels {
        for j in 0..st.components {
            let pi = DVector::from_column_slice(&st.component_density[i][j]);
            let gap = restricted_spectral_gap(&st.local_component[i][j], &pi, &st.mask)?;
            if !(gap > 0.0) {
                return Err(Error::DegenerateRestriction(format!(
                    "local chain ({}, {j}) has zero restricted gap",
                    i + 1
                )));
            }
            min_local_gap = min_local_gap.min(gap);
        }
    }
    let c2 = 1.0 / min_local_gap;

    let proj_size = projected.chain.len();
    let c3 = if proj_size < 2 {
        0.0
    } else {
        let mask = vec![true; proj_size];
        let gap = restricted_spectral_gap(
            &projected.chain.transition,
            &projected.chain.stationary,
            &mask,
        )?;
        if !(gap > 0.0) {
            return Err(Error::DegenerateRestriction(
                "projected chain has zero spectral gap".into(),
            ));
        }
        1.0 / gap
    };

    let theta = st.theta();
    let phi = st.phi();
    if !(phi > 0.0) {
        return Err(Error::DegenerateRestriction(
            "a component carries no mass on the restriction".into(),
        ));
    }
    let lambda = st.lambda;
    let c_m = (3.0 * theta * c3)
        .max(theta * c1 * c2 * ((2.0 + lambda) * c3 + 1.0) / (phi * (1.0 - lambda)));

    let full_mask = st.full_mask();
    let gap = restricted_spectral_gap(&st.full, &st.stationary, &full_mask)?;
    let holds = gap * c_m >= 1.0 - 1e-9;

    let (l2_bound, l2_bound_ok) = if st.eta <= st.mask_radius * st.mask_radius {
        let d = st.dim as f64;
        let bound = st.target_gamma_min.powf(d / 2.0) * st.eta.powf(1.5)
            / (13.0 * st.mask_radius.powf(d + 3.0));
        (Some(bound), Some(min_local_gap >= bound))
    } else {
        (None, None)
    };

    Ok(TheoremReport {
        gap,
        c1,
        c2,
        c3,
        theta,
        phi,
        c_m,
        holds,
        lazy: st.is_lazy(),
        l2_bound,
        l2_bound_ok,
    })
}

/// Pointwise density sandwich between the true tempered levels and the
/// tempered-component mixture levels, plus the restricted-gap comparison
/// gap(tilde) ≤ w_min⁻⁵ gap(star).
#[derive(Debug, Clone)]
pub struct SandwichReport {
    /// Worst log-domain violation of
    /// w_min p̃_i ≤ p*_i ≤ p̃_i / w_min (0 when the sandwich holds).
    pub max_log_violation: f64,
    pub sandwich_ok: bool,
    pub gap_tilde: f64,
    pub gap_star: f64,
    pub ratio_ok: bool,
}

pub fn verify_sandwich_and_gap_ratio(
    st: &DiscreteSTChain,
    star: &StarSTChain,
) -> Result<SandwichReport> {
    let log_w_min = st.target_w_min.ln();
    let mut worst = 0.0_f64;
    for i in 0..st.levels {
        for a in 0..st.grid_len() {
            let lp_star = star.log_level_density[i][a];
            let lp_tilde = st.log_level_density[i][a];
            let lo = lp_star - (log_w_min + lp_tilde);
            let hi = (lp_tilde - log_w_min) - lp_star;
            worst = worst.max((-lo).max(-hi).max(0.0));
        }
    }
    let sandwich_ok = worst <= 1e-9;

    let full_mask = st.full_mask();
    let gap_tilde = restricted_spectral_gap(&st.full, &st.stationary, &full_mask)?;
    let gap_star = restricted_spectral_gap(&star.full, &star.stationary, &full_mask)?;
    let ratio_ok = gap_tilde <= gap_star / st.target_w_min.powi(5) * (1.0 + 1e-9);
    Ok(SandwichReport {
        max_log_violation: worst,
        sandwich_ok,
        gap_tilde,
        gap_star,
        ratio_ok,
    })
}

/// Result of the edge-congestion check Var ≤ ρ_e(Γ) E on random functions.
#[derive(Debug, Clone)]
pub struct CanonicalPathReport {
    pub rho_e: f64,
    pub trials: usize,
    /// Largest Var / (ρ_e E) over the trials (≤ 1 when the bound holds).
    pub max_ratio: f64,
    pub holds: bool,
}

/// Edge congestion of a path family and the Poincaré check it certifies.
/// `paths` must contain one path for every ordered pair of distinct states,
/// each step moving along a positive-probability edge.
pub fn verify_canonical_path_bound<R: Rng + ?Sized>(
    chain: &DiscreteChain,
    paths: &[Vec<usize>],
    trials: usize,
    rng: &mut R,
) -> Result<CanonicalPathReport> {
    let n = chain.len();
    if paths.len() != n * (n - 1) {
        return Err(Error::Path(format!(
            "need {} ordered-pair paths, got {}",
            n * (n - 1),
            paths.len()
        )));
    }
    let pi = &chain.stationary;
    let p = &chain.transition;
    let mut seen = vec![false; n * n];
    let mut load = vec![0.0_f64; n * n];
    for path in paths {
        if path.len() < 2 {
            return Err(Error::Path("a path must contain at least one edge".into()));
        }
        let (x, y) = (path[0], *path.last().unwrap());
        if x == y {
            return Err(Error::Path("path endpoints must differ".into()));
        }
        if seen[x * n + y] {
            return Err(Error::Path(format!("duplicate path for pair ({x}, {y})")));
        }
        seen[x * n + y] = true;
        let length = (path.len() - 1) as f64;
        for w in path.windows(2) {
            let (u, v) = (w[0], w[1]);
            if u == v || u >= n || v >= n {
                return Err(Error::Path(format!("invalid edge ({u}, {v})")));
            }
            if !(p[(u, v)] > 0.0) {
                return Err(Error::Path(format!(
                    "path for pair ({x}, {y}) uses the zero-probability edge ({u}, {v})"
                )));
            }
            load[u * n + v] += pi[x] * pi[y] * length;
        }
    }
    for x in 0..n {
        for y in 0..n {
            if x != y && !seen[x * n + y] {
                return Err(Error::Path(format!("missing path for pair ({x}, {y})")));
            }
        }
    }
    let mut rho_e = 0.0_f64;
    for u in 0..n {
        for v in 0..n {
            if load[u * n + v] > 0.0 {
                rho_e = rho_e.max(load[u * n + v] / (pi[u] * p[(u, v)]));
            }
        }
    }

    let mask = vec![true; n];
    let mut max_ratio = 0.0_f64;
    let mut holds = true;
    for _ in 0..trials {
        let g: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let var = restricted_variance(pi, &mask, &g);
        let energy = dirichlet_form(p, pi, &mask, &g);
        if var > rho_e * energy * (1.0 + 1e-9) {
            holds = false;
        }
        if energy > 0.0 {
            max_ratio = max_ratio.max(var / (rho_e * energy));
        }
    }
    Ok(CanonicalPathReport {
        rho_e,
        trials,
        max_ratio,
        holds,
    })
}

/// Canonical paths for a projected chain, routed through the hottest level:
/// equal components walk straight along levels; distinct components descend
/// to level 1, switch there, and climb back.
pub fn projected_ddg_paths(levels: usize, components: usize) -> Vec<Vec<usize>> {
    let idx = |i: usize, j: usize| i * components + j;
    let mut paths = Vec::new();
    for i1 in 0..levels {
        for j1 in 0..components {
            for i2 in 0..levels {
                for j2 in 0..components {
                    if (i1, j1) == (i2, j2) {
                        continue;
                    }
                    let mut path = Vec::new();
                    if j1 == j2 {
                        let step: i64 = if i2 > i1 { 1 } else { -1 };
                        let mut i = i1 as i64;
                        loop {
                            path.push(idx(i as usize, j1));
                            if i == i2 as i64 {
                                break;
                            }
                            i += step;
                        }
                    } else {
                        for i in (0..=i1).rev() {
                            path.push(idx(i, j1));
                        }
                        for i in 0..=i2 {
                            path.push(idx(i, j2));
                        }
                    }
                    paths.push(path);
                }
            }
        }
    }
    paths
}

/// Initial law for the mixing check.
#[derive(Debug, Clone)]
pub enum InitialDistribution {
    /// All mass on one state.
    PointMass(usize),
    /// Explicit probability vector over level × grid states.
    Given(DVector<f64>),
}

/// Result of the lazy-chain mixing check at accuracy `eps`.
#[derive(Debug, Clone)]
pub struct MixingReport {
    /// Sup of the start-density ratio f₀ = p⁰/π.
    pub b: f64,
    pub c_m: f64,
    pub n_steps: u64,
    /// Total-variation distance Σ|p^N - π| after N steps (range [0, 2]).
    pub tv: f64,
    pub eps: f64,
    pub level_tvs: Vec<f64>,
    pub level_bound: f64,
    /// Whether θ ≥ 1 - ε²/(20B²) held (the sup-norm branch of the mass
    /// hypothesis).
    pub mass_hypothesis_ok: bool,
    pub holds: bool,
}

/// Iterate the exact distribution N = ⌈C_M log(2B²/ε²)⌉ steps and compare
/// against stationarity, globally and per level.
pub fn verify_mixing_bound(
    st: &DiscreteSTChain,
    projected: &ProjectedChain,
    init: &InitialDistribution,
    eps: f64,
) -> Result<MixingReport> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Argument(format!("eps must lie in (0,1), got {eps}")));
    }
    let n = st.levels * st.grid_len();
    let p0 = match init {
        InitialDistribution::PointMass(s) => {
            if *s >= n {
                return Err(Error::Argument(format!("state {s} out of range")));
            }
            let mut v = DVector::zeros(n);
            v[*s] = 1.0;
            v
        }
        InitialDistribution::Given(v) => {
            if v.len() != n {
                return Err(Error::Argument("initial vector has the wrong length".into()));
            }
            if v.iter().any(|&x| x < 0.0) || (v.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err(Error::Argument("initial vector is not a probability law".into()));
            }
            v.clone()
        }
    };

    let mut b: f64 = 0.0;
    for s in 0..n {
        if p0[s] > 0.0 {
            if !(st.stationary[s] > 0.0) {
                return Err(Error::Argument(
                    "initial law is not absolutely continuous w.r.t. stationarity".into(),
                ));
            }
            b = b.max(p0[s] / st.stationary[s]);
        }
    }

    let theorem = verify_decomposition_theorem(st, projected)?;
    let c_m = theorem.c_m;
    let n_steps = (c_m * (2.0 * b * b / (eps * eps)).ln()).ceil().max(0.0) as u64;

    let p_n = distribution_after(&st.full, &p0, n_steps);
    let tv: f64 = (0..n).map(|s| (p_n[s] - st.stationary[s]).abs()).sum();

    let g = st.grid_len();
    let mut level_tvs = Vec::with_capacity(st.levels);
    for i in 0..st.levels {
        let mass: f64 = (0..g).map(|a| p_n[i * g + a]).sum();
        if !(mass > 0.0) {
            level_tvs.push(2.0);
            continue;
        }
        let mut acc = 0.0;
        for a in 0..g {
            acc += (p_n[i * g + a] / mass - st.level_density[i][a]).abs();
        }
        level_tvs.push(acc);
    }
    let min_r = st
        .level_weights
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let level_bound = 3.0 * eps / (2.0 * min_r);
    let mass_hypothesis_ok = st.theta() >= 1.0 - eps * eps / (20.0 * b * b);
    let holds = tv <= eps && level_tvs.iter().all(|&t| t <= level_bound);

    Ok(MixingReport {
        b,
        c_m,
        n_steps,
        tv,
        eps,
        level_tvs,
        level_bound,
        mass_hypothesis_ok,
        holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::replicate_rng;
    use crate::spectral::{
        build_projected, discretize_st, random_instance, DiscretizeOptions, GridSpec,
        InstanceDesign, MaskSelect,
    };
    use crate::target::GaussianMixtureTarget;
    use nalgebra::DMatrix;

    fn small_instance(seed: u64) -> crate::spectral::VerificationInstance {
        random_instance(seed, &InstanceDesign::default()).unwrap()
    }

    #[test]
    fn dirichlet_identity_on_special_functions() {
        let inst = small_instance(5);
        let st = &inst.chain;
        let n = st.levels * st.grid_len();
        let full_mask = st.full_mask();

        let constant = vec![2.5; n];
        assert_eq!(dirichlet_form(&st.full, &st.stationary, &full_mask, &constant), 0.0);
        assert_eq!(dirichlet_rhs(st, &constant), 0.0);

        // g depending only on position: the interchange term vanishes but the
        // identity still holds.
        let mut g = vec![0.0; n];
        for i in 0..st.levels {
            for a in 0..st.grid_len() {
                g[i * st.grid_len() + a] = st.grid[a][0].sin();
            }
        }
        let lhs = dirichlet_form(&st.full, &st.stationary, &full_mask, &g);
        let rhs = dirichlet_rhs(st, &g);
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.max(1e-30));
    }

    #[test]
    fn dirichlet_identity_on_random_functions() {
        let inst = small_instance(8);
        let mut rng = replicate_rng(123, 0);
        let report = verify_dirichlet_decomposition(&inst.chain, 100, &mut rng);
        assert!(report.max_rel_err <= 1e-10, "rel err {:e}", report.max_rel_err);
    }

    #[test]
    fn theorem_holds_on_single_component_single_level() {
        // One Gaussian, one level, full mask: C₃ = 0 and the bound reduces
        // to gap ≥ (1-λ) gap_local, which holds with equality.
        let target =
            GaussianMixtureTarget::with_identity_covariance(vec![vec![0.0]], vec![1.0]).unwrap();
        let grid = GridSpec {
            extent: 5.0,
            points_per_axis: 41,
        };
        let opts = DiscretizeOptions {
            lambda: 0.3,
            eta: 0.4,
            zeta: 0.0,
            level_weights: None,
            mask: MaskSelect::Full,
        };
        let st = discretize_st(&target, &[1.0], &grid, &opts).unwrap();
        let projected = build_projected(&st).unwrap();
        assert_eq!(projected.chain.len(), 1);
        let report = verify_decomposition_theorem(&st, &projected).unwrap();
        assert_eq!(report.c3, 0.0);
        assert!(report.holds);
        assert!((report.theta - 1.0).abs() < 1e-12);
        assert!((report.phi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn theorem_holds_on_a_random_lazy_instance() {
        let inst = small_instance(11);
        let report = verify_decomposition_theorem(&inst.chain, &inst.projected).unwrap();
        assert!(report.lazy);
        assert!(report.holds, "gap {} vs 1/C_M {}", report.gap, 1.0 / report.c_m);
    }

    #[test]
    fn sandwich_and_gap_ratio_hold() {
        let inst = small_instance(17);
        let report = verify_sandwich_and_gap_ratio(&inst.chain, &inst.star).unwrap();
        assert!(report.sandwich_ok, "violation {:e}", report.max_log_violation);
        assert!(report.ratio_ok, "{} vs {}", report.gap_tilde, report.gap_star);
    }

    #[test]
    fn canonical_paths_two_state_closed_form() {
        let p = DMatrix::from_row_slice(2, 2, &[0.8, 0.2, 0.3, 0.7]);
        let pi = crate::spectral::stationary_vector(&p).unwrap();
        let chain = DiscreteChain::new(p, pi).unwrap();
        let paths = vec![vec![0, 1], vec![1, 0]];
        let mut rng = replicate_rng(7, 0);
        let report = verify_canonical_path_bound(&chain, &paths, 100, &mut rng).unwrap();
        // For two states the congestion equals 1/gap = 1/(p+q).
        assert!((report.rho_e - 2.0).abs() < 1e-12);
        assert!(report.holds);
        assert!(report.max_ratio <= 1.0 + 1e-9);
    }

    #[test]
    fn canonical_paths_projected_chain() {
        let inst = small_instance(23);
        let paths = projected_ddg_paths(inst.projected.levels, inst.projected.components);
        let mut rng = replicate_rng(9, 0);
        let report =
            verify_canonical_path_bound(&inst.projected.chain, &paths, 100, &mut rng).unwrap();
        assert!(report.holds, "max ratio {}", report.max_ratio);
    }

    #[test]
    fn canonical_paths_reject_zero_probability_edges() {
        let p = DMatrix::from_row_slice(
            3,
            3,
            &[0.5, 0.5, 0.0, 0.25, 0.5, 0.25, 0.0, 0.5, 0.5],
        );
        let pi = crate::spectral::stationary_vector(&p).unwrap();
        let chain = DiscreteChain::new(p, pi).unwrap();
        // Direct 0 → 2 edge does not exist.
        let paths = vec![
            vec![0, 1],
            vec![0, 2],
            vec![1, 0],
            vec![1, 2],
            vec![2, 1],
            vec![2, 1, 0],
        ];
        let err = verify_canonical_path_bound(&chain, &paths, 10, &mut replicate_rng(1, 0))
            .unwrap_err();
        assert!(matches!(err, Error::Path(_)));
    }

    #[test]
    fn mixing_from_stationarity_is_immediate() {
        let inst = small_instance(29);
        let report = verify_mixing_bound(
            &inst.chain,
            &inst.projected,
            &InitialDistribution::Given(inst.chain.stationary.clone()),
            0.1,
        )
        .unwrap();
        assert!(report.tv < 1e-9);
        assert!((report.b - 1.0).abs() < 1e-9);
        assert!(report.holds);
    }

    #[test]
    fn mixing_point_mass_meets_the_budget_on_a_full_mask_instance() {
        let design = InstanceDesign {
            mask: Some(MaskSelect::Full),
            ..InstanceDesign::default()
        };
        let inst = random_instance(31, &design).unwrap();
        let mode = inst.chain.mode_state();
        let report = verify_mixing_bound(
            &inst.chain,
            &inst.projected,
            &InitialDistribution::PointMass(mode),
            0.1,
        )
        .unwrap();
        assert!(report.mass_hypothesis_ok);
        assert!(report.holds, "tv {} after {} steps", report.tv, report.n_steps);
        assert!(report.tv <= 0.1);
        for (i, tv) in report.level_tvs.iter().enumerate() {
            assert!(*tv <= report.level_bound, "level {i}: {tv}");
        }
    }
}
