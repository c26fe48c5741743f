//! Finite-state verification laboratory.
//!
//! Discretizes the tempering chain onto a regular grid, where stationary
//! vectors, projected chains, restricted spectral gaps, decomposition
//! constants, and mixing bounds can all be computed exactly by dense linear
//! algebra. The discrete analog keeps every structural identity of the
//! continuous chain: the proposal is symmetric with leftover mass on the
//! self-loop, level moves use the estimated-normalizer acceptance, and the
//! per-level mixture decomposition holds exactly on the grid by renormalizing
//! component sums there.

mod eigen;
mod verify;

pub use eigen::{
    check_row_stochastic, dirichlet_form, distribution_after, restricted_spectral_gap,
    restricted_variance, spectral_gap_symmetrized, stationary_vector,
};
pub use verify::{
    projected_ddg_paths, verify_canonical_path_bound, verify_decomposition_theorem,
    verify_dirichlet_decomposition, verify_mixing_bound, verify_sandwich_and_gap_ratio,
    CanonicalPathReport, DirichletReport, InitialDistribution, MixingReport, SandwichReport,
    TheoremReport,
};

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ladder::practical_schedule;
use crate::math::logsumexp;
use crate::target::GaussianMixtureTarget;

/// Hard cap on level_count × grid_points; dense eigensolves above this are
/// not worth supporting.
pub const STATE_CAP: usize = 20_000;

/// Regular grid specification: per-axis extent [-A, A] with `points_per_axis`
/// points; the dimension comes from the target.
#[derive(Debug, Clone, Copy)]
pub struct GridSpec {
    pub extent: f64,
    pub points_per_axis: usize,
}

impl GridSpec {
    pub fn spacing(&self) -> f64 {
        2.0 * self.extent / (self.points_per_axis - 1) as f64
    }

    /// All grid points in row-major order.
    pub fn points(&self, dim: usize) -> Result<Vec<Vec<f64>>> {
        if self.points_per_axis < 2 {
            return Err(Error::Argument("grid needs at least 2 points per axis".into()));
        }
        if !(self.extent > 0.0) {
            return Err(Error::Argument("grid extent must be positive".into()));
        }
        let axis: Vec<f64> = (0..self.points_per_axis)
            .map(|k| {
                -self.extent
                    + 2.0 * self.extent * k as f64 / (self.points_per_axis - 1) as f64
            })
            .collect();
        match dim {
            1 => Ok(axis.iter().map(|&x| vec![x]).collect()),
            2 => {
                let mut pts = Vec::with_capacity(axis.len() * axis.len());
                for &x in &axis {
                    for &y in &axis {
                        pts.push(vec![x, y]);
                    }
                }
                Ok(pts)
            }
            d => Err(Error::Argument(format!(
                "discretization supports dimensions 1 and 2, got {d}"
            ))),
        }
    }
}

/// How to pick the restriction set X⁰ = {‖x‖ ≤ R} on the grid.
#[derive(Debug, Clone, Copy)]
pub enum MaskSelect {
    /// Keep the whole grid.
    Full,
    /// Fixed radius.
    Radius(f64),
    /// Smallest grid radius whose component masses all reach this floor.
    PhiFloor(f64),
}

/// Options for building a discrete tempering chain.
#[derive(Debug, Clone)]
pub struct DiscretizeOptions {
    /// Level-move probability of the non-lazy chain.
    pub lambda: f64,
    /// Proposal variance scale.
    pub eta: f64,
    /// Laziness: the built chain is ζI + (1-ζ)M. Zero disables it.
    pub zeta: f64,
    /// Level weights r_i; uniform when absent.
    pub level_weights: Option<Vec<f64>>,
    pub mask: MaskSelect,
}

/// Generic finite chain: a row-stochastic matrix with its stationary vector.
#[derive(Debug, Clone)]
pub struct DiscreteChain {
    pub transition: DMatrix<f64>,
    pub stationary: DVector<f64>,
}

impl DiscreteChain {
    pub fn new(transition: DMatrix<f64>, stationary: DVector<f64>) -> Result<Self> {
        check_row_stochastic(&transition, 1e-12)?;
        let residual = (&transition.tr_mul(&stationary) - &stationary).abs().max();
        if residual > 1e-10 {
            return Err(Error::Argument(format!(
                "claimed stationary vector has residual {residual:e}"
            )));
        }
        Ok(Self {
            transition,
            stationary,
        })
    }

    pub fn len(&self) -> usize {
        self.transition.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Discretized simulated-tempering chain over level × grid states, together
/// with the per-level mixture structure that makes the decomposition
/// assumptions hold exactly on the grid.
#[derive(Debug, Clone)]
pub struct DiscreteSTChain {
    pub levels: usize,
    pub components: usize,
    pub dim: usize,
    pub grid: Vec<Vec<f64>>,
    pub betas: Vec<f64>,
    /// λ of the chain as it stands. For a lazy build this is (1-ζ)λ, the
    /// level-move probability of the equivalent tempering chain.
    pub lambda: f64,
    /// Laziness used in the build (0 when not lazy).
    pub zeta: f64,
    pub eta: f64,
    pub level_weights: Vec<f64>,
    /// Full transition matrix over level-major states (i, g).
    pub full: DMatrix<f64>,
    /// Stationary vector r_i p_i(g).
    pub stationary: DVector<f64>,
    pub log_level_density: Vec<Vec<f64>>,
    pub level_density: Vec<Vec<f64>>,
    pub log_component_density: Vec<Vec<Vec<f64>>>,
    pub component_density: Vec<Vec<Vec<f64>>>,
    /// Grid-exact mixture weights w_(i,j): level densities decompose as
    /// p_i = Σ_j w_(i,j) p_(i,j) identically on the grid.
    pub component_weights: Vec<Vec<f64>>,
    /// Local mixture chains M_i (consistently lazified).
    pub local_mixture: Vec<DMatrix<f64>>,
    /// Local component chains M_(i,j).
    pub local_component: Vec<Vec<DMatrix<f64>>>,
    /// Restriction mask over grid points.
    pub mask: Vec<bool>,
    pub mask_radius: f64,
    /// Target mixture-weight floor (carried along for comparisons).
    pub target_w_min: f64,
    /// Smallest covariance eigenvalue of the target.
    pub target_gamma_min: f64,
}

impl DiscreteSTChain {
    pub fn grid_len(&self) -> usize {
        self.grid.len()
    }

    #[inline]
    pub fn state_index(&self, level: usize, g: usize) -> usize {
        (level - 1) * self.grid.len() + g
    }

    /// Mask over level × grid states (level-replicated grid mask).
    pub fn full_mask(&self) -> Vec<bool> {
        let mut m = Vec::with_capacity(self.levels * self.grid.len());
        for _ in 0..self.levels {
            m.extend_from_slice(&self.mask);
        }
        m
    }

    pub fn is_lazy(&self) -> bool {
        self.zeta > 0.0
    }

    /// Level-move acceptance a((i,x),(i',x)) = min{ r_i' p_i'(x) / (r_i p_i(x)), 1 }.
    pub fn level_acceptance(&self, from: usize, to: usize, g: usize) -> f64 {
        let delta = self.level_weights[to - 1].ln() + self.log_level_density[to - 1][g]
            - self.level_weights[from - 1].ln()
            - self.log_level_density[from - 1][g];
        delta.min(0.0).exp()
    }

    /// Component mass on the restriction set, P_(i,j)(X⁰).
    pub fn component_mask_mass(&self, level: usize, comp: usize) -> f64 {
        self.component_density[level - 1][comp]
            .iter()
            .zip(&self.mask)
            .filter(|(_, &m)| m)
            .map(|(&p, _)| p)
            .sum()
    }

    /// Mass of the restriction under the full stationary law, θ.
    pub fn theta(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.levels {
            let level_mass: f64 = self.level_density[i]
                .iter()
                .zip(&self.mask)
                .filter(|(_, &m)| m)
                .map(|(&p, _)| p)
                .sum();
            acc += self.level_weights[i] * level_mass;
        }
        acc
    }

    /// Smallest component mass on the restriction, φ.
    pub fn phi(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 1..=self.levels {
            for j in 0..self.components {
                best = best.min(self.component_mask_mass(i, j));
            }
        }
        best
    }

    /// Index of the state with the largest stationary mass.
    pub fn mode_state(&self) -> usize {
        let mut best = 0;
        for s in 1..self.stationary.len() {
            if self.stationary[s] > self.stationary[best] {
                best = s;
            }
        }
        best
    }
}

/// Plain discrete tempering chain on the true tempered densities
/// p*_i ∝ exp(-β_i f); no component structure.
#[derive(Debug, Clone)]
pub struct StarSTChain {
    pub full: DMatrix<f64>,
    pub stationary: DVector<f64>,
    pub log_level_density: Vec<Vec<f64>>,
}

/// Symmetric truncated-Gaussian proposal on the grid: q(x,y) ∝
/// exp(-‖y-x‖²/(2η)) for 0 < ‖y-x‖ ≤ min(6√η, grid diameter), normalized by
/// a translation-invariant lattice sum so q(x,y) = q(y,x); leftover mass
/// stays on the self-loop.
fn proposal_matrix(grid: &[Vec<f64>], spacing: f64, eta: f64, dim: usize) -> Result<DMatrix<f64>> {
    let g = grid.len();
    let diameter = {
        let mut d: f64 = 0.0;
        for k in 0..dim {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for p in grid {
                lo = lo.min(p[k]);
                hi = hi.max(p[k]);
            }
            d += (hi - lo) * (hi - lo);
        }
        d.sqrt()
    };
    let radius = (6.0 * eta.sqrt()).min(diameter);
    if radius < spacing {
        return Err(Error::Argument(format!(
            "proposal truncation {radius:.3} is below the grid spacing {spacing:.3}; \
             no position move is reachable"
        )));
    }
    // Translation-invariant normalizer over all lattice offsets in range.
    let reach = (radius / spacing).floor() as i64;
    let mut w_norm = 0.0;
    match dim {
        1 => {
            for j in -reach..=reach {
                if j == 0 {
                    continue;
                }
                let d2 = (j as f64 * spacing).powi(2);
                if d2.sqrt() <= radius {
                    w_norm += (-d2 / (2.0 * eta)).exp();
                }
            }
        }
        2 => {
            for jx in -reach..=reach {
                for jy in -reach..=reach {
                    if jx == 0 && jy == 0 {
                        continue;
                    }
                    let d2 = ((jx * jx + jy * jy) as f64) * spacing * spacing;
                    if d2.sqrt() <= radius {
                        w_norm += (-d2 / (2.0 * eta)).exp();
                    }
                }
            }
        }
        _ => unreachable!("dimension checked earlier"),
    }
    if !(w_norm > 0.0) {
        return Err(Error::Numeric("proposal normalizer vanished".into()));
    }

    let mut q = DMatrix::<f64>::zeros(g, g);
    let r2 = radius * radius * (1.0 + 1e-12);
    for a in 0..g {
        for b in (a + 1)..g {
            let mut d2 = 0.0;
            for k in 0..dim {
                let d = grid[a][k] - grid[b][k];
                d2 += d * d;
            }
            if d2 <= r2 {
                let w = (-d2 / (2.0 * eta)).exp() / w_norm;
                q[(a, b)] = w;
                q[(b, a)] = w;
            }
        }
    }
    Ok(q)
}

/// Metropolis chain for `log_density` under the shared proposal, with
/// off-diagonal entries scaled by `scale` (used for consistent lazification).
fn mh_chain(q: &DMatrix<f64>, log_density: &[f64], scale: f64) -> DMatrix<f64> {
    let g = q.nrows();
    let mut p = DMatrix::<f64>::zeros(g, g);
    for a in 0..g {
        let mut out = 0.0;
        for b in 0..g {
            if a == b || q[(a, b)] == 0.0 {
                continue;
            }
            let accept = (log_density[b] - log_density[a]).min(0.0).exp();
            let v = scale * q[(a, b)] * accept;
            p[(a, b)] = v;
            out += v;
        }
        p[(a, a)] = 1.0 - out;
    }
    p
}

fn normalize_log_density(log_unnorm: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let norm = logsumexp(log_unnorm);
    let log_density: Vec<f64> = log_unnorm.iter().map(|v| v - norm).collect();
    let density: Vec<f64> = log_density.iter().map(|v| v.exp()).collect();
    (log_density, density)
}

fn resolve_level_weights(levels: usize, opts: &DiscretizeOptions) -> Result<Vec<f64>> {
    match &opts.level_weights {
        None => Ok(vec![1.0 / levels as f64; levels]),
        Some(r) => {
            if r.len() != levels {
                return Err(Error::Argument("level weights length must match levels".into()));
            }
            if r.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::Argument("level weights must be positive".into()));
            }
            let sum: f64 = r.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::Argument(format!("level weights must sum to 1, got {sum}")));
            }
            Ok(r.clone())
        }
    }
}

/// Assemble the full tempering transition matrix from lazified local chains
/// and level acceptances.
#[allow(clippy::too_many_arguments)]
fn assemble_full(
    levels: usize,
    grid_len: usize,
    lambda_eff: f64,
    locals: &[DMatrix<f64>],
    log_level_density: &[Vec<f64>],
    level_weights: &[f64],
) -> DMatrix<f64> {
    let n = levels * grid_len;
    let mut full = DMatrix::<f64>::zeros(n, n);
    for i in 0..levels {
        let base = i * grid_len;
        for a in 0..grid_len {
            let row = base + a;
            let mut out = 0.0;
            for b in 0..grid_len {
                if a == b {
                    continue;
                }
                let v = (1.0 - lambda_eff) * locals[i][(a, b)];
                if v != 0.0 {
                    full[(row, base + b)] = v;
                    out += v;
                }
            }
            for di in [-1i64, 1] {
                let to = i as i64 + di;
                if to < 0 || to >= levels as i64 {
                    continue;
                }
                let to = to as usize;
                let delta = level_weights[to].ln() + log_level_density[to][a]
                    - level_weights[i].ln()
                    - log_level_density[i][a];
                let accept = delta.min(0.0).exp();
                let v = 0.5 * lambda_eff * accept;
                full[(row, to * grid_len + a)] = v;
                out += v;
            }
            full[(row, row)] = 1.0 - out;
        }
    }
    full
}

fn validate_discretize(
    target: &GaussianMixtureTarget,
    betas: &[f64],
    opts: &DiscretizeOptions,
    grid_len: usize,
) -> Result<()> {
    if betas.is_empty() {
        return Err(Error::Argument("need at least one level".into()));
    }
    if !(opts.lambda > 0.0 && opts.lambda < 1.0) {
        return Err(Error::Argument("lambda must lie in (0,1)".into()));
    }
    if !(opts.eta > 0.0) {
        return Err(Error::Argument("eta must be positive".into()));
    }
    if !(0.0..=0.5).contains(&opts.zeta) {
        return Err(Error::Argument("zeta must lie in [0, 1/2]".into()));
    }
    if target.dim() > 2 {
        return Err(Error::Argument("discretization supports dimensions 1 and 2".into()));
    }
    let states = betas.len() * grid_len;
    if states > STATE_CAP {
        return Err(Error::Capacity {
            got: states,
            cap: STATE_CAP,
        });
    }
    Ok(())
}

fn select_mask(
    grid: &[Vec<f64>],
    select: MaskSelect,
    component_density: &[Vec<Vec<f64>>],
) -> Result<(Vec<bool>, f64)> {
    let norms: Vec<f64> = grid
        .iter()
        .map(|p| p.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let build = |radius: f64| -> Vec<bool> { norms.iter().map(|&n| n <= radius).collect() };
    match select {
        MaskSelect::Full => {
            let r = norms.iter().cloned().fold(0.0, f64::max);
            Ok((vec![true; grid.len()], r))
        }
        MaskSelect::Radius(r) => {
            if !(r > 0.0) {
                return Err(Error::Argument("mask radius must be positive".into()));
            }
            let mask = build(r);
            if mask.iter().filter(|&&m| m).count() < 2 {
                return Err(Error::DegenerateRestriction(
                    "mask radius keeps fewer than 2 grid points".into(),
                ));
            }
            Ok((mask, r))
        }
        MaskSelect::PhiFloor(floor) => {
            if !(floor > 0.0 && floor < 1.0) {
                return Err(Error::Argument("phi floor must lie in (0,1)".into()));
            }
            let mut candidates: Vec<f64> = norms.clone();
            candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
            candidates.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
            for &r in &candidates {
                let mask = build(r);
                if mask.iter().filter(|&&m| m).count() < 2 {
                    continue;
                }
                let phi = component_density
                    .iter()
                    .flat_map(|level| level.iter())
                    .map(|p| {
                        p.iter()
                            .zip(&mask)
                            .filter(|(_, &m)| m)
                            .map(|(&v, _)| v)
                            .sum::<f64>()
                    })
                    .fold(f64::INFINITY, f64::min);
                if phi >= floor {
                    return Ok((mask, r));
                }
            }
            Err(Error::DegenerateRestriction(format!(
                "no grid radius reaches the component-mass floor {floor}"
            )))
        }
    }
}

/// Build the discrete tempering chain on the tempered-component mixture
/// densities, with full component structure.
pub fn discretize_st(
    target: &GaussianMixtureTarget,
    betas: &[f64],
    grid_spec: &GridSpec,
    opts: &DiscretizeOptions,
) -> Result<DiscreteSTChain> {
    let dim = target.dim();
    let grid = grid_spec.points(dim)?;
    validate_discretize(target, betas, opts, grid.len())?;
    let levels = betas.len();
    let n_comp = target.n_components();
    let level_weights = resolve_level_weights(levels, opts)?;
    let g = grid.len();

    // Per-component log kernels and the grid-exact mixture structure.
    let mut log_component_density = Vec::with_capacity(levels);
    let mut component_density = Vec::with_capacity(levels);
    let mut component_weights = Vec::with_capacity(levels);
    let mut log_level_density = Vec::with_capacity(levels);
    let mut level_density = Vec::with_capacity(levels);
    for (i, &beta) in betas.iter().enumerate() {
        let _ = i;
        let mut comp_logs: Vec<Vec<f64>> = Vec::with_capacity(n_comp);
        for j in 0..n_comp {
            // log t_(i,j)(x) = -(β/2)(x-μ_j)ᵀΣ⁻¹(x-μ_j), via the single-
            // component tilde kernel: subtract the weight contribution.
            let logs: Vec<f64> = grid
                .iter()
                .map(|x| component_log_kernel(target, beta, j, x))
                .collect();
            comp_logs.push(logs);
        }
        let log_sums: Vec<f64> = comp_logs.iter().map(|logs| logsumexp(logs)).collect();
        // w_(i,j) ∝ w_j S_(i,j); normalizing makes Assumption-style mixture
        // decomposition exact on the grid.
        let log_w_raw: Vec<f64> = (0..n_comp)
            .map(|j| target.weights()[j].ln() + log_sums[j])
            .collect();
        let w_norm = logsumexp(&log_w_raw);
        let w_ij: Vec<f64> = log_w_raw.iter().map(|v| (v - w_norm).exp()).collect();

        let mut comp_log_density = Vec::with_capacity(n_comp);
        let mut comp_density = Vec::with_capacity(n_comp);
        for j in 0..n_comp {
            let (ld, d) = {
                let shifted: Vec<f64> = comp_logs[j].iter().map(|v| v - log_sums[j]).collect();
                let dens: Vec<f64> = shifted.iter().map(|v| v.exp()).collect();
                (shifted, dens)
            };
            comp_log_density.push(ld);
            comp_density.push(d);
        }

        let mix_log_unnorm: Vec<f64> = (0..g)
            .map(|a| {
                let terms: Vec<f64> = (0..n_comp)
                    .map(|j| target.weights()[j].ln() + comp_logs[j][a])
                    .collect();
                logsumexp(&terms)
            })
            .collect();
        let (mix_log, mix) = normalize_log_density(&mix_log_unnorm);

        log_component_density.push(comp_log_density);
        component_density.push(comp_density);
        component_weights.push(w_ij);
        log_level_density.push(mix_log);
        level_density.push(mix);
    }

    let spacing = grid_spec.spacing();
    let q = proposal_matrix(&grid, spacing, opts.eta, dim)?;

    // Laziness folds into the chain as λ_eff = (1-ζ)λ with local off-
    // diagonals scaled by (1-ζ)(1-λ)/(1-λ_eff); the result is exactly
    // ζI + (1-ζ)M and is again a tempering chain in the same family.
    let lambda_eff = (1.0 - opts.zeta) * opts.lambda;
    let local_scale = (1.0 - opts.zeta) * (1.0 - opts.lambda) / (1.0 - lambda_eff);

    let local_mixture: Vec<DMatrix<f64>> = log_level_density
        .iter()
        .map(|ld| mh_chain(&q, ld, local_scale))
        .collect();
    let local_component: Vec<Vec<DMatrix<f64>>> = log_component_density
        .iter()
        .map(|per_level| {
            per_level
                .iter()
                .map(|ld| mh_chain(&q, ld, local_scale))
                .collect()
        })
        .collect();

    let full = assemble_full(
        levels,
        g,
        lambda_eff,
        &local_mixture,
        &log_level_density,
        &level_weights,
    );
    let mut stationary = DVector::<f64>::zeros(levels * g);
    for i in 0..levels {
        for a in 0..g {
            stationary[i * g + a] = level_weights[i] * level_density[i][a];
        }
    }

    let (mask, mask_radius) = select_mask(&grid, opts.mask, &component_density)?;

    Ok(DiscreteSTChain {
        levels,
        components: n_comp,
        dim,
        grid,
        betas: betas.to_vec(),
        lambda: lambda_eff,
        zeta: opts.zeta,
        eta: opts.eta,
        level_weights,
        full,
        stationary,
        log_level_density,
        level_density,
        log_component_density,
        component_density,
        component_weights,
        local_mixture,
        local_component,
        mask,
        mask_radius,
        target_w_min: target.w_min(),
        target_gamma_min: target.gamma_min(),
    })
}

/// Unnormalized log kernel of one tempered component, -(β/2) q_j(x).
#[inline]
fn component_log_kernel(
    target: &GaussianMixtureTarget,
    beta: f64,
    comp: usize,
    x: &[f64],
) -> f64 {
    -0.5 * beta
        * target
            .component_quad_form(x, comp)
            .expect("grid points share the target dimension")
}

/// Discrete tempering chain on the true tempered densities p*_i ∝ e^{-β_i f},
/// sharing grid, proposal, weights and laziness with the tilde build.
pub fn discretize_st_star(
    target: &GaussianMixtureTarget,
    betas: &[f64],
    grid_spec: &GridSpec,
    opts: &DiscretizeOptions,
) -> Result<StarSTChain> {
    let dim = target.dim();
    let grid = grid_spec.points(dim)?;
    validate_discretize(target, betas, opts, grid.len())?;
    let levels = betas.len();
    let level_weights = resolve_level_weights(levels, opts)?;
    let g = grid.len();

    let mut log_level_density = Vec::with_capacity(levels);
    for &beta in betas {
        let raw: Vec<f64> = grid
            .iter()
            .map(|x| -beta * target.potential_unchecked(x))
            .collect();
        let (ld, _) = normalize_log_density(&raw);
        log_level_density.push(ld);
    }

    let spacing = grid_spec.spacing();
    let q = proposal_matrix(&grid, spacing, opts.eta, dim)?;
    let lambda_eff = (1.0 - opts.zeta) * opts.lambda;
    let local_scale = (1.0 - opts.zeta) * (1.0 - opts.lambda) / (1.0 - lambda_eff);
    let locals: Vec<DMatrix<f64>> = log_level_density
        .iter()
        .map(|ld| mh_chain(&q, ld, local_scale))
        .collect();
    let full = assemble_full(levels, g, lambda_eff, &locals, &log_level_density, &level_weights);
    let mut stationary = DVector::<f64>::zeros(levels * g);
    for i in 0..levels {
        for a in 0..g {
            stationary[i * g + a] = level_weights[i] * log_level_density[i][a].exp();
        }
    }
    Ok(StarSTChain {
        full,
        stationary,
        log_level_density,
    })
}

/// Projected chain over (level, component) pairs with its stationary law.
#[derive(Debug, Clone)]
pub struct ProjectedChain {
    pub chain: DiscreteChain,
    pub levels: usize,
    pub components: usize,
    /// Largest detailed-balance residual |P̄(u)M̄(u,v) - P̄(v)M̄(v,u)|.
    pub max_db_residual: f64,
    /// Largest entry of |P̄ᵀ M̄ - P̄ᵀ|.
    pub max_stationarity_residual: f64,
}

impl ProjectedChain {
    #[inline]
    pub fn index(&self, level: usize, comp: usize) -> usize {
        (level - 1) * self.components + comp
    }
}

/// Build the projected chain: same-level entries average the conditional
/// component posteriors over the restricted component law, level entries
/// average the component-level acceptance, and the diagonal absorbs the rest.
pub fn build_projected(st: &DiscreteSTChain) -> Result<ProjectedChain> {
    let levels = st.levels;
    let n_comp = st.components;
    let g = st.grid_len();
    let size = levels * n_comp;
    let masked: Vec<usize> = (0..g).filter(|&a| st.mask[a]).collect();
    if masked.is_empty() {
        return Err(Error::DegenerateRestriction("empty restriction set".into()));
    }

    // Component masses on the restriction.
    let mut mass = vec![vec![0.0; n_comp]; levels];
    for i in 0..levels {
        for j in 0..n_comp {
            let m: f64 = masked
                .iter()
                .map(|&a| st.component_density[i][j][a])
                .sum();
            if !(m > 0.0) {
                return Err(Error::DegenerateRestriction(format!(
                    "component ({}, {j}) has no mass on the restriction",
                    i + 1
                )));
            }
            mass[i][j] = m;
        }
    }

    let mut trans = DMatrix::<f64>::zeros(size, size);
    for i in 0..levels {
        for j in 0..n_comp {
            let row = i * n_comp + j;
            let mut out = 0.0;
            // Same-level component switches.
            for j2 in 0..n_comp {
                if j2 == j {
                    continue;
                }
                let mut acc = 0.0;
                for &a in &masked {
                    let posterior = st.component_weights[i][j2]
                        * st.component_density[i][j2][a]
                        / st.level_density[i][a];
                    acc += st.component_density[i][j][a] * posterior;
                }
                let v = (1.0 - st.lambda) * acc / mass[i][j];
                trans[(row, i * n_comp + j2)] = v;
                out += v;
            }
            // Level moves with the component-level acceptance.
            for di in [-1i64, 1] {
                let to = i as i64 + di;
                if to < 0 || to >= levels as i64 {
                    continue;
                }
                let to = to as usize;
                let mut acc = 0.0;
                for &a in &masked {
                    let log_ratio = st.level_weights[to].ln()
                        + st.component_weights[to][j].ln()
                        + st.log_component_density[to][j][a]
                        - st.level_weights[i].ln()
                        - st.component_weights[i][j].ln()
                        - st.log_component_density[i][j][a];
                    acc += st.component_density[i][j][a] * log_ratio.min(0.0).exp();
                }
                let v = 0.5 * st.lambda * acc / mass[i][j];
                trans[(row, to * n_comp + j)] = v;
                out += v;
            }
            if out > 1.0 + 1e-12 {
                return Err(Error::Internal(format!(
                    "projected row ({}, {j}) overflows: total off-diagonal {out}",
                    i + 1
                )));
            }
            trans[(row, row)] = (1.0 - out).max(0.0);
        }
    }

    // Stationary law: P̄(i,j) ∝ r_i w_(i,j) P_(i,j)(X⁰).
    let mut pbar = DVector::<f64>::zeros(size);
    for i in 0..levels {
        for j in 0..n_comp {
            pbar[i * n_comp + j] = st.level_weights[i] * st.component_weights[i][j] * mass[i][j];
        }
    }
    let theta: f64 = pbar.iter().sum();
    pbar /= theta;

    let mut max_db = 0.0_f64;
    for u in 0..size {
        for v in 0..size {
            let r = (pbar[u] * trans[(u, v)] - pbar[v] * trans[(v, u)]).abs();
            max_db = max_db.max(r);
        }
    }
    let max_stat = (&trans.tr_mul(&pbar) - &pbar).abs().max();
    if max_stat > 1e-9 {
        return Err(Error::Internal(format!(
            "projected stationary residual {max_stat:e} out of tolerance"
        )));
    }

    Ok(ProjectedChain {
        chain: DiscreteChain {
            transition: trans,
            stationary: pbar,
        },
        levels,
        components: n_comp,
        max_db_residual: max_db,
        max_stationarity_residual: max_stat,
    })
}

/// A randomized verification instance: a small 1-D mixture, its practical
/// ladder, and the discrete chains built from it.
#[derive(Debug, Clone)]
pub struct VerificationInstance {
    pub seed: u64,
    pub target: GaussianMixtureTarget,
    pub betas: Vec<f64>,
    pub grid_spec: GridSpec,
    pub options: DiscretizeOptions,
    pub chain: DiscreteSTChain,
    pub star: StarSTChain,
    pub projected: ProjectedChain,
}

/// Knobs for the randomized suite.
#[derive(Debug, Clone)]
pub struct InstanceDesign {
    pub lambda: f64,
    pub zeta: f64,
    pub max_points: usize,
    pub min_points: usize,
    pub phi_floor: f64,
    pub mask: Option<MaskSelect>,
}

impl Default for InstanceDesign {
    fn default() -> Self {
        Self {
            lambda: 1.0 / 3.0,
            zeta: 0.5,
            max_points: 64,
            min_points: 48,
            phi_floor: 0.78,
            mask: None,
        }
    }
}

/// Deterministically generate one verification instance from a seed:
/// d = 1, two components with means in [-3, -1.2] and [1.2, 3], weights at
/// least 0.2, shared variance in [0.4, 0.9], two- or three-level practical
/// ladder, grid of at most `max_points` points, random level weights.
pub fn random_instance(seed: u64, design: &InstanceDesign) -> Result<VerificationInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mu1 = -rng.gen_range(1.2..3.0);
    let mu2 = rng.gen_range(1.2..3.0);
    let w1 = rng.gen_range(0.2..=0.8);
    let sigma_sq = rng.gen_range(0.4..0.9);
    let target = GaussianMixtureTarget::new(
        vec![vec![mu1], vec![mu2]],
        DMatrix::from_element(1, 1, sigma_sq),
        vec![w1, 1.0 - w1],
    )?;

    let levels = if rng.gen_bool(0.5) { 2 } else { 3 };
    let schedule = practical_schedule(&target, levels, 0.1)?;
    let betas = schedule.betas.clone();

    let beta1 = betas[0];
    let sigma_hot = (target.gamma_max() / beta1).sqrt();
    let extent = mu2.abs().max(mu1.abs()) + 5.0 * sigma_hot;
    let points = rng.gen_range(design.min_points..=design.max_points);
    let grid_spec = GridSpec {
        extent,
        points_per_axis: points,
    };
    let spacing = grid_spec.spacing();
    let eta = (2.5 * spacing).powi(2);

    let raw: Vec<f64> = (0..levels).map(|_| rng.gen_range(0.5..1.5)).collect();
    let total: f64 = raw.iter().sum();
    let level_weights: Vec<f64> = raw.iter().map(|v| v / total).collect();

    let options = DiscretizeOptions {
        lambda: design.lambda,
        eta,
        zeta: design.zeta,
        level_weights: Some(level_weights),
        mask: design.mask.unwrap_or(MaskSelect::PhiFloor(design.phi_floor)),
    };
    let chain = discretize_st(&target, &betas, &grid_spec, &options)?;
    let star = discretize_st_star(&target, &betas, &grid_spec, &options)?;
    let projected = build_projected(&chain)?;
    Ok(VerificationInstance {
        seed,
        target,
        betas,
        grid_spec,
        options,
        chain,
        star,
        projected,
    })
}
