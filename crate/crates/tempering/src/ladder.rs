//! Temperature ladders: schedule construction, partition-function estimation,
//! level weights, and the Gaussian KL / TV-overlap utilities the schedule
//! bounds rest on.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{replicate_rng, run_chain, StConfig};
use crate::math::logsumexp;
use crate::quad;
use crate::target::GaussianMixtureTarget;

/// Inverse-temperature ladder with log-domain partition estimates.
///
/// `betas` is strictly increasing with the last entry exactly 1; `log_zhat`
/// holds log(Ẑ_i) with Ẑ_1 = 1. Optional `weights` carry the chain's level
/// weights r_i when they are known (uniform when Ẑ_i is exact).
#[derive(Debug, Clone)]
pub struct Ladder {
    betas: Vec<f64>,
    log_zhat: Vec<f64>,
    weights: Option<Vec<f64>>,
}

impl Ladder {
    pub fn new(betas: Vec<f64>, log_zhat: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::Argument("ladder needs at least one level".into()));
        }
        if betas.len() != log_zhat.len() {
            return Err(Error::Argument("betas and log_zhat lengths differ".into()));
        }
        if betas.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Argument("betas must be strictly increasing".into()));
        }
        if betas[0] <= 0.0 {
            return Err(Error::Argument("betas must be positive".into()));
        }
        let last = *betas.last().unwrap();
        if (last - 1.0).abs() > 1e-12 {
            return Err(Error::Argument(format!("top beta must be 1, got {last}")));
        }
        if log_zhat.iter().any(|z| !z.is_finite()) {
            return Err(Error::Argument("log Ẑ entries must be finite".into()));
        }
        if (log_zhat[0]).abs() > 1e-12 {
            return Err(Error::Argument("Ẑ_1 must equal 1".into()));
        }
        Ok(Self {
            betas,
            log_zhat,
            weights: None,
        })
    }

    /// Single-level ladder at β = 1 (plain Metropolis-Hastings).
    pub fn single_level() -> Self {
        Self {
            betas: vec![1.0],
            log_zhat: vec![0.0],
            weights: Some(vec![1.0]),
        }
    }

    /// Ladder with unit estimates Ẑ_i = 1 at the given betas.
    pub fn with_unit_zhat(betas: Vec<f64>) -> Result<Self> {
        let n = betas.len();
        Self::new(betas, vec![0.0; n])
    }

    /// Attach level weights r_i (must be positive and sum to 1).
    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.betas.len() {
            return Err(Error::Argument("weights length must match levels".into()));
        }
        if weights.iter().any(|&r| !(r > 0.0)) {
            return Err(Error::Argument("level weights must be positive".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Argument(format!("level weights must sum to 1, got {sum}")));
        }
        self.weights = Some(weights);
        Ok(self)
    }

    pub fn levels(&self) -> usize {
        self.betas.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    /// β at 1-based level index.
    pub fn beta(&self, level: usize) -> f64 {
        self.betas[level - 1]
    }

    pub fn log_zhat(&self) -> &[f64] {
        &self.log_zhat
    }

    pub fn log_zhat_at(&self, level: usize) -> f64 {
        self.log_zhat[level - 1]
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

}

/// Θ-constants left free by the schedule's order-level formulas; all default
/// to 1 and may be overridden from the config.
#[derive(Debug, Clone)]
pub struct ScheduleConstants {
    /// Scale on β_1 = γ_min / D².
    pub beta1_scale: f64,
    /// Scale on σ_0² = γ_min / β_1.
    pub sigma0_scale: f64,
    /// Multiplier C' in the step budget.
    pub budget_scale: f64,
    /// Exponential rate c' (in the exp(c'd) factor of the step budget).
    pub budget_rate: f64,
    /// Level-move probability λ (a free constant in the schedule).
    pub lambda: f64,
}

impl Default for ScheduleConstants {
    fn default() -> Self {
        Self {
            beta1_scale: 1.0,
            sigma0_scale: 1.0,
            budget_scale: 1.0,
            budget_rate: 1.0,
            lambda: 1.0 / 3.0,
        }
    }
}

/// Fully instantiated schedule: the ladder geometry plus the sampler
/// parameters tied to it.
#[derive(Debug, Clone)]
pub struct ScheduleParams {
    pub betas: Vec<f64>,
    /// Geometric ratio used to build the betas.
    pub ratio: f64,
    /// Restriction radius R.
    pub restriction_radius: f64,
    /// Step budget N.
    pub step_budget: u64,
    /// Initial-draw variance σ_0².
    pub sigma0_sq: f64,
    pub lambda: f64,
    pub eta: f64,
    pub warnings: Vec<String>,
}

impl ScheduleParams {
    pub fn levels(&self) -> usize {
        self.betas.len()
    }

    pub fn unit_ladder(&self) -> Result<Ladder> {
        Ladder::with_unit_zhat(self.betas.clone())
    }
}

/// KL(N(μ, Σ1) || N(μ, Σ2)) = (log |Σ2|/|Σ1| - d + tr(Σ2⁻¹ Σ1)) / 2.
pub fn kl_gaussians_equal_mean(sigma1: &DMatrix<f64>, sigma2: &DMatrix<f64>) -> Result<f64> {
    let d = sigma1.nrows();
    if sigma1.ncols() != d || sigma2.nrows() != d || sigma2.ncols() != d {
        return Err(Error::Argument("covariances must be square with equal size".into()));
    }
    let chol1 = sigma1
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Argument("first covariance is not SPD".into()))?;
    let chol2 = sigma2
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Argument("second covariance is not SPD".into()))?;
    let logdet = |c: &nalgebra::Cholesky<f64, nalgebra::Dyn>| {
        2.0 * (0..d).map(|i| c.l()[(i, i)].ln()).sum::<f64>()
    };
    let trace = chol2.solve(sigma1).trace();
    Ok(0.5 * (logdet(&chol2) - logdet(&chol1) - d as f64 + trace))
}

/// Lower bound 1 - sqrt(kl/2) on the overlap ∫ min{π, π̃}, clipped at zero.
pub fn tv_overlap_lower_bound(kl: f64) -> Result<f64> {
    if kl < 0.0 || !kl.is_finite() {
        return Err(Error::Argument(format!("KL must be a finite non-negative value, got {kl}")));
    }
    Ok((1.0 - (kl / 2.0).sqrt()).max(0.0))
}

fn restriction_radius(target: &GaussianMixtureTarget, levels: usize, eps: f64) -> f64 {
    let d = target.dim() as f64;
    let kappa = target.kappa();
    let spread = target.spread();
    let d2 = spread * spread;
    let log_arg = 20.0 * (6.0_f64).exp() * (levels as f64).powi(2) * kappa.powf(d)
        / (target.w_min().powi(2) * eps);
    spread + (d * kappa * d2).sqrt() + (2.0 * kappa * d2 * log_arg.ln()).sqrt()
}

fn step_budget(
    target: &GaussianMixtureTarget,
    levels: usize,
    radius: f64,
    eps: f64,
    consts: &ScheduleConstants,
) -> u64 {
    let d = target.dim() as f64;
    let kappa = target.kappa();
    let w_min = target.w_min();
    let l = levels as f64;
    let lead = consts.budget_scale * l.powi(4) * radius.powf(d) * kappa.powf(d / 2.0)
        * (consts.budget_rate * d).exp()
        / (target.gamma_min().powf(d / 2.0) * w_min.powi(5));
    let log_term = (l * l * kappa.powf(d) / (eps * eps * w_min * w_min)).ln();
    let n = (lead * log_term.max(1.0)).ceil();
    if n.is_finite() && n < u64::MAX as f64 {
        n.max(1.0) as u64
    } else {
        u64::MAX
    }
}

/// Schedule from the order-level prescriptions with explicit constants:
/// β_1 = γ_min/D², geometric ratio
/// ρ = min{1 + 1/√d, 1 + γ_min/(D² + 2 γ_max d ν)}, L minimal with
/// β_1 ρ^{L-1} ≥ 1, and R, σ_0², η, N tied to the same quantities.
///
/// The second ratio bound is applied as `1 +` the published fraction: the raw
/// fraction is below one and cannot bound a ratio of increasing betas, while
/// the `1 +` form is exactly what the adjacent-level KL step consumes.
pub fn theory_schedule(
    target: &GaussianMixtureTarget,
    eps: f64,
    consts: &ScheduleConstants,
) -> Result<ScheduleParams> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Argument(format!("eps must lie in (0,1), got {eps}")));
    }
    if !(consts.lambda > 0.0 && consts.lambda < 1.0) {
        return Err(Error::Argument("lambda must lie in (0,1)".into()));
    }
    let d = target.dim() as f64;
    let spread = target.spread();
    let d2 = spread * spread;
    let gamma_min = target.gamma_min();
    let gamma_max = target.gamma_max();
    let kappa = target.kappa();
    let w_min = target.w_min();

    let beta1 = (consts.beta1_scale * gamma_min / d2).min(1.0);
    let nu = 1.0 + kappa.ln() + (2.0 / d) * (2.0 / w_min).ln();
    let ratio = (1.0 + 1.0 / d.sqrt()).min(1.0 + gamma_min / (d2 + 2.0 * gamma_max * d * nu));

    let mut warnings = Vec::new();
    let mut betas = Vec::new();
    if beta1 >= 1.0 {
        betas.push(1.0);
    } else {
        let mut b = beta1;
        let mut count = 0usize;
        while b < 1.0 {
            betas.push(b);
            b *= ratio;
            count += 1;
            if count > 50_000_000 {
                return Err(Error::Numeric("temperature ladder did not reach beta = 1".into()));
            }
        }
        betas.push(1.0);
    }
    let levels = betas.len();
    if levels > 100_000 {
        warnings.push(format!(
            "schedule has {levels} levels; consider a practical ladder for actual runs"
        ));
    }

    let radius = restriction_radius(target, levels, eps);
    let sigma0_sq = consts.sigma0_scale * gamma_min / beta1;
    let eta = radius * radius;
    let budget = step_budget(target, levels, radius, eps, consts);
    Ok(ScheduleParams {
        betas,
        ratio,
        restriction_radius: radius,
        step_budget: budget,
        sigma0_sq,
        lambda: consts.lambda,
        eta,
        warnings,
    })
}

/// Geometric ladder with a caller-chosen level count: β_1 = γ_min/D², common
/// ratio (1/β_1)^{1/(L-1)}, top level exactly 1. R, σ_0² and η follow the
/// same formulas as `theory_schedule`; `eps` only enters the radius.
pub fn practical_schedule(
    target: &GaussianMixtureTarget,
    levels: usize,
    eps: f64,
) -> Result<ScheduleParams> {
    if levels == 0 {
        return Err(Error::Argument("levels must be at least 1".into()));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Argument(format!("eps must lie in (0,1), got {eps}")));
    }
    let gamma_min = target.gamma_min();
    let spread = target.spread();
    let beta1 = (gamma_min / (spread * spread)).min(1.0);

    let mut warnings = Vec::new();
    let (betas, ratio) = if levels == 1 {
        if beta1 < 1.0 {
            warnings.push(format!(
                "single-level ladder requested but β_1 = {beta1:.3e} < 1; running plain MH at β = 1"
            ));
        }
        (vec![1.0], 1.0)
    } else if beta1 >= 1.0 {
        warnings.push("target is already unimodal at β = 1; collapsing to a single level".into());
        (vec![1.0], 1.0)
    } else {
        let ratio = (1.0 / beta1).powf(1.0 / (levels - 1) as f64);
        let mut betas: Vec<f64> = (0..levels)
            .map(|i| beta1 * ratio.powi(i as i32))
            .collect();
        betas[levels - 1] = 1.0;
        (betas, ratio)
    };

    let l = betas.len();
    let radius = restriction_radius(target, l, eps);
    Ok(ScheduleParams {
        betas,
        ratio,
        restriction_radius: radius,
        step_budget: step_budget(target, l, radius, eps, &ScheduleConstants::default()),
        sigma0_sq: gamma_min / beta1,
        lambda: ScheduleConstants::default().lambda,
        eta: radius * radius,
        warnings,
    })
}

/// One estimation update: log Ẑ_{ℓ+1} from log Ẑ_ℓ and the potential values
/// of s samples drawn at level ℓ, via log-sum-exp.
pub fn zhat_update(log_zhat_level: f64, beta_level: f64, beta_next: f64, f_values: &[f64]) -> f64 {
    let terms: Vec<f64> = f_values
        .iter()
        .map(|&f| (beta_level - beta_next) * f)
        .collect();
    log_zhat_level + logsumexp(&terms) - (f_values.len() as f64).ln()
}

/// Default restart cap for one estimation stage.
fn default_restart_cap(level: usize, samples: usize) -> usize {
    let s = samples as f64;
    (10.0 * (2.0_f64).exp().powi(1) * std::f64::consts::E * level as f64 * s * (s + 1.0).ln())
        .ceil() as usize
}

/// Estimate partition functions level by level.
///
/// Stage ℓ runs the tempering chain on the first ℓ levels, each run for
/// `steps_per_run` steps from a fresh N(0, σ_0² I) draw, and keeps the final
/// position whenever the run ends at level ℓ; once `samples` positions are
/// collected the ratio estimate for level ℓ+1 is formed in log domain.
/// Restarts are spread across deterministic RNG streams, so the result does
/// not depend on the worker count.
pub fn estimate_partitions(
    target: &GaussianMixtureTarget,
    schedule: &ScheduleParams,
    samples: usize,
    steps_per_run: u64,
    restart_cap: Option<usize>,
    seed: u64,
) -> Result<Ladder> {
    if samples == 0 {
        return Err(Error::Argument("need at least one sample per level".into()));
    }
    let levels = schedule.levels();
    if levels == 1 {
        return Ladder::new(schedule.betas.clone(), vec![0.0]);
    }
    let mut log_zhat = vec![0.0_f64];
    for ell in 1..levels {
        // Chain over the first ell levels with the estimates so far.
        let stage = Ladder {
            betas: schedule.betas[..ell].to_vec(),
            log_zhat: log_zhat.clone(),
            weights: None,
        };
        let cfg = StConfig {
            ladder: stage,
            lambda: schedule.lambda,
            eta: schedule.eta,
            lazy: false,
            zeta: 0.0,
            seed,
        };
        let cap = restart_cap.unwrap_or_else(|| default_restart_cap(ell, samples));
        let collected = collect_level_samples(target, &cfg, schedule, ell, samples, steps_per_run, cap, seed)?;
        let f_values: Vec<f64> = collected
            .iter()
            .map(|x| target.potential_unchecked(x))
            .collect();
        let next = zhat_update(
            log_zhat[ell - 1],
            schedule.betas[ell - 1],
            schedule.betas[ell],
            &f_values,
        );
        if !next.is_finite() {
            return Err(Error::Numeric(format!(
                "partition update at level {ell} produced a non-finite value"
            )));
        }
        log_zhat.push(next);
    }
    Ladder::new(schedule.betas.clone(), log_zhat)
}

#[allow(clippy::too_many_arguments)]
fn collect_level_samples(
    target: &GaussianMixtureTarget,
    cfg: &StConfig,
    schedule: &ScheduleParams,
    level: usize,
    samples: usize,
    steps_per_run: u64,
    restart_cap: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let sigma0 = schedule.sigma0_sq.sqrt();
    let dim = target.dim();
    let mut collected: Vec<Vec<f64>> = Vec::with_capacity(samples);
    let mut scanned = 0usize;
    const CHUNK: usize = 64;
    while collected.len() < samples {
        if scanned >= restart_cap {
            return Err(Error::EstimationStall {
                level,
                restarts: scanned,
                needed: samples,
            });
        }
        let take = CHUNK.min(restart_cap - scanned);
        let runs: Vec<Result<Option<Vec<f64>>>> = (scanned..scanned + take)
            .into_par_iter()
            .map(|t| {
                let stream = ((level as u64) << 32) | t as u64;
                let mut rng = replicate_rng(seed, stream);
                let x0: Vec<f64> = (0..dim)
                    .map(|_| sigma0 * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let fin = run_chain(target, cfg, x0, 1, steps_per_run, &mut rng)?;
                Ok((fin.level == level).then_some(fin.position))
            })
            .collect();
        for run in runs {
            scanned += 1;
            if let Some(x) = run? {
                collected.push(x);
                if collected.len() == samples {
                    break;
                }
            }
        }
    }
    Ok(collected)
}

/// Level weights from log partition values and log estimates:
/// r_i = (Z_i/Ẑ_i) / Σ_k (Z_k/Ẑ_k), computed through log-sum-exp.
pub fn level_weights_from_logs(log_z: &[f64], log_zhat: &[f64]) -> Vec<f64> {
    let log_b: Vec<f64> = log_z
        .iter()
        .zip(log_zhat)
        .map(|(lz, lzh)| lz - lzh)
        .collect();
    let norm = logsumexp(&log_b);
    log_b.iter().map(|lb| (lb - norm).exp()).collect()
}

/// True level weights r_i with Z_i from quadrature (dimension 1 or 2 only)
/// and Ẑ_i from the ladder.
pub fn true_level_weights(target: &GaussianMixtureTarget, ladder: &Ladder) -> Result<Vec<f64>> {
    if target.dim() > 2 {
        return Err(Error::Argument(
            "true level weights need quadrature, which supports dimensions 1 and 2".into(),
        ));
    }
    let log_z: Vec<f64> = ladder
        .betas()
        .iter()
        .map(|&beta| quad::log_partition_function(target, beta))
        .collect::<Result<_>>()?;
    Ok(level_weights_from_logs(&log_z, ladder.log_zhat()))
}

/// Ladder whose estimates are the quadrature partition functions themselves
/// (normalized so Ẑ_1 = 1); the induced level weights are exactly uniform.
pub fn ladder_with_quadrature_zhat(
    target: &GaussianMixtureTarget,
    betas: &[f64],
) -> Result<Ladder> {
    if target.dim() > 2 {
        return Err(Error::Argument(
            "quadrature estimates support dimensions 1 and 2 only".into(),
        ));
    }
    let log_z: Vec<f64> = betas
        .iter()
        .map(|&beta| quad::log_partition_function(target, beta))
        .collect::<Result<_>>()?;
    let log_zhat: Vec<f64> = log_z.iter().map(|lz| lz - log_z[0]).collect();
    let levels = betas.len();
    Ladder::new(betas.to_vec(), log_zhat)?
        .with_weights(vec![1.0 / levels as f64; levels])
}
