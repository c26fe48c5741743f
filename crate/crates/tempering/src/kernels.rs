//! Random-walk Metropolis-Hastings local kernel and the simulated-tempering
//! composite step.
//!
//! A tempering step first (optionally) holds in place with probability ζ,
//! then flips a λ-coin: position moves propose x' ~ N(x, ηI) against the
//! current level's tempered density, level moves propose i ± 1 with equal
//! probability and accept with
//!
//!   log a = min{0, (β_i - β_i') f(x) + log Ẑ_i - log Ẑ_i'},
//!
//! so only the estimated normalizers enter. Proposals outside [1, L] are
//! rejected outright. A single-level ladder degenerates to plain RWMH: no
//! level coin is drawn, and the trajectory is bit-identical to a pure
//! random-walk run on the same stream.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::ladder::Ladder;
use crate::target::GaussianMixtureTarget;

/// Current (level, position) of the tempering chain. Levels are 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct StState {
    pub level: usize,
    pub position: Vec<f64>,
}

/// Parameters of the simulated-tempering chain.
#[derive(Debug, Clone)]
pub struct StConfig {
    pub ladder: Ladder,
    /// Probability of attempting a level move.
    pub lambda: f64,
    /// Proposal variance scale; the proposal covariance is ηI.
    pub eta: f64,
    /// Hold in place with probability ζ before anything else.
    pub lazy: bool,
    pub zeta: f64,
    /// Root seed; replicate streams derive from it via `replicate_rng`.
    pub seed: u64,
}

impl StConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::Argument(format!(
                "lambda must lie in (0,1), got {}",
                self.lambda
            )));
        }
        if !(self.eta > 0.0) {
            return Err(Error::Argument(format!("eta must be positive, got {}", self.eta)));
        }
        if !(0.0..=0.5).contains(&self.zeta) {
            return Err(Error::Argument(format!(
                "zeta must lie in [0, 1/2], got {}",
                self.zeta
            )));
        }
        Ok(())
    }
}

/// Counter-based stream for one replicate: the same (seed, stream) pair gives
/// a bit-identical trajectory on any machine and any thread schedule.
pub fn replicate_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Metropolis log-acceptance min{0, logπ(y) - logπ(x)}.
#[inline]
pub fn mh_log_accept(log_pi_current: f64, log_pi_proposal: f64) -> f64 {
    (log_pi_proposal - log_pi_current).min(0.0)
}

/// Level-move log-acceptance in the estimated-normalizer form.
#[inline]
pub fn level_log_accept(
    beta_from: f64,
    beta_to: f64,
    potential_at_x: f64,
    log_zhat_from: f64,
    log_zhat_to: f64,
) -> f64 {
    ((beta_from - beta_to) * potential_at_x + log_zhat_from - log_zhat_to).min(0.0)
}

/// One random-walk Metropolis-Hastings step against `log_pi` with proposal
/// y = x + sqrt(η) z. Returns the next position and the acceptance flag.
pub fn rwmh_step<F, R>(log_pi: F, x: &[f64], eta: f64, rng: &mut R) -> Result<(Vec<f64>, bool)>
where
    F: Fn(&[f64]) -> f64,
    R: Rng + ?Sized,
{
    if !(eta > 0.0) {
        return Err(Error::Argument(format!("eta must be positive, got {eta}")));
    }
    let current = log_pi(x);
    if !current.is_finite() {
        return Err(Error::State(
            "log density at the current point is not finite".into(),
        ));
    }
    let sqrt_eta = eta.sqrt();
    let proposal: Vec<f64> = x
        .iter()
        .map(|&xi| xi + sqrt_eta * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let log_accept = mh_log_accept(current, log_pi(&proposal));
    let u: f64 = rng.gen();
    if u.ln() < log_accept {
        Ok((proposal, true))
    } else {
        Ok((x.to_vec(), false))
    }
}

/// One simulated-tempering step.
pub fn st_step<R: Rng + ?Sized>(
    target: &GaussianMixtureTarget,
    cfg: &StConfig,
    state: &StState,
    rng: &mut R,
) -> Result<StState> {
    let mut out = state.clone();
    let mut f_cur = target.potential(&state.position)?;
    if !f_cur.is_finite() {
        return Err(Error::State("potential at the current point is not finite".into()));
    }
    let mut scratch = vec![0.0; state.position.len()];
    step_in_place(target, cfg, &mut out.level, &mut out.position, &mut f_cur, &mut scratch, rng)?;
    Ok(out)
}

#[inline]
#[allow(clippy::too_many_arguments)]
fn step_in_place<R: Rng + ?Sized>(
    target: &GaussianMixtureTarget,
    cfg: &StConfig,
    level: &mut usize,
    x: &mut Vec<f64>,
    f_cur: &mut f64,
    proposal: &mut Vec<f64>,
    rng: &mut R,
) -> Result<()> {
    if cfg.lazy && rng.gen::<f64>() < cfg.zeta {
        return Ok(());
    }
    let levels = cfg.ladder.levels();
    let do_level_move = levels > 1 && rng.gen::<f64>() < cfg.lambda;
    if do_level_move {
        let down = rng.gen::<f64>() < 0.5;
        let candidate = if down { *level - 1 } else { *level + 1 };
        if candidate >= 1 && candidate <= levels {
            let log_accept = level_log_accept(
                cfg.ladder.beta(*level),
                cfg.ladder.beta(candidate),
                *f_cur,
                cfg.ladder.log_zhat_at(*level),
                cfg.ladder.log_zhat_at(candidate),
            );
            if rng.gen::<f64>().ln() < log_accept {
                *level = candidate;
            }
        }
    } else {
        let sqrt_eta = cfg.eta.sqrt();
        for (p, &xi) in proposal.iter_mut().zip(x.iter()) {
            *p = xi + sqrt_eta * rng.sample::<f64, _>(StandardNormal);
        }
        let f_prop = target.potential_unchecked(proposal);
        let beta = cfg.ladder.beta(*level);
        let log_accept = mh_log_accept(-beta * *f_cur, -beta * f_prop);
        if rng.gen::<f64>().ln() < log_accept {
            std::mem::swap(x, proposal);
            *f_cur = f_prop;
        }
    }
    Ok(())
}

/// Run the chain for `steps` steps from (i0, x0), invoking `on_step` after
/// every step with the 1-based step index and the current state.
pub fn run_chain_with<R, F>(
    target: &GaussianMixtureTarget,
    cfg: &StConfig,
    x0: Vec<f64>,
    i0: usize,
    steps: u64,
    rng: &mut R,
    mut on_step: F,
) -> Result<StState>
where
    R: Rng + ?Sized,
    F: FnMut(u64, usize, &[f64]),
{
    cfg.validate()?;
    if i0 < 1 || i0 > cfg.ladder.levels() {
        return Err(Error::Argument(format!(
            "initial level {i0} outside [1, {}]",
            cfg.ladder.levels()
        )));
    }
    let mut x = x0;
    let mut f_cur = target.potential(&x)?;
    if !f_cur.is_finite() {
        return Err(Error::State("potential at the initial point is not finite".into()));
    }
    let mut level = i0;
    let mut proposal = vec![0.0; x.len()];
    for step in 1..=steps {
        step_in_place(target, cfg, &mut level, &mut x, &mut f_cur, &mut proposal, rng)?;
        on_step(step, level, &x);
    }
    Ok(StState { level, position: x })
}

/// Run the chain and return the final state.
pub fn run_chain<R: Rng + ?Sized>(
    target: &GaussianMixtureTarget,
    cfg: &StConfig,
    x0: Vec<f64>,
    i0: usize,
    steps: u64,
    rng: &mut R,
) -> Result<StState> {
    run_chain_with(target, cfg, x0, i0, steps, rng, |_, _, _| {})
}

/// Run the chain recording every `record_every`-th state.
pub fn run_chain_traced<R: Rng + ?Sized>(
    target: &GaussianMixtureTarget,
    cfg: &StConfig,
    x0: Vec<f64>,
    i0: usize,
    steps: u64,
    rng: &mut R,
    record_every: u64,
) -> Result<Vec<StState>> {
    if record_every == 0 {
        return Err(Error::Argument("record_every must be at least 1".into()));
    }
    let mut trace = Vec::new();
    run_chain_with(target, cfg, x0, i0, steps, rng, |step, level, x| {
        if step % record_every == 0 {
            trace.push(StState {
                level,
                position: x.to_vec(),
            });
        }
    })?;
    Ok(trace)
}
