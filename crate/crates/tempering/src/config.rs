//! Declarative run configuration: one TOML file with nested sections for the
//! target, schedule, sampler, partition estimation, verification suite, and
//! experiments. Every numeric default lives here.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{AccuracyConfig, ScalingConfig, ZhatSource};
use crate::ladder::{practical_schedule, theory_schedule, ScheduleConstants, ScheduleParams};
use crate::target::GaussianMixtureTarget;

/// Root of the config file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Root seed; the CLI flag takes precedence.
    pub seed: Option<u64>,
    pub target: Option<TargetConfig>,
    pub schedule: Option<ScheduleConfig>,
    pub sampler: Option<SamplerConfig>,
    pub estimate: Option<EstimateConfig>,
    pub verify: Option<VerifyConfig>,
    pub experiment: Option<ExperimentConfig>,
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Apply one `section.field=value` override onto the raw TOML document
    /// before deserialization.
    pub fn apply_override(doc: &mut toml::Table, assignment: &str) -> Result<()> {
        let (path, value) = assignment.split_once('=').ok_or_else(|| {
            Error::Config(format!("override '{assignment}' is not of the form key=value"))
        })?;
        let parsed: toml::Value = toml::from_str(&format!("v = {value}"))
            .map(|t: toml::Table| t["v"].clone())
            .or_else(|_| toml::from_str(&format!("v = \"{value}\"")).map(|t: toml::Table| t["v"].clone()))
            .map_err(|e| Error::Config(format!("cannot parse override value '{value}': {e}")))?;
        let mut keys: Vec<&str> = path.trim().split('.').collect();
        let last = keys
            .pop()
            .ok_or_else(|| Error::Config(format!("empty override path in '{assignment}'")))?;
        let mut cursor = doc;
        for k in keys {
            cursor = cursor
                .entry(k.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("'{k}' is not a table")))?;
        }
        cursor.insert(last.to_string(), parsed);
        Ok(())
    }

    pub fn require_target(&self) -> Result<GaussianMixtureTarget> {
        self.target
            .as_ref()
            .ok_or_else(|| Error::Config("missing [target] section".into()))?
            .build()
    }

    pub fn require_schedule(&self, target: &GaussianMixtureTarget) -> Result<ScheduleParams> {
        self.schedule
            .as_ref()
            .ok_or_else(|| Error::Config("missing [schedule] section".into()))?
            .build(target)
    }
}

/// Covariance: the string "identity", a scalar variance, or a full matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CovarianceSpec {
    Named(String),
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    /// Mode separation of the built-in two-mode plane benchmark; mutually
    /// exclusive with explicit means/weights.
    pub benchmark_separation: Option<f64>,
    pub means: Option<Vec<Vec<f64>>>,
    pub weights: Option<Vec<f64>>,
    pub covariance: Option<CovarianceSpec>,
}

impl TargetConfig {
    pub fn build(&self) -> Result<GaussianMixtureTarget> {
        if let Some(sep) = self.benchmark_separation {
            if self.means.is_some() || self.weights.is_some() || self.covariance.is_some() {
                return Err(Error::Config(
                    "benchmark_separation excludes explicit means/weights/covariance".into(),
                ));
            }
            return crate::experiments::benchmark_target(sep);
        }
        let means = self
            .means
            .clone()
            .ok_or_else(|| Error::Config("target.means is required".into()))?;
        let dim = means.first().map(|m| m.len()).unwrap_or(0);
        let weights = match &self.weights {
            Some(w) => w.clone(),
            None => vec![1.0 / means.len() as f64; means.len()],
        };
        let cov = match &self.covariance {
            None => DMatrix::identity(dim, dim),
            Some(CovarianceSpec::Named(name)) if name == "identity" => {
                DMatrix::identity(dim, dim)
            }
            Some(CovarianceSpec::Named(other)) => {
                return Err(Error::Config(format!(
                    "unknown covariance name '{other}' (only \"identity\")"
                )));
            }
            Some(CovarianceSpec::Scalar(v)) => DMatrix::identity(dim, dim) * *v,
            Some(CovarianceSpec::Matrix(rows)) => {
                let n = rows.len();
                if rows.iter().any(|r| r.len() != n) {
                    return Err(Error::Config("covariance matrix must be square".into()));
                }
                DMatrix::from_fn(n, n, |i, j| rows[i][j])
            }
        };
        GaussianMixtureTarget::new(means, cov, weights)
    }
}

fn default_epsilon() -> f64 {
    0.1
}
fn default_lambda() -> f64 {
    0.3
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    /// "practical" (default) or "theory".
    pub kind: Option<String>,
    /// Level count for the practical schedule.
    pub levels: Option<usize>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Override the schedule's step size η (default η = R²).
    pub eta: Option<f64>,
    pub beta1_scale: Option<f64>,
    pub sigma0_scale: Option<f64>,
    pub budget_scale: Option<f64>,
    pub budget_rate: Option<f64>,
}

impl ScheduleConfig {
    pub fn build(&self, target: &GaussianMixtureTarget) -> Result<ScheduleParams> {
        let kind = self.kind.as_deref().unwrap_or("practical");
        let mut params = match kind {
            "practical" => {
                let levels = self.levels.ok_or_else(|| {
                    Error::Config("schedule.levels is required for the practical schedule".into())
                })?;
                practical_schedule(target, levels, self.epsilon)?
            }
            "theory" => {
                let mut consts = ScheduleConstants {
                    lambda: self.lambda,
                    ..ScheduleConstants::default()
                };
                if let Some(v) = self.beta1_scale {
                    consts.beta1_scale = v;
                }
                if let Some(v) = self.sigma0_scale {
                    consts.sigma0_scale = v;
                }
                if let Some(v) = self.budget_scale {
                    consts.budget_scale = v;
                }
                if let Some(v) = self.budget_rate {
                    consts.budget_rate = v;
                }
                theory_schedule(target, self.epsilon, &consts)?
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown schedule.kind '{other}' (practical | theory)"
                )));
            }
        };
        params.lambda = self.lambda;
        if let Some(eta) = self.eta {
            if !(eta > 0.0) {
                return Err(Error::Config("schedule.eta must be positive".into()));
            }
            params.eta = eta;
        }
        Ok(params)
    }
}

/// Partition-estimate source shared by sampler and experiment sections.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum ZhatKind {
    /// Exact values from quadrature (dimension ≤ 2).
    Quadrature,
    /// Staged estimation runs.
    Estimate,
    /// All estimates set to 1.
    Unit,
}

fn default_zhat() -> ZhatKind {
    ZhatKind::Quadrature
}
fn default_record_every() -> u64 {
    1
}
fn default_init_level() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub steps: u64,
    pub init: Vec<f64>,
    #[serde(default = "default_init_level")]
    pub init_level: usize,
    #[serde(default = "default_record_every")]
    pub record_every: u64,
    #[serde(default)]
    pub lazy: bool,
    #[serde(default)]
    pub zeta: f64,
    #[serde(default = "default_zhat")]
    pub zhat: ZhatKind,
}

fn default_samples_per_level() -> usize {
    128
}
fn default_steps_per_run() -> u64 {
    1_000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    #[serde(default = "default_samples_per_level")]
    pub samples_per_level: usize,
    #[serde(default = "default_steps_per_run")]
    pub steps_per_run: u64,
    /// Restart cap per level; 0 means the built-in default.
    #[serde(default)]
    pub restart_cap: usize,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self {
            samples_per_level: default_samples_per_level(),
            steps_per_run: default_steps_per_run(),
            restart_cap: 0,
        }
    }
}

impl EstimateConfig {
    pub fn cap(&self) -> Option<usize> {
        (self.restart_cap > 0).then_some(self.restart_cap)
    }
}

fn default_instances() -> usize {
    20
}
fn default_verify_lambda() -> f64 {
    1.0 / 3.0
}
fn default_verify_zeta() -> f64 {
    0.5
}
fn default_min_points() -> usize {
    48
}
fn default_max_points() -> usize {
    64
}
fn default_phi_floor() -> f64 {
    0.78
}
fn default_trials() -> usize {
    100
}
fn default_mixing_eps() -> f64 {
    0.1
}
fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default = "default_instances")]
    pub instances: usize,
    #[serde(default = "one_u64")]
    pub start_seed: u64,
    #[serde(default = "default_verify_lambda")]
    pub lambda: f64,
    #[serde(default = "default_verify_zeta")]
    pub zeta: f64,
    #[serde(default = "default_min_points")]
    pub min_points: usize,
    #[serde(default = "default_max_points")]
    pub max_points: usize,
    #[serde(default = "default_phi_floor")]
    pub phi_floor: f64,
    #[serde(default = "default_trials")]
    pub dirichlet_trials: usize,
    #[serde(default = "default_trials")]
    pub path_trials: usize,
    #[serde(default = "default_mixing_eps")]
    pub mixing_eps: f64,
    /// Testing hook: scales C₃ before the bound check; leave at 1.
    #[serde(default = "one")]
    pub c3_scale_hook: f64,
}

fn one_u64() -> u64 {
    1
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            instances: default_instances(),
            start_seed: 1,
            lambda: default_verify_lambda(),
            zeta: default_verify_zeta(),
            min_points: default_min_points(),
            max_points: default_max_points(),
            phi_floor: default_phi_floor(),
            dirichlet_trials: default_trials(),
            path_trials: default_trials(),
            mixing_eps: default_mixing_eps(),
            c3_scale_hook: 1.0,
        }
    }
}

fn default_separations() -> Vec<f64> {
    vec![8.0, 12.0, 16.0, 20.0]
}
fn default_replicates() -> usize {
    500
}
fn default_threshold() -> f64 {
    0.1
}
fn default_levels() -> usize {
    8
}
fn default_eta() -> f64 {
    2.0
}
fn default_eta_mh() -> f64 {
    40.0
}
fn default_n_max() -> u64 {
    500_000
}
fn default_scan_record_every() -> u64 {
    250
}
fn default_init() -> Vec<f64> {
    vec![10.0, 10.0]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// "scaling" or "accuracy".
    pub kind: String,
    #[serde(default = "default_separations")]
    pub separations: Vec<f64>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_levels")]
    pub levels: usize,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// Baseline proposal variance; defaults to `default_eta_mh`.
    #[serde(default = "default_eta_mh")]
    pub eta_mh: f64,
    #[serde(default = "default_n_max")]
    pub n_max: u64,
    #[serde(default = "default_scan_record_every")]
    pub record_every: u64,
    #[serde(default = "default_init")]
    pub init: Vec<f64>,
    #[serde(default = "default_zhat")]
    pub zhat: ZhatKind,
    /// Accuracy runs: fixed separation.
    pub separation: Option<f64>,
    /// Accuracy runs: explicit step grid; when empty, a geometric grid from
    /// n_min to n_max with n_points entries is used.
    #[serde(default)]
    pub n_grid: Vec<u64>,
    pub n_min: Option<u64>,
    pub n_points: Option<usize>,
    #[serde(default)]
    pub estimate: EstimateConfig,
}

impl ExperimentConfig {
    fn zhat_source(&self) -> ZhatSource {
        match self.zhat {
            ZhatKind::Estimate => ZhatSource::Estimate {
                samples_per_level: self.estimate.samples_per_level,
                steps_per_run: self.estimate.steps_per_run,
            },
            // Unit estimates are only meaningful for hand-driven sampling
            // runs; experiments fall back to quadrature.
            ZhatKind::Quadrature | ZhatKind::Unit => ZhatSource::Quadrature,
        }
    }

    pub fn scaling(&self, seed: u64) -> Result<ScalingConfig> {
        Ok(ScalingConfig {
            separations: self.separations.clone(),
            replicates: self.replicates,
            threshold: self.threshold,
            levels: self.levels,
            lambda: self.lambda,
            eta: self.eta,
            eta_mh: self.eta_mh,
            n_max: self.n_max,
            record_every: self.record_every,
            init: self.init.clone(),
            seed,
            zhat: self.zhat_source(),
        })
    }

    pub fn accuracy(&self, seed: u64) -> Result<AccuracyConfig> {
        let separation = self
            .separation
            .ok_or_else(|| Error::Config("experiment.separation is required for accuracy".into()))?;
        let n_grid = if !self.n_grid.is_empty() {
            self.n_grid.clone()
        } else {
            let n_min = self.n_min.unwrap_or(500).max(1);
            let n_points = self.n_points.unwrap_or(24).max(2);
            let ratio = (self.n_max as f64 / n_min as f64).powf(1.0 / (n_points - 1) as f64);
            let mut grid: Vec<u64> = (0..n_points)
                .map(|k| (n_min as f64 * ratio.powi(k as i32)).round() as u64)
                .collect();
            grid.dedup();
            grid
        };
        Ok(AccuracyConfig {
            separation,
            replicates: self.replicates,
            levels: self.levels,
            lambda: self.lambda,
            eta: self.eta,
            eta_mh: self.eta_mh,
            n_grid,
            init: self.init.clone(),
            seed,
            zhat: self.zhat_source(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_minimal_config() {
        let text = r#"
            seed = 9

            [target]
            means = [[-2.0], [2.0]]
            weights = [0.5, 0.5]

            [schedule]
            levels = 3
        "#;
        let cfg = Config::from_toml_str(text).unwrap();
        assert_eq!(cfg.seed, Some(9));
        let target = cfg.require_target().unwrap();
        assert_eq!(target.dim(), 1);
        let schedule = cfg.require_schedule(&target).unwrap();
        assert_eq!(schedule.betas.len(), 3);
    }

    #[test]
    fn parse_errors_carry_position_info() {
        let bad = "[target]\nmeans = [[1.0], [2.0]\n";
        let err = Config::from_toml_str(bad).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("line"), "{msg}");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let bad = "[target]\nmeanz = [[1.0]]\n";
        assert!(Config::from_toml_str(bad).is_err());
    }

    #[test]
    fn benchmark_target_shortcut() {
        let text = "[target]\nbenchmark_separation = 12.0\n";
        let cfg = Config::from_toml_str(text).unwrap();
        let t = cfg.require_target().unwrap();
        assert_eq!(t.dim(), 2);
        assert_eq!(t.n_components(), 2);
    }

    #[test]
    fn covariance_variants() {
        for (cov, expect_gamma) in [
            ("\"identity\"", 1.0),
            ("2.5", 2.5),
            ("[[2.0, 0.0], [0.0, 2.0]]", 2.0),
        ] {
            let text = format!("[target]\nmeans = [[0.0, 0.0]]\ncovariance = {cov}\n");
            let cfg = Config::from_toml_str(&text).unwrap();
            let t = cfg.require_target().unwrap();
            assert!((t.gamma_max() - expect_gamma).abs() < 1e-12, "{cov}");
        }
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let mut doc: toml::Table = toml::from_str(
            "[experiment]\nkind = \"scaling\"\nreplicates = 10\n",
        )
        .unwrap();
        Config::apply_override(&mut doc, "experiment.replicates=25").unwrap();
        Config::apply_override(&mut doc, "experiment.eta=4.5").unwrap();
        Config::apply_override(&mut doc, "seed=3").unwrap();
        let cfg: Config = toml::Value::Table(doc).try_into().unwrap();
        let exp = cfg.experiment.unwrap();
        assert_eq!(exp.replicates, 25);
        assert!((exp.eta - 4.5).abs() < 1e-12);
        assert_eq!(cfg.seed, Some(3));
    }

    #[test]
    fn accuracy_grid_is_geometric_when_not_given() {
        let text = r#"
            [experiment]
            kind = "accuracy"
            separation = 16.0
            n_max = 8000
            n_min = 1000
            n_points = 4
        "#;
        let cfg = Config::from_toml_str(text).unwrap();
        let acc = cfg.experiment.unwrap().accuracy(1).unwrap();
        assert_eq!(acc.n_grid, vec![1000, 2000, 4000, 8000]);
    }

    #[test]
    fn theory_schedule_from_config() {
        let text = r#"
            [target]
            means = [[-2.0], [2.0]]

            [schedule]
            kind = "theory"
            epsilon = 0.2
        "#;
        let cfg = Config::from_toml_str(text).unwrap();
        let t = cfg.require_target().unwrap();
        let s = cfg.require_schedule(&t).unwrap();
        assert!(s.betas.len() > 1);
        assert!((s.betas[0] - 0.25).abs() < 1e-12);
    }
}
