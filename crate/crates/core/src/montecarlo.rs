//! Monte Carlo replication of the procedure under a normal linear model.
//!
//! Every replication draws from its own ChaCha stream keyed by
//! `(seed, replication index)`, and summaries are reduced in index order, so
//! results do not depend on the number of worker threads.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{run_procedure, DrawError, EngineError, ObservationSource};
use crate::model::{validate_config, ConfigError, ConfigParams, ProcedureConfig};
use crate::regression::{FitError, Observation};

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("invalid design: {0}")]
    InvalidDesign(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("replication {index} failed: {source}")]
    Replication {
        index: u64,
        #[source]
        source: EngineError,
    },
    #[error("replication {index}: {source}")]
    Fit {
        index: u64,
        #[source]
        source: FitError,
    },
    #[error("could not build worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

/// A normal predictor, parameterized by mean and variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictorSpec {
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationDesign {
    /// Intercept first, then one coefficient per predictor.
    pub beta_true: Vec<f64>,
    pub predictors: Vec<PredictorSpec>,
    pub error_sd: f64,
    pub cfg: ProcedureConfig,
    pub replications: usize,
    pub seed: u64,
}

pub const DEFAULT_BETA: [f64; 4] = [100.0, -4.0, 3.0, 2.0];
pub const DEFAULT_PREDICTORS: [PredictorSpec; 3] = [
    PredictorSpec {
        mean: 50.0,
        variance: 9.0,
    },
    PredictorSpec {
        mean: 200.0,
        variance: 64.0,
    },
    PredictorSpec {
        mean: 100.0,
        variance: 25.0,
    },
];
pub const DEFAULT_ERROR_SD: f64 = 2.0;

impl SimulationDesign {
    /// Three normal predictors plus intercept, `sigma = 2`, `rho = 0.8`, `m0 = 2`.
    pub fn reference(b: f64, k: usize, replications: usize, seed: u64) -> Result<Self, StudyError> {
        let cfg = validate_config(ConfigParams {
            rho: 0.8,
            k,
            m0: 2,
            p: DEFAULT_BETA.len(),
            b,
        })?;
        let design = Self {
            beta_true: DEFAULT_BETA.to_vec(),
            predictors: DEFAULT_PREDICTORS.to_vec(),
            error_sd: DEFAULT_ERROR_SD,
            cfg,
            replications,
            seed,
        };
        design.validate()?;
        Ok(design)
    }

    pub fn p(&self) -> usize {
        self.beta_true.len()
    }

    /// `error_sd = 0` is accepted and gives noiseless data.
    pub fn validate(&self) -> Result<(), StudyError> {
        if self.beta_true.len() != self.predictors.len() + 1 {
            return Err(StudyError::InvalidDesign(format!(
                "{} coefficients for {} predictors plus intercept",
                self.beta_true.len(),
                self.predictors.len()
            )));
        }
        if self.cfg.p() != self.p() {
            return Err(StudyError::InvalidDesign(format!(
                "config p = {} but design has {} parameters",
                self.cfg.p(),
                self.p()
            )));
        }
        if !(self.error_sd >= 0.0 && self.error_sd.is_finite()) {
            return Err(StudyError::InvalidDesign(format!(
                "error_sd = {}",
                self.error_sd
            )));
        }
        if let Some(bad) = self
            .predictors
            .iter()
            .find(|s| !(s.variance >= 0.0 && s.variance.is_finite() && s.mean.is_finite()))
        {
            return Err(StudyError::InvalidDesign(format!("predictor spec {bad:?}")));
        }
        if self.beta_true.iter().any(|b| !b.is_finite()) {
            return Err(StudyError::InvalidDesign("non-finite coefficient".into()));
        }
        if self.replications == 0 {
            return Err(StudyError::InvalidDesign(
                "replications must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// `p * sigma^2 / b`, reported unrounded.
    pub fn n_star(&self) -> f64 {
        self.p() as f64 * self.error_sd * self.error_sd / self.cfg.b()
    }
}

/// Independent, reproducible stream for one replication.
pub fn seed_stream(seed: u64, replication_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication_index);
    rng
}

/// Never-exhausting source drawing rows from the design.
pub struct GenerativeSource<'a, R> {
    design: &'a SimulationDesign,
    predictors: Vec<Normal<f64>>,
    noise: Normal<f64>,
    rng: R,
}

impl<'a, R: Rng> GenerativeSource<'a, R> {
    pub fn new(design: &'a SimulationDesign, rng: R) -> Result<Self, StudyError> {
        let normal = |mean: f64, sd: f64| {
            Normal::new(mean, sd).map_err(|e| StudyError::InvalidDesign(e.to_string()))
        };
        let predictors = design
            .predictors
            .iter()
            .map(|s| normal(s.mean, s.variance.sqrt()))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            design,
            predictors,
            noise: normal(0.0, design.error_sd)?,
            rng,
        })
    }

    pub fn next_row(&mut self) -> Observation {
        let mut x = Vec::with_capacity(self.predictors.len() + 1);
        x.push(1.0);
        for d in &self.predictors {
            x.push(d.sample(&mut self.rng));
        }
        let mean: f64 = x
            .iter()
            .zip(&self.design.beta_true)
            .map(|(a, b)| a * b)
            .sum();
        Observation {
            y: mean + self.noise.sample(&mut self.rng),
            x,
        }
    }
}

impl<R: Rng> ObservationSource for GenerativeSource<'_, R> {
    fn draw(&mut self, count: usize) -> Result<Vec<Observation>, DrawError> {
        Ok((0..count).map(|_| self.next_row()).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicationOutcome {
    pub n_final: usize,
    pub sigma_hat: f64,
    /// Plug-in risk `p * S^2_N / N` at the final sample size.
    pub risk: f64,
    /// Realized loss `N^-1 (b - beta)' X'X (b - beta)` against the true coefficients.
    pub loss: f64,
}

/// One run of the procedure; returns `N`, `sqrt(S^2_N)`, the plug-in risk
/// and the realized loss.
pub fn simulate_replication<R: Rng>(
    design: &SimulationDesign,
    rng: R,
) -> Result<ReplicationOutcome, EngineError> {
    let mut source = GenerativeSource::new(design, rng)
        .map_err(|e| EngineError::Source(e.to_string().into()))?;
    let res = run_procedure(&design.cfg, &mut source)?;
    let sol = res.fit.solve()?;
    Ok(ReplicationOutcome {
        n_final: res.n_final,
        sigma_hat: sol.s2.sqrt(),
        risk: design.p() as f64 * sol.s2 / res.n_final as f64,
        loss: res.fit.loss(&design.beta_true)?,
    })
}

/// Runs every replication on `workers` threads (0 = rayon default), in index order.
pub fn run_replications(
    design: &SimulationDesign,
    workers: usize,
) -> Result<Vec<ReplicationOutcome>, StudyError> {
    design.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()?;
    pool.install(|| {
        (0..design.replications as u64)
            .into_par_iter()
            .map(|i| {
                simulate_replication(design, seed_stream(design.seed, i))
                    .map_err(|source| StudyError::Replication { index: i, source })
            })
            .collect()
    })
}

/// Summary statistics of a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSummary {
    pub replications: usize,
    pub b: f64,
    pub n_star: f64,
    pub r_star: f64,
    pub n_bar: f64,
    pub se_n: f64,
    pub ratio: f64,
    pub diff: f64,
    pub sigma_bar: f64,
    pub se_sigma: f64,
    pub r_bar: f64,
    pub se_r: f64,
    pub loss_bar: f64,
    pub se_loss: f64,
    pub n_min: usize,
    pub n_max: usize,
}

/// Mean and `sqrt(sum (x - mean)^2 / (R^2 - R))`, the latter 0 when `R = 1`.
pub fn mean_and_se(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let r = values.clone().count();
    if r == 0 {
        return (f64::NAN, 0.0);
    }
    let mean = values.clone().sum::<f64>() / r as f64;
    if r == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    let rf = r as f64;
    (mean, (ss / (rf * rf - rf)).sqrt())
}

pub fn summarize(design: &SimulationDesign, outcomes: &[ReplicationOutcome]) -> ReplicationSummary {
    if outcomes.len() == 1 {
        log::warn!("a single replication has no standard error; reporting 0");
    }
    let (n_bar, se_n) = mean_and_se(outcomes.iter().map(|o| o.n_final as f64));
    let (sigma_bar, se_sigma) = mean_and_se(outcomes.iter().map(|o| o.sigma_hat));
    let (r_bar, se_r) = mean_and_se(outcomes.iter().map(|o| o.risk));
    let (loss_bar, se_loss) = mean_and_se(outcomes.iter().map(|o| o.loss));
    let n_star = design.n_star();
    let r_star = if n_star > 0.0 {
        design.p() as f64 * design.error_sd * design.error_sd / n_star
    } else {
        0.0
    };
    ReplicationSummary {
        replications: outcomes.len(),
        b: design.cfg.b(),
        n_star,
        r_star,
        n_bar,
        se_n,
        ratio: n_bar / n_star,
        diff: n_bar - n_star,
        sigma_bar,
        se_sigma,
        r_bar,
        se_r,
        loss_bar,
        se_loss,
        n_min: outcomes.iter().map(|o| o.n_final).min().unwrap_or(0),
        n_max: outcomes.iter().map(|o| o.n_final).max().unwrap_or(0),
    }
}

pub fn run_study(design: &SimulationDesign) -> Result<ReplicationSummary, StudyError> {
    run_study_with_workers(design, 0)
}

pub fn run_study_with_workers(
    design: &SimulationDesign,
    workers: usize,
) -> Result<ReplicationSummary, StudyError> {
    let outcomes = run_replications(design, workers)?;
    Ok(summarize(design, &outcomes))
}

/// Average loss of the fixed-size estimator over `replications` samples of
/// `n` rows; returns `(mean, standard error)`.
pub fn fixed_n_risk(
    design: &SimulationDesign,
    n: usize,
    replications: usize,
) -> Result<(f64, f64), StudyError> {
    let losses = (0..replications as u64)
        .into_par_iter()
        .map(|i| {
            let mut src = GenerativeSource::new(design, seed_stream(design.seed, i))?;
            let rows: Vec<_> = (0..n).map(|_| src.next_row()).collect();
            crate::regression::RegressionFit::from_rows(&rows, design.p())
                .and_then(|f| f.loss(&design.beta_true))
                .map_err(|source| StudyError::Fit { index: i, source })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(mean_and_se(losses.iter().copied()))
}
