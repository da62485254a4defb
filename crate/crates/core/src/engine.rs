//! The accelerated k-at-a-time sequential procedure.
//!
//! Starting from a pilot of `m` rows, `k` rows are drawn per step until
//! `m + k*n >= rho * p * S^2 / b`. The stopping step `T` projects a total of
//! `N* = (m + k*T) / rho`; the shortfall up to `N = strict_floor(N*) + 1` is
//! drawn in a single batch and the final fit uses all `N` rows.

use std::error::Error as StdError;
use std::fmt;

use thiserror::Error;

use crate::model::{final_sample_size, ProcedureConfig};
use crate::regression::{FitError, Observation, RegressionFit};

pub type BoxError = Box<dyn StdError + Send + Sync>;

#[derive(Debug, Error)]
pub enum DrawError {
    /// Fewer rows remained than requested. `rows` holds what was available.
    #[error("source exhausted: {} of {requested} requested rows available", .rows.len())]
    Exhausted {
        requested: usize,
        rows: Vec<Observation>,
    },
    #[error(transparent)]
    Failed(BoxError),
}

impl DrawError {
    pub fn available(&self) -> Option<usize> {
        match self {
            DrawError::Exhausted { rows, .. } => Some(rows.len()),
            DrawError::Failed(_) => None,
        }
    }
}

/// Supplies observations in a stable order, never repeating a row.
pub trait ObservationSource {
    /// Returns exactly `count` rows, or [`DrawError::Exhausted`] with the
    /// rows that were still available.
    fn draw(&mut self, count: usize) -> Result<Vec<Observation>, DrawError>;
}

impl<S: ObservationSource + ?Sized> ObservationSource for &mut S {
    fn draw(&mut self, count: usize) -> Result<Vec<Observation>, DrawError> {
        (**self).draw(count)
    }
}

impl<S: ObservationSource + ?Sized> ObservationSource for Box<S> {
    fn draw(&mut self, count: usize) -> Result<Vec<Observation>, DrawError> {
        (**self).draw(count)
    }
}

/// Source backed by an in-memory list of rows.
#[derive(Debug, Clone)]
pub struct VecSource {
    rows: std::vec::IntoIter<Observation>,
}

impl VecSource {
    pub fn new(rows: Vec<Observation>) -> Self {
        Self {
            rows: rows.into_iter(),
        }
    }
}

impl ObservationSource for VecSource {
    fn draw(&mut self, count: usize) -> Result<Vec<Observation>, DrawError> {
        let rows: Vec<_> = self.rows.by_ref().take(count).collect();
        if rows.len() < count {
            return Err(DrawError::Exhausted {
                requested: count,
                rows,
            });
        }
        Ok(rows)
    }
}

/// Supplies the variance estimate the stopping rule compares against.
pub trait VarianceTracker {
    fn absorb(&mut self, rows: &[Observation]);
    /// `None` while the estimate is undefined (too few rows or a singular design).
    fn current_s2(&self) -> Option<f64>;
}

impl VarianceTracker for RegressionFit {
    fn absorb(&mut self, rows: &[Observation]) {
        // dimension errors are caught on the engine's own fit first
        let _ = self.update(rows);
    }

    fn current_s2(&self) -> Option<f64> {
        self.solve().ok().map(|s| s.s2)
    }
}

/// Outcome of a completed run.
#[derive(Debug, Clone)]
pub struct StoppingResult {
    /// Number of sequential steps `T`.
    pub t_steps: usize,
    /// `m + k*T`.
    pub sequential_n: usize,
    /// `N* = (m + k*T) / rho`.
    pub n_projected: f64,
    /// `N = strict_floor(N*) + 1`.
    pub n_final: usize,
    pub fit: RegressionFit,
}

/// One evaluation of the stopping rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub step: usize,
    pub sample_size: usize,
    pub s2: Option<f64>,
    pub threshold: Option<f64>,
    pub stopped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Pilot,
    Sequential,
    TopUp,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Pilot => "pilot",
            Phase::Sequential => "sequential",
            Phase::TopUp => "top-up",
        })
    }
}

/// State at the moment a run could not continue.
#[derive(Debug, Clone)]
pub struct PartialRun {
    pub phase: Phase,
    /// Rows absorbed, including any partial final batch.
    pub obtained: usize,
    /// Sample size the run was trying to reach.
    pub needed: usize,
    pub steps: usize,
    pub fit: RegressionFit,
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("source exhausted during {} stage: obtained {} of {} rows", .0.phase, .0.obtained, .0.needed)]
    SourceExhausted(Box<PartialRun>),
    #[error("variance undefined after the pilot and the source ran out after {} rows", .0.obtained)]
    RankDeficientPilot(Box<PartialRun>),
    #[error("observation source failed: {0}")]
    Source(#[source] BoxError),
    #[error(transparent)]
    Fit(#[from] FitError),
}

impl EngineError {
    pub fn partial(&self) -> Option<&PartialRun> {
        match self {
            EngineError::SourceExhausted(p) | EngineError::RankDeficientPilot(p) => Some(p),
            _ => None,
        }
    }
}

struct Run<'a, S: ?Sized, V: ?Sized> {
    source: &'a mut S,
    tracker: &'a mut V,
    fit: RegressionFit,
    steps: usize,
}

impl<S: ObservationSource + ?Sized, V: VarianceTracker + ?Sized> Run<'_, S, V> {
    fn take(&mut self, count: usize, phase: Phase, needed: usize) -> Result<(), EngineError> {
        if count == 0 {
            return Ok(());
        }
        match self.source.draw(count) {
            Ok(rows) => self.absorb(&rows),
            Err(DrawError::Exhausted { rows, .. }) => {
                self.absorb(&rows)?;
                let partial = Box::new(PartialRun {
                    phase,
                    obtained: self.fit.n(),
                    needed,
                    steps: self.steps,
                    fit: self.fit.clone(),
                });
                if phase == Phase::Sequential && self.tracker.current_s2().is_none() {
                    Err(EngineError::RankDeficientPilot(partial))
                } else {
                    Err(EngineError::SourceExhausted(partial))
                }
            }
            Err(DrawError::Failed(e)) => Err(EngineError::Source(e)),
        }
    }

    fn absorb(&mut self, rows: &[Observation]) -> Result<(), EngineError> {
        self.fit.update(rows)?;
        self.tracker.absorb(rows);
        Ok(())
    }
}

/// Runs the procedure with an explicit variance tracker and optional trace.
pub fn run_procedure_with<S, V>(
    cfg: &ProcedureConfig,
    source: &mut S,
    tracker: &mut V,
    mut trace: Option<&mut Vec<TraceEntry>>,
) -> Result<StoppingResult, EngineError>
where
    S: ObservationSource + ?Sized,
    V: VarianceTracker + ?Sized,
{
    let mut run = Run {
        source,
        tracker,
        fit: RegressionFit::new(cfg.p()),
        steps: 0,
    };
    run.take(cfg.m(), Phase::Pilot, cfg.m())?;

    loop {
        let sample_size = cfg.sequential_size(run.steps);
        let s2 = run.tracker.current_s2();
        let threshold = s2.map(|v| cfg.threshold(v));
        let stopped = threshold.is_some_and(|t| sample_size as f64 >= t);
        if let Some(trace) = trace.as_deref_mut() {
            trace.push(TraceEntry {
                step: run.steps,
                sample_size,
                s2,
                threshold,
                stopped,
            });
        }
        if stopped {
            break;
        }
        if s2.is_none() && run.steps == 0 {
            log::warn!("variance undefined after the pilot; continuing to sample");
        }
        run.take(cfg.k(), Phase::Sequential, sample_size + cfg.k())?;
        run.steps += 1;
    }

    let sequential_n = cfg.sequential_size(run.steps);
    let n_projected = sequential_n as f64 / cfg.rho();
    let n_final = final_sample_size(n_projected).max(sequential_n);
    run.take(n_final - sequential_n, Phase::TopUp, n_final)?;

    Ok(StoppingResult {
        t_steps: run.steps,
        sequential_n,
        n_projected,
        n_final,
        fit: run.fit,
    })
}

/// Runs the procedure with the least-squares variance estimate.
pub fn run_procedure<S: ObservationSource + ?Sized>(
    cfg: &ProcedureConfig,
    source: &mut S,
) -> Result<StoppingResult, EngineError> {
    let mut tracker = RegressionFit::new(cfg.p());
    run_procedure_with(cfg, source, &mut tracker, None)
}

/// As [`run_procedure`], also recording every stopping-rule evaluation.
pub fn run_procedure_traced<S: ObservationSource + ?Sized>(
    cfg: &ProcedureConfig,
    source: &mut S,
) -> Result<(StoppingResult, Vec<TraceEntry>), EngineError> {
    let mut tracker = RegressionFit::new(cfg.p());
    let mut trace = Vec::new();
    let result = run_procedure_with(cfg, source, &mut tracker, Some(&mut trace))?;
    Ok((result, trace))
}
