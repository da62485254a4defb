use std::io::{self, Write};

use seqlearn_core::chisq::SpecialError;
use seqlearn_core::engine::PartialRun;
use seqlearn_core::ingest::interleave_sources;
use seqlearn_core::montecarlo::{run_study_with_workers, PredictorSpec, StudyError};
use seqlearn_core::{
    eta, open_csv_source, projected_overshoot, run_procedure_with, validate_config, ColumnSpec,
    ConfigError, ConfigParams, DataSchema, EngineError, IngestError, RegressionFit,
    SimulationDesign, TraceEntry,
};
use thiserror::Error;

use crate::args::{EtaArgs, Format, OutputArgs, ProcedureArgs, RunArgs, SimulateArgs};
use crate::report::{
    Coefficient, CommandEcho, EtaResult, Provenance, Report, ResultPayload, RunResult, Shortfall,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Special(SpecialError),
    #[error(transparent)]
    Study(StudyError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Engine(EngineError),
    #[error("cannot write report: {0}")]
    Output(#[from] io::Error),
    #[error("cannot serialize report: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// 2 for bad invocations, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<StudyError> for CliError {
    fn from(e: StudyError) -> Self {
        match e {
            StudyError::InvalidDesign(_) | StudyError::Config(_) => CliError::Usage(e.to_string()),
            e => CliError::Study(e),
        }
    }
}

impl From<SpecialError> for CliError {
    fn from(e: SpecialError) -> Self {
        match e {
            SpecialError::InvalidArgument { .. } => CliError::Usage(e.to_string()),
            e => CliError::Special(e),
        }
    }
}

fn params(p: &ProcedureArgs, parameters: usize) -> ConfigParams {
    ConfigParams {
        rho: p.rho,
        k: p.k,
        m0: p.m0,
        p: parameters,
        b: p.b,
    }
}

pub fn cmd_eta(args: &EtaArgs) -> Result<Report, CliError> {
    if args.k == 0 {
        return Err(CliError::Usage("--k must be at least 1".into()));
    }
    let value = eta(args.k)?;
    let projected = args
        .rho
        .map(|rho| projected_overshoot(args.k, rho))
        .transpose()?;
    Ok(Report {
        command: CommandEcho::Eta {
            k: args.k,
            rho: args.rho,
        },
        result: ResultPayload::Eta(EtaResult {
            k: value.k,
            eta: value.value,
            terms_used: value.terms_used,
            truncation_threshold: value.truncation_threshold,
            projected_overshoot: projected,
        }),
        provenance: Provenance::now(),
        certified: true,
        advisories: Vec::new(),
    })
}

pub fn simulation_design(args: &SimulateArgs) -> Result<SimulationDesign, CliError> {
    let mut design = SimulationDesign::reference(
        args.procedure.b,
        args.procedure.k,
        args.replications,
        args.seed,
    )
    .map_err(CliError::from)?;
    if let Some(beta) = &args.beta {
        design.beta_true = beta.clone();
    }
    if !args.predictors.is_empty() {
        design.predictors = args
            .predictors
            .iter()
            .map(|&(mean, variance)| PredictorSpec { mean, variance })
            .collect();
    }
    if !(args.error_sd > 0.0 && args.error_sd.is_finite()) {
        return Err(CliError::Usage(format!(
            "--error-sd must be positive, got {}",
            args.error_sd
        )));
    }
    design.error_sd = args.error_sd;
    design.cfg = validate_config(params(&args.procedure, design.p()))?;
    design.validate()?;
    Ok(design)
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<Report, CliError> {
    let design = simulation_design(args)?;
    let mut advisories = Vec::new();
    if let Some(a) = design.cfg.pilot_advisory(design.error_sd * design.error_sd) {
        advisories.push(a.to_string());
    }
    if design.replications == 1 {
        advisories.push("single replication: standard errors are reported as 0".into());
    }
    log::info!(
        "simulating {} replications with seed {}",
        design.replications,
        design.seed
    );
    let summary = run_study_with_workers(&design, args.workers)?;
    Ok(Report {
        command: CommandEcho::Simulate { design },
        result: ResultPayload::Simulate(summary),
        provenance: Provenance::now(),
        certified: true,
        advisories,
    })
}

pub fn data_schema(args: &RunArgs) -> Result<DataSchema, CliError> {
    let known = |name: &String| *name == args.response || args.predictors.contains(name);
    if let Some(bad) = args.log.iter().find(|n| !known(n)) {
        return Err(CliError::Usage(format!(
            "--log column `{bad}` is neither the response nor a predictor"
        )));
    }
    let column = |name: &String| {
        if args.log.contains(name) {
            ColumnSpec::shifted_log(name.clone())
        } else {
            ColumnSpec::identity(name.clone())
        }
    };
    DataSchema::new(
        column(&args.response),
        args.predictors.iter().map(column).collect(),
        args.dummies.clone(),
        !args.no_intercept,
    )
    .map_err(|e| CliError::Usage(e.to_string()))
}

fn coefficients(fit: &RegressionFit, names: &[String]) -> Vec<Coefficient> {
    let (Ok(sol), Ok(se)) = (fit.solve(), fit.standard_errors()) else {
        return Vec::new();
    };
    names
        .iter()
        .zip(&sol.beta)
        .zip(se)
        .map(|((name, &estimate), std_error)| Coefficient {
            name: name.clone(),
            estimate,
            std_error,
        })
        .collect()
}

pub fn cmd_run(args: &RunArgs) -> Result<Report, CliError> {
    let schema = data_schema(args)?;
    let cfg = validate_config(params(&args.procedure, schema.p()))?;
    let sources = args
        .data
        .iter()
        .map(|path| open_csv_source(path, &schema))
        .collect::<Result<Vec<_>, _>>()?;
    let mut source = interleave_sources(sources)?;

    let names = schema.parameter_names();
    let mut tracker = RegressionFit::new(cfg.p());
    let mut trace: Vec<TraceEntry> = Vec::new();
    let mut advisories = Vec::new();
    let outcome = run_procedure_with(&cfg, &mut source, &mut tracker, Some(&mut trace));
    if let Some(a) = trace
        .first()
        .and_then(|t| t.s2)
        .and_then(|s2| cfg.pilot_advisory(s2))
    {
        advisories.push(a.to_string());
    }

    let (result, certified) = match outcome {
        Ok(res) => {
            let sol = res.fit.solve().map_err(|e| CliError::Engine(e.into()))?;
            if sol.s2_clamped {
                advisories.push("residual variance was slightly negative and clamped to 0".into());
            }
            let result = RunResult {
                t_steps: res.t_steps,
                sample_size: res.fit.n(),
                n_projected: Some(res.n_projected),
                n_final: Some(res.n_final),
                s2: Some(sol.s2),
                coefficients: coefficients(&res.fit, &names),
                shortfall: None,
            };
            (result, true)
        }
        Err(e @ (EngineError::SourceExhausted(_) | EngineError::RankDeficientPilot(_))) => {
            log::warn!("{e}; the risk bound is not certified");
            advisories.push(e.to_string());
            let partial: &PartialRun = e.partial().expect("exhaustion carries the partial run");
            let result = RunResult {
                t_steps: partial.steps,
                sample_size: partial.fit.n(),
                n_projected: None,
                n_final: None,
                s2: partial.fit.solve().ok().map(|s| s.s2),
                coefficients: coefficients(&partial.fit, &names),
                shortfall: Some(Shortfall {
                    phase: partial.phase.to_string(),
                    obtained: partial.obtained,
                    needed: partial.needed,
                }),
            };
            (result, false)
        }
        Err(e) => return Err(CliError::Engine(e)),
    };

    Ok(Report {
        command: CommandEcho::Run {
            data: args.data.clone(),
            schema,
            config: cfg.params(),
        },
        result: ResultPayload::Run(result),
        provenance: Provenance::now(),
        certified,
        advisories,
    })
}

pub fn render(report: &Report, format: Format) -> Result<String, CliError> {
    Ok(match format {
        Format::Json => report.to_json()? + "\n",
        Format::Csv => report.to_csv(),
    })
}

/// Writes the report to `--out` or stdout.
pub fn emit(report: &Report, output: &OutputArgs) -> Result<(), CliError> {
    let text = render(report, output.format)?;
    match &output.out {
        Some(path) => std::fs::write(path, text)?,
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}
