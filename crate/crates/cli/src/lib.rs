//! Command-line front end for `cmseq-core`: model files, conversion,
//! classification, sampling and equivalence verification.
//!
//! Exit codes: 0 success, 1 negative result (inadmissible target, failed
//! verification or classification), 2 invalid input, 3 I/O failure.

pub mod document;
pub mod error;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use cmseq_core::{
    check_cm_markov_condition, classify, convert, reciprocal_condition_violations, sample,
    verify_equivalence_with, ConversionMethod, EquivalencePair, ModelKind, ModelSpec,
    VerificationTolerances, DEFAULT_TOL,
};
use nalgebra::SymmetricEigen;
use serde::Serialize;

use document::Document;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "cmseq", version, about = "Convert, classify, sample and verify Gaussian CM, reciprocal and Markov sequence models")]
pub struct Cli {
    /// Suppress the report on stdout; only the exit code is meaningful.
    #[arg(long, short, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a model into an equivalent model of another kind.
    Convert {
        input: PathBuf,
        #[arg(long)]
        target: ModelKind,
        #[arg(long, default_value = "generic")]
        method: ConversionMethod,
        /// Target model file; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Source noise realization to map onto the target model.
        #[arg(long, requires = "noise_out")]
        noise: Option<PathBuf>,
        /// Mapped realization with the common sample path.
        #[arg(long, requires = "noise")]
        noise_out: Option<PathBuf>,
    },
    /// Report the sequence classes a model governs.
    Classify {
        input: PathBuf,
        /// Zero-block tolerance relative to the largest precision entry.
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        /// Exit with 1 unless the model can be converted to this kind.
        #[arg(long)]
        target: Option<ModelKind>,
    },
    /// Draw seeded sample paths.
    Sample {
        input: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check that two models produce identical sample paths.
    Verify {
        input: PathBuf,
        /// Target model file; converted from the input when omitted.
        target_file: Option<PathBuf>,
        #[arg(long)]
        target: Option<ModelKind>,
        #[arg(long, default_value = "generic")]
        method: ConversionMethod,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        /// Tolerance for the path, precision and noise-covariance checks.
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
    /// Summarize a model, realization or samples document.
    Info { input: PathBuf },
}

/// Result of a command that ran to completion.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outcome {
    pub stdout: Option<String>,
    pub exit_code: u8,
}

impl Outcome {
    fn report<T: Serialize>(report: &T, success: bool) -> Self {
        Self {
            stdout: Some(document::to_text(report)),
            exit_code: if success { 0 } else { 1 },
        }
    }
}

pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    match &cli.command {
        Command::Convert {
            input,
            target,
            method,
            out,
            noise,
            noise_out,
        } => cmd_convert(input, *target, *method, out.as_deref(), noise.as_deref(), noise_out.as_deref()),
        Command::Classify { input, tol, target } => cmd_classify(input, *tol, *target),
        Command::Sample {
            input,
            seed,
            count,
            out,
        } => cmd_sample(input, *seed, *count, out.as_deref()),
        Command::Verify {
            input,
            target_file,
            target,
            method,
            seed,
            count,
            tol,
        } => cmd_verify(input, target_file.as_deref(), *target, *method, *seed, *count, *tol),
        Command::Info { input } => cmd_info(input),
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn with_path(path: &Path, e: CliError) -> CliError {
    match e {
        CliError::Invalid(msg) => CliError::Invalid(format!("{}: {msg}", path.display())),
        other => other,
    }
}

pub fn load_model(path: &Path) -> Result<ModelSpec, CliError> {
    document::parse_model(&read(path)?).map_err(|e| with_path(path, e))
}

fn method_name(method: ConversionMethod) -> &'static str {
    match method {
        ConversionMethod::Generic => "generic",
        ConversionMethod::ClosedForm => "closed-form",
    }
}

#[derive(Serialize)]
struct ConvertReport {
    source_class: &'static str,
    target_class: &'static str,
    method: &'static str,
    precision_error: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    noise_out: Option<String>,
}

pub fn cmd_convert(
    input: &Path,
    target: ModelKind,
    method: ConversionMethod,
    out: Option<&Path>,
    noise: Option<&Path>,
    noise_out: Option<&Path>,
) -> Result<Outcome, CliError> {
    let source = load_model(input)?;
    let xi = match noise {
        Some(path) => Some(document::parse_realization(&read(path)?).map_err(|e| with_path(path, e))?),
        None => None,
    };
    let pair = convert(&source, target, method)?;
    if let (Some(xi), Some(path)) = (&xi, noise_out) {
        let zeta = pair.map_noise(xi)?;
        let x = pair.target_path(&zeta)?;
        write(path, &document::serialize_realization(&zeta, Some(&x)))?;
    }
    let model_text = document::serialize_model(pair.target());
    match out {
        Some(path) => {
            write(path, &model_text)?;
            let report = ConvertReport {
                source_class: source.kind().name(),
                target_class: target.name(),
                method: method_name(method),
                precision_error: pair.step1_error(),
                noise_out: noise_out.map(|p| p.display().to_string()),
            };
            Ok(Outcome::report(&report, true))
        }
        None => Ok(Outcome {
            stdout: Some(model_text),
            exit_code: 0,
        }),
    }
}

#[derive(Serialize)]
struct ViolationEntry {
    row: usize,
    col: usize,
    max_abs: f64,
}

#[derive(Serialize)]
struct ConditionEntry {
    reciprocal_condition: bool,
    violated_at: Vec<usize>,
    markov_condition: &'static str,
}

#[derive(Serialize)]
struct TargetEntry {
    class: &'static str,
    admissible: bool,
}

#[derive(Serialize)]
struct ClassifyReport {
    class: &'static str,
    #[serde(rename = "N")]
    horizon: usize,
    dim: usize,
    cml: bool,
    cmf: bool,
    reciprocal: bool,
    markov: bool,
    tolerance: f64,
    threshold: f64,
    violations: Vec<ViolationEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    algebraic: Option<ConditionEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    target: Option<TargetEntry>,
}

pub fn cmd_classify(input: &Path, tol: f64, target: Option<ModelKind>) -> Result<Outcome, CliError> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(CliError::Invalid(format!("--tol: must be positive, got {tol}")));
    }
    let model = load_model(input)?;
    let report = classify(&model.information_matrix()?, tol)?;
    let algebraic = match &model {
        ModelSpec::Cm(cm) => {
            let violated_at = reciprocal_condition_violations(cm, tol);
            Some(ConditionEntry {
                reciprocal_condition: violated_at.is_empty(),
                violated_at,
                markov_condition: match check_cm_markov_condition(cm, tol) {
                    cmseq_core::MarkovCondition::Holds => "holds",
                    cmseq_core::MarkovCondition::Fails => "fails",
                    cmseq_core::MarkovCondition::NotApplicable => "not_applicable",
                },
            })
        }
        _ => None,
    };
    let target = target.map(|kind| TargetEntry {
        class: kind.name(),
        admissible: match kind {
            ModelKind::ForwardMarkov | ModelKind::BackwardMarkov => report.is_markov,
            ModelKind::Reciprocal => report.is_reciprocal,
            ModelKind::CmlForward | ModelKind::CmlBackward => report.is_cml,
            ModelKind::CmfForward | ModelKind::CmfBackward => report.is_cmf,
        },
    });
    let success = target.as_ref().is_none_or(|t| t.admissible);
    let shape = model.shape();
    let out = ClassifyReport {
        class: model.kind().name(),
        horizon: shape.horizon(),
        dim: shape.dim(),
        cml: report.is_cml,
        cmf: report.is_cmf,
        reciprocal: report.is_reciprocal,
        markov: report.is_markov,
        tolerance: report.tolerance,
        threshold: report.threshold,
        violations: report
            .violations
            .iter()
            .map(|v| ViolationEntry {
                row: v.row,
                col: v.col,
                max_abs: v.max_abs,
            })
            .collect(),
        algebraic,
        target,
    };
    Ok(Outcome::report(&out, success))
}

pub fn cmd_sample(input: &Path, seed: u64, count: usize, out: Option<&Path>) -> Result<Outcome, CliError> {
    let model = load_model(input)?;
    let batch = sample(&model, seed, count)?;
    let text = document::serialize_samples(&batch);
    match out {
        Some(path) => {
            write(path, &text)?;
            Ok(Outcome {
                stdout: None,
                exit_code: 0,
            })
        }
        None => Ok(Outcome {
            stdout: Some(text),
            exit_code: 0,
        }),
    }
}

#[derive(Serialize)]
struct ToleranceEntry {
    path: f64,
    precision: f64,
    noise_cov: f64,
}

#[derive(Serialize)]
struct VerifyReport {
    source_class: &'static str,
    target_class: &'static str,
    method: &'static str,
    seed: u64,
    count: usize,
    max_path_error: f64,
    precision_error: f64,
    noise_cov_error: f64,
    tolerances: ToleranceEntry,
    passed: bool,
}

pub fn cmd_verify(
    input: &Path,
    target_file: Option<&Path>,
    target: Option<ModelKind>,
    method: ConversionMethod,
    seed: u64,
    count: usize,
    tol: f64,
) -> Result<Outcome, CliError> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(CliError::Invalid(format!("--tol: must be positive, got {tol}")));
    }
    let source = load_model(input)?;
    let pair = match (target_file, target) {
        (Some(path), kind) => {
            let target_model = load_model(path)?;
            if let Some(kind) = kind.filter(|k| *k != target_model.kind()) {
                return Err(CliError::Invalid(format!(
                    "--target {kind} does not match {} model in {}",
                    target_model.kind(),
                    path.display()
                )));
            }
            EquivalencePair::new(source, target_model, method)?
        }
        (None, Some(kind)) => convert(&source, kind, method)?,
        (None, None) => {
            return Err(CliError::Invalid(
                "verify needs --target or a target model file".to_string(),
            ))
        }
    };
    let tolerances = VerificationTolerances {
        path: tol,
        precision: tol,
        noise_cov: tol,
    };
    let v = verify_equivalence_with(&pair, seed, count, tolerances)?;
    let report = VerifyReport {
        source_class: pair.source().kind().name(),
        target_class: pair.target().kind().name(),
        method: method_name(method),
        seed,
        count,
        max_path_error: v.max_path_error,
        precision_error: v.precision_error,
        noise_cov_error: v.noise_cov_error,
        tolerances: ToleranceEntry {
            path: tolerances.path,
            precision: tolerances.precision,
            noise_cov: tolerances.noise_cov,
        },
        passed: v.passed,
    };
    Ok(Outcome::report(&report, v.passed))
}

#[derive(Serialize)]
#[serde(untagged)]
enum InfoReport {
    Model {
        class: &'static str,
        #[serde(rename = "N")]
        horizon: usize,
        dim: usize,
        stacked_length: usize,
        information_condition: f64,
    },
    Realization {
        class: &'static str,
        #[serde(rename = "N")]
        horizon: usize,
        dim: usize,
        stacked_length: usize,
        has_sample_path: bool,
    },
    Samples {
        class: &'static str,
        #[serde(rename = "N")]
        horizon: usize,
        dim: usize,
        seed: u64,
        count: usize,
    },
}

pub fn cmd_info(input: &Path) -> Result<Outcome, CliError> {
    let text = read(input)?;
    let doc = document::parse_document(&text).map_err(|e| with_path(input, e))?;
    let report = match doc {
        Document::Model(model) => {
            let shape = model.shape();
            let j = model.information_matrix()?;
            let eig = SymmetricEigen::new(j.into_entries()).eigenvalues;
            InfoReport::Model {
                class: model.kind().name(),
                horizon: shape.horizon(),
                dim: shape.dim(),
                stacked_length: shape.len(),
                information_condition: eig.max() / eig.min(),
            }
        }
        Document::Realization(r) => InfoReport::Realization {
            class: document::REALIZATION_CLASS,
            horizon: r.horizon,
            dim: r.dim,
            stacked_length: r.values.len(),
            has_sample_path: r.sample_path.is_some(),
        },
        Document::Samples(s) => InfoReport::Samples {
            class: document::SAMPLES_CLASS,
            horizon: s.horizon,
            dim: s.dim,
            seed: s.seed,
            count: s.count,
        },
    };
    Ok(Outcome::report(&report, true))
}
