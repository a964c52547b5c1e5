//! On-disk JSON documents: models, noise realizations and sample batches.
//!
//! Matrices are row-major nested arrays. Floats are written with 17
//! significant digits so every document parses back to the same bits.

use std::io;

use cmseq_core::{
    BackwardMarkovModel, CmModel, ForwardMarkovModel, ModelKind, ModelSpec, NoiseRealization,
    ReciprocalModel, SampleBatch, SequenceShape,
};
use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::ser::Formatter;

use crate::error::CliError;

pub const FORMAT_VERSION: &str = "1.0";
pub const REALIZATION_CLASS: &str = "realization";
pub const SAMPLES_CLASS: &str = "samples";

/// Row-major matrix as written in documents.
pub type MatrixRows = Vec<Vec<f64>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub format_version: String,
    pub class: String,
    #[serde(rename = "N")]
    pub horizon: usize,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transitions: Option<Vec<MatrixRows>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub couplings: Option<Vec<MatrixRows>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_covs: Option<Vec<MatrixRows>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diag_terms: Option<Vec<MatrixRows>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub super_terms: Option<Vec<MatrixRows>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corner_term: Option<MatrixRows>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RealizationDocument {
    pub format_version: String,
    pub class: String,
    #[serde(rename = "N")]
    pub horizon: usize,
    pub dim: usize,
    pub values: Vec<f64>,
    /// Stacked sample path produced by the realization, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_path: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplesDocument {
    pub format_version: String,
    pub class: String,
    #[serde(rename = "N")]
    pub horizon: usize,
    pub dim: usize,
    pub seed: u64,
    pub count: usize,
    pub paths: Vec<Vec<f64>>,
}

/// Header fields shared by every document, used to dispatch on `class`.
#[derive(Deserialize)]
struct Header {
    format_version: String,
    class: String,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Document {
    Model(ModelSpec),
    Realization(RealizationDocument),
    Samples(SamplesDocument),
}

/// Pretty-prints objects one key per line and keeps arrays on one line.
#[derive(Default)]
pub struct DocumentFormatter {
    // (inline, has_entries) per open container.
    stack: Vec<(bool, bool)>,
}

impl DocumentFormatter {
    fn depth(&self) -> usize {
        self.stack.iter().filter(|(inline, _)| !inline).count()
    }

    fn inline(&self) -> bool {
        self.stack.iter().any(|(inline, _)| *inline)
    }

    fn newline<W: ?Sized + io::Write>(&self, writer: &mut W) -> io::Result<()> {
        writer.write_all(b"\n")?;
        for _ in 0..self.depth() {
            writer.write_all(b"  ")?;
        }
        Ok(())
    }
}

impl Formatter for DocumentFormatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.stack.push((true, false));
        writer.write_all(b"[")
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.stack.pop();
        writer.write_all(b"]")
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        if !first {
            writer.write_all(b", ")?;
        }
        Ok(())
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, _writer: &mut W) -> io::Result<()> {
        Ok(())
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        let inline = self.inline();
        self.stack.push((inline, false));
        writer.write_all(b"{")
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        let (inline, has_entries) = self.stack.pop().unwrap_or((true, false));
        if !inline && has_entries {
            self.newline(writer)?;
        }
        writer.write_all(b"}")
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        if let Some(top) = self.stack.last_mut() {
            top.1 = true;
        }
        if !first {
            writer.write_all(b",")?;
        }
        if self.inline() {
            if !first {
                writer.write_all(b" ")?;
            }
            Ok(())
        } else {
            self.newline(writer)
        }
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        writer.write_all(b": ")
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, _writer: &mut W) -> io::Result<()> {
        Ok(())
    }
}

/// Serializes any value in document style, with a trailing newline.
pub fn to_text<T: Serialize>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, DocumentFormatter::default());
    value
        .serialize(&mut ser)
        .expect("in-memory serialization of plain data");
    out.push(b'\n');
    String::from_utf8(out).expect("serde_json writes UTF-8")
}

fn from_text<T: DeserializeOwned>(text: &str) -> Result<T, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." {
            CliError::Invalid(inner.to_string())
        } else {
            CliError::Invalid(format!("{path}: {inner}"))
        }
    })
}

fn check_header(format_version: &str) -> Result<(), CliError> {
    if format_version != FORMAT_VERSION {
        return Err(CliError::Invalid(format!(
            "format_version: unsupported version {format_version:?}, expected {FORMAT_VERSION:?}"
        )));
    }
    Ok(())
}

/// Parses any document, dispatching on its `class`.
pub fn parse_document(text: &str) -> Result<Document, CliError> {
    let header: Header = from_text(text)?;
    check_header(&header.format_version)?;
    match header.class.as_str() {
        REALIZATION_CLASS => parse_realization_document(text).map(Document::Realization),
        SAMPLES_CLASS => {
            let doc: SamplesDocument = from_text(text)?;
            shape(doc.horizon, doc.dim)?;
            Ok(Document::Samples(doc))
        }
        _ => parse_model(text).map(Document::Model),
    }
}

/// Parses and validates a model document.
pub fn parse_model(text: &str) -> Result<ModelSpec, CliError> {
    let doc: ModelDocument = from_text(text)?;
    doc.to_model()
}

pub fn serialize_model(model: &ModelSpec) -> String {
    to_text(&ModelDocument::from_model(model))
}

fn shape(horizon: usize, dim: usize) -> Result<SequenceShape, CliError> {
    SequenceShape::new(horizon, dim).map_err(|e| CliError::Invalid(format!("N/dim: {e}")))
}

fn matrix(field: &str, rows: &MatrixRows, dim: usize) -> Result<DMatrix<f64>, CliError> {
    if rows.len() != dim {
        return Err(CliError::Invalid(format!(
            "{field}: expected {dim} rows, found {}",
            rows.len()
        )));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != dim {
            return Err(CliError::Invalid(format!(
                "{field}[{i}]: expected {dim} columns, found {}",
                row.len()
            )));
        }
    }
    Ok(DMatrix::from_fn(dim, dim, |i, j| rows[i][j]))
}

fn matrices(field: &str, value: &Option<Vec<MatrixRows>>, dim: usize) -> Result<Vec<DMatrix<f64>>, CliError> {
    let list = value
        .as_ref()
        .ok_or_else(|| CliError::Invalid(format!("{field}: missing field")))?;
    list.iter()
        .enumerate()
        .map(|(k, rows)| matrix(&format!("{field}[{k}]"), rows, dim))
        .collect()
}

fn rows(m: &DMatrix<f64>) -> MatrixRows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn rows_all(ms: &[DMatrix<f64>]) -> Option<Vec<MatrixRows>> {
    Some(ms.iter().map(rows).collect())
}

impl ModelDocument {
    fn empty(kind: ModelKind, shape: SequenceShape) -> Self {
        Self {
            format_version: FORMAT_VERSION.to_string(),
            class: kind.name().to_string(),
            horizon: shape.horizon(),
            dim: shape.dim(),
            transitions: None,
            couplings: None,
            noise_covs: None,
            diag_terms: None,
            super_terms: None,
            corner_term: None,
        }
    }

    pub fn from_model(model: &ModelSpec) -> Self {
        let mut doc = Self::empty(model.kind(), model.shape());
        match model {
            ModelSpec::ForwardMarkov(m) => {
                doc.transitions = rows_all(m.transitions());
                doc.noise_covs = rows_all(m.noise_covs());
            }
            ModelSpec::BackwardMarkov(m) => {
                doc.transitions = rows_all(m.transitions());
                doc.noise_covs = rows_all(m.noise_covs());
            }
            ModelSpec::Reciprocal(m) => {
                doc.diag_terms = rows_all(m.diag_terms());
                doc.super_terms = rows_all(m.super_terms());
                doc.corner_term = Some(rows(m.corner_term()));
            }
            ModelSpec::Cm(m) => {
                doc.transitions = rows_all(m.transitions());
                doc.couplings = rows_all(m.couplings());
                doc.noise_covs = rows_all(m.noise_covs());
            }
        }
        doc
    }

    /// Validated model; every core invariant is checked here.
    pub fn to_model(&self) -> Result<ModelSpec, CliError> {
        check_header(&self.format_version)?;
        let kind: ModelKind = self
            .class
            .parse()
            .map_err(|e: String| CliError::Invalid(format!("class: {e}")))?;
        let shape = shape(self.horizon, self.dim)?;
        let d = shape.dim();
        let allowed: &[&str] = match kind {
            ModelKind::ForwardMarkov | ModelKind::BackwardMarkov => &["transitions", "noise_covs"],
            ModelKind::Reciprocal => &["diag_terms", "super_terms", "corner_term"],
            _ => &["transitions", "couplings", "noise_covs"],
        };
        let present = [
            ("transitions", self.transitions.is_some()),
            ("couplings", self.couplings.is_some()),
            ("noise_covs", self.noise_covs.is_some()),
            ("diag_terms", self.diag_terms.is_some()),
            ("super_terms", self.super_terms.is_some()),
            ("corner_term", self.corner_term.is_some()),
        ];
        if let Some((field, _)) = present.iter().find(|(f, p)| *p && !allowed.contains(f)) {
            return Err(CliError::Invalid(format!("{field}: not a parameter of class {kind}")));
        }
        let model: Result<ModelSpec, _> = match kind {
            ModelKind::ForwardMarkov => ForwardMarkovModel::new(
                shape,
                matrices("transitions", &self.transitions, d)?,
                matrices("noise_covs", &self.noise_covs, d)?,
            )
            .map(Into::into),
            ModelKind::BackwardMarkov => BackwardMarkovModel::new(
                shape,
                matrices("transitions", &self.transitions, d)?,
                matrices("noise_covs", &self.noise_covs, d)?,
            )
            .map(Into::into),
            ModelKind::Reciprocal => {
                let corner = self
                    .corner_term
                    .as_ref()
                    .ok_or_else(|| CliError::Invalid("corner_term: missing field".into()))?;
                ReciprocalModel::new(
                    shape,
                    matrices("diag_terms", &self.diag_terms, d)?,
                    matrices("super_terms", &self.super_terms, d)?,
                    matrix("corner_term", corner, d)?,
                )
                .map(Into::into)
            }
            _ => {
                let (direction, conditioning) = kind.cm_layout().expect("CM kind");
                CmModel::new(
                    shape,
                    direction,
                    conditioning,
                    matrices("transitions", &self.transitions, d)?,
                    matrices("couplings", &self.couplings, d)?,
                    matrices("noise_covs", &self.noise_covs, d)?,
                )
                .map(Into::into)
            }
        };
        model.map_err(|e| CliError::Invalid(e.to_string()))
    }
}

fn parse_realization_document(text: &str) -> Result<RealizationDocument, CliError> {
    let doc: RealizationDocument = from_text(text)?;
    check_header(&doc.format_version)?;
    if doc.class != REALIZATION_CLASS {
        return Err(CliError::Invalid(format!(
            "class: expected {REALIZATION_CLASS:?}, found {:?}",
            doc.class
        )));
    }
    let shape = shape(doc.horizon, doc.dim)?;
    if doc.values.len() != shape.len() {
        return Err(CliError::Invalid(format!(
            "values: expected {} entries, found {}",
            shape.len(),
            doc.values.len()
        )));
    }
    if let Some(path) = &doc.sample_path {
        if path.len() != shape.len() {
            return Err(CliError::Invalid(format!(
                "sample_path: expected {} entries, found {}",
                shape.len(),
                path.len()
            )));
        }
    }
    Ok(doc)
}

/// Parses a noise realization document.
pub fn parse_realization(text: &str) -> Result<NoiseRealization, CliError> {
    let doc = parse_realization_document(text)?;
    let shape = shape(doc.horizon, doc.dim)?;
    NoiseRealization::from_slice(shape, &doc.values).map_err(|e| CliError::Invalid(e.to_string()))
}

pub fn serialize_realization(noise: &NoiseRealization, sample_path: Option<&DVector<f64>>) -> String {
    let shape = noise.shape();
    to_text(&RealizationDocument {
        format_version: FORMAT_VERSION.to_string(),
        class: REALIZATION_CLASS.to_string(),
        horizon: shape.horizon(),
        dim: shape.dim(),
        values: noise.values().iter().copied().collect(),
        sample_path: sample_path.map(|x| x.iter().copied().collect()),
    })
}

pub fn serialize_samples(batch: &SampleBatch) -> String {
    to_text(&SamplesDocument {
        format_version: FORMAT_VERSION.to_string(),
        class: SAMPLES_CLASS.to_string(),
        horizon: batch.shape.horizon(),
        dim: batch.shape.dim(),
        seed: batch.seed,
        count: batch.count,
        paths: batch.paths.iter().map(|p| p.iter().copied().collect()).collect(),
    })
}
