//! JSON file formats: models, the two decomposition sidecars, and transcripts.
//!
//! Real numbers are stored as decimal strings in Rust's shortest round-trip
//! form, so save/load is bit-exact. Field residues are plain JSON integers.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use splitinfer_core::codec::FixedPointCodec;
use splitinfer_core::decompose::{DavidPart, Decomposition, LayerSplit, LowRankFactors};
use splitinfer_core::field::PrimeField;
use splitinfer_core::matrix::{FieldMatrix, RealMatrix};
use splitinfer_core::model::{Activation, Layer, MlpModel, ModelError};
use splitinfer_core::protocol::{Direction, Message, Mode, Outcome, Transcript};
use thiserror::Error;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FileError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed file: {reason}")]
    Malformed { path: PathBuf, reason: String },
    #[error("{path}: unsupported format version {version}")]
    Version { path: PathBuf, version: u32 },
    #[error("{path}: {source}")]
    Model {
        path: PathBuf,
        #[source]
        source: ModelError,
    },
}

impl FileError {
    fn malformed(path: &Path, reason: impl ToString) -> Self {
        FileError::Malformed {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        }
    }
}

fn read(path: &Path) -> Result<String, FileError> {
    fs::read_to_string(path).map_err(|source| FileError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<(), FileError> {
    fs::write(path, text).map_err(|source| FileError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<T, FileError> {
    serde_json::from_str(text).map_err(|e| FileError::malformed(path, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

fn check_version(path: &Path, version: u32) -> Result<(), FileError> {
    if version != FORMAT_VERSION {
        return Err(FileError::Version {
            path: path.to_path_buf(),
            version,
        });
    }
    Ok(())
}

fn reals_to_strings(v: &[f64]) -> Vec<String> {
    v.iter().map(|x| x.to_string()).collect()
}

fn strings_to_reals(path: &Path, v: &[String]) -> Result<Vec<f64>, FileError> {
    v.iter()
        .map(|s| match s.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(x),
            _ => Err(FileError::malformed(path, format!("`{s}` is not a finite decimal number"))),
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    version: u32,
    dims: Vec<usize>,
    activations: Vec<String>,
    weights: Vec<Vec<String>>,
}

fn activation_from(path: &Path, tag: &str) -> Result<Activation, FileError> {
    Activation::from_tag(tag).ok_or_else(|| FileError::malformed(path, format!("unknown activation `{tag}`")))
}

pub fn model_to_json(model: &MlpModel) -> String {
    let file = ModelFile {
        version: FORMAT_VERSION,
        dims: model.dims(),
        activations: model.activations().iter().map(|a| a.tag().to_string()).collect(),
        weights: model.layers().iter().map(|l| reals_to_strings(l.weights.as_slice())).collect(),
    };
    to_json(&file)
}

pub fn save_model(path: &Path, model: &MlpModel) -> Result<(), FileError> {
    write(path, &model_to_json(model))
}

/// Loads a model, rejecting broken dimension chains and weights above `weight_bound`.
pub fn load_model(path: &Path, weight_bound: f64) -> Result<MlpModel, FileError> {
    let file: ModelFile = parse(path, &read(path)?)?;
    check_version(path, file.version)?;
    let model_err = |source| FileError::Model {
        path: path.to_path_buf(),
        source,
    };
    if file.dims.len() < 2 {
        return Err(model_err(ModelError::TooFewDims(file.dims.len())));
    }
    let layers = file.dims.len() - 1;
    if file.activations.len() != layers {
        return Err(model_err(ModelError::ActivationCount(file.activations.len(), layers)));
    }
    if file.weights.len() != layers {
        return Err(FileError::malformed(
            path,
            format!("{} weight arrays for {layers} layers", file.weights.len()),
        ));
    }
    let mut out = Vec::with_capacity(layers);
    for (i, (w, tag)) in file.weights.iter().zip(&file.activations).enumerate() {
        let (cols, rows) = (file.dims[i], file.dims[i + 1]);
        if w.len() != rows * cols {
            // Report the input width this array actually implies when it is whole rows.
            let got = if rows > 0 && w.len() % rows == 0 { w.len() / rows } else { w.len() };
            return Err(model_err(ModelError::Chain {
                layer: i + 1,
                expected: cols,
                got,
            }));
        }
        let data = strings_to_reals(path, w)?;
        let weights = RealMatrix::from_rows(rows, cols, data).map_err(|e| model_err(e.into()))?;
        out.push(Layer {
            weights,
            activation: activation_from(path, tag)?,
        });
    }
    MlpModel::new(out, weight_bound).map_err(model_err)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RealMatrixFile {
    rows: usize,
    cols: usize,
    data: Vec<String>,
}

impl RealMatrixFile {
    fn from_matrix(m: &RealMatrix) -> Self {
        Self {
            rows: m.rows(),
            cols: m.cols(),
            data: reals_to_strings(m.as_slice()),
        }
    }

    fn into_matrix(self, path: &Path) -> Result<RealMatrix, FileError> {
        let data = strings_to_reals(path, &self.data)?;
        if self.rows == 0 || self.cols == 0 {
            if !data.is_empty() {
                return Err(FileError::malformed(path, "empty factor with data"));
            }
            return Ok(RealMatrix::zeros(self.rows, self.cols));
        }
        RealMatrix::from_rows(self.rows, self.cols, data).map_err(|e| FileError::malformed(path, e))
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CharlieLayerFile {
    svd_rank: usize,
    singular_values: Vec<String>,
    a: RealMatrixFile,
    b: RealMatrixFile,
    charlie_field: Vec<u64>,
    david_field: Vec<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CharlieFile {
    version: u32,
    modulus: u64,
    frac_bits: u32,
    value_bound: String,
    max_width: usize,
    dims: Vec<usize>,
    activations: Vec<String>,
    layers: Vec<CharlieLayerFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DavidFile {
    version: u32,
    modulus: u64,
    frac_bits: u32,
    dims: Vec<usize>,
    weights: Vec<Vec<u64>>,
}

pub fn charlie_to_json(d: &Decomposition) -> String {
    let codec = d.codec();
    let file = CharlieFile {
        version: FORMAT_VERSION,
        modulus: codec.field().modulus(),
        frac_bits: codec.frac_bits(),
        value_bound: codec.value_bound().to_string(),
        max_width: codec.max_width(),
        dims: d.dims(),
        activations: d.activations().iter().map(|a| a.tag().to_string()).collect(),
        layers: d
            .layers()
            .iter()
            .map(|l| CharlieLayerFile {
                svd_rank: l.svd_rank,
                singular_values: reals_to_strings(&l.singular_values),
                a: RealMatrixFile::from_matrix(&l.low_rank.a),
                b: RealMatrixFile::from_matrix(&l.low_rank.b),
                charlie_field: l.charlie_field.as_slice().to_vec(),
                david_field: l.david_field.as_slice().to_vec(),
            })
            .collect(),
    };
    to_json(&file)
}

pub fn david_to_json(part: &DavidPart) -> String {
    let file = DavidFile {
        version: FORMAT_VERSION,
        modulus: part.modulus,
        frac_bits: part.frac_bits,
        dims: part.dims.clone(),
        weights: part.weights.iter().map(|w| w.as_slice().to_vec()).collect(),
    };
    to_json(&file)
}

pub fn save_charlie(path: &Path, d: &Decomposition) -> Result<(), FileError> {
    write(path, &charlie_to_json(d))
}

pub fn save_david(path: &Path, part: &DavidPart) -> Result<(), FileError> {
    write(path, &david_to_json(part))
}

fn field_for(path: &Path, modulus: u64) -> Result<PrimeField, FileError> {
    PrimeField::new(modulus).map_err(|e| FileError::malformed(path, e))
}

fn field_matrix(path: &Path, field: &PrimeField, rows: usize, cols: usize, data: Vec<u64>) -> Result<FieldMatrix, FileError> {
    FieldMatrix::from_rows(field, rows, cols, data).map_err(|e| FileError::malformed(path, e))
}

fn check_dims(path: &Path, dims: &[usize]) -> Result<(), FileError> {
    if dims.len() < 2 || dims.contains(&0) {
        return Err(FileError::malformed(path, "dimension list needs at least two positive entries"));
    }
    Ok(())
}

pub fn load_charlie(path: &Path) -> Result<Decomposition, FileError> {
    let file: CharlieFile = parse(path, &read(path)?)?;
    check_version(path, file.version)?;
    check_dims(path, &file.dims)?;
    let field = field_for(path, file.modulus)?;
    let bound = strings_to_reals(path, std::slice::from_ref(&file.value_bound))?[0];
    let codec = FixedPointCodec::new(field, file.frac_bits, bound, file.max_width).map_err(|e| FileError::malformed(path, e))?;
    if file.layers.len() != file.dims.len() - 1 || file.activations.len() != file.layers.len() {
        return Err(FileError::malformed(path, "layer count does not match dims"));
    }
    let activations = file
        .activations
        .iter()
        .map(|t| activation_from(path, t))
        .collect::<Result<Vec<_>, _>>()?;
    let mut layers = Vec::with_capacity(file.layers.len());
    for (i, l) in file.layers.into_iter().enumerate() {
        let (cols, rows) = (file.dims[i], file.dims[i + 1]);
        let a = l.a.into_matrix(path)?;
        let b = l.b.into_matrix(path)?;
        if a.rows() != rows || b.cols() != cols || a.cols() != l.svd_rank || b.rows() != l.svd_rank {
            return Err(FileError::malformed(path, format!("layer {}: factor shapes do not match", i + 1)));
        }
        layers.push(LayerSplit {
            svd_rank: l.svd_rank,
            singular_values: strings_to_reals(path, &l.singular_values)?,
            low_rank: LowRankFactors { a, b },
            charlie_field: field_matrix(path, &field, rows, cols, l.charlie_field)?,
            david_field: field_matrix(path, &field, rows, cols, l.david_field)?,
        });
    }
    Decomposition::from_parts(codec, activations, layers).map_err(|e| FileError::malformed(path, e))
}

pub fn load_david(path: &Path) -> Result<DavidPart, FileError> {
    let file: DavidFile = parse(path, &read(path)?)?;
    check_version(path, file.version)?;
    check_dims(path, &file.dims)?;
    let field = field_for(path, file.modulus)?;
    if file.weights.len() != file.dims.len() - 1 {
        return Err(FileError::malformed(path, "layer count does not match dims"));
    }
    let weights = file
        .weights
        .into_iter()
        .enumerate()
        .map(|(i, w)| field_matrix(path, &field, file.dims[i + 1], file.dims[i], w))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DavidPart {
        modulus: file.modulus,
        frac_bits: file.frac_bits,
        dims: file.dims,
        weights,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionJson {
    CharlieToDavid,
    DavidToCharlie,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryJson {
    pub direction: DirectionJson,
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layer: Option<u32>,
    pub data: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeJson {
    Output(Vec<u64>),
    Abort,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptJson {
    pub mode: String,
    pub entries: Vec<EntryJson>,
    pub outcome: Option<OutcomeJson>,
}

impl TranscriptJson {
    pub fn from_transcript(mode: Mode, t: &Transcript) -> Self {
        let entries = t
            .entries
            .iter()
            .map(|(dir, msg)| EntryJson {
                direction: match dir {
                    Direction::CharlieToDavid => DirectionJson::CharlieToDavid,
                    Direction::DavidToCharlie => DirectionJson::DavidToCharlie,
                },
                kind: msg.kind().to_string(),
                layer: match msg {
                    Message::LayerInput { layer, .. } | Message::LayerReply { layer, .. } | Message::Abort { layer } => {
                        Some(*layer)
                    }
                    Message::FinalOutput { .. } => None,
                },
                data: msg.payload().to_vec(),
            })
            .collect();
        let outcome = t.outcome.as_ref().map(|o| match o {
            Outcome::Output(v) => OutcomeJson::Output(v.clone()),
            Outcome::Abort => OutcomeJson::Abort,
        });
        Self {
            mode: mode.tag().to_string(),
            entries,
            outcome,
        }
    }
}

pub fn save_transcript(path: &Path, mode: Mode, t: &Transcript) -> Result<(), FileError> {
    write(path, &to_json(&TranscriptJson::from_transcript(mode, t)))
}

/// Reads an input vector: a JSON array of numbers.
pub fn load_input(path: &Path) -> Result<Vec<f64>, FileError> {
    let v: Vec<f64> = parse(path, &read(path)?)?;
    if v.iter().any(|x| !x.is_finite()) {
        return Err(FileError::malformed(path, "input contains a non-finite value"));
    }
    Ok(v)
}
