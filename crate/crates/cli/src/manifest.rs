//! Serialized experiment outputs: the run manifest and the checks file.
//!
//! JSON field order is the declaration order below and is part of the
//! output contract, as is the `"inf"` encoding for infinite reals.

use std::collections::BTreeMap;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use batchlens::dynamics::RunSummary;
use batchlens::observables::LimitLabel;

pub const SCHEMA_VERSION: u32 = 1;

/// An f64 that serializes infinities and NaN as the strings `"inf"`,
/// `"-inf"`, `"nan"` (JSON numbers cannot carry them).
#[derive(Debug, Clone, Copy)]
pub struct JsonReal(pub f64);

impl PartialEq for JsonReal {
    fn eq(&self, other: &Self) -> bool {
        self.0.to_bits() == other.0.to_bits()
    }
}

impl Serialize for JsonReal {
    fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            ser.serialize_f64(self.0)
        } else if self.0.is_nan() {
            ser.serialize_str("nan")
        } else if self.0 > 0.0 {
            ser.serialize_str("inf")
        } else {
            ser.serialize_str("-inf")
        }
    }
}

impl<'de> Deserialize<'de> for JsonReal {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(de)? {
            Raw::Num(x) => Ok(JsonReal(x)),
            Raw::Str(s) => match s.as_str() {
                "inf" => Ok(JsonReal(f64::INFINITY)),
                "-inf" => Ok(JsonReal(f64::NEG_INFINITY)),
                "nan" => Ok(JsonReal(f64::NAN)),
                other => Err(D::Error::custom(format!("bad real literal {other:?}"))),
            },
        }
    }
}

/// Limit label as serialized; datapoint indices are 1-based here (the Rust
/// API is 0-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LabelJson {
    Datapoint { index: usize, sign: i8 },
    GdMixture,
    NotConverged,
    Diverged { step: usize },
}

impl From<LimitLabel> for LabelJson {
    fn from(label: LimitLabel) -> Self {
        match label {
            LimitLabel::Datapoint { index, sign } => LabelJson::Datapoint {
                index: index + 1,
                sign,
            },
            LimitLabel::GdMixture => LabelJson::GdMixture,
            LimitLabel::NotConverged => LabelJson::NotConverged,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub name: String,
    pub seed: u64,
    pub steps: usize,
    pub converged: bool,
    pub label: LabelJson,
    pub final_phi: JsonReal,
    pub final_psi: JsonReal,
    pub final_r: JsonReal,
    pub final_norm_sq: JsonReal,
    pub final_loss: JsonReal,
}

impl RunEntry {
    pub fn from_summary(name: impl Into<String>, seed: u64, summary: &RunSummary<f64>) -> Self {
        RunEntry {
            name: name.into(),
            seed,
            steps: summary.steps,
            converged: summary.converged,
            label: summary.label.into(),
            final_phi: JsonReal(summary.final_phi),
            final_psi: JsonReal(summary.final_psi),
            final_r: JsonReal(summary.final_r),
            final_norm_sq: JsonReal(summary.final_norm_sq),
            final_loss: JsonReal(summary.final_loss),
        }
    }

    pub fn diverged(name: impl Into<String>, seed: u64, step: usize) -> Self {
        RunEntry {
            name: name.into(),
            seed,
            steps: step,
            converged: false,
            label: LabelJson::Diverged { step },
            final_phi: JsonReal(f64::NAN),
            final_psi: JsonReal(f64::NAN),
            final_r: JsonReal(f64::NAN),
            final_norm_sq: JsonReal(f64::NAN),
            final_loss: JsonReal(f64::NAN),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

/// One manifest per invocation, aggregating every seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub preset: String,
    /// Echo of the explicitly provided command-line overrides.
    pub overrides: BTreeMap<String, String>,
    pub seeds: Vec<u64>,
    pub runs: Vec<RunEntry>,
    pub checks: Vec<Check>,
    pub all_pass: bool,
    pub wall_time_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChecksFile {
    pub schema_version: u32,
    pub preset: String,
    pub checks: Vec<Check>,
    pub all_pass: bool,
}
