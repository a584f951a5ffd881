//! Dataset model, CSV ingestion, preprocessing and a synthetic generator.
//!
//! On disk a dataset is a directory holding `manifest.csv`, an optional
//! `schema.csv` and one CSV per sample (one row per timestep, metadata
//! columns followed by signal columns).

mod io;
mod preprocess;
mod schema;
mod synth;

pub use io::{
    load_dataset, load_schema_or_default, read_injections, read_manifest, read_sample_csv,
    write_dataset, write_sample_csv, ManifestEntry, Split, INJECTIONS_FILE, MANIFEST_FILE,
    SCHEMA_FILE,
};
pub use preprocess::{resample, PreprocessConfig, Preprocessor, STD_FLOOR};
pub use schema::{Domain, SignalInfo, SignalKind, SignalSchema, SignalSubset, METADATA_COLUMNS};
pub use synth::{generate_synthetic, InjectionKind, Injection, SynthConfig, SynthDataset};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Category label of normal operation.
pub const NORMAL_CATEGORY: u8 = 12;

const CATEGORY_NAMES: [&str; 13] = [
    "Add. friction",
    "Add. axis weight",
    "Collision w/ foam",
    "Collision w/ cables",
    "Collision w/ cardboard",
    "Misgrip of can",
    "Losing the can",
    "Varying can weight",
    "Cable routed at robot",
    "Invalid gripping pos.",
    "Miscommutation",
    "Unstable platform",
    "Normal operation",
];

/// Human-readable category name; unknown ids render as `category N`.
pub fn category_name(category: u8) -> String {
    CATEGORY_NAMES
        .get(category as usize)
        .map(|s| s.to_string())
        .unwrap_or_else(|| format!("category {category}"))
}

/// One recording: a time-major `[T, S]` matrix plus labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub sample_id: u32,
    pub values: Tensor<f64>,
    pub category: u8,
    pub variant: i64,
    pub native_hz: u32,
}

impl Sample {
    pub fn new(sample_id: u32, values: Tensor<f64>, category: u8, variant: i64, native_hz: u32) -> Result<Self> {
        values.dims2()?;
        if category > NORMAL_CATEGORY {
            return Err(Error::Data(format!("sample {sample_id}: category {category} out of range 0..=12")));
        }
        if !values.is_finite() {
            return Err(Error::Data(format!("sample {sample_id}: non-finite values")));
        }
        if native_hz == 0 {
            return Err(Error::Data(format!("sample {sample_id}: zero sampling rate")));
        }
        Ok(Sample {
            sample_id,
            values,
            category,
            variant,
            native_hz,
        })
    }

    pub fn is_anomaly(&self) -> bool {
        self.category != NORMAL_CATEGORY
    }

    pub fn steps(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn signals(&self) -> usize {
        self.values.shape()[1]
    }
}

/// Train and test partitions over a shared signal schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: SignalSchema,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl Dataset {
    /// Errors if the training partition holds anomalies or a sample does not
    /// match the schema width.
    pub fn validate(&self) -> Result<()> {
        let bad: Vec<String> = self
            .train
            .iter()
            .filter(|s| s.is_anomaly())
            .map(|s| s.sample_id.to_string())
            .collect();
        if !bad.is_empty() {
            return Err(Error::Data(format!(
                "training split contains anomalous samples: {}",
                bad.join(", ")
            )));
        }
        for s in self.train.iter().chain(&self.test) {
            if s.signals() != self.schema.len() {
                return Err(Error::Data(format!(
                    "sample {} has {} signals, schema has {}",
                    s.sample_id,
                    s.signals(),
                    self.schema.len()
                )));
            }
        }
        Ok(())
    }

    pub fn normal_test(&self) -> impl Iterator<Item = &Sample> {
        self.test.iter().filter(|s| !s.is_anomaly())
    }

    pub fn anomalous_test(&self) -> impl Iterator<Item = &Sample> {
        self.test.iter().filter(|s| s.is_anomaly())
    }
}
