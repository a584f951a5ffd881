use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use super::schema::{SignalSchema, METADATA_COLUMNS};
use super::synth::{Injection, InjectionKind};
use super::{Dataset, Sample, NORMAL_CATEGORY};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const SCHEMA_FILE: &str = "schema.csv";
pub const INJECTIONS_FILE: &str = "injections.csv";

const REQUIRED_METADATA: [&str; 5] = ["time", "sample", "anomaly", "category", "variant"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(Error::Data(format!("unknown split '{s}'"))),
        }
    }
}

/// One manifest row: `sample_id,file,split,category,variant`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub sample_id: u32,
    pub file: PathBuf,
    pub split: Split,
    pub category: u8,
    pub variant: i64,
}

fn field<T: FromStr>(path: &Path, row: usize, col: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Data(format!("{}: row {row}: bad {col} value '{v}'", path.display())))
}

fn parse_bool(path: &Path, row: usize, v: &str) -> Result<bool> {
    match v.trim() {
        "1" | "true" | "True" | "TRUE" => Ok(true),
        "0" | "false" | "False" | "FALSE" => Ok(false),
        _ => Err(Error::Data(format!("{}: row {row}: bad boolean '{v}'", path.display()))),
    }
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = dir.as_ref().join(MANIFEST_FILE);
    if !path.exists() {
        return Err(Error::MissingFiles(vec![path]));
    }
    let mut r = csv::Reader::from_path(&path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let expected = ["sample_id", "file", "split", "category", "variant"];
    if header != expected {
        let missing = expected.iter().filter(|e| !header.iter().any(|h| h == *e)).map(|s| s.to_string()).collect();
        let extra = header.iter().filter(|h| !expected.contains(&h.as_str())).cloned().collect();
        return Err(Error::Columns { path, missing, extra });
    }
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let e = ManifestEntry {
            sample_id: field(&path, row, "sample_id", &rec[0])?,
            file: PathBuf::from(&rec[1]),
            split: rec[2].parse()?,
            category: field(&path, row, "category", &rec[3])?,
            variant: field(&path, row, "variant", &rec[4])?,
        };
        if e.category > NORMAL_CATEGORY {
            return Err(Error::Data(format!("{}: row {row}: category {} out of range", path.display(), e.category)));
        }
        if !ids.insert(e.sample_id) {
            return Err(Error::Data(format!("{}: duplicate sample_id {}", path.display(), e.sample_id)));
        }
        out.push(e);
    }
    Ok(out)
}

/// Uses `schema.csv` when the dataset carries one, the 130-signal robot
/// schema otherwise.
pub fn load_schema_or_default(dir: impl AsRef<Path>) -> Result<SignalSchema> {
    let p = dir.as_ref().join(SCHEMA_FILE);
    if p.exists() {
        SignalSchema::load(p)
    } else {
        Ok(SignalSchema::voraus())
    }
}

fn infer_rate(path: &Path, times: &[f64]) -> Result<u32> {
    if times.len() < 2 {
        return Err(Error::Data(format!("{}: need at least two rows to infer the sampling rate", path.display())));
    }
    let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    let hz = 1.0 / dt;
    let rounded = hz.round();
    if !(hz.is_finite() && rounded >= 1.0 && (hz - rounded).abs() <= 1e-3 * rounded) {
        return Err(Error::Data(format!("{}: time column gives a non-integer rate of {hz} Hz", path.display())));
    }
    Ok(rounded as u32)
}

/// Reads one sample file. Signal columns may appear in any order; they are
/// returned in schema order.
pub fn read_sample_csv(path: impl AsRef<Path>, schema: &SignalSchema) -> Result<Sample> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let col = |name: &str| header.iter().position(|h| h == name);

    let mut missing: Vec<String> = REQUIRED_METADATA
        .iter()
        .chain(schema.names().iter())
        .filter(|n| col(n).is_none())
        .map(|n| n.to_string())
        .collect();
    missing.dedup();
    let extra: Vec<String> = header
        .iter()
        .filter(|h| !METADATA_COLUMNS.contains(&h.as_str()) && schema.index_of(h).is_none())
        .cloned()
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(Error::Columns {
            path: path.to_path_buf(),
            missing,
            extra,
        });
    }
    let signal_cols: Vec<usize> = schema.names().iter().map(|n| col(n).unwrap()).collect();
    let (c_time, c_sample, c_anom, c_cat, c_var) = (
        col("time").unwrap(),
        col("sample").unwrap(),
        col("anomaly").unwrap(),
        col("category").unwrap(),
        col("variant").unwrap(),
    );

    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut labels: Option<(u32, bool, u8, i64)> = None;
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let cur = (
            field(path, row, "sample", &rec[c_sample])?,
            parse_bool(path, row, &rec[c_anom])?,
            field(path, row, "category", &rec[c_cat])?,
            field(path, row, "variant", &rec[c_var])?,
        );
        match labels {
            None => labels = Some(cur),
            Some(l) if l != cur => {
                return Err(Error::Data(format!("{}: row {row}: labels change within the sample", path.display())))
            }
            _ => {}
        }
        times.push(field::<f64>(path, row, "time", &rec[c_time])?);
        for &c in &signal_cols {
            let name = &header[c];
            values.push(field::<f64>(path, row, name, &rec[c])?);
        }
    }
    let Some((sample_id, anomaly, category, variant)) = labels else {
        return Err(Error::Data(format!("{}: no rows", path.display())));
    };
    if anomaly != (category != NORMAL_CATEGORY) {
        return Err(Error::Data(format!(
            "{}: anomaly flag {anomaly} contradicts category {category}",
            path.display()
        )));
    }
    let hz = infer_rate(path, &times)?;
    let t = times.len();
    let values = Tensor::new(vec![t, schema.len()], values)?;
    Sample::new(sample_id, values, category, variant, hz)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

/// Loads every sample listed in the manifest and checks that file labels
/// agree with it and that the training split is anomaly-free.
pub fn load_dataset(dir: impl AsRef<Path>, schema: &SignalSchema) -> Result<Dataset> {
    let dir = dir.as_ref();
    let manifest = read_manifest(dir)?;
    let bad: Vec<String> = manifest
        .iter()
        .filter(|e| e.split == Split::Train && e.category != NORMAL_CATEGORY)
        .map(|e| e.sample_id.to_string())
        .collect();
    if !bad.is_empty() {
        return Err(Error::Data(format!(
            "training split contains anomalous samples: {}",
            bad.join(", ")
        )));
    }
    let missing: Vec<PathBuf> = manifest
        .iter()
        .map(|e| dir.join(&e.file))
        .filter(|p| !p.is_file())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingFiles(missing));
    }
    let samples: Vec<Sample> = manifest
        .par_iter()
        .map(|e| {
            let path = dir.join(&e.file);
            let s = read_sample_csv(&path, schema)?;
            if s.sample_id != e.sample_id || s.category != e.category || s.variant != e.variant {
                return Err(Error::Data(format!(
                    "{}: labels (sample {}, category {}, variant {}) disagree with the manifest (sample {}, category {}, variant {})",
                    path.display(),
                    s.sample_id,
                    s.category,
                    s.variant,
                    e.sample_id,
                    e.category,
                    e.variant
                )));
            }
            Ok(s)
        })
        .collect::<Result<_>>()?;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (e, s) in manifest.iter().zip(samples) {
        match e.split {
            Split::Train => train.push(s),
            Split::Test => test.push(s),
        }
    }
    let ds = Dataset {
        schema: schema.clone(),
        train,
        test,
    };
    ds.validate()?;
    log::info!(
        "loaded {}: {} train, {} normal test, {} anomalous test",
        dir.display(),
        ds.train.len(),
        ds.normal_test().count(),
        ds.anomalous_test().count()
    );
    Ok(ds)
}

/// Writes one sample in the ingestion format; floats use shortest
/// round-trip formatting so reloading is exact.
pub fn write_sample_csv(path: impl AsRef<Path>, sample: &Sample, schema: &SignalSchema) -> Result<()> {
    let path = path.as_ref();
    let (t, s) = sample.values.dims2()?;
    if s != schema.len() {
        return Err(Error::Data(format!(
            "sample {} has {s} signals, schema has {}",
            sample.sample_id,
            schema.len()
        )));
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = METADATA_COLUMNS.to_vec();
    header.extend(schema.names());
    w.write_record(&header)?;
    let meta = [
        sample.sample_id.to_string(),
        sample.is_anomaly().to_string(),
        sample.category.to_string(),
        "0".to_string(),
        "true".to_string(),
        sample.variant.to_string(),
        "0".to_string(),
    ];
    let mut rec: Vec<String> = Vec::with_capacity(header.len());
    for i in 0..t {
        rec.clear();
        rec.push((i as f64 / sample.native_hz as f64).to_string());
        rec.extend(meta.iter().cloned());
        rec.extend(sample.values.data()[i * s..(i + 1) * s].iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `schema.csv`, `manifest.csv`, `samples/sample_NNNNN.csv` and, when
/// given, the injection ground truth.
pub fn write_dataset(dir: impl AsRef<Path>, ds: &Dataset, injections: &[Injection]) -> Result<()> {
    let dir = dir.as_ref();
    let samples_dir = dir.join("samples");
    fs::create_dir_all(&samples_dir).map_err(|e| Error::io(&samples_dir, e))?;
    ds.schema.save(dir.join(SCHEMA_FILE))?;

    let entries: Vec<(Split, &Sample)> = ds
        .train
        .iter()
        .map(|s| (Split::Train, s))
        .chain(ds.test.iter().map(|s| (Split::Test, s)))
        .collect();
    entries.par_iter().try_for_each(|(_, s)| {
        write_sample_csv(samples_dir.join(format!("sample_{:05}.csv", s.sample_id)), s, &ds.schema)
    })?;

    let mpath = dir.join(MANIFEST_FILE);
    let mut w = csv::Writer::from_path(&mpath)?;
    w.write_record(["sample_id", "file", "split", "category", "variant"])?;
    for (split, s) in &entries {
        w.write_record([
            s.sample_id.to_string(),
            format!("samples/sample_{:05}.csv", s.sample_id),
            split.to_string(),
            s.category.to_string(),
            s.variant.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&mpath, e))?;

    if !injections.is_empty() {
        let ipath = dir.join(INJECTIONS_FILE);
        let mut w = csv::Writer::from_path(&ipath)?;
        w.write_record(["sample_id", "kind", "category", "signal", "t_star", "width", "magnitude"])?;
        for inj in injections {
            w.write_record([
                inj.sample_id.to_string(),
                inj.kind.to_string(),
                inj.kind.category().to_string(),
                inj.signal.map(|s| s.to_string()).unwrap_or_default(),
                inj.t_star.to_string(),
                inj.width.to_string(),
                inj.magnitude.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(&ipath, e))?;
    }
    Ok(())
}

pub fn read_injections(dir: impl AsRef<Path>) -> Result<Vec<Injection>> {
    let path = dir.as_ref().join(INJECTIONS_FILE);
    let mut r = csv::Reader::from_path(&path)?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        if rec.len() != 7 {
            return Err(Error::Data(format!("{}: row {row}: expected 7 fields", path.display())));
        }
        out.push(Injection {
            sample_id: field(&path, row, "sample_id", &rec[0])?,
            kind: rec[1].parse::<InjectionKind>()?,
            signal: match rec[3].trim() {
                "" => None,
                v => Some(field(&path, row, "signal", v)?),
            },
            t_star: field(&path, row, "t_star", &rec[4])?,
            width: field(&path, row, "width", &rec[5])?,
            magnitude: field(&path, row, "magnitude", &rec[6])?,
        });
    }
    Ok(out)
}
