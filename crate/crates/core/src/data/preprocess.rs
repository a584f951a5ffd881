use rayon::prelude::*;

use super::schema::{SignalSchema, SignalSubset};
use super::Sample;
use crate::container::{BlobData, Container};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Lower bound on per-signal standard deviations.
pub const STD_FLOOR: f64 = 1e-8;

/// Window-mean decimation of a time-major `[T, S]` matrix. The last window
/// may be partial; `T' = ceil(T / factor)`.
pub fn resample(x: &Tensor<f64>, from_hz: u32, to_hz: u32) -> Result<Tensor<f64>> {
    let (t, s) = x.dims2()?;
    if to_hz == 0 || from_hz == 0 || from_hz % to_hz != 0 {
        return Err(Error::InvalidArgument(format!(
            "cannot resample {from_hz} Hz to {to_hz} Hz: rates must divide"
        )));
    }
    let factor = (from_hz / to_hz) as usize;
    if factor == 1 {
        return Ok(x.clone());
    }
    let t_out = t.div_ceil(factor);
    let d = x.data();
    let mut out = vec![0.0; t_out * s];
    for (w, row) in out.chunks_mut(s).enumerate() {
        let lo = w * factor;
        let hi = (lo + factor).min(t);
        for i in lo..hi {
            for (o, v) in row.iter_mut().zip(&d[i * s..(i + 1) * s]) {
                *o += v;
            }
        }
        let n = (hi - lo) as f64;
        row.iter_mut().for_each(|o| *o /= n);
    }
    Tensor::new(vec![t_out, s], out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessConfig {
    pub target_hz: u32,
    pub subset: SignalSubset,
    pub standardize: bool,
    /// Cut samples longer than the training maximum instead of failing.
    pub allow_truncate: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            target_hz: 100,
            subset: SignalSubset::All,
            standardize: true,
            allow_truncate: false,
        }
    }
}

/// Frozen preprocessing fitted on the training split: resample, select
/// signals, standardize, pad by holding the last value, and append a zero
/// signal when the selection has odd width.
#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessor {
    pub config: PreprocessConfig,
    pub schema_len: usize,
    pub signals: Vec<String>,
    indices: Vec<usize>,
    pub t_max: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Preprocessor {
    pub fn fit(train: &[Sample], schema: &SignalSchema, config: PreprocessConfig) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Data("cannot fit preprocessing on an empty training set".into()));
        }
        let indices = schema.select(&config.subset)?;
        let signals: Vec<String> = indices.iter().map(|&i| schema.signals()[i].name.clone()).collect();
        let mut p = Preprocessor {
            config,
            schema_len: schema.len(),
            signals,
            indices,
            t_max: 0,
            mean: Vec::new(),
            std: Vec::new(),
        };
        let selected: Vec<Tensor<f64>> = train
            .par_iter()
            .map(|s| p.resample_select(s))
            .collect::<Result<_>>()?;

        let k = p.indices.len();
        let mut n = 0usize;
        let mut sum = vec![0.0; k];
        for x in &selected {
            p.t_max = p.t_max.max(x.shape()[0]);
            n += x.shape()[0];
            for row in x.data().chunks(k) {
                sum.iter_mut().zip(row).for_each(|(a, v)| *a += v);
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        let mut sq = vec![0.0; k];
        for x in &selected {
            for row in x.data().chunks(k) {
                for ((a, v), m) in sq.iter_mut().zip(row).zip(&mean) {
                    *a += (v - m) * (v - m);
                }
            }
        }
        p.std = sq.iter().map(|s| (s / n as f64).sqrt().max(STD_FLOOR)).collect();
        p.mean = mean;
        Ok(p)
    }

    fn resample_select(&self, s: &Sample) -> Result<Tensor<f64>> {
        if s.signals() != self.schema_len {
            return Err(Error::Data(format!(
                "sample {} has {} signals, expected {}",
                s.sample_id,
                s.signals(),
                self.schema_len
            )));
        }
        let x = resample(&s.values, s.native_hz, self.config.target_hz)?;
        let (t, w) = x.dims2()?;
        let d = x.data();
        let k = self.indices.len();
        let mut out = Vec::with_capacity(t * k);
        for row in d.chunks(w) {
            out.extend(self.indices.iter().map(|&i| row[i]));
        }
        Tensor::new(vec![t, k], out)
    }

    /// Model input width (selected signals plus the optional zero signal).
    pub fn output_signals(&self) -> usize {
        self.indices.len() + self.has_dummy() as usize
    }

    pub fn has_dummy(&self) -> bool {
        self.indices.len() % 2 == 1
    }

    pub fn output_shape(&self) -> (usize, usize) {
        (self.t_max, self.output_signals())
    }

    /// Names of the model input columns; the zero signal is called `pad_zero`.
    pub fn output_names(&self) -> Vec<String> {
        let mut v = self.signals.clone();
        if self.has_dummy() {
            v.push("pad_zero".into());
        }
        v
    }

    pub fn apply(&self, s: &Sample) -> Result<Tensor<f64>> {
        let x = self.resample_select(s)?;
        let (t, k) = x.dims2()?;
        if t == 0 {
            return Err(Error::Data(format!("sample {} is empty", s.sample_id)));
        }
        if t > self.t_max && !self.config.allow_truncate {
            return Err(Error::Data(format!(
                "sample {} has {t} steps at {} Hz, longer than the training maximum {} (enable truncation to cut it)",
                s.sample_id, self.config.target_hz, self.t_max
            )));
        }
        let t_keep = t.min(self.t_max);
        let width = self.output_signals();
        let mut out = vec![0.0; self.t_max * width];
        let d = x.data();
        for i in 0..self.t_max {
            let src = i.min(t_keep - 1);
            let row = &d[src * k..(src + 1) * k];
            let dst = &mut out[i * width..i * width + k];
            if self.config.standardize {
                for (j, o) in dst.iter_mut().enumerate() {
                    *o = (row[j] - self.mean[j]) / self.std[j];
                }
            } else {
                dst.copy_from_slice(row);
            }
        }
        Tensor::new(vec![self.t_max, width], out)
    }

    pub fn apply_all(&self, samples: &[Sample]) -> Result<Vec<Tensor<f64>>> {
        samples.par_iter().map(|s| self.apply(s)).collect()
    }

    pub fn write_into(&self, c: &mut Container) {
        c.set("pre.target_hz", self.config.target_hz);
        c.set("pre.subset", &self.config.subset);
        c.set("pre.standardize", self.config.standardize);
        c.set("pre.allow_truncate", self.config.allow_truncate);
        c.set("pre.schema_len", self.schema_len);
        c.set("pre.t_max", self.t_max);
        c.set_list("pre.signals", &self.signals);
        c.set_list("pre.indices", &self.indices);
        let k = self.indices.len();
        c.push_blob("pre.mean", vec![k], BlobData::F64(self.mean.clone()));
        c.push_blob("pre.std", vec![k], BlobData::F64(self.std.clone()));
    }

    pub fn read_from(c: &Container) -> Result<Self> {
        let config = PreprocessConfig {
            target_hz: c.parse("pre.target_hz")?,
            subset: c.parse("pre.subset")?,
            standardize: c.parse("pre.standardize")?,
            allow_truncate: c.parse("pre.allow_truncate")?,
        };
        let signals: Vec<String> = c.parse_list("pre.signals")?;
        let indices: Vec<usize> = c.parse_list("pre.indices")?;
        let schema_len: usize = c.parse("pre.schema_len")?;
        let mean = c.blob_f64("pre.mean")?.1.to_vec();
        let std = c.blob_f64("pre.std")?.1.to_vec();
        let k = indices.len();
        if k == 0 || signals.len() != k || mean.len() != k || std.len() != k || indices.iter().any(|&i| i >= schema_len) {
            return Err(Error::Format("inconsistent preprocessing entries".into()));
        }
        Ok(Preprocessor {
            config,
            schema_len,
            signals,
            indices,
            t_max: c.parse("pre.t_max")?,
            mean,
            std,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(id: u32, t: usize, s: usize, hz: u32, f: impl Fn(usize, usize) -> f64) -> Sample {
        let v = Tensor::from_fn(vec![t, s], |i| f(i / s, i % s));
        Sample::new(id, v, 12, 0, hz).unwrap()
    }

    #[test]
    fn resample_examples() {
        let c = Tensor::full(vec![23, 2], 3.5);
        let r = resample(&c, 500, 100).unwrap();
        assert_eq!(r.shape(), &[5, 2]);
        assert!(r.data().iter().all(|&v| v == 3.5));
        assert_eq!(resample(&c, 500, 500).unwrap(), c);
        let alt = Tensor::from_fn(vec![8, 1], |i| if i % 2 == 0 { 1.0 } else { -1.0 });
        assert!(resample(&alt, 200, 100).unwrap().data().iter().all(|&v| v == 0.0));
        assert!(resample(&c, 500, 300).is_err());
        assert!(resample(&c, 100, 500).is_err());
        assert!(resample(&c, 100, 0).is_err());
    }

    #[test]
    fn constant_signal_is_floored() {
        let schema = SignalSchema::synthetic(2);
        let train = vec![sample(0, 10, 2, 100, |t, s| if s == 0 { 4.0 } else { t as f64 })];
        let p = Preprocessor::fit(&train, &schema, PreprocessConfig::default()).unwrap();
        assert_eq!(p.mean[0], 4.0);
        assert_eq!(p.std[0], STD_FLOOR);
        let x = p.apply(&train[0]).unwrap();
        assert!((0..10).all(|t| x.data()[t * 2] == 0.0));
    }

    #[test]
    fn max_length_and_padding() {
        let schema = SignalSchema::synthetic(2);
        let train = vec![
            sample(0, 90, 2, 100, |t, s| (t + s) as f64),
            sample(1, 110, 2, 100, |t, s| (t * s) as f64 * 0.1),
        ];
        let p = Preprocessor::fit(&train, &schema, PreprocessConfig::default()).unwrap();
        assert_eq!(p.t_max, 110);
        let long = p.apply(&train[1]).unwrap();
        assert_eq!(long.shape(), &[110, 2]);
        assert_ne!(long.data()[219], long.data()[217]);
        let short = p.apply(&train[0]).unwrap();
        // rows past the end repeat the last observed row
        let last = &short.data()[89 * 2..90 * 2];
        for t in 90..110 {
            assert_eq!(&short.data()[t * 2..t * 2 + 2], last);
        }
        let too_long = sample(2, 130, 2, 100, |_, _| 0.0);
        assert!(p.apply(&too_long).is_err());
        let mut cfg = p.config.clone();
        cfg.allow_truncate = true;
        let q = Preprocessor { config: cfg, ..p.clone() };
        assert_eq!(q.apply(&too_long).unwrap().shape(), &[110, 2]);
    }

    #[test]
    fn odd_width_gets_zero_signal() {
        let schema = SignalSchema::synthetic(3);
        let train = vec![sample(0, 20, 3, 100, |t, s| (t * (s + 1)) as f64)];
        let p = Preprocessor::fit(&train, &schema, PreprocessConfig::default()).unwrap();
        assert!(p.has_dummy());
        assert_eq!(p.output_shape(), (20, 4));
        assert_eq!(p.output_names().last().unwrap(), "pad_zero");
        let x = p.apply(&train[0]).unwrap();
        assert!((0..20).all(|t| x.data()[t * 4 + 3] == 0.0));
    }

    #[test]
    fn real_schema_subset_widths() {
        let schema = SignalSchema::voraus();
        let train = vec![sample(0, 10, 130, 500, |t, s| (t * s) as f64)];
        for (subset, width) in [
            (SignalSubset::Mechanical, 78),
            (SignalSubset::Electrical, 52),
            (SignalSubset::All, 130),
        ] {
            let cfg = PreprocessConfig { subset, ..Default::default() };
            let p = Preprocessor::fit(&train, &schema, cfg).unwrap();
            assert_eq!(p.output_signals(), width);
            assert!(!p.has_dummy());
            assert_eq!(p.t_max, 2);
        }
    }

    #[test]
    fn errors() {
        let schema = SignalSchema::synthetic(2);
        assert!(Preprocessor::fit(&[], &schema, PreprocessConfig::default()).is_err());
        let wrong = vec![sample(0, 10, 3, 100, |_, _| 1.0)];
        assert!(Preprocessor::fit(&wrong, &schema, PreprocessConfig::default()).is_err());
    }

    #[test]
    fn container_round_trip() {
        let schema = SignalSchema::synthetic(5);
        let train = vec![sample(0, 40, 5, 200, |t, s| ((t * 7 + s) as f64).sin())];
        let cfg = PreprocessConfig { subset: "names:motor_torque_1+joint_position_3".parse().unwrap(), ..Default::default() };
        let p = Preprocessor::fit(&train, &schema, cfg).unwrap();
        let mut c = Container::new("test");
        p.write_into(&mut c);
        let mut buf = Vec::new();
        c.write_to(&mut buf).unwrap();
        let back = Preprocessor::read_from(&Container::read_from(buf.as_slice()).unwrap()).unwrap();
        assert_eq!(back, p);
        assert_eq!(back.apply(&train[0]).unwrap(), p.apply(&train[0]).unwrap());
    }

    proptest! {
        #[test]
        fn standardized_training_stats(
            lens in prop::collection::vec(5usize..40, 1..5),
            scale in 0.1f64..50.0,
            offset in -100.0f64..100.0,
            seed in 0u64..1000,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let schema = SignalSchema::synthetic(4);
            let train: Vec<Sample> = lens.iter().enumerate().map(|(i, &t)| {
                let v = Tensor::from_fn(vec![t, 4], |_| offset + scale * rng.random::<f64>());
                Sample::new(i as u32, v, 12, 0, 100).unwrap()
            }).collect();
            let p = Preprocessor::fit(&train, &schema, PreprocessConfig::default()).unwrap();
            let xs = p.apply_all(&train).unwrap();
            // statistics over the original rows only
            for j in 0..4 {
                let vals: Vec<f64> = xs.iter().zip(&lens)
                    .flat_map(|(x, &t)| (0..t).map(move |i| x.data()[i * 4 + j]))
                    .collect();
                let n = vals.len() as f64;
                let m = vals.iter().sum::<f64>() / n;
                let sd = (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
                prop_assert!(m.abs() <= 1e-6);
                prop_assert!((sd - 1.0).abs() <= 1e-3);
            }
            // padding leaves the original rows alone and applying twice is stable
            for ((x, s), &t) in xs.iter().zip(&train).zip(&lens) {
                let direct: Vec<f64> = s.values.data().iter().enumerate()
                    .map(|(i, v)| (v - p.mean[i % 4]) / p.std[i % 4]).collect();
                prop_assert_eq!(&x.data()[..t * 4], &direct[..]);
                prop_assert_eq!(x, &p.apply(s).unwrap());
            }
            let again = Preprocessor::fit(&train, &schema, PreprocessConfig::default()).unwrap();
            prop_assert_eq!(again, p);
        }

        #[test]
        fn resample_factor_one_is_idempotent(t in 1usize..50, s in 1usize..5, f in 1u32..6) {
            let x = Tensor::from_fn(vec![t, s], |i| (i as f64 * 0.37).cos());
            let r = resample(&x, 100 * f, 100).unwrap();
            prop_assert_eq!(r.shape()[0], t.div_ceil(f as usize));
            prop_assert_eq!(resample(&r, 100, 100).unwrap(), r);
        }
    }
}
