//! Model container: a human-readable text header followed by raw
//! little-endian blobs.
//!
//! ```text
//! mvtflow-container 1
//! kind = mvt-flow
//! input_shape = 256 8
//! ...
//! blob block.0.g1.conv0.weight dtype=f32 shape=8x4x13 offset=0 bytes=1664
//! ...
//! end
//! <blob bytes, concatenated in declaration order>
//! ```
//!
//! Offsets are relative to the first byte after the `end` line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const MAGIC: &str = "mvtflow-container";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum BlobData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl BlobData {
    fn dtype(&self) -> &'static str {
        match self {
            BlobData::F32(_) => "f32",
            BlobData::F64(_) => "f64",
        }
    }

    fn len(&self) -> usize {
        match self {
            BlobData::F32(v) => v.len(),
            BlobData::F64(v) => v.len(),
        }
    }

    fn byte_len(&self) -> usize {
        match self {
            BlobData::F32(v) => v.len() * 4,
            BlobData::F64(v) => v.len() * 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Blob {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: BlobData,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Container {
    pub kind: String,
    header: Vec<(String, String)>,
    blobs: Vec<Blob>,
}

fn check_token(what: &str, s: &str) -> Result<()> {
    if s.is_empty() || s.contains(char::is_whitespace) || s.contains('=') {
        return Err(Error::Format(format!("invalid {what} {s:?}")));
    }
    Ok(())
}

impl Container {
    pub fn new(kind: impl Into<String>) -> Self {
        Self {
            kind: kind.into(),
            ..Self::default()
        }
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        let key = key.into();
        let value = value.to_string();
        if let Some(slot) = self.header.iter_mut().find(|(k, _)| *k == key) {
            slot.1 = value;
        } else {
            self.header.push((key, value));
        }
    }

    pub fn set_list<T: ToString>(&mut self, key: impl Into<String>, values: &[T]) {
        let joined = values.iter().map(T::to_string).collect::<Vec<_>>().join(" ");
        self.set(key, joined);
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.header
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::Format(format!("missing header key {key:?}")))
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.require(key)?;
        raw.parse()
            .map_err(|_| Error::Format(format!("bad value for {key}: {raw:?}")))
    }

    pub fn parse_list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        let raw = self.require(key)?;
        raw.split_whitespace()
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::Format(format!("bad entry in {key}: {v:?}")))
            })
            .collect()
    }

    pub fn header(&self) -> &[(String, String)] {
        &self.header
    }

    pub fn push_blob(&mut self, name: impl Into<String>, shape: Vec<usize>, data: BlobData) {
        self.blobs.push(Blob {
            name: name.into(),
            shape,
            data,
        });
    }

    pub fn blobs(&self) -> &[Blob] {
        &self.blobs
    }

    pub fn blob(&self, name: &str) -> Result<&Blob> {
        self.blobs
            .iter()
            .find(|b| b.name == name)
            .ok_or_else(|| Error::Format(format!("missing blob {name:?}")))
    }

    pub fn blob_f32(&self, name: &str) -> Result<(&[usize], &[f32])> {
        match self.blob(name)? {
            Blob {
                shape,
                data: BlobData::F32(v),
                ..
            } => Ok((shape, v)),
            _ => Err(Error::Format(format!("blob {name:?} is not f32"))),
        }
    }

    pub fn blob_f64(&self, name: &str) -> Result<(&[usize], &[f64])> {
        match self.blob(name)? {
            Blob {
                shape,
                data: BlobData::F64(v),
                ..
            } => Ok((shape, v)),
            _ => Err(Error::Format(format!("blob {name:?} is not f64"))),
        }
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        check_token("kind", &self.kind)?;
        let mut head = format!("{MAGIC} {FORMAT_VERSION}\nkind = {}\n", self.kind);
        for (k, v) in &self.header {
            check_token("header key", k)?;
            if v.contains('\n') {
                return Err(Error::Format(format!("header value for {k} contains a newline")));
            }
            head.push_str(&format!("{k} = {v}\n"));
        }
        let mut offset = 0usize;
        for b in &self.blobs {
            check_token("blob name", &b.name)?;
            if b.shape.iter().product::<usize>() != b.data.len() {
                return Err(Error::Format(format!("blob {} shape/length mismatch", b.name)));
            }
            let shape = b.shape.iter().map(usize::to_string).collect::<Vec<_>>().join("x");
            let bytes = b.data.byte_len();
            head.push_str(&format!(
                "blob {} dtype={} shape={shape} offset={offset} bytes={bytes}\n",
                b.name,
                b.data.dtype()
            ));
            offset += bytes;
        }
        head.push_str("end\n");
        let io = |e| Error::io("<container>", e);
        w.write_all(head.as_bytes()).map_err(io)?;
        for b in &self.blobs {
            match &b.data {
                BlobData::F32(v) => {
                    for x in v {
                        w.write_all(&x.to_le_bytes()).map_err(io)?;
                    }
                }
                BlobData::F64(v) => {
                    for x in v {
                        w.write_all(&x.to_le_bytes()).map_err(io)?;
                    }
                }
            }
        }
        w.flush().map_err(io)
    }

    pub fn read_from(r: impl Read) -> Result<Self> {
        let mut r = BufReader::new(r);
        let io = |e| Error::io("<container>", e);
        let mut line = String::new();
        let next_line = |r: &mut BufReader<_>, line: &mut String| -> Result<()> {
            line.clear();
            if r.read_line(line).map_err(io)? == 0 {
                return Err(Error::Format("unexpected end of header".into()));
            }
            if line.ends_with('\n') {
                line.pop();
            }
            Ok(())
        };

        next_line(&mut r, &mut line)?;
        let version = line
            .strip_prefix(MAGIC)
            .map(str::trim)
            .ok_or_else(|| Error::Format("not an mvtflow container".into()))?;
        if version != FORMAT_VERSION.to_string() {
            return Err(Error::Format(format!("unsupported format version {version}")));
        }

        let mut out = Container::default();
        let mut decls: Vec<(String, String, Vec<usize>, usize, usize)> = Vec::new();
        loop {
            next_line(&mut r, &mut line)?;
            if line == "end" {
                break;
            }
            if let Some(rest) = line.strip_prefix("blob ") {
                decls.push(parse_blob_decl(rest)?);
            } else if let Some((k, v)) = line.split_once(" = ") {
                if k == "kind" {
                    out.kind = v.to_string();
                } else {
                    out.header.push((k.to_string(), v.to_string()));
                }
            } else {
                return Err(Error::Format(format!("malformed header line {line:?}")));
            }
        }
        if out.kind.is_empty() {
            return Err(Error::Format("missing kind".into()));
        }

        let mut body = Vec::new();
        r.read_to_end(&mut body).map_err(io)?;
        let mut expected_offset = 0;
        for (name, dtype, shape, offset, bytes) in decls {
            if offset != expected_offset || offset + bytes > body.len() {
                return Err(Error::Format(format!("blob {name:?} has bad offset/size")));
            }
            let raw = &body[offset..offset + bytes];
            let n: usize = shape.iter().product();
            let data = match dtype.as_str() {
                "f32" if bytes == n * 4 => BlobData::F32(
                    raw.chunks_exact(4)
                        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                        .collect(),
                ),
                "f64" if bytes == n * 8 => BlobData::F64(
                    raw.chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                        .collect(),
                ),
                _ => {
                    return Err(Error::Format(format!(
                        "blob {name:?}: dtype {dtype} inconsistent with {bytes} bytes for shape {shape:?}"
                    )))
                }
            };
            out.blobs.push(Blob { name, shape, data });
            expected_offset = offset + bytes;
        }
        if expected_offset != body.len() {
            return Err(Error::Format("trailing bytes after last blob".into()));
        }
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(BufWriter::new(f)).map_err(|e| match e {
            Error::Io { source, .. } => Error::io(path, source),
            other => other,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(f).map_err(|e| match e {
            Error::Io { source, .. } => Error::io(path, source),
            other => other,
        })
    }
}

fn parse_blob_decl(rest: &str) -> Result<(String, String, Vec<usize>, usize, usize)> {
    let bad = || Error::Format(format!("malformed blob line {rest:?}"));
    let mut parts = rest.split_whitespace();
    let name = parts.next().ok_or_else(bad)?.to_string();
    let (mut dtype, mut shape, mut offset, mut bytes) = (None, None, None, None);
    for kv in parts {
        let (k, v) = kv.split_once('=').ok_or_else(bad)?;
        match k {
            "dtype" => dtype = Some(v.to_string()),
            "shape" => {
                shape = Some(
                    v.split('x')
                        .map(|d| d.parse::<usize>().map_err(|_| bad()))
                        .collect::<Result<Vec<_>>>()?,
                )
            }
            "offset" => offset = Some(v.parse().map_err(|_| bad())?),
            "bytes" => bytes = Some(v.parse().map_err(|_| bad())?),
            _ => return Err(bad()),
        }
    }
    Ok((
        name,
        dtype.ok_or_else(bad)?,
        shape.ok_or_else(bad)?,
        offset.ok_or_else(bad)?,
        bytes.ok_or_else(bad)?,
    ))
}
