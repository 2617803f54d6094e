use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::codec::VariableData;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Dtype {
    F32,
    #[default]
    F64,
}

impl Dtype {
    pub fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Dtype::F32 => "f32",
            Dtype::F64 => "f64",
        }
    }
}

impl FromStr for Dtype {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" | "float32" => Ok(Dtype::F32),
            "f64" | "float64" => Ok(Dtype::F64),
            other => Err(Error::InvalidInput(format!(
                "unknown dtype `{other}` (f32 or f64)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ByteOrder {
    #[default]
    Little,
    Big,
}

impl ByteOrder {
    pub fn as_str(self) -> &'static str {
        match self {
            ByteOrder::Little => "little",
            ByteOrder::Big => "big",
        }
    }
}

impl FromStr for ByteOrder {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "little" | "le" => Ok(ByteOrder::Little),
            "big" | "be" => Ok(ByteOrder::Big),
            other => Err(Error::InvalidInput(format!(
                "unknown byte order `{other}` (little or big)"
            ))),
        }
    }
}

/// A raw binary input file.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub path: PathBuf,
    /// Shape of one variable; inferred from the file size when absent.
    pub dims: Option<Vec<usize>>,
    pub dtype: Dtype,
    pub byte_order: ByteOrder,
}

impl DatasetSpec {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        DatasetSpec {
            path: path.into(),
            dims: None,
            dtype: Dtype::F64,
            byte_order: ByteOrder::Little,
        }
    }

    /// Parses `path` or `path:D1xD2x...`.
    pub fn parse(arg: &str) -> Result<Self> {
        if let Some((path, dims)) = arg.rsplit_once(':') {
            let parsed: std::result::Result<Vec<usize>, _> =
                dims.split('x').map(str::parse::<usize>).collect();
            if let Ok(d) = parsed {
                if d.is_empty() || d.contains(&0) {
                    return Err(Error::InvalidInput(format!("invalid dims in `{arg}`")));
                }
                let mut spec = DatasetSpec::new(path);
                spec.dims = Some(d);
                return Ok(spec);
            }
        }
        Ok(DatasetSpec::new(arg))
    }
}

fn decode(bytes: &[u8], dtype: Dtype, order: ByteOrder) -> Vec<f64> {
    match (dtype, order) {
        (Dtype::F64, ByteOrder::Little) => bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect(),
        (Dtype::F64, ByteOrder::Big) => bytes
            .chunks_exact(8)
            .map(|c| f64::from_be_bytes(c.try_into().expect("8 bytes")))
            .collect(),
        (Dtype::F32, ByteOrder::Little) => bytes
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
            .collect(),
        (Dtype::F32, ByteOrder::Big) => bytes
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_be_bytes(c.try_into().expect("4 bytes"))))
            .collect(),
    }
}

/// Reads `count` elements starting at element `offset`.
pub fn read_raw(
    path: &Path,
    dtype: Dtype,
    order: ByteOrder,
    offset: usize,
    count: usize,
) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let w = dtype.width();
    let start = offset * w;
    let end = start + count * w;
    if bytes.len() < end {
        return Err(Error::InvalidInput(format!(
            "{}: expected at least {end} bytes, found {}",
            path.display(),
            bytes.len()
        )));
    }
    Ok(decode(&bytes[start..end], dtype, order))
}

/// Loads the variables `names` from one file, stored back to back.
/// Single-precision input is widened to double exactly.
pub fn ingest(spec: &DatasetSpec, names: &[String]) -> Result<Vec<VariableData>> {
    if names.is_empty() {
        return Err(Error::InvalidInput("no variable names given".into()));
    }
    let bytes = fs::read(&spec.path).map_err(|e| Error::io(&spec.path, e))?;
    let w = spec.dtype.width();
    let per_var = match &spec.dims {
        Some(d) => d.iter().product::<usize>(),
        None => {
            let unit = w * names.len();
            if bytes.is_empty() || bytes.len() % unit != 0 {
                return Err(Error::InvalidInput(format!(
                    "{}: {} bytes is not a whole number of {} {}-byte values per variable",
                    spec.path.display(),
                    bytes.len(),
                    names.len(),
                    w
                )));
            }
            bytes.len() / unit
        }
    };
    let expected = per_var * w * names.len();
    if bytes.len() != expected {
        return Err(Error::InvalidInput(format!(
            "{}: expected {expected} bytes ({} variables x {per_var} x {w}), found {}",
            spec.path.display(),
            names.len(),
            bytes.len()
        )));
    }
    let values = decode(&bytes, spec.dtype, spec.byte_order);
    names
        .iter()
        .zip(values.chunks_exact(per_var))
        .map(|(name, chunk)| {
            if let Some(i) = chunk.iter().position(|v| v.is_nan()) {
                return Err(Error::InvalidInput(format!(
                    "{}: NaN in `{name}` at index {i}",
                    spec.path.display()
                )));
            }
            let var = VariableData::new(name.clone(), chunk.to_vec())?;
            match &spec.dims {
                Some(d) => var.with_dims(d.clone()),
                None => Ok(var),
            }
        })
        .collect()
}

/// Writes little-endian doubles.
pub fn write_f64(path: &Path, values: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
