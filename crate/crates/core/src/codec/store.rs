use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use crc::{Crc, CRC_64_XZ};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{CodecKind, EncodedVariable, OutlierMask};

pub const FORMAT_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";
const CRC64: Crc<u64> = Crc::<u64>::new(&CRC_64_XZ);

/// CRC-64/XZ of `bytes` as 16 lowercase hex digits.
pub fn checksum(bytes: &[u8]) -> String {
    format!("{:016x}", CRC64.checksum(bytes))
}

pub(crate) fn encode_blob(bytes: &[u8]) -> String {
    BASE64.encode(bytes)
}

/// Variable names become directory names, so keep them tame.
pub(crate) fn check_name(name: &str) -> Result<()> {
    let ok = !name.is_empty()
        && !name.starts_with('.')
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "variable name `{name}` must be non-empty ASCII letters, digits, `_`, `-` or `.`"
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub variables: Vec<VariableRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub id: usize,
    pub bytes: u64,
    pub nominal_bound: f64,
    pub checksum: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskRecord {
    /// Value every masked point holds exactly.
    pub constant: f64,
    pub masked: usize,
    pub bytes: u64,
    pub checksum: String,
}

/// Where the original data came from, so evaluation tools can find it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceRecord {
    pub path: PathBuf,
    /// `f32` or `f64`.
    pub dtype: String,
    /// `little` or `big`.
    pub byte_order: String,
    /// Offset into the file, in elements.
    #[serde(default)]
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableRecord {
    pub name: String,
    pub codec: CodecKind,
    pub n_e: usize,
    pub dims: Vec<usize>,
    /// Minimum over unmasked points.
    pub min: f64,
    /// Maximum over unmasked points.
    pub max: f64,
    pub value_range: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<MaskRecord>,
    pub segments: Vec<SegmentRecord>,
    /// Codec-specific metadata, base64.
    pub metadata: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<SourceRecord>,
}

impl VariableRecord {
    pub fn metadata_bytes(&self) -> Result<Vec<u8>> {
        BASE64.decode(&self.metadata).map_err(|e| {
            Error::CorruptPayload(format!("metadata of `{}` is not base64: {e}", self.name))
        })
    }

    pub fn unmasked_len(&self) -> usize {
        self.n_e - self.mask.as_ref().map_or(0, |m| m.masked)
    }

    pub fn total_bytes(&self) -> u64 {
        self.segments.iter().map(|s| s.bytes).sum::<u64>()
            + self.mask.as_ref().map_or(0, |m| m.bytes)
    }

    /// Structural checks that do not touch the payload files.
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Err(Error::InvalidInput(format!("`{}`: {reason}", self.name)));
        check_name(&self.name)?;
        if self.n_e == 0 {
            return bad("n_e is zero".into());
        }
        if self.dims.iter().product::<usize>() != self.n_e {
            return bad(format!(
                "dims {:?} do not multiply to n_e {}",
                self.dims, self.n_e
            ));
        }
        if !(self.min.is_finite() && self.max.is_finite() && self.min <= self.max) {
            return bad(format!("invalid min/max {} / {}", self.min, self.max));
        }
        if !(self.value_range >= 0.0 && self.value_range.is_finite()) {
            return bad(format!("invalid value range {}", self.value_range));
        }
        if let Some(m) = &self.mask {
            if m.masked > self.n_e || m.bytes != self.n_e.div_ceil(8) as u64 {
                return bad("mask size does not match n_e".into());
            }
            if !m.constant.is_finite() {
                return bad("mask constant is not finite".into());
            }
        }
        if self.unmasked_len() == 0 && !self.segments.is_empty() {
            return bad("fully masked variable has segments".into());
        }
        if self.unmasked_len() > 0 && self.segments.is_empty() {
            return bad("no segments".into());
        }
        let mut prev = f64::INFINITY;
        for (i, s) in self.segments.iter().enumerate() {
            if s.id != i {
                return bad(format!("segment #{i} has id {}", s.id));
            }
            if !(s.nominal_bound.is_finite() && s.nominal_bound >= 0.0) {
                return bad(format!("segment {i} has bound {}", s.nominal_bound));
            }
            if s.nominal_bound >= prev {
                return bad(format!(
                    "segment bounds not strictly decreasing at {i} ({} after {prev})",
                    s.nominal_bound
                ));
            }
            prev = s.nominal_bound;
        }
        self.metadata_bytes()?;
        Ok(())
    }
}

impl Manifest {
    pub fn variable(&self, name: &str) -> Result<&VariableRecord> {
        self.variables
            .iter()
            .find(|v| v.name == name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn names(&self) -> Vec<&str> {
        self.variables.iter().map(|v| v.name.as_str()).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported store format version {}",
                self.format_version
            )));
        }
        let mut seen = BTreeSet::new();
        for v in &self.variables {
            if !seen.insert(v.name.as_str()) {
                return Err(Error::InvalidInput(format!(
                    "duplicate variable `{}`",
                    v.name
                )));
            }
            v.validate()?;
        }
        let mut lens = self.variables.iter().map(|v| v.n_e);
        if let Some(n) = lens.next() {
            if lens.any(|m| m != n) {
                return Err(Error::InvalidInput(
                    "variables in one store must have the same length".into(),
                ));
            }
        }
        Ok(())
    }
}

fn segment_path(dir: &Path, var: &str, id: usize) -> PathBuf {
    dir.join(var).join(format!("seg_{id}.bin"))
}

fn mask_path(dir: &Path, var: &str) -> PathBuf {
    dir.join(var).join("mask.bin")
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Writes a store to `dir`. The manifest goes last so a crashed write never
/// looks like a complete store.
pub fn write_store(dir: &Path, variables: &[EncodedVariable]) -> Result<Manifest> {
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        variables: variables.iter().map(|v| v.record.clone()).collect(),
    };
    manifest.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for var in variables {
        let name = &var.record.name;
        let var_dir = dir.join(name);
        if var_dir.exists() {
            fs::remove_dir_all(&var_dir).map_err(|e| Error::io(&var_dir, e))?;
        }
        fs::create_dir_all(&var_dir).map_err(|e| Error::io(&var_dir, e))?;
        if var.payloads.len() != var.record.segments.len() {
            return Err(Error::InvalidInput(format!(
                "`{name}` has {} payloads for {} segment records",
                var.payloads.len(),
                var.record.segments.len()
            )));
        }
        for (seg, payload) in var.record.segments.iter().zip(&var.payloads) {
            write_file(&segment_path(dir, name, seg.id), payload)?;
        }
        match (&var.mask, &var.record.mask) {
            (Some(mask), Some(_)) => write_file(&mask_path(dir, name), mask.as_bytes())?,
            (None, None) => {}
            _ => {
                return Err(Error::InvalidInput(format!(
                    "`{name}` mask bitmap and mask record disagree"
                )))
            }
        }
    }
    let tmp = dir.join(".manifest.json.tmp");
    let json = serde_json::to_vec_pretty(&manifest)?;
    write_file(&tmp, &json)?;
    let target = dir.join(MANIFEST);
    fs::rename(&tmp, &target).map_err(|e| Error::io(&target, e))?;
    Ok(manifest)
}

fn check_file(path: &Path, expected: u64) -> Result<()> {
    let meta = fs::metadata(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::corrupt(path, "file is missing")
        } else {
            Error::io(path, e)
        }
    })?;
    if meta.len() != expected {
        return Err(Error::corrupt(
            path,
            format!("expected {expected} bytes, found {}", meta.len()),
        ));
    }
    Ok(())
}

/// Reads and validates `dir/manifest.json`: structure, bound monotonicity
/// and the presence and size of every payload file. Checksums are verified
/// when a payload is read.
pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    let bytes = match fs::read(&path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::NotAStore(dir.to_path_buf()))
        }
        Err(e) => return Err(Error::io(&path, e)),
    };
    let manifest: Manifest = serde_json::from_slice(&bytes)
        .map_err(|e| Error::corrupt(&path, format!("invalid manifest: {e}")))?;
    manifest
        .validate()
        .map_err(|e| Error::corrupt(&path, e.to_string()))?;
    for var in &manifest.variables {
        for seg in &var.segments {
            check_file(&segment_path(dir, &var.name, seg.id), seg.bytes)?;
        }
        if let Some(m) = &var.mask {
            check_file(&mask_path(dir, &var.name), m.bytes)?;
        }
    }
    Ok(manifest)
}

/// Read-only handle on a written store.
#[derive(Debug, Clone)]
pub struct SegmentStore {
    dir: PathBuf,
    manifest: Manifest,
}

impl SegmentStore {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let manifest = read_manifest(&dir)?;
        Ok(SegmentStore { dir, manifest })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn variable(&self, name: &str) -> Result<&VariableRecord> {
        self.manifest.variable(name)
    }

    /// Number of points per variable (0 for an empty store).
    pub fn n_e(&self) -> usize {
        self.manifest.variables.first().map_or(0, |v| v.n_e)
    }

    fn read_checked(&self, path: &Path, bytes: u64, sum: &str) -> Result<Vec<u8>> {
        let data = fs::read(path).map_err(|e| Error::io(path, e))?;
        if data.len() as u64 != bytes {
            return Err(Error::corrupt(
                path,
                format!("expected {bytes} bytes, found {}", data.len()),
            ));
        }
        let actual = checksum(&data);
        if actual != sum {
            return Err(Error::corrupt(
                path,
                format!("checksum mismatch (manifest {sum}, file {actual})"),
            ));
        }
        Ok(data)
    }

    pub fn read_segment(&self, var: &str, id: usize) -> Result<Vec<u8>> {
        let rec = self.variable(var)?;
        let seg = rec
            .segments
            .get(id)
            .ok_or_else(|| Error::InvalidInput(format!("`{var}` has no segment {id}")))?;
        self.read_checked(&segment_path(&self.dir, var, id), seg.bytes, &seg.checksum)
    }

    pub fn read_mask(&self, var: &str) -> Result<Option<OutlierMask>> {
        let rec = self.variable(var)?;
        let Some(m) = &rec.mask else { return Ok(None) };
        let path = mask_path(&self.dir, var);
        let bytes = self.read_checked(&path, m.bytes, &m.checksum)?;
        let mask = OutlierMask::from_bytes(rec.n_e, &bytes)
            .map_err(|e| Error::corrupt(&path, e.to_string()))?;
        if mask.count() != m.masked {
            return Err(Error::corrupt(
                &path,
                format!("{} points masked, manifest says {}", mask.count(), m.masked),
            ));
        }
        Ok(Some(mask))
    }

    /// Reads every payload and checks its checksum.
    pub fn verify_all(&self) -> Result<()> {
        for var in &self.manifest.variables {
            for seg in &var.segments {
                self.read_segment(&var.name, seg.id)?;
            }
            self.read_mask(&var.name)?;
        }
        Ok(())
    }
}
