//! In-memory data model for grid fields and named tensors, plus the `.lpnb`
//! self-describing container used for datasets, checkpoints, and results.
//!
//! Container layout (all integers little-endian):
//! magic `LPNB1\0` (6 bytes) | `u32` header length | UTF-8 JSON header
//! `{"tensors":[{"name","dtype","shape"}...],"metadata":{...}}` | raw tensor
//! payloads in header order, each starting on a 64-byte boundary (zero
//! padding in between).

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use indexmap::IndexMap;
use ndarray::{Array2, ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 6] = b"LPNB1\0";
const PAYLOAD_ALIGN: usize = 64;

/// Metadata key that permits NaN/Inf tensor payloads.
pub const ALLOW_NONFINITE: &str = "allow_nonfinite";

// ---------------------------------------------------------------------------
// Tensors
// ---------------------------------------------------------------------------

/// A real tensor of arbitrary rank, row-major, in one of the two supported
/// precisions.
#[derive(Debug, Clone, PartialEq)]
pub enum Tensor {
    F32(ArrayD<f32>),
    F64(ArrayD<f64>),
}

impl Tensor {
    pub fn shape(&self) -> &[usize] {
        match self {
            Tensor::F32(a) => a.shape(),
            Tensor::F64(a) => a.shape(),
        }
    }

    pub fn dtype(&self) -> &'static str {
        match self {
            Tensor::F32(_) => "f32",
            Tensor::F64(_) => "f64",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Tensor::F32(a) => a.len(),
            Tensor::F64(a) => a.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Tensor::F32(a) => a.iter().all(|v| v.is_finite()),
            Tensor::F64(a) => a.iter().all(|v| v.is_finite()),
        }
    }

    pub fn as_f32(&self) -> Option<&ArrayD<f32>> {
        match self {
            Tensor::F32(a) => Some(a),
            Tensor::F64(_) => None,
        }
    }

    pub fn as_f64(&self) -> Option<&ArrayD<f64>> {
        match self {
            Tensor::F64(a) => Some(a),
            Tensor::F32(_) => None,
        }
    }

    /// Converts to f64 regardless of stored precision.
    pub fn to_f64(&self) -> ArrayD<f64> {
        match self {
            Tensor::F32(a) => a.mapv(f64::from),
            Tensor::F64(a) => a.clone(),
        }
    }

    fn byte_len(&self) -> usize {
        match self {
            Tensor::F32(a) => a.len() * 4,
            Tensor::F64(a) => a.len() * 8,
        }
    }

    fn write_payload(&self, out: &mut Vec<u8>) {
        match self {
            Tensor::F32(a) => {
                for v in a.iter() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            Tensor::F64(a) => {
                for v in a.iter() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
    }
}

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'_' | b'.' | b'/' | b'-'))
}

// ---------------------------------------------------------------------------
// Metadata
// ---------------------------------------------------------------------------

/// Flat metadata value: string, integer, float, or bool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MetaValue {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
}

impl MetaValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            MetaValue::Int(v) => Some(*v as f64),
            MetaValue::Float(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            MetaValue::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            MetaValue::Str(s) => Some(s),
            _ => None,
        }
    }

    fn truthy(&self) -> bool {
        match self {
            MetaValue::Bool(b) => *b,
            MetaValue::Int(v) => *v != 0,
            MetaValue::Float(v) => *v != 0.0,
            MetaValue::Str(s) => s == "true" || s == "1",
        }
    }
}

impl From<&str> for MetaValue {
    fn from(s: &str) -> Self {
        MetaValue::Str(s.to_string())
    }
}
impl From<String> for MetaValue {
    fn from(s: String) -> Self {
        MetaValue::Str(s)
    }
}
impl From<i64> for MetaValue {
    fn from(v: i64) -> Self {
        MetaValue::Int(v)
    }
}
impl From<f64> for MetaValue {
    fn from(v: f64) -> Self {
        MetaValue::Float(v)
    }
}
impl From<bool> for MetaValue {
    fn from(v: bool) -> Self {
        MetaValue::Bool(v)
    }
}

// ---------------------------------------------------------------------------
// TensorBundle
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct HeaderTensor {
    name: String,
    dtype: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    tensors: Vec<HeaderTensor>,
    metadata: IndexMap<String, MetaValue>,
}

/// Ordered collection of named tensors plus flat metadata.
///
/// Immutable once built and saved; `save` followed by `load` reproduces every
/// tensor bit-exactly and preserves entry order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorBundle {
    tensors: IndexMap<String, Tensor>,
    pub metadata: IndexMap<String, MetaValue>,
}

impl TensorBundle {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a tensor under `name`. Names must be non-empty, unique, and
    /// match `[A-Za-z0-9_./-]+`.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if !valid_name(&name) {
            return Err(Error::validation(format!(
                "invalid tensor name {name:?}: must be non-empty and match [A-Za-z0-9_./-]+"
            )));
        }
        if self.tensors.contains_key(&name) {
            return Err(Error::validation(format!("duplicate tensor name {name:?}")));
        }
        self.tensors.insert(name, tensor);
        Ok(())
    }

    pub fn insert_f32(&mut self, name: impl Into<String>, a: ArrayD<f32>) -> Result<()> {
        self.insert(name, Tensor::F32(a))
    }

    pub fn insert_f64(&mut self, name: impl Into<String>, a: ArrayD<f64>) -> Result<()> {
        self.insert(name, Tensor::F64(a))
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::format(format!("bundle is missing tensor {name:?}")))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn set_meta(&mut self, key: impl Into<String>, value: impl Into<MetaValue>) {
        self.metadata.insert(key.into(), value.into());
    }

    pub fn meta_f64(&self, key: &str) -> Result<f64> {
        self.metadata
            .get(key)
            .and_then(MetaValue::as_f64)
            .ok_or_else(|| Error::format(format!("bundle metadata is missing number {key:?}")))
    }

    pub fn meta_i64(&self, key: &str) -> Result<i64> {
        self.metadata
            .get(key)
            .and_then(MetaValue::as_i64)
            .ok_or_else(|| Error::format(format!("bundle metadata is missing integer {key:?}")))
    }

    pub fn meta_str(&self, key: &str) -> Result<&str> {
        self.metadata
            .get(key)
            .and_then(MetaValue::as_str)
            .ok_or_else(|| Error::format(format!("bundle metadata is missing string {key:?}")))
    }

    fn allow_nonfinite(&self) -> bool {
        self.metadata
            .get(ALLOW_NONFINITE)
            .map(MetaValue::truthy)
            .unwrap_or(false)
    }

    /// Serializes the bundle to bytes in the container format.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        if !self.allow_nonfinite() {
            for (name, t) in &self.tensors {
                if !t.is_finite() {
                    return Err(Error::validation(format!(
                        "tensor {name:?} contains NaN/Inf and metadata {ALLOW_NONFINITE:?} is not set"
                    )));
                }
            }
        }
        let header = Header {
            tensors: self
                .tensors
                .iter()
                .map(|(name, t)| HeaderTensor {
                    name: name.clone(),
                    dtype: t.dtype().to_string(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
            metadata: self.metadata.clone(),
        };
        let header_json = serde_json::to_vec(&header)
            .map_err(|e| Error::format(format!("header serialization failed: {e}")))?;
        let header_len = u32::try_from(header_json.len())
            .map_err(|_| Error::validation("header exceeds u32 length".to_string()))?;

        let mut out = Vec::with_capacity(
            MAGIC.len() + 4 + header_json.len() + self.tensors.values().map(Tensor::byte_len).sum::<usize>() + PAYLOAD_ALIGN * (self.tensors.len() + 1),
        );
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&header_len.to_le_bytes());
        out.extend_from_slice(&header_json);
        for t in self.tensors.values() {
            let pad = (PAYLOAD_ALIGN - out.len() % PAYLOAD_ALIGN) % PAYLOAD_ALIGN;
            out.extend(std::iter::repeat_n(0u8, pad));
            t.write_payload(&mut out);
        }
        Ok(out)
    }

    /// Writes the container to `path` and fsyncs before returning.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_bytes()?;
        let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))?;
        f.sync_all().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// Parses a bundle from container bytes.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 4 {
            return Err(Error::format(format!(
                "file too short for container header: {} bytes",
                bytes.len()
            )));
        }
        if &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::format(format!(
                "bad magic: expected {MAGIC:?}, found {:?}",
                &bytes[..MAGIC.len()]
            )));
        }
        let header_len =
            u32::from_le_bytes(bytes[MAGIC.len()..MAGIC.len() + 4].try_into().unwrap()) as usize;
        let header_start = MAGIC.len() + 4;
        if bytes.len() < header_start + header_len {
            return Err(Error::format(format!(
                "declared header length {header_len} exceeds file size {}",
                bytes.len()
            )));
        }
        let header: Header = serde_json::from_slice(&bytes[header_start..header_start + header_len])
            .map_err(|e| Error::format(format!("header field invalid: {e}")))?;

        let mut bundle = TensorBundle {
            tensors: IndexMap::new(),
            metadata: header.metadata,
        };
        let mut pos = header_start + header_len;
        for ht in header.tensors {
            let elem_size = match ht.dtype.as_str() {
                "f32" => 4,
                "f64" => 8,
                other => {
                    return Err(Error::format(format!(
                        "tensor {:?} has unknown dtype {other:?}",
                        ht.name
                    )))
                }
            };
            let count: usize = ht.shape.iter().product();
            pos += (PAYLOAD_ALIGN - pos % PAYLOAD_ALIGN) % PAYLOAD_ALIGN;
            let byte_len = count
                .checked_mul(elem_size)
                .ok_or_else(|| Error::format(format!("tensor {:?} shape overflows", ht.name)))?;
            if pos + byte_len > bytes.len() {
                return Err(Error::format(format!(
                    "length mismatch for tensor {:?}: header shape {:?} needs {byte_len} bytes at offset {pos} but file has {}",
                    ht.name,
                    ht.shape,
                    bytes.len()
                )));
            }
            let payload = &bytes[pos..pos + byte_len];
            let tensor = match ht.dtype.as_str() {
                "f32" => {
                    let data: Vec<f32> = payload
                        .chunks_exact(4)
                        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                        .collect();
                    Tensor::F32(
                        ArrayD::from_shape_vec(IxDyn(&ht.shape), data)
                            .map_err(|e| Error::format(format!("tensor {:?}: {e}", ht.name)))?,
                    )
                }
                _ => {
                    let data: Vec<f64> = payload
                        .chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                        .collect();
                    Tensor::F64(
                        ArrayD::from_shape_vec(IxDyn(&ht.shape), data)
                            .map_err(|e| Error::format(format!("tensor {:?}: {e}", ht.name)))?,
                    )
                }
            };
            bundle.insert(ht.name, tensor)?;
            pos += byte_len;
        }
        Ok(bundle)
    }

    /// Loads a container file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut bytes = Vec::new();
        f.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

// ---------------------------------------------------------------------------
// ScalarField2D
// ---------------------------------------------------------------------------

/// A grid-sampled 2D scalar function with physical spacing.
///
/// `values` is row-major with shape `nz x nx`; node `(i, j)` sits at physical
/// coordinate `(origin_x + j*dx, origin_z + i*dz)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField2D {
    nx: usize,
    nz: usize,
    dx: f64,
    dz: f64,
    origin_x: f64,
    origin_z: f64,
    values: Array2<f64>,
}

impl ScalarField2D {
    pub fn new(
        dx: f64,
        dz: f64,
        origin_x: f64,
        origin_z: f64,
        values: Array2<f64>,
    ) -> Result<Self> {
        let (nz, nx) = values.dim();
        if nx < 2 || nz < 2 {
            return Err(Error::validation(format!(
                "grid must be at least 2x2, got {nz}x{nx}"
            )));
        }
        if !(dx > 0.0) || !(dz > 0.0) {
            return Err(Error::validation(format!(
                "grid spacing must be positive, got dx={dx}, dz={dz}"
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::validation(
                "field values contain NaN/Inf".to_string(),
            ));
        }
        Ok(Self {
            nx,
            nz,
            dx,
            dz,
            origin_x,
            origin_z,
            values,
        })
    }

    /// Same grid geometry as `self`, with new values.
    pub fn with_values(&self, values: Array2<f64>) -> Result<Self> {
        if values.dim() != (self.nz, self.nx) {
            return Err(Error::validation(format!(
                "value shape {:?} does not match grid {}x{}",
                values.dim(),
                self.nz,
                self.nx
            )));
        }
        Self::new(self.dx, self.dz, self.origin_x, self.origin_z, values)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn nz(&self) -> usize {
        self.nz
    }
    pub fn dx(&self) -> f64 {
        self.dx
    }
    pub fn dz(&self) -> f64 {
        self.dz
    }
    pub fn origin_x(&self) -> f64 {
        self.origin_x
    }
    pub fn origin_z(&self) -> f64 {
        self.origin_z
    }
    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn x_max(&self) -> f64 {
        self.origin_x + (self.nx - 1) as f64 * self.dx
    }

    pub fn z_max(&self) -> f64 {
        self.origin_z + (self.nz - 1) as f64 * self.dz
    }

    /// Physical coordinate of node `(i, j)`.
    pub fn coord_of(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.origin_x + j as f64 * self.dx,
            self.origin_z + i as f64 * self.dz,
        )
    }

    /// Nearest grid node to a physical coordinate (clamped to the grid).
    pub fn nearest_node(&self, x: f64, z: f64) -> (usize, usize) {
        let j = ((x - self.origin_x) / self.dx).round().clamp(0.0, (self.nx - 1) as f64) as usize;
        let i = ((z - self.origin_z) / self.dz).round().clamp(0.0, (self.nz - 1) as f64) as usize;
        (i, j)
    }

    pub fn contains(&self, x: f64, z: f64) -> bool {
        let eps_x = 1e-9 * self.dx;
        let eps_z = 1e-9 * self.dz;
        x >= self.origin_x - eps_x
            && x <= self.x_max() + eps_x
            && z >= self.origin_z - eps_z
            && z <= self.z_max() + eps_z
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Applies `f` to every value, revalidating finiteness.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        self.with_values(self.values.mapv(&f))
    }

    /// Packs the field into a bundle under tensor `name` with grid metadata.
    pub fn to_bundle(&self, name: &str) -> Result<TensorBundle> {
        let mut b = TensorBundle::new();
        b.insert_f64(name, self.values.clone().into_dyn())?;
        b.set_meta("dx", self.dx);
        b.set_meta("dz", self.dz);
        b.set_meta("origin_x", self.origin_x);
        b.set_meta("origin_z", self.origin_z);
        Ok(b)
    }

    /// Reads a field packed by [`ScalarField2D::to_bundle`].
    pub fn from_bundle(bundle: &TensorBundle, name: &str) -> Result<Self> {
        let t = bundle.require(name)?;
        let values = t
            .to_f64()
            .into_dimensionality::<ndarray::Ix2>()
            .map_err(|_| Error::format(format!("tensor {name:?} is not rank 2")))?;
        Self::new(
            bundle.meta_f64("dx")?,
            bundle.meta_f64("dz")?,
            bundle.meta_f64("origin_x")?,
            bundle.meta_f64("origin_z")?,
            values,
        )
    }
}

/// Bilinear interpolation of the four nodes surrounding `(x, z)`.
///
/// Exact at grid nodes; errors on queries outside the bounding box.
pub fn bilinear_sample(field: &ScalarField2D, x: f64, z: f64) -> Result<f64> {
    if !field.contains(x, z) {
        return Err(Error::validation(format!(
            "query ({x}, {z}) outside field bounds [{}, {}] x [{}, {}]",
            field.origin_x,
            field.x_max(),
            field.origin_z,
            field.z_max()
        )));
    }
    let mut fx = (x - field.origin_x) / field.dx;
    let mut fz = (z - field.origin_z) / field.dz;
    // Snap to the node when within rounding distance so node queries are exact.
    if (fx - fx.round()).abs() < 1e-9 {
        fx = fx.round();
    }
    if (fz - fz.round()).abs() < 1e-9 {
        fz = fz.round();
    }
    let j0 = (fx.floor() as usize).min(field.nx - 2);
    let i0 = (fz.floor() as usize).min(field.nz - 2);
    let tx = fx - j0 as f64;
    let tz = fz - i0 as f64;
    let v = &field.values;
    let v00 = v[[i0, j0]];
    let v01 = v[[i0, j0 + 1]];
    let v10 = v[[i0 + 1, j0]];
    let v11 = v[[i0 + 1, j0 + 1]];
    Ok((1.0 - tz) * ((1.0 - tx) * v00 + tx * v01) + tz * ((1.0 - tx) * v10 + tx * v11))
}
