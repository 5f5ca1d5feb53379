//! On-disk embedding store: `manifest.json` plus `vectors.bin`.
//!
//! `vectors.bin` is the raw row-major matrix of little-endian `f32`, with no
//! header, so it is exactly `count * dim * 4` bytes. Row `i` belongs to
//! `manifest.ids[i]`. Stores are opened through a read-only memory map.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use memmap2::Mmap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const VECTORS_FILE: &str = "vectors.bin";
pub const DTYPE: &str = "f32le";

/// Rows flagged as normalized must have unit norm within this tolerance.
pub const NORM_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingManifest {
    pub dim: usize,
    pub count: usize,
    pub dtype: String,
    pub ids: Vec<String>,
    pub normalized: bool,
    /// Provenance recorded by the producer: model name, truncation length,
    /// pooling mode.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, String>,
}

impl EmbeddingManifest {
    fn check(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Manifest("dim must be at least 1".into()));
        }
        if self.dtype != DTYPE {
            return Err(Error::Manifest(format!(
                "unsupported dtype `{}` (expected {DTYPE})",
                self.dtype
            )));
        }
        if self.ids.len() != self.count {
            return Err(Error::Manifest(format!(
                "count is {} but {} ids are listed",
                self.count,
                self.ids.len()
            )));
        }
        let mut seen = HashSet::with_capacity(self.ids.len());
        for id in &self.ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId {
                    kind: "vector",
                    id: id.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn data_bytes(&self) -> u64 {
        self.count as u64 * self.dim as u64 * 4
    }
}

enum Storage {
    Owned(Vec<f32>),
    Mapped(Mmap),
}

impl Storage {
    fn as_slice(&self) -> &[f32] {
        match self {
            Storage::Owned(v) => v,
            // Page-aligned and length-checked at open; little-endian only.
            Storage::Mapped(m) => bytemuck::cast_slice(&m[..]),
        }
    }
}

/// A `count × dim` matrix of `f32` rows keyed by id.
pub struct EmbeddingMatrix {
    manifest: EmbeddingManifest,
    storage: Storage,
    rows_by_id: HashMap<String, usize>,
}

impl std::fmt::Debug for EmbeddingMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EmbeddingMatrix")
            .field("count", &self.manifest.count)
            .field("dim", &self.manifest.dim)
            .field("normalized", &self.manifest.normalized)
            .field("mapped", &self.is_mapped())
            .finish()
    }
}

impl EmbeddingMatrix {
    /// Builds an in-memory matrix. Fails on duplicate ids or ragged rows.
    pub fn from_rows<I, S, V>(dim: usize, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, V)>,
        S: Into<String>,
        V: AsRef<[f32]>,
    {
        let mut ids = Vec::new();
        let mut data = Vec::new();
        for (id, v) in rows {
            let id = id.into();
            let v = v.as_ref();
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    id,
                    expected: dim,
                    actual: v.len(),
                });
            }
            data.extend_from_slice(v);
            ids.push(id);
        }
        let manifest = EmbeddingManifest {
            dim,
            count: ids.len(),
            dtype: DTYPE.to_string(),
            ids,
            normalized: false,
            meta: BTreeMap::new(),
        };
        Self::assemble(manifest, Storage::Owned(data))
    }

    fn assemble(manifest: EmbeddingManifest, storage: Storage) -> Result<Self> {
        manifest.check()?;
        let rows_by_id = manifest
            .ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        let m = Self {
            manifest,
            storage,
            rows_by_id,
        };
        if m.manifest.normalized {
            m.check_unit_rows()?;
        }
        Ok(m)
    }

    fn check_unit_rows(&self) -> Result<()> {
        for (i, id) in self.manifest.ids.iter().enumerate() {
            let norm = l2_norm(self.row(i));
            if (norm - 1.0).abs() > NORM_TOLERANCE {
                return Err(Error::Manifest(format!(
                    "row `{id}` has norm {norm} but the store is flagged normalized"
                )));
            }
        }
        Ok(())
    }

    pub fn manifest(&self) -> &EmbeddingManifest {
        &self.manifest
    }

    pub fn dim(&self) -> usize {
        self.manifest.dim
    }

    pub fn len(&self) -> usize {
        self.manifest.count
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.count == 0
    }

    pub fn is_normalized(&self) -> bool {
        self.manifest.normalized
    }

    pub fn is_mapped(&self) -> bool {
        matches!(self.storage, Storage::Mapped(_))
    }

    pub fn ids(&self) -> &[String] {
        &self.manifest.ids
    }

    pub fn id(&self, row: usize) -> &str {
        &self.manifest.ids[row]
    }

    /// Row-major view of the whole matrix.
    pub fn data(&self) -> &[f32] {
        self.storage.as_slice()
    }

    pub fn row(&self, row: usize) -> &[f32] {
        let d = self.manifest.dim;
        &self.data()[row * d..(row + 1) * d]
    }

    pub fn row_index(&self, id: &str) -> Option<usize> {
        self.rows_by_id.get(id).copied()
    }

    pub fn vector(&self, id: &str) -> Result<&[f32]> {
        self.row_index(id)
            .map(|r| self.row(r))
            .ok_or_else(|| Error::NotFound(id.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        (0..self.len()).map(move |i| (self.id(i), self.row(i)))
    }

    pub fn set_meta(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.manifest.meta.insert(key.into(), value.into());
    }
}

pub(crate) fn l2_norm(v: &[f32]) -> f64 {
    v.iter()
        .map(|&x| f64::from(x) * f64::from(x))
        .sum::<f64>()
        .sqrt()
}

/// Divides every row by its Euclidean norm and flags the result normalized.
pub fn normalize_rows(m: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    let dim = m.dim();
    let mut data = Vec::with_capacity(m.data().len());
    for (id, row) in m.iter() {
        let norm = l2_norm(row);
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroNorm(id.to_string()));
        }
        data.extend(row.iter().map(|&x| (f64::from(x) / norm) as f32));
    }
    debug_assert_eq!(data.len(), m.len() * dim);
    let mut manifest = m.manifest.clone();
    manifest.normalized = true;
    EmbeddingMatrix::assemble(manifest, Storage::Owned(data))
}

/// Writes `(id, vector)` pairs as a new, unnormalized store in `dir`.
pub fn write_store<I, S, V>(vectors: I, dir: &Path) -> Result<EmbeddingManifest>
where
    I: IntoIterator<Item = (S, V)>,
    S: Into<String>,
    V: AsRef<[f32]>,
{
    let mut rows = vectors.into_iter().map(|(s, v)| (s.into(), v)).peekable();
    // An empty store still needs a dimension; 1 is the smallest valid one.
    let dim = rows.peek().map_or(1, |(_, v)| v.as_ref().len());
    if dim == 0 {
        let id = rows.peek().map(|(s, _)| s.clone()).unwrap_or_default();
        return Err(Error::DimensionMismatch {
            id,
            expected: 1,
            actual: 0,
        });
    }
    let m = EmbeddingMatrix::from_rows(dim, rows)?;
    write_matrix(&m, dir)
}

/// Writes a matrix, including its `normalized` flag and metadata.
pub fn write_matrix(m: &EmbeddingMatrix, dir: &Path) -> Result<EmbeddingManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let bin_path = dir.join(VECTORS_FILE);
    let file = File::create(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
    let mut w = BufWriter::new(file);
    for x in m.data() {
        w.write_all(&x.to_le_bytes())
            .map_err(|e| Error::io(&bin_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&bin_path, e))?;

    let manifest_path = dir.join(MANIFEST_FILE);
    let mut json = serde_json::to_string_pretty(&m.manifest).expect("manifest serialises");
    json.push('\n');
    fs::write(&manifest_path, json).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(m.manifest.clone())
}

pub fn read_manifest(dir: &Path) -> Result<EmbeddingManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: EmbeddingManifest = serde_json::from_str(&text)
        .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
    manifest.check()?;
    Ok(manifest)
}

/// Opens a store read-only. The vector file is memory-mapped on
/// little-endian targets and decoded into memory elsewhere.
pub fn open_store(dir: &Path) -> Result<EmbeddingMatrix> {
    let manifest = read_manifest(dir)?;
    let bin_path = dir.join(VECTORS_FILE);
    let file = File::open(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
    let actual = file.metadata().map_err(|e| Error::io(&bin_path, e))?.len();
    let expected = manifest.data_bytes();
    if actual != expected {
        return Err(Error::SizeMismatch {
            path: bin_path,
            expected,
            actual,
        });
    }
    if expected == 0 {
        return EmbeddingMatrix::assemble(manifest, Storage::Owned(Vec::new()));
    }
    // SAFETY: the map is read-only; stores are immutable once written and a
    // single writer per directory is assumed.
    let map = unsafe { Mmap::map(&file) }.map_err(|e| Error::io(&bin_path, e))?;
    let storage = if cfg!(target_endian = "little") {
        Storage::Mapped(map)
    } else {
        Storage::Owned(
            map.chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
        )
    };
    EmbeddingMatrix::assemble(manifest, storage)
}
