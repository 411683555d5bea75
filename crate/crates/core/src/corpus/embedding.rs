use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const EMBEDDING_MAGIC: &[u8; 8] = b"BETREMB1";

/// Dense id-keyed embedding rows.
///
/// On disk rows are little-endian `f32` records:
/// `magic "BETREMB1" | u32 count | u32 dim | count × (u16 id_len, id, dim × f32)`.
/// In memory rows are widened to `f64` so that similarity ordering does not
/// depend on single-precision rounding.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    ids: Vec<String>,
    rows: Vec<f64>,
    index: HashMap<String, usize>,
    normalized: bool,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dim must be positive"));
        }
        Ok(EmbeddingStore {
            dim,
            ids: Vec::new(),
            rows: Vec::new(),
            index: HashMap::new(),
            normalized: false,
        })
    }

    pub fn from_rows<I, S>(dim: usize, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: Into<String>,
    {
        let mut store = Self::new(dim)?;
        for (id, row) in rows {
            store.push(id, &row)?;
        }
        Ok(store)
    }

    pub fn push(&mut self, id: impl Into<String>, row: &[f64]) -> Result<()> {
        let id = id.into();
        if row.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                got: row.len(),
            });
        }
        if let Some(bad) = row.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "embedding {id:?} has non-finite value {bad}"
            )));
        }
        if self.index.contains_key(&id) {
            return Err(Error::DuplicateId {
                id,
                line: self.ids.len() + 1,
            });
        }
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.rows.extend_from_slice(row);
        self.normalized = false;
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> &[f64] {
        &self.rows
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.index_of(id).map(|i| self.row(i))
    }

    /// Scales every row to unit L2 norm. Zero rows are rejected since they
    /// have no direction.
    pub fn normalize(&mut self) -> Result<()> {
        for (i, row) in self.rows.chunks_mut(self.dim).enumerate() {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::invalid(format!(
                    "embedding {:?} is the zero vector",
                    self.ids[i]
                )));
            }
            row.iter_mut().for_each(|v| *v /= norm);
        }
        self.normalized = true;
        Ok(())
    }

    /// A new store holding `ids` in the given order.
    pub fn subset<S: AsRef<str>>(&self, ids: &[S]) -> Result<Self> {
        let mut out = Self::new(self.dim)?;
        out.rows.reserve(ids.len() * self.dim);
        for id in ids {
            let id = id.as_ref();
            let row = self
                .get(id)
                .ok_or_else(|| Error::MissingEmbedding(id.to_string()))?;
            out.push(id, row)?;
        }
        out.normalized = self.normalized;
        Ok(out)
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != EMBEDDING_MAGIC {
            return Err(Error::Format("not a BETREMB1 embedding file".into()));
        }
        let count = read_u32(&mut r)? as usize;
        let dim = read_u32(&mut r)? as usize;
        let mut store = Self::new(dim)?;
        store.rows.reserve(count.saturating_mul(dim).min(1 << 28));
        let mut buf = vec![0u8; dim * 4];
        let mut row = vec![0f64; dim];
        for _ in 0..count {
            let mut len = [0u8; 2];
            r.read_exact(&mut len)?;
            let mut id = vec![0u8; u16::from_le_bytes(len) as usize];
            r.read_exact(&mut id)?;
            let id = String::from_utf8(id)
                .map_err(|_| Error::Format("embedding id is not UTF-8".into()))?;
            r.read_exact(&mut buf)?;
            for (dst, src) in row.iter_mut().zip(buf.chunks_exact(4)) {
                *dst = f32::from_le_bytes(src.try_into().unwrap()) as f64;
            }
            store.push(id, &row)?;
        }
        Ok(store)
    }

    /// Writes rows narrowed to `f32`.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let count = u32::try_from(self.len())
            .map_err(|_| Error::invalid("too many embeddings for one file"))?;
        w.write_all(EMBEDDING_MAGIC)?;
        w.write_all(&count.to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        for (i, id) in self.ids.iter().enumerate() {
            let len = u16::try_from(id.len())
                .map_err(|_| Error::invalid(format!("embedding id too long: {id:?}")))?;
            w.write_all(&len.to_le_bytes())?;
            w.write_all(id.as_bytes())?;
            for v in self.row(i) {
                w.write_all(&(*v as f32).to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::file(path, e))?;
        Self::read_from(BufReader::new(file))
    }

    /// Loads and L2-normalizes every row.
    pub fn load_normalized(path: impl AsRef<Path>) -> Result<Self> {
        let mut store = Self::load(path)?;
        store.normalize()?;
        Ok(store)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::file(path, e))?;
        self.write_to(BufWriter::new(file))
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}
