use std::io::{Read, Write};
use std::path::Path;

use super::ContentError;
use crate::text::words;

pub const BASELINE_DIM: usize = 256;

const CACHE_MAGIC: &[u8; 4] = b"PEMB";
const DTYPE_F32: u32 = 1;

/// Dense row-major matrix, one row per input text.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn zeros(n: usize, d: usize) -> Self {
        Self { n, d, data: vec![0.0; n * d] }
    }

    pub fn from_vec(n: usize, d: usize, data: Vec<f64>) -> Result<Self, ContentError> {
        if data.len() != n * d {
            return Err(ContentError::Contract(format!(
                "{} values cannot fill a {n}x{d} matrix",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(ContentError::NonFinite { row: i / d.max(1), col: i % d.max(1) });
        }
        Ok(Self { n, d, data })
    }

    pub fn from_rows(d: usize, rows: Vec<Vec<f64>>) -> Result<Self, ContentError> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * d);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != d {
                return Err(ContentError::Contract(format!("row {i} has dim {}, expected {d}", row.len())));
            }
            data.extend(row);
        }
        Self::from_vec(n, d, data)
    }

    pub fn rows(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.d.max(1)).take(self.n)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Keeps the listed rows, in the given order.
    pub fn select(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.d);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self { n: idx.len(), d: self.d, data }
    }

    /// Cache layout: `PEMB`, n, d, dtype (u32 LE each), then row-major f32 LE values.
    pub fn write_cache<W: Write>(&self, mut w: W) -> Result<(), ContentError> {
        w.write_all(CACHE_MAGIC)?;
        for v in [self.n, self.d] {
            let v = u32::try_from(v).map_err(|_| ContentError::Cache("matrix too large".into()))?;
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&DTYPE_F32.to_le_bytes())?;
        for &v in &self.data {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_cache<R: Read>(mut r: R) -> Result<Self, ContentError> {
        let mut header = [0u8; 16];
        r.read_exact(&mut header)
            .map_err(|_| ContentError::Cache("truncated header".into()))?;
        if &header[0..4] != CACHE_MAGIC {
            return Err(ContentError::Cache("bad magic".into()));
        }
        let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap());
        let (n, d, dtype) = (word(4) as usize, word(8) as usize, word(12));
        if dtype != DTYPE_F32 {
            return Err(ContentError::Cache(format!("unsupported dtype {dtype}")));
        }
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != n * d * 4 {
            return Err(ContentError::Cache(format!(
                "expected {} payload bytes for {n}x{d}, found {}",
                n * d * 4,
                bytes.len()
            )));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        Self::from_vec(n, d, data)
    }

    pub fn save(&self, path: &Path) -> Result<(), ContentError> {
        self.write_cache(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self, ContentError> {
        Self::read_cache(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed(&self, texts: &[String]) -> Result<EmbeddingMatrix, ContentError>;
}

impl EmbeddingProvider for Box<dyn EmbeddingProvider> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn embed(&self, texts: &[String]) -> Result<EmbeddingMatrix, ContentError> {
        (**self).embed(texts)
    }
}

/// Feature-hashed unigram and bigram counts, L2-normalised.
#[derive(Debug, Clone)]
pub struct HashedEmbedder {
    dim: usize,
}

impl Default for HashedEmbedder {
    fn default() -> Self {
        Self { dim: BASELINE_DIM }
    }
}

impl HashedEmbedder {
    pub fn new(dim: usize) -> Result<Self, ContentError> {
        if dim == 0 {
            return Err(ContentError::Contract("embedding dim must be positive".into()));
        }
        Ok(Self { dim })
    }

    pub fn embed_one(&self, text: &str) -> Vec<f64> {
        let toks = words(text);
        let mut v = vec![0.0; self.dim];
        for t in &toks {
            v[bucket(&[b"u:", t.as_bytes()], self.dim)] += 1.0;
        }
        for pair in toks.windows(2) {
            v[bucket(&[b"b:", pair[0].as_bytes(), b" ", pair[1].as_bytes()], self.dim)] += 1.0;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

fn bucket(parts: &[&[u8]], dim: usize) -> usize {
    // FNV-1a, 64-bit.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for &b in *part {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    (h % dim as u64) as usize
}

impl EmbeddingProvider for HashedEmbedder {
    fn name(&self) -> &str {
        "baseline"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<EmbeddingMatrix, ContentError> {
        use rayon::prelude::*;
        let rows: Vec<Vec<f64>> = texts.par_iter().map(|t| self.embed_one(t)).collect();
        EmbeddingMatrix::from_rows(self.dim, rows)
    }
}
