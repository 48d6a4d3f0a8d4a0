//! `KWE1` model files (little-endian).
//!
//! ```text
//! magic "KWE1"
//! u32 version
//! config: u8 variant, u32 dim, u32 w, u32 ns, u64 buckets, u32 max_words,
//!         u8 n_min, u8 n_max, u32 max_ngrams
//! vocab:  u32 keyword count, (u32 len, UTF-8 bytes)*,
//!         u32 word count, (u32 len, UTF-8 bytes)*
//! input matrix rows then output matrix rows, f32, row-major
//! ```
//!
//! Training-only settings (learning rate, epochs, ...) are not stored and
//! come back as defaults.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::config::{ModelConfig, Variant};
use crate::corpus::Vocab;
use crate::error::{Error, Result};
use crate::model::{EmbeddingModel, Matrix};

pub const MAGIC: &[u8; 4] = b"KWE1";
pub const VERSION: u32 = 1;

pub fn to_bytes(model: &EmbeddingModel) -> Vec<u8> {
    let cfg = model.config();
    let vocab = model.vocab();
    let (input, output) = (model.input_matrix(), model.output_matrix());
    let mut out = Vec::with_capacity(64 + 4 * (input.as_slice().len() + output.as_slice().len()));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(cfg.variant.code());
    out.extend_from_slice(&(cfg.dim as u32).to_le_bytes());
    out.extend_from_slice(&(cfg.w as u32).to_le_bytes());
    out.extend_from_slice(&(cfg.ns as u32).to_le_bytes());
    out.extend_from_slice(&cfg.subword.buckets.to_le_bytes());
    out.extend_from_slice(&cfg.subword.max_words.to_le_bytes());
    out.push(cfg.subword.n_min);
    out.push(cfg.subword.n_max);
    out.extend_from_slice(&cfg.subword.max_ngrams.to_le_bytes());
    for list in [vocab.keywords(), vocab.words()] {
        out.extend_from_slice(&(list.len() as u32).to_le_bytes());
        for s in list {
            out.extend_from_slice(&(s.len() as u32).to_le_bytes());
            out.extend_from_slice(s.as_bytes());
        }
    }
    for x in input.as_slice().iter().chain(output.as_slice()) {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| format!("truncated at byte {} (wanted {n} more)", self.pos))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> std::result::Result<u8, String> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn strings(&mut self) -> std::result::Result<Vec<String>, String> {
        let n = self.u32()? as usize;
        let mut out = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            let len = self.u32()? as usize;
            let bytes = self.take(len)?;
            out.push(
                String::from_utf8(bytes.to_vec())
                    .map_err(|_| format!("invalid UTF-8 before byte {}", self.pos))?,
            );
        }
        Ok(out)
    }

    fn matrix(&mut self, rows: usize, dim: usize) -> std::result::Result<Matrix<f32>, String> {
        let n = rows
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(4))
            .ok_or("matrix size overflows")?;
        let bytes = self.take(n)?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Matrix::from_vec(rows, dim, data))
    }
}

pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<EmbeddingModel> {
    let fail = |message: String| Error::Format {
        path: origin.to_path_buf(),
        message,
    };
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic = r.take(4).map_err(fail)?;
    if magic != MAGIC {
        return Err(fail(format!("wrong magic {magic:?}, expected \"KWE1\"")));
    }
    let version = r.u32().map_err(fail)?;
    if version != VERSION {
        return Err(fail(format!("unsupported version {version}")));
    }
    let parsed = (|| -> std::result::Result<_, String> {
        let variant = Variant::from_code(r.u8()?).ok_or("unknown variant code")?;
        let mut cfg = ModelConfig::new(variant);
        cfg.dim = r.u32()? as usize;
        cfg.w = r.u32()? as usize;
        cfg.ns = r.u32()? as usize;
        cfg.subword.buckets = r.u64()?;
        cfg.subword.max_words = r.u32()?;
        cfg.subword.n_min = r.u8()?;
        cfg.subword.n_max = r.u8()?;
        cfg.subword.max_ngrams = r.u32()?;
        let keywords = r.strings()?;
        let words = r.strings()?;
        Ok((cfg, keywords, words))
    })();
    let (cfg, keywords, words) = parsed.map_err(fail)?;
    cfg.validate().map_err(|e| fail(e.to_string()))?;
    let vocab = Vocab::from_parts(keywords, words).map_err(|e| fail(e.to_string()))?;
    let input_rows = match cfg.variant {
        Variant::Keywords2Vec => vocab.len(),
        Variant::FastKeywords => {
            (cfg.subword.buckets as usize)
                .checked_add(vocab.word_count() + vocab.len() + 1)
                .ok_or_else(|| fail("input row count overflows".into()))?
        }
    };
    let input = r.matrix(input_rows, cfg.dim).map_err(fail)?;
    let output = r.matrix(vocab.len(), cfg.dim).map_err(fail)?;
    if r.pos != bytes.len() {
        return Err(fail(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    EmbeddingModel::from_parts(cfg, vocab, input, output).map_err(|e| fail(e.to_string()))
}

pub fn save(model: &EmbeddingModel, path: &Path) -> Result<()> {
    let bytes = to_bytes(model);
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<EmbeddingModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes, path)
}
