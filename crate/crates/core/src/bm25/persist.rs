//! Binary index file.
//!
//! Little-endian layout:
//!
//! ```text
//! magic        8 bytes  "PRBM25IX"
//! version      u32
//! k1, b, eps   f64 × 3
//! n_docs       u64
//! n_terms      u64
//! n_postings   u64
//! avgdl        f64
//! doc_len      u32 × n_docs
//! ids          (u32 len, utf-8 bytes) × n_docs
//! terms        (u32 len, utf-8 bytes, f64 idf, u64 df) × n_terms
//! post_docs    u32 × n_postings
//! post_tfs     u32 × n_postings
//! end marker   8 bytes  "PRBM25EN"
//! ```
//!
//! IDF and avgdl are stored bit-for-bit so a loaded index scores exactly
//! like the one that was saved; both are recomputed on load and must match.

use std::collections::{HashMap, HashSet};
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::{Bm25Index, Bm25Params};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"PRBM25IX";
const END_MARKER: &[u8; 8] = b"PRBM25EN";
pub const FORMAT_VERSION: u32 = 1;

const MAX_STRING_BYTES: u32 = 1 << 24;

pub fn save_index(index: &Bm25Index, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("tmp");
    let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    let mut w = BufWriter::new(file);
    write_body(index, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(&tmp, e))?;
    drop(w);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn write_body<W: Write>(idx: &Bm25Index, w: &mut W) -> io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LE>(FORMAT_VERSION)?;
    w.write_f64::<LE>(idx.params.k1)?;
    w.write_f64::<LE>(idx.params.b)?;
    w.write_f64::<LE>(idx.params.epsilon)?;
    w.write_u64::<LE>(idx.doc_len.len() as u64)?;
    w.write_u64::<LE>(idx.terms.len() as u64)?;
    w.write_u64::<LE>(idx.post_docs.len() as u64)?;
    w.write_f64::<LE>(idx.avgdl)?;
    for &l in &idx.doc_len {
        w.write_u32::<LE>(l)?;
    }
    for id in &idx.ids {
        write_str(w, id)?;
    }
    for (tid, term) in idx.terms.iter().enumerate() {
        write_str(w, term)?;
        w.write_f64::<LE>(idx.idf[tid])?;
        w.write_u64::<LE>(idx.offsets[tid + 1] - idx.offsets[tid])?;
    }
    for &d in &idx.post_docs {
        w.write_u32::<LE>(d)?;
    }
    for &tf in &idx.post_tfs {
        w.write_u32::<LE>(tf)?;
    }
    w.write_all(END_MARKER)
}

fn write_str<W: Write>(w: &mut W, s: &str) -> io::Result<()> {
    w.write_u32::<LE>(s.len() as u32)?;
    w.write_all(s.as_bytes())
}

/// Reads an index written by [`save_index`]. Bad magic, an unknown
/// version, truncation, trailing bytes and structural inconsistencies are
/// all reported as [`Error::IndexFormat`].
pub fn load_index(path: impl AsRef<Path>) -> Result<Bm25Index> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let size = file.metadata().map_err(|e| Error::io(path, e))?.len();
    let mut r = Reader {
        inner: BufReader::new(file),
        remaining: size,
    };
    read_body(&mut r).map_err(|e| {
        let msg = match e {
            LoadError::Io(e) if e.kind() == io::ErrorKind::UnexpectedEof => "truncated file".to_owned(),
            LoadError::Io(e) => e.to_string(),
            LoadError::Format(m) => m,
        };
        Error::IndexFormat {
            path: path.to_path_buf(),
            msg,
        }
    })
}

enum LoadError {
    Io(io::Error),
    Format(String),
}

impl From<io::Error> for LoadError {
    fn from(e: io::Error) -> Self {
        LoadError::Io(e)
    }
}

fn bad(msg: impl Into<String>) -> LoadError {
    LoadError::Format(msg.into())
}

struct Reader<R> {
    inner: R,
    remaining: u64,
}

impl<R: Read> Reader<R> {
    // Rejects counts that cannot fit in what is left of the file before
    // allocating for them.
    fn reserve(&self, count: u64, width: u64) -> Result<usize, LoadError> {
        match count.checked_mul(width) {
            Some(bytes) if bytes <= self.remaining => Ok(count as usize),
            _ => Err(LoadError::Io(io::ErrorKind::UnexpectedEof.into())),
        }
    }

    fn take(&mut self, n: u64) -> Result<(), LoadError> {
        self.remaining = self
            .remaining
            .checked_sub(n)
            .ok_or(LoadError::Io(io::ErrorKind::UnexpectedEof.into()))?;
        Ok(())
    }

    fn bytes<const N: usize>(&mut self) -> Result<[u8; N], LoadError> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf)?;
        self.take(N as u64)?;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<u32, LoadError> {
        let v = self.inner.read_u32::<LE>()?;
        self.take(4)?;
        Ok(v)
    }

    fn u64(&mut self) -> Result<u64, LoadError> {
        let v = self.inner.read_u64::<LE>()?;
        self.take(8)?;
        Ok(v)
    }

    fn f64(&mut self) -> Result<f64, LoadError> {
        let v = self.inner.read_f64::<LE>()?;
        self.take(8)?;
        Ok(v)
    }

    fn u32_vec(&mut self, count: u64) -> Result<Vec<u32>, LoadError> {
        let n = self.reserve(count, 4)?;
        let mut v = vec![0u32; n];
        self.inner.read_u32_into::<LE>(&mut v)?;
        self.take(n as u64 * 4)?;
        Ok(v)
    }

    fn string(&mut self) -> Result<String, LoadError> {
        let len = self.u32()?;
        if len > MAX_STRING_BYTES {
            return Err(bad(format!("string length {len} exceeds limit")));
        }
        let n = self.reserve(len as u64, 1)?;
        let mut buf = vec![0u8; n];
        self.inner.read_exact(&mut buf)?;
        self.take(n as u64)?;
        String::from_utf8(buf).map_err(|_| bad("invalid utf-8 in string"))
    }
}

fn read_body<R: Read>(r: &mut Reader<R>) -> Result<Bm25Index, LoadError> {
    if &r.bytes::<8>()? != MAGIC {
        return Err(bad("bad magic bytes (not an index file)"));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(bad(format!(
            "unsupported format version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let params = Bm25Params {
        k1: r.f64()?,
        b: r.f64()?,
        epsilon: r.f64()?,
    };
    params.validate().map_err(|e| bad(e.to_string()))?;
    let n_docs = r.u64()?;
    let n_terms = r.u64()?;
    let n_postings = r.u64()?;
    let avgdl = r.f64()?;
    if n_docs == 0 || n_docs >= u32::MAX as u64 {
        return Err(bad(format!("invalid passage count {n_docs}")));
    }

    let doc_len = r.u32_vec(n_docs)?;

    r.reserve(n_docs, 4)?;
    let mut ids = Vec::with_capacity(n_docs as usize);
    let mut seen = HashSet::with_capacity(n_docs as usize);
    for _ in 0..n_docs {
        let id = r.string()?;
        if !seen.insert(id.clone()) {
            return Err(bad(format!("duplicate passage id `{id}`")));
        }
        ids.push(id);
    }
    drop(seen);

    r.reserve(n_terms, 20)?;
    let mut terms = Vec::with_capacity(n_terms as usize);
    let mut stored_idf = Vec::with_capacity(n_terms as usize);
    let mut offsets = Vec::with_capacity(n_terms as usize + 1);
    offsets.push(0u64);
    let mut term_set = HashMap::with_capacity(n_terms as usize);
    for _ in 0..n_terms {
        let term = r.string()?;
        let idf = r.f64()?;
        let df = r.u64()?;
        if df == 0 || df > n_docs {
            return Err(bad(format!("term `{term}` has invalid document frequency {df}")));
        }
        if term_set.insert(term.clone(), ()).is_some() {
            return Err(bad(format!("duplicate term `{term}`")));
        }
        terms.push(term);
        stored_idf.push(idf);
        let next = offsets.last().unwrap() + df;
        offsets.push(next);
    }
    drop(term_set);
    if *offsets.last().unwrap() != n_postings {
        return Err(bad("posting counts do not add up"));
    }

    let post_docs = r.u32_vec(n_postings)?;
    let post_tfs = r.u32_vec(n_postings)?;
    if &r.bytes::<8>()? != END_MARKER {
        return Err(bad("missing end marker"));
    }
    if r.remaining != 0 {
        return Err(bad(format!("{} trailing bytes after end marker", r.remaining)));
    }

    let mut doc_tokens = vec![0u64; n_docs as usize];
    for w in offsets.windows(2) {
        let docs = &post_docs[w[0] as usize..w[1] as usize];
        let tfs = &post_tfs[w[0] as usize..w[1] as usize];
        for (i, (&d, &tf)) in docs.iter().zip(tfs).enumerate() {
            if d as u64 >= n_docs {
                return Err(bad(format!("posting ordinal {d} out of range")));
            }
            if i > 0 && docs[i - 1] >= d {
                return Err(bad("postings not strictly sorted"));
            }
            if tf == 0 {
                return Err(bad("zero term frequency in postings"));
            }
            doc_tokens[d as usize] += tf as u64;
        }
    }
    if doc_tokens.iter().zip(&doc_len).any(|(&t, &l)| t != l as u64) {
        return Err(bad("passage lengths disagree with postings"));
    }

    let index = Bm25Index::from_parts(params, terms, offsets, post_docs, post_tfs, doc_len, ids);
    if index.avgdl.to_bits() != avgdl.to_bits() {
        return Err(bad("stored avgdl does not match passage lengths"));
    }
    if index
        .idf
        .iter()
        .zip(&stored_idf)
        .any(|(a, b)| a.to_bits() != b.to_bits())
    {
        return Err(bad("stored idf does not match document frequencies"));
    }
    Ok(index)
}
