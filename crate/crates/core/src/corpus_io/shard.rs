//! Binary embedding shards.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "SIEV" | version u16 | dim u32 | rows u64 | encoder_id (u32 len + utf8)
//! rows*: uid (u32 len + utf8) | dim x f32
//! ```
//!
//! Rows are uid-ascending. A uid may repeat on consecutive rows (caption
//! shards carry one row per generated caption).

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use crate::error::{Result, SieveError};

pub const SHARD_MAGIC: &[u8; 4] = b"SIEV";
pub const SHARD_VERSION: u16 = 1;

const MAX_STRING_LEN: u32 = 1 << 24;
const ROW_COUNT_OFFSET: u64 = 4 + 2 + 4;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingShard {
    pub dim: usize,
    pub encoder_id: String,
    pub rows: Vec<(String, Vec<f32>)>,
}

impl EmbeddingShard {
    pub fn new(dim: usize, encoder_id: impl Into<String>, rows: Vec<(String, Vec<f32>)>) -> Result<Self> {
        let shard = EmbeddingShard {
            dim,
            encoder_id: encoder_id.into(),
            rows,
        };
        shard.validate()?;
        Ok(shard)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(SieveError::Format("shard dim must be positive".into()));
        }
        let mut prev: Option<&str> = None;
        for (uid, v) in &self.rows {
            check_row(self.dim, prev, uid, v)?;
            prev = Some(uid);
        }
        Ok(())
    }
}

fn check_row(dim: usize, prev: Option<&str>, uid: &str, v: &[f32]) -> Result<()> {
    if v.len() != dim {
        return Err(SieveError::Shape {
            expected: dim,
            found: v.len(),
        });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(SieveError::NonFinite { uid: uid.to_owned() });
    }
    if let Some(p) = prev {
        if p > uid {
            return Err(SieveError::Order {
                prev: p.to_owned(),
                next: uid.to_owned(),
            });
        }
    }
    Ok(())
}

/// Streaming shard writer. The row count in the header is patched on
/// [`ShardWriter::finish`].
pub struct ShardWriter {
    path: PathBuf,
    out: BufWriter<File>,
    dim: usize,
    rows: u64,
    prev: Option<String>,
}

impl ShardWriter {
    pub fn create(path: impl AsRef<Path>, dim: usize, encoder_id: &str) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        if dim == 0 || dim > u32::MAX as usize {
            return Err(SieveError::Format(format!("unsupported shard dim {dim}")));
        }
        let file = File::create(&path).map_err(|e| SieveError::io(&path, e))?;
        let mut w = ShardWriter {
            out: BufWriter::new(file),
            path,
            dim,
            rows: 0,
            prev: None,
        };
        let mut header = Vec::with_capacity(32 + encoder_id.len());
        header.extend_from_slice(SHARD_MAGIC);
        header.extend_from_slice(&SHARD_VERSION.to_le_bytes());
        header.extend_from_slice(&(dim as u32).to_le_bytes());
        header.extend_from_slice(&0u64.to_le_bytes());
        put_str(&mut header, encoder_id)?;
        w.write(&header)?;
        Ok(w)
    }

    pub fn push(&mut self, uid: &str, v: &[f32]) -> Result<()> {
        check_row(self.dim, self.prev.as_deref(), uid, v)?;
        let mut buf = Vec::with_capacity(4 + uid.len() + 4 * v.len());
        put_str(&mut buf, uid)?;
        for x in v {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        self.write(&buf)?;
        self.rows += 1;
        match &mut self.prev {
            Some(p) if p == uid => {}
            _ => self.prev = Some(uid.to_owned()),
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<u64> {
        let path = self.path.clone();
        let io = |e| SieveError::io(&path, e);
        self.out.flush().map_err(io)?;
        let file = self.out.get_mut();
        file.seek(SeekFrom::Start(ROW_COUNT_OFFSET)).map_err(io)?;
        file.write_all(&self.rows.to_le_bytes()).map_err(io)?;
        file.sync_data().map_err(io)?;
        Ok(self.rows)
    }

    fn write(&mut self, bytes: &[u8]) -> Result<()> {
        self.out
            .write_all(bytes)
            .map_err(|e| SieveError::io(&self.path, e))
    }
}

fn put_str(buf: &mut Vec<u8>, s: &str) -> Result<()> {
    let len = u32::try_from(s.len())
        .ok()
        .filter(|&l| l <= MAX_STRING_LEN)
        .ok_or_else(|| SieveError::Format(format!("string of {} bytes too long", s.len())))?;
    buf.extend_from_slice(&len.to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
    Ok(())
}

/// Streaming shard reader yielding `(uid, vector)` rows.
pub struct ShardReader<R> {
    input: R,
    dim: usize,
    encoder_id: String,
    declared_rows: u64,
    read_rows: u64,
    prev: Option<String>,
    done: bool,
}

impl ShardReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| SieveError::io(path, e))?;
        ShardReader::new(BufReader::new(file))
    }
}

impl<R: Read> ShardReader<R> {
    pub fn new(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(&mut input, &mut magic, "magic")?;
        if &magic != SHARD_MAGIC {
            return Err(SieveError::Format("bad magic; not an embedding shard".into()));
        }
        let version = u16::from_le_bytes(read_array(&mut input, "version")?);
        if version != SHARD_VERSION {
            return Err(SieveError::Format(format!("unsupported shard version {version}")));
        }
        let dim = u32::from_le_bytes(read_array(&mut input, "dim")?) as usize;
        if dim == 0 {
            return Err(SieveError::Format("shard dim must be positive".into()));
        }
        let declared_rows = u64::from_le_bytes(read_array(&mut input, "row count")?);
        let encoder_id = read_str(&mut input, "encoder_id")?;
        Ok(ShardReader {
            input,
            dim,
            encoder_id,
            declared_rows,
            read_rows: 0,
            prev: None,
            done: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn encoder_id(&self) -> &str {
        &self.encoder_id
    }

    pub fn declared_rows(&self) -> u64 {
        self.declared_rows
    }

    fn read_row(&mut self) -> Result<Option<(String, Vec<f32>)>> {
        if self.read_rows == self.declared_rows {
            let mut probe = [0u8; 1];
            return match self.input.read(&mut probe) {
                Ok(0) => Ok(None),
                Ok(_) => Err(SieveError::Format(format!(
                    "trailing bytes after {} declared rows",
                    self.declared_rows
                ))),
                Err(e) => Err(SieveError::io("<shard>", e)),
            };
        }
        let uid = read_str(&mut self.input, "row uid")?;
        let mut bytes = vec![0u8; 4 * self.dim];
        read_exact(&mut self.input, &mut bytes, "row vector")?;
        let v: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        check_row(self.dim, self.prev.as_deref(), &uid, &v)?;
        self.read_rows += 1;
        if self.prev.as_deref() != Some(uid.as_str()) {
            self.prev = Some(uid.clone());
        }
        Ok(Some((uid, v)))
    }
}

impl<R: Read> Iterator for ShardReader<R> {
    type Item = Result<(String, Vec<f32>)>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let out = self.read_row().transpose();
        if !matches!(out, Some(Ok(_))) {
            self.done = true;
        }
        out
    }
}

fn read_exact<R: Read>(input: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    input.read_exact(buf).map_err(|e| match e.kind() {
        ErrorKind::UnexpectedEof => SieveError::Format(format!("truncated shard while reading {what}")),
        _ => SieveError::io("<shard>", e),
    })
}

fn read_array<const N: usize, R: Read>(input: &mut R, what: &str) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    read_exact(input, &mut buf, what)?;
    Ok(buf)
}

fn read_str<R: Read>(input: &mut R, what: &str) -> Result<String> {
    let len = u32::from_le_bytes(read_array(input, what)?);
    if len > MAX_STRING_LEN {
        return Err(SieveError::Format(format!("{what} length {len} exceeds limit")));
    }
    let mut buf = vec![0u8; len as usize];
    read_exact(input, &mut buf, what)?;
    String::from_utf8(buf).map_err(|_| SieveError::Format(format!("{what} is not valid utf-8")))
}

pub fn read_embedding_shard(path: impl AsRef<Path>) -> Result<EmbeddingShard> {
    let mut reader = ShardReader::open(path)?;
    let mut rows = Vec::new();
    for row in reader.by_ref() {
        rows.push(row?);
    }
    Ok(EmbeddingShard {
        dim: reader.dim,
        encoder_id: reader.encoder_id,
        rows,
    })
}

pub fn write_embedding_shard(shard: &EmbeddingShard, path: impl AsRef<Path>) -> Result<()> {
    let mut w = ShardWriter::create(path, shard.dim, &shard.encoder_id)?;
    for (uid, v) in &shard.rows {
        w.push(uid, v)?;
    }
    w.finish()?;
    Ok(())
}
