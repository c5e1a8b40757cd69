//! Binary on-disk format for embedding matrices.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic   8 bytes  "XFIDEMB1"
//! n       u32      row count
//! d       u32      dimension
//! ids     n times: u16 byte length + UTF-8 bytes
//! data    n*d f32, row-major
//! ```
//!
//! The format is streamable and endian-explicit; round trips are bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use super::{EmbedError, EmbeddingMatrix};

pub(crate) const MAGIC: &[u8; 8] = b"XFIDEMB1";

pub fn save_matrix(path: &Path, m: &EmbeddingMatrix) -> Result<(), EmbedError> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC)?;
    w.write_all(&(m.n() as u32).to_le_bytes())?;
    w.write_all(&(m.dim() as u32).to_le_bytes())?;
    for id in m.ids() {
        let bytes = id.as_bytes();
        if bytes.len() > u16::MAX as usize {
            return Err(EmbedError::Shape { reason: format!("id `{}...` exceeds 65535 bytes", &id[..16.min(id.len())]) });
        }
        w.write_all(&(bytes.len() as u16).to_le_bytes())?;
        w.write_all(bytes)?;
    }
    for v in m.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_matrix(path: &Path) -> Result<EmbeddingMatrix, EmbedError> {
    let file = File::open(path)?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 8];
    read_exact(&mut r, &mut magic, EmbedError::CorruptHeader)?;
    if &magic != MAGIC {
        return Err(EmbedError::CorruptHeader);
    }
    let mut word = [0u8; 4];
    read_exact(&mut r, &mut word, EmbedError::CorruptHeader)?;
    let n = u32::from_le_bytes(word) as usize;
    read_exact(&mut r, &mut word, EmbedError::CorruptHeader)?;
    let dim = u32::from_le_bytes(word) as usize;

    let mut ids = Vec::with_capacity(n);
    for _ in 0..n {
        let mut len_bytes = [0u8; 2];
        read_exact(&mut r, &mut len_bytes, EmbedError::TruncatedPayload)?;
        let len = u16::from_le_bytes(len_bytes) as usize;
        let mut buf = vec![0u8; len];
        read_exact(&mut r, &mut buf, EmbedError::TruncatedPayload)?;
        let id = String::from_utf8(buf).map_err(|_| EmbedError::CorruptHeader)?;
        ids.push(id);
    }

    let mut data = Vec::with_capacity(n * dim);
    for _ in 0..n * dim {
        read_exact(&mut r, &mut word, EmbedError::TruncatedPayload)?;
        data.push(f32::from_le_bytes(word));
    }

    // Anything after the payload means the header lied about the shape.
    let mut probe = [0u8; 1];
    match r.read(&mut probe)? {
        0 => EmbeddingMatrix::new(ids, data, dim),
        _ => Err(EmbedError::CorruptHeader),
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], on_eof: EmbedError) -> Result<(), EmbedError> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == ErrorKind::UnexpectedEof {
            on_eof
        } else {
            EmbedError::Io(e)
        }
    })
}
