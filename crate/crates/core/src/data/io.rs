//! `.rveseq` files: concatenated little-endian records.
//!
//! Each record is `"RVESEQ1"`, version `u32`, dims `u32 × 3`
//! (n_in, d_gamma, d_tau), length `u32`, flags `u8`, then the inputs, γ and
//! τ blocks as row-major `f64`.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use super::record::SequenceRecord;
use crate::error::{Error, Result};

pub const SEQ_MAGIC: &[u8; 7] = b"RVESEQ1";
pub const SEQ_VERSION: u32 = 1;

pub(crate) fn put_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn put_f64s(w: &mut impl Write, vs: &[f64]) -> Result<()> {
    for v in vs {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn get_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn get_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; n * 8];
    r.read_exact(&mut bytes)?;
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

pub(crate) fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Format(format!("{what} {v} does not fit the file format")))
}

pub fn write_record(w: &mut impl Write, rec: &SequenceRecord) -> Result<()> {
    w.write_all(SEQ_MAGIC)?;
    put_u32(w, SEQ_VERSION)?;
    put_u32(w, to_u32(rec.n_in, "input dimension")?)?;
    put_u32(w, to_u32(rec.d_gamma, "gamma dimension")?)?;
    put_u32(w, to_u32(rec.d_tau, "tau dimension")?)?;
    put_u32(w, to_u32(rec.length, "sequence length")?)?;
    w.write_all(&[rec.flags])?;
    put_f64s(w, &rec.inputs)?;
    put_f64s(w, &rec.gamma)?;
    put_f64s(w, &rec.tau)?;
    Ok(())
}

/// Next record, or `None` at a clean end of stream.
pub fn read_record(r: &mut impl Read) -> Result<Option<SequenceRecord>> {
    let mut magic = [0u8; 7];
    match r.read_exact(&mut magic[..1]) {
        Err(e) if e.kind() == ErrorKind::UnexpectedEof => return Ok(None),
        other => other?,
    }
    r.read_exact(&mut magic[1..])?;
    if &magic != SEQ_MAGIC {
        return Err(Error::Format("bad record magic (not an .rveseq stream)".into()));
    }
    let version = get_u32(r)?;
    if version != SEQ_VERSION {
        return Err(Error::Format(format!("unsupported record version {version}")));
    }
    let n_in = get_u32(r)? as usize;
    let d_gamma = get_u32(r)? as usize;
    let d_tau = get_u32(r)? as usize;
    let length = get_u32(r)? as usize;
    let mut flags = [0u8];
    r.read_exact(&mut flags)?;
    let inputs = get_f64s(r, length * n_in)?;
    let gamma = get_f64s(r, length * d_gamma)?;
    let tau = get_f64s(r, length * d_tau)?;
    Ok(Some(SequenceRecord { n_in, d_gamma, d_tau, length, flags: flags[0], inputs, gamma, tau }))
}

pub fn write_records(path: &Path, records: &[SequenceRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for rec in records {
        write_record(&mut w, rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<SequenceRecord>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    while let Some(rec) = read_record(&mut r)? {
        out.push(rec);
    }
    Ok(out)
}
