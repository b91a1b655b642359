//! FVS1: a little-endian binary stream of fixed-width feature vectors.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "FVS1"
//! 4       2     version (u16, currently 1)
//! 6       4     M, features per row (u32, ≥ 1)
//! 10      8     n, row count (u64; 0 = unknown, read to end of stream)
//! 18      ...   n·M f32 values, row-major
//! ```

use std::fs::File;
use std::io::{self, BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::mixture::Dataset;
use crate::source::SampleSource;

pub const MAGIC: &[u8; 4] = b"FVS1";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 18;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fvs1Header {
    pub version: u16,
    pub dim: u32,
    /// Declared row count; 0 when unknown.
    pub rows: u64,
}

impl Fvs1Header {
    pub fn new(dim: usize, rows: u64) -> Result<Self> {
        if dim == 0 || dim > u32::MAX as usize {
            return Err(Error::Usage(format!("invalid feature count {dim}")));
        }
        Ok(Self { version: VERSION, dim: dim as u32, rows })
    }

    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[..4].copy_from_slice(MAGIC);
        b[4..6].copy_from_slice(&self.version.to_le_bytes());
        b[6..10].copy_from_slice(&self.dim.to_le_bytes());
        b[10..18].copy_from_slice(&self.rows.to_le_bytes());
        b
    }

    pub fn parse(b: &[u8; HEADER_LEN]) -> Result<Self> {
        if &b[..4] != MAGIC {
            return Err(Error::Format("not an FVS1 stream (bad magic)".into()));
        }
        let version = u16::from_le_bytes([b[4], b[5]]);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported FVS1 version {version}")));
        }
        let dim = u32::from_le_bytes(b[6..10].try_into().unwrap());
        if dim == 0 {
            return Err(Error::Format("FVS1 header declares zero features".into()));
        }
        let rows = u64::from_le_bytes(b[10..18].try_into().unwrap());
        Ok(Self { version, dim, rows })
    }
}

/// Streaming FVS1 reader.
pub struct Fvs1Reader<R: Read> {
    inner: R,
    header: Fvs1Header,
    rows_read: u64,
    row_bytes: Vec<u8>,
}

impl Fvs1Reader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(BufReader::new(File::open(path)?))
    }
}

impl<R: Read> Fvs1Reader<R> {
    pub fn new(mut inner: R) -> Result<Self> {
        let mut b = [0u8; HEADER_LEN];
        inner.read_exact(&mut b).map_err(|e| match e.kind() {
            ErrorKind::UnexpectedEof => Error::Format("truncated FVS1 header".into()),
            _ => Error::Io(e),
        })?;
        let header = Fvs1Header::parse(&b)?;
        let row_bytes = vec![0u8; 4 * header.dim as usize];
        Ok(Self { inner, header, rows_read: 0, row_bytes })
    }

    pub fn header(&self) -> Fvs1Header {
        self.header
    }

    /// Reads the next row into `out`; `Ok(false)` at the end of the stream.
    pub fn read_row(&mut self, out: &mut [f64]) -> Result<bool> {
        if self.header.rows != 0 && self.rows_read == self.header.rows {
            return Ok(false);
        }
        if !read_full(&mut self.inner, &mut self.row_bytes)? {
            if self.header.rows != 0 {
                return Err(Error::Format(format!(
                    "FVS1 stream ended after {} of {} rows",
                    self.rows_read, self.header.rows
                )));
            }
            return Ok(false);
        }
        for (o, c) in out.iter_mut().zip(self.row_bytes.chunks_exact(4)) {
            let v = f32::from_le_bytes(c.try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::Data(format!("non-finite value in row {}", self.rows_read)));
            }
            *o = v as f64;
        }
        self.rows_read += 1;
        Ok(true)
    }
}

/// Fills `buf` completely, or returns `Ok(false)` if the stream is exhausted
/// before the first byte. A partial row is a format error.
fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<bool> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) if filled == 0 => return Ok(false),
            Ok(0) => return Err(Error::Format("FVS1 stream ends mid-row".into())),
            Ok(k) => filled += k,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(true)
}

impl<R: Read> SampleSource for Fvs1Reader<R> {
    fn dim(&self) -> usize {
        self.header.dim as usize
    }

    fn read_rows(&mut self, out: &mut Vec<f64>, max_rows: usize) -> Result<usize> {
        let d = self.dim();
        let mut got = 0;
        while got < max_rows {
            let start = out.len();
            out.resize(start + d, 0.0);
            if !self.read_row(&mut out[start..])? {
                out.truncate(start);
                break;
            }
            got += 1;
        }
        Ok(got)
    }

    fn len_hint(&self) -> Option<u64> {
        (self.header.rows != 0).then_some(self.header.rows)
    }
}

/// Streaming FVS1 writer. Values are stored as f32; NaN and infinities are
/// rejected.
pub struct Fvs1Writer<W: Write> {
    inner: W,
    dim: usize,
    rows_written: u64,
}

impl Fvs1Writer<BufWriter<File>> {
    pub fn create(path: impl AsRef<Path>, dim: usize, rows: u64) -> Result<Self> {
        Self::new(BufWriter::new(File::create(path)?), dim, rows)
    }
}

impl<W: Write> Fvs1Writer<W> {
    pub fn new(mut inner: W, dim: usize, rows: u64) -> Result<Self> {
        inner.write_all(&Fvs1Header::new(dim, rows)?.to_bytes())?;
        Ok(Self { inner, dim, rows_written: 0 })
    }

    pub fn write_row(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::Usage(format!("row has {} values, stream has {}", row.len(), self.dim)));
        }
        let mut bytes = [0u8; 4];
        for &v in row {
            let x = v as f32;
            if !x.is_finite() {
                return Err(Error::Data(format!("cannot store non-finite value {v} in FVS1")));
            }
            bytes.copy_from_slice(&x.to_le_bytes());
            self.inner.write_all(&bytes)?;
        }
        self.rows_written += 1;
        Ok(())
    }

    pub fn rows_written(&self) -> u64 {
        self.rows_written
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// Writes a whole dataset with its row count in the header.
pub fn write_dataset<W: Write>(w: W, data: &Dataset) -> Result<W> {
    let mut writer = Fvs1Writer::new(w, data.dim(), data.len() as u64)?;
    for row in data.rows() {
        writer.write_row(row)?;
    }
    Ok(writer.finish()?)
}

pub fn write_dataset_file(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    write_dataset(BufWriter::new(File::create(path)?), data)?;
    Ok(())
}

/// Reads an entire FVS1 stream.
pub fn read_dataset<R: Read>(r: R) -> Result<Dataset> {
    let mut reader = Fvs1Reader::new(r)?;
    let mut values = Vec::new();
    reader.read_rows(&mut values, usize::MAX)?;
    Dataset::new(reader.dim(), values)
}
