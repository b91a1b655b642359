//! Pull-based sample streams consumed by the online estimator.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::sync::mpsc::{sync_channel, Receiver};
use std::thread::{self, JoinHandle};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::datagen::Sampler;
use crate::error::{usage, Error, Result};
use crate::fvs1::{Fvs1Reader, MAGIC};
use crate::mixture::{Dataset, MixtureModel};

/// A forward-only stream of feature vectors.
pub trait SampleSource {
    fn dim(&self) -> usize;

    /// Appends up to `max_rows` rows to `out` and returns how many were
    /// appended. Zero means the stream is exhausted.
    fn read_rows(&mut self, out: &mut Vec<f64>, max_rows: usize) -> Result<usize>;

    /// Total number of rows, when known up front.
    fn len_hint(&self) -> Option<u64> {
        None
    }
}

impl<S: SampleSource + ?Sized> SampleSource for Box<S> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn read_rows(&mut self, out: &mut Vec<f64>, max_rows: usize) -> Result<usize> {
        (**self).read_rows(out, max_rows)
    }

    fn len_hint(&self) -> Option<u64> {
        (**self).len_hint()
    }
}

/// Streams the rows of an in-memory dataset.
pub struct MemorySource<'a> {
    data: &'a Dataset,
    pos: usize,
}

impl<'a> MemorySource<'a> {
    pub fn new(data: &'a Dataset) -> Self {
        Self { data, pos: 0 }
    }
}

impl SampleSource for MemorySource<'_> {
    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn read_rows(&mut self, out: &mut Vec<f64>, max_rows: usize) -> Result<usize> {
        let take = max_rows.min(self.data.len() - self.pos);
        let d = self.data.dim();
        out.extend_from_slice(&self.data.as_slice()[self.pos * d..(self.pos + take) * d]);
        self.pos += take;
        Ok(take)
    }

    fn len_hint(&self) -> Option<u64> {
        Some(self.data.len() as u64)
    }
}

/// Draws `n` samples from a model on demand, without materializing them.
pub struct GeneratorSource<'a> {
    sampler: Sampler<'a>,
    rng: ChaCha8Rng,
    remaining: u64,
    total: u64,
}

impl<'a> GeneratorSource<'a> {
    pub fn new(model: &'a MixtureModel, n: u64, seed: u64) -> Result<Self> {
        Ok(Self {
            sampler: Sampler::new(model)?,
            rng: ChaCha8Rng::seed_from_u64(seed),
            remaining: n,
            total: n,
        })
    }
}

impl SampleSource for GeneratorSource<'_> {
    fn dim(&self) -> usize {
        self.sampler.dim()
    }

    fn read_rows(&mut self, out: &mut Vec<f64>, max_rows: usize) -> Result<usize> {
        let take = (max_rows as u64).min(self.remaining) as usize;
        let d = self.dim();
        let start = out.len();
        out.resize(start + take * d, 0.0);
        for row in out[start..].chunks_exact_mut(d) {
            self.sampler.sample_into(&mut self.rng, row);
        }
        self.remaining -= take as u64;
        Ok(take)
    }

    fn len_hint(&self) -> Option<u64> {
        Some(self.total)
    }
}

/// Wraps a source and records how much was pulled from it.
pub struct CountingSource<S> {
    inner: S,
    rows: u64,
    calls: u64,
    largest_request: usize,
    exhausted: bool,
}

impl<S: SampleSource> CountingSource<S> {
    pub fn new(inner: S) -> Self {
        Self { inner, rows: 0, calls: 0, largest_request: 0, exhausted: false }
    }

    pub fn rows_read(&self) -> u64 {
        self.rows
    }

    pub fn calls(&self) -> u64 {
        self.calls
    }

    /// Largest single `max_rows` request seen.
    pub fn largest_request(&self) -> usize {
        self.largest_request
    }

    /// Whether a read returned zero rows.
    pub fn exhausted(&self) -> bool {
        self.exhausted
    }

    /// Full passes over a stream of `total` rows, rounded up. A forward-only
    /// source can never exceed one pass; this reports what was consumed.
    pub fn passes(&self, total: u64) -> u64 {
        if total == 0 {
            0
        } else {
            self.rows.div_ceil(total)
        }
    }

    pub fn into_inner(self) -> S {
        self.inner
    }
}

impl<S: SampleSource> SampleSource for CountingSource<S> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn read_rows(&mut self, out: &mut Vec<f64>, max_rows: usize) -> Result<usize> {
        self.calls += 1;
        self.largest_request = self.largest_request.max(max_rows);
        let got = self.inner.read_rows(out, max_rows)?;
        if got == 0 && max_rows > 0 {
            self.exhausted = true;
        }
        self.rows += got as u64;
        Ok(got)
    }

    fn len_hint(&self) -> Option<u64> {
        self.inner.len_hint()
    }
}

/// Reads an inner source on a background thread, `chunk_rows` rows at a
/// time, with at most `depth` chunks queued. `read_rows` fills the request
/// completely unless the stream ends, so batch boundaries and results match
/// reading the inner source directly.
pub struct PrefetchSource {
    dim: usize,
    len_hint: Option<u64>,
    rx: Receiver<Result<Vec<f64>>>,
    current: Vec<f64>,
    pos: usize,
    done: bool,
    handle: Option<JoinHandle<()>>,
}

impl PrefetchSource {
    pub fn spawn<S: SampleSource + Send + 'static>(mut inner: S, chunk_rows: usize, depth: usize) -> Result<Self> {
        if chunk_rows == 0 || depth == 0 {
            return usage("prefetch needs positive chunk size and depth");
        }
        let dim = inner.dim();
        let len_hint = inner.len_hint();
        let (tx, rx) = sync_channel(depth);
        let handle = thread::Builder::new().name("omix-reader".into()).spawn(move || loop {
            let mut buf = Vec::with_capacity(chunk_rows * dim);
            match inner.read_rows(&mut buf, chunk_rows) {
                Ok(0) => break,
                Ok(_) => {
                    if tx.send(Ok(buf)).is_err() {
                        break;
                    }
                }
                Err(e) => {
                    let _ = tx.send(Err(e));
                    break;
                }
            }
        })?;
        Ok(Self { dim, len_hint, rx, current: Vec::new(), pos: 0, done: false, handle: Some(handle) })
    }

    /// Next chunk from the reader, or `None` at the end of the stream.
    fn refill(&mut self) -> Result<bool> {
        match self.rx.recv() {
            Ok(Ok(chunk)) => {
                self.current = chunk;
                self.pos = 0;
                Ok(true)
            }
            Ok(Err(e)) => {
                self.done = true;
                Err(e)
            }
            Err(_) => {
                self.done = true;
                match self.handle.take().map(JoinHandle::join) {
                    Some(Err(_)) => Err(Error::Io(std::io::Error::other("reader thread panicked"))),
                    _ => Ok(false),
                }
            }
        }
    }
}

impl SampleSource for PrefetchSource {
    fn dim(&self) -> usize {
        self.dim
    }

    fn read_rows(&mut self, out: &mut Vec<f64>, max_rows: usize) -> Result<usize> {
        let mut got = 0;
        while got < max_rows {
            if self.pos == self.current.len() && (self.done || !self.refill()?) {
                break;
            }
            let take = ((self.current.len() - self.pos) / self.dim).min(max_rows - got);
            out.extend_from_slice(&self.current[self.pos..self.pos + take * self.dim]);
            self.pos += take * self.dim;
            got += take;
        }
        Ok(got)
    }

    fn len_hint(&self) -> Option<u64> {
        self.len_hint
    }
}

/// Comma-separated rows, one sample per line. Blank lines and lines starting
/// with `#` are skipped. Values are parsed as f32, the FVS1 storage
/// precision, so the same data read from either format is bit-identical.
pub struct CsvSource<R: BufRead> {
    lines: std::io::Lines<R>,
    dim: usize,
    line_no: usize,
    pending: Option<Vec<f64>>,
}

impl CsvSource<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(BufReader::new(File::open(path)?))
    }
}

impl<R: BufRead> CsvSource<R> {
    /// Reads ahead to the first data row to learn the dimension.
    pub fn new(reader: R) -> Result<Self> {
        let mut src = Self { lines: reader.lines(), dim: 0, line_no: 0, pending: None };
        match src.next_row()? {
            Some(row) => {
                src.dim = row.len();
                src.pending = Some(row);
            }
            None => return Err(Error::Format("CSV input has no data rows".into())),
        }
        Ok(src)
    }

    fn next_row(&mut self) -> Result<Option<Vec<f64>>> {
        for line in self.lines.by_ref() {
            self.line_no += 1;
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let row = t
                .split(',')
                .map(|f| {
                    let v: f32 = f.trim().parse().map_err(|_| {
                        Error::Format(format!("line {}: cannot parse '{}'", self.line_no, f.trim()))
                    })?;
                    if !v.is_finite() {
                        return Err(Error::Data(format!("line {}: non-finite value", self.line_no)));
                    }
                    Ok(v as f64)
                })
                .collect::<Result<Vec<_>>>()?;
            if self.dim != 0 && row.len() != self.dim {
                return Err(Error::Format(format!(
                    "line {}: {} values, expected {}",
                    self.line_no,
                    row.len(),
                    self.dim
                )));
            }
            return Ok(Some(row));
        }
        Ok(None)
    }
}

impl<R: BufRead> SampleSource for CsvSource<R> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn read_rows(&mut self, out: &mut Vec<f64>, max_rows: usize) -> Result<usize> {
        let mut got = 0;
        while got < max_rows {
            let row = match self.pending.take() {
                Some(r) => r,
                None => match self.next_row()? {
                    Some(r) => r,
                    None => break,
                },
            };
            out.extend_from_slice(&row);
            got += 1;
        }
        Ok(got)
    }
}

/// Opens an FVS1 or CSV file, chosen by the leading magic bytes.
pub fn open_source(path: impl AsRef<Path>) -> Result<Box<dyn SampleSource + Send>> {
    let path = path.as_ref();
    let mut head = [0u8; 4];
    let n = File::open(path)?.read(&mut head)?;
    if n == 4 && &head == MAGIC {
        Ok(Box::new(Fvs1Reader::open(path)?))
    } else {
        Ok(Box::new(CsvSource::open(path)?))
    }
}

/// Reads everything left in a source.
pub fn read_all(source: &mut dyn SampleSource) -> Result<Dataset> {
    let mut values = Vec::new();
    while source.read_rows(&mut values, 1 << 16)? > 0 {}
    Dataset::new(source.dim(), values)
}
