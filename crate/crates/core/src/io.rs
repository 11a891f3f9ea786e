//! On-disk formats: the binary trace file and the spectrum CSV.
//!
//! Trace file, all little-endian:
//!
//! ```text
//! magic        4 bytes  "TWBM"
//! version      u32      1
//! sample rate  f64      Hz
//! channels     u32
//! samples      u64      per channel
//! names        per channel: u32 byte length + UTF-8
//! payload      channels in order, samples as f32
//! ```

use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const TRACE_MAGIC: &[u8; 4] = b"TWBM";
pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TraceChannel {
    pub name: String,
    pub samples: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceFile {
    pub sample_rate_hz: f64,
    pub channels: Vec<TraceChannel>,
}

impl TraceFile {
    pub fn new(sample_rate_hz: f64) -> Self {
        Self {
            sample_rate_hz,
            channels: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, samples: &[f64]) -> Result<()> {
        if let Some(first) = self.channels.first() {
            if first.samples.len() != samples.len() {
                return Err(Error::LengthMismatch {
                    left: first.samples.len(),
                    right: samples.len(),
                });
            }
        }
        self.channels.push(TraceChannel {
            name: name.into(),
            samples: samples.iter().map(|&x| x as f32).collect(),
        });
        Ok(())
    }

    pub fn num_samples(&self) -> usize {
        self.channels.first().map_or(0, |c| c.samples.len())
    }

    pub fn channel(&self, name: &str) -> Result<&TraceChannel> {
        self.channels
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| Error::Config(format!("trace has no channel named `{name}`")))
    }

    /// Samples of channel `name` widened to f64.
    pub fn series(&self, name: &str) -> Result<Vec<f64>> {
        Ok(self.channel(name)?.samples.iter().map(|&x| x as f64).collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.num_samples();
        let mut out = Vec::with_capacity(32 + self.channels.len() * (n * 4 + 16));
        out.extend_from_slice(TRACE_MAGIC);
        out.extend_from_slice(&TRACE_VERSION.to_le_bytes());
        out.extend_from_slice(&self.sample_rate_hz.to_le_bytes());
        out.extend_from_slice(&(self.channels.len() as u32).to_le_bytes());
        out.extend_from_slice(&(n as u64).to_le_bytes());
        for c in &self.channels {
            out.extend_from_slice(&(c.name.len() as u32).to_le_bytes());
            out.extend_from_slice(c.name.as_bytes());
        }
        for c in &self.channels {
            for x in &c.samples {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != TRACE_MAGIC {
            return Err(r.corrupt(0, "bad magic, not a trace file"));
        }
        let version = r.u32("format version")?;
        if version != TRACE_VERSION {
            return Err(r.corrupt(4, format!("unsupported format version {version}")));
        }
        let sample_rate_hz = r.f64("sample rate")?;
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(r.corrupt(8, format!("invalid sample rate {sample_rate_hz}")));
        }
        let count = r.u32("channel count")? as usize;
        let samples = r.u64("sample count")?;
        let samples = usize::try_from(samples).map_err(|_| r.corrupt(20, "sample count overflows"))?;

        let mut names = Vec::with_capacity(count.min(1024));
        for i in 0..count {
            let at = r.pos;
            let len = r.u32("channel name length")? as usize;
            let raw = r.take(len, "channel name")?;
            let name = std::str::from_utf8(raw)
                .map_err(|_| r.corrupt(at as u64, format!("channel {i} name is not UTF-8")))?;
            names.push(name.to_string());
        }

        let payload = count
            .checked_mul(samples)
            .and_then(|v| v.checked_mul(4))
            .ok_or_else(|| r.corrupt(r.pos as u64, "payload size overflows"))?;
        let remaining = bytes.len() - r.pos;
        if remaining < payload {
            return Err(r.corrupt(
                bytes.len() as u64,
                format!("truncated payload: expected {payload} bytes, found {remaining}"),
            ));
        }
        if remaining > payload {
            return Err(r.corrupt(
                (r.pos + payload) as u64,
                format!("{} unexpected trailing bytes", remaining - payload),
            ));
        }
        let mut channels = Vec::with_capacity(count);
        for name in names {
            let raw = r.take(samples * 4, "samples")?;
            let samples = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            channels.push(TraceChannel { name, samples });
        }
        Ok(Self {
            sample_rate_hz,
            channels,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn corrupt(&self, offset: u64, reason: impl Into<String>) -> Error {
        Error::CorruptTrace {
            offset,
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.corrupt(
                self.bytes.len() as u64,
                format!("truncated while reading {what} at offset {}", self.pos),
            ));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let b = self.take(8, what)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Frequency table with optional intensity and phase columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumTable {
    pub f_hz: Vec<f64>,
    pub s_i: Option<Vec<f64>>,
    pub s_p: Option<Vec<f64>>,
}

fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

impl SpectrumTable {
    /// UTF-8, LF line endings, 17 significant digits. Columns are
    /// `f_hz[,s_i][,s_p][,s_i_db][,s_p_db]`.
    pub fn to_csv(&self) -> Result<String> {
        let mut header = vec!["f_hz"];
        let mut cols: Vec<Vec<f64>> = vec![self.f_hz.clone()];
        for (name, col) in [("s_i", &self.s_i), ("s_p", &self.s_p)] {
            if let Some(c) = col {
                header.push(name);
                cols.push(c.clone());
            }
        }
        for (name, col) in [("s_i_db", &self.s_i), ("s_p_db", &self.s_p)] {
            if let Some(c) = col {
                header.push(name);
                cols.push(c.iter().map(|&x| db(x)).collect());
            }
        }
        for c in &cols {
            if c.len() != self.f_hz.len() {
                return Err(Error::LengthMismatch {
                    left: self.f_hz.len(),
                    right: c.len(),
                });
            }
        }
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Csv {
            line: 0,
            reason: e.to_string(),
        };
        w.write_record(&header).map_err(csv_err)?;
        for row in 0..self.f_hz.len() {
            w.write_record(cols.iter().map(|c| fmt_float(c[row]))).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Csv {
            line: 0,
            reason: e.to_string(),
        })?;
        Ok(String::from_utf8(bytes).expect("ascii output"))
    }

    /// Reads `f_hz` plus whichever of `s_i`/`s_p` are present; other columns are ignored.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let headers = rdr
            .headers()
            .map_err(|e| Error::Csv {
                line: 1,
                reason: e.to_string(),
            })?
            .clone();
        let find = |name: &str| headers.iter().position(|h| h.trim() == name);
        let f_col = find("f_hz").ok_or(Error::Csv {
            line: 1,
            reason: "missing `f_hz` column".into(),
        })?;
        let i_col = find("s_i");
        let p_col = find("s_p");
        if i_col.is_none() && p_col.is_none() {
            return Err(Error::Csv {
                line: 1,
                reason: "need an `s_i` or `s_p` column".into(),
            });
        }
        let mut table = SpectrumTable {
            f_hz: Vec::new(),
            s_i: i_col.map(|_| Vec::new()),
            s_p: p_col.map(|_| Vec::new()),
        };
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| Error::Csv {
                line,
                reason: e.to_string(),
            })?;
            let get = |col: usize| -> Result<f64> {
                let cell = rec.get(col).ok_or(Error::Csv {
                    line,
                    reason: format!("missing column {col}"),
                })?;
                cell.trim().parse().map_err(|_| Error::Csv {
                    line,
                    reason: format!("not a number: `{cell}`"),
                })
            };
            table.f_hz.push(get(f_col)?);
            if let (Some(c), Some(v)) = (i_col, table.s_i.as_mut()) {
                v.push(get(c)?);
            }
            if let (Some(c), Some(v)) = (p_col, table.s_p.as_mut()) {
                v.push(get(c)?);
            }
        }
        Ok(table)
    }
}
