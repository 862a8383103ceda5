//! Binary and CSV readers/writers.
//!
//! Field map binary layout (`.qdmf`):
//!
//! ```text
//! "QDMF"  u32 width  u32 height  f64 pitch  f64 values[width*height]
//! ```
//!
//! Frame stack binary layout (`.qdms`):
//!
//! ```text
//! "QDMS"  u32 width  u32 height  u32 n_frames  f64 frame_rate  f32 values[n_frames*width*height]
//! ```
//!
//! Everything is little-endian and row-major. Field maps round-trip bit-exactly;
//! frame stacks are stored in single precision.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{QdmError, Result};
use crate::grid::{FieldMap, FrameStack};

const FIELD_MAGIC: &[u8; 4] = b"QDMF";
const STACK_MAGIC: &[u8; 4] = b"QDMS";

pub fn encode_field_map(map: &FieldMap) -> Vec<u8> {
    let mut buf = Vec::with_capacity(20 + 8 * map.values().len());
    buf.extend_from_slice(FIELD_MAGIC);
    buf.extend_from_slice(&(map.width() as u32).to_le_bytes());
    buf.extend_from_slice(&(map.height() as u32).to_le_bytes());
    buf.extend_from_slice(&map.pitch().to_le_bytes());
    for v in map.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

pub fn decode_field_map(bytes: &[u8]) -> Result<FieldMap> {
    if bytes.len() < 20 {
        return Err(QdmError::Format("field map header truncated".into()));
    }
    if &bytes[0..4] != FIELD_MAGIC {
        return Err(QdmError::Format(format!(
            "bad magic {:?}, expected \"QDMF\"",
            String::from_utf8_lossy(&bytes[0..4])
        )));
    }
    let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let pitch = f64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let n = width
        .checked_mul(height)
        .ok_or_else(|| QdmError::Format("dimension overflow".into()))?;
    let payload = &bytes[20..];
    if payload.len() != 8 * n {
        return Err(QdmError::Format(format!(
            "payload holds {} bytes, {}x{} map needs {}",
            payload.len(),
            width,
            height,
            8 * n
        )));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    FieldMap::new(width, height, pitch, values).map_err(|e| QdmError::Format(e.to_string()))
}

pub fn write_field_map(map: &FieldMap, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_field_map(map))?;
    Ok(())
}

pub fn read_field_map(path: impl AsRef<Path>) -> Result<FieldMap> {
    decode_field_map(&std::fs::read(path)?)
}

/// Row-major CSV, one image row per line, shortest round-trip float formatting.
pub fn write_field_map_csv(map: &FieldMap, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for row in map.values().chunks(map.width()) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_field_map_csv(path: impl AsRef<Path>, pitch: f64) -> Result<FieldMap> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let mut values = Vec::new();
    let mut width = 0;
    let mut height = 0;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if height == 0 {
            width = rec.len();
        } else if rec.len() != width {
            return Err(parse_err(path, i + 1, "ragged row"));
        }
        for cell in rec.iter() {
            values.push(parse_f64(path, i + 1, cell)?);
        }
        height += 1;
    }
    FieldMap::new(width, height, pitch, values)
}

pub fn write_frame_stack(stack: &FrameStack, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(STACK_MAGIC)?;
    w.write_all(&(stack.width() as u32).to_le_bytes())?;
    w.write_all(&(stack.height() as u32).to_le_bytes())?;
    w.write_all(&(stack.n_frames() as u32).to_le_bytes())?;
    w.write_all(&stack.frame_rate().to_le_bytes())?;
    for v in stack.data() {
        w.write_all(&(*v as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_frame_stack(path: impl AsRef<Path>) -> Result<FrameStack> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    if bytes.len() < 24 {
        return Err(QdmError::Format("frame stack header truncated".into()));
    }
    if &bytes[0..4] != STACK_MAGIC {
        return Err(QdmError::Format("bad magic, expected \"QDMS\"".into()));
    }
    let u = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let (width, height, n) = (u(4), u(8), u(12));
    let rate = f64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let expected = width * height * n * 4;
    if bytes.len() - 24 != expected {
        return Err(QdmError::Format(format!(
            "payload holds {} bytes, expected {expected}",
            bytes.len() - 24
        )));
    }
    let data = bytes[24..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    FrameStack::new(width, height, rate, data).map_err(|e| QdmError::Format(e.to_string()))
}

/// Write named columns of equal length as a CSV table with a header line.
pub fn write_columns_csv(path: impl AsRef<Path>, headers: &[&str], columns: &[&[f64]]) -> Result<()> {
    if headers.len() != columns.len() {
        return Err(QdmError::invalid("header/column count mismatch"));
    }
    let n = columns.first().map_or(0, |c| c.len());
    if columns.iter().any(|c| c.len() != n) {
        return Err(QdmError::invalid("columns differ in length"));
    }
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", headers.join(","))?;
    for i in 0..n {
        let row: Vec<String> = columns.iter().map(|c| format!("{:?}", c[i])).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Sampled voltage trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub time: Vec<f64>,
    pub volts: Vec<f64>,
}

impl Waveform {
    pub fn new(time: Vec<f64>, volts: Vec<f64>) -> Result<Self> {
        if time.len() != volts.len() || time.is_empty() {
            return Err(QdmError::invalid("waveform needs equal, non-empty columns"));
        }
        if let Some(i) = time.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(QdmError::invalid(format!(
                "time column not strictly increasing at sample {}",
                i + 1
            )));
        }
        Ok(Waveform { time, volts })
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.time[self.time.len() - 1] - self.time[0]
    }

    /// Linear interpolation, held constant beyond either end.
    pub fn at(&self, t: f64) -> f64 {
        let n = self.time.len();
        if t <= self.time[0] {
            return self.volts[0];
        }
        if t >= self.time[n - 1] {
            return self.volts[n - 1];
        }
        let i = self.time.partition_point(|&x| x <= t) - 1;
        let (t0, t1) = (self.time[i], self.time[i + 1]);
        let s = (t - t0) / (t1 - t0);
        self.volts[i] + s * (self.volts[i + 1] - self.volts[i])
    }

    pub fn resample(&self, times: &[f64]) -> Vec<f64> {
        times.iter().map(|&t| self.at(t)).collect()
    }
}

pub fn parse_waveform(text: &str, origin: &Path) -> Result<Waveform> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut time = Vec::new();
    let mut volts = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(origin, e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != 2 {
            return Err(parse_err(origin, line, "expected two columns"));
        }
        let t = parse_f64(origin, line, &rec[0])?;
        if let Some(&prev) = time.last() {
            if t <= prev {
                return Err(parse_err(origin, line, "time column not strictly increasing"));
            }
        }
        time.push(t);
        volts.push(parse_f64(origin, line, &rec[1])?);
    }
    Waveform::new(time, volts).map_err(|e| parse_err(origin, 0, &e.to_string()))
}

pub fn load_waveform(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    parse_waveform(&std::fs::read_to_string(path)?, path)
}

pub fn write_waveform(w: &Waveform, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for (t, v) in w.time.iter().zip(&w.volts) {
        writeln!(out, "{t:?},{v:?}")?;
    }
    out.flush()?;
    Ok(())
}

pub(crate) fn parse_f64(path: &Path, line: usize, cell: &str) -> Result<f64> {
    let v: f64 = cell
        .trim()
        .parse()
        .map_err(|_| parse_err(path, line, &format!("not a number: {cell:?}")))?;
    if !v.is_finite() {
        return Err(parse_err(path, line, "non-finite value"));
    }
    Ok(v)
}

pub(crate) fn parse_err(path: &Path, line: usize, msg: &str) -> QdmError {
    QdmError::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.to_string(),
    }
}

pub(crate) fn csv_err(path: &Path, e: csv::Error) -> QdmError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    parse_err(path, line, &e.to_string())
}
