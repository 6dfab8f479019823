//! Tensor files: a binary layout and a CSV layout carrying the same header.
//!
//! Binary: magic `TMSD`, format version byte, scalar kind byte (0 real,
//! 1 complex), `n1 n2 n3` as little-endian `u64`, then values in `(i, j, k)`
//! row-major order as little-endian `f64` (real and imaginary parts
//! interleaved for complex data).
//!
//! CSV: a `n1,n2,n3,kind` header row, one data row with those values, then
//! one row per entry in the same order (`re` or `re,im`).

use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor3;
use crate::C64;

const MAGIC: &[u8; 4] = b"TMSD";
const VERSION: u8 = 1;
const REAL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalarKind {
    Real,
    Complex,
}

impl ScalarKind {
    pub fn of(t: &Tensor3) -> Self {
        if t.imag_residue() <= REAL_TOL {
            ScalarKind::Real
        } else {
            ScalarKind::Complex
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            ScalarKind::Real => "real",
            ScalarKind::Complex => "complex",
        }
    }
}

impl FromStr for ScalarKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "real" => Ok(ScalarKind::Real),
            "complex" => Ok(ScalarKind::Complex),
            other => Err(Error::Format(format!("unknown scalar kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    Binary,
    Csv,
}

impl FileFormat {
    /// `.csv` selects CSV; anything else is binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => FileFormat::Csv,
            _ => FileFormat::Binary,
        }
    }
}

pub fn write_binary<W: Write>(t: &Tensor3, mut w: W) -> Result<()> {
    let kind = ScalarKind::of(t);
    let (n1, n2, n3) = t.shape();
    w.write_all(MAGIC)?;
    w.write_all(&[VERSION, kind as u8])?;
    for n in [n1, n2, n3] {
        w.write_all(&(n as u64).to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(n1 * n2 * n3 * 16);
    for z in t.to_row_major() {
        buf.extend_from_slice(&z.re.to_le_bytes());
        if kind == ScalarKind::Complex {
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_binary<R: Read>(mut r: R) -> Result<Tensor3> {
    let mut head = [0u8; 30];
    r.read_exact(&mut head).map_err(|_| Error::Format("truncated header".into()))?;
    if &head[..4] != MAGIC {
        return Err(Error::Format("missing TMSD magic".into()));
    }
    if head[4] != VERSION {
        return Err(Error::Format(format!("unsupported version {}", head[4])));
    }
    let kind = match head[5] {
        0 => ScalarKind::Real,
        1 => ScalarKind::Complex,
        b => return Err(Error::Format(format!("unknown scalar kind byte {b}"))),
    };
    let dim = |o: usize| u64::from_le_bytes(head[o..o + 8].try_into().unwrap()) as usize;
    let (n1, n2, n3) = (dim(6), dim(14), dim(22));
    let per = if kind == ScalarKind::Complex { 2 } else { 1 };
    let count = n1
        .checked_mul(n2)
        .and_then(|x| x.checked_mul(n3))
        .and_then(|x| x.checked_mul(per * 8))
        .ok_or_else(|| Error::Format("dimensions overflow".into()))?;
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    if body.len() != count {
        return Err(Error::Format(format!("expected {count} payload bytes, found {}", body.len())));
    }
    let floats: Vec<f64> = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let values: Vec<C64> = floats
        .chunks_exact(per)
        .map(|c| C64::new(c[0], if per == 2 { c[1] } else { 0.0 }))
        .collect();
    Tensor3::from_row_major(n1, n2, n3, &values)
}

pub fn write_csv<W: Write>(t: &Tensor3, w: W) -> Result<()> {
    let kind = ScalarKind::of(t);
    let (n1, n2, n3) = t.shape();
    let mut out = csv::WriterBuilder::new().flexible(true).from_writer(w);
    let csv_err = |e: csv::Error| Error::Io(e.to_string());
    out.write_record(["n1", "n2", "n3", "kind"]).map_err(csv_err)?;
    out.write_record([n1.to_string(), n2.to_string(), n3.to_string(), kind.as_str().to_string()])
        .map_err(csv_err)?;
    for z in t.to_row_major() {
        match kind {
            ScalarKind::Real => out.write_record([format!("{:e}", z.re)]),
            ScalarKind::Complex => out.write_record([format!("{:e}", z.re), format!("{:e}", z.im)]),
        }
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<Tensor3> {
    let mut rd = csv::ReaderBuilder::new().flexible(true).has_headers(true).from_reader(r);
    let fmt = |e: csv::Error| Error::Format(e.to_string());
    let mut records = rd.records();
    let header = records.next().ok_or_else(|| Error::Format("missing shape row".into()))?.map_err(fmt)?;
    if header.len() != 4 {
        return Err(Error::Format("shape row needs n1,n2,n3,kind".into()));
    }
    let parse_dim = |s: &str| s.trim().parse::<usize>().map_err(|e| Error::Format(format!("bad dimension `{s}`: {e}")));
    let (n1, n2, n3) = (parse_dim(&header[0])?, parse_dim(&header[1])?, parse_dim(&header[2])?);
    let kind: ScalarKind = header[3].parse()?;
    let parse_f = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Format(format!("bad value `{s}`: {e}")));
    let mut values = Vec::with_capacity(n1 * n2 * n3);
    for rec in records {
        let rec = rec.map_err(fmt)?;
        let z = match (kind, rec.len()) {
            (ScalarKind::Real, 1) => C64::new(parse_f(&rec[0])?, 0.0),
            (ScalarKind::Complex, 2) => C64::new(parse_f(&rec[0])?, parse_f(&rec[1])?),
            (_, n) => return Err(Error::Format(format!("{n} fields in a {} row", kind.as_str()))),
        };
        values.push(z);
    }
    Tensor3::from_row_major(n1, n2, n3, &values).map_err(|e| Error::Format(e.to_string()))
}

/// Writes in the layout chosen by the file extension.
pub fn save(t: &Tensor3, path: &Path) -> Result<()> {
    let f = std::io::BufWriter::new(fs::File::create(path)?);
    match FileFormat::from_path(path) {
        FileFormat::Binary => write_binary(t, f),
        FileFormat::Csv => write_csv(t, f),
    }
}

pub fn load(path: &Path) -> Result<Tensor3> {
    let f = std::io::BufReader::new(fs::File::open(path)?);
    match FileFormat::from_path(path) {
        FileFormat::Binary => read_binary(f),
        FileFormat::Csv => read_csv(f),
    }
}
