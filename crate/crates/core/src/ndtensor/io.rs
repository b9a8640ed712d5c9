//! NDT1 binary tensor records and the header-plus-records archive built on them.
//!
//! Record layout: `b"NDT1"`, `u8` dtype code, `u8` rank, `rank` little-endian
//! `u32` extents, then the raw little-endian elements.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{DType, Real, Tensor};
use crate::{Error, Result};

pub const NDT_MAGIC: &[u8; 4] = b"NDT1";

pub fn write_ndt_to<F: Real, W: Write>(out: &mut W, t: &Tensor<F>) -> Result<()> {
    let mut buf = Vec::with_capacity(6 + 4 * t.rank() + t.len() * F::DTYPE.size());
    buf.extend_from_slice(NDT_MAGIC);
    buf.push(F::DTYPE.code());
    buf.push(u8::try_from(t.rank()).map_err(|_| Error::Format("rank exceeds 255".into()))?);
    for &d in t.shape() {
        let d = u32::try_from(d).map_err(|_| Error::Format("extent exceeds u32".into()))?;
        buf.extend_from_slice(&d.to_le_bytes());
    }
    for &v in t.data() {
        v.write_le(&mut buf);
    }
    out.write_all(&buf)?;
    Ok(())
}

/// Reads one record, converting to `F` if the stored dtype differs.
pub fn read_ndt_from<F: Real, R: Read>(input: &mut R) -> Result<Tensor<F>> {
    let mut head = [0u8; 6];
    input.read_exact(&mut head)?;
    if &head[..4] != NDT_MAGIC {
        return Err(Error::Format("bad NDT1 magic".into()));
    }
    let dtype = DType::from_code(head[4]).ok_or_else(|| Error::Format(format!("unknown dtype code {}", head[4])))?;
    let rank = head[5] as usize;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        let mut d = [0u8; 4];
        input.read_exact(&mut d)?;
        shape.push(u32::from_le_bytes(d) as usize);
    }
    let n: usize = shape.iter().product();
    let mut raw = vec![0u8; n * dtype.size()];
    input.read_exact(&mut raw)?;
    let data: Vec<F> = match dtype {
        DType::F32 => raw
            .chunks_exact(4)
            .map(|c| F::from_f64c(f32::read_le(c) as f64))
            .collect(),
        DType::F64 => raw.chunks_exact(8).map(|c| F::from_f64c(f64::read_le(c))).collect(),
    };
    Tensor::new(&shape, data)
}

pub fn write_ndt<F: Real>(path: impl AsRef<Path>, t: &Tensor<F>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_ndt_to(&mut w, t)?;
    w.flush()?;
    Ok(())
}

pub fn read_ndt<F: Real>(path: impl AsRef<Path>) -> Result<Tensor<F>> {
    read_ndt_from(&mut BufReader::new(File::open(path)?))
}

const ARCHIVE_MAGIC: &str = "NDTA v1";

/// Textual `key=value` header followed by named NDT1 records.
///
/// ```text
/// NDTA v1\n
/// key=value\n ...
/// end\n
/// (u32 name length, name bytes, NDT1 record) ...
/// ```
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Archive<F: Real = f32> {
    pub header: BTreeMap<String, String>,
    pub entries: Vec<(String, Tensor<F>)>,
}

impl<F: Real> Archive<F> {
    pub fn new() -> Self {
        Self {
            header: BTreeMap::new(),
            entries: Vec::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.header.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Result<&str> {
        self.header
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Format(format!("missing header key `{key}`")))
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?
            .parse()
            .map_err(|_| Error::Format(format!("unparsable header value for `{key}`")))
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor<F>) {
        self.entries.push((name.into(), t));
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor<F>> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::Format(format!("missing tensor `{name}`")))
    }

    pub fn write_to<W: Write>(&self, out: &mut W) -> Result<()> {
        let mut head = format!("{ARCHIVE_MAGIC}\n");
        for (k, v) in &self.header {
            if k.contains(['=', '\n']) || v.contains('\n') {
                return Err(Error::Format(format!("header entry `{k}` is not a single line")));
            }
            head.push_str(&format!("{k}={v}\n"));
        }
        head.push_str("end\n");
        out.write_all(head.as_bytes())?;
        for (name, t) in &self.entries {
            out.write_all(&(name.len() as u32).to_le_bytes())?;
            out.write_all(name.as_bytes())?;
            write_ndt_to(out, t)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(input: &mut R) -> Result<Self> {
        let mut archive = Self::new();
        let mut first = true;
        loop {
            let line = read_line(input)?;
            if first {
                if line != ARCHIVE_MAGIC {
                    return Err(Error::Format("bad archive magic".into()));
                }
                first = false;
                continue;
            }
            if line == "end" {
                break;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("malformed header line `{line}`")))?;
            archive.header.insert(k.to_string(), v.to_string());
        }
        loop {
            let mut len = [0u8; 4];
            match input.read_exact(&mut len) {
                Ok(()) => {}
                Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
                Err(e) => return Err(e.into()),
            }
            let mut name = vec![0u8; u32::from_le_bytes(len) as usize];
            input.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|_| Error::Format("tensor name is not utf-8".into()))?;
            archive.entries.push((name, read_ndt_from(input)?));
        }
        Ok(archive)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}

fn read_line<R: Read>(input: &mut R) -> Result<String> {
    let mut bytes = Vec::new();
    let mut b = [0u8; 1];
    loop {
        input.read_exact(&mut b)?;
        if b[0] == b'\n' {
            break;
        }
        bytes.push(b[0]);
        if bytes.len() > 4096 {
            return Err(Error::Format("header line too long".into()));
        }
    }
    String::from_utf8(bytes).map_err(|_| Error::Format("header is not utf-8".into()))
}
