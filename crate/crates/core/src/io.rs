//! Binary containers, portable pixmaps and CSV traces.
//!
//! All binary formats are little-endian and start with a four-byte magic:
//!
//! | magic  | payload                                                        |
//! |--------|----------------------------------------------------------------|
//! | `TNS3` | `u64` I, J, K; `f64` values in row-major `(i, j, k)` order      |
//! | `MSK3` | `u64` I, J, K; `u64` count; `count` one-based `u64` triples     |
//! | `CPM1` | `u64` I, J, K, R; A, B, C column-major; `alpha`                 |
//! | `MAT1` | `u64` rows, cols; `f64` values column-major                     |

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::completion::TraceRow;
use crate::cp::CpModel;
use crate::error::{Error, Result};
use crate::tensor::{Dims, Mask, Tensor3};

pub const TNS3_MAGIC: &[u8; 4] = b"TNS3";
pub const MSK3_MAGIC: &[u8; 4] = b"MSK3";
pub const CPM1_MAGIC: &[u8; 4] = b"CPM1";
pub const MAT1_MAGIC: &[u8; 4] = b"MAT1";

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn fail(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(self.fail(format!(
                "truncated input: need {n} bytes, {} left",
                self.buf.len() - self.pos
            )));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let found = self.take(4)?;
        if found != expected {
            return Err(Error::BadMagic {
                expected: String::from_utf8_lossy(expected).into_owned(),
                found: String::from_utf8_lossy(found).into_owned(),
            });
        }
        Ok(())
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize> {
        let at = self.pos;
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| Error::Parse {
            offset: at,
            message: format!("value {v} does not fit in usize"),
        })
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = n
            .checked_mul(8)
            .ok_or_else(|| self.fail("element count overflows"))?;
        Ok(self
            .take(bytes)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn dims(&mut self) -> Result<Dims> {
        let at = self.pos;
        let d = (self.usize()?, self.usize()?, self.usize()?);
        if d.0 == 0 || d.1 == 0 || d.2 == 0 {
            return Err(Error::Parse {
                offset: at,
                message: format!("dimensions must be positive, got {d:?}"),
            });
        }
        d.0.checked_mul(d.1)
            .and_then(|x| x.checked_mul(d.2))
            .ok_or_else(|| Error::Parse {
                offset: at,
                message: "dimensions overflow".into(),
            })?;
        Ok(d)
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(self.fail(format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

fn put_u64(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u64).to_le_bytes());
}

fn put_f64s<'a>(out: &mut Vec<u8>, vals: impl IntoIterator<Item = &'a f64>) {
    for v in vals {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn put_dims(out: &mut Vec<u8>, d: Dims) {
    put_u64(out, d.0);
    put_u64(out, d.1);
    put_u64(out, d.2);
}

pub fn encode_tensor(t: &Tensor3) -> Vec<u8> {
    let mut out = Vec::with_capacity(28 + 8 * t.len());
    out.extend_from_slice(TNS3_MAGIC);
    put_dims(&mut out, t.dims());
    put_f64s(&mut out, t.values());
    out
}

pub fn decode_tensor(buf: &[u8]) -> Result<Tensor3> {
    let mut r = Reader::new(buf);
    r.magic(TNS3_MAGIC)?;
    let d = r.dims()?;
    let values = r.f64s(d.0 * d.1 * d.2)?;
    r.finish()?;
    Tensor3::new(d, values)
}

pub fn encode_mask(m: &Mask) -> Vec<u8> {
    let mut out = Vec::with_capacity(36 + 24 * m.len());
    out.extend_from_slice(MSK3_MAGIC);
    put_dims(&mut out, m.dims());
    put_u64(&mut out, m.len());
    for &(i, j, k) in m.triples() {
        put_u64(&mut out, i + 1);
        put_u64(&mut out, j + 1);
        put_u64(&mut out, k + 1);
    }
    out
}

pub fn decode_mask(buf: &[u8]) -> Result<Mask> {
    let mut r = Reader::new(buf);
    r.magic(MSK3_MAGIC)?;
    let d = r.dims()?;
    let at = r.pos;
    let count = r.usize()?;
    if count > d.0 * d.1 * d.2 {
        return Err(Error::Parse {
            offset: at,
            message: format!("count {count} exceeds the number of entries"),
        });
    }
    let mut triples = Vec::with_capacity(count);
    for _ in 0..count {
        let at = r.pos;
        let (i, j, k) = (r.usize()?, r.usize()?, r.usize()?);
        if i == 0 || j == 0 || k == 0 || i > d.0 || j > d.1 || k > d.2 {
            return Err(Error::Parse {
                offset: at,
                message: format!("index ({i}, {j}, {k}) outside 1..={d:?}"),
            });
        }
        triples.push((i - 1, j - 1, k - 1));
    }
    r.finish()?;
    Mask::from_triples(d, triples)
}

pub fn encode_model(m: &CpModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CPM1_MAGIC);
    put_dims(&mut out, m.dims());
    put_u64(&mut out, m.rank());
    put_f64s(&mut out, m.a.as_slice());
    put_f64s(&mut out, m.b.as_slice());
    put_f64s(&mut out, m.c.as_slice());
    put_f64s(&mut out, m.alpha.as_slice());
    out
}

pub fn decode_model(buf: &[u8]) -> Result<CpModel> {
    let mut r = Reader::new(buf);
    r.magic(CPM1_MAGIC)?;
    let (i, j, k) = r.dims()?;
    let rank = r.usize()?;
    let a = DMatrix::from_vec(i, rank, r.f64s(i.saturating_mul(rank))?);
    let b = DMatrix::from_vec(j, rank, r.f64s(j.saturating_mul(rank))?);
    let c = DMatrix::from_vec(k, rank, r.f64s(k.saturating_mul(rank))?);
    let alpha = DVector::from_vec(r.f64s(rank)?);
    r.finish()?;
    CpModel::new(a, b, c, alpha)
}

pub fn encode_matrix(m: &DMatrix<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + 8 * m.len());
    out.extend_from_slice(MAT1_MAGIC);
    put_u64(&mut out, m.nrows());
    put_u64(&mut out, m.ncols());
    put_f64s(&mut out, m.as_slice());
    out
}

pub fn decode_matrix(buf: &[u8]) -> Result<DMatrix<f64>> {
    let mut r = Reader::new(buf);
    r.magic(MAT1_MAGIC)?;
    let at = r.pos;
    let (rows, cols) = (r.usize()?, r.usize()?);
    let n = rows.checked_mul(cols).ok_or_else(|| Error::Parse {
        offset: at,
        message: "shape overflows".into(),
    })?;
    let values = r.f64s(n)?;
    r.finish()?;
    Ok(DMatrix::from_vec(rows, cols, values))
}

pub fn save_tensor(t: &Tensor3, path: impl AsRef<Path>) -> Result<()> {
    Ok(fs::write(path, encode_tensor(t))?)
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<Tensor3> {
    decode_tensor(&fs::read(path)?)
}

pub fn save_mask(m: &Mask, path: impl AsRef<Path>) -> Result<()> {
    Ok(fs::write(path, encode_mask(m))?)
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<Mask> {
    decode_mask(&fs::read(path)?)
}

pub fn save_model(m: &CpModel, path: impl AsRef<Path>) -> Result<()> {
    Ok(fs::write(path, encode_model(m))?)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<CpModel> {
    decode_model(&fs::read(path)?)
}

pub fn save_matrix(m: &DMatrix<f64>, path: impl AsRef<Path>) -> Result<()> {
    Ok(fs::write(path, encode_matrix(m))?)
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    decode_matrix(&fs::read(path)?)
}

// ---------------------------------------------------------------------------
// Portable pixmaps

fn skip_space_and_comments(r: &mut Reader<'_>) {
    while r.pos < r.buf.len() {
        match r.buf[r.pos] {
            b'#' => {
                while r.pos < r.buf.len() && r.buf[r.pos] != b'\n' {
                    r.pos += 1;
                }
            }
            c if c.is_ascii_whitespace() => r.pos += 1,
            _ => break,
        }
    }
}

/// Parses the next decimal token; returns it with its starting offset.
fn ascii_uint(r: &mut Reader<'_>, what: &str) -> Result<(usize, usize)> {
    skip_space_and_comments(r);
    let start = r.pos;
    while r.pos < r.buf.len() && r.buf[r.pos].is_ascii_digit() {
        r.pos += 1;
    }
    if start == r.pos {
        r.pos = start;
        return Err(r.fail(format!("expected {what}")));
    }
    let v = std::str::from_utf8(&r.buf[start..r.pos])
        .unwrap()
        .parse()
        .map_err(|_| Error::Parse {
            offset: start,
            message: format!("{what} out of range"),
        })?;
    Ok((v, start))
}

/// Reads a P3 or P6 pixmap with maxval 255 into an `(height, width, 3)`
/// tensor with samples scaled to `[0, 1]`.
pub fn decode_ppm(buf: &[u8]) -> Result<Tensor3> {
    let mut r = Reader::new(buf);
    let magic = r.take(2)?;
    let binary = match magic {
        b"P6" => true,
        b"P3" => false,
        _ => {
            return Err(Error::Parse {
                offset: 0,
                message: format!("not a P3/P6 pixmap: {:?}", String::from_utf8_lossy(magic)),
            })
        }
    };
    let (width, _) = ascii_uint(&mut r, "width")?;
    let (height, _) = ascii_uint(&mut r, "height")?;
    let (maxval, at) = ascii_uint(&mut r, "maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::Parse {
            offset: at,
            message: "image has zero size".into(),
        });
    }
    if maxval != 255 {
        return Err(Error::Parse {
            offset: at,
            message: format!("unsupported maxval {maxval}"),
        });
    }
    let n = width
        .checked_mul(height)
        .and_then(|x| x.checked_mul(3))
        .ok_or_else(|| r.fail("image too large"))?;
    let mut samples = Vec::with_capacity(n);
    if binary {
        match r.buf.get(r.pos) {
            Some(c) if c.is_ascii_whitespace() => r.pos += 1,
            _ => return Err(r.fail("expected whitespace after maxval")),
        }
        samples.extend(r.take(n)?.iter().map(|&b| b as usize));
    } else {
        for _ in 0..n {
            let (v, at) = ascii_uint(&mut r, "sample")?;
            if v > maxval {
                return Err(Error::Parse {
                    offset: at,
                    message: format!("sample {v} exceeds maxval"),
                });
            }
            samples.push(v);
        }
        skip_space_and_comments(&mut r);
    }
    if binary {
        r.finish()?;
    } else if r.pos != r.buf.len() {
        return Err(r.fail("trailing data after samples"));
    }
    let values = samples.into_iter().map(|v| v as f64 / 255.0).collect();
    Tensor3::new((height, width, 3), values)
}

/// Maps `[0, 1]` to 8-bit samples, rounding half up and clamping.
pub fn to_byte(v: f64) -> u8 {
    let x = (v * 255.0 + 0.5).floor();
    if x.is_nan() {
        0
    } else {
        x.clamp(0.0, 255.0) as u8
    }
}

/// Writes a binary P6 pixmap; `t` must have three channels.
pub fn encode_ppm(t: &Tensor3) -> Result<Vec<u8>> {
    let (h, w, c) = t.dims();
    if c != 3 {
        return Err(Error::dims((h, w, 3), t.dims()));
    }
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.extend(t.values().iter().map(|&v| to_byte(v)));
    Ok(out)
}

pub fn load_ppm(path: impl AsRef<Path>) -> Result<Tensor3> {
    decode_ppm(&fs::read(path)?)
}

pub fn save_ppm(t: &Tensor3, path: impl AsRef<Path>) -> Result<()> {
    Ok(fs::write(path, encode_ppm(t)?)?)
}

// ---------------------------------------------------------------------------
// CSV

/// Completion trace as CSV. Wall time is left blank unless `timing` is set,
/// so that traces from identical runs compare byte for byte.
pub fn write_trace(rows: &[TraceRow], timing: bool, mut out: impl Write) -> Result<()> {
    writeln!(out, "iteration,residual,lambda,wall_ms")?;
    for row in rows {
        if timing {
            writeln!(out, "{},{:e},{:e},{:.3}", row.iteration, row.residual, row.lambda, row.wall_ms)?;
        } else {
            writeln!(out, "{},{:e},{:e},", row.iteration, row.residual, row.lambda)?;
        }
    }
    Ok(())
}

/// Hybrid diagnostics: one line per inner step.
pub fn write_lambda_history(lambdas: &[f64], residuals: &[f64], mut out: impl Write) -> Result<()> {
    writeln!(out, "iteration,lambda,projected_residual")?;
    for (k, (l, r)) in lambdas.iter().zip(residuals).enumerate() {
        writeln!(out, "{},{:e},{:e}", k + 1, l, r)?;
    }
    Ok(())
}
