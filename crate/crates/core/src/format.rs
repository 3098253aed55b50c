//! On-disk formats for binary layers and activation maps.
//!
//! `BWT1` (weights):
//!
//! ```text
//! "BWT1" | u32 c_out | u32 c_in | u32 m | u32 h_in | u32 w_in | u32 pad | f64 alpha
//! c_out records of ceil(c_in*m*m / 8) bytes, bits LSB-first
//! ```
//!
//! `BAC1` (activations):
//!
//! ```text
//! "BAC1" | u32 c_in | u32 h_in | u32 w_in | ceil(c_in*h_in*w_in / 8) bytes, LSB-first
//! ```
//!
//! All integers and the alpha float are little-endian.

use std::io::{self, BufRead, Read, Write};

use crate::bits::BitVec;
use crate::error::{Error, Result};
use crate::layer::{BinaryActivationMap, BinaryLayer, BinaryWeightSet, LayerShape};

pub const WEIGHT_MAGIC: [u8; 4] = *b"BWT1";
pub const ACTIVATION_MAGIC: [u8; 4] = *b"BAC1";

pub fn write_bwt<W: Write>(layer: &BinaryLayer, mut sink: W) -> Result<()> {
    let s = layer.shape();
    sink.write_all(&WEIGHT_MAGIC)?;
    for v in [s.c_out, s.c_in, s.m, s.h_in, s.w_in, s.pad] {
        sink.write_all(&to_u32(v)?.to_le_bytes())?;
    }
    sink.write_all(&layer.alpha().to_le_bytes())?;
    for w in layer.weights() {
        sink.write_all(&w.bits().to_le_bytes())?;
    }
    sink.flush()?;
    Ok(())
}

pub fn read_bwt<R: Read>(mut source: R) -> Result<BinaryLayer> {
    read_magic(&mut source, WEIGHT_MAGIC)?;
    let mut fields = [0usize; 6];
    for f in fields.iter_mut() {
        *f = read_u32(&mut source)? as usize;
    }
    let mut alpha = [0u8; 8];
    read_exact_or(&mut source, &mut alpha, Error::TruncatedHeader)?;
    let alpha = f64::from_le_bytes(alpha);
    let [c_out, c_in, m, h_in, w_in, pad] = fields;
    let shape = LayerShape::new(c_out, c_in, m, h_in, w_in, pad)?;
    let full = shape.full();
    let record = full.div_ceil(8);
    let mut buf = vec![0u8; record];
    let mut weights = Vec::with_capacity(c_out);
    for k in 0..c_out {
        read_exact_or(&mut source, &mut buf, Error::TruncatedAtChannel(k))?;
        check_padding(&buf, full).map_err(|_| Error::NonZeroPadding(k))?;
        weights.push(BinaryWeightSet::new(BitVec::from_le_bytes(&buf, full)));
    }
    BinaryLayer::new(shape, weights, alpha)
}

pub fn write_bac<W: Write>(act: &BinaryActivationMap, mut sink: W) -> Result<()> {
    sink.write_all(&ACTIVATION_MAGIC)?;
    for v in [act.c_in, act.h_in, act.w_in] {
        sink.write_all(&to_u32(v)?.to_le_bytes())?;
    }
    sink.write_all(&act.bits().to_le_bytes())?;
    sink.flush()?;
    Ok(())
}

pub fn read_bac<R: Read>(mut source: R) -> Result<BinaryActivationMap> {
    read_magic(&mut source, ACTIVATION_MAGIC)?;
    let c_in = read_u32(&mut source)? as usize;
    let h_in = read_u32(&mut source)? as usize;
    let w_in = read_u32(&mut source)? as usize;
    let len = (c_in as u64) * (h_in as u64) * (w_in as u64);
    if len > u32::MAX as u64 {
        return Err(Error::ShapeOverflow(format!("activation {c_in}x{h_in}x{w_in}")));
    }
    let len = len as usize;
    let mut buf = vec![0u8; len.div_ceil(8)];
    read_exact_or(&mut source, &mut buf, Error::TruncatedPayload)?;
    check_padding(&buf, len).map_err(|_| Error::NonZeroPadding(0))?;
    BinaryActivationMap::new(c_in, h_in, w_in, BitVec::from_le_bytes(&buf, len))
}

/// Parses the plain-text weight format: a header line `c_out c_in m` followed by one
/// line of `+1`/`-1` tokens per output channel. Blank lines and `#` comments are skipped.
/// `pad = None` means same padding, `(m - 1) / 2`.
pub fn import_text<R: BufRead>(source: R, h_in: usize, w_in: usize, pad: Option<usize>) -> Result<BinaryLayer> {
    let mut lines = source
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| l.as_ref().map_or(true, |s| !s.trim().is_empty() && !s.trim_start().starts_with('#')));

    let (hline, header) = match lines.next() {
        Some((n, l)) => (n, l?),
        None => return Err(Error::Parse { line: 1, msg: "missing header".into() }),
    };
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Parse { line: hline, msg: format!("bad header: {e}") })?;
    let [c_out, c_in, m] = dims[..] else {
        return Err(Error::Parse { line: hline, msg: "header must be `c_out c_in m`".into() });
    };
    let shape = LayerShape::new(c_out, c_in, m, h_in, w_in, pad.unwrap_or(m.saturating_sub(1) / 2))?;

    let mut weights = Vec::with_capacity(c_out);
    for (n, line) in lines {
        let line = line?;
        if weights.len() == c_out {
            return Err(Error::Parse { line: n, msg: format!("more than {c_out} weight lines") });
        }
        let mut bits = BitVec::zeros(0);
        for tok in line.split_whitespace() {
            match tok {
                "+1" | "1" => bits.push(true),
                "-1" | "\u{2212}1" => bits.push(false),
                other => return Err(Error::Parse { line: n, msg: format!("unexpected token {other:?}") }),
            }
        }
        if bits.len() != shape.full() {
            return Err(Error::Parse {
                line: n,
                msg: format!("{} weights, expected {}", bits.len(), shape.full()),
            });
        }
        weights.push(BinaryWeightSet::new(bits));
    }
    if weights.len() != c_out {
        return Err(Error::Parse { line: hline, msg: format!("{} weight lines, expected {c_out}", weights.len()) });
    }
    BinaryLayer::new(shape, weights, 1.0)
}

pub fn export_text<W: Write>(layer: &BinaryLayer, mut sink: W) -> Result<()> {
    let s = layer.shape();
    writeln!(sink, "{} {} {}", s.c_out, s.c_in, s.m)?;
    for w in layer.weights() {
        let toks: Vec<&str> = w.bits().iter().map(|b| if b { "+1" } else { "-1" }).collect();
        writeln!(sink, "{}", toks.join(" "))?;
    }
    Ok(())
}

fn to_u32(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::ShapeOverflow(format!("{v} does not fit in u32")))
}

fn read_magic<R: Read>(source: &mut R, expected: [u8; 4]) -> Result<()> {
    let mut found = [0u8; 4];
    read_exact_or(source, &mut found, Error::TruncatedHeader)?;
    if found != expected {
        return Err(Error::BadMagic { expected, found });
    }
    Ok(())
}

fn read_u32<R: Read>(source: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact_or(source, &mut b, Error::TruncatedHeader)?;
    Ok(u32::from_le_bytes(b))
}

fn read_exact_or<R: Read>(source: &mut R, buf: &mut [u8], on_eof: Error) -> Result<()> {
    match source.read_exact(buf) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => Err(on_eof),
        Err(e) => Err(e.into()),
    }
}

fn check_padding(bytes: &[u8], len: usize) -> std::result::Result<(), ()> {
    let rem = len % 8;
    match bytes.last() {
        Some(&last) if rem != 0 && last >> rem != 0 => Err(()),
        _ => Ok(()),
    }
}
