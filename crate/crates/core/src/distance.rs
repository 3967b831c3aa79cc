//! Distance functions over serialized inputs and outputs, and the program
//! derivative built from them.
//!
//! Inputs and outputs are turned into [`ByteBlob`]s before any
//! compression-based distance is taken:
//!
//! * an [`InputPoint`] renders each coordinate in decimal, joined by `0x1F`;
//! * a [`SutOutput`] is a status byte (`O` or `E`), `0x1F`, then the text.
//!
//! NCD values depend on the codec, so the codec and its level are part of the
//! distance identifier (`ncd-bzip2-9`) and travel with every exported result.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sut::{InputPoint, Status, SutOutput};

/// Separator between serialized fields.
pub const FIELD_SEP: u8 = 0x1F;

#[derive(Debug, Error)]
pub enum DistanceError {
    #[error("compressor failure: {0}")]
    Compression(#[from] std::io::Error),
    #[error("derivative undefined at zero input distance")]
    ZeroInputDistance,
    #[error("absolute-numeric distance needs integer operands, got {0:?}")]
    NotNumeric(String),
    #[error("unknown distance function {0:?}")]
    UnknownDistance(String),
    #[error("unknown codec {0:?}")]
    UnknownCodec(String),
}

/// A finite byte sequence handed to a distance function.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct ByteBlob(Vec<u8>);

impl ByteBlob {
    pub fn new(bytes: impl Into<Vec<u8>>) -> Self {
        ByteBlob(bytes.into())
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn concat(&self, other: &ByteBlob) -> ByteBlob {
        let mut v = Vec::with_capacity(self.len() + other.len());
        v.extend_from_slice(&self.0);
        v.extend_from_slice(&other.0);
        ByteBlob(v)
    }
}

impl From<&[u8]> for ByteBlob {
    fn from(b: &[u8]) -> Self {
        ByteBlob(b.to_vec())
    }
}

impl From<&str> for ByteBlob {
    fn from(s: &str) -> Self {
        ByteBlob(s.as_bytes().to_vec())
    }
}

impl From<&InputPoint> for ByteBlob {
    fn from(x: &InputPoint) -> Self {
        let mut out = Vec::new();
        for (i, c) in x.coords().iter().enumerate() {
            if i > 0 {
                out.push(FIELD_SEP);
            }
            out.extend_from_slice(c.to_string().as_bytes());
        }
        ByteBlob(out)
    }
}

impl From<&SutOutput> for ByteBlob {
    fn from(o: &SutOutput) -> Self {
        let mut out = Vec::with_capacity(o.text.len() + 2);
        out.push(match o.status {
            Status::Ok => b'O',
            Status::Error => b'E',
        });
        out.push(FIELD_SEP);
        out.extend_from_slice(o.text.as_bytes());
        ByteBlob(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodecKind {
    Bzip2,
    Zlib,
}

/// A general-purpose lossless compressor at a fixed level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Codec {
    pub kind: CodecKind,
    pub level: u32,
}

impl Default for Codec {
    fn default() -> Self {
        Codec::BZIP2_9
    }
}

impl Codec {
    pub const BZIP2_9: Codec = Codec {
        kind: CodecKind::Bzip2,
        level: 9,
    };
    pub const ZLIB_9: Codec = Codec {
        kind: CodecKind::Zlib,
        level: 9,
    };

    pub fn name(&self) -> &'static str {
        match self.kind {
            CodecKind::Bzip2 => "bzip2",
            CodecKind::Zlib => "zlib",
        }
    }

    /// Size in bytes of the complete compressed stream, headers included.
    pub fn compressed_size(&self, blob: &[u8]) -> Result<u64, DistanceError> {
        let out = match self.kind {
            CodecKind::Bzip2 => {
                let mut enc = bzip2::write::BzEncoder::new(
                    Vec::with_capacity(blob.len() / 2 + 64),
                    bzip2::Compression::new(self.level),
                );
                enc.write_all(blob)?;
                enc.finish()?
            }
            CodecKind::Zlib => {
                let mut enc = flate2::write::ZlibEncoder::new(
                    Vec::with_capacity(blob.len() / 2 + 16),
                    flate2::Compression::new(self.level),
                );
                enc.write_all(blob)?;
                enc.finish()?
            }
        };
        if out.is_empty() {
            return Err(DistanceError::Compression(std::io::Error::other(
                "compressor produced an empty stream",
            )));
        }
        Ok(out.len() as u64)
    }
}

impl fmt::Display for Codec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.name(), self.level)
    }
}

impl FromStr for Codec {
    type Err = DistanceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, level) = match s.split_once('-') {
            Some((n, l)) => (n, Some(l)),
            None => (s, None),
        };
        let kind = match name {
            "bzip2" => CodecKind::Bzip2,
            "zlib" => CodecKind::Zlib,
            _ => return Err(DistanceError::UnknownCodec(s.to_string())),
        };
        let level = match level {
            Some(l) => l
                .parse::<u32>()
                .map_err(|_| DistanceError::UnknownCodec(s.to_string()))?,
            None => 9,
        };
        let valid = match kind {
            CodecKind::Bzip2 => (1..=9).contains(&level),
            CodecKind::Zlib => level <= 9,
        };
        if !valid {
            return Err(DistanceError::UnknownCodec(s.to_string()));
        }
        Ok(Codec { kind, level })
    }
}

/// Compressed size of `blob` under the default codec.
pub fn compressed_size(blob: &ByteBlob) -> Result<u64, DistanceError> {
    Codec::default().compressed_size(blob.as_bytes())
}

/// Normalized compression distance under the default codec.
pub fn ncd(a: &ByteBlob, b: &ByteBlob) -> Result<f64, DistanceError> {
    ncd_with(Codec::default(), a.as_bytes(), b.as_bytes())
}

/// `(C(ab) - min(C(a), C(b))) / max(C(a), C(b))`, unclamped.
pub fn ncd_with(codec: Codec, a: &[u8], b: &[u8]) -> Result<f64, DistanceError> {
    let ca = codec.compressed_size(a)?;
    let cb = codec.compressed_size(b)?;
    let mut ab = Vec::with_capacity(a.len() + b.len());
    ab.extend_from_slice(a);
    ab.extend_from_slice(b);
    let cab = codec.compressed_size(&ab)?;
    let max = ca.max(cb);
    if max == 0 {
        return Ok(0.0);
    }
    Ok((cab as f64 - ca.min(cb) as f64) / max as f64)
}

/// `|a - b|`, widened so that no pair of `i64` overflows.
pub fn absolute_numeric_distance(a: i64, b: i64) -> u64 {
    a.abs_diff(b)
}

/// Levenshtein distance over bytes.
pub fn edit_distance(a: &[u8], b: &[u8]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let subst = prev[j] + usize::from(ca != cb);
            cur[j + 1] = subst.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// A named, deterministic distance between two values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DistanceFunction {
    Ncd(Codec),
    AbsoluteNumeric,
    Edit,
}

impl Default for DistanceFunction {
    fn default() -> Self {
        DistanceFunction::Ncd(Codec::default())
    }
}

impl DistanceFunction {
    pub fn codec(&self) -> Option<Codec> {
        match self {
            DistanceFunction::Ncd(c) => Some(*c),
            _ => None,
        }
    }

    pub fn between_blobs(&self, a: &ByteBlob, b: &ByteBlob) -> Result<f64, DistanceError> {
        match self {
            DistanceFunction::Ncd(codec) => ncd_with(*codec, a.as_bytes(), b.as_bytes()),
            DistanceFunction::Edit => Ok(edit_distance(a.as_bytes(), b.as_bytes()) as f64),
            DistanceFunction::AbsoluteNumeric => {
                let x = parse_int(a.as_bytes())?;
                let y = parse_int(b.as_bytes())?;
                Ok(absolute_numeric_distance(x, y) as f64)
            }
        }
    }

    /// Input distance. The numeric metric is the L1 norm of coordinate
    /// differences; the others work on the serialized points.
    pub fn between_inputs(&self, x1: &InputPoint, x2: &InputPoint) -> Result<f64, DistanceError> {
        match self {
            DistanceFunction::AbsoluteNumeric => {
                let sum: u128 = x1
                    .coords()
                    .iter()
                    .zip(x2.coords())
                    .map(|(&a, &b)| u128::from(absolute_numeric_distance(a, b)))
                    .sum();
                Ok(sum as f64)
            }
            _ => self.between_blobs(&x1.into(), &x2.into()),
        }
    }

    pub fn between_outputs(&self, o1: &SutOutput, o2: &SutOutput) -> Result<f64, DistanceError> {
        match self {
            DistanceFunction::AbsoluteNumeric => {
                self.between_blobs(&o1.text.as_str().into(), &o2.text.as_str().into())
            }
            _ => self.between_blobs(&o1.into(), &o2.into()),
        }
    }
}

fn parse_int(b: &[u8]) -> Result<i64, DistanceError> {
    let s = String::from_utf8_lossy(b);
    s.trim()
        .parse::<i64>()
        .map_err(|_| DistanceError::NotNumeric(s.into_owned()))
}

impl fmt::Display for DistanceFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DistanceFunction::Ncd(c) => write!(f, "ncd-{c}"),
            DistanceFunction::AbsoluteNumeric => f.write_str("abs"),
            DistanceFunction::Edit => f.write_str("edit"),
        }
    }
}

impl FromStr for DistanceFunction {
    type Err = DistanceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ncd" => Ok(DistanceFunction::default()),
            "abs" | "absolute-numeric" => Ok(DistanceFunction::AbsoluteNumeric),
            "edit" => Ok(DistanceFunction::Edit),
            _ => match s.strip_prefix("ncd-") {
                Some(codec) => Ok(DistanceFunction::Ncd(codec.parse()?)),
                None => Err(DistanceError::UnknownDistance(s.to_string())),
            },
        }
    }
}

impl Serialize for DistanceFunction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DistanceFunction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One evaluation of the program derivative.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DerivativeSample {
    pub x1: InputPoint,
    pub x2: InputPoint,
    pub o1: SutOutput,
    pub o2: SutOutput,
    pub d_in: f64,
    pub d_out: f64,
    pub derivative: f64,
}

impl DerivativeSample {
    pub fn from_distances(
        (x1, x2): (InputPoint, InputPoint),
        (o1, o2): (SutOutput, SutOutput),
        d_in: f64,
        d_out: f64,
    ) -> Result<Self, DistanceError> {
        if d_in <= 0.0 {
            return Err(DistanceError::ZeroInputDistance);
        }
        Ok(DerivativeSample {
            x1,
            x2,
            o1,
            o2,
            d_in,
            d_out,
            derivative: d_out / d_in,
        })
    }
}

/// `d_out(o1, o2) / d_in(x1, x2)`.
pub fn program_derivative(
    x1: &InputPoint,
    x2: &InputPoint,
    o1: &SutOutput,
    o2: &SutOutput,
    d_in: DistanceFunction,
    d_out: DistanceFunction,
) -> Result<DerivativeSample, DistanceError> {
    let din = d_in.between_inputs(x1, x2)?;
    if din == 0.0 {
        return Err(DistanceError::ZeroInputDistance);
    }
    let dout = d_out.between_outputs(o1, o2)?;
    DerivativeSample::from_distances(
        (x1.clone(), x2.clone()),
        (o1.clone(), o2.clone()),
        din,
        dout,
    )
}
