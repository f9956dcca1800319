//! Image file formats.
//!
//! * PGM, plain (`P2`) and raw (`P5`), per Netpbm. Raw samples are one byte
//!   when maxval < 256 and two big-endian bytes otherwise. Counts are written
//!   with maxval 255 when they fit and 65535 otherwise; intensities are rounded
//!   to the nearest integer and clamped to 65535 (lossy).
//! * CSV-2D: one image row per line, comma-separated decimal values. Values are
//!   written in Rust's shortest round-trip notation, so reals survive exactly.
//! * RAW3D: the 8-byte magic `NLPCA3D\0`, three little-endian `u32` dims
//!   (height, width, bands), one dtype byte (0 = u16, 1 = f64), then the
//!   samples little-endian in row-major order over (height, width, bands).
//!   A 2D image is written with one band and reads back as `[h, w, 1]`.

use std::path::Path;

use crate::error::{NlpcaError, Result};
use crate::imaging::image::check_shape;
use crate::imaging::{CountImage, Image, IntensityImage};

pub const RAW3D_MAGIC: &[u8; 8] = b"NLPCA3D\0";
const RAW3D_HEADER_LEN: usize = 8 + 12 + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    PgmAscii,
    PgmBinary,
    Csv,
    Raw3d,
}

impl ImageFormat {
    /// Guesses the format from a file extension (`.pgm` means raw PGM).
    pub fn from_path(path: &Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "pgm" | "pnm" => Some(ImageFormat::PgmBinary),
            "csv" => Some(ImageFormat::Csv),
            "raw3d" | "raw" => Some(ImageFormat::Raw3d),
            _ => None,
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "pgm-ascii" | "p2" => Some(ImageFormat::PgmAscii),
            "pgm" | "pgm-binary" | "p5" => Some(ImageFormat::PgmBinary),
            "csv" => Some(ImageFormat::Csv),
            "raw3d" => Some(ImageFormat::Raw3d),
            _ => None,
        }
    }
}

/// Either kind of image a file may hold.
#[derive(Debug, Clone, PartialEq)]
pub enum Raster {
    Intensity(IntensityImage),
    Counts(CountImage),
}

impl Raster {
    pub fn shape(&self) -> &[usize] {
        match self {
            Raster::Intensity(img) => img.shape(),
            Raster::Counts(img) => img.shape(),
        }
    }

    pub fn to_intensity(&self) -> IntensityImage {
        match self {
            Raster::Intensity(img) => img.clone(),
            Raster::Counts(img) => img.to_intensity(),
        }
    }

    /// Counts as stored, or intensities that are all integers.
    pub fn to_counts(&self) -> Result<CountImage> {
        match self {
            Raster::Intensity(img) => img.to_counts(),
            Raster::Counts(img) => Ok(img.clone()),
        }
    }
}

impl From<IntensityImage> for Raster {
    fn from(img: IntensityImage) -> Self {
        Raster::Intensity(img)
    }
}

impl From<CountImage> for Raster {
    fn from(img: CountImage) -> Self {
        Raster::Counts(img)
    }
}

pub fn read_image(path: &Path, format: ImageFormat) -> Result<Raster> {
    let bytes = std::fs::read(path).map_err(|source| NlpcaError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode(&bytes, format)
}

pub fn write_image(image: &Raster, path: &Path, format: ImageFormat) -> Result<()> {
    let bytes = encode(image, format)?;
    std::fs::write(path, bytes).map_err(|source| NlpcaError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn decode(bytes: &[u8], format: ImageFormat) -> Result<Raster> {
    match format {
        ImageFormat::PgmAscii | ImageFormat::PgmBinary => decode_pgm(bytes).map(Raster::Counts),
        ImageFormat::Csv => decode_csv(bytes).map(Raster::Intensity),
        ImageFormat::Raw3d => decode_raw3d(bytes),
    }
}

pub fn encode(image: &Raster, format: ImageFormat) -> Result<Vec<u8>> {
    match format {
        ImageFormat::PgmAscii => encode_pgm(&pgm_samples(image)?, image.shape(), false),
        ImageFormat::PgmBinary => encode_pgm(&pgm_samples(image)?, image.shape(), true),
        ImageFormat::Csv => encode_csv(image),
        ImageFormat::Raw3d => encode_raw3d(image),
    }
}

fn parse_err(offset: usize, message: impl Into<String>) -> NlpcaError {
    NlpcaError::Parse {
        offset,
        message: message.into(),
    }
}

// ---------------------------------------------------------------------------
// PGM

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    /// Skips whitespace and `#` comments.
    fn skip_blank(&mut self, allow_comments: bool) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if allow_comments && b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' && self.bytes[self.pos] != b'\r' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str, allow_comments: bool) -> Result<u64> {
        self.skip_blank(allow_comments);
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(parse_err(start, format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse::<u64>().ok())
            .ok_or_else(|| parse_err(start, format!("{what} out of range")))
    }
}

fn decode_pgm(bytes: &[u8]) -> Result<CountImage> {
    if bytes.len() < 2 || bytes[0] != b'P' || !(bytes[1] == b'2' || bytes[1] == b'5') {
        return Err(parse_err(0, "missing P2/P5 magic"));
    }
    let raw = bytes[1] == b'5';
    let mut cur = Cursor { bytes, pos: 2 };
    let width = cur.number("width", true)?;
    let height = cur.number("height", true)?;
    cur.skip_blank(true);
    let maxval_at = cur.pos;
    let maxval = cur.number("maxval", true)?;
    if maxval == 0 || maxval > 65535 {
        return Err(parse_err(maxval_at, format!("maxval {maxval} outside 1..=65535")));
    }
    let shape = vec![
        usize::try_from(height).map_err(|_| parse_err(0, "height overflow"))?,
        usize::try_from(width).map_err(|_| parse_err(0, "width overflow"))?,
    ];
    let n = check_shape(&shape).map_err(|e| parse_err(2, e.to_string()))?;

    let mut data = Vec::with_capacity(n.min(1 << 24));
    if raw {
        // Exactly one whitespace byte separates maxval from the raster.
        if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
            return Err(parse_err(cur.pos, "expected whitespace before raster"));
        }
        cur.pos += 1;
        let width_bytes = if maxval < 256 { 1 } else { 2 };
        let need = n
            .checked_mul(width_bytes)
            .ok_or_else(|| parse_err(cur.pos, "raster size overflow"))?;
        let avail = bytes.len() - cur.pos;
        if avail < need {
            return Err(parse_err(bytes.len(), format!("raster truncated: need {need} bytes, found {avail}")));
        }
        for i in 0..n {
            let at = cur.pos + i * width_bytes;
            let v = if width_bytes == 1 {
                bytes[at] as u64
            } else {
                u16::from_be_bytes([bytes[at], bytes[at + 1]]) as u64
            };
            if v > maxval {
                return Err(parse_err(at, format!("sample {v} exceeds maxval {maxval}")));
            }
            data.push(v as u32);
        }
    } else {
        for _ in 0..n {
            cur.skip_blank(false);
            let at = cur.pos;
            let v = cur.number("sample", false)?;
            if v > maxval {
                return Err(parse_err(at, format!("sample {v} exceeds maxval {maxval}")));
            }
            data.push(v as u32);
        }
    }
    Image::new(shape, data)
}

fn pgm_samples(image: &Raster) -> Result<Vec<u32>> {
    if image.shape().len() != 2 {
        return Err(NlpcaError::shape("PGM holds 2D images only"));
    }
    Ok(match image {
        Raster::Counts(img) => img.data().to_vec(),
        Raster::Intensity(img) => img.data().iter().map(|v| v.round().min(65535.0) as u32).collect(),
    })
}

fn encode_pgm(samples: &[u32], shape: &[usize], raw: bool) -> Result<Vec<u8>> {
    let (height, width) = (shape[0], shape[1]);
    let max = samples.iter().copied().max().unwrap_or(0);
    if max > 65535 {
        return Err(NlpcaError::invalid(format!("sample {max} does not fit 16-bit PGM")));
    }
    let maxval: u32 = if max <= 255 { 255 } else { 65535 };
    let mut out = format!("{}\n{} {}\n{}\n", if raw { "P5" } else { "P2" }, width, height, maxval).into_bytes();
    if raw {
        for &v in samples {
            if maxval == 255 {
                out.push(v as u8);
            } else {
                out.extend_from_slice(&(v as u16).to_be_bytes());
            }
        }
    } else {
        for row in samples.chunks(width) {
            let line: Vec<String> = row.iter().map(u32::to_string).collect();
            out.extend_from_slice(line.join(" ").as_bytes());
            out.push(b'\n');
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// CSV

fn decode_csv(bytes: &[u8]) -> Result<IntensityImage> {
    let text = std::str::from_utf8(bytes).map_err(|e| parse_err(e.valid_up_to(), "CSV is not UTF-8"))?;
    let mut data = Vec::new();
    let mut width = None;
    let mut height = 0;
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let content = line.trim_end_matches(['\n', '\r']);
        if !content.trim().is_empty() {
            let mut field_at = offset;
            let mut count = 0;
            for field in content.split(',') {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| parse_err(field_at, format!("not a number: {:?}", field.trim())))?;
                data.push(v);
                count += 1;
                field_at += field.len() + 1;
            }
            match width {
                None => width = Some(count),
                Some(w) if w != count => {
                    return Err(parse_err(offset, format!("row {height} has {count} fields, expected {w}")));
                }
                _ => {}
            }
            height += 1;
        }
        offset += line.len();
    }
    let width = width.ok_or_else(|| parse_err(0, "empty CSV"))?;
    Image::new(vec![height, width], data)
}

fn encode_csv(image: &Raster) -> Result<Vec<u8>> {
    let shape = image.shape();
    if shape.len() != 2 {
        return Err(NlpcaError::shape("CSV holds 2D images only"));
    }
    let width = shape[1];
    let cells: Vec<String> = match image {
        Raster::Counts(img) => img.data().iter().map(u32::to_string).collect(),
        Raster::Intensity(img) => img.data().iter().map(f64::to_string).collect(),
    };
    let mut out = String::new();
    for row in cells.chunks(width) {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    Ok(out.into_bytes())
}

// ---------------------------------------------------------------------------
// RAW3D

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Raw3dType {
    U16,
    F64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raw3dHeader {
    pub shape: [usize; 3],
    pub dtype: Raw3dType,
}

impl Raw3dHeader {
    /// Number of payload bytes announced by the header.
    pub fn payload_len(&self) -> Result<usize> {
        let n = check_shape(&self.shape).map_err(|e| parse_err(8, e.to_string()))?;
        let size = match self.dtype {
            Raw3dType::U16 => 2,
            Raw3dType::F64 => 8,
        };
        n.checked_mul(size).ok_or_else(|| parse_err(8, "dimension overflow"))
    }
}

/// Parses only the RAW3D header.
pub fn read_raw3d_header(bytes: &[u8]) -> Result<Raw3dHeader> {
    if bytes.len() < RAW3D_HEADER_LEN {
        return Err(parse_err(bytes.len(), "truncated RAW3D header"));
    }
    if &bytes[..8] != RAW3D_MAGIC {
        return Err(parse_err(0, "bad RAW3D magic"));
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap()) as usize;
    let dtype = match bytes[20] {
        0 => Raw3dType::U16,
        1 => Raw3dType::F64,
        t => return Err(parse_err(20, format!("unknown dtype tag {t}"))),
    };
    Ok(Raw3dHeader {
        shape: [dim(0), dim(1), dim(2)],
        dtype,
    })
}

fn decode_raw3d(bytes: &[u8]) -> Result<Raster> {
    let header = read_raw3d_header(bytes)?;
    let need = header.payload_len()?;
    let payload = &bytes[RAW3D_HEADER_LEN..];
    if payload.len() != need {
        return Err(parse_err(
            RAW3D_HEADER_LEN + payload.len().min(need),
            format!("payload is {} bytes, header announces {need}", payload.len()),
        ));
    }
    let shape = header.shape.to_vec();
    match header.dtype {
        Raw3dType::U16 => {
            let data = payload
                .chunks_exact(2)
                .map(|c| u16::from_le_bytes([c[0], c[1]]) as u32)
                .collect();
            Ok(Raster::Counts(Image::new(shape, data)?))
        }
        Raw3dType::F64 => {
            let data = payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            Image::new(shape, data)
                .map(Raster::Intensity)
                .map_err(|e| parse_err(RAW3D_HEADER_LEN, e.to_string()))
        }
    }
}

fn encode_raw3d(image: &Raster) -> Result<Vec<u8>> {
    let shape = image.shape();
    let dims = [shape[0], shape[1], shape.get(2).copied().unwrap_or(1)];
    let mut out = Vec::with_capacity(RAW3D_HEADER_LEN);
    out.extend_from_slice(RAW3D_MAGIC);
    for d in dims {
        let d = u32::try_from(d).map_err(|_| NlpcaError::shape(format!("dimension {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    match image {
        Raster::Counts(img) => {
            out.push(0);
            for &v in img.data() {
                let v = u16::try_from(v)
                    .map_err(|_| NlpcaError::invalid(format!("count {v} does not fit RAW3D u16")))?;
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Raster::Intensity(img) => {
            out.push(1);
            for &v in img.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(out)
}
