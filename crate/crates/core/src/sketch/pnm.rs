//! PFM (depth, normals) and binary PGM (silhouette) codecs.
//!
//! Writers always emit the canonical form: `Pf`/`PF`, `W H`, scale `-1.0`
//! (little-endian), each header field on its own line. PFM scanlines run
//! bottom to top, so the first stored row is `y = 0`. PGM rows run top to
//! bottom, so its first stored row is `y = height - 1`; both files then show
//! the same picture in an image viewer.

use super::{DepthMap, NormalMap, SilhouetteMask};
use crate::error::{Error, Result};

struct Header {
    magic: [u8; 2],
    fields: [String; 3],
    offsets: [usize; 3],
    data_offset: usize,
}

/// Reads a netpbm-style header: two magic bytes, three whitespace-separated
/// fields (`#` comments allowed between them) and a single whitespace byte.
fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < 2 {
        return Err(Error::format(0, "truncated header"));
    }
    let magic = [bytes[0], bytes[1]];
    let mut pos = 2;
    let mut fields: [String; 3] = Default::default();
    let mut offsets = [0usize; 3];
    for (field, offset) in fields.iter_mut().zip(offsets.iter_mut()) {
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(Error::format(pos, "truncated header")),
            }
        }
        let start = pos;
        *offset = start;
        while bytes.get(pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .map_err(|_| Error::format(start, "non-ASCII header field"))?
            .to_owned();
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::format(pos, "missing whitespace after header")),
    }
    Ok(Header {
        magic,
        fields,
        offsets,
        data_offset: pos,
    })
}

fn parse_size(header: &Header) -> Result<(usize, usize)> {
    let mut dims = [0usize; 2];
    for (i, d) in dims.iter_mut().enumerate() {
        let field = &header.fields[i];
        let offset = header.offsets[i];
        *d = field
            .parse()
            .map_err(|_| Error::format(offset, format!("invalid dimension '{field}'")))?;
        if *d == 0 {
            return Err(Error::format(offset, "zero image dimension"));
        }
    }
    Ok((dims[0], dims[1]))
}

/// Returns the samples in image order (row `y = 0` first) and the size.
fn read_pfm(bytes: &[u8], channels: usize) -> Result<(usize, usize, Vec<f32>)> {
    let header = parse_header(bytes)?;
    let expected_magic: &[u8; 2] = if channels == 1 { b"Pf" } else { b"PF" };
    if &header.magic != expected_magic {
        return Err(Error::format(
            0,
            format!(
                "expected PFM magic '{}'",
                std::str::from_utf8(expected_magic).unwrap()
            ),
        ));
    }
    let (w, h) = parse_size(&header)?;
    let scale_field = &header.fields[2];
    let scale: f32 = scale_field.parse().map_err(|_| {
        Error::format(
            header.offsets[2],
            format!("invalid scale '{scale_field}'"),
        )
    })?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::format(header.offsets[2], "scale must be nonzero"));
    }
    let little_endian = scale < 0.0;

    let count = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::format(2, "image dimensions overflow"))?;
    let data = &bytes[header.data_offset..];
    if data.len() != count * 4 {
        return Err(Error::format(
            header.data_offset + data.len().min(count * 4),
            format!("expected {} payload bytes, found {}", count * 4, data.len()),
        ));
    }
    let mut samples = Vec::with_capacity(count);
    for (i, chunk) in data.chunks_exact(4).enumerate() {
        let raw: [u8; 4] = chunk.try_into().unwrap();
        let v = if little_endian {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        if v.is_nan() {
            return Err(Error::format(header.data_offset + 4 * i, "NaN sample"));
        }
        samples.push(v);
    }
    Ok((w, h, samples))
}

fn write_pfm(magic: &str, w: usize, h: usize, samples: impl Iterator<Item = f32>) -> Vec<u8> {
    let mut out = format!("{magic}\n{w} {h}\n-1.0\n").into_bytes();
    for v in samples {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn depth_to_pfm_bytes(map: &DepthMap) -> Vec<u8> {
    write_pfm("Pf", map.width, map.height, map.values.iter().copied())
}

pub fn depth_from_pfm_bytes(bytes: &[u8]) -> Result<DepthMap> {
    let (w, h, values) = read_pfm(bytes, 1)?;
    DepthMap::from_values(w, h, values)
}

/// Undefined normals are stored as `(0, 0, 0)`.
pub fn normal_to_pfm_bytes(map: &NormalMap) -> Vec<u8> {
    write_pfm(
        "PF",
        map.width,
        map.height,
        map.values.iter().flat_map(|n| n.unwrap_or([0.0; 3])),
    )
}

pub fn normal_from_pfm_bytes(bytes: &[u8]) -> Result<NormalMap> {
    let (w, h, samples) = read_pfm(bytes, 3)?;
    let values = samples
        .chunks_exact(3)
        .map(|c| {
            let n = [c[0], c[1], c[2]];
            (n != [0.0; 3]).then_some(n)
        })
        .collect();
    NormalMap::from_values(w, h, values)
}

pub fn silhouette_to_pgm_bytes(mask: &SilhouetteMask) -> Vec<u8> {
    let (w, h) = (mask.width, mask.height);
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    for y in (0..h).rev() {
        out.extend((0..w).map(|x| if mask.get(x, y) { 255u8 } else { 0 }));
    }
    out
}

/// Samples `>= 128` (of maxval 255) read as foreground; other maxvals are
/// thresholded at half range.
pub fn silhouette_from_pgm_bytes(bytes: &[u8]) -> Result<SilhouetteMask> {
    let header = parse_header(bytes)?;
    if &header.magic != b"P5" {
        return Err(Error::format(0, "expected binary PGM magic 'P5'"));
    }
    let (w, h) = parse_size(&header)?;
    let maxval_field = &header.fields[2];
    let maxval: u32 = maxval_field.parse().map_err(|_| {
        Error::format(
            header.offsets[2],
            format!("invalid maxval '{maxval_field}'"),
        )
    })?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::format(header.offsets[2], "maxval out of range"));
    }
    let sample_bytes = if maxval < 256 { 1 } else { 2 };
    let data = &bytes[header.data_offset..];
    let needed = w * h * sample_bytes;
    if data.len() != needed {
        return Err(Error::format(
            header.data_offset + data.len().min(needed),
            format!("expected {needed} payload bytes, found {}", data.len()),
        ));
    }
    let cut = maxval.div_ceil(2);
    let mut mask = SilhouetteMask::new(w, h, false)?;
    for (i, sample) in data.chunks_exact(sample_bytes).enumerate() {
        let v = match sample {
            [b] => u32::from(*b),
            [hi, lo] => u32::from(*hi) << 8 | u32::from(*lo),
            _ => unreachable!(),
        };
        let (row, x) = (i / w, i % w);
        mask.set(x, h - 1 - row, v >= cut);
    }
    Ok(mask)
}
