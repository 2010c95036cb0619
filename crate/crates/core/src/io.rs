//! Portable Float Map (single channel) encoding.
//!
//! Header is `Pf\n<w> <h>\n<scale>\n`, a negative scale marks little-endian
//! data, and rows are stored bottom to top.

use crate::error::{Error, Result};

pub fn write_pfm(width: usize, height: usize, data: &[f32]) -> Vec<u8> {
    assert_eq!(data.len(), width * height, "pfm buffer size");
    let mut out = format!("Pf\n{width} {height}\n-1.0\n").into_bytes();
    out.reserve(data.len() * 4);
    for y in (0..height).rev() {
        for v in &data[y * width..(y + 1) * width] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn header_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a str> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Format("truncated PFM header".into()));
    }
    std::str::from_utf8(&bytes[start..*pos]).map_err(|_| Error::Format("PFM header is not ASCII".into()))
}

/// Returns `(width, height, row-major top-to-bottom values)`.
pub fn read_pfm(bytes: &[u8]) -> Result<(usize, usize, Vec<f32>)> {
    let mut pos = 0;
    match header_token(bytes, &mut pos)? {
        "Pf" => {}
        "PF" => return Err(Error::Format("three-channel PFM is not a depth map".into())),
        other => return Err(Error::Format(format!("bad PFM magic {other:?}"))),
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| Error::Format(format!("bad PFM dimension {s:?}")));
    let width = parse(header_token(bytes, &mut pos)?)?;
    let height = parse(header_token(bytes, &mut pos)?)?;
    let scale: f32 = header_token(bytes, &mut pos)?
        .parse()
        .map_err(|_| Error::Format("bad PFM scale".into()))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::Format("PFM scale must be non-zero".into()));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let n = width * height;
    let body = bytes.get(pos..).unwrap_or_default();
    if body.len() != n * 4 {
        return Err(Error::Format(format!("PFM body has {} bytes, expected {}", body.len(), n * 4)));
    }
    let little = scale < 0.0;
    let mut data = vec![0.0f32; n];
    for (i, chunk) in body.chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let (row, col) = (i / width, i % width);
        data[(height - 1 - row) * width + col] = v;
    }
    Ok((width, height, data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let data = vec![0.0, 1.5, -2.25, f32::MIN_POSITIVE, 3.0e7, 0.1];
        let bytes = write_pfm(3, 2, &data);
        let (w, h, back) = read_pfm(&bytes).unwrap();
        assert_eq!((w, h), (3, 2));
        assert_eq!(back.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), data.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn rows_are_stored_bottom_up() {
        let bytes = write_pfm(1, 2, &[1.0, 2.0]);
        let body = &bytes[bytes.len() - 8..];
        assert_eq!(&body[..4], &2.0f32.to_le_bytes());
    }

    #[test]
    fn big_endian_input() {
        let mut bytes = b"Pf\n1 1\n1.0\n".to_vec();
        bytes.extend_from_slice(&4.5f32.to_be_bytes());
        assert_eq!(read_pfm(&bytes).unwrap().2, vec![4.5]);
    }

    #[test]
    fn truncated_body_is_rejected() {
        let mut bytes = write_pfm(2, 2, &[0.0; 4]);
        bytes.pop();
        assert!(matches!(read_pfm(&bytes), Err(Error::Format(_))));
    }
}
