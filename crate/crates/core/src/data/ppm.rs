//! Binary PPM (`P6`, maxval 255).

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Decode a `P6` image into an `[h, w, 3]` tensor of raw 0-255 values.
///
/// The header is `P6`, width, height and maxval separated by whitespace
/// (with `#` comments allowed between tokens), then exactly one whitespace
/// byte before the pixel data.
pub fn decode_ppm(bytes: &[u8]) -> Result<Tensor> {
    let mut pos = 0;
    let magic = next_token(bytes, &mut pos)?;
    if magic != b"P6" {
        return Err(Error::format(format!(
            "unsupported magic {:?}; only binary P6 is accepted",
            String::from_utf8_lossy(magic)
        )));
    }
    let width = parse_number(next_token(bytes, &mut pos)?, "width")?;
    let height = parse_number(next_token(bytes, &mut pos)?, "height")?;
    let maxval = parse_number(next_token(bytes, &mut pos)?, "maxval")?;
    if maxval != 255 {
        return Err(Error::format(format!("maxval {maxval} is not supported (need 255)")));
    }
    if width == 0 || height == 0 {
        return Err(Error::format("image has a zero extent"));
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::format("header must end with a single whitespace byte")),
    }
    let len = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(3))
        .ok_or_else(|| Error::format("image extents overflow"))?;
    let payload = bytes
        .get(pos..pos + len)
        .ok_or_else(|| Error::format(format!("truncated payload: need {len} bytes, have {}", bytes.len() - pos)))?;
    Tensor::from_vec(&[height, width, 3], payload.iter().map(|&b| b as f32).collect())
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if bytes.get(*pos) == Some(&b'#') {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::format("truncated header"));
    }
    Ok(&bytes[start..*pos])
}

fn parse_number(token: &[u8], what: &str) -> Result<usize> {
    std::str::from_utf8(token)
        .ok()
        .filter(|s| s.bytes().all(|b| b.is_ascii_digit()))
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::format(format!("invalid {what} {:?}", String::from_utf8_lossy(token))))
}

/// Encode an `[h, w, 3]` tensor of 0-255 values (rounded and clamped) as P6.
pub fn encode_ppm(image: &Tensor) -> Result<Vec<u8>> {
    let &[h, w, 3] = image.dims() else {
        return Err(Error::shape(format!("PPM needs an [h, w, 3] image, got {}", image.shape())));
    };
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.extend(image.data().iter().map(|&v| v.round().clamp(0.0, 255.0) as u8));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_white_pixel() {
        let t = decode_ppm(b"P6 1 1 255 \xff\xff\xff").unwrap();
        assert_eq!(t.dims(), &[1, 1, 3]);
        assert_eq!(t.data(), &[255.0, 255.0, 255.0]);
    }

    #[test]
    fn two_pixels_row_major() {
        let t = decode_ppm(b"P6\n2 1\n255\n\x00\x00\x00\xff\x00\x00").unwrap();
        assert_eq!(t.dims(), &[1, 2, 3]);
        assert_eq!(t.data(), &[0.0, 0.0, 0.0, 255.0, 0.0, 0.0]);
    }

    #[test]
    fn comments_are_skipped() {
        let t = decode_ppm(b"P6\n# made by hand\n1 1\n255\n\x01\x02\x03").unwrap();
        assert_eq!(t.data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn rejects_bad_inputs() {
        for bad in [
            &b"P3 1 1 255 255 255 255"[..],
            b"P6 1 1 255 \xff\xff",
            b"P6 1 1 65535 \xff\xff\xff\xff\xff\xff",
            b"P6 1 1",
            b"P6 -1 1 255 \x00\x00\x00",
            b"P6 0 1 255 ",
        ] {
            assert!(matches!(decode_ppm(bad), Err(Error::Format(_))), "{bad:?}");
        }
    }

    #[test]
    fn encode_then_decode() {
        let t = Tensor::from_vec(&[2, 1, 3], vec![0.0, 10.0, 20.0, 255.0, 128.0, 7.0]).unwrap();
        assert_eq!(decode_ppm(&encode_ppm(&t).unwrap()).unwrap(), t);
    }
}
