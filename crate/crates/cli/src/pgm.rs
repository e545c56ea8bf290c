//! Binary PGM (P5, maxval 255) for square grayscale images.
//!
//! Pixels are stored in `[0, 1]` in memory and quantized to 8 bits on save:
//! `byte = round(clamp(p, 0, 1) * 255)`, `p = byte / 255`. Quantization
//! happens once, at image-generation time, so save → load → save round-trips
//! are byte-identical.

use std::io::{Read, Write};
use std::path::Path;

use radgen_core::data::Image;

use crate::{io_at, CliError};

/// 8-bit quantization used for storage.
pub fn quantize(p: f64) -> u8 {
    (p.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Inverse of [`quantize`] up to the 8-bit grid.
pub fn dequantize(byte: u8) -> f64 {
    f64::from(byte) / 255.0
}

/// Snap every pixel of `image` onto the 8-bit storage grid.
pub fn quantize_image(image: &mut Image) {
    for p in &mut image.pixels {
        *p = dequantize(quantize(*p));
    }
}

/// Encode `image` as a binary P5 PGM.
pub fn encode(image: &Image) -> Vec<u8> {
    let side = image.size;
    let mut out = format!("P5\n{side} {side}\n255\n").into_bytes();
    out.extend(image.pixels.iter().map(|&p| quantize(p)));
    out
}

/// Decode a binary P5 PGM; only square images with maxval 255 are accepted.
pub fn decode(bytes: &[u8]) -> Result<Image, String> {
    let mut pos = 0usize;
    let mut field = |what: &str| -> Result<String, String> {
        // Skip whitespace and `#` comment lines between header fields.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(format!("truncated header: missing {what}"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };

    let magic = field("magic number")?;
    if magic != "P5" {
        return Err(format!("not a binary PGM (magic `{magic}`)"));
    }
    let width: usize = field("width")?.parse().map_err(|_| "bad width".to_string())?;
    let height: usize = field("height")?.parse().map_err(|_| "bad height".to_string())?;
    let maxval: usize = field("maxval")?.parse().map_err(|_| "bad maxval".to_string())?;
    if width != height {
        return Err(format!("image must be square, got {width}x{height}"));
    }
    if maxval != 255 {
        return Err(format!("maxval must be 255, got {maxval}"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err("missing raster separator".to_string());
    }
    pos += 1;
    let raster = &bytes[pos..];
    if raster.len() != width * height {
        return Err(format!(
            "raster holds {} bytes, expected {}",
            raster.len(),
            width * height
        ));
    }
    Ok(Image {
        size: width,
        pixels: raster.iter().map(|&b| dequantize(b)).collect(),
    })
}

/// Write `image` to `path` as binary PGM.
pub fn save(path: &Path, image: &Image) -> Result<(), CliError> {
    let mut file = std::fs::File::create(path).map_err(|e| io_at(path, e))?;
    file.write_all(&encode(image)).map_err(|e| io_at(path, e))?;
    Ok(())
}

/// Read a binary PGM from `path`.
pub fn load(path: &Path) -> Result<Image, CliError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| io_at(path, e))?;
    decode(&bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_byte_value_survives_a_round_trip() {
        let pixels: Vec<f64> = (0..=255).map(dequantize).collect();
        let image = Image { size: 16, pixels };
        let decoded = decode(&encode(&image)).unwrap();
        assert_eq!(decoded, image);
        // And the re-encoding is byte-identical.
        assert_eq!(encode(&decoded), encode(&image));
    }

    #[test]
    fn quantization_is_a_projection() {
        for byte in 0..=255u8 {
            assert_eq!(quantize(dequantize(byte)), byte);
        }
        assert_eq!(quantize(-0.3), 0);
        assert_eq!(quantize(1.7), 255);
        let mut image = Image { size: 1, pixels: vec![0.123_456] };
        quantize_image(&mut image);
        let once = image.clone();
        quantize_image(&mut image);
        assert_eq!(image, once);
    }

    #[test]
    fn header_comments_and_whitespace_are_tolerated() {
        let bytes = b"P5\n# a comment\n 2\t2 \n255\n\x00\x7f\x80\xff".to_vec();
        let image = decode(&bytes).unwrap();
        assert_eq!(image.size, 2);
        assert_eq!(image.pixels[3], 1.0);
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        assert!(decode(b"P2\n2 2\n255\n").is_err());
        assert!(decode(b"P5\n2 3\n255\n\x00\x00\x00\x00\x00\x00").is_err());
        assert!(decode(b"P5\n2 2\n65535\n\x00\x00\x00\x00").is_err());
        assert!(decode(b"P5\n2 2\n255\n\x00\x00").is_err());
        assert!(decode(b"P5\n2 2\n255").is_err());
    }
}
