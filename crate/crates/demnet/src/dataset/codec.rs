//! Image file codecs: hand-rolled binary PGM (P5) plus PNG reading.
//!
//! PGM is the native format: written as exactly
//! `P5\n<width> <height>\n255\n` followed by row-major bytes, and read with
//! the usual PNM tolerance for comments and extra whitespace. PNG support
//! covers 8-bit grayscale (taken as-is) and 8-bit RGB (converted by the
//! 0.299/0.587/0.114 luminance weights). Anything else is rejected with a
//! conversion hint.

use crate::augment::Image;
use crate::error::{Error, Result};
use std::fs;
use std::path::Path;

/// Serializes to the exact P5 byte layout above.
pub fn encode_pgm(img: &Image) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", img.width(), img.height());
    let mut out = header.into_bytes();
    out.extend(img.to_bytes());
    out
}

/// Parses binary PGM. Comments (`#` to end of line) and arbitrary
/// whitespace are accepted between header tokens; the maxval must be 255.
pub fn parse_pgm(bytes: &[u8]) -> Result<Image> {
    let mut pos = 0usize;

    let next_token = |pos: &mut usize| -> Result<String> {
        // Skip whitespace and comments.
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
                continue;
            }
            break;
        }
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if start == *pos {
            return Err(Error::Format(format!("pgm: truncated header at byte {start}")));
        }
        Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    };

    let magic = next_token(&mut pos)?;
    if magic != "P5" {
        return Err(Error::Format(format!("pgm: bad magic {magic:?}, expected \"P5\"")));
    }
    let parse_dim = |tok: String, what: &str| -> Result<usize> {
        tok.parse::<usize>()
            .map_err(|_| Error::Format(format!("pgm: invalid {what} {tok:?}")))
    };
    let width = parse_dim(next_token(&mut pos)?, "width")?;
    let height = parse_dim(next_token(&mut pos)?, "height")?;
    let maxval = parse_dim(next_token(&mut pos)?, "maxval")?;
    if maxval != 255 {
        return Err(Error::Format(format!("pgm: unsupported maxval {maxval}, only 255")));
    }
    if width == 0 || height == 0 {
        return Err(Error::Format(format!("pgm: empty image {width}x{height}")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::Format(format!("pgm: missing raster separator at byte {pos}")));
    }
    pos += 1;
    let need = width * height;
    let have = bytes.len() - pos;
    if have < need {
        return Err(Error::Format(format!(
            "pgm: raster truncated at byte {}: need {need} bytes, have {have}",
            bytes.len()
        )));
    }
    Image::from_bytes(height, width, &bytes[pos..pos + need])
}

pub fn write_pgm(path: &Path, img: &Image) -> Result<()> {
    fs::write(path, encode_pgm(img)).map_err(|e| Error::io(path, e))
}

pub fn read_pgm(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Reads a PNG, accepting Luma8 directly and Rgb8 via the BT.601 luminance
/// weights 0.299·R + 0.587·G + 0.114·B.
pub fn read_png(path: &Path) -> Result<Image> {
    let reader = image::ImageReader::open(path).map_err(|e| Error::io(path, e))?;
    let decoded = reader
        .decode()
        .map_err(|e| Error::Format(format!("{}: png decode failed: {e}", path.display())))?;
    match decoded {
        image::DynamicImage::ImageLuma8(gray) => {
            let (w, h) = (gray.width() as usize, gray.height() as usize);
            Image::from_bytes(h, w, gray.as_raw())
        }
        image::DynamicImage::ImageRgb8(rgb) => {
            let (w, h) = (rgb.width() as usize, rgb.height() as usize);
            let mut data = Vec::with_capacity(w * h);
            for px in rgb.pixels() {
                let [r, g, b] = px.0;
                let y = 0.299 * r as f32 + 0.587 * g as f32 + 0.114 * b as f32;
                data.push(y.clamp(0.0, 255.0).round() as u8);
            }
            Image::from_bytes(h, w, &data)
        }
        other => Err(Error::Format(format!(
            "{}: unsupported png layout {:?}; convert to 8-bit grayscale or 8-bit RGB first",
            path.display(),
            other.color()
        ))),
    }
}

/// Dispatches on the file extension: .pgm or .png (case-insensitive).
pub fn read_image(path: &Path) -> Result<Image> {
    let ext = path
        .extension()
        .map(|e| e.to_string_lossy().to_ascii_lowercase())
        .unwrap_or_default();
    match ext.as_str() {
        "pgm" => read_pgm(path),
        "png" => read_png(path),
        other => Err(Error::Format(format!(
            "{}: unsupported extension {other:?}; use .pgm or .png",
            path.display()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn sample_image() -> Image {
        let data: Vec<f32> = (0..12).map(|i| (i * 20) as f32).collect();
        Image::new(Tensor::from_vec(&[3, 4], data).unwrap()).unwrap()
    }

    #[test]
    fn encoder_emits_the_documented_byte_layout() {
        let img = sample_image();
        let bytes = encode_pgm(&img);
        assert!(bytes.starts_with(b"P5\n4 3\n255\n"));
        assert_eq!(bytes.len(), 11 + 12);
        assert_eq!(&bytes[11..], &img.to_bytes()[..]);
    }

    #[test]
    fn pgm_round_trip_is_exact() {
        let img = sample_image();
        let back = parse_pgm(&encode_pgm(&img)).unwrap();
        assert_eq!(back, img);
        // Re-encoding is byte-identical.
        assert_eq!(encode_pgm(&back), encode_pgm(&img));
    }

    #[test]
    fn parser_tolerates_comments_and_padding() {
        let mut bytes = b"P5 # magic\n# a comment line\n 4\t3 # dims\n255\n".to_vec();
        bytes.extend(sample_image().to_bytes());
        let img = parse_pgm(&bytes).unwrap();
        assert_eq!(img, sample_image());
    }

    #[test]
    fn parser_rejects_bad_magic() {
        let err = parse_pgm(b"P6\n2 2\n255\nxxxx").unwrap_err();
        assert!(matches!(err, Error::Format(_)), "{err}");
    }

    #[test]
    fn parser_rejects_non_255_maxval() {
        let err = parse_pgm(b"P5\n2 2\n65535\n\0\0\0\0\0\0\0\0").unwrap_err();
        match err {
            Error::Format(msg) => assert!(msg.contains("maxval"), "{msg}"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn parser_rejects_truncated_raster() {
        let mut bytes = encode_pgm(&sample_image());
        bytes.truncate(bytes.len() - 3);
        let err = parse_pgm(&bytes).unwrap_err();
        match err {
            Error::Format(msg) => assert!(msg.contains("truncated"), "{msg}"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn png_luma8_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gray.png");
        let img = sample_image();
        let buf = image::GrayImage::from_raw(4, 3, img.to_bytes()).unwrap();
        buf.save(&path).unwrap();
        let back = read_png(&path).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn png_rgb8_converts_by_luminance_weights() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rgb.png");
        let mut buf = image::RgbImage::new(2, 1);
        buf.put_pixel(0, 0, image::Rgb([255, 0, 0]));
        buf.put_pixel(1, 0, image::Rgb([10, 200, 30]));
        buf.save(&path).unwrap();
        let img = read_png(&path).unwrap();
        assert_eq!(img.at(0, 0), (0.299f32 * 255.0).round());
        let want = (0.299f32 * 10.0 + 0.587 * 200.0 + 0.114 * 30.0).round();
        assert_eq!(img.at(0, 1), want);
    }

    #[test]
    fn png_other_layouts_get_a_conversion_hint() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rgba.png");
        let buf = image::RgbaImage::new(2, 2);
        buf.save(&path).unwrap();
        let err = read_png(&path).unwrap_err();
        match err {
            Error::Format(msg) => assert!(msg.contains("convert"), "{msg}"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn read_image_dispatches_on_extension() {
        let dir = tempfile::tempdir().unwrap();
        let pgm = dir.path().join("a.pgm");
        write_pgm(&pgm, &sample_image()).unwrap();
        assert_eq!(read_image(&pgm).unwrap(), sample_image());
        let err = read_image(&dir.path().join("a.tiff")).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let err = read_pgm(Path::new("/nonexistent/x.pgm")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
