//! Gray-level rasters: Netpbm PGM reading and writing, the crop/rescale
//! preprocessing stand-in, and equal-width gray-level quantization.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    max_value: u32,
    pixels: Vec<u32>,
}

impl Image {
    pub fn new(width: usize, height: usize, max_value: u32, pixels: Vec<u32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::param("image dimensions must be at least 1x1"));
        }
        if pixels.len() != width * height {
            return Err(Error::Shape {
                expected: width * height,
                actual: pixels.len(),
            });
        }
        if let Some(v) = pixels.iter().find(|&&v| v > max_value) {
            return Err(Error::Range(format!(
                "pixel value {v} exceeds max value {max_value}"
            )));
        }
        Ok(Self {
            width,
            height,
            max_value,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn max_value(&self) -> u32 {
        self.max_value
    }

    /// Row-major pixels, top-to-bottom, left-to-right.
    pub fn pixels(&self) -> &[u32] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.pixels[row * self.width + col]
    }

    fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Image {
        let mut pixels = Vec::with_capacity(width * height);
        for r in top..top + height {
            let start = r * self.width + left;
            pixels.extend_from_slice(&self.pixels[start..start + width]);
        }
        Image {
            width,
            height,
            max_value: self.max_value,
            pixels,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PgmEncoding {
    /// P2
    Ascii,
    /// P5
    Binary,
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderCursor<'a> {
    fn skip_whitespace_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    /// Next unsigned decimal token, or `None` at end of input.
    fn next_uint(&mut self, what: &str) -> Result<Option<u64>> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            if self.pos >= self.bytes.len() {
                return Ok(None);
            }
            return Err(Error::Format(format!(
                "expected {what}, found byte 0x{:02x}",
                self.bytes[self.pos]
            )));
        }
        if self.pos < self.bytes.len()
            && !self.bytes[self.pos].is_ascii_whitespace()
            && self.bytes[self.pos] != b'#'
        {
            return Err(Error::Format(format!("malformed {what} token")));
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).expect("ascii digits");
        text.parse::<u64>()
            .map(Some)
            .map_err(|_| Error::Range(format!("{what} {text} does not fit in 64 bits")))
    }

    fn header_uint(&mut self, what: &str) -> Result<u64> {
        self.next_uint(what)?
            .ok_or_else(|| Error::Truncated(format!("header ends before {what}")))
    }
}

pub fn load_pgm(bytes: &[u8]) -> Result<Image> {
    let encoding = match bytes.get(..2) {
        Some(b"P2") => PgmEncoding::Ascii,
        Some(b"P5") => PgmEncoding::Binary,
        _ => return Err(Error::Format("missing P2/P5 magic number".to_owned())),
    };
    let mut cur = HeaderCursor { bytes, pos: 2 };
    if cur.pos < bytes.len() && !bytes[cur.pos].is_ascii_whitespace() && bytes[cur.pos] != b'#' {
        return Err(Error::Format("missing P2/P5 magic number".to_owned()));
    }
    let width = cur.header_uint("width")?;
    let height = cur.header_uint("height")?;
    let max_value = cur.header_uint("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::Range(format!("invalid dimensions {width}x{height}")));
    }
    if max_value == 0 || max_value > 65535 {
        return Err(Error::Range(format!(
            "maxval {max_value} outside 1..=65535"
        )));
    }
    let count = (width as usize)
        .checked_mul(height as usize)
        .ok_or_else(|| Error::Range("image dimensions overflow".to_owned()))?;
    let max_value = max_value as u32;

    let pixels = match encoding {
        PgmEncoding::Ascii => {
            let mut pixels = Vec::with_capacity(count);
            for i in 0..count {
                let v = cur.next_uint("pixel value")?.ok_or_else(|| {
                    Error::Truncated(format!("expected {count} pixel values, found {i}"))
                })?;
                if v > max_value as u64 {
                    return Err(Error::Range(format!(
                        "pixel value {v} exceeds maxval {max_value}"
                    )));
                }
                pixels.push(v as u32);
            }
            pixels
        }
        PgmEncoding::Binary => {
            // exactly one whitespace byte separates maxval from the raster
            if cur.pos >= bytes.len() {
                return Err(Error::Truncated("no pixel data after header".to_owned()));
            }
            let body = &bytes[cur.pos + 1..];
            let bytes_per_pixel = if max_value < 256 { 1 } else { 2 };
            if body.len() < count * bytes_per_pixel {
                return Err(Error::Truncated(format!(
                    "expected {} bytes of pixel data, found {}",
                    count * bytes_per_pixel,
                    body.len()
                )));
            }
            let pixels: Vec<u32> = if bytes_per_pixel == 1 {
                body[..count].iter().map(|&b| b as u32).collect()
            } else {
                body[..2 * count]
                    .chunks_exact(2)
                    .map(|c| u16::from_be_bytes([c[0], c[1]]) as u32)
                    .collect()
            };
            if let Some(v) = pixels.iter().find(|&&v| v > max_value) {
                return Err(Error::Range(format!(
                    "pixel value {v} exceeds maxval {max_value}"
                )));
            }
            pixels
        }
    };
    Image::new(width as usize, height as usize, max_value, pixels)
}

pub fn read_pgm_file(path: &Path) -> Result<Image> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    load_pgm(&bytes)
}

pub fn write_pgm(img: &Image, encoding: PgmEncoding) -> Vec<u8> {
    let mut out = Vec::new();
    let magic = match encoding {
        PgmEncoding::Ascii => "P2",
        PgmEncoding::Binary => "P5",
    };
    out.extend_from_slice(
        format!("{magic}\n{} {}\n{}\n", img.width, img.height, img.max_value).as_bytes(),
    );
    match encoding {
        PgmEncoding::Ascii => {
            for row in img.pixels.chunks(img.width) {
                let line: Vec<String> = row.iter().map(u32::to_string).collect();
                out.extend_from_slice(line.join(" ").as_bytes());
                out.push(b'\n');
            }
        }
        PgmEncoding::Binary if img.max_value < 256 => {
            out.extend(img.pixels.iter().map(|&v| v as u8));
        }
        PgmEncoding::Binary => {
            for &v in &img.pixels {
                out.extend_from_slice(&(v as u16).to_be_bytes());
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    /// Crop to the bounding box of pixels strictly above `threshold`.
    pub crop: bool,
    pub threshold: u32,
    /// Min-max stretch to `[0, max_value]`.
    pub rescale: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            crop: true,
            threshold: 0,
            rescale: true,
        }
    }
}

pub fn preprocess(img: &Image, cfg: &PreprocessConfig) -> Result<Image> {
    let mut out = if cfg.crop {
        let (mut top, mut left, mut bottom, mut right) = (usize::MAX, usize::MAX, 0, 0);
        for r in 0..img.height {
            for c in 0..img.width {
                if img.get(r, c) > cfg.threshold {
                    top = top.min(r);
                    bottom = bottom.max(r);
                    left = left.min(c);
                    right = right.max(c);
                }
            }
        }
        if top == usize::MAX {
            return Err(Error::EmptyForeground {
                threshold: cfg.threshold,
            });
        }
        img.crop(top, left, bottom - top + 1, right - left + 1)
    } else {
        img.clone()
    };
    if cfg.rescale {
        rescale_in_place(&mut out);
    }
    Ok(out)
}

/// floor(max_value * (v - min) / (max - min)); a constant image becomes all zeros.
fn rescale_in_place(img: &mut Image) {
    let lo = *img.pixels.iter().min().expect("nonempty image") as u64;
    let hi = *img.pixels.iter().max().expect("nonempty image") as u64;
    let top = img.max_value as u64;
    for v in img.pixels.iter_mut() {
        *v = if hi == lo {
            0
        } else {
            (top * (*v as u64 - lo) / (hi - lo)) as u32
        };
    }
}

/// Equal-width binning to `levels` gray levels: floor(v * L / (max_value + 1)).
pub fn quantize(img: &Image, levels: u32) -> Result<Image> {
    if levels < 2 {
        return Err(Error::param(format!(
            "level count must be >= 2, got {levels}"
        )));
    }
    let denom = img.max_value as u64 + 1;
    let pixels = img
        .pixels
        .iter()
        .map(|&v| (v as u64 * levels as u64 / denom) as u32)
        .collect();
    Ok(Image {
        width: img.width,
        height: img.height,
        max_value: levels - 1,
        pixels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ascii_readout() {
        let img = load_pgm(b"P2\n2 2\n255\n0 0 1 1").unwrap();
        assert_eq!(img, Image::new(2, 2, 255, vec![0, 0, 1, 1]).unwrap());
    }

    #[test]
    fn binary_single_pixel() {
        let img = load_pgm(b"P5\n1 1\n255\n\x7f").unwrap();
        assert_eq!(img, Image::new(1, 1, 255, vec![127]).unwrap());
    }

    #[test]
    fn comments_between_tokens() {
        let img = load_pgm(b"P2 # made by hand\n# size\n2 # w\n1\n# max\n9\n3 9").unwrap();
        assert_eq!(img.pixels(), &[3, 9]);
    }

    #[test]
    fn sixteen_bit_binary() {
        let img = load_pgm(b"P5 2 1 1000\n\x03\xe8\x00\x01").unwrap();
        assert_eq!(img.pixels(), &[1000, 1]);
    }

    #[test]
    fn ascii_truncation() {
        assert!(matches!(
            load_pgm(b"P2\n2 2\n255\n0 0 1"),
            Err(Error::Truncated(_))
        ));
    }

    #[test]
    fn binary_truncation() {
        assert!(matches!(
            load_pgm(b"P5\n2 2\n255\n\x00\x01"),
            Err(Error::Truncated(_))
        ));
    }

    #[test]
    fn bad_magic_and_maxval() {
        assert!(matches!(
            load_pgm(b"P3\n1 1\n255\n0"),
            Err(Error::Format(_))
        ));
        assert!(matches!(load_pgm(b"P22 1 1 255 0"), Err(Error::Format(_))));
        assert!(matches!(load_pgm(b""), Err(Error::Format(_))));
        assert!(matches!(load_pgm(b"P2\n1 1\n0\n0"), Err(Error::Range(_))));
        assert!(matches!(
            load_pgm(b"P2\n1 1\n65536\n0"),
            Err(Error::Range(_))
        ));
        assert!(matches!(load_pgm(b"P2\n1 1\n5\n6"), Err(Error::Range(_))));
    }

    #[test]
    fn preprocess_constant_image_rescale_only() {
        let img = Image::new(3, 2, 255, vec![7; 6]).unwrap();
        let cfg = PreprocessConfig {
            crop: false,
            threshold: 0,
            rescale: true,
        };
        let out = preprocess(&img, &cfg).unwrap();
        assert_eq!((out.width(), out.height()), (3, 2));
        assert!(out.pixels().iter().all(|&v| v == 0));
    }

    #[test]
    fn preprocess_crops_bright_square() {
        let mut pixels = vec![0; 16];
        for (r, c) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            pixels[r * 4 + c] = 200;
        }
        let img = Image::new(4, 4, 255, pixels).unwrap();
        let out = preprocess(&img, &PreprocessConfig::default()).unwrap();
        assert_eq!((out.width(), out.height()), (2, 2));
    }

    #[test]
    fn preprocess_rescale_hand_values() {
        let img = Image::new(3, 1, 255, vec![10, 20, 30]).unwrap();
        let cfg = PreprocessConfig {
            crop: false,
            threshold: 0,
            rescale: true,
        };
        // 255*10/20 = 127.5 -> 127
        assert_eq!(preprocess(&img, &cfg).unwrap().pixels(), &[0, 127, 255]);
    }

    #[test]
    fn preprocess_empty_foreground() {
        let img = Image::new(2, 2, 255, vec![3, 1, 0, 2]).unwrap();
        let cfg = PreprocessConfig {
            crop: true,
            threshold: 3,
            rescale: false,
        };
        assert!(matches!(
            preprocess(&img, &cfg),
            Err(Error::EmptyForeground { threshold: 3 })
        ));
    }

    #[test]
    fn quantize_bin_edges() {
        let img = Image::new(4, 1, 255, vec![0, 255, 85, 86]).unwrap();
        assert_eq!(quantize(&img, 2).unwrap().pixels()[..2], [0, 1]);
        let q3 = quantize(&img, 3).unwrap();
        assert_eq!(q3.pixels()[2..], [0, 1]);
        assert_eq!(q3.max_value(), 2);
        assert!(matches!(quantize(&img, 1), Err(Error::Parameter(_))));
    }

    #[test]
    fn quantize_identity_when_levels_cover_range() {
        let img = Image::new(3, 1, 7, vec![0, 5, 7]).unwrap();
        assert_eq!(quantize(&img, 8).unwrap(), img);
    }

    fn arb_image() -> impl Strategy<Value = Image> {
        (1usize..8, 1usize..8, prop_oneof![1u32..256, 256u32..65536]).prop_flat_map(
            |(w, h, max)| {
                prop::collection::vec(0..=max, w * h)
                    .prop_map(move |px| Image::new(w, h, max, px).unwrap())
            },
        )
    }

    proptest! {
        #[test]
        fn pgm_round_trip(img in arb_image()) {
            for enc in [PgmEncoding::Ascii, PgmEncoding::Binary] {
                prop_assert_eq!(&load_pgm(&write_pgm(&img, enc)).unwrap(), &img);
            }
        }

        #[test]
        fn quantize_monotone_and_surjective(max in 1u32..2000, levels in 2u32..40) {
            prop_assume!(levels <= max + 1);
            let img = Image::new(max as usize + 1, 1, max, (0..=max).collect()).unwrap();
            let q = quantize(&img, levels).unwrap();
            prop_assert!(q.pixels().windows(2).all(|w| w[0] <= w[1]));
            let distinct: std::collections::BTreeSet<_> = q.pixels().iter().copied().collect();
            prop_assert_eq!(distinct.len() as u32, levels);
        }
    }
}
