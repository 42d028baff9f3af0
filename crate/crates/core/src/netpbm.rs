//! Binary PGM (P5) and PPM (P6) images with 8-bit samples.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Error)]
pub enum NetpbmError {
    #[error("unsupported magic number {0:?} (expected P5 or P6)")]
    UnsupportedMagic(String),
    #[error("unsupported maxval {0} (only 255 is accepted)")]
    UnsupportedMaxval(u64),
    #[error("malformed header: {0}")]
    Header(String),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("image has {0} channels; only 1 (PGM) and 3 (PPM) can be written")]
    Channels(usize),
    #[error("sample data length {found} does not match {channels}x{height}x{width}")]
    DataLength {
        channels: usize,
        height: usize,
        width: usize,
        found: usize,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Planar 8-bit image, `[channels, height, width]` row-major with top-left origin.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl Image {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<u8>) -> Result<Self, NetpbmError> {
        if channels != 1 && channels != 3 {
            return Err(NetpbmError::Channels(channels));
        }
        if height == 0 || width == 0 || data.len() != channels * height * width {
            return Err(NetpbmError::DataLength {
                channels,
                height,
                width,
                found: data.len(),
            });
        }
        Ok(Image {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Planar samples.
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn plane(&self, c: usize) -> &[u8] {
        let hw = self.height * self.width;
        &self.data[c * hw..(c + 1) * hw]
    }

    /// Sample values 0..=255 as a `[C, H, W]` tensor.
    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        let data = self.data.iter().map(|&v| T::lit(f64::from(v))).collect();
        Tensor::new(vec![self.channels, self.height, self.width], data).expect("dimensions are validated")
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, NetpbmError> {
        let mut cur = Header { bytes, pos: 0 };
        let magic = cur.token()?;
        let channels = match magic.as_str() {
            "P5" => 1,
            "P6" => 3,
            _ => return Err(NetpbmError::UnsupportedMagic(magic)),
        };
        let width = cur.number()?;
        let height = cur.number()?;
        let maxval = cur.number()?;
        if maxval != 255 {
            return Err(NetpbmError::UnsupportedMaxval(maxval));
        }
        // exactly one whitespace byte separates the header from the raster
        match bytes.get(cur.pos) {
            Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
            _ => return Err(NetpbmError::Header("missing whitespace after maxval".into())),
        }
        let (width, height) = (width as usize, height as usize);
        if width == 0 || height == 0 {
            return Err(NetpbmError::Header(format!("zero extent {width}x{height}")));
        }
        let expected = channels * width * height;
        let raster = &bytes[cur.pos..];
        if raster.len() < expected {
            return Err(NetpbmError::Truncated {
                expected,
                found: raster.len(),
            });
        }
        let raster = &raster[..expected];
        let hw = width * height;
        let data = if channels == 1 {
            raster.to_vec()
        } else {
            let mut planar = vec![0u8; expected];
            for (i, px) in raster.chunks_exact(3).enumerate() {
                for (c, &v) in px.iter().enumerate() {
                    planar[c * hw + i] = v;
                }
            }
            planar
        };
        Image::new(channels, height, width, data)
    }

    pub fn encode(&self) -> Vec<u8> {
        let magic = if self.channels == 1 { "P5" } else { "P6" };
        let mut out = format!("{magic}\n{} {}\n255\n", self.width, self.height).into_bytes();
        let hw = self.height * self.width;
        if self.channels == 1 {
            out.extend_from_slice(&self.data);
        } else {
            out.reserve(3 * hw);
            for i in 0..hw {
                out.extend((0..3).map(|c| self.data[c * hw + i]));
            }
        }
        out
    }
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    /// Next whitespace-delimited token, skipping `#` comments.
    fn token(&mut self) -> Result<String, NetpbmError> {
        loop {
            match self.bytes.get(self.pos) {
                Some(b) if b.is_ascii_whitespace() => self.pos += 1,
                Some(b'#') => {
                    while !matches!(self.bytes.get(self.pos), None | Some(b'\n') | Some(b'\r')) {
                        self.pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(NetpbmError::Header("unexpected end of header".into())),
            }
        }
        let start = self.pos;
        while matches!(self.bytes.get(self.pos), Some(b) if !b.is_ascii_whitespace() && *b != b'#') {
            self.pos += 1;
        }
        Ok(String::from_utf8_lossy(&self.bytes[start..self.pos]).into_owned())
    }

    fn number(&mut self) -> Result<u64, NetpbmError> {
        let t = self.token()?;
        t.parse().map_err(|_| NetpbmError::Header(format!("expected a number, got {t:?}")))
    }
}

pub fn load_image(path: impl AsRef<Path>) -> Result<Image, NetpbmError> {
    Image::decode(&fs::read(path)?)
}

pub fn write_image(path: impl AsRef<Path>, image: &Image) -> Result<(), NetpbmError> {
    fs::write(path, image.encode())?;
    Ok(())
}
