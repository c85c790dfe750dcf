//! Float RGB images, 8-bit class maps, and their PNG / PPM / PGM codecs.
//!
//! Colour images hold linear values; PNG files store them sRGB-encoded.
//! Class maps store the class index directly as the gray value.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const BACKGROUND_CLASS: u8 = 255;
pub const DEFAULT_HAIR_CLASS: u8 = 254;

#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<[f32; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, [0.0; 3])
    }

    pub fn filled(width: usize, height: usize, value: [f32; 3]) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_pixels(width: usize, height: usize, data: Vec<[f32; 3]>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::dim(format!(
                "{} pixels for a {width}x{height} image",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[f32; 3]] {
        &self.data
    }

    pub fn pixels_mut(&mut self) -> &mut [[f32; 3]] {
        &mut self.data
    }

    pub fn get(&self, x: usize, y: usize) -> [f32; 3] {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: [f32; 3]) {
        self.data[y * self.width + x] = value;
    }

    pub fn same_size<T>(&self, other: &Raster<T>) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let bytes: Vec<u8> = self
            .data
            .iter()
            .flat_map(|p| p.map(|c| quantize(linear_to_srgb(c))))
            .collect();
        write_png(path.as_ref(), self.width, self.height, png::ColorType::Rgb, &bytes)
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let (width, height, channels, bytes) = read_png(path)?;
        let data = match channels {
            1 | 2 => bytes
                .chunks_exact(channels)
                .map(|p| [srgb_to_linear(p[0]); 3])
                .collect(),
            _ => bytes
                .chunks_exact(channels)
                .map(|p| [srgb_to_linear(p[0]), srgb_to_linear(p[1]), srgb_to_linear(p[2])])
                .collect(),
        };
        Ok(Self { width, height, data })
    }

    /// Binary PPM (P6), sRGB-encoded.
    pub fn save_ppm(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.data.iter().flat_map(|p| p.map(|c| quantize(linear_to_srgb(c)))));
        std::fs::write(path.as_ref(), out).map_err(|e| Error::io(path.as_ref(), e))
    }
}

/// Generic single-channel raster; [`ClassMap`] is the 8-bit instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

pub type ClassMap = Raster<u8>;

impl<T: Copy> Raster<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::dim(format!(
                "{} values for a {width}x{height} raster",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: T) {
        self.data[y * self.width + x] = value;
    }
}

impl ClassMap {
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        write_png(path.as_ref(), self.width, self.height, png::ColorType::Grayscale, &self.data)
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let (width, height, channels, bytes) = read_png(path)?;
        if channels != 1 {
            return Err(Error::Image {
                path: path.into(),
                message: format!("class maps must be single-channel, found {channels} channels"),
            });
        }
        Ok(Self {
            width,
            height,
            data: bytes,
        })
    }

    /// Binary PGM (P5) of the raw class indices.
    pub fn save_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        std::fs::write(path.as_ref(), out).map_err(|e| Error::io(path.as_ref(), e))
    }
}

pub fn linear_to_srgb(c: f32) -> f32 {
    let c = c.clamp(0.0, 1.0);
    if c <= 0.003_130_8 {
        12.92 * c
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    }
}

pub fn srgb_to_linear_f(c: f32) -> f32 {
    if c <= 0.040_45 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn srgb_to_linear(byte: u8) -> f32 {
    srgb_to_linear_f(byte as f32 / 255.0)
}

fn quantize(c: f32) -> u8 {
    (c.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn write_png(path: &Path, width: usize, height: usize, color: png::ColorType, bytes: &[u8]) -> Result<()> {
    let codec = |e: png::EncodingError| Error::Image {
        path: path.into(),
        message: e.to_string(),
    };
    if width == 0 || height == 0 {
        return Err(Error::Image {
            path: path.into(),
            message: "cannot encode an empty image".into(),
        });
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    {
        let mut enc = png::Encoder::new(&mut w, width as u32, height as u32);
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(codec)?;
        writer.write_image_data(bytes).map_err(codec)?;
        writer.finish().map_err(codec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Returns width, height, channel count and 8-bit samples.
fn read_png(path: &Path) -> Result<(usize, usize, usize, Vec<u8>)> {
    let codec = |e: png::DecodingError| Error::Image {
        path: path.into(),
        message: e.to_string(),
    };
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(codec)?;
    let size = reader.output_buffer_size().ok_or_else(|| Error::Image {
        path: path.into(),
        message: "image too large".into(),
    })?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(codec)?;
    buf.truncate(info.buffer_size());
    let channels = info.color_type.samples();
    Ok((info.width as usize, info.height as usize, channels, buf))
}
