//! DFM1 binary rasters and 16-bit PNG import/export.
//!
//! DFM1 layout, all little-endian:
//!
//! | offset | size | field        |
//! |--------|------|--------------|
//! | 0      | 4    | magic `DFM1` |
//! | 4      | 4    | width (u32)  |
//! | 8      | 4    | height (u32) |
//! | 12     | 4    | pixel pitch (f32, meters) |
//! | 16     | 4    | floor depth (f32, meters) |
//! | 20     | 4    | reserved, zero |
//! | 24     | 4·w·h | depths (f32), row-major, top-left origin |

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::DepthMap;
use crate::error::{io_err, Error, Result};

pub const DFM_MAGIC: &[u8; 4] = b"DFM1";
pub const DFM_HEADER_LEN: usize = 24;

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

impl DepthMap {
    pub fn to_dfm_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(DFM_HEADER_LEN + 4 * self.depths().len());
        buf.extend_from_slice(DFM_MAGIC);
        buf.extend_from_slice(&(self.width() as u32).to_le_bytes());
        buf.extend_from_slice(&(self.height() as u32).to_le_bytes());
        buf.extend_from_slice(&self.pixel_pitch().to_le_bytes());
        buf.extend_from_slice(&self.floor_depth().to_le_bytes());
        buf.extend_from_slice(&0u32.to_le_bytes());
        for d in self.depths() {
            buf.extend_from_slice(&d.to_le_bytes());
        }
        buf
    }

    pub fn from_dfm_bytes(bytes: &[u8]) -> Result<DepthMap> {
        Self::parse_dfm(bytes, Path::new("<memory>"))
    }

    fn parse_dfm(bytes: &[u8], path: &Path) -> Result<DepthMap> {
        if bytes.len() < DFM_HEADER_LEN {
            return Err(format_err(path, "truncated header"));
        }
        if &bytes[0..4] != DFM_MAGIC {
            return Err(format_err(path, "bad magic"));
        }
        let word = |i: usize| -> [u8; 4] { bytes[i..i + 4].try_into().unwrap() };
        let width = u32::from_le_bytes(word(4)) as usize;
        let height = u32::from_le_bytes(word(8)) as usize;
        let pitch = f32::from_le_bytes(word(12));
        let floor = f32::from_le_bytes(word(16));
        let expected = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| format_err(path, "dimensions overflow"))?;
        if bytes.len() != DFM_HEADER_LEN + expected {
            return Err(format_err(
                path,
                format!("expected {} payload bytes, found {}", expected, bytes.len() - DFM_HEADER_LEN),
            ));
        }
        let depths = bytes[DFM_HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        DepthMap::from_depths(width, height, pitch, floor, depths)
    }

    pub fn write_dfm(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(&self.to_dfm_bytes())
    }

    pub fn read_dfm(mut r: impl Read) -> Result<DepthMap> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(io_err("reading DFM1 stream"))?;
        Self::from_dfm_bytes(&bytes)
    }

    pub fn save_dfm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_dfm_bytes()).map_err(io_err(format!("writing {}", path.display())))
    }

    pub fn load_dfm(path: impl AsRef<Path>) -> Result<DepthMap> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(io_err(format!("reading {}", path.display())))?;
        Self::parse_dfm(&bytes, path)
    }

    /// 16-bit grayscale PNG holding depth in millimeters; 0 marks the floor.
    pub fn to_png_mm(&self) -> Result<Vec<u8>> {
        let floor = self.floor_depth();
        let values = self.depths().iter().map(|&d| {
            if d >= floor {
                0
            } else {
                ((d * 1000.0).round() as u32).clamp(1, u16::MAX as u32) as u16
            }
        });
        encode_gray16(self.width(), self.height(), values)
    }

    /// Inverse of [`to_png_mm`](Self::to_png_mm), up to millimeter quantization.
    pub fn from_png_mm(bytes: &[u8], pixel_pitch: f32, floor_depth: f32) -> Result<DepthMap> {
        let (width, height, values) = decode_gray16(bytes)?;
        let depths = values
            .into_iter()
            .map(|v| {
                if v == 0 {
                    floor_depth
                } else {
                    (v as f32 / 1000.0).min(floor_depth)
                }
            })
            .collect();
        DepthMap::from_depths(width, height, pixel_pitch, floor_depth, depths)
    }

    /// Display render: height above floor mapped linearly onto 0..=65535.
    pub fn render_png(&self) -> Result<Vec<u8>> {
        let floor = self.floor_depth();
        let values = self
            .depths()
            .iter()
            .map(|&d| (((floor - d) / floor).clamp(0.0, 1.0) * u16::MAX as f32).round() as u16);
        encode_gray16(self.width(), self.height(), values)
    }
}

fn encode_gray16(width: usize, height: usize, values: impl Iterator<Item = u16>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Sixteen);
        let mut writer = enc.write_header().map_err(|e| Error::Png(e.to_string()))?;
        let data: Vec<u8> = values.flat_map(u16::to_be_bytes).collect();
        writer.write_image_data(&data).map_err(|e| Error::Png(e.to_string()))?;
    }
    Ok(out)
}

pub(crate) fn decode_gray16(bytes: &[u8]) -> Result<(usize, usize, Vec<u16>)> {
    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = decoder.read_info().map_err(|e| Error::Png(e.to_string()))?;
    let info = reader.info();
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Sixteen {
        return Err(Error::Png(format!(
            "expected 16-bit grayscale, got {:?}/{:?}",
            info.color_type, info.bit_depth
        )));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| Error::Png("image too large".into()))?];
    let frame = reader.next_frame(&mut buf).map_err(|e| Error::Png(e.to_string()))?;
    let values = buf[..frame.buffer_size()]
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    Ok((w, h, values))
}
