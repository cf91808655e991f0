//! In-memory face images and the raw image file format: a 12-byte header
//! (height, width, channels as little-endian u32) followed by row-major
//! HWC pixels as little-endian f32 in [0, 1].

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum ImageError {
    #[error("image io {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("image {path}: {reason}")]
    Malformed { path: String, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaceImage {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    /// Row-major HWC, values in [0, 1].
    pub pixels: Vec<f64>,
}

impl FaceImage {
    pub fn blank(height: usize, width: usize, channels: usize) -> FaceImage {
        FaceImage {
            height,
            width,
            channels,
            pixels: vec![0.0; height * width * channels],
        }
    }

    pub fn at(&self, y: usize, x: usize, c: usize) -> f64 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    pub fn set(&mut self, y: usize, x: usize, c: usize, value: f64) {
        self.pixels[(y * self.width + x) * self.channels + c] = value.clamp(0.0, 1.0);
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<(), ImageError> {
        let path_str = path.as_ref().display().to_string();
        let io_err = |source| ImageError::Io {
            path: path_str.clone(),
            source,
        };
        let mut file = File::create(&path).map_err(io_err)?;
        let io_err = |source| ImageError::Io {
            path: path_str.clone(),
            source,
        };
        let mut bytes = Vec::with_capacity(12 + self.pixels.len() * 4);
        bytes.extend_from_slice(&(self.height as u32).to_le_bytes());
        bytes.extend_from_slice(&(self.width as u32).to_le_bytes());
        bytes.extend_from_slice(&(self.channels as u32).to_le_bytes());
        for &p in &self.pixels {
            bytes.extend_from_slice(&(p as f32).to_le_bytes());
        }
        file.write_all(&bytes).map_err(io_err)
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<FaceImage, ImageError> {
        let path_str = path.as_ref().display().to_string();
        let mut bytes = Vec::new();
        File::open(&path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|source| ImageError::Io {
                path: path_str.clone(),
                source,
            })?;
        if bytes.len() < 12 {
            return Err(ImageError::Malformed {
                path: path_str,
                reason: "missing header".into(),
            });
        }
        let dim = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
        let (height, width, channels) = (dim(0), dim(4), dim(8));
        let expected = height * width * channels;
        let body = &bytes[12..];
        if body.len() != expected * 4 {
            return Err(ImageError::Malformed {
                path: path_str,
                reason: format!("{} pixel bytes for {height}x{width}x{channels}", body.len()),
            });
        }
        let pixels = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        Ok(FaceImage {
            height,
            width,
            channels,
            pixels,
        })
    }
}
