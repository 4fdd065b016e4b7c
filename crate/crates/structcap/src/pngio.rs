//! PNG encode/decode between files, bytes and the core `RgbImage`.

use std::io::Cursor;
use std::path::Path;

use image::ImageFormat;
use structcap_core::image::RgbImage;

#[derive(Debug, thiserror::Error)]
pub enum ImageIoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a decodable PNG: {0}")]
    Decode(String),
}

pub fn decode_png(bytes: &[u8]) -> Result<RgbImage, ImageIoError> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| ImageIoError::Decode(e.to_string()))?
        .to_rgb8();
    let (w, h) = img.dimensions();
    Ok(RgbImage::from_raw(w, h, img.into_raw()).expect("rgb8 buffer matches its dimensions"))
}

pub fn encode_png(img: &RgbImage) -> Vec<u8> {
    let buf = image::RgbImage::from_raw(img.width(), img.height(), img.as_raw().to_vec())
        .expect("rgb buffer matches its dimensions");
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png).expect("in-memory png encoding");
    out.into_inner()
}

pub fn read_png(path: &Path) -> Result<RgbImage, ImageIoError> {
    let bytes = std::fs::read(path).map_err(|source| ImageIoError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_png(&bytes)
}

pub fn write_png(path: &Path, img: &RgbImage) -> std::io::Result<()> {
    std::fs::write(path, encode_png(img))
}

/// `%06d.png`.
pub fn frame_file_name(index: u32) -> String {
    format!("{index:06}.png")
}
