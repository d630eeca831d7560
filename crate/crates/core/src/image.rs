//! RGB8 images with string metadata, plus PNG codecs for images, masks and
//! 16-bit depth maps.
//!
//! Metadata survives a PNG round trip as iTXt chunks; the mock providers use
//! it to carry ground truth alongside the pixels.

use std::collections::BTreeMap;
use std::io::Cursor;

use sha2::{Digest, Sha256};

use crate::model::{DepthMap, Mask};

pub const WHITE: [u8; 3] = [255, 255, 255];

#[derive(Debug, thiserror::Error)]
pub enum ImageError {
    #[error("png decode: {0}")]
    Decode(String),
    #[error("png encode: {0}")]
    Encode(String),
    #[error("buffer of {len} bytes does not match {width}x{height} rgb")]
    Size { len: usize, width: u32, height: u32 },
    #[error("unsupported png layout: {0}")]
    Unsupported(String),
}

#[derive(Clone, PartialEq, Eq)]
pub struct Image {
    width: u32,
    height: u32,
    data: Vec<u8>,
    meta: BTreeMap<String, String>,
}

impl std::fmt::Debug for Image {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Image")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("meta_keys", &self.meta.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl Image {
    pub fn new(width: u32, height: u32, fill: [u8; 3]) -> Self {
        let n = width as usize * height as usize;
        let mut data = Vec::with_capacity(n * 3);
        for _ in 0..n {
            data.extend_from_slice(&fill);
        }
        Self {
            width,
            height,
            data,
            meta: BTreeMap::new(),
        }
    }

    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Result<Self, ImageError> {
        if data.len() != width as usize * height as usize * 3 {
            return Err(ImageError::Size {
                len: data.len(),
                width,
                height,
            });
        }
        Ok(Self {
            width,
            height,
            data,
            meta: BTreeMap::new(),
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set(&mut self, x: u32, y: u32, px: [u8; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.data[i..i + 3].copy_from_slice(&px);
    }

    pub fn meta(&self) -> &BTreeMap<String, String> {
        &self.meta
    }

    pub fn meta_get(&self, key: &str) -> Option<&str> {
        self.meta.get(key).map(String::as_str)
    }

    pub fn set_meta(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.meta.insert(key.into(), value.into());
    }

    pub fn remove_meta(&mut self, key: &str) {
        self.meta.remove(key);
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.set_meta(key, value);
        self
    }

    /// Pixel window copy; metadata is carried over.
    pub fn crop(&self, x0: u32, y0: u32, w: u32, h: u32) -> Image {
        assert!(x0 + w <= self.width && y0 + h <= self.height, "crop out of bounds");
        let mut data = Vec::with_capacity(w as usize * h as usize * 3);
        for y in y0..y0 + h {
            let start = (y as usize * self.width as usize + x0 as usize) * 3;
            data.extend_from_slice(&self.data[start..start + w as usize * 3]);
        }
        Image {
            width: w,
            height: h,
            data,
            meta: self.meta.clone(),
        }
    }

    /// Bilinear resample to `w x h`.
    pub fn resized(&self, w: u32, h: u32) -> Image {
        if (w, h) == self.dims() {
            return self.clone();
        }
        let buf = image::RgbImage::from_raw(self.width, self.height, self.data.clone())
            .expect("buffer size checked at construction");
        let out = image::imageops::resize(&buf, w, h, image::imageops::FilterType::Triangle);
        Image {
            width: w,
            height: h,
            data: out.into_raw(),
            meta: self.meta.clone(),
        }
    }

    /// Rec. 601 luma per pixel in `[0, 255]`.
    pub fn to_gray(&self) -> Vec<f64> {
        self.data
            .chunks_exact(3)
            .map(|p| 0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2]))
            .collect()
    }

    pub fn count_non_white(&self) -> usize {
        self.data.chunks_exact(3).filter(|p| *p != WHITE).count()
    }

    /// Content hash over pixels and metadata.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.width.to_le_bytes());
        h.update(self.height.to_le_bytes());
        h.update(&self.data);
        for (k, v) in &self.meta {
            h.update((k.len() as u64).to_le_bytes());
            h.update(k.as_bytes());
            h.update((v.len() as u64).to_le_bytes());
            h.update(v.as_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn encode_png(&self) -> Result<Vec<u8>, ImageError> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width, self.height);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            enc.set_compression(png::Compression::Fast);
            for (k, v) in &self.meta {
                enc.add_itxt_chunk(k.clone(), v.clone())
                    .map_err(|e| ImageError::Encode(e.to_string()))?;
            }
            let mut w = enc
                .write_header()
                .map_err(|e| ImageError::Encode(e.to_string()))?;
            w.write_image_data(&self.data)
                .map_err(|e| ImageError::Encode(e.to_string()))?;
        }
        Ok(out)
    }

    pub fn decode_png(bytes: &[u8]) -> Result<Image, ImageError> {
        let mut dec = png::Decoder::new(Cursor::new(bytes));
        dec.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
        let mut reader = dec.read_info().map_err(|e| ImageError::Decode(e.to_string()))?;
        let mut meta = BTreeMap::new();
        {
            let info = reader.info();
            for t in &info.uncompressed_latin1_text {
                meta.insert(t.keyword.clone(), t.text.clone());
            }
            for t in &info.utf8_text {
                let text = t.get_text().map_err(|e| ImageError::Decode(e.to_string()))?;
                meta.insert(t.keyword.clone(), text);
            }
        }
        let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
        let frame = reader
            .next_frame(&mut buf)
            .map_err(|e| ImageError::Decode(e.to_string()))?;
        buf.truncate(frame.buffer_size());
        let (w, h) = (frame.width, frame.height);
        let data = match frame.color_type {
            png::ColorType::Rgb => buf,
            png::ColorType::Rgba => buf
                .chunks_exact(4)
                .flat_map(|p| [p[0], p[1], p[2]])
                .collect(),
            png::ColorType::Grayscale => buf.iter().flat_map(|&g| [g, g, g]).collect(),
            png::ColorType::GrayscaleAlpha => {
                buf.chunks_exact(2).flat_map(|p| [p[0], p[0], p[0]]).collect()
            }
            other => return Err(ImageError::Unsupported(format!("{other:?}"))),
        };
        let mut img = Image::from_raw(w, h, data)?;
        img.meta = meta;
        Ok(img)
    }
}

/// Mask as an 8-bit grayscale PNG, 255 for set pixels.
pub fn encode_mask_png(mask: &Mask) -> Result<Vec<u8>, ImageError> {
    let (w, h) = (mask.width(), mask.height());
    let mut data = vec![0u8; w as usize * h as usize];
    for (x, y) in mask.iter_set() {
        data[y as usize * w as usize + x as usize] = 255;
    }
    encode_gray(w, h, png::BitDepth::Eight, &data)
}

pub fn decode_mask_png(bytes: &[u8]) -> Result<Mask, ImageError> {
    let img = Image::decode_png(bytes)?;
    Ok(Mask::from_fn(img.width(), img.height(), |x, y| {
        img.get(x, y)[0] >= 128
    }))
}

/// Depth as a 16-bit grayscale PNG, `value * 257` so 255 maps to 65535.
pub fn encode_depth_png16(depth: &DepthMap) -> Result<Vec<u8>, ImageError> {
    let mut data = Vec::with_capacity(depth.values().len() * 2);
    for v in depth.values() {
        let q = (v * 257.0).round().clamp(0.0, 65535.0) as u16;
        data.extend_from_slice(&q.to_be_bytes());
    }
    encode_gray(depth.width(), depth.height(), png::BitDepth::Sixteen, &data)
}

pub fn decode_depth_png16(bytes: &[u8]) -> Result<DepthMap, ImageError> {
    let dec = png::Decoder::new(Cursor::new(bytes));
    let mut reader = dec.read_info().map_err(|e| ImageError::Decode(e.to_string()))?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| ImageError::Decode(e.to_string()))?;
    if frame.color_type != png::ColorType::Grayscale || frame.bit_depth != png::BitDepth::Sixteen {
        return Err(ImageError::Unsupported(format!(
            "depth png must be 16-bit grayscale, got {:?} {:?}",
            frame.color_type, frame.bit_depth
        )));
    }
    let values = buf[..frame.buffer_size()]
        .chunks_exact(2)
        .map(|b| f64::from(u16::from_be_bytes([b[0], b[1]])) / 257.0)
        .collect();
    DepthMap::new(frame.width, frame.height, values).map_err(|e| ImageError::Decode(e.to_string()))
}

fn encode_gray(w: u32, h: u32, depth: png::BitDepth, data: &[u8]) -> Result<Vec<u8>, ImageError> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, w, h);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(depth);
        enc.set_compression(png::Compression::Fast);
        let mut wr = enc
            .write_header()
            .map_err(|e| ImageError::Encode(e.to_string()))?;
        wr.write_image_data(data)
            .map_err(|e| ImageError::Encode(e.to_string()))?;
    }
    Ok(out)
}
