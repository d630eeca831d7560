//! Request and response bodies of the provider HTTP protocol.
//!
//! Images travel as base64 PNG, masks as 8-bit PNG (255 = set), depth as
//! 16-bit grayscale PNG holding `value * 257`, meshes as base64 OBJ text.
//! The JSON schemas under `schemas/wire` describe the same shapes.

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use super::DescribeKind;
use crate::image::{self, Image, ImageError};
use crate::mesh::{Mesh, MeshError};
use crate::model::{DepthMap, IsoCamera, Mask};

#[derive(Debug, thiserror::Error)]
pub enum WireError {
    #[error("base64: {0}")]
    Base64(#[from] base64::DecodeError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("mesh is not utf-8")]
    MeshEncoding,
}

pub fn encode_image(img: &Image) -> Result<String, WireError> {
    Ok(STANDARD.encode(img.encode_png()?))
}

pub fn decode_image(s: &str) -> Result<Image, WireError> {
    Ok(Image::decode_png(&STANDARD.decode(s)?)?)
}

pub fn encode_mask(mask: &Mask) -> Result<String, WireError> {
    Ok(STANDARD.encode(image::encode_mask_png(mask)?))
}

pub fn decode_mask(s: &str) -> Result<Mask, WireError> {
    Ok(image::decode_mask_png(&STANDARD.decode(s)?)?)
}

pub fn encode_depth(depth: &DepthMap) -> Result<String, WireError> {
    Ok(STANDARD.encode(image::encode_depth_png16(depth)?))
}

pub fn decode_depth(s: &str) -> Result<DepthMap, WireError> {
    Ok(image::decode_depth_png16(&STANDARD.decode(s)?)?)
}

pub fn encode_mesh(mesh: &Mesh) -> String {
    STANDARD.encode(mesh.to_obj())
}

pub fn decode_mesh(s: &str) -> Result<Mesh, WireError> {
    let bytes = STANDARD.decode(s)?;
    let text = String::from_utf8(bytes).map_err(|_| WireError::MeshEncoding)?;
    Ok(Mesh::from_obj(&text)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Text2ImageRequest {
    pub prompt: String,
    pub n: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImagesResponse {
    pub images: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectRequest {
    pub image: String,
    pub vocabulary: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireDetection {
    pub label: String,
    pub bbox: [f64; 4],
    pub mask: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectResponse {
    pub detections: Vec<WireDetection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageRequest {
    pub image: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageResponse {
    pub image: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthResponse {
    pub depth: String,
    pub scale: String,
}

pub const DEPTH_SCALE: &str = "0-255";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InpaintMode {
    Remove,
    Amodal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InpaintRequest {
    pub image: String,
    pub mask: String,
    pub mode: InpaintMode,
    pub n_seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DescribeContext {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DescribeRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    pub kind: DescribeKind,
    /// Instruction template text for the describer.
    pub prompt: String,
    #[serde(default)]
    pub context: DescribeContext,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DescribeResponse {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choice: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Generate3dRequest {
    pub image: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generate3dResponse {
    pub mesh: String,
    pub format: String,
    pub native_extents: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireCamera {
    pub cx: f64,
    pub cy: f64,
    pub fx: f64,
    pub fy: f64,
    pub w: u32,
    pub h: u32,
    pub yaw_align: f64,
    pub pitch_align: f64,
}

impl From<&IsoCamera> for WireCamera {
    fn from(c: &IsoCamera) -> Self {
        WireCamera {
            cx: c.cx,
            cy: c.cy,
            fx: c.fx,
            fy: c.fy,
            w: c.image_w,
            h: c.image_h,
            yaw_align: c.yaw_align,
            pitch_align: c.pitch_align,
        }
    }
}

impl WireCamera {
    /// Rendering is orthographic, so the depth scale is irrelevant here.
    pub fn to_camera(self) -> IsoCamera {
        IsoCamera {
            cx: self.cx,
            cy: self.cy,
            fx: self.fx,
            fy: self.fy,
            alpha: crate::model::DEFAULT_ALPHA,
            yaw_align: self.yaw_align,
            pitch_align: self.pitch_align,
            image_w: self.w,
            image_h: self.h,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderRequest {
    pub mesh: String,
    pub yaw_deg: f64,
    pub size: [f64; 3],
    pub location: [f64; 3],
    pub camera: WireCamera,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedKind {
    Image,
    Text,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedRequest {
    pub kind: EmbedKind,
    /// Base64 PNG for images, raw text otherwise.
    pub payload: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRequest {
    pub image: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub score: f64,
}

/// Body of every 4xx response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(default)]
    pub detail: String,
}
