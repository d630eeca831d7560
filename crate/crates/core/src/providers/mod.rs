//! Boundary to every external model.
//!
//! All providers speak one JSON wire protocol (see [`wire`]). A
//! [`Transport`] carries one request to one endpoint; the typed
//! [`ProviderClient`] encodes and decodes around it, so mocks, HTTP
//! services and the cache are interchangeable.

pub mod cache;
pub mod http;
pub mod mock;
pub mod wire;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::image::Image;
use crate::mesh::Mesh;
use crate::model::{BBox2D, DepthMap, IsoCamera, Mask, ObjectKind, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Endpoint {
    Text2Image,
    Detect,
    Depth,
    Inpaint,
    Describe,
    Generate3d,
    Render,
    Embed,
    Score,
}

impl Endpoint {
    pub const ALL: [Endpoint; 9] = [
        Endpoint::Text2Image,
        Endpoint::Detect,
        Endpoint::Depth,
        Endpoint::Inpaint,
        Endpoint::Describe,
        Endpoint::Generate3d,
        Endpoint::Render,
        Endpoint::Embed,
        Endpoint::Score,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Endpoint::Text2Image => "text2image",
            Endpoint::Detect => "detect",
            Endpoint::Depth => "depth",
            Endpoint::Inpaint => "inpaint",
            Endpoint::Describe => "describe",
            Endpoint::Generate3d => "generate3d",
            Endpoint::Render => "render",
            Endpoint::Embed => "embed",
            Endpoint::Score => "score",
        }
    }

    pub fn path(self) -> String {
        format!("/v1/{}", self.name())
    }

    pub fn from_name(s: &str) -> Option<Endpoint> {
        Endpoint::ALL.into_iter().find(|e| e.name() == s)
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProviderError {
    #[error("{op} [{input_hash}]: provider unreachable at {url}: {message}")]
    Unreachable {
        op: String,
        input_hash: String,
        url: String,
        message: String,
    },
    #[error("{op} [{input_hash}]: timed out after {attempts} attempt(s)")]
    Timeout {
        op: String,
        input_hash: String,
        attempts: u32,
    },
    #[error("{op} [{input_hash}]: rejected with status {status}: {error}: {detail}")]
    Rejected {
        op: String,
        input_hash: String,
        status: u16,
        error: String,
        detail: String,
    },
    #[error("{op} [{input_hash}]: server error {status}: {message}")]
    Server {
        op: String,
        input_hash: String,
        status: u16,
        message: String,
    },
    #[error("{op}: malformed response: {message}")]
    Protocol { op: String, message: String },
    #[error("{op}: precondition failed: {message}")]
    Precondition { op: String, message: String },
}

impl ProviderError {
    pub fn protocol(op: Endpoint, message: impl fmt::Display) -> Self {
        ProviderError::Protocol {
            op: op.name().into(),
            message: message.to_string(),
        }
    }

    pub fn precondition(op: Endpoint, message: impl Into<String>) -> Self {
        ProviderError::Precondition {
            op: op.name().into(),
            message: message.into(),
        }
    }

    pub fn is_unreachable(&self) -> bool {
        matches!(self, ProviderError::Unreachable { .. } | ProviderError::Timeout { .. })
    }
}

/// Short content hash of a request body, used in errors and logs.
pub fn input_hash(endpoint: Endpoint, body: &Value) -> String {
    let mut h = Sha256::new();
    h.update(endpoint.path().as_bytes());
    h.update(b"\n");
    h.update(body.to_string().as_bytes());
    hex::encode(&h.finalize()[..8])
}

/// Carries one JSON request to one endpoint.
pub trait Transport: Send + Sync {
    fn call(&self, endpoint: Endpoint, body: &Value) -> Result<Value, ProviderError>;

    /// Version string reported in the manifest.
    fn describe_backend(&self) -> String;

    /// Backend per endpoint name.
    fn backends(&self) -> BTreeMap<String, String> {
        Endpoint::ALL
            .into_iter()
            .map(|e| (e.name().to_string(), self.describe_backend()))
            .collect()
    }
}

/// Sends each endpoint to its own transport, falling back to a default.
pub struct Router {
    default: Arc<dyn Transport>,
    routes: BTreeMap<Endpoint, Arc<dyn Transport>>,
}

impl Router {
    pub fn new(default: Arc<dyn Transport>) -> Self {
        Self {
            default,
            routes: BTreeMap::new(),
        }
    }

    pub fn route(mut self, endpoint: Endpoint, t: Arc<dyn Transport>) -> Self {
        self.routes.insert(endpoint, t);
        self
    }

    fn pick(&self, endpoint: Endpoint) -> &Arc<dyn Transport> {
        self.routes.get(&endpoint).unwrap_or(&self.default)
    }

}

impl Transport for Router {
    fn call(&self, endpoint: Endpoint, body: &Value) -> Result<Value, ProviderError> {
        self.pick(endpoint).call(endpoint, body)
    }

    fn describe_backend(&self) -> String {
        "router".into()
    }

    fn backends(&self) -> BTreeMap<String, String> {
        Endpoint::ALL
            .into_iter()
            .map(|e| (e.name().to_string(), self.pick(e).describe_backend()))
            .collect()
    }
}

/// One detector hit.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub label: String,
    pub bbox: BBox2D,
    pub mask: Mask,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DescribeKind {
    ObjectAppearance,
    CommonObjectsForScene,
    ObjectsInImage,
    SurfaceTexture,
    JudgeInpaint,
    PickBestCrop,
}

impl DescribeKind {
    pub fn returns_choice(self) -> bool {
        matches!(self, DescribeKind::JudgeInpaint | DescribeKind::PickBestCrop)
    }
}

/// A labelled entry of an object list returned by the describer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabularyEntry {
    pub label: String,
    pub kind: ObjectKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DescribeOutput {
    Text(String),
    Choice(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedAsset {
    pub mesh: Mesh,
    pub native_extents: Vec3,
}

pub trait ImageGenerator: Send + Sync {
    fn text2image(&self, prompt: &str, n: usize, seed: u64) -> Result<Vec<Image>, ProviderError>;
}

pub trait Detector: Send + Sync {
    fn detect(&self, image: &Image, vocabulary: &[String]) -> Result<Vec<Detection>, ProviderError>;
}

pub trait DepthEstimator: Send + Sync {
    fn depth(&self, image: &Image) -> Result<DepthMap, ProviderError>;
}

pub trait Inpainter: Send + Sync {
    fn inpaint_remove(&self, image: &Image, mask: &Mask) -> Result<Image, ProviderError>;
    fn inpaint_amodal(&self, crop: &Image, mask: &Mask, n_seeds: usize) -> Result<Vec<Image>, ProviderError>;
}

pub trait Describer: Send + Sync {
    /// `prompt` is the rendered instruction template; `scene_type` and
    /// `candidates` fill the context for list and judging queries.
    fn describe(
        &self,
        kind: DescribeKind,
        image: Option<&Image>,
        scene_type: Option<&str>,
        candidates: &[Image],
    ) -> Result<DescribeOutput, ProviderError>;
}

pub trait AssetGenerator: Send + Sync {
    fn generate3d(&self, crop: &Image, description: &str) -> Result<GeneratedAsset, ProviderError>;
}

pub trait Renderer: Send + Sync {
    fn render(&self, mesh: &Mesh, yaw: f64, size: Vec3, location: Vec3, cam: &IsoCamera) -> Result<Image, ProviderError>;
}

pub trait FeatureExtractor: Send + Sync {
    fn image_features(&self, image: &Image) -> Result<Vec<f64>, ProviderError>;
}

pub trait TextEmbedder: Send + Sync {
    fn text_embedding(&self, text: &str) -> Result<Vec<f64>, ProviderError>;
}

pub trait ImageTextScorer: Send + Sync {
    fn image_text_score(&self, image: &Image, text: &str) -> Result<f64, ProviderError>;
}

/// Typed access to every provider role over one transport.
#[derive(Clone)]
pub struct ProviderClient {
    transport: Arc<dyn Transport>,
}

impl ProviderClient {
    pub fn new(transport: Arc<dyn Transport>) -> Self {
        Self { transport }
    }

    pub fn transport(&self) -> &Arc<dyn Transport> {
        &self.transport
    }

    fn call<Req: Serialize, Resp: serde::de::DeserializeOwned>(
        &self,
        endpoint: Endpoint,
        req: &Req,
    ) -> Result<Resp, ProviderError> {
        let body = serde_json::to_value(req).map_err(|e| ProviderError::protocol(endpoint, e))?;
        let out = self.transport.call(endpoint, &body)?;
        serde_json::from_value(out).map_err(|e| ProviderError::protocol(endpoint, e))
    }
}

fn enc_image(op: Endpoint, img: &Image) -> Result<String, ProviderError> {
    wire::encode_image(img).map_err(|e| ProviderError::protocol(op, e))
}

fn dec_image(op: Endpoint, s: &str) -> Result<Image, ProviderError> {
    wire::decode_image(s).map_err(|e| ProviderError::protocol(op, e))
}

impl ImageGenerator for ProviderClient {
    fn text2image(&self, prompt: &str, n: usize, seed: u64) -> Result<Vec<Image>, ProviderError> {
        let op = Endpoint::Text2Image;
        if prompt.trim().is_empty() {
            return Err(ProviderError::precondition(op, "prompt is empty"));
        }
        if n == 0 {
            return Err(ProviderError::precondition(op, "n must be >= 1"));
        }
        let resp: wire::ImagesResponse = self.call(
            op,
            &wire::Text2ImageRequest {
                prompt: prompt.into(),
                n,
                seed,
            },
        )?;
        if resp.images.len() != n {
            return Err(ProviderError::protocol(
                op,
                format!("asked for {n} images, got {}", resp.images.len()),
            ));
        }
        let images = resp
            .images
            .iter()
            .map(|s| dec_image(op, s))
            .collect::<Result<Vec<_>, _>>()?;
        if images.windows(2).any(|w| w[0].dims() != w[1].dims()) {
            return Err(ProviderError::protocol(op, "images differ in resolution"));
        }
        Ok(images)
    }
}

impl Detector for ProviderClient {
    fn detect(&self, image: &Image, vocabulary: &[String]) -> Result<Vec<Detection>, ProviderError> {
        let op = Endpoint::Detect;
        if vocabulary.is_empty() {
            return Err(ProviderError::precondition(op, "vocabulary is empty"));
        }
        let resp: wire::DetectResponse = self.call(
            op,
            &wire::DetectRequest {
                image: enc_image(op, image)?,
                vocabulary: vocabulary.to_vec(),
            },
        )?;
        let (w, h) = image.dims();
        resp.detections
            .into_iter()
            .map(|d| {
                let bbox = BBox2D::new(d.bbox[0], d.bbox[1], d.bbox[2], d.bbox[3])
                    .and_then(|b| b.clamped(w, h))
                    .map_err(|e| ProviderError::protocol(op, e))?;
                let mask = wire::decode_mask(&d.mask).map_err(|e| ProviderError::protocol(op, e))?;
                if mask.width() != w || mask.height() != h {
                    return Err(ProviderError::protocol(op, "mask size differs from image"));
                }
                if !(0.0..=1.0).contains(&d.confidence) {
                    return Err(ProviderError::protocol(op, "confidence outside [0, 1]"));
                }
                Ok(Detection {
                    label: d.label,
                    mask: mask.clipped_to(&bbox),
                    bbox,
                    confidence: d.confidence,
                })
            })
            .collect()
    }
}

impl DepthEstimator for ProviderClient {
    fn depth(&self, image: &Image) -> Result<DepthMap, ProviderError> {
        let op = Endpoint::Depth;
        let resp: wire::DepthResponse = self.call(
            op,
            &wire::ImageRequest {
                image: enc_image(op, image)?,
            },
        )?;
        let d = wire::decode_depth(&resp.depth).map_err(|e| ProviderError::protocol(op, e))?;
        if (d.width(), d.height()) != image.dims() {
            return Err(ProviderError::protocol(op, "depth resolution differs from image"));
        }
        Ok(d)
    }
}

impl Inpainter for ProviderClient {
    fn inpaint_remove(&self, image: &Image, mask: &Mask) -> Result<Image, ProviderError> {
        let op = Endpoint::Inpaint;
        if (mask.width(), mask.height()) != image.dims() {
            return Err(ProviderError::precondition(op, "mask size differs from image"));
        }
        let resp: wire::ImagesResponse = self.call(
            op,
            &wire::InpaintRequest {
                image: enc_image(op, image)?,
                mask: wire::encode_mask(mask).map_err(|e| ProviderError::protocol(op, e))?,
                mode: wire::InpaintMode::Remove,
                n_seeds: 1,
            },
        )?;
        let img = resp
            .images
            .first()
            .ok_or_else(|| ProviderError::protocol(op, "no image returned"))?;
        dec_image(op, img)
    }

    fn inpaint_amodal(&self, crop: &Image, mask: &Mask, n_seeds: usize) -> Result<Vec<Image>, ProviderError> {
        let op = Endpoint::Inpaint;
        if n_seeds == 0 {
            return Err(ProviderError::precondition(op, "n_seeds must be >= 1"));
        }
        let resp: wire::ImagesResponse = self.call(
            op,
            &wire::InpaintRequest {
                image: enc_image(op, crop)?,
                mask: wire::encode_mask(mask).map_err(|e| ProviderError::protocol(op, e))?,
                mode: wire::InpaintMode::Amodal,
                n_seeds,
            },
        )?;
        if resp.images.len() != n_seeds {
            return Err(ProviderError::protocol(op, "wrong number of candidates"));
        }
        resp.images.iter().map(|s| dec_image(op, s)).collect()
    }
}

impl Describer for ProviderClient {
    fn describe(
        &self,
        kind: DescribeKind,
        image: Option<&Image>,
        scene_type: Option<&str>,
        candidates: &[Image],
    ) -> Result<DescribeOutput, ProviderError> {
        let op = Endpoint::Describe;
        let req = wire::DescribeRequest {
            image: image.map(|i| enc_image(op, i)).transpose()?,
            kind,
            prompt: crate::prompts::describe_template(kind).to_string(),
            context: wire::DescribeContext {
                scene_type: scene_type.map(str::to_string),
                candidates: if candidates.is_empty() {
                    None
                } else {
                    Some(
                        candidates
                            .iter()
                            .map(|c| enc_image(op, c))
                            .collect::<Result<_, _>>()?,
                    )
                },
            },
        };
        let resp: wire::DescribeResponse = self.call(op, &req)?;
        if kind.returns_choice() {
            match resp.choice {
                Some(c) if c < candidates.len() => Ok(DescribeOutput::Choice(c)),
                Some(c) => Err(ProviderError::protocol(op, format!("choice {c} out of range"))),
                None => Err(ProviderError::protocol(op, "missing choice")),
            }
        } else {
            resp.text
                .map(DescribeOutput::Text)
                .ok_or_else(|| ProviderError::protocol(op, "missing text"))
        }
    }
}

impl AssetGenerator for ProviderClient {
    fn generate3d(&self, crop: &Image, description: &str) -> Result<GeneratedAsset, ProviderError> {
        let op = Endpoint::Generate3d;
        if description.trim().is_empty() {
            return Err(ProviderError::precondition(op, "description is empty"));
        }
        let resp: wire::Generate3dResponse = self.call(
            op,
            &wire::Generate3dRequest {
                image: enc_image(op, crop)?,
                description: description.into(),
            },
        )?;
        if resp.format != "obj" {
            return Err(ProviderError::protocol(op, format!("unsupported mesh format {}", resp.format)));
        }
        let mesh = wire::decode_mesh(&resp.mesh).map_err(|e| ProviderError::protocol(op, e))?;
        let native_extents = Vec3::from(resp.native_extents);
        if !native_extents.all_positive() {
            return Err(ProviderError::protocol(op, "native extents must be > 0"));
        }
        Ok(GeneratedAsset { mesh, native_extents })
    }
}

impl Renderer for ProviderClient {
    fn render(&self, mesh: &Mesh, yaw: f64, size: Vec3, location: Vec3, cam: &IsoCamera) -> Result<Image, ProviderError> {
        let op = Endpoint::Render;
        if !size.all_positive() {
            return Err(ProviderError::precondition(op, "size must be > 0"));
        }
        let resp: wire::ImageResponse = self.call(
            op,
            &wire::RenderRequest {
                mesh: wire::encode_mesh(mesh),
                yaw_deg: crate::model::normalize_yaw(yaw),
                size: size.into(),
                location: location.into(),
                camera: wire::WireCamera::from(cam),
            },
        )?;
        let img = dec_image(op, &resp.image)?;
        if img.dims() != (cam.image_w, cam.image_h) {
            return Err(ProviderError::protocol(op, "render size differs from camera"));
        }
        Ok(img)
    }
}

impl FeatureExtractor for ProviderClient {
    fn image_features(&self, image: &Image) -> Result<Vec<f64>, ProviderError> {
        let op = Endpoint::Embed;
        let resp: wire::EmbedResponse = self.call(
            op,
            &wire::EmbedRequest {
                kind: wire::EmbedKind::Image,
                payload: enc_image(op, image)?,
            },
        )?;
        Ok(resp.vector)
    }
}

impl TextEmbedder for ProviderClient {
    fn text_embedding(&self, text: &str) -> Result<Vec<f64>, ProviderError> {
        let op = Endpoint::Embed;
        let resp: wire::EmbedResponse = self.call(
            op,
            &wire::EmbedRequest {
                kind: wire::EmbedKind::Text,
                payload: text.into(),
            },
        )?;
        Ok(resp.vector)
    }
}

impl ImageTextScorer for ProviderClient {
    fn image_text_score(&self, image: &Image, text: &str) -> Result<f64, ProviderError> {
        let op = Endpoint::Score;
        let resp: wire::ScoreResponse = self.call(
            op,
            &wire::ScoreRequest {
                image: enc_image(op, image)?,
                text: text.into(),
            },
        )?;
        if !resp.score.is_finite() {
            return Err(ProviderError::protocol(op, "score is not finite"));
        }
        Ok(resp.score)
    }
}
