//! Deterministic offline providers.
//!
//! Scene images produced by the mock generator carry their ground-truth
//! scene in PNG metadata (`oracle.scene`), so detection, depth, inpainting
//! and description can answer from ground truth. Every answer is a pure
//! function of the request and the run seed.

use std::collections::{BTreeSet, HashMap};
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::wire::{self, *};
use super::{DescribeKind, Endpoint, ProviderError, Transport};
use crate::image::{Image, WHITE};
use crate::mesh::Mesh;
use crate::model::{yaw_sin_cos, BBox2D, DepthMap, IsoCamera, Mask, ObjectKind, Vec3};
use crate::oracle::{self, GroundTruthScene, OracleRender, SceneSpec};
use crate::prompts::TEXTURE_MARKER;
use crate::unproject::Projector;

pub const META_SCENE: &str = "oracle.scene";
pub const META_KEYWORDS: &str = "oracle.keywords";
/// Guide-image box of a crop, `x0,y0,x1,y1`; set by the orchestrator.
pub const META_CROP_BBOX: &str = "crop.bbox";

pub const MOCK_IMAGE_SIZE: u32 = 512;
pub const TEXTURE_SIZE: u32 = 64;
pub const FEATURE_SIDE: u32 = 32;
pub const TEXT_EMBED_DIM: usize = 256;

const BEDROOM: &[(&str, ObjectKind)] = &[
    ("bed", ObjectKind::Furniture),
    ("wardrobe", ObjectKind::Furniture),
    ("nightstand", ObjectKind::Furniture),
    ("desk", ObjectKind::Furniture),
    ("chair", ObjectKind::Furniture),
    ("dresser", ObjectKind::Furniture),
    ("lamp", ObjectKind::Decor),
    ("vase", ObjectKind::Decor),
    ("plant", ObjectKind::Decor),
    ("clock", ObjectKind::Decor),
];

const GENERIC: &[(&str, ObjectKind)] = &[
    ("table", ObjectKind::Furniture),
    ("chair", ObjectKind::Furniture),
    ("sofa", ObjectKind::Furniture),
    ("cabinet", ObjectKind::Furniture),
    ("bookshelf", ObjectKind::Furniture),
    ("lamp", ObjectKind::Decor),
    ("vase", ObjectKind::Decor),
    ("book", ObjectKind::Decor),
];

pub const MOCK_SURFACES: &str = "floor: light oak planks\nwall: warm beige plaster";

/// Fixture answer for the common-objects query.
pub fn common_objects(scene_type: &str) -> &'static [(&'static str, ObjectKind)] {
    if scene_type.to_lowercase().contains("bedroom") {
        BEDROOM
    } else {
        GENERIC
    }
}

pub fn keywords(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| w.len() > 2)
        .map(str::to_lowercase)
        .collect()
}

fn hash_u64(parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

pub struct MockProvider {
    seed: u64,
    renders: Mutex<HashMap<String, Arc<OracleRender>>>,
}

impl MockProvider {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            renders: Mutex::new(HashMap::new()),
        }
    }

    /// Scene generated for a prompt and candidate index.
    pub fn scene_for_prompt(&self, prompt: &str, seed: u64, index: usize) -> GroundTruthScene {
        let s = hash_u64(&[prompt.as_bytes(), &seed.to_le_bytes(), &(index as u64).to_le_bytes()]);
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let n = rng.random_range(5..=7);
        let spec = SceneSpec {
            decor: rng.random_range(1..=2),
            ..SceneSpec::default()
        };
        oracle::random_scene_with(n, s, 0.0, IsoCamera::for_image(MOCK_IMAGE_SIZE, MOCK_IMAGE_SIZE), spec)
            .expect("mock scene sizes always place")
    }

    fn render(&self, scene: &GroundTruthScene) -> Arc<OracleRender> {
        let key = hex::encode(Sha256::digest(scene.to_json().as_bytes()));
        if let Some(r) = self.renders.lock().expect("render memo").get(&key) {
            return r.clone();
        }
        let r = Arc::new(oracle::render_with_camera(scene, &scene.camera));
        self.renders
            .lock()
            .expect("render memo")
            .entry(key)
            .or_insert(r)
            .clone()
    }

    fn scene_image(&self, scene: &GroundTruthScene, keywords: &str) -> Image {
        let mut img = self.render(scene).image.clone();
        img.set_meta(META_SCENE, scene.to_json());
        img.set_meta(META_KEYWORDS, keywords);
        img
    }

    fn text2image(&self, req: Text2ImageRequest) -> Result<ImagesResponse, ProviderError> {
        let op = Endpoint::Text2Image;
        if req.prompt.trim().is_empty() {
            return Err(ProviderError::precondition(op, "prompt is empty"));
        }
        let kw = keywords(&req.prompt).into_iter().collect::<Vec<_>>().join(" ");
        let images = (0..req.n)
            .map(|i| {
                let img = if req.prompt.starts_with(TEXTURE_MARKER) {
                    texture_image(&req.prompt, req.seed ^ self.seed, i).with_meta(META_KEYWORDS, kw.clone())
                } else {
                    let scene = self.scene_for_prompt(&req.prompt, req.seed ^ self.seed, i);
                    self.scene_image(&scene, &kw)
                };
                enc(op, &img)
            })
            .collect::<Result<_, _>>()?;
        Ok(ImagesResponse { images })
    }

    fn detect(&self, req: DetectRequest) -> Result<DetectResponse, ProviderError> {
        let op = Endpoint::Detect;
        let img = dec(op, &req.image)?;
        let Some(scene) = scene_of(&img) else {
            return Ok(DetectResponse { detections: vec![] });
        };
        let vocab: BTreeSet<String> = req.vocabulary.iter().map(|v| v.to_lowercase()).collect();
        let r = self.render(&scene);
        let detections = r
            .detections
            .iter()
            .filter(|d| d.detectable() && vocab.contains(&d.label.to_lowercase()))
            .map(|d| {
                Ok(WireDetection {
                    label: d.label.clone(),
                    bbox: d.bbox2d.to_array(),
                    mask: wire::encode_mask(&d.mask).map_err(|e| ProviderError::protocol(op, e))?,
                    confidence: d.visible_fraction().min(1.0),
                })
            })
            .collect::<Result<_, ProviderError>>()?;
        Ok(DetectResponse { detections })
    }

    fn depth(&self, req: ImageRequest) -> Result<DepthResponse, ProviderError> {
        let op = Endpoint::Depth;
        let img = dec(op, &req.image)?;
        let depth = match scene_of(&img) {
            Some(scene) if (scene.camera.image_w, scene.camera.image_h) == img.dims() => self.render(&scene).depth.clone(),
            _ => {
                let (w, h) = img.dims();
                DepthMap::new(w, h, img.to_gray().into_iter().map(f64::round).collect())
                    .map_err(|e| ProviderError::protocol(op, e))?
            }
        };
        Ok(DepthResponse {
            depth: wire::encode_depth(&depth).map_err(|e| ProviderError::protocol(op, e))?,
            scale: DEPTH_SCALE.into(),
        })
    }

    fn inpaint(&self, req: InpaintRequest) -> Result<ImagesResponse, ProviderError> {
        let op = Endpoint::Inpaint;
        let img = dec(op, &req.image)?;
        let mask = wire::decode_mask(&req.mask).map_err(|e| ProviderError::protocol(op, e))?;
        if (mask.width(), mask.height()) != img.dims() {
            return Err(ProviderError::precondition(op, "mask size differs from image"));
        }
        if req.n_seeds == 0 {
            return Err(ProviderError::precondition(op, "n_seeds must be >= 1"));
        }
        let out = match req.mode {
            InpaintMode::Amodal => vec![img; req.n_seeds],
            InpaintMode::Remove => vec![self.remove(img, &mask)],
        };
        Ok(ImagesResponse {
            images: out.iter().map(|i| enc(op, i)).collect::<Result<_, _>>()?,
        })
    }

    fn remove(&self, img: Image, mask: &Mask) -> Image {
        if mask.is_empty() {
            return img;
        }
        if let Some(mut scene) = scene_of(&img) {
            if (scene.camera.image_w, scene.camera.image_h) == img.dims() {
                let r = self.render(&scene);
                for d in &r.detections {
                    if d.mask.intersection_count(mask) * 2 >= d.visible_pixels {
                        scene.hidden.insert(d.index);
                    }
                }
                let after = self.render(&scene);
                let mut out = img.clone();
                for (x, y) in mask.iter_set() {
                    out.set(x, y, after.image.get(x, y));
                }
                out.set_meta(META_SCENE, scene.to_json());
                return out;
            }
        }
        fill_with_ring_mean(&img, mask)
    }

    fn describe(&self, req: DescribeRequest) -> Result<DescribeResponse, ProviderError> {
        let op = Endpoint::Describe;
        let image = req.image.as_deref().map(|s| dec(op, s)).transpose()?;
        let candidates: Vec<Image> = req
            .context
            .candidates
            .as_deref()
            .unwrap_or_default()
            .iter()
            .map(|c| dec(op, c))
            .collect::<Result<_, _>>()?;
        let text = |t: String| DescribeResponse {
            text: Some(t),
            choice: None,
        };
        let choice = |c: usize| DescribeResponse {
            text: None,
            choice: Some(c),
        };
        Ok(match req.kind {
            DescribeKind::ObjectAppearance => {
                let img = image.ok_or_else(|| ProviderError::precondition(op, "image required"))?;
                text(self.appearance(&img))
            }
            DescribeKind::CommonObjectsForScene => {
                let scene_type = req.context.scene_type.unwrap_or_default();
                text(format_object_list(common_objects(&scene_type).iter().map(|(l, k)| (l.to_string(), *k))))
            }
            DescribeKind::ObjectsInImage => {
                let img = image.ok_or_else(|| ProviderError::precondition(op, "image required"))?;
                let listed: Vec<(String, ObjectKind)> = match scene_of(&img) {
                    Some(scene) => {
                        let r = self.render(&scene);
                        r.detections.iter().map(|d| (d.label.clone(), d.kind)).collect()
                    }
                    None => Vec::new(),
                };
                text(format_object_list(listed.into_iter()))
            }
            DescribeKind::SurfaceTexture => text(MOCK_SURFACES.into()),
            DescribeKind::JudgeInpaint => {
                if candidates.is_empty() {
                    return Err(ProviderError::precondition(op, "no candidates"));
                }
                let reference = image.as_ref().unwrap_or(&candidates[0]);
                let truth = self.isolated_crop(reference);
                choice(match truth {
                    Some(t) => argmin(candidates.iter().map(|c| pixel_distance(c, &t))),
                    None => 0,
                })
            }
            DescribeKind::PickBestCrop => {
                if candidates.is_empty() {
                    return Err(ProviderError::precondition(op, "no candidates"));
                }
                choice(argmin(candidates.iter().map(|c| -(c.count_non_white() as f64))))
            }
        })
    }

    /// Ground-truth object shown in a crop: best IoU between the crop box
    /// and the visible objects of the crop's scene.
    fn crop_object(&self, crop: &Image) -> Option<(GroundTruthScene, usize, BBox2D)> {
        let scene = scene_of(crop)?;
        let bbox = crop_bbox(crop)?;
        let r = self.render(&scene);
        let best = r
            .detections
            .iter()
            .map(|d| (d.bbox2d.iou(&bbox), d.index))
            .filter(|(iou, _)| *iou > 0.0)
            .max_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)))?;
        Some((scene, best.1, bbox))
    }

    fn appearance(&self, crop: &Image) -> String {
        match self.crop_object(crop) {
            Some((scene, i, _)) => {
                let o = &scene.objects[i];
                let e = o.bbox.extents();
                format!("a {} with extents {:.4}x{:.4}x{:.4}", o.label, e.x, e.y, e.z)
            }
            None => "a plain object with extents 1x1x1".into(),
        }
    }

    /// The object alone on white, cut to the same window as the crop.
    fn isolated_crop(&self, crop: &Image) -> Option<Image> {
        let (mut scene, index, bbox) = self.crop_object(crop)?;
        scene.hidden = (0..scene.objects.len()).filter(|&i| i != index).collect();
        let full = self.render(&scene);
        let (x0, y0, w, h) = bbox.pixel_window(scene.camera.image_w, scene.camera.image_h);
        Some(full.image.crop(x0, y0, w, h))
    }

    fn generate3d(&self, req: Generate3dRequest) -> Result<Generate3dResponse, ProviderError> {
        let op = Endpoint::Generate3d;
        if req.description.trim().is_empty() {
            return Err(ProviderError::precondition(op, "description is empty"));
        }
        dec(op, &req.image)?;
        let extents = parse_extents(&req.description).unwrap_or(Vec3::splat(1.0));
        let mesh = Mesh::cuboid(extents);
        Ok(Generate3dResponse {
            mesh: wire::encode_mesh(&mesh),
            format: "obj".into(),
            native_extents: extents.into(),
        })
    }

    fn render_silhouette(&self, req: RenderRequest) -> Result<ImageResponse, ProviderError> {
        let op = Endpoint::Render;
        let mesh = wire::decode_mesh(&req.mesh).map_err(|e| ProviderError::protocol(op, e))?;
        let size = Vec3::from(req.size);
        if !size.all_positive() {
            return Err(ProviderError::precondition(op, "size must be > 0"));
        }
        let cam = req.camera.to_camera();
        cam.validate_window().map_err(|e| ProviderError::precondition(op, e.to_string()))?;
        let img = silhouette(&mesh, req.yaw_deg, size, Vec3::from(req.location), &cam);
        Ok(ImageResponse { image: enc(op, &img)? })
    }

    fn embed(&self, req: EmbedRequest) -> Result<EmbedResponse, ProviderError> {
        let op = Endpoint::Embed;
        let vector = match req.kind {
            EmbedKind::Image => image_features(&dec(op, &req.payload)?),
            EmbedKind::Text => {
                text_embedding(&req.payload).ok_or_else(|| ProviderError::precondition(op, "text has no words"))?
            }
        };
        Ok(EmbedResponse { vector })
    }

    fn score(&self, req: ScoreRequest) -> Result<ScoreResponse, ProviderError> {
        let op = Endpoint::Score;
        let img = dec(op, &req.image)?;
        let have = keywords(img.meta_get(META_KEYWORDS).unwrap_or(""));
        Ok(ScoreResponse {
            score: keyword_score(&have, &req.text),
        })
    }
}

/// Oracle render of a scene carrying the scene as ground truth, usable as
/// a from-image pipeline input under the mock providers.
pub fn guide_image(scene: &GroundTruthScene) -> Image {
    let mut img = oracle::render_with_camera(scene, &scene.camera).image;
    img.set_meta(META_SCENE, scene.to_json());
    img
}

/// `100 * |words(text) & have| / |words(text)|`.
pub fn keyword_score(have: &BTreeSet<String>, text: &str) -> f64 {
    let want = keywords(text);
    if want.is_empty() {
        return 0.0;
    }
    100.0 * want.intersection(have).count() as f64 / want.len() as f64
}

fn enc(op: Endpoint, img: &Image) -> Result<String, ProviderError> {
    wire::encode_image(img).map_err(|e| ProviderError::protocol(op, e))
}

fn dec(op: Endpoint, s: &str) -> Result<Image, ProviderError> {
    wire::decode_image(s).map_err(|e| ProviderError::precondition(op, format!("bad image: {e}")))
}

fn scene_of(img: &Image) -> Option<GroundTruthScene> {
    GroundTruthScene::from_json(img.meta_get(META_SCENE)?).ok()
}

fn crop_bbox(img: &Image) -> Option<BBox2D> {
    let v: Vec<f64> = img
        .meta_get(META_CROP_BBOX)?
        .split(',')
        .map(|p| p.trim().parse().ok())
        .collect::<Option<_>>()?;
    if v.len() != 4 {
        return None;
    }
    BBox2D::new(v[0], v[1], v[2], v[3]).ok()
}

fn format_object_list(items: impl Iterator<Item = (String, ObjectKind)>) -> String {
    let mut seen = BTreeSet::new();
    items
        .filter(|(l, _)| seen.insert(l.clone()))
        .map(|(l, k)| format!("{}: {}", k.as_str(), l))
        .collect::<Vec<_>>()
        .join("\n")
}

fn argmin(scores: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, s) in scores.enumerate() {
        if s < best.1 {
            best = (i, s);
        }
    }
    best.0
}

/// L2 distance over RGB; images of different size are maximally distant.
pub fn pixel_distance(a: &Image, b: &Image) -> f64 {
    if a.dims() != b.dims() {
        return f64::INFINITY;
    }
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (f64::from(*x) - f64::from(*y)).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Parses `extents WxDxH` out of a description.
pub fn parse_extents(text: &str) -> Option<Vec3> {
    let rest = &text[text.find("extents")? + "extents".len()..];
    let token = rest.split_whitespace().next()?;
    let v: Vec<f64> = token.split('x').map(|p| p.parse().ok()).collect::<Option<_>>()?;
    match v.as_slice() {
        [x, y, z] if *x > 0.0 && *y > 0.0 && *z > 0.0 => Some(Vec3::new(*x, *y, *z)),
        _ => None,
    }
}

/// Masked pixels set to the mean color of the unmasked pixels bordering
/// the mask, or of the image border when the mask covers everything.
pub fn fill_with_ring_mean(img: &Image, mask: &Mask) -> Image {
    let (w, h) = img.dims();
    let mut ring: Vec<[u8; 3]> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) {
                continue;
            }
            let touches = [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)].iter().any(|(dx, dy)| {
                let (nx, ny) = (i64::from(x) + dx, i64::from(y) + dy);
                nx >= 0 && ny >= 0 && nx < i64::from(w) && ny < i64::from(h) && mask.get(nx as u32, ny as u32)
            });
            if touches {
                ring.push(img.get(x, y));
            }
        }
    }
    if ring.is_empty() {
        for y in 0..h {
            for x in 0..w {
                if x == 0 || y == 0 || x == w - 1 || y == h - 1 {
                    ring.push(img.get(x, y));
                }
            }
        }
    }
    let n = ring.len() as f64;
    let mean = [0, 1, 2].map(|k| (ring.iter().map(|p| f64::from(p[k])).sum::<f64>() / n).round() as u8);
    let mut out = img.clone();
    for (x, y) in mask.iter_set() {
        out.set(x, y, mean);
    }
    out
}

fn texture_image(prompt: &str, seed: u64, index: usize) -> Image {
    let s = hash_u64(&[prompt.as_bytes(), &seed.to_le_bytes(), &(index as u64).to_le_bytes()]);
    let mut rng = ChaCha8Rng::seed_from_u64(s);
    let base: [u8; 3] = [rng.random_range(90..230), rng.random_range(90..230), rng.random_range(90..230)];
    let mut img = Image::new(TEXTURE_SIZE, TEXTURE_SIZE, base);
    for y in 0..TEXTURE_SIZE {
        for x in 0..TEXTURE_SIZE {
            if (x / 8 + y / 8) % 2 == 0 {
                img.set(x, y, base.map(|c| c.saturating_sub(20)));
            }
        }
    }
    img
}

/// Grayscale, downsampled to at most 32 pixels per side, flattened.
pub fn image_features(img: &Image) -> Vec<f64> {
    let (w, h) = img.dims();
    let small = if w > FEATURE_SIDE || h > FEATURE_SIDE {
        img.resized(w.min(FEATURE_SIDE), h.min(FEATURE_SIDE))
    } else {
        img.clone()
    };
    small.to_gray()
}

/// L2-normalized hashed bag of words; `None` for text without words.
pub fn text_embedding(text: &str) -> Option<Vec<f64>> {
    let mut v = vec![0.0; TEXT_EMBED_DIM];
    let mut any = false;
    for word in text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
    {
        let i = (hash_u64(&[word.as_bytes()]) % TEXT_EMBED_DIM as u64) as usize;
        v[i] += 1.0;
        any = true;
    }
    if !any {
        return None;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    Some(v.into_iter().map(|x| x / norm).collect())
}

/// Black silhouette of the transformed mesh on white, orthographic through
/// the camera, sampled at pixel centers.
pub fn silhouette(mesh: &Mesh, yaw: f64, size: Vec3, location: Vec3, cam: &IsoCamera) -> Image {
    let (lo, hi) = mesh.bounds();
    let c0 = (lo + hi) * 0.5;
    let native = hi - lo;
    let scale = Vec3::new(
        if native.x > 0.0 { size.x / native.x } else { 0.0 },
        if native.y > 0.0 { size.y / native.y } else { 0.0 },
        if native.z > 0.0 { size.z / native.z } else { 0.0 },
    );
    let (s, c) = yaw_sin_cos(yaw);
    let proj = Projector::new(cam);
    let pts: Vec<(f64, f64)> = mesh
        .vertices
        .iter()
        .map(|v| {
            let l = (*v - c0).scale(scale);
            let w = Vec3::new(c * l.x - s * l.y, s * l.x + c * l.y, l.z) + location;
            let (px, py, _) = proj.project(w);
            (px, py)
        })
        .collect();
    let (w, h) = (cam.image_w, cam.image_h);
    let mut img = Image::new(w, h, WHITE);
    for t in &mesh.triangles {
        let [a, b, c] = t.map(|i| pts[i as usize]);
        let area = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
        if area.abs() < 1e-12 {
            continue;
        }
        let x0 = a.0.min(b.0).min(c.0).floor().max(0.0) as u32;
        let y0 = a.1.min(b.1).min(c.1).floor().max(0.0) as u32;
        let x1 = (a.0.max(b.0).max(c.0).ceil().min(f64::from(w))) as u32;
        let y1 = (a.1.max(b.1).max(c.1).ceil().min(f64::from(h))) as u32;
        for y in y0..y1 {
            for x in x0..x1 {
                let p = (f64::from(x) + 0.5, f64::from(y) + 0.5);
                let e = |u: (f64, f64), v: (f64, f64)| (v.0 - u.0) * (p.1 - u.1) - (v.1 - u.1) * (p.0 - u.0);
                let (e0, e1, e2) = (e(a, b), e(b, c), e(c, a));
                let inside = if area > 0.0 {
                    e0 >= 0.0 && e1 >= 0.0 && e2 >= 0.0
                } else {
                    e0 <= 0.0 && e1 <= 0.0 && e2 <= 0.0
                };
                if inside {
                    img.set(x, y, [0, 0, 0]);
                }
            }
        }
    }
    img
}

fn parse<T: serde::de::DeserializeOwned>(op: Endpoint, body: &Value) -> Result<T, ProviderError> {
    serde_json::from_value(body.clone()).map_err(|e| ProviderError::precondition(op, format!("bad request: {e}")))
}

fn to_value<T: serde::Serialize>(op: Endpoint, v: T) -> Result<Value, ProviderError> {
    serde_json::to_value(v).map_err(|e| ProviderError::protocol(op, e))
}

impl Transport for MockProvider {
    fn call(&self, endpoint: Endpoint, body: &Value) -> Result<Value, ProviderError> {
        let op = endpoint;
        match endpoint {
            Endpoint::Text2Image => to_value(op, self.text2image(parse(op, body)?)?),
            Endpoint::Detect => to_value(op, self.detect(parse(op, body)?)?),
            Endpoint::Depth => to_value(op, self.depth(parse(op, body)?)?),
            Endpoint::Inpaint => to_value(op, self.inpaint(parse(op, body)?)?),
            Endpoint::Describe => to_value(op, self.describe(parse(op, body)?)?),
            Endpoint::Generate3d => to_value(op, self.generate3d(parse(op, body)?)?),
            Endpoint::Render => to_value(op, self.render_silhouette(parse(op, body)?)?),
            Endpoint::Embed => to_value(op, self.embed(parse(op, body)?)?),
            Endpoint::Score => to_value(op, self.score(parse(op, body)?)?),
        }
    }

    fn describe_backend(&self) -> String {
        format!("mock-{}", env!("CARGO_PKG_VERSION"))
    }
}
