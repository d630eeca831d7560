//! End-to-end pipeline: guide image, vocabulary, two-pass detection, crops
//! and descriptions, layout lifting, assets, poses, post-processing,
//! surfaces and export. Also the single-object edit flow.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::assembly::{self, export_scene, place_floor, place_walls_in, AssemblyError, SceneAssets, FLOOR_TEXTURE_PATH};
use crate::config::Config;
use crate::image::{encode_depth_png16, encode_mask_png, Image, WHITE};
use crate::mesh::Mesh;
use crate::model::{
    BBox2D, BBox3D, DepthMap, DetectedObject, Mask, MeshRef, ObjectId, ObjectKind, RunWarning, SceneManifest,
    SceneObject,
};
use crate::pose::{select_pose, PoseError};
use crate::postprocess::{detect_repetitions, postprocess};
use crate::prompts::{guide_prompt, parse_object_list, parse_surfaces, sanitize_appearance, texture_prompt};
use crate::providers::mock::META_CROP_BBOX;
use crate::providers::{
    AssetGenerator, DepthEstimator, DescribeKind, DescribeOutput, Describer, Detection, Detector, GeneratedAsset, ImageGenerator,
    ImageTextScorer, Inpainter, ProviderClient, ProviderError, VocabularyEntry,
};
use crate::runlog::RunLog;
use crate::unproject::{lift_mask, Trim};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Guide,
    Vocabulary,
    Detect,
    Crops,
    Depth,
    Lift,
    Repetitions,
    Assets,
    Pose,
    Postprocess,
    Surfaces,
    Export,
    Edit,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Guide => "guide",
            Stage::Vocabulary => "vocabulary",
            Stage::Detect => "detect",
            Stage::Crops => "crops",
            Stage::Depth => "depth",
            Stage::Lift => "lift",
            Stage::Repetitions => "repetitions",
            Stage::Assets => "assets",
            Stage::Pose => "pose",
            Stage::Postprocess => "postprocess",
            Stage::Surfaces => "surfaces",
            Stage::Export => "export",
            Stage::Edit => "edit",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("stage {stage}{}: {source}", object_suffix(.object))]
    Provider {
        stage: Stage,
        object: Option<ObjectId>,
        source: ProviderError,
    },
    #[error("no acceptable guide image (scores: {scores:?}, gate {gate})")]
    NoGuideImage { scores: Vec<f64>, gate: f64 },
    #[error("empty vocabulary")]
    EmptyVocabulary,
    #[error("no objects detected")]
    NoDetections,
    #[error("no object survived the {0} stage")]
    NothingLeft(Stage),
    #[error("unknown object {0}")]
    UnknownObject(ObjectId),
    #[error("stage {stage}: {source}")]
    Assembly { stage: Stage, source: AssemblyError },
    #[error("stage {stage}: {message}")]
    Other { stage: Stage, message: String },
}

fn object_suffix(o: &Option<ObjectId>) -> String {
    o.map(|id| format!(" (object {id})")).unwrap_or_default()
}

impl PipelineError {
    fn provider(stage: Stage, object: Option<ObjectId>) -> impl FnOnce(ProviderError) -> PipelineError {
        move |source| PipelineError::Provider { stage, object, source }
    }

    pub fn is_unreachable(&self) -> bool {
        matches!(self, PipelineError::Provider { source, .. } if source.is_unreachable())
    }
}

pub const STAGE_ORDER: [Stage; 12] = [
    Stage::Guide,
    Stage::Vocabulary,
    Stage::Detect,
    Stage::Crops,
    Stage::Depth,
    Stage::Lift,
    Stage::Repetitions,
    Stage::Assets,
    Stage::Pose,
    Stage::Postprocess,
    Stage::Surfaces,
    Stage::Export,
];

/// Highest-scoring candidate at or above the gate; ties go to the lowest
/// index.
pub fn acquire_guide_image(
    prompt: &str,
    seed: u64,
    n: usize,
    gate: f64,
    generator: &dyn ImageGenerator,
    scorer: &dyn ImageTextScorer,
) -> Result<(Image, f64), PipelineError> {
    let err = PipelineError::provider(Stage::Guide, None);
    let candidates = generator.text2image(&guide_prompt(prompt), n, seed).map_err(err)?;
    let mut scores = Vec::with_capacity(candidates.len());
    for c in &candidates {
        scores.push(scorer.image_text_score(c, prompt).map_err(PipelineError::provider(Stage::Guide, None))?);
    }
    let best = scores
        .iter()
        .enumerate()
        .filter(|(_, s)| **s >= gate)
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(i, s)| (i, *s));
    match best {
        Some((i, s)) => Ok((candidates.into_iter().nth(i).expect("index in range"), s)),
        None => Err(PipelineError::NoGuideImage { scores, gate }),
    }
}

/// Union of the scene-type list and the image-specific list, deduplicated
/// case-insensitively; the first occurrence decides the kind.
pub fn build_detection_vocabulary(
    scene_type: &str,
    guide: &Image,
    describer: &dyn Describer,
) -> Result<Vec<VocabularyEntry>, PipelineError> {
    let ask = |kind, image| -> Result<Vec<VocabularyEntry>, PipelineError> {
        match describer
            .describe(kind, image, Some(scene_type), &[])
            .map_err(PipelineError::provider(Stage::Vocabulary, None))?
        {
            DescribeOutput::Text(t) => Ok(parse_object_list(&t).unwrap_or_default()),
            DescribeOutput::Choice(_) => Ok(Vec::new()),
        }
    };
    let common = ask(DescribeKind::CommonObjectsForScene, None)?;
    let specific = ask(DescribeKind::ObjectsInImage, Some(guide))?;
    let mut seen = BTreeSet::new();
    let vocab: Vec<VocabularyEntry> = common
        .into_iter()
        .chain(specific)
        .filter(|e| seen.insert(e.label.to_lowercase()))
        .collect();
    if vocab.is_empty() {
        return Err(PipelineError::EmptyVocabulary);
    }
    Ok(vocab)
}

/// A detection before crops and descriptions.
#[derive(Debug, Clone)]
pub struct RawDetection {
    pub label: String,
    pub kind: ObjectKind,
    pub bbox: BBox2D,
    pub mask: Mask,
    pub confidence: f64,
    pub pass: u8,
}

#[derive(Debug, Clone)]
pub struct TwoPass {
    /// Furniture (pass 2), then decor of pass 1, then decor found only in
    /// pass 2.
    pub detections: Vec<RawDetection>,
    /// Guide image with the pass-1 decor removed.
    pub cleaned: Image,
    /// Share of decor found only in the second pass; `None` without decor.
    pub pass2_decor_share: Option<f64>,
}

pub const DEDUP_IOU: f64 = 0.5;

pub fn detect_two_pass(
    image: &Image,
    vocabulary: &[VocabularyEntry],
    detector: &dyn Detector,
    inpainter: &dyn Inpainter,
) -> Result<TwoPass, PipelineError> {
    if vocabulary.is_empty() {
        return Err(PipelineError::EmptyVocabulary);
    }
    let kinds: BTreeMap<String, ObjectKind> = vocabulary.iter().map(|e| (e.label.to_lowercase(), e.kind)).collect();
    let labels: Vec<String> = vocabulary.iter().map(|e| e.label.clone()).collect();
    let tag = |d: Detection, pass: u8| -> Option<RawDetection> {
        let kind = *kinds.get(&d.label.to_lowercase())?;
        Some(RawDetection {
            label: d.label.to_lowercase(),
            kind,
            bbox: d.bbox,
            mask: d.mask,
            confidence: d.confidence,
            pass,
        })
    };
    let err = PipelineError::provider(Stage::Detect, None);
    let pass1: Vec<RawDetection> = detector
        .detect(image, &labels)
        .map_err(err)?
        .into_iter()
        .filter_map(|d| tag(d, 1))
        .collect();
    let decor1: Vec<RawDetection> = pass1.iter().filter(|d| d.kind == ObjectKind::Decor).cloned().collect();
    let cleaned = if decor1.is_empty() {
        image.clone()
    } else {
        let mut mask = Mask::empty(image.width(), image.height());
        for d in &decor1 {
            mask.union_with(&d.mask);
        }
        inpainter
            .inpaint_remove(image, &mask)
            .map_err(PipelineError::provider(Stage::Detect, None))?
    };
    let pass2: Vec<RawDetection> = detector
        .detect(&cleaned, &labels)
        .map_err(PipelineError::provider(Stage::Detect, None))?
        .into_iter()
        .filter_map(|d| tag(d, 2))
        .collect();
    let furniture: Vec<RawDetection> = pass2.iter().filter(|d| d.kind == ObjectKind::Furniture).cloned().collect();
    let decor2: Vec<RawDetection> = pass2
        .into_iter()
        .filter(|d| d.kind == ObjectKind::Decor)
        .filter(|d| !decor1.iter().any(|p| p.label == d.label && p.bbox.iou(&d.bbox) >= DEDUP_IOU))
        .collect();
    let total_decor = decor1.len() + decor2.len();
    let share = (total_decor > 0).then(|| decor2.len() as f64 / total_decor as f64);
    let detections: Vec<RawDetection> = furniture.into_iter().chain(decor1).chain(decor2).collect();
    if detections.is_empty() {
        return Err(PipelineError::NoDetections);
    }
    Ok(TwoPass {
        detections,
        cleaned,
        pass2_decor_share: share,
    })
}

/// Object pixels of a window, everything else white.
pub fn segment_crop(image: &Image, mask: &Mask, window: (u32, u32, u32, u32)) -> (Image, Mask) {
    let (x0, y0, w, h) = window;
    let mut crop = image.crop(x0, y0, w, h);
    let m = Mask::from_fn(w, h, |x, y| mask.get(x0 + x, y0 + y));
    for y in 0..h {
        for x in 0..w {
            if !m.get(x, y) {
                crop.set(x, y, WHITE);
            }
        }
    }
    (crop, m)
}

fn bbox_meta(b: &BBox2D) -> String {
    let a = b.to_array();
    format!("{},{},{},{}", a[0], a[1], a[2], a[3])
}

/// Crop state of one object after amodal completion and description.
#[derive(Debug, Clone)]
pub struct PreparedCrop {
    pub crop: Image,
    pub crop_mask: Mask,
    pub window: (u32, u32, u32, u32),
    pub coverage: f64,
    pub amodal: bool,
    pub description: String,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy)]
pub struct CropSettings {
    pub coverage_threshold: f64,
    pub amodal_seeds: usize,
}

/// Crops a detection from its source image; occluded furniture is completed
/// by amodal inpainting with the judged best seed, then described.
pub fn prepare_object_crop(
    id: ObjectId,
    det: &RawDetection,
    source: &Image,
    settings: CropSettings,
    inpainter: &dyn Inpainter,
    describer: &dyn Describer,
) -> Result<PreparedCrop, PipelineError> {
    let window = det.bbox.pixel_window(source.width(), source.height());
    let (mut crop, crop_mask) = segment_crop(source, &det.mask, window);
    crop.set_meta(META_CROP_BBOX, bbox_meta(&det.bbox));
    let coverage = crop_mask.count() as f64 / (f64::from(window.2) * f64::from(window.3)).max(1.0);
    let mut warnings = Vec::new();
    let mut amodal = false;
    if det.kind == ObjectKind::Furniture && coverage < settings.coverage_threshold {
        amodal = true;
        match inpainter.inpaint_amodal(&crop, &crop_mask, settings.amodal_seeds) {
            Ok(candidates) if !candidates.is_empty() => {
                let pick = match describer.describe(DescribeKind::JudgeInpaint, Some(&crop), None, &candidates) {
                    Ok(DescribeOutput::Choice(c)) => c,
                    Ok(DescribeOutput::Text(_)) => {
                        warnings.push("inpaint judge returned no choice; using seed 0".to_string());
                        0
                    }
                    Err(e) => {
                        warnings.push(format!("inpaint judge failed ({e}); using seed 0"));
                        0
                    }
                };
                let mut chosen = candidates.into_iter().nth(pick).expect("choice range checked by client");
                chosen.set_meta(META_CROP_BBOX, bbox_meta(&det.bbox));
                crop = chosen;
            }
            Ok(_) => warnings.push("amodal completion returned no candidates".to_string()),
            Err(e) => return Err(PipelineError::Provider { stage: Stage::Crops, object: Some(id), source: e }),
        }
    }
    let text = match describer
        .describe(DescribeKind::ObjectAppearance, Some(&crop), None, &[])
        .map_err(PipelineError::provider(Stage::Crops, Some(id)))?
    {
        DescribeOutput::Text(t) => t,
        DescribeOutput::Choice(_) => String::new(),
    };
    let description = match sanitize_appearance(&text) {
        Some(d) => d,
        None => {
            warnings.push("appearance description was empty after filtering; using the label".to_string());
            det.label.clone()
        }
    };
    Ok(PreparedCrop {
        crop,
        crop_mask,
        window,
        coverage,
        amodal,
        description,
        warnings,
    })
}

#[derive(Debug, Clone)]
pub enum PipelineInput {
    Prompt(String),
    /// Skips guide-image generation.
    Image(Image),
}

#[derive(Debug, Clone)]
pub struct RunRequest {
    pub input: PipelineInput,
    pub scene_type: String,
    pub seed: u64,
}

/// Per-object intermediate state kept for the run directory.
#[derive(Debug, Clone)]
pub struct ObjectRecord {
    pub detection: DetectedObject,
    pub coverage: f64,
    pub amodal: bool,
    pub lifted: Option<BBox3D>,
}

pub struct RunOutput {
    pub manifest: SceneManifest,
    pub assets: SceneAssets,
    pub guide: Image,
    pub depth: DepthMap,
    pub objects: Vec<ObjectRecord>,
}

impl RunOutput {
    /// Boxes of the placed objects.
    pub fn boxes(&self) -> Vec<BBox3D> {
        self.manifest.objects.iter().map(SceneObject::bbox).collect()
    }
}

pub struct Pipeline {
    client: ProviderClient,
    cfg: Config,
    log: Arc<RunLog>,
    pool: rayon::ThreadPool,
}

struct Warnings(Vec<RunWarning>);

impl Warnings {
    fn push(&mut self, stage: Stage, object: Option<ObjectId>, message: impl Into<String>) {
        let message = message.into();
        tracing::warn!(stage = stage.as_str(), object = ?object, "{message}");
        self.0.push(RunWarning {
            stage: stage.as_str().into(),
            object,
            message,
        });
    }
}

impl Pipeline {
    pub fn new(client: ProviderClient, cfg: Config, log: Arc<RunLog>) -> Self {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.pipeline.fanout_limit)
            .build()
            .expect("thread pool");
        Self { client, cfg, log, pool }
    }

    pub fn client(&self) -> &ProviderClient {
        &self.client
    }

    fn stage(&self, stage: Stage, fields: serde_json::Value) {
        let mut f = json!({ "stage": stage.as_str() });
        if let (Some(o), serde_json::Value::Object(extra)) = (f.as_object_mut(), fields) {
            o.extend(extra);
        }
        self.log.event("stage", f);
    }

    pub fn run(&self, req: &RunRequest) -> Result<RunOutput, PipelineError> {
        let c = &self.client;
        let pc = &self.cfg.pipeline;
        let mut warnings = Warnings(Vec::new());
        let mut manifest = SceneManifest::new(
            match &req.input {
                PipelineInput::Prompt(p) => p.clone(),
                PipelineInput::Image(_) => String::new(),
            },
            req.seed,
        );
        manifest.meta.stages = STAGE_ORDER.iter().map(|s| s.as_str().to_string()).collect();
        manifest.meta.providers = c.transport().backends();

        let guide = match &req.input {
            PipelineInput::Prompt(p) => {
                let (img, score) =
                    acquire_guide_image(p, req.seed, pc.n_guide_candidates as usize, pc.clip_gate, c, c)?;
                manifest.meta.stats.insert("guide.score".into(), score);
                img
            }
            PipelineInput::Image(img) => img.clone(),
        };
        self.stage(Stage::Guide, json!({"width": guide.width(), "height": guide.height()}));
        let cam = self.cfg.camera.for_image(guide.width(), guide.height());
        cam.validate().map_err(|e| PipelineError::Other {
            stage: Stage::Lift,
            message: e.to_string(),
        })?;

        let vocab = build_detection_vocabulary(&req.scene_type, &guide, c)?;
        self.stage(Stage::Vocabulary, json!({"labels": vocab.iter().map(|v| &v.label).collect::<Vec<_>>()}));

        let two = detect_two_pass(&guide, &vocab, c, c)?;
        if let Some(s) = two.pass2_decor_share {
            manifest.meta.stats.insert("detect.pass2_decor_share".into(), s);
        }
        self.stage(
            Stage::Detect,
            json!({"objects": two.detections.len(), "pass2_decor_share": two.pass2_decor_share}),
        );

        let settings = CropSettings {
            coverage_threshold: pc.coverage_threshold,
            amodal_seeds: pc.amodal_seeds as usize,
        };
        let ids: Vec<ObjectId> = (1..=two.detections.len() as u32).map(ObjectId).collect();
        let source_of = |d: &RawDetection| if d.pass == 1 { &guide } else { &two.cleaned };
        let prepared: Vec<Result<PreparedCrop, PipelineError>> = self.pool.install(|| {
            ids.par_iter()
                .zip(two.detections.par_iter())
                .map(|(id, d)| prepare_object_crop(*id, d, source_of(d), settings, c, c))
                .collect()
        });

        let mut records: Vec<ObjectRecord> = Vec::new();
        for ((id, det), p) in ids.iter().zip(&two.detections).zip(prepared) {
            match p {
                Ok(p) => {
                    for w in &p.warnings {
                        warnings.push(Stage::Crops, Some(*id), w.clone());
                    }
                    records.push(ObjectRecord {
                        detection: DetectedObject {
                            id: *id,
                            label: det.label.clone(),
                            kind: det.kind,
                            bbox2d: det.bbox,
                            mask: det.mask.clone(),
                            confidence: det.confidence,
                            crop: p.crop,
                            description: p.description,
                            detection_pass: det.pass,
                        },
                        coverage: p.coverage,
                        amodal: p.amodal,
                        lifted: None,
                    });
                }
                Err(e @ PipelineError::Provider { .. }) if e.is_unreachable() => return Err(e),
                Err(e) => {
                    warnings.push(Stage::Crops, Some(*id), e.to_string());
                    manifest.meta.skipped.push(*id);
                }
            }
        }
        self.stage(Stage::Crops, json!({"amodal": records.iter().filter(|r| r.amodal).count()}));

        let depth = c.depth(&guide).map_err(PipelineError::provider(Stage::Depth, None))?;
        let depth_clean = if records.iter().any(|r| r.detection.detection_pass == 2) && two.cleaned != guide {
            c.depth(&two.cleaned).map_err(PipelineError::provider(Stage::Depth, None))?
        } else {
            depth.clone()
        };
        self.stage(Stage::Depth, json!({}));

        for r in &mut records {
            let d = if r.detection.detection_pass == 1 { &depth } else { &depth_clean };
            match lift_mask(&r.detection.mask, d, &cam, Trim::default(), r.detection.id) {
                Ok(b) => r.lifted = Some(b),
                Err(e) => {
                    warnings.push(Stage::Lift, Some(r.detection.id), e.to_string());
                    manifest.meta.skipped.push(r.detection.id);
                }
            }
        }
        records.retain(|r| r.lifted.is_some());
        if records.is_empty() {
            return Err(PipelineError::NothingLeft(Stage::Lift));
        }
        self.stage(Stage::Lift, json!({"objects": records.len()}));

        // Representative (lowest id) per cluster of repeated objects.
        let mut representative: BTreeMap<ObjectId, ObjectId> =
            records.iter().map(|r| (r.detection.id, r.detection.id)).collect();
        if pc.repetition_merge {
            let descs: Vec<(ObjectId, String)> = records
                .iter()
                .map(|r| (r.detection.id, r.detection.description.clone()))
                .collect();
            let clusters = detect_repetitions(&descs, c, self.cfg.postprocess.repetition_threshold)
                .map_err(PipelineError::provider(Stage::Repetitions, None))?;
            for cl in &clusters {
                for id in cl {
                    representative.insert(*id, cl[0]);
                }
            }
            let merged = clusters.iter().filter(|c| c.len() > 1).count();
            self.stage(Stage::Repetitions, json!({"clusters": clusters.len(), "merged_clusters": merged}));
        }

        let reps: Vec<&ObjectRecord> = records
            .iter()
            .filter(|r| representative[&r.detection.id] == r.detection.id)
            .collect();
        let generated: Vec<Result<GeneratedAsset, ProviderError>> = self.pool.install(|| {
            reps.par_iter()
                .map(|r| c.generate3d(&r.detection.crop, &r.detection.description))
                .collect()
        });
        let mut assets_by_rep: BTreeMap<ObjectId, GeneratedAsset> = BTreeMap::new();
        for (r, g) in reps.iter().zip(generated) {
            match g {
                Ok(a) => {
                    assets_by_rep.insert(r.detection.id, a);
                }
                Err(e) if e.is_unreachable() => {
                    return Err(PipelineError::Provider {
                        stage: Stage::Assets,
                        object: Some(r.detection.id),
                        source: e,
                    })
                }
                Err(e) => warnings.push(Stage::Assets, Some(r.detection.id), e.to_string()),
            }
        }
        let mut keep = Vec::new();
        for r in records {
            if assets_by_rep.contains_key(&representative[&r.detection.id]) {
                keep.push(r);
            } else {
                manifest.meta.skipped.push(r.detection.id);
            }
        }
        let mut records = keep;
        self.stage(Stage::Assets, json!({"generated": assets_by_rep.len()}));

        let posed: Vec<Result<SceneObject, PipelineError>> = self.pool.install(|| {
            records
                .par_iter()
                .map(|r| {
                    let id = r.detection.id;
                    let asset = &assets_by_rep[&representative[&id]];
                    let target = r.lifted.expect("lifted");
                    let (x0, y0, w, h) = r.detection.bbox2d.pixel_window(cam.image_w, cam.image_h);
                    let window_cam = cam.window(x0, y0, w, h);
                    let pose = select_pose(&asset.mesh, asset.native_extents, &target, &r.detection.crop, &window_cam, c, c)
                        .map_err(|e| match e {
                            PoseError::Provider { source, .. } => PipelineError::Provider {
                                stage: Stage::Pose,
                                object: Some(id),
                                source,
                            },
                            other => PipelineError::Other {
                                stage: Stage::Pose,
                                message: format!("object {id}: {other}"),
                            },
                        })?;
                    SceneObject::new(
                        id,
                        r.detection.label.clone(),
                        r.detection.kind,
                        MeshRef::for_object(id),
                        pose.size,
                        target.center,
                        pose.yaw,
                    )
                    .map_err(|e| PipelineError::Other {
                        stage: Stage::Pose,
                        message: format!("object {id}: {e}"),
                    })
                })
                .collect()
        });
        let mut objects = Vec::new();
        let mut posed_ids = BTreeSet::new();
        for (r, p) in records.iter().zip(posed) {
            match p {
                Ok(o) => {
                    posed_ids.insert(o.id);
                    objects.push(o);
                }
                Err(e) if e.is_unreachable() => return Err(e),
                Err(e) => {
                    warnings.push(Stage::Pose, Some(r.detection.id), e.to_string());
                    manifest.meta.skipped.push(r.detection.id);
                }
            }
        }
        records.retain(|r| posed_ids.contains(&r.detection.id));
        if objects.is_empty() {
            return Err(PipelineError::NothingLeft(Stage::Pose));
        }
        self.stage(Stage::Pose, json!({"objects": objects.len()}));

        let report = postprocess(&mut objects, &self.cfg.postprocess).map_err(|e| PipelineError::Other {
            stage: Stage::Postprocess,
            message: e.to_string(),
        })?;
        manifest.meta.stats.insert("postprocess.rounds".into(), f64::from(report.outcome.rounds));
        manifest.meta.stats.insert("postprocess.moves".into(), report.outcome.moves as f64);
        for (a, b) in &report.outcome.residual {
            warnings.push(Stage::Postprocess, Some(*a), format!("still overlaps {b} after the round budget"));
        }
        self.stage(
            Stage::Postprocess,
            json!({"supports": report.supports.len(), "rounds": report.outcome.rounds, "moves": report.outcome.moves}),
        );

        let assembly_err = |source| PipelineError::Assembly { stage: Stage::Surfaces, source };
        let mut floor = place_floor(&objects).map_err(assembly_err)?;
        let mut walls = place_walls_in(&objects, &report.snap.wall_directions()).map_err(assembly_err)?;
        let mut assets = SceneAssets::default();
        match self.textures(&guide, req.seed) {
            Ok((floor_tex, wall_tex)) => {
                floor.texture = Some(FLOOR_TEXTURE_PATH.into());
                assets.textures.insert(FLOOR_TEXTURE_PATH.into(), floor_tex);
                if !walls.is_empty() {
                    for w in &mut walls {
                        w.texture = Some(WALL_TEXTURE_PATH.into());
                    }
                    assets.textures.insert(WALL_TEXTURE_PATH.into(), wall_tex);
                }
            }
            Err(e) if e.is_unreachable() => return Err(e),
            Err(e) => warnings.push(Stage::Surfaces, None, e.to_string()),
        }
        self.stage(Stage::Surfaces, json!({"walls": walls.len()}));

        for o in &objects {
            let mesh: Mesh = assets_by_rep[&representative[&o.id]].mesh.clone();
            assets.meshes.insert(o.asset.clone(), mesh);
        }
        manifest.objects = objects;
        manifest.floor = Some(floor);
        manifest.walls = walls;
        manifest.meta.skipped.sort();
        manifest.meta.warnings = warnings.0;
        Ok(RunOutput {
            manifest,
            assets,
            guide,
            depth,
            objects: records,
        })
    }

    fn textures(&self, guide: &Image, seed: u64) -> Result<(Image, Image), PipelineError> {
        let c = &self.client;
        let err = || PipelineError::provider(Stage::Surfaces, None);
        let text = match c.describe(DescribeKind::SurfaceTexture, Some(guide), None, &[]).map_err(err())? {
            DescribeOutput::Text(t) => t,
            DescribeOutput::Choice(_) => String::new(),
        };
        let (floor, wall) = parse_surfaces(&text).ok_or_else(|| PipelineError::Other {
            stage: Stage::Surfaces,
            message: format!("could not parse surface description {text:?}"),
        })?;
        let one = |desc: &str| -> Result<Image, PipelineError> {
            c.text2image(&texture_prompt(desc), 1, seed)
                .map_err(err())?
                .into_iter()
                .next()
                .ok_or_else(|| PipelineError::Other {
                    stage: Stage::Surfaces,
                    message: "texture generation returned no image".into(),
                })
        };
        Ok((one(&floor)?, one(&wall)?))
    }

    /// Regenerates one object's asset from an edited description or a
    /// replacement crop, keeping its size, location and yaw.
    pub fn edit_object(
        &self,
        manifest: &SceneManifest,
        assets: &SceneAssets,
        id: ObjectId,
        edit: &ObjectEdit,
    ) -> Result<(SceneManifest, SceneAssets), PipelineError> {
        let c = &self.client;
        let idx = manifest
            .objects
            .iter()
            .position(|o| o.id == id)
            .ok_or(PipelineError::UnknownObject(id))?;
        let err = || PipelineError::provider(Stage::Edit, Some(id));
        let (crop, description) = match edit {
            ObjectEdit::Prompt { text, crop } => (
                crop.clone().unwrap_or_else(|| Image::new(64, 64, WHITE)),
                text.trim().to_string(),
            ),
            ObjectEdit::Crop(crop) => {
                let text = match c.describe(DescribeKind::ObjectAppearance, Some(crop), None, &[]).map_err(err())? {
                    DescribeOutput::Text(t) => t,
                    DescribeOutput::Choice(_) => String::new(),
                };
                let d = sanitize_appearance(&text).unwrap_or_else(|| manifest.objects[idx].label.clone());
                (crop.clone(), d)
            }
        };
        let asset = c.generate3d(&crop, &description).map_err(err())?;
        let mesh_ref = edited_mesh_ref(id, &asset.mesh);
        let mut out = manifest.clone();
        let mut out_assets = assets.clone();
        let old = out.objects[idx].asset.clone();
        if !out.objects.iter().enumerate().any(|(i, o)| i != idx && o.asset == old) {
            out_assets.meshes.remove(&old);
        }
        out.objects[idx].asset = mesh_ref.clone();
        out_assets.meshes.insert(mesh_ref, asset.mesh);
        self.log.event("edit", json!({"object": id.to_string(), "description": description}));
        Ok((out, out_assets))
    }
}

pub const WALL_TEXTURE_PATH: &str = "textures/wall.png";

#[derive(Debug, Clone)]
pub enum ObjectEdit {
    /// New description; `crop` is the original crop when available.
    Prompt { text: String, crop: Option<Image> },
    Crop(Image),
}

pub fn edited_mesh_ref(id: ObjectId, mesh: &Mesh) -> MeshRef {
    MeshRef(format!("objects/{id}/mesh-{}.obj", &mesh.content_id()[..12]))
}

#[derive(Serialize)]
struct DetectionRecord<'a> {
    id: ObjectId,
    label: &'a str,
    kind: ObjectKind,
    bbox: [f64; 4],
    confidence: f64,
    pass: u8,
    coverage: f64,
    amodal: bool,
    description: &'a str,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    let fail = |e: std::io::Error| PipelineError::Other {
        stage: Stage::Export,
        message: format!("{}: {e}", path.display()),
    };
    if let Some(p) = path.parent() {
        fs::create_dir_all(p).map_err(fail)?;
    }
    fs::write(path, bytes).map_err(fail)
}

fn png_err(e: impl fmt::Display) -> PipelineError {
    PipelineError::Other {
        stage: Stage::Export,
        message: e.to_string(),
    }
}

/// Writes the run directory: guide, detections, depth, per-object crops,
/// masks and descriptions, and the exported scene.
pub fn write_run_dir(out: &RunOutput, dir: &Path) -> Result<std::path::PathBuf, PipelineError> {
    write_file(&dir.join("guide.png"), &out.guide.encode_png().map_err(png_err)?)?;
    write_file(&dir.join("depth.png"), &encode_depth_png16(&out.depth).map_err(png_err)?)?;
    let records: Vec<DetectionRecord> = out
        .objects
        .iter()
        .map(|r| DetectionRecord {
            id: r.detection.id,
            label: &r.detection.label,
            kind: r.detection.kind,
            bbox: r.detection.bbox2d.to_array(),
            confidence: r.detection.confidence,
            pass: r.detection.detection_pass,
            coverage: r.coverage,
            amodal: r.amodal,
            description: &r.detection.description,
        })
        .collect();
    let mut det = serde_json::to_vec_pretty(&records).map_err(png_err)?;
    det.push(b'\n');
    write_file(&dir.join("detections.json"), &det)?;
    for r in &out.objects {
        let od = dir.join("objects").join(r.detection.id.to_string());
        write_file(&od.join("crop.png"), &r.detection.crop.encode_png().map_err(png_err)?)?;
        write_file(&od.join("mask.png"), &encode_mask_png(&r.detection.mask).map_err(png_err)?)?;
        write_file(&od.join("description.txt"), format!("{}\n", r.detection.description).as_bytes())?;
    }
    export_scene(&out.manifest, &out.assets, dir).map_err(|source| PipelineError::Assembly {
        stage: Stage::Export,
        source,
    })
}

/// Reads the crop stored next to an exported scene for an object.
pub fn stored_crop(scene_dir: &Path, id: ObjectId) -> Option<Image> {
    let bytes = fs::read(scene_dir.join("objects").join(id.to_string()).join("crop.png")).ok()?;
    Image::decode_png(&bytes).ok()
}

pub use assembly::MANIFEST_FILE;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::mock::MockProvider;

    struct Scores(Vec<f64>);
    impl ImageGenerator for Scores {
        fn text2image(&self, _: &str, n: usize, _: u64) -> Result<Vec<Image>, ProviderError> {
            Ok((0..n).map(|i| Image::new(1, 1, [i as u8, 0, 0])).collect())
        }
    }
    impl ImageTextScorer for Scores {
        fn image_text_score(&self, img: &Image, _: &str) -> Result<f64, ProviderError> {
            Ok(self.0[img.get(0, 0)[0] as usize])
        }
    }

    #[test]
    fn guide_gate() {
        let s = Scores(vec![28.0, 31.0, 35.0]);
        let (img, score) = acquire_guide_image("room", 0, 3, 30.0, &s, &s).unwrap();
        assert_eq!((img.get(0, 0)[0], score), (2, 35.0));
        let low = Scores(vec![25.0; 3]);
        let err = acquire_guide_image("room", 0, 3, 30.0, &low, &low).unwrap_err();
        assert!(matches!(err, PipelineError::NoGuideImage { ref scores, .. } if scores == &[25.0; 3]));
    }

    #[test]
    fn vocabulary_union_dedups() {
        let client = ProviderClient::new(Arc::new(MockProvider::new(0)));
        let scene = crate::oracle::fixtures::vase_lamp_scene();
        let mut img = crate::oracle::render_with_camera(&scene, &scene.camera).image;
        img.set_meta(crate::providers::mock::META_SCENE, scene.to_json());
        let v = build_detection_vocabulary("bedroom", &img, &client).unwrap();
        let labels: Vec<&str> = v.iter().map(|e| e.label.as_str()).collect();
        assert!(labels.contains(&"bed"));
        assert_eq!(labels.iter().filter(|l| **l == "lamp").count(), 1);
    }
}
