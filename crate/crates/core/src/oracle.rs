//! Ground-truth box scenes and an analytic isometric renderer.
//!
//! The oracle produces color, 8-bit depth, instance masks and 2D boxes for
//! a scene of boxes without any learned model, so the layout stages can be
//! verified end to end.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::image::{Image, WHITE};
use crate::model::{
    Aabb, Axis, BBox2D, BBox3D, DepthMap, Direction, IsoCamera, Mask, MeshRef, ObjectId, ObjectKind, SceneObject, SupportState, Vec3,
};
use crate::unproject::Projector;

pub const MAX_REJECTIONS: usize = 10_000;
/// Minimum visible share of an object's silhouette for it to count as seen.
pub const VISIBLE_FRACTION_FOR_DETECTION: f64 = 0.5;
pub const MIN_VISIBLE_PIXELS: usize = 16;

const FURNITURE: &[&str] = &[
    "bed",
    "wardrobe",
    "desk",
    "chair",
    "nightstand",
    "sofa",
    "bookshelf",
    "dresser",
    "cabinet",
    "table",
    "armchair",
    "bench",
];

const DECOR: &[&str] = &["lamp", "vase", "plant", "clock", "bowl", "book"];

/// Dark enough that a black silhouette is closer to any object pixel than
/// white background is.
const PALETTE: &[[u8; 3]] = &[
    [120, 40, 40],
    [40, 90, 50],
    [40, 50, 120],
    [110, 80, 30],
    [90, 40, 100],
    [30, 90, 100],
    [100, 60, 60],
    [60, 60, 60],
    [80, 100, 30],
    [120, 50, 90],
    [50, 70, 90],
    [100, 90, 70],
];

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("could not place {n} objects after {MAX_REJECTIONS} rejections; try a smaller n")]
    PlacementFailed { n: usize },
    #[error("object {index} ({label}) falls outside the image frame or depth range")]
    OutOfFrame { index: usize, label: String },
    #[error("invalid oracle request: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleObject {
    pub label: String,
    pub kind: ObjectKind,
    pub bbox: BBox3D,
    pub color: [u8; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthScene {
    pub objects: Vec<OracleObject>,
    pub seed: u64,
    pub camera: IsoCamera,
    /// Indices of objects displaced to create overlaps.
    #[serde(default)]
    pub injected: Vec<usize>,
    /// Indices of objects removed from view (e.g. inpainted away).
    #[serde(default)]
    pub hidden: BTreeSet<usize>,
}

impl GroundTruthScene {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("scene serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn bounds(&self) -> Option<Aabb> {
        self.objects
            .iter()
            .map(|o| o.bbox.aabb())
            .reduce(|a, b| a.union(&b))
    }

    pub fn diagonal(&self) -> f64 {
        self.bounds().map(|b| b.diagonal()).unwrap_or(0.0)
    }

    /// Objects as placed scene objects with ids from 1 in list order.
    pub fn scene_objects(&self) -> Vec<SceneObject> {
        self.objects
            .iter()
            .enumerate()
            .map(|(i, o)| {
                let id = ObjectId(i as u32 + 1);
                SceneObject::new(id, o.label.clone(), o.kind, MeshRef::for_object(id), o.bbox.extents(), o.bbox.center, o.bbox.yaw)
                    .expect("oracle boxes are valid")
            })
            .collect()
    }

    pub fn visible_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.objects.len()).filter(|i| !self.hidden.contains(i))
    }

    /// Builds a scene from objects laid out around the origin, translated
    /// horizontally so it is centered in the frame and the depth range.
    pub fn placed(objects: Vec<OracleObject>, camera: IsoCamera, seed: u64) -> Result<Self, OracleError> {
        let mut scene = GroundTruthScene {
            objects,
            seed,
            camera,
            injected: Vec::new(),
            hidden: BTreeSet::new(),
        };
        let proj = Projector::new(&camera);
        let corners: Vec<Vec3> = scene
            .objects
            .iter()
            .flat_map(|o| aabb_corners(&o.bbox.aabb()))
            .collect();
        let cam_pts: Vec<Vec3> = corners.iter().map(|c| proj.world_to_camera(*c)).collect();
        let mid = |f: fn(&Vec3) -> f64| {
            let lo = cam_pts.iter().map(f).fold(f64::INFINITY, f64::min);
            let hi = cam_pts.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
            (lo + hi) / 2.0
        };
        let want_x = -mid(|v| v.x);
        let want_d = camera.depth_range() / 2.0 - mid(|v| v.z);
        // Horizontal translation t with right.t = want_x and view.t = want_d.
        let r = proj.camera_to_world(Vec3::new(1.0, 0.0, 0.0));
        let d = proj.view_direction();
        let det = r.x * d.y - r.y * d.x;
        if det.abs() < 1e-12 {
            return Err(OracleError::Invalid("camera view is vertical".into()));
        }
        let tx = (want_x * d.y - r.y * want_d) / det;
        let ty = (r.x * want_d - want_x * d.x) / det;
        for o in &mut scene.objects {
            o.bbox.center += Vec3::new(tx, ty, 0.0);
        }
        scene.check_in_frame()?;
        Ok(scene)
    }

    pub fn check_in_frame(&self) -> Result<(), OracleError> {
        let proj = Projector::new(&self.camera);
        let (w, h) = (f64::from(self.camera.image_w), f64::from(self.camera.image_h));
        let margin_d = 2.0 * self.camera.alpha;
        for (index, o) in self.objects.iter().enumerate() {
            for c in aabb_corners(&o.bbox.aabb()) {
                let (px, py, depth) = proj.project(c);
                let ok = px >= 1.0
                    && px <= w - 1.0
                    && py >= 1.0
                    && py <= h - 1.0
                    && depth >= margin_d
                    && depth <= self.camera.depth_range() - margin_d;
                if !ok {
                    return Err(OracleError::OutOfFrame {
                        index,
                        label: o.label.clone(),
                    });
                }
            }
        }
        Ok(())
    }
}

pub fn aabb_corners(b: &Aabb) -> [Vec3; 8] {
    let mut out = [Vec3::ZERO; 8];
    for (i, c) in out.iter_mut().enumerate() {
        *c = Vec3::new(
            if i & 1 == 0 { b.min.x } else { b.max.x },
            if i & 2 == 0 { b.min.y } else { b.max.y },
            if i & 4 == 0 { b.min.z } else { b.max.z },
        );
    }
    out
}

/// Layout parameters for [`random_scene_with`].
#[derive(Debug, Clone, Copy)]
pub struct SceneSpec {
    pub room: f64,
    pub min_size: f64,
    pub max_size: f64,
    pub min_height: f64,
    pub max_height: f64,
    /// Minimum horizontal gap between objects.
    pub clearance: f64,
    /// Objects whose gap to a horizontal scene extremum is below this share
    /// of the scene diagonal are pushed flush against it.
    pub wall_push: f64,
    /// Minimum visible share of every object's silhouette, checked on a
    /// low-resolution render before overlaps are injected.
    pub min_visible: f64,
    /// Number of decor objects set on top of furniture.
    pub decor: usize,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            room: 0.55,
            min_size: 0.07,
            max_size: 0.17,
            min_height: 0.05,
            max_height: 0.2,
            clearance: 0.02,
            wall_push: 0.08,
            min_visible: 0.85,
            decor: 0,
        }
    }
}

pub fn random_scene(n_objects: usize, seed: u64, overlap_injection: f64) -> Result<GroundTruthScene, OracleError> {
    random_scene_with(
        n_objects,
        seed,
        overlap_injection,
        IsoCamera::for_image(512, 512),
        SceneSpec::default(),
    )
}

const LAYOUT_LABELS: [&str; 6] = ["bed", "chair", "desk", "table", "cabinet", "sofa"];

/// Unconstrained layout for property checks: 1 to 10 furniture boxes with
/// bottoms jittered above z = 0, free overlaps and mixed yaws, plus up to
/// three decor boxes bound to the tops of the first pieces.
pub fn random_layout(seed: u64) -> Vec<SceneObject> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=10u32);
    let mut out: Vec<SceneObject> = Vec::new();
    for i in 0..n {
        let id = ObjectId(i + 1);
        let size = Vec3::new(rng.random_range(0.05..0.5), rng.random_range(0.05..0.5), rng.random_range(0.05..0.5));
        let yaw = [0.0, 90.0, 30.0, 45.0][rng.random_range(0..4)];
        let loc = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            size.z / 2.0 + rng.random_range(0.0..0.01),
        );
        let label = LAYOUT_LABELS[rng.random_range(0..LAYOUT_LABELS.len())];
        out.push(SceneObject::new(id, label, ObjectKind::Furniture, MeshRef::for_object(id), size, loc, yaw).expect("valid box"));
    }
    for k in 0..rng.random_range(0..=n.min(3)) {
        let host = out[k as usize].aabb();
        let id = ObjectId(n + k + 1);
        let c = host.center();
        let loc = Vec3::new(c.x, c.y, host.max.z + 0.02);
        let mut d = SceneObject::new(id, "vase", ObjectKind::Decor, MeshRef::for_object(id), Vec3::splat(0.04), loc, 0.0)
            .expect("valid box");
        d.support = SupportState::OnObject(ObjectId(k + 1));
        out.push(d);
    }
    out
}

/// Rejection-samples non-overlapping floor-standing boxes, then displaces
/// `ceil(fraction * n)` of them onto a neighbor.
pub fn random_scene_with(
    n_objects: usize,
    seed: u64,
    overlap_injection: f64,
    camera: IsoCamera,
    spec: SceneSpec,
) -> Result<GroundTruthScene, OracleError> {
    if n_objects == 0 {
        return Err(OracleError::Invalid("n_objects must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&overlap_injection) {
        return Err(OracleError::Invalid(format!(
            "overlap fraction {overlap_injection} outside [0, 1]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rejections = 0usize;
    // Footprints shrink with n to keep the floor density near 25%.
    let shrink = (3.0 / n_objects as f64).sqrt().min(1.0);
    let wall_gap = 1.5 * spec.wall_push * spec.room * std::f64::consts::SQRT_2;
    let reject = |rejections: &mut usize| -> Result<(), OracleError> {
        *rejections += 1;
        if *rejections >= MAX_REJECTIONS {
            Err(OracleError::PlacementFailed { n: n_objects })
        } else {
            Ok(())
        }
    };
    'scene: loop {
        let mut objects: Vec<OracleObject> = Vec::with_capacity(n_objects);
        let mut stalled = 0usize;
        while objects.len() < n_objects {
            let size = Vec3::new(
                rng.random_range(spec.min_size..spec.max_size) * shrink,
                rng.random_range(spec.min_size..spec.max_size) * shrink,
                rng.random_range(spec.min_height..spec.max_height) * shrink,
            );
            let mut center = Vec3::new(
                rng.random_range(size.x / 2.0..spec.room - size.x / 2.0),
                rng.random_range(size.y / 2.0..spec.room - size.y / 2.0),
                size.z / 2.0,
            );
            // Flush against the room wall when close to it.
            for axis in [Axis::X, Axis::Y] {
                let half = size.get(axis) / 2.0;
                let c = center.get(axis);
                if c - half < wall_gap {
                    center.set(axis, half);
                } else if spec.room - (c + half) < wall_gap {
                    center.set(axis, spec.room - half);
                }
            }
            let bbox = BBox3D::new(center, size * 0.5, 0.0).expect("sizes positive");
            if objects
                .iter()
                .any(|o| too_close(&o.bbox.aabb(), &bbox.aabb(), spec.clearance))
            {
                reject(&mut rejections)?;
                stalled += 1;
                if stalled > 50 {
                    continue 'scene;
                }
                continue;
            }
            stalled = 0;
            let i = objects.len();
            objects.push(OracleObject {
                label: FURNITURE[rng.random_range(0..FURNITURE.len())].to_string(),
                kind: ObjectKind::Furniture,
                bbox,
                color: PALETTE[i % PALETTE.len()],
            });
        }
        if !push_to_walls(&mut objects, spec) {
            reject(&mut rejections)?;
            continue 'scene;
        }
        add_decor(&mut objects, spec.decor, &mut rng);
        let mut scene = match GroundTruthScene::placed(objects, camera, seed) {
            Ok(s) => s,
            Err(OracleError::OutOfFrame { .. }) => {
                reject(&mut rejections)?;
                continue 'scene;
            }
            Err(e) => return Err(e),
        };
        if spec.min_visible > 0.0 && min_visible_fraction(&scene) < spec.min_visible {
            reject(&mut rejections)?;
            continue 'scene;
        }
        inject_overlaps(&mut scene, overlap_injection, &mut rng);
        return Ok(scene);
    }
}

/// Puts small boxes on top of distinct furniture pieces.
fn add_decor(objects: &mut Vec<OracleObject>, count: usize, rng: &mut ChaCha8Rng) {
    let mut hosts: Vec<usize> = (0..objects.len()).collect();
    hosts.shuffle(rng);
    for (k, &host) in hosts.iter().take(count).enumerate() {
        let a = objects[host].bbox.aabb();
        let e = a.extents();
        let side = e.x.min(e.y) * rng.random_range(0.3..0.5);
        let height = side * rng.random_range(0.8..1.6);
        let slack_x = (e.x - side) / 2.0 * 0.5;
        let slack_y = (e.y - side) / 2.0 * 0.5;
        let c = a.center();
        let center = Vec3::new(
            c.x + rng.random_range(-slack_x..=slack_x),
            c.y + rng.random_range(-slack_y..=slack_y),
            a.max.z + height / 2.0,
        );
        objects.push(OracleObject {
            label: DECOR[rng.random_range(0..DECOR.len())].to_string(),
            kind: ObjectKind::Decor,
            bbox: BBox3D::new(center, Vec3::new(side, side, height) * 0.5, 0.0).expect("positive"),
            color: PALETTE[(objects.len() + k + 5) % PALETTE.len()],
        });
    }
}

fn min_visible_fraction(scene: &GroundTruthScene) -> f64 {
    let cam = scene.camera;
    let k = (cam.image_w.max(cam.image_h) / 128).max(1);
    let small = IsoCamera {
        cx: cam.cx / f64::from(k),
        cy: cam.cy / f64::from(k),
        fx: cam.fx / f64::from(k),
        fy: cam.fy / f64::from(k),
        image_w: cam.image_w / k,
        image_h: cam.image_h / k,
        ..cam
    };
    let r = render_with_camera(scene, &small);
    (0..scene.objects.len())
        .map(|i| {
            r.detections
                .iter()
                .find(|d| d.index == i)
                .map_or(0.0, OracleDetection::visible_fraction)
        })
        .fold(1.0, f64::min)
}

fn too_close(a: &Aabb, b: &Aabb, clearance: f64) -> bool {
    a.overlap_along(b, Axis::X) > -clearance && a.overlap_along(b, Axis::Y) > -clearance
}

/// Makes every horizontal gap to the scene extrema either zero or larger
/// than the push threshold. Returns false if that creates a conflict.
fn push_to_walls(objects: &mut [OracleObject], spec: SceneSpec) -> bool {
    for _ in 0..4 {
        let bounds = objects
            .iter()
            .map(|o| o.bbox.aabb())
            .reduce(|a, b| a.union(&b))
            .expect("nonempty");
        let threshold = spec.wall_push * bounds.diagonal();
        let mut moved = false;
        for i in 0..objects.len() {
            for dir in Direction::HORIZONTAL {
                let a = objects[i].bbox.aabb();
                let gap = (bounds.face(dir) - a.face(dir)).abs();
                if gap > 0.0 && gap < threshold {
                    let mut c = objects[i].bbox.center;
                    c.set(dir.axis(), c.get(dir.axis()) + dir.sign() * gap);
                    objects[i].bbox.center = c;
                    moved = true;
                }
            }
        }
        let clash = (0..objects.len()).any(|i| {
            (i + 1..objects.len()).any(|j| {
                too_close(&objects[i].bbox.aabb(), &objects[j].bbox.aabb(), spec.clearance)
            })
        });
        if clash {
            return false;
        }
        if !moved {
            return true;
        }
    }
    false
}

fn inject_overlaps(scene: &mut GroundTruthScene, fraction: f64, rng: &mut ChaCha8Rng) {
    let n = scene.objects.len();
    let k = (fraction * n as f64).ceil() as usize;
    if k == 0 || n < 2 {
        return;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let chosen: Vec<usize> = order.into_iter().take(k.min(n)).collect();
    for &i in &chosen {
        let ci = scene.objects[i].bbox.center;
        let j = (0..n)
            .filter(|&j| j != i)
            .min_by(|&a, &b| {
                let da = (scene.objects[a].bbox.center - ci).norm();
                let db = (scene.objects[b].bbox.center - ci).norm();
                da.total_cmp(&db).then(a.cmp(&b))
            })
            .expect("n >= 2");
        let hi = scene.objects[i].bbox.half_extents;
        let hj = scene.objects[j].bbox.half_extents;
        let cj = scene.objects[j].bbox.center;
        let depth_share = rng.random_range(0.2..0.5);
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let (along, across) = if rng.random_bool(0.5) {
            (Axis::X, Axis::Y)
        } else {
            (Axis::Y, Axis::X)
        };
        let reach = hi.get(along) + hj.get(along);
        let slack = 0.5 * hi.get(across).min(hj.get(across));
        let mut c = ci;
        c.set(along, cj.get(along) + sign * reach * (1.0 - depth_share));
        c.set(across, cj.get(across) + rng.random_range(-slack..slack));
        scene.objects[i].bbox.center = c;
    }
    scene.injected = chosen;
    scene.injected.sort_unstable();
}

/// Ground-truth segmentation of one visible object.
#[derive(Debug, Clone)]
pub struct OracleDetection {
    pub index: usize,
    pub label: String,
    pub kind: ObjectKind,
    pub bbox2d: BBox2D,
    pub mask: Mask,
    pub visible_pixels: usize,
    pub silhouette_pixels: usize,
}

impl OracleDetection {
    pub fn visible_fraction(&self) -> f64 {
        if self.silhouette_pixels == 0 {
            0.0
        } else {
            self.visible_pixels as f64 / self.silhouette_pixels as f64
        }
    }

    pub fn detectable(&self) -> bool {
        self.visible_pixels >= MIN_VISIBLE_PIXELS
            && self.visible_fraction() >= VISIBLE_FRACTION_FOR_DETECTION
    }
}

#[derive(Debug, Clone)]
pub struct OracleRender {
    pub image: Image,
    pub depth: DepthMap,
    /// Visible objects in index order.
    pub detections: Vec<OracleDetection>,
    /// Per-pixel index of the visible object.
    pub id_buffer: Vec<Option<u16>>,
}

struct Hit {
    t: f64,
    shade: f64,
}

/// Ray/box intersection in the box frame; `None` on a miss.
fn intersect(b: &BBox3D, origin: Vec3, dir: Vec3) -> Option<Hit> {
    let (s, c) = crate::model::yaw_sin_cos(b.yaw);
    let local = |v: Vec3| Vec3::new(c * v.x + s * v.y, -s * v.x + c * v.y, v.z);
    let o = local(origin - b.center);
    let d = local(dir);
    let h = b.half_extents;
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    let mut near_axis = Axis::Z;
    for axis in Axis::ALL {
        let (oa, da, ha) = (o.get(axis), d.get(axis), h.get(axis));
        if da.abs() < 1e-15 {
            if oa.abs() > ha {
                return None;
            }
            continue;
        }
        let t1 = (-ha - oa) / da;
        let t2 = (ha - oa) / da;
        let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
        if lo > t_near {
            t_near = lo;
            near_axis = axis;
        }
        t_far = t_far.min(hi);
    }
    if t_near > t_far || t_far < 0.0 {
        return None;
    }
    let normal_sign = -d.get(near_axis).signum();
    let shade = match (near_axis, normal_sign > 0.0) {
        (Axis::Z, true) => 1.0,
        (Axis::X, false) => 0.8,
        (Axis::Y, false) => 0.65,
        _ => 0.5,
    };
    Some(Hit {
        t: t_near.max(0.0),
        shade,
    })
}

/// Renders color, quantized depth (`round(depth / alpha)`, clamped to
/// `[0, 255]`, background 255) and per-object masks.
pub fn render_isometric(scene: &GroundTruthScene) -> Result<OracleRender, OracleError> {
    scene.check_in_frame()?;
    Ok(render_with_camera(scene, &scene.camera))
}

/// Renders through an arbitrary camera (e.g. a window of the scene camera)
/// without the frame check; objects may be cut by the image border.
pub fn render_with_camera(scene: &GroundTruthScene, cam: &IsoCamera) -> OracleRender {
    let proj = Projector::new(cam);
    let dir = proj.view_direction();
    let (w, h) = (cam.image_w, cam.image_h);
    let visible: Vec<usize> = scene.visible_indices().collect();
    // Screen-space rectangles to skip boxes cheaply.
    let rects: Vec<(f64, f64, f64, f64)> = visible
        .iter()
        .map(|&i| {
            let pts = aabb_corners(&scene.objects[i].bbox.aabb()).map(|c| proj.project(c));
            pts.iter().fold(
                (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
                |(a, b, c, d), p| (a.min(p.0), b.min(p.1), c.max(p.0), d.max(p.1)),
            )
        })
        .collect();

    let n = scene.objects.len();
    let mut image = Image::new(w, h, WHITE);
    let mut depth = vec![255.0; w as usize * h as usize];
    let mut ids = vec![None; w as usize * h as usize];
    let mut silhouette = vec![0usize; n];
    for py in 0..h {
        for px in 0..w {
            let (fx, fy) = (f64::from(px) + 0.5, f64::from(py) + 0.5);
            let origin = proj.ray_origin(fx, fy);
            let mut best: Option<(usize, Hit)> = None;
            for (k, &i) in visible.iter().enumerate() {
                let r = rects[k];
                if fx < r.0 || fx > r.2 || fy < r.1 || fy > r.3 {
                    continue;
                }
                if let Some(hit) = intersect(&scene.objects[i].bbox, origin, dir) {
                    silhouette[i] += 1;
                    if best.as_ref().is_none_or(|(_, b)| hit.t < b.t) {
                        best = Some((i, hit));
                    }
                }
            }
            if let Some((i, hit)) = best {
                let idx = py as usize * w as usize + px as usize;
                let base = scene.objects[i].color;
                image.set(px, py, base.map(|c| (f64::from(c) * hit.shade).round() as u8));
                depth[idx] = (hit.t / cam.alpha).round().clamp(0.0, 255.0);
                ids[idx] = Some(i as u16);
            }
        }
    }

    let mut masks: Vec<Mask> = (0..n).map(|_| Mask::empty(w, h)).collect();
    let mut counts = vec![0usize; n];
    for (idx, id) in ids.iter().enumerate() {
        if let Some(i) = id {
            let i = *i as usize;
            masks[i].set((idx % w as usize) as u32, (idx / w as usize) as u32, true);
            counts[i] += 1;
        }
    }
    let detections = masks
        .into_iter()
        .enumerate()
        .filter(|(i, _)| counts[*i] > 0)
        .map(|(i, mask)| OracleDetection {
            index: i,
            label: scene.objects[i].label.clone(),
            kind: scene.objects[i].kind,
            bbox2d: mask.bbox().expect("nonempty mask"),
            mask,
            visible_pixels: counts[i],
            silhouette_pixels: silhouette[i],
        })
        .collect();
    OracleRender {
        image,
        depth: DepthMap::new(w, h, depth).expect("quantized depth in range"),
        detections,
        id_buffer: ids,
    }
}

/// 2D hull of the projected corners of one object.
pub fn projected_bbox(scene: &GroundTruthScene, index: usize) -> BBox2D {
    let proj = Projector::new(&scene.camera);
    let pts = aabb_corners(&scene.objects[index].bbox.aabb()).map(|c| proj.project(c));
    let (x0, y0, x1, y1) = pts.iter().fold(
        (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        |(a, b, c, d), p| (a.min(p.0), b.min(p.1), c.max(p.0), d.max(p.1)),
    );
    BBox2D::new(x0, y0, x1, y1).expect("box projects to an area")
}

/// Statistics of recovered boxes against ground truth, normalized by the
/// ground-truth scene diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundtripStats {
    pub center_rmse: f64,
    pub extent_rmse: f64,
    pub matched: usize,
    pub ground_truth: usize,
    pub recovered: usize,
    pub diagonal: f64,
}

/// Minimum total squared center distance matching, then RMS center and
/// extent errors over the matched pairs.
pub fn roundtrip_error(gt: &GroundTruthScene, recovered: &[BBox3D]) -> RoundtripStats {
    let truth: Vec<Aabb> = gt
        .visible_indices()
        .map(|i| gt.objects[i].bbox.aabb())
        .collect();
    let rec: Vec<Aabb> = recovered.iter().map(|b| b.aabb()).collect();
    let cost: Vec<Vec<f64>> = truth
        .iter()
        .map(|t| {
            rec.iter()
                .map(|r| {
                    let d = t.center() - r.center();
                    d.dot(d)
                })
                .collect()
        })
        .collect();
    let (mut c2, mut e2, mut matched) = (0.0, 0.0, 0usize);
    for (i, j) in min_cost_assignment(&cost) {
        matched += 1;
        let dc = truth[i].center() - rec[j].center();
        let de = truth[i].extents() - rec[j].extents();
        c2 += dc.dot(dc);
        e2 += de.dot(de);
    }
    let diagonal = gt.diagonal();
    let rms = |s: f64| {
        if matched == 0 || diagonal <= 0.0 {
            0.0
        } else {
            (s / matched as f64).sqrt() / diagonal
        }
    };
    RoundtripStats {
        center_rmse: rms(c2),
        extent_rmse: rms(e2),
        matched,
        ground_truth: truth.len(),
        recovered: rec.len(),
        diagonal,
    }
}

/// Hungarian assignment on a rectangular cost matrix; returns
/// `min(rows, cols)` `(row, col)` pairs sorted by row.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    if rows > cols {
        let t: Vec<Vec<f64>> = (0..cols).map(|j| (0..rows).map(|i| cost[i][j]).collect()).collect();
        let mut out: Vec<(usize, usize)> = min_cost_assignment(&t).into_iter().map(|(j, i)| (i, j)).collect();
        out.sort_unstable();
        return out;
    }
    // Potentials formulation, 1-based with a virtual column 0.
    let (n, m) = (rows, cols);
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out: Vec<(usize, usize)> = (1..=m).filter(|&j| p[j] != 0).map(|j| (p[j] - 1, j - 1)).collect();
    out.sort_unstable();
    out
}

/// Hand-built scenes and meshes used across the test suites.
pub mod fixtures {
    use super::*;
    use crate::mesh::Mesh;

    /// A bed, a floor vase and a small lamp hidden behind the vase.
    /// Indices: 0 bed, 1 vase, 2 lamp.
    pub fn vase_lamp_scene() -> GroundTruthScene {
        let diag = std::f64::consts::FRAC_1_SQRT_2;
        let vase_c = Vec3::new(0.1, 0.1, 0.15);
        let behind = 0.1 * 2.0_f64.sqrt() + 0.03 + 0.04 * 2.0_f64.sqrt();
        let lamp_c = Vec3::new(0.1 + behind * diag, 0.1 + behind * diag, 0.05);
        let objects = vec![
            OracleObject {
                label: "bed".into(),
                kind: ObjectKind::Furniture,
                bbox: BBox3D::new(Vec3::new(-0.3, 0.25, 0.06), Vec3::new(0.1, 0.15, 0.06), 0.0).unwrap(),
                color: PALETTE[0],
            },
            OracleObject {
                label: "vase".into(),
                kind: ObjectKind::Decor,
                bbox: BBox3D::new(vase_c, Vec3::new(0.1, 0.1, 0.15), 0.0).unwrap(),
                color: PALETTE[2],
            },
            OracleObject {
                label: "lamp".into(),
                kind: ObjectKind::Decor,
                bbox: BBox3D::new(lamp_c, Vec3::new(0.04, 0.04, 0.05), 0.0).unwrap(),
                color: PALETTE[4],
            },
        ];
        GroundTruthScene::placed(objects, IsoCamera::for_image(512, 512), 0).expect("fixture fits")
    }

    /// Scene with only the first `n` furniture pieces of a fixed layout.
    pub fn furniture_row(n: usize) -> GroundTruthScene {
        let objects = (0..n)
            .map(|i| OracleObject {
                label: FURNITURE[i % FURNITURE.len()].to_string(),
                kind: ObjectKind::Furniture,
                bbox: BBox3D::new(
                    Vec3::new(0.2 * i as f64, -0.1 * i as f64, 0.05),
                    Vec3::new(0.06, 0.05, 0.05),
                    0.0,
                )
                .unwrap(),
                color: PALETTE[i % PALETTE.len()],
            })
            .collect();
        GroundTruthScene::placed(objects, IsoCamera::for_image(512, 512), 0).expect("fixture fits")
    }

    /// Asymmetric L-shaped prism: a 2x2 square footprint minus one quadrant.
    pub fn l_mesh() -> Mesh {
        Mesh::from_boxes(&[
            (Vec3::new(0.0, 0.0, 0.0), Vec3::new(2.0, 1.0, 1.0)),
            (Vec3::new(0.0, 1.0, 0.0), Vec3::new(1.0, 2.0, 1.0)),
        ])
        .centered()
    }

    /// Plus-shaped prism, invariant under quarter turns.
    pub fn plus_mesh() -> Mesh {
        Mesh::from_boxes(&[
            (Vec3::new(-1.5, -0.5, 0.0), Vec3::new(1.5, 0.5, 1.0)),
            (Vec3::new(-0.5, -1.5, 0.0), Vec3::new(0.5, 1.5, 1.0)),
        ])
        .centered()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_determinism() {
        let a = random_scene(7, 11, 0.0).unwrap();
        let b = random_scene(7, 11, 0.0).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, random_scene(7, 12, 0.0).unwrap());
    }

    #[test]
    fn zero_injection_has_no_overlaps_and_floor_contact() {
        for seed in 0..20 {
            let s = random_scene(8, seed, 0.0).unwrap();
            assert!(s.injected.is_empty());
            for (i, a) in s.objects.iter().enumerate() {
                assert_eq!(a.bbox.aabb().min.z, 0.0);
                for b in &s.objects[i + 1..] {
                    assert!(!a.bbox.aabb().intersects(&b.bbox.aabb()));
                }
            }
        }
    }

    #[test]
    fn injection_count_is_ceiling() {
        let s = random_scene(5, 3, 0.4).unwrap();
        assert_eq!(s.injected.len(), 2);
        let s = random_scene(10, 3, 0.05).unwrap();
        assert_eq!(s.injected.len(), 1);
    }

    #[test]
    fn single_cube_bbox_matches_corner_projection() {
        let objects = vec![OracleObject {
            label: "cube".into(),
            kind: ObjectKind::Furniture,
            bbox: BBox3D::new(Vec3::new(0.0, 0.0, 0.1), Vec3::splat(0.1), 0.0).unwrap(),
            color: PALETTE[0],
        }];
        let scene = GroundTruthScene::placed(objects, IsoCamera::for_image(512, 512), 0).unwrap();
        let r = render_isometric(&scene).unwrap();
        let got = r.detections[0].bbox2d;
        let want = projected_bbox(&scene, 0);
        for (g, w) in got.to_array().iter().zip(want.to_array()) {
            assert!((g - w).abs() <= 1.0, "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn nearer_box_has_smaller_depth_where_it_occludes() {
        let scene = fixtures::vase_lamp_scene();
        let r = render_isometric(&scene).unwrap();
        let vase = r.detections.iter().find(|d| d.label == "vase").unwrap();
        let lamp_alone = {
            let mut s = scene.clone();
            s.hidden.insert(1);
            render_isometric(&s).unwrap()
        };
        let lamp = lamp_alone.detections.iter().find(|d| d.label == "lamp").unwrap();
        let shared: Vec<(u32, u32)> = lamp.mask.iter_set().filter(|&(x, y)| vase.mask.get(x, y)).collect();
        assert!(!shared.is_empty());
        for (x, y) in shared {
            assert!(r.depth.get(x, y) < lamp_alone.depth.get(x, y));
        }
        let lamp_seen = r.detections.iter().find(|d| d.label == "lamp");
        assert!(lamp_seen.is_none_or(|d| !d.detectable()));
    }

    #[test]
    fn depth_range_matches_alpha() {
        let cam = IsoCamera::for_image(512, 512);
        assert!((cam.alpha * 255.0 - cam.depth_range()).abs() < 1e-15);
        assert!((cam.depth_range() - 0.85).abs() < 1e-12);
    }

    #[test]
    fn roundtrip_identity_and_shift() {
        let s = random_scene(6, 1, 0.0).unwrap();
        let exact: Vec<BBox3D> = s.objects.iter().map(|o| o.bbox).collect();
        let st = roundtrip_error(&s, &exact);
        assert_eq!((st.center_rmse, st.extent_rmse, st.matched), (0.0, 0.0, 6));

        let missing = &exact[1..];
        assert_eq!(roundtrip_error(&s, missing).matched, 5);

        let shifted: Vec<BBox3D> = exact
            .iter()
            .map(|b| BBox3D { center: b.center + Vec3::new(0.1, 0.0, 0.0), ..*b })
            .collect();
        let st = roundtrip_error(&s, &shifted);
        assert!((st.center_rmse - 0.1 / s.diagonal()).abs() < 1e-12);
    }

    #[test]
    fn assignment_is_optimal_on_small_matrix() {
        let cost = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]];
        assert_eq!(min_cost_assignment(&cost), vec![(0, 1), (1, 0), (2, 2)]);
        let wide = vec![vec![5.0, 1.0, 9.0]];
        assert_eq!(min_cost_assignment(&wide), vec![(0, 1)]);
        let tall = vec![vec![5.0], vec![1.0], vec![9.0]];
        assert_eq!(min_cost_assignment(&tall), vec![(1, 0)]);
    }

    #[test]
    fn out_of_frame_is_an_error() {
        let mut s = random_scene(3, 0, 0.0).unwrap();
        s.objects[0].bbox.center.x += 10.0;
        assert!(matches!(render_isometric(&s), Err(OracleError::OutOfFrame { index: 0, .. })));
    }
}
