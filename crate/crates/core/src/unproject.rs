//! Lifting guide-image pixels into the world frame with monocular depth.
//!
//! Camera coordinates are `(x', y', z)`: `x'` to the image right, `y'` to the
//! image up, `z` along the viewing ray away from the camera. That frame is
//! left-handed, so the camera-to-world map is a fixed axis permutation
//! (right -> +x, up -> +z, ray -> +y) followed by the pitch and yaw
//! alignment rotations. The composite is orthogonal (length preserving and
//! exactly invertible by its transpose).

use nalgebra::{Matrix3, Rotation3, Vector3};

use crate::model::{BBox3D, DepthMap, DetectedObject, IsoCamera, Mask, ObjectId, Vec3};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum UnprojectError {
    #[error("pixel ({x}, {y}) outside the {w}x{h} image")]
    PixelOutOfBounds { x: f64, y: f64, w: u32, h: u32 },
    #[error("depth value {0} outside [0, 255]")]
    DepthOutOfRange(f64),
    #[error("depth map is {depth_w}x{depth_h} but the mask is {mask_w}x{mask_h}")]
    SizeMismatch {
        depth_w: u32,
        depth_h: u32,
        mask_w: u32,
        mask_h: u32,
    },
    #[error("degenerate segment for {0}: no volume after trimming")]
    DegenerateSegment(ObjectId),
}

/// Percentile band kept per world axis before taking the box hull.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trim {
    pub lower: f64,
    pub upper: f64,
}

impl Trim {
    pub const NONE: Trim = Trim {
        lower: 0.0,
        upper: 1.0,
    };
}

impl Default for Trim {
    fn default() -> Self {
        Trim {
            lower: 0.02,
            upper: 0.98,
        }
    }
}

/// Eqs. for the imaginary camera: `x' = (x - cx)/fx`, `y' = -(y - cy)/fy`,
/// `z = alpha * depth`.
pub fn pixel_to_camera(px: (f64, f64), depth_value: f64, cam: &IsoCamera) -> Result<Vec3, UnprojectError> {
    let (x, y) = px;
    let (w, h) = (f64::from(cam.image_w), f64::from(cam.image_h));
    if !(0.0..=w).contains(&x) || !(0.0..=h).contains(&y) {
        return Err(UnprojectError::PixelOutOfBounds {
            x,
            y,
            w: cam.image_w,
            h: cam.image_h,
        });
    }
    if !(0.0..=255.0).contains(&depth_value) {
        return Err(UnprojectError::DepthOutOfRange(depth_value));
    }
    Ok(Vec3::new(
        (x - cam.cx) / cam.fx,
        -(y - cam.cy) / cam.fy,
        cam.alpha * depth_value,
    ))
}

/// Camera-to-world matrix for the camera's alignment angles.
pub fn camera_to_world_matrix(cam: &IsoCamera) -> Matrix3<f64> {
    let permute = Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0);
    let pitch = Rotation3::from_axis_angle(&Vector3::x_axis(), cam.pitch_align.to_radians());
    let yaw = Rotation3::from_axis_angle(&Vector3::z_axis(), cam.yaw_align.to_radians());
    yaw.matrix() * pitch.matrix() * permute
}

fn apply(m: &Matrix3<f64>, v: Vec3) -> Vec3 {
    let r = m * Vector3::new(v.x, v.y, v.z);
    Vec3::new(r.x, r.y, r.z)
}

pub fn camera_to_world(v: Vec3, cam: &IsoCamera) -> Vec3 {
    apply(&camera_to_world_matrix(cam), v)
}

pub fn world_to_camera(w: Vec3, cam: &IsoCamera) -> Vec3 {
    apply(&camera_to_world_matrix(cam).transpose(), w)
}

/// Precomputed projector for many points with one camera.
#[derive(Debug, Clone)]
pub struct Projector {
    cam: IsoCamera,
    to_world: Matrix3<f64>,
    to_camera: Matrix3<f64>,
}

impl Projector {
    pub fn new(cam: &IsoCamera) -> Self {
        let to_world = camera_to_world_matrix(cam);
        Self {
            cam: *cam,
            to_world,
            to_camera: to_world.transpose(),
        }
    }

    pub fn camera(&self) -> &IsoCamera {
        &self.cam
    }

    pub fn camera_to_world(&self, v: Vec3) -> Vec3 {
        apply(&self.to_world, v)
    }

    pub fn world_to_camera(&self, w: Vec3) -> Vec3 {
        apply(&self.to_camera, w)
    }

    /// World point to `(pixel x, pixel y, camera depth)`.
    pub fn project(&self, w: Vec3) -> (f64, f64, f64) {
        let c = self.world_to_camera(w);
        (
            self.cam.cx + self.cam.fx * c.x,
            self.cam.cy - self.cam.fy * c.y,
            c.z,
        )
    }

    /// World direction of the viewing ray (camera `+z`).
    pub fn view_direction(&self) -> Vec3 {
        self.camera_to_world(Vec3::new(0.0, 0.0, 1.0))
    }

    /// World point on the depth-zero plane under a pixel position.
    pub fn ray_origin(&self, px: f64, py: f64) -> Vec3 {
        self.camera_to_world(Vec3::new(
            (px - self.cam.cx) / self.cam.fx,
            -(py - self.cam.cy) / self.cam.fy,
            0.0,
        ))
    }

    pub fn unproject(&self, px: (f64, f64), depth_value: f64) -> Result<Vec3, UnprojectError> {
        pixel_to_camera(px, depth_value, &self.cam).map(|c| self.camera_to_world(c))
    }
}

/// World points of every masked pixel, sampled at pixel centers.
pub fn mask_points(mask: &Mask, depth: &DepthMap, cam: &IsoCamera) -> Result<Vec<Vec3>, UnprojectError> {
    if (mask.width(), mask.height()) != (depth.width(), depth.height()) {
        return Err(UnprojectError::SizeMismatch {
            depth_w: depth.width(),
            depth_h: depth.height(),
            mask_w: mask.width(),
            mask_h: mask.height(),
        });
    }
    let proj = Projector::new(cam);
    mask.iter_set()
        .map(|(x, y)| {
            proj.unproject(
                (f64::from(x) + 0.5, f64::from(y) + 0.5),
                depth.get(x, y),
            )
        })
        .collect()
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Axis-aligned box (yaw 0) over the trimmed point set.
pub fn robust_box(points: &[Vec3], trim: Trim, id: ObjectId) -> Result<BBox3D, UnprojectError> {
    if points.len() < 2 {
        return Err(UnprojectError::DegenerateSegment(id));
    }
    let mut bands = [(0.0, 0.0); 3];
    for (k, band) in bands.iter_mut().enumerate() {
        let mut vals: Vec<f64> = points.iter().map(|p| [p.x, p.y, p.z][k]).collect();
        vals.sort_by(f64::total_cmp);
        *band = (quantile(&vals, trim.lower), quantile(&vals, trim.upper));
    }
    let inside = |p: &&Vec3| {
        [p.x, p.y, p.z]
            .iter()
            .zip(&bands)
            .all(|(v, (lo, hi))| v >= lo && v <= hi)
    };
    let mut lo = Vec3::splat(f64::INFINITY);
    let mut hi = Vec3::splat(f64::NEG_INFINITY);
    let mut kept = 0usize;
    for p in points.iter().filter(inside) {
        lo = lo.min(*p);
        hi = hi.max(*p);
        kept += 1;
    }
    if kept == 0 {
        return Err(UnprojectError::DegenerateSegment(id));
    }
    BBox3D::new((lo + hi) * 0.5, (hi - lo) * 0.5, 0.0)
        .map_err(|_| UnprojectError::DegenerateSegment(id))
}

/// Lifts a segmented object to a world-frame box with the default trim.
pub fn bbox2d_to_bbox3d(obj: &DetectedObject, depth: &DepthMap, cam: &IsoCamera) -> Result<BBox3D, UnprojectError> {
    lift_mask(&obj.mask, depth, cam, Trim::default(), obj.id)
}

pub fn lift_mask(
    mask: &Mask,
    depth: &DepthMap,
    cam: &IsoCamera,
    trim: Trim,
    id: ObjectId,
) -> Result<BBox3D, UnprojectError> {
    let points = mask_points(mask, depth, cam)?;
    robust_box(&points, trim, id)
}
