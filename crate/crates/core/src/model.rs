//! Domain types shared by every pipeline stage.
//!
//! World frame: +z up, lengths in unitless "scene meters". Orientation is a
//! single yaw about +z in degrees, normalized to `[0, 360)`.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};
use std::str::FromStr;

use bitvec::prelude::*;
use serde::{Deserialize, Serialize};

use crate::image::Image;

/// Depth scale that maps raw 0..255 depth output onto the image-plane units.
pub const DEFAULT_ALPHA: f64 = 1.0 / 300.0;
/// Rotation about the world up axis aligning the isometric camera.
pub const DEFAULT_YAW_ALIGN_DEG: f64 = -45.0;
/// Tilt about the camera horizontal axis aligning the isometric camera.
pub const DEFAULT_PITCH_ALIGN_DEG: f64 = -35.26;
/// Manifest schema version written by this crate.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("invalid bounding box: {0}")]
    InvalidBox(String),
    #[error("invalid depth map: {0}")]
    InvalidDepth(String),
    #[error("invalid mask: {0}")]
    InvalidMask(String),
    #[error("invalid object id `{0}`")]
    InvalidId(String),
    #[error("invalid support tag `{0}`")]
    InvalidSupport(String),
    #[error("invalid size for object {id}: every extent must be > 0")]
    InvalidSize { id: ObjectId },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub const fn splat(v: f64) -> Self {
        Self::new(v, v, v)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn dot(&self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm(&self) -> f64 {
        self.dot(*self).sqrt()
    }

    pub fn abs(&self) -> Vec3 {
        self.map(f64::abs)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Vec3 {
        Vec3::new(f(self.x), f(self.y), f(self.z))
    }

    pub fn zip(&self, other: Vec3, f: impl Fn(f64, f64) -> f64) -> Vec3 {
        Vec3::new(f(self.x, other.x), f(self.y, other.y), f(self.z, other.z))
    }

    pub fn min(&self, other: Vec3) -> Vec3 {
        self.zip(other, f64::min)
    }

    pub fn max(&self, other: Vec3) -> Vec3 {
        self.zip(other, f64::max)
    }

    /// Componentwise product.
    pub fn scale(&self, other: Vec3) -> Vec3 {
        self.zip(other, |a, b| a * b)
    }

    pub fn get(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.x,
            Axis::Y => self.y,
            Axis::Z => self.z,
        }
    }

    pub fn set(&mut self, axis: Axis, value: f64) {
        match axis {
            Axis::X => self.x = value,
            Axis::Y => self.y = value,
            Axis::Z => self.z = value,
        }
    }

    pub fn all_positive(&self) -> bool {
        self.x > 0.0 && self.y > 0.0 && self.z > 0.0
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        [v.x, v.y, v.z]
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, rhs: Vec3) -> Vec3 {
        self.zip(rhs, |a, b| a + b)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, rhs: Vec3) {
        *self = *self + rhs;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, rhs: Vec3) -> Vec3 {
        self.zip(rhs, |a, b| a - b)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        self.map(|a| -a)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, rhs: f64) -> Vec3 {
        self.map(|a| a * rhs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];
}

/// One of the six signed axis directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "+x")]
    PosX,
    #[serde(rename = "-x")]
    NegX,
    #[serde(rename = "+y")]
    PosY,
    #[serde(rename = "-y")]
    NegY,
    #[serde(rename = "+z")]
    PosZ,
    #[serde(rename = "-z")]
    NegZ,
}

impl Direction {
    /// Tie-break order for equal displacements.
    pub const ALL: [Direction; 6] = [
        Direction::PosX,
        Direction::NegX,
        Direction::PosY,
        Direction::NegY,
        Direction::PosZ,
        Direction::NegZ,
    ];
    pub const HORIZONTAL: [Direction; 4] = [
        Direction::PosX,
        Direction::NegX,
        Direction::PosY,
        Direction::NegY,
    ];

    pub fn axis(self) -> Axis {
        match self {
            Direction::PosX | Direction::NegX => Axis::X,
            Direction::PosY | Direction::NegY => Axis::Y,
            Direction::PosZ | Direction::NegZ => Axis::Z,
        }
    }

    pub fn is_positive(self) -> bool {
        matches!(self, Direction::PosX | Direction::PosY | Direction::PosZ)
    }

    pub fn sign(self) -> f64 {
        if self.is_positive() {
            1.0
        } else {
            -1.0
        }
    }

    pub fn unit(self) -> Vec3 {
        let mut v = Vec3::ZERO;
        v.set(self.axis(), self.sign());
        v
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::PosX => "+x",
            Direction::NegX => "-x",
            Direction::PosY => "+y",
            Direction::NegY => "-y",
            Direction::PosZ => "+z",
            Direction::NegZ => "-z",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Direction::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| ModelError::InvalidSupport(s.to_string()))
    }
}

/// The imaginary isometric camera that maps guide-image pixels to 3D.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsoCamera {
    pub cx: f64,
    pub cy: f64,
    pub fx: f64,
    pub fy: f64,
    pub alpha: f64,
    pub yaw_align: f64,
    pub pitch_align: f64,
    pub image_w: u32,
    pub image_h: u32,
}

impl IsoCamera {
    /// Default camera for an image: principal point at the center and
    /// `fx = fy = W/2`, so x' spans `[-1, 1]`.
    pub fn for_image(image_w: u32, image_h: u32) -> Self {
        let w = f64::from(image_w);
        let h = f64::from(image_h);
        Self {
            cx: w / 2.0,
            cy: h / 2.0,
            fx: w / 2.0,
            fy: w / 2.0,
            alpha: DEFAULT_ALPHA,
            yaw_align: DEFAULT_YAW_ALIGN_DEG,
            pitch_align: DEFAULT_PITCH_ALIGN_DEG,
            image_w,
            image_h,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.validate_window()?;
        if self.cx < 0.0
            || self.cx > f64::from(self.image_w)
            || self.cy < 0.0
            || self.cy > f64::from(self.image_h)
        {
            return Err(ModelError::InvalidCamera(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.image_w, self.image_h
            )));
        }
        Ok(())
    }

    /// Checks everything but the principal point, which a window of a
    /// larger frame may place outside its own pixels.
    pub fn validate_window(&self) -> Result<(), ModelError> {
        let vals = [
            self.cx,
            self.cy,
            self.fx,
            self.fy,
            self.alpha,
            self.yaw_align,
            self.pitch_align,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("camera"));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(ModelError::InvalidCamera("focal scale must be > 0".into()));
        }
        if self.alpha <= 0.0 {
            return Err(ModelError::InvalidCamera("alpha must be > 0".into()));
        }
        if self.image_w == 0 || self.image_h == 0 {
            return Err(ModelError::InvalidCamera("image size must be nonzero".into()));
        }
        Ok(())
    }

    /// Same camera restricted to a pixel window of the image; rendering with
    /// it yields exactly that window of the full-frame render.
    pub fn window(&self, x0: u32, y0: u32, w: u32, h: u32) -> IsoCamera {
        IsoCamera {
            cx: self.cx - f64::from(x0),
            cy: self.cy - f64::from(y0),
            image_w: w,
            image_h: h,
            ..*self
        }
    }

    /// Depth range in world units covered by 8-bit depth output.
    pub fn depth_range(&self) -> f64 {
        self.alpha * 255.0
    }
}

/// Raw monocular depth output, values in `[0, 255]`, larger is farther.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: u32,
    height: u32,
    values: Vec<f64>,
}

impl DepthMap {
    pub fn new(width: u32, height: u32, values: Vec<f64>) -> Result<Self, ModelError> {
        if values.len() != width as usize * height as usize {
            return Err(ModelError::InvalidDepth(format!(
                "{} values for a {width}x{height} map",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=255.0).contains(*v)) {
            return Err(ModelError::InvalidDepth(format!("value {v} outside [0, 255]")));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn filled(width: u32, height: u32, value: f64) -> Result<Self, ModelError> {
        Self::new(width, height, vec![value; width as usize * height as usize])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Axis-aligned 2D box in pixel coordinates. Pixel `(i, j)` belongs to the
/// box when its center `(i + 0.5, j + 0.5)` lies inside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox2D {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BBox2D {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, ModelError> {
        let b = Self {
            x_min,
            y_min,
            x_max,
            y_max,
        };
        if ![x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite()) {
            return Err(ModelError::NonFinite("bbox2d"));
        }
        if x_min >= x_max || y_min >= y_max {
            return Err(ModelError::InvalidBox(format!(
                "degenerate 2D box [{x_min}, {y_min}, {x_max}, {y_max}]"
            )));
        }
        Ok(b)
    }

    /// Clamps to the image; fails if nothing is left.
    pub fn clamped(&self, width: u32, height: u32) -> Result<Self, ModelError> {
        let (w, h) = (f64::from(width), f64::from(height));
        Self::new(
            self.x_min.clamp(0.0, w),
            self.y_min.clamp(0.0, h),
            self.x_max.clamp(0.0, w),
            self.y_max.clamp(0.0, h),
        )
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains_pixel(&self, x: u32, y: u32) -> bool {
        let (px, py) = (f64::from(x) + 0.5, f64::from(y) + 0.5);
        px >= self.x_min && px <= self.x_max && py >= self.y_min && py <= self.y_max
    }

    pub fn iou(&self, other: &BBox2D) -> f64 {
        let w = (self.x_max.min(other.x_max) - self.x_min.max(other.x_min)).max(0.0);
        let h = (self.y_max.min(other.y_max) - self.y_min.max(other.y_min)).max(0.0);
        let inter = w * h;
        let union = self.area() + other.area() - inter;
        if union > 0.0 {
            inter / union
        } else {
            0.0
        }
    }

    /// Integer pixel window `(x0, y0, w, h)` covering the box, clipped to the image.
    pub fn pixel_window(&self, width: u32, height: u32) -> (u32, u32, u32, u32) {
        let x0 = (self.x_min.floor().max(0.0) as u32).min(width.saturating_sub(1));
        let y0 = (self.y_min.floor().max(0.0) as u32).min(height.saturating_sub(1));
        let x1 = (self.x_max.ceil() as u32).clamp(x0 + 1, width);
        let y1 = (self.y_max.ceil() as u32).clamp(y0 + 1, height);
        (x0, y0, x1 - x0, y1 - y0)
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }
}

/// Binary segmentation mask aligned to the source image.
#[derive(Clone, PartialEq, Eq)]
pub struct Mask {
    width: u32,
    height: u32,
    bits: BitVec,
}

impl fmt::Debug for Mask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Mask")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("count", &self.count())
            .finish()
    }
}

impl Mask {
    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: bitvec![0; width as usize * height as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> bool) -> Self {
        let mut m = Self::empty(width, height);
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    m.set(x, y, true);
                }
            }
        }
        m
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        x < self.width && y < self.height && self.bits[self.index(x, y)]
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        let i = self.index(x, y);
        self.bits.set(i, value);
    }

    pub fn count(&self) -> usize {
        self.bits.count_ones()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.not_any()
    }

    pub fn iter_set(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width as usize;
        self.bits
            .iter_ones()
            .map(move |i| ((i % w) as u32, (i / w) as u32))
    }

    /// Tight pixel-edge bounding box of the set pixels.
    pub fn bbox(&self) -> Option<BBox2D> {
        let mut it = self.iter_set();
        let (x, y) = it.next()?;
        let (mut x0, mut y0, mut x1, mut y1) = (x, y, x, y);
        for (x, y) in it {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        BBox2D::new(
            f64::from(x0),
            f64::from(y0),
            f64::from(x1 + 1),
            f64::from(y1 + 1),
        )
        .ok()
    }

    pub fn union_with(&mut self, other: &Mask) {
        assert_eq!((self.width, self.height), (other.width, other.height));
        self.bits |= other.bits.clone();
    }

    pub fn intersection_count(&self, other: &Mask) -> usize {
        self.bits
            .iter_ones()
            .filter(|&i| other.bits.get(i).map(|b| *b).unwrap_or(false))
            .count()
    }

    /// Checks the ownership invariant: every set pixel lies in `bbox`.
    pub fn check_within(&self, bbox: &BBox2D) -> Result<(), ModelError> {
        match self.iter_set().find(|&(x, y)| !bbox.contains_pixel(x, y)) {
            Some((x, y)) => Err(ModelError::InvalidMask(format!(
                "pixel ({x}, {y}) outside its bounding box"
            ))),
            None => Ok(()),
        }
    }

    /// Restricts the mask to pixels inside `bbox`.
    pub fn clipped_to(&self, bbox: &BBox2D) -> Mask {
        let mut out = self.clone();
        for (x, y) in self.iter_set() {
            if !bbox.contains_pixel(x, y) {
                out.set(x, y, false);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectKind {
    Furniture,
    Decor,
}

impl ObjectKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ObjectKind::Furniture => "furniture",
            ObjectKind::Decor => "decor",
        }
    }
}

impl FromStr for ObjectKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "furniture" => Ok(ObjectKind::Furniture),
            "decor" | "decoration" | "decorative" => Ok(ObjectKind::Decor),
            other => Err(format!("unknown object kind `{other}`")),
        }
    }
}

/// Run-unique object identifier; ids increase with detection order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ObjectId(pub u32);

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "obj{:03}", self.0)
    }
}

impl FromStr for ObjectId {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.strip_prefix("obj")
            .and_then(|n| n.parse().ok())
            .map(ObjectId)
            .ok_or_else(|| ModelError::InvalidId(s.to_string()))
    }
}

impl Serialize for ObjectId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ObjectId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A segmented object found in the guide image.
#[derive(Debug, Clone)]
pub struct DetectedObject {
    pub id: ObjectId,
    pub label: String,
    pub kind: ObjectKind,
    pub bbox2d: BBox2D,
    pub mask: Mask,
    pub confidence: f64,
    /// Object segment on a white background, cropped to `bbox2d`.
    pub crop: Image,
    pub description: String,
    /// 1 or 2.
    pub detection_pass: u8,
}

/// Normalizes degrees to `[0, 360)`.
pub fn normalize_yaw(deg: f64) -> f64 {
    let y = deg.rem_euclid(360.0);
    if y >= 360.0 {
        0.0
    } else {
        y
    }
}

/// `(sin, cos)` of a yaw in degrees, exact on multiples of 45.
pub fn yaw_sin_cos(deg: f64) -> (f64, f64) {
    use std::f64::consts::FRAC_1_SQRT_2 as H;
    let y = normalize_yaw(deg);
    if y % 45.0 == 0.0 {
        match (y / 45.0) as u32 {
            0 => return (0.0, 1.0),
            1 => return (H, H),
            2 => return (1.0, 0.0),
            3 => return (H, -H),
            4 => return (0.0, -1.0),
            5 => return (-H, -H),
            6 => return (-1.0, 0.0),
            7 => return (-H, H),
            _ => {}
        }
    }
    y.to_radians().sin_cos()
}

/// Half extents of the axis-aligned hull of a box rotated by `yaw` about +z.
pub fn rotated_half_extents(half: Vec3, yaw_deg: f64) -> Vec3 {
    let (s, c) = yaw_sin_cos(yaw_deg);
    let (s, c) = (s.abs(), c.abs());
    Vec3::new(c * half.x + s * half.y, s * half.x + c * half.y, half.z)
}

/// Axis-aligned box given by its corners.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn from_center_half(center: Vec3, half: Vec3) -> Self {
        Self {
            min: center - half,
            max: center + half,
        }
    }

    pub fn extents(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.min(other.min),
            max: self.max.max(other.max),
        }
    }

    pub fn diagonal(&self) -> f64 {
        self.extents().norm()
    }

    /// Signed overlap length along one axis (negative when separated).
    pub fn overlap_along(&self, other: &Aabb, axis: Axis) -> f64 {
        self.max.get(axis).min(other.max.get(axis)) - self.min.get(axis).max(other.min.get(axis))
    }

    /// True when the intersection has positive volume (zero margin).
    pub fn intersects(&self, other: &Aabb) -> bool {
        Axis::ALL
            .iter()
            .all(|&a| self.overlap_along(other, a) > 0.0)
    }

    pub fn intersection_volume(&self, other: &Aabb) -> f64 {
        Axis::ALL
            .iter()
            .map(|&a| self.overlap_along(other, a).max(0.0))
            .product()
    }

    /// Area of the (x, y) footprint intersection.
    pub fn footprint_overlap(&self, other: &Aabb) -> f64 {
        self.overlap_along(other, Axis::X).max(0.0) * self.overlap_along(other, Axis::Y).max(0.0)
    }

    pub fn face(&self, dir: Direction) -> f64 {
        if dir.is_positive() {
            self.max.get(dir.axis())
        } else {
            self.min.get(dir.axis())
        }
    }
}

/// Box with extents, center and yaw about +z; the unit of layout reasoning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox3D {
    pub center: Vec3,
    pub half_extents: Vec3,
    pub yaw: f64,
}

impl BBox3D {
    pub fn new(center: Vec3, half_extents: Vec3, yaw: f64) -> Result<Self, ModelError> {
        if !center.is_finite() || !half_extents.is_finite() || !yaw.is_finite() {
            return Err(ModelError::NonFinite("bbox3d"));
        }
        if !half_extents.all_positive() {
            return Err(ModelError::InvalidBox(format!(
                "half extents {half_extents:?} must be > 0"
            )));
        }
        Ok(Self {
            center,
            half_extents,
            yaw: normalize_yaw(yaw),
        })
    }

    pub fn from_aabb(aabb: &Aabb) -> Result<Self, ModelError> {
        Self::new(aabb.center(), aabb.extents() * 0.5, 0.0)
    }

    pub fn extents(&self) -> Vec3 {
        self.half_extents * 2.0
    }

    /// Axis-aligned hull of the rotated box.
    pub fn aabb(&self) -> Aabb {
        Aabb::from_center_half(self.center, rotated_half_extents(self.half_extents, self.yaw))
    }
}

/// How a placed object is held in the scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SupportState {
    OnFloor,
    /// Horizontal direction of the wall the object touches.
    OnWall(Direction),
    OnObject(ObjectId),
    Free,
}

impl SupportState {
    pub fn to_tag(&self) -> String {
        match self {
            SupportState::OnFloor => "floor".into(),
            SupportState::OnWall(d) => format!("wall:{d}"),
            SupportState::OnObject(id) => format!("object:{id}"),
            SupportState::Free => "free".into(),
        }
    }
}

impl fmt::Display for SupportState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_tag())
    }
}

impl FromStr for SupportState {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ModelError::InvalidSupport(s.to_string());
        match s {
            "floor" => Ok(SupportState::OnFloor),
            "free" => Ok(SupportState::Free),
            _ => {
                if let Some(d) = s.strip_prefix("wall:") {
                    let d: Direction = d.parse().map_err(|_| bad())?;
                    if d.axis() == Axis::Z {
                        return Err(bad());
                    }
                    Ok(SupportState::OnWall(d))
                } else if let Some(id) = s.strip_prefix("object:") {
                    Ok(SupportState::OnObject(id.parse().map_err(|_| bad())?))
                } else {
                    Err(bad())
                }
            }
        }
    }
}

impl Serialize for SupportState {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_tag())
    }
}

impl<'de> Deserialize<'de> for SupportState {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Relative path of a mesh file inside an exported scene.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MeshRef(pub String);

impl MeshRef {
    pub fn for_object(id: ObjectId) -> Self {
        MeshRef(format!("objects/{id}/mesh.obj"))
    }
}

/// A placed asset. The id equals the id of the detection it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: ObjectId,
    pub label: String,
    pub kind: ObjectKind,
    #[serde(rename = "mesh")]
    pub asset: MeshRef,
    pub location: Vec3,
    /// Full extents in the asset frame, before yaw.
    pub size: Vec3,
    #[serde(rename = "yaw_deg")]
    pub yaw: f64,
    pub support: SupportState,
}

impl SceneObject {
    pub fn new(
        id: ObjectId,
        label: impl Into<String>,
        kind: ObjectKind,
        asset: MeshRef,
        size: Vec3,
        location: Vec3,
        yaw: f64,
    ) -> Result<Self, ModelError> {
        if !size.is_finite() || !location.is_finite() || !yaw.is_finite() {
            return Err(ModelError::NonFinite("scene object"));
        }
        if !size.all_positive() {
            return Err(ModelError::InvalidSize { id });
        }
        Ok(Self {
            id,
            label: label.into(),
            kind,
            asset,
            location,
            size,
            yaw: normalize_yaw(yaw),
            support: SupportState::Free,
        })
    }

    pub fn bbox(&self) -> BBox3D {
        BBox3D {
            center: self.location,
            half_extents: self.size * 0.5,
            yaw: self.yaw,
        }
    }

    pub fn aabb(&self) -> Aabb {
        self.bbox().aabb()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloorPlane {
    pub z: f64,
    pub center: [f64; 2],
    pub extent: [f64; 2],
    pub texture: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WallAxis {
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WallSign {
    #[serde(rename = "+")]
    Pos,
    #[serde(rename = "-")]
    Neg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WallPlane {
    pub axis: WallAxis,
    pub sign: WallSign,
    pub offset: f64,
    pub height: f64,
    pub texture: Option<String>,
}

impl WallPlane {
    pub fn direction(&self) -> Direction {
        match (self.axis, self.sign) {
            (WallAxis::X, WallSign::Pos) => Direction::PosX,
            (WallAxis::X, WallSign::Neg) => Direction::NegX,
            (WallAxis::Y, WallSign::Pos) => Direction::PosY,
            (WallAxis::Y, WallSign::Neg) => Direction::NegY,
        }
    }
}

/// A warning attached to the manifest; skipped objects are recorded here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunWarning {
    pub stage: String,
    pub object: Option<ObjectId>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ManifestMeta {
    #[serde(default)]
    pub stages: Vec<String>,
    #[serde(default)]
    pub providers: BTreeMap<String, String>,
    #[serde(default)]
    pub skipped: Vec<ObjectId>,
    #[serde(default)]
    pub warnings: Vec<RunWarning>,
    #[serde(default)]
    pub stats: BTreeMap<String, f64>,
}

/// Exportable scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub schema_version: u32,
    pub units: String,
    pub prompt: String,
    pub seed: u64,
    pub objects: Vec<SceneObject>,
    pub floor: Option<FloorPlane>,
    pub walls: Vec<WallPlane>,
    #[serde(default)]
    pub meta: ManifestMeta,
}

impl SceneManifest {
    pub fn new(prompt: impl Into<String>, seed: u64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            units: "meters".into(),
            prompt: prompt.into(),
            seed,
            objects: Vec::new(),
            floor: None,
            walls: Vec::new(),
            meta: ManifestMeta::default(),
        }
    }

    pub fn object(&self, id: ObjectId) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn yaw_normalization() {
        let b = BBox3D::new(Vec3::ZERO, Vec3::splat(0.5), 405.0).unwrap();
        assert_eq!(b.yaw, 45.0);
        assert_eq!(normalize_yaw(-90.0), 270.0);
        assert_eq!(normalize_yaw(360.0), 0.0);
        assert_eq!(normalize_yaw(-1e-20), 0.0);
    }

    #[test]
    fn rotated_hull_of_square_at_45() {
        let h = rotated_half_extents(Vec3::splat(0.5), 45.0);
        assert!((h.x - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(h.z, 0.5);
        assert_eq!(rotated_half_extents(Vec3::new(1.0, 0.5, 0.5), 90.0), Vec3::new(0.5, 1.0, 0.5));
    }

    #[test]
    fn bbox3d_rejects_flat_extents() {
        assert!(BBox3D::new(Vec3::ZERO, Vec3::new(1.0, 0.0, 1.0), 0.0).is_err());
        assert!(BBox3D::new(Vec3::new(f64::NAN, 0.0, 0.0), Vec3::splat(1.0), 0.0).is_err());
    }

    #[test]
    fn support_tags_round_trip() {
        for s in [
            SupportState::OnFloor,
            SupportState::Free,
            SupportState::OnWall(Direction::NegY),
            SupportState::OnObject(ObjectId(12)),
        ] {
            assert_eq!(s.to_tag().parse::<SupportState>().unwrap(), s);
        }
        assert!("wall:+z".parse::<SupportState>().is_err());
        assert!("object:chair".parse::<SupportState>().is_err());
    }

    #[test]
    fn object_id_display_and_parse() {
        assert_eq!(ObjectId(7).to_string(), "obj007");
        assert_eq!("obj1234".parse::<ObjectId>().unwrap(), ObjectId(1234));
        assert!("7".parse::<ObjectId>().is_err());
    }

    #[test]
    fn camera_validation() {
        let mut cam = IsoCamera::for_image(512, 512);
        assert!(cam.validate().is_ok());
        cam.alpha = -1.0;
        assert!(cam.validate().is_err());
        let mut cam = IsoCamera::for_image(512, 512);
        cam.cx = 600.0;
        assert!(cam.validate().is_err());
    }

    #[test]
    fn mask_bbox_and_ownership() {
        let m = Mask::from_fn(10, 10, |x, y| (2..5).contains(&x) && (3..4).contains(&y));
        let b = m.bbox().unwrap();
        assert_eq!(b.to_array(), [2.0, 3.0, 5.0, 4.0]);
        assert!(m.check_within(&b).is_ok());
        let small = BBox2D::new(2.0, 3.0, 4.0, 4.0).unwrap();
        assert!(m.check_within(&small).is_err());
        assert_eq!(m.clipped_to(&small).count(), 2);
    }

    #[test]
    fn depth_map_range_checked() {
        assert!(DepthMap::new(2, 1, vec![0.0, 255.0]).is_ok());
        assert!(DepthMap::new(2, 1, vec![0.0, 256.0]).is_err());
        assert!(DepthMap::new(2, 2, vec![0.0]).is_err());
    }

    #[test]
    fn aabb_touching_is_not_intersecting() {
        let a = Aabb::from_center_half(Vec3::ZERO, Vec3::splat(0.5));
        let b = Aabb::from_center_half(Vec3::new(1.0, 0.0, 0.0), Vec3::splat(0.5));
        assert!(!a.intersects(&b));
        assert_eq!(a.intersection_volume(&b), 0.0);
        let c = Aabb::from_center_half(Vec3::new(0.8, 0.0, 0.0), Vec3::splat(0.5));
        assert!(a.intersects(&c));
        assert!((a.intersection_volume(&c) - 0.2).abs() < 1e-12);
    }
}
