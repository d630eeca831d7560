//! Propose-select pose estimation over eight yaws about +z.

use crate::image::Image;
use crate::mesh::Mesh;
use crate::model::{normalize_yaw, rotated_half_extents, yaw_sin_cos, BBox3D, IsoCamera, Vec3};
use crate::providers::{FeatureExtractor, ProviderError, Renderer};

pub const CANDIDATE_YAWS: [f64; 8] = [0.0, 45.0, 90.0, 135.0, 180.0, 225.0, 270.0, 315.0];
/// Side length renders and segments are resampled to before scoring.
pub const FEATURE_INPUT_SIZE: u32 = 224;

#[derive(Debug, Clone, PartialEq)]
pub struct PoseCandidate {
    pub yaw: f64,
    pub size: Vec3,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseResult {
    pub yaw: f64,
    pub size: Vec3,
    pub score: f64,
    pub candidates: Vec<PoseCandidate>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PoseError {
    #[error("pose estimation failed: {}", .0.iter().map(|(y, e)| format!("yaw {y}: {e}")).collect::<Vec<_>>().join("; "))]
    AllFailed(Vec<(f64, String)>),
    #[error("feature vectors differ in length ({0} vs {1})")]
    FeatureMismatch(usize, usize),
    #[error("pose scoring at yaw {yaw}: {source}")]
    Provider { yaw: f64, source: ProviderError },
}

/// Full extents whose yaw-rotated hull matches the target hull.
///
/// Exact for multiples of 90 degrees and for yaws where the 2x2 hull system
/// has a positive solution. For the 45-degree family the system is singular;
/// there the native xy aspect is kept and scaled to the largest size that
/// fits inside the target footprint. Height always matches exactly.
pub fn fit_size_to_bbox(native_extents: Vec3, yaw: f64, target: &BBox3D) -> Vec3 {
    let t = target.aabb().extents();
    let y = normalize_yaw(yaw);
    if y % 180.0 == 0.0 {
        return t;
    }
    if y % 180.0 == 90.0 {
        return Vec3::new(t.y, t.x, t.z);
    }
    let (s, c) = yaw_sin_cos(y);
    let (s, c) = (s.abs(), c.abs());
    let det = c * c - s * s;
    if det.abs() > 1e-9 {
        let sx = (c * t.x - s * t.y) / det;
        let sy = (c * t.y - s * t.x) / det;
        if sx > 0.0 && sy > 0.0 {
            return Vec3::new(sx, sy, t.z);
        }
    }
    let r = rotated_half_extents(native_extents * 0.5, y) * 2.0;
    let lambda = (t.x / r.x).min(t.y / r.y);
    Vec3::new(native_extents.x * lambda, native_extents.y * lambda, t.z)
}

/// Feature-space L2 distance between a render and a segment of the same
/// resolution.
pub fn score_pose(render: &Image, segment: &Image, features: &dyn FeatureExtractor) -> Result<f64, PoseError> {
    let wrap = |source| PoseError::Provider { yaw: f64::NAN, source };
    let a = features.image_features(render).map_err(wrap)?;
    let b = features.image_features(segment).map_err(wrap)?;
    if a.len() != b.len() {
        return Err(PoseError::FeatureMismatch(a.len(), b.len()));
    }
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

fn to_feature_input(img: &Image) -> Image {
    if img.dims() == (FEATURE_INPUT_SIZE, FEATURE_INPUT_SIZE) {
        img.clone()
    } else {
        img.resized(FEATURE_INPUT_SIZE, FEATURE_INPUT_SIZE)
    }
}

/// Renders the asset at every candidate yaw inside the target box at its
/// center and keeps the candidate nearest to the segment; ties go to the
/// lowest yaw. `cam` must frame the segment (same pixel size).
pub fn select_pose(
    mesh: &Mesh,
    native_extents: Vec3,
    target: &BBox3D,
    segment: &Image,
    cam: &IsoCamera,
    renderer: &dyn Renderer,
    features: &dyn FeatureExtractor,
) -> Result<PoseResult, PoseError> {
    let seg = to_feature_input(segment);
    let seg_features = features
        .image_features(&seg)
        .map_err(|source| PoseError::Provider { yaw: f64::NAN, source })?;
    let mut candidates = Vec::new();
    let mut failures = Vec::new();
    for yaw in CANDIDATE_YAWS {
        let size = fit_size_to_bbox(native_extents, yaw, target);
        let scored = renderer
            .render(mesh, yaw, size, target.center, cam)
            .and_then(|img| features.image_features(&to_feature_input(&img)));
        match scored {
            Ok(f) if f.len() == seg_features.len() => {
                let score = f
                    .iter()
                    .zip(&seg_features)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt();
                candidates.push(PoseCandidate { yaw, size, score });
            }
            Ok(f) => failures.push((yaw, PoseError::FeatureMismatch(f.len(), seg_features.len()).to_string())),
            Err(e) => failures.push((yaw, e.to_string())),
        }
    }
    let best = candidates
        .iter()
        .min_by(|a, b| a.score.total_cmp(&b.score).then(a.yaw.total_cmp(&b.yaw)))
        .cloned()
        .ok_or(PoseError::AllFailed(failures))?;
    Ok(PoseResult {
        yaw: best.yaw,
        size: best.size,
        score: best.score,
        candidates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn target(extents: Vec3) -> BBox3D {
        BBox3D::new(Vec3::ZERO, extents * 0.5, 0.0).unwrap()
    }

    #[test]
    fn fit_identity() {
        let n = Vec3::new(2.0, 1.0, 1.0);
        assert_eq!(fit_size_to_bbox(n, 0.0, &target(n)), n);
    }

    #[test]
    fn fit_quarter_turn_swaps() {
        let s = fit_size_to_bbox(Vec3::new(2.0, 1.0, 1.0), 90.0, &target(Vec3::new(1.0, 2.0, 3.0)));
        assert_eq!(s, Vec3::new(2.0, 1.0, 3.0));
        let hull = rotated_half_extents(s * 0.5, 90.0) * 2.0;
        assert_eq!(hull, Vec3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn fit_diagonal_unit_cube() {
        let r2 = 2f64.sqrt();
        let s = fit_size_to_bbox(Vec3::splat(1.0), 45.0, &target(Vec3::new(r2, r2, 1.0)));
        assert!((s - Vec3::splat(1.0)).norm() < 1e-12);
    }

    #[test]
    fn fit_diagonal_stays_inside_target() {
        let t = Vec3::new(3.0, 2.0, 1.0);
        for yaw in [45.0, 135.0, 225.0, 315.0] {
            let s = fit_size_to_bbox(Vec3::new(2.0, 1.0, 0.5), yaw, &target(t));
            let hull = rotated_half_extents(s * 0.5, yaw) * 2.0;
            assert!(hull.x <= t.x + 1e-12 && hull.y <= t.y + 1e-12);
            assert!((hull.x - t.x).abs() < 1e-12 || (hull.y - t.y).abs() < 1e-12);
            assert_eq!(hull.z, t.z);
        }
    }

    #[test]
    fn fit_generic_yaw_is_exact() {
        let t = Vec3::new(3.0, 2.0, 1.0);
        let s = fit_size_to_bbox(Vec3::splat(1.0), 20.0, &target(t));
        let hull = rotated_half_extents(s * 0.5, 20.0) * 2.0;
        assert!((hull - t).norm() < 1e-12);
    }
}
