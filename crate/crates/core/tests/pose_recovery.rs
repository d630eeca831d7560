use std::sync::Arc;

use artiscene_core::model::{BBox3D, IsoCamera, Vec3};
use artiscene_core::oracle::fixtures::{l_mesh, plus_mesh};
use artiscene_core::pose::{fit_size_to_bbox, select_pose, CANDIDATE_YAWS};
use artiscene_core::providers::mock::{silhouette, MockProvider};
use artiscene_core::providers::ProviderClient;

fn client() -> ProviderClient {
    ProviderClient::new(Arc::new(MockProvider::new(0)))
}

/// Axis-aligned target box holding `mesh` scaled to `native` and turned by `yaw`.
fn target_for(native: Vec3, yaw: f64, center: Vec3) -> BBox3D {
    let hull = BBox3D::new(center, native * 0.5, yaw).unwrap().aabb();
    BBox3D::from_aabb(&hull).unwrap()
}

#[test]
fn l_shape_yaw_is_recovered_at_every_candidate() {
    let c = client();
    let mesh = l_mesh();
    let native = Vec3::new(0.2, 0.2, 0.1);
    let cam = IsoCamera::for_image(256, 256);
    let center = Vec3::new(0.0, 0.0, 0.05);
    let mut hits = 0;
    for truth in CANDIDATE_YAWS {
        let target = target_for(native, truth, center);
        let size = fit_size_to_bbox(native, truth, &target);
        let segment = silhouette(&mesh, truth, size, center, &cam);
        let r = select_pose(&mesh, native, &target, &segment, &cam, &c, &c).unwrap();
        assert_eq!(r.candidates.len(), 8);
        if r.yaw == truth && r.score == 0.0 {
            hits += 1;
        } else {
            eprintln!("truth {truth} picked {}", r.yaw);
        }
    }
    assert_eq!(hits, 8);
}

#[test]
fn symmetric_shape_ties_to_zero() {
    let c = client();
    let mesh = plus_mesh();
    let native = Vec3::new(0.2, 0.2, 0.1);
    let cam = IsoCamera::for_image(256, 256);
    let center = Vec3::new(0.0, 0.0, 0.05);
    let target = target_for(native, 90.0, center);
    let segment = silhouette(&mesh, 90.0, native, center, &cam);
    let r = select_pose(&mesh, native, &target, &segment, &cam, &c, &c).unwrap();
    assert_eq!(r.yaw, 0.0);
}
