use std::collections::BTreeMap;
use std::time::Instant;

use artiscene_core::metrics::scene_oor;
use artiscene_core::model::{ObjectId, SceneObject, SupportState, Vec3};
use artiscene_core::postprocess::{
    apply_supports, associate_supports, default_exemptions, object_extrema, postprocess, resolve_occlusions,
    snap_to_extrema, PostprocessConfig,
};
use artiscene_core::oracle::random_layout;
use proptest::prelude::*;

fn by_id(objs: &[SceneObject]) -> BTreeMap<ObjectId, SceneObject> {
    objs.iter().map(|o| (o.id, o.clone())).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn snapping_twice_changes_nothing(seed in any::<u64>()) {
        let cfg = PostprocessConfig::default();
        let mut objs = random_layout(seed);
        let ext = object_extrema(&objs).unwrap();
        let first = snap_to_extrema(&mut objs, &ext, &cfg);
        let once = objs.clone();
        let second = snap_to_extrema(&mut objs, &ext, &cfg);
        prop_assert_eq!(once, objs);
        prop_assert_eq!(first, second);
    }

    #[test]
    fn postprocess_keeps_sizes_yaws_and_contacts(seed in any::<u64>()) {
        let cfg = PostprocessConfig::default();
        let mut objs = random_layout(seed);
        let before = by_id(&objs);
        let ext = object_extrema(&objs).unwrap();
        let supports = associate_supports(&objs, &cfg);
        apply_supports(&mut objs, &supports);
        let snap = snap_to_extrema(&mut objs, &ext, &cfg);
        let snapped = by_id(&objs);
        let outcome = resolve_occlusions(&mut objs, &supports, &snap, &cfg);
        let after = by_id(&objs);
        for (id, o) in &after {
            prop_assert_eq!(o.size, before[id].size);
            prop_assert_eq!(o.yaw, before[id].yaw);
        }
        for id in &snap.floor {
            prop_assert!((snapped[id].aabb().min.z - ext.0.min.z).abs() <= 1e-12);
            prop_assert_eq!(after[id].location.z, snapped[id].location.z);
        }
        for (d, f) in &supports {
            prop_assert_eq!(after[d].support, SupportState::OnObject(*f));
            let want = snapped[d].location - snapped[f].location;
            let got = after[d].location - after[f].location;
            prop_assert!((got - want).norm() <= 1e-9, "{:?} vs {:?}", got, want);
        }
        if outcome.converged() {
            prop_assert_eq!(scene_oor(&objs, &cfg.overlap_exemptions).overlapping, 0);
        }
    }

    #[test]
    fn oor_is_translation_and_scale_invariant(seed in any::<u64>(), dx in -5.0..5.0f64, dy in -5.0..5.0f64, k in 0.5..4.0f64) {
        let objs = random_layout(seed);
        let ex = default_exemptions();
        let moved: Vec<SceneObject> = objs
            .iter()
            .map(|o| {
                let mut o = o.clone();
                o.location = o.location * k + Vec3::new(dx, dy, 0.0);
                o.size = o.size * k;
                o
            })
            .collect();
        let a = scene_oor(&objs, &ex);
        let b = scene_oor(&moved, &ex);
        prop_assert_eq!(a, b);
    }
}

#[test]
fn ten_thousand_scenes_postprocess_quickly() {
    let cfg = PostprocessConfig::default();
    let t = Instant::now();
    let mut converged = 0;
    for seed in 0..10_000u64 {
        let mut objs = random_layout(seed);
        if postprocess(&mut objs, &cfg).unwrap().outcome.converged() {
            converged += 1;
        }
    }
    let secs = t.elapsed().as_secs_f64();
    assert!(secs < 30.0, "{secs:.1}s");
    assert!(converged >= 9_900, "{converged}");
}
