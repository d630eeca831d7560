//! Layout-quality metrics.
//!
//! OOR counts overlapping furniture objects (not pairs) per scene as a
//! percentage of that scene's furniture, then averages over scenes.
//! Intersections use the axis-aligned hulls of the yaw-rotated boxes, the
//! same collision model as the post-processor.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::image::Image;
use crate::model::{ObjectId, ObjectKind, SceneManifest, SceneObject, SupportState};
use crate::postprocess::is_exempt;
use crate::providers::ImageTextScorer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneOor {
    pub furniture: usize,
    pub overlapping: usize,
    /// `None` for scenes without furniture.
    pub oor: Option<f64>,
}

pub fn support_pairs(objects: &[SceneObject]) -> BTreeSet<(ObjectId, ObjectId)> {
    objects
        .iter()
        .filter_map(|o| match o.support {
            SupportState::OnObject(p) => Some((o.id, p)),
            _ => None,
        })
        .collect()
}

/// Ids of objects in a positive-volume overlap with some other object
/// under a non-exempt, non-support pair.
pub fn overlapping_objects(objects: &[SceneObject], exemptions: &BTreeSet<(String, String)>) -> BTreeSet<ObjectId> {
    let supports = support_pairs(objects);
    let boxes: Vec<_> = objects.iter().map(SceneObject::aabb).collect();
    let mut out = BTreeSet::new();
    for i in 0..objects.len() {
        for j in i + 1..objects.len() {
            let (a, b) = (&objects[i], &objects[j]);
            if supports.contains(&(a.id, b.id))
                || supports.contains(&(b.id, a.id))
                || is_exempt(exemptions, &a.label, &b.label)
            {
                continue;
            }
            if boxes[i].intersects(&boxes[j]) {
                out.insert(a.id);
                out.insert(b.id);
            }
        }
    }
    out
}

pub fn scene_oor(objects: &[SceneObject], exemptions: &BTreeSet<(String, String)>) -> SceneOor {
    let hits = overlapping_objects(objects, exemptions);
    let furniture: Vec<_> = objects.iter().filter(|o| o.kind == ObjectKind::Furniture).collect();
    let overlapping = furniture.iter().filter(|o| hits.contains(&o.id)).count();
    SceneOor {
        furniture: furniture.len(),
        overlapping,
        oor: (!furniture.is_empty()).then(|| 100.0 * overlapping as f64 / furniture.len() as f64),
    }
}

/// Mean per-scene OOR in percent; scenes without furniture are skipped.
/// Returns `None` when no scene has furniture.
pub fn oor(scenes: &[&[SceneObject]], exemptions: &BTreeSet<(String, String)>) -> (Option<f64>, Vec<SceneOor>) {
    let per: Vec<SceneOor> = scenes.par_iter().map(|s| scene_oor(s, exemptions)).collect();
    let vals: Vec<f64> = per.iter().filter_map(|s| s.oor).collect();
    for (i, s) in per.iter().enumerate() {
        if s.oor.is_none() {
            tracing::warn!(scene = i, "scene without furniture skipped in OOR");
        }
    }
    let mean = (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
    (mean, per)
}

pub fn oor_manifests(manifests: &[SceneManifest], exemptions: &BTreeSet<(String, String)>) -> (Option<f64>, Vec<SceneOor>) {
    let scenes: Vec<&[SceneObject]> = manifests.iter().map(|m| m.objects.as_slice()).collect();
    oor(&scenes, exemptions)
}

pub fn avg_furniture_count(scenes: &[&[SceneObject]]) -> f64 {
    if scenes.is_empty() {
        return 0.0;
    }
    let total: usize = scenes
        .iter()
        .map(|s| s.iter().filter(|o| o.kind == ObjectKind::Furniture).count())
        .sum();
    total as f64 / scenes.len() as f64
}

/// Mean image-text score over renders; `None` when there are no renders or
/// the scorer fails.
pub fn style_alignment(renders: &[Image], prompt: &str, scorer: Option<&dyn ImageTextScorer>) -> Option<f64> {
    let scorer = scorer?;
    if renders.is_empty() {
        return None;
    }
    let mut sum = 0.0;
    for r in renders {
        match scorer.image_text_score(r, prompt) {
            Ok(s) => sum += s,
            Err(e) => {
                tracing::warn!(error = %e, "style alignment unavailable");
                return None;
            }
        }
    }
    Some(sum / renders.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub oor: Option<f64>,
    pub avg_furniture: f64,
    pub style_alignment: Option<f64>,
    pub per_scene: Vec<SceneEval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneEval {
    pub path: String,
    pub objects: usize,
    #[serde(flatten)]
    pub oor: SceneOor,
}

pub fn evaluate(named: &[(String, SceneManifest)], exemptions: &BTreeSet<(String, String)>) -> EvalReport {
    let manifests: Vec<SceneManifest> = named.iter().map(|(_, m)| m.clone()).collect();
    let (mean, per) = oor_manifests(&manifests, exemptions);
    let scenes: Vec<&[SceneObject]> = manifests.iter().map(|m| m.objects.as_slice()).collect();
    EvalReport {
        oor: mean,
        avg_furniture: avg_furniture_count(&scenes),
        style_alignment: None,
        per_scene: named
            .iter()
            .zip(per)
            .map(|((p, m), oor)| SceneEval { path: p.clone(), objects: m.objects.len(), oor })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MeshRef, Vec3};
    use crate::postprocess::default_exemptions;
    use crate::providers::ProviderError;

    fn obj(id: u32, label: &str, kind: ObjectKind, c: Vec3) -> SceneObject {
        SceneObject::new(ObjectId(id), label, kind, MeshRef::for_object(ObjectId(id)), Vec3::splat(1.0), c, 0.0).unwrap()
    }

    #[test]
    fn oor_hand_cases() {
        let none = BTreeSet::new();
        let same = [obj(1, "a", ObjectKind::Furniture, Vec3::ZERO), obj(2, "b", ObjectKind::Furniture, Vec3::ZERO)];
        assert_eq!(oor(&[&same], &none).0, Some(100.0));
        let apart = [obj(1, "a", ObjectKind::Furniture, Vec3::ZERO), obj(2, "b", ObjectKind::Furniture, Vec3::new(1.0, 0.0, 0.0))];
        assert_eq!(oor(&[&apart], &none).0, Some(0.0));
        let cd = [obj(1, "chair", ObjectKind::Furniture, Vec3::ZERO), obj(2, "Desk", ObjectKind::Furniture, Vec3::new(0.3, 0.0, 0.0))];
        assert_eq!(oor(&[&cd], &default_exemptions()).0, Some(0.0));
        assert_eq!(oor(&[&cd], &none).0, Some(100.0));
    }

    #[test]
    fn decor_overlap_counts_only_furniture() {
        let s = [
            obj(1, "table", ObjectKind::Furniture, Vec3::ZERO),
            obj(2, "cabinet", ObjectKind::Furniture, Vec3::new(3.0, 0.0, 0.0)),
            obj(3, "vase", ObjectKind::Decor, Vec3::new(0.2, 0.0, 0.0)),
        ];
        let r = scene_oor(&s, &BTreeSet::new());
        assert_eq!((r.furniture, r.overlapping, r.oor), (2, 1, Some(50.0)));
        let mut bound = s.clone();
        bound[2].support = SupportState::OnObject(ObjectId(1));
        assert_eq!(scene_oor(&bound, &BTreeSet::new()).oor, Some(0.0));
    }

    #[test]
    fn furniture_count() {
        let a: Vec<_> = (0..4).map(|i| obj(i, "x", ObjectKind::Furniture, Vec3::new(2.0 * i as f64, 0.0, 0.0))).collect();
        let mut b: Vec<_> = (0..6).map(|i| obj(i, "x", ObjectKind::Furniture, Vec3::new(2.0 * i as f64, 0.0, 0.0))).collect();
        b.push(obj(9, "vase", ObjectKind::Decor, Vec3::ZERO));
        assert_eq!(avg_furniture_count(&[&a, &b]), 5.0);
        assert_eq!(avg_furniture_count(&[&[]]), 0.0);
    }

    struct Fixed(Vec<f64>, std::sync::atomic::AtomicUsize);
    impl ImageTextScorer for Fixed {
        fn image_text_score(&self, _: &Image, _: &str) -> Result<f64, ProviderError> {
            let i = self.1.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
            Ok(self.0[i])
        }
    }

    #[test]
    fn style_mean_and_absent() {
        let s = Fixed(vec![20.0, 40.0], Default::default());
        let imgs = vec![Image::new(2, 2, [0, 0, 0]); 2];
        assert_eq!(style_alignment(&imgs, "p", Some(&s)), Some(30.0));
        assert_eq!(style_alignment(&imgs, "p", None), None);
    }
}
