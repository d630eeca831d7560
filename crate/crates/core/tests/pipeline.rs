use std::collections::BTreeSet;
use std::sync::Arc;

use artiscene_core::assembly::{import_scene, manifest_bytes};
use artiscene_core::config::Config;
use artiscene_core::image::Image;
use artiscene_core::metrics::scene_oor;
use artiscene_core::model::{Mask, ObjectId, ObjectKind};
use artiscene_core::oracle::{self, fixtures};
use artiscene_core::orchestrator::{
    build_detection_vocabulary, detect_two_pass, prepare_object_crop, write_run_dir, CropSettings, ObjectEdit, Pipeline,
    PipelineInput, RawDetection, RunRequest,
};
use artiscene_core::postprocess::default_exemptions;
use artiscene_core::providers::cache::{CachedTransport, ResponseCache};
use artiscene_core::providers::mock::{guide_image, MockProvider};
use artiscene_core::providers::{
    DescribeKind, DescribeOutput, Describer, Inpainter, ProviderClient, ProviderError, Transport,
};
use artiscene_core::runlog::RunLog;

fn mock_client() -> ProviderClient {
    ProviderClient::new(Arc::new(MockProvider::new(0)))
}

fn pipeline_over(t: Arc<dyn Transport>) -> Pipeline {
    Pipeline::new(ProviderClient::new(t), Config::default(), Arc::new(RunLog::disabled()))
}

fn prompt_request(seed: u64) -> RunRequest {
    RunRequest {
        input: PipelineInput::Prompt("a cozy bedroom".into()),
        scene_type: "bedroom".into(),
        seed,
    }
}

#[test]
fn oracle_scenes_round_trip_within_tolerance() {
    let p = pipeline_over(Arc::new(MockProvider::new(0)));
    for seed in 0..6u64 {
        let scene = oracle::random_scene(5 + seed as usize, seed, 0.0).unwrap();
        let out = p
            .run(&RunRequest { input: PipelineInput::Image(guide_image(&scene)), scene_type: "room".into(), seed })
            .unwrap();
        let st = oracle::roundtrip_error(&scene, &out.boxes());
        assert_eq!(st.matched, st.ground_truth, "seed {seed}");
        assert!(st.center_rmse <= 0.02 && st.extent_rmse <= 0.05, "seed {seed}: {st:?}");
    }
}

#[test]
fn two_pass_recovers_the_hidden_lamp() {
    let c = mock_client();
    let img = guide_image(&fixtures::vase_lamp_scene());
    let vocab = build_detection_vocabulary("bedroom", &img, &c).unwrap();
    let two = detect_two_pass(&img, &vocab, &c, &c).unwrap();
    let decor: BTreeSet<&str> = two
        .detections
        .iter()
        .filter(|d| d.kind == ObjectKind::Decor)
        .map(|d| d.label.as_str())
        .collect();
    let furniture: Vec<&str> = two
        .detections
        .iter()
        .filter(|d| d.kind == ObjectKind::Furniture)
        .map(|d| d.label.as_str())
        .collect();
    assert_eq!(decor, BTreeSet::from(["vase", "lamp"]));
    assert_eq!(furniture, vec!["bed"]);
    let lamp = two.detections.iter().find(|d| d.label == "lamp").unwrap();
    assert_eq!(lamp.pass, 2);
    assert_eq!(two.pass2_decor_share, Some(0.5));
}

#[test]
fn scene_without_decor_needs_no_cleaning() {
    let c = mock_client();
    let img = guide_image(&fixtures::furniture_row(3));
    let vocab = build_detection_vocabulary("room", &img, &c).unwrap();
    let two = detect_two_pass(&img, &vocab, &c, &c).unwrap();
    assert_eq!(two.detections.len(), 3);
    assert!(two.detections.iter().all(|d| d.kind == ObjectKind::Furniture && d.pass == 2));
    assert_eq!(two.pass2_decor_share, None);
    assert!(two.cleaned == img);
}

fn full_box_detection(img: &Image) -> RawDetection {
    let c = mock_client();
    let vocab = build_detection_vocabulary("room", img, &c).unwrap();
    detect_two_pass(img, &vocab, &c, &c).unwrap().detections.remove(0)
}

#[test]
fn amodal_completion_only_for_low_coverage() {
    let c = mock_client();
    let img = guide_image(&fixtures::furniture_row(2));
    let det = full_box_detection(&img);
    let settings = CropSettings { coverage_threshold: 0.85, amodal_seeds: 6 };
    let p = prepare_object_crop(ObjectId(1), &det, &img, settings, &c, &c).unwrap();
    assert!(p.coverage < 0.85 && p.amodal);
    assert!(!p.description.is_empty());
    let mut full = det.clone();
    let (w, h) = img.dims();
    full.mask = Mask::from_fn(w, h, |x, y| det.bbox.contains_pixel(x, y));
    let q = prepare_object_crop(ObjectId(1), &full, &img, settings, &c, &c).unwrap();
    assert!(q.coverage > 0.97 && !q.amodal);
}

struct BrokenJudge(ProviderClient);

impl Describer for BrokenJudge {
    fn describe(
        &self,
        kind: DescribeKind,
        image: Option<&Image>,
        scene_type: Option<&str>,
        candidates: &[Image],
    ) -> Result<DescribeOutput, ProviderError> {
        if kind == DescribeKind::JudgeInpaint {
            return Err(ProviderError::Server {
                op: "describe".into(),
                input_hash: "0".into(),
                status: 500,
                message: "judge down".into(),
            });
        }
        self.0.describe(kind, image, scene_type, candidates)
    }
}

struct Numbered;

impl Inpainter for Numbered {
    fn inpaint_remove(&self, image: &Image, _: &Mask) -> Result<Image, ProviderError> {
        Ok(image.clone())
    }
    fn inpaint_amodal(&self, crop: &Image, _: &Mask, n: usize) -> Result<Vec<Image>, ProviderError> {
        Ok((0..n).map(|i| crop.clone().with_meta("seed", i.to_string())).collect())
    }
}

#[test]
fn judge_failure_falls_back_to_seed_zero() {
    let img = guide_image(&fixtures::furniture_row(2));
    let det = full_box_detection(&img);
    let settings = CropSettings { coverage_threshold: 0.85, amodal_seeds: 6 };
    let p = prepare_object_crop(ObjectId(1), &det, &img, settings, &Numbered, &BrokenJudge(mock_client())).unwrap();
    assert_eq!(p.crop.meta_get("seed"), Some("0"));
    assert_eq!(p.warnings.len(), 1);
}

#[test]
fn same_seed_gives_identical_manifests() {
    let a = pipeline_over(Arc::new(MockProvider::new(0))).run(&prompt_request(7)).unwrap();
    let b = pipeline_over(Arc::new(MockProvider::new(0))).run(&prompt_request(7)).unwrap();
    assert_eq!(manifest_bytes(&a.manifest).unwrap(), manifest_bytes(&b.manifest).unwrap());
    assert_eq!(a.manifest.meta.stages.first().map(String::as_str), Some("guide"));
}

#[test]
fn warm_cache_matches_cold_cache() {
    let dir = tempfile::tempdir().unwrap();
    let run = || {
        let cache = Arc::new(ResponseCache::on_disk(dir.path()).unwrap());
        let t = Arc::new(CachedTransport::new(
            Arc::new(MockProvider::new(0)),
            cache.clone(),
            Arc::new(RunLog::disabled()),
        ));
        let out = pipeline_over(t).run(&prompt_request(3)).unwrap();
        (manifest_bytes(&out.manifest).unwrap(), cache.hits(), cache.misses())
    };
    let (cold, _, cold_misses) = run();
    let (warm, warm_hits, warm_misses) = run();
    assert!(cold_misses > 0);
    assert_eq!(warm_misses, 0);
    assert!(warm_hits > 0);
    assert_eq!(cold, warm);
}

#[test]
fn output_has_no_overlaps_and_conserves_objects() {
    for seed in [1u64, 2, 3] {
        let out = pipeline_over(Arc::new(MockProvider::new(0))).run(&prompt_request(seed)).unwrap();
        let m = &out.manifest;
        assert_eq!(scene_oor(&m.objects, &default_exemptions()).oor, Some(0.0), "seed {seed}");
        let placed: BTreeSet<ObjectId> = m.objects.iter().map(|o| o.id).collect();
        let skipped: BTreeSet<ObjectId> = m.meta.skipped.iter().copied().collect();
        assert!(placed.is_disjoint(&skipped));
        let n = (placed.len() + skipped.len()) as u32;
        assert_eq!(placed.union(&skipped).copied().collect::<Vec<_>>(), (1..=n).map(ObjectId).collect::<Vec<_>>());
        assert_eq!(out.objects.len(), placed.len());
        assert!(out.objects.iter().all(|r| !r.detection.description.is_empty()));
        let floor = m.floor.as_ref().unwrap();
        for o in &m.objects {
            assert!(floor.z <= o.aabb().min.z + 1e-12);
        }
    }
}

#[test]
fn run_directory_exports_and_reimports() {
    let dir = tempfile::tempdir().unwrap();
    let out = pipeline_over(Arc::new(MockProvider::new(0))).run(&prompt_request(5)).unwrap();
    let path = write_run_dir(&out, dir.path()).unwrap();
    assert!(path.ends_with("manifest.json"));
    for f in ["guide.png", "depth.png", "detections.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let obj_dir = dir.path().join(&out.manifest.objects[0].asset.0).parent().unwrap().to_path_buf();
    for f in ["crop.png", "mask.png", "description.txt", "mesh.obj"] {
        assert!(obj_dir.join(f).exists(), "{f}");
    }
    let (m, assets) = import_scene(dir.path()).unwrap();
    assert_eq!(m, out.manifest);
    assert_eq!(assets.meshes.len(), out.assets.meshes.len());
}

#[test]
fn edit_touches_only_the_target() {
    let p = pipeline_over(Arc::new(MockProvider::new(0)));
    let out = p.run(&prompt_request(9)).unwrap();
    let target = out.manifest.objects[0].clone();
    let original_desc = out.objects.iter().find(|r| r.detection.id == target.id).unwrap().detection.description.clone();
    let edit = ObjectEdit::Prompt { text: "a red bed with extents 0.1x0.2x0.05".into(), crop: None };
    let (edited, assets) = p.edit_object(&out.manifest, &out.assets, target.id, &edit).unwrap();
    let e = edited.object(target.id).unwrap();
    assert_eq!((e.size, e.location, e.yaw), (target.size, target.location, target.yaw));
    assert_ne!(e.asset, target.asset);
    for (a, b) in out.manifest.objects.iter().zip(&edited.objects).skip(1) {
        assert_eq!(a, b);
    }
    let revert = ObjectEdit::Prompt { text: original_desc, crop: None };
    let (back, back_assets) = p.edit_object(&edited, &assets, target.id, &revert).unwrap();
    let mut expected = back.clone();
    expected.objects[0].asset = target.asset.clone();
    assert_eq!(expected, out.manifest);
    assert_eq!(back_assets.meshes[&back.objects[0].asset], out.assets.meshes[&target.asset]);
    assert!(matches!(
        p.edit_object(&out.manifest, &out.assets, ObjectId(999), &edit),
        Err(artiscene_core::orchestrator::PipelineError::UnknownObject(_))
    ));
}
