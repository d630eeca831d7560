//! Layout repair: extrema snapping, support binding, occlusion resolution
//! and repeated-asset clustering.

use std::collections::{BTreeMap, BTreeSet};

use crate::model::{Aabb, Axis, BBox3D, Direction, ObjectId, ObjectKind, SceneObject, SupportState, Vec3};
use crate::providers::{ProviderError, TextEmbedder};

#[derive(Debug, Clone, PartialEq)]
pub struct PostprocessConfig {
    /// Fraction of the scene diagonal.
    pub snap_margin: f64,
    /// Fraction of the supporter's height.
    pub support_gap: f64,
    pub max_deocclusion_rounds: u32,
    pub repetition_threshold: f64,
    /// Unordered label pairs allowed to overlap.
    pub overlap_exemptions: BTreeSet<(String, String)>,
}

impl Default for PostprocessConfig {
    fn default() -> Self {
        Self {
            snap_margin: 0.05,
            support_gap: 0.05,
            max_deocclusion_rounds: 10,
            repetition_threshold: 0.95,
            overlap_exemptions: default_exemptions(),
        }
    }
}

pub fn default_exemptions() -> BTreeSet<(String, String)> {
    [exemption_pair("chair", "desk")].into_iter().collect()
}

/// Normalized (sorted, lowercase) label pair.
pub fn exemption_pair(a: &str, b: &str) -> (String, String) {
    let (a, b) = (a.to_lowercase(), b.to_lowercase());
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

pub fn is_exempt(exemptions: &BTreeSet<(String, String)>, a: &str, b: &str) -> bool {
    exemptions.contains(&exemption_pair(a, b))
}

impl PostprocessConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.snap_margin >= 0.0) {
            return Err("postprocess.snap_margin must be >= 0".into());
        }
        if !(self.support_gap >= 0.0) {
            return Err("postprocess.support_gap must be >= 0".into());
        }
        if !(self.repetition_threshold > 0.0 && self.repetition_threshold <= 1.0) {
            return Err("postprocess.repetition_threshold must be in (0, 1]".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PostprocessError {
    #[error("scene has no objects")]
    EmptyScene,
}

/// Scene bounds in the six axis directions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extrema(pub Aabb);

impl Extrema {
    pub fn face(&self, d: Direction) -> f64 {
        self.0.face(d)
    }

    pub fn diagonal(&self) -> f64 {
        self.0.diagonal()
    }

    /// `(x_min, x_max, y_min, y_max, z_min, z_max)`.
    pub fn as_tuple(&self) -> [f64; 6] {
        let Aabb { min, max } = self.0;
        [min.x, max.x, min.y, max.y, min.z, max.z]
    }
}

pub fn compute_scene_extrema(boxes: &[BBox3D]) -> Result<Extrema, PostprocessError> {
    boxes
        .iter()
        .map(BBox3D::aabb)
        .reduce(|a, b| a.union(&b))
        .map(Extrema)
        .ok_or(PostprocessError::EmptyScene)
}

pub fn object_extrema(objects: &[SceneObject]) -> Result<Extrema, PostprocessError> {
    compute_scene_extrema(&objects.iter().map(SceneObject::bbox).collect::<Vec<_>>())
}

/// Directions considered for snapping; there is no ceiling.
pub const SNAP_DIRECTIONS: [Direction; 5] = [
    Direction::PosX,
    Direction::NegX,
    Direction::PosY,
    Direction::NegY,
    Direction::NegZ,
];

/// Contacts established by snapping.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SnapRecord {
    pub floor: BTreeSet<ObjectId>,
    pub walls: BTreeMap<Direction, BTreeSet<ObjectId>>,
}

impl SnapRecord {
    pub fn contacts(&self, id: ObjectId) -> Vec<Direction> {
        let mut out: Vec<Direction> = self
            .walls
            .iter()
            .filter(|(_, ids)| ids.contains(&id))
            .map(|(d, _)| *d)
            .collect();
        if self.floor.contains(&id) {
            out.push(Direction::NegZ);
        }
        out
    }

    pub fn wall_directions(&self) -> Vec<Direction> {
        self.walls
            .iter()
            .filter(|(_, ids)| !ids.is_empty())
            .map(|(d, _)| *d)
            .collect()
    }
}

fn translate(o: &mut SceneObject, delta: Vec3) {
    o.location = o.location + delta;
}

fn bound_to(objects: &[SceneObject], parent: ObjectId) -> Vec<usize> {
    objects
        .iter()
        .enumerate()
        .filter(|(_, o)| o.support == SupportState::OnObject(parent))
        .map(|(i, _)| i)
        .collect()
}

/// Translates objects within `snap_margin * diagonal` of a scene extremum
/// flush against it. Per axis only the nearer extremum applies. Objects
/// bound to a supporter are skipped and carried along with it.
pub fn snap_to_extrema(objects: &mut [SceneObject], extrema: &Extrema, cfg: &PostprocessConfig) -> SnapRecord {
    let margin = cfg.snap_margin * extrema.diagonal();
    // Gaps at rounding level count as contact without moving, which makes
    // a second application a no-op.
    let eps = 1e-12 * extrema.diagonal().max(1.0);
    let mut record = SnapRecord::default();
    for i in 0..objects.len() {
        if matches!(objects[i].support, SupportState::OnObject(_)) {
            continue;
        }
        let id = objects[i].id;
        let mut delta = Vec3::ZERO;
        let mut walls = Vec::new();
        let mut floor = false;
        for axis in Axis::ALL {
            let a = objects[i].aabb();
            let best = SNAP_DIRECTIONS
                .iter()
                .filter(|d| d.axis() == axis)
                .map(|&d| (d, (extrema.face(d) - a.face(d)).abs()))
                .filter(|(_, gap)| *gap <= margin)
                .min_by(|x, y| x.1.total_cmp(&y.1));
            let Some((d, gap)) = best else {
                continue;
            };
            if gap > eps {
                delta.set(axis, extrema.face(d) - a.face(d));
            }
            if d == Direction::NegZ {
                floor = true;
            } else {
                walls.push(d);
            }
        }
        if delta != Vec3::ZERO {
            translate(&mut objects[i], delta);
            for j in bound_to(objects, id) {
                translate(&mut objects[j], delta);
            }
        }
        if floor {
            record.floor.insert(id);
            objects[i].support = SupportState::OnFloor;
        } else if let Some(&d) = walls.first() {
            objects[i].support = SupportState::OnWall(d);
        }
        for d in walls {
            record.walls.entry(d).or_default().insert(id);
        }
    }
    record
}

/// Binds each decor object to the furniture whose top it rests on: vertical
/// gap within `support_gap * height` and overlapping footprints; the largest
/// footprint overlap wins, then the lowest id.
pub fn associate_supports(objects: &[SceneObject], cfg: &PostprocessConfig) -> Vec<(ObjectId, ObjectId)> {
    let mut out = Vec::new();
    for d in objects.iter().filter(|o| o.kind == ObjectKind::Decor) {
        let da = d.aabb();
        let best = objects
            .iter()
            .filter(|f| f.kind == ObjectKind::Furniture)
            .filter_map(|f| {
                let fa = f.aabb();
                let height = fa.extents().z;
                let gap = (fa.max.z - da.min.z).abs();
                let overlap = fa.footprint_overlap(&da);
                (gap <= cfg.support_gap * height && overlap > 0.0).then_some((overlap, f.id))
            })
            .max_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
        if let Some((_, f)) = best {
            out.push((d.id, f));
        }
    }
    out
}

pub fn apply_supports(objects: &mut [SceneObject], supports: &[(ObjectId, ObjectId)]) {
    for (d, f) in supports {
        if let Some(o) = objects.iter_mut().find(|o| o.id == *d) {
            o.support = SupportState::OnObject(*f);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResolveOutcome {
    /// Rounds that moved at least one object.
    pub rounds: u32,
    pub moves: usize,
    /// Non-exempt pairs still overlapping when the round budget ran out.
    pub residual: Vec<(ObjectId, ObjectId)>,
}

impl ResolveOutcome {
    pub fn converged(&self) -> bool {
        self.residual.is_empty()
    }
}

struct Groups {
    /// Group root (supporter) per object index.
    root: Vec<usize>,
}

impl Groups {
    fn new(objects: &[SceneObject]) -> Self {
        let root = objects
            .iter()
            .enumerate()
            .map(|(i, o)| match o.support {
                SupportState::OnObject(p) => objects.iter().position(|x| x.id == p).unwrap_or(i),
                _ => i,
            })
            .collect();
        Self { root }
    }

    fn members(&self, root: usize) -> Vec<usize> {
        (0..self.root.len()).filter(|&i| self.root[i] == root).collect()
    }
}

fn pair_exempt(a: &SceneObject, b: &SceneObject, supports: &BTreeSet<(ObjectId, ObjectId)>, cfg: &PostprocessConfig) -> bool {
    supports.contains(&(a.id, b.id))
        || supports.contains(&(b.id, a.id))
        || is_exempt(&cfg.overlap_exemptions, &a.label, &b.label)
}

/// Moves the farther object of every overlapping non-exempt pair along the
/// admissible axis direction with the smallest displacement, until a round
/// makes no move or the round budget is spent.
pub fn resolve_occlusions(
    objects: &mut [SceneObject],
    supports: &[(ObjectId, ObjectId)],
    contacts: &SnapRecord,
    cfg: &PostprocessConfig,
) -> ResolveOutcome {
    let support_set: BTreeSet<(ObjectId, ObjectId)> = supports.iter().copied().collect();
    let groups = Groups::new(objects);
    let mut outcome = ResolveOutcome::default();
    if objects.is_empty() {
        return outcome;
    }
    for _ in 0..cfg.max_deocclusion_rounds {
        let corner = object_extrema(objects).expect("nonempty").0.min;
        let mut order: Vec<usize> = (0..objects.len()).collect();
        order.sort_by(|&a, &b| {
            let da = (objects[a].location - corner).norm();
            let db = (objects[b].location - corner).norm();
            da.total_cmp(&db).then(objects[a].id.cmp(&objects[b].id))
        });
        let mut moved = false;
        for (k, &near) in order.iter().enumerate() {
            for &far in &order[k + 1..] {
                if groups.root[near] == groups.root[far]
                    || pair_exempt(&objects[near], &objects[far], &support_set, cfg)
                    || !objects[near].aabb().intersects(&objects[far].aabb())
                {
                    continue;
                }
                separate(objects, &groups, near, far, contacts, &support_set, cfg);
                outcome.moves += 1;
                moved = true;
            }
        }
        if !moved {
            break;
        }
        outcome.rounds += 1;
    }
    outcome.residual = overlapping_pairs(objects, &support_set, cfg);
    outcome
}

/// Non-exempt, non-support pairs with positive-volume overlap.
pub fn overlapping_pairs(
    objects: &[SceneObject],
    supports: &BTreeSet<(ObjectId, ObjectId)>,
    cfg: &PostprocessConfig,
) -> Vec<(ObjectId, ObjectId)> {
    let mut out = Vec::new();
    for i in 0..objects.len() {
        for j in i + 1..objects.len() {
            let (a, b) = (&objects[i], &objects[j]);
            if !pair_exempt(a, b, supports, cfg) && a.aabb().intersects(&b.aabb()) {
                out.push((a.id.min(b.id), a.id.max(b.id)));
            }
        }
    }
    out.sort();
    out
}

fn displacement(near: &Aabb, far: &Aabb, d: Direction) -> f64 {
    let a = d.axis();
    if d.is_positive() {
        near.max.get(a) - far.min.get(a)
    } else {
        far.max.get(a) - near.min.get(a)
    }
}

fn separate(
    objects: &mut [SceneObject],
    groups: &Groups,
    near: usize,
    far: usize,
    contacts: &SnapRecord,
    supports: &BTreeSet<(ObjectId, ObjectId)>,
    cfg: &PostprocessConfig,
) {
    let members = groups.members(groups.root[far]);
    let mut floor = false;
    let mut wall_axes = BTreeSet::new();
    for &m in &members {
        let o = &objects[m];
        if matches!(o.support, SupportState::OnObject(_)) {
            floor = true;
        }
        for d in contacts.contacts(o.id) {
            match d {
                Direction::NegZ | Direction::PosZ => floor = true,
                _ => {
                    wall_axes.insert(d.axis());
                }
            }
        }
        if o.support == SupportState::OnFloor {
            floor = true;
        }
    }
    let na = objects[near].aabb();
    let fa = objects[far].aabb();
    let candidates = |respect_walls: bool| {
        let mut v: Vec<(Direction, f64)> = Direction::ALL
            .into_iter()
            .filter(|d| !(floor && d.axis() == Axis::Z))
            .filter(|d| !(respect_walls && wall_axes.contains(&d.axis())))
            .map(|d| (d, displacement(&na, &fa, d)))
            .collect();
        v.sort_by(|a, b| a.1.total_cmp(&b.1));
        v
    };
    let mut options = candidates(true);
    if options.is_empty() {
        options = candidates(false);
    }
    let target = |dir: Direction, amount: f64| {
        let axis = dir.axis();
        let mut c = objects[far].location.get(axis) + dir.sign() * amount;
        let mut probe = objects[far].clone();
        loop {
            probe.location.set(axis, c);
            if probe.aabb().overlap_along(&na, axis) <= 0.0 {
                return c;
            }
            c = if dir.is_positive() { c.next_up() } else { c.next_down() };
        }
    };
    let moved = |dir: Direction, c: f64| {
        let axis = dir.axis();
        let mut delta = Vec3::ZERO;
        delta.set(axis, c - objects[far].location.get(axis));
        members
            .iter()
            .map(|&m| {
                let mut o = objects[m].clone();
                if m == far {
                    o.location.set(axis, c);
                } else {
                    translate(&mut o, delta);
                }
                (m, o)
            })
            .collect::<Vec<_>>()
    };
    let collides = |placed: &[(usize, SceneObject)]| {
        placed.iter().any(|(_, o)| {
            let a = o.aabb();
            objects.iter().enumerate().any(|(k, other)| {
                groups.root[k] != groups.root[far]
                    && !pair_exempt(o, other, supports, cfg)
                    && a.intersects(&other.aabb())
            })
        })
    };
    let mut chosen = None;
    for &(dir, amount) in &options {
        let placed = moved(dir, target(dir, amount));
        if !collides(&placed) {
            chosen = Some(placed);
            break;
        }
        chosen.get_or_insert(placed);
    }
    for (m, o) in chosen.expect("horizontal directions remain") {
        objects[m] = o;
    }
}

/// Result of the full post-processing sequence.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PostprocessReport {
    pub supports: Vec<(ObjectId, ObjectId)>,
    pub snap: SnapRecord,
    pub outcome: ResolveOutcome,
}

/// Binds supports, snaps to extrema, then resolves occlusions.
pub fn postprocess(objects: &mut [SceneObject], cfg: &PostprocessConfig) -> Result<PostprocessReport, PostprocessError> {
    let extrema = object_extrema(objects)?;
    let supports = associate_supports(objects, cfg);
    apply_supports(objects, &supports);
    let snap = snap_to_extrema(objects, &extrema, cfg);
    let outcome = resolve_occlusions(objects, &supports, &snap, cfg);
    Ok(PostprocessReport { supports, snap, outcome })
}

/// Single-linkage clusters of ids whose description embeddings reach the
/// cosine threshold. Clusters and members are sorted by id.
pub fn detect_repetitions(
    descriptions: &[(ObjectId, String)],
    embedder: &dyn TextEmbedder,
    threshold: f64,
) -> Result<Vec<Vec<ObjectId>>, ProviderError> {
    let vecs: Vec<Vec<f64>> = descriptions
        .iter()
        .map(|(_, t)| embedder.text_embedding(t))
        .collect::<Result<_, _>>()?;
    let n = descriptions.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if cosine(&vecs[i], &vecs[j]) >= threshold {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut clusters: BTreeMap<usize, Vec<ObjectId>> = BTreeMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        clusters.entry(r).or_default().push(descriptions[i].0);
    }
    let mut out: Vec<Vec<ObjectId>> = clusters
        .into_values()
        .map(|mut c| {
            c.sort();
            c
        })
        .collect();
    out.sort();
    Ok(out)
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MeshRef;

    fn obj(id: u32, label: &str, kind: ObjectKind, center: Vec3, size: Vec3) -> SceneObject {
        SceneObject::new(ObjectId(id), label, kind, MeshRef::for_object(ObjectId(id)), size, center, 0.0).unwrap()
    }

    fn cube(id: u32, center: Vec3) -> SceneObject {
        obj(id, "box", ObjectKind::Furniture, center, Vec3::splat(1.0))
    }

    #[test]
    fn extrema_examples() {
        let one = compute_scene_extrema(&[cube(1, Vec3::ZERO).bbox()]).unwrap();
        assert_eq!(one.as_tuple(), [-0.5, 0.5, -0.5, 0.5, -0.5, 0.5]);
        let two = object_extrema(&[cube(1, Vec3::new(0.0, 0.0, 0.5)), cube(2, Vec3::new(3.0, 0.0, 0.5))]).unwrap();
        assert_eq!((two.0.min.x, two.0.max.x), (-0.5, 3.5));
        assert_eq!(compute_scene_extrema(&[]), Err(PostprocessError::EmptyScene));
    }

    #[test]
    fn snap_floor_by_margin() {
        // Diagonal of the extrema box is 1, so the margin is 0.05 absolute.
        let s = 1.0 / 3f64.sqrt();
        let mut objs = vec![obj(1, "a", ObjectKind::Furniture, Vec3::new(0.0, 0.0, 0.03 + 0.05), Vec3::new(0.1, 0.1, 0.1))];
        let ext = Extrema(Aabb {
            min: Vec3::new(-0.05, -0.05, 0.0),
            max: Vec3::new(-0.05 + s, -0.05 + s, s),
        });
        let rec = snap_to_extrema(&mut objs, &ext, &PostprocessConfig::default());
        assert!((objs[0].aabb().min.z - 0.0).abs() < 1e-12);
        assert_eq!(objs[0].support, SupportState::OnFloor);
        assert!(rec.floor.contains(&ObjectId(1)));
        assert!(rec.walls[&Direction::NegX].contains(&ObjectId(1)));
    }

    #[test]
    fn snap_beyond_margin_is_unchanged() {
        let s = 1.0 / 3f64.sqrt();
        let mut objs = vec![obj(1, "a", ObjectKind::Furniture, Vec3::splat(s / 2.0), Vec3::new(0.1, 0.1, 0.1))];
        let ext = Extrema(Aabb {
            min: Vec3::ZERO,
            max: Vec3::splat(s),
        });
        let before = objs.clone();
        let rec = snap_to_extrema(&mut objs, &ext, &PostprocessConfig::default());
        assert_eq!(objs, before);
        assert_eq!(rec, SnapRecord::default());
        assert_eq!(objs[0].support, SupportState::Free);
    }

    #[test]
    fn snap_touching_wall_records_without_moving() {
        let mut objs = vec![cube(1, Vec3::new(0.0, 0.0, 0.5)), cube(2, Vec3::new(3.0, 5.0, 2.5))];
        let ext = object_extrema(&objs).unwrap();
        let before = objs[1].location;
        let rec = snap_to_extrema(&mut objs, &ext, &PostprocessConfig::default());
        assert_eq!(objs[1].location, before);
        assert!(rec.walls[&Direction::PosX].contains(&ObjectId(2)));
    }

    #[test]
    fn support_examples() {
        let table = obj(1, "table", ObjectKind::Furniture, Vec3::new(0.0, 0.0, 0.5), Vec3::splat(1.0));
        let vase = obj(2, "vase", ObjectKind::Decor, Vec3::new(0.0, 0.0, 1.1), Vec3::splat(0.2));
        let cfg = PostprocessConfig::default();
        assert_eq!(associate_supports(&[table.clone(), vase.clone()], &cfg), vec![(ObjectId(2), ObjectId(1))]);
        let lifted = obj(2, "vase", ObjectKind::Decor, Vec3::new(0.0, 0.0, 1.14), Vec3::splat(0.2));
        assert_eq!(associate_supports(&[table.clone(), lifted], &cfg).len(), 1);
        let floating = obj(2, "vase", ObjectKind::Decor, Vec3::new(0.0, 0.0, 1.2), Vec3::splat(0.2));
        assert!(associate_supports(&[table, floating], &cfg).is_empty());
    }

    #[test]
    fn lamp_over_two_tables_picks_larger_overlap() {
        let t1 = obj(1, "table", ObjectKind::Furniture, Vec3::new(0.0, 0.0, 0.5), Vec3::splat(1.0));
        let t2 = obj(2, "table", ObjectKind::Furniture, Vec3::new(1.0, 0.0, 0.5), Vec3::splat(1.0));
        let lamp = obj(3, "lamp", ObjectKind::Decor, Vec3::new(0.6, 0.0, 1.1), Vec3::new(0.4, 0.2, 0.2));
        // Overlap with t1: x in [0.4, 0.5] -> 0.02; with t2: [0.5, 0.8] -> 0.06.
        let got = associate_supports(&[t1, t2, lamp], &PostprocessConfig::default());
        assert_eq!(got, vec![(ObjectId(3), ObjectId(2))]);
    }

    #[test]
    fn resolve_moves_far_cube_plus_x() {
        let mut objs = vec![cube(1, Vec3::new(0.0, 0.0, 0.5)), cube(2, Vec3::new(0.8, 0.0, 0.5))];
        let mut rec = SnapRecord::default();
        rec.floor.extend([ObjectId(1), ObjectId(2)]);
        for o in &mut objs {
            o.support = SupportState::OnFloor;
        }
        let out = resolve_occlusions(&mut objs, &[], &rec, &PostprocessConfig::default());
        assert!(out.converged());
        assert_eq!(objs[0].location, Vec3::new(0.0, 0.0, 0.5));
        assert!((objs[1].location.x - 1.0).abs() < 1e-12);
        assert_eq!(objs[1].location.z, 0.5);
        assert_eq!(objs[0].aabb().intersection_volume(&objs[1].aabb()), 0.0);
    }

    #[test]
    fn resolve_fixpoint_and_exemptions() {
        let mut disjoint = vec![cube(1, Vec3::ZERO), cube(2, Vec3::new(2.0, 0.0, 0.0))];
        let before = disjoint.clone();
        let out = resolve_occlusions(&mut disjoint, &[], &SnapRecord::default(), &PostprocessConfig::default());
        assert_eq!((out.rounds, out.moves), (0, 0));
        assert_eq!(disjoint, before);

        let mut cd = vec![
            obj(1, "desk", ObjectKind::Furniture, Vec3::ZERO, Vec3::splat(1.0)),
            obj(2, "chair", ObjectKind::Furniture, Vec3::new(0.3, 0.0, 0.0), Vec3::splat(0.5)),
        ];
        let before = cd.clone();
        resolve_occlusions(&mut cd, &[], &SnapRecord::default(), &PostprocessConfig::default());
        assert_eq!(cd, before);
    }

    #[test]
    fn bound_decor_moves_with_supporter() {
        let mut objs = vec![
            cube(1, Vec3::new(0.0, 0.0, 0.5)),
            cube(2, Vec3::new(0.8, 0.0, 0.5)),
            obj(3, "vase", ObjectKind::Decor, Vec3::new(0.8, 0.0, 1.1), Vec3::splat(0.2)),
        ];
        objs[2].support = SupportState::OnObject(ObjectId(2));
        let offset = objs[2].location - objs[1].location;
        let mut rec = SnapRecord::default();
        rec.floor.extend([ObjectId(1), ObjectId(2)]);
        resolve_occlusions(&mut objs, &[(ObjectId(3), ObjectId(2))], &rec, &PostprocessConfig::default());
        assert!(((objs[2].location - objs[1].location) - offset).norm() < 1e-12);
    }

    struct Bow;
    impl TextEmbedder for Bow {
        fn text_embedding(&self, t: &str) -> Result<Vec<f64>, ProviderError> {
            Ok(crate::providers::mock::text_embedding(t).unwrap())
        }
    }

    #[test]
    fn repetition_clusters() {
        let d = vec![
            (ObjectId(1), "red chair".to_string()),
            (ObjectId(2), "blue table".to_string()),
            (ObjectId(3), "red chair".to_string()),
        ];
        let c = detect_repetitions(&d, &Bow, 0.95).unwrap();
        assert_eq!(c, vec![vec![ObjectId(1), ObjectId(3)], vec![ObjectId(2)]]);
    }
}
