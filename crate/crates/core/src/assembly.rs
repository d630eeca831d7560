//! Floor and wall placement and scene export.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Component, Path, PathBuf};

use crate::image::Image;
use crate::mesh::Mesh;
use crate::model::{Direction, FloorPlane, MeshRef, ObjectId, SceneManifest, SceneObject, WallAxis, WallPlane, WallSign};
use crate::postprocess::object_extrema;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PADDING: f64 = 0.1;
pub const WALL_HEADROOM: f64 = 0.1;

#[derive(Debug, thiserror::Error)]
pub enum AssemblyError {
    #[error("scene has no objects")]
    EmptyScene,
    #[error("missing assets for objects: {}", .0.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(", "))]
    MissingAssets(Vec<ObjectId>),
    #[error("missing texture {0}")]
    MissingTexture(String),
    #[error("asset path {0:?} escapes the scene directory")]
    BadPath(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("manifest: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{path}: {message}")]
    Asset { path: PathBuf, message: String },
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> AssemblyError + '_ {
    move |source| AssemblyError::Io { path: path.to_path_buf(), source }
}

/// Plane at the lowest object bottom, centered at the mean object (x, y),
/// extending past every footprint by 10%.
pub fn place_floor(objects: &[SceneObject]) -> Result<FloorPlane, AssemblyError> {
    if objects.is_empty() {
        return Err(AssemblyError::EmptyScene);
    }
    let mut boxes: Vec<_> = objects.iter().map(SceneObject::aabb).collect();
    // Sorted so the mean is independent of list order bit for bit.
    boxes.sort_by(|a, b| {
        a.center().x.total_cmp(&b.center().x).then(a.center().y.total_cmp(&b.center().y))
    });
    let n = boxes.len() as f64;
    let cx = boxes.iter().map(|a| a.center().x).sum::<f64>() / n;
    let cy = boxes.iter().map(|a| a.center().y).sum::<f64>() / n;
    let z = boxes.iter().map(|a| a.min.z).fold(f64::INFINITY, f64::min);
    let reach = |f: &dyn Fn(&crate::model::Aabb) -> f64| boxes.iter().map(f).fold(0.0, f64::max);
    let rx = reach(&|a| (a.max.x - cx).max(cx - a.min.x));
    let ry = reach(&|a| (a.max.y - cy).max(cy - a.min.y));
    Ok(FloorPlane {
        z,
        center: [cx, cy],
        extent: [2.0 * rx * (1.0 + PADDING), 2.0 * ry * (1.0 + PADDING)],
        texture: None,
    })
}

fn wall(d: Direction, offset: f64, height: f64) -> WallPlane {
    let (axis, sign) = match d {
        Direction::PosX => (WallAxis::X, WallSign::Pos),
        Direction::NegX => (WallAxis::X, WallSign::Neg),
        Direction::PosY => (WallAxis::Y, WallSign::Pos),
        Direction::NegY => (WallAxis::Y, WallSign::Neg),
        Direction::PosZ | Direction::NegZ => unreachable!("walls are horizontal"),
    };
    WallPlane { axis, sign, offset, height, texture: None }
}

/// Walls at the four horizontal scene extrema.
pub fn place_walls(objects: &[SceneObject]) -> Result<Vec<WallPlane>, AssemblyError> {
    place_walls_in(objects, &Direction::HORIZONTAL)
}

/// Walls at the scene extrema in the given horizontal directions, in the
/// order +x, -x, +y, -y.
pub fn place_walls_in(objects: &[SceneObject], dirs: &[Direction]) -> Result<Vec<WallPlane>, AssemblyError> {
    let ext = object_extrema(objects).map_err(|_| AssemblyError::EmptyScene)?;
    let height = (ext.face(Direction::PosZ) - ext.face(Direction::NegZ)) * (1.0 + WALL_HEADROOM);
    Ok(Direction::HORIZONTAL
        .into_iter()
        .filter(|d| dirs.contains(d))
        .map(|d| wall(d, ext.face(d), height))
        .collect())
}

pub const FLOOR_TEXTURE_PATH: &str = "textures/floor.png";

/// Meshes and textures referenced by a manifest, keyed by relative path.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SceneAssets {
    pub meshes: BTreeMap<MeshRef, Mesh>,
    pub textures: BTreeMap<String, Image>,
}

/// Manifest bytes: pretty JSON in declaration order with shortest
/// round-trip float formatting.
pub fn manifest_bytes(manifest: &SceneManifest) -> Result<Vec<u8>, AssemblyError> {
    let mut out = serde_json::to_vec_pretty(manifest)?;
    out.push(b'\n');
    Ok(out)
}

fn checked_join(dir: &Path, rel: &str) -> Result<PathBuf, AssemblyError> {
    let p = Path::new(rel);
    if p.components().any(|c| !matches!(c, Component::Normal(_))) {
        return Err(AssemblyError::BadPath(rel.to_string()));
    }
    Ok(dir.join(p))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), AssemblyError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io(parent))?;
    }
    fs::write(path, bytes).map_err(io(path))
}

fn texture_refs(m: &SceneManifest) -> Vec<&str> {
    m.floor
        .iter()
        .filter_map(|f| f.texture.as_deref())
        .chain(m.walls.iter().filter_map(|w| w.texture.as_deref()))
        .collect()
}

/// Writes `manifest.json`, one OBJ per object and the referenced textures.
/// Nothing is written when an asset is missing.
pub fn export_scene(manifest: &SceneManifest, assets: &SceneAssets, out_dir: &Path) -> Result<PathBuf, AssemblyError> {
    let missing: Vec<ObjectId> = manifest
        .objects
        .iter()
        .filter(|o| !assets.meshes.contains_key(&o.asset))
        .map(|o| o.id)
        .collect();
    if !missing.is_empty() {
        return Err(AssemblyError::MissingAssets(missing));
    }
    for t in texture_refs(manifest) {
        if !assets.textures.contains_key(t) {
            return Err(AssemblyError::MissingTexture(t.to_string()));
        }
    }
    for o in &manifest.objects {
        let path = checked_join(out_dir, &o.asset.0)?;
        write(&path, assets.meshes[&o.asset].to_obj().as_bytes())?;
    }
    for t in texture_refs(manifest) {
        let path = checked_join(out_dir, t)?;
        let png = assets.textures[t]
            .encode_png()
            .map_err(|e| AssemblyError::Asset { path: path.clone(), message: e.to_string() })?;
        write(&path, &png)?;
    }
    let path = out_dir.join(MANIFEST_FILE);
    write(&path, &manifest_bytes(manifest)?)?;
    Ok(path)
}

pub fn read_manifest(path: &Path) -> Result<SceneManifest, AssemblyError> {
    let text = fs::read_to_string(path).map_err(io(path))?;
    Ok(serde_json::from_str(&text)?)
}

/// Loads a manifest and every asset it references from a scene directory.
pub fn import_scene(dir: &Path) -> Result<(SceneManifest, SceneAssets), AssemblyError> {
    let manifest = read_manifest(&dir.join(MANIFEST_FILE))?;
    let assets = load_assets(&manifest, dir)?;
    Ok((manifest, assets))
}

/// Reads the meshes and textures a manifest references, relative to `dir`.
pub fn load_assets(manifest: &SceneManifest, dir: &Path) -> Result<SceneAssets, AssemblyError> {
    let mut assets = SceneAssets::default();
    for o in &manifest.objects {
        let path = checked_join(dir, &o.asset.0)?;
        let text = fs::read_to_string(&path).map_err(io(&path))?;
        let mesh = Mesh::from_obj(&text).map_err(|e| AssemblyError::Asset { path: path.clone(), message: e.to_string() })?;
        assets.meshes.insert(o.asset.clone(), mesh);
    }
    for t in texture_refs(manifest) {
        let path = checked_join(dir, t)?;
        let bytes = fs::read(&path).map_err(io(&path))?;
        let img = Image::decode_png(&bytes).map_err(|e| AssemblyError::Asset { path: path.clone(), message: e.to_string() })?;
        assets.textures.insert(t.to_string(), img);
    }
    Ok(assets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ObjectKind, Vec3};

    fn cube(id: u32, center: Vec3) -> SceneObject {
        SceneObject::new(ObjectId(id), "box", ObjectKind::Furniture, MeshRef::for_object(ObjectId(id)), Vec3::splat(1.0), center, 0.0).unwrap()
    }

    #[test]
    fn floor_examples() {
        let f = place_floor(&[cube(1, Vec3::new(2.0, 3.0, 0.5))]).unwrap();
        assert_eq!((f.z, f.center), (0.0, [2.0, 3.0]));
        assert!((f.extent[0] - 1.1).abs() < 1e-12);
        let f = place_floor(&[cube(1, Vec3::new(0.0, 0.0, 0.5)), cube(2, Vec3::new(2.0, 2.0, 0.6))]).unwrap();
        assert_eq!((f.z, f.center), (0.0, [1.0, 1.0]));
        assert!(matches!(place_floor(&[]), Err(AssemblyError::EmptyScene)));
    }

    #[test]
    fn wall_examples() {
        let objs = [cube(1, Vec3::new(-0.5, 0.0, 0.5)), cube(2, Vec3::new(3.5, 1.0, 0.5))];
        let w = place_walls(&objs).unwrap();
        assert_eq!(w.len(), 4);
        assert_eq!((w[0].direction(), w[0].offset), (Direction::PosX, 4.0));
        assert_eq!((w[1].direction(), w[1].offset), (Direction::NegX, -1.0));
        assert!((w[0].height - 1.1).abs() < 1e-12);
        let only = place_walls_in(&objs, &[Direction::NegY]).unwrap();
        assert_eq!(only.len(), 1);
        assert_eq!(only[0].offset, -0.5);
    }

    #[test]
    fn missing_mesh_aborts_export() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = SceneManifest::new("room", 1);
        m.objects.push(cube(4, Vec3::ZERO));
        let err = export_scene(&m, &SceneAssets::default(), dir.path()).unwrap_err();
        assert!(matches!(err, AssemblyError::MissingAssets(ref ids) if ids == &[ObjectId(4)]));
        assert!(!dir.path().join(MANIFEST_FILE).exists());
    }

    #[test]
    fn paths_cannot_escape() {
        assert!(checked_join(Path::new("/tmp"), "../x").is_err());
        assert!(checked_join(Path::new("/tmp"), "/etc/passwd").is_err());
        assert!(checked_join(Path::new("/tmp"), "objects/obj001/mesh.obj").is_ok());
    }
}
