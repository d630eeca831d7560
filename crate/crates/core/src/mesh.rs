//! Triangle meshes exchanged with asset generators, stored as Wavefront OBJ.

use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::model::Vec3;

#[derive(Debug, thiserror::Error)]
pub enum MeshError {
    #[error("obj line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("mesh has no vertices")]
    Empty,
    #[error("face index {0} out of range")]
    BadIndex(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
}

impl Mesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<Self, MeshError> {
        if vertices.is_empty() {
            return Err(MeshError::Empty);
        }
        if let Some(&i) = triangles
            .iter()
            .flatten()
            .find(|&&i| i as usize >= vertices.len())
        {
            return Err(MeshError::BadIndex(i as usize));
        }
        Ok(Self {
            vertices,
            triangles,
        })
    }

    /// Axis-aligned box centered at the origin with the given full extents.
    pub fn cuboid(extents: Vec3) -> Self {
        Self::cuboid_at(Vec3::ZERO, extents)
    }

    fn cuboid_at(center: Vec3, extents: Vec3) -> Self {
        let h = extents * 0.5;
        let mut vertices = Vec::with_capacity(8);
        for i in 0..8u32 {
            let sx = if i & 1 == 0 { -1.0 } else { 1.0 };
            let sy = if i & 2 == 0 { -1.0 } else { 1.0 };
            let sz = if i & 4 == 0 { -1.0 } else { 1.0 };
            vertices.push(center + Vec3::new(sx * h.x, sy * h.y, sz * h.z));
        }
        let triangles = vec![
            [0, 2, 1],
            [1, 2, 3],
            [4, 5, 6],
            [5, 7, 6],
            [0, 1, 4],
            [1, 5, 4],
            [2, 6, 3],
            [3, 6, 7],
            [0, 4, 2],
            [2, 4, 6],
            [1, 3, 5],
            [3, 7, 5],
        ];
        Self {
            vertices,
            triangles,
        }
    }

    /// Union of boxes given as `(min, max)` corners, without welding.
    pub fn from_boxes(boxes: &[(Vec3, Vec3)]) -> Self {
        let mut out = Mesh {
            vertices: Vec::new(),
            triangles: Vec::new(),
        };
        for (lo, hi) in boxes {
            let part = Self::cuboid_at((*lo + *hi) * 0.5, *hi - *lo);
            let base = out.vertices.len() as u32;
            out.vertices.extend(part.vertices);
            out.triangles
                .extend(part.triangles.iter().map(|t| t.map(|i| i + base)));
        }
        out
    }

    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::splat(f64::INFINITY);
        let mut hi = Vec3::splat(f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
        (lo, hi)
    }

    /// Native full extents of the mesh.
    pub fn extents(&self) -> Vec3 {
        let (lo, hi) = self.bounds();
        hi - lo
    }

    /// Copy translated so its bounding box is centered at the origin.
    pub fn centered(&self) -> Mesh {
        let (lo, hi) = self.bounds();
        let c = (lo + hi) * 0.5;
        Mesh {
            vertices: self.vertices.iter().map(|v| *v - c).collect(),
            triangles: self.triangles.clone(),
        }
    }

    pub fn to_obj(&self) -> String {
        let mut s = String::new();
        for v in &self.vertices {
            let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
        }
        for t in &self.triangles {
            let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
        }
        s
    }

    /// Parses `v` and `f` records; polygons are fan-triangulated and
    /// `v/vt/vn` index forms are accepted.
    pub fn from_obj(text: &str) -> Result<Mesh, MeshError> {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let err = |msg: &str| MeshError::Parse {
                line: n + 1,
                msg: msg.to_string(),
            };
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("v") => {
                    let c: Vec<f64> = parts
                        .take(3)
                        .map(|p| p.parse::<f64>().map_err(|_| err("bad coordinate")))
                        .collect::<Result<_, _>>()?;
                    if c.len() != 3 {
                        return Err(err("vertex needs 3 coordinates"));
                    }
                    vertices.push(Vec3::new(c[0], c[1], c[2]));
                }
                Some("f") => {
                    let idx: Vec<u32> = parts
                        .map(|p| {
                            let first = p.split('/').next().unwrap_or("");
                            let i: i64 = first.parse().map_err(|_| err("bad face index"))?;
                            let resolved = if i < 0 {
                                vertices.len() as i64 + i
                            } else {
                                i - 1
                            };
                            u32::try_from(resolved).map_err(|_| err("face index out of range"))
                        })
                        .collect::<Result<_, _>>()?;
                    if idx.len() < 3 {
                        return Err(err("face needs 3 vertices"));
                    }
                    for k in 1..idx.len() - 1 {
                        triangles.push([idx[0], idx[k], idx[k + 1]]);
                    }
                }
                _ => {}
            }
        }
        Mesh::new(vertices, triangles)
    }

    pub fn content_id(&self) -> String {
        let digest = Sha256::digest(self.to_obj().as_bytes());
        hex::encode(&digest[..8])
    }
}
