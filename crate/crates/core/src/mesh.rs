//! Triangle meshes with per-corner UVs: loading, validation and measurement.
//!
//! Two on-disk formats are understood: a triangle-only OBJ subset (`v`, `vt`,
//! `f`, `g`, `usemtl`) and the toolkit's mesh-JSON. Meshes are immutable once
//! constructed; every constructor validates indices and UV finiteness.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Vec2, Vec3};

pub mod primitives;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("non-triangle face at line {0}")]
    NonTriangleFace(usize),
    #[error("invalid mesh-JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("triangle {tri} references vertex {index} but mesh has {count} vertices")]
    IndexOutOfRange { tri: usize, index: u32, count: usize },
    #[error("non-finite UV on triangle {0}")]
    NonFiniteUv(usize),
    #[error("non-finite vertex {0}")]
    NonFiniteVertex(usize),
    #[error("{what} has {got} entries, expected {expected}")]
    LengthMismatch { what: &'static str, got: usize, expected: usize },
    #[error("mesh is empty")]
    Empty,
    #[error("unsupported mesh file extension: {0}")]
    UnsupportedFormat(String),
}

/// Axis-aligned bounding box in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn max_extent(&self) -> f64 {
        let e = self.extent();
        e.x.max(e.y).max(e.z)
    }

    /// Radius of the sphere through the box corners, centered on the box.
    pub fn bounding_sphere_radius(&self) -> f64 {
        self.extent().norm() * 0.5
    }

    pub fn translated(&self, t: Vec3) -> Aabb {
        Aabb { min: self.min + t, max: self.max + t }
    }
}

/// Physical metadata attached to an asset. Collision geometry, IOR and
/// transmission are carried as opaque slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetMeta {
    pub scale_factor: f64,
    pub density: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collision_geometry_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ior: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transmission: Option<f64>,
}

impl AssetMeta {
    pub fn new(scale_factor: f64, density: Option<f64>) -> Result<Self, String> {
        let meta = AssetMeta {
            scale_factor,
            density,
            collision_geometry_path: None,
            ior: None,
            transmission: None,
        };
        meta.validate()?;
        Ok(meta)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.scale_factor > 0.0 && self.scale_factor.is_finite()) {
            return Err(format!("scale_factor must be > 0, got {}", self.scale_factor));
        }
        if let Some(d) = self.density {
            if !(d > 0.0 && d.is_finite()) {
                return Err(format!("density must be > 0, got {d}"));
            }
        }
        if let Some(t) = self.transmission {
            if !(0.0..=1.0).contains(&t) {
                return Err(format!("transmission must be in [0,1], got {t}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    name: String,
    vertices: Vec<Vec3>,
    triangles: Vec<[u32; 3]>,
    uvs: Option<Vec<[Vec2; 3]>>,
    groups: Option<Vec<i32>>,
}

impl TriangleMesh {
    pub fn new(
        name: impl Into<String>,
        vertices: Vec<Vec3>,
        triangles: Vec<[u32; 3]>,
        uvs: Option<Vec<[Vec2; 3]>>,
        groups: Option<Vec<i32>>,
    ) -> Result<Self, MeshError> {
        for (i, v) in vertices.iter().enumerate() {
            if !v.is_finite() {
                return Err(MeshError::NonFiniteVertex(i));
            }
        }
        for (t, tri) in triangles.iter().enumerate() {
            for &index in tri {
                if index as usize >= vertices.len() {
                    return Err(MeshError::IndexOutOfRange { tri: t, index, count: vertices.len() });
                }
            }
        }
        if let Some(uvs) = &uvs {
            if uvs.len() != triangles.len() {
                return Err(MeshError::LengthMismatch {
                    what: "uvs",
                    got: uvs.len(),
                    expected: triangles.len(),
                });
            }
            if let Some(t) = uvs.iter().position(|c| c.iter().any(|uv| !uv.is_finite())) {
                return Err(MeshError::NonFiniteUv(t));
            }
        }
        if let Some(groups) = &groups {
            if groups.len() != triangles.len() {
                return Err(MeshError::LengthMismatch {
                    what: "groups",
                    got: groups.len(),
                    expected: triangles.len(),
                });
            }
        }
        Ok(Self { name: name.into(), vertices, triangles, uvs, groups })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn uvs(&self) -> Option<&[[Vec2; 3]]> {
        self.uvs.as_deref()
    }

    pub fn groups(&self) -> Option<&[i32]> {
        self.groups.as_deref()
    }

    /// Group label of a triangle; meshes without labels are one group `0`.
    pub fn group_of(&self, tri: usize) -> i32 {
        self.groups.as_ref().map_or(0, |g| g[tri])
    }

    /// Sorted distinct group labels.
    pub fn distinct_groups(&self) -> Vec<i32> {
        let mut g: Vec<i32> = (0..self.triangles.len()).map(|t| self.group_of(t)).collect();
        g.sort_unstable();
        g.dedup();
        g
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// A mesh without UVs can be rendered but not baked.
    pub fn is_bakeable(&self) -> bool {
        self.uvs.is_some() && !self.is_empty()
    }

    pub fn corners(&self, tri: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[tri];
        [self.vertices[a as usize], self.vertices[b as usize], self.vertices[c as usize]]
    }

    /// Unnormalized face normal (counter-clockwise winding is outward).
    pub fn face_normal(&self, tri: usize) -> Vec3 {
        let [a, b, c] = self.corners(tri);
        (b - a).cross(c - a)
    }

    pub fn bounding_box(&self) -> Result<Aabb, MeshError> {
        bounding_box(self)
    }

    pub fn translated(&self, t: Vec3) -> TriangleMesh {
        self.map_vertices(|v| v + t)
    }

    pub(crate) fn map_vertices(&self, f: impl Fn(Vec3) -> Vec3) -> TriangleMesh {
        TriangleMesh { vertices: self.vertices.iter().map(|&v| f(v)).collect(), ..self.clone() }
    }

    pub fn to_json(&self) -> String {
        let doc = MeshJson {
            name: self.name.clone(),
            vertices: self.vertices.iter().map(|v| v.to_array()).collect(),
            triangles: self.triangles.clone(),
            uvs: self
                .uvs
                .as_ref()
                .map(|u| u.iter().map(|c| c.map(|uv| [uv.x, uv.y])).collect()),
            groups: self.groups.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("mesh JSON serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, MeshError> {
        let doc: MeshJson = serde_json::from_str(text)?;
        TriangleMesh::new(
            doc.name,
            doc.vertices.into_iter().map(Vec3::from).collect(),
            doc.triangles,
            doc.uvs.map(|u| u.into_iter().map(|c| c.map(Vec2::from)).collect()),
            doc.groups,
        )
    }

    /// Writes the mesh as OBJ, one `g group_<label>` section per group run.
    pub fn to_obj(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "o {}", self.name);
        for v in &self.vertices {
            let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
        }
        if let Some(uvs) = &self.uvs {
            for c in uvs {
                for uv in c {
                    let _ = writeln!(out, "vt {} {}", uv.x, uv.y);
                }
            }
        }
        let mut current = None;
        for (t, tri) in self.triangles.iter().enumerate() {
            if self.groups.is_some() {
                let g = self.group_of(t);
                if current != Some(g) {
                    let _ = writeln!(out, "g group_{g}");
                    current = Some(g);
                }
            }
            if self.uvs.is_some() {
                let vt = 3 * t + 1;
                let _ = writeln!(
                    out,
                    "f {}/{} {}/{} {}/{}",
                    tri[0] + 1,
                    vt,
                    tri[1] + 1,
                    vt + 1,
                    tri[2] + 1,
                    vt + 2
                );
            } else {
                let _ = writeln!(out, "f {} {} {}", tri[0] + 1, tri[1] + 1, tri[2] + 1);
            }
        }
        out
    }
}

#[derive(Serialize, Deserialize)]
struct MeshJson {
    name: String,
    vertices: Vec<[f64; 3]>,
    triangles: Vec<[u32; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    uvs: Option<Vec<[[f64; 2]; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    groups: Option<Vec<i32>>,
}

/// Tight axis-aligned box over all vertices.
pub fn bounding_box(mesh: &TriangleMesh) -> Result<Aabb, MeshError> {
    let mut it = mesh.vertices.iter();
    let first = *it.next().ok_or(MeshError::Empty)?;
    if mesh.is_empty() {
        return Err(MeshError::Empty);
    }
    let (min, max) = it.fold((first, first), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    Ok(Aabb { min, max })
}

/// Loads `.obj` or `.json` (mesh-JSON) by extension.
pub fn load_mesh(path: &Path) -> Result<TriangleMesh, MeshError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| MeshError::Io { path: path.display().to_string(), source })?;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("mesh");
    let mesh = match ext.as_str() {
        "obj" => parse_obj(&text, stem)?,
        "json" => TriangleMesh::from_json(&text)?,
        other => return Err(MeshError::UnsupportedFormat(other.to_string())),
    };
    if !mesh.is_bakeable() {
        log::warn!("mesh {} has no UVs; it is unbakeable", path.display());
    }
    Ok(mesh)
}

pub fn save_mesh_json(mesh: &TriangleMesh, path: &Path) -> Result<(), MeshError> {
    std::fs::write(path, mesh.to_json())
        .map_err(|source| MeshError::Io { path: path.display().to_string(), source })
}

/// Parses the triangle-only OBJ subset. Group labels are assigned per
/// distinct `(g, usemtl)` pair in order of first use.
pub fn parse_obj(text: &str, name: &str) -> Result<TriangleMesh, MeshError> {
    let mut positions: Vec<Vec3> = Vec::new();
    let mut texcoords: Vec<Vec2> = Vec::new();
    let mut triangles = Vec::new();
    let mut corner_uvs: Vec<Option<[Vec2; 3]>> = Vec::new();
    let mut tri_groups: Vec<i32> = Vec::new();
    let mut group_ids: HashMap<(String, String), i32> = HashMap::new();
    let mut saw_group = false;
    let mut current = (String::new(), String::new());
    let mut object_name = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let keyword = parts.next().unwrap_or("");
        let parse_err = |msg: String| MeshError::Parse { line: line_no, msg };
        match keyword {
            "v" => {
                let c = parse_floats(parts, 3).map_err(parse_err)?;
                positions.push(Vec3::new(c[0], c[1], c[2]));
            }
            "vt" => {
                let c = parse_floats(parts, 2).map_err(parse_err)?;
                texcoords.push(Vec2::new(c[0], c[1]));
            }
            "g" => {
                current.0 = parts.collect::<Vec<_>>().join(" ");
                saw_group = true;
            }
            "usemtl" => {
                current.1 = parts.collect::<Vec<_>>().join(" ");
                saw_group = true;
            }
            "o" => {
                object_name = Some(parts.collect::<Vec<_>>().join(" "));
            }
            "f" => {
                let corners: Vec<&str> = parts.collect();
                if corners.len() != 3 {
                    return Err(MeshError::NonTriangleFace(line_no));
                }
                let mut tri = [0u32; 3];
                let mut uv = [Vec2::default(); 3];
                let mut has_uv = true;
                for (k, corner) in corners.iter().enumerate() {
                    let mut fields = corner.split('/');
                    let v = fields.next().unwrap_or("");
                    tri[k] = resolve_index(v, positions.len()).map_err(parse_err)?;
                    match fields.next() {
                        Some(t) if !t.is_empty() => {
                            let ti = resolve_index(t, texcoords.len()).map_err(parse_err)?;
                            uv[k] = texcoords[ti as usize];
                        }
                        _ => has_uv = false,
                    }
                }
                triangles.push(tri);
                corner_uvs.push(has_uv.then_some(uv));
                let next_id = group_ids.len() as i32;
                tri_groups.push(*group_ids.entry(current.clone()).or_insert(next_id));
            }
            // Normals, smoothing groups and material libraries are ignored.
            "vn" | "s" | "mtllib" | "l" | "vp" => {}
            other => {
                log::debug!("ignoring OBJ keyword {other:?} at line {line_no}");
            }
        }
    }

    let uvs = if !corner_uvs.is_empty() && corner_uvs.iter().all(Option::is_some) {
        Some(corner_uvs.into_iter().map(Option::unwrap).collect())
    } else {
        None
    };
    let groups = saw_group.then_some(tri_groups);
    TriangleMesh::new(object_name.unwrap_or_else(|| name.to_string()), positions, triangles, uvs, groups)
}

fn parse_floats<'a>(parts: impl Iterator<Item = &'a str>, n: usize) -> Result<Vec<f64>, String> {
    let vals: Vec<f64> = parts
        .take(n)
        .map(|s| s.parse::<f64>().map_err(|e| format!("bad number {s:?}: {e}")))
        .collect::<Result<_, _>>()?;
    if vals.len() < n {
        return Err(format!("expected {n} components, found {}", vals.len()));
    }
    Ok(vals)
}

/// OBJ indices are 1-based; negative values count back from the end.
fn resolve_index(s: &str, count: usize) -> Result<u32, String> {
    let i: i64 = s.parse().map_err(|e| format!("bad index {s:?}: {e}"))?;
    let resolved = if i > 0 { i - 1 } else { count as i64 + i };
    if i == 0 || resolved < 0 || resolved as usize >= count {
        return Err(format!("index {i} out of range (have {count})"));
    }
    Ok(resolved as u32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quad_face_is_rejected_with_line_number() {
        let obj = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n";
        let err = parse_obj(obj, "q").unwrap_err();
        assert_eq!(err.to_string(), "non-triangle face at line 5");
    }

    #[test]
    fn cube_obj_keeps_six_groups() {
        let cube = primitives::unit_cube();
        let parsed = parse_obj(&cube.to_obj(), "cube").unwrap();
        assert_eq!(parsed.triangle_count(), 12);
        assert_eq!(parsed.distinct_groups().len(), 6);
        assert!(parsed.is_bakeable());
    }

    #[test]
    fn missing_uvs_load_but_are_unbakeable() {
        let obj = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n";
        let m = parse_obj(obj, "t").unwrap();
        assert!(!m.is_bakeable());
        assert!(m.groups().is_none());
    }

    #[test]
    fn v_vt_vn_corners_and_negative_indices() {
        let obj = "v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 0 1\nvn 0 0 1\n\
                   usemtl steel\nf -3/-3/1 -2/-2/1 -1/-1/1\n";
        let m = parse_obj(obj, "t").unwrap();
        assert_eq!(m.triangles(), &[[0, 1, 2]]);
        assert_eq!(m.uvs().unwrap()[0][1], Vec2::new(1.0, 0.0));
        assert_eq!(m.groups(), Some(&[0][..]));
    }

    #[test]
    fn out_of_range_face_index_is_a_parse_error() {
        let obj = "v 0 0 0\nv 1 0 0\nf 1 2 3\n";
        assert!(matches!(parse_obj(obj, "t"), Err(MeshError::Parse { line: 3, .. })));
    }

    #[test]
    fn bounding_box_of_centered_unit_cube() {
        let bb = primitives::unit_cube().bounding_box().unwrap();
        assert_eq!(bb.min, Vec3::new(-0.5, -0.5, -0.5));
        assert_eq!(bb.max, Vec3::new(0.5, 0.5, 0.5));
    }

    #[test]
    fn degenerate_single_vertex_triangle() {
        let p = Vec3::new(1.0, 2.0, 3.0);
        let m = TriangleMesh::new("d", vec![p], vec![[0, 0, 0]], None, None).unwrap();
        let bb = m.bounding_box().unwrap();
        assert_eq!((bb.min, bb.max), (p, p));
    }

    #[test]
    fn empty_mesh_has_no_bounding_box() {
        let m = TriangleMesh::new("e", vec![], vec![], None, None).unwrap();
        assert!(matches!(m.bounding_box(), Err(MeshError::Empty)));
    }

    #[test]
    fn json_round_trip_is_byte_identical() {
        let cube = primitives::unit_cube();
        let text = cube.to_json();
        let again = TriangleMesh::from_json(&text).unwrap();
        assert_eq!(again, cube);
        assert_eq!(again.to_json(), text);
    }

    #[test]
    fn asset_meta_rejects_non_positive_values() {
        assert!(AssetMeta::new(0.0, None).is_err());
        assert!(AssetMeta::new(1.0, Some(-1.0)).is_err());
        assert!(AssetMeta::new(0.5, Some(1000.0)).is_ok());
    }
}
