//! Multi-view G-buffer rendering with a deterministic z-buffer rasterizer.
//!
//! Each view produces color, view-space depth, face id and perspective-correct
//! UV buffers. Shading is a Lambertian headlight plus ambient with an optional
//! Blinn-Phong lobe driven by roughness/metallic; there are no cast shadows.

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{raster_triangle, Vec2, Vec3};
use crate::imaging::{Image, RgbImage};
use crate::mesh::{Aabb, TriangleMesh};

pub const DEFAULT_VIEWS: usize = 32;
pub const DEFAULT_RESOLUTION: usize = 512;
pub const DEFAULT_DISTANCE_FACTOR: f64 = 2.5;
pub const DEFAULT_VERTICAL_FOV_DEG: f64 = 50.0;
/// Near clipping distance in meters.
pub const NEAR_PLANE: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("cannot render an empty mesh")]
    EmptyMesh,
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("degenerate bounding box (zero bounding-sphere radius)")]
    DegenerateBbox,
    #[error("n_views must be >= 1")]
    NoViews,
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad buffer file {path}: {msg}")]
    BadBuffer { path: String, msg: String },
    #[error(transparent)]
    Image(#[from] crate::imaging::ImageError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    position: Vec3,
    target: Vec3,
    up: Vec3,
    vertical_fov: f64,
    resolution: (usize, usize),
}

/// A point in screen space: pixel coordinates plus view-space depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projected {
    pub x: f64,
    pub y: f64,
    pub depth: f64,
}

impl Camera {
    pub fn new(
        position: Vec3,
        target: Vec3,
        up: Vec3,
        vertical_fov: f64,
        resolution: (usize, usize),
    ) -> Result<Self, RenderError> {
        let cam = Camera { position, target, up, vertical_fov, resolution };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<(), RenderError> {
        let bad = |m: &str| Err(RenderError::InvalidCamera(m.to_string()));
        if !(self.position.is_finite() && self.target.is_finite() && self.up.is_finite()) {
            return bad("non-finite vector");
        }
        let Some(fwd) = (self.target - self.position).normalized() else {
            return bad("position equals target");
        };
        if !(self.vertical_fov > 0.0 && self.vertical_fov < std::f64::consts::PI) {
            return bad("vertical fov must be in (0, pi)");
        }
        if self.resolution.0 < 16 || self.resolution.1 < 16 {
            return bad("resolution must be at least 16x16");
        }
        match self.up.normalized() {
            Some(u) if fwd.cross(u).norm() > 1e-9 => Ok(()),
            _ => bad("up vector is zero or parallel to the view direction"),
        }
    }

    pub fn position(&self) -> Vec3 {
        self.position
    }

    pub fn target(&self) -> Vec3 {
        self.target
    }

    pub fn up(&self) -> Vec3 {
        self.up
    }

    pub fn vertical_fov(&self) -> f64 {
        self.vertical_fov
    }

    pub fn resolution(&self) -> (usize, usize) {
        self.resolution
    }

    /// Orthonormal `(right, up, forward)`; image x follows `right` and image
    /// y runs opposite to `up`.
    pub fn basis(&self) -> (Vec3, Vec3, Vec3) {
        let f = (self.target - self.position).normalized().expect("validated camera");
        let r = f.cross(self.up).normalized().expect("validated camera");
        let u = r.cross(f);
        (r, u, f)
    }

    /// Precomputed basis and projection constants, for per-point loops.
    pub fn frame(&self) -> CameraFrame {
        let (right, up, forward) = self.basis();
        let ty = (self.vertical_fov * 0.5).tan();
        let (w, h) = (self.resolution.0 as f64, self.resolution.1 as f64);
        CameraFrame { position: self.position, right, up, forward, tan_x: ty * w / h, tan_y: ty, width: w, height: h }
    }

    /// View-space coordinates `(right, up, depth)` of a world point.
    pub fn to_view(&self, p: Vec3) -> Vec3 {
        self.frame().to_view(p)
    }

    /// Screen position of a world point, or `None` behind the near plane.
    pub fn project(&self, p: Vec3) -> Option<Projected> {
        self.frame().project(p)
    }

    /// World-space direction through screen point `(sx, sy)`, scaled so that
    /// its component along the view axis is 1 (so `t` is view depth).
    pub fn ray_direction(&self, sx: f64, sy: f64) -> Vec3 {
        self.frame().ray_direction(sx, sy)
    }

    /// View depth at which the ray through pixel center `(x, y)` meets the
    /// plane through `point` with normal `normal`.
    pub fn plane_depth_at_pixel(&self, x: usize, y: usize, point: Vec3, normal: Vec3) -> Option<f64> {
        self.frame().plane_depth_at_pixel(x, y, point, normal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraFrame {
    pub position: Vec3,
    pub right: Vec3,
    pub up: Vec3,
    pub forward: Vec3,
    tan_x: f64,
    tan_y: f64,
    width: f64,
    height: f64,
}

impl CameraFrame {
    pub fn to_view(&self, p: Vec3) -> Vec3 {
        let d = p - self.position;
        Vec3::new(d.dot(self.right), d.dot(self.up), d.dot(self.forward))
    }

    fn view_to_screen(&self, c: Vec3) -> Vec2 {
        let nx = c.x / (c.z * self.tan_x);
        let ny = c.y / (c.z * self.tan_y);
        Vec2::new((nx + 1.0) * 0.5 * self.width, (1.0 - ny) * 0.5 * self.height)
    }

    pub fn project(&self, p: Vec3) -> Option<Projected> {
        let c = self.to_view(p);
        if c.z <= NEAR_PLANE {
            return None;
        }
        let s = self.view_to_screen(c);
        Some(Projected { x: s.x, y: s.y, depth: c.z })
    }

    pub fn ray_direction(&self, sx: f64, sy: f64) -> Vec3 {
        let nx = 2.0 * sx / self.width - 1.0;
        let ny = 1.0 - 2.0 * sy / self.height;
        self.right * (nx * self.tan_x) + self.up * (ny * self.tan_y) + self.forward
    }

    pub fn plane_depth_at_pixel(&self, x: usize, y: usize, point: Vec3, normal: Vec3) -> Option<f64> {
        let d = self.ray_direction(x as f64 + 0.5, y as f64 + 0.5);
        let denom = normal.dot(d);
        if denom.abs() < 1e-15 {
            return None;
        }
        Some(normal.dot(point - self.position) / denom)
    }
}

/// Places `n_views` cameras on a Fibonacci sphere around the box centroid at
/// `distance_factor ×` the bounding-sphere radius, all looking at the centroid.
///
/// Direction `i` has `z = 1 - 2i/(n-1)` and azimuth `i ×` the golden angle,
/// so the first camera sits on `+Z` (and is the only one when `n = 1`).
pub fn camera_ring(
    bbox: &Aabb,
    n_views: usize,
    distance_factor: f64,
    vertical_fov: f64,
    resolution: (usize, usize),
) -> Result<Vec<Camera>, RenderError> {
    if n_views == 0 {
        return Err(RenderError::NoViews);
    }
    let radius = bbox.bounding_sphere_radius();
    if !(radius > 0.0) {
        return Err(RenderError::DegenerateBbox);
    }
    if !(distance_factor > 0.0) {
        return Err(RenderError::InvalidCamera("distance_factor must be > 0".into()));
    }
    let center = bbox.center();
    let dist = radius * distance_factor;
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n_views)
        .map(|i| {
            let dir = fibonacci_direction(i, n_views, golden);
            let up = if dir.z.abs() > 0.99 { Vec3::Y } else { Vec3::Z };
            Camera::new(center + dir * dist, center, up, vertical_fov, resolution)
        })
        .collect()
}

fn fibonacci_direction(i: usize, n: usize, golden: f64) -> Vec3 {
    if n == 1 {
        return Vec3::Z;
    }
    let z = 1.0 - 2.0 * i as f64 / (n - 1) as f64;
    let r = (1.0 - z * z).max(0.0).sqrt();
    let phi = golden * i as f64;
    let d = Vec3::new(r * phi.cos(), r * phi.sin(), z);
    // Renormalize so the camera radius is exact up to rounding.
    d.normalized().unwrap_or(Vec3::Z)
}

/// Per-render material override; `None` fields keep the base material.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ShadingOverride {
    pub roughness: Option<f64>,
    pub metallic: Option<f64>,
}

impl ShadingOverride {
    /// Purely diffuse preset: roughness 1.0, metallic 0.0.
    pub const NO_SPECULAR: ShadingOverride =
        ShadingOverride { roughness: Some(1.0), metallic: Some(0.0) };

    pub fn none() -> Self {
        Self::default()
    }
}

/// Base material and lighting of a render.
#[derive(Debug, Clone)]
pub struct Shading<'a> {
    pub albedo: Option<&'a RgbImage>,
    pub base_color: [f32; 3],
    pub roughness: f64,
    pub metallic: f64,
    pub ambient: f64,
}

impl Default for Shading<'_> {
    fn default() -> Self {
        Shading { albedo: None, base_color: [0.8, 0.8, 0.8], roughness: 0.5, metallic: 0.0, ambient: 0.25 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ViewFlags {
    /// The mesh has no UVs; the uv buffer holds zeros.
    pub uv_missing: bool,
    /// The camera lies inside the mesh bounding sphere.
    pub camera_inside: bool,
}

#[derive(Debug, Clone)]
pub struct ViewBundle {
    pub camera: Camera,
    pub color: RgbImage,
    /// View-space depth in meters, `+inf` on background.
    pub depth: Image<f32>,
    /// Source triangle index, `-1` on background.
    pub face_id: Image<i32>,
    pub uv: Image<[f32; 2]>,
    pub image_stem: String,
    pub flags: ViewFlags,
}

impl ViewBundle {
    pub fn resolution(&self) -> (usize, usize) {
        self.camera.resolution
    }

    /// Checks the face id / depth coupling and face id range.
    pub fn check_invariants(&self, triangle_count: usize) -> Result<(), String> {
        for (i, (&f, &d)) in self.face_id.data().iter().zip(self.depth.data()).enumerate() {
            if (f >= 0) != d.is_finite() {
                return Err(format!("pixel {i}: face id {f} with depth {d}"));
            }
            if f >= 0 && f as usize >= triangle_count {
                return Err(format!("pixel {i}: face id {f} out of range"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
struct ClipVertex {
    view: Vec3,
    uv: Vec2,
}

fn lerp_clip(a: ClipVertex, b: ClipVertex, t: f64) -> ClipVertex {
    ClipVertex {
        view: a.view + (b.view - a.view) * t,
        uv: Vec2::new(a.uv.x + (b.uv.x - a.uv.x) * t, a.uv.y + (b.uv.y - a.uv.y) * t),
    }
}

/// Sutherland-Hodgman against the near plane.
fn clip_near(poly: [ClipVertex; 3]) -> Vec<ClipVertex> {
    let mut out = Vec::with_capacity(4);
    for i in 0..3 {
        let a = poly[i];
        let b = poly[(i + 1) % 3];
        let a_in = a.view.z > NEAR_PLANE;
        let b_in = b.view.z > NEAR_PLANE;
        if a_in {
            out.push(a);
        }
        if a_in != b_in {
            let t = (NEAR_PLANE - a.view.z) / (b.view.z - a.view.z);
            let mut v = lerp_clip(a, b, t);
            v.view.z = NEAR_PLANE.max(v.view.z);
            out.push(v);
        }
    }
    out
}

struct Fragments {
    depth: Vec<f64>,
    face: Vec<i32>,
    uv: Vec<[f32; 2]>,
}

/// Depth pass over triangles in the given submission order.
fn depth_pass(mesh: &TriangleMesh, camera: &Camera, order: impl Iterator<Item = usize>) -> Fragments {
    let (w, h) = camera.resolution;
    let mut fr = Fragments {
        depth: vec![f64::INFINITY; w * h],
        face: vec![-1; w * h],
        uv: vec![[0.0, 0.0]; w * h],
    };
    let uvs = mesh.uvs();
    let frame = camera.frame();
    for t in order {
        let corners = mesh.corners(t);
        let tri_uv = uvs.map_or([Vec2::default(); 3], |u| u[t]);
        let verts: [ClipVertex; 3] =
            std::array::from_fn(|k| ClipVertex { view: frame.to_view(corners[k]), uv: tri_uv[k] });
        let poly = clip_near(verts);
        if poly.len() < 3 {
            continue;
        }
        for k in 1..poly.len() - 1 {
            let sub = [poly[0], poly[k], poly[k + 1]];
            let screen = sub.map(|v| frame.view_to_screen(v.view));
            let inv_z = sub.map(|v| 1.0 / v.view.z);
            raster_triangle(screen, w, h, |x, y, b| {
                let denom = b[0] * inv_z[0] + b[1] * inv_z[1] + b[2] * inv_z[2];
                let z = 1.0 / denom;
                let i = y * w + x;
                let face = t as i32;
                if z < fr.depth[i] || (z == fr.depth[i] && face < fr.face[i]) {
                    fr.depth[i] = z;
                    fr.face[i] = face;
                    let u = (b[0] * sub[0].uv.x * inv_z[0]
                        + b[1] * sub[1].uv.x * inv_z[1]
                        + b[2] * sub[2].uv.x * inv_z[2])
                        * z;
                    let v = (b[0] * sub[0].uv.y * inv_z[0]
                        + b[1] * sub[1].uv.y * inv_z[1]
                        + b[2] * sub[2].uv.y * inv_z[2])
                        * z;
                    fr.uv[i] = [u as f32, v as f32];
                }
            });
        }
    }
    fr
}

/// Renders one view with the default clay material.
pub fn rasterize(
    mesh: &TriangleMesh,
    camera: &Camera,
    shading_override: &ShadingOverride,
) -> Result<ViewBundle, RenderError> {
    rasterize_with(mesh, camera, shading_override, &Shading::default(), mesh.name())
}

pub fn rasterize_with(
    mesh: &TriangleMesh,
    camera: &Camera,
    shading_override: &ShadingOverride,
    shading: &Shading<'_>,
    image_stem: &str,
) -> Result<ViewBundle, RenderError> {
    rasterize_ordered(mesh, camera, shading_override, shading, image_stem, 0..mesh.triangle_count())
}

/// Like [`rasterize_with`] with an explicit triangle submission order.
pub fn rasterize_ordered(
    mesh: &TriangleMesh,
    camera: &Camera,
    shading_override: &ShadingOverride,
    shading: &Shading<'_>,
    image_stem: &str,
    order: impl Iterator<Item = usize>,
) -> Result<ViewBundle, RenderError> {
    if mesh.is_empty() {
        return Err(RenderError::EmptyMesh);
    }
    camera.validate()?;
    let bbox = mesh.bounding_box().map_err(|_| RenderError::EmptyMesh)?;
    let camera_inside = (camera.position - bbox.center()).norm() < bbox.bounding_sphere_radius();
    if camera_inside {
        log::warn!("camera for {image_stem} is inside the mesh bounding sphere");
    }
    let (w, h) = camera.resolution;
    let fr = depth_pass(mesh, camera, order);

    let normals: Vec<Vec3> = (0..mesh.triangle_count())
        .map(|t| mesh.face_normal(t).normalized().unwrap_or(Vec3::Z))
        .collect();
    let (_, _, fwd) = camera.basis();
    let roughness = shading_override.roughness.unwrap_or(shading.roughness).clamp(0.0, 1.0);
    let metallic = shading_override.metallic.unwrap_or(shading.metallic).clamp(0.0, 1.0);
    let texture = shading.albedo.filter(|_| mesh.uvs().is_some());

    let color: Vec<[f32; 3]> = (0..w * h)
        .map(|i| {
            let f = fr.face[i];
            if f < 0 {
                return [0.0; 3];
            }
            let albedo = match texture {
                Some(tex) => *tex.sample_wrap(fr.uv[i][0] as f64, fr.uv[i][1] as f64),
                None => shading.base_color,
            };
            let cos = normals[f as usize].dot(fwd).abs();
            shade(albedo, cos, roughness, metallic, shading.ambient)
        })
        .collect();

    Ok(ViewBundle {
        camera: camera.clone(),
        color: Image::from_vec(w, h, color),
        depth: Image::from_vec(w, h, fr.depth.iter().map(|&d| d as f32).collect()),
        face_id: Image::from_vec(w, h, fr.face),
        uv: Image::from_vec(w, h, fr.uv),
        image_stem: image_stem.to_string(),
        flags: ViewFlags { uv_missing: mesh.uvs().is_none(), camera_inside },
    })
}

/// Headlight shading; with the light along the view axis the half vector is
/// the view vector, so `n·h = n·l = cos`.
fn shade(albedo: [f32; 3], cos: f64, roughness: f64, metallic: f64, ambient: f64) -> [f32; 3] {
    let diffuse_term = ambient + (1.0 - ambient) * cos;
    let spec_weight = (1.0 - roughness) * (1.0 - roughness);
    let alpha = (roughness * roughness).max(1e-2);
    let shininess = 2.0 / (alpha * alpha) - 2.0;
    let lobe = if spec_weight > 0.0 { spec_weight * cos.powf(shininess.max(1.0)) } else { 0.0 };
    albedo.map(|a| {
        let a = a as f64;
        let f0 = 0.04 * (1.0 - metallic) + a * metallic;
        let c = a * (1.0 - metallic) * diffuse_term + f0 * lobe;
        c.clamp(0.0, 1.0) as f32
    })
}

/// Renders the standard camera ring around `mesh` in parallel. Stems are
/// `<stem>_v00`, `<stem>_v01`, ...
pub fn render_views(
    mesh: &TriangleMesh,
    cameras: &[Camera],
    shading_override: &ShadingOverride,
    shading: &Shading<'_>,
    stem: &str,
) -> Result<Vec<ViewBundle>, RenderError> {
    cameras
        .par_iter()
        .enumerate()
        .map(|(i, cam)| rasterize_with(mesh, cam, shading_override, shading, &format!("{stem}_v{i:02}")))
        .collect()
}

const DEPTH_MAGIC: [u8; 4] = *b"VFDP";
const FACE_MAGIC: [u8; 4] = *b"VFFI";
const DTYPE_F32: u32 = 1;
const DTYPE_I32: u32 = 2;

fn write_raw(path: &Path, magic: [u8; 4], dtype: u32, w: usize, h: usize, payload: impl Iterator<Item = [u8; 4]>) -> Result<(), RenderError> {
    let io_err = |source| RenderError::Io { path: path.display().to_string(), source };
    let mut out = Vec::with_capacity(16 + 4 * w * h);
    out.extend_from_slice(&magic);
    out.extend_from_slice(&(w as u32).to_le_bytes());
    out.extend_from_slice(&(h as u32).to_le_bytes());
    out.extend_from_slice(&dtype.to_le_bytes());
    for b in payload {
        out.extend_from_slice(&b);
    }
    let mut f = std::fs::File::create(path).map_err(io_err)?;
    f.write_all(&out).map_err(io_err)
}

fn read_raw(path: &Path, magic: [u8; 4], dtype: u32) -> Result<(usize, usize, Vec<[u8; 4]>), RenderError> {
    let io_err = |source| RenderError::Io { path: path.display().to_string(), source };
    let bad = |msg: &str| RenderError::BadBuffer { path: path.display().to_string(), msg: msg.into() };
    let mut bytes = Vec::new();
    std::fs::File::open(path).map_err(io_err)?.read_to_end(&mut bytes).map_err(io_err)?;
    if bytes.len() < 16 || bytes[0..4] != magic {
        return Err(bad("bad magic"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let (w, h, dt) = (word(4) as usize, word(8) as usize, word(12));
    if dt != dtype {
        return Err(bad("unexpected dtype"));
    }
    if bytes.len() != 16 + 4 * w * h {
        return Err(bad("payload length does not match header"));
    }
    let payload = bytes[16..].chunks_exact(4).map(|c| c.try_into().unwrap()).collect();
    Ok((w, h, payload))
}

/// Little-endian `f32` depth with a 16-byte header (`VFDP`, width, height, dtype).
pub fn save_depth(depth: &Image<f32>, path: &Path) -> Result<(), RenderError> {
    write_raw(path, DEPTH_MAGIC, DTYPE_F32, depth.width(), depth.height(), depth.data().iter().map(|d| d.to_le_bytes()))
}

pub fn load_depth(path: &Path) -> Result<Image<f32>, RenderError> {
    let (w, h, p) = read_raw(path, DEPTH_MAGIC, DTYPE_F32)?;
    Ok(Image::from_vec(w, h, p.into_iter().map(f32::from_le_bytes).collect()))
}

/// Little-endian `i32` face ids with a 16-byte header (`VFFI`, width, height, dtype).
pub fn save_face_ids(face: &Image<i32>, path: &Path) -> Result<(), RenderError> {
    write_raw(path, FACE_MAGIC, DTYPE_I32, face.width(), face.height(), face.data().iter().map(|d| d.to_le_bytes()))
}

pub fn load_face_ids(path: &Path) -> Result<Image<i32>, RenderError> {
    let (w, h, p) = read_raw(path, FACE_MAGIC, DTYPE_I32)?;
    Ok(Image::from_vec(w, h, p.into_iter().map(i32::from_le_bytes).collect()))
}

pub const VIEWS_INDEX: &str = "views.json";

#[derive(Debug, Serialize, Deserialize)]
struct ViewRecord {
    image_stem: String,
    camera: Camera,
    flags: ViewFlags,
}

/// Writes `<stem>.png`, `<stem>.depth` and `<stem>.face` per view plus a
/// `views.json` index of cameras. Returns the written paths.
pub fn save_views(views: &[ViewBundle], dir: &Path) -> Result<Vec<std::path::PathBuf>, RenderError> {
    let io_err = |path: &Path| {
        let path = path.display().to_string();
        move |source| RenderError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    for v in views {
        let png = dir.join(format!("{}.png", v.image_stem));
        crate::imaging::save_rgb_png(&v.color, &png)?;
        let depth = dir.join(format!("{}.depth", v.image_stem));
        save_depth(&v.depth, &depth)?;
        let face = dir.join(format!("{}.face", v.image_stem));
        save_face_ids(&v.face_id, &face)?;
        written.extend([png, depth, face]);
    }
    let index: Vec<ViewRecord> = views
        .iter()
        .map(|v| ViewRecord { image_stem: v.image_stem.clone(), camera: v.camera.clone(), flags: v.flags })
        .collect();
    let path = dir.join(VIEWS_INDEX);
    let text = serde_json::to_string_pretty(&index).expect("view index serializes") + "\n";
    std::fs::write(&path, text).map_err(io_err(&path))?;
    written.push(path);
    Ok(written)
}

/// Reads views written by [`save_views`]. Colors come back quantized to
/// 8 bits and the UV buffer, which is not persisted, is zero.
pub fn load_views(dir: &Path) -> Result<Vec<ViewBundle>, RenderError> {
    let path = dir.join(VIEWS_INDEX);
    let text = std::fs::read_to_string(&path).map_err(|source| RenderError::Io { path: path.display().to_string(), source })?;
    let index: Vec<ViewRecord> = serde_json::from_str(&text)
        .map_err(|e| RenderError::BadBuffer { path: path.display().to_string(), msg: e.to_string() })?;
    index
        .into_iter()
        .map(|r| {
            r.camera.validate()?;
            let color = crate::imaging::load_rgb_png(&dir.join(format!("{}.png", r.image_stem)))?;
            let depth = load_depth(&dir.join(format!("{}.depth", r.image_stem)))?;
            let face_id = load_face_ids(&dir.join(format!("{}.face", r.image_stem)))?;
            let res = r.camera.resolution();
            if color.resolution() != res || depth.resolution() != res || face_id.resolution() != res {
                return Err(RenderError::BadBuffer {
                    path: dir.join(&r.image_stem).display().to_string(),
                    msg: "buffer resolution differs from camera".into(),
                });
            }
            Ok(ViewBundle {
                uv: Image::filled(res.0, res.1, [0.0, 0.0]),
                camera: r.camera,
                color,
                depth,
                face_id,
                image_stem: r.image_stem,
                flags: r.flags,
            })
        })
        .collect()
}
