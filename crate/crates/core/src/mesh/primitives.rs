//! Procedural meshes used by the demo data set and the test suites.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::TriangleMesh;
use crate::geom::{Vec2, Vec3};

/// Inner padding of each cube face inside its atlas cell, in UV units.
pub const CUBE_ATLAS_MARGIN: f64 = 0.02;

/// Axis-aligned unit cube centered at the origin with six face groups
/// (`+X, -X, +Y, -Y, +Z, -Z` → groups `0..6`) and a non-overlapping atlas:
/// face `f` occupies cell `(f % 3, f / 3)` of a 3×2 grid, shrunk by
/// [`CUBE_ATLAS_MARGIN`] on every side.
pub fn unit_cube() -> TriangleMesh {
    let faces: [(Vec3, Vec3, Vec3); 6] = [
        (Vec3::X, Vec3::Y, Vec3::Z),
        (-Vec3::X, Vec3::Z, Vec3::Y),
        (Vec3::Y, Vec3::Z, Vec3::X),
        (-Vec3::Y, Vec3::X, Vec3::Z),
        (Vec3::Z, Vec3::X, Vec3::Y),
        (-Vec3::Z, Vec3::Y, Vec3::X),
    ];
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut index_of = |p: Vec3| -> u32 {
        if let Some(i) = vertices.iter().position(|&v| v == p) {
            i as u32
        } else {
            vertices.push(p);
            (vertices.len() - 1) as u32
        }
    };
    let mut triangles = Vec::new();
    let mut uvs = Vec::new();
    let mut groups = Vec::new();
    let st = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
    for (f, &(n, u, v)) in faces.iter().enumerate() {
        debug_assert_eq!(u.cross(v), n);
        let col = (f % 3) as f64;
        let row = (f / 3) as f64;
        let m = CUBE_ATLAS_MARGIN;
        let corner = |(s, t): (f64, f64)| {
            let p = n * 0.5 + u * (s - 0.5) + v * (t - 0.5);
            let uv = Vec2::new(
                col / 3.0 + m + s * (1.0 / 3.0 - 2.0 * m),
                row / 2.0 + m + t * (0.5 - 2.0 * m),
            );
            (p, uv)
        };
        let c: Vec<(Vec3, Vec2)> = st.iter().map(|&x| corner(x)).collect();
        let idx: Vec<u32> = c.iter().map(|&(p, _)| index_of(p)).collect();
        for [a, b, d] in [[0, 1, 2], [0, 2, 3]] {
            triangles.push([idx[a], idx[b], idx[d]]);
            uvs.push([c[a].1, c[b].1, c[d].1]);
            groups.push(f as i32);
        }
    }
    TriangleMesh::new("cube", vertices, triangles, Some(uvs), Some(groups))
        .expect("cube construction is valid")
}

/// Square in the plane `z = z0` spanning `[-half, half]²`, facing `-Z`
/// (towards a camera on the negative z axis), with identity UVs.
pub fn quad(z0: f64, half: f64, group: i32) -> TriangleMesh {
    quad_at(Vec3::new(0.0, 0.0, z0), half, group, "quad")
}

pub(crate) fn quad_at(center: Vec3, half: f64, group: i32, name: &str) -> TriangleMesh {
    let (cx, cy, z) = (center.x, center.y, center.z);
    let vertices = vec![
        Vec3::new(cx - half, cy - half, z),
        Vec3::new(cx + half, cy - half, z),
        Vec3::new(cx + half, cy + half, z),
        Vec3::new(cx - half, cy + half, z),
    ];
    // Clockwise seen from +z, i.e. the normal points to -z.
    let triangles = vec![[0, 2, 1], [0, 3, 2]];
    let uv = [Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(1.0, 1.0), Vec2::new(0.0, 1.0)];
    let uvs = triangles.iter().map(|t: &[u32; 3]| t.map(|i| uv[i as usize])).collect();
    TriangleMesh::new(name, vertices, triangles, Some(uvs), Some(vec![group; 2]))
        .expect("quad construction is valid")
}

/// Two parallel `-Z`-facing squares: the front one at `z_front` (group 0,
/// UV island in the left half of the atlas) hides the back one at `z_back`
/// (group 1, right half) from a camera on the negative z axis.
pub fn two_parallel_quads(z_front: f64, z_back: f64, half: f64) -> TriangleMesh {
    let front = quad_at(Vec3::new(0.0, 0.0, z_front), half, 0, "front");
    let back = quad_at(Vec3::new(0.0, 0.0, z_back), half, 1, "back");
    let mut vertices = front.vertices().to_vec();
    vertices.extend_from_slice(back.vertices());
    let mut triangles = front.triangles().to_vec();
    triangles.extend(back.triangles().iter().map(|t| t.map(|i| i + 4)));
    let squeeze = |uv: Vec2, offset: f64| Vec2::new(offset + 0.02 + uv.x * 0.46, 0.02 + uv.y * 0.96);
    let mut uvs: Vec<[Vec2; 3]> =
        front.uvs().unwrap().iter().map(|c| c.map(|uv| squeeze(uv, 0.0))).collect();
    uvs.extend(back.uvs().unwrap().iter().map(|c| c.map(|uv| squeeze(uv, 0.5))));
    TriangleMesh::new("two_quads", vertices, triangles, Some(uvs), Some(vec![0, 0, 1, 1]))
        .expect("valid")
}

/// Random triangle soup inside `[-1, 1]³` (no UVs), for rasterizer tests.
pub fn random_soup(seed: u64, n_triangles: usize) -> TriangleMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vertices = Vec::with_capacity(3 * n_triangles);
    let mut triangles = Vec::with_capacity(n_triangles);
    for t in 0..n_triangles {
        let center = Vec3::new(
            rng.random_range(-0.8..0.8),
            rng.random_range(-0.8..0.8),
            rng.random_range(-0.8..0.8),
        );
        for _ in 0..3 {
            let d = Vec3::new(
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
            );
            vertices.push(center + d);
        }
        let b = 3 * t as u32;
        triangles.push([b, b + 1, b + 2]);
    }
    TriangleMesh::new(format!("soup_{seed}"), vertices, triangles, None, None).expect("valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cube_is_closed_and_outward() {
        let cube = unit_cube();
        assert_eq!(cube.vertices().len(), 8);
        for t in 0..cube.triangle_count() {
            let [a, b, c] = cube.corners(t);
            let centroid = (a + b + c) / 3.0;
            assert!(cube.face_normal(t).dot(centroid) > 0.0, "triangle {t} faces inward");
        }
    }

    #[test]
    fn quad_faces_negative_z() {
        let q = quad(2.0, 1.0, 0);
        for t in 0..2 {
            assert!(q.face_normal(t).z < 0.0);
        }
    }
}
