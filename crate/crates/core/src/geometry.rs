//! Planar-polygon geometry shared by the scene loader and the tracer.

use nalgebra::Vector3;

pub type Vec3 = Vector3<f64>;

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Vacuum permittivity (F/m).
pub const EPSILON_0: f64 = 8.854_187_812_8e-12;

/// Newell normal of a polygon (not normalized; length is twice the area).
pub fn newell_normal(vertices: &[Vec3]) -> Vec3 {
    let mut n = Vec3::zeros();
    for (i, a) in vertices.iter().enumerate() {
        let b = vertices[(i + 1) % vertices.len()];
        n += a.cross(&b);
    }
    n
}

pub fn polygon_area(vertices: &[Vec3]) -> f64 {
    0.5 * newell_normal(vertices).norm()
}

pub fn centroid(vertices: &[Vec3]) -> Vec3 {
    vertices.iter().sum::<Vec3>() / vertices.len() as f64
}

/// Mirror `p` across the plane through `origin` with unit normal `normal`.
pub fn mirror_point(p: &Vec3, origin: &Vec3, normal: &Vec3) -> Vec3 {
    p - 2.0 * (p - origin).dot(normal) * normal
}

/// Specular mirror direction `k - 2(k.n)n`.
pub fn mirror_direction(k: &Vec3, normal: &Vec3) -> Vec3 {
    k - 2.0 * k.dot(normal) * normal
}

/// True when `p` (assumed on the polygon plane) lies inside the convex
/// polygon, boundary included up to `tol` metres.
pub fn point_in_convex_polygon(p: &Vec3, vertices: &[Vec3], normal: &Vec3, tol: f64) -> bool {
    for (i, a) in vertices.iter().enumerate() {
        let b = vertices[(i + 1) % vertices.len()];
        let edge = b - a;
        let len = edge.norm();
        // signed distance of p from the edge line, positive inside
        let inward = normal.cross(&edge) / len;
        if (p - a).dot(&inward) < -tol {
            return false;
        }
    }
    true
}

/// Intersection parameter of the line `origin + s * dir` with a plane, if the
/// line is not parallel to it.
pub fn ray_plane(origin: &Vec3, dir: &Vec3, plane_point: &Vec3, normal: &Vec3) -> Option<f64> {
    let denom = dir.dot(normal);
    if denom.abs() < 1e-15 {
        return None;
    }
    Some((plane_point - origin).dot(normal) / denom)
}

/// Whether the open segment between `p` and `q` crosses the polygon at a
/// point farther than `eps` metres from both endpoints.
///
/// The endpoints are put in a canonical order first, so the answer for
/// `(p, q)` and `(q, p)` is computed by identical floating-point operations.
pub fn segment_hits_polygon(p: &Vec3, q: &Vec3, vertices: &[Vec3], normal: &Vec3, eps: f64) -> bool {
    let (a, b) = if lex_less(p, q) { (p, q) } else { (q, p) };
    let d = b - a;
    let len = d.norm();
    if len <= 2.0 * eps {
        return false;
    }
    let da = (a - vertices[0]).dot(normal);
    let db = (b - vertices[0]).dot(normal);
    // both endpoints strictly on one side: no crossing
    if (da > 0.0 && db > 0.0) || (da < 0.0 && db < 0.0) {
        return false;
    }
    if da == db {
        // segment lies in the plane; treat as grazing, not blocking
        return false;
    }
    let s = da / (da - db);
    let dist = s * len;
    if dist <= eps || dist >= len - eps {
        return false;
    }
    let x = a + d * s;
    point_in_convex_polygon(&x, vertices, normal, 0.0)
}

fn lex_less(p: &Vec3, q: &Vec3) -> bool {
    for i in 0..3 {
        if p[i] != q[i] {
            return p[i] < q[i];
        }
    }
    false
}

/// Rotation about +z by `yaw` radians applied to `v`.
pub fn rotate_z(v: &Vec3, yaw: f64) -> Vec3 {
    let (s, c) = yaw.sin_cos();
    Vec3::new(c * v.x - s * v.y, s * v.x + c * v.y, v.z)
}
