//! Plane geometry helpers: angles in degrees at the API surface, radians inside.

/// 2-D point in grid units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Normalize an angle in degrees into (-180, 180].
pub fn normalize_deg(a: f64) -> f64 {
    let mut r = a % 360.0;
    if r <= -180.0 {
        r += 360.0;
    } else if r > 180.0 {
        r -= 360.0;
    }
    r
}

/// Absolute angular difference between two bearings, in [0, 180].
pub fn angle_diff_deg(a: f64, b: f64) -> f64 {
    normalize_deg(a - b).abs()
}

pub fn unit_vector(bearing_deg: f64) -> (f64, f64) {
    let r = bearing_deg.to_radians();
    (r.cos(), r.sin())
}

/// Distance along the ray to its intersection with segment `a`-`b`,
/// or `None` when the ray misses (parallel lines count as a miss).
pub fn ray_segment_hit(origin: Point, dir: (f64, f64), a: Point, b: Point) -> Option<f64> {
    let ex = b.x - a.x;
    let ey = b.y - a.y;
    let denom = dir.0 * ey - dir.1 * ex;
    if denom.abs() < 1e-12 {
        return None;
    }
    let ox = a.x - origin.x;
    let oy = a.y - origin.y;
    let t = (ox * ey - oy * ex) / denom;
    let u = (ox * dir.1 - oy * dir.0) / denom;
    if t > 1e-9 && (0.0..=1.0).contains(&u) {
        Some(t)
    } else {
        None
    }
}

/// Angle between a ray direction and the surface perpendicular of segment
/// `a`-`b`, in degrees within [0, 90]. A head-on hit measures 0.
pub fn incidence_deg(dir: (f64, f64), a: Point, b: Point) -> f64 {
    let ex = b.x - a.x;
    let ey = b.y - a.y;
    let len = ex.hypot(ey);
    // Normal of the segment; sign is irrelevant because we take |cos|.
    let nx = -ey / len;
    let ny = ex / len;
    let cos = (dir.0 * nx + dir.1 * ny).abs().clamp(0.0, 1.0);
    cos.acos().to_degrees()
}
