//! Planar geometry in local meters and the lon/lat projection used for I/O.

use serde::{Deserialize, Serialize};

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn lerp(&self, other: &Point2, t: f64) -> Point2 {
        Point2::new(
            self.x + (other.x - self.x) * t,
            self.y + (other.y - self.y) * t,
        )
    }
}

/// Bearing of the vector `from -> to` in degrees clockwise from north, in `[0, 360)`.
pub fn bearing(from: &Point2, to: &Point2) -> f64 {
    let deg = (to.x - from.x).atan2(to.y - from.y).to_degrees();
    normalize_degrees(deg)
}

pub fn normalize_degrees(deg: f64) -> f64 {
    let d = deg.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if d >= 360.0 {
        0.0
    } else {
        d
    }
}

/// Absolute difference between two directions folded into `[0, 180]`.
pub fn angular_difference(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    if d > 180.0 {
        360.0 - d
    } else {
        d
    }
}

/// Equirectangular projection about a fixed origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalProjection {
    pub lon0: f64,
    pub lat0: f64,
}

impl LocalProjection {
    pub fn new(lon0: f64, lat0: f64) -> Self {
        Self { lon0, lat0 }
    }

    /// Projection centered on the mean of the given `[lon, lat]` coordinates.
    pub fn centered_on<'a, I>(coords: I) -> Option<Self>
    where
        I: IntoIterator<Item = &'a [f64; 2]>,
    {
        let (mut lon, mut lat, mut n) = (0.0, 0.0, 0usize);
        for c in coords {
            lon += c[0];
            lat += c[1];
            n += 1;
        }
        (n > 0).then(|| Self::new(lon / n as f64, lat / n as f64))
    }

    pub fn to_planar(&self, lon: f64, lat: f64) -> Point2 {
        let k = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
        Point2::new(
            (lon - self.lon0) * k * self.lat0.to_radians().cos(),
            (lat - self.lat0) * k,
        )
    }

    pub fn to_lonlat(&self, p: &Point2) -> [f64; 2] {
        let k = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
        [
            self.lon0 + p.x / (k * self.lat0.to_radians().cos()),
            self.lat0 + p.y / k,
        ]
    }
}

/// Closest point to `p` on the closed segment `a-b`, as `(point, t)` with `t ∈ [0, 1]`.
pub fn closest_on_segment(p: &Point2, a: &Point2, b: &Point2) -> (Point2, f64) {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return (*a, 0.0);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    (a.lerp(b, t), t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bearings_follow_compass_convention() {
        let o = Point2::new(0.0, 0.0);
        assert_eq!(bearing(&o, &Point2::new(0.0, 1.0)), 0.0);
        assert_eq!(bearing(&o, &Point2::new(1.0, 0.0)), 90.0);
        assert_eq!(bearing(&o, &Point2::new(0.0, -1.0)), 180.0);
        assert_eq!(bearing(&o, &Point2::new(-1.0, 0.0)), 270.0);
    }

    #[test]
    fn angular_difference_folds() {
        assert_eq!(angular_difference(10.0, 350.0), 20.0);
        assert_eq!(angular_difference(90.0, 270.0), 180.0);
        assert_eq!(angular_difference(90.0, 90.0), 0.0);
    }

    #[test]
    fn projection_round_trips() {
        let proj = LocalProjection::new(121.47, 31.23);
        let p = proj.to_planar(121.48, 31.24);
        let back = proj.to_lonlat(&p);
        assert!((back[0] - 121.48).abs() < 1e-12);
        assert!((back[1] - 31.24).abs() < 1e-12);
        // one thousandth of a degree of latitude is ~111 m
        assert!((proj.to_planar(121.47, 31.231).y - 111.195).abs() < 0.01);
    }
}
