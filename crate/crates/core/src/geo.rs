//! Spherical geometry helpers shared by the wind-field and area-of-effect
//! modules.
//!
//! All positions are plain (longitude, latitude) pairs in decimal degrees.
//! Distances come in two flavours and it matters which one a caller wants:
//! metres along the great circle (used to convert wind speed into degrees
//! travelled per day) and the central angle in degrees (used for search-radius
//! tests, where a radius like 2.8° stands for roughly 300 km).

/// Mean Earth radius in metres.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// A position in decimal degrees, longitude first.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LonLat {
    pub lon: f64,
    pub lat: f64,
}

impl LonLat {
    pub fn new(lon: f64, lat: f64) -> Self {
        Self { lon, lat }
    }
}

/// Central angle between two points in radians (haversine formula).
pub fn central_angle_rad(a: LonLat, b: LonLat) -> f64 {
    let phi1 = a.lat.to_radians();
    let phi2 = b.lat.to_radians();
    let dphi = (b.lat - a.lat).to_radians();
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * h.sqrt().min(1.0).asin()
}

/// Great-circle distance between two points in metres.
pub fn haversine_m(a: LonLat, b: LonLat) -> f64 {
    EARTH_RADIUS_M * central_angle_rad(a, b)
}

/// Great-circle distance between two points expressed in degrees of arc.
pub fn central_angle_deg(a: LonLat, b: LonLat) -> f64 {
    central_angle_rad(a, b).to_degrees()
}

/// Metres spanned by one degree of longitude at the given latitude, i.e. the
/// great-circle distance from `(lon, lat)` to `(lon + 1, lat)`.
///
/// This is the divisor that converts a wind displacement in metres into
/// degrees; it does not depend on the longitude itself.
pub fn meters_per_degree_lon(lat: f64) -> f64 {
    haversine_m(LonLat::new(0.0, lat), LonLat::new(1.0, lat))
}
