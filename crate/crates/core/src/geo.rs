//! Great-circle geometry helpers.

/// Mean Earth radius in kilometres.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// A WGS-84 point as (longitude, latitude) in degrees.
pub type LonLat = (f64, f64);

/// Great-circle distance between two (lon, lat) points in kilometres.
pub fn haversine_km(a: LonLat, b: LonLat) -> f64 {
    let (lon1, lat1) = (a.0.to_radians(), a.1.to_radians());
    let (lon2, lat2) = (b.0.to_radians(), b.1.to_radians());
    let dlat = lat2 - lat1;
    let dlon = lon2 - lon1;
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Total path length of a fix sequence in kilometres.
pub fn path_length_km(points: &[LonLat]) -> f64 {
    points.windows(2).map(|w| haversine_km(w[0], w[1])).sum()
}
