//! Small geodesy helpers shared by cleaning, gridding, and imputation.

pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Haversine great-circle distance in kilometers.
pub fn great_circle_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = (lat2 - lat1).to_radians();
    let dl = (lon2 - lon1).to_radians();
    let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * a.sqrt().asin()
}

/// Equirectangular projection anchored at an origin: east/north displacement
/// in kilometers, with the longitude axis scaled by cos(origin latitude).
pub fn equirect_km(origin_lat: f64, origin_lon: f64, lat: f64, lon: f64) -> (f64, f64) {
    let east = (lon - origin_lon).to_radians() * origin_lat.to_radians().cos() * EARTH_RADIUS_KM;
    let north = (lat - origin_lat).to_radians() * EARTH_RADIUS_KM;
    (east, north)
}
