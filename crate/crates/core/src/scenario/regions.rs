//! Region centroid table used when a record carries no coordinates.
//!
//! Codes are two-letter US state/territory abbreviations (FEMA `state`,
//! NOAA `STATE` after abbreviation). Coordinates are approximate geographic
//! centroids in decimal degrees.

const CENTROIDS: &[(&str, &str, f64, f64)] = &[
    ("AK", "ALASKA", 64.73, -152.47),
    ("AL", "ALABAMA", 32.79, -86.83),
    ("AR", "ARKANSAS", 34.90, -92.44),
    ("AZ", "ARIZONA", 34.29, -111.66),
    ("CA", "CALIFORNIA", 37.18, -119.47),
    ("CO", "COLORADO", 38.99, -105.55),
    ("CT", "CONNECTICUT", 41.62, -72.73),
    ("DC", "DISTRICT OF COLUMBIA", 38.90, -77.02),
    ("DE", "DELAWARE", 38.99, -75.51),
    ("FL", "FLORIDA", 28.63, -82.45),
    ("GA", "GEORGIA", 32.64, -83.44),
    ("HI", "HAWAII", 20.29, -156.37),
    ("IA", "IOWA", 42.08, -93.50),
    ("ID", "IDAHO", 44.35, -114.61),
    ("IL", "ILLINOIS", 40.04, -89.20),
    ("IN", "INDIANA", 39.89, -86.28),
    ("KS", "KANSAS", 38.49, -98.38),
    ("KY", "KENTUCKY", 37.53, -85.30),
    ("LA", "LOUISIANA", 31.07, -92.00),
    ("MA", "MASSACHUSETTS", 42.26, -71.81),
    ("MD", "MARYLAND", 39.06, -76.80),
    ("ME", "MAINE", 45.37, -69.24),
    ("MI", "MICHIGAN", 44.35, -85.41),
    ("MN", "MINNESOTA", 46.28, -94.31),
    ("MO", "MISSOURI", 38.36, -92.46),
    ("MS", "MISSISSIPPI", 32.74, -89.67),
    ("MT", "MONTANA", 47.05, -109.63),
    ("NC", "NORTH CAROLINA", 35.56, -79.39),
    ("ND", "NORTH DAKOTA", 47.45, -100.47),
    ("NE", "NEBRASKA", 41.54, -99.80),
    ("NH", "NEW HAMPSHIRE", 43.68, -71.58),
    ("NJ", "NEW JERSEY", 40.19, -74.67),
    ("NM", "NEW MEXICO", 34.41, -106.11),
    ("NV", "NEVADA", 39.33, -116.63),
    ("NY", "NEW YORK", 42.95, -75.53),
    ("OH", "OHIO", 40.29, -82.79),
    ("OK", "OKLAHOMA", 35.59, -97.49),
    ("OR", "OREGON", 43.93, -120.56),
    ("PA", "PENNSYLVANIA", 40.88, -77.80),
    ("PR", "PUERTO RICO", 18.22, -66.59),
    ("RI", "RHODE ISLAND", 41.68, -71.56),
    ("SC", "SOUTH CAROLINA", 33.92, -80.90),
    ("SD", "SOUTH DAKOTA", 44.44, -100.23),
    ("TN", "TENNESSEE", 35.86, -86.35),
    ("TX", "TEXAS", 31.48, -99.33),
    ("UT", "UTAH", 39.31, -111.67),
    ("VA", "VIRGINIA", 37.52, -78.85),
    ("VT", "VERMONT", 44.07, -72.67),
    ("WA", "WASHINGTON", 47.38, -120.45),
    ("WI", "WISCONSIN", 44.62, -89.99),
    ("WV", "WEST VIRGINIA", 38.64, -80.62),
    ("WY", "WYOMING", 42.99, -107.55),
];

/// Normalizes a region name or code to its two-letter code.
pub fn normalize_code(raw: &str) -> Option<&'static str> {
    let s = raw.trim().to_ascii_uppercase();
    CENTROIDS
        .iter()
        .find(|(code, name, _, _)| *code == s || *name == s)
        .map(|(code, _, _, _)| *code)
}

/// `(lat, lon)` centroid for a region code or full name.
pub fn centroid(raw: &str) -> Option<(f64, f64)> {
    let code = normalize_code(raw)?;
    CENTROIDS
        .iter()
        .find(|(c, _, _, _)| *c == code)
        .map(|(_, _, lat, lon)| (*lat, *lon))
}
