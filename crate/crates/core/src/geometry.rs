//! Array geometry and coordinate systems.
//!
//! Two coordinate systems coexist: the global frame, in which a direction of
//! arrival (DOA) is an (azimuth, elevation) pair on the unit sphere, and a
//! per-pair local frame, in which only the angle of arrival (AOA) between the
//! DOA and the pair axis is observable. This module owns the global DOA grid,
//! microphone pair derivation and the per-pair AOA lookup tables.

use thiserror::Error;

/// Two microphones closer than this (meters) are treated as coincident.
pub const COINCIDENT_MIC_TOLERANCE_M: f64 = 1e-6;

/// Default speed of sound in air (m/s).
pub const DEFAULT_SPEED_OF_SOUND: f64 = 343.0;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("array needs at least 2 microphones, got {0}")]
    TooFewMics(usize),
    #[error("microphone {index} has a non-finite coordinate")]
    NonFinitePosition { index: usize },
    #[error("microphones {i} and {j} coincide (distance {dist:.3e} m)")]
    CoincidentMics { i: usize, j: usize, dist: f64 },
    #[error("microphone {index} coincides with the array center; curvilinear selection is undefined")]
    MicAtCenter { index: usize },
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("grid resolution {name} = {value}° out of range (0, 90]")]
    ResolutionOutOfRange { name: &'static str, value: f64 },
}

/// 3-D vector in meters (positions) or unitless (directions).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scale(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn normalized(self) -> Vec3 {
        self.scale(1.0 / self.norm())
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl std::ops::Sub for Vec3 {
    type Output = Vec3;

    fn sub(self, other: Vec3) -> Vec3 {
        Vec3::new(self.x - other.x, self.y - other.y, self.z - other.z)
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

/// Angle between two unit-ish vectors in degrees, with the dot product clamped
/// to [-1, 1] to absorb floating-point drift at 0° and 180°.
pub fn angle_between_deg(a: Vec3, b: Vec3) -> f64 {
    let denom = a.norm() * b.norm();
    let cos = (a.dot(b) / denom).clamp(-1.0, 1.0);
    cos.acos().to_degrees()
}

/// Microphone positions in meters plus the reference center used for
/// curvilinear pair selection. Immutable after construction.
#[derive(Debug, Clone)]
pub struct ArrayGeometry {
    mics: Vec<Vec3>,
    center: Vec3,
}

impl ArrayGeometry {
    /// Builds a geometry with the centroid of the positions as center.
    pub fn new(mics: Vec<Vec3>) -> Result<Self, GeometryError> {
        let n = mics.len() as f64;
        let centroid = mics
            .iter()
            .fold(Vec3::ZERO, |acc, m| Vec3::new(acc.x + m.x, acc.y + m.y, acc.z + m.z))
            .scale(1.0 / n);
        Self::with_center(mics, centroid)
    }

    /// Builds a geometry with an explicit center.
    pub fn with_center(mics: Vec<Vec3>, center: Vec3) -> Result<Self, GeometryError> {
        if mics.len() < 2 {
            return Err(GeometryError::TooFewMics(mics.len()));
        }
        for (index, m) in mics.iter().enumerate() {
            if !m.is_finite() {
                return Err(GeometryError::NonFinitePosition { index });
            }
        }
        if !center.is_finite() {
            return Err(GeometryError::NonFinitePosition { index: usize::MAX });
        }
        for i in 0..mics.len() {
            for j in i + 1..mics.len() {
                let dist = (mics[j] - mics[i]).norm();
                if dist <= COINCIDENT_MIC_TOLERANCE_M {
                    return Err(GeometryError::CoincidentMics { i, j, dist });
                }
            }
        }
        Ok(Self { mics, center })
    }

    pub fn mics(&self) -> &[Vec3] {
        &self.mics
    }

    pub fn len(&self) -> usize {
        self.mics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mics.is_empty()
    }

    pub fn center(&self) -> Vec3 {
        self.center
    }
}

/// One unordered microphone pair (i < j) with its localization constants.
///
/// `axis` points from mic `i` to mic `j`; `tau` is the largest delay the pair
/// can observe, in samples: `tau = h * fs / c`.
#[derive(Debug, Clone, Copy)]
pub struct MicPair {
    pub i: usize,
    pub j: usize,
    pub axis: Vec3,
    pub h: f64,
    pub tau: f64,
}

/// Derives every unordered microphone pair with axis, spacing and maximum
/// observable delay populated.
pub fn derive_pairs(geom: &ArrayGeometry, fs: f64, c: f64) -> Result<Vec<MicPair>, GeometryError> {
    if fs <= 0.0 {
        return Err(GeometryError::NonPositive { name: "sample rate", value: fs });
    }
    if c <= 0.0 {
        return Err(GeometryError::NonPositive { name: "speed of sound", value: c });
    }
    let mics = geom.mics();
    let mut pairs = Vec::with_capacity(mics.len() * (mics.len() - 1) / 2);
    for i in 0..mics.len() {
        for j in i + 1..mics.len() {
            let sep = mics[j] - mics[i];
            let h = sep.norm();
            if h <= COINCIDENT_MIC_TOLERANCE_M {
                return Err(GeometryError::CoincidentMics { i, j, dist: h });
            }
            pairs.push(MicPair { i, j, axis: sep.scale(1.0 / h), h, tau: h * fs / c });
        }
    }
    Ok(pairs)
}

/// Keeps the pairs whose central angle seen from the array center is at least
/// `min_angle_deg`. With `min_angle_deg = 0` every pair passes.
///
/// Used to thin dense spherical arrays: pairs close together on the baffle
/// carry nearly redundant delay information.
pub fn select_pairs_curvilinear(
    geom: &ArrayGeometry,
    pairs: &[MicPair],
    min_angle_deg: f64,
) -> Result<Vec<MicPair>, GeometryError> {
    let center = geom.center();
    let mut radial = Vec::with_capacity(geom.len());
    for (index, m) in geom.mics().iter().enumerate() {
        let r = *m - center;
        if r.norm() <= COINCIDENT_MIC_TOLERANCE_M {
            return Err(GeometryError::MicAtCenter { index });
        }
        radial.push(r);
    }
    Ok(pairs
        .iter()
        .filter(|p| angle_between_deg(radial[p.i], radial[p.j]) >= min_angle_deg)
        .copied()
        .collect())
}

/// Discretized (azimuth, elevation) search space with precomputed unit
/// direction vectors.
///
/// Azimuths cover [0°, 360°) and elevations [-90°, +90°], both ascending.
/// Directions are stored elevation-major: linear index `k * n_az + j` for
/// elevation index `k` and azimuth index `j`. At the poles every azimuth maps
/// to the same physical direction; callers that need one-direction-per-point
/// semantics should compare unit vectors, not indices.
#[derive(Debug, Clone)]
pub struct DoaGrid {
    azimuths_deg: Vec<f64>,
    elevations_deg: Vec<f64>,
    dirs: Vec<Vec3>,
}

/// Unit direction for an (azimuth, elevation) pair in degrees.
pub fn direction(azimuth_deg: f64, elevation_deg: f64) -> Vec3 {
    let az = azimuth_deg.to_radians();
    let el = elevation_deg.to_radians();
    Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin())
}

/// Inverse of [`direction`]: (azimuth in [0°, 360°), elevation in [-90°, 90°]).
pub fn angles_from_direction(dir: Vec3) -> (f64, f64) {
    let unit = dir.normalized();
    let mut az = unit.y.atan2(unit.x).to_degrees();
    if az < 0.0 {
        az += 360.0;
    }
    if az >= 360.0 {
        az = 0.0;
    }
    let el = unit.z.clamp(-1.0, 1.0).asin().to_degrees();
    (az, el)
}

impl DoaGrid {
    /// Builds the grid at the given azimuth and elevation resolutions in
    /// degrees. Azimuth count is `ceil(360 / r_az)`, elevation count is
    /// `floor(180 / r_el) + 1` starting from -90°.
    pub fn new(r_az_deg: f64, r_el_deg: f64) -> Result<Self, GeometryError> {
        if !(r_az_deg > 0.0 && r_az_deg <= 90.0) {
            return Err(GeometryError::ResolutionOutOfRange { name: "azimuth", value: r_az_deg });
        }
        if !(r_el_deg > 0.0 && r_el_deg <= 90.0) {
            return Err(GeometryError::ResolutionOutOfRange { name: "elevation", value: r_el_deg });
        }
        let n_az = (360.0 / r_az_deg).ceil() as usize;
        let n_el = (180.0 / r_el_deg).floor() as usize + 1;
        let azimuths_deg: Vec<f64> = (0..n_az).map(|j| j as f64 * r_az_deg).collect();
        let elevations_deg: Vec<f64> = (0..n_el).map(|k| -90.0 + k as f64 * r_el_deg).collect();
        let mut dirs = Vec::with_capacity(n_az * n_el);
        for &el in &elevations_deg {
            for &az in &azimuths_deg {
                dirs.push(direction(az, el));
            }
        }
        Ok(Self { azimuths_deg, elevations_deg, dirs })
    }

    pub fn azimuths_deg(&self) -> &[f64] {
        &self.azimuths_deg
    }

    pub fn elevations_deg(&self) -> &[f64] {
        &self.elevations_deg
    }

    pub fn n_az(&self) -> usize {
        self.azimuths_deg.len()
    }

    pub fn n_el(&self) -> usize {
        self.elevations_deg.len()
    }

    /// Number of grid points.
    pub fn len(&self) -> usize {
        self.dirs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dirs.is_empty()
    }

    pub fn dirs(&self) -> &[Vec3] {
        &self.dirs
    }

    /// (azimuth, elevation) in degrees for a linear grid index.
    pub fn angles_at(&self, index: usize) -> (f64, f64) {
        let k = index / self.n_az();
        let j = index % self.n_az();
        (self.azimuths_deg[j], self.elevations_deg[k])
    }
}

/// Local AOA of every grid point with respect to one microphone pair, in
/// degrees in [0°, 180°]. Indexed like the grid it was built from.
#[derive(Debug, Clone)]
pub struct AoaTable {
    alpha_deg: Vec<f64>,
}

/// Computes the AOA table for one pair: `alpha = arccos(dir . axis)`.
pub fn compute_aoa_table(grid: &DoaGrid, pair: &MicPair) -> AoaTable {
    let alpha_deg = grid
        .dirs()
        .iter()
        .map(|&d| d.dot(pair.axis).clamp(-1.0, 1.0).acos().to_degrees())
        .collect();
    AoaTable { alpha_deg }
}

impl AoaTable {
    /// Table from precomputed angles, for callers steering somewhere other
    /// than a [`DoaGrid`].
    pub fn from_angles(alpha_deg: Vec<f64>) -> Self {
        Self { alpha_deg }
    }

    pub fn alpha_deg(&self) -> &[f64] {
        &self.alpha_deg
    }

    pub fn len(&self) -> usize {
        self.alpha_deg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha_deg.is_empty()
    }
}
