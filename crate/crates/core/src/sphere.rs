//! Positions on the unit sphere and the distance metrics used to pick
//! forwarding targets.
//!
//! Two metrics are provided. [`angle`] is the true orthodromic separation
//! `acos(a · b)`. [`mu_hat`] is `-(a · b)`, which orders pairs exactly like
//! the angle (arc cosine is monotone) but costs three multiplications and two
//! additions, so it is the metric the forwarding plane evaluates.
//!
//! [`DistKey`] extends `mu_hat` with integer tie breakers so that every
//! candidate set has a unique minimum.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A point on the unit sphere. Normalized on construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 3]", try_from = "[f64; 3]")]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct UnitVector<T = f64> {
    x: T,
    y: T,
    z: T,
}

impl<T: Scalar> UnitVector<T> {
    /// Normalizes `(x, y, z)` onto the sphere. Rejects non-finite input and
    /// the zero vector.
    pub fn new(x: T, y: T, z: T) -> Result<Self> {
        if !(x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(Error::InvalidVector("non-finite component"));
        }
        let norm = (x * x + y * y + z * z).sqrt();
        if !norm.is_finite() || norm <= T::zero() {
            return Err(Error::InvalidVector("zero length"));
        }
        Ok(Self {
            x: x / norm,
            y: y / norm,
            z: z / norm,
        })
    }

    /// Builds a unit vector from latitude and longitude in radians.
    pub fn from_lat_lon(lat: T, lon: T) -> Self {
        let (slat, clat) = lat.sin_cos();
        let (slon, clon) = lon.sin_cos();
        Self::new(clat * clon, clat * slon, slat).expect("lat/lon maps onto the sphere")
    }

    /// Components that are already unit length within tolerance. Used when
    /// reading back persisted positions so they are kept bit for bit.
    pub fn from_unit_components(x: T, y: T, z: T) -> Result<Self> {
        if !(x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(Error::InvalidVector("non-finite component"));
        }
        let norm2 = x * x + y * y + z * z;
        if (norm2 - T::one()).abs() > T::UNIT_TOLERANCE {
            return Self::new(x, y, z);
        }
        Ok(Self { x, y, z })
    }

    pub fn x(&self) -> T {
        self.x
    }

    pub fn y(&self) -> T {
        self.y
    }

    pub fn z(&self) -> T {
        self.z
    }

    pub fn components(&self) -> [T; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(&self, other: &Self) -> T {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm_squared(&self) -> T {
        self.dot(self)
    }

    /// Antipodal point.
    pub fn negate(&self) -> Self {
        Self {
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    /// Rotates this point about the unit `axis` by `theta` radians
    /// (right-handed). The result is renormalized.
    pub fn rotate_about(&self, axis: &Self, theta: T) -> Self {
        let (s, c) = theta.sin_cos();
        let [ax, ay, az] = axis.components();
        let k_dot_v = axis.dot(self);
        // k × v
        let cx = ay * self.z - az * self.y;
        let cy = az * self.x - ax * self.z;
        let cz = ax * self.y - ay * self.x;
        let one_c = T::one() - c;
        let x = self.x * c + cx * s + ax * k_dot_v * one_c;
        let y = self.y * c + cy * s + ay * k_dot_v * one_c;
        let z = self.z * c + cz * s + az * k_dot_v * one_c;
        Self::new(x, y, z).expect("rotation preserves length")
    }

    /// Largest absolute component difference; handy for tolerance checks.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        (self.x - other.x)
            .abs()
            .max((self.y - other.y).abs())
            .max((self.z - other.z).abs())
    }
}

impl<T: Scalar> From<UnitVector<T>> for [f64; 3] {
    fn from(v: UnitVector<T>) -> Self {
        [v.x.as_f64(), v.y.as_f64(), v.z.as_f64()]
    }
}

impl<T: Scalar> TryFrom<[f64; 3]> for UnitVector<T> {
    type Error = Error;

    fn try_from([x, y, z]: [f64; 3]) -> Result<Self> {
        Self::from_unit_components(T::of(x), T::of(y), T::of(z))
    }
}

/// Routable identity of a satellite: a unique id and its current location.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct NodeAddress<T = f64> {
    pub id: u64,
    pub position: UnitVector<T>,
}

impl<T: Scalar> NodeAddress<T> {
    pub fn new(id: u64, position: UnitVector<T>) -> Self {
        Self { id, position }
    }
}

/// Orthodromic angle between two unit vectors, in `[0, π]`.
pub fn angle<T: Scalar>(a: &UnitVector<T>, b: &UnitVector<T>) -> T {
    let dot = a.dot(b).max(-T::one()).min(T::one());
    dot.acos()
}

/// Forwarding metric `-(a · b)`, in `[-1, 1]`. Orders pairs identically to
/// [`angle`].
#[inline]
pub fn mu_hat<T: Scalar>(a: &UnitVector<T>, b: &UnitVector<T>) -> T {
    -(a.x * b.x + a.y * b.y + a.z * b.z)
}

/// Preference key of a candidate gateway for a destination. Compared
/// lexicographically on `(primary, id_gap, candidate_id)`; smaller is better.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistKey<T = f64> {
    pub primary: T,
    pub id_gap: u64,
    pub candidate_id: u64,
}

impl<T: Scalar> DistKey<T> {
    /// Key that loses against every real candidate. `mu_hat` never exceeds
    /// one, so a primary of two is unreachable.
    pub fn sentinel() -> Self {
        Self {
            primary: T::of(2.0),
            id_gap: u64::MAX,
            candidate_id: u64::MAX,
        }
    }

    pub fn is_sentinel(&self) -> bool {
        self.primary > T::one()
    }
}

impl<T: Scalar> Eq for DistKey<T> {}

impl<T: Scalar> PartialOrd for DistKey<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Scalar> Ord for DistKey<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        // primaries are finite by construction
        let primary = if self.primary < other.primary {
            Ordering::Less
        } else if self.primary > other.primary {
            Ordering::Greater
        } else {
            Ordering::Equal
        };
        primary
            .then(self.id_gap.cmp(&other.id_gap))
            .then(self.candidate_id.cmp(&other.candidate_id))
    }
}

/// Key of `candidate` as a gateway toward `dest`.
#[inline]
pub fn dist_key<T: Scalar>(candidate: &NodeAddress<T>, dest: &NodeAddress<T>) -> DistKey<T> {
    DistKey {
        primary: mu_hat(&candidate.position, &dest.position),
        id_gap: candidate.id.abs_diff(dest.id),
        candidate_id: candidate.id,
    }
}
