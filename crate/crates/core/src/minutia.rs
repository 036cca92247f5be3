//! Extended minutiae and minutia sets.
//!
//! Types follow the fifteen-code forensic taxonomy: codes 1 and 2 are the
//! typical ridge-ending and bifurcation, everything above is a rare feature.

use std::fmt;

use crate::error::{Error, Result};

#[repr(u8)]
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MinutiaType {
    RidgeEnding = 1,
    Bifurcation = 2,
    Deviation = 3,
    Bridge = 4,
    Fragment = 5,
    Interruption = 6,
    Enclosure = 7,
    Point = 8,
    RidgeCrossing = 9,
    Transversal = 10,
    Circle = 11,
    Delta = 12,
    Assemble = 13,
    MStructure = 14,
    Return = 15,
}

impl MinutiaType {
    pub const ALL: [MinutiaType; 15] = [
        MinutiaType::RidgeEnding,
        MinutiaType::Bifurcation,
        MinutiaType::Deviation,
        MinutiaType::Bridge,
        MinutiaType::Fragment,
        MinutiaType::Interruption,
        MinutiaType::Enclosure,
        MinutiaType::Point,
        MinutiaType::RidgeCrossing,
        MinutiaType::Transversal,
        MinutiaType::Circle,
        MinutiaType::Delta,
        MinutiaType::Assemble,
        MinutiaType::MStructure,
        MinutiaType::Return,
    ];

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            1..=15 => Ok(Self::ALL[code as usize - 1]),
            _ => Err(Error::Validation(format!(
                "minutia type code {code} outside 1..=15"
            ))),
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    /// Anything other than a ridge-ending or bifurcation.
    pub fn is_rare(self) -> bool {
        self.code() > 2
    }

    pub fn name(self) -> &'static str {
        match self {
            MinutiaType::RidgeEnding => "Ridge-ending",
            MinutiaType::Bifurcation => "Bifurcation",
            MinutiaType::Deviation => "Deviation",
            MinutiaType::Bridge => "Bridge",
            MinutiaType::Fragment => "Fragment",
            MinutiaType::Interruption => "Interruption",
            MinutiaType::Enclosure => "Enclosure",
            MinutiaType::Point => "Point",
            MinutiaType::RidgeCrossing => "Ridge crossing",
            MinutiaType::Transversal => "Transversal",
            MinutiaType::Circle => "Circle",
            MinutiaType::Delta => "Delta",
            MinutiaType::Assemble => "Assemble",
            MinutiaType::MStructure => "M-structure",
            MinutiaType::Return => "Return",
        }
    }

    /// Number of marked points an examiner uses to annotate this feature.
    pub fn marking_points(self) -> usize {
        match self {
            MinutiaType::Deviation => 2,
            MinutiaType::Assemble => 3,
            _ => 1,
        }
    }
}

impl fmt::Display for MinutiaType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.name(), self.code())
    }
}

pub fn is_rare(mtype: MinutiaType) -> bool {
    mtype.is_rare()
}

/// One marked point of a multi-point feature: `[x, y, theta_deg]`.
pub type RawPoint = [f64; 3];

#[derive(Clone, Debug, PartialEq)]
pub struct Minutia {
    /// Pixels at 500 ppi.
    pub x: f64,
    pub y: f64,
    /// Degrees in `[0, 360)`.
    pub theta: f64,
    pub mtype: MinutiaType,
    /// Points of a multi-point rare feature before collapse.
    pub raw_points: Option<Vec<RawPoint>>,
}

impl Minutia {
    pub fn new(x: f64, y: f64, theta: f64, mtype: MinutiaType) -> Self {
        Self {
            x,
            y,
            theta,
            mtype,
            raw_points: None,
        }
    }

    pub fn is_rare(&self) -> bool {
        self.mtype.is_rare()
    }

    pub fn xy(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x.is_finite() && self.y.is_finite()) || self.x < 0.0 || self.y < 0.0 {
            return Err(Error::Validation(format!(
                "location ({}, {}) must be finite and non-negative",
                self.x, self.y
            )));
        }
        check_theta(self.theta)?;
        if let Some(raw) = &self.raw_points {
            let collapsed = collapse_multipoint(raw, self.mtype)?;
            let tol = 1e-6;
            if (collapsed.x - self.x).abs() > tol
                || (collapsed.y - self.y).abs() > tol
                || (collapsed.theta - self.theta).abs() > tol
            {
                return Err(Error::Validation(format!(
                    "({}, {}, {}) disagrees with the collapse of its raw points ({}, {}, {})",
                    self.x, self.y, self.theta, collapsed.x, collapsed.y, collapsed.theta
                )));
            }
        }
        Ok(())
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if theta.is_finite() && (0.0..360.0).contains(&theta) {
        Ok(())
    } else {
        Err(Error::Validation(format!("theta {theta} outside [0, 360)")))
    }
}

/// Wraps an angle in degrees into `[0, 360)`.
pub fn wrap_degrees(theta: f64) -> f64 {
    let w = theta.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if w >= 360.0 {
        0.0
    } else {
        w
    }
}

/// Collapses a multi-point rare feature to a single minutia: mean location,
/// numeric minimum orientation.
pub fn collapse_multipoint(points: &[RawPoint], mtype: MinutiaType) -> Result<Minutia> {
    if points.is_empty() {
        return Err(Error::InvalidInput("cannot collapse an empty point list".into()));
    }
    for p in points {
        check_theta(p[2]).map_err(|e| Error::InvalidInput(e.to_string()))?;
    }
    let n = points.len() as f64;
    let x = points.iter().map(|p| p[0]).sum::<f64>() / n;
    let y = points.iter().map(|p| p[1]).sum::<f64>() / n;
    let theta = points.iter().map(|p| p[2]).fold(f64::INFINITY, f64::min);
    Ok(Minutia {
        x,
        y,
        theta,
        mtype,
        raw_points: Some(points.to_vec()),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SetKind {
    Latent,
    Tenprint,
}

/// A latent or tenprint as an ordered collection of minutiae.
#[derive(Clone, Debug, PartialEq)]
pub struct MinutiaSet {
    pub id: String,
    pub kind: SetKind,
    minutiae: Vec<Minutia>,
}

impl MinutiaSet {
    /// Builds a validated set: non-empty, every minutia valid, no two minutiae
    /// of the same type at the same location.
    pub fn new(id: impl Into<String>, kind: SetKind, minutiae: Vec<Minutia>) -> Result<Self> {
        let id = id.into();
        if minutiae.is_empty() {
            return Err(Error::Validation(format!("minutia set '{id}' is empty")));
        }
        for (i, m) in minutiae.iter().enumerate() {
            m.validate()
                .map_err(|e| Error::Validation(format!("set '{id}', minutia {i}: {e}")))?;
        }
        let mut keys: Vec<(u64, u64, u8, usize)> = minutiae
            .iter()
            .enumerate()
            .map(|(i, m)| (m.x.to_bits(), m.y.to_bits(), m.mtype.code(), i))
            .collect();
        keys.sort_unstable();
        for w in keys.windows(2) {
            if w[0].0 == w[1].0 && w[0].1 == w[1].1 && w[0].2 == w[1].2 {
                return Err(Error::Validation(format!(
                    "set '{id}': minutiae {} and {} are duplicates",
                    w[0].3, w[1].3
                )));
            }
        }
        Ok(Self { id, kind, minutiae })
    }

    /// Skips validation. Used for sets expressed in another frame (after a
    /// transform) where coordinates may legitimately be negative.
    pub(crate) fn from_parts_unchecked(id: String, kind: SetKind, minutiae: Vec<Minutia>) -> Self {
        Self { id, kind, minutiae }
    }

    pub fn minutiae(&self) -> &[Minutia] {
        &self.minutiae
    }

    pub fn len(&self) -> usize {
        self.minutiae.len()
    }

    pub fn is_empty(&self) -> bool {
        self.minutiae.is_empty()
    }

    pub fn has_rare(&self) -> bool {
        self.minutiae.iter().any(Minutia::is_rare)
    }

    pub fn points(&self) -> Vec<[f64; 2]> {
        self.minutiae.iter().map(Minutia::xy).collect()
    }
}

/// Rare minutiae of a set, in their original order.
pub fn rare_minutiae(set: &MinutiaSet) -> Vec<&Minutia> {
    set.minutiae.iter().filter(|m| m.is_rare()).collect()
}
