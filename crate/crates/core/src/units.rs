//! Unit-tagged lengths.
//!
//! Every length in the crate is a [`Length`], stored in micrometres. Pixel
//! pitches are naturally in µm while pitches and focal lengths are in mm, so
//! construction always goes through an explicit unit.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// A physical length, stored in micrometres.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Length(f64);

impl Length {
    pub const ZERO: Length = Length(0.0);

    pub const fn um(value: f64) -> Self {
        Length(value)
    }

    pub fn mm(value: f64) -> Self {
        Length(value * 1000.0)
    }

    pub fn as_um(self) -> f64 {
        self.0
    }

    pub fn as_mm(self) -> f64 {
        self.0 / 1000.0
    }

    pub fn abs(self) -> Self {
        Length(self.0.abs())
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }

    pub fn max(self, other: Length) -> Length {
        Length(self.0.max(other.0))
    }

    pub fn min(self, other: Length) -> Length {
        Length(self.0.min(other.0))
    }
}

impl fmt::Display for Length {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.abs() >= 1000.0 {
            write!(f, "{} mm", self.as_mm())
        } else {
            write!(f, "{} µm", self.0)
        }
    }
}

impl Add for Length {
    type Output = Length;
    fn add(self, rhs: Length) -> Length {
        Length(self.0 + rhs.0)
    }
}

impl Sub for Length {
    type Output = Length;
    fn sub(self, rhs: Length) -> Length {
        Length(self.0 - rhs.0)
    }
}

impl Neg for Length {
    type Output = Length;
    fn neg(self) -> Length {
        Length(-self.0)
    }
}

impl Mul<f64> for Length {
    type Output = Length;
    fn mul(self, rhs: f64) -> Length {
        Length(self.0 * rhs)
    }
}

impl Mul<Length> for f64 {
    type Output = Length;
    fn mul(self, rhs: Length) -> Length {
        Length(self * rhs.0)
    }
}

impl Div<f64> for Length {
    type Output = Length;
    fn div(self, rhs: f64) -> Length {
        Length(self.0 / rhs)
    }
}

/// Ratio of two lengths.
impl Div<Length> for Length {
    type Output = f64;
    fn div(self, rhs: Length) -> f64 {
        self.0 / rhs.0
    }
}

/// An area in µm².
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Area(f64);

impl Area {
    pub fn um2(value: f64) -> Self {
        Area(value)
    }

    pub fn mm2(value: f64) -> Self {
        Area(value * 1.0e6)
    }

    pub fn as_um2(self) -> f64 {
        self.0
    }

    pub fn as_mm2(self) -> f64 {
        self.0 / 1.0e6
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mm_and_um_agree() {
        assert_eq!(Length::mm(13.5), Length::um(13_500.0));
        assert_eq!(Length::mm(13.5).as_mm(), 13.5);
        assert_eq!(Length::mm(2.0) / Length::mm(4.0), 0.5);
        assert_eq!(Area::mm2(1.0).as_um2(), 1.0e6);
    }
}
