use std::fmt;
use std::ops::Range;

use ordered_float::OrderedFloat;
use serde::{Deserialize, Serialize};

/// A point of a finite metric space: a fixed-length tuple of scalars.
///
/// Coordinates are finite `f64` values with `-0.0` normalised to `0.0`, so
/// equality, hashing and the derived lexicographic order are exact. Integer
/// grids embedded in `f64` therefore compare bit-exactly; real-valued data
/// inherits the usual floating-point caveats and is compared with an explicit
/// tolerance by the routines that need one.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "Vec<f64>", into = "Vec<f64>")]
pub struct Point {
    coords: Vec<OrderedFloat<f64>>,
}

impl Point {
    /// Builds a point from raw coordinates.
    ///
    /// Panics on non-finite coordinates: points are model data, and NaN or
    /// infinity in a coordinate is always a construction bug.
    pub fn new<I>(coords: I) -> Self
    where
        I: IntoIterator<Item = f64>,
    {
        let coords = coords
            .into_iter()
            .map(|c| {
                assert!(c.is_finite(), "point coordinates must be finite");
                OrderedFloat(if c == 0.0 { 0.0 } else { c })
            })
            .collect();
        Point { coords }
    }

    pub fn int(coords: &[i64]) -> Self {
        Point::new(coords.iter().map(|&c| c as f64))
    }

    pub fn scalar(value: f64) -> Self {
        Point::new([value])
    }

    pub fn dims(&self) -> usize {
        self.coords.len()
    }

    pub fn coord(&self, i: usize) -> f64 {
        self.coords[i].0
    }

    pub fn coords(&self) -> impl Iterator<Item = f64> + '_ {
        self.coords.iter().map(|c| c.0)
    }

    /// The sub-point formed by the given coordinate range.
    pub fn project(&self, range: Range<usize>) -> Point {
        Point {
            coords: self.coords[range].to_vec(),
        }
    }

    /// Concatenation of the coordinate tuples.
    pub fn concat(&self, other: &Point) -> Point {
        let mut coords = self.coords.clone();
        coords.extend_from_slice(&other.coords);
        Point { coords }
    }

    /// Coordinate-wise sum. Panics on dimension mismatch.
    pub fn add(&self, other: &Point) -> Point {
        assert_eq!(self.dims(), other.dims(), "dimension mismatch in Point::add");
        Point::new(
            self.coords()
                .zip(other.coords())
                .map(|(a, b)| a + b),
        )
    }
}

impl From<Vec<f64>> for Point {
    fn from(coords: Vec<f64>) -> Self {
        Point::new(coords)
    }
}

impl From<Point> for Vec<f64> {
    fn from(p: Point) -> Self {
        p.coords().collect()
    }
}

fn write_scalar(f: &mut fmt::Formatter<'_>, c: f64) -> fmt::Result {
    if c.fract() == 0.0 && c.abs() < 1e15 {
        write!(f, "{}", c as i64)
    } else {
        write!(f, "{c}")
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.coords().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write_scalar(f, c)?;
        }
        write!(f, ")")
    }
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexicographic_order() {
        let a = Point::int(&[-2, -1]);
        let b = Point::int(&[0, -1]);
        let c = Point::int(&[0, 0]);
        assert!(a < b && b < c);
    }

    #[test]
    fn negative_zero_normalised() {
        assert_eq!(Point::new([-0.0]), Point::new([0.0]));
    }

    #[test]
    fn display_integers_without_decimals() {
        assert_eq!(Point::int(&[0, -1]).to_string(), "(0,-1)");
        assert_eq!(Point::new([1.5]).to_string(), "(1.5)");
    }

    #[test]
    fn serde_round_trip() {
        let p = Point::int(&[3, -4]);
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(json, "[3.0,-4.0]");
        let back: Point = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    #[should_panic]
    fn non_finite_rejected() {
        let _ = Point::new([f64::NAN]);
    }
}
