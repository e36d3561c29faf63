use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::point::Point;

/// A finite set of points, stored deduplicated in lexicographic order.
///
/// The canonical order makes set equality, hashing and iteration
/// deterministic, which every enumeration in this crate relies on.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "Vec<Point>", into = "Vec<Point>")]
pub struct FinitePointSet {
    points: Vec<Point>,
}

impl FinitePointSet {
    pub fn new<I>(points: I) -> Self
    where
        I: IntoIterator<Item = Point>,
    {
        let mut points: Vec<Point> = points.into_iter().collect();
        points.sort();
        points.dedup();
        FinitePointSet { points }
    }

    pub fn empty() -> Self {
        FinitePointSet { points: Vec::new() }
    }

    pub fn singleton(p: Point) -> Self {
        FinitePointSet { points: vec![p] }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.points.binary_search(p).is_ok()
    }

    /// Index of `p` in the canonical order.
    pub fn index_of(&self, p: &Point) -> Option<usize> {
        self.points.binary_search(p).ok()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point> {
        self.points.iter()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    /// First point in canonical (lexicographic) order.
    pub fn first(&self) -> Result<&Point> {
        self.points.first().ok_or(Error::EmptySet("first"))
    }

    pub fn union(&self, other: &FinitePointSet) -> FinitePointSet {
        FinitePointSet::new(self.iter().chain(other.iter()).cloned())
    }

    /// Image of the set under a point function.
    pub fn map<F>(&self, f: F) -> FinitePointSet
    where
        F: FnMut(&Point) -> Point,
    {
        FinitePointSet::new(self.points.iter().map(f))
    }

    /// Projection of every element onto a coordinate range.
    pub fn project(&self, range: Range<usize>) -> FinitePointSet {
        self.map(|p| p.project(range.clone()))
    }
}

impl From<Vec<Point>> for FinitePointSet {
    fn from(points: Vec<Point>) -> Self {
        FinitePointSet::new(points)
    }
}

impl From<FinitePointSet> for Vec<Point> {
    fn from(s: FinitePointSet) -> Self {
        s.points
    }
}

impl FromIterator<Point> for FinitePointSet {
    fn from_iter<I: IntoIterator<Item = Point>>(iter: I) -> Self {
        FinitePointSet::new(iter)
    }
}

impl<'a> IntoIterator for &'a FinitePointSet {
    type Item = &'a Point;
    type IntoIter = std::slice::Iter<'a, Point>;

    fn into_iter(self) -> Self::IntoIter {
        self.points.iter()
    }
}

impl fmt::Display for FinitePointSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, p) in self.points.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{p}")?;
        }
        write!(f, "}}")
    }
}

impl fmt::Debug for FinitePointSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// A finite joint range: a set of (left, right) point pairs.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize, Debug)]
#[serde(from = "Vec<(Point, Point)>", into = "Vec<(Point, Point)>")]
pub struct FiniteRelation {
    pairs: Vec<(Point, Point)>,
}

impl FiniteRelation {
    pub fn new<I>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (Point, Point)>,
    {
        let mut pairs: Vec<(Point, Point)> = pairs.into_iter().collect();
        pairs.sort();
        pairs.dedup();
        FiniteRelation { pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, (Point, Point)> {
        self.pairs.iter()
    }

    /// Marginal range of the left component.
    pub fn left_range(&self) -> FinitePointSet {
        FinitePointSet::new(self.pairs.iter().map(|(x, _)| x.clone()))
    }

    /// Marginal range of the right component.
    pub fn right_range(&self) -> FinitePointSet {
        FinitePointSet::new(self.pairs.iter().map(|(_, y)| y.clone()))
    }
}

impl From<Vec<(Point, Point)>> for FiniteRelation {
    fn from(pairs: Vec<(Point, Point)>) -> Self {
        FiniteRelation::new(pairs)
    }
}

impl From<FiniteRelation> for Vec<(Point, Point)> {
    fn from(r: FiniteRelation) -> Self {
        r.pairs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_order_and_dedup() {
        let s = FinitePointSet::new(vec![
            Point::int(&[2]),
            Point::int(&[0]),
            Point::int(&[2]),
            Point::int(&[1]),
        ]);
        let coords: Vec<i64> = s.iter().map(|p| p.coord(0) as i64).collect();
        assert_eq!(coords, vec![0, 1, 2]);
        assert_eq!(s.len(), 3);
    }

    #[test]
    fn equality_ignores_construction_order() {
        let a = FinitePointSet::new(vec![Point::int(&[1]), Point::int(&[0])]);
        let b = FinitePointSet::new(vec![Point::int(&[0]), Point::int(&[1])]);
        assert_eq!(a, b);
    }

    #[test]
    fn relation_marginals() {
        let r = FiniteRelation::new(vec![
            (Point::int(&[0]), Point::int(&[10])),
            (Point::int(&[1]), Point::int(&[10])),
            (Point::int(&[2]), Point::int(&[20])),
        ]);
        assert_eq!(r.left_range().len(), 3);
        assert_eq!(r.right_range().len(), 2);
    }
}
