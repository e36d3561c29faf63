//! Set-valued primitives for worst-case reasoning about uncertain variables.
//!
//! An uncertain variable is a map from an unobserved sample space to a finite
//! metric space; its behaviour is described entirely by ranges (sets of
//! values) rather than distributions. This module provides the Hausdorff and
//! average-Hausdorff distances between realized ranges, conditional ranges of
//! a joint relation, and the two constants that drive every approximation
//! bound downstream: the Lipschitz constant of a finite map and the inverse
//! Lipschitz constant relating a map's preimage sets to distances between its
//! outputs.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::metric::Metric;
use crate::point::Point;
use crate::set::{FinitePointSet, FiniteRelation};

/// A total map between finite point spaces, stored as an explicit table.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct PointMap {
    entries: BTreeMap<Point, Point>,
}

impl PointMap {
    /// Builds a map from (input, output) pairs. Conflicting duplicate keys
    /// are a schema error.
    pub fn from_pairs<I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Point, Point)>,
    {
        let mut entries = BTreeMap::new();
        for (x, y) in pairs {
            if let Some(prev) = entries.insert(x.clone(), y.clone()) {
                if prev != y {
                    return Err(Error::Schema(format!(
                        "map assigns both {prev} and {y} to {x}"
                    )));
                }
            }
        }
        Ok(PointMap { entries })
    }

    /// Tabulates a function over a finite domain.
    pub fn from_fn<F>(domain: &FinitePointSet, mut f: F) -> Self
    where
        F: FnMut(&Point) -> Point,
    {
        PointMap {
            entries: domain.iter().map(|x| (x.clone(), f(x))).collect(),
        }
    }

    pub fn get(&self, x: &Point) -> Result<&Point> {
        self.entries
            .get(x)
            .ok_or_else(|| Error::UnknownPoint { point: x.to_string() })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Point, &Point)> {
        self.entries.iter()
    }

    pub fn domain(&self) -> FinitePointSet {
        FinitePointSet::new(self.entries.keys().cloned())
    }

    pub fn image(&self) -> FinitePointSet {
        FinitePointSet::new(self.entries.values().cloned())
    }

    /// Preimage sets grouped by output value.
    pub fn preimages(&self) -> BTreeMap<Point, FinitePointSet> {
        let mut groups: BTreeMap<Point, Vec<Point>> = BTreeMap::new();
        for (x, y) in &self.entries {
            groups.entry(y.clone()).or_default().push(x.clone());
        }
        groups
            .into_iter()
            .map(|(y, xs)| (y, FinitePointSet::new(xs)))
            .collect()
    }
}

fn directed_hausdorff(a: &FinitePointSet, b: &FinitePointSet, m: &Metric) -> Result<f64> {
    let mut sup = 0.0f64;
    for x in a {
        let mut inf = f64::INFINITY;
        for y in b {
            inf = inf.min(m.dist(x, y)?);
        }
        sup = sup.max(inf);
    }
    Ok(sup)
}

/// Hausdorff distance between two nonempty finite sets:
/// the larger of the two directed sup-inf distances.
pub fn hausdorff(a: &FinitePointSet, b: &FinitePointSet, m: &Metric) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySet("hausdorff"));
    }
    Ok(directed_hausdorff(a, b, m)?.max(directed_hausdorff(b, a, m)?))
}

fn mean_min_dist(a: &FinitePointSet, b: &FinitePointSet, m: &Metric) -> Result<f64> {
    let mut total = 0.0f64;
    for x in a {
        let mut inf = f64::INFINITY;
        for y in b {
            inf = inf.min(m.dist(x, y)?);
        }
        total += inf;
    }
    Ok(total / a.len() as f64)
}

/// Average Hausdorff distance: the sum of the two directed mean-min
/// distances. Used as a differentiable-style surrogate loss for learned
/// range predictions; it is not a metric.
pub fn average_hausdorff(a: &FinitePointSet, b: &FinitePointSet, m: &Metric) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySet("average_hausdorff"));
    }
    Ok(mean_min_dist(a, b, m)? + mean_min_dist(b, a, m)?)
}

/// Conditional range of the left component of a joint range given an observed
/// right value: `{x : (x, y) in rel}`. Conditioning on a value outside the
/// right marginal is an error, not an empty set.
pub fn conditional_range(rel: &FiniteRelation, y: &Point) -> Result<FinitePointSet> {
    let section = FinitePointSet::new(
        rel.iter()
            .filter(|(_, ry)| ry == y)
            .map(|(x, _)| x.clone()),
    );
    if section.is_empty() {
        return Err(Error::UnknownConditioningValue { value: y.to_string() });
    }
    Ok(section)
}

/// Smallest constant `L` such that the Hausdorff distance between any two
/// preimage sets of `f` is at most `L` times the distance between the
/// corresponding outputs. Finite for every finite map; `0` when the image is
/// a single value.
pub fn l_inverse_constant(f: &PointMap, mx: &Metric, my: &Metric) -> Result<f64> {
    if f.is_empty() {
        return Err(Error::EmptySet("l_inverse_constant"));
    }
    let pre: Vec<(Point, FinitePointSet)> = f.preimages().into_iter().collect();
    let mut l = 0.0f64;
    for (i, (y1, p1)) in pre.iter().enumerate() {
        for (y2, p2) in pre.iter().skip(i + 1) {
            let dy = my.dist(y1, y2)?;
            debug_assert!(dy > 0.0, "distinct outputs at distance 0 violate the metric axioms");
            l = l.max(hausdorff(p1, p2, mx)? / dy);
        }
    }
    Ok(l)
}

/// Smallest constant `L` with `d(f(x1), f(x2)) <= L * d(x1, x2)` over the
/// map's finite domain. `0` for constant maps and singleton domains.
pub fn lipschitz_constant(f: &PointMap, mx: &Metric, my: &Metric) -> Result<f64> {
    if f.is_empty() {
        return Err(Error::EmptySet("lipschitz_constant"));
    }
    let entries: Vec<(&Point, &Point)> = f.iter().collect();
    let mut l = 0.0f64;
    for (i, (x1, y1)) in entries.iter().enumerate() {
        for (x2, y2) in entries.iter().skip(i + 1) {
            let dx = mx.dist(x1, x2)?;
            debug_assert!(dx > 0.0, "distinct inputs at distance 0 violate the metric axioms");
            l = l.max(my.dist(y1, y2)? / dx);
        }
    }
    Ok(l)
}

/// Largest absolute difference between the suprema of two scalar tables over
/// the same finite index set; the building block behind every value-function
/// comparison here. Returns 0 for empty input per the empty-supremum
/// convention.
pub fn sup_abs_difference(f: &[f64], g: &[f64]) -> f64 {
    f.iter()
        .zip(g.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(xs: &[i64]) -> FinitePointSet {
        FinitePointSet::new(xs.iter().map(|&x| Point::int(&[x])))
    }

    #[test]
    fn hausdorff_frozen_example() {
        // {0,1} vs {2} under 1-d Manhattan: directed distances are 2 and 1.
        let d = hausdorff(&set(&[0, 1]), &set(&[2]), &Metric::Manhattan).unwrap();
        assert_eq!(d, 2.0);
    }

    #[test]
    fn hausdorff_zero_iff_equal() {
        let a = set(&[0, 3]);
        let b = set(&[3, 0]);
        assert_eq!(hausdorff(&a, &b, &Metric::Manhattan).unwrap(), 0.0);
        let c = set(&[0, 2]);
        assert!(hausdorff(&a, &c, &Metric::Manhattan).unwrap() > 0.0);
    }

    #[test]
    fn hausdorff_empty_is_error() {
        let e = FinitePointSet::empty();
        assert!(matches!(
            hausdorff(&e, &set(&[0]), &Metric::Manhattan),
            Err(Error::EmptySet(_))
        ));
    }

    #[test]
    fn average_hausdorff_frozen_example() {
        // {0,2} vs {1}: each directed mean-min distance is 1, total 2.
        let d = average_hausdorff(&set(&[0, 2]), &set(&[1]), &Metric::Manhattan).unwrap();
        assert_eq!(d, 2.0);
    }

    #[test]
    fn average_hausdorff_not_symmetric_in_parts_but_total_is() {
        let a = set(&[0, 1, 2]);
        let b = set(&[0]);
        let d1 = average_hausdorff(&a, &b, &Metric::Manhattan).unwrap();
        let d2 = average_hausdorff(&b, &a, &Metric::Manhattan).unwrap();
        assert!((d1 - d2).abs() < 1e-12);
    }

    #[test]
    fn conditional_range_section_and_unknown_value() {
        let rel = FiniteRelation::new(vec![
            (Point::int(&[0]), Point::int(&[10])),
            (Point::int(&[1]), Point::int(&[10])),
            (Point::int(&[2]), Point::int(&[20])),
        ]);
        let s = conditional_range(&rel, &Point::int(&[10])).unwrap();
        assert_eq!(s, set(&[0, 1]));
        assert!(matches!(
            conditional_range(&rel, &Point::int(&[30])),
            Err(Error::UnknownConditioningValue { .. })
        ));
    }

    #[test]
    fn l_inverse_frozen_example() {
        // x mod 2 on {0,1,2,3}: preimages {0,2} and {1,3} are at Hausdorff
        // distance 1 while the outputs differ by 1.
        let dom = set(&[0, 1, 2, 3]);
        let f = PointMap::from_fn(&dom, |x| Point::scalar(x.coord(0).rem_euclid(2.0)));
        let l = l_inverse_constant(&f, &Metric::Manhattan, &Metric::Manhattan).unwrap();
        assert_eq!(l, 1.0);
    }

    #[test]
    fn l_inverse_constant_map_is_zero() {
        let dom = set(&[0, 1, 2]);
        let f = PointMap::from_fn(&dom, |_| Point::scalar(7.0));
        let l = l_inverse_constant(&f, &Metric::Manhattan, &Metric::Manhattan).unwrap();
        assert_eq!(l, 0.0);
    }

    #[test]
    fn lipschitz_frozen_example() {
        let dom = set(&[0, 1, 2]);
        let f = PointMap::from_fn(&dom, |x| Point::scalar(2.0 * x.coord(0)));
        let l = lipschitz_constant(&f, &Metric::Manhattan, &Metric::Manhattan).unwrap();
        assert_eq!(l, 2.0);
    }

    #[test]
    fn bilipschitz_map_has_bounded_inverse_constant() {
        // x -> 2x is bi-Lipschitz with lower constant 2, so preimages (all
        // singletons) satisfy the inverse bound with constant 1/2.
        let dom = set(&[0, 1, 2, 3]);
        let f = PointMap::from_fn(&dom, |x| Point::scalar(2.0 * x.coord(0)));
        let l = l_inverse_constant(&f, &Metric::Manhattan, &Metric::Manhattan).unwrap();
        assert_eq!(l, 0.5);
    }

    #[test]
    fn conflicting_table_rows_rejected() {
        let rows = vec![
            (Point::int(&[0]), Point::int(&[1])),
            (Point::int(&[0]), Point::int(&[2])),
        ];
        assert!(PointMap::from_pairs(rows).is_err());
    }
}
