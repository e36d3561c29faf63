use std::collections::VecDeque;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::point::Point;
use crate::set::FinitePointSet;

const DISCONNECTED: u32 = u32::MAX;

/// A metric on a finite point space.
///
/// The coordinate metrics (`Manhattan`, `Euclidean`, `Chebyshev`, `Discrete`)
/// apply to points of equal dimension. `ShortestPath` is the 4-neighbour
/// breadth-first-search distance over a feasible cell set with obstacles
/// removed; disconnected cell pairs are an error rather than an infinite
/// value. `Table` is an arbitrary user-supplied metric given by an explicit
/// distance matrix over an enumerated carrier.
#[derive(Clone, PartialEq, Serialize, Deserialize, Debug)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Metric {
    Manhattan,
    Euclidean,
    Chebyshev,
    Discrete,
    ShortestPath(ShortestPathMetric),
    Table(TableMetric),
}

impl Metric {
    /// Distance between two points.
    pub fn dist(&self, a: &Point, b: &Point) -> Result<f64> {
        match self {
            Metric::Manhattan | Metric::Euclidean | Metric::Chebyshev => {
                if a.dims() != b.dims() {
                    return Err(Error::DimensionMismatch {
                        expected: a.dims(),
                        got: b.dims(),
                    });
                }
                let diffs = a.coords().zip(b.coords()).map(|(x, y)| (x - y).abs());
                Ok(match self {
                    Metric::Manhattan => diffs.sum(),
                    Metric::Euclidean => diffs.map(|d| d * d).sum::<f64>().sqrt(),
                    Metric::Chebyshev => diffs.fold(0.0, f64::max),
                    _ => unreachable!(),
                })
            }
            Metric::Discrete => Ok(if a == b { 0.0 } else { 1.0 }),
            Metric::ShortestPath(m) => m.dist(a, b),
            Metric::Table(m) => m.dist(a, b),
        }
    }

    /// Checks the metric axioms by exhaustive enumeration over a carrier:
    /// non-negativity, identity of indiscernibles, symmetry and the triangle
    /// inequality.
    pub fn check_axioms(&self, carrier: &FinitePointSet, tol: f64) -> Result<()> {
        let pts = carrier.points();
        for (i, a) in pts.iter().enumerate() {
            for (j, b) in pts.iter().enumerate() {
                let d = self.dist(a, b)?;
                if d < 0.0 {
                    return Err(Error::Schema(format!("negative distance between {a} and {b}")));
                }
                if (i == j) != (d == 0.0) {
                    return Err(Error::Schema(format!(
                        "identity axiom violated between {a} and {b}: distance {d}"
                    )));
                }
                if (d - self.dist(b, a)?).abs() > tol {
                    return Err(Error::Schema(format!("asymmetric distance between {a} and {b}")));
                }
                for c in pts.iter() {
                    if d > self.dist(a, c)? + self.dist(c, b)? + tol {
                        return Err(Error::Schema(format!(
                            "triangle inequality violated on ({a},{b},{c})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Breadth-first-search shortest-path metric over 4-connected grid cells.
#[derive(Clone, Serialize, Deserialize, Debug)]
pub struct ShortestPathMetric {
    cells: FinitePointSet,
    #[serde(skip)]
    table: OnceLock<Vec<u32>>,
}

impl PartialEq for ShortestPathMetric {
    fn eq(&self, other: &Self) -> bool {
        // The distance table is a cache derived from the cells.
        self.cells == other.cells
    }
}

impl ShortestPathMetric {
    /// Builds the metric over a set of feasible 2-d cells.
    pub fn new(cells: FinitePointSet) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::EmptySet("ShortestPathMetric::new"));
        }
        for p in &cells {
            if p.dims() != 2 {
                return Err(Error::DimensionMismatch {
                    expected: 2,
                    got: p.dims(),
                });
            }
        }
        Ok(ShortestPathMetric {
            cells,
            table: OnceLock::new(),
        })
    }

    pub fn cells(&self) -> &FinitePointSet {
        &self.cells
    }

    fn all_pairs(&self) -> &Vec<u32> {
        self.table.get_or_init(|| {
            let n = self.cells.len();
            let mut table = vec![DISCONNECTED; n * n];
            let steps = [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)];
            for start in 0..n {
                let dist = &mut table[start * n..(start + 1) * n];
                dist[start] = 0;
                let mut queue = VecDeque::from([start]);
                while let Some(i) = queue.pop_front() {
                    let p = &self.cells.points()[i];
                    for (dx, dy) in steps {
                        let q = Point::new([p.coord(0) + dx, p.coord(1) + dy]);
                        if let Some(j) = self.cells.index_of(&q) {
                            if dist[j] == DISCONNECTED {
                                dist[j] = dist[i] + 1;
                                queue.push_back(j);
                            }
                        }
                    }
                }
            }
            table
        })
    }

    pub fn dist(&self, a: &Point, b: &Point) -> Result<f64> {
        let i = self
            .cells
            .index_of(a)
            .ok_or_else(|| Error::UnknownPoint { point: a.to_string() })?;
        let j = self
            .cells
            .index_of(b)
            .ok_or_else(|| Error::UnknownPoint { point: b.to_string() })?;
        let d = self.all_pairs()[i * self.cells.len() + j];
        if d == DISCONNECTED {
            return Err(Error::Disconnected {
                a: a.to_string(),
                b: b.to_string(),
            });
        }
        Ok(d as f64)
    }
}

/// Metric given by an explicit distance matrix over an enumerated carrier.
///
/// `distances[i][j]` is the distance between the i-th and j-th carrier point
/// in canonical order. `validate` checks the matrix shape and the metric
/// axioms; the JSON loader runs it on every load.
#[derive(Clone, PartialEq, Serialize, Deserialize, Debug)]
pub struct TableMetric {
    pub points: FinitePointSet,
    pub distances: Vec<Vec<f64>>,
}

impl TableMetric {
    pub fn new(points: FinitePointSet, distances: Vec<Vec<f64>>) -> Result<Self> {
        let m = TableMetric { points, distances };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.points.len();
        if n == 0 {
            return Err(Error::EmptySet("TableMetric"));
        }
        if self.distances.len() != n || self.distances.iter().any(|row| row.len() != n) {
            return Err(Error::Schema(format!(
                "distance matrix must be {n}x{n} to match the carrier"
            )));
        }
        let tol = 1e-9;
        for i in 0..n {
            for j in 0..n {
                let d = self.distances[i][j];
                if !d.is_finite() || d < 0.0 {
                    return Err(Error::Schema(format!("invalid distance at ({i},{j}): {d}")));
                }
                if (i == j) != (d == 0.0) {
                    return Err(Error::Schema(format!("identity axiom violated at ({i},{j})")));
                }
                if (d - self.distances[j][i]).abs() > tol {
                    return Err(Error::Schema(format!("asymmetric entry at ({i},{j})")));
                }
                for k in 0..n {
                    if d > self.distances[i][k] + self.distances[k][j] + tol {
                        return Err(Error::Schema(format!(
                            "triangle inequality violated at ({i},{j}) via {k}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn dist(&self, a: &Point, b: &Point) -> Result<f64> {
        let i = self
            .points
            .index_of(a)
            .ok_or_else(|| Error::UnknownPoint { point: a.to_string() })?;
        let j = self
            .points
            .index_of(b)
            .ok_or_else(|| Error::UnknownPoint { point: b.to_string() })?;
        Ok(self.distances[i][j])
    }

    /// Loads a `{"points": [...], "distances": [[...]]}` JSON document.
    pub fn from_json(json: &str) -> Result<Self> {
        let m: TableMetric = serde_json::from_str(json)?;
        m.validate()?;
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cells(list: &[(i64, i64)]) -> FinitePointSet {
        FinitePointSet::new(list.iter().map(|&(x, y)| Point::int(&[x, y])))
    }

    #[test]
    fn manhattan_distance() {
        let m = Metric::Manhattan;
        let d = m.dist(&Point::int(&[0, 0]), &Point::int(&[2, -1])).unwrap();
        assert_eq!(d, 3.0);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let m = Metric::Manhattan;
        assert!(m.dist(&Point::int(&[0]), &Point::int(&[0, 0])).is_err());
    }

    #[test]
    fn shortest_path_routes_around_obstacles() {
        // 3x3 grid with the centre removed: going (0,-1) -> (0,1) costs 4.
        let grid = cells(&[
            (-1, -1),
            (-1, 0),
            (-1, 1),
            (0, -1),
            (0, 1),
            (1, -1),
            (1, 0),
            (1, 1),
        ]);
        let m = ShortestPathMetric::new(grid).unwrap();
        let d = m.dist(&Point::int(&[0, -1]), &Point::int(&[0, 1])).unwrap();
        assert_eq!(d, 4.0);
    }

    #[test]
    fn disconnected_cells_are_an_error() {
        let grid = cells(&[(0, 0), (2, 0)]);
        let m = ShortestPathMetric::new(grid).unwrap();
        match m.dist(&Point::int(&[0, 0]), &Point::int(&[2, 0])) {
            Err(Error::Disconnected { .. }) => {}
            other => panic!("expected Disconnected, got {other:?}"),
        }
    }

    #[test]
    fn shortest_path_axioms_hold_on_connected_grid() {
        let grid = cells(&[(0, 0), (0, 1), (1, 0), (1, 1), (2, 1)]);
        let carrier = grid.clone();
        let m = Metric::ShortestPath(ShortestPathMetric::new(grid).unwrap());
        m.check_axioms(&carrier, 1e-9).unwrap();
    }

    #[test]
    fn table_metric_validation_catches_asymmetry() {
        let pts = cells(&[(0, 0), (1, 0)]);
        let bad = TableMetric {
            points: pts,
            distances: vec![vec![0.0, 1.0], vec![2.0, 0.0]],
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn table_metric_json_round_trip() {
        let json = r#"{"points": [[0.0],[1.0],[3.0]],
                       "distances": [[0,1,3],[1,0,2],[3,2,0]]}"#;
        let m = TableMetric::from_json(json).unwrap();
        assert_eq!(m.dist(&Point::int(&[0]), &Point::int(&[3])).unwrap(), 3.0);
        let carrier = m.points.clone();
        Metric::Table(m).check_axioms(&carrier, 1e-9).unwrap();
    }
}
