//! Metric spaces hosting agents and facilities.
//!
//! Two variants: points on the real line (axioms hold by construction) and an
//! explicit distance matrix (axioms checked within [`MATRIX_TOLERANCE`]).

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for symmetry and triangle-inequality checks on matrix metrics.
/// Line metrics are checked exactly; matrices may come from user files with
/// rounding.
pub const MATRIX_TOLERANCE: f64 = 1e-12;

/// Index into a metric's point set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PointId(pub usize);

impl std::fmt::Display for PointId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A finite metric space: either coordinates on the line or an explicit
/// symmetric distance matrix. Immutable after construction and safe to share
/// read-only across threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Metric {
    Line { coords: Vec<f64> },
    Matrix { d: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("point {point} out of range ({points} points)")]
    InvalidPoint { point: usize, points: usize },
}

/// First violated metric axiom, with the witnessing points.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricViolation {
    #[error("row {row} has {len} entries, expected {expected}")]
    NotSquare { row: usize, len: usize, expected: usize },
    #[error("d({i},{j}) = {value} is negative")]
    NegativeEntry { i: usize, j: usize, value: f64 },
    #[error("d({i},{i}) = {value}, expected 0")]
    NonzeroDiagonal { i: usize, value: f64 },
    #[error("asymmetry at ({i},{j}): d(i,j) = {dij}, d(j,i) = {dji}")]
    Asymmetry { i: usize, j: usize, dij: f64, dji: f64 },
    #[error("triangle violated at ({i},{j},{k}): d(i,j) = {dij} > d(i,k) + d(k,j) = {sum}")]
    Triangle { i: usize, j: usize, k: usize, dij: f64, sum: f64 },
    #[error("non-finite entry at ({i},{j})")]
    NonFinite { i: usize, j: usize },
}

impl Metric {
    pub fn line(coords: Vec<f64>) -> Self {
        Metric::Line { coords }
    }

    pub fn matrix(d: Vec<Vec<f64>>) -> Self {
        Metric::Matrix { d }
    }

    /// Number of points in the space.
    pub fn len(&self) -> usize {
        match self {
            Metric::Line { coords } => coords.len(),
            Metric::Matrix { d } => d.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, p: PointId) -> bool {
        p.0 < self.len()
    }

    /// Distance between two points: |x_a - x_b| on the line, the stored entry
    /// for a matrix.
    pub fn distance(&self, a: PointId, b: PointId) -> Result<f64, MetricError> {
        for p in [a, b] {
            if !self.contains(p) {
                return Err(MetricError::InvalidPoint { point: p.0, points: self.len() });
            }
        }
        Ok(self.dist_unchecked(a, b))
    }

    /// Distance without range checks; callers must hold validated ids.
    #[inline]
    pub(crate) fn dist_unchecked(&self, a: PointId, b: PointId) -> f64 {
        match self {
            Metric::Line { coords } => (coords[a.0] - coords[b.0]).abs(),
            Metric::Matrix { d } => d[a.0][b.0],
        }
    }

    /// Checks the metric axioms and reports the first violation, or ok.
    ///
    /// Line metrics always validate. Matrix metrics are scanned for shape,
    /// finiteness, nonnegativity, zero diagonal, symmetry, and the triangle
    /// inequality over all triples, the latter two within [`MATRIX_TOLERANCE`].
    pub fn validate(&self) -> Result<(), MetricViolation> {
        let d = match self {
            Metric::Line { .. } => return Ok(()),
            Metric::Matrix { d } => d,
        };
        let n = d.len();
        for (i, row) in d.iter().enumerate() {
            if row.len() != n {
                return Err(MetricViolation::NotSquare { row: i, len: row.len(), expected: n });
            }
        }
        for i in 0..n {
            for j in 0..n {
                if !d[i][j].is_finite() {
                    return Err(MetricViolation::NonFinite { i, j });
                }
                if d[i][j] < 0.0 {
                    return Err(MetricViolation::NegativeEntry { i, j, value: d[i][j] });
                }
            }
        }
        for i in 0..n {
            if d[i][i] != 0.0 {
                return Err(MetricViolation::NonzeroDiagonal { i, value: d[i][i] });
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if (d[i][j] - d[j][i]).abs() > MATRIX_TOLERANCE {
                    return Err(MetricViolation::Asymmetry { i, j, dij: d[i][j], dji: d[j][i] });
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let sum = d[i][k] + d[k][j];
                    if d[i][j] > sum + MATRIX_TOLERANCE {
                        return Err(MetricViolation::Triangle { i, j, k, dij: d[i][j], sum });
                    }
                }
            }
        }
        Ok(())
    }

    /// Returns a new metric with one extra point coinciding with `at`, plus
    /// the id of the new point. The copy has the source point's distances to
    /// everything and distance zero to the source, so the axioms carry over.
    pub fn extend_with_coinciding_point(&self, at: PointId) -> Result<(Metric, PointId), MetricError> {
        if !self.contains(at) {
            return Err(MetricError::InvalidPoint { point: at.0, points: self.len() });
        }
        let new_id = PointId(self.len());
        let extended = match self {
            Metric::Line { coords } => {
                let mut coords = coords.clone();
                coords.push(coords[at.0]);
                Metric::Line { coords }
            }
            Metric::Matrix { d } => {
                let n = d.len();
                let mut d = d.clone();
                for (i, row) in d.iter_mut().enumerate() {
                    row.push(if i == at.0 { 0.0 } else { row[at.0] });
                }
                let mut new_row = (0..n).map(|j| d[j][n]).collect::<Vec<_>>();
                new_row.push(0.0);
                d.push(new_row);
                Metric::Matrix { d }
            }
        };
        Ok((extended, new_id))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_distance_is_absolute_difference() {
        let m = Metric::line(vec![0.0, 3.0]);
        assert_eq!(m.distance(PointId(0), PointId(1)).unwrap(), 3.0);
        assert_eq!(m.distance(PointId(1), PointId(0)).unwrap(), 3.0);
    }

    #[test]
    fn coincident_line_points_have_zero_distance() {
        let m = Metric::line(vec![1.0, 1.0]);
        assert_eq!(m.distance(PointId(0), PointId(1)).unwrap(), 0.0);
    }

    #[test]
    fn matrix_distance_is_stored_entry() {
        let m = Metric::matrix(vec![vec![0.0, 2.0], vec![2.0, 0.0]]);
        assert_eq!(m.distance(PointId(1), PointId(0)).unwrap(), 2.0);
    }

    #[test]
    fn out_of_range_point_is_rejected() {
        let m = Metric::line(vec![0.0]);
        assert_eq!(
            m.distance(PointId(0), PointId(1)),
            Err(MetricError::InvalidPoint { point: 1, points: 1 })
        );
    }

    #[test]
    fn line_always_validates() {
        assert_eq!(Metric::line(vec![-1.5, 0.0, 7.25]).validate(), Ok(()));
        assert_eq!(Metric::line(vec![]).validate(), Ok(()));
    }

    #[test]
    fn asymmetric_matrix_is_reported() {
        let m = Metric::matrix(vec![vec![0.0, 1.0], vec![2.0, 0.0]]);
        assert_eq!(
            m.validate(),
            Err(MetricViolation::Asymmetry { i: 0, j: 1, dij: 1.0, dji: 2.0 })
        );
    }

    #[test]
    fn triangle_violation_is_reported_with_witness() {
        let m = Metric::matrix(vec![
            vec![0.0, 1.0, 3.0],
            vec![1.0, 0.0, 1.0],
            vec![3.0, 1.0, 0.0],
        ]);
        match m.validate() {
            Err(MetricViolation::Triangle { i, j, k, dij, sum }) => {
                assert_eq!((i, j, k), (0, 2, 1));
                assert_eq!(dij, 3.0);
                assert_eq!(sum, 2.0);
            }
            other => panic!("expected triangle violation, got {other:?}"),
        }
    }

    #[test]
    fn nonzero_diagonal_is_reported() {
        let m = Metric::matrix(vec![vec![0.5]]);
        assert_eq!(m.validate(), Err(MetricViolation::NonzeroDiagonal { i: 0, value: 0.5 }));
    }

    #[test]
    fn extend_line_copies_coordinate() {
        let m = Metric::line(vec![0.0, 2.0]);
        let (ext, id) = m.extend_with_coinciding_point(PointId(1)).unwrap();
        assert_eq!(id, PointId(2));
        assert_eq!(ext, Metric::line(vec![0.0, 2.0, 2.0]));
        assert_eq!(ext.validate(), Ok(()));
    }

    #[test]
    fn extend_matrix_copies_row_and_is_metric() {
        let m = Metric::matrix(vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        let (ext, id) = m.extend_with_coinciding_point(PointId(0)).unwrap();
        assert_eq!(id, PointId(2));
        assert_eq!(
            ext,
            Metric::matrix(vec![
                vec![0.0, 1.0, 0.0],
                vec![1.0, 0.0, 1.0],
                vec![0.0, 1.0, 0.0],
            ])
        );
        assert_eq!(ext.validate(), Ok(()));
        assert_eq!(ext.distance(PointId(2), PointId(0)).unwrap(), 0.0);
    }

    #[test]
    fn extend_rejects_invalid_source() {
        let m = Metric::line(vec![0.0]);
        assert!(m.extend_with_coinciding_point(PointId(3)).is_err());
    }

    #[test]
    fn json_round_trip() {
        let line = Metric::line(vec![-0.1, 1.0, 2.0]);
        let json = serde_json::to_string(&line).unwrap();
        assert!(json.contains("\"type\":\"line\""));
        assert_eq!(serde_json::from_str::<Metric>(&json).unwrap(), line);

        let mat = Metric::matrix(vec![vec![0.0, 2.0], vec![2.0, 0.0]]);
        let json = serde_json::to_string(&mat).unwrap();
        assert!(json.contains("\"type\":\"matrix\""));
        assert_eq!(serde_json::from_str::<Metric>(&json).unwrap(), mat);
    }
}
