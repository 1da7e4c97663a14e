//! Finite metric spaces.
//!
//! A [`FiniteMetricSpace`] owns a validated distance matrix together with a
//! per-center neighbor ordering (points sorted by distance from the center,
//! ties by index). Ball queries and all suprema over radii run off that
//! ordering: open-ball content only changes at the critical radii of a center.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack applied to the triangle inequality during validation,
/// scaled by the diameter of the space.
pub const TRIANGLE_SLACK: f64 = 1e-12;

/// Index of a point in a [`FiniteMetricSpace`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PointId(pub usize);

impl PointId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl From<usize> for PointId {
    fn from(i: usize) -> Self {
        PointId(i)
    }
}

impl fmt::Display for PointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One failed metric axiom, with the offending indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    NonzeroDiagonal { i: usize, value: f64 },
    Asymmetric { i: usize, j: usize },
    NonPositive { i: usize, j: usize },
    /// `dist[i][k] > dist[i][j] + dist[j][k]`, reported once per unordered
    /// pair `i < k`.
    Triangle { i: usize, j: usize, k: usize, excess: f64 },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn triangle_violations(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.violations.iter().filter_map(|v| match *v {
            Violation::Triangle { i, j, k, .. } => Some((i, j, k)),
            _ => None,
        })
    }
}

/// Converts nested rows into a square matrix, rejecting ragged or non-finite
/// input.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<Array2<f64>> {
    let n = rows.len();
    let mut out = Array2::zeros((n, n));
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n {
            return Err(Error::format(format!(
                "distance matrix is not square: row {i} has {} entries, expected {n}",
                row.len()
            )));
        }
        for (j, &v) in row.iter().enumerate() {
            out[[i, j]] = v;
        }
    }
    Ok(out)
}

/// Checks every metric axiom on a square matrix and lists each violation.
pub fn validate_metric(dist: &Array2<f64>) -> Result<ValidationReport> {
    let (rows, cols) = dist.dim();
    if rows != cols {
        return Err(Error::format(format!("distance matrix is {rows}x{cols}, not square")));
    }
    if let Some(((i, j), v)) = dist.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::format(format!("non-finite distance {v} at ({i},{j})")));
    }
    let n = rows;
    let mut report = ValidationReport::default();
    let diameter = dist.iter().fold(0.0_f64, |a, &b| a.max(b));
    let slack = TRIANGLE_SLACK * diameter;

    for i in 0..n {
        if dist[[i, i]] != 0.0 {
            report.violations.push(Violation::NonzeroDiagonal { i, value: dist[[i, i]] });
        }
        for j in (i + 1)..n {
            if dist[[i, j]] != dist[[j, i]] {
                report.violations.push(Violation::Asymmetric { i, j });
            }
            if dist[[i, j]] <= 0.0 || dist[[j, i]] <= 0.0 {
                report.violations.push(Violation::NonPositive { i, j });
            }
        }
    }
    for i in 0..n {
        for k in (i + 1)..n {
            let direct = dist[[i, k]];
            for j in 0..n {
                if j == i || j == k {
                    continue;
                }
                let excess = direct - (dist[[i, j]] + dist[[j, k]]);
                if excess > slack {
                    report.violations.push(Violation::Triangle { i, j, k, excess });
                }
            }
        }
    }
    Ok(report)
}

/// A finite metric space with labeled points.
///
/// Immutable after construction and `Sync`, so it can be shared freely
/// across threads.
#[derive(Clone, Debug)]
pub struct FiniteMetricSpace {
    labels: Vec<String>,
    dist: Array2<f64>,
    coords: Option<Vec<Vec<f64>>>,
    diameter: f64,
    // neighbors[m]: all points sorted by (dist from m, index); neighbors[m][0] == m
    neighbors: Vec<Vec<usize>>,
    sorted_dists: Vec<Vec<f64>>,
}

impl FiniteMetricSpace {
    /// Builds a space from labels and a distance matrix, failing with an
    /// invariant violation if any metric axiom is broken.
    pub fn new(labels: Vec<String>, dist: Array2<f64>) -> Result<Self> {
        let report = validate_metric(&dist)?;
        if !report.is_ok() {
            let first = &report.violations[0];
            return Err(Error::invariant(format!(
                "{} metric violation(s), first: {first:?}",
                report.violations.len()
            )));
        }
        if labels.len() != dist.nrows() {
            return Err(Error::format(format!(
                "{} labels for a {}-point distance matrix",
                labels.len(),
                dist.nrows()
            )));
        }
        if labels.is_empty() {
            return Err(Error::param("a metric space needs at least one point"));
        }
        Ok(Self::from_parts_unchecked(labels, dist, None))
    }

    /// Builds a space with default labels `"0"`, `"1"`, ...
    pub fn from_matrix(dist: Array2<f64>) -> Result<Self> {
        let labels = (0..dist.nrows()).map(|i| i.to_string()).collect();
        Self::new(labels, dist)
    }

    /// Euclidean distances between coordinate vectors. The coordinates are
    /// kept on the space.
    pub fn from_coordinates(labels: Vec<String>, coords: Vec<Vec<f64>>) -> Result<Self> {
        let n = coords.len();
        let dim = coords.first().map_or(0, Vec::len);
        if coords.iter().any(|c| c.len() != dim) {
            return Err(Error::format("coordinate vectors have mixed dimensions"));
        }
        let mut dist = Array2::zeros((n, n));
        for i in 0..n {
            for j in (i + 1)..n {
                let d = coords[i]
                    .iter()
                    .zip(&coords[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                dist[[i, j]] = d;
                dist[[j, i]] = d;
            }
        }
        let mut space = Self::new(labels, dist)?;
        space.coords = Some(coords);
        Ok(space)
    }

    pub(crate) fn from_parts_unchecked(
        labels: Vec<String>,
        dist: Array2<f64>,
        coords: Option<Vec<Vec<f64>>>,
    ) -> Self {
        let n = dist.nrows();
        let diameter = dist.iter().fold(0.0_f64, |a, &b| a.max(b));
        let mut neighbors = Vec::with_capacity(n);
        let mut sorted_dists = Vec::with_capacity(n);
        for m in 0..n {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| dist[[m, a]].total_cmp(&dist[[m, b]]).then(a.cmp(&b)));
            sorted_dists.push(order.iter().map(|&j| dist[[m, j]]).collect());
            neighbors.push(order);
        }
        Self { labels, dist, coords, diameter, neighbors, sorted_dists }
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, m: usize) -> &str {
        &self.labels[m]
    }

    #[inline]
    pub fn dist(&self, a: usize, b: usize) -> f64 {
        self.dist[[a, b]]
    }

    pub fn dist_matrix(&self) -> &Array2<f64> {
        &self.dist
    }

    pub fn coords(&self) -> Option<&[Vec<f64>]> {
        self.coords.as_deref()
    }

    /// Ambient dimension of the stored coordinates, if any.
    pub fn dimension(&self) -> Option<usize> {
        self.coords.as_ref().map(|c| c.first().map_or(0, Vec::len))
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    /// Smallest distance between distinct points (`None` for one point).
    pub fn min_separation(&self) -> Option<f64> {
        (0..self.size()).filter_map(|m| self.sorted_dists[m].get(1).copied()).reduce(f64::min)
    }

    /// Points sorted by distance from `m` (ties by index); the first entry is `m`.
    pub fn neighbors(&self, m: usize) -> &[usize] {
        &self.neighbors[m]
    }

    /// Distances from `m` in the order of [`Self::neighbors`].
    pub fn sorted_dists(&self, m: usize) -> &[f64] {
        &self.sorted_dists[m]
    }

    /// Number of points strictly closer than `radius` to `m`.
    #[inline]
    pub fn ball_count(&self, m: usize, radius: f64) -> usize {
        self.sorted_dists[m].partition_point(|&d| d < radius)
    }

    /// `d(m, S) = min over s in S of d(m, s)`.
    pub fn dist_to_set(&self, subset: &[usize], m: usize) -> Result<f64> {
        subset
            .iter()
            .map(|&s| self.dist(m, s))
            .reduce(f64::min)
            .ok_or_else(|| Error::param("distance to an empty set"))
    }

    /// Points strictly inside the open ball `B_R(m)`, sorted by index.
    pub fn open_ball(&self, m: usize, radius: f64) -> Result<Vec<usize>> {
        if !(radius > 0.0) {
            return Err(Error::param(format!("ball radius must be positive, got {radius}")));
        }
        let mut ball = self.neighbors[m][..self.ball_count(m, radius)].to_vec();
        ball.sort_unstable();
        Ok(ball)
    }

    /// Sorted distinct positive distances from `m`.
    pub fn critical_radii(&self, m: usize) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for &d in &self.sorted_dists[m][1..] {
            if out.last() != Some(&d) {
                out.push(d);
            }
        }
        out
    }

    /// All distinct positive pairwise distances, ascending.
    pub fn distinct_distances(&self) -> Vec<f64> {
        let n = self.size();
        let mut all = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                all.push(self.dist(i, j));
            }
        }
        all.sort_by(f64::total_cmp);
        all.dedup();
        all
    }

    /// Restriction of the metric to `subset` (in the given order).
    pub fn subspace(&self, subset: &[usize]) -> Self {
        let k = subset.len();
        let dist = Array2::from_shape_fn((k, k), |(a, b)| self.dist(subset[a], subset[b]));
        let labels = subset.iter().map(|&i| self.labels[i].clone()).collect();
        let coords = self.coords.as_ref().map(|c| subset.iter().map(|&i| c[i].clone()).collect());
        Self::from_parts_unchecked(labels, dist, coords)
    }
}

/// Exponent of a direct `p`-sum. `Infinity` is a distinguished value, not a
/// large float.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Exponent {
    Finite(f64),
    Infinity,
}

impl Exponent {
    pub fn validate(self) -> Result<Self> {
        match self {
            Exponent::Finite(p) if !(p >= 1.0) || !p.is_finite() => {
                Err(Error::param(format!("exponent p must be >= 1, got {p}")))
            }
            _ => Ok(self),
        }
    }

    /// Hölder conjugate `q` with `1/p + 1/q = 1`.
    pub fn conjugate(self) -> Exponent {
        match self {
            Exponent::Infinity => Exponent::Finite(1.0),
            Exponent::Finite(1.0) => Exponent::Infinity,
            Exponent::Finite(p) => Exponent::Finite(p / (p - 1.0)),
        }
    }

    /// `p`-norm of a nonnegative vector.
    pub fn combine(self, parts: impl IntoIterator<Item = f64>) -> f64 {
        match self {
            Exponent::Infinity => parts.into_iter().fold(0.0, f64::max),
            Exponent::Finite(1.0) => parts.into_iter().sum(),
            Exponent::Finite(p) => parts.into_iter().map(|x| x.powf(p)).sum::<f64>().powf(1.0 / p),
        }
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exponent::Finite(p) => write!(f, "{p}"),
            Exponent::Infinity => f.write_str("inf"),
        }
    }
}

impl FromStr for Exponent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "∞" => Ok(Exponent::Infinity),
            other => other
                .parse::<f64>()
                .map_err(|_| Error::param(format!("cannot parse exponent {s:?}")))
                .and_then(|p| Exponent::Finite(p).validate()),
        }
    }
}

impl Serialize for Exponent {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Exponent::Finite(p) => s.serialize_f64(*p),
            Exponent::Infinity => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(p) => Exponent::Finite(p).validate().map_err(serde::de::Error::custom),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Factors of a direct `p`-sum.
#[derive(Clone, Debug)]
pub struct ProductSpec {
    pub factors: Vec<FiniteMetricSpace>,
    pub p: Exponent,
}

/// Mixed-radix indexing of a Cartesian product; the last factor varies fastest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProductIndexer {
    dims: Vec<usize>,
}

impl ProductIndexer {
    pub fn new(dims: Vec<usize>) -> Self {
        Self { dims }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn decode(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims.len()];
        for (slot, &d) in out.iter_mut().zip(&self.dims).rev() {
            *slot = index % d;
            index /= d;
        }
        out
    }

    pub fn encode(&self, parts: &[usize]) -> usize {
        parts.iter().zip(&self.dims).fold(0, |acc, (&i, &d)| acc * d + i)
    }
}

/// The direct `p`-sum of the factor spaces.
pub fn product_space(spec: &ProductSpec) -> Result<FiniteMetricSpace> {
    let p = spec.p.validate()?;
    if spec.factors.is_empty() {
        return Err(Error::param("a product needs at least one factor"));
    }
    let indexer = ProductIndexer::new(spec.factors.iter().map(FiniteMetricSpace::size).collect());
    let n = indexer.len();
    let tuples: Vec<Vec<usize>> = (0..n).map(|i| indexer.decode(i)).collect();
    let dist = Array2::from_shape_fn((n, n), |(a, b)| {
        if a == b {
            return 0.0;
        }
        p.combine(
            spec.factors.iter().enumerate().map(|(f, space)| space.dist(tuples[a][f], tuples[b][f])),
        )
    });
    let labels = tuples
        .iter()
        .map(|t| {
            let parts: Vec<&str> =
                t.iter().enumerate().map(|(f, &i)| spec.factors[f].label(i)).collect();
            format!("({})", parts.join(","))
        })
        .collect();
    FiniteMetricSpace::new(labels, dist)
}
