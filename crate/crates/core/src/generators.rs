//! Deterministic test-corpus generators: paths, grids, trees, Euclidean
//! clouds and clouds in the hyperbolic plane.

use std::f64::consts::PI;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::FiniteMetricSpace;

/// Unit-spacing path `0 - 1 - ... - (n-1)`, with 1-d coordinates.
pub fn gen_path(n: usize) -> Result<FiniteMetricSpace> {
    if n == 0 {
        return Err(Error::param("path needs at least one point"));
    }
    let labels = (0..n).map(|i| i.to_string()).collect();
    let coords = (0..n).map(|i| vec![i as f64]).collect();
    FiniteMetricSpace::from_coordinates(labels, coords)
}

/// `k x k` integer lattice with the Euclidean metric.
pub fn gen_grid(k: usize) -> Result<FiniteMetricSpace> {
    if k == 0 {
        return Err(Error::param("grid side must be positive"));
    }
    let mut labels = Vec::with_capacity(k * k);
    let mut coords = Vec::with_capacity(k * k);
    for i in 0..k {
        for j in 0..k {
            labels.push(format!("{i},{j}"));
            coords.push(vec![i as f64, j as f64]);
        }
    }
    FiniteMetricSpace::from_coordinates(labels, coords)
}

/// Complete `branching`-ary tree of the given depth with unit edges and the
/// path metric. Nodes are numbered breadth-first from the root.
pub fn gen_tree(branching: usize, depth: usize) -> Result<FiniteMetricSpace> {
    if branching == 0 {
        return Err(Error::param("tree branching must be positive"));
    }
    let mut parent: Vec<Option<usize>> = vec![None];
    let mut level: Vec<usize> = vec![0];
    let mut frontier = vec![0usize];
    for d in 1..=depth {
        let mut next = Vec::with_capacity(frontier.len() * branching);
        for &p in &frontier {
            for _ in 0..branching {
                parent.push(Some(p));
                level.push(d);
                next.push(parent.len() - 1);
            }
        }
        frontier = next;
    }
    let n = parent.len();
    let mut dist = Array2::zeros((n, n));
    for a in 0..n {
        for b in (a + 1)..n {
            let (mut x, mut y) = (a, b);
            let mut steps = 0usize;
            while x != y {
                if level[x] >= level[y] {
                    x = parent[x].expect("non-root has a parent");
                } else {
                    y = parent[y].expect("non-root has a parent");
                }
                steps += 1;
            }
            dist[[a, b]] = steps as f64;
            dist[[b, a]] = steps as f64;
        }
    }
    FiniteMetricSpace::new((0..n).map(|i| i.to_string()).collect(), dist)
}

/// `n` points uniform in the unit cube `[0,1]^dim`.
pub fn gen_euclidean_cloud(n: usize, dim: usize, seed: u64) -> Result<FiniteMetricSpace> {
    if n == 0 || dim == 0 {
        return Err(Error::param("cloud needs positive size and dimension"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords = (0..n).map(|_| (0..dim).map(|_| rng.gen::<f64>()).collect()).collect();
    FiniteMetricSpace::from_coordinates((0..n).map(|i| i.to_string()).collect(), coords)
}

/// Hyperbolic distance between two points of the open unit disk (Poincaré
/// model), `cosh d = 1 + 2|z-w|^2 / ((1-|z|^2)(1-|w|^2))`.
///
/// Evaluated as `2 asinh(|z-w| / sqrt((1-|z|^2)(1-|w|^2)))`, the same quantity
/// without the cancellation in `acosh` near 1.
pub fn poincare_distance(z: [f64; 2], w: [f64; 2]) -> f64 {
    let dz = ((z[0] - w[0]).powi(2) + (z[1] - w[1]).powi(2)).sqrt();
    let nz = 1.0 - (z[0] * z[0] + z[1] * z[1]);
    let nw = 1.0 - (w[0] * w[0] + w[1] * w[1]);
    2.0 * (dz / (nz * nw).sqrt()).asinh()
}

/// Poincaré-disk points of a hyperbolic-area-uniform sample of the disk of
/// hyperbolic radius `radius` around the origin.
///
/// Area inside hyperbolic radius `r` is proportional to `cosh r - 1`, so the
/// radial coordinate is drawn by inverting that CDF.
pub fn sample_h2_points(n: usize, radius: f64, seed: u64) -> Result<Vec<[f64; 2]>> {
    if n == 0 || !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::param("h2 cloud needs positive size and finite positive radius"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let span = radius.cosh() - 1.0;
    Ok((0..n)
        .map(|_| {
            let u: f64 = rng.gen();
            let r = (1.0 + u * span).acosh();
            let theta = 2.0 * PI * rng.gen::<f64>();
            let e = (r / 2.0).tanh();
            [e * theta.cos(), e * theta.sin()]
        })
        .collect())
}

/// Metric space on explicit Poincaré-disk points.
pub fn h2_space(points: &[[f64; 2]]) -> Result<FiniteMetricSpace> {
    let n = points.len();
    if points.iter().any(|p| p[0] * p[0] + p[1] * p[1] >= 1.0) {
        return Err(Error::param("Poincaré points must lie in the open unit disk"));
    }
    let dist = Array2::from_shape_fn((n, n), |(a, b)| {
        if a == b {
            0.0
        } else {
            poincare_distance(points[a], points[b])
        }
    });
    // symmetric by construction up to rounding; enforce bitwise symmetry
    let dist = Array2::from_shape_fn((n, n), |(a, b)| dist[[a.min(b), a.max(b)]]);
    FiniteMetricSpace::new((0..n).map(|i| i.to_string()).collect(), dist)
}

pub fn gen_h2_cloud(n: usize, radius: f64, seed: u64) -> Result<FiniteMetricSpace> {
    h2_space(&sample_h2_points(n, radius, seed)?)
}

/// Serializable generator description, e.g.
/// `{"kind": "tree", "params": {"branching": 2, "depth": 3}, "seed": 0}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    #[serde(flatten)]
    pub kind: GeneratorKind,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum GeneratorKind {
    Path { n: usize },
    Grid { k: usize },
    Tree { branching: usize, depth: usize },
    EuclideanCloud { n: usize, dim: usize },
    H2Cloud { n: usize, radius: f64 },
}

impl GeneratorSpec {
    pub fn new(kind: GeneratorKind, seed: u64) -> Self {
        Self { kind, seed }
    }

    pub fn build(&self) -> Result<FiniteMetricSpace> {
        match self.kind {
            GeneratorKind::Path { n } => gen_path(n),
            GeneratorKind::Grid { k } => gen_grid(k),
            GeneratorKind::Tree { branching, depth } => gen_tree(branching, depth),
            GeneratorKind::EuclideanCloud { n, dim } => gen_euclidean_cloud(n, dim, self.seed),
            GeneratorKind::H2Cloud { n, radius } => gen_h2_cloud(n, radius, self.seed),
        }
    }

    /// Short identifier used in sweep tables.
    pub fn name(&self) -> String {
        match self.kind {
            GeneratorKind::Path { n } => format!("path{n}"),
            GeneratorKind::Grid { k } => format!("grid{k}x{k}"),
            GeneratorKind::Tree { branching, depth } => format!("tree{branching}^{depth}"),
            GeneratorKind::EuclideanCloud { n, dim } => format!("cloud{n}d{dim}s{}", self.seed),
            GeneratorKind::H2Cloud { n, radius } => format!("h2_{n}r{radius}s{}", self.seed),
        }
    }
}
