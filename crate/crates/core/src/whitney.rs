//! Whitney cover of `M \ S`, tent partition of unity, point selection and the
//! Dugundji pre-extension matrix.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extension::{lipschitz_constant, NormKind};
use crate::metric::FiniteMetricSpace;

/// Slack allowed on the factor-7 inequality.
pub const FACTOR_SEVEN_TOL: f64 = 1e-9;

/// Sorted, deduplicated, range-checked copy of a nonempty subset.
pub fn normalize_subset(space: &FiniteMetricSpace, subset: &[usize]) -> Result<Vec<usize>> {
    if subset.is_empty() {
        return Err(Error::param("subset must be nonempty"));
    }
    if let Some(&bad) = subset.iter().find(|&&s| s >= space.size()) {
        return Err(Error::param(format!("subset index {bad} out of range for {} points", space.size())));
    }
    let mut s = subset.to_vec();
    s.sort_unstable();
    s.dedup();
    Ok(s)
}

/// Balls `B_{r_m}(m)`, `r_m = d(m, S) / 3`, over the complement of `S`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cover {
    pub subset: Vec<usize>,
    pub complement: Vec<usize>,
    /// Indexed by point; `None` on `S`.
    pub radii: Vec<Option<f64>>,
}

impl Cover {
    pub fn radius(&self, m: usize) -> Option<f64> {
        self.radii[m]
    }
}

pub fn build_cover(space: &FiniteMetricSpace, subset: &[usize]) -> Result<Cover> {
    let subset = normalize_subset(space, subset)?;
    if subset.len() == space.size() {
        return Err(Error::param("subset is the whole space; the cover is empty"));
    }
    let mut radii = vec![None; space.size()];
    let mut complement = Vec::with_capacity(space.size() - subset.len());
    for (m, radius) in radii.iter_mut().enumerate() {
        if subset.binary_search(&m).is_err() {
            *radius = Some(space.dist_to_set(&subset, m)? / 3.0);
            complement.push(m);
        }
    }
    Ok(Cover { subset, complement, radii })
}

/// `p_alpha(m)` for `m` in the complement, stored sparsely per point as
/// `(alpha, weight)` with `alpha` increasing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionOfUnity {
    pub weights: Vec<Vec<(usize, f64)>>,
}

impl PartitionOfUnity {
    pub fn weight(&self, alpha: usize, m: usize) -> f64 {
        self.weights[m]
            .binary_search_by_key(&alpha, |&(a, _)| a)
            .map(|k| self.weights[m][k].1)
            .unwrap_or(0.0)
    }
}

/// Normalized tents `max(0, r_alpha - d(m, alpha))`.
pub fn build_pou(space: &FiniteMetricSpace, cover: &Cover) -> PartitionOfUnity {
    let mut weights = vec![Vec::new(); space.size()];
    for &m in &cover.complement {
        let mut row: Vec<(usize, f64)> = cover
            .complement
            .iter()
            .filter_map(|&a| {
                let r = cover.radii[a].expect("complement point has a radius");
                let h = r - space.dist(m, a);
                (h > 0.0).then_some((a, h))
            })
            .collect();
        let total: f64 = row.iter().map(|&(_, h)| h).sum();
        row.iter_mut().for_each(|(_, h)| *h /= total);
        weights[m] = row;
    }
    PartitionOfUnity { weights }
}

/// `m2(alpha) = alpha`, `m1(alpha)` the nearest point of `S`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectedPair {
    pub alpha: usize,
    pub m1: usize,
    pub m2: usize,
}

/// Nearest-point selection with ties broken toward the lowest index.
pub fn select_points(space: &FiniteMetricSpace, cover: &Cover) -> Vec<SelectedPair> {
    cover
        .complement
        .iter()
        .map(|&alpha| {
            let mut m1 = cover.subset[0];
            for &s in &cover.subset[1..] {
                if space.dist(alpha, s) < space.dist(alpha, m1) {
                    m1 = s;
                }
            }
            SelectedPair { alpha, m1, m2: alpha }
        })
        .collect()
}

/// Cover, partition of unity, selected pairs and the matrix `W^: M x S` with
/// `f^ = W^ f`. Columns follow the sorted subset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhitneyApparatus {
    pub subset: Vec<usize>,
    /// `None` when `S = M`, in which case the matrix is the identity.
    pub cover: Option<Cover>,
    pub pou: Option<PartitionOfUnity>,
    pub selected: Vec<SelectedPair>,
    pub matrix: Array2<f64>,
}

impl WhitneyApparatus {
    pub fn build(space: &FiniteMetricSpace, subset: &[usize]) -> Result<Self> {
        let subset = normalize_subset(space, subset)?;
        let n = space.size();
        let mut matrix = Array2::zeros((n, subset.len()));
        for (k, &s) in subset.iter().enumerate() {
            matrix[[s, k]] = 1.0;
        }
        if subset.len() == n {
            return Ok(Self { subset, cover: None, pou: None, selected: Vec::new(), matrix });
        }
        let cover = build_cover(space, &subset)?;
        let pou = build_pou(space, &cover);
        let selected = select_points(space, &cover);
        let mut column = vec![usize::MAX; n];
        for (k, &s) in subset.iter().enumerate() {
            column[s] = k;
        }
        let mut m1 = vec![usize::MAX; n];
        for pair in &selected {
            m1[pair.alpha] = pair.m1;
        }
        for &m in &cover.complement {
            for &(alpha, p) in &pou.weights[m] {
                matrix[[m, column[m1[alpha]]]] += p;
            }
        }
        Ok(Self { subset, cover: Some(cover), pou: Some(pou), selected, matrix })
    }

    /// True when `S = M`.
    pub fn is_trivial(&self) -> bool {
        self.cover.is_none()
    }

    pub fn dugundji_matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    /// `f^ = W^ f` for `f` given as `|S| x k` values.
    pub fn pre_extend(&self, f: &Array2<f64>) -> Result<Array2<f64>> {
        if f.nrows() != self.subset.len() {
            return Err(Error::param(format!(
                "boundary data has {} rows, subset has {} points",
                f.nrows(),
                self.subset.len()
            )));
        }
        Ok(self.matrix.dot(f))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lemma31Certificate {
    pub functions: usize,
    pub pairs: usize,
    pub max_ratio: f64,
    pub violations: usize,
    /// Pair attaining `max_ratio`.
    pub witness: Option<(usize, usize)>,
    pub pass: bool,
}

type PairStat = (f64, usize, Option<(usize, usize)>);

/// Checks `|f^(m) - f^(m')| <= 7 L(f) (d(m, m') + d(m, S) + d(m', S))` over
/// all pairs for `trials` random `R^3`-valued boundary functions (Euclidean
/// norm) and the scalar functions `d(., s) - d(m*, s)` for every `s` in `S`.
pub fn certify_lemma31(
    space: &FiniteMetricSpace,
    app: &WhitneyApparatus,
    trials: usize,
    seed: u64,
) -> Result<Lemma31Certificate> {
    let subset = &app.subset;
    let sub = space.subspace(subset);
    let to_set: Vec<f64> = (0..space.size())
        .map(|m| space.dist_to_set(subset, m))
        .collect::<Result<_>>()?;
    let mut functions: Vec<Array2<f64>> = Vec::with_capacity(trials + subset.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = space.diameter().max(1.0);
    for t in 0..trials {
        let f = if t % 2 == 0 {
            Array2::from_shape_fn((subset.len(), 3), |_| rng.gen_range(-scale..scale))
        } else {
            // cones over random anchors, Lipschitz on the whole space
            let anchors: Vec<(usize, f64)> = (0..3)
                .map(|_| (rng.gen_range(0..space.size()), rng.gen_range(-scale..scale)))
                .collect();
            Array2::from_shape_fn((subset.len(), 3), |(k, j)| {
                let (a, h) = anchors[j];
                h + space.dist(subset[k], a)
            })
        };
        functions.push(f);
    }
    let base = subset[0];
    for &s in subset {
        let f = Array1::from_iter(subset.iter().map(|&x| space.dist(x, s) - space.dist(base, s)));
        functions.push(f.insert_axis(ndarray::Axis(1)));
    }
    let n = space.size();
    // (max ratio, violations, witness) per function
    let results: Vec<PairStat> = functions
        .par_iter()
        .map(|f| {
            let lf = lipschitz_constant(&sub, f, NormKind::L2);
            if lf == 0.0 {
                return (0.0, 0, None);
            }
            let fhat = app.matrix.dot(f);
            let mut best = (0.0, 0, None);
            for m in 0..n {
                for mp in m + 1..n {
                    let diff = fhat.row(m).iter().zip(fhat.row(mp)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                    let denom = lf * (space.dist(m, mp) + to_set[m] + to_set[mp]);
                    let ratio = diff / denom;
                    if ratio > 7.0 + FACTOR_SEVEN_TOL {
                        best.1 += 1;
                    }
                    if ratio > best.0 {
                        best.0 = ratio;
                        best.2 = Some((m, mp));
                    }
                }
            }
            best
        })
        .collect();
    let mut cert = Lemma31Certificate {
        functions: functions.len(),
        pairs: n * n.saturating_sub(1) / 2,
        max_ratio: 0.0,
        violations: 0,
        witness: None,
        pass: true,
    };
    for (ratio, violations, pair) in results {
        cert.violations += violations;
        if ratio > cert.max_ratio {
            cert.max_ratio = ratio;
            cert.witness = pair;
        }
    }
    cert.pass = cert.violations == 0;
    Ok(cert)
}
