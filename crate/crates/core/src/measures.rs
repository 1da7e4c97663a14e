//! Families of measures `{mu_m}` indexed by the points of a finite space, and
//! the exact computation of their constants.
//!
//! Every measure is atomic, `mu_m = sum_x w_m(x) delta_x`, so open-ball masses
//! are step functions of the radius. Each supremum over `R > 0` is evaluated
//! at the finitely many right endpoints of the constancy intervals of the
//! quantities involved: the ratio is constant (or monotone) in between.

use std::sync::Arc;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::FiniteMetricSpace;

/// Shrinks a computed radius below rounding noise so that a distance equal to
/// the exact radius is never counted inside the open ball.
#[inline]
pub(crate) fn shrink(radius: f64) -> f64 {
    radius * (1.0 - 4.0 * f64::EPSILON)
}

/// A family of atomic measures, one per base point. Row `m` of the weight
/// matrix is the measure `mu_m`.
#[derive(Clone, Debug)]
pub struct MeasureFamily {
    base: Arc<FiniteMetricSpace>,
    weights: Array2<f64>,
    // prefix[m][k]: mass of mu_m on the k nearest points to m
    prefix: Vec<Vec<f64>>,
}

impl MeasureFamily {
    pub fn new(base: Arc<FiniteMetricSpace>, weights: Array2<f64>) -> Result<Self> {
        let n = base.size();
        if weights.dim() != (n, n) {
            return Err(Error::format(format!(
                "weights are {:?}, expected {n}x{n}",
                weights.dim()
            )));
        }
        if let Some(((i, j), w)) = weights.indexed_iter().find(|(_, w)| !w.is_finite() || **w < 0.0) {
            return Err(Error::invariant(format!("weight w_{i}({j}) = {w} is not finite and >= 0")));
        }
        if let Some(m) = (0..n).find(|&m| !(weights[[m, m]] > 0.0)) {
            return Err(Error::invariant(format!(
                "w_{m}({m}) must be positive so every ball at {m} has positive mass"
            )));
        }
        let prefix = (0..n)
            .map(|m| {
                let mut acc = 0.0;
                let mut row = Vec::with_capacity(n + 1);
                row.push(0.0);
                for &x in base.neighbors(m) {
                    acc += weights[[m, x]];
                    row.push(acc);
                }
                row
            })
            .collect();
        Ok(Self { base, weights, prefix })
    }

    /// Every `mu_m` is counting measure.
    pub fn counting(base: Arc<FiniteMetricSpace>) -> Self {
        let n = base.size();
        Self::new(base, Array2::ones((n, n))).expect("counting family is valid")
    }

    /// `mu_m = delta_m`.
    pub fn dirac(base: Arc<FiniteMetricSpace>) -> Self {
        let n = base.size();
        Self::new(base, Array2::eye(n)).expect("dirac family is valid")
    }

    /// `w_m(x) = exp(-d(m, x) / scale)`.
    pub fn kernel(base: Arc<FiniteMetricSpace>, scale: f64) -> Result<Self> {
        if !(scale > 0.0) {
            return Err(Error::param("kernel scale must be positive"));
        }
        let n = base.size();
        let w = Array2::from_shape_fn((n, n), |(m, x)| (-base.dist(m, x) / scale).exp());
        Self::new(base, w)
    }

    pub fn base(&self) -> &Arc<FiniteMetricSpace> {
        &self.base
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn size(&self) -> usize {
        self.base.size()
    }

    #[inline]
    pub fn weight(&self, m: usize, x: usize) -> f64 {
        self.weights[[m, x]]
    }

    /// `mu_m(B_R(m))`.
    #[inline]
    pub fn ball_mass(&self, m: usize, radius: f64) -> f64 {
        self.prefix[m][self.base.ball_count(m, radius)]
    }

    /// Mass of `mu_m` on the `k` nearest points to `m`.
    #[inline]
    pub(crate) fn prefix_mass(&self, m: usize, k: usize) -> f64 {
        self.prefix[m][k]
    }

    pub fn total_mass(&self, m: usize) -> f64 {
        *self.prefix[m].last().expect("prefix has n + 1 entries")
    }

    /// All rows equal.
    pub fn is_constant(&self) -> bool {
        let first = self.weights.row(0);
        self.weights.rows().into_iter().all(|r| r == first)
    }
}

/// Serializable description of a family on a given base.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FamilySpec {
    Counting,
    Dirac,
    Kernel { scale: f64 },
    Weights { weights: Vec<Vec<f64>> },
}

impl FamilySpec {
    pub fn build(&self, base: Arc<FiniteMetricSpace>) -> Result<MeasureFamily> {
        match self {
            FamilySpec::Counting => Ok(MeasureFamily::counting(base)),
            FamilySpec::Dirac => Ok(MeasureFamily::dirac(base)),
            FamilySpec::Kernel { scale } => MeasureFamily::kernel(base, *scale),
            FamilySpec::Weights { weights } => {
                let n = weights.len();
                if weights.iter().any(|r| r.len() != n) {
                    return Err(Error::format("weight matrix is not square"));
                }
                let w = Array2::from_shape_fn((n, n), |(i, j)| weights[i][j]);
                MeasureFamily::new(base, w)
            }
        }
    }

    pub fn name(&self) -> String {
        match self {
            FamilySpec::Counting => "counting".into(),
            FamilySpec::Dirac => "dirac".into(),
            FamilySpec::Kernel { scale } => format!("kernel{scale}"),
            FamilySpec::Weights { .. } => "weights".into(),
        }
    }
}

/// `sup_R mu_m(B_{lR}(m)) / mu_m(B_R(m))` at a single center.
///
/// Both balls are constant between consecutive values of
/// `{r} ∪ {r / l}` over the critical radii `r` of `m`, so the ratio is
/// evaluated at those right endpoints.
pub fn point_dilation(family: &MeasureFamily, m: usize, l: f64) -> Result<f64> {
    if !(l > 1.0) || !l.is_finite() {
        return Err(Error::param(format!("dilation factor must be > 1, got {l}")));
    }
    let radii = family.base.critical_radii(m);
    let mut best = 1.0_f64;
    for c in radii.iter().copied().chain(radii.iter().map(|r| r / l)) {
        let small = family.ball_mass(m, shrink(c));
        if !(small > 0.0) {
            return Err(Error::invariant(format!("zero-mass ball at center {m}")));
        }
        let big = family.ball_mass(m, shrink(l * c));
        best = best.max(big / small);
    }
    Ok(best)
}

/// Doubling constant `D_m(mu_m)`.
pub fn point_doubling(family: &MeasureFamily, m: usize) -> Result<f64> {
    point_dilation(family, m, 2.0)
}

/// Dilation function `D(l) = sup_m sup_R mu_m(B_{lR}(m)) / mu_m(B_R(m))`.
pub fn dilation(family: &MeasureFamily, l: f64) -> Result<f64> {
    (0..family.size())
        .into_par_iter()
        .map(|m| point_dilation(family, m, l))
        .collect::<Result<Vec<_>>>()
        .map(|v| v.into_iter().fold(1.0, f64::max))
}

/// Uniform doubling constant `D = sup_m D_m(mu_m) = D(2)`.
pub fn family_doubling(family: &MeasureFamily) -> Result<f64> {
    dilation(family, 2.0)
}

/// Consistency constant truncated to radii in `(0, r_max]`:
/// the sup of `|mu_a - mu_b|(B_R(a)) * R / (mu_a(B_R(a)) * d(a, b))` over
/// ordered pairs `a != b`.
///
/// Ordered pairs cover both admissible centers. For fixed ball content the
/// ratio increases with `R`, so each constancy interval contributes its right
/// endpoint: every critical radius of `a` up to `r_max`, and `r_max` itself.
pub fn consistency(family: &MeasureFamily, r_max: f64) -> Result<f64> {
    Ok(consistency_witness(family, r_max)?.value)
}

/// Where the consistency supremum is attained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyWitness {
    pub value: f64,
    pub center: usize,
    pub other: usize,
    pub radius: f64,
}

pub fn consistency_witness(family: &MeasureFamily, r_max: f64) -> Result<ConsistencyWitness> {
    if !(r_max > 0.0) {
        return Err(Error::param(format!("r_max must be positive, got {r_max}")));
    }
    let space = &family.base;
    let n = space.size();
    let zero = ConsistencyWitness { value: 0.0, center: 0, other: 0, radius: r_max };
    let per_center: Vec<ConsistencyWitness> = (0..n)
        .into_par_iter()
        .map(|a| {
            let order = space.neighbors(a);
            let dists = space.sorted_dists(a);
            let mut best = zero;
            let mut tv = vec![0.0; n + 1];
            for b in (0..n).filter(|&b| b != a) {
                let d_ab = space.dist(a, b);
                for (k, &x) in order.iter().enumerate() {
                    tv[k + 1] = tv[k] + (family.weight(a, x) - family.weight(b, x)).abs();
                }
                let mut consider = |k: usize, radius: f64| {
                    let v = tv[k] * radius / (family.prefix_mass(a, k) * d_ab);
                    if v > best.value {
                        best = ConsistencyWitness { value: v, center: a, other: b, radius };
                    }
                };
                // k = index of the first point at distance >= dists[k]
                for k in 1..n {
                    if dists[k] > r_max {
                        break;
                    }
                    if dists[k] != dists[k - 1] {
                        consider(k, dists[k]);
                    }
                }
                consider(space.ball_count(a, r_max), r_max);
            }
            best
        })
        .collect();
    Ok(per_center
        .into_iter()
        .fold(zero, |acc, w| if w.value > acc.value { w } else { acc }))
}

/// Uniformity constant `K = sup mu_a(B_R(a)) / mu_b(B_R(b))` over all pairs
/// and radii. Ball masses are constant between consecutive pairwise
/// distances, so the sup runs over those plus `R = ∞`.
pub fn uniformity(family: &MeasureFamily) -> f64 {
    let space = &family.base;
    let n = space.size();
    let ratio_at = |k_of: &dyn Fn(usize) -> usize| {
        let (lo, hi) = (0..n).fold((f64::INFINITY, 0.0_f64), |(lo, hi), m| {
            let v = family.prefix_mass(m, k_of(m));
            (lo.min(v), hi.max(v))
        });
        hi / lo
    };
    let radii = space.distinct_distances();
    let finite = radii
        .par_iter()
        .map(|&r| ratio_at(&|m| space.ball_count(m, r)))
        .reduce(|| 1.0, f64::max);
    finite.max(ratio_at(&|_| n)).max(1.0)
}

/// One row of a dilation table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DilationEntry {
    pub l: f64,
    pub value: f64,
}

/// All constants of a family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyConstants {
    pub doubling: f64,
    pub consistency: f64,
    pub r_max: f64,
    pub uniformity: f64,
    pub dilation_table: Vec<DilationEntry>,
}

/// Default dilation factors reported alongside the constants.
pub const DEFAULT_DILATIONS: [f64; 6] = [1.1, 1.25, 1.5, 2.0, 3.0, 4.0];

/// Computes `D`, `C(r_max)` (default `r_max` = diameter), `K`, and `D(l)` for
/// each requested `l`.
pub fn family_constants(
    family: &MeasureFamily,
    r_max: Option<f64>,
    dilations: &[f64],
) -> Result<FamilyConstants> {
    let r_max = resolve_r_max(family.base(), r_max);
    let dilation_table = dilations
        .iter()
        .map(|&l| dilation(family, l).map(|value| DilationEntry { l, value }))
        .collect::<Result<Vec<_>>>()?;
    Ok(FamilyConstants {
        doubling: family_doubling(family)?,
        consistency: consistency(family, r_max)?,
        r_max,
        uniformity: uniformity(family),
        dilation_table,
    })
}

/// `r_max` defaults to the diameter; a one-point space uses 1.
pub fn resolve_r_max(space: &FiniteMetricSpace, r_max: Option<f64>) -> f64 {
    r_max.unwrap_or_else(|| if space.diameter() > 0.0 { space.diameter() } else { 1.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{gen_path, gen_tree};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    // Independent oracle: direct open-ball sums over a radius set that
    // samples every constancy interval from inside.
    fn oracle_mass(f: &MeasureFamily, m: usize, r: f64) -> f64 {
        let s = f.base();
        (0..s.size()).filter(|&x| s.dist(m, x) < r).map(|x| f.weight(m, x)).sum()
    }

    fn oracle_radii(space: &FiniteMetricSpace, scales: &[f64]) -> Vec<f64> {
        let mut out = vec![];
        for r in space.distinct_distances() {
            for s in scales {
                let c = r * s;
                out.extend([c * (1.0 - 1e-9), c * (1.0 + 1e-9)]);
            }
        }
        out
    }

    fn oracle_dilation(f: &MeasureFamily, l: f64) -> f64 {
        let radii = oracle_radii(f.base(), &[1.0, 1.0 / l]);
        let mut best = 1.0_f64;
        for m in 0..f.size() {
            for &r in &radii {
                best = best.max(oracle_mass(f, m, l * r) / oracle_mass(f, m, r));
            }
        }
        best
    }

    fn oracle_consistency(f: &MeasureFamily, r_max: f64) -> f64 {
        let s = f.base();
        let mut radii: Vec<f64> = s
            .distinct_distances()
            .into_iter()
            .map(|r| r * (1.0 - 1e-9))
            .filter(|&r| r <= r_max)
            .collect();
        radii.push(r_max);
        let mut best = 0.0_f64;
        for a in 0..s.size() {
            for b in 0..s.size() {
                if a == b {
                    continue;
                }
                for center in [a, b] {
                    for &r in &radii {
                        let tv: f64 = (0..s.size())
                            .filter(|&x| s.dist(center, x) < r)
                            .map(|x| (f.weight(a, x) - f.weight(b, x)).abs())
                            .sum();
                        best = best.max(tv * r / (oracle_mass(f, center, r) * s.dist(a, b)));
                    }
                }
            }
        }
        best
    }

    fn oracle_uniformity(f: &MeasureFamily) -> f64 {
        let s = f.base();
        let mut radii = oracle_radii(s, &[1.0]);
        radii.push(2.0 * s.diameter() + 1.0);
        let mut best = 1.0_f64;
        for &r in &radii {
            for a in 0..s.size() {
                for b in 0..s.size() {
                    best = best.max(oracle_mass(f, a, r) / oracle_mass(f, b, r));
                }
            }
        }
        best
    }

    fn shifted_family(space: Arc<FiniteMetricSpace>) -> MeasureFamily {
        // w_m = uniform weights plus an extra unit at the center
        let n = space.size();
        let w = Array2::from_shape_fn((n, n), |(m, x)| if m == x { 2.0 } else { 1.0 });
        MeasureFamily::new(space, w).unwrap()
    }

    #[test]
    fn single_point_constants() {
        let s = Arc::new(gen_path(1).unwrap());
        let f = MeasureFamily::new(s, Array2::from_elem((1, 1), 3.5)).unwrap();
        assert_eq!(point_doubling(&f, 0).unwrap(), 1.0);
        assert_eq!(family_doubling(&f).unwrap(), 1.0);
        assert_eq!(consistency(&f, 1.0).unwrap(), 0.0);
        assert_eq!(uniformity(&f), 1.0);
    }

    #[test]
    fn dirac_family_never_dilates() {
        let s = Arc::new(gen_path(8).unwrap());
        let f = MeasureFamily::dirac(s);
        for m in 0..8 {
            assert_eq!(point_doubling(&f, m).unwrap(), 1.0);
        }
        for l in [1.1, 1.5, 2.0, 7.0] {
            assert_eq!(dilation(&f, l).unwrap(), 1.0);
        }
    }

    #[test]
    fn counting_on_p8_matches_enumeration() {
        let f = MeasureFamily::counting(Arc::new(gen_path(8).unwrap()));
        // interior center, R = 1: B_1 = {m}, B_2 = {m-1, m, m+1}
        let worst = (0..8).map(|m| point_doubling(&f, m).unwrap()).fold(1.0, f64::max);
        assert_eq!(worst, 3.0);
        assert_eq!(family_doubling(&f).unwrap(), 3.0);
        assert_eq!(family_doubling(&f).unwrap(), oracle_dilation(&f, 2.0));
        assert_eq!(point_doubling(&f, 0).unwrap(), 2.0);
        for l in [1.1, 1.5, 2.5, 3.0, 4.0] {
            assert_relative_eq!(dilation(&f, l).unwrap(), oracle_dilation(&f, l), max_relative = 1e-15);
        }
        assert_eq!(dilation(&f, 1.5).unwrap(), 3.0);
    }

    fn cycle(n: usize) -> FiniteMetricSpace {
        let d = Array2::from_shape_fn((n, n), |(i, j)| {
            let k = i.abs_diff(j);
            k.min(n - k) as f64
        });
        FiniteMetricSpace::from_matrix(d).unwrap()
    }

    #[test]
    fn constant_family_constants() {
        let f = MeasureFamily::counting(Arc::new(gen_tree(2, 3).unwrap()));
        assert_eq!(consistency(&f, f.base().diameter()).unwrap(), 0.0);
        // a constant family is 1-uniform only when ball masses do not depend
        // on the center; on a tree the root sees more mass than a leaf
        assert_eq!(uniformity(&f), oracle_uniformity(&f));
        assert!(uniformity(&f) > 1.0);
        let f = MeasureFamily::counting(Arc::new(cycle(9)));
        assert_eq!(uniformity(&f), 1.0);
        assert_eq!(consistency(&f, 4.0).unwrap(), 0.0);
    }

    #[test]
    fn shifted_family_on_p3() {
        let f = shifted_family(Arc::new(gen_path(3).unwrap()));
        let c = consistency(&f, 2.0).unwrap();
        assert_relative_eq!(c, oracle_consistency(&f, 2.0), max_relative = 1e-12);
        // pair (0, 1) centered at 0, R = 2: ball {0, 1}, tv 2, mass 3, d = 1
        assert_relative_eq!(c, 4.0 / 3.0, max_relative = 1e-15);
    }

    #[test]
    fn unbalanced_tree_uniformity() {
        // root with a long arm and a short arm
        let d = ndarray::array![
            [0.0, 1.0, 2.0, 1.0],
            [1.0, 0.0, 1.0, 2.0],
            [2.0, 1.0, 0.0, 3.0],
            [1.0, 2.0, 3.0, 0.0]
        ];
        let f = MeasureFamily::counting(Arc::new(FiniteMetricSpace::from_matrix(d).unwrap()));
        let k = uniformity(&f);
        assert_relative_eq!(k, oracle_uniformity(&f), max_relative = 1e-15);
        // R just above 1: center 0 sees 3 points, leaves 2 and 3 see 2
        assert_eq!(k, 1.5);
    }

    #[test]
    fn rejects_bad_weights() {
        let s = Arc::new(gen_path(2).unwrap());
        let zero_center = ndarray::array![[0.0, 1.0], [1.0, 1.0]];
        assert!(matches!(MeasureFamily::new(s.clone(), zero_center), Err(Error::InvariantViolation(_))));
        let negative = ndarray::array![[1.0, -1.0], [1.0, 1.0]];
        assert!(MeasureFamily::new(s.clone(), negative).is_err());
        assert!(matches!(MeasureFamily::new(s, Array2::ones((3, 3))), Err(Error::Format(_))));
    }

    #[test]
    fn spec_round_trip() {
        let spec: FamilySpec = serde_json::from_str(r#"{"kind": "kernel", "scale": 2.0}"#).unwrap();
        let f = spec.build(Arc::new(gen_path(4).unwrap())).unwrap();
        assert_relative_eq!(f.weight(0, 2), (-1.0f64).exp());
    }

    fn arb_family() -> impl Strategy<Value = MeasureFamily> {
        (2usize..9, 0u64..1000, prop::collection::vec(0.05f64..3.0, 81)).prop_map(|(n, seed, w)| {
            let space = Arc::new(crate::generators::gen_euclidean_cloud(n, 2, seed).unwrap());
            let weights = Array2::from_shape_fn((n, n), |(i, j)| w[i * 9 + j]);
            MeasureFamily::new(space, weights).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn constants_match_brute_force(f in arb_family(), l in 1.05f64..3.0) {
            let d = dilation(&f, l).unwrap();
            prop_assert!((d - oracle_dilation(&f, l)).abs() <= 1e-12 * d);
            let r_max = f.base().diameter();
            let c = consistency(&f, r_max).unwrap();
            let oc = oracle_consistency(&f, r_max);
            prop_assert!((c - oc).abs() <= 1e-6 * c.max(1e-300), "{c} vs {oc}");
            let k = uniformity(&f);
            prop_assert!((k - oracle_uniformity(&f)).abs() <= 1e-12 * k);
        }

        #[test]
        fn dilation_is_monotone_and_matches_doubling(f in arb_family(), a in 1.01f64..2.0, b in 1.01f64..2.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let dlo = dilation(&f, lo).unwrap();
            let dhi = dilation(&f, hi).unwrap();
            prop_assert!(dlo >= 1.0 && dlo <= dhi);
            prop_assert_eq!(dilation(&f, 2.0).unwrap(), family_doubling(&f).unwrap());
        }
    }
}
