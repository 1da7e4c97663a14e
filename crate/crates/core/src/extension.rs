//! The averaged extension operator `E` as a row-stochastic matrix `M x S`,
//! its operator norm, the McShane baseline and the bound report.

use std::str::FromStr;
use std::sync::Arc;

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::free_space::{kr_norm, kr_norm_dual, BalancedChain};
use crate::lift::{
    choose_n, lifted_consistency_bound, radial_regularity_bound, DILATION_BOUND,
};
use crate::measures::{family_constants, MeasureFamily};
use crate::metric::FiniteMetricSpace;
use crate::whitney::{normalize_subset, WhitneyApparatus};

/// Target norm for vector-valued functions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    L1,
    L2,
    #[default]
    Linf,
}

impl NormKind {
    pub fn norm<'a>(self, v: impl IntoIterator<Item = &'a f64>) -> f64 {
        let it = v.into_iter();
        match self {
            NormKind::L1 => it.map(|x| x.abs()).sum(),
            NormKind::L2 => it.map(|x| x * x).sum::<f64>().sqrt(),
            NormKind::Linf => it.fold(0.0, |acc, x| acc.max(x.abs())),
        }
    }
}

impl FromStr for NormKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" => Ok(NormKind::L1),
            "l2" => Ok(NormKind::L2),
            "linf" => Ok(NormKind::Linf),
            other => Err(Error::param(format!("unknown norm '{other}' (l1, l2, linf)"))),
        }
    }
}

/// `max ||F(m) - F(m')|| / d(m, m')` over all pairs; rows of `values` are
/// points. Zero for fewer than two points.
pub fn lipschitz_constant(space: &FiniteMetricSpace, values: &Array2<f64>, kind: NormKind) -> f64 {
    let n = space.size();
    let mut best: f64 = 0.0;
    let mut diff = vec![0.0; values.ncols()];
    for a in 0..n {
        for b in a + 1..n {
            for (k, d) in diff.iter_mut().enumerate() {
                *d = values[[a, k]] - values[[b, k]];
            }
            best = best.max(kind.norm(&diff) / space.dist(a, b));
        }
    }
    best
}

/// Scalar convenience for [`lipschitz_constant`].
pub fn lipschitz_constant_scalar(space: &FiniteMetricSpace, values: &[f64]) -> f64 {
    let column = Array1::from_vec(values.to_vec()).insert_axis(Axis(1));
    lipschitz_constant(space, &column, NormKind::Linf)
}

#[derive(Clone, Debug)]
pub struct ExtensionOperator {
    family: Arc<MeasureFamily>,
    subset: Vec<usize>,
    subspace: FiniteMetricSpace,
    whitney: WhitneyApparatus,
    matrix: Array2<f64>,
}

/// Builds `E` on the family's base space. Rows of `S` are indicators; for
/// `m` outside `S` with `R = d(m, S)` the row is the `mu_m`-average of the
/// Dugundji rows over `B_R(m)`, which never meets `S`.
pub fn build_operator(family: &Arc<MeasureFamily>, subset: &[usize]) -> Result<ExtensionOperator> {
    let space = family.base();
    let subset = normalize_subset(space, subset)?;
    let whitney = WhitneyApparatus::build(space, &subset)?;
    let mut matrix = whitney.matrix.clone();
    if let Some(cover) = &whitney.cover {
        for &m in &cover.complement {
            let radius = space.dist_to_set(&subset, m)?;
            let mut row = Array1::<f64>::zeros(subset.len());
            let mut mass = 0.0;
            for (&x, &d) in space.neighbors(m).iter().zip(space.sorted_dists(m)) {
                if d >= radius {
                    break;
                }
                let w = family.weight(m, x);
                if w > 0.0 {
                    row.scaled_add(w, &whitney.matrix.row(x));
                    mass += w;
                }
            }
            if !(mass > 0.0) {
                return Err(Error::invariant(format!("zero-mass averaging ball at point {m}")));
            }
            row /= mass;
            matrix.row_mut(m).assign(&row);
        }
    }
    Ok(ExtensionOperator {
        subspace: space.subspace(&subset),
        family: Arc::clone(family),
        subset,
        whitney,
        matrix,
    })
}

impl ExtensionOperator {
    pub fn space(&self) -> &Arc<FiniteMetricSpace> {
        self.family.base()
    }

    pub fn family(&self) -> &Arc<MeasureFamily> {
        &self.family
    }

    pub fn subset(&self) -> &[usize] {
        &self.subset
    }

    /// `S` with the induced metric, points in subset order.
    pub fn subspace(&self) -> &FiniteMetricSpace {
        &self.subspace
    }

    pub fn whitney(&self) -> &WhitneyApparatus {
        &self.whitney
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    /// Pointed-space basepoint `m*`, the first point of `S`. The matrix does
    /// not depend on it.
    pub fn basepoint(&self) -> usize {
        self.subset[0]
    }

    /// `F = W f` for boundary data given as `|S| x k`.
    pub fn apply(&self, f: &Array2<f64>) -> Result<Array2<f64>> {
        if f.nrows() != self.subset.len() {
            return Err(Error::param(format!(
                "boundary data has {} rows, subset has {} points",
                f.nrows(),
                self.subset.len()
            )));
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("boundary data must be finite"));
        }
        let mut out = self.matrix.dot(f);
        // rows of S reproduce f exactly
        for (k, &s) in self.subset.iter().enumerate() {
            out.row_mut(s).assign(&f.row(k));
        }
        Ok(out)
    }

    pub fn apply_scalar(&self, f: &[f64]) -> Result<Vec<f64>> {
        let column = Array1::from_vec(f.to_vec()).insert_axis(Axis(1));
        Ok(self.apply(&column)?.column(0).to_vec())
    }

    /// `row_m - row_m'` as a balanced chain on `S`, with the rounding residue
    /// of the row sums moved onto the largest coefficient.
    fn row_difference(&self, m: usize, mp: usize) -> Result<BalancedChain> {
        let mut c: Vec<f64> =
            self.matrix.row(m).iter().zip(self.matrix.row(mp)).map(|(a, b)| a - b).collect();
        let residue: f64 = c.iter().sum();
        if residue != 0.0 {
            let k = (0..c.len()).max_by(|&a, &b| c[a].abs().total_cmp(&c[b].abs())).unwrap_or(0);
            c[k] -= residue;
        }
        BalancedChain::new(&self.subspace, c)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorNorm {
    pub value: f64,
    /// Pair attaining the value (a pair inside `S` when the value is 1 from
    /// the identity block).
    pub pair: Option<(usize, usize)>,
    /// `|S| = 1`: `Lip_0(S) = {0}` and the norm is reported as 0.
    pub degenerate: bool,
    /// A 1-Lipschitz boundary function attaining the norm, zero at `m*`,
    /// in subset order.
    pub extremal: Option<Vec<f64>>,
}

/// `max ||row_m - row_m'||_KR(S) / d(m, m')`, the exact norm of
/// `E: Lip_0(S) -> Lip_0(M)` for scalar data.
pub fn operator_norm_exact(op: &ExtensionOperator) -> Result<OperatorNorm> {
    let space = op.space();
    let n = space.size();
    if op.subset.len() == 1 {
        return Ok(OperatorNorm { value: 0.0, pair: None, degenerate: true, extremal: None });
    }
    let in_subset: Vec<bool> = (0..n).map(|m| op.subset.binary_search(&m).is_ok()).collect();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|m| (m + 1..n).map(move |mp| (m, mp)))
        .filter(|&(m, mp)| !(in_subset[m] && in_subset[mp]))
        .filter(|&(m, mp)| op.matrix.row(m) != op.matrix.row(mp))
        .collect();
    let values: Vec<f64> = pairs
        .par_iter()
        .map(|&(m, mp)| {
            let chain = op.row_difference(m, mp)?;
            Ok(kr_norm(&op.subspace, &chain)?.value / space.dist(m, mp))
        })
        .collect::<Result<_>>()?;
    // pairs inside S contribute exactly 1; the closest such pair stands for them
    let (s0, s1) = closest_pair(&op.subspace);
    let mut best = (1.0, (op.subset[s0], op.subset[s1]));
    for (&v, &pair) in values.iter().zip(&pairs) {
        if v > best.0 {
            best = (v, pair);
        }
    }
    let (m, mp) = best.1;
    let chain = op.row_difference(m, mp)?;
    let dual = kr_norm_dual(&op.subspace, &chain, 0)?;
    Ok(OperatorNorm { value: best.0, pair: Some((m, mp)), degenerate: false, extremal: Some(dual.extremal) })
}

fn closest_pair(space: &FiniteMetricSpace) -> (usize, usize) {
    let mut best = (0, 1);
    for a in 0..space.size() {
        for b in a + 1..space.size() {
            if space.dist(a, b) < space.dist(best.0, best.1) {
                best = (a, b);
            }
        }
    }
    best
}

/// `max L(E f) / L(f)` over the given scalar boundary functions (subset
/// order); constant functions are skipped.
pub fn sampled_norm(op: &ExtensionOperator, functions: &[Vec<f64>]) -> Result<f64> {
    let mut best: f64 = 0.0;
    for f in functions {
        let lf = lipschitz_constant_scalar(&op.subspace, f);
        if lf == 0.0 {
            continue;
        }
        let ef = op.apply_scalar(f)?;
        best = best.max(lipschitz_constant_scalar(op.space(), &ef) / lf);
    }
    Ok(best)
}

/// Lower bound on the operator norm from `trials` random boundary functions
/// (uniform values and McShane cones over random anchors) together with the
/// extremal function of the maximizing pair.
pub fn operator_norm_sampled(op: &ExtensionOperator, trials: usize, seed: u64) -> Result<f64> {
    if trials == 0 {
        return Err(Error::param("need at least one trial"));
    }
    let s = op.subset.len();
    let sub = &op.subspace;
    let scale = sub.diameter().max(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut functions = Vec::with_capacity(trials + 1);
    for t in 0..trials {
        let f: Vec<f64> = if t % 2 == 0 {
            (0..s).map(|_| rng.gen_range(-scale..scale)).collect()
        } else {
            let g: Vec<f64> = (0..s).map(|_| rng.gen_range(-scale..scale)).collect();
            let anchors: Vec<usize> = (0..3.min(s)).map(|_| rng.gen_range(0..s)).collect();
            (0..s)
                .map(|x| anchors.iter().map(|&a| g[a] + sub.dist(x, a)).fold(f64::INFINITY, f64::min))
                .collect()
        };
        functions.push(f);
    }
    if let Some(extremal) = operator_norm_exact(op)?.extremal {
        functions.push(extremal);
    }
    sampled_norm(op, &functions)
}

/// `F(m) = min_s (f(s) + L d(m, s))`; `f` in subset order.
pub fn mcshane_extend(
    space: &FiniteMetricSpace,
    subset: &[usize],
    f: &[f64],
    lipschitz: f64,
) -> Result<Vec<f64>> {
    if subset.is_empty() || subset.len() != f.len() {
        return Err(Error::param("boundary values must match a nonempty subset"));
    }
    if subset.iter().any(|&s| s >= space.size()) {
        return Err(Error::param("subset index out of range"));
    }
    let sub = space.subspace(subset);
    let lf = lipschitz_constant_scalar(&sub, f);
    if lipschitz < lf * (1.0 - 1e-12) {
        return Err(Error::param(format!("L = {lipschitz} is below L(f) = {lf}")));
    }
    Ok((0..space.size())
        .map(|m| {
            subset
                .iter()
                .zip(f)
                .map(|(&s, &v)| v + lipschitz * space.dist(m, s))
                .fold(f64::INFINITY, f64::min)
        })
        .collect())
}

/// Every constant entering the norm estimate next to the measured norm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub points: usize,
    pub subset_size: usize,
    pub doubling: f64,
    pub consistency: f64,
    pub r_max: f64,
    pub uniformity: f64,
    pub n: usize,
    pub l: f64,
    /// Bound on `D_n(1 + 1/n)`.
    pub dn_bound: f64,
    /// Bound on `C_n`.
    pub cn_bound: f64,
    pub a_n: f64,
    pub k_n: f64,
    pub prop36_rhs: f64,
    /// `(C + 1)(log2 D + 6)`.
    pub shape_bound: f64,
    pub empirical_norm: f64,
    pub degenerate: bool,
    pub norm_over_shape: f64,
    /// The ratio `mu R0 / epsilon = 64` of the net embedding hypothesis.
    pub mu_r0_over_epsilon: f64,
}

/// Assembles the report for `E` on `(family, S)`, with `C` truncated at
/// `r_max` (default: diameter).
pub fn bound_report(family: &Arc<MeasureFamily>, subset: &[usize], r_max: Option<f64>) -> Result<BoundReport> {
    let op = build_operator(family, subset)?;
    bound_report_for(&op, r_max)
}

pub fn bound_report_for(op: &ExtensionOperator, r_max: Option<f64>) -> Result<BoundReport> {
    let constants = family_constants(&op.family, r_max, &[])?;
    let norm = operator_norm_exact(op)?;
    let d = constants.doubling;
    let c = constants.consistency;
    let n = choose_n(d)?;
    let l = 1.0 + 1.0 / n as f64;
    let dn_bound = DILATION_BOUND;
    let cn_bound = lifted_consistency_bound(n, c);
    let a_n = radial_regularity_bound(n);
    let k_n = 42.0 * (a_n + cn_bound) * dn_bound * (l + 3.0);
    let prop36_rhs = 56.0 * a_n + (14.0 * (l + 3.0) / (l - 1.0)).max(k_n);
    let shape_bound = (c + 1.0) * (d.log2() + 6.0);
    Ok(BoundReport {
        points: op.space().size(),
        subset_size: op.subset.len(),
        doubling: d,
        consistency: c,
        r_max: constants.r_max,
        uniformity: constants.uniformity,
        n,
        l,
        dn_bound,
        cn_bound,
        a_n,
        k_n,
        prop36_rhs,
        shape_bound,
        empirical_norm: norm.value,
        degenerate: norm.degenerate,
        norm_over_shape: norm.value / shape_bound,
        mu_r0_over_epsilon: 64.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{gen_euclidean_cloud, gen_path, gen_tree};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn counting(n: usize) -> Arc<MeasureFamily> {
        Arc::new(MeasureFamily::counting(Arc::new(gen_path(n).unwrap())))
    }

    #[test]
    fn p3_worked_instance() {
        let f = counting(3);
        let op = build_operator(&f, &[0, 2]).unwrap();
        assert_eq!(op.matrix().row(1).to_vec(), vec![1.0, 0.0]);
        let ef = op.apply_scalar(&[0.0, 2.0]).unwrap();
        assert_eq!(ef, vec![0.0, 0.0, 2.0]);
        assert_eq!(lipschitz_constant_scalar(op.space(), &ef), 2.0);
        let norm = operator_norm_exact(&op).unwrap();
        assert_abs_diff_eq!(norm.value, 2.0, epsilon = 1e-12);
        assert_eq!(norm.pair, Some((1, 2)));
        let extremal = norm.extremal.unwrap();
        assert_abs_diff_eq!((extremal[1] - extremal[0]).abs(), 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(operator_norm_sampled(&op, 8, 3).unwrap(), 2.0, epsilon = 1e-9);
    }

    #[test]
    fn identity_when_subset_is_everything() {
        let f = counting(5);
        let op = build_operator(&f, &[0, 1, 2, 3, 4]).unwrap();
        assert_eq!(op.matrix(), &Array2::<f64>::eye(5));
        assert_eq!(operator_norm_exact(&op).unwrap().value, 1.0);
        assert_abs_diff_eq!(operator_norm_sampled(&op, 4, 0).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn single_point_subset_is_degenerate() {
        let op = build_operator(&counting(4), &[2]).unwrap();
        let norm = operator_norm_exact(&op).unwrap();
        assert!(norm.degenerate);
        assert_eq!(norm.value, 0.0);
        assert_eq!(op.apply_scalar(&[3.0]).unwrap(), vec![3.0; 4]);
    }

    #[test]
    fn self_only_ball_copies_dugundji_row() {
        let op = build_operator(&counting(3), &[0, 2]).unwrap();
        assert_eq!(op.matrix().row(1), op.whitney().matrix.row(1));
    }

    #[test]
    fn lipschitz_constants() {
        let p = gen_path(4).unwrap();
        assert_eq!(lipschitz_constant_scalar(&p, &[1.0; 4]), 0.0);
        assert_eq!(lipschitz_constant_scalar(&p, &[3.0, 2.0, 1.0, 0.0]), 1.0);
        let v = Array2::from_shape_vec((2, 2), vec![0.0, 0.0, 3.0, 4.0]).unwrap();
        let two = gen_path(2).unwrap();
        assert_eq!(lipschitz_constant(&two, &v, NormKind::L1), 7.0);
        assert_eq!(lipschitz_constant(&two, &v, NormKind::L2), 5.0);
        assert_eq!(lipschitz_constant(&two, &v, NormKind::Linf), 4.0);
        assert_eq!("l2".parse::<NormKind>().unwrap(), NormKind::L2);
        assert!("l3".parse::<NormKind>().is_err());
    }

    #[test]
    fn mcshane_examples() {
        let p = gen_path(3).unwrap();
        assert_eq!(mcshane_extend(&p, &[0, 2], &[0.0, 2.0], 1.0).unwrap(), vec![0.0, 1.0, 2.0]);
        assert_eq!(mcshane_extend(&p, &[0, 1, 2], &[5.0, 4.0, 4.5], 1.0).unwrap(), vec![5.0, 4.0, 4.5]);
        assert_eq!(mcshane_extend(&p, &[0, 2], &[1.0, 1.0], 0.0).unwrap(), vec![1.0; 3]);
        assert!(mcshane_extend(&p, &[0, 2], &[0.0, 2.0], 0.5).is_err());
    }

    #[test]
    fn apply_rejects_mismatch() {
        let op = build_operator(&counting(4), &[0, 3]).unwrap();
        assert!(op.apply_scalar(&[1.0]).is_err());
        assert!(op.apply_scalar(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn bound_reports() {
        let f = counting(8);
        let r = bound_report(&f, &[0, 7], None).unwrap();
        assert_eq!(r.consistency, 0.0);
        assert_eq!(r.cn_bound, 0.0);
        assert_abs_diff_eq!(r.k_n, 42.0 * r.a_n * r.dn_bound * (r.l + 3.0), epsilon = 1e-9);
        assert!(r.prop36_rhs >= 56.0 * r.a_n);
        assert!(r.norm_over_shape.is_finite());

        let single = Arc::new(MeasureFamily::dirac(Arc::new(gen_path(5).unwrap())));
        let r = bound_report(&single, &[0, 4], None).unwrap();
        assert_eq!(r.doubling, 1.0);
        assert_eq!(r.n, 6);
        assert_abs_diff_eq!(r.l, 7.0 / 6.0);
        assert_abs_diff_eq!(r.a_n, 393.107, epsilon = 1e-3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]
        #[test]
        fn operator_properties(seed in 0u64..1000, stride in 2usize..6) {
            let space = Arc::new(gen_euclidean_cloud(18, 2, seed).unwrap());
            let family = Arc::new(MeasureFamily::kernel(Arc::clone(&space), 0.3).unwrap());
            let subset: Vec<usize> = (0..18).step_by(stride).collect();
            let op = build_operator(&family, &subset).unwrap();
            for row in op.matrix().rows() {
                prop_assert!(row.iter().all(|&v| v >= 0.0));
                prop_assert!((row.sum() - 1.0).abs() <= 1e-12);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = Array2::from_shape_fn((subset.len(), 2), |_| rng.gen_range(-1.0..1.0));
            let g = Array2::from_shape_fn((subset.len(), 2), |_| rng.gen_range(-1.0..1.0));
            let ef = op.apply(&f).unwrap();
            for (k, &s) in subset.iter().enumerate() {
                prop_assert_eq!(ef.row(s), f.row(k));
            }
            let combo = op.apply(&(&f * 2.0 - &g * 0.5)).unwrap();
            let lin = &ef * 2.0 - &op.apply(&g).unwrap() * 0.5;
            prop_assert!(combo.iter().zip(lin.iter()).all(|(a, b)| (a - b).abs() <= 1e-12));
            // basepoint shift commutes with E
            let base = f.row(0).to_owned();
            let shifted = op.apply(&(&f - &base)).unwrap() + &base;
            prop_assert!(shifted.iter().zip(ef.iter()).all(|(a, b)| (a - b).abs() <= 1e-12));

            let exact = operator_norm_exact(&op).unwrap().value;
            let sampled = operator_norm_sampled(&op, 10, seed).unwrap();
            prop_assert!(sampled <= exact + 1e-9 && sampled >= exact - 1e-9, "{} {}", sampled, exact);
            let lf = lipschitz_constant(op.subspace(), &f, NormKind::Linf);
            prop_assert!(lipschitz_constant(&space, &ef, NormKind::Linf) <= exact * lf + 1e-9);
        }
    }

    #[test]
    fn tree_norm_at_least_one() {
        let t = Arc::new(gen_tree(2, 3).unwrap());
        let family = Arc::new(MeasureFamily::counting(t));
        let op = build_operator(&family, &[0, 7, 10, 14]).unwrap();
        let norm = operator_norm_exact(&op).unwrap();
        assert!(norm.value >= 1.0);
        assert!(operator_norm_sampled(&op, 6, 1).unwrap() <= norm.value + 1e-9);
    }
}
