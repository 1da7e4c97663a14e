//! Tensor-product families on direct `p`-sums and the product constant
//! calculus.

use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lift::{certify_dilation, default_radius_grid, floor_log2, LemmaCertificate, LiftedSpace, DILATION_BOUND};
use crate::measures::{consistency, dilation, family_doubling, resolve_r_max, uniformity, MeasureFamily};
use crate::metric::{product_space, Exponent, ProductIndexer, ProductSpec};

/// Relative tolerance of the product comparisons.
pub const PRODUCT_TOL: f64 = 1e-9;

/// `w_(m_1..m_N)(m'_1..m'_N) = prod_i w^i_{m_i}(m'_i)` on the direct `p`-sum
/// of the base spaces.
pub fn tensor_family(families: &[&MeasureFamily], p: Exponent) -> Result<MeasureFamily> {
    if families.is_empty() {
        return Err(Error::param("tensor product of no families"));
    }
    let spec = ProductSpec { factors: families.iter().map(|f| (**f.base()).clone()).collect(), p };
    let space = product_space(&spec)?;
    let indexer = ProductIndexer::new(families.iter().map(|f| f.size()).collect());
    let n = indexer.len();
    let tuples: Vec<Vec<usize>> = (0..n).map(|i| indexer.decode(i)).collect();
    let weights = Array2::from_shape_fn((n, n), |(a, b)| {
        families
            .iter()
            .enumerate()
            .map(|(k, f)| f.weight(tuples[a][k], tuples[b][k]))
            .product()
    });
    MeasureFamily::new(Arc::new(space), weights)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DilationComparison {
    pub l: f64,
    pub tensor: f64,
    pub product_of_factors: f64,
    /// `tensor <= product` up to the relative tolerance.
    pub submultiplicative: bool,
    /// `tensor = product` up to the relative tolerance.
    pub factorizes: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductReport {
    pub p: Exponent,
    pub points: usize,
    pub r_max: f64,
    pub factor_doubling: Vec<f64>,
    pub factor_consistency: Vec<f64>,
    pub factor_uniformity: Vec<f64>,
    pub tensor_doubling: f64,
    pub tensor_consistency: f64,
    /// `log2 D <= sum log2 D_i`.
    pub doubling_ok: bool,
    /// Only for `p = inf`.
    pub dilations: Vec<DilationComparison>,
    /// Max relative deviation of tensor ball masses from the product of
    /// factor ball masses over all centers and critical radii (`p = inf`).
    pub ball_mass_error: Option<f64>,
    /// `(prod K_i) (sum C_i^q)^{1/q}` with `q` conjugate to `p`.
    pub c_tilde: f64,
    /// `p = inf`: `C <= c_tilde`. Otherwise compares with `lifted_bound`.
    pub consistency_ok: bool,
    /// `p < inf`: `a (6/5) e^4 c_tilde` with `a = floor(log2 prod D_i) + 5`.
    pub lifted_bound: Option<f64>,
}

impl ProductReport {
    pub fn pass(&self) -> bool {
        self.doubling_ok
            && self.consistency_ok
            && self.dilations.iter().all(|d| d.submultiplicative)
            && self.ball_mass_error.map_or(true, |e| e <= 1e-12)
    }
}

fn leq(a: f64, b: f64) -> bool {
    a <= b * (1.0 + PRODUCT_TOL) + f64::MIN_POSITIVE
}

/// Compares the tensor family's constants with the factor calculus. Factor
/// consistency constants use the same `r_max` as the tensor (default: the
/// product diameter).
pub fn product_constant_checks(
    families: &[&MeasureFamily],
    p: Exponent,
    dilations: &[f64],
    r_max: Option<f64>,
) -> Result<ProductReport> {
    let tensor = tensor_family(families, p)?;
    let r_max = resolve_r_max(tensor.base(), r_max);
    let factor_doubling = families.iter().map(|f| family_doubling(f)).collect::<Result<Vec<_>>>()?;
    let factor_consistency =
        families.iter().map(|f| consistency(f, r_max)).collect::<Result<Vec<_>>>()?;
    let factor_uniformity: Vec<f64> = families.iter().map(|f| uniformity(f)).collect();
    let tensor_doubling = family_doubling(&tensor)?;
    let tensor_consistency = consistency(&tensor, r_max)?;
    let log_sum: f64 = factor_doubling.iter().map(|d| d.log2()).sum();
    let doubling_ok = tensor_doubling.log2() <= log_sum + PRODUCT_TOL * log_sum.abs().max(1.0);

    let k_prod: f64 = factor_uniformity.iter().product();
    let q = p.conjugate();
    let c_tilde = k_prod * q.combine(factor_consistency.iter().copied());

    let mut report = ProductReport {
        p,
        points: tensor.size(),
        r_max,
        factor_doubling,
        factor_consistency,
        factor_uniformity,
        tensor_doubling,
        tensor_consistency,
        doubling_ok,
        dilations: Vec::new(),
        ball_mass_error: None,
        c_tilde,
        consistency_ok: false,
        lifted_bound: None,
    };
    match p {
        Exponent::Infinity => {
            for &l in dilations {
                let t = dilation(&tensor, l)?;
                let prod = families.iter().map(|f| dilation(f, l)).product::<Result<f64>>()?;
                report.dilations.push(DilationComparison {
                    l,
                    tensor: t,
                    product_of_factors: prod,
                    submultiplicative: leq(t, prod),
                    factorizes: (t - prod).abs() <= PRODUCT_TOL * prod,
                });
            }
            report.ball_mass_error = Some(ball_mass_error(families, &tensor));
            report.consistency_ok = leq(tensor_consistency, c_tilde);
        }
        Exponent::Finite(_) => {
            let a = floor_log2(report.factor_doubling.iter().product())? + 5;
            let bound = a as f64 * DILATION_BOUND * c_tilde;
            report.lifted_bound = Some(bound);
            report.consistency_ok = leq(tensor_consistency, bound);
        }
    }
    Ok(report)
}

fn ball_mass_error(families: &[&MeasureFamily], tensor: &MeasureFamily) -> f64 {
    let indexer = ProductIndexer::new(families.iter().map(|f| f.size()).collect());
    let space = tensor.base();
    let mut worst: f64 = 0.0;
    for m in 0..tensor.size() {
        let parts = indexer.decode(m);
        for r in space.critical_radii(m) {
            let t = tensor.ball_mass(m, r);
            let prod: f64 = families.iter().zip(&parts).map(|(f, &i)| f.ball_mass(i, r)).product();
            worst = worst.max((t - prod).abs() / prod);
        }
    }
    worst
}

/// Dilation lemma on the lifted tensor family with
/// `a = floor(log2 prod D_i) + 5`.
pub fn certify_product_dilation(
    families: &[&MeasureFamily],
    p: Exponent,
    grid_size: usize,
) -> Result<LemmaCertificate> {
    let tensor = tensor_family(families, p)?;
    let d_prod: f64 = families.iter().map(|f| family_doubling(f)).product::<Result<f64>>()?;
    let a = (floor_log2(d_prod)? + 5).max(2);
    let lift = LiftedSpace::new(&tensor, a)?;
    let r_max = resolve_r_max(tensor.base(), None);
    let grid = default_radius_grid(&tensor, a, r_max, grid_size);
    certify_dilation(&lift, &grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::gen_path;
    use crate::metric::FiniteMetricSpace;
    use approx::assert_relative_eq;

    fn two_point(d: f64) -> Arc<FiniteMetricSpace> {
        Arc::new(FiniteMetricSpace::from_matrix(Array2::from_shape_vec((2, 2), vec![0.0, d, d, 0.0]).unwrap()).unwrap())
    }

    #[test]
    fn single_atoms_stay_single_atoms() {
        let a = MeasureFamily::counting(Arc::new(gen_path(1).unwrap()));
        let t = tensor_family(&[&a, &a], Exponent::Infinity).unwrap();
        assert_eq!(t.size(), 1);
        assert_eq!(t.weight(0, 0), 1.0);
        assert!(tensor_family(&[], Exponent::Infinity).is_err());
        assert!(tensor_family(&[&a], Exponent::Finite(0.5)).is_err());
    }

    #[test]
    fn counting_square_ball_mass() {
        let c = MeasureFamily::counting(Arc::new(gen_path(3).unwrap()));
        let t = tensor_family(&[&c, &c], Exponent::Infinity).unwrap();
        // center (1,1) is index 4
        assert_eq!(t.ball_mass(4, 1.5), 9.0);
        assert_eq!(t.ball_mass(4, 1.0), 1.0);
    }

    #[test]
    fn constant_factors() {
        let c = MeasureFamily::counting(Arc::new(gen_path(4).unwrap()));
        let r = product_constant_checks(&[&c, &c], Exponent::Infinity, &[1.5, 2.0], None).unwrap();
        assert_eq!(r.c_tilde, 0.0);
        assert_eq!(r.tensor_consistency, 0.0);
        assert!(r.pass());
    }

    #[test]
    fn counting_paths_factorize() {
        let a = MeasureFamily::counting(Arc::new(gen_path(5).unwrap()));
        let b = MeasureFamily::counting(Arc::new(gen_path(7).unwrap()));
        let r = product_constant_checks(&[&a, &b], Exponent::Infinity, &[1.1, 1.25, 1.5, 2.0], None).unwrap();
        assert!(r.dilations.iter().all(|d| d.factorizes), "{:#?}", r.dilations);
        assert!(r.ball_mass_error.unwrap() <= 1e-12);
        assert!(r.pass());
    }

    // Sups of the factors sit at different radii, so the product of the
    // factor dilations overshoots.
    #[test]
    fn dilation_is_only_submultiplicative_in_general() {
        let a = MeasureFamily::counting(two_point(1.0));
        let b = MeasureFamily::counting(two_point(10.0));
        let r = product_constant_checks(&[&a, &b], Exponent::Infinity, &[2.0], None).unwrap();
        let d = &r.dilations[0];
        assert_eq!(d.product_of_factors, 4.0);
        assert_eq!(d.tensor, 2.0);
        assert!(d.submultiplicative && !d.factorizes);
    }

    #[test]
    fn finite_p_doubling() {
        let c = MeasureFamily::counting(Arc::new(gen_path(3).unwrap()));
        for p in [1.0, 2.0] {
            let r = product_constant_checks(&[&c, &c], Exponent::Finite(p), &[], None).unwrap();
            assert!(r.tensor_doubling <= r.factor_doubling[0] * r.factor_doubling[1]);
            assert!(r.doubling_ok && r.lifted_bound.is_some());
        }
    }

    #[test]
    fn kernel_tensor_consistency() {
        let a = MeasureFamily::kernel(Arc::new(gen_path(4).unwrap()), 1.0).unwrap();
        let b = MeasureFamily::kernel(Arc::new(gen_path(3).unwrap()), 2.0).unwrap();
        let r = product_constant_checks(&[&a, &b], Exponent::Infinity, &[2.0], None).unwrap();
        assert!(r.tensor_consistency > 0.0);
        assert_relative_eq!(
            r.c_tilde,
            r.factor_uniformity[0] * r.factor_uniformity[1] * (r.factor_consistency[0] + r.factor_consistency[1])
        );
    }

    #[test]
    fn lifted_product_dilation() {
        let c = MeasureFamily::counting(Arc::new(gen_path(4).unwrap()));
        let cert = certify_product_dilation(&[&c, &c], Exponent::Infinity, 64).unwrap();
        assert!(cert.pass, "{cert:?}");
    }
}
