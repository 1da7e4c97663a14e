//! The lifted space `M_n = M x l1^n` with measures `mu_m ⊗ lambda_n`.
//!
//! The lifted space is never materialized. For an atomic base measure the
//! lifted ball mass has the closed radial form
//!
//! ```text
//! mu~(B_R(m~)) = gamma_n * sum_{x : d(m,x) < R} w_m(x) (R - d(m,x))^n
//! ```
//!
//! which depends only on the base center and `R`. The three lifting lemmas
//! (dilation at scale `1 + 1/n`, consistency, radial regularity) are
//! certified by evaluating their ratios on finite radius grids. A grid sup is
//! a lower bound on the true sup, so a pass means no counterexample was found.

use std::f64::consts::E;

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{consistency, family_doubling, resolve_r_max, MeasureFamily};

/// `(6/5) e^4`, the dilation bound at scale `1 + 1/n`.
pub const DILATION_BOUND: f64 = 1.2 * E * E * E * E;

/// `1 + 4e/3`, the per-dimension consistency factor.
pub const CONSISTENCY_FACTOR: f64 = 1.0 + 4.0 * E / 3.0;

/// Default number of geometric grid samples.
pub const DEFAULT_GRID_SIZE: usize = 512;

/// Floor of `log2 d` for `d >= 1`, robust at exact powers of two.
pub fn floor_log2(d: f64) -> Result<usize> {
    if !(d >= 1.0) || !d.is_finite() {
        return Err(Error::param(format!("doubling constant must be a finite value >= 1, got {d}")));
    }
    let mut k = d.log2().floor() as usize;
    // correct for log2 rounding just below an integer
    while 2f64.powi(k as i32 + 1) <= d {
        k += 1;
    }
    while k > 0 && 2f64.powi(k as i32) > d {
        k -= 1;
    }
    Ok(k)
}

/// Lifting dimension `floor(log2 D) + 6`.
pub fn choose_n(doubling: f64) -> Result<usize> {
    Ok(floor_log2(doubling)? + 6)
}

/// Volume of the unit `l1^n` ball, `2^n / n!`.
pub fn cross_polytope_volume(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * 2.0 / k as f64)
}

/// `A_n = (6/5) e^4 n`.
pub fn radial_regularity_bound(n: usize) -> f64 {
    DILATION_BOUND * n as f64
}

/// `(1 + 4e/3) n C`.
pub fn lifted_consistency_bound(n: usize, base_consistency: f64) -> f64 {
    CONSISTENCY_FACTOR * n as f64 * base_consistency
}

/// A base family lifted to `M x l1^n`.
#[derive(Clone, Debug)]
pub struct LiftedSpace<'a> {
    family: &'a MeasureFamily,
    n: usize,
    gamma_n: f64,
    base_doubling: f64,
}

impl<'a> LiftedSpace<'a> {
    pub fn new(family: &'a MeasureFamily, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::param(format!("lifting dimension must be >= 2, got {n}")));
        }
        Ok(Self { family, n, gamma_n: cross_polytope_volume(n), base_doubling: family_doubling(family)? })
    }

    /// Lift with `n = floor(log2 D) + 6`.
    pub fn with_default_dimension(family: &'a MeasureFamily) -> Result<Self> {
        let n = choose_n(family_doubling(family)?)?;
        Self::new(family, n)
    }

    pub fn family(&self) -> &MeasureFamily {
        self.family
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn gamma_n(&self) -> f64 {
        self.gamma_n
    }

    /// Surface normalization `beta_n = n gamma_n`.
    pub fn beta_n(&self) -> f64 {
        self.n as f64 * self.gamma_n
    }

    pub fn base_doubling(&self) -> f64 {
        self.base_doubling
    }

    /// `mu~_m(B_R(m~))`, independent of the `R^n` coordinate of `m~`.
    pub fn ball_mass(&self, m: usize, radius: f64) -> f64 {
        let space = self.family.base();
        let mut acc = 0.0;
        for (&x, &d) in space.neighbors(m).iter().zip(space.sorted_dists(m)) {
            if d >= radius {
                break;
            }
            acc += self.family.weight(m, x) * (radius - d).powi(self.n as i32);
        }
        self.gamma_n * acc
    }

    /// `|mu~_a - mu~_b|(B_R(c~))` with `c = a` (`center_first`) or `c = b`.
    /// The Lebesgue factor is shared, so the total variation factorizes.
    pub fn tv_ball(&self, a: usize, b: usize, center_first: bool, radius: f64) -> f64 {
        let space = self.family.base();
        let c = if center_first { a } else { b };
        let mut acc = 0.0;
        for (&x, &d) in space.neighbors(c).iter().zip(space.sorted_dists(c)) {
            if d >= radius {
                break;
            }
            let diff = (self.family.weight(a, x) - self.family.weight(b, x)).abs();
            acc += diff * (radius - d).powi(self.n as i32);
        }
        self.gamma_n * acc
    }

    fn require_dimension(&self, extra: usize, lemma: &str) -> Result<usize> {
        let need = floor_log2(self.base_doubling)? + extra;
        if self.n < need {
            return Err(Error::PremiseViolation(format!(
                "{lemma} needs n >= floor(log2 D) + {extra} = {need} (D = {}), got n = {}",
                self.base_doubling, self.n
            )));
        }
        Ok(need)
    }
}

/// Outcome of one lemma certification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaCertificate {
    pub lemma: String,
    pub n: usize,
    pub premise_n_min: usize,
    pub sup_found: f64,
    pub bound: f64,
    pub margin: f64,
    pub pass: bool,
    pub samples: usize,
    /// Center and radius (or radius pair) where the sup was found.
    pub witness_center: usize,
    pub witness_radius: f64,
}

impl LemmaCertificate {
    fn new(lemma: &str, n: usize, premise: usize, best: Best, bound: f64, samples: usize) -> Self {
        Self {
            lemma: lemma.to_owned(),
            n,
            premise_n_min: premise,
            sup_found: best.value,
            bound,
            margin: bound - best.value,
            pass: best.value <= bound * (1.0 + 1e-12),
            samples,
            witness_center: best.center,
            witness_radius: best.radius,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Best {
    value: f64,
    center: usize,
    radius: f64,
}

impl Best {
    const ZERO: Best = Best { value: 0.0, center: 0, radius: 0.0 };

    fn max(self, other: Best) -> Best {
        // ties resolved toward the smaller (center, radius) for determinism
        if other.value > self.value
            || (other.value == self.value && (other.center, other.radius) < (self.center, self.radius))
        {
            other
        } else {
            self
        }
    }
}

/// Sorted, deduplicated radius grid: `size` geometric samples spanning
/// `[min separation / 16, 2 * max(diameter, r_max)]` plus the base's distinct
/// distances `r` and the points `r / (1 + 1/n)` where dilated balls cross them.
/// When there are more distinct distances than `size`, an evenly spaced
/// subset is used.
pub fn default_radius_grid(family: &MeasureFamily, n: usize, r_max: f64, size: usize) -> Vec<f64> {
    let space = family.base();
    let top = 2.0 * space.diameter().max(r_max).max(f64::MIN_POSITIVE);
    let bottom = space.min_separation().unwrap_or(top / 4.0) / 16.0;
    let size = size.max(2);
    let mut grid: Vec<f64> = (0..size)
        .map(|i| bottom * (top / bottom).powf(i as f64 / (size - 1) as f64))
        .collect();
    let mut critical = space.distinct_distances();
    if critical.len() > size {
        let step = critical.len() as f64 / size as f64;
        critical = (0..size).map(|i| critical[(i as f64 * step) as usize]).collect();
    }
    let l = 1.0 + 1.0 / n as f64;
    for r in critical {
        grid.extend([r, r * (1.0 + 1e-9), r / l, r / l * (1.0 + 1e-9)]);
    }
    grid.retain(|r| *r > 0.0 && r.is_finite());
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// Sup over centers and grid radii of `mu~(B_{(1+1/n)R}) / mu~(B_R)`, against
/// `(6/5) e^4`. Needs `n >= floor(log2 D) + 5`.
pub fn certify_dilation(lift: &LiftedSpace<'_>, grid: &[f64]) -> Result<LemmaCertificate> {
    let premise = lift.require_dimension(5, "dilation lemma")?;
    let l = 1.0 + 1.0 / lift.n as f64;
    let best = (0..lift.family.size())
        .into_par_iter()
        .map(|m| {
            grid.iter().fold(Best::ZERO, |best, &r| {
                let v = lift.ball_mass(m, l * r) / lift.ball_mass(m, r);
                best.max(Best { value: v, center: m, radius: r })
            })
        })
        .reduce(|| Best::ZERO, Best::max);
    let samples = grid.len() * lift.family.size();
    Ok(LemmaCertificate::new("dilation", lift.n, premise, best, DILATION_BOUND, samples))
}

/// Sup over ordered pairs `a != b` (center `a`, which covers both center
/// choices) and grid radii `R <= r_max` of
/// `|mu~_a - mu~_b|(B_R) * R / (mu~_a(B_R) * d(a, b))`, against
/// `(1 + 4e/3) n C` with `C` the base consistency on `(0, r_max]`.
pub fn certify_consistency(
    lift: &LiftedSpace<'_>,
    grid: &[f64],
    r_max: f64,
) -> Result<LemmaCertificate> {
    let premise = lift.require_dimension(5, "consistency lemma")?;
    let base_c = consistency(lift.family, r_max)?;
    let bound = lifted_consistency_bound(lift.n, base_c);
    let family = lift.family;
    let space = family.base();
    let size = space.size();
    let radii: Vec<f64> = grid.iter().copied().filter(|&r| r <= r_max).collect();
    let power = lift.n as i32;
    let w = family.weights();
    // per center: kernel[k, j] = (R_j - d(a, x_k))^n on the ball, and the
    // total variations for every b at once as delta . kernel
    let best = (0..size)
        .into_par_iter()
        .map(|a| {
            let order = space.neighbors(a);
            let dists = space.sorted_dists(a);
            let kernel = Array2::from_shape_fn((size, radii.len()), |(k, j)| {
                if dists[k] < radii[j] {
                    (radii[j] - dists[k]).powi(power)
                } else {
                    0.0
                }
            });
            let own = Array1::from_iter(order.iter().map(|&x| w[[a, x]]));
            let mass = own.dot(&kernel);
            let delta = Array2::from_shape_fn((size, size), |(b, k)| (w[[a, order[k]]] - w[[b, order[k]]]).abs());
            let tv = delta.dot(&kernel);
            let mut best = Best::ZERO;
            for (j, &r) in radii.iter().enumerate() {
                for b in (0..size).filter(|&b| b != a) {
                    let v = tv[[b, j]] * r / (mass[j] * space.dist(a, b));
                    best = best.max(Best { value: v, center: a, radius: r });
                }
            }
            best
        })
        .reduce(|| Best::ZERO, Best::max);
    let samples = radii.len() * size * size.saturating_sub(1);
    Ok(LemmaCertificate::new("consistency", lift.n, premise, best, bound, samples))
}

/// Sup over centers and radius pairs `R1 < R2` of
/// `(mu~(B_{R2}) - mu~(B_{R1})) R2 / (mu~(B_{R2}) (R2 - R1))` against
/// `A_n = (6/5) e^4 n`. Pairs are all grid pairs plus `(R, R (1 + 1e-7))`
/// for each grid radius. Needs `n >= floor(log2 D) + 6`.
pub fn certify_radial_regularity(lift: &LiftedSpace<'_>, grid: &[f64]) -> Result<LemmaCertificate> {
    let premise = lift.require_dimension(6, "radial regularity lemma")?;
    let bound = radial_regularity_bound(lift.n);
    let best = (0..lift.family.size())
        .into_par_iter()
        .map(|m| {
            let masses: Vec<f64> = grid.iter().map(|&r| lift.ball_mass(m, r)).collect();
            let mut best = Best::ZERO;
            for j in 0..grid.len() {
                for i in 0..j {
                    let (r1, r2) = (grid[i], grid[j]);
                    if r1 >= r2 {
                        continue;
                    }
                    let v = (masses[j] - masses[i]) * r2 / (masses[j] * (r2 - r1));
                    best = best.max(Best { value: v, center: m, radius: r2 });
                }
                let r2 = grid[j] * (1.0 + 1e-7);
                let m2 = lift.ball_mass(m, r2);
                let v = (m2 - masses[j]) * r2 / (m2 * (r2 - grid[j]));
                best = best.max(Best { value: v, center: m, radius: r2 });
            }
            best
        })
        .reduce(|| Best::ZERO, Best::max);
    let samples = lift.family.size() * grid.len() * (grid.len() + 1) / 2;
    Ok(LemmaCertificate::new("radial_regularity", lift.n, premise, best, bound, samples))
}

/// All three certificates for one family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiftReport {
    pub n: usize,
    pub base_doubling: f64,
    pub base_consistency: f64,
    pub r_max: f64,
    pub grid_size: usize,
    pub certificates: Vec<LemmaCertificate>,
}

impl LiftReport {
    pub fn all_pass(&self) -> bool {
        self.certificates.iter().all(|c| c.pass)
    }
}

/// Runs every lemma certification with `n` defaulting to
/// `floor(log2 D) + 6` and `r_max` to the base diameter.
pub fn certify_all(
    family: &MeasureFamily,
    n: Option<usize>,
    r_max: Option<f64>,
    grid_size: usize,
) -> Result<LiftReport> {
    let lift = match n {
        Some(n) => LiftedSpace::new(family, n)?,
        None => LiftedSpace::with_default_dimension(family)?,
    };
    let r_max = resolve_r_max(family.base(), r_max);
    let grid = default_radius_grid(family, lift.n, r_max, grid_size);
    let certificates = vec![
        certify_dilation(&lift, &grid)?,
        certify_consistency(&lift, &grid, r_max)?,
        certify_radial_regularity(&lift, &grid)?,
    ];
    Ok(LiftReport {
        n: lift.n,
        base_doubling: lift.base_doubling,
        base_consistency: consistency(family, r_max)?,
        r_max,
        grid_size: grid.len(),
        certificates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::gen_path;
    use crate::metric::FiniteMetricSpace;
    use approx::assert_relative_eq;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use std::sync::Arc;

    fn single_atom() -> MeasureFamily {
        MeasureFamily::counting(Arc::new(gen_path(1).unwrap()))
    }

    #[test]
    fn choose_n_values() {
        assert_eq!(choose_n(1.0).unwrap(), 6);
        assert_eq!(choose_n(16.0).unwrap(), 10);
        assert_eq!(choose_n(20.0).unwrap(), 10);
        assert_eq!(choose_n(15.999).unwrap(), 9);
        assert!(choose_n(0.5).is_err());
    }

    #[test]
    fn cross_polytope_volumes_against_monte_carlo() {
        assert_eq!(cross_polytope_volume(1), 2.0);
        assert_relative_eq!(cross_polytope_volume(2), 2.0, max_relative = 1e-15);
        assert_relative_eq!(cross_polytope_volume(3), 4.0 / 3.0, max_relative = 1e-15);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for (n, tol) in [(2usize, 0.02), (3, 0.02)] {
            let trials = 400_000;
            let hits = (0..trials)
                .filter(|_| (0..n).map(|_| rng.gen_range(-1.0f64..1.0).abs()).sum::<f64>() < 1.0)
                .count();
            let estimate = 2f64.powi(n as i32) * hits as f64 / trials as f64;
            assert_relative_eq!(estimate, cross_polytope_volume(n), max_relative = tol);
        }
    }

    #[test]
    fn single_atom_mass_is_a_cross_polytope() {
        let f = single_atom();
        let lift = LiftedSpace::new(&f, 4).unwrap();
        assert_relative_eq!(lift.ball_mass(0, 1.7), cross_polytope_volume(4) * 1.7f64.powi(4));
        assert_eq!(lift.beta_n(), 4.0 * lift.gamma_n());
    }

    #[test]
    fn path_masses() {
        let f = MeasureFamily::counting(Arc::new(gen_path(3).unwrap()));
        let lift = LiftedSpace::new(&f, 2).unwrap();
        assert_relative_eq!(lift.ball_mass(1, 1.0), 2.0, max_relative = 1e-15);
        assert_relative_eq!(lift.ball_mass(1, 1.5), 5.5, max_relative = 1e-15);
    }

    #[test]
    fn tv_ball_examples() {
        let f = MeasureFamily::dirac(Arc::new(gen_path(3).unwrap()));
        let lift = LiftedSpace::new(&f, 2).unwrap();
        // center 1, R = 1: only x = 1 in the ball, |w0(1) - w1(1)| = 1
        assert_relative_eq!(lift.tv_ball(0, 1, false, 1.0), 2.0, max_relative = 1e-15);
        assert_eq!(lift.tv_ball(2, 2, true, 1.3), 0.0);
        let c = MeasureFamily::counting(Arc::new(gen_path(3).unwrap()));
        let lift = LiftedSpace::new(&c, 3).unwrap();
        assert_eq!(lift.tv_ball(0, 2, true, 5.0), 0.0);
    }

    #[test]
    fn single_atom_certificates() {
        let f = single_atom();
        let lift = LiftedSpace::new(&f, 5).unwrap();
        let grid = default_radius_grid(&f, 5, 1.0, 64);
        let dil = certify_dilation(&lift, &grid).unwrap();
        // (1 + 1/n)^n for n = 5
        assert_relative_eq!(dil.sup_found, 1.2f64.powi(5), max_relative = 1e-12);
        assert!(dil.pass);
        let lift = LiftedSpace::new(&f, 6).unwrap();
        let reg = certify_radial_regularity(&lift, &grid).unwrap();
        assert!(reg.sup_found <= 6.0 + 1e-6 && reg.pass, "{reg:?}");
        let cons = certify_consistency(&lift, &grid, 1.0).unwrap();
        assert_eq!(cons.sup_found, 0.0);
        assert!(cons.pass);
    }

    #[test]
    fn premise_violations() {
        // D = 16 needs n >= 9 for the dilation lemma
        let n = 16;
        let space = Arc::new(
            FiniteMetricSpace::from_matrix(Array2::from_shape_fn((n, n), |(i, j)| {
                if i == j {
                    0.0
                } else {
                    1.0
                }
            }))
            .unwrap(),
        );
        let f = MeasureFamily::counting(space);
        assert_eq!(family_doubling(&f).unwrap(), 16.0);
        let lift = LiftedSpace::new(&f, 2).unwrap();
        let grid = default_radius_grid(&f, 2, 1.0, 16);
        assert!(matches!(certify_dilation(&lift, &grid), Err(Error::PremiseViolation(_))));
        assert!(matches!(certify_radial_regularity(&lift, &grid), Err(Error::PremiseViolation(_))));
        assert!(LiftedSpace::new(&f, 1).is_err());
    }

    #[test]
    fn p8_counting_certifies() {
        let f = MeasureFamily::counting(Arc::new(gen_path(8).unwrap()));
        let report = certify_all(&f, None, None, 128).unwrap();
        assert_eq!(report.n, choose_n(3.0).unwrap());
        assert!(report.all_pass(), "{report:#?}");
    }

    #[test]
    fn dirac_on_p3_consistency_certifies() {
        let f = MeasureFamily::dirac(Arc::new(gen_path(3).unwrap()));
        let report = certify_all(&f, Some(6), None, 128).unwrap();
        assert!(report.base_consistency > 0.0);
        assert!(report.all_pass(), "{report:#?}");
    }

    #[test]
    fn lifted_mass_is_monotone() {
        let f = MeasureFamily::kernel(Arc::new(gen_path(6).unwrap()), 1.5).unwrap();
        let lift = LiftedSpace::new(&f, 7).unwrap();
        for m in 0..6 {
            let mut prev = 0.0;
            for i in 1..2000 {
                let r = i as f64 * 0.004;
                let v = lift.ball_mass(m, r);
                assert!(v > prev);
                prev = v;
            }
        }
    }

    #[test]
    fn bounds_have_quoted_values() {
        assert_relative_eq!(DILATION_BOUND, 65.5178, max_relative = 1e-5);
        assert_relative_eq!(CONSISTENCY_FACTOR, 4.62438, max_relative = 1e-5);
        assert_relative_eq!(radial_regularity_bound(6), 393.107, max_relative = 1e-5);
    }
}
