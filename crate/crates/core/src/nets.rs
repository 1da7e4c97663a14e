//! Maximal separated nets and the order of ball covers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::FiniteMetricSpace;

/// An `epsilon`-separated subset that is `epsilon`-dense in the space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Net {
    pub epsilon: f64,
    pub points: Vec<usize>,
}

impl Net {
    /// Distinct net points are at distance `>= epsilon`.
    pub fn is_separated(&self, space: &FiniteMetricSpace) -> bool {
        self.points.iter().enumerate().all(|(i, &a)| {
            self.points[i + 1..].iter().all(|&b| space.dist(a, b) >= self.epsilon)
        })
    }

    /// Every point is strictly closer than `epsilon` to some net point.
    pub fn is_dense(&self, space: &FiniteMetricSpace) -> bool {
        (0..space.size()).all(|m| self.points.iter().any(|&a| space.dist(m, a) < self.epsilon))
    }
}

/// Greedy maximal `epsilon`-separated net: scan points in index order and
/// admit a point iff it is at distance `>= epsilon` from everything admitted.
pub fn max_separated_net(space: &FiniteMetricSpace, epsilon: f64) -> Result<Net> {
    if !(epsilon > 0.0) {
        return Err(Error::param(format!("net scale must be positive, got {epsilon}")));
    }
    let mut points: Vec<usize> = Vec::new();
    for m in 0..space.size() {
        if points.iter().all(|&a| space.dist(m, a) >= epsilon) {
            points.push(m);
        }
    }
    Ok(Net { epsilon, points })
}

/// `max over m of #{a in centers : d(m, a) < radius(a)}`.
pub fn cover_order<F>(space: &FiniteMetricSpace, centers: &[usize], radius: F) -> Result<usize>
where
    F: Fn(usize) -> f64,
{
    if centers.is_empty() {
        return Err(Error::param("cover order of an empty family of balls"));
    }
    let radii: Vec<f64> = centers.iter().map(|&a| radius(a)).collect();
    Ok((0..space.size())
        .map(|m| centers.iter().zip(&radii).filter(|&(&a, &r)| space.dist(m, a) < r).count())
        .max()
        .unwrap_or(0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderBoundReport {
    pub epsilon: f64,
    pub dimension: usize,
    pub net_size: usize,
    pub order: usize,
    /// `(4 C0)^n0` with `C0 = 1` and `n0` the coordinate dimension.
    pub bound: u64,
    /// `24 n0 C0^2`, the quoted norm bound for the local extension operators
    /// on net balls. Reported only.
    pub local_extension_constant: f64,
    pub pass: bool,
}

/// Cover order of the balls `B_eps(a)` over a maximal `eps`-net of a
/// coordinate cloud, compared with `4^dim`.
pub fn check_order_bound(space: &FiniteMetricSpace, epsilon: f64) -> Result<OrderBoundReport> {
    let dimension = space
        .dimension()
        .ok_or_else(|| Error::param("cover order bound needs a space with coordinates"))?;
    let net = max_separated_net(space, epsilon)?;
    let order = cover_order(space, &net.points, |_| epsilon)?;
    let bound = 4u64.saturating_pow(dimension as u32);
    Ok(OrderBoundReport {
        epsilon,
        dimension,
        net_size: net.points.len(),
        order,
        bound,
        local_extension_constant: 24.0 * dimension as f64,
        pass: (order as u64) <= bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{gen_euclidean_cloud, gen_grid, gen_path};
    use proptest::prelude::*;

    #[test]
    fn greedy_trace_on_path() {
        let p = gen_path(3).unwrap();
        let net = max_separated_net(&p, 1.5).unwrap();
        assert_eq!(net.points, vec![0, 2]);
        assert!(net.is_separated(&p) && net.is_dense(&p));
    }

    #[test]
    fn extreme_scales() {
        let cloud = gen_euclidean_cloud(30, 2, 3).unwrap();
        let all = max_separated_net(&cloud, cloud.min_separation().unwrap()).unwrap();
        assert_eq!(all.points.len(), 30);
        let one = max_separated_net(&cloud, cloud.diameter() * 1.01).unwrap();
        assert_eq!(one.points, vec![0]);
        assert!(max_separated_net(&cloud, 0.0).is_err());
    }

    #[test]
    fn cover_orders() {
        let p = gen_path(3).unwrap();
        assert_eq!(cover_order(&p, &[1], |_| 0.5).unwrap(), 1);
        assert_eq!(cover_order(&p, &[0, 1, 2], |_| 1.5).unwrap(), 3);
        assert_eq!(cover_order(&p, &[0, 1, 2], |_| 0.5).unwrap(), 1);
        assert!(cover_order(&p, &[], |_| 1.0).is_err());
    }

    #[test]
    fn order_bound_on_grids() {
        let line = gen_path(40).unwrap();
        for eps in [0.5, 1.0, 1.5, 2.0, 3.7, 10.0] {
            let r = check_order_bound(&line, eps).unwrap();
            assert!(r.pass && r.order <= 4, "{r:?}");
        }
        let grid = gen_grid(8).unwrap();
        for eps in [0.9, 1.0, 1.42, 2.3, 4.0] {
            let r = check_order_bound(&grid, eps).unwrap();
            assert!(r.pass && r.order <= 16, "{r:?}");
        }
        let single = gen_path(1).unwrap();
        let r = check_order_bound(&single, 1.0).unwrap();
        assert_eq!(r.order, 1);
        assert!(r.pass);
    }

    #[test]
    fn greedy_nets_are_not_monotone_below_doubling() {
        // the central point 1 blocks both outer points at eps = 1 but not at 1.2
        let coords = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![1.5, 0.8], vec![1.5, -0.8]];
        let labels = (0..4).map(|i| i.to_string()).collect();
        let s = FiniteMetricSpace::from_coordinates(labels, coords).unwrap();
        assert_eq!(max_separated_net(&s, 1.0).unwrap().points, vec![0, 1]);
        assert_eq!(max_separated_net(&s, 1.2).unwrap().points, vec![0, 2, 3]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn nets_are_separated_dense_and_monotone(seed in 0u64..500, eps in 0.02f64..0.8, grow in 2.0f64..4.0) {
            let cloud = gen_euclidean_cloud(60, 2, seed).unwrap();
            let net = max_separated_net(&cloud, eps).unwrap();
            prop_assert!(net.is_separated(&cloud));
            prop_assert!(net.is_dense(&cloud));
            let coarse = max_separated_net(&cloud, eps * grow).unwrap();
            prop_assert!(coarse.points.len() <= net.points.len());
        }
    }
}
