//! Kantorovich-Rubinstein norms of balanced chains `sum a_i delta(m_i)`.
//!
//! The primal is a transportation problem from the positive to the negative
//! part, solved by successive shortest paths with node potentials. The dual
//! `max sum a_i f(m_i)` over 1-Lipschitz `f` with `f(m*) = 0` is solved as a
//! generic linear program and serves as the independent check.

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::FiniteMetricSpace;

/// Relative tolerance on the coefficient sum of a chain.
pub const BALANCE_TOL: f64 = 1e-12;

/// A balanced element of the free space over a fixed metric space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalancedChain {
    coefficients: Vec<f64>,
}

impl BalancedChain {
    pub fn new(space: &FiniteMetricSpace, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() != space.size() {
            return Err(Error::param(format!(
                "chain has {} coefficients for a space of {} points",
                coefficients.len(),
                space.size()
            )));
        }
        if coefficients.iter().any(|a| !a.is_finite()) {
            return Err(Error::param("chain coefficients must be finite"));
        }
        let sum: f64 = coefficients.iter().sum();
        let l1: f64 = coefficients.iter().map(|a| a.abs()).sum();
        if sum.abs() > BALANCE_TOL * l1 {
            return Err(Error::param(format!("chain is unbalanced: coefficient sum {sum:e}")));
        }
        Ok(Self { coefficients })
    }

    /// `delta(a) - delta(b)`.
    pub fn dipole(space: &FiniteMetricSpace, a: usize, b: usize) -> Result<Self> {
        let mut c = vec![0.0; space.size()];
        c[a] += 1.0;
        c[b] -= 1.0;
        Self::new(space, c)
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn is_zero(&self) -> bool {
        self.coefficients.iter().all(|&a| a == 0.0)
    }
}

/// Transport witness: `flows[i][j]` moves mass from `sources[i]` to `sinks[j]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    pub sources: Vec<usize>,
    pub sinks: Vec<usize>,
    pub flows: Array2<f64>,
    pub cost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KrSolution {
    pub value: f64,
    pub plan: TransportPlan,
}

/// Minimum transport cost between the positive and negative parts.
pub fn kr_norm(space: &FiniteMetricSpace, chain: &BalancedChain) -> Result<KrSolution> {
    check_len(space, chain)?;
    let a = chain.coefficients();
    let sources: Vec<usize> = (0..a.len()).filter(|&i| a[i] > 0.0).collect();
    let sinks: Vec<usize> = (0..a.len()).filter(|&i| a[i] < 0.0).collect();
    let supply: Vec<f64> = sources.iter().map(|&i| a[i]).collect();
    let demand: Vec<f64> = sinks.iter().map(|&j| -a[j]).collect();
    let cost = Array2::from_shape_fn((sources.len(), sinks.len()), |(i, j)| {
        space.dist(sources[i], sinks[j])
    });
    let flows = transport(&supply, &demand, &cost)?;
    let total = (&flows * &cost).sum();
    Ok(KrSolution { value: total, plan: TransportPlan { sources, sinks, flows, cost: total } })
}

fn check_len(space: &FiniteMetricSpace, chain: &BalancedChain) -> Result<()> {
    if chain.coefficients().len() != space.size() {
        return Err(Error::param("chain does not belong to this space"));
    }
    Ok(())
}

/// Balanced transportation problem by successive shortest paths.
///
/// Nodes: 0 is the super source, `1..=p` sources, `p+1..=p+q` sinks. Paths
/// end at any sink with residual demand. Reverse edges of the super source
/// are never needed: once every supply is used up, cycles through it cannot
/// exist, and the potentials keep every bipartite residual edge at
/// nonnegative reduced cost.
fn transport(supply: &[f64], demand: &[f64], cost: &Array2<f64>) -> Result<Array2<f64>> {
    let (p, q) = (supply.len(), demand.len());
    let mut flows = Array2::<f64>::zeros((p, q));
    if p == 0 || q == 0 {
        return Ok(flows);
    }
    let total: f64 = supply.iter().sum();
    let tol = 1e-14 * total;
    let mut supply = supply.to_vec();
    let mut demand = demand.to_vec();
    let nodes = 1 + p + q;
    let mut pot = vec![0.0f64; nodes];
    let mut dist = vec![0.0f64; nodes];
    let mut prev = vec![usize::MAX; nodes];
    let mut done = vec![false; nodes];
    let mut remaining = total;
    let max_rounds = 16 * (p + q) * (p + q) + 64;
    for _ in 0..max_rounds {
        if remaining <= tol {
            return Ok(flows);
        }
        dist.fill(f64::INFINITY);
        prev.fill(usize::MAX);
        done.fill(false);
        dist[0] = 0.0;
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for v in 0..nodes {
                if !done[v] && dist[v] < best {
                    best = dist[v];
                    u = v;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            let mut relax = |v: usize, c: f64| {
                let reduced = (c + pot[u] - pot[v]).max(0.0);
                if dist[u] + reduced < dist[v] {
                    dist[v] = dist[u] + reduced;
                    prev[v] = u;
                }
            };
            if u == 0 {
                for (i, &s) in supply.iter().enumerate().take(p) {
                    if s > tol {
                        relax(1 + i, 0.0);
                    }
                }
            } else if u <= p {
                let i = u - 1;
                for j in 0..q {
                    relax(1 + p + j, cost[[i, j]]);
                }
            } else {
                let j = u - 1 - p;
                for i in 0..p {
                    if flows[[i, j]] > tol {
                        relax(1 + i, -cost[[i, j]]);
                    }
                }
            }
        }
        let target = (0..q)
            .filter(|&j| demand[j] > tol && dist[1 + p + j].is_finite())
            .min_by(|&a, &b| dist[1 + p + a].total_cmp(&dist[1 + p + b]))
            .ok_or_else(|| Error::Solver("no augmenting path in transport problem".into()))?;
        let t = 1 + p + target;
        let dt = dist[t];
        for v in 0..nodes {
            pot[v] += dist[v].min(dt);
        }
        // bottleneck along the path
        let mut amount = demand[target];
        let mut v = t;
        while prev[v] != 0 {
            let u = prev[v];
            if u > p {
                // reverse edge sink u -> source v
                amount = amount.min(flows[[v - 1, u - 1 - p]]);
            }
            v = u;
        }
        amount = amount.min(supply[v - 1]);
        let mut v = t;
        while prev[v] != 0 {
            let u = prev[v];
            if u > p {
                flows[[v - 1, u - 1 - p]] -= amount;
            } else {
                flows[[u - 1, v - 1 - p]] += amount;
            }
            v = u;
        }
        supply[v - 1] -= amount;
        demand[target] -= amount;
        remaining -= amount;
    }
    Err(Error::Solver("transport problem did not converge".into()))
}

/// Dual optimum with a norm-attaining 1-Lipschitz function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KrDual {
    pub value: f64,
    pub basepoint: usize,
    /// Defined on every point, 1-Lipschitz, zero at the basepoint.
    pub extremal: Vec<f64>,
}

/// `max sum a_i f(m_i)` over `f` with `f(x) - f(y) <= d(x, y)` and
/// `f(basepoint) = 0`.
///
/// The program is posed on the support of the chain only; the optimum is then
/// extended to the whole space by the McShane formula, which keeps it
/// 1-Lipschitz without changing its values on the support, and shifted to
/// vanish at the basepoint. Balance makes the shift invisible to the value.
pub fn kr_norm_dual(space: &FiniteMetricSpace, chain: &BalancedChain, basepoint: usize) -> Result<KrDual> {
    check_len(space, chain)?;
    if basepoint >= space.size() {
        return Err(Error::param(format!("basepoint {basepoint} out of range")));
    }
    let a = chain.coefficients();
    let support: Vec<usize> = (0..a.len()).filter(|&i| a[i] != 0.0).collect();
    if support.is_empty() {
        return Ok(KrDual { value: 0.0, basepoint, extremal: vec![0.0; space.size()] });
    }
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let vars: Vec<_> = support
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            let bounds = if k == 0 { (0.0, 0.0) } else { (f64::NEG_INFINITY, f64::INFINITY) };
            lp.add_var(a[i], bounds)
        })
        .collect();
    for (x, &i) in support.iter().enumerate() {
        for (y, &j) in support.iter().enumerate() {
            if x != y {
                lp.add_constraint([(vars[x], 1.0), (vars[y], -1.0)], ComparisonOp::Le, space.dist(i, j));
            }
        }
    }
    let solution = lp.solve().map_err(|e| Error::Solver(format!("dual program: {e}")))?;
    let on_support: Vec<f64> = vars.iter().map(|&v| *solution.var_value(v)).collect();
    let extend = |m: usize| {
        support
            .iter()
            .zip(&on_support)
            .map(|(&t, &ft)| ft + space.dist(m, t))
            .fold(f64::INFINITY, f64::min)
    };
    let mut extremal: Vec<f64> = (0..space.size()).map(extend).collect();
    let shift = extremal[basepoint];
    extremal.iter_mut().for_each(|v| *v -= shift);
    let value = a.iter().zip(&extremal).map(|(ai, fi)| ai * fi).sum();
    Ok(KrDual { value, basepoint, extremal })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaIsometryReport {
    pub pairs: usize,
    pub max_abs_error: f64,
    pub pass: bool,
}

/// Checks `||delta(a) - delta(b)|| = d(a, b)` for every pair to 1e-9.
pub fn delta_isometry_check(space: &FiniteMetricSpace) -> Result<DeltaIsometryReport> {
    let n = space.size();
    let mut max_abs_error: f64 = 0.0;
    let mut pairs = 0;
    for a in 0..n {
        for b in a + 1..n {
            let v = kr_norm(space, &BalancedChain::dipole(space, a, b)?)?.value;
            max_abs_error = max_abs_error.max((v - space.dist(a, b)).abs());
            pairs += 1;
        }
    }
    Ok(DeltaIsometryReport { pairs, max_abs_error, pass: max_abs_error <= 1e-9 })
}
