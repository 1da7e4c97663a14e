#![allow(dead_code)]

use std::sync::Arc;

use lipext::corpus::{standard_corpus, Built, Instance};
use lipext::extension::ExtensionOperator;
use lipext::measures::MeasureFamily;
use lipext::FiniteMetricSpace;
use minilp::{ComparisonOp, OptimizationDirection, Problem};

/// Lifted ball mass via the layer-cake form
/// `beta_n * int_0^R mu(B_s) (R - s)^(n-1) ds`, integrated exactly on each
/// interval where the open-ball mass is constant.
pub fn lifted_mass_by_layers(family: &MeasureFamily, m: usize, n: usize, radius: f64) -> f64 {
    let space = family.base();
    let mut levels: Vec<(f64, f64)> = (0..space.size()).map(|x| (space.dist(m, x), family.weight(m, x))).collect();
    levels.sort_by(|a, b| a.0.total_cmp(&b.0));
    let gamma = (0..n).fold(1.0, |acc, k| acc * 2.0 / (k + 1) as f64);
    let mut total = 0.0;
    let mut mass = 0.0;
    let mut k = 0;
    while k < levels.len() && levels[k].0 < radius {
        let r = levels[k].0;
        while k < levels.len() && levels[k].0 == r {
            mass += levels[k].1;
            k += 1;
        }
        let next = if k < levels.len() { levels[k].0.min(radius) } else { radius };
        total += mass * ((radius - r).powi(n as i32) - (radius - next).powi(n as i32));
    }
    gamma * total
}

/// `max sum c_s f(s)` over `f` on the subspace with `|f(s) - f(t)| <= d(s, t)`
/// and `f(s_0) = 0`, every constraint written out.
pub fn lp_transport_value(sub: &FiniteMetricSpace, c: &[f64]) -> f64 {
    let k = sub.size();
    let mut p = Problem::new(OptimizationDirection::Maximize);
    let vars: Vec<_> = (0..k)
        .map(|s| if s == 0 { p.add_var(c[s], (0.0, 0.0)) } else { p.add_var(c[s], (f64::NEG_INFINITY, f64::INFINITY)) })
        .collect();
    for s in 0..k {
        for t in 0..k {
            if s != t {
                p.add_constraint([(vars[s], 1.0), (vars[t], -1.0)], ComparisonOp::Le, sub.dist(s, t));
            }
        }
    }
    p.solve().expect("transport LP is feasible and bounded").objective()
}

/// Brute-force norm: one LP per unordered pair of points of `M`.
pub fn lp_operator_norm(op: &ExtensionOperator) -> f64 {
    let space = op.space();
    let w = op.matrix();
    let n = space.size();
    let mut best: f64 = 0.0;
    for m in 0..n {
        for mp in m + 1..n {
            let c: Vec<f64> = w.row(m).iter().zip(w.row(mp)).map(|(a, b)| a - b).collect();
            best = best.max(lp_transport_value(op.subspace(), &c) / space.dist(m, mp));
        }
    }
    best
}

/// Plain double loop, no shortcuts.
pub fn lipschitz(space: &FiniteMetricSpace, points: &[usize], f: &[f64]) -> f64 {
    let mut l: f64 = 0.0;
    for (i, &a) in points.iter().enumerate() {
        for (j, &b) in points.iter().enumerate().skip(i + 1) {
            l = l.max((f[i] - f[j]).abs() / space.dist(a, b));
        }
    }
    l
}

pub fn corpus(count: usize, max_points: usize, seed: u64) -> Vec<(Instance, Built)> {
    standard_corpus(count, max_points, seed)
        .into_iter()
        .map(|inst| {
            let built = inst.build().unwrap_or_else(|e| panic!("{}: {e}", inst.name()));
            (inst, built)
        })
        .collect()
}

pub fn counting_path(n: usize) -> Arc<MeasureFamily> {
    Arc::new(MeasureFamily::counting(Arc::new(lipext::generators::gen_path(n).unwrap())))
}
