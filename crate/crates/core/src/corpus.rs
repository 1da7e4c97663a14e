//! Test corpora of (space, family, subset) instances and parallel sweeps
//! producing one bound-report row per instance.

use std::sync::Arc;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extension::bound_report;
use crate::generators::{GeneratorKind, GeneratorSpec};
use crate::measures::{FamilySpec, MeasureFamily};
use crate::metric::FiniteMetricSpace;
use crate::nets::max_separated_net;

/// How the subset `S` is chosen on a built space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum SubsetRule {
    All,
    Explicit { points: Vec<usize> },
    /// `max(1, round(fraction * |M|))` points sampled without replacement.
    Random { fraction: f64, seed: u64 },
    /// Greedy net at scale `fraction * diameter`.
    Net { fraction: f64 },
}

impl SubsetRule {
    pub fn select(&self, space: &FiniteMetricSpace) -> Result<Vec<usize>> {
        let n = space.size();
        match self {
            SubsetRule::All => Ok((0..n).collect()),
            SubsetRule::Explicit { points } => Ok(points.clone()),
            SubsetRule::Random { fraction, seed } => {
                if !(*fraction > 0.0 && *fraction <= 1.0) {
                    return Err(Error::param(format!("subset fraction must be in (0, 1], got {fraction}")));
                }
                let k = ((fraction * n as f64).round() as usize).clamp(1, n);
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let mut s = sample(&mut rng, n, k).into_vec();
                s.sort_unstable();
                Ok(s)
            }
            SubsetRule::Net { fraction } => {
                let eps = fraction * space.diameter();
                if !(eps > 0.0) {
                    return Ok(vec![0]);
                }
                Ok(max_separated_net(space, eps)?.points)
            }
        }
    }

    pub fn name(&self) -> String {
        match self {
            SubsetRule::All => "all".into(),
            SubsetRule::Explicit { points } => format!("explicit{}", points.len()),
            SubsetRule::Random { fraction, seed } => format!("random{fraction}s{seed}"),
            SubsetRule::Net { fraction } => format!("net{fraction}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: usize,
    pub space: GeneratorSpec,
    pub family: FamilySpec,
    pub subset: SubsetRule,
}

/// A built instance.
#[derive(Clone, Debug)]
pub struct Built {
    pub family: Arc<MeasureFamily>,
    pub subset: Vec<usize>,
}

impl Instance {
    pub fn name(&self) -> String {
        format!("{}/{}/{}", self.space.name(), self.family.name(), self.subset.name())
    }

    pub fn build(&self) -> Result<Built> {
        let space = Arc::new(self.space.build()?);
        let subset = self.subset.select(&space)?;
        let family = Arc::new(self.family.build(space)?);
        Ok(Built { family, subset })
    }
}

/// Sweep input file body.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub instances: Vec<Instance>,
    #[serde(default)]
    pub r_max: Option<f64>,
}

/// `count` instances cycling through paths, grids, trees, Euclidean clouds
/// and hyperbolic clouds with at most `max_points` points, counting / Dirac /
/// kernel families, and random or net subsets. Deterministic in `seed`.
pub fn standard_corpus(count: usize, max_points: usize, seed: u64) -> Vec<Instance> {
    let max_points = max_points.max(4);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|id| {
            let n = rng.gen_range(4..=max_points);
            let kind = match id % 5 {
                0 => GeneratorKind::Path { n },
                1 => {
                    let k_max = (max_points as f64).sqrt().floor() as usize;
                    GeneratorKind::Grid { k: rng.gen_range(2..=k_max.max(2)) }
                }
                2 => {
                    let branching = rng.gen_range(2..=4usize);
                    let mut depth = 1;
                    while tree_size(branching, depth + 1) <= max_points && depth < 6 {
                        depth += 1;
                    }
                    GeneratorKind::Tree { branching, depth: rng.gen_range(1..=depth) }
                }
                3 => GeneratorKind::EuclideanCloud { n, dim: rng.gen_range(1..=3) },
                _ => GeneratorKind::H2Cloud { n, radius: rng.gen_range(1.0..4.0) },
            };
            let family = match (id / 5) % 3 {
                0 => FamilySpec::Counting,
                1 => FamilySpec::Dirac,
                _ => FamilySpec::Kernel { scale: rng.gen_range(0.2..2.0) },
            };
            let subset = if (id / 15) % 2 == 0 {
                SubsetRule::Random { fraction: rng.gen_range(0.05..0.6), seed: rng.gen() }
            } else {
                SubsetRule::Net { fraction: rng.gen_range(0.1..0.5) }
            };
            Instance { id, space: GeneratorSpec::new(kind, rng.gen_range(0..1_000_000)), family, subset }
        })
        .collect()
}

fn tree_size(branching: usize, depth: usize) -> usize {
    (0..=depth).map(|d| branching.pow(d as u32)).sum()
}

/// One CSV row of a sweep. Failed instances keep their id and name with the
/// error text and empty numbers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub id: usize,
    pub name: String,
    pub status: String,
    pub points: Option<usize>,
    pub subset_size: Option<usize>,
    pub doubling: Option<f64>,
    pub consistency: Option<f64>,
    pub r_max: Option<f64>,
    pub uniformity: Option<f64>,
    pub n: Option<usize>,
    pub a_n: Option<f64>,
    pub k_n: Option<f64>,
    pub prop36_rhs: Option<f64>,
    pub shape_bound: Option<f64>,
    pub empirical_norm: Option<f64>,
    pub norm_over_shape: Option<f64>,
    pub error: String,
}

fn sweep_one(instance: &Instance, r_max: Option<f64>) -> SweepRow {
    let mut row = SweepRow {
        id: instance.id,
        name: instance.name(),
        status: "ok".into(),
        points: None,
        subset_size: None,
        doubling: None,
        consistency: None,
        r_max: None,
        uniformity: None,
        n: None,
        a_n: None,
        k_n: None,
        prop36_rhs: None,
        shape_bound: None,
        empirical_norm: None,
        norm_over_shape: None,
        error: String::new(),
    };
    let result = instance.build().and_then(|b| bound_report(&b.family, &b.subset, r_max));
    match result {
        Ok(r) => {
            row.points = Some(r.points);
            row.subset_size = Some(r.subset_size);
            row.doubling = Some(r.doubling);
            row.consistency = Some(r.consistency);
            row.r_max = Some(r.r_max);
            row.uniformity = Some(r.uniformity);
            row.n = Some(r.n);
            row.a_n = Some(r.a_n);
            row.k_n = Some(r.k_n);
            row.prop36_rhs = Some(r.prop36_rhs);
            row.shape_bound = Some(r.shape_bound);
            row.empirical_norm = Some(r.empirical_norm);
            row.norm_over_shape = Some(r.norm_over_shape);
        }
        Err(e) => {
            row.status = "error".into();
            row.error = e.to_string();
        }
    }
    row
}

/// Runs every instance in parallel; rows come back in instance order and a
/// failing instance does not stop the sweep.
pub fn corpus_sweep(spec: &SweepSpec) -> Vec<SweepRow> {
    spec.instances.par_iter().map(|inst| sweep_one(inst, spec.r_max)).collect()
}

pub fn rows_to_csv(rows: &[SweepRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| Error::format(format!("csv: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::format(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}
