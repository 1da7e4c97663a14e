//! Versioned JSON file formats and the run manifest.
//!
//! Every object written carries `"format": "lipext/1"`. Objects read must
//! carry the same tag; bare JSON arrays are accepted for boundary values and
//! chain coefficients.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::free_space::{BalancedChain, BALANCE_TOL};
use crate::generators::GeneratorSpec;
use crate::measures::{FamilySpec, MeasureFamily};
use crate::metric::{matrix_from_rows, FiniteMetricSpace, TRIANGLE_SLACK};
use crate::product::PRODUCT_TOL;
use crate::whitney::FACTOR_SEVEN_TOL;

pub const FORMAT: &str = "lipext/1";

/// Tolerances compiled into this build, echoed in every manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub triangle_slack: f64,
    pub chain_balance: f64,
    pub duality_gap: f64,
    pub factor_seven: f64,
    pub product_relative: f64,
    pub row_sum: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            triangle_slack: TRIANGLE_SLACK,
            chain_balance: BALANCE_TOL,
            duality_gap: 1e-9,
            factor_seven: FACTOR_SEVEN_TOL,
            product_relative: PRODUCT_TOL,
            row_sum: 1e-12,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub inputs: Vec<String>,
    pub seed: Option<u64>,
    pub tolerances: Tolerances,
}

impl Manifest {
    pub fn new(command: &str, inputs: Vec<String>, seed: Option<u64>) -> Self {
        Self {
            tool: "lipext".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            inputs,
            seed,
            tolerances: Tolerances::default(),
        }
    }
}

/// `{"format", "manifest", "result"}` envelope.
pub fn envelope<T: Serialize>(manifest: &Manifest, result: &T) -> Result<Value> {
    Ok(json!({ "format": FORMAT, "manifest": manifest, "result": result }))
}

fn check_format(obj: &Map<String, Value>, what: &str) -> Result<()> {
    match obj.get("format") {
        Some(Value::String(tag)) if tag == FORMAT => Ok(()),
        Some(other) => Err(Error::format(format!("{what}: unsupported format tag {other}, expected \"{FORMAT}\""))),
        None => Err(Error::format(format!("{what}: missing \"format\": \"{FORMAT}\""))),
    }
}

fn object<'a>(value: &'a Value, what: &str) -> Result<&'a Map<String, Value>> {
    value.as_object().ok_or_else(|| Error::format(format!("{what}: expected a JSON object")))
}

pub fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    serde_json::from_str(&text).map_err(|e| Error::format(format!("{}: {e}", path.display())))
}

pub fn to_pretty(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("JSON values always serialize");
    s.push('\n');
    s
}

/// Explicit-matrix form of a space.
pub fn space_to_json(space: &FiniteMetricSpace) -> Value {
    let dist: Vec<Vec<f64>> = space.dist_matrix().rows().into_iter().map(|r| r.to_vec()).collect();
    let mut v = json!({ "format": FORMAT, "labels": space.labels(), "dist": dist });
    if let Some(coords) = space.coords() {
        v["coords"] = json!(coords);
    }
    v
}

/// Explicit `labels`/`dist` (optional `coords`) or a `generator` spec.
pub fn parse_space(value: &Value) -> Result<FiniteMetricSpace> {
    let obj = object(value, "space")?;
    check_format(obj, "space")?;
    if let Some(g) = obj.get("generator") {
        let spec: GeneratorSpec =
            serde_json::from_value(g.clone()).map_err(|e| Error::format(format!("generator: {e}")))?;
        return spec.build();
    }
    let dist: Vec<Vec<f64>> = serde_json::from_value(
        obj.get("dist").cloned().ok_or_else(|| Error::format("space: missing \"dist\" or \"generator\""))?,
    )
    .map_err(|e| Error::format(format!("space.dist: {e}")))?;
    let dist = matrix_from_rows(&dist)?;
    let labels: Vec<String> = match obj.get("labels") {
        Some(l) => serde_json::from_value(l.clone()).map_err(|e| Error::format(format!("space.labels: {e}")))?,
        None => (0..dist.nrows()).map(|i| i.to_string()).collect(),
    };
    if let Some(c) = obj.get("coords") {
        let coords: Vec<Vec<f64>> =
            serde_json::from_value(c.clone()).map_err(|e| Error::format(format!("space.coords: {e}")))?;
        let space = FiniteMetricSpace::from_coordinates(labels, coords)?;
        let stored = space.dist_matrix();
        let tol = TRIANGLE_SLACK * space.diameter().max(1.0) * 16.0;
        if stored.shape() != dist.shape() || stored.iter().zip(dist.iter()).any(|(a, b)| (a - b).abs() > tol) {
            return Err(Error::format("space: coords and dist disagree"));
        }
        return Ok(space);
    }
    FiniteMetricSpace::new(labels, dist)
}

pub fn read_space(path: &Path) -> Result<FiniteMetricSpace> {
    parse_space(&read_json(path)?)
}

/// Family object: `{"format", "space"?, "weights"}` or `{"format",
/// "space"?, "kind", ...}`. `space` is inline or a path relative to `dir`;
/// without it the family lives on `base`.
pub fn parse_family(value: &Value, base: Option<Arc<FiniteMetricSpace>>, dir: &Path) -> Result<MeasureFamily> {
    let obj = object(value, "family")?;
    check_format(obj, "family")?;
    let space = match obj.get("space") {
        Some(Value::String(rel)) => Arc::new(read_space(&dir.join(rel))?),
        Some(inline @ Value::Object(_)) => Arc::new(parse_space(inline)?),
        Some(_) => return Err(Error::format("family.space: expected a path or an object")),
        None => base.ok_or_else(|| Error::format("family has no space and none was given"))?,
    };
    let spec = if obj.contains_key("weights") {
        let weights: Vec<Vec<f64>> = serde_json::from_value(obj["weights"].clone())
            .map_err(|e| Error::format(format!("family.weights: {e}")))?;
        FamilySpec::Weights { weights }
    } else {
        let mut rest = obj.clone();
        rest.remove("format");
        rest.remove("space");
        serde_json::from_value(Value::Object(rest)).map_err(|e| Error::format(format!("family: {e}")))?
    };
    spec.build(space)
}

pub fn read_family(path: &Path, base: Option<Arc<FiniteMetricSpace>>) -> Result<MeasureFamily> {
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    parse_family(&read_json(path)?, base, &dir)
}

pub fn family_to_json(family: &MeasureFamily, include_space: bool) -> Value {
    let weights: Vec<Vec<f64>> = family.weights().rows().into_iter().map(|r| r.to_vec()).collect();
    let mut v = json!({ "format": FORMAT, "weights": weights });
    if include_space {
        v["space"] = space_to_json(family.base());
    }
    v
}

/// `[a_0, ...]` or `{"format", "coefficients": [...]}`.
pub fn parse_chain(value: &Value, space: &FiniteMetricSpace) -> Result<BalancedChain> {
    let coeffs = match value {
        Value::Array(_) => value.clone(),
        Value::Object(obj) => {
            check_format(obj, "chain")?;
            obj.get("coefficients").cloned().ok_or_else(|| Error::format("chain: missing \"coefficients\""))?
        }
        _ => return Err(Error::format("chain: expected an array or an object")),
    };
    let coeffs: Vec<f64> = serde_json::from_value(coeffs).map_err(|e| Error::format(format!("chain: {e}")))?;
    BalancedChain::new(space, coeffs)
}

/// Boundary values as `|S| x k`: a flat array is one column, an array of
/// arrays is a matrix; either may be wrapped as `{"format", "values"}`.
pub fn parse_values(value: &Value) -> Result<Array2<f64>> {
    let inner = match value {
        Value::Object(obj) => {
            check_format(obj, "values")?;
            obj.get("values").ok_or_else(|| Error::format("values: missing \"values\""))?
        }
        other => other,
    };
    let rows = inner.as_array().ok_or_else(|| Error::format("values: expected an array"))?;
    if rows.iter().all(Value::is_number) {
        let col: Vec<f64> = rows.iter().map(|v| v.as_f64().unwrap_or(f64::NAN)).collect();
        return Ok(Array2::from_shape_vec((col.len(), 1), col).expect("shape matches"));
    }
    let rows: Vec<Vec<f64>> =
        serde_json::from_value(inner.clone()).map_err(|e| Error::format(format!("values: {e}")))?;
    let k = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != k) || k == 0 {
        return Err(Error::format("values: rows must be nonempty and of equal length"));
    }
    Ok(Array2::from_shape_fn((rows.len(), k), |(i, j)| rows[i][j]))
}

pub fn values_to_json(values: &Array2<f64>) -> Value {
    if values.ncols() == 1 {
        json!(values.column(0).to_vec())
    } else {
        json!(values.rows().into_iter().map(|r| r.to_vec()).collect::<Vec<_>>())
    }
}

/// `"0,2,5"` into indices.
pub fn parse_index_list(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<usize>().map_err(|_| Error::param(format!("bad point index {t:?}"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::gen_path;

    #[test]
    fn space_round_trip() {
        let p = gen_path(4).unwrap();
        let back = parse_space(&space_to_json(&p)).unwrap();
        assert_eq!(back.dist_matrix(), p.dist_matrix());
        assert_eq!(back.labels(), p.labels());
    }

    #[test]
    fn generator_form() {
        let v = json!({"format": FORMAT, "generator": {"kind": "tree", "params": {"branching": 2, "depth": 2}, "seed": 0}});
        assert_eq!(parse_space(&v).unwrap().size(), 7);
    }

    #[test]
    fn format_tag_is_required() {
        let v = json!({"labels": ["a"], "dist": [[0.0]]});
        assert!(matches!(parse_space(&v), Err(Error::Format(_))));
        let v = json!({"format": "lipext/2", "labels": ["a"], "dist": [[0.0]]});
        assert!(matches!(parse_space(&v), Err(Error::Format(_))));
    }

    #[test]
    fn invalid_metric_is_an_invariant_error() {
        let v = json!({"format": FORMAT, "dist": [[0, 1, 5], [1, 0, 1], [5, 1, 0]]});
        assert!(matches!(parse_space(&v), Err(Error::InvariantViolation(_))));
    }

    #[test]
    fn family_forms() {
        let base = Arc::new(gen_path(3).unwrap());
        let dir = Path::new(".");
        let counting = parse_family(&json!({"format": FORMAT, "kind": "counting"}), Some(base.clone()), dir).unwrap();
        assert_eq!(counting.ball_mass(1, 1.5), 3.0);
        let kernel = parse_family(&json!({"format": FORMAT, "kind": "kernel", "scale": 2.0}), Some(base.clone()), dir).unwrap();
        assert!(kernel.weight(0, 2) < 1.0);
        let round = parse_family(&family_to_json(&kernel, true), None, dir).unwrap();
        assert_eq!(round.weights(), kernel.weights());
        assert!(parse_family(&json!({"format": FORMAT, "kind": "counting"}), None, dir).is_err());
    }

    #[test]
    fn values_and_chains() {
        assert_eq!(parse_values(&json!([0.0, 2.0])).unwrap().shape(), &[2, 1]);
        assert_eq!(parse_values(&json!([[0, 1], [2, 3], [4, 5]])).unwrap().shape(), &[3, 2]);
        assert!(parse_values(&json!([[0, 1], [2]])).is_err());
        let p = gen_path(3).unwrap();
        assert!(parse_chain(&json!([1, -0.5, -0.5]), &p).is_ok());
        assert!(parse_chain(&json!({"format": FORMAT, "coefficients": [1, 0, 0]}), &p).is_err());
        assert_eq!(parse_index_list("0, 2,5").unwrap(), vec![0, 2, 5]);
        assert!(parse_index_list("0,x").is_err());
    }
}
