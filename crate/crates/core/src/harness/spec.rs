//! Versioned JSON experiment specs.
//!
//! ```json
//! {
//!   "version": 1,
//!   "name": "planted-b6k4",
//!   "methods": ["cnas", "fixed", "node", "random"],
//!   "shape": { "total_nodes": 6, "cell_groups": 1, "num_ops": 4 },
//!   "curriculum": { "operation_order": "catalog", "warmup_iters": 20 },
//!   "oracle": { "kind": "planted", "noise_sigma": 0.02 },
//!   "seeds": [0, 1, 2],
//!   "output_dir": "out/planted",
//!   "parallelism": 4
//! }
//! ```
//!
//! Only `version`, `methods` and `seeds` are required. Relative paths are
//! resolved against the directory holding the spec file.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use crate::cell_space::{OperationSpec, SpaceShape};
use crate::curriculum::{CurriculumConfig, Method, OperationOrder};
use crate::error::{Error, Result};
use crate::reward::{
    Oracle, PlantedLandscape, PlantedParams, RewardOracle, SupernetParams, SurrogateSupernet, TabularOracle,
};

pub const SPEC_VERSION: u64 = 1;

/// Where a trial's oracle comes from.
#[derive(Clone, Debug)]
pub enum OracleSpec {
    /// A landscape planted from `seed`, or from the trial seed when unset.
    Planted { params: PlantedParams, seed: Option<u64> },
    /// A surrogate supernet drawn from `seed`, or from the trial seed.
    Supernet { params: SupernetParams, seed: Option<u64> },
    /// A fixed oracle loaded from file, shared by every trial.
    Loaded(Oracle),
}

impl OracleSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            OracleSpec::Planted { .. } | OracleSpec::Loaded(Oracle::Planted(_)) => "planted",
            OracleSpec::Supernet { .. } | OracleSpec::Loaded(Oracle::Supernet(_)) => "supernet",
            OracleSpec::Loaded(Oracle::Tabular(_)) => "tabular",
        }
    }

    /// The oracle of the trial with seed `trial_seed`.
    pub fn build(&self, shape: &SpaceShape, trial_seed: u64) -> Result<Oracle> {
        Ok(match self {
            OracleSpec::Planted { params, seed } => Oracle::Planted(PlantedLandscape::random(
                shape.clone(),
                seed.unwrap_or(trial_seed),
                *params,
            )?),
            OracleSpec::Supernet { params, seed } => Oracle::Supernet(SurrogateSupernet::new(
                shape.clone(),
                seed.unwrap_or(trial_seed),
                *params,
            )?),
            OracleSpec::Loaded(oracle) => oracle.clone(),
        })
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentSpec {
    pub name: String,
    pub methods: Vec<Method>,
    /// Schedule shared by every trial; its `operation_order` and `seed` are
    /// overwritten per trial.
    pub curriculum: CurriculumConfig,
    /// One entry per operation-order variant. Trials are run for every
    /// variant.
    pub orders: Vec<OperationOrder>,
    pub oracle: OracleSpec,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub parallelism: usize,
}

/// Loads and validates a spec file.
pub fn load_spec(path: impl AsRef<Path>) -> Result<ExperimentSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_spec(&text, base)
}

/// Parses spec text; relative paths are resolved against `base`.
pub fn parse_spec(text: &str, base: &Path) -> Result<ExperimentSpec> {
    let value: Value = serde_json::from_str(text)
        .map_err(|e| Error::Parse(format!("line {} column {}: {e}", e.line(), e.column())))?;
    let root = object(
        &value,
        "",
        &[
            "version",
            "name",
            "methods",
            "shape",
            "curriculum",
            "oracle",
            "seeds",
            "output_dir",
            "parallelism",
        ],
    )?;

    match root.get("version") {
        None => return Err(Error::schema("version", "missing")),
        Some(v) if v.as_u64() == Some(SPEC_VERSION) => {}
        Some(v) => return Err(Error::schema("version", format!("unsupported version {v}"))),
    }

    let name = match root.get("name") {
        None => "experiment".to_string(),
        Some(v) => string(v, "name")?.to_string(),
    };

    let methods = array(
        root.get("methods").ok_or_else(|| Error::schema("methods", "missing"))?,
        "methods",
    )?
    .iter()
    .map(|v| {
        string(v, "methods")?
            .parse::<Method>()
            .map_err(|_| Error::schema("methods", format!("unknown method {v}")))
    })
    .collect::<Result<Vec<_>>>()?;
    if methods.is_empty() {
        return Err(Error::schema("methods", "must not be empty"));
    }
    if methods.iter().collect::<HashSet<_>>().len() != methods.len() {
        return Err(Error::schema("methods", "duplicate method"));
    }

    let seeds = array(
        root.get("seeds").ok_or_else(|| Error::schema("seeds", "missing"))?,
        "seeds",
    )?
    .iter()
    .map(|v| {
        v.as_u64()
            .ok_or_else(|| Error::schema("seeds", format!("{v} is not a non-negative integer")))
    })
    .collect::<Result<Vec<_>>>()?;
    if seeds.is_empty() {
        return Err(Error::schema("seeds", "must not be empty"));
    }
    if seeds.iter().collect::<HashSet<_>>().len() != seeds.len() {
        return Err(Error::schema("seeds", "seeds must be distinct"));
    }

    let shape = parse_shape(root.get("shape"))?;
    let (curriculum, orders) = parse_curriculum(root.get("curriculum"), &shape)?;
    let oracle = parse_oracle(root.get("oracle"), &shape, base)?;

    let output_dir = match root.get("output_dir") {
        None => base.join("out"),
        Some(v) => base.join(string(v, "output_dir")?),
    };
    let parallelism = match root.get("parallelism") {
        None => 1,
        Some(v) => match v.as_u64() {
            Some(n) if n > 0 => n as usize,
            _ => return Err(Error::schema("parallelism", "must be a positive integer")),
        },
    };

    Ok(ExperimentSpec {
        name,
        methods,
        curriculum,
        orders,
        oracle,
        seeds,
        output_dir,
        parallelism,
    })
}

fn object<'a>(value: &'a Value, path: &str, allowed: &[&str]) -> Result<&'a Map<String, Value>> {
    let map = value
        .as_object()
        .ok_or_else(|| Error::schema(if path.is_empty() { "<root>" } else { path }, "expected an object"))?;
    for key in map.keys() {
        if !allowed.contains(&key.as_str()) {
            let full = if path.is_empty() {
                key.clone()
            } else {
                format!("{path}.{key}")
            };
            return Err(Error::schema(full, "unknown key"));
        }
    }
    Ok(map)
}

fn array<'a>(value: &'a Value, key: &str) -> Result<&'a Vec<Value>> {
    value.as_array().ok_or_else(|| Error::schema(key, "expected an array"))
}

fn string<'a>(value: &'a Value, key: &str) -> Result<&'a str> {
    value.as_str().ok_or_else(|| Error::schema(key, "expected a string"))
}

fn usize_or(map: &Map<String, Value>, path: &str, key: &str, default: usize) -> Result<usize> {
    match map.get(key) {
        None => Ok(default),
        Some(v) => v
            .as_u64()
            .map(|n| n as usize)
            .ok_or_else(|| Error::schema(format!("{path}.{key}"), "expected a non-negative integer")),
    }
}

fn f64_or(map: &Map<String, Value>, path: &str, key: &str, default: f64) -> Result<f64> {
    match map.get(key) {
        None => Ok(default),
        Some(v) => v
            .as_f64()
            .ok_or_else(|| Error::schema(format!("{path}.{key}"), "expected a number")),
    }
}

fn seed_opt(map: &Map<String, Value>, path: &str) -> Result<Option<u64>> {
    map.get("seed")
        .map(|v| {
            v.as_u64()
                .ok_or_else(|| Error::schema(format!("{path}.seed"), "expected a non-negative integer"))
        })
        .transpose()
}

fn parse_shape(value: Option<&Value>) -> Result<SpaceShape> {
    let empty = Value::Object(Map::new());
    let map = object(
        value.unwrap_or(&empty),
        "shape",
        &["total_nodes", "cell_groups", "operations", "num_ops"],
    )?;
    let b = usize_or(map, "shape", "total_nodes", 7)?;
    let g = usize_or(map, "shape", "cell_groups", 1)?;
    let shape = match (map.get("operations"), map.get("num_ops")) {
        (Some(_), Some(_)) => return Err(Error::schema("shape", "give either operations or num_ops, not both")),
        (Some(ops), None) => {
            let ops = array(ops, "shape.operations")?
                .iter()
                .map(|v| match v {
                    Value::String(id) => Ok(OperationSpec::from_catalog(id)),
                    Value::Object(_) => {
                        let m = object(v, "shape.operations[]", &["id", "has_params"])?;
                        let id = string(
                            m.get("id")
                                .ok_or_else(|| Error::schema("shape.operations[].id", "missing"))?,
                            "shape.operations[].id",
                        )?;
                        let has_params = match m.get("has_params") {
                            None => OperationSpec::from_catalog(id).has_params,
                            Some(p) => p
                                .as_bool()
                                .ok_or_else(|| Error::schema("shape.operations[].has_params", "expected a boolean"))?,
                        };
                        Ok(OperationSpec::new(id, has_params))
                    }
                    _ => Err(Error::schema("shape.operations", "entries must be ids or objects")),
                })
                .collect::<Result<Vec<_>>>()?;
            SpaceShape::new(b, g, ops)
        }
        (None, k) => {
            let k = match k {
                None => 8,
                Some(v) => v
                    .as_u64()
                    .ok_or_else(|| Error::schema("shape.num_ops", "expected an integer"))?
                    as usize,
            };
            SpaceShape::with_catalog(b, g, k)
        }
    };
    shape.map_err(|e| Error::schema("shape", e.to_string()))
}

fn parse_curriculum(value: Option<&Value>, shape: &SpaceShape) -> Result<(CurriculumConfig, Vec<OperationOrder>)> {
    let empty = Value::Object(Map::new());
    let path = "curriculum";
    let map = object(
        value.unwrap_or(&empty),
        path,
        &[
            "operation_order",
            "warmup_iters",
            "controller_iters_per_stage",
            "weight_iters_per_stage",
            "samples_per_controller_iter",
            "infer_samples",
            "learning_rate",
            "entropy_weight",
            "baseline_decay",
        ],
    )?;
    let mut config = CurriculumConfig::new(shape.clone());
    config.warmup_iters = usize_or(map, path, "warmup_iters", config.warmup_iters)?;
    config.controller_iters_per_stage = usize_or(
        map,
        path,
        "controller_iters_per_stage",
        config.controller_iters_per_stage,
    )?;
    config.weight_iters_per_stage = usize_or(map, path, "weight_iters_per_stage", config.weight_iters_per_stage)?;
    config.samples_per_controller_iter = usize_or(
        map,
        path,
        "samples_per_controller_iter",
        config.samples_per_controller_iter,
    )?;
    config.infer_samples = usize_or(map, path, "infer_samples", config.infer_samples)?;
    let p = &mut config.policy_update;
    p.learning_rate = f64_or(map, path, "learning_rate", p.learning_rate)?;
    p.entropy_weight = f64_or(map, path, "entropy_weight", p.entropy_weight)?;
    p.baseline_decay = f64_or(map, path, "baseline_decay", p.baseline_decay)?;

    let key = "curriculum.operation_order";
    let orders = match map.get("operation_order") {
        None => vec![OperationOrder::Catalog],
        Some(Value::String(s)) if s == "catalog" => vec![OperationOrder::Catalog],
        Some(Value::Array(ids)) => {
            let order = ids
                .iter()
                .map(|v| {
                    let id = string(v, key)?;
                    shape
                        .op_index(id)
                        .ok_or_else(|| Error::schema(key, format!("unknown operation {id:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            vec![OperationOrder::Explicit(order)]
        }
        Some(v @ Value::Object(_)) => {
            let m = object(v, key, &["random_seeds"])?;
            let seeds = array(
                m.get("random_seeds")
                    .ok_or_else(|| Error::schema(key, "missing random_seeds"))?,
                key,
            )?
            .iter()
            .map(|s| {
                s.as_u64()
                    .map(OperationOrder::Random)
                    .ok_or_else(|| Error::schema(key, "seeds must be integers"))
            })
            .collect::<Result<Vec<_>>>()?;
            if seeds.is_empty() {
                return Err(Error::schema(key, "random_seeds must not be empty"));
            }
            seeds
        }
        Some(_) => {
            return Err(Error::schema(
                key,
                "expected \"catalog\", a list of ids or {\"random_seeds\": [...]}",
            ))
        }
    };
    for order in &orders {
        let mut c = config.clone();
        c.operation_order = order.clone();
        c.resolved_order().map_err(|e| Error::schema(key, e.to_string()))?;
    }
    config.validate().map_err(|e| Error::schema(path, e.to_string()))?;
    Ok((config, orders))
}

fn parse_oracle(value: Option<&Value>, shape: &SpaceShape, base: &Path) -> Result<OracleSpec> {
    let default = serde_json::json!({ "kind": "planted" });
    let value = value.unwrap_or(&default);
    let kind = value
        .get("kind")
        .map(|k| string(k, "oracle.kind"))
        .transpose()?
        .ok_or_else(|| Error::schema("oracle.kind", "missing"))?;
    let path = "oracle";
    let check_shape = |found: &SpaceShape| {
        if found == shape {
            Ok(())
        } else {
            Err(Error::schema(
                "oracle.path",
                format!(
                    "file shape `{}` differs from spec shape `{}`",
                    found.descriptor(),
                    shape.descriptor()
                ),
            ))
        }
    };
    let file = |map: &Map<String, Value>| -> Result<PathBuf> {
        Ok(base.join(string(map.get("path").expect("checked by caller"), "oracle.path")?))
    };
    match kind {
        "planted" => {
            let map = object(
                value,
                path,
                &[
                    "kind",
                    "seed",
                    "op_match_bonus",
                    "input_match_bonus",
                    "noise_sigma",
                    "path",
                ],
            )?;
            if map.contains_key("path") {
                if map.len() > 2 {
                    return Err(Error::schema(path, "a planted file cannot be combined with parameters"));
                }
                let p = file(map)?;
                let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                let landscape = PlantedLandscape::from_json(&text)?;
                check_shape(RewardOracle::shape(&landscape))?;
                return Ok(OracleSpec::Loaded(Oracle::Planted(landscape)));
            }
            let d = PlantedParams::default();
            let params = PlantedParams {
                op_match_bonus: f64_or(map, path, "op_match_bonus", d.op_match_bonus)?,
                input_match_bonus: f64_or(map, path, "input_match_bonus", d.input_match_bonus)?,
                noise_sigma: f64_or(map, path, "noise_sigma", d.noise_sigma)?,
            };
            if params.noise_sigma < 0.0 {
                return Err(Error::schema("oracle.noise_sigma", "must be non-negative"));
            }
            Ok(OracleSpec::Planted {
                params,
                seed: seed_opt(map, path)?,
            })
        }
        "supernet" => {
            let map = object(
                value,
                path,
                &[
                    "kind",
                    "seed",
                    "train_rate",
                    "input_bonus",
                    "eval_noise_sigma",
                    "favored_op",
                ],
            )?;
            let d = SupernetParams::default();
            let favored_op = match map.get("favored_op") {
                None => None,
                Some(v) => {
                    let id = string(v, "oracle.favored_op")?;
                    Some(
                        shape
                            .op_index(id)
                            .ok_or_else(|| Error::schema("oracle.favored_op", format!("unknown operation {id:?}")))?,
                    )
                }
            };
            let params = SupernetParams {
                train_rate: f64_or(map, path, "train_rate", d.train_rate)?,
                input_bonus: f64_or(map, path, "input_bonus", d.input_bonus)?,
                eval_noise_sigma: f64_or(map, path, "eval_noise_sigma", d.eval_noise_sigma)?,
                favored_op,
            };
            // validates the parameters once up front
            SurrogateSupernet::new(shape.clone(), 0, params).map_err(|e| Error::schema(path, e.to_string()))?;
            Ok(OracleSpec::Supernet {
                params,
                seed: seed_opt(map, path)?,
            })
        }
        "tabular" => {
            let map = object(value, path, &["kind", "path"])?;
            if !map.contains_key("path") {
                return Err(Error::schema("oracle.path", "missing"));
            }
            let table = TabularOracle::load(file(map)?)?;
            check_shape(RewardOracle::shape(&table))?;
            Ok(OracleSpec::Loaded(Oracle::Tabular(table)))
        }
        other => Err(Error::schema("oracle.kind", format!("unknown kind {other:?}"))),
    }
}
