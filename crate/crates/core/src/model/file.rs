//! JSON model files.
//!
//! ```json
//! {
//!   "dim": 2, "regimes": 2, "horizon": 1.0,
//!   "coefficients": { "builtin": "counterexample", "params": { "cost": 0.5 } },
//!   "domain": { "kind": "box", "params": { "lower": [null, 0.0], "upper": [null, null] } },
//!   "constants": { "L": 0.0, "c_bar": 0.5 }
//! }
//! ```
//!
//! `coefficients` is either `{builtin, params}` or `{tabulated}`. Built-in
//! models bring their own domain and constants; when given in the file those
//! replace the built-in ones. Unknown keys are rejected everywhere.

use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;
use serde_json::Value;

use super::builtin::{Counterexample, PumpedStorage, PumpedStorageParams};
use super::tabulated::{AffineReward, Tabulated, TabulatedRegime};
use super::{ConstraintDomain, DeclaredConstants, ModelSpec, RegimeSet};
use crate::error::{Error, Result};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    dim: usize,
    regimes: usize,
    horizon: f64,
    coefficients: CoefficientsFile,
    #[serde(default)]
    domain: Option<DomainFile>,
    #[serde(default)]
    constants: Option<ConstantsFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CoefficientsFile {
    builtin: Option<String>,
    params: Option<Value>,
    tabulated: Option<TabulatedFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DomainFile {
    kind: String,
    params: Value,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstantsFile {
    #[serde(rename = "L")]
    lipschitz: f64,
    c_bar: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CounterexampleParams {
    cost: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PumpedStorageFile {
    level_max: f64,
    #[serde(default = "defaults::reversion")]
    reversion: f64,
    #[serde(default = "defaults::mean_price")]
    mean_price: f64,
    #[serde(default = "defaults::price_vol")]
    price_vol: f64,
    #[serde(default = "defaults::switch_cost")]
    switch_cost: f64,
    initial_level: f64,
    initial_price: f64,
}

mod defaults {
    use super::PumpedStorageParams;
    pub fn reversion() -> f64 {
        PumpedStorageParams::default().reversion
    }
    pub fn mean_price() -> f64 {
        PumpedStorageParams::default().mean_price
    }
    pub fn price_vol() -> f64 {
        PumpedStorageParams::default().price_vol
    }
    pub fn switch_cost() -> f64 {
        PumpedStorageParams::default().switch_cost
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TabulatedFile {
    regimes: Vec<TabulatedRegimeFile>,
    costs: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TabulatedRegimeFile {
    drift: Vec<f64>,
    #[serde(default)]
    drift_linear: Option<Vec<Vec<f64>>>,
    volatility: Vec<Vec<f64>>,
    running: AffineFile,
    terminal: AffineFile,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AffineFile {
    constant: f64,
    #[serde(default)]
    gradient: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxParams {
    lower: Vec<Option<f64>>,
    upper: Vec<Option<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct HalfSpaceParams {
    normal: Vec<f64>,
    offset: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BallParams {
    center: Vec<f64>,
    radius: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct HalfSpacesParams {
    normals: Vec<Vec<f64>>,
    offsets: Vec<f64>,
}

fn params<T: for<'de> Deserialize<'de>>(what: &str, value: Value) -> Result<T> {
    serde_json::from_value(value).map_err(|e| Error::config(format!("{what}: {e}")))
}

fn parse_domain(file: DomainFile) -> Result<ConstraintDomain> {
    let domain = match file.kind.as_str() {
        "box" => {
            let p: BoxParams = params("box domain", file.params)?;
            ConstraintDomain::Box {
                lower: p.lower.into_iter().map(|v| v.unwrap_or(f64::NEG_INFINITY)).collect(),
                upper: p.upper.into_iter().map(|v| v.unwrap_or(f64::INFINITY)).collect(),
            }
        }
        "half_space" => {
            let p: HalfSpaceParams = params("half_space domain", file.params)?;
            ConstraintDomain::HalfSpace { normal: p.normal, offset: p.offset }
        }
        "ball" => {
            let p: BallParams = params("ball domain", file.params)?;
            ConstraintDomain::Ball { center: p.center, radius: p.radius }
        }
        "halfspaces" => {
            let p: HalfSpacesParams = params("halfspaces domain", file.params)?;
            ConstraintDomain::Polyhedron { normals: p.normals, offsets: p.offsets }
        }
        other => {
            return Err(Error::config(format!(
                "unsupported domain kind '{other}' (expected box, half_space, ball or halfspaces)"
            )))
        }
    };
    domain.validate()?;
    Ok(domain)
}

fn flatten_square(rows: Vec<Vec<f64>>, n: usize, what: &str) -> Result<Vec<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::config(format!("{what} must be a {n}×{n} matrix")));
    }
    Ok(rows.into_iter().flatten().collect())
}

/// Parses a model from JSON text.
pub fn parse_model(text: &str) -> Result<ModelSpec> {
    let file: ModelFile =
        serde_json::from_str(text).map_err(|e| Error::config(format!("model file: {e}")))?;
    let regimes = RegimeSet::new(file.regimes)?;
    let domain = file.domain.map(parse_domain).transpose()?;
    let constants = file.constants.map(|c| DeclaredConstants { lipschitz: c.lipschitz, min_cost: c.c_bar });
    let coeffs = file.coefficients;

    let spec = match (coeffs.builtin, coeffs.tabulated) {
        (Some(name), None) => {
            let raw = coeffs.params.unwrap_or(Value::Object(Default::default()));
            let spec = match name.as_str() {
                "counterexample" => {
                    let p: CounterexampleParams = params("counterexample params", raw)?;
                    Counterexample::new(file.horizon, p.cost)?.spec()
                }
                "pumped_storage" => {
                    let p: PumpedStorageFile = params("pumped_storage params", raw)?;
                    let ps = PumpedStorageParams {
                        horizon: file.horizon,
                        reversion: p.reversion,
                        mean_price: p.mean_price,
                        price_vol: p.price_vol,
                        switch_cost: p.switch_cost,
                    };
                    PumpedStorage::new(p.level_max, ps, p.initial_level, p.initial_price)?.spec()
                }
                other => return Err(Error::config(format!("unknown builtin model '{other}'"))),
            };
            if spec.dim() != file.dim || spec.regimes() != file.regimes {
                return Err(Error::config(format!(
                    "builtin '{name}' has dim {} and {} regimes, file declares {} and {}",
                    spec.dim(),
                    spec.regimes(),
                    file.dim,
                    file.regimes
                )));
            }
            let spec = match domain {
                Some(d) => spec.with_domain(d)?,
                None => spec,
            };
            match constants {
                Some(c) => spec.with_constants(c),
                None => spec,
            }
        }
        (None, Some(tab)) => {
            if coeffs.params.is_some() {
                return Err(Error::config("'params' is only valid with 'builtin'"));
            }
            let d = file.dim;
            if tab.regimes.len() != file.regimes {
                return Err(Error::config(format!(
                    "tabulated coefficients list {} regimes, file declares {}",
                    tab.regimes.len(),
                    file.regimes
                )));
            }
            let mut regs = Vec::with_capacity(tab.regimes.len());
            for (i, r) in tab.regimes.into_iter().enumerate() {
                let label = i + 1;
                regs.push(TabulatedRegime {
                    drift: r.drift,
                    drift_linear: r
                        .drift_linear
                        .map(|a| flatten_square(a, d, &format!("regime {label} drift_linear")))
                        .transpose()?,
                    volatility: flatten_square(r.volatility, d, &format!("regime {label} volatility"))?,
                    running: AffineReward { constant: r.running.constant, gradient: r.running.gradient },
                    terminal: AffineReward { constant: r.terminal.constant, gradient: r.terminal.gradient },
                });
            }
            let costs = flatten_square(tab.costs, file.regimes, "costs")?;
            let table = Tabulated::new(d, regs, costs)?;
            let domain = domain.ok_or_else(|| Error::config("tabulated models need a 'domain'"))?;
            let constants = constants.ok_or_else(|| Error::config("tabulated models need 'constants'"))?;
            ModelSpec::new("tabulated", d, regimes, file.horizon, domain, constants, Arc::new(table))?
        }
        _ => {
            return Err(Error::config(
                "coefficients must contain exactly one of 'builtin' or 'tabulated'",
            ))
        }
    };
    Ok(spec)
}

/// Reads and parses a model file.
pub fn load_model(path: &Path) -> Result<ModelSpec> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read model file {}: {e}", path.display())))?;
    parse_model(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const COUNTER: &str = r#"{
        "dim": 2, "regimes": 2, "horizon": 1.0,
        "coefficients": {"builtin": "counterexample", "params": {"cost": 0.5}}
    }"#;

    #[test]
    fn builtin_counterexample_file() {
        let spec = parse_model(COUNTER).unwrap();
        assert_eq!(spec.name(), "counterexample");
        assert_eq!(spec.switch_cost(&[0.0, 0.0], 1, 0), 0.5);
        assert_eq!(spec.distance_to_domain(&[0.0, -0.25]), 0.25);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = COUNTER.replace("\"horizon\"", "\"horizn\": 1, \"horizon\"");
        assert!(parse_model(&text).unwrap_err().is_config());
        let text = COUNTER.replace("\"cost\": 0.5", "\"cost\": 0.5, \"extra\": 1");
        assert!(parse_model(&text).unwrap_err().is_config());
    }

    #[test]
    fn tabulated_model() {
        let text = r#"{
            "dim": 1, "regimes": 2, "horizon": 2.0,
            "coefficients": {"tabulated": {
                "regimes": [
                    {"drift": [1.0], "drift_linear": [[-0.5]], "volatility": [[0.3]],
                     "running": {"constant": 1.0, "gradient": [2.0]}, "terminal": {"constant": 0.0}},
                    {"drift": [0.0], "volatility": [[0.0]],
                     "running": {"constant": 0.0}, "terminal": {"constant": 3.0}}
                ],
                "costs": [[0.0, 0.25], [0.5, 0.0]]
            }},
            "domain": {"kind": "halfspaces", "params": {"normals": [[1.0], [-1.0]], "offsets": [1.0, 1.0]}},
            "constants": {"L": 2.0, "c_bar": 0.25}
        }"#;
        let spec = parse_model(text).unwrap();
        assert_eq!(spec.drift(&[2.0], 0), vec![0.0]);
        assert_eq!(spec.volatility(&[2.0], 0), vec![0.3]);
        assert_eq!(spec.running_reward(&[2.0], 0), 5.0);
        assert_eq!(spec.terminal_reward(&[2.0], 1), 3.0);
        assert_eq!(spec.switch_cost(&[0.0], 1, 0), 0.5);
        assert!((spec.distance_to_domain(&[1.5]) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn missing_file_names_path() {
        let err = load_model(Path::new("/nonexistent/model.json")).unwrap_err();
        assert!(err.is_config());
        assert!(err.to_string().contains("/nonexistent/model.json"));
    }

    #[test]
    fn both_coefficient_kinds_rejected() {
        let text = r#"{"dim": 2, "regimes": 2, "horizon": 1.0,
            "coefficients": {"builtin": "counterexample", "tabulated": {"regimes": [], "costs": []}}}"#;
        assert!(parse_model(text).unwrap_err().is_config());
    }
}
