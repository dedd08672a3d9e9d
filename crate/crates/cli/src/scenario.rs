//! Scenario files for `simulate`.
//!
//! A file lists the methods to run and one or more scenarios. Each scenario is
//! either a preset with its two correlations or a complete specification:
//!
//! ```toml
//! methods = ["raw", "weighted", "ubm", "bbm"]
//!
//! [[scenario]]
//! preset = "population_mean"
//! rho1 = 0.7
//! rho2 = 0.0
//!
//! [[scenario]]
//! id = "custom"
//! n = 30
//! mu_theta = 0.0
//! mu_sigma = 0.0
//! r_theta = 1.0
//! r_sigma = 0.5
//! sigma_s = 1.0
//! rho1 = 0.3
//! rho2 = 0.3
//! n_reps = 20
//! seed = 1
//! covariates = { kind = "none" }
//! ```

use std::path::Path;

use hbcombine::classical::Method;
use hbcombine::simulation::ScenarioSpec;
use hbcombine::Error;
use serde::Deserialize;

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Preset {
    PopulationMean,
    Homogeneous,
    Regression,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PresetEntry {
    preset: Preset,
    rho1: f64,
    rho2: f64,
    id: Option<String>,
    n: Option<usize>,
    n_reps: Option<usize>,
    seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Entry {
    Preset(PresetEntry),
    Full(ScenarioSpec),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StudyFile {
    methods: Vec<String>,
    scenario: Vec<Entry>,
}

#[derive(Debug)]
pub struct Study {
    pub methods: Vec<Method>,
    pub scenarios: Vec<ScenarioSpec>,
}

fn expand(entry: Entry) -> ScenarioSpec {
    match entry {
        Entry::Full(spec) => spec,
        Entry::Preset(p) => {
            let mut spec = match p.preset {
                Preset::PopulationMean => ScenarioSpec::population_mean(p.rho1, p.rho2),
                Preset::Homogeneous => ScenarioSpec::homogeneous(p.rho1, p.rho2),
                Preset::Regression => ScenarioSpec::regression(p.rho1, p.rho2),
            };
            if let Some(id) = p.id {
                spec.id = id;
            }
            if let Some(n) = p.n {
                spec.n = n;
            }
            if let Some(r) = p.n_reps {
                spec.n_reps = r;
            }
            if let Some(s) = p.seed {
                spec.seed = s;
            }
            spec
        }
    }
}

pub fn parse(text: &str, json: bool) -> Result<Study, Error> {
    let file: StudyFile = if json {
        serde_json::from_str(text).map_err(|e| Error::SchemaError(format!("scenario file: {e}")))?
    } else {
        toml::from_str(text).map_err(|e| Error::SchemaError(format!("scenario file: {e}")))?
    };
    let methods = file
        .methods
        .iter()
        .map(|m| m.parse())
        .collect::<Result<Vec<Method>, _>>()?;
    if methods.is_empty() || file.scenario.is_empty() {
        return Err(Error::SchemaError("scenario file needs at least one method and one scenario".into()));
    }
    let scenarios: Vec<ScenarioSpec> = file.scenario.into_iter().map(expand).collect();
    for (i, s) in scenarios.iter().enumerate() {
        if scenarios[..i].iter().any(|t| t.id == s.id) {
            return Err(Error::SchemaError(format!("duplicate scenario id `{}`", s.id)));
        }
    }
    Ok(Study { methods, scenarios })
}

pub fn load(path: &Path) -> Result<Study, Error> {
    let text = std::fs::read_to_string(path)?;
    let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    parse(&text, json)
}
