//! Scenario configuration files.
//!
//! Configs are TOML with fixed sections; unknown keys are rejected so typos
//! fail loudly. The `[spaces]` table lists one finite action grid per agent
//! (`agent1`, `agent2`, ...), each grid point a parameter row whose arity
//! depends on the outcome family.

use icx_core::{
    Action, ActionSpace, Aggregation, Family, MonotoneTable, OutcomeModel, Scenario, ScoreFunction,
    Statistic, Transform,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub model: ModelSection,
    pub design: DesignSection,
    pub units: UnitsSection,
    pub spaces: BTreeMap<String, Vec<Vec<f64>>>,
    pub simulation: SimulationSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub family: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DesignSection {
    #[serde(default = "default_statistic")]
    pub statistic: String,
    pub transform: String,
    #[serde(default = "default_aggregation")]
    pub aggregation: String,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct UnitsSection {
    pub m: usize,
    pub n: usize,
    #[serde(default = "default_blocks")]
    pub blocks: usize,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub reps: u64,
    pub seed: u64,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_list: Option<Vec<usize>>,
    pub var_tolerance: f64,
    pub quad_tol: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chi_range: Option<[f64; 2]>,
    pub stabilizer_knots: usize,
    pub max_cells: u64,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            k_list: None,
            var_tolerance: 1e-9,
            quad_tol: 1e-10,
            chi_range: None,
            stabilizer_knots: 2001,
            max_cells: 65_536,
        }
    }
}

fn default_statistic() -> String {
    "sample_mean".into()
}

fn default_aggregation() -> String {
    "summed_scores".into()
}

fn default_blocks() -> usize {
    1
}

/// A parsed, validated scenario ready to run.
#[derive(Debug)]
pub struct Built {
    pub id: String,
    pub scenario: Scenario,
    pub reps: u64,
    pub seed: u64,
    pub analysis: AnalysisSection,
    pub config: ScenarioConfig,
}

/// Parse a config file from disk and build the scenario it describes.
pub fn load(path: &Path) -> Result<Built, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let config: ScenarioConfig =
        toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".into());
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    build(config, &id, dir)
}

/// Build a scenario from an already-parsed config.
pub fn build(config: ScenarioConfig, id: &str, base_dir: &Path) -> Result<Built, String> {
    let family = parse_family(&config.model.family)?;
    let model =
        OutcomeModel::new(family, config.model.gamma).map_err(|e| format!("[model]: {e}"))?;
    let statistic = parse_statistic(&config.design.statistic)?;
    let transform = parse_transform(&config.design.transform, base_dir)?;
    let aggregation = parse_aggregation(&config.design.aggregation)?;
    let score = ScoreFunction::new(statistic, transform);

    let n = config.units.n;
    let mut spaces = Vec::with_capacity(n);
    for agent in 1..=n {
        let key = format!("agent{agent}");
        let rows = config
            .spaces
            .get(&key)
            .ok_or_else(|| format!("[spaces]: missing key `{key}`"))?;
        let grid: Vec<Action> = rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                Action::from_params(family, row)
                    .map_err(|e| format!("[spaces].{key} row {}: {e}", i + 1))
            })
            .collect::<Result<_, _>>()?;
        spaces.push(ActionSpace::new(family, grid).map_err(|e| format!("[spaces].{key}: {e}"))?);
    }
    if let Some(extra) = config
        .spaces
        .keys()
        .find(|k| !(1..=n).any(|a| **k == format!("agent{a}")))
    {
        return Err(format!(
            "[spaces]: unexpected key `{extra}` (units.n = {n})"
        ));
    }

    let scenario = Scenario::new(
        model,
        score,
        spaces,
        config.units.m,
        n,
        config.units.blocks,
        aggregation,
    )
    .map_err(|e| format!("[units]/[design]: {e}"))?;
    Ok(Built {
        id: id.to_string(),
        scenario,
        reps: config.simulation.reps,
        seed: config.simulation.seed,
        analysis: config.analysis.clone(),
        config,
    })
}

pub fn parse_family(name: &str) -> Result<Family, String> {
    match name {
        "normal_mean_var" => Ok(Family::NormalMeanVar),
        "normal_curved" => Ok(Family::NormalCurved),
        "poisson" => Ok(Family::PoissonIid),
        "poisson_interference_two_cell" => Ok(Family::PoissonInterferenceTwoCell),
        "poisson_interference_four_cell" => Ok(Family::PoissonInterferenceFourCell),
        other => Err(format!(
            "[model].family: unknown family `{other}` (expected normal_mean_var, normal_curved, \
             poisson, poisson_interference_two_cell or poisson_interference_four_cell)"
        )),
    }
}

pub fn parse_statistic(name: &str) -> Result<Statistic, String> {
    match name {
        "sample_mean" => Ok(Statistic::SampleMean),
        "spillover_adjusted" => Ok(Statistic::SpilloverAdjusted),
        other => Err(format!(
            "[design].statistic: unknown statistic `{other}` (expected sample_mean or \
             spillover_adjusted)"
        )),
    }
}

pub fn parse_aggregation(name: &str) -> Result<Aggregation, String> {
    match name {
        "summed_scores" => Ok(Aggregation::SummedScores),
        "majority_of_blocks" => Ok(Aggregation::MajorityOfBlocks),
        other => Err(format!(
            "[design].aggregation: unknown rule `{other}` (expected summed_scores or \
             majority_of_blocks)"
        )),
    }
}

/// Parse a transform name: `identity`, `reciprocal`, `neg_reciprocal`,
/// `scaled_sqrt` or `tabulated:<path>` (path relative to `base_dir`).
pub fn parse_transform(name: &str, base_dir: &Path) -> Result<Transform, String> {
    match name {
        "identity" => Ok(Transform::Identity),
        "reciprocal" => Ok(Transform::Reciprocal),
        "neg_reciprocal" => Ok(Transform::NegReciprocal),
        "scaled_sqrt" => Ok(Transform::ScaledSqrt),
        other => {
            if let Some(rel) = other.strip_prefix("tabulated:") {
                let path = resolve(base_dir, rel);
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| format!("cannot read transform table {}: {e}", path.display()))?;
                let table = MonotoneTable::parse_text(&text)
                    .map_err(|e| format!("{}: {e}", path.display()))?;
                Ok(Transform::Tabulated(table))
            } else {
                Err(format!(
                    "[design].transform: unknown transform `{other}` (expected identity, \
                     reciprocal, neg_reciprocal, scaled_sqrt or tabulated:<path>)"
                ))
            }
        }
    }
}

fn resolve(base_dir: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base_dir.join(p)
    }
}

/// Canonical TOML text of a config (the `dump-config` output).
pub fn dump(config: &ScenarioConfig) -> String {
    toml::to_string_pretty(config).expect("config serializes")
}
