//! TOML scenario files.
//!
//! One file describes one experiment. Nodes are 1-indexed. Unknown keys are
//! rejected and `schema_version` must be present.
//!
//! ```toml
//! schema_version = 1
//! f = 1
//!
//! [plant]
//! a = [[1.1]]
//! x0 = [1.0]
//! sensors = [{ node = 1, c = [[1.0]] }, { node = 2, c = [[1.0]] }]
//!
//! [graph]
//! nodes = 5
//! complete = true
//!
//! [protocol]
//! kind = "sw-lfse"
//!
//! [channel]
//! kind = "ideal"
//!
//! [horizon]
//! kind = "envelope"
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{AdversaryStrategy, DEFAULT_CAP};
use crate::channels::ChannelModel;
use crate::graph::Digraph;
use crate::lti::Plant;
use crate::protocol::WeightRule;
use crate::sim::{Frame, Horizon, ProtocolKind, SimConfig, DEFAULT_GAMMA_LOCAL, DEFAULT_TOLERANCE, DEFAULT_TRIALS};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot parse scenario: {0}")]
    Parse(String),
    #[error("unsupported schema_version {found}, expected {SCHEMA_VERSION}")]
    Schema { found: u32 },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("cannot serialize scenario: {0}")]
    Serialize(String),
    #[error("unknown bundled scenario `{0}`")]
    UnknownBundled(String),
}

fn default_gamma() -> f64 {
    DEFAULT_GAMMA_LOCAL
}

fn default_tolerance() -> f64 {
    DEFAULT_TOLERANCE
}

fn default_cap() -> f64 {
    DEFAULT_CAP
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub f: usize,
    #[serde(default = "default_gamma")]
    pub gamma_local: f64,
    #[serde(default)]
    pub weights: WeightRule,
    #[serde(default)]
    pub frame: Frame,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_cap")]
    pub adversary_cap: f64,
    pub plant: PlantSpec,
    pub graph: GraphSpec,
    pub protocol: ProtocolKind,
    pub channel: ChannelModel,
    pub horizon: Horizon,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub adversaries: Vec<AdversarySpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSpec {
    /// Row-major state matrix.
    pub a: Vec<Vec<f64>>,
    pub x0: Vec<f64>,
    /// Measurement matrices of the sensing nodes; unlisted nodes measure
    /// nothing.
    #[serde(default)]
    pub sensors: Vec<SensorSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSpec {
    pub node: usize,
    pub c: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub nodes: usize,
    /// All ordered pairs, in addition to `edges`.
    #[serde(default, skip_serializing_if = "is_false")]
    pub complete: bool,
    /// Directed edges `[from, to]`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub edges: Vec<[usize; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversarySpec {
    pub node: usize,
    pub strategy: AdversaryStrategy,
}

impl ScenarioFile {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        // Check the version first so old files get a precise message.
        let raw: toml::Value = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        match raw.get("schema_version") {
            None => return Err(ScenarioError::Parse("missing field `schema_version`".into())),
            Some(toml::Value::Integer(v)) if *v == SCHEMA_VERSION as i64 => {}
            Some(toml::Value::Integer(v)) => {
                return Err(ScenarioError::Schema {
                    found: u32::try_from(*v).unwrap_or(u32::MAX),
                })
            }
            Some(_) => return Err(ScenarioError::Parse("`schema_version` must be an integer".into())),
        }
        toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String, ScenarioError> {
        toml::to_string(self).map_err(|e| ScenarioError::Serialize(e.to_string()))
    }

    pub fn to_config(&self) -> Result<SimConfig, ScenarioError> {
        let n_nodes = self.graph.nodes;
        if n_nodes == 0 {
            return Err(ScenarioError::Invalid("graph needs at least one node".into()));
        }
        let node = |id: usize, what: &str| {
            if id == 0 || id > n_nodes {
                Err(ScenarioError::Invalid(format!("{what} node {id} is outside 1..={n_nodes}")))
            } else {
                Ok(id - 1)
            }
        };

        let dim = self.plant.a.len();
        let mut sensors: Vec<Option<Vec<Vec<f64>>>> = vec![None; n_nodes];
        for s in &self.plant.sensors {
            let i = node(s.node, "sensor")?;
            if sensors[i].replace(s.c.clone()).is_some() {
                return Err(ScenarioError::Invalid(format!("node {} has two sensor entries", s.node)));
            }
        }
        let sensors: Vec<Vec<Vec<f64>>> = sensors.into_iter().map(Option::unwrap_or_default).collect();
        let plant = Plant::from_rows(&self.plant.a, &sensors).map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        if self.plant.x0.len() != dim {
            return Err(ScenarioError::Invalid(format!("x0 has {} entries, expected {dim}", self.plant.x0.len())));
        }

        let mut edges = Vec::new();
        if self.graph.complete {
            edges.extend(Digraph::complete(n_nodes).edges().iter().copied());
        }
        for &[j, i] in &self.graph.edges {
            edges.push((node(j, "edge")?, node(i, "edge")?));
        }
        let graph = Digraph::from_edges(n_nodes, edges).map_err(|e| ScenarioError::Invalid(e.to_string()))?;

        let mut adversaries = BTreeMap::new();
        for a in &self.adversaries {
            let i = node(a.node, "adversary")?;
            if adversaries.insert(i, a.strategy.clone()).is_some() {
                return Err(ScenarioError::Invalid(format!("node {} listed twice as adversary", a.node)));
            }
        }

        Ok(SimConfig {
            plant,
            graph,
            f: self.f,
            adversaries,
            channel: self.channel.clone(),
            protocol: self.protocol,
            horizon: self.horizon,
            x0: self.plant.x0.clone(),
            gamma_local: self.gamma_local,
            weights: self.weights,
            seed: 0,
            trials: DEFAULT_TRIALS,
            frame: self.frame,
            tolerance: self.tolerance,
            adversary_cap: self.adversary_cap,
        })
    }

    /// Describes `cfg` as a scenario file. Scripted adversaries cannot be
    /// written out.
    pub fn from_config(cfg: &SimConfig, name: Option<String>) -> Result<Self, ScenarioError> {
        if let Some((&i, _)) = cfg
            .adversaries
            .iter()
            .find(|(_, s)| matches!(s, AdversaryStrategy::ScriptedHook(_)))
        {
            return Err(ScenarioError::Serialize(format!("adversary {} uses a scripted hook", i + 1)));
        }
        let sensors = cfg
            .plant
            .sensor_rows()
            .into_iter()
            .enumerate()
            .filter(|(_, c)| !c.is_empty())
            .map(|(i, c)| SensorSpec { node: i + 1, c })
            .collect();
        Ok(ScenarioFile {
            schema_version: SCHEMA_VERSION,
            name,
            description: None,
            f: cfg.f,
            gamma_local: cfg.gamma_local,
            weights: cfg.weights,
            frame: cfg.frame,
            tolerance: cfg.tolerance,
            adversary_cap: cfg.adversary_cap,
            plant: PlantSpec {
                a: cfg.plant.a_rows(),
                x0: cfg.x0.clone(),
                sensors,
            },
            graph: GraphSpec {
                nodes: cfg.graph.node_count(),
                complete: false,
                edges: cfg.graph.edges().iter().map(|&(j, i)| [j + 1, i + 1]).collect(),
            },
            protocol: cfg.protocol,
            channel: cfg.channel.clone(),
            horizon: cfg.horizon,
            adversaries: cfg
                .adversaries
                .iter()
                .map(|(&i, s)| AdversarySpec {
                    node: i + 1,
                    strategy: s.clone(),
                })
                .collect(),
        })
    }
}

const BUNDLED: &[(&str, &str)] = &[
    ("clique5_swlfse", include_str!("../scenarios/clique5_swlfse.toml")),
    ("clique5_constant_spoof", include_str!("../scenarios/clique5_constant_spoof.toml")),
    ("net10_windowed_t1", include_str!("../scenarios/net10_windowed_t1.toml")),
    ("net10_windowed_t3", include_str!("../scenarios/net10_windowed_t3.toml")),
    ("net10_bounded_delay", include_str!("../scenarios/net10_bounded_delay.toml")),
    ("net10_erasure_delay", include_str!("../scenarios/net10_erasure_delay.toml")),
    ("clique7_lfse_mss", include_str!("../scenarios/clique7_lfse_mss.toml")),
    ("two_sources_not_robust", include_str!("../scenarios/two_sources_not_robust.toml")),
];

/// Names of the scenarios shipped with the crate.
pub fn bundled_names() -> Vec<&'static str> {
    BUNDLED.iter().map(|(n, _)| *n).collect()
}

/// Source text of a bundled scenario.
pub fn bundled_source(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn bundled(name: &str) -> Result<ScenarioFile, ScenarioError> {
    let text = bundled_source(name).ok_or_else(|| ScenarioError::UnknownBundled(name.to_string()))?;
    ScenarioFile::from_toml(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1
f = 0

[plant]
a = [[0.5]]
x0 = [2.0]
sensors = [{ node = 1, c = [[1.0]] }]

[graph]
nodes = 2
edges = [[1, 2]]

[protocol]
kind = "sw-lfse"

[channel]
kind = "ideal"

[horizon]
kind = "steps"
steps = 10
"#;

    #[test]
    fn minimal_file_parses() {
        let s = ScenarioFile::from_toml(MINIMAL).unwrap();
        assert_eq!(s.gamma_local, DEFAULT_GAMMA_LOCAL);
        let cfg = s.to_config().unwrap();
        assert_eq!(cfg.graph.edge_count(), 1);
        assert_eq!(cfg.plant.sensor(1).nrows(), 0);
        assert_eq!(cfg.horizon, Horizon::Steps { steps: 10 });
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("f = 0", "f = 0\ncolour = \"blue\"");
        assert!(matches!(ScenarioFile::from_toml(&text), Err(ScenarioError::Parse(_))));
        let text = MINIMAL.replace("kind = \"ideal\"", "kind = \"bernoulli-erasure\"\np = 0.1\nspeed = 3");
        assert!(ScenarioFile::from_toml(&text).is_err());
    }

    #[test]
    fn schema_version_is_mandatory() {
        let text = MINIMAL.replace("schema_version = 1", "");
        assert!(matches!(ScenarioFile::from_toml(&text), Err(ScenarioError::Parse(_))));
        let text = MINIMAL.replace("schema_version = 1", "schema_version = 2");
        assert!(matches!(ScenarioFile::from_toml(&text), Err(ScenarioError::Schema { found: 2 })));
    }

    #[test]
    fn bad_node_ids() {
        let text = MINIMAL.replace("[[1, 2]]", "[[1, 3]]");
        let s = ScenarioFile::from_toml(&text).unwrap();
        assert!(matches!(s.to_config(), Err(ScenarioError::Invalid(_))));
    }

    #[test]
    fn bundled_files_round_trip() {
        for name in bundled_names() {
            let first = bundled(name).unwrap();
            let text = first.to_toml().unwrap();
            let second = ScenarioFile::from_toml(&text).unwrap();
            assert_eq!(first, second, "{name}");
            assert_eq!(second.to_toml().unwrap(), text, "{name}");
        }
        assert!(matches!(bundled("nope"), Err(ScenarioError::UnknownBundled(_))));
    }

    #[test]
    fn config_round_trip() {
        for name in bundled_names() {
            let cfg = bundled(name).unwrap().to_config().unwrap();
            let back = ScenarioFile::from_config(&cfg, Some(name.into())).unwrap();
            let again = back.to_config().unwrap();
            assert_eq!(cfg.digest(), again.digest(), "{name}");
        }
    }
}
