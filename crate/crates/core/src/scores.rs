//! Partial node → importance maps.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{GeniError, Result};
use crate::graph::{KnowledgeGraph, NodeId};

/// Score space the values of a [`ScoreTable`] live in.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreTransform {
    #[default]
    Raw,
    /// `ln(1 + raw)`.
    Log1p,
}

impl ScoreTransform {
    pub fn apply(self, raw: f64) -> f64 {
        match self {
            ScoreTransform::Raw => raw,
            ScoreTransform::Log1p => raw.ln_1p(),
        }
    }
}

impl fmt::Display for ScoreTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScoreTransform::Raw => "raw",
            ScoreTransform::Log1p => "log1p",
        })
    }
}

impl FromStr for ScoreTransform {
    type Err = GeniError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(ScoreTransform::Raw),
            "log1p" => Ok(ScoreTransform::Log1p),
            other => Err(GeniError::invalid(format!(
                "unknown score transform `{other}` (expected raw or log1p)"
            ))),
        }
    }
}

/// Non-negative importance scores for a subset of the graph's nodes, stored in
/// the space given by `transform`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    entries: BTreeMap<NodeId, f64>,
    transform: ScoreTransform,
}

impl ScoreTable {
    /// Builds a table from already-transformed values.
    pub fn new(
        entries: impl IntoIterator<Item = (NodeId, f64)>,
        transform: ScoreTransform,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (node, value) in entries {
            if !value.is_finite() || value < 0.0 {
                return Err(GeniError::invalid(format!(
                    "score for node {node} must be a finite non-negative number, got {value}"
                )));
            }
            if map.insert(node, value).is_some() {
                return Err(GeniError::invalid(format!("duplicate score for node {node}")));
            }
        }
        Ok(ScoreTable {
            entries: map,
            transform,
        })
    }

    pub fn transform(&self) -> ScoreTransform {
        self.transform
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, node: NodeId) -> Option<f64> {
        self.entries.get(&node).copied()
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.entries.contains_key(&node)
    }

    /// Labeled nodes in ascending id order.
    pub fn nodes(&self) -> Vec<NodeId> {
        self.entries.keys().copied().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, f64)> + '_ {
        self.entries.iter().map(|(&k, &v)| (k, v))
    }

    /// Restriction of the table to `nodes`; nodes without a score are skipped.
    pub fn subset(&self, nodes: &[NodeId]) -> ScoreTable {
        ScoreTable {
            entries: nodes
                .iter()
                .filter_map(|&n| self.get(n).map(|v| (n, v)))
                .collect(),
            transform: self.transform,
        }
    }

    pub(crate) fn values_for(&self, nodes: &[NodeId]) -> Result<Vec<f64>> {
        nodes
            .iter()
            .map(|&n| {
                self.get(n)
                    .ok_or_else(|| GeniError::invalid(format!("node {n} has no score")))
            })
            .collect()
    }
}

/// Reads `node_name<TAB>score` lines, mapping names through `graph`.
pub fn load_scores(
    path: impl AsRef<Path>,
    graph: &KnowledgeGraph,
    transform: ScoreTransform,
) -> Result<ScoreTable> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| GeniError::io(path, e))?;
    let parse_err = |line: usize, message: String| GeniError::Parse {
        path: path.to_owned(),
        line,
        message,
    };

    let mut unknown = Vec::new();
    let mut entries = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let (Some(name), Some(value), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(parse_err(lineno + 1, "expected `node<TAB>score`".into()));
        };
        let raw: f64 = value
            .trim()
            .parse()
            .map_err(|_| parse_err(lineno + 1, format!("invalid score `{value}`")))?;
        if !raw.is_finite() || raw < 0.0 {
            return Err(parse_err(
                lineno + 1,
                format!("score must be finite and non-negative, got {raw}"),
            ));
        }
        match graph.node_id(name) {
            Some(id) => {
                if entries.insert(id, transform.apply(raw)).is_some() {
                    return Err(parse_err(lineno + 1, format!("duplicate score for `{name}`")));
                }
            }
            None => unknown.push(name.to_owned()),
        }
    }
    if !unknown.is_empty() {
        return Err(GeniError::UnknownNodes(unknown));
    }
    if entries.is_empty() {
        return Err(GeniError::EmptyFile {
            path: path.to_owned(),
        });
    }
    Ok(ScoreTable { entries, transform })
}

/// Writes one `node_name<TAB>score` line per graph node, in id order. Values
/// use Rust's shortest round-trip float formatting.
pub fn write_scores(path: impl AsRef<Path>, graph: &KnowledgeGraph, values: &[f64]) -> Result<()> {
    let path = path.as_ref();
    if values.len() != graph.node_count() {
        return Err(GeniError::Shape(format!(
            "{} scores for a graph with {} nodes",
            values.len(),
            graph.node_count()
        )));
    }
    let mut out = String::new();
    for (name, v) in graph.node_names().iter().zip(values) {
        out.push_str(name);
        out.push('\t');
        out.push_str(&v.to_string());
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| GeniError::io(path, e))
}
