//! Per-node input feature vectors.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{GeniError, Result};
use crate::graph::{KnowledgeGraph, NodeId};

/// Dense `node_count × dim` matrix, row `i` belonging to node `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        if dim == 0 {
            return Err(GeniError::invalid("feature matrix needs at least one column"));
        }
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(GeniError::Shape(format!(
                    "feature row {i} has width {}, expected {dim}",
                    row.len()
                )));
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite()) {
                return Err(GeniError::NonFinite(format!("feature row {i} contains {v}")));
            }
            data.extend_from_slice(row);
        }
        Ok(FeatureMatrix { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, i: NodeId) -> &[f64] {
        &self.data[i.0 * self.dim..(i.0 + 1) * self.dim]
    }

    /// Row-major contents.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Reads `node_name<TAB>v1<TAB>...<TAB>vF` lines. Every graph node needs a row.
pub fn load_features(path: impl AsRef<Path>, graph: &KnowledgeGraph) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| GeniError::io(path, e))?;
    let parse_err = |line: usize, message: String| GeniError::Parse {
        path: path.to_owned(),
        line,
        message,
    };

    let mut dim = None;
    let mut by_node: HashMap<NodeId, Vec<f64>> = HashMap::new();
    let mut unknown = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let name = fields.next().unwrap_or_default();
        let values = fields
            .map(|f| {
                let v: f64 = f
                    .trim()
                    .parse()
                    .map_err(|_| parse_err(lineno + 1, format!("invalid number `{f}`")))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(parse_err(lineno + 1, format!("non-finite feature value `{f}`")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        if values.is_empty() {
            return Err(parse_err(lineno + 1, "row has no feature values".into()));
        }
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(parse_err(
                    lineno + 1,
                    format!("row has {} values, expected {d}", values.len()),
                ))
            }
            _ => {}
        }
        match graph.node_id(name) {
            Some(id) => {
                if by_node.insert(id, values).is_some() {
                    return Err(parse_err(lineno + 1, format!("duplicate row for `{name}`")));
                }
            }
            None => unknown.push(name.to_owned()),
        }
    }
    if !unknown.is_empty() {
        return Err(GeniError::UnknownNodes(unknown));
    }
    let missing: Vec<String> = graph
        .nodes()
        .filter(|i| !by_node.contains_key(i))
        .map(|i| graph.node_name(i).to_owned())
        .collect();
    if !missing.is_empty() {
        return Err(GeniError::MissingFeatures(missing));
    }
    let rows = graph
        .nodes()
        .map(|i| by_node.remove(&i).expect("checked above"))
        .collect();
    FeatureMatrix::from_rows(rows)
}

/// Deterministic fallback features: `[ln(1+in), ln(1+out), ln(1+out_p)...]`
/// with one per-predicate out-count per remaining column (truncated or
/// zero-padded to `dim - 2`).
pub fn generate_structural_features(graph: &KnowledgeGraph, dim: usize) -> Result<FeatureMatrix> {
    if dim < 2 {
        return Err(GeniError::invalid(format!(
            "structural features need dim >= 2, got {dim}"
        )));
    }
    let rows = graph
        .nodes()
        .map(|i| {
            let mut row = Vec::with_capacity(dim);
            row.push((graph.in_degree(i) as f64).ln_1p());
            row.push((graph.out_degree(i) as f64).ln_1p());
            let counts = graph.out_predicate_counts(i);
            row.extend(
                counts
                    .iter()
                    .take(dim - 2)
                    .map(|&c| (c as f64).ln_1p()),
            );
            row.resize(dim, 0.0);
            row
        })
        .collect();
    FeatureMatrix::from_rows(rows)
}
