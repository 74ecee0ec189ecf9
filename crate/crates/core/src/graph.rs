//! Multi-relational graph model and edge-file ingestion.
//!
//! Edge files are tab-separated `subject<TAB>predicate<TAB>object` triples, one
//! edge per line. Repeated lines are kept as parallel edges. Node and predicate
//! names are assigned dense ids in order of first appearance.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{GeniError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub usize);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Relation type of an edge. Ids `0..P` are the predicates found in the input;
/// id `P` is the reserved self predicate used for a node's own attention term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PredicateId(pub usize);

impl PredicateId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

/// Suffix appended to a predicate name to form its inverse when
/// [`LoadOptions::add_inverse_edges`] is set.
pub const INVERSE_SUFFIX: &str = "^-1";

const SELF_PREDICATE_NAME: &str = "<self>";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadOptions {
    /// For every edge `s -p-> o` also add `o -p^-1-> s` with a distinct predicate id.
    pub add_inverse_edges: bool,
}

/// Out-neighbor entry: the neighbor and the predicates of all parallel edges
/// leading to it, in input order.
pub type Adjacency = (NodeId, Vec<PredicateId>);

/// Immutable directed multigraph with typed edges.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    node_names: Vec<String>,
    node_index: HashMap<String, NodeId>,
    predicate_names: Vec<String>,
    out_adjacency: Vec<Vec<Adjacency>>,
    out_degree: Vec<usize>,
    in_degree: Vec<usize>,
    edge_count: usize,
}

#[derive(Default)]
struct Interner {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Interner {
    fn intern(&mut self, name: &str) -> usize {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len();
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), id);
        id
    }
}

/// Reads an edge file. See [`KnowledgeGraph::from_triples`] for the edge rules.
pub fn load_graph(path: impl AsRef<Path>, options: LoadOptions) -> Result<KnowledgeGraph> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| GeniError::io(path, e))?;
    let mut triples = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(GeniError::Parse {
                path: path.to_owned(),
                line: lineno + 1,
                message: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        triples.push((fields[0], fields[1], fields[2]));
    }
    if triples.is_empty() {
        return Err(GeniError::EmptyFile {
            path: path.to_owned(),
        });
    }
    KnowledgeGraph::from_triples(triples, options)
}

impl KnowledgeGraph {
    pub fn from_triples<I, S>(triples: I, options: LoadOptions) -> Result<Self>
    where
        I: IntoIterator<Item = (S, S, S)>,
        S: AsRef<str>,
    {
        let mut nodes = Interner::default();
        let mut predicates = Interner::default();
        let mut edges: Vec<(usize, usize, usize)> = Vec::new();
        for (s, p, o) in triples {
            let s = nodes.intern(s.as_ref());
            let p = predicates.intern(p.as_ref());
            let o = nodes.intern(o.as_ref());
            edges.push((s, p, o));
        }
        if edges.is_empty() {
            return Err(GeniError::invalid("graph has no edges"));
        }
        if options.add_inverse_edges {
            let forward = predicates.names.len();
            let inverse: Vec<usize> = (0..forward)
                .map(|p| {
                    let name = format!("{}{}", predicates.names[p], INVERSE_SUFFIX);
                    predicates.intern(&name)
                })
                .collect();
            let reversed: Vec<_> = edges.iter().map(|&(s, p, o)| (o, inverse[p], s)).collect();
            edges.extend(reversed);
        }

        Ok(Self::assemble(nodes, predicates.names, edges))
    }

    /// Builds a graph directly from dense ids. Nodes are named `n{i}` and
    /// predicates `p{k}`; nodes without edges are allowed.
    pub fn from_id_edges(
        node_count: usize,
        predicate_count: usize,
        edges: &[(usize, usize, usize)],
    ) -> Result<Self> {
        for &(s, p, o) in edges {
            if s >= node_count || o >= node_count || p >= predicate_count {
                return Err(GeniError::invalid(format!(
                    "edge ({s}, {p}, {o}) out of range for {node_count} nodes and {predicate_count} predicates"
                )));
            }
        }
        let mut nodes = Interner::default();
        for i in 0..node_count {
            nodes.intern(&format!("n{i}"));
        }
        let predicates = (0..predicate_count).map(|k| format!("p{k}")).collect();
        Ok(Self::assemble(nodes, predicates, edges.to_vec()))
    }

    fn assemble(nodes: Interner, predicate_names: Vec<String>, edges: Vec<(usize, usize, usize)>) -> Self {
        let n = nodes.names.len();
        let mut grouped: Vec<BTreeMap<usize, Vec<PredicateId>>> = vec![BTreeMap::new(); n];
        let mut in_degree = vec![0usize; n];
        let mut out_degree = vec![0usize; n];
        for &(s, p, o) in &edges {
            grouped[s].entry(o).or_default().push(PredicateId(p));
            in_degree[o] += 1;
            out_degree[s] += 1;
        }
        let out_adjacency = grouped
            .into_iter()
            .map(|m| m.into_iter().map(|(j, ps)| (NodeId(j), ps)).collect())
            .collect();

        KnowledgeGraph {
            node_index: nodes
                .index
                .into_iter()
                .map(|(k, v)| (k, NodeId(v)))
                .collect(),
            node_names: nodes.names,
            predicate_names,
            out_adjacency,
            out_degree,
            in_degree,
            edge_count: edges.len(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_names.len()
    }

    /// Number of predicates present in the input (excludes the self predicate).
    pub fn predicate_count(&self) -> usize {
        self.predicate_names.len()
    }

    pub fn self_predicate(&self) -> PredicateId {
        PredicateId(self.predicate_names.len())
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.node_count()).map(NodeId)
    }

    fn check(&self, i: NodeId) -> Result<()> {
        if i.0 < self.node_count() {
            Ok(())
        } else {
            Err(GeniError::NodeOutOfRange {
                id: i.0,
                node_count: self.node_count(),
            })
        }
    }

    /// Out-neighbors of `i` in ascending id order.
    pub fn out_neighbors(&self, i: NodeId) -> Result<&[Adjacency]> {
        self.check(i)?;
        Ok(&self.out_adjacency[i.0])
    }

    /// Number of incoming edges, parallel edges counted individually.
    pub fn in_degree(&self, i: NodeId) -> usize {
        self.in_degree[i.0]
    }

    pub fn out_degree(&self, i: NodeId) -> usize {
        self.out_degree[i.0]
    }

    pub fn in_degrees(&self) -> &[usize] {
        &self.in_degree
    }

    pub fn node_name(&self, i: NodeId) -> &str {
        &self.node_names[i.0]
    }

    pub fn node_names(&self) -> &[String] {
        &self.node_names
    }

    pub fn node_id(&self, name: &str) -> Option<NodeId> {
        self.node_index.get(name).copied()
    }

    pub fn predicate_name(&self, p: PredicateId) -> &str {
        self.predicate_names
            .get(p.0)
            .map(String::as_str)
            .unwrap_or(SELF_PREDICATE_NAME)
    }

    pub fn predicate_names(&self) -> &[String] {
        &self.predicate_names
    }

    /// All edges as `(source, predicate, target)`, grouped by source and
    /// ascending target.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, PredicateId, NodeId)> + '_ {
        self.out_adjacency.iter().enumerate().flat_map(|(s, adj)| {
            adj.iter()
                .flat_map(move |(o, ps)| ps.iter().map(move |&p| (NodeId(s), p, *o)))
        })
    }

    /// Per-node count of outgoing edges carrying each predicate.
    pub(crate) fn out_predicate_counts(&self, i: NodeId) -> Vec<usize> {
        let mut counts = vec![0; self.predicate_count()];
        for (_, ps) in &self.out_adjacency[i.0] {
            for p in ps {
                counts[p.0] += 1;
            }
        }
        counts
    }
}
