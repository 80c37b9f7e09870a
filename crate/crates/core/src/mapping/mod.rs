//! Graph-based schema mappings and their compilation into queries.
//!
//! A relational schema is viewed as a graph with one node per table, one
//! datatype node, and one edge per column. A mapping sends each table to a
//! class of the target graph and each column edge to a path of target edges.

mod compile;
mod file;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use crate::diagnostics::Diagnostic;
use crate::model::{ColumnKind, RelSchema};

pub use compile::{compile_mapping, edge_predicate, CompileOptions, Compiled};
pub use file::{parse_graph, parse_mapping, parse_mapping_file, MappingError, MappingFile};

/// Name of the single datatype node of a relational schema graph.
pub const STRING_NODE: &str = "String";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Entity,
    Datatype,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Node {
    pub name: String,
    pub kind: NodeKind,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Edge {
    pub name: String,
    pub src: String,
    pub dst: String,
}

/// A directed multigraph with named nodes and named edges.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SchemaGraph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
}

impl SchemaGraph {
    pub fn new(nodes: Vec<Node>, edges: Vec<Edge>) -> Result<Self, Vec<Diagnostic>> {
        let mut diags = Vec::new();
        let mut names = BTreeSet::new();
        for n in &nodes {
            if !names.insert(n.name.as_str()) {
                diags.push(Diagnostic::new(format!("node {}", n.name), "declared twice"));
            }
        }
        let mut edge_names = BTreeSet::new();
        for e in &edges {
            if !edge_names.insert(e.name.as_str()) {
                diags.push(Diagnostic::new(format!("edge {}", e.name), "declared twice"));
            }
            for end in [&e.src, &e.dst] {
                if !names.contains(end.as_str()) {
                    diags.push(Diagnostic::new(
                        format!("edge {}", e.name),
                        format!("unknown node `{end}`"),
                    ));
                }
            }
        }
        if diags.is_empty() {
            Ok(SchemaGraph { nodes, edges })
        } else {
            Err(diags)
        }
    }

    /// One entity node per table, the datatype node [`STRING_NODE`], and an
    /// edge `T.c` per column: to the datatype node for attributes, to the
    /// referenced table for foreign keys.
    pub fn from_rel_schema(s: &RelSchema) -> Self {
        let mut nodes: Vec<Node> = s
            .tables()
            .iter()
            .map(|t| Node {
                name: t.name.clone(),
                kind: NodeKind::Entity,
            })
            .collect();
        nodes.push(Node {
            name: STRING_NODE.into(),
            kind: NodeKind::Datatype,
        });
        let mut edges = Vec::new();
        for t in s.tables() {
            for c in &t.columns {
                let dst = match c.kind {
                    ColumnKind::Attribute => STRING_NODE.to_string(),
                    ColumnKind::ForeignKey => s.foreign_key(&t.name, &c.name).expect("fk column").target.clone(),
                };
                edges.push(Edge {
                    name: column_edge(&t.name, &c.name),
                    src: t.name.clone(),
                    dst,
                });
            }
        }
        SchemaGraph { nodes, edges }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node(&self, name: &str) -> Option<&Node> {
        self.nodes.iter().find(|n| n.name == name)
    }

    pub fn edge(&self, name: &str) -> Option<&Edge> {
        self.edges.iter().find(|e| e.name == name)
    }

    /// Merges another graph's declarations into this one.
    pub fn extend(&mut self, other: SchemaGraph) -> Result<(), Vec<Diagnostic>> {
        let mut nodes = std::mem::take(&mut self.nodes);
        nodes.extend(other.nodes);
        let mut edges = std::mem::take(&mut self.edges);
        edges.extend(other.edges);
        *self = SchemaGraph::new(nodes, edges)?;
        Ok(())
    }
}

/// Name of the source edge for column `c` of table `t`.
pub fn column_edge(t: &str, c: &str) -> String {
    format!("{t}.{c}")
}

/// Nodes to nodes, source edges to paths of target edges.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SchemaMapping {
    pub node_map: BTreeMap<String, String>,
    /// Source edge name to path, in declaration order.
    pub edge_map: Vec<(String, Vec<String>)>,
    /// Tables compiled without a root type triple.
    pub untyped: BTreeSet<String>,
}

impl SchemaMapping {
    pub fn path(&self, edge: &str) -> Option<&[String]> {
        self.edge_map.iter().find(|(e, _)| e == edge).map(|(_, p)| p.as_slice())
    }
}

/// Checks that every table has a class, every column a well-typed path, and
/// that datatype nodes go to datatype nodes.
///
/// A path `e1; ...; en` for a source edge `s -> t` must start at the image
/// of `s`, each edge must start where the previous one ends, and the last
/// must end at the image of `t`. Positions in diagnostics are 1-based.
pub fn validate_mapping(m: &SchemaMapping, src: &SchemaGraph, tgt: &SchemaGraph) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    for (s, t) in &m.node_map {
        let Some(sn) = src.node(s) else {
            diags.push(Diagnostic::new(
                format!("node {s}"),
                "is not a node of the source schema",
            ));
            continue;
        };
        match tgt.node(t) {
            None => diags.push(Diagnostic::new(
                format!("node {s}"),
                format!("maps to `{t}`, which the target graph does not declare"),
            )),
            Some(tn) if tn.kind != sn.kind => diags.push(Diagnostic::new(
                format!("node {s}"),
                format!(
                    "is {} but maps to {} node `{t}`",
                    kind_name(sn.kind),
                    kind_name(tn.kind)
                ),
            )),
            Some(_) => {}
        }
    }
    for n in src.nodes() {
        if n.kind == NodeKind::Entity && !m.node_map.contains_key(&n.name) {
            diags.push(Diagnostic::new(format!("table {}", n.name), "has no target class"));
        }
    }
    for u in &m.untyped {
        if src.node(u).is_none() {
            diags.push(Diagnostic::new(
                format!("table {u}"),
                "is marked untyped but not declared",
            ));
        }
    }

    let mut seen: HashMap<&str, usize> = HashMap::new();
    for (e, _) in &m.edge_map {
        *seen.entry(e.as_str()).or_default() += 1;
        if src.edge(e).is_none() {
            diags.push(Diagnostic::new(
                format!("column {e}"),
                "is not a column of the source schema",
            ));
        }
    }
    for (e, n) in &seen {
        if *n > 1 {
            diags.push(Diagnostic::new(format!("column {e}"), "is mapped more than once"));
        }
    }
    for se in src.edges() {
        let subject = format!("column {}", se.name);
        let Some(path) = m.path(&se.name) else {
            diags.push(Diagnostic::new(subject, "has no path"));
            continue;
        };
        if path.is_empty() {
            diags.push(Diagnostic::new(subject, "path is empty"));
            continue;
        }
        let (Some(start), Some(end)) = (m.node_map.get(&se.src), m.node_map.get(&se.dst)) else {
            if se.dst == STRING_NODE && !m.node_map.contains_key(STRING_NODE) {
                diags.push(Diagnostic::new(subject, "the datatype node has no target datatype"));
            }
            continue;
        };
        let mut at = start.clone();
        let mut ok = true;
        for (i, name) in path.iter().enumerate() {
            let pos = i + 1;
            let Some(te) = tgt.edge(name) else {
                diags.push(Diagnostic::new(
                    subject.clone(),
                    format!("edge {pos} `{name}` is not declared in the target graph"),
                ));
                ok = false;
                break;
            };
            if te.src != at {
                let what = if i == 0 {
                    format!("the path must start at {at}")
                } else {
                    format!("edge {i} `{}` ends at {at}", path[i - 1])
                };
                diags.push(Diagnostic::new(
                    subject.clone(),
                    format!("edge {pos} `{name}` starts at {}, but {what}", te.src),
                ));
                ok = false;
                break;
            }
            at = te.dst.clone();
        }
        if ok && &at != end {
            diags.push(Diagnostic::new(
                subject,
                format!("path ends at {at} (edge {}), but must end at {end}", path.len()),
            ));
        }
    }
    diags
}

fn kind_name(k: NodeKind) -> &'static str {
    match k {
        NodeKind::Entity => "an entity",
        NodeKind::Datatype => "a datatype",
    }
}
