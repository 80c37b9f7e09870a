//! The line-oriented mapping file format.
//!
//! ```text
//! -- comment
//! target-graph swap.graph            -- file with node/edge lines
//! node fibo:Leg entity
//! edge fibo:hasLeg[0] : fibo:Swap -> fibo:Leg
//! table Swap -> fibo:Swap [untyped]
//! column Swap.PayerA -> fibo:hasLeg[0] ; fibo:hasPayingParty
//! datatype String -> Literal
//! typepredicate "rdf:type"
//! ```

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{column_edge, Edge, Node, NodeKind, SchemaGraph, SchemaMapping, STRING_NODE};
use crate::diagnostics::{render, Diagnostic};

#[derive(Debug, Error)]
pub enum MappingError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{file}:{line}: {message}")]
    Syntax { file: String, line: usize, message: String },
    #[error("invalid target graph:\n{}", render(.0))]
    Graph(Vec<Diagnostic>),
}

/// A parsed mapping file together with its target graph.
#[derive(Clone, Debug, Default)]
pub struct MappingFile {
    pub graph: SchemaGraph,
    pub mapping: SchemaMapping,
    pub type_predicate: Option<String>,
}

fn strip_comment(line: &str) -> &str {
    let mut in_str = false;
    let b = line.as_bytes();
    for i in 0..b.len() {
        match b[i] {
            b'"' => in_str = !in_str,
            b'-' if !in_str && b.get(i + 1) == Some(&b'-') && (i == 0 || b[i - 1].is_ascii_whitespace()) => {
                return &line[..i];
            }
            _ => {}
        }
    }
    line
}

struct Lines<'a> {
    file: &'a str,
    nodes: Vec<Node>,
    edges: Vec<Edge>,
}

impl Lines<'_> {
    fn err(&self, line: usize, message: impl Into<String>) -> MappingError {
        MappingError::Syntax {
            file: self.file.to_string(),
            line,
            message: message.into(),
        }
    }

    /// Handles `node` and `edge` lines; returns false for anything else.
    fn graph_line(&mut self, n: usize, tok: &[&str]) -> Result<bool, MappingError> {
        match tok {
            ["node", name, kind] => {
                let kind = match *kind {
                    "entity" => NodeKind::Entity,
                    "datatype" => NodeKind::Datatype,
                    other => return Err(self.err(n, format!("node kind must be entity or datatype, not `{other}`"))),
                };
                self.nodes.push(Node {
                    name: name.to_string(),
                    kind,
                });
                Ok(true)
            }
            ["edge", name, ":", src, "->", dst] => {
                self.edges.push(Edge {
                    name: name.to_string(),
                    src: src.to_string(),
                    dst: dst.to_string(),
                });
                Ok(true)
            }
            ["node", ..] => Err(self.err(n, "expected `node <name> entity|datatype`")),
            ["edge", ..] => Err(self.err(n, "expected `edge <name> : <src> -> <dst>`")),
            _ => Ok(false),
        }
    }
}

fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, strip_comment(l).trim()))
        .filter(|(_, l)| !l.is_empty())
}

/// Parses a file of `node` and `edge` lines.
pub fn parse_graph(text: &str) -> Result<SchemaGraph, MappingError> {
    let mut st = Lines {
        file: "<graph>",
        nodes: Vec::new(),
        edges: Vec::new(),
    };
    for (n, l) in lines(text) {
        let tok: Vec<&str> = l.split_whitespace().collect();
        if !st.graph_line(n, &tok)? {
            return Err(st.err(n, format!("expected a node or edge declaration, found `{l}`")));
        }
    }
    SchemaGraph::new(st.nodes, st.edges).map_err(MappingError::Graph)
}

/// Parses a mapping file. `load` resolves `target-graph` references.
pub fn parse_mapping(
    text: &str,
    load: &dyn Fn(&str) -> Result<String, MappingError>,
) -> Result<MappingFile, MappingError> {
    let mut st = Lines {
        file: "<mapping>",
        nodes: Vec::new(),
        edges: Vec::new(),
    };
    let mut out = MappingFile::default();
    let mut included = SchemaGraph::default();
    for (n, l) in lines(text) {
        let tok: Vec<&str> = l.split_whitespace().collect();
        if st.graph_line(n, &tok)? {
            continue;
        }
        match tok.as_slice() {
            ["target-graph", file] => {
                let g = parse_graph(&load(file)?)?;
                included.extend(g).map_err(MappingError::Graph)?;
            }
            ["table", t, "->", class] | ["table", t, "->", class, "untyped"] => {
                if out.mapping.node_map.insert(t.to_string(), class.to_string()).is_some() {
                    return Err(st.err(n, format!("table {t} is mapped twice")));
                }
                if tok.len() == 5 {
                    out.mapping.untyped.insert(t.to_string());
                }
            }
            ["datatype", s, "->", d] => {
                out.mapping.node_map.insert(s.to_string(), d.to_string());
            }
            ["column", ..] => {
                let rest = l["column".len()..].trim();
                let (lhs, path) = rest
                    .split_once("->")
                    .ok_or_else(|| st.err(n, "expected `column <table>.<column> -> <edge> ; ...`"))?;
                let (t, c) = lhs
                    .trim()
                    .split_once('.')
                    .ok_or_else(|| st.err(n, format!("`{}` is not of the form table.column", lhs.trim())))?;
                let path = path.trim();
                let edges: Vec<String> = if path.is_empty() {
                    Vec::new()
                } else {
                    path.split(';').map(|e| e.trim().to_string()).collect()
                };
                if edges.iter().any(String::is_empty) {
                    return Err(st.err(n, "empty edge name in path"));
                }
                out.mapping.edge_map.push((column_edge(t, c), edges));
            }
            ["typepredicate", ..] => {
                let v = l["typepredicate".len()..].trim();
                let v = v
                    .strip_prefix('"')
                    .and_then(|v| v.strip_suffix('"'))
                    .filter(|v| !v.is_empty() && !v.contains('"'))
                    .ok_or_else(|| st.err(n, "expected `typepredicate \"<iri>\"`"))?;
                out.type_predicate = Some(v.to_string());
            }
            _ => return Err(st.err(n, format!("unrecognized line `{l}`"))),
        }
    }
    let local = SchemaGraph::new(st.nodes, st.edges).map_err(MappingError::Graph)?;
    included.extend(local).map_err(MappingError::Graph)?;
    out.graph = included;
    if !out.mapping.node_map.contains_key(STRING_NODE) {
        let mut dt = out.graph.nodes().iter().filter(|n| n.kind == NodeKind::Datatype);
        if let (Some(only), None) = (dt.next(), dt.next()) {
            out.mapping.node_map.insert(STRING_NODE.into(), only.name.clone());
        }
    }
    Ok(out)
}

/// Reads a mapping file; `target-graph` paths are relative to its directory.
pub fn parse_mapping_file(path: &Path) -> Result<MappingFile, MappingError> {
    let read = |p: &Path| {
        fs::read_to_string(p).map_err(|source| MappingError::Io {
            path: p.to_path_buf(),
            source,
        })
    };
    let text = read(path)?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_mapping(&text, &|f| read(&dir.join(f))).map_err(|e| match e {
        MappingError::Syntax { file, line, message } if file == "<mapping>" => MappingError::Syntax {
            file: path.display().to_string(),
            line,
            message,
        },
        other => other,
    })
}
