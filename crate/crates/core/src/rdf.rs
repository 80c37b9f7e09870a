//! N-Triples reading and writing for instances of the `Rdf` table.

use std::collections::HashMap;

use oxrdf::{BlankNode, Literal, NamedNode, NamedOrBlankNode, Term, Triple};
use oxttl::{NTriplesParser, NTriplesSerializer};
use thiserror::Error;

use crate::coeval::{Cell, TripleInstance};
use crate::model::RelSchema;

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("target schema has no Rdf(subject, predicate, object) table")]
    NotRdf,
    #[error("triple {index}: {position} {cell} cannot be written{context}: {reason}")]
    Term {
        index: usize,
        position: &'static str,
        cell: String,
        context: String,
        reason: &'static str,
    },
}

#[derive(Debug, Error)]
#[error("{0}")]
pub struct ImportError(#[from] oxttl::TurtleParseError);

/// Whether a constant is written as an IRI: `scheme:rest` with no
/// characters N-Triples forbids in IRIs.
pub fn looks_like_iri(s: &str) -> bool {
    let Some((scheme, _)) = s.split_once(':') else {
        return false;
    };
    let mut chars = scheme.chars();
    chars.next().is_some_and(|c| c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.'))
        && !s
            .chars()
            .any(|c| c.is_whitespace() || c.is_control() || "<>\"{}|^`\\".contains(c))
        && NamedNode::new(s).is_ok()
}

fn columns(inst: &TripleInstance) -> Result<[usize; 3], ExportError> {
    let t = inst.target().table("Rdf").ok_or(ExportError::NotRdf)?;
    let idx = |c| t.column_index(c).ok_or(ExportError::NotRdf);
    Ok([idx("subject")?, idx("predicate")?, idx("object")?])
}

/// The triples of the set view, in fact order.
pub fn to_triples(inst: &TripleInstance) -> Result<Vec<Triple>, ExportError> {
    let [s, p, o] = columns(inst)?;
    let mut out = Vec::new();
    for (index, (_, fact)) in inst.facts_of("Rdf").enumerate() {
        let context = |col: &str| match fact.rows.first().and_then(|&r| inst.rows()[r].generators.first()) {
            Some(g) => format!(" (the {col} cell of output row {g})"),
            None => String::new(),
        };
        let fail = |position, col: &str, cell: &Cell, reason| ExportError::Term {
            index,
            position,
            cell: cell.to_string(),
            context: context(col),
            reason,
        };
        let subject: NamedOrBlankNode = match &fact.cells[s] {
            Cell::Blank(n) => blank(*n).into(),
            c @ Cell::Const(k) if looks_like_iri(k) => NamedNode::new(k)
                .map_err(|_| fail("subject", "subject", c, "invalid IRI"))?
                .into(),
            c => {
                return Err(fail(
                    "subject",
                    "subject",
                    c,
                    "a subject must be an IRI or a blank node",
                ))
            }
        };
        let predicate = match &fact.cells[p] {
            c @ Cell::Blank(_) => {
                return Err(fail(
                    "predicate",
                    "predicate",
                    c,
                    "a predicate must be an IRI, but no equation fixes this one",
                ))
            }
            c @ Cell::Const(k) => {
                if !looks_like_iri(k) {
                    return Err(fail("predicate", "predicate", c, "a predicate must be an IRI"));
                }
                NamedNode::new(k).map_err(|_| fail("predicate", "predicate", c, "invalid IRI"))?
            }
        };
        let object: Term = match &fact.cells[o] {
            Cell::Blank(n) => blank(*n).into(),
            Cell::Const(k) if looks_like_iri(k) => NamedNode::new(k).expect("checked IRI").into(),
            Cell::Const(k) => Literal::new_simple_literal(k).into(),
        };
        out.push(Triple::new(subject, predicate, object));
    }
    Ok(out)
}

fn blank(n: usize) -> BlankNode {
    BlankNode::new(format!("b{n}")).expect("valid blank node id")
}

/// Serializes the set view as N-Triples, one line per distinct triple.
pub fn export_ntriples(inst: &TripleInstance) -> Result<String, ExportError> {
    let mut w = NTriplesSerializer::new().for_writer(Vec::new());
    for t in to_triples(inst)? {
        w.serialize_triple(&t).expect("writing to memory");
    }
    Ok(String::from_utf8(w.finish()).expect("N-Triples output is UTF-8"))
}

/// Parses N-Triples into an `Rdf` instance. IRIs and literal values become
/// constants; blank nodes are numbered by first appearance.
pub fn import_ntriples(text: &str) -> Result<TripleInstance, ImportError> {
    let mut labels: HashMap<String, usize> = HashMap::new();
    let mut blank_cell = |b: &BlankNode| {
        let next = labels.len();
        Cell::Blank(*labels.entry(b.as_str().to_string()).or_insert(next))
    };
    let mut rows = Vec::new();
    for t in NTriplesParser::new().for_slice(text.as_bytes()) {
        let t = t.map_err(|e| ImportError(e.into()))?;
        let s = match &t.subject {
            NamedOrBlankNode::NamedNode(n) => Cell::Const(n.as_str().to_string()),
            NamedOrBlankNode::BlankNode(b) => blank_cell(b),
        };
        let p = Cell::Const(t.predicate.as_str().to_string());
        let o = match &t.object {
            Term::NamedNode(n) => Cell::Const(n.as_str().to_string()),
            Term::BlankNode(b) => blank_cell(b),
            Term::Literal(l) => Cell::Const(l.value().to_string()),
            #[allow(unreachable_patterns)]
            other => Cell::Const(other.to_string()),
        };
        rows.push(("Rdf".to_string(), vec![s, p, o]));
    }
    Ok(TripleInstance::from_rows(RelSchema::rdf(), rows))
}
