//! Co-evaluation: running the user queries "in reverse".
//!
//! Every pair of a source row and a FROM variable of that row's query names
//! one output row. Instantiating the WHERE clause for each source row, the
//! input data and the SELECT clause yields ground equations over those
//! output rows' cells. The congruence closure of the equations determines
//! the output: classes holding a constant become that constant, every other
//! class becomes exactly one blank node.

mod closure;
mod materialize;

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::diagnostics::Diagnostic;
use crate::model::{ColumnKind, ForeignKey, RelInstance, RelSchema, RowId, Value};
use crate::qlang::{check_hom, validate_query, Atom, Query, QueryHom, VarCol};

pub use closure::{close, ClassId, CongruenceClasses, InconsistencyError, TraceStep};
pub use materialize::{materialize, Cell, Fact, FactId, MaterializedRow, TripleInstance};

/// One validated query per source table, in source-table order.
#[derive(Clone, Debug)]
pub struct QuerySet {
    source: RelSchema,
    target: RelSchema,
    queries: Vec<Query>,
}

impl QuerySet {
    pub fn new(source: RelSchema, target: RelSchema, queries: Vec<Query>) -> Result<Self, Vec<Diagnostic>> {
        let mut diags = Vec::new();
        let mut ordered = Vec::with_capacity(source.tables().len());
        for t in source.tables() {
            let mut matching = queries.iter().filter(|q| q.target_table == t.name);
            match (matching.next(), matching.next()) {
                (Some(q), None) => ordered.push(q.clone()),
                (None, _) => diags.push(Diagnostic::new(&t.name, "no query populates this table")),
                (Some(_), Some(_)) => diags.push(Diagnostic::new(&t.name, "more than one query populates this table")),
            }
        }
        for q in &queries {
            if source.table(&q.target_table).is_none() {
                diags.push(Diagnostic::new(
                    format!("query {}", q.name),
                    format!("target table `{}` is not declared in the source schema", q.target_table),
                ));
            }
        }
        for (i, q) in ordered.iter().enumerate() {
            if ordered[..i].iter().any(|p| p.name == q.name) {
                diags.push(Diagnostic::new(format!("query {}", q.name), "query name used twice"));
            }
            diags.extend(validate_query(q, &source, &target));
        }
        if diags.is_empty() {
            Ok(QuerySet {
                source,
                target,
                queries: ordered,
            })
        } else {
            Err(diags)
        }
    }

    pub fn source(&self) -> &RelSchema {
        &self.source
    }

    pub fn target(&self) -> &RelSchema {
        &self.target
    }

    pub fn queries(&self) -> &[Query] {
        &self.queries
    }

    pub fn query_for(&self, table: &str) -> Option<&Query> {
        self.queries.iter().find(|q| q.target_table == table)
    }

    pub fn by_name(&self, name: &str) -> Option<&Query> {
        self.queries.iter().find(|q| q.name == name)
    }

    /// The homomorphism that populates `fk`, if any.
    pub fn hom_for<'h>(&self, fk: &ForeignKey, homs: &'h [QueryHom]) -> Option<&'h QueryHom> {
        let qk = self.query_for(&fk.target)?;
        let qi = self.query_for(&fk.table)?;
        homs.iter().find(|h| {
            h.from_query == qk.name && h.to_query == qi.name && h.fk_column.as_deref().is_none_or(|c| c == fk.column)
        })
    }

    /// Every homomorphism must check, and every foreign key needs one.
    pub fn check_homs(&self, homs: &[QueryHom]) -> Vec<Diagnostic> {
        let mut diags = Vec::new();
        for h in homs {
            match (self.by_name(&h.from_query), self.by_name(&h.to_query)) {
                (Some(qk), Some(qi)) => diags.extend(check_hom(h, qk, qi)),
                _ => diags.push(Diagnostic::new(
                    format!("homomorphism {} -> {}", h.from_query, h.to_query),
                    "refers to an unknown query",
                )),
            }
        }
        for fk in self.source.foreign_keys() {
            if self.hom_for(fk, homs).is_none() {
                diags.push(Diagnostic::new(
                    format!("foreign key {}.{}", fk.table, fk.column),
                    format!(
                        "no query homomorphism from the query of {} to the query of {}",
                        fk.target, fk.table
                    ),
                ));
            }
        }
        diags
    }
}

/// A ground term.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Term {
    /// Cell of an input row.
    SrcCell {
        row: RowId,
        col: String,
    },
    /// The output row generated by `row` and FROM variable `var` of `query`.
    OutRow {
        row: RowId,
        var: String,
        query: String,
    },
    /// A cell of an output row.
    OutCell {
        row: RowId,
        var: String,
        query: String,
        col: String,
    },
    Const(String),
}

impl Term {
    /// The output row an `OutCell` belongs to.
    pub fn out_row(&self) -> Option<Term> {
        match self {
            Term::OutCell { row, var, query, .. } => Some(Term::OutRow {
                row: row.clone(),
                var: var.clone(),
                query: query.clone(),
            }),
            _ => None,
        }
    }

    pub fn is_const(&self) -> bool {
        matches!(self, Term::Const(_))
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::SrcCell { row, col } => write!(f, "{row}.{col}"),
            Term::OutRow { row, var, .. } => write!(f, "({row}, {var})"),
            Term::OutCell { row, var, col, .. } => write!(f, "({row}, {var}).{col}"),
            Term::Const(c) => write!(f, "\"{c}\""),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EquationKind {
    /// An instantiated WHERE atom.
    Where,
    /// An input attribute value.
    Data,
    /// A SELECT item.
    Select,
    /// An output-row identification induced by a foreign key.
    ForeignKey,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Equation {
    pub lhs: Term,
    pub rhs: Term,
    pub kind: EquationKind,
}

impl Equation {
    pub fn new(lhs: Term, rhs: Term, kind: EquationKind) -> Self {
        Equation { lhs, rhs, kind }
    }
}

impl fmt::Display for Equation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {}", self.lhs, self.rhs)
    }
}

/// An output row generator: source row, FROM variable, and the query the
/// variable belongs to. `table` is the target table the variable ranges over.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct OutRow {
    pub row: RowId,
    pub var: String,
    pub query: String,
    pub table: String,
}

impl OutRow {
    pub fn term(&self) -> Term {
        Term::OutRow {
            row: self.row.clone(),
            var: self.var.clone(),
            query: self.query.clone(),
        }
    }

    pub fn cell(&self, col: &str) -> Term {
        Term::OutCell {
            row: self.row.clone(),
            var: self.var.clone(),
            query: self.query.clone(),
            col: col.to_string(),
        }
    }
}

impl fmt::Display for OutRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.var)
    }
}

fn out_cell(row: &RowId, q: &Query, vc: &VarCol) -> Term {
    Term::OutCell {
        row: row.clone(),
        var: vc.var.clone(),
        query: q.name.clone(),
        col: vc.col.clone(),
    }
}

/// All output row generators, ordered by source table, row ordinal and FROM
/// variable.
pub fn generate_output_rows(inst: &RelInstance, qs: &QuerySet) -> Vec<OutRow> {
    let mut out = Vec::new();
    for t in inst.schema().tables() {
        let Some(q) = qs.query_for(&t.name) else { continue };
        for row in inst.rows(&t.name) {
            for f in &q.froms {
                out.push(OutRow {
                    row: row.clone(),
                    var: f.var.clone(),
                    query: q.name.clone(),
                    table: f.table.clone(),
                });
            }
        }
    }
    out
}

/// WHERE equations for every row, then one equation per input attribute
/// cell, then one per SELECT item and row.
pub fn generate_equations(inst: &RelInstance, qs: &QuerySet) -> Vec<Equation> {
    let tables = inst.schema().tables();
    let mut eqs = Vec::new();
    for t in tables {
        let Some(q) = qs.query_for(&t.name) else { continue };
        for row in inst.rows(&t.name) {
            for atom in &q.wheres {
                let (lhs, rhs) = match atom {
                    Atom::VarVar(a, b) => (out_cell(&row, q, a), out_cell(&row, q, b)),
                    Atom::VarConst(a, c) => (out_cell(&row, q, a), Term::Const(c.clone())),
                };
                eqs.push(Equation::new(lhs, rhs, EquationKind::Where));
            }
        }
    }
    for t in tables {
        for row in inst.rows(&t.name) {
            let cells = inst.row(&row).expect("row of this instance");
            for (col, value) in t.columns.iter().zip(cells) {
                if let (ColumnKind::Attribute, Value::Literal(v)) = (col.kind, value) {
                    eqs.push(Equation::new(
                        Term::SrcCell {
                            row: row.clone(),
                            col: col.name.clone(),
                        },
                        Term::Const(v.clone()),
                        EquationKind::Data,
                    ));
                }
            }
        }
    }
    for t in tables {
        let Some(q) = qs.query_for(&t.name) else { continue };
        for row in inst.rows(&t.name) {
            for s in &q.selects {
                eqs.push(Equation::new(
                    out_cell(&row, q, &s.expr),
                    Term::SrcCell {
                        row: row.clone(),
                        col: s.alias.clone(),
                    },
                    EquationKind::Select,
                ));
            }
        }
    }
    eqs
}

#[derive(Debug, Error)]
pub enum CoevalError {
    #[error("foreign key {table}.{column} has no query homomorphism")]
    MissingHom { table: String, column: String },
    #[error("homomorphism {from} -> {to} does not map variable `{var}`")]
    PartialHom { from: String, to: String, var: String },
    #[error(transparent)]
    Inconsistent(#[from] InconsistencyError),
}

/// Appends the output-row identifications required by the foreign keys.
///
/// For a foreign key `R_i.col -> R_k` with homomorphism `h: Q_k -> Q_i`, each
/// row `p` of `R_i` referencing row `q` identifies output row `(q, w)` with
/// `(p, h(w))` for every FROM variable `w` of `Q_k`.
pub fn apply_fk_identifications(
    mut eqs: Vec<Equation>,
    homs: &[QueryHom],
    inst: &RelInstance,
    qs: &QuerySet,
) -> Result<Vec<Equation>, CoevalError> {
    for fk in inst.schema().foreign_keys() {
        let missing = || CoevalError::MissingHom {
            table: fk.table.clone(),
            column: fk.column.clone(),
        };
        let h = qs.hom_for(fk, homs).ok_or_else(missing)?;
        let qk = qs.query_for(&fk.target).ok_or_else(missing)?;
        let qi = qs.query_for(&fk.table).ok_or_else(missing)?;
        for p in inst.rows(&fk.table) {
            let Some(Value::Ref(q)) = inst.cell(&p, &fk.column) else {
                continue;
            };
            for w in &qk.froms {
                let image = h.image(&w.var).ok_or_else(|| CoevalError::PartialHom {
                    from: h.from_query.clone(),
                    to: h.to_query.clone(),
                    var: w.var.clone(),
                })?;
                eqs.push(Equation::new(
                    Term::OutRow {
                        row: q.clone(),
                        var: w.var.clone(),
                        query: qk.name.clone(),
                    },
                    Term::OutRow {
                        row: p.clone(),
                        var: image.to_string(),
                        query: qi.name.clone(),
                    },
                    EquationKind::ForeignKey,
                ));
            }
        }
    }
    Ok(eqs)
}

/// Everything co-evaluation produces, kept for provenance and round-tripping.
#[derive(Clone, Debug)]
pub struct Coevaluation {
    pub out_rows: Vec<OutRow>,
    pub equations: Vec<Equation>,
    pub classes: CongruenceClasses,
    pub instance: TripleInstance,
}

/// Runs the whole co-evaluation of `qs` on `inst`.
pub fn coevaluate(inst: &RelInstance, qs: &QuerySet, homs: &[QueryHom]) -> Result<Coevaluation, CoevalError> {
    let out_rows = generate_output_rows(inst, qs);
    let equations = apply_fk_identifications(generate_equations(inst, qs), homs, inst, qs)?;
    let classes = close(&equations)?;
    let instance = materialize(&classes, &out_rows, qs.target());
    Ok(Coevaluation {
        out_rows,
        equations,
        classes,
        instance,
    })
}
