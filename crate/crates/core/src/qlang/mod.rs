//! The conjunctive select-from-where query language.
//!
//! A [`Query`] populates one source table from rows of the target schema
//! (normally the three-column `Rdf` table). `WHERE` clauses are conjunctions
//! of equalities between cells or between a cell and a string constant.

mod hom;
mod parse;
mod validate;

use std::collections::HashMap;
use std::fmt;

use serde::Serialize;

pub use hom::{check_hom, QueryHom};
pub use parse::{parse_query, ParseError};
pub use validate::validate_query;

/// `var.col`
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct VarCol {
    pub var: String,
    pub col: String,
}

impl VarCol {
    pub fn new(var: impl Into<String>, col: impl Into<String>) -> Self {
        VarCol {
            var: var.into(),
            col: col.into(),
        }
    }
}

impl fmt::Display for VarCol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.var, self.col)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Atom {
    VarVar(VarCol, VarCol),
    VarConst(VarCol, String),
}

impl Atom {
    pub fn eq_cells(lhs: VarCol, rhs: VarCol) -> Self {
        Atom::VarVar(lhs, rhs)
    }

    pub fn eq_const(lhs: VarCol, value: impl Into<String>) -> Self {
        Atom::VarConst(lhs, value.into())
    }

    pub fn cells(&self) -> impl Iterator<Item = &VarCol> {
        let (a, b) = match self {
            Atom::VarVar(a, b) => (a, Some(b)),
            Atom::VarConst(a, _) => (a, None),
        };
        std::iter::once(a).chain(b)
    }

    fn renamed(&self, rename: &impl Fn(&str) -> String) -> Atom {
        let rn = |vc: &VarCol| VarCol::new(rename(&vc.var), vc.col.clone());
        match self {
            Atom::VarVar(a, b) => Atom::VarVar(rn(a), rn(b)),
            Atom::VarConst(a, c) => Atom::VarConst(rn(a), c.clone()),
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::VarVar(a, b) => write!(f, "{a} = {b}"),
            Atom::VarConst(a, c) => write!(f, "{a} = \"{c}\""),
        }
    }
}

/// `expr AS alias`
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct SelectItem {
    pub expr: VarCol,
    pub alias: String,
}

/// `table AS var`
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct FromItem {
    pub var: String,
    pub table: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Query {
    /// Identifier used by query homomorphisms; usually the file stem.
    pub name: String,
    /// Source table populated by the query.
    pub target_table: String,
    pub selects: Vec<SelectItem>,
    pub froms: Vec<FromItem>,
    pub wheres: Vec<Atom>,
}

impl Query {
    /// Sets both the query name and its target table.
    pub fn for_table(mut self, table: impl Into<String>) -> Self {
        let table = table.into();
        self.name = table.clone();
        self.target_table = table;
        self
    }

    pub fn from_item(&self, var: &str) -> Option<&FromItem> {
        self.froms.iter().find(|f| f.var == var)
    }

    pub fn var_index(&self, var: &str) -> Option<usize> {
        self.froms.iter().position(|f| f.var == var)
    }

    /// Variables renamed `v0, v1, ...` in FROM order, each cell equation
    /// written with its smaller side first, atoms sorted and deduplicated.
    /// Two queries that differ only in variable names and in how the WHERE
    /// clause is written down have the same canonical form.
    pub fn canonical_form(&self) -> Query {
        let names: HashMap<&str, String> = self
            .froms
            .iter()
            .enumerate()
            .map(|(i, f)| (f.var.as_str(), format!("v{i}")))
            .collect();
        let rename = |v: &str| names.get(v).cloned().unwrap_or_else(|| v.to_string());
        let mut wheres: Vec<Atom> = self
            .wheres
            .iter()
            .map(|a| match a.renamed(&rename) {
                Atom::VarVar(a, b) if b < a => Atom::VarVar(b, a),
                other => other,
            })
            .collect();
        wheres.sort();
        wheres.dedup();
        Query {
            name: self.name.clone(),
            target_table: self.target_table.clone(),
            selects: self
                .selects
                .iter()
                .map(|s| SelectItem {
                    expr: VarCol::new(rename(&s.expr.var), s.expr.col.clone()),
                    alias: s.alias.clone(),
                })
                .collect(),
            froms: self
                .froms
                .iter()
                .map(|f| FromItem {
                    var: rename(&f.var),
                    table: f.table.clone(),
                })
                .collect(),
            wheres,
        }
    }
}

/// Pretty-printer. The output parses back to the same AST (the query name is
/// taken from the `CREATE VIEW` header).
impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.target_table.is_empty() {
            writeln!(f, "CREATE VIEW {} AS", self.target_table)?;
        }
        let sel: Vec<String> = self
            .selects
            .iter()
            .map(|s| format!("{} AS {}", s.expr, s.alias))
            .collect();
        writeln!(f, "SELECT {}", sel.join(", "))?;
        let from: Vec<String> = self
            .froms
            .iter()
            .map(|fr| format!("{} AS {}", fr.table, fr.var))
            .collect();
        writeln!(f, "FROM {}", from.join(", "))?;
        if !self.wheres.is_empty() {
            writeln!(f, "WHERE")?;
            for (i, atom) in self.wheres.iter().enumerate() {
                let sep = if i + 1 < self.wheres.len() { " AND" } else { "" };
                writeln!(f, "  {atom}{sep}")?;
            }
        }
        Ok(())
    }
}
