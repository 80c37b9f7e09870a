use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::Serialize;

use super::{CongruenceClasses, OutRow};
use crate::model::RelSchema;

/// A cell of the output instance.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Cell {
    Const(String),
    /// A labelled blank node, printed `_:bN`.
    Blank(usize),
}

impl Cell {
    pub fn as_const(&self) -> Option<&str> {
        match self {
            Cell::Const(s) => Some(s),
            Cell::Blank(_) => None,
        }
    }

    pub fn is_blank(&self) -> bool {
        matches!(self, Cell::Blank(_))
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Const(s) => f.write_str(s),
            Cell::Blank(n) => write!(f, "_:b{n}"),
        }
    }
}

/// One output-row class in bag form, with the generators it came from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MaterializedRow {
    pub table: String,
    pub generators: Vec<OutRow>,
    pub cells: Vec<Cell>,
}

pub type FactId = usize;

/// A distinct row of the set view.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Fact {
    pub table: String,
    pub cells: Vec<Cell>,
    /// Indices into [`TripleInstance::rows`] that collapse to this fact.
    pub rows: Vec<usize>,
}

/// Output of co-evaluation: an instance of the target schema whose cells are
/// constants or blank nodes.
///
/// The bag view has one row per output-row class; the set view deduplicates
/// equal rows of a table. Exported triple counts refer to the set view.
#[derive(Clone, Debug)]
pub struct TripleInstance {
    target: RelSchema,
    rows: Vec<MaterializedRow>,
    facts: Vec<Fact>,
    row_of: HashMap<OutRow, usize>,
    fact_of_row: Vec<FactId>,
    blanks: usize,
}

impl TripleInstance {
    /// Builds an instance from bare rows, e.g. parsed from a file. Each row
    /// is its own bag row with no generators.
    pub fn from_rows(target: RelSchema, rows: Vec<(String, Vec<Cell>)>) -> Self {
        let rows = rows
            .into_iter()
            .map(|(table, cells)| MaterializedRow {
                table,
                generators: Vec::new(),
                cells,
            })
            .collect();
        Self::assemble(target, rows)
    }

    fn assemble(target: RelSchema, rows: Vec<MaterializedRow>) -> Self {
        let mut facts: Vec<Fact> = Vec::new();
        let mut seen: HashMap<(&str, &[Cell]), FactId> = HashMap::new();
        let mut fact_of_row = Vec::with_capacity(rows.len());
        let mut row_of = HashMap::new();
        let mut blanks = HashSet::new();
        for (i, r) in rows.iter().enumerate() {
            for g in &r.generators {
                row_of.insert(g.clone(), i);
            }
            blanks.extend(r.cells.iter().filter_map(|c| match c {
                Cell::Blank(n) => Some(*n),
                Cell::Const(_) => None,
            }));
            let id = *seen.entry((r.table.as_str(), r.cells.as_slice())).or_insert_with(|| {
                facts.push(Fact {
                    table: r.table.clone(),
                    cells: r.cells.clone(),
                    rows: Vec::new(),
                });
                facts.len() - 1
            });
            facts[id].rows.push(i);
            fact_of_row.push(id);
        }
        TripleInstance {
            target,
            blanks: blanks.len(),
            rows,
            facts,
            row_of,
            fact_of_row,
        }
    }

    pub fn target(&self) -> &RelSchema {
        &self.target
    }

    /// Bag view.
    pub fn rows(&self) -> &[MaterializedRow] {
        &self.rows
    }

    /// Set view.
    pub fn facts(&self) -> &[Fact] {
        &self.facts
    }

    pub fn facts_of<'a>(&'a self, table: &'a str) -> impl Iterator<Item = (FactId, &'a Fact)> + 'a {
        self.facts.iter().enumerate().filter(move |(_, f)| f.table == table)
    }

    pub fn fact_of_row(&self, row: usize) -> FactId {
        self.fact_of_row[row]
    }

    /// The fact an output row generator materialized into.
    pub fn fact_for(&self, g: &OutRow) -> Option<FactId> {
        self.row_of.get(g).map(|&i| self.fact_of_row[i])
    }

    pub fn fact_count(&self) -> usize {
        self.facts.len()
    }

    pub fn blank_count(&self) -> usize {
        self.blanks
    }

    /// The cell of `fact` in column `col`.
    pub fn cell<'a>(&'a self, fact: &'a Fact, col: &str) -> Option<&'a Cell> {
        let i = self.target.table(&fact.table)?.column_index(col)?;
        fact.cells.get(i)
    }
}

/// Turns the closed classes into an output instance.
///
/// Output rows in one class become one bag row. A cell whose class holds a
/// constant is that constant; every other class gets one blank node, labelled
/// `_:b0, _:b1, ...` by first appearance when scanning `out_rows` in order and
/// columns in declaration order. Cells no equation mentions get a fresh blank.
pub fn materialize(classes: &CongruenceClasses, out_rows: &[OutRow], target: &RelSchema) -> TripleInstance {
    let mut groups: Vec<Vec<OutRow>> = Vec::new();
    let mut group_of_class: HashMap<usize, usize> = HashMap::new();
    let mut group_class: Vec<Option<usize>> = Vec::new();
    for g in out_rows {
        match classes.class_of(&g.term()) {
            Some(c) => match group_of_class.get(&c) {
                Some(&i) => groups[i].push(g.clone()),
                None => {
                    group_of_class.insert(c, groups.len());
                    groups.push(vec![g.clone()]);
                    group_class.push(Some(c));
                }
            },
            None => {
                groups.push(vec![g.clone()]);
                group_class.push(None);
            }
        }
    }

    let mut labels: HashMap<usize, usize> = HashMap::new();
    let mut next = 0usize;
    let mut fresh = || {
        next += 1;
        next - 1
    };
    let mut rows = Vec::with_capacity(groups.len());
    for (generators, class) in groups.into_iter().zip(group_class) {
        let table = generators[0].table.clone();
        let decl = target.table(&table).expect("output row ranges over a target table");
        let cells = decl
            .columns
            .iter()
            .map(|col| match class.and_then(|c| classes.cell_class(c, &col.name)) {
                Some(cc) => match classes.constant(cc) {
                    Some(k) => Cell::Const(k.to_string()),
                    None => Cell::Blank(*labels.entry(cc).or_insert_with(&mut fresh)),
                },
                None => Cell::Blank(fresh()),
            })
            .collect();
        rows.push(MaterializedRow {
            table,
            generators,
            cells,
        });
    }
    TripleInstance::assemble(target.clone(), rows)
}
