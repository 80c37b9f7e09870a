//! Forward evaluation of queries over an output instance, and the round trip
//! from an input instance through co-evaluation and back.

mod iso;

use std::collections::HashMap;

use serde::Serialize;
use thiserror::Error;

use crate::coeval::{Cell, Coevaluation, FactId, OutRow, QuerySet, TripleInstance};
use crate::model::{ColumnKind, RelInstance, Value};
use crate::qlang::{Atom, Query, VarCol};

pub use iso::isomorphic;

/// A satisfying assignment of FROM variables to facts, with the selected
/// cells.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RoundTripRow {
    /// One fact per FROM variable, in FROM order.
    pub assignment: Vec<FactId>,
    /// One cell per SELECT item, in SELECT order.
    pub cells: Vec<Cell>,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("variable `{var}` ranges over `{table}`, which the instance does not have")]
    UnknownTable { var: String, table: String },
    #[error("`{0}` is not a column of the instance")]
    UnknownColumn(VarCol),
    #[error("row {row}: {reason}")]
    UnitViolation { row: String, reason: String },
}

struct Prepared<'a> {
    inst: &'a TripleInstance,
    /// FROM variable -> column name -> column index.
    cols: Vec<HashMap<&'a str, usize>>,
    vars: HashMap<&'a str, usize>,
}

impl<'a> Prepared<'a> {
    fn new(q: &'a Query, inst: &'a TripleInstance) -> Result<Self, EvalError> {
        let mut cols = Vec::new();
        for f in &q.froms {
            let decl = inst.target().table(&f.table).ok_or_else(|| EvalError::UnknownTable {
                var: f.var.clone(),
                table: f.table.clone(),
            })?;
            cols.push(
                decl.columns
                    .iter()
                    .enumerate()
                    .map(|(i, c)| (c.name.as_str(), i))
                    .collect(),
            );
        }
        let vars = q.froms.iter().enumerate().map(|(i, f)| (f.var.as_str(), i)).collect();
        Ok(Prepared { inst, cols, vars })
    }

    fn slot(&self, vc: &VarCol) -> Result<(usize, usize), EvalError> {
        let v = *self
            .vars
            .get(vc.var.as_str())
            .ok_or_else(|| EvalError::UnknownColumn(vc.clone()))?;
        let c = *self.cols[v]
            .get(vc.col.as_str())
            .ok_or_else(|| EvalError::UnknownColumn(vc.clone()))?;
        Ok((v, c))
    }

    fn cell(&self, fact: FactId, col: usize) -> &'a Cell {
        &self.inst.facts()[fact].cells[col]
    }
}

enum Check {
    Const(usize, usize, Cell),
    Join((usize, usize), (usize, usize)),
}

/// One variable to bind: optionally looked up by one column through a hash
/// index on an earlier variable's cell, then checked against the others.
struct Step {
    var: usize,
    lookup: Option<(usize, (usize, usize))>,
    checks: Vec<((usize, usize), (usize, usize))>,
}

struct Search<'s, 'a> {
    steps: &'s [Step],
    indexes: &'s [Option<HashMap<&'a Cell, Vec<FactId>>>],
    cands: &'s [Vec<FactId>],
    p: &'s Prepared<'a>,
}

impl Search<'_, '_> {
    fn run(&self, depth: usize, assignment: &mut Vec<FactId>, out: &mut Vec<Vec<FactId>>) {
        if depth == self.steps.len() {
            out.push(assignment.clone());
            return;
        }
        let s = &self.steps[depth];
        let pool: &[FactId] = match (&s.lookup, &self.indexes[depth]) {
            (Some((_, (ov, oc))), Some(ix)) => ix.get(self.p.cell(assignment[*ov], *oc)).map_or(&[], Vec::as_slice),
            _ => &self.cands[s.var],
        };
        for &id in pool {
            let ok = s
                .checks
                .iter()
                .all(|((_, mc), (ov, oc))| self.p.cell(id, *mc) == self.p.cell(assignment[*ov], *oc));
            if ok {
                assignment[s.var] = id;
                self.run(depth + 1, assignment, out);
            }
        }
        assignment[s.var] = usize::MAX;
    }
}

/// All assignments satisfying the WHERE clause of `q`, sorted.
///
/// Candidates for each variable are first filtered by its constant atoms.
/// Variables are then bound greedily, preferring one joined to an already
/// bound variable so its candidates come from a hash index.
pub fn evaluate(q: &Query, inst: &TripleInstance) -> Result<Vec<RoundTripRow>, EvalError> {
    let p = Prepared::new(q, inst)?;
    let n = q.froms.len();
    let mut checks = Vec::new();
    for atom in &q.wheres {
        checks.push(match atom {
            Atom::VarConst(a, k) => {
                let (v, c) = p.slot(a)?;
                Check::Const(v, c, Cell::Const(k.clone()))
            }
            Atom::VarVar(a, b) => Check::Join(p.slot(a)?, p.slot(b)?),
        });
    }
    let selects: Vec<(usize, usize)> = q.selects.iter().map(|s| p.slot(&s.expr)).collect::<Result<_, _>>()?;

    let cands: Vec<Vec<FactId>> = q
        .froms
        .iter()
        .enumerate()
        .map(|(v, f)| {
            inst.facts_of(&f.table)
                .map(|(id, _)| id)
                .filter(|&id| {
                    checks.iter().all(|c| match c {
                        Check::Const(cv, col, k) if *cv == v => p.cell(id, *col) == k,
                        Check::Join((a, ca), (b, cb)) if *a == v && *b == v => p.cell(id, *ca) == p.cell(id, *cb),
                        _ => true,
                    })
                })
                .collect()
        })
        .collect();
    if cands.iter().any(Vec::is_empty) {
        return Ok(Vec::new());
    }

    // binding order
    let mut order: Vec<usize> = Vec::with_capacity(n);
    let mut bound = vec![false; n];
    let joined = |x: usize, bound: &[bool]| {
        checks.iter().any(|c| match c {
            Check::Join((a, _), (b, _)) => (*a == x && bound[*b]) || (*b == x && bound[*a]),
            Check::Const(..) => false,
        })
    };
    for _ in 0..n {
        let next = (0..n)
            .filter(|&v| !bound[v])
            .min_by_key(|&v| (!joined(v, &bound), cands[v].len(), v))
            .expect("unbound variable left");
        bound[next] = true;
        order.push(next);
    }

    // for each step: a join to an earlier variable used for lookup, and the
    // checks that become decidable once this variable is bound
    let mut position = vec![0; n];
    for (i, &v) in order.iter().enumerate() {
        position[v] = i;
    }
    let mut steps = Vec::with_capacity(n);
    for (i, &v) in order.iter().enumerate() {
        let mut step = Step {
            var: v,
            lookup: None,
            checks: Vec::new(),
        };
        for c in &checks {
            if let Check::Join(a, b) = c {
                let (mine, other) = if a.0 == v {
                    (a, b)
                } else if b.0 == v {
                    (b, a)
                } else {
                    continue;
                };
                if other.0 == v || position[other.0] > i {
                    continue;
                }
                if step.lookup.is_none() {
                    step.lookup = Some((mine.1, *other));
                } else {
                    step.checks.push((*mine, *other));
                }
            }
        }
        steps.push(step);
    }
    let indexes: Vec<Option<HashMap<&Cell, Vec<FactId>>>> = steps
        .iter()
        .map(|s| {
            s.lookup.map(|(col, _)| {
                let mut m: HashMap<&Cell, Vec<FactId>> = HashMap::new();
                for &id in &cands[s.var] {
                    m.entry(p.cell(id, col)).or_default().push(id);
                }
                m
            })
        })
        .collect();

    let mut out = Vec::new();
    let mut found = Vec::new();
    let search = Search {
        steps: &steps,
        indexes: &indexes,
        cands: &cands,
        p: &p,
    };
    search.run(0, &mut vec![usize::MAX; n], &mut found);
    found.sort();
    for a in found {
        let cells = selects.iter().map(|&(v, c)| p.cell(a[v], c).clone()).collect();
        out.push(RoundTripRow { assignment: a, cells });
    }
    Ok(out)
}

/// Whether `assignment` (one fact per FROM variable) satisfies every WHERE atom.
pub fn satisfies(q: &Query, inst: &TripleInstance, assignment: &[FactId]) -> Result<Option<String>, EvalError> {
    let p = Prepared::new(q, inst)?;
    for atom in &q.wheres {
        let holds = match atom {
            Atom::VarConst(a, k) => {
                let (v, c) = p.slot(a)?;
                p.cell(assignment[v], c).as_const() == Some(k.as_str())
            }
            Atom::VarVar(a, b) => {
                let ((va, ca), (vb, cb)) = (p.slot(a)?, p.slot(b)?);
                p.cell(assignment[va], ca) == p.cell(assignment[vb], cb)
            }
        };
        if !holds {
            return Ok(Some(format!("atom `{atom}` does not hold")));
        }
    }
    Ok(None)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Bijective,
    /// Injective but not surjective: the round trip adds rows.
    Gain,
    /// Surjective but not injective: the round trip merges rows.
    Loss,
    GainAndLoss,
}

impl Classification {
    pub fn of(injective: bool, surjective: bool) -> Self {
        match (injective, surjective) {
            (true, true) => Classification::Bijective,
            (true, false) => Classification::Gain,
            (false, true) => Classification::Loss,
            (false, false) => Classification::GainAndLoss,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Classification::Bijective => "bijective",
            Classification::Gain => "gain",
            Classification::Loss => "loss",
            Classification::GainAndLoss => "gain_and_loss",
        }
    }
}

/// The unit of one source table.
#[derive(Clone, Debug, Serialize)]
pub struct UnitReport {
    pub table: String,
    pub input_rows: usize,
    /// Rows of the round-tripped table.
    pub rows: Vec<RoundTripRow>,
    /// For each input row, the index of its image in `rows`.
    pub unit: Vec<usize>,
    pub injective: bool,
    pub surjective: bool,
    pub classification: Classification,
}

impl UnitReport {
    /// Indices of round-tripped rows that are no input row's image.
    pub fn gained(&self) -> Vec<usize> {
        (0..self.rows.len()).filter(|i| !self.unit.contains(i)).collect()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RoundTrip {
    pub tables: Vec<UnitReport>,
    pub classification: Classification,
}

/// Evaluates every query over the co-evaluated instance and builds the unit
/// map from input rows to round-tripped rows.
///
/// Input row `p` maps to the assignment sending each FROM variable `v` to
/// the fact generated by `(p, v)`. That assignment must satisfy the WHERE
/// clause and select `p`'s attribute values; otherwise this is an error.
pub fn compute_unit(inst: &RelInstance, qs: &QuerySet, co: &Coevaluation) -> Result<RoundTrip, EvalError> {
    let out = &co.instance;
    let mut tables = Vec::new();
    for t in inst.schema().tables() {
        let Some(q) = qs.query_for(&t.name) else { continue };
        let rows = evaluate(q, out)?;
        let by_assignment: HashMap<&[FactId], usize> = rows
            .iter()
            .enumerate()
            .map(|(i, r)| (r.assignment.as_slice(), i))
            .collect();
        let mut unit = Vec::new();
        for p in inst.rows(&t.name) {
            let violation = |reason: String| EvalError::UnitViolation {
                row: p.to_string(),
                reason,
            };
            let assignment: Vec<FactId> = q
                .froms
                .iter()
                .map(|f| {
                    out.fact_for(&OutRow {
                        row: p.clone(),
                        var: f.var.clone(),
                        query: q.name.clone(),
                        table: f.table.clone(),
                    })
                    .ok_or_else(|| violation(format!("no fact for variable `{}`", f.var)))
                })
                .collect::<Result<_, _>>()?;
            if let Some(reason) = satisfies(q, out, &assignment)? {
                return Err(violation(reason));
            }
            let values = inst.row(&p).expect("row of this instance");
            for s in &q.selects {
                let c = t.column_index(&s.alias).expect("validated alias");
                if let (ColumnKind::Attribute, Value::Literal(v)) = (t.columns[c].kind, &values[c]) {
                    let fact = &out.facts()[assignment[q.var_index(&s.expr.var).expect("validated var")]];
                    let got = out.cell(fact, &s.expr.col);
                    if got.and_then(Cell::as_const) != Some(v.as_str()) {
                        return Err(violation(format!("`{}` selects {:?} instead of \"{v}\"", s.alias, got)));
                    }
                }
            }
            let i = *by_assignment
                .get(assignment.as_slice())
                .ok_or_else(|| violation("unit assignment missing from the evaluation".into()))?;
            unit.push(i);
        }
        let mut hit = vec![0usize; rows.len()];
        for &i in &unit {
            hit[i] += 1;
        }
        let injective = hit.iter().all(|&h| h <= 1);
        let surjective = hit.iter().all(|&h| h >= 1);
        tables.push(UnitReport {
            table: t.name.clone(),
            input_rows: unit.len(),
            rows,
            unit,
            injective,
            surjective,
            classification: Classification::of(injective, surjective),
        });
    }
    let injective = tables.iter().all(|t| t.injective);
    let surjective = tables.iter().all(|t| t.surjective);
    Ok(RoundTrip {
        tables,
        classification: Classification::of(injective, surjective),
    })
}
