//! Congruence closure over co-evaluation terms.
//!
//! The only function symbols are the column projections `OutRow -> OutCell`,
//! so congruence says: when two output rows are equal, so are their cells of
//! the same column. Each class keeps a table from column to one of its cells;
//! merging two classes merges the tables and queues the cells that collide.
//!
//! Every union is recorded as an edge of a proof forest labelled with the
//! equation or congruence step that caused it, so a constant clash can be
//! explained as a chain of input equations.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use super::{Equation, Term};
use crate::unionfind::UnionFind;

pub type ClassId = usize;

/// One step in the explanation of a merge.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum TraceStep {
    Equation(Equation),
    /// `left` and `right` are equal output rows, so their `column` cells are equal.
    Congruence {
        left: Term,
        right: Term,
        column: String,
    },
}

impl fmt::Display for TraceStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceStep::Equation(e) => write!(f, "{e}"),
            TraceStep::Congruence { left, right, column } => {
                write!(f, "{left}.{column} = {right}.{column}  (since {left} = {right})")
            }
        }
    }
}

/// Two different constants ended up in one class.
#[derive(Clone, Debug, Error, PartialEq, Eq)]
#[error("inconsistent equations: \"{left}\" = \"{right}\"\n{}", render_trace(.trace))]
pub struct InconsistencyError {
    pub left: String,
    pub right: String,
    pub trace: Vec<TraceStep>,
}

fn render_trace(trace: &[TraceStep]) -> String {
    trace.iter().map(|s| format!("  {s}")).collect::<Vec<_>>().join("\n")
}

/// The partition of all terms mentioned by a set of equations.
#[derive(Clone, Debug)]
pub struct CongruenceClasses {
    terms: Vec<Term>,
    index: HashMap<Term, usize>,
    class: Vec<ClassId>,
    members: Vec<Vec<usize>>,
    constants: Vec<Option<String>>,
    cells: HashMap<(ClassId, String), ClassId>,
}

impl CongruenceClasses {
    /// Number of classes. Class ids are `0..len()`, numbered by the first
    /// appearance of a member in the equations.
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    /// The class of `t`. A cell no equation mentions still has a class when
    /// its output row does and some congruent row's cell of that column is
    /// mentioned.
    pub fn class_of(&self, t: &Term) -> Option<ClassId> {
        match self.index.get(t) {
            Some(&i) => Some(self.class[i]),
            None => match t {
                Term::OutCell { col, .. } => {
                    let row = self.class_of(&t.out_row()?)?;
                    self.cell_class(row, col)
                }
                _ => None,
            },
        }
    }

    pub fn same_class(&self, a: &Term, b: &Term) -> bool {
        a == b || matches!((self.class_of(a), self.class_of(b)), (Some(x), Some(y)) if x == y)
    }

    pub fn constant(&self, c: ClassId) -> Option<&str> {
        self.constants[c].as_deref()
    }

    pub fn constant_of<'a>(&'a self, t: &'a Term) -> Option<&'a str> {
        match t {
            Term::Const(k) => Some(k),
            _ => self.class_of(t).and_then(|c| self.constant(c)),
        }
    }

    pub fn members(&self, c: ClassId) -> impl Iterator<Item = &Term> {
        self.members[c].iter().map(|&i| &self.terms[i])
    }

    /// The class of the `col` cells of the output rows in class `row_class`.
    pub fn cell_class(&self, row_class: ClassId, col: &str) -> Option<ClassId> {
        self.cells.get(&(row_class, col.to_string())).copied()
    }

    /// Classes as sorted term lists, sorted. Independent of equation order.
    pub fn partition(&self) -> Vec<Vec<Term>> {
        let mut out: Vec<Vec<Term>> = (0..self.len())
            .map(|c| {
                let mut m: Vec<Term> = self.members(c).cloned().collect();
                m.sort();
                m
            })
            .collect();
        out.sort();
        out
    }
}

#[derive(Clone, Copy, Debug)]
enum Reason {
    Equation(usize),
    /// Cells of output rows `.0` and `.1` (term ids).
    Congruence(usize, usize),
}

struct Engine<'e> {
    eqs: &'e [Equation],
    terms: Vec<Term>,
    index: HashMap<Term, usize>,
    uf: UnionFind,
    /// Per root: a constant term of the class.
    konst: Vec<Option<usize>>,
    /// Per root: column -> (cell term, output row term it belongs to).
    cells: Vec<BTreeMap<String, (usize, usize)>>,
    proof: Vec<Vec<(usize, Reason)>>,
    pending: VecDeque<(usize, usize, Reason)>,
}

impl<'e> Engine<'e> {
    fn intern(&mut self, t: &Term) -> usize {
        if let Some(&id) = self.index.get(t) {
            return id;
        }
        let owner = t.out_row().map(|r| self.intern(&r));
        let id = self.uf.make_set();
        self.terms.push(t.clone());
        self.index.insert(t.clone(), id);
        self.konst.push(t.is_const().then_some(id));
        self.cells.push(BTreeMap::new());
        self.proof.push(Vec::new());
        if let (Some(r), Term::OutCell { col, .. }) = (owner, t) {
            let root = self.uf.find(r);
            match self.cells[root].get(col) {
                Some(&(cell, other)) => self.pending.push_back((cell, id, Reason::Congruence(other, r))),
                None => {
                    self.cells[root].insert(col.clone(), (id, r));
                }
            }
        }
        id
    }

    fn union(&mut self, a: usize, b: usize, why: Reason) -> Result<(), InconsistencyError> {
        let (ra, rb) = (self.uf.find(a), self.uf.find(b));
        if ra == rb {
            return Ok(());
        }
        self.proof[a].push((b, why));
        self.proof[b].push((a, why));
        let (root, child) = self.uf.union(ra, rb).expect("distinct roots");
        match (self.konst[root], self.konst[child]) {
            (Some(x), Some(y)) if self.terms[x] != self.terms[y] => return Err(self.inconsistency(x, y)),
            (None, k) => self.konst[root] = k,
            _ => {}
        }
        let moved = std::mem::take(&mut self.cells[child]);
        for (col, (cell, owner)) in moved {
            match self.cells[root].get(&col) {
                Some(&(rcell, rowner)) => self.pending.push_back((rcell, cell, Reason::Congruence(rowner, owner))),
                None => {
                    self.cells[root].insert(col, (cell, owner));
                }
            }
        }
        Ok(())
    }

    fn drain(&mut self) -> Result<(), InconsistencyError> {
        while let Some((a, b, why)) = self.pending.pop_front() {
            self.union(a, b, why)?;
        }
        Ok(())
    }

    /// Edges on the proof-forest path from `x` to `y`.
    fn path(&self, x: usize, y: usize) -> Vec<(usize, usize, Reason)> {
        let mut prev: HashMap<usize, (usize, Reason)> = HashMap::new();
        let mut queue = VecDeque::from([x]);
        prev.insert(x, (x, Reason::Equation(usize::MAX)));
        while let Some(n) = queue.pop_front() {
            if n == y {
                break;
            }
            for &(m, why) in &self.proof[n] {
                if let std::collections::hash_map::Entry::Vacant(e) = prev.entry(m) {
                    e.insert((n, why));
                    queue.push_back(m);
                }
            }
        }
        let mut out = Vec::new();
        let mut cur = y;
        while cur != x {
            let (p, why) = prev[&cur];
            out.push((p, cur, why));
            cur = p;
        }
        out.reverse();
        out
    }

    fn explain(&self, x: usize, y: usize, out: &mut Vec<TraceStep>) {
        for (cell, _, why) in self.path(x, y) {
            match why {
                Reason::Equation(i) => {
                    let step = TraceStep::Equation(self.eqs[i].clone());
                    if !out.contains(&step) {
                        out.push(step);
                    }
                }
                Reason::Congruence(r1, r2) => {
                    self.explain(r1, r2, out);
                    let column = match &self.terms[cell] {
                        Term::OutCell { col, .. } => col.clone(),
                        _ => unreachable!("congruence edges join cells"),
                    };
                    let step = TraceStep::Congruence {
                        left: self.terms[r1].clone(),
                        right: self.terms[r2].clone(),
                        column,
                    };
                    if !out.contains(&step) {
                        out.push(step);
                    }
                }
            }
        }
    }

    fn inconsistency(&self, x: usize, y: usize) -> InconsistencyError {
        let mut trace = Vec::new();
        self.explain(x, y, &mut trace);
        let name = |i: usize| match &self.terms[i] {
            Term::Const(k) => k.clone(),
            t => t.to_string(),
        };
        InconsistencyError {
            left: name(x),
            right: name(y),
            trace,
        }
    }
}

/// Computes the smallest congruence containing `eqs`.
///
/// Fails when two distinct constants become equal; the error carries the
/// equations (and congruence steps) that force the clash.
pub fn close(eqs: &[Equation]) -> Result<CongruenceClasses, InconsistencyError> {
    let mut e = Engine {
        eqs,
        terms: Vec::new(),
        index: HashMap::new(),
        uf: UnionFind::new(),
        konst: Vec::new(),
        cells: Vec::new(),
        proof: Vec::new(),
        pending: VecDeque::new(),
    };
    for (i, eq) in eqs.iter().enumerate() {
        let a = e.intern(&eq.lhs);
        let b = e.intern(&eq.rhs);
        e.drain()?;
        e.union(a, b, Reason::Equation(i))?;
        e.drain()?;
    }

    let mut class_of_root: HashMap<usize, ClassId> = HashMap::new();
    let mut class = Vec::with_capacity(e.terms.len());
    let mut members: Vec<Vec<usize>> = Vec::new();
    let mut constants = Vec::new();
    for i in 0..e.terms.len() {
        let r = e.uf.find(i);
        let c = *class_of_root.entry(r).or_insert_with(|| {
            members.push(Vec::new());
            constants.push(e.konst[r].map(|k| match &e.terms[k] {
                Term::Const(s) => s.clone(),
                _ => unreachable!("constant slot holds a constant term"),
            }));
            members.len() - 1
        });
        class.push(c);
        members[c].push(i);
    }
    let mut cells = HashMap::new();
    for (r, table) in e.cells.iter().enumerate() {
        if let Some(&rc) = class_of_root.get(&r) {
            if e.uf.find_const(r) != r {
                continue;
            }
            for (col, &(cell, _)) in table {
                cells.insert((rc, col.clone()), class[cell]);
            }
        }
    }
    Ok(CongruenceClasses {
        terms: e.terms,
        index: e.index,
        class,
        members,
        constants,
        cells,
    })
}
