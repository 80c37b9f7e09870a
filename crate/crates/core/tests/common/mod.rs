//! Independent oracles and a seeded random corpus shared by the
//! integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::PathBuf;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use coeval::coeval::{
    apply_fk_identifications, close, coevaluate, generate_equations, Cell, CoevalError, Equation, FactId, QuerySet,
    Term, TripleInstance,
};
use coeval::eval::{compute_unit, evaluate, isomorphic};
use coeval::model::{ForeignKey, RelInstance, RelSchema, RowId, TableData, TableDecl, Value};
use coeval::qlang::{Atom, FromItem, Query, QueryHom, SelectItem, VarCol};

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

/// One randomized co-evaluation problem.
#[derive(Clone, Debug)]
pub struct Case {
    pub seed: u64,
    pub inst: RelInstance,
    pub qs: QuerySet,
    pub homs: Vec<QueryHom>,
}

const TARGET_COLS: [&str; 3] = ["a", "b", "c"];
const MAX_VARS: usize = 6;

fn target_schema(rng: &mut StdRng) -> RelSchema {
    let n = rng.random_range(1..=2);
    let tables = (0..n)
        .map(|i| TableDecl::new(format!("U{i}"), &TARGET_COLS[..rng.random_range(2..=3)]))
        .collect();
    RelSchema::new(tables, vec![]).unwrap()
}

fn random_cell(rng: &mut StdRng, q: &Query, tgt: &RelSchema) -> VarCol {
    let i = rng.random_range(0..q.froms.len());
    cell_of(rng, &q.froms[i], tgt)
}

fn cell_of(rng: &mut StdRng, f: &FromItem, tgt: &RelSchema) -> VarCol {
    let t = tgt.table(&f.table).unwrap();
    let c = &t.columns[rng.random_range(0..t.columns.len())].name;
    VarCol::new(f.var.clone(), c.clone())
}

/// Joins each FROM variable from `start` on to some earlier one, so that no
/// query is a cross product.
fn link(rng: &mut StdRng, q: &mut Query, tgt: &RelSchema, start: usize) {
    for j in start..q.froms.len() {
        let lhs = cell_of(rng, &q.froms[j], tgt);
        let i = rng.random_range(0..j);
        let rhs = cell_of(rng, &q.froms[i], tgt);
        q.wheres.push(Atom::eq_cells(lhs, rhs));
    }
}

/// A random instance with up to 4 source tables of up to 5 rows, queries of
/// up to 6 FROM variables and random equality atoms. A foreign key from
/// table `i` to an earlier table `k` is made valid by embedding a renamed
/// copy of `Q_k` into `Q_i`; the homomorphism is that renaming.
/// Draws again when some query's WHERE clause equates two constants, since
/// no homomorphism into such a query exists.
pub fn random_case(seed: u64) -> Case {
    let mut rng = StdRng::seed_from_u64(seed);
    loop {
        if let Some(c) = try_case(seed, &mut rng) {
            return c;
        }
    }
}

fn try_case(seed: u64, rng: &mut StdRng) -> Option<Case> {
    let tgt = target_schema(rng);
    let n_tables = rng.random_range(1..=4);

    let mut tables = Vec::new();
    let mut fks = Vec::new();
    let mut queries: Vec<Query> = Vec::new();
    let mut homs = Vec::new();
    for i in 0..n_tables {
        let name = format!("S{i}");
        let mut cols: Vec<String> = (0..rng.random_range(1..=3)).map(|c| format!("x{c}")).collect();
        let mut q = Query {
            name: name.clone(),
            target_table: name.clone(),
            selects: vec![],
            froms: vec![],
            wheres: vec![],
        };
        let mut budget = rng.random_range(1..=MAX_VARS);
        for (k, qk) in queries.iter().enumerate() {
            if qk.froms.len() > budget || !rng.random_bool(0.4) {
                continue;
            }
            budget -= qk.froms.len();
            let col = format!("f{k}");
            let rename = |v: &str| format!("{v}_{k}");
            q.froms.extend(qk.froms.iter().map(|f| FromItem {
                var: rename(&f.var),
                table: f.table.clone(),
            }));
            q.wheres.extend(qk.wheres.iter().map(|a| match a {
                Atom::VarVar(x, y) => {
                    Atom::eq_cells(VarCol::new(rename(&x.var), &x.col), VarCol::new(rename(&y.var), &y.col))
                }
                Atom::VarConst(x, c) => Atom::eq_const(VarCol::new(rename(&x.var), &x.col), c.clone()),
            }));
            homs.push(QueryHom {
                from_query: qk.name.clone(),
                to_query: name.clone(),
                var_map: qk.froms.iter().map(|f| (f.var.clone(), rename(&f.var))).collect(),
                fk_column: Some(col.clone()),
            });
            fks.push(ForeignKey {
                table: name.clone(),
                column: col.clone(),
                target: format!("S{k}"),
            });
            cols.push(col);
        }
        let fresh = if q.froms.is_empty() {
            budget.max(1)
        } else {
            rng.random_range(0..=budget)
        };
        for v in 0..fresh {
            let t = &tgt.tables()[rng.random_range(0..tgt.tables().len())];
            q.froms.push(FromItem {
                var: format!("v{v}"),
                table: t.name.clone(),
            });
        }
        let start = q.froms.len() - fresh;
        link(rng, &mut q, &tgt, start.max(1));
        for _ in 0..rng.random_range(0..=3) {
            let lhs = random_cell(rng, &q, &tgt);
            if rng.random_bool(0.1) {
                q.wheres
                    .push(Atom::eq_const(lhs, format!("k{}", rng.random_range(0..2))));
            } else {
                let rhs = random_cell(rng, &q, &tgt);
                q.wheres.push(Atom::eq_cells(lhs, rhs));
            }
        }
        q.wheres.shuffle(rng);
        // Distinct selected cells where possible, so that most cases stay
        // consistent.
        let mut pool: Vec<VarCol> = q
            .froms
            .iter()
            .flat_map(|f| {
                tgt.table(&f.table)
                    .unwrap()
                    .column_names()
                    .map(|c| VarCol::new(f.var.clone(), c))
            })
            .collect();
        pool.shuffle(rng);
        for (i, c) in cols.iter().enumerate() {
            let expr = pool.get(i).cloned().unwrap_or_else(|| random_cell(rng, &q, &tgt));
            q.selects.push(SelectItem { expr, alias: c.clone() });
        }
        tables.push(TableDecl::new(name, &cols));
        queries.push(q);
    }
    let src = RelSchema::new(tables, fks).unwrap();

    // Every referenced table gets at least one row. Keys point backwards,
    // so visiting them from the last table down settles every count.
    let mut counts: Vec<usize> = (0..n_tables).map(|_| rng.random_range(0..=5)).collect();
    for fk in src.foreign_keys().iter().rev() {
        let k = src.table_index(&fk.target).unwrap();
        let i = src.table_index(&fk.table).unwrap();
        if counts[i] > 0 {
            counts[k] = counts[k].max(1);
        }
    }
    let mut frags = Vec::new();
    for (t, &n) in src.tables().iter().zip(&counts) {
        let mut rows = Vec::new();
        for _ in 0..n {
            let row = t
                .columns
                .iter()
                .map(|c| match src.foreign_key(&t.name, &c.name) {
                    Some(fk) => {
                        let k = src.table_index(&fk.target).unwrap();
                        Value::Ref(RowId::new(fk.target.clone(), rng.random_range(0..counts[k])))
                    }
                    None => Value::Literal(format!("v{}", rng.random_range(0..3))),
                })
                .collect();
            rows.push(row);
        }
        frags.push(TableData {
            table: t.name.clone(),
            rows,
        });
    }
    let inst = RelInstance::new(src.clone(), frags).unwrap();
    let qs = QuerySet::new(src, tgt, queries).unwrap();
    qs.check_homs(&homs).is_empty().then_some(Case { seed, inst, qs, homs })
}

/// The same problem with every table's rows and every query's FROM and
/// WHERE clauses shuffled. References are renumbered to follow their rows.
pub fn permuted(case: &Case, seed: u64) -> Case {
    let mut rng = StdRng::seed_from_u64(seed);
    let schema = case.inst.schema().clone();
    let mut inverse: HashMap<String, Vec<usize>> = HashMap::new();
    let mut orders = Vec::new();
    for t in schema.tables() {
        let mut order: Vec<usize> = (0..case.inst.row_count(&t.name)).collect();
        order.shuffle(&mut rng);
        let mut inv = vec![0; order.len()];
        for (new, &old) in order.iter().enumerate() {
            inv[old] = new;
        }
        inverse.insert(t.name.clone(), inv);
        orders.push(order);
    }
    let frags = schema
        .tables()
        .iter()
        .zip(&orders)
        .map(|(t, order)| TableData {
            table: t.name.clone(),
            rows: order
                .iter()
                .map(|&old| {
                    case.inst
                        .row(&RowId::new(t.name.clone(), old))
                        .unwrap()
                        .iter()
                        .map(|v| match v {
                            Value::Ref(r) => Value::Ref(RowId::new(r.table.clone(), inverse[&r.table][r.ordinal])),
                            lit => lit.clone(),
                        })
                        .collect()
                })
                .collect(),
        })
        .collect();
    let queries = case
        .qs
        .queries()
        .iter()
        .map(|q| {
            let mut q = q.clone();
            q.froms.shuffle(&mut rng);
            q.wheres.shuffle(&mut rng);
            q
        })
        .collect();
    Case {
        seed: case.seed,
        inst: RelInstance::new(schema, frags).unwrap(),
        qs: QuerySet::new(case.qs.source().clone(), case.qs.target().clone(), queries).unwrap(),
        homs: case.homs.clone(),
    }
}

/// A random query over the target schema whose constants are drawn from
/// the instance, so that some of its atoms can match.
pub fn random_target_query(rng: &mut StdRng, inst: &TripleInstance) -> Query {
    let tgt = inst.target();
    let consts: Vec<String> = inst
        .facts()
        .iter()
        .flat_map(|f| f.cells.iter().filter_map(|c| c.as_const().map(str::to_string)))
        .chain(["k0".to_string()])
        .collect();
    let mut q = Query {
        name: "Probe".into(),
        target_table: "Probe".into(),
        selects: vec![],
        froms: vec![],
        wheres: vec![],
    };
    for v in 0..rng.random_range(1..=3) {
        let t = &tgt.tables()[rng.random_range(0..tgt.tables().len())];
        q.froms.push(FromItem {
            var: format!("p{v}"),
            table: t.name.clone(),
        });
    }
    link(rng, &mut q, tgt, 1);
    for _ in 0..rng.random_range(0..=2) {
        let lhs = random_cell(rng, &q, tgt);
        if rng.random_bool(0.3) {
            q.wheres
                .push(Atom::eq_const(lhs, consts[rng.random_range(0..consts.len())].clone()));
        } else {
            let rhs = random_cell(rng, &q, tgt);
            q.wheres.push(Atom::eq_cells(lhs, rhs));
        }
    }
    for s in 0..rng.random_range(1..=2) {
        let expr = random_cell(rng, &q, tgt);
        q.selects.push(SelectItem {
            expr,
            alias: format!("s{s}"),
        });
    }
    q
}

/// The partition a naive fixpoint computes: merge both sides of every
/// equation, then repeatedly merge same-column cells of output rows that
/// share a class, until nothing changes. `None` when some class holds two
/// different constants.
pub fn naive_closure(eqs: &[Equation]) -> Option<BTreeSet<BTreeSet<Term>>> {
    let mut terms: BTreeSet<Term> = BTreeSet::new();
    for e in eqs {
        for t in [&e.lhs, &e.rhs] {
            terms.insert(t.clone());
            if let Some(r) = t.out_row() {
                terms.insert(r);
            }
        }
    }
    let terms: Vec<Term> = terms.into_iter().collect();
    let id: HashMap<&Term, usize> = terms.iter().enumerate().map(|(i, t)| (t, i)).collect();
    let mut label: Vec<usize> = (0..terms.len()).collect();
    let merge = |label: &mut Vec<usize>, a: usize, b: usize| {
        let (la, lb) = (label[a], label[b]);
        if la == lb {
            return false;
        }
        for l in label.iter_mut() {
            if *l == lb {
                *l = la;
            }
        }
        true
    };
    for e in eqs {
        merge(&mut label, id[&e.lhs], id[&e.rhs]);
    }
    let cells: Vec<(usize, usize, &str)> = terms
        .iter()
        .enumerate()
        .filter_map(|(i, t)| match t {
            Term::OutCell { col, .. } => Some((i, id[&t.out_row().unwrap()], col.as_str())),
            _ => None,
        })
        .collect();
    loop {
        let mut changed = false;
        let mut first: HashMap<(usize, &str), usize> = HashMap::new();
        for &(cell, row, col) in &cells {
            match first.get(&(label[row], col)) {
                Some(&other) => changed |= merge(&mut label, other, cell),
                None => {
                    first.insert((label[row], col), cell);
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut classes: BTreeMap<usize, BTreeSet<Term>> = BTreeMap::new();
    for (i, t) in terms.iter().enumerate() {
        classes.entry(label[i]).or_default().insert(t.clone());
    }
    for c in classes.values() {
        if c.iter().filter(|t| t.is_const()).count() > 1 {
            return None;
        }
    }
    Some(classes.into_values().collect())
}

/// Every assignment of facts to FROM variables, in FROM order, keeping the
/// ones under which all WHERE atoms hold. Atoms are checked as soon as the
/// variables they mention are bound.
pub fn brute_force_eval(q: &Query, inst: &TripleInstance) -> Vec<(Vec<FactId>, Vec<Cell>)> {
    let tgt = inst.target();
    let index = |vc: &VarCol| {
        let v = q.var_index(&vc.var).unwrap();
        let c = tgt.table(&q.froms[v].table).unwrap().column_index(&vc.col).unwrap();
        (v, c)
    };
    let candidates: Vec<Vec<FactId>> = q
        .froms
        .iter()
        .map(|f| inst.facts_of(&f.table).map(|(id, _)| id).collect())
        .collect();
    let mut due: Vec<Vec<&Atom>> = vec![Vec::new(); q.froms.len()];
    for a in &q.wheres {
        let last = a.cells().map(|vc| index(vc).0).max().unwrap();
        due[last].push(a);
    }
    let holds = |a: &Atom, asg: &[FactId]| {
        let cell = |vc: &VarCol| {
            let (v, c) = index(vc);
            &inst.facts()[asg[v]].cells[c]
        };
        match a {
            Atom::VarVar(x, y) => cell(x) == cell(y),
            Atom::VarConst(x, k) => cell(x).as_const() == Some(k.as_str()),
        }
    };
    let mut out = Vec::new();
    let mut asg = Vec::new();
    fn go(
        depth: usize,
        asg: &mut Vec<FactId>,
        candidates: &[Vec<FactId>],
        due: &[Vec<&Atom>],
        holds: &dyn Fn(&Atom, &[FactId]) -> bool,
        out: &mut Vec<Vec<FactId>>,
    ) {
        if depth == candidates.len() {
            out.push(asg.clone());
            return;
        }
        for &f in &candidates[depth] {
            asg.push(f);
            if due[depth].iter().all(|a| holds(a, asg)) {
                go(depth + 1, asg, candidates, due, holds, out);
            }
            asg.pop();
        }
    }
    go(0, &mut asg, &candidates, &due, &holds, &mut out);
    let mut rows: Vec<(Vec<FactId>, Vec<Cell>)> = out
        .into_iter()
        .map(|asg| {
            let cells = q
                .selects
                .iter()
                .map(|s| {
                    let (v, c) = index(&s.expr);
                    inst.facts()[asg[v]].cells[c].clone()
                })
                .collect();
            (asg, cells)
        })
        .collect();
    rows.sort();
    rows
}

/// The first WHERE atom of `q` that `assignment` violates, read directly
/// off the fact cells.
pub fn violated_atom(q: &Query, inst: &TripleInstance, assignment: &[FactId]) -> Option<String> {
    let cell = |vc: &VarCol| {
        let v = q.var_index(&vc.var).unwrap();
        inst.cell(&inst.facts()[assignment[v]], &vc.col).cloned()
    };
    q.wheres.iter().find_map(|a| {
        let ok = match a {
            Atom::VarVar(x, y) => cell(x).is_some() && cell(x) == cell(y),
            Atom::VarConst(x, k) => cell(x).as_ref().and_then(Cell::as_const) == Some(k.as_str()),
        };
        (!ok).then(|| a.to_string())
    })
}

/// What one randomized case showed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Checked,
    /// The equations were inconsistent, and the oracle agreed.
    Inconsistent,
}

fn equations(case: &Case) -> Result<Vec<Equation>, String> {
    let eqs = generate_equations(&case.inst, &case.qs);
    apply_fk_identifications(eqs, &case.homs, &case.inst, &case.qs).map_err(|e| format!("seed {}: {e}", case.seed))
}

/// `close` yields exactly the naive fixpoint partition, and fails exactly
/// when the oracle finds two constants in one class.
pub fn check_closure(case: &Case) -> Result<Outcome, String> {
    let eqs = equations(case)?;
    let oracle = naive_closure(&eqs);
    match (close(&eqs), oracle) {
        (Err(_), None) => Ok(Outcome::Inconsistent),
        (Ok(c), Some(o)) => {
            let got: BTreeSet<BTreeSet<Term>> = c.partition().into_iter().map(|m| m.into_iter().collect()).collect();
            if got == o {
                Ok(Outcome::Checked)
            } else {
                Err(format!(
                    "seed {}: partitions differ ({} classes vs oracle {})",
                    case.seed,
                    got.len(),
                    o.len()
                ))
            }
        }
        (Err(e), Some(_)) => Err(format!(
            "seed {}: close failed but the oracle is consistent: {e}",
            case.seed
        )),
        (Ok(_), None) => Err(format!(
            "seed {}: close succeeded but the oracle is inconsistent",
            case.seed
        )),
    }
}

/// `compute_unit` succeeds, and every input row's assignment satisfies its
/// query's WHERE atoms when checked directly against the facts.
pub fn check_unit(case: &Case) -> Result<Outcome, String> {
    let co = match coevaluate(&case.inst, &case.qs, &case.homs) {
        Ok(co) => co,
        Err(CoevalError::Inconsistent(_)) => return Ok(Outcome::Inconsistent),
        Err(e) => return Err(format!("seed {}: {e}", case.seed)),
    };
    let rt = compute_unit(&case.inst, &case.qs, &co).map_err(|e| format!("seed {}: {e}", case.seed))?;
    for t in &rt.tables {
        let q = case.qs.query_for(&t.table).unwrap();
        if t.unit.len() != case.inst.row_count(&t.table) {
            return Err(format!(
                "seed {}: unit of {} has {} entries",
                case.seed,
                t.table,
                t.unit.len()
            ));
        }
        for (p, &i) in t.unit.iter().enumerate() {
            if let Some(atom) = violated_atom(q, &co.instance, &t.rows[i].assignment) {
                return Err(format!("seed {}: {}#{p} violates {atom}", case.seed, t.table));
            }
        }
    }
    Ok(Outcome::Checked)
}

/// `evaluate` returns exactly the brute-force answers, for every source
/// query and a few random probe queries.
pub fn check_eval(case: &Case) -> Result<Outcome, String> {
    let co = match coevaluate(&case.inst, &case.qs, &case.homs) {
        Ok(co) => co,
        Err(CoevalError::Inconsistent(_)) => return Ok(Outcome::Inconsistent),
        Err(e) => return Err(format!("seed {}: {e}", case.seed)),
    };
    let mut rng = StdRng::seed_from_u64(case.seed ^ 0x5eed);
    let probes: Vec<Query> = (0..3).map(|_| random_target_query(&mut rng, &co.instance)).collect();
    for q in case.qs.queries().iter().chain(&probes) {
        let got: Vec<(Vec<FactId>, Vec<Cell>)> = evaluate(q, &co.instance)
            .map_err(|e| format!("seed {}: {e}", case.seed))?
            .into_iter()
            .map(|r| (r.assignment, r.cells))
            .collect();
        let want = brute_force_eval(q, &co.instance);
        if got != want {
            return Err(format!(
                "seed {}: evaluate gives {} rows, brute force {} for\n{q}",
                case.seed,
                got.len(),
                want.len()
            ));
        }
    }
    Ok(Outcome::Checked)
}

/// Shuffling rows and FROM clauses gives an isomorphic output.
pub fn check_permutation(case: &Case, seed: u64) -> Result<Outcome, String> {
    let shuffled = permuted(case, seed);
    let a = coevaluate(&case.inst, &case.qs, &case.homs);
    let b = coevaluate(&shuffled.inst, &shuffled.qs, &shuffled.homs);
    match (a, b) {
        (Ok(a), Ok(b)) => {
            if a.instance.fact_count() == b.instance.fact_count() && isomorphic(&a.instance, &b.instance) {
                Ok(Outcome::Checked)
            } else {
                Err(format!("seed {}: shuffle {seed} changes the output", case.seed))
            }
        }
        (Err(CoevalError::Inconsistent(_)), Err(CoevalError::Inconsistent(_))) => Ok(Outcome::Inconsistent),
        (a, b) => Err(format!(
            "seed {}: shuffle {seed} changes consistency ({:?} vs {:?})",
            case.seed,
            a.err().map(|e| e.to_string()),
            b.err().map(|e| e.to_string())
        )),
    }
}
