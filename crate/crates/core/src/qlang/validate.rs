use std::collections::HashSet;

use super::{Query, VarCol};
use crate::diagnostics::Diagnostic;
use crate::model::RelSchema;

/// Checks `q` against the source schema it populates and the target schema
/// it ranges over. Returns every problem found; an empty list means valid.
pub fn validate_query(q: &Query, src: &RelSchema, tgt: &RelSchema) -> Vec<Diagnostic> {
    let subject = if q.name.is_empty() {
        "query".to_string()
    } else {
        format!("query {}", q.name)
    };
    let mut out = Vec::new();
    let mut diag = |msg: String| out.push(Diagnostic::new(subject.clone(), msg));

    let target = src.table(&q.target_table);
    if target.is_none() {
        diag(format!(
            "target table `{}` is not declared in the source schema",
            q.target_table
        ));
    }

    let mut vars = HashSet::new();
    for f in &q.froms {
        if !vars.insert(f.var.as_str()) {
            diag(format!("FROM variable `{}` is bound more than once", f.var));
        }
        if tgt.table(&f.table).is_none() {
            diag(format!(
                "table `{}` bound by `{}` is not declared in the target schema",
                f.table, f.var
            ));
        }
    }
    if q.froms.is_empty() {
        diag("FROM clause is empty".into());
    }

    let check_cell = |vc: &VarCol, diag: &mut dyn FnMut(String)| match q.from_item(&vc.var) {
        None => diag(format!("variable `{}` in `{vc}` is not bound in FROM", vc.var)),
        Some(f) => {
            if let Some(t) = tgt.table(&f.table) {
                if !t.has_column(&vc.col) {
                    diag(format!("`{}` is not a column of `{}` (in `{vc}`)", vc.col, f.table));
                }
            }
        }
    };
    for s in &q.selects {
        check_cell(&s.expr, &mut diag);
    }
    for a in &q.wheres {
        for vc in a.cells() {
            check_cell(vc, &mut diag);
        }
    }

    if let Some(t) = target {
        let mut seen = HashSet::new();
        for s in &q.selects {
            if !t.has_column(&s.alias) {
                diag(format!("alias `{}` does not match any column of {}", s.alias, t.name));
            } else if !seen.insert(s.alias.as_str()) {
                diag(format!("alias `{}` is selected more than once", s.alias));
            }
        }
        for c in t.column_names() {
            if !seen.contains(c) {
                diag(format!("column `{c}` of {} is not selected", t.name));
            }
        }
    }
    out
}
