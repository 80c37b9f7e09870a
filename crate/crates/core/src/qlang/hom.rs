use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use super::{Atom, Query, VarCol};
use crate::diagnostics::Diagnostic;
use crate::unionfind::UnionFind;

/// A homomorphism of queries `from_query -> to_query`, given as a map from
/// the FROM variables of `from_query` to FROM variables of `to_query`.
///
/// Used to populate foreign keys: for a foreign key `R_i.col -> R_k` the
/// homomorphism goes from the query of `R_k` to the query of `R_i`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct QueryHom {
    pub from_query: String,
    pub to_query: String,
    pub var_map: BTreeMap<String, String>,
    /// Foreign-key column of `to_query`'s table this homomorphism serves.
    /// `None` serves every foreign key between the two tables.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fk_column: Option<String>,
}

impl QueryHom {
    pub fn identity(q: &Query) -> Self {
        QueryHom {
            from_query: q.name.clone(),
            to_query: q.name.clone(),
            var_map: q.froms.iter().map(|f| (f.var.clone(), f.var.clone())).collect(),
            fk_column: None,
        }
    }

    /// `other ∘ self`: first `self`, then `other`.
    pub fn then(&self, other: &QueryHom) -> QueryHom {
        QueryHom {
            from_query: self.from_query.clone(),
            to_query: other.to_query.clone(),
            var_map: self
                .var_map
                .iter()
                .filter_map(|(k, v)| other.var_map.get(v).map(|w| (k.clone(), w.clone())))
                .collect(),
            fk_column: other.fk_column.clone(),
        }
    }

    pub fn image(&self, var: &str) -> Option<&str> {
        self.var_map.get(var).map(String::as_str)
    }
}

/// Congruence closure of a WHERE clause over symbolic cells `var.col` and
/// constants. With no function symbols this is plain union-find.
struct WhereClosure {
    ids: HashMap<Symbol, usize>,
    uf: UnionFind,
    constant: Vec<Option<String>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Symbol {
    Cell(VarCol),
    Const(String),
}

impl WhereClosure {
    fn build(atoms: &[Atom]) -> Result<Self, (String, String)> {
        let mut c = WhereClosure {
            ids: HashMap::new(),
            uf: UnionFind::new(),
            constant: Vec::new(),
        };
        for atom in atoms {
            let (a, b) = match atom {
                Atom::VarVar(x, y) => (c.intern(Symbol::Cell(x.clone())), c.intern(Symbol::Cell(y.clone()))),
                Atom::VarConst(x, k) => (c.intern(Symbol::Cell(x.clone())), c.intern(Symbol::Const(k.clone()))),
            };
            let (ka, kb) = (c.constant_of(a), c.constant_of(b));
            if let Some((root, _)) = c.uf.union(a, b) {
                match (ka, kb) {
                    (Some(x), Some(y)) if x != y => return Err((x, y)),
                    (x, y) => c.constant[root] = x.or(y),
                }
            }
        }
        Ok(c)
    }

    fn intern(&mut self, s: Symbol) -> usize {
        if let Some(&id) = self.ids.get(&s) {
            return id;
        }
        let id = self.uf.make_set();
        self.constant.push(match &s {
            Symbol::Const(k) => Some(k.clone()),
            Symbol::Cell(_) => None,
        });
        self.ids.insert(s, id);
        id
    }

    fn constant_of(&mut self, id: usize) -> Option<String> {
        let r = self.uf.find(id);
        self.constant[r].clone()
    }

    fn entails(&mut self, atom: &Atom) -> bool {
        match atom {
            Atom::VarVar(x, y) => {
                if x == y {
                    return true;
                }
                let ix = self.ids.get(&Symbol::Cell(x.clone())).copied();
                let iy = self.ids.get(&Symbol::Cell(y.clone())).copied();
                match (ix, iy) {
                    (Some(a), Some(b)) => self.uf.same(a, b),
                    _ => false,
                }
            }
            Atom::VarConst(x, k) => match self.ids.get(&Symbol::Cell(x.clone())).copied() {
                Some(a) => self.constant_of(a).as_deref() == Some(k.as_str()),
                None => false,
            },
        }
    }
}

/// Checks that `h` maps `qk` into `qi`: total on the FROM variables of
/// `qk`, preserving bound tables, and sending every WHERE atom of `qk` to an
/// atom entailed by the WHERE clause of `qi`.
pub fn check_hom(h: &QueryHom, qk: &Query, qi: &Query) -> Vec<Diagnostic> {
    let subject = format!("homomorphism {} -> {}", h.from_query, h.to_query);
    let diag = |msg: String| vec![Diagnostic::new(subject.clone(), msg)];

    for f in &qk.froms {
        let Some(target) = h.image(&f.var) else {
            return diag(format!("variable `{}` of {} has no image", f.var, qk.name));
        };
        let Some(tf) = qi.from_item(target) else {
            return diag(format!("`{target}` is not a FROM variable of {}", qi.name));
        };
        if tf.table != f.table {
            return diag(format!(
                "`{}` ranges over {} but its image `{target}` ranges over {}",
                f.var, f.table, tf.table
            ));
        }
    }
    for k in h.var_map.keys() {
        if qk.from_item(k).is_none() {
            return diag(format!("`{k}` is not a FROM variable of {}", qk.name));
        }
    }

    let mut closure = match WhereClosure::build(&qi.wheres) {
        Ok(c) => c,
        Err((a, b)) => {
            return diag(format!(
                "WHERE clause of {} is unsatisfiable: it equates \"{a}\" and \"{b}\"",
                qi.name
            ))
        }
    };
    let map = |vc: &VarCol| VarCol::new(h.image(&vc.var).unwrap_or(&vc.var), vc.col.clone());
    for atom in &qk.wheres {
        let image = match atom {
            Atom::VarVar(a, b) => Atom::VarVar(map(a), map(b)),
            Atom::VarConst(a, k) => Atom::VarConst(map(a), k.clone()),
        };
        if !closure.entails(&image) {
            return diag(format!(
                "atom `{atom}` maps to `{image}`, which the WHERE clause of {} does not entail",
                qi.name
            ));
        }
    }
    Vec::new()
}
