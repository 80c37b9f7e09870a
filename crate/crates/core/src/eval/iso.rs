use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::hash::{Hash, Hasher};

use crate::coeval::{Cell, TripleInstance};

/// Whether the set views of `a` and `b` are equal up to a bijective renaming
/// of blank nodes. Constants must match exactly.
///
/// Blanks are coloured by iterated refinement over the facts they occur in,
/// then matched by backtracking within colour classes.
pub fn isomorphic(a: &TripleInstance, b: &TripleInstance) -> bool {
    let fa = facts(a);
    let fb = facts(b);
    if fa.len() != fb.len() || a.blank_count() != b.blank_count() {
        return false;
    }
    let set_b: HashSet<&(String, Vec<Cell>)> = fb.iter().collect();
    let ground = |f: &(String, Vec<Cell>)| f.1.iter().all(|c| !c.is_blank());
    if fa.iter().filter(|f| ground(f)).any(|f| !set_b.contains(f)) {
        return false;
    }
    if fa.iter().filter(|f| ground(f)).count() != fb.iter().filter(|f| ground(f)).count() {
        return false;
    }

    let ca = colours(&fa);
    let cb = colours(&fb);
    let histogram = |c: &HashMap<usize, u64>| {
        let mut h: BTreeMap<u64, usize> = BTreeMap::new();
        for &v in c.values() {
            *h.entry(v).or_default() += 1;
        }
        h
    };
    if histogram(&ca) != histogram(&cb) {
        return false;
    }

    let mut order: Vec<usize> = ca.keys().copied().collect();
    let class_size = histogram(&ca);
    order.sort_by_key(|x| (class_size[&ca[x]], *x));
    let mut by_colour: HashMap<u64, Vec<usize>> = HashMap::new();
    for (&x, &c) in &cb {
        by_colour.entry(c).or_default().push(x);
    }
    for v in by_colour.values_mut() {
        v.sort();
    }
    let mut containing: HashMap<usize, Vec<usize>> = HashMap::new();
    for (i, f) in fa.iter().enumerate() {
        for c in &f.1 {
            if let Cell::Blank(x) = c {
                containing.entry(*x).or_default().push(i);
            }
        }
    }

    let mut ctx = Matcher {
        fa: &fa,
        set_b,
        ca,
        by_colour,
        containing,
        map: HashMap::new(),
        used: HashSet::new(),
    };
    ctx.search(&order, 0)
}

fn facts(t: &TripleInstance) -> Vec<(String, Vec<Cell>)> {
    t.facts().iter().map(|f| (f.table.clone(), f.cells.clone())).collect()
}

fn hash_of(v: &impl Hash) -> u64 {
    let mut h = DefaultHasher::new();
    v.hash(&mut h);
    h.finish()
}

fn colours(facts: &[(String, Vec<Cell>)]) -> HashMap<usize, u64> {
    let mut colour: HashMap<usize, u64> = HashMap::new();
    for f in facts {
        for c in &f.1 {
            if let Cell::Blank(x) = c {
                colour.insert(*x, 0);
            }
        }
    }
    let distinct = |c: &HashMap<usize, u64>| c.values().collect::<HashSet<_>>().len();
    let mut classes = distinct(&colour);
    for _ in 0..=colour.len() {
        let mut sig: HashMap<usize, Vec<u64>> = HashMap::new();
        for f in facts {
            let shape: Vec<(bool, u64)> =
                f.1.iter()
                    .map(|c| match c {
                        Cell::Blank(x) => (true, colour[x]),
                        Cell::Const(s) => (false, hash_of(s)),
                    })
                    .collect();
            for (pos, c) in f.1.iter().enumerate() {
                if let Cell::Blank(x) = c {
                    sig.entry(*x).or_default().push(hash_of(&(&f.0, pos, &shape)));
                }
            }
        }
        let next: HashMap<usize, u64> = sig
            .into_iter()
            .map(|(x, mut s)| {
                s.sort();
                (x, hash_of(&(colour[&x], s)))
            })
            .collect();
        let n = distinct(&next);
        colour = next;
        if n == classes {
            break;
        }
        classes = n;
    }
    colour
}

struct Matcher<'f> {
    fa: &'f [(String, Vec<Cell>)],
    set_b: HashSet<&'f (String, Vec<Cell>)>,
    ca: HashMap<usize, u64>,
    by_colour: HashMap<u64, Vec<usize>>,
    containing: HashMap<usize, Vec<usize>>,
    map: HashMap<usize, usize>,
    used: HashSet<usize>,
}

impl Matcher<'_> {
    fn search(&mut self, order: &[usize], depth: usize) -> bool {
        let Some(&x) = order.get(depth) else { return true };
        let candidates = self.by_colour[&self.ca[&x]].clone();
        for y in candidates {
            if self.used.contains(&y) {
                continue;
            }
            self.map.insert(x, y);
            self.used.insert(y);
            if self.consistent(x) && self.search(order, depth + 1) {
                return true;
            }
            self.map.remove(&x);
            self.used.remove(&y);
        }
        false
    }

    /// Every fact containing `x` whose blanks are all mapped has an image in `b`.
    fn consistent(&self, x: usize) -> bool {
        self.containing[&x].iter().all(|&i| {
            let (table, cells) = &self.fa[i];
            let mut image = Vec::with_capacity(cells.len());
            for c in cells {
                match c {
                    Cell::Blank(b) => match self.map.get(b) {
                        Some(&y) => image.push(Cell::Blank(y)),
                        None => return true,
                    },
                    k => image.push(k.clone()),
                }
            }
            self.set_b.contains(&(table.clone(), image))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RelSchema;

    fn k(s: &str) -> Cell {
        Cell::Const(s.into())
    }

    fn inst(rows: Vec<[Cell; 3]>) -> TripleInstance {
        TripleInstance::from_rows(
            RelSchema::rdf(),
            rows.into_iter().map(|r| ("Rdf".to_string(), r.to_vec())).collect(),
        )
    }

    use Cell::Blank as B;

    #[test]
    fn renaming_blanks() {
        let a = inst(vec![[B(0), k("p"), B(1)], [B(1), k("q"), k("x")]]);
        let b = inst(vec![[B(7), k("q"), k("x")], [B(3), k("p"), B(7)]]);
        assert!(isomorphic(&a, &b));
        let c = inst(vec![[B(7), k("q"), k("x")], [B(7), k("p"), B(3)]]);
        assert!(!isomorphic(&a, &c));
    }

    #[test]
    fn constants_must_match() {
        let a = inst(vec![[B(0), k("p"), k("x")]]);
        let b = inst(vec![[B(0), k("p"), k("y")]]);
        assert!(!isomorphic(&a, &b));
        assert!(isomorphic(&inst(vec![]), &inst(vec![])));
    }

    #[test]
    fn symmetric_structures_need_backtracking() {
        // two disjoint 2-cycles vs one 4-cycle: same degrees everywhere
        let e = |x, y| [B(x), k("e"), B(y)];
        let a = inst(vec![e(0, 1), e(1, 0), e(2, 3), e(3, 2)]);
        let b = inst(vec![e(0, 1), e(1, 2), e(2, 3), e(3, 0)]);
        assert!(!isomorphic(&a, &b));
        let c = inst(vec![e(5, 4), e(4, 5), e(7, 6), e(6, 7)]);
        assert!(isomorphic(&a, &c));
    }
}
