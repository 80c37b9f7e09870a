use std::collections::{BTreeMap, HashMap, HashSet};

use super::{column_edge, validate_mapping, SchemaGraph, SchemaMapping};
use crate::diagnostics::Diagnostic;
use crate::model::{ColumnKind, RelSchema};
use crate::qlang::{Atom, FromItem, Query, QueryHom, SelectItem, VarCol};

#[derive(Clone, Debug)]
pub struct CompileOptions {
    pub type_predicate: String,
    /// Compile foreign-key columns by copying the referenced table's query
    /// under the column's leaf. When off, foreign-key columns are an error.
    pub graft_foreign_keys: bool,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions {
            type_predicate: "rdf:type".into(),
            graft_foreign_keys: true,
        }
    }
}

/// One query per source table, in table order, and one homomorphism per
/// foreign key.
#[derive(Clone, Debug, Default)]
pub struct Compiled {
    pub queries: Vec<Query>,
    pub homs: Vec<QueryHom>,
}

/// The predicate an edge emits: its name without a trailing `[n]`.
pub fn edge_predicate(edge: &str) -> &str {
    if let Some(open) = edge.strip_suffix(']').and_then(|s| s.rfind('[')) {
        let index = &edge[open + 1..edge.len() - 1];
        if !index.is_empty() && index.chars().all(|c| c.is_ascii_digit()) {
            return &edge[..open];
        }
    }
    edge
}

const KEYWORDS: [&str; 7] = ["SELECT", "FROM", "WHERE", "AND", "AS", "CREATE", "VIEW"];

/// Variable-name fragment for an edge: the local part with brackets removed,
/// capitalized, e.g. `fibo:hasLeg[0]` becomes `HasLeg0`.
fn edge_fragment(edge: &str) -> String {
    let local = edge.rsplit([':', '#', '/']).next().unwrap_or(edge);
    let mut s: String = local
        .chars()
        .filter(|c| c.is_ascii_alphanumeric() || *c == '_')
        .collect();
    if let Some(first) = s.get(..1) {
        let up = first.to_ascii_uppercase();
        s.replace_range(..1, &up);
    }
    if s.is_empty() {
        s.push('E');
    }
    s
}

fn identifier(s: String) -> String {
    let s = if s.chars().next().is_some_and(|c| c.is_ascii_alphabetic()) {
        s
    } else {
        format!("V{s}")
    };
    if KEYWORDS.iter().any(|k| k.eq_ignore_ascii_case(&s)) {
        format!("{s}_")
    } else {
        s
    }
}

struct Builder {
    q: Query,
    used: HashSet<String>,
}

impl Builder {
    fn fresh(&mut self, base: String) -> String {
        let base = identifier(base);
        let mut name = base.clone();
        let mut n = 1;
        while self.used.contains(&name) {
            n += 1;
            name = format!("{base}_{n}");
        }
        self.used.insert(name.clone());
        name
    }

    fn bind(&mut self, base: String) -> String {
        let v = self.fresh(base);
        self.q.froms.push(FromItem {
            var: v.clone(),
            table: "Rdf".into(),
        });
        v
    }

    fn cells(&mut self, a: &str, ac: &str, b: &str, bc: &str) {
        self.q
            .wheres
            .push(Atom::eq_cells(VarCol::new(a, ac), VarCol::new(b, bc)));
    }

    fn constant(&mut self, a: &str, ac: &str, k: &str) {
        self.q.wheres.push(Atom::eq_const(VarCol::new(a, ac), k));
    }
}

struct Ctx<'a> {
    m: &'a SchemaMapping,
    src: &'a RelSchema,
    opts: &'a CompileOptions,
    done: BTreeMap<String, Query>,
    homs: Vec<QueryHom>,
    stack: Vec<String>,
}

/// Compiles a validated mapping table by table.
///
/// Each table gets a root variable for its type triple (unless the table is
/// marked untyped). The column paths are merged into a trie of edge names;
/// every trie node becomes one FROM variable chained to its parent by
/// `child.subject = parent.object` and `child.predicate = edge`. Top-level
/// nodes hang off the root's subject. Each column selects its leaf's object.
pub fn compile_mapping(
    m: &SchemaMapping,
    src: &RelSchema,
    tgt: &SchemaGraph,
    opts: &CompileOptions,
) -> Result<Compiled, Vec<Diagnostic>> {
    let diags = validate_mapping(m, &SchemaGraph::from_rel_schema(src), tgt);
    if !diags.is_empty() {
        return Err(diags);
    }
    let mut ctx = Ctx {
        m,
        src,
        opts,
        done: BTreeMap::new(),
        homs: Vec::new(),
        stack: Vec::new(),
    };
    let mut diags = Vec::new();
    for t in src.tables() {
        if let Err(d) = ctx.table(&t.name) {
            diags.push(d);
        }
    }
    if !diags.is_empty() {
        diags.dedup();
        return Err(diags);
    }
    let queries = src.tables().iter().map(|t| ctx.done[&t.name].clone()).collect();
    let mut homs = ctx.homs;
    homs.sort_by_key(|h| {
        (
            src.table_index(&h.to_query),
            src.table(&h.to_query)
                .and_then(|t| h.fk_column.as_deref().and_then(|c| t.column_index(c))),
        )
    });
    Ok(Compiled { queries, homs })
}

impl Ctx<'_> {
    fn table(&mut self, name: &str) -> Result<Query, Diagnostic> {
        if let Some(q) = self.done.get(name) {
            return Ok(q.clone());
        }
        let subject = format!("table {name}");
        if self.stack.iter().any(|s| s == name) {
            return Err(Diagnostic::new(
                subject,
                "foreign keys form a cycle; cannot copy the referenced query",
            ));
        }
        self.stack.push(name.to_string());
        let result = self.compile(name);
        self.stack.pop();
        let q = result?;
        self.done.insert(name.to_string(), q.clone());
        Ok(q)
    }

    fn compile(&mut self, name: &str) -> Result<Query, Diagnostic> {
        let subject = format!("table {name}");
        let decl = self.src.table(name).expect("table of the source schema");
        let class = self
            .m
            .node_map
            .get(name)
            .ok_or_else(|| Diagnostic::new(&subject, "has no target class"))?;
        let typed = !self.m.untyped.contains(name);
        let mut b = Builder {
            q: Query {
                name: name.to_string(),
                target_table: name.to_string(),
                selects: Vec::new(),
                froms: Vec::new(),
                wheres: Vec::new(),
            },
            used: HashSet::new(),
        };
        let root = if typed {
            let r = b.bind(edge_fragment(name));
            b.constant(&r, "predicate", &self.opts.type_predicate);
            b.constant(&r, "object", class);
            Some(r)
        } else {
            if decl.columns.is_empty() {
                return Err(Diagnostic::new(subject, "an untyped table needs at least one column"));
            }
            None
        };

        // trie of edge-name sequences: (parent, edge) -> var
        let mut trie: HashMap<(Option<String>, String), String> = HashMap::new();
        let mut first_top: Option<String> = None;
        let mut leaves = Vec::new();
        for c in &decl.columns {
            let path = self
                .m
                .path(&column_edge(name, &c.name))
                .filter(|p| !p.is_empty())
                .ok_or_else(|| Diagnostic::new(format!("column {name}.{}", c.name), "path is empty"))?;
            let mut parent: Option<String> = None;
            let mut prefix = String::new();
            for edge in path {
                if !prefix.is_empty() {
                    prefix.push('_');
                }
                prefix.push_str(&edge_fragment(edge));
                let key = (parent.clone(), edge.clone());
                let var = match trie.get(&key) {
                    Some(v) => v.clone(),
                    None => {
                        let v = b.bind(prefix.clone());
                        match (&parent, &root, &first_top) {
                            (Some(p), _, _) => b.cells(&v, "subject", p, "object"),
                            (None, Some(r), _) => b.cells(&v, "subject", r, "subject"),
                            (None, None, Some(f)) => b.cells(&v, "subject", f, "subject"),
                            (None, None, None) => first_top = Some(v.clone()),
                        }
                        b.constant(&v, "predicate", edge_predicate(edge));
                        trie.insert(key, v.clone());
                        v
                    }
                };
                parent = Some(var);
            }
            let leaf = parent.expect("nonempty path");
            b.q.selects.push(SelectItem {
                expr: VarCol::new(&leaf, "object"),
                alias: c.name.clone(),
            });
            leaves.push((c, leaf));
        }

        for (c, leaf) in leaves {
            if c.kind != ColumnKind::ForeignKey {
                continue;
            }
            let col_subject = format!("column {name}.{}", c.name);
            if !self.opts.graft_foreign_keys {
                return Err(Diagnostic::new(
                    col_subject,
                    "foreign-key columns need grafting enabled",
                ));
            }
            let fk = self.src.foreign_key(name, &c.name).expect("fk column");
            if self.m.untyped.contains(&fk.target) {
                return Err(Diagnostic::new(
                    col_subject,
                    format!(
                        "references untyped table {}; its rows have no type triple to join",
                        fk.target
                    ),
                ));
            }
            let qd = self.table(&fk.target)?;
            let rename: BTreeMap<String, String> = qd
                .froms
                .iter()
                .map(|f| (f.var.clone(), b.fresh(format!("{leaf}_{}", f.var))))
                .collect();
            for f in &qd.froms {
                b.q.froms.push(FromItem {
                    var: rename[&f.var].clone(),
                    table: f.table.clone(),
                });
            }
            let droot = &rename[&qd.froms[0].var];
            b.cells(droot, "subject", &leaf, "object");
            let rn = |vc: &VarCol| VarCol::new(rename[&vc.var].clone(), vc.col.clone());
            for a in &qd.wheres {
                b.q.wheres.push(match a {
                    Atom::VarVar(x, y) => Atom::VarVar(rn(x), rn(y)),
                    Atom::VarConst(x, k) => Atom::VarConst(rn(x), k.clone()),
                });
            }
            self.homs.push(QueryHom {
                from_query: qd.name.clone(),
                to_query: name.to_string(),
                var_map: rename,
                fk_column: Some(c.name.clone()),
            });
        }
        Ok(b.q)
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::{swap_payer, SWAP_GRAPH};
    use super::super::*;
    use super::*;
    use crate::coeval::{coevaluate, QuerySet};
    use crate::model::{ingest_csv, ForeignKey, RelInstance, TableDecl};
    use crate::qlang::{check_hom, parse_query, validate_query};

    #[test]
    fn predicates_strip_index() {
        assert_eq!(edge_predicate("fibo:hasLeg[0]"), "fibo:hasLeg");
        assert_eq!(edge_predicate("fibo:hasLeg[12]"), "fibo:hasLeg");
        assert_eq!(edge_predicate("foaf:name"), "foaf:name");
        assert_eq!(edge_predicate("x[a]"), "x[a]");
        assert_eq!(edge_fragment("fibo:hasLeg[0]"), "HasLeg0");
        assert_eq!(identifier("As".into()), "As_");
    }

    fn person_mapping(cols: &[(&str, &str)]) -> (SchemaMapping, RelSchema, SchemaGraph) {
        let names: Vec<&str> = cols.iter().map(|c| c.0).collect();
        let s = RelSchema::new(vec![TableDecl::new("Person", &names)], vec![]).unwrap();
        let g = parse_graph(
            "node foaf:person entity\nnode Literal datatype\n\
             edge foaf:name : foaf:person -> Literal\nedge foaf:age : foaf:person -> Literal",
        )
        .unwrap();
        let m = SchemaMapping {
            node_map: [
                ("Person".into(), "foaf:person".into()),
                ("String".into(), "Literal".into()),
            ]
            .into(),
            edge_map: cols
                .iter()
                .map(|(c, e)| (format!("Person.{c}"), vec![e.to_string()]))
                .collect(),
            untyped: Default::default(),
        };
        (m, s, g)
    }

    fn opts(tp: &str) -> CompileOptions {
        CompileOptions {
            type_predicate: tp.into(),
            ..Default::default()
        }
    }

    #[test]
    fn person_single_column() {
        let (m, s, g) = person_mapping(&[("name", "foaf:name")]);
        let c = compile_mapping(&m, &s, &g, &opts("rdfs:type")).unwrap();
        let q = &c.queries[0];
        let hand = parse_query(
            "CREATE VIEW Person AS SELECT r1.object AS name FROM Rdf AS r, Rdf AS r1 \
             WHERE r.predicate = \"rdfs:type\" AND r.object = \"foaf:person\" AND \
             r1.subject = r.subject AND r1.predicate = \"foaf:name\"",
        )
        .unwrap();
        assert_eq!(q.canonical_form(), hand.canonical_form());
        assert_eq!(
            q.to_string(),
            "CREATE VIEW Person AS\nSELECT Name.object AS name\nFROM Rdf AS Person, Rdf AS Name\nWHERE\n  \
             Person.predicate = \"rdfs:type\" AND\n  Person.object = \"foaf:person\" AND\n  \
             Name.subject = Person.subject AND\n  Name.predicate = \"foaf:name\"\n"
        );
    }

    #[test]
    fn person_two_columns_matches_hand_query() {
        let (m, s, g) = person_mapping(&[("name", "foaf:name"), ("age", "foaf:age")]);
        let c = compile_mapping(&m, &s, &g, &opts("rdfs:type")).unwrap();
        let hand = parse_query(crate::coeval::tests::PERSON_QUERY).unwrap();
        assert_eq!(c.queries[0].canonical_form().wheres, hand.canonical_form().wheres);
        assert!(validate_query(&c.queries[0], &s, &RelSchema::rdf()).is_empty());
    }

    #[test]
    fn swap_payer_alone_has_six_froms() {
        let (m, s, g) = swap_payer();
        let q = &compile_mapping(&m, &s, &g, &CompileOptions::default()).unwrap().queries[0];
        let vars: Vec<&str> = q.froms.iter().map(|f| f.var.as_str()).collect();
        assert_eq!(
            vars,
            [
                "Swap",
                "HasLeg0",
                "HasLeg0_HasPayingParty",
                "HasLeg0_HasPayingParty_HasIdentity",
                "HasLeg0_HasPayingParty_HasIdentity_IsIdentifiedBy",
                "HasLeg0_HasPayingParty_HasIdentity_IsIdentifiedBy_HasTag"
            ]
        );
        assert_eq!(q.wheres.len(), 2 + 2 * 5);
        assert!(q
            .wheres
            .contains(&Atom::eq_const(VarCol::new("HasLeg0", "predicate"), "fibo:hasLeg")));
    }

    #[test]
    fn shared_prefix_shares_variable() {
        let (mut m, _, g) = swap_payer();
        let s = RelSchema::new(vec![TableDecl::new("Swap", &["PayerA", "Effective_Date"])], vec![]).unwrap();
        m.edge_map.push((
            "Swap.Effective_Date".into(),
            vec!["fibo:hasLeg[0]".into(), "fibo:hasEffectiveDate".into()],
        ));
        let q = &compile_mapping(&m, &s, &g, &CompileOptions::default()).unwrap().queries[0];
        assert_eq!(q.froms.len(), 7);
        assert_eq!(q.froms.iter().filter(|f| f.var == "HasLeg0").count(), 1);
        assert_eq!(q.selects[1].expr.var, "HasLeg0_HasEffectiveDate");
    }

    #[test]
    fn untyped_table_anchors_on_first_node() {
        let (mut m, _, g) = swap_payer();
        let s = RelSchema::new(vec![TableDecl::new("Swap", &["PayerA", "PayerB"])], vec![]).unwrap();
        let mut b = m.edge_map[0].1.clone();
        b[0] = "fibo:hasLeg[1]".into();
        m.edge_map.push(("Swap.PayerB".into(), b));
        m.untyped.insert("Swap".into());
        let q = &compile_mapping(&m, &s, &g, &CompileOptions::default()).unwrap().queries[0];
        assert_eq!(q.froms.len(), 10);
        assert!(q.wheres.contains(&Atom::eq_cells(
            VarCol::new("HasLeg1", "subject"),
            VarCol::new("HasLeg0", "subject")
        )));
        assert!(!q
            .wheres
            .iter()
            .any(|a| matches!(a, Atom::VarConst(vc, _) if vc.col == "object")));
    }

    #[test]
    fn compilation_is_deterministic() {
        let (m, s, g) = swap_payer();
        let a = compile_mapping(&m, &s, &g, &CompileOptions::default()).unwrap();
        let b = compile_mapping(&m, &s, &g, &CompileOptions::default()).unwrap();
        assert_eq!(a.queries[0].to_string(), b.queries[0].to_string());
    }

    #[test]
    fn invalid_mapping_is_reported() {
        let (mut m, s, g) = swap_payer();
        m.edge_map[0].1.clear();
        assert!(compile_mapping(&m, &s, &g, &CompileOptions::default()).is_err());
        let _ = SWAP_GRAPH;
    }

    fn emp_dept() -> (SchemaMapping, RelSchema, SchemaGraph) {
        let s = RelSchema::new(
            vec![
                TableDecl::new("Dept", &["title"]),
                TableDecl::new("Emp", &["name", "dept"]),
            ],
            vec![ForeignKey {
                table: "Emp".into(),
                column: "dept".into(),
                target: "Dept".into(),
            }],
        )
        .unwrap();
        let g = parse_graph(
            "node ex:Dept entity\nnode ex:Emp entity\nnode Literal datatype\n\
             edge ex:title : ex:Dept -> Literal\nedge ex:name : ex:Emp -> Literal\n\
             edge ex:worksIn : ex:Emp -> ex:Dept",
        )
        .unwrap();
        let m = SchemaMapping {
            node_map: [
                ("Dept".into(), "ex:Dept".into()),
                ("Emp".into(), "ex:Emp".into()),
                ("String".into(), "Literal".into()),
            ]
            .into(),
            edge_map: vec![
                ("Dept.title".into(), vec!["ex:title".into()]),
                ("Emp.name".into(), vec!["ex:name".into()]),
                ("Emp.dept".into(), vec!["ex:worksIn".into()]),
            ],
            untyped: Default::default(),
        };
        (m, s, g)
    }

    #[test]
    fn foreign_key_graft_and_hom() {
        let (m, s, g) = emp_dept();
        let c = compile_mapping(&m, &s, &g, &CompileOptions::default()).unwrap();
        let (qd, qe) = (&c.queries[0], &c.queries[1]);
        assert_eq!(qe.froms.len(), 3 + qd.froms.len());
        assert!(qe.wheres.contains(&Atom::eq_cells(
            VarCol::new("WorksIn_Dept", "subject"),
            VarCol::new("WorksIn", "object")
        )));
        assert_eq!(c.homs.len(), 1);
        assert_eq!(c.homs[0].image("Dept"), Some("WorksIn_Dept"));
        assert!(check_hom(&c.homs[0], qd, qe).is_empty());

        let qs = QuerySet::new(s.clone(), RelSchema::rdf(), c.queries.clone()).unwrap();
        assert!(qs.check_homs(&c.homs).is_empty());
        let d = ingest_csv(&s, "Dept", "title\nSales\n").unwrap();
        let e = ingest_csv(&s, "Emp", "name,dept\nAl,0\n").unwrap();
        let inst = RelInstance::new(s.clone(), vec![d, e]).unwrap();
        let co = coevaluate(&inst, &qs, &c.homs).unwrap();
        // Dept: type + title; Emp: type + name + worksIn
        assert_eq!(co.instance.fact_count(), 5);

        let off = CompileOptions {
            graft_foreign_keys: false,
            ..Default::default()
        };
        assert!(compile_mapping(&m, &s, &g, &off).is_err());
    }
}
