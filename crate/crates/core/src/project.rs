//! Project configuration and the end-to-end pipeline behind the CLI.
//!
//! A project is a flat `key = value` file; `#` and `--` start comments and
//! relative paths are resolved against the file's directory.
//!
//! | key | value |
//! |-----|-------|
//! | `table.T` | comma-separated column names, in order |
//! | `fk.T.c` | table referenced by column `c` of `T` |
//! | `target.T` | columns of a target table (default: `Rdf = subject, predicate, object`) |
//! | `csv.T` | CSV file with the rows of `T` |
//! | `query.T` | query file populating `T` |
//! | `mapping` | mapping file (instead of `query.*`) |
//! | `hom.T.c` | `kvar -> ivar, ...` homomorphism for foreign key `T.c` |
//! | `out` | output directory (default `out`) |
//! | `type_predicate` | predicate of compiled type triples |
//! | `graft_foreign_keys` | `true` (default) or `false` |

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::coeval::{coevaluate, CoevalError, Coevaluation, QuerySet};
use crate::diagnostics::{render, Diagnostic};
use crate::eval::{compute_unit, EvalError, RoundTrip};
use crate::mapping::{compile_mapping, parse_mapping_file, CompileOptions, Compiled, MappingError};
use crate::model::{ingest_csv, ForeignKey, IngestError, RelInstance, RelSchema, SchemaError, TableData, TableDecl};
use crate::qlang::{parse_query, ParseError, Query, QueryHom};
use crate::rdf::{export_ntriples, ExportError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("key `{0}` is set twice")]
    Duplicate(String),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("{0}")]
    Invalid(String),
}

/// Where the queries come from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum QuerySource {
    Files(BTreeMap<String, PathBuf>),
    Mapping(PathBuf),
}

#[derive(Clone, Debug)]
pub struct Project {
    pub dir: PathBuf,
    pub source: RelSchema,
    pub target: RelSchema,
    pub csv: BTreeMap<String, PathBuf>,
    pub queries: QuerySource,
    /// Foreign key `(table, column)` to variable map.
    pub homs: BTreeMap<(String, String), BTreeMap<String, String>>,
    pub out: PathBuf,
    pub type_predicate: Option<String>,
    pub graft_foreign_keys: bool,
    pub warnings: Vec<Diagnostic>,
}

fn split_list(v: &str) -> Vec<String> {
    v.split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

fn strip_comment(line: &str) -> &str {
    let mut end = line.len();
    for pat in ["#", "--"] {
        let mut from = 0;
        while let Some(i) = line[from..].find(pat) {
            let i = from + i;
            if i == 0 || line.as_bytes()[i - 1].is_ascii_whitespace() {
                end = end.min(i);
                break;
            }
            from = i + pat.len();
        }
    }
    &line[..end]
}

impl Project {
    pub fn load(path: &Path) -> Result<Project, RunError> {
        let text = fs::read_to_string(path).map_err(|source| RunError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Project::parse(&text, &dir).map_err(|e| RunError::Config {
            path: path.to_path_buf(),
            error: e,
        })
    }

    pub fn parse(text: &str, dir: &Path) -> Result<Project, ConfigError> {
        let mut entries: Vec<(usize, String, String)> = Vec::new();
        let mut seen = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                message: format!("expected `key = value`, found `{line}`"),
            })?;
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if !seen.insert(k.clone()) {
                return Err(ConfigError::Duplicate(k));
            }
            entries.push((i + 1, k, v));
        }

        let path = |v: &str| dir.join(v);
        let mut tables = Vec::new();
        let mut fks = Vec::new();
        let mut targets = Vec::new();
        let mut csv = BTreeMap::new();
        let mut query_files = BTreeMap::new();
        let mut mapping = None;
        let mut homs = BTreeMap::new();
        let mut out = dir.join("out");
        let mut type_predicate = None;
        let mut graft = true;
        let mut warnings = Vec::new();
        for (line, k, v) in &entries {
            let bad = |m: String| ConfigError::Syntax {
                line: *line,
                message: m,
            };
            let parts: Vec<&str> = k.split('.').collect();
            match parts.as_slice() {
                ["table", t] => tables.push(TableDecl::new(*t, &split_list(v))),
                ["target", t] => targets.push(TableDecl::new(*t, &split_list(v))),
                ["fk", t, c] => fks.push(ForeignKey {
                    table: t.to_string(),
                    column: c.to_string(),
                    target: v.clone(),
                }),
                ["csv", t] => {
                    csv.insert(t.to_string(), path(v));
                }
                ["query", t] => {
                    query_files.insert(t.to_string(), path(v));
                }
                ["mapping"] => mapping = Some(path(v)),
                ["out"] => out = path(v),
                ["type_predicate"] => type_predicate = Some(v.clone()),
                ["graft_foreign_keys"] => {
                    graft = match v.as_str() {
                        "true" => true,
                        "false" => false,
                        _ => return Err(bad(format!("`{k}` must be true or false"))),
                    }
                }
                ["hom", t, c] => {
                    let mut map = BTreeMap::new();
                    for pair in split_list(v) {
                        let (a, b) = pair
                            .split_once("->")
                            .ok_or_else(|| bad(format!("expected `kvar -> ivar`, found `{pair}`")))?;
                        map.insert(a.trim().to_string(), b.trim().to_string());
                    }
                    homs.insert((t.to_string(), c.to_string()), map);
                }
                _ => warnings.push(Diagnostic::new(
                    format!("config line {line}"),
                    format!("unknown key `{k}`"),
                )),
            }
        }

        let source = RelSchema::new(tables, fks)?;
        let target = if targets.is_empty() {
            RelSchema::rdf()
        } else {
            RelSchema::new(targets, vec![])?
        };
        for t in csv.keys().chain(query_files.keys()) {
            if source.table(t).is_none() {
                return Err(ConfigError::Invalid(format!(
                    "table `{t}` is not declared with table.{t}"
                )));
            }
        }
        for (t, c) in homs.keys() {
            if source.foreign_key(t, c).is_none() {
                return Err(ConfigError::Invalid(format!(
                    "hom.{t}.{c} names no declared foreign key"
                )));
            }
        }
        for t in source.tables() {
            if !csv.contains_key(&t.name) {
                warnings.push(Diagnostic::new(format!("table {}", t.name), "has no csv; it is empty"));
            }
        }
        let queries = match mapping {
            Some(m) => {
                if !query_files.is_empty() {
                    return Err(ConfigError::Invalid(
                        "set either `mapping` or `query.*`, not both".into(),
                    ));
                }
                if !homs.is_empty() {
                    warnings.push(Diagnostic::new(
                        "config",
                        "hom.* entries are ignored: compiled mappings generate their own homomorphisms",
                    ));
                }
                QuerySource::Mapping(m)
            }
            None => {
                let missing: Vec<&str> = source
                    .tables()
                    .iter()
                    .map(|t| t.name.as_str())
                    .filter(|t| !query_files.contains_key(*t))
                    .collect();
                if !missing.is_empty() {
                    return Err(ConfigError::Invalid(format!(
                        "no query.* (and no mapping) for table(s) {}",
                        missing.join(", ")
                    )));
                }
                QuerySource::Files(query_files)
            }
        };
        Ok(Project {
            dir: dir.to_path_buf(),
            source,
            target,
            csv,
            queries,
            homs,
            out,
            type_predicate,
            graft_foreign_keys: graft,
            warnings,
        })
    }
}

/// Command-line overrides.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub type_predicate: Option<String>,
    pub strict: bool,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Read {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}: {error}", path.display())]
    Config { path: PathBuf, error: ConfigError },
    #[error("{}: {error}", path.display())]
    Ingest { path: PathBuf, error: Box<IngestError> },
    #[error("{}: {error}", path.display())]
    Query { path: PathBuf, error: ParseError },
    #[error("invalid project:\n{}", render(.0))]
    Invalid(Vec<Diagnostic>),
    #[error("warnings treated as errors:\n{}", render(.0))]
    Strict(Vec<Diagnostic>),
    #[error(transparent)]
    MappingFile(#[from] MappingError),
    #[error("invalid mapping:\n{}", render(.0))]
    Mapping(Vec<Diagnostic>),
    #[error(transparent)]
    Coeval(#[from] CoevalError),
    #[error(transparent)]
    Unit(#[from] EvalError),
    #[error("export failed: {0}")]
    Export(#[from] ExportError),
    #[error("{}: {source}", path.display())]
    Write {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Coeval(CoevalError::Inconsistent(_)) | RunError::Unit(EvalError::UnitViolation { .. }) => 2,
            RunError::Export(_) | RunError::Write { .. } => 3,
            RunError::MappingFile(_) | RunError::Mapping(_) => 4,
            _ => 1,
        }
    }
}

/// The project with its input loaded and its queries ready.
#[derive(Clone, Debug)]
pub struct Loaded {
    pub project: Project,
    pub instance: RelInstance,
    pub queries: QuerySet,
    pub homs: Vec<QueryHom>,
    /// Present when the queries were compiled from a mapping.
    pub compiled: Option<Compiled>,
    pub out: PathBuf,
    pub warnings: Vec<Diagnostic>,
}

fn read(path: &Path) -> Result<String, RunError> {
    fs::read_to_string(path).map_err(|source| RunError::Read {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads every CSV. Duplicate rows are kept and reported as warnings.
pub fn ingest(project: &Project) -> Result<(RelInstance, Vec<Diagnostic>), RunError> {
    let mut fragments = Vec::new();
    let mut warnings = Vec::new();
    for t in project.source.tables() {
        let frag = match project.csv.get(&t.name) {
            Some(p) => ingest_csv(&project.source, &t.name, &read(p)?).map_err(|error| RunError::Ingest {
                path: p.clone(),
                error: Box::new(error),
            })?,
            None => TableData::empty(&t.name),
        };
        let dups = frag.duplicate_rows();
        if dups > 0 {
            warnings.push(Diagnostic::new(
                format!("table {}", t.name),
                format!("{dups} duplicate row(s); each is kept as a separate row"),
            ));
        }
        fragments.push(frag);
    }
    let inst = RelInstance::new(project.source.clone(), fragments).map_err(|error| RunError::Ingest {
        path: project.dir.clone(),
        error: Box::new(error),
    })?;
    Ok((inst, warnings))
}

fn type_predicate(project: &Project, opts: &RunOptions, from_mapping: Option<&str>) -> String {
    opts.type_predicate
        .clone()
        .or_else(|| project.type_predicate.clone())
        .or_else(|| from_mapping.map(str::to_string))
        .unwrap_or_else(|| CompileOptions::default().type_predicate)
}

/// Compiles the project's mapping file.
pub fn compile(project: &Project, opts: &RunOptions) -> Result<Compiled, RunError> {
    let QuerySource::Mapping(path) = &project.queries else {
        return Err(RunError::Usage("the project has no mapping to compile".into()));
    };
    let mf = parse_mapping_file(path)?;
    let copts = CompileOptions {
        type_predicate: type_predicate(project, opts, mf.type_predicate.as_deref()),
        graft_foreign_keys: project.graft_foreign_keys,
    };
    compile_mapping(&mf.mapping, &project.source, &mf.graph, &copts).map_err(RunError::Mapping)
}

/// Queries and homomorphisms to run, and the compilation they came from.
type Plan = (Vec<Query>, Vec<QueryHom>, Option<Compiled>);

fn queries(project: &Project, opts: &RunOptions) -> Result<Plan, RunError> {
    match &project.queries {
        QuerySource::Mapping(_) => {
            let c = compile(project, opts)?;
            Ok((c.queries.clone(), c.homs.clone(), Some(c)))
        }
        QuerySource::Files(files) => {
            let mut qs = Vec::new();
            for (table, path) in files {
                let mut q = parse_query(&read(path)?).map_err(|error| RunError::Query {
                    path: path.clone(),
                    error,
                })?;
                if q.target_table.is_empty() {
                    q = q.for_table(table);
                } else if &q.target_table != table {
                    return Err(RunError::Invalid(vec![Diagnostic::new(
                        path.display().to_string(),
                        format!(
                            "query creates view {} but is configured for table {table}",
                            q.target_table
                        ),
                    )]));
                }
                q.name = table.clone();
                qs.push(q);
            }
            let mut homs = Vec::new();
            for ((t, c), map) in &project.homs {
                let fk = project.source.foreign_key(t, c).expect("checked when parsing");
                homs.push(QueryHom {
                    from_query: fk.target.clone(),
                    to_query: t.clone(),
                    var_map: map.clone(),
                    fk_column: Some(c.clone()),
                });
            }
            Ok((qs, homs, None))
        }
    }
}

/// Ingests the CSVs and prepares validated queries and homomorphisms.
pub fn load(project: Project, opts: &RunOptions) -> Result<Loaded, RunError> {
    let (instance, mut warnings) = ingest(&project)?;
    warnings.splice(0..0, project.warnings.iter().cloned());
    if opts.strict && !warnings.is_empty() {
        return Err(RunError::Strict(warnings));
    }
    let (qs, homs, compiled) = queries(&project, opts)?;
    let invalid = |d| {
        if compiled.is_some() {
            RunError::Mapping(d)
        } else {
            RunError::Invalid(d)
        }
    };
    let queries = QuerySet::new(project.source.clone(), project.target.clone(), qs).map_err(invalid)?;
    let diags = queries.check_homs(&homs);
    if !diags.is_empty() {
        return Err(invalid(diags));
    }
    let out = opts.out.clone().unwrap_or_else(|| project.out.clone());
    Ok(Loaded {
        project,
        instance,
        queries,
        homs,
        compiled,
        out,
        warnings,
    })
}

impl Loaded {
    pub fn coevaluate(&self) -> Result<Coevaluation, RunError> {
        Ok(coevaluate(&self.instance, &self.queries, &self.homs)?)
    }

    /// Round trip over the already materialized instance.
    pub fn roundtrip(&self, co: &Coevaluation) -> Result<RoundTrip, RunError> {
        Ok(compute_unit(&self.instance, &self.queries, co)?)
    }
}

#[derive(Serialize)]
struct GeneratorJson<'a> {
    row: String,
    var: &'a str,
    query: &'a str,
}

#[derive(Serialize)]
struct TripleJson<'a> {
    line: usize,
    subject: String,
    predicate: String,
    object: String,
    generators: Vec<GeneratorJson<'a>>,
}

#[derive(Serialize)]
struct ProvenanceJson<'a> {
    triple_count: usize,
    blank_count: usize,
    equation_count: usize,
    triples: Vec<TripleJson<'a>>,
}

/// Maps each exported triple (by `.nt` line) to the output rows that produced it.
pub fn provenance_json(co: &Coevaluation) -> String {
    let inst = &co.instance;
    let triples = inst
        .facts_of("Rdf")
        .enumerate()
        .map(|(i, (_, f))| {
            let c = |col| inst.cell(f, col).map(ToString::to_string).unwrap_or_default();
            TripleJson {
                line: i + 1,
                subject: c("subject"),
                predicate: c("predicate"),
                object: c("object"),
                generators: f
                    .rows
                    .iter()
                    .flat_map(|&r| &inst.rows()[r].generators)
                    .map(|g| GeneratorJson {
                        row: g.row.to_string(),
                        var: &g.var,
                        query: &g.query,
                    })
                    .collect(),
            }
        })
        .collect::<Vec<_>>();
    let doc = ProvenanceJson {
        triple_count: triples.len(),
        blank_count: inst.blank_count(),
        equation_count: co.equations.len(),
        triples,
    };
    serde_json::to_string_pretty(&doc).expect("serializable") + "\n"
}

#[derive(Serialize)]
struct RowJson {
    /// FROM variable to `.nt` line number.
    assignment: BTreeMap<String, usize>,
    values: BTreeMap<String, String>,
    preimage: Vec<String>,
}

#[derive(Serialize)]
struct TableJson<'a> {
    table: &'a str,
    input_rows: usize,
    output_rows: usize,
    injective: bool,
    surjective: bool,
    classification: &'static str,
    unit: BTreeMap<String, usize>,
    rows: Vec<RowJson>,
}

#[derive(Serialize)]
struct RoundTripJson<'a> {
    classification: &'static str,
    tables: Vec<TableJson<'a>>,
}

fn fact_lines(co: &Coevaluation) -> BTreeMap<usize, usize> {
    co.instance
        .facts_of("Rdf")
        .enumerate()
        .map(|(line, (id, _))| (id, line + 1))
        .collect()
}

/// The round trip as JSON: unit map, flags, classification and all rows.
pub fn roundtrip_json(rt: &RoundTrip, loaded: &Loaded, co: &Coevaluation) -> String {
    let lines = fact_lines(co);
    let tables = rt
        .tables
        .iter()
        .map(|t| {
            let q = loaded.queries.query_for(&t.table).expect("query per table");
            let rows = t
                .rows
                .iter()
                .enumerate()
                .map(|(i, r)| RowJson {
                    assignment: q
                        .froms
                        .iter()
                        .zip(&r.assignment)
                        .map(|(f, id)| (f.var.clone(), lines.get(id).copied().unwrap_or(0)))
                        .collect(),
                    values: q
                        .selects
                        .iter()
                        .zip(&r.cells)
                        .map(|(s, c)| (s.alias.clone(), c.to_string()))
                        .collect(),
                    preimage: t
                        .unit
                        .iter()
                        .enumerate()
                        .filter(|(_, &u)| u == i)
                        .map(|(p, _)| format!("{}#{p}", t.table))
                        .collect(),
                })
                .collect();
            TableJson {
                table: &t.table,
                input_rows: t.input_rows,
                output_rows: t.rows.len(),
                injective: t.injective,
                surjective: t.surjective,
                classification: t.classification.as_str(),
                unit: t
                    .unit
                    .iter()
                    .enumerate()
                    .map(|(p, &u)| (format!("{}#{p}", t.table), u))
                    .collect(),
                rows,
            }
        })
        .collect();
    let doc = RoundTripJson {
        classification: rt.classification.as_str(),
        tables,
    };
    serde_json::to_string_pretty(&doc).expect("serializable") + "\n"
}

/// A plain-text listing of the round-tripped rows.
pub fn roundtrip_table(rt: &RoundTrip, loaded: &Loaded) -> String {
    let mut s = String::new();
    for t in &rt.tables {
        let decl = loaded.instance.schema().table(&t.table).expect("declared table");
        let q = loaded.queries.query_for(&t.table).expect("query per table");
        let _ = writeln!(
            s,
            "{}: {} input row(s), {} round-tripped row(s), {}",
            t.table,
            t.input_rows,
            t.rows.len(),
            t.classification.as_str()
        );
        let header: Vec<&str> = decl.column_names().collect();
        let mut grid: Vec<Vec<String>> = vec![std::iter::once("".to_string())
            .chain(header.iter().map(|h| h.to_string()))
            .collect()];
        for (i, r) in t.rows.iter().enumerate() {
            let mark = if t.unit.contains(&i) { " " } else { "+" };
            let mut line = vec![mark.to_string()];
            for h in &header {
                let cell = q
                    .selects
                    .iter()
                    .position(|sel| sel.alias == *h)
                    .map(|j| r.cells[j].to_string())
                    .unwrap_or_default();
                line.push(cell);
            }
            grid.push(line);
        }
        let widths: Vec<usize> = (0..grid[0].len())
            .map(|c| grid.iter().map(|r| r[c].len()).max().unwrap_or(0))
            .collect();
        for row in grid {
            let cells: Vec<String> = row.iter().zip(&widths).map(|(c, w)| format!("{c:w$}")).collect();
            let _ = writeln!(s, "  {}", cells.join("  ").trim_end());
        }
    }
    let _ = writeln!(s, "overall: {}", rt.classification.as_str());
    s
}

fn write(path: PathBuf, contents: &str) -> Result<PathBuf, RunError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|source| RunError::Write {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(&path, contents).map_err(|source| RunError::Write {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

/// Writes `<Table>.cq` for every compiled query.
pub fn write_compiled(compiled: &Compiled, out: &Path) -> Result<Vec<PathBuf>, RunError> {
    compiled
        .queries
        .iter()
        .map(|q| write(out.join(format!("{}.cq", q.name)), &q.to_string()))
        .collect()
}

/// Exports `triples.nt` and `provenance.json`.
pub fn write_coeval(co: &Coevaluation, out: &Path) -> Result<Vec<PathBuf>, RunError> {
    let nt = export_ntriples(&co.instance)?;
    Ok(vec![
        write(out.join("triples.nt"), &nt)?,
        write(out.join("provenance.json"), &provenance_json(co))?,
    ])
}

pub fn write_roundtrip(rt: &RoundTrip, loaded: &Loaded, co: &Coevaluation, out: &Path) -> Result<PathBuf, RunError> {
    write(out.join("roundtrip.json"), &roundtrip_json(rt, loaded, co))
}

/// Output of a full run.
pub struct RunReport {
    pub loaded: Loaded,
    pub coeval: Coevaluation,
    pub roundtrip: RoundTrip,
    pub files: Vec<PathBuf>,
}

/// Ingest, compile if needed, co-evaluate, export, round-trip. Everything is
/// computed before the first file is written.
pub fn run(project: Project, opts: &RunOptions) -> Result<RunReport, RunError> {
    let loaded = load(project, opts)?;
    let co = loaded.coevaluate()?;
    let rt = loaded.roundtrip(&co)?;
    export_ntriples(&co.instance)?;
    let mut files = Vec::new();
    if let Some(c) = &loaded.compiled {
        files.extend(write_compiled(c, &loaded.out)?);
    }
    files.extend(write_coeval(&co, &loaded.out)?);
    files.push(write_roundtrip(&rt, &loaded, &co, &loaded.out)?);
    Ok(RunReport {
        loaded,
        coeval: co,
        roundtrip: rt,
        files,
    })
}
