//! Python bindings: parse queries, co-evaluate tables, round-trip the
//! result and compare triple sets.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use coeval::coeval::{self as co, QuerySet};
use coeval::eval::{self, EvalError};
use coeval::model::{ingest_csv, ForeignKey, RelInstance, RelSchema, TableDecl};
use coeval::project::{self as project, RunError, RunOptions};
use coeval::qlang::{self, QueryHom};
use coeval::{rdf, Diagnostic};

create_exception!(
    coeval,
    CoevalError,
    PyValueError,
    "Base class for errors raised by this module."
);
create_exception!(
    coeval,
    InconsistencyError,
    CoevalError,
    "The equations identify two different constants."
);
create_exception!(
    coeval,
    UnitViolation,
    CoevalError,
    "An input row does not round-trip to itself."
);
create_exception!(
    coeval,
    ExportError,
    CoevalError,
    "The instance cannot be written as N-Triples."
);
create_exception!(
    coeval,
    MappingError,
    CoevalError,
    "A schema mapping is malformed or does not compose."
);

fn lines(diags: &[Diagnostic]) -> String {
    diags.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n")
}

fn value_err(e: impl ToString) -> PyErr {
    CoevalError::new_err(e.to_string())
}

fn coeval_err(e: co::CoevalError) -> PyErr {
    match e {
        co::CoevalError::Inconsistent(e) => InconsistencyError::new_err(e.to_string()),
        other => value_err(other),
    }
}

fn eval_err(e: EvalError) -> PyErr {
    match e {
        e @ EvalError::UnitViolation { .. } => UnitViolation::new_err(e.to_string()),
        other => value_err(other),
    }
}

fn run_err(e: RunError) -> PyErr {
    let msg = e.to_string();
    match e {
        RunError::Coeval(e) => coeval_err(e),
        RunError::Unit(e) => eval_err(e),
        RunError::Export(_) | RunError::Write { .. } => ExportError::new_err(msg),
        RunError::Mapping(_) | RunError::MappingFile(_) => MappingError::new_err(msg),
        _ => CoevalError::new_err(msg),
    }
}

/// A parsed conjunctive query.
#[pyclass(name = "Query", frozen)]
struct PyQuery(qlang::Query);

#[pymethods]
impl PyQuery {
    #[getter]
    fn name(&self) -> &str {
        &self.0.name
    }

    #[getter]
    fn target_table(&self) -> &str {
        &self.0.target_table
    }

    /// `(variable, table)` pairs in FROM order.
    #[getter]
    fn froms(&self) -> Vec<(String, String)> {
        self.0.froms.iter().map(|f| (f.var.clone(), f.table.clone())).collect()
    }

    /// `(expression, alias)` pairs in SELECT order.
    #[getter]
    fn selects(&self) -> Vec<(String, String)> {
        self.0
            .selects
            .iter()
            .map(|s| (s.expr.to_string(), s.alias.clone()))
            .collect()
    }

    #[getter]
    fn wheres(&self) -> Vec<String> {
        self.0.wheres.iter().map(ToString::to_string).collect()
    }

    /// The query with variables renamed in FROM order and atoms sorted.
    fn canonical(&self) -> PyQuery {
        PyQuery(self.0.canonical_form())
    }

    fn __str__(&self) -> String {
        self.0.to_string()
    }

    fn __repr__(&self) -> String {
        format!("<Query {} with {} variables>", self.0.name, self.0.froms.len())
    }
}

/// A target instance whose cells are constants or blank nodes.
#[pyclass(name = "TripleInstance", frozen)]
struct PyTripleInstance(co::TripleInstance);

#[pymethods]
impl PyTripleInstance {
    #[staticmethod]
    fn from_ntriples(text: &str) -> PyResult<Self> {
        rdf::import_ntriples(text).map(PyTripleInstance).map_err(value_err)
    }

    #[getter]
    fn fact_count(&self) -> usize {
        self.0.fact_count()
    }

    #[getter]
    fn blank_count(&self) -> usize {
        self.0.blank_count()
    }

    /// Distinct facts of `table` as tuples of strings; blanks print as `_:bN`.
    #[pyo3(signature = (table = "Rdf"))]
    fn facts(&self, table: &str) -> Vec<Vec<String>> {
        self.0
            .facts_of(table)
            .map(|(_, f)| f.cells.iter().map(ToString::to_string).collect())
            .collect()
    }

    fn to_ntriples(&self) -> PyResult<String> {
        rdf::export_ntriples(&self.0).map_err(|e| ExportError::new_err(e.to_string()))
    }

    /// Equal up to renaming blank nodes.
    fn isomorphic(&self, other: &PyTripleInstance) -> bool {
        eval::isomorphic(&self.0, &other.0)
    }

    fn __len__(&self) -> usize {
        self.0.fact_count()
    }
}

/// The result of co-evaluating a set of queries on a source instance.
#[pyclass(name = "Coevaluation", frozen)]
struct PyCoevaluation {
    source: RelInstance,
    queries: QuerySet,
    result: co::Coevaluation,
}

#[pymethods]
impl PyCoevaluation {
    #[getter]
    fn instance(&self) -> PyTripleInstance {
        PyTripleInstance(self.result.instance.clone())
    }

    #[getter]
    fn equation_count(&self) -> usize {
        self.result.equations.len()
    }

    #[getter]
    fn class_count(&self) -> usize {
        self.result.classes.len()
    }

    /// Evaluates every query over the output and reports the unit per
    /// table, as a dict with `classification` and `tables`.
    fn roundtrip<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let rt = eval::compute_unit(&self.source, &self.queries, &self.result).map_err(eval_err)?;
        let json = serde_json::to_string(&rt).map_err(value_err)?;
        py.import("json")?.call_method1("loads", (json,))
    }
}

/// A project configuration file with its inputs.
#[pyclass(name = "Project", frozen)]
struct PyProject(project::Project);

fn options(out: Option<PathBuf>, type_predicate: Option<String>, strict: bool) -> RunOptions {
    RunOptions {
        out,
        type_predicate,
        strict,
    }
}

#[pymethods]
impl PyProject {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        project::Project::load(&path).map(PyProject).map_err(run_err)
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.0.warnings.iter().map(ToString::to_string).collect()
    }

    #[pyo3(signature = (type_predicate = None))]
    fn coevaluate(&self, type_predicate: Option<String>) -> PyResult<PyCoevaluation> {
        let loaded = project::load(self.0.clone(), &options(None, type_predicate, false)).map_err(run_err)?;
        let result = loaded.coevaluate().map_err(run_err)?;
        Ok(PyCoevaluation {
            source: loaded.instance,
            queries: loaded.queries,
            result,
        })
    }

    /// Compiles the project's mapping; returns the query text per table.
    #[pyo3(signature = (type_predicate = None))]
    fn compile(&self, type_predicate: Option<String>) -> PyResult<BTreeMap<String, String>> {
        let c = project::compile(&self.0, &options(None, type_predicate, false)).map_err(run_err)?;
        Ok(c.queries
            .iter()
            .map(|q| (q.target_table.clone(), q.to_string()))
            .collect())
    }

    /// Runs the whole pipeline and writes its files; returns their paths.
    #[pyo3(signature = (out = None, type_predicate = None, strict = false))]
    fn run(&self, out: Option<PathBuf>, type_predicate: Option<String>, strict: bool) -> PyResult<Vec<PathBuf>> {
        let r = project::run(self.0.clone(), &options(out, type_predicate, strict)).map_err(run_err)?;
        Ok(r.files)
    }
}

#[pyfunction]
fn parse_query(text: &str) -> PyResult<PyQuery> {
    qlang::parse_query(text).map(PyQuery).map_err(value_err)
}

/// Co-evaluates `queries` on tables given as CSV text.
///
/// `tables` maps each table to its columns and `csv` maps it to its
/// contents. `foreign_keys` maps `"T.c"` to the referenced table, and
/// `homs` maps `"T.c"` to the variable renaming for that key.
#[pyfunction]
#[pyo3(signature = (tables, csv, queries, foreign_keys = BTreeMap::new(), homs = BTreeMap::new()))]
fn coevaluate(
    tables: BTreeMap<String, Vec<String>>,
    csv: BTreeMap<String, String>,
    queries: Vec<String>,
    foreign_keys: BTreeMap<String, String>,
    homs: BTreeMap<String, BTreeMap<String, String>>,
) -> PyResult<PyCoevaluation> {
    let split = |key: &str| {
        key.split_once('.')
            .map(|(t, c)| (t.to_string(), c.to_string()))
            .ok_or_else(|| value_err(format!("`{key}` is not of the form table.column")))
    };
    let mut fks = Vec::new();
    for (key, target) in &foreign_keys {
        let (table, column) = split(key)?;
        fks.push(ForeignKey {
            table,
            column,
            target: target.clone(),
        });
    }
    let decls = tables.iter().map(|(t, cols)| TableDecl::new(t.clone(), cols)).collect();
    let schema = RelSchema::new(decls, fks).map_err(value_err)?;
    let frags = csv
        .iter()
        .map(|(t, text)| ingest_csv(&schema, t, text))
        .collect::<Result<Vec<_>, _>>()
        .map_err(value_err)?;
    let source = RelInstance::new(schema.clone(), frags).map_err(value_err)?;
    let parsed = queries
        .iter()
        .map(|q| qlang::parse_query(q))
        .collect::<Result<Vec<_>, _>>()
        .map_err(value_err)?;
    let queries = QuerySet::new(schema.clone(), RelSchema::rdf(), parsed).map_err(|d| value_err(lines(&d)))?;
    let mut hom_list = Vec::new();
    for (key, map) in homs {
        let (table, column) = split(&key)?;
        let fk = schema
            .foreign_key(&table, &column)
            .ok_or_else(|| value_err(format!("`{key}` is not a foreign key")))?;
        let from = queries
            .query_for(&fk.target)
            .ok_or_else(|| value_err(format!("no query for {}", fk.target)))?;
        let to = queries
            .query_for(&table)
            .ok_or_else(|| value_err(format!("no query for {table}")))?;
        hom_list.push(QueryHom {
            from_query: from.name.clone(),
            to_query: to.name.clone(),
            var_map: map,
            fk_column: Some(column),
        });
    }
    let bad = queries.check_homs(&hom_list);
    if !bad.is_empty() {
        return Err(value_err(lines(&bad)));
    }
    let result = co::coevaluate(&source, &queries, &hom_list).map_err(coeval_err)?;
    Ok(PyCoevaluation {
        source,
        queries,
        result,
    })
}

/// Whether two N-Triples documents are equal up to blank-node renaming.
#[pyfunction]
fn isomorphic(a: &str, b: &str) -> PyResult<bool> {
    let a = rdf::import_ntriples(a).map_err(value_err)?;
    let b = rdf::import_ntriples(b).map_err(value_err)?;
    Ok(eval::isomorphic(&a, &b))
}

#[pymodule(name = "coeval")]
fn coeval_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyQuery>()?;
    m.add_class::<PyTripleInstance>()?;
    m.add_class::<PyCoevaluation>()?;
    m.add_class::<PyProject>()?;
    m.add_function(wrap_pyfunction!(parse_query, m)?)?;
    m.add_function(wrap_pyfunction!(coevaluate, m)?)?;
    m.add_function(wrap_pyfunction!(isomorphic, m)?)?;
    let py = m.py();
    m.add("CoevalError", py.get_type::<CoevalError>())?;
    m.add("InconsistencyError", py.get_type::<InconsistencyError>())?;
    m.add("UnitViolation", py.get_type::<UnitViolation>())?;
    m.add("ExportError", py.get_type::<ExportError>())?;
    m.add("MappingError", py.get_type::<MappingError>())?;
    Ok(())
}
