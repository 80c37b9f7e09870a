//! Relational schemas and instances.
//!
//! Every input row gets a synthetic [`RowId`] made from its table name and its
//! position in the input. Cells hold either a text literal or a reference to a
//! row of the table a foreign key points at.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Attribute,
    ForeignKey,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TableDecl {
    pub name: String,
    pub columns: Vec<Column>,
}

impl TableDecl {
    /// A table whose columns are all attributes.
    pub fn new<S: AsRef<str>>(name: impl Into<String>, columns: &[S]) -> Self {
        TableDecl {
            name: name.into(),
            columns: columns
                .iter()
                .map(|c| Column {
                    name: c.as_ref().to_string(),
                    kind: ColumnKind::Attribute,
                })
                .collect(),
        }
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.column_index(name).is_some()
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }
}

/// `table.column` references a row of `target`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct ForeignKey {
    pub table: String,
    pub column: String,
    pub target: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SchemaError {
    #[error("table `{0}` declared more than once")]
    DuplicateTable(String),
    #[error("column `{column}` declared more than once in table `{table}`")]
    DuplicateColumn { table: String, column: String },
    #[error("foreign key {table}.{column}: table `{missing}` is not declared")]
    UnknownFkTable {
        table: String,
        column: String,
        missing: String,
    },
    #[error("foreign key {table}.{column}: no such column")]
    UnknownFkColumn { table: String, column: String },
    #[error("column {table}.{column} is marked as a foreign key but no foreign key declares it")]
    DanglingFkColumn { table: String, column: String },
    #[error("column {table}.{column} has more than one foreign key")]
    DuplicateFk { table: String, column: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RelSchema {
    tables: Vec<TableDecl>,
    foreign_keys: Vec<ForeignKey>,
}

impl RelSchema {
    /// Checks the schema invariants. Columns named by a foreign key are
    /// re-tagged as [`ColumnKind::ForeignKey`].
    pub fn new(mut tables: Vec<TableDecl>, foreign_keys: Vec<ForeignKey>) -> Result<Self, SchemaError> {
        let mut names = HashSet::new();
        for t in &tables {
            if !names.insert(t.name.as_str()) {
                return Err(SchemaError::DuplicateTable(t.name.clone()));
            }
            let mut cols = HashSet::new();
            for c in &t.columns {
                if !cols.insert(c.name.as_str()) {
                    return Err(SchemaError::DuplicateColumn {
                        table: t.name.clone(),
                        column: c.name.clone(),
                    });
                }
            }
        }
        let mut seen = HashSet::new();
        for fk in &foreign_keys {
            if !names.contains(fk.target.as_str()) || !names.contains(fk.table.as_str()) {
                let missing = if names.contains(fk.table.as_str()) {
                    &fk.target
                } else {
                    &fk.table
                };
                return Err(SchemaError::UnknownFkTable {
                    table: fk.table.clone(),
                    column: fk.column.clone(),
                    missing: missing.clone(),
                });
            }
            if !seen.insert((fk.table.as_str(), fk.column.as_str())) {
                return Err(SchemaError::DuplicateFk {
                    table: fk.table.clone(),
                    column: fk.column.clone(),
                });
            }
        }
        for t in &mut tables {
            for c in &mut t.columns {
                let is_fk = seen.contains(&(t.name.as_str(), c.name.as_str()));
                if c.kind == ColumnKind::ForeignKey && !is_fk {
                    return Err(SchemaError::DanglingFkColumn {
                        table: t.name.clone(),
                        column: c.name.clone(),
                    });
                }
                if is_fk {
                    c.kind = ColumnKind::ForeignKey;
                }
            }
        }
        for fk in &foreign_keys {
            let t = tables.iter().find(|t| t.name == fk.table).expect("checked above");
            if !t.has_column(&fk.column) {
                return Err(SchemaError::UnknownFkColumn {
                    table: fk.table.clone(),
                    column: fk.column.clone(),
                });
            }
        }
        Ok(RelSchema { tables, foreign_keys })
    }

    /// The single three-column triple table `Rdf(subject, predicate, object)`.
    pub fn rdf() -> Self {
        RelSchema {
            tables: vec![TableDecl::new("Rdf", &["subject", "predicate", "object"])],
            foreign_keys: Vec::new(),
        }
    }

    pub fn tables(&self) -> &[TableDecl] {
        &self.tables
    }

    pub fn foreign_keys(&self) -> &[ForeignKey] {
        &self.foreign_keys
    }

    pub fn table(&self, name: &str) -> Option<&TableDecl> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn table_index(&self, name: &str) -> Option<usize> {
        self.tables.iter().position(|t| t.name == name)
    }

    pub fn foreign_key(&self, table: &str, column: &str) -> Option<&ForeignKey> {
        self.foreign_keys
            .iter()
            .find(|fk| fk.table == table && fk.column == column)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct RowId {
    pub table: String,
    pub ordinal: usize,
}

impl RowId {
    pub fn new(table: impl Into<String>, ordinal: usize) -> Self {
        RowId {
            table: table.into(),
            ordinal,
        }
    }
}

impl fmt::Display for RowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.table, self.ordinal)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Value {
    Literal(String),
    Ref(RowId),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Literal(s) => f.write_str(s),
            Value::Ref(r) => write!(f, "{r}"),
        }
    }
}

/// The rows of one table, cells in declared column order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TableData {
    pub table: String,
    pub rows: Vec<Vec<Value>>,
}

impl TableData {
    pub fn empty(table: impl Into<String>) -> Self {
        TableData {
            table: table.into(),
            rows: Vec::new(),
        }
    }

    /// Number of rows that repeat an earlier row verbatim.
    pub fn duplicate_rows(&self) -> usize {
        let mut seen = HashSet::new();
        self.rows.iter().filter(|r| !seen.insert(*r)).count()
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("table `{0}` is not declared in the source schema")]
    UnknownTable(String),
    #[error("{table}: CSV header {found:?} does not match declared columns {expected:?}")]
    HeaderMismatch {
        table: String,
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("{table}: line {line}: expected {expected} fields, found {found}")]
    RaggedRow {
        table: String,
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("{table}.{column}: row {row}: `{value}` does not name a row of `{target}`")]
    UnresolvedForeignKey {
        table: String,
        column: String,
        row: usize,
        value: String,
        target: String,
    },
    #[error("table `{0}` supplied more than once")]
    DuplicateTable(String),
    #[error("{table}: {source}")]
    Csv {
        table: String,
        #[source]
        source: csv::Error,
    },
}

/// Reads the CSV text of one table.
///
/// Foreign-key cells hold the 0-based ordinal of the referenced row. Whether
/// that row exists is checked when the tables are assembled into a
/// [`RelInstance`].
pub fn ingest_csv(schema: &RelSchema, table: &str, csv_text: &str) -> Result<TableData, IngestError> {
    let decl = schema
        .table(table)
        .ok_or_else(|| IngestError::UnknownTable(table.to_string()))?;
    let csv_err = |source| IngestError::Csv {
        table: table.to_string(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(csv_text.as_bytes());

    let header: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let expected: Vec<String> = decl.column_names().map(str::to_string).collect();
    let header_set: HashSet<&str> = header.iter().map(String::as_str).collect();
    let expected_set: HashSet<&str> = expected.iter().map(String::as_str).collect();
    if header.len() != expected.len() || header_set != expected_set {
        return Err(IngestError::HeaderMismatch {
            table: table.to_string(),
            expected,
            found: header,
        });
    }
    // position in the file of each declared column
    let layout: Vec<usize> = decl
        .columns
        .iter()
        .map(|c| header.iter().position(|h| *h == c.name).expect("header checked"))
        .collect();

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths { pos, expected_len, len } => IngestError::RaggedRow {
                table: table.to_string(),
                line: pos.as_ref().map(|p| p.line()).unwrap_or_default(),
                expected: *expected_len as usize,
                found: *len as usize,
            },
            _ => csv_err(e),
        })?;
        let ordinal = rows.len();
        let mut cells = Vec::with_capacity(decl.columns.len());
        for (col, &pos) in decl.columns.iter().zip(&layout) {
            let text = &record[pos];
            let value = match col.kind {
                ColumnKind::Attribute => Value::Literal(text.to_string()),
                ColumnKind::ForeignKey => {
                    let fk = schema.foreign_key(table, &col.name).expect("schema invariant");
                    let target_row = text
                        .trim()
                        .parse::<usize>()
                        .map_err(|_| IngestError::UnresolvedForeignKey {
                            table: table.to_string(),
                            column: col.name.clone(),
                            row: ordinal,
                            value: text.to_string(),
                            target: fk.target.clone(),
                        })?;
                    Value::Ref(RowId::new(fk.target.clone(), target_row))
                }
            };
            cells.push(value);
        }
        rows.push(cells);
    }
    Ok(TableData {
        table: table.to_string(),
        rows,
    })
}

/// A source database instance. Immutable once built.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelInstance {
    schema: RelSchema,
    // aligned with schema.tables()
    tables: Vec<Vec<Vec<Value>>>,
}

impl RelInstance {
    /// Assembles table fragments; tables without a fragment are empty.
    pub fn new(schema: RelSchema, fragments: Vec<TableData>) -> Result<Self, IngestError> {
        let mut by_name: HashMap<String, Vec<Vec<Value>>> = HashMap::new();
        for frag in fragments {
            if schema.table(&frag.table).is_none() {
                return Err(IngestError::UnknownTable(frag.table));
            }
            if by_name.contains_key(&frag.table) {
                return Err(IngestError::DuplicateTable(frag.table));
            }
            by_name.insert(frag.table, frag.rows);
        }
        let tables: Vec<Vec<Vec<Value>>> = schema
            .tables()
            .iter()
            .map(|t| by_name.remove(&t.name).unwrap_or_default())
            .collect();
        for (t, rows) in schema.tables().iter().zip(&tables) {
            for (ordinal, row) in rows.iter().enumerate() {
                if row.len() != t.columns.len() {
                    return Err(IngestError::RaggedRow {
                        table: t.name.clone(),
                        line: ordinal as u64 + 2,
                        expected: t.columns.len(),
                        found: row.len(),
                    });
                }
                for (col, value) in t.columns.iter().zip(row) {
                    if let Value::Ref(r) = value {
                        let fk = schema.foreign_key(&t.name, &col.name);
                        let target_rows = schema.table_index(&r.table).map(|i| tables[i].len());
                        let ok =
                            fk.is_some_and(|fk| fk.target == r.table) && target_rows.is_some_and(|n| r.ordinal < n);
                        if !ok {
                            return Err(IngestError::UnresolvedForeignKey {
                                table: t.name.clone(),
                                column: col.name.clone(),
                                row: ordinal,
                                value: r.ordinal.to_string(),
                                target: r.table.clone(),
                            });
                        }
                    }
                }
            }
        }
        Ok(RelInstance { schema, tables })
    }

    pub fn empty(schema: RelSchema) -> Self {
        let tables = vec![Vec::new(); schema.tables().len()];
        RelInstance { schema, tables }
    }

    pub fn schema(&self) -> &RelSchema {
        &self.schema
    }

    pub fn row_count(&self, table: &str) -> usize {
        self.schema
            .table_index(table)
            .map(|i| self.tables[i].len())
            .unwrap_or(0)
    }

    /// Row ids of `table` in input order.
    pub fn rows(&self, table: &str) -> impl Iterator<Item = RowId> + '_ {
        let name = table.to_string();
        (0..self.row_count(table)).map(move |i| RowId::new(name.clone(), i))
    }

    /// All row ids, tables in declaration order.
    pub fn all_rows(&self) -> impl Iterator<Item = RowId> + '_ {
        self.schema.tables().iter().flat_map(|t| self.rows(&t.name))
    }

    pub fn row(&self, row: &RowId) -> Option<&[Value]> {
        let i = self.schema.table_index(&row.table)?;
        self.tables[i].get(row.ordinal).map(Vec::as_slice)
    }

    pub fn cell(&self, row: &RowId, column: &str) -> Option<&Value> {
        let decl = self.schema.table(&row.table)?;
        let c = decl.column_index(column)?;
        self.row(row).map(|cells| &cells[c])
    }

    /// The table fragments this instance was built from.
    pub fn fragments(&self) -> Vec<TableData> {
        self.schema
            .tables()
            .iter()
            .zip(&self.tables)
            .map(|(t, rows)| TableData {
                table: t.name.clone(),
                rows: rows.clone(),
            })
            .collect()
    }
}
