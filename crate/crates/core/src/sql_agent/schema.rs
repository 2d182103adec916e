use serde::{Deserialize, Serialize};

use crate::ports::{SqlError, SqlExecutor};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub decl_type: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<Column>,
    pub row_count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForeignKey {
    pub table: String,
    pub column: String,
    pub ref_table: String,
    pub ref_column: String,
}

/// Tables (by name) with their columns in declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SchemaSnapshot {
    pub tables: Vec<Table>,
    pub foreign_keys: Vec<ForeignKey>,
}

fn sql_err(e: rusqlite::Error) -> SqlError {
    SqlError::Runtime(e.to_string())
}

fn quote_ident(name: &str) -> String {
    format!("\"{}\"", name.replace('"', "\"\""))
}

impl SchemaSnapshot {
    pub fn introspect(executor: &SqlExecutor) -> Result<Self, SqlError> {
        let conn = executor.connect()?;
        let mut stmt = conn
            .prepare("SELECT name FROM sqlite_master WHERE type = 'table' AND name NOT LIKE 'sqlite_%' ORDER BY name")
            .map_err(sql_err)?;
        let names: Vec<String> = stmt
            .query_map([], |r| r.get(0))
            .map_err(sql_err)?
            .collect::<Result<_, _>>()
            .map_err(sql_err)?;

        let mut tables = Vec::new();
        let mut foreign_keys = Vec::new();
        for name in names {
            let mut info = conn
                .prepare(&format!("PRAGMA table_info({})", quote_ident(&name)))
                .map_err(sql_err)?;
            let columns = info
                .query_map([], |r| {
                    Ok(Column {
                        name: r.get(1)?,
                        decl_type: r.get(2)?,
                    })
                })
                .map_err(sql_err)?
                .collect::<Result<Vec<_>, _>>()
                .map_err(sql_err)?;
            let row_count: i64 = conn
                .query_row(&format!("SELECT COUNT(*) FROM {}", quote_ident(&name)), [], |r| r.get(0))
                .map_err(sql_err)?;
            let mut fks = conn
                .prepare(&format!("PRAGMA foreign_key_list({})", quote_ident(&name)))
                .map_err(sql_err)?;
            let mut these: Vec<ForeignKey> = fks
                .query_map([], |r| {
                    Ok(ForeignKey {
                        table: name.clone(),
                        column: r.get(3)?,
                        ref_table: r.get(2)?,
                        ref_column: r.get::<_, Option<String>>(4)?.unwrap_or_default(),
                    })
                })
                .map_err(sql_err)?
                .collect::<Result<_, _>>()
                .map_err(sql_err)?;
            these.sort_by(|a, b| a.column.cmp(&b.column));
            foreign_keys.extend(these);
            tables.push(Table {
                name,
                columns,
                row_count: row_count as u64,
            });
        }
        Ok(Self { tables, foreign_keys })
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    /// `table(col:type, ...)` per table, then `fk table.col -> table.col`.
    pub fn render(&self) -> String {
        let mut lines: Vec<String> = self
            .tables
            .iter()
            .map(|t| {
                let cols: Vec<String> = t.columns.iter().map(|c| format!("{}:{}", c.name, c.decl_type)).collect();
                format!("{}({})", t.name, cols.join(", "))
            })
            .collect();
        lines.extend(
            self.foreign_keys
                .iter()
                .map(|fk| format!("fk {}.{} -> {}.{}", fk.table, fk.column, fk.ref_table, fk.ref_column)),
        );
        lines.join("\n")
    }
}
