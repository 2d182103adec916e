use serde::{Deserialize, Serialize};

use crate::ports::{ResultTable, SqlValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KeyKind {
    Max,
    Min,
    Total,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyValue {
    pub kind: KeyKind,
    pub column: String,
    pub value: SqlValue,
    /// Row the value came from (max and min only).
    pub row: Option<usize>,
    /// Text of the first non-numeric cell in that row.
    pub label: Option<String>,
}

impl KeyValue {
    pub fn name(&self) -> String {
        let kind = match self.kind {
            KeyKind::Max => "max",
            KeyKind::Min => "min",
            KeyKind::Total => "total",
        };
        format!("{kind}({})", self.column)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Increasing,
    Decreasing,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trend {
    pub column: String,
    pub ordered_by: String,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Insight {
    pub narrative: String,
    pub key_values: Vec<KeyValue>,
    pub trends: Vec<Trend>,
}

/// Columns whose non-null cells are all numbers (and there is at least one).
pub fn numeric_columns(table: &ResultTable) -> Vec<usize> {
    (0..table.columns.len())
        .filter(|&c| {
            let mut any = false;
            for row in &table.rows {
                match &row[c] {
                    SqlValue::Null => {}
                    v if v.is_numeric() => any = true,
                    _ => return false,
                }
            }
            any
        })
        .collect()
}

fn row_label(table: &ResultTable, row: usize) -> Option<String> {
    table.rows[row].iter().find_map(|v| match v {
        SqlValue::Text(t) => Some(t.clone()),
        _ => None,
    })
}

fn total_of(table: &ResultTable, col: usize) -> SqlValue {
    let cells: Vec<&SqlValue> = table.rows.iter().map(|r| &r[col]).filter(|v| v.is_numeric()).collect();
    if cells.iter().all(|v| matches!(v, SqlValue::Integer(_))) {
        let sum = cells.iter().try_fold(0i64, |acc, v| match v {
            SqlValue::Integer(i) => acc.checked_add(*i),
            _ => None,
        });
        if let Some(sum) = sum {
            return SqlValue::Integer(sum);
        }
    }
    // Rounded to 9 decimal places.
    let sum: f64 = cells.iter().filter_map(|v| v.as_f64()).sum();
    SqlValue::Real((sum * 1e9).round() / 1e9)
}

/// Max, min (first occurrence on ties) and total of every numeric column.
pub fn key_values(table: &ResultTable) -> Vec<KeyValue> {
    let mut out = Vec::new();
    for col in numeric_columns(table) {
        let name = &table.columns[col];
        let cells: Vec<(usize, f64)> = table
            .rows
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r[col].as_f64().map(|v| (i, v)))
            .collect();
        let mut max = cells[0];
        let mut min = cells[0];
        for &(i, v) in &cells[1..] {
            if v > max.1 {
                max = (i, v);
            }
            if v < min.1 {
                min = (i, v);
            }
        }
        for (kind, (row, _)) in [(KeyKind::Max, max), (KeyKind::Min, min)] {
            out.push(KeyValue {
                kind,
                column: name.clone(),
                value: table.rows[row][col].clone(),
                row: Some(row),
                label: row_label(table, row),
            });
        }
        out.push(KeyValue {
            kind: KeyKind::Total,
            column: name.clone(),
            value: total_of(table, col),
            row: None,
            label: None,
        });
    }
    out
}

/// Max and min must be cells of their column; totals must recompute.
pub fn verify_key_values(table: &ResultTable, values: &[KeyValue]) -> bool {
    values.iter().all(|kv| {
        let Some(col) = table.columns.iter().position(|c| c == &kv.column) else {
            return false;
        };
        match kv.kind {
            KeyKind::Total => total_of(table, col) == kv.value,
            _ => match kv.row {
                Some(r) => table.rows.get(r).is_some_and(|row| row[col] == kv.value),
                None => table.rows.iter().any(|row| row[col] == kv.value),
            },
        }
    })
}

fn looks_temporal(text: &str) -> bool {
    let b = text.as_bytes();
    b.len() >= 7
        && b[..4].iter().all(u8::is_ascii_digit)
        && b[4] == b'-'
        && b[5..7].iter().all(u8::is_ascii_digit)
}

const TEMPORAL_NAMES: &[&str] = &["date", "month", "time", "year", "day", "week", "quarter", "period"];

/// First column that is named like a date or holds ISO-style dates.
pub fn temporal_column(table: &ResultTable) -> Option<usize> {
    (0..table.columns.len()).find(|&c| {
        let name = table.columns[c].to_ascii_lowercase();
        let all_dates = !table.rows.is_empty()
            && table
                .rows
                .iter()
                .all(|r| matches!(&r[c], SqlValue::Text(t) if looks_temporal(t)));
        all_dates || TEMPORAL_NAMES.iter().any(|n| name.contains(n)) && !numeric_columns(table).contains(&c)
    })
}

/// Strictly monotone numeric columns over at least three date-ordered rows.
pub fn trends(table: &ResultTable) -> Vec<Trend> {
    let Some(tcol) = temporal_column(table) else {
        return Vec::new();
    };
    let mut order: Vec<usize> = (0..table.rows.len()).collect();
    order.sort_by(|&a, &b| table.rows[a][tcol].to_string().cmp(&table.rows[b][tcol].to_string()));
    let mut out = Vec::new();
    for col in numeric_columns(table) {
        if col == tcol {
            continue;
        }
        let series: Option<Vec<f64>> = order.iter().map(|&r| table.rows[r][col].as_f64()).collect();
        let Some(series) = series else { continue };
        if series.len() < 3 {
            continue;
        }
        let direction = if series.windows(2).all(|w| w[1] > w[0]) {
            Direction::Increasing
        } else if series.windows(2).all(|w| w[1] < w[0]) {
            Direction::Decreasing
        } else {
            continue;
        };
        out.push(Trend {
            column: table.columns[col].clone(),
            ordered_by: table.columns[tcol].clone(),
            direction,
        });
    }
    out
}

/// Deterministic fallback narrative.
pub fn template_narrative(table: &ResultTable, values: &[KeyValue], trends: &[Trend]) -> String {
    let mut parts = Vec::new();
    if table.rows.len() == 1 {
        let cells: Vec<String> = table
            .columns
            .iter()
            .zip(&table.rows[0])
            .map(|(c, v)| format!("{c} = {v}"))
            .collect();
        parts.push(format!("The result is a single row: {}.", cells.join(", ")));
    } else {
        parts.push(format!("The query returned {} rows.", table.rows.len()));
        for kv in values {
            let label = kv.label.as_ref().map(|l| format!(" ({l})")).unwrap_or_default();
            let line = match kv.kind {
                KeyKind::Max => format!("Highest {} is {}{label}.", kv.column, kv.value),
                KeyKind::Min => format!("Lowest {} is {}{label}.", kv.column, kv.value),
                KeyKind::Total => format!("Total {} is {}.", kv.column, kv.value),
            };
            parts.push(line);
        }
    }
    for t in trends {
        let dir = match t.direction {
            Direction::Increasing => "increasing",
            Direction::Decreasing => "decreasing",
        };
        parts.push(format!("{} is {dir} over {}.", t.column, t.ordered_by));
    }
    parts.join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(columns: &[&str], rows: Vec<Vec<SqlValue>>) -> ResultTable {
        ResultTable {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows,
            truncated: false,
        }
    }

    fn t(s: &str) -> SqlValue {
        SqlValue::Text(s.into())
    }

    #[test]
    fn two_row_example() {
        let tb = table(&["name", "v"], vec![vec![t("A"), SqlValue::Integer(10)], vec![t("B"), SqlValue::Integer(30)]]);
        let kv = key_values(&tb);
        assert_eq!(kv[0].name(), "max(v)");
        assert_eq!(kv[0].value, SqlValue::Integer(30));
        assert_eq!(kv[0].label.as_deref(), Some("B"));
        assert_eq!(kv[2].value, SqlValue::Integer(40));
        assert!(verify_key_values(&tb, &kv));
        assert!(trends(&tb).is_empty());
    }

    #[test]
    fn single_row_names_the_row() {
        let tb = table(&["name", "unit_price"], vec![vec![t("Blue Train"), SqlValue::Real(1.99)]]);
        let n = template_narrative(&tb, &key_values(&tb), &[]);
        assert!(n.contains("Blue Train"));
    }

    #[test]
    fn monthly_trend() {
        let tb = table(
            &["month", "total"],
            vec![
                vec![t("2025-03"), SqlValue::Real(3.0)],
                vec![t("2025-01"), SqlValue::Real(1.0)],
                vec![t("2025-02"), SqlValue::Real(2.0)],
            ],
        );
        assert_eq!(trends(&tb)[0].direction, Direction::Increasing);
        let two = table(&["month", "total"], tb.rows[..2].to_vec());
        assert!(trends(&two).is_empty());
    }

    #[test]
    fn tampered_values_fail_verification() {
        let tb = table(&["v"], vec![vec![SqlValue::Integer(1)], vec![SqlValue::Integer(2)]]);
        let mut kv = key_values(&tb);
        assert!(verify_key_values(&tb, &kv));
        kv[0].value = SqlValue::Integer(5);
        assert!(!verify_key_values(&tb, &kv));
    }
}
