use strot::executor::ResultPayload;
use strot::trace::{ErrorCode, ErrorTrace};

use crate::reference::{RVal, RefResult};

pub const REL_TOL: f64 = 1e-9;
pub const ABS_FLOOR: f64 = 1e-12;

/// Relative tolerance with an absolute floor for values near zero.
pub fn close(a: f64, b: f64) -> bool {
    if a == b {
        return true;
    }
    let diff = (a - b).abs();
    diff <= ABS_FLOOR || diff <= REL_TOL * a.abs().max(b.abs())
}

fn label_eq(a: &str, b: &str) -> bool {
    if a == b {
        return true;
    }
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => close(x, y),
        _ => false,
    }
}

fn number_eq(actual: f64, expected: &RVal) -> Result<(), String> {
    match expected {
        RVal::I(v) if actual == *v as f64 => Ok(()),
        RVal::F(v) if close(actual, *v) => Ok(()),
        other => Err(format!("got {actual}, expected {other:?}")),
    }
}

fn cell_eq(actual: &serde_json::Value, expected: &RVal) -> Result<(), String> {
    use serde_json::Value as J;
    match (actual, expected) {
        (J::Null, RVal::Null) => Ok(()),
        (J::String(a), RVal::S(b)) if a == b => Ok(()),
        (J::Number(n), RVal::I(v)) if n.as_i64() == Some(*v) => Ok(()),
        (J::Number(n), RVal::F(v)) if n.as_i64().is_none() && n.as_f64().is_some_and(|x| close(x, *v)) => Ok(()),
        _ => Err(format!("got {actual}, expected {expected:?}")),
    }
}

/// Checks an executor result against the reference. Errors must agree on
/// code; integers must match exactly, reals within tolerance.
pub fn compare(
    actual: &Result<ResultPayload, ErrorTrace>,
    expected: &Result<RefResult, ErrorCode>,
) -> Result<(), String> {
    match (actual, expected) {
        (Err(a), Err(b)) if a.code == *b => Ok(()),
        (Err(a), Err(b)) => Err(format!("error {:?}, expected {b:?}", a.code)),
        (Err(a), Ok(_)) => Err(format!("error {:?} ({}), expected a result", a.code, a.message)),
        (Ok(_), Err(b)) => Err(format!("result, expected error {b:?}")),
        (
            Ok(ResultPayload::Chart { labels, datasets }),
            Ok(RefResult::Chart { labels: want, series }),
        ) => {
            if labels.len() != want.len() {
                return Err(format!("{} labels, expected {}", labels.len(), want.len()));
            }
            for (i, (a, b)) in labels.iter().zip(want).enumerate() {
                if !label_eq(a, b) {
                    return Err(format!("label {i}: {a:?} vs {b:?}"));
                }
            }
            if datasets.len() != series.len() {
                return Err("series count differs".into());
            }
            for (d, (name, values)) in datasets.iter().zip(series) {
                if d.label != *name || d.data.len() != values.len() {
                    return Err(format!("series '{}' shape differs", d.label));
                }
                for (i, (x, v)) in d.data.iter().zip(values).enumerate() {
                    number_eq(*x, v).map_err(|e| format!("series '{name}' row {i}: {e}"))?;
                }
            }
            Ok(())
        }
        (
            Ok(ResultPayload::Table { columns, rows }),
            Ok(RefResult::Table { columns: want_cols, rows: want_rows }),
        ) => {
            if columns != want_cols {
                return Err(format!("columns {columns:?}, expected {want_cols:?}"));
            }
            if rows.len() != want_rows.len() {
                return Err(format!("{} rows, expected {}", rows.len(), want_rows.len()));
            }
            for (i, (r, w)) in rows.iter().zip(want_rows).enumerate() {
                if r.len() != w.len() {
                    return Err(format!("row {i} width differs"));
                }
                for (j, (a, b)) in r.iter().zip(w).enumerate() {
                    cell_eq(a, b).map_err(|e| format!("row {i} column '{}': {e}", columns[j]))?;
                }
            }
            Ok(())
        }
        (Ok(_), Ok(_)) => Err("output shape differs".into()),
    }
}
