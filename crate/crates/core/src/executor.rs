//! Deterministic evaluation of validated programs over a [`Dataset`].
//!
//! Value semantics:
//! - numerical input columns read as numbers; cells that do not parse (null
//!   tokens included) become null
//! - other input columns read as raw text; profiler null tokens become null
//! - aggregations drop nulls; `count` counts non-null values
//! - integer arithmetic stays exact until it overflows, then falls back to f64
//! - comparisons involving null are false; sorts put nulls last

use std::cmp::Ordering;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::dataset::{parse_number, Cell, Dataset, DatasetError, Number};
use crate::dsl::{
    AggFn, Aggregation, ArithOp, CmpOp, Direction, Expr, Literal, NumberLiteral, OutputSpec,
    Predicate, Step, TransformProgram,
};
use crate::profiler::{ProfilerConfig, SemanticType};
use crate::trace::{ErrorCode, ErrorTrace};

pub use crate::trace::render_error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesData {
    pub label: String,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ResultPayload {
    Chart {
        labels: Vec<String>,
        datasets: Vec<SeriesData>,
    },
    Table {
        columns: Vec<String>,
        rows: Vec<Vec<serde_json::Value>>,
    },
}

impl ResultPayload {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("payload serializes")
    }

    pub fn row_count(&self) -> usize {
        match self {
            ResultPayload::Chart { labels, .. } => labels.len(),
            ResultPayload::Table { rows, .. } => rows.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Null,
    Int(i64),
    Real(f64),
    Text(String),
}

impl Value {
    fn from_number(n: Number) -> Self {
        match n {
            Number::Integer(v) => Value::Int(v),
            Number::Real(v) => Value::Real(v),
        }
    }

    fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(v) => Some(*v as f64),
            Value::Real(v) => Some(*v),
            _ => None,
        }
    }

    pub fn render(&self) -> String {
        match self {
            Value::Null => String::new(),
            Value::Int(v) => v.to_string(),
            Value::Real(v) => v.to_string(),
            Value::Text(s) => s.clone(),
        }
    }

    fn is_zero(&self) -> bool {
        match self {
            Value::Int(v) => *v == 0,
            Value::Real(v) => *v == 0.0,
            _ => false,
        }
    }
}

fn numeric_cell(cell: &Cell) -> Value {
    match cell {
        Cell::Integer(v) => Value::Int(*v),
        Cell::Real(v) if v.is_finite() => Value::Real(*v),
        Cell::Text(s) => parse_number(s).map(Value::from_number).unwrap_or(Value::Null),
        _ => Value::Null,
    }
}

fn text_cell(cell: &Cell, nulls: &ProfilerConfig) -> Value {
    match cell {
        c if nulls.is_null(c) => Value::Null,
        Cell::Text(s) => Value::Text(s.clone()),
        other => Value::Text(other.render()),
    }
}

/// Pairwise (cascade) summation.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 8;
    if values.len() <= BLOCK {
        values.iter().sum()
    } else {
        let mid = values.len() / 2;
        pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
    }
}

struct Frame {
    names: Vec<String>,
    columns: Vec<Vec<Value>>,
    rows: usize,
}

impl Frame {
    fn load(program: &TransformProgram, dataset: &Dataset) -> Self {
        // null tokens follow the profiler defaults so nulls here match the schema context
        let nulls = ProfilerConfig::default();
        let mut names = Vec::with_capacity(dataset.column_count());
        let mut columns = Vec::with_capacity(dataset.column_count());
        for col in dataset.columns() {
            let numeric = program.input_kind(col.name()) == Some(SemanticType::Numerical);
            let cells = col.cells().iter();
            names.push(col.name().to_string());
            columns.push(if numeric {
                cells.map(numeric_cell).collect()
            } else {
                cells.map(|c| text_cell(c, &nulls)).collect()
            });
        }
        Self {
            names,
            columns,
            rows: dataset.row_count(),
        }
    }

    fn index(&self, name: &str, step: Option<usize>) -> Result<usize, ErrorTrace> {
        self.names.iter().position(|n| n == name).ok_or_else(|| {
            let mut t = ErrorTrace::new(ErrorCode::UnknownColumn, format!("unknown column '{name}'"))
                .with_symbol(name)
                .with_suggestions(crate::suggest::nearest_names(
                    name,
                    self.names.iter().map(String::as_str),
                ));
            t.step_index = step;
            t
        })
    }

    fn keep_rows(&mut self, keep: &[usize]) {
        for col in &mut self.columns {
            *col = keep.iter().map(|&i| col[i].clone()).collect();
        }
        self.rows = keep.len();
    }
}

fn compare_literal(value: &Value, op: CmpOp, literal: &Literal) -> bool {
    let ord = match (value, literal) {
        (Value::Null, _) => return false,
        (Value::Int(a), Literal::Integer(b)) => Some(a.cmp(b)),
        (Value::Int(_) | Value::Real(_), Literal::Integer(_) | Literal::Real(_)) => {
            let b = match literal {
                Literal::Integer(v) => *v as f64,
                Literal::Real(v) => *v,
                Literal::Text(_) => unreachable!(),
            };
            value.as_f64().and_then(|a| a.partial_cmp(&b))
        }
        (Value::Text(_), Literal::Integer(_) | Literal::Real(_)) => return false,
        (v, Literal::Text(s)) => Some(v.render().as_str().cmp(s.as_str())),
    };
    let Some(ord) = ord else { return false };
    match op {
        CmpOp::Eq => ord == Ordering::Equal,
        CmpOp::Ne => ord != Ordering::Equal,
        CmpOp::Lt => ord == Ordering::Less,
        CmpOp::Le => ord != Ordering::Greater,
        CmpOp::Gt => ord == Ordering::Greater,
        CmpOp::Ge => ord != Ordering::Less,
    }
}

fn eval_predicate(p: &Predicate, frame: &Frame, row: usize, step: usize) -> Result<bool, ErrorTrace> {
    Ok(match p {
        Predicate::And { and } => {
            for q in and {
                if !eval_predicate(q, frame, row, step)? {
                    return Ok(false);
                }
            }
            true
        }
        Predicate::Or { or } => {
            for q in or {
                if eval_predicate(q, frame, row, step)? {
                    return Ok(true);
                }
            }
            false
        }
        Predicate::Not { not } => !eval_predicate(not, frame, row, step)?,
        Predicate::Compare { column, cmp, value } => {
            let c = frame.index(column, Some(step))?;
            compare_literal(&frame.columns[c][row], *cmp, value)
        }
    })
}

fn arith(op: ArithOp, a: &Value, b: &Value, step: usize) -> Result<Value, ErrorTrace> {
    if matches!(a, Value::Null) || matches!(b, Value::Null) {
        return Ok(Value::Null);
    }
    if op == ArithOp::Div && b.is_zero() {
        return Err(ErrorTrace::new(ErrorCode::DivisionByZero, "division by zero in derive expression").at_step(step));
    }
    if let (Value::Int(x), Value::Int(y)) = (a, b) {
        let exact = match op {
            ArithOp::Add => x.checked_add(*y),
            ArithOp::Sub => x.checked_sub(*y),
            ArithOp::Mul => x.checked_mul(*y),
            ArithOp::Div => None,
        };
        if let Some(v) = exact {
            return Ok(Value::Int(v));
        }
    }
    let (Some(x), Some(y)) = (a.as_f64(), b.as_f64()) else {
        return Ok(Value::Null);
    };
    Ok(Value::Real(match op {
        ArithOp::Add => x + y,
        ArithOp::Sub => x - y,
        ArithOp::Mul => x * y,
        ArithOp::Div => x / y,
    }))
}

fn eval_expr(e: &Expr, frame: &Frame, row: usize, step: usize) -> Result<Value, ErrorTrace> {
    match e {
        Expr::Column { col } => {
            let c = frame.index(col, Some(step))?;
            Ok(frame.columns[c][row].clone())
        }
        Expr::Literal { lit } => Ok(match lit {
            NumberLiteral::Integer(v) => Value::Int(*v),
            NumberLiteral::Real(v) => Value::Real(*v),
        }),
        _ => {
            let (op, l, r) = e.as_binary().expect("binary node");
            let a = eval_expr(l, frame, row, step)?;
            let b = eval_expr(r, frame, row, step)?;
            arith(op, &a, &b, step)
        }
    }
}

fn aggregate(agg: &Aggregation, values: Vec<&Value>, step: usize) -> Result<Value, ErrorTrace> {
    let present: Vec<&Value> = values.into_iter().filter(|v| !matches!(v, Value::Null)).collect();
    if agg.agg == AggFn::Count {
        return Ok(Value::Int(present.len() as i64));
    }
    let numbers: Vec<&Value> = present
        .into_iter()
        .filter(|v| matches!(v, Value::Int(_) | Value::Real(_)))
        .collect();
    let all_int = numbers.iter().all(|v| matches!(v, Value::Int(_)));
    let empty = || {
        ErrorTrace::new(
            ErrorCode::EmptyAggregate,
            format!("{} of '{}' over a group with no values", agg.agg.as_str(), agg.column),
        )
        .at_step(step)
        .with_symbol(agg.alias.clone())
    };
    let int_sum = || -> Option<i64> {
        numbers.iter().try_fold(0i64, |acc, v| match v {
            Value::Int(x) => acc.checked_add(*x),
            _ => None,
        })
    };
    let float_sum = || {
        let xs: Vec<f64> = numbers.iter().filter_map(|v| v.as_f64()).collect();
        pairwise_sum(&xs)
    };
    Ok(match agg.agg {
        AggFn::Count => unreachable!(),
        AggFn::Sum => match (all_int, all_int.then(int_sum).flatten()) {
            (true, Some(s)) => Value::Int(s),
            _ => Value::Real(float_sum()),
        },
        AggFn::Mean => {
            if numbers.is_empty() {
                return Err(empty());
            }
            let total = match all_int.then(int_sum).flatten() {
                Some(s) => s as f64,
                None => float_sum(),
            };
            Value::Real(total / numbers.len() as f64)
        }
        AggFn::Min | AggFn::Max => {
            if numbers.is_empty() {
                return Err(empty());
            }
            let want = if agg.agg == AggFn::Min { Ordering::Less } else { Ordering::Greater };
            if all_int {
                let ints = numbers.iter().map(|v| match v {
                    Value::Int(x) => *x,
                    _ => unreachable!(),
                });
                let best = ints.reduce(|a, b| if b.cmp(&a) == want { b } else { a }).expect("nonempty");
                Value::Int(best)
            } else {
                let best = numbers
                    .iter()
                    .filter_map(|v| v.as_f64())
                    .reduce(|a, b| if b.partial_cmp(&a) == Some(want) { b } else { a })
                    .expect("nonempty");
                Value::Real(best)
            }
        }
    })
}

/// Total order used by sort: numbers before text, nulls last.
fn compare_values(a: &Value, b: &Value) -> Ordering {
    match (a, b) {
        (Value::Null, Value::Null) => Ordering::Equal,
        (Value::Null, _) => Ordering::Greater,
        (_, Value::Null) => Ordering::Less,
        (Value::Int(x), Value::Int(y)) => x.cmp(y),
        (Value::Text(x), Value::Text(y)) => x.cmp(y),
        (Value::Text(_), _) => Ordering::Greater,
        (_, Value::Text(_)) => Ordering::Less,
        _ => {
            let (x, y) = (a.as_f64().unwrap_or(0.0), b.as_f64().unwrap_or(0.0));
            x.partial_cmp(&y).unwrap_or(Ordering::Equal)
        }
    }
}

fn apply_step(frame: &mut Frame, step: &Step, index: usize) -> Result<(), ErrorTrace> {
    let at = Some(index);
    match step {
        Step::Select { columns } => {
            let idx: Vec<usize> = columns
                .iter()
                .map(|c| frame.index(c, at))
                .collect::<Result<_, _>>()?;
            frame.columns = idx.iter().map(|&i| frame.columns[i].clone()).collect();
            frame.names = columns.clone();
        }
        Step::Filter { predicate } => {
            let mut keep = Vec::new();
            for row in 0..frame.rows {
                if eval_predicate(predicate, frame, row, index)? {
                    keep.push(row);
                }
            }
            frame.keep_rows(&keep);
        }
        Step::Derive { name, expr } => {
            let values = (0..frame.rows)
                .map(|row| eval_expr(expr, frame, row, index))
                .collect::<Result<Vec<_>, _>>()?;
            frame.names.push(name.clone());
            frame.columns.push(values);
        }
        Step::GroupBy { keys, aggregations } => {
            let key_idx: Vec<usize> = keys
                .iter()
                .map(|k| frame.index(k, at))
                .collect::<Result<_, _>>()?;
            let src_idx: Vec<usize> = aggregations
                .iter()
                .map(|a| frame.index(&a.column, at))
                .collect::<Result<_, _>>()?;
            let mut groups: IndexMap<Vec<Option<String>>, Vec<usize>> = IndexMap::new();
            for row in 0..frame.rows {
                let key = key_idx
                    .iter()
                    .map(|&c| match &frame.columns[c][row] {
                        Value::Null => None,
                        v => Some(v.render()),
                    })
                    .collect();
                groups.entry(key).or_default().push(row);
            }
            let mut out: Vec<Vec<Value>> = vec![Vec::with_capacity(groups.len()); keys.len() + aggregations.len()];
            for rows in groups.values() {
                for (slot, &c) in key_idx.iter().enumerate() {
                    out[slot].push(frame.columns[c][rows[0]].clone());
                }
                for (a, (agg, &c)) in aggregations.iter().zip(&src_idx).enumerate() {
                    let values = rows.iter().map(|&r| &frame.columns[c][r]).collect();
                    out[keys.len() + a].push(aggregate(agg, values, index)?);
                }
            }
            frame.rows = groups.len();
            frame.names = keys
                .iter()
                .cloned()
                .chain(aggregations.iter().map(|a| a.alias.clone()))
                .collect();
            frame.columns = out;
        }
        Step::Sort {
            key,
            direction,
            tiebreak,
        } => {
            let k = frame.index(key, at)?;
            let t = tiebreak.as_ref().map(|t| frame.index(t, at)).transpose()?;
            let mut order: Vec<usize> = (0..frame.rows).collect();
            let col = &frame.columns[k];
            order.sort_by(|&a, &b| {
                let (va, vb) = (&col[a], &col[b]);
                let primary = match (va, vb) {
                    (Value::Null, _) | (_, Value::Null) => compare_values(va, vb),
                    _ if *direction == Direction::Desc => compare_values(vb, va),
                    _ => compare_values(va, vb),
                };
                primary.then_with(|| match t {
                    Some(t) => compare_values(&frame.columns[t][a], &frame.columns[t][b]),
                    None => Ordering::Equal,
                })
            });
            frame.keep_rows(&order);
        }
        Step::Limit { count } => {
            let n = (*count as usize).min(frame.rows);
            let keep: Vec<usize> = (0..n).collect();
            frame.keep_rows(&keep);
        }
    }
    Ok(())
}

fn non_numeric(column: &str, why: &str) -> ErrorTrace {
    ErrorTrace::new(
        ErrorCode::NonNumericOutput,
        format!("output column '{column}' {why}"),
    )
    .with_symbol(column)
}

fn shape_mismatch(trace: ErrorTrace) -> ErrorTrace {
    ErrorTrace {
        code: ErrorCode::OutputShapeMismatch,
        message: format!("output references a column missing after the pipeline: {}", trace.offending_symbol.clone().unwrap_or_default()),
        ..trace
    }
}

fn json_value(v: &Value, column: &str) -> Result<serde_json::Value, ErrorTrace> {
    Ok(match v {
        Value::Null => serde_json::Value::Null,
        Value::Int(x) => serde_json::Value::from(*x),
        Value::Real(x) => serde_json::Number::from_f64(*x)
            .map(serde_json::Value::Number)
            .ok_or_else(|| non_numeric(column, "holds a non-finite value"))?,
        Value::Text(s) => serde_json::Value::String(s.clone()),
    })
}

/// Evaluates `program` against `dataset`.
pub fn execute(program: &TransformProgram, dataset: &Dataset) -> Result<ResultPayload, ErrorTrace> {
    let mut frame = Frame::load(program, dataset);
    for (i, step) in program.pipeline().iter().enumerate() {
        apply_step(&mut frame, step, i + 1)?;
    }
    if frame.rows == 0 {
        return Err(ErrorTrace::new(ErrorCode::EmptyResult, "the pipeline produced zero rows"));
    }
    let col = |name: &str| frame.index(name, None).map_err(shape_mismatch);
    match program.output() {
        OutputSpec::ChartSeries {
            label_column,
            series,
        } => {
            let l = col(label_column)?;
            let labels = frame.columns[l].iter().map(Value::render).collect();
            let mut datasets = Vec::with_capacity(series.len());
            for s in series {
                let c = col(&s.column)?;
                let data = frame.columns[c]
                    .iter()
                    .map(|v| match v.as_f64() {
                        Some(x) if x.is_finite() => Ok(x),
                        Some(_) => Err(non_numeric(&s.column, "holds a non-finite value")),
                        None => Err(non_numeric(&s.column, "holds a null or text value")),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                datasets.push(SeriesData {
                    label: s.label.clone(),
                    data,
                });
            }
            Ok(ResultPayload::Chart { labels, datasets })
        }
        OutputSpec::Table { columns } => {
            let names: Vec<String> = columns.clone().unwrap_or_else(|| frame.names.clone());
            let idx: Vec<usize> = names.iter().map(|n| col(n)).collect::<Result<_, _>>()?;
            let rows = (0..frame.rows)
                .map(|r| {
                    idx.iter()
                        .zip(&names)
                        .map(|(&c, n)| json_value(&frame.columns[c][r], n))
                        .collect::<Result<Vec<_>, _>>()
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(ResultPayload::Table {
                columns: names,
                rows,
            })
        }
        OutputSpec::Correlation { column_a, column_b } => {
            let (a, b) = (col(column_a)?, col(column_b)?);
            let pairs: Vec<(f64, f64)> = frame.columns[a]
                .iter()
                .zip(&frame.columns[b])
                .filter_map(|(x, y)| Some((x.as_f64()?, y.as_f64()?)))
                .collect();
            let r = pearson_pairs(&pairs, column_a, column_b)?;
            Ok(ResultPayload::Table {
                columns: vec!["column_a".into(), "column_b".into(), "pearson_r".into()],
                rows: vec![vec![
                    column_a.clone().into(),
                    column_b.clone().into(),
                    json_value(&Value::Real(r), "pearson_r")?,
                ]],
            })
        }
    }
}

/// Pearson r over complete pairs, clamped to [-1, 1].
pub fn pearson_pairs(pairs: &[(f64, f64)], name_a: &str, name_b: &str) -> Result<f64, ErrorTrace> {
    if pairs.len() < 2 {
        return Err(ErrorTrace::new(
            ErrorCode::InsufficientData,
            format!("correlation of '{name_a}' and '{name_b}' needs at least 2 complete pairs, found {}", pairs.len()),
        ));
    }
    let n = pairs.len() as f64;
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    // exact test: a computed mean of equal values need not equal the value
    for (v, name) in [(&xs, name_a), (&ys, name_b)] {
        if v.iter().all(|x| *x == v[0]) {
            return Err(ErrorTrace::new(ErrorCode::ZeroVariance, format!("column '{name}' is constant"))
                .with_symbol(name));
        }
    }
    let mx = pairwise_sum(&xs) / n;
    let my = pairwise_sum(&ys) / n;
    let dx: Vec<f64> = xs.iter().map(|x| x - mx).collect();
    let dy: Vec<f64> = ys.iter().map(|y| y - my).collect();
    let sxy = pairwise_sum(&dx.iter().zip(&dy).map(|(a, b)| a * b).collect::<Vec<_>>());
    let sxx = pairwise_sum(&dx.iter().map(|a| a * a).collect::<Vec<_>>());
    let syy = pairwise_sum(&dy.iter().map(|b| b * b).collect::<Vec<_>>());
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson r between two numeric dataset columns. Rows where either side is
/// null are dropped; any other non-numeric cell is a type error.
pub fn pearson(dataset: &Dataset, col_a: &str, col_b: &str) -> Result<f64, ErrorTrace> {
    let nulls = ProfilerConfig::default();
    let read = |name: &str| -> Result<Vec<Option<f64>>, ErrorTrace> {
        let column = dataset.get_column(name).map_err(|e| match e {
            DatasetError::UnknownColumn(u) => ErrorTrace::new(ErrorCode::UnknownColumn, u.to_string())
                .with_symbol(u.name)
                .with_suggestions(u.suggestions),
            other => ErrorTrace::new(ErrorCode::UnknownColumn, other.to_string()),
        })?;
        column
            .cells()
            .iter()
            .map(|cell| {
                if nulls.is_null(cell) {
                    return Ok(None);
                }
                match numeric_cell(cell) {
                    Value::Null => Err(ErrorTrace::new(
                        ErrorCode::TypeMismatch,
                        format!("column '{name}' is not numerical"),
                    )
                    .with_symbol(name)),
                    v => Ok(v.as_f64()),
                }
            })
            .collect()
    };
    let a = read(col_a)?;
    let b = read(col_b)?;
    let pairs: Vec<(f64, f64)> = a
        .into_iter()
        .zip(b)
        .filter_map(|(x, y)| Some((x?, y?)))
        .collect();
    pearson_pairs(&pairs, col_a, col_b)
}
