//! Row-at-a-time reference evaluator.
//!
//! Shares no code with the production executor. Rows are vectors of values,
//! sums are plain left-to-right folds, and sorting is an insertion sort.

use std::cmp::Ordering;

use strot::dataset::{Cell, Dataset};
use strot::dsl::{
    AggFn, ArithOp, CmpOp, Direction, Expr, Literal, NumberLiteral, OutputSpec, Predicate, Step,
    TransformProgram,
};
use strot::profiler::SemanticType;
use strot::trace::ErrorCode;

#[derive(Debug, Clone, PartialEq)]
pub enum RVal {
    Null,
    I(i64),
    F(f64),
    S(String),
}

impl RVal {
    fn num(&self) -> Option<f64> {
        match self {
            RVal::I(v) => Some(*v as f64),
            RVal::F(v) => Some(*v),
            _ => None,
        }
    }

    fn text(&self) -> String {
        match self {
            RVal::Null => String::new(),
            RVal::I(v) => format!("{v}"),
            RVal::F(v) => format!("{v}"),
            RVal::S(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RefResult {
    Chart {
        labels: Vec<String>,
        series: Vec<(String, Vec<RVal>)>,
    },
    Table {
        columns: Vec<String>,
        rows: Vec<Vec<RVal>>,
    },
}

fn is_null_token(s: &str) -> bool {
    let t = s.trim().to_ascii_lowercase();
    t.is_empty() || t == "na" || t == "null"
}

fn read_number(s: &str) -> RVal {
    let t = s.trim();
    if let Ok(v) = t.parse::<i64>() {
        return RVal::I(v);
    }
    match t.parse::<f64>() {
        Ok(v) if v.is_finite() && t.chars().any(|c| c.is_ascii_digit()) => RVal::F(v),
        _ => RVal::Null,
    }
}

fn read_cell(cell: &Cell, numeric: bool) -> RVal {
    match (cell, numeric) {
        (Cell::Null, _) => RVal::Null,
        (Cell::Integer(v), true) => RVal::I(*v),
        (Cell::Real(v), true) if v.is_finite() => RVal::F(*v),
        (Cell::Text(s), true) => read_number(s),
        (_, true) => RVal::Null,
        (Cell::Text(s), false) if is_null_token(s) => RVal::Null,
        (other, false) => RVal::S(other.render()),
    }
}

struct Rows {
    names: Vec<String>,
    rows: Vec<Vec<RVal>>,
}

impl Rows {
    fn at(&self, name: &str) -> usize {
        self.names
            .iter()
            .position(|n| n == name)
            .unwrap_or_else(|| panic!("validated program names missing column {name}"))
    }
}

fn holds(value: &RVal, op: CmpOp, lit: &Literal) -> bool {
    let ord = match (value, lit) {
        (RVal::Null, _) => None,
        (RVal::I(a), Literal::Integer(b)) => Some(a.cmp(b)),
        (RVal::F(_), Literal::Integer(b)) => value.num().unwrap().partial_cmp(&(*b as f64)),
        (RVal::I(_) | RVal::F(_), Literal::Real(b)) => value.num().unwrap().partial_cmp(b),
        (RVal::S(_), Literal::Integer(_) | Literal::Real(_)) => None,
        (v, Literal::Text(s)) => Some(v.text().cmp(s)),
    };
    match ord {
        None => false,
        Some(o) => match op {
            CmpOp::Eq => o.is_eq(),
            CmpOp::Ne => o.is_ne(),
            CmpOp::Lt => o.is_lt(),
            CmpOp::Le => o.is_le(),
            CmpOp::Gt => o.is_gt(),
            CmpOp::Ge => o.is_ge(),
        },
    }
}

fn test(p: &Predicate, names: &[String], row: &[RVal]) -> bool {
    match p {
        Predicate::And { and } => and.iter().all(|q| test(q, names, row)),
        Predicate::Or { or } => or.iter().any(|q| test(q, names, row)),
        Predicate::Not { not } => !test(not, names, row),
        Predicate::Compare { column, cmp, value } => {
            let i = names.iter().position(|n| n == column).expect("column");
            holds(&row[i], *cmp, value)
        }
    }
}

fn eval(e: &Expr, names: &[String], row: &[RVal]) -> Result<RVal, ErrorCode> {
    if let Expr::Column { col } = e {
        let i = names.iter().position(|n| n == col).expect("column");
        return Ok(row[i].clone());
    }
    if let Expr::Literal { lit } = e {
        return Ok(match lit {
            NumberLiteral::Integer(v) => RVal::I(*v),
            NumberLiteral::Real(v) => RVal::F(*v),
        });
    }
    let (op, l, r) = e.as_binary().unwrap();
    let a = eval(l, names, row)?;
    let b = eval(r, names, row)?;
    if a == RVal::Null || b == RVal::Null {
        return Ok(RVal::Null);
    }
    if op == ArithOp::Div && b.num() == Some(0.0) {
        return Err(ErrorCode::DivisionByZero);
    }
    if let (RVal::I(x), RVal::I(y)) = (&a, &b) {
        let exact = match op {
            ArithOp::Add => x.checked_add(*y),
            ArithOp::Sub => x.checked_sub(*y),
            ArithOp::Mul => x.checked_mul(*y),
            ArithOp::Div => None,
        };
        if let Some(v) = exact {
            return Ok(RVal::I(v));
        }
    }
    let (x, y) = (a.num().unwrap(), b.num().unwrap());
    Ok(RVal::F(match op {
        ArithOp::Add => x + y,
        ArithOp::Sub => x - y,
        ArithOp::Mul => x * y,
        ArithOp::Div => x / y,
    }))
}

fn reduce(agg: AggFn, values: &[RVal]) -> Result<RVal, ErrorCode> {
    let present: Vec<&RVal> = values.iter().filter(|v| **v != RVal::Null).collect();
    if agg == AggFn::Count {
        return Ok(RVal::I(present.len() as i64));
    }
    let nums: Vec<&RVal> = present.into_iter().filter(|v| v.num().is_some()).collect();
    let ints: Option<Vec<i64>> = nums
        .iter()
        .map(|v| match v {
            RVal::I(x) => Some(*x),
            _ => None,
        })
        .collect();
    let mut int_total = None;
    if let Some(xs) = &ints {
        let mut acc: Option<i64> = Some(0);
        for x in xs {
            acc = acc.and_then(|a| a.checked_add(*x));
        }
        int_total = acc;
    }
    let mut float_total = 0.0;
    for v in &nums {
        float_total += v.num().unwrap();
    }
    if agg == AggFn::Sum {
        return Ok(match int_total {
            Some(s) => RVal::I(s),
            None => RVal::F(float_total),
        });
    }
    if nums.is_empty() {
        return Err(ErrorCode::EmptyAggregate);
    }
    if agg == AggFn::Mean {
        let total = int_total.map(|s| s as f64).unwrap_or(float_total);
        return Ok(RVal::F(total / nums.len() as f64));
    }
    let better = |cand: Ordering| if agg == AggFn::Min { cand.is_lt() } else { cand.is_gt() };
    match ints {
        Some(xs) => {
            let mut best = xs[0];
            for x in xs {
                if better(x.cmp(&best)) {
                    best = x;
                }
            }
            Ok(RVal::I(best))
        }
        None => {
            let mut best = nums[0].num().unwrap();
            for v in &nums {
                let x = v.num().unwrap();
                if x.partial_cmp(&best).is_some_and(better) {
                    best = x;
                }
            }
            Ok(RVal::F(best))
        }
    }
}

fn order(a: &RVal, b: &RVal) -> Ordering {
    match (a, b) {
        (RVal::Null, RVal::Null) => Ordering::Equal,
        (RVal::Null, _) => Ordering::Greater,
        (_, RVal::Null) => Ordering::Less,
        (RVal::S(x), RVal::S(y)) => x.cmp(y),
        (RVal::S(_), _) => Ordering::Greater,
        (_, RVal::S(_)) => Ordering::Less,
        (RVal::I(x), RVal::I(y)) => x.cmp(y),
        _ => a.num().unwrap().partial_cmp(&b.num().unwrap()).unwrap_or(Ordering::Equal),
    }
}

fn run_step(t: &mut Rows, step: &Step) -> Result<(), ErrorCode> {
    match step {
        Step::Select { columns } => {
            let idx: Vec<usize> = columns.iter().map(|c| t.at(c)).collect();
            for row in &mut t.rows {
                *row = idx.iter().map(|&i| row[i].clone()).collect();
            }
            t.names = columns.clone();
        }
        Step::Filter { predicate } => {
            let names = t.names.clone();
            t.rows.retain(|row| test(predicate, &names, row));
        }
        Step::Derive { name, expr } => {
            let mut added = Vec::new();
            for row in &t.rows {
                added.push(eval(expr, &t.names, row)?);
            }
            for (row, v) in t.rows.iter_mut().zip(added) {
                row.push(v);
            }
            t.names.push(name.clone());
        }
        Step::GroupBy { keys, aggregations } => {
            let kidx: Vec<usize> = keys.iter().map(|k| t.at(k)).collect();
            let mut groups: Vec<(Vec<Option<String>>, Vec<usize>)> = Vec::new();
            for (r, row) in t.rows.iter().enumerate() {
                let key: Vec<Option<String>> = kidx
                    .iter()
                    .map(|&i| (row[i] != RVal::Null).then(|| row[i].text()))
                    .collect();
                match groups.iter_mut().find(|(k, _)| *k == key) {
                    Some((_, members)) => members.push(r),
                    None => groups.push((key, vec![r])),
                }
            }
            let mut rows = Vec::new();
            for (_, members) in &groups {
                let mut out: Vec<RVal> = kidx.iter().map(|&i| t.rows[members[0]][i].clone()).collect();
                for a in aggregations {
                    let c = t.at(&a.column);
                    let vals: Vec<RVal> = members.iter().map(|&r| t.rows[r][c].clone()).collect();
                    out.push(reduce(a.agg, &vals)?);
                }
                rows.push(out);
            }
            t.rows = rows;
            t.names = keys
                .iter()
                .cloned()
                .chain(aggregations.iter().map(|a| a.alias.clone()))
                .collect();
        }
        Step::Sort {
            key,
            direction,
            tiebreak,
        } => {
            let k = t.at(key);
            let tb = tiebreak.as_ref().map(|c| t.at(c));
            let before = |a: &[RVal], b: &[RVal]| -> bool {
                let primary = if a[k] == RVal::Null || b[k] == RVal::Null || *direction == Direction::Asc {
                    order(&a[k], &b[k])
                } else {
                    order(&b[k], &a[k])
                };
                let full = match tb {
                    Some(j) => primary.then(order(&a[j], &b[j])),
                    None => primary,
                };
                full.is_lt()
            };
            // insertion sort: stable by construction
            let mut sorted: Vec<Vec<RVal>> = Vec::with_capacity(t.rows.len());
            for row in t.rows.drain(..) {
                let mut pos = sorted.len();
                while pos > 0 && before(&row, &sorted[pos - 1]) {
                    pos -= 1;
                }
                sorted.insert(pos, row);
            }
            t.rows = sorted;
        }
        Step::Limit { count } => t.rows.truncate(*count as usize),
    }
    Ok(())
}

/// Pearson r by the textbook two-pass formula with plain sums.
pub fn naive_pearson(pairs: &[(f64, f64)]) -> Result<f64, ErrorCode> {
    if pairs.len() < 2 {
        return Err(ErrorCode::InsufficientData);
    }
    let (x0, y0) = pairs[0];
    if pairs.iter().all(|p| p.0 == x0) || pairs.iter().all(|p| p.1 == y0) {
        return Err(ErrorCode::ZeroVariance);
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Evaluates a validated program. Errors are reported by code only.
pub fn evaluate(program: &TransformProgram, dataset: &Dataset) -> Result<RefResult, ErrorCode> {
    let names: Vec<String> = dataset.column_names().map(String::from).collect();
    let numeric: Vec<bool> = names
        .iter()
        .map(|n| program.input_kind(n) == Some(SemanticType::Numerical))
        .collect();
    let rows = (0..dataset.row_count())
        .map(|r| {
            dataset
                .columns()
                .iter()
                .zip(&numeric)
                .map(|(c, &num)| read_cell(&c.cells()[r], num))
                .collect()
        })
        .collect();
    let mut t = Rows { names, rows };
    for step in program.pipeline() {
        run_step(&mut t, step)?;
    }
    if t.rows.is_empty() {
        return Err(ErrorCode::EmptyResult);
    }
    match program.output() {
        OutputSpec::ChartSeries { label_column, series } => {
            let l = t.at(label_column);
            let labels = t.rows.iter().map(|r| r[l].text()).collect();
            let mut out = Vec::new();
            for s in series {
                let c = t.at(&s.column);
                let mut data = Vec::new();
                for row in &t.rows {
                    match row[c].num() {
                        Some(x) if x.is_finite() => data.push(row[c].clone()),
                        _ => return Err(ErrorCode::NonNumericOutput),
                    }
                }
                out.push((s.label.clone(), data));
            }
            Ok(RefResult::Chart { labels, series: out })
        }
        OutputSpec::Table { columns } => {
            let cols = columns.clone().unwrap_or_else(|| t.names.clone());
            let idx: Vec<usize> = cols.iter().map(|c| t.at(c)).collect();
            let mut rows = Vec::new();
            for row in &t.rows {
                let mut out = Vec::new();
                for &i in &idx {
                    if let RVal::F(x) = row[i] {
                        if !x.is_finite() {
                            return Err(ErrorCode::NonNumericOutput);
                        }
                    }
                    out.push(row[i].clone());
                }
                rows.push(out);
            }
            Ok(RefResult::Table { columns: cols, rows })
        }
        OutputSpec::Correlation { column_a, column_b } => {
            let (a, b) = (t.at(column_a), t.at(column_b));
            let pairs: Vec<(f64, f64)> = t
                .rows
                .iter()
                .filter_map(|r| Some((r[a].num()?, r[b].num()?)))
                .collect();
            let r = naive_pearson(&pairs)?;
            Ok(RefResult::Table {
                columns: vec!["column_a".into(), "column_b".into(), "pearson_r".into()],
                rows: vec![vec![RVal::S(column_a.clone()), RVal::S(column_b.clone()), RVal::F(r)]],
            })
        }
    }
}
