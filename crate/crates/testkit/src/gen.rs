//! Random datasets, columns and programs for property tests.

use rand::seq::SliceRandom;
use rand::Rng;
use strot::dataset::{Column, Dataset};
use strot::dsl::{
    AggFn, Aggregation, ArithOp, CmpOp, Direction, Expr, Literal, NumberLiteral, OutputSpec,
    Predicate, SeriesSpec, Step, TransformProgram,
};
use strot::profiler::{SchemaContext, SemanticType};

const NULL_TOKENS: [&str; 4] = ["", "NA", "null", "  na "];
const JUNK: [&str; 3] = ["n/a", "12abc", "--"];
const WORDS: [&str; 8] = ["north", "South", "east", "West", "Zone 7", "a", "b", "10"];
const NAMES: [&str; 8] = ["a", "b", "deaths", "New cases", "WHO Region", "x 1", "val", "c"];

#[derive(Debug, Clone, Copy)]
enum Kind {
    Int,
    Quarter,
    Category,
}

fn quarter(rng: &mut impl Rng) -> f64 {
    rng.gen_range(-200i64..=400) as f64 / 4.0
}

fn random_cells(rng: &mut impl Rng, kind: Kind, rows: usize) -> Vec<String> {
    let null_p = *[0.0, 0.0, 0.1, 0.3].choose(rng).unwrap();
    let junk_p = if rng.gen_bool(0.2) { 0.03 } else { 0.0 };
    let n = rng.gen_range(1..=5);
    let vocab: Vec<&str> = WORDS.choose_multiple(rng, n).copied().collect();
    (0..rows)
        .map(|_| {
            if rng.gen_bool(null_p) {
                return NULL_TOKENS.choose(rng).unwrap().to_string();
            }
            match kind {
                Kind::Int if rng.gen_bool(junk_p) => JUNK.choose(rng).unwrap().to_string(),
                Kind::Quarter if rng.gen_bool(junk_p) => JUNK.choose(rng).unwrap().to_string(),
                Kind::Int => rng.gen_range(-20i64..=100).to_string(),
                Kind::Quarter => quarter(rng).to_string(),
                Kind::Category => vocab.choose(rng).unwrap().to_string(),
            }
        })
        .collect()
}

/// Up to 6 columns and 50 rows of integer, quarter-step real and categorical
/// text, with null tokens and occasional junk.
pub fn random_dataset(rng: &mut impl Rng) -> Dataset {
    let ncols = rng.gen_range(1..=6);
    let rows = if rng.gen_bool(0.05) { rng.gen_range(0..3) } else { rng.gen_range(1..=50) };
    let mut names: Vec<&str> = NAMES.to_vec();
    names.shuffle(rng);
    let columns = names[..ncols]
        .iter()
        .map(|name| {
            let kind = *[Kind::Int, Kind::Int, Kind::Quarter, Kind::Quarter, Kind::Category]
                .choose(rng)
                .unwrap();
            Column::from_text(*name, &random_cells(rng, kind, rows))
        })
        .collect();
    Dataset::new("random", columns).expect("unique names, equal lengths")
}

/// A single column with mixed content, for profiler properties.
pub fn random_column(rng: &mut impl Rng) -> Column {
    let rows = rng.gen_range(0..=60);
    let cells = match rng.gen_range(0..5) {
        0 => random_cells(rng, Kind::Int, rows),
        1 => random_cells(rng, Kind::Quarter, rows),
        2 => random_cells(rng, Kind::Category, rows),
        3 => {
            let base = rng.gen_range(0i64..20_000);
            (0..rows)
                .map(|_| {
                    let day = chrono_like_date(base + rng.gen_range(0..400));
                    if rng.gen_bool(0.1) { String::new() } else { day }
                })
                .collect()
        }
        _ => (0..rows)
            .map(|_| match rng.gen_range(0..3) {
                0 => rng.gen_range(0..1000).to_string(),
                1 => WORDS.choose(rng).unwrap().to_string(),
                _ => NULL_TOKENS.choose(rng).unwrap().to_string(),
            })
            .collect(),
    };
    Column::from_text("col", &cells)
}

/// `YYYY-MM-DD` for a day count after 1970-01-01, civil calendar.
fn chrono_like_date(days: i64) -> String {
    // Howard Hinnant's days_from_civil inverse
    let z = days + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let y = yoe + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = doy - (153 * mp + 2) / 5 + 1;
    let m = if mp < 10 { mp + 3 } else { mp - 9 };
    let y = if m <= 2 { y + 1 } else { y };
    format!("{y:04}-{m:02}-{d:02}")
}

type Schema = Vec<(String, SemanticType)>;

fn numeric(schema: &Schema) -> Vec<String> {
    schema
        .iter()
        .filter(|(_, t)| *t == SemanticType::Numerical)
        .map(|(n, _)| n.clone())
        .collect()
}

fn any_name(rng: &mut impl Rng, schema: &Schema) -> String {
    schema.choose(rng).unwrap().0.clone()
}

fn number_literal(rng: &mut impl Rng) -> NumberLiteral {
    if rng.gen_bool(0.6) {
        NumberLiteral::Integer(rng.gen_range(-5..=60))
    } else {
        NumberLiteral::Real(quarter(rng))
    }
}

fn predicate(rng: &mut impl Rng, schema: &Schema, ctx: &SchemaContext, depth: u32) -> Predicate {
    if depth > 0 && rng.gen_bool(0.3) {
        let n = rng.gen_range(1..=3);
        let parts: Vec<Predicate> = (0..n).map(|_| predicate(rng, schema, ctx, depth - 1)).collect();
        return match rng.gen_range(0..3) {
            0 => Predicate::And { and: parts },
            1 => Predicate::Or { or: parts },
            _ => Predicate::Not {
                not: Box::new(parts.into_iter().next().unwrap()),
            },
        };
    }
    let (column, kind) = schema.choose(rng).unwrap().clone();
    let cmp = *[CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge]
        .choose(rng)
        .unwrap();
    let value = if kind == SemanticType::Numerical && rng.gen_bool(0.8) {
        match number_literal(rng) {
            NumberLiteral::Integer(v) => Literal::Integer(v),
            NumberLiteral::Real(v) => Literal::Real(v),
        }
    } else {
        let samples = ctx.column(&column).map(|c| c.samples.clone()).unwrap_or_default();
        match samples.choose(rng) {
            Some(s) if rng.gen_bool(0.7) => Literal::Text(s.clone()),
            _ => Literal::Text(WORDS.choose(rng).unwrap().to_string()),
        }
    };
    Predicate::Compare { column, cmp, value }
}

fn expr(rng: &mut impl Rng, cols: &[String], depth: u32) -> Expr {
    if depth == 0 || rng.gen_bool(0.35) {
        return if rng.gen_bool(0.7) {
            Expr::column(cols.choose(rng).unwrap().clone())
        } else {
            Expr::Literal { lit: number_literal(rng) }
        };
    }
    let op = *[ArithOp::Add, ArithOp::Sub, ArithOp::Mul, ArithOp::Div].choose(rng).unwrap();
    Expr::binary(op, expr(rng, cols, depth - 1), expr(rng, cols, depth - 1))
}

/// Builds a random program that type-checks against `ctx`, or `None` when the
/// draw is rejected by validation.
pub fn random_program(rng: &mut impl Rng, ctx: &SchemaContext) -> Option<TransformProgram> {
    let mut schema: Schema = ctx.columns.iter().map(|c| (c.name.clone(), c.semantic_type)).collect();
    let mut steps = Vec::new();

    if rng.gen_bool(0.25) {
        let n = rng.gen_range(1..=schema.len());
        let picked: Schema = schema.choose_multiple(rng, n).cloned().collect();
        steps.push(Step::Select {
            columns: picked.iter().map(|(c, _)| c.clone()).collect(),
        });
        schema = picked;
    }
    for _ in 0..rng.gen_range(0..=2) {
        steps.push(Step::Filter {
            predicate: predicate(rng, &schema, ctx, 2),
        });
    }
    for i in 0..rng.gen_range(0..=2) {
        let nums = numeric(&schema);
        if nums.is_empty() {
            break;
        }
        let name = format!("d{i}");
        steps.push(Step::Derive {
            name: name.clone(),
            expr: expr(rng, &nums, 2),
        });
        schema.push((name, SemanticType::Numerical));
    }
    if rng.gen_bool(0.5) {
        let nkeys = rng.gen_range(0..=2.min(schema.len()));
        let keys: Vec<String> = schema.choose_multiple(rng, nkeys).map(|(n, _)| n.clone()).collect();
        let nums = numeric(&schema);
        let aggregations: Vec<Aggregation> = (0..rng.gen_range(1..=3))
            .map(|i| {
                let agg = *[AggFn::Sum, AggFn::Mean, AggFn::Min, AggFn::Max, AggFn::Count]
                    .choose(rng)
                    .unwrap();
                let (agg, column) = match (agg, nums.choose(rng)) {
                    (AggFn::Count, _) | (_, None) => (AggFn::Count, any_name(rng, &schema)),
                    (a, Some(c)) => (a, c.clone()),
                };
                Aggregation {
                    column,
                    agg,
                    alias: format!("g{i}"),
                }
            })
            .collect();
        let mut next: Schema = keys
            .iter()
            .map(|k| schema.iter().find(|(n, _)| n == k).unwrap().clone())
            .collect();
        next.extend(aggregations.iter().map(|a| (a.alias.clone(), SemanticType::Numerical)));
        steps.push(Step::GroupBy { keys, aggregations });
        schema = next;
    }
    if rng.gen_bool(0.5) {
        steps.push(Step::Sort {
            key: any_name(rng, &schema),
            direction: if rng.gen_bool(0.5) { Direction::Asc } else { Direction::Desc },
            tiebreak: rng.gen_bool(0.4).then(|| any_name(rng, &schema)),
        });
    }
    if rng.gen_bool(0.3) {
        steps.push(Step::Limit {
            count: rng.gen_range(1..=20),
        });
    }

    let nums = numeric(&schema);
    let nseries = rng.gen_range(1..=2);
    let output = match rng.gen_range(0..4) {
        0 | 1 if !nums.is_empty() => OutputSpec::ChartSeries {
            label_column: any_name(rng, &schema),
            series: nums
                .choose_multiple(rng, nseries)
                .map(|c| SeriesSpec {
                    label: c.clone(),
                    column: c.clone(),
                })
                .collect(),
        },
        2 if !nums.is_empty() => OutputSpec::Correlation {
            column_a: nums.choose(rng).unwrap().clone(),
            column_b: nums.choose(rng).unwrap().clone(),
        },
        _ => OutputSpec::Table {
            columns: rng.gen_bool(0.5).then(|| {
                let n = rng.gen_range(1..=schema.len());
                schema.choose_multiple(rng, n).map(|(c, _)| c.clone()).collect()
            }),
        },
    };
    if steps.is_empty() {
        steps.push(Step::Limit {
            count: rng.gen_range(1..=60),
        });
    }
    TransformProgram::new(steps, output, ctx).ok()
}
