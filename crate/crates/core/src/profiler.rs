//! Schema context construction: semantic typing, per-column signatures and
//! representative samples.

use chrono::{NaiveDate, NaiveDateTime};
use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{parse_number, parse_timestamp, Cell, Column, Dataset};

pub const DEFAULT_SAMPLE_COUNT: usize = 5;
pub const WARN_ALL_NULL: &str = "all_null";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SemanticType {
    Numerical,
    Temporal,
    Categorical,
}

impl SemanticType {
    pub fn as_str(self) -> &'static str {
        match self {
            SemanticType::Numerical => "numerical",
            SemanticType::Temporal => "temporal",
            SemanticType::Categorical => "categorical",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkewMode {
    /// m3 / m2^1.5 with biased moments.
    Population,
    /// Adjusted Fisher-Pearson coefficient.
    Sample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingStrategy {
    Uniform,
    Stratified,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfilerConfig {
    pub temporal_parse_rate: f64,
    pub numeric_parse_rate: f64,
    pub high_cardinality_ratio: f64,
    pub min_distinct_numeric: usize,
    /// Matched case-insensitively after trimming.
    pub null_tokens: Vec<String>,
    /// chrono patterns; `rfc3339` is accepted as a keyword.
    pub temporal_formats: Vec<String>,
    pub skew: SkewMode,
}

impl Default for ProfilerConfig {
    fn default() -> Self {
        Self {
            temporal_parse_rate: 0.95,
            numeric_parse_rate: 0.95,
            high_cardinality_ratio: 0.05,
            min_distinct_numeric: 10,
            null_tokens: vec!["".into(), "NA".into(), "null".into()],
            temporal_formats: [
                "rfc3339",
                "%Y-%m-%d",
                "%Y-%m-%dT%H:%M:%S",
                "%Y-%m-%d %H:%M:%S",
                "%Y/%m/%d",
                "%m/%d/%Y",
                "%d-%b-%Y",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
            skew: SkewMode::Population,
        }
    }
}

impl ProfilerConfig {
    pub fn is_null(&self, cell: &Cell) -> bool {
        match cell {
            Cell::Null => true,
            Cell::Text(s) => {
                let t = s.trim();
                self.null_tokens.iter().any(|tok| tok.eq_ignore_ascii_case(t))
            }
            _ => false,
        }
    }

    /// Seconds since epoch if the cell reads as a date or date-time.
    pub fn parse_temporal(&self, cell: &Cell) -> Option<i64> {
        let text = match cell {
            Cell::Timestamp(secs) => return Some(*secs),
            Cell::Text(s) => s.trim(),
            _ => return None,
        };
        self.temporal_formats.iter().find_map(|fmt| {
            if fmt == "rfc3339" {
                return parse_timestamp(text);
            }
            if fmt.contains("%H") {
                NaiveDateTime::parse_from_str(text, fmt)
                    .ok()
                    .map(|dt| dt.and_utc().timestamp())
            } else {
                NaiveDate::parse_from_str(text, fmt)
                    .ok()
                    .and_then(|d| d.and_hms_opt(0, 0, 0))
                    .map(|dt| dt.and_utc().timestamp())
            }
        })
    }

    pub fn parse_numeric(&self, cell: &Cell) -> Option<f64> {
        match cell {
            Cell::Integer(v) => Some(*v as f64),
            Cell::Real(v) if v.is_finite() => Some(*v),
            Cell::Text(s) => parse_number(s).map(|n| n.as_f64()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Bounds {
    Numeric { min: f64, max: f64 },
    Temporal { min: String, max: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSignature {
    pub cardinality: usize,
    pub null_rate: f64,
    pub bounds: Option<Bounds>,
    /// Shannon entropy in bits over non-null values.
    pub entropy: f64,
    pub skew: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnContext {
    pub name: String,
    pub semantic_type: SemanticType,
    pub signature: ColumnSignature,
    pub samples: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaContext {
    pub dataset_name: String,
    pub columns: Vec<ColumnContext>,
    pub k: usize,
}

impl SchemaContext {
    pub fn column(&self, name: &str) -> Option<&ColumnContext> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    /// Canonical JSON document. Key order follows struct field order.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema context serializes")
    }

    pub fn digest(&self) -> String {
        let compact = serde_json::to_vec(self).expect("schema context serializes");
        hex::encode(Sha256::digest(compact))
    }
}

fn non_null<'a>(column: &'a Column, config: &'a ProfilerConfig) -> impl Iterator<Item = &'a Cell> {
    column.cells().iter().filter(|c| !config.is_null(c))
}

fn distinct_count(cells: &[&Cell]) -> usize {
    let mut seen: Vec<String> = cells.iter().map(|c| c.render()).collect();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

/// Temporal, then numerical, then categorical. A column with no non-null cells
/// is categorical; [`compute_signature`] records the warning.
pub fn infer_type(column: &Column, config: &ProfilerConfig) -> SemanticType {
    let present: Vec<&Cell> = non_null(column, config).collect();
    if present.is_empty() {
        return SemanticType::Categorical;
    }
    let total = present.len() as f64;

    let temporal = present
        .iter()
        .filter(|c| config.parse_temporal(c).is_some())
        .count();
    if temporal as f64 / total >= config.temporal_parse_rate {
        return SemanticType::Temporal;
    }

    let numeric = present
        .iter()
        .filter(|c| config.parse_numeric(c).is_some())
        .count();
    if numeric as f64 / total >= config.numeric_parse_rate {
        let distinct = distinct_count(&present) as f64;
        let needed = (config.high_cardinality_ratio * total).max(config.min_distinct_numeric as f64);
        if distinct >= needed {
            return SemanticType::Numerical;
        }
    }
    SemanticType::Categorical
}

fn shannon_entropy<'a>(values: impl Iterator<Item = &'a str>) -> f64 {
    // first-seen order keeps the float sum, and so the digest, reproducible
    let mut counts: IndexMap<&str, usize> = IndexMap::new();
    let mut total = 0usize;
    for v in values {
        *counts.entry(v).or_default() += 1;
        total += 1;
    }
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    let h: f64 = counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum();
    // -0.0 for a single distinct value
    h.max(0.0)
}

fn skewness(values: &[f64], mode: SkewMode) -> Option<f64> {
    if values.len() < 3 {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let m2 = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m3 = values.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;
    if m2 <= 0.0 {
        return None;
    }
    let g1 = m3 / m2.powf(1.5);
    Some(match mode {
        SkewMode::Population => g1,
        SkewMode::Sample => g1 * (n * (n - 1.0)).sqrt() / (n - 2.0),
    })
}

pub fn compute_signature(
    column: &Column,
    inferred: SemanticType,
    config: &ProfilerConfig,
) -> ColumnSignature {
    let rendered: Vec<String> = non_null(column, config).map(Cell::render).collect();
    let total = column.len();
    let present = rendered.len();
    let null_rate = if total == 0 {
        0.0
    } else {
        (total - present) as f64 / total as f64
    };

    let mut distinct: Vec<&str> = rendered.iter().map(String::as_str).collect();
    distinct.sort_unstable();
    distinct.dedup();
    let cardinality = distinct.len();
    let entropy = shannon_entropy(rendered.iter().map(String::as_str));

    let mut warnings = Vec::new();
    if present == 0 {
        warnings.push(WARN_ALL_NULL.to_string());
    }

    let (bounds, skew) = match inferred {
        SemanticType::Numerical => {
            let nums: Vec<f64> = non_null(column, config)
                .filter_map(|c| config.parse_numeric(c))
                .collect();
            let bounds = min_max(&nums).map(|(min, max)| Bounds::Numeric { min, max });
            (bounds, skewness(&nums, config.skew))
        }
        SemanticType::Temporal => {
            let stamps: Vec<i64> = non_null(column, config)
                .filter_map(|c| config.parse_temporal(c))
                .collect();
            let bounds = match (stamps.iter().min(), stamps.iter().max()) {
                (Some(&lo), Some(&hi)) => Some(Bounds::Temporal {
                    min: crate::dataset::render_timestamp(lo),
                    max: crate::dataset::render_timestamp(hi),
                }),
                _ => None,
            };
            (bounds, None)
        }
        SemanticType::Categorical => (None, None),
    };

    ColumnSignature {
        cardinality,
        null_rate,
        bounds,
        entropy,
        skew,
        warnings,
    }
}

fn min_max(values: &[f64]) -> Option<(f64, f64)> {
    let mut it = values.iter().copied();
    let first = it.next()?;
    Some(it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v))))
}

/// Up to `k` distinct non-null values rendered as text.
///
/// Uniform: rows are visited in a seeded random order and the first `k`
/// distinct values win. Stratified: the `k` most frequent values, ties broken
/// by first appearance; the seed is unused.
pub fn sample_values(
    column: &Column,
    k: usize,
    strategy: SamplingStrategy,
    seed: u64,
    config: &ProfilerConfig,
) -> Vec<String> {
    assert!(k >= 1, "sample count must be at least 1");
    match strategy {
        SamplingStrategy::Uniform => {
            let mut rows: Vec<usize> = column
                .cells()
                .iter()
                .enumerate()
                .filter(|(_, c)| !config.is_null(c))
                .map(|(i, _)| i)
                .collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rows.shuffle(&mut rng);
            let mut out: Vec<String> = Vec::with_capacity(k);
            for row in rows {
                let v = column.cells()[row].render();
                if !out.contains(&v) {
                    out.push(v);
                    if out.len() == k {
                        break;
                    }
                }
            }
            out
        }
        SamplingStrategy::Stratified => {
            let mut counts: IndexMap<String, usize> = IndexMap::new();
            for c in non_null(column, config) {
                *counts.entry(c.render()).or_default() += 1;
            }
            let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
            // stable: equal counts keep first-seen order
            ranked.sort_by_key(|r| std::cmp::Reverse(r.1));
            ranked.into_iter().take(k).map(|(v, _)| v).collect()
        }
    }
}

pub fn profile_column(
    column: &Column,
    k: usize,
    seed: u64,
    config: &ProfilerConfig,
) -> ColumnContext {
    let semantic_type = infer_type(column, config);
    let signature = compute_signature(column, semantic_type, config);
    let strategy = match semantic_type {
        SemanticType::Categorical => SamplingStrategy::Stratified,
        _ => SamplingStrategy::Uniform,
    };
    ColumnContext {
        name: column.name().to_string(),
        semantic_type,
        signature,
        samples: sample_values(column, k, strategy, seed, config),
    }
}

/// Profiles every column; column `j` samples with `seed + j`.
pub fn build_context(
    dataset: &Dataset,
    k: usize,
    seed: u64,
    config: &ProfilerConfig,
) -> SchemaContext {
    let columns = dataset
        .columns()
        .par_iter()
        .enumerate()
        .map(|(j, col)| profile_column(col, k, seed.wrapping_add(j as u64), config))
        .collect();
    SchemaContext {
        dataset_name: dataset.name().to_string(),
        columns,
        k,
    }
}
