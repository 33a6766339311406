//! Independent oracles computed from raw inputs.

use std::path::Path;

/// Per-group integer sums of `value_columns`, keyed by `key_column` in
/// first-seen order. Reads the CSV directly; blank cells count as zero.
pub fn grouped_sums(
    csv_path: &Path,
    key_column: &str,
    value_columns: &[&str],
) -> Vec<(String, Vec<i64>)> {
    let mut reader = csv::Reader::from_path(csv_path).expect("readable csv");
    let headers = reader.headers().expect("header row").clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .unwrap_or_else(|| panic!("no column {name}"))
    };
    let key = find(key_column);
    let vals: Vec<usize> = value_columns.iter().map(|c| find(c)).collect();
    let mut out: Vec<(String, Vec<i64>)> = Vec::new();
    for record in reader.records() {
        let record = record.expect("well-formed row");
        let k = record[key].to_string();
        let pos = match out.iter().position(|(g, _)| *g == k) {
            Some(p) => p,
            None => {
                out.push((k, vec![0; vals.len()]));
                out.len() - 1
            }
        };
        for (slot, &c) in vals.iter().enumerate() {
            let cell = record[c].trim();
            if !cell.is_empty() {
                out[pos].1[slot] += cell.parse::<i64>().expect("integer cell");
            }
        }
    }
    out
}

/// Pearson r for three points from the raw-moment formula
/// (n·Σxy − Σx·Σy) / sqrt((n·Σx² − (Σx)²)(n·Σy² − (Σy)²)).
pub fn closed_form_pearson3(points: [(f64, f64); 3]) -> f64 {
    let n = 3.0;
    let (mut sx, mut sy, mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (x, y) in points {
        sx += x;
        sy += y;
        sxy += x * y;
        sxx += x * x;
        syy += y * y;
    }
    (n * sxy - sx * sy) / ((n * sxx - sx * sx) * (n * syy - sy * sy)).sqrt()
}
