//! Paths to the checked-in fixtures.

use std::path::PathBuf;

use strot::backend::Script;
use strot::bench::load_dataset;
use strot::dataset::Dataset;

pub fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn fixture(rel: &str) -> PathBuf {
    repo_root().join("fixtures").join(rel)
}

pub fn covid_csv() -> PathBuf {
    fixture("covid/country_wise.csv")
}

pub fn covid() -> Dataset {
    load_dataset(&covid_csv()).expect("covid fixture loads")
}

pub fn script(rel: &str) -> Script {
    Script::load(&fixture(rel)).expect("script fixture loads")
}

/// Plan and program responses of the per-region happy path.
pub fn region_responses() -> (String, String) {
    let s = script("covid/region.json");
    (s.fixtures[0].response.clone(), s.fixtures[1].response.clone())
}

pub const REGION_QUERY: &str = "Compare total deaths and new cases for each WHO region";
