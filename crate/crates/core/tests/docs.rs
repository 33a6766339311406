use strot::dsl::DSL_SCHEMA_V1;

#[test]
fn dsl_reference_is_documented_verbatim() {
    let doc = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../docs/dsl-v1.md")).unwrap();
    assert!(doc.contains(DSL_SCHEMA_V1.trim_end()));
}
