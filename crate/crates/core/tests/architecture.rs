mod common;

#[test]
fn reference_layers_match_published_tables() {
    let start = std::time::Instant::now();
    let errors = common::architecture_mismatches();
    assert!(errors.is_empty(), "{}", errors.join("\n"));
    eprintln!("traced reference networks in {:.1}s", start.elapsed().as_secs_f64());
}
