mod common;

#[test]
fn generator_objective_matches_central_differences() {
    let r = common::gradient_check(8, 4, 200, 3);
    eprintln!("{r:?}");
    assert!(r.passing * 100 >= r.sampled * 99, "{r:?}");
}
