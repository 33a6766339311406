use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use strot::executor::execute;
use strot::profiler::{build_context, ProfilerConfig};
use strot_testkit::{compare, evaluate, random_dataset, random_program};

/// Runs `cases` random (dataset, program) pairs and returns the failures.
fn run_cases(seed: u64, cases: usize) -> (usize, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut done = 0;
    let mut failures = Vec::new();
    while done < cases {
        let data = random_dataset(&mut rng);
        let ctx = build_context(&data, 5, 42, &ProfilerConfig::default());
        for _ in 0..10 {
            let Some(program) = random_program(&mut rng, &ctx) else { continue };
            done += 1;
            if let Err(why) = compare(&execute(&program, &data), &evaluate(&program, &data)) {
                failures.push(format!("{why}\nprogram: {}\ndata: {}", program.to_json(), data.debug_dump()));
            }
        }
    }
    (done, failures)
}

#[test]
fn executor_matches_reference_on_random_programs() {
    let (done, failures) = run_cases(7, 2_000);
    assert!(done >= 2_000);
    assert!(failures.is_empty(), "{} mismatches, first:\n{}", failures.len(), failures[0]);
}

