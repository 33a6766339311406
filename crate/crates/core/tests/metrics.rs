use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use strot::backend::{Fixture, Persona, Script, ScriptedBackend};
use strot::bench::compute_metrics;
use strot::orchestrator::{Mode, SessionConfig, SessionTranscript};
use strot::plan::UserQuery;
use strot::prompt::Stage;
use strot::run_query;
use strot_testkit::fixtures::{covid, region_responses, script, REGION_QUERY};

/// One clean, one recovered and one failed transcript.
fn kinds() -> [SessionTranscript; 3] {
    let data = covid();
    let q = UserQuery::new(REGION_QUERY).unwrap();
    let run = |s: Script| run_query(&q, &data, &ScriptedBackend::new(s).unwrap(), &SessionConfig::default());
    let (plan, program) = region_responses();
    let failing = Script::new(vec![
        Fixture::for_stage(Stage::Plan, plan),
        Fixture::for_stage(Stage::Synthesize, program.clone()).with_persona(Persona::EmitMalformedObject),
        Fixture::for_stage(Stage::Refine, program).with_persona(Persona::EmitMalformedObject).repeating(),
    ]);
    [run(script("covid/region.json")), run(script("covid/region_recovery.json")), run(failing)]
}

fn mix(kinds: &[SessionTranscript; 3], counts: [usize; 3]) -> Vec<SessionTranscript> {
    counts
        .iter()
        .zip(kinds)
        .flat_map(|(&n, t)| std::iter::repeat_n(t.clone(), n))
        .collect()
}

#[test]
fn seventeen_two_one_gives_95_85_10() {
    let report = compute_metrics(&mix(&kinds(), [17, 2, 1]));
    assert_eq!(report.queries, 20);
    assert_eq!(report.valid_execution_rate, 95.0);
    assert_eq!(report.first_attempt_success, 85.0);
    assert_eq!(report.recovery_via_retry, Some(10.0));
    assert_eq!(report.avg_steps_per_plan, Some(3.0));
}

#[test]
fn rates_follow_counts_for_random_mixes() {
    let kinds = kinds();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let counts = [rng.gen_range(0..15), rng.gen_range(0..15), rng.gen_range(0..15)];
        let n: usize = counts.iter().sum();
        if n == 0 {
            continue;
        }
        let mut transcripts = mix(&kinds, counts);
        transcripts.shuffle(&mut rng);
        let r = compute_metrics(&transcripts);
        let pct = |c: usize| 100.0 * c as f64 / n as f64;
        assert!((r.valid_execution_rate - pct(counts[0] + counts[1])).abs() <= 0.05 + 1e-9);
        assert!((r.first_attempt_success - pct(counts[0])).abs() <= 0.05 + 1e-9);
        let recovery = r.recovery_via_retry.unwrap();
        assert!((recovery - pct(counts[1])).abs() <= 0.05 + 1e-9);
        assert!((r.valid_execution_rate - r.first_attempt_success - recovery).abs() <= 0.1 + 1e-9);
    }
}

#[test]
fn one_shot_reports_no_recovery() {
    let (_, program) = region_responses();
    let config = SessionConfig {
        mode: Mode::OneShot,
        ..SessionConfig::default()
    };
    let s = Script::new(vec![Fixture::for_stage(Stage::Synthesize, program)]);
    let t = run_query(&UserQuery::new("q").unwrap(), &covid(), &ScriptedBackend::new(s).unwrap(), &config);
    let r = compute_metrics(&[t]);
    assert_eq!(r.valid_execution_rate, 100.0);
    assert_eq!(r.recovery_via_retry, None);
    assert_eq!(r.avg_steps_per_plan, None);
}
