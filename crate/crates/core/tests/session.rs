use std::sync::atomic::{AtomicUsize, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use strot::backend::{BackendError, Completion, Fixture, Script, ScriptedBackend};
use strot::executor::ResultPayload;
use strot::orchestrator::{
    replay, run_query_with_context, Mode, Outcome, SessionConfig, SessionTranscript, SECTION_ERROR, SECTION_PLAN,
    SECTION_PREVIOUS,
};
use strot::plan::UserQuery;
use strot::profiler::{build_context, ProfilerConfig};
use strot::prompt::{Prompt, Stage};
use strot::{run_query, CompletionBackend};
use strot_testkit::fixtures::{covid, covid_csv, region_responses, script, REGION_QUERY};
use strot_testkit::oracle::grouped_sums;
use strot_testkit::personas::{expected_refines, persona_script, random_draws, Draw};

fn query() -> UserQuery {
    UserQuery::new(REGION_QUERY).unwrap()
}

fn run_script(s: Script, config: &SessionConfig) -> SessionTranscript {
    let backend = ScriptedBackend::new(s).unwrap();
    run_query(&query(), &covid(), &backend, config)
}

#[test]
fn region_chart_matches_brute_force_sums() {
    let t = run_script(script("covid/region.json"), &SessionConfig::default());
    let Outcome::Success { result: ResultPayload::Chart { labels, datasets } } = &t.outcome else {
        panic!("expected a chart, got {:?}", t.outcome);
    };
    let oracle = grouped_sums(&covid_csv(), "WHO Region", &["deaths", "New cases"]);
    assert_eq!(labels.len(), oracle.len());
    assert_eq!(datasets[0].label, "Total Deaths");
    assert_eq!(datasets[1].label, "New Cases");
    for (i, (region, sums)) in oracle.iter().enumerate() {
        assert_eq!(&labels[i], region);
        assert_eq!(datasets[0].data[i], sums[0] as f64);
        assert_eq!(datasets[1].data[i], sums[1] as f64);
    }
    assert_eq!(t.refine_attempts(), 0);
    assert_eq!(t.backend_calls(), 2);
}

#[test]
fn recovery_refines_once_with_feedback() {
    let t = run_script(script("covid/region_recovery.json"), &SessionConfig::default());
    assert!(t.outcome.is_success(), "{:?}", t.outcome);
    assert_eq!(t.refine_attempts(), 1);
    let refine = t.refine_prompts().next().unwrap();
    let previous = refine.section_body(SECTION_PREVIOUS).unwrap();
    assert!(previous.contains("\"newcases\""));
    let error = refine.section_body(SECTION_ERROR).unwrap();
    assert!(error.contains("error[UNKNOWN_COLUMN]"));
    assert!(error.contains("did you mean: 'New cases'"));
    let plan = refine.section_body(SECTION_PLAN).unwrap();
    assert!(plan.contains("WHO Region"));
    assert!(plan.contains("\"transformation_type\": \"group\""));
}

#[test]
fn scripted_sessions_are_byte_identical() {
    for name in ["covid/region.json", "covid/region_recovery.json", "covid/top10.json"] {
        let a = run_script(script(name), &SessionConfig::default()).to_jsonl();
        let b = run_script(script(name), &SessionConfig::default()).to_jsonl();
        assert_eq!(a, b, "{name}");
    }
}

#[test]
fn transcript_round_trips_and_replays() {
    let t = run_script(script("covid/region_recovery.json"), &SessionConfig::default());
    let text = t.to_jsonl();
    let back = SessionTranscript::from_jsonl(&text).unwrap();
    assert_eq!(back.to_jsonl(), text);
    let report = replay(&back, &covid(), &ProfilerConfig::default()).unwrap();
    assert!(report.identical(), "{report:?}");
}

#[test]
fn replay_detects_changed_data() {
    let t = run_script(script("covid/region.json"), &SessionConfig::default());
    let csv = std::fs::read_to_string(covid_csv()).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    let shorter = lines[..lines.len() - 1].join("\n");
    let data = strot::Dataset::load_csv("country_wise", shorter.as_bytes(), &Default::default()).unwrap();
    let report = replay(&t, &data, &ProfilerConfig::default()).unwrap();
    assert!(!report.identical());
}

#[test]
fn one_shot_makes_a_single_call() {
    let (_, program) = region_responses();
    let config = SessionConfig {
        mode: Mode::OneShot,
        ..SessionConfig::default()
    };
    let t = run_script(Script::new(vec![Fixture::for_stage(Stage::Synthesize, program)]), &config);
    assert!(t.outcome.is_success());
    assert_eq!(t.backend_calls(), 1);
    assert!(t.plan().is_none());
}

fn content_calls(t: &SessionTranscript) -> usize {
    t.attempts.iter().filter(|a| a.stage != Stage::Plan).count()
}

#[test]
fn refine_budget_holds_across_random_personas() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let data = covid();
    let context = build_context(&data, 5, 42, &ProfilerConfig::default());
    for _ in 0..300 {
        let budget = rng.gen_range(0..=4);
        let always_bad = rng.gen_bool(0.3);
        let draws = random_draws(&mut rng, budget + 2, always_bad, 0.4);
        let config = SessionConfig {
            refine_budget: budget,
            ..SessionConfig::default()
        };
        let backend = ScriptedBackend::new(persona_script(&draws)).unwrap();
        let t = run_query_with_context(&query(), &data, context.clone(), &backend, &config);
        assert!(t.refine_attempts() <= budget);
        match expected_refines(&draws, budget) {
            Some(i) => {
                assert!(t.outcome.is_success(), "{draws:?}");
                assert_eq!(t.refine_attempts(), i);
            }
            None => {
                let Outcome::Failure { report } = &t.outcome else {
                    panic!("expected failure for {draws:?}: {:?}", t.outcome);
                };
                assert_eq!(report.refine_attempts, budget);
                assert_eq!(content_calls(&t), 1 + budget);
            }
        }
    }
}

/// Fails with `error` on call number `fail_at` (1-based), otherwise delegates.
struct Flaky {
    inner: ScriptedBackend,
    fail_at: usize,
    error: BackendError,
    calls: AtomicUsize,
}

impl CompletionBackend for Flaky {
    fn model_id(&self) -> &str {
        "flaky"
    }

    fn complete(&self, prompt: &Prompt) -> Result<Completion, BackendError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst) + 1;
        if n == self.fail_at {
            return Err(self.error.clone());
        }
        self.inner.complete(prompt)
    }
}

#[test]
fn infrastructure_errors_abort_without_spending_budget() {
    let draws = [Draw::BadField, Draw::Malformed, Draw::Empty, Draw::BadField];
    let errors = [
        BackendError::Timeout,
        BackendError::AuthFailure,
        BackendError::Transport {
            status: Some(503),
            body_excerpt: "busy".into(),
        },
    ];
    for fail_at in 1..=5 {
        for error in &errors {
            let backend = Flaky {
                inner: ScriptedBackend::new(persona_script(&draws)).unwrap(),
                fail_at,
                error: error.clone(),
                calls: AtomicUsize::new(0),
            };
            let t = run_query(&query(), &covid(), &backend, &SessionConfig::default());
            let Outcome::Infrastructure { stage, .. } = &t.outcome else {
                panic!("expected infrastructure outcome, got {:?}", t.outcome);
            };
            assert_eq!(t.backend_calls(), fail_at - 1, "failed call is not recorded");
            assert_eq!(t.refine_attempts(), fail_at.saturating_sub(3));
            let expected = match fail_at {
                1 => Stage::Plan,
                2 => Stage::Synthesize,
                _ => Stage::Refine,
            };
            assert_eq!(*stage, expected);
        }
    }
}

#[test]
fn empty_completion_error_is_a_model_failure() {
    let (plan, _) = region_responses();
    struct EmptyAfterPlan(ScriptedBackend);
    impl CompletionBackend for EmptyAfterPlan {
        fn model_id(&self) -> &str {
            "empty"
        }
        fn complete(&self, prompt: &Prompt) -> Result<Completion, BackendError> {
            match prompt.stage {
                Stage::Plan => self.0.complete(prompt),
                _ => Err(BackendError::EmptyCompletion),
            }
        }
    }
    let backend = EmptyAfterPlan(ScriptedBackend::new(Script::new(vec![Fixture::for_stage(Stage::Plan, plan)])).unwrap());
    let config = SessionConfig {
        refine_budget: 2,
        ..SessionConfig::default()
    };
    let t = run_query(&query(), &covid(), &backend, &config);
    let Outcome::Failure { report } = &t.outcome else {
        panic!("{:?}", t.outcome);
    };
    assert_eq!(report.refine_attempts, 2);
    assert_eq!(report.last_error.code, strot::ErrorCode::EmptyCompletion);
}

#[test]
fn malformed_plans_get_one_free_retry() {
    let (plan, program) = region_responses();
    let fixtures = vec![
        Fixture::for_stage(Stage::Plan, "not json"),
        Fixture::for_stage(Stage::Plan, plan),
        Fixture::for_stage(Stage::Synthesize, program),
    ];
    let t = run_script(Script::new(fixtures), &SessionConfig::default());
    assert!(t.outcome.is_success());
    assert_eq!(t.refine_attempts(), 0);
    assert_eq!(t.backend_calls(), 3);

    // later plan failures draw on the budget
    let fixtures = vec![Fixture::for_stage(Stage::Plan, "not json").repeating()];
    let config = SessionConfig {
        refine_budget: 2,
        ..SessionConfig::default()
    };
    let t = run_script(Script::new(fixtures), &config);
    assert!(matches!(t.outcome, Outcome::Failure { .. }));
    assert_eq!(t.backend_calls(), 1 + 1 + 2);
}

#[test]
fn context_is_shared_between_runs() {
    let data = covid();
    let a = build_context(&data, 5, 42, &ProfilerConfig::default());
    let b = build_context(&data, 5, 42, &ProfilerConfig::default());
    assert_eq!(a.digest(), b.digest());
    let t = run_script(script("covid/region.json"), &SessionConfig::default());
    assert_eq!(t.context_digest, a.digest());
}
