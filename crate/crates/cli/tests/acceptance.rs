//! Acceptance criteria 1-9. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use strot::backend::{Fixture, Persona, Script, ScriptedBackend, TokenEstimator};
use strot::bench::compute_metrics;
use strot::dataset::{Column, Dataset};
use strot::executor::{execute, pearson};
use strot::orchestrator::{run_query_with_context, Outcome, SessionConfig, SessionTranscript};
use strot::plan::{render_schema_metadata, UserQuery, SECTION_SCHEMA};
use strot::profiler::{build_context, compute_signature, infer_type, profile_column, ProfilerConfig};
use strot::prompt::{Prompt, Stage};
use strot::{run_query, ErrorCode};
use strot_testkit::fixtures::{covid, covid_csv, fixture, region_responses, script, REGION_QUERY};
use strot_testkit::oracle::{closed_form_pearson3, grouped_sums};
use strot_testkit::personas::{expected_refines, persona_script, random_draws};
use strot_testkit::{compare, evaluate, random_column, random_dataset, random_program};

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn strot(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_strot"))
        .args(args)
        .env_remove("STROT_API_KEY")
        .output()
        .expect("strot binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn c1_region_chart() -> Verdict {
    let csv = covid_csv();
    let fixtures = fixture("covid/region.json");
    let started = Instant::now();
    let out = strot(&["ask", path(&csv), REGION_QUERY, "--backend", "scripted", "--fixtures", path(&fixtures)]);
    let elapsed = started.elapsed();
    ensure(out.status.success(), format!("exit {:?}: {}", out.status, String::from_utf8_lossy(&out.stderr)))?;
    let payload: Value = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
    let labels = payload["labels"].as_array().ok_or("no labels")?;
    let series = payload["datasets"].as_array().ok_or("no datasets")?;
    let oracle = grouped_sums(&csv, "WHO Region", &["deaths", "New cases"]);
    ensure(labels.len() == oracle.len(), format!("{} labels, oracle has {}", labels.len(), oracle.len()))?;
    ensure(series.len() == 2, "expected two series")?;
    ensure(series[0]["label"] == "Total Deaths" && series[1]["label"] == "New Cases", "series labels")?;
    for (i, (region, sums)) in oracle.iter().enumerate() {
        ensure(labels[i] == region.as_str(), format!("label {i}: {} vs {region}", labels[i]))?;
        for s in 0..2 {
            let got = series[s]["data"][i].as_f64().ok_or("non-numeric value")?;
            ensure(got == sums[s] as f64, format!("{region} series {s}: {got} vs {}", sums[s]))?;
        }
    }
    ensure(elapsed < Duration::from_secs(1), format!("took {elapsed:?}"))?;
    Ok(format!("{} regions equal the brute-force sums exactly, {elapsed:.0?}", labels.len()))
}

fn c2_recovery() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out_path = dir.path().join("t.jsonl");
    let out = strot(&[
        "ask",
        path(&covid_csv()),
        REGION_QUERY,
        "--backend",
        "scripted",
        "--fixtures",
        path(&fixture("covid/region_recovery.json")),
        "--out",
        path(&out_path),
    ]);
    ensure(out.status.success(), "ask did not succeed")?;
    let text = std::fs::read_to_string(&out_path).map_err(|e| e.to_string())?;
    let t = SessionTranscript::from_jsonl(&text).map_err(|e| e.to_string())?;
    ensure(t.outcome.is_success(), "outcome is not success")?;
    ensure(t.refine_attempts() == 1, format!("{} refine attempts", t.refine_attempts()))?;
    let refine = t.refine_prompts().next().ok_or("no refine prompt")?.render();
    let prior = t.attempts[1].completion.text.trim();
    ensure(prior.contains("\"newcases\""), "synthesis did not emit the bad field")?;
    ensure(refine.contains(prior), "refine prompt lacks the prior program")?;
    ensure(refine.contains("error[UNKNOWN_COLUMN]: unknown column 'newcases'"), "no UnknownColumn rendering")?;
    ensure(refine.contains("did you mean: 'New cases'"), "no suggestion")?;
    let plan = t.plan().ok_or("no plan")?;
    ensure(refine.contains(&plan.to_json_pretty()), "plan not restated")?;
    Ok("one refine; prompt has prior program, UNKNOWN_COLUMN with 'New cases', plan".into())
}

fn c3_retry_budget() -> Verdict {
    let data = covid();
    let context = build_context(&data, 5, 42, &ProfilerConfig::default());
    let query = UserQuery::new(REGION_QUERY).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let started = Instant::now();
    let (mut sessions, mut always_failing) = (0, 0);
    while sessions < 1_200 {
        let budget = rng.gen_range(0..=5);
        let always_bad = rng.gen_bool(0.35);
        let draws = random_draws(&mut rng, budget + 2, always_bad, 0.4);
        let config = SessionConfig {
            refine_budget: budget,
            ..SessionConfig::default()
        };
        let backend = ScriptedBackend::new(persona_script(&draws)).unwrap();
        let t = run_query_with_context(&query, &data, context.clone(), &backend, &config);
        sessions += 1;
        ensure(t.refine_attempts() <= budget, format!("{} refines with T={budget}", t.refine_attempts()))?;
        let content_calls = t.attempts.iter().filter(|a| a.stage != Stage::Plan).count();
        match (expected_refines(&draws, budget), &t.outcome) {
            (Some(i), Outcome::Success { .. }) => ensure(t.refine_attempts() == i, "wrong refine count")?,
            (None, Outcome::Failure { report }) => {
                ensure(content_calls == 1 + budget, format!("{content_calls} content calls with T={budget}"))?;
                ensure(report.refine_attempts == budget, "report refine count")?;
                if always_bad {
                    always_failing += 1;
                }
            }
            (want, got) => return Err(format!("draws {draws:?}: expected {want:?}, got {got:?}")),
        }
    }
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(30), format!("took {elapsed:?}"))?;
    Ok(format!("{sessions} sessions ({always_failing} always failing) within T, {elapsed:.1?}"))
}

fn c4_executor_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let started = Instant::now();
    let (mut cases, mut ok_payloads) = (0, 0);
    while cases < 10_000 {
        let data = random_dataset(&mut rng);
        let ctx = build_context(&data, 5, 42, &ProfilerConfig::default());
        for _ in 0..8 {
            let Some(program) = random_program(&mut rng, &ctx) else { continue };
            cases += 1;
            let got = execute(&program, &data);
            ok_payloads += got.is_ok() as usize;
            compare(&got, &evaluate(&program, &data))
                .map_err(|why| format!("case {cases}: {why}\nprogram {}", program.to_json()))?;
        }
    }
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(60), format!("took {elapsed:?}"))?;
    Ok(format!("{cases} cases agree ({ok_payloads} payloads, rest matching error codes), {elapsed:.1?}"))
}

fn c5_profiler() -> Verdict {
    use rand::seq::SliceRandom;
    let cfg = ProfilerConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..1_500u64 {
        let column = random_column(&mut rng);
        let k = 1 + (i as usize % 7);
        let ctx = profile_column(&column, k, i, &cfg);
        let sig = &ctx.signature;
        let bound = if sig.cardinality == 0 { 0.0 } else { (sig.cardinality as f64).log2() };
        ensure(sig.entropy >= 0.0 && sig.entropy <= bound + 1e-9, format!("column {i}: entropy {}", sig.entropy))?;
        let present: Vec<String> = column.cells().iter().filter(|c| !cfg.is_null(c)).map(|c| c.render()).collect();
        ensure(ctx.samples.iter().all(|s| present.contains(s)), format!("column {i}: foreign sample"))?;
        ensure(ctx.samples.len() == k.min(sig.cardinality), format!("column {i}: sample count"))?;
        let mut cells = column.cells().to_vec();
        cells.shuffle(&mut rng);
        let shuffled = Column::new("col", cells);
        let tau = infer_type(&shuffled, &cfg);
        ensure(tau == ctx.semantic_type, format!("column {i}: type changed under permutation"))?;
        ensure(compute_signature(&shuffled, tau, &cfg).cardinality == sig.cardinality, "cardinality moved")?;
    }
    Ok("1500 columns: entropy bounds, sample membership, permutation-invariant type".into())
}

fn c6_token_budget() -> Verdict {
    let data = covid();
    ensure(data.column_count() == 15, "covid fixture should have 15 columns")?;
    let ctx = build_context(&data, 5, 42, &ProfilerConfig::default());
    let est = TokenEstimator::default();
    let section = Prompt::new(Stage::Plan, 0.1).section(SECTION_SCHEMA, render_schema_metadata(&ctx, None));
    let schema_tokens = est.estimate(&section.render());
    ensure((200..=400).contains(&schema_tokens), format!("schema section {schema_tokens} tokens"))?;
    let t = run_query(
        &UserQuery::new(REGION_QUERY).unwrap(),
        &data,
        &ScriptedBackend::new(script("covid/region.json")).unwrap(),
        &SessionConfig::default(),
    );
    ensure(t.outcome.is_success(), "happy path failed")?;
    ensure(t.totals.total <= 1500, format!("session {} tokens", t.totals.total))?;
    Ok(format!(
        "schema section {schema_tokens} tokens, session {} tokens (chars/4 estimate, ±20%)",
        t.totals.total
    ))
}

fn c7_metrics() -> Verdict {
    let data = covid();
    let q = UserQuery::new(REGION_QUERY).unwrap();
    let run = |s: Script| run_query(&q, &data, &ScriptedBackend::new(s).unwrap(), &SessionConfig::default());
    let (plan, program) = region_responses();
    let failing = Script::new(vec![
        Fixture::for_stage(Stage::Plan, plan),
        Fixture::for_stage(Stage::Synthesize, program.clone()).with_persona(Persona::EmitMalformedObject),
        Fixture::for_stage(Stage::Refine, program).with_persona(Persona::EmitMalformedObject).repeating(),
    ]);
    let clean = run(script("covid/region.json"));
    let recovered = run(script("covid/region_recovery.json"));
    let failed = run(failing);
    let mut set = vec![clean; 17];
    set.extend(vec![recovered; 2]);
    set.push(failed);
    let r = compute_metrics(&set);
    let got = (r.valid_execution_rate, r.first_attempt_success, r.recovery_via_retry);
    ensure(got == (95.0, 85.0, Some(10.0)), format!("constructed set gave {got:?}"))?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let report_path = dir.path().join("report.json");
    let out = strot(&["bench", path(&fixture("bench/suite_strot.json")), "--out", path(&report_path)]);
    ensure(out.status.success(), "bench failed")?;
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    let keys = ["Valid Execution Rate (%)", "First-Attempt Success (%)", "Recovery via Retry (%)"];
    let bench: Vec<f64> = keys.iter().map(|k| report[k].as_f64().unwrap_or(f64::NAN)).collect();
    ensure(bench == [95.0, 85.0, 10.0], format!("bench suite gave {bench:?}"))?;
    Ok("17 clean / 2 recovered / 1 failed -> 95.0 / 85.0 / 10.0; fixture suite agrees (by construction)".into())
}

fn c8_determinism() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut checked = 0;
    for name in ["covid/region.json", "covid/region_recovery.json", "covid/top10.json", "bench/q17.json"] {
        let mut outputs = Vec::new();
        for run in 0..2 {
            let out_path = dir.path().join(format!("{run}.jsonl"));
            strot(&[
                "ask",
                path(&covid_csv()),
                REGION_QUERY,
                "--backend",
                "scripted",
                "--fixtures",
                path(&fixture(name)),
                "--out",
                path(&out_path),
            ]);
            outputs.push(std::fs::read(&out_path).map_err(|e| format!("{name}: {e}"))?);
        }
        ensure(outputs[0] == outputs[1], format!("{name}: transcripts differ"))?;
        checked += 1;
    }
    Ok(format!("{checked} scripted sessions byte-identical across two runs"))
}

fn c9_pearson() -> Verdict {
    let xs: Vec<String> = (0..40).map(|i| ((i * 37) % 23 - 11).to_string()).collect();
    let neg: Vec<String> = (0..40).map(|i| (-((i * 37) % 23 - 11)).to_string()).collect();
    let d = Dataset::new("p", vec![Column::from_text("x", &xs), Column::from_text("y", &neg)]).unwrap();
    let r_self = pearson(&d, "x", "x").map_err(|e| e.message)?;
    let r_anti = pearson(&d, "x", "y").map_err(|e| e.message)?;
    ensure((r_self - 1.0).abs() <= 1e-12, format!("self {r_self}"))?;
    ensure((r_anti + 1.0).abs() <= 1e-12, format!("anti {r_anti}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut cases, mut worst) = (0, 0.0f64);
    while cases < 2_000 {
        let pts: [(i64, i64); 3] = std::array::from_fn(|_| (rng.gen_range(-50..=50), rng.gen_range(-50..=50)));
        let col = |f: fn(&(i64, i64)) -> i64| pts.iter().map(|p| f(p).to_string()).collect::<Vec<_>>();
        let d = Dataset::new("p", vec![Column::from_text("a", &col(|p| p.0)), Column::from_text("b", &col(|p| p.1))]).unwrap();
        let got = pearson(&d, "a", "b");
        let constant = pts.iter().all(|p| p.0 == pts[0].0) || pts.iter().all(|p| p.1 == pts[0].1);
        if constant {
            ensure(got.map_err(|e| e.code) == Err(ErrorCode::ZeroVariance), "constant input not rejected")?;
            continue;
        }
        let want = closed_form_pearson3(pts.map(|(x, y)| (x as f64, y as f64)));
        let got = got.map_err(|e| e.message)?;
        worst = worst.max((got - want).abs());
        ensure((got - want).abs() <= 1e-12, format!("{pts:?}: {got} vs {want}"))?;
        cases += 1;
    }
    Ok(format!("self {r_self}, anti {r_anti}; {cases} three-point cases, max error {worst:.1e}"))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("1 region chart equals brute-force oracle", c1_region_chart),
        ("2 unknown-column recovery in one refine", c2_recovery),
        ("3 refine budget over random fault personas", c3_retry_budget),
        ("4 executor matches reference evaluator", c4_executor_oracle),
        ("5 profiler invariants", c5_profiler),
        ("6 token budget", c6_token_budget),
        ("7 metrics identity", c7_metrics),
        ("8 byte-identical transcripts", c8_determinism),
        ("9 pearson correctness", c9_pearson),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {name}: {why}");
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
