//! One PASS/FAIL line per acceptance criterion. Exits nonzero if any fails.

mod common;

use std::collections::HashSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use friend_audit_core::evaluation::chi_square_2x2;
use friend_audit_core::features::compute_features;
use friend_audit_core::learning::{
    build_dataset, cross_validate, Algorithm, Dataset, ForestParams, TargetName,
};
use friend_audit_core::quality::{screen_participants, QualityConfig};
use friend_audit_core::rules::{infer_action, RuleTable};
use friend_audit_core::session::{parse_log, AuditSession};
use friend_audit_core::synth::{generate_participants, generate_population, PopulationParams};
use friend_audit_core::{ChiSquare, Metrics, ResponseSet};
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{
    all_states, arb_decisions, friend_pairs, fuzz_session, random_snapshot, reference_action,
    reference_features, small_population, state_violation, reported_decisions, tree_bundle,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(x: f64, want: f64, tol: f64) -> bool {
    (x - want).abs() <= tol
}

fn rules_oracle() -> Outcome {
    let start = Instant::now();
    let mut checked = 0;
    let mut mismatches = 0;
    for sandbox in [false, true] {
        let table = RuleTable::canonical(sandbox);
        for r in ResponseSet::enumerate() {
            let v = infer_action(&table, &r);
            if (v.action, v.matched_rule) != reference_action(&r, sandbox) {
                mismatches += 1;
            }
            checked += 1;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        checked == 1350 && mismatches == 0 && elapsed < Duration::from_secs(1),
        format!("{checked} tuples over both modes, {mismatches} mismatches, {elapsed:.2?} (limit 1s)"),
    )
}

fn decision_matrix_check() -> Outcome {
    let m: Metrics = match friend_audit_core::evaluation::class_metrics(&reported_decisions()) {
        Ok(m) => m,
        Err(e) => return outcome(false, e.to_string()),
    };
    let i = m.index_of("ignore").expect("ignore class");
    let (p, r, f, w) = (m.precision[i], m.recall[i], m.f_measure[i], m.weighted_avg.f_measure);
    outcome(
        within(p, 0.969, 0.001) && within(r, 0.978, 0.001) && within(f, 0.973, 0.001) && within(w, 0.732, 0.005),
        format!("ignore P {p:.4} (0.969±0.001) R {r:.4} (0.978±0.001) F {f:.4} (0.973±0.001), weighted F {w:.4} (0.732±0.005)"),
    )
}

fn chi_square() -> Outcome {
    let cases = [
        ([[52u64, 9], [12, 7]], 4.417, 0.036, 0.005),
        ([[50, 11], [10, 9]], 6.64, 0.010, 0.003),
    ];
    let mut pass = true;
    let mut detail = Vec::new();
    for (table, stat, p, p_tol) in cases {
        match chi_square_2x2::<f64>(table) {
            Ok(ChiSquare { statistic, p_value, .. }) => {
                pass &= within(statistic, stat, 0.01) && within(p_value, p, p_tol);
                detail.push(format!(
                    "{table:?}: {statistic:.3} ({stat}±0.01) p {p_value:.4} ({p}±{p_tol})"
                ));
            }
            Err(e) => {
                pass = false;
                detail.push(format!("{table:?}: {e}"));
            }
        }
    }
    outcome(pass, detail.join("; "))
}

fn permuted(data: &Dataset, seed: u64) -> Dataset {
    let mut labels: Vec<String> = data.instances.iter().map(|i| i.label.clone()).collect();
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = data.clone();
    for (inst, label) in out.instances.iter_mut().zip(labels) {
        inst.label = label;
    }
    out
}

fn learning() -> Outcome {
    let start = Instant::now();
    let pop = match generate_population(&PopulationParams {
        seed: 7,
        ..Default::default()
    }) {
        Ok(p) => p,
        Err(e) => return outcome(false, e.to_string()),
    };
    let algo = Algorithm::Forest(ForestParams {
        seed: 7,
        ..Default::default()
    });
    let mut pass = true;
    let mut detail = vec![format!("{} pairs", pop.truth.len())];
    for target in [TargetName::Q1, TargetName::Q2] {
        let run = || -> Result<(f64, f64, bool), friend_audit_core::learning::LearnError> {
            let data = build_dataset(&pop.snapshot, &pop.labels(), target)?;
            let real = cross_validate(&data, algo, 10, 7)?;
            let control = cross_validate(&permuted(&data, 3), algo, 10, 7)?;
            Ok((
                real.metrics.weighted_avg.f_measure,
                control.metrics.weighted_avg.f_measure - 1.0 / data.target.class_count() as f64,
                real.leakage_free && control.leakage_free,
            ))
        };
        match run() {
            Ok((f, gap, grouped)) => {
                pass &= f >= 0.95 && gap.abs() <= 0.1 && grouped;
                detail.push(format!(
                    "{target} F {f:.4} (>=0.95), permuted minus chance {gap:+.3} (±0.1), grouped {grouped}"
                ));
            }
            Err(e) => {
                pass = false;
                detail.push(format!("{target}: {e}"));
            }
        }
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(60);
    detail.push(format!("{elapsed:.1?} (limit 60s)"));
    outcome(pass, detail.join(", "))
}

fn state_machine() -> Outcome {
    let mut runner = TestRunner::new_with_rng(
        Config {
            cases: 10_000,
            failure_persistence: None,
            ..Config::default()
        },
        proptest::test_runner::TestRng::deterministic_rng(proptest::test_runner::RngAlgorithm::ChaCha),
    );
    let strategy = (proptest::sample::select(all_states()), arb_decisions());
    let result = runner.run(&strategy, |(start, seq)| match state_violation(start, &seq) {
        None => Ok(()),
        Some(v) => Err(TestCaseError::fail(v)),
    });
    match result {
        Ok(()) => outcome(true, "10000 random decision sequences, 0 violations"),
        Err(e) => outcome(false, e.to_string()),
    }
}

fn screening() -> Outcome {
    let config = QualityConfig::default();
    let sample = match generate_participants(325, 62, &config, 2024) {
        Ok(s) => s,
        Err(e) => return outcome(false, e.to_string()),
    };
    let retained = screen_participants(&sample.records, &config).retained.len();

    let mut monotone = true;
    for seed in 0..50u64 {
        let n = (seed % 40 + 5) as usize;
        let Ok(batch) = generate_participants(n, n / 3, &config, seed) else {
            monotone = false;
            continue;
        };
        let mut previous: Option<HashSet<String>> = None;
        for floor in [0.5, 1.5, 3.0, 4.5, 6.0, 9.0] {
            let c = QualityConfig {
                min_avg_response_seconds: floor,
                ..config.clone()
            };
            let kept: HashSet<String> =
                screen_participants(&batch.records, &c).retained.into_iter().map(|r| r.id).collect();
            if let Some(prev) = &previous {
                monotone &= kept.is_subset(prev);
            }
            previous = Some(kept);
        }
    }
    outcome(
        retained == 263 && monotone,
        format!("325 participants, 62 violators, {retained} retained (263); monotone over 50 batches: {monotone}"),
    )
}

fn replay() -> Outcome {
    let pops: Vec<_> = (0..5).map(small_population).collect();
    let bundles: Vec<_> = pops.iter().map(tree_bundle).collect();
    let table = RuleTable::canonical(true);
    let mut identical = 0;
    let mut first_failure = None;
    for seed in 0..100u64 {
        let i = (seed % 5) as usize;
        let session = fuzz_session(&pops[i], &bundles[i], seed);
        let text = session.log_jsonl();
        let result = parse_log(&text)
            .and_then(|log| AuditSession::replay(&log, &table))
            .and_then(|again| {
                let same_summary = serde_json::to_string(&again.summary()?).ok()
                    == serde_json::to_string(&session.summary()?).ok();
                Ok(again.log_jsonl() == text && same_summary)
            });
        match result {
            Ok(true) => identical += 1,
            Ok(false) => {
                first_failure.get_or_insert(format!("seed {seed}: differs"));
            }
            Err(e) => {
                first_failure.get_or_insert(format!("seed {seed}: {e}"));
            }
        }
    }
    let mut detail = format!("{identical}/100 sessions replayed byte-identical with equal summaries");
    if let Some(f) = first_failure {
        detail.push_str(&format!("; {f}"));
    }
    outcome(identical == 100, detail)
}

fn features() -> Outcome {
    let mut pairs = 0;
    let mut bad = None;
    for seed in 0..1000u64 {
        let s = random_snapshot(seed);
        for (u, f) in friend_pairs(&s) {
            pairs += 1;
            let got = compute_features(&s, &u, &f);
            let back = compute_features(&s, &f, &u);
            match (got, back) {
                (Ok(a), Ok(b)) if a == reference_features(&s, &u, &f) && a == b => {}
                _ => {
                    bad.get_or_insert(format!("snapshot {seed} pair {u}/{f}"));
                }
            }
        }
    }
    outcome(
        bad.is_none(),
        format!("1000 snapshots, {pairs} ordered friend pairs{}", bad.map(|b| format!(", first mismatch {b}")).unwrap_or_default()),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("rule-engine oracle", rules_oracle),
        ("decision confusion matrix", decision_matrix_check),
        ("chi-square", chi_square),
        ("learning pipeline", learning),
        ("relationship state machine", state_machine),
        ("participant screening", screening),
        ("replay determinism", replay),
        ("feature extraction", features),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
