//! Acceptance suite: one test per criterion, each printing a PASS line
//! (visible with `cargo test --test acceptance -- --nocapture`).
//!
//! Criterion 8 reproduces externally published statistics and runs only
//! when the mapped dataset is supplied via environment variables (see
//! README, "Reproducing published tables"); otherwise it reports SKIPPED
//! and does not fail.

mod common;

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use autograde::engine::{grade_corpus, GradingRunConfig};
use autograde::io::{canonical_grade_dump, parse_assignment, parse_survey, read_grade_records};
use autograde::llm::{LlmClient, MockProvider, ProviderConfig};
use autograde::model::{validate_marking_scheme, HypothesisConfig, Submission};
use autograde::stats::{
    analyze_survey, binomial_test_one_sided, mann_whitney_u, mann_whitney_u_with, pearson_r,
    wilcoxon_signed_rank, wilcoxon_signed_rank_with, Alternative, Method, StatError,
};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

/// Criterion 1: one-sided binomial test on 93 of 104 at p0 = 0.5 matches
/// the published row (statistic 0.8942, p < 1e-4).
#[test]
fn criterion_1_binomial_reproduction() {
    let result = binomial_test_one_sided(93, 104, 0.5, Alternative::Greater).unwrap();
    assert!(
        (result.statistic - 0.89423).abs() <= 0.0001,
        "statistic {}",
        result.statistic
    );
    assert!(
        result.p_value.unwrap() < 1e-4,
        "p {}",
        result.p_value.unwrap()
    );
    println!("ACCEPTANCE 1 (binomial reproduction): PASS");
}

/// Criterion 2: exact-path p-values equal brute-force enumeration to 1e-12
/// on >= 1000 random instances per test, with the rank-sum identities
/// holding on every instance.
#[test]
fn criterion_2_exact_oracle_equivalence() {
    let mut rng = common::Rng(0x5eed_0002);

    let mut wilcoxon_checked = 0usize;
    while wilcoxon_checked < 1000 {
        let n = 1 + rng.below(12) as usize;
        let mu0 = 1.0 + rng.below(5) as f64;
        let values: Vec<f64> = (0..n).map(|_| 1.0 + rng.below(6) as f64).collect();
        let kernel = wilcoxon_signed_rank(&values, mu0, Alternative::Greater);
        match common::wilcoxon_oracle(&values, mu0) {
            None => assert!(matches!(kernel, Err(StatError::AllZeroDifferences))),
            Some((w_plus, p_oracle)) => {
                let kernel = kernel.unwrap();
                assert!(kernel.exact);
                assert_eq!(kernel.statistic, w_plus);
                let diff = (kernel.p_value.unwrap() - p_oracle).abs();
                assert!(
                    diff <= 1e-12,
                    "wilcoxon p diff {diff} on {values:?} mu0 {mu0}"
                );
                let m = kernel.detail["m_nonzero"];
                assert_eq!(
                    kernel.detail["w_plus"] + kernel.detail["w_minus"],
                    m * (m + 1.0) / 2.0
                );
                wilcoxon_checked += 1;
            }
        }
    }

    for _ in 0..1000 {
        let n1 = 1 + rng.below(6) as usize;
        let n2 = 1 + rng.below(6) as usize;
        let g1: Vec<f64> = (0..n1).map(|_| rng.below(7) as f64).collect();
        let g2: Vec<f64> = (0..n2).map(|_| rng.below(7) as f64).collect();
        let kernel = mann_whitney_u(&g1, &g2, Alternative::Greater).unwrap();
        let (u_oracle, p_oracle) = common::mwu_oracle(&g1, &g2);
        assert!(kernel.exact);
        assert_eq!(kernel.statistic, u_oracle);
        let diff = (kernel.p_value.unwrap() - p_oracle).abs();
        assert!(diff <= 1e-12, "mwu p diff {diff} on {g1:?} vs {g2:?}");
        assert_eq!(kernel.detail["u1"] + kernel.detail["u2"], (n1 * n2) as f64);
    }
    println!("ACCEPTANCE 2 (exact-oracle equivalence, 1000+1000 instances): PASS");
}

/// Criterion 3: exact and approximate p-values agree within 0.01 on 200
/// random tie-free samples of size 20..=25, for both nonparametric tests.
#[test]
fn criterion_3_approximation_consistency() {
    let mut rng = common::Rng(0x5eed_0003);

    // Tie-free values: distinct offsets, shuffled signs and magnitudes.
    for _ in 0..200 {
        let m = 20 + rng.below(6) as usize;
        let values: Vec<f64> = (0..m)
            .map(|i| {
                let magnitude = (i + 1) as f64 + rng.f64() * 0.5;
                let sign = if rng.below(100) < 65 { 1.0 } else { -1.0 };
                3.0 + sign * magnitude
            })
            .collect();
        let exact =
            wilcoxon_signed_rank_with(&values, 3.0, Alternative::Greater, Method::Exact).unwrap();
        let approx =
            wilcoxon_signed_rank_with(&values, 3.0, Alternative::Greater, Method::Approx).unwrap();
        let diff = (exact.p_value.unwrap() - approx.p_value.unwrap()).abs();
        assert!(diff <= 0.01, "wilcoxon diff {diff} at m={m}");
    }

    for _ in 0..200 {
        let n = 20 + rng.below(6) as usize;
        let n1 = n / 2;
        let mut pooled: Vec<f64> = (0..n).map(|i| i as f64 + rng.f64() * 0.5).collect();
        // Shuffle, then shift group 1 up a little.
        for i in (1..pooled.len()).rev() {
            pooled.swap(i, rng.below(i as u64 + 1) as usize);
        }
        let g1: Vec<f64> = pooled[..n1].iter().map(|v| v + 2.0).collect();
        let g2: Vec<f64> = pooled[n1..].to_vec();
        let exact = mann_whitney_u_with(&g1, &g2, Alternative::Greater, Method::Exact).unwrap();
        let approx = mann_whitney_u_with(&g1, &g2, Alternative::Greater, Method::Approx).unwrap();
        let diff = (exact.p_value.unwrap() - approx.p_value.unwrap()).abs();
        assert!(diff <= 0.01, "mwu diff {diff} at n={n}");
    }
    println!("ACCEPTANCE 3 (exact vs normal approximation within 0.01): PASS");
}

/// Criterion 4: Pearson properties and the worked example against the
/// definitional oracle.
#[test]
fn criterion_4_pearson_properties() {
    let mut rng = common::Rng(0x5eed_0004);
    for _ in 0..500 {
        let n = 2 + rng.below(40) as usize;
        let x: Vec<f64> = (0..n).map(|_| rng.below(11) as f64).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.below(11) as f64).collect();
        match pearson_r(&x, &y) {
            Ok(result) => {
                assert!(result.statistic.abs() <= 1.0);
                let x_affine: Vec<f64> = x.iter().map(|v| 2.5 * v + 7.0).collect();
                let y_affine: Vec<f64> = y.iter().map(|v| 0.3 * v - 4.0).collect();
                let r_affine = pearson_r(&x_affine, &y_affine).unwrap().statistic;
                assert!((result.statistic - r_affine).abs() <= 1e-12);
            }
            Err(StatError::ConstantInput(_)) => {}
            Err(e) => panic!("unexpected error {e}"),
        }
    }

    let x = [1.0, 2.0, 3.0, 4.0];
    let y = [2.0, 4.0, 4.0, 8.0];
    let kernel = pearson_r(&x, &y).unwrap().statistic;
    let oracle = common::pearson_oracle(&x, &y);
    assert!(
        (kernel - oracle).abs() <= 1e-9,
        "kernel {kernel} oracle {oracle}"
    );
    assert!((kernel - 0.9234).abs() < 5e-5);
    println!("ACCEPTANCE 4 (pearson properties + worked example): PASS");
}

fn synthetic_corpus(count: usize) -> Vec<Submission> {
    let q1 = [
        "Cluster sampling over the estate blocks; the blocks form a natural frame.",
        "Simple random sampling from the resident register.",
        "Stratified sampling by building age.",
        "Systematic sampling of every tenth flat.",
        "",
    ];
    let q2 = [
        "Stratify by state: large between-state variation and state rolls exist.",
        "Age group, since preferences differ by age.",
        "Household income, though it is hard to observe.",
        "",
        "State of residence; representative within-state samples are practical.",
    ];
    (0..count)
        .map(|i| {
            let mut answers = BTreeMap::new();
            answers.insert("q1".into(), q1[i % q1.len()].to_string());
            answers.insert("q2".into(), q2[(i / 3) % q2.len()].to_string());
            Submission {
                student_id: format!("s{:03}", i + 1),
                answers,
            }
        })
        .collect()
}

/// Criterion 5: 150 submissions x 2 questions on the deterministic mock:
/// 300 records, zero parse failures, scores in 1..=10, byte-identical
/// canonical output across two runs.
#[test]
fn criterion_5_end_to_end_mock_run() {
    let assignment = parse_assignment(&fixture("sampling_assignment.json")).unwrap();
    let dir = tempfile::tempdir().unwrap();

    // Route the corpus through the on-disk format: 150 written, 150 parsed.
    let submissions_path = dir.path().join("submissions.json");
    autograde::io::write_submissions(&synthetic_corpus(150), &submissions_path).unwrap();
    let submissions =
        autograde::io::parse_submissions(&submissions_path, &assignment).unwrap();
    assert_eq!(submissions.len(), 150);

    let mut dumps = Vec::new();
    for run in 0..2 {
        let client = LlmClient::new(
            Arc::new(MockProvider::new(HashMap::new())),
            ProviderConfig {
                model_id: "mock".into(),
                max_concurrency: 4,
                backoff_base: Duration::from_millis(1),
                ..ProviderConfig::default()
            },
        );
        let out = dir.path().join(format!("grades_{run}.jsonl"));
        let report = grade_corpus(
            &submissions,
            &assignment,
            &client,
            &GradingRunConfig::default(),
            &out,
        )
        .unwrap();
        assert_eq!(report.total_pairs, 300);
        assert_eq!(report.graded, 300, "100% parse success expected");
        assert_eq!(report.skipped, 0);
        assert_eq!(report.failed, 0);

        let records = read_grade_records(&out).unwrap();
        assert!(records.malformed.is_empty());
        assert_eq!(records.records.len(), 300);
        for record in &records.records {
            let score = record.score().expect("no skipped records");
            assert!((1..=10).contains(&score), "score {score} out of 1..=10");
        }
        dumps.push(canonical_grade_dump(&records.records));
    }
    assert_eq!(
        dumps[0], dumps[1],
        "canonicalized output must be byte-identical"
    );
    println!("ACCEPTANCE 5 (end-to-end mock run, 150x2): PASS");
}

/// Criterion 6: the bundled detailed rubric validates at exactly 10; a +1
/// mutation fails with the sum-mismatch reason.
#[test]
fn criterion_6_rubric_fixture_validation() {
    let assignment = parse_assignment(&fixture("sampling_assignment.json")).unwrap();
    let question = assignment.question("q1").unwrap();
    let scheme = assignment.scheme("q1").unwrap();
    let report = validate_marking_scheme(scheme, question);
    assert!(report.pass, "reasons: {:?}", report.reasons);
    assert_eq!(report.max_total, 10);

    let mut mutated = scheme.clone();
    mutated.criteria[1].alternatives[0].marks += 1;
    let report = validate_marking_scheme(&mutated, question);
    assert!(!report.pass);
    assert_eq!(report.max_total, 11);
    assert!(
        report.reasons.iter().any(|r| r.contains("sum to 11")),
        "reasons: {:?}",
        report.reasons
    );
    println!("ACCEPTANCE 6 (rubric fixture validation): PASS");
}

/// Criterion 7: the synthetic 104-response survey produces the full
/// 10-row table, the preference row is significant, and per-item n
/// reflects the injected missing cells.
#[test]
fn criterion_7_survey_pipeline_shape() {
    let responses = parse_survey(&fixture("survey_104.csv")).unwrap();
    assert_eq!(responses.len(), 104);
    let analysis = analyze_survey(&responses, &HypothesisConfig::default()).unwrap();

    // 10 test rows: Q1..Q9 signed-rank plus the binomial row.
    assert_eq!(analysis.items.len(), 9);
    let q10 = analysis.q10.test.result().expect("binomial row present");
    assert_eq!(analysis.q10.aag_choices, 93);
    assert!((q10.statistic - 0.8942).abs() < 1e-4);
    assert!(
        q10.p_value.unwrap() < 0.05,
        "Q10 must be significant at 0.05"
    );

    // Injected blanks: Q1 and Q5 have 103 responses, the rest 104.
    for (i, item) in analysis.items.iter().enumerate() {
        let expected = if i == 0 || i == 4 { 103 } else { 104 };
        assert_eq!(item.available_n, expected, "{}", item.item);
        assert!(
            item.test.result().is_some(),
            "{} should have run",
            item.item
        );
    }

    // Weak/strong split with boundary ties lands 54/50.
    assert_eq!(analysis.split.weak.len(), 54);
    assert_eq!(analysis.split.strong.len(), 50);
    assert_eq!(analysis.comparisons.len(), 10);
    println!("ACCEPTANCE 7 (survey pipeline shape): PASS");
}

/// Criterion 8 (conditional): reproduce the published per-item rank-sum
/// table and grader-agreement correlations from the mapped external
/// dataset. Supply:
///   AUTOGRADE_SURVEY_DATA   survey CSV in the documented schema
///   AUTOGRADE_HUMAN_GRADES  human grade records (JSON lines)
///   AUTOGRADE_AAG_GRADES    automated grade records (JSON lines)
#[test]
fn criterion_8_conditional_paper_reproduction() {
    let survey_path = std::env::var_os("AUTOGRADE_SURVEY_DATA");
    let human_path = std::env::var_os("AUTOGRADE_HUMAN_GRADES");
    let aag_path = std::env::var_os("AUTOGRADE_AAG_GRADES");

    let mut ran_anything = false;

    if let Some(path) = survey_path {
        ran_anything = true;
        let responses = parse_survey(Path::new(&path)).unwrap();
        let analysis = analyze_survey(&responses, &HypothesisConfig::default()).unwrap();
        // Published per-item rank-sum rows: (item, U, p, n1, n2).
        let expected: [(&str, f64, f64, usize, usize); 10] = [
            ("Q1", 1687.0, 0.0053, 53, 50),
            ("Q2", 1537.0, 0.0717, 53, 50),
            ("Q3", 1561.0, 0.0711, 54, 50),
            ("Q4", 1603.0, 0.0350, 54, 50),
            ("Q5", 1482.0, 0.1355, 53, 50),
            ("Q6", 1594.0, 0.0471, 54, 50),
            ("Q7", 1354.0, 0.4212, 53, 50),
            ("Q8", 1655.0, 0.0109, 54, 49),
            ("Q9", 1515.0, 0.0905, 53, 50),
            ("Q10", 1335.0, 0.5751, 54, 50),
        ];
        for (item, u, p, n1, n2) in expected {
            let row = analysis
                .comparisons
                .iter()
                .find(|c| c.item == item)
                .unwrap_or_else(|| panic!("missing row {item}"));
            let result = row
                .test
                .result()
                .unwrap_or_else(|| panic!("{item} did not run"));
            assert_eq!(row.n_weak, n1, "{item} n1");
            assert_eq!(row.n_strong, n2, "{item} n2");
            assert_eq!(result.statistic, u, "{item} U");
            assert!(
                (result.p_value.unwrap() - p).abs() <= 1e-3,
                "{item} p {} vs {p}",
                result.p_value.unwrap()
            );
        }
    }

    if let (Some(human), Some(aag)) = (human_path, aag_path) {
        ran_anything = true;
        let human = read_grade_records(Path::new(&human)).unwrap().records;
        let aag = read_grade_records(Path::new(&aag)).unwrap().records;
        let report = autograde::stats::compare_graders(&human, &aag).unwrap();
        let expect = [("q1", 0.75), ("q2", 0.82)];
        for (question, r_expected) in expect {
            let q = report
                .questions
                .iter()
                .find(|q| q.question_id == question)
                .unwrap_or_else(|| panic!("missing question {question}"));
            let r = q.pearson.expect("correlation defined");
            assert!(
                (r - r_expected).abs() <= 0.005,
                "{question}: r {r} vs {r_expected}"
            );
        }
    }

    if ran_anything {
        println!("ACCEPTANCE 8 (published-table reproduction): PASS");
    } else {
        println!(
            "ACCEPTANCE 8 (published-table reproduction): SKIPPED (external dataset not provided; \
             set AUTOGRADE_SURVEY_DATA / AUTOGRADE_HUMAN_GRADES / AUTOGRADE_AAG_GRADES)"
        );
    }
}
