//! Golden-file tests pinning the prompt templates and document layouts.
//! Regenerate with GOLDEN_UPDATE=1 after an intentional wording change and
//! review the diff.

use std::path::{Path, PathBuf};

use autograde::io::parse_assignment;
use autograde::model::{Feedback, GradeRecord, Grader, Outcome};
use autograde::prompt::{
    build_evaluation_prompt, build_issue_summary_prompt, build_refinement_prompt,
};
use autograde::report::{
    build_performance_summary, render_performance_summary, render_student_feedback,
};

fn golden_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name)
}

fn assert_golden(name: &str, actual: &str) {
    let path = golden_path(name);
    if std::env::var_os("GOLDEN_UPDATE").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path)
        .unwrap_or_else(|_| panic!("golden file {name} missing; run with GOLDEN_UPDATE=1"));
    assert_eq!(
        actual, expected,
        "{name} drifted from its golden file; if intentional, regenerate with GOLDEN_UPDATE=1"
    );
}

fn fixture_assignment() -> autograde::io::Assignment {
    let path =
        Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/sampling_assignment.json");
    parse_assignment(&path).unwrap()
}

#[test]
fn evaluation_prompt_is_pinned() {
    let assignment = fixture_assignment();
    let question = assignment.question("q1").unwrap();
    let bundle = build_evaluation_prompt(
        &assignment.course,
        &question.background,
        &[(
            question,
            "I would use cluster sampling over the estate blocks.",
        )],
        assignment.scheme("q1").unwrap(),
        None,
    )
    .unwrap();
    assert_golden("eval_prompt_q1.txt", &bundle.transcript());
}

#[test]
fn refinement_prompts_are_pinned() {
    let assignment = fixture_assignment();
    let question = assignment.question("q2").unwrap();
    let refine = build_refinement_prompt(question, assignment.scheme("q2"), None);
    assert_golden("refine_prompt_q2.txt", &refine.transcript());
    let generate = build_refinement_prompt(question, None, None);
    assert_golden("generate_prompt_q2.txt", &generate.transcript());
}

#[test]
fn summary_prompt_is_pinned() {
    let assignment = fixture_assignment();
    let question = assignment.question("q1").unwrap();
    let corpus = vec![
        Feedback {
            errors_identified: vec!["did not name a sampling frame".into()],
            explanation: "the method cannot be assessed without a frame".into(),
            suggestions: vec!["state the frame before the method".into()],
        },
        Feedback {
            errors_identified: vec!["ignored cost".into()],
            explanation: "cost-effectiveness is part of the scheme".into(),
            suggestions: vec!["compare interviewer travel costs".into()],
        },
    ];
    let bundle = build_issue_summary_prompt(question, &corpus).unwrap();
    assert_golden("summary_prompt_q1.txt", &bundle.transcript());
}

fn sample_records() -> Vec<GradeRecord> {
    vec![
        GradeRecord {
            student_id: "s001".into(),
            question_id: "q1".into(),
            outcome: Outcome::Scored {
                score: 7,
                feedback: Feedback {
                    errors_identified: vec![
                        "no cost argument".into(),
                        "representativeness asserted, not justified".into(),
                    ],
                    explanation: "two scheme criteria are unaddressed".into(),
                    suggestions: vec!["walk through each criterion explicitly".into()],
                },
            },
            grader: Grader::Aag,
            model_id: "mock".into(),
            prompt_fingerprint: "f".repeat(64),
            timestamp: 1_750_000_000,
        },
        GradeRecord {
            student_id: "s001".into(),
            question_id: "q2".into(),
            outcome: Outcome::Skipped {
                reason: "unparseable after 3 attempts: no parseable score line".into(),
            },
            grader: Grader::Aag,
            model_id: "mock".into(),
            prompt_fingerprint: "f".repeat(64),
            timestamp: 1_750_000_000,
        },
    ]
}

#[test]
fn student_feedback_document_is_pinned() {
    let assignment = fixture_assignment();
    let doc = render_student_feedback(&sample_records(), &assignment);
    assert_golden("student_feedback.txt", &doc);
}

#[test]
fn performance_summary_document_is_pinned() {
    let assignment = fixture_assignment();
    let mut records = sample_records();
    records.push(GradeRecord {
        student_id: "s002".into(),
        question_id: "q1".into(),
        outcome: Outcome::Scored {
            score: 9,
            feedback: Feedback {
                errors_identified: vec![],
                explanation: "covers every criterion".into(),
                suggestions: vec!["tighten the cost argument".into()],
            },
        },
        grader: Grader::Aag,
        model_id: "mock".into(),
        prompt_fingerprint: "f".repeat(64),
        timestamp: 1_750_000_000,
    });
    let (mut summary, _) = build_performance_summary(&records, &assignment, None, false);
    summary.common_issues.insert(
        "q1".into(),
        vec![
            "cost-effectiveness not discussed".into(),
            "sampling frame left implicit".into(),
        ],
    );
    assert_golden(
        "performance_summary.txt",
        &render_performance_summary(&summary),
    );
}
