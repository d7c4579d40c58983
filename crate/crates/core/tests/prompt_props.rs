//! Property tests for prompt construction: determinism, answer
//! containment, and focus uniqueness.

use autograde::model::{Criterion, MarkAlternative, MarkingScheme, Question, SCALE_MAX};
use autograde::prompt::{build_evaluation_prompt, build_issue_summary_prompt, PromptBundle};
use proptest::prelude::*;

fn question(id: String, text: String, background: String) -> Question {
    Question {
        id,
        background,
        text,
        depends_on: vec![],
        scale_max: SCALE_MAX,
    }
}

fn scheme_for(question_id: &str) -> MarkingScheme {
    MarkingScheme {
        question_id: question_id.to_string(),
        criteria: vec![Criterion {
            description: "everything".into(),
            alternatives: vec![MarkAlternative {
                marks: 10,
                condition: "a complete answer".into(),
            }],
        }],
        refined: true,
    }
}

/// Distinct, collision-proof answer strings.
fn answers(n: usize) -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec("[a-z]{4,12}", n..=n).prop_map(|parts| {
        parts
            .into_iter()
            .enumerate()
            .map(|(i, body)| format!("ANSWER_{i}_{body}_END"))
            .collect()
    })
}

fn chain_inputs() -> impl Strategy<Value = (Vec<Question>, Vec<String>, String, String)> {
    (1usize..5).prop_flat_map(|n| {
        (
            Just(
                (0..n)
                    .map(|i| {
                        question(
                            format!("part{i}"),
                            format!("question text {i}"),
                            String::new(),
                        )
                    })
                    .collect::<Vec<_>>(),
            ),
            answers(n),
            "[ -~]{0,40}",
            "[ -~]{0,30}",
        )
    })
}

fn build(
    questions: &[Question],
    answer_texts: &[String],
    course: &str,
    background: &str,
) -> PromptBundle {
    let chain: Vec<(&Question, &str)> = questions
        .iter()
        .zip(answer_texts)
        .map(|(q, a)| (q, a.as_str()))
        .collect();
    let scheme = scheme_for(&questions.last().unwrap().id);
    build_evaluation_prompt(course, background, &chain, &scheme, None).unwrap()
}

proptest! {
    #[test]
    fn two_builds_are_byte_identical((questions, answer_texts, course, background) in chain_inputs()) {
        let one = build(&questions, &answer_texts, &course, &background);
        let two = build(&questions, &answer_texts, &course, &background);
        prop_assert_eq!(&one.messages, &two.messages);
        prop_assert_eq!(one.fingerprint, two.fingerprint);
    }

    #[test]
    fn every_chain_answer_appears_exactly_once((questions, answer_texts, course, background) in chain_inputs()) {
        let bundle = build(&questions, &answer_texts, &course, &background);
        let text = bundle.transcript();
        for answer in &answer_texts {
            prop_assert_eq!(text.matches(answer.as_str()).count(), 1, "answer {}", answer);
        }
    }

    #[test]
    fn focus_names_only_the_last_question((questions, answer_texts, course, background) in chain_inputs()) {
        let bundle = build(&questions, &answer_texts, &course, &background);
        let text = bundle.transcript();
        let focus_line = text
            .lines()
            .find(|l| l.contains("Evaluate ONLY"))
            .expect("focus line present");
        let last_id = &questions.last().unwrap().id;
        prop_assert!(focus_line.contains(last_id.as_str()));
        // No id other than the last appears in the focus instruction. A
        // shorter id that happens to prefix the last one (part1 vs part11)
        // does not count as an appearance on its own.
        for q in &questions[..questions.len() - 1] {
            if last_id.contains(&q.id) {
                continue;
            }
            prop_assert!(
                !focus_line.contains(&q.id),
                "focus line names {}: {focus_line}",
                q.id
            );
        }
    }

    #[test]
    fn summary_prompt_is_deterministic(
        items in prop::collection::vec("[ -~]{1,60}", 1..8),
        qtext in "[ -~]{1,40}",
    ) {
        let q = question("q1".into(), qtext, String::new());
        let corpus: Vec<autograde::model::Feedback> = items
            .iter()
            .map(|text| autograde::model::Feedback {
                errors_identified: vec![text.clone()],
                explanation: text.clone(),
                suggestions: vec![],
            })
            .collect();
        let one = build_issue_summary_prompt(&q, &corpus).unwrap();
        let two = build_issue_summary_prompt(&q, &corpus).unwrap();
        prop_assert_eq!(one.fingerprint, two.fingerprint);
    }
}
