use cogchain::chain::StressVerdict;
use cogchain::prompt::{Baseline, PromptKind, SlotValues, TemplateSet};

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/golden");

fn golden(kind: PromptKind) -> String {
    std::fs::read_to_string(format!("{FIXTURES}/{}", kind.file_name())).unwrap()
}

/// What the transcribed boxes show where a slot sits.
fn placeholders(kind: PromptKind) -> SlotValues {
    match kind {
        PromptKind::CogChain => SlotValues { examples: "----- Example -----\n...\n".into(), ..Default::default() },
        PromptKind::StandardCot => SlotValues { examples: "...".into(), ..Default::default() },
        _ => SlotValues::default(),
    }
}

const ALL: [PromptKind; 5] = [
    PromptKind::CogChain,
    PromptKind::SelfReflect,
    PromptKind::AnswerReflect,
    PromptKind::Direct,
    PromptKind::StandardCot,
];

#[test]
fn templates_match_golden_outside_slots() {
    for kind in ALL {
        let rendered = TemplateSet::builtin().template(kind).render(&placeholders(kind));
        assert_eq!(rendered, golden(kind), "{kind}");
    }
}

/// Splits the golden text at the placeholder positions and checks that a
/// real rendering carries every literal piece, in order, around the slot
/// contents.
fn assert_literals_in_order(kind: PromptKind, rendered: &str, contents: &[&str]) {
    let g = golden(kind);
    let mut pos = 0;
    let mut rest = rendered;
    let pieces: Vec<&str> = match kind {
        PromptKind::CogChain => g.split("----- Example -----\n...\n").collect(),
        PromptKind::StandardCot => g.split("[Examples]:...").collect(),
        _ => vec![g.as_str()],
    };
    for piece in pieces {
        for line in piece.split('\n').filter(|l| !l.is_empty()) {
            let found = rest.find(line).unwrap_or_else(|| panic!("{kind}: literal {line:?} missing after byte {pos}"));
            pos += found + line.len();
            rest = &rest[found + line.len()..];
        }
    }
    for c in contents {
        assert!(rendered.contains(c), "{kind}: slot content {c:?} missing");
    }
}

#[test]
fn real_renderings_keep_every_literal() {
    let t = TemplateSet::builtin();
    let expr = "Rent doubled and I can't sleep.";
    let prior = "1. Stimulus: rent\n2. Evaluation: beneficial\n3. Reaction: calm\n4. Stress state: non-stressed";
    let cc = t.render_cogchain(t.default_examples(2), expr);
    assert_literals_in_order(PromptKind::CogChain, &cc, &[expr, &t.chain_examples()[0].expression]);
    assert!(cc.ends_with(&format!("Individual Expression: {expr}\n\n")));

    let sr = t.render_self_reflect(expr, prior);
    assert_literals_in_order(PromptKind::SelfReflect, &sr, &[expr, prior]);
    assert!(!sr.contains("Real stress state"));

    let ar = t.render_answer_reflect(expr, prior, StressVerdict::Stressed);
    assert_literals_in_order(PromptKind::AnswerReflect, &ar, &[expr, prior, "Real stress state: stressed"]);

    let d = t.render_baseline(Baseline::Direct, &[], expr);
    assert_eq!(d, format!("{}{expr}\n", golden(PromptKind::Direct).trim_end_matches('\n')));
}

#[test]
fn renderings_are_pure() {
    let t = TemplateSet::builtin();
    let a = t.render_answer_reflect("x", "y", StressVerdict::NonStressed);
    let b = t.render_answer_reflect("x", "y", StressVerdict::NonStressed);
    assert_eq!(a, b);
}
