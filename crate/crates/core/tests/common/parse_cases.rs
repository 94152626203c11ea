use cogchain::chain::{parse_chain, CognitionChain, ParseError, Step, StressVerdict};
use proptest::prelude::*;

use StressVerdict::{NonStressed, Stressed};

pub fn step_text() -> impl Strategy<Value = String> {
    prop_oneof![
        "[a-zA-Z0-9 ,.;:!?'()/-]{1,80}",
        "[a-z ]{0,20}(harmful|beneficial|irrelevant|stressed|non-stressed)[a-z ,.]{0,20}",
        "[ \t]*[äßéñ漢字😀 a-z]{1,30}[ \t]*",
        Just("N/A".to_string()),
        Just("Stimulus: nested header-looking text".to_string()),
    ]
}

pub fn chain() -> impl Strategy<Value = CognitionChain> {
    (prop::option::of(step_text()), step_text(), step_text(), prop::sample::select(StressVerdict::ALL.to_vec()))
        .prop_filter_map("blank steps are not chains", |(s, e, r, v)| CognitionChain::new(s.as_deref(), &e, &r, v).ok())
}

#[derive(Debug)]
pub enum Expect {
    Ok { verdict: StressVerdict, stimulus: Option<&'static str>, evaluation: Option<&'static str> },
    Err(ParseError),
}

fn ok(verdict: StressVerdict) -> Expect {
    Expect::Ok { verdict, stimulus: None, evaluation: None }
}

fn ok_stim(verdict: StressVerdict, stimulus: Option<&'static str>) -> Expect {
    Expect::Ok { verdict, stimulus, evaluation: None }
}

pub fn adversarial_cases() -> Vec<(&'static str, Expect)> {
    let unrecognized = |s: &str| Expect::Err(ParseError::UnrecognizedVerdict(s.to_string()));
    vec![
        ("1. Stimulus: exam\n2. Evaluation: harmful\n3. Reaction: panic\n4. Stress state: stressed", ok_stim(Stressed, Some("exam"))),
        ("stimulus: exam\nevaluation: harmful\nreaction: panic\nstress state: stressed", ok(Stressed)),
        ("STIMULUS: exam\nEVALUATION: harmful\nREACTION: panic\nSTRESS STATE: NON-STRESSED", ok(NonStressed)),
        ("1) Stimulus: exam\n2) Evaluation: harmful\n3) Reaction: panic\n4) Stress state: stressed", ok(Stressed)),
        ("- Stimulus: exam\n- Evaluation: harmful\n- Reaction: panic\n- Stress state: stressed", ok(Stressed)),
        ("**Stimulus:** exam\n**Evaluation:** harmful\n**Reaction:** panic\n**Stress state:** non-stressed", ok_stim(NonStressed, Some("exam"))),
        ("1. **Stimulus**: exam\n2. **Evaluation**: harmful\n3. **Reaction**: panic\n4. **Stress state**: stressed", ok_stim(Stressed, Some("exam"))),
        ("### Stimulus\nexam tomorrow\n### Evaluation\nharmful\n### Reaction\npanic\n### Stress state\nstressed", ok_stim(Stressed, Some("exam tomorrow"))),
        ("1. Stimulus: exam\n2. Evaluation: harmful\n3. Reaction: panic\n4. Stress state: stressed\n\nOverall the poster is under real pressure.", ok(Stressed)),
        ("1. Stimulus: exam\n2. Evaluation: harmful\n3. Reaction: panic\n4. Stress state: non-stressed\nSome readers might call this stressed.", ok(NonStressed)),
        ("1. Stimulus: exam\n2. Evaluation: harmful\n3. Reaction: panic\n4. Stress state:\nStressed", ok(Stressed)),
        ("1. Stimulus: exam\n2. Evaluation: harmful\n3. Reaction: panic\n4. Stress state: not stressed", ok(NonStressed)),
        ("1. Stimulus: exam\n2. Evaluation: harmful\n3. Reaction: panic\n4. Stress state: nonstressed", ok(NonStressed)),
        ("1. Stimulus：exam\n2. Evaluation：harmful\n3. Reaction：panic\n4. Stress state：stressed", ok_stim(Stressed, Some("exam"))),
        ("1. Stimulus - exam\n2. Evaluation - harmful\n3. Reaction - panic\n4. Stress state - non-stressed", ok_stim(NonStressed, Some("exam"))),
        ("Sure! Here is my analysis.\n\n1. Stimulus: exam\n2. Evaluation: harmful\n3. Reaction: panic\n4. Stress state: stressed", ok(Stressed)),
        (
            "1. Stimulus: exam\n2. Evaluation: harmful\n3. Reaction: panic\n4. Stress state: stressed\nOn reflection:\n1. Stimulus: a chat\n2. Evaluation: irrelevant\n3. Reaction: calm\n4. Stress state: non-stressed",
            ok_stim(NonStressed, Some("a chat")),
        ),
        (
            "1. Stimulus: exam\n2. Evaluation: harmful\n3. Reaction: panic\n4. Stress state: stressed\nRevised:\n1. Stimulus: a chat\n2. Evaluation: irrelevant",
            ok_stim(Stressed, Some("exam")),
        ),
        ("1. Stimulus: exam\n2. Evaluation: harmful\n4. Stress state: stressed", Expect::Err(ParseError::MissingStep(Step::Reaction))),
        ("2. Evaluation: harmful\n3. Reaction: panic\n4. Stress state: stressed", Expect::Err(ParseError::MissingStep(Step::Stimulus))),
        (
            "1. Stimulus: exam\n2. Evaluation: harmful\n2. Evaluation: helpful\n3. Reaction: panic\n4. Stress state: stressed",
            Expect::Err(ParseError::AmbiguousStep(Step::Evaluation)),
        ),
        (
            "1. Stimulus: exam\n3. Reaction: panic\n2. Evaluation: harmful\n4. Stress state: stressed",
            Expect::Err(ParseError::AmbiguousStep(Step::Evaluation)),
        ),
        ("1. Stimulus: exam\n2. Evaluation: harmful\n3. Reaction: panic\n4. Stress state: maybe", unrecognized("maybe")),
        ("1. Stimulus: exam\n2. Evaluation: harmful\n3. Reaction: panic\n4. Stress state: distressed", unrecognized("distressed")),
        ("1. Stimulus: N/A\n2. Evaluation: irrelevant\n3. Reaction: calm\n4. Stress state: non-stressed", ok_stim(NonStressed, None)),
        ("1. Stimulus: 'n/a'.\n2. Evaluation: irrelevant\n3. Reaction: calm\n4. Stress state: non-stressed", ok_stim(NonStressed, None)),
        (
            "1. Stimulus: rent\n2. Evaluation: harmful,\n   because the rent is due\n3. Reaction: panic\n4. Stress state: stressed",
            Expect::Ok { verdict: Stressed, stimulus: Some("rent"), evaluation: Some("harmful, because the rent is due") },
        ),
        ("1. Stimulus: exam\n2. Evaluation: harmful\n3. Reaction:   \n4. Stress state: stressed", Expect::Err(ParseError::EmptyStep(Step::Reaction))),
        ("", Expect::Err(ParseError::MissingStep(Step::Stimulus))),
        (
            "1. Stimulus: exam\r\n2. Evaluation: harmful\r\n3. Reaction: their stress state is rising\r\n4. Stress state: stressed\r\n",
            ok_stim(Stressed, Some("exam")),
        ),
    ]
}

/// Runs every adversarial case; returns how many passed or the first
/// mismatch.
pub fn check_adversarial() -> Result<usize, String> {
    let cases = adversarial_cases();
    let n = cases.len();
    for (i, (input, expect)) in cases.into_iter().enumerate() {
        let got = parse_chain(input);
        let good = match (&got, &expect) {
            (Ok(c), Expect::Ok { verdict, stimulus, evaluation }) => {
                let stim_checked = stimulus.is_some() || input.contains("N/A") || input.contains("n/a");
                c.verdict() == *verdict
                    && (!stim_checked || c.stimulus() == *stimulus)
                    && evaluation.is_none_or(|e| c.evaluation() == e)
            }
            (Err(e), Expect::Err(want)) => e == want,
            _ => false,
        };
        if !good {
            return Err(format!("case {i}: {input:?} gave {got:?}, expected {expect:?}"));
        }
    }
    Ok(n)
}
