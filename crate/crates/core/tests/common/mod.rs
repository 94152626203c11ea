#![allow(dead_code)]

pub mod parse_cases;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use cogchain::chain::{Post, Split, Stage, StressVerdict};
use cogchain::gateway::mock::{chain_reply, expression_of, stage_of, FnTransport};
use cogchain::gateway::{EndpointConfig, Gateway};
use cogchain::pipeline::{AnnotateConfig, Annotator};
use cogchain::prompt::TemplateSet;

pub const TOPICS: [&str; 6] = [
    "my landlord raised the rent again and I have no idea how to cover it",
    "spent the afternoon baking bread with my kids",
    "three deadlines this week and my manager keeps adding more",
    "finally finished the hike we planned all summer",
    "the hospital called about my dad's test results",
    "watched the rain from the porch with a cup of tea",
];

/// Synthetic post text ending in `[id]`, so a mock can recover the id from
/// any prompt that embeds the expression.
pub fn post_text(id: usize) -> String {
    format!("{} [{id}]", TOPICS[id % TOPICS.len()])
}

pub fn gold_of(id: usize) -> StressVerdict {
    if id.is_multiple_of(2) {
        StressVerdict::Stressed
    } else {
        StressVerdict::NonStressed
    }
}

pub fn corpus(n: usize) -> Vec<Post> {
    (0..n).map(|i| Post::new(i.to_string(), post_text(i), gold_of(i), "synthetic", Split::Train).unwrap()).collect()
}

pub fn id_of(prompt: &str) -> usize {
    let expr = expression_of(prompt);
    let open = expr.rfind('[').expect("expression carries an id");
    expr[open + 1..expr.len() - 1].parse().expect("numeric id")
}

pub fn flip(v: StressVerdict) -> StressVerdict {
    match v {
        StressVerdict::Stressed => StressVerdict::NonStressed,
        StressVerdict::NonStressed => StressVerdict::Stressed,
    }
}

/// The stage at which sample `id` first answers correctly in the standard
/// 100-post scenario; `None` means it is dropped.
pub fn scenario_stage(id: usize) -> Option<Stage> {
    match id {
        0..75 => Some(Stage::Generate),
        75..79 => Some(Stage::SelfReflect),
        79..97 => Some(Stage::AnswerReflect),
        _ => None,
    }
}

/// Ids whose first response in every stage is unparseable.
pub fn scenario_garbles(id: usize) -> bool {
    id % 11 == 5
}

/// Deterministic backend for the standard scenario: 75 samples correct at
/// generation, 4 after self-reflection, 18 after answer-reflection and 3
/// that never comply. Some prompts get one unparseable reply before a
/// well-formed one. Replies depend only on the prompt and how often that
/// prompt was seen, never on global call order.
pub fn scenario_transport() -> FnTransport {
    let seen: Mutex<HashMap<String, usize>> = Mutex::new(HashMap::new());
    FnTransport::new(move |req, _| {
        let n = {
            let mut seen = seen.lock().unwrap();
            let c = seen.entry(req.prompt.clone()).or_default();
            *c += 1;
            *c
        };
        let id = id_of(&req.prompt);
        if n == 1 && scenario_garbles(id) {
            return Ok("I would rather not structure this answer.".into());
        }
        let gold = gold_of(id);
        let stage = stage_of(&req.prompt);
        let correct = match scenario_stage(id) {
            Some(s) => stage.index() >= s.index(),
            None => false,
        };
        Ok(chain_reply(if correct { gold } else { flip(gold) }))
    })
}

/// Number of steps the prompt asks for, read from its task description.
pub fn steps_requested(prompt: &str) -> usize {
    let i = prompt.find("-step reasoning process").expect("chain prompt");
    prompt[..i].chars().last().unwrap().to_digit(10).unwrap() as usize
}

/// Answers correctly for a share of samples that grows with the number of
/// steps in the prompt: all of them with the full chain, a quarter with the
/// answer alone.
pub fn step_sensitive() -> FnTransport {
    FnTransport::new(|req, _| {
        let id = id_of(&req.prompt);
        let correct = id % 4 < steps_requested(&req.prompt);
        let gold = gold_of(id);
        Ok(format!("Stress state: {}", if correct { gold } else { flip(gold) }))
    })
}

/// Expected request count for the standard scenario with retry budget 3.
pub fn scenario_requests(n: usize) -> usize {
    (0..n)
        .map(|id| {
            let extra = usize::from(scenario_garbles(id));
            match scenario_stage(id) {
                Some(Stage::Generate) => 1 + extra,
                Some(Stage::SelfReflect) => 2 + 2 * extra,
                Some(Stage::AnswerReflect) => 3 + 3 * extra,
                // stage 3 spends its whole budget of four attempts
                None => 2 + 2 * extra + 4,
            }
        })
        .sum()
}

pub fn live_gateway(t: Arc<FnTransport>) -> Gateway {
    Gateway::live(EndpointConfig::offline("mock-model"), t).unwrap()
}

pub fn annotator(gateway: Gateway, cfg: AnnotateConfig) -> Annotator {
    Annotator::new(cfg, Arc::new(gateway), TemplateSet::builtin().clone()).unwrap()
}

/// Reads every file of a directory tree into a sorted map, for
/// byte-identity checks between runs.
pub fn snapshot_dir(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

const FILLER: [&str; 16] = [
    "work", "family", "money", "sleep", "friend", "weekend", "deadline", "exam", "rent", "walk", "coffee", "doctor",
    "message", "plan", "news", "garden",
];

/// `n` annotated samples whose reaction text carries a quality marker word,
/// plus one expert label per sample agreeing with the marker. Half are
/// qualified.
pub fn marker_samples(
    n: usize,
    seed: u64,
) -> (Vec<cogchain::chain::AnnotatedSample>, Vec<cogchain::quality::QualityLabel>) {
    use cogchain::chain::{AnnotatedSample, CognitionChain};
    use cogchain::quality::{QualityLabel, QualityVerdict};
    use rand::{Rng, SeedableRng};

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for (i, post) in corpus(n).into_iter().enumerate() {
        let qualified = i % 2 == 0;
        let mut filler = || (0..6).map(|_| FILLER[rng.random_range(0..FILLER.len())]).collect::<Vec<_>>().join(" ");
        let marker = if qualified { "grounded" } else { "generic" };
        let chain = CognitionChain::new(
            Some(&filler()),
            &format!("the individual evaluates this as harmful {}", filler()),
            &format!("{marker} reaction about {}", filler()),
            post.gold_label,
        )
        .unwrap();
        labels.push(QualityLabel {
            sample_id: post.id.clone(),
            verdict: if qualified { QualityVerdict::Qualified } else { QualityVerdict::Unqualified },
            rater: "expert".into(),
            timestamp: 1_700_000_000 + i as u64,
        });
        samples.push(AnnotatedSample::new(post, chain, Stage::Generate, 1).unwrap());
    }
    (samples, labels)
}
