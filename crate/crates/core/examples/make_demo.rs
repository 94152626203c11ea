//! Regenerates `tests/fixtures/demo`: a small corpus, its split sidecar,
//! quality labels, the cassette recorded from a scripted lexicon backend and
//! the report that replaying the cassette must reproduce.
//!
//!     cargo run -p cogchain --example make_demo [-- <out-dir>]

use std::collections::{HashMap, HashSet};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use cogchain::chain::{Split, Stage, StressVerdict};
use cogchain::demo::{self, DemoInputs};
use cogchain::gateway::mock::{expression_of, stage_of, FnTransport};
use cogchain::gateway::{Cassette, Gateway};
use cogchain::quality::{QualityLabel, QualityVerdict};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use StressVerdict::{NonStressed, Stressed};

const STRESSED: [&str; 10] = [
    "my landlord raised the rent again and I can't cover it",
    "three deadlines this week and my boss keeps piling on more",
    "I failed the midterm and my scholarship depends on it",
    "the hospital called about my mom's scans",
    "I haven't slept properly in days because of work",
    "my car broke down and I can't afford the repair",
    "we keep fighting about money and I dread going home",
    "I was laid off this morning with no warning",
    "the panic attacks are back and I can't focus",
    "the move is in two days and nothing is packed",
];

const CALM: [&str; 10] = [
    "spent the afternoon baking bread with my kids",
    "finally finished the hike we planned all summer",
    "watched the rain from the porch with a cup of tea",
    "my sister visited and we laughed all night",
    "got a small raise and treated myself to dinner",
    "the garden finally has ripe tomatoes",
    "slept in and read half a novel",
    "our team won the pub quiz",
    "started pottery classes and I love it",
    "walked the dog by the lake at sunrise",
];

/// Posts whose surface cues point the wrong way.
const TRICKY: [(&str, StressVerdict); 6] = [
    ("the exam I was dreading went great and I can finally relax", NonStressed),
    ("paid off the last of the debt that kept me up at night", NonStressed),
    ("job interview tomorrow but honestly I feel ready", NonStressed),
    ("everyone at the party thought I was fine but I feel like I'm drowning", Stressed),
    ("smiling through the holidays while the bills pile up", Stressed),
    ("we had a lovely dinner and then she said she wants a divorce", Stressed),
];

const TAILS: [&str; 8] = ["", " honestly", " today", " this week", " again", " lol", " and it's only tuesday", " ugh"];

const STRESS_CUES: [&str; 14] = [
    "rent",
    "deadline",
    "failed",
    "hospital",
    "slept",
    "broke",
    "fighting",
    "laid off",
    "panic",
    "dread",
    "exam",
    "debt",
    "interview",
    "move",
];
const CALM_CUES: [&str; 12] =
    ["baking", "hike", "tea", "laughed", "raise", "garden", "novel", "won", "love", "walked", "party", "lovely"];

fn lexicon(text: &str) -> StressVerdict {
    let hits = |cues: &[&str]| cues.iter().filter(|c| text.contains(*c)).count();
    if hits(&STRESS_CUES) > hits(&CALM_CUES) {
        Stressed
    } else {
        NonStressed
    }
}

fn flip(v: StressVerdict) -> StressVerdict {
    match v {
        Stressed => NonStressed,
        NonStressed => Stressed,
    }
}

fn bucket(text: &str, m: u64) -> u64 {
    text.bytes().fold(0xcbf29ce484222325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100000001b3)) % m
}

/// Grounded reactions name the stimulus; generic ones could fit any post.
fn chain(text: &str, verdict: StressVerdict) -> String {
    let stimulus = text.split(" and ").next().unwrap_or(text);
    let (appraisal, feeling) = match verdict {
        Stressed => ("harmful", "overwhelmed and keeps returning to it"),
        NonStressed => ("beneficial", "at ease and describes it warmly"),
    };
    let reaction = if bucket(text, 3) == 0 {
        "The individual feels some emotions.".to_string()
    } else {
        format!("The individual feels {feeling}, pointing to {stimulus} as the cause.")
    };
    format!(
        "1. Stimulus: {stimulus}.\n2. Evaluation: The individual evaluates this as {appraisal}.\n3. Reaction: {reaction}\n4. Stress state: {verdict}"
    )
}

fn backend(gold: HashMap<String, StressVerdict>) -> FnTransport {
    let seen: Mutex<HashMap<String, usize>> = Mutex::new(HashMap::new());
    FnTransport::new(move |req, _| {
        let n = {
            let mut seen = seen.lock().unwrap();
            let c = seen.entry(req.prompt.clone()).or_default();
            *c += 1;
            *c - 1
        };
        let text = expression_of(&req.prompt).to_string();
        let guess = lexicon(&text);
        let Some(&truth) = gold.get(&text) else {
            return Ok(chain(&text, guess));
        };
        let reply = match stage_of(&req.prompt) {
            Stage::Generate if n == 0 && bucket(&text, 9) == 4 => "Let me think about this post.".to_string(),
            // the same stage-1 prompt also serves evaluation; later runs drift a little
            Stage::Generate if n > 0 && bucket(&text, 5) == n as u64 => chain(&text, flip(guess)),
            Stage::Generate => chain(&text, guess),
            Stage::SelfReflect if bucket(&text, 2) == 0 => chain(&text, truth),
            Stage::SelfReflect => chain(&text, guess),
            Stage::AnswerReflect if bucket(&text, 4) == 1 => chain(&text, flip(truth)),
            Stage::AnswerReflect => chain(&text, truth),
        };
        Ok(reply)
    })
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/demo")));
    std::fs::create_dir_all(&out)?;
    let inputs = DemoInputs::in_dir(&out);

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut texts = HashSet::new();
    let mut posts = csv::Writer::from_path(&inputs.posts)?;
    let mut splits = csv::Writer::from_path(&inputs.splits)?;
    posts.write_record(["id", "text", "label"])?;
    splits.write_record(["id", "split"])?;
    let mut gold = HashMap::new();
    let mut id = 0;
    while id < 80 {
        let roll: f64 = rng.random();
        let (base, label) = if roll < 0.4 {
            (*STRESSED.choose(&mut rng).unwrap(), Stressed)
        } else if roll < 0.8 {
            (*CALM.choose(&mut rng).unwrap(), NonStressed)
        } else {
            *TRICKY.choose(&mut rng).unwrap()
        };
        let text = format!("{base}{}", TAILS.choose(&mut rng).unwrap());
        if !texts.insert(text.clone()) {
            continue;
        }
        let split = if rng.random_bool(0.75) { Split::Train } else { Split::Test };
        posts.write_record([id.to_string(), text.clone(), label.to_string()])?;
        splits.write_record([id.to_string(), split.to_string()])?;
        gold.insert(text, label);
        id += 1;
    }
    posts.flush()?;
    splits.flush()?;

    let work = tempfile::tempdir()?;
    let cassette = Arc::new(Cassette::in_memory());
    let gateway = Arc::new(Gateway::recording(demo::demo_endpoint(), Arc::new(backend(gold)), cassette.clone())?);
    let corpus = demo::load_corpus(&inputs)?;
    let (_, samples) = demo::annotate(&corpus, gateway.clone(), &work.path().join("label"))?;

    let mut labels = String::new();
    for (i, s) in samples.iter().enumerate() {
        let grounded = s.chain.reaction().contains("as the cause");
        let verdict = if grounded { QualityVerdict::Qualified } else { QualityVerdict::Unqualified };
        for rater in ["rater-a", "rater-b"].iter().take(if i % 4 == 0 { 2 } else { 1 }) {
            let label = QualityLabel {
                sample_id: s.id().to_string(),
                verdict,
                rater: rater.to_string(),
                timestamp: 1_700_000_000 + i as u64,
            };
            labels.push_str(&serde_json::to_string(&label)?);
            labels.push('\n');
        }
    }
    std::fs::write(&inputs.labels, labels)?;

    let recorded = demo::run_demo(&inputs, gateway, &work.path().join("record"))?;
    cassette.write_sorted(&inputs.cassette)?;

    let replay = Arc::new(Gateway::replay(demo::demo_endpoint(), Arc::new(Cassette::load(&inputs.cassette)?))?);
    let replayed = demo::run_demo(&inputs, replay, &work.path().join("replay"))?;
    assert_eq!(recorded.text, replayed.text, "replay diverged from the recording");
    std::fs::write(out.join("expected_report.txt"), &replayed.text)?;
    print!("{}", replayed.text);
    Ok(())
}
