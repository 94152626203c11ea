use serde::{Deserialize, Serialize};

use crate::chain::{AnnotatedSample, Post, Split, Step};
use crate::par::{self, Execution};

/// Count and mean whitespace-token length of one field.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TokenStats {
    pub count: usize,
    pub total_tokens: usize,
    pub avg_tokens: f64,
}

impl TokenStats {
    fn from_lengths(lengths: impl Iterator<Item = usize>) -> Self {
        let (count, total_tokens) = lengths.fold((0, 0), |(c, t), l| (c + 1, t + l));
        let avg_tokens = if count == 0 { 0.0 } else { total_tokens as f64 / count as f64 };
        TokenStats { count, total_tokens, avg_tokens }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub posts: TokenStats,
    pub stressed: usize,
    pub non_stressed: usize,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

/// Corpus statistics plus mean length of each chain step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleStats {
    pub corpus: CorpusStats,
    pub stimulus: TokenStats,
    pub evaluation: TokenStats,
    pub reaction: TokenStats,
    pub stress_state: TokenStats,
}

fn tokens(s: &str) -> usize {
    s.split_whitespace().count()
}

/// Counts and average post length in whitespace tokens.
pub fn stats(posts: &[Post], exec: Execution) -> CorpusStats {
    let lengths = par::map(exec, posts, |p| tokens(&p.text));
    let mut s = CorpusStats { posts: TokenStats::from_lengths(lengths.into_iter()), ..Default::default() };
    for p in posts {
        if p.gold_label.is_stressed() {
            s.stressed += 1;
        } else {
            s.non_stressed += 1;
        }
        match p.split {
            Split::Train => s.train += 1,
            Split::Validation => s.validation += 1,
            Split::Test => s.test += 1,
        }
    }
    s
}

/// Statistics over annotated samples. Steps are measured as they appear in
/// the serialized chain, so an absent stimulus counts as the one token `N/A`.
pub fn stats_for_samples(samples: &[AnnotatedSample], exec: Execution) -> SampleStats {
    let posts: Vec<Post> = samples.iter().map(|s| s.post.clone()).collect();
    let per_step = par::map(exec, samples, |s| Step::ALL.map(|step| tokens(s.chain.step_text(step))));
    let column = |i: usize| TokenStats::from_lengths(per_step.iter().map(|l| l[i]));
    SampleStats {
        corpus: stats(&posts, exec),
        stimulus: column(0),
        evaluation: column(1),
        reaction: column(2),
        stress_state: column(3),
    }
}
