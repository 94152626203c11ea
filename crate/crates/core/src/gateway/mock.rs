//! In-process transports for tests, benches and fixture generation.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use super::{ChatRequest, Transport, TransportError};
use crate::chain::{Stage, StressVerdict};

type Handler = dyn Fn(&ChatRequest, usize) -> Result<String, TransportError> + Send + Sync;

/// Transport backed by a closure receiving the request and a zero-based call
/// index. Records the time of every call.
pub struct FnTransport {
    handler: Box<Handler>,
    calls: AtomicUsize,
    stamps: Mutex<Vec<Instant>>,
}

impl FnTransport {
    pub fn new<F>(handler: F) -> Self
    where
        F: Fn(&ChatRequest, usize) -> Result<String, TransportError> + Send + Sync + 'static,
    {
        FnTransport { handler: Box::new(handler), calls: AtomicUsize::new(0), stamps: Mutex::new(Vec::new()) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn call_times(&self) -> Vec<Instant> {
        self.stamps.lock().unwrap().clone()
    }
}

impl Transport for FnTransport {
    fn send(&self, request: &ChatRequest) -> Result<String, TransportError> {
        let index = self.calls.fetch_add(1, Ordering::SeqCst);
        self.stamps.lock().unwrap().push(Instant::now());
        (self.handler)(request, index)
    }
}

/// Fails every request; plugging it in proves a code path stays offline.
#[derive(Debug, Default)]
pub struct NoNetwork {
    attempts: AtomicUsize,
}

impl NoNetwork {
    pub fn attempts(&self) -> usize {
        self.attempts.load(Ordering::SeqCst)
    }
}

impl Transport for NoNetwork {
    fn send(&self, _request: &ChatRequest) -> Result<String, TransportError> {
        self.attempts.fetch_add(1, Ordering::SeqCst);
        Err(TransportError::Aborted("network access is disabled".into()))
    }
}

/// Which annotation stage a rendered prompt belongs to, judged by the blocks
/// the reflection prompts append.
pub fn stage_of(prompt: &str) -> Stage {
    if prompt.contains("\nReal stress state: ") {
        Stage::AnswerReflect
    } else if prompt.contains("\n4-step reasoning process:\n") {
        Stage::SelfReflect
    } else {
        Stage::Generate
    }
}

/// The expression being asked about: the text after the last
/// `Individual Expression:` (or, for the direct baseline, `Text:`) label.
pub fn expression_of(prompt: &str) -> &str {
    let rest = match prompt.rfind("Individual Expression: ") {
        Some(i) => &prompt[i + "Individual Expression: ".len()..],
        None => match prompt.rfind("Text: ") {
            Some(i) => &prompt[i + "Text: ".len()..],
            None => return "",
        },
    };
    let end = rest.find("\n4-step reasoning process:\n").unwrap_or(rest.len());
    rest[..end].trim_end()
}

/// A well-formed chain concluding `verdict`.
pub fn chain_reply(verdict: StressVerdict) -> String {
    let (stimulus, evaluation, reaction) = match verdict {
        StressVerdict::Stressed => (
            "An approaching deadline at work.",
            "The individual evaluates the deadline as harmful.",
            "The individual feels anxious and cannot sleep.",
        ),
        StressVerdict::NonStressed => (
            "A quiet weekend at home.",
            "The individual evaluates the weekend as beneficial.",
            "The individual feels relaxed and content.",
        ),
    };
    format!("1. Stimulus: {stimulus}\n2. Evaluation: {evaluation}\n3. Reaction: {reaction}\n4. Stress state: {verdict}")
}
