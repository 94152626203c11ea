use std::fmt;

use super::{AppraisalCategory, CognitionChain, StressVerdict};

/// Psychological-consistency findings. These never invalidate a chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LintWarning {
    HarmfulButNonStressed,
    BeneficialButStressed,
    /// Stimulus is `N/A` yet the evaluation and reaction still describe one.
    NoStimulus,
}

impl fmt::Display for LintWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg = match self {
            LintWarning::HarmfulButNonStressed => "harmful appraisal with a non-stressed verdict",
            LintWarning::BeneficialButStressed => "beneficial appraisal with a stressed verdict",
            LintWarning::NoStimulus => "no stimulus but evaluation and reaction are present",
        };
        f.write_str(msg)
    }
}

pub fn lint_chain(chain: &CognitionChain) -> Vec<LintWarning> {
    let mut out = Vec::new();
    match (chain.appraisal(), chain.verdict()) {
        (Some(AppraisalCategory::Harmful), StressVerdict::NonStressed) => out.push(LintWarning::HarmfulButNonStressed),
        (Some(AppraisalCategory::Beneficial), StressVerdict::Stressed) => out.push(LintWarning::BeneficialButStressed),
        _ => {}
    }
    if chain.stimulus().is_none() {
        out.push(LintWarning::NoStimulus);
    }
    out
}
