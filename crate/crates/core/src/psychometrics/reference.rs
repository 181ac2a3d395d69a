use serde::{Deserialize, Serialize};

use super::instruments::Factor;
use super::stats::{ttest_two_sample_summary, CohortSummary, TTest};
use super::PsychError;

/// A published study's per-factor summaries; missing factors are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceStudy {
    pub label: String,
    pub n: usize,
    pub factors: [Option<(f64, f64)>; 4],
    /// p values as printed alongside the summaries, when known.
    pub printed_p: [Option<f64>; 4],
}

impl ReferenceStudy {
    pub fn summary(&self, f: Factor) -> Option<Result<CohortSummary, PsychError>> {
        self.factors[f as usize].map(|(mean, sd)| CohortSummary::new(self.n, mean, sd))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorOutcome {
    /// Reference mean significantly above the cohort.
    Higher,
    Lower,
    Indistinguishable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntensityClass {
    MoreIntenseAll,
    MoreIntenseTwo,
    /// Indistinguishable on three or more factors.
    Equal,
    LessIntenseTwo,
    /// Less intense on three or more factors, or on every factor compared.
    LessIntenseMost,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorComparison {
    pub factor: Factor,
    pub test: TTest,
    pub outcome: FactorOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyComparison {
    pub label: String,
    pub cells: Vec<FactorComparison>,
    pub higher: usize,
    pub lower: usize,
    pub indistinguishable: usize,
    pub class: IntensityClass,
}

impl StudyComparison {
    pub fn compared(&self) -> usize {
        self.cells.len()
    }
}

fn classify(higher: usize, lower: usize, indist: usize, compared: usize) -> IntensityClass {
    if indist >= 3 {
        IntensityClass::Equal
    } else if compared > 0 && higher == compared {
        IntensityClass::MoreIntenseAll
    } else if lower >= 3 || (compared > 0 && lower == compared) {
        IntensityClass::LessIntenseMost
    } else if higher == 2 {
        IntensityClass::MoreIntenseTwo
    } else if lower == 2 {
        IntensityClass::LessIntenseTwo
    } else {
        IntensityClass::Mixed
    }
}

/// Tests each reference factor against the cohort with a pooled t-test and
/// tallies the outcomes per study.
pub fn compare_to_reference(
    cohort: &[CohortSummary; 4],
    refs: &[ReferenceStudy],
    alpha: f64,
) -> Result<Vec<StudyComparison>, PsychError> {
    refs.iter()
        .map(|study| {
            let mut cells = Vec::new();
            for f in Factor::ALL {
                let Some(summary) = study.summary(f) else { continue };
                let summary = summary?;
                let test = ttest_two_sample_summary(&cohort[f as usize], &summary, true)?;
                let outcome = if test.p_two_sided > alpha {
                    FactorOutcome::Indistinguishable
                } else if summary.mean > cohort[f as usize].mean {
                    FactorOutcome::Higher
                } else {
                    FactorOutcome::Lower
                };
                cells.push(FactorComparison { factor: f, test, outcome });
            }
            let count = |o| cells.iter().filter(|c| c.outcome == o).count();
            let (higher, lower, indist) =
                (count(FactorOutcome::Higher), count(FactorOutcome::Lower), count(FactorOutcome::Indistinguishable));
            Ok(StudyComparison {
                label: study.label.clone(),
                class: classify(higher, lower, indist, cells.len()),
                cells,
                higher,
                lower,
                indistinguishable: indist,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub more_intense_all: usize,
    pub more_intense_two: usize,
    pub indistinguishable_all: usize,
    pub indistinguishable_three: usize,
    pub less_intense_two: usize,
    pub less_intense_most: usize,
    pub mixed: usize,
}

pub fn summarize(results: &[StudyComparison]) -> ComparisonSummary {
    let mut s = ComparisonSummary::default();
    for r in results {
        match r.class {
            IntensityClass::MoreIntenseAll => s.more_intense_all += 1,
            IntensityClass::MoreIntenseTwo => s.more_intense_two += 1,
            IntensityClass::Equal if r.indistinguishable == r.compared() => s.indistinguishable_all += 1,
            IntensityClass::Equal => s.indistinguishable_three += 1,
            IntensityClass::LessIntenseTwo => s.less_intense_two += 1,
            IntensityClass::LessIntenseMost => s.less_intense_most += 1,
            IntensityClass::Mixed => s.mixed += 1,
        }
    }
    s
}
