use serde::{Deserialize, Serialize};

use super::special::normal_cdf;
use super::PsychError;

/// Pairs above this count use the normal approximation.
pub const EXACT_MAX_PAIRS: usize = 25;
pub const MIN_PAIRS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Pairs left after dropping zero differences.
    pub n: usize,
    pub w_plus: f64,
    pub w_minus: f64,
    /// min(W+, W-).
    pub w: f64,
    pub p_two_sided: f64,
    pub exact: bool,
}

/// Signed-rank test on paired samples. Zero differences are dropped and
/// tied magnitudes share their average rank.
pub fn wilcoxon_signed_rank(pre: &[f64], post: &[f64]) -> Result<WilcoxonResult, PsychError> {
    if pre.len() != post.len() {
        return Err(PsychError::Domain(format!("unpaired samples: {} vs {}", pre.len(), post.len())));
    }
    let mut diffs: Vec<f64> = post.iter().zip(pre).map(|(b, a)| b - a).filter(|d| *d != 0.0).collect();
    if diffs.is_empty() {
        return Err(PsychError::Degenerate("all differences are zero".into()));
    }
    let n = diffs.len();
    if n < MIN_PAIRS {
        return Err(PsychError::Domain(format!("need at least {MIN_PAIRS} non-zero differences, got {n}")));
    }
    diffs.sort_by(|a, b| a.abs().total_cmp(&b.abs()));

    // doubled ranks keep averaged ties integral
    let mut ranks2 = vec![0u32; n];
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && diffs[j + 1].abs() == diffs[i].abs() {
            j += 1;
        }
        let r2 = (i + 1 + j + 1) as u32;
        ranks2[i..=j].fill(r2);
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let w_plus2: u32 = diffs.iter().zip(&ranks2).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let total2: u32 = ranks2.iter().sum();
    let w_plus = w_plus2 as f64 / 2.0;
    let w_minus = (total2 - w_plus2) as f64 / 2.0;
    let nf = n as f64;

    let (p, exact) = if n <= EXACT_MAX_PAIRS {
        // counts[s] = number of sign assignments whose doubled W+ equals s
        let mut counts = vec![0f64; total2 as usize + 1];
        counts[0] = 1.0;
        for &r in &ranks2 {
            for s in (r as usize..counts.len()).rev() {
                counts[s] += counts[s - r as usize];
            }
        }
        let all = 2f64.powi(n as i32);
        let lower: f64 = counts[..=w_plus2 as usize].iter().sum::<f64>() / all;
        let upper: f64 = counts[w_plus2 as usize..].iter().sum::<f64>() / all;
        ((2.0 * lower.min(upper)).min(1.0), true)
    } else {
        let mu = nf * (nf + 1.0) / 4.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
        let z = (w_plus - mu) / var.sqrt();
        ((2.0 * normal_cdf(-z.abs())).min(1.0), false)
    };
    Ok(WilcoxonResult { n, w_plus, w_minus, w: w_plus.min(w_minus), p_two_sided: p, exact })
}
