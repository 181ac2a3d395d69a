//! Synthetic ordinal cohorts matching published summary statistics, for
//! checking tests whose per-participant data were never released.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::special::normal_cdf;
use super::PsychError;

/// Counts over the integer levels `0..levels` whose mean and sample SD are
/// within `tol` of the targets, chosen closest (least squares) to a
/// normal(mean, sd) discretized at the half-integers.
pub fn matched_histogram(mean: f64, sd: f64, n: usize, levels: usize, tol: f64) -> Result<Vec<usize>, PsychError> {
    if levels < 2 || n < 2 {
        return Err(PsychError::Domain("need at least 2 levels and 2 members".into()));
    }
    let target: Vec<f64> = (0..levels)
        .map(|k| {
            let lo = if k == 0 { 0.0 } else { normal_cdf((k as f64 - 0.5 - mean) / sd) };
            let hi = if k + 1 == levels { 1.0 } else { normal_cdf((k as f64 + 0.5 - mean) / sd) };
            n as f64 * (hi - lo)
        })
        .collect();
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut counts = vec![0usize; levels];
    search(0, n, &mut counts, &target, mean, sd, n, tol, &mut best);
    best.map(|(_, c)| c)
        .ok_or_else(|| PsychError::Domain(format!("no histogram of {n} on {levels} levels has mean {mean} and sd {sd}")))
}

#[allow(clippy::too_many_arguments)]
fn search(
    level: usize,
    left: usize,
    counts: &mut Vec<usize>,
    target: &[f64],
    mean: f64,
    sd: f64,
    n: usize,
    tol: f64,
    best: &mut Option<(f64, Vec<usize>)>,
) {
    if level + 1 == counts.len() {
        counts[level] = left;
        let nf = n as f64;
        let (mut s, mut ss) = (0.0, 0.0);
        for (k, &c) in counts.iter().enumerate() {
            s += (k * c) as f64;
            ss += (k * k * c) as f64;
        }
        let m = s / nf;
        let d = ((ss - nf * m * m) / (nf - 1.0)).max(0.0).sqrt();
        if (m - mean).abs() <= tol && (d - sd).abs() <= tol {
            let err: f64 = counts.iter().zip(target).map(|(&c, t)| (c as f64 - t).powi(2)).sum();
            if best.as_ref().is_none_or(|(e, _)| err < *e) {
                *best = Some((err, counts.clone()));
            }
        }
        return;
    }
    for c in 0..=left {
        counts[level] = c;
        search(level + 1, left - c, counts, target, mean, sd, n, tol, best);
    }
}

/// Pairs two fixed marginals through a Gaussian copula with correlation
/// `rho`: each participant's latent pair decides where they fall in each
/// sorted marginal.
pub fn paired_cohort(pre: &[usize], post: &[usize], rho: f64, seed: u64) -> Result<(Vec<f64>, Vec<f64>), PsychError> {
    let expand = |h: &[usize]| -> Vec<f64> { h.iter().enumerate().flat_map(|(k, &c)| std::iter::repeat_n(k as f64, c)).collect() };
    let (a, b) = (expand(pre), expand(post));
    if a.len() != b.len() {
        return Err(PsychError::Domain(format!("marginals differ in size: {} vs {}", a.len(), b.len())));
    }
    if !(-1.0..=1.0).contains(&rho) {
        return Err(PsychError::Domain(format!("correlation {rho} outside [-1, 1]")));
    }
    let n = a.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z1 = Vec::with_capacity(n);
    let mut z2 = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = StandardNormal.sample(&mut rng);
        let e: f64 = StandardNormal.sample(&mut rng);
        z1.push(u);
        z2.push(rho * u + (1.0 - rho * rho).sqrt() * e);
    }
    let place = |z: &[f64], sorted: &[f64]| {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| z[i].total_cmp(&z[j]));
        let mut out = vec![0.0; n];
        for (rank, &who) in order.iter().enumerate() {
            out[who] = sorted[rank];
        }
        out
    };
    Ok((place(&z1, &a), place(&z2, &b)))
}
