use serde::{Deserialize, Serialize};

use super::special::t_two_sided;
use super::PsychError;

/// Size, mean and sample standard deviation (n - 1 denominator).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CohortSummary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
}

impl CohortSummary {
    pub fn new(n: usize, mean: f64, sd: f64) -> Result<Self, PsychError> {
        if n < 2 {
            return Err(PsychError::Domain(format!("a cohort needs at least 2 members, got {n}")));
        }
        if !(sd >= 0.0) || !mean.is_finite() {
            return Err(PsychError::Domain(format!("invalid summary mean {mean}, sd {sd}")));
        }
        Ok(Self { n, mean, sd })
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn sample_var(values: &[f64], m: f64) -> f64 {
    values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64
}

pub fn cohort_summary(values: &[f64]) -> Result<CohortSummary, PsychError> {
    if values.len() < 2 {
        return Err(PsychError::Domain(format!("a cohort needs at least 2 members, got {}", values.len())));
    }
    let m = mean(values);
    Ok(CohortSummary { n: values.len(), mean: m, sd: sample_var(values, m).sqrt() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    pub p_two_sided: f64,
}

fn finish(diff: f64, se: f64, df: f64) -> Result<TTest, PsychError> {
    if !(df > 0.0) {
        return Err(PsychError::Domain(format!("degrees of freedom must be positive, got {df}")));
    }
    if se == 0.0 {
        // both spreads zero: equal means are indistinguishable, unequal ones infinitely far apart
        return Ok(if diff == 0.0 {
            TTest { t: 0.0, df, p_two_sided: 1.0 }
        } else {
            TTest { t: f64::INFINITY.copysign(diff), df, p_two_sided: 0.0 }
        });
    }
    let t = diff / se;
    Ok(TTest { t, df, p_two_sided: t_two_sided(t, df) })
}

/// Independent two-sample t-test from summaries; pooled variance unless
/// `pooled` is false (Welch with Satterthwaite degrees of freedom).
pub fn ttest_two_sample_summary(a: &CohortSummary, b: &CohortSummary, pooled: bool) -> Result<TTest, PsychError> {
    let (na, nb) = (a.n as f64, b.n as f64);
    let (va, vb) = (a.sd * a.sd, b.sd * b.sd);
    let diff = a.mean - b.mean;
    if pooled {
        let df = na + nb - 2.0;
        let sp2 = ((na - 1.0) * va + (nb - 1.0) * vb) / df;
        finish(diff, (sp2 * (1.0 / na + 1.0 / nb)).sqrt(), df)
    } else {
        let (qa, qb) = (va / na, vb / nb);
        let se2 = qa + qb;
        let df = if se2 == 0.0 {
            na + nb - 2.0
        } else {
            se2 * se2 / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0))
        };
        finish(diff, se2.sqrt(), df)
    }
}

pub fn ttest_one_sample(values: &[f64], mu0: f64) -> Result<TTest, PsychError> {
    let s = cohort_summary(values)?;
    finish(s.mean - mu0, s.sd / (s.n as f64).sqrt(), (s.n - 1) as f64)
}

/// Internal consistency of a participants-by-items matrix.
pub fn cronbach_alpha(rows: &[Vec<f64>]) -> Result<f64, PsychError> {
    let n = rows.len();
    let k = rows.first().map_or(0, Vec::len);
    if n < 2 || k < 2 {
        return Err(PsychError::Domain(format!("need at least 2 participants and 2 items, got {n}x{k}")));
    }
    if rows.iter().any(|r| r.len() != k) {
        return Err(PsychError::Domain("ragged item matrix".into()));
    }
    let item_var_sum: f64 = (0..k)
        .map(|j| {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            sample_var(&col, mean(&col))
        })
        .sum();
    let totals: Vec<f64> = rows.iter().map(|r| r.iter().sum()).collect();
    let total_var = sample_var(&totals, mean(&totals));
    if total_var == 0.0 {
        return Err(PsychError::Degenerate("row totals have zero variance".into()));
    }
    let k = k as f64;
    Ok(k / (k - 1.0) * (1.0 - item_var_sum / total_var))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regression {
    pub r: f64,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Pearson correlation and the least-squares line of y on x.
pub fn pearson_and_ols(x: &[f64], y: &[f64]) -> Result<Regression, PsychError> {
    if x.len() != y.len() {
        return Err(PsychError::Domain(format!("length mismatch {} vs {}", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(PsychError::Domain(format!("need at least 3 points, got {}", x.len())));
    }
    let (mx, my) = (mean(x), mean(y));
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(PsychError::Domain("x is constant".into()));
    }
    if syy == 0.0 {
        return Err(PsychError::Domain("y is constant".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - (intercept + slope * a)).powi(2)).sum();
    Ok(Regression {
        r: (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0),
        slope,
        intercept,
        r_squared: 1.0 - ss_res / syy,
    })
}
