//! Questionnaire scoring and the cohort comparison against published studies.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context};
use copresence_core::psychometrics::{
    bundled_reference, cohort_summary, communitas_scores, compare_to_reference, complete_mte, cronbach_alpha,
    load_communitas, load_edi, load_factor_scores, load_ics, load_meq30, load_reference, score_edi, score_meq30,
    summarize, wilcoxon_signed_rank, CohortSummary, Factor,
};
use serde_json::{json, Value};

use crate::{print_json, Instrument};

fn open(path: &Path) -> anyhow::Result<File> {
    File::open(path).with_context(|| format!("cannot read {}", path.display()))
}

/// CSV rows go to `out`, or to stdout when there is no file and no JSON.
fn write_rows(out: Option<&Path>, json: bool, header: &[&str], rows: &[Vec<String>]) -> anyhow::Result<()> {
    let sink: Box<dyn Write> = match out {
        Some(p) => Box::new(File::create(p).with_context(|| format!("cannot write {}", p.display()))?),
        None if json => return Ok(()),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn summary_json(values: &[f64]) -> Value {
    match cohort_summary(values) {
        Ok(s) => json!({ "n": s.n, "mean": s.mean, "sd": s.sd }),
        Err(_) => Value::Null,
    }
}

/// Alpha over the given 1-based item columns; `null` when undefined.
fn alpha_json(rows: &[Vec<f64>], items: &[usize]) -> Value {
    let picked: Vec<Vec<f64>> = rows.iter().map(|r| items.iter().map(|&i| r[i - 1]).collect()).collect();
    cronbach_alpha(&picked).map_or(Value::Null, Value::from)
}

fn show(json: bool, summary: &Value, text: String) -> anyhow::Result<()> {
    if json {
        print_json(summary)
    } else {
        eprintln!("{text}");
        Ok(())
    }
}

pub fn score(instrument: Instrument, input: &Path, out: Option<&Path>, json: bool) -> anyhow::Result<()> {
    let file = open(input)?;
    let ctx = || input.display().to_string();
    match instrument {
        Instrument::Meq30 => {
            let rows = load_meq30(file).with_context(ctx)?;
            let scored: Vec<_> = rows.iter().map(|(id, r)| (id, score_meq30(r))).collect();
            let csv_rows: Vec<Vec<String>> = scored
                .iter()
                .map(|(id, s)| std::iter::once(id.to_string()).chain(s.to_array().iter().map(f64::to_string)).collect())
                .collect();
            write_rows(out, json, &["participant_id", "I", "M", "P", "T"], &csv_rows)?;
            let complete = scored.iter().filter(|(_, s)| complete_mte(s)).count();
            let mut factors = serde_json::Map::new();
            for f in Factor::ALL {
                let col: Vec<f64> = scored.iter().map(|(_, s)| s.get(f)).collect();
                factors.insert(f.label().into(), summary_json(&col));
            }
            let summary = json!({ "instrument": "meq30", "n": scored.len(), "factors": factors, "complete_mte": complete });
            show(json, &summary, format!("{} participants, {complete} complete mystical experiences", scored.len()))
        }
        Instrument::Edi => {
            let rows = load_edi(file).with_context(ctx)?;
            let mut csv_rows = Vec::new();
            let (mut dis, mut inf) = (Vec::new(), Vec::new());
            for (id, items) in &rows {
                let s = score_edi(items).with_context(|| format!("{}: participant {id}", input.display()))?;
                dis.push(s.dissolution_mean);
                inf.push(s.inflation_mean);
                csv_rows.push(vec![id.clone(), s.dissolution_mean.to_string(), s.inflation_mean.to_string()]);
            }
            write_rows(out, json, &["participant_id", "dissolution", "inflation"], &csv_rows)?;
            let items: Vec<Vec<f64>> = rows.iter().map(|(_, r)| r.clone()).collect();
            let summary = json!({
                "instrument": "edi",
                "n": rows.len(),
                "dissolution": summary_json(&dis),
                "inflation": summary_json(&inf),
                "alpha_dissolution": alpha_json(&items, &[2, 4, 6, 8, 10, 12, 14, 16]),
                "alpha_inflation": alpha_json(&items, &[1, 3, 5, 7, 9, 11, 13, 15]),
            });
            show(json, &summary, format!("{} participants scored", rows.len()))
        }
        Instrument::Ics => {
            let rows = load_ics(file).with_context(ctx)?;
            let csv_rows: Vec<Vec<String>> = rows
                .iter()
                .map(|(id, a, b)| vec![id.clone(), a.to_string(), b.to_string(), (*b as i32 - *a as i32).to_string()])
                .collect();
            write_rows(out, json, &["participant_id", "pre", "post", "shift"], &csv_rows)?;
            let pre: Vec<f64> = rows.iter().map(|r| r.1 as f64).collect();
            let post: Vec<f64> = rows.iter().map(|r| r.2 as f64).collect();
            let test = wilcoxon_signed_rank(&pre, &post).ok();
            let summary = json!({
                "instrument": "ics",
                "n": rows.len(),
                "pre": summary_json(&pre),
                "post": summary_json(&post),
                "wilcoxon": test,
            });
            let text = match test {
                Some(t) => format!("{} pairs, Wilcoxon p = {:.3e}", rows.len(), t.p_two_sided),
                None => format!("{} pairs, too few non-zero differences for a test", rows.len()),
            };
            show(json, &summary, text)
        }
        Instrument::Communitas => {
            let rows = load_communitas(file).with_context(ctx)?;
            let mut csv_rows = Vec::new();
            let mut totals = Vec::new();
            for (id, items) in &rows {
                let c = communitas_scores(items).with_context(|| format!("{}: participant {id}", input.display()))?;
                totals.push(c.total8);
                csv_rows.push(vec![
                    id.clone(),
                    c.total8.to_string(),
                    c.pct_of_max.to_string(),
                    c.bond_participant.to_string(),
                    c.bond_facilitator.to_string(),
                ]);
            }
            write_rows(out, json, &["participant_id", "total8", "pct_of_max", "bond_participant", "bond_facilitator"], &csv_rows)?;
            let items: Vec<Vec<f64>> = rows.iter().map(|(_, r)| r.clone()).collect();
            let summary = json!({
                "instrument": "communitas",
                "n": rows.len(),
                "total8": summary_json(&totals),
                "alpha": alpha_json(&items, &[1, 2, 3, 4, 5, 6, 7, 8]),
            });
            show(json, &summary, format!("{} participants scored", rows.len()))
        }
    }
}

pub fn compare(scores: &Path, reference: Option<&Path>, alpha: f64, out: Option<&Path>, json: bool) -> anyhow::Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        bail!("--alpha must be in (0, 1), got {alpha}");
    }
    let rows = load_factor_scores(open(scores)?).with_context(|| scores.display().to_string())?;
    let cohort: [CohortSummary; 4] = {
        let mut c = Vec::with_capacity(4);
        for f in Factor::ALL {
            let col: Vec<f64> = rows.iter().map(|(_, s)| s.get(f)).collect();
            c.push(cohort_summary(&col).with_context(|| format!("{}: factor {}", scores.display(), f.label()))?);
        }
        c.try_into().expect("four factors")
    };
    let refs = match reference {
        Some(p) => load_reference(open(p)?).with_context(|| p.display().to_string())?.1,
        None => bundled_reference().1,
    };
    let results = compare_to_reference(&cohort, &refs, alpha)?;

    let mut csv_rows = Vec::new();
    for (study, r) in refs.iter().zip(&results) {
        for c in &r.cells {
            let (mean, sd) = study.factors[c.factor as usize].expect("compared factors are present");
            csv_rows.push(vec![
                r.label.clone(),
                c.factor.label().to_string(),
                study.n.to_string(),
                mean.to_string(),
                sd.to_string(),
                c.test.t.to_string(),
                c.test.df.to_string(),
                c.test.p_two_sided.to_string(),
                serde_json::to_value(c.outcome)?.as_str().unwrap_or_default().to_string(),
                serde_json::to_value(r.class)?.as_str().unwrap_or_default().to_string(),
            ]);
        }
    }
    let header = ["study", "factor", "ref_n", "ref_mean", "ref_sd", "t", "df", "p", "outcome", "class"];
    write_rows(out, json, &header, &csv_rows)?;

    let counts = summarize(&results);
    let summary = json!({
        "cohort": Factor::ALL.map(|f| json!({"factor": f.label(), "n": cohort[f as usize].n, "mean": cohort[f as usize].mean, "sd": cohort[f as usize].sd})),
        "studies": results.len(),
        "alpha": alpha,
        "classes": counts,
    });
    show(
        json,
        &summary,
        format!(
            "{} studies: {} more intense on all factors, {} indistinguishable on all, {} less intense on most",
            results.len(),
            counts.more_intense_all,
            counts.indistinguishable_all,
            counts.less_intense_most
        ),
    )
}
