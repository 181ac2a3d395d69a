//! Bundled published tables and loaders for questionnaire exports.

use std::io::Read;

use serde::{Deserialize, Serialize};

use super::instruments::{score_ics, FactorScores, Meq30Response};
use super::reference::ReferenceStudy;
use super::PsychError;

const SM1: &str = include_str!("../../data/table_sm1.csv");
const REFERENCE: &str = include_str!("../../data/reference_meq30.csv");
const SM5: &str = include_str!("../../data/table_sm5.csv");

fn csv_err(e: csv::Error) -> PsychError {
    let line = e.position().map_or(0, |p| p.line());
    PsychError::Csv { line, message: e.to_string() }
}

fn field<'a>(rec: &'a csv::StringRecord, i: usize) -> Result<&'a str, PsychError> {
    rec.get(i).ok_or_else(|| PsychError::Csv { line: line_of(rec), message: format!("missing column {}", i + 1) })
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

fn number(rec: &csv::StringRecord, i: usize) -> Result<f64, PsychError> {
    let raw = field(rec, i)?.trim();
    raw.parse().map_err(|_| PsychError::Csv { line: line_of(rec), message: format!("not a number: {raw:?}") })
}

fn optional(rec: &csv::StringRecord, i: usize) -> Result<Option<f64>, PsychError> {
    if field(rec, i)?.trim().is_empty() {
        Ok(None)
    } else {
        number(rec, i).map(Some)
    }
}

/// Reads every record and checks the header against `expected`.
fn records<R: Read>(input: R, expected: &[String]) -> Result<Vec<csv::StringRecord>, PsychError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = rdr.headers().map_err(csv_err)?.clone();
    let got: Vec<&str> = header.iter().collect();
    if got != expected.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(PsychError::Csv { line: 1, message: format!("expected header {}", expected.join(",")) });
    }
    rdr.records().map(|r| r.map_err(csv_err)).collect()
}

fn item_header(count: usize) -> Vec<String> {
    std::iter::once("participant_id".to_string()).chain((1..=count).map(|i| format!("item{i}"))).collect()
}

fn tag_line(e: PsychError, line: u64) -> PsychError {
    match e {
        PsychError::Csv { .. } => e,
        other => PsychError::Csv { line, message: other.to_string() },
    }
}

/// Factor scores per participant as printed in the cohort table.
pub fn bundled_sm1() -> Vec<FactorScores> {
    let header: Vec<String> = ["participant", "I", "M", "P", "T"].map(String::from).to_vec();
    records(SM1.as_bytes(), &header)
        .and_then(|recs| {
            recs.iter()
                .map(|r| Ok(FactorScores::from_array([number(r, 1)?, number(r, 2)?, number(r, 3)?, number(r, 4)?])))
                .collect()
        })
        .expect("bundled table is well formed")
}

/// The cohort row and the comparison studies of the reference table.
pub fn bundled_reference() -> (ReferenceStudy, Vec<ReferenceStudy>) {
    let (cohort, refs) = load_reference(REFERENCE.as_bytes()).expect("bundled table is well formed");
    (cohort.expect("cohort row present"), refs)
}

/// Reads a reference table: `label,role,n` then `<F>_mean,<F>_sd,<F>_p`
/// for F in I, M, P, T. Blank cells mark missing factors. Rows whose role
/// is `cohort` are returned separately (the last one wins).
pub fn load_reference<R: Read>(input: R) -> Result<(Option<ReferenceStudy>, Vec<ReferenceStudy>), PsychError> {
    let mut header = vec!["label".to_string(), "role".into(), "n".into()];
    for f in ["I", "M", "P", "T"] {
        header.extend([format!("{f}_mean"), format!("{f}_sd"), format!("{f}_p")]);
    }
    let mut cohort = None;
    let mut refs = Vec::new();
    for r in &records(input, &header)? {
        let study = parse_reference(r)?;
        match field(r, 1)? {
            "cohort" => cohort = Some(study),
            _ => refs.push(study),
        }
    }
    Ok((cohort, refs))
}

/// `participant_id,I,M,P,T` factor scores in percent of maximum.
pub fn load_factor_scores<R: Read>(input: R) -> Result<Vec<(String, FactorScores)>, PsychError> {
    let header: Vec<String> = ["participant_id", "I", "M", "P", "T"].map(String::from).to_vec();
    records(input, &header)?
        .iter()
        .map(|r| {
            let mut v = [0.0; 4];
            for (i, slot) in v.iter_mut().enumerate() {
                *slot = number(r, i + 1)?;
                if !(0.0..=100.0).contains(slot) {
                    return Err(PsychError::Csv {
                        line: line_of(r),
                        message: format!("factor {} out of range: {slot}", ["I", "M", "P", "T"][i]),
                    });
                }
            }
            Ok((field(r, 0)?.to_string(), FactorScores::from_array(v)))
        })
        .collect()
}

fn parse_reference(r: &csv::StringRecord) -> Result<ReferenceStudy, PsychError> {
    let mut factors = [None; 4];
    let mut printed_p = [None; 4];
    for f in 0..4 {
        let base = 3 + 3 * f;
        factors[f] = match (optional(r, base)?, optional(r, base + 1)?) {
            (Some(m), Some(s)) => Some((m, s)),
            _ => None,
        };
        printed_p[f] = optional(r, base + 2)?;
    }
    Ok(ReferenceStudy { label: field(r, 0)?.to_string(), n: number(r, 2)? as usize, factors, printed_p })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sm5Item {
    pub item: usize,
    pub statement: String,
    pub mean: f64,
    pub sd: f64,
}

pub fn bundled_sm5() -> Vec<Sm5Item> {
    let header: Vec<String> = ["item", "statement", "mean", "sd"].map(String::from).to_vec();
    records(SM5.as_bytes(), &header)
        .and_then(|recs| {
            recs.iter()
                .map(|r| {
                    Ok(Sm5Item {
                        item: number(r, 0)? as usize,
                        statement: field(r, 1)?.to_string(),
                        mean: number(r, 2)?,
                        sd: number(r, 3)?,
                    })
                })
                .collect()
        })
        .expect("bundled table is well formed")
}

fn load_items<R: Read>(input: R, count: usize) -> Result<Vec<(String, Vec<f64>)>, PsychError> {
    records(input, &item_header(count))?
        .iter()
        .map(|r| {
            let items = (1..=count).map(|i| number(r, i)).collect::<Result<Vec<_>, _>>()?;
            Ok((field(r, 0)?.to_string(), items))
        })
        .collect()
}

/// `participant_id,item1..item30`.
pub fn load_meq30<R: Read>(input: R) -> Result<Vec<(String, Meq30Response)>, PsychError> {
    load_items(input, 30)?
        .into_iter()
        .enumerate()
        .map(|(row, (id, items))| {
            let line = row as u64 + 2;
            let ints = items
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    if v.fract() == 0.0 && (0.0..=5.0).contains(&v) {
                        Ok(v as u8)
                    } else {
                        Err(PsychError::ItemRange { index: i + 1, value: v, min: 0.0, max: 5.0 })
                    }
                })
                .collect::<Result<Vec<u8>, _>>()
                .map_err(|e| tag_line(e, line))?;
            Ok((id, Meq30Response::new(ints).map_err(|e| tag_line(e, line))?))
        })
        .collect()
}

/// `participant_id,item1..item16`; values are validated when scored.
pub fn load_edi<R: Read>(input: R) -> Result<Vec<(String, Vec<f64>)>, PsychError> {
    load_items(input, 16)
}

/// `participant_id,item1..item10`; values are validated when scored.
pub fn load_communitas<R: Read>(input: R) -> Result<Vec<(String, Vec<f64>)>, PsychError> {
    load_items(input, 10)
}

/// `participant_id,pre_choice,post_choice` with picture letters.
pub fn load_ics<R: Read>(input: R) -> Result<Vec<(String, u8, u8)>, PsychError> {
    let header: Vec<String> = ["participant_id", "pre_choice", "post_choice"].map(String::from).to_vec();
    records(input, &header)?
        .iter()
        .map(|r| {
            let line = line_of(r);
            let pre = score_ics(field(r, 1)?).map_err(|e| tag_line(e, line))?;
            let post = score_ics(field(r, 2)?).map_err(|e| tag_line(e, line))?;
            Ok((field(r, 0)?.to_string(), pre, post))
        })
        .collect()
}
