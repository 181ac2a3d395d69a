use serde::{Deserialize, Serialize};

use super::PsychError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Factor {
    I,
    M,
    P,
    T,
}

impl Factor {
    pub const ALL: [Factor; 4] = [Factor::I, Factor::M, Factor::P, Factor::T];

    pub fn name(self) -> &'static str {
        match self {
            Factor::I => "ineffability",
            Factor::M => "mystical",
            Factor::P => "positive mood",
            Factor::T => "transcendence of time and space",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Factor::I => "I",
            Factor::M => "M",
            Factor::P => "P",
            Factor::T => "T",
        }
    }

    pub fn items(self) -> &'static [usize] {
        MEQ30_FACTORS[self as usize]
    }
}

/// 1-based questionnaire item numbers per factor, in I, M, P, T order.
pub const MEQ30_FACTORS: [&[usize]; 4] = [
    &[3, 10, 29],
    &[4, 5, 6, 9, 14, 15, 16, 18, 20, 21, 23, 24, 25, 26, 28],
    &[2, 8, 12, 17, 27, 30],
    &[1, 7, 11, 13, 19, 22],
];

pub const MEQ30_ITEMS: usize = 30;
pub const MEQ30_MAX: u8 = 5;

fn check_range(items: &[f64], min: f64, max: f64) -> Result<(), PsychError> {
    for (i, &v) in items.iter().enumerate() {
        if !(v >= min && v <= max) {
            return Err(PsychError::ItemRange { index: i + 1, value: v, min, max });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meq30Response {
    items: Vec<u8>,
}

impl Meq30Response {
    pub fn new(items: Vec<u8>) -> Result<Self, PsychError> {
        if items.len() != MEQ30_ITEMS {
            return Err(PsychError::ItemCount { expected: MEQ30_ITEMS, found: items.len() });
        }
        if let Some(i) = items.iter().position(|&v| v > MEQ30_MAX) {
            return Err(PsychError::ItemRange { index: i + 1, value: items[i] as f64, min: 0.0, max: 5.0 });
        }
        Ok(Self { items })
    }

    /// Item by 1-based questionnaire number.
    pub fn item(&self, number: usize) -> u8 {
        self.items[number - 1]
    }

    pub fn items(&self) -> &[u8] {
        &self.items
    }
}

/// Factor means as percent of the maximum item score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorScores {
    pub i: f64,
    pub m: f64,
    pub p: f64,
    pub t: f64,
}

impl FactorScores {
    pub fn get(&self, f: Factor) -> f64 {
        match f {
            Factor::I => self.i,
            Factor::M => self.m,
            Factor::P => self.p,
            Factor::T => self.t,
        }
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        Self { i: v[0], m: v[1], p: v[2], t: v[3] }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.i, self.m, self.p, self.t]
    }
}

fn factor_percent(sum: f64, size: usize) -> f64 {
    sum * 100.0 / (MEQ30_MAX as f64 * size as f64)
}

pub fn score_meq30(r: &Meq30Response) -> FactorScores {
    let mut out = [0.0; 4];
    for f in Factor::ALL {
        let sum: u32 = f.items().iter().map(|&n| r.item(n) as u32).sum();
        out[f as usize] = factor_percent(sum as f64, f.items().len());
    }
    FactorScores::from_array(out)
}

pub const COMPLETE_MTE_THRESHOLD: f64 = 60.0;

/// All four factors at or above 60% of maximum.
pub fn complete_mte(f: &FactorScores) -> bool {
    f.to_array().iter().all(|&v| v >= COMPLETE_MTE_THRESHOLD)
}

/// Maps a factor score printed to whole percent back onto the set of values
/// the instrument can produce (integer item sums), undoing the rounding.
pub fn snap_to_lattice(f: Factor, printed: f64) -> f64 {
    let size = f.items().len();
    let steps = MEQ30_MAX as f64 * size as f64;
    let sum = (printed * steps / 100.0).round().clamp(0.0, steps);
    factor_percent(sum, size)
}

pub fn snap_scores(printed: &FactorScores) -> FactorScores {
    let mut out = [0.0; 4];
    for f in Factor::ALL {
        out[f as usize] = snap_to_lattice(f, printed.get(f));
    }
    FactorScores::from_array(out)
}

pub const EDI_ITEMS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdiScores {
    pub dissolution_mean: f64,
    pub inflation_mean: f64,
}

/// Even questionnaire positions are dissolution statements, odd are inflation.
pub fn score_edi(items: &[f64]) -> Result<EdiScores, PsychError> {
    if items.len() != EDI_ITEMS {
        return Err(PsychError::ItemCount { expected: EDI_ITEMS, found: items.len() });
    }
    check_range(items, 0.0, 100.0)?;
    let mean_at = |offset: usize| items.iter().skip(offset).step_by(2).sum::<f64>() / (EDI_ITEMS / 2) as f64;
    Ok(EdiScores { dissolution_mean: mean_at(1), inflation_mean: mean_at(0) })
}

/// Picture letter a..f to score 0..5.
pub fn score_ics(choice: &str) -> Result<u8, PsychError> {
    let trimmed = choice.trim();
    let mut chars = trimmed.chars();
    match (chars.next().map(|c| c.to_ascii_lowercase()), chars.next()) {
        (Some(c @ 'a'..='f'), None) => Ok(c as u8 - b'a'),
        _ => Err(PsychError::IcsChoice(choice.to_string())),
    }
}

pub const COMMUNITAS_ITEMS: usize = 10;
pub const COMMUNITAS_MAX_TOTAL: f64 = 56.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Communitas {
    /// Sum of items 1 to 8, range 8..=56.
    pub total8: f64,
    pub pct_of_max: f64,
    pub bond_participant: f64,
    pub bond_facilitator: f64,
}

pub fn communitas_scores(items: &[f64]) -> Result<Communitas, PsychError> {
    if items.len() != COMMUNITAS_ITEMS {
        return Err(PsychError::ItemCount { expected: COMMUNITAS_ITEMS, found: items.len() });
    }
    check_range(items, 1.0, 7.0)?;
    let total8: f64 = items[..8].iter().sum();
    Ok(Communitas {
        total8,
        pct_of_max: total8 / COMMUNITAS_MAX_TOTAL * 100.0,
        bond_participant: items[8],
        bond_facilitator: items[9],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn resp(f: impl Fn(usize) -> u8) -> Meq30Response {
        Meq30Response::new((1..=30).map(f).collect()).unwrap()
    }

    #[test]
    fn factors_partition_the_items() {
        let mut all: Vec<usize> = MEQ30_FACTORS.iter().flat_map(|s| s.iter().copied()).collect();
        all.sort();
        assert_eq!(all, (1..=30).collect::<Vec<_>>());
        assert_eq!(MEQ30_FACTORS.map(|s| s.len()), [3, 15, 6, 6]);
    }

    #[test]
    fn meq30_extremes_and_mapping() {
        assert_eq!(score_meq30(&resp(|_| 0)).to_array(), [0.0; 4]);
        assert_eq!(score_meq30(&resp(|_| 5)).to_array(), [100.0; 4]);
        let r = resp(|n| match n {
            3 => 3,
            10 => 4,
            29 => 5,
            _ => 0,
        });
        // mean 4 out of 5
        assert_eq!(score_meq30(&r).to_array(), [80.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn meq30_validation() {
        assert_eq!(Meq30Response::new(vec![0; 29]), Err(PsychError::ItemCount { expected: 30, found: 29 }));
        let mut v = vec![0u8; 30];
        v[6] = 6;
        assert!(matches!(Meq30Response::new(v), Err(PsychError::ItemRange { index: 7, .. })));
    }

    #[test]
    fn mte_threshold() {
        assert!(complete_mte(&FactorScores::from_array([60.0; 4])));
        assert!(!complete_mte(&FactorScores::from_array([100.0, 59.9, 100.0, 100.0])));
    }

    #[test]
    fn lattice_snapping() {
        // P has 6 items: steps of 100/30
        assert_eq!(snap_to_lattice(Factor::P, 63.0), 19.0 * 100.0 / 30.0);
        assert_eq!(snap_to_lattice(Factor::I, 73.0), 11.0 * 100.0 / 15.0);
        assert_eq!(snap_to_lattice(Factor::M, 100.0), 100.0);
        assert_eq!(snap_to_lattice(Factor::M, 0.0), 0.0);
    }

    #[test]
    fn edi_mapping() {
        let z = score_edi(&[0.0; 16]).unwrap();
        assert_eq!((z.dissolution_mean, z.inflation_mean), (0.0, 0.0));
        let even: Vec<f64> = (1..=16).map(|n| if n % 2 == 0 { 100.0 } else { 0.0 }).collect();
        let s = score_edi(&even).unwrap();
        assert_eq!((s.dissolution_mean, s.inflation_mean), (100.0, 0.0));
        let full = score_edi(&[100.0; 16]).unwrap();
        assert_eq!((full.dissolution_mean, full.inflation_mean), (100.0, 100.0));
        assert!(matches!(score_edi(&[101.0; 16]), Err(PsychError::ItemRange { index: 1, .. })));
    }

    #[test]
    fn ics_letters() {
        assert_eq!(score_ics("a"), Ok(0));
        assert_eq!(score_ics("f"), Ok(5));
        assert_eq!(score_ics("C"), Ok(2));
        assert!(score_ics("g").is_err());
        assert!(score_ics("ab").is_err());
        assert!(score_ics("").is_err());
    }

    #[test]
    fn communitas_totals() {
        let top = communitas_scores(&[7.0; 10]).unwrap();
        assert_eq!((top.total8, top.pct_of_max), (56.0, 100.0));
        assert_eq!(communitas_scores(&[1.0; 10]).unwrap().total8, 8.0);
        assert!(communitas_scores(&[0.0; 10]).is_err());
        assert!(communitas_scores(&[4.0; 9]).is_err());
    }

    proptest! {
        #[test]
        fn meq30_is_monotone(items in prop::collection::vec(0u8..=5, 30), idx in 0usize..30) {
            let base = Meq30Response::new(items.clone()).unwrap();
            let mut raised = items;
            raised[idx] = (raised[idx] + 1).min(5);
            let before = score_meq30(&base).to_array();
            let after = score_meq30(&Meq30Response::new(raised).unwrap()).to_array();
            for f in 0..4 {
                prop_assert!(after[f] >= before[f]);
            }
        }

        #[test]
        fn snapped_values_are_reachable(sum in 0u32..=75) {
            let exact = factor_percent(sum as f64, 15);
            prop_assert_eq!(snap_to_lattice(Factor::M, exact.round()), exact);
        }
    }
}
