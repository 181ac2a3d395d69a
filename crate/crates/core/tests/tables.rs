use copresence_core::psychometrics::instruments::snap_scores;
use copresence_core::psychometrics::synth::{matched_histogram, paired_cohort};
use copresence_core::psychometrics::*;

fn cohort() -> [CohortSummary; 4] {
    let (c, _) = bundled_reference();
    Factor::ALL.map(|f| c.summary(f).unwrap().unwrap())
}

#[test]
fn every_printed_p_reproduces() {
    let c = cohort();
    let (_, refs) = bundled_reference();
    let mut cells = 0;
    for study in &refs {
        for f in Factor::ALL {
            let (Some(summary), Some(printed)) = (study.summary(f), study.printed_p[f as usize]) else { continue };
            let p = ttest_two_sample_summary(&c[f as usize], &summary.unwrap(), true).unwrap().p_two_sided;
            assert!((p - printed).abs() <= 5e-5, "{} {:?}: {p} vs {printed}", study.label, f);
            cells += 1;
        }
    }
    assert_eq!(cells, 106);
}

#[test]
fn cohort_table_summaries() {
    let rows: Vec<FactorScores> = bundled_sm1().iter().map(snap_scores).collect();
    let expect = [(57.2, 26.6), (49.0, 22.4), (63.3, 18.7), (59.5, 21.6)];
    for f in Factor::ALL {
        let col: Vec<f64> = rows.iter().map(|r| r.get(f)).collect();
        let s = cohort_summary(&col).unwrap();
        let (m, sd) = expect[f as usize];
        assert!((s.mean - m).abs() <= 0.05, "{f:?} mean {}", s.mean);
        assert!((s.sd - sd).abs() <= 0.15, "{f:?} sd {}", s.sd);
    }
}

#[test]
fn printed_means_alone_miss_positive_mood() {
    // the whole-percent rounding in the table moves the P mean by about 0.08
    let col: Vec<f64> = bundled_sm1().iter().map(|r| r.p).collect();
    let s = cohort_summary(&col).unwrap();
    assert!((s.mean - 63.3).abs() > 0.05);
}

#[test]
fn complete_mte_rate() {
    let complete = bundled_sm1().iter().filter(|r| complete_mte(r)).count();
    assert!((16..=18).contains(&complete), "{complete}");
    let snapped = bundled_sm1().iter().map(snap_scores).filter(complete_mte).count();
    assert_eq!(snapped, complete);
}

#[test]
fn intensity_bins() {
    let (_, refs) = bundled_reference();
    let results = compare_to_reference(&cohort(), &refs, 0.05).unwrap();
    let s = summarize(&results);
    assert_eq!(s.more_intense_all, 3);
    assert_eq!(s.more_intense_two, 6);
    assert_eq!(s.indistinguishable_all, 3);
    assert_eq!(s.indistinguishable_three, 4);
    assert_eq!(s.less_intense_two, 1);
    assert_eq!(s.less_intense_most, 10);
    assert_eq!(s.mixed, 0);
    let by_label = |l: &str| results.iter().find(|r| r.label == l).unwrap();
    assert_eq!(by_label("Bar '18, MeO-DMT").class, IntensityClass::MoreIntenseAll);
    assert_eq!(by_label("Nich '18, psilo (21mg)").indistinguishable, 4);
    assert_eq!(by_label("Carb '18, dextromethorphan").class, IntensityClass::LessIntenseTwo);
}

#[test]
fn communitas_checks() {
    let sum: f64 = bundled_sm5().iter().take(8).map(|i| i.mean).sum();
    assert!((sum - 44.1).abs() <= 0.1 + 1e-9, "{sum}");
    let ours = CohortSummary::new(58, 44.14, 6.87).unwrap();
    let kettner = CohortSummary::new(886, 39.58, 11.23).unwrap();
    let p = ttest_two_sample_summary(&ours, &kettner, true).unwrap().p_two_sided;
    assert!((p - 0.002).abs() <= 0.001, "{p}");
}

#[test]
fn ics_shift_is_significant() {
    let pre = matched_histogram(1.2, 1.5, 54, 6, 0.05).unwrap();
    let post = matched_histogram(2.9, 1.4, 54, 6, 0.05).unwrap();
    let mut below = 0;
    for seed in 0..100 {
        let (a, b) = paired_cohort(&pre, &post, 0.5, seed).unwrap();
        let r = wilcoxon_signed_rank(&a, &b).unwrap();
        assert!(!r.exact);
        assert!(r.p_two_sided < 1e-4, "seed {seed}: {}", r.p_two_sided);
        if r.p_two_sided < 1e-6 {
            below += 1;
        }
    }
    assert!(below >= 90, "{below}/100");
}

#[test]
fn forstmann_comparison_is_loose() {
    let post = CohortSummary::new(54, 2.9, 1.4).unwrap();
    let theirs = CohortSummary::new(450, 2.8, 1.3).unwrap();
    let p = ttest_two_sample_summary(&post, &theirs, true).unwrap().p_two_sided;
    assert!((0.40..=0.65).contains(&p), "{p}");
}
