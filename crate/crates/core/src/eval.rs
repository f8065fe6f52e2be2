//! Classification evaluation over resolved forecast/actual pairs.
//!
//! Probabilities convert to classes by strict comparison against a
//! threshold τ (`p > τ` predicts occupied). Precision, recall and F1 come
//! from the confusion counts; a zero denominator yields an explicit
//! undefined marker (`None`) rather than a silent zero, because
//! all-negative stretches are common at night and must not poison
//! aggregates.

use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("pair lists are misaligned: {0}")]
    MisalignedPairs(String),
}

/// Confusion counts at one threshold.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub true_positives: u64,
    pub false_positives: u64,
    pub true_negatives: u64,
    pub false_negatives: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.true_positives + self.false_positives + self.true_negatives + self.false_negatives
    }

    pub fn predicted_positives(&self) -> u64 {
        self.true_positives + self.false_positives
    }
}

/// Precision/recall/F1 with explicit undefined markers.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Metrics {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

/// One row of a threshold sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdReport {
    pub threshold: f64,
    pub counts: ConfusionCounts,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

/// Predicted class at threshold τ: occupied iff the probability is strictly
/// higher than τ.
pub fn classify(probability: f64, threshold: f64) -> bool {
    probability > threshold
}

/// Tally confusion counts for `(probability, actual)` pairs at one
/// threshold. Empty input gives all-zero counts.
pub fn count(pairs: &[(f64, bool)], threshold: f64) -> ConfusionCounts {
    let mut counts = ConfusionCounts::default();
    for &(probability, actual) in pairs {
        match (classify(probability, threshold), actual) {
            (true, true) => counts.true_positives += 1,
            (true, false) => counts.false_positives += 1,
            (false, false) => counts.true_negatives += 1,
            (false, true) => counts.false_negatives += 1,
        }
    }
    counts
}

/// p = TP/(TP+FP), r = TP/(TP+FN), F1 = 2pr/(p+r). Any zero denominator
/// produces `None`, which propagates to F1.
pub fn metrics(counts: &ConfusionCounts) -> Metrics {
    let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
    let precision = ratio(
        counts.true_positives,
        counts.true_positives + counts.false_positives,
    );
    let recall = ratio(
        counts.true_positives,
        counts.true_positives + counts.false_negatives,
    );
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    Metrics {
        precision,
        recall,
        f1,
    }
}

/// The default threshold grid: 0.30 to 0.50 in steps of 0.05.
pub fn default_grid() -> Vec<f64> {
    (30..=50).step_by(5).map(|t| t as f64 / 100.0).collect()
}

/// One report per threshold in `grid`.
pub fn sweep(pairs: &[(f64, bool)], grid: &[f64]) -> Vec<ThresholdReport> {
    debug_assert!(!grid.is_empty(), "threshold grid must be non-empty");
    debug_assert!(grid.iter().all(|t| (0.0..=1.0).contains(t)));
    grid.iter()
        .map(|&threshold| {
            let counts = count(pairs, threshold);
            let m = metrics(&counts);
            ThresholdReport {
                threshold,
                counts,
                precision: m.precision,
                recall: m.recall,
                f1: m.f1,
            }
        })
        .collect()
}

/// One threshold's comparison of the two models.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub threshold: f64,
    pub streaming: ThresholdReport,
    pub batch: ThresholdReport,
    /// `streaming F1 − batch F1` when both are defined.
    pub f1_delta: Option<f64>,
}

impl ComparisonRow {
    /// Whether the streaming model is strictly better at this threshold.
    ///
    /// When both F1 scores are defined this is a plain `>`. A defined,
    /// positive streaming F1 also beats an undefined batch F1: undefined
    /// means the batch model predicted no positives at all (or hit none),
    /// so any real positive predictive performance strictly improves on it.
    /// An undefined streaming F1 never counts as better.
    pub fn streaming_strictly_better(&self) -> bool {
        match (self.streaming.f1, self.batch.f1) {
            (Some(s), Some(b)) => s > b,
            (Some(s), None) => s > 0.0,
            (None, _) => false,
        }
    }

    /// Whether the streaming model is at least as good (ties and pairwise
    /// undefined F1 count as "not worse").
    pub fn streaming_not_worse(&self) -> bool {
        match (self.streaming.f1, self.batch.f1) {
            (Some(s), Some(b)) => s >= b,
            (Some(_), None) => true,
            (None, None) => true,
            (None, Some(_)) => false,
        }
    }
}

/// Streaming-vs-batch comparison over a threshold grid.
#[derive(Debug, Clone)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
    pub pairs_evaluated: usize,
}

/// Compare two aligned pair lists over a threshold grid. Alignment means
/// the same targets in the same order, which implies equal length and
/// identical actual labels.
pub fn compare(
    streaming: &[(f64, bool)],
    batch: &[(f64, bool)],
    grid: &[f64],
) -> Result<ComparisonTable, EvalError> {
    if streaming.len() != batch.len() {
        return Err(EvalError::MisalignedPairs(format!(
            "streaming has {} pairs, batch has {}",
            streaming.len(),
            batch.len()
        )));
    }
    if let Some(i) = (0..streaming.len()).find(|&i| streaming[i].1 != batch[i].1) {
        return Err(EvalError::MisalignedPairs(format!(
            "actual labels disagree at index {i}"
        )));
    }
    let streaming_reports = sweep(streaming, grid);
    let batch_reports = sweep(batch, grid);
    let rows = streaming_reports
        .into_iter()
        .zip(batch_reports)
        .map(|(s, b)| {
            let f1_delta = match (s.f1, b.f1) {
                (Some(sf), Some(bf)) => Some(sf - bf),
                _ => None,
            };
            ComparisonRow {
                threshold: s.threshold,
                streaming: s,
                batch: b,
                f1_delta,
            }
        })
        .collect();
    Ok(ComparisonTable {
        rows,
        pairs_evaluated: streaming.len(),
    })
}

impl ComparisonTable {
    pub fn thresholds_streaming_not_worse(&self) -> usize {
        self.rows.iter().filter(|r| r.streaming_not_worse()).count()
    }

    pub fn thresholds_streaming_strictly_better(&self) -> usize {
        self.rows
            .iter()
            .filter(|r| r.streaming_strictly_better())
            .count()
    }

    /// Human-readable outcome summary.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "evaluated {} resolved forecasts over {} thresholds",
            self.pairs_evaluated,
            self.rows.len()
        );
        let _ = writeln!(
            out,
            "streaming F1 >= batch F1 at {} of {} thresholds",
            self.thresholds_streaming_not_worse(),
            self.rows.len()
        );
        for (model, pick) in [
            ("streaming", best_f1(self.rows.iter().map(|r| &r.streaming))),
            ("batch", best_f1(self.rows.iter().map(|r| &r.batch))),
        ] {
            match pick {
                Some((threshold, f1)) => {
                    let _ = writeln!(out, "{model}: best F1 {f1:.4} at threshold {threshold}");
                }
                None => {
                    let _ = writeln!(out, "{model}: no threshold produced a defined F1");
                }
            }
        }
        out
    }
}

/// The threshold with the highest defined F1, if any.
pub fn best_f1<'a, I: Iterator<Item = &'a ThresholdReport>>(reports: I) -> Option<(f64, f64)> {
    reports
        .filter_map(|r| r.f1.map(|f1| (r.threshold, f1)))
        .max_by(|a, b| a.1.total_cmp(&b.1))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "NA".into())
}

/// Report CSV: `threshold,model,tp,fp,tn,fn,precision,recall,f1`, `NA` for
/// undefined metrics.
pub const REPORT_CSV_HEADER: &str = "threshold,model,tp,fp,tn,fn,precision,recall,f1";

fn write_report_row(out: &mut String, model: &str, r: &ThresholdReport) {
    let _ = writeln!(
        out,
        "{},{},{},{},{},{},{},{},{}",
        r.threshold,
        model,
        r.counts.true_positives,
        r.counts.false_positives,
        r.counts.true_negatives,
        r.counts.false_negatives,
        fmt_opt(r.precision),
        fmt_opt(r.recall),
        fmt_opt(r.f1),
    );
}

/// Serialize a single-model sweep as report CSV.
pub fn write_sweep_csv(model: &str, reports: &[ThresholdReport]) -> String {
    let mut out = String::from(REPORT_CSV_HEADER);
    out.push('\n');
    for r in reports {
        write_report_row(&mut out, model, r);
    }
    out
}

/// Serialize a comparison table as report CSV, streaming rows then batch
/// rows per threshold.
pub fn write_comparison_csv(table: &ComparisonTable) -> String {
    let mut out = String::from(REPORT_CSV_HEADER);
    out.push('\n');
    for row in &table.rows {
        write_report_row(&mut out, "streaming", &row.streaming);
        write_report_row(&mut out, "batch", &row.batch);
    }
    out
}

/// PR-curve export for external plotting: `threshold,precision,recall`.
pub fn write_pr_curve_csv(reports: &[ThresholdReport]) -> String {
    let mut out = String::from("threshold,precision,recall\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{}",
            r.threshold,
            fmt_opt(r.precision),
            fmt_opt(r.recall)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn classify_is_strict() {
        assert!(classify(0.51, 0.5));
        assert!(!classify(0.5, 0.5));
        assert!(!classify(0.0, 0.0));
        assert!(classify(1.0, 0.0));
        assert!(!classify(1.0, 1.0));
    }

    #[test]
    fn count_enumeration() {
        let pairs = [(0.9, true), (0.9, false), (0.1, true), (0.1, false)];
        let c = count(&pairs, 0.5);
        assert_eq!(
            c,
            ConfusionCounts {
                true_positives: 1,
                false_positives: 1,
                true_negatives: 1,
                false_negatives: 1,
            }
        );
        assert_eq!(c.total(), 4);
    }

    #[test]
    fn zero_probabilities_never_predict_positive() {
        let pairs = [(0.0, true), (0.0, false), (0.0, true)];
        let c = count(&pairs, 0.3);
        assert_eq!(c.true_positives, 0);
        assert_eq!(c.false_positives, 0);
        assert_eq!(c.false_negatives, 2);
        assert_eq!(c.true_negatives, 1);
    }

    #[test]
    fn empty_input_gives_zero_counts() {
        let c = count(&[], 0.5);
        assert_eq!(c, ConfusionCounts::default());
        let m = metrics(&c);
        assert_eq!(m.precision, None);
        assert_eq!(m.recall, None);
        assert_eq!(m.f1, None);
    }

    #[test]
    fn metrics_direct_formula() {
        let c = ConfusionCounts {
            true_positives: 2,
            false_positives: 1,
            true_negatives: 0,
            false_negatives: 2,
        };
        let m = metrics(&c);
        assert_eq!(m.precision, Some(2.0 / 3.0));
        assert_eq!(m.recall, Some(0.5));
        assert!((m.f1.unwrap() - 4.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_counts_are_undefined_not_zero() {
        // No predicted positives at all: precision undefined, recall 0,
        // F1 undefined.
        let c = ConfusionCounts {
            true_positives: 0,
            false_positives: 0,
            true_negatives: 5,
            false_negatives: 3,
        };
        let m = metrics(&c);
        assert_eq!(m.precision, None);
        assert_eq!(m.recall, Some(0.0));
        assert_eq!(m.f1, None);

        // p and r defined but both zero: harmonic mean denominator is zero.
        let c = ConfusionCounts {
            true_positives: 0,
            false_positives: 2,
            true_negatives: 5,
            false_negatives: 3,
        };
        let m = metrics(&c);
        assert_eq!(m.precision, Some(0.0));
        assert_eq!(m.recall, Some(0.0));
        assert_eq!(m.f1, None);
    }

    #[test]
    fn default_grid_is_five_thresholds() {
        assert_eq!(default_grid(), vec![0.30, 0.35, 0.40, 0.45, 0.50]);
    }

    #[test]
    fn sweep_produces_one_report_per_threshold() {
        let pairs = [(0.32, true), (0.45, false), (0.6, true), (0.2, false)];
        let reports = sweep(&pairs, &default_grid());
        assert_eq!(reports.len(), 5);
        assert_eq!(reports[0].threshold, 0.30);
        assert_eq!(reports[4].threshold, 0.50);
        // Singleton grid {0.5} equals the standard-threshold evaluation.
        let single = sweep(&pairs, &[0.5]);
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].counts, count(&pairs, 0.5));
    }

    #[test]
    fn oracle_equivalence_on_random_pairs() {
        // Brute-force re-count by an independent loop, exact equality.
        let mut rng = StdRng::seed_from_u64(100);
        let pairs: Vec<(f64, bool)> = (0..1000)
            .map(|_| (rng.gen::<f64>(), rng.gen_bool(0.3)))
            .collect();
        let grid: Vec<f64> = (0..=20).map(|t| t as f64 / 20.0).collect();
        for &threshold in &grid {
            let fast = count(&pairs, threshold);
            let (mut tp, mut fp, mut tn, mut fn_) = (0u64, 0u64, 0u64, 0u64);
            for &(p, y) in &pairs {
                let predicted = p > threshold;
                if predicted && y {
                    tp += 1;
                } else if predicted && !y {
                    fp += 1;
                } else if !predicted && !y {
                    tn += 1;
                } else {
                    fn_ += 1;
                }
            }
            assert_eq!(fast.true_positives, tp);
            assert_eq!(fast.false_positives, fp);
            assert_eq!(fast.true_negatives, tn);
            assert_eq!(fast.false_negatives, fn_);
            let m = metrics(&fast);
            let oracle_p = if tp + fp > 0 {
                Some(tp as f64 / (tp + fp) as f64)
            } else {
                None
            };
            let oracle_r = if tp + fn_ > 0 {
                Some(tp as f64 / (tp + fn_) as f64)
            } else {
                None
            };
            assert_eq!(m.precision, oracle_p);
            assert_eq!(m.recall, oracle_r);
        }
    }

    #[test]
    fn compare_identical_inputs_has_zero_deltas() {
        let pairs = [(0.32, true), (0.45, false), (0.6, true)];
        let table = compare(&pairs, &pairs, &default_grid()).unwrap();
        for row in &table.rows {
            assert!(row.f1_delta.is_none() || row.f1_delta == Some(0.0));
            assert!(row.streaming_not_worse());
            assert!(!row.streaming_strictly_better());
        }
        assert_eq!(table.thresholds_streaming_not_worse(), 5);
    }

    #[test]
    fn compare_rejects_misalignment() {
        let a = [(0.3, true), (0.4, false)];
        let short = [(0.3, true)];
        assert!(matches!(
            compare(&a, &short, &default_grid()),
            Err(EvalError::MisalignedPairs(_))
        ));
        let flipped = [(0.3, true), (0.4, true)];
        assert!(matches!(
            compare(&a, &flipped, &default_grid()),
            Err(EvalError::MisalignedPairs(_))
        ));
    }

    #[test]
    fn dominance_conventions_for_undefined_f1() {
        let streaming = [(0.9, true), (0.8, true), (0.1, false)];
        let batch_never_positive = [(0.05, true), (0.02, true), (0.01, false)];
        let table = compare(&streaming, &batch_never_positive, &[0.5]).unwrap();
        let row = &table.rows[0];
        assert!(row.streaming.f1.is_some());
        assert_eq!(row.batch.f1, None);
        assert_eq!(row.f1_delta, None);
        assert!(row.streaming_strictly_better());
        assert!(row.streaming_not_worse());

        // Both undefined: a tie, not a win.
        let table = compare(&batch_never_positive, &batch_never_positive, &[0.5]).unwrap();
        assert!(!table.rows[0].streaming_strictly_better());
        assert!(table.rows[0].streaming_not_worse());
    }

    #[test]
    fn summary_names_best_thresholds() {
        let streaming = [(0.9, true), (0.4, false), (0.36, true), (0.1, false)];
        let batch = [(0.6, true), (0.45, false), (0.2, true), (0.1, false)];
        let table = compare(&streaming, &batch, &default_grid()).unwrap();
        let summary = table.summary();
        assert!(summary.contains("streaming: best F1"));
        assert!(summary.contains("batch: best F1"));
        assert!(summary.contains("of 5 thresholds"));
    }

    #[test]
    fn report_csv_format() {
        let pairs = [(0.9, true), (0.4, false), (0.1, true)];
        let reports = sweep(&pairs, &[0.5, 0.95]);
        let text = write_sweep_csv("streaming", &reports);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(REPORT_CSV_HEADER));
        assert_eq!(lines.next(), Some("0.5,streaming,1,0,1,1,1,0.5,0.6666666666666666"));
        // Above 0.9 nothing is predicted positive: precision undefined.
        assert_eq!(lines.next(), Some("0.95,streaming,0,0,1,2,NA,0,NA"));
    }

    #[test]
    fn pr_curve_csv_format() {
        let pairs = [(0.9, true), (0.4, false)];
        let text = write_pr_curve_csv(&sweep(&pairs, &[0.5]));
        assert_eq!(text, "threshold,precision,recall\n0.5,1,1\n");
    }

    proptest! {
        /// Harmonic-mean fixed point: p == r implies F1 == p.
        #[test]
        fn f1_fixed_point(tp in 1u64..500, extra in 0u64..500) {
            let c = ConfusionCounts {
                true_positives: tp,
                false_positives: extra,
                true_negatives: 3,
                false_negatives: extra,
            };
            let m = metrics(&c);
            prop_assert_eq!(m.precision, m.recall);
            let p = m.precision.unwrap();
            if p > 0.0 {
                prop_assert!((m.f1.unwrap() - p).abs() < 1e-15);
            }
        }

        /// F1 lies between min and max of precision and recall; raising the
        /// threshold never increases recall or predicted positives; metric
        /// values stay in [0, 1]; permutation leaves everything unchanged.
        #[test]
        fn sweep_invariants(
            probs in proptest::collection::vec((0.0f64..1.0, any::<bool>()), 1..120),
            swap_a in 0usize..120,
            swap_b in 0usize..120,
        ) {
            let grid: Vec<f64> = (0..=10).map(|t| t as f64 / 10.0).collect();
            let reports = sweep(&probs, &grid);
            let mut last_recall: Option<f64> = None;
            let mut last_predicted: Option<u64> = None;
            for r in &reports {
                for v in [r.precision, r.recall, r.f1].into_iter().flatten() {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
                if let (Some(p), Some(rec), Some(f1)) = (r.precision, r.recall, r.f1) {
                    prop_assert!(f1 <= p.max(rec) + 1e-12);
                    prop_assert!(f1 >= p.min(rec) - 1e-12);
                }
                if let (Some(prev), Some(cur)) = (last_recall, r.recall) {
                    prop_assert!(cur <= prev + 1e-15);
                }
                if let Some(prev) = last_predicted {
                    prop_assert!(r.counts.predicted_positives() <= prev);
                }
                last_recall = r.recall.or(last_recall);
                last_predicted = Some(r.counts.predicted_positives());
            }

            // Permutation invariance.
            let mut shuffled = probs.clone();
            let (a, b) = (swap_a % probs.len(), swap_b % probs.len());
            shuffled.swap(a, b);
            let again = sweep(&shuffled, &grid);
            for (x, y) in reports.iter().zip(&again) {
                prop_assert_eq!(x.counts, y.counts);
            }
        }
    }
}
