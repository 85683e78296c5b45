use std::ops::Add;

use serde::{Deserialize, Serialize};

use super::{Decision, EvalRecord, MetricError};

/// 2x2 counts against a reference. Forms a commutative monoid under `+`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Adds one prediction/reference pair.
    pub fn record(&mut self, predicted_positive: bool, reference_positive: bool) {
        match (predicted_positive, reference_positive) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }
}

/// Counts `positive` calls against the reference over all records.
pub fn confusion(records: &[EvalRecord], positive: Decision) -> Result<ConfusionCounts, MetricError> {
    if records.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let mut c = ConfusionCounts::default();
    for r in records {
        c.record(r.predicted == positive, r.reference == positive);
    }
    Ok(c)
}

fn ratio(num: u64, den: u64, name: &'static str) -> Result<f64, MetricError> {
    if den == 0 {
        Err(MetricError::UndefinedMetric(name))
    } else {
        Ok(num as f64 / den as f64)
    }
}

/// Each metric is computed independently; a zero denominator fails only that one.
#[derive(Debug, Clone, PartialEq)]
pub struct AgreementMetrics {
    pub ppv: Result<f64, MetricError>,
    pub npv: Result<f64, MetricError>,
    pub ppa: Result<f64, MetricError>,
    pub npa: Result<f64, MetricError>,
}

pub fn agreement_metrics(c: &ConfusionCounts) -> AgreementMetrics {
    AgreementMetrics {
        ppv: ratio(c.tp, c.tp + c.fp, "ppv"),
        npv: ratio(c.tn, c.tn + c.fn_, "npv"),
        ppa: ratio(c.tp, c.tp + c.fn_, "ppa"),
        npa: ratio(c.tn, c.tn + c.fp, "npa"),
    }
}

pub fn accuracy(c: &ConfusionCounts) -> Result<f64, MetricError> {
    ratio(c.tp + c.tn, c.total(), "accuracy")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(pred: Decision, reference: Decision) -> EvalRecord {
        EvalRecord::new("s", pred, 0.5, reference)
    }

    #[test]
    fn worked_fixture() {
        let c = ConfusionCounts { tp: 8, fp: 2, fn_: 1, tn: 9 };
        let m = agreement_metrics(&c);
        assert_eq!(m.ppv, Ok(0.8));
        assert_eq!(m.npv, Ok(0.9));
        assert_eq!(m.ppa, Ok(8.0 / 9.0));
        assert_eq!(m.npa, Ok(9.0 / 11.0));
    }

    #[test]
    fn perfect_and_undefined() {
        let m = agreement_metrics(&ConfusionCounts { tp: 3, fp: 0, fn_: 0, tn: 4 });
        assert_eq!((m.ppv, m.npv, m.ppa, m.npa), (Ok(1.0), Ok(1.0), Ok(1.0), Ok(1.0)));
        let m = agreement_metrics(&ConfusionCounts { tp: 0, fp: 0, fn_: 2, tn: 4 });
        assert_eq!(m.ppv, Err(MetricError::UndefinedMetric("ppv")));
        assert!(m.npv.is_ok() && m.npa.is_ok());
    }

    #[test]
    fn enumerated_records() {
        use Decision::*;
        assert_eq!(confusion(&[], Abnormal), Err(MetricError::EmptyInput));
        // 20 records: 7 TP, 3 FP, 4 FN, 6 TN, interleaved.
        let pattern = [(Abnormal, Abnormal); 7]
            .into_iter()
            .chain([(Abnormal, Normal); 3])
            .chain([(Normal, Abnormal); 4])
            .chain([(Normal, Normal); 6]);
        let mut recs: Vec<EvalRecord> = pattern.map(|(p, r)| rec(p, r)).collect();
        recs.reverse();
        recs.swap(2, 15);
        let c = confusion(&recs, Abnormal).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 7, fp: 3, fn_: 4, tn: 6 });
        // Swapping the positive class swaps tp/tn and fp/fn.
        let d = confusion(&recs, Normal).unwrap();
        assert_eq!(d, ConfusionCounts { tp: 6, fp: 4, fn_: 3, tn: 7 });
        let all_right: Vec<_> = recs.iter().map(|r| rec(r.reference, r.reference)).collect();
        let c = confusion(&all_right, Abnormal).unwrap();
        assert_eq!((c.fp, c.fn_), (0, 0));
        let inverted: Vec<_> = recs.iter().map(|r| rec(r.reference.flip(), r.reference)).collect();
        let c = confusion(&inverted, Abnormal).unwrap();
        assert_eq!((c.tp, c.tn), (0, 0));
    }

    proptest! {
        #[test]
        fn metrics_bounded_and_dual(tp in 0u64..50, fp in 0u64..50, fn_ in 0u64..50, tn in 0u64..50) {
            let c = ConfusionCounts { tp, fp, fn_, tn };
            let m = agreement_metrics(&c);
            for v in [m.ppv.clone(), m.npv.clone(), m.ppa.clone(), m.npa.clone()].into_iter().flatten() {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            // Inverting every prediction: tp<->fn and fp<->tn.
            let inv = agreement_metrics(&ConfusionCounts { tp: fn_, fp: tn, fn_: tp, tn: fp });
            if let (Ok(a), Ok(b)) = (m.ppa, inv.ppa) {
                prop_assert!((a + b - 1.0).abs() < 1e-12);
            }
            if let (Ok(a), Ok(b)) = (m.npa, inv.npa) {
                prop_assert!((a + b - 1.0).abs() < 1e-12);
            }
        }
    }
}
