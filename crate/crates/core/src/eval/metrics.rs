//! TPE and IoU over the traversable class.

use crate::pointcloud::Label;

/// How false positives are weighted in the TPE denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TpeVariant {
    /// `Σ_FP (1 - t_i)`, the formula as printed.
    #[default]
    AsPrinted,
    /// `Σ_FP t_i`: more traversable false positives weigh more.
    TraversabilityWeighted,
}

/// Confusion counts for the traversable class over labeled points, plus the
/// two false-positive weight sums used by TPE.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Confusion {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
    /// `Σ_{i ∈ FP} (1 - t_i)`.
    pub fp_one_minus_t: f64,
    /// `Σ_{i ∈ FP} t_i`.
    pub fp_t: f64,
}

impl Confusion {
    /// Counts over points whose ground truth is Positive or Negative;
    /// unlabeled ground truth is skipped.
    pub fn from_predictions(s: &[bool], t: &[f64], gt: &[Label]) -> Confusion {
        assert_eq!(
            s.len(),
            gt.len(),
            "prediction and ground truth lengths differ"
        );
        assert_eq!(
            t.len(),
            gt.len(),
            "prediction and ground truth lengths differ"
        );
        let mut c = Confusion::default();
        for i in 0..gt.len() {
            match (gt[i], s[i]) {
                (Label::Positive, true) => c.tp += 1,
                (Label::Positive, false) => c.fn_ += 1,
                (Label::Negative, false) => c.tn += 1,
                (Label::Negative, true) => {
                    c.fp += 1;
                    c.fp_one_minus_t += 1.0 - t[i];
                    c.fp_t += t[i];
                }
                (Label::Unlabeled, _) => {}
            }
        }
        c
    }

    pub fn labeled(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn merge(&mut self, other: &Confusion) {
        self.tp += other.tp;
        self.tn += other.tn;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.fp_one_minus_t += other.fp_one_minus_t;
        self.fp_t += other.fp_t;
    }
}

/// `TN / (TN + Σ_FP w_i + FN)`; 1 when the denominator is 0.
pub fn tpe_from_counts(c: &Confusion, variant: TpeVariant) -> f64 {
    let w = match variant {
        TpeVariant::AsPrinted => c.fp_one_minus_t,
        TpeVariant::TraversabilityWeighted => c.fp_t,
    };
    let den = c.tn as f64 + w + c.fn_ as f64;
    if den == 0.0 {
        1.0
    } else {
        c.tn as f64 / den
    }
}

pub fn tpe(s: &[bool], t: &[f64], gt: &[Label], variant: TpeVariant) -> f64 {
    tpe_from_counts(&Confusion::from_predictions(s, t, gt), variant)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IouScores {
    /// `None` when the class is absent from the ground truth.
    pub positive: Option<f64>,
    pub negative: Option<f64>,
    /// Mean over the defined class IoUs; `None` if neither is defined.
    pub miou: Option<f64>,
}

impl IouScores {
    pub fn from_counts(c: &Confusion) -> IouScores {
        let has_pos = c.tp + c.fn_ > 0;
        let has_neg = c.tn + c.fp > 0;
        let positive = has_pos.then(|| c.tp as f64 / (c.tp + c.fp + c.fn_) as f64);
        let negative = has_neg.then(|| c.tn as f64 / (c.tn + c.fn_ + c.fp) as f64);
        if !has_pos || !has_neg {
            log::warn!("IoU: a class is absent from the ground truth; excluded from the mean");
        }
        let defined: Vec<f64> = [positive, negative].into_iter().flatten().collect();
        let miou =
            (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
        IouScores {
            positive,
            negative,
            miou,
        }
    }
}

pub fn miou(s: &[bool], gt: &[Label]) -> IouScores {
    let t = vec![0.0; s.len()];
    IouScores::from_counts(&Confusion::from_predictions(s, &t, gt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Negative as N, Positive as P, Unlabeled as U};

    #[test]
    fn perfect_segmentation() {
        let gt = [P, N, N, P];
        let s = [true, false, false, true];
        assert_eq!(tpe(&s, &[0.2; 4], &gt, TpeVariant::AsPrinted), 1.0);
        assert_eq!(miou(&s, &gt).miou, Some(1.0));
    }

    #[test]
    fn sixteen_seventeenths() {
        let mut gt = vec![N; 10];
        let mut s = vec![false; 10];
        let mut t = vec![0.9; 10];
        s[8] = true;
        t[8] = 0.5;
        s[9] = true;
        t[9] = 1.0;
        gt.push(U);
        s.push(true);
        t.push(0.0);
        let v = tpe(&s, &t, &gt, TpeVariant::AsPrinted);
        assert!((v - 16.0 / 17.0).abs() < 1e-15);
    }

    #[test]
    fn only_false_negatives_give_zero() {
        let gt = [P; 5];
        assert_eq!(tpe(&[false; 5], &[0.5; 5], &gt, TpeVariant::AsPrinted), 0.0);
    }

    #[test]
    fn empty_denominator_is_one() {
        assert_eq!(tpe(&[true], &[0.5], &[P], TpeVariant::AsPrinted), 1.0);
    }

    #[test]
    fn all_positive_on_half_split() {
        let gt = [P, P, N, N];
        let r = miou(&[true; 4], &gt);
        assert_eq!(r.positive, Some(0.5));
        assert_eq!(r.negative, Some(0.0));
        assert_eq!(r.miou, Some(0.25));
    }

    #[test]
    fn complement_gives_zero() {
        let gt = [P, N, P, N];
        assert_eq!(miou(&[false, true, false, true], &gt).miou, Some(0.0));
    }

    #[test]
    fn absent_class_excluded() {
        let r = miou(&[true, false], &[P, P]);
        assert_eq!(r.negative, None);
        assert_eq!(r.miou, Some(0.5));
    }

    #[test]
    fn variant_weights() {
        let c = Confusion::from_predictions(&[true, false], &[0.25, 0.0], &[N, N]);
        assert_eq!(tpe_from_counts(&c, TpeVariant::AsPrinted), 1.0 / 1.75);
        assert_eq!(
            tpe_from_counts(&c, TpeVariant::TraversabilityWeighted),
            1.0 / 1.25
        );
    }
}
