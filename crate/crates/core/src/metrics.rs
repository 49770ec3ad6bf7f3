//! Forgetting-efficacy metrics.
//!
//! Two membership-inference attacks are provided. The loss attack flags a
//! sample as a member when its loss is below the attacked model's mean
//! training loss. The confidence attack fits a single threshold on the
//! max-softmax confidence that best separates seen (retain) from unseen
//! (test) data, then reports the fraction of forget samples it calls seen.

use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{confidences, per_sample_losses, predict_accuracy, LabeledBatch, ParameterVector};
use crate::rng::{self, Purpose};

/// Accuracy on the data that should be forgotten.
pub fn forget_accuracy(w: &ParameterVector, forget_data: &LabeledBatch) -> Result<f64> {
    if forget_data.is_empty() {
        return Err(Error::Empty("forget data"));
    }
    predict_accuracy(w, forget_data)
}

/// Mean per-sample cross-entropy.
pub fn mean_loss(w: &ParameterVector, data: &LabeledBatch) -> Result<f64> {
    let losses = per_sample_losses(w, data)?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Fraction of `losses` strictly below `threshold`.
pub fn loss_threshold_rate(losses: &[f64], threshold: f64) -> f64 {
    losses.iter().filter(|&&l| l < threshold).count() as f64 / losses.len() as f64
}

/// Loss-threshold membership attack success rate on `forget_data`.
pub fn mia_yeom(w: &ParameterVector, global_mean_train_loss: f64, forget_data: &LabeledBatch) -> Result<f64> {
    if forget_data.is_empty() {
        return Err(Error::Empty("forget data"));
    }
    Ok(loss_threshold_rate(
        &per_sample_losses(w, forget_data)?,
        global_mean_train_loss,
    ))
}

/// A fitted "seen if confidence > threshold" rule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdFit {
    pub threshold: f64,
    pub balanced_accuracy: f64,
    /// Every confidence in the attack set was identical.
    pub degenerate: bool,
}

/// Threshold maximizing balanced accuracy over seen/unseen confidences.
///
/// Candidates are one value below the minimum and the midpoints between
/// consecutive distinct confidences; ties go to the lowest threshold. The
/// result does not depend on input order.
pub fn fit_confidence_threshold(seen: &[f64], unseen: &[f64]) -> Result<ThresholdFit> {
    if seen.is_empty() || unseen.is_empty() {
        return Err(Error::Empty("attack set"));
    }
    // (confidence, is_seen), sorted ascending
    let mut points: Vec<(f64, bool)> = seen
        .iter()
        .map(|&c| (c, true))
        .chain(unseen.iter().map(|&c| (c, false)))
        .collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let (lo, hi) = (points[0].0, points[points.len() - 1].0);
    if lo == hi {
        return Ok(ThresholdFit {
            threshold: lo,
            balanced_accuracy: 0.5,
            degenerate: true,
        });
    }

    let (n_seen, n_unseen) = (seen.len() as f64, unseen.len() as f64);
    // threshold below everything: all predicted seen
    let mut best = ThresholdFit {
        threshold: lo - 1.0,
        balanced_accuracy: 0.5,
        degenerate: false,
    };
    let (mut seen_below, mut unseen_below) = (0usize, 0usize);
    let mut i = 0;
    while i < points.len() {
        let value = points[i].0;
        while i < points.len() && points[i].0 == value {
            if points[i].1 {
                seen_below += 1;
            } else {
                unseen_below += 1;
            }
            i += 1;
        }
        if i == points.len() {
            break;
        }
        let tpr = (n_seen - seen_below as f64) / n_seen;
        let tnr = unseen_below as f64 / n_unseen;
        let acc = 0.5 * (tpr + tnr);
        if acc > best.balanced_accuracy {
            best = ThresholdFit {
                threshold: 0.5 * (value + points[i].0),
                balanced_accuracy: acc,
                degenerate: false,
            };
        }
    }
    Ok(best)
}

/// Fraction of `forget` confidences classified seen by `fit`.
pub fn apply_threshold(fit: &ThresholdFit, forget: &[f64]) -> f64 {
    if fit.degenerate {
        return 0.5;
    }
    forget.iter().filter(|&&c| c > fit.threshold).count() as f64 / forget.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SongResult {
    pub success_rate: f64,
    pub fit: ThresholdFit,
}

/// Confidence-threshold membership attack.
///
/// The larger of `retain_data` (seen) and `test_data` (unseen) is subsampled
/// without replacement to the size of the smaller one.
pub fn mia_song(
    w: &ParameterVector,
    retain_data: &LabeledBatch,
    test_data: &LabeledBatch,
    forget_data: &LabeledBatch,
    seed: u64,
) -> Result<SongResult> {
    if retain_data.is_empty() || test_data.is_empty() {
        return Err(Error::Empty("retain or test data for the attack set"));
    }
    if forget_data.is_empty() {
        return Err(Error::Empty("forget data"));
    }
    let mut seen = confidences(w, retain_data)?;
    let mut unseen = confidences(w, test_data)?;
    let m = seen.len().min(unseen.len());
    let mut rng = rng::stream(seed, Purpose::Attack, &[]);
    if seen.len() > m {
        seen = seen.choose_multiple(&mut rng, m).copied().collect();
    } else if unseen.len() > m {
        unseen = unseen.choose_multiple(&mut rng, m).copied().collect();
    }
    let fit = fit_confidence_threshold(&seen, &unseen)?;
    Ok(SongResult {
        success_rate: apply_threshold(&fit, &confidences(w, forget_data)?),
        fit,
    })
}

/// The four efficacy numbers reported for one model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfficacyMetrics {
    pub test_acc: f64,
    pub forget_acc: f64,
    pub mia_song: f64,
    pub mia_yeom: f64,
    /// The confidence attack had no signal and defaulted to 0.5.
    pub song_degenerate: bool,
}

impl EfficacyMetrics {
    pub fn values(&self) -> [f64; 4] {
        [self.test_acc, self.forget_acc, self.mia_song, self.mia_yeom]
    }
}

/// Absolute differences from the retrained model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricDeltas {
    pub test_acc: f64,
    pub forget_acc: f64,
    pub mia_song: f64,
    pub mia_yeom: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfficacyReport {
    pub unlearned: EfficacyMetrics,
    pub retrained: EfficacyMetrics,
    pub deltas: MetricDeltas,
}

pub fn delta_report(unlearned: &EfficacyMetrics, retrained: &EfficacyMetrics) -> EfficacyReport {
    EfficacyReport {
        unlearned: *unlearned,
        retrained: *retrained,
        deltas: MetricDeltas {
            test_acc: (unlearned.test_acc - retrained.test_acc).abs(),
            forget_acc: (unlearned.forget_acc - retrained.forget_acc).abs(),
            mia_song: (unlearned.mia_song - retrained.mia_song).abs(),
            mia_yeom: (unlearned.mia_yeom - retrained.mia_yeom).abs(),
        },
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(Self {
            mean,
            std: var.sqrt(),
        })
    }
}

/// Mean and std of every delta across seeds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaSummary {
    pub test_acc: MeanStd,
    pub forget_acc: MeanStd,
    pub mia_song: MeanStd,
    pub mia_yeom: MeanStd,
}

pub fn summarize_deltas(reports: &[EfficacyReport]) -> Option<DeltaSummary> {
    let col = |f: fn(&MetricDeltas) -> f64| {
        MeanStd::of(&reports.iter().map(|r| f(&r.deltas)).collect::<Vec<_>>())
    };
    Some(DeltaSummary {
        test_acc: col(|d| d.test_acc)?,
        forget_acc: col(|d| d.forget_acc)?,
        mia_song: col(|d| d.mia_song)?,
        mia_yeom: col(|d| d.mia_yeom)?,
    })
}

/// Data needed to score any model in an unlearning experiment.
#[derive(Clone, Copy, Debug)]
pub struct Evaluator<'a> {
    pub test: &'a LabeledBatch,
    pub forget: &'a LabeledBatch,
    /// Seen half of the confidence attack set.
    pub retain: &'a LabeledBatch,
    pub seed: u64,
}

impl Evaluator<'_> {
    /// Scores `w`. `train_pool` is the data of the clients that produced `w`;
    /// its mean loss is the loss attack's threshold.
    pub fn evaluate(&self, w: &ParameterVector, train_pool: &LabeledBatch) -> Result<EfficacyMetrics> {
        let song = mia_song(w, self.retain, self.test, self.forget, self.seed)?;
        Ok(EfficacyMetrics {
            test_acc: predict_accuracy(w, self.test)?,
            forget_acc: forget_accuracy(w, self.forget)?,
            mia_song: song.success_rate,
            mia_yeom: mia_yeom(w, mean_loss(w, train_pool)?, self.forget)?,
            song_degenerate: song.fit.degenerate,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ModelArch;

    fn zero_logistic(d: usize, k: usize) -> ParameterVector {
        ParameterVector::zeros(
            ModelArch::Logistic {
                feature_dim: d,
                num_classes: k,
            }
            .schema(),
        )
    }

    #[test]
    fn yeom_hand_count() {
        assert!((loss_threshold_rate(&[0.2, 0.7, 0.4], 0.5) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(loss_threshold_rate(&[0.6, 0.7], 0.5), 0.0);
        assert_eq!(loss_threshold_rate(&[0.1, 0.2], 0.5), 1.0);
    }

    #[test]
    fn yeom_through_model() {
        let w = zero_logistic(1, 2);
        let forget = LabeledBatch::from_rows(1, vec![1.0, 2.0], vec![0, 1]).unwrap();
        // every loss is ln 2
        assert_eq!(mia_yeom(&w, 0.7, &forget).unwrap(), 1.0);
        assert_eq!(mia_yeom(&w, 0.69, &forget).unwrap(), 0.0);
        assert!(mia_yeom(&w, 0.7, &LabeledBatch::empty(1)).is_err());
    }

    #[test]
    fn song_hand_example() {
        let fit = fit_confidence_threshold(&[0.9, 0.8], &[0.3, 0.2]).unwrap();
        assert!(fit.threshold > 0.3 && fit.threshold < 0.8);
        assert_eq!(fit.balanced_accuracy, 1.0);
        assert_eq!(apply_threshold(&fit, &[0.85, 0.25]), 0.5);
    }

    #[test]
    fn song_separable_forget_all_seen() {
        let fit = fit_confidence_threshold(&[0.9, 0.95, 0.99], &[0.1, 0.4]).unwrap();
        assert_eq!(apply_threshold(&fit, &[0.91, 0.97]), 1.0);
    }

    #[test]
    fn song_degenerate_when_uniform() {
        let w = zero_logistic(2, 3);
        let data = LabeledBatch::from_rows(2, vec![1.0, 0.0, 0.0, 1.0], vec![0, 1]).unwrap();
        let r = mia_song(&w, &data, &data, &data, 0).unwrap();
        assert!(r.fit.degenerate);
        assert_eq!(r.success_rate, 0.5);
    }

    #[test]
    fn song_prefers_lowest_threshold_on_ties() {
        // both gaps separate perfectly when unseen are all below seen
        let fit = fit_confidence_threshold(&[0.5, 0.5], &[0.1, 0.1]).unwrap();
        assert!((fit.threshold - 0.3).abs() < 1e-15);
    }

    #[test]
    fn forget_accuracy_tie_break() {
        let w = zero_logistic(1, 2);
        let d = LabeledBatch::from_rows(1, vec![1.0, 2.0, 3.0, 4.0], vec![0, 0, 1, 1]).unwrap();
        assert_eq!(forget_accuracy(&w, &d).unwrap(), 0.5);
    }

    #[test]
    fn delta_examples() {
        let m = |t| EfficacyMetrics {
            test_acc: t,
            forget_acc: 0.3,
            mia_song: 0.5,
            mia_yeom: 0.1,
            song_degenerate: false,
        };
        let r = delta_report(&m(0.6), &m(0.58));
        assert!((r.deltas.test_acc - 0.02).abs() < 1e-12);
        assert_eq!(r.deltas.forget_acc, 0.0);
        assert_eq!(delta_report(&m(0.58), &m(0.6)).deltas, r.deltas);
        assert_eq!(delta_report(&m(0.4), &m(0.4)).deltas.test_acc, 0.0);
    }

    #[test]
    fn mean_std() {
        let s = MeanStd::of(&[1.0, 3.0]).unwrap();
        assert_eq!((s.mean, s.std), (2.0, 1.0));
        assert!(MeanStd::of(&[]).is_none());
    }
}
