use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::samples::QaSample;

use super::QaScore;

/// Probabilities are floored here before taking logs, so a confident miss
/// costs at most `-ln(LOG_FLOOR)` ≈ 27.6 nats instead of infinity.
pub const LOG_FLOOR: f64 = 1e-12;

/// Best non-null span probability: max of `p_start[i] * p_end[j]` over
/// `1 <= i <= j`.
///
/// Runs in O(n) by carrying the running maximum of `p_start[1..=j]`.
pub fn confidence_score(p_start: &[f64], p_end: &[f64]) -> Result<f64> {
    confidence_score_within(p_start, p_end, None)
}

/// Like [`confidence_score`], optionally restricted to spans of at most
/// `max_span` tokens (`j - i + 1 <= max_span`).
pub fn confidence_score_within(p_start: &[f64], p_end: &[f64], max_span: Option<usize>) -> Result<f64> {
    if p_start.len() != p_end.len() {
        return Err(Error::LengthMismatch(format!(
            "p_start has {} entries, p_end has {}",
            p_start.len(),
            p_end.len()
        )));
    }
    if p_start.len() < 2 || max_span == Some(0) {
        return Ok(0.0);
    }
    let mut best = 0.0f64;
    match max_span {
        None => {
            let mut best_start = 0.0f64;
            for j in 1..p_start.len() {
                best_start = best_start.max(p_start[j]);
                best = best.max(best_start * p_end[j]);
            }
        }
        Some(width) => {
            // Monotone deque of candidate start indices in the window.
            let mut window: VecDeque<usize> = VecDeque::new();
            for j in 1..p_start.len() {
                while window.back().is_some_and(|&i| p_start[i] <= p_start[j]) {
                    window.pop_back();
                }
                window.push_back(j);
                while window.front().is_some_and(|&i| i + width <= j) {
                    window.pop_front();
                }
                let i = *window.front().expect("j was just pushed");
                best = best.max(p_start[i] * p_end[j]);
            }
        }
    }
    Ok(best)
}

/// Geometric mean of the answerable probability and the span confidence.
pub fn validation_score(p_ans: f64, p_confidence: f64) -> Result<f64> {
    for (name, v) in [("p_ans", p_ans), ("p_confidence", p_confidence)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidArgument(format!("{name} = {v} outside [0, 1]")));
        }
    }
    Ok((p_ans * p_confidence).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QaLosses {
    pub position: f64,
    pub answerable: f64,
}

impl QaLosses {
    pub fn total(&self) -> f64 {
        self.position + self.answerable
    }
}

fn neg_log(p: f64) -> f64 {
    -p.max(LOG_FLOOR).ln()
}

/// Position and answerable cross-entropy losses of one sample.
pub fn qa_losses(sample: &QaSample, score: &QaScore) -> Result<QaLosses> {
    score.check_for(&sample.context)?;
    let (l_s, l_e) = sample.answer_positions();
    let position = neg_log(score.p_start[l_s]) + neg_log(score.p_end[l_e]);
    let answerable = if sample.answerable {
        neg_log(score.p_ans)
    } else {
        neg_log(1.0 - score.p_ans)
    };
    Ok(QaLosses { position, answerable })
}

/// `(1 / 2N) * Σ (position + answerable)` over the dataset.
pub fn dataset_loss(samples_with_scores: &[(QaSample, QaScore)]) -> Result<f64> {
    if samples_with_scores.is_empty() {
        return Err(Error::InvalidArgument("dataset loss of an empty set".into()));
    }
    let mut total = 0.0;
    for (sample, score) in samples_with_scores {
        total += qa_losses(sample, score)?.total();
    }
    Ok(total / (2.0 * samples_with_scores.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Context;
    use crate::samples::NULL_SPAN;

    #[allow(clippy::needless_range_loop)]
    fn brute_force(p_start: &[f64], p_end: &[f64]) -> f64 {
        let mut best = 0.0f64;
        for i in 1..p_start.len() {
            for j in i..p_end.len() {
                best = best.max(p_start[i] * p_end[j]);
            }
        }
        best
    }

    #[allow(clippy::needless_range_loop)]
    fn brute_force_within(p_start: &[f64], p_end: &[f64], width: usize) -> f64 {
        let mut best = 0.0f64;
        for i in 1..p_start.len() {
            for j in i..p_end.len() {
                if j - i < width {
                    best = best.max(p_start[i] * p_end[j]);
                }
            }
        }
        best
    }

    #[test]
    fn confidence_examples() {
        assert_eq!(confidence_score(&[0.1, 0.9], &[0.1, 0.9]).unwrap(), 0.9 * 0.9);
        // Admissible pairs: (1,1)=.15, (1,2)=.30, (2,2)=.18.
        assert_eq!(
            confidence_score(&[0.2, 0.5, 0.3], &[0.1, 0.3, 0.6]).unwrap(),
            brute_force(&[0.2, 0.5, 0.3], &[0.1, 0.3, 0.6])
        );
        assert!((confidence_score(&[0.2, 0.5, 0.3], &[0.1, 0.3, 0.6]).unwrap() - 0.30).abs() < 1e-15);
        assert_eq!(confidence_score(&[1.0, 0.0, 0.0], &[0.5, 0.25, 0.25]).unwrap(), 0.0);
    }

    #[test]
    fn confidence_degenerate() {
        assert_eq!(confidence_score(&[1.0], &[1.0]).unwrap(), 0.0);
        assert!(confidence_score(&[0.5, 0.5], &[1.0]).is_err());
    }

    #[test]
    fn confidence_excludes_end_before_start() {
        // Start mass late, end mass early: only (2,2) is admissible with weight.
        let v = confidence_score(&[0.0, 0.1, 0.9], &[0.0, 0.9, 0.1]).unwrap();
        assert_eq!(v, brute_force(&[0.0, 0.1, 0.9], &[0.0, 0.9, 0.1]));
        assert!((v - 0.09).abs() < 1e-15);
    }

    #[test]
    fn bounded_spans_match_brute_force() {
        let ps = [0.05, 0.4, 0.05, 0.1, 0.3, 0.1];
        let pe = [0.05, 0.05, 0.1, 0.1, 0.1, 0.6];
        for width in 1..8 {
            assert_eq!(
                confidence_score_within(&ps, &pe, Some(width)).unwrap(),
                brute_force_within(&ps, &pe, width),
                "width {width}"
            );
        }
        assert_eq!(confidence_score_within(&ps, &pe, Some(0)).unwrap(), 0.0);
    }

    #[test]
    fn validation_examples() {
        assert_eq!(validation_score(1.0, 1.0).unwrap(), 1.0);
        assert_eq!(validation_score(0.0, 0.9).unwrap(), 0.0);
        assert!((validation_score(0.64, 0.25).unwrap() - 0.4).abs() < 1e-15);
        assert!(validation_score(1.2, 0.5).is_err());
        assert!(validation_score(0.5, -0.1).is_err());
    }

    fn ctx(n: usize) -> Context {
        let mut tokens = vec!["null".to_owned()];
        tokens.extend((1..n).map(|i| format!("t{i}")));
        Context::new(tokens, Some((1, 2))).unwrap()
    }

    fn sample(answerable: bool, span: (usize, usize)) -> QaSample {
        QaSample {
            bag_id: "b".into(),
            relation: 1,
            question: "h | r".into(),
            context: ctx(4),
            answer_span: span,
            answerable,
        }
    }

    fn one_hot(n: usize, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        v
    }

    #[test]
    fn losses_perfect_prediction() {
        let s = sample(true, (1, 3));
        let score = QaScore::new(1.0, one_hot(4, 1), one_hot(4, 2)).unwrap();
        let l = qa_losses(&s, &score).unwrap();
        assert_eq!((l.position, l.answerable), (0.0, 0.0));
    }

    #[test]
    fn losses_unanswerable_half() {
        let s = sample(false, NULL_SPAN);
        let score = QaScore::new(0.5, one_hot(4, 0), one_hot(4, 0)).unwrap();
        let l = qa_losses(&s, &score).unwrap();
        assert_eq!(l.position, 0.0);
        assert!((l.answerable - 0.5f64.ln().abs()).abs() < 1e-12);
        assert!((l.answerable - std::f64::consts::LN_2).abs() < 1e-6);
    }

    #[test]
    fn losses_partial_position() {
        let s = sample(true, (1, 3));
        let score = QaScore::new(1.0, vec![0.25, 0.5, 0.25, 0.0], vec![0.25, 0.25, 0.25, 0.25]).unwrap();
        let l = qa_losses(&s, &score).unwrap();
        // -ln 0.5 - ln 0.25 = ln 8
        assert!((l.position - 8f64.ln()).abs() < 1e-12);
        assert!((l.position - 2.079_441_541_679_836).abs() < 1e-6);
        assert_eq!(l.answerable, 0.0);
    }

    #[test]
    fn losses_floor_zero_probability() {
        let s = sample(true, (1, 3));
        let score = QaScore::new(0.0, one_hot(4, 0), one_hot(4, 0)).unwrap();
        let l = qa_losses(&s, &score).unwrap();
        let cap = -LOG_FLOOR.ln();
        assert!((l.position - 2.0 * cap).abs() < 1e-9);
        assert!((l.answerable - cap).abs() < 1e-9);
    }

    #[test]
    fn dataset_loss_examples() {
        // losses (ln 8, ln 2) -> (ln 8 + ln 2) / 2 = ln 4
        let s = sample(true, (1, 3));
        let score = QaScore::new(0.5, vec![0.25, 0.5, 0.25, 0.0], vec![0.25, 0.25, 0.25, 0.25]).unwrap();
        let one = dataset_loss(&[(s.clone(), score.clone())]).unwrap();
        assert!((one - 4f64.ln()).abs() < 1e-12);
        assert!((one - 1.386_294_361_119_890_6).abs() < 1e-6);
        let two = dataset_loss(&[(s.clone(), score.clone()), (s.clone(), score)]).unwrap();
        assert!((one - two).abs() < 1e-15);

        let perfect = QaScore::new(1.0, one_hot(4, 1), one_hot(4, 2)).unwrap();
        assert_eq!(dataset_loss(&[(s, perfect)]).unwrap(), 0.0);
        assert!(dataset_loss(&[]).is_err());
    }
}
