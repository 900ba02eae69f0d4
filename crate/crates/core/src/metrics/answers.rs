use serde::{Deserialize, Serialize};

use super::MetricError;

/// Trim, lowercase, collapse inner whitespace and drop one trailing period.
pub fn normalize_answer(s: &str) -> String {
    let s = s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    match s.strip_suffix('.') {
        Some(t) => t.trim_end().to_string(),
        None => s,
    }
}

pub fn answers_match(a: &str, b: &str) -> bool {
    normalize_answer(a) == normalize_answer(b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub acc: f64,
    /// Binomial standard error `sqrt(p(1 − p) / n)`.
    pub stderr: f64,
    pub n: usize,
}

impl Accuracy {
    pub fn from_flags(flags: &[bool]) -> Option<Self> {
        if flags.is_empty() {
            return None;
        }
        let n = flags.len();
        let p = flags.iter().filter(|f| **f).count() as f64 / n as f64;
        Some(Accuracy { acc: p, stderr: (p * (1.0 - p) / n as f64).sqrt(), n })
    }
}

/// Exact-match rate under `normalize`.
pub fn answer_accuracy_with(answers: &[String], truths: &[String], normalize: impl Fn(&str) -> String) -> Result<Accuracy, MetricError> {
    if answers.len() != truths.len() {
        return Err(MetricError::LengthMismatch(answers.len(), truths.len()));
    }
    let flags: Vec<bool> = answers.iter().zip(truths).map(|(a, t)| normalize(a) == normalize(t)).collect();
    Accuracy::from_flags(&flags).ok_or(MetricError::EmptyTruth)
}

pub fn answer_accuracy(answers: &[String], truths: &[String]) -> Result<Accuracy, MetricError> {
    answer_accuracy_with(answers, truths, normalize_answer)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn normalizer() {
        assert!(answers_match(" Yes", "yes"));
        assert!(answers_match("Yes.", "yes"));
        assert!(answers_match("two  cats", "Two cats"));
        assert!(!answers_match("yes", "no"));
    }

    #[test]
    fn all_match() {
        let a = answer_accuracy(&v(&["1", "2"]), &v(&["1", "2"])).unwrap();
        assert_eq!((a.acc, a.stderr), (1.0, 0.0));
    }

    #[test]
    fn ninety_six_of_hundred() {
        let flags: Vec<bool> = (0..100).map(|i| i >= 4).collect();
        let a = Accuracy::from_flags(&flags).unwrap();
        assert!((a.acc - 0.96).abs() < 1e-12);
        // sqrt(0.96·0.04/100) = 0.019596, quoted to four places as 0.0196.
        assert!((a.stderr - 0.0196).abs() < 5e-5);
        assert!((a.stderr - 0.000384f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn length_mismatch() {
        assert!(answer_accuracy(&v(&["1"]), &v(&[])).is_err());
    }
}
