//! Inter-rater agreement on 1–5 ordinal ratings.

use serde::{Deserialize, Serialize};

/// Number of rating levels (1..=5).
pub const LEVELS: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AgreementError {
    #[error("rating vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least two paired ratings, got {0}")]
    TooFew(usize),
    #[error("rating {0} is outside 1..=5")]
    OutOfRange(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementStats {
    /// Quadratically weighted Cohen's κ; absent when both raters are
    /// constant and equal (chance disagreement is zero).
    pub kappa_quadratic: Option<f64>,
    /// Absent when either vector has zero variance.
    pub pearson: Option<f64>,
    pub n: usize,
}

/// `LEVELS × LEVELS` counts, `m[i][j]` = pairs rated `i+1` by A and `j+1` by B.
pub fn confusion_matrix(a: &[u8], b: &[u8]) -> Result<[[f64; LEVELS]; LEVELS], AgreementError> {
    check(a, b)?;
    let mut m = [[0.0; LEVELS]; LEVELS];
    for (x, y) in a.iter().zip(b) {
        m[*x as usize - 1][*y as usize - 1] += 1.0;
    }
    Ok(m)
}

fn check(a: &[u8], b: &[u8]) -> Result<(), AgreementError> {
    if a.len() != b.len() {
        return Err(AgreementError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(AgreementError::TooFew(a.len()));
    }
    if let Some(r) = a.iter().chain(b).find(|r| !(1..=LEVELS as u8).contains(r)) {
        return Err(AgreementError::OutOfRange(*r));
    }
    Ok(())
}

/// κ = 1 − Σ d·O / Σ d·E with disagreement weights `d_ij = (i−j)²/(k−1)²`,
/// observed proportions O and chance proportions E from the marginals.
pub fn kappa_from_matrix(m: &[[f64; LEVELS]; LEVELS]) -> Option<f64> {
    let n: f64 = m.iter().flatten().sum();
    if n == 0.0 {
        return None;
    }
    let rows: Vec<f64> = m.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<f64> = (0..LEVELS).map(|j| m.iter().map(|r| r[j]).sum()).collect();
    let (mut obs, mut exp) = (0.0, 0.0);
    let km1 = (LEVELS - 1) as f64;
    for i in 0..LEVELS {
        for j in 0..LEVELS {
            let d = ((i as f64 - j as f64) / km1).powi(2);
            obs += d * m[i][j] / n;
            exp += d * rows[i] * cols[j] / (n * n);
        }
    }
    if exp == 0.0 {
        None
    } else {
        Some(1.0 - obs / exp)
    }
}

pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

pub fn agreement_stats(a: &[u8], b: &[u8]) -> Result<AgreementStats, AgreementError> {
    let m = confusion_matrix(a, b)?;
    let fa: Vec<f64> = a.iter().map(|x| *x as f64).collect();
    let fb: Vec<f64> = b.iter().map(|x| *x as f64).collect();
    Ok(AgreementStats { kappa_quadratic: kappa_from_matrix(&m), pearson: pearson(&fa, &fb), n: a.len() })
}

/// Mean and population standard deviation of the present values.
pub fn mean_std(xs: impl IntoIterator<Item = Option<f64>>) -> Option<(f64, f64)> {
    let v: Vec<f64> = xs.into_iter().flatten().collect();
    if v.is_empty() {
        return None;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64;
    Some((m, var.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_is_one() {
        let a = [1, 2, 3, 4, 5, 3];
        let s = agreement_stats(&a, &a).unwrap();
        assert!((s.kappa_quadratic.unwrap() - 1.0).abs() < 1e-12);
        assert!((s.pearson.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reversed() {
        let s = agreement_stats(&[1, 2, 3, 4, 5], &[5, 4, 3, 2, 1]).unwrap();
        assert!((s.pearson.unwrap() + 1.0).abs() < 1e-12);
        // Anti-diagonal: observed Σd/n = (1 + 0.25 + 0 + 0.25 + 1)/5 = 0.5;
        // uniform marginals give chance Σd/n² = 6.25/25 = 0.25, so κ = −1.
        assert!((s.kappa_quadratic.unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert_eq!(agreement_stats(&[1], &[1]), Err(AgreementError::TooFew(1)));
        assert_eq!(agreement_stats(&[1, 6], &[1, 2]), Err(AgreementError::OutOfRange(6)));
        assert_eq!(agreement_stats(&[1, 2], &[1]), Err(AgreementError::LengthMismatch(2, 1)));
        assert_eq!(agreement_stats(&[3, 3], &[3, 3]).unwrap().pearson, None);
    }
}
