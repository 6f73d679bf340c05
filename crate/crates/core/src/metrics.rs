//! Separation quality ratios and the composite optimizer fitness.
//!
//! SIR and SAR here involve the additive noise signal directly; they are not
//! the projection-based BSS-Eval decompositions. Degenerate denominators are
//! clamped and every clamp is reported through [`MetricFlags`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sepmodel::{correlation_penalty, SeparatedSources};

/// Value reported for a perfect reconstruction.
pub const CAP_DB: f64 = 300.0;
/// Relative error energy below which a reconstruction counts as perfect.
pub const PERFECT_RATIO: f64 = 1e-30;
/// SIR denominator floor, relative to the reference energy.
pub const SIR_FLOOR_RATIO: f64 = 1e-12;
/// SAR numerator/denominator floor (absolute).
pub const SAR_FLOOR: f64 = 1e-30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalTriple {
    pub sdr: f64,
    pub sir: f64,
    pub sar: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MetricFlags {
    pub sdr_capped: bool,
    pub sir_clamped: bool,
    pub sar_clamped: bool,
}

impl MetricFlags {
    pub fn any(&self) -> bool {
        self.sdr_capped || self.sir_clamped || self.sar_clamped
    }
}

/// Energies needed by all three ratios for one (reference, estimate) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairEnergies {
    /// `Σ s²`
    pub reference: f64,
    /// `Σ (s − ŝ)²`
    pub error: f64,
    /// `Σ n²`
    pub noise: f64,
    /// `Σ (ŝ − n)²`
    pub estimate_minus_noise: f64,
}

impl PairEnergies {
    pub fn measure(reference: &[f64], estimate: &[f64], noise: Option<&[f64]>) -> Result<Self> {
        check_len(reference.len(), estimate.len(), "estimate")?;
        if let Some(n) = noise {
            check_len(reference.len(), n.len(), "noise")?;
        }
        let mut e = PairEnergies {
            reference: 0.0,
            error: 0.0,
            noise: 0.0,
            estimate_minus_noise: 0.0,
        };
        for t in 0..reference.len() {
            let (s, s_hat) = (reference[t], estimate[t]);
            let n = noise.map_or(0.0, |n| n[t]);
            e.reference += s * s;
            e.error += (s - s_hat) * (s - s_hat);
            e.noise += n * n;
            e.estimate_minus_noise += (s_hat - n) * (s_hat - n);
        }
        if e.reference <= 0.0 {
            return Err(Error::invalid("reference signal is all zero"));
        }
        Ok(e)
    }

    pub fn sdr(&self) -> (f64, bool) {
        if self.error < PERFECT_RATIO * self.reference {
            return (CAP_DB, true);
        }
        (10.0 * (self.reference / self.error).log10(), false)
    }

    pub fn sir(&self) -> (f64, bool) {
        if self.noise == 0.0 {
            return self.sdr();
        }
        let floor = SIR_FLOOR_RATIO * self.reference;
        let denom = self.error - self.noise;
        if denom < floor {
            return (10.0 * (self.reference / floor).log10(), true);
        }
        (10.0 * (self.reference / denom).log10(), false)
    }

    pub fn sar(&self) -> (f64, bool) {
        if self.error < PERFECT_RATIO * self.reference {
            return (CAP_DB, true);
        }
        let num = self.estimate_minus_noise.max(SAR_FLOOR);
        let den = self.error.max(SAR_FLOOR);
        let v = 10.0 * (num / den).log10();
        let clamped = v.clamp(-CAP_DB, CAP_DB);
        (clamped, self.estimate_minus_noise < SAR_FLOOR || self.error < SAR_FLOOR || clamped != v)
    }

    pub fn triple(&self) -> (EvalTriple, MetricFlags) {
        let (sdr, sdr_capped) = self.sdr();
        let (sir, sir_clamped) = self.sir();
        let (sar, sar_clamped) = self.sar();
        (
            EvalTriple { sdr, sir, sar },
            MetricFlags {
                sdr_capped,
                sir_clamped,
                sar_clamped,
            },
        )
    }
}

fn check_len(expected: usize, got: usize, what: &str) -> Result<()> {
    if expected != got {
        return Err(Error::invalid(format!(
            "{what} has {got} samples, reference has {expected}"
        )));
    }
    Ok(())
}

pub fn sdr(reference: &[f64], estimate: &[f64]) -> Result<f64> {
    Ok(PairEnergies::measure(reference, estimate, None)?.sdr().0)
}

pub fn sir(reference: &[f64], estimate: &[f64], noise: &[f64]) -> Result<f64> {
    Ok(PairEnergies::measure(reference, estimate, Some(noise))?.sir().0)
}

pub fn sar(reference: &[f64], estimate: &[f64], noise: &[f64]) -> Result<f64> {
    Ok(PairEnergies::measure(reference, estimate, Some(noise))?.sar().0)
}

pub fn evaluate(reference: &[f64], estimate: &[f64], noise: &[f64]) -> Result<(EvalTriple, MetricFlags)> {
    Ok(PairEnergies::measure(reference, estimate, Some(noise))?.triple())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitnessWeights {
    pub w_sdr: f64,
    pub w_sir: f64,
    pub w_sar: f64,
    pub w_corr: f64,
}

impl Default for FitnessWeights {
    fn default() -> Self {
        FitnessWeights {
            w_sdr: 0.5,
            w_sir: 0.3,
            w_sar: 0.2,
            w_corr: 1.0,
        }
    }
}

impl FitnessWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.w_sdr, self.w_sir, self.w_sar, self.w_corr];
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("fitness weights must be finite and non-negative"));
        }
        if w.iter().all(|v| *v == 0.0) {
            return Err(Error::invalid("fitness weights must not all be zero"));
        }
        Ok(())
    }

    pub fn combine(&self, triples: &[EvalTriple], penalty: f64) -> f64 {
        let n = triples.len().max(1) as f64;
        let mean = |f: fn(&EvalTriple) -> f64| triples.iter().map(f).sum::<f64>() / n;
        self.w_sdr * mean(|t| t.sdr) + self.w_sir * mean(|t| t.sir) + self.w_sar * mean(|t| t.sar)
            - self.w_corr * penalty
    }
}

/// Weighted metric means minus the correlation penalty. Estimates must
/// already be aligned with the references.
pub fn fitness(
    estimates: &SeparatedSources,
    references: &[Vec<f64>],
    noise: &[f64],
    weights: &FitnessWeights,
) -> Result<f64> {
    if estimates.len() != references.len() {
        return Err(Error::invalid(format!(
            "{} estimates for {} references",
            estimates.len(),
            references.len()
        )));
    }
    let triples = references
        .iter()
        .zip(&estimates.signals)
        .map(|(r, e)| evaluate(r, e, noise).map(|(t, _)| t))
        .collect::<Result<Vec<_>>>()?;
    Ok(weights.combine(&triples, correlation_penalty(estimates)))
}

pub const MAX_ALIGN_SOURCES: usize = 6;

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut p: Vec<usize> = (0..n).collect();
    loop {
        out.push(p.clone());
        let Some(i) = (1..n).rev().find(|&i| p[i - 1] < p[i]) else {
            return out;
        };
        let j = (i..n).rev().find(|&j| p[j] > p[i - 1]).unwrap();
        p.swap(i - 1, j);
        p[i..].reverse();
    }
}

/// Permutation maximizing the mean of `score[i][perm[i]]`, where row `i` is a
/// reference and column `j` an estimate. Ties go to the lexicographically
/// smallest permutation.
pub fn best_permutation(score: &[Vec<f64>]) -> Result<Vec<usize>> {
    let n = score.len();
    if n > MAX_ALIGN_SOURCES {
        return Err(Error::Unsupported(format!(
            "permutation alignment supports at most {MAX_ALIGN_SOURCES} sources, got {n}"
        )));
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for perm in permutations(n) {
        let total: f64 = perm.iter().enumerate().map(|(i, &j)| score[i][j]).sum();
        if best.as_ref().is_none_or(|(b, _)| total > *b) {
            best = Some((total, perm));
        }
    }
    Ok(best.map(|(_, p)| p).unwrap_or_default())
}

/// Estimate index for each reference, maximizing mean SDR.
pub fn align_sources(references: &[Vec<f64>], estimates: &[Vec<f64>]) -> Result<Vec<usize>> {
    if references.len() != estimates.len() {
        return Err(Error::invalid(format!(
            "{} estimates for {} references",
            estimates.len(),
            references.len()
        )));
    }
    if references.len() > MAX_ALIGN_SOURCES {
        return Err(Error::Unsupported(format!(
            "permutation alignment supports at most {MAX_ALIGN_SOURCES} sources, got {}",
            references.len()
        )));
    }
    let score = references
        .iter()
        .map(|r| estimates.iter().map(|e| sdr(r, e)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    best_permutation(&score)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sine(n: usize, k: f64) -> Vec<f64> {
        (0..n).map(|i| (2.0 * PI * k * i as f64 / n as f64).sin()).collect()
    }

    fn cosine(n: usize, k: f64) -> Vec<f64> {
        (0..n).map(|i| (2.0 * PI * k * i as f64 / n as f64).cos()).collect()
    }

    #[test]
    fn sdr_examples() {
        let s = sine(256, 3.0);
        assert_eq!(sdr(&s, &s).unwrap(), CAP_DB);
        let half: Vec<f64> = s.iter().map(|v| 0.5 * v).collect();
        assert!((sdr(&s, &half).unwrap() - 10.0 * 4f64.log10()).abs() < 1e-12);
        assert!(sdr(&s, &[0.0; 256]).unwrap().abs() < 1e-12);
        assert!(sdr(&[0.0; 4], &[1.0; 4]).is_err());
        assert!(sdr(&s, &s[..10]).is_err());
    }

    #[test]
    fn sir_examples() {
        let s = sine(256, 3.0);
        let e: Vec<f64> = s.iter().map(|v| 0.8 * v + 0.01).collect();
        let zeros = vec![0.0; 256];
        assert_eq!(sir(&s, &e, &zeros).unwrap(), sdr(&s, &e).unwrap());

        // error energy below noise energy -> clamped denominator
        let big_noise: Vec<f64> = s.iter().map(|v| 2.0 * v).collect();
        let v = sir(&s, &e, &big_noise).unwrap();
        assert!((v - 10.0 * (1.0 / SIR_FLOOR_RATIO).log10()).abs() < 1e-9);

        let es: f64 = s.iter().map(|v| v * v).sum();
        let scale = (0.5f64).sqrt();
        let n: Vec<f64> = cosine(256, 5.0)
            .iter()
            .map(|v| v * scale * (es / 128.0).sqrt())
            .collect();
        let en: f64 = n.iter().map(|v| v * v).sum();
        assert!((en / es - 0.5).abs() < 1e-12);
        assert!((sir(&s, &zeros, &n).unwrap() - 10.0 * 2f64.log10()).abs() < 1e-9);
    }

    #[test]
    fn sar_examples() {
        let s = sine(64, 2.0);
        let zeros = vec![0.0; 64];
        assert_eq!(sar(&s, &s, &zeros).unwrap(), CAP_DB);
        let e: Vec<f64> = s.iter().map(|v| 0.5 * v).collect();
        assert_eq!(sar(&s, &e, &e).unwrap(), -CAP_DB);
        assert!(sar(&[1.0, 0.0], &[1.0, 1.0], &[0.0, 1.0]).unwrap().abs() < 1e-12);
    }

    #[test]
    fn flags_report_clamps() {
        let s = sine(64, 2.0);
        let zeros = vec![0.0; 64];
        let (t, f) = evaluate(&s, &s, &zeros).unwrap();
        assert_eq!(t, EvalTriple { sdr: CAP_DB, sir: CAP_DB, sar: CAP_DB });
        assert!(f.sdr_capped && f.sir_clamped == f.sdr_capped && f.sar_clamped);
        let e: Vec<f64> = s.iter().map(|v| 0.9 * v).collect();
        let (_, f) = evaluate(&s, &e, &s).unwrap();
        assert!(f.sir_clamped && !f.sdr_capped);
    }

    #[test]
    fn default_weights_and_validation() {
        let w = FitnessWeights::default();
        assert_eq!((w.w_sdr, w.w_sir, w.w_sar, w.w_corr), (0.5, 0.3, 0.2, 1.0));
        assert!(FitnessWeights { w_sdr: 0.0, w_sir: 0.0, w_sar: 0.0, w_corr: 0.0 }.validate().is_err());
        assert!(FitnessWeights { w_sdr: -1.0, ..w }.validate().is_err());
    }

    #[test]
    fn perfect_orthogonal_separation_scores_cap() {
        let refs = vec![sine(512, 4.0), cosine(512, 4.0)];
        let est = SeparatedSources { signals: refs.clone() };
        let f = fitness(&est, &refs, &vec![0.0; 512], &FitnessWeights::default()).unwrap();
        assert!((f - CAP_DB).abs() < 1e-6, "{f}");
    }

    #[test]
    fn duplicate_outputs_pay_full_penalty() {
        let refs = vec![sine(512, 4.0), cosine(512, 7.0)];
        let mix: Vec<f64> = refs[0].iter().zip(&refs[1]).map(|(a, b)| a + b).collect();
        let est = SeparatedSources { signals: vec![mix.clone(), mix.clone()] };
        let noise = vec![0.0; 512];
        let w = FitnessWeights::default();
        let f = fitness(&est, &refs, &noise, &w).unwrap();
        let no_pen = fitness(&est, &refs, &noise, &FitnessWeights { w_corr: 0.0, ..w }).unwrap();
        assert!((no_pen - f - 1.0).abs() < 1e-9);
    }

    #[test]
    fn permutation_enumeration() {
        assert_eq!(permutations(3).len(), 6);
        assert_eq!(permutations(3)[0], vec![0, 1, 2]);
        assert_eq!(permutations(3)[5], vec![2, 1, 0]);
        assert_eq!(permutations(0), vec![Vec::<usize>::new()]);
    }

    #[test]
    fn alignment_examples() {
        let a = sine(300, 3.0);
        let b = cosine(300, 5.0);
        let refs = vec![a.clone(), b.clone()];
        assert_eq!(align_sources(&refs, &refs).unwrap(), vec![0, 1]);
        assert_eq!(align_sources(&refs, &[b, a]).unwrap(), vec![1, 0]);
        let seven: Vec<Vec<f64>> = (0..7).map(|k| sine(64, k as f64 + 1.0)).collect();
        assert!(matches!(align_sources(&seven, &seven), Err(Error::Unsupported(_))));
    }

    #[test]
    fn alignment_ties_pick_smallest_permutation() {
        let score = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        assert_eq!(best_permutation(&score).unwrap(), vec![0, 1]);
    }
}
