//! Per-source, per-band soft masks applied in the STFT domain.
//!
//! A genome of `n_sources × n_bands` qubits decodes to raw gains in `[0, 1]`
//! (`|β|²`), which are normalized across sources within each band into
//! ratio masks `g_i / (Σ_k g_k + ε)`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{istft, mel_band_edges, Spectrogram, StftConfig};
use crate::qiga::Genome;

pub const MASK_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskParams {
    /// `n_sources × n_bands` raw gains in `[0, 1]`.
    pub gains: Vec<Vec<f64>>,
    /// `n_bands + 1` strictly increasing edges in Hz, from 0 to Nyquist.
    pub band_edges: Vec<f64>,
}

impl MaskParams {
    pub fn new(gains: Vec<Vec<f64>>, band_edges: Vec<f64>) -> Result<Self> {
        let p = MaskParams { gains, band_edges };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let n_bands = self.n_bands();
        if n_bands == 0 {
            return Err(Error::invalid("mask needs at least one band"));
        }
        if self.band_edges[0] != 0.0 {
            return Err(Error::invalid("first band edge must be 0 Hz"));
        }
        if !self.band_edges.windows(2).all(|w| w[1] > w[0]) {
            return Err(Error::invalid("band edges must be strictly increasing"));
        }
        if self.gains.is_empty() {
            return Err(Error::invalid("mask needs at least one source"));
        }
        for row in &self.gains {
            if row.len() != n_bands {
                return Err(Error::invalid(format!(
                    "gain row has {} bands, expected {n_bands}",
                    row.len()
                )));
            }
            if row.iter().any(|g| !(0.0..=1.0).contains(g)) {
                return Err(Error::invalid("gains must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn n_sources(&self) -> usize {
        self.gains.len()
    }

    pub fn n_bands(&self) -> usize {
        self.band_edges.len().saturating_sub(1)
    }

    /// Normalized masks, `n_sources × n_bands`.
    pub fn masks(&self) -> Vec<Vec<f64>> {
        normalize_gains(&self.gains)
    }

    /// True when every band splits the mixture evenly across sources.
    pub fn is_degenerate(&self, tol: f64) -> bool {
        let even = 1.0 / self.n_sources() as f64;
        self.masks().iter().flatten().all(|m| (m - even).abs() <= tol)
    }
}

pub fn normalize_gains(gains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n_bands = gains.first().map_or(0, Vec::len);
    let totals: Vec<f64> = (0..n_bands)
        .map(|b| gains.iter().map(|row| row[b]).sum::<f64>() + MASK_EPSILON)
        .collect();
    gains
        .iter()
        .map(|row| row.iter().zip(&totals).map(|(g, t)| g / t).collect())
        .collect()
}

/// Decodes qubit `j` to `|β_j|²`, row-major by (source, band).
pub fn decode_genome(
    genome: &Genome,
    n_sources: usize,
    n_bands: usize,
    sample_rate: u32,
) -> Result<MaskParams> {
    if genome.len() != n_sources * n_bands {
        return Err(Error::invalid(format!(
            "genome has {} qubits, expected {n_sources} × {n_bands}",
            genome.len()
        )));
    }
    let gains = genome
        .qubits
        .chunks(n_bands)
        .map(|row| row.iter().map(|q| q.prob_one().clamp(0.0, 1.0)).collect())
        .collect();
    MaskParams::new(gains, mel_band_edges(n_bands, sample_rate))
}

/// Band index of every one-sided STFT bin.
pub fn bin_bands(config: &StftConfig, band_edges: &[f64]) -> Result<Vec<usize>> {
    let nyquist = config.sample_rate as f64 / 2.0;
    let top = *band_edges.last().unwrap_or(&0.0);
    if (top - nyquist).abs() > 1e-6 * nyquist {
        return Err(Error::invalid(format!(
            "band edges end at {top} Hz but the spectrogram's Nyquist is {nyquist} Hz"
        )));
    }
    let n_bands = band_edges.len() - 1;
    Ok((0..config.n_bins())
        .map(|k| {
            let f = config.bin_frequency(k);
            band_edges[1..]
                .iter()
                .position(|&hi| f < hi)
                .unwrap_or(n_bands - 1)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparatedSources {
    pub signals: Vec<Vec<f64>>,
}

impl SeparatedSources {
    pub fn len(&self) -> usize {
        self.signals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signals.is_empty()
    }

    pub fn permuted(&self, perm: &[usize]) -> SeparatedSources {
        SeparatedSources {
            signals: perm.iter().map(|&j| self.signals[j].clone()).collect(),
        }
    }
}

pub fn apply_masks(mixture: &Spectrogram, params: &MaskParams) -> Result<SeparatedSources> {
    params.validate()?;
    let bands = bin_bands(&mixture.config, &params.band_edges)?;
    let signals = params
        .masks()
        .par_iter()
        .map(|mask| {
            let per_bin: Vec<f64> = bands.iter().map(|&b| mask[b]).collect();
            istft(&mixture.scaled_bins(&per_bin))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SeparatedSources { signals })
}

/// The mixture split into one time-domain signal per band, so that any
/// band mask reconstructs as a weighted sum of these components.
#[derive(Debug, Clone)]
pub struct BandDecomposition {
    pub components: Vec<Vec<f64>>,
}

impl BandDecomposition {
    pub fn new(mixture: &Spectrogram, band_edges: &[f64]) -> Result<Self> {
        let bands = bin_bands(&mixture.config, band_edges)?;
        let components = (0..band_edges.len() - 1)
            .into_par_iter()
            .map(|b| {
                let sel: Vec<f64> = bands.iter().map(|&k| if k == b { 1.0 } else { 0.0 }).collect();
                istft(&mixture.scaled_bins(&sel))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BandDecomposition { components })
    }

    pub fn reconstruct(&self, masks: &[Vec<f64>]) -> SeparatedSources {
        let len = self.components.first().map_or(0, Vec::len);
        let signals = masks
            .iter()
            .map(|mask| {
                let mut out = vec![0.0; len];
                for (m, comp) in mask.iter().zip(&self.components) {
                    for (o, c) in out.iter_mut().zip(comp) {
                        *o += m * c;
                    }
                }
                out
            })
            .collect();
        SeparatedSources { signals }
    }
}

/// Pearson correlation; `None` if either signal has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len().min(b.len()) as f64;
    if n == 0.0 {
        return None;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if va <= 0.0 || vb <= 0.0 {
        return None;
    }
    Some((cov / (va.sqrt() * vb.sqrt())).clamp(-1.0, 1.0))
}

/// Mean `|ρ|` over unordered pairs of separated signals.
pub fn correlation_penalty(sources: &SeparatedSources) -> f64 {
    let n = sources.len();
    if n < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            total += pearson(&sources.signals[i], &sources.signals[j]).map_or(0.0, f64::abs);
            pairs += 1;
        }
    }
    total / pairs as f64
}

/// Best band gains on a uniform grid, chosen per band by exhaustive search
/// to minimize the STFT-domain error against the reference spectrograms.
/// Ties keep the lexicographically first gain vector.
pub fn oracle_band_gains(
    mixture: &Spectrogram,
    references: &[Spectrogram],
    band_edges: &[f64],
    grid_steps: usize,
) -> Result<MaskParams> {
    let n_src = references.len();
    if n_src == 0 || n_src > 6 {
        return Err(Error::Unsupported(format!(
            "oracle search supports 1..=6 sources, got {n_src}"
        )));
    }
    if grid_steps == 0 {
        return Err(Error::invalid("grid_steps must be positive"));
    }
    let bands = bin_bands(&mixture.config, band_edges)?;
    let n_bands = band_edges.len() - 1;

    // Per band: Σ|X|², Re Σ X̄·S_i, Σ|S_i|².
    let mut mix_power = vec![0.0; n_bands];
    let mut cross = vec![vec![0.0; n_bands]; n_src];
    let mut ref_power = vec![vec![0.0; n_bands]; n_src];
    for (t, frame) in mixture.frames.iter().enumerate() {
        for (k, x) in frame.iter().enumerate() {
            let b = bands[k];
            mix_power[b] += x.norm_sqr();
            for (i, r) in references.iter().enumerate() {
                let s: Complex64 = r.frames[t][k];
                cross[i][b] += (x.conj() * s).re;
                ref_power[i][b] += s.norm_sqr();
            }
        }
    }

    let levels: Vec<f64> = (0..=grid_steps).map(|s| s as f64 / grid_steps as f64).collect();
    let combos = (grid_steps + 1).pow(n_src as u32);
    let mut gains = vec![vec![0.0; n_bands]; n_src];
    let mut g = vec![0.0; n_src];
    for b in 0..n_bands {
        let mut best = (f64::INFINITY, 0usize);
        for c in 0..combos {
            let mut rem = c;
            for i in (0..n_src).rev() {
                g[i] = levels[rem % (grid_steps + 1)];
                rem /= grid_steps + 1;
            }
            let total: f64 = g.iter().sum::<f64>() + MASK_EPSILON;
            let err: f64 = (0..n_src)
                .map(|i| {
                    let m = g[i] / total;
                    m * m * mix_power[b] - 2.0 * m * cross[i][b] + ref_power[i][b]
                })
                .sum();
            if err < best.0 {
                best = (err, c);
            }
        }
        let mut rem = best.1;
        for i in (0..n_src).rev() {
            gains[i][b] = levels[rem % (grid_steps + 1)];
            rem /= grid_steps + 1;
        }
    }
    MaskParams::new(gains, band_edges.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::stft;
    use crate::qstate::QubitPair;
    use num_complex::Complex64;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn tone(freq: f64, sr: f64, len: usize) -> Vec<f64> {
        (0..len).map(|i| (2.0 * PI * freq * i as f64 / sr).sin()).collect()
    }

    fn energy(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    #[test]
    fn decode_examples() {
        let q = |a: f64, b: f64| QubitPair::new(Complex64::new(a, 0.0), Complex64::new(b, 0.0)).unwrap();
        let g = Genome {
            qubits: vec![q(1.0, 0.0), q(0.0, 1.0), q(FRAC_1_SQRT_2, FRAC_1_SQRT_2), q(1.0, 0.0)],
        };
        let p = decode_genome(&g, 2, 2, 16000).unwrap();
        assert_eq!(p.gains[0][0], 0.0);
        assert_eq!(p.gains[0][1], 1.0);
        assert!((p.gains[1][0] - 0.5).abs() < 1e-15);
        assert!(decode_genome(&g, 3, 2, 16000).is_err());
    }

    #[test]
    fn gain_validation() {
        let edges = mel_band_edges(2, 8000);
        assert!(MaskParams::new(vec![vec![0.5, 1.2]], edges.clone()).is_err());
        assert!(MaskParams::new(vec![vec![0.5]], edges.clone()).is_err());
        assert!(MaskParams::new(vec![vec![0.5, 0.5]], vec![0.0, 3000.0, 2000.0]).is_err());
        assert!(MaskParams::new(vec![vec![0.5, 0.5]], edges).is_ok());
    }

    #[test]
    fn single_source_unit_gain_is_round_trip() {
        let cfg = StftConfig::default();
        let x = tone(440.0, 16000.0, 8000);
        let spec = stft(&x, &cfg).unwrap();
        let p = MaskParams::new(vec![vec![1.0; 16]], mel_band_edges(16, 16000)).unwrap();
        let out = apply_masks(&spec, &p).unwrap();
        let rt = istft(&spec).unwrap();
        for (a, b) in out.signals[0].iter().zip(&rt) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn equal_gains_split_evenly() {
        let cfg = StftConfig::default();
        let x = tone(1000.0, 16000.0, 6000);
        let spec = stft(&x, &cfg).unwrap();
        let p = MaskParams::new(vec![vec![0.3; 16]; 3], mel_band_edges(16, 16000)).unwrap();
        let out = apply_masks(&spec, &p).unwrap();
        let rt = istft(&spec).unwrap();
        for s in &out.signals {
            for (a, b) in s.iter().zip(&rt) {
                assert!((a - b / 3.0).abs() < 1e-7);
            }
        }
        assert!(p.is_degenerate(1e-6));
    }

    #[test]
    fn complementary_bands_separate_tones() {
        let cfg = StftConfig::default();
        let edges = mel_band_edges(16, 16000);
        // 300 Hz sits in a low band, 3000 Hz in a high one.
        let lo = tone(300.0, 16000.0, 16000);
        let hi: Vec<f64> = tone(3000.0, 16000.0, 16000).iter().map(|v| 0.7 * v).collect();
        let mix: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| a + b).collect();
        let split = edges.iter().position(|&e| e > 1000.0).unwrap() - 1;
        let gains = vec![
            (0..16).map(|b| if b < split { 1.0 } else { 0.0 }).collect(),
            (0..16).map(|b| if b < split { 0.0 } else { 1.0 }).collect(),
        ];
        let p = MaskParams::new(gains, edges).unwrap();
        let out = apply_masks(&stft(&mix, &cfg).unwrap(), &p).unwrap();
        for (est, truth) in out.signals.iter().zip([&lo, &hi]) {
            let kept: f64 = est.iter().zip(truth.iter()).map(|(e, t)| e * t).sum::<f64>() / energy(truth).sqrt();
            assert!(kept * kept / energy(truth) > 0.9);
        }
    }

    #[test]
    fn masks_sum_to_at_most_one() {
        let gains = vec![vec![0.2, 0.0, 1.0], vec![0.7, 0.0, 1.0]];
        let m = normalize_gains(&gains);
        for (a, b) in m[0].iter().zip(&m[1]) {
            let s = a + b;
            assert!(s <= 1.0 + 1e-6);
        }
        assert_eq!(m[0][1], 0.0);
    }

    #[test]
    fn band_decomposition_matches_direct_masking() {
        let cfg = StftConfig::default();
        let x: Vec<f64> = tone(700.0, 16000.0, 7000)
            .iter()
            .zip(tone(5100.0, 16000.0, 7000))
            .map(|(a, b)| a + 0.3 * b)
            .collect();
        let spec = stft(&x, &cfg).unwrap();
        let edges = mel_band_edges(16, 16000);
        let gains = vec![
            (0..16).map(|b| b as f64 / 15.0).collect(),
            (0..16).map(|b| (b * 7 % 16) as f64 / 15.0).collect(),
        ];
        let p = MaskParams::new(gains, edges.clone()).unwrap();
        let direct = apply_masks(&spec, &p).unwrap();
        let fast = BandDecomposition::new(&spec, &edges).unwrap().reconstruct(&p.masks());
        for (a, b) in direct.signals.iter().zip(&fast.signals) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn penalty_examples() {
        let n = 800;
        let s: Vec<f64> = (0..n).map(|i| (2.0 * PI * 4.0 * i as f64 / n as f64).sin()).collect();
        let c: Vec<f64> = (0..n).map(|i| (2.0 * PI * 4.0 * i as f64 / n as f64).cos()).collect();
        let same = SeparatedSources { signals: vec![s.clone(), s.clone()] };
        assert!((correlation_penalty(&same) - 1.0).abs() < 1e-12);
        let orth = SeparatedSources { signals: vec![s.clone(), c.clone()] };
        assert!(correlation_penalty(&orth).abs() < 1e-6);
        let three = SeparatedSources { signals: vec![s.clone(), s.clone(), c] };
        // pairs: (s,s)=1, (s,c)=0, (s,c)=0
        assert!((correlation_penalty(&three) - 1.0 / 3.0).abs() < 1e-6);
        let one = SeparatedSources { signals: vec![s.clone()] };
        assert_eq!(correlation_penalty(&one), 0.0);
        let flat = SeparatedSources { signals: vec![s, vec![0.25; n]] };
        assert_eq!(correlation_penalty(&flat), 0.0);
    }

    #[test]
    fn oracle_picks_binary_masks_for_disjoint_tones() {
        let cfg = StftConfig::default();
        let edges = mel_band_edges(16, 16000);
        let lo = tone(300.0, 16000.0, 8000);
        let hi = tone(3000.0, 16000.0, 8000);
        let mix: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| a + b).collect();
        let refs = [stft(&lo, &cfg).unwrap(), stft(&hi, &cfg).unwrap()];
        let p = oracle_band_gains(&stft(&mix, &cfg).unwrap(), &refs, &edges, 10).unwrap();
        let m = p.masks();
        let b_lo = edges.iter().position(|&e| e > 300.0).unwrap() - 1;
        let b_hi = edges.iter().position(|&e| e > 3000.0).unwrap() - 1;
        assert!(m[0][b_lo] > 0.99 && m[1][b_lo] < 0.01);
        assert!(m[1][b_hi] > 0.99 && m[0][b_hi] < 0.01);
    }
}
