//! Built-in synthetic scenes.
//!
//! Source spectra are laid out on the same mel band grid the masks use.
//! The outermost bands are left empty since post-processing trims them.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::config::{Config, RecipeKind};
use crate::error::{Error, Result};
use crate::features::{hz_to_mel, mel_band_edges, mel_to_hz};

use super::mixture::{synthesize_mixture, Mixture, MixtureSpec, NoiseSpec};
use super::stream;

#[derive(Debug, Clone, PartialEq)]
pub struct Recipe {
    pub kind: RecipeKind,
    pub n_sources: usize,
    pub n_bands: usize,
    pub sample_rate: u32,
    pub duration_s: f64,
    pub snr_db: f64,
    pub overlap: f64,
}

impl Recipe {
    pub fn from_config(config: &Config) -> Self {
        let e = &config.experiment;
        Recipe {
            kind: e.recipe,
            n_sources: e.n_sources,
            n_bands: config.masks.n_bands,
            sample_rate: e.sample_rate,
            duration_s: e.duration_s,
            snr_db: e.snr_db,
            overlap: e.overlap,
        }
    }

    fn len(&self) -> usize {
        (self.duration_s * self.sample_rate as f64).round() as usize
    }

    /// Mel range covered by the inner bands, split into one slot per band.
    fn slots(&self) -> Result<Vec<(f64, f64)>> {
        if self.n_bands < 3 || self.n_sources == 0 {
            return Err(Error::invalid("recipes need at least 3 bands and one source"));
        }
        let edges = mel_band_edges(self.n_bands, self.sample_rate);
        Ok((1..self.n_bands - 1)
            .map(|b| (hz_to_mel(edges[b]), hz_to_mel(edges[b + 1])))
            .collect())
    }

    pub fn spec(&self, seed: u64) -> Result<MixtureSpec> {
        let len = self.len();
        if len == 0 {
            return Err(Error::invalid("recipe duration is shorter than one sample"));
        }
        let mut rng = stream(seed, 0, 1);
        let sr = self.sample_rate as f64;
        let slots = self.slots()?;
        let n = self.n_sources;
        let mut sources = vec![vec![0.0; len]; n];
        let mut filters = vec![vec![1.0]; n];

        match self.kind {
            RecipeKind::BandDisjoint => {
                for (b, (lo, hi)) in slots.iter().enumerate() {
                    let f = mel_to_hz(lo + (0.3 + 0.4 * rng.random::<f64>()) * (hi - lo));
                    let amp = rng.random_range(0.5..1.0);
                    let phase = rng.random_range(0.0..2.0 * PI);
                    for (t, v) in sources[b % n].iter_mut().enumerate() {
                        *v += amp * (2.0 * PI * f * t as f64 / sr + phase).sin();
                    }
                }
            }
            RecipeKind::OverlappingBands | RecipeKind::MovingGain => {
                let overlap = if self.kind == RecipeKind::MovingGain { 0.0 } else { self.overlap };
                for (j, pair) in slots.chunks(2).enumerate() {
                    let (lo, hi) = (pair[0].0, pair[pair.len() - 1].1);
                    let width = hi - lo;
                    let shift = rng.random_range(-0.15..0.15) * width;
                    let lo = mel_to_hz((lo - overlap * width / 2.0 + shift).max(0.0));
                    let hi = mel_to_hz(hi + overlap * width / 2.0 + shift);
                    let amp = rng.random_range(0.4..1.0);
                    let rate = rng.random_range(1.0..4.0);
                    let phase = rng.random_range(0.0..2.0 * PI);
                    let band = band_noise(&mut rng, len, sr, lo, hi);
                    for (t, (v, x)) in sources[j % n].iter_mut().zip(band).enumerate() {
                        let am = 1.0 + 0.5 * (2.0 * PI * rate * t as f64 / sr + phase).sin();
                        *v += amp * am * x;
                    }
                }
                if self.kind == RecipeKind::MovingGain {
                    for (i, s) in sources.iter_mut().enumerate() {
                        let (g0, g1) = if i % 2 == 0 { (0.2, 1.0) } else { (1.0, 0.2) };
                        for (t, v) in s.iter_mut().enumerate() {
                            *v *= g0 + (g1 - g0) * t as f64 / len as f64;
                        }
                    }
                    for (i, a) in filters.iter_mut().enumerate() {
                        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                        *a = vec![1.0, 0.3 * sign, 0.1];
                    }
                }
            }
        }
        if sources.iter().any(|s| s.iter().all(|v| *v == 0.0)) {
            return Err(Error::invalid(format!(
                "{} bands cannot give {} sources a band each",
                self.n_bands, n
            )));
        }
        Ok(MixtureSpec {
            sources,
            filters,
            noise: NoiseSpec::White { snr_db: self.snr_db },
            sample_rate: self.sample_rate,
        })
    }

    pub fn generate(&self, seed: u64, name: impl Into<String>) -> Result<Mixture> {
        let mut m = synthesize_mixture(&self.spec(seed)?, seed)?;
        m.name = name.into();
        Ok(m)
    }
}

/// Unit-RMS Gaussian noise restricted to `[lo, hi]` Hz.
fn band_noise<R: Rng>(rng: &mut R, len: usize, sr: f64, lo: f64, hi: f64) -> Vec<f64> {
    let mut buf: Vec<Complex64> = (0..len)
        .map(|_| Complex64::new(rng.sample(StandardNormal), 0.0))
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buf);
    for (k, v) in buf.iter_mut().enumerate() {
        let f = k.min(len - k) as f64 * sr / len as f64;
        if f < lo || f > hi {
            *v = Complex64::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    let x: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / len as f64).sqrt();
    if rms > 0.0 {
        x.iter().map(|v| v / rms).collect()
    } else {
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{stft, StftConfig};
    use crate::sepmodel::bin_bands;

    fn recipe(kind: RecipeKind) -> Recipe {
        Recipe {
            kind,
            n_sources: 2,
            n_bands: 16,
            sample_rate: 16000,
            duration_s: 0.5,
            snr_db: 10.0,
            overlap: 0.3,
        }
    }

    fn band_energy(x: &[f64]) -> Vec<f64> {
        let cfg = StftConfig::default();
        let bands = bin_bands(&cfg, &mel_band_edges(16, 16000)).unwrap();
        let spec = stft(x, &cfg).unwrap();
        let mut e = vec![0.0; 16];
        for frame in &spec.frames {
            for (k, v) in frame.iter().enumerate() {
                e[bands[k]] += v.norm_sqr();
            }
        }
        e
    }

    #[test]
    fn band_disjoint_sources_own_alternate_bands() {
        let m = recipe(RecipeKind::BandDisjoint).generate(3, "a").unwrap();
        let e0 = band_energy(&m.references[0]);
        let e1 = band_energy(&m.references[1]);
        for b in 1..15 {
            let (own, other) = if (b - 1) % 2 == 0 { (e0[b], e1[b]) } else { (e1[b], e0[b]) };
            assert!(own > 100.0 * other, "band {b}: {own} vs {other}");
        }
    }

    #[test]
    fn recipes_are_seeded() {
        for kind in [RecipeKind::BandDisjoint, RecipeKind::OverlappingBands, RecipeKind::MovingGain] {
            let r = recipe(kind);
            let a = r.generate(11, "x").unwrap();
            assert_eq!(a, r.generate(11, "x").unwrap());
            assert_ne!(a.mixture, r.generate(12, "x").unwrap().mixture);
            assert_eq!(a.len(), 8000);
            assert_eq!(a.references.len(), 2);
        }
    }

    #[test]
    fn overlap_shares_energy_between_sources() {
        let mut r = recipe(RecipeKind::OverlappingBands);
        let shared = |r: &Recipe| {
            let m = r.generate(5, "o").unwrap();
            let e0 = band_energy(&m.references[0]);
            let e1 = band_energy(&m.references[1]);
            (1..15).filter(|&b| e0[b].min(e1[b]) > 0.05 * e0[b].max(e1[b])).count()
        };
        r.overlap = 0.0;
        let none = shared(&r);
        r.overlap = 1.0;
        assert!(shared(&r) > none);
    }

    #[test]
    fn band_noise_stays_in_band() {
        let mut rng = stream(1, 2, 3);
        let x = band_noise(&mut rng, 4096, 16000.0, 1000.0, 2000.0);
        let mut buf: Vec<Complex64> = x.iter().map(|v| Complex64::new(*v, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(4096).process(&mut buf);
        let total: f64 = buf.iter().map(|c| c.norm_sqr()).sum();
        let outside: f64 = buf
            .iter()
            .enumerate()
            .filter(|(k, _)| {
                let f = (*k).min(4096 - k) as f64 * 16000.0 / 4096.0;
                !(1000.0..=2000.0).contains(&f)
            })
            .map(|(_, c)| c.norm_sqr())
            .sum();
        assert!(outside < 1e-20 * total);
    }

    #[test]
    fn too_few_bands_is_an_error() {
        let mut r = recipe(RecipeKind::BandDisjoint);
        r.n_sources = 5;
        r.n_bands = 5;
        assert!(r.spec(0).is_err());
    }
}
