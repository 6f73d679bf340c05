use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::stream;

/// Peak level the mixture and its parts are normalized to.
pub const PEAK_LEVEL: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSpec {
    None,
    Signal(Vec<f64>),
    /// White Gaussian noise scaled to an exact SNR against the clean mix.
    White { snr_db: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSpec {
    pub sources: Vec<Vec<f64>>,
    /// One FIR filter per source. `[g]` is an instantaneous gain.
    pub filters: Vec<Vec<f64>>,
    pub noise: NoiseSpec,
    pub sample_rate: u32,
}

impl MixtureSpec {
    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.sources.first() else {
            return Err(Error::invalid("mixture needs at least one source"));
        };
        let len = first.len();
        if len == 0 {
            return Err(Error::invalid("sources must not be empty"));
        }
        if self.sources.iter().any(|s| s.len() != len) {
            return Err(Error::invalid("sources must have equal lengths"));
        }
        if self.filters.len() != self.sources.len() {
            return Err(Error::invalid(format!(
                "{} filters for {} sources",
                self.filters.len(),
                self.sources.len()
            )));
        }
        if self.filters.iter().any(Vec::is_empty) {
            return Err(Error::invalid("mixing filters need at least one tap"));
        }
        if self.sample_rate == 0 {
            return Err(Error::invalid("sample_rate must be positive"));
        }
        match &self.noise {
            NoiseSpec::Signal(n) if n.len() != len => {
                Err(Error::invalid("noise must match the source length"))
            }
            NoiseSpec::White { snr_db } if !snr_db.is_finite() => {
                Err(Error::invalid("snr_db must be finite"))
            }
            _ => Ok(()),
        }
    }
}

/// A mixture with its filtered references and the noise actually added,
/// all scaled by the same `gain`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mixture {
    pub name: String,
    pub mixture: Vec<f64>,
    pub references: Vec<Vec<f64>>,
    pub noise: Vec<f64>,
    pub sample_rate: u32,
    pub gain: f64,
}

impl Mixture {
    pub fn len(&self) -> usize {
        self.mixture.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mixture.is_empty()
    }

    pub fn target(&self) -> crate::objective::Target<'_> {
        crate::objective::Target {
            mixture: &self.mixture,
            references: &self.references,
            noise: &self.noise,
        }
    }
}

/// Causal convolution truncated to the length of `x`.
pub fn convolve(x: &[f64], taps: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|t| {
            taps.iter()
                .enumerate()
                .take(t + 1)
                .map(|(k, a)| a * x[t - k])
                .sum()
        })
        .collect()
}

fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub fn synthesize_mixture(spec: &MixtureSpec, seed: u64) -> Result<Mixture> {
    spec.validate()?;
    let len = spec.sources[0].len();
    let references: Vec<Vec<f64>> = spec
        .sources
        .iter()
        .zip(&spec.filters)
        .map(|(s, a)| convolve(s, a))
        .collect();
    let clean: Vec<f64> = (0..len).map(|t| references.iter().map(|r| r[t]).sum()).collect();

    let noise = match &spec.noise {
        NoiseSpec::None => vec![0.0; len],
        NoiseSpec::Signal(n) => n.clone(),
        NoiseSpec::White { snr_db } => {
            let clean_energy = energy(&clean);
            if clean_energy == 0.0 {
                return Err(Error::invalid("cannot set an SNR against a silent mixture"));
            }
            let mut rng = stream(seed, 0, 0);
            let raw: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
            let scale = (clean_energy / (energy(&raw) * 10f64.powf(snr_db / 10.0))).sqrt();
            raw.into_iter().map(|v| v * scale).collect()
        }
    };

    let mut mixture: Vec<f64> = clean.iter().zip(&noise).map(|(c, n)| c + n).collect();
    let peak = mixture
        .iter()
        .chain(references.iter().flatten())
        .chain(&noise)
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let gain = if peak > 0.0 { PEAK_LEVEL / peak } else { 1.0 };
    let scale = |v: &mut Vec<f64>| v.iter_mut().for_each(|x| *x *= gain);
    scale(&mut mixture);
    let mut references = references;
    references.iter_mut().for_each(scale);
    let mut noise = noise;
    scale(&mut noise);

    Ok(Mixture {
        name: String::new(),
        mixture,
        references,
        noise,
        sample_rate: spec.sample_rate,
        gain,
    })
}
