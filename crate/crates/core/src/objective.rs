//! Fitness of a genome against one or more mixtures with known references.
//!
//! Band masks act linearly on the mixture, so each separated source is a
//! weighted sum of per-band component signals. Projecting the references,
//! the noise and the components onto each other once makes every energy in
//! the metrics a small quadratic form in the mask weights.

use crate::error::{Error, Result};
use crate::features::{stft, StftConfig};
use crate::metrics::{best_permutation, EvalTriple, FitnessWeights, PairEnergies};
use crate::qiga::{Evaluator, Genome};
use crate::sepmodel::{decode_genome, BandDecomposition};

/// A mixture with the references and noise the fitness is measured against.
#[derive(Debug, Clone, PartialEq)]
pub struct Target<'a> {
    pub mixture: &'a [f64],
    pub references: &'a [Vec<f64>],
    pub noise: &'a [f64],
}

#[derive(Debug, Clone)]
pub struct ProjectedMixture {
    n_bands: usize,
    len: f64,
    /// `⟨y_b, y_c⟩`, row-major `n_bands × n_bands`.
    gram: Vec<f64>,
    /// `⟨s_i, y_b⟩` per reference.
    ref_dot: Vec<Vec<f64>>,
    ref_energy: Vec<f64>,
    /// `⟨n, y_b⟩`
    noise_dot: Vec<f64>,
    noise_energy: f64,
    /// `Σ_t y_b(t)`
    band_sum: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl ProjectedMixture {
    pub fn new(target: &Target<'_>, stft_config: &StftConfig, band_edges: &[f64]) -> Result<Self> {
        let len = target.mixture.len();
        if target.noise.len() != len || target.references.iter().any(|r| r.len() != len) {
            return Err(Error::invalid("mixture, references and noise must have equal lengths"));
        }
        let spec = stft(target.mixture, stft_config)?;
        let decomp = BandDecomposition::new(&spec, band_edges)?;
        let y = &decomp.components;
        let n_bands = y.len();
        let mut gram = vec![0.0; n_bands * n_bands];
        for b in 0..n_bands {
            for c in b..n_bands {
                let v = dot(&y[b], &y[c]);
                gram[b * n_bands + c] = v;
                gram[c * n_bands + b] = v;
            }
        }
        let ref_energy: Vec<f64> = target.references.iter().map(|r| dot(r, r)).collect();
        if ref_energy.iter().any(|&e| e <= 0.0) {
            return Err(Error::invalid("reference signal is all zero"));
        }
        Ok(ProjectedMixture {
            n_bands,
            len: len as f64,
            gram,
            ref_dot: target
                .references
                .iter()
                .map(|r| y.iter().map(|yb| dot(r, yb)).collect())
                .collect(),
            ref_energy,
            noise_dot: y.iter().map(|yb| dot(target.noise, yb)).collect(),
            noise_energy: dot(target.noise, target.noise),
            band_sum: y.iter().map(|yb| yb.iter().sum()).collect(),
        })
    }

    pub fn n_sources(&self) -> usize {
        self.ref_energy.len()
    }

    fn quad(&self, a: &[f64], b: &[f64]) -> f64 {
        let n = self.n_bands;
        let mut total = 0.0;
        for (i, ai) in a.iter().enumerate() {
            if *ai == 0.0 {
                continue;
            }
            total += ai * dot(&self.gram[i * n..(i + 1) * n], b);
        }
        total
    }

    /// Metrics of the best-aligned estimates (reference order) and the
    /// correlation penalty, for normalized masks `n_sources × n_bands`.
    pub fn evaluate(&self, masks: &[Vec<f64>]) -> (Vec<EvalTriple>, f64) {
        let n = self.n_sources();
        let self_energy: Vec<f64> = masks.iter().map(|m| self.quad(m, m)).collect();
        let energies = |i: usize, j: usize| PairEnergies {
            reference: self.ref_energy[i],
            error: (self_energy[j] - 2.0 * dot(&masks[j], &self.ref_dot[i]) + self.ref_energy[i]).max(0.0),
            noise: self.noise_energy,
            estimate_minus_noise: (self_energy[j] - 2.0 * dot(&masks[j], &self.noise_dot)
                + self.noise_energy)
                .max(0.0),
        };
        let score: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| energies(i, j).sdr().0).collect())
            .collect();
        let perm = best_permutation(&score).unwrap_or_else(|_| (0..n).collect());
        let triples = perm
            .iter()
            .enumerate()
            .map(|(i, &j)| energies(i, j).triple().0)
            .collect();

        let means: Vec<f64> = masks.iter().map(|m| dot(m, &self.band_sum)).collect();
        let var: Vec<f64> = (0..n)
            .map(|j| self_energy[j] - means[j] * means[j] / self.len)
            .collect();
        let mut penalty = 0.0;
        let mut pairs = 0;
        for j in 0..n {
            for k in j + 1..n {
                pairs += 1;
                if var[j] <= 0.0 || var[k] <= 0.0 {
                    continue;
                }
                let cov = self.quad(&masks[j], &masks[k]) - means[j] * means[k] / self.len;
                penalty += (cov / (var[j].sqrt() * var[k].sqrt())).clamp(-1.0, 1.0).abs();
            }
        }
        if pairs > 0 {
            penalty /= pairs as f64;
        }
        (triples, penalty)
    }
}

/// Mean fitness of one shared mask over a set of mixtures.
#[derive(Debug, Clone)]
pub struct SeparationObjective {
    mixtures: Vec<ProjectedMixture>,
    n_sources: usize,
    n_bands: usize,
    sample_rate: u32,
    weights: FitnessWeights,
}

impl SeparationObjective {
    pub fn new(
        targets: &[Target<'_>],
        stft_config: &StftConfig,
        n_bands: usize,
        weights: FitnessWeights,
    ) -> Result<Self> {
        weights.validate()?;
        let first = targets
            .first()
            .ok_or_else(|| Error::invalid("objective needs at least one mixture"))?;
        let n_sources = first.references.len();
        if n_sources == 0 || targets.iter().any(|t| t.references.len() != n_sources) {
            return Err(Error::invalid("every mixture needs the same, non-zero number of references"));
        }
        let edges = crate::features::mel_band_edges(n_bands, stft_config.sample_rate);
        let mixtures = targets
            .iter()
            .map(|t| ProjectedMixture::new(t, stft_config, &edges))
            .collect::<Result<Vec<_>>>()?;
        Ok(SeparationObjective {
            mixtures,
            n_sources,
            n_bands,
            sample_rate: stft_config.sample_rate,
            weights,
        })
    }

    pub fn n_sources(&self) -> usize {
        self.n_sources
    }

    pub fn n_bands(&self) -> usize {
        self.n_bands
    }

    pub fn fitness_of_masks(&self, masks: &[Vec<f64>]) -> f64 {
        let total: f64 = self
            .mixtures
            .iter()
            .map(|m| {
                let (triples, penalty) = m.evaluate(masks);
                self.weights.combine(&triples, penalty)
            })
            .sum();
        total / self.mixtures.len() as f64
    }
}

impl Evaluator for SeparationObjective {
    fn genome_len(&self) -> usize {
        self.n_sources * self.n_bands
    }

    fn evaluate(&self, genome: &Genome) -> Result<f64> {
        let params = decode_genome(genome, self.n_sources, self.n_bands, self.sample_rate)?;
        Ok(self.fitness_of_masks(&params.masks()))
    }
}
