//! Quantum-inspired genetic algorithm over qubit genomes.
//!
//! Every random draw comes from a ChaCha stream keyed by
//! `(seed, generation, index, operator)`, so the outcome of a run does not
//! depend on how fitness evaluations are scheduled across threads.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qstate::QubitPair;

/// Degenerate-offspring threshold on the pre-normalization norm.
const MIN_COMBINED_NORM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Genome {
    pub qubits: Vec<QubitPair>,
}

impl Genome {
    pub fn len(&self) -> usize {
        self.qubits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.qubits.is_empty()
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        self.qubits.iter().all(|q| (q.norm_sqr() - 1.0).abs() <= tol)
    }

    /// `|β|²` of every qubit.
    pub fn probabilities(&self) -> Vec<f64> {
        self.qubits.iter().map(QubitPair::prob_one).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QigaConfig {
    pub population_size: usize,
    pub max_generations: usize,
    pub crossover_prob: f64,
    pub mutation_prob: f64,
    /// Stop once the best fitness reaches this value. `None` disables it.
    pub desired_fitness: Option<f64>,
    /// Mutation angles are drawn from `[-max, max]` radians.
    pub mutation_angle_max: f64,
    pub tournament_size: usize,
    pub elitism: usize,
    pub seed: u64,
}

impl Default for QigaConfig {
    fn default() -> Self {
        QigaConfig {
            population_size: 50,
            max_generations: 100,
            crossover_prob: 0.8,
            mutation_prob: 0.1,
            desired_fitness: None,
            mutation_angle_max: PI / 8.0,
            tournament_size: 2,
            elitism: 1,
            seed: 0,
        }
    }
}

impl QigaConfig {
    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64, name: &str| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be in [0, 1], got {p}")))
            }
        };
        prob(self.crossover_prob, "crossover_prob")?;
        prob(self.mutation_prob, "mutation_prob")?;
        if self.population_size < 2 {
            return Err(Error::invalid("population_size must be at least 2"));
        }
        if self.elitism >= self.population_size {
            return Err(Error::invalid("elitism must be smaller than population_size"));
        }
        if self.tournament_size == 0 || self.tournament_size > self.population_size {
            return Err(Error::invalid(format!(
                "tournament_size must be in 1..={}",
                self.population_size
            )));
        }
        if !self.mutation_angle_max.is_finite() || self.mutation_angle_max < 0.0 {
            return Err(Error::invalid("mutation_angle_max must be finite and non-negative"));
        }
        if self.desired_fitness.is_some_and(f64::is_nan) {
            return Err(Error::invalid("desired_fitness must not be NaN"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Operator {
    Init = 1,
    Select = 2,
    Crossover = 3,
    Mutate = 4,
}

/// Independent random stream for one `(seed, generation, index, operator)`.
pub fn rng_stream(seed: u64, generation: u64, index: u64, op: Operator) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    for (chunk, word) in key
        .chunks_exact_mut(8)
        .zip([seed, generation, index, op as u64])
    {
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

pub fn init_population(config: &QigaConfig, genome_len: usize) -> Vec<Genome> {
    (0..config.population_size)
        .map(|i| {
            let mut rng = rng_stream(config.seed, 0, i as u64, Operator::Init);
            Genome {
                qubits: (0..genome_len)
                    .map(|_| QubitPair::from_angle(rng.random_range(0.0..=PI)))
                    .collect(),
            }
        })
        .collect()
}

fn combine(a: &QubitPair, b: &QubitPair, ca: f64, cb: f64) -> Option<QubitPair> {
    let alpha = a.alpha * ca + b.alpha * cb;
    let beta = a.beta * ca + b.beta * cb;
    let norm = (alpha.norm_sqr() + beta.norm_sqr()).sqrt();
    (norm >= MIN_COMBINED_NORM).then(|| QubitPair {
        alpha: alpha / norm,
        beta: beta / norm,
    })
}

/// Offspring `normalize(cos φ·p1 + sin φ·p2)` and `normalize(cos φ·p2 + sin φ·p1)`
/// per qubit. `None` if some qubit combination vanishes.
pub fn crossover_with_angle(p1: &Genome, p2: &Genome, phi: f64) -> Option<(Genome, Genome)> {
    if phi == 0.0 {
        return Some((p1.clone(), p2.clone()));
    }
    if phi == FRAC_PI_2 {
        return Some((p2.clone(), p1.clone()));
    }
    let (s, c) = phi.sin_cos();
    let mut o1 = Vec::with_capacity(p1.len());
    let mut o2 = Vec::with_capacity(p1.len());
    for (a, b) in p1.qubits.iter().zip(&p2.qubits) {
        o1.push(combine(a, b, c, s)?);
        o2.push(combine(b, a, c, s)?);
    }
    Some((Genome { qubits: o1 }, Genome { qubits: o2 }))
}

pub fn crossover<R: Rng>(p1: &Genome, p2: &Genome, rng: &mut R) -> Result<(Genome, Genome)> {
    if p1.len() != p2.len() {
        return Err(Error::invalid(format!(
            "parents differ in length: {} vs {}",
            p1.len(),
            p2.len()
        )));
    }
    for _ in 0..2 {
        let phi = rng.random_range(0.0..=FRAC_PI_2);
        if let Some(children) = crossover_with_angle(p1, p2, phi) {
            return Ok(children);
        }
    }
    Ok((p1.clone(), p2.clone()))
}

pub fn mutate<R: Rng>(genome: &Genome, config: &QigaConfig, rng: &mut R) -> Genome {
    let max = config.mutation_angle_max;
    Genome {
        qubits: genome
            .qubits
            .iter()
            .map(|q| {
                if rng.random::<f64>() < config.mutation_prob {
                    q.rotate_y(rng.random_range(-max..=max))
                } else {
                    *q
                }
            })
            .collect(),
    }
}

/// Tournament selection: each tournament samples `tournament_size` distinct
/// contestants; the fittest wins (lower index on ties). Repeats until the
/// pool holds `population_size - elitism` winners.
pub fn select<R: Rng>(fitness: &[f64], config: &QigaConfig, rng: &mut R) -> Vec<usize> {
    let n = fitness.len();
    let k = config.tournament_size.clamp(1, n);
    let pool_size = config.population_size.saturating_sub(config.elitism);
    (0..pool_size)
        .map(|_| {
            sample(rng, n, k)
                .into_iter()
                .fold(None, |best: Option<usize>, i| match best {
                    Some(b) if fitness[b] > fitness[i] || (fitness[b] == fitness[i] && b < i) => Some(b),
                    _ => Some(i),
                })
                .expect("tournament has at least one contestant")
        })
        .collect()
}

/// Fitness of a genome. Implementations must be deterministic.
pub trait Evaluator: Sync {
    fn genome_len(&self) -> usize;
    fn evaluate(&self, genome: &Genome) -> Result<f64>;
}

/// Adapts a closure into an [`Evaluator`].
pub struct FnEvaluator<F> {
    pub genome_len: usize,
    pub f: F,
}

impl<F> Evaluator for FnEvaluator<F>
where
    F: Fn(&Genome) -> Result<f64> + Sync,
{
    fn genome_len(&self) -> usize {
        self.genome_len
    }

    fn evaluate(&self, genome: &Genome) -> Result<f64> {
        (self.f)(genome)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub generation: usize,
    pub best: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitnessTrace {
    pub rows: Vec<TraceRow>,
}

impl FitnessTrace {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn best_is_monotone(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].best >= w[0].best)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("generation,best,mean\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{}\n", r.generation, r.best, r.mean));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QigaOutcome {
    pub best: Genome,
    pub best_fitness: f64,
    pub trace: FitnessTrace,
    pub evaluations: usize,
}

fn evaluate_population<E: Evaluator + ?Sized>(
    evaluator: &E,
    population: &[Genome],
    generation: usize,
) -> Result<Vec<f64>> {
    let results: Vec<Result<f64>> = population.par_iter().map(|g| evaluator.evaluate(g)).collect();
    results
        .into_iter()
        .enumerate()
        .map(|(individual, r)| match r {
            Ok(f) if !f.is_nan() => Ok(f),
            Ok(_) => Err(Error::Evaluator {
                generation,
                individual,
                message: "fitness is NaN".into(),
            }),
            Err(e) => Err(Error::Evaluator {
                generation,
                individual,
                message: e.to_string(),
            }),
        })
        .collect()
}

/// Index of the highest fitness, lowest index on ties.
fn argmax(fitness: &[f64]) -> usize {
    let mut best = 0;
    for (i, &f) in fitness.iter().enumerate() {
        if f > fitness[best] {
            best = i;
        }
    }
    best
}

fn breed(population: &[Genome], fitness: &[f64], config: &QigaConfig, generation: usize) -> Result<Vec<Genome>> {
    let gen = generation as u64;
    let seed = config.seed;

    let mut ranked: Vec<usize> = (0..population.len()).collect();
    ranked.sort_by(|&a, &b| fitness[b].total_cmp(&fitness[a]).then(a.cmp(&b)));
    let mut next: Vec<Genome> = ranked[..config.elitism]
        .iter()
        .map(|&i| population[i].clone())
        .collect();

    let pool = select(fitness, config, &mut rng_stream(seed, gen, 0, Operator::Select));
    let mut offspring = Vec::with_capacity(pool.len());
    for (k, pair) in pool.chunks(2).enumerate() {
        match *pair {
            [a, b] => {
                let mut rng = rng_stream(seed, gen, k as u64, Operator::Crossover);
                let (p1, p2) = (&population[a], &population[b]);
                if rng.random::<f64>() < config.crossover_prob {
                    let (o1, o2) = crossover(p1, p2, &mut rng)?;
                    offspring.push(o1);
                    offspring.push(o2);
                } else {
                    offspring.push(p1.clone());
                    offspring.push(p2.clone());
                }
            }
            [a] => offspring.push(population[a].clone()),
            _ => unreachable!(),
        }
    }
    next.extend(offspring.iter().enumerate().map(|(j, g)| {
        let mut rng = rng_stream(seed, gen, j as u64, Operator::Mutate);
        mutate(g, config, &mut rng)
    }));
    Ok(next)
}

/// Runs the optimizer. Each loop iteration evaluates the current population,
/// records a trace row, and breeds the next population; the loop stops at
/// `max_generations` or once the best fitness reaches `desired_fitness`.
/// The final population is evaluated to pick the returned genome.
pub fn run<E: Evaluator + ?Sized>(config: &QigaConfig, evaluator: &E) -> Result<QigaOutcome> {
    config.validate()?;
    let genome_len = evaluator.genome_len();
    if genome_len == 0 {
        return Err(Error::invalid("genome length must be at least 1"));
    }
    let desired = config.desired_fitness.unwrap_or(f64::INFINITY);

    let mut population = init_population(config, genome_len);
    let mut fitness = evaluate_population(evaluator, &population, 0)?;
    let mut evaluations = population.len();
    let mut trace = FitnessTrace::default();
    let mut best_so_far = f64::NEG_INFINITY;

    let mut t = 0;
    while t < config.max_generations && best_so_far < desired {
        best_so_far = fitness[argmax(&fitness)];
        trace.rows.push(TraceRow {
            generation: t,
            best: best_so_far,
            mean: fitness.iter().sum::<f64>() / fitness.len() as f64,
        });
        population = breed(&population, &fitness, config, t)?;
        fitness = evaluate_population(evaluator, &population, t + 1)?;
        evaluations += population.len();
        t += 1;
    }

    let i = argmax(&fitness);
    Ok(QigaOutcome {
        best: population[i].clone(),
        best_fitness: fitness[i],
        trace,
        evaluations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceModel {
    /// Operator effectiveness.
    pub alpha: f64,
    /// Exploration decay.
    pub beta: f64,
    /// Initial probability of holding the optimum.
    pub p0: f64,
}

impl ConvergenceModel {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid("alpha must be in [0, 1]"));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::invalid("beta must be finite and non-negative"));
        }
        if !(0.0..=1.0).contains(&self.p0) {
            return Err(Error::invalid("p0 must be in [0, 1]"));
        }
        Ok(())
    }

    pub fn exploration_rate(&self, t: usize) -> f64 {
        1.0 / (1.0 + self.beta * t as f64)
    }
}

/// `P(0) = p0`, `P(t+1) = P(t) + α·E(t)·(1 − P(t))`; returns `t_max + 1` values.
pub fn convergence_curve(model: &ConvergenceModel, t_max: usize) -> Result<Vec<f64>> {
    model.validate()?;
    let mut p = model.p0;
    let mut out = Vec::with_capacity(t_max + 1);
    out.push(p);
    for t in 0..t_max {
        p += model.alpha * model.exploration_rate(t) * (1.0 - p);
        out.push(p);
    }
    Ok(out)
}

pub fn convergence_csv(curve: &[f64]) -> String {
    let mut out = String::from("t,p_opt\n");
    for (t, p) in curve.iter().enumerate() {
        out.push_str(&format!("{t},{p}\n"));
    }
    out
}
