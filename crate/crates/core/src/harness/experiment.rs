use std::time::Instant;

use log::{info, warn};
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::config::{Config, ExperimentMode};
use crate::error::{Error, Result};
use crate::features::{mel_band_edges, mfcc, scale_mfcc, stft, FeatureScaler, Spectrogram, StftConfig};
use crate::metrics::{align_sources, evaluate};
use crate::objective::{SeparationObjective, Target};
use crate::postproc::refine;
use crate::qiga::{run, QigaOutcome};
use crate::qstate::{encode_features, fidelity, pad_to_layers};
use crate::sepmodel::{apply_masks, decode_genome, oracle_band_gains, MaskParams, SeparatedSources};

use super::manifest::{split_indices, DatasetManifest};
use super::mixture::Mixture;
use super::recipes::Recipe;
use super::report::*;
use super::stream;

/// Grid resolution of the oracle band-gain search.
pub const ORACLE_GRID_STEPS: usize = 10;

/// Masks within this distance of `1/N` everywhere count as degenerate.
pub const DEGENERATE_TOL: f64 = 0.05;

/// Where the mixtures of an experiment come from.
#[derive(Debug, Clone)]
pub enum Inputs {
    Manifest(DatasetManifest),
    /// `config.experiment.count` mixtures from the configured recipe.
    Synthetic,
}

/// A finished separation: the report plus the post-processed outputs in
/// reference order.
#[derive(Debug, Clone)]
pub struct Separation {
    pub report: SeparationReport,
    pub estimates: Vec<Vec<f64>>,
}

/// Seed of the `index`-th synthetic mixture.
pub fn mixture_seed(seed: u64, index: usize) -> u64 {
    use rand::RngCore;
    stream(seed, index as u64, 2).next_u64()
}

pub fn synthetic_mixtures(config: &Config) -> Result<Vec<Mixture>> {
    let recipe = Recipe::from_config(config);
    let name = serde_json::to_value(config.experiment.recipe)?;
    let name = name.as_str().unwrap_or("recipe").to_string();
    (0..config.experiment.count)
        .map(|k| recipe.generate(mixture_seed(config.experiment.seed, k), format!("{name}-{k:03}")))
        .collect()
}

fn stft_for(mixture: &Mixture, config: &Config) -> Result<StftConfig> {
    config.features.stft(mixture.sample_rate)
}

/// Encodes every frame's scaled MFCCs and averages the fidelity of
/// consecutive states.
pub fn encoding_diagnostic(mixture: &Mixture, config: &Config) -> Result<EncodingDiagnostic> {
    let f = &config.features;
    let m = mfcc(&mixture.mixture, &stft_for(mixture, config)?, f.n_mels, f.n_mfcc)?;
    let scaler = FeatureScaler::fit([&m])?;
    let states = scale_mfcc(&m, &scaler)?
        .iter()
        .map(|angles| encode_features(&pad_to_layers(angles)))
        .collect::<Result<Vec<_>>>()?;
    let pairs = states.len().saturating_sub(1);
    let total: f64 = states.windows(2).map(|w| fidelity(&w[0], &w[1])).sum();
    Ok(EncodingDiagnostic {
        frames: states.len(),
        features_per_frame: f.n_mfcc,
        mean_adjacent_fidelity: if pairs > 0 { total / pairs as f64 } else { 1.0 },
    })
}

/// Post-processes raw outputs, aligns them with the references and scores
/// them. Returns the refined outputs in reference order.
pub fn score_outputs(
    raw: &SeparatedSources,
    mixture: &Mixture,
    config: &Config,
    warnings: &mut Vec<String>,
    label: &str,
) -> Result<(MethodResult, Vec<Vec<f64>>)> {
    let refined = raw
        .signals
        .iter()
        .map(|s| refine(s, &config.postproc, mixture.sample_rate))
        .collect::<Result<Vec<_>>>()?;
    if refined.iter().any(|r| r.declip_all_clipped) {
        warnings.push(format!("{label}: an output is clipped everywhere; de-clipping skipped"));
    }
    let outputs: Vec<Vec<f64>> = refined.into_iter().map(|r| r.signal).collect();
    let perm = align_sources(&mixture.references, &outputs)?;
    let sources = perm
        .iter()
        .enumerate()
        .map(|(i, &j)| {
            let (metrics, flags) = evaluate(&mixture.references[i], &outputs[j], &mixture.noise)?;
            if flags.any() {
                warnings.push(format!("{label}: source {i} metrics clamped: {flags:?}"));
            }
            Ok(SourceReport {
                reference: i,
                estimate: j,
                metrics,
                flags,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let ordered = perm.iter().map(|&j| outputs[j].clone()).collect();
    Ok((MethodResult::new(sources), ordered))
}

fn baselines(mixture: &Mixture, spec: &Spectrogram, config: &Config, warnings: &mut Vec<String>) -> Result<Baselines> {
    let n = mixture.references.len();
    let duplicate = SeparatedSources {
        signals: vec![mixture.mixture.clone(); n],
    };
    let (duplicate, _) = score_outputs(&duplicate, mixture, config, warnings, "duplicate baseline")?;
    let ref_specs = mixture
        .references
        .iter()
        .map(|r| stft(r, &spec.config))
        .collect::<Result<Vec<_>>>()?;
    let edges = mel_band_edges(config.masks.n_bands, mixture.sample_rate);
    let oracle = oracle_band_gains(spec, &ref_specs, &edges, ORACLE_GRID_STEPS)?;
    let (oracle, _) = score_outputs(&apply_masks(spec, &oracle)?, mixture, config, warnings, "oracle baseline")?;
    Ok(Baselines { duplicate, oracle })
}

fn mask_summary(params: &MaskParams) -> MaskSummary {
    MaskSummary {
        band_edges_hz: params.band_edges.clone(),
        gains: params.gains.clone(),
        masks: params.masks(),
        degenerate: params.is_degenerate(DEGENERATE_TOL),
    }
}

fn optimizer_summary(outcome: &QigaOutcome, n_mixtures: usize) -> OptimizerSummary {
    OptimizerSummary {
        best_fitness: outcome.best_fitness,
        evaluations: outcome.evaluations,
        generations: outcome.trace.len(),
        n_mixtures,
        trace: outcome.trace.clone(),
    }
}

fn check_sources(mixtures: &[&Mixture], config: &Config) -> Result<()> {
    let first = mixtures.first().ok_or_else(|| Error::invalid("no mixtures"))?;
    for m in mixtures {
        if m.sample_rate != first.sample_rate {
            return Err(Error::invalid(format!(
                "{} is at {} Hz, {} at {} Hz",
                m.name, m.sample_rate, first.name, first.sample_rate
            )));
        }
        if m.references.len() != first.references.len() {
            return Err(Error::invalid(format!("{} has a different number of references", m.name)));
        }
    }
    stft_for(first, config)?;
    Ok(())
}

/// Optimizes masks for a set of mixtures with the GA.
pub fn optimize(mixtures: &[&Mixture], config: &Config) -> Result<(MaskParams, QigaOutcome)> {
    check_sources(mixtures, config)?;
    let stft_config = stft_for(mixtures[0], config)?;
    let targets: Vec<Target<'_>> = mixtures.iter().map(|m| m.target()).collect();
    let objective = SeparationObjective::new(&targets, &stft_config, config.masks.n_bands, config.metrics)?;
    let outcome = run(&config.qiga, &objective)?;
    let params = decode_genome(
        &outcome.best,
        objective.n_sources(),
        config.masks.n_bands,
        stft_config.sample_rate,
    )?;
    Ok((params, outcome))
}

/// Applies given masks to one mixture and reports against its references.
pub fn apply_and_report(
    mixture: &Mixture,
    params: &MaskParams,
    optimizer: Option<OptimizerSummary>,
    mode: ExperimentMode,
    config: &Config,
) -> Result<Separation> {
    let started = Instant::now();
    let mut warnings = Vec::new();
    let stft_config = stft_for(mixture, config)?;
    let spec = stft(&mixture.mixture, &stft_config)?;
    let encoding = if config.features.encode {
        Some(encoding_diagnostic(mixture, config)?)
    } else {
        None
    };
    let features_s = started.elapsed().as_secs_f64();

    let raw = apply_masks(&spec, params)?;
    let (result, estimates) = score_outputs(&raw, mixture, config, &mut warnings, "p-QIGA")?;
    let baselines = baselines(mixture, &spec, config, &mut warnings)?;
    let masks = mask_summary(params);
    if masks.degenerate {
        warnings.push("masks are degenerate: every band splits the mixture evenly".into());
    }
    let total_s = started.elapsed().as_secs_f64();
    Ok(Separation {
        report: SeparationReport {
            entry: mixture.name.clone(),
            mode,
            sample_rate: mixture.sample_rate,
            n_samples: mixture.len(),
            result,
            baselines,
            optimizer,
            encoding,
            masks,
            warnings,
            config: config.clone(),
            timings: Timings {
                features_s,
                optimize_s: 0.0,
                evaluate_s: total_s - features_s,
                total_s,
            },
        },
        estimates,
    })
}

/// Optimizes masks for one mixture against its own references.
pub fn separate_supervised(mixture: &Mixture, config: &Config) -> Result<Separation> {
    let started = Instant::now();
    let (params, outcome) = optimize(&[mixture], config)?;
    let optimize_s = started.elapsed().as_secs_f64();
    let mut sep = apply_and_report(
        mixture,
        &params,
        Some(optimizer_summary(&outcome, 1)),
        ExperimentMode::Supervised,
        config,
    )?;
    sep.report.timings.optimize_s = optimize_s;
    sep.report.timings.total_s += optimize_s;
    Ok(sep)
}

type Loaded = Vec<(String, Result<Mixture>)>;

fn load_inputs(inputs: &Inputs, config: &Config) -> Result<(Loaded, [f64; 3])> {
    match inputs {
        Inputs::Manifest(m) => Ok((
            m.entries
                .par_iter()
                .map(|e| (e.name(), e.load()))
                .collect(),
            m.split,
        )),
        Inputs::Synthetic => Ok((
            synthetic_mixtures(config)?
                .into_iter()
                .map(|m| (m.name.clone(), Ok(m)))
                .collect(),
            config.experiment.split,
        )),
    }
}

fn failure(index: usize, entry: &str, err: &dyn std::fmt::Display) -> EntryFailure {
    warn!("entry {index} ({entry}) failed: {err}");
    EntryFailure {
        index,
        entry: entry.to_string(),
        error: err.to_string(),
    }
}

/// Runs the configured experiment. Per-entry problems are collected in
/// `failures`; only configuration errors abort.
pub fn run_experiment(inputs: &Inputs, config: &Config) -> Result<ExperimentReport> {
    config.validate()?;
    let started = Instant::now();
    let (loaded, split) = load_inputs(inputs, config)?;
    let mode = config.experiment.mode;
    let mut report = ExperimentReport {
        mode,
        reports: Vec::new(),
        failures: Vec::new(),
        transfer: None,
        data_size: Vec::new(),
        config: config.clone(),
        timings: Timings::default(),
    };

    match mode {
        ExperimentMode::Supervised => {
            let results: Vec<std::result::Result<Separation, String>> = loaded
                .par_iter()
                .map(|(_, m)| match m {
                    Ok(m) => separate_supervised(m, config).map_err(|e| e.to_string()),
                    Err(e) => Err(e.to_string()),
                })
                .collect();
            for (k, ((name, _), r)) in loaded.iter().zip(results).enumerate() {
                match r {
                    Ok(sep) => {
                        info!("{name}: mean SDR {:.2} dB", sep.report.result.mean.sdr);
                        report.reports.push(sep.report);
                    }
                    Err(e) => report.failures.push(failure(k, name, &e)),
                }
            }
        }
        ExperimentMode::Transfer | ExperimentMode::DataSize => {
            let mut good = Vec::new();
            for (k, (name, m)) in loaded.iter().enumerate() {
                match m {
                    Ok(m) => good.push(m),
                    Err(e) => report.failures.push(failure(k, name, &e)),
                }
            }
            if let Err(e) = check_sources(&good, config) {
                return Err(Error::Config(format!("mixtures cannot share one mask: {e}")));
            }
            let [train, val, test] = split_indices(good.len(), split);
            if train.is_empty() || test.is_empty() {
                return Err(Error::Config(format!(
                    "transfer needs at least one train and one test mixture, have {}",
                    good.len()
                )));
            }
            let pick = |idx: &[usize]| idx.iter().map(|&i| good[i]).collect::<Vec<_>>();
            let (train, val, test) = (pick(&train), pick(&val), pick(&test));
            if mode == ExperimentMode::Transfer {
                transfer(&train, &val, &test, config, &mut report)?;
            } else {
                report.data_size = data_size(&train, &test, config)?;
            }
        }
    }
    report.timings.total_s = started.elapsed().as_secs_f64();
    Ok(report)
}

fn test_reports(
    test: &[&Mixture],
    params: &MaskParams,
    config: &Config,
    mode: ExperimentMode,
) -> Vec<Result<Separation>> {
    test.par_iter()
        .map(|m| apply_and_report(m, params, None, mode, config))
        .collect()
}

fn transfer(
    train: &[&Mixture],
    val: &[&Mixture],
    test: &[&Mixture],
    config: &Config,
    report: &mut ExperimentReport,
) -> Result<()> {
    let started = Instant::now();
    let (params, outcome) = optimize(train, config)?;
    report.timings.optimize_s = started.elapsed().as_secs_f64();
    let names = |ms: &[&Mixture]| ms.iter().map(|m| m.name.clone()).collect::<Vec<_>>();

    let mean_over = |seps: &[Separation]| mean_triple(seps.iter().map(|s| &s.report.result.mean));
    let mut val_seps = Vec::new();
    for r in test_reports(val, &params, config, ExperimentMode::Transfer) {
        val_seps.push(r?);
    }
    let mut test_seps = Vec::new();
    for (m, r) in test.iter().zip(test_reports(test, &params, config, ExperimentMode::Transfer)) {
        match r {
            Ok(sep) => test_seps.push(sep),
            Err(e) => report.failures.push(failure(report.failures.len(), &m.name, &e)),
        }
    }
    report.transfer = Some(TransferSummary {
        train: names(train),
        validation: names(val),
        test: names(test),
        optimizer: optimizer_summary(&outcome, train.len()),
        masks: mask_summary(&params),
        validation_mean: (!val_seps.is_empty()).then(|| mean_over(&val_seps)),
        test_mean: mean_over(&test_seps),
    });
    report.reports = test_seps.into_iter().map(|s| s.report).collect();
    Ok(())
}

/// Transfer runs on nested, seeded subsets of the train split.
fn data_size(train: &[&Mixture], test: &[&Mixture], config: &Config) -> Result<Vec<DataSizeRow>> {
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut stream(config.experiment.seed, 0, 3));
    config
        .experiment
        .fractions
        .iter()
        .map(|&fraction| {
            let n_train = ((fraction * train.len() as f64).round() as usize).clamp(1, train.len());
            let subset: Vec<&Mixture> = order[..n_train].iter().map(|&i| train[i]).collect();
            let (params, outcome) = optimize(&subset, config)?;
            let seps = test_reports(test, &params, config, ExperimentMode::DataSize)
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
            let row = DataSizeRow {
                fraction,
                n_train,
                test_mean: mean_triple(seps.iter().map(|s| &s.report.result.mean)),
                duplicate_test_mean: mean_triple(seps.iter().map(|s| &s.report.baselines.duplicate.mean)),
                best_fitness: outcome.best_fitness,
                degenerate: params.is_degenerate(DEGENERATE_TOL),
            };
            info!("fraction {fraction}: {n_train} train mixtures, test SDR {:.2} dB", row.test_mean.sdr);
            Ok(row)
        })
        .collect()
}
