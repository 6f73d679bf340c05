use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use pqiga::config::{Config, ExperimentMode, RecipeKind};
use pqiga::error::{Error, Result};
use pqiga::features::{mfcc, scale_mfcc, FeatureScaler};
use pqiga::harness::experiment::{apply_and_report, mixture_seed, separate_supervised, Separation};
use pqiga::harness::report::MethodResult;
use pqiga::harness::{read_wav, run_experiment, write_wav, DatasetManifest, Inputs, Mixture, Recipe};
use pqiga::metrics::{align_sources, evaluate};
use pqiga::postproc::refine;
use pqiga::qiga::{convergence_csv, convergence_curve, ConvergenceModel};
use pqiga::qstate::{encode_features, pad_to_layers};
use pqiga::sepmodel::apply_masks;
use pqiga::MaskParams;

#[derive(Parser)]
#[command(name = "pqiga", version, about = "Quantum-inspired GA source separation")]
struct Cli {
    /// TOML config file; flags given on the command line take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize mixtures from a built-in recipe.
    Mix(MixArgs),
    /// Separate mixtures, optimizing masks or applying saved ones.
    Separate(SeparateArgs),
    /// Score estimates against references.
    Eval(EvalArgs),
    /// Dump the encoding circuit's output amplitudes.
    Encode(EncodeArgs),
    /// Print the convergence model curve.
    Convergence(ConvergenceArgs),
    /// Run a batch experiment and write its JSON report.
    Experiment(ExperimentArgs),
}

#[derive(Args, Default)]
struct Overrides {
    #[arg(long)]
    population_size: Option<usize>,
    #[arg(long)]
    max_generations: Option<usize>,
    #[arg(long)]
    crossover_prob: Option<f64>,
    #[arg(long)]
    mutation_prob: Option<f64>,
    /// Seeds both the optimizer and the synthetic data.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_bands: Option<usize>,
    /// Skip bandpass, compression and de-clipping.
    #[arg(long)]
    no_postproc: bool,
}

#[derive(Args)]
struct RecipeArgs {
    #[arg(long)]
    recipe: Option<String>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    n_sources: Option<usize>,
    #[arg(long)]
    snr_db: Option<f64>,
    #[arg(long)]
    duration_s: Option<f64>,
    #[arg(long)]
    sample_rate: Option<u32>,
    #[arg(long)]
    overlap: Option<f64>,
}

#[derive(Args)]
struct MixArgs {
    #[command(flatten)]
    recipe: RecipeArgs,
    #[command(flatten)]
    overrides: Overrides,
    /// Output directory; receives the WAV files and `manifest.tsv`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SeparateArgs {
    #[arg(long, conflicts_with = "manifest")]
    mixture: Option<PathBuf>,
    #[arg(long = "reference")]
    references: Vec<PathBuf>,
    #[arg(long)]
    noise: Option<PathBuf>,
    /// Supervised separation of every manifest entry.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Saved masks (`masks.json`) to apply instead of optimizing.
    #[arg(long)]
    params: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long = "reference", required = true)]
    references: Vec<PathBuf>,
    #[arg(long = "estimate", required = true)]
    estimates: Vec<PathBuf>,
    #[arg(long)]
    noise: Option<PathBuf>,
}

#[derive(Args)]
struct EncodeArgs {
    /// Comma-separated rotation angles in radians.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "wav")]
    angles: Option<Vec<f64>>,
    /// Encode the scaled MFCCs of one frame of this file.
    #[arg(long)]
    wav: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    frame: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ConvergenceArgs {
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 0.0)]
    beta: f64,
    #[arg(long, default_value_t = 0.0)]
    p0: f64,
    #[arg(long, default_value_t = 100)]
    t_max: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// supervised, transfer or data-size
    #[arg(long)]
    mode: Option<String>,
    #[command(flatten)]
    recipe: RecipeArgs,
    #[command(flatten)]
    overrides: Overrides,
    /// Report path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn config_error(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    match path {
        Some(p) => Config::load(p),
        None => Ok(Config::default()),
    }
}

fn apply_overrides(config: &mut Config, o: &Overrides) {
    let q = &mut config.qiga;
    q.population_size = o.population_size.unwrap_or(q.population_size);
    q.max_generations = o.max_generations.unwrap_or(q.max_generations);
    q.crossover_prob = o.crossover_prob.unwrap_or(q.crossover_prob);
    q.mutation_prob = o.mutation_prob.unwrap_or(q.mutation_prob);
    if let Some(seed) = o.seed {
        q.seed = seed;
        config.experiment.seed = seed;
    }
    config.masks.n_bands = o.n_bands.unwrap_or(config.masks.n_bands);
    if o.no_postproc {
        config.postproc.enabled = false;
    }
}

fn apply_recipe(config: &mut Config, r: &RecipeArgs) -> Result<()> {
    let e = &mut config.experiment;
    if let Some(name) = &r.recipe {
        e.recipe = name.parse::<RecipeKind>()?;
    }
    e.count = r.count.unwrap_or(e.count);
    e.n_sources = r.n_sources.unwrap_or(e.n_sources);
    e.snr_db = r.snr_db.unwrap_or(e.snr_db);
    e.duration_s = r.duration_s.unwrap_or(e.duration_s);
    e.sample_rate = r.sample_rate.unwrap_or(e.sample_rate);
    e.overlap = r.overlap.unwrap_or(e.overlap);
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        context: format!("creating {}", dir.display()),
        source: e,
    })
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    let res = match path {
        Some(p) => match p.parent().filter(|d| !d.as_os_str().is_empty()) {
            Some(dir) => fs::create_dir_all(dir).and_then(|_| fs::write(p, text)),
            None => fs::write(p, text),
        },
        None => std::io::stdout().write_all(text.as_bytes()),
    };
    res.map_err(|e| Error::Io {
        context: format!("writing {}", path.map_or("stdout".into(), |p| p.display().to_string())),
        source: e,
    })
}

fn cmd_mix(args: &MixArgs, mut config: Config) -> Result<bool> {
    apply_recipe(&mut config, &args.recipe)?;
    apply_overrides(&mut config, &args.overrides);
    config.validate()?;
    create_dir(&args.out)?;
    let recipe = Recipe::from_config(&config);
    let mut manifest = String::from("# mixture\treferences...\tnoise\n");
    for k in 0..config.experiment.count {
        let name = format!("mix{k:03}");
        let m = recipe.generate(mixture_seed(config.experiment.seed, k), name.as_str())?;
        let file = |suffix: &str| format!("{name}_{suffix}.wav");
        write_wav(&args.out.join(file("mixture")), &m.mixture, m.sample_rate)?;
        manifest.push_str(&file("mixture"));
        for (i, r) in m.references.iter().enumerate() {
            let f = file(&format!("ref{i}"));
            write_wav(&args.out.join(&f), r, m.sample_rate)?;
            manifest.push('\t');
            manifest.push_str(&f);
        }
        write_wav(&args.out.join(file("noise")), &m.noise, m.sample_rate)?;
        manifest.push_str(&format!("\tnoise={}\tlabel={name}\n", file("noise")));
    }
    write_text(Some(&args.out.join("manifest.tsv")), &manifest)?;
    info!("wrote {} mixtures to {}", config.experiment.count, args.out.display());
    Ok(true)
}

fn write_separation(dir: &Path, sep: &Separation, config: &Config, params: Option<&MaskParams>) -> Result<()> {
    create_dir(dir)?;
    let sr = sep.report.sample_rate;
    if config.io.write_sources {
        for (i, s) in sep.estimates.iter().enumerate() {
            write_wav(&dir.join(format!("source{i}.wav")), s, sr)?;
        }
    }
    if let (true, Some(opt)) = (config.io.write_trace, &sep.report.optimizer) {
        write_text(Some(&dir.join("trace.csv")), &opt.trace.to_csv())?;
    }
    if let Some(p) = params {
        write_text(Some(&dir.join("masks.json")), &serde_json::to_string_pretty(p)?)?;
    }
    write_text(Some(&dir.join("report.json")), &serde_json::to_string_pretty(&sep.report)?)
}

fn load_single(args: &SeparateArgs, mixture: &Path) -> Result<Mixture> {
    let (x, sr) = read_wav(mixture)?;
    let name = mixture
        .file_stem()
        .map_or("mixture".into(), |s| s.to_string_lossy().into_owned());
    let mut references = Vec::new();
    for p in &args.references {
        let (r, rsr) = read_wav(p)?;
        if rsr != sr || r.len() != x.len() {
            return Err(Error::Wav {
                path: p.clone(),
                message: format!("expected {} samples at {sr} Hz, got {} at {rsr} Hz", x.len(), r.len()),
            });
        }
        references.push(r);
    }
    let noise = match &args.noise {
        Some(p) => read_wav(p)?.0,
        None => (0..x.len())
            .map(|t| x[t] - references.iter().map(|r| r[t]).sum::<f64>())
            .collect(),
    };
    Ok(Mixture {
        name,
        mixture: x,
        references,
        noise,
        sample_rate: sr,
        gain: 1.0,
    })
}

fn separate_one(m: &Mixture, params: Option<&MaskParams>, config: &Config, out: &Path) -> Result<()> {
    match params {
        Some(p) if m.references.is_empty() => {
            let spec = pqiga::features::stft(&m.mixture, &config.features.stft(m.sample_rate)?)?;
            create_dir(out)?;
            for (i, s) in apply_masks(&spec, p)?.signals.iter().enumerate() {
                let y = refine(s, &config.postproc, m.sample_rate)?.signal;
                write_wav(&out.join(format!("source{i}.wav")), &y, m.sample_rate)?;
            }
            Ok(())
        }
        Some(p) => {
            let sep = apply_and_report(m, p, None, ExperimentMode::Transfer, config)?;
            write_separation(out, &sep, config, None)
        }
        None => {
            let sep = separate_supervised(m, config)?;
            let masks = &sep.report.masks;
            let learned = MaskParams::new(masks.gains.clone(), masks.band_edges_hz.clone())?;
            info!("{}: mean SDR {:.2} dB", m.name, sep.report.result.mean.sdr);
            write_separation(out, &sep, config, Some(&learned))
        }
    }
}

fn cmd_separate(args: &SeparateArgs, mut config: Config) -> Result<bool> {
    apply_overrides(&mut config, &args.overrides);
    config.validate()?;
    let params = match &args.params {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Io {
                context: format!("reading {}", p.display()),
                source: e,
            })?;
            let params: MaskParams = serde_json::from_str(&text)?;
            params.validate()?;
            Some(params)
        }
        None => None,
    };
    if let Some(path) = &args.mixture {
        if params.is_none() && args.references.is_empty() {
            return Err(config_error("supervised separation needs --reference files (or --params)"));
        }
        separate_one(&load_single(args, path)?, params.as_ref(), &config, &args.out)?;
        return Ok(true);
    }
    let Some(path) = &args.manifest else {
        return Err(config_error("give --mixture or --manifest"));
    };
    let manifest = DatasetManifest::load(path)?;
    let mut ok = true;
    for entry in &manifest.entries {
        let res = entry
            .load()
            .and_then(|m| separate_one(&m, params.as_ref(), &config, &args.out.join(entry.name())));
        if let Err(e) = res {
            warn!("{}: {e}", entry.name());
            ok = false;
        }
    }
    Ok(ok)
}

fn cmd_eval(args: &EvalArgs) -> Result<bool> {
    let load = |paths: &[PathBuf]| paths.iter().map(|p| read_wav(p).map(|x| x.0)).collect::<Result<Vec<_>>>();
    let refs = load(&args.references)?;
    let ests = load(&args.estimates)?;
    let len = refs[0].len();
    let noise = match &args.noise {
        Some(p) => read_wav(p)?.0,
        None => vec![0.0; len],
    };
    let perm = align_sources(&refs, &ests)?;
    let sources = perm
        .iter()
        .enumerate()
        .map(|(i, &j)| {
            let (metrics, flags) = evaluate(&refs[i], &ests[j], &noise)?;
            Ok(pqiga::harness::report::SourceReport {
                reference: i,
                estimate: j,
                metrics,
                flags,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let result = MethodResult::new(sources);
    write_text(None, &(serde_json::to_string_pretty(&result)? + "\n"))?;
    Ok(true)
}

fn cmd_encode(args: &EncodeArgs, config: &Config) -> Result<bool> {
    let angles = match (&args.angles, &args.wav) {
        (Some(a), _) => a.clone(),
        (None, Some(path)) => {
            let (x, sr) = read_wav(path)?;
            let f = &config.features;
            let m = mfcc(&x, &f.stft(sr)?, f.n_mels, f.n_mfcc)?;
            let scaled = scale_mfcc(&m, &FeatureScaler::fit([&m])?)?;
            scaled.get(args.frame).cloned().ok_or_else(|| {
                Error::InvalidArgument(format!("frame {} out of range; file has {}", args.frame, scaled.len()))
            })?
        }
        (None, None) => return Err(config_error("give --angles or --wav")),
    };
    let state = encode_features(&pad_to_layers(&angles))?;
    let mut csv = String::from("basis_index,re,im\n");
    for (k, a) in state.amplitudes().iter().enumerate() {
        csv.push_str(&format!("{k},{},{}\n", a.re, a.im));
    }
    write_text(args.out.as_deref(), &csv)?;
    Ok(true)
}

fn cmd_convergence(args: &ConvergenceArgs) -> Result<bool> {
    let model = ConvergenceModel {
        alpha: args.alpha,
        beta: args.beta,
        p0: args.p0,
    };
    let curve = convergence_curve(&model, args.t_max)?;
    write_text(args.out.as_deref(), &convergence_csv(&curve))?;
    Ok(true)
}

fn cmd_experiment(args: &ExperimentArgs, mut config: Config) -> Result<bool> {
    apply_recipe(&mut config, &args.recipe)?;
    apply_overrides(&mut config, &args.overrides);
    if let Some(mode) = &args.mode {
        config.experiment.mode = mode.parse()?;
    }
    config.validate()?;
    let inputs = match &args.manifest {
        Some(p) => Inputs::Manifest(DatasetManifest::load(p)?),
        None => Inputs::Synthetic,
    };
    let report = run_experiment(&inputs, &config)?;
    write_text(args.out.as_deref(), &(report.to_json()? + "\n"))?;
    for f in &report.failures {
        warn!("entry {} ({}) failed: {}", f.index, f.entry, f.error);
    }
    Ok(report.failures.is_empty())
}

fn run(cli: Cli) -> Result<bool> {
    let config = load_config(cli.config.as_deref());
    match &cli.command {
        Command::Mix(a) => cmd_mix(a, config?),
        Command::Separate(a) => cmd_separate(a, config?),
        Command::Eval(a) => cmd_eval(a),
        Command::Encode(a) => cmd_encode(a, &config?),
        Command::Convergence(a) => cmd_convergence(a),
        Command::Experiment(a) => cmd_experiment(a, config?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e @ Error::Config(_)) => {
            eprintln!("pqiga: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("pqiga: {e}");
            ExitCode::from(1)
        }
    }
}
