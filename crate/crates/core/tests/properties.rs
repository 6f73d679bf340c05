use std::f64::consts::{FRAC_PI_2, PI};

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pqiga::features::{istft, mel_band_edges, mfcc, scale_mfcc, stft, FeatureScaler, StftConfig};
use pqiga::metrics::{sdr, sir, EvalTriple, FitnessWeights};
use pqiga::postproc::{bandpass, compress, declip, BandpassConfig, CompressorConfig};
use pqiga::qiga::{
    convergence_curve, crossover, crossover_with_angle, mutate, run, ConvergenceModel, FnEvaluator, Genome,
    QigaConfig,
};
use pqiga::qstate::{fidelity, QubitPair, StateVector4};
use pqiga::sepmodel::{apply_masks, decode_genome, MaskParams};
use pqiga::Complex64;

fn state_strategy() -> impl Strategy<Value = StateVector4> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 16)
        .prop_filter("non-zero", |v| v.iter().map(|(a, b)| a * a + b * b).sum::<f64>() > 1e-3)
        .prop_map(|v| {
            let norm = v.iter().map(|(a, b)| a * a + b * b).sum::<f64>().sqrt();
            let mut amps = [Complex64::new(0.0, 0.0); 16];
            for (a, (re, im)) in amps.iter_mut().zip(v) {
                *a = Complex64::new(re / norm, im / norm);
            }
            StateVector4::from_amplitudes(amps).unwrap()
        })
}

fn genome_strategy(len: usize) -> impl Strategy<Value = Genome> {
    prop::collection::vec((0.0f64..PI, -PI..PI), len).prop_map(|v| Genome {
        qubits: v
            .into_iter()
            .map(|(theta, phase)| {
                let q = QubitPair::from_angle(theta);
                QubitPair {
                    alpha: q.alpha,
                    beta: q.beta * Complex64::from_polar(1.0, phase),
                }
            })
            .collect(),
    })
}

fn signal(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, len)
}

#[derive(Debug, Clone)]
enum Gate {
    H(usize),
    Ry(usize, f64),
    Cnot(usize, usize),
}

fn gate_strategy() -> impl Strategy<Value = Gate> {
    prop_oneof![
        (0usize..4).prop_map(Gate::H),
        (0usize..4, -2.0 * PI..2.0 * PI).prop_map(|(q, t)| Gate::Ry(q, t)),
        (0usize..4, 1usize..4).prop_map(|(c, d)| Gate::Cnot(c, (c + d) % 4)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn gates_preserve_norm(state in state_strategy(), gate in gate_strategy()) {
        let out = match gate {
            Gate::H(q) => state.apply_hadamard(q),
            Gate::Ry(q, t) => state.apply_ry(q, t),
            Gate::Cnot(c, t) => state.apply_cnot(c, t),
        }
        .unwrap();
        prop_assert!((out.norm_sqr() - 1.0).abs() < 1e-10);
    }
}

proptest! {
    #[test]
    fn fidelity_is_bounded_and_phase_blind(a in state_strategy(), b in state_strategy(), phase in -PI..PI) {
        let f = fidelity(&a, &b);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&f));
        let rot = Complex64::from_polar(1.0, phase);
        let mut amps = *a.amplitudes();
        amps.iter_mut().for_each(|x| *x *= rot);
        let a2 = StateVector4::from_amplitudes(amps).unwrap();
        prop_assert!((fidelity(&a, &a2) - 1.0).abs() < 1e-12);
        let dist: f64 = a.amplitudes().iter().zip(b.amplitudes()).map(|(x, y)| (x - y).norm()).sum();
        if dist > 1e-3 && (1.0 - f) < 1e-12 {
            // Only a global phase may separate states with unit fidelity.
            let ratio = b.amplitudes()[0] / a.amplitudes()[0];
            prop_assert!((ratio.norm() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn operators_keep_genomes_normalized(
        p1 in genome_strategy(12),
        p2 in genome_strategy(12),
        seed in any::<u64>(),
        steps in 1usize..20,
    ) {
        let cfg = QigaConfig { mutation_prob: 0.5, mutation_angle_max: PI, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut a, mut b) = (p1, p2);
        for _ in 0..steps {
            let (c, d) = crossover(&a, &b, &mut rng).unwrap();
            a = mutate(&c, &cfg, &mut rng);
            b = mutate(&d, &cfg, &mut rng);
            prop_assert!(a.is_normalized(1e-10) && b.is_normalized(1e-10));
        }
    }

    #[test]
    fn crossover_endpoints_are_exact(p1 in genome_strategy(6), p2 in genome_strategy(6)) {
        prop_assert_eq!(crossover_with_angle(&p1, &p2, 0.0), Some((p1.clone(), p2.clone())));
        prop_assert_eq!(crossover_with_angle(&p1, &p2, FRAC_PI_2), Some((p2, p1)));
    }

    #[test]
    fn convergence_curves_rise_to_at_most_one(alpha in 0.0f64..=1.0, beta in 0.0f64..5.0, p0 in 0.0f64..=1.0) {
        let curve = convergence_curve(&ConvergenceModel { alpha, beta, p0 }, 200).unwrap();
        prop_assert!(curve.windows(2).all(|w| w[1] >= w[0]));
        prop_assert!(curve.iter().all(|p| *p <= 1.0));
        if beta == 0.0 {
            for (t, p) in curve.iter().enumerate() {
                prop_assert!((p - (1.0 - (1.0 - alpha).powi(t as i32) * (1.0 - p0))).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn stft_round_trip_below_minus_60_db(x in signal(600..3000), hop_div in prop_oneof![Just(2usize), Just(4)]) {
        let cfg = StftConfig::new(256, 256 / hop_div, 8000).unwrap();
        let y = istft(&stft(&x, &cfg).unwrap()).unwrap();
        let err: f64 = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum();
        let energy: f64 = x.iter().map(|v| v * v).sum();
        prop_assume!(energy > 0.0);
        prop_assert!(10.0 * (err / energy).log10() < -60.0);
    }

    #[test]
    fn mfcc_is_deterministic_and_scales_into_range(x in signal(1000..4000)) {
        let cfg = StftConfig::new(256, 128, 8000).unwrap();
        let a = mfcc(&x, &cfg, 20, 13).unwrap();
        let b = mfcc(&x, &cfg, 20, 13).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.frames.iter().flatten().all(|v| v.is_finite()));
        let scaler = FeatureScaler::fit([&a]).unwrap();
        prop_assert!(scaler.min.iter().zip(&scaler.max).all(|(lo, hi)| hi >= lo));
        for v in scale_mfcc(&a, &scaler).unwrap().iter().flatten() {
            prop_assert!((0.0..=PI).contains(v));
        }
    }

    #[test]
    fn masks_sum_to_at_most_one(gains in prop::collection::vec(prop::collection::vec(0.0f64..=1.0, 8), 1..5)) {
        let params = MaskParams::new(gains.clone(), mel_band_edges(8, 8000)).unwrap();
        let masks = params.masks();
        for b in 0..8 {
            let total: f64 = masks.iter().map(|m| m[b]).sum();
            prop_assert!(total <= 1.0 + 1e-6);
            if gains.iter().all(|g| g[b] >= 1e-3) {
                prop_assert!((total - 1.0).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn partition_masks_sum_back_to_the_mixture(
        x in signal(1000..3000),
        gains in prop::collection::vec(prop::collection::vec(0.05f64..=1.0, 8), 2..4),
    ) {
        let cfg = StftConfig::new(256, 128, 8000).unwrap();
        let spec = stft(&x, &cfg).unwrap();
        let recon = istft(&spec).unwrap();
        let params = MaskParams::new(gains, mel_band_edges(8, 8000)).unwrap();
        let sources = apply_masks(&spec, &params).unwrap();
        let err: f64 = (0..x.len())
            .map(|t| (sources.signals.iter().map(|s| s[t]).sum::<f64>() - recon[t]).powi(2))
            .sum();
        let energy: f64 = recon.iter().map(|v| v * v).sum();
        prop_assume!(energy > 0.0);
        prop_assert!(err / energy < 1e-6);
        prop_assert!(sources.signals.iter().flatten().all(|v| v.is_finite()));
    }

    #[test]
    fn decoding_is_monotone_in_beta(g in genome_strategy(8), idx in 0usize..8, bump in 0.0f64..1.0) {
        let before = decode_genome(&g, 2, 4, 8000).unwrap();
        let mut g2 = g.clone();
        let p = g.qubits[idx].prob_one();
        g2.qubits[idx] = QubitPair::from_angle(2.0 * (p + bump * (1.0 - p)).sqrt().asin());
        let after = decode_genome(&g2, 2, 4, 8000).unwrap();
        prop_assert!(after.gains[idx / 4][idx % 4] >= before.gains[idx / 4][idx % 4] - 1e-12);
    }

    #[test]
    fn sir_without_noise_is_sdr(s in signal(10..200), e in signal(10..200)) {
        let n = s.len().min(e.len());
        let (s, e) = (&s[..n], &e[..n]);
        prop_assume!(s.iter().any(|v| *v != 0.0));
        prop_assert_eq!(sir(s, e, &vec![0.0; n]).unwrap().to_bits(), sdr(s, e).unwrap().to_bits());
    }

    #[test]
    fn sdr_is_scale_invariant(s in signal(10..200), e in signal(10..200), k in 1e-3f64..1e3) {
        let n = s.len().min(e.len());
        let (s, e) = (&s[..n], &e[..n]);
        prop_assume!(s.iter().any(|v| *v != 0.0));
        let ks: Vec<f64> = s.iter().map(|v| v * k).collect();
        let ke: Vec<f64> = e.iter().map(|v| v * k).collect();
        prop_assert!((sdr(s, e).unwrap() - sdr(&ks, &ke).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn fitness_is_monotone_in_each_metric(
        w in (0.0f64..2.0, 0.0f64..2.0, 0.0f64..2.0, 0.0f64..2.0),
        base in (-50.0f64..50.0, -50.0f64..50.0, -50.0f64..50.0),
        delta in 0.0f64..20.0,
        which in 0usize..3,
        penalty in 0.0f64..1.0,
    ) {
        let weights = FitnessWeights { w_sdr: w.0, w_sir: w.1, w_sar: w.2, w_corr: w.3 };
        let t = EvalTriple { sdr: base.0, sir: base.1, sar: base.2 };
        let mut better = t;
        match which {
            0 => better.sdr += delta,
            1 => better.sir += delta,
            _ => better.sar += delta,
        }
        prop_assert!(weights.combine(&[better], penalty) >= weights.combine(&[t], penalty));
    }

    #[test]
    fn compressor_curve_is_monotone_and_non_expansive(
        threshold in 0.05f64..=1.0,
        ratio in 1.0f64..20.0,
        mut xs in prop::collection::vec(-1.0f64..=1.0, 2..50),
    ) {
        let cfg = CompressorConfig { threshold, ratio };
        xs.sort_by(f64::total_cmp);
        let ys = compress(&xs, &cfg);
        for (x, y) in xs.iter().zip(&ys) {
            prop_assert!(y.abs() <= x.abs() + 1e-15);
            prop_assert!(y.signum() == x.signum() || *y == 0.0);
        }
        prop_assert!(ys.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn bandpass_is_a_projection(x in signal(100..2000), lo in 0.0f64..2000.0, width in 10.0f64..2000.0) {
        let cfg = BandpassConfig { low: lo, high: (lo + width).min(4000.0) };
        let once = bandpass(&x, &cfg, 8000).unwrap();
        let twice = bandpass(&once, &cfg, 8000).unwrap();
        prop_assert!(once.iter().zip(&twice).all(|(a, b)| (a - b).abs() < 1e-9));
    }

    #[test]
    fn declip_touches_only_clipped_samples(x in signal(5..300), level in 0.3f64..=1.0) {
        let d = declip(&x, level).unwrap();
        for (a, b) in x.iter().zip(&d.signal) {
            if a.abs() < level {
                prop_assert_eq!(a, b);
            }
        }
    }
}

#[test]
fn seeded_runs_are_bit_identical_and_monotone() {
    let target: Vec<f64> = (0..24).map(|i| (i as f64 * 0.37).sin().abs()).collect();
    let eval = FnEvaluator {
        genome_len: 24,
        f: |g: &Genome| Ok(-g.probabilities().iter().zip(&target).map(|(p, t)| (p - t).powi(2)).sum::<f64>()),
    };
    for seed in 0..5 {
        let cfg = QigaConfig { population_size: 20, max_generations: 40, seed, ..Default::default() };
        let a = run(&cfg, &eval).unwrap();
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap()
            .install(|| run(&cfg, &eval).unwrap());
        assert_eq!(a, b);
        assert!(a.trace.best_is_monotone());
        assert!(a.best.is_normalized(1e-10));
    }
}
