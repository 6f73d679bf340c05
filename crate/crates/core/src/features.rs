//! Time-frequency analysis and MFCC extraction.
//!
//! The STFT pads `frame_len - hop` zeros on the left and
//! enough on the right that every input sample is covered by a full set of
//! overlapping windows. With a periodic Hann window at a COLA hop, the
//! inverse transform is exact over the whole input, not just the interior.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    Hann,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StftConfig {
    pub frame_len: usize,
    pub hop: usize,
    pub window: Window,
    pub sample_rate: u32,
}

impl Default for StftConfig {
    fn default() -> Self {
        StftConfig {
            frame_len: 1024,
            hop: 512,
            window: Window::Hann,
            sample_rate: 16_000,
        }
    }
}

impl StftConfig {
    pub fn new(frame_len: usize, hop: usize, sample_rate: u32) -> Result<Self> {
        let cfg = StftConfig {
            frame_len,
            hop,
            window: Window::Hann,
            sample_rate,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_sample_rate(self, sample_rate: u32) -> Self {
        StftConfig {
            sample_rate,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.frame_len.is_power_of_two() || self.frame_len < 4 {
            return Err(Error::invalid(format!(
                "frame_len must be a power of two >= 4, got {}",
                self.frame_len
            )));
        }
        if self.hop == 0 || self.hop > self.frame_len {
            return Err(Error::invalid(format!(
                "hop must be in 1..={}, got {}",
                self.frame_len, self.hop
            )));
        }
        if self.sample_rate == 0 {
            return Err(Error::invalid("sample_rate must be positive"));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.frame_len / 2 + 1
    }

    /// Center frequency of one-sided bin `k` in Hz.
    pub fn bin_frequency(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate as f64 / self.frame_len as f64
    }

    pub fn window(&self) -> Vec<f64> {
        match self.window {
            Window::Hann => hann(self.frame_len),
        }
    }

    /// Overlap-add gain of the window at this hop, if it is constant.
    pub fn cola_gain(&self) -> Option<f64> {
        let w = self.window();
        let sums: Vec<f64> = (0..self.hop)
            .map(|offset| w.iter().skip(offset).step_by(self.hop).sum())
            .collect();
        let first = sums[0];
        sums.iter()
            .all(|s| (s - first).abs() <= 1e-9 * first.abs().max(1.0))
            .then_some(first)
            .filter(|g| *g > 0.0)
    }
}

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// `T × (frame_len/2 + 1)` one-sided complex bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub frames: Vec<Vec<Complex64>>,
    pub config: StftConfig,
    /// Length of the signal the spectrogram was computed from.
    pub signal_len: usize,
}

impl Spectrogram {
    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn zeros_like(&self) -> Spectrogram {
        Spectrogram {
            frames: vec![vec![Complex64::new(0.0, 0.0); self.config.n_bins()]; self.frames.len()],
            config: self.config,
            signal_len: self.signal_len,
        }
    }

    /// Multiplies every bin `k` of every frame by `gains[k]`.
    pub fn scaled_bins(&self, gains: &[f64]) -> Spectrogram {
        let frames = self
            .frames
            .iter()
            .map(|f| f.iter().zip(gains).map(|(x, g)| x * *g).collect())
            .collect();
        Spectrogram {
            frames,
            config: self.config,
            signal_len: self.signal_len,
        }
    }
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    let mut planner = FftPlanner::new();
    if inverse {
        planner.plan_fft_inverse(len)
    } else {
        planner.plan_fft_forward(len)
    }
}

fn frame_layout(config: &StftConfig, signal_len: usize) -> (usize, usize) {
    let pad_left = config.frame_len - config.hop;
    let last = pad_left + signal_len - 1;
    let n_frames = last / config.hop + 1;
    (pad_left, n_frames)
}

pub fn stft(signal: &[f64], config: &StftConfig) -> Result<Spectrogram> {
    config.validate()?;
    if signal.len() < config.frame_len {
        return Err(Error::invalid(format!(
            "signal of {} samples is shorter than one frame ({})",
            signal.len(),
            config.frame_len
        )));
    }
    let n = config.frame_len;
    let (pad_left, n_frames) = frame_layout(config, signal.len());
    let window = config.window();
    let fft = plan(n, false);
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];

    let frames = (0..n_frames)
        .map(|t| {
            let start = t * config.hop;
            let mut buf: Vec<Complex64> = (0..n)
                .map(|i| {
                    let x = (start + i)
                        .checked_sub(pad_left)
                        .and_then(|j| signal.get(j))
                        .copied()
                        .unwrap_or(0.0);
                    Complex64::new(x * window[i], 0.0)
                })
                .collect();
            fft.process_with_scratch(&mut buf, &mut scratch);
            buf.truncate(config.n_bins());
            buf
        })
        .collect();

    Ok(Spectrogram {
        frames,
        config: *config,
        signal_len: signal.len(),
    })
}

pub fn istft(spec: &Spectrogram) -> Result<Vec<f64>> {
    let config = &spec.config;
    config.validate()?;
    let gain = config.cola_gain().ok_or_else(|| {
        Error::invalid(format!(
            "hop {} does not satisfy constant overlap-add for a {}-point Hann window",
            config.hop, config.frame_len
        ))
    })?;
    let n = config.frame_len;
    let n_bins = config.n_bins();
    let (pad_left, _) = frame_layout(config, spec.signal_len);
    let total = (spec.frames.len().saturating_sub(1)) * config.hop + n;
    let mut out = vec![0.0; total];

    let ifft = plan(n, true);
    let mut scratch = vec![Complex64::new(0.0, 0.0); ifft.get_inplace_scratch_len()];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let scale = 1.0 / (n as f64 * gain);

    for (t, frame) in spec.frames.iter().enumerate() {
        if frame.len() != n_bins {
            return Err(Error::invalid(format!(
                "frame {t} has {} bins, expected {n_bins}",
                frame.len()
            )));
        }
        buf[..n_bins].copy_from_slice(frame);
        // Hermitian extension; DC and Nyquist must be real for a real signal.
        buf[0].im = 0.0;
        buf[n / 2].im = 0.0;
        for k in 1..n / 2 {
            buf[n - k] = frame[k].conj();
        }
        ifft.process_with_scratch(&mut buf, &mut scratch);
        let start = t * config.hop;
        for (o, v) in out[start..start + n].iter_mut().zip(buf.iter()) {
            *o += v.re * scale;
        }
    }

    Ok(out
        .into_iter()
        .skip(pad_left)
        .take(spec.signal_len)
        .collect())
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// `n_bands + 1` mel-spaced edges spanning `[0, sample_rate / 2]`.
pub fn mel_band_edges(n_bands: usize, sample_rate: u32) -> Vec<f64> {
    let nyquist = sample_rate as f64 / 2.0;
    let top = hz_to_mel(nyquist);
    let mut edges: Vec<f64> = (0..=n_bands)
        .map(|i| mel_to_hz(top * i as f64 / n_bands as f64))
        .collect();
    edges[0] = 0.0;
    edges[n_bands] = nyquist;
    edges
}

/// Triangular mel filterbank, `n_mels × n_bins`.
pub fn mel_filterbank(n_mels: usize, config: &StftConfig) -> Vec<Vec<f64>> {
    let nyquist = config.sample_rate as f64 / 2.0;
    let top = hz_to_mel(nyquist);
    let points: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
        .collect();
    (0..n_mels)
        .map(|m| {
            let (lo, mid, hi) = (points[m], points[m + 1], points[m + 2]);
            (0..config.n_bins())
                .map(|k| {
                    let f = config.bin_frequency(k);
                    if f <= lo || f >= hi {
                        0.0
                    } else if f <= mid {
                        (f - lo) / (mid - lo)
                    } else {
                        (hi - f) / (hi - mid)
                    }
                })
                .collect()
        })
        .collect()
}

/// Orthonormal DCT-II, first `n_out` coefficients.
fn dct2(input: &[f64], n_out: usize) -> Vec<f64> {
    let n = input.len() as f64;
    (0..n_out)
        .map(|k| {
            let s: f64 = input
                .iter()
                .enumerate()
                .map(|(i, x)| x * (PI * k as f64 * (i as f64 + 0.5) / n).cos())
                .sum();
            let norm = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            s * norm
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfccMatrix {
    pub frames: Vec<Vec<f64>>,
    pub n_mels: usize,
    pub n_mfcc: usize,
}

pub fn mfcc(signal: &[f64], config: &StftConfig, n_mels: usize, n_mfcc: usize) -> Result<MfccMatrix> {
    if n_mfcc == 0 || n_mfcc > n_mels || n_mels > config.frame_len / 2 {
        return Err(Error::invalid(format!(
            "need 0 < n_mfcc <= n_mels <= frame_len/2, got n_mfcc={n_mfcc}, n_mels={n_mels}, frame_len={}",
            config.frame_len
        )));
    }
    let spec = stft(signal, config)?;
    let bank = mel_filterbank(n_mels, config);
    let frames = spec
        .frames
        .iter()
        .map(|frame| {
            let power: Vec<f64> = frame.iter().map(|x| x.norm_sqr()).collect();
            let log_mel: Vec<f64> = bank
                .iter()
                .map(|filt| {
                    let e: f64 = filt.iter().zip(&power).map(|(w, p)| w * p).sum();
                    e.max(LOG_FLOOR).ln()
                })
                .collect();
            dct2(&log_mel, n_mfcc)
        })
        .collect();
    Ok(MfccMatrix {
        frames,
        n_mels,
        n_mfcc,
    })
}

/// Per-coefficient range used to map MFCCs onto rotation angles in `[0, π]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl FeatureScaler {
    /// Global min/max per coefficient over every frame of every matrix.
    pub fn fit<'a>(corpus: impl IntoIterator<Item = &'a MfccMatrix>) -> Result<Self> {
        let mut scaler: Option<FeatureScaler> = None;
        for m in corpus {
            for frame in &m.frames {
                let s = scaler.get_or_insert_with(|| FeatureScaler {
                    min: vec![f64::INFINITY; frame.len()],
                    max: vec![f64::NEG_INFINITY; frame.len()],
                });
                if frame.len() != s.min.len() {
                    return Err(Error::invalid("MFCC matrices disagree on coefficient count"));
                }
                for (j, &v) in frame.iter().enumerate() {
                    s.min[j] = s.min[j].min(v);
                    s.max[j] = s.max[j].max(v);
                }
            }
        }
        scaler.ok_or_else(|| Error::invalid("cannot fit a scaler on an empty corpus"))
    }

    pub fn scale(&self, j: usize, v: f64) -> f64 {
        let (lo, hi) = (self.min[j], self.max[j]);
        if hi <= lo {
            return PI / 2.0;
        }
        (PI * (v - lo) / (hi - lo)).clamp(0.0, PI)
    }
}

pub fn scale_mfcc(m: &MfccMatrix, scaler: &FeatureScaler) -> Result<Vec<Vec<f64>>> {
    if scaler.min.len() != m.n_mfcc || scaler.max.len() != m.n_mfcc {
        return Err(Error::invalid(format!(
            "scaler fitted for {} coefficients, matrix has {}",
            scaler.min.len(),
            m.n_mfcc
        )));
    }
    Ok(m.frames
        .iter()
        .map(|f| f.iter().enumerate().map(|(j, &v)| scaler.scale(j, v)).collect())
        .collect())
}

/// Averages interleaved channels down to mono.
pub fn downmix(interleaved: &[f64], channels: usize) -> Vec<f64> {
    if channels <= 1 {
        return interleaved.to_vec();
    }
    interleaved
        .chunks_exact(channels)
        .map(|c| c.iter().sum::<f64>() / channels as f64)
        .collect()
}
