//! Refinement chain applied to each separated source: bandpass filtering,
//! static dynamic-range compression, then de-clipping.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandpassConfig {
    pub low: f64,
    pub high: f64,
}

impl BandpassConfig {
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        let nyquist = sample_rate as f64 / 2.0;
        if !(self.low >= 0.0 && self.low < self.high && self.high <= nyquist) {
            return Err(Error::invalid(format!(
                "bandpass needs 0 <= low < high <= {nyquist} Hz, got [{}, {}]",
                self.low, self.high
            )));
        }
        Ok(())
    }
}

/// Brick-wall filter on the DFT of the whole signal: bins whose frequency
/// lies outside `[low, high]` are zeroed. Applying it twice equals applying
/// it once.
pub fn bandpass(signal: &[f64], config: &BandpassConfig, sample_rate: u32) -> Result<Vec<f64>> {
    config.validate(sample_rate)?;
    let n = signal.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut planner = FftPlanner::new();
    let mut buf: Vec<Complex64> = signal.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    let bin_hz = sample_rate as f64 / n as f64;
    for (k, x) in buf.iter_mut().enumerate() {
        let f = k.min(n - k) as f64 * bin_hz;
        if f < config.low || f > config.high {
            *x = Complex64::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    Ok(buf.iter().map(|c| c.re / n as f64).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompressorConfig {
    /// Full-scale amplitude in `(0, 1]`.
    pub threshold: f64,
    pub ratio: f64,
}

impl Default for CompressorConfig {
    fn default() -> Self {
        CompressorConfig {
            threshold: 0.5,
            ratio: 4.0,
        }
    }
}

impl CompressorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(Error::invalid(format!(
                "compressor threshold must be in (0, 1], got {}",
                self.threshold
            )));
        }
        if !(self.ratio >= 1.0 && self.ratio.is_finite()) {
            return Err(Error::invalid(format!(
                "compressor ratio must be >= 1, got {}",
                self.ratio
            )));
        }
        Ok(())
    }

    /// Static curve for one sample; sign preserved.
    pub fn apply(&self, x: f64) -> f64 {
        let mag = x.abs();
        if mag <= self.threshold {
            x
        } else {
            x.signum() * (self.threshold + (mag - self.threshold) / self.ratio)
        }
    }
}

pub fn compress(signal: &[f64], config: &CompressorConfig) -> Vec<f64> {
    signal.iter().map(|&x| config.apply(x)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Declipped {
    pub signal: Vec<f64>,
    pub runs_repaired: usize,
    /// Every sample was at or above the clip level; nothing was changed.
    pub all_clipped: bool,
}

fn hermite(t: f64, p0: f64, m0: f64, p1: f64, m1: f64, span: f64) -> f64 {
    let (t2, t3) = (t * t, t * t * t);
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    h00 * p0 + h10 * span * m0 + h01 * p1 + h11 * span * m1
}

/// Replaces each maximal run of samples with `|x| >= clip_level` by a cubic
/// Hermite curve between the nearest unclipped neighbours. Slopes are
/// one-sided differences taken outward from each neighbour. Runs touching
/// either end of the signal hold the neighbour's value.
pub fn declip(signal: &[f64], clip_level: f64) -> Result<Declipped> {
    if !(clip_level > 0.0 && clip_level <= 1.0) {
        return Err(Error::invalid(format!(
            "clip level must be in (0, 1], got {clip_level}"
        )));
    }
    let n = signal.len();
    let clipped: Vec<bool> = signal.iter().map(|x| x.abs() >= clip_level).collect();
    if n > 0 && clipped.iter().all(|&c| c) {
        return Ok(Declipped {
            signal: signal.to_vec(),
            runs_repaired: 0,
            all_clipped: true,
        });
    }

    let mut out = signal.to_vec();
    let mut runs = 0;
    let mut i = 0;
    while i < n {
        if !clipped[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && clipped[i] {
            i += 1;
        }
        let end = i; // exclusive
        runs += 1;
        match (start.checked_sub(1), (end < n).then_some(end)) {
            (Some(l), Some(r)) => {
                let slope_l = l.checked_sub(1).map_or(0.0, |ll| signal[l] - signal[ll]);
                let slope_r = if r + 1 < n { signal[r + 1] - signal[r] } else { 0.0 };
                let span = (r - l) as f64;
                for (k, o) in out.iter_mut().enumerate().take(end).skip(start) {
                    let t = (k - l) as f64 / span;
                    *o = hermite(t, signal[l], slope_l, signal[r], slope_r, span);
                }
            }
            (None, Some(r)) => out[start..end].fill(signal[r]),
            (Some(l), None) => out[start..end].fill(signal[l]),
            (None, None) => unreachable!("fully clipped signals return early"),
        }
    }
    Ok(Declipped {
        signal: out,
        runs_repaired: runs,
        all_clipped: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PostprocConfig {
    pub enabled: bool,
    pub bandpass: bool,
    pub band_low_hz: f64,
    /// Upper band edge; defaults to `0.45 × sample_rate` when absent.
    pub band_high_hz: Option<f64>,
    pub compress: bool,
    pub threshold: f64,
    pub ratio: f64,
    pub declip: bool,
    pub clip_level: f64,
}

impl Default for PostprocConfig {
    fn default() -> Self {
        PostprocConfig {
            enabled: true,
            bandpass: true,
            band_low_hz: 50.0,
            band_high_hz: None,
            compress: true,
            threshold: 0.5,
            ratio: 4.0,
            declip: true,
            clip_level: 0.999,
        }
    }
}

impl PostprocConfig {
    pub fn band(&self, sample_rate: u32) -> BandpassConfig {
        BandpassConfig {
            low: self.band_low_hz,
            high: self
                .band_high_hz
                .unwrap_or(0.45 * sample_rate as f64),
        }
    }

    pub fn compressor(&self) -> CompressorConfig {
        CompressorConfig {
            threshold: self.threshold,
            ratio: self.ratio,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.compressor().validate()?;
        if !(self.clip_level > 0.0 && self.clip_level <= 1.0) {
            return Err(Error::invalid("clip_level must be in (0, 1]"));
        }
        if self.band_low_hz < 0.0 || self.band_high_hz.is_some_and(|h| h <= self.band_low_hz) {
            return Err(Error::invalid("band_low_hz must be >= 0 and below band_high_hz"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Refined {
    pub signal: Vec<f64>,
    pub declip_all_clipped: bool,
}

/// Bandpass, then compression, then de-clipping; stages can be disabled.
pub fn refine(signal: &[f64], config: &PostprocConfig, sample_rate: u32) -> Result<Refined> {
    let mut x = signal.to_vec();
    let mut all_clipped = false;
    if !config.enabled {
        return Ok(Refined {
            signal: x,
            declip_all_clipped: false,
        });
    }
    if config.bandpass {
        x = bandpass(&x, &config.band(sample_rate), sample_rate)?;
    }
    if config.compress {
        x = compress(&x, &config.compressor());
    }
    if config.declip {
        let d = declip(&x, config.clip_level)?;
        all_clipped = d.all_clipped;
        x = d.signal;
    }
    Ok(Refined {
        signal: x,
        declip_all_clipped: all_clipped,
    })
}
