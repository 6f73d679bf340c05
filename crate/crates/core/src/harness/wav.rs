use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{Error, Result};
use crate::features::downmix;

const PCM16_SCALE: f64 = 32768.0;

fn wav_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Wav {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Mono samples in `[-1, 1]` and the sample rate. Multichannel files are
/// averaged down to one channel.
pub fn read_wav(path: &Path) -> Result<(Vec<f64>, u32)> {
    let reader = WavReader::open(path).map_err(|e| describe(path, e))?;
    let spec = reader.spec();
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / PCM16_SCALE))
            .collect::<std::result::Result<_, _>>(),
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>(),
        (fmt, bits) => {
            return Err(wav_error(
                path,
                format!("unsupported encoding {fmt:?} {bits}-bit; expected PCM16 or float32"),
            ))
        }
    }
    .map_err(|e| describe(path, e))?;
    Ok((downmix(&interleaved, spec.channels as usize), spec.sample_rate))
}

/// Writes mono PCM16. Samples are rounded and clipped to full scale.
pub fn write_wav(path: &Path, samples: &[f64], sample_rate: u32) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let fail = |e: hound::Error| wav_error(path, e.to_string());
    let mut writer = WavWriter::create(path, spec).map_err(fail)?;
    for &x in samples {
        let q = (x * PCM16_SCALE).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(q).map_err(fail)?;
    }
    writer.finalize().map_err(fail)
}

/// Turns a decoder error into one that names the offending chunk when the
/// file structure is at fault.
fn describe(path: &Path, err: hound::Error) -> Error {
    match std::fs::read(path) {
        Ok(bytes) => match scan_chunks(&bytes) {
            Some(problem) => wav_error(path, problem),
            None => wav_error(path, err.to_string()),
        },
        Err(e) => wav_error(path, e.to_string()),
    }
}

/// First structural problem in a RIFF/WAVE byte stream, if any.
pub fn scan_chunks(bytes: &[u8]) -> Option<String> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" {
        return Some("missing or truncated RIFF chunk".into());
    }
    if &bytes[8..12] != b"WAVE" {
        return Some("missing WAVE form type".into());
    }
    let mut pos = 12;
    let mut seen_fmt = false;
    while pos < bytes.len() {
        if bytes.len() - pos < 8 {
            return Some("truncated chunk header".into());
        }
        let id = String::from_utf8_lossy(&bytes[pos..pos + 4]).into_owned();
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body = pos + 8;
        if bytes.len() - body < size {
            return Some(format!("truncated {id:?} chunk: {size} bytes declared, {} present", bytes.len() - body));
        }
        match id.as_str() {
            "fmt " => seen_fmt = true,
            "data" if !seen_fmt => return Some("missing \"fmt \" chunk before \"data\"".into()),
            "data" => return None,
            _ => {}
        }
        pos = body + size + size % 2;
    }
    if seen_fmt {
        Some("missing \"data\" chunk".into())
    } else {
        Some("missing \"fmt \" chunk".into())
    }
}
