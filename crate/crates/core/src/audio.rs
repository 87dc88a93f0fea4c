//! Mono audio buffers, WAV I/O and band-limited resampling.

use std::f64::consts::PI;
use std::path::Path;

use crate::error::{Error, Result};

/// Mono audio with a fixed sample rate. Samples are finite and nominally in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidAudio("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidAudio(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    /// Builds a buffer from f64 samples, rounding to f32.
    pub fn from_f64(samples: &[f64], sample_rate: u32) -> Result<Self> {
        Self::new(samples.iter().map(|&s| s as f32).collect(), sample_rate)
    }

    pub fn silence(len: usize, sample_rate: u32) -> Result<Self> {
        Self::new(vec![0.0; len], sample_rate)
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.samples.iter().map(|&s| s as f64).collect()
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_sec(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples
            .iter()
            .fold(0.0f64, |m, &s| m.max((s as f64).abs()))
    }

    pub fn rms(&self) -> f64 {
        rms(&self.to_f64())
    }

    /// First `seconds` of audio (or all of it when shorter).
    pub fn truncated(&self, seconds: f64) -> AudioBuffer {
        let n = ((seconds * self.sample_rate as f64).round() as usize).min(self.len());
        AudioBuffer {
            samples: self.samples[..n].to_vec(),
            sample_rate: self.sample_rate,
        }
    }

    /// Samples in `[start, start + len)`, clamped to the buffer.
    pub fn slice(&self, start: usize, len: usize) -> AudioBuffer {
        let start = start.min(self.len());
        let end = start.saturating_add(len).min(self.len());
        AudioBuffer {
            samples: self.samples[start..end].to_vec(),
            sample_rate: self.sample_rate,
        }
    }
}

pub fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

pub fn amplitude_to_db(a: f64) -> f64 {
    20.0 * a.max(1e-12).log10()
}

pub fn db_to_amplitude(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

/// Duration from the header alone.
pub fn wav_duration_sec(path: impl AsRef<Path>) -> Result<f64> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = hound::WavReader::new(std::io::BufReader::new(file))
        .map_err(|e| Error::UnsupportedEncoding(e.to_string()))?;
    Ok(reader.duration() as f64 / reader.spec().sample_rate as f64)
}

/// Reads a 16-bit PCM or 32-bit float WAV file, downmixing stereo by channel mean.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    // Once the file is open, a failed read means a truncated or malformed stream.
    let reader = hound::WavReader::new(std::io::BufReader::new(file))
        .map_err(|e| Error::UnsupportedEncoding(e.to_string()))?;
    let spec = reader.spec();
    if spec.channels == 0 || spec.channels > 2 {
        return Err(Error::UnsupportedEncoding(format!(
            "{} channels",
            spec.channels
        )));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>(),
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>(),
        (fmt, bits) => {
            return Err(Error::UnsupportedEncoding(format!("{fmt:?} {bits}-bit")));
        }
    }
    .map_err(|e| Error::UnsupportedEncoding(e.to_string()))?;

    let channels = spec.channels as usize;
    let mono: Vec<f32> = if channels == 1 {
        interleaved.iter().map(|&s| s as f32).collect()
    } else {
        interleaved
            .chunks_exact(channels)
            .map(|frame| (frame.iter().sum::<f64>() / channels as f64) as f32)
            .collect()
    };
    if mono.is_empty() {
        return Err(Error::EmptyAudio);
    }
    AudioBuffer::new(mono, spec.sample_rate)
}

/// Writes a 32-bit float mono WAV.
pub fn save_wav(buf: &AudioBuffer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if buf.is_empty() {
        return Err(Error::EmptyAudio);
    }
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: buf.sample_rate(),
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let map_err = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::UnsupportedEncoding(other.to_string()),
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(map_err)?;
    for &s in buf.samples() {
        writer.write_sample(s).map_err(map_err)?;
    }
    writer.finalize().map_err(map_err)
}

/// Zero crossings of the sinc kernel on each side of the centre tap.
const HALF_ZERO_CROSSINGS: usize = 8;
const KAISER_BETA: f64 = 8.6;
const TABLE_RESOLUTION: usize = 512;
/// Cutoff relative to the lower of the two Nyquist frequencies.
const CUTOFF_FRACTION: f64 = 0.92;

/// Zeroth-order modified Bessel function of the first kind.
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let half = x / 2.0;
    for k in 1..64 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Tabulated Kaiser-windowed sinc, indexed in units of filter zero crossings.
struct SincTable {
    values: Vec<f64>,
}

impl SincTable {
    fn new() -> Self {
        let n = HALF_ZERO_CROSSINGS * TABLE_RESOLUTION + 2;
        let norm = bessel_i0(KAISER_BETA);
        let values = (0..n)
            .map(|i| {
                let x = i as f64 / TABLE_RESOLUTION as f64;
                let r = x / HALF_ZERO_CROSSINGS as f64;
                if r >= 1.0 {
                    return 0.0;
                }
                let sinc = if x == 0.0 {
                    1.0
                } else {
                    (PI * x).sin() / (PI * x)
                };
                sinc * bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / norm
            })
            .collect();
        Self { values }
    }

    fn eval(&self, x: f64) -> f64 {
        let pos = x.abs() * TABLE_RESOLUTION as f64;
        let i = pos.floor() as usize;
        if i + 1 >= self.values.len() {
            return 0.0;
        }
        let frac = pos - i as f64;
        self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
    }
}

/// Resamples `x` by `ratio` (output rate / input rate) into exactly `out_len` samples.
pub fn resample_by_ratio(x: &[f64], ratio: f64, out_len: usize) -> Vec<f64> {
    let table = SincTable::new();
    let scale = ratio.min(1.0) * CUTOFF_FRACTION;
    let half_width = HALF_ZERO_CROSSINGS as f64 / scale;
    let n = x.len() as isize;
    (0..out_len)
        .map(|j| {
            let t = j as f64 / ratio;
            let lo = (t - half_width).ceil().max(0.0) as isize;
            let hi = ((t + half_width).floor() as isize).min(n - 1);
            let mut acc = 0.0;
            for k in lo..=hi {
                acc += x[k as usize] * table.eval((t - k as f64) * scale);
            }
            acc * scale
        })
        .collect()
}

/// Windowed-sinc (Kaiser) sample-rate conversion.
pub fn resample(buf: &AudioBuffer, target_rate: u32) -> Result<AudioBuffer> {
    if target_rate == 0 {
        return Err(Error::Config("target rate must be positive".into()));
    }
    if target_rate == buf.sample_rate() {
        return Ok(buf.clone());
    }
    let ratio = target_rate as f64 / buf.sample_rate() as f64;
    let out_len = (buf.len() as f64 * ratio).round() as usize;
    let y = resample_by_ratio(&buf.to_f64(), ratio, out_len);
    AudioBuffer::from_f64(&y, target_rate)
}
