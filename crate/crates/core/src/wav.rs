//! Multichannel WAV reading and writing.
//!
//! Integer PCM (16/24/32-bit) and 32-bit float files are accepted; integer
//! samples are normalized to [-1, 1]. Output is always 32-bit float, which
//! round-trips rendered signals to within one float ULP.

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("cannot open '{path}': {source}")]
    Open { path: String, source: hound::Error },
    #[error("cannot create '{path}': {source}")]
    Create { path: String, source: hound::Error },
    #[error("'{path}': {source}")]
    Malformed { path: String, source: hound::Error },
    #[error("'{path}': unsupported sample format ({bits}-bit {format})")]
    UnsupportedFormat { path: String, bits: u16, format: &'static str },
    #[error("'{path}': data chunk holds no samples")]
    Empty { path: String },
    #[error("'{path}': declares zero channels")]
    NoChannels { path: String },
}

/// Multichannel audio in memory, one `Vec` per channel.
#[derive(Debug, Clone)]
pub struct Audio {
    pub channels: Vec<Vec<f64>>,
    pub fs: u32,
}

impl Audio {
    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.fs as f64
    }
}

/// Reads a whole WAV file into memory, de-interleaved and normalized.
pub fn read_wav(path: &Path) -> Result<Audio, AudioError> {
    let display = path.display().to_string();
    let mut reader = hound::WavReader::open(path)
        .map_err(|source| AudioError::Open { path: display.clone(), source })?;
    let spec = reader.spec();
    if spec.channels == 0 {
        return Err(AudioError::NoChannels { path: display });
    }

    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(|source| AudioError::Malformed { path: display.clone(), source })?,
        (hound::SampleFormat::Int, bits @ (16 | 24 | 32)) => {
            let scale = 1.0 / (1u64 << (bits - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<Result<_, _>>()
                .map_err(|source| AudioError::Malformed { path: display.clone(), source })?
        }
        (format, bits) => {
            let format = match format {
                hound::SampleFormat::Float => "float",
                hound::SampleFormat::Int => "integer",
            };
            return Err(AudioError::UnsupportedFormat { path: display, bits, format });
        }
    };
    if interleaved.is_empty() {
        return Err(AudioError::Empty { path: display });
    }

    let n_channels = spec.channels as usize;
    // Only complete frames; a truncated trailing frame is dropped.
    let frames = interleaved.len() / n_channels;
    let mut channels = vec![Vec::with_capacity(frames); n_channels];
    for frame in interleaved.chunks_exact(n_channels) {
        for (ch, &v) in channels.iter_mut().zip(frame) {
            ch.push(v);
        }
    }
    Ok(Audio { channels, fs: spec.sample_rate })
}

/// Writes 32-bit float WAV.
pub fn write_wav_f32(path: &Path, audio: &Audio) -> Result<(), AudioError> {
    let display = path.display().to_string();
    let spec = hound::WavSpec {
        channels: audio.n_channels() as u16,
        sample_rate: audio.fs,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut writer = hound::WavWriter::create(path, spec)
        .map_err(|source| AudioError::Create { path: display.clone(), source })?;
    for frame in 0..audio.len() {
        for ch in &audio.channels {
            writer
                .write_sample(ch[frame] as f32)
                .map_err(|source| AudioError::Malformed { path: display.clone(), source })?;
        }
    }
    writer
        .finalize()
        .map_err(|source| AudioError::Malformed { path: display, source })?;
    Ok(())
}
