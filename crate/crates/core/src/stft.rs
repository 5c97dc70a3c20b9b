//! Multichannel short-time Fourier analysis: sine windows, 50% overlap,
//! integer-factor decimation.

use num_complex::Complex64;
use realfft::RealFftPlanner;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("window length must be even and >= 2, got {0}")]
    BadWindowLength(usize),
    #[error("block of {len} samples is shorter than one {n_fft}-sample frame; pad or skip it")]
    BlockTooShort { len: usize, n_fft: usize },
    #[error("hop must be in 1..={n_fft}, got {hop}")]
    BadHop { hop: usize, n_fft: usize },
    #[error("channels have differing lengths ({0} vs {1})")]
    ChannelLengthMismatch(usize, usize),
    #[error("sample rate must be positive")]
    BadSampleRate,
    #[error("cannot decimate {fs_in} Hz to {fs_out} Hz: ratio is not a positive integer")]
    UnsupportedRate { fs_in: u32, fs_out: u32 },
    #[error("channel {channel} out of range for {n_channels}-channel spectrogram")]
    ChannelOutOfRange { channel: usize, n_channels: usize },
}

/// A fixed-length chunk of multichannel audio entering one analysis pass.
#[derive(Debug, Clone)]
pub struct SignalBlock {
    channels: Vec<Vec<f64>>,
    fs: f64,
    start_time: f64,
}

impl SignalBlock {
    pub fn new(channels: Vec<Vec<f64>>, fs: f64, start_time: f64) -> Result<Self, SignalError> {
        if fs <= 0.0 {
            return Err(SignalError::BadSampleRate);
        }
        if let Some(first) = channels.first() {
            for ch in &channels[1..] {
                if ch.len() != first.len() {
                    return Err(SignalError::ChannelLengthMismatch(first.len(), ch.len()));
                }
            }
        }
        Ok(Self { channels, fs, start_time })
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

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

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn start_time(&self) -> f64 {
        self.start_time
    }
}

/// Complex STFT values for every channel, frame and non-negative frequency
/// bin, with frame-center timestamps.
#[derive(Debug, Clone)]
pub struct Spectrogram {
    values: Vec<Complex64>,
    n_channels: usize,
    n_frames: usize,
    n_bins: usize,
    n_fft: usize,
    hop: usize,
    fs: f64,
    frame_times: Vec<f64>,
}

impl Spectrogram {
    /// Assembles a spectrogram from raw complex values laid out
    /// `[channel][frame][bin]` with `n_fft / 2 + 1` bins per frame.
    #[allow(clippy::too_many_arguments)]
    pub fn from_values(
        values: Vec<Complex64>,
        n_channels: usize,
        n_frames: usize,
        n_fft: usize,
        hop: usize,
        fs: f64,
        frame_times: Vec<f64>,
    ) -> Result<Self, SignalError> {
        let n_bins = n_fft / 2 + 1;
        if values.len() != n_channels * n_frames * n_bins || frame_times.len() != n_frames {
            return Err(SignalError::ChannelLengthMismatch(
                values.len(),
                n_channels * n_frames * n_bins,
            ));
        }
        if fs <= 0.0 {
            return Err(SignalError::BadSampleRate);
        }
        Ok(Self { values, n_channels, n_frames, n_bins, n_fft, hop, fs, frame_times })
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    /// Bins per frame: `n_fft / 2 + 1`.
    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn n_fft(&self) -> usize {
        self.n_fft
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    /// Frame-center timestamps in seconds.
    pub fn frame_times(&self) -> &[f64] {
        &self.frame_times
    }

    /// One frame of one channel: `n_bins` complex values.
    pub fn frame(&self, channel: usize, frame: usize) -> &[Complex64] {
        let base = (channel * self.n_frames + frame) * self.n_bins;
        &self.values[base..base + self.n_bins]
    }

    pub fn value(&self, channel: usize, frame: usize, bin: usize) -> Complex64 {
        self.values[(channel * self.n_frames + frame) * self.n_bins + bin]
    }
}

/// Sine analysis window: `w[m] = sin(pi * (m + 0.5) / n)`.
///
/// Strictly positive, symmetric, and `w^2` sums to one across a 50% overlap,
/// which keeps total energy constant frame to frame.
pub fn sine_window(n: usize) -> Result<Vec<f64>, SignalError> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(SignalError::BadWindowLength(n));
    }
    Ok((0..n)
        .map(|m| (std::f64::consts::PI * (m as f64 + 0.5) / n as f64).sin())
        .collect())
}

/// Short-time Fourier transform of a multichannel block.
///
/// Frames start at multiples of `hop`; trailing samples that do not fill a
/// whole frame are dropped. Frame count is `(len - n_fft) / hop + 1`.
pub fn stft(block: &SignalBlock, n_fft: usize, hop: usize) -> Result<Spectrogram, SignalError> {
    let window = sine_window(n_fft)?;
    if hop == 0 || hop > n_fft {
        return Err(SignalError::BadHop { hop, n_fft });
    }
    let len = block.len();
    if len < n_fft {
        return Err(SignalError::BlockTooShort { len, n_fft });
    }
    let n_frames = (len - n_fft) / hop + 1;
    let n_bins = n_fft / 2 + 1;
    let n_channels = block.n_channels();

    let mut planner = RealFftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n_fft);
    let mut values = vec![Complex64::default(); n_channels * n_frames * n_bins];
    let mut buf = fft.make_input_vec();
    let mut out = fft.make_output_vec();

    for (ch, samples) in block.channels().iter().enumerate() {
        for t in 0..n_frames {
            let start = t * hop;
            for (b, (&x, &w)) in buf
                .iter_mut()
                .zip(samples[start..start + n_fft].iter().zip(window.iter()))
            {
                *b = x * w;
            }
            fft.process(&mut buf, &mut out)
                .expect("FFT length matches plan");
            let base = (ch * n_frames + t) * n_bins;
            values[base..base + n_bins].copy_from_slice(&out);
        }
    }

    let frame_times = (0..n_frames)
        .map(|t| block.start_time() + (t * hop + n_fft / 2) as f64 / block.fs())
        .collect();

    Ok(Spectrogram {
        values,
        n_channels,
        n_frames,
        n_bins,
        n_fft,
        hop,
        fs: block.fs(),
        frame_times,
    })
}

/// Low-pass filters and decimates every channel by the integer factor
/// `fs_in / fs_out`. Equal rates pass through untouched.
///
/// The anti-alias filter is a Blackman-windowed sinc with cutoff at
/// `0.45 * fs_out` and `110 * factor + 1` taps, giving roughly 74 dB of
/// stopband rejection with the transition band ending at the new Nyquist.
/// Filtering is zero-phase (center-tap aligned), so inter-channel delays
/// survive decimation.
pub fn decimate(
    channels: &[Vec<f64>],
    fs_in: u32,
    fs_out: u32,
) -> Result<Vec<Vec<f64>>, SignalError> {
    if fs_in == 0 || fs_out == 0 || !fs_in.is_multiple_of(fs_out) {
        return Err(SignalError::UnsupportedRate { fs_in, fs_out });
    }
    let factor = (fs_in / fs_out) as usize;
    if factor == 1 {
        return Ok(channels.to_vec());
    }

    let taps = design_lowpass(0.45 / factor as f64, 110 * factor + 1);
    let half = taps.len() / 2;

    let out = channels
        .iter()
        .map(|x| {
            let n_out = x.len() / factor;
            (0..n_out)
                .map(|k| {
                    let center = k * factor;
                    let mut acc = 0.0;
                    for (t, &h) in taps.iter().enumerate() {
                        let idx = center as isize + t as isize - half as isize;
                        if idx >= 0 && (idx as usize) < x.len() {
                            acc += h * x[idx as usize];
                        }
                    }
                    acc
                })
                .collect()
        })
        .collect();
    Ok(out)
}

/// Blackman-windowed sinc low-pass with unity DC gain. `cutoff` is in cycles
/// per input sample (i.e. already normalized by the input rate).
fn design_lowpass(cutoff: f64, n_taps: usize) -> Vec<f64> {
    use std::f64::consts::PI;
    let center = (n_taps - 1) as f64 / 2.0;
    let mut taps: Vec<f64> = (0..n_taps)
        .map(|t| {
            let x = t as f64 - center;
            let sinc = if x.abs() < 1e-12 {
                2.0 * cutoff
            } else {
                (2.0 * PI * cutoff * x).sin() / (PI * x)
            };
            let w = 0.42 - 0.5 * (2.0 * PI * t as f64 / (n_taps - 1) as f64).cos()
                + 0.08 * (4.0 * PI * t as f64 / (n_taps - 1) as f64).cos();
            sinc * w
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    taps
}
