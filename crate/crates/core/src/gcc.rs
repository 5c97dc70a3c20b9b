//! GCC-PHAT local angular spectra.
//!
//! For one microphone pair the phase-transformed cross-spectrum is steered
//! over a coarse axis of candidate angles of arrival; the resulting local
//! spectrum is then linearly interpolated onto the global DOA grid using the
//! pair's AOA table. Computing the expensive steering only at the coarse
//! angles and interpolating afterwards is what keeps a dense grid affordable.

use num_complex::Complex64;
use thiserror::Error;

use crate::geometry::{AoaTable, MicPair};
use crate::stft::{SignalError, Spectrogram};

/// Cross-power magnitudes below this are treated as silence: the bin's
/// phase is meaningless, so it contributes 0 to every direction.
pub const CROSS_POWER_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum AxisError {
    #[error("AOA axis step must be in (0, 180], got {0}")]
    BadStep(f64),
}

/// Uniform axis of candidate AOAs in degrees, always spanning [0°, 180°]
/// with both endpoints included. If the step does not divide 180 the last
/// interval is shortened; interpolation therefore never extrapolates.
#[derive(Debug, Clone)]
pub struct AoaAxis {
    angles_deg: Vec<f64>,
}

impl AoaAxis {
    pub fn with_step(step_deg: f64) -> Result<Self, AxisError> {
        if !(step_deg > 0.0 && step_deg <= 180.0) {
            return Err(AxisError::BadStep(step_deg));
        }
        let mut angles_deg = Vec::new();
        let mut k = 0usize;
        loop {
            let a = k as f64 * step_deg;
            if a >= 180.0 {
                break;
            }
            angles_deg.push(a);
            k += 1;
        }
        angles_deg.push(180.0);
        Ok(Self { angles_deg })
    }

    pub fn angles_deg(&self) -> &[f64] {
        &self.angles_deg
    }

    pub fn len(&self) -> usize {
        self.angles_deg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles_deg.is_empty()
    }

    /// Bracketing knots and blend weight for an angle in [0°, 180°]:
    /// `value = (1 - w) * v[lo] + w * v[hi]`. Angles landing exactly on a
    /// knot come back with `w = 0`, which keeps knot lookups bit-exact.
    pub fn bracket(&self, alpha_deg: f64) -> (usize, usize, f64) {
        let angles = &self.angles_deg;
        let hi = angles.partition_point(|&a| a < alpha_deg);
        if hi == 0 {
            return (0, 0, 0.0);
        }
        if hi >= angles.len() {
            return (angles.len() - 1, angles.len() - 1, 0.0);
        }
        if angles[hi] == alpha_deg {
            return (hi, hi, 0.0);
        }
        let lo = hi - 1;
        let w = (alpha_deg - angles[lo]) / (angles[hi] - angles[lo]);
        (lo, hi, w)
    }
}

/// Per-pair local angular spectrum: real values indexed `[frame, bin, angle]`,
/// each the real part of a unit-modulus product, hence in [-1, +1].
#[derive(Debug, Clone)]
pub struct LocalSpectrum {
    pair: MicPair,
    n_frames: usize,
    n_bins: usize,
    n_angles: usize,
    values: Vec<f64>,
}

impl LocalSpectrum {
    pub fn pair(&self) -> &MicPair {
        &self.pair
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn n_angles(&self) -> usize {
        self.n_angles
    }

    pub fn value(&self, frame: usize, bin: usize, angle: usize) -> f64 {
        self.values[(frame * self.n_bins + bin) * self.n_angles + angle]
    }

    /// All angles for one (frame, bin) cell.
    pub fn angle_slice(&self, frame: usize, bin: usize) -> &[f64] {
        let base = (frame * self.n_bins + bin) * self.n_angles;
        &self.values[base..base + self.n_angles]
    }
}

/// Phase transform of the cross-spectrum of two channels: unit modulus per
/// bin, except that bins with near-zero cross-power are set to 0.
pub fn phat_cross_spectrum(x1: &[Complex64], x2: &[Complex64]) -> Vec<Complex64> {
    assert_eq!(x1.len(), x2.len(), "bin counts must match");
    x1.iter()
        .zip(x2.iter())
        .map(|(&a, &b)| {
            let cross = a * b.conj();
            let mag = cross.norm();
            if mag < CROSS_POWER_FLOOR {
                Complex64::default()
            } else {
                cross / mag
            }
        })
        .collect()
}

/// Steering factors `exp(-2i*pi*f_bin*tau*cos(alpha)/n_fft)` for every
/// (bin, angle), laid out `[bin][angle]`.
pub(crate) fn steering_table(
    n_bins: usize,
    n_fft: usize,
    tau: f64,
    angles_deg: &[f64],
) -> Vec<Complex64> {
    let mut table = Vec::with_capacity(n_bins * angles_deg.len());
    for f_bin in 0..n_bins {
        for &alpha in angles_deg {
            let phase = -2.0 * std::f64::consts::PI * f_bin as f64 * tau
                * alpha.to_radians().cos()
                / n_fft as f64;
            table.push(Complex64::new(phase.cos(), phase.sin()));
        }
    }
    table
}

/// GCC-PHAT local angular spectrum of one pair over a coarse AOA axis.
///
/// A plane wave at AOA `alpha` reaches mic `j` first and mic `i` a lag of
/// `tau * cos(alpha)` samples later, so the cross-spectrum is taken as
/// `X_j * conj(X_i)`; steering by `exp(-2i*pi*f*tau*cos(alpha)/n_fft)` then
/// cancels the phase exactly at the true angle.
pub fn local_spectrum(
    spec: &Spectrogram,
    pair: &MicPair,
    axis: &AoaAxis,
) -> Result<LocalSpectrum, SignalError> {
    let n_channels = spec.n_channels();
    for channel in [pair.i, pair.j] {
        if channel >= n_channels {
            return Err(SignalError::ChannelOutOfRange { channel, n_channels });
        }
    }
    let n_frames = spec.n_frames();
    let n_bins = spec.n_bins();
    let n_angles = axis.len();
    let steering = steering_table(n_bins, spec.n_fft(), pair.tau, axis.angles_deg());

    let mut values = Vec::with_capacity(n_frames * n_bins * n_angles);
    for t in 0..n_frames {
        let phat = phat_cross_spectrum(spec.frame(pair.j, t), spec.frame(pair.i, t));
        for (f, &p) in phat.iter().enumerate() {
            let row = &steering[f * n_angles..(f + 1) * n_angles];
            values.extend(row.iter().map(|&s| (p * s).re));
        }
    }
    Ok(LocalSpectrum {
        pair: *pair,
        n_frames,
        n_bins,
        n_angles,
        values,
    })
}

/// Per-pair spectrum carried onto the global grid: `[frame, bin, grid point]`.
#[derive(Debug, Clone)]
pub struct GridSpectrum {
    n_frames: usize,
    n_bins: usize,
    grid_len: usize,
    values: Vec<f64>,
}

impl GridSpectrum {
    pub fn new(n_frames: usize, n_bins: usize, grid_len: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), n_frames * n_bins * grid_len);
        Self { n_frames, n_bins, grid_len, values }
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn grid_len(&self) -> usize {
        self.grid_len
    }

    pub fn value(&self, frame: usize, bin: usize, point: usize) -> f64 {
        self.values[(frame * self.n_bins + bin) * self.grid_len + point]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Linearly interpolates a local spectrum from its AOA axis onto every grid
/// point of the pair's AOA table. Exact at axis knots.
pub fn interpolate_to_grid(
    local: &LocalSpectrum,
    table: &AoaTable,
    axis: &AoaAxis,
) -> GridSpectrum {
    let grid_len = table.len();
    let brackets: Vec<(usize, usize, f64)> =
        table.alpha_deg().iter().map(|&a| axis.bracket(a)).collect();
    let mut values = Vec::with_capacity(local.n_frames() * local.n_bins() * grid_len);
    for t in 0..local.n_frames() {
        for f in 0..local.n_bins() {
            let row = local.angle_slice(t, f);
            values.extend(brackets.iter().map(|&(lo, hi, w)| {
                if w == 0.0 {
                    row[lo]
                } else {
                    (1.0 - w) * row[lo] + w * row[hi]
                }
            }));
        }
    }
    GridSpectrum::new(local.n_frames(), local.n_bins(), grid_len, values)
}
