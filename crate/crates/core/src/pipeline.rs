//! Batch localization pipeline: geometry/config ingestion, sliding-block
//! SRP-PHAT over a DOA grid, estimate emission.
//!
//! The per-block evaluation is algebraically identical to "interpolate every
//! pair's local spectrum to the grid, then pool" but avoids materializing the
//! full `[pair][frame][bin][grid]` tensor: sum reductions that precede every
//! max reduction commute with linear interpolation, so they are folded on the
//! coarse AOA axis first. Whatever remains is reduced on the grid in the
//! configured order, streaming with O(grid) accumulators.

use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Deserialize;
use thiserror::Error;

use crate::eval::{interpolate_trajectory, EvalError, TrajectoryRecord};
use crate::gcc::{steering_table, AoaAxis, AxisError, CROSS_POWER_FLOOR};
use crate::geometry::{
    compute_aoa_table, derive_pairs, select_pairs_curvilinear, ArrayGeometry, DoaGrid,
    GeometryError, MicPair, Vec3,
};
use crate::srp::{find_peaks, AngularSpectrum, PeakSpec, PoolAxis, PoolingSpec, Reducer, SrpError};
use crate::stft::{decimate, stft, SignalBlock, SignalError, Spectrogram};
use crate::wav::{read_wav, AudioError};

/// Pooled peak scores at or below this are flagged as low-confidence: digital
/// silence pools to exactly zero, while any coherent content lands far above.
pub const LOW_SCORE_FLOOR: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Axis(#[from] AxisError),
    #[error(transparent)]
    Srp(#[from] SrpError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("geometry file '{path}': {message}")]
    GeometryFile { path: String, message: String },
    #[error("'{path}' has {channels} channels but geometry '{geometry}' defines {mics} microphones")]
    ChannelMismatch { path: String, channels: usize, geometry: String, mics: usize },
    #[error("invalid config: {0}")]
    BadConfig(String),
    #[error("timestamp file '{path}' line {line}: {message}")]
    Timestamps { path: String, line: usize, message: String },
}

/// Everything `locate` needs: file paths plus the search parameters.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub geometry_path: PathBuf,
    pub input_path: PathBuf,
    pub output_path: PathBuf,
    /// Optional file of query timestamps; estimates are interpolated onto
    /// them before writing.
    pub timestamps_path: Option<PathBuf>,
    pub block_ms: u32,
    pub hop_ms: u32,
    pub n_fft: usize,
    pub target_fs: u32,
    pub grid_res_deg: f64,
    pub aoa_res_deg: f64,
    pub pooling: PoolingSpec,
    /// Pairs closer than this on the baffle are dropped; 0 keeps all pairs
    /// (and skips the center-distance validation entirely).
    pub min_pair_angle_deg: f64,
    pub speed_of_sound: f64,
    /// Optional [low, high] Hz band; bins outside it are excluded.
    pub band_hz: Option<(f64, f64)>,
}

impl RunConfig {
    pub fn new(geometry: impl Into<PathBuf>, input: impl Into<PathBuf>, output: impl Into<PathBuf>) -> Self {
        Self {
            geometry_path: geometry.into(),
            input_path: input.into(),
            output_path: output.into(),
            timestamps_path: None,
            block_ms: 512,
            hop_ms: 256,
            n_fft: 1024,
            target_fs: 16000,
            grid_res_deg: 1.0,
            aoa_res_deg: 5.0,
            pooling: PoolingSpec::default(),
            min_pair_angle_deg: 0.0,
            speed_of_sound: crate::geometry::DEFAULT_SPEED_OF_SOUND,
            band_hz: None,
        }
    }
}

/// One emitted DOA estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub time_s: f64,
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    pub score: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeometryFileSchema {
    name: String,
    center: Option<[f64; 3]>,
    mics: Vec<MicEntrySchema>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MicEntrySchema {
    label: Option<String>,
    pos: [f64; 3],
}

/// A parsed geometry file.
#[derive(Debug, Clone)]
pub struct NamedGeometry {
    pub name: String,
    pub labels: Vec<String>,
    pub geometry: ArrayGeometry,
}

/// Reads and validates a geometry config file. Schema:
///
/// ```toml
/// name = "my_array"
/// # center = [0.0, 0.0, 0.0]   # optional, defaults to the centroid
/// [[mics]]
/// label = "m00"                # optional, defaults to "mic<index>"
/// pos = [0.037, 0.056, -0.038] # meters
/// ```
///
/// Unknown fields, fewer than two microphones, non-finite coordinates and
/// duplicate positions are all rejected with the offending detail.
pub fn read_geometry(path: &Path) -> Result<NamedGeometry, PipelineError> {
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::GeometryFile {
        path: display.clone(),
        message: e.to_string(),
    })?;
    let schema: GeometryFileSchema =
        toml::from_str(&text).map_err(|e| PipelineError::GeometryFile {
            path: display.clone(),
            message: e.to_string(),
        })?;
    let labels: Vec<String> = schema
        .mics
        .iter()
        .enumerate()
        .map(|(i, m)| m.label.clone().unwrap_or_else(|| format!("mic{i:02}")))
        .collect();
    let mics: Vec<Vec3> = schema.mics.iter().map(|m| Vec3::from(m.pos)).collect();
    let geometry = match schema.center {
        Some(c) => ArrayGeometry::with_center(mics, Vec3::from(c)),
        None => ArrayGeometry::new(mics),
    }
    .map_err(|e| PipelineError::GeometryFile { path: display, message: e.to_string() })?;
    Ok(NamedGeometry { name: schema.name, labels, geometry })
}

/// Precomputed per-pair interpolation: bracketing knot and blend weight for
/// every grid point, arranged so `lo + 1` is always a valid knot.
struct GatherTable {
    lo: Vec<u32>,
    w: Vec<f64>,
}

impl GatherTable {
    fn build(grid: &DoaGrid, pair: &MicPair, axis: &AoaAxis) -> Self {
        let table = compute_aoa_table(grid, pair);
        let n = axis.len();
        let mut lo = Vec::with_capacity(table.len());
        let mut w = Vec::with_capacity(table.len());
        for &alpha in table.alpha_deg() {
            let (a, b, mut weight) = axis.bracket(alpha);
            let mut base = a;
            if b == a {
                // Exact knot: express as a lerp that still reads two knots.
                if a == n - 1 {
                    base = n - 2;
                    weight = 1.0;
                }
            }
            lo.push(base as u32);
            w.push(weight);
        }
        Self { lo, w }
    }
}

/// One pair's contribution after the axis-side (hoisted) reductions:
/// `[t_eff][f_eff][angle]`, where a hoisted axis has effective length 1.
struct PairAxisData {
    n_f: usize,
    n_angles: usize,
    values: Vec<f64>,
}

impl PairAxisData {
    fn row(&self, t: usize, f: usize) -> &[f64] {
        let base = (t * self.n_f + f) * self.n_angles;
        &self.values[base..base + self.n_angles]
    }
}

/// Reusable SRP-PHAT engine for one geometry and parameter set.
pub struct Locator {
    grid: Arc<DoaGrid>,
    pairs: Vec<MicPair>,
    gather: Vec<GatherTable>,
    /// Steering factors per pair for the kept bins: `[kept_bin][angle]`.
    steering: Vec<Vec<Complex64>>,
    n_angles: usize,
    n_mics: usize,
    n_fft: usize,
    /// Inclusive absolute bin range fed to localization.
    bin_lo: usize,
    bin_hi: usize,
    block_samples: usize,
    hop_samples: usize,
    target_fs: u32,
    pooling: PoolingSpec,
}

impl Locator {
    pub fn new(geometry: &ArrayGeometry, config: &RunConfig) -> Result<Self, PipelineError> {
        if config.hop_ms == 0 || config.hop_ms > config.block_ms {
            return Err(PipelineError::BadConfig(format!(
                "hop ({} ms) must be in 1..=block ({} ms)",
                config.hop_ms, config.block_ms
            )));
        }
        let block_samples =
            (config.block_ms as u64 * config.target_fs as u64 / 1000) as usize;
        let hop_samples = (config.hop_ms as u64 * config.target_fs as u64 / 1000) as usize;
        if config.n_fft < 2 || !config.n_fft.is_multiple_of(2) {
            return Err(PipelineError::BadConfig(format!(
                "n_fft must be even and >= 2 for 50% overlap, got {}",
                config.n_fft
            )));
        }
        if config.n_fft > block_samples {
            return Err(PipelineError::BadConfig(format!(
                "n_fft ({}) exceeds the {}-sample block",
                config.n_fft, block_samples
            )));
        }
        if let Some((lo, hi)) = config.band_hz {
            if !(lo >= 0.0 && hi > lo) {
                return Err(PipelineError::BadConfig(format!(
                    "band must satisfy 0 <= low < high, got {lo}..{hi}"
                )));
            }
        }

        let all_pairs = derive_pairs(geometry, config.target_fs as f64, config.speed_of_sound)?;
        let total = all_pairs.len();
        let pairs = if config.min_pair_angle_deg > 0.0 {
            select_pairs_curvilinear(geometry, &all_pairs, config.min_pair_angle_deg)?
        } else {
            all_pairs
        };
        if pairs.is_empty() {
            return Err(PipelineError::BadConfig(format!(
                "no microphone pairs left after the {}° curvilinear filter ({} before)",
                config.min_pair_angle_deg, total
            )));
        }
        log::info!("using {} of {} microphone pairs", pairs.len(), total);

        let grid = Arc::new(DoaGrid::new(config.grid_res_deg, config.grid_res_deg)?);
        let axis = AoaAxis::with_step(config.aoa_res_deg)?;
        log::info!(
            "grid: {} points ({} az x {} el), AOA axis: {} knots",
            grid.len(),
            grid.n_az(),
            grid.n_el(),
            axis.len()
        );

        // DC and Nyquist carry no usable phase; clip further by the band.
        let n_bins = config.n_fft / 2 + 1;
        let hz_per_bin = config.target_fs as f64 / config.n_fft as f64;
        let (band_lo, band_hi) = config.band_hz.unwrap_or((0.0, f64::INFINITY));
        let mut bin_lo = 1usize;
        let mut bin_hi = n_bins - 2;
        while bin_lo <= bin_hi && (bin_lo as f64) * hz_per_bin < band_lo {
            bin_lo += 1;
        }
        while bin_hi >= bin_lo && (bin_hi as f64) * hz_per_bin > band_hi {
            bin_hi -= 1;
        }
        if bin_lo > bin_hi {
            return Err(PipelineError::BadConfig(format!(
                "band {band_lo}..{band_hi} Hz leaves no usable frequency bins"
            )));
        }

        let gather: Vec<GatherTable> = pairs
            .par_iter()
            .map(|p| GatherTable::build(&grid, p, &axis))
            .collect();
        let steering: Vec<Vec<Complex64>> = pairs
            .par_iter()
            .map(|p| {
                let full = steering_table(n_bins, config.n_fft, p.tau, axis.angles_deg());
                full[bin_lo * axis.len()..(bin_hi + 1) * axis.len()].to_vec()
            })
            .collect();

        Ok(Self {
            grid,
            pairs,
            gather,
            steering,
            n_angles: axis.len(),
            n_mics: geometry.len(),
            n_fft: config.n_fft,
            bin_lo,
            bin_hi,
            block_samples,
            hop_samples,
            target_fs: config.target_fs,
            pooling: config.pooling,
        })
    }

    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn n_mics(&self) -> usize {
        self.n_mics
    }

    pub fn block_samples(&self) -> usize {
        self.block_samples
    }

    pub fn hop_samples(&self) -> usize {
        self.hop_samples
    }

    pub fn target_fs(&self) -> u32 {
        self.target_fs
    }

    pub fn grid(&self) -> &Arc<DoaGrid> {
        &self.grid
    }

    /// Runs one analysis block end to end and returns the single best peak,
    /// stamped at the block center.
    pub fn process_block(&self, block: &SignalBlock) -> Result<Estimate, PipelineError> {
        let spec = stft(block, self.n_fft, self.n_fft / 2)?;
        let spectrum = self.angular_spectrum(&spec)?;
        let peaks = find_peaks(&spectrum, &PeakSpec::default())?;
        let peak = peaks[0];
        let time_s = block.start_time() + block.len() as f64 / (2.0 * block.fs());
        Ok(Estimate {
            time_s,
            azimuth_deg: peak.azimuth_deg,
            elevation_deg: peak.elevation_deg,
            score: peak.score,
        })
    }

    /// Pooled angular spectrum of one spectrogram, equal (up to floating-point
    /// summation order) to interpolating every pair to the grid and calling
    /// the reference pooling on the full tensor.
    pub fn angular_spectrum(&self, spec: &Spectrogram) -> Result<AngularSpectrum, PipelineError> {
        for pair in &self.pairs {
            if pair.i >= spec.n_channels() || pair.j >= spec.n_channels() {
                return Err(SignalError::ChannelOutOfRange {
                    channel: pair.i.max(pair.j),
                    n_channels: spec.n_channels(),
                }
                .into());
            }
        }
        // Sum reductions over freq/time may move onto the AOA axis as long as
        // only sum reductions precede them in the order.
        let mut hoist_freq = false;
        let mut hoist_time = false;
        for &axis in &self.pooling.order {
            match (axis, self.pooling.reducer_for(axis)) {
                (PoolAxis::Freq, Reducer::Sum) => hoist_freq = true,
                (PoolAxis::Time, Reducer::Sum) => hoist_time = true,
                (PoolAxis::Pairs, Reducer::Sum) => continue,
                (_, Reducer::Max) => break,
            }
        }
        let remaining: Vec<(PoolAxis, Reducer)> = self
            .pooling
            .order
            .iter()
            .filter(|&&a| match a {
                PoolAxis::Freq => !hoist_freq,
                PoolAxis::Time => !hoist_time,
                PoolAxis::Pairs => true,
            })
            .map(|&a| (a, self.pooling.reducer_for(a)))
            .collect();

        let n_frames = spec.n_frames();
        let kept_bins = self.bin_hi - self.bin_lo + 1;
        let per_pair: Vec<PairAxisData> = self
            .pairs
            .par_iter()
            .enumerate()
            .map(|(p, pair)| self.build_axis_data(spec, p, pair, hoist_freq, hoist_time))
            .collect();

        // Remaining reductions run on the grid, chunked over grid points.
        // Chunking never reorders the per-point reduction sequence, so the
        // result is bit-identical for any thread count.
        let grid_len = self.grid.len();
        let n_chunks = 64.min(grid_len).max(1);
        let ranges: Vec<(usize, usize)> = (0..n_chunks)
            .map(|c| {
                let lo = c * grid_len / n_chunks;
                let hi = (c + 1) * grid_len / n_chunks;
                (lo, hi)
            })
            .collect();
        let eff_t = if hoist_time { 1 } else { n_frames };
        let eff_f = if hoist_freq { 1 } else { kept_bins };
        let partials: Vec<Vec<f64>> = ranges
            .par_iter()
            .map(|&(lo, hi)| self.reduce_chunk(&per_pair, &remaining, eff_t, eff_f, lo, hi))
            .collect();
        let mut values = Vec::with_capacity(grid_len);
        for partial in partials {
            values.extend(partial);
        }
        Ok(AngularSpectrum::new(self.grid.clone(), values)?)
    }

    /// Axis-side pass for one pair: PHAT per kept bin, steering to the axis
    /// angles, with hoisted sums folded on the fly.
    fn build_axis_data(
        &self,
        spec: &Spectrogram,
        pair_index: usize,
        pair: &MicPair,
        hoist_freq: bool,
        hoist_time: bool,
    ) -> PairAxisData {
        let n_frames = spec.n_frames();
        let kept = self.bin_hi - self.bin_lo + 1;
        let n_angles = self.n_angles;
        let n_t = if hoist_time { 1usize } else { n_frames };
        let n_f = if hoist_freq { 1 } else { kept };
        let mut values = vec![0.0f64; n_t * n_f * n_angles];
        let steering = &self.steering[pair_index];

        for t in 0..n_frames {
            // A plane wave at AOA alpha reaches mic j first; mic i lags by
            // tau*cos(alpha) samples, hence X_j * conj(X_i).
            let xj = spec.frame(pair.j, t);
            let xi = spec.frame(pair.i, t);
            let t_eff = if hoist_time { 0 } else { t };
            for k in 0..kept {
                let bin = self.bin_lo + k;
                let cross = xj[bin] * xi[bin].conj();
                let mag = cross.norm();
                if mag < CROSS_POWER_FLOOR {
                    continue; // contributes 0 everywhere
                }
                let phat = cross / mag;
                let f_eff = if hoist_freq { 0 } else { k };
                let dst_base = (t_eff * n_f + f_eff) * n_angles;
                let dst = &mut values[dst_base..dst_base + n_angles];
                let row = &steering[k * n_angles..(k + 1) * n_angles];
                for (d, s) in dst.iter_mut().zip(row.iter()) {
                    *d += phat.re * s.re - phat.im * s.im;
                }
            }
        }
        PairAxisData { n_f, n_angles, values }
    }

    /// Interpolates one axis row onto `[lo, hi)` grid points, combining into
    /// `acc` with the reducer (`first` overwrites).
    #[allow(clippy::too_many_arguments)]
    fn lerp_combine(
        &self,
        pair_index: usize,
        row: &[f64],
        lo: usize,
        hi: usize,
        acc: &mut [f64],
        reducer: Reducer,
        first: bool,
    ) {
        let gather = &self.gather[pair_index];
        let knots = &gather.lo[lo..hi];
        let weights = &gather.w[lo..hi];
        if first {
            for ((a, &k), &w) in acc.iter_mut().zip(knots).zip(weights) {
                let k = k as usize;
                *a = (1.0 - w) * row[k] + w * row[k + 1];
            }
        } else {
            match reducer {
                Reducer::Sum => {
                    for ((a, &k), &w) in acc.iter_mut().zip(knots).zip(weights) {
                        let k = k as usize;
                        *a += (1.0 - w) * row[k] + w * row[k + 1];
                    }
                }
                Reducer::Max => {
                    for ((a, &k), &w) in acc.iter_mut().zip(knots).zip(weights) {
                        let k = k as usize;
                        *a = a.max((1.0 - w) * row[k] + w * row[k + 1]);
                    }
                }
            }
        }
    }

    /// Runs the remaining (grid-side) reductions for one grid chunk.
    fn reduce_chunk(
        &self,
        per_pair: &[PairAxisData],
        remaining: &[(PoolAxis, Reducer)],
        eff_t: usize,
        eff_f: usize,
        lo: usize,
        hi: usize,
    ) -> Vec<f64> {
        let len = hi - lo;
        let axis_len = |axis: PoolAxis| match axis {
            PoolAxis::Pairs => per_pair.len(),
            PoolAxis::Time => eff_t,
            PoolAxis::Freq => eff_f,
        };
        // Reduce the innermost (first) axis directly into a slice buffer.
        let reduce_first = |fixed: &dyn Fn(PoolAxis) -> usize, out: &mut [f64]| {
            let (axis0, red0) = remaining[0];
            for i in 0..axis_len(axis0) {
                let coord = |a: PoolAxis| if a == axis0 { i } else { fixed(a) };
                let p = coord(PoolAxis::Pairs);
                let row = per_pair[p].row(coord(PoolAxis::Time), coord(PoolAxis::Freq));
                self.lerp_combine(p, row, lo, hi, out, red0, i == 0);
            }
        };

        match remaining.len() {
            1 => {
                let mut out = vec![0.0; len];
                reduce_first(&|_| 0, &mut out);
                out
            }
            2 => {
                let (axis1, red1) = remaining[1];
                let mut out = vec![0.0; len];
                let mut slice = vec![0.0; len];
                for i1 in 0..axis_len(axis1) {
                    reduce_first(&|a| if a == axis1 { i1 } else { 0 }, &mut slice);
                    fold(&mut out, &slice, red1, i1 == 0);
                }
                out
            }
            _ => {
                let (axis1, red1) = remaining[1];
                let (axis2, red2) = remaining[2];
                let mut out = vec![0.0; len];
                let mut mid = vec![0.0; len];
                let mut slice = vec![0.0; len];
                for i2 in 0..axis_len(axis2) {
                    for i1 in 0..axis_len(axis1) {
                        reduce_first(
                            &|a| {
                                if a == axis1 {
                                    i1
                                } else if a == axis2 {
                                    i2
                                } else {
                                    0
                                }
                            },
                            &mut slice,
                        );
                        fold(&mut mid, &slice, red1, i1 == 0);
                    }
                    fold(&mut out, &mid, red2, i2 == 0);
                }
                out
            }
        }
    }
}

fn fold(acc: &mut [f64], slice: &[f64], reducer: Reducer, first: bool) {
    if first {
        acc.copy_from_slice(slice);
        return;
    }
    match reducer {
        Reducer::Sum => {
            for (a, &s) in acc.iter_mut().zip(slice) {
                *a += s;
            }
        }
        Reducer::Max => {
            for (a, &s) in acc.iter_mut().zip(slice) {
                *a = a.max(s);
            }
        }
    }
}

/// Summary returned by [`locate`] alongside the written CSV.
#[derive(Debug, Clone)]
pub struct LocateSummary {
    pub n_mics: usize,
    pub n_pairs: usize,
    pub n_blocks: usize,
    pub n_estimates: usize,
    pub low_score_blocks: usize,
}

/// Full batch pipeline: ingest, localize every sliding block, write the
/// estimate CSV (schema `time_s,azimuth_deg,elevation_deg,score`).
pub fn locate(config: &RunConfig) -> Result<LocateSummary, PipelineError> {
    let named = read_geometry(&config.geometry_path)?;
    let audio = read_wav(&config.input_path)?;
    if audio.n_channels() != named.geometry.len() {
        return Err(PipelineError::ChannelMismatch {
            path: config.input_path.display().to_string(),
            channels: audio.n_channels(),
            geometry: named.name.clone(),
            mics: named.geometry.len(),
        });
    }
    // Parse the timestamp grid up front so a malformed file fails fast.
    let query_times = match &config.timestamps_path {
        None => None,
        Some(path) => Some(read_timestamps(path)?),
    };
    let channels = decimate(&audio.channels, audio.fs, config.target_fs)?;
    let locator = Locator::new(&named.geometry, config)?;

    let estimates = locate_channels(&locator, &channels)?;
    let low_score_blocks = estimates.iter().filter(|e| e.score <= LOW_SCORE_FLOOR).count();
    if low_score_blocks > 0 {
        log::warn!(
            "{low_score_blocks} of {} blocks scored at or below {LOW_SCORE_FLOOR} (silent or incoherent input)",
            estimates.len()
        );
    }
    let n_blocks = estimates.len();

    let output: Vec<Estimate> = match query_times {
        None => estimates.clone(),
        Some(times) => resample_estimates(&estimates, &times)?,
    };
    write_estimates_csv(&config.output_path, &output)?;
    Ok(LocateSummary {
        n_mics: locator.n_mics(),
        n_pairs: locator.n_pairs(),
        n_blocks,
        n_estimates: output.len(),
        low_score_blocks,
    })
}

/// Slides the locator over channels already at its target rate.
pub fn locate_channels(
    locator: &Locator,
    channels: &[Vec<f64>],
) -> Result<Vec<Estimate>, PipelineError> {
    let len = channels.first().map_or(0, Vec::len);
    let block = locator.block_samples();
    let hop = locator.hop_samples();
    let fs = locator.target_fs() as f64;
    let mut estimates = Vec::new();
    if len < block {
        log::warn!("input shorter than one {block}-sample block; no estimates emitted");
        return Ok(estimates);
    }
    let n_blocks = (len - block) / hop + 1;
    for k in 0..n_blocks {
        let start = k * hop;
        let slice: Vec<Vec<f64>> =
            channels.iter().map(|ch| ch[start..start + block].to_vec()).collect();
        let signal = SignalBlock::new(slice, fs, start as f64 / fs)?;
        estimates.push(locator.process_block(&signal)?);
    }
    Ok(estimates)
}

/// Interpolates block estimates onto caller-provided timestamps. Directions
/// interpolate on unit vectors; scores interpolate linearly, clamped at the
/// ends.
pub fn resample_estimates(
    estimates: &[Estimate],
    times: &[f64],
) -> Result<Vec<Estimate>, PipelineError> {
    let records: Vec<TrajectoryRecord> = estimates
        .iter()
        .map(|e| TrajectoryRecord { time_s: e.time_s, azimuth_deg: e.azimuth_deg, elevation_deg: e.elevation_deg })
        .collect();
    let resampled = interpolate_trajectory(&records, times)?;
    let score_at = |t: f64| -> f64 {
        match estimates.iter().position(|e| e.time_s >= t) {
            Some(0) => estimates[0].score,
            None => estimates.last().unwrap().score,
            Some(hi) => {
                let (a, b) = (&estimates[hi - 1], &estimates[hi]);
                let w = (t - a.time_s) / (b.time_s - a.time_s);
                (1.0 - w) * a.score + w * b.score
            }
        }
    };
    Ok(resampled
        .iter()
        .map(|r| Estimate {
            time_s: r.time_s,
            azimuth_deg: r.azimuth_deg,
            elevation_deg: r.elevation_deg,
            score: score_at(r.time_s),
        })
        .collect())
}

fn read_timestamps(path: &Path) -> Result<Vec<f64>, PipelineError> {
    let display = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|e| PipelineError::Timestamps {
        path: display.clone(),
        line: 0,
        message: e.to_string(),
    })?;
    let mut times = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        let field = line.split(',').next().unwrap_or("").trim();
        if field.is_empty() || (i == 0 && field.parse::<f64>().is_err()) {
            continue; // header or blank
        }
        let t = field.parse::<f64>().map_err(|e| PipelineError::Timestamps {
            path: display.clone(),
            line: i + 1,
            message: e.to_string(),
        })?;
        times.push(t);
    }
    if times.is_empty() {
        return Err(PipelineError::Timestamps {
            path: display,
            line: 0,
            message: "no timestamps found".into(),
        });
    }
    Ok(times)
}

/// Writes estimates as `time_s,azimuth_deg,elevation_deg,score`.
pub fn write_estimates_csv(path: &Path, estimates: &[Estimate]) -> Result<(), PipelineError> {
    let file = std::fs::File::create(path)?;
    let mut writer = BufWriter::new(file);
    writeln!(writer, "time_s,azimuth_deg,elevation_deg,score")?;
    for e in estimates {
        writeln!(
            writer,
            "{:.6},{:.6},{:.6},{:.6}",
            e.time_s, e.azimuth_deg, e.elevation_deg, e.score
        )?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads estimates back, requiring the score column.
pub fn read_estimates_csv(path: &Path) -> Result<Vec<Estimate>, PipelineError> {
    let file = std::fs::File::open(path)?;
    let mut estimates = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || i == 0 {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(PipelineError::Timestamps {
                path: path.display().to_string(),
                line: i + 1,
                message: format!("expected 4 fields, got {}", fields.len()),
            });
        }
        let parse = |s: &str| s.trim().parse::<f64>();
        estimates.push(Estimate {
            time_s: parse(fields[0]).map_err(|e| PipelineError::Timestamps {
                path: path.display().to_string(),
                line: i + 1,
                message: e.to_string(),
            })?,
            azimuth_deg: parse(fields[1]).unwrap_or(f64::NAN),
            elevation_deg: parse(fields[2]).unwrap_or(f64::NAN),
            score: parse(fields[3]).unwrap_or(f64::NAN),
        });
    }
    Ok(estimates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gcc::{interpolate_to_grid, local_spectrum};
    use crate::sim::{render, SceneSpec};
    use crate::srp::pool;

    fn small_geometry() -> ArrayGeometry {
        ArrayGeometry::new(vec![
            Vec3::new(0.04, 0.0, 0.0),
            Vec3::new(-0.04, 0.0, 0.02),
            Vec3::new(0.0, 0.05, -0.02),
            Vec3::new(0.0, -0.03, 0.03),
        ])
        .unwrap()
    }

    fn small_config() -> RunConfig {
        let mut config = RunConfig::new("", "", "");
        config.block_ms = 64;
        config.hop_ms = 32;
        config.n_fft = 256;
        config.grid_res_deg = 10.0;
        config.aoa_res_deg = 5.0;
        config
    }

    fn noise_channels(n_ch: usize, len: usize, seed: u64) -> Vec<Vec<f64>> {
        (0..n_ch)
            .map(|c| {
                let mut state = seed.wrapping_add(c as u64).wrapping_mul(0x9e3779b97f4a7c15) | 1;
                (0..len)
                    .map(|_| {
                        state = state
                            .wrapping_mul(6364136223846793005)
                            .wrapping_add(1442695040888963407);
                        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
                    })
                    .collect()
            })
            .collect()
    }

    /// The streaming engine must match the reference compose-then-pool path
    /// for every reducer/order combination, including single-pair and
    /// single-frame edges.
    #[test]
    fn engine_matches_reference_pooling_for_all_specs() {
        let two_mics = ArrayGeometry::new(vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(0.06, 0.01, -0.02),
        ])
        .unwrap();
        for (geometry, n_ch, len) in [
            (small_geometry(), 4usize, 1024usize), // several frames, 6 pairs
            (two_mics, 2, 256),                    // single pair, single frame
        ] {
            engine_reference_check(&geometry, noise_channels(n_ch, len, 99));
        }
    }

    fn engine_reference_check(geometry: &ArrayGeometry, channels: Vec<Vec<f64>>) {
        let block = SignalBlock::new(channels, 16000.0, 0.0).unwrap();
        let spec = stft(&block, 256, 128).unwrap();

        let reducers = [Reducer::Sum, Reducer::Max];
        let orders = [
            [PoolAxis::Pairs, PoolAxis::Freq, PoolAxis::Time],
            [PoolAxis::Pairs, PoolAxis::Time, PoolAxis::Freq],
            [PoolAxis::Freq, PoolAxis::Pairs, PoolAxis::Time],
            [PoolAxis::Freq, PoolAxis::Time, PoolAxis::Pairs],
            [PoolAxis::Time, PoolAxis::Pairs, PoolAxis::Freq],
            [PoolAxis::Time, PoolAxis::Freq, PoolAxis::Pairs],
        ];
        for &over_pairs in &reducers {
            for &over_freq in &reducers {
                for &over_time in &reducers {
                    for &order in &orders {
                        let mut config = small_config();
                        config.pooling =
                            PoolingSpec::new(over_pairs, over_freq, over_time, order).unwrap();
                        let locator = Locator::new(geometry, &config).unwrap();
                        let fast = locator.angular_spectrum(&spec).unwrap();

                        // Reference: interpolate everything, keep only the
                        // locator's bin range, pool on the materialized tensor.
                        let axis = AoaAxis::with_step(config.aoa_res_deg).unwrap();
                        let grids: Vec<_> = locator
                            .pairs
                            .iter()
                            .map(|pair| {
                                let local = local_spectrum(&spec, pair, &axis).unwrap();
                                let table = compute_aoa_table(&locator.grid, pair);
                                let full = interpolate_to_grid(&local, &table, &axis);
                                let g = locator.grid.len();
                                let mut kept = Vec::new();
                                for t in 0..full.n_frames() {
                                    for f in locator.bin_lo..=locator.bin_hi {
                                        let base = (t * full.n_bins() + f) * g;
                                        kept.extend_from_slice(&full.values()[base..base + g]);
                                    }
                                }
                                crate::gcc::GridSpectrum::new(
                                    full.n_frames(),
                                    locator.bin_hi - locator.bin_lo + 1,
                                    g,
                                    kept,
                                )
                            })
                            .collect();
                        let reference =
                            pool(&grids, &config.pooling, locator.grid.clone()).unwrap();
                        for (g, (a, b)) in
                            fast.values().iter().zip(reference.values()).enumerate()
                        {
                            assert!(
                                (a - b).abs() <= 1e-9 * (1.0 + b.abs()),
                                "spec {:?} grid point {g}: {a} vs {b}",
                                config.pooling
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn locator_finds_simulated_static_source() {
        let geometry = small_geometry();
        let scene = SceneSpec::static_scene(geometry.clone(), 40.0, 10.0, 16000, 1.0, 17);
        let rendered = render(&scene).unwrap();
        let mut config = small_config();
        config.block_ms = 512;
        config.hop_ms = 256;
        config.n_fft = 1024;
        config.grid_res_deg = 2.0;
        let locator = Locator::new(&geometry, &config).unwrap();
        let estimates = locate_channels(&locator, &rendered.channels).unwrap();
        assert_eq!(estimates.len(), 2); // (16000 - 8192) / 4096 + 1
        for e in &estimates {
            let az_err = (e.azimuth_deg - 40.0).abs().min(360.0 - (e.azimuth_deg - 40.0).abs());
            assert!(az_err <= 4.0, "azimuth {e:?}");
            assert!((e.elevation_deg - 10.0).abs() <= 4.0, "elevation {e:?}");
            assert!(e.score > LOW_SCORE_FLOOR);
        }
    }

    #[test]
    fn silent_input_emits_low_score_estimates() {
        let geometry = small_geometry();
        let config = small_config();
        let locator = Locator::new(&geometry, &config).unwrap();
        let channels = vec![vec![0.0; 4096]; 4];
        let estimates = locate_channels(&locator, &channels).unwrap();
        assert!(!estimates.is_empty());
        for e in estimates {
            assert!(e.score <= LOW_SCORE_FLOOR);
        }
    }

    #[test]
    fn block_schedule_counts() {
        let geometry = small_geometry();
        let mut config = small_config();
        config.block_ms = 512;
        config.hop_ms = 256;
        config.n_fft = 1024;
        config.grid_res_deg = 30.0;
        let locator = Locator::new(&geometry, &config).unwrap();
        // 5 s at 16 kHz: floor((80000 - 8192) / 4096) + 1 = 18
        let channels = noise_channels(4, 80000, 5);
        let estimates = locate_channels(&locator, &channels).unwrap();
        assert_eq!(estimates.len(), 18);
        for (k, e) in estimates.iter().enumerate() {
            let expected = (k * 4096 + 4096) as f64 / 16000.0;
            assert!((e.time_s - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn config_validation() {
        let geometry = small_geometry();
        let mut config = small_config();
        config.hop_ms = 100;
        config.block_ms = 64;
        assert!(matches!(
            Locator::new(&geometry, &config),
            Err(PipelineError::BadConfig(_))
        ));
        let mut config = small_config();
        config.n_fft = 4096;
        assert!(matches!(
            Locator::new(&geometry, &config),
            Err(PipelineError::BadConfig(_))
        ));
        let mut config = small_config();
        config.band_hz = Some((8000.0, 9000.0)); // beyond Nyquist
        assert!(matches!(
            Locator::new(&geometry, &config),
            Err(PipelineError::BadConfig(_))
        ));
    }

    #[test]
    fn band_limit_restricts_bins() {
        let geometry = small_geometry();
        let mut config = small_config();
        config.band_hz = Some((500.0, 3000.0));
        let locator = Locator::new(&geometry, &config).unwrap();
        let hz = 16000.0 / 256.0;
        assert!(locator.bin_lo as f64 * hz >= 500.0);
        assert!(locator.bin_hi as f64 * hz <= 3000.0);
    }

    #[test]
    fn geometry_file_round_trip_and_errors() {
        let dir = std::env::temp_dir();
        let path = dir.join(format!("srploc_geom_{}.toml", std::process::id()));
        std::fs::write(
            &path,
            r#"
name = "tiny"
center = [0.0, 0.0, 0.0]
[[mics]]
label = "a"
pos = [0.1, 0.0, 0.0]
[[mics]]
pos = [-0.1, 0.0, 0.0]
"#,
        )
        .unwrap();
        let named = read_geometry(&path).unwrap();
        assert_eq!(named.name, "tiny");
        assert_eq!(named.labels, vec!["a", "mic01"]);
        assert_eq!(named.geometry.len(), 2);
        std::fs::remove_file(&path).ok();

        std::fs::write(&path, "name = \"broken\"\nmics = 3\n").unwrap();
        assert!(matches!(read_geometry(&path), Err(PipelineError::GeometryFile { .. })));
        std::fs::write(
            &path,
            "name = \"one\"\n[[mics]]\npos = [0.0, 0.0, 0.0]\n",
        )
        .unwrap();
        assert!(matches!(read_geometry(&path), Err(PipelineError::GeometryFile { .. })));
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn coarser_grid_is_not_slower_and_stays_within_one_cell() {
        let geometry = small_geometry();
        let scene = SceneSpec::static_scene(geometry.clone(), 132.0, -24.0, 16000, 1.5, 31);
        let rendered = render(&scene).unwrap();

        let mut fine_config = small_config();
        fine_config.block_ms = 512;
        fine_config.hop_ms = 256;
        fine_config.n_fft = 1024;
        fine_config.grid_res_deg = 3.0;
        let mut coarse_config = fine_config.clone();
        coarse_config.grid_res_deg = 6.0;

        let fine = Locator::new(&geometry, &fine_config).unwrap();
        let start = std::time::Instant::now();
        let fine_estimates = locate_channels(&fine, &rendered.channels).unwrap();
        let fine_time = start.elapsed();

        let coarse = Locator::new(&geometry, &coarse_config).unwrap();
        let start = std::time::Instant::now();
        let coarse_estimates = locate_channels(&coarse, &rendered.channels).unwrap();
        let coarse_time = start.elapsed();

        // 4x fewer grid points; allow generous slack for timer noise.
        assert!(
            coarse_time <= fine_time.mul_f64(1.5),
            "coarse {coarse_time:?} vs fine {fine_time:?}"
        );
        for (c, f) in coarse_estimates.iter().zip(&fine_estimates) {
            let daz = (c.azimuth_deg - f.azimuth_deg).abs();
            let daz = daz.min(360.0 - daz);
            assert!(daz <= coarse_config.grid_res_deg, "az {c:?} vs {f:?}");
            assert!(
                (c.elevation_deg - f.elevation_deg).abs() <= coarse_config.grid_res_deg,
                "el {c:?} vs {f:?}"
            );
        }
    }

    #[test]
    fn resample_estimates_clamps_and_interpolates() {
        let estimates = vec![
            Estimate { time_s: 1.0, azimuth_deg: 10.0, elevation_deg: 0.0, score: 1.0 },
            Estimate { time_s: 2.0, azimuth_deg: 30.0, elevation_deg: 0.0, score: 3.0 },
        ];
        let out = resample_estimates(&estimates, &[0.5, 1.5, 9.0]).unwrap();
        assert_eq!(out[0].azimuth_deg, 10.0);
        assert_eq!(out[0].score, 1.0);
        assert!((out[1].azimuth_deg - 20.0).abs() < 0.1);
        assert!((out[1].score - 2.0).abs() < 1e-12);
        assert_eq!(out[2].azimuth_deg, 30.0);
        assert_eq!(out[2].score, 3.0);
    }
}
