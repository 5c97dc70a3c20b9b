//! Pooling of per-pair grid spectra into the global angular spectrum, and
//! peak extraction with great-circle non-maximum suppression.

use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

use crate::gcc::GridSpectrum;
use crate::geometry::DoaGrid;

#[derive(Debug, Error)]
pub enum SrpError {
    #[error("pooling requires at least one pair spectrum")]
    EmptyInput,
    #[error("pair {pair} has shape {got:?}, expected {expected:?} (frames, bins, grid)")]
    DimensionMismatch {
        pair: usize,
        expected: (usize, usize, usize),
        got: (usize, usize, usize),
    },
    #[error("pooling order must name each of pairs, freq, time exactly once")]
    BadOrder,
    #[error("cannot parse pooling spec '{0}'; expected e.g. 'sum,sum,max' or 'freq:sum,pairs:sum,time:max'")]
    BadPoolingSpec(String),
    #[error("angular spectrum is empty")]
    EmptySpectrum,
    #[error("angular spectrum contains a non-finite value at grid index {0}")]
    NonFiniteValue(usize),
    #[error("peak spec: max_peaks must be >= 1 and min_separation >= 0")]
    BadPeakSpec,
}

/// Reduction applied along one pooling axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reducer {
    Sum,
    Max,
}

/// The three reducible axes of the per-pair grid spectra.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolAxis {
    Pairs,
    Freq,
    Time,
}

/// Which reducer runs on which axis, and in what order.
///
/// The default is the sum-sum-max arrangement: sum across pairs, sum across
/// frequency bins, then maximum across time frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolingSpec {
    pub over_pairs: Reducer,
    pub over_freq: Reducer,
    pub over_time: Reducer,
    pub order: [PoolAxis; 3],
}

impl Default for PoolingSpec {
    fn default() -> Self {
        Self {
            over_pairs: Reducer::Sum,
            over_freq: Reducer::Sum,
            over_time: Reducer::Max,
            order: [PoolAxis::Pairs, PoolAxis::Freq, PoolAxis::Time],
        }
    }
}

impl PoolingSpec {
    pub fn new(
        over_pairs: Reducer,
        over_freq: Reducer,
        over_time: Reducer,
        order: [PoolAxis; 3],
    ) -> Result<Self, SrpError> {
        let spec = Self { over_pairs, over_freq, over_time, order };
        if !spec.order_is_permutation() {
            return Err(SrpError::BadOrder);
        }
        Ok(spec)
    }

    fn order_is_permutation(&self) -> bool {
        let mut seen = [false; 3];
        for axis in self.order {
            let k = match axis {
                PoolAxis::Pairs => 0,
                PoolAxis::Freq => 1,
                PoolAxis::Time => 2,
            };
            if seen[k] {
                return false;
            }
            seen[k] = true;
        }
        true
    }

    pub fn reducer_for(&self, axis: PoolAxis) -> Reducer {
        match axis {
            PoolAxis::Pairs => self.over_pairs,
            PoolAxis::Freq => self.over_freq,
            PoolAxis::Time => self.over_time,
        }
    }
}

impl FromStr for PoolingSpec {
    type Err = SrpError;

    /// Two forms are accepted. Bare reducers `sum,sum,max` assign to the
    /// pairs, freq, time axes in that fixed order (which is also the
    /// reduction order). Labeled entries `time:max,pairs:sum,freq:sum` make
    /// the written sequence the reduction order.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(SrpError::BadPoolingSpec(s.to_string()));
        }
        let parse_reducer = |r: &str| match r {
            "sum" => Ok(Reducer::Sum),
            "max" => Ok(Reducer::Max),
            _ => Err(SrpError::BadPoolingSpec(s.to_string())),
        };
        let labeled = parts.iter().any(|p| p.contains(':'));
        if !labeled {
            return PoolingSpec::new(
                parse_reducer(parts[0])?,
                parse_reducer(parts[1])?,
                parse_reducer(parts[2])?,
                [PoolAxis::Pairs, PoolAxis::Freq, PoolAxis::Time],
            );
        }
        let mut spec = PoolingSpec::default();
        let mut order = Vec::with_capacity(3);
        for part in parts {
            let (axis, reducer) = part
                .split_once(':')
                .ok_or_else(|| SrpError::BadPoolingSpec(s.to_string()))?;
            let reducer = parse_reducer(reducer.trim())?;
            let axis = match axis.trim() {
                "pairs" => PoolAxis::Pairs,
                "freq" => PoolAxis::Freq,
                "time" => PoolAxis::Time,
                _ => return Err(SrpError::BadPoolingSpec(s.to_string())),
            };
            match axis {
                PoolAxis::Pairs => spec.over_pairs = reducer,
                PoolAxis::Freq => spec.over_freq = reducer,
                PoolAxis::Time => spec.over_time = reducer,
            }
            order.push(axis);
        }
        PoolingSpec::new(
            spec.over_pairs,
            spec.over_freq,
            spec.over_time,
            [order[0], order[1], order[2]],
        )
    }
}

/// Real-valued score over an entire DOA grid.
#[derive(Debug, Clone)]
pub struct AngularSpectrum {
    grid: Arc<DoaGrid>,
    values: Vec<f64>,
}

impl AngularSpectrum {
    pub fn new(grid: Arc<DoaGrid>, values: Vec<f64>) -> Result<Self, SrpError> {
        if values.len() != grid.len() {
            return Err(SrpError::DimensionMismatch {
                pair: 0,
                expected: (0, 0, grid.len()),
                got: (0, 0, values.len()),
            });
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(SrpError::NonFiniteValue(bad));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &Arc<DoaGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Pools per-pair grid spectra over pairs, frequency and time in the order
/// given by `spec`, leaving one score per grid point.
pub fn pool(
    per_pair: &[GridSpectrum],
    spec: &PoolingSpec,
    grid: Arc<DoaGrid>,
) -> Result<AngularSpectrum, SrpError> {
    if !spec.order_is_permutation() {
        return Err(SrpError::BadOrder);
    }
    let first = per_pair.first().ok_or(SrpError::EmptyInput)?;
    let expected = (first.n_frames(), first.n_bins(), first.grid_len());
    for (pair, g) in per_pair.iter().enumerate() {
        let got = (g.n_frames(), g.n_bins(), g.grid_len());
        if got != expected {
            return Err(SrpError::DimensionMismatch { pair, expected, got });
        }
    }
    if expected.2 != grid.len() {
        return Err(SrpError::DimensionMismatch {
            pair: 0,
            expected: (expected.0, expected.1, grid.len()),
            got: expected,
        });
    }

    // Materialize [pair][time][bin][grid] once, then fold one axis at a time.
    let (n_t, n_f, n_g) = expected;
    let mut dims = [per_pair.len(), n_t, n_f];
    let mut data: Vec<f64> = Vec::with_capacity(dims[0] * n_t * n_f * n_g);
    for g in per_pair {
        data.extend_from_slice(g.values());
    }

    for &axis in &spec.order {
        let k = match axis {
            PoolAxis::Pairs => 0,
            PoolAxis::Freq => 2,
            PoolAxis::Time => 1,
        };
        data = reduce_axis(&data, dims, n_g, k, spec.reducer_for(axis));
        dims[k] = 1;
    }
    AngularSpectrum::new(grid, data)
}

/// Folds one of the three leading axes of a `[d0][d1][d2][grid]` array,
/// producing the same layout with that axis collapsed to size 1.
fn reduce_axis(data: &[f64], dims: [usize; 3], n_g: usize, axis: usize, reducer: Reducer) -> Vec<f64> {
    let mut out_dims = dims;
    out_dims[axis] = 1;
    let mut out = vec![0.0f64; out_dims[0] * out_dims[1] * out_dims[2] * n_g];
    let mut started = vec![false; out.len()];
    for i0 in 0..dims[0] {
        for i1 in 0..dims[1] {
            for i2 in 0..dims[2] {
                let src = ((i0 * dims[1] + i1) * dims[2] + i2) * n_g;
                let (o0, o1, o2) = match axis {
                    0 => (0, i1, i2),
                    1 => (i0, 0, i2),
                    _ => (i0, i1, 0),
                };
                let dst = ((o0 * out_dims[1] + o1) * out_dims[2] + o2) * n_g;
                for g in 0..n_g {
                    let v = data[src + g];
                    let slot = &mut out[dst + g];
                    if !started[dst + g] {
                        *slot = v;
                        started[dst + g] = true;
                    } else {
                        match reducer {
                            Reducer::Sum => *slot += v,
                            Reducer::Max => *slot = slot.max(v),
                        }
                    }
                }
            }
        }
    }
    out
}

/// Peak selection parameters. `min_separation_deg` is a great-circle angle;
/// per-axis angular differences degenerate near the poles.
#[derive(Debug, Clone, Copy)]
pub struct PeakSpec {
    pub max_peaks: usize,
    pub threshold: Option<f64>,
    pub min_separation_deg: f64,
}

impl Default for PeakSpec {
    /// Single-source defaults: one peak, no threshold.
    fn default() -> Self {
        Self { max_peaks: 1, threshold: None, min_separation_deg: 0.0 }
    }
}

/// One located direction with its pooled score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    pub score: f64,
    pub grid_index: usize,
}

/// Greedy peak extraction: repeatedly take the global argmax, then suppress
/// every grid point within `min_separation_deg` great-circle degrees of it
/// (inclusive, so duplicate pole directions collapse even at 0°). Stops when
/// `max_peaks` peaks are found or the best remaining value drops below
/// `threshold`.
///
/// The first peak is always the global argmax. Later rounds skip values at
/// the spectrum's global minimum: a flat background is floor, not peaks.
///
/// Ties at equal value resolve to the lowest linear grid index
/// (elevation-major, then azimuth). At the poles every azimuth shares one
/// physical direction, so the reported pole azimuth is simply the lowest
/// azimuth still unsuppressed.
pub fn find_peaks(spectrum: &AngularSpectrum, spec: &PeakSpec) -> Result<Vec<Peak>, SrpError> {
    if spec.max_peaks < 1 || spec.min_separation_deg < 0.0 {
        return Err(SrpError::BadPeakSpec);
    }
    let values = spectrum.values();
    if values.is_empty() {
        return Err(SrpError::EmptySpectrum);
    }
    let grid = spectrum.grid();
    let dirs = grid.dirs();
    let cos_sep = spec.min_separation_deg.to_radians().cos();
    let floor = values.iter().copied().fold(f64::INFINITY, f64::min);

    let mut suppressed = vec![false; values.len()];
    let mut peaks = Vec::with_capacity(spec.max_peaks);
    while peaks.len() < spec.max_peaks {
        let mut best: Option<usize> = None;
        for (i, &v) in values.iter().enumerate() {
            if suppressed[i] {
                continue;
            }
            match best {
                Some(b) if values[b] >= v => {}
                _ => best = Some(i),
            }
        }
        let Some(idx) = best else { break };
        if let Some(threshold) = spec.threshold {
            if values[idx] < threshold {
                break;
            }
        }
        if !peaks.is_empty() && values[idx] <= floor {
            break;
        }
        let (azimuth_deg, elevation_deg) = grid.angles_at(idx);
        peaks.push(Peak { azimuth_deg, elevation_deg, score: values[idx], grid_index: idx });
        let peak_dir = dirs[idx];
        for (i, s) in suppressed.iter_mut().enumerate() {
            // dot >= cos(sep) is "distance <= sep"; always covers idx itself.
            if !*s && peak_dir.dot(dirs[i]) >= cos_sep {
                *s = true;
            }
        }
        suppressed[idx] = true;
    }
    Ok(peaks)
}
