//! Localization error metrics, success-rate tables and trajectory CSV I/O.

use std::io::{BufRead, Write};

use serde::Serialize;
use thiserror::Error;

use crate::geometry::{angles_from_direction, direction, Vec3};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("elevation {0}° outside [-90°, +90°]")]
    BadElevation(f64),
    #[error("record field is not finite")]
    NonFiniteField,
    #[error("no records to interpolate")]
    EmptyRecords,
    #[error("reference trajectory is empty")]
    EmptyReference,
    #[error("records not sorted by time at index {0}")]
    UnsortedRecords(usize),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One timestamped DOA. Azimuth is stored normalized to [0°, 360°).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRecord {
    pub time_s: f64,
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
}

impl TrajectoryRecord {
    pub fn new(time_s: f64, azimuth_deg: f64, elevation_deg: f64) -> Result<Self, EvalError> {
        if !(time_s.is_finite() && azimuth_deg.is_finite() && elevation_deg.is_finite()) {
            return Err(EvalError::NonFiniteField);
        }
        if !(-90.0..=90.0).contains(&elevation_deg) {
            return Err(EvalError::BadElevation(elevation_deg));
        }
        let azimuth_deg = azimuth_deg.rem_euclid(360.0);
        // rem_euclid(360) of e.g. -1e-15 yields 360.0 exactly.
        let azimuth_deg = if azimuth_deg >= 360.0 { 0.0 } else { azimuth_deg };
        Ok(Self { time_s, azimuth_deg, elevation_deg })
    }

    pub fn dir(&self) -> Vec3 {
        direction(self.azimuth_deg, self.elevation_deg)
    }
}

/// Azimuth error (wrapped to the short way around) and elevation error in
/// degrees between a matched estimate/reference record pair.
pub fn angular_errors(est: &TrajectoryRecord, reference: &TrajectoryRecord) -> (f64, f64) {
    let d = (est.azimuth_deg - reference.azimuth_deg).abs();
    let az_err = d.min(360.0 - d);
    let el_err = (est.elevation_deg - reference.elevation_deg).abs();
    (az_err, el_err)
}

/// Resamples a trajectory at the query times.
///
/// Interpolation runs on unit direction vectors (component-wise linear, then
/// renormalized) rather than raw angles, so the 0°/360° seam and the poles
/// behave. Query times outside the record span clamp to the nearest endpoint.
pub fn interpolate_trajectory(
    records: &[TrajectoryRecord],
    query_times: &[f64],
) -> Result<Vec<TrajectoryRecord>, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyRecords);
    }
    for (i, pair) in records.windows(2).enumerate() {
        if pair[1].time_s < pair[0].time_s {
            return Err(EvalError::UnsortedRecords(i + 1));
        }
    }
    let keep = |t: f64, r: &TrajectoryRecord| TrajectoryRecord {
        time_s: t,
        azimuth_deg: r.azimuth_deg,
        elevation_deg: r.elevation_deg,
    };
    let out = query_times
        .iter()
        .map(|&t| {
            // Clamps and exact hits pass the stored angles through untouched;
            // only genuinely interior times go through the vector blend.
            if t <= records[0].time_s || records.len() == 1 {
                return keep(t, &records[0]);
            }
            let last = records.last().unwrap();
            if t >= last.time_s {
                return keep(t, last);
            }
            let hi = records.partition_point(|r| r.time_s < t);
            if records[hi].time_s == t {
                return keep(t, &records[hi]);
            }
            let dir = sample_direction(records, t);
            let (az, el) = angles_from_direction(dir);
            TrajectoryRecord { time_s: t, azimuth_deg: az, elevation_deg: el }
        })
        .collect();
    Ok(out)
}

/// Direction at time `t` of a sorted record list, clamped at the ends.
pub(crate) fn sample_direction(records: &[TrajectoryRecord], t: f64) -> Vec3 {
    let first = &records[0];
    let last = records.last().unwrap();
    if t <= first.time_s || records.len() == 1 {
        return first.dir();
    }
    if t >= last.time_s {
        return last.dir();
    }
    let hi = records.partition_point(|r| r.time_s < t);
    let (a, b) = (&records[hi - 1], &records[hi]);
    if b.time_s == a.time_s {
        return b.dir();
    }
    let w = (t - a.time_s) / (b.time_s - a.time_s);
    let da = a.dir();
    let db = b.dir();
    let mix = Vec3::new(
        (1.0 - w) * da.x + w * db.x,
        (1.0 - w) * da.y + w * db.y,
        (1.0 - w) * da.z + w * db.z,
    );
    if mix.norm() < 1e-12 {
        // Antipodal records cancel; fall back to whichever is nearer in time.
        return if w < 0.5 { da } else { db };
    }
    mix.normalized()
}

/// One row of the error table. `threshold_deg = None` is the unthresholded
/// row: plain means over everything and no success rate. Thresholded rows
/// hold conditional means over the successful records only; the means are
/// `None` when nothing succeeded.
#[derive(Debug, Clone, Serialize)]
pub struct ReportRow {
    pub threshold_deg: Option<f64>,
    pub mean_az_err_deg: Option<f64>,
    pub mean_el_err_deg: Option<f64>,
    pub success_pct: Option<f64>,
    pub n_success: usize,
    pub n_records: usize,
}

/// Success-rate table in the usual layout: unthresholded first, then
/// thresholds in descending order.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorReport {
    pub rows: Vec<ReportRow>,
}

/// Scores estimates against a reference trajectory.
///
/// Estimates are first interpolated to the reference timestamps. A record is
/// successful under threshold `T` iff both the azimuth and the elevation
/// error are strictly below `T`.
pub fn report(
    estimates: &[TrajectoryRecord],
    reference: &[TrajectoryRecord],
    thresholds_deg: &[f64],
) -> Result<ErrorReport, EvalError> {
    if reference.is_empty() {
        return Err(EvalError::EmptyReference);
    }
    let times: Vec<f64> = reference.iter().map(|r| r.time_s).collect();
    let aligned = interpolate_trajectory(estimates, &times)?;
    let errors: Vec<(f64, f64)> = aligned
        .iter()
        .zip(reference.iter())
        .map(|(e, r)| angular_errors(e, r))
        .collect();
    let n = errors.len();

    let mut rows = Vec::with_capacity(thresholds_deg.len() + 1);
    let mean =
        |list: &[(f64, f64)]| -> (f64, f64) {
            let inv = 1.0 / list.len() as f64;
            (
                list.iter().map(|e| e.0).sum::<f64>() * inv,
                list.iter().map(|e| e.1).sum::<f64>() * inv,
            )
        };

    let (az, el) = mean(&errors);
    rows.push(ReportRow {
        threshold_deg: None,
        mean_az_err_deg: Some(az),
        mean_el_err_deg: Some(el),
        success_pct: None,
        n_success: n,
        n_records: n,
    });

    let mut thresholds: Vec<f64> = thresholds_deg.to_vec();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    for t in thresholds {
        let successful: Vec<(f64, f64)> = errors
            .iter()
            .filter(|(az, el)| *az < t && *el < t)
            .copied()
            .collect();
        let (mean_az, mean_el) = if successful.is_empty() {
            (None, None)
        } else {
            let (a, e) = mean(&successful);
            (Some(a), Some(e))
        };
        rows.push(ReportRow {
            threshold_deg: Some(t),
            mean_az_err_deg: mean_az,
            mean_el_err_deg: mean_el,
            success_pct: Some(100.0 * successful.len() as f64 / n as f64),
            n_success: successful.len(),
            n_records: n,
        });
    }
    Ok(ErrorReport { rows })
}

impl ErrorReport {
    /// Aligned text table: `threshold | az. | el. | suc.`
    pub fn render_table(&self) -> String {
        let mut out = format!("{:<10}  {:>7}  {:>7}  {:>8}\n", "threshold", "az.", "el.", "suc.");
        for row in &self.rows {
            let label = match row.threshold_deg {
                None => "no thresh.".to_string(),
                Some(t) => format!("{t:>6.1}°   "),
            };
            let fmt = |v: Option<f64>| match v {
                Some(v) => format!("{v:>7.2}"),
                None => format!("{:>7}", "-"),
            };
            let suc = match row.success_pct {
                Some(p) => format!("{p:>8.1}"),
                None => format!("{:>8}", "-"),
            };
            out.push_str(&format!(
                "{label}  {}  {}  {suc}\n",
                fmt(row.mean_az_err_deg),
                fmt(row.mean_el_err_deg)
            ));
        }
        out
    }
}

/// Reads `time_s,azimuth_deg,elevation_deg[,score]` records. The header line
/// is required; a trailing score column is accepted and ignored.
pub fn read_trajectory_csv<R: BufRead>(reader: R) -> Result<Vec<TrajectoryRecord>, EvalError> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if i == 0 {
            if !line.starts_with("time_s,azimuth_deg,elevation_deg") {
                return Err(EvalError::Parse {
                    line: 1,
                    message: format!(
                        "expected header 'time_s,azimuth_deg,elevation_deg[,score]', got '{line}'"
                    ),
                });
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 3 {
            return Err(EvalError::Parse {
                line: i + 1,
                message: format!("expected at least 3 comma-separated fields, got {}", fields.len()),
            });
        }
        let parse = |field: &str, name: &str| -> Result<f64, EvalError> {
            field.trim().parse::<f64>().map_err(|e| EvalError::Parse {
                line: i + 1,
                message: format!("bad {name} '{field}': {e}"),
            })
        };
        let record = TrajectoryRecord::new(
            parse(fields[0], "time_s")?,
            parse(fields[1], "azimuth_deg")?,
            parse(fields[2], "elevation_deg")?,
        )
        .map_err(|e| EvalError::Parse { line: i + 1, message: e.to_string() })?;
        records.push(record);
    }
    Ok(records)
}

/// Writes records in the schema `read_trajectory_csv` consumes.
pub fn write_trajectory_csv<W: Write>(
    mut writer: W,
    records: &[TrajectoryRecord],
) -> Result<(), EvalError> {
    writeln!(writer, "time_s,azimuth_deg,elevation_deg")?;
    for r in records {
        writeln!(writer, "{:.6},{:.6},{:.6}", r.time_s, r.azimuth_deg, r.elevation_deg)?;
    }
    Ok(())
}
