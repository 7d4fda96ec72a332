//! Run reports and their statistics. Every figure here is computed from the
//! logged rows, so reading the CSVs back reproduces it exactly.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::Seeds;
use crate::error::{Error, Result};

/// Settling band and hold time for the step-disturbance metric.
pub const SETTLE_BAND_MM: f64 = 1.0;
pub const SETTLE_HOLD_S: f64 = 0.2;
/// Samples before this time are the start transient and are excluded.
pub const TRANSIENT_S: f64 = 1.0;
/// Start of the window used for the final drift fit.
pub const DRIFT_FROM_S: f64 = 5.0;
/// Reference z change per 100 Hz sample below which the span counts as a layer.
pub const LAYER_DZ_M: f64 = 1e-7;

/// One 100 Hz tracking sample. Position errors in mm, rotation errors in rad.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorRow {
    pub t: f64,
    pub ref_x: f64,
    pub ref_z: f64,
    pub e: [f64; 6],
}

impl ErrorRow {
    pub fn norm_mm(&self) -> f64 {
        (self.e[0] * self.e[0] + self.e[1] * self.e[1] + self.e[2] * self.e[2]).sqrt()
    }
}

pub const ERROR_HEADER: [&str; 9] = ["t", "ref_x", "ref_z", "e_x_mm", "e_y_mm", "e_z_mm", "e_rx", "e_ry", "e_rz"];

/// Mean of |e|, σ of signed e, max |e| and 95th percentile of |e|.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AxisStats {
    pub mean: f64,
    pub std: f64,
    pub max: f64,
    pub p95: f64,
}

impl AxisStats {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let n = values.len() as f64;
        let mean_signed = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean_signed).powi(2)).sum::<f64>() / n;
        let mut abs: Vec<f64> = values.iter().map(|v| v.abs()).collect();
        abs.sort_by(f64::total_cmp);
        let rank = ((0.95 * n).ceil() as usize).clamp(1, abs.len()) - 1;
        Self {
            mean: abs.iter().sum::<f64>() / n,
            std: var.sqrt(),
            max: abs[abs.len() - 1],
            p95: abs[rank],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub x_mm: AxisStats,
    pub y_mm: AxisStats,
    pub z_mm: AxisStats,
    pub norm_mm: AxisStats,
    pub roll_mrad: AxisStats,
    pub pitch_mrad: AxisStats,
    pub yaw_mrad: AxisStats,
    /// Least-squares slope of ‖e‖ against t after the start transient.
    pub drift_slope_mm_per_s: f64,
    /// Same fit restricted to t ≥ 5 s.
    pub final_drift_slope_mm_per_s: f64,
    /// σ of the z error over constant-height reference spans.
    pub layer_height_sigma_mm: Option<f64>,
    pub settling_time_s: Option<f64>,
    /// Max ‖e‖ from 1 s before to 3 s after the reference reaches the slope.
    pub transition_max_mm: Option<f64>,
}

impl ErrorStats {
    pub fn max_axis_mm(&self) -> f64 {
        self.x_mm.max.max(self.y_mm.max).max(self.z_mm.max)
    }
}

fn ls_slope(pts: impl Iterator<Item = (f64, f64)>) -> f64 {
    let pts: Vec<(f64, f64)> = pts.collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    if sxx > 0.0 { sxy / sxx } else { 0.0 }
}

/// Computes the tracking statistics. `step_time` enables the settling metric,
/// `slope_start` the transition window.
pub fn error_stats(rows: &[ErrorRow], step_time: Option<f64>, slope_start: Option<f64>) -> ErrorStats {
    let after: Vec<&ErrorRow> = rows.iter().filter(|r| r.t >= TRANSIENT_S).collect();
    let col = |i: usize, k: f64| -> Vec<f64> { after.iter().map(|r| r.e[i] * k).collect() };
    let norms: Vec<f64> = after.iter().map(|r| r.norm_mm()).collect();

    let mut layer = Vec::new();
    for w in rows.windows(2) {
        if w[1].t >= TRANSIENT_S && (w[1].ref_z - w[0].ref_z).abs() < LAYER_DZ_M {
            layer.push(w[1].e[2]);
        }
    }
    let layer_height_sigma_mm = (layer.len() > 1).then(|| AxisStats::of(&layer).std);

    let settling_time_s = step_time.and_then(|te| {
        let hold = (SETTLE_HOLD_S * 100.0).round() as usize;
        let start = rows.iter().position(|r| r.t >= te)?;
        let ok: Vec<bool> = rows[start..].iter().map(|r| r.e[2].abs() < SETTLE_BAND_MM).collect();
        let mut run = 0;
        for (i, &good) in ok.iter().enumerate() {
            run = if good { run + 1 } else { 0 };
            if run > hold {
                return Some(rows[start + i - hold].t - te);
            }
        }
        None
    });

    let transition_max_mm = slope_start.and_then(|x0| {
        let tk = rows.iter().find(|r| r.ref_x >= x0)?.t;
        rows.iter()
            .filter(|r| r.t >= tk - 1.0 && r.t <= tk + 3.0)
            .map(ErrorRow::norm_mm)
            .reduce(f64::max)
    });

    ErrorStats {
        x_mm: AxisStats::of(&col(0, 1.0)),
        y_mm: AxisStats::of(&col(1, 1.0)),
        z_mm: AxisStats::of(&col(2, 1.0)),
        norm_mm: AxisStats::of(&norms),
        roll_mrad: AxisStats::of(&col(3, 1e3)),
        pitch_mrad: AxisStats::of(&col(4, 1e3)),
        yaw_mrad: AxisStats::of(&col(5, 1e3)),
        drift_slope_mm_per_s: ls_slope(after.iter().map(|r| (r.t, r.norm_mm()))),
        final_drift_slope_mm_per_s: ls_slope(after.iter().filter(|r| r.t >= DRIFT_FROM_S).map(|r| (r.t, r.norm_mm()))),
        layer_height_sigma_mm,
        settling_time_s,
        transition_max_mm,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub plant_steps: u64,
    pub executor_ticks: u64,
    pub mpc_ticks: u64,
    pub replans: u64,
    pub saturation_steps: u64,
    pub reroutes: u64,
    pub stale_trips: u64,
    pub mpc_fallbacks: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub terrain_class: Option<String>,
    pub duration_s: f64,
    pub predictor: String,
    pub seeds: Seeds,
    pub errors: ErrorStats,
    /// Equal to `errors.z_mm.mean`.
    pub mean_height_deviation_mm: f64,
    pub settling_protocol: String,
    pub counters: Counters,
    pub noise_checksum: String,
    pub feature_layout: Vec<String>,
    pub feature_mask: Vec<bool>,
    pub config_echo: String,
    pub versions: BTreeMap<String, String>,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

pub fn versions() -> BTreeMap<String, String> {
    BTreeMap::from([
        ("terrasim".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ("report_format".to_string(), "1".to_string()),
    ])
}

/// Wall-clock solver and predictor timings; kept out of the report so that
/// reports stay byte-identical across runs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub solves: usize,
    pub solve_mean_ms: f64,
    pub solve_std_ms: f64,
    pub solve_max_ms: f64,
    pub solve_p95_ms: f64,
    pub predict_mean_ms: f64,
    pub predict_max_ms: f64,
}

impl TimingStats {
    pub fn of(solve_s: &[f64], predict_s: &[f64]) -> Self {
        let ms = |v: &[f64]| -> Vec<f64> { v.iter().map(|x| x * 1e3).collect() };
        let s = AxisStats::of(&ms(solve_s));
        let p = AxisStats::of(&ms(predict_s));
        Self {
            solves: solve_s.len(),
            solve_mean_ms: s.mean,
            solve_std_ms: s.std,
            solve_max_ms: s.max,
            solve_p95_ms: s.p95,
            predict_mean_ms: p.mean,
            predict_max_ms: p.max,
        }
    }
}

pub fn write_errors_csv(path: &Path, rows: &[ErrorRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    w.write_record(ERROR_HEADER)?;
    for r in rows {
        let mut rec = vec![r.t.to_string(), r.ref_x.to_string(), r.ref_z.to_string()];
        rec.extend(r.e.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_errors_csv(path: &Path) -> Result<Vec<ErrorRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let v: Vec<f64> = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| Error::InvalidInput(format!("{}: `{s}`: {e}", path.display()))))
            .collect::<Result<_>>()?;
        if v.len() != ERROR_HEADER.len() {
            return Err(Error::DimensionMismatch {
                expected: ERROR_HEADER.len(),
                got: v.len(),
            });
        }
        rows.push(ErrorRow {
            t: v[0],
            ref_x: v[1],
            ref_z: v[2],
            e: std::array::from_fn(|i| v[3 + i]),
        });
    }
    Ok(rows)
}
