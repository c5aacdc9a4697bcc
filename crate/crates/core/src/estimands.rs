//! Areas under survival curves: mean survival, restricted mean survival and
//! life-years gained, each summarised over posterior draws.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datasets::format_float;
use crate::error::{data, invalid, Result};
use crate::extrapolate::ExtrapolatedCurve;
use crate::io::{csv_err, csv_writer, io_err};
use crate::stats::{quantile_sorted, variance};

/// Survival below this value counts as zero when locating `t_max`.
pub const DEFAULT_THRESHOLD: f64 = 1e-4;

/// Per-draw values of an estimand and their summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimandResult {
    pub name: String,
    #[serde(skip)]
    pub values: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
    /// Time unit of the grid.
    pub units: String,
    /// Upper integration limit.
    pub t_max: f64,
    /// Set when the curve never became effectively zero, so the value is a
    /// restricted mean up to the grid end.
    pub restricted: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl EstimandResult {
    fn new(name: impl Into<String>, values: Vec<f64>, units: &str, t_max: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("no draws to summarise"));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(data(format!("non-finite estimand value {v}")));
        }
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        Ok(Self {
            name: name.into(),
            mean: values.iter().sum::<f64>() / values.len() as f64,
            sd: variance(&values).sqrt(),
            q025: quantile_sorted(&sorted, 0.025),
            q50: quantile_sorted(&sorted, 0.5),
            q975: quantile_sorted(&sorted, 0.975),
            values,
            units: units.into(),
            t_max,
            restricted: false,
            warnings: Vec::new(),
        })
    }
}

/// `Σ (S(t_{z-1}) + S(t_z))/2 · (t_z - t_{z-1})` over the given partition.
pub fn trapezoid_integral(times: &[f64], values: &[f64]) -> Result<f64> {
    if times.len() != values.len() {
        return Err(invalid(format!(
            "{} grid points but {} values",
            times.len(),
            values.len()
        )));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("integration grid must be strictly increasing"));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(invalid(format!("non-finite value {v} on the integration grid")));
    }
    Ok(times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, s)| 0.5 * (s[0] + s[1]) * (t[1] - t[0]))
        .sum())
}

/// Index of the first grid point where every draw is below `threshold`, if
/// there is one.
fn zero_index(curve: &ExtrapolatedCurve, threshold: f64) -> Option<usize> {
    let mut idx = 0;
    for s in &curve.survival {
        idx = idx.max(s.iter().position(|&v| v < threshold)?);
    }
    Some(idx)
}

/// Per-draw area under the survival curves up to grid index `end`.
fn areas(curve: &ExtrapolatedCurve, end: usize) -> Result<Vec<f64>> {
    curve
        .survival
        .iter()
        .map(|s| trapezoid_integral(&curve.times[..=end], &s[..=end]))
        .collect()
}

/// Area up to the grid point `t_max`, which must lie on the grid.
pub fn area_under(curve: &ExtrapolatedCurve, t_max: f64) -> Result<Vec<f64>> {
    let end = curve
        .times
        .iter()
        .position(|&t| t == t_max)
        .ok_or_else(|| invalid(format!("t_max {t_max} is not a grid point")))?;
    areas(curve, end)
}

/// Time at which the curve is effectively zero in every draw, or the grid
/// end with `false` when it never gets there.
fn t_max_of(curve: &ExtrapolatedCurve, threshold: f64) -> (usize, bool) {
    match zero_index(curve, threshold) {
        Some(i) => (i, true),
        None => (curve.times.len() - 1, false),
    }
}

fn restricted_note(curve: &ExtrapolatedCurve, threshold: f64) -> String {
    format!(
        "{}/{}: survival not below {threshold} by the grid end {}; reporting the restricted mean",
        curve.group,
        curve.method,
        curve.times.last().copied().unwrap_or(0.0)
    )
}

/// Mean survival: area under the whole curve up to where it is effectively
/// zero (below `threshold`) in every draw.
pub fn mean_survival(curve: &ExtrapolatedCurve, threshold: f64, units: &str) -> Result<EstimandResult> {
    if curve.survival.is_empty() {
        return Err(invalid("curve has no draws"));
    }
    let (end, closed) = t_max_of(curve, threshold);
    let mut r = EstimandResult::new(
        format!("mean_survival:{}/{}", curve.group, curve.method),
        areas(curve, end)?,
        units,
        curve.times[end],
    )?;
    if !closed {
        r.restricted = true;
        r.warnings.push(restricted_note(curve, threshold));
    }
    Ok(r)
}

/// Area under the curve on `[0, tau]`. A `tau` between grid points closes
/// with a partial trapezoid on the linearly interpolated curve.
pub fn restricted_mean_survival(curve: &ExtrapolatedCurve, tau: f64, units: &str) -> Result<EstimandResult> {
    let last = *curve.times.last().ok_or_else(|| invalid("empty grid"))?;
    if !(tau > curve.times[0] && tau <= last) {
        return Err(invalid(format!(
            "restriction time {tau} outside the grid ({}, {last}]",
            curve.times[0]
        )));
    }
    let end = curve.times.partition_point(|&t| t <= tau) - 1;
    let mut values = areas(curve, end)?;
    let t0 = curve.times[end];
    if tau > t0 {
        let t1 = curve.times[end + 1];
        let f = (tau - t0) / (t1 - t0);
        for (v, s) in values.iter_mut().zip(&curve.survival) {
            let s_tau = s[end] + f * (s[end + 1] - s[end]);
            *v += 0.5 * (s[end] + s_tau) * (tau - t0);
        }
    }
    EstimandResult::new(format!("rmst:{}/{}", curve.group, curve.method), values, units, tau)
}

/// `∫₀^{t_max} S₁ - ∫₀^{t_max} S₂` per draw, with `t_max` the later of the
/// two curves' effectively-zero times. Draws are paired by index.
pub fn life_years_gained(
    first: &ExtrapolatedCurve,
    second: &ExtrapolatedCurve,
    threshold: f64,
    units: &str,
) -> Result<EstimandResult> {
    if first.times != second.times {
        return Err(invalid(format!(
            "cannot compare {}/{} with {}/{}: the time grids differ",
            first.group, first.method, second.group, second.method
        )));
    }
    if first.n_draws() != second.n_draws() {
        return Err(invalid(format!(
            "cannot pair {} draws with {} draws",
            first.n_draws(),
            second.n_draws()
        )));
    }
    let (e1, c1) = t_max_of(first, threshold);
    let (e2, c2) = t_max_of(second, threshold);
    let end = e1.max(e2);
    let a = areas(first, end)?;
    let b = areas(second, end)?;
    let mut r = EstimandResult::new(
        format!(
            "lyg:{}/{} vs {}/{}",
            first.group, first.method, second.group, second.method
        ),
        a.iter().zip(&b).map(|(x, y)| x - y).collect(),
        units,
        first.times[end],
    )?;
    for (closed, c) in [(c1, first), (c2, second)] {
        if !closed {
            r.restricted = true;
            r.warnings.push(restricted_note(c, threshold));
        }
    }
    Ok(r)
}

/// Gaussian kernel density on `n_points` evenly spaced points spanning the
/// values plus three bandwidths, with Silverman's bandwidth. Empty when the
/// values have no spread.
pub fn kernel_density(values: &[f64], n_points: usize) -> Vec<(f64, f64)> {
    let n = values.len();
    if n < 2 || n_points == 0 {
        return Vec::new();
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let sd = variance(values).sqrt();
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * (n as f64).powf(-0.2);
    if !(h > 0.0 && h.is_finite()) {
        return Vec::new();
    }
    let lo = sorted[0] - 3.0 * h;
    let hi = sorted[n - 1] + 3.0 * h;
    let norm = 1.0 / (n as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    crate::stats::linspace(lo, hi, n_points)
        .into_iter()
        .map(|x| {
            let d: f64 = values.iter().map(|&v| (-0.5 * ((x - v) / h).powi(2)).exp()).sum();
            (x, d * norm)
        })
        .collect()
}

/// One row per draw: `estimand,draw,value`.
pub fn write_estimand_draws_csv(path: &Path, results: &[EstimandResult], header: &[String]) -> Result<()> {
    let mut w = csv_writer(path, header)?;
    let err = csv_err(path);
    w.write_record(["estimand", "draw", "value"]).map_err(&err)?;
    for r in results {
        for (d, v) in r.values.iter().enumerate() {
            w.write_record([r.name.clone(), d.to_string(), format_float(*v)])
                .map_err(&err)?;
        }
    }
    w.flush().map_err(io_err(path))
}

/// Density rows `estimand,x,density`.
pub fn write_density_csv(path: &Path, results: &[EstimandResult], n_points: usize, header: &[String]) -> Result<()> {
    let mut w = csv_writer(path, header)?;
    let err = csv_err(path);
    w.write_record(["estimand", "x", "density"]).map_err(&err)?;
    for r in results {
        for (x, d) in kernel_density(&r.values, n_points) {
            w.write_record([r.name.clone(), format_float(x), format_float(d)])
                .map_err(&err)?;
        }
    }
    w.flush().map_err(io_err(path))
}
