//! Survival data: ingestion, Kaplan-Meier and kernel hazard estimates, and
//! reconstruction of individual records from a digitised survival curve.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{data, invalid, Error, Result};
use crate::io::{csv_reader, csv_writer};
use crate::stats::quantile_sorted;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Female,
    Male,
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sex::Female => "female",
            Sex::Male => "male",
        })
    }
}

impl FromStr for Sex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "female" | "f" => Ok(Sex::Female),
            "male" | "m" => Ok(Sex::Male),
            other => Err(invalid(format!("unknown sex '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeUnit {
    #[default]
    Months,
    Years,
}

impl TimeUnit {
    /// Number of this unit in one year.
    pub fn per_year(self) -> f64 {
        match self {
            TimeUnit::Months => 12.0,
            TimeUnit::Years => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SurvivalRecord {
    pub time: f64,
    /// `true` for an observed event, `false` for right censoring.
    pub event: bool,
    pub age: Option<u32>,
    pub sex: Option<Sex>,
    pub group: String,
}

impl SurvivalRecord {
    pub fn new(time: f64, event: bool) -> Self {
        Self {
            time,
            event,
            age: None,
            sex: None,
            group: String::new(),
        }
    }
}

/// A non-empty set of right-censored records sharing one time unit.
#[derive(Clone, Debug, PartialEq)]
pub struct SurvivalDataset {
    records: Vec<SurvivalRecord>,
    time_unit: TimeUnit,
}

impl SurvivalDataset {
    pub fn new(records: Vec<SurvivalRecord>, time_unit: TimeUnit) -> Result<Self> {
        if records.is_empty() {
            return Err(data("survival dataset is empty"));
        }
        for (i, r) in records.iter().enumerate() {
            if !(r.time.is_finite() && r.time > 0.0) {
                return Err(data(format!("record {i}: time must be finite and > 0, got {}", r.time)));
            }
        }
        Ok(Self { records, time_unit })
    }

    /// Convenience constructor from parallel time/event slices.
    pub fn from_times(times: &[f64], events: &[bool], time_unit: TimeUnit) -> Result<Self> {
        if times.len() != events.len() {
            return Err(invalid("times and events differ in length"));
        }
        Self::new(
            times
                .iter()
                .zip(events)
                .map(|(&t, &e)| SurvivalRecord::new(t, e))
                .collect(),
            time_unit,
        )
    }

    pub fn records(&self) -> &[SurvivalRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<SurvivalRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn time_unit(&self) -> TimeUnit {
        self.time_unit
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.time).collect()
    }

    pub fn events(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.event).collect()
    }

    pub fn n_events(&self) -> usize {
        self.records.iter().filter(|r| r.event).count()
    }

    pub fn max_time(&self) -> f64 {
        self.records.iter().map(|r| r.time).fold(0.0, f64::max)
    }

    /// Records whose group label equals `group`.
    pub fn filter_group(&self, group: &str) -> Result<Self> {
        let records: Vec<_> = self.records.iter().filter(|r| r.group == group).cloned().collect();
        if records.is_empty() {
            return Err(data(format!("no records in group '{group}'")));
        }
        Self::new(records, self.time_unit)
    }

    /// Rescales times to another unit.
    pub fn converted(&self, unit: TimeUnit) -> Self {
        let factor = unit.per_year() / self.time_unit.per_year();
        Self {
            records: self
                .records
                .iter()
                .map(|r| SurvivalRecord {
                    time: r.time * factor,
                    ..r.clone()
                })
                .collect(),
            time_unit: unit,
        }
    }
}

#[derive(Debug, Deserialize)]
struct SurvivalRow {
    time: String,
    event: String,
    #[serde(default)]
    age: String,
    #[serde(default)]
    sex: String,
    #[serde(default)]
    group: String,
}

/// Reads a survival CSV with header `time,event,age,sex,group`. `age` and
/// `sex` may be empty. Lines starting with `#` are ignored.
pub fn load_survival_csv(path: &Path, time_unit: TimeUnit) -> Result<SurvivalDataset> {
    let mut reader = csv_reader(path)?;
    let headers = reader
        .headers()
        .map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?
        .clone();
    for required in ["time", "event"] {
        if !headers.iter().any(|h| h == required) {
            return Err(data(format!(
                "{}: missing required column '{required}'",
                path.display()
            )));
        }
    }
    let mut records = Vec::new();
    for row in reader.deserialize::<SurvivalRow>() {
        let row = row.map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        let line = records.len() + 1;
        let row_err = |message: String| Error::Row {
            path: path.to_path_buf(),
            row: line,
            message,
        };
        let time: f64 = row
            .time
            .trim()
            .parse()
            .map_err(|_| row_err(format!("unparsable time '{}'", row.time)))?;
        if !(time.is_finite() && time > 0.0) {
            return Err(row_err(format!("time must be > 0, got {time}")));
        }
        let event = match row.event.trim() {
            "1" => true,
            "0" => false,
            other => return Err(row_err(format!("event must be 0 or 1, got '{other}'"))),
        };
        let age = match row.age.trim() {
            "" => None,
            a => Some(a.parse::<u32>().map_err(|_| row_err(format!("unparsable age '{a}'")))?),
        };
        let sex = match row.sex.trim() {
            "" => None,
            s => Some(s.parse::<Sex>().map_err(|e| row_err(e.to_string()))?),
        };
        records.push(SurvivalRecord {
            time,
            event,
            age,
            sex,
            group: row.group.trim().to_string(),
        });
    }
    if records.is_empty() {
        return Err(data(format!("{}: no records", path.display())));
    }
    SurvivalDataset::new(records, time_unit)
}

/// Writes `time,event,age,sex,group`, preceded by `header` comment lines.
pub fn write_survival_csv(path: &Path, dataset: &SurvivalDataset, header: &[String]) -> Result<()> {
    let mut w = csv_writer(path, header)?;
    let io_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    w.write_record(["time", "event", "age", "sex", "group"])
        .map_err(io_err)?;
    for r in dataset.records() {
        w.write_record([
            format_float(r.time),
            (r.event as u8).to_string(),
            r.age.map(|a| a.to_string()).unwrap_or_default(),
            r.sex.map(|s| s.to_string()).unwrap_or_default(),
            r.group.clone(),
        ])
        .map_err(io_err)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Shortest representation that round-trips.
pub(crate) fn format_float(v: f64) -> String {
    format!("{v}")
}

/// One step of a product-limit estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KmStep {
    pub time: f64,
    pub survival: f64,
    pub n_risk: usize,
    pub n_events: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KaplanMeier {
    pub steps: Vec<KmStep>,
    pub n: usize,
}

impl KaplanMeier {
    /// Right-continuous step function value.
    pub fn survival_at(&self, t: f64) -> f64 {
        let idx = self.steps.partition_point(|s| s.time <= t);
        if idx == 0 {
            1.0
        } else {
            self.steps[idx - 1].survival
        }
    }

    /// Area under the step function on `[0, tau]`.
    pub fn restricted_mean(&self, tau: f64) -> f64 {
        let mut area = 0.0;
        let mut prev_t = 0.0;
        let mut prev_s = 1.0;
        for s in &self.steps {
            if s.time >= tau {
                break;
            }
            area += prev_s * (s.time - prev_t);
            prev_t = s.time;
            prev_s = s.survival;
        }
        area + prev_s * (tau - prev_t).max(0.0)
    }
}

/// Product-limit estimate with a step at every distinct event time. Events
/// precede censorings recorded at the same time.
pub fn kaplan_meier(data: &SurvivalDataset) -> KaplanMeier {
    kaplan_meier_from(&data.times(), &data.events())
}

pub fn kaplan_meier_from(times: &[f64], events: &[bool]) -> KaplanMeier {
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let n = times.len();
    let mut steps = Vec::new();
    let mut surv = 1.0;
    let mut i = 0;
    while i < n {
        let t = times[order[i]];
        let at_risk = n - i;
        let mut d = 0;
        let mut j = i;
        while j < n && times[order[j]] == t {
            if events[order[j]] {
                d += 1;
            }
            j += 1;
        }
        if d > 0 {
            surv *= 1.0 - d as f64 / at_risk as f64;
            steps.push(KmStep {
                time: t,
                survival: surv,
                n_risk: at_risk,
                n_events: d,
            });
        }
        i = j;
    }
    KaplanMeier { steps, n }
}

/// Nelson-Aalen cumulative hazard at every distinct event time.
pub fn nelson_aalen(data: &SurvivalDataset) -> Vec<(f64, f64)> {
    let km = kaplan_meier(data);
    let mut cum = 0.0;
    km.steps
        .iter()
        .map(|s| {
            cum += s.n_events as f64 / s.n_risk as f64;
            (s.time, cum)
        })
        .collect()
}

/// `1.5 · IQR(event times) · n_events^(-1/5)`.
pub fn default_bandwidth(data: &SurvivalDataset) -> Result<f64> {
    let mut ev: Vec<f64> = data.records().iter().filter(|r| r.event).map(|r| r.time).collect();
    if ev.len() < 2 {
        return Err(data_err_bandwidth());
    }
    ev.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&ev, 0.75) - quantile_sorted(&ev, 0.25);
    let b = 1.5 * iqr * (ev.len() as f64).powf(-0.2);
    if b > 0.0 {
        Ok(b)
    } else {
        Err(data_err_bandwidth())
    }
}

fn data_err_bandwidth() -> Error {
    data("default bandwidth needs at least two distinct event times")
}

fn epanechnikov(u: f64) -> f64 {
    if u.abs() <= 1.0 {
        0.75 * (1.0 - u * u)
    } else {
        0.0
    }
}

/// Mass of the Epanechnikov kernel on `(-∞, z]`.
fn epanechnikov_cdf(z: f64) -> f64 {
    let z = z.clamp(-1.0, 1.0);
    0.5 + 0.75 * (z - z * z * z / 3.0)
}

/// Kernel-smoothed Nelson-Aalen hazard:
/// `ĥ(t) = Σ_events K_b(t - t_i) / Y(t_i)` with the Epanechnikov kernel,
/// renormalised by the kernel mass on `[0, ∞)` when `t < b`.
pub fn empirical_hazard(data: &SurvivalDataset, bandwidth: f64, grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    if !(bandwidth.is_finite() && bandwidth > 0.0) {
        return Err(invalid(format!("bandwidth must be > 0, got {bandwidth}")));
    }
    let max_t = data.max_time();
    if let Some(&bad) = grid.iter().find(|&&t| !(0.0..=max_t).contains(&t)) {
        return Err(invalid(format!(
            "grid point {bad} lies outside the data range [0, {max_t}]"
        )));
    }
    let km = kaplan_meier(data);
    let increments: Vec<(f64, f64)> = km
        .steps
        .iter()
        .map(|s| (s.time, s.n_events as f64 / s.n_risk as f64))
        .collect();
    Ok(grid
        .iter()
        .map(|&t| {
            let raw: f64 = increments
                .iter()
                .map(|&(ti, inc)| epanechnikov((t - ti) / bandwidth) * inc)
                .sum::<f64>()
                / bandwidth;
            let mass = if t < bandwidth {
                epanechnikov_cdf(t / bandwidth)
            } else {
                1.0
            };
            (t, raw / mass)
        })
        .collect())
}

/// Coordinates read off a published survival curve.
#[derive(Clone, Debug, PartialEq)]
pub struct DigitizedCurve {
    /// `(time, survival)` pairs, strictly increasing in time and
    /// non-increasing in survival.
    pub points: Vec<(f64, f64)>,
    /// Optional `(time, number at risk)` table.
    pub risk_table: Option<Vec<(f64, usize)>>,
    pub total_n: Option<usize>,
}

impl DigitizedCurve {
    fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(data("digitised curve has no points"));
        }
        let mut prev_t = -1.0;
        let mut prev_s = 1.0;
        for &(t, s) in &self.points {
            if !(t.is_finite() && t >= 0.0) || !(0.0..=1.0).contains(&s) {
                return Err(data(format!("invalid curve point ({t}, {s})")));
            }
            if t <= prev_t {
                return Err(data("curve times must be strictly increasing"));
            }
            if s > prev_s {
                return Err(data(format!("survival increases from {prev_s} to {s} at time {t}")));
            }
            if t == 0.0 && s < 1.0 {
                return Err(data("survival below one at time zero"));
            }
            prev_t = t;
            prev_s = s;
        }
        match (&self.risk_table, self.total_n) {
            (None, None) => Err(data("a risk table or a total sample size is required")),
            (_, Some(0)) => Err(data("total sample size must be positive")),
            (Some(table), _) => {
                if table.is_empty() {
                    return Err(data("risk table is empty"));
                }
                for w in table.windows(2) {
                    if w[1].0 <= w[0].0 {
                        return Err(data("risk table times must be strictly increasing"));
                    }
                    if w[1].1 > w[0].1 {
                        return Err(data("numbers at risk must not increase over time"));
                    }
                }
                if let Some(n) = self.total_n {
                    if n < table[0].1 {
                        return Err(data("total sample size is below the first number at risk"));
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Reads a `time,survival` CSV and an optional `time,n_risk` CSV.
pub fn load_digitized_curve(curve: &Path, risk_table: Option<&Path>, total_n: Option<usize>) -> Result<DigitizedCurve> {
    let points = read_pairs(curve, ["time", "survival"])?
        .into_iter()
        .map(|(t, s)| (t, s))
        .collect();
    let table = match risk_table {
        Some(p) => Some(
            read_pairs(p, ["time", "n_risk"])?
                .into_iter()
                .map(|(t, n)| {
                    if n < 0.0 || n.fract() != 0.0 {
                        Err(data(format!("{}: n_risk must be a whole number", p.display())))
                    } else {
                        Ok((t, n as usize))
                    }
                })
                .collect::<Result<Vec<_>>>()?,
        ),
        None => None,
    };
    Ok(DigitizedCurve {
        points,
        risk_table: table,
        total_n,
    })
}

fn read_pairs(path: &Path, columns: [&str; 2]) -> Result<Vec<(f64, f64)>> {
    let mut reader = csv_reader(path)?;
    let headers = reader
        .headers()
        .map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?
        .clone();
    let idx: Vec<usize> = columns
        .iter()
        .map(|c| {
            headers
                .iter()
                .position(|h| h == *c)
                .ok_or_else(|| data(format!("{}: missing required column '{c}'", path.display())))
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        let parse = |j: usize| -> Result<f64> {
            let raw = rec.get(idx[j]).unwrap_or("").trim();
            raw.parse().map_err(|_| Error::Row {
                path: path.to_path_buf(),
                row: i + 1,
                message: format!("unparsable {} '{raw}'", columns[j]),
            })
        };
        out.push((parse(0)?, parse(1)?));
    }
    if out.is_empty() {
        return Err(data(format!("{}: no rows", path.display())));
    }
    Ok(out)
}

/// Rebuilds individual records consistent with a digitised curve.
///
/// The curve is cut into intervals at the risk-table times. Within each
/// interval the number of censorings is chosen so that the reconstructed
/// number at risk at the next table time matches the table; censorings are
/// spread uniformly inside the interval and the events at each drop are
/// `round(Y · (1 - S_k / Ŝ_{k-1}))`, where `Ŝ` is the product-limit estimate
/// of the records reconstructed so far. Without a risk table no censoring
/// is assumed before the end of the curve; whoever is left is censored at
/// the last curve time.
pub fn reconstruct_ipd(curve: &DigitizedCurve, time_unit: TimeUnit) -> Result<SurvivalDataset> {
    curve.validate()?;
    let mut steps = Vec::new();
    let mut prev = 1.0;
    for &(t, s) in &curve.points {
        if s < prev {
            steps.push((t, s));
            prev = s;
        }
    }
    let last_time = curve.points.last().map(|p| p.0).unwrap_or(0.0);

    let mut table: Vec<(f64, usize)> = match &curve.risk_table {
        Some(t) => t.clone(),
        None => vec![(0.0, curve.total_n.expect("validated"))],
    };
    if table[0].0 > 0.0 {
        let n0 = curve.total_n.unwrap_or(table[0].1);
        table.insert(0, (0.0, n0));
    }

    let mut records = Vec::new();
    let mut at_risk = table[0].1;
    let mut km = 1.0;
    let mut step_idx = 0;
    for (i, &(start, _)) in table.iter().enumerate() {
        let end = table.get(i + 1).map(|e| e.0);
        let first = step_idx;
        while step_idx < steps.len() && end.is_none_or(|e| steps[step_idx].0 < e) {
            step_idx += 1;
        }
        let interval_steps = &steps[first..step_idx];
        match end {
            Some(end) => {
                let target = table[i + 1].1;
                let mut censored = 0usize;
                let mut seen = Vec::new();
                let outcome = loop {
                    let sim = simulate_interval(at_risk, km, interval_steps, censored, start, end)?;
                    let remaining = at_risk - sim.events - censored;
                    if remaining == target || seen.contains(&censored) {
                        break sim;
                    }
                    seen.push(censored);
                    if remaining > target {
                        censored += remaining - target;
                    } else if censored == 0 {
                        // table asks for more people than the curve leaves; keep what we have
                        break sim;
                    } else {
                        censored -= (target - remaining).min(censored);
                    }
                };
                at_risk -= outcome.events + censored;
                km = outcome.km;
                records.extend(outcome.records);
            }
            None => {
                let sim = simulate_interval(at_risk, km, interval_steps, 0, start, start)?;
                at_risk -= sim.events;
                km = sim.km;
                records.extend(sim.records);
                let censor_at = last_time.max(interval_steps.last().map_or(0.0, |s| s.0));
                if at_risk > 0 && censor_at <= 0.0 {
                    return Err(data("cannot censor survivors at time zero"));
                }
                for _ in 0..at_risk {
                    records.push(SurvivalRecord::new(censor_at, false));
                }
            }
        }
    }
    let _ = km;
    records.sort_by(|a, b| a.time.total_cmp(&b.time).then(b.event.cmp(&a.event)));
    SurvivalDataset::new(records, time_unit)
}

struct IntervalOutcome {
    records: Vec<SurvivalRecord>,
    events: usize,
    km: f64,
}

fn simulate_interval(
    at_risk: usize,
    km_start: f64,
    steps: &[(f64, f64)],
    censored: usize,
    start: f64,
    end: f64,
) -> Result<IntervalOutcome> {
    if censored > at_risk {
        return Err(data("risk table implies more censorings than subjects at risk"));
    }
    let censor_times: Vec<f64> = (0..censored)
        .map(|j| start + (j + 1) as f64 * (end - start) / (censored + 1) as f64)
        .collect();
    let mut records = Vec::new();
    let mut y = at_risk;
    let mut km = km_start;
    let mut c_idx = 0;
    let mut events = 0;
    for &(t, s) in steps {
        while c_idx < censor_times.len() && censor_times[c_idx] < t {
            records.push(SurvivalRecord::new(censor_times[c_idx], false));
            y -= 1;
            c_idx += 1;
        }
        if y == 0 {
            return Err(data(format!("survival drops at time {t} but nobody is left at risk")));
        }
        let d = ((y as f64) * (1.0 - s / km)).round().clamp(0.0, y as f64) as usize;
        if d > 0 {
            km *= 1.0 - d as f64 / y as f64;
            for _ in 0..d {
                records.push(SurvivalRecord::new(t, true));
            }
            y -= d;
            events += d;
        }
    }
    for &t in &censor_times[c_idx..] {
        if y == 0 {
            return Err(data("risk table implies more censorings than subjects at risk"));
        }
        records.push(SurvivalRecord::new(t, false));
        y -= 1;
    }
    Ok(IntervalOutcome { records, events, km })
}

/// Writes a KM table `time,survival,n_risk,n_events`.
pub fn write_km_csv(path: &Path, km: &KaplanMeier, header: &[String]) -> Result<()> {
    let mut w = csv_writer(path, header)?;
    let err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    w.write_record(["time", "survival", "n_risk", "n_events"])
        .map_err(err)?;
    for s in &km.steps {
        w.write_record([
            format_float(s.time),
            format_float(s.survival),
            s.n_risk.to_string(),
            s.n_events.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn ds(times: &[f64], events: &[bool]) -> SurvivalDataset {
        SurvivalDataset::from_times(times, events, TimeUnit::Months).unwrap()
    }

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_well_formed_csv() {
        let f = write_tmp("time,event,age,sex,group\n1.5,1,60,female,a\n2,0,,,a\n3,1,71,M,b\n");
        let d = load_survival_csv(f.path(), TimeUnit::Months).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.records()[0].sex, Some(Sex::Female));
        assert_eq!(d.records()[1].age, None);
        assert_eq!(d.records()[2].sex, Some(Sex::Male));
    }

    #[test]
    fn rejects_zero_time_with_row_number() {
        let f = write_tmp("time,event,age,sex,group\n1,1,,,\n0,1,,,\n");
        match load_survival_csv(f.path(), TimeUnit::Months) {
            Err(Error::Row { row, .. }) => assert_eq!(row, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_event_and_missing_columns() {
        let f = write_tmp("time,event,age,sex,group\n1,2,,,\n");
        assert!(matches!(
            load_survival_csv(f.path(), TimeUnit::Months),
            Err(Error::Row { .. })
        ));
        let f = write_tmp("time,age\n1,3\n");
        assert!(load_survival_csv(f.path(), TimeUnit::Months).is_err());
        let f = write_tmp("time,event,age,sex,group\n");
        assert!(load_survival_csv(f.path(), TimeUnit::Months).is_err());
    }

    #[test]
    fn km_examples() {
        let km = kaplan_meier(&ds(&[1.0, 2.0, 3.0, 4.0], &[true; 4]));
        assert!((km.survival_at(2.0) - 0.5).abs() < 1e-15);
        let km = kaplan_meier(&ds(&[1.0, 2.0, 3.0], &[false; 3]));
        assert!(km.steps.is_empty());
        assert_eq!(km.survival_at(10.0), 1.0);
        let km = kaplan_meier(&ds(&[1.0], &[true]));
        assert_eq!(km.survival_at(1.0), 0.0);
    }

    #[test]
    fn km_events_precede_censoring_at_ties() {
        let km = kaplan_meier(&ds(&[2.0, 2.0, 3.0], &[true, false, true]));
        assert_eq!(km.steps[0].n_risk, 3);
        assert!((km.steps[0].survival - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(km.steps[1].n_risk, 1);
    }

    #[test]
    fn km_restricted_mean() {
        let km = kaplan_meier(&ds(&[1.0, 2.0], &[true, true]));
        // 1·1 + 0.5·1
        assert!((km.restricted_mean(5.0) - 1.5).abs() < 1e-15);
        assert!((km.restricted_mean(0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn empirical_hazard_edge_cases() {
        let d = ds(&[1.0, 2.0, 3.0], &[false; 3]);
        let h = empirical_hazard(&d, 0.5, &[0.5, 1.5, 2.5]).unwrap();
        assert!(h.iter().all(|&(_, v)| v == 0.0));
        assert!(empirical_hazard(&d, 0.0, &[1.0]).is_err());
        assert!(empirical_hazard(&d, 1.0, &[4.0]).is_err());

        // single event at t=5 with 6 at risk: K_b(0)/(b·6)
        let mut times = vec![1.0, 2.0, 3.0, 4.0];
        let mut events = vec![false; 4];
        times.extend([5.0, 6.0, 7.0, 8.0, 9.0, 10.0]);
        events.extend([true, false, false, false, false, false]);
        let d = ds(&times, &events);
        let b = 2.0;
        let h = empirical_hazard(&d, b, &[5.0]).unwrap();
        assert!((h[0].1 - 0.75 / b / 6.0).abs() < 1e-15);
    }

    #[test]
    fn reconstruct_flat_curve_censors_everyone() {
        let curve = DigitizedCurve {
            points: vec![(0.0, 1.0), (24.0, 1.0)],
            risk_table: None,
            total_n: Some(50),
        };
        let d = reconstruct_ipd(&curve, TimeUnit::Months).unwrap();
        assert_eq!(d.len(), 50);
        assert!(d.records().iter().all(|r| !r.event && r.time == 24.0));
    }

    #[test]
    fn reconstruct_all_events_without_censoring_info() {
        let curve = DigitizedCurve {
            points: vec![(1.0, 0.6), (2.0, 0.2), (3.0, 0.0)],
            risk_table: None,
            total_n: Some(10),
        };
        let d = reconstruct_ipd(&curve, TimeUnit::Months).unwrap();
        assert_eq!(d.len(), 10);
        assert_eq!(d.n_events(), 10);
        let at = |t: f64| d.records().iter().filter(|r| r.time == t).count();
        assert_eq!((at(1.0), at(2.0), at(3.0)), (4, 4, 2));
    }

    #[test]
    fn reconstruct_round_trips_known_dataset() {
        let times = [0.7, 1.2, 2.0, 2.5, 3.1, 3.3, 4.8, 5.0, 6.2, 7.7];
        let events = [true, false, true, true, false, true, false, true, true, false];
        let km = kaplan_meier(&ds(&times, &events));
        let curve = DigitizedCurve {
            points: km.steps.iter().map(|s| (s.time, s.survival)).collect(),
            risk_table: Some(km.steps.iter().map(|s| (s.time, s.n_risk)).collect()),
            total_n: Some(times.len()),
        };
        let rebuilt = reconstruct_ipd(&curve, TimeUnit::Months).unwrap();
        assert_eq!(rebuilt.len(), times.len());
        let km2 = kaplan_meier(&rebuilt);
        assert_eq!(km2.steps.len(), km.steps.len());
        for (a, b) in km.steps.iter().zip(&km2.steps) {
            assert_eq!(a.time, b.time);
            assert!((a.survival - b.survival).abs() < 1e-9);
        }
    }

    #[test]
    fn reconstruct_rejects_increasing_curve_and_impossible_tables() {
        let curve = DigitizedCurve {
            points: vec![(1.0, 0.5), (2.0, 0.7)],
            risk_table: None,
            total_n: Some(10),
        };
        assert!(reconstruct_ipd(&curve, TimeUnit::Months).is_err());
        // nobody at risk after t=2 but the curve keeps dropping
        let curve = DigitizedCurve {
            points: vec![(1.0, 0.5), (3.0, 0.25)],
            risk_table: Some(vec![(0.0, 4), (2.0, 0)]),
            total_n: None,
        };
        assert!(reconstruct_ipd(&curve, TimeUnit::Months).is_err());
    }

    #[test]
    fn reconstruct_with_sparse_risk_table_matches_counts() {
        let curve = DigitizedCurve {
            points: vec![(0.0, 1.0), (2.0, 0.9), (5.0, 0.8), (8.0, 0.7), (11.0, 0.6), (12.0, 0.6)],
            risk_table: Some(vec![(0.0, 100), (6.0, 70), (12.0, 40)]),
            total_n: None,
        };
        let d = reconstruct_ipd(&curve, TimeUnit::Months).unwrap();
        assert_eq!(d.len(), 100);
        let at_risk = |t: f64| d.records().iter().filter(|r| r.time >= t).count();
        assert_eq!(at_risk(6.0), 70);
        let km = kaplan_meier(&d);
        for &(t, s) in &curve.points {
            assert!((km.survival_at(t) - s).abs() < 0.01, "t={t}");
        }
    }

    #[test]
    fn default_bandwidth_needs_events() {
        assert!(default_bandwidth(&ds(&[1.0, 2.0], &[true, false])).is_err());
        let b = default_bandwidth(&ds(&[1.0, 2.0, 3.0, 4.0, 5.0], &[true; 5])).unwrap();
        assert!((b - 1.5 * 2.0 * 5f64.powf(-0.2)).abs() < 1e-12);
    }
}
