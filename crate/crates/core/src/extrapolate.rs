//! Hazard and survival curves beyond the end of follow-up.
//!
//! Curves live on a uniform grid starting at 0. Up to `t*`, the last grid
//! point inside follow-up, the fitted disease hazard is used unchanged.
//! Beyond it the method decides how the hazard continues. Survival is
//! `exp(-H)` with `H` accumulated onward from `H(t*)`, so it is continuous at
//! `t*` by construction.
//!
//! Everything is computed per posterior draw. Constants such as the mean
//! difference `D` or ratio `R` therefore carry posterior uncertainty.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::format_float;
use crate::error::{data, domain, invalid, Error, Result};
use crate::hazard::Component;
use crate::io::{csv_err, csv_reader, csv_writer, io_err};
use crate::model::{GroupKind, JointModel, ScheduleSpec};
use crate::stats::quantile_sorted;

/// 97.5% standard normal quantile.
const Z_975: f64 = 1.959_963_984_540_054;

/// How the hazard continues beyond `t*`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ExtrapolationMethod {
    /// The fitted disease hazard, evaluated past follow-up.
    Baseline,
    /// `D + h_p(t)` with `D` the mean of `h_d - h_p` over the last `window`
    /// follow-up grid points.
    ConstantDifference { window: usize },
    /// `R · h_p(t)` with `R` the mean of `h_d / h_p` over the window.
    ConstantRatio { window: usize },
    /// Difference method applied to each masked disease term against its
    /// population component, other terms continue as fitted.
    #[serde(rename = "pseudo-cs-difference")]
    PseudoCsDifference { window: usize, mask: Vec<usize> },
    /// Ratio counterpart of [`PseudoCsDifference`](Self::PseudoCsDifference).
    #[serde(rename = "pseudo-cs-ratio")]
    PseudoCsRatio { window: usize, mask: Vec<usize> },
}

/// Additive or multiplicative adjustment of a pseudo cause-specific method.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Adjustment {
    Difference,
    Ratio,
}

impl ExtrapolationMethod {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Baseline => "baseline",
            Self::ConstantDifference { .. } => "constant-difference",
            Self::ConstantRatio { .. } => "constant-ratio",
            Self::PseudoCsDifference { .. } => "pseudo-cs-difference",
            Self::PseudoCsRatio { .. } => "pseudo-cs-ratio",
        }
    }

    fn window(&self) -> Option<usize> {
        match self {
            Self::Baseline => None,
            Self::ConstantDifference { window }
            | Self::ConstantRatio { window }
            | Self::PseudoCsDifference { window, .. }
            | Self::PseudoCsRatio { window, .. } => Some(*window),
        }
    }

    fn mask(&self) -> Option<&[usize]> {
        match self {
            Self::PseudoCsDifference { mask, .. } | Self::PseudoCsRatio { mask, .. } => Some(mask),
            _ => None,
        }
    }

    /// Whether the method replaces the whole hazard rather than single terms.
    fn acts_on_total(&self) -> bool {
        matches!(self, Self::ConstantDifference { .. } | Self::ConstantRatio { .. })
    }

    pub fn validate(&self) -> Result<()> {
        if self.window() == Some(0) {
            return Err(invalid(format!("{}: window must be at least 1", self.label())));
        }
        if let Some(mask) = self.mask() {
            if mask.is_empty() {
                return Err(invalid(format!(
                    "{}: mask must name at least one disease term",
                    self.label()
                )));
            }
            let mut seen = mask.to_vec();
            seen.sort_unstable();
            seen.dedup();
            if seen.len() != mask.len() {
                return Err(invalid(format!("{}: mask has duplicate entries", self.label())));
            }
        }
        Ok(())
    }
}

/// Uniform grid `0, step, 2·step, …` with the end-of-follow-up marker.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
    t_star_index: usize,
}

impl TimeGrid {
    /// Grid reaching at least `horizon`. `t*` is the last grid point not after
    /// `follow_up_end`.
    pub fn new(step: f64, horizon: f64, follow_up_end: f64) -> Result<Self> {
        if !(step.is_finite() && step > 0.0) {
            return Err(invalid(format!("grid step must be positive, got {step}")));
        }
        if !(follow_up_end.is_finite() && follow_up_end >= step) {
            return Err(invalid(format!(
                "follow-up end {follow_up_end} must span at least one grid step ({step})"
            )));
        }
        if !(horizon.is_finite() && horizon >= follow_up_end) {
            return Err(invalid(format!(
                "grid horizon {horizon} does not cover follow-up up to {follow_up_end}"
            )));
        }
        let n = (horizon / step - 1e-9).ceil() as usize;
        let t_star_index = ((follow_up_end / step + 1e-9).floor() as usize).min(n);
        Ok(Self {
            times: (0..=n).map(|i| i as f64 * step).collect(),
            t_star_index,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn t_star(&self) -> f64 {
        self.times[self.t_star_index]
    }

    pub fn t_star_index(&self) -> usize {
        self.t_star_index
    }
}

/// Per-draw hazard and survival on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtrapolatedCurve {
    pub group: String,
    pub method: String,
    pub times: Vec<f64>,
    pub t_star_index: usize,
    /// `[draw][time]`
    pub hazard: Vec<Vec<f64>>,
    /// `[draw][time]`
    pub survival: Vec<Vec<f64>>,
    /// Names of the per-draw constants in `adjustments`, such as `D` or `R[1]`.
    pub adjustment_names: Vec<String>,
    /// `[draw][constant]`
    pub adjustments: Vec<Vec<f64>>,
    /// Per draw, grid points where a negative extrapolated hazard was set to 0.
    pub floored: Vec<usize>,
}

/// Posterior mean and central 95% band at one grid point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PointwiseSummary {
    pub time: f64,
    pub hazard_mean: f64,
    pub hazard_lower: f64,
    pub hazard_upper: f64,
    pub survival_mean: f64,
    pub survival_lower: f64,
    pub survival_upper: f64,
}

impl ExtrapolatedCurve {
    pub fn t_star(&self) -> f64 {
        self.times[self.t_star_index]
    }

    pub fn n_draws(&self) -> usize {
        self.survival.len()
    }

    pub fn summary(&self) -> Vec<PointwiseSummary> {
        let band = |rows: &[Vec<f64>], i: usize| {
            let mut v: Vec<f64> = rows.iter().map(|r| r[i]).collect();
            v.sort_by(f64::total_cmp);
            let m = v.iter().sum::<f64>() / v.len() as f64;
            (m, quantile_sorted(&v, 0.025), quantile_sorted(&v, 0.975))
        };
        (0..self.times.len())
            .map(|i| {
                let h = band(&self.hazard, i);
                let s = band(&self.survival, i);
                PointwiseSummary {
                    time: self.times[i],
                    hazard_mean: h.0,
                    hazard_lower: h.1,
                    hazard_upper: h.2,
                    survival_mean: s.0,
                    survival_lower: s.1,
                    survival_upper: s.2,
                }
            })
            .collect()
    }

    /// Posterior mean of each adjustment constant.
    pub fn adjustment_means(&self) -> Vec<(String, f64)> {
        self.adjustment_names
            .iter()
            .enumerate()
            .map(|(k, name)| {
                let m = self.adjustments.iter().map(|a| a[k]).sum::<f64>() / self.adjustments.len() as f64;
                (name.clone(), m)
            })
            .collect()
    }

    /// Warning text when some draws stay at or above `threshold` at the grid end.
    pub fn tail_warning(&self, threshold: f64) -> Option<String> {
        let open = self
            .survival
            .iter()
            .filter(|s| s.last().is_some_and(|&v| v >= threshold))
            .count();
        (open > 0).then(|| {
            format!(
                "{}/{}: survival of {open} of {} draws is still >= {threshold} at the grid end {}",
                self.group,
                self.method,
                self.n_draws(),
                self.times.last().copied().unwrap_or(0.0)
            )
        })
    }

    /// Warning text when the additive method had to floor negative hazards.
    pub fn floor_warning(&self) -> Option<String> {
        let draws = self.floored.iter().filter(|&&f| f > 0).count();
        (draws > 0).then(|| {
            format!(
                "{}/{}: negative extrapolated hazards were set to 0 in {draws} of {} draws",
                self.group,
                self.method,
                self.n_draws()
            )
        })
    }
}

/// Which items (terms or components) are active in each schedule segment.
struct Activity {
    boundaries: Vec<f64>,
    active: Vec<Vec<bool>>,
}

impl Activity {
    fn new(schedule: Option<&ScheduleSpec>, n: usize) -> Self {
        match schedule {
            None => Self {
                boundaries: vec![0.0, f64::INFINITY],
                active: vec![vec![true; n]],
            },
            Some(s) => {
                let mut boundaries = vec![0.0];
                boundaries.extend(&s.change_points);
                boundaries.push(f64::INFINITY);
                let active = s
                    .segments
                    .iter()
                    .map(|seg| {
                        let mut a = vec![false; n];
                        for &i in seg {
                            a[i] = true;
                        }
                        a
                    })
                    .collect();
                Self { boundaries, active }
            }
        }
    }

    /// Hazard and cumulative hazard of item `i`, weighted by `w`, on `times`.
    /// The cumulative hazard only accrues over segments where the item is
    /// active.
    fn curve(&self, i: usize, component: &Component, w: f64, times: &[f64]) -> Part {
        let k = self.active.len();
        let at_start: Vec<f64> = self.boundaries[..k]
            .iter()
            .map(|&b| component.cumulative_hazard_at(b))
            .collect();
        let mut hazard = Vec::with_capacity(times.len());
        let mut cumulative = Vec::with_capacity(times.len());
        for &t in times {
            let seg = self.boundaries[1..k].partition_point(|&b| b <= t);
            hazard.push(if self.active[seg][i] {
                weighted(w, component.hazard_at(t))
            } else {
                0.0
            });
            let mut acc = 0.0;
            for s in (0..=seg).filter(|&s| self.active[s][i]) {
                let end = if s == seg {
                    component.cumulative_hazard_at(t)
                } else {
                    at_start[s + 1]
                };
                acc += end - at_start[s];
            }
            cumulative.push(weighted(w, acc));
        }
        Part { hazard, cumulative }
    }
}

fn weighted(w: f64, v: f64) -> f64 {
    if w == 0.0 {
        0.0
    } else {
        w * v
    }
}

/// Hazard and cumulative hazard on the grid.
struct Part {
    hazard: Vec<f64>,
    cumulative: Vec<f64>,
}

impl Part {
    fn sum(parts: &[Part], n: usize) -> Part {
        let mut out = Part {
            hazard: vec![0.0; n],
            cumulative: vec![0.0; n],
        };
        for p in parts {
            for i in 0..n {
                out.hazard[i] += p.hazard[i];
                out.cumulative[i] += p.cumulative[i];
            }
        }
        out
    }
}

/// Continuation of one part beyond `t*`: hazard and cumulative increment
/// since `t*`, indexed from `t*` onward.
struct Tail {
    hazard: Vec<f64>,
    increment: Vec<f64>,
}

struct DiseaseTerm {
    component: usize,
    constant: Option<usize>,
    /// Population component the term is anchored to.
    counterpart: Option<usize>,
}

struct Context<'a> {
    model: &'a JointModel,
    times: &'a [f64],
    i_star: usize,
    terms: Vec<DiseaseTerm>,
    disease: Activity,
    population: Activity,
}

impl<'a> Context<'a> {
    fn new(model: &'a JointModel, grid: &'a TimeGrid) -> Result<Self> {
        if !model.has_group(GroupKind::Disease) {
            return Err(invalid("extrapolation needs a model with disease terms"));
        }
        let spec = model.spec();
        let terms = model
            .disease_terms()
            .iter()
            .zip(&spec.disease)
            .map(|(t, s)| DiseaseTerm {
                component: t.component,
                constant: t.constant,
                counterpart: s.is_anchored().then_some(t.component),
            })
            .collect::<Vec<_>>();
        Ok(Self {
            model,
            times: grid.times(),
            i_star: grid.t_star_index(),
            disease: Activity::new(spec.change_points.disease.as_ref(), terms.len()),
            population: Activity::new(spec.change_points.population.as_ref(), spec.population.len()),
            terms,
        })
    }

    fn check(&self, method: &ExtrapolationMethod) -> Result<()> {
        method.validate()?;
        if let Some(k) = method.window() {
            if k > self.i_star + 1 {
                return Err(invalid(format!(
                    "window of {k} points exceeds the {} grid points within follow-up",
                    self.i_star + 1
                )));
            }
        }
        if let Some(mask) = method.mask() {
            for &j in mask {
                let term = self.terms.get(j).ok_or_else(|| {
                    invalid(format!(
                        "mask references disease term {j}, but only {} exist",
                        self.terms.len()
                    ))
                })?;
                if term.counterpart.is_none() {
                    return Err(invalid(format!(
                        "mask references disease term {j}, which has no population counterpart"
                    )));
                }
            }
        }
        Ok(())
    }

    fn window(&self, k: usize) -> std::ops::RangeInclusive<usize> {
        self.i_star + 1 - k..=self.i_star
    }

    fn mean_difference(&self, k: usize, a: &[f64], b: &[f64]) -> Result<f64> {
        let d = self.window(k).map(|i| a[i] - b[i]).sum::<f64>() / k as f64;
        if d.is_finite() {
            Ok(d)
        } else {
            Err(domain("hazard difference over the window is not finite"))
        }
    }

    fn mean_ratio(&self, k: usize, a: &[f64], b: &[f64]) -> Result<f64> {
        let mut acc = 0.0;
        for i in self.window(k) {
            if !(b[i] > 0.0 && b[i].is_finite()) {
                return Err(domain(format!(
                    "hazard ratio undefined at t = {}: population hazard is {}",
                    self.times[i], b[i]
                )));
            }
            acc += a[i] / b[i];
        }
        let r = acc / k as f64;
        if r.is_finite() {
            Ok(r)
        } else {
            Err(domain("hazard ratio over the window is not finite"))
        }
    }

    fn fitted_tail(&self, part: &Part, scale: f64) -> Tail {
        let h0 = part.cumulative[self.i_star];
        Tail {
            hazard: part.hazard[self.i_star..].iter().map(|&h| weighted(scale, h)).collect(),
            increment: part.cumulative[self.i_star..]
                .iter()
                .map(|&c| weighted(scale, c - h0))
                .collect(),
        }
    }

    fn ratio_tail(&self, pop: &Part, r: f64, scale: f64) -> Tail {
        self.fitted_tail(pop, r * scale)
    }

    /// `max(0, d + h_p)`. While both interval ends stay non-negative the
    /// increment is exact; otherwise the floored hazard is integrated with
    /// the trapezoid rule.
    fn difference_tail(&self, pop: &Part, d: f64, scale: f64, floored: &mut usize) -> Tail {
        let i = self.i_star;
        let raw: Vec<f64> = pop.hazard[i..].iter().map(|&h| d + h).collect();
        *floored += raw[1..].iter().filter(|&&g| g < 0.0).count();
        let hazard: Vec<f64> = raw.iter().map(|&g| weighted(scale, g.max(0.0))).collect();
        let mut increment = vec![0.0; raw.len()];
        for s in 1..raw.len() {
            let dt = self.times[i + s] - self.times[i + s - 1];
            let step = if raw[s - 1] >= 0.0 && raw[s] >= 0.0 {
                d * dt + (pop.cumulative[i + s] - pop.cumulative[i + s - 1])
            } else {
                0.5 * dt * (raw[s - 1].max(0.0) + raw[s].max(0.0))
            };
            increment[s] = increment[s - 1] + weighted(scale, step);
        }
        Tail { hazard, increment }
    }

    fn draw(&self, theta: &[f64], method: &ExtrapolationMethod, term_scale: &[f64]) -> Result<DrawCurve> {
        let layout = self.model.layout();
        let components = (0..layout.n_components())
            .map(|c| layout.component(c, theta))
            .collect::<Result<Vec<_>>>()?;
        let terms: Vec<Part> = self
            .terms
            .iter()
            .enumerate()
            .map(|(j, t)| {
                let w = t.constant.map_or(1.0, |k| layout.constant(k, theta));
                self.disease.curve(j, &components[t.component], w, self.times)
            })
            .collect();
        let pop = |c: usize| self.population.curve(c, &components[c], 1.0, self.times);
        let n = self.times.len();
        let i = self.i_star;

        let mut adjustments = Vec::new();
        let mut floored = 0;
        let mut tails = Vec::new();
        // scale applied after the fact for methods acting on the whole hazard
        let mut total_scale = 1.0;
        let mut prefix_scale = term_scale.to_vec();
        match method {
            ExtrapolationMethod::Baseline => {
                for (part, &s) in terms.iter().zip(term_scale) {
                    tails.push(self.fitted_tail(part, s));
                }
            }
            ExtrapolationMethod::ConstantDifference { window } | ExtrapolationMethod::ConstantRatio { window } => {
                total_scale = term_scale.first().copied().unwrap_or(1.0);
                prefix_scale.iter_mut().for_each(|s| *s = 1.0);
                let fitted = Part::sum(&terms, n);
                let pops: Vec<Part> = (0..components_in_population(self)).map(pop).collect();
                let p = Part::sum(&pops, n);
                if matches!(method, ExtrapolationMethod::ConstantDifference { .. }) {
                    let d = self.mean_difference(*window, &fitted.hazard, &p.hazard)?;
                    adjustments.push(d);
                    tails.push(self.difference_tail(&p, d, 1.0, &mut floored));
                } else {
                    let r = self.mean_ratio(*window, &fitted.hazard, &p.hazard)?;
                    adjustments.push(r);
                    tails.push(self.ratio_tail(&p, r, 1.0));
                }
            }
            ExtrapolationMethod::PseudoCsDifference { window, mask }
            | ExtrapolationMethod::PseudoCsRatio { window, mask } => {
                let ratio = matches!(method, ExtrapolationMethod::PseudoCsRatio { .. });
                for (j, (part, &s)) in terms.iter().zip(term_scale).enumerate() {
                    if !mask.contains(&j) {
                        tails.push(self.fitted_tail(part, s));
                        continue;
                    }
                    let counterpart = self.terms[j].counterpart.expect("mask checked");
                    let p = pop(counterpart);
                    if ratio {
                        let r = self.mean_ratio(*window, &part.hazard, &p.hazard)?;
                        adjustments.push(r);
                        tails.push(self.ratio_tail(&p, r, s));
                    } else {
                        let d = self.mean_difference(*window, &part.hazard, &p.hazard)?;
                        adjustments.push(d);
                        tails.push(self.difference_tail(&p, d, s, &mut floored));
                    }
                }
            }
        }

        let mut hazard = vec![0.0; n];
        let mut cumulative = vec![0.0; n];
        for (part, &s) in terms.iter().zip(&prefix_scale) {
            for t in 0..=i {
                hazard[t] += weighted(s, part.hazard[t]);
                cumulative[t] += weighted(s, part.cumulative[t]);
            }
        }
        let at_star = cumulative[i];
        for t in i + 1..n {
            hazard[t] = tails.iter().map(|tail| tail.hazard[t - i]).sum();
            cumulative[t] = at_star + tails.iter().map(|tail| tail.increment[t - i]).sum::<f64>();
        }
        if total_scale != 1.0 {
            for t in 0..n {
                hazard[t] = weighted(total_scale, hazard[t]);
                cumulative[t] = weighted(total_scale, cumulative[t]);
            }
        }
        Ok(DrawCurve {
            survival: cumulative.iter().map(|&c| (-c).exp()).collect(),
            hazard,
            adjustments,
            floored,
        })
    }
}

fn components_in_population(ctx: &Context) -> usize {
    ctx.model.spec().population.len()
}

struct DrawCurve {
    hazard: Vec<f64>,
    survival: Vec<f64>,
    adjustments: Vec<f64>,
    floored: usize,
}

fn adjustment_names(method: &ExtrapolationMethod) -> Vec<String> {
    match method {
        ExtrapolationMethod::Baseline => Vec::new(),
        ExtrapolationMethod::ConstantDifference { .. } => vec!["D".into()],
        ExtrapolationMethod::ConstantRatio { .. } => vec!["R".into()],
        ExtrapolationMethod::PseudoCsDifference { mask, .. } => {
            let mut m = mask.clone();
            m.sort_unstable();
            m.iter().map(|j| format!("D[{j}]")).collect()
        }
        ExtrapolationMethod::PseudoCsRatio { mask, .. } => {
            let mut m = mask.clone();
            m.sort_unstable();
            m.iter().map(|j| format!("R[{j}]")).collect()
        }
    }
}

fn check_draws(model: &JointModel, draws: &[Vec<f64>]) -> Result<()> {
    if draws.is_empty() {
        return Err(invalid("no posterior draws to extrapolate"));
    }
    if let Some(d) = draws.iter().find(|d| d.len() != model.dim()) {
        return Err(data(format!(
            "posterior draw has {} values but the model has {} parameters",
            d.len(),
            model.dim()
        )));
    }
    Ok(())
}

/// Per-draw hazard ratios, either one value for all draws or one per draw.
fn expand_scale(hr: &[f64], n_draws: usize) -> Result<Vec<f64>> {
    if let Some(&bad) = hr.iter().find(|&&h| !(h.is_finite() && h > 0.0)) {
        return Err(invalid(format!("hazard ratio must be positive and finite, got {bad}")));
    }
    match hr.len() {
        1 => Ok(vec![hr[0]; n_draws]),
        n if n == n_draws => Ok(hr.to_vec()),
        n => Err(invalid(format!(
            "{n} hazard ratios given for {n_draws} posterior draws"
        ))),
    }
}

fn run(
    model: &JointModel,
    draws: &[Vec<f64>],
    grid: &TimeGrid,
    method: &ExtrapolationMethod,
    hr: Option<(&[f64], Option<&[usize]>)>,
) -> Result<ExtrapolatedCurve> {
    check_draws(model, draws)?;
    let ctx = Context::new(model, grid)?;
    ctx.check(method)?;
    let n_terms = ctx.terms.len();
    let (ratios, mask) = match hr {
        Some((h, mask)) => (expand_scale(h, draws.len())?, mask),
        None => (vec![1.0; draws.len()], None),
    };
    let mask: Vec<bool> = match mask {
        None => vec![true; n_terms],
        Some(m) => {
            let mut v = vec![false; n_terms];
            for &j in m {
                *v.get_mut(j).ok_or_else(|| {
                    invalid(format!(
                        "hazard-ratio mask references disease term {j}, but only {n_terms} exist"
                    ))
                })? = true;
            }
            v
        }
    };
    if method.acts_on_total() && mask.iter().any(|m| !m) {
        return Err(invalid(format!(
            "{} replaces the whole hazard, so a hazard ratio can only apply to all terms",
            method.label()
        )));
    }
    // adjustments are reported in ascending term order
    let method = match method {
        ExtrapolationMethod::PseudoCsDifference { window, mask } => {
            let mut m = mask.clone();
            m.sort_unstable();
            ExtrapolationMethod::PseudoCsDifference {
                window: *window,
                mask: m,
            }
        }
        ExtrapolationMethod::PseudoCsRatio { window, mask } => {
            let mut m = mask.clone();
            m.sort_unstable();
            ExtrapolationMethod::PseudoCsRatio {
                window: *window,
                mask: m,
            }
        }
        other => other.clone(),
    };
    let curves = draws
        .par_iter()
        .zip(&ratios)
        .map(|(theta, &r)| {
            let scale: Vec<f64> = mask.iter().map(|&m| if m { r } else { 1.0 }).collect();
            ctx.draw(theta, &method, &scale)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = ExtrapolatedCurve {
        group: "disease".into(),
        method: method.label().into(),
        times: grid.times().to_vec(),
        t_star_index: grid.t_star_index(),
        hazard: Vec::with_capacity(curves.len()),
        survival: Vec::with_capacity(curves.len()),
        adjustment_names: adjustment_names(&method),
        adjustments: Vec::with_capacity(curves.len()),
        floored: Vec::with_capacity(curves.len()),
    };
    for c in curves {
        out.hazard.push(c.hazard);
        out.survival.push(c.survival);
        out.adjustments.push(c.adjustments);
        out.floored.push(c.floored);
    }
    Ok(out)
}

/// Extrapolates the disease hazard of every constrained posterior draw.
pub fn extrapolate(
    model: &JointModel,
    draws: &[Vec<f64>],
    grid: &TimeGrid,
    method: &ExtrapolationMethod,
) -> Result<ExtrapolatedCurve> {
    run(model, draws, grid, method, None)
}

pub fn extrapolate_baseline(model: &JointModel, draws: &[Vec<f64>], grid: &TimeGrid) -> Result<ExtrapolatedCurve> {
    extrapolate(model, draws, grid, &ExtrapolationMethod::Baseline)
}

pub fn extrapolate_constant_difference(
    model: &JointModel,
    draws: &[Vec<f64>],
    grid: &TimeGrid,
    window: usize,
) -> Result<ExtrapolatedCurve> {
    extrapolate(model, draws, grid, &ExtrapolationMethod::ConstantDifference { window })
}

pub fn extrapolate_constant_ratio(
    model: &JointModel,
    draws: &[Vec<f64>],
    grid: &TimeGrid,
    window: usize,
) -> Result<ExtrapolatedCurve> {
    extrapolate(model, draws, grid, &ExtrapolationMethod::ConstantRatio { window })
}

pub fn extrapolate_pseudo_cause_specific(
    model: &JointModel,
    draws: &[Vec<f64>],
    grid: &TimeGrid,
    window: usize,
    adjustment: Adjustment,
    mask: &[usize],
) -> Result<ExtrapolatedCurve> {
    let mask = mask.to_vec();
    let method = match adjustment {
        Adjustment::Difference => ExtrapolationMethod::PseudoCsDifference { window, mask },
        Adjustment::Ratio => ExtrapolationMethod::PseudoCsRatio { window, mask },
    };
    extrapolate(model, draws, grid, &method)
}

/// Disease curve of a cause-specific fit: the proportional cause-of-interest
/// part plus the shared other-cause part, continued as fitted.
pub fn build_cause_specific_disease_curve(
    model: &JointModel,
    draws: &[Vec<f64>],
    grid: &TimeGrid,
) -> Result<ExtrapolatedCurve> {
    if !model.spec().cause_specific {
        return Err(invalid("the model is not cause-specific"));
    }
    extrapolate_baseline(model, draws, grid)
}

/// Arm whose hazard is `hr` times the source hazard, on the masked disease
/// terms only when `mask` is given. `hr` holds one value or one per draw.
pub fn derive_hr_arm(
    model: &JointModel,
    draws: &[Vec<f64>],
    grid: &TimeGrid,
    method: &ExtrapolationMethod,
    hr: &[f64],
    mask: Option<&[usize]>,
) -> Result<ExtrapolatedCurve> {
    let mut curve = run(model, draws, grid, method, Some((hr, mask)))?;
    curve.group = "hr-arm".into();
    Ok(curve)
}

/// Scales the whole hazard of an existing curve: `h ↦ hr·h`, `S ↦ S^hr`.
pub fn scale_curve(curve: &ExtrapolatedCurve, hr: &[f64]) -> Result<ExtrapolatedCurve> {
    let ratios = expand_scale(hr, curve.n_draws())?;
    let mut out = curve.clone();
    out.group = format!("{}-hr", curve.group);
    for ((h, s), &r) in out.hazard.iter_mut().zip(out.survival.iter_mut()).zip(&ratios) {
        h.iter_mut().for_each(|v| *v = weighted(r, *v));
        s.iter_mut().for_each(|v| *v = v.powf(r));
    }
    Ok(out)
}

/// Population hazard and survival per draw on the grid.
pub fn population_curve(model: &JointModel, draws: &[Vec<f64>], grid: &TimeGrid) -> Result<ExtrapolatedCurve> {
    check_draws(model, draws)?;
    let spec = model.spec();
    let act = Activity::new(spec.change_points.population.as_ref(), spec.population.len());
    let times = grid.times();
    let layout = model.layout();
    let parts = draws
        .par_iter()
        .map(|theta| {
            let parts = (0..spec.population.len())
                .map(|c| Ok(act.curve(c, &layout.component(c, theta)?, 1.0, times)))
                .collect::<Result<Vec<_>>>()?;
            Ok(Part::sum(&parts, times.len()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExtrapolatedCurve {
        group: "population".into(),
        method: "fitted".into(),
        times: times.to_vec(),
        t_star_index: grid.t_star_index(),
        survival: parts
            .iter()
            .map(|p| p.cumulative.iter().map(|&c| (-c).exp()).collect())
            .collect(),
        hazard: parts.into_iter().map(|p| p.hazard).collect(),
        adjustment_names: Vec::new(),
        adjustments: vec![Vec::new(); draws.len()],
        floored: vec![0; draws.len()],
    })
}

/// A hazard ratio given as a fixed value or as a point estimate with a 95%
/// interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HazardRatio {
    Interval { point: f64, lower: f64, upper: f64 },
    Fixed(f64),
}

impl HazardRatio {
    pub fn validate(&self) -> Result<()> {
        match *self {
            HazardRatio::Fixed(v) if v.is_finite() && v > 0.0 => Ok(()),
            HazardRatio::Fixed(v) => Err(invalid(format!("hazard ratio must be positive, got {v}"))),
            HazardRatio::Interval { point, lower, upper } => {
                if !(lower > 0.0 && lower < point && point < upper && upper.is_finite()) {
                    Err(invalid(format!(
                        "hazard ratio interval needs 0 < lower < point < upper, got {lower}, {point}, {upper}"
                    )))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// `n` hazard-ratio draws. An interval becomes a log-normal with median
    /// `point` and log-scale sd `ln(upper/lower) / (2·1.96)`.
    pub fn draws(&self, n: usize, seed: u64) -> Result<Vec<f64>> {
        self.validate()?;
        match *self {
            HazardRatio::Fixed(v) => Ok(vec![v; n]),
            HazardRatio::Interval { point, lower, upper } => {
                let sd = (upper / lower).ln() / (2.0 * Z_975);
                let dist = LogNormal::new(point.ln(), sd).map_err(|e| invalid(e.to_string()))?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                Ok((0..n).map(|_| dist.sample(&mut rng)).collect())
            }
        }
    }
}

/// Writes `group,method,draw,time,hazard,survival`.
pub fn write_curve_csv(path: &Path, curve: &ExtrapolatedCurve, header: &[String]) -> Result<()> {
    let mut lines = header.to_vec();
    lines.push(format!("t_star={}", format_float(curve.t_star())));
    let mut w = csv_writer(path, &lines)?;
    let err = csv_err(path);
    w.write_record(["group", "method", "draw", "time", "hazard", "survival"])
        .map_err(&err)?;
    for (d, (h, s)) in curve.hazard.iter().zip(&curve.survival).enumerate() {
        for (i, &t) in curve.times.iter().enumerate() {
            w.write_record([
                curve.group.clone(),
                curve.method.clone(),
                d.to_string(),
                format_float(t),
                format_float(h[i]),
                format_float(s[i]),
            ])
            .map_err(&err)?;
        }
    }
    w.flush().map_err(io_err(path))
}

/// Pointwise posterior mean and 95% band per grid point.
pub fn write_curve_summary_csv(path: &Path, curve: &ExtrapolatedCurve, header: &[String]) -> Result<()> {
    let mut w = csv_writer(path, header)?;
    let err = csv_err(path);
    w.write_record([
        "time",
        "hazard_mean",
        "hazard_lower",
        "hazard_upper",
        "survival_mean",
        "survival_lower",
        "survival_upper",
    ])
    .map_err(&err)?;
    for row in curve.summary() {
        w.write_record(
            [
                row.time,
                row.hazard_mean,
                row.hazard_lower,
                row.hazard_upper,
                row.survival_mean,
                row.survival_lower,
                row.survival_upper,
            ]
            .map(format_float),
        )
        .map_err(&err)?;
    }
    w.flush().map_err(io_err(path))
}

#[derive(Deserialize)]
struct CurveRow {
    group: String,
    method: String,
    draw: usize,
    time: f64,
    hazard: f64,
    survival: f64,
}

/// Reads a file written by [`write_curve_csv`]. Adjustment constants and
/// floor counts are not stored and come back empty.
pub fn load_curve_csv(path: &Path) -> Result<ExtrapolatedCurve> {
    let row_err = |row: usize, message: String| Error::Row {
        path: path.to_path_buf(),
        row,
        message,
    };
    let file = File::open(path).map_err(io_err(path))?;
    let mut t_star = None;
    for line in BufReader::new(file).lines() {
        let line = line.map_err(io_err(path))?;
        let Some(comment) = line.strip_prefix('#') else { break };
        if let Some(v) = comment.trim().strip_prefix("t_star=") {
            t_star = v.parse::<f64>().ok();
        }
    }
    let t_star = t_star.ok_or_else(|| data(format!("{}: missing t_star header line", path.display())))?;

    let mut rdr = csv_reader(path)?;
    let mut group = None;
    let mut method = String::new();
    let mut times: Vec<f64> = Vec::new();
    let mut hazard: Vec<Vec<f64>> = Vec::new();
    let mut survival: Vec<Vec<f64>> = Vec::new();
    for (k, rec) in rdr.deserialize::<CurveRow>().enumerate() {
        let row = k + 1;
        let r = rec.map_err(|e| row_err(row, e.to_string()))?;
        match &group {
            None => {
                group = Some(r.group.clone());
                method = r.method.clone();
            }
            Some(g) if *g != r.group || method != r.method => {
                return Err(row_err(row, "file mixes several curves".into()));
            }
            _ => {}
        }
        if r.draw == hazard.len() {
            hazard.push(Vec::new());
            survival.push(Vec::new());
        } else if r.draw + 1 != hazard.len() {
            return Err(row_err(row, format!("draw {} out of order", r.draw)));
        }
        let i = hazard[r.draw].len();
        if r.draw == 0 {
            if times.last().is_some_and(|&t| r.time <= t) {
                return Err(row_err(row, "times must increase within a draw".into()));
            }
            times.push(r.time);
        } else if times.get(i) != Some(&r.time) {
            return Err(row_err(row, "every draw must use the same time grid".into()));
        }
        hazard[r.draw].push(r.hazard);
        survival[r.draw].push(r.survival);
    }
    let group = group.ok_or_else(|| data(format!("{}: no curve rows", path.display())))?;
    if survival.iter().any(|s| s.len() != times.len()) {
        return Err(data(format!("{}: draws have different lengths", path.display())));
    }
    let t_star_index = times
        .iter()
        .position(|&t| t == t_star)
        .ok_or_else(|| data(format!("{}: t_star {t_star} is not a grid point", path.display())))?;
    let n = survival.len();
    Ok(ExtrapolatedCurve {
        group,
        method,
        times,
        t_star_index,
        hazard,
        survival,
        adjustment_names: Vec::new(),
        adjustments: vec![Vec::new(); n],
        floored: vec![0; n],
    })
}
