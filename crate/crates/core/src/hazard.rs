//! Closed-form hazard, cumulative hazard and survival functions.
//!
//! Three levels of composition are provided:
//!
//! - [`Component`]: a single parametric hazard (Weibull, Exponential,
//!   LogNormal, LogLogistic).
//! - [`Polyhazard`]: a weighted sum of components. The weight is `1` for an
//!   ordinary component and the proportionality constant `C` for a component
//!   that is proportional to its population counterpart, so the survival of a
//!   term is `S_m(t)^C`.
//! - [`ChangePointSchedule`]: a piecewise polyhazard whose survival is
//!   adjusted multiplicatively at every change-point so that it is continuous.
//!
//! Parameterisations:
//!
//! | family      | parameters         | survival                           |
//! |-------------|--------------------|------------------------------------|
//! | Weibull     | shape α, rate λ    | `exp(-λ t^α)`                      |
//! | Exponential | rate λ             | `exp(-λ t)`                        |
//! | LogNormal   | location μ, scale σ| `1 - Φ((ln t - μ)/σ)`              |
//! | LogLogistic | shape β, scale γ   | `1 / (1 + (t/γ)^β)`                |
//!
//! At `t = 0` hazards return their right limit (which is `+∞` for Weibull and
//! LogLogistic shapes below one) and cumulative hazards return `0`.

use serde::{Deserialize, Serialize};
use std::f64::consts::SQRT_2;

use crate::error::{domain, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Parametric family of a single hazard component.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HazardFamily {
    Weibull,
    Exponential,
    #[serde(alias = "lognormal")]
    LogNormal,
    #[serde(alias = "loglogistic")]
    LogLogistic,
}

/// What a parameter means, used to attach default priors and transforms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParameterRole {
    Shape,
    Rate,
    Location,
    Scale,
    /// Proportionality constant between a disease and a population component.
    Proportionality,
}

impl ParameterRole {
    /// Positive parameters are sampled on the log scale.
    pub fn is_positive(self) -> bool {
        !matches!(self, ParameterRole::Location)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ParameterRole::Shape => "shape",
            ParameterRole::Rate => "rate",
            ParameterRole::Location => "location",
            ParameterRole::Scale => "scale",
            ParameterRole::Proportionality => "C",
        }
    }
}

impl HazardFamily {
    pub fn arity(self) -> usize {
        self.roles().len()
    }

    pub fn roles(self) -> &'static [ParameterRole] {
        use ParameterRole::*;
        match self {
            HazardFamily::Weibull => &[Shape, Rate],
            HazardFamily::Exponential => &[Rate],
            HazardFamily::LogNormal => &[Location, Scale],
            HazardFamily::LogLogistic => &[Shape, Scale],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            HazardFamily::Weibull => "weibull",
            HazardFamily::Exponential => "exponential",
            HazardFamily::LogNormal => "log-normal",
            HazardFamily::LogLogistic => "log-logistic",
        }
    }
}

/// A single hazard component with concrete parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Component {
    Weibull { shape: f64, rate: f64 },
    Exponential { rate: f64 },
    LogNormal { location: f64, scale: f64 },
    LogLogistic { shape: f64, scale: f64 },
}

/// Hazard and cumulative hazard of a component together with their partial
/// derivatives in the unconstrained sampling coordinates (log of every
/// positive parameter, identity for the LogNormal location). Unused slots
/// are zero.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ComponentDerivatives {
    pub hazard: f64,
    pub cumulative_hazard: f64,
    pub d_hazard: [f64; 2],
    pub d_cumulative_hazard: [f64; 2],
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(domain(format!("{name} must be finite and > 0, got {v}")))
    }
}

fn check_time(t: f64) -> Result<()> {
    if t.is_nan() || t < 0.0 {
        Err(domain(format!("time must be >= 0, got {t}")))
    } else {
        Ok(())
    }
}

/// `ln(1 - Φ(z))`, accurate far into the upper tail.
pub(crate) fn log_upper_normal_tail(z: f64) -> f64 {
    if z < 37.0 {
        (0.5 * statrs::function::erf::erfc(z / SQRT_2)).ln()
    } else {
        let z2 = z * z;
        let series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2) + 105.0 / (z2 * z2 * z2 * z2);
        -0.5 * z2 - z.ln() - LN_SQRT_2PI + series.ln()
    }
}

/// Inverse Mills ratio `φ(z) / (1 - Φ(z))`.
fn inverse_mills(z: f64) -> f64 {
    (-0.5 * z * z - LN_SQRT_2PI - log_upper_normal_tail(z)).exp()
}

impl Component {
    /// Builds a component from a family and its parameters in the order
    /// given by [`HazardFamily::roles`].
    pub fn new(family: HazardFamily, params: &[f64]) -> Result<Self> {
        if params.len() != family.arity() {
            return Err(domain(format!(
                "{} takes {} parameters, got {}",
                family.name(),
                family.arity(),
                params.len()
            )));
        }
        Ok(match family {
            HazardFamily::Weibull => Component::Weibull {
                shape: positive("weibull shape", params[0])?,
                rate: positive("weibull rate", params[1])?,
            },
            HazardFamily::Exponential => Component::Exponential {
                rate: positive("exponential rate", params[0])?,
            },
            HazardFamily::LogNormal => {
                if !params[0].is_finite() {
                    return Err(domain("log-normal location must be finite"));
                }
                Component::LogNormal {
                    location: params[0],
                    scale: positive("log-normal scale", params[1])?,
                }
            }
            HazardFamily::LogLogistic => Component::LogLogistic {
                shape: positive("log-logistic shape", params[0])?,
                scale: positive("log-logistic scale", params[1])?,
            },
        })
    }

    pub fn weibull(shape: f64, rate: f64) -> Result<Self> {
        Self::new(HazardFamily::Weibull, &[shape, rate])
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        Self::new(HazardFamily::Exponential, &[rate])
    }

    pub fn log_normal(location: f64, scale: f64) -> Result<Self> {
        Self::new(HazardFamily::LogNormal, &[location, scale])
    }

    pub fn log_logistic(shape: f64, scale: f64) -> Result<Self> {
        Self::new(HazardFamily::LogLogistic, &[shape, scale])
    }

    pub fn family(&self) -> HazardFamily {
        match self {
            Component::Weibull { .. } => HazardFamily::Weibull,
            Component::Exponential { .. } => HazardFamily::Exponential,
            Component::LogNormal { .. } => HazardFamily::LogNormal,
            Component::LogLogistic { .. } => HazardFamily::LogLogistic,
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match *self {
            Component::Weibull { shape, rate } => vec![shape, rate],
            Component::Exponential { rate } => vec![rate],
            Component::LogNormal { location, scale } => vec![location, scale],
            Component::LogLogistic { shape, scale } => vec![shape, scale],
        }
    }

    /// Hazard `h(t)`.
    pub fn hazard(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(self.hazard_at(t))
    }

    /// Cumulative hazard `H(t)`, with `S(t) = exp(-H(t))`.
    pub fn cumulative_hazard(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(self.cumulative_hazard_at(t))
    }

    pub fn survival(&self, t: f64) -> Result<f64> {
        Ok((-self.cumulative_hazard(t)?).exp())
    }

    pub(crate) fn hazard_at(&self, t: f64) -> f64 {
        if t == 0.0 {
            return self.hazard_at_zero();
        }
        match *self {
            Component::Weibull { shape, rate } => {
                if shape == 1.0 {
                    rate
                } else {
                    rate * shape * t.powf(shape - 1.0)
                }
            }
            Component::Exponential { rate } => rate,
            Component::LogNormal { location, scale } => {
                let z = (t.ln() - location) / scale;
                inverse_mills(z) / (scale * t)
            }
            Component::LogLogistic { shape, scale } => {
                // h = (β/γ)(t/γ)^(β-1) / (1 + (t/γ)^β), evaluated in log space
                let lr = (t / scale).ln();
                let log_u = shape * lr;
                let log_h = shape.ln() - scale.ln() + (shape - 1.0) * lr - ln_1p_exp(log_u);
                log_h.exp()
            }
        }
    }

    fn hazard_at_zero(&self) -> f64 {
        let limit = |shape: f64, at_one: f64| {
            if shape < 1.0 {
                f64::INFINITY
            } else if shape == 1.0 {
                at_one
            } else {
                0.0
            }
        };
        match *self {
            Component::Weibull { shape, rate } => limit(shape, rate),
            Component::Exponential { rate } => rate,
            Component::LogNormal { .. } => 0.0,
            Component::LogLogistic { shape, scale } => limit(shape, 1.0 / scale),
        }
    }

    pub(crate) fn cumulative_hazard_at(&self, t: f64) -> f64 {
        if t == 0.0 {
            return 0.0;
        }
        match *self {
            Component::Weibull { shape, rate } => {
                if shape == 1.0 {
                    rate * t
                } else {
                    rate * t.powf(shape)
                }
            }
            Component::Exponential { rate } => rate * t,
            Component::LogNormal { location, scale } => -log_upper_normal_tail((t.ln() - location) / scale),
            Component::LogLogistic { shape, scale } => ln_1p_exp(shape * (t / scale).ln()),
        }
    }

    /// Hazard and cumulative hazard with derivatives in unconstrained
    /// coordinates. At `t = 0` everything but the hazard limit is zero.
    pub fn derivatives(&self, t: f64) -> ComponentDerivatives {
        if t == 0.0 {
            return ComponentDerivatives {
                hazard: self.hazard_at_zero(),
                ..Default::default()
            };
        }
        match *self {
            Component::Weibull { shape, rate } => {
                let lt = t.ln();
                let cum = rate * (shape * lt).exp();
                let h = rate * shape * ((shape - 1.0) * lt).exp();
                ComponentDerivatives {
                    hazard: h,
                    cumulative_hazard: cum,
                    d_hazard: [h * (1.0 + shape * lt), h],
                    d_cumulative_hazard: [cum * shape * lt, cum],
                }
            }
            Component::Exponential { rate } => ComponentDerivatives {
                hazard: rate,
                cumulative_hazard: rate * t,
                d_hazard: [rate, 0.0],
                d_cumulative_hazard: [rate * t, 0.0],
            },
            Component::LogNormal { location, scale } => {
                let z = (t.ln() - location) / scale;
                let r = inverse_mills(z);
                let cum = -log_upper_normal_tail(z);
                let h = r / (scale * t);
                // d ln r / dz = r - z
                let dlogr = r - z;
                ComponentDerivatives {
                    hazard: h,
                    cumulative_hazard: cum,
                    d_hazard: [h * (-dlogr / scale), h * (-dlogr * z - 1.0)],
                    d_cumulative_hazard: [-r / scale, -r * z],
                }
            }
            Component::LogLogistic { shape, scale } => {
                let lr = (t / scale).ln();
                let log_u = shape * lr;
                // u/(1+u) and 1/(1+u) without overflow
                let frac = logistic(log_u);
                let inv1pu = logistic(-log_u);
                let cum = ln_1p_exp(log_u);
                let h = (shape.ln() + log_u - t.ln() - cum).exp();
                ComponentDerivatives {
                    hazard: h,
                    cumulative_hazard: cum,
                    d_hazard: [h * (1.0 + shape * lr * inv1pu), h * (-shape * inv1pu)],
                    d_cumulative_hazard: [frac * shape * lr, -frac * shape],
                }
            }
        }
    }
}

/// `ln(1 + e^x)` without overflow.
fn ln_1p_exp(x: f64) -> f64 {
    if x > 35.0 {
        x + (-x).exp()
    } else if x < -35.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// A component inside a polyhazard with its multiplier.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightedComponent {
    pub component: Component,
    /// `1` for free and shared components, `C` for proportional ones.
    pub weight: f64,
}

impl WeightedComponent {
    pub fn unit(component: Component) -> Self {
        Self { component, weight: 1.0 }
    }

    pub fn proportional(component: Component, constant: f64) -> Self {
        Self {
            component,
            weight: constant,
        }
    }
}

/// Sum of `M ≥ 1` weighted hazard components.
#[derive(Clone, Debug, PartialEq)]
pub struct Polyhazard {
    terms: Vec<WeightedComponent>,
}

impl Polyhazard {
    pub fn new(terms: Vec<WeightedComponent>) -> Result<Self> {
        if terms.is_empty() {
            return Err(domain("a polyhazard needs at least one component"));
        }
        for term in &terms {
            if !(term.weight.is_finite() && term.weight >= 0.0) {
                return Err(domain(format!(
                    "component weight must be finite and >= 0, got {}",
                    term.weight
                )));
            }
        }
        Ok(Self { terms })
    }

    /// All weights equal to one.
    pub fn unweighted(components: &[Component]) -> Result<Self> {
        Self::new(components.iter().copied().map(WeightedComponent::unit).collect())
    }

    pub fn terms(&self) -> &[WeightedComponent] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn hazard(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(self.hazard_at(t))
    }

    pub fn cumulative_hazard(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(self.cumulative_hazard_at(t))
    }

    /// `Π S_m(t)^{w_m} = exp(-Σ w_m H_m(t))`.
    pub fn survival(&self, t: f64) -> Result<f64> {
        Ok((-self.cumulative_hazard(t)?).exp())
    }

    pub(crate) fn hazard_at(&self, t: f64) -> f64 {
        self.terms
            .iter()
            .map(|w| weighted(w.weight, w.component.hazard_at(t)))
            .sum()
    }

    pub(crate) fn cumulative_hazard_at(&self, t: f64) -> f64 {
        self.terms
            .iter()
            .map(|w| weighted(w.weight, w.component.cumulative_hazard_at(t)))
            .sum()
    }
}

/// `w * v` with `0 * ∞ = 0`, so a zero-weighted term vanishes everywhere.
#[inline]
fn weighted(w: f64, v: f64) -> f64 {
    if w == 0.0 {
        0.0
    } else {
        w * v
    }
}

/// Piecewise polyhazard on `[τ_0 = 0, τ_1), [τ_1, τ_2), …, [τ_{K-1}, τ_K]`.
///
/// Segments are left-closed; the final segment is also closed at `τ_K`,
/// which may be `+∞` for an open-ended schedule. Inside segment `J`
///
/// ```text
/// S(t) = S(t; θ_J) · Π_{j<J} S(τ_j; θ_j) / S(τ_j; θ_{j+1})
/// ```
///
/// which is the same as accumulating each segment's cumulative hazard
/// increment over its own interval.
#[derive(Clone, Debug, PartialEq)]
pub struct ChangePointSchedule {
    boundaries: Vec<f64>,
    segments: Vec<Polyhazard>,
}

impl ChangePointSchedule {
    pub fn new(boundaries: Vec<f64>, segments: Vec<Polyhazard>) -> Result<Self> {
        if segments.is_empty() {
            return Err(domain("change-point schedule has no segments"));
        }
        if boundaries.len() != segments.len() + 1 {
            return Err(domain(format!(
                "{} segments need {} boundaries, got {}",
                segments.len(),
                segments.len() + 1,
                boundaries.len()
            )));
        }
        if boundaries[0] != 0.0 {
            return Err(domain("first change-point boundary must be 0"));
        }
        for pair in boundaries.windows(2) {
            if !(pair[1] > pair[0]) || pair[0].is_nan() {
                return Err(domain("change-point boundaries must be strictly increasing"));
            }
        }
        Ok(Self { boundaries, segments })
    }

    /// A schedule with one segment over `[0, ∞)`.
    pub fn single(segment: Polyhazard) -> Self {
        Self {
            boundaries: vec![0.0, f64::INFINITY],
            segments: vec![segment],
        }
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn segments(&self) -> &[Polyhazard] {
        &self.segments
    }

    pub fn end(&self) -> f64 {
        *self.boundaries.last().expect("validated non-empty")
    }

    /// Index of the segment owning `t` under the left-closed convention.
    pub fn segment_index(&self, t: f64) -> Result<usize> {
        check_time(t)?;
        if t > self.end() {
            return Err(domain(format!(
                "time {t} is beyond the last change-point boundary {}",
                self.end()
            )));
        }
        Ok(self.segment_index_unchecked(t))
    }

    pub(crate) fn segment_index_unchecked(&self, t: f64) -> usize {
        let k = self.segments.len();
        // number of interior boundaries τ_1..τ_{K-1} that are <= t
        self.boundaries[1..k].partition_point(|&b| b <= t)
    }

    pub fn hazard(&self, t: f64) -> Result<f64> {
        let j = self.segment_index(t)?;
        Ok(self.segments[j].hazard_at(t))
    }

    pub fn cumulative_hazard(&self, t: f64) -> Result<f64> {
        let j = self.segment_index(t)?;
        Ok(self.cumulative_hazard_in(j, t))
    }

    pub fn survival(&self, t: f64) -> Result<f64> {
        Ok((-self.cumulative_hazard(t)?).exp())
    }

    /// Cumulative hazard at `t` computed with the formula of segment `j`.
    /// Evaluating at `t = τ_j` with `j` and `j + 1` gives the two one-sided
    /// limits.
    pub fn cumulative_hazard_in(&self, j: usize, t: f64) -> f64 {
        let mut total = 0.0;
        for (i, seg) in self.segments[..j].iter().enumerate() {
            total += seg.cumulative_hazard_at(self.boundaries[i + 1]) - seg.cumulative_hazard_at(self.boundaries[i]);
        }
        let seg = &self.segments[j];
        total + seg.cumulative_hazard_at(t) - seg.cumulative_hazard_at(self.boundaries[j])
    }
}
