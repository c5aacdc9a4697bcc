//! Joint disease and population polyhazard models: specification, parameter
//! layout, priors, likelihoods and the log posterior with its gradient.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use std::collections::BTreeMap;

use crate::datasets::{SurvivalDataset, TimeUnit};
use crate::error::{invalid, Result};
use crate::hazard::{
    ChangePointSchedule, Component, ComponentDerivatives, HazardFamily, ParameterRole, Polyhazard, WeightedComponent,
};
use crate::stats::quantile;

/// Which population dataset a component explains in a cause-specific fit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Cause {
    Interest,
    Other,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationComponentSpec {
    pub family: HazardFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Required for every component when the model is cause-specific.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cause: Option<Cause>,
}

/// How a disease hazard term relates to the population components.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DiseaseTermSpec {
    /// Identical to population component `component` (0-based).
    Shared { component: usize },
    /// `C` times population component `component`, with its own constant.
    Proportional { component: usize },
    /// A disease-only component with its own parameters.
    Free {
        family: HazardFamily,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
    },
}

impl DiseaseTermSpec {
    /// Whether the term has a population counterpart.
    pub fn is_anchored(&self) -> bool {
        !matches!(self, DiseaseTermSpec::Free { .. })
    }
}

/// Interior change-points and, per segment, the indices of the active terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    /// Strictly increasing positive change-points `τ_1 < … < τ_{K-1}`; the
    /// schedule starts at 0 and its last segment is unbounded.
    pub change_points: Vec<f64>,
    pub segments: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChangePointSpecs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub population: Option<ScheduleSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disease: Option<ScheduleSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointModelSpec {
    pub population: Vec<PopulationComponentSpec>,
    #[serde(default)]
    pub disease: Vec<DiseaseTermSpec>,
    #[serde(default)]
    pub change_points: ChangePointSpecs,
    /// Population data come as two cause-of-death datasets.
    #[serde(default)]
    pub cause_specific: bool,
}

impl JointModelSpec {
    /// Bi-Weibull population with the disease group proportional on the
    /// first component and sharing the second.
    pub fn bi_weibull_anchored() -> Self {
        Self {
            population: vec![
                PopulationComponentSpec {
                    family: HazardFamily::Weibull,
                    name: None,
                    cause: None,
                },
                PopulationComponentSpec {
                    family: HazardFamily::Weibull,
                    name: None,
                    cause: None,
                },
            ],
            disease: vec![
                DiseaseTermSpec::Proportional { component: 0 },
                DiseaseTermSpec::Shared { component: 1 },
            ],
            change_points: ChangePointSpecs::default(),
            cause_specific: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.population.len();
        if m == 0 {
            return Err(invalid("population specification has no components"));
        }
        for (i, term) in self.disease.iter().enumerate() {
            if let DiseaseTermSpec::Shared { component } | DiseaseTermSpec::Proportional { component } = term {
                if *component >= m {
                    return Err(invalid(format!(
                        "disease term {i} references population component {component}, but only {m} exist"
                    )));
                }
            }
        }
        if !self.disease.is_empty() && self.disease.iter().all(|t| matches!(t, DiseaseTermSpec::Shared { .. })) {
            return Err(invalid(
                "disease specification needs at least one free or proportional term",
            ));
        }
        if self.cause_specific {
            if self.population.iter().any(|c| c.cause.is_none()) {
                return Err(invalid(
                    "cause-specific models need a cause for every population component",
                ));
            }
            for cause in [Cause::Interest, Cause::Other] {
                if !self.population.iter().any(|c| c.cause == Some(cause)) {
                    return Err(invalid(format!(
                        "cause-specific models need at least one {cause:?} component"
                    )));
                }
            }
        }
        if let Some(s) = &self.change_points.population {
            validate_schedule(s, m, "population")?;
            if self.cause_specific {
                for (k, seg) in s.segments.iter().enumerate() {
                    for cause in [Cause::Interest, Cause::Other] {
                        if !seg.iter().any(|&i| self.population[i].cause == Some(cause)) {
                            return Err(invalid(format!("population segment {k} has no {cause:?} component")));
                        }
                    }
                }
            }
        }
        if let Some(s) = &self.change_points.disease {
            if self.disease.is_empty() {
                return Err(invalid("disease change-points given without disease terms"));
            }
            validate_schedule(s, self.disease.len(), "disease")?;
        }
        Ok(())
    }
}

fn validate_schedule(s: &ScheduleSpec, n_terms: usize, what: &str) -> Result<()> {
    if s.segments.len() != s.change_points.len() + 1 {
        return Err(invalid(format!(
            "{what} schedule: {} change-points need {} segments, got {}",
            s.change_points.len(),
            s.change_points.len() + 1,
            s.segments.len()
        )));
    }
    let mut prev = 0.0;
    for &c in &s.change_points {
        if !(c.is_finite() && c > prev) {
            return Err(invalid(format!(
                "{what} change-points must be positive and strictly increasing"
            )));
        }
        prev = c;
    }
    let mut used = vec![false; n_terms];
    for (k, seg) in s.segments.iter().enumerate() {
        if seg.is_empty() {
            return Err(invalid(format!("{what} segment {k} has no terms")));
        }
        for &i in seg {
            if i >= n_terms {
                return Err(invalid(format!("{what} segment {k} references unknown term {i}")));
            }
            used[i] = true;
        }
    }
    if let Some(i) = used.iter().position(|u| !u) {
        return Err(invalid(format!("{what} term {i} is not active in any segment")));
    }
    Ok(())
}

/// Prior density on the constrained scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Prior {
    Exponential {
        mean: f64,
    },
    /// Shape-rate parameterisation: mean `shape / rate`.
    Gamma {
        shape: f64,
        rate: f64,
    },
    Normal {
        mean: f64,
        sd: f64,
    },
}

impl Prior {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Prior::Exponential { mean } => mean > 0.0 && mean.is_finite(),
            Prior::Gamma { shape, rate } => shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite(),
            Prior::Normal { mean, sd } => mean.is_finite() && sd > 0.0 && sd.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("invalid prior {self:?}")))
        }
    }

    /// Log density and its derivative with respect to the parameter.
    pub fn log_density(&self, v: f64) -> (f64, f64) {
        match *self {
            Prior::Exponential { mean } => {
                if v < 0.0 {
                    (f64::NEG_INFINITY, 0.0)
                } else {
                    (-mean.ln() - v / mean, -1.0 / mean)
                }
            }
            Prior::Gamma { shape, rate } => {
                if v <= 0.0 {
                    (f64::NEG_INFINITY, 0.0)
                } else {
                    (
                        shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * v.ln() - rate * v,
                        (shape - 1.0) / v - rate,
                    )
                }
            }
            Prior::Normal { mean, sd } => {
                let z = (v - mean) / sd;
                (
                    -0.5 * (2.0 * std::f64::consts::PI).ln() - sd.ln() - 0.5 * z * z,
                    -z / sd,
                )
            }
        }
    }
}

/// Default priors by parameter role with optional per-name overrides.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    #[serde(default)]
    pub overrides: BTreeMap<String, Prior>,
}

impl PriorSpec {
    /// Shapes: Exponential(mean 10); Weibull and Exponential rates and the
    /// log-logistic scale: Gamma(shape 2, rate 0.5); log-normal location:
    /// Normal(0, 5²); log-normal scale: Exponential(mean 10); proportionality
    /// constants: Exponential(mean 1).
    pub fn default_for(family: Option<HazardFamily>, role: ParameterRole) -> Prior {
        match role {
            ParameterRole::Shape => Prior::Exponential { mean: 10.0 },
            ParameterRole::Rate => Prior::Gamma { shape: 2.0, rate: 0.5 },
            ParameterRole::Location => Prior::Normal { mean: 0.0, sd: 5.0 },
            ParameterRole::Scale => match family {
                Some(HazardFamily::LogNormal) => Prior::Exponential { mean: 10.0 },
                _ => Prior::Gamma { shape: 2.0, rate: 0.5 },
            },
            ParameterRole::Proportionality => Prior::Exponential { mean: 1.0 },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParameterSlot {
    pub name: String,
    pub role: ParameterRole,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family: Option<HazardFamily>,
}

#[derive(Clone, Debug, PartialEq)]
struct ComponentSlots {
    family: HazardFamily,
    first: usize,
}

/// Map between the flat unconstrained vector and named constrained
/// parameters. Positive parameters are sampled on the log scale.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterLayout {
    slots: Vec<ParameterSlot>,
    components: Vec<ComponentSlots>,
    constants: Vec<usize>,
}

impl ParameterLayout {
    fn new(spec: &JointModelSpec) -> Self {
        let mut slots = Vec::new();
        let mut components = Vec::new();
        let mut push_component = |slots: &mut Vec<ParameterSlot>, family: HazardFamily, label: String| {
            components.push(ComponentSlots {
                family,
                first: slots.len(),
            });
            for &role in family.roles() {
                slots.push(ParameterSlot {
                    name: format!("{label}.{}", role.as_str()),
                    role,
                    family: Some(family),
                });
            }
        };
        for (i, c) in spec.population.iter().enumerate() {
            let label = c.name.clone().unwrap_or_else(|| format!("p{}", i + 1));
            push_component(&mut slots, c.family, label);
        }
        let mut free = 0;
        for term in &spec.disease {
            if let DiseaseTermSpec::Free { family, name } = term {
                free += 1;
                let label = name.clone().unwrap_or_else(|| format!("d{free}"));
                push_component(&mut slots, *family, label);
            }
        }
        let n_prop = spec
            .disease
            .iter()
            .filter(|t| matches!(t, DiseaseTermSpec::Proportional { .. }))
            .count();
        let mut constants = Vec::new();
        for k in 0..n_prop {
            constants.push(slots.len());
            slots.push(ParameterSlot {
                name: if n_prop == 1 { "C".into() } else { format!("C{}", k + 1) },
                role: ParameterRole::Proportionality,
                family: None,
            });
        }
        Self {
            slots,
            components,
            constants,
        }
    }

    pub fn dim(&self) -> usize {
        self.slots.len()
    }

    pub fn slots(&self) -> &[ParameterSlot] {
        &self.slots
    }

    pub fn names(&self) -> Vec<String> {
        self.slots.iter().map(|s| s.name.clone()).collect()
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn n_constants(&self) -> usize {
        self.constants.len()
    }

    pub fn to_constrained(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.slots)
            .map(|(&v, s)| if s.role.is_positive() { v.exp() } else { v })
            .collect()
    }

    pub fn to_unconstrained(&self, theta: &[f64]) -> Vec<f64> {
        theta
            .iter()
            .zip(&self.slots)
            .map(|(&v, s)| if s.role.is_positive() { v.ln() } else { v })
            .collect()
    }

    /// `log |dθ/dx|` of the constraining transform.
    pub fn log_abs_jacobian(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.slots)
            .filter(|(_, s)| s.role.is_positive())
            .map(|(v, _)| v)
            .sum()
    }

    /// Component `c` (population components first, then free disease ones).
    pub fn component(&self, c: usize, theta: &[f64]) -> Result<Component> {
        let slot = &self.components[c];
        Component::new(slot.family, &theta[slot.first..slot.first + slot.family.arity()])
    }

    pub fn constant(&self, k: usize, theta: &[f64]) -> f64 {
        theta[self.constants[k]]
    }
}

/// Which data the hazard of a group explains.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupKind {
    Disease,
    Population,
    CauseOfInterest,
    OtherCauses,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Term {
    pub(crate) component: usize,
    pub(crate) constant: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct CompiledGroup {
    pub(crate) boundaries: Vec<f64>,
    pub(crate) segments: Vec<Vec<Term>>,
}

impl CompiledGroup {
    fn segment_of(&self, t: f64) -> usize {
        let k = self.segments.len();
        self.boundaries[1..k].partition_point(|&b| b <= t)
    }
}

fn compile_schedule(schedule: Option<&ScheduleSpec>, terms: &[Term], keep: impl Fn(usize) -> bool) -> CompiledGroup {
    match schedule {
        None => CompiledGroup {
            boundaries: vec![0.0, f64::INFINITY],
            segments: vec![(0..terms.len()).filter(|&i| keep(i)).map(|i| terms[i]).collect()],
        },
        Some(s) => {
            let mut boundaries = vec![0.0];
            boundaries.extend(&s.change_points);
            boundaries.push(f64::INFINITY);
            CompiledGroup {
                boundaries,
                segments: s
                    .segments
                    .iter()
                    .map(|seg| seg.iter().filter(|&&i| keep(i)).map(|&i| terms[i]).collect())
                    .collect(),
            }
        }
    }
}

/// Datasets for a joint fit, all expressed in one time unit.
#[derive(Clone, Debug, Default)]
pub struct ModelData {
    pub disease: Option<SurvivalDataset>,
    pub population: Option<SurvivalDataset>,
    pub cause_of_interest: Option<SurvivalDataset>,
    pub other_causes: Option<SurvivalDataset>,
}

impl ModelData {
    /// Converts every dataset to `unit`.
    pub fn in_unit(self, unit: TimeUnit) -> Self {
        let conv = |d: Option<SurvivalDataset>| d.map(|d| d.converted(unit));
        Self {
            disease: conv(self.disease),
            population: conv(self.population),
            cause_of_interest: conv(self.cause_of_interest),
            other_causes: conv(self.other_causes),
        }
    }

    fn get(&self, kind: GroupKind) -> Option<&SurvivalDataset> {
        match kind {
            GroupKind::Disease => self.disease.as_ref(),
            GroupKind::Population => self.population.as_ref(),
            GroupKind::CauseOfInterest => self.cause_of_interest.as_ref(),
            GroupKind::OtherCauses => self.other_causes.as_ref(),
        }
    }
}

/// Observations of one dataset sorted by `(time, event)` so that record
/// order never affects the likelihood.
#[derive(Clone, Debug)]
struct GroupData {
    kind: GroupKind,
    times: Vec<f64>,
    events: Vec<bool>,
    segment: Vec<usize>,
}

/// A joint model bound to its data and priors.
#[derive(Clone, Debug)]
pub struct JointModel {
    spec: JointModelSpec,
    layout: ParameterLayout,
    priors: Vec<Prior>,
    groups: BTreeMap<GroupKind, CompiledGroup>,
    disease_terms: Vec<Term>,
    data: Vec<GroupData>,
    n_observations: usize,
    time_unit: TimeUnit,
    /// Median observed time used to scale the default starting point.
    typical_time: f64,
}

impl JointModel {
    pub fn new(spec: JointModelSpec, priors: &PriorSpec, data: ModelData, time_unit: TimeUnit) -> Result<Self> {
        spec.validate()?;
        let data = data.in_unit(time_unit);
        let layout = ParameterLayout::new(&spec);
        let names = layout.names();
        for key in priors.overrides.keys() {
            if !names.contains(key) {
                return Err(invalid(format!(
                    "prior override for unknown parameter '{key}' (known: {})",
                    names.join(", ")
                )));
            }
        }
        let prior_vec = layout
            .slots
            .iter()
            .map(|s| {
                let p = priors
                    .overrides
                    .get(&s.name)
                    .copied()
                    .unwrap_or_else(|| PriorSpec::default_for(s.family, s.role));
                p.validate().map(|_| p)
            })
            .collect::<Result<Vec<_>>>()?;

        let n_pop = spec.population.len();
        let pop_terms: Vec<Term> = (0..n_pop)
            .map(|c| Term {
                component: c,
                constant: None,
            })
            .collect();
        let mut free = 0;
        let mut prop = 0;
        let disease_terms: Vec<Term> = spec
            .disease
            .iter()
            .map(|t| match t {
                DiseaseTermSpec::Shared { component } => Term {
                    component: *component,
                    constant: None,
                },
                DiseaseTermSpec::Proportional { component } => {
                    prop += 1;
                    Term {
                        component: *component,
                        constant: Some(prop - 1),
                    }
                }
                DiseaseTermSpec::Free { .. } => {
                    free += 1;
                    Term {
                        component: n_pop + free - 1,
                        constant: None,
                    }
                }
            })
            .collect();

        let mut groups = BTreeMap::new();
        let pop_sched = spec.change_points.population.as_ref();
        if spec.cause_specific {
            let cause_of = |i: usize| spec.population[i].cause;
            groups.insert(
                GroupKind::CauseOfInterest,
                compile_schedule(pop_sched, &pop_terms, |i| cause_of(i) == Some(Cause::Interest)),
            );
            groups.insert(
                GroupKind::OtherCauses,
                compile_schedule(pop_sched, &pop_terms, |i| cause_of(i) == Some(Cause::Other)),
            );
        }
        groups.insert(GroupKind::Population, compile_schedule(pop_sched, &pop_terms, |_| true));
        if !disease_terms.is_empty() {
            groups.insert(
                GroupKind::Disease,
                compile_schedule(spec.change_points.disease.as_ref(), &disease_terms, |_| true),
            );
        }

        let mut kinds = vec![GroupKind::Disease];
        if spec.cause_specific {
            if data.population.is_some() {
                return Err(invalid(
                    "cause-specific models take cause-of-interest and other-cause datasets, not a pooled population dataset",
                ));
            }
            kinds.extend([GroupKind::CauseOfInterest, GroupKind::OtherCauses]);
        } else {
            if data.cause_of_interest.is_some() || data.other_causes.is_some() {
                return Err(invalid("cause-split datasets need a cause-specific model"));
            }
            kinds.push(GroupKind::Population);
        }
        let mut group_data = Vec::new();
        for kind in kinds {
            let Some(d) = data.get(kind) else { continue };
            let group = groups
                .get(&kind)
                .ok_or_else(|| invalid("disease data supplied but the model has no disease terms"))?;
            let mut pairs: Vec<(f64, bool)> = d.records().iter().map(|r| (r.time, r.event)).collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            group_data.push(GroupData {
                kind,
                segment: pairs.iter().map(|p| group.segment_of(p.0)).collect(),
                times: pairs.iter().map(|p| p.0).collect(),
                events: pairs.iter().map(|p| p.1).collect(),
            });
        }
        let all_times: Vec<f64> = group_data.iter().flat_map(|g| g.times.iter().copied()).collect();
        let n_observations = all_times.len();
        let typical_time = if all_times.is_empty() {
            1.0
        } else {
            quantile(&all_times, 0.5)
        };
        Ok(Self {
            spec,
            layout,
            priors: prior_vec,
            groups,
            disease_terms,
            data: group_data,
            n_observations,
            time_unit,
            typical_time,
        })
    }

    pub fn spec(&self) -> &JointModelSpec {
        &self.spec
    }

    pub fn layout(&self) -> &ParameterLayout {
        &self.layout
    }

    pub fn priors(&self) -> &[Prior] {
        &self.priors
    }

    pub fn time_unit(&self) -> TimeUnit {
        self.time_unit
    }

    pub fn n_observations(&self) -> usize {
        self.n_observations
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn has_group(&self, kind: GroupKind) -> bool {
        self.groups.contains_key(&kind)
    }

    /// Disease terms in declaration order.
    pub(crate) fn disease_terms(&self) -> &[Term] {
        &self.disease_terms
    }

    /// Largest observed time in the data of group `kind`, if any.
    pub fn follow_up_end(&self, kind: GroupKind) -> Option<f64> {
        self.data
            .iter()
            .find(|g| g.kind == kind)
            .and_then(|g| g.times.last().copied())
    }

    fn components(&self, theta: &[f64]) -> Option<Vec<Component>> {
        (0..self.layout.n_components())
            .map(|c| self.layout.component(c, theta).ok())
            .collect()
    }

    /// Materialises the hazard of a group at constrained parameters.
    pub fn group_schedule(&self, kind: GroupKind, theta: &[f64]) -> Result<ChangePointSchedule> {
        let group = self
            .groups
            .get(&kind)
            .ok_or_else(|| invalid(format!("model has no {kind:?} group")))?;
        self.schedule_from(group, theta, &|_| 1.0)
    }

    /// Like [`group_schedule`](Self::group_schedule) with each term's weight
    /// multiplied by `scale(term)`.
    pub(crate) fn schedule_from(
        &self,
        group: &CompiledGroup,
        theta: &[f64],
        scale: &dyn Fn(&Term) -> f64,
    ) -> Result<ChangePointSchedule> {
        let segments = group
            .segments
            .iter()
            .map(|seg| {
                let terms = seg
                    .iter()
                    .map(|t| {
                        let component = self.layout.component(t.component, theta)?;
                        let w = t.constant.map_or(1.0, |k| self.layout.constant(k, theta));
                        Ok(WeightedComponent {
                            component,
                            weight: w * scale(t),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Polyhazard::new(terms)
            })
            .collect::<Result<Vec<_>>>()?;
        ChangePointSchedule::new(group.boundaries.clone(), segments)
    }

    /// Log-likelihood of `data` under the hazard of group `kind`.
    pub fn dataset_log_likelihood(&self, kind: GroupKind, theta: &[f64], data: &SurvivalDataset) -> Result<f64> {
        let group = self
            .groups
            .get(&kind)
            .ok_or_else(|| invalid(format!("model has no {kind:?} group")))?;
        let comps = self
            .components(theta)
            .ok_or_else(|| invalid("parameters outside their domain"))?;
        let mut pairs: Vec<(f64, bool)> = data
            .converted(self.time_unit)
            .records()
            .iter()
            .map(|r| (r.time, r.event))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let gd = GroupData {
            kind,
            segment: pairs.iter().map(|p| group.segment_of(p.0)).collect(),
            times: pairs.iter().map(|p| p.0).collect(),
            events: pairs.iter().map(|p| p.1).collect(),
        };
        Ok(self.group_value(group, &gd, theta, &comps, None, None))
    }

    /// Sum of all likelihood terms at constrained parameters.
    pub fn log_likelihood(&self, theta: &[f64]) -> f64 {
        let Some(comps) = self.components(theta) else {
            return f64::NEG_INFINITY;
        };
        self.data
            .iter()
            .map(|g| self.group_value(&self.groups[&g.kind], g, theta, &comps, None, None))
            .sum()
    }

    /// Per-observation log-likelihood contributions, datasets in the order
    /// disease, population (or cause of interest, other causes), each sorted
    /// by time.
    pub fn pointwise_log_likelihood(&self, theta: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_observations);
        match self.components(theta) {
            Some(comps) => {
                for g in &self.data {
                    self.group_value(&self.groups[&g.kind], g, theta, &comps, None, Some(&mut out));
                }
            }
            None => out.resize(self.n_observations, f64::NEG_INFINITY),
        }
        out
    }

    /// Sum of prior log densities on the constrained scale.
    pub fn log_prior(&self, theta: &[f64]) -> f64 {
        self.priors.iter().zip(theta).map(|(p, &v)| p.log_density(v).0).sum()
    }

    /// Log posterior in unconstrained coordinates (likelihood + prior +
    /// log Jacobian). Writes the gradient into `grad`; returns `-∞` with a
    /// zero gradient when the point is not evaluable.
    pub fn log_posterior_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let theta = self.layout.to_constrained(x);
        let Some(comps) = self.components(&theta) else {
            return f64::NEG_INFINITY;
        };
        let mut lp = 0.0;
        for g in &self.data {
            lp += self.group_value(&self.groups[&g.kind], g, &theta, &comps, Some(grad), None);
        }
        for (i, (p, slot)) in self.priors.iter().zip(&self.layout.slots).enumerate() {
            let (v, d) = p.log_density(theta[i]);
            lp += v;
            if slot.role.is_positive() {
                lp += x[i];
                grad[i] += theta[i] * d + 1.0;
            } else {
                grad[i] += d;
            }
        }
        if !lp.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            return f64::NEG_INFINITY;
        }
        lp
    }

    /// Unconstrained starting point: shapes spread from below to above one
    /// across components and scales chosen so that every component carries a
    /// similar share of the hazard at the median observed time.
    pub fn default_start(&self) -> Vec<f64> {
        let mut theta = vec![0.0; self.dim()];
        let n_comp = self.layout.n_components();
        let n_pop = self.spec.population.len();
        let t = self.typical_time.max(1e-8);
        for c in 0..n_comp {
            let (rank, count) = if c < n_pop {
                (c, n_pop)
            } else {
                (c - n_pop, n_comp - n_pop)
            };
            let spread = if count > 1 {
                rank as f64 / (count - 1) as f64
            } else {
                0.5
            };
            let shape = 0.7 * (2.5f64 / 0.7).powf(spread);
            let share = 1.0 / (count as f64 * 2.0);
            let slot = &self.layout.components[c];
            let p = &mut theta[slot.first..slot.first + slot.family.arity()];
            match slot.family {
                HazardFamily::Weibull => {
                    p[0] = shape;
                    p[1] = share / t.powf(shape);
                }
                HazardFamily::Exponential => p[0] = share / t,
                HazardFamily::LogNormal => {
                    p[0] = t.ln() + 1.0 - 2.0 * spread;
                    p[1] = 1.0;
                }
                HazardFamily::LogLogistic => {
                    p[0] = shape;
                    p[1] = t * (2.0 - spread);
                }
            }
        }
        for &k in &self.layout.constants {
            theta[k] = 1.0;
        }
        self.layout.to_unconstrained(&theta)
    }

    #[allow(clippy::too_many_arguments)]
    fn group_value(
        &self,
        group: &CompiledGroup,
        data: &GroupData,
        theta: &[f64],
        comps: &[Component],
        mut grad: Option<&mut [f64]>,
        mut pointwise: Option<&mut Vec<f64>>,
    ) -> f64 {
        let layout = &self.layout;
        let n_seg = group.segments.len();
        // cumulative hazard accumulated before each segment, with gradient
        let dim = layout.dim();
        let want_grad = grad.is_some();
        let mut base = vec![0.0; n_seg];
        let mut base_grad = if want_grad {
            vec![vec![0.0; dim]; n_seg]
        } else {
            Vec::new()
        };
        // derivatives at each segment's start, per term
        let mut start_derivs: Vec<Vec<ComponentDerivatives>> = Vec::with_capacity(n_seg);
        for j in 0..n_seg {
            let start = group.boundaries[j];
            start_derivs.push(
                group.segments[j]
                    .iter()
                    .map(|t| comps[t.component].derivatives(start))
                    .collect(),
            );
        }
        for j in 1..n_seg {
            let end = group.boundaries[j];
            let mut acc = base[j - 1];
            let mut acc_grad = if want_grad {
                base_grad[j - 1].clone()
            } else {
                Vec::new()
            };
            for (ti, t) in group.segments[j - 1].iter().enumerate() {
                let a = &start_derivs[j - 1][ti];
                let b = comps[t.component].derivatives(end);
                let w = t.constant.map_or(1.0, |k| layout.constant(k, theta));
                let inc = b.cumulative_hazard - a.cumulative_hazard;
                acc += w * inc;
                if want_grad {
                    let slot = &layout.components[t.component];
                    for p in 0..slot.family.arity() {
                        acc_grad[slot.first + p] += w * (b.d_cumulative_hazard[p] - a.d_cumulative_hazard[p]);
                    }
                    if let Some(k) = t.constant {
                        acc_grad[layout.constants[k]] += w * inc;
                    }
                }
            }
            base[j] = acc;
            if want_grad {
                base_grad[j] = acc_grad;
            }
        }
        let weights: Vec<Vec<f64>> = group
            .segments
            .iter()
            .map(|seg| {
                seg.iter()
                    .map(|t| t.constant.map_or(1.0, |k| layout.constant(k, theta)))
                    .collect()
            })
            .collect();

        let mut total = 0.0;
        let mut seg_count = vec![0usize; n_seg];
        let mut derivs: Vec<ComponentDerivatives> = Vec::new();
        for i in 0..data.times.len() {
            let t = data.times[i];
            let j = data.segment[i];
            let event = data.events[i];
            seg_count[j] += 1;
            let seg = &group.segments[j];
            let mut h = 0.0;
            let mut cum = base[j];
            derivs.clear();
            derivs.extend(seg.iter().map(|term| comps[term.component].derivatives(t)));
            for (ti, d) in derivs.iter().enumerate() {
                let w = weights[j][ti];
                h += w * d.hazard;
                cum += w * (d.cumulative_hazard - start_derivs[j][ti].cumulative_hazard);
            }
            let value = if event { h.ln() - cum } else { -cum };
            total += value;
            if let Some(pw) = pointwise.as_deref_mut() {
                pw.push(value);
            }
            if let Some(g) = grad.as_deref_mut() {
                for (ti, term) in seg.iter().enumerate() {
                    let d = &derivs[ti];
                    let s = &start_derivs[j][ti];
                    let w = weights[j][ti];
                    let slot = &layout.components[term.component];
                    for p in 0..slot.family.arity() {
                        let mut v = -w * (d.d_cumulative_hazard[p] - s.d_cumulative_hazard[p]);
                        if event {
                            v += w * d.d_hazard[p] / h;
                        }
                        g[slot.first + p] += v;
                    }
                    if let Some(k) = term.constant {
                        let mut v = -w * (d.cumulative_hazard - s.cumulative_hazard);
                        if event {
                            v += w * d.hazard / h;
                        }
                        g[layout.constants[k]] += v;
                    }
                }
            }
        }
        if let Some(g) = grad {
            for j in 1..n_seg {
                if seg_count[j] > 0 {
                    for (gi, bg) in g.iter_mut().zip(&base_grad[j]) {
                        *gi -= seg_count[j] as f64 * bg;
                    }
                }
            }
        }
        total
    }
}

/// `Σ_j [δ_j log h_p(t_j) + log S_p(t_j)]` under the pooled population hazard.
pub fn log_likelihood_population(model: &JointModel, theta: &[f64], data: &SurvivalDataset) -> Result<f64> {
    model.dataset_log_likelihood(GroupKind::Population, theta, data)
}

/// Log-likelihood of disease data under the disease hazard built from the
/// sharing map.
pub fn log_likelihood_disease(model: &JointModel, theta: &[f64], data: &SurvivalDataset) -> Result<f64> {
    model.dataset_log_likelihood(GroupKind::Disease, theta, data)
}

/// Cause-of-interest, other-cause and disease terms together. The disease
/// dataset may be absent.
pub fn log_likelihood_cause_specific(
    model: &JointModel,
    theta: &[f64],
    cause_of_interest: &SurvivalDataset,
    other_causes: &SurvivalDataset,
    disease: Option<&SurvivalDataset>,
) -> Result<f64> {
    let mut total = model.dataset_log_likelihood(GroupKind::CauseOfInterest, theta, cause_of_interest)?
        + model.dataset_log_likelihood(GroupKind::OtherCauses, theta, other_causes)?;
    if let Some(d) = disease {
        total += model.dataset_log_likelihood(GroupKind::Disease, theta, d)?;
    }
    Ok(total)
}
