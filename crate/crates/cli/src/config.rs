//! The run configuration: one JSON document drives every subcommand.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use polyanchor::datasets::{Sex, TimeUnit};
use polyanchor::estimands::DEFAULT_THRESHOLD;
use polyanchor::extrapolate::{ExtrapolationMethod, HazardRatio};
use polyanchor::inference::SamplerConfig;
use polyanchor::model::{
    ChangePointSpecs, DiseaseTermSpec, GroupKind, JointModelSpec, PopulationComponentSpec, Prior, PriorSpec,
};
use polyanchor::mortality::{LeeCarterConfig, ProfileEntry};
use polyanchor::simulate::Censoring;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{at_field, CliError, CliResult};

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Drives every random stage of the run.
    pub seed: u64,
    /// Relative to the config file; `--out` takes precedence.
    pub output_dir: Option<PathBuf>,
    /// Unit of every time written or analysed by the run.
    pub time_unit: TimeUnit,
    /// Adds wall-clock seconds to the fit report, which then stops being
    /// reproducible.
    pub record_wall_time: bool,
    pub data: DataConfig,
    pub model: Option<ModelConfig>,
    /// Its `seed` is replaced by the run seed.
    pub sampler: SamplerConfig,
    pub mortality: Option<MortalityConfig>,
    pub extrapolation: Option<ExtrapolationConfig>,
    pub estimands: EstimandsConfig,
    pub km: KmConfig,
    pub simulate: Option<SimulateConfig>,
    pub compare: Option<CompareConfig>,
}

/// A survival CSV given either as a bare path or with options.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DatasetRef {
    Path(PathBuf),
    Detailed(DatasetFile),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetFile {
    pub path: PathBuf,
    /// Unit of the times in the file; defaults to the run unit.
    #[serde(default)]
    pub time_unit: Option<TimeUnit>,
    /// Keeps only records of this group.
    #[serde(default)]
    pub group: Option<String>,
}

impl DatasetRef {
    pub fn path(&self) -> &Path {
        match self {
            DatasetRef::Path(p) => p,
            DatasetRef::Detailed(d) => &d.path,
        }
    }

    pub fn time_unit(&self) -> Option<TimeUnit> {
        match self {
            DatasetRef::Path(_) => None,
            DatasetRef::Detailed(d) => d.time_unit,
        }
    }

    pub fn group(&self) -> Option<&str> {
        match self {
            DatasetRef::Path(_) => None,
            DatasetRef::Detailed(d) => d.group.as_deref(),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub disease: Option<DatasetRef>,
    pub population: Option<DatasetRef>,
    pub cause_of_interest: Option<DatasetRef>,
    pub other_causes: Option<DatasetRef>,
    pub digitized: Option<DigitizedConfig>,
}

impl DataConfig {
    /// Configured datasets with their field names and model roles.
    pub fn datasets(&self) -> Vec<(&'static str, GroupKind, &DatasetRef)> {
        [
            ("data.disease", GroupKind::Disease, &self.disease),
            ("data.population", GroupKind::Population, &self.population),
            (
                "data.cause_of_interest",
                GroupKind::CauseOfInterest,
                &self.cause_of_interest,
            ),
            ("data.other_causes", GroupKind::OtherCauses, &self.other_causes),
        ]
        .into_iter()
        .filter_map(|(f, k, d)| d.as_ref().map(|d| (f, k, d)))
        .collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DigitizedConfig {
    /// `time,survival` coordinates.
    pub curve: PathBuf,
    /// `time,n_risk` table.
    #[serde(default)]
    pub risk_table: Option<PathBuf>,
    #[serde(default)]
    pub total_n: Option<usize>,
    /// Unit of the digitised times; defaults to the run unit.
    #[serde(default)]
    pub time_unit: Option<TimeUnit>,
    /// Group label of the reconstructed records.
    #[serde(default)]
    pub group: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub population: Vec<PopulationComponentSpec>,
    #[serde(default)]
    pub disease: Vec<DiseaseTermSpec>,
    #[serde(default)]
    pub change_points: ChangePointSpecs,
    #[serde(default)]
    pub cause_specific: bool,
    /// Prior overrides by parameter name, e.g. `p1.shape`.
    #[serde(default)]
    pub priors: BTreeMap<String, Prior>,
}

impl ModelConfig {
    pub fn spec(&self) -> JointModelSpec {
        JointModelSpec {
            population: self.population.clone(),
            disease: self.disease.clone(),
            change_points: self.change_points.clone(),
            cause_specific: self.cause_specific,
        }
    }

    pub fn priors(&self) -> PriorSpec {
        PriorSpec {
            overrides: self.priors.clone(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MortalityConfig {
    /// `year,age,sex,mx` surface; needed by `project-mortality`.
    #[serde(default)]
    pub surface: Option<PathBuf>,
    /// Sexes to project; defaults to those in the profile.
    #[serde(default)]
    pub sexes: Vec<Sex>,
    pub target_year: i32,
    /// Its `seed` is derived from the run seed.
    #[serde(default)]
    pub lee_carter: LeeCarterConfig,
    /// Ages and sexes of the cohort to mimic.
    #[serde(default)]
    pub profile: Vec<ProfileEntry>,
    /// Age at death to share of deaths from the cause of interest.
    #[serde(default)]
    pub cause_proportions: Option<BTreeMap<u32, f64>>,
    /// Let each synthetic person age through successive projected years
    /// instead of holding the target year fixed.
    #[serde(default)]
    pub along_trajectories: bool,
    /// First age of the cohort survival table; defaults to the youngest
    /// profile age.
    #[serde(default)]
    pub cohort_start_age: Option<u32>,
    /// Projected-rate files read by `synthesize`; default to the
    /// `project-mortality` outputs.
    #[serde(default)]
    pub rates: BTreeMap<Sex, PathBuf>,
}

impl MortalityConfig {
    pub fn sexes(&self) -> Vec<Sex> {
        let mut s = if self.sexes.is_empty() {
            self.profile.iter().map(|p| p.sex).collect()
        } else {
            self.sexes.clone()
        };
        s.sort();
        s.dedup();
        s
    }
}

fn default_methods() -> Vec<ExtrapolationMethod> {
    vec![ExtrapolationMethod::Baseline]
}

fn default_step() -> f64 {
    1.0
}

fn baseline() -> ExtrapolationMethod {
    ExtrapolationMethod::Baseline
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtrapolationConfig {
    #[serde(default = "default_methods")]
    pub methods: Vec<ExtrapolationMethod>,
    /// Grid spacing in the run unit.
    #[serde(default = "default_step")]
    pub step: f64,
    /// Grid end; defaults to the time at which the youngest person in the
    /// profile or the disease data would reach age 110.
    #[serde(default)]
    pub horizon: Option<f64>,
    /// Defaults to the last disease observation.
    #[serde(default)]
    pub follow_up_end: Option<f64>,
    /// Posterior draws; defaults to the `fit` output.
    #[serde(default)]
    pub draws: Option<PathBuf>,
    /// Also write the fitted population curve.
    #[serde(default)]
    pub population_curve: bool,
    #[serde(default)]
    pub hazard_ratio: Option<HrArmConfig>,
}

/// A comparator arm derived from a disease curve by a hazard ratio.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HrArmConfig {
    pub value: HazardRatio,
    /// Disease terms the ratio applies to; all terms when absent.
    #[serde(default)]
    pub mask: Option<Vec<usize>>,
    /// Extrapolation of the source curve.
    #[serde(default = "baseline")]
    pub method: ExtrapolationMethod,
    /// Free text copied verbatim into the run metadata, e.g. the caveat
    /// that the ratio was estimated under proportional hazards.
    #[serde(default)]
    pub note: Option<String>,
}

/// Life years gained by `treatment` over `control`, named `group/method`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LygPair {
    pub treatment: String,
    pub control: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimandsConfig {
    /// Survival level below which a curve counts as closed.
    pub threshold: f64,
    /// Restricted-mean horizon; defaults to each curve's end of follow-up.
    pub restriction_time: Option<f64>,
    /// Curve files; default to those listed by `extrapolate`.
    pub curves: Vec<PathBuf>,
    /// Defaults to every derived arm against its source curve.
    pub lyg: Vec<LygPair>,
    pub density_points: usize,
}

impl Default for EstimandsConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            restriction_time: None,
            curves: Vec::new(),
            lyg: Vec::new(),
            density_points: 512,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KmConfig {
    pub grid_points: usize,
    /// Kernel bandwidth; defaults to the event-time rule.
    pub bandwidth: Option<f64>,
}

impl Default for KmConfig {
    fn default() -> Self {
        Self {
            grid_points: 101,
            bandwidth: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    /// True constrained values of every model parameter, by name.
    pub parameters: BTreeMap<String, f64>,
    pub groups: BTreeMap<GroupKind, GroupSimulation>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSimulation {
    pub n: usize,
    #[serde(default)]
    pub censoring: Censoring,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    /// Row label to fit report.
    pub reports: BTreeMap<String, PathBuf>,
}

impl RunConfig {
    /// Parses a config, reporting the path of the offending field.
    pub fn from_json(text: &str) -> CliResult<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            if path == "." {
                CliError::Config(inner.to_string())
            } else {
                CliError::Config(format!("{path}: {inner}"))
            }
        })
    }

    /// Hex SHA-256 of the compact JSON of the effective config with keys
    /// sorted and the output location removed.
    pub fn fingerprint(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        let value = serde_json::to_value(&c).expect("config serialises");
        let bytes = serde_json::to_vec(&value).expect("config serialises");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Checks that the blocks present are internally consistent. Files are
    /// checked by the subcommands that read them.
    pub fn validate(&self) -> CliResult<()> {
        self.sampler.validate().map_err(at_field("sampler"))?;
        if let Some(m) = &self.model {
            m.spec().validate().map_err(at_field("model"))?;
        }
        if let Some(m) = &self.mortality {
            for (i, p) in m.profile.iter().enumerate() {
                if p.count == 0 {
                    return Err(CliError::Config(format!(
                        "mortality.profile[{i}].count: must be positive"
                    )));
                }
            }
            if let Some(props) = &m.cause_proportions {
                if props.is_empty() {
                    return Err(CliError::Config("mortality.cause_proportions: empty map".into()));
                }
                for (age, p) in props {
                    if !(0.0..=1.0).contains(p) {
                        return Err(CliError::Config(format!(
                            "mortality.cause_proportions.{age}: {p} is not a proportion"
                        )));
                    }
                }
            }
        }
        if let Some(x) = &self.extrapolation {
            if x.methods.is_empty() {
                return Err(CliError::Config(
                    "extrapolation.methods: name at least one method".into(),
                ));
            }
            let mut names = Vec::new();
            for (i, m) in x.methods.iter().enumerate() {
                m.validate().map_err(at_field(&format!("extrapolation.methods[{i}]")))?;
                let name = method_name(m);
                if names.contains(&name) {
                    return Err(CliError::Config(format!(
                        "extrapolation.methods[{i}]: {name} is requested twice"
                    )));
                }
                names.push(name);
            }
            if !(x.step.is_finite() && x.step > 0.0) {
                return Err(CliError::Config(format!(
                    "extrapolation.step: must be positive, got {}",
                    x.step
                )));
            }
            if let Some(h) = x.horizon {
                if !(h.is_finite() && h > 0.0) {
                    return Err(CliError::Config(format!(
                        "extrapolation.horizon: must be positive, got {h}"
                    )));
                }
            }
            if let Some(hr) = &x.hazard_ratio {
                hr.value
                    .validate()
                    .map_err(at_field("extrapolation.hazard_ratio.value"))?;
                hr.method
                    .validate()
                    .map_err(at_field("extrapolation.hazard_ratio.method"))?;
                if hr.mask.is_some()
                    && matches!(
                        hr.method,
                        ExtrapolationMethod::ConstantDifference { .. } | ExtrapolationMethod::ConstantRatio { .. }
                    )
                {
                    return Err(CliError::Config(
                        "extrapolation.hazard_ratio.mask: the constant-difference and constant-ratio methods act on the whole hazard and take no mask"
                            .into(),
                    ));
                }
            }
        }
        let e = &self.estimands;
        if !(e.threshold > 0.0 && e.threshold < 1.0) {
            return Err(CliError::Config(format!(
                "estimands.threshold: must lie in (0, 1), got {}",
                e.threshold
            )));
        }
        if let Some(tau) = e.restriction_time {
            if !(tau.is_finite() && tau > 0.0) {
                return Err(CliError::Config(format!(
                    "estimands.restriction_time: must be positive, got {tau}"
                )));
            }
        }
        if e.density_points < 2 {
            return Err(CliError::Config("estimands.density_points: need at least 2".into()));
        }
        if self.km.grid_points < 2 {
            return Err(CliError::Config("km.grid_points: need at least 2".into()));
        }
        if let Some(b) = self.km.bandwidth {
            if !(b.is_finite() && b > 0.0) {
                return Err(CliError::Config(format!("km.bandwidth: must be positive, got {b}")));
            }
        }
        if let Some(s) = &self.simulate {
            for (kind, g) in &s.groups {
                if g.n == 0 {
                    let key = serde_json::to_value(kind).expect("kind serialises");
                    return Err(CliError::Config(format!(
                        "simulate.groups.{}.n: must be positive",
                        key.as_str().unwrap_or_default()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Name of a method's curve: its label plus the window when it has one.
pub fn method_name(m: &ExtrapolationMethod) -> String {
    match m {
        ExtrapolationMethod::Baseline => m.label().to_string(),
        ExtrapolationMethod::ConstantDifference { window }
        | ExtrapolationMethod::ConstantRatio { window }
        | ExtrapolationMethod::PseudoCsDifference { window, .. }
        | ExtrapolationMethod::PseudoCsRatio { window, .. } => format!("{}-k{window}", m.label()),
    }
}
