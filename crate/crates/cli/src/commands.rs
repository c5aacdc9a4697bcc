//! One function per subcommand. Stages hand over through files in the
//! output directory so that each can be re-run on its own.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use polyanchor::datasets::{
    default_bandwidth, empirical_hazard, kaplan_meier, load_digitized_curve, load_survival_csv, reconstruct_ipd,
    write_km_csv, write_survival_csv, SurvivalDataset, TimeUnit,
};
use polyanchor::estimands::{
    life_years_gained, mean_survival, restricted_mean_survival, write_density_csv, write_estimand_draws_csv,
    EstimandResult,
};
use polyanchor::extrapolate::{
    derive_hr_arm, extrapolate, load_curve_csv, population_curve, write_curve_csv, write_curve_summary_csv,
    ExtrapolatedCurve, TimeGrid,
};
use polyanchor::inference::{fit, fit_report, load_draws_csv, write_draws_csv, FitReport, InformationCriteria};
use polyanchor::io::csv_writer;
use polyanchor::model::{GroupKind, JointModel, ModelData};
use polyanchor::mortality::{
    cohort_survival, fit_lee_carter, load_mortality_csv, load_rates_csv, project_rates,
    project_rates_along_trajectories, synthesize_cohort, write_rates_csv, LeeCarterConfig, ProjectedRates,
};
use polyanchor::simulate::simulate_group;
use polyanchor::stats::{linspace, mean, quantile};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{method_name, DatasetRef, MortalityConfig, RunConfig};
use crate::error::{at_field, CliError, CliResult};
use crate::output::Output;

/// Offsets that give each random stage its own stream from the run seed.
mod stage {
    pub const LEE_CARTER: u64 = 1;
    pub const PROJECTION: u64 = 2;
    pub const SYNTHESIS: u64 = 3;
    pub const HAZARD_RATIO: u64 = 4;
    pub const SIMULATION: u64 = 5;
}

fn stage_seed(seed: u64, stage: u64, index: u64) -> u64 {
    seed.wrapping_add(stage.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(index.wrapping_mul(0xbf58_476d_1ce4_e5b9))
}

pub struct Ctx {
    pub cfg: RunConfig,
    /// Directory against which relative input paths are resolved.
    pub base: PathBuf,
    pub out: Output,
}

impl Ctx {
    fn input(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    fn existing(&self, p: &Path, field: &str) -> CliResult<PathBuf> {
        let q = self.input(p);
        if q.is_file() {
            Ok(q)
        } else {
            Err(CliError::Config(format!("{field}: file not found: {}", q.display())))
        }
    }

    fn header(&self) -> Vec<String> {
        self.out.header()
    }

    fn unit(&self) -> TimeUnit {
        self.cfg.time_unit
    }

    fn unit_name(&self) -> &'static str {
        match self.unit() {
            TimeUnit::Months => "months",
            TimeUnit::Years => "years",
        }
    }

    fn seed(&self, stage: u64, index: u64) -> u64 {
        stage_seed(self.cfg.seed, stage, index)
    }
}

fn require<'a, T>(block: &'a Option<T>, field: &str, command: &str) -> CliResult<&'a T> {
    block
        .as_ref()
        .ok_or_else(|| CliError::Config(format!("{field}: block required by `{command}`")))
}

fn kind_name(kind: GroupKind) -> String {
    serde_json::to_value(kind)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn data_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn flush(w: &mut csv::Writer<fs::File>, path: &Path) -> CliResult<()> {
    w.flush().map_err(|e| data_err(path, e))
}

fn load_dataset(ctx: &Ctx, field: &str, r: &DatasetRef) -> CliResult<SurvivalDataset> {
    let path = ctx.existing(r.path(), field)?;
    let unit = r.time_unit().unwrap_or(ctx.unit());
    let d = load_survival_csv(&path, unit)?.converted(ctx.unit());
    match r.group() {
        Some(g) => d.filter_group(g).map_err(|e| data_err(&path, e)),
        None => Ok(d),
    }
}

fn model_data(ctx: &Ctx) -> CliResult<ModelData> {
    let mut data = ModelData::default();
    for (field, kind, r) in ctx.cfg.data.datasets() {
        let d = Some(load_dataset(ctx, field, r)?);
        match kind {
            GroupKind::Disease => data.disease = d,
            GroupKind::Population => data.population = d,
            GroupKind::CauseOfInterest => data.cause_of_interest = d,
            GroupKind::OtherCauses => data.other_causes = d,
        }
    }
    Ok(data)
}

fn build_model(ctx: &Ctx, data: ModelData, command: &str) -> CliResult<JointModel> {
    let m = require(&ctx.cfg.model, "model", command)?;
    JointModel::new(m.spec(), &m.priors(), data, ctx.unit()).map_err(at_field("model"))
}

fn write_dataset(ctx: &Ctx, name: &str, d: &SurvivalDataset) -> CliResult<()> {
    let path = ctx.out.path(name);
    write_survival_csv(&path, d, &ctx.header())?;
    ctx.out.wrote(&path);
    Ok(())
}

fn write_km(ctx: &Ctx, name: &str, d: &SurvivalDataset) -> CliResult<()> {
    let path = ctx.out.path(name);
    write_km_csv(&path, &kaplan_meier(d), &ctx.header())?;
    ctx.out.wrote(&path);
    Ok(())
}

pub fn project_mortality(ctx: &Ctx) -> CliResult<()> {
    let m = require(&ctx.cfg.mortality, "mortality", "project-mortality")?;
    let surface_path = match &m.surface {
        Some(p) => ctx.existing(p, "mortality.surface")?,
        None => {
            return Err(CliError::Config(
                "mortality.surface: required by `project-mortality`".into(),
            ))
        }
    };
    let sexes = m.sexes();
    if sexes.is_empty() {
        return Err(CliError::Config(
            "mortality.sexes: name at least one sex or give a profile".into(),
        ));
    }
    let mut rates = BTreeMap::new();
    let mut summary = BTreeMap::new();
    for (i, &sex) in sexes.iter().enumerate() {
        let surface = load_mortality_csv(&surface_path, sex)?;
        if m.target_year <= surface.last_year() {
            return Err(CliError::Config(format!(
                "mortality.target_year: {} must be after the last observed year {}",
                m.target_year,
                surface.last_year()
            )));
        }
        let lc = LeeCarterConfig {
            seed: ctx.seed(stage::LEE_CARTER, i as u64),
            ..m.lee_carter.clone()
        };
        let post = fit_lee_carter(&surface, &lc).map_err(at_field("mortality.lee_carter"))?;
        let seed = ctx.seed(stage::PROJECTION, i as u64);
        let projected = if m.along_trajectories {
            project_rates_along_trajectories(&post, m.target_year, surface.n_ages(), seed)?
        } else {
            project_rates(&post, m.target_year, seed)?
        };
        let path = ctx.out.path(&format!("projected_rates_{sex}.csv"));
        write_rates_csv(&path, &projected, &ctx.header())?;
        ctx.out.wrote(&path);
        let start = m
            .cohort_start_age
            .or_else(|| m.profile.iter().filter(|p| p.sex == sex).map(|p| p.age).min())
            .unwrap_or(projected.first_age);
        write_cohort_survival(ctx, &format!("cohort_survival_{sex}.csv"), &projected, start)?;
        let drifts: Vec<f64> = post.draws.iter().map(|d| d.drift).collect();
        summary.insert(
            sex.to_string(),
            json!({
                "first_year": surface.first_year(),
                "last_year": surface.last_year(),
                "steps_ahead": m.target_year - surface.last_year(),
                "first_age": surface.first_age(),
                "n_ages": surface.n_ages(),
                "n_draws": post.draws.len(),
                "drift_mean": post.mean_drift(),
                "drift_q025": quantile(&drifts, 0.025),
                "drift_q975": quantile(&drifts, 0.975),
            }),
        );
        rates.insert(sex, projected);
    }
    ctx.out.write_json(
        "mortality.json",
        &json!({
            "target_year": m.target_year,
            "along_trajectories": m.along_trajectories,
            "sexes": summary,
        }),
    )?;
    if m.profile.is_empty() {
        ctx.out
            .note("no mortality.profile given; skipping the synthetic cohort");
        Ok(())
    } else {
        write_synthetic_cohort(ctx, m, &rates)
    }
}

fn write_cohort_survival(ctx: &Ctx, name: &str, rates: &ProjectedRates, start: u32) -> CliResult<()> {
    if start < rates.first_age || start > rates.max_age() {
        return Err(CliError::Config(format!(
            "mortality.cohort_start_age: {start} outside projected ages {}..={}",
            rates.first_age,
            rates.max_age()
        )));
    }
    let path = ctx.out.path(name);
    let mut w = csv_writer(&path, &ctx.header())?;
    w.write_record(["years", "age", "survival_mean", "survival_lower", "survival_upper"])
        .map_err(|e| data_err(&path, e))?;
    for j in 0..=(rates.max_age() + 1 - start) {
        let s = cohort_survival(rates, start, j)?;
        w.write_record([
            j.to_string(),
            (start + j).to_string(),
            mean(&s).to_string(),
            quantile(&s, 0.025).to_string(),
            quantile(&s, 0.975).to_string(),
        ])
        .map_err(|e| data_err(&path, e))?;
    }
    flush(&mut w, &path)?;
    ctx.out.wrote(&path);
    Ok(())
}

fn write_synthetic_cohort(
    ctx: &Ctx,
    m: &MortalityConfig,
    rates: &BTreeMap<polyanchor::datasets::Sex, ProjectedRates>,
) -> CliResult<()> {
    let cohort = synthesize_cohort(
        rates,
        &m.profile,
        m.cause_proportions.as_ref(),
        "population",
        ctx.seed(stage::SYNTHESIS, 0),
    )
    .map_err(at_field("mortality.profile"))?;
    let unit = ctx.unit();
    let all = cohort.all_causes.converted(unit);
    write_dataset(ctx, "synthetic_population.csv", &all)?;
    write_km(ctx, "synthetic_km.csv", &all)?;
    if let Some(d) = &cohort.cause_of_interest {
        write_dataset(ctx, "synthetic_cause_of_interest.csv", &d.converted(unit))?;
    }
    if let Some(d) = &cohort.other_causes {
        write_dataset(ctx, "synthetic_other_causes.csv", &d.converted(unit))?;
    }
    Ok(())
}

pub fn synthesize(ctx: &Ctx) -> CliResult<()> {
    let m = require(&ctx.cfg.mortality, "mortality", "synthesize")?;
    if m.profile.is_empty() {
        return Err(CliError::Config("mortality.profile: required by `synthesize`".into()));
    }
    if m.along_trajectories {
        ctx.out
            .warn("rate files hold the target year only; run project-mortality to synthesize along trajectories");
    }
    let mut rates = BTreeMap::new();
    for sex in m.sexes() {
        let field = format!("mortality.rates.{sex}");
        let path = match m.rates.get(&sex) {
            Some(p) => ctx.existing(p, &field)?,
            None => {
                let p = ctx.out.path(&format!("projected_rates_{sex}.csv"));
                if !p.is_file() {
                    return Err(CliError::Config(format!(
                        "{field}: not given and {} not found; run project-mortality first",
                        p.display()
                    )));
                }
                p
            }
        };
        rates.insert(sex, load_rates_csv(&path, m.target_year)?);
    }
    write_synthetic_cohort(ctx, m, &rates)
}

pub fn fit_command(ctx: &Ctx) -> CliResult<()> {
    let data = model_data(ctx)?;
    let model = build_model(ctx, data, "fit")?;
    if model.n_observations() == 0 {
        return Err(CliError::Config("data: `fit` needs at least one dataset".into()));
    }
    let start = Instant::now();
    let samples = fit(&model, &ctx.cfg.sampler)?;
    let time_s = ctx.cfg.record_wall_time.then(|| start.elapsed().as_secs_f64());
    let report = fit_report(&samples, &model, time_s)?;
    let path = ctx.out.path("draws.csv");
    write_draws_csv(&path, &samples, &ctx.header())?;
    ctx.out.wrote(&path);
    ctx.out.write_json("fit_report.json", &report)?;
    for n in &report.notices {
        ctx.out.warn(n);
    }
    Ok(())
}

/// One curve written by `extrapolate`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CurveEntry {
    /// `group/method`
    pub name: String,
    pub file: String,
    pub summary_file: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub adjustment_means: BTreeMap<String, f64>,
    /// Curve this one was derived from, for default life-years-gained pairs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derived_from: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExtrapolationReport {
    pub time_unit: TimeUnit,
    pub follow_up_end: f64,
    pub t_star: f64,
    pub step: f64,
    pub horizon: f64,
    pub n_draws: usize,
    pub curves: Vec<CurveEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hazard_ratio: Option<serde_json::Value>,
}

fn default_horizon(ctx: &Ctx, data: &ModelData) -> CliResult<f64> {
    let from_profile = ctx
        .cfg
        .mortality
        .as_ref()
        .and_then(|m| m.profile.iter().map(|p| p.age).min());
    let from_data = data
        .disease
        .as_ref()
        .and_then(|d| d.records().iter().filter_map(|r| r.age).min());
    match from_profile.or(from_data) {
        Some(age) if age < 110 => Ok((110 - age) as f64 * ctx.unit().per_year()),
        _ => Err(CliError::Config(
            "extrapolation.horizon: required when no ages below 110 are known from mortality.profile or the disease data"
                .into(),
        )),
    }
}

fn write_curve(ctx: &Ctx, curve: &ExtrapolatedCurve, derived_from: Option<String>) -> CliResult<CurveEntry> {
    let stem = format!("{}_{}", curve.group, curve.method);
    let file = format!("curve_{stem}.csv");
    let summary_file = format!("summary_{stem}.csv");
    let path = ctx.out.path(&file);
    write_curve_csv(&path, curve, &ctx.header())?;
    ctx.out.wrote(&path);
    let adjustment_means: BTreeMap<String, f64> = curve.adjustment_means().into_iter().collect();
    let mut header = ctx.header();
    header.extend(
        adjustment_means
            .iter()
            .map(|(k, v)| format!("adjustment {k} posterior_mean={v}")),
    );
    let path = ctx.out.path(&summary_file);
    write_curve_summary_csv(&path, curve, &header)?;
    ctx.out.wrote(&path);
    if !curve.adjustment_names.is_empty() {
        let path = ctx.out.path(&format!("adjustments_{stem}.csv"));
        let mut w = csv_writer(&path, &ctx.header())?;
        let mut cols = vec!["draw".to_string()];
        cols.extend(curve.adjustment_names.iter().cloned());
        w.write_record(&cols).map_err(|e| data_err(&path, e))?;
        for (d, a) in curve.adjustments.iter().enumerate() {
            let mut row = vec![d.to_string()];
            row.extend(a.iter().map(f64::to_string));
            w.write_record(&row).map_err(|e| data_err(&path, e))?;
        }
        flush(&mut w, &path)?;
        ctx.out.wrote(&path);
    }
    let warnings: Vec<String> = [curve.tail_warning(ctx.cfg.estimands.threshold), curve.floor_warning()]
        .into_iter()
        .flatten()
        .collect();
    for w in &warnings {
        ctx.out.warn(w);
    }
    Ok(CurveEntry {
        name: format!("{}/{}", curve.group, curve.method),
        file,
        summary_file,
        adjustment_means,
        derived_from,
        warnings,
    })
}

pub fn extrapolate_command(ctx: &Ctx) -> CliResult<()> {
    let x = require(&ctx.cfg.extrapolation, "extrapolation", "extrapolate")?;
    let data = model_data(ctx)?;
    let follow_up = match x.follow_up_end {
        Some(t) => t,
        None => data.disease.as_ref().map(SurvivalDataset::max_time).ok_or_else(|| {
            CliError::Config("extrapolation.follow_up_end: required when data.disease is not given".into())
        })?,
    };
    let horizon = match x.horizon {
        Some(h) => h,
        None => default_horizon(ctx, &data)?,
    };
    let model = build_model(ctx, data, "extrapolate")?;
    let draws_path = match &x.draws {
        Some(p) => ctx.existing(p, "extrapolation.draws")?,
        None => {
            let p = ctx.out.path("draws.csv");
            if !p.is_file() {
                return Err(CliError::Config(format!(
                    "extrapolation.draws: not given and {} not found; run fit first",
                    p.display()
                )));
            }
            p
        }
    };
    let samples = load_draws_csv(&draws_path, model.layout())?;
    let grid = TimeGrid::new(x.step, horizon, follow_up).map_err(at_field("extrapolation"))?;

    let mut methods = x.methods.clone();
    if let Some(hr) = &x.hazard_ratio {
        if !methods.iter().any(|m| method_name(m) == method_name(&hr.method)) {
            methods.push(hr.method.clone());
        }
    }
    let mut entries = Vec::new();
    for (i, method) in methods.iter().enumerate() {
        let mut curve = extrapolate(&model, &samples.draws, &grid, method)
            .map_err(at_field(&format!("extrapolation.methods[{i}]")))?;
        curve.method = method_name(method);
        entries.push(write_curve(ctx, &curve, None)?);
    }
    if x.population_curve {
        let curve = population_curve(&model, &samples.draws, &grid)?;
        entries.push(write_curve(ctx, &curve, None)?);
    }
    let mut hr_meta = None;
    if let Some(hr) = &x.hazard_ratio {
        let ratios = hr.value.draws(samples.len(), ctx.seed(stage::HAZARD_RATIO, 0))?;
        let mut curve = derive_hr_arm(&model, &samples.draws, &grid, &hr.method, &ratios, hr.mask.as_deref())
            .map_err(at_field("extrapolation.hazard_ratio"))?;
        curve.method = method_name(&hr.method);
        let source = format!("disease/{}", curve.method);
        entries.push(write_curve(ctx, &curve, Some(source.clone()))?);
        hr_meta = Some(json!({
            "value": hr.value,
            "mask": hr.mask,
            "applied_to": source,
            "draw_mean": mean(&ratios),
            "note": hr.note,
        }));
    }
    let report = ExtrapolationReport {
        time_unit: ctx.unit(),
        follow_up_end: follow_up,
        t_star: grid.t_star(),
        step: x.step,
        horizon,
        n_draws: samples.len(),
        curves: entries,
        hazard_ratio: hr_meta,
    };
    ctx.out.write_json("extrapolation.json", &report)?;
    Ok(())
}

#[derive(Serialize)]
struct KmRestrictedMean {
    /// Area under the Kaplan-Meier curve up to `tau`, with no tail model.
    label: &'static str,
    tau: f64,
    value: f64,
    units: String,
}

#[derive(Serialize)]
struct EstimandsReport {
    time_unit: TimeUnit,
    threshold: f64,
    mean_survival: Vec<EstimandResult>,
    restricted_mean_survival: Vec<EstimandResult>,
    life_years_gained: Vec<EstimandResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    km_restricted_mean: Option<KmRestrictedMean>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    warnings: Vec<String>,
}

pub fn estimands_command(ctx: &Ctx) -> CliResult<()> {
    let e = &ctx.cfg.estimands;
    let mut files = Vec::new();
    let mut listed: Option<ExtrapolationReport> = None;
    if e.curves.is_empty() {
        let report_path = ctx.out.path("extrapolation.json");
        if !report_path.is_file() {
            return Err(CliError::Config(format!(
                "estimands.curves: none given and {} not found; run extrapolate first",
                report_path.display()
            )));
        }
        let text = fs::read_to_string(&report_path).map_err(|err| data_err(&report_path, err))?;
        let report: ExtrapolationReport = serde_json::from_str(&text).map_err(|err| data_err(&report_path, err))?;
        for c in &report.curves {
            let p = ctx.out.path(&c.file);
            if !p.is_file() {
                return Err(CliError::Data(format!(
                    "{}: curve file listed in {} not found",
                    p.display(),
                    report_path.display()
                )));
            }
            files.push(p);
        }
        listed = Some(report);
    } else {
        for (i, p) in e.curves.iter().enumerate() {
            files.push(ctx.existing(p, &format!("estimands.curves[{i}]"))?);
        }
    }

    let mut curves: BTreeMap<String, ExtrapolatedCurve> = BTreeMap::new();
    let mut order = Vec::new();
    for p in &files {
        let c = load_curve_csv(p)?;
        let name = format!("{}/{}", c.group, c.method);
        if curves.contains_key(&name) {
            return Err(CliError::Config(format!(
                "estimands.curves: two files hold curve {name}"
            )));
        }
        order.push(name.clone());
        curves.insert(name, c);
    }

    let units = ctx.unit_name();
    let mut means = Vec::new();
    let mut rms = Vec::new();
    for name in &order {
        let c = &curves[name];
        means.push(mean_survival(c, e.threshold, units)?);
        let tau = e.restriction_time.unwrap_or_else(|| c.t_star());
        rms.push(restricted_mean_survival(c, tau, units).map_err(at_field("estimands.restriction_time"))?);
    }

    let pairs: Vec<(String, String)> = if e.lyg.is_empty() {
        listed
            .iter()
            .flat_map(|r| &r.curves)
            .filter_map(|c| c.derived_from.clone().map(|src| (c.name.clone(), src)))
            .filter(|(_, src)| curves.contains_key(src))
            .collect()
    } else {
        e.lyg.iter().map(|p| (p.treatment.clone(), p.control.clone())).collect()
    };
    let known = order.join(", ");
    let mut lyg = Vec::new();
    for (i, (t, c)) in pairs.iter().enumerate() {
        let get = |name: &str, role: &str| {
            curves.get(name).ok_or_else(|| {
                CliError::Config(format!(
                    "estimands.lyg[{i}].{role}: no curve named {name} (have: {known})"
                ))
            })
        };
        let (ct, cc) = (get(t, "treatment")?, get(c, "control")?);
        lyg.push(life_years_gained(ct, cc, e.threshold, units).map_err(at_field(&format!("estimands.lyg[{i}]")))?);
    }

    let km_restricted_mean = match &ctx.cfg.data.disease {
        Some(r) => {
            let d = load_dataset(ctx, "data.disease", r)?;
            let tau = e.restriction_time.unwrap_or_else(|| d.max_time());
            Some(KmRestrictedMean {
                label: "Kaplan-Meier restricted mean (no tail extrapolation)",
                tau,
                value: kaplan_meier(&d).restricted_mean(tau),
                units: units.to_string(),
            })
        }
        None => None,
    };

    let mut warnings: Vec<String> = Vec::new();
    for w in means.iter().chain(&rms).chain(&lyg).flat_map(|r| &r.warnings) {
        if !warnings.contains(w) {
            warnings.push(w.clone());
        }
    }
    for w in &warnings {
        ctx.out.warn(w);
    }

    let all: Vec<EstimandResult> = means.iter().chain(&rms).chain(&lyg).cloned().collect();
    let path = ctx.out.path("estimand_draws.csv");
    write_estimand_draws_csv(&path, &all, &ctx.header())?;
    ctx.out.wrote(&path);
    if !lyg.is_empty() {
        let mut header = ctx.header();
        header.extend(lyg.iter().map(|r| format!("mean {}={}", r.name, r.mean)));
        let path = ctx.out.path("lyg_density.csv");
        write_density_csv(&path, &lyg, e.density_points, &header)?;
        ctx.out.wrote(&path);
    }
    ctx.out.write_json(
        "estimands.json",
        &EstimandsReport {
            time_unit: ctx.unit(),
            threshold: e.threshold,
            mean_survival: means,
            restricted_mean_survival: rms,
            life_years_gained: lyg,
            km_restricted_mean,
            warnings,
        },
    )?;
    Ok(())
}

pub fn km_command(ctx: &Ctx) -> CliResult<()> {
    let sets = ctx.cfg.data.datasets();
    if sets.is_empty() {
        return Err(CliError::Config("data: `km` needs at least one dataset".into()));
    }
    for (field, kind, r) in sets {
        let d = load_dataset(ctx, field, r)?;
        let name = kind_name(kind);
        write_km(ctx, &format!("km_{name}.csv"), &d)?;
        let bandwidth = match ctx.cfg.km.bandwidth {
            Some(b) => b,
            None => match default_bandwidth(&d) {
                Ok(b) => b,
                Err(e) => {
                    ctx.out.warn(&format!("{field}: no kernel hazard: {e}"));
                    continue;
                }
            },
        };
        let grid = linspace(0.0, d.max_time(), ctx.cfg.km.grid_points);
        let hazard = empirical_hazard(&d, bandwidth, &grid).map_err(at_field("km"))?;
        let path = ctx.out.path(&format!("hazard_{name}.csv"));
        let mut header = ctx.header();
        header.push(format!("bandwidth={bandwidth}"));
        let mut w = csv_writer(&path, &header)?;
        w.write_record(["time", "hazard"]).map_err(|e| data_err(&path, e))?;
        for (t, h) in hazard {
            w.write_record([t.to_string(), h.to_string()])
                .map_err(|e| data_err(&path, e))?;
        }
        flush(&mut w, &path)?;
        ctx.out.wrote(&path);
    }
    Ok(())
}

pub fn reconstruct_ipd_command(ctx: &Ctx) -> CliResult<()> {
    let d = require(&ctx.cfg.data.digitized, "data.digitized", "reconstruct-ipd")?;
    let curve_path = ctx.existing(&d.curve, "data.digitized.curve")?;
    let risk = d
        .risk_table
        .as_ref()
        .map(|p| ctx.existing(p, "data.digitized.risk_table"))
        .transpose()?;
    let curve = load_digitized_curve(&curve_path, risk.as_deref(), d.total_n)?;
    let unit = d.time_unit.unwrap_or(ctx.unit());
    let ipd = reconstruct_ipd(&curve, unit)?.converted(ctx.unit());
    let ipd = match &d.group {
        Some(g) => {
            let records = ipd
                .into_records()
                .into_iter()
                .map(|mut r| {
                    r.group = g.clone();
                    r
                })
                .collect();
            SurvivalDataset::new(records, ctx.unit())?
        }
        None => ipd,
    };
    write_dataset(ctx, "ipd.csv", &ipd)?;
    write_km(ctx, "ipd_km.csv", &ipd)
}

pub fn simulate_command(ctx: &Ctx) -> CliResult<()> {
    let s = require(&ctx.cfg.simulate, "simulate", "simulate")?;
    let model = build_model(ctx, ModelData::default(), "simulate")?;
    let names = model.layout().names();
    for k in s.parameters.keys() {
        if !names.contains(k) {
            return Err(CliError::Config(format!(
                "simulate.parameters.{k}: unknown parameter (known: {})",
                names.join(", ")
            )));
        }
    }
    let theta = names
        .iter()
        .map(|n| {
            s.parameters
                .get(n)
                .copied()
                .ok_or_else(|| CliError::Config(format!("simulate.parameters: missing value for {n}")))
        })
        .collect::<CliResult<Vec<f64>>>()?;
    if s.groups.is_empty() {
        return Err(CliError::Config("simulate.groups: name at least one group".into()));
    }
    let mut summary = BTreeMap::new();
    for (i, (&kind, g)) in s.groups.iter().enumerate() {
        let name = kind_name(kind);
        let d = simulate_group(
            &model,
            kind,
            &theta,
            g.n,
            &g.censoring,
            ctx.seed(stage::SIMULATION, i as u64),
        )
        .map_err(at_field(&format!("simulate.groups.{name}")))?;
        write_dataset(ctx, &format!("sim_{name}.csv"), &d)?;
        summary.insert(
            name,
            json!({ "n": d.len(), "events": d.n_events(), "max_time": d.max_time() }),
        );
    }
    ctx.out.write_json(
        "simulate.json",
        &json!({ "parameters": s.parameters, "groups": summary, "time_unit": ctx.unit() }),
    )?;
    Ok(())
}

pub fn compare_command(ctx: &Ctx) -> CliResult<()> {
    let c = require(&ctx.cfg.compare, "compare", "compare")?;
    if c.reports.is_empty() {
        return Err(CliError::Config("compare.reports: name at least one fit report".into()));
    }
    let mut rows: BTreeMap<String, InformationCriteria> = BTreeMap::new();
    for (label, p) in &c.reports {
        let path = ctx.existing(p, &format!("compare.reports.{label}"))?;
        let text = fs::read_to_string(&path).map_err(|e| data_err(&path, e))?;
        let report: FitReport = serde_json::from_str(&text).map_err(|e| data_err(&path, e))?;
        let crit = report
            .criteria
            .ok_or_else(|| CliError::Data(format!("{}: report has no information criteria", path.display())))?;
        rows.insert(label.clone(), crit);
    }
    let path = ctx.out.path("comparison.csv");
    let mut w = csv_writer(&path, &ctx.header())?;
    w.write_record(["model", "AIC", "BIC", "DIC", "DIC2", "WAIC", "p_D", "p_V", "p_W", "p"])
        .map_err(|e| data_err(&path, e))?;
    for (label, r) in &rows {
        let cells = [r.aic, r.bic, r.dic, r.dic2, r.waic, r.p_d, r.p_v, r.p_w];
        let mut row = vec![label.clone()];
        row.extend(cells.iter().map(f64::to_string));
        row.push(r.p.to_string());
        w.write_record(&row).map_err(|e| data_err(&path, e))?;
    }
    flush(&mut w, &path)?;
    ctx.out.wrote(&path);
    ctx.out.write_json("comparison.json", &json!({ "models": rows }))?;
    Ok(())
}
