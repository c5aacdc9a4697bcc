//! Lee-Carter mortality: Bayesian fit, projection, cohort survival and
//! synthetic age-sex-matched population cohorts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, OpenClosed01, StandardNormal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

use crate::datasets::{format_float, Sex, SurvivalDataset, SurvivalRecord, TimeUnit};
use crate::error::{data, invalid, Error, Result};
use crate::io::{csv_err, csv_reader, csv_writer, io_err};

/// Log central death rates on a complete age × year grid for one sex.
#[derive(Clone, Debug, PartialEq)]
pub struct MortalitySurface {
    first_age: u32,
    first_year: i32,
    sex: Sex,
    /// `log_rates[age_index][year_index]`
    log_rates: Vec<Vec<f64>>,
}

impl MortalitySurface {
    pub fn new(first_age: u32, first_year: i32, sex: Sex, log_rates: Vec<Vec<f64>>) -> Result<Self> {
        let n_years = log_rates.first().map_or(0, Vec::len);
        if log_rates.is_empty() || n_years == 0 {
            return Err(data("mortality surface is empty"));
        }
        if log_rates.iter().any(|row| row.len() != n_years) {
            return Err(data("mortality surface is not rectangular"));
        }
        if log_rates.iter().flatten().any(|v| !v.is_finite()) {
            return Err(data("mortality surface has non-finite log rates"));
        }
        Ok(Self {
            first_age,
            first_year,
            sex,
            log_rates,
        })
    }

    pub fn n_ages(&self) -> usize {
        self.log_rates.len()
    }

    pub fn n_years(&self) -> usize {
        self.log_rates[0].len()
    }

    pub fn first_age(&self) -> u32 {
        self.first_age
    }

    pub fn first_year(&self) -> i32 {
        self.first_year
    }

    pub fn last_year(&self) -> i32 {
        self.first_year + self.n_years() as i32 - 1
    }

    pub fn sex(&self) -> Sex {
        self.sex
    }

    pub fn log_rates(&self) -> &[Vec<f64>] {
        &self.log_rates
    }
}

#[derive(Debug, Deserialize)]
struct MortalityRow {
    year: i32,
    age: u32,
    sex: String,
    mx: f64,
}

/// Reads `year,age,sex,mx` and returns the surface for `sex`.
pub fn load_mortality_csv(path: &Path, sex: Sex) -> Result<MortalitySurface> {
    let mut reader = csv_reader(path)?;
    let mut cells: BTreeMap<(u32, i32), f64> = BTreeMap::new();
    for (i, row) in reader.deserialize::<MortalityRow>().enumerate() {
        let row_err = |message: String| Error::Row {
            path: path.to_path_buf(),
            row: i + 1,
            message,
        };
        let row = row.map_err(|e| row_err(e.to_string()))?;
        let row_sex: Sex = row.sex.parse().map_err(|e: Error| row_err(e.to_string()))?;
        if row_sex != sex {
            continue;
        }
        if !(row.mx.is_finite() && row.mx > 0.0) {
            return Err(row_err(format!("mx must be > 0, got {}", row.mx)));
        }
        if cells.insert((row.age, row.year), row.mx.ln()).is_some() {
            return Err(row_err(format!("duplicate age {} year {}", row.age, row.year)));
        }
    }
    if cells.is_empty() {
        return Err(data(format!("{}: no rows for sex {sex}", path.display())));
    }
    let ages: Vec<u32> = cells
        .keys()
        .map(|k| k.0)
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let years: Vec<i32> = cells
        .keys()
        .map(|k| k.1)
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let contiguous_ages = ages.windows(2).all(|w| w[1] == w[0] + 1);
    let contiguous_years = years.windows(2).all(|w| w[1] == w[0] + 1);
    if !contiguous_ages || !contiguous_years || cells.len() != ages.len() * years.len() {
        return Err(data(format!(
            "{}: mortality table is not a complete age × year grid",
            path.display()
        )));
    }
    let log_rates = ages
        .iter()
        .map(|&a| years.iter().map(|&y| cells[&(a, y)]).collect())
        .collect();
    MortalitySurface::new(ages[0], years[0], sex, log_rates)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LeeCarterConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
}

impl Default for LeeCarterConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            burn_in: 1000,
            thin: 1,
            seed: 1,
        }
    }
}

/// One posterior draw of the Lee-Carter parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct LeeCarterDraw {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub kappa: Vec<f64>,
    pub drift: f64,
    pub sigma_v2: f64,
    pub sigma_eps2: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LeeCarterPosterior {
    pub first_age: u32,
    pub first_year: i32,
    pub sex: Sex,
    pub draws: Vec<LeeCarterDraw>,
}

impl LeeCarterPosterior {
    pub fn last_year(&self) -> i32 {
        self.first_year + self.draws[0].kappa.len() as i32 - 1
    }

    pub fn n_ages(&self) -> usize {
        self.draws[0].alpha.len()
    }

    pub fn mean_drift(&self) -> f64 {
        self.draws.iter().map(|d| d.drift).sum::<f64>() / self.draws.len() as f64
    }
}

const COEF_PRIOR_VAR: f64 = 100.0;
const KAPPA_PRIOR_VAR: f64 = 1e6;
const IG_SHAPE: f64 = 2.0;
const IG_SCALE: f64 = 0.01;

fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn inverse_gamma(rng: &mut impl Rng, shape: f64, scale: f64) -> f64 {
    let g = Gamma::new(shape, 1.0 / scale).expect("positive gamma parameters");
    1.0 / g.sample(rng)
}

/// Gibbs sampler for `y[x,t] = α_x + β_x κ_t + ε` with
/// `κ_t = u + κ_{t-1} + v_t`.
///
/// Each sweep draws the per-age `(α_x, β_x)` regressions jointly
/// conditioned on `Σβ = 1`, the period index by forward filtering and
/// backward sampling, then the drift and the two variances from their
/// conjugate conditionals. The period index is re-centred to sum to zero
/// with a compensating shift in `α`, which leaves the fitted surface
/// unchanged.
pub fn fit_lee_carter(surface: &MortalitySurface, config: &LeeCarterConfig) -> Result<LeeCarterPosterior> {
    let n_ages = surface.n_ages();
    let n_years = surface.n_years();
    if n_years < 5 || n_ages < 2 {
        return Err(invalid(format!(
            "Lee-Carter fit needs at least 5 years and 2 ages, got {n_years} × {n_ages}"
        )));
    }
    if config.iterations <= config.burn_in || config.thin == 0 {
        return Err(invalid(
            "Lee-Carter iterations must exceed burn-in and thin must be ≥ 1",
        ));
    }
    let y = surface.log_rates();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut alpha: Vec<f64> = y.iter().map(|row| row.iter().sum::<f64>() / n_years as f64).collect();
    let mut kappa: Vec<f64> = (0..n_years)
        .map(|t| (0..n_ages).map(|x| y[x][t] - alpha[x]).sum())
        .collect();
    let kk: f64 = kappa.iter().map(|k| k * k).sum();
    let mut beta: Vec<f64> = if kk > 1e-12 {
        (0..n_ages)
            .map(|x| (0..n_years).map(|t| kappa[t] * (y[x][t] - alpha[x])).sum::<f64>() / kk)
            .collect()
    } else {
        vec![1.0 / n_ages as f64; n_ages]
    };
    normalise_beta(&mut beta, &mut kappa);
    let diffs: Vec<f64> = kappa.windows(2).map(|w| w[1] - w[0]).collect();
    let mut drift = diffs.iter().sum::<f64>() / diffs.len() as f64;
    let mut sigma_v2 = (diffs.iter().map(|d| (d - drift).powi(2)).sum::<f64>() / diffs.len() as f64).max(1e-6);
    let mut sigma_eps2 = 1e-3;

    let mut draws = Vec::new();
    for iter in 0..config.iterations {
        draw_age_effects(y, &kappa, sigma_eps2, &mut alpha, &mut beta, &mut rng);
        draw_period_index(y, &alpha, &beta, drift, sigma_v2, sigma_eps2, &mut kappa, &mut rng);
        let mean_k = kappa.iter().sum::<f64>() / n_years as f64;
        for k in kappa.iter_mut() {
            *k -= mean_k;
        }
        for (a, b) in alpha.iter_mut().zip(&beta) {
            *a += b * mean_k;
        }

        let diffs: Vec<f64> = kappa.windows(2).map(|w| w[1] - w[0]).collect();
        let m = diffs.len() as f64;
        let mean_d = diffs.iter().sum::<f64>() / m;
        drift = mean_d + (sigma_v2 / m).sqrt() * normal(&mut rng);
        let ss_v: f64 = diffs.iter().map(|d| (d - drift).powi(2)).sum();
        sigma_v2 = inverse_gamma(&mut rng, IG_SHAPE + m / 2.0, IG_SCALE + ss_v / 2.0);
        let mut ss_e = 0.0;
        for x in 0..n_ages {
            for t in 0..n_years {
                ss_e += (y[x][t] - alpha[x] - beta[x] * kappa[t]).powi(2);
            }
        }
        sigma_eps2 = inverse_gamma(
            &mut rng,
            IG_SHAPE + (n_ages * n_years) as f64 / 2.0,
            IG_SCALE + ss_e / 2.0,
        );

        let finite = alpha.iter().chain(&beta).chain(&kappa).all(|v| v.is_finite())
            && drift.is_finite()
            && sigma_v2.is_finite()
            && sigma_eps2.is_finite();
        if !finite {
            return Err(Error::Sampler(format!(
                "Lee-Carter sampler diverged at iteration {iter}"
            )));
        }
        if iter >= config.burn_in && (iter - config.burn_in) % config.thin == 0 {
            let mut b = beta.clone();
            let mut k = kappa.clone();
            let mut a = alpha.clone();
            normalise_beta(&mut b, &mut k);
            let mk = k.iter().sum::<f64>() / n_years as f64;
            for kt in k.iter_mut() {
                *kt -= mk;
            }
            for (ax, bx) in a.iter_mut().zip(&b) {
                *ax += bx * mk;
            }
            draws.push(LeeCarterDraw {
                alpha: a,
                beta: b,
                kappa: k,
                drift,
                sigma_v2,
                sigma_eps2,
            });
        }
    }
    Ok(LeeCarterPosterior {
        first_age: surface.first_age(),
        first_year: surface.first_year(),
        sex: surface.sex(),
        draws,
    })
}

/// Rescales so that `Σβ = 1`, leaving `β κ` unchanged.
fn normalise_beta(beta: &mut [f64], kappa: &mut [f64]) {
    let s: f64 = beta.iter().sum();
    if s.abs() > 1e-300 {
        for b in beta.iter_mut() {
            *b /= s;
        }
        for k in kappa.iter_mut() {
            *k *= s;
        }
    }
}

fn draw_age_effects(
    y: &[Vec<f64>],
    kappa: &[f64],
    sigma_eps2: f64,
    alpha: &mut [f64],
    beta: &mut [f64],
    rng: &mut impl Rng,
) {
    let n_years = kappa.len() as f64;
    let sk: f64 = kappa.iter().sum();
    let skk: f64 = kappa.iter().map(|k| k * k).sum();
    // posterior precision is shared by all ages
    let p00 = n_years / sigma_eps2 + 1.0 / COEF_PRIOR_VAR;
    let p01 = sk / sigma_eps2;
    let p11 = skk / sigma_eps2 + 1.0 / COEF_PRIOR_VAR;
    let det = p00 * p11 - p01 * p01;
    let c00 = p11 / det;
    let c01 = -p01 / det;
    let c11 = p00 / det;
    let l00 = c00.sqrt();
    let l10 = c01 / l00;
    let l11 = (c11 - l10 * l10).max(0.0).sqrt();
    for (x, row) in y.iter().enumerate() {
        let sy: f64 = row.iter().sum::<f64>() / sigma_eps2;
        let sky: f64 = row.iter().zip(kappa).map(|(v, k)| v * k).sum::<f64>() / sigma_eps2;
        let ma = c00 * sy + c01 * sky;
        let mb = c01 * sy + c11 * sky;
        let z0 = normal(rng);
        let z1 = normal(rng);
        alpha[x] = ma + l00 * z0;
        beta[x] = mb + l10 * z0 + l11 * z1;
    }
    // exact Gaussian conditioning on Σβ = 1
    let r = (beta.iter().sum::<f64>() - 1.0) / (c11 * y.len() as f64);
    for x in 0..y.len() {
        alpha[x] -= c01 * r;
        beta[x] -= c11 * r;
    }
}

#[allow(clippy::too_many_arguments)]
fn draw_period_index(
    y: &[Vec<f64>],
    alpha: &[f64],
    beta: &[f64],
    drift: f64,
    sigma_v2: f64,
    sigma_eps2: f64,
    kappa: &mut [f64],
    rng: &mut impl Rng,
) {
    let n_years = kappa.len();
    let sbb: f64 = beta.iter().map(|b| b * b).sum();
    let obs_var = sigma_eps2 / sbb;
    let mut filt_mean = vec![0.0; n_years];
    let mut filt_var = vec![0.0; n_years];
    let (mut m, mut p) = (0.0, KAPPA_PRIOR_VAR);
    for t in 0..n_years {
        if t > 0 {
            m += drift;
            p += sigma_v2;
        }
        let obs: f64 = (0..y.len()).map(|x| beta[x] * (y[x][t] - alpha[x])).sum::<f64>() / sbb;
        let gain = p / (p + obs_var);
        m += gain * (obs - m);
        p *= 1.0 - gain;
        filt_mean[t] = m;
        filt_var[t] = p;
    }
    kappa[n_years - 1] = filt_mean[n_years - 1] + filt_var[n_years - 1].sqrt() * normal(rng);
    for t in (0..n_years - 1).rev() {
        let j = filt_var[t] / (filt_var[t] + sigma_v2);
        let mean = filt_mean[t] + j * (kappa[t + 1] - filt_mean[t] - drift);
        let var = filt_var[t] * (1.0 - j);
        kappa[t] = mean + var.max(0.0).sqrt() * normal(rng);
    }
}

/// Projected central death rates for each posterior draw.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectedRates {
    pub target_year: i32,
    pub first_age: u32,
    /// `rates[draw][year_offset][age_index]`; a single year offset unless
    /// rates were projected along ageing trajectories.
    pub rates: Vec<Vec<Vec<f64>>>,
}

impl ProjectedRates {
    /// Rates fixed at one calendar year: `rates[draw][age_index]`.
    pub fn single_year(target_year: i32, first_age: u32, rates: Vec<Vec<f64>>) -> Result<Self> {
        Self::validated(Self {
            target_year,
            first_age,
            rates: rates.into_iter().map(|r| vec![r]).collect(),
        })
    }

    fn validated(self) -> Result<Self> {
        if self.rates.is_empty() {
            return Err(data("projected rates have no draws"));
        }
        if self
            .rates
            .iter()
            .flatten()
            .flatten()
            .any(|m| !(m.is_finite() && *m >= 0.0))
        {
            return Err(data("projected rates must be finite and non-negative"));
        }
        Ok(self)
    }

    pub fn n_draws(&self) -> usize {
        self.rates.len()
    }

    pub fn n_ages(&self) -> usize {
        self.rates[0][0].len()
    }

    pub fn max_age(&self) -> u32 {
        self.first_age + self.n_ages() as u32 - 1
    }

    /// Rate for `age` experienced `offset` years after the target year.
    pub fn rate(&self, draw: usize, age: u32, offset: usize) -> f64 {
        let by_year = &self.rates[draw];
        by_year[offset.min(by_year.len() - 1)][(age - self.first_age) as usize]
    }
}

fn project_kappa(draw: &LeeCarterDraw, horizon: usize, rng: &mut impl Rng) -> f64 {
    let sd = draw.sigma_v2.sqrt();
    let mut k = *draw.kappa.last().expect("non-empty period index");
    for _ in 0..horizon {
        k += draw.drift + sd * normal(rng);
    }
    k
}

/// Propagates the period index of every draw to `target_year` and returns
/// `m_x = exp(α_x + β_x κ)`.
pub fn project_rates(post: &LeeCarterPosterior, target_year: i32, seed: u64) -> Result<ProjectedRates> {
    project_rates_along_trajectories(post, target_year, 1, seed)
}

/// Like [`project_rates`] but also projects `n_years - 1` further calendar
/// years, so that a cohort can experience the rate of the year in which it
/// reaches each age.
pub fn project_rates_along_trajectories(
    post: &LeeCarterPosterior,
    target_year: i32,
    n_years: usize,
    seed: u64,
) -> Result<ProjectedRates> {
    if post.draws.is_empty() {
        return Err(invalid("Lee-Carter posterior has no draws"));
    }
    let last = post.last_year();
    if target_year <= last {
        return Err(invalid(format!(
            "target year {target_year} is not after the last observed year {last}"
        )));
    }
    let horizon = (target_year - last) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rates = post
        .draws
        .iter()
        .map(|d| {
            let mut k = project_kappa(d, horizon, &mut rng);
            let mut years = Vec::with_capacity(n_years.max(1));
            for y in 0..n_years.max(1) {
                if y > 0 {
                    k += d.drift + d.sigma_v2.sqrt() * normal(&mut rng);
                }
                years.push(d.alpha.iter().zip(&d.beta).map(|(a, b)| (a + b * k).exp()).collect());
            }
            years
        })
        .collect();
    ProjectedRates {
        target_year,
        first_age: post.first_age,
        rates,
    }
    .validated()
}

/// `π = exp(-Σ_{i<j} m_{x+i})` for every draw.
pub fn cohort_survival(rates: &ProjectedRates, start_age: u32, horizon: u32) -> Result<Vec<f64>> {
    if start_age < rates.first_age || start_age + horizon > rates.max_age() + 1 {
        return Err(invalid(format!(
            "ages {start_age}..{} fall outside {}..={}",
            start_age + horizon,
            rates.first_age,
            rates.max_age()
        )));
    }
    Ok((0..rates.n_draws())
        .map(|d| {
            let s: f64 = (0..horizon).map(|i| rates.rate(d, start_age + i, i as usize)).sum();
            (-s).exp()
        })
        .collect())
}

/// Number of people of one age and sex in the cohort to mimic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileEntry {
    pub age: u32,
    pub sex: Sex,
    pub count: usize,
}

/// Synthetic population records, optionally split by cause of death.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCohort {
    /// Every death is an event.
    pub all_causes: SurvivalDataset,
    /// Events are deaths from the cause of interest; other deaths censored.
    pub cause_of_interest: Option<SurvivalDataset>,
    /// Events are deaths from other causes; cause-of-interest deaths censored.
    pub other_causes: Option<SurvivalDataset>,
}

fn proportion_at(props: &BTreeMap<u32, f64>, age: u32) -> f64 {
    props
        .range(..=age)
        .next_back()
        .or_else(|| props.iter().next())
        .map(|(_, &p)| p)
        .unwrap_or(0.0)
}

/// Samples one time to death per person (in years) from the projected
/// rates of their sex. Each person uses a uniformly chosen posterior draw;
/// death falls uniformly inside the year it occurs, and anyone alive past
/// the oldest tabulated age is censored at the end of that year.
///
/// With `cause_proportions` (age at death → share due to the cause of
/// interest, step-interpolated), each death is attributed by a Bernoulli
/// draw.
pub fn synthesize_cohort(
    rates: &BTreeMap<Sex, ProjectedRates>,
    profile: &[ProfileEntry],
    cause_proportions: Option<&BTreeMap<u32, f64>>,
    group: &str,
    seed: u64,
) -> Result<SyntheticCohort> {
    if profile.is_empty() || profile.iter().all(|p| p.count == 0) {
        return Err(invalid("age-sex profile is empty"));
    }
    if let Some(props) = cause_proportions {
        if props.is_empty() {
            return Err(invalid("cause proportions map is empty"));
        }
        if props.values().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(invalid("cause proportions must lie in [0, 1]"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut all = Vec::new();
    let mut interest = Vec::new();
    let mut other = Vec::new();
    for entry in profile {
        let r = rates
            .get(&entry.sex)
            .ok_or_else(|| invalid(format!("no projected rates for sex {}", entry.sex)))?;
        if entry.age < r.first_age || entry.age > r.max_age() {
            return Err(invalid(format!(
                "profile age {} outside projected ages {}..={}",
                entry.age,
                r.first_age,
                r.max_age()
            )));
        }
        for _ in 0..entry.count {
            let d = rng.random_range(0..r.n_draws());
            let mut death = None;
            for (j, age) in (entry.age..=r.max_age()).enumerate() {
                let q = 1.0 - (-r.rate(d, age, j)).exp();
                if rng.random::<f64>() < q {
                    let u: f64 = OpenClosed01.sample(&mut rng);
                    death = Some((j as f64 + u, age));
                    break;
                }
            }
            let base = |time: f64, event: bool| SurvivalRecord {
                time,
                event,
                age: Some(entry.age),
                sex: Some(entry.sex),
                group: group.to_string(),
            };
            match death {
                Some((time, age_at_death)) => {
                    all.push(base(time, true));
                    if let Some(props) = cause_proportions {
                        let is_interest = rng.random::<f64>() < proportion_at(props, age_at_death);
                        interest.push(base(time, is_interest));
                        other.push(base(time, !is_interest));
                    }
                }
                None => {
                    let time = (r.max_age() + 1 - entry.age) as f64;
                    all.push(base(time, false));
                    if cause_proportions.is_some() {
                        interest.push(base(time, false));
                        other.push(base(time, false));
                    }
                }
            }
        }
    }
    let split = cause_proportions.is_some();
    Ok(SyntheticCohort {
        all_causes: SurvivalDataset::new(all, TimeUnit::Years)?,
        cause_of_interest: if split {
            Some(SurvivalDataset::new(interest, TimeUnit::Years)?)
        } else {
            None
        },
        other_causes: if split {
            Some(SurvivalDataset::new(other, TimeUnit::Years)?)
        } else {
            None
        },
    })
}

/// Writes `age,draw,mx` for the first projected year.
pub fn write_rates_csv(path: &Path, rates: &ProjectedRates, header: &[String]) -> Result<()> {
    let mut w = csv_writer(path, header)?;
    let err = csv_err(path);
    w.write_record(["age", "draw", "mx"]).map_err(&err)?;
    for (d, by_year) in rates.rates.iter().enumerate() {
        for (i, m) in by_year[0].iter().enumerate() {
            w.write_record([
                (rates.first_age + i as u32).to_string(),
                d.to_string(),
                format_float(*m),
            ])
            .map_err(&err)?;
        }
    }
    w.flush().map_err(io_err(path))
}

/// Reads `age,draw,mx` back into single-year projected rates.
pub fn load_rates_csv(path: &Path, target_year: i32) -> Result<ProjectedRates> {
    #[derive(Deserialize)]
    struct Row {
        draw: usize,
        age: u32,
        mx: f64,
    }
    let mut reader = csv_reader(path)?;
    let mut cells: BTreeMap<(usize, u32), f64> = BTreeMap::new();
    for (i, row) in reader.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| Error::Row {
            path: path.to_path_buf(),
            row: i + 1,
            message: e.to_string(),
        })?;
        cells.insert((row.draw, row.age), row.mx);
    }
    let n_draws = cells.keys().map(|k| k.0).max().map_or(0, |d| d + 1);
    let first_age = cells.keys().map(|k| k.1).min().unwrap_or(0);
    let n_ages = cells
        .keys()
        .map(|k| k.1)
        .max()
        .map_or(0, |a| (a - first_age + 1) as usize);
    if n_draws == 0 || cells.len() != n_draws * n_ages {
        return Err(data(format!("{}: incomplete draw × age table", path.display())));
    }
    let rates = (0..n_draws)
        .map(|d| (0..n_ages).map(|a| cells[&(d, first_age + a as u32)]).collect())
        .collect();
    ProjectedRates::single_year(target_year, first_age, rates)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_rates(m: f64, first_age: u32, n_ages: usize, n_draws: usize) -> ProjectedRates {
        ProjectedRates::single_year(2020, first_age, vec![vec![m; n_ages]; n_draws]).unwrap()
    }

    #[test]
    fn cohort_survival_examples() {
        let r = constant_rates(0.1, 0, 50, 2);
        assert_eq!(cohort_survival(&r, 10, 0).unwrap(), vec![1.0, 1.0]);
        let p = cohort_survival(&r, 10, 3).unwrap();
        assert!((p[0] - (-0.3f64).exp()).abs() < 1e-15);
        assert!(cohort_survival(&r, 49, 2).is_err());
    }

    #[test]
    fn twenty_year_old_reaching_twenty_two() {
        let rates: Vec<f64> = (0..40).map(|a| 0.001 * (1.0 + a as f64)).collect();
        let r = ProjectedRates::single_year(2020, 0, vec![rates.clone()]).unwrap();
        let p = cohort_survival(&r, 20, 2).unwrap();
        assert!((p[0] - (-rates[20] - rates[21]).exp()).abs() < 1e-15);
    }

    #[test]
    fn zero_rates_censor_everyone_at_max_age() {
        let mut map = BTreeMap::new();
        map.insert(Sex::Female, constant_rates(0.0, 50, 11, 3));
        let profile = [ProfileEntry {
            age: 55,
            sex: Sex::Female,
            count: 20,
        }];
        let c = synthesize_cohort(&map, &profile, None, "pop", 7).unwrap();
        assert!(c.all_causes.records().iter().all(|r| !r.event && r.time == 6.0));
    }

    #[test]
    fn full_cause_share_leaves_other_dataset_censored() {
        let mut map = BTreeMap::new();
        map.insert(Sex::Male, constant_rates(0.3, 40, 30, 3));
        let profile = [ProfileEntry {
            age: 45,
            sex: Sex::Male,
            count: 200,
        }];
        let props: BTreeMap<u32, f64> = [(0, 1.0)].into_iter().collect();
        let c = synthesize_cohort(&map, &profile, Some(&props), "pop", 3).unwrap();
        assert_eq!(c.other_causes.as_ref().unwrap().n_events(), 0);
        assert_eq!(
            c.cause_of_interest.as_ref().unwrap().n_events(),
            c.all_causes.n_events()
        );
    }

    #[test]
    fn synthesis_is_reproducible() {
        let mut map = BTreeMap::new();
        map.insert(Sex::Male, constant_rates(0.05, 40, 30, 4));
        let profile = [ProfileEntry {
            age: 45,
            sex: Sex::Male,
            count: 50,
        }];
        let a = synthesize_cohort(&map, &profile, None, "pop", 11).unwrap();
        let b = synthesize_cohort(&map, &profile, None, "pop", 11).unwrap();
        assert_eq!(a, b);
        assert!(synthesize_cohort(&map, &[], None, "pop", 11).is_err());
    }

    #[test]
    fn deterministic_projection_limit() {
        let draw = LeeCarterDraw {
            alpha: vec![-4.0, -3.0],
            beta: vec![0.4, 0.6],
            kappa: vec![1.0, 0.0, -1.0],
            drift: -1.0,
            sigma_v2: 0.0,
            sigma_eps2: 0.01,
        };
        let post = LeeCarterPosterior {
            first_age: 60,
            first_year: 2000,
            sex: Sex::Female,
            draws: vec![draw],
        };
        let r = project_rates(&post, 2003, 1).unwrap();
        assert!((r.rate(0, 60, 0) - (-4.0f64 + 0.4 * -2.0).exp()).abs() < 1e-15);
        assert!((r.rate(0, 61, 0) - (-3.0f64 + 0.6 * -2.0).exp()).abs() < 1e-15);
        assert!(project_rates(&post, 2002, 1).is_err());
    }

    #[test]
    fn rejects_small_surfaces() {
        let s = MortalitySurface::new(0, 2000, Sex::Male, vec![vec![-3.0; 4]; 3]).unwrap();
        assert!(fit_lee_carter(&s, &LeeCarterConfig::default()).is_err());
        assert!(MortalitySurface::new(0, 2000, Sex::Male, vec![vec![-3.0; 4], vec![-3.0; 3]]).is_err());
    }
}
