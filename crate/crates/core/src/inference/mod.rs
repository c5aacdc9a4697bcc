//! Posterior sampling, convergence diagnostics and model comparison.

pub mod criteria;
pub mod diagnostics;
mod nuts;
mod optimize;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

use crate::datasets::format_float;
use crate::error::{data, invalid, Error, Result};
use crate::io::{csv_err, csv_reader, csv_writer, io_err};
use crate::model::{JointModel, ParameterLayout};
use crate::stats::quantile;
use criteria::stable_mean;
pub use criteria::{criteria_from_pointwise, InformationCriteria};
use nuts::{MetricAdaptation, Nuts, StepSizeAdaptation};

/// A differentiable log density on an unconstrained space.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Returns the log density and writes its gradient into `grad`. A
    /// non-finite value marks the point as inadmissible.
    fn log_density_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64;

    fn initial_point(&self) -> Vec<f64> {
        vec![0.0; self.dim()]
    }
}

impl LogDensity for JointModel {
    fn dim(&self) -> usize {
        JointModel::dim(self)
    }

    fn log_density_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.log_posterior_and_gradient(x, grad)
    }

    fn initial_point(&self) -> Vec<f64> {
        self.default_start()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub chains: usize,
    pub warmup: usize,
    pub samples: usize,
    pub seed: u64,
    pub target_accept: f64,
    pub max_depth: usize,
    /// Start every chain near the posterior mode found by BFGS.
    pub optimize_init: bool,
    /// Half-width of the uniform jitter added to each chain's start.
    pub init_radius: f64,
    pub init_retries: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            chains: 4,
            warmup: 1000,
            samples: 1000,
            seed: 1,
            target_accept: 0.8,
            max_depth: 10,
            optimize_init: true,
            init_radius: 0.1,
            init_retries: 100,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 || self.samples == 0 {
            return Err(invalid("sampler needs at least one chain and one sampling iteration"));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(invalid("target acceptance must lie in (0, 1)"));
        }
        if self.max_depth == 0 {
            return Err(invalid("maximum tree depth must be positive"));
        }
        Ok(())
    }
}

/// Output of one chain, on the unconstrained scale.
#[derive(Clone, Debug)]
pub struct ChainOutput {
    pub draws: Vec<Vec<f64>>,
    pub log_density: Vec<f64>,
    pub divergent: Vec<bool>,
    pub tree_depth: Vec<usize>,
    pub accept_stat: Vec<f64>,
    pub warmup_divergences: usize,
    pub step_size: f64,
    pub inv_metric: Vec<f64>,
}

fn chain_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn finite_at<T: LogDensity + ?Sized>(target: &T, x: &[f64]) -> bool {
    let mut g = vec![0.0; x.len()];
    let lp = target.log_density_and_gradient(x, &mut g);
    lp.is_finite() && g.iter().all(|v| v.is_finite())
}

/// Common starting point: the target's suggestion, optionally moved to the
/// posterior mode. Falls back to random points if the suggestion is not
/// evaluable.
fn base_start<T: LogDensity + ?Sized>(target: &T, config: &SamplerConfig) -> Result<Vec<f64>> {
    let mut x0 = target.initial_point();
    let mut rng = chain_rng(config.seed, 0);
    let mut tries = 0;
    while !finite_at(target, &x0) {
        tries += 1;
        if tries > config.init_retries {
            return Err(Error::Sampler(format!(
                "could not find an admissible starting point after {} attempts",
                config.init_retries
            )));
        }
        x0 = (0..target.dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
    }
    if config.optimize_init {
        if let Some(mode) = optimize::maximize(target, &x0, 1000) {
            if mode.value.is_finite() && finite_at(target, &mode.x) {
                x0 = mode.x;
            }
        }
    }
    Ok(x0)
}

fn run_chain<T: LogDensity + ?Sized>(
    target: &T,
    config: &SamplerConfig,
    start: &[f64],
    chain: usize,
) -> Result<ChainOutput> {
    let mut rng = chain_rng(config.seed, chain as u64 + 1);
    let mut x = None;
    for _ in 0..config.init_retries.max(1) {
        let cand: Vec<f64> = start
            .iter()
            .map(|v| v + rng.random_range(-1.0..=1.0) * config.init_radius)
            .collect();
        if finite_at(target, &cand) {
            x = Some(cand);
            break;
        }
    }
    let x = x.ok_or_else(|| {
        Error::Sampler(format!(
            "chain {chain}: initialization failed after {} retries",
            config.init_retries
        ))
    })?;
    let mut nuts = Nuts::new(target, x, rng, config.max_depth)?;
    nuts.init_stepsize()?;
    let mut step = StepSizeAdaptation::new(config.target_accept, nuts.epsilon);
    let mut metric = MetricAdaptation::new(target.dim(), config.warmup);
    let mut warmup_divergences = 0;
    for _ in 0..config.warmup {
        let s = nuts.transition();
        warmup_divergences += s.divergent as usize;
        nuts.epsilon = step.learn(s.accept_stat);
        let q = nuts.position().to_vec();
        if metric.learn(&mut nuts.inv_metric, &q) {
            nuts.init_stepsize()?;
            step.restart(nuts.epsilon);
        }
    }
    if config.warmup > 0 {
        nuts.epsilon = step.final_epsilon();
    }
    let mut out = ChainOutput {
        draws: Vec::with_capacity(config.samples),
        log_density: Vec::with_capacity(config.samples),
        divergent: Vec::with_capacity(config.samples),
        tree_depth: Vec::with_capacity(config.samples),
        accept_stat: Vec::with_capacity(config.samples),
        warmup_divergences,
        step_size: nuts.epsilon,
        inv_metric: nuts.inv_metric.clone(),
    };
    for _ in 0..config.samples {
        let s = nuts.transition();
        out.draws.push(nuts.position().to_vec());
        out.log_density.push(nuts.log_density());
        out.divergent.push(s.divergent);
        out.tree_depth.push(s.depth);
        out.accept_stat.push(s.accept_stat);
    }
    Ok(out)
}

/// Runs `config.chains` independent NUTS chains in parallel. Results are
/// ordered by chain index and depend only on the seed.
pub fn sample<T: LogDensity + ?Sized>(target: &T, config: &SamplerConfig) -> Result<Vec<ChainOutput>> {
    config.validate()?;
    let start = base_start(target, config)?;
    (0..config.chains)
        .into_par_iter()
        .map(|c| run_chain(target, config, &start, c))
        .collect()
}

/// Posterior draws with chain structure and per-draw pointwise
/// log-likelihoods.
#[derive(Clone, Debug)]
pub struct PosteriorSamples {
    pub names: Vec<String>,
    pub n_chains: usize,
    /// Draws per chain.
    pub n_draws: usize,
    /// Chain-major unconstrained draws.
    pub unconstrained: Vec<Vec<f64>>,
    /// Chain-major constrained draws.
    pub draws: Vec<Vec<f64>>,
    pub log_posterior: Vec<f64>,
    /// `pointwise[draw][observation]`
    pub pointwise: Option<Vec<Vec<f64>>>,
    pub divergent: Vec<bool>,
    pub warmup_divergences: usize,
    pub step_sizes: Vec<f64>,
}

impl PosteriorSamples {
    /// Builds samples from constrained draws, e.g. read back from CSV.
    pub fn from_constrained(layout: &ParameterLayout, n_chains: usize, draws: Vec<Vec<f64>>) -> Result<Self> {
        if draws.is_empty() || n_chains == 0 || draws.len() % n_chains != 0 {
            return Err(data("draws do not split evenly into chains"));
        }
        if draws.iter().any(|d| d.len() != layout.dim()) {
            return Err(data("draws do not match the model's parameter count"));
        }
        let n = draws.len();
        Ok(Self {
            names: layout.names(),
            n_chains,
            n_draws: n / n_chains,
            unconstrained: draws.iter().map(|d| layout.to_unconstrained(d)).collect(),
            draws,
            log_posterior: vec![f64::NAN; n],
            pointwise: None,
            divergent: vec![false; n],
            warmup_divergences: 0,
            step_sizes: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn divergences(&self) -> usize {
        self.divergent.iter().filter(|d| **d).count()
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Constrained values of one parameter, all chains pooled.
    pub fn column(&self, param: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d[param]).collect()
    }

    /// Constrained values of one parameter split by chain.
    pub fn by_chain(&self, param: usize) -> Vec<Vec<f64>> {
        self.draws
            .chunks(self.n_draws)
            .map(|c| c.iter().map(|d| d[param]).collect())
            .collect()
    }

    /// Mean of the unconstrained draws.
    pub fn unconstrained_mean(&self) -> Vec<f64> {
        let dim = self.names.len();
        (0..dim)
            .map(|j| stable_mean(self.unconstrained.iter().map(move |d| d[j])))
            .collect()
    }
}

/// Samples the posterior of a joint model and records pointwise
/// log-likelihoods for every draw.
pub fn fit(model: &JointModel, config: &SamplerConfig) -> Result<PosteriorSamples> {
    let chains = sample(model, config)?;
    let layout = model.layout();
    let mut samples = PosteriorSamples {
        names: layout.names(),
        n_chains: chains.len(),
        n_draws: config.samples,
        unconstrained: Vec::new(),
        draws: Vec::new(),
        log_posterior: Vec::new(),
        pointwise: None,
        divergent: Vec::new(),
        warmup_divergences: chains.iter().map(|c| c.warmup_divergences).sum(),
        step_sizes: chains.iter().map(|c| c.step_size).collect(),
    };
    for c in chains {
        samples.unconstrained.extend(c.draws);
        samples.log_posterior.extend(c.log_density);
        samples.divergent.extend(c.divergent);
    }
    samples.draws = samples.unconstrained.iter().map(|x| layout.to_constrained(x)).collect();
    samples.pointwise = Some(
        samples
            .draws
            .par_iter()
            .map(|theta| model.pointwise_log_likelihood(theta))
            .collect(),
    );
    Ok(samples)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
    pub q975: f64,
    /// Absent for a single chain.
    pub rhat: Option<f64>,
    pub ess_bulk: f64,
}

/// Per-parameter summaries with convergence diagnostics, plus notices
/// (e.g. R̂ omitted for one chain).
pub fn diagnostics(samples: &PosteriorSamples) -> (Vec<ParameterSummary>, Vec<String>) {
    let mut notices = Vec::new();
    if samples.n_chains < 2 {
        notices.push("R-hat omitted: it needs at least two chains".to_string());
    }
    let summaries = samples
        .names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let col = samples.column(j);
            let chains = samples.by_chain(j);
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let sd = if col.len() > 1 {
                (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (col.len() - 1) as f64).sqrt()
            } else {
                0.0
            };
            ParameterSummary {
                name: name.clone(),
                mean,
                sd,
                q025: quantile(&col, 0.025),
                q05: quantile(&col, 0.05),
                q50: quantile(&col, 0.5),
                q95: quantile(&col, 0.95),
                q975: quantile(&col, 0.975),
                rhat: diagnostics::split_rhat(&chains),
                ess_bulk: diagnostics::bulk_ess(&chains),
            }
        })
        .collect();
    (summaries, notices)
}

/// AIC/BIC at the posterior mean of the unconstrained draws, DIC, DIC₂ and
/// WAIC from the stored pointwise log-likelihoods.
pub fn information_criteria(samples: &PosteriorSamples, model: &JointModel) -> Result<InformationCriteria> {
    let pointwise = samples
        .pointwise
        .as_ref()
        .ok_or_else(|| invalid("pointwise log-likelihoods were not recorded"))?;
    let theta_bar = model.layout().to_constrained(&samples.unconstrained_mean());
    let plug_in = model.pointwise_log_likelihood(&theta_bar);
    Ok(criteria_from_pointwise(pointwise, &plug_in, model.dim()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub parameters: Vec<ParameterSummary>,
    pub chains: usize,
    pub draws_per_chain: usize,
    pub divergences: usize,
    pub warmup_divergences: usize,
    pub step_sizes: Vec<f64>,
    pub criteria: Option<InformationCriteria>,
    pub notices: Vec<String>,
    /// Wall-clock seconds, only recorded when requested so that reports
    /// stay reproducible.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_s: Option<f64>,
}

pub fn fit_report(samples: &PosteriorSamples, model: &JointModel, time_s: Option<f64>) -> Result<FitReport> {
    let (parameters, mut notices) = diagnostics(samples);
    let divergences = samples.divergences();
    if divergences * 10 > samples.len() {
        notices.push(format!(
            "{divergences} of {} post-warmup transitions diverged; results are unreliable",
            samples.len()
        ));
    } else if divergences > 0 {
        notices.push(format!("{divergences} divergent transitions after warmup"));
    }
    let criteria = if samples.pointwise.is_some() {
        Some(information_criteria(samples, model)?)
    } else {
        None
    };
    Ok(FitReport {
        parameters,
        chains: samples.n_chains,
        draws_per_chain: samples.n_draws,
        divergences,
        warmup_divergences: samples.warmup_divergences,
        step_sizes: samples.step_sizes.clone(),
        criteria,
        notices,
        time_s,
    })
}

/// One row per draw: `chain,iteration,<parameters>` on the constrained scale.
pub fn write_draws_csv(path: &Path, samples: &PosteriorSamples, header: &[String]) -> Result<()> {
    let mut w = csv_writer(path, header)?;
    let err = csv_err(path);
    let mut head = vec!["chain".to_string(), "iteration".to_string()];
    head.extend(samples.names.iter().cloned());
    w.write_record(&head).map_err(&err)?;
    for (i, d) in samples.draws.iter().enumerate() {
        let mut row = vec![(i / samples.n_draws).to_string(), (i % samples.n_draws).to_string()];
        row.extend(d.iter().map(|v| format_float(*v)));
        w.write_record(&row).map_err(&err)?;
    }
    w.flush().map_err(io_err(path))
}

/// Reads a draws CSV written by [`write_draws_csv`] for a model with the
/// given layout.
pub fn load_draws_csv(path: &Path, layout: &ParameterLayout) -> Result<PosteriorSamples> {
    let mut reader = csv_reader(path)?;
    let headers = reader.headers().map_err(csv_err(path))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| data(format!("{}: missing column '{name}'", path.display())))
    };
    let chain_col = col("chain")?;
    let idx: Vec<usize> = layout.names().iter().map(|n| col(n)).collect::<Result<_>>()?;
    let mut by_chain: BTreeMap<usize, Vec<Vec<f64>>> = BTreeMap::new();
    for (r, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let parse = |i: usize| -> Result<f64> {
            rec.get(i).unwrap_or("").parse::<f64>().map_err(|_| Error::Row {
                path: path.to_path_buf(),
                row: r + 1,
                message: format!("unparsable value in column {}", &headers[i]),
            })
        };
        let chain = parse(chain_col)? as usize;
        let draw = idx.iter().map(|&i| parse(i)).collect::<Result<Vec<_>>>()?;
        by_chain.entry(chain).or_default().push(draw);
    }
    let n_chains = by_chain.len();
    let draws: Vec<Vec<f64>> = by_chain.into_values().flatten().collect();
    PosteriorSamples::from_constrained(layout, n_chains.max(1), draws)
}
