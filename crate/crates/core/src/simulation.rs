//! Monte Carlo harness: a stratified finite population with gamma-distributed
//! `Y`, a proportional-odds covariate, stratified SRSWOR, logistic response
//! depending on `Z` only, and a replicate loop that fits every estimator and
//! bootstraps it.

use std::fmt::Write as _;

use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Gamma;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{bootstrap_variance, sample_variance};
use crate::data::{CategorySpace, SampleUnit, StratifiedSample, StratumMeta};
use crate::error::{Error, Result};
use crate::estimate::{cell_means, fit_mpele, overall_mean, simple_estimators, MpeleFit};
use crate::impute::{
    impute_pel_mean, impute_pel_random, impute_simple_mean, impute_simple_random,
    post_imputation_estimates, ImputedSample,
};
use crate::model::{logistic, CategoryModel, ModelParams, ProportionalOddsModel};
use crate::optimize::SearchConfig;
use crate::rng::{derive_seed, stream, tag};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaSpec {
    pub shape: f64,
    pub scale: f64,
}

impl GammaSpec {
    pub fn mean(&self) -> f64 {
        self.shape * self.scale
    }

    pub fn variance(&self) -> f64 {
        self.shape * self.scale * self.scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PopulationMode {
    /// One population per study; only sampling and response vary.
    Fixed,
    /// A fresh population for every replicate.
    Regenerated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub strata_sizes: Vec<u64>,
    pub y_distributions: Vec<GammaSpec>,
    /// Cutpoints `c_j` of `logit P(Z ≤ j | y) = c_j + β₀ y`; `s − 1` values.
    pub cutpoints: Vec<f64>,
    pub beta0: f64,
    /// `P(δ = 1 | Z = j) = logistic(response_intercept + γ j)`.
    pub response_intercept: f64,
    pub gammas: Vec<f64>,
    pub sampling_fraction: f64,
    pub replicates: usize,
    #[serde(rename = "B")]
    pub b: usize,
    pub seed: u64,
    pub population_mode: PopulationMode,
    pub search: SearchConfig,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        let g = |shape, scale| GammaSpec { shape, scale };
        Self {
            strata_sizes: vec![3370, 2910, 5430, 4110],
            y_distributions: vec![g(43.0, 0.20), g(42.0, 0.19), g(38.0, 0.20), g(50.0, 0.17)],
            cutpoints: vec![1.0, 2.0, 3.0, 4.0],
            beta0: -0.4,
            response_intercept: -0.1,
            gammas: vec![0.7, 0.5, 0.3, 0.1, -0.1],
            sampling_fraction: 0.03,
            replicates: 1000,
            b: 200,
            seed: 20_240_601,
            population_mode: PopulationMode::Fixed,
            search: SearchConfig::for_dim(1),
        }
    }
}

impl SimulationConfig {
    pub fn num_categories(&self) -> usize {
        self.cutpoints.len() + 1
    }

    /// `n_h = round(N_h · fraction)`.
    pub fn sample_sizes(&self) -> Vec<usize> {
        self.strata_sizes
            .iter()
            .map(|&n| (n as f64 * self.sampling_fraction).round() as usize)
            .collect()
    }

    pub fn model(&self) -> Result<ProportionalOddsModel> {
        ProportionalOddsModel::with_fixed_cutpoints(self.cutpoints.clone())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.strata_sizes.is_empty() {
            return bad("no strata".into());
        }
        if self.strata_sizes.len() != self.y_distributions.len() {
            return bad(format!(
                "{} strata sizes but {} y distributions",
                self.strata_sizes.len(),
                self.y_distributions.len()
            ));
        }
        for (h, g) in self.y_distributions.iter().enumerate() {
            if !(g.shape > 0.0 && g.scale > 0.0 && g.shape.is_finite() && g.scale.is_finite()) {
                return bad(format!("stratum {}: gamma shape and scale must be positive", h + 1));
            }
        }
        if !(self.sampling_fraction > 0.0 && self.sampling_fraction <= 1.0) {
            return bad(format!("sampling fraction {} outside (0, 1]", self.sampling_fraction));
        }
        for (h, n) in self.sample_sizes().into_iter().enumerate() {
            if n < 2 {
                return bad(format!("stratum {} would have sample size {n}", h + 1));
            }
        }
        if !self.beta0.is_finite() || !self.response_intercept.is_finite() {
            return bad("non-finite model parameter".into());
        }
        if self.gammas.iter().any(|g| !g.is_finite()) {
            return bad("non-finite gamma".into());
        }
        if self.replicates < 2 {
            return bad("at least two replicates are needed".into());
        }
        if self.b == 1 {
            return bad("B must be 0 (no bootstrap) or at least 2".into());
        }
        self.model()?;
        self.search.validate()?;
        if self.search.initial.dim() != 1 {
            return bad("search.initial must have one coordinate".into());
        }
        Ok(())
    }
}

/// `P(δ = 1 | Z = j)` for 1-based `j` with the default intercept.
pub fn response_probability(gamma: f64, j: usize) -> f64 {
    response_probability_with(-0.1, gamma, j)
}

pub fn response_probability_with(intercept: f64, gamma: f64, j: usize) -> f64 {
    logistic(intercept + gamma * j as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Targets {
    pub y_bar: f64,
    pub cell_means: Vec<f64>,
}

/// Finite population, grouped by stratum.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub y: Vec<Vec<f64>>,
    /// 0-based categories.
    pub z: Vec<Vec<usize>>,
    pub num_categories: usize,
}

impl Population {
    pub fn size(&self) -> usize {
        self.y.iter().map(Vec::len).sum()
    }

    /// `Ȳ` and `Ȳ_j` of the realized population.
    pub fn targets(&self) -> Result<Targets> {
        let s = self.num_categories;
        let mut total = 0.0;
        let mut num = vec![0.0; s];
        let mut count = vec![0usize; s];
        for (ys, zs) in self.y.iter().zip(&self.z) {
            for (&y, &z) in ys.iter().zip(zs) {
                total += y;
                num[z] += y;
                count[z] += 1;
            }
        }
        let cell_means = (0..s)
            .map(|j| {
                if count[j] > 0 {
                    Ok(num[j] / count[j] as f64)
                } else {
                    Err(Error::EmptyCategory { category: j + 1 })
                }
            })
            .collect::<Result<_>>()?;
        Ok(Targets { y_bar: total / self.size() as f64, cell_means })
    }

    /// Empirical `P(Z = j)`.
    pub fn category_shares(&self) -> Vec<f64> {
        let mut counts = vec![0usize; self.num_categories];
        self.z.iter().flatten().for_each(|&z| counts[z] += 1);
        let n = self.size() as f64;
        counts.into_iter().map(|c| c as f64 / n).collect()
    }

    /// `Σ_j P̂(Z = j) P(δ = 1 | Z = j)`.
    pub fn expected_response_rate(&self, intercept: f64, gamma: f64) -> f64 {
        self.category_shares()
            .iter()
            .enumerate()
            .map(|(j, p)| p * response_probability_with(intercept, gamma, j + 1))
            .sum()
    }
}

pub fn generate_population(config: &SimulationConfig, seed: u64) -> Result<Population> {
    generate_population_keyed(config, seed, 0)
}

fn generate_population_keyed(config: &SimulationConfig, seed: u64, key: u64) -> Result<Population> {
    let model = config.model()?;
    let params = [config.beta0];
    let s = config.num_categories();
    let mut y = Vec::with_capacity(config.strata_sizes.len());
    let mut z = Vec::with_capacity(config.strata_sizes.len());
    let mut row = vec![0.0; s];
    for (h, (&n, g)) in config.strata_sizes.iter().zip(&config.y_distributions).enumerate() {
        let dist = Gamma::new(g.shape, g.scale)
            .map_err(|e| Error::InvalidConfig(format!("stratum {}: {e}", h + 1)))?;
        let mut rng = stream(seed, &[tag::POPULATION, key, h as u64]);
        let mut ys = Vec::with_capacity(n as usize);
        let mut zs = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let v: f64 = dist.sample(&mut rng);
            model.probability_row(h, v, &params, &mut row);
            let u: f64 = rng.random();
            let mut cum = 0.0;
            let mut cat = s - 1;
            for (j, p) in row[..s - 1].iter().enumerate() {
                cum += p;
                if u < cum {
                    cat = j;
                    break;
                }
            }
            ys.push(v);
            zs.push(cat);
        }
        y.push(ys);
        z.push(zs);
    }
    Ok(Population { y, z, num_categories: s })
}

/// Stratified SRSWOR with `n_h = round(N_h · fraction)` and weights
/// `N_h / (N n_h)`, followed by Bernoulli response given `Z`.
pub fn draw_sample(
    population: &Population,
    config: &SimulationConfig,
    gamma: f64,
    seed: u64,
    replicate: u64,
) -> Result<StratifiedSample> {
    let sizes: Vec<u64> = population.y.iter().map(|v| v.len() as u64).collect();
    let total: u64 = sizes.iter().sum();
    let mut units = Vec::new();
    for (h, &big_n) in sizes.iter().enumerate() {
        let n = ((big_n as f64 * config.sampling_fraction).round() as usize).min(big_n as usize);
        let weight = big_n as f64 / (total as f64 * n as f64);
        let mut pick = stream(seed, &[tag::SAMPLE, replicate, h as u64]);
        let mut respond = stream(seed, &[tag::RESPONSE, replicate, h as u64]);
        for i in rand::seq::index::sample(&mut pick, big_n as usize, n) {
            let z = population.z[h][i];
            let u: f64 = respond.random();
            if u < response_probability_with(config.response_intercept, gamma, z + 1) {
                units.push(SampleUnit::respondent(h, weight, z, population.y[h][i]));
            } else {
                units.push(SampleUnit::nonrespondent(h, weight, z));
            }
        }
    }
    StratifiedSample::new(
        CategorySpace::numbered(population.num_categories)?,
        StratumMeta::from_population_sizes(&sizes)?,
        units,
    )
}

/// Estimator families reported by the study; each pseudo likelihood family is
/// paired with a simple counterpart for the MSE ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Mpele,
    Simple,
    PelMeanImputation,
    SimpleMeanImputation,
    PelRandomImputation,
    SimpleRandomImputation,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::Mpele,
        Family::Simple,
        Family::PelMeanImputation,
        Family::SimpleMeanImputation,
        Family::PelRandomImputation,
        Family::SimpleRandomImputation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Mpele => "mpele",
            Family::Simple => "simple",
            Family::PelMeanImputation => "pel_mean_imputation",
            Family::SimpleMeanImputation => "simple_mean_imputation",
            Family::PelRandomImputation => "pel_random_imputation",
            Family::SimpleRandomImputation => "simple_random_imputation",
        }
    }

    pub fn counterpart(self) -> Option<Family> {
        match self {
            Family::Mpele => Some(Family::Simple),
            Family::PelMeanImputation => Some(Family::SimpleMeanImputation),
            Family::PelRandomImputation => Some(Family::SimpleRandomImputation),
            _ => None,
        }
    }
}

/// What a statistic estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "category")]
pub enum Quantity {
    Beta,
    Mean,
    /// 1-based category.
    CellMean(usize),
}

impl Quantity {
    pub fn label(self) -> String {
        match self {
            Quantity::Beta => "beta".into(),
            Quantity::Mean => "Y".into(),
            Quantity::CellMean(j) => format!("Y_{j}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StatisticId {
    pub family: Family,
    pub quantity: Quantity,
}

impl StatisticId {
    pub fn name(&self) -> String {
        format!("{}.{}", self.family.name(), self.quantity.label())
    }
}

/// The statistics computed for one sample, in the order produced by [`evaluate_sample`].
pub fn statistic_layout(categories: usize) -> Vec<StatisticId> {
    let mut out = Vec::new();
    for family in Family::ALL {
        if family == Family::Mpele {
            out.push(StatisticId { family, quantity: Quantity::Beta });
        }
        out.push(StatisticId { family, quantity: Quantity::Mean });
        out.extend((1..=categories).map(|j| StatisticId { family, quantity: Quantity::CellMean(j) }));
    }
    out
}

fn push_family(out: &mut Vec<f64>, s: usize, est: Result<(f64, Vec<f64>)>) {
    match est {
        Ok((overall, cells)) => {
            out.push(overall);
            out.extend(cells);
        }
        Err(_) => out.extend(std::iter::repeat_n(f64::NAN, s + 1)),
    }
}

fn imputed_estimates(imp: Result<ImputedSample>) -> Result<(f64, Vec<f64>)> {
    let est = post_imputation_estimates(&imp?)?;
    Ok((est.overall, est.cell_means))
}

/// All statistics of [`statistic_layout`] for one sample; a family that cannot
/// be computed contributes `NaN`. Also returns the fit, if it succeeded.
pub fn evaluate_sample(
    sample: &StratifiedSample,
    model: &dyn CategoryModel,
    search: &SearchConfig,
    imputation_seed: u64,
) -> (Vec<f64>, Option<MpeleFit>) {
    let s = sample.num_categories();
    let mut out = Vec::with_capacity(6 * (s + 1) + 1);
    let fit = sample.check_respondents().and_then(|_| fit_mpele(sample, model, search)).ok();

    match &fit {
        Some(f) => {
            out.push(f.params.as_slice()[f.params.dim() - 1]);
            let est = overall_mean(&f.weights, sample)
                .and_then(|m| Ok((m, cell_means(&f.weights, sample, model, &f.params)?)));
            push_family(&mut out, s, est);
        }
        None => out.extend(std::iter::repeat_n(f64::NAN, s + 2)),
    }
    push_family(&mut out, s, simple_estimators(sample).map(|e| (e.overall, e.cell_means)));

    let no_fit = || Error::ZeroMass;
    let pel_mean = fit
        .as_ref()
        .ok_or_else(no_fit)
        .and_then(|f| impute_pel_mean(sample, model, &f.params, &f.weights));
    push_family(&mut out, s, imputed_estimates(pel_mean));
    push_family(&mut out, s, imputed_estimates(impute_simple_mean(sample)));
    let pel_random = fit
        .as_ref()
        .ok_or_else(no_fit)
        .and_then(|f| impute_pel_random(sample, model, &f.params, &f.weights, imputation_seed));
    push_family(&mut out, s, imputed_estimates(pel_random));
    push_family(&mut out, s, imputed_estimates(impute_simple_random(sample, imputation_seed)));
    (out, fit)
}

/// One Monte Carlo replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateOutcome {
    pub values: Vec<f64>,
    pub truths: Vec<f64>,
    /// `NaN` where no bootstrap was run or it failed.
    pub vboot: Vec<f64>,
    pub fit_failed: bool,
    pub converged: bool,
    pub bootstrap_failures: usize,
    pub bootstrap_unreliable: bool,
}

struct StudyContext<'a> {
    config: &'a SimulationConfig,
    model: ProportionalOddsModel,
    layout: Vec<StatisticId>,
    fixed: Option<(Population, Targets)>,
}

impl StudyContext<'_> {
    fn truth_vector(&self, targets: &Targets) -> Vec<f64> {
        self.layout
            .iter()
            .map(|id| match id.quantity {
                Quantity::Beta => self.config.beta0,
                Quantity::Mean => targets.y_bar,
                Quantity::CellMean(j) => targets.cell_means[j - 1],
            })
            .collect()
    }

    fn replicate(&self, gamma: f64, r: u64) -> Result<(ReplicateOutcome, Targets)> {
        let cfg = self.config;
        let regenerated;
        let (population, targets) = match &self.fixed {
            Some((p, t)) => (p, t.clone()),
            None => {
                let p = generate_population_keyed(cfg, cfg.seed, r + 1)?;
                let t = p.targets()?;
                regenerated = p;
                (&regenerated, t)
            }
        };
        let sample = draw_sample(population, cfg, gamma, cfg.seed, r)?;
        let imputation_seed = derive_seed(cfg.seed, &[tag::IMPUTATION, r]);
        let (values, fit) = evaluate_sample(&sample, &self.model, &cfg.search, imputation_seed);
        let k = self.layout.len();
        let mut outcome = ReplicateOutcome {
            values,
            truths: self.truth_vector(&targets),
            vboot: vec![f64::NAN; k],
            fit_failed: fit.is_none(),
            converged: fit.as_ref().is_some_and(|f| f.search.converged),
            bootstrap_failures: 0,
            bootstrap_unreliable: false,
        };
        if cfg.b >= 2 {
            let warm = match &fit {
                Some(f) => cfg.search.clone().with_initial(f.params.clone()),
                None => cfg.search.clone(),
            };
            let names: Vec<String> = self.layout.iter().map(StatisticId::name).collect();
            let names: Vec<&str> = names.iter().map(String::as_str).collect();
            let boot = bootstrap_variance(
                &sample,
                &names,
                &outcome.values,
                |rep, seed| Ok(evaluate_sample(rep, &self.model, &warm, seed).0),
                cfg.b,
                derive_seed(cfg.seed, &[tag::BOOTSTRAP, r]),
            )?;
            outcome.vboot = boot.vboot();
            outcome.bootstrap_failures = boot.statistics.iter().map(|s| s.failures).max().unwrap_or(0);
            outcome.bootstrap_unreliable = boot.unreliable;
        }
        Ok((outcome, targets))
    }
}

/// Monte Carlo summary of one statistic.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatisticSummary {
    pub estimator: Family,
    pub statistic: String,
    pub target: f64,
    /// Replicates where the statistic was computed.
    pub count: usize,
    pub failures: usize,
    pub mean: f64,
    pub relative_bias_pct: f64,
    pub var: f64,
    pub mse: f64,
    pub mean_vboot: Option<f64>,
    pub cp: Option<f64>,
    /// MSE ratio to the simple counterpart over replicates where both were computed.
    pub rat: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailureCounts {
    pub fit_failures: usize,
    pub not_converged: usize,
    /// Sum over replicates of the largest per-statistic bootstrap failure count.
    pub bootstrap_statistic_failures: usize,
    /// Replicates whose bootstrap had some statistic failing in more than 2% of draws.
    pub unreliable_bootstraps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaStudy {
    pub gamma: f64,
    pub replicates: usize,
    #[serde(rename = "B")]
    pub b: usize,
    /// Averaged over replicates when the population is regenerated.
    pub targets: Targets,
    pub mean_response_rate: f64,
    pub failures: FailureCounts,
    pub statistics: Vec<StatisticSummary>,
}

impl GammaStudy {
    pub fn get(&self, family: Family, quantity: Quantity) -> Option<&StatisticSummary> {
        let label = quantity.label();
        self.statistics.iter().find(|s| s.estimator == family && s.statistic == label)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub config: SimulationConfig,
    pub studies: Vec<GammaStudy>,
}

impl SimulationReport {
    pub fn study(&self, gamma: f64) -> Option<&GammaStudy> {
        self.studies.iter().find(|s| s.gamma == gamma)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Fixed-width table with relative bias, Var, Vboot, CP and Rat columns.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let opt = |v: Option<f64>, digits: usize| match v {
            Some(x) if x.is_finite() => format!("{x:.digits$}"),
            _ => "-".into(),
        };
        for study in &self.studies {
            let _ = writeln!(
                out,
                "gamma = {}  R = {}  B = {}  mean response rate = {:.4}",
                study.gamma, study.replicates, study.b, study.mean_response_rate
            );
            let _ = writeln!(
                out,
                "{:<26} {:<6} {:>10} {:>8} {:>9} {:>9} {:>6} {:>6} {:>5}",
                "estimator", "stat", "target", "RB%", "Var", "Vboot", "CP", "Rat", "fail"
            );
            for s in &study.statistics {
                let _ = writeln!(
                    out,
                    "{:<26} {:<6} {:>10.4} {:>8.3} {:>9.5} {:>9} {:>6} {:>6} {:>5}",
                    s.estimator.name(),
                    s.statistic,
                    s.target,
                    s.relative_bias_pct,
                    s.var,
                    opt(s.mean_vboot, 5),
                    opt(s.cp, 1),
                    opt(s.rat, 3),
                    s.failures
                );
            }
            let f = &study.failures;
            let _ = writeln!(
                out,
                "fit failures {}  not converged {}  bootstrap statistic failures {}  unreliable bootstraps {}\n",
                f.fit_failures, f.not_converged, f.bootstrap_statistic_failures, f.unreliable_bootstraps
            );
        }
        out
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

fn summarize(
    layout: &[StatisticId],
    outcomes: &[ReplicateOutcome],
    b: usize,
) -> Vec<StatisticSummary> {
    let index_of = |family: Family, quantity: Quantity| {
        layout.iter().position(|id| id.family == family && id.quantity == quantity)
    };
    let mse_over = |k: usize, rows: &[&ReplicateOutcome]| {
        mean(rows.iter().map(|o| (o.values[k] - o.truths[k]).powi(2)))
    };
    layout
        .iter()
        .enumerate()
        .map(|(k, id)| {
            let ok: Vec<&ReplicateOutcome> = outcomes.iter().filter(|o| o.values[k].is_finite()).collect();
            let values: Vec<f64> = ok.iter().map(|o| o.values[k]).collect();
            let target = mean(ok.iter().map(|o| o.truths[k]));
            let bias = mean(ok.iter().map(|o| o.values[k] - o.truths[k]));
            let with_boot: Vec<&&ReplicateOutcome> = ok.iter().filter(|o| o.vboot[k].is_finite()).collect();
            let (mean_vboot, cp) = if b >= 2 && !with_boot.is_empty() {
                let hits = with_boot
                    .iter()
                    .filter(|o| (o.values[k] - o.truths[k]).abs() <= 1.96 * o.vboot[k].sqrt())
                    .count();
                (
                    Some(mean(with_boot.iter().map(|o| o.vboot[k]))),
                    Some(100.0 * hits as f64 / with_boot.len() as f64),
                )
            } else {
                (None, None)
            };
            let rat = id.family.counterpart().and_then(|c| index_of(c, id.quantity)).and_then(|c| {
                let both: Vec<&ReplicateOutcome> = ok.iter().copied().filter(|o| o.values[c].is_finite()).collect();
                if both.is_empty() {
                    return None;
                }
                Some(mse_over(k, &both) / mse_over(c, &both))
            });
            StatisticSummary {
                estimator: id.family,
                statistic: id.quantity.label(),
                target,
                count: ok.len(),
                failures: outcomes.len() - ok.len(),
                mean: mean(values.iter().copied()),
                relative_bias_pct: 100.0 * bias / target.abs(),
                var: sample_variance(&values),
                mse: mse_over(k, &ok),
                mean_vboot,
                cp,
                rat,
            }
        })
        .collect()
}

/// Runs all replicates for one `γ`. Replicates run in parallel and are reduced
/// in replicate order.
pub fn run_gamma(config: &SimulationConfig, gamma: f64) -> Result<(GammaStudy, Vec<ReplicateOutcome>)> {
    config.validate()?;
    let ctx = StudyContext::new(config)?;
    ctx.run(gamma)
}

impl<'a> StudyContext<'a> {
    fn new(config: &'a SimulationConfig) -> Result<Self> {
        let fixed = match config.population_mode {
            PopulationMode::Fixed => {
                let p = generate_population(config, config.seed)?;
                let t = p.targets()?;
                Some((p, t))
            }
            PopulationMode::Regenerated => None,
        };
        Ok(Self {
            config,
            model: config.model()?,
            layout: statistic_layout(config.num_categories()),
            fixed,
        })
    }

    fn run(&self, gamma: f64) -> Result<(GammaStudy, Vec<ReplicateOutcome>)> {
        let cfg = self.config;
        let results: Vec<(ReplicateOutcome, Targets)> = (0..cfg.replicates as u64)
            .into_par_iter()
            .map(|r| self.replicate(gamma, r))
            .collect::<Result<_>>()?;
        let s = cfg.num_categories();
        let targets = Targets {
            y_bar: mean(results.iter().map(|(_, t)| t.y_bar)),
            cell_means: (0..s).map(|j| mean(results.iter().map(|(_, t)| t.cell_means[j]))).collect(),
        };
        let mean_response_rate = match &self.fixed {
            Some((p, _)) => p.expected_response_rate(cfg.response_intercept, gamma),
            None => generate_population(cfg, cfg.seed)?.expected_response_rate(cfg.response_intercept, gamma),
        };
        let outcomes: Vec<ReplicateOutcome> = results.into_iter().map(|(o, _)| o).collect();
        let failures = FailureCounts {
            fit_failures: outcomes.iter().filter(|o| o.fit_failed).count(),
            not_converged: outcomes.iter().filter(|o| !o.fit_failed && !o.converged).count(),
            bootstrap_statistic_failures: outcomes.iter().map(|o| o.bootstrap_failures).sum(),
            unreliable_bootstraps: outcomes.iter().filter(|o| o.bootstrap_unreliable).count(),
        };
        let statistics = summarize(&self.layout, &outcomes, cfg.b);
        let study = GammaStudy {
            gamma,
            replicates: cfg.replicates,
            b: cfg.b,
            targets,
            mean_response_rate,
            failures,
            statistics,
        };
        Ok((study, outcomes))
    }
}

/// Every `γ` of the configuration. Sampling and response uniforms are keyed
/// by replicate only, so studies for different `γ` share random numbers.
pub fn run_study(config: &SimulationConfig) -> Result<SimulationReport> {
    config.validate()?;
    let ctx = StudyContext::new(config)?;
    let studies = config
        .gammas
        .iter()
        .map(|&g| ctx.run(g).map(|(study, _)| study))
        .collect::<Result<_>>()?;
    Ok(SimulationReport { config: config.clone(), studies })
}

/// The true parameter vector of the covariate model, for oracles.
pub fn true_params(config: &SimulationConfig) -> ModelParams {
    ModelParams(vec![config.beta0])
}
