//! Acceptance suite. Each test prints one `PASS`/`FAIL` line for its
//! criterion on stderr (uncaptured) and then asserts.
//!
//! The three shared Monte Carlo studies (R=500 at gamma 0.7 and -0.1 with
//! B=200, R=500 at gamma 0.3 without bootstrap) take several minutes.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;

use proptest::prelude::*;
use proptest::test_runner::{Config as ProptestConfig, TestCaseError, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use pelsurv::bootstrap::{confidence_interval, resample, sample_variance};
use pelsurv::data::{write_sample, CategorySpace, SampleMeta, SampleUnit, StratifiedSample, StratumMeta};
use pelsurv::estimate::{cell_means, estimate, fit_mpele, overall_mean, simple_estimators};
use pelsurv::impute::{
    impute, impute_pel_mean, impute_pel_random, impute_simple_mean, impute_simple_random,
    post_imputation_estimates, ImputationMethod,
};
use pelsurv::model::{logistic, CategoryModel, ModelParams, ProportionalOddsModel};
use pelsurv::optimize::{grid_search, maximize, Evaluation, SearchConfig};
use pelsurv::pel::{distribution_estimate, PelProblem};
use pelsurv::simulation::{
    draw_sample, generate_population, response_probability, run_gamma, Family, GammaStudy, Quantity,
    SimulationConfig,
};

struct Checks {
    items: Vec<(String, bool)>,
}

impl Checks {
    fn new() -> Self {
        Self { items: Vec::new() }
    }

    fn check(&mut self, label: impl Into<String>, ok: bool) {
        self.items.push((label.into(), ok));
    }

    fn within(&mut self, label: &str, value: f64, lo: f64, hi: f64) {
        self.check(format!("{label} = {value:.5} in [{lo}, {hi}]"), value >= lo && value <= hi);
    }

    fn finish(self, criterion: u32, title: &str) {
        let failed: Vec<&str> = self.items.iter().filter(|i| !i.1).map(|i| i.0.as_str()).collect();
        let status = if failed.is_empty() { "PASS" } else { "FAIL" };
        let detail = if failed.is_empty() {
            self.items.iter().map(|i| i.0.as_str()).collect::<Vec<_>>().join("; ")
        } else {
            format!("failed: {}", failed.join("; "))
        };
        let line = format!("{status} criterion {criterion} ({title}): {detail}\n");
        let _ = std::io::stderr().write_all(line.as_bytes());
        assert!(failed.is_empty(), "criterion {criterion} failed: {}", failed.join("; "));
    }
}

fn study(gamma: f64, b: usize) -> GammaStudy {
    let config = SimulationConfig { replicates: 500, b, gammas: vec![gamma], ..SimulationConfig::default() };
    run_gamma(&config, gamma).expect("study runs").0
}

fn study_07() -> &'static GammaStudy {
    static S: OnceLock<GammaStudy> = OnceLock::new();
    S.get_or_init(|| study(0.7, 200))
}

fn study_m01() -> &'static GammaStudy {
    static S: OnceLock<GammaStudy> = OnceLock::new();
    S.get_or_init(|| study(-0.1, 200))
}

fn study_03() -> &'static GammaStudy {
    static S: OnceLock<GammaStudy> = OnceLock::new();
    S.get_or_init(|| study(0.3, 0))
}

fn stat(study: &GammaStudy, family: Family, quantity: Quantity) -> &pelsurv::simulation::StatisticSummary {
    study.get(family, quantity).unwrap_or_else(|| panic!("missing {family:?} {quantity:?}"))
}

// Response rates to four decimals; rows are categories 1..5, columns gamma.
const GAMMAS: [f64; 5] = [0.7, 0.5, 0.3, 0.1, -0.1];
const REFERENCE_RATES: [[&str; 5]; 5] = [
    ["0.6457", "0.5978", "0.5498", "0.5000", "0.4502"],
    ["0.7858", "0.7109", "0.6225", "0.5250", "0.4256"],
    ["0.8808", "0.8022", "0.6900", "0.5498", "0.4013"],
    ["0.9307", "0.8699", "0.7503", "0.5744", "0.3775"],
    ["0.9677", "0.9168", "0.8022", "0.5987", "0.3542"],
];

#[test]
fn criterion_1_response_rate_table() {
    let mut c = Checks::new();
    let mut matched = 0;
    for (j, row) in REFERENCE_RATES.iter().enumerate() {
        for (g, expected) in GAMMAS.iter().zip(row) {
            let got = format!("{:.4}", response_probability(*g, j + 1));
            if got == *expected {
                matched += 1;
            } else {
                c.check(format!("gamma {g}, z={}: {got} vs {expected}", j + 1), false);
            }
        }
    }
    c.check(format!("{matched}/25 entries match"), matched == 25);
    c.finish(1, "response-rate table to 4 dp");
}

#[test]
fn criterion_2_gamma_07_study() {
    let s = study_07();
    let mut c = Checks::new();
    c.within("Var(beta)", stat(s, Family::Mpele, Quantity::Beta).var, 0.5e-4, 2e-4);
    let y = stat(s, Family::Mpele, Quantity::Mean);
    c.within("Var(Y)", y.var, 0.0025, 0.0050);
    c.within("Vboot(Y)/Var(Y)", y.mean_vboot.unwrap_or(f64::NAN) / y.var, 0.7, 1.4);
    c.within("CP(Y)", y.cp.unwrap_or(f64::NAN), 93.0, 99.0);
    let rat_1 = stat(s, Family::Mpele, Quantity::CellMean(1)).rat.unwrap_or(f64::NAN);
    c.check(format!("Rat(Y_1) = {rat_1:.4} <= 0.20"), rat_1 <= 0.20);
    c.within("Rat(Y)", y.rat.unwrap_or(f64::NAN), 0.90, 1.02);
    c.finish(2, "gamma=0.7, R=500, B=200");
}

#[test]
fn criterion_3_gamma_m01_study() {
    let s = study_m01();
    let mut c = Checks::new();
    c.within("Var(Y)", stat(s, Family::Mpele, Quantity::Mean).var, 0.0055, 0.011);
    let rat_1 = stat(s, Family::Mpele, Quantity::CellMean(1)).rat.unwrap_or(f64::NAN);
    c.check(format!("Rat(Y_1) = {rat_1:.4} <= 0.25"), rat_1 <= 0.25);
    c.within("mean-imputation Var(Y_1I)", stat(s, Family::PelMeanImputation, Quantity::CellMean(1)).var, 0.015, 0.032);
    c.finish(3, "gamma=-0.1, R=500, B=200");
}

#[test]
fn criterion_4_relative_bias() {
    let mut c = Checks::new();
    for s in [study_07(), study_m01()] {
        let worst = s
            .statistics
            .iter()
            .max_by(|a, b| a.relative_bias_pct.abs().total_cmp(&b.relative_bias_pct.abs()))
            .expect("statistics");
        c.check(
            format!("gamma {}: {} statistics, max |RB| {:.3}% ({}.{})", s.gamma, s.statistics.len(), worst.relative_bias_pct.abs(), worst.estimator.name(), worst.statistic),
            s.statistics.len() == 37 && s.statistics.iter().all(|t| t.relative_bias_pct.abs() < 1.0),
        );
    }
    c.finish(4, "relative bias below 1%");
}

#[test]
fn criterion_6_efficiency_and_cell_gain() {
    let mut c = Checks::new();
    for s in [study_07(), study_03(), study_m01()] {
        let g = s.gamma;
        let none = stat(s, Family::Mpele, Quantity::Mean).var;
        let mean = stat(s, Family::PelMeanImputation, Quantity::Mean).var;
        let random = stat(s, Family::PelRandomImputation, Quantity::Mean).var;
        c.check(format!("gamma {g}: Var none {none:.5} <= 1.1 x mean {mean:.5}"), none <= 1.1 * mean);
        c.check(format!("gamma {g}: Var mean {mean:.5} <= 1.1 x random {random:.5}"), mean <= 1.1 * random);
        for family in [Family::Mpele, Family::PelMeanImputation, Family::PelRandomImputation] {
            let r1 = stat(s, family, Quantity::CellMean(1)).rat.unwrap_or(f64::NAN);
            let r5 = stat(s, family, Quantity::CellMean(5)).rat.unwrap_or(f64::NAN);
            c.check(format!("gamma {g} {}: Rat(Y_1) {r1:.3} < Rat(Y_5) {r5:.3}", family.name()), r1 < r5);
        }
    }
    c.finish(6, "efficiency ordering and cell-gain monotonicity");
}

// ---------------------------------------------------------------------------
// criterion 5

/// A random sample with `strata` strata and `s` categories; every stratum has
/// at least two units and one respondent, and every category occurs.
fn random_sample(seed: u64, strata: usize, s: usize, full_response: bool, equal_weights: bool) -> StratifiedSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sizes: Vec<usize> = (0..strata).map(|_| rng.random_range(2..=15)).collect();
    sizes[0] = sizes[0].max(s);
    let pop: Vec<u64> = sizes.iter().map(|&n| n as u64 * rng.random_range(3..40)).collect();
    let total: u64 = pop.iter().sum();
    let mut units = Vec::new();
    for (h, &n) in sizes.iter().enumerate() {
        let base = pop[h] as f64 / (total as f64 * n as f64);
        for i in 0..n {
            let w = if equal_weights { base } else { base * rng.random_range(0.2..3.0) };
            let z = if h == 0 && i < s { i } else { rng.random_range(0..s) };
            let y = rng.random_range(0.5..12.0);
            let responds = full_response || i == 0 || rng.random_bool(0.65);
            units.push(if responds { SampleUnit::respondent(h, w, z, y) } else { SampleUnit::nonrespondent(h, w, z) });
        }
    }
    StratifiedSample::new(
        CategorySpace::numbered(s).unwrap(),
        StratumMeta::from_population_sizes(&pop).unwrap(),
        units,
    )
    .unwrap()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

fn ensure(ok: bool, what: &str) -> Result<(), TestCaseError> {
    if ok {
        Ok(())
    } else {
        Err(TestCaseError::fail(what.to_string()))
    }
}

fn run_property<S, F>(name: &str, strategy: S, test: F) -> (String, bool)
where
    S: Strategy,
    F: Fn(S::Value) -> Result<(), TestCaseError>,
{
    let mut runner = TestRunner::new(ProptestConfig { cases: 200, ..ProptestConfig::default() });
    match runner.run(&strategy, test) {
        Ok(()) => (format!("{name} (200 cases)"), true),
        Err(e) => (format!("{name}: {e}"), false),
    }
}

fn identity_properties() -> Vec<(String, bool)> {
    let mut out = Vec::new();
    let sample_args = (any::<u64>(), 1usize..=3, 1usize..=5);

    out.push(run_property("model rows sum to one", (1usize..=6, -3.0f64..3.0, -20.0f64..20.0), |(s, b, y)| {
        let m = ProportionalOddsModel::standard(s).unwrap();
        let mut row = vec![0.0; s];
        m.probability_row(0, y, &[b], &mut row);
        ensure((row.iter().sum::<f64>() - 1.0).abs() < 1e-10, "row sum")?;
        ensure(s != 1 || row == [1.0], "single category row")
    }));

    out.push(run_property("covariate-free rows", (2usize..=6, -20.0f64..20.0), |(s, y)| {
        let m = ProportionalOddsModel::standard(s).unwrap();
        let mut row = vec![0.0; s];
        m.probability_row(0, y, &[0.0], &mut row);
        let cum = |j: usize| if j == 0 { 0.0 } else if j == s { 1.0 } else { logistic(j as f64) };
        for (j, v) in row.iter().enumerate() {
            ensure((v - (cum(j + 1) - cum(j))).abs() < 1e-12, "sigma difference")?;
        }
        Ok(())
    }));

    out.push(run_property("full response: masses are normalized weights, objective reduces", (sample_args.clone(), -1.5f64..1.5), |((seed, h, s), b)| {
        let sample = random_sample(seed, h, s, true, false);
        let m = ProportionalOddsModel::standard(s).unwrap();
        let problem = PelProblem::new(&sample, &m).unwrap();
        let t = problem.table();
        for hh in 0..h {
            for j in 0..s {
                ensure(t.a(hh, j) == 0.0, "a_hj is zero")?;
            }
        }
        let w = problem.masses(&[b]).unwrap();
        let mut reduced = 0.0;
        let mut loglik = 0.0;
        let mut row = vec![0.0; s];
        for (&u, &p) in w.units.iter().zip(&w.masses) {
            let unit = sample.units()[u];
            let sum = t.weight_sum(unit.stratum);
            ensure(close(p, unit.weight / sum, 1e-12), "mass")?;
            reduced += unit.weight * (unit.weight / sum).ln();
            m.probability_row(unit.stratum, unit.y.unwrap(), &[b], &mut row);
            loglik += unit.weight * row[unit.z].ln();
        }
        let l = problem.objective(&[b]).value().unwrap();
        ensure(close(l - reduced, loglik, 1e-12), "objective reduction")
    }));

    out.push(run_property("single category: respondent weights, zero residual, cell mean is overall", sample_args.clone(), |(seed, h, _)| {
        let sample = random_sample(seed, h, 1, false, false);
        let m = ProportionalOddsModel::standard(1).unwrap();
        let problem = PelProblem::new(&sample, &m).unwrap();
        let w = problem.masses(&[0.3]).unwrap();
        for (&u, &p) in w.units.iter().zip(&w.masses) {
            let unit = sample.units()[u];
            let resp: f64 = sample.stratum_units(unit.stratum).iter().filter(|x| x.responded()).map(|x| x.weight).sum();
            ensure(close(p, unit.weight / resp, 1e-12), "mass")?;
        }
        ensure(problem.constraint_residuals(&[0.3]).unwrap().iter().all(|r| *r == 0.0), "residual")?;
        let overall = overall_mean(&w, &sample).unwrap();
        let cells = cell_means(&w, &sample, &m, &ModelParams(vec![0.3])).unwrap();
        ensure(cells[0] == overall, "cell mean")?;
        let imp = impute_pel_mean(&sample, &m, &ModelParams(vec![0.3]), &w).unwrap();
        for h in 0..sample.num_strata() {
            let range = sample.stratum_range(h);
            let (num, den) = w.units.iter().zip(&w.masses).filter(|(u, _)| range.contains(u)).fold((0.0, 0.0), |acc, (&u, &p)| {
                (acc.0 + p * sample.units()[u].y.unwrap(), acc.1 + p)
            });
            for i in range.clone() {
                if imp.imputed[i] {
                    ensure(close(imp.values[i], num / den, 1e-12), "kernel mean")?;
                }
            }
        }
        Ok(())
    }));

    out.push(run_property("zero slope: every cell mean equals the overall mean", sample_args.clone(), |(seed, h, s)| {
        let sample = random_sample(seed, h, s, false, false);
        let m = ProportionalOddsModel::standard(s).unwrap();
        let w = PelProblem::new(&sample, &m).unwrap().masses(&[0.0]).unwrap();
        let overall = overall_mean(&w, &sample).unwrap();
        for c in cell_means(&w, &sample, &m, &ModelParams(vec![0.0])).unwrap() {
            ensure(close(c, overall, 1e-12), "cell mean")?;
        }
        let imp = impute_pel_mean(&sample, &m, &ModelParams(vec![0.0]), &w).unwrap();
        for h in 0..sample.num_strata() {
            let vals: Vec<f64> = sample.stratum_range(h).filter(|&i| imp.imputed[i]).map(|i| imp.values[i]).collect();
            ensure(vals.windows(2).all(|p| close(p[0], p[1], 1e-12)), "imputed values identical within stratum")?;
        }
        Ok(())
    }));

    out.push(run_property("distribution estimate normalization", (sample_args.clone(), -1.0f64..0.5), |((seed, h, s), b)| {
        let sample = random_sample(seed, h, s, false, false);
        let m = ProportionalOddsModel::standard(s).unwrap();
        let Ok(w) = PelProblem::new(&sample, &m).unwrap().masses(&[b]) else { return Ok(()) };
        let d = distribution_estimate(&w, &sample).unwrap();
        let max = sample.units().iter().filter_map(|u| u.y).fold(f64::MIN, f64::max);
        ensure((d.cdf(max) - 1.0).abs() < 1e-12 && (d.cdf(f64::INFINITY) - 1.0).abs() < 1e-12, "F at max")?;
        ensure(close(d.g(f64::INFINITY), w.total_scaled(), 1e-12), "G at infinity")
    }));

    out.push(run_property("one stratum, full response, equal weights: sample means", any::<u64>(), |seed| {
        let sample = random_sample(seed, 1, 3, true, true);
        let ys: Vec<f64> = sample.units().iter().map(|u| u.y.unwrap()).collect();
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        let m = ProportionalOddsModel::standard(3).unwrap();
        let w = PelProblem::new(&sample, &m).unwrap().masses(&[-0.2]).unwrap();
        ensure(close(overall_mean(&w, &sample).unwrap(), mean, 1e-12), "pel mean")?;
        let d = distribution_estimate(&w, &sample).unwrap();
        for &y in &ys {
            let ecdf = ys.iter().filter(|&&v| v <= y).count() as f64 / ys.len() as f64;
            ensure(close(d.cdf(y), ecdf, 1e-12), "empirical cdf")?;
        }
        let simple = simple_estimators(&sample).map_err(|e| TestCaseError::fail(e.to_string()))?;
        ensure(close(simple.overall, mean, 1e-12), "simple mean")
    }));

    out.push(run_property("equal weights: simple cell means are respondent averages", (any::<u64>(), 1usize..=3), |(seed, h)| {
        let sample = random_sample(seed, h, 3, false, true);
        let Ok(est) = simple_estimators(&sample) else { return Ok(()) };
        for hh in 0..h {
            for j in 0..3 {
                let ys: Vec<f64> = sample.stratum_units(hh).iter().filter(|u| u.z == j).filter_map(|u| u.y).collect();
                if let Some(v) = est.cell_sample_means[hh * 3 + j] {
                    ensure(close(v, ys.iter().sum::<f64>() / ys.len() as f64, 1e-12), "cell average")?;
                }
            }
        }
        Ok(())
    }));

    out.push(run_property("imputation: full response unchanged, weighted mean, same seed same output", (sample_args.clone(), any::<u64>()), |((seed, h, s), is)| {
        let full = random_sample(seed, h, s, true, false);
        let m = ProportionalOddsModel::standard(s).unwrap();
        let beta = ModelParams(vec![-0.4]);
        let masses = PelProblem::new(&full, &m).unwrap().masses(beta.as_slice()).unwrap();
        let weighted: f64 = full.units().iter().map(|u| u.weight * u.y.unwrap()).sum();
        for method in ImputationMethod::ALL {
            let imp = impute(method, &full, Some((&m, &beta, &masses)), is).unwrap();
            ensure(imp.imputed.iter().all(|i| !i), "nothing imputed")?;
            ensure(imp.values.iter().zip(full.units()).all(|(v, u)| Some(*v) == u.y), "values unchanged")?;
            ensure(close(post_imputation_estimates(&imp).unwrap().overall, weighted, 1e-12), "weighted estimator")?;
        }
        let partial = random_sample(seed, h, s, false, false);
        let Ok(masses) = PelProblem::new(&partial, &m).unwrap().masses(beta.as_slice()) else { return Ok(()) };
        let a = impute_pel_random(&partial, &m, &beta, &masses, is).unwrap();
        let b = impute_pel_random(&partial, &m, &beta, &masses, is).unwrap();
        ensure(a == b, "pel random determinism")?;
        if let (Ok(a), Ok(b)) = (impute_simple_random(&partial, is), impute_simple_random(&partial, is)) {
            ensure(a == b, "simple random determinism")?;
        }
        Ok(())
    }));

    out.push(run_property("single donor is used surely", (0.1f64..5.0, 0.5f64..9.0, any::<u64>()), |(w, y, seed)| {
        let units = vec![
            SampleUnit::respondent(0, w, 0, y),
            SampleUnit::nonrespondent(0, w, 0),
            SampleUnit::nonrespondent(0, w, 0),
        ];
        let sample = StratifiedSample::new(CategorySpace::numbered(1).unwrap(), StratumMeta::from_population_sizes(&[30]).unwrap(), units).unwrap();
        let m = ProportionalOddsModel::standard(1).unwrap();
        let fit = fit_mpele(&sample, &m, &SearchConfig::default()).unwrap();
        for imp in [impute_simple_random(&sample, seed).unwrap(), impute_pel_random(&sample, &m, &fit.params, &fit.weights, seed).unwrap()] {
            ensure(imp.values.iter().all(|&v| v == y), "random donor value")?;
        }
        for imp in [impute_simple_mean(&sample).unwrap(), impute_pel_mean(&sample, &m, &fit.params, &fit.weights).unwrap()] {
            ensure(imp.values.iter().all(|&v| close(v, y, 1e-12)), "mean donor value")?;
        }
        Ok(())
    }));

    out.push(run_property("bootstrap replicates keep stratum sizes", (sample_args.clone(), any::<u64>(), 0u64..1000), |((seed, h, s), bs, r)| {
        let sample = random_sample(seed, h, s, false, false);
        let rep = resample(&sample, bs, r).unwrap();
        for hh in 0..h {
            ensure(rep.stratum_size(hh) == sample.stratum_size(hh), "size")?;
            ensure(rep.stratum_units(hh).iter().all(|u| sample.stratum_units(hh).contains(u)), "drawn from stratum")?;
        }
        Ok(())
    }));

    out.push(run_property("variance and intervals", (-50.0f64..50.0, 0.0f64..10.0, 2usize..300), |(point, v, b)| {
        ensure(sample_variance(&vec![point; b]) == 0.0, "constant statistic")?;
        let (lo, hi) = confidence_interval(point, v).unwrap();
        ensure(close(point - lo, hi - point, 1e-12) && close(hi - lo, 2.0 * 1.96 * v.sqrt(), 1e-12), "symmetric interval")?;
        let (lo, hi) = confidence_interval(point, 0.0).unwrap();
        ensure(lo == point && hi == point, "degenerate interval")
    }));

    out.push(run_property("optimizer recovers analytic maxima", (-5.0f64..5.0, -5.0f64..5.0), |(a, b)| {
        let cfg = SearchConfig { initial: ModelParams(vec![3.0, 4.0]), ..SearchConfig::for_dim(2) };
        let r = maximize(
            |x| if x[0].hypot(x[1]) > 10.0 { Evaluation::Rejected } else { Evaluation::Value(-((x[0] - a / 2.0).powi(2) + (x[1] - b / 2.0).powi(2))) },
            &cfg,
        )
        .unwrap();
        ensure((r.argmax.0[0] - a / 2.0).abs() < 1e-6 && (r.argmax.0[1] - b / 2.0).abs() < 1e-6, "argmax")
    }));

    out.push(run_property("simulated samples satisfy n_h w_h = W_h", (any::<u64>(), 0u64..50), |(seed, r)| {
        let c = SimulationConfig { strata_sizes: vec![330, 290, 540], y_distributions: SimulationConfig::default().y_distributions[..3].to_vec(), ..SimulationConfig::default() };
        let pop = generate_population(&c, seed).unwrap();
        let s = draw_sample(&pop, &c, 0.7, seed, r).unwrap();
        for h in 0..s.num_strata() {
            let units = s.stratum_units(h);
            ensure(units.iter().all(|u| u.weight == units[0].weight), "equal weights")?;
            ensure(close(units.len() as f64 * units[0].weight, s.strata()[h].weight_share, 1e-12), "n_h w_h")?;
        }
        Ok(())
    }));
    out
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) }
}

/// Median over 200 replicates of the largest per-stratum mass-sum deviation
/// and of the largest constraint residual.
fn diagnostics_at(scale: u64) -> (f64, f64) {
    let base = SimulationConfig::default();
    let c = SimulationConfig { strata_sizes: base.strata_sizes.iter().map(|n| n * scale).collect(), ..base };
    let pop = generate_population(&c, c.seed).unwrap();
    let model = c.model().unwrap();
    let rows: Vec<(f64, f64)> = (0..200u64)
        .into_par_iter()
        .map(|r| {
            let s = draw_sample(&pop, &c, 0.7, c.seed, r).unwrap();
            let rep = estimate(&s, &model, &SearchConfig::default()).unwrap();
            let dev = rep.masses.stratum_sums.iter().map(|x| (x - 1.0).abs()).fold(0.0, f64::max);
            (dev, rep.max_constraint_residual)
        })
        .collect();
    (median(rows.iter().map(|r| r.0).collect()), median(rows.iter().map(|r| r.1).collect()))
}

fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (sample_variance(v) / n).sqrt())
}

fn imputation_checks(c: &mut Checks) {
    let config = SimulationConfig::default();
    let pop = generate_population(&config, config.seed).unwrap();
    let sample = draw_sample(&pop, &config, 0.3, config.seed, 0).unwrap();
    let model = config.model().unwrap();
    let fit = fit_mpele(&sample, &model, &SearchConfig::default()).unwrap();
    let pel_mean = post_imputation_estimates(&impute_pel_mean(&sample, &model, &fit.params, &fit.weights).unwrap()).unwrap();
    let simple_mean = post_imputation_estimates(&impute_simple_mean(&sample).unwrap()).unwrap();
    let draws: Vec<(f64, f64, f64, f64)> = (0..10_000u64)
        .into_par_iter()
        .map(|seed| {
            let p = post_imputation_estimates(&impute_pel_random(&sample, &model, &fit.params, &fit.weights, seed).unwrap()).unwrap();
            let s = post_imputation_estimates(&impute_simple_random(&sample, seed).unwrap()).unwrap();
            (p.overall, p.cell_means[0], s.overall, s.cell_means[0])
        })
        .collect();
    let cases = [
        ("pel Y_I", draws.iter().map(|d| d.0).collect::<Vec<_>>(), pel_mean.overall),
        ("pel Y_1I", draws.iter().map(|d| d.1).collect(), pel_mean.cell_means[0]),
        ("simple Y_I", draws.iter().map(|d| d.2).collect(), simple_mean.overall),
        ("simple Y_1I", draws.iter().map(|d| d.3).collect(), simple_mean.cell_means[0]),
    ];
    for (name, values, target) in cases {
        let (m, se) = mean_and_se(&values);
        c.check(format!("{name}: |{m:.5} - {target:.5}| = {:.2} SE", (m - target).abs() / se), (m - target).abs() <= 3.0 * se);
    }
}

fn grid_checks(c: &mut Checks) {
    let config = SimulationConfig::default();
    let pop = generate_population(&config, config.seed).unwrap();
    let model = config.model().unwrap();
    let worst = (0..20u64)
        .into_par_iter()
        .map(|r| {
            let s = draw_sample(&pop, &config, 0.7, config.seed, 1000 + r).unwrap();
            let problem = PelProblem::new(&s, &model).unwrap();
            let (coarse, _) = grid_search(|b| problem.objective(&[b]), -1.5, 0.7, 1e-3);
            let (fine, _) = grid_search(|b| problem.objective(&[b]), coarse - 2e-3, coarse + 2e-3, 1e-6);
            let fit = fit_mpele(&s, &model, &SearchConfig::default()).unwrap();
            (fit.params.0[0] - fine).abs()
        })
        .reduce(|| 0.0, f64::max);
    c.check(format!("grid oracle, 20 datasets: max |diff| {worst:.2e} < 2e-4"), worst < 2e-4);
}

fn cli_checks(c: &mut Checks) {
    let dir = tempfile::tempdir().unwrap();
    let config = SimulationConfig::default();
    let pop = generate_population(&config, 3).unwrap();
    let sample = draw_sample(&pop, &config, 0.3, 3, 0).unwrap();
    let data = dir.path().join("s.csv");
    let meta = dir.path().join("m.json");
    let mut buf = Vec::new();
    write_sample(&sample, &mut buf).unwrap();
    fs::write(&data, buf).unwrap();
    fs::write(&meta, SampleMeta::describe(&sample).to_json()).unwrap();
    let input = |cmd: &str| vec![cmd.to_string(), "--data".into(), data.display().to_string(), "--meta".into(), meta.display().to_string()];
    let mut commands: Vec<(String, Vec<String>)> = vec![
        ("estimate".into(), [input("estimate"), vec!["--B".into(), "20".into(), "--seed".into(), "4".into()]].concat()),
        ("bootstrap".into(), [input("bootstrap"), vec!["--B".into(), "20".into(), "--seed".into(), "4".into(), "--method".into(), "pel_mean,pel_random,simple_mean,simple_random".into()]].concat()),
        ("simulate".into(), ["simulate", "--gamma", "0.7,-0.1", "--replicates", "6", "--B", "10", "--seed", "2"].map(String::from).to_vec()),
    ];
    for method in ImputationMethod::ALL {
        commands.push((format!("impute {method}"), [input("impute"), vec!["--method".into(), method.name().into(), "--seed".into(), "8".into()]].concat()));
    }
    let run = |args: &[String], out: &Path| {
        let o = Command::new(env!("CARGO_BIN_EXE_pelsurv")).args(args).arg("--out").arg(out).env_remove("PELSURV_THREADS").output().unwrap();
        (o.status.success(), o.stdout, fs::read(out).unwrap_or_default())
    };
    for (name, args) in commands {
        let a = run(&args, &dir.path().join("a.out"));
        let b = run(&args, &dir.path().join("b.out"));
        c.check(format!("{name} byte-identical"), a.0 && b.0 && !a.2.is_empty() && a == b);
    }
}

#[test]
fn criterion_5_property_suite() {
    let mut c = Checks::new();
    for (label, ok) in identity_properties() {
        c.check(label, ok);
    }
    let (dev_1, res_1) = diagnostics_at(1);
    let (dev_4, res_4) = diagnostics_at(4);
    c.within("mass-sum deviation ratio n vs 4n", dev_1 / dev_4, 1.3, 3.0);
    c.within("constraint residual ratio n vs 4n", res_1 / res_4, 1.3, 3.0);
    imputation_checks(&mut c);
    grid_checks(&mut c);
    cli_checks(&mut c);
    c.finish(5, "property suite");
}

/// Full-scale run: R=1000, B=200, all five gammas. Run with
/// `cargo test --release --test acceptance -- --ignored`.
#[test]
#[ignore]
fn full_scale_study() {
    let config = SimulationConfig::default();
    let report = pelsurv::simulation::run_study(&config).unwrap();
    let _ = std::io::stderr().write_all(report.render_table().as_bytes());
    for s in &report.studies {
        assert!(s.statistics.iter().all(|t| t.relative_bias_pct.abs() < 1.0));
    }
}
