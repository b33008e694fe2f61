//! Point estimators: the maximum pseudo empirical likelihood estimate of `β`,
//! the mean and cell means it induces, and the cell-based simple competitors.

use serde::Serialize;

use crate::data::{validate, Severity, StratifiedSample};
use crate::error::{Error, Result};
use crate::model::{CategoryModel, ModelParams};
use crate::optimize::{maximize, SearchConfig, SearchResult};
use crate::pel::{PelProblem, PelWeights};

/// `β̂` together with the masses it induces.
#[derive(Debug, Clone, PartialEq)]
pub struct MpeleFit {
    pub params: ModelParams,
    pub weights: PelWeights,
    pub search: SearchResult,
}

/// Maximizes `l(β, π̂)` over `β` and evaluates the masses at the maximizer.
pub fn fit_mpele(
    sample: &StratifiedSample,
    model: &dyn CategoryModel,
    config: &SearchConfig,
) -> Result<MpeleFit> {
    let problem = PelProblem::new(sample, model)?;
    fit_problem(&problem, config)
}

pub(crate) fn fit_problem(problem: &PelProblem<'_>, config: &SearchConfig) -> Result<MpeleFit> {
    let dim = problem.model().param_dim();
    if config.initial.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: config.initial.dim() });
    }
    let search = maximize(|b| problem.objective(b), config)?;
    let weights = problem.masses(search.argmax.as_slice())?;
    Ok(MpeleFit { params: search.argmax.clone(), weights, search })
}

fn respondent_y(sample: &StratifiedSample, unit: usize) -> f64 {
    sample.units()[unit].y.expect("weights index respondents")
}

/// `Ŷ = Σ p̃_hi Y_hi / Σ p̃_hi`.
pub fn overall_mean(weights: &PelWeights, sample: &StratifiedSample) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (&u, &p) in weights.units.iter().zip(&weights.scaled) {
        num += p * respondent_y(sample, u);
        den += p;
    }
    if !(den > 0.0) {
        return Err(Error::ZeroMass);
    }
    Ok(num / den)
}

/// `Ŷ_j = Σ p̃_hi f_h(Y_hi, z_j, β) Y_hi / Σ p̃_hi f_h(Y_hi, z_j, β)`.
pub fn cell_mean(
    weights: &PelWeights,
    sample: &StratifiedSample,
    model: &dyn CategoryModel,
    params: &ModelParams,
    category: usize,
) -> Result<f64> {
    let s = model.num_categories();
    if category >= s {
        return Err(Error::CategoryOutOfRange { index: category + 1, categories: s });
    }
    Ok(cell_means(weights, sample, model, params)?[category])
}

/// `Ŷ_j` for every category.
pub fn cell_means(
    weights: &PelWeights,
    sample: &StratifiedSample,
    model: &dyn CategoryModel,
    params: &ModelParams,
) -> Result<Vec<f64>> {
    if params.dim() != model.param_dim() {
        return Err(Error::DimensionMismatch { expected: model.param_dim(), got: params.dim() });
    }
    let s = model.num_categories();
    let mut num = vec![0.0; s];
    let mut den = vec![0.0; s];
    let mut row = vec![0.0; s];
    for ((&u, &h), &p) in weights.units.iter().zip(&weights.strata).zip(&weights.scaled) {
        let y = respondent_y(sample, u);
        model.probability_row(h, y, params.as_slice(), &mut row);
        for j in 0..s {
            num[j] += p * row[j] * y;
            den[j] += p * row[j];
        }
    }
    num.iter()
        .zip(&den)
        .enumerate()
        .map(|(j, (n, d))| if *d > 0.0 { Ok(n / d) } else { Err(Error::EmptyCategory { category: j + 1 }) })
        .collect()
}

/// `Ỹ_hj`: weighted mean of respondent `y` in cell `(h, j)`.
pub fn simple_cell_sample_mean(sample: &StratifiedSample, stratum: usize, category: usize) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for u in sample.stratum_units(stratum).iter().filter(|u| u.z == category) {
        if let Some(y) = u.y {
            num += u.weight * y;
            den += u.weight;
        }
    }
    if den > 0.0 {
        Ok(num / den)
    } else {
        Err(Error::EmptyRespondentCell { stratum: stratum + 1, category: category + 1 })
    }
}

/// The cell-reweighting estimators.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimpleEstimates {
    /// `Ỹ = Σ_h W_h Σ_j π̂_hj Ỹ_hj`.
    pub overall: f64,
    /// `Ỹ_j`, the cell means pooled across strata with weights `Σ_i w_hi 1{Z_hi = z_j}`.
    pub cell_means: Vec<f64>,
    /// `Ỹ_hj`, row-major by stratum; `None` for cells without respondents.
    pub cell_sample_means: Vec<Option<f64>>,
}

/// Fails with [`Error::EmptyRespondentCell`] when a cell that contains sampled
/// units has no respondents.
pub fn simple_estimators(sample: &StratifiedSample) -> Result<SimpleEstimates> {
    let s = sample.num_categories();
    let strata = sample.num_strata();
    let mut cell_sample_means = Vec::with_capacity(strata * s);
    let mut overall = 0.0;
    let mut cell_num = vec![0.0; s];
    let mut cell_den = vec![0.0; s];
    let mut first_error = None;
    for h in 0..strata {
        let units = sample.stratum_units(h);
        let total: f64 = units.iter().map(|u| u.weight).sum();
        let share = sample.strata()[h].weight_share;
        for j in 0..s {
            let cell_weight: f64 = units.iter().filter(|u| u.z == j).map(|u| u.weight).sum();
            match simple_cell_sample_mean(sample, h, j) {
                Ok(m) => {
                    cell_sample_means.push(Some(m));
                    overall += share * (cell_weight / total) * m;
                    cell_num[j] += cell_weight * m;
                    cell_den[j] += cell_weight;
                }
                Err(e) => {
                    cell_sample_means.push(None);
                    if cell_weight > 0.0 && first_error.is_none() {
                        first_error = Some(e);
                    }
                }
            }
        }
    }
    if let Some(e) = first_error {
        return Err(e);
    }
    let cell_means = (0..s)
        .map(|j| {
            if cell_den[j] > 0.0 {
                Ok(cell_num[j] / cell_den[j])
            } else {
                Err(Error::EmptyCategory { category: j + 1 })
            }
        })
        .collect::<Result<_>>()?;
    Ok(SimpleEstimates { overall, cell_means, cell_sample_means })
}

/// All point estimates for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub beta_hat: ModelParams,
    pub y_bar_hat: f64,
    pub cell_means: Vec<f64>,
    /// `Err` carries the reason the simple estimators are undefined.
    pub simple: std::result::Result<SimpleEstimates, String>,
    pub search: SearchResult,
    pub masses: PelWeights,
    pub max_constraint_residual: f64,
    pub warnings: Vec<String>,
}

pub fn estimate(
    sample: &StratifiedSample,
    model: &dyn CategoryModel,
    config: &SearchConfig,
) -> Result<EstimateReport> {
    sample.check_respondents()?;
    let problem = PelProblem::new(sample, model)?;
    let fit = fit_problem(&problem, config)?;
    let residuals = problem.constraint_residuals(fit.params.as_slice())?;
    let y_bar_hat = overall_mean(&fit.weights, sample)?;
    let cells = cell_means(&fit.weights, sample, model, &fit.params)?;
    let warnings = validate(sample)
        .into_iter()
        .filter(|d| d.severity() == Severity::Warning)
        .map(|d| d.to_string())
        .collect();
    Ok(EstimateReport {
        beta_hat: fit.params,
        y_bar_hat,
        cell_means: cells,
        simple: simple_estimators(sample).map_err(|e| e.to_string()),
        search: fit.search,
        max_constraint_residual: residuals.iter().fold(0.0, |m: f64, r| m.max(r.abs())),
        masses: fit.weights,
        warnings,
    })
}

#[derive(Serialize)]
struct ReportJson<'a> {
    beta: &'a [f64],
    y_bar: f64,
    cell_means: &'a [f64],
    simple: SimpleJson<'a>,
    diagnostics: DiagnosticsJson<'a>,
}

#[derive(Serialize)]
struct SimpleJson<'a> {
    y_bar: Option<f64>,
    cell_means: Option<&'a [f64]>,
    cell_sample_means: Option<&'a [Option<f64>]>,
    error: Option<&'a str>,
}

#[derive(Serialize)]
struct DiagnosticsJson<'a> {
    converged: bool,
    evals: usize,
    objective: f64,
    rejected_fraction: f64,
    stratum_mass_sums: &'a [f64],
    max_constraint_residual: f64,
    warnings: &'a [String],
}

impl EstimateReport {
    pub fn to_json_value(&self) -> serde_json::Value {
        let simple = match &self.simple {
            Ok(s) => SimpleJson {
                y_bar: Some(s.overall),
                cell_means: Some(&s.cell_means),
                cell_sample_means: Some(&s.cell_sample_means),
                error: None,
            },
            Err(e) => SimpleJson { y_bar: None, cell_means: None, cell_sample_means: None, error: Some(e) },
        };
        serde_json::to_value(ReportJson {
            beta: self.beta_hat.as_slice(),
            y_bar: self.y_bar_hat,
            cell_means: &self.cell_means,
            simple,
            diagnostics: DiagnosticsJson {
                converged: self.search.converged,
                evals: self.search.evals,
                objective: self.search.value,
                rejected_fraction: self.search.rejected_fraction,
                stratum_mass_sums: &self.masses.stratum_sums,
                max_constraint_residual: self.max_constraint_residual,
                warnings: &self.warnings,
            },
        })
        .expect("report serializes")
    }
}
