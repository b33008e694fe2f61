//! Pseudo empirical likelihood: plug-in category probabilities, the profile
//! point masses on respondents, the pseudo log-likelihood in `β`, the
//! moment-constraint residuals and the resulting distribution estimators.

use crate::data::StratifiedSample;
use crate::error::{Error, Result};
use crate::model::{CategoryModel, ModelParams, PROB_FLOOR};
use crate::optimize::Evaluation;

/// Sum after sorting, so the result does not depend on input order.
fn canonical_sum(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}

/// Per-(stratum, category) nonrespondent weight totals `a_hj` and plug-in
/// probabilities `π̂_hj`, stored row-major by stratum.
#[derive(Debug, Clone, PartialEq)]
pub struct CellWeightTable {
    strata: usize,
    categories: usize,
    a: Vec<f64>,
    pi_hat: Vec<f64>,
    weight_sums: Vec<f64>,
    ratio: Vec<f64>,
    constant: f64,
}

impl CellWeightTable {
    pub fn num_strata(&self) -> usize {
        self.strata
    }

    pub fn num_categories(&self) -> usize {
        self.categories
    }

    /// `a_hj`: weight of nonrespondents in stratum `h` with `Z = z_j`.
    pub fn a(&self, h: usize, j: usize) -> f64 {
        self.a[h * self.categories + j]
    }

    /// `π̂_hj`: weighted share of all sampled units in stratum `h` with `Z = z_j`.
    pub fn pi_hat(&self, h: usize, j: usize) -> f64 {
        self.pi_hat[h * self.categories + j]
    }

    /// `Σ_i w_hi` over all sampled units of stratum `h`.
    pub fn weight_sum(&self, h: usize) -> f64 {
        self.weight_sums[h]
    }

    /// `a_hj / π̂_hj`, with `0/0 = 0`.
    pub fn ratio(&self, h: usize, j: usize) -> f64 {
        self.ratio[h * self.categories + j]
    }

    fn ratio_row(&self, h: usize) -> &[f64] {
        &self.ratio[h * self.categories..(h + 1) * self.categories]
    }

    /// `Σ_h Σ_j a_hj log π̂_hj` (terms with `a_hj = 0` omitted).
    pub fn log_pi_term(&self) -> f64 {
        self.constant
    }
}

pub fn cell_weight_table(sample: &StratifiedSample) -> CellWeightTable {
    let strata = sample.num_strata();
    let s = sample.num_categories();
    let mut a = vec![0.0; strata * s];
    let mut pi_hat = vec![0.0; strata * s];
    let mut ratio = vec![0.0; strata * s];
    let mut weight_sums = vec![0.0; strata];
    let mut constant_terms = Vec::new();
    for h in 0..strata {
        let units = sample.stratum_units(h);
        let total = canonical_sum(units.iter().map(|u| u.weight).collect());
        weight_sums[h] = total;
        for j in 0..s {
            let in_cell = units.iter().filter(|u| u.z == j);
            let all = canonical_sum(in_cell.clone().map(|u| u.weight).collect());
            let missing =
                canonical_sum(in_cell.filter(|u| !u.responded()).map(|u| u.weight).collect());
            let k = h * s + j;
            pi_hat[k] = all / total;
            a[k] = missing;
            if missing > 0.0 {
                ratio[k] = missing / pi_hat[k];
                constant_terms.push(missing * pi_hat[k].ln());
            }
        }
    }
    CellWeightTable {
        strata,
        categories: s,
        a,
        pi_hat,
        weight_sums,
        ratio,
        constant: canonical_sum(constant_terms),
    }
}

/// Profile masses `p̂_hi` on respondents and their scaled versions
/// `p̃_hi = W_h p̂_hi`, in sample order.
#[derive(Debug, Clone, PartialEq)]
pub struct PelWeights {
    /// Index into [`StratifiedSample::units`] of each respondent.
    pub units: Vec<usize>,
    pub strata: Vec<usize>,
    pub masses: Vec<f64>,
    pub scaled: Vec<f64>,
    /// `Σ_i p̂_hi` per stratum.
    pub stratum_sums: Vec<f64>,
}

impl PelWeights {
    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn total_scaled(&self) -> f64 {
        self.scaled.iter().sum()
    }

    /// Mass of the respondent at sample index `unit`, if it is one.
    pub fn mass_of(&self, unit: usize) -> Option<f64> {
        self.units.binary_search(&unit).ok().map(|k| self.masses[k])
    }
}

#[derive(Debug, Clone, Copy)]
struct Respondent {
    unit: usize,
    stratum: usize,
    z: usize,
    y: f64,
    w: f64,
}

/// Everything needed to evaluate the pseudo likelihood for one sample, with
/// respondents kept in a canonical order (stratum, then `y`, `z`, weight) so
/// that sums do not depend on the order units were supplied in.
pub struct PelProblem<'a> {
    model: &'a dyn CategoryModel,
    table: CellWeightTable,
    respondents: Vec<Respondent>,
    shares: Vec<f64>,
    categories: usize,
}

impl<'a> PelProblem<'a> {
    pub fn new(sample: &StratifiedSample, model: &'a dyn CategoryModel) -> Result<Self> {
        Self::with_table(sample, model, cell_weight_table(sample))
    }

    pub fn with_table(
        sample: &StratifiedSample,
        model: &'a dyn CategoryModel,
        table: CellWeightTable,
    ) -> Result<Self> {
        if model.num_categories() != sample.num_categories() {
            return Err(Error::InvalidModel(format!(
                "model has {} categories, data have {}",
                model.num_categories(),
                sample.num_categories()
            )));
        }
        sample.check_respondents()?;
        let mut respondents: Vec<Respondent> = sample
            .units()
            .iter()
            .enumerate()
            .filter_map(|(unit, u)| {
                u.y.map(|y| Respondent { unit, stratum: u.stratum, z: u.z, y, w: u.weight })
            })
            .collect();
        respondents.sort_by(|a, b| {
            a.stratum
                .cmp(&b.stratum)
                .then(a.y.total_cmp(&b.y))
                .then(a.z.cmp(&b.z))
                .then(a.w.total_cmp(&b.w))
        });
        Ok(Self {
            model,
            table,
            respondents,
            shares: sample.strata().iter().map(|m| m.weight_share).collect(),
            categories: sample.num_categories(),
        })
    }

    pub fn table(&self) -> &CellWeightTable {
        &self.table
    }

    pub fn model(&self) -> &dyn CategoryModel {
        self.model
    }

    fn check_dim(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.model.param_dim() {
            return Err(Error::DimensionMismatch { expected: self.model.param_dim(), got: params.len() });
        }
        Ok(())
    }

    /// Mass denominator `Σ_i w_hi − Σ_j (a_hj/π̂_hj) f_h(y, z_j, β)`.
    #[inline]
    fn denominator(&self, stratum: usize, row: &[f64]) -> f64 {
        let correction: f64 =
            self.table.ratio_row(stratum).iter().zip(row).map(|(r, f)| r * f).sum();
        self.table.weight_sum(stratum) - correction
    }

    /// The pseudo log-likelihood `l(β, π̂)`, or `Rejected` where some
    /// denominator is nonpositive.
    pub fn objective(&self, params: &[f64]) -> Evaluation {
        if params.len() != self.model.param_dim() || params.iter().any(|p| !p.is_finite()) {
            return Evaluation::Rejected;
        }
        let mut row = vec![0.0; self.categories];
        let mut total = 0.0;
        for r in &self.respondents {
            self.model.probability_row(r.stratum, r.y, params, &mut row);
            let denom = self.denominator(r.stratum, &row);
            if !(denom > 0.0) {
                return Evaluation::Rejected;
            }
            let f = row[r.z].max(PROB_FLOOR);
            total += r.w * (r.w * f / denom).ln();
        }
        let value = total + self.table.log_pi_term();
        if value.is_finite() {
            Evaluation::Value(value)
        } else {
            Evaluation::Rejected
        }
    }

    pub fn masses(&self, params: &[f64]) -> Result<PelWeights> {
        self.check_dim(params)?;
        let mut row = vec![0.0; self.categories];
        let mut entries = Vec::with_capacity(self.respondents.len());
        for r in &self.respondents {
            self.model.probability_row(r.stratum, r.y, params, &mut row);
            let denom = self.denominator(r.stratum, &row);
            if !(denom > 0.0) {
                return Err(Error::NonpositiveDenominator { stratum: r.stratum + 1, unit: r.unit + 1 });
            }
            entries.push((r.unit, r.stratum, r.w / denom));
        }
        let mut stratum_terms = vec![Vec::new(); self.shares.len()];
        for &(_, h, p) in &entries {
            stratum_terms[h].push(p);
        }
        let stratum_sums = stratum_terms.into_iter().map(canonical_sum).collect();
        entries.sort_by_key(|e| e.0);
        Ok(PelWeights {
            units: entries.iter().map(|e| e.0).collect(),
            strata: entries.iter().map(|e| e.1).collect(),
            masses: entries.iter().map(|e| e.2).collect(),
            scaled: entries.iter().map(|e| self.shares[e.1] * e.2).collect(),
            stratum_sums,
        })
    }

    /// `Σ_i p̂_hi (f_h(Y_hi, z_j, β) − π̂_hj)` for every `(h, j)`, row-major.
    pub fn constraint_residuals(&self, params: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(params)?;
        let s = self.categories;
        let mut row = vec![0.0; s];
        let mut out = vec![0.0; self.shares.len() * s];
        for r in &self.respondents {
            self.model.probability_row(r.stratum, r.y, params, &mut row);
            let denom = self.denominator(r.stratum, &row);
            if !(denom > 0.0) {
                return Err(Error::NonpositiveDenominator { stratum: r.stratum + 1, unit: r.unit + 1 });
            }
            let p = r.w / denom;
            for j in 0..s {
                out[r.stratum * s + j] += p * (row[j] - self.table.pi_hat(r.stratum, j));
            }
        }
        Ok(out)
    }
}

/// Masses at `params`; a nonpositive denominator is a hard error.
pub fn pel_masses(
    sample: &StratifiedSample,
    model: &dyn CategoryModel,
    params: &ModelParams,
    table: &CellWeightTable,
) -> Result<PelWeights> {
    PelProblem::with_table(sample, model, table.clone())?.masses(params.as_slice())
}

pub fn objective(
    sample: &StratifiedSample,
    model: &dyn CategoryModel,
    params: &ModelParams,
    table: &CellWeightTable,
) -> Result<Evaluation> {
    Ok(PelProblem::with_table(sample, model, table.clone())?.objective(params.as_slice()))
}

pub fn constraint_residuals(
    sample: &StratifiedSample,
    model: &dyn CategoryModel,
    params: &ModelParams,
    table: &CellWeightTable,
) -> Result<Vec<f64>> {
    PelProblem::with_table(sample, model, table.clone())?.constraint_residuals(params.as_slice())
}

/// The step-function estimators `Ĝ` (unnormalized) and `F̂` of the marginal
/// distribution of `Y`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionEstimate {
    support: Vec<f64>,
    masses: Vec<f64>,
    cumulative: Vec<f64>,
    total: f64,
}

impl DistributionEstimate {
    /// Sorted respondent values.
    pub fn support(&self) -> &[f64] {
        &self.support
    }

    /// Normalized masses aligned with [`DistributionEstimate::support`].
    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// `Σ_h Σ_i p̃_hi`, the value of `Ĝ(∞)`.
    pub fn total_mass(&self) -> f64 {
        self.total
    }

    /// `F̂(y)`.
    pub fn cdf(&self, y: f64) -> f64 {
        let k = self.support.partition_point(|&v| v <= y);
        if k == 0 {
            0.0
        } else if k == self.support.len() {
            1.0
        } else {
            self.cumulative[k - 1]
        }
    }

    /// `Ĝ(y) = Σ_h W_h Σ_i p̂_hi 1{Y_hi ≤ y}`.
    pub fn g(&self, y: f64) -> f64 {
        self.cdf(y) * self.total
    }
}

pub fn distribution_estimate(weights: &PelWeights, sample: &StratifiedSample) -> Result<DistributionEstimate> {
    let mut points: Vec<(f64, f64)> = weights
        .units
        .iter()
        .zip(&weights.scaled)
        .map(|(&u, &p)| (sample.units()[u].y.expect("weights index respondents"), p))
        .collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let total: f64 = points.iter().map(|p| p.1).sum();
    if !(total > 0.0) {
        return Err(Error::ZeroMass);
    }
    let mut support = Vec::with_capacity(points.len());
    let mut masses = Vec::with_capacity(points.len());
    for (y, p) in points {
        if support.last() == Some(&y) {
            *masses.last_mut().expect("nonempty") += p / total;
        } else {
            support.push(y);
            masses.push(p / total);
        }
    }
    let mut acc = 0.0;
    let cumulative = masses
        .iter()
        .map(|m| {
            acc += m;
            acc
        })
        .collect();
    Ok(DistributionEstimate { support, masses, cumulative, total })
}
