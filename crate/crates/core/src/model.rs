//! Parametric models for the conditional category probability
//! `P_h(Z = z_j | Y = y) = f_h(y, z_j, β)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest probability passed to a logarithm.
pub const PROB_FLOOR: f64 = 1e-300;

/// The parameter vector `β`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModelParams(pub Vec<f64>);

impl ModelParams {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(&v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(format!("non-finite parameter {v}")));
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl From<Vec<f64>> for ModelParams {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// A family `f_h(y, z_j, β)` of conditional category distributions.
///
/// Implementations must return a probability vector (nonnegative, summing to
/// one) for every stratum, finite `y`, and parameter vector of length
/// [`CategoryModel::param_dim`].
pub trait CategoryModel: Send + Sync {
    fn num_categories(&self) -> usize;

    fn param_dim(&self) -> usize;

    /// Whether `f` depends on the stratum index.
    fn per_stratum(&self) -> bool {
        false
    }

    /// Writes `f_h(y, z_j, β)` for `j = 0..s` into `out`. Inputs are not
    /// checked; see [`cell_probability_row`] for the checked form.
    fn probability_row(&self, stratum: usize, y: f64, params: &[f64], out: &mut [f64]);

    /// `∂f_h(y, z_j, β)/∂β_k` written row-major into `out` (`s × p`), if the
    /// family supplies an analytic gradient.
    fn probability_gradient(&self, _stratum: usize, _y: f64, _params: &[f64], _out: &mut [f64]) -> bool {
        false
    }
}

fn check_inputs(model: &dyn CategoryModel, y: f64, params: &ModelParams) -> Result<()> {
    if params.dim() != model.param_dim() {
        return Err(Error::DimensionMismatch { expected: model.param_dim(), got: params.dim() });
    }
    if !y.is_finite() {
        return Err(Error::NonFiniteValue { unit: 0, value: y });
    }
    Ok(())
}

/// `f_h(y, z_j, β)` for one category.
pub fn cell_probability(
    model: &dyn CategoryModel,
    stratum: usize,
    y: f64,
    category: usize,
    params: &ModelParams,
) -> Result<f64> {
    let s = model.num_categories();
    if category >= s {
        return Err(Error::CategoryOutOfRange { index: category + 1, categories: s });
    }
    Ok(cell_probability_row(model, stratum, y, params)?[category])
}

/// `f_h(y, z_j, β)` for all categories at once.
pub fn cell_probability_row(
    model: &dyn CategoryModel,
    stratum: usize,
    y: f64,
    params: &ModelParams,
) -> Result<Vec<f64>> {
    check_inputs(model, y, params)?;
    let mut row = vec![0.0; model.num_categories()];
    model.probability_row(stratum, y, params.as_slice(), &mut row);
    Ok(row)
}

#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cutpoints {
    /// Known intercepts `c_1 < … < c_{s-1}`; `β` is the slope only.
    Fixed(Vec<f64>),
    /// Intercepts estimated with `β`: `β = (c_1, log(c_2 − c_1), …, log(c_{s−1} − c_{s−2}), slope)`.
    Estimated,
}

/// Cumulative-logit model `logit P(Z ≤ j | y) = c_j + slope·y`, shared across strata.
#[derive(Debug, Clone, PartialEq)]
pub struct ProportionalOddsModel {
    categories: usize,
    cutpoints: Cutpoints,
}

impl ProportionalOddsModel {
    pub fn with_fixed_cutpoints(cutpoints: Vec<f64>) -> Result<Self> {
        if cutpoints.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidModel("cutpoints must be finite".into()));
        }
        if cutpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidModel("cutpoints must be strictly increasing".into()));
        }
        Ok(Self { categories: cutpoints.len() + 1, cutpoints: Cutpoints::Fixed(cutpoints) })
    }

    /// Fixed cutpoints `c_j = j`, `j = 1..s-1`.
    pub fn standard(categories: usize) -> Result<Self> {
        if categories == 0 {
            return Err(Error::InvalidModel("at least one category is required".into()));
        }
        Self::with_fixed_cutpoints((1..categories).map(|j| j as f64).collect())
    }

    pub fn with_estimated_cutpoints(categories: usize) -> Result<Self> {
        if categories < 2 {
            return Err(Error::InvalidModel("estimated cutpoints need at least two categories".into()));
        }
        Ok(Self { categories, cutpoints: Cutpoints::Estimated })
    }

    pub fn cutpoints(&self) -> &Cutpoints {
        &self.cutpoints
    }

    /// Index of the slope within the parameter vector.
    pub fn slope_index(&self) -> usize {
        self.param_dim() - 1
    }

    /// Cutpoints implied by `params`.
    pub fn resolve_cutpoints(&self, params: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.categories - 1];
        self.fill_cutpoints(params, &mut out);
        out
    }

    #[inline]
    fn fill_cutpoints(&self, params: &[f64], out: &mut [f64]) {
        match &self.cutpoints {
            Cutpoints::Fixed(c) => out.copy_from_slice(c),
            Cutpoints::Estimated => {
                let mut c = params[0];
                out[0] = c;
                for j in 1..out.len() {
                    c += params[j].exp();
                    out[j] = c;
                }
            }
        }
    }

    /// Parameter vector equivalent to the given cutpoints and slope; for
    /// fixed cutpoints only the slope is kept.
    pub fn params_for(&self, cutpoints: &[f64], slope: f64) -> ModelParams {
        match self.cutpoints {
            Cutpoints::Fixed(_) => ModelParams(vec![slope]),
            Cutpoints::Estimated => {
                let mut p = Vec::with_capacity(self.categories);
                p.push(cutpoints[0]);
                p.extend(cutpoints.windows(2).map(|w| (w[1] - w[0]).ln()));
                p.push(slope);
                ModelParams(p)
            }
        }
    }
}

impl CategoryModel for ProportionalOddsModel {
    fn num_categories(&self) -> usize {
        self.categories
    }

    fn param_dim(&self) -> usize {
        match self.cutpoints {
            Cutpoints::Fixed(_) => 1,
            Cutpoints::Estimated => self.categories,
        }
    }

    #[inline]
    fn probability_row(&self, _stratum: usize, y: f64, params: &[f64], out: &mut [f64]) {
        let slope = params[params.len() - 1] * y;
        let mut previous = 0.0;
        match &self.cutpoints {
            Cutpoints::Fixed(c) => {
                for (o, &cj) in out.iter_mut().zip(c) {
                    let cum = logistic(cj + slope);
                    *o = cum - previous;
                    previous = cum;
                }
            }
            Cutpoints::Estimated => {
                let mut cj = params[0];
                for j in 0..self.categories - 1 {
                    if j > 0 {
                        cj += params[j].exp();
                    }
                    let cum = logistic(cj + slope);
                    out[j] = cum - previous;
                    previous = cum;
                }
            }
        }
        out[self.categories - 1] = 1.0 - previous;
    }

    fn probability_gradient(&self, _stratum: usize, y: f64, params: &[f64], out: &mut [f64]) -> bool {
        let s = self.categories;
        let p = self.param_dim();
        let mut c = vec![0.0; s - 1];
        self.fill_cutpoints(params, &mut c);
        let slope = params[p - 1];
        // d/dθ of the cumulative probabilities F_j = σ(c_j + slope·y), j < s-1
        let mut dcum = vec![0.0; (s + 1) * p];
        for j in 0..s - 1 {
            let f = logistic(c[j] + slope * y);
            let density = f * (1.0 - f);
            let row = &mut dcum[(j + 1) * p..(j + 2) * p];
            row[p - 1] = density * y;
            if let Cutpoints::Estimated = self.cutpoints {
                // c_j = θ_0 + Σ_{k=1..j} exp(θ_k)
                row[0] = density;
                for k in 1..=j {
                    row[k] = density * params[k].exp();
                }
            }
        }
        for j in 0..s {
            for k in 0..p {
                out[j * p + k] = dcum[(j + 1) * p + k] - dcum[j * p + k];
            }
        }
        true
    }
}

/// Model configuration file.
///
/// `{"family":"proportional_odds","cutpoints":"fixed","values":[1,2,3,4],"slope_dim":1}`
/// or `{"family":"proportional_odds","cutpoints":"estimated","categories":5,"slope_dim":1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub family: String,
    pub cutpoints: CutpointMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<usize>,
    #[serde(default = "default_slope_dim")]
    pub slope_dim: usize,
}

fn default_slope_dim() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutpointMode {
    Fixed,
    Estimated,
}

impl ModelConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidModel(e.to_string()))
    }

    /// The default configuration for `s` categories: fixed cutpoints `1..s-1`.
    pub fn standard(categories: usize) -> Self {
        ModelConfig {
            family: "proportional_odds".into(),
            cutpoints: CutpointMode::Fixed,
            values: Some((1..categories).map(|j| j as f64).collect()),
            categories: None,
            slope_dim: 1,
        }
    }

    /// Builds the model, checking it against the sample's category count.
    pub fn build(&self, categories: usize) -> Result<ProportionalOddsModel> {
        if self.family != "proportional_odds" {
            return Err(Error::InvalidModel(format!("unsupported family {:?}", self.family)));
        }
        if self.slope_dim != 1 {
            return Err(Error::InvalidModel("only slope_dim = 1 is supported".into()));
        }
        if let Some(k) = self.categories {
            if k != categories {
                return Err(Error::InvalidModel(format!(
                    "model has {k} categories, data have {categories}"
                )));
            }
        }
        let model = match self.cutpoints {
            CutpointMode::Fixed => {
                let values = self
                    .values
                    .clone()
                    .unwrap_or_else(|| (1..categories).map(|j| j as f64).collect());
                ProportionalOddsModel::with_fixed_cutpoints(values)?
            }
            CutpointMode::Estimated => ProportionalOddsModel::with_estimated_cutpoints(categories)?,
        };
        if model.num_categories() != categories {
            return Err(Error::InvalidModel(format!(
                "model has {} categories, data have {categories}",
                model.num_categories()
            )));
        }
        Ok(model)
    }
}
