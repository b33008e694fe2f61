//! Imputation of nonrespondents, within Z-cells (simple methods) or across
//! all respondents of the stratum using the fitted category model and masses
//! (pseudo likelihood methods), and the estimators computed from imputed data.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::distr::Distribution;
use rand_distr::weighted::WeightedAliasIndex;
use serde::{Deserialize, Serialize};

use crate::data::StratifiedSample;
use crate::error::{Error, Result};
use crate::estimate::simple_cell_sample_mean;
use crate::model::{CategoryModel, ModelParams};
use crate::pel::PelWeights;
use crate::rng::{stream, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImputationMethod {
    SimpleMean,
    SimpleRandom,
    PelMean,
    PelRandom,
}

impl ImputationMethod {
    pub const ALL: [ImputationMethod; 4] =
        [Self::SimpleMean, Self::SimpleRandom, Self::PelMean, Self::PelRandom];

    pub fn name(self) -> &'static str {
        match self {
            Self::SimpleMean => "simple_mean",
            Self::SimpleRandom => "simple_random",
            Self::PelMean => "pel_mean",
            Self::PelRandom => "pel_random",
        }
    }

    pub fn is_random(self) -> bool {
        matches!(self, Self::SimpleRandom | Self::PelRandom)
    }

    pub fn uses_model(self) -> bool {
        matches!(self, Self::PelMean | Self::PelRandom)
    }
}

impl fmt::Display for ImputationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ImputationMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown imputation method {s:?}")))
    }
}

/// A sample with every nonrespondent filled in. `values` is aligned with
/// [`StratifiedSample::units`]; respondents keep their observed `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImputedSample {
    pub base: StratifiedSample,
    pub values: Vec<f64>,
    pub imputed: Vec<bool>,
    pub method: ImputationMethod,
    pub rng_seed: Option<u64>,
    pub params_used: Option<ModelParams>,
}

impl ImputedSample {
    fn from_fill(
        sample: &StratifiedSample,
        method: ImputationMethod,
        rng_seed: Option<u64>,
        params_used: Option<ModelParams>,
        mut fill: impl FnMut(usize, usize, usize) -> Result<f64>,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(sample.len());
        let mut imputed = Vec::with_capacity(sample.len());
        for h in 0..sample.num_strata() {
            let range = sample.stratum_range(h);
            for (k, u) in sample.stratum_units(h).iter().enumerate() {
                match u.y {
                    Some(y) => {
                        values.push(y);
                        imputed.push(false);
                    }
                    None => {
                        values.push(fill(h, u.z, k)?);
                        imputed.push(true);
                    }
                }
                debug_assert_eq!(values.len(), range.start + k + 1);
            }
        }
        Ok(Self { base: sample.clone(), values, imputed, method, rng_seed, params_used })
    }

    /// Writes `stratum,weight,z,y,imputed`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(["stratum", "weight", "z", "y", "imputed"])?;
        for ((u, y), imp) in self.base.units().iter().zip(&self.values).zip(&self.imputed) {
            writer.write_record([
                (u.stratum + 1).to_string(),
                u.weight.to_string(),
                self.base.categories().label(u.z).to_string(),
                y.to_string(),
                if *imp { "1" } else { "0" }.to_string(),
            ])?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Nonrespondents in cell `(h, j)` get `Ỹ_hj`.
pub fn impute_simple_mean(sample: &StratifiedSample) -> Result<ImputedSample> {
    let s = sample.num_categories();
    let mut cache: Vec<Option<f64>> = vec![None; sample.num_strata() * s];
    ImputedSample::from_fill(sample, ImputationMethod::SimpleMean, None, None, |h, j, _| {
        if let Some(v) = cache[h * s + j] {
            return Ok(v);
        }
        let v = simple_cell_sample_mean(sample, h, j)?;
        cache[h * s + j] = Some(v);
        Ok(v)
    })
}

/// Donor distribution over a fixed list of values.
struct DonorPool {
    values: Vec<f64>,
    index: WeightedAliasIndex<f64>,
}

impl DonorPool {
    fn new(values: Vec<f64>, weights: Vec<f64>) -> Option<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return None;
        }
        let index = WeightedAliasIndex::new(weights).ok()?;
        Some(Self { values, index })
    }

    fn draw(&self, seed: u64, stratum: usize, position: usize) -> f64 {
        let mut rng = stream(seed, &[tag::IMPUTATION, stratum as u64, position as u64]);
        self.values[self.index.sample(&mut rng)]
    }
}

/// Lazily built pool per `(h, j)`.
fn pooled_fill(
    sample: &StratifiedSample,
    method: ImputationMethod,
    seed: u64,
    params_used: Option<ModelParams>,
    mut build: impl FnMut(usize, usize) -> Result<DonorPool>,
) -> Result<ImputedSample> {
    let s = sample.num_categories();
    let mut pools: Vec<Option<DonorPool>> = (0..sample.num_strata() * s).map(|_| None).collect();
    ImputedSample::from_fill(sample, method, Some(seed), params_used, |h, j, k| {
        let slot = &mut pools[h * s + j];
        if slot.is_none() {
            *slot = Some(build(h, j)?);
        }
        Ok(slot.as_ref().expect("just built").draw(seed, h, k))
    })
}

/// Each nonrespondent in `(h, j)` draws a donor from that cell's respondents
/// with probability proportional to the survey weight.
pub fn impute_simple_random(sample: &StratifiedSample, seed: u64) -> Result<ImputedSample> {
    pooled_fill(sample, ImputationMethod::SimpleRandom, seed, None, |h, j| {
        let (values, weights): (Vec<f64>, Vec<f64>) = sample
            .stratum_units(h)
            .iter()
            .filter(|u| u.z == j)
            .filter_map(|u| u.y.map(|y| (y, u.weight)))
            .unzip();
        DonorPool::new(values, weights)
            .ok_or(Error::EmptyRespondentCell { stratum: h + 1, category: j + 1 })
    })
}

/// Respondents of stratum `h` with `f_h(Y_hi, z_j, β) p̂_hi` for every `j`, row-major.
struct StratumKernel {
    values: Vec<f64>,
    kernel: Vec<f64>,
}

fn stratum_kernels(
    sample: &StratifiedSample,
    model: &dyn CategoryModel,
    params: &ModelParams,
    weights: &PelWeights,
) -> Result<Vec<StratumKernel>> {
    if params.dim() != model.param_dim() {
        return Err(Error::DimensionMismatch { expected: model.param_dim(), got: params.dim() });
    }
    if weights.len() != sample.total_respondents() {
        return Err(Error::InvalidConfig("masses do not match the sample's respondents".into()));
    }
    let s = model.num_categories();
    let mut kernels: Vec<StratumKernel> = (0..sample.num_strata())
        .map(|_| StratumKernel { values: Vec::new(), kernel: Vec::new() })
        .collect();
    let mut row = vec![0.0; s];
    for ((&u, &h), &p) in weights.units.iter().zip(&weights.strata).zip(&weights.masses) {
        let y = sample.units()[u].y.ok_or_else(|| {
            Error::InvalidConfig("masses do not match the sample's respondents".into())
        })?;
        model.probability_row(h, y, params.as_slice(), &mut row);
        let k = &mut kernels[h];
        k.values.push(y);
        k.kernel.extend(row.iter().map(|f| f * p));
    }
    Ok(kernels)
}

/// Nonrespondents in `(h, j)` get
/// `Ŷ_hj = Σ_i p̂_hi f_h(Y_hi, z_j, β̂) Y_hi / Σ_i p̂_hi f_h(Y_hi, z_j, β̂)`
/// over all respondents of stratum `h`.
pub fn impute_pel_mean(
    sample: &StratifiedSample,
    model: &dyn CategoryModel,
    params: &ModelParams,
    weights: &PelWeights,
) -> Result<ImputedSample> {
    let s = model.num_categories();
    let kernels = stratum_kernels(sample, model, params, weights)?;
    let means: Vec<Vec<Option<f64>>> = kernels
        .iter()
        .map(|k| {
            (0..s)
                .map(|j| {
                    let (mut num, mut den) = (0.0, 0.0);
                    for (i, y) in k.values.iter().enumerate() {
                        let q = k.kernel[i * s + j];
                        num += q * y;
                        den += q;
                    }
                    (den > 0.0).then(|| num / den)
                })
                .collect()
        })
        .collect();
    ImputedSample::from_fill(sample, ImputationMethod::PelMean, None, Some(params.clone()), |h, j, _| {
        means[h][j].ok_or(Error::ZeroMass)
    })
}

/// Each nonrespondent in `(h, j)` draws a donor from all respondents of
/// stratum `h` with probability proportional to `f_h(Y_hi, z_j, β̂) p̂_hi`.
pub fn impute_pel_random(
    sample: &StratifiedSample,
    model: &dyn CategoryModel,
    params: &ModelParams,
    weights: &PelWeights,
    seed: u64,
) -> Result<ImputedSample> {
    let s = model.num_categories();
    let kernels = stratum_kernels(sample, model, params, weights)?;
    pooled_fill(sample, ImputationMethod::PelRandom, seed, Some(params.clone()), |h, j| {
        let k = &kernels[h];
        let probs = (0..k.values.len()).map(|i| k.kernel[i * s + j]).collect();
        DonorPool::new(k.values.clone(), probs).ok_or(Error::ZeroMass)
    })
}

/// Dispatches on `method`; the model, parameters and masses are only used by
/// the pseudo likelihood methods.
pub fn impute(
    method: ImputationMethod,
    sample: &StratifiedSample,
    fitted: Option<(&dyn CategoryModel, &ModelParams, &PelWeights)>,
    seed: u64,
) -> Result<ImputedSample> {
    let need_fit = || Error::InvalidConfig(format!("{method} imputation needs a fitted model"));
    match method {
        ImputationMethod::SimpleMean => impute_simple_mean(sample),
        ImputationMethod::SimpleRandom => impute_simple_random(sample, seed),
        ImputationMethod::PelMean => {
            let (m, p, w) = fitted.ok_or_else(need_fit)?;
            impute_pel_mean(sample, m, p, w)
        }
        ImputationMethod::PelRandom => {
            let (m, p, w) = fitted.ok_or_else(need_fit)?;
            impute_pel_random(sample, m, p, w, seed)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PostImputationEstimates {
    /// `Ŷ_I = Σ_h Σ_i w_hi Ŷ_hi`.
    pub overall: f64,
    /// `Ŷ_jI`.
    pub cell_means: Vec<f64>,
}

pub fn post_imputation_estimates(imp: &ImputedSample) -> Result<PostImputationEstimates> {
    let s = imp.base.num_categories();
    let mut overall = 0.0;
    let mut num = vec![0.0; s];
    let mut den = vec![0.0; s];
    for (u, &y) in imp.base.units().iter().zip(&imp.values) {
        overall += u.weight * y;
        num[u.z] += u.weight * y;
        den[u.z] += u.weight;
    }
    let cell_means = (0..s)
        .map(|j| {
            if den[j] > 0.0 {
                Ok(num[j] / den[j])
            } else {
                Err(Error::EmptyCategory { category: j + 1 })
            }
        })
        .collect::<Result<_>>()?;
    Ok(PostImputationEstimates { overall, cell_means })
}
