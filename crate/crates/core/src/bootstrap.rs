//! Stratified with-replacement bootstrap.
//!
//! Each replicate draws `n_h` units with replacement inside every stratum;
//! drawn units keep their category, response status and survey weight. The
//! statistic procedure runs the whole pipeline on the replicate, including
//! re-estimating the cell probabilities and re-imputing where relevant.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::StratifiedSample;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream, tag};

/// Fraction of failed replicates above which a result is flagged unreliable.
pub const MAX_FAILURE_RATE: f64 = 0.02;

const Z_95: f64 = 1.96;

pub fn resample(sample: &StratifiedSample, seed: u64, replicate: u64) -> Result<StratifiedSample> {
    let mut units = Vec::with_capacity(sample.len());
    for h in 0..sample.num_strata() {
        let pool = sample.stratum_units(h);
        let mut rng = stream(seed, &[tag::BOOTSTRAP, replicate, h as u64]);
        units.extend((0..pool.len()).map(|_| pool[rng.random_range(0..pool.len())]));
    }
    sample.with_units(units)
}

/// Seed handed to the statistic of replicate `replicate`, for re-imputation.
pub fn replicate_seed(seed: u64, replicate: u64) -> u64 {
    derive_seed(seed, &[tag::BOOTSTRAP_IMPUTATION, replicate])
}

/// `(point − 1.96√v, point + 1.96√v)`.
pub fn confidence_interval(point: f64, vboot: f64) -> Result<(f64, f64)> {
    if vboot < 0.0 || vboot.is_nan() {
        return Err(Error::NegativeVariance(vboot));
    }
    let half = Z_95 * vboot.sqrt();
    Ok((point - half, point + half))
}

/// Per-statistic bootstrap summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapStatistic {
    pub point: f64,
    /// Successful replicate values, in replicate order.
    pub replicate_values: Vec<f64>,
    /// `NaN` when fewer than two replicates succeeded.
    pub vboot: f64,
    pub ci_95: (f64, f64),
    pub failures: usize,
}

impl BootstrapStatistic {
    pub fn from_replicates(point: f64, values: Vec<f64>, failures: usize) -> Self {
        let vboot = sample_variance(&values);
        let ci_95 = confidence_interval(point, vboot).unwrap_or((f64::NAN, f64::NAN));
        Self { point, replicate_values: values, vboot, ci_95, failures }
    }

    pub fn successes(&self) -> usize {
        self.replicate_values.len()
    }
}

/// Divisor `n − 1`; `NaN` for fewer than two values.
pub fn sample_variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return f64::NAN;
    }
    // shifted by the first value, so a constant input gives exactly zero
    let shift = values[0];
    let n = values.len() as f64;
    let mean = values.iter().map(|v| v - shift).sum::<f64>() / n;
    values.iter().map(|v| (v - shift - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapResult {
    #[serde(rename = "B")]
    pub b: usize,
    pub names: Vec<String>,
    pub statistics: Vec<BootstrapStatistic>,
    /// Replicates in which the statistic procedure failed outright.
    pub failures: usize,
    pub unreliable: bool,
}

impl BootstrapResult {
    pub fn get(&self, name: &str) -> Option<&BootstrapStatistic> {
        self.names.iter().position(|n| n == name).map(|i| &self.statistics[i])
    }

    pub fn vboot(&self) -> Vec<f64> {
        self.statistics.iter().map(|s| s.vboot).collect()
    }

    /// `{statistic: {point, vboot, ci: [lo, hi], failures}}`.
    pub fn to_json_value(&self) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        for (name, s) in self.names.iter().zip(&self.statistics) {
            map.insert(
                name.clone(),
                serde_json::json!({
                    "point": s.point,
                    "vboot": s.vboot,
                    "ci": [s.ci_95.0, s.ci_95.1],
                    "failures": s.failures,
                }),
            );
        }
        map.insert(
            "_summary".into(),
            serde_json::json!({ "B": self.b, "failures": self.failures, "unreliable": self.unreliable }),
        );
        serde_json::Value::Object(map)
    }
}

/// Runs `statistic` on `b` replicates in parallel. The closure receives the
/// replicate and a seed for any randomness it needs (see [`replicate_seed`]).
/// An `Err` fails the whole replicate; a non-finite entry fails only that
/// statistic. Values are reduced in replicate order, so results do not depend
/// on the thread count.
pub fn bootstrap_variance<F>(
    sample: &StratifiedSample,
    names: &[&str],
    point: &[f64],
    statistic: F,
    b: usize,
    seed: u64,
) -> Result<BootstrapResult>
where
    F: Fn(&StratifiedSample, u64) -> Result<Vec<f64>> + Sync,
{
    if names.len() != point.len() {
        return Err(Error::DimensionMismatch { expected: names.len(), got: point.len() });
    }
    let k = point.len();
    let outcomes: Vec<Option<Vec<f64>>> = (0..b as u64)
        .into_par_iter()
        .map(|r| {
            let replicate = resample(sample, seed, r).ok()?;
            let values = statistic(&replicate, replicate_seed(seed, r)).ok()?;
            (values.len() == k).then_some(values)
        })
        .collect();
    Ok(reduce(b, names, point, outcomes))
}

fn reduce(b: usize, names: &[&str], point: &[f64], outcomes: Vec<Option<Vec<f64>>>) -> BootstrapResult {
    let k = point.len();
    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(b); k];
    let mut failed = vec![0usize; k];
    let mut failures = 0;
    for outcome in outcomes {
        match outcome {
            None => {
                failures += 1;
                failed.iter_mut().for_each(|f| *f += 1);
            }
            Some(values) => {
                for (i, v) in values.into_iter().enumerate() {
                    if v.is_finite() {
                        columns[i].push(v);
                    } else {
                        failed[i] += 1;
                    }
                }
            }
        }
    }
    let statistics: Vec<BootstrapStatistic> = columns
        .into_iter()
        .zip(point)
        .zip(failed)
        .map(|((values, &p), f)| BootstrapStatistic::from_replicates(p, values, f))
        .collect();
    let limit = MAX_FAILURE_RATE * b as f64;
    let unreliable = b < 2 || statistics.iter().any(|s| s.failures as f64 > limit || s.vboot.is_nan());
    BootstrapResult { b, names: names.iter().map(|s| s.to_string()).collect(), statistics, failures, unreliable }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{CategorySpace, SampleUnit, StratumMeta};
    use proptest::prelude::*;

    fn sample(sizes: &[usize]) -> StratifiedSample {
        let pops: Vec<u64> = sizes.iter().map(|&n| 10 * n as u64).collect();
        let mut units = Vec::new();
        let mut id = 0.0;
        for (h, &n) in sizes.iter().enumerate() {
            for i in 0..n {
                let u = if i % 4 == 3 {
                    SampleUnit::nonrespondent(h, 1.0, i % 2)
                } else {
                    SampleUnit::respondent(h, 1.0 + h as f64, i % 2, id)
                };
                units.push(u);
                id += 1.0;
            }
        }
        StratifiedSample::new(
            CategorySpace::numbered(2).unwrap(),
            StratumMeta::from_population_sizes(&pops).unwrap(),
            units,
        )
        .unwrap()
    }

    #[test]
    fn variance_of_one_two_three() {
        let s = BootstrapStatistic::from_replicates(2.0, vec![1.0, 2.0, 3.0], 0);
        assert_eq!(s.vboot, 1.0);
        assert!(sample_variance(&[4.0]).is_nan());
    }

    #[test]
    fn intervals() {
        assert_eq!(confidence_interval(0.0, 1.0).unwrap(), (-1.96, 1.96));
        assert_eq!(confidence_interval(3.0, 0.0).unwrap(), (3.0, 3.0));
        let (lo, hi) = confidence_interval(8.6, 0.0036).unwrap();
        assert!((lo - (8.6 - 0.1176)).abs() < 1e-12 && (hi - (8.6 + 0.1176)).abs() < 1e-12);
        assert!(matches!(confidence_interval(1.0, -1e-9), Err(Error::NegativeVariance(_))));
    }

    #[test]
    fn single_unit_stratum_repeats() {
        let s = sample(&[1, 4]);
        for r in 0..20 {
            let rep = resample(&s, 3, r).unwrap();
            assert_eq!(rep.stratum_units(0), s.stratum_units(0));
            assert_eq!(rep.stratum_size(1), 4);
        }
    }

    #[test]
    fn slot_uniformity() {
        let s = sample(&[3]);
        let reps = 100_000;
        let mut counts = [[0usize; 3]; 3];
        for r in 0..reps {
            let rep = resample(&s, 17, r).unwrap();
            for (slot, u) in rep.units().iter().enumerate() {
                let id = s.units().iter().position(|v| v == u).unwrap();
                counts[slot][id] += 1;
            }
        }
        for row in counts {
            for c in row {
                assert!((c as f64 / reps as f64 - 1.0 / 3.0).abs() < 0.005, "{counts:?}");
            }
        }
    }

    #[test]
    fn constant_statistic_has_zero_variance() {
        let s = sample(&[5, 6]);
        let r = bootstrap_variance(&s, &["c"], &[2.5], |_, _| Ok(vec![2.5]), 50, 1).unwrap();
        assert_eq!(r.statistics[0].vboot, 0.0);
        assert_eq!(r.statistics[0].ci_95, (2.5, 2.5));
        assert!(!r.unreliable);
    }

    #[test]
    fn failures_are_counted_and_flagged() {
        let s = sample(&[5, 6]);
        let stat = |rep: &StratifiedSample, seed: u64| {
            if seed % 10 == 0 {
                Err(Error::ZeroMass)
            } else {
                Ok(vec![rep.units()[0].weight, if seed % 7 == 0 { f64::NAN } else { 1.0 }])
            }
        };
        let r = bootstrap_variance(&s, &["a", "b"], &[1.0, 1.0], stat, 400, 9).unwrap();
        assert!(r.failures > 0);
        assert_eq!(r.statistics[0].failures, r.failures);
        assert!(r.statistics[1].failures > r.failures);
        assert_eq!(r.statistics[0].successes() + r.failures, 400);
        assert!(r.unreliable);
        let json = r.to_json_value();
        assert_eq!(json["a"]["failures"], r.failures);
        assert_eq!(json["_summary"]["B"], 400);
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let s = sample(&[7, 9, 5]);
        let stat = |rep: &StratifiedSample, _: u64| {
            Ok(vec![rep.units().iter().filter_map(|u| u.y).sum::<f64>()])
        };
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| bootstrap_variance(&s, &["t"], &[0.0], stat, 64, 5).unwrap());
        let b = four.install(|| bootstrap_variance(&s, &["t"], &[0.0], stat, 64, 5).unwrap());
        assert_eq!(a, b);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn replicates_keep_stratum_sizes(sizes in prop::collection::vec(1usize..8, 1..5), seed: u64, r: u64) {
            let s = sample(&sizes);
            let rep = resample(&s, seed, r).unwrap();
            for h in 0..sizes.len() {
                prop_assert_eq!(rep.stratum_size(h), sizes[h]);
                for u in rep.stratum_units(h) {
                    prop_assert!(s.stratum_units(h).contains(u));
                }
            }
            prop_assert_eq!(rep.strata(), s.strata());
        }

        #[test]
        fn vboot_nonnegative(values in prop::collection::vec(-1e3f64..1e3, 2..50)) {
            prop_assert!(sample_variance(&values) >= 0.0);
        }
    }
}
