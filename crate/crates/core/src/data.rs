//! Stratified samples with item nonresponse: the data model, validation and
//! CSV/JSON ingestion.
//!
//! Strata and categories are 0-based inside the library and 1-based in files
//! and error messages.

use std::fmt;
use std::io::{Read, Write};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The ordered, finite range of the categorical covariate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategorySpace {
    labels: Vec<String>,
}

impl CategorySpace {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidMeta("at least one category is required".into()));
        }
        for (i, label) in labels.iter().enumerate() {
            if labels[..i].contains(label) {
                return Err(Error::InvalidMeta(format!("duplicate category label {label:?}")));
            }
        }
        Ok(Self { labels })
    }

    /// Categories labelled `z1, …, zs`.
    pub fn numbered(s: usize) -> Result<Self> {
        Self::new((1..=s).map(|j| format!("z{j}")).collect())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// One sampled record. `y` is `None` for a nonrespondent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleUnit {
    pub stratum: usize,
    pub weight: f64,
    pub z: usize,
    pub y: Option<f64>,
}

impl SampleUnit {
    pub fn respondent(stratum: usize, weight: f64, z: usize, y: f64) -> Self {
        Self { stratum, weight, z, y: Some(y) }
    }

    pub fn nonrespondent(stratum: usize, weight: f64, z: usize) -> Self {
        Self { stratum, weight, z, y: None }
    }

    #[inline]
    pub fn responded(&self) -> bool {
        self.y.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StratumMeta {
    /// `N_h`.
    pub population_size: u64,
    /// `W_h = N_h / N`.
    pub weight_share: f64,
}

impl StratumMeta {
    pub fn from_population_sizes(sizes: &[u64]) -> Result<Vec<StratumMeta>> {
        if sizes.is_empty() {
            return Err(Error::InvalidMeta("at least one stratum is required".into()));
        }
        if let Some(h) = sizes.iter().position(|&n| n == 0) {
            return Err(Error::InvalidMeta(format!("stratum {} has zero population size", h + 1)));
        }
        let total: u64 = sizes.iter().sum();
        Ok(sizes
            .iter()
            .map(|&n| StratumMeta { population_size: n, weight_share: n as f64 / total as f64 })
            .collect())
    }
}

/// Stratum metadata file: `{"strata":[{"h":1,"N":3370},…],"categories":["z1",…]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub strata: Vec<StratumSize>,
    pub categories: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StratumSize {
    pub h: usize,
    #[serde(rename = "N")]
    pub population_size: u64,
}

impl SampleMeta {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("metadata serializes")
    }

    /// Category space and per-stratum metadata ordered by `h`. Strata must be
    /// numbered `1..=H` without gaps.
    pub fn resolve(&self) -> Result<(CategorySpace, Vec<StratumMeta>)> {
        let categories = CategorySpace::new(self.categories.clone())?;
        let mut sizes = vec![None; self.strata.len()];
        for entry in &self.strata {
            if entry.h == 0 || entry.h > sizes.len() {
                return Err(Error::InvalidMeta(format!(
                    "stratum numbers must run 1..={}, found {}",
                    sizes.len(),
                    entry.h
                )));
            }
            if sizes[entry.h - 1].replace(entry.population_size).is_some() {
                return Err(Error::InvalidMeta(format!("stratum {} listed twice", entry.h)));
            }
        }
        let sizes: Vec<u64> = sizes.into_iter().map(|n| n.expect("all slots filled")).collect();
        Ok((categories, StratumMeta::from_population_sizes(&sizes)?))
    }

    pub fn describe(sample: &StratifiedSample) -> Self {
        SampleMeta {
            strata: sample
                .strata()
                .iter()
                .enumerate()
                .map(|(h, m)| StratumSize { h: h + 1, population_size: m.population_size })
                .collect(),
            categories: sample.categories().labels().to_vec(),
        }
    }
}

/// A stratified sample. Units are held grouped by stratum, preserving input
/// order within each stratum.
#[derive(Debug, Clone, PartialEq)]
pub struct StratifiedSample {
    categories: CategorySpace,
    strata: Vec<StratumMeta>,
    units: Vec<SampleUnit>,
    ranges: Vec<Range<usize>>,
    respondents: Vec<usize>,
}

impl StratifiedSample {
    /// Builds a sample after structural checks: every unit references an
    /// existing stratum and category, weights are positive and finite, `y`
    /// values are finite, and no stratum is empty.
    ///
    /// The `n_h >= 2` and `r_h >= 1` estimation preconditions are not checked
    /// here (bootstrap replicates may violate the latter); see
    /// [`StratifiedSample::check_estimable`].
    pub fn new(
        categories: CategorySpace,
        strata: Vec<StratumMeta>,
        units: Vec<SampleUnit>,
    ) -> Result<Self> {
        let s = categories.len();
        let h_count = strata.len();
        for (i, u) in units.iter().enumerate() {
            if u.stratum >= h_count {
                return Err(Error::UnknownStratum { stratum: u.stratum + 1 });
            }
            if u.z >= s {
                return Err(Error::CategoryOutOfRange { index: u.z + 1, categories: s });
            }
            if !(u.weight > 0.0 && u.weight.is_finite()) {
                return Err(Error::NonpositiveWeight { unit: i + 1, weight: u.weight });
            }
            if let Some(y) = u.y {
                if !y.is_finite() {
                    return Err(Error::NonFiniteValue { unit: i + 1, value: y });
                }
            }
        }
        let mut sorted = units;
        // stable: keeps original order within a stratum
        sorted.sort_by_key(|u| u.stratum);
        let mut ranges = Vec::with_capacity(h_count);
        let mut respondents = Vec::with_capacity(h_count);
        let mut start = 0;
        for h in 0..h_count {
            let end = start + sorted[start..].iter().take_while(|u| u.stratum == h).count();
            if end == start {
                return Err(Error::EmptyStratum { stratum: h + 1 });
            }
            respondents.push(sorted[start..end].iter().filter(|u| u.responded()).count());
            ranges.push(start..end);
            start = end;
        }
        Ok(Self { categories, strata, units: sorted, ranges, respondents })
    }

    /// Requires `n_h >= 2` and `r_h >= 1` in every stratum.
    pub fn check_estimable(&self) -> Result<()> {
        for h in 0..self.num_strata() {
            let n = self.stratum_size(h);
            if n < 2 {
                return Err(Error::StratumTooSmall { stratum: h + 1, size: n });
            }
        }
        self.check_respondents()
    }

    /// Requires `r_h >= 1` in every stratum.
    pub fn check_respondents(&self) -> Result<()> {
        match self.respondents.iter().position(|&r| r == 0) {
            Some(h) => Err(Error::NoRespondents { stratum: h + 1 }),
            None => Ok(()),
        }
    }

    pub fn categories(&self) -> &CategorySpace {
        &self.categories
    }

    pub fn num_categories(&self) -> usize {
        self.categories.len()
    }

    pub fn strata(&self) -> &[StratumMeta] {
        &self.strata
    }

    pub fn num_strata(&self) -> usize {
        self.strata.len()
    }

    /// All units, grouped by stratum.
    pub fn units(&self) -> &[SampleUnit] {
        &self.units
    }

    pub fn stratum_units(&self, h: usize) -> &[SampleUnit] {
        &self.units[self.ranges[h].clone()]
    }

    /// Index range of stratum `h` within [`StratifiedSample::units`].
    pub fn stratum_range(&self, h: usize) -> Range<usize> {
        self.ranges[h].clone()
    }

    /// `n_h`.
    pub fn stratum_size(&self, h: usize) -> usize {
        self.ranges[h].len()
    }

    /// `r_h`.
    pub fn respondent_count(&self, h: usize) -> usize {
        self.respondents[h]
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn total_respondents(&self) -> usize {
        self.respondents.iter().sum()
    }

    /// A sample with the same design and a new set of units.
    pub fn with_units(&self, units: Vec<SampleUnit>) -> Result<Self> {
        Self::new(self.categories.clone(), self.strata.clone(), units)
    }
}

/// Parses the `stratum,weight,z,y` CSV schema against stratum metadata and
/// checks the estimation preconditions.
pub fn parse_sample<R: Read>(input: R, meta: &SampleMeta) -> Result<StratifiedSample> {
    let (categories, strata) = meta.resolve()?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let header = reader.headers()?.clone();
    let expected = ["stratum", "weight", "z", "y"];
    if header.len() < 4 || header.iter().take(4).ne(expected) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `stratum,weight,z,y`, found `{}`", header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut units = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let line = record.position().map_or(row + 2, |p| p.line() as usize);
        if record.len() != header.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        let field = |i: usize| record.get(i).unwrap_or("");
        let stratum: usize = field(0).parse().map_err(|_| Error::Parse {
            line,
            message: format!("stratum {:?} is not a positive integer", field(0)),
        })?;
        if stratum == 0 || stratum > strata.len() {
            return Err(Error::UnknownStratum { stratum });
        }
        let weight: f64 = field(1).parse().map_err(|_| Error::Parse {
            line,
            message: format!("weight {:?} is not a number", field(1)),
        })?;
        let z = categories
            .index_of(field(2))
            .ok_or_else(|| Error::UnknownCategory { label: field(2).to_string() })?;
        let y = match field(3) {
            "" => None,
            text => Some(text.parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("y {text:?} is not a number"),
            })?),
        };
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(Error::NonpositiveWeight { unit: row + 1, weight });
        }
        units.push(SampleUnit { stratum: stratum - 1, weight, z, y });
    }
    let sample = StratifiedSample::new(categories, strata, units)?;
    sample.check_estimable()?;
    Ok(sample)
}

/// Writes a sample in the `stratum,weight,z,y` schema. Floats use the
/// shortest representation that parses back to the same value.
pub fn write_sample<W: Write>(sample: &StratifiedSample, out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["stratum", "weight", "z", "y"])?;
    for u in sample.units() {
        let y = u.y.map(|y| y.to_string()).unwrap_or_default();
        writer.write_record([
            (u.stratum + 1).to_string(),
            u.weight.to_string(),
            sample.categories().label(u.z).to_string(),
            y,
        ])?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Info,
    Warning,
}

/// A validation finding. Stratum and category numbers are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diagnostic {
    EmptyCell { stratum: usize, category: usize },
    NoRespondents { stratum: usize },
    StratumTooSmall { stratum: usize, size: usize },
    RespondentCount { stratum: usize, respondents: usize, units: usize },
    WeightSum { stratum: usize, sum: f64 },
    NonrespondentMajority { stratum: usize, category: usize, respondents: usize, nonrespondents: usize },
}

impl Diagnostic {
    pub fn severity(&self) -> Severity {
        match self {
            Diagnostic::EmptyCell { .. }
            | Diagnostic::NoRespondents { .. }
            | Diagnostic::StratumTooSmall { .. } => Severity::Warning,
            Diagnostic::RespondentCount { .. }
            | Diagnostic::WeightSum { .. }
            | Diagnostic::NonrespondentMajority { .. } => Severity::Info,
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::EmptyCell { stratum, category } => write!(f, "cell ({stratum},{category}) empty"),
            Diagnostic::NoRespondents { stratum } => write!(f, "no respondents in stratum {stratum}"),
            Diagnostic::StratumTooSmall { stratum, size } => {
                write!(f, "stratum {stratum} has only {size} sampled unit(s)")
            }
            Diagnostic::RespondentCount { stratum, respondents, units } => {
                write!(f, "stratum {stratum}: {respondents} of {units} units responded")
            }
            Diagnostic::WeightSum { stratum, sum } => write!(f, "stratum {stratum}: weight sum {sum}"),
            Diagnostic::NonrespondentMajority { stratum, category, respondents, nonrespondents } => write!(
                f,
                "cell ({stratum},{category}): {nonrespondents} nonrespondents vs {respondents} respondents"
            ),
        }
    }
}

/// Reports empty cells, per-stratum respondent counts and weight sums, and
/// cells where nonrespondents are not outnumbered by respondents.
pub fn validate(sample: &StratifiedSample) -> Vec<Diagnostic> {
    let s = sample.num_categories();
    let mut out = Vec::new();
    for h in 0..sample.num_strata() {
        let units = sample.stratum_units(h);
        let mut resp = vec![0usize; s];
        let mut nonresp = vec![0usize; s];
        for u in units {
            if u.responded() {
                resp[u.z] += 1;
            } else {
                nonresp[u.z] += 1;
            }
        }
        if units.len() < 2 {
            out.push(Diagnostic::StratumTooSmall { stratum: h + 1, size: units.len() });
        }
        if sample.respondent_count(h) == 0 {
            out.push(Diagnostic::NoRespondents { stratum: h + 1 });
        }
        for j in 0..s {
            if resp[j] + nonresp[j] == 0 {
                out.push(Diagnostic::EmptyCell { stratum: h + 1, category: j + 1 });
            } else if nonresp[j] > 0 && nonresp[j] >= resp[j] {
                out.push(Diagnostic::NonrespondentMajority {
                    stratum: h + 1,
                    category: j + 1,
                    respondents: resp[j],
                    nonrespondents: nonresp[j],
                });
            }
        }
        out.push(Diagnostic::RespondentCount {
            stratum: h + 1,
            respondents: sample.respondent_count(h),
            units: units.len(),
        });
        out.push(Diagnostic::WeightSum { stratum: h + 1, sum: units.iter().map(|u| u.weight).sum() });
    }
    out
}
