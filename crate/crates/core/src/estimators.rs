//! Volz-Heckathorn estimation and the tree bootstrap.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use log::{debug, warn};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::network::{Individual, NodeId};
use crate::recruitment::{Recruitment, RecruitmentForest};
use crate::rng;

pub const DEFAULT_BOOTSTRAP_SAMPLES: usize = 1000;
pub const DEFAULT_LEVEL: f64 = 0.95;

/// Relative slack on the cumulative-weight threshold so that float rounding
/// in the running sum cannot skip the order statistic that exactly reaches it.
const THRESHOLD_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: NodeId,
    /// Degree recorded at survey time (`d_i`).
    pub degree: usize,
    /// One value per attribute of the owning sample, in the same order.
    pub values: Vec<f64>,
}

/// Surveyed individuals with their recorded degree and attribute values.
#[derive(Debug, Clone, PartialEq)]
pub struct SurveyedSample {
    attributes: Vec<String>,
    records: Vec<SampleRecord>,
    index: BTreeMap<NodeId, usize>,
}

impl SurveyedSample {
    pub fn new(attributes: Vec<String>, records: Vec<SampleRecord>) -> Result<Self> {
        let mut index = BTreeMap::new();
        for (pos, r) in records.iter().enumerate() {
            if r.values.len() != attributes.len() {
                return Err(Error::Input(format!(
                    "record {} has {} values for {} attributes",
                    r.id,
                    r.values.len(),
                    attributes.len()
                )));
            }
            if index.insert(r.id, pos).is_some() {
                return Err(Error::Input(format!("duplicate sample record for id {}", r.id)));
            }
        }
        Ok(SurveyedSample {
            attributes,
            records,
            index,
        })
    }

    /// Sample of everyone surveyed in a recruitment run, in survey order.
    pub fn from_recruitment(
        recruitment: &Recruitment,
        population: &[Individual],
        attributes: &[String],
    ) -> Result<Self> {
        let records = recruitment
            .forest
            .surveyed()
            .map(|id| {
                let person = population
                    .get(id as usize)
                    .ok_or_else(|| Error::Input(format!("surveyed id {id} not in population")))?;
                let values = attributes
                    .iter()
                    .map(|a| {
                        person
                            .attribute(a)
                            .ok_or_else(|| Error::config("attributes", format!("unknown attribute `{a}`")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let degree = *recruitment
                    .reported_degree
                    .get(&id)
                    .ok_or_else(|| Error::Input(format!("no recorded degree for {id}")))?;
                Ok(SampleRecord { id, degree, values })
            })
            .collect::<Result<Vec<_>>>()?;
        SurveyedSample::new(attributes.to_vec(), records)
    }

    pub fn attributes(&self) -> &[String] {
        &self.attributes
    }

    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: NodeId) -> Option<&SampleRecord> {
        self.index.get(&id).map(|&i| &self.records[i])
    }

    pub fn attribute_index(&self, attribute: &str) -> Result<usize> {
        self.attributes
            .iter()
            .position(|a| a == attribute)
            .ok_or_else(|| Error::Input(format!("sample has no attribute `{attribute}`")))
    }

    /// Copy without degree-zero records, which the estimator cannot weight.
    /// Excluded ids are logged.
    pub fn estimable(&self) -> SurveyedSample {
        let (kept, dropped): (Vec<_>, Vec<_>) = self.records.iter().cloned().partition(|r| r.degree >= 1);
        if !dropped.is_empty() {
            let ids: Vec<_> = dropped.iter().map(|r| r.id).collect();
            debug!("excluding {} degree-zero respondents from estimation: {ids:?}", ids.len());
        }
        SurveyedSample::new(self.attributes.clone(), kept).expect("subset of a valid sample")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    /// VH point with an independence-based normal interval.
    Vh,
    /// VH point with the tree-bootstrap weighted percentile interval.
    Treeboot,
    /// Unweighted mean with a normal interval.
    Naive,
}

impl Estimator {
    pub fn tag(self) -> &'static str {
        match self {
            Estimator::Vh => "vh",
            Estimator::Treeboot => "treeboot",
            Estimator::Naive => "naive",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimator::Vh => "Volz-Heckathorn",
            Estimator::Treeboot => "Tree Bootstrap",
            Estimator::Naive => "Naive",
        })
    }
}

impl FromStr for Estimator {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "vh" => Ok(Estimator::Vh),
            "treeboot" => Ok(Estimator::Treeboot),
            "naive" => Ok(Estimator::Naive),
            other => Err(format!("unknown estimator `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub attribute: String,
    pub estimator: Estimator,
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub level: f64,
    /// Bootstrap sample count; `None` for closed-form intervals.
    #[serde(rename = "B")]
    pub bootstrap_samples: Option<usize>,
    #[serde(skip)]
    pub replicates: Vec<f64>,
    /// Effective sample size `w_b` of each replicate.
    #[serde(skip)]
    pub weights: Vec<f64>,
}

impl EstimateReport {
    /// Standard error implied by the interval: half-width over the normal quantile.
    pub fn standard_error(&self) -> f64 {
        (self.ci_high - self.ci_low) / (2.0 * normal_quantile(self.level))
    }

    pub fn contains(&self, value: f64) -> bool {
        self.ci_low <= value && value <= self.ci_high
    }
}

/// Two-sided normal critical value for `level` (1.959964 at 0.95).
pub fn normal_quantile(level: f64) -> f64 {
    Normal::standard().inverse_cdf(1.0 - (1.0 - level) / 2.0)
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::config("level", format!("must lie in (0, 1), got {level}")));
    }
    Ok(())
}

/// `sum(x_i / d_i) / sum(1 / d_i)`.
pub fn vh_estimate(sample: &SurveyedSample, attribute: &str) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::Estimation("VH estimate of an empty sample".into()));
    }
    let col = sample.attribute_index(attribute)?;
    let bad: Vec<NodeId> = sample.records.iter().filter(|r| r.degree < 1).map(|r| r.id).collect();
    if !bad.is_empty() {
        return Err(Error::Input(format!("records with degree < 1: {bad:?}")));
    }
    // centred on the first value so a constant attribute comes back exactly
    let shift = sample.records[0].values[col];
    let (num, den) = sample.records.iter().fold((0.0, 0.0), |(num, den), r| {
        let w = 1.0 / r.degree as f64;
        (num + (r.values[col] - shift) * w, den + w)
    });
    Ok(shift + num / den)
}

/// VH point estimate with a normal interval from the linearized ratio
/// variance `n/(n-1) * sum(w_i^2 (x_i - mu)^2) / (sum w_i)^2`, treating
/// respondents as independent.
pub fn vh_interval(sample: &SurveyedSample, attribute: &str, level: f64) -> Result<EstimateReport> {
    check_level(level)?;
    let point = vh_estimate(sample, attribute)?;
    let col = sample.attribute_index(attribute)?;
    let n = sample.len() as f64;
    let (total, spread) = sample.records.iter().fold((0.0, 0.0), |(t, s), r| {
        let w = 1.0 / r.degree as f64;
        let dev = r.values[col] - point;
        (t + w, s + w * w * dev * dev)
    });
    let se = if sample.len() > 1 {
        (n / (n - 1.0) * spread).sqrt() / total
    } else {
        0.0
    };
    let half = normal_quantile(level) * se;
    Ok(EstimateReport {
        attribute: attribute.to_string(),
        estimator: Estimator::Vh,
        point,
        ci_low: point - half,
        ci_high: point + half,
        level,
        bootstrap_samples: None,
        replicates: Vec::new(),
        weights: Vec::new(),
    })
}

/// Arithmetic mean with `mean ± z * sd / sqrt(n)` (sample sd, n - 1).
/// Returns `(point, lo, hi)`; a single observation gives a zero-width interval.
pub fn naive_mean_ci(sample: &SurveyedSample, attribute: &str, level: f64) -> Result<(f64, f64, f64)> {
    check_level(level)?;
    if sample.is_empty() {
        return Err(Error::Estimation("mean of an empty sample".into()));
    }
    let col = sample.attribute_index(attribute)?;
    let n = sample.len() as f64;
    let mean = sample.records.iter().map(|r| r.values[col]).sum::<f64>() / n;
    if sample.len() == 1 {
        warn!("naive interval for `{attribute}` from a single observation: width undefined, reporting (x, x)");
        return Ok((mean, mean, mean));
    }
    let var = sample
        .records
        .iter()
        .map(|r| (r.values[col] - mean).powi(2))
        .sum::<f64>()
        / (n - 1.0);
    let half = normal_quantile(level) * var.sqrt() / n.sqrt();
    Ok((mean, mean - half, mean + half))
}

pub fn naive_interval(sample: &SurveyedSample, attribute: &str, level: f64) -> Result<EstimateReport> {
    let (point, ci_low, ci_high) = naive_mean_ci(sample, attribute, level)?;
    Ok(EstimateReport {
        attribute: attribute.to_string(),
        estimator: Estimator::Naive,
        point,
        ci_low,
        ci_high,
        level,
        bootstrap_samples: None,
        replicates: Vec::new(),
        weights: Vec::new(),
    })
}

/// Weighted percentile interval.
///
/// Replicates are sorted ascending with their weights; `lo` is the first
/// value whose cumulative normalized weight reaches `(1 - level) / 2`, `hi`
/// the first reaching `1 - (1 - level) / 2`.
pub fn weighted_percentile_ci(replicates: &[f64], weights: &[f64], level: f64) -> Result<(f64, f64)> {
    check_level(level)?;
    if replicates.len() != weights.len() {
        return Err(Error::Input(format!(
            "{} replicates but {} weights",
            replicates.len(),
            weights.len()
        )));
    }
    if replicates.is_empty() {
        return Err(Error::Input("no replicates".into()));
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
        return Err(Error::Input(format!("weights must be positive and finite, got {w}")));
    }
    if replicates.iter().any(|v| v.is_nan()) {
        return Err(Error::Input("replicate is NaN".into()));
    }
    let mut pairs: Vec<(f64, f64)> = replicates.iter().copied().zip(weights.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = weights.iter().sum();
    let tail = (1.0 - level) / 2.0;
    let lo = first_reaching(&pairs, tail * total);
    let hi = first_reaching(&pairs, (1.0 - tail) * total);
    Ok((lo, hi))
}

fn first_reaching(sorted: &[(f64, f64)], target: f64) -> f64 {
    let target = target * (1.0 - THRESHOLD_SLACK);
    let mut cumulative = 0.0;
    for &(value, weight) in sorted {
        cumulative += weight;
        if cumulative >= target {
            return value;
        }
    }
    sorted.last().expect("non-empty").0
}

/// Forest nodes flattened for fast resampling.
struct FlatForest {
    roots: Vec<usize>,
    children: Vec<Vec<usize>>,
    /// Subtracted from every value before weighting.
    shift: f64,
    /// `(x_i - shift) / d_i`, or 0 for excluded records.
    weighted_value: Vec<f64>,
    /// `1 / d_i`, or 0 for excluded records.
    inverse_degree: Vec<f64>,
}

impl FlatForest {
    fn build(forest: &RecruitmentForest, sample: &SurveyedSample, col: usize) -> Result<Self> {
        let mut position = BTreeMap::new();
        let mut weighted_value = Vec::with_capacity(forest.len());
        let mut inverse_degree = Vec::with_capacity(forest.len());
        let mut excluded = Vec::new();
        let shift = forest
            .surveyed()
            .filter_map(|id| sample.get(id))
            .find(|r| r.degree > 0)
            .map_or(0.0, |r| r.values[col]);
        for id in forest.surveyed() {
            let record = sample
                .get(id)
                .ok_or_else(|| Error::Input(format!("forest node {id} has no sample record")))?;
            position.insert(id, weighted_value.len());
            if record.degree == 0 {
                excluded.push(id);
                weighted_value.push(0.0);
                inverse_degree.push(0.0);
            } else {
                let w = 1.0 / record.degree as f64;
                weighted_value.push((record.values[col] - shift) * w);
                inverse_degree.push(w);
            }
        }
        if !excluded.is_empty() {
            debug!("excluding {} degree-zero respondents from estimation: {excluded:?}", excluded.len());
        }
        let mut children = vec![Vec::new(); weighted_value.len()];
        for e in &forest.events {
            let parent = *position
                .get(&e.recruiter)
                .ok_or_else(|| Error::Input(format!("recruiter {} is not in the forest", e.recruiter)))?;
            children[parent].push(position[&e.recruit]);
        }
        let roots = forest.seeds.iter().map(|s| position[s]).collect();
        Ok(FlatForest {
            roots,
            children,
            shift,
            weighted_value,
            inverse_degree,
        })
    }

    fn point(&self) -> Result<f64> {
        let num: f64 = self.weighted_value.iter().sum();
        let den: f64 = self.inverse_degree.iter().sum();
        if den <= 0.0 {
            return Err(Error::Estimation("no forest node has a positive degree".into()));
        }
        Ok(self.shift + num / den)
    }

    /// One hierarchical resample; returns `(estimate, effective size)`.
    fn resample<R: Rng>(&self, rng: &mut R, frontier: &mut Vec<usize>, next: &mut Vec<usize>) -> (f64, f64) {
        let (mut num, mut den) = (0.0, 0.0);
        frontier.clear();
        let s = self.roots.len();
        frontier.extend((0..s).map(|_| self.roots[rng.random_range(0..s)]));
        while !frontier.is_empty() {
            next.clear();
            for &node in frontier.iter() {
                num += self.weighted_value[node];
                den += self.inverse_degree[node];
                let kids = &self.children[node];
                if !kids.is_empty() {
                    next.extend((0..kids.len()).map(|_| kids[rng.random_range(0..kids.len())]));
                }
            }
            std::mem::swap(frontier, next);
        }
        (self.shift + num / den, den)
    }
}

/// Tree bootstrap of the VH estimator.
///
/// Each replicate redraws the seeds with replacement, then for every drawn
/// node redraws as many children as it originally had, with replacement from
/// its own children, until no children remain. Repeated draws count as
/// repeated records. Replicate `b` uses its own stream derived from one
/// draw of `rng`, so the result does not depend on thread scheduling.
/// Replicates that drew only degree-zero records are dropped, so the report
/// may hold fewer than `bootstrap_samples` of them.
pub fn tree_bootstrap<R: Rng + ?Sized>(
    forest: &RecruitmentForest,
    sample: &SurveyedSample,
    attribute: &str,
    bootstrap_samples: usize,
    level: f64,
    rng: &mut R,
) -> Result<EstimateReport> {
    if bootstrap_samples < 1 {
        return Err(Error::config("bootstrap_samples", "must be at least 1"));
    }
    check_level(level)?;
    if forest.seeds.is_empty() {
        return Err(Error::Estimation("forest has no seeds".into()));
    }
    let col = sample.attribute_index(attribute)?;
    let flat = FlatForest::build(forest, sample, col)?;
    let point = flat.point()?;
    let base: u64 = rng.random();

    let draws: Vec<(f64, f64)> = (0..bootstrap_samples)
        .into_par_iter()
        .map_init(
            || (Vec::new(), Vec::new()),
            |(frontier, next), b| {
                let mut r = rng::stream(base, &[b as u64]);
                flat.resample(&mut r, frontier, next)
            },
        )
        .collect();
    // a replicate made only of degree-zero records has no estimate and
    // would carry zero weight anyway
    let (replicates, weights): (Vec<f64>, Vec<f64>) = draws.into_iter().filter(|&(_, w)| w > 0.0).unzip();
    if replicates.is_empty() {
        return Err(Error::Estimation(
            "every bootstrap sample drew only degree-zero records".into(),
        ));
    }
    if replicates.len() < bootstrap_samples {
        debug!("{} empty bootstrap samples dropped", bootstrap_samples - replicates.len());
    }
    let (ci_low, ci_high) = weighted_percentile_ci(&replicates, &weights, level)?;
    Ok(EstimateReport {
        attribute: attribute.to_string(),
        estimator: Estimator::Treeboot,
        point,
        ci_low,
        ci_high,
        level,
        bootstrap_samples: Some(bootstrap_samples),
        replicates,
        weights,
    })
}
