//! Wave-by-wave recruitment statistics and evaluation against known
//! population values.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{EstimateReport, Estimator};
use crate::network::{Individual, ATTRIBUTES};
use crate::recruitment::{Method, RecruitmentForest};

/// Label written next to every RMSE so readers know how errors were scaled.
pub const STANDARDIZATION: &str = "error divided by the estimator's own standard error (CI half-width / z); a convention, not a reproduction of published values";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveStats {
    pub wave: u32,
    pub new_unique: usize,
    pub cumulative_n: usize,
    /// Mean age of everyone surveyed up to and including this wave.
    pub mean_age: f64,
    /// Female share of everyone surveyed up to and including this wave.
    pub prop_female: f64,
}

/// Per-wave new recruits and cumulative demographics; wave 0 is the seeds.
pub fn wave_stats(forest: &RecruitmentForest, population: &[Individual]) -> Result<Vec<WaveStats>> {
    if forest.seeds.is_empty() {
        return Ok(Vec::new());
    }
    let depth = forest.depth() as usize;
    let mut per_wave = vec![(0usize, 0.0f64, 0usize); depth + 1];
    for (id, wave) in forest.waves() {
        let person = population
            .get(id as usize)
            .ok_or_else(|| Error::Input(format!("forest node {id} not in population")))?;
        let slot = &mut per_wave[wave as usize];
        slot.0 += 1;
        slot.1 += person.age;
        slot.2 += usize::from(person.gender.is_female());
    }
    let mut out = Vec::with_capacity(depth + 1);
    let (mut n, mut age_sum, mut females) = (0usize, 0.0, 0usize);
    for (wave, &(count, ages, fem)) in per_wave.iter().enumerate() {
        n += count;
        age_sum += ages;
        females += fem;
        out.push(WaveStats {
            wave: wave as u32,
            new_unique: count,
            cumulative_n: n,
            mean_age: age_sum / n as f64,
            prop_female: females as f64 / n as f64,
        });
    }
    Ok(out)
}

/// Extends a trace that stopped early through `max_wave`, carrying the
/// cumulative values forward with zero new recruits.
pub fn pad_wave_stats(stats: &[WaveStats], max_wave: u32) -> Vec<WaveStats> {
    let mut out = stats.to_vec();
    if let Some(&last) = stats.last() {
        for wave in last.wave + 1..=max_wave {
            out.push(WaveStats { wave, new_unique: 0, ..last });
        }
    }
    out
}

/// Known population values, optionally with fixed standardization scales.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub values: BTreeMap<String, f64>,
    #[serde(default)]
    pub scales: BTreeMap<String, f64>,
}

impl Baseline {
    /// Population means of the named attributes.
    pub fn from_population(population: &[Individual], attributes: &[String]) -> Result<Self> {
        if population.is_empty() {
            return Err(Error::Input("baseline of an empty population".into()));
        }
        let mut values = BTreeMap::new();
        for a in attributes {
            let mut total = 0.0;
            for p in population {
                total += p.attribute(a).ok_or_else(|| {
                    Error::config("attributes", format!("unknown attribute `{a}`; known: {ATTRIBUTES:?}"))
                })?;
            }
            values.insert(a.clone(), total / population.len() as f64);
        }
        Ok(Baseline {
            values,
            scales: BTreeMap::new(),
        })
    }

    pub fn value(&self, attribute: &str) -> Result<f64> {
        self.values
            .get(attribute)
            .copied()
            .ok_or_else(|| Error::Input(format!("no baseline value for `{attribute}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeEstimate {
    pub attribute: String,
    pub point: f64,
    /// Standard error used to standardize the error.
    pub se: f64,
}

impl From<&EstimateReport> for AttributeEstimate {
    fn from(r: &EstimateReport) -> Self {
        AttributeEstimate {
            attribute: r.attribute.clone(),
            point: r.point,
            se: r.standard_error(),
        }
    }
}

/// Root mean square of `(point - baseline) / scale` over attributes. The
/// scale is the baseline's fixed scale when present, else the estimate's SE.
pub fn standardized_rmse(estimates: &[AttributeEstimate], baseline: &Baseline) -> Result<f64> {
    if estimates.is_empty() {
        return Err(Error::Input("no estimates to evaluate".into()));
    }
    let mut sum_sq = 0.0;
    for e in estimates {
        let truth = baseline.value(&e.attribute)?;
        let scale = baseline.scales.get(&e.attribute).copied().unwrap_or(e.se);
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Input(format!(
                "standardization scale for `{}` must be positive, got {scale}",
                e.attribute
            )));
        }
        let z = (e.point - truth) / scale;
        sum_sq += z * z;
    }
    Ok((sum_sq / estimates.len() as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeInterval {
    pub attribute: String,
    pub lo: f64,
    pub hi: f64,
}

impl From<&EstimateReport> for AttributeInterval {
    fn from(r: &EstimateReport) -> Self {
        AttributeInterval {
            attribute: r.attribute.clone(),
            lo: r.ci_low,
            hi: r.ci_high,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Coverage {
    pub count: usize,
    pub total: usize,
}

impl Coverage {
    pub fn rate(&self) -> f64 {
        if self.total == 0 {
            return f64::NAN;
        }
        self.count as f64 / self.total as f64
    }

    pub fn merge(self, other: Coverage) -> Coverage {
        Coverage {
            count: self.count + other.count,
            total: self.total + other.total,
        }
    }
}

/// How many intervals contain their baseline value.
pub fn ci_coverage(intervals: &[AttributeInterval], baseline: &Baseline) -> Result<Coverage> {
    let mut count = 0;
    for ci in intervals {
        if ci.lo > ci.hi {
            return Err(Error::Input(format!(
                "interval for `{}` has lo {} > hi {}",
                ci.attribute, ci.lo, ci.hi
            )));
        }
        let truth = baseline.value(&ci.attribute)?;
        if ci.lo <= truth && truth <= ci.hi {
            count += 1;
        }
    }
    Ok(Coverage {
        count,
        total: intervals.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePoint {
    pub wave: u32,
    pub age_bias: f64,
    pub female_bias: f64,
}

/// Absolute distance of the cumulative mean age and female share from the
/// baseline, per wave. Needs baseline values for `age` and `female`.
pub fn convergence_trace(stats: &[WaveStats], baseline: &Baseline) -> Result<Vec<ConvergencePoint>> {
    let age = baseline.value("age")?;
    let female = baseline.value("female")?;
    Ok(stats
        .iter()
        .map(|s| ConvergencePoint {
            wave: s.wave,
            age_bias: (s.mean_age - age).abs(),
            female_bias: (s.prop_female - female).abs(),
        })
        .collect())
}

/// One (recruitment, estimator) cell of the comparison grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsCell {
    pub recruitment: Method,
    pub estimator: Estimator,
    /// `None` when some attribute had a zero-width interval.
    pub rmse: Option<f64>,
    pub coverage_count: usize,
    pub coverage_total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub standardization: String,
    pub cells: Vec<MetricsCell>,
}

/// Builds the grid cell for one arm and estimator from its per-attribute reports.
pub fn evaluate_cell(
    recruitment: Method,
    estimator: Estimator,
    reports: &[EstimateReport],
    baseline: &Baseline,
) -> Result<MetricsCell> {
    let estimates: Vec<AttributeEstimate> = reports.iter().map(AttributeEstimate::from).collect();
    let rmse = match standardized_rmse(&estimates, baseline) {
        Ok(v) => Some(v),
        Err(Error::Input(msg)) if msg.contains("scale") => {
            log::warn!("{recruitment}/{estimator}: RMSE undefined: {msg}");
            None
        }
        Err(e) => return Err(e),
    };
    let intervals: Vec<AttributeInterval> = reports.iter().map(AttributeInterval::from).collect();
    let coverage = ci_coverage(&intervals, baseline)?;
    Ok(MetricsCell {
        recruitment,
        estimator,
        rmse,
        coverage_count: coverage.count,
        coverage_total: coverage.total,
    })
}
