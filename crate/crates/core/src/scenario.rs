//! Configuration-driven scenarios: generate, recruit with both arms,
//! estimate, evaluate, replicate.
//!
//! A config file is TOML. Missing keys take the defaults of
//! [`ScenarioConfig::default`], which are the full-scale simulation
//! settings shipped as `presets/paper.toml`. Any key can be overridden by an
//! environment variable named `RRDS_` followed by the upper-cased key path
//! with `__` between levels, e.g. `RRDS_POPULATION__FEMALE_PROP=0.6` or
//! `RRDS_RECRUIT__RDS__SELECTION_ALPHA=0.5`. Values are parsed as TOML
//! literals and fall back to plain strings.
//!
//! Replication `i` uses seed `rng::replication_seed(master_seed, i)`; each
//! stage inside it draws from `rng::stream(replication_seed, [stage, ...])`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimators::{
    tree_bootstrap, vh_interval, EstimateReport, Estimator, SurveyedSample, DEFAULT_BOOTSTRAP_SAMPLES,
    DEFAULT_LEVEL,
};
use crate::io::{self, EstimatesFile};
use crate::metrics::{
    convergence_trace, evaluate_cell, pad_wave_stats, wave_stats, Baseline, MetricsCell, MetricsReport, WaveStats,
    STANDARDIZATION,
};
use crate::network::{generate_edges, generate_population, Gender, NodeId, PopulationSpec, SocialGraph, ATTRIBUTES};
use crate::recruitment::{run_recruitment, select_seeds, Method, RecruitConfig, Recruitment, SeedFill, SeedSpec};
use crate::rng::{self, stage};

pub const ENV_PREFIX: &str = "RRDS_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArmSelection {
    Rds,
    Rrds,
    Both,
}

impl ArmSelection {
    pub fn methods(self) -> Vec<Method> {
        match self {
            ArmSelection::Rds => vec![Method::Rds],
            ArmSelection::Rrds => vec![Method::Rrds],
            ArmSelection::Both => Method::BOTH.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorSelection {
    Vh,
    Treeboot,
    Both,
}

impl EstimatorSelection {
    pub fn estimators(self) -> Vec<Estimator> {
        match self {
            EstimatorSelection::Vh => vec![Estimator::Vh],
            EstimatorSelection::Treeboot => vec![Estimator::Treeboot],
            EstimatorSelection::Both => vec![Estimator::Vh, Estimator::Treeboot],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmConfigs {
    pub rds: RecruitConfig,
    pub rrds: RecruitConfig,
}

impl ArmConfigs {
    pub fn get(&self, method: Method) -> &RecruitConfig {
        match method {
            Method::Rds => &self.rds,
            Method::Rrds => &self.rrds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    pub bootstrap_samples: usize,
    pub level: f64,
    /// Attributes of each individual to estimate (`age`, `female`).
    pub attributes: Vec<String>,
    pub use_estimators: EstimatorSelection,
    /// Also write every bootstrap replicate and weight as CSV.
    pub dump_replicates: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub replications: usize,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    pub arms: ArmSelection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub population: PopulationSpec,
    pub seeds: SeedSpec,
    pub recruit: ArmConfigs,
    pub estimator: EstimatorConfig,
    pub run: RunConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            population: PopulationSpec::default(),
            seeds: SeedSpec {
                count: 76,
                gender: Some(Gender::Male),
                max_age: Some(22.0),
                fill: SeedFill::Nearest,
            },
            recruit: ArmConfigs {
                rds: RecruitConfig::rds(),
                rrds: RecruitConfig::rrds(),
            },
            estimator: EstimatorConfig {
                bootstrap_samples: DEFAULT_BOOTSTRAP_SAMPLES,
                level: DEFAULT_LEVEL,
                attributes: ATTRIBUTES.iter().map(|s| s.to_string()).collect(),
                use_estimators: EstimatorSelection::Both,
                dump_replicates: false,
            },
            run: RunConfig {
                replications: 50,
                master_seed: 42,
                output_dir: PathBuf::from("out"),
                workers: 0,
                arms: ArmSelection::Both,
            },
        }
    }
}

fn prefixed(section: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Config { field, message } if !field.starts_with(section) => Error::Config {
            field: format!("{section}.{field}"),
            message,
        },
        other => other,
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.population.validate().map_err(prefixed("population"))?;
        self.seeds.validate()?;
        self.recruit.rds.validate().map_err(prefixed("recruit.rds"))?;
        self.recruit.rrds.validate().map_err(prefixed("recruit.rrds"))?;
        let est = &self.estimator;
        if est.bootstrap_samples < 1 {
            return Err(Error::config("estimator.bootstrap_samples", "must be at least 1"));
        }
        if !(est.level > 0.0 && est.level < 1.0) {
            return Err(Error::config("estimator.level", format!("must lie in (0, 1), got {}", est.level)));
        }
        if est.attributes.is_empty() {
            return Err(Error::config("estimator.attributes", "must name at least one attribute"));
        }
        for a in &est.attributes {
            if !ATTRIBUTES.contains(&a.as_str()) {
                return Err(Error::config(
                    "estimator.attributes",
                    format!("unknown attribute `{a}`; known: {ATTRIBUTES:?}"),
                ));
            }
        }
        if self.run.replications < 1 {
            return Err(Error::config("run.replications", "must be at least 1"));
        }
        Ok(())
    }

    /// Parses TOML text layered over the defaults, then applies environment
    /// overrides, then validates.
    pub fn from_toml_str<I>(text: &str, env: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut table = toml::Table::try_from(ScenarioConfig::default()).expect("default config serializes");
        let file: toml::Table = toml::from_str(text).map_err(|e| toml_error("<config>", text, e))?;
        merge(&mut table, file);
        apply_env(&mut table, env)?;
        let config: ScenarioConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(config_field(&e), e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Loads a config file (or the defaults when `path` is `None`) with
    /// overrides from the process environment.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let text = match path {
            Some(p) => fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => String::new(),
        };
        Self::from_toml_str(&text, std::env::vars()).map_err(|e| match (e, path) {
            (Error::Parse { line, column, message, .. }, Some(p)) => Error::Parse {
                path: p.display().to_string(),
                line,
                column,
                message,
            },
            (e, _) => e,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

fn toml_error(path: &str, text: &str, e: toml::de::Error) -> Error {
    let (line, column) = e
        .span()
        .map(|span| {
            let before = &text[..span.start.min(text.len())];
            let line = before.matches('\n').count() as u64 + 1;
            let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) as u64 + 1;
            (line, column)
        })
        .unwrap_or((0, 0));
    Error::Parse {
        path: path.to_string(),
        line,
        column,
        message: e.message().to_string(),
    }
}

fn config_field(e: &toml::de::Error) -> String {
    // messages look like "unknown field `x`" or "invalid type ... for key `a.b`"
    let msg = e.message();
    msg.split('`').nth(1).unwrap_or("config").to_string()
}

/// Deep merge; `nomination` tables are replaced whole since their keys
/// depend on the mode.
fn merge(base: &mut toml::Table, overlay: toml::Table) {
    for (key, value) in overlay {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) if key != "nomination" => merge(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

fn apply_env<I>(table: &mut toml::Table, env: I) -> Result<()>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut overrides: Vec<(String, String)> = env
        .into_iter()
        .filter_map(|(k, v)| k.strip_prefix(ENV_PREFIX).map(|rest| (rest.to_ascii_lowercase(), v)))
        .collect();
    overrides.sort();
    for (key, raw) in overrides {
        let path: Vec<&str> = key.split("__").collect();
        let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or(toml::Value::String(raw.clone()));
        let (last, parents) = path.split_last().expect("split yields one element");
        let mut cursor = &mut *table;
        for p in parents {
            cursor = match cursor
                .entry(p.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            {
                toml::Value::Table(t) => t,
                _ => {
                    return Err(Error::config(
                        path.join("."),
                        format!("environment override {ENV_PREFIX}{} descends into a non-table", key.to_uppercase()),
                    ))
                }
            };
        }
        cursor.insert(last.to_string(), value);
    }
    Ok(())
}

// --- stages ------------------------------------------------------------

pub fn generate_stage(config: &ScenarioConfig, replication_seed: u64) -> Result<SocialGraph> {
    let population = generate_population(&config.population, &mut rng::stream(replication_seed, &[stage::POPULATION]))?;
    generate_edges(population, &config.population, &mut rng::stream(replication_seed, &[stage::EDGES]))
}

pub fn seed_stage(config: &ScenarioConfig, graph: &SocialGraph, replication_seed: u64) -> Result<Vec<NodeId>> {
    select_seeds(graph, &config.seeds, &mut rng::stream(replication_seed, &[stage::SEEDS]))
}

pub fn recruit_stage(
    config: &ScenarioConfig,
    graph: &SocialGraph,
    seeds: &[NodeId],
    method: Method,
    replication_seed: u64,
) -> Result<Recruitment> {
    let tag = match method {
        Method::Rds => stage::RECRUIT_RDS,
        Method::Rrds => stage::RECRUIT_RRDS,
    };
    run_recruitment(graph, seeds, config.recruit.get(method), method, &mut rng::stream(replication_seed, &[tag]))
}

/// Every configured estimator for every attribute, attribute-major.
pub fn estimate_stage(
    config: &ScenarioConfig,
    forest: &crate::recruitment::RecruitmentForest,
    sample: &SurveyedSample,
    replication_seed: u64,
) -> Result<Vec<EstimateReport>> {
    let tag = match forest.method {
        Method::Rds => stage::BOOTSTRAP_RDS,
        Method::Rrds => stage::BOOTSTRAP_RRDS,
    };
    let est = &config.estimator;
    let usable = sample.estimable();
    if usable.len() < sample.len() {
        info!(
            "{}: {} degree-zero respondents excluded from estimation",
            forest.method,
            sample.len() - usable.len()
        );
    }
    let mut reports = Vec::new();
    for (k, attribute) in est.attributes.iter().enumerate() {
        for estimator in est.use_estimators.estimators() {
            let report = match estimator {
                Estimator::Vh => vh_interval(&usable, attribute, est.level)?,
                Estimator::Treeboot => tree_bootstrap(
                    forest,
                    sample,
                    attribute,
                    est.bootstrap_samples,
                    est.level,
                    &mut rng::stream(replication_seed, &[tag, k as u64]),
                )?,
                Estimator::Naive => unreachable!("not selectable"),
            };
            reports.push(report);
        }
    }
    Ok(reports)
}

/// One grid cell per (arm, estimator) present in `estimates`.
pub fn metrics_stage(estimates: &[EstimatesFile], baseline: &Baseline) -> Result<MetricsReport> {
    let mut cells = Vec::new();
    for file in estimates {
        let mut by_estimator: BTreeMap<Estimator, Vec<EstimateReport>> = BTreeMap::new();
        for r in &file.estimates {
            by_estimator.entry(r.estimator).or_default().push(r.clone());
        }
        for (estimator, reports) in by_estimator {
            cells.push(evaluate_cell(file.recruitment, estimator, &reports, baseline)?);
        }
    }
    Ok(MetricsReport {
        standardization: STANDARDIZATION.to_string(),
        cells,
    })
}

// --- replications ------------------------------------------------------

/// Everything one arm produced in one replication.
#[derive(Debug, Clone)]
pub struct ArmOutcome {
    pub method: Method,
    pub recruitment: Recruitment,
    pub sample: SurveyedSample,
    pub waves: Vec<WaveStats>,
    pub estimates: Vec<EstimateReport>,
}

impl ArmOutcome {
    pub fn final_size(&self) -> usize {
        self.recruitment.forest.len()
    }
}

#[derive(Debug, Clone)]
pub struct ReplicationOutcome {
    pub index: usize,
    pub seed: u64,
    pub baseline: Baseline,
    pub seeds: Vec<NodeId>,
    pub arms: Vec<ArmOutcome>,
    pub metrics: MetricsReport,
}

/// Output file name for a per-arm artifact.
pub fn arm_file(prefix: &str, method: Method, ext: &str) -> String {
    format!("{prefix}_{}.{ext}", method.tag())
}

/// Runs replication `index` in memory; when `dir` is given, writes its
/// stage files there (the same names the stage subcommands use).
pub fn run_replication(config: &ScenarioConfig, index: usize, dir: Option<&Path>) -> Result<ReplicationOutcome> {
    let seed = rng::replication_seed(config.run.master_seed, index as u64);
    let graph = generate_stage(config, seed)?;
    let baseline = Baseline::from_population(graph.individuals(), &config.estimator.attributes)?;
    let seeds = seed_stage(config, &graph, seed)?;
    if let Some(d) = dir {
        io::write_file(&d.join("nodes.csv"), &io::nodes_csv(&graph))?;
        io::write_file(&d.join("edges.csv"), &io::edges_csv(&graph))?;
        io::write_file(&d.join("seeds.csv"), &io::seeds_csv(&seeds))?;
    }
    let mut arms = Vec::new();
    for method in config.run.arms.methods() {
        let recruitment = recruit_stage(config, &graph, &seeds, method, seed)?;
        let sample = SurveyedSample::from_recruitment(&recruitment, graph.individuals(), &config.estimator.attributes)?;
        let waves = wave_stats(&recruitment.forest, graph.individuals())?;
        let estimates = estimate_stage(config, &recruitment.forest, &sample, seed)?;
        if let Some(d) = dir {
            write_recruit_outputs(d, &recruitment, &sample, &waves)?;
            write_estimates(d, method, &estimates, config.estimator.dump_replicates)?;
        }
        arms.push(ArmOutcome {
            method,
            recruitment,
            sample,
            waves,
            estimates,
        });
    }
    let files: Vec<EstimatesFile> = arms
        .iter()
        .map(|a| EstimatesFile {
            recruitment: a.method,
            estimates: a.estimates.clone(),
        })
        .collect();
    let metrics = metrics_stage(&files, &baseline)?;
    if let Some(d) = dir {
        io::write_file(&d.join("metrics.json"), &io::json_bytes(&metrics))?;
    }
    Ok(ReplicationOutcome {
        index,
        seed,
        baseline,
        seeds,
        arms,
        metrics,
    })
}

pub fn write_recruit_outputs(dir: &Path, rec: &Recruitment, sample: &SurveyedSample, waves: &[WaveStats]) -> Result<()> {
    let m = rec.forest.method;
    io::write_file(&dir.join(arm_file("forest", m, "csv")), &io::forest_csv(&rec.forest))?;
    io::write_file(&dir.join(arm_file("sample", m, "csv")), &io::sample_csv(sample))?;
    io::write_file(&dir.join(arm_file("wave_stats", m, "csv")), &io::wave_stats_csv(waves))
}

pub fn write_estimates(dir: &Path, method: Method, estimates: &[EstimateReport], dump_replicates: bool) -> Result<()> {
    let file = EstimatesFile {
        recruitment: method,
        estimates: estimates.to_vec(),
    };
    io::write_file(&dir.join(arm_file("estimates", method, "json")), &io::json_bytes(&file))?;
    if dump_replicates {
        for r in estimates.iter().filter(|r| r.estimator == Estimator::Treeboot) {
            let name = format!("replicates_{}_{}.csv", method.tag(), r.attribute);
            io::write_file(&dir.join(name), &io::replicates_csv(r))?;
        }
    }
    Ok(())
}

pub fn replication_dir(out: &Path, index: usize) -> PathBuf {
    out.join(format!("rep_{index:04}"))
}

// --- aggregation -------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    pub fn of(values: &[f64]) -> MeanSd {
        let n = values.len() as f64;
        if values.is_empty() {
            return MeanSd { mean: f64::NAN, sd: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        MeanSd { mean, sd }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveAggregate {
    pub wave: u32,
    pub new_unique: MeanSd,
    pub cumulative_n: MeanSd,
    pub mean_age: f64,
    pub prop_female: f64,
    pub age_bias: f64,
    pub female_bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmAggregate {
    pub method: Method,
    pub final_size: MeanSd,
    /// New recruits per wave over waves `1..=max_waves`.
    pub new_per_wave: MeanSd,
    pub lost_referrals: MeanSd,
    pub waves: Vec<WaveAggregate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellAggregate {
    pub recruitment: Method,
    pub estimator: Estimator,
    /// Mean of the per-replication RMSE over replications where it is defined.
    pub rmse: Option<f64>,
    pub coverage_count: usize,
    pub coverage_total: usize,
    pub coverage_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub replications: usize,
    pub arms: Vec<ArmAggregate>,
    /// Mean RRDS final size over mean RDS final size (when both arms ran).
    pub final_size_ratio: Option<f64>,
    pub new_per_wave_ratio: Option<f64>,
    pub standardization: String,
    pub cells: Vec<CellAggregate>,
}

impl Aggregate {
    pub fn arm(&self, method: Method) -> Option<&ArmAggregate> {
        self.arms.iter().find(|a| a.method == method)
    }
}

/// Deterministic reduction over replications (in index order).
pub fn aggregate(config: &ScenarioConfig, outcomes: &[ReplicationOutcome]) -> Result<Aggregate> {
    let max_wave = config
        .run
        .arms
        .methods()
        .iter()
        .map(|&m| config.recruit.get(m).max_waves)
        .max()
        .unwrap_or(0) as u32;
    let mut arms = Vec::new();
    for method in config.run.arms.methods() {
        let max_waves = config.recruit.get(method).max_waves as u32;
        let mut finals = Vec::new();
        let mut per_wave = Vec::new();
        let mut lost = Vec::new();
        let mut traces: Vec<Vec<WaveStats>> = Vec::new();
        let mut biases = Vec::new();
        for o in outcomes {
            let arm = o
                .arms
                .iter()
                .find(|a| a.method == method)
                .ok_or_else(|| Error::Input(format!("replication {} lacks arm {method}", o.index)))?;
            finals.push(arm.final_size() as f64);
            let seeds = arm.recruitment.forest.seeds.len() as f64;
            per_wave.push(if max_waves > 0 {
                (arm.final_size() as f64 - seeds) / max_waves as f64
            } else {
                0.0
            });
            lost.push(arm.recruitment.lost_referrals as f64);
            let padded = pad_wave_stats(&arm.waves, max_wave);
            biases.push(convergence_trace(&padded, &o.baseline).ok());
            traces.push(padded);
        }
        let mut waves = Vec::new();
        for w in 0..=max_wave as usize {
            let col: Vec<&WaveStats> = traces.iter().filter_map(|t| t.get(w)).collect();
            if col.is_empty() {
                continue;
            }
            let k = col.len() as f64;
            let new_unique: Vec<f64> = col.iter().map(|s| s.new_unique as f64).collect();
            let cumulative: Vec<f64> = col.iter().map(|s| s.cumulative_n as f64).collect();
            let bias_col: Vec<(f64, f64)> = biases
                .iter()
                .filter_map(|b| b.as_ref().and_then(|b| b.get(w)).map(|p| (p.age_bias, p.female_bias)))
                .collect();
            let kb = bias_col.len() as f64;
            waves.push(WaveAggregate {
                wave: w as u32,
                new_unique: MeanSd::of(&new_unique),
                cumulative_n: MeanSd::of(&cumulative),
                mean_age: col.iter().map(|s| s.mean_age).sum::<f64>() / k,
                prop_female: col.iter().map(|s| s.prop_female).sum::<f64>() / k,
                age_bias: bias_col.iter().map(|b| b.0).sum::<f64>() / kb,
                female_bias: bias_col.iter().map(|b| b.1).sum::<f64>() / kb,
            });
        }
        arms.push(ArmAggregate {
            method,
            final_size: MeanSd::of(&finals),
            new_per_wave: MeanSd::of(&per_wave),
            lost_referrals: MeanSd::of(&lost),
            waves,
        });
    }

    let ratio = |f: fn(&ArmAggregate) -> f64| {
        let rds = arms.iter().find(|a| a.method == Method::Rds)?;
        let rrds = arms.iter().find(|a| a.method == Method::Rrds)?;
        Some(f(rrds) / f(rds))
    };
    let final_size_ratio = ratio(|a| a.final_size.mean);
    let new_per_wave_ratio = ratio(|a| a.new_per_wave.mean);

    let mut cell_acc: BTreeMap<(Method, Estimator), (Vec<f64>, usize, usize)> = BTreeMap::new();
    for o in outcomes {
        for c in &o.metrics.cells {
            let e = cell_acc.entry((c.recruitment, c.estimator)).or_default();
            if let Some(r) = c.rmse {
                e.0.push(r);
            }
            e.1 += c.coverage_count;
            e.2 += c.coverage_total;
        }
    }
    let cells = cell_acc
        .into_iter()
        .map(|((recruitment, estimator), (rmse, count, total))| CellAggregate {
            recruitment,
            estimator,
            rmse: (!rmse.is_empty()).then(|| MeanSd::of(&rmse).mean),
            coverage_count: count,
            coverage_total: total,
            coverage_rate: if total > 0 { count as f64 / total as f64 } else { f64::NAN },
        })
        .collect();

    Ok(Aggregate {
        replications: outcomes.len(),
        arms,
        final_size_ratio,
        new_per_wave_ratio,
        standardization: STANDARDIZATION.to_string(),
        cells,
    })
}

/// Long-format plot data: `wave,method,metric,value`.
pub fn plot_data_csv(agg: &Aggregate) -> Vec<u8> {
    let mut rows = Vec::new();
    for arm in &agg.arms {
        for w in &arm.waves {
            let metrics = [
                ("new_unique", w.new_unique.mean),
                ("cumulative_n", w.cumulative_n.mean),
                ("mean_age", w.mean_age),
                ("prop_female", w.prop_female),
                ("age_bias", w.age_bias),
                ("female_bias", w.female_bias),
            ];
            for (name, value) in metrics {
                rows.push([w.wave.to_string(), arm.method.tag().to_string(), name.to_string(), value.to_string()]);
            }
        }
    }
    io::csv_bytes(&io::PLOT_HEADER, rows)
}

/// Per-wave aggregate table: one row per (wave, method).
pub fn waves_csv(agg: &Aggregate) -> Vec<u8> {
    let header = [
        "wave",
        "method",
        "new_unique_mean",
        "new_unique_sd",
        "cumulative_n_mean",
        "cumulative_n_sd",
        "mean_age",
        "prop_female",
        "age_bias",
        "female_bias",
    ];
    let rows = agg.arms.iter().flat_map(|arm| {
        arm.waves.iter().map(move |w| {
            [
                w.wave.to_string(),
                arm.method.tag().to_string(),
                w.new_unique.mean.to_string(),
                w.new_unique.sd.to_string(),
                w.cumulative_n.mean.to_string(),
                w.cumulative_n.sd.to_string(),
                w.mean_age.to_string(),
                w.prop_female.to_string(),
                w.age_bias.to_string(),
                w.female_bias.to_string(),
            ]
        })
    });
    io::csv_bytes(&header, rows)
}

// --- manifest ----------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Path relative to the output directory, `/`-separated.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    /// `complete`, or `partial` when a replication failed.
    pub status: String,
    pub error: Option<String>,
    pub started_at: String,
    pub finished_at: String,
    pub master_seed: u64,
    pub replication_seeds: Vec<u64>,
    pub config: ScenarioConfig,
    pub files: Vec<FileEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Inventory of every file under `dir` except the manifest itself, sorted by path.
pub fn inventory(dir: &Path) -> Result<Vec<FileEntry>> {
    let mut out = Vec::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| {
            let path = e.path().unwrap_or(dir).to_path_buf();
            Error::io(path, e.into())
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry
            .path()
            .strip_prefix(dir)
            .expect("walk stays under root")
            .components()
            .map(|c| c.as_os_str().to_string_lossy().into_owned())
            .collect::<Vec<_>>()
            .join("/");
        if rel == MANIFEST_FILE {
            continue;
        }
        let bytes = fs::read(entry.path()).map_err(|e| Error::io(entry.path(), e))?;
        out.push(FileEntry {
            path: rel,
            bytes: bytes.len() as u64,
            sha256: sha256_hex(&bytes),
        });
    }
    out.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out)
}

/// Result of [`run_scenario`].
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub manifest: RunManifest,
    pub aggregate: Aggregate,
    pub outcomes: Vec<ReplicationOutcome>,
}

/// Runs every replication (in parallel, `run.workers` threads), writes
/// per-replication files, aggregates, and writes the manifest last.
///
/// If a replication fails, the files already written are inventoried in a
/// manifest marked `partial` and the error is returned.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioRun> {
    config.validate()?;
    let started = chrono::Utc::now();
    let clock = Instant::now();
    let out = &config.run.output_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let replication_seeds: Vec<u64> = (0..config.run.replications)
        .map(|i| rng::replication_seed(config.run.master_seed, i as u64))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.run.workers)
        .build()
        .map_err(|e| Error::config("run.workers", e.to_string()))?;
    let results: Vec<Result<ReplicationOutcome>> = pool.install(|| {
        (0..config.run.replications)
            .into_par_iter()
            .map(|i| run_replication(config, i, Some(&replication_dir(out, i))))
            .collect()
    });

    let mut outcomes = Vec::with_capacity(results.len());
    let mut failure = None;
    for r in results {
        match r {
            Ok(o) => outcomes.push(o),
            Err(e) if failure.is_none() => failure = Some(e),
            Err(_) => {}
        }
    }

    let write_manifest = |status: &str, error: Option<String>| -> Result<RunManifest> {
        let manifest = RunManifest {
            tool: "rrds".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            status: status.into(),
            error,
            started_at: started.to_rfc3339(),
            finished_at: chrono::Utc::now().to_rfc3339(),
            master_seed: config.run.master_seed,
            replication_seeds: replication_seeds.clone(),
            config: config.clone(),
            files: inventory(out)?,
        };
        io::write_file(&out.join(MANIFEST_FILE), &io::json_bytes(&manifest))?;
        Ok(manifest)
    };

    if let Some(e) = failure {
        write_manifest("partial", Some(e.to_string()))?;
        return Err(e);
    }

    let agg = aggregate(config, &outcomes)?;
    io::write_file(&out.join("aggregate.json"), &io::json_bytes(&agg))?;
    io::write_file(&out.join("waves.csv"), &waves_csv(&agg))?;
    io::write_file(&out.join("plot_data.csv"), &plot_data_csv(&agg))?;
    let metrics = MetricsReport {
        standardization: STANDARDIZATION.to_string(),
        cells: agg
            .cells
            .iter()
            .map(|c| MetricsCell {
                recruitment: c.recruitment,
                estimator: c.estimator,
                rmse: c.rmse,
                coverage_count: c.coverage_count,
                coverage_total: c.coverage_total,
            })
            .collect(),
    };
    io::write_file(&out.join("metrics.json"), &io::json_bytes(&metrics))?;
    let manifest = write_manifest("complete", None)?;
    info!(
        "{} replications in {:.1}s -> {}",
        outcomes.len(),
        clock.elapsed().as_secs_f64(),
        out.display()
    );
    Ok(ScenarioRun {
        manifest,
        aggregate: agg,
        outcomes,
    })
}
