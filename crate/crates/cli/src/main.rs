//! `rrds`: run RDS/RRDS simulation scenarios, whole or one stage at a time.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use rrds_core::error::{Error, Result};
use rrds_core::io::{self, EstimatesFile};
use rrds_core::metrics::{wave_stats, Baseline};
use rrds_core::recruitment::Method;
use rrds_core::rng;
use rrds_core::scenario::{
    self, arm_file, ArmSelection, EstimatorSelection, ScenarioConfig, MANIFEST_FILE,
};
use rrds_core::estimators::SurveyedSample;

#[derive(Parser, Debug)]
#[command(name = "rrds", version, about = "Simulate respondent-driven sampling (RDS) against randomized RDS (RRDS)")]
struct Cli {
    #[command(flatten)]
    common: Common,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Scenario config (TOML); defaults to the built-in full-scale scenario.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Number of replications.
    #[arg(long, global = true, value_name = "N")]
    reps: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,
    #[arg(long, global = true, value_enum)]
    arm: Option<ArmArg>,
    #[arg(long, global = true, value_enum)]
    estimator: Option<EstimatorArg>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ArmArg {
    Rds,
    Rrds,
    Both,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum EstimatorArg {
    Vh,
    Treeboot,
    Both,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a population and its social graph: nodes.csv, edges.csv.
    Generate {
        /// Replication index whose derived seed to use.
        #[arg(long, default_value_t = 0)]
        replication: usize,
    },
    /// Select seeds and run recruitment: seeds.csv, forest_<arm>.csv,
    /// sample_<arm>.csv, wave_stats_<arm>.csv.
    Recruit {
        #[arg(long, default_value_t = 0)]
        replication: usize,
        /// Directory holding nodes.csv and edges.csv (default: --out).
        #[arg(long = "in", value_name = "DIR")]
        input: Option<PathBuf>,
        #[arg(long)]
        nodes: Option<PathBuf>,
        #[arg(long)]
        edges: Option<PathBuf>,
        /// Use these seeds instead of selecting them.
        #[arg(long)]
        seeds: Option<PathBuf>,
    },
    /// Estimate from a forest and sample: estimates_<arm>.json.
    Estimate {
        #[arg(long, default_value_t = 0)]
        replication: usize,
        /// Directory holding the recruit outputs (default: --out).
        #[arg(long = "in", value_name = "DIR")]
        input: Option<PathBuf>,
        #[arg(long)]
        forest: Option<PathBuf>,
        #[arg(long)]
        sample: Option<PathBuf>,
        #[arg(long)]
        seeds: Option<PathBuf>,
    },
    /// Evaluate estimates against the population: metrics.json.
    Metrics {
        #[arg(long = "in", value_name = "DIR")]
        input: Option<PathBuf>,
        #[arg(long)]
        nodes: Option<PathBuf>,
        /// Estimate files; default: estimates_<arm>.json for each selected arm.
        #[arg(long, num_args = 1..)]
        estimates: Vec<PathBuf>,
    },
    /// Full pipeline over every replication, with aggregates and manifest.
    Simulate,
}

fn build_config(common: &Common) -> Result<ScenarioConfig> {
    let mut config = ScenarioConfig::load(common.config.as_deref())?;
    if let Some(s) = common.seed {
        config.run.master_seed = s;
    }
    if let Some(r) = common.reps {
        config.run.replications = r;
    }
    if let Some(o) = &common.out {
        config.run.output_dir = o.clone();
    }
    if let Some(w) = common.workers {
        config.run.workers = w;
    }
    if let Some(a) = common.arm {
        config.run.arms = match a {
            ArmArg::Rds => ArmSelection::Rds,
            ArmArg::Rrds => ArmSelection::Rrds,
            ArmArg::Both => ArmSelection::Both,
        };
    }
    if let Some(e) = common.estimator {
        config.estimator.use_estimators = match e {
            EstimatorArg::Vh => EstimatorSelection::Vh,
            EstimatorArg::Treeboot => EstimatorSelection::Treeboot,
            EstimatorArg::Both => EstimatorSelection::Both,
        };
    }
    config.validate()?;
    Ok(config)
}

fn pick(explicit: &Option<PathBuf>, dir: &Path, name: &str) -> PathBuf {
    explicit.clone().unwrap_or_else(|| dir.join(name))
}

fn single_arm(config: &ScenarioConfig, explicit: bool) -> Result<Vec<Method>> {
    let arms = config.run.arms.methods();
    if explicit && arms.len() != 1 {
        return Err(Error::config("arm", "explicit input files need a single --arm (rds or rrds)"));
    }
    Ok(arms)
}

fn run(cli: Cli) -> Result<()> {
    let config = build_config(&cli.common)?;
    let out = config.run.output_dir.clone();
    match cli.command {
        Command::Simulate => {
            let run = scenario::run_scenario(&config)?;
            if let Some(r) = run.aggregate.final_size_ratio {
                info!("RRDS/RDS mean final size ratio {r:.3}");
            }
            println!("{}", out.join(MANIFEST_FILE).display());
        }
        Command::Generate { replication } => {
            let seed = rng::replication_seed(config.run.master_seed, replication as u64);
            let graph = scenario::generate_stage(&config, seed)?;
            io::write_file(&out.join("nodes.csv"), &io::nodes_csv(&graph))?;
            io::write_file(&out.join("edges.csv"), &io::edges_csv(&graph))?;
        }
        Command::Recruit {
            replication,
            input,
            nodes,
            edges,
            seeds,
        } => {
            let dir = input.unwrap_or_else(|| out.clone());
            let graph = io::read_graph(&pick(&nodes, &dir, "nodes.csv"), &pick(&edges, &dir, "edges.csv"))?;
            let seed = rng::replication_seed(config.run.master_seed, replication as u64);
            let seed_ids = match &seeds {
                Some(p) => io::read_seeds(p)?,
                None => scenario::seed_stage(&config, &graph, seed)?,
            };
            io::write_file(&out.join("seeds.csv"), &io::seeds_csv(&seed_ids))?;
            for method in config.run.arms.methods() {
                let rec = scenario::recruit_stage(&config, &graph, &seed_ids, method, seed)?;
                let sample = SurveyedSample::from_recruitment(&rec, graph.individuals(), &config.estimator.attributes)?;
                let waves = wave_stats(&rec.forest, graph.individuals())?;
                scenario::write_recruit_outputs(&out, &rec, &sample, &waves)?;
            }
        }
        Command::Estimate {
            replication,
            input,
            forest,
            sample,
            seeds,
        } => {
            let dir = input.unwrap_or_else(|| out.clone());
            let seed = rng::replication_seed(config.run.master_seed, replication as u64);
            let seed_ids = io::read_seeds(&pick(&seeds, &dir, "seeds.csv"))?;
            for method in single_arm(&config, forest.is_some() || sample.is_some())? {
                let f = io::read_forest(
                    &pick(&forest, &dir, &arm_file("forest", method, "csv")),
                    seed_ids.clone(),
                    method,
                )?;
                let s = io::read_sample(&pick(&sample, &dir, &arm_file("sample", method, "csv")))?;
                let reports = scenario::estimate_stage(&config, &f, &s, seed)?;
                scenario::write_estimates(&out, method, &reports, config.estimator.dump_replicates)?;
            }
        }
        Command::Metrics {
            input,
            nodes,
            estimates,
        } => {
            let dir = input.unwrap_or_else(|| out.clone());
            let population = io::read_nodes(&pick(&nodes, &dir, "nodes.csv"))?;
            let baseline = Baseline::from_population(&population, &config.estimator.attributes)?;
            let paths = if estimates.is_empty() {
                config
                    .run
                    .arms
                    .methods()
                    .into_iter()
                    .map(|m| dir.join(arm_file("estimates", m, "json")))
                    .collect()
            } else {
                estimates
            };
            let files = paths
                .iter()
                .map(|p| io::read_json::<EstimatesFile>(p))
                .collect::<Result<Vec<_>>>()?;
            let report = scenario::metrics_stage(&files, &baseline)?;
            io::write_file(&out.join("metrics.json"), &io::json_bytes(&report))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
