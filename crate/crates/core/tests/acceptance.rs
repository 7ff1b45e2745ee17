//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p rrds-core --test acceptance`.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::Rng;
use rayon::prelude::*;
use statrs::distribution::{Binomial, DiscreteCDF};

use common::{empirical, lexicographic_top_k, preset_config, total_variation, uniform_chi_square_p, TinyForest};
use rrds_core::estimators::{naive_interval, tree_bootstrap, vh_estimate, SampleRecord, SurveyedSample};
use rrds_core::metrics::{convergence_trace, pad_wave_stats};
use rrds_core::network::Gender;
use rrds_core::recruitment::{rds_select, rrds_select, run_recruitment, select_seeds, Method};
use rrds_core::rng::{self, rng_from_seed, stage};
use rrds_core::scenario::{self, ScenarioConfig, ScenarioRun, MANIFEST_FILE};
use rrds_core::{Individual, NodeId};

const FULL_REPS: usize = 50;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn full_run() -> (ScenarioRun, Duration, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let mut config = preset_config();
    config.run.replications = FULL_REPS;
    config.run.output_dir = dir.path().to_path_buf();
    let start = Instant::now();
    let run = scenario::run_scenario(&config).unwrap();
    (run, start.elapsed(), dir)
}

fn criterion_1(run: &ScenarioRun, elapsed: Duration) -> Outcome {
    let agg = &run.aggregate;
    let rds = agg.arm(Method::Rds).unwrap().final_size.mean;
    let rrds = agg.arm(Method::Rrds).unwrap().final_size.mean;
    let ratio = agg.final_size_ratio.unwrap();
    let secs = elapsed.as_secs_f64();
    outcome(
        ratio >= 1.5 && secs < 120.0 && agg.replications >= 50,
        format!(
            "mean final size RRDS {rrds:.1} / RDS {rds:.1} = {ratio:.3} (need >= 1.5) over {} reps in {secs:.1}s (need < 120s)",
            agg.replications
        ),
    )
}

fn criterion_2(run: &ScenarioRun) -> Outcome {
    let agg = &run.aggregate;
    let rds = agg.arm(Method::Rds).unwrap().new_per_wave.mean;
    let rrds = agg.arm(Method::Rrds).unwrap().new_per_wave.mean;
    let ratio = agg.new_per_wave_ratio.unwrap();
    outcome(
        ratio >= 1.5,
        format!("mean new per wave RRDS {rrds:.1} / RDS {rds:.1} = {ratio:.3} (need >= 1.5)"),
    )
}

fn criterion_3(run: &ScenarioRun, config: &ScenarioConfig) -> Outcome {
    let mut pass = true;
    let mut notes = Vec::new();
    let mut final_abs: BTreeMap<Method, (f64, f64)> = BTreeMap::new();
    for method in Method::BOTH {
        let max_wave = config.recruit.get(method).max_waves as u32;
        let reps = run.outcomes.len() as f64;
        let mut mean_age = vec![0.0; max_wave as usize + 1];
        let mut prop_female = vec![0.0; max_wave as usize + 1];
        let mut truth = (0.0, 0.0);
        let (mut abs_age, mut abs_female) = (0.0, 0.0);
        for o in &run.outcomes {
            let arm = o.arms.iter().find(|a| a.method == method).unwrap();
            let padded = pad_wave_stats(&arm.waves, max_wave);
            for (w, s) in padded.iter().enumerate() {
                mean_age[w] += s.mean_age / reps;
                prop_female[w] += s.prop_female / reps;
            }
            truth.0 += o.baseline.value("age").unwrap() / reps;
            truth.1 += o.baseline.value("female").unwrap() / reps;
            let last = *convergence_trace(&padded, &o.baseline).unwrap().last().unwrap();
            abs_age += last.age_bias.abs() / reps;
            abs_female += last.female_bias.abs() / reps;
        }
        final_abs.insert(method, (abs_age, abs_female));

        let starts_ok = mean_age[0] < 22.0 && prop_female[0] == 0.0;
        let age_gap: Vec<f64> = mean_age.iter().map(|a| (a - truth.0).abs()).collect();
        let female_gap: Vec<f64> = prop_female.iter().map(|p| (p - truth.1).abs()).collect();
        let monotone = |gap: &[f64]| gap.windows(2).all(|w| w[1] <= w[0]);
        let ok = starts_ok && monotone(&age_gap) && monotone(&female_gap);
        pass &= ok;
        notes.push(format!(
            "{method}: age {:.2} -> {:.2}, female {:.3} -> {:.3}{}",
            mean_age[0],
            mean_age[max_wave as usize],
            prop_female[0],
            prop_female[max_wave as usize],
            if ok { "" } else { " (not monotone toward truth)" }
        ));
    }
    let (rds_age, rds_f) = final_abs[&Method::Rds];
    let (rrds_age, rrds_f) = final_abs[&Method::Rrds];
    let bias_ok = rrds_f <= rds_f + 0.02 && rrds_age <= rds_age + 1.0;
    pass &= bias_ok;
    notes.push(format!(
        "final |bias| female RRDS {rrds_f:.3} vs RDS {rds_f:.3} (+0.02), age RRDS {rrds_age:.2} vs RDS {rds_age:.2} (+1.0)"
    ));
    outcome(pass, notes.join("; "))
}

fn criterion_4() -> Outcome {
    let records = [(0, 1, 1.0), (1, 2, 0.0), (2, 4, 1.0)]
        .iter()
        .map(|&(id, degree, x)| SampleRecord { id, degree, values: vec![x] })
        .collect();
    let hand = SurveyedSample::new(vec!["x".into()], records).unwrap();
    let got = vh_estimate(&hand, "x").unwrap();
    let want = 1.25 / 1.75;
    let rel = ((got - want) / want).abs();
    let hand_ok = rel < 5e-13;

    let mut rng = rng_from_seed(4);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(1..200);
        let degree = rng.random_range(1..50);
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(-100.0..100.0)).collect();
        let records = values
            .iter()
            .enumerate()
            .map(|(i, &x)| SampleRecord { id: i as NodeId, degree, values: vec![x] })
            .collect();
        let s = SurveyedSample::new(vec!["x".into()], records).unwrap();
        let mean = values.iter().sum::<f64>() / n as f64;
        let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = (vh_estimate(&s, "x").unwrap() - mean).abs() / scale;
        worst = worst.max(err / f64::EPSILON);
    }
    // a few ulps of the largest magnitude, accumulated over up to 200 terms
    let const_ok = worst <= 64.0;
    outcome(
        hand_ok && const_ok,
        format!(
            "hand example {got:.15} vs 1.25/1.75 rel err {rel:.1e} (need < 5e-13); constant degrees max err {worst:.1} eps (need <= 64)"
        ),
    )
}

fn criterion_5() -> Outcome {
    let mut tvs = Vec::new();
    for (i, tiny) in [TinyForest::two_trees(), TinyForest::six_nodes()].iter().enumerate() {
        let oracle = tiny.bootstrap_distribution();
        let report =
            tree_bootstrap(&tiny.forest(), &tiny.sample(), "x", 100_000, 0.95, &mut rng_from_seed(5 + i as u64)).unwrap();
        let sizes_ok = report.replicates.len() == 100_000 && report.weights.iter().all(|&w| w > 0.0);
        tvs.push((tiny.x.len(), oracle.len(), total_variation(&oracle, &empirical(&report.replicates)), sizes_ok));
    }
    let tv_ok = tvs.iter().all(|t| t.2 < 0.01 && t.3);

    let mut degenerate_ok = true;
    for (i, c) in [0.0, 1.0, 41.5, -3.25, 1e6 + 0.1].iter().enumerate() {
        let mut t = TinyForest::six_nodes();
        t.x = vec![*c; t.x.len()];
        let r = tree_bootstrap(&t.forest(), &t.sample(), "x", 2000, 0.95, &mut rng_from_seed(50 + i as u64)).unwrap();
        degenerate_ok &= r.ci_high - r.ci_low == 0.0 && r.ci_low == *c;
    }
    outcome(
        tv_ok && degenerate_ok,
        format!(
            "TV distance to enumeration oracle at B=1e5: {} (need < 0.01); constant forests zero width: {degenerate_ok}",
            tvs.iter()
                .map(|(n, k, tv, _)| format!("{n}-node forest {tv:.4} over {k} outcomes"))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    )
}

fn criterion_6() -> Outcome {
    const STUDIES: usize = 200;
    let start = Instant::now();
    let config = preset_config();
    let graph = scenario::generate_stage(&config, rng::replication_seed(config.run.master_seed, 0)).unwrap();
    let truth = graph.individuals().iter().filter(|p| p.gender == Gender::Female).count() as f64 / graph.len() as f64;
    let attrs = vec!["female".to_string()];
    let covered: Vec<(bool, bool)> = (0..STUDIES)
        .into_par_iter()
        .map(|m| {
            let s = rng::replication_seed(6, m as u64);
            let seeds = select_seeds(&graph, &config.seeds, &mut rng::stream(s, &[stage::SEEDS])).unwrap();
            let rec = run_recruitment(
                &graph,
                &seeds,
                &config.recruit.rrds,
                Method::Rrds,
                &mut rng::stream(s, &[stage::RECRUIT_RRDS]),
            )
            .unwrap();
            let sample = SurveyedSample::from_recruitment(&rec, graph.individuals(), &attrs).unwrap();
            let tb = tree_bootstrap(
                &rec.forest,
                &sample,
                "female",
                config.estimator.bootstrap_samples,
                0.95,
                &mut rng::stream(s, &[stage::BOOTSTRAP_RRDS]),
            )
            .unwrap();
            let naive = naive_interval(&sample, "female", 0.95).unwrap();
            (tb.contains(truth), naive.contains(truth))
        })
        .collect();
    let tb_rate = covered.iter().filter(|c| c.0).count() as f64 / STUDIES as f64;
    let naive_rate = covered.iter().filter(|c| c.1).count() as f64 / STUDIES as f64;
    let only_tb = covered.iter().filter(|c| c.0 && !c.1).count() as u64;
    let only_naive = covered.iter().filter(|c| !c.0 && c.1).count() as u64;
    let discordant = only_tb + only_naive;
    // one-sided sign test on discordant pairs: P(X >= only_tb), X ~ Bin(discordant, 1/2)
    let p = if discordant == 0 || only_tb == 0 {
        1.0
    } else {
        1.0 - Binomial::new(0.5, discordant).unwrap().cdf(only_tb - 1)
    };
    let secs = start.elapsed().as_secs_f64();
    outcome(
        tb_rate > naive_rate && p < 0.05 && tb_rate >= 0.80 && secs < 600.0,
        format!(
            "{STUDIES} RRDS studies on one preset population ({} seeds, B={}): tree-bootstrap coverage {tb_rate:.3} (need >= 0.80) vs naive {naive_rate:.3}; sign test {only_tb}:{only_naive} p={p:.2e} (need < 0.05); {secs:.1}s (need < 600s)",
            config.seeds.count,
            config.estimator.bootstrap_samples
        ),
    )
}

fn random_person(rng: &mut impl Rng, id: NodeId) -> Individual {
    Individual {
        id,
        // coarse ages so ties in |age gap| occur and the id tiebreak matters
        age: rng.random_range(18..66) as f64,
        gender: if rng.random::<bool>() { Gender::Female } else { Gender::Male },
    }
}

fn criterion_7() -> Outcome {
    const DRAWS: usize = 100_000;
    // 5 eligible, pick 3: 10 unordered subsets, equally likely
    let subset_index = |picked: &[NodeId]| -> usize {
        let mut mask = 0usize;
        for &p in picked {
            mask |= 1 << p;
        }
        mask
    };
    let masks: Vec<usize> = (0..32usize).filter(|m| m.count_ones() == 3).collect();
    let tally = |picks: &mut dyn FnMut() -> Vec<NodeId>| -> Vec<u64> {
        let mut counts = vec![0u64; masks.len()];
        for _ in 0..DRAWS {
            let m = subset_index(&picks());
            counts[masks.iter().position(|&x| x == m).unwrap()] += 1;
        }
        counts
    };

    let eligible: Vec<NodeId> = (0..5).collect();
    let mut rng = rng_from_seed(71);
    let p_rrds = uniform_chi_square_p(&tally(&mut || rrds_select(&eligible, 3, &mut rng)));

    let mut rng = rng_from_seed(72);
    let recruiter = Individual { id: 99, age: 30.0, gender: Gender::Male };
    let people: Vec<Individual> = (0..5).map(|i| random_person(&mut rng, i)).collect();
    let p_rds0 = uniform_chi_square_p(&tally(&mut || rds_select(&recruiter, &people, 0.0, 3, &mut rng)));

    let mut rng = rng_from_seed(73);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let n = rng.random_range(0..12);
        let pool: Vec<Individual> = (0..n).map(|i| random_person(&mut rng, i)).collect();
        let recruiter = random_person(&mut rng, 1000);
        let k = rng.random_range(1..5);
        let got = rds_select(&recruiter, &pool, 1.0, k, &mut rng);
        if got != lexicographic_top_k(&recruiter, &pool, k) {
            mismatches += 1;
        }
    }
    outcome(
        p_rrds > 0.01 && p_rds0 > 0.01 && mismatches == 0,
        format!(
            "chi-square p: rrds_select {p_rrds:.3}, rds_select(alpha=0) {p_rds0:.3} (need > 0.01, 1e5 draws); rds_select(alpha=1) mismatches vs oracle {mismatches}/1000 (need 0)"
        ),
    )
}

fn data_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in scenario::inventory(dir).unwrap() {
        out.insert(entry.path.clone(), fs::read(dir.join(&entry.path)).unwrap());
    }
    out
}

fn criterion_8() -> Outcome {
    let run = |workers: usize| {
        let dir = tempfile::tempdir().unwrap();
        let mut config = preset_config();
        config.run.replications = 3;
        config.run.workers = workers;
        config.run.output_dir = dir.path().to_path_buf();
        let manifest = scenario::run_scenario(&config).unwrap().manifest;
        let files = data_files(dir.path());
        let on_disk: rrds_core::scenario::RunManifest =
            serde_json::from_slice(&fs::read(dir.path().join(MANIFEST_FILE)).unwrap()).unwrap();
        (files, manifest, on_disk)
    };
    let (a, ma, da) = run(1);
    let (b, mb, _) = run(1);
    let (c, mc, _) = run(8);
    let digests_ok = da.files.iter().all(|f| rrds_core::scenario::sha256_hex(&a[&f.path]) == f.sha256);
    let same = a == b && a == c && ma.files == mb.files && ma.files == mc.files;
    outcome(
        same && digests_ok && !a.is_empty(),
        format!(
            "{} data files byte-identical across two runs and workers 1/8: {same}; manifest digests match: {digests_ok}",
            a.len()
        ),
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(u32, Outcome)> = Vec::new();
    let (run, elapsed, _dir) = full_run();
    let config = preset_config();
    results.push((1, criterion_1(&run, elapsed)));
    results.push((2, criterion_2(&run)));
    results.push((3, criterion_3(&run, &config)));
    drop(run);
    results.push((4, criterion_4()));
    results.push((5, criterion_5()));
    results.push((6, criterion_6()));
    results.push((7, criterion_7()));
    results.push((8, criterion_8()));

    let mut failed = 0;
    for (n, o) in &results {
        println!("criterion {n}: {} {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += !o.pass as usize;
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
