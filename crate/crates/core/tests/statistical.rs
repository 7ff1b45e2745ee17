mod common;

use common::{empirical, total_variation, uniform_chi_square_p, TinyForest};
use rand::Rng;
use rrds_core::estimators::{tree_bootstrap, weighted_percentile_ci};
use rrds_core::network::{gender_assortativity, generate_edges, generate_population, Gender, PopulationSpec};
use rrds_core::recruitment::{nominate, rds_select, rrds_select, NominationMode};
use rrds_core::rng::rng_from_seed;
use rrds_core::{Individual, NodeId, SocialGraph};

const DRAWS: usize = 100_000;

fn star(leaves: u32) -> SocialGraph {
    let people = (0..=leaves)
        .map(|id| Individual { id, age: 30.0, gender: Gender::Female })
        .collect();
    let edges: Vec<(NodeId, NodeId)> = (1..=leaves).map(|l| (0, l)).collect();
    SocialGraph::new(people, &edges).unwrap()
}

/// Asserts |observed mean - p| within 3 standard errors of a Bernoulli(p) mean.
fn assert_rate(hits: usize, trials: usize, p: f64) {
    let rate = hits as f64 / trials as f64;
    let se = (p * (1.0 - p) / trials as f64).sqrt();
    assert!((rate - p).abs() <= 3.0 * se, "rate {rate} vs {p} (3se = {})", 3.0 * se);
}

#[test]
fn selective_nomination_keeps_each_contact_with_its_probability() {
    let g = star(10);
    let mut rng = rng_from_seed(1);
    let mut kept = 0;
    for _ in 0..DRAWS {
        kept += nominate(0, &g, NominationMode::Selective { inclusion_prob: 0.5 }, &mut rng)
            .unwrap()
            .contacts
            .len();
    }
    assert_rate(kept, DRAWS * 10, 0.5);
}

#[test]
fn approximate_nomination_drops_each_contact_with_its_probability() {
    let g = star(8);
    let mut rng = rng_from_seed(2);
    let mut kept = 0;
    for _ in 0..DRAWS / 10 {
        kept += nominate(0, &g, NominationMode::ApproxExhaustive { dropout_prob: 0.2 }, &mut rng)
            .unwrap()
            .contacts
            .len();
    }
    assert_rate(kept, DRAWS / 10 * 8, 0.8);
}

#[test]
fn exhaustive_nomination_lists_every_neighbor_in_uniform_order() {
    let g = star(4);
    let mut rng = rng_from_seed(3);
    let mut first = [0u64; 4];
    for _ in 0..DRAWS {
        let list = nominate(0, &g, NominationMode::Exhaustive, &mut rng).unwrap().contacts;
        let mut sorted = list.clone();
        sorted.sort();
        assert_eq!(sorted, vec![1, 2, 3, 4]);
        first[list[0] as usize - 1] += 1;
    }
    assert!(uniform_chi_square_p(&first) > 0.01);
}

#[test]
fn rrds_inclusion_probability_is_k_over_n() {
    let eligible: Vec<NodeId> = (0..5).collect();
    let mut rng = rng_from_seed(4);
    let mut hits = [0usize; 5];
    for _ in 0..DRAWS {
        for p in rrds_select(&eligible, 3, &mut rng) {
            hits[p as usize] += 1;
        }
    }
    for h in hits {
        assert_rate(h, DRAWS, 0.6);
    }
}

fn people() -> (Individual, Vec<Individual>) {
    let recruiter = Individual { id: 50, age: 30.0, gender: Gender::Male };
    let pool = vec![
        Individual { id: 0, age: 60.0, gender: Gender::Female },
        Individual { id: 1, age: 31.0, gender: Gender::Male },
        Individual { id: 2, age: 29.0, gender: Gender::Female },
        Individual { id: 3, age: 45.0, gender: Gender::Male },
        Individual { id: 4, age: 30.0, gender: Gender::Female },
    ];
    (recruiter, pool)
}

#[test]
fn rds_with_alpha_zero_matches_rrds_inclusion() {
    let (recruiter, pool) = people();
    let mut rng = rng_from_seed(5);
    let mut hits = [0usize; 5];
    for _ in 0..DRAWS {
        for p in rds_select(&recruiter, &pool, 0.0, 2, &mut rng) {
            hits[p as usize] += 1;
        }
    }
    for h in hits {
        assert_rate(h, DRAWS, 0.4);
    }
}

#[test]
fn rds_first_pick_is_top_with_alpha_plus_share_of_the_rest() {
    // preference: 1 (male, 1y), 3 (male, 15y), 4, 2, 0
    let (recruiter, pool) = people();
    let mut rng = rng_from_seed(6);
    let alpha = 0.5;
    let top = (0..DRAWS)
        .filter(|_| rds_select(&recruiter, &pool, alpha, 1, &mut rng) == vec![1])
        .count();
    assert_rate(top, DRAWS, alpha + (1.0 - alpha) / 5.0);
    assert_eq!(rds_select(&recruiter, &pool, 1.0, 3, &mut rng), vec![1, 3, 4]);
}

#[test]
fn default_population_moments() {
    let spec = PopulationSpec::default();
    let pop = generate_population(&spec, &mut rng_from_seed(7)).unwrap();
    let n = pop.len() as f64;
    let mean_age = pop.iter().map(|p| p.age).sum::<f64>() / n;
    let female = pop.iter().filter(|p| p.gender == Gender::Female).count() as f64 / n;
    assert!((mean_age - 41.5).abs() < 0.3, "{mean_age}");
    assert!((female - 0.70).abs() < 0.015, "{female}");
    assert!(pop.iter().all(|p| (18.0..=65.0).contains(&p.age)));
}

#[test]
fn mean_degree_is_on_target() {
    for seed in 0..20 {
        let spec = PopulationSpec::default();
        let pop = generate_population(&spec, &mut rng_from_seed(seed)).unwrap();
        let g = generate_edges(pop, &spec, &mut rng_from_seed(seed + 100)).unwrap();
        assert!((1.9..=2.1).contains(&g.mean_degree()), "{}", g.mean_degree());
    }
}

#[test]
fn assortativity_rises_with_homophily() {
    let mean_r = |alpha: f64| {
        let total: f64 = (0..20)
            .map(|seed| {
                let spec = PopulationSpec { n: 2000, homophily_alpha: alpha, ..PopulationSpec::default() };
                let pop = generate_population(&spec, &mut rng_from_seed(seed)).unwrap();
                let g = generate_edges(pop, &spec, &mut rng_from_seed(seed + 100)).unwrap();
                gender_assortativity(&g).unwrap()
            })
            .sum();
        total / 20.0
    };
    let r: Vec<f64> = [0.0, 0.5, 0.9].iter().map(|&a| mean_r(a)).collect();
    assert!(r[0].abs() < 0.05, "{r:?}");
    assert!(r[0] < r[1] && r[1] < r[2], "{r:?}");
}

#[test]
fn tree_bootstrap_matches_enumeration_on_another_forest() {
    // three seeds; 2 -> {3, 4}; 4 -> {5, 6}
    let tiny = TinyForest {
        seeds: vec![0, 1, 2],
        edges: vec![(2, 3, 1), (2, 4, 1), (4, 5, 2), (4, 6, 2)],
        degree: vec![2, 5, 1, 3, 2, 1, 4],
        x: vec![30.0, 55.0, 21.0, 40.0, 19.0, 62.0, 35.0],
    };
    let oracle = tiny.bootstrap_distribution();
    let rep = tree_bootstrap(&tiny.forest(), &tiny.sample(), "x", DRAWS, 0.95, &mut rng_from_seed(8)).unwrap();
    let tv = total_variation(&oracle, &empirical(&rep.replicates));
    // 130 outcomes: sampling noise alone gives TV up to about 0.014 at this B
    assert!(tv < 0.02, "tv {tv} over {} outcomes", oracle.len());
}

#[test]
fn equal_weights_give_the_unweighted_percentile_interval() {
    let mut rng = rng_from_seed(9);
    for _ in 0..1000 {
        let n = rng.random_range(1..80);
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let level = rng.random_range(0.5..0.99);
        let w = rng.random_range(0.1..3.0);
        let (lo, hi) = weighted_percentile_ci(&values, &vec![w; n], level).unwrap();

        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        // smallest order statistic whose rank reaches the target share
        let at = |q: f64| sorted[((q * n as f64).ceil() as usize).max(1) - 1];
        assert_eq!((lo, hi), (at((1.0 - level) / 2.0), at((1.0 + level) / 2.0)), "n={n} level={level}");
    }
}
