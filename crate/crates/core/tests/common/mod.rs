#![allow(dead_code)]

use std::collections::BTreeMap;

use rrds_core::estimators::{SampleRecord, SurveyedSample};
use rrds_core::recruitment::{Method, RecruitEvent, RecruitmentForest};
use rrds_core::NodeId;

/// A small forest with one attribute `x` per node.
pub struct TinyForest {
    pub seeds: Vec<NodeId>,
    /// (recruiter, recruit, wave)
    pub edges: Vec<(NodeId, NodeId, u32)>,
    pub degree: Vec<usize>,
    pub x: Vec<f64>,
}

impl TinyForest {
    /// seeds 0 and 1; 0 -> {2, 3}; 1 -> {4}; 2 -> {5}
    pub fn six_nodes() -> Self {
        TinyForest {
            seeds: vec![0, 1],
            edges: vec![(0, 2, 1), (0, 3, 1), (1, 4, 1), (2, 5, 2)],
            degree: vec![1, 2, 3, 1, 2, 4],
            x: vec![1.0, 0.0, 1.0, 0.0, 1.0, 1.0],
        }
    }

    /// seeds A=0 (children B1=2, B2=3) and C=1 (no children)
    pub fn two_trees() -> Self {
        TinyForest {
            seeds: vec![0, 1],
            edges: vec![(0, 2, 1), (0, 3, 1)],
            degree: vec![2, 1, 3, 1],
            x: vec![10.0, 20.0, 40.0, 70.0],
        }
    }

    pub fn forest(&self) -> RecruitmentForest {
        RecruitmentForest {
            method: Method::Rrds,
            seeds: self.seeds.clone(),
            events: self
                .edges
                .iter()
                .map(|&(recruiter, recruit, wave)| RecruitEvent { wave, recruiter, recruit })
                .collect(),
        }
    }

    pub fn sample(&self) -> SurveyedSample {
        let records = (0..self.x.len())
            .map(|i| SampleRecord {
                id: i as NodeId,
                degree: self.degree[i],
                values: vec![self.x[i]],
            })
            .collect();
        SurveyedSample::new(vec!["x".into()], records).unwrap()
    }

    fn children(&self, node: NodeId) -> Vec<NodeId> {
        self.edges.iter().filter(|e| e.0 == node).map(|e| e.1).collect()
    }

    /// Every resampled multiset reachable from `node`, with its probability.
    fn subtree(&self, node: NodeId) -> Vec<(f64, Vec<usize>)> {
        let mut base = vec![0usize; self.x.len()];
        base[node as usize] = 1;
        let kids = self.children(node);
        self.fill_slots(vec![(1.0, base)], &kids, kids.len())
    }

    /// Draws `slots` times with replacement from `pool`, expanding each draw
    /// into its own resampled subtree.
    fn fill_slots(&self, mut acc: Vec<(f64, Vec<usize>)>, pool: &[NodeId], slots: usize) -> Vec<(f64, Vec<usize>)> {
        let expansions: Vec<Vec<(f64, Vec<usize>)>> = pool.iter().map(|&c| self.subtree(c)).collect();
        let k = pool.len() as f64;
        for _ in 0..slots {
            let mut next = Vec::new();
            for (p, counts) in &acc {
                for sub in &expansions {
                    for (q, extra) in sub {
                        let merged: Vec<usize> = counts.iter().zip(extra).map(|(a, b)| a + b).collect();
                        next.push((p * q / k, merged));
                    }
                }
            }
            acc = next;
        }
        acc
    }

    /// Exact distribution of the bootstrap estimate, keyed by `value_key`.
    pub fn bootstrap_distribution(&self) -> BTreeMap<i64, f64> {
        let empty = vec![0usize; self.x.len()];
        let outcomes = self.fill_slots(vec![(1.0, empty)], &self.seeds, self.seeds.len());
        let mut dist = BTreeMap::new();
        for (p, counts) in outcomes {
            let (mut num, mut den) = (0.0, 0.0);
            for (i, &c) in counts.iter().enumerate() {
                num += c as f64 * self.x[i] / self.degree[i] as f64;
                den += c as f64 / self.degree[i] as f64;
            }
            *dist.entry(value_key(num / den)).or_insert(0.0) += p;
        }
        dist
    }
}

pub fn value_key(v: f64) -> i64 {
    (v * 1e9).round() as i64
}

pub fn empirical(values: &[f64]) -> BTreeMap<i64, f64> {
    let mut dist = BTreeMap::new();
    for &v in values {
        *dist.entry(value_key(v)).or_insert(0.0) += 1.0 / values.len() as f64;
    }
    dist
}

pub fn total_variation(a: &BTreeMap<i64, f64>, b: &BTreeMap<i64, f64>) -> f64 {
    let keys: std::collections::BTreeSet<_> = a.keys().chain(b.keys()).collect();
    0.5 * keys
        .into_iter()
        .map(|k| (a.get(k).unwrap_or(&0.0) - b.get(k).unwrap_or(&0.0)).abs())
        .sum::<f64>()
}

/// Chi-square goodness-of-fit p-value of `counts` against equal cell probabilities.
pub fn uniform_chi_square_p(counts: &[u64]) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let dist = ChiSquared::new((counts.len() - 1) as f64).unwrap();
    1.0 - dist.cdf(stat)
}

/// Independent rendering of the respondent's strict preference: same
/// gender, then nearest age, then lowest id.
pub fn lexicographic_top_k(recruiter: &rrds_core::Individual, pool: &[rrds_core::Individual], k: usize) -> Vec<NodeId> {
    let mut keyed: Vec<(u8, f64, NodeId)> = pool
        .iter()
        .map(|p| ((p.gender != recruiter.gender) as u8, (p.age - recruiter.age).abs(), p.id))
        .collect();
    keyed.sort_by(|a, b| a.partial_cmp(b).unwrap());
    keyed.into_iter().take(k).map(|t| t.2).collect()
}

pub fn preset_config() -> rrds_core::ScenarioConfig {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../presets/paper.toml");
    let text = std::fs::read_to_string(path).unwrap();
    rrds_core::ScenarioConfig::from_toml_str(&text, Vec::new()).unwrap()
}
