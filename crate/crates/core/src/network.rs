//! Synthetic populations and homophilous random graphs.
//!
//! A population is a vector of [`Individual`]s whose ids are their indices.
//! [`generate_edges`] places a fixed number of undirected ties, so the mean
//! degree is hit exactly; homophily only decides *which* pairs get tied.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as NormalDist};

use crate::error::{Error, Result};

pub type NodeId = u32;

/// Rejected candidate partners tolerated before switching to exact
/// categorical sampling over the whole population.
const MAX_PARTNER_REJECTIONS: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Female => "female",
            Gender::Male => "male",
        }
    }

    pub fn is_female(self) -> bool {
        self == Gender::Female
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Gender {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "female" | "F" | "f" => Ok(Gender::Female),
            "male" | "M" | "m" => Ok(Gender::Male),
            other => Err(format!("unknown gender `{other}` (expected `female` or `male`)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub id: NodeId,
    pub age: f64,
    pub gender: Gender,
}

impl Individual {
    /// Numeric value of a named attribute: `age`, or `female` (0/1 indicator).
    pub fn attribute(&self, name: &str) -> Option<f64> {
        match name {
            "age" => Some(self.age),
            "female" => Some(if self.gender.is_female() { 1.0 } else { 0.0 }),
            _ => None,
        }
    }
}

/// Attribute names understood by [`Individual::attribute`].
pub const ATTRIBUTES: [&str; 2] = ["age", "female"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PopulationSpec {
    pub n: usize,
    pub age_mean: f64,
    pub age_sd: f64,
    pub age_min: f64,
    pub age_max: f64,
    pub female_prop: f64,
    pub target_mean_degree: f64,
    /// Homophily of tie formation, 0 (uniform) to 1.
    pub homophily_alpha: f64,
    /// Age gap (years) over which the age half of similarity decays by 1/e.
    pub age_scale_tau: f64,
    /// Exponent multiplier: partner propensity is `similarity^(alpha * sharpness)`.
    pub homophily_sharpness: f64,
}

impl Default for PopulationSpec {
    fn default() -> Self {
        PopulationSpec {
            n: 10_000,
            age_mean: 41.5,
            age_sd: 10.0,
            age_min: 18.0,
            age_max: 65.0,
            female_prop: 0.70,
            target_mean_degree: 2.0,
            homophily_alpha: 0.9,
            age_scale_tau: 5.0,
            homophily_sharpness: 7.0,
        }
    }
}

impl PopulationSpec {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("age_mean", self.age_mean),
            ("age_sd", self.age_sd),
            ("age_min", self.age_min),
            ("age_max", self.age_max),
            ("female_prop", self.female_prop),
            ("target_mean_degree", self.target_mean_degree),
            ("homophily_alpha", self.homophily_alpha),
            ("age_scale_tau", self.age_scale_tau),
            ("homophily_sharpness", self.homophily_sharpness),
        ];
        for (field, v) in finite {
            if !v.is_finite() {
                return Err(Error::config(field, format!("must be finite, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.female_prop) {
            return Err(Error::config(
                "female_prop",
                format!("must lie in [0, 1], got {}", self.female_prop),
            ));
        }
        if self.age_min >= self.age_max {
            return Err(Error::config(
                "age_min",
                format!("must be below age_max ({} >= {})", self.age_min, self.age_max),
            ));
        }
        if self.age_sd < 0.0 {
            return Err(Error::config("age_sd", "must be non-negative"));
        }
        if self.truncation_mass() < 1e-9 {
            return Err(Error::config(
                "age_mean",
                "age distribution puts (almost) no mass inside [age_min, age_max]",
            ));
        }
        if self.target_mean_degree < 0.0 {
            return Err(Error::config("target_mean_degree", "must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.homophily_alpha) {
            return Err(Error::config(
                "homophily_alpha",
                format!("must lie in [0, 1], got {}", self.homophily_alpha),
            ));
        }
        if self.age_scale_tau <= 0.0 {
            return Err(Error::config("age_scale_tau", "must be positive"));
        }
        if self.homophily_sharpness < 0.0 {
            return Err(Error::config("homophily_sharpness", "must be non-negative"));
        }
        let max_edges = max_simple_edges(self.n);
        if self.target_edge_count() as u128 > max_edges {
            return Err(Error::config(
                "target_mean_degree",
                format!(
                    "{} edges requested but a simple graph on {} nodes holds at most {max_edges}",
                    self.target_edge_count(),
                    self.n
                ),
            ));
        }
        Ok(())
    }

    /// `floor(n * target_mean_degree / 2)`.
    pub fn target_edge_count(&self) -> usize {
        (self.n as f64 * self.target_mean_degree / 2.0).floor() as usize
    }

    fn truncation_mass(&self) -> f64 {
        if self.age_sd == 0.0 {
            return if (self.age_min..=self.age_max).contains(&self.age_mean) { 1.0 } else { 0.0 };
        }
        let d = NormalDist::new(self.age_mean, self.age_sd).expect("validated sd");
        d.cdf(self.age_max) - d.cdf(self.age_min)
    }
}

fn max_simple_edges(n: usize) -> u128 {
    let n = n as u128;
    n * n.saturating_sub(1) / 2
}

/// Draws `spec.n` individuals: normal ages truncated by rejection, then an
/// independent Bernoulli(female_prop) gender.
pub fn generate_population<R: Rng + ?Sized>(spec: &PopulationSpec, rng: &mut R) -> Result<Vec<Individual>> {
    spec.validate()?;
    let normal = Normal::new(spec.age_mean, spec.age_sd)
        .map_err(|e| Error::config("age_sd", e.to_string()))?;
    let population = (0..spec.n)
        .map(|i| {
            let age = loop {
                let a = normal.sample(rng);
                if a >= spec.age_min && a <= spec.age_max {
                    break a;
                }
            };
            let gender = if rng.random::<f64>() < spec.female_prop {
                Gender::Female
            } else {
                Gender::Male
            };
            Individual { id: i as NodeId, age, gender }
        })
        .collect();
    Ok(population)
}

/// Equal-weight gender match plus exponential age kernel, in [0, 1].
pub fn similarity(a: &Individual, b: &Individual, tau: f64) -> f64 {
    let gender = if a.gender == b.gender { 0.5 } else { 0.0 };
    gender + 0.5 * (-(a.age - b.age).abs() / tau).exp()
}

/// Relative weight with which an initiator picks `b` as a new partner.
pub fn tie_propensity(a: &Individual, b: &Individual, spec: &PopulationSpec) -> f64 {
    let exponent = spec.homophily_alpha * spec.homophily_sharpness;
    if exponent == 0.0 {
        return 1.0;
    }
    similarity(a, b, spec.age_scale_tau).powf(exponent)
}

/// Undirected simple graph over a population indexed by id.
#[derive(Debug, Clone, PartialEq)]
pub struct SocialGraph {
    individuals: Vec<Individual>,
    adjacency: Vec<Vec<NodeId>>,
    edge_count: usize,
}

impl SocialGraph {
    /// Builds a graph, rejecting self-loops, duplicates and unknown ids.
    /// Individuals must carry ids `0..n` in order.
    pub fn new(individuals: Vec<Individual>, edges: &[(NodeId, NodeId)]) -> Result<Self> {
        for (idx, ind) in individuals.iter().enumerate() {
            if ind.id as usize != idx {
                return Err(Error::Input(format!(
                    "individual at position {idx} has id {}; ids must be 0..n in order",
                    ind.id
                )));
            }
        }
        let n = individuals.len();
        let mut adjacency = vec![Vec::new(); n];
        let mut seen = HashSet::with_capacity(edges.len());
        for &(a, b) in edges {
            if a == b {
                return Err(Error::Input(format!("self-loop on node {a}")));
            }
            if a as usize >= n || b as usize >= n {
                return Err(Error::Input(format!("edge ({a}, {b}) references an unknown node")));
            }
            if !seen.insert(edge_key(a, b)) {
                return Err(Error::Input(format!("duplicate edge ({a}, {b})")));
            }
            adjacency[a as usize].push(b);
            adjacency[b as usize].push(a);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(SocialGraph {
            individuals,
            adjacency,
            edge_count: edges.len(),
        })
    }

    pub fn individuals(&self) -> &[Individual] {
        &self.individuals
    }

    pub fn individual(&self, id: NodeId) -> Option<&Individual> {
        self.individuals.get(id as usize)
    }

    pub fn len(&self) -> usize {
        self.individuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.individuals.is_empty()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        (id as usize) < self.individuals.len()
    }

    /// Neighbors in ascending id order.
    pub fn neighbors(&self, id: NodeId) -> &[NodeId] {
        &self.adjacency[id as usize]
    }

    pub fn degree(&self, id: NodeId) -> usize {
        self.adjacency[id as usize].len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn mean_degree(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        2.0 * self.edge_count as f64 / self.len() as f64
    }

    pub fn has_edge(&self, a: NodeId, b: NodeId) -> bool {
        self.contains(a) && self.adjacency[a as usize].binary_search(&b).is_ok()
    }

    /// Edges as `(src, dst)` with `src < dst`, sorted.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.adjacency.iter().enumerate().flat_map(|(a, list)| {
            let a = a as NodeId;
            list.iter().copied().filter(move |&b| a < b).map(move |b| (a, b))
        })
    }
}

fn edge_key(a: NodeId, b: NodeId) -> u64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    ((lo as u64) << 32) | hi as u64
}

/// Places exactly `floor(n * target_mean_degree / 2)` distinct ties.
///
/// Each tie starts from a uniformly drawn initiator, who picks a partner with
/// probability proportional to [`tie_propensity`]. Partners are found by
/// rejection against uniform candidates; after [`MAX_PARTNER_REJECTIONS`]
/// misses the draw falls back to exact categorical sampling, which leaves
/// the partner distribution unchanged. A pick that duplicates an existing tie
/// is discarded and a fresh initiator is drawn. With `homophily_alpha = 0`
/// every unordered pair is equally likely, i.e. a uniform G(n, m) graph.
pub fn generate_edges<R: Rng + ?Sized>(
    population: Vec<Individual>,
    spec: &PopulationSpec,
    rng: &mut R,
) -> Result<SocialGraph> {
    spec.validate()?;
    if population.len() != spec.n {
        return Err(Error::Input(format!(
            "population has {} individuals but spec.n = {}",
            population.len(),
            spec.n
        )));
    }
    let n = population.len();
    let target = spec.target_edge_count();
    let mut edges = Vec::with_capacity(target);
    let mut present = HashSet::with_capacity(target);
    let mut weights = Vec::new();

    while edges.len() < target {
        let i = rng.random_range(0..n);
        let j = draw_partner(&population, i, spec, rng, &mut weights);
        if present.insert(edge_key(i as NodeId, j as NodeId)) {
            edges.push((i as NodeId, j as NodeId));
        }
    }
    SocialGraph::new(population, &edges)
}

fn draw_partner<R: Rng + ?Sized>(
    population: &[Individual],
    i: usize,
    spec: &PopulationSpec,
    rng: &mut R,
    weights: &mut Vec<f64>,
) -> usize {
    let n = population.len();
    let initiator = &population[i];
    for _ in 0..MAX_PARTNER_REJECTIONS {
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        if rng.random::<f64>() < tie_propensity(initiator, &population[j], spec) {
            return j;
        }
    }
    weights.clear();
    weights.extend(population.iter().enumerate().map(|(j, other)| {
        if j == i { 0.0 } else { tie_propensity(initiator, other, spec) }
    }));
    let total: f64 = weights.iter().sum();
    if total <= 0.0 || !total.is_finite() {
        let j = rng.random_range(0..n - 1);
        return if j >= i { j + 1 } else { j };
    }
    let mut u = rng.random::<f64>() * total;
    let mut last = if i == 0 { 1 } else { 0 };
    for (j, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        last = j;
        if u < w {
            return j;
        }
        u -= w;
    }
    last
}

/// Connected component sizes, largest first.
pub fn component_report(graph: &SocialGraph) -> Vec<usize> {
    let n = graph.len();
    let mut seen = vec![false; n];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start as NodeId);
        let mut size = 0;
        while let Some(v) = stack.pop() {
            size += 1;
            for &w in graph.neighbors(v) {
                if !seen[w as usize] {
                    seen[w as usize] = true;
                    stack.push(w);
                }
            }
        }
        sizes.push(size);
    }
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    sizes
}

/// Newman's categorical assortativity coefficient for gender.
///
/// `None` when the graph has no edges or every edge end carries the same
/// gender (the coefficient is 0/0 there).
pub fn gender_assortativity(graph: &SocialGraph) -> Option<f64> {
    let m = graph.edge_count();
    if m == 0 {
        return None;
    }
    // mixing[a][b]: fraction of edge ends joining gender a to gender b
    let mut mixing = [[0.0f64; 2]; 2];
    let idx = |g: Gender| usize::from(g == Gender::Male);
    for (a, b) in graph.edges() {
        let ga = idx(graph.individuals[a as usize].gender);
        let gb = idx(graph.individuals[b as usize].gender);
        mixing[ga][gb] += 1.0;
        mixing[gb][ga] += 1.0;
    }
    let total = 2.0 * m as f64;
    let trace = (mixing[0][0] + mixing[1][1]) / total;
    let a0 = (mixing[0][0] + mixing[0][1]) / total;
    let a1 = (mixing[1][0] + mixing[1][1]) / total;
    let expected = a0 * a0 + a1 * a1;
    if (1.0 - expected).abs() < 1e-15 {
        return None;
    }
    Some((trace - expected) / (1.0 - expected))
}
