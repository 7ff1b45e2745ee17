//! Seed selection, nomination and the RDS / RRDS recruitment engines.
//!
//! Recruitment is two-staged: every surveyed respondent discloses a
//! [`NominationList`] drawn from their graph neighborhood, then up to
//! `max_recruits_per_respondent` people from that list are brought into the
//! next wave, either by the respondent's homophilic preference ([`rds_select`])
//! or by the researcher's uniform draw ([`rrds_select`]). Nobody is surveyed
//! twice.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Gender, Individual, NodeId, SocialGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Rds,
    Rrds,
}

impl Method {
    pub const BOTH: [Method; 2] = [Method::Rds, Method::Rrds];

    /// Lowercase tag used in file names and config keys.
    pub fn tag(self) -> &'static str {
        match self {
            Method::Rds => "rds",
            Method::Rrds => "rrds",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Rds => "RDS",
            Method::Rrds => "RRDS",
        })
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rds" => Ok(Method::Rds),
            "rrds" => Ok(Method::Rrds),
            other => Err(format!("unknown recruitment method `{other}`")),
        }
    }
}

/// How completely a respondent discloses their neighborhood.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum NominationMode {
    #[default]
    Exhaustive,
    /// Each tie is independently forgotten with `dropout_prob`.
    ApproxExhaustive { dropout_prob: f64 },
    /// Each tie is independently disclosed with `inclusion_prob`.
    Selective { inclusion_prob: f64 },
}

impl NominationMode {
    fn validate(&self) -> Result<()> {
        let (field, p) = match *self {
            NominationMode::Exhaustive => return Ok(()),
            NominationMode::ApproxExhaustive { dropout_prob } => ("nomination.dropout_prob", dropout_prob),
            NominationMode::Selective { inclusion_prob } => ("nomination.inclusion_prob", inclusion_prob),
        };
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::config(field, format!("must lie in [0, 1], got {p}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NominationList {
    pub respondent: NodeId,
    pub contacts: Vec<NodeId>,
    pub mode: NominationMode,
}

/// Who filters out contacts that are already surveyed or already claimed
/// in the current wave.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Screening {
    /// The researcher screens the list before selection; no referral is wasted.
    Screened,
    /// The respondent refers from the raw list; referrals to people who are
    /// already surveyed or claimed are lost.
    Unscreened,
}

/// Source of the degree recorded for each surveyed individual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DegreeSource {
    /// True network degree (simulation mode).
    Graph,
    /// Length of the respondent's nomination list.
    Nomination,
}

/// Behaviour when fewer individuals pass the seed filters than requested.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeedFill {
    #[default]
    Strict,
    /// Take every qualifying individual, then the closest misses: matching
    /// gender first, then smallest age excess, then lowest id.
    Nearest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedSpec {
    pub count: usize,
    #[serde(default)]
    pub gender: Option<Gender>,
    /// Seeds must be strictly younger than this.
    #[serde(default)]
    pub max_age: Option<f64>,
    #[serde(default)]
    pub fill: SeedFill,
}

impl SeedSpec {
    pub fn any(count: usize) -> Self {
        SeedSpec {
            count,
            gender: None,
            max_age: None,
            fill: SeedFill::Strict,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.count < 1 {
            return Err(Error::config("seeds.count", "must be at least 1"));
        }
        if let Some(a) = self.max_age {
            if !a.is_finite() {
                return Err(Error::config("seeds.max_age", "must be finite"));
            }
        }
        Ok(())
    }

    fn qualifies(&self, ind: &Individual) -> bool {
        self.gender.is_none_or(|g| ind.gender == g) && self.max_age.is_none_or(|a| ind.age < a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecruitConfig {
    pub max_recruits_per_respondent: usize,
    pub max_waves: usize,
    /// Per-slot probability of the homophilic pick (RDS only).
    pub selection_alpha: f64,
    #[serde(default)]
    pub nomination: NominationMode,
    pub screening: Screening,
    pub degree_source: DegreeSource,
}

impl RecruitConfig {
    /// Respondent-driven arm: homophilic referrals from an unscreened list.
    pub fn rds() -> Self {
        RecruitConfig {
            max_recruits_per_respondent: 3,
            max_waves: 12,
            selection_alpha: 0.9,
            nomination: NominationMode::Exhaustive,
            screening: Screening::Unscreened,
            degree_source: DegreeSource::Graph,
        }
    }

    /// Researcher-randomized arm: uniform draw from the screened list.
    pub fn rrds() -> Self {
        RecruitConfig {
            screening: Screening::Screened,
            ..Self::rds()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_recruits_per_respondent < 1 {
            return Err(Error::config("max_recruits_per_respondent", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.selection_alpha) {
            return Err(Error::config(
                "selection_alpha",
                format!("must lie in [0, 1], got {}", self.selection_alpha),
            ));
        }
        self.nomination.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecruitEvent {
    pub wave: u32,
    pub recruiter: NodeId,
    pub recruit: NodeId,
}

/// Who recruited whom, in which wave.
#[derive(Debug, Clone, PartialEq)]
pub struct RecruitmentForest {
    pub method: Method,
    pub seeds: Vec<NodeId>,
    pub events: Vec<RecruitEvent>,
}

impl RecruitmentForest {
    /// Seeds first, then recruits in event order.
    pub fn surveyed(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.seeds.iter().copied().chain(self.events.iter().map(|e| e.recruit))
    }

    pub fn len(&self) -> usize {
        self.seeds.len() + self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
    }

    /// Last wave with at least one recruit (0 when only seeds).
    pub fn depth(&self) -> u32 {
        self.events.iter().map(|e| e.wave).max().unwrap_or(0)
    }

    /// `(id, wave)` for every surveyed node; seeds are wave 0.
    pub fn waves(&self) -> impl Iterator<Item = (NodeId, u32)> + '_ {
        self.seeds
            .iter()
            .map(|&s| (s, 0))
            .chain(self.events.iter().map(|e| (e.recruit, e.wave)))
    }

    /// Children of every recruiter, in recruitment order.
    pub fn children(&self) -> BTreeMap<NodeId, Vec<NodeId>> {
        let mut out: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        for e in &self.events {
            out.entry(e.recruiter).or_default().push(e.recruit);
        }
        out
    }

    /// Checks the structural invariants: unique recruits, seeds never
    /// recruited, recruiters surveyed one wave earlier.
    pub fn validate(&self) -> Result<()> {
        let mut wave_of: BTreeMap<NodeId, u32> = BTreeMap::new();
        for &s in &self.seeds {
            if wave_of.insert(s, 0).is_some() {
                return Err(Error::Input(format!("seed {s} listed twice")));
            }
        }
        for e in &self.events {
            if e.wave < 1 {
                return Err(Error::Input(format!("recruit {} has wave {} < 1", e.recruit, e.wave)));
            }
            match wave_of.get(&e.recruiter) {
                Some(&w) if w + 1 == e.wave => {}
                Some(&w) => {
                    return Err(Error::Input(format!(
                        "recruiter {} (wave {w}) cannot recruit {} in wave {}",
                        e.recruiter, e.recruit, e.wave
                    )))
                }
                None => {
                    return Err(Error::Input(format!(
                        "recruiter {} of {} was never surveyed before wave {}",
                        e.recruiter, e.recruit, e.wave
                    )))
                }
            }
            if wave_of.insert(e.recruit, e.wave).is_some() {
                return Err(Error::Input(format!("{} is recruited more than once", e.recruit)));
            }
        }
        Ok(())
    }

    /// [`validate`](Self::validate) plus: every forest edge is a graph edge.
    pub fn validate_against(&self, graph: &SocialGraph) -> Result<()> {
        self.validate()?;
        for id in self.surveyed() {
            if !graph.contains(id) {
                return Err(Error::Input(format!("forest node {id} is not in the graph")));
            }
        }
        for e in &self.events {
            if !graph.has_edge(e.recruiter, e.recruit) {
                return Err(Error::Input(format!(
                    "forest edge {} -> {} is not a graph edge",
                    e.recruiter, e.recruit
                )));
            }
        }
        Ok(())
    }
}

/// Result of one recruitment run.
#[derive(Debug, Clone, PartialEq)]
pub struct Recruitment {
    pub forest: RecruitmentForest,
    /// Degree recorded at survey time for every surveyed individual.
    pub reported_degree: BTreeMap<NodeId, usize>,
    /// Referrals that named someone already surveyed or already claimed.
    pub lost_referrals: usize,
}

pub fn select_seeds<R: Rng + ?Sized>(graph: &SocialGraph, spec: &SeedSpec, rng: &mut R) -> Result<Vec<NodeId>> {
    spec.validate()?;
    let qualifying: Vec<NodeId> = graph
        .individuals()
        .iter()
        .filter(|ind| spec.qualifies(ind))
        .map(|ind| ind.id)
        .collect();
    if qualifying.len() >= spec.count {
        return Ok(index::sample(rng, qualifying.len(), spec.count)
            .into_iter()
            .map(|i| qualifying[i])
            .collect());
    }
    match spec.fill {
        SeedFill::Strict => Err(Error::InsufficientSeeds {
            requested: spec.count,
            available: qualifying.len(),
        }),
        SeedFill::Nearest => {
            if graph.len() < spec.count {
                return Err(Error::InsufficientSeeds {
                    requested: spec.count,
                    available: graph.len(),
                });
            }
            let mut misses: Vec<(bool, f64, NodeId)> = graph
                .individuals()
                .iter()
                .filter(|ind| !spec.qualifies(ind))
                .map(|ind| {
                    let wrong_gender = spec.gender.is_some_and(|g| ind.gender != g);
                    let excess = spec.max_age.map_or(0.0, |a| (ind.age - a).max(0.0));
                    (wrong_gender, excess, ind.id)
                })
                .collect();
            misses.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
            let needed = spec.count - qualifying.len();
            let mut seeds = qualifying;
            seeds.extend(misses.into_iter().take(needed).map(|m| m.2));
            Ok(seeds)
        }
    }
}

/// Elicits a contact list from the respondent's neighborhood, in random order.
pub fn nominate<R: Rng + ?Sized>(
    respondent: NodeId,
    graph: &SocialGraph,
    mode: NominationMode,
    rng: &mut R,
) -> Result<NominationList> {
    if !graph.contains(respondent) {
        return Err(Error::Input(format!("respondent {respondent} is not in the graph")));
    }
    let neighbors = graph.neighbors(respondent);
    let keep = match mode {
        NominationMode::Exhaustive | NominationMode::ApproxExhaustive { dropout_prob: 0.0 } => None,
        NominationMode::ApproxExhaustive { dropout_prob } => Some(1.0 - dropout_prob),
        NominationMode::Selective { inclusion_prob } => Some(inclusion_prob),
    };
    let mut contacts: Vec<NodeId> = match keep {
        None => neighbors.to_vec(),
        Some(p) => neighbors.iter().copied().filter(|_| rng.random::<f64>() < p).collect(),
    };
    contacts.shuffle(rng);
    Ok(NominationList {
        respondent,
        contacts,
        mode,
    })
}

/// Preference order of a respondent over candidates: same gender first,
/// then closest age, then lowest id.
pub fn preference_order(recruiter: &Individual, a: &Individual, b: &Individual) -> Ordering {
    let key = |x: &Individual| x.gender != recruiter.gender;
    key(a)
        .cmp(&key(b))
        .then_with(|| (a.age - recruiter.age).abs().total_cmp(&(b.age - recruiter.age).abs()))
        .then_with(|| a.id.cmp(&b.id))
}

/// Respondent-driven selection of up to `max_k` recruits.
///
/// Each slot independently takes, with probability `alpha`, the most
/// preferred remaining candidate ([`preference_order`]); otherwise a uniformly
/// random remaining candidate.
pub fn rds_select<R: Rng + ?Sized>(
    recruiter: &Individual,
    eligible: &[Individual],
    alpha: f64,
    max_k: usize,
    rng: &mut R,
) -> Vec<NodeId> {
    let mut remaining: Vec<&Individual> = eligible.iter().collect();
    remaining.sort_by(|a, b| preference_order(recruiter, a, b));
    let k = max_k.min(remaining.len());
    let mut picked = Vec::with_capacity(k);
    for _ in 0..k {
        let slot = if rng.random::<f64>() < alpha {
            0
        } else {
            rng.random_range(0..remaining.len())
        };
        picked.push(remaining.remove(slot).id);
    }
    picked
}

/// Uniform random subset of size `min(max_k, |eligible|)`.
pub fn rrds_select<R: Rng + ?Sized>(eligible: &[NodeId], max_k: usize, rng: &mut R) -> Vec<NodeId> {
    let k = max_k.min(eligible.len());
    index::sample(rng, eligible.len(), k)
        .into_iter()
        .map(|i| eligible[i])
        .collect()
}

fn survey<R: Rng + ?Sized>(
    graph: &SocialGraph,
    config: &RecruitConfig,
    id: NodeId,
    lists: &mut [Vec<NodeId>],
    reported_degree: &mut BTreeMap<NodeId, usize>,
    rng: &mut R,
) -> Result<()> {
    let list = nominate(id, graph, config.nomination, rng)?;
    let degree = match config.degree_source {
        DegreeSource::Graph => graph.degree(id),
        DegreeSource::Nomination => list.contacts.len(),
    };
    reported_degree.insert(id, degree);
    lists[id as usize] = list.contacts;
    Ok(())
}

/// Runs the wave loop until `max_waves` waves are done or a wave brings in
/// nobody new.
///
/// Everyone surveyed (seeds included, as wave 0) discloses a nomination list
/// at survey time. Within a wave respondents act in a freshly shuffled order
/// and the first to claim a person becomes their recruiter.
pub fn run_recruitment<R: Rng + ?Sized>(
    graph: &SocialGraph,
    seeds: &[NodeId],
    config: &RecruitConfig,
    method: Method,
    rng: &mut R,
) -> Result<Recruitment> {
    config.validate()?;
    if seeds.is_empty() {
        return Err(Error::Input("at least one seed is required".into()));
    }
    let n = graph.len();
    let mut surveyed = vec![false; n];
    for &s in seeds {
        if !graph.contains(s) {
            return Err(Error::Input(format!("seed {s} is not in the graph")));
        }
        if std::mem::replace(&mut surveyed[s as usize], true) {
            return Err(Error::Input(format!("seed {s} listed twice")));
        }
    }

    let mut lists: Vec<Vec<NodeId>> = vec![Vec::new(); n];
    let mut reported_degree = BTreeMap::new();
    for &s in seeds {
        survey(graph, config, s, &mut lists, &mut reported_degree, rng)?;
    }

    let mut events = Vec::new();
    let mut lost_referrals = 0;
    let mut claimed = vec![false; n];
    let mut current = seeds.to_vec();
    let mut candidates: Vec<NodeId> = Vec::new();
    let mut people: Vec<Individual> = Vec::new();

    for wave in 1..=config.max_waves as u32 {
        current.shuffle(rng);
        let mut next = Vec::new();
        for &respondent in &current {
            candidates.clear();
            let list = &lists[respondent as usize];
            match config.screening {
                Screening::Screened => candidates.extend(
                    list.iter()
                        .copied()
                        .filter(|&c| !surveyed[c as usize] && !claimed[c as usize]),
                ),
                Screening::Unscreened => candidates.extend_from_slice(list),
            }
            let picks = match method {
                Method::Rds => {
                    people.clear();
                    people.extend(candidates.iter().map(|&c| graph.individuals()[c as usize]));
                    rds_select(
                        &graph.individuals()[respondent as usize],
                        &people,
                        config.selection_alpha,
                        config.max_recruits_per_respondent,
                        rng,
                    )
                }
                Method::Rrds => rrds_select(&candidates, config.max_recruits_per_respondent, rng),
            };
            for recruit in picks {
                let r = recruit as usize;
                if surveyed[r] || claimed[r] {
                    lost_referrals += 1;
                    continue;
                }
                claimed[r] = true;
                next.push(recruit);
                events.push(RecruitEvent {
                    wave,
                    recruiter: respondent,
                    recruit,
                });
            }
        }
        if next.is_empty() {
            break;
        }
        for &id in &next {
            claimed[id as usize] = false;
            surveyed[id as usize] = true;
            survey(graph, config, id, &mut lists, &mut reported_degree, rng)?;
        }
        current = next;
    }

    Ok(Recruitment {
        forest: RecruitmentForest {
            method,
            seeds: seeds.to_vec(),
            events,
        },
        reported_degree,
        lost_referrals,
    })
}
