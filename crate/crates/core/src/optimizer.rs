//! Combination search: exhaustive pairs and a set-valued genetic algorithm.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::Write;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayes::Member;
use crate::error::{Error, Result};
use crate::eval::{evaluate_combo, Backend, CvPlan, EvalConfig, EvaluationReport, WindowedDataset};
use crate::features::FeatureKind;
use crate::stochastic::derive_seed;

pub const MAX_COMBO_SIZE: usize = 8;

/// A sorted set of 1 to 8 distinct members.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<Member>", into = "Vec<Member>")]
pub struct Combo(Vec<Member>);

impl Combo {
    pub fn new(mut members: Vec<Member>) -> Result<Self> {
        if members.is_empty() || members.len() > MAX_COMBO_SIZE {
            return Err(Error::Combo(format!(
                "combination size must be 1..={MAX_COMBO_SIZE}, got {}",
                members.len()
            )));
        }
        members.sort();
        if let Some(w) = members.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Combo(format!("duplicate member {}", w[0])));
        }
        Ok(Self(members))
    }

    pub fn members(&self) -> &[Member] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, m: &Member) -> bool {
        self.0.binary_search(m).is_ok()
    }
}

impl TryFrom<Vec<Member>> for Combo {
    type Error = Error;

    fn try_from(v: Vec<Member>) -> Result<Self> {
        Combo::new(v)
    }
}

impl From<Combo> for Vec<Member> {
    fn from(c: Combo) -> Self {
        c.0
    }
}

impl fmt::Display for Combo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, m) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("+")?;
            }
            write!(f, "{m}")?;
        }
        Ok(())
    }
}

/// Feature-major cross product.
pub fn candidate_members(features: &[FeatureKind], channels: &[usize]) -> Vec<Member> {
    features
        .iter()
        .flat_map(|&f| channels.iter().map(move |&c| Member::new(f, c)))
        .collect()
}

fn rank(results: &mut [(Combo, EvaluationReport)]) {
    results.sort_by(|a, b| {
        b.1.j_statistic
            .total_cmp(&a.1.j_statistic)
            .then_with(|| a.0.cmp(&b.0))
    });
}

/// Every two-member combination, best J first. Ties are ordered by member key.
pub fn exhaustive_pairs(
    data: &WindowedDataset,
    features: &[FeatureKind],
    channels: &[usize],
    plan: &CvPlan,
    cfg: &EvalConfig,
) -> Result<Vec<(Combo, EvaluationReport)>> {
    let members = candidate_members(features, channels);
    if members.len() < 2 {
        return Err(Error::Combo(format!(
            "pairs need at least 2 members, got {}",
            members.len()
        )));
    }
    let pairs: Vec<Combo> = (0..members.len())
        .flat_map(|i| (i + 1..members.len()).map(move |j| (i, j)))
        .map(|(i, j)| Combo::new(vec![members[i], members[j]]))
        .collect::<Result<_>>()?;
    let mut results = pairs
        .into_par_iter()
        .map(|c| evaluate_combo(data, c.members(), plan, cfg).map(|r| (c, r)))
        .collect::<Result<Vec<_>>>()?;
    rank(&mut results);
    Ok(results)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    pub mutation_rate: f64,
    pub elitism: usize,
    pub combo_size: usize,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 24,
            generations: 30,
            mutation_rate: 0.2,
            elitism: 2,
            combo_size: 3,
            seed: 0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population == 0 {
            return Err(Error::Config("population must be at least 1".into()));
        }
        if self.elitism > self.population {
            return Err(Error::Config(format!(
                "elitism {} exceeds population {}",
                self.elitism, self.population
            )));
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return Err(Error::Config(format!(
                "mutation rate must lie in [0, 1], got {}",
                self.mutation_rate
            )));
        }
        if self.combo_size == 0 || self.combo_size > MAX_COMBO_SIZE {
            return Err(Error::Combo(format!(
                "combo size must be 1..={MAX_COMBO_SIZE}, got {}",
                self.combo_size
            )));
        }
        Ok(())
    }
}

/// One line of the search log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRecord {
    pub members: Vec<String>,
    /// Fitness: mean per-fold J.
    #[serde(rename = "J")]
    pub j: f64,
    pub aggregate_j: f64,
    pub generation: usize,
}

#[derive(Debug, Clone)]
pub struct GaOutcome {
    pub best: Combo,
    /// Exact-backend report of the winner.
    pub report: EvaluationReport,
    /// The winner re-scored with the stochastic backend.
    pub stochastic_report: EvaluationReport,
    /// Best fitness seen after each generation, starting with the initial one.
    pub history: Vec<f64>,
    pub log: Vec<SearchRecord>,
}

struct Search<'a> {
    data: &'a WindowedDataset,
    plan: &'a CvPlan,
    cfg: EvalConfig,
    memo: HashMap<Combo, EvaluationReport>,
    log: Vec<SearchRecord>,
}

impl Search<'_> {
    /// Evaluates the not-yet-seen combos of `population` concurrently and
    /// logs them in population order.
    fn evaluate(&mut self, population: &[Combo], generation: usize) -> Result<Vec<f64>> {
        let mut fresh: Vec<&Combo> = Vec::new();
        let mut seen = BTreeSet::new();
        for c in population {
            if !self.memo.contains_key(c) && seen.insert(c) {
                fresh.push(c);
            }
        }
        let reports = fresh
            .par_iter()
            .map(|c| evaluate_combo(self.data, c.members(), self.plan, &self.cfg))
            .collect::<Result<Vec<_>>>()?;
        for (c, r) in fresh.into_iter().zip(reports) {
            self.log.push(SearchRecord {
                members: c.members().iter().map(Member::to_string).collect(),
                j: r.fitness(),
                aggregate_j: r.j_statistic,
                generation,
            });
            self.memo.insert(c.clone(), r);
        }
        Ok(population.iter().map(|c| self.memo[c].fitness()).collect())
    }
}

fn pad(base: &[Member], size: usize, pool: &[Member], rng: &mut ChaCha8Rng) -> Result<Combo> {
    let mut set: Vec<Member> = base.to_vec();
    let unused: Vec<Member> = pool.iter().filter(|m| !set.contains(m)).copied().collect();
    set.extend(unused.choose_multiple(rng, size.saturating_sub(set.len())));
    Combo::new(set)
}

fn tournament<'p>(pop: &'p [Combo], fit: &[f64], rng: &mut ChaCha8Rng) -> &'p Combo {
    let mut best = rng.random_range(0..pop.len());
    for _ in 1..3 {
        let i = rng.random_range(0..pop.len());
        if fit[i] > fit[best] || (fit[i] == fit[best] && i < best) {
            best = i;
        }
    }
    &pop[best]
}

/// Keeps common members, takes each differing member with probability 1/2,
/// then trims or refills to `size`.
fn crossover(
    a: &Combo,
    b: &Combo,
    size: usize,
    pool: &[Member],
    rng: &mut ChaCha8Rng,
) -> Result<Combo> {
    let mut child: Vec<Member> = a
        .members()
        .iter()
        .filter(|m| b.contains(m))
        .copied()
        .collect();
    let mut rest: Vec<Member> = a
        .members()
        .iter()
        .chain(b.members())
        .filter(|m| !child.contains(m))
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    rest.shuffle(rng);
    let mut taken = Vec::new();
    let mut leftover = Vec::new();
    for m in rest {
        if rng.random_bool(0.5) {
            taken.push(m);
        } else {
            leftover.push(m);
        }
    }
    taken.extend(leftover);
    child.extend(taken.into_iter().take(size.saturating_sub(child.len())));
    pad(&child, size, pool, rng)
}

fn mutate(c: &Combo, pool: &[Member], rng: &mut ChaCha8Rng) -> Result<Combo> {
    let unused: Vec<Member> = pool.iter().filter(|m| !c.contains(m)).copied().collect();
    let Some(&incoming) = unused.choose(rng) else {
        return Ok(c.clone());
    };
    let mut members = c.members().to_vec();
    let out = rng.random_range(0..members.len());
    members[out] = incoming;
    Combo::new(members)
}

/// Genetic search for the best `ga.combo_size`-member combination, starting
/// from `seed_combo`.
pub fn ga_search(
    data: &WindowedDataset,
    features: &[FeatureKind],
    channels: &[usize],
    plan: &CvPlan,
    cfg: &EvalConfig,
    ga: &GaConfig,
    seed_combo: &Combo,
) -> Result<GaOutcome> {
    ga.validate()?;
    let pool = candidate_members(features, channels);
    if ga.combo_size > pool.len() {
        return Err(Error::Combo(format!(
            "combo size {} exceeds the {} available members",
            ga.combo_size,
            pool.len()
        )));
    }
    if ga.combo_size <= seed_combo.len() {
        return Err(Error::Combo(format!(
            "combo size {} must exceed the seed combination size {}",
            ga.combo_size,
            seed_combo.len()
        )));
    }
    if let Some(m) = seed_combo.members().iter().find(|m| !pool.contains(m)) {
        return Err(Error::Combo(format!("seed member {m} is not a candidate")));
    }

    let mut exact = cfg.clone();
    exact.backend = Backend::Exact;
    let mut search = Search {
        data,
        plan,
        cfg: exact,
        memo: HashMap::new(),
        log: Vec::new(),
    };
    let rng_for = |generation: usize, slot: usize| {
        let id = (generation * ga.population + slot) as u64;
        ChaCha8Rng::seed_from_u64(derive_seed(ga.seed, id))
    };

    let mut population = (0..ga.population)
        .map(|i| {
            pad(
                seed_combo.members(),
                ga.combo_size,
                &pool,
                &mut rng_for(0, i),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mut fitness = search.evaluate(&population, 0)?;
    let mut best = (population[0].clone(), fitness[0]);
    let mut history = Vec::with_capacity(ga.generations + 1);

    for generation in 0..=ga.generations {
        if generation > 0 {
            let mut order: Vec<usize> = (0..population.len()).collect();
            order.sort_by(|&i, &j| {
                fitness[j]
                    .total_cmp(&fitness[i])
                    .then_with(|| population[i].cmp(&population[j]))
            });
            let mut next: Vec<Combo> = order[..ga.elitism]
                .iter()
                .map(|&i| population[i].clone())
                .collect();
            for slot in ga.elitism..ga.population {
                let mut rng = rng_for(generation, slot);
                let a = tournament(&population, &fitness, &mut rng);
                let b = tournament(&population, &fitness, &mut rng);
                let mut child = crossover(a, b, ga.combo_size, &pool, &mut rng)?;
                if rng.random_bool(ga.mutation_rate) {
                    child = mutate(&child, &pool, &mut rng)?;
                }
                next.push(child);
            }
            population = next;
            fitness = search.evaluate(&population, generation)?;
        }
        for (c, &f) in population.iter().zip(&fitness) {
            if f > best.1 || (f == best.1 && *c < best.0) {
                best = (c.clone(), f);
            }
        }
        log::debug!("generation {generation}: best {} = {:.4}", best.0, best.1);
        history.push(best.1);
    }

    let report = search.memo[&best.0].clone();
    let mut stochastic = cfg.clone();
    stochastic.backend = Backend::Stochastic;
    let stochastic_report = evaluate_combo(data, best.0.members(), plan, &stochastic)?;
    Ok(GaOutcome {
        best: best.0,
        report,
        stochastic_report,
        history,
        log: search.log,
    })
}

/// Writes one JSON object per line.
pub fn write_search_log(path: &Path, records: &[SearchRecord]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
