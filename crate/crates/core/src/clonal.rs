//! Clonal selection over feature vectors.
//!
//! A feature vector is cloned in proportion to its affinity with its class
//! memory pool (`CNum = round(η · a)`), and each clone is mutated with a
//! frequency inversely proportional to that affinity (`rate = α / a`),
//! optionally after uniform crossover with another feature of the same class.
//! Clones whose affinity to the pool falls below τ are discarded.
//!
//! Affinity is the cosine similarity mapped into [0, 1]: `(1 + cos) / 2`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::nn::ClonalHook;
use crate::tensor::Tensor;

pub fn affinity(v1: &Tensor, v2: &Tensor) -> Result<f64> {
    if v1.len() != v2.len() {
        return Err(Error::dim("affinity", v1.shape(), v2.shape()));
    }
    let (n1, n2) = (v1.norm(), v2.norm());
    if n1 == 0.0 && n2 == 0.0 {
        return Err(Error::UndefinedAffinity);
    }
    let cos = if n1 == 0.0 || n2 == 0.0 {
        0.0
    } else {
        v1.dot(v2)? / (n1 * n2)
    };
    Ok(((1.0 + cos) / 2.0).clamp(0.0, 1.0))
}

/// `round(η·a)` (half up), at least 1 when `a ≥ τ`, and 0 below τ.
pub fn clone_count(a: f64, eta: f64, tau: f64) -> usize {
    if a < tau {
        return 0;
    }
    ((eta * a + 0.5).floor().max(0.0) as usize).max(1)
}

/// `min(α / a, cap)`; saturates at `cap` when `a` is zero.
pub fn mutation_rate(a: f64, alpha: f64, rate_cap: f64) -> f64 {
    if a <= 0.0 {
        return rate_cap;
    }
    (alpha / a).min(rate_cap)
}

/// Adds independent zero-mean Gaussian noise of standard deviation
/// `rate · sigma` to every component.
pub fn mutate<R: Rng + ?Sized>(v: &Tensor, rate: f64, sigma: f64, rng: &mut R) -> Tensor {
    let std = rate * sigma;
    if std == 0.0 {
        return v.clone();
    }
    let mut out = v.clone();
    for x in out.data_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *x += std * z;
    }
    out
}

/// Uniform crossover: every component comes from `v1` or `v2` with
/// probability ½.
pub fn crossover<R: Rng + ?Sized>(v1: &Tensor, v2: &Tensor, rng: &mut R) -> Result<Tensor> {
    if v1.shape() != v2.shape() {
        return Err(Error::dim("crossover", v1.shape(), v2.shape()));
    }
    let mut out = v1.clone();
    for (x, &y) in out.data_mut().iter_mut().zip(v2.data()) {
        if rng.random_bool(0.5) {
            *x = y;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Antibody {
    pub feature: Tensor,
    pub class_label: usize,
    pub affinity_score: f64,
}

/// Bounded per-class set of the best antibodies, sorted by descending
/// `affinity_score`.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryPool {
    class_label: usize,
    capacity: usize,
    members: Vec<Antibody>,
}

impl MemoryPool {
    pub fn new(class_label: usize, capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("memory capacity must be at least 1".into()));
        }
        Ok(MemoryPool {
            class_label,
            capacity,
            members: Vec::new(),
        })
    }

    pub fn class_label(&self) -> usize {
        self.class_label
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn members(&self) -> &[Antibody] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn best_affinity(&self) -> Option<f64> {
        self.members.first().map(|a| a.affinity_score)
    }

    /// Highest affinity between `feature` and any member.
    pub fn best_match(&self, feature: &Tensor) -> Result<Option<f64>> {
        let mut best: Option<f64> = None;
        for m in &self.members {
            let a = affinity(feature, &m.feature)?;
            if best.is_none_or(|b| a > b) {
                best = Some(a);
            }
        }
        Ok(best)
    }

    /// Keeps the top `capacity` of members ∪ candidates by affinity score.
    /// Existing members win ties, so one is evicted only by a strictly
    /// better candidate.
    pub fn update_memory(&mut self, candidates: impl IntoIterator<Item = Antibody>) -> Result<()> {
        let before = self.members.len();
        for c in candidates {
            if c.class_label != self.class_label {
                return Err(Error::Config(format!(
                    "antibody of class {} offered to pool of class {}",
                    c.class_label, self.class_label
                )));
            }
            if !(0.0..=1.0).contains(&c.affinity_score) {
                return Err(Error::Config(format!("affinity score {} outside [0,1]", c.affinity_score)));
            }
            self.members.push(c);
        }
        if self.members.len() == before {
            return Ok(());
        }
        // Stable sort keeps incumbents ahead of equal-scored newcomers.
        self.members
            .sort_by(|a, b| b.affinity_score.total_cmp(&a.affinity_score));
        self.members.truncate(self.capacity);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloneConfig {
    /// Cloning constant η.
    pub eta: f64,
    /// Mutation constant α.
    pub alpha: f64,
    /// Acceptance threshold τ on affinity.
    pub tau: f64,
    /// Base mutation scale σ; noise std is `rate · σ`.
    pub sigma: f64,
    pub rate_cap: f64,
    pub crossover_prob: f64,
    pub memory_capacity: usize,
    /// Mutation rate used to populate a pool from a single unmatched feature.
    pub bootstrap_rate: f64,
    pub rng_seed: u64,
}

impl Default for CloneConfig {
    fn default() -> Self {
        CloneConfig {
            eta: 5.0,
            alpha: 0.1,
            tau: 0.6,
            sigma: 0.1,
            rate_cap: 1.0,
            crossover_prob: 0.2,
            memory_capacity: 30,
            bootstrap_rate: 1.0,
            rng_seed: 1,
        }
    }
}

impl CloneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Err(Error::Config(format!("{what} = {v} is out of range")));
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return bad("eta", self.eta);
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("alpha", self.alpha);
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad("tau", self.tau);
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad("sigma", self.sigma);
        }
        if !(self.rate_cap > 0.0 && self.rate_cap.is_finite()) {
            return bad("rate_cap", self.rate_cap);
        }
        if !(0.0..=1.0).contains(&self.crossover_prob) {
            return bad("crossover_prob", self.crossover_prob);
        }
        if !(self.bootstrap_rate >= 0.0 && self.bootstrap_rate.is_finite()) {
            return bad("bootstrap_rate", self.bootstrap_rate);
        }
        if self.memory_capacity == 0 {
            return Err(Error::Config("memory_capacity must be at least 1".into()));
        }
        Ok(())
    }
}

/// A cloned feature vector and the index of the batch sample it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureClone {
    pub feature: Tensor,
    pub label: usize,
    pub parent: usize,
    /// Affinity to the class pool at acceptance time.
    pub pool_affinity: f64,
}

/// Per-class memory pools keyed by class label.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PoolSet {
    pools: BTreeMap<usize, MemoryPool>,
}

const POOL_FILE_HEADER: &str = "cnn-ais-pools 1";

impl PoolSet {
    pub fn new() -> Self {
        PoolSet::default()
    }

    pub fn get(&self, label: usize) -> Option<&MemoryPool> {
        self.pools.get(&label)
    }

    pub fn insert(&mut self, pool: MemoryPool) -> Option<MemoryPool> {
        self.pools.insert(pool.class_label, pool)
    }

    pub fn contains(&self, label: usize) -> bool {
        self.pools.contains_key(&label)
    }

    pub fn iter(&self) -> impl Iterator<Item = &MemoryPool> {
        self.pools.values()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.pools.keys().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.pools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pools.is_empty()
    }

    pub fn clear(&mut self) {
        self.pools.clear();
    }

    fn pool_mut(&mut self, label: usize) -> Result<&mut MemoryPool> {
        self.pools
            .get_mut(&label)
            .ok_or_else(|| Error::Config(format!("no memory pool for class {label}")))
    }

    /// Creates a pool for a previously unseen class from one feature vector:
    /// the vector itself plus `capacity − 1` variants mutated at
    /// `bootstrap_rate`.
    pub fn init_new_class<R: Rng + ?Sized>(
        &mut self,
        feature: &Tensor,
        label: usize,
        config: &CloneConfig,
        rng: &mut R,
    ) -> Result<&MemoryPool> {
        if self.contains(label) {
            return Err(Error::Config(format!("class {label} already has a pool")));
        }
        let mut pool = MemoryPool::new(label, config.memory_capacity)?;
        let mut members = vec![Antibody {
            feature: feature.clone(),
            class_label: label,
            affinity_score: 1.0,
        }];
        for _ in 1..config.memory_capacity {
            let variant = mutate(feature, config.bootstrap_rate, config.sigma, rng);
            let score = affinity(&variant, feature)?;
            members.push(Antibody {
                feature: variant,
                class_label: label,
                affinity_score: score,
            });
        }
        pool.update_memory(members)?;
        self.pools.insert(label, pool);
        Ok(&self.pools[&label])
    }

    /// Text serialization: a header line, then per class (ascending label)
    /// `class <label> <count> <capacity>` followed by one line per antibody
    /// holding its affinity score and feature components.
    pub fn to_text(&self) -> String {
        let dim = self
            .iter()
            .flat_map(|p| p.members.first())
            .map(|a| a.feature.len())
            .next()
            .unwrap_or(0);
        let mut s = format!("{POOL_FILE_HEADER}\nclasses {} dim {dim}\n", self.len());
        for pool in self.iter() {
            let _ = writeln!(s, "class {} {} {}", pool.class_label, pool.len(), pool.capacity);
            for ab in &pool.members {
                let _ = write!(s, "{:?}", ab.affinity_score);
                for v in ab.feature.data() {
                    let _ = write!(s, " {v:?}");
                }
                s.push('\n');
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let fmt = |msg: String| Error::Format(format!("pool file: {msg}"));
        let mut lines = text.lines().enumerate();
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| fmt(format!("unexpected end of file, expected {what}")))
        };
        let (_, header) = next("header")?;
        if header.trim() != POOL_FILE_HEADER {
            return Err(fmt(format!("unsupported header {header:?}")));
        }
        let (ln, counts) = next("class count")?;
        let parts: Vec<&str> = counts.split_whitespace().collect();
        let (classes, dim) = match parts.as_slice() {
            ["classes", c, "dim", d] => (
                c.parse::<usize>().map_err(|e| fmt(format!("line {}: {e}", ln + 1)))?,
                d.parse::<usize>().map_err(|e| fmt(format!("line {}: {e}", ln + 1)))?,
            ),
            _ => return Err(fmt(format!("line {}: malformed {counts:?}", ln + 1))),
        };
        let mut set = PoolSet::new();
        for _ in 0..classes {
            let (ln, line) = next("class line")?;
            let parts: Vec<&str> = line.split_whitespace().collect();
            let nums: Vec<usize> = match parts.as_slice() {
                ["class", rest @ ..] if rest.len() == 3 => rest
                    .iter()
                    .map(|p| p.parse::<usize>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| fmt(format!("line {}: {e}", ln + 1)))?,
                _ => return Err(fmt(format!("line {}: malformed class line {line:?}", ln + 1))),
            };
            let (label, count, capacity) = (nums[0], nums[1], nums[2]);
            if count > capacity {
                return Err(fmt(format!("line {}: {count} members exceed capacity {capacity}", ln + 1)));
            }
            let mut pool = MemoryPool::new(label, capacity)?;
            for _ in 0..count {
                let (ln, line) = next("antibody line")?;
                let values: Vec<f64> = line
                    .split_whitespace()
                    .map(str::parse::<f64>)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| fmt(format!("line {}: {e}", ln + 1)))?;
                if values.len() != dim + 1 {
                    return Err(fmt(format!(
                        "line {}: {} feature components, expected {dim}",
                        ln + 1,
                        values.len().saturating_sub(1)
                    )));
                }
                pool.members.push(Antibody {
                    affinity_score: values[0],
                    feature: Tensor::vector(values[1..].to_vec()),
                    class_label: label,
                });
            }
            if set.insert(pool).is_some() {
                return Err(fmt(format!("class {label} appears twice")));
            }
        }
        Ok(set)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        PoolSet::from_text(&text)
    }
}

/// Expands a batch of labeled feature vectors against the class pools.
///
/// For each feature, `a` is its best affinity to its class pool. It yields
/// `clone_count(a)` candidates, each optionally crossed with a random
/// same-class batch feature and then mutated at `mutation_rate(a)`. Only
/// candidates whose pool affinity reaches τ are returned.
pub fn generate_clones<R: Rng + ?Sized>(
    features: &[Tensor],
    labels: &[usize],
    pools: &PoolSet,
    config: &CloneConfig,
    rng: &mut R,
) -> Result<Vec<FeatureClone>> {
    if features.len() != labels.len() {
        return Err(Error::dim("generate_clones", &[features.len()], &[labels.len()]));
    }
    let mut clones = Vec::new();
    for (i, (feature, &label)) in features.iter().zip(labels).enumerate() {
        let pool = pools
            .get(label)
            .ok_or_else(|| Error::Config(format!("no memory pool for class {label}")))?;
        let a = pool.best_match(feature)?.unwrap_or(0.0);
        let count = clone_count(a, config.eta, config.tau);
        if count == 0 {
            continue;
        }
        let rate = mutation_rate(a, config.alpha, config.rate_cap);
        let partners: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|&(j, &l)| l == label && j != i)
            .map(|(j, _)| j)
            .collect();
        for _ in 0..count {
            let mut base = feature.clone();
            if rng.random_bool(config.crossover_prob) && !partners.is_empty() {
                let partner = partners[rng.random_range(0..partners.len())];
                base = crossover(&base, &features[partner], rng)?;
            }
            let candidate = mutate(&base, rate, config.sigma, rng);
            let acc = pool.best_match(&candidate)?.unwrap_or(0.0);
            if acc >= config.tau {
                clones.push(FeatureClone {
                    feature: candidate,
                    label,
                    parent: i,
                    pool_affinity: acc,
                });
            }
        }
    }
    Ok(clones)
}

/// The clonal selection layer used during training.
///
/// Pools are rebuilt every epoch: the first batch in which a class appears
/// seeds its pool with the raw feature vectors. Originals enter the pool with
/// score 1, clones with their affinity to the parent feature.
#[derive(Debug, Clone)]
pub struct ClonalSelection {
    config: CloneConfig,
    pools: PoolSet,
    rng: ChaCha8Rng,
}

impl ClonalSelection {
    pub fn new(config: CloneConfig) -> Result<Self> {
        config.validate()?;
        Ok(ClonalSelection {
            rng: ChaCha8Rng::seed_from_u64(config.rng_seed),
            config,
            pools: PoolSet::new(),
        })
    }

    pub fn config(&self) -> &CloneConfig {
        &self.config
    }

    pub fn pools(&self) -> &PoolSet {
        &self.pools
    }

    pub fn into_pools(self) -> PoolSet {
        self.pools
    }

    pub fn reset(&mut self) {
        self.pools.clear();
    }

    /// Seeds pools for classes seen for the first time; returns their labels.
    fn bootstrap(&mut self, features: &[Tensor], labels: &[usize]) -> Result<Vec<usize>> {
        for &label in labels {
            if !self.pools.contains(label) {
                self.pools.insert(MemoryPool::new(label, self.config.memory_capacity)?);
            }
        }
        let fresh: Vec<usize> = self
            .pools
            .iter()
            .filter(|p| p.is_empty())
            .map(|p| p.class_label)
            .collect();
        for &label in &fresh {
            let seeds = features
                .iter()
                .zip(labels)
                .filter(|&(_, &l)| l == label)
                .map(|(f, _)| Antibody {
                    feature: f.clone(),
                    class_label: label,
                    affinity_score: 1.0,
                });
            self.pools.pool_mut(label)?.update_memory(seeds.collect::<Vec<_>>())?;
        }
        Ok(fresh)
    }

    /// Bootstraps missing pools, generates clones, and folds originals and
    /// accepted clones into the pools.
    pub fn absorb(&mut self, features: &[Tensor], labels: &[usize]) -> Result<Vec<FeatureClone>> {
        let seeded = self.bootstrap(features, labels)?;
        let clones = generate_clones(features, labels, &self.pools, &self.config, &mut self.rng)?;

        let mut candidates: BTreeMap<usize, Vec<Antibody>> = BTreeMap::new();
        for (f, &l) in features.iter().zip(labels) {
            if seeded.contains(&l) {
                continue;
            }
            candidates.entry(l).or_default().push(Antibody {
                feature: f.clone(),
                class_label: l,
                affinity_score: 1.0,
            });
        }
        for c in &clones {
            candidates.entry(c.label).or_default().push(Antibody {
                feature: c.feature.clone(),
                class_label: c.label,
                affinity_score: affinity(&c.feature, &features[c.parent])?,
            });
        }
        for (label, group) in candidates {
            self.pools.pool_mut(label)?.update_memory(group)?;
        }
        Ok(clones)
    }
}

impl ClonalHook for ClonalSelection {
    fn begin_epoch(&mut self) {
        self.reset();
    }

    fn expand(&mut self, features: &[Tensor], labels: &[usize]) -> Result<Vec<FeatureClone>> {
        self.absorb(features, labels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClonalgParams {
    pub population_size: usize,
    /// How many of the highest-affinity individuals are cloned per pattern.
    pub select_count: usize,
    pub generations: usize,
}

#[derive(Debug, Clone)]
pub struct ClonalgOutcome {
    pub population: Vec<Tensor>,
    /// One memory pool per pattern, labeled by pattern index.
    pub memories: Vec<MemoryPool>,
    /// Mean over patterns of the best initial affinity.
    pub initial_best: f64,
    /// Mean over patterns of the best memory affinity after each generation.
    pub best_history: Vec<f64>,
}

/// Reference clonal selection procedure over a set of patterns:
/// random initial population, per-pattern affinity, selection of the best,
/// affinity-proportional cloning, inverse-affinity mutation, reinsertion and
/// memory reselection, repeated for a fixed number of generations.
pub fn clonalg_run<R: Rng + ?Sized>(
    patterns: &[Tensor],
    params: &ClonalgParams,
    config: &CloneConfig,
    rng: &mut R,
) -> Result<ClonalgOutcome> {
    config.validate()?;
    let Some(first) = patterns.first() else {
        return Err(Error::Config("CLONALG needs at least one pattern".into()));
    };
    if params.generations == 0 || params.select_count == 0 || params.population_size < params.select_count {
        return Err(Error::Config(format!("invalid CLONALG parameters {params:?}")));
    }
    if let Some(p) = patterns.iter().find(|p| p.shape() != first.shape()) {
        return Err(Error::dim("clonalg_run", first.shape(), p.shape()));
    }

    let shape = first.shape().to_vec();
    let mut population: Vec<Tensor> = (0..params.population_size)
        .map(|_| Tensor::from_fn(&shape, |_| rng.random_range(-1.0..=1.0)))
        .collect();

    let mut memories = Vec::with_capacity(patterns.len());
    for (j, p) in patterns.iter().enumerate() {
        let mut memory = MemoryPool::new(j, config.memory_capacity)?;
        let initial = population
            .iter()
            .map(|m| {
                affinity(m, p).map(|a| Antibody {
                    feature: m.clone(),
                    class_label: j,
                    affinity_score: a,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        memory.update_memory(initial)?;
        memories.push(memory);
    }
    let initial_best = memories.iter().map(|m| m.best_affinity().unwrap_or(0.0)).sum::<f64>()
        / memories.len() as f64;
    let mut best_history = Vec::with_capacity(params.generations);

    for _ in 0..params.generations {
        for (j, pattern) in patterns.iter().enumerate() {
            let mut scored = population
                .iter()
                .map(|m| affinity(m, pattern).map(|a| (a, m.clone())))
                .collect::<Result<Vec<_>>>()?;
            scored.sort_by(|x, y| y.0.total_cmp(&x.0));

            let mut offspring = Vec::new();
            for (a, parent) in scored.iter().take(params.select_count) {
                let rate = mutation_rate(*a, config.alpha, config.rate_cap);
                for _ in 0..clone_count(*a, config.eta, config.tau) {
                    let child = mutate(parent, rate, config.sigma, rng);
                    offspring.push((affinity(&child, pattern)?, child));
                }
            }

            let candidates = scored
                .iter()
                .take(params.select_count)
                .chain(&offspring)
                .map(|(a, f)| Antibody {
                    feature: f.clone(),
                    class_label: j,
                    affinity_score: *a,
                });
            memories[j].update_memory(candidates.collect::<Vec<_>>())?;

            scored.extend(offspring);
            scored.sort_by(|x, y| y.0.total_cmp(&x.0));
            scored.truncate(params.population_size);
            population = scored.into_iter().map(|(_, m)| m).collect();
        }
        let mean_best = memories.iter().map(|m| m.best_affinity().unwrap_or(0.0)).sum::<f64>()
            / memories.len() as f64;
        best_history.push(mean_best);
    }

    Ok(ClonalgOutcome {
        population,
        memories,
        initial_best,
        best_history,
    })
}
