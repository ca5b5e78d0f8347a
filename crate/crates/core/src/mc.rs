//! Event-driven simulation of the branching process with delayed contact
//! tracing.
//!
//! Each replica grows one infection tree from a single root. Contacts,
//! removals and tracing attempts are processed in time order from a priority
//! queue. When an individual is removed by direct detection (and, for
//! recursive tracing, when it is removed by tracing) it becomes an index
//! case: every allowed edge of the tree gets a tracing attempt after an
//! independent delay, which removes the contact with probability `p` if it is
//! still infectious when the attempt arrives.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::curve::{CurveSource, Direction, Generation, KappaCurve, Mode, TraceConfig};
use crate::error::{invalid, Error, Result};
use crate::grid::Grid;
use crate::model::{standard_exp, AgeProfile, DelayKernel};

/// Minimum number of individuals of a generation needed for estimates.
pub const MIN_SAMPLE: u64 = 100;

/// 97.5% standard normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RemovalCause {
    /// Recovery without diagnosis (rate `alpha`).
    Spontaneous,
    /// Direct diagnosis (rate `sigma`); the individual becomes an index case.
    Detected,
    Traced,
}

impl fmt::Display for RemovalCause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RemovalCause::Spontaneous => "spontaneous",
            RemovalCause::Detected => "detected",
            RemovalCause::Traced => "traced",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub id: usize,
    pub generation: u32,
    pub infector: Option<usize>,
    pub infection_time: f64,
    /// Infinite when the outbreak was cut before the individual recovered.
    pub removal_time: f64,
    /// `None` for censored individuals.
    pub cause: Option<RemovalCause>,
    /// Infection times of all infectees, including those beyond the
    /// generation cap that were not simulated further.
    pub contact_times: Vec<f64>,
    /// Ids of simulated infectees.
    pub infectees: Vec<usize>,
}

impl Individual {
    pub fn removal_age(&self) -> f64 {
        self.removal_time - self.infection_time
    }
}

/// Truncation limits for one replica.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Caps {
    /// Infectees beyond this generation are counted but not simulated.
    pub max_generation: u32,
    pub max_individuals: usize,
    pub max_time: f64,
}

impl Caps {
    pub fn new(max_generation: u32, max_individuals: usize, max_time: f64) -> Result<Self> {
        if max_individuals == 0 || !(max_time > 0.0) {
            return Err(invalid("caps must be positive"));
        }
        Ok(Self {
            max_generation,
            max_individuals,
            max_time,
        })
    }

    /// Caps that resolve generation `target` for the given configuration.
    ///
    /// Forward tracing only looks up the tree, so the tree can stop at the
    /// target. Backward tracing reaches an individual from its descendants,
    /// so the tree is grown `BACKWARD_DEPTH` generations further.
    pub fn for_generation(config: &TraceConfig, target: u32) -> Self {
        let extra = if config.direction.traces_infector() {
            BACKWARD_DEPTH
        } else {
            0
        };
        Self {
            max_generation: target + extra,
            max_individuals: 1 << 22,
            max_time: f64::INFINITY,
        }
    }
}

/// Extra tree depth simulated below an observed generation when backward
/// tracing is active. A chain of `k` tracing steps takes at least `k` times
/// the shortest delay, so with a fixed delay of 0.5 descendants deeper than
/// six generations cannot touch survival on ages up to 3.
pub const BACKWARD_DEPTH: u32 = 6;

/// Result of one replica.
#[derive(Debug, Clone, PartialEq)]
pub struct Outbreak {
    pub individuals: Vec<Individual>,
    /// True when a cap on individuals or time cut the simulation short.
    pub censored: bool,
}

/// Simulates one outbreak from a single root infected at time 0.
pub fn simulate_outbreak(
    profile: &AgeProfile,
    kernel: &DelayKernel,
    config: &TraceConfig,
    seed: u64,
    caps: &Caps,
) -> Outbreak {
    let mut sim = Simulator::default();
    let mut rng = replica_rng(seed, 0);
    sim.run(profile, kernel, config, caps, &mut rng, true);
    sim.outbreak()
}

/// Independent stream `replica` of the generator seeded with `seed`.
pub fn replica_rng(seed: u64, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

#[derive(Debug, Clone, Copy)]
enum EventKind {
    Contact(u32),
    Removal(u32),
    Trace(u32),
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // Reversed so that the max-heap pops the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

#[derive(Debug, Clone, Copy)]
struct Node {
    generation: u32,
    infector: u32,
    infection_time: f64,
    /// Scheduled removal without tracing.
    natural_removal: f64,
    natural_cause: RemovalCause,
    removal_time: f64,
    cause: Option<RemovalCause>,
    offspring: u32,
    first_child: u32,
    next_sibling: u32,
}

#[derive(Debug, Default)]
struct Simulator {
    nodes: Vec<Node>,
    heap: BinaryHeap<Event>,
    seq: u64,
    /// `(parent, time)` of contacts beyond the generation cap, kept only
    /// when a full log is requested.
    capped: Vec<(u32, f64)>,
    censored: bool,
}

impl Simulator {
    fn push(&mut self, time: f64, kind: EventKind) {
        self.seq += 1;
        self.heap.push(Event {
            time,
            seq: self.seq,
            kind,
        });
    }

    fn run<R: Rng>(
        &mut self,
        profile: &AgeProfile,
        kernel: &DelayKernel,
        config: &TraceConfig,
        caps: &Caps,
        rng: &mut R,
        keep_capped: bool,
    ) {
        self.nodes.clear();
        self.heap.clear();
        self.capped.clear();
        self.seq = 0;
        self.censored = false;
        let p = profile.p();

        self.infect(profile, NONE, 0.0, rng);
        while let Some(ev) = self.heap.pop() {
            if ev.time > caps.max_time {
                self.censored = true;
                break;
            }
            match ev.kind {
                EventKind::Contact(parent) => {
                    let node = self.nodes[parent as usize];
                    if node.cause.is_some() {
                        continue;
                    }
                    self.nodes[parent as usize].offspring += 1;
                    if node.generation < caps.max_generation {
                        if self.nodes.len() >= caps.max_individuals {
                            self.censored = true;
                            break;
                        }
                        self.infect(profile, parent, ev.time, rng);
                    } else if keep_capped {
                        self.capped.push((parent, ev.time));
                    }
                    let age = ev.time - node.infection_time;
                    let limit = node.natural_removal - node.infection_time;
                    if let Some(next) = next_contact_age(profile, age, limit, rng) {
                        self.push(node.infection_time + next, EventKind::Contact(parent));
                    }
                }
                EventKind::Removal(id) => {
                    let node = &mut self.nodes[id as usize];
                    if node.cause.is_some() {
                        continue;
                    }
                    node.removal_time = ev.time;
                    node.cause = Some(node.natural_cause);
                    if node.natural_cause == RemovalCause::Detected {
                        self.trace_from(id, ev.time, kernel, config.direction, rng);
                    }
                }
                EventKind::Trace(id) => {
                    if self.nodes[id as usize].cause.is_some() || !(rng.random::<f64>() < p) {
                        continue;
                    }
                    let node = &mut self.nodes[id as usize];
                    node.removal_time = ev.time;
                    node.cause = Some(RemovalCause::Traced);
                    if config.mode == Mode::Recursive {
                        self.trace_from(id, ev.time, kernel, config.direction, rng);
                    }
                }
            }
        }
    }

    fn infect<R: Rng>(&mut self, profile: &AgeProfile, infector: u32, time: f64, rng: &mut R) {
        let id = self.nodes.len() as u32;
        let (age, cause) = sample_removal(profile, rng);
        let generation = if infector == NONE {
            0
        } else {
            self.nodes[infector as usize].generation + 1
        };
        let mut node = Node {
            generation,
            infector,
            infection_time: time,
            natural_removal: time + age,
            natural_cause: cause,
            removal_time: f64::INFINITY,
            cause: None,
            offspring: 0,
            first_child: NONE,
            next_sibling: NONE,
        };
        if infector != NONE {
            let parent = &mut self.nodes[infector as usize];
            node.next_sibling = parent.first_child;
            parent.first_child = id;
        }
        self.nodes.push(node);
        self.push(time + age, EventKind::Removal(id));
        if let Some(first) = next_contact_age(profile, 0.0, age, rng) {
            self.push(time + first, EventKind::Contact(id));
        }
    }

    /// Schedules one tracing attempt per allowed edge of `id`.
    fn trace_from<R: Rng>(
        &mut self,
        id: u32,
        time: f64,
        kernel: &DelayKernel,
        direction: Direction,
        rng: &mut R,
    ) {
        let node = self.nodes[id as usize];
        if direction.traces_infector() && node.infector != NONE {
            let t = time + kernel.sample(rng);
            self.push(t, EventKind::Trace(node.infector));
        }
        if direction.traces_infectees() {
            let mut child = node.first_child;
            while child != NONE {
                let t = time + kernel.sample(rng);
                self.push(t, EventKind::Trace(child));
                child = self.nodes[child as usize].next_sibling;
            }
        }
    }

    fn outbreak(&self) -> Outbreak {
        let mut individuals: Vec<Individual> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(id, n)| Individual {
                id,
                generation: n.generation,
                infector: (n.infector != NONE).then_some(n.infector as usize),
                infection_time: n.infection_time,
                removal_time: n.removal_time,
                cause: n.cause,
                contact_times: Vec::with_capacity(n.offspring as usize),
                infectees: Vec::new(),
            })
            .collect();
        for id in 0..individuals.len() {
            if let Some(parent) = individuals[id].infector {
                let t = individuals[id].infection_time;
                individuals[parent].contact_times.push(t);
                individuals[parent].infectees.push(id);
            }
        }
        for &(parent, t) in &self.capped {
            individuals[parent as usize].contact_times.push(t);
        }
        for ind in &mut individuals {
            ind.contact_times.sort_by(f64::total_cmp);
        }
        Outbreak {
            individuals,
            censored: self.censored,
        }
    }
}

/// Age of the next contact after `age`, if it comes before `limit`.
fn next_contact_age<R: Rng>(profile: &AgeProfile, age: f64, limit: f64, rng: &mut R) -> Option<f64> {
    let next = match profile {
        AgeProfile::Constant(r) => age + standard_exp(rng) / r.beta(),
        AgeProfile::FixedLatency { rates, latency } => {
            age.max(*latency) + standard_exp(rng) / rates.beta()
        }
        AgeProfile::Tabulated { .. } => {
            // Thinning against the largest contact rate.
            let bound = profile.beta_max();
            let mut a = age;
            loop {
                a += standard_exp(rng) / bound;
                if a >= limit || rng.random::<f64>() * bound < profile.beta_at(a) {
                    break a;
                }
            }
        }
    };
    (next < limit).then_some(next)
}

/// Removal age without tracing and whether it is a detection.
fn sample_removal<R: Rng>(profile: &AgeProfile, rng: &mut R) -> (f64, RemovalCause) {
    let e = standard_exp(rng);
    let age = match profile {
        AgeProfile::Constant(r) => e / r.gamma(),
        AgeProfile::FixedLatency { rates, latency } => latency + e / rates.gamma(),
        AgeProfile::Tabulated { .. } => invert_removal_integral(profile, e),
    };
    let (alpha, sigma) = match profile {
        AgeProfile::Constant(r) | AgeProfile::FixedLatency { rates: r, .. } => (r.alpha(), r.sigma()),
        AgeProfile::Tabulated { .. } => (profile.alpha_at(age), profile.sigma_at(age)),
    };
    let cause = if rng.random::<f64>() * (alpha + sigma) < sigma {
        RemovalCause::Detected
    } else {
        RemovalCause::Spontaneous
    };
    (age, cause)
}

/// Age at which the integrated removal hazard reaches `target`.
fn invert_removal_integral(profile: &AgeProfile, target: f64) -> f64 {
    let mut hi = 1.0;
    while profile.removal_integral(hi) < target {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if profile.removal_integral(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Counts of removal ages binned on a grid: bin `k` holds ages in
/// `(a_k, a_{k+1}]`, the last bin everything beyond the grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SurvivalHistogram {
    bins: Vec<u64>,
    total: u64,
}

impl SurvivalHistogram {
    pub fn new(grid: &Grid) -> Self {
        Self {
            bins: vec![0; grid.len()],
            total: 0,
        }
    }

    pub fn record(&mut self, age: f64, h: f64) {
        let k = ((age / h).ceil() as usize).saturating_sub(1);
        let last = self.bins.len() - 1;
        self.bins[k.min(last)] += 1;
        self.total += 1;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Number of individuals with removal age above each node.
    pub fn survivors(&self) -> Vec<u64> {
        let mut out = vec![0; self.bins.len()];
        let mut acc = 0;
        for k in (0..self.bins.len()).rev() {
            acc += self.bins[k];
            out[k] = acc;
        }
        out
    }

    fn merge(&mut self, other: &Self) {
        self.bins
            .iter_mut()
            .zip(&other.bins)
            .for_each(|(a, b)| *a += b);
        self.total += other.total;
    }
}

/// Per-generation tallies of an ensemble.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationStats {
    pub survival: SurvivalHistogram,
    pub offspring_sum: u64,
    pub offspring_sq_sum: u64,
    /// Individuals of this generation that belong to censored outbreaks.
    pub censored: u64,
}

impl GenerationStats {
    fn new(grid: &Grid) -> Self {
        Self {
            survival: SurvivalHistogram::new(grid),
            offspring_sum: 0,
            offspring_sq_sum: 0,
            censored: 0,
        }
    }

    fn merge(&mut self, other: &Self) {
        self.survival.merge(&other.survival);
        self.offspring_sum += other.offspring_sum;
        self.offspring_sq_sum += other.offspring_sq_sum;
        self.censored += other.censored;
    }
}

/// Integer tallies of many replicas. Merging is order independent, so
/// results do not depend on the number of worker threads.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    grid: Grid,
    pub replicas: u64,
    pub censored_replicas: u64,
    pub generations: Vec<GenerationStats>,
}

impl EnsembleStats {
    pub fn new(grid: Grid, max_generation: u32) -> Self {
        Self {
            grid,
            replicas: 0,
            censored_replicas: 0,
            generations: (0..=max_generation)
                .map(|_| GenerationStats::new(&grid))
                .collect(),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Adds one outbreak.
    pub fn record(&mut self, outbreak: &Outbreak) {
        self.replicas += 1;
        self.censored_replicas += u64::from(outbreak.censored);
        let h = self.grid.h();
        for ind in &outbreak.individuals {
            let Some(stats) = self.generations.get_mut(ind.generation as usize) else {
                continue;
            };
            if outbreak.censored {
                stats.censored += 1;
                continue;
            }
            let k = ind.contact_times.len() as u64;
            stats.survival.record(ind.removal_age(), h);
            stats.offspring_sum += k;
            stats.offspring_sq_sum += k * k;
        }
    }

    fn record_nodes(&mut self, sim: &Simulator) {
        self.replicas += 1;
        self.censored_replicas += u64::from(sim.censored);
        let h = self.grid.h();
        for n in &sim.nodes {
            let Some(stats) = self.generations.get_mut(n.generation as usize) else {
                continue;
            };
            if sim.censored {
                stats.censored += 1;
                continue;
            }
            let k = u64::from(n.offspring);
            stats.survival.record(n.removal_time - n.infection_time, h);
            stats.offspring_sum += k;
            stats.offspring_sq_sum += k * k;
        }
    }

    fn merge(mut self, other: Self) -> Self {
        self.replicas += other.replicas;
        self.censored_replicas += other.censored_replicas;
        for (a, b) in self.generations.iter_mut().zip(&other.generations) {
            a.merge(b);
        }
        self
    }

    fn generation(&self, generation: u32) -> Result<&GenerationStats> {
        let stats = self
            .generations
            .get(generation as usize)
            .ok_or(Error::InsufficientSample {
                generation: generation as usize,
                found: 0,
                required: MIN_SAMPLE,
            })?;
        if stats.censored > 0 {
            return Err(Error::Censored {
                generation: generation as usize,
                count: stats.censored,
            });
        }
        if stats.survival.total() < MIN_SAMPLE {
            return Err(Error::InsufficientSample {
                generation: generation as usize,
                found: stats.survival.total(),
                required: MIN_SAMPLE,
            });
        }
        Ok(stats)
    }
}

/// Runs `replicas` independent outbreaks in parallel; replica `r` uses
/// stream `r` of the generator seeded with `seed`.
pub fn run_ensemble(
    profile: &AgeProfile,
    kernel: &DelayKernel,
    config: &TraceConfig,
    caps: &Caps,
    replicas: u64,
    seed: u64,
    grid: &Grid,
) -> EnsembleStats {
    (0..replicas)
        .into_par_iter()
        .fold(
            || (Simulator::default(), EnsembleStats::new(*grid, caps.max_generation)),
            |(mut sim, mut stats), r| {
                let mut rng = replica_rng(seed, r);
                sim.run(profile, kernel, config, caps, &mut rng, false);
                stats.record_nodes(&sim);
                (sim, stats)
            },
        )
        .map(|(_, stats)| stats)
        .reduce(|| EnsembleStats::new(*grid, caps.max_generation), EnsembleStats::merge)
}

/// Empirical survival curve with a pointwise Wilson 95% band.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCurve {
    pub curve: KappaCurve,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub sample_size: u64,
}

impl EmpiricalCurve {
    /// Whether `value` lies inside the band at node `k`.
    pub fn covers(&self, k: usize, value: f64) -> bool {
        value >= self.lower[k] && value <= self.upper[k]
    }
}

/// Wilson score interval for `k` successes out of `n`.
pub fn wilson_interval(k: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let phat = k as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let centre = (phat + z2 / (2.0 * n)) / denom;
    let half = Z95 * (phat * (1.0 - phat) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lower = if k == 0 { 0.0 } else { (centre - half).max(0.0) };
    let upper = if k as f64 == n { 1.0 } else { (centre + half).min(1.0) };
    (lower, upper)
}

/// Fraction of generation-`generation` individuals still infectious at each
/// node of `grid`.
pub fn estimate_kappa(
    ensemble: &EnsembleStats,
    generation: u32,
    grid: &Grid,
    config: &TraceConfig,
) -> Result<EmpiricalCurve> {
    if !ensemble.grid.same_as(grid) {
        return Err(Error::GridMismatch {
            expected: ensemble.grid.len(),
            found: grid.len(),
        });
    }
    let stats = ensemble.generation(generation)?;
    let n = stats.survival.total();
    let survivors = stats.survival.survivors();
    let values = survivors.iter().map(|&k| k as f64 / n as f64).collect();
    let (lower, upper) = survivors.iter().map(|&k| wilson_interval(k, n)).unzip();
    let curve = KappaCurve::new(
        *grid,
        values,
        Generation::Index(generation as usize),
        CurveSource::Empirical {
            direction: config.direction,
            mode: config.mode,
        },
    )?;
    Ok(EmpiricalCurve {
        curve,
        lower,
        upper,
        sample_size: n,
    })
}

/// Mean number of infectees of generation-`generation` individuals and its
/// standard error.
pub fn estimate_r(ensemble: &EnsembleStats, generation: u32) -> Result<(f64, f64)> {
    let stats = ensemble.generation(generation)?;
    let n = stats.survival.total() as f64;
    let mean = stats.offspring_sum as f64 / n;
    let var = (stats.offspring_sq_sum as f64 / n - mean * mean).max(0.0) * n / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// Writes `id,generation,infector,t_inf,t_rem,cause` rows.
pub fn write_event_log<W: Write>(outbreak: &Outbreak, mut out: W) -> std::io::Result<()> {
    writeln!(out, "id,generation,infector,t_inf,t_rem,cause")?;
    for ind in &outbreak.individuals {
        let infector = ind.infector.map(|i| i.to_string()).unwrap_or_default();
        let cause = ind.cause.map(|c| c.to_string()).unwrap_or_else(|| "censored".into());
        writeln!(
            out,
            "{},{},{},{},{},{}",
            ind.id, ind.generation, infector, ind.infection_time, ind.removal_time, cause
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Rates;

    fn config(direction: Direction, mode: Mode) -> TraceConfig {
        TraceConfig::new(direction, mode, 4).unwrap()
    }

    fn fig(p: f64) -> AgeProfile {
        Rates::new(2.0, 0.1, 0.9, p).unwrap().into()
    }

    fn dirac() -> DelayKernel {
        DelayKernel::dirac(0.5).unwrap()
    }

    #[test]
    fn outbreaks_are_deterministic() {
        let cfg = config(Direction::Full, Mode::Recursive);
        let caps = Caps::new(6, 10_000, f64::INFINITY).unwrap();
        for seed in 0..20 {
            let a = simulate_outbreak(&fig(0.8), &dirac(), &cfg, seed, &caps);
            let b = simulate_outbreak(&fig(0.8), &dirac(), &cfg, seed, &caps);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn tree_is_consistent() {
        let cfg = config(Direction::Full, Mode::Recursive);
        let caps = Caps::new(5, 100_000, f64::INFINITY).unwrap();
        for seed in 0..50 {
            let o = simulate_outbreak(&fig(0.5), &dirac(), &cfg, seed, &caps);
            assert!(!o.censored);
            for ind in &o.individuals {
                assert!(ind.removal_time > ind.infection_time);
                assert!(ind.contact_times.len() >= ind.infectees.len());
                for &t in &ind.contact_times {
                    assert!(t > ind.infection_time && t < ind.removal_time);
                }
                if ind.generation < 5 {
                    assert_eq!(ind.contact_times.len(), ind.infectees.len());
                }
                for &c in &ind.infectees {
                    assert_eq!(o.individuals[c].generation, ind.generation + 1);
                }
            }
        }
    }

    #[test]
    fn childless_root_schedules_no_tracing() {
        // p_obs = 1 and no contacts: the root is detected but has no edges.
        let prof: AgeProfile = Rates::new(0.0, 0.0, 1.0, 1.0).unwrap().into();
        let cfg = config(Direction::Full, Mode::Recursive);
        let caps = Caps::new(4, 10, f64::INFINITY).unwrap();
        let mut sim = Simulator::default();
        let mut rng = replica_rng(7, 0);
        sim.run(&prof, &dirac(), &cfg, &caps, &mut rng, true);
        assert_eq!(sim.nodes.len(), 1);
        assert_eq!(sim.nodes[0].cause, Some(RemovalCause::Detected));
        // One initial removal event, nothing else.
        assert_eq!(sim.seq, 1);
    }

    #[test]
    fn traced_removals_follow_an_index_case_by_the_delay() {
        let caps = Caps::new(5, 100_000, f64::INFINITY).unwrap();
        for (direction, mode) in [
            (Direction::Full, Mode::Recursive),
            (Direction::Backward, Mode::OneStep),
            (Direction::Forward, Mode::Recursive),
        ] {
            let cfg = config(direction, mode);
            let mut traced = 0;
            for seed in 0..200 {
                let o = simulate_outbreak(&fig(0.8), &dirac(), &cfg, seed, &caps);
                let is_index = |i: usize| match o.individuals[i].cause {
                    Some(RemovalCause::Detected) => true,
                    Some(RemovalCause::Traced) => mode == Mode::Recursive,
                    _ => false,
                };
                for ind in &o.individuals {
                    if ind.cause != Some(RemovalCause::Traced) {
                        continue;
                    }
                    traced += 1;
                    let mut sources = Vec::new();
                    if direction.traces_infectees() {
                        sources.extend(ind.infector);
                    }
                    if direction.traces_infector() {
                        sources.extend(ind.infectees.iter().copied());
                    }
                    let ok = sources.iter().any(|&s| {
                        is_index(s) && (o.individuals[s].removal_time + 0.5 - ind.removal_time).abs() < 1e-9
                    });
                    assert!(ok, "{direction} {mode}: traced {} without source", ind.id);
                }
            }
            assert!(traced > 0);
        }
    }

    #[test]
    fn forward_tracing_never_removes_the_root() {
        let cfg = config(Direction::Forward, Mode::Recursive);
        let caps = Caps::new(4, 100_000, f64::INFINITY).unwrap();
        for seed in 0..500 {
            let o = simulate_outbreak(&fig(1.0), &dirac(), &cfg, seed, &caps);
            assert_ne!(o.individuals[0].cause, Some(RemovalCause::Traced));
        }
    }

    #[test]
    fn caps_censor_outbreaks() {
        let cfg = config(Direction::Forward, Mode::OneStep);
        let caps = Caps::new(30, 50, f64::INFINITY).unwrap();
        let censored = (0..200)
            .map(|s| simulate_outbreak(&fig(0.0), &dirac(), &cfg, s, &caps))
            .filter(|o| o.censored)
            .count();
        assert!(censored > 0);
        let grid = Grid::new(0.01, 25.0).unwrap();
        let stats = run_ensemble(&fig(0.0), &dirac(), &cfg, &caps, 2000, 1, &grid);
        assert!(matches!(
            estimate_kappa(&stats, 0, &grid, &cfg),
            Err(Error::Censored { .. })
        ));
    }

    #[test]
    fn two_point_survival() {
        let grid = Grid::new(0.5, 5.0).unwrap();
        let mut stats = EnsembleStats::new(grid, 0);
        for age in [1.0, 3.0] {
            stats.generations[0].survival.record(age, grid.h());
        }
        let s = stats.generations[0].survival.survivors();
        let expected = [2, 2, 1, 1, 1, 1, 0, 0, 0, 0, 0];
        assert_eq!(s, expected);
        // Fewer than the minimum sample is refused.
        stats.generations[0].survival.total = 2;
        assert!(matches!(
            estimate_kappa(&stats, 0, &grid, &config(Direction::Full, Mode::OneStep)),
            Err(Error::InsufficientSample { found: 2, .. })
        ));
    }

    #[test]
    fn wilson_interval_contains_estimate() {
        let (lo, hi) = wilson_interval(30, 100);
        assert!(lo < 0.3 && hi > 0.3);
        assert!((lo - 0.2189).abs() < 1e-3 && (hi - 0.3958).abs() < 1e-3);
        assert_eq!(wilson_interval(0, 100).0, 0.0);
        assert_eq!(wilson_interval(100, 100).1, 1.0);
    }

    #[test]
    fn ensemble_is_independent_of_thread_count() {
        let cfg = config(Direction::Full, Mode::Recursive);
        let caps = Caps::for_generation(&cfg, 2);
        let grid = Grid::new(0.01, 25.0).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_ensemble(&fig(0.3), &dirac(), &cfg, &caps, 500, 42, &grid))
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn ensemble_matches_single_outbreaks() {
        let cfg = config(Direction::Backward, Mode::Recursive);
        let caps = Caps::new(4, 100_000, f64::INFINITY).unwrap();
        let grid = Grid::new(0.01, 25.0).unwrap();
        let fast = run_ensemble(&fig(0.3), &dirac(), &cfg, &caps, 1, 9, &grid);
        let mut slow = EnsembleStats::new(grid, 4);
        slow.record(&simulate_outbreak(&fig(0.3), &dirac(), &cfg, 9, &caps));
        assert_eq!(fast, slow);
    }

    #[test]
    fn zero_contact_rate_gives_no_offspring() {
        let prof: AgeProfile = Rates::new(0.0, 0.1, 0.9, 0.5).unwrap().into();
        let cfg = config(Direction::Full, Mode::Recursive);
        let caps = Caps::for_generation(&cfg, 0);
        let grid = Grid::new(0.01, 25.0).unwrap();
        let stats = run_ensemble(&prof, &dirac(), &cfg, &caps, 1000, 3, &grid);
        assert_eq!(estimate_r(&stats, 0).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn latency_delays_contacts_and_removal() {
        let r = Rates::new(2.0, 0.1, 0.9, 0.5).unwrap();
        let prof = AgeProfile::fixed_latency(r, 1.0).unwrap();
        let cfg = config(Direction::Full, Mode::Recursive);
        let caps = Caps::new(4, 100_000, f64::INFINITY).unwrap();
        for seed in 0..100 {
            let o = simulate_outbreak(&prof, &dirac(), &cfg, seed, &caps);
            for ind in &o.individuals {
                if ind.cause != Some(RemovalCause::Traced) {
                    assert!(ind.removal_age() > 1.0);
                }
                assert!(ind.contact_times.iter().all(|t| t - ind.infection_time > 1.0));
            }
        }
    }

    #[test]
    fn tabulated_profile_samples_rates() {
        // Constant rates given as a table must reproduce constant behaviour.
        let prof =
            AgeProfile::tabulated(1.0, vec![2.0; 5], vec![0.1; 5], vec![0.9; 5], 0.0).unwrap();
        let cfg = config(Direction::Forward, Mode::OneStep);
        let caps = Caps::for_generation(&cfg, 0);
        let grid = Grid::new(0.01, 25.0).unwrap();
        let stats = run_ensemble(&prof, &dirac(), &cfg, &caps, 20_000, 5, &grid);
        let (mean, se) = estimate_r(&stats, 0).unwrap();
        assert!((mean - 2.0).abs() < 4.0 * se, "{mean} {se}");
        let c = estimate_kappa(&stats, 0, &grid, &cfg).unwrap();
        let k = grid.floor_index(1.0);
        assert!(c.covers(k, (-1.0f64).exp()) || (c.curve.values()[k] - (-1.0f64).exp()).abs() < 0.01);
    }
}
