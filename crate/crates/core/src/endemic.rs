//! Tracing in an endemic SIS population: the effective-removal-rate
//! heuristic, the deterministic comparison model and a finite-population
//! stochastic simulation with tracing on the realised infection tree.

use std::collections::BinaryHeap;
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;

use crate::curve::{Mode, TraceConfig};
use crate::error::{invalid, Error, Result};
use crate::mc::replica_rng;
use crate::model::{kappa_hat, standard_exp, DelayKernel, Rates};

/// Effective removal rate at susceptible fraction `u` when a fraction `p`
/// of edges is traced after a fixed delay `t`. The tracing probability
/// stored in `rates` is ignored.
pub fn gamma_eff(u: f64, rates: &Rates, p: f64, t: f64) -> Result<f64> {
    if !(u > 0.0 && u <= 1.0) {
        return Err(Error::Domain(format!("susceptible fraction {u} outside (0, 1]")));
    }
    if !(0.0..=1.0).contains(&p) || !(t >= 0.0) {
        return Err(invalid(format!("need p in [0, 1] and t >= 0, got {p} and {t}")));
    }
    let g = rates.gamma();
    let denom = 1.0 - 0.5 * p * rates.p_obs() * kappa_hat(t, g) * (rates.beta() * u / g + 1.0);
    if denom <= 0.0 {
        return Err(Error::Domain(format!(
            "first-order tracing effect exceeds the reproduction number at u = {u}"
        )));
    }
    Ok(g / denom)
}

/// Parameters shared by the deterministic and the stochastic SIS runs.
#[derive(Debug, Clone, PartialEq)]
pub struct SisScenario {
    /// Contact and removal rates; `p` is the tracing probability after the
    /// switch.
    pub rates: Rates,
    pub kernel: DelayKernel,
    pub population: u32,
    pub initial_infected: u32,
    pub horizon: f64,
    pub tracing_start: f64,
    /// Output spacing, and the integration step of the ODE.
    pub step: f64,
}

impl SisScenario {
    pub fn validate(&self) -> Result<()> {
        if self.population < 100 {
            return Err(invalid("population must be at least 100"));
        }
        if self.initial_infected == 0 || self.initial_infected > self.population {
            return Err(invalid("initial infected must lie in 1..=population"));
        }
        if !(self.tracing_start >= 0.0 && self.horizon > self.tracing_start) {
            return Err(invalid("need 0 <= tracing_start < horizon"));
        }
        if !(self.step > 0.0 && self.step < self.horizon) {
            return Err(invalid("output step must be positive and below the horizon"));
        }
        Ok(())
    }

    /// Time from which tracing changes the removal rate of the ODE.
    pub fn effect_start(&self) -> f64 {
        self.tracing_start + self.kernel.mean()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SisTimeSeries {
    pub times: Vec<f64>,
    /// Infected fraction at each time.
    pub fractions: Vec<f64>,
    /// Infected counts for stochastic runs.
    pub counts: Option<Vec<u32>>,
    pub tracing_start: f64,
    pub effect_start: f64,
    /// Time at which the infection died out, if it did.
    pub extinct_at: Option<f64>,
}

impl SisTimeSeries {
    /// Mean infected fraction over `[from, to]`.
    pub fn mean_over(&self, from: f64, to: f64) -> f64 {
        let (sum, n) = self
            .times
            .iter()
            .zip(&self.fractions)
            .filter(|(t, _)| **t >= from && **t <= to)
            .fold((0.0, 0usize), |(s, n), (_, v)| (s + v, n + 1));
        if n == 0 {
            f64::NAN
        } else {
            sum / n as f64
        }
    }

    /// Writes `t,value,phase` rows; phase is 0 before tracing, 1 while the
    /// delay runs and 2 once tracing acts.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,value,phase")?;
        for (k, (t, v)) in self.times.iter().zip(&self.fractions).enumerate() {
            let phase = if *t < self.tracing_start {
                0
            } else if *t < self.effect_start {
                1
            } else {
                2
            };
            match &self.counts {
                Some(c) => writeln!(out, "{t},{},{phase}", c[k])?,
                None => writeln!(out, "{t},{v},{phase}")?,
            }
        }
        Ok(())
    }
}

/// Integrates `i' = beta i (1 - i) - gamma_eff(1 - i) i` with classical
/// Runge-Kutta steps. Before `tracing_start` plus the delay the removal
/// rate is `alpha + sigma`.
pub fn integrate_sis(scenario: &SisScenario) -> Result<SisTimeSeries> {
    scenario.validate()?;
    let delay = fixed_delay(&scenario.kernel)?;
    let rates = scenario.rates;
    let beta = rates.beta();
    let effect = scenario.effect_start();
    let h = scenario.step;
    let rhs = |t: f64, i: f64| -> Result<f64> {
        let i = i.clamp(0.0, 1.0);
        let gamma = if t >= effect {
            gamma_eff(1.0 - i, &rates, rates.p(), delay)?
        } else {
            rates.gamma()
        };
        Ok(beta * i * (1.0 - i) - gamma * i)
    };
    let steps = (scenario.horizon / h).round() as usize;
    let mut times = Vec::with_capacity(steps + 1);
    let mut fractions = Vec::with_capacity(steps + 1);
    let mut i = f64::from(scenario.initial_infected) / f64::from(scenario.population);
    times.push(0.0);
    fractions.push(i);
    for k in 0..steps {
        let t = k as f64 * h;
        let k1 = rhs(t, i)?;
        let k2 = rhs(t + 0.5 * h, i + 0.5 * h * k1)?;
        let k3 = rhs(t + 0.5 * h, i + 0.5 * h * k2)?;
        let k4 = rhs(t + h, i + h * k3)?;
        i += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        times.push((k + 1) as f64 * h);
        fractions.push(i.clamp(0.0, 1.0));
    }
    Ok(SisTimeSeries {
        times,
        fractions,
        counts: None,
        tracing_start: scenario.tracing_start,
        effect_start: effect,
        extinct_at: None,
    })
}

fn fixed_delay(kernel: &DelayKernel) -> Result<f64> {
    match kernel {
        DelayKernel::Dirac { delay } => Ok(*delay),
        _ => Err(Error::Domain(
            "the effective removal rate is defined for a fixed delay".into(),
        )),
    }
}

/// Endemic infected fraction of the ODE with tracing active.
pub fn tracing_equilibrium(rates: &Rates, p: f64, t: f64) -> Result<f64> {
    let f = |i: f64| -> Result<f64> {
        Ok(rates.beta() * (1.0 - i) - gamma_eff(1.0 - i, rates, p, t)?)
    };
    let (mut lo, mut hi) = (0.0, 1.0 - 1e-12);
    if f(lo)? <= 0.0 {
        return Ok(0.0);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy)]
enum Kind {
    Contact(u32),
    Removal(u32),
    Trace(u32),
}

#[derive(Debug, Clone, Copy)]
struct Ev {
    time: f64,
    seq: u64,
    kind: Kind,
}

impl PartialEq for Ev {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == std::cmp::Ordering::Equal
    }
}

impl Eq for Ev {}

impl PartialOrd for Ev {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ev {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

const NONE: u32 = u32::MAX;

/// One infection of one individual.
#[derive(Debug, Clone, Copy)]
struct Episode {
    person: u32,
    infector: u32,
    natural_removal: f64,
    detected: bool,
    active: bool,
    first_child: u32,
    next_sibling: u32,
}

/// Finite-population SIS epidemic with tracing on infection edges.
///
/// Contacts go to a uniformly chosen other member of the population and
/// infect only susceptibles. Removed individuals are susceptible again at
/// once. Detections at or after `tracing_start` trigger tracing; attempts
/// arriving later succeed with probability `p` if the traced infection is
/// still ongoing.
pub fn simulate_sis_finite(
    scenario: &SisScenario,
    config: &TraceConfig,
    seed: u64,
) -> Result<SisTimeSeries> {
    scenario.validate()?;
    let mut rng = replica_rng(seed, 0);
    Ok(SisRun::new(scenario, config).run(&mut rng))
}

/// Runs several seeds in parallel; results are in seed order.
pub fn simulate_sis_ensemble(
    scenario: &SisScenario,
    config: &TraceConfig,
    seeds: &[u64],
) -> Result<Vec<SisTimeSeries>> {
    scenario.validate()?;
    Ok(seeds
        .par_iter()
        .map(|&s| SisRun::new(scenario, config).run(&mut replica_rng(s, 0)))
        .collect())
}

struct SisRun<'a> {
    scenario: &'a SisScenario,
    config: &'a TraceConfig,
    episodes: Vec<Episode>,
    /// Current episode of each person, or `NONE` when susceptible.
    current: Vec<u32>,
    heap: BinaryHeap<Ev>,
    seq: u64,
    infected: u32,
}

impl<'a> SisRun<'a> {
    fn new(scenario: &'a SisScenario, config: &'a TraceConfig) -> Self {
        Self {
            scenario,
            config,
            episodes: Vec::new(),
            current: vec![NONE; scenario.population as usize],
            heap: BinaryHeap::new(),
            seq: 0,
            infected: 0,
        }
    }

    fn push(&mut self, time: f64, kind: Kind) {
        self.seq += 1;
        self.heap.push(Ev {
            time,
            seq: self.seq,
            kind,
        });
    }

    fn infect<R: Rng>(&mut self, person: u32, infector: u32, time: f64, rng: &mut R) {
        let rates = &self.scenario.rates;
        let id = self.episodes.len() as u32;
        let removal = time + standard_exp(rng) / rates.gamma();
        let detected = rng.random::<f64>() < rates.p_obs();
        let mut ep = Episode {
            person,
            infector,
            natural_removal: removal,
            detected,
            active: true,
            first_child: NONE,
            next_sibling: NONE,
        };
        if infector != NONE {
            ep.next_sibling = self.episodes[infector as usize].first_child;
            self.episodes[infector as usize].first_child = id;
        }
        self.episodes.push(ep);
        self.current[person as usize] = id;
        self.infected += 1;
        self.push(removal, Kind::Removal(id));
        self.schedule_contact(id, time, rng);
    }

    fn schedule_contact<R: Rng>(&mut self, id: u32, time: f64, rng: &mut R) {
        let beta = self.scenario.rates.beta();
        if beta > 0.0 {
            let t = time + standard_exp(rng) / beta;
            if t < self.episodes[id as usize].natural_removal {
                self.push(t, Kind::Contact(id));
            }
        }
    }

    fn remove(&mut self, id: u32) {
        let ep = &mut self.episodes[id as usize];
        ep.active = false;
        self.current[ep.person as usize] = NONE;
        self.infected -= 1;
    }

    fn trace_from<R: Rng>(&mut self, id: u32, time: f64, rng: &mut R) {
        let ep = self.episodes[id as usize];
        let direction = self.config.direction;
        if direction.traces_infector() && ep.infector != NONE {
            let t = time + self.scenario.kernel.sample(rng);
            self.push(t, Kind::Trace(ep.infector));
        }
        if direction.traces_infectees() {
            let mut child = ep.first_child;
            while child != NONE {
                let t = time + self.scenario.kernel.sample(rng);
                self.push(t, Kind::Trace(child));
                child = self.episodes[child as usize].next_sibling;
            }
        }
    }

    fn run<R: Rng>(mut self, rng: &mut R) -> SisTimeSeries {
        let sc = self.scenario;
        let n = sc.population;
        let p = sc.rates.p();
        // The first individuals infected are 0..initial, which is as good
        // as a random choice since partners are drawn uniformly.
        for person in 0..sc.initial_infected {
            self.infect(person, NONE, 0.0, rng);
        }
        let steps = (sc.horizon / sc.step).round() as usize;
        let mut times = Vec::with_capacity(steps + 1);
        let mut counts = Vec::with_capacity(steps + 1);
        let mut extinct_at = None;
        let mut next_sample = 0usize;

        loop {
            let next_time = self.heap.peek().map_or(f64::INFINITY, |e| e.time);
            while next_sample <= steps && next_sample as f64 * sc.step < next_time {
                times.push(next_sample as f64 * sc.step);
                counts.push(self.infected);
                next_sample += 1;
            }
            if next_sample > steps {
                break;
            }
            let Some(ev) = self.heap.pop() else { break };
            match ev.kind {
                Kind::Contact(id) => {
                    if !self.episodes[id as usize].active {
                        continue;
                    }
                    let me = self.episodes[id as usize].person;
                    let mut partner = rng.random_range(0..n - 1);
                    if partner >= me {
                        partner += 1;
                    }
                    if self.current[partner as usize] == NONE {
                        self.infect(partner, id, ev.time, rng);
                    }
                    self.schedule_contact(id, ev.time, rng);
                }
                Kind::Removal(id) => {
                    let ep = self.episodes[id as usize];
                    if !ep.active {
                        continue;
                    }
                    self.remove(id);
                    if ep.detected && ev.time >= sc.tracing_start && p > 0.0 {
                        self.trace_from(id, ev.time, rng);
                    }
                }
                Kind::Trace(id) => {
                    if !self.episodes[id as usize].active || !(rng.random::<f64>() < p) {
                        continue;
                    }
                    self.remove(id);
                    if self.config.mode == Mode::Recursive {
                        self.trace_from(id, ev.time, rng);
                    }
                }
            }
            if self.infected == 0 && extinct_at.is_none() {
                extinct_at = Some(ev.time);
            }
        }
        let fractions = counts.iter().map(|&c| f64::from(c) / f64::from(n)).collect();
        SisTimeSeries {
            times,
            fractions,
            counts: Some(counts),
            tracing_start: sc.tracing_start,
            effect_start: sc.effect_start(),
            extinct_at,
        }
    }
}
