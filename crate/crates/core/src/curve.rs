//! Sampled survival curves and the tracing configuration they belong to.

use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::grid::Grid;
use crate::model::AgeProfile;

/// Which edges of the infection tree are traced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    /// From a detected infectee to its infector.
    Backward,
    /// From a detected infector to its infectees.
    Forward,
    Full,
}

impl Direction {
    pub fn traces_infector(self) -> bool {
        matches!(self, Direction::Backward | Direction::Full)
    }

    pub fn traces_infectees(self) -> bool {
        matches!(self, Direction::Forward | Direction::Full)
    }
}

/// Whether individuals found by tracing trigger tracing themselves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    OneStep,
    Recursive,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Backward => "backward",
            Direction::Forward => "forward",
            Direction::Full => "full",
        })
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "backward" => Ok(Direction::Backward),
            "forward" => Ok(Direction::Forward),
            "full" => Ok(Direction::Full),
            other => Err(Error::Parse(format!("unknown direction '{other}'"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::OneStep => "one-step",
            Mode::Recursive => "recursive",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "one-step" | "onestep" | "one_step" => Ok(Mode::OneStep),
            "recursive" => Ok(Mode::Recursive),
            other => Err(Error::Parse(format!("unknown mode '{other}'"))),
        }
    }
}

pub const MAX_GENERATIONS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceConfig {
    pub direction: Direction,
    pub mode: Mode,
    /// Number of generations to compute; ignored for backward tracing.
    pub generations: usize,
}

impl TraceConfig {
    pub fn new(direction: Direction, mode: Mode, generations: usize) -> Result<Self> {
        if generations == 0 || generations > MAX_GENERATIONS {
            return Err(invalid(format!(
                "generations must lie in 1..={MAX_GENERATIONS}, got {generations}"
            )));
        }
        Ok(Self {
            direction,
            mode,
            generations,
        })
    }
}

/// Generation index of a curve. `Limit(i)` marks the curve at which the
/// generation recursion became stationary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generation {
    Index(usize),
    Limit(usize),
}

impl Generation {
    pub fn index(self) -> usize {
        match self {
            Generation::Index(i) | Generation::Limit(i) => i,
        }
    }

    pub fn is_limit(self) -> bool {
        matches!(self, Generation::Limit(_))
    }
}

impl fmt::Display for Generation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Generation::Index(i) => write!(f, "{i}"),
            Generation::Limit(i) => write!(f, "{i}(limit)"),
        }
    }
}

/// Where a curve came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveSource {
    /// Survival without tracing.
    Baseline,
    Exact { direction: Direction, mode: Mode },
    FirstOrder { direction: Direction },
    Empirical { direction: Direction, mode: Mode },
}

/// Largest violation of `[0,1]` bounds or monotonicity that is treated as
/// rounding noise and cleaned instead of rejected.
const ROUNDOFF: f64 = 1e-9;

/// Probability of still being infectious, sampled on a uniform age grid.
#[derive(Debug, Clone, PartialEq)]
pub struct KappaCurve {
    grid: Grid,
    values: Vec<f64>,
    generation: Generation,
    source: CurveSource,
}

impl KappaCurve {
    /// Checks `values[0] = 1`, bounds and monotonicity. Violations below
    /// `1e-9` are rounding noise and get cleaned.
    pub fn new(
        grid: Grid,
        mut values: Vec<f64>,
        generation: Generation,
        source: CurveSource,
    ) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch {
                expected: grid.len(),
                found: values.len(),
            });
        }
        if (values[0] - 1.0).abs() > ROUNDOFF {
            return Err(invalid(format!("curve must start at 1, got {}", values[0])));
        }
        values[0] = 1.0;
        let mut running = 1.0f64;
        for (k, v) in values.iter_mut().enumerate() {
            if !v.is_finite() || *v < -ROUNDOFF || *v > running + ROUNDOFF {
                return Err(invalid(format!(
                    "curve is not a nonincreasing probability at node {k}: {v} after {running}"
                )));
            }
            *v = v.clamp(0.0, running);
            running = *v;
        }
        Ok(Self {
            grid,
            values,
            generation,
            source,
        })
    }

    /// The no-tracing curve `exp(-int (alpha + sigma))` of a profile.
    pub fn baseline(profile: &AgeProfile, grid: Grid) -> Self {
        let values = grid.ages().map(|a| profile.kappa_tilde_at(a)).collect();
        Self::new(grid, values, Generation::Index(0), CurveSource::Baseline)
            .expect("exponential survival is a valid curve")
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn generation(&self) -> Generation {
        self.generation
    }

    pub fn source(&self) -> CurveSource {
        self.source
    }

    /// Linear interpolation between nodes; zero beyond the grid.
    pub fn at(&self, a: f64) -> f64 {
        if a <= 0.0 {
            return 1.0;
        }
        let x = a / self.grid.h();
        let j = x.floor() as usize;
        if j + 1 >= self.values.len() {
            return if j + 1 == self.values.len() {
                self.values[j]
            } else {
                0.0
            };
        }
        let t = x - j as f64;
        self.values[j] * (1.0 - t) + self.values[j + 1] * t
    }

    /// `max_k |self_k - other_k|` over nodes with age `<= a_end`.
    pub fn sup_distance(&self, other: &KappaCurve, a_end: f64) -> f64 {
        sup_distance(&self.values, &other.values, self.grid.floor_index(a_end))
    }
}

/// The curve describing generation `g` in a solver's output: the matching
/// index, or the stationary limit if the recursion stopped earlier.
pub fn curve_for_generation(curves: &[KappaCurve], g: usize) -> Option<&KappaCurve> {
    curves
        .iter()
        .find(|c| c.generation().index() == g)
        .or_else(|| curves.last().filter(|c| c.generation().is_limit() && c.generation().index() <= g))
}

pub(crate) fn sup_distance(a: &[f64], b: &[f64], last: usize) -> f64 {
    a.iter()
        .zip(b)
        .take(last + 1)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::new(0.1, 1.0).unwrap()
    }

    #[test]
    fn rejects_increasing_values() {
        let mut v = vec![1.0; 11];
        v[5] = 0.5;
        v[6] = 0.7;
        assert!(KappaCurve::new(grid(), v, Generation::Index(0), CurveSource::Baseline).is_err());
    }

    #[test]
    fn cleans_rounding_noise() {
        let mut v: Vec<f64> = (0..11).map(|k| 1.0 - k as f64 * 0.05).collect();
        v[3] += 1e-12;
        v[0] = 1.0 + 1e-13;
        let c = KappaCurve::new(grid(), v, Generation::Index(0), CurveSource::Baseline).unwrap();
        assert_eq!(c.values()[0], 1.0);
        assert!(c.values().windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn rejects_wrong_length_and_start() {
        assert!(matches!(
            KappaCurve::new(grid(), vec![1.0; 5], Generation::Index(0), CurveSource::Baseline),
            Err(Error::GridMismatch { .. })
        ));
        assert!(
            KappaCurve::new(grid(), vec![0.9; 11], Generation::Index(0), CurveSource::Baseline)
                .is_err()
        );
    }

    #[test]
    fn parses_direction_and_mode() {
        assert_eq!("Backward".parse::<Direction>().unwrap(), Direction::Backward);
        assert_eq!("one-step".parse::<Mode>().unwrap(), Mode::OneStep);
        assert!("sideways".parse::<Direction>().is_err());
        assert!(TraceConfig::new(Direction::Full, Mode::Recursive, 51).is_err());
    }
}
