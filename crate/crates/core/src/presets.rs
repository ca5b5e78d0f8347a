//! Figure parameter sets. Every reproduction preset reads its numbers from
//! this table and nowhere else.

use crate::curve::Direction;
use crate::error::Result;
use crate::model::{DelayKernel, Rates};

/// Survival-curve figure: exact solution, first-order curve, Monte Carlo
/// and the untraced baseline for each mode and tracing probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracingFigure {
    pub id: &'static str,
    pub direction: Direction,
    pub beta: f64,
    pub alpha: f64,
    pub sigma: f64,
    pub delay: f64,
    pub probabilities: [f64; 2],
    /// Generation shown for theory and simulation.
    pub generation: u32,
    /// Ages plotted.
    pub age_window: f64,
}

impl TracingFigure {
    pub fn rates(&self, p: f64) -> Result<Rates> {
        Rates::new(self.beta, self.alpha, self.sigma, p)
    }

    pub fn kernel(&self) -> DelayKernel {
        DelayKernel::Dirac { delay: self.delay }
    }
}

pub const FIG1: TracingFigure = TracingFigure {
    id: "fig1",
    direction: Direction::Backward,
    beta: 2.0,
    alpha: 0.1,
    sigma: 0.9,
    delay: 0.5,
    probabilities: [0.3, 0.8],
    generation: 0,
    age_window: 3.0,
};

pub const FIG2: TracingFigure = TracingFigure {
    id: "fig2",
    direction: Direction::Forward,
    generation: 4,
    ..FIG1
};

/// The full-tracing caption lists no rates; those of the other two
/// survival figures are used.
pub const FIG3: TracingFigure = TracingFigure {
    id: "fig3",
    direction: Direction::Full,
    generation: 4,
    ..FIG1
};

/// First-order comparison of a fixed and an exponential delay with the
/// same mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelFigure {
    pub beta: f64,
    pub alpha: f64,
    pub sigma: f64,
    pub p: f64,
    pub mean_delay: f64,
    pub age_window: f64,
}

pub const KERNELS: KernelFigure = KernelFigure {
    beta: 3.0,
    alpha: 1.0,
    sigma: 1.0,
    p: 0.3,
    mean_delay: 1.0,
    age_window: 4.0,
};

/// Endemic SIS run with tracing switched on part way.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SisFigure {
    pub beta: f64,
    pub alpha: f64,
    pub sigma: f64,
    pub p: f64,
    pub tracing_start: f64,
    /// Not stated with the figure; chosen to match the survival figures.
    pub delay: f64,
    pub population: u32,
    pub initial_infected: u32,
    pub horizon: f64,
    pub step: f64,
    pub seeds: u64,
    /// Start of the averaging window for post-tracing levels.
    pub settled_from: f64,
}

pub const SIS: SisFigure = SisFigure {
    beta: 2.0,
    alpha: 0.2,
    sigma: 0.9,
    p: 0.3,
    tracing_start: 15.0,
    delay: 0.5,
    population: 10_000,
    initial_infected: 10,
    horizon: 40.0,
    step: 0.05,
    seeds: 20,
    settled_from: 25.0,
};

/// First-order effect over delay and latency, both in units of the mean
/// infectious period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepFigure {
    pub r0: f64,
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

pub const SWEEP: SweepFigure = SweepFigure {
    r0: 2.0,
    start: 0.0,
    stop: 3.0,
    step: 0.05,
};

pub const FIGURE_IDS: [&str; 6] = ["fig1", "fig2", "fig3", "kernels", "sis", "sweep"];

pub fn tracing_figure(id: &str) -> Option<TracingFigure> {
    [FIG1, FIG2, FIG3].into_iter().find(|f| f.id == id)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn survival_figures_match_captions() {
        for fig in [FIG1, FIG2, FIG3] {
            assert_eq!((fig.beta, fig.alpha, fig.sigma, fig.delay), (2.0, 0.1, 0.9, 0.5));
            assert_eq!(fig.probabilities, [0.3, 0.8]);
            let r = fig.rates(0.0).unwrap();
            assert!((r.r0() - 2.0).abs() < 1e-15);
        }
        assert_eq!(FIG1.generation, 0);
        assert_eq!(FIG2.generation, 4);
        assert_eq!(FIG3.generation, 4);
        assert_eq!(
            [FIG1.direction, FIG2.direction, FIG3.direction],
            [Direction::Backward, Direction::Forward, Direction::Full]
        );
    }

    #[test]
    fn other_figures_match_captions() {
        assert_eq!(
            (KERNELS.sigma, KERNELS.alpha, KERNELS.p, KERNELS.beta, KERNELS.mean_delay),
            (1.0, 1.0, 0.3, 3.0, 1.0)
        );
        assert_eq!((SIS.beta, SIS.alpha, SIS.sigma), (2.0, 0.2, 0.9));
        assert_eq!((SIS.p, SIS.tracing_start), (0.3, 15.0));
        assert_eq!(SWEEP.r0, 2.0);
    }

    #[test]
    fn lookup_by_id() {
        assert_eq!(tracing_figure("fig2"), Some(FIG2));
        assert_eq!(tracing_figure("sis"), None);
        assert!(FIGURE_IDS.iter().all(|id| !id.is_empty()));
    }
}
