use crate::error::{invalid, Result};
use crate::model::{AgeProfile, DelayKernel};

/// Uniform age grid `0, h, 2h, ..., a_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    h: f64,
    n: usize,
}

impl Grid {
    /// `a_max` is rounded to the nearest multiple of `h`.
    pub fn new(h: f64, a_max: f64) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(invalid(format!("grid step must be positive, got {h}")));
        }
        if !(a_max.is_finite() && a_max >= 10.0 * h * (1.0 - 1e-12)) {
            return Err(invalid(format!(
                "grid end {a_max} must be at least ten steps ({})",
                10.0 * h
            )));
        }
        let n = (a_max / h).round() as usize + 1;
        Ok(Self { h, n })
    }

    /// Default grid for constant rates: `h = min(0.01/gamma, T/10)` and
    /// `a_max = 25/gamma`. For a fixed delay the step is reduced further so
    /// that the delay is an exact multiple of `h`.
    pub fn for_rates(gamma: f64, kernel: &DelayKernel) -> Result<Self> {
        Self::for_scales(gamma, kernel, 0.0)
    }

    pub fn for_profile(profile: &AgeProfile, kernel: &DelayKernel) -> Result<Self> {
        let (_, alpha, sigma) = profile.asymptotic();
        Self::for_scales(alpha + sigma, kernel, profile.latency())
    }

    fn for_scales(gamma: f64, kernel: &DelayKernel, latency: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(invalid("removal rate must be positive"));
        }
        let t = kernel.mean();
        let mut h = 0.01 / gamma;
        if t > 0.0 {
            h = h.min(t / 10.0);
        }
        if let DelayKernel::Dirac { delay } = kernel {
            if *delay > 0.0 {
                h = delay / (delay / h - 1e-9).ceil();
            }
        }
        if latency > 0.0 && !is_multiple(latency, h) {
            // Largest step below h dividing the latency, and the delay too if
            // one such step exists within a factor of 20.
            let first = (latency / h - 1e-9).ceil() as usize;
            let fits = |c: f64| match kernel {
                DelayKernel::Dirac { delay } => is_multiple(*delay, c),
                _ => true,
            };
            h = (first..first * 20)
                .map(|j| latency / j as f64)
                .find(|&c| fits(c))
                .unwrap_or(h);
        }
        let a_max = 25.0 / gamma + latency;
        Self::new(h, (a_max / h).ceil() * h)
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn a_max(&self) -> f64 {
        (self.n - 1) as f64 * self.h
    }

    pub fn age(&self, k: usize) -> f64 {
        k as f64 * self.h
    }

    pub fn ages(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |k| self.age(k))
    }

    /// Nearest node index to `a` and the snapped age.
    pub fn snap(&self, a: f64) -> (usize, f64) {
        let m = (a / self.h).round().max(0.0) as usize;
        (m, m as f64 * self.h)
    }

    /// Index of the last node with age `<= a`.
    pub fn floor_index(&self, a: f64) -> usize {
        (((a / self.h) + 1e-9).floor().max(0.0) as usize).min(self.n - 1)
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        self.n == other.n && (self.h - other.h).abs() <= 1e-15 * self.h.max(other.h)
    }
}

fn is_multiple(x: f64, h: f64) -> bool {
    let r = x / h;
    (r - r.round()).abs() < 1e-9
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn automatic_step_divides_delay_and_latency() {
        let rates = crate::model::Rates::new(0.2, 0.0, 0.908, 0.0).unwrap();
        let profile = AgeProfile::fixed_latency(rates, 0.6000000000000001).unwrap();
        let g = Grid::for_profile(&profile, &DelayKernel::dirac(0.8).unwrap()).unwrap();
        assert!(is_multiple(0.6, g.h()) && is_multiple(0.8, g.h()));
        assert!(g.h() <= 0.01 / 0.908);
    }

    #[test]
    fn default_grid_resolves_removal_and_delay() {
        let g = Grid::for_rates(1.0, &DelayKernel::dirac(0.5).unwrap()).unwrap();
        assert!((g.h() - 0.01).abs() < 1e-15);
        assert!((g.a_max() - 25.0).abs() < 1e-9);
        assert_eq!(g.len(), 2501);
        assert!((-1.0f64 * g.a_max()).exp() < 1e-10);

        let g = Grid::for_rates(1.0, &DelayKernel::exponential(0.05).unwrap()).unwrap();
        assert!((g.h() - 0.005).abs() < 1e-15);
    }

    #[test]
    fn fixed_delay_is_a_node_multiple() {
        let g = Grid::for_rates(1.0, &DelayKernel::dirac(0.333).unwrap()).unwrap();
        let r = 0.333 / g.h();
        assert!((r - r.round()).abs() < 1e-9);
        assert!(g.h() <= 0.01);
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(Grid::new(0.0, 1.0).is_err());
        assert!(Grid::new(0.1, 0.5).is_err());
        assert!(Grid::new(0.1, 1.0).is_ok());
    }
}
