//! Trapezoidal quadrature on uniform grids: running integrals and
//! convolutions with delay kernels.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model::{kappa_hat, AgeProfile, DelayKernel};

/// Trapezoidal integral of samples spaced `h` apart.
pub fn trapz(f: &[f64], h: f64) -> f64 {
    match f.len() {
        0 | 1 => 0.0,
        n => h * (0.5 * (f[0] + f[n - 1]) + f[1..n - 1].iter().sum::<f64>()),
    }
}

/// Running trapezoidal integral `int_0^a f`; `result[0] = 0`.
pub fn cumulative(f: &[f64], grid: &Grid) -> Result<Vec<f64>> {
    check_len(f, grid)?;
    Ok(cumulative_raw(f, grid.h()))
}

pub(crate) fn cumulative_raw(f: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(f.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in f.windows(2) {
        acc += 0.5 * h * (w[0] + w[1]);
        out.push(acc);
    }
    out
}

/// Trapezoidal convolution `(f * g)(a_k) = int_0^{a_k} f(a_k - c) g(c) dc`.
pub(crate) fn conv_trapz(f: &[f64], g: &[f64], h: f64) -> Vec<f64> {
    let n = f.len().min(g.len());
    let mut out = vec![0.0; n];
    for (k, slot) in out.iter_mut().enumerate().skip(1) {
        let inner: f64 = f[1..k]
            .iter()
            .zip(g[1..k].iter().rev())
            .map(|(x, y)| x * y)
            .sum();
        *slot = h * (0.5 * (f[0] * g[k] + f[k] * g[0]) + inner);
    }
    out
}

/// A delay kernel resolved on a solver grid.
#[derive(Debug, Clone)]
pub(crate) enum DiscreteKernel {
    /// Fixed delay of `m` grid steps.
    Shift(usize),
    Density { phi: Vec<f64>, cdf: Vec<f64> },
}

impl DiscreteKernel {
    pub fn new(kernel: &DelayKernel, grid: &Grid) -> Self {
        match kernel {
            DelayKernel::Dirac { delay } => {
                let (m, snapped) = grid.snap(*delay);
                if (snapped - delay).abs() > 1e-12 * delay.max(1.0) {
                    log::warn!("fixed delay {delay} snapped to grid node {snapped}");
                }
                DiscreteKernel::Shift(m)
            }
            DelayKernel::Exponential { mean } => DiscreteKernel::Density {
                phi: grid.ages().map(|a| (-a / mean).exp() / mean).collect(),
                cdf: grid.ages().map(|a| 1.0 - (-a / mean).exp()).collect(),
            },
            DelayKernel::Tabulated { .. } => {
                let mut phi: Vec<f64> = grid
                    .ages()
                    .map(|a| kernel.density(a).unwrap_or(0.0))
                    .collect();
                let mut cdf: Vec<f64> = grid.ages().map(|a| kernel.cdf(a)).collect();
                let kept = cdf[cdf.len() - 1];
                if 1.0 - kept > 1e-6 {
                    log::warn!(
                        "delay table truncated at {}: renormalising lost mass {:e}",
                        grid.a_max(),
                        1.0 - kept
                    );
                    phi.iter_mut().for_each(|v| *v /= kept);
                    cdf.iter_mut().for_each(|v| *v /= kept);
                }
                DiscreteKernel::Density { phi, cdf }
            }
        }
    }

    /// `(phi * f)` on the grid.
    pub fn convolve(&self, f: &[f64], h: f64) -> Vec<f64> {
        match self {
            DiscreteKernel::Shift(m) => shift(f, *m),
            DiscreteKernel::Density { phi, .. } => conv_trapz(phi, f, h),
        }
    }

    /// `(Phi * f)(a) = int_0^a f(c) Phi(a - c) dc` with the cumulative kernel.
    pub fn convolve_cdf(&self, f: &[f64], h: f64) -> Vec<f64> {
        match self {
            DiscreteKernel::Shift(m) => shift(&cumulative_raw(f, h), *m),
            DiscreteKernel::Density { cdf, .. } => conv_trapz(cdf, f, h),
        }
    }
}

fn shift(f: &[f64], m: usize) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![0.0; n];
    if m < n {
        out[m..].copy_from_slice(&f[..n - m]);
    }
    out
}

/// `(phi * f)` on `grid`. A fixed delay is applied as an exact index shift;
/// densities are integrated with the trapezoidal rule.
pub fn convolve(f: &[f64], kernel: &DelayKernel, grid: &Grid) -> Result<Vec<f64>> {
    check_len(f, grid)?;
    Ok(DiscreteKernel::new(kernel, grid).convolve(f, grid.h()))
}

/// `(Phi * f)` where `Phi` is the cumulative delay distribution.
pub fn convolve_cdf(f: &[f64], kernel: &DelayKernel, grid: &Grid) -> Result<Vec<f64>> {
    check_len(f, grid)?;
    Ok(DiscreteKernel::new(kernel, grid).convolve_cdf(f, grid.h()))
}

/// `exp(-gamma a)` sampled on `grid`.
pub fn kappa_hat_curve(grid: &Grid, gamma: f64) -> Vec<f64> {
    grid.ages().map(|a| kappa_hat(a, gamma)).collect()
}

/// `exp(-int_0^a alpha + sigma)` sampled on `grid`; for a fixed latency this
/// is one during the latency and a shifted exponential afterwards.
pub fn kappa_tilde(profile: &AgeProfile, grid: &Grid) -> Vec<f64> {
    grid.ages().map(|a| profile.kappa_tilde_at(a)).collect()
}

fn check_len(f: &[f64], grid: &Grid) -> Result<()> {
    if f.len() != grid.len() {
        return Err(Error::GridMismatch {
            expected: grid.len(),
            found: f.len(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Rates;

    fn grid() -> Grid {
        Grid::new(0.01, 25.0).unwrap()
    }

    #[test]
    fn cumulative_of_constant_is_exact() {
        let g = grid();
        let c = cumulative(&vec![1.0; g.len()], &g).unwrap();
        for (k, v) in c.iter().enumerate() {
            assert!((v - g.age(k)).abs() < 1e-10);
        }
    }

    #[test]
    fn cumulative_of_exponential_is_second_order() {
        let g = grid();
        let c = cumulative(&kappa_hat_curve(&g, 1.0), &g).unwrap();
        let err = g
            .ages()
            .zip(&c)
            .map(|(a, v)| (v - (1.0 - (-a).exp())).abs())
            .fold(0.0, f64::max);
        // Trapezoid error bound h^2/12 * sup|f''| * a_max ~ 2e-5.
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn cumulative_matches_midpoint_oracle() {
        // Independent oracle: composite midpoint rule on a 100x finer grid.
        let g = Grid::new(0.01, 5.0).unwrap();
        let f = |a: f64| (3.0 * a).sin().powi(2) + 0.3 * a;
        let samples: Vec<f64> = g.ages().map(f).collect();
        let c = cumulative(&samples, &g).unwrap();
        for k in (0..g.len()).step_by(50) {
            let a = g.age(k);
            let m = 100 * k;
            let hh = if m > 0 { a / m as f64 } else { 0.0 };
            let mid: f64 = (0..m).map(|j| f((j as f64 + 0.5) * hh) * hh).sum();
            // a sup|f''| / 12 <= 5 * 18 / 12, so the trapezoid error is below 8 h^2.
            assert!((c[k] - mid).abs() < 8.0 * g.h().powi(2), "{k}");
        }
    }

    #[test]
    fn cumulative_then_difference_recovers_f() {
        let g = Grid::new(0.01, 5.0).unwrap();
        let samples: Vec<f64> = g.ages().map(|a| (2.0 * a).cos()).collect();
        let c = cumulative(&samples, &g).unwrap();
        let err = (1..g.len())
            .map(|k| ((c[k] - c[k - 1]) / g.h() - samples[k]).abs())
            .fold(0.0, f64::max);
        assert!(err < 2.0 * g.h(), "{err}");
    }

    #[test]
    fn dirac_convolution_is_an_exact_shift() {
        let g = grid();
        let kernel = DelayKernel::dirac(0.5).unwrap();
        let ones = vec![1.0; g.len()];
        let out = convolve(&ones, &kernel, &g).unwrap();
        for (k, v) in out.iter().enumerate() {
            let expected = if g.age(k) >= 0.5 - 1e-12 { 1.0 } else { 0.0 };
            assert_eq!(*v, expected, "{k}");
        }
        let f: Vec<f64> = g.ages().map(|a| (a * 1.7).sin()).collect();
        let out = convolve(&f, &kernel, &g).unwrap();
        for k in 50..g.len() {
            assert_eq!(out[k], f[k - 50]);
        }
    }

    #[test]
    fn exponential_convolution_matches_analytic() {
        let g = grid();
        let kernel = DelayKernel::exponential(1.0).unwrap();
        let out = convolve(&kappa_hat_curve(&g, 1.0), &kernel, &g).unwrap();
        let err = g
            .ages()
            .zip(&out)
            .map(|(a, v)| (v - a * (-a).exp()).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn tabulated_kernel_matches_exponential_variant() {
        let g = grid();
        let exp = DelayKernel::exponential(1.0).unwrap();
        let tab = DelayKernel::tabulate_exponential(1.0, 0.01, 4000).unwrap();
        let f = kappa_hat_curve(&g, 1.0);
        let a = convolve(&f, &exp, &g).unwrap();
        let b = convolve(&f, &tab, &g).unwrap();
        let sup = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(sup < 1e-4, "{sup}");
    }

    #[test]
    fn grid_mismatch_is_reported() {
        let g = grid();
        assert!(matches!(
            convolve(&[1.0, 2.0], &DelayKernel::dirac(0.5).unwrap(), &g),
            Err(Error::GridMismatch { .. })
        ));
    }

    #[test]
    fn kappa_tilde_matches_kappa_hat_for_constant_profile() {
        let g = grid();
        let r = Rates::new(2.0, 0.1, 0.9, 0.0).unwrap();
        let tilde = kappa_tilde(&AgeProfile::Constant(r), &g);
        let hat = kappa_hat_curve(&g, 1.0);
        assert_eq!(tilde, hat);
        let lat = AgeProfile::fixed_latency(r, 1.0).unwrap();
        assert_eq!(lat.kappa_tilde_at(0.5), 1.0);
        assert!((lat.kappa_tilde_at(1.5) - 0.606_530_659_712_633_4).abs() < 1e-15);
    }
}
