//! First-order expansions in the tracing probability `p` and the
//! reproduction numbers built from them.
//!
//! To first order every curve is `kappa_hat - p * c(a)` with a `p`-free
//! correction. Backward tracing contributes
//! `p_obs beta kappa_hat (1 * phi * (1 - kappa_hat))`, forward tracing
//! `p_obs kappa_hat (phi * (1 - kappa_hat))`, and full tracing the sum.

use crate::curve::{CurveSource, Direction, Generation, KappaCurve};
use crate::error::{invalid, Error, Result};
use crate::grid::Grid;
use crate::model::{kappa_hat, AgeProfile, DelayKernel, Rates};
use crate::quad::{cumulative_raw, kappa_hat_curve, trapz, DiscreteKernel};

/// Below this `|1 - T gamma|` the exponential closed forms lose precision
/// and the quadrature route is used.
const EXP_RESONANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct FirstOrderResult {
    pub curve: KappaCurve,
    /// False when the kernel has an atom at zero delay; the forward
    /// expansion assumes the delay carries no mass near zero.
    pub valid: bool,
    /// Number of nodes where the expansion went negative and was clipped.
    pub clipped: usize,
}

/// How the convolutions of a first-order curve are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Evaluation {
    /// Closed forms for fixed and exponential delays, quadrature otherwise.
    #[default]
    Auto,
    Quadrature,
}

/// Reproduction number without tracing and the first-order reductions from
/// backward and forward tracing: `rct = r0 - p (backward + forward)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RctBreakdown {
    pub r0: f64,
    pub p: f64,
    pub backward_term: f64,
    pub forward_term: f64,
    pub rct: f64,
}

impl RctBreakdown {
    pub(crate) fn new(r0: f64, p: f64, backward_term: f64, forward_term: f64) -> Self {
        Self {
            r0,
            p,
            backward_term,
            forward_term,
            rct: r0 - p * (backward_term + forward_term),
        }
    }

    /// Total first-order reduction `r0 - rct`.
    pub fn effect(&self) -> f64 {
        self.r0 - self.rct
    }
}

pub fn first_order_backward(
    rates: &Rates,
    kernel: &DelayKernel,
    grid: &Grid,
) -> Result<FirstOrderResult> {
    first_order(Direction::Backward, rates, kernel, grid, Evaluation::Auto)
}

pub fn first_order_forward(
    rates: &Rates,
    kernel: &DelayKernel,
    grid: &Grid,
) -> Result<FirstOrderResult> {
    first_order(Direction::Forward, rates, kernel, grid, Evaluation::Auto)
}

/// Generation 0 (backward correction only) and generations `i > 0`
/// (backward plus forward correction) of full tracing.
pub fn first_order_full(
    rates: &Rates,
    kernel: &DelayKernel,
    grid: &Grid,
) -> Result<(FirstOrderResult, FirstOrderResult)> {
    let gen0 = first_order(Direction::Backward, rates, kernel, grid, Evaluation::Auto)?;
    let geni = first_order(Direction::Full, rates, kernel, grid, Evaluation::Auto)?;
    let gen0 = FirstOrderResult {
        curve: KappaCurve::new(
            *grid,
            gen0.curve.into_values(),
            Generation::Index(0),
            CurveSource::FirstOrder {
                direction: Direction::Full,
            },
        )?,
        ..gen0
    };
    Ok((gen0, geni))
}

/// First-order curve for one direction. For full tracing this is the curve
/// of generations `i > 0`.
pub fn first_order(
    direction: Direction,
    rates: &Rates,
    kernel: &DelayKernel,
    grid: &Grid,
    evaluation: Evaluation,
) -> Result<FirstOrderResult> {
    let hat = kappa_hat_curve(grid, rates.gamma());
    let mut correction = vec![0.0; grid.len()];
    if direction.traces_infector() {
        let c = backward_correction(rates, kernel, grid, evaluation);
        correction.iter_mut().zip(&c).for_each(|(x, y)| *x += y);
    }
    if direction.traces_infectees() {
        let c = forward_correction(rates, kernel, grid, evaluation);
        correction.iter_mut().zip(&c).for_each(|(x, y)| *x += y);
    }
    let mut clipped = 0;
    let values: Vec<f64> = hat
        .iter()
        .zip(&correction)
        .map(|(h, c)| {
            let v = h - rates.p() * c;
            if v < 0.0 {
                clipped += 1;
                0.0
            } else {
                v
            }
        })
        .collect();
    if clipped > 0 {
        log::warn!("first-order {direction} curve clipped at zero on {clipped} nodes");
    }
    let generation = match direction {
        Direction::Backward => Generation::Index(0),
        _ => Generation::Index(1),
    };
    let curve = KappaCurve::new(*grid, values, generation, CurveSource::FirstOrder { direction })?;
    Ok(FirstOrderResult {
        curve,
        valid: direction == Direction::Backward || !kernel.has_atom_at_zero(),
        clipped,
    })
}

/// `p_obs beta kappa_hat (1 * phi * (1 - kappa_hat))`.
pub fn backward_correction(
    rates: &Rates,
    kernel: &DelayKernel,
    grid: &Grid,
    evaluation: Evaluation,
) -> Vec<f64> {
    let g = rates.gamma();
    let scale = rates.p_obs() * rates.beta();
    let closed: Option<Box<dyn Fn(f64) -> f64>> = match (evaluation, kernel) {
        (Evaluation::Auto, DelayKernel::Dirac { delay }) => {
            let t = *delay;
            Some(Box::new(move |a: f64| {
                if a > t {
                    (a - t) - (1.0 - kappa_hat(a - t, g)) / g
                } else {
                    0.0
                }
            }))
        }
        (Evaluation::Auto, DelayKernel::Exponential { mean })
            if (1.0 - mean * g).abs() > EXP_RESONANCE =>
        {
            let t = *mean;
            let q = 1.0 - t * g;
            Some(Box::new(move |a: f64| {
                a + t * t * g / q * (1.0 - (-a / t).exp()) - (1.0 - kappa_hat(a, g)) / (g * q)
            }))
        }
        _ => None,
    };
    let inner = match closed {
        Some(f) => grid.ages().map(f).collect(),
        None => {
            log_resonance(kernel, g, evaluation);
            cumulative_raw(&delayed_removal(kernel, grid, g), grid.h())
        }
    };
    grid.ages()
        .zip(inner)
        .map(|(a, s)| scale * kappa_hat(a, g) * s)
        .collect()
}

/// `p_obs kappa_hat (phi * (1 - kappa_hat))`.
pub fn forward_correction(
    rates: &Rates,
    kernel: &DelayKernel,
    grid: &Grid,
    evaluation: Evaluation,
) -> Vec<f64> {
    let g = rates.gamma();
    let closed: Option<Box<dyn Fn(f64) -> f64>> = match (evaluation, kernel) {
        (Evaluation::Auto, DelayKernel::Dirac { delay }) => {
            let t = *delay;
            Some(Box::new(move |a: f64| {
                if a > t {
                    1.0 - kappa_hat(a - t, g)
                } else {
                    0.0
                }
            }))
        }
        (Evaluation::Auto, DelayKernel::Exponential { mean })
            if (1.0 - mean * g).abs() > EXP_RESONANCE =>
        {
            let t = *mean;
            let q = 1.0 - t * g;
            Some(Box::new(move |a: f64| {
                let e = (-a / t).exp();
                (1.0 - e) - (kappa_hat(a, g) - e) / q
            }))
        }
        _ => None,
    };
    let inner = match closed {
        Some(f) => grid.ages().map(f).collect(),
        None => {
            log_resonance(kernel, g, evaluation);
            delayed_removal(kernel, grid, g)
        }
    };
    grid.ages()
        .zip(inner)
        .map(|(a, s)| rates.p_obs() * kappa_hat(a, g) * s)
        .collect()
}

fn log_resonance(kernel: &DelayKernel, gamma: f64, evaluation: Evaluation) {
    if let (Evaluation::Auto, DelayKernel::Exponential { mean }) = (evaluation, kernel) {
        log::info!("mean delay {mean} resonates with removal rate {gamma}: using quadrature");
    }
}

/// `phi * (1 - kappa_hat)` on the grid.
fn delayed_removal(kernel: &DelayKernel, grid: &Grid, gamma: f64) -> Vec<f64> {
    let removed: Vec<f64> = grid.ages().map(|a| 1.0 - kappa_hat(a, gamma)).collect();
    DiscreteKernel::new(kernel, grid).convolve(&removed, grid.h())
}

/// `int_0^inf beta(a) kappa(a) da`, with the tail beyond the grid closed
/// analytically using the asymptotic rates of the profile.
pub fn reproduction_number(curve: &KappaCurve, profile: &AgeProfile) -> f64 {
    let grid = curve.grid();
    let table = profile.on_grid(grid);
    let weighted: Vec<f64> = table
        .beta
        .iter()
        .zip(curve.values())
        .map(|(b, k)| b * k)
        .collect();
    let body = trapz_end_corrected(&weighted, grid.h());
    let (beta, alpha, sigma) = profile.asymptotic();
    let last = curve.values()[grid.len() - 1];
    let tail = if alpha + sigma > 0.0 {
        last * beta / (alpha + sigma)
    } else {
        0.0
    };
    if tail > 1e-4 * (body + tail) {
        log::warn!(
            "reproduction number truncated: tail {tail:e} at age {} exceeds 1e-4 of total",
            grid.a_max()
        );
    }
    body + tail
}

/// Trapezoid rule with the leading Euler-Maclaurin end correction, using
/// one-sided second-order differences for the end slopes.
fn trapz_end_corrected(f: &[f64], h: f64) -> f64 {
    let n = f.len();
    if n < 3 {
        return trapz(f, h);
    }
    let start = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h);
    let end = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * h);
    trapz(f, h) - h * h / 12.0 * (end - start)
}

fn check_rct_inputs(r0: f64, p: f64, p_obs: f64, gamma: f64, delays: &[f64]) -> Result<()> {
    let finite_nonneg = |x: f64| x.is_finite() && x >= 0.0;
    if !finite_nonneg(r0) {
        return Err(invalid(format!("r0 must be nonnegative, got {r0}")));
    }
    if !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&p_obs) {
        return Err(invalid(format!(
            "p and p_obs must lie in [0, 1], got {p} and {p_obs}"
        )));
    }
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(invalid(format!("gamma must be positive, got {gamma}")));
    }
    if let Some(d) = delays.iter().find(|d| !finite_nonneg(**d)) {
        return Err(invalid(format!("delays must be nonnegative, got {d}")));
    }
    Ok(())
}

/// Fixed tracing delay `t`.
pub fn rct_fixed(r0: f64, p: f64, p_obs: f64, gamma: f64, t: f64) -> Result<RctBreakdown> {
    check_rct_inputs(r0, p, p_obs, gamma, &[t])?;
    let k = kappa_hat(t, gamma);
    Ok(RctBreakdown::new(
        r0,
        p,
        0.5 * p_obs * k * r0 * r0,
        0.5 * p_obs * k * r0,
    ))
}

/// Exponentially distributed tracing delay with mean `t`.
pub fn rct_exponential(r0: f64, p: f64, p_obs: f64, gamma: f64, t: f64) -> Result<RctBreakdown> {
    check_rct_inputs(r0, p, p_obs, gamma, &[t])?;
    let k = 1.0 / (1.0 + t * gamma);
    Ok(RctBreakdown::new(
        r0,
        p,
        0.5 * p_obs * k * r0 * r0,
        0.5 * p_obs * k * r0,
    ))
}

/// Fixed latency `ti` (no infectivity or removal before it) and fixed
/// tracing delay `t`.
pub fn rct_latency(
    r0: f64,
    p: f64,
    p_obs: f64,
    gamma: f64,
    t: f64,
    ti: f64,
) -> Result<RctBreakdown> {
    check_rct_inputs(r0, p, p_obs, gamma, &[t, ti])?;
    let m = ti.max(t);
    // kappa_hat(m) / kappa_hat(ti) and kappa_hat(m) / kappa_hat(t), both in (0, 1].
    let over_latency = (-gamma * (m - ti)).exp();
    let over_delay = (-gamma * (m - t)).exp();
    Ok(RctBreakdown::new(
        r0,
        p,
        0.5 * p_obs * r0 * r0 * kappa_hat(t + ti, gamma),
        0.5 * p_obs * r0 * over_latency * (2.0 - over_delay),
    ))
}

/// First-order breakdown for any kernel by quadrature of the two separated
/// correction integrals.
pub fn rct_quadrature(rates: &Rates, kernel: &DelayKernel, grid: &Grid) -> RctBreakdown {
    let beta = rates.beta();
    let integral = |c: Vec<f64>| beta * trapz(&c, grid.h());
    let backward = integral(backward_correction(rates, kernel, grid, Evaluation::Quadrature));
    let forward = integral(forward_correction(rates, kernel, grid, Evaluation::Quadrature));
    RctBreakdown::new(rates.r0(), rates.p(), backward, forward)
}

/// `p`-free first-order corrections `(eta_minus, eta_plus)` for a fixed
/// latency profile and a fixed tracing delay.
pub fn eta_curves(
    profile: &AgeProfile,
    kernel: &DelayKernel,
    grid: &Grid,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let t = match kernel {
        DelayKernel::Dirac { delay } => *delay,
        _ => {
            return Err(Error::Domain(
                "latency corrections need a fixed tracing delay".into(),
            ))
        }
    };
    let (rates, ti) = match profile {
        AgeProfile::FixedLatency { rates, latency } => (*rates, *latency),
        AgeProfile::Constant(rates) => (*rates, 0.0),
        AgeProfile::Tabulated { .. } => {
            return Err(Error::Domain(
                "latency corrections need a fixed latency profile".into(),
            ))
        }
    };
    let g = rates.gamma();
    let p_obs = rates.p_obs();
    let threshold = 2.0 * ti + t;
    let minus = grid
        .ages()
        .map(|a| {
            if a > threshold {
                let s = a - threshold;
                profile.kappa_tilde_at(a) * rates.beta() * p_obs * (s - (1.0 - kappa_hat(s, g)) / g)
            } else {
                0.0
            }
        })
        .collect();
    let plus = grid
        .ages()
        .map(|a| {
            if a > t {
                p_obs * profile.kappa_tilde_at(a) * (1.0 - kappa_hat(a - t, g))
            } else {
                0.0
            }
        })
        .collect();
    Ok((minus, plus))
}

/// `(int beta eta_minus, int beta eta_plus)` on `grid`: the backward and
/// forward first-order terms of a fixed-latency profile.
pub fn eta_integrals(profile: &AgeProfile, kernel: &DelayKernel, grid: &Grid) -> Result<(f64, f64)> {
    let (minus, plus) = eta_curves(profile, kernel, grid)?;
    let table = profile.on_grid(grid);
    let integral = |eta: &[f64]| {
        let w: Vec<f64> = eta.iter().zip(&table.beta).map(|(e, b)| e * b).collect();
        trapz(&w, grid.h())
    };
    Ok((integral(&minus), integral(&plus)))
}
