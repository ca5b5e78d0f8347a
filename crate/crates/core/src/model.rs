//! Epidemiological parameters, tracing-delay kernels and age-of-infection
//! rate profiles.

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::grid::Grid;

/// Constant contact, recovery and tracing parameters.
///
/// `beta` is the contact rate, `alpha` the rate of recovery without
/// diagnosis, `sigma` the rate of recovery with direct diagnosis and `p`
/// the per-edge tracing probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    beta: f64,
    alpha: f64,
    sigma: f64,
    p: f64,
}

impl Rates {
    pub fn new(beta: f64, alpha: f64, sigma: f64, p: f64) -> Result<Self> {
        for (name, v) in [("beta", beta), ("alpha", alpha), ("sigma", sigma)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if alpha + sigma <= 0.0 {
            return Err(invalid("alpha + sigma must be positive"));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(invalid(format!("p must lie in [0, 1], got {p}")));
        }
        Ok(Self {
            beta,
            alpha,
            sigma,
            p,
        })
    }

    /// Builds rates from the basic reproduction number, the total removal
    /// rate and the fraction of directly observed cases.
    pub fn from_r0(r0: f64, gamma: f64, p_obs: f64, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_obs) {
            return Err(invalid(format!("p_obs must lie in [0, 1], got {p_obs}")));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(invalid(format!("gamma must be positive, got {gamma}")));
        }
        Self::new(r0 * gamma, (1.0 - p_obs) * gamma, p_obs * gamma, p)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Total removal rate without tracing.
    pub fn gamma(&self) -> f64 {
        self.alpha + self.sigma
    }

    /// Probability that a recovering case is observed directly.
    pub fn p_obs(&self) -> f64 {
        self.sigma / self.gamma()
    }

    /// Basic reproduction number `beta / (alpha + sigma)`.
    pub fn r0(&self) -> f64 {
        self.beta / self.gamma()
    }

    pub fn with_p(&self, p: f64) -> Result<Self> {
        Self::new(self.beta, self.alpha, self.sigma, p)
    }

    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        Self::new(beta, self.alpha, self.sigma, self.p)
    }
}

/// Survival without tracing, `exp(-gamma a)` for `a >= 0` and zero for
/// negative ages.
pub fn kappa_hat(a: f64, gamma: f64) -> f64 {
    if a < 0.0 {
        0.0
    } else {
        (-gamma * a).exp()
    }
}

impl std::fmt::Display for DelayKernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DelayKernel::Dirac { delay } => write!(f, "dirac:{delay}"),
            DelayKernel::Exponential { mean } => write!(f, "exp:{mean}"),
            DelayKernel::Tabulated { step, density } => {
                write!(f, "table:{step}:")?;
                for (j, v) in density.iter().enumerate() {
                    if j > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{v}")?;
                }
                Ok(())
            }
        }
    }
}

/// Parses `dirac:T`, `exp:MEAN` or `table:STEP:d0,d1,...`.
impl std::str::FromStr for DelayKernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let num = |v: &str| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad number '{v}' in delay '{s}'")))
        };
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("delay '{s}' lacks a ':'")))?;
        match kind.trim().to_ascii_lowercase().as_str() {
            "dirac" | "fixed" => Self::dirac(num(rest)?),
            "exp" | "exponential" => Self::exponential(num(rest)?),
            "table" => {
                let (step, values) = rest.split_once(':').ok_or_else(|| {
                    Error::Parse(format!("table delay '{s}' needs STEP:VALUES"))
                })?;
                let density = values.split(',').map(num).collect::<Result<Vec<_>>>()?;
                Self::tabulated(num(step)?, density)
            }
            other => Err(Error::Parse(format!("unknown delay kind '{other}'"))),
        }
    }
}

/// Distribution of the delay between detection of an index case and the
/// tracing attempt on one of its contacts.
#[derive(Debug, Clone, PartialEq)]
pub enum DelayKernel {
    /// Fixed delay.
    Dirac { delay: f64 },
    /// Exponentially distributed delay with the given mean.
    Exponential { mean: f64 },
    /// Piecewise-linear density sampled at `j * step`, zero beyond the table.
    Tabulated { step: f64, density: Vec<f64> },
}

impl DelayKernel {
    pub fn dirac(delay: f64) -> Result<Self> {
        if !(delay.is_finite() && delay >= 0.0) {
            return Err(invalid(format!("delay must be finite and >= 0, got {delay}")));
        }
        Ok(DelayKernel::Dirac { delay })
    }

    /// An exponential delay with mean zero degenerates to immediate tracing
    /// and is returned as `Dirac(0)`.
    pub fn exponential(mean: f64) -> Result<Self> {
        if !(mean.is_finite() && mean >= 0.0) {
            return Err(invalid(format!("mean delay must be finite and >= 0, got {mean}")));
        }
        if mean == 0.0 {
            return Ok(DelayKernel::Dirac { delay: 0.0 });
        }
        Ok(DelayKernel::Exponential { mean })
    }

    pub fn tabulated(step: f64, density: Vec<f64>) -> Result<Self> {
        if !(step.is_finite() && step > 0.0) {
            return Err(invalid(format!("table step must be positive, got {step}")));
        }
        if density.len() < 2 {
            return Err(invalid("a tabulated density needs at least two samples"));
        }
        if density.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(invalid("tabulated densities must be finite and nonnegative"));
        }
        let mass = crate::quad::trapz(&density, step);
        if (mass - 1.0).abs() > 1e-6 {
            return Err(invalid(format!(
                "tabulated density integrates to {mass}, expected 1 within 1e-6"
            )));
        }
        Ok(DelayKernel::Tabulated { step, density })
    }

    /// Samples an exponential density on a table; the result is renormalised
    /// so that its trapezoidal mass is exactly one.
    pub fn tabulate_exponential(mean: f64, step: f64, len: usize) -> Result<Self> {
        if !(mean > 0.0) {
            return Err(invalid("mean must be positive"));
        }
        let mut density: Vec<f64> = (0..len)
            .map(|j| (-(j as f64) * step / mean).exp() / mean)
            .collect();
        let mass = crate::quad::trapz(&density, step);
        density.iter_mut().for_each(|v| *v /= mass);
        Self::tabulated(step, density)
    }

    pub fn mean(&self) -> f64 {
        match self {
            DelayKernel::Dirac { delay } => *delay,
            DelayKernel::Exponential { mean } => *mean,
            DelayKernel::Tabulated { step, density } => {
                let weighted: Vec<f64> = density
                    .iter()
                    .enumerate()
                    .map(|(j, d)| j as f64 * step * d)
                    .collect();
                crate::quad::trapz(&weighted, *step)
            }
        }
    }

    /// True when a positive fraction of tracing attempts happens without
    /// any delay.
    pub fn has_atom_at_zero(&self) -> bool {
        matches!(self, DelayKernel::Dirac { delay } if *delay == 0.0)
    }

    /// Cumulative distribution `P(delay <= a)`.
    pub fn cdf(&self, a: f64) -> f64 {
        if a < 0.0 {
            return 0.0;
        }
        match self {
            DelayKernel::Dirac { delay } => {
                if a >= *delay {
                    1.0
                } else {
                    0.0
                }
            }
            DelayKernel::Exponential { mean } => 1.0 - (-a / mean).exp(),
            DelayKernel::Tabulated { step, density } => {
                let x = a / step;
                let last = density.len() - 1;
                let j = (x.floor() as usize).min(last);
                let mut mass = 0.0;
                for i in 0..j {
                    mass += 0.5 * step * (density[i] + density[i + 1]);
                }
                if j < last {
                    let t = (x - j as f64) * step;
                    let slope = (density[j + 1] - density[j]) / step;
                    mass += density[j] * t + 0.5 * slope * t * t;
                }
                mass.min(1.0)
            }
        }
    }

    /// Density at `a`, or `None` for the fixed delay.
    pub fn density(&self, a: f64) -> Option<f64> {
        if a < 0.0 {
            return Some(0.0);
        }
        match self {
            DelayKernel::Dirac { .. } => None,
            DelayKernel::Exponential { mean } => Some((-a / mean).exp() / mean),
            DelayKernel::Tabulated { step, density } => {
                let x = a / step;
                let j = x.floor() as usize;
                if j + 1 >= density.len() {
                    return Some(if j + 1 == density.len() && x == j as f64 {
                        density[j]
                    } else {
                        0.0
                    });
                }
                let t = x - j as f64;
                Some(density[j] * (1.0 - t) + density[j + 1] * t)
            }
        }
    }

    /// Draws one delay.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            DelayKernel::Dirac { delay } => *delay,
            DelayKernel::Exponential { mean } => mean * standard_exp(rng),
            DelayKernel::Tabulated { step, density } => {
                let u: f64 = rng.random::<f64>();
                sample_linear_density(*step, density, u)
            }
        }
    }
}

pub(crate) fn standard_exp<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // 1 - U lies in (0, 1], so the logarithm is finite.
    -(1.0 - rng.random::<f64>()).ln()
}

/// Inverse CDF of a piecewise-linear density table.
fn sample_linear_density(step: f64, density: &[f64], u: f64) -> f64 {
    let mut acc = 0.0;
    for j in 0..density.len() - 1 {
        let piece = 0.5 * step * (density[j] + density[j + 1]);
        if acc + piece >= u && piece > 0.0 {
            // Solve d0 t + slope t^2 / 2 = u - acc for t in [0, step].
            let target = u - acc;
            let d0 = density[j];
            let slope = (density[j + 1] - d0) / step;
            let t = if slope.abs() < 1e-14 {
                target / d0
            } else {
                let disc = (d0 * d0 + 2.0 * slope * target).max(0.0);
                (disc.sqrt() - d0) / slope
            };
            return j as f64 * step + t.clamp(0.0, step);
        }
        acc += piece;
    }
    (density.len() - 1) as f64 * step
}

/// Age-of-infection dependent rates.
#[derive(Debug, Clone, PartialEq)]
pub enum AgeProfile {
    Constant(Rates),
    /// All rates vanish on `[0, latency]` and take the constant values
    /// afterwards.
    FixedLatency { rates: Rates, latency: f64 },
    /// Piecewise-linear rates sampled at `j * step`, held at the last value
    /// beyond the table.
    Tabulated {
        step: f64,
        beta: Vec<f64>,
        alpha: Vec<f64>,
        sigma: Vec<f64>,
        p: f64,
    },
}

impl AgeProfile {
    pub fn fixed_latency(rates: Rates, latency: f64) -> Result<Self> {
        if !(latency.is_finite() && latency >= 0.0) {
            return Err(invalid(format!("latency must be finite and >= 0, got {latency}")));
        }
        Ok(AgeProfile::FixedLatency { rates, latency })
    }

    pub fn tabulated(
        step: f64,
        beta: Vec<f64>,
        alpha: Vec<f64>,
        sigma: Vec<f64>,
        p: f64,
    ) -> Result<Self> {
        if !(step.is_finite() && step > 0.0) {
            return Err(invalid("table step must be positive"));
        }
        let n = beta.len();
        if n < 2 || alpha.len() != n || sigma.len() != n {
            return Err(invalid("rate tables need equal lengths of at least two"));
        }
        if beta
            .iter()
            .chain(&alpha)
            .chain(&sigma)
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return Err(invalid("tabulated rates must be finite and nonnegative"));
        }
        if alpha[n - 1] + sigma[n - 1] <= 0.0 {
            return Err(invalid("removal rate must be positive at the end of the table"));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(invalid(format!("p must lie in [0, 1], got {p}")));
        }
        Ok(AgeProfile::Tabulated {
            step,
            beta,
            alpha,
            sigma,
            p,
        })
    }

    pub fn p(&self) -> f64 {
        match self {
            AgeProfile::Constant(r) | AgeProfile::FixedLatency { rates: r, .. } => r.p(),
            AgeProfile::Tabulated { p, .. } => *p,
        }
    }

    pub fn with_p(&self, p: f64) -> Result<Self> {
        Ok(match self {
            AgeProfile::Constant(r) => AgeProfile::Constant(r.with_p(p)?),
            AgeProfile::FixedLatency { rates, latency } => AgeProfile::FixedLatency {
                rates: rates.with_p(p)?,
                latency: *latency,
            },
            AgeProfile::Tabulated {
                step,
                beta,
                alpha,
                sigma,
                ..
            } => AgeProfile::tabulated(*step, beta.clone(), alpha.clone(), sigma.clone(), p)?,
        })
    }

    /// Rates reached at large ages; used for tail corrections.
    pub fn asymptotic(&self) -> (f64, f64, f64) {
        match self {
            AgeProfile::Constant(r) | AgeProfile::FixedLatency { rates: r, .. } => {
                (r.beta(), r.alpha(), r.sigma())
            }
            AgeProfile::Tabulated {
                beta, alpha, sigma, ..
            } => {
                let n = beta.len() - 1;
                (beta[n], alpha[n], sigma[n])
            }
        }
    }

    pub fn latency(&self) -> f64 {
        match self {
            AgeProfile::FixedLatency { latency, .. } => *latency,
            _ => 0.0,
        }
    }

    /// Supremum of the contact rate, used for thinning.
    pub fn beta_max(&self) -> f64 {
        match self {
            AgeProfile::Constant(r) | AgeProfile::FixedLatency { rates: r, .. } => r.beta(),
            AgeProfile::Tabulated { beta, .. } => beta.iter().cloned().fold(0.0, f64::max),
        }
    }

    pub fn beta_at(&self, a: f64) -> f64 {
        self.rate_at(a, |r| r.beta(), 0)
    }

    pub fn alpha_at(&self, a: f64) -> f64 {
        self.rate_at(a, |r| r.alpha(), 1)
    }

    pub fn sigma_at(&self, a: f64) -> f64 {
        self.rate_at(a, |r| r.sigma(), 2)
    }

    fn rate_at(&self, a: f64, pick: impl Fn(&Rates) -> f64, which: usize) -> f64 {
        match self {
            AgeProfile::Constant(r) => pick(r),
            AgeProfile::FixedLatency { rates, latency } => {
                if a > *latency {
                    pick(rates)
                } else {
                    0.0
                }
            }
            AgeProfile::Tabulated {
                step,
                beta,
                alpha,
                sigma,
                ..
            } => {
                let table = [beta, alpha, sigma][which];
                interp_hold(*step, table, a)
            }
        }
    }

    /// `int_0^a alpha + sigma`.
    pub fn removal_integral(&self, a: f64) -> f64 {
        if a <= 0.0 {
            return 0.0;
        }
        match self {
            AgeProfile::Constant(r) => r.gamma() * a,
            AgeProfile::FixedLatency { rates, latency } => rates.gamma() * (a - latency).max(0.0),
            AgeProfile::Tabulated {
                step, alpha, sigma, ..
            } => {
                let total: Vec<f64> = alpha.iter().zip(sigma).map(|(x, y)| x + y).collect();
                integral_linear_hold(*step, &total, a)
            }
        }
    }

    /// `exp(-int_0^a alpha + sigma)`: survival without tracing.
    pub fn kappa_tilde_at(&self, a: f64) -> f64 {
        if a < 0.0 {
            0.0
        } else {
            (-self.removal_integral(a)).exp()
        }
    }

    /// Samples the rates on `grid`.
    ///
    /// A latency step that falls on a node gets the mean of its one-sided
    /// limits there, which keeps trapezoidal integrals across the jump
    /// second-order accurate. A latency that is not a node multiple is
    /// snapped to the nearest node.
    pub(crate) fn on_grid(&self, grid: &Grid) -> RateTable {
        let n = grid.len();
        let mut table = RateTable {
            beta: vec![0.0; n],
            alpha: vec![0.0; n],
            sigma: vec![0.0; n],
            base_log: vec![0.0; n],
        };
        match self {
            AgeProfile::FixedLatency { rates, latency } => {
                let (m, snapped) = grid.snap(*latency);
                if (snapped - latency).abs() > 1e-12 {
                    log::warn!("latency {latency} snapped to grid node {snapped}");
                }
                for k in 0..n {
                    let w = match k.cmp(&m) {
                        std::cmp::Ordering::Less => 0.0,
                        std::cmp::Ordering::Equal if m > 0 => 0.5,
                        _ => 1.0,
                    };
                    table.beta[k] = w * rates.beta();
                    table.alpha[k] = w * rates.alpha();
                    table.sigma[k] = w * rates.sigma();
                    table.base_log[k] = rates.gamma() * (grid.age(k) - snapped).max(0.0);
                }
            }
            _ => {
                for k in 0..n {
                    let a = grid.age(k);
                    table.beta[k] = self.beta_at(a);
                    table.alpha[k] = self.alpha_at(a);
                    table.sigma[k] = self.sigma_at(a);
                    table.base_log[k] = self.removal_integral(a);
                }
            }
        }
        table
    }
}

impl From<Rates> for AgeProfile {
    fn from(r: Rates) -> Self {
        AgeProfile::Constant(r)
    }
}

fn interp_hold(step: f64, table: &[f64], a: f64) -> f64 {
    if a <= 0.0 {
        return table[0];
    }
    let x = a / step;
    let j = x.floor() as usize;
    if j + 1 >= table.len() {
        return table[table.len() - 1];
    }
    let t = x - j as f64;
    table[j] * (1.0 - t) + table[j + 1] * t
}

fn integral_linear_hold(step: f64, table: &[f64], a: f64) -> f64 {
    let last = table.len() - 1;
    let x = a / step;
    let j = (x.floor() as usize).min(last);
    let mut acc = 0.0;
    for i in 0..j {
        acc += 0.5 * step * (table[i] + table[i + 1]);
    }
    if j < last {
        let t = (x - j as f64) * step;
        let slope = (table[j + 1] - table[j]) / step;
        acc += table[j] * t + 0.5 * slope * t * t;
    } else {
        acc += table[last] * (a - last as f64 * step);
    }
    acc
}

/// Rates sampled on a solver grid, together with the exact removal integral.
#[derive(Debug, Clone)]
pub(crate) struct RateTable {
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub sigma: Vec<f64>,
    /// `int_0^a alpha + sigma` at each node.
    pub base_log: Vec<f64>,
}

impl RateTable {
    pub fn kappa_tilde(&self) -> Vec<f64> {
        self.base_log.iter().map(|l| (-l).exp()).collect()
    }
}
