//! Solvers for the probability `kappa(a)` of still being infectious at age of
//! infection `a` under delayed contact tracing.
//!
//! The index-case curve (generation 0 of full tracing, or the only curve of
//! backward tracing) solves a Volterra integro-differential equation
//!
//! ```text
//! kappa'(a) = -kappa(a) * (alpha(a) + sigma(a) + p * (phi * W)(a))
//! W(tau)    = int_0^tau beta(tau - c) D(c) dc
//! ```
//!
//! where `D(c)` is the rate at which an infectee of age `c` becomes an index
//! case: `kappa (hazard - alpha)` for recursive tracing and `sigma kappa` for
//! one-step tracing. It is marched node by node: the history part of each
//! convolution is fixed, only the endpoint term depends on the unknown, and a
//! predictor on the tracing hazard is refined by a few corrector passes.
//! `log kappa` is integrated with the trapezoidal rule, so curves stay
//! positive and nonincreasing.
//!
//! Later generations of forward and full tracing follow
//!
//! ```text
//! kappa_i(a) = N(a) * (1 - p * (G * Phi)(a) / Z)
//! G(c)       = int_0^inf beta(b) D_{i-1}(b + c) db
//! Z          = int_0^inf beta(b) kappa_{i-1}(b) db
//! ```
//!
//! which is the marginal over the infector's age `b` of the conditional
//! survival `kappa_i(a|b)`, with the order of the `b` and `c` integrals
//! exchanged. `N` is the survival without tracing by the infector: the
//! no-tracing curve for forward tracing, the index-case curve for full
//! tracing. Hazards are carried along analytically, so the derivative of the
//! previous generation is never differenced numerically.

use crate::curve::{sup_distance, CurveSource, Direction, Generation, KappaCurve, Mode, TraceConfig};
use crate::error::{invalid, Error, Result};
use crate::grid::Grid;
use crate::model::{AgeProfile, DelayKernel, RateTable, Rates};
use crate::quad::{trapz, DiscreteKernel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub grid: Grid,
    /// Sup-norm tolerance for generation convergence and corrector residuals.
    pub fixed_point_tol: f64,
    pub max_corrector_iters: usize,
}

impl SolverSettings {
    pub fn new(grid: Grid) -> Self {
        Self {
            grid,
            fixed_point_tol: 1e-8,
            max_corrector_iters: 3,
        }
    }

    /// Settings on the default grid for constant rates.
    pub fn for_rates(rates: &Rates, kernel: &DelayKernel) -> Result<Self> {
        Ok(Self::new(Grid::for_rates(rates.gamma(), kernel)?))
    }

    pub fn for_profile(profile: &AgeProfile, kernel: &DelayKernel) -> Result<Self> {
        Ok(Self::new(Grid::for_profile(profile, kernel)?))
    }

    fn validate(&self) -> Result<()> {
        if !(self.fixed_point_tol > 0.0) {
            return Err(invalid("fixed_point_tol must be positive"));
        }
        Ok(())
    }
}

/// A solved curve together with its total removal hazard.
#[derive(Debug, Clone)]
pub(crate) struct Solved {
    pub kappa: Vec<f64>,
    pub hazard: Vec<f64>,
}

/// Backward tracing with recursive tracing.
pub fn solve_backward_recursive(
    rates: &Rates,
    kernel: &DelayKernel,
    settings: &SolverSettings,
) -> Result<KappaCurve> {
    solve_backward(&AgeProfile::Constant(*rates), kernel, Mode::Recursive, settings)
}

/// Backward tracing where only directly detected infectees trigger tracing.
pub fn solve_backward_onestep(
    rates: &Rates,
    kernel: &DelayKernel,
    settings: &SolverSettings,
) -> Result<KappaCurve> {
    solve_backward(&AgeProfile::Constant(*rates), kernel, Mode::OneStep, settings)
}

/// Backward tracing for any rate profile. Every generation has the same
/// curve, which is returned as generation 0.
pub fn solve_backward(
    profile: &AgeProfile,
    kernel: &DelayKernel,
    mode: Mode,
    settings: &SolverSettings,
) -> Result<KappaCurve> {
    settings.validate()?;
    let grid = settings.grid;
    let table = profile.on_grid(&grid);
    let dk = DiscreteKernel::new(kernel, &grid);
    let solved = solve_index_case(&table, profile.p(), &dk, mode, settings)?;
    KappaCurve::new(
        grid,
        solved.kappa,
        Generation::Index(0),
        CurveSource::Exact {
            direction: Direction::Backward,
            mode,
        },
    )
}

/// Forward tracing: generations `0..=i_max`, or fewer when the recursion
/// becomes stationary; the last curve is then tagged as the limit.
pub fn solve_forward_generations(
    rates: &Rates,
    kernel: &DelayKernel,
    mode: Mode,
    i_max: usize,
    settings: &SolverSettings,
) -> Result<Vec<KappaCurve>> {
    let config = TraceConfig::new(Direction::Forward, mode, i_max)?;
    solve(&AgeProfile::Constant(*rates), kernel, &config, settings)
}

/// Full tracing: generation 0 solves the backward equation and seeds the
/// forward recursion as the no-tracing factor.
pub fn solve_full(
    rates: &Rates,
    kernel: &DelayKernel,
    mode: Mode,
    i_max: usize,
    settings: &SolverSettings,
) -> Result<Vec<KappaCurve>> {
    let config = TraceConfig::new(Direction::Full, mode, i_max)?;
    solve(&AgeProfile::Constant(*rates), kernel, &config, settings)
}

/// Full tracing with age-of-infection dependent rates.
pub fn solve_age_dependent(
    profile: &AgeProfile,
    kernel: &DelayKernel,
    mode: Mode,
    i_max: usize,
    settings: &SolverSettings,
) -> Result<Vec<KappaCurve>> {
    let config = TraceConfig::new(Direction::Full, mode, i_max)?;
    solve(profile, kernel, &config, settings)
}

/// Solves any direction and mode for any rate profile.
pub fn solve(
    profile: &AgeProfile,
    kernel: &DelayKernel,
    config: &TraceConfig,
    settings: &SolverSettings,
) -> Result<Vec<KappaCurve>> {
    if config.direction == Direction::Backward {
        return Ok(vec![solve_backward(profile, kernel, config.mode, settings)?]);
    }
    settings.validate()?;
    let grid = settings.grid;
    let table = profile.on_grid(&grid);
    let dk = DiscreteKernel::new(kernel, &grid);
    let solved = solve_generations(&table, profile.p(), &dk, config, settings)?;
    let source = CurveSource::Exact {
        direction: config.direction,
        mode: config.mode,
    };
    solved
        .into_iter()
        .map(|(generation, s)| KappaCurve::new(grid, s.kappa, generation, source))
        .collect()
}

pub(crate) fn solve_generations(
    table: &RateTable,
    p: f64,
    kernel: &DiscreteKernel,
    config: &TraceConfig,
    settings: &SolverSettings,
) -> Result<Vec<(Generation, Solved)>> {
    let h = settings.grid.h();
    let untraced = match config.direction {
        Direction::Full => solve_index_case(table, p, kernel, config.mode, settings)?,
        _ => no_tracing(table),
    };
    let mut out: Vec<(Generation, Solved)> = vec![(Generation::Index(0), untraced.clone())];
    for i in 1..=config.generations {
        let prev = &out[i - 1].1;
        let next = next_generation(prev, &untraced, table, p, kernel, config.mode, h);
        let diff = sup_distance(&next.kappa, &prev.kappa, next.kappa.len() - 1);
        let stationary = diff < settings.fixed_point_tol;
        out.push((
            if stationary {
                Generation::Limit(i)
            } else {
                Generation::Index(i)
            },
            next,
        ));
        if stationary {
            break;
        }
    }
    Ok(out)
}

fn no_tracing(table: &RateTable) -> Solved {
    Solved {
        kappa: table.kappa_tilde(),
        hazard: table
            .alpha
            .iter()
            .zip(&table.sigma)
            .map(|(a, s)| a + s)
            .collect(),
    }
}

/// Rate at which an individual of the given age becomes an index case.
fn detection_rate(solved: &Solved, table: &RateTable, mode: Mode, k: usize) -> f64 {
    match mode {
        Mode::Recursive => solved.kappa[k] * (solved.hazard[k] - table.alpha[k]).max(0.0),
        Mode::OneStep => table.sigma[k] * solved.kappa[k],
    }
}

/// Marches the index-case equation across the grid.
pub(crate) fn solve_index_case(
    table: &RateTable,
    p: f64,
    kernel: &DiscreteKernel,
    mode: Mode,
    settings: &SolverSettings,
) -> Result<Solved> {
    let grid = settings.grid;
    let n = grid.len();
    let h = grid.h();
    let beta = &table.beta;

    let mut kappa = vec![0.0; n];
    let mut hazard = vec![0.0; n];
    // Rate at which infectees become index cases, its beta-weighted
    // convolution, and the tracing part of the hazard.
    let mut d = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut tr = vec![0.0; n];

    kappa[0] = 1.0;
    hazard[0] = table.alpha[0] + table.sigma[0];
    d[0] = table.sigma[0];
    let mut lambda = 0.0;

    let detection = |kap: f64, trh: f64, k: usize| -> f64 {
        match mode {
            Mode::Recursive => kap * (table.sigma[k] + trh),
            Mode::OneStep => kap * table.sigma[k],
        }
    };

    for j in 1..n {
        let history: f64 = beta[1..j]
            .iter()
            .rev()
            .zip(&d[1..j])
            .map(|(b, x)| b * x)
            .sum();
        let w_part = h * (0.5 * beta[j] * d[0] + history);
        let w_end = 0.5 * h * beta[0];

        // Tracing hazard as a function of W at this node: known part plus a
        // coefficient on W_j when the kernel reaches the endpoint.
        let (tr_part, tr_coef) = match kernel {
            DiscreteKernel::Shift(0) => (0.0, p),
            DiscreteKernel::Shift(m) => (if j >= *m { p * w[j - m] } else { 0.0 }, 0.0),
            DiscreteKernel::Density { phi, .. } => {
                let hist: f64 = phi[1..j]
                    .iter()
                    .rev()
                    .zip(&w[1..j])
                    .map(|(f, x)| f * x)
                    .sum();
                (p * h * (0.5 * phi[j] * w[0] + hist), p * 0.5 * h * phi[0])
            }
        };

        let evaluate = |trh: f64| -> (f64, f64, f64, f64) {
            let lam = lambda + 0.5 * h * (tr[j - 1] + trh);
            let kap = (-table.base_log[j] - lam).exp();
            let dj = detection(kap, trh, j);
            let wj = w_part + w_end * dj;
            (lam, kap, dj, wj)
        };

        let mut trh = if tr_coef == 0.0 {
            tr_part
        } else {
            let guess = if j >= 2 {
                2.0 * tr[j - 1] - tr[j - 2]
            } else {
                tr[j - 1]
            };
            let mut trh = guess.max(0.0);
            let mut converged = false;
            let mut residual = f64::INFINITY;
            for _ in 0..=settings.max_corrector_iters {
                let (_, _, _, wj) = evaluate(trh);
                let next = tr_part + tr_coef * wj;
                residual = (next - trh).abs();
                trh = next;
                if residual <= settings.fixed_point_tol * (1.0 + next.abs()) {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(Error::SolverFailure {
                    age: grid.age(j),
                    residual,
                });
            }
            trh
        };
        trh = trh.max(0.0);
        let (lam, kap, dj, wj) = evaluate(trh);
        lambda = lam;
        kappa[j] = kap;
        d[j] = dj;
        w[j] = wj;
        tr[j] = trh;
        hazard[j] = table.alpha[j] + table.sigma[j] + trh;
    }
    Ok(Solved { kappa, hazard })
}

/// One step of the generation recursion.
fn next_generation(
    prev: &Solved,
    untraced: &Solved,
    table: &RateTable,
    p: f64,
    kernel: &DiscreteKernel,
    mode: Mode,
    h: f64,
) -> Solved {
    let n = prev.kappa.len();
    let d: Vec<f64> = (0..n).map(|k| detection_rate(prev, table, mode, k)).collect();
    let g = infector_detection_weight(&table.beta, &d, h);
    let weighted: Vec<f64> = table
        .beta
        .iter()
        .zip(&prev.kappa)
        .map(|(b, k)| b * k)
        .collect();
    let z = trapz(&weighted, h);

    if z <= 0.0 || p == 0.0 {
        return untraced.clone();
    }
    let traced = kernel.convolve_cdf(&g, h);
    let mut traced_rate = kernel.convolve(&g, h);
    if let DiscreteKernel::Shift(m) = kernel {
        // The traced hazard jumps at the delay; the node on the jump takes
        // the mean of both sides so later quadratures stay second order.
        if *m > 0 && *m < n {
            traced_rate[*m] *= 0.5;
        }
    }

    let mut kappa = vec![0.0; n];
    let mut hazard = vec![0.0; n];
    for k in 0..n {
        let m = (1.0 - p * traced[k] / z).max(0.0);
        kappa[k] = untraced.kappa[k] * m;
        hazard[k] = if m > 0.0 {
            untraced.hazard[k] + p * traced_rate[k] / (z * m)
        } else {
            f64::INFINITY
        };
    }
    Solved { kappa, hazard }
}

/// `G(c) = int_0^inf beta(b) D(b + c) db`, truncated at the grid end.
fn infector_detection_weight(beta: &[f64], d: &[f64], h: f64) -> Vec<f64> {
    let n = d.len();
    (0..n)
        .map(|c| {
            let len = n - c;
            if len < 2 {
                return 0.0;
            }
            let inner: f64 = beta[1..len - 1]
                .iter()
                .zip(&d[c + 1..n - 1])
                .map(|(b, x)| b * x)
                .sum();
            h * (0.5 * (beta[0] * d[c] + beta[len - 1] * d[n - 1]) + inner)
        })
        .collect()
}
