//! Monte Carlo over the stochastic pricing PDE.
//!
//! For a frozen noise path the PDE is Black-Scholes with the time-dependent
//! rate `r + ξ(τ/ε)` in both the drift and the discounting, so the call price
//! is the closed form at the path-average rate. [`path_price_fd`] solves the
//! same PDE on a grid and exists to validate that reduction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bs::{call_greeks, MarketParams};
use crate::error::{config, domain, Result};
use crate::noise::{mean_var, resample_moments, rng_for, NoiseModel, NoisePath};
use crate::pde::{march_1d, payoff, GridSpec, Profile, Step};
use crate::variance::{rel_error, GateReport};

/// Ensemble law of `V^ε` and of `Z^ε = (V^ε − V_BS)/√ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathStats {
    pub n_paths: usize,
    pub epsilon: f64,
    pub bs_price: f64,
    pub mean_price: f64,
    /// Standard error of `mean_price`.
    pub mean_std_error: f64,
    /// Sample variance of `Z^ε`.
    pub var_scaled_residual: f64,
    /// Bootstrap standard error of `var_scaled_residual`.
    pub std_error: f64,
}

/// Relative tolerance of the exact-vs-grid path price comparison.
pub const EXACT_FD_TOLERANCE: f64 = 5e-4;
const BOOTSTRAP_RESAMPLES: usize = 200;

fn check_common(mp: &MarketParams, epsilon: f64) -> Result<()> {
    mp.validate()?;
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(domain(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    if !(mp.tau > 0.0) {
        return Err(domain("path pricing needs tau > 0"));
    }
    Ok(())
}

/// Option-time intervals `(Δτ, mean ξ over the interval)` covering `[0, τ]`,
/// trapezoidal in the noise samples.
fn interval_rates(path: &NoisePath, epsilon: f64, tau: f64) -> Result<Vec<(f64, f64)>> {
    let max_step = path.correlation_time.min(1.0) / crate::noise::STEPS_PER_CORRELATION;
    if path.dt > max_step * (1.0 + 1e-12) {
        return Err(config(format!(
            "noise step {} does not resolve the correlation time; need <= {max_step}",
            path.dt
        )));
    }
    let horizon = tau / epsilon;
    if path.span() < horizon * (1.0 - 1e-12) {
        return Err(config(format!(
            "noise path spans {} but {horizon} noise-time units are needed",
            path.span()
        )));
    }
    let v = &path.values;
    let full = ((horizon / path.dt) * (1.0 + 1e-12)).floor() as usize;
    let full = full.min(v.len() - 1);
    let mut out: Vec<(f64, f64)> = (0..full)
        .map(|j| (epsilon * path.dt, 0.5 * (v[j] + v[j + 1])))
        .collect();
    let rem = horizon - full as f64 * path.dt;
    if rem > 1e-12 * path.dt && full + 1 < v.len() {
        let end = v[full] + (v[full + 1] - v[full]) * rem / path.dt;
        out.push((epsilon * rem, 0.5 * (v[full] + end)));
    }
    Ok(out)
}

/// Call price along one noise path from the closed form at the
/// path-average rate `r + (1/τ)∫₀^τ ξ(s/ε) ds`.
pub fn path_price_exact(mp: &MarketParams, path: &NoisePath, epsilon: f64) -> Result<f64> {
    check_common(mp, epsilon)?;
    let shift: f64 = interval_rates(path, epsilon, mp.tau)?
        .iter()
        .map(|(dt, xi)| dt * xi)
        .sum::<f64>()
        / mp.tau;
    Ok(call_greeks(mp.spot, mp.strike, mp.rate + shift, mp.volatility, mp.tau).price)
}

/// Call price along one noise path by Crank-Nicolson with the noise frozen
/// on each sampling interval, read off at `S = mp.spot`.
///
/// Each interval is split into `ceil(n_time / intervals)` sub-steps.
pub fn path_price_fd(
    mp: &MarketParams,
    path: &NoisePath,
    epsilon: f64,
    gs: &GridSpec,
) -> Result<f64> {
    check_common(mp, epsilon)?;
    gs.validate()?;
    let intervals = interval_rates(path, epsilon, mp.tau)?;
    let sub = gs.n_time.div_ceil(intervals.len()).max(1);
    let steps: Vec<Step> = intervals
        .iter()
        .flat_map(|&(dt, xi)| {
            std::iter::repeat_n(
                Step {
                    dt: dt / sub as f64,
                    rate: mp.rate + xi,
                },
                sub,
            )
        })
        .collect();
    let spots = gs.price_nodes();
    let v = march_1d(gs, mp.volatility, payoff(&spots, mp.strike), &steps)?;
    Profile {
        tau: mp.tau,
        spots,
        values: v,
    }
    .interpolate(mp.spot)
}

/// Noise-time grid for option horizon `tau`: `(step, intervals)`.
fn noise_grid(nm: &NoiseModel, epsilon: f64, tau: f64) -> (f64, usize) {
    let horizon = tau / epsilon;
    let n = (horizon / nm.max_step()).ceil() as usize;
    (horizon / n as f64, n)
}

/// Path `index` of the ensemble drawn by [`ensemble_stats`] with `seed`.
pub fn ensemble_path(
    nm: &NoiseModel,
    epsilon: f64,
    tau: f64,
    seed: u64,
    index: u64,
) -> Result<NoisePath> {
    nm.validate()?;
    let (dt, n) = noise_grid(nm, epsilon, tau);
    Ok(NoisePath {
        dt,
        values: nm.stream(dt, seed, index).take(n + 1).collect(),
        seed,
        correlation_time: nm.correlation_time(),
    })
}

/// `V^ε` across `n_paths` independent noise paths.
///
/// Paths come from per-index streams of `seed` and are summed in index
/// order, so the result is bit-identical for any thread count.
pub fn ensemble_stats(
    mp: &MarketParams,
    nm: &NoiseModel,
    epsilon: f64,
    n_paths: usize,
    seed: u64,
) -> Result<PathStats> {
    check_common(mp, epsilon)?;
    nm.validate()?;
    if n_paths < 1000 {
        return Err(domain(format!("need at least 1000 paths, got {n_paths}")));
    }
    let (dt, n) = noise_grid(nm, epsilon, mp.tau);
    let prices: Vec<f64> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut s = nm.stream(dt, seed, i);
            let first = s.current();
            let inner = s.sum_next(n);
            let last = s.current();
            let integral = epsilon * dt * (inner + 0.5 * (last - first));
            call_greeks(
                mp.spot,
                mp.strike,
                mp.rate + integral / mp.tau,
                mp.volatility,
                mp.tau,
            )
            .price
        })
        .collect();

    let bs = call_greeks(mp.spot, mp.strike, mp.rate, mp.volatility, mp.tau).price;
    let scale = 1.0 / epsilon.sqrt();
    let z: Vec<f64> = prices.iter().map(|v| (v - bs) * scale).collect();
    let (mean_price, price_var) = mean_var(&prices);
    let (_, z_var) = mean_var(&z);

    let mut rng = rng_for(seed, u64::MAX);
    let nf = n_paths as f64;
    let boot: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| {
            let (m, s2) = resample_moments(&z, &mut rng);
            (s2 - m * m) * nf / (nf - 1.0)
        })
        .collect();
    let (_, bv) = mean_var(&boot);

    Ok(PathStats {
        n_paths,
        epsilon,
        bs_price: bs,
        mean_price,
        mean_std_error: (price_var / nf).sqrt(),
        var_scaled_residual: z_var,
        std_error: bv.sqrt(),
    })
}

/// Worst relative disagreement between [`path_price_exact`] and
/// [`path_price_fd`] over the first `n_paths` ensemble paths.
pub fn exact_fd_gate(
    mp: &MarketParams,
    nm: &NoiseModel,
    epsilon: f64,
    n_paths: usize,
    seed: u64,
    gs: &GridSpec,
) -> Result<GateReport> {
    check_common(mp, epsilon)?;
    let errors: Vec<f64> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let path = ensemble_path(nm, epsilon, mp.tau, seed, i)?;
            let exact = path_price_exact(mp, &path, epsilon)?;
            let fd = path_price_fd(mp, &path, epsilon, gs)?;
            Ok(rel_error(fd, exact))
        })
        .collect::<Result<_>>()?;
    let max_rel_error = errors.into_iter().fold(0.0, f64::max);
    Ok(GateReport {
        max_rel_error,
        tolerance: EXACT_FD_TOLERANCE,
        passed: max_rel_error <= EXACT_FD_TOLERANCE,
    })
}
