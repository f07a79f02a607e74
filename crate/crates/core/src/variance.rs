//! Fluctuation variance `U(τ, S)` by Green-function quadrature, its closed
//! form for calls, and the resulting pricing bands.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bs::{call_greeks, norm_pdf, source_raw, MarketParams};
use crate::error::{domain, Error, Result};
use crate::gauss::{adaptive_simpson, rule_128, rule_256, Rule};
use crate::pde::{self, GridSpec};

/// Noise intensity, scale separation and band width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArbitrageParams {
    pub d: f64,
    pub epsilon: f64,
    #[serde(default = "default_band_multiplier")]
    pub band_multiplier: f64,
}

fn default_band_multiplier() -> f64 {
    2.0
}

impl ArbitrageParams {
    pub fn new(d: f64, epsilon: f64) -> Result<Self> {
        let ap = Self {
            d,
            epsilon,
            band_multiplier: default_band_multiplier(),
        };
        ap.validate()?;
        Ok(ap)
    }

    pub fn with_band_multiplier(self, band_multiplier: f64) -> Self {
        Self {
            band_multiplier,
            ..self
        }
    }

    pub fn with_d(self, d: f64) -> Self {
        Self { d, ..self }
    }

    pub fn with_epsilon(self, epsilon: f64) -> Self {
        Self { epsilon, ..self }
    }

    /// `ε = 0` is accepted as the no-arbitrage limit in which bands collapse.
    pub fn validate(&self) -> Result<()> {
        if !(self.d.is_finite() && self.d >= 0.0) {
            return Err(domain(format!("D must be finite and >= 0, got {}", self.d)));
        }
        if !(self.epsilon >= 0.0 && self.epsilon < 1.0) {
            return Err(domain(format!(
                "epsilon must lie in [0, 1), got {}",
                self.epsilon
            )));
        }
        if !(self.band_multiplier.is_finite() && self.band_multiplier > 0.0) {
            return Err(domain(format!(
                "band multiplier must be > 0, got {}",
                self.band_multiplier
            )));
        }
        Ok(())
    }
}

/// Black-Scholes price with its arbitrage band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandResult {
    pub bs_price: f64,
    pub variance_u: f64,
    pub lower: f64,
    pub upper: f64,
    /// Selling price of a band-hedging writer; equal to `upper`.
    pub effective: f64,
}

/// How `U` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum USource {
    Quadrature,
    /// `2Dτ·(K e^{−rτ} Φ(d2))²`, validated against `Quadrature` by the test suite.
    #[default]
    ClosedForm,
    Pde(GridSpec),
}

/// Kernel standard deviations in the first integration window.
const CORE_WIDTH: f64 = 8.0;
/// Tails are added in windows of this many standard deviations up to
/// `MAX_WIDTH`, beyond which the Gaussian underflows.
const MAX_WIDTH: f64 = 40.0;
const TAIL_STOP: f64 = 1e-14;
const DOUBLING_TOL: f64 = 1e-10;

/// `∫ G(S, S1, τ, τ1)·f(S1) dS1`, integrated in `u = ln S1`.
///
/// `breaks` are points in `u` where `f` is kinked or changes rapidly;
/// panels are split there. Convergence is checked by comparing 128- and
/// 256-node Gauss-Legendre on every panel.
pub fn kernel_expectation(
    s: f64,
    tau: f64,
    tau1: f64,
    mp: &MarketParams,
    f: impl Fn(f64) -> f64,
    breaks: &[f64],
) -> Result<f64> {
    if !(tau1 >= 0.0 && tau1 < tau) {
        return Err(domain(format!(
            "kernel integral needs 0 <= tau1 < tau, got tau1={tau1}, tau={tau}"
        )));
    }
    if !(s > 0.0) {
        return Err(domain(format!("spot must be > 0, got {s}")));
    }
    let dt = tau - tau1;
    let sd = mp.volatility * dt.sqrt();
    let centre = s.ln() + mp.log_drift() * dt;
    let integrand = |u: f64| norm_pdf((u - centre) / sd) / sd * f(u.exp());

    let mut last = (0.0, 0.0);
    for panels in [1usize, 4, 16] {
        let seg = |a: f64, b: f64| segment(a, b, breaks, panels, &integrand);
        let (mut coarse, mut fine) = seg(centre - CORE_WIDTH * sd, centre + CORE_WIDTH * sd);
        let mut width = CORE_WIDTH;
        while width < MAX_WIDTH {
            let next = (width + CORE_WIDTH).min(MAX_WIDTH);
            let (lc, lf) = seg(centre - next * sd, centre - width * sd);
            let (rc, rf) = seg(centre + width * sd, centre + next * sd);
            coarse += lc + rc;
            fine += lf + rf;
            width = next;
            if (lf + rf).abs() <= TAIL_STOP * fine.abs() {
                break;
            }
        }
        if (coarse - fine).abs() <= DOUBLING_TOL * fine.abs() {
            return Ok((-mp.rate * dt).exp() * fine);
        }
        last = (coarse, fine);
    }
    Err(Error::Accuracy(format!(
        "kernel quadrature did not converge at S={s}, tau={tau}, tau1={tau1}: {} vs {}",
        last.0, last.1
    )))
}

fn segment(a: f64, b: f64, breaks: &[f64], panels: usize, f: &impl Fn(f64) -> f64) -> (f64, f64) {
    let mut cuts: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|x| *x > a && *x < b)
        .collect();
    cuts.push(a);
    cuts.push(b);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let (r1, r2): (&Rule, &Rule) = (rule_128(), rule_256());
    let (mut c, mut fi) = (0.0, 0.0);
    for w in cuts.windows(2) {
        let h = (w[1] - w[0]) / panels as f64;
        for p in 0..panels {
            let lo = w[0] + p as f64 * h;
            let hi = if p + 1 == panels { w[1] } else { lo + h };
            c += r1.integrate(lo, hi, f);
            fi += r2.integrate(lo, hi, f);
        }
    }
    (c, fi)
}

/// Breakpoints of the call's cash-delta residual at time `tau1`, in `ln S`.
fn call_breaks(mp: &MarketParams, tau1: f64) -> Vec<f64> {
    let centre = mp.strike.ln() - mp.log_drift() * tau1;
    let w = mp.volatility * tau1.sqrt();
    let mut b = vec![centre];
    if w > 0.0 {
        for k in [1.0, 4.0, 8.0] {
            b.push(centre - k * w);
            b.push(centre + k * w);
        }
    }
    b
}

/// Kernel-propagated cash-delta residual,
/// `∫ G(S, S1, τ, τ1)·(S1 ∂V/∂S1 − V)(τ1, S1) dS1`.
///
/// For a call this equals `K e^{−rτ} Φ(d2(τ, S))` for every `τ1`.
pub fn inner_integral(s: f64, tau: f64, tau1: f64, mp: &MarketParams) -> Result<f64> {
    mp.validate()?;
    let (k, r, vol) = (mp.strike, mp.rate, mp.volatility);
    kernel_expectation(
        s,
        tau,
        tau1,
        mp,
        |s1| source_raw(s1, k, r, vol, tau1),
        &call_breaks(mp, tau1),
    )
}

/// `U(τ, S) = 2D ∫₀^τ [inner_integral(S, τ, τ1)]² dτ1` by adaptive Simpson.
///
/// At `τ1 = τ` the kernel is a delta, so the integrand there is the
/// residual itself.
pub fn variance_u_quadrature(
    s: f64,
    tau: f64,
    mp: &MarketParams,
    ap: &ArbitrageParams,
) -> Result<f64> {
    let at = mp.with_spot(s).with_tau(tau);
    at.validate()?;
    ap.validate()?;
    if tau == 0.0 {
        return Ok(0.0);
    }
    let scale = mp.strike * (-mp.rate * tau).exp();
    let tol = 1e-8 * scale * scale * tau;
    let endpoint = source_raw(s, mp.strike, mp.rate, mp.volatility, tau);
    let mut integrand = |tau1: f64| -> Result<f64> {
        if tau1 >= tau {
            return Ok(endpoint * endpoint);
        }
        let v = inner_integral(s, tau, tau1, &at)?;
        Ok(v * v)
    };
    let time_integral = adaptive_simpson(0.0, tau, tol, 20, &mut integrand)?;
    Ok(2.0 * ap.d * time_integral)
}

/// Closed form `2Dτ·(K e^{−rτ} Φ(d2(τ, S)))²` for a call.
pub fn variance_u_closed_call(
    s: f64,
    tau: f64,
    mp: &MarketParams,
    ap: &ArbitrageParams,
) -> Result<f64> {
    mp.with_spot(s).with_tau(tau).validate()?;
    ap.validate()?;
    let st = source_raw(s, mp.strike, mp.rate, mp.volatility, tau);
    Ok(2.0 * ap.d * tau * st * st)
}

/// `U` at `mp.spot`, `mp.tau` from the selected source.
pub fn variance_u(mp: &MarketParams, ap: &ArbitrageParams, source: &USource) -> Result<f64> {
    match source {
        USource::Quadrature => variance_u_quadrature(mp.spot, mp.tau, mp, ap),
        USource::ClosedForm => variance_u_closed_call(mp.spot, mp.tau, mp, ap),
        USource::Pde(gs) => {
            let grid = variance_u_grid(&[mp.spot], &[mp.tau], mp, ap, &USource::Pde(*gs))?;
            Ok(grid[0][0])
        }
    }
}

/// `U` on the tensor grid `taus × spots`; rows are indexed by `tau`.
///
/// The PDE source solves once with a checkpoint per `tau` and interpolates
/// the diagonal to the requested spots.
pub fn variance_u_grid(
    spots: &[f64],
    taus: &[f64],
    mp: &MarketParams,
    ap: &ArbitrageParams,
    source: &USource,
) -> Result<Vec<Vec<f64>>> {
    match source {
        USource::Pde(gs) => {
            let tau_max = taus.iter().copied().fold(0.0, f64::max);
            let positive: Vec<f64> = taus.iter().copied().filter(|t| *t > 0.0).collect();
            let mut sorted = positive.clone();
            sorted.sort_by(f64::total_cmp);
            sorted.dedup();
            let surfaces = if sorted.is_empty() {
                Vec::new()
            } else {
                pde::solve_covariance_pde(&mp.with_tau(tau_max), ap, gs, &sorted)?
            };
            taus.iter()
                .map(|&t| {
                    if t == 0.0 {
                        return Ok(vec![0.0; spots.len()]);
                    }
                    let idx = sorted.iter().position(|c| *c == t).expect("checkpoint");
                    let profile = pde::extract_diagonal(&surfaces[idx])?;
                    spots.iter().map(|&s| profile.interpolate(s)).collect()
                })
                .collect()
        }
        _ => taus
            .iter()
            .map(|&t| {
                spots
                    .par_iter()
                    .map(|&s| match source {
                        USource::Quadrature => variance_u_quadrature(s, t, mp, ap),
                        _ => variance_u_closed_call(s, t, mp, ap),
                    })
                    .collect()
            })
            .collect(),
    }
}

/// Black-Scholes price with the band `V ± m·√(εU)`.
pub fn pricing_band(
    mp: &MarketParams,
    ap: &ArbitrageParams,
    source: &USource,
) -> Result<BandResult> {
    mp.validate()?;
    ap.validate()?;
    let u = variance_u(mp, ap, source)?;
    let bs = call_greeks(mp.spot, mp.strike, mp.rate, mp.volatility, mp.tau).price;
    Ok(band_from(bs, u, ap))
}

pub(crate) fn band_from(bs_price: f64, u: f64, ap: &ArbitrageParams) -> BandResult {
    let u = u.max(0.0);
    let half = ap.band_multiplier * (ap.epsilon * u).sqrt();
    BandResult {
        bs_price,
        variance_u: u,
        lower: bs_price - half,
        upper: bs_price + half,
        effective: bs_price + half,
    }
}

/// Agreement between two routes to `U` over a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateReport {
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Relative error `|a − b| / |b|`, zero when both vanish.
pub fn rel_error(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs()
    }
}

/// Quadrature-vs-closed-form agreement on `spots × taus`; the closed form
/// may only be relied upon when this passes.
pub fn closed_form_gate(
    spots: &[f64],
    taus: &[f64],
    mp: &MarketParams,
    ap: &ArbitrageParams,
    tolerance: f64,
) -> Result<GateReport> {
    let quad = variance_u_grid(spots, taus, mp, ap, &USource::Quadrature)?;
    let closed = variance_u_grid(spots, taus, mp, ap, &USource::ClosedForm)?;
    let max_rel_error = quad
        .iter()
        .flatten()
        .zip(closed.iter().flatten())
        .map(|(q, c)| rel_error(*q, *c))
        .fold(0.0, f64::max);
    Ok(GateReport {
        max_rel_error,
        tolerance,
        passed: max_rel_error <= tolerance,
    })
}
