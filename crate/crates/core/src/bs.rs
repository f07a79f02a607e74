//! Closed-form Black-Scholes analytics for a European call.
//!
//! Time is the non-dimensional time to maturity `τ ∈ [0, 1]`; rate and
//! volatility are expressed per unit of that time.

use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{domain, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal cumulative distribution.
///
/// Evaluated as `½·erfc(−x/√2)` with the fdlibm rational approximations of
/// `erfc`, which keep about one ulp of relative accuracy across the range,
/// including the lower tail. Absolute error is below 1e-15.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// The `(S, K, r, σ, τ)` tuple consumed by every pricer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketParams {
    pub spot: f64,
    pub strike: f64,
    pub rate: f64,
    pub volatility: f64,
    pub tau: f64,
}

impl MarketParams {
    pub fn new(spot: f64, strike: f64, rate: f64, volatility: f64, tau: f64) -> Result<Self> {
        let mp = Self {
            spot,
            strike,
            rate,
            volatility,
            tau,
        };
        mp.validate()?;
        Ok(mp)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, name: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(domain(format!("{name} must be finite and > 0, got {v}")))
            }
        };
        positive(self.spot, "spot")?;
        positive(self.strike, "strike")?;
        positive(self.volatility, "volatility")?;
        if !(self.rate.is_finite() && self.rate >= 0.0) {
            return Err(domain(format!(
                "rate must be finite and >= 0, got {}",
                self.rate
            )));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(domain(format!("tau must lie in [0, 1], got {}", self.tau)));
        }
        Ok(())
    }

    pub fn with_spot(self, spot: f64) -> Self {
        Self { spot, ..self }
    }

    pub fn with_strike(self, strike: f64) -> Self {
        Self { strike, ..self }
    }

    pub fn with_tau(self, tau: f64) -> Self {
        Self { tau, ..self }
    }

    pub fn with_rate(self, rate: f64) -> Self {
        Self { rate, ..self }
    }

    pub fn with_volatility(self, volatility: f64) -> Self {
        Self { volatility, ..self }
    }

    /// `(d1, d2)` of the closed-form price. Only meaningful for `τ > 0`.
    pub fn d1_d2(&self) -> (f64, f64) {
        d1_d2(self.spot, self.strike, self.rate, self.volatility, self.tau)
    }

    /// Drift of `ln S` under the pricing measure, `r − σ²/2`.
    pub fn log_drift(&self) -> f64 {
        self.rate - 0.5 * self.volatility * self.volatility
    }
}

fn d1_d2(s: f64, k: f64, r: f64, vol: f64, tau: f64) -> (f64, f64) {
    let sd = vol * tau.sqrt();
    let d1 = ((s / k).ln() + (r + 0.5 * vol * vol) * tau) / sd;
    (d1, d1 - sd)
}

/// Price and sensitivities of a European call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreeksRecord {
    pub price: f64,
    pub delta: f64,
    pub gamma: f64,
    pub rho: f64,
    pub vega: f64,
}

/// Closed-form call price and Greeks.
///
/// At `τ = 0` the price is the payoff `max(S − K, 0)`; delta is the payoff
/// subgradient with the midpoint `0.5` at the kink `S = K`, and gamma, rho and
/// vega are zero.
pub fn bs_call(mp: &MarketParams) -> Result<GreeksRecord> {
    mp.validate()?;
    Ok(call_greeks(
        mp.spot,
        mp.strike,
        mp.rate,
        mp.volatility,
        mp.tau,
    ))
}

/// Unvalidated closed form. The rate may be negative here: Monte Carlo paths
/// shift the rate by the path-average noise.
pub(crate) fn call_greeks(s: f64, k: f64, r: f64, vol: f64, tau: f64) -> GreeksRecord {
    if tau == 0.0 {
        let (price, delta) = if s > k {
            (s - k, 1.0)
        } else if s < k {
            (0.0, 0.0)
        } else {
            (0.0, 0.5)
        };
        return GreeksRecord {
            price,
            delta,
            gamma: 0.0,
            rho: 0.0,
            vega: 0.0,
        };
    }
    let (d1, d2) = d1_d2(s, k, r, vol, tau);
    let disc_k = k * (-r * tau).exp();
    let nd1 = norm_cdf(d1);
    let nd2 = norm_cdf(d2);
    let lower = (s - disc_k).max(0.0);
    // in the money, price through parity so the small put carries the
    // volatility dependence without cancellation
    let raw = if s > disc_k {
        (s - disc_k) + (disc_k * norm_cdf(-d2) - s * norm_cdf(-d1))
    } else {
        s * nd1 - disc_k * nd2
    };
    let price = raw.clamp(lower, s);
    let sqrt_tau = tau.sqrt();
    GreeksRecord {
        price,
        delta: nd1,
        gamma: norm_pdf(d1) / (s * vol * sqrt_tau),
        rho: disc_k * tau * nd2,
        vega: s * norm_pdf(d1) * sqrt_tau,
    }
}

/// Cash-delta residual `S·∂V/∂S − V` of the call.
///
/// For `τ > 0` this is evaluated in the cancellation-free form `K·e^{−rτ}·Φ(d2)`.
pub fn source_term(mp: &MarketParams) -> Result<f64> {
    mp.validate()?;
    Ok(source_raw(
        mp.spot,
        mp.strike,
        mp.rate,
        mp.volatility,
        mp.tau,
    ))
}

pub(crate) fn source_raw(s: f64, k: f64, r: f64, vol: f64, tau: f64) -> f64 {
    if tau == 0.0 {
        let g = call_greeks(s, k, r, vol, 0.0);
        return s * g.delta - g.price;
    }
    let (_, d2) = d1_d2(s, k, r, vol, tau);
    k * (-r * tau).exp() * norm_cdf(d2)
}

/// Discounted lognormal transition density from `(τ, S)` back to `(τ1, S1)`,
/// per unit of `S1`.
///
/// Only `mp.rate` and `mp.volatility` are read; spot and maturity come from
/// the explicit arguments.
pub fn green_function(s: f64, s1: f64, tau: f64, tau1: f64, mp: &MarketParams) -> Result<f64> {
    if !(tau1 >= 0.0 && tau1 < tau) {
        return Err(domain(format!(
            "green function needs 0 <= tau1 < tau, got tau1={tau1}, tau={tau}"
        )));
    }
    if !(s > 0.0 && s1 > 0.0) {
        return Err(domain(format!(
            "green function needs S, S1 > 0, got {s}, {s1}"
        )));
    }
    let dt = tau - tau1;
    let var = mp.volatility * mp.volatility * dt;
    let z = (s / s1).ln() + mp.log_drift() * dt;
    Ok((-mp.rate * dt).exp() / (s1 * (2.0 * PI * var).sqrt()) * (-z * z / (2.0 * var)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn reference() -> MarketParams {
        MarketParams::new(20.0, 20.0, 0.1, 0.4, 1.0).unwrap()
    }

    // Composite Gauss-Legendre on the density, independent of erfc.
    fn cdf_by_integration(x: f64) -> f64 {
        let (nodes, weights) = crate::gauss::legendre(64);
        let lo = -40.0f64;
        let panels = 400;
        let h = (x - lo) / panels as f64;
        let mut acc = 0.0;
        for p in 0..panels {
            let a = lo + p as f64 * h;
            for (n, w) in nodes.iter().zip(&weights) {
                acc += 0.5 * h * w * norm_pdf(a + 0.5 * h * (n + 1.0));
            }
        }
        acc
    }

    #[test]
    fn norm_cdf_values() {
        assert_eq!(norm_cdf(0.0), 0.5);
        assert!((norm_cdf(1.96) - 0.975_002_104_851_780).abs() < 1e-13);
        assert!(norm_cdf(-8.0) < 1e-14);
        for &x in &[-12.0, -8.0, -3.3, -1.0, -0.2, 0.4, 1.96, 3.0, 6.0] {
            let oracle = cdf_by_integration(x);
            assert!((norm_cdf(x) - oracle).abs() <= 1e-12, "x={x}");
        }
        assert_relative_eq!(
            norm_cdf(-8.0),
            cdf_by_integration(-8.0),
            max_relative = 1e-10
        );
    }

    #[test]
    fn norm_cdf_monotone() {
        let mut prev = 0.0;
        for i in -4000..=4000 {
            let v = norm_cdf(i as f64 * 0.002);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn call_at_reference_point() {
        let mp = reference();
        let (d1, d2) = mp.d1_d2();
        assert_relative_eq!(d1, 0.45, epsilon = 1e-14);
        assert_relative_eq!(d2, 0.05, epsilon = 1e-14);
        // independent evaluation
        let oracle =
            20.0 * cdf_by_integration(0.45) - 20.0 * (-0.1f64).exp() * cdf_by_integration(0.05);
        let g = bs_call(&mp).unwrap();
        assert_relative_eq!(g.price, oracle, epsilon = 1e-10);
        assert!((g.price - 4.063).abs() < 1e-3);
    }

    #[test]
    fn expiry_is_payoff() {
        let mp = reference().with_tau(0.0);
        let g = bs_call(&mp).unwrap();
        assert_eq!(g.price, 0.0);
        assert_eq!(g.delta, 0.5);
        let itm = bs_call(&mp.with_spot(25.0)).unwrap();
        assert_eq!((itm.price, itm.delta), (5.0, 1.0));
        let otm = bs_call(&mp.with_spot(15.0)).unwrap();
        assert_eq!((otm.price, otm.delta), (0.0, 0.0));
    }

    #[test]
    fn deep_in_the_money() {
        let mp = reference().with_spot(1000.0);
        let g = bs_call(&mp).unwrap();
        assert_relative_eq!(g.price, 1000.0 - 20.0 * (-0.1f64).exp(), epsilon = 1e-10);
        assert!((g.delta - 1.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_params_rejected() {
        for mp in [
            reference().with_spot(0.0),
            reference().with_strike(-1.0),
            reference().with_volatility(0.0),
            reference().with_tau(1.5),
            reference().with_rate(-0.01),
            reference().with_spot(f64::NAN),
        ] {
            assert!(matches!(bs_call(&mp), Err(crate::Error::Domain(_))));
        }
    }

    #[test]
    fn source_term_examples() {
        let mp = reference();
        let g = bs_call(&mp).unwrap();
        let via_greeks = mp.spot * g.delta - g.price;
        let st = source_term(&mp).unwrap();
        assert!((via_greeks - st).abs() < 1e-10);
        assert!((st - 9.410).abs() < 1e-3);
        let mp40 = mp.with_spot(40.0);
        let g40 = bs_call(&mp40).unwrap();
        let st40 = source_term(&mp40).unwrap();
        assert!((40.0 * g40.delta - g40.price - st40).abs() < 1e-10);
        assert!((st40 - 17.42).abs() < 5e-3);
        assert!(source_term(&mp.with_spot(1e-6)).unwrap() < 1e-300);
    }

    #[test]
    fn source_term_identity_grid() {
        let base = reference();
        for i in 0..50 {
            for j in 0..50 {
                let s = 5.0 + 35.0 * i as f64 / 49.0;
                let tau = 0.02 + 0.98 * j as f64 / 49.0;
                let mp = base.with_spot(s).with_tau(tau);
                let g = bs_call(&mp).unwrap();
                let st = source_term(&mp).unwrap();
                assert!(
                    (s * g.delta - g.price - st).abs() <= 1e-10,
                    "S={s} tau={tau}"
                );
            }
        }
    }

    #[test]
    fn green_function_rejects_coincident_times() {
        let mp = reference();
        assert!(green_function(20.0, 20.0, 0.5, 0.5, &mp).is_err());
        assert!(green_function(20.0, 20.0, 0.5, 0.7, &mp).is_err());
        assert!(green_function(20.0, 21.0, 0.5, 0.1, &mp).unwrap() > 0.0);
    }

    fn kernel_moment(s: f64, tau: f64, tau1: f64, f: impl Fn(f64) -> f64) -> f64 {
        // Gauss-Legendre in u = ln S1 over ±10 transition standard deviations.
        let mp = reference();
        let sd = mp.volatility * (tau - tau1).sqrt();
        let centre = s.ln() + mp.log_drift() * (tau - tau1);
        let (nodes, weights) = crate::gauss::legendre(128);
        let panels = 8;
        let (lo, hi) = (centre - 10.0 * sd, centre + 10.0 * sd);
        let h = (hi - lo) / panels as f64;
        let mut acc = 0.0;
        for p in 0..panels {
            let a = lo + p as f64 * h;
            for (n, w) in nodes.iter().zip(&weights) {
                let u = a + 0.5 * h * (n + 1.0);
                let s1 = u.exp();
                acc += 0.5 * h * w * green_function(s, s1, tau, tau1, &mp).unwrap() * s1 * f(s1);
            }
        }
        acc
    }

    #[test]
    fn green_function_moments() {
        for &(s, tau, tau1) in &[(20.0, 1.0, 0.0), (12.0, 0.6, 0.2), (35.0, 0.3, 0.25)] {
            let mass = kernel_moment(s, tau, tau1, |_| 1.0);
            assert_relative_eq!(mass, (-0.1 * (tau - tau1)).exp(), max_relative = 1e-8);
            let first = kernel_moment(s, tau, tau1, |s1| s1);
            assert_relative_eq!(first, s, max_relative = 1e-8);
        }
    }

    #[test]
    fn green_function_concentrates() {
        let f = |s1: f64| (s1 / 10.0).sin() + 0.01 * s1 * s1;
        let got = kernel_moment(20.0, 0.5, 0.5 - 1e-4, f);
        assert_relative_eq!(got, f(20.0), max_relative = 2e-4);
    }
}
