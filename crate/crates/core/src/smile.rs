//! Implied volatility of the band-hedged selling price.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bs::{call_greeks, MarketParams};
use crate::error::{domain, Error, Result};
use crate::variance::{pricing_band, ArbitrageParams, USource};

pub const VOL_LOWER: f64 = 1e-4;
pub const VOL_UPPER: f64 = 10.0;
/// Newton falls back to bisection below this vega.
const VEGA_FLOOR: f64 = 1e-12;
const MAX_ITER: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmilePoint {
    pub strike: f64,
    /// NaN when `converged` is false.
    pub implied_vol: f64,
    pub effective_price: f64,
    pub converged: bool,
}

/// Black-Scholes volatility reproducing `target` for the call described by
/// `mp`; `mp.volatility` is ignored.
///
/// Safeguarded Newton on `[VOL_LOWER, VOL_UPPER]`. The result prices to
/// within `1e-10·S` of `target`.
pub fn implied_vol(target: f64, mp: &MarketParams) -> Result<f64> {
    mp.validate()?;
    if !(mp.tau > 0.0) {
        return Err(domain("implied volatility is undefined at expiry"));
    }
    let (s, k, r, t) = (mp.spot, mp.strike, mp.rate, mp.tau);
    let intrinsic = (s - k * (-r * t).exp()).max(0.0);
    if !(target > intrinsic && target < s) {
        return Err(Error::NoRoot(format!(
            "target {target} outside the no-arbitrage range ({intrinsic}, {s})"
        )));
    }
    let tol = 1e-10 * s;
    let f = |v: f64| call_greeks(s, k, r, v, t).price - target;

    let (mut lo, mut hi) = (VOL_LOWER, VOL_UPPER);
    let f_lo = f(lo);
    if f_lo.abs() <= tol {
        return Ok(lo);
    }
    if f_lo > 0.0 {
        return Err(Error::NoRoot(format!(
            "target {target} below the price at vol {lo}"
        )));
    }
    let f_hi = f(hi);
    if f_hi.abs() <= tol {
        return Ok(hi);
    }
    if f_hi < 0.0 {
        return Err(Error::NoRoot(format!(
            "target {target} above the price at vol {hi}"
        )));
    }

    let mut x = 0.5_f64.clamp(lo, hi);
    for _ in 0..MAX_ITER {
        let g = call_greeks(s, k, r, x, t);
        let fx = g.price - target;
        if fx == 0.0 {
            return Ok(x);
        }
        if fx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let newton = x - fx / g.vega;
        let next = if g.vega > VEGA_FLOOR && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        let step = (next - x).abs();
        x = next;
        if step <= 1e-13 * x.max(1.0) || hi - lo <= 1e-15 {
            break;
        }
    }
    if f(x).abs() <= tol {
        Ok(x)
    } else {
        Err(Error::NoRoot(format!(
            "no volatility reproduces {target} within {tol}"
        )))
    }
}

/// The smile `σ^ε(K)` at fixed spot `s` and maturity `tau`.
///
/// Each strike is priced at the upper band edge with `U` recomputed for that
/// strike; strikes without a root are returned with `converged = false`.
pub fn smile_curve(
    s: f64,
    tau: f64,
    strikes: &[f64],
    base: &MarketParams,
    ap: &ArbitrageParams,
) -> Result<Vec<SmilePoint>> {
    if strikes.is_empty() {
        return Err(domain("strike list is empty"));
    }
    if strikes.iter().any(|k| !(k.is_finite() && *k > 0.0)) {
        return Err(domain("strikes must be positive"));
    }
    if strikes.windows(2).any(|w| w[1] < w[0]) {
        return Err(domain("strikes must be sorted ascending"));
    }
    ap.validate()?;
    strikes
        .par_iter()
        .map(|&k| {
            let mp = base.with_spot(s).with_tau(tau).with_strike(k);
            let band = pricing_band(&mp, ap, &USource::ClosedForm)?;
            let effective_price = band.effective;
            match implied_vol(effective_price, &mp) {
                Ok(v) => Ok(SmilePoint {
                    strike: k,
                    implied_vol: v,
                    effective_price,
                    converged: true,
                }),
                Err(Error::NoRoot(_)) => Ok(SmilePoint {
                    strike: k,
                    implied_vol: f64::NAN,
                    effective_price,
                    converged: false,
                }),
                Err(e) => Err(e),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> MarketParams {
        MarketParams::new(20.0, 20.0, 0.1, 0.4, 1.0).unwrap()
    }

    fn price(mp: &MarketParams, vol: f64) -> f64 {
        call_greeks(mp.spot, mp.strike, mp.rate, vol, mp.tau).price
    }

    #[test]
    fn round_trip() {
        let mp = reference();
        let v = implied_vol(price(&mp, 0.4), &mp).unwrap();
        assert!((v - 0.4).abs() < 1e-8);
        for (k, vol) in [(10.0, 0.5), (40.0, 2.0), (30.0, 0.15), (12.0, 1.3)] {
            let m = mp.with_strike(k);
            let v = implied_vol(price(&m, vol), &m).unwrap();
            assert!((v - vol).abs() < 1e-8, "K={k} vol={vol} got {v}");
        }
    }

    #[test]
    fn intrinsic_limit_hits_lower_bracket() {
        // deep in the money: the price at the lower bracket is intrinsic to machine precision
        let mp = reference().with_strike(10.0);
        let intrinsic = 20.0 - 10.0 * (-0.1_f64).exp();
        let target = intrinsic + 4.0 * f64::EPSILON * 20.0;
        assert_eq!(implied_vol(target, &mp).unwrap(), VOL_LOWER);
    }

    #[test]
    fn band_target() {
        let mp = reference();
        let v = implied_vol(6.72, &mp).unwrap();
        assert!(v > 0.4 && v < 1.0);
        assert!((price(&mp, v) - 6.72).abs() <= 1e-10 * 20.0);
    }

    #[test]
    fn outside_bracket_is_no_root() {
        let mp = reference();
        let intrinsic = 20.0 - 20.0 * (-0.1_f64).exp();
        for t in [intrinsic, intrinsic - 1.0, 20.0, 25.0, f64::NAN] {
            assert!(matches!(implied_vol(t, &mp), Err(Error::NoRoot(_))), "{t}");
        }
        assert!(matches!(
            implied_vol(1.0, &mp.with_tau(0.0)),
            Err(Error::Domain(_))
        ));
    }

    fn strikes() -> Vec<f64> {
        (0..=30)
            .map(|i| 10.0 * 4f64.powf(i as f64 / 30.0))
            .collect()
    }

    #[test]
    fn flat_without_arbitrage() {
        let ap = ArbitrageParams::new(0.1, 0.0).unwrap();
        let pts = smile_curve(20.0, 1.0, &strikes(), &reference(), &ap).unwrap();
        for p in pts {
            assert!(p.converged);
            assert!((p.implied_vol - 0.4).abs() < 1e-8, "{p:?}");
        }
    }

    #[test]
    fn smile_shape() {
        // to first order σ^ε − σ ∝ Φ(d2)/φ(d2), which falls as K rises
        let ap = ArbitrageParams::new(0.1, 0.1).unwrap();
        let ks = strikes();
        let pts = smile_curve(20.0, 1.0, &ks, &reference(), &ap).unwrap();
        assert!(pts.iter().all(|p| p.converged && p.implied_vol > 0.4));
        assert!(pts.windows(2).all(|w| w[1].implied_vol < w[0].implied_vol));
        let atm = pts[15].implied_vol;
        assert!(pts[0].implied_vol > atm + 0.3);
        assert!(pts[30].implied_vol > 0.4 && pts[30].implied_vol < atm);
    }

    #[test]
    fn smile_grows_with_epsilon() {
        let ks = strikes();
        let mut prev: Option<Vec<SmilePoint>> = None;
        let mut prev_dev = f64::INFINITY;
        for eps in [0.1, 0.01, 0.001] {
            let ap = ArbitrageParams::new(0.1, eps).unwrap();
            let pts = smile_curve(20.0, 1.0, &ks, &reference(), &ap).unwrap();
            let dev = pts.iter().map(|p| p.implied_vol - 0.4).fold(0.0, f64::max);
            assert!(dev < prev_dev);
            if let Some(hi) = &prev {
                assert!(hi
                    .iter()
                    .zip(&pts)
                    .all(|(a, b)| a.implied_vol >= b.implied_vol));
            }
            prev = Some(pts);
            prev_dev = dev;
        }
    }

    #[test]
    fn extreme_band_flags_strike() {
        // huge noise pushes the effective price past S for low strikes
        let ap = ArbitrageParams::new(50.0, 0.9).unwrap();
        let pts = smile_curve(20.0, 1.0, &[2.0, 20.0], &reference(), &ap).unwrap();
        assert!(!pts[0].converged && pts[0].implied_vol.is_nan());
        assert_eq!(pts.len(), 2);
    }

    #[test]
    fn bad_strike_lists() {
        let ap = ArbitrageParams::new(0.1, 0.1).unwrap();
        let mp = reference();
        assert!(matches!(
            smile_curve(20.0, 1.0, &[], &mp, &ap),
            Err(Error::Domain(_))
        ));
        assert!(smile_curve(20.0, 1.0, &[20.0, 10.0], &mp, &ap).is_err());
        assert!(smile_curve(20.0, 1.0, &[-1.0, 10.0], &mp, &ap).is_err());
    }
}
