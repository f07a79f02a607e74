use arbband::*;
use proptest::prelude::*;

const K: f64 = 20.0;

fn price(s: f64, r: f64, vol: f64, tau: f64) -> f64 {
    bs_call(&MarketParams::new(s, K, r, vol, tau).unwrap())
        .unwrap()
        .price
}

// Prices carry absolute rounding of a few ulps of S, so differences of
// prices cannot resolve Greeks below these floors.
fn within(fd: f64, exact: f64, rel: f64, floor: f64) -> bool {
    (fd - exact).abs() <= rel * exact.abs() + floor
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn greeks_match_finite_differences(m in 0.25f64..2.0, tau in 0.05f64..1.0, vol in 0.1f64..0.8, r in 1e-3f64..0.2) {
        let s = m * K;
        let g = bs_call(&MarketParams::new(s, K, r, vol, tau).unwrap()).unwrap();
        let h = 1e-4 * s;
        // fourth-order central stencils; second order truncation alone
        // exceeds the tolerance where delta is tiny
        let f = |k: f64| price(s + k * h, r, vol, tau);
        let (p2, p1, p0, m1, m2) = (f(2.0), f(1.0), g.price, f(-1.0), f(-2.0));
        let delta = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h);
        let gamma = (-p2 + 16.0 * p1 - 30.0 * p0 + 16.0 * m1 - m2) / (12.0 * h * h);
        let noise = 64.0 * f64::EPSILON * s;
        prop_assert!(within(delta, g.delta, 1e-6, noise / h), "delta {delta} vs {}", g.delta);
        prop_assert!(within(gamma, g.gamma, 1e-4, noise / (h * h)), "gamma {gamma} vs {}", g.gamma);
        let hr = 1e-5;
        let fr = |k: f64| price(s, r + k * hr, vol, tau);
        let rho = (8.0 * (fr(1.0) - fr(-1.0)) - (fr(2.0) - fr(-2.0))) / (12.0 * hr);
        prop_assert!(within(rho, g.rho, 1e-6, noise / hr), "rho {rho} vs {}", g.rho);
    }

    #[test]
    fn greek_signs_and_price_bounds(m in 0.01f64..50.0, tau in 0.0f64..=1.0, vol in 0.01f64..2.0, r in 0.0f64..0.5) {
        let mp = MarketParams::new(m * K, K, r, vol, tau).unwrap();
        let g = bs_call(&mp).unwrap();
        prop_assert!((0.0..=1.0).contains(&g.delta));
        prop_assert!(g.gamma >= 0.0 && g.rho >= 0.0);
        let lower = (mp.spot - K * (-r * tau).exp()).max(0.0);
        prop_assert!(g.price >= lower && g.price <= mp.spot);
        prop_assert!(source_term(&mp).unwrap() >= 0.0);
    }

    #[test]
    fn price_monotone(m in 0.25f64..2.0, tau in 0.0f64..0.9, vol in 0.05f64..1.0, r in 0.0f64..0.2, bump in 1e-3f64..0.1) {
        let s = m * K;
        let p = price(s, r, vol, tau);
        prop_assert!(price(s * (1.0 + bump), r, vol, tau) >= p);
        prop_assert!(price(s, r, vol + bump, tau) >= p);
        prop_assert!(price(s, r, vol, tau + bump) >= p);
    }

    #[test]
    fn source_term_monotone_in_spot(m in 0.01f64..5.0, tau in 0.0f64..=1.0, bump in 1e-3f64..1.0) {
        let mp = MarketParams::new(m * K, K, 0.1, 0.4, tau).unwrap();
        let a = source_term(&mp).unwrap();
        let b = source_term(&mp.with_spot(m * K * (1.0 + bump))).unwrap();
        prop_assert!(b >= a);
    }

    #[test]
    fn variance_nonnegative_and_linear_in_d(m in 0.1f64..3.0, tau in 0.0f64..=1.0, d in 0.0f64..2.0) {
        let mp = MarketParams::new(m * K, K, 0.1, 0.4, tau).unwrap();
        let ap = ArbitrageParams::new(d, 0.1).unwrap();
        let u = variance_u_closed_call(mp.spot, tau, &mp, &ap).unwrap();
        prop_assert!(u >= 0.0);
        let u2 = variance_u_closed_call(mp.spot, tau, &mp, &ap.with_d(2.0 * d)).unwrap();
        // subnormal U carries no relative precision
        prop_assert!((u2 - 2.0 * u).abs() <= 1e-14 * u2.abs() + f64::MIN_POSITIVE);
    }

    #[test]
    fn band_ordering(m in 0.1f64..3.0, tau in 0.0f64..=1.0, d in 0.0f64..1.0, eps in 0.0f64..0.99) {
        let mp = MarketParams::new(m * K, K, 0.1, 0.4, tau).unwrap();
        let ap = ArbitrageParams::new(d, eps).unwrap();
        let b = pricing_band(&mp, &ap, &USource::ClosedForm).unwrap();
        prop_assert!(b.lower <= b.bs_price && b.bs_price <= b.upper);
        prop_assert_eq!(b.effective, b.upper);
        prop_assert!((b.upper - b.bs_price - (b.bs_price - b.lower)).abs() <= 1e-12 * b.upper.abs().max(1.0));
    }

    #[test]
    fn implied_vol_round_trip(vol in 0.05f64..2.0, m in 0.5f64..2.0, tau in 0.1f64..1.0) {
        let mp = MarketParams::new(m * K, K, 0.1, vol, tau).unwrap();
        let g = bs_call(&mp).unwrap();
        // below this vega a price carries no information about σ in double precision
        prop_assume!(g.vega >= 1e-6 * mp.spot);
        let got = implied_vol(g.price, &mp).unwrap();
        prop_assert!((got - vol).abs() <= 1e-8, "{got} vs {vol}");
    }

    #[test]
    fn smile_dominates_and_grows_with_epsilon(d in 0.01f64..0.5, eps in 0.001f64..0.3) {
        let mp = MarketParams::new(20.0, K, 0.1, 0.4, 1.0).unwrap();
        let strikes: Vec<f64> = (0..=12).map(|i| 10.0 * 4f64.powf(i as f64 / 12.0)).collect();
        let lo = smile_curve(20.0, 1.0, &strikes, &mp, &ArbitrageParams::new(d, eps).unwrap()).unwrap();
        let hi = smile_curve(20.0, 1.0, &strikes, &mp, &ArbitrageParams::new(d, eps * 1.5).unwrap()).unwrap();
        for (a, b) in lo.iter().zip(&hi) {
            if !a.converged {
                continue;
            }
            prop_assert!(a.implied_vol > 0.4);
            if !b.converged {
                continue;
            }
            prop_assert!(b.implied_vol >= a.implied_vol);
            let back = bs_call(&mp.with_strike(a.strike).with_volatility(a.implied_vol)).unwrap().price;
            prop_assert!((back - a.effective_price).abs() <= 1e-10 * 20.0);
        }
    }
}

#[test]
fn variance_monotone_in_spot() {
    let mp = MarketParams::new(20.0, K, 0.1, 0.4, 1.0).unwrap();
    let ap = ArbitrageParams::new(0.1, 0.1).unwrap();
    let spots: Vec<f64> = (1..=200).map(|i| 0.25 * i as f64).collect();
    for tau in [0.05, 0.25, 0.5, 1.0] {
        let us: Vec<f64> = spots
            .iter()
            .map(|&s| variance_u_closed_call(s, tau, &mp, &ap).unwrap())
            .collect();
        assert!(us.windows(2).all(|w| w[1] >= w[0]), "tau={tau}");
    }
}

#[test]
fn quadrature_and_closed_form_agree() {
    let mp = MarketParams::new(20.0, K, 0.1, 0.4, 1.0).unwrap();
    let ap = ArbitrageParams::new(0.1, 0.1).unwrap();
    let spots = [5.0, 12.0, 20.0, 31.0, 40.0];
    let taus = [0.05, 0.3, 1.0];
    let gate = closed_form_gate(&spots, &taus, &mp, &ap, 1e-4).unwrap();
    assert!(gate.passed, "{gate:?}");
}
