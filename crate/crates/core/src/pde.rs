//! Finite-difference solvers in log-price coordinates.
//!
//! With `x = ln S` the Black-Scholes operator is the constant-coefficient
//! `a ∂xx + b ∂x − c` with `a = σ²/2`, `b = r − σ²/2`, `c = r`. The covariance
//! PDE is the sum of one such operator in `x = ln S` and one in `y = ln Y`,
//! without a mixed term, so Peaceman-Rachford ADI applies directly.
//!
//! Far-field boundaries impose linearity in the price variable, `∂SS = 0`,
//! i.e. `∂xx = ∂x`, through a ghost node eliminated into the boundary row.

use serde::{Deserialize, Serialize};

use crate::bs::{call_greeks, source_raw, MarketParams};
use crate::error::{config, domain, Error, Result};
use crate::variance::ArbitrageParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Forward Euler; reference implementation under a stability bound.
    Explicit,
    /// Peaceman-Rachford in 2-D; Crank-Nicolson with implicit startup in 1-D.
    #[default]
    Adi,
}

/// Time-step bound of the explicit scheme, `Δτ ≤ C·Δx²/σ²`, per dimension
/// count. Evaluated exactly as `1 / (dims·(σ²/Δx² + r))`, which reduces to
/// `C = 1` in 1-D and `C = 1/2` in 2-D as `r·Δx²/σ² → 0`.
pub const EXPLICIT_C_1D: f64 = 1.0;
pub const EXPLICIT_C_2D: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub n_space: usize,
    pub n_time: usize,
    #[serde(default)]
    pub scheme: Scheme,
}

impl GridSpec {
    pub fn new(
        x_min: f64,
        x_max: f64,
        n_space: usize,
        n_time: usize,
        scheme: Scheme,
    ) -> Result<Self> {
        let gs = Self {
            x_min,
            x_max,
            n_space,
            n_time,
            scheme,
        };
        gs.validate()?;
        Ok(gs)
    }

    /// Domain `ln K ± (5σ√τ + |r − σ²/2|·τ)` around the strike, with `τ = mp.tau`
    /// (or 1 when `mp.tau` is 0). An odd `n_space` puts `ln K` on a node.
    pub fn for_market(
        mp: &MarketParams,
        n_space: usize,
        n_time: usize,
        scheme: Scheme,
    ) -> Result<Self> {
        mp.validate()?;
        let tau = if mp.tau > 0.0 { mp.tau } else { 1.0 };
        let half = 5.0 * mp.volatility * tau.sqrt() + mp.log_drift().abs() * tau;
        let centre = mp.strike.ln();
        Self::new(centre - half, centre + half, n_space, n_time, scheme)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_min.is_finite() && self.x_max.is_finite() && self.x_min < self.x_max) {
            return Err(config(format!(
                "grid bounds must satisfy x_min < x_max, got [{}, {}]",
                self.x_min, self.x_max
            )));
        }
        if self.n_space < 3 {
            return Err(config(format!(
                "n_space must be >= 3, got {}",
                self.n_space
            )));
        }
        if self.n_time < 1 {
            return Err(config("n_time must be >= 1"));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n_space - 1) as f64
    }

    pub fn log_nodes(&self) -> Vec<f64> {
        let h = self.dx();
        (0..self.n_space)
            .map(|i| {
                if i + 1 == self.n_space {
                    self.x_max
                } else {
                    self.x_min + i as f64 * h
                }
            })
            .collect()
    }

    pub fn price_nodes(&self) -> Vec<f64> {
        self.log_nodes().into_iter().map(f64::exp).collect()
    }

    fn check_strike(&self, strike: f64) -> Result<()> {
        let k = strike.ln();
        if !(self.x_min < k && k < self.x_max) {
            return Err(config(format!(
                "grid [{}, {}] must contain ln K = {k}",
                self.x_min, self.x_max
            )));
        }
        Ok(())
    }
}

/// Values on a rectangular lattice; `axes[0]` is the slow index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceGrid {
    pub labels: Vec<String>,
    pub axes: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub tau: f64,
}

impl SurfaceGrid {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.axes[1].len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.axes[1].len();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn transpose(&self) -> SurfaceGrid {
        let (n0, n1) = (self.axes[0].len(), self.axes[1].len());
        let mut values = vec![0.0; n0 * n1];
        for i in 0..n0 {
            for j in 0..n1 {
                values[j * n0 + i] = self.values[i * n1 + j];
            }
        }
        SurfaceGrid {
            labels: vec![self.labels[1].clone(), self.labels[0].clone()],
            axes: vec![self.axes[1].clone(), self.axes[0].clone()],
            values,
            tau: self.tau,
        }
    }

    /// `max |R(S,Y) − R(Y,S)|` for a square surface.
    pub fn max_asymmetry(&self) -> f64 {
        let n = self.axes[0].len();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Last time slice of a `(tau, S)` surface as a profile.
    pub fn final_profile(&self) -> Profile {
        Profile {
            tau: self.tau,
            spots: self.axes[1].clone(),
            values: self.row(self.axes[0].len() - 1).to_vec(),
        }
    }
}

/// A function of spot on log-uniform nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub tau: f64,
    pub spots: Vec<f64>,
    pub values: Vec<f64>,
}

impl Profile {
    /// Four-point Lagrange interpolation in `ln S`.
    pub fn interpolate(&self, s: f64) -> Result<f64> {
        let n = self.spots.len();
        let x0 = self.spots[0].ln();
        let xn = self.spots[n - 1].ln();
        let x = s.ln();
        if !(x >= x0 - 1e-12 && x <= xn + 1e-12) {
            return Err(domain(format!(
                "S = {s} outside grid [{}, {}]",
                self.spots[0],
                self.spots[n - 1]
            )));
        }
        let h = (xn - x0) / (n - 1) as f64;
        let pos = (x - x0) / h;
        let nearest = pos.round();
        if (pos - nearest).abs() < 1e-9 {
            return Ok(self.values[nearest as usize]);
        }
        let i = (pos.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
        let xs: Vec<f64> = (i..i + 4).map(|k| x0 + k as f64 * h).collect();
        let mut acc = 0.0;
        for a in 0..4 {
            let mut w = 1.0;
            for b in 0..4 {
                if a != b {
                    w *= (x - xs[b]) / (xs[a] - xs[b]);
                }
            }
            acc += w * self.values[i + a];
        }
        Ok(acc)
    }
}

/// Tridiagonal matrix stored by diagonals; `lower[0]` and `upper[n-1]` unused.
#[derive(Debug, Clone)]
pub(crate) struct Tridiag {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
}

impl Tridiag {
    /// `a ∂xx + b ∂x − c` on `n` nodes of spacing `h`, with `∂xx = ∂x` at both ends.
    fn operator(n: usize, h: f64, a: f64, b: f64, c: f64) -> Self {
        let mut t = Tridiag {
            lower: vec![0.0; n],
            diag: vec![0.0; n],
            upper: vec![0.0; n],
        };
        let diff = a / (h * h);
        let adv = b / (2.0 * h);
        for i in 1..n - 1 {
            t.lower[i] = diff - adv;
            t.diag[i] = -2.0 * diff - c;
            t.upper[i] = diff + adv;
        }
        // Ghost node from the central-difference form of ∂xx = ∂x; the row
        // becomes (a + b)·∂x − c with a one-cell, second-order ∂x.
        let speed = a + b;
        let left = 2.0 / (h * (2.0 + h));
        t.diag[0] = -speed * left - c;
        t.upper[0] = speed * left;
        let right = 2.0 / (h * (2.0 - h));
        t.lower[n - 1] = -speed * right;
        t.diag[n - 1] = speed * right - c;
        t
    }

    fn len(&self) -> usize {
        self.diag.len()
    }

    fn apply(&self, v: &[f64], i: usize) -> f64 {
        let n = self.len();
        let mut acc = self.diag[i] * v[i];
        if i > 0 {
            acc += self.lower[i] * v[i - 1];
        }
        if i + 1 < n {
            acc += self.upper[i] * v[i + 1];
        }
        acc
    }

    fn max_abs_diag(&self) -> f64 {
        self.diag.iter().fold(0.0, |m, d| m.max(d.abs()))
    }

    /// LU factors of `I − θ·self`.
    fn factor_shifted(&self, theta: f64) -> Thomas {
        let n = self.len();
        let sub: Vec<f64> = self.lower.iter().map(|l| -theta * l).collect();
        let sup: Vec<f64> = self.upper.iter().map(|u| -theta * u).collect();
        let mut inv_pivot = vec![0.0; n];
        let mut sup_scaled = vec![0.0; n];
        let mut pivot = 1.0 - theta * self.diag[0];
        inv_pivot[0] = 1.0 / pivot;
        sup_scaled[0] = sup[0] * inv_pivot[0];
        for i in 1..n {
            pivot = 1.0 - theta * self.diag[i] - sub[i] * sup_scaled[i - 1];
            inv_pivot[i] = 1.0 / pivot;
            sup_scaled[i] = sup[i] * inv_pivot[i];
        }
        Thomas {
            sub,
            inv_pivot,
            sup_scaled,
        }
    }
}

#[derive(Debug, Clone)]
struct Thomas {
    sub: Vec<f64>,
    inv_pivot: Vec<f64>,
    sup_scaled: Vec<f64>,
}

impl Thomas {
    fn solve_in_place(&self, d: &mut [f64]) {
        let n = d.len();
        d[0] *= self.inv_pivot[0];
        for i in 1..n {
            d[i] = (d[i] - self.sub[i] * d[i - 1]) * self.inv_pivot[i];
        }
        for i in (0..n - 1).rev() {
            d[i] -= self.sup_scaled[i] * d[i + 1];
        }
    }

    // Solve along the slow index of a row-major n×n block: every column
    // shares the same matrix, so the sweep runs over whole rows.
    fn solve_columns(&self, m: &mut [f64], n: usize) {
        {
            let (first, _) = m.split_at_mut(n);
            first.iter_mut().for_each(|v| *v *= self.inv_pivot[0]);
        }
        for i in 1..n {
            let (prev, cur) = m.split_at_mut(i * n);
            let prev = &prev[(i - 1) * n..];
            let cur = &mut cur[..n];
            let (s, p) = (self.sub[i], self.inv_pivot[i]);
            for (c, q) in cur.iter_mut().zip(prev) {
                *c = (*c - s * q) * p;
            }
        }
        for i in (0..n - 1).rev() {
            let (cur, next) = m.split_at_mut((i + 1) * n);
            let cur = &mut cur[i * n..];
            let next = &next[..n];
            let s = self.sup_scaled[i];
            for (c, q) in cur.iter_mut().zip(next) {
                *c -= s * q;
            }
        }
    }
}

fn explicit_bound(l: &Tridiag, dims: f64) -> f64 {
    1.0 / (dims * l.max_abs_diag())
}

fn check_explicit(l: &Tridiag, dt: f64, dims: f64, a: f64, b: f64, h: f64) -> Result<()> {
    let bound = explicit_bound(l, dims);
    if dt > bound * (1.0 + 1e-12) {
        return Err(config(format!(
            "explicit step {dt} exceeds stability bound {bound}; increase n_time"
        )));
    }
    if b.abs() * h > 2.0 * a {
        return Err(config(format!(
            "cell Peclet number {} exceeds 1; refine the grid",
            b.abs() * h / (2.0 * a)
        )));
    }
    Ok(())
}

fn check_finite(v: &[f64], what: &str, tau: f64) -> Result<()> {
    if let Some(bad) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::Breakdown(format!(
            "{what}: non-finite value {} at node {bad}, tau = {tau}",
            v[bad]
        )));
    }
    Ok(())
}

/// One 1-D time step in the pricing operator with its own rate.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Step {
    pub dt: f64,
    pub rate: f64,
}

/// March `v` through `steps` in the 1-D pricing operator with volatility `vol`.
///
/// In the ADI scheme the first two steps are each replaced by two fully
/// implicit half steps to damp the payoff kink, then Crank-Nicolson follows.
pub(crate) fn march_1d(
    gs: &GridSpec,
    vol: f64,
    mut v: Vec<f64>,
    steps: &[Step],
) -> Result<Vec<f64>> {
    let mut buf = vec![0.0; v.len()];
    let mut tau = 0.0;
    for (k, st) in steps.iter().enumerate() {
        step_1d(gs, vol, &mut v, &mut buf, *st, k < 2)?;
        tau += st.dt;
        check_finite(&v, "pricing PDE", tau)?;
    }
    Ok(v)
}

fn step_1d(
    gs: &GridSpec,
    vol: f64,
    v: &mut Vec<f64>,
    buf: &mut Vec<f64>,
    st: Step,
    startup: bool,
) -> Result<()> {
    let h = gs.dx();
    let a = 0.5 * vol * vol;
    let b = st.rate - a;
    let l = Tridiag::operator(v.len(), h, a, b, st.rate);
    match gs.scheme {
        Scheme::Explicit => {
            check_explicit(&l, st.dt, 1.0, a, b, h)?;
            for i in 0..v.len() {
                buf[i] = v[i] + st.dt * l.apply(v, i);
            }
            std::mem::swap(v, buf);
        }
        Scheme::Adi if startup => {
            let f = l.factor_shifted(0.5 * st.dt);
            f.solve_in_place(v);
            f.solve_in_place(v);
        }
        Scheme::Adi => {
            for i in 0..v.len() {
                buf[i] = v[i] + 0.5 * st.dt * l.apply(v, i);
            }
            l.factor_shifted(0.5 * st.dt).solve_in_place(buf);
            std::mem::swap(v, buf);
        }
    }
    Ok(())
}

pub(crate) fn payoff(spots: &[f64], strike: f64) -> Vec<f64> {
    spots
        .iter()
        .map(|&s| call_greeks(s, strike, 0.0, 1.0, 0.0).price)
        .collect()
}

/// The call price `V(τ, S)` on `n_time + 1` time levels in `[0, mp.tau]`.
///
/// Returns a `(tau, S)` surface whose first row is the payoff.
pub fn solve_bs_pde(mp: &MarketParams, gs: &GridSpec) -> Result<SurfaceGrid> {
    mp.validate()?;
    gs.validate()?;
    gs.check_strike(mp.strike)?;
    let spots = gs.price_nodes();
    let mut v = payoff(&spots, mp.strike);
    let mut rows = v.clone();
    let mut taus = vec![0.0];
    if mp.tau > 0.0 {
        let dt = mp.tau / gs.n_time as f64;
        let step = Step { dt, rate: mp.rate };
        let mut buf = vec![0.0; v.len()];
        for k in 0..gs.n_time {
            step_1d(gs, mp.volatility, &mut v, &mut buf, step, k < 2)?;
            let tau = if k + 1 == gs.n_time {
                mp.tau
            } else {
                (k + 1) as f64 * dt
            };
            check_finite(&v, "pricing PDE", tau)?;
            rows.extend_from_slice(&v);
            taus.push(tau);
        }
    }
    Ok(SurfaceGrid {
        labels: vec!["tau".into(), "S".into()],
        axes: vec![taus, spots],
        values: rows,
        tau: mp.tau,
    })
}

/// Covariance surfaces `R(τ, S, Y)` at each checkpoint in `[0, mp.tau]`.
///
/// The source `2D·f(τ, S)·f(τ, Y)` uses the closed-form cash-delta residual
/// evaluated at the midpoint of each step. Between checkpoints the step
/// count is proportional to the elapsed time.
pub fn solve_covariance_pde(
    mp: &MarketParams,
    ap: &ArbitrageParams,
    gs: &GridSpec,
    checkpoints: &[f64],
) -> Result<Vec<SurfaceGrid>> {
    mp.validate()?;
    ap.validate()?;
    gs.validate()?;
    gs.check_strike(mp.strike)?;
    if checkpoints.is_empty() {
        return Err(domain("at least one checkpoint is required"));
    }
    if checkpoints.windows(2).any(|w| w[0] >= w[1])
        || checkpoints[0] < 0.0
        || checkpoints[checkpoints.len() - 1] > mp.tau
    {
        return Err(domain(format!(
            "checkpoints must increase strictly within [0, {}]",
            mp.tau
        )));
    }
    let n = gs.n_space;
    let h = gs.dx();
    let spots = gs.price_nodes();
    let a = 0.5 * mp.volatility * mp.volatility;
    let b = mp.log_drift();
    let l = Tridiag::operator(n, h, a, b, mp.rate);
    let tau_total = mp.tau;

    let mut r = vec![0.0; n * n];
    let mut rhs = vec![0.0; n * n];
    let mut src = vec![0.0; n];
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut tau = 0.0;
    let ps = |tau, values: &[f64]| SurfaceGrid {
        labels: vec!["S".into(), "Y".into()],
        axes: vec![spots.clone(), spots.clone()],
        values: values.to_vec(),
        tau,
    };

    for &stop in checkpoints {
        let span = stop - tau;
        if span > 0.0 {
            let steps = ((gs.n_time as f64 * span / tau_total).round() as usize).max(1);
            let dt = span / steps as f64;
            let factor = match gs.scheme {
                Scheme::Explicit => {
                    check_explicit(&l, dt, 2.0, a, b, h)?;
                    None
                }
                Scheme::Adi => Some(l.factor_shifted(0.5 * dt)),
            };
            for k in 0..steps {
                let start = tau + k as f64 * dt;
                let mid = start + 0.5 * dt;
                for (f, &s) in src.iter_mut().zip(&spots) {
                    *f = source_raw(s, mp.strike, mp.rate, mp.volatility, mid);
                }
                let amp = 2.0 * ap.d;
                match &factor {
                    None => explicit_step_2d(&l, &mut r, &mut rhs, &src, amp, dt, n),
                    Some(f) => adi_step(&l, f, &mut r, &mut rhs, &src, amp, dt, n),
                }
                check_finite(&r, "covariance PDE", start + dt)?;
            }
        }
        tau = stop;
        out.push(ps(stop, &r));
    }
    Ok(out)
}

fn explicit_step_2d(
    l: &Tridiag,
    r: &mut Vec<f64>,
    next: &mut Vec<f64>,
    src: &[f64],
    amp: f64,
    dt: f64,
    n: usize,
) {
    for i in 0..n {
        for j in 0..n {
            let idx = i * n + j;
            let mut lx = l.diag[i] * r[idx];
            if i > 0 {
                lx += l.lower[i] * r[idx - n];
            }
            if i + 1 < n {
                lx += l.upper[i] * r[idx + n];
            }
            let ly = l.apply(&r[i * n..(i + 1) * n], j);
            next[idx] = r[idx] + dt * (lx + ly + amp * src[i] * src[j]);
        }
    }
    std::mem::swap(r, next);
}

#[allow(clippy::too_many_arguments)]
fn adi_step(
    l: &Tridiag,
    f: &Thomas,
    r: &mut [f64],
    tmp: &mut [f64],
    src: &[f64],
    amp: f64,
    dt: f64,
    n: usize,
) {
    let half = 0.5 * dt;
    // x half step: explicit in y, implicit in x
    for i in 0..n {
        let row = &r[i * n..(i + 1) * n];
        let q = half * amp * src[i];
        let out = &mut tmp[i * n..(i + 1) * n];
        for (j, (o, sj)) in out.iter_mut().zip(src).enumerate() {
            *o = row[j] + half * l.apply(row, j) + q * sj;
        }
    }
    f.solve_columns(tmp, n);
    // y half step: explicit in x, implicit in y
    for i in 0..n {
        let q = half * amp * src[i];
        let (d, lo, up) = (l.diag[i], l.lower[i], l.upper[i]);
        for (j, sj) in src.iter().enumerate() {
            let idx = i * n + j;
            let mut lx = d * tmp[idx];
            if i > 0 {
                lx += lo * tmp[idx - n];
            }
            if i + 1 < n {
                lx += up * tmp[idx + n];
            }
            r[idx] = tmp[idx] + half * lx + q * sj;
        }
        f.solve_in_place(&mut r[i * n..(i + 1) * n]);
    }
}

/// The diagonal `U(τ, S) = R(τ, S, S)` of a covariance surface.
pub fn extract_diagonal(surface: &SurfaceGrid) -> Result<Profile> {
    if surface.axes.len() != 2 || surface.axes[0] != surface.axes[1] {
        return Err(config("diagonal needs a square surface on a common axis"));
    }
    let n = surface.axes[0].len();
    Ok(Profile {
        tau: surface.tau,
        spots: surface.axes[0].clone(),
        values: (0..n).map(|i| surface.get(i, i)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::variance::variance_u_closed_call;

    fn reference() -> (MarketParams, ArbitrageParams) {
        (
            MarketParams::new(20.0, 20.0, 0.1, 0.4, 1.0).unwrap(),
            ArbitrageParams::new(0.1, 0.1).unwrap(),
        )
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new(1.0, 0.0, 10, 10, Scheme::Adi).is_err());
        assert!(GridSpec::new(0.0, 1.0, 2, 10, Scheme::Adi).is_err());
        assert!(GridSpec::new(0.0, 1.0, 10, 0, Scheme::Adi).is_err());
        let (mp, ap) = reference();
        let off = GridSpec::new(4.0, 5.0, 11, 10, Scheme::Adi).unwrap();
        assert!(matches!(solve_bs_pde(&mp, &off), Err(Error::Config(_))));
        assert!(solve_covariance_pde(&mp, &ap, &off, &[1.0]).is_err());
    }

    #[test]
    fn strike_is_a_node_for_odd_grids() {
        let (mp, _) = reference();
        let gs = GridSpec::for_market(&mp, 201, 10, Scheme::Adi).unwrap();
        let x = gs.log_nodes();
        assert!((x[100] - 20f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn bs_pde_initial_slice_and_value() {
        let (mp, _) = reference();
        let gs = GridSpec::for_market(&mp, 201, 400, Scheme::Adi).unwrap();
        let sg = solve_bs_pde(&mp, &gs).unwrap();
        assert_eq!(sg.row(0), payoff(&sg.axes[1], 20.0).as_slice());
        assert_eq!(sg.axes[0].len(), 401);
        let v = sg.final_profile().interpolate(20.0).unwrap();
        let exact = call_greeks(20.0, 20.0, 0.1, 0.4, 1.0).price;
        assert!((v / exact - 1.0).abs() < 1e-3, "{v} vs {exact}");
    }

    #[test]
    fn bs_pde_zero_strike_limit() {
        let mp = MarketParams::new(20.0, 1e-3, 0.1, 0.4, 1.0).unwrap();
        let gs = GridSpec::new((1e-4f64).ln(), 200f64.ln(), 301, 200, Scheme::Adi).unwrap();
        let prof = solve_bs_pde(&mp, &gs).unwrap().final_profile();
        for (s, v) in prof.spots.iter().zip(&prof.values) {
            if *s > 1.0 && *s < 100.0 {
                assert!((v / s - 1.0).abs() < 1e-3, "S={s} V={v}");
            }
        }
    }

    #[test]
    fn explicit_stability_enforced() {
        let (mp, ap) = reference();
        let coarse_time = GridSpec::for_market(&mp, 101, 10, Scheme::Explicit).unwrap();
        assert!(matches!(
            solve_bs_pde(&mp, &coarse_time),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            solve_covariance_pde(&mp, &ap, &coarse_time, &[1.0]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn explicit_and_adi_agree() {
        let (mp, ap) = reference();
        let adi = GridSpec::for_market(&mp, 61, 400, Scheme::Adi).unwrap();
        let exp = GridSpec {
            scheme: Scheme::Explicit,
            ..adi
        };
        let a =
            extract_diagonal(&solve_covariance_pde(&mp, &ap, &adi, &[1.0]).unwrap()[0]).unwrap();
        let e =
            extract_diagonal(&solve_covariance_pde(&mp, &ap, &exp, &[1.0]).unwrap()[0]).unwrap();
        let i = 30;
        assert!((a.values[i] / e.values[i] - 1.0).abs() < 5e-3);
        let bs_a = solve_bs_pde(&mp, &GridSpec { n_time: 800, ..adi })
            .unwrap()
            .final_profile();
        let bs_e = solve_bs_pde(&mp, &GridSpec { n_time: 800, ..exp })
            .unwrap()
            .final_profile();
        assert!((bs_a.values[i] / bs_e.values[i] - 1.0).abs() < 2e-3);
    }

    #[test]
    fn covariance_trivial_cases() {
        let (mp, ap) = reference();
        let gs = GridSpec::for_market(&mp, 41, 40, Scheme::Adi).unwrap();
        let s = solve_covariance_pde(&mp, &ap, &gs, &[0.0, 0.5]).unwrap();
        assert!(s[0].values.iter().all(|v| *v == 0.0));
        assert!(s[1].max_abs() > 0.0);
        let z = solve_covariance_pde(&mp, &ap.with_d(0.0), &gs, &[0.5, 1.0]).unwrap();
        assert!(z.iter().all(|g| g.values.iter().all(|v| *v == 0.0)));
        assert!(solve_covariance_pde(&mp, &ap, &gs, &[0.5, 0.5]).is_err());
        assert!(solve_covariance_pde(&mp, &ap, &gs, &[]).is_err());
    }

    #[test]
    fn covariance_symmetric_and_linear_in_d() {
        let (mp, ap) = reference();
        let gs = GridSpec::for_market(&mp, 81, 100, Scheme::Adi).unwrap();
        let a = solve_covariance_pde(&mp, &ap, &gs, &[0.25, 1.0]).unwrap();
        let b = solve_covariance_pde(&mp, &ap.with_d(0.2), &gs, &[0.25, 1.0]).unwrap();
        for (sa, sb) in a.iter().zip(&b) {
            assert!(sa.max_asymmetry() <= 1e-8 * sa.max_abs());
            for (x, y) in sa.values.iter().zip(&sb.values) {
                assert_eq!(2.0 * x, *y);
            }
        }
    }

    #[test]
    fn diagonal_properties() {
        let (mp, ap) = reference();
        let gs = GridSpec::for_market(&mp, 201, 400, Scheme::Adi).unwrap();
        let surf = solve_covariance_pde(&mp, &ap, &gs, &[1.0]).unwrap();
        let d = extract_diagonal(&surf[0]).unwrap();
        let dt = extract_diagonal(&surf[0].transpose()).unwrap();
        assert_eq!(d.values, dt.values);
        let u = d.interpolate(20.0).unwrap();
        let c = variance_u_closed_call(20.0, 1.0, &mp, &ap).unwrap();
        assert!((u / c - 1.0).abs() < 0.02, "{u} vs {c}");
        for (s, v) in d.spots.iter().zip(&d.values) {
            if (10.0..=35.0).contains(s) {
                let c = variance_u_closed_call(*s, 1.0, &mp, &ap).unwrap();
                assert!((v / c - 1.0).abs() < 0.02, "S={s}: {v} vs {c}");
            }
        }
        let zero = SurfaceGrid {
            values: vec![0.0; surf[0].values.len()],
            ..surf[0].clone()
        };
        assert!(extract_diagonal(&zero)
            .unwrap()
            .values
            .iter()
            .all(|v| *v == 0.0));
        let rect = SurfaceGrid {
            axes: vec![surf[0].axes[0].clone(), surf[0].axes[0][1..].to_vec()],
            ..surf[0].clone()
        };
        assert!(extract_diagonal(&rect).is_err());
    }

    #[test]
    fn profile_interpolation_is_exact_on_cubics() {
        let spots: Vec<f64> = (0..20).map(|i| (0.1 * i as f64).exp()).collect();
        let cubic = |x: f64| 1.0 + x - 2.0 * x * x + 0.5 * x * x * x;
        let p = Profile {
            tau: 0.0,
            spots: spots.clone(),
            values: spots.iter().map(|s| cubic(s.ln())).collect(),
        };
        let s = (0.537f64).exp();
        assert!((p.interpolate(s).unwrap() - cubic(0.537)).abs() < 1e-12);
        assert!(p.interpolate(1e-3).is_err());
    }
}
