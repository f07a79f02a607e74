//! Stationary ergodic noise models for the arbitrage return.
//!
//! Time here is the noise's own time scale: one unit corresponds to
//! `ε` units of option time `τ`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Error, Result};

/// Minimum number of samples per noise correlation time.
pub const STEPS_PER_CORRELATION: f64 = 20.0;

/// Zero-mean stationary noise with a finite autocovariance integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseModel {
    /// `dξ = −α ξ dt + k dW`, autocovariance `(k²/2α)·e^{−α s}`.
    OrnsteinUhlenbeck { alpha: f64, k: f64 },
    /// Symmetric two-state process `±amplitude` flipping at `switch_rate`,
    /// autocovariance `a²·e^{−2λ s}`.
    Telegraph { amplitude: f64, switch_rate: f64 },
    /// `ξ ≡ 0`; the degenerate `D = 0` case.
    Zero,
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, name: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(domain(format!(
                    "noise parameter {name} must be > 0, got {v}"
                )))
            }
        };
        match *self {
            NoiseModel::OrnsteinUhlenbeck { alpha, k } => {
                positive(alpha, "alpha")?;
                positive(k, "k")
            }
            NoiseModel::Telegraph {
                amplitude,
                switch_rate,
            } => {
                positive(amplitude, "amplitude")?;
                positive(switch_rate, "switch_rate")
            }
            NoiseModel::Zero => Ok(()),
        }
    }

    /// Stationary variance `⟨ξ²⟩`.
    pub fn stationary_variance(&self) -> f64 {
        match *self {
            NoiseModel::OrnsteinUhlenbeck { alpha, k } => k * k / (2.0 * alpha),
            NoiseModel::Telegraph { amplitude, .. } => amplitude * amplitude,
            NoiseModel::Zero => 0.0,
        }
    }

    /// e-folding time of the autocovariance. The zero model reports 1.
    pub fn correlation_time(&self) -> f64 {
        match *self {
            NoiseModel::OrnsteinUhlenbeck { alpha, .. } => 1.0 / alpha,
            NoiseModel::Telegraph { switch_rate, .. } => 1.0 / (2.0 * switch_rate),
            NoiseModel::Zero => 1.0,
        }
    }

    pub fn autocovariance(&self, lag: f64) -> f64 {
        self.stationary_variance() * (-lag.abs() / self.correlation_time()).exp()
    }

    /// Largest sampling step that resolves the correlation time and keeps
    /// at least 20 samples per unit of noise time.
    pub fn max_step(&self) -> f64 {
        self.correlation_time().min(1.0) / STEPS_PER_CORRELATION
    }

    /// A noise stream started from the stationary law.
    ///
    /// Stream `index` of `seed` is independent of every other index, so path
    /// `i` of an ensemble does not depend on the ensemble size.
    pub fn stream(&self, dt: f64, seed: u64, index: u64) -> NoiseStream {
        NoiseStream::new(*self, dt, rng_for(seed, index))
    }
}

pub(crate) fn rng_for(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Noise intensity `D = ∫₀^∞ ⟨ξ(s)ξ(0)⟩ ds`.
pub fn analytic_d(nm: &NoiseModel) -> f64 {
    match *nm {
        NoiseModel::OrnsteinUhlenbeck { alpha, k } => k * k / (2.0 * alpha * alpha),
        NoiseModel::Telegraph {
            amplitude,
            switch_rate,
        } => amplitude * amplitude / (2.0 * switch_rate),
        NoiseModel::Zero => 0.0,
    }
}

/// Sequential sampler on a uniform grid of step `dt`.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    model: NoiseModel,
    dt: f64,
    rng: ChaCha8Rng,
    value: f64,
    // OU: exact one-step decay and innovation scale.
    decay: f64,
    innovation: f64,
    // Telegraph: time left in the current state.
    hold: f64,
}

impl NoiseStream {
    fn new(model: NoiseModel, dt: f64, mut rng: ChaCha8Rng) -> Self {
        let mut s = Self {
            model,
            dt,
            rng: rng.clone(),
            value: 0.0,
            decay: 0.0,
            innovation: 0.0,
            hold: f64::INFINITY,
        };
        match model {
            NoiseModel::OrnsteinUhlenbeck { alpha, k } => {
                let z: f64 = rng.sample(StandardNormal);
                s.value = model.stationary_variance().sqrt() * z;
                s.decay = (-alpha * dt).exp();
                s.innovation = k * ((1.0 - (-2.0 * alpha * dt).exp()) / (2.0 * alpha)).sqrt();
            }
            NoiseModel::Telegraph {
                amplitude,
                switch_rate,
            } => {
                s.value = if rng.random::<bool>() {
                    amplitude
                } else {
                    -amplitude
                };
                let e: f64 = rng.sample(Exp1);
                s.hold = e / switch_rate;
            }
            NoiseModel::Zero => {}
        }
        s.rng = rng;
        s
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Value at the current grid time.
    pub fn current(&self) -> f64 {
        self.value
    }

    /// Move one grid step forward.
    pub fn advance(&mut self) {
        match self.model {
            NoiseModel::OrnsteinUhlenbeck { .. } => {
                let z: f64 = self.rng.sample(StandardNormal);
                self.value = self.value * self.decay + self.innovation * z;
            }
            NoiseModel::Telegraph { switch_rate, .. } => {
                let mut remaining = self.dt;
                while self.hold <= remaining {
                    remaining -= self.hold;
                    self.value = -self.value;
                    let e: f64 = self.rng.sample(Exp1);
                    self.hold = e / switch_rate;
                }
                self.hold -= remaining;
            }
            NoiseModel::Zero => {}
        }
    }

    /// `Σ_{j<n} ξ_j` over the next `n` grid values, leaving the stream at
    /// grid point `n`.
    ///
    /// The telegraph process is piecewise constant, so its sum is accumulated
    /// per holding interval by counting the grid points it covers.
    pub fn sum_next(&mut self, n: usize) -> f64 {
        match self.model {
            NoiseModel::Telegraph { switch_rate, .. } => {
                let dt = self.dt;
                let mut acc = 0.0;
                let mut left = n;
                while left > 0 {
                    let covered = (self.hold / dt).ceil().max(1.0);
                    if covered > left as f64 {
                        acc += self.value * left as f64;
                        self.hold -= left as f64 * dt;
                        left = 0;
                    } else {
                        let covered_steps = covered as usize;
                        acc += self.value * covered;
                        let grid = covered * dt;
                        let mut t = self.hold;
                        self.value = -self.value;
                        let mut hold: f64 = self.rng.sample::<f64, _>(Exp1) / switch_rate;
                        while t + hold <= grid {
                            t += hold;
                            self.value = -self.value;
                            hold = self.rng.sample::<f64, _>(Exp1) / switch_rate;
                        }
                        self.hold = t + hold - grid;
                        left -= covered_steps;
                    }
                }
                acc
            }
            _ => {
                let mut acc = 0.0;
                for _ in 0..n {
                    acc += self.value;
                    self.advance();
                }
                acc
            }
        }
    }
}

impl Iterator for NoiseStream {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        let v = self.value;
        self.advance();
        Some(v)
    }
}

/// A realised noise path on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisePath {
    pub dt: f64,
    pub values: Vec<f64>,
    pub seed: u64,
    /// Correlation time of the generating model, used for resolution checks.
    pub correlation_time: f64,
}

impl NoisePath {
    /// A path from explicit samples, e.g. a constant path for testing.
    pub fn from_values(dt: f64, values: Vec<f64>, correlation_time: f64) -> Result<Self> {
        if !(dt > 0.0) || values.is_empty() {
            return Err(domain("noise path needs dt > 0 and at least one value"));
        }
        Ok(Self {
            dt,
            values,
            seed: 0,
            correlation_time,
        })
    }

    /// Time covered by the path, `(len − 1)·dt`.
    pub fn span(&self) -> f64 {
        (self.values.len() - 1) as f64 * self.dt
    }
}

/// `n` values of `nm` sampled every `dt`, starting from the stationary law.
///
/// The OU process uses its exact Gaussian transition; the telegraph process
/// uses exponential holding times.
pub fn sample_path(nm: &NoiseModel, dt: f64, n: usize, seed: u64) -> Result<NoisePath> {
    nm.validate()?;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(domain(format!("sampling step must be > 0, got {dt}")));
    }
    if n == 0 {
        return Err(domain("path length must be at least 1"));
    }
    let values: Vec<f64> = nm.stream(dt, seed, 0).take(n).collect();
    Ok(NoisePath {
        dt,
        values,
        seed,
        correlation_time: nm.correlation_time(),
    })
}

/// Empirical noise intensity with a batch-means standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntensityEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

const INTENSITY_BATCHES: usize = 20;

/// Trapezoidal integral of the sample autocovariance over `[0, max_lag]`.
///
/// The lag sum `Σ_{l≤m} C_l` is formed in one pass from prefix sums, so the
/// cost is linear in the path length regardless of `max_lag`.
pub fn empirical_d(path: &NoisePath, max_lag: f64) -> Result<IntensityEstimate> {
    if !(max_lag > 0.0) {
        return Err(domain(format!("max_lag must be > 0, got {max_lag}")));
    }
    let lags = (max_lag / path.dt).round().max(1.0) as usize;
    let n = path.values.len();
    let batch = n / INTENSITY_BATCHES;
    if batch < 50 * (lags + 1) {
        return Err(Error::InsufficientData(format!(
            "{n} samples cannot resolve {lags} lags; need at least {}",
            INTENSITY_BATCHES * 50 * (lags + 1)
        )));
    }
    let mean = path.values.iter().sum::<f64>() / n as f64;
    let centred: Vec<f64> = path.values.iter().map(|v| v - mean).collect();
    let estimate = lag_integral(&centred, lags, path.dt);
    let blocks: Vec<f64> = centred
        .chunks_exact(batch)
        .take(INTENSITY_BATCHES)
        .map(|c| lag_integral(c, lags, path.dt))
        .collect();
    let bm = blocks.iter().sum::<f64>() / blocks.len() as f64;
    let bvar = blocks.iter().map(|b| (b - bm).powi(2)).sum::<f64>() / (blocks.len() - 1) as f64;
    Ok(IntensityEstimate {
        estimate,
        std_error: (bvar / blocks.len() as f64).sqrt(),
    })
}

fn lag_integral(x: &[f64], lags: usize, dt: f64) -> f64 {
    let n = x.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut run = 0.0;
    for v in x {
        run += v;
        prefix.push(run);
    }
    let mut total = 0.0;
    let mut c0 = 0.0;
    let mut cm = 0.0;
    for i in 0..n {
        let end = (i + lags + 1).min(n);
        total += x[i] * (prefix[end] - prefix[i]);
        c0 += x[i] * x[i];
        if i + lags < n {
            cm += x[i] * x[i + lags];
        }
    }
    let nf = n as f64;
    dt * (total - 0.5 * c0 - 0.5 * cm) / nf
}

/// Outcome of the scaled-integral variance check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClsReport {
    pub epsilon: f64,
    pub tau: f64,
    pub n_paths: usize,
    pub n_steps: usize,
    pub mean: f64,
    pub mean_std_error: f64,
    pub variance: f64,
    /// `2·D·τ`.
    pub target: f64,
    /// `variance / target`.
    pub ratio: f64,
    /// 95% percentile-bootstrap interval for `ratio`.
    pub ratio_ci: (f64, f64),
}

const BOOTSTRAP_RESAMPLES: usize = 200;

/// Checks `Var[x^ε(τ)] → 2Dτ` for `x^ε(τ) = ε^{−1/2}∫₀^τ ξ(s/ε) ds`.
///
/// Uses the coarsest admissible step, `NoiseModel::max_step`.
pub fn cls_variance_check(
    nm: &NoiseModel,
    epsilon: f64,
    tau: f64,
    n_paths: usize,
    seed: u64,
) -> Result<ClsReport> {
    cls_variance_check_with_step(nm, epsilon, tau, n_paths, seed, nm.max_step())
}

/// As [`cls_variance_check`] with an explicit noise-time step, rejected when
/// it does not resolve the correlation time.
pub fn cls_variance_check_with_step(
    nm: &NoiseModel,
    epsilon: f64,
    tau: f64,
    n_paths: usize,
    seed: u64,
    dt_max: f64,
) -> Result<ClsReport> {
    nm.validate()?;
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(domain(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(domain(format!("tau must lie in (0, 1], got {tau}")));
    }
    if n_paths < 1000 {
        return Err(domain(format!("need at least 1000 paths, got {n_paths}")));
    }
    let d = analytic_d(nm);
    if d <= 0.0 {
        return Err(domain("variance check needs a model with D > 0"));
    }
    if !(dt_max > 0.0) || dt_max > nm.max_step() * (1.0 + 1e-12) {
        return Err(config(format!(
            "step {dt_max} too coarse: at most {} resolves the noise correlation time",
            nm.max_step()
        )));
    }
    let horizon = tau / epsilon;
    let n_steps = (horizon / dt_max).ceil() as usize;
    let dt = horizon / n_steps as f64;
    let scale = epsilon.sqrt() * dt;

    let samples: Vec<f64> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| scale * nm.stream(dt, seed, i).sum_next(n_steps))
        .collect();

    let (mean, variance) = mean_var(&samples);
    let target = 2.0 * d * tau;

    let mut rng = rng_for(seed, u64::MAX);
    let mut ratios: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| {
            let (m, s2) = resample_moments(&samples, &mut rng);
            (s2 - m * m) * n_paths as f64 / (n_paths - 1) as f64 / target
        })
        .collect();
    ratios.sort_by(f64::total_cmp);

    Ok(ClsReport {
        epsilon,
        tau,
        n_paths,
        n_steps,
        mean,
        mean_std_error: (variance / n_paths as f64).sqrt(),
        variance,
        target,
        ratio: variance / target,
        ratio_ci: (percentile(&ratios, 0.025), percentile(&ratios, 0.975)),
    })
}

/// Sample mean and unbiased sample variance, summed in index order.
pub(crate) fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Mean and raw second moment of one bootstrap resample.
pub(crate) fn resample_moments(x: &[f64], rng: &mut ChaCha8Rng) -> (f64, f64) {
    let n = x.len();
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..n {
        let v = x[rng.random_range(0..n)];
        s += v;
        s2 += v * v;
    }
    (s / n as f64, s2 / n as f64)
}

pub(crate) fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}
