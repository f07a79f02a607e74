//! Pricing bands for European calls when the bond return carries a rapidly
//! varying, zero-mean arbitrage fluctuation.
//!
//! The fluctuation of the option price around Black-Scholes is a Gaussian
//! field whose variance `U(τ, S)` is computed three independent ways:
//!
//! * [`variance`]: Green-function quadrature, plus a closed form for calls;
//! * [`pde`]: the 2-D covariance PDE for `R(τ, S, Y)`, whose diagonal is `U`;
//! * [`mc`]: Monte Carlo over the stochastic pricing PDE, one noise path at a time.
//!
//! [`smile`] turns the upper band into an implied-volatility smile and
//! [`noise`] provides the ergodic noise models driving the Monte Carlo.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bs;
pub mod error;
pub mod gauss;
pub mod mc;
pub mod noise;
pub mod pde;
pub mod smile;
pub mod variance;

pub use bs::{
    bs_call, green_function, norm_cdf, norm_pdf, source_term, GreeksRecord, MarketParams,
};
pub use error::{Error, Result};
pub use mc::{
    ensemble_path, ensemble_stats, exact_fd_gate, path_price_exact, path_price_fd, PathStats,
};
pub use noise::{analytic_d, cls_variance_check, empirical_d, sample_path, NoiseModel, NoisePath};
pub use pde::{
    extract_diagonal, solve_bs_pde, solve_covariance_pde, GridSpec, Profile, Scheme, SurfaceGrid,
};
pub use smile::{implied_vol, smile_curve, SmilePoint};
pub use variance::{
    closed_form_gate, inner_integral, pricing_band, rel_error, variance_u, variance_u_closed_call,
    variance_u_grid, variance_u_quadrature, ArbitrageParams, BandResult, GateReport, USource,
};
