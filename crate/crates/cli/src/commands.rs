use std::path::{Path, PathBuf};

use arbband::{
    analytic_d, bs_call, closed_form_gate, cls_variance_check, empirical_d, ensemble_stats,
    exact_fd_gate, extract_diagonal, pricing_band, rel_error, sample_path, smile_curve,
    solve_covariance_pde, variance_u_closed_call, variance_u_grid, USource,
};

use crate::config::{Method, RunConfig};
use crate::{CliError, Command, Gate, Outcome};

pub(crate) fn dispatch(cmd: Command, cfg: &RunConfig) -> Result<Outcome, CliError> {
    match cmd {
        Command::Price => price(cfg),
        Command::Band => band(cfg),
        Command::Usurface => usurface(cfg),
        Command::Covpde => covpde(cfg),
        Command::Smile => smile(cfg),
        Command::McValidate => mc_validate(cfg),
        Command::NoiseCheck => noise_check(cfg),
        Command::Xval => xval(cfg),
    }
}

/// Shortest round-trip text; exponent form outside `[1e-4, 1e15)`.
fn num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

struct Table {
    path: PathBuf,
    writer: csv::Writer<std::fs::File>,
}

impl Table {
    fn create(dir: &Path, name: &str, header: &[&str]) -> Result<Self, CliError> {
        let path = dir.join(name);
        let mut writer = csv::Writer::from_path(&path)?;
        writer.write_record(header)?;
        Ok(Self { path, writer })
    }

    fn row(&mut self, fields: &[f64]) -> Result<(), CliError> {
        self.writer.write_record(fields.iter().map(|v| num(*v)))?;
        Ok(())
    }

    fn record<I, S>(&mut self, fields: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields)?;
        Ok(())
    }

    fn finish(mut self, outcome: &mut Outcome) -> Result<(), CliError> {
        self.writer.flush()?;
        outcome.outputs.push(self.path);
        Ok(())
    }
}

fn or_default(list: &[f64], fallback: f64) -> Vec<f64> {
    if list.is_empty() {
        vec![fallback]
    } else {
        list.to_vec()
    }
}

fn price(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let mut out = Outcome::default();
    let mut t = Table::create(
        &cfg.run.output_dir,
        "price.csv",
        &[
            "S", "K", "r", "sigma", "tau", "price", "delta", "gamma", "rho", "vega",
        ],
    )?;
    for s in or_default(&cfg.price.spots, cfg.market.spot) {
        let mp = cfg.market.with_spot(s);
        let g = bs_call(&mp)?;
        t.row(&[
            s,
            mp.strike,
            mp.rate,
            mp.volatility,
            mp.tau,
            g.price,
            g.delta,
            g.gamma,
            g.rho,
            g.vega,
        ])?;
    }
    t.finish(&mut out)?;
    Ok(out)
}

fn band(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let mut out = Outcome::default();
    let mut t = Table::create(
        &cfg.run.output_dir,
        "band.csv",
        &["tau", "S", "V_BS", "U", "lower", "upper"],
    )?;
    for tau in or_default(&cfg.band.taus, cfg.market.tau) {
        for s in or_default(&cfg.band.spots, cfg.market.spot) {
            let mp = cfg.market.with_spot(s).with_tau(tau);
            let b = pricing_band(&mp, &cfg.arbitrage, &USource::ClosedForm)?;
            t.row(&[tau, s, b.bs_price, b.variance_u, b.lower, b.upper])?;
        }
    }
    t.finish(&mut out)?;
    Ok(out)
}

fn max_tau(taus: &[f64]) -> f64 {
    taus.iter().copied().fold(0.0, f64::max)
}

fn usurface(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let sec = &cfg.usurface;
    let mp = cfg.market;
    let ap = &cfg.arbitrage;
    let mut out = Outcome::default();
    let source = match sec.method {
        Method::ClosedForm => USource::ClosedForm,
        Method::Quadrature => USource::Quadrature,
        Method::Pde => USource::Pde(cfg.grid.spec(&mp.with_tau(max_tau(&sec.taus)))?),
    };
    if sec.method == Method::ClosedForm && sec.gate {
        let g = closed_form_gate(&sec.spots, &sec.taus, &mp, ap, sec.gate_tolerance)?;
        out.gates.push(Gate::new(
            "closed_form_vs_quadrature",
            g.max_rel_error,
            g.tolerance,
        ));
    }
    let u = variance_u_grid(&sec.spots, &sec.taus, &mp, ap, &source)?;
    let mut t = Table::create(&cfg.run.output_dir, "usurface.csv", &["tau", "S", "U"])?;
    for (tau, row) in sec.taus.iter().zip(&u) {
        for (s, v) in sec.spots.iter().zip(row) {
            t.row(&[*tau, *s, *v])?;
        }
    }
    t.finish(&mut out)?;
    Ok(out)
}

fn covpde(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let checkpoints = or_default(&cfg.covpde.checkpoints, cfg.market.tau);
    let mp = cfg.market.with_tau(max_tau(&checkpoints));
    let gs = cfg.grid.spec(&mp)?;
    let surfaces = solve_covariance_pde(&mp, &cfg.arbitrage, &gs, &checkpoints)?;
    let dir = &cfg.run.output_dir;
    let mut out = Outcome::default();
    if cfg.covpde.write_surface {
        let mut t = Table::create(dir, "covpde.csv", &["tau", "S", "Y", "R"])?;
        for sg in &surfaces {
            let (xs, ys) = (&sg.axes[0], &sg.axes[1]);
            for (i, s) in xs.iter().enumerate() {
                for (j, y) in ys.iter().enumerate() {
                    t.row(&[sg.tau, *s, *y, sg.get(i, j)])?;
                }
            }
        }
        t.finish(&mut out)?;
    }
    let mut t = Table::create(dir, "covpde_diagonal.csv", &["tau", "S", "U", "U_closed"])?;
    for sg in &surfaces {
        let p = extract_diagonal(sg)?;
        for (s, u) in p.spots.iter().zip(&p.values) {
            let closed = variance_u_closed_call(*s, sg.tau, &mp, &cfg.arbitrage)?;
            t.row(&[sg.tau, *s, *u, closed])?;
        }
    }
    t.finish(&mut out)?;
    Ok(out)
}

fn smile(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let s = cfg.market.spot;
    let strikes = cfg.smile.strikes.clone().unwrap_or_else(|| {
        (0..=30)
            .map(|i| s * 0.5 * 4f64.powf(i as f64 / 30.0))
            .collect()
    });
    let pts = smile_curve(s, cfg.market.tau, &strikes, &cfg.market, &cfg.arbitrage)?;
    let mut out = Outcome::default();
    let mut t = Table::create(
        &cfg.run.output_dir,
        "smile.csv",
        &["K", "sigma_implied", "effective_price", "converged"],
    )?;
    for p in pts {
        t.record([
            num(p.strike),
            num(p.implied_vol),
            num(p.effective_price),
            p.converged.to_string(),
        ])?;
    }
    t.finish(&mut out)?;
    Ok(out)
}

fn mc_validate(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let mut out = Outcome::default();
    let mut t = Table::create(
        &cfg.run.output_dir,
        "mc_validate.csv",
        &[
            "epsilon",
            "n_paths",
            "V_BS",
            "mean",
            "mean_stderr",
            "var_scaled",
            "stderr",
            "U",
        ],
    )?;
    let mp = cfg.market;
    let u = variance_u_closed_call(
        mp.spot,
        mp.tau,
        &mp,
        &cfg.arbitrage.with_d(analytic_d(&cfg.noise)),
    )?;
    for &eps in &cfg.mc.epsilons {
        let st = ensemble_stats(&mp, &cfg.noise, eps, cfg.mc.n_paths, cfg.run.seed)?;
        t.row(&[
            eps,
            st.n_paths as f64,
            st.bs_price,
            st.mean_price,
            st.mean_std_error,
            st.var_scaled_residual,
            st.std_error,
            u,
        ])?;
    }
    t.finish(&mut out)?;
    Ok(out)
}

fn noise_check(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let sec = &cfg.noise_check;
    let nm = &cfg.noise;
    let dir = &cfg.run.output_dir;
    let mut out = Outcome::default();
    if sec.epsilons.is_empty() {
        return Err(arbband::Error::Domain("noise_check.epsilons is empty".into()).into());
    }
    let mut t = Table::create(
        dir,
        "noise_check.csv",
        &[
            "epsilon",
            "tau",
            "n_paths",
            "n_steps",
            "mean",
            "mean_stderr",
            "variance",
            "target",
            "ratio",
            "ratio_lo",
            "ratio_hi",
        ],
    )?;
    let mut finest = None;
    for &eps in &sec.epsilons {
        let r = cls_variance_check(nm, eps, sec.tau, sec.n_paths, cfg.run.seed)?;
        t.row(&[
            eps,
            r.tau,
            r.n_paths as f64,
            r.n_steps as f64,
            r.mean,
            r.mean_std_error,
            r.variance,
            r.target,
            r.ratio,
            r.ratio_ci.0,
            r.ratio_ci.1,
        ])?;
        if finest.is_none_or(|(e, _)| eps < e) {
            finest = Some((eps, r.ratio));
        }
    }
    t.finish(&mut out)?;
    if let Some((eps, ratio)) = finest {
        out.gates.push(Gate::new(
            format!("ratio_error_at_{eps}"),
            (ratio - 1.0).abs(),
            sec.tolerance,
        ));
    }

    if sec.intensity_samples > 0 || sec.dump_steps > 0 {
        let n = sec.intensity_samples.max(sec.dump_steps);
        let path = sample_path(nm, nm.max_step(), n, cfg.run.seed)?;
        if sec.intensity_samples > 0 {
            let head = arbband::NoisePath::from_values(
                path.dt,
                path.values[..sec.intensity_samples].to_vec(),
                path.correlation_time,
            )?;
            let est = empirical_d(&head, 10.0 * nm.correlation_time())?;
            let mut t = Table::create(
                dir,
                "noise_intensity.csv",
                &["D_analytic", "D_empirical", "stderr"],
            )?;
            t.row(&[analytic_d(nm), est.estimate, est.std_error])?;
            t.finish(&mut out)?;
        }
        if sec.dump_steps > 0 {
            let mut t = Table::create(dir, "noise_path.csv", &["step", "value"])?;
            for (i, v) in path.values.iter().take(sec.dump_steps).enumerate() {
                t.row(&[i as f64, *v])?;
            }
            t.finish(&mut out)?;
        }
    }
    Ok(out)
}

fn xval(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let sec = &cfg.xval;
    let ap = &cfg.arbitrage;
    let dir = &cfg.run.output_dir;
    let k = cfg.market.strike;
    let spots: Vec<f64> = sec.moneyness.iter().map(|m| m * k).collect();
    let mp = cfg.market.with_tau(max_tau(&sec.taus));
    let mut out = Outcome::default();
    let mut t = Table::create(
        dir,
        "xval.csv",
        &[
            "check",
            "value",
            "reference",
            "rel_error",
            "tolerance",
            "passed",
        ],
    )?;
    let record = |t: &mut Table,
                  name: &str,
                  value: f64,
                  reference: f64,
                  tol: f64|
     -> Result<Gate, CliError> {
        let g = Gate::new(name, rel_error(value, reference), tol);
        t.record([
            name.to_string(),
            num(value),
            num(reference),
            num(g.value),
            num(tol),
            g.passed.to_string(),
        ])?;
        Ok(g)
    };

    let closed = variance_u_grid(&spots, &sec.taus, &mp, ap, &USource::ClosedForm)?;
    let quad = variance_u_grid(&spots, &sec.taus, &mp, ap, &USource::Quadrature)?;
    let pde = variance_u_grid(
        &spots,
        &sec.taus,
        &mp,
        ap,
        &USource::Pde(cfg.grid.spec(&mp)?),
    )?;
    let (mut worst_q, mut worst_p) = (Gate::new("", 0.0, 0.0), Gate::new("", 0.0, 0.0));
    for (ti, tau) in sec.taus.iter().enumerate() {
        for (si, s) in spots.iter().enumerate() {
            let c = closed[ti][si];
            let g = record(
                &mut t,
                &format!("quadrature_tau{tau}_S{s}"),
                quad[ti][si],
                c,
                sec.quad_tolerance,
            )?;
            if g.value >= worst_q.value {
                worst_q = g;
            }
            let g = record(
                &mut t,
                &format!("pde_tau{tau}_S{s}"),
                pde[ti][si],
                c,
                sec.pde_tolerance,
            )?;
            if g.value >= worst_p.value {
                worst_p = g;
            }
        }
    }
    out.gates.push(Gate::new(
        "quadrature_vs_closed_form",
        worst_q.value,
        sec.quad_tolerance,
    ));
    out.gates.push(Gate::new(
        "pde_diagonal_vs_closed_form",
        worst_p.value,
        sec.pde_tolerance,
    ));

    let d = analytic_d(&cfg.noise);
    if d > 0.0 {
        let m = cfg.market;
        let st = ensemble_stats(&m, &cfg.noise, sec.mc_epsilon, sec.mc_paths, cfg.run.seed)?;
        let u = variance_u_closed_call(m.spot, m.tau, &m, &ap.with_d(d))?;
        let g = record(
            &mut t,
            "mc_variance",
            st.var_scaled_residual,
            u,
            sec.mc_tolerance,
        )?;
        out.gates.push(Gate::new(
            "mc_variance_vs_closed_form",
            g.value,
            g.tolerance,
        ));
        let gs = cfg.grid.spec(&m)?;
        let fd = exact_fd_gate(
            &m,
            &cfg.noise,
            sec.mc_epsilon,
            sec.gate_paths,
            cfg.run.seed,
            &gs,
        )?;
        t.record([
            "exact_vs_fd_paths".to_string(),
            num(fd.max_rel_error),
            num(0.0),
            num(fd.max_rel_error),
            num(fd.tolerance),
            fd.passed.to_string(),
        ])?;
        out.gates.push(Gate::new(
            "exact_vs_fd_paths",
            fd.max_rel_error,
            fd.tolerance,
        ));
    }
    t.finish(&mut out)?;
    Ok(out)
}
