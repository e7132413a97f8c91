//! Pipeline implementations behind the CLI verbs. Every command loads the
//! model and schedule from the run config, writes its reports under the
//! output directory, and reports an outcome that maps onto the exit-code
//! contract (0 success, 2 certificate invalid, 1 failure).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::{info, warn};

use bchd_orbit::analysis::{contraction_check, dulac_scan, search_beta, solve_lyapunov, BoxRegion};
use bchd_orbit::bchd::{bind_handle, SeriesMethod};
use bchd_orbit::flow::{simulate_periods, SwitchingSchedule};
use bchd_orbit::lie::jacobian;
use bchd_orbit::linalg::DMat;
use bchd_orbit::solve::{refine_chain, solve_shooting, EquilibriumReport};
use bchd_orbit::verify::order_slope;

use crate::config::RunConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunOutcome {
    Success,
    CertificateInvalid,
    Failure,
}

impl RunOutcome {
    pub fn exit_code(self) -> u8 {
        match self {
            RunOutcome::Success => 0,
            RunOutcome::CertificateInvalid => 2,
            RunOutcome::Failure => 1,
        }
    }

    fn merge(self, other: RunOutcome) -> RunOutcome {
        use RunOutcome::*;
        match (self, other) {
            (Failure, _) | (_, Failure) => Failure,
            (CertificateInvalid, _) | (_, CertificateInvalid) => CertificateInvalid,
            _ => Success,
        }
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Build the requested Lie series and write its term dump. Prints the term
/// count and a basis-independent expansion checksum (identical across
/// constructions of the same series).
pub fn cmd_series(cfg: &RunConfig, out_dir: &Path) -> Result<RunOutcome> {
    ensure_dir(out_dir)?;
    let system = cfg.load_system()?;
    let schedule = cfg.build_schedule(&system)?;
    let method = cfg.series_method();
    let order = cfg.series.order;
    let series = method.build(schedule.n_segments(), order)?;
    let path = out_dir.join(format!("series_{}_order{}.txt", method.as_str(), order));
    write_text(&path, &series.dump())?;
    println!(
        "series method={} order={} terms={} checksum={:016x}",
        method.as_str(),
        order,
        series.len(),
        series.expansion_checksum()
    );
    info!("series dump written to {}", path.display());
    Ok(RunOutcome::Success)
}

fn write_reports(
    out_dir: &Path,
    name: &str,
    dim: usize,
    reports: &[EquilibriumReport<f64>],
) -> Result<()> {
    let mut kv = String::new();
    let mut csv = EquilibriumReport::<f64>::csv_header(dim);
    csv.push('\n');
    for report in reports {
        kv.push_str(&report.to_kv());
        kv.push('\n');
        csv.push_str(&report.csv_row());
        csv.push('\n');
    }
    write_text(&out_dir.join(format!("{name}.kv")), &kv)?;
    write_text(&out_dir.join(format!("{name}.csv")), &csv)?;
    Ok(())
}

/// Run the refinement chain (and optional shooting polish) and write the
/// equilibrium reports. Non-converged stages still produce reports; the
/// command then fails.
pub fn cmd_find(cfg: &RunConfig, out_dir: &Path) -> Result<RunOutcome> {
    ensure_dir(out_dir)?;
    let system = cfg.load_system()?;
    let schedule = cfg.build_schedule(&system)?;
    let guess = cfg
        .find
        .x_guess
        .clone()
        .unwrap_or_else(|| vec![0.0; system.n]);
    let reports = refine_chain(
        &system,
        &schedule,
        &cfg.find.orders,
        &guess,
        &cfg.solver_config(),
        cfg.series_method(),
        cfg.find.polish,
        &cfg.tolerance_config(),
    )?;
    write_reports(out_dir, "equilibria", system.n, &reports)?;
    for report in &reports {
        println!(
            "find {}: status={} x=({})",
            report.method,
            report.status.as_str(),
            report
                .x_star
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        );
    }
    if reports.iter().all(|r| r.converged) {
        Ok(RunOutcome::Success)
    } else {
        Ok(RunOutcome::Failure)
    }
}

/// Divergence scans and/or the contraction certificate, per the [certify]
/// config. Reports are always written; an invalid or inconclusive
/// certificate yields the dedicated exit code.
pub fn cmd_certify(cfg: &RunConfig, out_dir: &Path) -> Result<RunOutcome> {
    ensure_dir(out_dir)?;
    let system = cfg.load_system()?;
    let schedule = cfg.build_schedule(&system)?;
    let mut outcome = RunOutcome::Success;

    if let Some(dulac) = &cfg.certify.dulac {
        let region = BoxRegion::new(dulac.lower.clone(), dulac.upper.clone(), dulac.grid.clone())?;
        if system.n != 2 {
            warn!("divergence scan on a {}-state system: the closed-orbit exclusion argument is planar", system.n);
        }
        let fields: Vec<_> = schedule.controls.iter().map(|u| system.frozen(u)).collect();
        for &order in &dulac.orders {
            let series = cfg.series_method().build(schedule.n_segments(), order)?;
            let bound = bind_handle(
                &series,
                &fields,
                &schedule.interval_fractions(),
                schedule.tau,
            )?;
            let report = dulac_scan(bound.as_ref(), &region)?;
            write_text(
                &out_dir.join(format!("dulac_order{order}.kv")),
                &report.to_kv(),
            )?;
            // grid dump for external plotting
            let mut csv = String::from("x1,x2,divergence\n");
            for flat in 0..region.n_points() {
                let x = region.point(flat);
                let d = bchd_orbit::analysis::divergence(bound.as_ref(), &x)
                    .map(|v| v.to_string())
                    .unwrap_or_else(|_| "nan".into());
                csv.push_str(&format!("{},{},{}\n", x[0], x[1], d));
            }
            write_text(&out_dir.join(format!("dulac_order{order}.csv")), &csv)?;
            println!(
                "certify dulac order={order}: sign_uniform={} rho_sign={} min|div|={:e}{}",
                report.sign_uniform,
                report.rho_sign,
                report.min_abs_divergence,
                if report.inconclusive {
                    " (inconclusive)"
                } else {
                    ""
                }
            );
            if report.inconclusive {
                outcome = outcome.merge(RunOutcome::CertificateInvalid);
            }
        }
    }

    if let Some(contraction) = &cfg.certify.contraction {
        let center = &contraction.center;
        let j = jacobian(system.f0.as_ref(), center)?;
        let metric = solve_lyapunov(&j, &DMat::identity(system.n))?;
        let deltas: Vec<f64> = center
            .iter()
            .zip(&contraction.deltas_rel)
            .map(|(&c, &d)| (c * d).abs())
            .collect();
        let region = BoxRegion::centered(center, &deltas, contraction.grid.clone())?;
        let beta = match contraction.beta {
            Some(b) => b,
            None => match search_beta(&system, &metric, &region)? {
                Some(b) => {
                    println!("certify contraction: bisected margin beta = {b:e}");
                    b
                }
                None => {
                    warn!("no positive margin certifies on this box; checking a nominal one");
                    1e-6
                }
            },
        };
        let cert = contraction_check(&system, &metric, beta, &region)?;
        write_text(&out_dir.join("contraction.kv"), &cert.to_kv())?;
        // per-sample dump for external plotting (state Jacobians are
        // u-independent for the built-in models, one row per grid node)
        let mut csv = String::new();
        for i in 1..=system.n {
            csv.push_str(&format!("x{i},"));
        }
        csv.push_str("max_eigenvalue\n");
        for flat in 0..region.n_points() {
            let x = region.point(flat);
            let j = jacobian(system.f0.as_ref(), &x)?;
            let mj = metric.matmul(&j);
            let mut s = mj.add(&mj.transpose());
            for i in 0..system.n {
                s[(i, i)] += beta;
            }
            for v in &x {
                csv.push_str(&format!("{v},"));
            }
            csv.push_str(&format!("{}\n", s.max_symmetric_eigenvalue()));
        }
        write_text(&out_dir.join("contraction.csv"), &csv)?;
        println!(
            "certify contraction: valid={} beta={} worst_eigenvalue={:e} samples={} vertices={}",
            cert.is_valid(),
            cert.beta,
            cert.worst_eigenvalue,
            cert.samples_checked,
            cert.vertex_controls_checked
        );
        if !cert.is_valid() {
            outcome = outcome.merge(RunOutcome::CertificateInvalid);
        }
    }
    Ok(outcome)
}

fn write_poincare(path: &Path, poincare: &[Vec<f64>]) -> Result<()> {
    let mut text = String::from("period");
    if let Some(first) = poincare.first() {
        for i in 1..=first.len() {
            text.push_str(&format!(",x{i}"));
        }
    }
    text.push('\n');
    for (k, p) in poincare.iter().enumerate() {
        text.push_str(&(k + 1).to_string());
        for v in p {
            text.push_str(&format!(",{v}"));
        }
        text.push('\n');
    }
    write_text(path, &text)
}

/// Multi-period simulations from the configured starts, plus optional
/// closed-orbit sweeps over a ladder of periods (shooting then one period).
pub fn cmd_simulate(cfg: &RunConfig, out_dir: &Path) -> Result<RunOutcome> {
    ensure_dir(out_dir)?;
    let system = cfg.load_system()?;
    let schedule = cfg.build_schedule(&system)?;
    let mut tol = cfg.tolerance_config();
    let per_segment = (cfg.simulate.samples_per_period / schedule.n_segments().max(1)).max(2);
    tol.uniform_samples = per_segment;

    for (i, start) in cfg.simulate.starts.iter().enumerate() {
        let run = simulate_periods(&system, &schedule, start, cfg.simulate.n_periods, &tol)?;
        let mut file = fs::File::create(out_dir.join(format!("trajectory_{i}.csv")))?;
        run.trajectory.write_csv(&mut file)?;
        file.flush()?;
        write_poincare(&out_dir.join(format!("poincare_{i}.csv")), &run.poincare)?;
        println!(
            "simulate start {i}: {} periods, {} samples",
            cfg.simulate.n_periods,
            run.trajectory.samples.len()
        );
    }

    if let Some(taus) = &cfg.simulate.orbit_taus {
        let guess = cfg
            .find
            .x_guess
            .clone()
            .unwrap_or_else(|| vec![0.0; system.n]);
        let solver = cfg.solver_config();
        for tau in taus {
            let sched = SwitchingSchedule {
                tau: *tau,
                ..schedule.clone()
            };
            let report = solve_shooting(&system, &sched, &guess, &solver, &cfg.tolerance_config());
            if !report.converged {
                warn!("orbit sweep at tau = {tau}: shooting did not converge");
                return Ok(RunOutcome::Failure);
            }
            let run = simulate_periods(&system, &sched, &report.x_star, 1, &tol)?;
            let mut file = fs::File::create(out_dir.join(format!("orbit_tau{tau}.csv")))?;
            run.trajectory.write_csv(&mut file)?;
            file.flush()?;
            println!(
                "simulate orbit tau={tau}: fixed point ({})",
                report
                    .x_star
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(", ")
            );
        }
    }
    Ok(RunOutcome::Success)
}

pub const CSTR2_RUN_TOML: &str = include_str!("../configs/cstr2.toml");
pub const CSTR3_RUN_TOML: &str = include_str!("../configs/cstr3.toml");

/// The full bundled case-study pipeline: both reactor models end to end,
/// plus the order-of-accuracy table. Writes everything under
/// `out/cstr2`, `out/cstr3` and `out/order_slopes.csv`.
pub fn cmd_reproduce(out_dir: &Path) -> Result<RunOutcome> {
    ensure_dir(out_dir)?;
    let mut outcome = RunOutcome::Success;

    let cfg2 = RunConfig::from_toml(CSTR2_RUN_TOML)?;
    let dir2 = out_dir.join("cstr2");
    ensure_dir(&dir2)?;
    write_text(&dir2.join("run_config.toml"), &cfg2.to_toml())?;
    outcome = outcome.merge(run_stages(&cfg2, &dir2)?);
    table_from_chain(&cfg2, &dir2)?;

    let cfg3 = RunConfig::from_toml(CSTR3_RUN_TOML)?;
    let dir3 = out_dir.join("cstr3");
    ensure_dir(&dir3)?;
    write_text(&dir3.join("run_config.toml"), &cfg3.to_toml())?;
    outcome = outcome.merge(run_stages(&cfg3, &dir3)?);

    order_slope_table(&cfg2, &out_dir.join("order_slopes.csv"))?;
    Ok(outcome)
}

fn run_stages(cfg: &RunConfig, dir: &Path) -> Result<RunOutcome> {
    let mut outcome = RunOutcome::Success;
    for stage in &cfg.pipeline.run {
        let res = match stage.as_str() {
            "series" => cmd_series(cfg, dir)?,
            "find" => cmd_find(cfg, dir)?,
            "certify" => cmd_certify(cfg, dir)?,
            "simulate" => cmd_simulate(cfg, dir)?,
            _ => unreachable!("validated"),
        };
        outcome = outcome.merge(res);
    }
    Ok(outcome)
}

/// Rewrite the equilibrium chain as a compact order -> coordinates table.
fn table_from_chain(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let system = cfg.load_system()?;
    let schedule = cfg.build_schedule(&system)?;
    let guess = cfg
        .find
        .x_guess
        .clone()
        .unwrap_or_else(|| vec![0.0; system.n]);
    let reports = refine_chain(
        &system,
        &schedule,
        &cfg.find.orders,
        &guess,
        &cfg.solver_config(),
        cfg.series_method(),
        false,
        &cfg.tolerance_config(),
    )?;
    let mut text = String::from("order");
    for i in 1..=system.n {
        text.push_str(&format!(",x{i}"));
    }
    text.push('\n');
    for (order, report) in cfg.find.orders.iter().zip(&reports) {
        text.push_str(&order.to_string());
        for v in &report.x_star {
            text.push_str(&format!(",{v}"));
        }
        text.push('\n');
    }
    write_text(&dir.join("table1.csv"), &text)
}

fn order_slope_table(cfg: &RunConfig, path: &Path) -> Result<()> {
    let system = cfg.load_system()?;
    let schedule = cfg.build_schedule(&system)?;
    let taus = [0.02, 0.04, 0.08, 0.16];
    let mut text = String::from("order,slope\n");
    for order in 1..=4 {
        let slope = order_slope(
            &system,
            &schedule,
            SeriesMethod::Recursive,
            order,
            &vec![0.0; system.n],
            &taus,
        )?;
        text.push_str(&format!("{order},{slope}\n"));
    }
    write_text(path, &text)
}

/// Resolve the output directory: CLI flag wins over the config.
pub fn resolve_out_dir(cfg: Option<&RunConfig>, flag: Option<&PathBuf>) -> PathBuf {
    match (flag, cfg) {
        (Some(p), _) => p.clone(),
        (None, Some(c)) => PathBuf::from(&c.output.dir),
        (None, None) => PathBuf::from("out"),
    }
}
