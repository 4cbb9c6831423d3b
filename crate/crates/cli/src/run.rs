//! Command dispatch and the run manifest.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::time::Instant;

use anyhow::{anyhow, bail, Result};
use serde::Serialize;
use serde_json::{json, Value};
use swarmkin_core::estimators::{
    compare_1d, compare_2d, sample_at_centers_1d, sample_at_centers_2d,
};
use swarmkin_core::grid::grid_point;
use swarmkin_core::hierarchy::{
    bdg_nonlinear_diffusion_step, bdg_stable_dt, cl_hierarchy_residual_fourier, discrete_energy,
    stationary_pair_field, ClPairSolver,
};
use swarmkin_core::master::{bbgky_consistency, integrate_master, marginalize, IntegrationReport};
use swarmkin_core::oracle::{m_at_zero, m_density_at, m_fourier, marginal_recursion};
use swarmkin_core::{
    ensemble_marginals, BiasModel, CorrelationParams, DynamicsKind, FourierMarginal, GridField,
    Histogram1D, Histogram2D, MasterDynamics, MasterField, MasterKernel, Metrics, NoiseModel,
    PdeParams,
};

use crate::config::{Command, ExperimentConfig};
use crate::io::{hist1d_csv, hist2d_csv, read_histogram, runs_csv, LoadedHistogram, OutputSet};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DEFAULT_MASTER_DT: f64 = 0.05;
pub const DEFAULT_CL_PDE_DT: f64 = 0.5;

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    pub files: Vec<String>,
    pub wall_clock_seconds: f64,
    pub diagnostics: Value,
    pub metrics: Value,
    pub error: Option<String>,
}

struct Report {
    diagnostics: Value,
    metrics: Value,
}

/// Runs one command, writing its data files and `manifest.json` into the
/// configured output directory. On failure the data files already written
/// are removed and the manifest carries the error.
pub fn run_command(cfg: &ExperimentConfig) -> Result<RunManifest> {
    let start = Instant::now();
    let mut out = OutputSet::new(&cfg.output_dir)?;
    let result = match cfg.command {
        Command::Simulate => simulate(cfg, &mut out),
        Command::Oracle => oracle(cfg, &mut out),
        Command::Hierarchy => hierarchy(cfg, &mut out),
        Command::Master => master(cfg, &mut out),
        Command::Compare => compare(cfg, &mut out),
    };
    let (report, error) = match result {
        Ok(r) => (r, None),
        Err(e) => {
            out.remove_all();
            (
                Report {
                    diagnostics: Value::Null,
                    metrics: Value::Null,
                },
                Some(e),
            )
        }
    };
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: cfg.command.name().to_string(),
        seed: cfg.seed,
        config: cfg
            .to_pairs()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
        files: out.files().to_vec(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        diagnostics: report.diagnostics,
        metrics: report.metrics,
        error: error.as_ref().map(|e| format!("{e:#}")),
    };
    let text = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(out.dir().join(MANIFEST_FILE), text + "\n")?;
    match error {
        None => Ok(manifest),
        Some(e) => Err(e),
    }
}

fn metrics_json(m: &Metrics) -> Value {
    json!({
        "l1": m.l1,
        "linf": m.linf,
        "chi2": m.chi2,
        "dof": m.dof,
        "chi2_p_value": m.chi2_p_value(),
    })
}

fn simulate(cfg: &ExperimentConfig, out: &mut OutputSet) -> Result<Report> {
    let dynamics = cfg.dynamics()?;
    let res = ensemble_marginals(&dynamics, cfg.n_runs, cfg.seed, cfg.bins)?;
    out.write(
        "one_particle.csv",
        hist1d_csv(&res.one_particle)?.as_bytes(),
    )?;
    out.write(
        "two_particle.csv",
        hist2d_csv(&res.two_particle)?.as_bytes(),
    )?;
    out.write("runs.csv", runs_csv(&res.runs).as_bytes())?;

    let uniform = vec![1.0; cfg.bins];
    let mut metrics = json!({
        "one_particle_vs_uniform": metrics_json(&compare_1d(&res.one_particle, &uniform)?),
        "pair_difference_circular_std": res.two_particle.difference_circular_std()?,
    });
    if cfg.kind == DynamicsKind::Cl {
        let p = CorrelationParams::from_gamma(cfg.gamma)?;
        let reference = sample_at_centers_2d(cfg.bins, |a, b| m_density_at(a - b, &p));
        metrics["two_particle_vs_limit_correlation"] =
            metrics_json(&compare_2d(&res.two_particle, &reference)?);
    }
    let s = &res.summary;
    let runs: Vec<Value> = res
        .runs
        .iter()
        .map(|r| json!({"iterations": r.iterations, "stop_reason": r.stop_reason.name()}))
        .collect();
    Ok(Report {
        diagnostics: json!({
            "n_runs": s.n_runs,
            "converged": s.converged,
            "hit_max_iterations": s.hit_max_iterations,
            "mean_iterations": s.mean_iterations,
            "max_iterations_seen": s.max_iterations_seen,
            "mean_order_parameter": s.mean_order_parameter,
            "kappa": dynamics.kappa(),
            "min_iterations": dynamics.min_iterations(),
            "max_iterations": dynamics.max_iterations,
            "runs": runs,
        }),
        metrics,
    })
}

fn oracle(cfg: &ExperimentConfig, out: &mut OutputSet) -> Result<Report> {
    let p = CorrelationParams::from_gamma(cfg.gamma)?;
    let mut dens = String::from("theta,density\n");
    for j in 0..cfg.grid_points {
        let t = grid_point(j, cfg.grid_points);
        writeln!(dens, "{t},{}", m_density_at(t, &p))?;
    }
    out.write("m_density.csv", dens.as_bytes())?;

    let mut four = String::from("n,value\n");
    for n in 0..=cfg.n_max as i64 {
        writeln!(four, "{n},{}", m_fourier(n, &p))?;
    }
    out.write("m_fourier.csv", four.as_bytes())?;

    let fk = marginal_recursion(cfg.level, &p, cfg.n_max)?;
    let fkm1 = if cfg.level == 2 {
        FourierMarginal::isotropic(cfg.n_max)?
    } else {
        marginal_recursion(cfg.level - 1, &p, cfg.n_max)?
    };
    let mut buf = Vec::new();
    fk.write_csv(&mut buf)?;
    out.write(&format!("marginal_k{}.csv", cfg.level), &buf)?;

    let sb = p.sigma_bar();
    Ok(Report {
        diagnostics: json!({
            "sigma": p.sigma(),
            "sigma_bar": sb,
            "coefficients": fk.len(),
        }),
        metrics: json!({
            "m_fourier_1": m_fourier(1, &p),
            "m_fourier_1_expected": 1.0 / (1.0 + sb * sb),
            "m_at_zero": m_at_zero(&p),
            "hierarchy_residual": cl_hierarchy_residual_fourier(&fk, &fkm1, &p),
        }),
    })
}

/// Least-squares slope of `ln e` against `t`, over errors above roundoff.
fn log_slope(trace: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = trace
        .iter()
        .filter(|(_, e)| *e > 1e-13)
        .map(|&(t, e)| (t, e.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn hierarchy(cfg: &ExperimentConfig, out: &mut OutputSet) -> Result<Report> {
    let g = cfg.grid_points;
    let sigma = TAU * cfg.gamma;
    if cfg.kind == DynamicsKind::Cl {
        let dt = cfg.dt.unwrap_or(DEFAULT_CL_PDE_DT);
        let p = PdeParams::new(sigma, 0.0, dt, cfg.t_end)?;
        let target = stationary_pair_field(&CorrelationParams::new(sigma)?, g)?;
        let mut solver = ClPairSolver::new(
            &GridField::uniform(1, g)?,
            &GridField::uniform(2, g)?,
            p.sigma,
        )?;
        let steps = if cfg.t_end == 0.0 {
            0
        } else {
            (cfg.t_end / dt).ceil() as usize
        };
        let h = if steps == 0 {
            0.0
        } else {
            cfg.t_end / steps as f64
        };
        let mut trace = vec![(0.0, solver.pair_grid().max_abs_diff(&target)?)];
        for _ in 0..steps {
            solver.advance(h);
            trace.push((solver.time(), solver.pair_grid().max_abs_diff(&target)?));
        }
        let f2 = solver.pair_grid();
        let mut buf = Vec::new();
        f2.write_csv(&mut buf)?;
        out.write("f2.csv", &buf)?;
        let mut t = String::from("t,linf_error\n");
        for (time, e) in &trace {
            writeln!(t, "{time},{e}")?;
        }
        out.write("trace.csv", t.as_bytes())?;
        return Ok(Report {
            diagnostics: json!({"steps": steps, "dt": h, "grid_points": g}),
            metrics: json!({
                "final_linf_error": trace.last().map(|x| x.1),
                "log_error_slope": log_slope(&trace),
            }),
        });
    }

    let tau = TAU
        * cfg
            .gamma_prime
            .ok_or_else(|| anyhow!("gamma_prime required"))?;
    let mut f = GridField::from_fn(1, g, |x| 1.0 + 0.5 * x[0].cos())?;
    let mut p = PdeParams::new(sigma, tau, cfg.dt.unwrap_or(1.0), cfg.t_end)?;
    if sigma < tau {
        bail!("sigma = {sigma} < tau = {tau}: the closure is backwards diffusion");
    }
    let mass0 = f.mean();
    let mut energy = discrete_energy(&f);
    let (mut time, mut steps, mut mass_drift, mut energy_increases) = (0.0, 0usize, 0.0f64, 0usize);
    let mut trace = format!("t,mass,energy\n0,{mass0},{energy}\n");
    while time < cfg.t_end {
        let stable = bdg_stable_dt(&f, &p);
        let mut dt = (cfg.t_end - time).min(0.5 * stable);
        if let Some(d) = cfg.dt {
            dt = dt.min(d);
        }
        p.dt = dt;
        let step = bdg_nonlinear_diffusion_step(&f, &p)?;
        f = step.field;
        time += dt;
        steps += 1;
        let e = discrete_energy(&f);
        if e > energy * (1.0 + 1e-14) {
            energy_increases += 1;
        }
        energy = e;
        mass_drift = mass_drift.max((f.mean() - mass0).abs());
        writeln!(trace, "{time},{},{energy}", f.mean())?;
        if step.degenerate {
            break;
        }
    }
    let mut buf = Vec::new();
    f.write_csv(&mut buf)?;
    out.write("f1.csv", &buf)?;
    out.write("trace.csv", trace.as_bytes())?;
    Ok(Report {
        diagnostics: json!({"steps": steps, "time": time, "grid_points": g}),
        metrics: json!({
            "max_mass_drift": mass_drift,
            "energy_increases": energy_increases,
            "final_energy": energy,
        }),
    })
}

fn master(cfg: &ExperimentConfig, out: &mut OutputSet) -> Result<Report> {
    let n = cfg.n_particles;
    let g = cfg.master_points.unwrap_or(if n == 2 { 128 } else { 48 });
    let noise = NoiseModel::new(cfg.gamma, n)?;
    let (dynamics, bias) = match cfg.kind {
        DynamicsKind::Cl => (MasterDynamics::Cl, None),
        DynamicsKind::UnbiasedBdg => (MasterDynamics::Bdg, None),
        DynamicsKind::BiasedBdg => {
            let gp = cfg
                .gamma_prime
                .ok_or_else(|| anyhow!("gamma_prime required"))?;
            (MasterDynamics::Bdg, Some(BiasModel::new(gp, n)?))
        }
    };
    if dynamics == MasterDynamics::Bdg && n != 2 {
        bail!("BDG master equation is implemented for N = 2 only");
    }
    let kernel = MasterKernel::from_models(g, &noise, bias.as_ref())?;
    let f0 = MasterField::uniform(n, g)?;
    let dt = cfg.dt.unwrap_or(DEFAULT_MASTER_DT);
    let (f, report): (MasterField, IntegrationReport) =
        integrate_master(|x| dynamics.rhs(x, &kernel), &f0, dt, cfg.t_end)?;

    let mut buf = Vec::new();
    f.write_csv(&mut buf)?;
    out.write("field.csv", &buf)?;
    let f2 = marginalize(&f, &[0, 1])?;
    if n == 3 {
        let mut buf = Vec::new();
        f2.write_csv(&mut buf)?;
        out.write("marginal2.csv", &buf)?;
    }
    let levels: &[usize] = match (dynamics, n) {
        (MasterDynamics::Cl, 3) => &[1, 2],
        _ => &[1],
    };
    let mut bbgky = serde_json::Map::new();
    for &k in levels {
        bbgky.insert(
            format!("k{k}"),
            json!(bbgky_consistency(&f, dynamics, &kernel, k)?),
        );
    }
    let rhs = dynamics.rhs(&f, &kernel)?;
    let stationarity = rhs.values().iter().fold(0.0f64, |m, x| m.max(x.abs()));
    Ok(Report {
        diagnostics: json!({
            "grid_points": g,
            "steps": report.steps,
            "time": report.time,
            "max_mass_drift": report.max_mass_drift,
        }),
        metrics: json!({
            "bbgky_consistency": bbgky,
            "stationarity_residual": stationarity,
            "asymmetry": f.asymmetry(),
        }),
    })
}

/// Reference density on `n` bins (flattened `n × n` when `two_d`).
fn reference_density(
    cfg: &ExperimentConfig,
    reference_name: &str,
    n: usize,
    two_d: bool,
) -> Result<Vec<f64>> {
    match reference_name {
        "uniform" => Ok(vec![1.0; if two_d { n * n } else { n }]),
        "m_density" => {
            let p = CorrelationParams::from_gamma(cfg.gamma)?;
            Ok(if two_d {
                sample_at_centers_2d(n, |a, b| m_density_at(a - b, &p))
            } else {
                sample_at_centers_1d(n, |t| m_density_at(t, &p))
            })
        }
        path => {
            let text =
                std::fs::read_to_string(path).map_err(|e| anyhow!("reference `{path}`: {e}"))?;
            if text.starts_with("n_points,dims") {
                let field = GridField::read_csv(&text)?;
                let want = if two_d { 2 } else { 1 };
                if field.dims() != want {
                    bail!(
                        "reference grid has {} dims, histogram has {want}",
                        field.dims()
                    );
                }
                let field = if field.n_points() == n {
                    field
                } else if two_d {
                    swarmkin_core::master::block_average(&field, n)?
                } else {
                    bail!(
                        "reference grid has {} points, histogram {n} bins",
                        field.n_points()
                    );
                };
                return Ok(field.into_values());
            }
            match (read_histogram(std::path::Path::new(path))?, two_d) {
                (LoadedHistogram::One(h), false) if h.n_bins() == n => Ok(density_of_1d(&h)),
                (LoadedHistogram::Two(h), true) if h.n_bins() == n => Ok(density_of_2d(&h)),
                _ => bail!("reference histogram `{path}` does not match the empirical one"),
            }
        }
    }
}

fn density_of_1d(h: &Histogram1D) -> Vec<f64> {
    h.density()
        .map(<[f64]>::to_vec)
        .unwrap_or_else(|| vec![0.0; h.n_bins()])
}

fn density_of_2d(h: &Histogram2D) -> Vec<f64> {
    h.density()
        .map(<[f64]>::to_vec)
        .unwrap_or_else(|| vec![0.0; h.n_bins() * h.n_bins()])
}

fn compare(cfg: &ExperimentConfig, out: &mut OutputSet) -> Result<Report> {
    let path = cfg
        .empirical
        .as_ref()
        .ok_or_else(|| anyhow!("empirical required"))?;
    let reference_name = cfg
        .reference
        .as_deref()
        .ok_or_else(|| anyhow!("reference required"))?;
    let (metrics, n, dims) = match read_histogram(path)? {
        LoadedHistogram::One(h) => {
            let r = reference_density(cfg, reference_name, h.n_bins(), false)?;
            (compare_1d(&h, &r)?, h.n_bins(), 1)
        }
        LoadedHistogram::Two(h) => {
            let r = reference_density(cfg, reference_name, h.n_bins(), true)?;
            (compare_2d(&h, &r)?, h.n_bins(), 2)
        }
    };
    let m = metrics_json(&metrics);
    out.write(
        "metrics.json",
        (serde_json::to_string_pretty(&m)? + "\n").as_bytes(),
    )?;
    Ok(Report {
        diagnostics: json!({"bins": n, "dims": dims, "reference": reference_name}),
        metrics: m,
    })
}
