//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::f64::consts::{PI, TAU};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use swarmkin_cli::io::{read_histogram, LoadedHistogram};
use swarmkin_cli::{parse_config, run_command, RunManifest};
use swarmkin_core::hierarchy::{
    bdg_hierarchy_rhs, bdg_nonlinear_diffusion_step, bdg_stable_dt, chaotic_ansatz,
    cl_hierarchy_residual_fourier, cl_hierarchy_residuals, discrete_energy, ClPairSolver,
};
use swarmkin_core::oracle::{
    equilibrium_deficiency, m_at_zero, m_density_at, m_fourier, marginal_recursion,
};
use swarmkin_core::{
    CorrelationParams, FourierMarginal, GridField, Histogram1D, Histogram2D, PdeParams,
};

// Independent closed forms used as oracles.

fn sigma_bar(gamma: f64) -> f64 {
    TAU * gamma / 2f64.sqrt()
}

/// `(π/σ̄) cosh((π - θ)/σ̄) / sinh(π/σ̄)` for `θ` reduced to `[0, 2π)`.
fn m_closed(theta: f64, sb: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    (PI / sb) * ((PI - t) / sb).cosh() / (PI / sb).sinh()
}

fn m_hat_closed(n: f64, sb: f64) -> f64 {
    1.0 / (1.0 + sb * sb * n * n)
}

/// Wrapped Gaussian density against `dθ/(2π)` by direct image sum.
fn wrapped_gaussian(theta: f64, sigma: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    (-8..=8)
        .map(|k| {
            let x = t + TAU * k as f64;
            (-x * x / (2.0 * sigma * sigma)).exp()
        })
        .sum::<f64>()
        * TAU
        / (sigma * (TAU).sqrt())
}

fn bin_centre(b: usize, n: usize) -> f64 {
    TAU * (b as f64 + 0.5) / n as f64
}

/// Circular standard deviation of `θ₁ - θ₂` under a 2D bin density.
fn difference_circular_std(h: &Histogram2D) -> f64 {
    let n = h.n_bins();
    let total = h.total() as f64;
    let (mut c, mut s) = (0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let w = h.counts()[i * n + j] as f64 / total;
            let d = bin_centre(i, n) - bin_centre(j, n);
            c += w * d.cos();
            s += w * d.sin();
        }
    }
    (-2.0 * c.hypot(s).ln()).sqrt()
}

fn chi2_uniform(h: &Histogram1D) -> f64 {
    let e = h.total() as f64 / h.n_bins() as f64;
    h.counts().iter().map(|&c| (c as f64 - e).powi(2) / e).sum()
}

/// Upper 1% point of χ² with 63 degrees of freedom, from tables.
const CHI2_63_99: f64 = 92.010;

fn run_dir(name: &str) -> PathBuf {
    let d = Path::new(env!("CARGO_TARGET_TMPDIR"))
        .join("acceptance")
        .join(name);
    let _ = std::fs::remove_dir_all(&d);
    d
}

fn run(name: &str, body: &str) -> (RunManifest, PathBuf) {
    let dir = run_dir(name);
    let cfg = parse_config(&format!("{body}\noutput_dir = {}\n", dir.display())).expect("config");
    let m = run_command(&cfg).unwrap_or_else(|e| panic!("{name}: {e:#}"));
    (m, dir)
}

fn load_1d(p: &Path) -> Histogram1D {
    match read_histogram(p).unwrap() {
        LoadedHistogram::One(h) => h,
        LoadedHistogram::Two(_) => panic!("expected a 1D histogram"),
    }
}

fn load_2d(p: &Path) -> Histogram2D {
    match read_histogram(p).unwrap() {
        LoadedHistogram::Two(h) => h,
        LoadedHistogram::One(_) => panic!("expected a 2D histogram"),
    }
}

struct Outcome {
    id: &'static str,
    pass: Option<bool>,
    detail: String,
}

impl Outcome {
    fn gate(id: &'static str, pass: bool, detail: String) -> Self {
        Self {
            id,
            pass: Some(pass),
            detail,
        }
    }
}

struct ClEnsemble {
    one: Histogram1D,
    two: Histogram2D,
    mean_order: f64,
}

fn cl_ensemble(n: usize, runs: usize, seed: u64) -> ClEnsemble {
    // floor of 4N² iterations, about four relaxation times of the pair law
    let body = format!(
        "command = simulate\nkind = cl\nn_particles = {n}\ngamma = 0.05\nn_runs = {runs}\nbins = 64\nseed = {seed}\nlambda_min = {}",
        4 * n
    );
    let (m, dir) = run(&format!("cl_n{n}"), &body);
    ClEnsemble {
        one: load_1d(&dir.join("one_particle.csv")),
        two: load_2d(&dir.join("two_particle.csv")),
        mean_order: m.diagnostics["mean_order_parameter"].as_f64().unwrap(),
    }
}

fn criterion_1(big: &ClEnsemble) -> Outcome {
    let sb = sigma_bar(0.05);
    let n = big.two.n_bins();
    let dens = big.two.density().unwrap();
    let mut l1 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let r = m_closed(bin_centre(i, n) - bin_centre(j, n), sb);
            l1 += (dens[i * n + j] - r).abs();
        }
    }
    l1 /= (n * n) as f64;
    Outcome::gate(
        "1 CL pair law vs closed form (N=1000, M=1000, 64x64)",
        l1 < 0.15,
        format!(
            "L1 = {l1:.4} (target < 0.15); mean |alpha| at stop {:.3}",
            big.mean_order
        ),
    )
}

fn criterion_2(big: &ClEnsemble) -> Outcome {
    let chi2 = chi2_uniform(&big.one);
    Outcome::gate(
        "2 one-particle isotropy (chi2, 64 bins, 99%)",
        chi2 < CHI2_63_99,
        format!("chi2 = {chi2:.2} (critical {CHI2_63_99})"),
    )
}

fn criterion_3(big: &ClEnsemble, small: &ClEnsemble) -> Outcome {
    let a = difference_circular_std(&small.two);
    let b = difference_circular_std(&big.two);
    let rel = (a - b).abs() / b;
    Outcome::gate(
        "3 correlation spread independent of N (100 vs 1000)",
        rel <= 0.2,
        format!(
            "circular std {a:.4} (N=100) vs {b:.4} (N=1000), relative gap {rel:.3} (target <= 0.2)"
        ),
    )
}

fn criterion_4() -> Outcome {
    let gammas = [0.5, 0.05, 0.005];
    let mut vals = Vec::new();
    let mut agree = true;
    for &g in &gammas {
        let d = equilibrium_deficiency(&CorrelationParams::from_gamma(g).unwrap(), 64);
        // on the grid the largest deviation from 1 is on the diagonal
        let oracle = m_closed(0.0, sigma_bar(g)) - 1.0;
        agree &= (d.linf - oracle).abs() <= 1e-9 * oracle.max(1.0);
        vals.push(d.linf);
    }
    let monotone = vals.windows(2).all(|w| w[1] > w[0]);
    Outcome::gate(
        "4 chaos deficiency grows as gamma decreases",
        monotone && agree,
        format!(
            "linf = {:.4} / {:.4} / {:.4} at gamma = 1/2, 1/20, 1/200 (oracle agreement {agree})",
            vals[0], vals[1], vals[2]
        ),
    )
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let h = (b - a) / intervals as f64;
    let mut s = f(a) + f(b);
    for i in 1..intervals {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + h * i as f64);
    }
    s * h / 3.0
}

fn criterion_5() -> Outcome {
    let t0 = Instant::now();
    let p = CorrelationParams::from_gamma(0.05).unwrap();
    let sb = p.sigma_bar();
    let mut worst = 0.0f64;
    for n in -8i64..=8 {
        // M is smooth on (0, 2π) with a kink at the endpoints
        let num = simpson(
            |t| {
                let v = if t >= TAU {
                    m_density_at(0.0, &p)
                } else {
                    m_density_at(t, &p)
                };
                v * (n as f64 * t).cos()
            },
            0.0,
            TAU,
            8192,
        ) / TAU;
        worst = worst
            .max((num - m_fourier(n, &p)).abs())
            .max((num - m_hat_closed(n as f64, sb)).abs());
    }
    let n_max = 10_000u32;
    let partial = 1.0 + 2.0 * (1..=n_max as i64).map(|n| m_fourier(n, &p)).sum::<f64>();
    let closed = (PI / sb) / (PI / sb).tanh();
    let tail = p.fourier_tail_bound(n_max);
    let gap = (partial - closed).abs();
    let at_zero = (m_at_zero(&p) - closed).abs() / closed;
    Outcome::gate(
        "5 Fourier identity of the pair law",
        worst < 1e-8 && gap <= tail && at_zero < 1e-14,
        format!(
            "max |numeric - M^(n)| = {worst:.2e} (|n| <= 8, target 1e-8); partial sum gap {gap:.3e} <= tail bound {tail:.3e}; {:.2}s",
            t0.elapsed().as_secs_f64()
        ),
    )
}

fn permutations(v: &[i32]) -> Vec<Vec<i32>> {
    if v.len() <= 1 {
        return vec![v.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..v.len() {
        let mut rest = v.to_vec();
        let x = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, x);
            out.push(p);
        }
    }
    out
}

fn criterion_6() -> Outcome {
    let t0 = Instant::now();
    let p = CorrelationParams::from_gamma(0.05).unwrap();
    let sb = p.sigma_bar();
    let f1 = FourierMarginal::isotropic(64).unwrap();
    let f2 = marginal_recursion(2, &p, 64).unwrap();
    let mut k2_gap = 0.0f64;
    for n in -64..=64 {
        let v = f2.get(&[n, -n]);
        k2_gap = k2_gap
            .max((v - m_fourier(n as i64, &p)).abs())
            .max((v - m_hat_closed(n as f64, sb)).abs());
    }
    let r2 = cl_hierarchy_residual_fourier(&f2, &f1, &p);
    let f2s = marginal_recursion(2, &p, 16).unwrap();
    let f3 = marginal_recursion(3, &p, 16).unwrap();
    let r3 = cl_hierarchy_residual_fourier(&f3, &f2s, &p);

    let support = f2
        .iter()
        .chain(f3.iter())
        .all(|(n, _)| n.iter().sum::<i32>() == 0);
    let mut perm_exact = true;
    let mut marg_gap = 0.0f64;
    for (n, v) in f3.iter() {
        perm_exact &= permutations(n)
            .iter()
            .all(|q| f3.get(q).to_bits() == v.to_bits());
        if n[2] == 0 {
            marg_gap = marg_gap.max((v - f2s.get(&n[..2])).abs());
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    // the marginalization identity is exact in real arithmetic; in floating
    // point the two routes differ by at most an ulp
    let pass = k2_gap <= 1e-15
        && r2 < 1e-12
        && r3 < 1e-12
        && support
        && perm_exact
        && marg_gap <= 1e-15
        && secs < 10.0;
    Outcome::gate(
        "6 Fourier recursion consistency",
        pass,
        format!(
            "k=2 vs M^ {k2_gap:.1e}; residual k=2 {r2:.1e}, k=3 {r3:.1e}; support {support}; permutation bit-exact {perm_exact}; marginalization gap {marg_gap:.1e}; {secs:.2}s"
        ),
    )
}

fn criterion_7() -> Outcome {
    let p = CorrelationParams::from_gamma(0.05).unwrap();
    let f1 = FourierMarginal::isotropic(16).unwrap();
    let ansatz = chaotic_ansatz(2, 16);
    let min_chaotic = cl_hierarchy_residuals(&ansatz, &f1, &p)
        .into_iter()
        .filter(|(n, _)| n[0] != 0)
        .map(|(_, r)| r.abs())
        .fold(f64::INFINITY, f64::min);
    let f2 = marginal_recursion(2, &p, 16).unwrap();
    let exact = cl_hierarchy_residual_fourier(&f2, &f1, &p);
    Outcome::gate(
        "7 chaotic ansatz violates the limit hierarchy",
        min_chaotic >= 2.0 && exact < 1e-12,
        format!("min chaotic residual off zero {min_chaotic} (>= 2); recursion residual {exact:.1e} (< 1e-12)"),
    )
}

fn criterion_8() -> Outcome {
    let t0 = Instant::now();
    let g = 256;
    let sb = sigma_bar(0.05);
    // truncated target on the grid: 1 + 2 Σ_{1≤m<g/2} M^(m) cos(m d)
    let diff: Vec<f64> = (0..g)
        .map(|d| {
            let x = TAU * d as f64 / g as f64;
            1.0 + 2.0
                * (1..g / 2)
                    .map(|m| m_hat_closed(m as f64, sb) * (m as f64 * x).cos())
                    .sum::<f64>()
        })
        .collect();
    let target = GridField::from_fn(2, g, |t| {
        let d = ((t[0] - t[1]) / TAU * g as f64).round() as i64;
        diff[d.rem_euclid(g as i64) as usize]
    })
    .unwrap();
    let mut solver = ClPairSolver::new(
        &GridField::uniform(1, g).unwrap(),
        &GridField::uniform(2, g).unwrap(),
        TAU * 0.05,
    )
    .unwrap();
    let mut trace = vec![(0.0, solver.pair_grid().max_abs_diff(&target).unwrap())];
    for _ in 0..28 {
        solver.advance(0.5);
        trace.push((
            solver.time(),
            solver.pair_grid().max_abs_diff(&target).unwrap(),
        ));
    }
    let pts: Vec<(f64, f64)> = trace
        .iter()
        .filter(|p| p.1 > 1e-12)
        .map(|&(t, e)| (t, e.ln()))
        .collect();
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let slope = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum::<f64>()
        / pts.iter().map(|p| (p.0 - mt).powi(2)).sum::<f64>();
    let last = trace.last().unwrap();
    Outcome::gate(
        "8 pair PDE converges to the closed form",
        slope <= -2.0 && last.1 < 1e-8,
        format!(
            "log-error slope {slope:.4} (<= -2); Linf at t={} is {:.2e} (< 1e-8); {:.2}s",
            last.0,
            last.1,
            t0.elapsed().as_secs_f64()
        ),
    )
}

fn criterion_9() -> Outcome {
    let t0 = Instant::now();
    // At N = 2 the order parameter is cos²(Δ/2) and swings by O(1) every
    // step, so the data-dependent stop favours aligned pairs. The gated
    // ensemble samples at a fixed iteration count instead (floor = cap = 20).
    let base = "command = simulate\nkind = cl\nn_particles = 2\ngamma = 0.05\nn_runs = 10000\nbins = 16\nseed = 9";
    let (_, sim) = run(
        "n2_sim",
        &format!("{base}\nlambda_min = 10\nmax_iterations = 20"),
    );
    let (_, sim_stop) = run("n2_sim_stop_rule", base);
    let (m2, master) = run(
        "n2_master",
        "command = master\nkind = cl\nn_particles = 2\ngamma = 0.05\nmaster_points = 128\nt_end = 12",
    );
    let (cmp, _) = run(
        "n2_compare",
        &format!(
            "command = compare\nempirical = {}\nreference = {}",
            sim.join("two_particle.csv").display(),
            master.join("field.csv").display()
        ),
    );
    let l1 = cmp.metrics["l1"].as_f64().unwrap();
    let (cmp_stop, _) = run(
        "n2_compare_stop_rule",
        &format!(
            "command = compare\nempirical = {}\nreference = {}",
            sim_stop.join("two_particle.csv").display(),
            master.join("field.csv").display()
        ),
    );
    let l1_stop = cmp_stop.metrics["l1"].as_f64().unwrap();

    // the N = 2 stationary law is g(θ₁ - θ₂); check the master field against it
    let sigma_n = TAU * 0.05 / 2f64.sqrt();
    let field =
        GridField::read_csv(&std::fs::read_to_string(master.join("field.csv")).unwrap()).unwrap();
    let exact = GridField::from_fn(2, 128, |t| wrapped_gaussian(t[0] - t[1], sigma_n)).unwrap();
    let vs_exact =
        field.max_abs_diff(&exact).unwrap() / exact.values().iter().copied().fold(0.0, f64::max);

    let (m3, _) = run(
        "n3_master",
        "command = master\nkind = cl\nn_particles = 3\ngamma = 0.05\nmaster_points = 48\nt_end = 1",
    );
    let (mb, _) = run(
        "bdg_master",
        "command = master\nkind = bdg\nn_particles = 2\ngamma = 0.05\nmaster_points = 64\nt_end = 1",
    );
    let (mbb, _) = run(
        "bbdg_master",
        "command = master\nkind = biased_bdg\nn_particles = 2\ngamma = 0.05\ngamma_prime = 0.5\nmaster_points = 64\nt_end = 1",
    );
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for (label, m) in [
        ("CL N=2", &m2),
        ("CL N=3", &m3),
        ("BDG N=2", &mb),
        ("biased BDG N=2", &mbb),
    ] {
        for (k, v) in m.metrics["bbgky_consistency"].as_object().unwrap() {
            let v = v.as_f64().unwrap();
            worst = worst.max(v);
            parts.push(format!("{label} {k} {v:.1e}"));
        }
    }
    Outcome::gate(
        "9 Monte Carlo vs master equation at N=2 (16x16 bins, M=10^4)",
        l1 < 0.1 && worst < 1e-6,
        format!(
            "L1 = {l1:.4} at a fixed 20 iterations (target < 0.1), {l1_stop:.4} under the stopping rule; master vs g(theta1-theta2) rel {vs_exact:.1e}; hierarchy consistency {}; {:.1}s",
            parts.join(", "),
            t0.elapsed().as_secs_f64()
        ),
    )
}

fn criterion_10() -> Outcome {
    let p = PdeParams::new(TAU * 0.1, TAU * 0.05, 1.0, 1.0).unwrap();
    let mut pu = p;
    pu.dt = 0.9 * bdg_stable_dt(&GridField::uniform(1, 128).unwrap(), &p);
    let u1 = GridField::uniform(1, 128).unwrap();
    let step_fixed = bdg_nonlinear_diffusion_step(&u1, &pu)
        .unwrap()
        .field
        .values()
        .iter()
        .all(|&v| v == 1.0);
    let rhs_fixed = [(2usize, 1usize), (3, 2)].iter().all(|&(d, k)| {
        let f = GridField::uniform(d, 32).unwrap();
        bdg_hierarchy_rhs(&f, &p, k)
            .unwrap()
            .values()
            .iter()
            .all(|&v| v == 0.0)
    });

    let mut f = GridField::from_fn(1, 128, |t| {
        1.0 + 0.5 * t[0].cos() + 0.2 * (3.0 * t[0]).sin()
    })
    .unwrap();
    let mut q = p;
    let (mut mass_drift, mut increases) = (0.0f64, 0usize);
    let mut energy = discrete_energy(&f);
    let e0 = energy;
    for _ in 0..10_000 {
        q.dt = 0.5 * bdg_stable_dt(&f, &p);
        let next = bdg_nonlinear_diffusion_step(&f, &q).unwrap().field;
        mass_drift = mass_drift.max((next.mean() - f.mean()).abs());
        let e = discrete_energy(&next);
        if e > energy {
            increases += 1;
        }
        energy = e;
        f = next;
    }
    Outcome::gate(
        "10 BDG closure: fixed point, mass, energy",
        step_fixed && rhs_fixed && mass_drift <= 1e-12 && increases == 0,
        format!(
            "uniform fixed by step {step_fixed}, by hierarchy rhs {rhs_fixed}; max mass change per step {mass_drift:.1e}; energy {e0:.4} -> {energy:.4} with {increases} increases over 10^4 steps"
        ),
    )
}

fn criterion_11() -> Outcome {
    let t0 = Instant::now();
    let (m, dir) = run(
        "bbdg_n100",
        "command = simulate\nkind = biased_bdg\nn_particles = 100\ngamma = 0.05\ngamma_prime = 0.5\nn_runs = 1000\nbins = 32\nseed = 11\nlambda_min = 400",
    );
    let h = load_2d(&dir.join("two_particle.csv"));
    let n = h.n_bins();
    let d = h.density().unwrap();
    let (mut sums, mut counts) = ([0.0; 3], [0usize; 3]);
    for i in 0..n {
        for j in 0..n {
            let off = (i as i64 - j as i64).rem_euclid(n as i64) as usize;
            let dist = off.min(n - off) as f64 * TAU / n as f64;
            let zone = if dist < 0.4 {
                0
            } else if dist < 1.2 {
                1
            } else {
                2
            };
            sums[zone] += d[i * n + j];
            counts[zone] += 1;
        }
    }
    let mean: Vec<f64> = (0..3).map(|z| sums[z] / counts[z] as f64).collect();
    Outcome {
        id: "11 biased BDG N=100, gamma'/gamma=10 (qualitative)",
        pass: None,
        detail: format!(
            "mean density: diagonal band {:.3}, flanks {:.3}, far field {:.3}; converged runs {}/1000; {:.1}s",
            mean[0],
            mean[1],
            mean[2],
            m.diagnostics["converged"],
            t0.elapsed().as_secs_f64()
        ),
    }
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let t0 = Instant::now();
    let mut outcomes = vec![
        criterion_4(),
        criterion_5(),
        criterion_6(),
        criterion_7(),
        criterion_8(),
        criterion_10(),
    ];
    outcomes.push(criterion_9());
    let small = cl_ensemble(100, 1000, 3);
    let big = cl_ensemble(1000, 1000, 1);
    outcomes.push(criterion_1(&big));
    outcomes.push(criterion_2(&big));
    outcomes.push(criterion_3(&big, &small));
    outcomes.push(criterion_11());
    outcomes.sort_by_key(|o| o.id.split(' ').next().unwrap().parse::<u32>().unwrap());

    let mut failed = 0;
    for o in &outcomes {
        let tag = match o.pass {
            Some(true) => "PASS",
            Some(false) => {
                failed += 1;
                "FAIL"
            }
            None => "INFO",
        };
        println!("{tag} criterion {}: {}", o.id, o.detail);
    }
    println!(
        "acceptance: {} gated, {failed} failed, {:.0}s",
        outcomes.iter().filter(|o| o.pass.is_some()).count(),
        t0.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
