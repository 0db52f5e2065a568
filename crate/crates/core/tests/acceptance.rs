//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! `cargo test --test acceptance` runs the fast criteria; the long
//! end-to-end training runs need `-- --full` (or `MSPINN_ACCEPTANCE=full`).

use std::f64::consts::{PI, TAU};
use std::process::ExitCode;
use std::time::Instant;

use mspinn::autodiff::eval_outputs_with_derivatives;
use mspinn::io::write_run_artifacts;
use mspinn::multistage::{
    pinn_loss, run, run_from_base, train_base, CollocationConfig, LossWeights, Method, PointSet,
    RunConfig, RunReport,
};
use mspinn::network::{xavier_init, InitConfig, NetworkParams};
use mspinn::optim::OptimConfig;
use mspinn::problems::{BurgersProblem, HelmholtzProblem, MieBranch, MieSeries, ProblemConfig};
use mspinn::spectral::{
    dft2, extract_top_modes, grid_nodes, normalize_psd, sample_frequencies, sample_on_grid,
    GridField, PowerSpectrum,
};
use mspinn::specfun::{bessel_deriv, bessel_j, bessel_y, wronskian, BesselKind};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Plain tanh MLP forward pass straight from the layer tables.
fn forward(net: &NetworkParams, x: &[f64]) -> f64 {
    let layers = net.layers();
    let mut h = x.to_vec();
    for (l, layer) in layers.iter().enumerate() {
        let mut next: Vec<f64> = (0..layer.outputs)
            .map(|r| layer.biases[r] + (0..layer.inputs).map(|c| layer.weights[r * layer.inputs + c] * h[c]).sum::<f64>())
            .collect();
        if l + 1 < layers.len() {
            next.iter_mut().for_each(|v| *v = v.tanh());
        }
        h = next;
    }
    h[0]
}

fn autodiff() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let problem = BurgersProblem::new(0.3).map_err(|e| e.to_string())?;
    let weights = LossWeights { interior: 1.0, boundary: 2.0, initial: 0.5 };
    let (mut worst_jet, mut worst_grad) = (0.0f64, 0.0f64);
    let h = 1e-4;
    for n in 0..100 {
        let net = xavier_init(&[2, 20, 20, 20, 1], n).map_err(|e| e.to_string())?;
        let perturbed: Vec<f64> = net.params().iter().map(|p| p + rng.gen_range(-0.2..0.2)).collect();
        let mut net = net;
        net.set_params(&perturbed).map_err(|e| e.to_string())?;
        for _ in 0..50 {
            let x = [rng.gen_range(-1.0..1.0), rng.gen_range(0.0..1.0)];
            let b = &eval_outputs_with_derivatives(&net, &x).map_err(|e| e.to_string())?[0];
            let f0 = forward(&net, &x);
            worst_jet = worst_jet.max(rel(b.value, f0));
            for k in 0..2 {
                let (mut xp, mut xm) = (x, x);
                xp[k] += h;
                xm[k] -= h;
                let (fp, fm) = (forward(&net, &xp), forward(&net, &xm));
                worst_jet = worst_jet.max(rel(b.gradient[k], (fp - fm) / (2.0 * h)));
                worst_jet = worst_jet.max(rel(b.hessian_diag[k], (fp - 2.0 * f0 + fm) / (h * h)));
            }
        }
        let points = PointSet::sample(
            &problem,
            &CollocationConfig { interior: 30, boundary: 10, initial: 10, grid_interior: false },
            n,
        );
        let (_, grad) = pinn_loss(&net, &problem, &points, &weights).map_err(|e| e.to_string())?;
        let scale = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        let base = net.params();
        let mut probe = net.clone();
        for _ in 0..20 {
            let i = rng.gen_range(0..base.len());
            let step = 1e-6 * base[i].abs().max(1.0);
            let mut loss_at = |delta: f64| {
                let mut p = base.clone();
                p[i] += delta;
                probe.set_params(&p).unwrap();
                pinn_loss(&probe, &problem, &points, &weights).unwrap().0
            };
            let fd = (loss_at(step) - loss_at(-step)) / (2.0 * step);
            let err = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1e-3 * scale);
            worst_grad = worst_grad.max(err);
        }
    }
    check(
        worst_jet <= 1e-5 && worst_grad <= 1e-4,
        format!("max jet error {worst_jet:.2e} (≤ 1e-5), max parameter-gradient error {worst_grad:.2e} (≤ 1e-4)"),
    )
}

fn spectral() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let domain = [[-1.0, 1.0], [0.0, 1.0]];
    let n = 32;
    let mut worst_dft = 0.0f64;
    for _ in 0..20 {
        let values: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let g = GridField::new(n, n, domain, values).map_err(|e| e.to_string())?;
        let fast = dft2(&g);
        for p in 0..n {
            for q in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for i in 0..n {
                    for j in 0..n {
                        let phase = -TAU * ((p * i + q * j) as f64) / n as f64;
                        acc += g.get(i, j) * Complex64::from_polar(1.0, phase);
                    }
                }
                worst_dft = worst_dft.max((fast.coeff(p, q) - acc / (n * n) as f64).norm());
            }
        }
    }
    let (mut freq_ok, mut worst_mode) = (true, 0.0f64);
    for _ in 0..20 {
        let k1 = [rng.gen_range(-10i64..=10), rng.gen_range(1i64..=10)];
        let k2 = loop {
            let k = [rng.gen_range(1i64..=10), 0];
            if k != k1 {
                break k;
            }
        };
        let (a1, a2) = (rng.gen_range(2.0..5.0), rng.gen_range(0.1..1.5));
        let (t1, t2) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        let w = |k: [i64; 2]| [TAU * k[0] as f64 / 2.0, TAU * k[1] as f64];
        let (w1, w2) = (w(k1), w(k2));
        let f = |x: f64, y: f64| a1 * (w1[0] * x + w1[1] * y + t1).cos() + a2 * (w2[0] * x + w2[1] * y + t2).cos();
        let g = sample_on_grid(f, domain, (n, n)).map_err(|e| e.to_string())?;
        let m = extract_top_modes(&dft2(&g), 2).map_err(|e| e.to_string())?;
        freq_ok &= m.modes[0].index == k1 && m.modes[1].index == k2;
        freq_ok &= m.modes[0].frequency == w1 && m.modes[1].frequency == w2;
        let phase_err = |a: f64, b: f64| (a - b + PI).rem_euclid(TAU) - PI;
        worst_mode = worst_mode
            .max((m.scale - a1).abs())
            .max((m.modes[1].alpha * m.scale - a2).abs())
            .max(phase_err(m.modes[0].phase, t1).abs())
            .max(phase_err(m.modes[1].phase, t2).abs());
    }
    check(
        worst_dft <= 1e-10 && freq_ok && worst_mode <= 1e-8,
        format!("max DFT deviation {worst_dft:.2e} (≤ 1e-10), frequencies exact: {freq_ok}, max amplitude/phase error {worst_mode:.2e} (≤ 1e-8)"),
    )
}

fn psd_sampling() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let power = (0..64).map(|_| rng.gen::<f64>().powi(3)).collect();
    let p = PowerSpectrum::new(8, 8, [[-1.0, 1.0], [0.0, 1.0]], power).map_err(|e| e.to_string())?;
    let dist = normalize_psd(&p).map_err(|e| e.to_string())?;
    let draws = sample_frequencies(&dist, 100_000, 4).map_err(|e| e.to_string())?;
    let mut counts = vec![0usize; dist.support.len()];
    for d in &draws {
        counts[dist.support.iter().position(|s| s == d).ok_or("draw outside the support")?] += 1;
    }
    let tv = 0.5 * counts.iter().zip(&dist.probs).map(|(&c, &q)| (c as f64 / 1e5 - q).abs()).sum::<f64>();
    check(tv <= 0.02, format!("total variation {tv:.4} (≤ 0.02)"))
}

fn special_functions() -> Outcome {
    let e = |e: mspinn::Error| e.to_string();
    let (mut worst_w, mut worst_r) = (0.0f64, 0.0f64);
    for n in 0..=20 {
        for i in 0..=59 {
            let x = 0.5 + i as f64 * 0.5;
            let w = bessel_j(n, x).map_err(e)? * bessel_deriv(BesselKind::Y, n, x).map_err(e)?
                - bessel_deriv(BesselKind::J, n, x).map_err(e)? * bessel_y(n, x).map_err(e)?;
            worst_w = worst_w.max((w - wronskian(x)).abs() / wronskian(x));
            if n == 0 {
                continue;
            }
            for f in [bessel_j as fn(i32, f64) -> mspinn::Result<f64>, bessel_y] {
                let (lo, mid, hi) = (f(n - 1, x).map_err(e)?, f(n, x).map_err(e)?, f(n + 1, x).map_err(e)?);
                let lhs = lo + hi;
                let rhs = 2.0 * n as f64 / x * mid;
                worst_r = worst_r.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(lo.abs()));
            }
        }
    }
    let mie = MieSeries::new(TAU, 1.5, 0.25, 15).map_err(e)?;
    let mut worst_interface = 0.0f64;
    for i in 0..72 {
        let theta = i as f64 * TAU / 72.0 - PI;
        let inner = mie.eval(0.25, theta, MieBranch::Interior).map_err(e)?;
        let outer = mie.eval(0.25, theta, MieBranch::Exterior).map_err(e)?;
        let (s, c) = theta.sin_cos();
        let dn = |f: &mspinn::problems::MieField| c * f.gradient[0] + s * f.gradient[1];
        worst_interface = worst_interface.max((inner.value - outer.value).norm()).max((dn(&inner) - dn(&outer)).norm());
    }
    let h = HelmholtzProblem::new(1.0).map_err(e)?;
    let matched = h.mie().map_err(e)?;
    let (mut err, mut norm) = (0.0, 0.0);
    for p in grid_nodes([[-1.0, 1.0], [-1.0, 1.0]], 64, 64).chunks(2) {
        let plane = Complex64::from_polar(1.0, TAU * p[0]);
        err += (matched.field(p[0], p[1]).map_err(e)?.value - plane).norm_sqr();
        norm += plane.norm_sqr();
    }
    let plane_err = (err / norm).sqrt();
    check(
        worst_w <= 1e-10 && worst_r <= 1e-10 && worst_interface <= 1e-6 && plane_err <= 1e-8,
        format!(
            "Wronskian {worst_w:.1e}, recurrence {worst_r:.1e} (≤ 1e-10), interface jump {worst_interface:.1e} (≤ 1e-6), plane-wave L2 {plane_err:.1e} (≤ 1e-8)"
        ),
    )
}

/// Residual RMS sequence strictly decreasing, and the report agreeing.
fn monotone(r: &RunReport) -> bool {
    let strict = r.residual_rms.windows(2).all(|w| w[1] < w[0]);
    strict && r.monotone_epsilon && r.passed
}

fn small_config(method: Method, problem: ProblemConfig) -> RunConfig {
    RunConfig {
        method,
        stages: 2,
        seed: 11,
        problem,
        init: InitConfig { depth: 2, width: 12, features: 8, ..InitConfig::default() },
        optim: OptimConfig { adam_steps: 400, lbfgs_max_iters: 300, ..OptimConfig::default() },
        collocation: CollocationConfig { interior: 300, boundary: 40, initial: 40, grid_interior: false },
        spectrum_grid: [16, 16],
        eval_grid: [21, 21],
        ..RunConfig::default()
    }
}

fn determinism(reports: &mut Vec<(String, RunReport)>) -> Outcome {
    let dirs = [tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?];
    let mut compared = 0;
    for method in [Method::SiMspinn, Method::RffMspinn] {
        let cfg = small_config(method, ProblemConfig::default());
        let mut names = Vec::new();
        for d in &dirs {
            let sub = d.path().join(method.as_str());
            std::fs::create_dir(&sub).map_err(|e| e.to_string())?;
            let out = run(&cfg).map_err(|e| e.to_string())?;
            let report = write_run_artifacts(&sub, &out).map_err(|e| e.to_string())?;
            names = std::fs::read_dir(&sub).map_err(|e| e.to_string())?.map(|e| e.unwrap().file_name()).collect();
            reports.push((format!("{} (small)", method.as_str()), report));
        }
        for name in names {
            let a = std::fs::read(dirs[0].path().join(method.as_str()).join(&name)).map_err(|e| e.to_string())?;
            let b = std::fs::read(dirs[1].path().join(method.as_str()).join(&name)).map_err(|e| e.to_string())?;
            if a != b {
                return Err(format!("{}/{} differs between identical runs", method.as_str(), name.to_string_lossy()));
            }
            compared += 1;
        }
    }
    Ok(format!("{compared} artifacts (checkpoints, networks, reports, CSVs) bit-identical across reruns"))
}

fn burgers(reports: &mut Vec<(String, RunReport)>) -> Outcome {
    let cfg = RunConfig { stages: 2, ..RunConfig::default() };
    let base = train_base(&cfg).map_err(|e| e.to_string())?;
    let mut rms = Vec::new();
    let mut best_l2 = f64::INFINITY;
    for method in [Method::Pinn, Method::Msnn, Method::SiMspinn, Method::RffMspinn] {
        let out = run_from_base(&RunConfig { method, ..cfg.clone() }, &base).map_err(|e| e.to_string())?;
        let r = out.report;
        rms.push(r.final_residual_rms);
        best_l2 = best_l2.min(r.l2_errors["u"]);
        reports.push((format!("burgers {}", method.as_str()), r));
    }
    let (pinn, msnn, si, rff) = (rms[0], rms[1], rms[2], rms[3]);
    let ordered = pinn > msnn && msnn > si && rff <= 1.5 * si;
    check(
        pinn / rff >= 100.0 && pinn / si >= 50.0 && ordered && best_l2 <= 1e-3,
        format!(
            "residual RMS PINN {pinn:.2e}, MSNN {msnn:.2e}, SI {si:.2e} ({:.0}×, ≥ 50×), RFF {rff:.2e} ({:.0}×, ≥ 100×), ordering {ordered}, best L2 {best_l2:.2e} (≤ 1e-3)",
            pinn / si,
            pinn / rff
        ),
    )
}

fn helmholtz(reports: &mut Vec<(String, RunReport)>) -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    for eps_r in [1.0, 1.5] {
        let problem = ProblemConfig::Helmholtz(HelmholtzProblem::new(eps_r).map_err(|e| e.to_string())?);
        let cfg = RunConfig { stages: 2, problem, ..RunConfig::default() };
        let base = train_base(&cfg).map_err(|e| e.to_string())?;
        let mut l2 = Vec::new();
        for method in [Method::Pinn, Method::Msnn, Method::SiMspinn, Method::RffMspinn] {
            let out = run_from_base(&RunConfig { method, ..cfg.clone() }, &base).map_err(|e| e.to_string())?;
            l2.push(out.report.l2_errors["e_rz"]);
            reports.push((format!("helmholtz eps_r={eps_r} {}", method.as_str()), out.report));
        }
        let best = l2[1..].iter().copied().fold(f64::INFINITY, f64::min);
        let ordered = l2[1..].iter().all(|&e| e < l2[0]) && l2[3] <= 1.5 * best;
        ok &= ordered;
        if eps_r == 1.0 {
            ok &= l2[0] <= 0.05 && best <= 1e-3;
        }
        details.push(format!(
            "eps_r={eps_r}: L2(E_rz) PINN {:.2e}, MSNN {:.2e}, SI {:.2e}, RFF {:.2e}, ordering {ordered}",
            l2[0], l2[1], l2[2], l2[3]
        ));
    }
    check(ok, details.join("; "))
}

fn report(n: usize, name: &str, started: Instant, outcome: &Outcome) -> bool {
    let secs = started.elapsed().as_secs_f64();
    match outcome {
        Ok(d) => println!("criterion {n} ({name}): PASS — {d} [{secs:.1}s]"),
        Err(d) => println!("criterion {n} ({name}): FAIL — {d} [{secs:.1}s]"),
    }
    outcome.is_ok()
}

fn main() -> ExitCode {
    let full = std::env::args().any(|a| a == "--full")
        || std::env::var("MSPINN_ACCEPTANCE").is_ok_and(|v| v == "full");
    let mut ok = true;
    let mut runs = Vec::new();
    let fast: [(&str, fn() -> Outcome); 4] = [
        ("autodiff", autodiff),
        ("spectral oracles", spectral),
        ("PSD sampling", psd_sampling),
        ("special functions", special_functions),
    ];
    for (i, (name, f)) in fast.into_iter().enumerate() {
        let t = Instant::now();
        ok &= report(i + 1, name, t, &f());
    }
    let long: [(usize, &str, fn(&mut Vec<(String, RunReport)>) -> Outcome); 2] =
        [(5, "Burgers end-to-end", burgers), (6, "Helmholtz end-to-end", helmholtz)];
    for (n, name, f) in long {
        if full {
            let t = Instant::now();
            ok &= report(n, name, t, &f(&mut runs));
        } else {
            println!("criterion {n} ({name}): SKIP — run with `-- --full`");
        }
    }
    let t = Instant::now();
    ok &= report(7, "determinism", t, &determinism(&mut runs));
    let t = Instant::now();
    let bad: Vec<&str> = runs.iter().filter(|(_, r)| !monotone(r)).map(|(n, _)| n.as_str()).collect();
    let outcome = check(
        bad.is_empty(),
        if bad.is_empty() {
            format!("residual RMS strictly decreasing in all {} runs", runs.len())
        } else {
            format!("not strictly decreasing: {}", bad.join(", "))
        },
    );
    ok &= report(8, "monotone stages", t, &outcome);
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
